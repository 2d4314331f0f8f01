use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use nerfdeform::field::RadianceFieldGrid;
use nerfdeform::pipeline::{EditSession, EXIT_OK};
use nerfdeform_cli::commands::{self, BuildProxyArgs, DeformArgs, EvalArgs, ExtractArgs, GenSceneArgs, RenderArgs};
use nerfdeform_cli::service::{self, AppState};
use nerfdeform_cli::{configure_threads, CliError};

/// Edit the geometry of a grid radiance field through a tetrahedral proxy.
#[derive(Parser)]
#[command(name = "nerfdeform", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an analytic scene description into a field file.
    GenScene(GenSceneArgs),
    /// Extract a surface mesh from a field.
    Extract(ExtractArgs),
    /// Build the cage, tet proxy and surface embedding.
    BuildProxy(BuildProxyArgs),
    /// Solve for handle targets; writes the deformed mesh, proxy and report.
    Deform(DeformArgs),
    /// Render a field, optionally bent by a deformed proxy or mesh pair.
    Render(RenderArgs),
    /// Compare two images; prints PSNR and SSIM.
    Eval(EvalArgs),
    /// Run the HTTP editing service.
    Serve(ServeArgs),
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Directory for rendered job images.
    #[arg(long, default_value = "jobs")]
    out_dir: PathBuf,
    /// Preload a session with id "default" from a field, mesh and proxy.
    #[arg(long, num_args = 3, value_names = ["FIELD", "MESH", "PROXY"])]
    session: Option<Vec<PathBuf>>,
}

fn serve(args: ServeArgs, threads: Option<usize>) -> Result<(), CliError> {
    let state = AppState::new(args.out_dir);
    if let Some(paths) = args.session {
        let field = RadianceFieldGrid::load(&paths[0])?;
        let session = EditSession::load(&paths[1], &paths[2]).map_err(CliError::from)?;
        state.add_session("default", field, session);
    }
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        rt.worker_threads(n);
    }
    let rt = rt.enable_all().build()?;
    rt.block_on(service::serve(SocketAddr::new(args.host, args.port), state))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = configure_threads()?;
    let out = match cli.command {
        Command::GenScene(a) => commands::gen_scene(&a)?,
        Command::Extract(a) => commands::extract(&a)?,
        Command::BuildProxy(a) => commands::build_proxy_cmd(&a)?,
        Command::Deform(a) => commands::deform(&a)?,
        Command::Render(a) => commands::render(&a)?,
        Command::Eval(a) => commands::eval(&a)?,
        Command::Serve(a) => return serve(a, threads),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = match run(Cli::parse()) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
