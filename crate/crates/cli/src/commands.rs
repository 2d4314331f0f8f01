use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nalgebra::Point3;
use serde::Serialize;
use serde_json::{json, Value};

use nerfdeform::arap::HandleSet;
use nerfdeform::bend::{WarpField, WarpStrategy};
use nerfdeform::field::{generate_field, Aabb, RadianceFieldGrid, SceneSpec, DEFAULT_DENSITY_SCALE};
use nerfdeform::geom::{default_iso, load_obj, marching_cubes_clamped, save_obj, IsoChannel, EDIT_EDGE_CLAMP};
use nerfdeform::pipeline::{build_proxy, load_cameras, resample_field, DeformMode, EditSession};
use nerfdeform::render::{psnr, render_image, ssim, Camera, Image, SampleSpec, DEFAULT_SAMPLES};
use nerfdeform::tetproxy::{load_proxy, save_proxy};

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct GenSceneArgs {
    /// Scene description (JSON).
    pub spec: PathBuf,
    /// Output field file.
    pub out: PathBuf,
    /// Lattice size: one value for a cube or three comma-separated values.
    #[arg(long, default_value = "128", value_parser = parse_dims)]
    pub dims: [usize; 3],
    /// Field bounds: a half-extent around the origin or `minx,miny,minz,maxx,maxy,maxz`.
    #[arg(long, default_value = "1.5", value_parser = parse_bounds)]
    pub bounds: Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Sdf,
    Density,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    pub field: PathBuf,
    pub out: PathBuf,
    /// Iso channel; defaults to sdf when the field carries one.
    #[arg(long, value_enum)]
    pub channel: Option<ChannelArg>,
    /// Iso level; defaults to 0 for sdf and half the default density scale for density.
    #[arg(long)]
    pub iso: Option<f64>,
    /// Resample the field to this lattice size first. Coarser surfaces keep the proxy
    /// constraints solvable.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Minimum distance of a vertex from the lattice nodes of its edge, as a fraction of the
    /// edge. 0 gives plain marching cubes.
    #[arg(long, default_value_t = EDIT_EDGE_CLAMP)]
    pub edge_clamp: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BuildProxyArgs {
    pub field: PathBuf,
    pub mesh: PathBuf,
    pub cameras: PathBuf,
    /// Output proxy header; the payload goes next to it with a `.bin` suffix.
    pub out: PathBuf,
    /// Cage offset; defaults to 5% of the mean camera distance.
    #[arg(long)]
    pub offset: Option<f64>,
    /// Lattice cell size; defaults to half the offset.
    #[arg(long)]
    pub cell_size: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DeformArgs {
    pub mesh: PathBuf,
    pub proxy: PathBuf,
    pub handles: PathBuf,
    /// Receives deformed.obj, deformed.tet (+ .bin) and report.json.
    #[arg(long, short = 'o')]
    pub out_dir: PathBuf,
    /// Apply handles to the nearest tet vertices and skip the surface solve.
    #[arg(long)]
    pub edit_on_tet: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    pub field: PathBuf,
    pub camera: PathBuf,
    pub out: PathBuf,
    /// Deformed proxy written by `deform`.
    #[arg(long)]
    pub proxy: Option<PathBuf>,
    #[arg(long, requires = "deformed_mesh")]
    pub rest_mesh: Option<PathBuf>,
    #[arg(long, requires = "rest_mesh")]
    pub deformed_mesh: Option<PathBuf>,
    /// Bending strategy; without inputs for it the field renders unedited.
    #[arg(long, value_parser = parse_strategy)]
    pub warp: Option<WarpStrategy>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Jitter samples within their bins, seeded by `--seed`.
    #[arg(long)]
    pub jitter: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub white_background: bool,
    /// Keep density in space the deformed proxy no longer covers.
    #[arg(long)]
    pub no_mask: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s.split(',').map(|t| t.trim().parse::<usize>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v[..] {
        [n] => Ok([n; 3]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err(format!("expected 1 or 3 values, got {}", v.len())),
    }
}

fn parse_bounds(s: &str) -> Result<Aabb, String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v[..] {
        [h] => Ok(Aabb::cube(h)),
        [a, b, c, d, e, f] => Ok(Aabb::new(Point3::new(a, b, c), Point3::new(d, e, f))),
        _ => Err(format!("expected 1 or 6 values, got {}", v.len())),
    }
}

fn parse_strategy(s: &str) -> Result<WarpStrategy, String> {
    s.parse().map_err(|e: nerfdeform::bend::BendError| e.to_string())
}

/// Serializes PSNR of identical images as the string "inf"; JSON has no infinity.
pub fn psnr_json(v: f64) -> Value {
    if v.is_infinite() {
        json!("inf")
    } else {
        json!(v)
    }
}

pub fn gen_scene(args: &GenSceneArgs) -> Result<Value, CliError> {
    let spec = SceneSpec::load(&args.spec)?;
    let field = generate_field(&spec, args.dims, args.bounds)?;
    field.save(&args.out)?;
    log::info!("wrote {} ({:?} voxels)", args.out.display(), field.dims());
    Ok(json!({ "version": 1, "field": args.out, "dims": field.dims(), "bounds": field.bounds() }))
}

pub fn extract(args: &ExtractArgs) -> Result<Value, CliError> {
    let mut field = RadianceFieldGrid::load(&args.field)?;
    if let Some(r) = args.resolution {
        if r < 2 {
            return Err(CliError::Usage(format!("--resolution must be at least 2, got {r}")));
        }
        field = resample_field(&field, [r; 3])?;
    }
    let (default_channel, default_level) = default_iso(&field, DEFAULT_DENSITY_SCALE);
    let channel = match args.channel {
        Some(ChannelArg::Sdf) => IsoChannel::Sdf,
        Some(ChannelArg::Density) => IsoChannel::Density,
        None => default_channel,
    };
    let iso = match (args.iso, args.channel) {
        (Some(v), _) => v,
        (None, Some(ChannelArg::Density)) => DEFAULT_DENSITY_SCALE / 2.0,
        (None, Some(ChannelArg::Sdf)) => 0.0,
        (None, None) => default_level,
    };
    let mesh = marching_cubes_clamped(&field, iso, channel, args.edge_clamp)?;
    if mesh.is_empty() {
        return Err(CliError::Usage(format!("iso level {iso} does not cross the field; nothing extracted")));
    }
    save_obj(&mesh, &args.out)?;
    Ok(json!({
        "version": 1,
        "mesh": args.out,
        "vertices": mesh.num_vertices(),
        "faces": mesh.num_faces(),
        "closed": mesh.is_closed(),
    }))
}

pub fn build_proxy_cmd(args: &BuildProxyArgs) -> Result<Value, CliError> {
    let field = RadianceFieldGrid::load(&args.field)?;
    let mesh = load_obj(&args.mesh)?;
    if !field.bounds().contains_box(&mesh.bounding_box()) {
        log::warn!("mesh extends beyond the field bounds; it was probably extracted from another field");
    }
    let cameras = load_cameras(&args.cameras)?;
    let proxy = build_proxy(&mesh, &cameras, args.offset, args.cell_size)?;
    save_proxy(&args.out, &proxy.tet, Some(&proxy.embedding))?;
    Ok(json!({
        "version": 1,
        "proxy": args.out,
        "offset": proxy.offset,
        "cell_size": proxy.cell_size,
        "tet_vertices": proxy.tet.num_vertices(),
        "tets": proxy.tet.num_tets(),
    }))
}

pub fn deform(args: &DeformArgs) -> Result<Value, CliError> {
    let mut session = EditSession::load(&args.mesh, &args.proxy)?;
    if let Some(m) = args.max_iters {
        session.params.max_iters = m;
    }
    if let Some(t) = args.tol {
        session.params.tol = t;
    }
    let handles = HandleSet::load(&args.handles)?;
    let mode = if args.edit_on_tet { DeformMode::EditOnTet } else { DeformMode::TwoStep };
    let report = session.deform(&handles, mode)?.clone();
    std::fs::create_dir_all(&args.out_dir)?;
    let mesh_path = args.out_dir.join("deformed.obj");
    let proxy_path = args.out_dir.join("deformed.tet");
    let report_path = args.out_dir.join("report.json");
    save_obj(session.deformed_mesh(), &mesh_path)?;
    save_proxy(&proxy_path, session.tet(), Some(session.embedding()))?;
    std::fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;
    Ok(json!({
        "version": 1,
        "mesh": mesh_path,
        "proxy": proxy_path,
        "report": report,
    }))
}

/// Builds the warp named by the render flags, if any.
pub fn render_warp(args: &RenderArgs) -> Result<Option<WarpField>, CliError> {
    let mask = !args.no_mask;
    let meshes = || -> Result<Option<(nerfdeform::geom::TriMesh, nerfdeform::geom::TriMesh)>, CliError> {
        match (&args.rest_mesh, &args.deformed_mesh) {
            (Some(r), Some(d)) => Ok(Some((load_obj(r)?, load_obj(d)?))),
            _ => Ok(None),
        }
    };
    let strategy = match args.warp {
        Some(s) => s,
        None if args.proxy.is_some() => WarpStrategy::Tet,
        None if args.rest_mesh.is_some() => WarpStrategy::Knn3,
        None => return Ok(None),
    };
    let warp = match strategy {
        WarpStrategy::Tet => {
            let proxy = args.proxy.as_ref().ok_or_else(|| CliError::Usage("--warp tet needs --proxy".into()))?;
            let (tet, _) = load_proxy(proxy)?;
            WarpField::tet_with(tet, mask)
        }
        s => {
            let (rest, deformed) =
                meshes()?.ok_or_else(|| CliError::Usage(format!("--warp {s} needs --rest-mesh and --deformed-mesh")))?;
            match s {
                WarpStrategy::Closest => WarpField::closest(&rest, &deformed)?,
                _ => WarpField::knn3(&rest, &deformed)?,
            }
        }
    };
    Ok(Some(warp))
}

pub fn render(args: &RenderArgs) -> Result<Value, CliError> {
    let field = RadianceFieldGrid::load(&args.field)?;
    let camera = Camera::load(&args.camera)?;
    let sampler =
        SampleSpec { samples: args.samples, jitter: args.jitter, seed: args.seed, white_background: args.white_background, ..SampleSpec::default() };
    let warp = render_warp(args)?;
    let image = render_image(&field, &camera, &sampler, warp.as_ref().map(|w| w as &dyn nerfdeform::render::SpaceWarp))?;
    image.save(&args.out)?;
    Ok(json!({
        "version": 1,
        "image": args.out,
        "width": image.width(),
        "height": image.height(),
        "warp": warp.map(|w| w.strategy()),
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub version: u32,
    pub psnr: Value,
    pub ssim: f64,
}

pub fn eval_images(a: &Image, b: &Image) -> Result<EvalReport, CliError> {
    Ok(EvalReport { version: 1, psnr: psnr_json(psnr(a, b)?), ssim: ssim(a, b)? })
}

pub fn eval(args: &EvalArgs) -> Result<Value, CliError> {
    let report = eval_images(&Image::load(&args.a)?, &Image::load(&args.b)?)?;
    Ok(serde_json::to_value(report)?)
}
