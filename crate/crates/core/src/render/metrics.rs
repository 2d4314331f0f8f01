use super::{Image, RenderError};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_dims(a: &Image, b: &Image) -> Result<(), RenderError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(RenderError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for unit dynamic range; `+inf` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, RenderError> {
    check_dims(a, b)?;
    let n = (a.pixels().len() * 3) as f64;
    let mse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .flat_map(|(p, q)| (0..3).map(move |k| (p[k] - q[k]).powi(2)))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5), evaluated where the
/// window fits inside the image and averaged over the three channels. Images smaller than the
/// window use the largest odd window that fits.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, RenderError> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let kernel = gaussian_kernel(size, SSIM_SIGMA);
    let c1 = (K1 * 1.0).powi(2);
    let c2 = (K2 * 1.0).powi(2);

    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.pixels().iter().map(|p| p[ch]).collect();
        let y: Vec<f64> = b.pixels().iter().map(|p| p[ch]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|c| filter_valid(c, w, h, &kernel));
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (mu_x, mu_y) = (mx[i], my[i]);
            let var_x = sxx[i] - mu_x * mu_x;
            let var_y = syy[i] - mu_y * mu_y;
            let cov = sxy[i] - mu_x * mu_y;
            acc += ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / 3.0)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let k: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable correlation keeping only positions where the kernel fits.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let ow = w + 1 - n;
    let oh = h + 1 - n;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}
