use std::io::Write;
use std::path::Path;

use super::RenderError;

/// Linear RGB image with channels in `[0, 1]`, row-major from the top-left pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    /// Channels are clamped into `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count must match dimensions");
        let pixels = pixels.into_iter().map(|p| p.map(|c| c.clamp(0.0, 1.0))).collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    /// 8-bit quantization, `round(255 * c)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.map(|c| (c * 255.0).round() as u8))
            .collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, RenderError> {
        if bytes.len() != width * height * 3 {
            return Err(RenderError::Image(format!("expected {} bytes, got {}", width * height * 3, bytes.len())));
        }
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
            .collect();
        Ok(Self { width, height, pixels })
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>, RenderError> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| RenderError::Image(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn ppm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_rgb8());
        out
    }

    /// Writes PPM (P6) for a `.ppm` extension, PNG otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        let path = path.as_ref();
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ppm") => self.ppm_bytes(),
            _ => self.png_bytes()?,
        };
        std::fs::File::create(path)?.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RenderError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(b"P6") {
            return parse_ppm(&bytes);
        }
        let img = image::load_from_memory(&bytes).map_err(|e| RenderError::Image(e.to_string()))?.to_rgb8();
        Self::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
    }
}

fn parse_ppm(bytes: &[u8]) -> Result<Image, RenderError> {
    let bad = || RenderError::Image("malformed PPM header".into());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad())?.to_string());
    }
    pos += 1;
    let dim = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let (w, h) = (dim(&fields[1])?, dim(&fields[2])?);
    if fields[3] != "255" || pos > bytes.len() {
        return Err(bad());
    }
    Image::from_rgb8(w, h, &bytes[pos..])
}
