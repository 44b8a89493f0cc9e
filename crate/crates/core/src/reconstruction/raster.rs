//! 8-bit grayscale rasters (PGM and PNG).

use std::io::Write;
use std::path::Path;

use super::field::{ChannelSelector, ScalarField};
use crate::error::{input, Error, Result};

/// Row-major pixels, first row northernmost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Linear `[0, 1] -> [0, 255]` with round-half-up.
pub fn to_pixel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

impl Raster {
    /// Maps a 2D field to grey levels, flipping rows so north is up.
    pub fn from_field(field: &ScalarField, selector: ChannelSelector) -> Result<Self> {
        if field.dim() != 2 {
            return input("rasters are drawn from 2D fields or slices");
        }
        let (w, h) = (field.resolution[0], field.resolution[1]);
        let values = field.select(selector)?;
        let mut pixels = Vec::with_capacity(w * h);
        for row in (0..h).rev() {
            pixels.extend(values[row * w..(row + 1) * w].iter().map(|&v| to_pixel(v)));
        }
        Ok(Self { width: w, height: h, pixels })
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        self.write_pgm_with_comments(path, &[])
    }

    /// Binary PGM with `# ...` header lines after the magic number.
    pub fn write_pgm_with_comments(&self, path: &Path, comments: &[&str]) -> Result<()> {
        if comments.iter().any(|c| c.contains('\n')) {
            return input("PGM comments must not contain newlines");
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "P5")?;
        for c in comments {
            writeln!(f, "# {c}")?;
        }
        write!(f, "{} {}\n255\n", self.width, self.height)?;
        f.write_all(&self.pixels)?;
        f.flush()?;
        Ok(())
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(&self.pixels).map_err(png_err)?;
        w.finish().map_err(png_err)?;
        Ok(())
    }

    /// Writes PNG for a `.png` extension and PGM otherwise.
    pub fn write(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("png") => self.write_png(path),
            _ => self.write_pgm(path),
        }
    }

    /// Reads a binary (P5) 8-bit PGM.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let mut fields = Vec::new();
        let mut i = 0;
        while fields.len() < 4 {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            let start = i;
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if start == i {
                return input("PGM header truncated");
            }
            fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Input(format!("bad PGM header field {s:?}")));
        if fields[0] != "P5" || num(&fields[3])? != 255 {
            return input("only 8-bit binary PGM is supported");
        }
        let (width, height) = (num(&fields[1])?, num(&fields[2])?);
        let body = &bytes[(i + 1).min(bytes.len())..];
        if body.len() != width * height {
            return input(format!("PGM body has {} bytes, expected {}", body.len(), width * height));
        }
        Ok(Self { width, height, pixels: body.to_vec() })
    }
}

fn png_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::Input(format!("PNG encoding failed: {other}")),
    }
}

/// Renders one channel of a 2D field to `path`.
pub fn render_raster(field: &ScalarField, selector: ChannelSelector, path: &Path) -> Result<Raster> {
    let r = Raster::from_field(field, selector)?;
    r.write(path)?;
    Ok(r)
}
