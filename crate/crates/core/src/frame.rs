//! Grayscale frames and PGM I/O.

use std::fs;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageReader};

use crate::error::{Error, Result};

/// A single grayscale frame with intensities on the 0..255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Frame { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame { width, height, data }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with replicated borders.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample with replicated borders.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

pub fn read_pgm(path: &Path) -> Result<Frame> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode { path: path.to_path_buf(), msg: e.to_string() })?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(Frame {
        width: w as usize,
        height: h as usize,
        data: img.into_raw().into_iter().map(f64::from).collect(),
    })
}

/// Writes a binary (`P5`) 8-bit PGM, rounding and clamping intensities.
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let bytes: Vec<u8> = frame.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = PnmEncoder::new(std::io::BufWriter::new(file))
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(&bytes, frame.width as u32, frame.height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Decode { path: path.to_path_buf(), msg: e.to_string() })
}

/// Lists the `.pgm` files of a directory in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|_| Error::FrameDir(dir.to_path_buf()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_frames(dir: &Path) -> Result<Vec<Frame>> {
    let frames = list_frames(dir)?
        .iter()
        .map(|p| read_pgm(p))
        .collect::<Result<Vec<_>>>()?;
    if let Some(first) = frames.first() {
        if let Some(bad) = frames.iter().find(|f| f.dims() != first.dims()) {
            return Err(Error::SizeMismatch(first.dims(), bad.dims()));
        }
    }
    Ok(frames)
}

/// Separable Gaussian kernel truncated at `radius` and normalized to unit sum.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable 2-D convolution with replicated borders.
pub fn convolve_separable(frame: &Frame, kx: &[f64], ky: &[f64]) -> Frame {
    let (w, h) = frame.dims();
    let rx = kx.len() / 2;
    let ry = ky.len() / 2;
    let mut tmp = Frame::new(w, h);
    for y in 0..h {
        let src = &frame.data[y * w..(y + 1) * w];
        let dst = &mut tmp.data[y * w..(y + 1) * w];
        for (x, out) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            if x >= rx && x + kx.len() - rx <= w {
                for (kv, v) in kx.iter().zip(&src[x - rx..]) {
                    acc += kv * v;
                }
            } else {
                for (i, &kv) in kx.iter().enumerate() {
                    acc += kv * src[(x as isize + i as isize - rx as isize).clamp(0, w as isize - 1) as usize];
                }
            }
            *out = acc;
        }
    }
    // Row-wise accumulation keeps the per-pixel summation order of a
    // direct column convolution.
    let mut out = Frame::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (i, &kv) in ky.iter().enumerate() {
            let sy = (y as isize + i as isize - ry as isize).clamp(0, h as isize - 1) as usize;
            let src = &tmp.data[sy * w..(sy + 1) * w];
            if i == 0 {
                for (d, v) in dst.iter_mut().zip(src) {
                    *d = kv * v;
                }
            } else {
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += kv * v;
                }
            }
        }
    }
    out
}

pub fn gaussian_blur(frame: &Frame, sigma: f64) -> Frame {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let k = gaussian_kernel(sigma, radius);
    convolve_separable(frame, &k, &k)
}
