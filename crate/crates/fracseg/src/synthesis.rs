//! Gaussian textures with prescribed piecewise-constant regularity.
//!
//! Fields are synthesized spectrally: complex white noise on the `N x N`
//! frequency grid, amplitude `|xi|^-(h+1)`, zero DC, inverse FFT, real part,
//! then standardization. Noise comes from `ChaCha8Rng::seed_from_u64(seed)`,
//! drawn row-major as `(re, im)` standard normal pairs.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use fracseg_core::{Field2D, LabelMask};

use crate::error::{Error, Result};
use crate::gridio;

/// A region drawn on top of earlier ones. Coordinates are in pixels, rows first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `((r - cr) / a)^2 + ((c - cc) / b)^2 <= 1`.
    Ellipse { cr: f64, cc: f64, a: f64, b: f64 },
    /// Half-open box `top..bottom` x `left..right`.
    Rectangle {
        top: usize,
        left: usize,
        bottom: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Shape `i` gets label `i + 1`; uncovered pixels keep label 0.
    Shapes(Vec<Shape>),
    /// A mask written by [`gridio::write_mask`].
    File(PathBuf),
}

impl Geometry {
    /// Centered ellipse with semi-axes `3N/8` (rows) and `N/4` (columns).
    pub fn ellipse(n: usize) -> Self {
        let c = n as f64 / 2.0;
        Geometry::Shapes(vec![Shape::Ellipse {
            cr: c,
            cc: c,
            a: 3.0 * n as f64 / 8.0,
            b: n as f64 / 4.0,
        }])
    }

    /// Two overlapping squares: an L-shaped region 1 and a square region 2,
    /// so that both corners and straight edges appear.
    pub fn corners(n: usize) -> Self {
        Geometry::Shapes(vec![
            Shape::Rectangle {
                top: n / 8,
                left: n / 8,
                bottom: 5 * n / 8,
                right: 5 * n / 8,
            },
            Shape::Rectangle {
                top: 3 * n / 8,
                left: 3 * n / 8,
                bottom: 7 * n / 8,
                right: 7 * n / 8,
            },
        ])
    }

    /// Parses `ellipse`, `corners`, `ellipse:cr,cc,a,b`, `rect:top,left,bottom,right`
    /// (several shapes joined by `+`) or `file:PATH`.
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        match text {
            "ellipse" => return Ok(Self::ellipse(n)),
            "corners" => return Ok(Self::corners(n)),
            _ => {}
        }
        if let Some(path) = text.strip_prefix("file:") {
            return Ok(Geometry::File(path.into()));
        }
        let bad = || Error::Config(format!("cannot parse geometry {text:?}"));
        let mut shapes = Vec::new();
        for part in text.split('+') {
            let (kind, args) = part.split_once(':').ok_or_else(bad)?;
            let nums: Vec<f64> = args
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            if nums.len() != 4 {
                return Err(bad());
            }
            shapes.push(match kind {
                "ellipse" => Shape::Ellipse {
                    cr: nums[0],
                    cc: nums[1],
                    a: nums[2],
                    b: nums[3],
                },
                "rect" => {
                    if nums.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                        return Err(bad());
                    }
                    Shape::Rectangle {
                        top: nums[0] as usize,
                        left: nums[1] as usize,
                        bottom: nums[2] as usize,
                        right: nums[3] as usize,
                    }
                }
                _ => return Err(bad()),
            });
        }
        Ok(Geometry::Shapes(shapes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub size: usize,
    pub geometry: Geometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub size: usize,
    pub h_values: Vec<f64>,
    pub seed: u64,
    pub geometry: Geometry,
}

impl SynthConfig {
    pub fn mask_spec(&self) -> MaskSpec {
        MaskSpec {
            size: self.size,
            geometry: self.geometry.clone(),
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < 32 || !n.is_power_of_two() {
        return Err(Error::Config(format!("size {n} must be a power of two >= 32")));
    }
    Ok(())
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Config(format!("regularity {h} outside (0, 1)")));
    }
    Ok(())
}

pub fn make_mask(spec: &MaskSpec) -> Result<LabelMask> {
    let n = spec.size;
    let shapes = match &spec.geometry {
        Geometry::File(path) => {
            let mask = gridio::read_mask(path)?;
            if mask.shape() != (n, n) {
                return Err(Error::Config(format!(
                    "{}: mask is {:?}, expected {n}x{n}",
                    path.display(),
                    mask.shape()
                )));
            }
            return Ok(mask);
        }
        Geometry::Shapes(shapes) => shapes,
    };
    if shapes.len() >= 256 {
        return Err(Error::Config(format!("{} shapes exceed 255", shapes.len())));
    }
    let nf = n as f64;
    let mut labels = vec![0u32; n * n];
    for (i, shape) in shapes.iter().enumerate() {
        let label = i as u32 + 1;
        match *shape {
            Shape::Ellipse { cr, cc, a, b } => {
                if !(a > 0.0 && b > 0.0) || cr - a < 0.0 || cr + a > nf || cc - b < 0.0 || cc + b > nf {
                    return Err(Error::Config(format!("{shape:?} does not fit a {n}x{n} grid")));
                }
                for r in 0..n {
                    for c in 0..n {
                        let u = (r as f64 - cr) / a;
                        let v = (c as f64 - cc) / b;
                        if u * u + v * v <= 1.0 {
                            labels[r * n + c] = label;
                        }
                    }
                }
            }
            Shape::Rectangle {
                top,
                left,
                bottom,
                right,
            } => {
                if top >= bottom || left >= right || bottom > n || right > n {
                    return Err(Error::Config(format!("{shape:?} does not fit a {n}x{n} grid")));
                }
                for r in top..bottom {
                    labels[r * n + left..r * n + right].fill(label);
                }
            }
        }
    }
    Ok(LabelMask::new(n, n, labels, shapes.len() as u32 + 1)?)
}

/// Keeps pixel `(f r + f/2, f c + f/2)` for every output pixel `(r, c)`.
///
/// Maps a full-resolution truth mask onto the grid of regularity estimates,
/// which is half the image size.
pub fn decimate_mask(mask: &LabelMask, factor: usize) -> Result<LabelMask> {
    let (rows, cols) = mask.shape();
    if factor == 0 || rows % factor != 0 || cols % factor != 0 {
        return Err(Error::Config(format!("cannot decimate {rows}x{cols} by {factor}")));
    }
    let (r2, c2) = (rows / factor, cols / factor);
    let off = factor / 2;
    let labels = (0..r2 * c2)
        .map(|k| mask.get((k / c2) * factor + off, (k % c2) * factor + off))
        .collect();
    Ok(LabelMask::new(r2, c2, labels, mask.q())?)
}

/// One complex white-noise draw on the frequency grid, shared between fields.
#[derive(Debug, Clone)]
pub struct SpectralNoise {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralNoise {
    pub fn draw(n: usize, seed: u64) -> Result<Self> {
        check_size(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..n * n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        Ok(SpectralNoise { n, coeffs })
    }

    /// Standardized field of regularity `h` built from this noise.
    pub fn shape(&self, h: f64) -> Result<Field2D> {
        check_h(h)?;
        let n = self.n;
        let freq = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let mut buf: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, z)| {
                let (fr, fc) = (freq(idx / n), freq(idx % n));
                let radius = (fr * fr + fc * fc).sqrt();
                if radius == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    z * radius.powf(-(h + 1.0))
                }
            })
            .collect();
        inverse_fft2(&mut buf, n);
        let mut field = Field2D::new(n, n, buf.iter().map(|z| z.re).collect())?;
        standardize(&mut field);
        Ok(field)
    }
}

fn inverse_fft2(buf: &mut [Complex64], n: usize) {
    let fft = FftPlanner::new().plan_fft_inverse(n);
    fft.process(buf);
    transpose(buf, n);
    fft.process(buf);
    transpose(buf, n);
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Shifts and scales to zero sample mean and unit (population) sample variance.
pub fn standardize(field: &mut Field2D) {
    let mean = field.mean();
    let sd = field.variance().sqrt();
    let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
    for v in field.as_mut_slice() {
        *v = (*v - mean) * scale;
    }
}

pub fn synth_homogeneous(n: usize, h: f64, seed: u64) -> Result<Field2D> {
    check_h(h)?;
    SpectralNoise::draw(n, seed)?.shape(h)
}

/// Field whose pixels labeled `q` come from the homogeneous field of
/// regularity `h_values[q]`, standardized over those pixels only; all fields
/// share one noise draw.
pub fn synth_piecewise(cfg: &SynthConfig) -> Result<(Field2D, LabelMask)> {
    for &h in &cfg.h_values {
        check_h(h)?;
    }
    let mask = make_mask(&cfg.mask_spec())?;
    if mask.q() as usize != cfg.h_values.len() {
        return Err(Error::Config(format!(
            "geometry has {} regions but {} regularity values were given",
            mask.q(),
            cfg.h_values.len()
        )));
    }
    let noise = SpectralNoise::draw(cfg.size, cfg.seed)?;
    let n = cfg.size;
    let mut data = vec![0.0; n * n];
    for (q, &h) in cfg.h_values.iter().enumerate() {
        let members: Vec<usize> = (0..n * n).filter(|&k| mask.labels()[k] == q as u32).collect();
        if members.is_empty() {
            continue;
        }
        let field = noise.shape(h)?;
        let values = field.as_slice();
        if members.len() == n * n {
            // Already standardized over the whole grid.
            data.copy_from_slice(values);
            continue;
        }
        let count = members.len() as f64;
        let mean = members.iter().map(|&k| values[k]).sum::<f64>() / count;
        let var = members.iter().map(|&k| (values[k] - mean).powi(2)).sum::<f64>() / count;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for &k in &members {
            data[k] = (values[k] - mean) * scale;
        }
    }
    Ok((Field2D::new(n, n, data)?, mask))
}
