//! Periodic 2D Daubechies wavelet transform and wavelet leaders.
//!
//! Detail coefficients are stored with L1 normalization: the level-`j` output
//! of the orthonormal Mallat pyramid multiplied by `2^-j`. With this
//! convention the log2-leaders of a field with Hölder regularity `h` grow
//! across scales with slope `h + gamma`.

use alloc::vec::Vec;

use crate::error::{param, Error, Result};
use crate::field::Field2D;
use crate::math;

/// Leaders smaller than this are clamped before taking log2.
pub const LEADER_FLOOR: f64 = 1e-300;

/// Orthonormal Daubechies wavelet identified by its number of vanishing moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wavelet {
    /// Daubechies with `n` vanishing moments, `1 <= n <= 4` (db1 is Haar).
    Daubechies(u8),
}

impl Default for Wavelet {
    fn default() -> Self {
        Wavelet::Daubechies(2)
    }
}

impl Wavelet {
    /// Parses names of the form `db2`.
    pub fn from_name(name: &str) -> Result<Self> {
        let order = name
            .strip_prefix("db")
            .and_then(|n| n.parse::<u8>().ok())
            .ok_or_else(|| param("wavelet", alloc::format!("unknown wavelet `{name}`")))?;
        let w = Wavelet::Daubechies(order);
        w.lowpass()?;
        Ok(w)
    }

    pub fn vanishing_moments(self) -> u8 {
        match self {
            Wavelet::Daubechies(n) => n,
        }
    }

    /// Analysis lowpass filter, normalized so its taps sum to sqrt(2).
    pub fn lowpass(self) -> Result<&'static [f64]> {
        match self {
            Wavelet::Daubechies(1) => Ok(&DB1),
            Wavelet::Daubechies(2) => Ok(&DB2),
            Wavelet::Daubechies(3) => Ok(&DB3),
            Wavelet::Daubechies(4) => Ok(&DB4),
            Wavelet::Daubechies(n) => Err(param(
                "wavelet",
                alloc::format!("db{n} not available (supported: db1..db4)"),
            )),
        }
    }

    /// Quadrature mirror highpass `g[n] = (-1)^n h[L-1-n]`.
    pub fn highpass(self) -> Result<Vec<f64>> {
        let h = self.lowpass()?;
        let l = h.len();
        Ok((0..l)
            .map(|n| if n % 2 == 0 { h[l - 1 - n] } else { -h[l - 1 - n] })
            .collect())
    }
}

const DB1: [f64; 2] = [core::f64::consts::FRAC_1_SQRT_2, core::f64::consts::FRAC_1_SQRT_2];
const DB2: [f64; 4] = [
    0.482_962_913_144_534_16,
    0.836_516_303_737_807_9,
    0.224_143_868_042_013_39,
    -0.129_409_522_551_260_37,
];
const DB3: [f64; 6] = [
    0.332_670_552_950_082_6,
    0.806_891_509_311_092_5,
    0.459_877_502_118_491_5,
    -0.135_011_020_010_254_58,
    -0.085_441_273_882_026_66,
    0.035_226_291_885_709_53,
];
const DB4: [f64; 8] = [
    0.230_377_813_308_896_53,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

/// Detail coefficients per scale and orientation.
///
/// `details[j - 1][m - 1]` holds orientation `m` at scale `j`, an
/// `(rows / 2^j) x (cols / 2^j)` grid. Orientation 1 is highpass along rows
/// (first index), 2 highpass along columns, 3 diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    details: Vec<[Field2D; 3]>,
    /// Orthonormal (unscaled) approximation at the coarsest level.
    approx: Field2D,
    wavelet: Wavelet,
}

impl WaveletPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn wavelet(&self) -> Wavelet {
        self.wavelet
    }

    /// L1-normalized detail grid for scale `j >= 1` and orientation `m` in 1..=3.
    pub fn detail(&self, j: usize, m: usize) -> &Field2D {
        &self.details[j - 1][m - 1]
    }

    pub fn detail_mut(&mut self, j: usize, m: usize) -> &mut Field2D {
        &mut self.details[j - 1][m - 1]
    }

    pub fn approx(&self) -> &Field2D {
        &self.approx
    }

    /// Sum of squared coefficients after undoing the L1 scaling, i.e. the
    /// energy of the orthonormal transform.
    pub fn orthonormal_energy(&self) -> f64 {
        let mut e: f64 = self.approx.as_slice().iter().map(|v| v * v).sum();
        for (idx, bands) in self.details.iter().enumerate() {
            let s = math::powi2((idx + 1) as f64);
            for band in bands {
                e += band.as_slice().iter().map(|v| (v * s) * (v * s)).sum::<f64>();
            }
        }
        e
    }
}

/// One periodic analysis step along a 1D signal of even length.
fn analyze_1d(x: &[f64], lo: &[f64], hi: &[f64], a: &mut [f64], d: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        let base = 2 * k;
        for (t, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            let v = x[(base + t) % n];
            sa += l * v;
            sd += h * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
}

/// Separable one-level transform of `f` into (LL, HL, LH, HH) where the first
/// letter refers to the filter applied along rows (first index).
fn analyze_2d(f: &Field2D, lo: &[f64], hi: &[f64]) -> [Field2D; 4] {
    let (rows, cols) = f.shape();
    let (hr, hc) = (rows / 2, cols / 2);

    // Filter along the column index first.
    let mut low_c = Field2D::zeros(rows, hc);
    let mut high_c = Field2D::zeros(rows, hc);
    let mut a = alloc::vec![0.0; hc];
    let mut d = alloc::vec![0.0; hc];
    for r in 0..rows {
        analyze_1d(f.row(r), lo, hi, &mut a, &mut d);
        low_c.as_mut_slice()[r * hc..(r + 1) * hc].copy_from_slice(&a);
        high_c.as_mut_slice()[r * hc..(r + 1) * hc].copy_from_slice(&d);
    }

    // Then along the row index.
    let mut out = [
        Field2D::zeros(hr, hc),
        Field2D::zeros(hr, hc),
        Field2D::zeros(hr, hc),
        Field2D::zeros(hr, hc),
    ];
    let mut col = alloc::vec![0.0; rows];
    let mut a = alloc::vec![0.0; hr];
    let mut d = alloc::vec![0.0; hr];
    for (src, (lo_dst, hi_dst)) in [(&low_c, (0usize, 1usize)), (&high_c, (2, 3))] {
        for c in 0..hc {
            for (r, v) in col.iter_mut().enumerate() {
                *v = src[(r, c)];
            }
            analyze_1d(&col, lo, hi, &mut a, &mut d);
            for r in 0..hr {
                out[lo_dst][(r, c)] = a[r];
                out[hi_dst][(r, c)] = d[r];
            }
        }
    }
    // out = [L_row L_col, H_row L_col, L_row H_col, H_row H_col]
    out
}

/// Periodic separable Mallat pyramid with L1-normalized details.
pub fn dwt2(f: &Field2D, levels: usize, wavelet: Wavelet) -> Result<WaveletPyramid> {
    let lo = wavelet.lowpass()?;
    let hi = wavelet.highpass()?;
    if levels == 0 {
        return Err(param("levels", "at least one level is required"));
    }
    let (rows, cols) = f.shape();
    let max_levels = rows.min(cols).trailing_zeros() as usize;
    if levels >= usize::BITS as usize
        || rows % (1usize << levels) != 0
        || cols % (1usize << levels) != 0
    {
        return Err(Error::Shape(alloc::format!(
            "{rows}x{cols} is not divisible by 2^{levels} (at most {max_levels} levels)"
        )));
    }
    f.check_finite()?;

    let mut details = Vec::with_capacity(levels);
    let mut current = f.clone();
    for j in 1..=levels {
        let [ll, hl, lh, hh] = analyze_2d(&current, &lo, &hi);
        let scale = math::powi2(-(j as f64));
        details.push([hl.map(|v| v * scale), lh.map(|v| v * scale), hh.map(|v| v * scale)]);
        current = ll;
    }
    Ok(WaveletPyramid {
        details,
        approx: current,
        wavelet,
    })
}

/// Where the fractional-integration factor enters the leader supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaPlacement {
    /// `2^(j' gamma)` applied to each contributing coefficient at its own scale `j'`.
    #[default]
    PerCoefficient,
    /// A single `2^(j gamma)` factor at the leader's scale `j`.
    OuterScale,
}

/// Log2 wavelet leaders for scales `j1..=j2`, upsampled to the scale-1 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderStack {
    j1: usize,
    gamma: f64,
    grids: Vec<Field2D>,
    floored: usize,
}

impl LeaderStack {
    /// Assembles a stack from log2 grids for consecutive scales starting at `j1`.
    pub fn from_parts(j1: usize, gamma: f64, grids: Vec<Field2D>) -> Result<Self> {
        if j1 == 0 {
            return Err(param("j1", "scales start at 1"));
        }
        if grids.is_empty() {
            return Err(param("grids", "at least one scale is required"));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(param("gamma", "must be finite and >= 0"));
        }
        let shape = grids[0].shape();
        for g in &grids {
            g.ensure_shape(shape)?;
            g.check_finite()?;
        }
        Ok(Self {
            j1,
            gamma,
            grids,
            floored: 0,
        })
    }

    pub fn j1(&self) -> usize {
        self.j1
    }

    pub fn j2(&self) -> usize {
        self.j1 + self.grids.len() - 1
    }

    pub fn num_scales(&self) -> usize {
        self.grids.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn shape(&self) -> (usize, usize) {
        self.grids[0].shape()
    }

    /// Log2-leader grid at absolute scale `j`.
    pub fn log2_at(&self, j: usize) -> &Field2D {
        &self.grids[j - self.j1]
    }

    /// Grids ordered from `j1` to `j2`.
    pub fn grids(&self) -> &[Field2D] {
        &self.grids
    }

    pub fn scales(&self) -> core::ops::RangeInclusive<usize> {
        self.j1..=self.j2()
    }

    /// Number of native-resolution leaders that were clamped to [`LEADER_FLOOR`].
    pub fn floored(&self) -> usize {
        self.floored
    }

    /// Adds `delta` to every log2-leader at scale `j`.
    pub fn shift_scale(&mut self, j: usize, delta: f64) {
        let idx = j - self.j1;
        for v in self.grids[idx].as_mut_slice() {
            *v += delta;
        }
    }
}

/// Native-resolution (linear, not logged) leaders for scales `1..=j2`.
///
/// Entry `j - 1` is an `(rows / 2^j) x (cols / 2^j)` grid. The supremum runs over
/// the three orientations, every finer or equal scale, and every dyadic cube
/// inside the 3x3 neighbourhood of the leader's cube, wrapping periodically.
pub fn leader_grids(
    p: &WaveletPyramid,
    j2: usize,
    gamma: f64,
    placement: GammaPlacement,
) -> Result<Vec<Field2D>> {
    if j2 == 0 || j2 > p.levels() {
        return Err(param(
            "j2",
            alloc::format!("must lie in 1..={} for this pyramid", p.levels()),
        ));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(param("gamma", "must be finite and >= 0"));
    }
    let per_coef_gamma = match placement {
        GammaPlacement::PerCoefficient => gamma,
        GammaPlacement::OuterScale => 0.0,
    };

    // Cube-wise supremum over the cube and all its descendants.
    let mut cube: Option<Field2D> = None;
    let mut out = Vec::with_capacity(j2);
    for j in 1..=j2 {
        let bands = &p.details[j - 1];
        let (rows, cols) = bands[0].shape();
        let factor = math::powi2(j as f64 * per_coef_gamma);
        let mut sup = Field2D::from_fn(rows, cols, |r, c| {
            let m = bands
                .iter()
                .fold(0.0f64, |acc, b| acc.max(b[(r, c)].abs()));
            m * factor
        });
        if let Some(finer) = &cube {
            for r in 0..rows {
                for c in 0..cols {
                    let child = finer[(2 * r, 2 * c)]
                        .max(finer[(2 * r + 1, 2 * c)])
                        .max(finer[(2 * r, 2 * c + 1)])
                        .max(finer[(2 * r + 1, 2 * c + 1)]);
                    let s = &mut sup[(r, c)];
                    *s = s.max(child);
                }
            }
        }

        let outer = match placement {
            GammaPlacement::PerCoefficient => 1.0,
            GammaPlacement::OuterScale => math::powi2(j as f64 * gamma),
        };
        let leaders = Field2D::from_fn(rows, cols, |r, c| {
            let mut m = 0.0f64;
            for dr in [rows - 1, 0, 1] {
                for dc in [cols - 1, 0, 1] {
                    m = m.max(sup[((r + dr) % rows, (c + dc) % cols)]);
                }
            }
            m * outer
        });
        out.push(leaders);
        cube = Some(sup);
    }
    Ok(out)
}

/// Log2-leaders for scales `j1..=j2` with the default per-coefficient gamma.
pub fn leaders(p: &WaveletPyramid, j1: usize, j2: usize, gamma: f64) -> Result<LeaderStack> {
    leaders_with(p, j1, j2, gamma, GammaPlacement::PerCoefficient)
}

pub fn leaders_with(
    p: &WaveletPyramid,
    j1: usize,
    j2: usize,
    gamma: f64,
    placement: GammaPlacement,
) -> Result<LeaderStack> {
    if j1 == 0 || j1 > j2 {
        return Err(param("j1", "need 1 <= j1 <= j2"));
    }
    let native = leader_grids(p, j2, gamma, placement)?;
    let (rows, cols) = native[0].shape();
    let mut floored = 0usize;
    let mut grids = Vec::with_capacity(j2 - j1 + 1);
    for (idx, grid) in native.iter().enumerate().skip(j1 - 1) {
        let shift = idx; // j - 1
        floored += grid.as_slice().iter().filter(|&&v| v < LEADER_FLOOR).count();
        grids.push(Field2D::from_fn(rows, cols, |r, c| {
            let v = grid[(r >> shift, c >> shift)];
            math::log2(v.max(LEADER_FLOOR))
        }));
    }
    if floored > 0 {
        log::warn!("{floored} wavelet leaders were zero and clamped to {LEADER_FLOOR:e} before log2");
    }
    Ok(LeaderStack {
        j1,
        gamma,
        grids,
        floored,
    })
}
