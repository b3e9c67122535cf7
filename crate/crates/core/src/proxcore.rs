//! Discrete gradient, total variation, and the closed-form proximity
//! operators and projections used by the primal-dual solvers.
//!
//! The gradient lives on the interior grid: for an `n1 x n2` field the two
//! difference images are `(n1 - 1) x (n2 - 1)` with
//!
//! ```text
//! g1[i][j] = h[i+1][j+1] - h[i+1][j]
//! g2[i][j] = h[i+1][j+1] - h[i][j+1]
//! ```
//!
//! No padding is used; the adjoint scatters back onto the full grid.

use alloc::vec::Vec;

use crate::error::{param, Error, Result};
use crate::field::Field2D;
use crate::math;

/// Bound on the squared operator norm of [`grad`].
pub const GRAD_NORM_SQ_BOUND: f64 = 8.0;

/// Horizontal and vertical differences on the interior grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    pub g1: Field2D,
    pub g2: Field2D,
}

impl GradPair {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            g1: Field2D::zeros(rows, cols),
            g2: Field2D::zeros(rows, cols),
        }
    }

    /// Dual pair sized for the gradient of an `rows x cols` field.
    pub fn for_field(rows: usize, cols: usize) -> Self {
        Self::zeros(rows - 1, cols - 1)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.g1.shape()
    }

    pub fn dot(&self, other: &GradPair) -> f64 {
        self.g1.dot(&other.g1) + self.g2.dot(&other.g2)
    }
}

fn check_grad_input(h: &Field2D) -> Result<()> {
    if h.rows() < 2 || h.cols() < 2 {
        return Err(Error::Shape(alloc::format!(
            "gradient needs at least 2x2, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    Ok(())
}

pub fn grad(h: &Field2D) -> Result<GradPair> {
    check_grad_input(h)?;
    let mut out = GradPair::for_field(h.rows(), h.cols());
    grad_into(h, &mut out);
    Ok(out)
}

/// Writes `grad(h)` into a preallocated pair of shape `(rows-1, cols-1)`.
pub fn grad_into(h: &Field2D, out: &mut GradPair) {
    let (rows, cols) = h.shape();
    debug_assert_eq!(out.shape(), (rows - 1, cols - 1));
    let ic = cols - 1;
    let src = h.as_slice();
    let g1 = out.g1.as_mut_slice();
    let g2 = out.g2.as_mut_slice();
    for i in 0..rows - 1 {
        let top = &src[i * cols..(i + 1) * cols];
        let bottom = &src[(i + 1) * cols..(i + 2) * cols];
        for j in 0..ic {
            let center = bottom[j + 1];
            g1[i * ic + j] = center - bottom[j];
            g2[i * ic + j] = center - top[j + 1];
        }
    }
}

/// Exact adjoint of [`grad`]: `<grad(h), p> = <h, grad_adjoint(p)>`.
pub fn grad_adjoint(p: &GradPair) -> Field2D {
    let (ir, ic) = p.shape();
    let mut out = Field2D::zeros(ir + 1, ic + 1);
    grad_adjoint_into(p, &mut out);
    out
}

/// Writes the adjoint into `out` (shape `(rows+1, cols+1)`), overwriting it.
///
/// Each output pixel gathers its (at most three) contributions in a fixed
/// order, so the result does not depend on any traversal schedule.
pub fn grad_adjoint_into(p: &GradPair, out: &mut Field2D) {
    let (ir, ic) = p.shape();
    let (rows, cols) = (ir + 1, ic + 1);
    debug_assert_eq!(out.shape(), (rows, cols));
    let g1 = p.g1.as_slice();
    let g2 = p.g2.as_slice();
    let dst = out.as_mut_slice();
    for r in 0..rows {
        for c in 0..cols {
            let mut v = 0.0;
            // h[r][c] appears as the centre of site (r-1, c-1).
            if r >= 1 && c >= 1 {
                let s = (r - 1) * ic + (c - 1);
                v += g1[s] + g2[s];
            }
            // ... as the left neighbour in g1 of site (r-1, c).
            if r >= 1 && c < ic {
                v -= g1[(r - 1) * ic + c];
            }
            // ... as the upper neighbour in g2 of site (r, c-1).
            if r < ir && c >= 1 {
                v -= g2[r * ic + (c - 1)];
            }
            dst[r * cols + c] = v;
        }
    }
}

/// Isotropic total variation on the interior grid.
pub fn tv(h: &Field2D) -> Result<f64> {
    let g = grad(h)?;
    Ok(g.g1
        .as_slice()
        .iter()
        .zip(g.g2.as_slice())
        .map(|(a, b)| math::sqrt(a * a + b * b))
        .sum())
}

/// Group soft-thresholding of one 2-vector: `u * max(0, 1 - t / |u|)`.
#[inline]
pub fn shrink2(u: [f64; 2], t: f64) -> [f64; 2] {
    let norm = math::sqrt(u[0] * u[0] + u[1] * u[1]);
    if norm <= t {
        [0.0, 0.0]
    } else {
        let s = 1.0 - t / norm;
        [u[0] * s, u[1] * s]
    }
}

/// Projection of one 2-vector onto the closed disc of the given radius.
#[inline]
pub fn project_disc(u: [f64; 2], radius: f64) -> [f64; 2] {
    let norm = math::sqrt(u[0] * u[0] + u[1] * u[1]);
    if norm <= radius {
        u
    } else {
        let s = radius / norm;
        [u[0] * s, u[1] * s]
    }
}

/// Proximity operator of `t * ||.||_{2,1}` applied site-wise to a pair of grids.
pub fn prox_l21(u: &GradPair, t: f64) -> Result<GradPair> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(param("t", "threshold must be >= 0"));
    }
    let mut out = u.clone();
    for (a, b) in out
        .g1
        .as_mut_slice()
        .iter_mut()
        .zip(out.g2.as_mut_slice().iter_mut())
    {
        let [x, y] = shrink2([*a, *b], t);
        *a = x;
        *b = y;
    }
    Ok(out)
}

/// Hyperplane `{x : <a, x> = b}` in R^J.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneSpec {
    normal: Vec<f64>,
    offset: f64,
    normal_sq: f64,
}

impl HyperplaneSpec {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let normal_sq: f64 = normal.iter().map(|v| v * v).sum();
        if normal.is_empty() || normal_sq == 0.0 || !normal_sq.is_finite() {
            return Err(param("normal", "must be a finite nonzero vector"));
        }
        if !offset.is_finite() {
            return Err(param("offset", "must be finite"));
        }
        Ok(Self {
            normal,
            offset,
            normal_sq,
        })
    }

    /// Weights summing to zero over `len` scales.
    pub fn zero_sum(len: usize) -> Result<Self> {
        Self::new(alloc::vec![1.0; len], 0.0)
    }

    /// Weights with `sum_j j w(j) = 1` over `j1..=j2`.
    pub fn unit_slope(j1: usize, j2: usize) -> Result<Self> {
        Self::new((j1..=j2).map(|j| j as f64).collect(), 1.0)
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    fn coefficient(&self, u: &[f64]) -> f64 {
        let dot: f64 = self.normal.iter().zip(u).map(|(a, x)| a * x).sum();
        (self.offset - dot) / self.normal_sq
    }

    /// Signed residual `<a, u> - b`.
    pub fn residual(&self, u: &[f64]) -> f64 {
        self.normal.iter().zip(u).map(|(a, x)| a * x).sum::<f64>() - self.offset
    }

    /// Euclidean distance from `u` to the hyperplane.
    pub fn distance(&self, u: &[f64]) -> f64 {
        self.residual(u).abs() / math::sqrt(self.normal_sq)
    }

    /// In-place projection.
    #[inline]
    pub fn project_in_place(&self, u: &mut [f64]) {
        let t = self.coefficient(u);
        for (x, a) in u.iter_mut().zip(&self.normal) {
            *x += t * a;
        }
    }

    /// In-place prox of `eta * d_C`.
    #[inline]
    pub fn prox_dist_in_place(&self, u: &mut [f64], eta: f64) {
        let t = self.coefficient(u);
        let d = t.abs() * math::sqrt(self.normal_sq);
        // Move towards the projection by min(eta, d).
        let frac = if d <= eta { 1.0 } else { eta / d };
        for (x, a) in u.iter_mut().zip(&self.normal) {
            *x += frac * t * a;
        }
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(param(
                "u",
                alloc::format!("length {} does not match dimension {}", u.len(), self.dim()),
            ));
        }
        Ok(())
    }
}

pub fn project_hyperplane(u: &[f64], spec: &HyperplaneSpec) -> Result<Vec<f64>> {
    spec.check_dim(u)?;
    let mut out = u.to_vec();
    spec.project_in_place(&mut out);
    Ok(out)
}

/// Proximity operator of `eta * d_C` for the hyperplane `C`.
pub fn prox_dist(u: &[f64], spec: &HyperplaneSpec, eta: f64) -> Result<Vec<f64>> {
    spec.check_dim(u)?;
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(param("eta", "must be >= 0"));
    }
    let mut out = u.to_vec();
    spec.prox_dist_in_place(&mut out, eta);
    Ok(out)
}

/// Projection of `(a, b)` onto the half-plane `a >= b`.
#[inline]
pub fn order_pair(a: f64, b: f64) -> (f64, f64) {
    if a >= b {
        (a, b)
    } else {
        let m = 0.5 * (a + b);
        (m, m)
    }
}

/// Pixel-wise projection onto `{(u1, u2) : u1 >= u2}`.
pub fn project_ordered_pair(u1: &Field2D, u2: &Field2D) -> Result<(Field2D, Field2D)> {
    u2.ensure_shape(u1.shape())?;
    let mut a = u1.clone();
    let mut b = u2.clone();
    for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_mut_slice().iter_mut()) {
        let (p, q) = order_pair(*x, *y);
        *x = p;
        *y = q;
    }
    Ok((a, b))
}

pub fn project_box01(u: &Field2D) -> Field2D {
    u.map(|v| v.clamp(0.0, 1.0))
}

/// Power-iteration estimate of `||grad||^2` on an `rows x cols` grid.
pub fn grad_norm_sq_estimate(rows: usize, cols: usize, iterations: usize) -> f64 {
    // Deterministic, non-constant start vector (constants are in the kernel).
    let mut h = Field2D::from_fn(rows, cols, |r, c| {
        let x = (r * 31 + c * 17 + 7) % 13;
        x as f64 - 6.0 + if (r + c) % 2 == 0 { 0.5 } else { -0.5 }
    });
    let mut g = GradPair::for_field(rows, cols);
    let mut back = Field2D::zeros(rows, cols);
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = math::sqrt(h.dot(&h));
        for v in h.as_mut_slice() {
            *v /= norm;
        }
        grad_into(&h, &mut g);
        grad_adjoint_into(&g, &mut back);
        estimate = h.dot(&back);
        core::mem::swap(&mut h, &mut back);
    }
    estimate
}
