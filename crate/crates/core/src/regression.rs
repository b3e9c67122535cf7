//! Hölder exponent estimation by linear regression of log2-leaders across
//! scales, and the Gaussian-smoothing baseline.

use alloc::vec::Vec;

use crate::error::{param, Error, Result};
use crate::field::{Field2D, LabelMask};
use crate::math;
use crate::multiscale::LeaderStack;

/// Location-independent regression weights `w(j)` for `j = j1..=j2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionWeights {
    j1: usize,
    weights: Vec<f64>,
}

impl RegressionWeights {
    pub fn j1(&self) -> usize {
        self.j1
    }

    pub fn j2(&self) -> usize {
        self.j1 + self.weights.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at absolute scale `j`.
    pub fn at(&self, j: usize) -> f64 {
        self.weights[j - self.j1]
    }

    /// `(sum_j w(j), sum_j j w(j) - 1)`; both vanish for unbiased weights.
    pub fn constraint_residuals(&self) -> (f64, f64) {
        let s0: f64 = self.weights.iter().sum();
        let s1: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| (self.j1 + i) as f64 * w)
            .sum();
        (s0, s1 - 1.0)
    }
}

/// Ordinary least-squares slope weights over `j1..=j2`.
pub fn ols_weights(j1: usize, j2: usize) -> Result<RegressionWeights> {
    if j2 <= j1 {
        return Err(param("j2", "slope needs at least two scales (j2 > j1)"));
    }
    let js = || (j1..=j2).map(|j| j as f64);
    let s0 = (j2 - j1 + 1) as f64;
    let s1: f64 = js().sum();
    let s2: f64 = js().map(|j| j * j).sum();
    let det = s0 * s2 - s1 * s1;
    Ok(RegressionWeights {
        j1,
        weights: js().map(|j| (s0 * j - s1) / det).collect(),
    })
}

fn check_range(stack: &LeaderStack, w: &RegressionWeights) -> Result<()> {
    if stack.j1() != w.j1() || stack.j2() != w.j2() {
        return Err(param(
            "weights",
            alloc::format!(
                "scale range {}..={} does not match leaders {}..={}",
                w.j1(),
                w.j2(),
                stack.j1(),
                stack.j2()
            ),
        ));
    }
    Ok(())
}

/// Weighted log-leader sum `sum_j w(j) log2 X(j, k)` per pixel, without the
/// gamma compensation.
pub fn regression_slope(stack: &LeaderStack, w: &RegressionWeights) -> Result<Field2D> {
    check_range(stack, w)?;
    let (rows, cols) = stack.shape();
    let mut out = Field2D::zeros(rows, cols);
    for (grid, &wj) in stack.grids().iter().zip(w.as_slice()) {
        for (o, &x) in out.as_mut_slice().iter_mut().zip(grid.as_slice()) {
            *o += wj * x;
        }
    }
    Ok(out)
}

/// Pointwise Hölder exponent map: regression slope minus `gamma`.
pub fn estimate_h(stack: &LeaderStack, w: &RegressionWeights) -> Result<Field2D> {
    let gamma = stack.gamma();
    Ok(regression_slope(stack, w)?.map(|v| v - gamma))
}

/// Normalized 1D Gaussian taps on `-radius..=radius`, `radius = ceil(4 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(param("sigma", "must be > 0"));
    }
    let radius = math::ceil(4.0 * sigma) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|t| math::exp(-((t * t) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    Ok(k)
}

fn convolve_periodic_1d(src: &[f64], kernel: &[f64], dst: &mut [f64]) {
    let n = src.len() as isize;
    let radius = (kernel.len() / 2) as isize;
    for (i, d) in dst.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, &kv) in kernel.iter().enumerate() {
            let idx = (i as isize + t as isize - radius).rem_euclid(n);
            acc += kv * src[idx as usize];
        }
        *d = acc;
    }
}

/// Circular convolution with a normalized, separable Gaussian kernel truncated
/// to the square of half-width `ceil(4 sigma)`.
pub fn gaussian_smooth(h: &Field2D, sigma: f64) -> Result<Field2D> {
    let kernel = gaussian_kernel_1d(sigma)?;
    let (rows, cols) = h.shape();
    let mut tmp = Field2D::zeros(rows, cols);
    for r in 0..rows {
        let dst = &mut tmp.as_mut_slice()[r * cols..(r + 1) * cols];
        convolve_periodic_1d(h.row(r), &kernel, dst);
    }
    let mut out = Field2D::zeros(rows, cols);
    let mut col = alloc::vec![0.0; rows];
    let mut res = alloc::vec![0.0; rows];
    for c in 0..cols {
        for (r, v) in col.iter_mut().enumerate() {
            *v = tmp[(r, c)];
        }
        convolve_periodic_1d(&col, &kernel, &mut res);
        for (r, v) in res.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    Ok(out)
}

/// Per-label regularity re-estimated from the region-mean log2-leader at each
/// scale. `None` marks a label with no pixels.
pub fn region_average_reestimate(
    stack: &LeaderStack,
    mask: &LabelMask,
    w: &RegressionWeights,
) -> Result<Vec<Option<f64>>> {
    check_range(stack, w)?;
    if mask.shape() != stack.shape() {
        return Err(Error::ShapeMismatch {
            expected: stack.shape(),
            got: mask.shape(),
        });
    }
    let q = mask.q() as usize;
    let counts = mask.counts();
    let mut out = alloc::vec![0.0f64; q];
    for (grid, &wj) in stack.grids().iter().zip(w.as_slice()) {
        let mut sums = alloc::vec![0.0f64; q];
        for (&l, &x) in mask.labels().iter().zip(grid.as_slice()) {
            sums[l as usize] += x;
        }
        for (label, s) in sums.iter().enumerate() {
            if counts[label] > 0 {
                out[label] += wj * s / counts[label] as f64;
            }
        }
    }
    Ok(out
        .into_iter()
        .zip(counts)
        .map(|(v, c)| (c > 0).then(|| v - stack.gamma()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine_stack(rows: usize, cols: usize, j1: usize, j2: usize, gamma: f64) -> LeaderStack {
        let grids = (j1..=j2)
            .map(|j| Field2D::from_fn(rows, cols, |r, c| j as f64 * (0.1 * r as f64 + 0.7) + c as f64))
            .collect();
        LeaderStack::from_parts(j1, gamma, grids).unwrap()
    }

    #[test]
    fn ols_one_to_four() {
        let w = ols_weights(1, 4).unwrap();
        let expect = [-0.3, -0.1, 0.1, 0.3];
        for (a, b) in w.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ols_two_point() {
        let w = ols_weights(1, 2).unwrap();
        assert_eq!(w.as_slice(), &[-1.0, 1.0]);
        assert!(ols_weights(3, 3).is_err());
        assert!(ols_weights(4, 2).is_err());
    }

    #[test]
    fn ols_constraints_hold_on_all_ranges() {
        for j1 in 1..12 {
            for j2 in j1 + 1..=12 {
                let (r0, r1) = ols_weights(j1, j2).unwrap().constraint_residuals();
                assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12, "({j1},{j2}) -> {r0} {r1}");
            }
        }
    }

    #[test]
    fn affine_leaders_give_exact_slope() {
        let stack = affine_stack(6, 5, 1, 4, 1.0);
        let h = estimate_h(&stack, &ols_weights(1, 4).unwrap()).unwrap();
        for r in 0..6 {
            for c in 0..5 {
                let expect = 0.1 * r as f64 + 0.7 - 1.0;
                assert!((h[(r, c)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scale_shift_moves_estimate_by_weight() {
        let mut stack = affine_stack(4, 4, 1, 4, 1.0);
        let w = ols_weights(1, 4).unwrap();
        let before = estimate_h(&stack, &w).unwrap();
        stack.shift_scale(3, 2.5);
        let after = estimate_h(&stack, &w).unwrap();
        for (a, b) in after.as_slice().iter().zip(before.as_slice()) {
            assert!((a - b - 2.5 * w.at(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn range_mismatch_is_an_error() {
        let stack = affine_stack(4, 4, 1, 3, 1.0);
        assert!(estimate_h(&stack, &ols_weights(1, 4).unwrap()).is_err());
    }

    #[test]
    fn kernel_normalized() {
        for sigma in [0.3, 1.0, 2.5, 10.0] {
            let k = gaussian_kernel_1d(sigma).unwrap();
            assert_eq!(k.len(), 2 * (4.0f64 * sigma).ceil() as usize + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert!(gaussian_kernel_1d(0.0).is_err());
        assert!(gaussian_kernel_1d(-1.0).is_err());
    }

    #[test]
    fn smoothing_constant_is_identity() {
        let f = Field2D::filled(16, 16, 0.62);
        let s = gaussian_smooth(&f, 3.0).unwrap();
        assert!(s.as_slice().iter().all(|v| (v - 0.62).abs() < 1e-12));
    }

    #[test]
    fn smoothing_impulse_gives_kernel() {
        let n = 33;
        let mut f = Field2D::zeros(n, n);
        f[(16, 16)] = 1.0;
        let sigma = 2.0;
        let s = gaussian_smooth(&f, sigma).unwrap();
        let k = gaussian_kernel_1d(sigma).unwrap();
        let center = k[k.len() / 2];
        assert!((s[(16, 16)] - center * center).abs() < 1e-15);
        assert!((s[(16, 19)] - center * k[k.len() / 2 + 3]).abs() < 1e-15);
        assert!((s.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_commutes_with_offset() {
        let f = Field2D::from_fn(20, 12, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.1);
        let a = gaussian_smooth(&f.map(|v| v + 0.3), 1.5).unwrap();
        let b = gaussian_smooth(&f, 1.5).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn region_reestimate_per_label() {
        // Label 0 on the left half with slope 0.5 + gamma, label 1 on the right with 0.8 + gamma.
        let gamma = 1.0;
        let grids = (1..=4)
            .map(|j| {
                Field2D::from_fn(4, 4, |r, c| {
                    let slope = if c < 2 { 1.5 } else { 1.8 };
                    j as f64 * slope + r as f64
                })
            })
            .collect();
        let stack = LeaderStack::from_parts(1, gamma, grids).unwrap();
        let labels = (0..16).map(|i| if i % 4 < 2 { 0 } else { 1 }).collect();
        let mask = LabelMask::new(4, 4, labels, 3).unwrap();
        let est = region_average_reestimate(&stack, &mask, &ols_weights(1, 4).unwrap()).unwrap();
        assert!((est[0].unwrap() - 0.5).abs() < 1e-12);
        assert!((est[1].unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(est[2], None);
    }
}
