//! Segmentation procedures built on the regularity map.
//!
//! * [`tv_denoise`]: TV denoising of a precomputed estimate, solved by
//!   forward-backward iterations on the dual.
//! * [`tvw_joint`]: joint estimation of a piecewise-constant regularity map
//!   and spatially varying regression weights directly from log-leaders.
//! * [`potts_segment`]: direct labeling through the convex relaxation of the
//!   Potts model with alternating class-mean updates.
//! * [`threshold_histogram`]: labels from the minima of a smoothed histogram,
//!   used after smoothing, TV and joint estimation.

use alloc::vec::Vec;

use crate::error::{param, Result};

mod potts;
mod threshold;
mod tv;
mod tvw;

pub use potts::{extract_labels, potts_inner, potts_segment, PottsResult, ThetaStack};
pub use threshold::{threshold_histogram, ThresholdResult};
pub use tv::{tv_denoise, tv_objective, TvResult};
pub use tvw::{tvw_joint, tvw_objective, TvwResult, WeightField};

/// Parameters shared by the iterative solvers. The regularization weight
/// `lambda` is passed to each solver separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Penalty on the distance of each weight vector to `sum_j w(j) = 0`.
    pub eta1: f64,
    /// Penalty on the distance of each weight vector to `sum_j j w(j) = 1`.
    pub eta2: f64,
    /// Dual step size of the primal-dual solvers.
    pub sigma: f64,
    /// Iteration cap for TV denoising.
    pub tv_max_iter: usize,
    /// Iteration cap for the primal-dual solvers (joint estimation, Potts inner loop).
    pub max_iter: usize,
    /// Stop when the sup-norm change of the primal iterates, relative to their
    /// sup norm, falls below this.
    pub tol: f64,
    /// Cap on class-mean re-estimation rounds.
    pub outer_max: usize,
    /// Stop the class-mean rounds when no mean moves more than this.
    pub outer_tol: f64,
    /// Per-class variances of the Gaussian costs; `None` means 1/2 for every class.
    pub variances: Option<Vec<f64>>,
    /// Histogram bins for thresholding.
    pub hist_bins: usize,
    /// Gaussian smoothing bandwidth of the histogram, in bins.
    pub hist_smooth: f64,
    /// Record the objective every this many iterations (0 disables).
    pub monitor_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta1: 1000.0,
            eta2: 1000.0,
            sigma: 1.0,
            tv_max_iter: 100_000,
            max_iter: 20_000,
            tol: 1e-5,
            outer_max: 20,
            outer_tol: 1e-4,
            variances: None,
            hist_bins: 128,
            hist_smooth: 3.0,
            monitor_every: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta1 >= 0.0 && self.eta1.is_finite()) {
            return Err(param("eta1", "must be finite and >= 0"));
        }
        if !(self.eta2 >= 0.0 && self.eta2.is_finite()) {
            return Err(param("eta2", "must be finite and >= 0"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(param("sigma", "must be > 0"));
        }
        if !(self.tol > 0.0) {
            return Err(param("tol", "must be > 0"));
        }
        if !(self.outer_tol > 0.0) {
            return Err(param("outer_tol", "must be > 0"));
        }
        if self.hist_bins < 3 {
            return Err(param("hist_bins", "need at least 3 bins"));
        }
        if !(self.hist_smooth >= 0.0) {
            return Err(param("hist_smooth", "must be >= 0"));
        }
        if let Some(v) = &self.variances {
            if v.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(param("variances", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Convergence record of an iterative solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveInfo {
    pub iterations: usize,
    pub converged: bool,
    /// Last relative iterate change.
    pub final_change: f64,
    /// Objective sampled every `monitor_every` iterations, starting at iteration 0.
    pub objective_trace: Vec<f64>,
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(param("lambda", "must be > 0"));
    }
    Ok(())
}

/// Accumulates `max |new - old|` and `max |new|` over several arrays.
#[derive(Default)]
pub(crate) struct ChangeMeter {
    diff: f64,
    scale: f64,
}

impl ChangeMeter {
    #[inline]
    pub(crate) fn observe(&mut self, old: f64, new: f64) {
        self.diff = self.diff.max((new - old).abs());
        self.scale = self.scale.max(new.abs());
    }

    pub(crate) fn relative(&self) -> f64 {
        if self.diff == 0.0 {
            0.0
        } else {
            self.diff / self.scale.max(f64::MIN_POSITIVE)
        }
    }

    pub(crate) fn magnitude(&self) -> f64 {
        self.scale
    }
}
