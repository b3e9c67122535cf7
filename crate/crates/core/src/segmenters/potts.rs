use alloc::vec::Vec;

use super::{ChangeMeter, SolveInfo, SolverConfig};
use crate::error::{param, Result};
use crate::field::{Field2D, LabelMask};
use crate::proxcore::{grad_adjoint_into, grad_into, order_pair, project_disc, GradPair};

/// Ordered level variables `theta_1..theta_{Q-1}` of the relaxed Potts model.
///
/// `theta_0 = 1` and `theta_Q = 0` are implicit. Class `q` (1-based) at a pixel
/// is encoded by `theta_{q-1} - theta_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaStack {
    q: u32,
    thetas: Vec<Field2D>,
}

impl ThetaStack {
    pub fn new(q: u32, thetas: Vec<Field2D>) -> Result<Self> {
        if q < 1 || thetas.len() + 1 != q as usize {
            return Err(param("thetas", "need exactly Q - 1 level grids"));
        }
        if let Some(first) = thetas.first() {
            for t in &thetas {
                t.ensure_shape(first.shape())?;
            }
        }
        Ok(Self { q, thetas })
    }

    /// Binary encoding of a label mask (label `l` is class `l + 1`).
    pub fn from_mask(mask: &LabelMask) -> Self {
        let (rows, cols) = mask.shape();
        let thetas = (1..mask.q())
            .map(|q| Field2D::from_fn(rows, cols, |r, c| if mask.get(r, c) >= q { 1.0 } else { 0.0 }))
            .collect();
        Self { q: mask.q(), thetas }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// `theta_q` for `1 <= q <= Q-1`.
    pub fn theta(&self, q: usize) -> &Field2D {
        &self.thetas[q - 1]
    }

    pub fn thetas(&self) -> &[Field2D] {
        &self.thetas
    }

    /// `theta_q` at pixel index `k`, including the fixed end levels.
    #[inline]
    fn level(&self, q: usize, k: usize) -> f64 {
        if q == 0 {
            1.0
        } else if q == self.q as usize {
            0.0
        } else {
            self.thetas[q - 1].as_slice()[k]
        }
    }

    /// Largest violation of `0 <= theta_q <= 1` and of the ordering.
    pub fn feasibility_violation(&self) -> f64 {
        let Some(first) = self.thetas.first() else {
            return 0.0;
        };
        let mut worst = 0.0f64;
        for k in 0..first.len() {
            for q in 1..=self.q as usize {
                let hi = self.level(q - 1, k);
                let lo = self.level(q, k);
                worst = worst.max(lo - hi).max(-lo).max(lo - 1.0);
            }
        }
        worst
    }

    /// Fraction of pixels whose every level is within `tol` of 0 or 1.
    pub fn binary_fraction(&self, tol: f64) -> f64 {
        let Some(first) = self.thetas.first() else {
            return 1.0;
        };
        let n = first.len();
        let hits = (0..n)
            .filter(|&k| {
                self.thetas.iter().all(|t| {
                    let v = t.as_slice()[k];
                    v.abs() <= tol || (1.0 - v).abs() <= tol
                })
            })
            .count();
        hits as f64 / n as f64
    }
}

/// Label of each pixel: the class `q` maximizing `theta_{q-1} - theta_q`,
/// ties to the smaller `q`. Returned labels are 0-based (`q - 1`).
pub fn extract_labels(theta: &ThetaStack) -> Result<LabelMask> {
    let Some(first) = theta.thetas.first() else {
        return Err(param("theta", "Q = 1 stack carries no grid shape"));
    };
    let (rows, cols) = first.shape();
    let q = theta.q as usize;
    let labels = (0..rows * cols)
        .map(|k| {
            let mut best = 0usize;
            let mut best_val = f64::NEG_INFINITY;
            for class in 1..=q {
                let v = theta.level(class - 1, k) - theta.level(class, k);
                if v > best_val {
                    best_val = v;
                    best = class - 1;
                }
            }
            best as u32
        })
        .collect();
    LabelMask::new(rows, cols, labels, theta.q)
}

#[derive(Debug, Clone)]
pub struct PottsResult {
    pub theta: ThetaStack,
    pub labels: LabelMask,
    /// Class means in increasing class order.
    pub means: Vec<f64>,
    /// Inner-solver record of the last outer round; `iterations` sums all rounds.
    pub info: SolveInfo,
    pub outer_rounds: usize,
    /// True when the mean updates stabilized within `outer_tol`.
    pub outer_converged: bool,
    /// Classes that came out empty in some round (their mean was kept).
    pub empty_classes: Vec<u32>,
}

struct PottsState {
    thetas: Vec<Field2D>,
    ys: Vec<GradPair>,
    zs: Vec<Field2D>,
}

/// Whether the ordering pair `(theta_{q-1}, theta_q)` involves two free
/// levels. Pairs touching the fixed ends reduce to the box constraint.
#[inline]
fn active_pair(q: usize, classes: usize) -> bool {
    q >= 2 && q < classes
}

fn costs(hhat: &Field2D, means: &[f64], variances: &[f64]) -> Vec<Field2D> {
    means
        .iter()
        .zip(variances)
        .map(|(&mu, &var)| hhat.map(|v| (v - mu) * (v - mu) / (2.0 * var)))
        .collect()
}

/// Relaxed Potts objective (data term plus `lambda` times the TV of each level).
fn objective(theta: &ThetaStack, ell: &[Field2D], lambda: f64) -> f64 {
    let n = ell[0].len();
    let q = theta.q as usize;
    let mut data = 0.0;
    for k in 0..n {
        for class in 1..=q {
            data += (theta.level(class - 1, k) - theta.level(class, k)) * ell[class - 1].as_slice()[k];
        }
    }
    let reg: f64 = theta
        .thetas
        .iter()
        .map(|t| crate::proxcore::tv(t).unwrap_or(0.0))
        .sum();
    data + lambda * reg
}

/// One run of the primal-dual solver with fixed class costs, warm-started from `state`.
fn solve_inner(
    state: &mut PottsState,
    ell: &[Field2D],
    lambda: f64,
    cfg: &SolverConfig,
    q: usize,
) -> SolveInfo {
    let (rows, cols) = ell[0].shape();
    let n = rows * cols;
    let sigma = cfg.sigma;
    // ||L||^2 <= ||grad||^2 + 1 for L = (grad, identity) acting on each level.
    let tau = 0.99 / (9.0 * sigma);
    let levels = q - 1;

    let mut prev: Vec<Field2D> = state.thetas.clone();
    let mut adj = Field2D::zeros(rows, cols);
    let mut bar = Field2D::zeros(rows, cols);
    let mut g = GradPair::for_field(rows, cols);
    let mut info = SolveInfo::default();
    let snapshot = |thetas: &[Field2D]| ThetaStack {
        q: q as u32,
        thetas: thetas.to_vec(),
    };
    if cfg.monitor_every > 0 {
        info.objective_trace.push(objective(&snapshot(&state.thetas), ell, lambda));
    }

    for it in 1..=cfg.max_iter {
        for (p, t) in prev.iter_mut().zip(&state.thetas) {
            p.as_mut_slice().copy_from_slice(t.as_slice());
        }

        // Primal: gradient of the linear data term, dual feedback, box projection.
        for lvl in 1..=levels {
            grad_adjoint_into(&state.ys[lvl - 1], &mut adj);
            let theta = state.thetas[lvl - 1].as_mut_slice();
            let z = state.zs[lvl - 1].as_slice();
            let lo = ell[lvl - 1].as_slice();
            let hi = ell[lvl].as_slice();
            for k in 0..n {
                let v = theta[k] - tau * (hi[k] - lo[k]) - tau * z[k] - tau * adj.as_slice()[k];
                theta[k] = v.clamp(0.0, 1.0);
            }
        }
        // Odd ordering constraints in the primal.
        for pair in (1..=q).step_by(2).filter(|&p| active_pair(p, q)) {
            let (left, right) = state.thetas.split_at_mut(pair - 1);
            let upper = left[pair - 2].as_mut_slice();
            let lower = right[0].as_mut_slice();
            for (a, b) in upper.iter_mut().zip(lower.iter_mut()) {
                let (x, y) = order_pair(*a, *b);
                *a = x;
                *b = y;
            }
        }

        // Dual: TV of each level, and the identity copies for the even constraints.
        for lvl in 1..=levels {
            let theta = state.thetas[lvl - 1].as_slice();
            let old = prev[lvl - 1].as_slice();
            for ((b, &t), &o) in bar.as_mut_slice().iter_mut().zip(theta).zip(old) {
                *b = 2.0 * t - o;
            }
            grad_into(&bar, &mut g);
            let y = &mut state.ys[lvl - 1];
            for ((y1, y2), (d1, d2)) in y
                .g1
                .as_mut_slice()
                .iter_mut()
                .zip(y.g2.as_mut_slice().iter_mut())
                .zip(g.g1.as_slice().iter().zip(g.g2.as_slice()))
            {
                let [a, b] = project_disc([*y1 + sigma * d1, *y2 + sigma * d2], lambda);
                *y1 = a;
                *y2 = b;
            }
            let z = state.zs[lvl - 1].as_mut_slice();
            for (zk, &bk) in z.iter_mut().zip(bar.as_slice()) {
                *zk += sigma * bk;
            }
        }
        let mut paired = alloc::vec![false; levels];
        for pair in (2..=q).step_by(2).filter(|&p| active_pair(p, q)) {
            paired[pair - 2] = true;
            paired[pair - 1] = true;
            let (left, right) = state.zs.split_at_mut(pair - 1);
            let upper = left[pair - 2].as_mut_slice();
            let lower = right[0].as_mut_slice();
            for (a, b) in upper.iter_mut().zip(lower.iter_mut()) {
                // z - sigma * P(z / sigma) for the half-plane a >= b.
                let (pa, pb) = order_pair(*a / sigma, *b / sigma);
                *a -= sigma * pa;
                *b -= sigma * pb;
            }
        }
        // Levels without an active even constraint carry the zero function: z = 0.
        for (z, used) in state.zs.iter_mut().zip(&paired) {
            if !used {
                z.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
            }
        }

        let mut meter = ChangeMeter::default();
        for (t, p) in state.thetas.iter().zip(&prev) {
            for (&new, &old) in t.as_slice().iter().zip(p.as_slice()) {
                meter.observe(old, new);
            }
        }
        info.iterations = it;
        info.final_change = meter.relative();
        if cfg.monitor_every > 0 && it % cfg.monitor_every == 0 {
            info.objective_trace.push(objective(&snapshot(&state.thetas), ell, lambda));
        }
        // The duals start at zero, so the first primal step can be a no-op.
        if it > 1 && info.final_change < cfg.tol {
            info.converged = true;
            break;
        }
    }
    info
}

/// Labels by nearest class mean under the Gaussian costs (ties to the smaller class).
fn nearest_mean_mask(hhat: &Field2D, means: &[f64], variances: &[f64]) -> Result<LabelMask> {
    let labels = hhat
        .as_slice()
        .iter()
        .map(|&v| {
            let mut best = 0usize;
            let mut best_cost = f64::INFINITY;
            for (i, (&mu, &var)) in means.iter().zip(variances).enumerate() {
                let cost = (v - mu) * (v - mu) / (2.0 * var);
                if cost < best_cost {
                    best_cost = cost;
                    best = i;
                }
            }
            best as u32
        })
        .collect();
    LabelMask::new(hhat.rows(), hhat.cols(), labels, means.len() as u32)
}

/// Relaxed-Potts segmentation of a regularity map into `q` classes.
///
/// Class means start equidistant on `[min, max]` of `hhat` (endpoints
/// included) and are re-estimated from the labeled regions between solves.
/// Levels are initialized from the nearest-mean labeling and each round
/// warm-starts from the previous one. `lambda = 0` is accepted and yields the
/// uncoupled per-pixel solution.
pub fn potts_segment(hhat: &Field2D, q: u32, lambda: f64, cfg: &SolverConfig) -> Result<PottsResult> {
    cfg.validate()?;
    hhat.check_finite()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(param("lambda", "must be >= 0"));
    }
    if q == 0 {
        return Err(param("q", "at least one class is required"));
    }
    let (rows, cols) = hhat.shape();
    let classes = q as usize;
    let variances: Vec<f64> = match &cfg.variances {
        Some(v) if v.len() == classes => v.clone(),
        Some(_) => return Err(param("variances", "need one variance per class")),
        None => alloc::vec![0.5; classes],
    };
    if q == 1 {
        return Ok(PottsResult {
            theta: ThetaStack { q, thetas: Vec::new() },
            labels: LabelMask::uniform(rows, cols, 1),
            means: alloc::vec![hhat.mean()],
            info: SolveInfo {
                converged: true,
                ..SolveInfo::default()
            },
            outer_rounds: 0,
            outer_converged: true,
            empty_classes: Vec::new(),
        });
    }
    if rows < 2 || cols < 2 {
        return Err(param("hhat", "need at least a 2x2 map"));
    }

    let (lo, hi) = (hhat.min(), hhat.max());
    let mut means: Vec<f64> = (0..classes)
        .map(|i| lo + (hi - lo) * i as f64 / (classes - 1) as f64)
        .collect();

    let init = ThetaStack::from_mask(&nearest_mean_mask(hhat, &means, &variances)?);
    let mut state = PottsState {
        thetas: init.thetas,
        ys: (1..classes).map(|_| GradPair::for_field(rows, cols)).collect(),
        zs: (1..classes).map(|_| Field2D::zeros(rows, cols)).collect(),
    };

    let mut total_iterations = 0usize;
    let mut info;
    let mut outer_rounds = 0usize;
    let mut outer_converged = false;
    let mut empty_classes = Vec::new();
    let mut labels;
    loop {
        let ell = costs(hhat, &means, &variances);
        info = solve_inner(&mut state, &ell, lambda, cfg, classes);
        total_iterations += info.iterations;
        outer_rounds += 1;

        let theta = ThetaStack {
            q,
            thetas: state.thetas.clone(),
        };
        labels = extract_labels(&theta)?;

        let mut sums = alloc::vec![0.0; classes];
        let counts = labels.counts();
        for (&l, &v) in labels.labels().iter().zip(hhat.as_slice()) {
            sums[l as usize] += v;
        }
        let mut shift = 0.0f64;
        for (c, mu) in means.iter_mut().enumerate() {
            if counts[c] == 0 {
                if !empty_classes.contains(&(c as u32)) {
                    empty_classes.push(c as u32);
                }
                continue;
            }
            let new = sums[c] / counts[c] as f64;
            shift = shift.max((new - *mu).abs());
            *mu = new;
        }
        if shift < cfg.outer_tol {
            outer_converged = true;
            break;
        }
        if outer_rounds >= cfg.outer_max {
            break;
        }
    }
    info.iterations = total_iterations;

    Ok(PottsResult {
        theta: ThetaStack {
            q,
            thetas: state.thetas,
        },
        labels,
        means,
        info,
        outer_rounds,
        outer_converged,
        empty_classes,
    })
}

/// Runs the inner solver once with fixed class means, starting from `theta`
/// with zero duals.
pub fn potts_inner(
    hhat: &Field2D,
    theta: &ThetaStack,
    means: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<(ThetaStack, SolveInfo)> {
    cfg.validate()?;
    hhat.check_finite()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(param("lambda", "must be >= 0"));
    }
    let classes = theta.q as usize;
    if means.len() != classes || classes < 2 {
        return Err(param("means", "need one mean per class and at least two classes"));
    }
    for t in &theta.thetas {
        t.ensure_shape(hhat.shape())?;
    }
    let variances = match &cfg.variances {
        Some(v) if v.len() == classes => v.clone(),
        Some(_) => return Err(param("variances", "need one variance per class")),
        None => alloc::vec![0.5; classes],
    };
    let (rows, cols) = hhat.shape();
    let mut state = PottsState {
        thetas: theta.thetas.clone(),
        ys: (1..classes).map(|_| GradPair::for_field(rows, cols)).collect(),
        zs: (1..classes).map(|_| Field2D::zeros(rows, cols)).collect(),
    };
    let info = solve_inner(&mut state, &costs(hhat, means, &variances), lambda, cfg, classes);
    Ok((
        ThetaStack {
            q: theta.q,
            thetas: state.thetas,
        },
        info,
    ))
}
