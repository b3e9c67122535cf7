use alloc::vec::Vec;

use super::{check_lambda, ChangeMeter, SolveInfo, SolverConfig};
use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::math;
use crate::multiscale::LeaderStack;
use crate::proxcore::{
    grad_adjoint_into, grad_into, project_disc, tv, GradPair, HyperplaneSpec, GRAD_NORM_SQ_BOUND,
};
use crate::regression::ols_weights;

const DIVERGENCE_LIMIT: f64 = 1e12;

/// Per-pixel regression weights `w(j, k)`, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    j1: usize,
    scales: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightField {
    /// The same weight vector at every pixel.
    pub fn uniform(rows: usize, cols: usize, j1: usize, weights: &[f64]) -> Self {
        let mut data = Vec::with_capacity(rows * cols * weights.len());
        for _ in 0..rows * cols {
            data.extend_from_slice(weights);
        }
        Self {
            j1,
            scales: weights.len(),
            rows,
            cols,
            data,
        }
    }

    pub fn j1(&self) -> usize {
        self.j1
    }

    pub fn j2(&self) -> usize {
        self.j1 + self.scales - 1
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Weight vector over scales at pixel `(r, c)`.
    pub fn at(&self, r: usize, c: usize) -> &[f64] {
        let k = r * self.cols + c;
        &self.data[k * self.scales..(k + 1) * self.scales]
    }

    /// Grid of weights at absolute scale `j`.
    pub fn scale_grid(&self, j: usize) -> Field2D {
        let idx = j - self.j1;
        Field2D::from_fn(self.rows, self.cols, |r, c| self.at(r, c)[idx])
    }

    /// Mean over pixels of `|sum_j w(j,k)|` and `|sum_j j w(j,k) - 1|`.
    pub fn mean_constraint_residuals(&self) -> (f64, f64) {
        let n = (self.rows * self.cols) as f64;
        let mut r0 = 0.0;
        let mut r1 = 0.0;
        for w in self.data.chunks_exact(self.scales) {
            let s0: f64 = w.iter().sum();
            let s1: f64 = w.iter().enumerate().map(|(i, v)| (self.j1 + i) as f64 * v).sum();
            r0 += s0.abs();
            r1 += (s1 - 1.0).abs();
        }
        (r0 / n, r1 / n)
    }
}

#[derive(Debug, Clone)]
pub struct TvwResult {
    /// Regularity map in h units (gamma already subtracted).
    pub h: Field2D,
    pub weights: WeightField,
    pub info: SolveInfo,
    /// Primal step actually used.
    pub tau: f64,
}

fn pixel_major(stack: &LeaderStack) -> Vec<f64> {
    let j = stack.num_scales();
    let n = stack.grids()[0].len();
    let mut x = alloc::vec![0.0; n * j];
    for (s, grid) in stack.grids().iter().enumerate() {
        for (k, &v) in grid.as_slice().iter().enumerate() {
            x[k * j + s] = v;
        }
    }
    x
}

/// Objective of the joint problem with `h` given in h units:
/// `sum_k (sum_j w x - (h + gamma))^2 + lambda TV(h) + eta1 sum d_C1 + eta2 sum d_C2`.
pub fn tvw_objective(
    stack: &LeaderStack,
    h: &Field2D,
    w: &WeightField,
    lambda: f64,
    eta1: f64,
    eta2: f64,
) -> Result<f64> {
    h.ensure_shape(stack.shape())?;
    let nj = stack.num_scales();
    let c1 = HyperplaneSpec::zero_sum(nj)?;
    let c2 = HyperplaneSpec::unit_slope(stack.j1(), stack.j2())?;
    let x = pixel_major(stack);
    let gamma = stack.gamma();
    let mut data = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for (k, &hk) in h.as_slice().iter().enumerate() {
        let wk = &w.data[k * nj..(k + 1) * nj];
        let xk = &x[k * nj..(k + 1) * nj];
        let s: f64 = wk.iter().zip(xk).map(|(a, b)| a * b).sum();
        data += (s - hk - gamma) * (s - hk - gamma);
        d1 += c1.distance(wk);
        d2 += c2.distance(wk);
    }
    Ok(data + lambda * tv(h)? + eta1 * d1 + eta2 * d2)
}

/// A hyperplane with a compile-time dimension, for the per-pixel hot loops.
struct Plane<const J: usize> {
    a: [f64; J],
    b: f64,
    inv_norm_sq: f64,
    norm: f64,
}

impl<const J: usize> Plane<J> {
    fn new(spec: &HyperplaneSpec) -> Self {
        let mut a = [0.0; J];
        a.copy_from_slice(spec.normal());
        let norm_sq: f64 = a.iter().map(|v| v * v).sum();
        Self {
            a,
            b: spec.offset(),
            inv_norm_sq: 1.0 / norm_sq,
            norm: math::sqrt(norm_sq),
        }
    }

    /// [`HyperplaneSpec::prox_dist_in_place`] with the norms hoisted out.
    #[inline(always)]
    fn prox_dist(&self, u: &mut [f64; J], eta: f64) {
        let dot: f64 = self.a.iter().zip(u.iter()).map(|(a, x)| a * x).sum();
        let t = (self.b - dot) * self.inv_norm_sq;
        let d = t.abs() * self.norm;
        let frac = if d <= eta { 1.0 } else { eta / d };
        for (x, a) in u.iter_mut().zip(&self.a) {
            *x += frac * t * a;
        }
    }
}

struct Problem<'a> {
    x: &'a [f64],
    c1: &'a HyperplaneSpec,
    c2: &'a HyperplaneSpec,
    rows: usize,
    cols: usize,
    lambda: f64,
    tau: f64,
    cfg: &'a SolverConfig,
}

/// Joint estimation of a piecewise-constant regularity map and per-pixel
/// regression weights by forward-backward primal-dual iterations.
///
/// Starts from the fixed least-squares weights and the corresponding
/// regression estimate. Step sizes: `sigma` from the config and
/// `tau = 0.99 / (1 + L + 8 sigma)` where `L = max_k sum_j log2X(j,k)^2`.
pub fn tvw_joint(stack: &LeaderStack, lambda: f64, cfg: &SolverConfig) -> Result<TvwResult> {
    check_lambda(lambda)?;
    cfg.validate()?;
    let (rows, cols) = stack.shape();
    if rows < 2 || cols < 2 {
        return Err(Error::Shape(alloc::format!("{rows}x{cols} grid is too small")));
    }
    let nj = stack.num_scales();
    let ols = ols_weights(stack.j1(), stack.j2())?;
    let c1 = HyperplaneSpec::zero_sum(nj)?;
    let c2 = HyperplaneSpec::unit_slope(stack.j1(), stack.j2())?;
    let x = pixel_major(stack);

    let curvature = x
        .chunks_exact(nj)
        .map(|xk| xk.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let tau = 0.99 / (1.0 + curvature + GRAD_NORM_SQ_BOUND * cfg.sigma);

    let mut w = WeightField::uniform(rows, cols, stack.j1(), ols.as_slice());
    let mut h = Field2D::from_fn(rows, cols, |r, c| {
        let k = r * cols + c;
        w.data[k * nj..(k + 1) * nj]
            .iter()
            .zip(&x[k * nj..(k + 1) * nj])
            .map(|(a, b)| a * b)
            .sum()
    });

    let gamma = stack.gamma();
    let objective = |h: &Field2D, w: &WeightField| -> Result<f64> {
        tvw_objective(stack, &h.map(|v| v - gamma), w, lambda, cfg.eta1, cfg.eta2)
    };
    let mut info = SolveInfo::default();
    if cfg.monitor_every > 0 {
        info.objective_trace.push(objective(&h, &w)?);
    }

    let problem = Problem {
        x: &x,
        c1: &c1,
        c2: &c2,
        rows,
        cols,
        lambda,
        tau,
        cfg,
    };
    let mut monitor = |h: &Field2D, w: &[f64]| -> Result<f64> {
        let field = WeightField {
            j1: stack.j1(),
            scales: nj,
            rows,
            cols,
            data: w.to_vec(),
        };
        objective(h, &field)
    };
    macro_rules! dispatch {
        ($($n:literal)*) => {
            match nj {
                $($n => iterate::<$n>(&problem, &mut h, &mut w.data, &mut info, &mut monitor)?,)*
                _ => return Err(crate::error::param("stack", alloc::format!("{nj} scales is more than 16"))),
            }
        };
    }
    dispatch!(2 3 4 5 6 7 8 9 10 11 12 13 14 15 16);

    if cfg.monitor_every > 0 && info.iterations % cfg.monitor_every != 0 {
        info.objective_trace.push(objective(&h, &w)?);
    }

    Ok(TvwResult {
        h: h.map(|v| v - gamma),
        weights: w,
        info,
        tau,
    })
}

fn iterate<const J: usize>(
    p: &Problem,
    h: &mut Field2D,
    w: &mut Vec<f64>,
    info: &mut SolveInfo,
    monitor: &mut dyn FnMut(&Field2D, &[f64]) -> Result<f64>,
) -> Result<()> {
    let (rows, cols, tau, cfg) = (p.rows, p.cols, p.tau, p.cfg);
    let (sigma, eta1, eta2) = (cfg.sigma, cfg.eta1, cfg.eta2);
    let (c1, c2) = (Plane::<J>::new(p.c1), Plane::<J>::new(p.c2));
    let (x, _) = p.x.as_chunks::<J>();
    let n = rows * cols;

    let mut u = alloc::vec![[0.0; J]; n];
    let mut y = GradPair::for_field(rows, cols);
    let mut h_next = Field2D::zeros(rows, cols);
    let mut w_next = alloc::vec![0.0; n * J];
    let mut h_bar = Field2D::zeros(rows, cols);
    let mut adj = Field2D::zeros(rows, cols);
    let mut g = GradPair::for_field(rows, cols);

    for it in 1..=cfg.max_iter {
        grad_adjoint_into(&y, &mut adj);
        let mut meter = ChangeMeter::default();
        let (wv, _) = w.as_chunks::<J>();
        let (wn, _) = w_next.as_chunks_mut::<J>();

        // Gradient steps on h and w, then the prox of tau*eta1*d_C1 per pixel.
        for k in 0..n {
            let (wk, xk, uk) = (&wv[k], &x[k], &u[k]);
            let hk = h.as_slice()[k];
            let s: f64 = wk.iter().zip(xk).map(|(a, b)| a * b).sum();
            let resid = s - hk;

            let hn = hk - tau * adj.as_slice()[k] + 2.0 * tau * resid;
            h_next.as_mut_slice()[k] = hn;
            meter.observe(hk, hn);

            let out = &mut wn[k];
            for j in 0..J {
                out[j] = wk[j] - tau * uk[j] - 2.0 * tau * resid * xk[j];
            }
            if eta1 > 0.0 {
                c1.prox_dist(out, tau * eta1);
            }
            for j in 0..J {
                meter.observe(wk[j], out[j]);
            }
        }

        // Dual step for lambda*TV via the Moreau identity: projection onto the radius-lambda disc.
        for ((b, &hn), &ho) in h_bar
            .as_mut_slice()
            .iter_mut()
            .zip(h_next.as_slice())
            .zip(h.as_slice())
        {
            *b = 2.0 * hn - ho;
        }
        grad_into(&h_bar, &mut g);
        for ((y1, y2), (d1, d2)) in y
            .g1
            .as_mut_slice()
            .iter_mut()
            .zip(y.g2.as_mut_slice().iter_mut())
            .zip(g.g1.as_slice().iter().zip(g.g2.as_slice()))
        {
            let [a, b] = project_disc([*y1 + sigma * d1, *y2 + sigma * d2], p.lambda);
            *y1 = a;
            *y2 = b;
        }

        // Dual step for eta2*d_C2: u = q - sigma * prox_{(eta2/sigma) d_C2}(q / sigma).
        let inv_sigma = 1.0 / sigma;
        for ((uk, wn), wo) in u.iter_mut().zip(wn.iter()).zip(wv) {
            let mut scratch = [0.0; J];
            for j in 0..J {
                uk[j] += sigma * (2.0 * wn[j] - wo[j]);
                scratch[j] = uk[j] * inv_sigma;
            }
            if eta2 > 0.0 {
                c2.prox_dist(&mut scratch, eta2 / sigma);
            }
            for j in 0..J {
                uk[j] -= sigma * scratch[j];
            }
        }

        core::mem::swap(h, &mut h_next);
        core::mem::swap(w, &mut w_next);

        info.iterations = it;
        info.final_change = meter.relative();
        if !(meter.magnitude() < DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                iterations: it,
                tau,
                sigma,
            });
        }
        if cfg.monitor_every > 0 && it % cfg.monitor_every == 0 {
            info.objective_trace.push(monitor(h, w)?);
        }
        // The duals start at zero, so the first primal step can be a no-op.
        if it > 1 && info.final_change < cfg.tol {
            info.converged = true;
            break;
        }
    }
    Ok(())
}
