//! Slow, generic reference computations for the closed forms and solvers.
//! Shared by the oracle tests and the acceptance run.

use fracseg_core::proxcore::{prox_dist, prox_l21, GradPair, HyperplaneSpec};
use fracseg_core::segmenters::{tv_denoise, tv_objective, SolverConfig};
use fracseg_core::Field2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimizes a convex function of one variable on `[lo, hi]` by golden sections.
pub fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// Subgradient descent on the primal TV problem. The objective is 1-strongly
/// convex, so steps 2/(k+2) with k-weighted averaging converge at rate 1/k.
pub fn tv_subgradient_reference(hhat: &Field2D, lambda: f64, iters: usize) -> f64 {
    let (rows, cols) = hhat.shape();
    let f = hhat.as_slice();
    let mut h = f.to_vec();
    let mut avg = h.clone();
    let mut wsum = 0.0;
    let mut g = vec![0.0; rows * cols];
    let objective = |h: &[f64]| tv_objective(hhat, &Field2D::new(rows, cols, h.to_vec()).unwrap(), lambda).unwrap();
    let mut best = objective(&h);
    for k in 0..iters {
        g.iter_mut().zip(f).zip(&h).for_each(|((g, f), h)| *g = h - f);
        for i in 0..rows - 1 {
            for j in 0..cols - 1 {
                let p = (i + 1) * cols + j + 1;
                let d1 = h[p] - h[p - 1];
                let d2 = h[p] - h[p - cols];
                let norm = (d1 * d1 + d2 * d2).sqrt();
                if norm > 0.0 {
                    let (s1, s2) = (lambda * d1 / norm, lambda * d2 / norm);
                    g[p] += s1 + s2;
                    g[p - 1] -= s1;
                    g[p - cols] -= s2;
                }
            }
        }
        let step = 2.0 / (k as f64 + 2.0);
        h.iter_mut().zip(&g).for_each(|(v, d)| *v -= step * d);
        let w = k as f64 + 1.0;
        wsum += w;
        avg.iter_mut().zip(&h).for_each(|(a, v)| *a += (w / wsum) * (v - *a));
        if k % 1000 == 999 {
            best = best.min(objective(&h)).min(objective(&avg));
        }
    }
    best.min(objective(&avg))
}

/// Applies the adjoint of the interior forward-difference gradient.
fn grad_adjoint(q1: &[f64], q2: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let e = i * (cols - 1) + j;
            let p = (i + 1) * cols + j + 1;
            out[p] += q1[e] + q2[e];
            out[p - 1] -= q1[e];
            out[p - cols] -= q2[e];
        }
    }
    out
}

/// Accelerated projected ascent on the TV dual; returns the best dual value,
/// which lower-bounds the primal optimum for any feasible dual point.
pub fn tv_dual_lower_bound(hhat: &Field2D, lambda: f64, iters: usize) -> f64 {
    let (rows, cols) = hhat.shape();
    let f = hhat.as_slice();
    let m = (rows - 1) * (cols - 1);
    let (mut q1, mut q2) = (vec![0.0; m], vec![0.0; m]);
    let (mut y1, mut y2) = (q1.clone(), q2.clone());
    let mut t = 1.0f64;
    let dual = |q1: &[f64], q2: &[f64]| {
        let a = grad_adjoint(q1, q2, rows, cols);
        let ff: f64 = f.iter().map(|v| v * v).sum();
        let rr: f64 = f.iter().zip(&a).map(|(v, w)| (v - w) * (v - w)).sum();
        0.5 * ff - 0.5 * rr
    };
    let mut best = dual(&q1, &q2);
    for _ in 0..iters {
        let a = grad_adjoint(&y1, &y2, rows, cols);
        let h: Vec<f64> = f.iter().zip(&a).map(|(v, w)| v - w).collect();
        let (prev1, prev2) = (q1.clone(), q2.clone());
        for i in 0..rows - 1 {
            for j in 0..cols - 1 {
                let e = i * (cols - 1) + j;
                let p = (i + 1) * cols + j + 1;
                let a1 = y1[e] + (h[p] - h[p - 1]) / 8.0;
                let a2 = y2[e] + (h[p] - h[p - cols]) / 8.0;
                let s = ((a1 * a1 + a2 * a2).sqrt() / lambda).max(1.0);
                q1[e] = a1 / s;
                q2[e] = a2 / s;
            }
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        for e in 0..m {
            y1[e] = q1[e] + beta * (q1[e] - prev1[e]);
            y2[e] = q2[e] + beta * (q2[e] - prev2[e]);
        }
        t = t_next;
        best = best.max(dual(&q1, &q2));
    }
    best
}

/// Objective values for one random 8x8 TV problem.
#[derive(Debug, Clone, Copy)]
pub struct TvCase {
    pub ours: f64,
    pub reference: f64,
    pub bound: f64,
}

/// Solves `count` random 8x8 problems at lambda = 0.5 three ways.
pub fn tv_cases(count: usize, seed: u64) -> Vec<TvCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolverConfig {
        tol: 1e-12,
        monitor_every: 0,
        ..SolverConfig::default()
    };
    let lambda = 0.5;
    (0..count)
        .map(|_| {
            let hhat = Field2D::from_fn(8, 8, |_, _| rng.random::<f64>());
            let h = tv_denoise(&hhat, lambda, &cfg).unwrap().h;
            TvCase {
                ours: tv_objective(&hhat, &h, lambda).unwrap(),
                reference: tv_subgradient_reference(&hhat, lambda, 1_000_000),
                bound: tv_dual_lower_bound(&hhat, lambda, 20_000),
            }
        })
        .collect()
}

/// Largest coordinate gap between `prox_l21` and a golden search along the
/// ray towards `u`, over `count` random points.
pub fn prox_l21_worst_error(count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let u = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let t = rng.random_range(0.0..3.0);
        let mut pair = GradPair::zeros(1, 1);
        pair.g1.as_mut_slice()[0] = u[0];
        pair.g2.as_mut_slice()[0] = u[1];
        let p = prox_l21(&pair, t).unwrap();
        let got = [p.g1.as_slice()[0], p.g2.as_slice()[0]];

        // Any minimizer lies on the segment from 0 to u: moving off the ray only
        // increases the distance to u for the same norm.
        let norm = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let f = |s: f64| {
            let v = [s * u[0] / norm, s * u[1] / norm];
            0.5 * ((v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2)) + t * s.abs()
        };
        let s = golden(f, 0.0, norm);
        let want = [s * u[0] / norm, s * u[1] / norm];
        for i in 0..2 {
            worst = worst.max((got[i] - want[i]).abs());
        }
    }
    worst
}

/// Worst coordinate gap between `prox_dist` and a golden search along the
/// hyperplane normal, and whether every result is also a local minimum under
/// coordinate perturbations.
pub fn prox_dist_worst_error(count: usize, seed: u64) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs = [
        HyperplaneSpec::zero_sum(4).unwrap(),
        HyperplaneSpec::unit_slope(1, 4).unwrap(),
        HyperplaneSpec::unit_slope(2, 6).unwrap(),
    ];
    let mut worst = 0.0f64;
    let mut local_min = true;
    for i in 0..count {
        let spec = &specs[i % specs.len()];
        let j = spec.dim();
        let u: Vec<f64> = (0..j).map(|_| rng.random_range(-2.0..2.0)).collect();
        let eta = rng.random_range(0.01..3.0);
        let got = prox_dist(&u, spec, eta).unwrap();

        let a = spec.normal();
        let a_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dist = |v: &[f64]| (v.iter().zip(a).map(|(x, y)| x * y).sum::<f64>() - spec.offset()).abs() / a_norm;
        let objective = |v: &[f64]| 0.5 * v.iter().zip(&u).map(|(x, y)| (x - y).powi(2)).sum::<f64>() + eta * dist(v);

        let along = |s: f64| u.iter().zip(a).map(|(x, y)| x + s * y / a_norm).collect::<Vec<f64>>();
        let span = 2.0 * (dist(&u) + eta + 1.0);
        let s = golden(|s| objective(&along(s)), -span, span);
        let want = along(s);
        for k in 0..j {
            worst = worst.max((got[k] - want[k]).abs());
        }
        let base = objective(&got);
        for k in 0..j {
            for delta in [1e-4, -1e-4] {
                let mut v = got.clone();
                v[k] += delta;
                local_min &= objective(&v) >= base - 1e-12;
            }
        }
    }
    (worst, local_min)
}
