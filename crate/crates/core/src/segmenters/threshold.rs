use alloc::vec::Vec;

use super::SolverConfig;
use crate::error::{param, Result};
use crate::field::{Field2D, LabelMask};
use crate::scoring::histogram;

#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub mask: LabelMask,
    /// Ascending thresholds; a value `v` gets the label `#{t : v > t}`.
    pub thresholds: Vec<f64>,
    /// Set when the map was constant and could not be split.
    pub degenerate: bool,
    /// Number of thresholds that had to fall back to the largest peak.
    pub fallback_thresholds: usize,
}

fn smooth_counts(counts: &[usize], bandwidth: f64) -> Vec<f64> {
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    if bandwidth <= 0.0 {
        return raw;
    }
    let radius = libm::ceil(4.0 * bandwidth) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|t| libm::exp(-((t * t) as f64) / (2.0 * bandwidth * bandwidth)))
        .collect();
    let norm: f64 = taps.iter().sum();
    let n = raw.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let idx = i + t as isize - radius;
                if (0..n).contains(&idx) {
                    acc += w * raw[idx as usize];
                }
            }
            acc / norm
        })
        .collect()
}

/// Interior local minima as `(bin position, depth)`. Plateaus count once,
/// positioned at their midpoint; depth is the height of the lower of the two
/// surrounding maxima above the minimum.
fn local_minima(hist: &[f64]) -> Vec<(f64, f64)> {
    let n = hist.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && hist[end + 1] == hist[start] {
            end += 1;
        }
        if start > 0 && end + 1 < n && hist[start - 1] > hist[start] && hist[end + 1] > hist[start] {
            let left = hist[..start].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let right = hist[end + 1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.push(((start + end) as f64 / 2.0, left.min(right) - hist[start]));
        }
        start = end + 1;
    }
    out
}

/// Labels from the deepest minima of the smoothed histogram of `h`.
///
/// Uses `cfg.hist_bins` uniform bins on `[min, max]` smoothed by a Gaussian of
/// `cfg.hist_smooth` bins. When fewer than `q - 1` minima exist the remaining
/// thresholds sit at the highest peak.
pub fn threshold_histogram(h: &Field2D, q: u32, cfg: &SolverConfig) -> Result<ThresholdResult> {
    if q == 0 {
        return Err(param("q", "at least one class is required"));
    }
    cfg.validate()?;
    h.check_finite()?;
    let (rows, cols) = h.shape();
    if q == 1 {
        return Ok(ThresholdResult {
            mask: LabelMask::uniform(rows, cols, 1),
            thresholds: Vec::new(),
            degenerate: false,
            fallback_thresholds: 0,
        });
    }
    let (lo, hi) = (h.min(), h.max());
    if lo == hi {
        log::warn!("constant map cannot be split into {q} classes; using one label");
        return Ok(ThresholdResult {
            mask: LabelMask::uniform(rows, cols, q),
            thresholds: Vec::new(),
            degenerate: true,
            fallback_thresholds: 0,
        });
    }

    let bins = cfg.hist_bins;
    let width = (hi - lo) / bins as f64;
    let counts: Vec<usize> = histogram(h, bins).iter().map(|&(_, c)| c).collect();
    let smoothed = smooth_counts(&counts, cfg.hist_smooth);
    let to_value = |pos: f64| lo + (pos + 0.5) * width;

    let mut minima = local_minima(&smoothed);
    minima.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    let wanted = q as usize - 1;
    let mut thresholds: Vec<f64> = minima.iter().take(wanted).map(|&(p, _)| to_value(p)).collect();
    let fallback_thresholds = wanted - thresholds.len();
    if fallback_thresholds > 0 {
        let peak = smoothed
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0;
        thresholds.extend(core::iter::repeat(to_value(peak as f64)).take(fallback_thresholds));
    }
    thresholds.sort_by(f64::total_cmp);

    let labels = h
        .as_slice()
        .iter()
        .map(|&v| thresholds.iter().filter(|&&t| v > t).count() as u32)
        .collect();
    Ok(ThresholdResult {
        mask: LabelMask::new(rows, cols, labels, q)?,
        thresholds,
        degenerate: false,
        fallback_thresholds,
    })
}
