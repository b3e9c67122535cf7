//! Benchmark scoring: misclassification after median-ordered label matching,
//! and histogram rows for plotting.

use alloc::vec::Vec;

use crate::error::{param, Error, Result};
use crate::field::{Field2D, LabelMask};

/// Median of a non-empty sample (mean of the two middle values for even sizes).
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Nonempty classes of `mask` ordered by decreasing median of `h` over the
/// class; ties go to the larger class, then to the smaller label.
pub fn classes_by_median(mask: &LabelMask, h: &Field2D) -> Vec<(u32, f64)> {
    let q = mask.q() as usize;
    let mut members: Vec<Vec<f64>> = (0..q).map(|_| Vec::new()).collect();
    for (&l, &v) in mask.labels().iter().zip(h.as_slice()) {
        members[l as usize].push(v);
    }
    let mut ranked: Vec<(u32, f64, usize)> = members
        .iter_mut()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(l, m)| {
            let size = m.len();
            (l as u32, median(m), size)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(b.2.cmp(&a.2)).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(l, m, _)| (l, m)).collect()
}

/// Fraction of pixels whose predicted label, after matching predicted to true
/// regions by the rank of their median `h_est`, differs from the truth.
///
/// Predicted classes beyond the number of nonempty true classes (and true
/// classes left without a partner) match nothing and count as errors.
pub fn misclassification(pred: &LabelMask, truth: &LabelMask, h_est: &Field2D) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            expected: truth.shape(),
            got: pred.shape(),
        });
    }
    h_est.ensure_shape(truth.shape())?;
    if pred.q() != truth.q() {
        return Err(param(
            "pred",
            alloc::format!("{} classes, truth has {}", pred.q(), truth.q()),
        ));
    }
    let pred_rank = classes_by_median(pred, h_est);
    let truth_rank = classes_by_median(truth, h_est);
    let mut mapping: Vec<Option<u32>> = alloc::vec![None; pred.q() as usize];
    for (&(p, _), &(t, _)) in pred_rank.iter().zip(&truth_rank) {
        mapping[p as usize] = Some(t);
    }
    let wrong = pred
        .labels()
        .iter()
        .zip(truth.labels())
        .filter(|(&p, &t)| mapping[p as usize] != Some(t))
        .count();
    Ok(wrong as f64 / pred.labels().len() as f64)
}

/// Uniform histogram over `[min, max]` as `(bin center, count)` rows.
/// The maximum falls in the last bin; a constant map puts everything in bin 0.
pub fn histogram(h: &Field2D, bins: usize) -> Vec<(f64, usize)> {
    assert!(bins > 0);
    let (lo, hi) = (h.min(), h.max());
    let span = hi - lo;
    let width = if span > 0.0 { span / bins as f64 } else { 1.0 };
    let mut counts = alloc::vec![0usize; bins];
    for &v in h.as_slice() {
        let idx = if span > 0.0 {
            (((v - lo) / span) * bins as f64) as usize
        } else {
            0
        };
        counts[idx.min(bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + (i as f64 + 0.5) * width, c))
        .collect()
}
