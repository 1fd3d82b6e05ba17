use crate::domain::Points;
use crate::error::{Error, Result};

/// For every point in `from`, the Euclidean distance to its nearest neighbour
/// in `to`. Exact; uses a sweep over `to` sorted by the first coordinate.
pub fn nearest_distances(from: &Points, to: &Points) -> Result<Vec<f64>> {
    if from.dim() != to.dim() {
        return Err(Error::dim(format!(
            "point sets of dimension {} and {}",
            from.dim(),
            to.dim()
        )));
    }
    if to.is_empty() {
        return Err(Error::Empty("nearest neighbour target set is empty".into()));
    }
    let mut order: Vec<usize> = (0..to.len()).collect();
    order.sort_by(|&a, &b| to.get(a)[0].total_cmp(&to.get(b)[0]));
    let xs: Vec<f64> = order.iter().map(|&i| to.get(i)[0]).collect();

    Ok(from
        .iter()
        .map(|p| {
            let start = xs.partition_point(|&x| x < p[0]);
            let mut best = f64::INFINITY;
            let d2 = |i: usize| -> f64 { p.iter().zip(to.get(order[i])).map(|(a, b)| (a - b) * (a - b)).sum() };
            for i in start..xs.len() {
                let dx = xs[i] - p[0];
                if dx * dx >= best {
                    break;
                }
                best = best.min(d2(i));
            }
            for i in (0..start).rev() {
                let dx = p[0] - xs[i];
                if dx * dx >= best {
                    break;
                }
                best = best.min(d2(i));
            }
            best.sqrt()
        })
        .collect())
}

/// Symmetric Chamfer distance: the mean nearest-neighbour distance from `a`
/// to `b` plus the mean from `b` to `a` (distances not squared).
pub fn chamfer(a: &Points, b: &Points) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer distance of an empty point set".into()));
    }
    let ab = nearest_distances(a, b)?;
    let ba = nearest_distances(b, a)?;
    Ok(mean(&ab) + mean(&ba))
}

/// F-score at threshold `tau`: harmonic mean of the fraction of `pred` points
/// within `tau` of `truth` (precision) and of `truth` points within `tau` of
/// `pred` (recall). A point counts when its distance is strictly below `tau`.
pub fn fscore(pred: &Points, truth: &Points, tau: f64) -> Result<f64> {
    if pred.is_empty() || truth.is_empty() {
        return Err(Error::Empty("F-score of an empty point set".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Range(format!("F-score threshold must be positive, got {tau}")));
    }
    let frac = |d: Vec<f64>| d.iter().filter(|&&x| x < tau).count() as f64 / d.len() as f64;
    let precision = frac(nearest_distances(pred, truth)?);
    let recall = frac(nearest_distances(truth, pred)?);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
