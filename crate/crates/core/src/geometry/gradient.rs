use crate::domain::{DomainSpec, Points};
use crate::error::{Error, Result};
use crate::field::Field;

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` along every axis.
///
/// With a `domain`, the whole stencil must lie inside it.
pub fn fd_gradient<F>(f: F, x: &[f64], h: f64, domain: Option<&DomainSpec>) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Range(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        if let Some(d) = domain {
            d.check(&probe)?;
        }
        let fp = f(&probe);
        probe[i] = x[i] - h;
        if let Some(d) = domain {
            d.check(&probe)?;
        }
        let fm = f(&probe);
        probe[i] = x[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Batched [`fd_gradient`] for a scalar [`Field`]: one `eval_batch` call over
/// the full stencil. Returns `n x dim` gradients, row-major.
pub fn fd_gradients(field: &dyn Field, points: &Points, h: f64, domain: &DomainSpec) -> Result<Vec<f64>> {
    if field.dim_out() != 1 {
        return Err(Error::dim("gradient of a vector-valued field"));
    }
    let d = points.dim();
    let mut stencil = Points::with_capacity(d, points.len() * 2 * d);
    for p in points.iter() {
        let mut q = p.to_vec();
        for i in 0..d {
            q[i] = p[i] + h;
            domain.check(&q)?;
            stencil.push(&q)?;
            q[i] = p[i] - h;
            domain.check(&q)?;
            stencil.push(&q)?;
            q[i] = p[i];
        }
    }
    let vals = field.eval_batch(&stencil)?;
    Ok(vals.chunks_exact(2).map(|pm| (pm[0] - pm[1]) / (2.0 * h)).collect())
}
