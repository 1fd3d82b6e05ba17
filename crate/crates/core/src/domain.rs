//! Function domains and flat point sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedded manifold on which samples live, inside the ambient box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    /// Unit circle in the plane.
    UnitCircle,
    /// Unit sphere in 3-space.
    UnitSphere,
}

impl Manifold {
    pub fn ambient_dim(self) -> usize {
        match self {
            Manifold::UnitCircle => 2,
            Manifold::UnitSphere => 3,
        }
    }
}

/// An axis-aligned bounding box, optionally carrying an embedded manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    lo: Vec<f64>,
    hi: Vec<f64>,
    manifold: Option<Manifold>,
}

impl DomainSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, manifold: Option<Manifold>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.len() > 3 {
            return Err(Error::dim(format!(
                "domain box needs 1-3 axes with matching bounds, got lo {lo:?} hi {hi:?}"
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::Range(format!("domain box requires lo < hi, got {lo:?} {hi:?}")));
        }
        if let Some(m) = manifold {
            if m.ambient_dim() != lo.len() {
                return Err(Error::dim(format!("{m:?} does not embed in {} axes", lo.len())));
            }
            if lo.iter().any(|&l| l > -1.0) || hi.iter().any(|&h| h < 1.0) {
                return Err(Error::Range("manifold must lie inside the box".into()));
            }
        }
        Ok(Self { lo, hi, manifold })
    }

    /// The box `[-1, 1]^dim`.
    pub fn unit_box(dim: usize) -> Self {
        Self::new(vec![-1.0; dim], vec![1.0; dim], None).expect("valid unit box")
    }

    /// The box `[-1.25, 1.25]^dim` with an embedded unit circle / sphere.
    pub fn with_manifold(manifold: Manifold) -> Self {
        let d = manifold.ambient_dim();
        Self::new(vec![-1.25; d], vec![1.25; d], Some(manifold)).expect("valid manifold box")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn manifold(&self) -> Option<Manifold> {
        self.manifold
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "point has {} coordinates, domain has {}",
                x.len(),
                self.dim()
            )));
        }
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { point: x.to_vec() })
        }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

/// A set of points stored as one flat row-major buffer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::dim(format!(
                "{} coordinates do not split into points of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * n),
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut pts = Self::with_capacity(dim, rows.len());
        for r in rows {
            pts.push(r)?;
        }
        Ok(pts)
    }

    pub fn push(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::dim(format!(
                "pushing a {}-d point into a {}-d set",
                p.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(p);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn concat(&self, other: &Points) -> Result<Points> {
        if self.dim != other.dim {
            return Err(Error::dim("concatenating point sets of different dimension"));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Points { dim: self.dim, data })
    }

    /// Subset by index; indices may repeat.
    pub fn select(&self, idx: &[usize]) -> Points {
        let mut out = Points::with_capacity(self.dim, idx.len());
        for &i in idx {
            out.data.extend_from_slice(self.get(i));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_validation() {
        assert!(DomainSpec::new(vec![0.0], vec![0.0], None).is_err());
        assert!(DomainSpec::new(vec![0.0, 0.0], vec![1.0], None).is_err());
        assert!(DomainSpec::new(vec![-0.5, -0.5], vec![0.5, 0.5], Some(Manifold::UnitCircle)).is_err());
        let d = DomainSpec::with_manifold(Manifold::UnitCircle);
        assert!(d.contains(&[1.0, 0.0]));
    }

    #[test]
    fn points_layout() {
        let p = Points::from_rows(2, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.get(1), &[3.0, 4.0]);
        assert_eq!(p.select(&[1, 1, 0]).as_slice(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        assert!(Points::new(2, vec![1.0; 3]).is_err());
    }
}
