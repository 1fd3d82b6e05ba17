//! Analytic signed distance functions, finite-difference gradients,
//! isocontour extraction and surface distances.
//!
//! Sign convention: SDFs are **positive inside** the shape and negative
//! outside. A union is the pointwise maximum of its members; outside the union
//! that is the exact signed distance, inside overlapping members it is a lower
//! bound on the distance to the boundary.

mod contour;
mod distance;
pub mod export;
mod gradient;
mod shape;

pub use contour::{marching_cubes, marching_squares, IsoContour, ScalarGrid};
pub use distance::{chamfer, fscore, nearest_distances};
pub use gradient::{fd_gradient, fd_gradients};
pub use shape::{sample_boundary, AnalyticShape};
