use std::collections::HashMap;

use rand::Rng;

use crate::domain::{DomainSpec, Points};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::rng;

/// Scalar samples on the nodes of a regular grid spanning a box (x fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    pub domain: DomainSpec,
    pub resolution: Vec<usize>,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(domain: DomainSpec, resolution: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if resolution.len() != domain.dim() {
            return Err(Error::dim(format!(
                "grid resolution {resolution:?} does not match a {}-d box",
                domain.dim()
            )));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::Range(format!("grid needs >= 2 nodes per axis, got {resolution:?}")));
        }
        let n: usize = resolution.iter().product();
        if values.len() != n {
            return Err(Error::dim(format!("grid of {n} nodes given {} values", values.len())));
        }
        Ok(Self {
            domain,
            resolution,
            values,
        })
    }

    /// Node coordinates of an `r^dim` grid over `domain`, x fastest.
    pub fn nodes(domain: &DomainSpec, resolution: &[usize]) -> Points {
        let dim = domain.dim();
        let n: usize = resolution.iter().product();
        let mut pts = Points::with_capacity(dim, n);
        let mut p = vec![0.0; dim];
        for flat in 0..n {
            let mut rem = flat;
            for a in 0..dim {
                let i = rem % resolution[a];
                rem /= resolution[a];
                let (lo, hi) = (domain.lo()[a], domain.hi()[a]);
                p[a] = lo + (hi - lo) * i as f64 / (resolution[a] - 1) as f64;
            }
            pts.push(&p).expect("dimension matches");
        }
        pts
    }

    /// Samples a scalar field on the grid nodes.
    pub fn sample(field: &dyn Field, domain: &DomainSpec, resolution: &[usize]) -> Result<Self> {
        if field.dim_out() != 1 {
            return Err(Error::dim("grid sampling needs a scalar field"));
        }
        let values = field.eval_batch(&Self::nodes(domain, resolution))?;
        Self::new(domain.clone(), resolution.to_vec(), values)
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi) = (self.domain.lo()[axis], self.domain.hi()[axis]);
        lo + (hi - lo) * i as f64 / (self.resolution[axis] - 1) as f64
    }

    fn index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .rev()
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    /// Largest cell edge length.
    pub fn cell_size(&self) -> f64 {
        (0..self.domain.dim())
            .map(|a| (self.domain.hi()[a] - self.domain.lo()[a]) / (self.resolution[a] - 1) as f64)
            .fold(0.0, f64::max)
    }

    /// Multilinear interpolant of the node values at `x`.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let dim = self.domain.dim();
        let mut cell = vec![0usize; dim];
        let mut frac = vec![0.0; dim];
        for a in 0..dim {
            let (lo, hi) = (self.domain.lo()[a], self.domain.hi()[a]);
            let u = ((x[a] - lo) / (hi - lo) * (self.resolution[a] - 1) as f64)
                .clamp(0.0, (self.resolution[a] - 1) as f64);
            let i = (u.floor() as usize).min(self.resolution[a] - 2);
            cell[a] = i;
            frac[a] = u - i as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; dim];
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            for a in 0..dim {
                let bit = (corner >> a) & 1;
                idx[a] = cell[a] + bit;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            acc += w * self.values[self.index(&idx)];
        }
        acc
    }
}

/// Zero level set of a sampled field: polylines in 2D, triangles in 3D.
#[derive(Clone, Debug, PartialEq)]
pub enum IsoContour {
    Polylines { vertices: Points, lines: Vec<Vec<usize>> },
    Mesh { vertices: Points, faces: Vec<[usize; 3]> },
}

impl IsoContour {
    pub fn vertices(&self) -> &Points {
        match self {
            IsoContour::Polylines { vertices, .. } | IsoContour::Mesh { vertices, .. } => vertices,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices().is_empty()
    }

    /// Total arc length (2D) or area (3D).
    pub fn measure(&self) -> f64 {
        self.elements().iter().map(|e| e.measure).sum()
    }

    fn elements(&self) -> Vec<Element> {
        match self {
            IsoContour::Polylines { vertices, lines } => lines
                .iter()
                .flat_map(|l| l.windows(2))
                .map(|w| Element::new(vertices, &[w[0], w[1]]))
                .collect(),
            IsoContour::Mesh { vertices, faces } => {
                faces.iter().map(|f| Element::new(vertices, f)).collect()
            }
        }
    }

    /// `n` points uniform over the contour's length / area.
    pub fn sample_points(&self, n: usize, seed: u64) -> Result<Points> {
        let elems = self.elements();
        let total: f64 = elems.iter().map(|e| e.measure).sum();
        if elems.is_empty() || !(total > 0.0) {
            return Err(Error::Empty("contour has no length/area to sample".into()));
        }
        let mut cum = Vec::with_capacity(elems.len());
        let mut acc = 0.0;
        for e in &elems {
            acc += e.measure;
            cum.push(acc);
        }
        let dim = self.vertices().dim();
        let mut rng = rng::stream(seed);
        let mut out = Points::with_capacity(dim, n);
        for _ in 0..n {
            let u = rng.gen::<f64>() * total;
            let k = cum.partition_point(|&c| c <= u).min(elems.len() - 1);
            let e = &elems[k];
            let p: Vec<f64> = match e.corners.len() {
                2 => {
                    let s = rng.gen::<f64>();
                    (0..dim).map(|a| e.corners[0][a] + s * (e.corners[1][a] - e.corners[0][a])).collect()
                }
                _ => {
                    let (mut r1, mut r2) = (rng.gen::<f64>(), rng.gen::<f64>());
                    if r1 + r2 > 1.0 {
                        r1 = 1.0 - r1;
                        r2 = 1.0 - r2;
                    }
                    let c = &e.corners;
                    (0..dim).map(|a| c[0][a] + r1 * (c[1][a] - c[0][a]) + r2 * (c[2][a] - c[0][a])).collect()
                }
            };
            out.push(&p)?;
        }
        Ok(out)
    }
}

struct Element {
    corners: Vec<Vec<f64>>,
    measure: f64,
}

impl Element {
    fn new(vertices: &Points, idx: &[usize]) -> Self {
        let corners: Vec<Vec<f64>> = idx.iter().map(|&i| vertices.get(i).to_vec()).collect();
        let measure = if corners.len() == 2 {
            corners[0].iter().zip(&corners[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        } else {
            let u: Vec<f64> = (0..3).map(|a| corners[1][a] - corners[0][a]).collect();
            let v: Vec<f64> = (0..3).map(|a| corners[2][a] - corners[0][a]).collect();
            0.5 * norm3(&cross(&u, &v))
        };
        Self { corners, measure }
    }
}

fn cross(u: &[f64], v: &[f64]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// One corner loop of a cell face, walked counter-clockwise when viewed from
/// outside the cell (or from +z in 2D). Emits directed segments between edge
/// crossings so that the positive region lies on the left.
///
/// `edge_key(a, b)` names the grid edge between corners `a` and `b`. Faces
/// with four crossings (saddles) connect the positive corners when the face
/// average is positive and separate them otherwise.
fn walk_face(vals: [f64; 4], corners: [usize; 4], edge_key: &dyn Fn(usize, usize) -> usize, out: &mut Vec<(usize, usize)>) {
    let inside = vals.map(|v| v > 0.0);
    // (key, is_exit) for each crossing edge in CCW order.
    let mut crossings: Vec<(usize, bool)> = Vec::with_capacity(4);
    for e in 0..4 {
        let (a, b) = (e, (e + 1) % 4);
        if inside[a] != inside[b] {
            crossings.push((edge_key(corners[a], corners[b]), inside[a]));
        }
    }
    match crossings.len() {
        0 => {}
        2 => {
            let (exit, entry) = if crossings[0].1 {
                (crossings[0].0, crossings[1].0)
            } else {
                (crossings[1].0, crossings[0].0)
            };
            out.push((exit, entry));
        }
        4 => {
            let center_inside = vals.iter().sum::<f64>() / 4.0 > 0.0;
            for i in 0..4 {
                if crossings[i].1 {
                    let j = if center_inside { (i + 1) % 4 } else { (i + 3) % 4 };
                    out.push((crossings[i].0, crossings[j].0));
                }
            }
        }
        _ => unreachable!("a closed loop crosses an even number of edges"),
    }
}

/// Vertex on the grid edge `(a, b)` by linear interpolation of the values.
fn edge_vertex(grid: &ScalarGrid, a: &[usize], b: &[usize]) -> Vec<f64> {
    let va = grid.values[grid.index(a)];
    let vb = grid.values[grid.index(b)];
    let s = va / (va - vb);
    (0..a.len())
        .map(|ax| {
            let pa = grid.coord(ax, a[ax]);
            let pb = grid.coord(ax, b[ax]);
            if a[ax] == b[ax] {
                pa
            } else {
                pa + s * (pb - pa)
            }
        })
        .collect()
}

/// Zero contour of a 2D grid as polylines (positive region on the left).
/// Grids with no sign change yield an empty contour.
pub fn marching_squares(grid: &ScalarGrid) -> Result<IsoContour> {
    if grid.domain.dim() != 2 {
        return Err(Error::dim("marching squares needs a 2D grid"));
    }
    let (nx, ny) = (grid.resolution[0], grid.resolution[1]);
    // Edge key: 2 * node + axis, for the edge leaving `node` along `axis`.
    let key = |a: usize, b: usize| -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        2 * lo + usize::from(hi - lo != 1)
    };
    let mut segments = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let n00 = j * nx + i;
            let corners = [n00, n00 + 1, n00 + nx + 1, n00 + nx];
            let vals = corners.map(|c| grid.values[c]);
            walk_face(vals, corners, &key, &mut segments);
        }
    }
    let node_idx = |n: usize| [n % nx, n / nx];
    let (vertices, chains) = link(segments, 2, |k| {
        let lo = k / 2;
        let hi = if k % 2 == 0 { lo + 1 } else { lo + nx };
        edge_vertex(grid, &node_idx(lo), &node_idx(hi))
    })?;
    Ok(IsoContour::Polylines { vertices, lines: chains })
}

/// Zero isosurface of a 3D grid as a triangle mesh with normals pointing
/// out of the positive region. Each cell's surface is assembled from the
/// face contours of its six faces (saddle faces resolved by the face-average
/// sign) and fan-triangulated.
pub fn marching_cubes(grid: &ScalarGrid) -> Result<IsoContour> {
    if grid.domain.dim() != 3 {
        return Err(Error::dim("marching cubes needs a 3D grid"));
    }
    let (nx, ny, nz) = (grid.resolution[0], grid.resolution[1], grid.resolution[2]);
    let stride = [1, nx, nx * ny];
    let key = |a: usize, b: usize| -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let axis = stride.iter().position(|&s| s == hi - lo).expect("grid edge");
        3 * lo + axis
    };
    // Cube corners indexed x + 2y + 4z; faces listed CCW seen from outside.
    const FACES: [[usize; 4]; 6] = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let mut vertex_of: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Points::empty(3);
    let mut faces = Vec::new();
    let mut segs = Vec::with_capacity(12);
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let base = i + nx * (j + ny * k);
                let corner_node: [usize; 8] =
                    std::array::from_fn(|c| base + (c & 1) * stride[0] + ((c >> 1) & 1) * stride[1] + ((c >> 2) & 1) * stride[2]);
                let vals: [f64; 8] = corner_node.map(|n| grid.values[n]);
                let positive = vals.iter().filter(|v| **v > 0.0).count();
                if positive == 0 || positive == 8 {
                    continue;
                }
                segs.clear();
                for f in FACES {
                    let corners = f.map(|c| corner_node[c]);
                    walk_face(corners.map(|n| grid.values[n]), corners, &key, &mut segs);
                }
                let next: HashMap<usize, usize> = segs.iter().copied().collect();
                let mut seen: Vec<usize> = Vec::new();
                for &(start, _) in segs.iter() {
                    if seen.contains(&start) {
                        continue;
                    }
                    let mut lp = vec![start];
                    seen.push(start);
                    let mut cur = next[&start];
                    while cur != start {
                        lp.push(cur);
                        seen.push(cur);
                        cur = next[&cur];
                    }
                    let ids: Vec<usize> = lp
                        .iter()
                        .map(|&ek| {
                            *vertex_of.entry(ek).or_insert_with(|| {
                                let lo = ek / 3;
                                let hi = lo + stride[ek % 3];
                                let idx = |n: usize| [n % nx, (n / nx) % ny, n / (nx * ny)];
                                vertices
                                    .push(&edge_vertex(grid, &idx(lo), &idx(hi)))
                                    .expect("3-d vertex");
                                vertices.len() - 1
                            })
                        })
                        .collect();
                    // Loops run with the positive side on their left seen from
                    // outside the cell; reversing the fan points normals out of
                    // the positive region.
                    for t in 1..ids.len() - 1 {
                        faces.push([ids[0], ids[t + 1], ids[t]]);
                    }
                }
            }
        }
    }
    Ok(IsoContour::Mesh { vertices, faces })
}

/// Chains directed segments (keyed by edge) into polylines; closed loops
/// repeat their first vertex at the end.
fn link(
    segments: Vec<(usize, usize)>,
    dim: usize,
    vertex: impl Fn(usize) -> Vec<f64>,
) -> Result<(Points, Vec<Vec<usize>>)> {
    let next: HashMap<usize, usize> = segments.iter().copied().collect();
    let has_incoming: std::collections::HashSet<usize> = segments.iter().map(|s| s.1).collect();
    let mut starts: Vec<usize> = segments.iter().map(|s| s.0).filter(|s| !has_incoming.contains(s)).collect();
    starts.sort_unstable();
    let mut loop_starts: Vec<usize> = segments.iter().map(|s| s.0).collect();
    loop_starts.sort_unstable();

    let mut vid: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Points::empty(dim);
    let mut used: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let mut lines = Vec::new();
    let mut id_of = |k: usize, vertices: &mut Points| -> Result<usize> {
        if let Some(&i) = vid.get(&k) {
            return Ok(i);
        }
        vertices.push(&vertex(k))?;
        vid.insert(k, vertices.len() - 1);
        Ok(vertices.len() - 1)
    };
    for s in starts.into_iter().chain(loop_starts) {
        if used.contains(&s) {
            continue;
        }
        let mut chain = vec![id_of(s, &mut vertices)?];
        let mut cur = s;
        while let Some(&n) = next.get(&cur) {
            used.insert(cur);
            chain.push(id_of(n, &mut vertices)?);
            if n == s || used.contains(&n) {
                break;
            }
            cur = n;
        }
        lines.push(chain);
    }
    Ok((vertices, lines))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AnalyticShape;

    fn grid2(values: Vec<f64>, nx: usize, ny: usize) -> ScalarGrid {
        ScalarGrid::new(DomainSpec::unit_box(2), vec![nx, ny], values).unwrap()
    }

    #[test]
    fn constant_grid_empty() {
        let c = marching_squares(&grid2(vec![1.0; 16], 4, 4)).unwrap();
        assert!(c.is_empty());
        let g3 = ScalarGrid::new(DomainSpec::unit_box(3), vec![3, 3, 3], vec![-1.0; 27]).unwrap();
        assert!(marching_cubes(&g3).unwrap().is_empty());
    }

    #[test]
    fn single_edge_sign_flip() {
        // 2x2 grid, one positive corner: one segment, one vertex per crossing edge.
        let g = grid2(vec![1.0, -1.0, -1.0, -1.0], 2, 2);
        let IsoContour::Polylines { vertices, lines } = marching_squares(&g).unwrap() else {
            panic!("2D contour")
        };
        assert_eq!(vertices.len(), 2);
        assert_eq!(lines, vec![vec![0, 1]]);
        // Crossings sit at the midpoints of the bottom and left edges.
        let mut pts: Vec<Vec<f64>> = vertices.iter().map(|p| p.to_vec()).collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(pts, vec![vec![-1.0, 0.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn circle_contour_close_to_truth() {
        let c = AnalyticShape::ball(vec![0.1, 0.05], 0.5).unwrap();
        let d = DomainSpec::unit_box(2);
        let g = ScalarGrid::sample(&c, &d, &[128, 128]).unwrap();
        let contour = marching_squares(&g).unwrap();
        let IsoContour::Polylines { vertices, lines } = &contour else { unreachable!() };
        assert_eq!(lines.len(), 1, "a circle is one closed loop");
        assert_eq!(lines[0].first(), lines[0].last());
        for v in vertices.iter() {
            assert!(c.sdf(v).abs() < 1.5 * g.cell_size());
            assert!(g.interpolate(v).abs() < 1e-9);
        }
        // Positive (inside) region on the left: loop is counter-clockwise.
        let l = &lines[0];
        let area: f64 = l
            .windows(2)
            .map(|w| {
                let (a, b) = (vertices.get(w[0]), vertices.get(w[1]));
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0;
        assert!(area > 0.0);
        assert!((area - std::f64::consts::PI * 0.25).abs() < 0.01);
    }

    #[test]
    fn refinement_reduces_error() {
        let c = AnalyticShape::ball(vec![0.03, -0.07], 0.6).unwrap();
        let d = DomainSpec::unit_box(2);
        let err = |r: usize| {
            let g = ScalarGrid::sample(&c, &d, &[r, r]).unwrap();
            let contour = marching_squares(&g).unwrap();
            contour.vertices().iter().map(|v| c.sdf(v).abs()).fold(0.0, f64::max)
        };
        assert!(err(32) >= 1.5 * err(64));
    }

    #[test]
    fn saddle_resolved_by_average() {
        // Diagonal positives; average positive -> positives joined (two segments
        // cutting off the negative corners).
        let g = grid2(vec![2.0, -1.0, -1.0, 2.0], 2, 2);
        let c = marching_squares(&g).unwrap();
        let IsoContour::Polylines { lines, .. } = c else { unreachable!() };
        assert_eq!(lines.len(), 2);
        let g = grid2(vec![1.0, -2.0, -2.0, 1.0], 2, 2);
        let IsoContour::Polylines { lines, .. } = marching_squares(&g).unwrap() else { unreachable!() };
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn sphere_mesh_outward_and_accurate() {
        let s = AnalyticShape::ball(vec![0.05, -0.02, 0.01], 0.55).unwrap();
        let d = DomainSpec::unit_box(3);
        let g = ScalarGrid::sample(&s, &d, &[24, 24, 24]).unwrap();
        let IsoContour::Mesh { vertices, faces } = marching_cubes(&g).unwrap() else { unreachable!() };
        assert!(!faces.is_empty());
        for v in vertices.iter() {
            assert!(s.sdf(v).abs() < g.cell_size());
            assert!(g.interpolate(v).abs() < 1e-9);
        }
        let mut outward = 0;
        for f in &faces {
            let (a, b, c) = (vertices.get(f[0]), vertices.get(f[1]), vertices.get(f[2]));
            let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
            let w: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
            let n = cross(&u, &w);
            let radial: f64 = (0..3).map(|i| n[i] * (a[i] - [0.05, -0.02, 0.01][i])).sum();
            if radial > 0.0 {
                outward += 1;
            }
        }
        assert_eq!(outward, faces.len());
        let area = IsoContour::Mesh { vertices, faces }.measure();
        let exact = 4.0 * std::f64::consts::PI * 0.55 * 0.55;
        assert!((area - exact).abs() / exact < 0.02, "area {area} vs {exact}");
    }

    #[test]
    fn contour_sampling_lands_on_contour() {
        let c = AnalyticShape::ball(vec![0.0, 0.0], 0.5).unwrap();
        let g = ScalarGrid::sample(&c, &DomainSpec::unit_box(2), &[64, 64]).unwrap();
        let contour = marching_squares(&g).unwrap();
        let pts = contour.sample_points(500, 1).unwrap();
        for p in pts.iter() {
            assert!(c.sdf(p).abs() < g.cell_size());
        }
        assert_eq!(pts, contour.sample_points(500, 1).unwrap());
    }
}
