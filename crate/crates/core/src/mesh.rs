//! Structured triangulations of axis-aligned rectangles.
//!
//! Every grid square is split along its lower-left to upper-right diagonal.
//! Vertices are numbered row-major, `index = j * (m + 1) + i`, and all
//! coordinates come from the same closed-form grid formula, so a coarse
//! vertex reappears bit-exactly in every uniform refinement.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::NodalField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh divisions must be at least 1, got {0}")]
    InvalidDivisions(usize),
    #[error("degenerate or inverted bounds [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    InvalidBounds {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    #[error("meshes are not nested: {0}")]
    NotNested(String),
    #[error("field has {found} nodes but mesh has {expected} vertices")]
    FieldSize { expected: usize, found: usize },
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub const fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    /// The square `[-0.5, 0.5]^2` used by every preset.
    pub const fn centred_unit_square() -> Self {
        Self::new(-0.5, 0.5, -0.5, 0.5)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(MeshError::InvalidBounds {
                x_min: self.x_min,
                x_max: self.x_max,
                y_min: self.y_min,
                y_max: self.y_max,
            });
        }
        Ok(())
    }
}

/// A boundary edge with its outward unit normal.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub normal: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    bounds: Bounds,
    divisions: usize,
    level: usize,
    parent_vertex_map: Option<Vec<usize>>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.divisions == other.divisions && self.bounds == other.bounds
    }
}

impl Mesh {
    /// Builds the structured `m x m` triangulation of `bounds`.
    pub fn build_structured(m: usize, bounds: Bounds) -> Result<Self, MeshError> {
        if m == 0 {
            return Err(MeshError::InvalidDivisions(m));
        }
        bounds.validate()?;
        let n = m + 1;
        let mut vertices = Vec::with_capacity(n * n);
        let mut boundary_vertex = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push(grid_point(&bounds, m, i, j));
                boundary_vertex.push(i == 0 || j == 0 || i == m || j == m);
            }
        }
        let mut triangles = Vec::with_capacity(2 * m * m);
        for j in 0..m {
            for i in 0..m {
                let v00 = j * n + i;
                let v10 = v00 + 1;
                let v01 = v00 + n;
                let v11 = v01 + 1;
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Self {
            vertices,
            triangles,
            boundary_vertex,
            bounds,
            divisions: m,
            level: 0,
            parent_vertex_map: None,
        })
    }

    /// Uniform refinement: the same rectangle with twice the divisions.
    pub fn refine(&self) -> Self {
        let m = self.divisions;
        let mut fine = Self::build_structured(2 * m, self.bounds).expect("refining a valid mesh yields a valid mesh");
        fine.level = self.level + 1;
        let n_coarse = m + 1;
        let n_fine = 2 * m + 1;
        let map = (0..self.num_vertices())
            .map(|v| {
                let (i, j) = (v % n_coarse, v / n_coarse);
                2 * j * n_fine + 2 * i
            })
            .collect();
        fine.parent_vertex_map = Some(map);
        fine
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_vertex(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn divisions(&self) -> usize {
        self.divisions
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// For a refined mesh, the fine index of every coarse vertex of the parent.
    pub fn parent_vertex_map(&self) -> Option<&[usize]> {
        self.parent_vertex_map.as_deref()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        self.bounds.area()
    }

    /// Signed area of triangle `t` (positive for counter-clockwise order).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Maximum edge length over all triangles.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for e in 0..3 {
                let p = self.vertices[tri[e]];
                let q = self.vertices[tri[(e + 1) % 3]];
                h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        h
    }

    /// Boundary edges in counter-clockwise order around the rectangle.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let m = self.divisions;
        let n = m + 1;
        let idx = |i: usize, j: usize| j * n + i;
        let mut edges = Vec::with_capacity(4 * m);
        for i in 0..m {
            edges.push(BoundaryEdge {
                vertices: [idx(i, 0), idx(i + 1, 0)],
                normal: [0.0, -1.0],
            });
        }
        for j in 0..m {
            edges.push(BoundaryEdge {
                vertices: [idx(m, j), idx(m, j + 1)],
                normal: [1.0, 0.0],
            });
        }
        for i in (0..m).rev() {
            edges.push(BoundaryEdge {
                vertices: [idx(i + 1, m), idx(i, m)],
                normal: [0.0, 1.0],
            });
        }
        for j in (0..m).rev() {
            edges.push(BoundaryEdge {
                vertices: [idx(0, j + 1), idx(0, j)],
                normal: [-1.0, 0.0],
            });
        }
        edges
    }

    /// Checks orientation and the edge-manifold property.
    ///
    /// Returns a description of the first violation found.
    pub fn check_topology(&self) -> Result<(), String> {
        for t in 0..self.num_triangles() {
            if self.signed_area(t) <= 0.0 {
                return Err(format!("triangle {t} has non-positive signed area"));
            }
        }
        let mut directed: HashSet<(usize, usize)> = HashSet::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let edge = (tri[e], tri[(e + 1) % 3]);
                if !directed.insert(edge) {
                    return Err(format!("directed edge {edge:?} appears twice"));
                }
            }
        }
        let boundary: HashSet<(usize, usize)> = self
            .boundary_edges()
            .iter()
            .map(|e| (e.vertices[0], e.vertices[1]))
            .collect();
        for &(a, b) in &directed {
            let shared = directed.contains(&(b, a));
            let on_boundary = boundary.contains(&(a, b));
            if shared == on_boundary {
                return Err(format!("edge ({a}, {b}) shared={shared} but boundary={on_boundary}"));
            }
        }
        Ok(())
    }

    /// Ratio `fine.divisions / self.divisions` if `fine` refines `self`.
    fn refinement_ratio(&self, fine: &Mesh) -> Result<usize, MeshError> {
        if self.bounds != fine.bounds {
            return Err(MeshError::NotNested("bounds differ".into()));
        }
        let (mc, mf) = (self.divisions, fine.divisions);
        if mf % mc != 0 || !(mf / mc).is_power_of_two() {
            return Err(MeshError::NotNested(format!(
                "{mf} divisions is not a power-of-two refinement of {mc}"
            )));
        }
        Ok(mf / mc)
    }

    /// P1 interpolation of a coarse field onto a nested fine mesh.
    pub fn prolongate(&self, fine: &Mesh, field: &NodalField) -> Result<NodalField, MeshError> {
        if field.len() != self.num_vertices() {
            return Err(MeshError::FieldSize {
                expected: self.num_vertices(),
                found: field.len(),
            });
        }
        let r = self.refinement_ratio(fine)?;
        let m = self.divisions;
        let nc = m + 1;
        let nf = fine.divisions + 1;
        let coarse = field.values();
        let mut out = Vec::with_capacity(fine.num_vertices());
        for jf in 0..nf {
            for i_f in 0..nf {
                let (ic, si) = split_index(i_f, r, m);
                let (jc, sj) = split_index(jf, r, m);
                let s = si as f64 / r as f64;
                let t = sj as f64 / r as f64;
                let v00 = coarse[jc * nc + ic];
                let v10 = coarse[jc * nc + ic + 1];
                let v01 = coarse[(jc + 1) * nc + ic];
                let v11 = coarse[(jc + 1) * nc + ic + 1];
                // Lower triangle (v00, v10, v11) when s >= t, else (v00, v11, v01).
                let (w00, w10, w01, w11) = if si >= sj {
                    (1.0 - s, s - t, 0.0, t)
                } else {
                    (1.0 - t, 0.0, t - s, s)
                };
                let mut value = [0.0; 3];
                for c in 0..3 {
                    value[c] = w00 * v00[c] + w10 * v10[c] + w01 * v01[c] + w11 * v11[c];
                }
                out.push(value);
            }
        }
        Ok(NodalField::new(out))
    }
}

fn grid_point(bounds: &Bounds, m: usize, i: usize, j: usize) -> [f64; 2] {
    [
        bounds.x_min + (bounds.width() * i as f64) / m as f64,
        bounds.y_min + (bounds.height() * j as f64) / m as f64,
    ]
}

/// Splits a fine grid index into (coarse cell, offset inside the cell).
fn split_index(fine: usize, ratio: usize, m: usize) -> (usize, usize) {
    let cell = (fine / ratio).min(m - 1);
    (cell, fine - cell * ratio)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(m: usize) -> Mesh {
        Mesh::build_structured(m, Bounds::centred_unit_square()).unwrap()
    }

    #[test]
    fn single_square() {
        let mesh = square(1);
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.num_triangles(), 2);
        assert!((mesh.mesh_size() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn counts_for_m4() {
        let mesh = square(4);
        assert_eq!(mesh.num_vertices(), 25);
        assert_eq!(mesh.num_triangles(), 32);
        assert_eq!(mesh.boundary_vertex().iter().filter(|&&b| b).count(), 16);
        assert_eq!(mesh.boundary_edges().len(), 16);
        assert!((mesh.mesh_size() - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn large_mesh_counts() {
        let mesh = square(128);
        assert_eq!(mesh.num_vertices(), 16641);
        assert!((mesh.mesh_size() - 2f64.sqrt() / 128.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            Mesh::build_structured(0, Bounds::centred_unit_square()),
            Err(MeshError::InvalidDivisions(0))
        );
        assert!(matches!(
            Mesh::build_structured(2, Bounds::new(1.0, 0.0, 0.0, 1.0)),
            Err(MeshError::InvalidBounds { .. })
        ));
        assert!(matches!(
            Mesh::build_structured(2, Bounds::new(0.0, 1.0, 0.0, 0.0)),
            Err(MeshError::InvalidBounds { .. })
        ));
    }

    #[test]
    fn topology_holds_across_levels() {
        let mut mesh = Mesh::build_structured(3, Bounds::new(0.0, 2.0, -1.0, 0.5)).unwrap();
        for _ in 0..4 {
            mesh.check_topology().unwrap();
            mesh = mesh.refine();
        }
    }

    #[test]
    fn refine_doubles_and_nests() {
        let coarse = square(1);
        let fine = coarse.refine();
        assert_eq!(fine.num_vertices(), 9);
        assert_eq!(fine.level(), 1);
        let twice = square(4).refine().refine();
        assert_eq!(twice.divisions(), 16);
        assert_eq!(twice.level(), 2);

        let coarse = square(2);
        let fine = coarse.refine();
        let map = fine.parent_vertex_map().unwrap();
        assert_eq!(map.len(), 9);
        for (c, &f) in map.iter().enumerate() {
            let (p, q) = (coarse.vertices()[c], fine.vertices()[f]);
            assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
            // closed-form coordinates make this bit-exact
            assert_eq!(p, q);
        }
    }

    #[test]
    fn refine_halves_mesh_size() {
        let mesh = Mesh::build_structured(5, Bounds::new(0.0, 1.0, 0.0, 3.0)).unwrap();
        let h = mesh.mesh_size();
        let h_fine = mesh.refine().mesh_size();
        assert!(((h_fine - h / 2.0) / h).abs() <= 1e-13);
    }

    #[test]
    fn prolongate_constant_and_affine() {
        let coarse = square(3);
        let fine = coarse.refine().refine();
        let constant = NodalField::new(vec![[1.0, 2.0, 3.0]; coarse.num_vertices()]);
        let out = coarse.prolongate(&fine, &constant).unwrap();
        assert!(out.values().iter().all(|v| *v == [1.0, 2.0, 3.0]));

        let affine = |p: [f64; 2]| [p[0], p[1], 0.3 - 2.0 * p[0] + 0.5 * p[1]];
        let coarse_field = NodalField::new(coarse.vertices().iter().map(|&p| affine(p)).collect());
        let out = coarse.prolongate(&fine, &coarse_field).unwrap();
        for (p, v) in fine.vertices().iter().zip(out.values()) {
            let exact = affine(*p);
            for c in 0..3 {
                assert!((v[c] - exact[c]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn prolongate_hat_function() {
        let coarse = square(2);
        let fine = coarse.refine();
        let centre = 4;
        let mut values = vec![[0.0; 3]; coarse.num_vertices()];
        values[centre] = [1.0, 0.0, 0.0];
        let out = coarse.prolongate(&fine, &NodalField::new(values)).unwrap();
        let image = fine.parent_vertex_map().unwrap()[centre];
        assert_eq!(out.values()[image][0], 1.0);

        // Midpoints of the six coarse edges touching the centre vertex.
        let p = fine.vertices()[image];
        let h = 0.25;
        let neighbours = [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, h), (-h, -h)];
        for (dx, dy) in neighbours {
            let idx = fine
                .vertices()
                .iter()
                .position(|q| (q[0] - p[0] - dx).abs() < 1e-12 && (q[1] - p[1] - dy).abs() < 1e-12)
                .unwrap();
            assert!((out.values()[idx][0] - 0.5).abs() < 1e-15);
        }
        // Off-diagonal midpoints are not adjacent to the hat's support edges.
        let idx = fine
            .vertices()
            .iter()
            .position(|q| (q[0] - p[0] - h).abs() < 1e-12 && (q[1] - p[1] + h).abs() < 1e-12)
            .unwrap();
        assert_eq!(out.values()[idx][0], 0.0);
    }

    #[test]
    fn prolongate_rejects_non_nested() {
        let coarse = square(2);
        let other = square(3);
        let field = NodalField::zeros(coarse.num_vertices());
        assert!(matches!(
            coarse.prolongate(&other, &field),
            Err(MeshError::NotNested(_))
        ));
        let shifted = Mesh::build_structured(4, Bounds::new(0.0, 1.0, 0.0, 1.0)).unwrap();
        assert!(matches!(
            coarse.prolongate(&shifted, &field),
            Err(MeshError::NotNested(_))
        ));
    }
}
