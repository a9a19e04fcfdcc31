//! P1 vector finite elements: assembly, projections, discrete operators and
//! norms.
//!
//! Vector systems use node-major interleaving: unknown `3 * node + component`.

mod forms;
mod norms;
pub mod quadrature;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve_cg, CooBuilder, CsrMatrix, LinalgError, Precond, SolveStats};
use crate::mesh::Mesh;
use crate::model::{LlbParams, SpatialField};

pub use forms::{IterateTerms, LinearTerms};
pub use norms::{EnergyBreakdown, Norms};
pub use quadrature::QuadratureRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("{what}: {source}")]
    Solver {
        what: &'static str,
        #[source]
        source: LinalgError,
    },
    #[error("{what}: mass solve did not converge (residual {:.3e} after {} iterations)", stats.final_relative_residual, stats.iterations)]
    NotConverged { what: &'static str, stats: SolveStats },
    #[error("field has {found} nodes, space has {expected}")]
    FieldSize { expected: usize, found: usize },
}

/// R³-valued P1 coefficients, one vector per mesh vertex.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField {
    values: Vec<[f64; 3]>,
}

impl NodalField {
    pub fn new(values: Vec<[f64; 3]>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![[0.0; 3]; n],
        }
    }

    pub fn constant(n: usize, value: [f64; 3]) -> Self {
        Self { values: vec![value; n] }
    }

    /// Inverse of [`NodalField::as_flat`]; `flat.len()` must be a multiple of 3.
    pub fn from_flat(flat: &[f64]) -> Self {
        assert!(
            flat.len().is_multiple_of(3),
            "flat vector length must be a multiple of 3"
        );
        Self {
            values: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.values
    }

    pub fn as_flat(&self) -> &[f64] {
        self.values.as_flattened()
    }

    pub fn component(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[c]).collect()
    }

    pub fn from_components(components: [&[f64]; 3]) -> Self {
        let n = components[0].len();
        Self {
            values: (0..n)
                .map(|i| [components[0][i], components[1][i], components[2][i]])
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_flat().iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &NodalField) -> NodalField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &NodalField) -> NodalField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scaled(&self, s: f64) -> NodalField {
        NodalField {
            values: self.values.iter().map(|v| v.map(|x| s * x)).collect(),
        }
    }

    /// Largest per-node Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Largest absolute difference over all nodal coefficients.
    pub fn max_abs_diff(&self, other: &NodalField) -> f64 {
        self.as_flat()
            .iter()
            .zip(other.as_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn zip_map(&self, other: &NodalField, f: impl Fn(f64, f64) -> f64) -> NodalField {
        assert_eq!(self.len(), other.len(), "fields live on different meshes");
        NodalField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])])
                .collect(),
        }
    }
}

/// Geometry of one P1 triangle.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; 3],
    pub corners: [[f64; 2]; 3],
    pub area: f64,
    /// Gradients of the three barycentric (hat) functions, constant on the element.
    pub grads: [[f64; 2]; 3],
}

impl Element {
    fn new(mesh: &Mesh, nodes: [usize; 3]) -> Self {
        let corners = nodes.map(|n| mesh.vertices()[n]);
        let [p0, p1, p2] = corners;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Self {
            nodes,
            corners,
            area: 0.5 * det,
            grads,
        }
    }

    pub fn point(&self, bary: &[f64; 3]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (b, c) in bary.iter().zip(&self.corners) {
            x[0] += b * c[0];
            x[1] += b * c[1];
        }
        x
    }

    /// Value of the P1 field at barycentric coordinates `bary`.
    pub fn interpolate(&self, field: &NodalField, bary: &[f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (b, &n) in bary.iter().zip(&self.nodes) {
            let fv = field.values[n];
            for c in 0..3 {
                v[c] += b * fv[c];
            }
        }
        v
    }

    /// `grad[c] = ∇ field_c` on this element.
    pub fn gradient(&self, field: &NodalField) -> [[f64; 2]; 3] {
        let mut g = [[0.0; 2]; 3];
        for (l, &n) in self.nodes.iter().enumerate() {
            let fv = field.values[n];
            for c in 0..3 {
                g[c][0] += fv[c] * self.grads[l][0];
                g[c][1] += fv[c] * self.grads[l][1];
            }
        }
        g
    }

    /// Exact local mass matrix `∫ λ_i λ_j`.
    pub fn local_mass(&self) -> [[f64; 3]; 3] {
        let d = self.area / 6.0;
        let o = self.area / 12.0;
        [[d, o, o], [o, d, o], [o, o, d]]
    }

    /// Exact local stiffness matrix `∫ ∇λ_i · ∇λ_j`.
    pub fn local_stiffness(&self) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = self.area * (self.grads[i][0] * self.grads[j][0] + self.grads[i][1] * self.grads[j][1]);
            }
        }
        k
    }
}

/// Scalar operators shared by every vector form.
#[derive(Debug, Clone)]
pub struct AssembledOperators {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    /// Row sums of `mass`.
    pub lumped_mass: Vec<f64>,
}

impl AssembledOperators {
    pub fn assemble(mesh: &Mesh) -> Self {
        let elements: Vec<Element> = mesh.triangles().iter().map(|&t| Element::new(mesh, t)).collect();
        Self::from_elements(mesh.num_vertices(), &elements)
    }

    fn from_elements(n: usize, elements: &[Element]) -> Self {
        let mut m = CooBuilder::with_capacity(n, n, 9 * elements.len());
        let mut k = CooBuilder::with_capacity(n, n, 9 * elements.len());
        for el in elements {
            let (lm, lk) = (el.local_mass(), el.local_stiffness());
            for i in 0..3 {
                for j in 0..3 {
                    m.push(el.nodes[i], el.nodes[j], lm[i][j]);
                    k.push(el.nodes[i], el.nodes[j], lk[i][j]);
                }
            }
        }
        let mass = m.finalize().expect("element indices are in range");
        let stiffness = k.finalize().expect("element indices are in range");
        let lumped_mass = (0..n).map(|r| mass.row(r).map(|(_, v)| v).sum()).collect();
        Self {
            mass,
            stiffness,
            lumped_mass,
        }
    }
}

/// Which mass operator the discrete Laplacian and L² projection invert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassKind {
    #[default]
    Consistent,
    Lumped,
}

/// A single quadrature point on an element, passed to load integrands.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: [f64; 2],
    /// Quadrature weight times element area.
    pub weight: f64,
    /// Hat-function values (barycentric coordinates) at the point.
    pub basis: [f64; 3],
}

/// P1 space on a mesh together with its assembled scalar operators.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Mesh,
    elements: Vec<Element>,
    quad: QuadratureRule,
    ops: AssembledOperators,
    mass_kind: MassKind,
    mass_tol: f64,
}

impl FeSpace {
    pub const DEFAULT_MASS_TOL: f64 = 1e-12;

    pub fn new(mesh: Mesh) -> Self {
        let elements: Vec<Element> = mesh.triangles().iter().map(|&t| Element::new(&mesh, t)).collect();
        let ops = AssembledOperators::from_elements(mesh.num_vertices(), &elements);
        Self {
            mesh,
            elements,
            quad: QuadratureRule::degree4(),
            ops,
            mass_kind: MassKind::Consistent,
            mass_tol: Self::DEFAULT_MASS_TOL,
        }
    }

    pub fn with_mass_tol(mut self, tol: f64) -> Self {
        self.mass_tol = tol;
        self
    }

    pub fn with_mass_kind(mut self, kind: MassKind) -> Self {
        self.mass_kind = kind;
        self
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn ops(&self) -> &AssembledOperators {
        &self.ops
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn mass_tol(&self) -> f64 {
        self.mass_tol
    }

    pub fn num_nodes(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub(crate) fn check(&self, field: &NodalField) -> Result<(), FemError> {
        if field.len() != self.num_nodes() {
            return Err(FemError::FieldSize {
                expected: self.num_nodes(),
                found: field.len(),
            });
        }
        Ok(())
    }

    /// Visits every quadrature point of every element.
    pub fn for_each_quad_point(&self, mut f: impl FnMut(&Element, &QuadPoint)) {
        for el in &self.elements {
            for (bary, w) in self.quad.points.iter().zip(&self.quad.weights) {
                let qp = QuadPoint {
                    x: el.point(bary),
                    weight: w * el.area,
                    basis: *bary,
                };
                f(el, &qp);
            }
        }
    }

    /// `∫ f` over the domain for a scalar integrand evaluated per quadrature point.
    pub fn integrate(&self, mut f: impl FnMut(&Element, &QuadPoint) -> f64) -> f64 {
        let mut total = 0.0;
        self.for_each_quad_point(|el, qp| total += qp.weight * f(el, qp));
        total
    }

    /// Interleaved load vector `b[3j + c] = ∫ g_c λ_j`.
    pub fn load_vector(&self, mut g: impl FnMut(&Element, &QuadPoint) -> [f64; 3]) -> Vec<f64> {
        let mut b = vec![0.0; 3 * self.num_nodes()];
        self.for_each_quad_point(|el, qp| {
            let v = g(el, qp);
            for (l, &node) in el.nodes.iter().enumerate() {
                let s = qp.weight * qp.basis[l];
                for c in 0..3 {
                    b[3 * node + c] += s * v[c];
                }
            }
        });
        b
    }

    fn apply_scalar(&self, a: &CsrMatrix, u: &NodalField) -> Vec<f64> {
        let n = self.num_nodes();
        let mut out = vec![0.0; 3 * n];
        for c in 0..3 {
            let y = a.spmv(&u.component(c)).expect("field size checked by caller");
            for (i, v) in y.into_iter().enumerate() {
                out[3 * i + c] = v;
            }
        }
        out
    }

    /// `M_blk u` in interleaved layout.
    pub fn mass_apply(&self, u: &NodalField) -> Vec<f64> {
        self.apply_scalar(&self.ops.mass, u)
    }

    /// `K_blk u` in interleaved layout.
    pub fn stiffness_apply(&self, u: &NodalField) -> Vec<f64> {
        self.apply_scalar(&self.ops.stiffness, u)
    }

    /// L² inner product of two P1 fields.
    pub fn inner(&self, u: &NodalField, v: &NodalField) -> f64 {
        crate::linalg::dot(u.as_flat(), &self.mass_apply(v))
    }

    /// Solves `M z_c = rhs_c` for each component of an interleaved vector.
    pub fn mass_solve(&self, rhs: &[f64], what: &'static str) -> Result<NodalField, FemError> {
        let n = self.num_nodes();
        if rhs.len() != 3 * n {
            return Err(FemError::FieldSize {
                expected: n,
                found: rhs.len() / 3,
            });
        }
        let mut comps: [Vec<f64>; 3] = Default::default();
        for (c, comp) in comps.iter_mut().enumerate() {
            let b: Vec<f64> = (0..n).map(|i| rhs[3 * i + c]).collect();
            *comp = match self.mass_kind {
                MassKind::Lumped => b.iter().zip(&self.ops.lumped_mass).map(|(bi, mi)| bi / mi).collect(),
                MassKind::Consistent => {
                    let (x, stats) = solve_cg(&self.ops.mass, &b, self.mass_tol, 10 * n.max(10), Precond::Jacobi)
                        .map_err(|source| FemError::Solver { what, source })?;
                    if !stats.converged {
                        return Err(FemError::NotConverged { what, stats });
                    }
                    x
                }
            };
        }
        Ok(NodalField::from_components([&comps[0], &comps[1], &comps[2]]))
    }

    /// `Δ_h v`, defined by `⟨Δ_h v, χ⟩ = -⟨∇v, ∇χ⟩` for all `χ` in the space.
    pub fn discrete_laplacian(&self, v: &NodalField) -> Result<NodalField, FemError> {
        self.check(v)?;
        let rhs: Vec<f64> = self.stiffness_apply(v).into_iter().map(|x| -x).collect();
        self.mass_solve(&rhs, "discrete laplacian")
    }

    /// Nodal interpolant of a pointwise field.
    pub fn interpolate(&self, f: &dyn SpatialField) -> NodalField {
        NodalField::new(self.mesh.vertices().iter().map(|&p| f.value(p)).collect())
    }

    /// L² projection `P_h f` with the load integrated by the degree-4 rule.
    pub fn l2_project(&self, f: &dyn SpatialField) -> Result<NodalField, FemError> {
        let b = self.load_vector(|_, qp| f.value(qp.x));
        self.mass_solve(&b, "l2 projection")
    }

    /// L² projection of a quadrature-point integrand, e.g. `|u|²u`.
    pub fn l2_project_integrand(
        &self,
        g: impl FnMut(&Element, &QuadPoint) -> [f64; 3],
    ) -> Result<NodalField, FemError> {
        let b = self.load_vector(g);
        self.mass_solve(&b, "l2 projection")
    }

    /// Ritz projection: `⟨∇R_h u, ∇χ⟩ = ⟨∇u, ∇χ⟩` with `∫(R_h u - u) = 0`.
    ///
    /// The singular stiffness system is solved on the mean-zero complement and
    /// the continuous mean of `u` added back afterwards.
    pub fn ritz_project(&self, f: &dyn SpatialField) -> Result<NodalField, FemError> {
        let n = self.num_nodes();
        let mut b = vec![0.0; 3 * n];
        let mut mean = [0.0; 3];
        self.for_each_quad_point(|el, qp| {
            let grad = f.gradient(qp.x);
            let value = f.value(qp.x);
            for c in 0..3 {
                mean[c] += qp.weight * value[c];
            }
            for (l, &node) in el.nodes.iter().enumerate() {
                for c in 0..3 {
                    b[3 * node + c] += qp.weight * (grad[c][0] * el.grads[l][0] + grad[c][1] * el.grads[l][1]);
                }
            }
        });
        let area = self.mesh.area();
        let ones = vec![1.0; n];
        let m_ones = self.ops.mass.spmv(&ones).expect("sizes match");
        let mut comps: [Vec<f64>; 3] = Default::default();
        for (c, comp) in comps.iter_mut().enumerate() {
            let mut rhs: Vec<f64> = (0..n).map(|i| b[3 * i + c]).collect();
            let shift = rhs.iter().sum::<f64>() / n as f64;
            rhs.iter_mut().for_each(|r| *r -= shift);
            let (mut x, stats) = solve_cg(
                &self.ops.stiffness,
                &rhs,
                self.mass_tol,
                10 * n.max(10),
                Precond::Jacobi,
            )
            .map_err(|source| FemError::Solver {
                what: "ritz projection",
                source,
            })?;
            if !stats.converged {
                return Err(FemError::NotConverged {
                    what: "ritz projection",
                    stats,
                });
            }
            let discrete_mean = crate::linalg::dot(&x, &m_ones) / area;
            let target = mean[c] / area;
            x.iter_mut().for_each(|xi| *xi += target - discrete_mean);
            *comp = x;
        }
        Ok(NodalField::from_components([&comps[0], &comps[1], &comps[2]]))
    }

    /// Discrete effective field
    /// `H = σΔ_h u - κμu - κP_h(|u|²u) [- λe(e·u)]`.
    pub fn compute_discrete_field_h(
        &self,
        params: &LlbParams,
        u: &NodalField,
        include_anisotropy: bool,
    ) -> Result<NodalField, FemError> {
        self.check(u)?;
        let lap = self.discrete_laplacian(u)?;
        let cubic = self.l2_project_integrand(|el, qp| {
            let v = el.interpolate(u, &qp.basis);
            let s = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            [s * v[0], s * v[1], s * v[2]]
        })?;
        let e = params.e;
        let values = u
            .values()
            .iter()
            .zip(lap.values())
            .zip(cubic.values())
            .map(|((uv, lv), cv)| {
                let proj = if include_anisotropy {
                    params.lambda * (e[0] * uv[0] + e[1] * uv[1] + e[2] * uv[2])
                } else {
                    0.0
                };
                [0, 1, 2].map(|c| {
                    params.sigma * lv[c] - params.kappa * params.mu * uv[c] - params.kappa * cv[c] - proj * e[c]
                })
            })
            .collect();
        Ok(NodalField::new(values))
    }
}
