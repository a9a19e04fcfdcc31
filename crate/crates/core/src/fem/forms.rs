//! Block assembly of the step matrices and load vectors.
//!
//! Matrix rows index test functions and columns trial functions: entry
//! `(3j + b, 3i + a)` is the form evaluated at trial `λ_i e_a`, test `λ_j e_b`.

use super::{Element, FeSpace, NodalField, QuadPoint};
use crate::linalg::{CooBuilder, CsrMatrix};
use crate::model::{CurrentField, LlbParams};

/// Selects summands of `(1/k)⟨v,w⟩ + A₁ + B + C` for the linear scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearTerms {
    pub time: bool,
    pub a1: bool,
    pub b: bool,
    pub c: bool,
}

impl LinearTerms {
    pub const ALL: Self = Self {
        time: true,
        a1: true,
        b: true,
        c: true,
    };
    pub const NONE: Self = Self {
        time: false,
        a1: false,
        b: false,
        c: false,
    };
}

/// Selects summands of the fixed-point iterate matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterateTerms {
    pub time: bool,
    /// `γ⟨v × H, w⟩`
    pub cross: bool,
    /// `ασ⟨∇v,∇w⟩ + ακμ⟨v,w⟩ + αλ⟨e(e·v),w⟩`
    pub linear: bool,
    /// `ακ⟨|u|²v, w⟩`
    pub cubic: bool,
}

impl IterateTerms {
    pub const ALL: Self = Self {
        time: true,
        cross: true,
        linear: true,
        cubic: true,
    };
    pub const NONE: Self = Self {
        time: false,
        cross: false,
        linear: false,
        cubic: false,
    };
}

type Block = [[f64; 3]; 3];
/// `local[test][trial][b][a]` on one element.
type LocalBlocks = [[Block; 3]; 3];

/// `cross_block(g)[b][a] = (e_a × g)_b`.
pub(crate) fn cross_block(g: [f64; 3]) -> Block {
    [[0.0, g[2], -g[1]], [-g[2], 0.0, g[0]], [g[1], -g[0], 0.0]]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `(ν·∇)u` for an elementwise-constant gradient.
fn convective(nu: [f64; 2], grad: &[[f64; 2]; 3]) -> [f64; 3] {
    [0, 1, 2].map(|c| nu[0] * grad[c][0] + nu[1] * grad[c][1])
}

fn add_scaled(block: &mut Block, src: &Block, s: f64) {
    for b in 0..3 {
        for a in 0..3 {
            block[b][a] += s * src[b][a];
        }
    }
}

fn add_diag(block: &mut Block, s: f64) {
    for (c, row) in block.iter_mut().enumerate() {
        row[c] += s;
    }
}

impl FeSpace {
    fn assemble_blocks(&self, mut local: impl FnMut(&Element, &QuadPoint, &mut LocalBlocks)) -> CsrMatrix {
        let n = 3 * self.num_nodes();
        let mut coo = CooBuilder::with_capacity(n, n, 81 * self.elements.len());
        for el in &self.elements {
            let mut blocks: LocalBlocks = [[[[0.0; 3]; 3]; 3]; 3];
            for (bary, w) in self.quad.points.iter().zip(&self.quad.weights) {
                let qp = QuadPoint {
                    x: el.point(bary),
                    weight: w * el.area,
                    basis: *bary,
                };
                local(el, &qp, &mut blocks);
            }
            for (lj, row) in blocks.iter().enumerate() {
                for (li, block) in row.iter().enumerate() {
                    let (j, i) = (el.nodes[lj], el.nodes[li]);
                    for (b, brow) in block.iter().enumerate() {
                        for (a, &v) in brow.iter().enumerate() {
                            coo.push(3 * j + b, 3 * i + a, v);
                        }
                    }
                }
            }
        }
        coo.finalize().expect("element indices are in range")
    }

    /// Linear-scheme step matrix `(1/k)⟨v,w⟩ + A(φ; v, w)` with `φ = u^{n-1}`.
    pub fn assemble_linear_scheme_matrix(
        &self,
        params: &LlbParams,
        phi: &NodalField,
        nu: &CurrentField,
        t: f64,
        k: f64,
    ) -> CsrMatrix {
        self.assemble_linear_scheme_terms(params, phi, nu, t, k, LinearTerms::ALL)
    }

    pub fn assemble_linear_scheme_terms(
        &self,
        params: &LlbParams,
        phi: &NodalField,
        nu: &CurrentField,
        t: f64,
        k: f64,
        terms: LinearTerms,
    ) -> CsrMatrix {
        assert_eq!(phi.len(), self.num_nodes(), "phi lives on a different mesh");
        let p = params;
        let e = p.e;
        let aniso = {
            let mut blk = [[0.0; 3]; 3];
            for b in 0..3 {
                for a in 0..3 {
                    blk[b][a] = e[a] * e[b];
                }
            }
            blk
        };
        let e_cross = cross_block(e);
        let mass_coeff = if terms.time { 1.0 / k } else { 0.0 } + if terms.a1 { p.alpha * p.kappa * p.mu } else { 0.0 };
        let stiff_coeff = if terms.a1 { p.alpha * p.sigma } else { 0.0 };

        self.assemble_blocks(|el, qp, blocks| {
            let phi_q = el.interpolate(phi, &qp.basis);
            let grad_phi = el.gradient(phi);
            let mut mass_blk = [[0.0; 3]; 3];
            add_diag(&mut mass_blk, mass_coeff);
            if terms.a1 {
                add_scaled(&mut mass_blk, &aniso, p.alpha * p.lambda);
            }
            if terms.b {
                add_diag(&mut mass_blk, p.alpha * p.kappa * dot3(phi_q, phi_q));
            }
            let mut stiff_blk = [[0.0; 3]; 3];
            add_diag(&mut stiff_blk, stiff_coeff);
            if terms.c {
                // -γσ⟨φ×∇v,∇w⟩ has block +γσ cross_block(φ) against ∇λ_i·∇λ_j.
                add_scaled(&mut stiff_blk, &cross_block(phi_q), p.gamma * p.sigma);
                add_scaled(&mut mass_blk, &e_cross, -p.gamma * p.lambda * dot3(e, phi_q));
                if p.beta2 != 0.0 {
                    let g = convective(nu.eval(qp.x, t), &grad_phi);
                    add_scaled(&mut mass_blk, &cross_block(g), -p.beta2);
                }
            }
            for lj in 0..3 {
                for li in 0..3 {
                    let nn = qp.weight * qp.basis[li] * qp.basis[lj];
                    let gg = qp.weight * (el.grads[li][0] * el.grads[lj][0] + el.grads[li][1] * el.grads[lj][1]);
                    let blk = &mut blocks[lj][li];
                    add_scaled(blk, &mass_blk, nn);
                    add_scaled(blk, &stiff_blk, gg);
                }
            }
        })
    }

    /// Load vector of `β₁⟨(ν·∇)u_prev, χ⟩` in convective form.
    pub fn assemble_d_rhs(&self, params: &LlbParams, u_prev: &NodalField, nu: &CurrentField, t: f64) -> Vec<f64> {
        assert_eq!(u_prev.len(), self.num_nodes(), "field lives on a different mesh");
        if params.beta1 == 0.0 || nu.is_zero() {
            return vec![0.0; 3 * self.num_nodes()];
        }
        self.load_vector(|el, qp| {
            let g = convective(nu.eval(qp.x, t), &el.gradient(u_prev));
            g.map(|v| params.beta1 * v)
        })
    }

    /// Load vector of `⟨u × h, χ⟩` with both fields interpolated at quadrature points.
    pub fn cross_load(&self, u: &NodalField, h: &NodalField) -> Vec<f64> {
        self.load_vector(|el, qp| cross(el.interpolate(u, &qp.basis), el.interpolate(h, &qp.basis)))
    }

    /// Load vector of `⟨(ν·∇)u, χ⟩`.
    pub fn convective_load(&self, u: &NodalField, nu: &CurrentField, t: f64) -> Vec<f64> {
        self.load_vector(|el, qp| convective(nu.eval(qp.x, t), &el.gradient(u)))
    }

    /// Load vector of `⟨u × (ν·∇)u, χ⟩`.
    pub fn torque_load(&self, u: &NodalField, nu: &CurrentField, t: f64) -> Vec<f64> {
        self.load_vector(|el, qp| {
            cross(
                el.interpolate(u, &qp.basis),
                convective(nu.eval(qp.x, t), &el.gradient(u)),
            )
        })
    }

    /// Fixed-point iterate matrix
    /// `(1/k)⟨v,w⟩ + γ⟨v×H,w⟩ + ασ⟨∇v,∇w⟩ + ακ⟨|u|²v,w⟩ + ακμ⟨v,w⟩ + αλ⟨e(e·v),w⟩`.
    pub fn assemble_nonlinear_iterate_matrix(
        &self,
        params: &LlbParams,
        u_iter: &NodalField,
        h_iter: &NodalField,
        k: f64,
    ) -> CsrMatrix {
        self.assemble_nonlinear_iterate_terms(params, u_iter, h_iter, k, IterateTerms::ALL)
    }

    pub fn assemble_nonlinear_iterate_terms(
        &self,
        params: &LlbParams,
        u_iter: &NodalField,
        h_iter: &NodalField,
        k: f64,
        terms: IterateTerms,
    ) -> CsrMatrix {
        assert_eq!(u_iter.len(), self.num_nodes(), "iterate lives on a different mesh");
        assert_eq!(h_iter.len(), self.num_nodes(), "field lives on a different mesh");
        let p = params;
        let e = p.e;
        let mut base = [[0.0; 3]; 3];
        if terms.time {
            add_diag(&mut base, 1.0 / k);
        }
        if terms.linear {
            add_diag(&mut base, p.alpha * p.kappa * p.mu);
            for b in 0..3 {
                for a in 0..3 {
                    base[b][a] += p.alpha * p.lambda * e[a] * e[b];
                }
            }
        }
        let stiff_coeff = if terms.linear { p.alpha * p.sigma } else { 0.0 };

        self.assemble_blocks(|el, qp, blocks| {
            let mut mass_blk = base;
            if terms.cubic {
                let u = el.interpolate(u_iter, &qp.basis);
                add_diag(&mut mass_blk, p.alpha * p.kappa * dot3(u, u));
            }
            if terms.cross {
                add_scaled(&mut mass_blk, &cross_block(el.interpolate(h_iter, &qp.basis)), p.gamma);
            }
            for lj in 0..3 {
                for li in 0..3 {
                    let nn = qp.weight * qp.basis[li] * qp.basis[lj];
                    let gg = qp.weight * (el.grads[li][0] * el.grads[lj][0] + el.grads[li][1] * el.grads[lj][1]);
                    let blk = &mut blocks[lj][li];
                    add_scaled(blk, &mass_blk, nn);
                    add_diag(blk, stiff_coeff * gg);
                }
            }
        })
    }
}
