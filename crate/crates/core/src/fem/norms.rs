//! Discrete norms and the micromagnetic energy of P1 fields.

use serde::{Deserialize, Serialize};

use super::{FeSpace, NodalField};
use crate::linalg::dot;
use crate::model::LlbParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub h1: f64,
    /// Largest nodal Euclidean length.
    pub linf: f64,
    pub l4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub exchange: f64,
    pub internal: f64,
    pub anisotropy: f64,
    pub total: f64,
}

impl FeSpace {
    pub fn l2_norm_sq(&self, v: &NodalField) -> f64 {
        dot(v.as_flat(), &self.mass_apply(v)).max(0.0)
    }

    pub fn h1_semi_sq(&self, v: &NodalField) -> f64 {
        dot(v.as_flat(), &self.stiffness_apply(v)).max(0.0)
    }

    /// `∫ |v|⁴`, exact for P1 under the degree-4 rule.
    pub fn l4_pow4(&self, v: &NodalField) -> f64 {
        self.integrate(|el, qp| {
            let x = el.interpolate(v, &qp.basis);
            let s = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            s * s
        })
    }

    pub fn norms(&self, v: &NodalField) -> Norms {
        let l2sq = self.l2_norm_sq(v);
        let h1sq = self.h1_semi_sq(v);
        Norms {
            l2: l2sq.sqrt(),
            h1_semi: h1sq.sqrt(),
            h1: (l2sq + h1sq).sqrt(),
            linf: v.max_norm(),
            l4: self.l4_pow4(v).sqrt().sqrt(),
        }
    }

    /// `σ/2‖∇u‖² + κμ/2‖u‖² + κ/4‖u‖⁴_{L⁴} + λ/2∫(e·u)²`.
    pub fn energy(&self, params: &LlbParams, u: &NodalField) -> EnergyBreakdown {
        let e = params.e;
        let exchange = 0.5 * params.sigma * self.h1_semi_sq(u);
        let internal = 0.5 * params.kappa * params.mu * self.l2_norm_sq(u) + 0.25 * params.kappa * self.l4_pow4(u);
        let anisotropy = if params.lambda == 0.0 {
            0.0
        } else {
            0.5 * params.lambda
                * self.integrate(|el, qp| {
                    let x = el.interpolate(u, &qp.basis);
                    let s = e[0] * x[0] + e[1] * x[1] + e[2] * x[2];
                    s * s
                })
        };
        EnergyBreakdown {
            exchange,
            internal,
            anisotropy,
            total: exchange + internal + anisotropy,
        }
    }
}
