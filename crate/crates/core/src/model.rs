//! Physical coefficients, current densities, initial data and the
//! continuous-theory reference bounds.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;

/// Coefficients of the LLB equation above the Curie temperature.
///
/// `e` is the uniaxial anisotropy axis. The applied field is taken to be zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlbParams {
    pub gamma: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub mu: f64,
    pub lambda: f64,
    pub e: [f64; 3],
}

impl LlbParams {
    /// All coefficients one, no torques, no anisotropy.
    pub fn unit() -> Self {
        Self {
            gamma: 1.0,
            alpha: 1.0,
            beta1: 0.0,
            beta2: 0.0,
            sigma: 1.0,
            kappa: 1.0,
            mu: 1.0,
            lambda: 0.0,
            e: [0.0, 0.0, 1.0],
        }
    }

    /// Checks the above-Curie sign conditions and normalises `e`.
    ///
    /// The axis may deviate from unit length by at most `1e-8`; within that
    /// band it is rescaled with a warning.
    pub fn validated(mut self) -> Result<Self, String> {
        let named = [
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("sigma", self.sigma),
            ("kappa", self.kappa),
            ("mu", self.mu),
            ("lambda", self.lambda),
        ];
        for (name, v) in named {
            if !v.is_finite() {
                return Err(format!("params.{name} must be finite"));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("sigma", self.sigma),
            ("kappa", self.kappa),
            ("mu", self.mu),
        ] {
            if v <= 0.0 {
                return Err(format!("params.{name} must be positive, got {v}"));
            }
        }
        if self.lambda < 0.0 {
            return Err(format!("params.lambda must be non-negative, got {}", self.lambda));
        }
        let len = norm3(self.e);
        if !len.is_finite() || (len - 1.0).abs() > 1e-8 {
            return Err(format!("params.e must be a unit vector, |e| = {len}"));
        }
        if len != 1.0 {
            log::warn!("anisotropy axis has length {len}; normalising");
            self.e = scale3(self.e, 1.0 / len);
        }
        Ok(self)
    }

    /// `ακμ`, the linear decay rate of the magnitude.
    pub fn decay_rate(&self) -> f64 {
        self.alpha * self.kappa * self.mu
    }
}

/// Spin-polarised current density `ν : D -> R²`.
///
/// All kinds are static; `eval` keeps a time argument for signature stability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurrentField {
    Zero,
    Constant {
        vector: [f64; 2],
    },
    /// `A ((0.25 - x²)(0.25 - y²), 0)`, vanishing on the boundary of `[-0.5, 0.5]²`.
    Bump {
        amplitude: f64,
    },
}

impl CurrentField {
    pub fn eval(&self, p: [f64; 2], _t: f64) -> [f64; 2] {
        match *self {
            CurrentField::Zero => [0.0, 0.0],
            CurrentField::Constant { vector } => vector,
            CurrentField::Bump { amplitude } => [amplitude * (0.25 - p[0] * p[0]) * (0.25 - p[1] * p[1]), 0.0],
        }
    }

    /// `∇·ν` at `p`.
    pub fn divergence(&self, p: [f64; 2], _t: f64) -> f64 {
        match *self {
            CurrentField::Zero | CurrentField::Constant { .. } => 0.0,
            CurrentField::Bump { amplitude } => -2.0 * amplitude * p[0] * (0.25 - p[1] * p[1]),
        }
    }

    /// `max |ν|` over the domain `[-0.5, 0.5]²` used by the presets.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            CurrentField::Zero => 0.0,
            CurrentField::Constant { vector } => vector[0].hypot(vector[1]),
            CurrentField::Bump { amplitude } => amplitude.abs() * 0.0625,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            CurrentField::Zero => true,
            CurrentField::Constant { vector } => vector == [0.0, 0.0],
            CurrentField::Bump { amplitude } => amplitude == 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            CurrentField::Zero => true,
            CurrentField::Constant { vector } => vector.iter().all(|v| v.is_finite()),
            CurrentField::Bump { amplitude } => amplitude.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err("current contains non-finite values".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCompatReport {
    pub compatible: bool,
    /// Largest `|ν·n|` over boundary-edge midpoints.
    pub max_normal_flux: f64,
    /// Largest `|ν|` over vertices and boundary-edge midpoints.
    pub max_magnitude: f64,
    pub worst_point: Option<[f64; 2]>,
}

/// Samples `ν·n` at boundary-edge midpoints; compatible iff
/// `max |ν·n| <= 1e-10 · ‖ν‖∞`.
pub fn check_boundary_compat(cf: &CurrentField, mesh: &Mesh, t: f64) -> BoundaryCompatReport {
    let verts = mesh.vertices();
    let mut max_flux: f64 = 0.0;
    let mut worst = None;
    let mut max_mag = verts
        .iter()
        .map(|&p| {
            let v = cf.eval(p, t);
            v[0].hypot(v[1])
        })
        .fold(0.0, f64::max);
    for edge in mesh.boundary_edges() {
        let (a, b) = (verts[edge.vertices[0]], verts[edge.vertices[1]]);
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let v = cf.eval(mid, t);
        max_mag = max_mag.max(v[0].hypot(v[1]));
        let flux = (v[0] * edge.normal[0] + v[1] * edge.normal[1]).abs();
        if flux > max_flux {
            max_flux = flux;
            worst = Some(mid);
        }
    }
    BoundaryCompatReport {
        compatible: max_flux <= 1e-10 * max_mag,
        max_normal_flux: max_flux,
        max_magnitude: max_mag,
        worst_point: worst,
    }
}

/// Initial magnetisation presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDataSpec {
    /// Bubble-like profile pointing along `+z` at the centre.
    Bubble,
    /// In-plane vortex `(-y, x, 0)`.
    Vortex,
    /// Vortex with a small out-of-plane component `(-y, x, lift)`.
    VortexLifted {
        #[serde(default = "default_lift")]
        lift: f64,
    },
    Constant {
        value: [f64; 3],
    },
    /// `offset + x·dx + y·dy`, reproduced exactly by P1 elements.
    Affine {
        offset: [f64; 3],
        dx: [f64; 3],
        dy: [f64; 3],
    },
    /// `A (sin πx, sin πy, sin πx sin πy)`: smooth, with zero normal derivative
    /// on the boundary of `[-0.5, 0.5]²`.
    Wave {
        amplitude: f64,
    },
}

fn default_lift() -> f64 {
    0.01
}

/// A vector field on the plane that can be sampled for projections.
pub trait SpatialField {
    fn value(&self, p: [f64; 2]) -> [f64; 3];

    /// `gradient(p)[c] = (∂x f_c, ∂y f_c)`. Central differences by default.
    fn gradient(&self, p: [f64; 2]) -> [[f64; 2]; 3] {
        let step = 1e-6;
        let mut g = [[0.0; 2]; 3];
        for d in 0..2 {
            let mut plus = p;
            let mut minus = p;
            plus[d] += step;
            minus[d] -= step;
            let (fp, fm) = (self.value(plus), self.value(minus));
            for c in 0..3 {
                g[c][d] = (fp[c] - fm[c]) / (2.0 * step);
            }
        }
        g
    }
}

/// Adapts a closure into a [`SpatialField`] with finite-difference gradients.
pub struct FnField<F>(pub F);

impl<F: Fn([f64; 2]) -> [f64; 3]> SpatialField for FnField<F> {
    fn value(&self, p: [f64; 2]) -> [f64; 3] {
        (self.0)(p)
    }
}

impl InitialDataSpec {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            InitialDataSpec::Bubble | InitialDataSpec::Vortex => true,
            InitialDataSpec::VortexLifted { lift } => lift.is_finite(),
            InitialDataSpec::Constant { value } => finite(value),
            InitialDataSpec::Affine { offset, dx, dy } => finite(offset) && finite(dx) && finite(dy),
            InitialDataSpec::Wave { amplitude } => amplitude.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err("initial data contains non-finite values".into())
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 3] {
        let [x, y] = p;
        match *self {
            InitialDataSpec::Bubble => {
                let r = x.hypot(y);
                let s = 1.0 - 2.0 * r;
                let s4 = s.powi(4);
                let s8 = s4 * s4;
                let r2 = r * r;
                [2.0 * x * s4, 2.0 * y * s4, (s8 - r2) / (s8 + r2)]
            }
            InitialDataSpec::Vortex => [-y, x, 0.0],
            InitialDataSpec::VortexLifted { lift } => [-y, x, lift],
            InitialDataSpec::Constant { value } => value,
            InitialDataSpec::Affine { offset, dx, dy } => [0, 1, 2].map(|c| offset[c] + x * dx[c] + y * dy[c]),
            InitialDataSpec::Wave { amplitude } => {
                let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
                [amplitude * sx, amplitude * sy, amplitude * sx * sy]
            }
        }
    }

    pub fn eval_gradient(&self, p: [f64; 2]) -> [[f64; 2]; 3] {
        let [x, y] = p;
        match *self {
            InitialDataSpec::Bubble => {
                let r = x.hypot(y);
                if r == 0.0 {
                    // The profile has a cone point at the origin; use the
                    // symmetric (averaged) derivative there.
                    return [[2.0, 0.0], [0.0, 2.0], [0.0, 0.0]];
                }
                let s = 1.0 - 2.0 * r;
                let s3 = s.powi(3);
                let s4 = s3 * s;
                let s7 = s4 * s3;
                let s8 = s4 * s4;
                let r2 = r * r;
                let dr = [x / r, y / r];
                let ds4 = dr.map(|d| -8.0 * s3 * d);
                let ds8 = dr.map(|d| -16.0 * s7 * d);
                let dr2 = [2.0 * x, 2.0 * y];
                let denom = (s8 + r2) * (s8 + r2);
                let mut g = [[0.0; 2]; 3];
                for d in 0..2 {
                    g[0][d] = 2.0 * x * ds4[d] + if d == 0 { 2.0 * s4 } else { 0.0 };
                    g[1][d] = 2.0 * y * ds4[d] + if d == 1 { 2.0 * s4 } else { 0.0 };
                    g[2][d] = 2.0 * (ds8[d] * r2 - s8 * dr2[d]) / denom;
                }
                g
            }
            InitialDataSpec::Vortex | InitialDataSpec::VortexLifted { .. } => [[0.0, -1.0], [1.0, 0.0], [0.0, 0.0]],
            InitialDataSpec::Constant { .. } => [[0.0; 2]; 3],
            InitialDataSpec::Affine { dx, dy, .. } => [0, 1, 2].map(|c| [dx[c], dy[c]]),
            InitialDataSpec::Wave { amplitude } => {
                let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
                let (cx, cy) = (PI * (PI * x).cos(), PI * (PI * y).cos());
                [
                    [amplitude * cx, 0.0],
                    [0.0, amplitude * cy],
                    [amplitude * cx * sy, amplitude * sx * cy],
                ]
            }
        }
    }
}

impl SpatialField for InitialDataSpec {
    fn value(&self, p: [f64; 2]) -> [f64; 3] {
        self.eval(p)
    }

    fn gradient(&self, p: [f64; 2]) -> [[f64; 2]; 3] {
        self.eval_gradient(p)
    }
}

/// Values of the continuous decay envelopes at time `t` (valid for `ν = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEnvelopes {
    pub linf_bound: f64,
    pub energy_bound: f64,
}

/// `‖u(t)‖∞ <= e^{-ακμt}‖u₀‖∞` and `E(u(t)) <= e^{-2ακμt}E(u₀)`.
pub fn decay_envelopes(params: &LlbParams, t: f64, u0_linf: f64, e0: f64) -> DecayEnvelopes {
    let rate = params.decay_rate();
    DecayEnvelopes {
        linf_bound: (-rate * t).exp() * u0_linf,
        energy_bound: (-2.0 * rate * t).exp() * e0,
    }
}

/// Uniform-in-time `L∞` bound `‖u₀‖∞ + β₁ ν∞ / √α` in the presence of current.
pub fn linf_growth_bound(params: &LlbParams, nu_inf: f64, u0_linf: f64) -> f64 {
    u0_linf + params.beta1.abs() * nu_inf / params.alpha.sqrt()
}

/// The four numerical experiments on `[-0.5, 0.5]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small current density, bubble data.
    Sim1,
    /// As `Sim1` with a large current density.
    Sim2,
    /// Adiabatic torque only, vortex data.
    Sim3,
    /// No current, no anisotropy; energy dissipation.
    Sim4,
}

impl Preset {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sim1" => Some(Preset::Sim1),
            "sim2" => Some(Preset::Sim2),
            "sim3" => Some(Preset::Sim3),
            "sim4" => Some(Preset::Sim4),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Sim1 => "sim1",
            Preset::Sim2 => "sim2",
            Preset::Sim3 => "sim3",
            Preset::Sim4 => "sim4",
        }
    }

    pub fn params(&self) -> LlbParams {
        match self {
            Preset::Sim1 | Preset::Sim2 => LlbParams {
                gamma: 2.2e5,
                alpha: 1.0e5,
                beta1: 0.1,
                beta2: -0.01,
                sigma: 1.3e-6,
                kappa: 1.0,
                mu: 1.0e-6,
                lambda: 1.0e-3,
                e: [0.0, 1.0, 0.0],
            },
            Preset::Sim3 => LlbParams {
                gamma: 2.3e5,
                alpha: 2.0e5,
                beta1: 0.2,
                beta2: 0.0,
                sigma: 1.0e-6,
                kappa: 2.0,
                mu: 2.0e-6,
                lambda: 0.01,
                e: [0.0, 0.0, 1.0],
            },
            // No beta1 is given for this experiment; with zero current it is inert.
            Preset::Sim4 => LlbParams {
                gamma: 2.5e12,
                alpha: 0.2,
                beta1: 0.0,
                beta2: 0.0,
                sigma: 1.0e-10,
                kappa: 0.1,
                mu: 1.0e-7,
                lambda: 0.0,
                e: [0.0, 0.0, 1.0],
            },
        }
    }

    pub fn current(&self) -> CurrentField {
        match self {
            Preset::Sim1 => CurrentField::Constant { vector: [1e4, 0.0] },
            Preset::Sim2 => CurrentField::Constant { vector: [2e6, 0.0] },
            Preset::Sim3 => CurrentField::Constant { vector: [0.0, 1e4] },
            Preset::Sim4 => CurrentField::Zero,
        }
    }

    pub fn initial(&self) -> InitialDataSpec {
        match self {
            Preset::Sim1 | Preset::Sim2 => InitialDataSpec::Bubble,
            Preset::Sim3 => InitialDataSpec::Vortex,
            Preset::Sim4 => InitialDataSpec::VortexLifted { lift: 0.01 },
        }
    }

    pub fn time_step(&self) -> f64 {
        match self {
            Preset::Sim4 => 1e-5,
            _ => 1e-6,
        }
    }

    /// Default final time (the last snapshot time of each experiment).
    pub fn final_time(&self) -> f64 {
        match self {
            Preset::Sim1 => 2e-3,
            Preset::Sim2 => 5e-5,
            Preset::Sim3 => 5e-3,
            Preset::Sim4 => 2e-3,
        }
    }
}

pub(crate) fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn scale3(v: [f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}
