//! Independent oracles shared by the integration tests: dense linear algebra
//! and brute-force quadrature assembly with a different rule than the library.

#![allow(dead_code)]

use llb_core::fem::{FeSpace, NodalField};
use llb_core::linalg::CsrMatrix;
use llb_core::mesh::{Bounds, Mesh};
use llb_core::model::{CurrentField, LlbParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_space(m: usize) -> FeSpace {
    FeSpace::new(Mesh::build_structured(m, Bounds::centred_unit_square()).unwrap())
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_field(rng: &mut ChaCha8Rng, n: usize) -> NodalField {
    NodalField::from_flat(&random_vec(rng, 3 * n))
}

pub fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        assert!(m[piv][col].abs() > 1e-300, "singular oracle matrix");
        m.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (x[r] - s) / m[r][r];
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn dense_max_diff(a: &CsrMatrix, b: &[Vec<f64>]) -> f64 {
    a.to_dense()
        .iter()
        .zip(b)
        .map(|(ra, rb)| max_abs_diff(ra, rb))
        .fold(0.0, f64::max)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit(a: usize) -> [f64; 3] {
    let mut e = [0.0; 3];
    e[a] = 1.0;
    e
}

/// Seven-point rule of degree 5 (barycentric points, weights summing to 1).
pub fn degree5_rule() -> Vec<([f64; 3], f64)> {
    let s = 15f64.sqrt();
    let (a1, a2) = ((6.0 - s) / 21.0, (6.0 + s) / 21.0);
    let (w1, w2) = ((155.0 - s) / 1200.0, (155.0 + s) / 1200.0);
    let mut pts = vec![([1.0 / 3.0; 3], 9.0 / 40.0)];
    for (a, w) in [(a1, w1), (a2, w2)] {
        let b = 1.0 - 2.0 * a;
        pts.push(([b, a, a], w));
        pts.push(([a, b, a], w));
        pts.push(([a, a, b], w));
    }
    pts
}

/// Per-element geometry recomputed from the raw mesh.
struct Tri {
    nodes: [usize; 3],
    corners: [[f64; 2]; 3],
    area: f64,
    grads: [[f64; 2]; 3],
}

fn triangles(mesh: &Mesh) -> Vec<Tri> {
    mesh.triangles()
        .iter()
        .map(|&nodes| {
            let c = nodes.map(|n| mesh.vertices()[n]);
            let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
            // Gradient of λ_i: rotate the opposite edge by 90 degrees.
            let grads = [0, 1, 2].map(|i| {
                let (p, q) = (c[(i + 1) % 3], c[(i + 2) % 3]);
                [(p[1] - q[1]) / det, (q[0] - p[0]) / det]
            });
            Tri {
                nodes,
                corners: c,
                area: det.abs() / 2.0,
                grads,
            }
        })
        .collect()
}

fn at(t: &Tri, field: &NodalField, bary: &[f64; 3]) -> [f64; 3] {
    let mut v = [0.0; 3];
    for l in 0..3 {
        for c in 0..3 {
            v[c] += bary[l] * field.values()[t.nodes[l]][c];
        }
    }
    v
}

fn grad(t: &Tri, field: &NodalField) -> [[f64; 2]; 3] {
    let mut g = [[0.0; 2]; 3];
    for l in 0..3 {
        for c in 0..3 {
            for d in 0..2 {
                g[c][d] += field.values()[t.nodes[l]][c] * t.grads[l][d];
            }
        }
    }
    g
}

/// Integrand of a vector bilinear form at one point: the trial function is
/// `λ_i e_a`, the test function `λ_j e_b`.
pub struct Probe {
    pub x: [f64; 2],
    pub li: f64,
    pub lj: f64,
    pub gi: [f64; 2],
    pub gj: [f64; 2],
    pub a: usize,
    pub b: usize,
}

/// Dense `3N × 3N` assembly of a form given pointwise, rows indexed by test
/// functions and columns by trial functions.
fn dense_form(mesh: &Mesh, mut f: impl FnMut(&Tri, &[f64; 3], &Probe) -> f64) -> Vec<Vec<f64>> {
    let n = 3 * mesh.num_vertices();
    let mut a = vec![vec![0.0; n]; n];
    let rule = degree5_rule();
    for t in triangles(mesh) {
        for (bary, w) in &rule {
            let x = [0, 1].map(|d| (0..3).map(|l| bary[l] * t.corners[l][d]).sum::<f64>());
            for i in 0..3 {
                for j in 0..3 {
                    for ca in 0..3 {
                        for cb in 0..3 {
                            let p = Probe {
                                x,
                                li: bary[i],
                                lj: bary[j],
                                gi: t.grads[i],
                                gj: t.grads[j],
                                a: ca,
                                b: cb,
                            };
                            a[3 * t.nodes[j] + cb][3 * t.nodes[i] + ca] += w * t.area * f(&t, bary, &p);
                        }
                    }
                }
            }
        }
    }
    a
}

pub fn dense_scalar_mass(mesh: &Mesh) -> Vec<Vec<f64>> {
    scalar_part(&dense_form(mesh, |_, _, p| if p.a == p.b { p.li * p.lj } else { 0.0 }))
}

pub fn dense_scalar_stiffness(mesh: &Mesh) -> Vec<Vec<f64>> {
    scalar_part(&dense_form(mesh, |_, _, p| {
        if p.a == p.b {
            p.gi[0] * p.gj[0] + p.gi[1] * p.gj[1]
        } else {
            0.0
        }
    }))
}

fn scalar_part(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len() / 3;
    (0..n).map(|r| (0..n).map(|c| a[3 * r][3 * c]).collect()).collect()
}

/// `(1/k)⟨v,w⟩ + A₁ + B + C` of the linear scheme, written term by term.
pub fn dense_linear_scheme(
    mesh: &Mesh,
    p: &LlbParams,
    phi: &NodalField,
    nu: &CurrentField,
    t_eval: f64,
    k: f64,
) -> Vec<Vec<f64>> {
    dense_form(mesh, |t, bary, q| {
        let v = unit(q.a).map(|c| c * q.li);
        let w = unit(q.b).map(|c| c * q.lj);
        let gg = q.gi[0] * q.gj[0] + q.gi[1] * q.gj[1];
        let ph = at(t, phi, bary);
        let gph = grad(t, phi);
        let nuq = nu.eval(q.x, t_eval);
        let conv = [0, 1, 2].map(|c| nuq[0] * gph[c][0] + nuq[1] * gph[c][1]);
        let mut s = dot(v, w) / k;
        s += p.alpha * p.sigma * gg * (q.a == q.b) as i32 as f64;
        s += p.alpha * p.kappa * p.mu * dot(v, w);
        s += p.alpha * p.lambda * dot(p.e, v) * dot(p.e, w);
        s += p.alpha * p.kappa * dot(ph, ph) * dot(v, w);
        // -γσ⟨φ×∇v, ∇w⟩ summed over both partial derivatives.
        for d in 0..2 {
            let dv = unit(q.a).map(|c| c * q.gi[d]);
            let dw = unit(q.b).map(|c| c * q.gj[d]);
            s -= p.gamma * p.sigma * dot(cross(ph, dv), dw);
        }
        s -= p.gamma * p.lambda * dot(p.e, ph) * dot(cross(v, p.e), w);
        s -= p.beta2 * dot(cross(v, conv), w);
        s
    })
}

/// Fixed-point iterate matrix
/// `(1/k)⟨v,w⟩ + γ⟨v×H,w⟩ + ασ⟨∇v,∇w⟩ + ακ⟨|u|²v,w⟩ + ακμ⟨v,w⟩ + αλ⟨e(e·v),w⟩`.
pub fn dense_iterate_matrix(mesh: &Mesh, p: &LlbParams, u: &NodalField, h: &NodalField, k: f64) -> Vec<Vec<f64>> {
    dense_form(mesh, |t, bary, q| {
        let v = unit(q.a).map(|c| c * q.li);
        let w = unit(q.b).map(|c| c * q.lj);
        let gg = q.gi[0] * q.gj[0] + q.gi[1] * q.gj[1];
        let uq = at(t, u, bary);
        let hq = at(t, h, bary);
        dot(v, w) / k
            + p.gamma * dot(cross(v, hq), w)
            + p.alpha * p.sigma * gg * (q.a == q.b) as i32 as f64
            + p.alpha * p.kappa * dot(uq, uq) * dot(v, w)
            + p.alpha * p.kappa * p.mu * dot(v, w)
            + p.alpha * p.lambda * dot(p.e, v) * dot(p.e, w)
    })
}

/// Generic coefficients with every term switched on.
pub fn busy_params() -> LlbParams {
    let e: [f64; 3] = [0.3, -0.4, 0.5];
    let n = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
    LlbParams {
        gamma: 1.7,
        alpha: 0.8,
        beta1: 0.3,
        beta2: -0.6,
        sigma: 1.3,
        kappa: 0.9,
        mu: 0.7,
        lambda: 0.4,
        e: e.map(|c| c / n),
    }
}

/// Parses a JSON config, panicking on errors.
pub fn config(value: serde_json::Value) -> llb_core::app::config::SimulationConfig {
    llb_core::app::config::parse_config(&value.to_string()).unwrap()
}

/// Unit coefficients and no current on the centred unit square.
pub fn unit_config(scheme: &str, m: usize, k: f64, steps: usize) -> llb_core::app::config::SimulationConfig {
    config(serde_json::json!({
        "scheme": scheme,
        "mesh_divisions": m,
        "params": {
            "gamma": 1.0, "alpha": 1.0, "beta1": 0.0, "beta2": 0.0, "sigma": 1.0,
            "kappa": 1.0, "mu": 1.0, "lambda": 0.0, "e": [0.0, 0.0, 1.0]
        },
        "initial": {"kind": "vortex"},
        "time_step": k,
        "final_time": k * steps as f64,
        "validate_current_boundary": false
    }))
}
