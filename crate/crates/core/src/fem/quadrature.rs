//! Symmetric quadrature on the reference triangle.

/// Barycentric points and weights normalised to sum to one, so that
/// `∫_T f ≈ |T| Σ w_q f(x_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

// Six-point rule exact for total degree 4.
const A1: f64 = 0.445_948_490_915_964_886_318_329_253_883_05;
const W1: f64 = 0.223_381_589_678_011_465_695_007_008_433_12;
const A2: f64 = 0.091_576_213_509_770_743_459_571_463_402_20;
const W2: f64 = 0.109_951_743_655_321_867_638_326_324_900_21;

impl QuadratureRule {
    /// The six-point degree-4 rule used for every variational integral.
    pub fn degree4() -> Self {
        let b1 = 1.0 - 2.0 * A1;
        let b2 = 1.0 - 2.0 * A2;
        Self {
            points: vec![
                [b1, A1, A1],
                [A1, b1, A1],
                [A1, A1, b1],
                [b2, A2, A2],
                [A2, b2, A2],
                [A2, A2, b2],
            ],
            weights: vec![W1, W1, W1, W2, W2, W2],
            degree: 4,
        }
    }

    /// Vertex-free three-point rule, exact for degree 2.
    pub fn degree2() -> Self {
        let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
        Self {
            points: vec![[b, a, a], [a, b, a], [a, a, b]],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` over the reference triangle `(0,0), (1,0), (0,1)`.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let area = 0.5;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * f(b[1], b[2]))
            .sum::<f64>()
            * area
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// ∫_ref x^i y^j = i! j! / (i + j + 2)!
    fn exact_monomial(i: u32, j: u32) -> f64 {
        factorial(i) * factorial(j) / factorial(i + j + 2)
    }

    #[test]
    fn weights_positive_and_normalised() {
        for rule in [QuadratureRule::degree4(), QuadratureRule::degree2()] {
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for p in &rule.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_through_declared_degree() {
        for rule in [QuadratureRule::degree4(), QuadratureRule::degree2()] {
            for total in 0..=rule.degree as u32 {
                for i in 0..=total {
                    let j = total - i;
                    let q = rule.integrate_reference(|x, y| x.powi(i as i32) * y.powi(j as i32));
                    let exact = exact_monomial(i, j);
                    assert!(
                        ((q - exact) / exact).abs() < 1e-14,
                        "degree {} rule fails on x^{i} y^{j}: {q} vs {exact}",
                        rule.degree
                    );
                }
            }
        }
    }

    #[test]
    fn degree4_is_not_exact_for_degree6() {
        let rule = QuadratureRule::degree4();
        let q = rule.integrate_reference(|x, _| x.powi(6));
        assert!((q - exact_monomial(6, 0)).abs() > 1e-8);
    }
}
