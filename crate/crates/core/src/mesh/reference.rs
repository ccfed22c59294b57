//! Gauss-Lobatto-Legendre points and the reference element `[-1, 1]^3`.

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Evaluates the Legendre polynomials `P_{n-1}(x)` and `P_n(x)` by the three-term recurrence.
pub(crate) fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    if n == 0 {
        return (0.0, prev);
    }
    let mut cur = x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Returns the `N + 1` Gauss-Lobatto-Legendre nodes and weights on `[-1, 1]`.
///
/// Nodes are the endpoints together with the roots of `P_N'`, found by Newton
/// iteration from the Chebyshev-Gauss-Lobatto points. The result is
/// symmetrized so that `nodes[i] == -nodes[N - i]` holds exactly.
pub fn gll_nodes_weights(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order < 1 {
        return Err(Error::InvalidOrder(order));
    }
    let n = order;
    let nf = n as f64;
    let mut nodes = vec![0.0; n + 1];
    let mut weights = vec![0.0; n + 1];

    for i in 0..=n {
        // Newton on (1 - x^2) P_N'(x) written through the recurrence
        // x P_N - P_{N-1} = 0, the classic Lobatto formulation.
        let mut x = -(std::f64::consts::PI * i as f64 / nf).cos();
        if i == 0 || i == n {
            nodes[i] = if i == 0 { -1.0 } else { 1.0 };
            continue;
        }
        for _ in 0..NEWTON_MAX_ITER {
            let (pm1, p) = legendre_pair(n, x);
            let step = (x * p - pm1) / ((nf + 1.0) * p);
            x -= step;
            if step.abs() <= NEWTON_TOL {
                break;
            }
        }
        nodes[i] = x;
    }

    for i in 0..n.div_ceil(2) {
        let sym = 0.5 * (nodes[n - i] - nodes[i]);
        nodes[i] = -sym;
        nodes[n - i] = sym;
    }
    if n.is_multiple_of(2) {
        nodes[n / 2] = 0.0;
    }

    for (w, &x) in weights.iter_mut().zip(&nodes) {
        let (_, p) = legendre_pair(n, x);
        *w = 2.0 / (nf * (nf + 1.0) * p * p);
    }
    for i in 0..n.div_ceil(2) {
        let avg = 0.5 * (weights[i] + weights[n - i]);
        weights[i] = avg;
        weights[n - i] = avg;
    }
    Ok((nodes, weights))
}

/// A one-dimensional quadrature rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// GLL rule with `npoints` points (exact for polynomials of degree `2 npoints - 3`).
    pub fn gll(npoints: usize) -> Result<Self> {
        let (points, weights) = gll_nodes_weights(npoints.max(2) - 1)?;
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maps the rule to the interval `[a, b]`, scaling the weights accordingly.
    pub fn mapped(&self, a: f64, b: f64) -> QuadratureRule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        QuadratureRule {
            points: self.points.iter().map(|&t| mid + half * t).collect(),
            weights: self.weights.iter().map(|&w| half * w).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub order: usize,
    pub gll_nodes: Vec<f64>,
    pub gll_weights: Vec<f64>,
    /// Points per axis of the integration rule (at least `order + 1`).
    pub quad_order: usize,
}

impl ReferenceElement {
    pub fn new(order: usize, quad_order: usize) -> Result<Self> {
        let (gll_nodes, gll_weights) = gll_nodes_weights(order)?;
        Ok(Self {
            order,
            gll_nodes,
            gll_weights,
            quad_order: quad_order.max(order + 1),
        })
    }

    pub fn quadrature(&self) -> Result<QuadratureRule> {
        QuadratureRule::gll(self.quad_order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_zero_is_rejected() {
        assert!(matches!(gll_nodes_weights(0), Err(Error::InvalidOrder(0))));
    }

    #[test]
    fn two_point_rule_is_endpoints() {
        let (x, w) = gll_nodes_weights(1).unwrap();
        assert_eq!(x, vec![-1.0, 1.0]);
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn three_point_rule_matches_simpson() {
        // P_2'(x) = 3x vanishes at 0; weights 2/(N(N+1)P_2^2) give 1/3 and 4/3.
        let (x, w) = gll_nodes_weights(2).unwrap();
        assert_eq!(x, vec![-1.0, 0.0, 1.0]);
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 4.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nodes_are_symmetric_and_weights_sum_to_two() {
        for n in 1..=16 {
            let (x, w) = gll_nodes_weights(n).unwrap();
            assert_eq!(x[0], -1.0);
            assert_eq!(x[n], 1.0);
            for i in 0..=n {
                assert_eq!(x[i], -x[n - i]);
            }
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "N={n}: sum {s}");
        }
    }

    #[test]
    fn interior_nodes_are_roots_of_legendre_derivative() {
        for n in 2..=12 {
            let (x, _) = gll_nodes_weights(n).unwrap();
            for &xi in &x[1..n] {
                // P_N'(x) (1 - x^2) = N (P_{N-1} - x P_N)
                let (pm1, p) = legendre_pair(n, xi);
                assert!((pm1 - xi * p).abs() < 1e-14, "N={n} x={xi}");
            }
        }
    }

    #[test]
    fn rule_integrates_polynomials_to_degree_2n_minus_1() {
        for n in 1..=8 {
            let (x, w) = gll_nodes_weights(n).unwrap();
            for deg in 0..=(2 * n - 1) {
                let q: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "N={n} deg={deg}");
            }
        }
    }
}
