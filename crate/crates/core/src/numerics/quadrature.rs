//! Gauss–Hermite rules for the standard Gaussian measure.
//!
//! Rules are normalized so that `sum(w_i g(x_i))` approximates
//! `E[g(Z)]` with `Z ~ N(0, 1)`. Nodes come from the Golub–Welsch
//! eigenproblem and are then polished by Newton steps on the orthonormal
//! Hermite recurrence; weights use the Christoffel function at the polished
//! nodes, which keeps them accurate far into the tails.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 512;
pub const DEFAULT_ORDER: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// `sum(w_i f(x_i))`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `E[f(mean + sd * Z)]`.
    pub fn expect_scaled(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.expect(|x| f(mean + sd * x))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Values of the orthonormal probabilists' Hermite polynomials
/// `p_{n-1}(x), p_n(x)` and `sum_{k<n} p_k(x)^2`.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut christoffel = 0.0;
    for k in 0..n {
        christoffel += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur, christoffel)
}

fn compute_rule(order: usize) -> QuadratureRule {
    if order == 1 {
        return QuadratureRule { nodes: vec![0.0], weights: vec![1.0], order };
    }
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    let mut weights = Vec::with_capacity(order);
    let sqrt_n = (order as f64).sqrt();
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (pm1, pn, _) = hermite_orthonormal(order, *x);
            let step = pn / (sqrt_n * pm1);
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
        let (_, _, christoffel) = hermite_orthonormal(order, *x);
        weights.push(if christoffel.is_finite() { 1.0 / christoffel } else { 0.0 });
    }

    // Enforce exact symmetry about zero.
    for i in 0..order / 2 {
        let j = order - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if order % 2 == 1 {
        nodes[order / 2] = 0.0;
    }

    // Tail weights underflow for large orders; drop them symmetrically.
    let (nodes, weights): (Vec<f64>, Vec<f64>) = nodes.into_iter().zip(weights).filter(|&(_, w)| w > 0.0).unzip();
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    QuadratureRule { nodes, weights, order }
}

/// Gauss–Hermite rule of the given order (cached).
pub fn gauss_hermite(order: usize) -> Result<Arc<QuadratureRule>> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::param(format!("quadrature order {order} outside [1, {MAX_ORDER}]")));
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&order) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(compute_rule(order));
    cache.lock().expect("quadrature cache poisoned").insert(order, Arc::clone(&rule));
    Ok(rule)
}

/// The default-order rule.
pub fn default_rule() -> Arc<QuadratureRule> {
    gauss_hermite(DEFAULT_ORDER).expect("default order is valid")
}

/// `E[f(Z)]` starting at the default order and doubling (capped at
/// [`MAX_ORDER`]) until two successive orders agree within `tol`.
pub fn gaussian_expect_adaptive(mut f: impl FnMut(f64) -> f64, tol: f64) -> Result<f64> {
    let mut order = DEFAULT_ORDER;
    let mut prev = gauss_hermite(order)?.expect(&mut f);
    while order < MAX_ORDER {
        order = (order * 2).min(MAX_ORDER);
        let next = gauss_hermite(order)?.expect(&mut f);
        if (next - prev).abs() <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerical {
        message: format!("Gauss-Hermite expectation not converged to {tol} at order {MAX_ORDER}"),
        partial: Some(prev),
        sample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// E[Z^(2k)] = (2k-1)!!
    fn gaussian_moment(p: u32) -> f64 {
        if p % 2 == 1 {
            return 0.0;
        }
        (1..p).step_by(2).map(|k| k as f64).product()
    }

    #[test]
    fn order_one_is_the_origin() {
        let rule = gauss_hermite(1).unwrap();
        assert_eq!(rule.nodes, vec![0.0]);
        assert_eq!(rule.weights, vec![1.0]);
        assert_eq!(rule.expect(|z| z), 0.0);
    }

    #[test]
    fn second_and_fourth_moments() {
        assert_abs_diff_eq!(gauss_hermite(20).unwrap().expect(|z| z * z), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gauss_hermite(40).unwrap().expect(|z| z.powi(4)), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn exact_up_to_degree_2k_minus_1() {
        for &k in &[2usize, 5, 10] {
            let rule = gauss_hermite(k).unwrap();
            for p in 0..(2 * k as u32) {
                let exact = gaussian_moment(p);
                let got = rule.expect(|z| z.powi(p as i32));
                // Odd moments cancel between symmetric nodes, so the error
                // scales with E|z|^p rather than with the exact value.
                let scale = gaussian_moment(p + p % 2).max(1.0);
                assert_abs_diff_eq!(got, exact, epsilon = 1e-12 * scale);
            }
        }
    }

    #[test]
    fn weights_sum_to_one_and_nodes_are_symmetric() {
        for &k in &[1usize, 2, 7, 40, 101, 256, 512] {
            let rule = gauss_hermite(k).unwrap();
            let total: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            let m = rule.len();
            for i in 0..m {
                assert_eq!(rule.nodes[i], -rule.nodes[m - 1 - i]);
            }
        }
    }

    #[test]
    fn high_orders_stay_accurate() {
        let rule = gauss_hermite(512).unwrap();
        assert_abs_diff_eq!(rule.expect(|z| z * z), 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(rule.expect(|z| (0.5 * z).cos()), (-0.125f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn order_out_of_range() {
        assert!(gauss_hermite(0).unwrap_err().is_parameter());
        assert!(gauss_hermite(513).is_err());
    }

    #[test]
    fn adaptive_expectation_converges() {
        let v = gaussian_expect_adaptive(|z| (z * 3.0).cos(), 1e-12).unwrap();
        assert_abs_diff_eq!(v, (-4.5f64).exp(), epsilon = 1e-12);
    }
}
