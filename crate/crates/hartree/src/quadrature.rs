//! Gauss-type rules on [-1, 1] and Lagrange interpolation helpers.

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use statrs::function::gamma::ln_gamma;

use crate::error::Result;

/// Nodes and weights of an interpolatory rule, nodes ascending.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Map onto [lo, hi] without any weight factor beyond the Jacobian.
    pub fn affine(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let h = 0.5 * (hi - lo);
        let x = self.nodes.iter().map(|t| lo + (t + 1.0) * h).collect();
        let w = self.weights.iter().map(|w| w * h).collect();
        (x, w)
    }
}

/// Gauss–Jacobi rule for the weight (1-t)^alpha (1+t)^beta via Golub–Welsch,
/// with one Newton polish step per node on the three-term recurrence.
pub fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> Result<Rule> {
    assert!(n >= 1 && alpha > -1.0 && beta > -1.0);
    let ab = alpha + beta;
    let mut jac = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + ab;
        jac[[k, k]] = if k == 0 && ab.abs() < 1e-14 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + ab;
            let num = 4.0 * m * (m + alpha) * (m + beta) * (m + ab);
            let den = s * s * (s + 1.0) * (s - 1.0);
            let b = (num / den).sqrt();
            jac[[k, k + 1]] = b;
            jac[[k + 1, k]] = b;
        }
    }
    let (vals, vecs) = jac.eigh(UPLO::Lower)?;
    let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(alpha + 1.0) + ln_gamma(beta + 1.0)
        - ln_gamma(ab + 2.0))
    .exp();
    let mut nodes: Vec<f64> = vals.to_vec();
    for x in nodes.iter_mut() {
        let (p, dp) = jacobi_with_derivative(n, alpha, beta, *x);
        if dp != 0.0 {
            *x -= p / dp;
        }
    }
    let weights = (0..n).map(|k| mu0 * vecs[[0, k]] * vecs[[0, k]]).collect();
    Ok(Rule { nodes, weights })
}

/// Jacobi polynomial P_n^{(alpha,beta)}(x) and its derivative.
pub fn jacobi_with_derivative(n: usize, alpha: f64, beta: f64, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let ab = alpha + beta;
    let mut p0 = 1.0;
    let mut p1 = 0.5 * (alpha - beta + (ab + 2.0) * x);
    for k in 2..=n {
        let kf = k as f64;
        let c = 2.0 * kf + ab;
        let a1 = 2.0 * kf * (kf + ab) * (c - 2.0);
        let a2 = (c - 1.0) * (alpha * alpha - beta * beta);
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (kf + alpha - 1.0) * (kf + beta - 1.0) * c;
        let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    // d/dx P_n^{(a,b)} = (n+a+b+1)/2 P_{n-1}^{(a+1,b+1)}
    let dp = if n == 0 {
        0.0
    } else {
        0.5 * (nf + ab + 1.0) * jacobi_with_derivative(n - 1, alpha + 1.0, beta + 1.0, x).0
    };
    (p1, dp)
}

pub fn gauss_legendre(n: usize) -> Result<Rule> {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Legendre–Gauss–Lobatto rule with `n` nodes including both endpoints.
pub fn gauss_lobatto(n: usize) -> Result<Rule> {
    assert!(n >= 2);
    let mut nodes = vec![-1.0];
    if n > 2 {
        nodes.extend(gauss_jacobi(n - 2, 1.0, 1.0)?.nodes);
    }
    nodes.push(1.0);
    let deg = n - 1;
    let df = deg as f64;
    let weights = nodes
        .iter()
        .map(|&x| {
            let p = jacobi_with_derivative(deg, 0.0, 0.0, x).0;
            2.0 / (df * (df + 1.0) * p * p)
        })
        .collect();
    Ok(Rule { nodes, weights })
}

/// Gauss–Radau rule for the weight (1+t)^a with `n` nodes, the last at t = 1.
///
/// Weights integrate the Lagrange basis exactly, so the rule is exact for
/// polynomials of degree 2n-2 against (1+t)^a.
pub fn radau_jacobi(n: usize, a: f64) -> Result<Rule> {
    assert!(n >= 1);
    if n == 1 {
        return Ok(Rule { nodes: vec![1.0], weights: vec![2f64.powf(a + 1.0) / (a + 1.0)] });
    }
    let mut nodes = gauss_jacobi(n - 1, 1.0, a)?.nodes;
    nodes.push(1.0);
    let exact = gauss_jacobi(n + 2, 0.0, a)?;
    let bw = barycentric_weights(&nodes);
    let mut weights = vec![0.0; n];
    for (&g, &gw) in exact.nodes.iter().zip(&exact.weights) {
        let basis = lagrange_basis(&nodes, &bw, g);
        for (w, b) in weights.iter_mut().zip(basis) {
            *w += gw * b;
        }
    }
    Ok(Rule { nodes, weights })
}

pub fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            let prod: f64 = (0..n).filter(|&k| k != j).map(|k| x[j] - x[k]).product();
            1.0 / prod
        })
        .collect()
}

/// Values of all Lagrange basis polynomials at `t`.
pub fn lagrange_basis(x: &[f64], bw: &[f64], t: f64) -> Vec<f64> {
    if let Some(k) = x.iter().position(|&xk| xk == t) {
        let mut out = vec![0.0; x.len()];
        out[k] = 1.0;
        return out;
    }
    let terms: Vec<f64> = x.iter().zip(bw).map(|(xk, wk)| wk / (t - xk)).collect();
    let sum: f64 = terms.iter().sum();
    terms.into_iter().map(|v| v / sum).collect()
}

/// Derivatives of all Lagrange basis polynomials at `t`.
pub fn lagrange_basis_derivative(x: &[f64], bw: &[f64], t: f64) -> Vec<f64> {
    let n = x.len();
    if let Some(i) = x.iter().position(|&xi| xi == t) {
        let mut out: Vec<f64> =
            (0..n).map(|j| if j == i { 0.0 } else { bw[j] / bw[i] / (x[i] - x[j]) }).collect();
        out[i] = -out.iter().sum::<f64>();
        return out;
    }
    let l = lagrange_basis(x, bw, t);
    let s: f64 = x.iter().map(|xk| 1.0 / (t - xk)).sum();
    l.iter().zip(x).map(|(lj, xj)| lj * (s - 1.0 / (t - xj))).collect()
}

/// Barycentric interpolation of nodal values at `t`.
pub fn interpolate(x: &[f64], bw: &[f64], values: &[f64], t: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xk, &wk), &vk) in x.iter().zip(bw).zip(values) {
        let d = t - xk;
        if d == 0.0 {
            return vk;
        }
        let c = wk / d;
        num += c * vk;
        den += c;
    }
    num / den
}

/// Differentiation matrix D_ij = l_j'(x_i) of the Lagrange basis on `x`.
pub fn differentiation_matrix(x: &[f64]) -> Array2<f64> {
    let n = x.len();
    let bw = barycentric_weights(x);
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = bw[j] / bw[i] / (x[i] - x[j]);
                d[[i, j]] = v;
                diag -= v;
            }
        }
        d[[i, i]] = diag;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    #[test]
    fn basis_derivative_matches_matrix() {
        let r = gauss_lobatto(7).unwrap();
        let bw = barycentric_weights(&r.nodes);
        let d = differentiation_matrix(&r.nodes);
        for i in 0..7 {
            let row = lagrange_basis_derivative(&r.nodes, &bw, r.nodes[i]);
            for j in 0..7 {
                assert!((row[j] - d[[i, j]]).abs() < 1e-10);
            }
        }
        // exact for x^3 off the nodes
        let t = 0.3141;
        let row = lagrange_basis_derivative(&r.nodes, &bw, t);
        let v: f64 = row.iter().zip(&r.nodes).map(|(l, x)| l * x.powi(3)).sum();
        assert!((v - 3.0 * t * t).abs() < 1e-12);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(10).unwrap();
        for k in 0..20 {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k} {q} {exact}");
        }
    }

    #[test]
    fn jacobi_weight_moments() {
        // ∫(1+t)^a t^0 dt = 2^{a+1}/(a+1)
        for a in [0.5, 1.0, 2.0, 3.5] {
            let r = gauss_jacobi(12, 0.0, a).unwrap();
            let q: f64 = r.weights.iter().sum();
            assert!((q / (2f64.powf(a + 1.0) / (a + 1.0)) - 1.0).abs() < 1e-14);
            // ∫(1-t)^1 (1+t)^a dt = 2^{a+2} Γ(2)Γ(a+1)/Γ(a+3)
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * (1.0 - x)).sum();
            let exact = 2f64.powf(a + 2.0) * gamma(a + 1.0) / gamma(a + 3.0);
            assert!((q / exact - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn lobatto_exactness() {
        let r = gauss_lobatto(9).unwrap();
        assert_eq!(r.nodes[0], -1.0);
        assert_eq!(r.nodes[8], 1.0);
        for k in 0..16 {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn radau_exactness() {
        let a = 2.0;
        let n = 8;
        let r = radau_jacobi(n, a).unwrap();
        assert_eq!(*r.nodes.last().unwrap(), 1.0);
        assert!(r.weights.iter().all(|&w| w > 0.0));
        let fine = gauss_jacobi(20, 0.0, a).unwrap();
        for k in 0..=(2 * n - 2) as i32 {
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum();
            let e: f64 = fine.nodes.iter().zip(&fine.weights).map(|(x, w)| w * x.powi(k)).sum();
            assert!((q - e).abs() < 1e-13 * e.abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn differentiation_is_exact_on_polynomials() {
        let r = gauss_lobatto(12).unwrap();
        let d = differentiation_matrix(&r.nodes);
        for (i, &x) in r.nodes.iter().enumerate() {
            let v: f64 = (0..12).map(|j| d[[i, j]] * r.nodes[j].powi(7)).sum();
            assert!((v - 7.0 * x.powi(6)).abs() < 1e-12);
        }
    }

    #[test]
    fn barycentric_reproduces_polynomial() {
        let r = gauss_lobatto(10).unwrap();
        let bw = barycentric_weights(&r.nodes);
        let vals: Vec<f64> = r.nodes.iter().map(|x| x.powi(9) - 2.0 * x).collect();
        for t in [-0.93, -0.1, 0.0, 0.37, 0.999] {
            let v = interpolate(&r.nodes, &bw, &vals, t);
            assert!((v - (t.powi(9) - 2.0 * t)).abs() < 1e-14);
        }
    }
}
