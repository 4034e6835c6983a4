//! Model parameters and closed forms for the ground state.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Area of the unit sphere S^{n-1} in ℝ^n.
pub fn sphere_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub n: usize,
    pub lambda: f64,
    pub p: f64,
    /// Amplitude of W = beta (1 + r^2)^{-(N-2)/2}.
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoreticalEnergy {
    pub kinetic: f64,
    pub energy: f64,
}

impl ModelParams {
    pub fn new(n: usize, lambda: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::Param(format!("N >= 3 violated (N = {n})")));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Param(format!("0 < lambda violated (lambda = {lambda})")));
        }
        let nf = n as f64;
        if lambda >= nf {
            return Err(Error::Param(format!("lambda < N violated (lambda = {lambda}, N = {n})")));
        }
        if lambda > 4.0 {
            return Err(Error::Param(format!("lambda <= 4 violated (lambda = {lambda})")));
        }
        let p = (2.0 * nf - lambda) / (nf - 2.0);
        if p < 2.0 {
            return Err(Error::Param(format!("p >= 2 violated (p = {p})")));
        }
        // Amplitude for which -ΔW = (I_λ * W^p) W^{p-1} holds exactly.
        let log_amp = (nf * (nf - 2.0)).ln() + (nf - lambda) * LN_2 + ln_gamma(nf - lambda / 2.0)
            - ln_gamma(lambda / 2.0);
        let beta = (log_amp / (2.0 * p - 2.0)).exp();
        Ok(ModelParams { n, lambda, p, beta })
    }

    pub fn dim(&self) -> f64 {
        self.n as f64
    }

    /// Surface area of the unit sphere in ℝ^N.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.n)
    }

    /// Normalisation of I_λ(x) = c_λ |x|^{-λ}, so that I_λ * f = (-Δ)^{-(N-λ)/2} f.
    pub fn riesz_constant(&self) -> f64 {
        let n = self.dim();
        let l = self.lambda;
        (ln_gamma(l / 2.0) - (n / 2.0) * PI.ln() - ln_gamma((n - l) / 2.0) - (n - l) * LN_2).exp()
    }

    /// Order s of the fractional inverse Laplacian I_λ * f = (-Δ)^{-s} f.
    pub fn riesz_order(&self) -> f64 {
        (self.dim() - self.lambda) / 2.0
    }

    pub fn groundstate(&self, r: f64) -> f64 {
        self.beta * (1.0 + r * r).powf(-(self.dim() - 2.0) / 2.0)
    }

    pub fn groundstate_dr(&self, r: f64) -> f64 {
        let n = self.dim();
        -self.beta * (n - 2.0) * r * (1.0 + r * r).powf(-n / 2.0)
    }

    /// W̃ = (N-2)/2 W + r W'.
    pub fn groundstate_generator(&self, r: f64) -> f64 {
        let n = self.dim();
        self.beta * (n - 2.0) / 2.0 * (1.0 - r * r) * (1.0 + r * r).powf(-n / 2.0)
    }

    pub fn neg_laplacian_groundstate(&self, r: f64) -> f64 {
        let n = self.dim();
        n * (n - 2.0) * self.beta * (1.0 + r * r).powf(-(n + 2.0) / 2.0)
    }

    /// (I_λ * W^p)(r) in closed form.
    pub fn riesz_of_wp(&self, r: f64) -> f64 {
        let n = self.dim();
        n * (n - 2.0) * self.beta.powf(2.0 - self.p) * (1.0 + r * r).powf(-self.lambda / 2.0)
    }

    /// Best constant of (∫(I_λ*|f|^p)|f|^p)^{1/p} <= C ‖∇f‖².
    pub fn sharp_constant(&self) -> f64 {
        let n = self.dim();
        let l = self.lambda;
        let half_log_pi = 0.5 * PI.ln();
        let hls = (n - l) * (-LN_2 - half_log_pi) + ln_gamma(l / 2.0) - ln_gamma(n - l / 2.0)
            + (n - l) / n * (ln_gamma(n) - ln_gamma(n / 2.0));
        let sobolev = (n * (n - 2.0) / 4.0).ln() + 2.0 / n * LN_2 + (n + 1.0) / n * PI.ln()
            - 2.0 / n * ln_gamma((n + 1.0) / 2.0);
        (hls / self.p - sobolev).exp()
    }

    /// ‖∇W‖² = C^{-p/(p-1)}.
    pub fn kinetic(&self) -> f64 {
        let p = self.p;
        (-(p / (p - 1.0)) * self.sharp_constant().ln()).exp()
    }

    pub fn theoretical_energy(&self) -> TheoreticalEnergy {
        let kinetic = self.kinetic();
        TheoreticalEnergy { kinetic, energy: (self.p - 1.0) / (2.0 * self.p) * kinetic }
    }

    /// Spatial exponent 2Np/(Np-2p-2) of the scattering norm.
    pub fn scattering_exponent(&self) -> f64 {
        let n = self.dim();
        let p = self.p;
        2.0 * n * p / (n * p - 2.0 * p - 2.0)
    }

    pub fn label(&self) -> String {
        format!("N={} lambda={}", self.n, self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn default_preset() {
        let m = ModelParams::new(6, 4.0).unwrap();
        assert_eq!(m.p, 2.0);
        assert!(rel(m.beta, 24.0) < 1e-14);
        assert!(rel(m.groundstate(0.0), 24.0) < 1e-14);
        assert!(rel(m.groundstate(1.0), 6.0) < 1e-14);
        assert!(rel(m.groundstate_generator(0.0), 48.0) < 1e-14);
        assert!(m.groundstate_generator(1.0).abs() < 1e-14);
        assert!(rel(m.riesz_of_wp(0.0), 24.0) < 1e-14);
    }

    #[test]
    fn n3_amplitude_solves_the_equation() {
        let m = ModelParams::new(3, 2.0).unwrap();
        assert_eq!(m.p, 4.0);
        assert!(rel(m.beta, 6f64.powf(1.0 / 6.0)) < 1e-14);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ModelParams::new(3, 3.0).unwrap_err().to_string().contains("lambda < N"));
        assert!(ModelParams::new(8, 5.0).unwrap_err().to_string().contains("lambda <= 4"));
        assert!(ModelParams::new(2, 1.0).is_err());
        assert!(ModelParams::new(5, 0.0).is_err());
    }

    #[test]
    fn sharp_constants_against_high_precision() {
        // 30-digit values from tools/oracles.py
        let cases = [
            (6, 4.0, 0.0118313405072988479472382309085, 7143.84614714107856842974299146),
            (5, 4.0, 0.0338632724982618505524070959651, 872.051531633432442435271361262),
            (3, 2.0, 0.142377522262740442841099404041, 13.4506960502446425135529003626),
            (4, 2.0, 0.044851918122594351839108042835, 105.275780278286491934234570665),
            (7, 3.0, 0.00268168358573373788530023777734, 51830.5942482556267189698229079),
        ];
        for (n, l, c, k) in cases {
            let m = ModelParams::new(n, l).unwrap();
            assert!(rel(m.sharp_constant(), c) < 1e-12, "C({n},{l})");
            assert!(rel(m.kinetic(), k) < 1e-12, "kinetic({n},{l})");
        }
    }

    #[test]
    fn energy_ratio() {
        let e = ModelParams::new(6, 4.0).unwrap().theoretical_energy();
        assert!(rel(e.energy, e.kinetic / 4.0) < 1e-15);
        let e = ModelParams::new(3, 2.0).unwrap().theoretical_energy();
        assert!(rel(e.energy, 3.0 * e.kinetic / 8.0) < 1e-15);
    }

    #[test]
    fn closed_form_identity() {
        for (n, l) in [(6, 4.0), (5, 4.0), (3, 2.0), (7, 3.5), (4, 2.5)] {
            let m = ModelParams::new(n, l).unwrap();
            for r in [0.0, 0.3, 1.0, 2.5, 40.0] {
                let lhs = m.neg_laplacian_groundstate(r);
                let rhs = m.riesz_of_wp(r) * m.groundstate(r).powf(m.p - 1.0);
                assert!(rel(lhs, rhs) < 1e-13);
            }
        }
    }

    #[test]
    fn scattering_exponent_default() {
        let m = ModelParams::new(6, 4.0).unwrap();
        assert!(rel(m.scattering_exponent(), 4.0) < 1e-15);
    }

    #[test]
    fn sphere_areas() {
        assert!(rel(sphere_area(3), 4.0 * PI) < 1e-14);
        assert!(rel(sphere_area(6), PI.powi(3)) < 1e-14);
        assert!(rel(sphere_area(2), 2.0 * PI) < 1e-14);
    }
}
