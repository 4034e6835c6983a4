//! Exponential series `U^a_k = W + Σ_{j≤k} e^{-je₀t} Z_j` for the threshold
//! solutions W^±, its residual, and initial data taken from it.

use ndarray::{s, Array2};
use ndarray_linalg::{FactorizeInto, ReciprocalConditionNum, Solve, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::linearized::{LinearizedSystem, SpectralData};
use crate::nonlinearity::Hartree;

/// Controls for the order-coefficient fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Largest sample amplitude relative to the natural scale 1/ρ of the series.
    pub s_fraction: f64,
    /// Extra polynomial degrees beyond j for non-polynomial nonlinearities.
    pub extra_degree: usize,
    /// Reject fits whose Vandermonde matrix is worse conditioned than this.
    pub max_condition: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { s_fraction: 0.02, extra_degree: 5, max_condition: 1e8 }
    }
}

/// Degree of R(Σ s^i Z_i) in s when the nonlinearity is polynomial (even integer p).
fn polynomial_degree(p: f64, j: usize) -> Option<usize> {
    let even = p.fract() == 0.0 && (p as i64) % 2 == 0 && p <= 8.0;
    even.then(|| (2 * p as usize - 1) * (j - 1))
}

/// Weights c with Σ c_i g(s_i) = coefficient of x^j of the least-squares
/// polynomial of degree `deg` through samples at Chebyshev points x_i.
fn fit_weights(n: usize, deg: usize, j: usize, max_cond: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let xs: Vec<f64> =
        (0..n).map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos()).collect();
    let v = Array2::from_shape_fn((n, deg + 1), |(i, d)| xs[i].powi(d as i32));
    let (u, sv, vt) = v.svd(true, true)?;
    let (u, vt) = (u.unwrap(), vt.unwrap());
    let cond = sv[0] / sv[sv.len() - 1];
    if !(cond <= max_cond) {
        return Err(Error::Numerical(format!(
            "order-coefficient fit is ill conditioned (cond {cond:.3e}); use smaller sample amplitudes"
        )));
    }
    let mut c = vec![0.0; n];
    for k in 0..sv.len() {
        let f = vt[[k, j]] / sv[k];
        for i in 0..n {
            c[i] += f * u[[i, k]];
        }
    }
    Ok((xs, c))
}

fn series_at(z: &[RadialField], base: &RadialField, s: f64) -> RadialField {
    let mut out = base.clone();
    let mut sp = 1.0;
    for zi in z {
        sp *= s;
        out = out.axpy(sp, zi);
    }
    out
}

/// Natural amplitude scale of the series: ρ = max_i (max_r |Z_i|/W)^{1/i}.
fn series_scale(h: &Hartree<'_>, z: &[RadialField]) -> f64 {
    let w = &h.cache.w;
    z.iter()
        .enumerate()
        .map(|(i, zi)| {
            let m = zi.modulus().iter().zip(w.iter()).fold(0.0f64, |a, (x, y)| a.max(x / y));
            m.powf(1.0 / (i as f64 + 1.0))
        })
        .fold(0.0f64, f64::max)
}

/// R_j: coefficient of s^j in R(Σ_{i<j} s^i Z_i), by polynomial fit in s.
pub fn extract_order_coefficient(
    h: &Hartree<'_>,
    j: usize,
    zprev: &[RadialField],
    fit: &FitOptions,
) -> Result<RadialField> {
    if j < 2 || zprev.len() != j - 1 {
        return Err(Error::Usage(format!("order {j} needs exactly {} previous terms", j.saturating_sub(1))));
    }
    let rho = series_scale(h, zprev);
    if rho == 0.0 {
        return Ok(RadialField::zeros(h.grid.len()));
    }
    let zero = RadialField::zeros(h.grid.len());
    let sample = |s0: f64, deg: usize| -> Result<RadialField> {
        let n = deg + 1 + j;
        let (xs, c) = fit_weights(n, deg, j, fit.max_condition)?;
        let mut acc = RadialField::zeros(h.grid.len());
        for (x, ci) in xs.iter().zip(&c) {
            acc = acc.axpy(*ci, &h.increment(&series_at(zprev, &zero, s0 * x)));
        }
        Ok(acc.scale(s0.powi(-(j as i32))))
    };
    let coeff = match polynomial_degree(h.params.p, j) {
        Some(deg) => sample(1.0 / rho, deg)?,
        None => {
            let deg = j + fit.extra_degree;
            let s0 = fit.s_fraction / rho;
            let coarse = sample(s0, deg)?;
            let fine = sample(0.5 * s0, deg)?;
            let q = 2f64.powi((deg + 1 - j) as i32);
            fine.scale(q / (q - 1.0)).axpy(-1.0 / (q - 1.0), &coarse)
        }
    };
    // R = i[N(W+h) - N(W) + Vh]; Vh has no s^j part since h stops at j-1
    Ok(coeff.times_i())
}

#[derive(Clone, Debug)]
pub struct ApproxSolutionSeries {
    pub a: f64,
    pub e0: f64,
    /// Z[0] = a𝒴₊, Z[j-1] the coefficient of e^{-je₀t}.
    pub z: Vec<RadialField>,
}

#[derive(Clone, Debug)]
pub struct Residual {
    pub field: RadialField,
    pub norm: f64,
}

pub fn build_series(
    sys: &LinearizedSystem<'_>,
    h: &Hartree<'_>,
    sd: &SpectralData,
    a: f64,
    k: usize,
    fit: &FitOptions,
) -> Result<ApproxSolutionSeries> {
    if k == 0 {
        return Err(Error::Usage("series order k must be at least 1".into()));
    }
    let m = sys.len();
    let mut z = vec![sd.plus().scale(a)];
    let base = sys.block_scaled();
    for j in 2..=k {
        let r = extract_order_coefficient(h, j, &z, fit)?;
        let mut mat = base.clone();
        for i in 0..2 * m {
            mat[[i, i]] -= j as f64 * sd.e0;
        }
        let lu = mat.factorize_into()?;
        let rc = lu.rcond()?;
        if rc < 1e-12 {
            return Err(Error::Spectral(format!(
                "𝓛 - {j}e₀ is near singular (rcond {rc:.2e}); e₀ = {} may be inaccurate",
                sd.e0
            )));
        }
        let rhs = ndarray::concatenate![ndarray::Axis(0), &r.re * &sys.sqrt_w, &r.im * &sys.sqrt_w];
        let x = lu.solve(&rhs)?;
        let zj = RadialField {
            re: x.slice(s![..m]).to_owned() / &sys.sqrt_w,
            im: x.slice(s![m..]).to_owned() / &sys.sqrt_w,
        };
        if !zj.is_finite() {
            return Err(Error::Numerical(format!("series term {j} is not finite")));
        }
        z.push(zj);
    }
    Ok(ApproxSolutionSeries { a, e0: sd.e0, z })
}

impl ApproxSolutionSeries {
    pub fn k(&self) -> usize {
        self.z.len()
    }

    /// The series cut after its first j terms.
    pub fn truncated(&self, j: usize) -> ApproxSolutionSeries {
        ApproxSolutionSeries { a: self.a, e0: self.e0, z: self.z[..j.clamp(1, self.z.len())].to_vec() }
    }

    /// h^a_k(t)
    pub fn correction(&self, t: f64) -> RadialField {
        let mut out = RadialField::zeros(self.z[0].len());
        for (i, zi) in self.z.iter().enumerate() {
            out = out.axpy((-(i as f64 + 1.0) * self.e0 * t).exp(), zi);
        }
        out
    }

    pub fn time_derivative(&self, t: f64) -> RadialField {
        let mut out = RadialField::zeros(self.z[0].len());
        for (i, zi) in self.z.iter().enumerate() {
            let j = i as f64 + 1.0;
            out = out.axpy(-j * self.e0 * (-j * self.e0 * t).exp(), zi);
        }
        out
    }

    /// U^a_k(t) = W + h^a_k(t)
    pub fn state(&self, h: &Hartree<'_>, t: f64) -> RadialField {
        h.cache.groundstate_field().add(&self.correction(t))
    }

    /// Earliest time with ‖h^a_k(t)‖_{Ḣ¹} < 0.1 ‖W‖_{Ḣ¹}, found by bisection on a bracket.
    pub fn t_min(&self, h: &Hartree<'_>) -> f64 {
        let g = h.grid;
        let wn = g.h1_norm_sq(&h.cache.groundstate_field()).sqrt();
        let small = |t: f64| g.h1_norm_sq(&self.correction(t)).sqrt() < 0.1 * wn;
        let (mut lo, mut hi) = (-20.0 / self.e0, 0.0);
        while !small(hi) {
            lo = hi;
            hi += 1.0 / self.e0;
        }
        if small(lo) {
            return lo;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if small(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// ε_k = i∂ₜU + ΔU + N(U) less the discrete stationary residual of W, that is
    /// i∂ₜh + Δh + N(W+h) - N(W), with its Ḣ¹ norm.
    pub fn residual(&self, h: &Hartree<'_>, t: f64) -> Residual {
        let hk = self.correction(t);
        let dn = h.increment(&hk);
        let field = self.time_derivative(t).times_i().sub(&h.grid.neg_laplacian_field(&hk)).add(&dn);
        let norm = h.grid.h1_norm_sq(&field).max(0.0).sqrt();
        Residual { field, norm }
    }

    /// Least-squares slope of log‖ε_k(t)‖ over `samples` times in [t0, t0 + 3/e₀].
    pub fn residual_slope(&self, h: &Hartree<'_>, t0: f64, samples: usize) -> f64 {
        let n = samples.max(2);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = t0 + 3.0 / self.e0 * i as f64 / (n - 1) as f64;
                (t, self.residual(h, t).norm.ln())
            })
            .collect();
        linear_slope(&pts)
    }
}

pub fn linear_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Start time with e^{-e₀t₀} = `decay`.
pub fn start_time(e0: f64, decay: f64) -> f64 {
    -decay.ln() / e0
}

#[derive(Clone, Debug, Serialize)]
pub struct SpecialData {
    #[serde(skip)]
    pub u: RadialField,
    pub a: f64,
    pub k: usize,
    pub t0: f64,
    /// ‖∇U(t₀)‖² - ‖∇W‖²
    pub kinetic_gap: f64,
    /// |E(U(t₀)) - E(W)| / E(W)
    pub energy_rel: f64,
    pub residual_norm: f64,
}

/// U^a_k(t₀), checked to sit on the side of ‖∇W‖ given by the sign of a.
pub fn special_initial_data(series: &ApproxSolutionSeries, h: &Hartree<'_>, t0: f64) -> Result<SpecialData> {
    let decay = (-series.e0 * t0).exp();
    if decay > 0.05 + 1e-12 {
        return Err(Error::Usage(format!("t0 = {t0} gives e^(-e0 t0) = {decay:.3e} > 0.05; choose a larger t0")));
    }
    let u = series.state(h, t0);
    let w = h.cache.groundstate_field();
    let kinetic_gap = h.grid.h1_norm_sq(&u) - h.grid.h1_norm_sq(&w);
    let ew = h.energy(&w);
    let energy_rel = ((h.energy(&u) - ew) / ew).abs();
    if series.a != 0.0 && kinetic_gap.signum() != series.a.signum() {
        return Err(Error::Numerical(format!(
            "‖∇U(t0)‖² - ‖∇W‖² = {kinetic_gap:.3e} does not have the sign of a = {}; t0 = {t0} is too small",
            series.a
        )));
    }
    let residual_norm = series.residual(h, t0).norm;
    Ok(SpecialData { u, a: series.a, k: series.k(), t0, kinetic_gap, energy_rel, residual_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, RadialGrid};
    use crate::linearized::{routes, SpectralOptions};
    use crate::model::ModelParams;
    use crate::riesz::RieszKernel;

    #[test]
    fn fit_weights_recover_monomials() {
        let (xs, c) = fit_weights(9, 6, 2, 1e8).unwrap();
        for d in 0..=6 {
            let got: f64 = xs.iter().zip(&c).map(|(x, ci)| ci * x.powi(d)).sum();
            let want = if d == 2 { 1.0 } else { 0.0 };
            assert!((got - want).abs() < 1e-12, "degree {d}: {got}");
        }
    }

    #[test]
    fn polynomial_degree_only_for_even_p() {
        assert_eq!(polynomial_degree(2.0, 3), Some(6));
        assert_eq!(polynomial_degree(4.0, 2), Some(7));
        assert_eq!(polynomial_degree(3.0, 2), None);
        assert_eq!(polynomial_degree(2.2, 2), None);
    }

    #[test]
    fn slope_of_exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 3.5 * i as f64)).collect();
        assert!((linear_slope(&pts) + 3.5).abs() < 1e-14);
    }

    #[test]
    fn series_at_p2() {
        let params = ModelParams::new(6, 4.0).unwrap();
        let grid = RadialGrid::new(&GridSpec::preset(6).with_m(128)).unwrap();
        let kernel = RieszKernel::assemble(&grid, &params, "spectral").unwrap();
        let sys = LinearizedSystem::assemble(&grid, &kernel, &params).unwrap();
        let h = Hartree::new(&grid, &params, &kernel).unwrap();
        let sd = routes().get("direct").unwrap().solve(&sys, &SpectralOptions::default()).unwrap();
        let fit = FitOptions::default();

        // symbolic p = 2 quadratic coefficient: R₂ = i[2K(W z₁)z₁ + K(|z₁|²)W]... with z₁ complex
        let z1 = sd.plus();
        let w = &h.cache.w;
        let r2 = extract_order_coefficient(&h, 2, &[z1.clone()], &fit).unwrap();
        let kwz = kernel.apply(&(w * &z1.re));
        let kz2 = kernel.apply(&z1.modulus_sq());
        let expect = z1.mul_real(&(kwz * 2.0)).add(&RadialField::real(kz2 * w)).times_i();
        assert!(r2.sub(&expect).max_abs() < 1e-8 * expect.max_abs());

        let plus = build_series(&sys, &h, &sd, 1.0, 3, &fit).unwrap();
        let minus = build_series(&sys, &h, &sd, -1.0, 3, &fit).unwrap();
        for j in 0..3 {
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            let d = minus.z[j].sub(&plus.z[j].scale(sign)).max_abs();
            assert!(d < 1e-9 * plus.z[j].max_abs(), "parity at order {}", j + 1);
        }

        let zero = build_series(&sys, &h, &sd, 0.0, 3, &fit).unwrap();
        assert!(zero.z.iter().all(|z| z.max_abs() == 0.0));
        assert!(zero.residual(&h, 1.0).norm < 1e-10);
    }
}
