//! Symmetry decomposition u_{θ,μ} = (1+α)W + h with h ⊥ {W, iW, W̃} in Ḣ¹.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::nonlinearity::Hartree;

/// Scales outside this range are not resolved by a grid designed for W.
pub const MU_RANGE: (f64, f64) = (0.125, 8.0);

/// e^{iθ} μ^{-(N-2)/2} u(r/μ), by interpolation onto the grid nodes.
pub fn rescale(grid: &RadialGrid, u: &RadialField, theta: f64, mu: f64) -> Result<RadialField> {
    grid.check_len(u.len())?;
    if !(MU_RANGE.0..=MU_RANGE.1).contains(&mu) {
        return Err(Error::Usage(format!(
            "scale mu = {mu} is outside [{}, {}]; regenerate the grid around the concentrated profile",
            MU_RANGE.0, MU_RANGE.1
        )));
    }
    if theta == 0.0 && mu == 1.0 {
        return Ok(u.clone());
    }
    let v = if mu == 1.0 {
        u.clone()
    } else {
        let amp = mu.powf(-(grid.dim() as f64 - 2.0) / 2.0);
        let re = grid.nodes().mapv(|r| amp * grid.interpolate(&u.re, r / mu));
        let im = grid.nodes().mapv(|r| amp * grid.interpolate(&u.im, r / mu));
        RadialField { re, im }
    };
    Ok(v.rotate(theta))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulationOptions {
    /// Decomposition is attempted only when δ/‖∇W‖² is below this.
    pub delta0: f64,
    pub max_iter: usize,
    /// Newton stops when |J| <= tol ‖∇W‖².
    pub tol: f64,
}

impl Default for ModulationOptions {
    fn default() -> Self {
        ModulationOptions { delta0: 0.1, max_iter: 50, tol: 1e-14 }
    }
}

#[derive(Clone, Debug)]
pub struct ModulationParams {
    pub theta: f64,
    pub mu: f64,
    pub alpha: f64,
    pub h: RadialField,
    pub iterations: usize,
    /// max of |(h,W)|, |(h,iW)|, |(h,W̃)| over ‖h‖‖W‖-type scales.
    pub orthogonality: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaDeltaReport {
    pub alpha: f64,
    /// |‖∇u‖² - ‖∇W‖²|
    pub delta: f64,
    /// δ/‖∇W‖²
    pub delta_rel: f64,
    /// ‖αW + h‖_{Ḣ¹}/‖W‖_{Ḣ¹}
    pub perturbation: f64,
    /// ‖h‖_{Ḣ¹}/‖W‖_{Ḣ¹}
    pub h_norm: f64,
    /// |α| / (δ/‖∇W‖²)
    pub ratio: f64,
    /// |α| / δ without normalization
    pub ratio_raw: f64,
    pub ratio_alpha_perturbation: f64,
    pub ratio_h_delta: f64,
}

pub struct Modulator<'a> {
    pub grid: &'a RadialGrid,
    w: RadialField,
    w_gen: RadialField,
    g: f64,
    gen_sq: f64,
    pub opts: ModulationOptions,
}

impl<'a> Modulator<'a> {
    pub fn new(h: &Hartree<'a>, opts: ModulationOptions) -> Self {
        let grid = h.grid;
        let w = h.cache.groundstate_field();
        let w_gen = RadialField::real(h.cache.w_gen.clone());
        let g = grid.h1_norm_sq(&w);
        let gen_sq = grid.h1_norm_sq(&w_gen);
        Modulator { grid, w, w_gen, g, gen_sq, opts }
    }

    /// ‖∇W‖² on the grid.
    pub fn kinetic(&self) -> f64 {
        self.g
    }

    pub fn delta(&self, u: &RadialField) -> f64 {
        (self.grid.h1_norm_sq(u) - self.g).abs()
    }

    /// J = ((v, iW)_{Ḣ¹}, (v, W̃)_{Ḣ¹}) scaled by ‖∇W‖² and ‖∇W̃‖ ‖∇W‖.
    fn j(&self, v: &RadialField) -> [f64; 2] {
        let g = self.grid;
        [
            g.h1_inner_real(&v.im, &self.w.re) / self.g,
            g.h1_inner_real(&v.re, &self.w_gen.re) / (self.gen_sq * self.g).sqrt(),
        ]
    }

    /// Newton on J(θ, log μ) = 0, from `start` (or the identity) with a fallback to the identity.
    pub fn decompose(&self, u: &RadialField, start: Option<(f64, f64)>) -> Result<ModulationParams> {
        let dr = self.delta(u) / self.g;
        if !(dr < self.opts.delta0) {
            return Err(Error::Numerical(format!(
                "δ/‖∇W‖² = {dr:.3e} exceeds the modulation gate {}",
                self.opts.delta0
            )));
        }
        let first = start.unwrap_or((0.0, 1.0));
        match self.newton(u, first) {
            Ok(p) => Ok(p),
            Err(e) if start.is_some() => self.newton(u, (0.0, 1.0)).map_err(|_| e),
            Err(e) => Err(e),
        }
    }

    fn newton(&self, u: &RadialField, start: (f64, f64)) -> Result<ModulationParams> {
        let (mut th, mut l) = (start.0, start.1.ln());
        let eval = |th: f64, l: f64| -> Result<[f64; 2]> { Ok(self.j(&rescale(self.grid, u, th, l.exp())?)) };
        let hstep = 1e-6;
        for it in 0..self.opts.max_iter {
            let f = eval(th, l)?;
            if f[0].abs().max(f[1].abs()) <= self.opts.tol {
                return self.finish(u, th, l.exp(), it);
            }
            let fa = eval(th + hstep, l)?;
            let fb = eval(th - hstep, l)?;
            let fc = eval(th, l + hstep)?;
            let fd = eval(th, l - hstep)?;
            let jac = [
                [(fa[0] - fb[0]) / (2.0 * hstep), (fc[0] - fd[0]) / (2.0 * hstep)],
                [(fa[1] - fb[1]) / (2.0 * hstep), (fc[1] - fd[1]) / (2.0 * hstep)],
            ];
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det.abs() < 1e-14 || !det.is_finite() {
                return Err(Error::Numerical("modulation Jacobian is singular".into()));
            }
            let d0 = (f[0] * jac[1][1] - f[1] * jac[0][1]) / det;
            let d1 = (jac[0][0] * f[1] - jac[1][0] * f[0]) / det;
            // damp large steps in the scale
            let lim = 0.5 / d1.abs().max(0.5);
            th -= d0 * lim.min(1.0);
            l -= d1 * lim.min(1.0);
            if d0.abs().max(d1.abs()) < 1e-15 {
                return self.finish(u, th, l.exp(), it + 1);
            }
        }
        Err(Error::Numerical(format!("modulation Newton did not converge in {} iterations", self.opts.max_iter)))
    }

    fn finish(&self, u: &RadialField, theta: f64, mu: f64, iterations: usize) -> Result<ModulationParams> {
        let g = self.grid;
        let v = rescale(g, u, theta, mu)?;
        let alpha = g.h1_inner_real(&v.re, &self.w.re) / self.g - 1.0;
        let h = v.axpy(-(1.0 + alpha), &self.w);
        let scale = (g.h1_norm_sq(&v) * self.g).sqrt().max(f64::MIN_POSITIVE);
        let orthogonality = [
            g.h1_inner_real(&h.re, &self.w.re).abs() / scale,
            g.h1_inner_real(&h.im, &self.w.re).abs() / scale,
            g.h1_inner_real(&h.re, &self.w_gen.re).abs() / (g.h1_norm_sq(&v) * self.gen_sq).sqrt().max(f64::MIN_POSITIVE),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        Ok(ModulationParams { theta, mu, alpha, h, iterations, orthogonality })
    }

    pub fn alpha_delta_report(&self, p: &ModulationParams, u: &RadialField) -> AlphaDeltaReport {
        let g = self.grid;
        let wn = self.g.sqrt();
        let delta = self.delta(u);
        let delta_rel = delta / self.g;
        let perturbation = g.h1_norm_sq(&p.h.axpy(p.alpha, &self.w)).sqrt() / wn;
        let h_norm = g.h1_norm_sq(&p.h).sqrt() / wn;
        let a = p.alpha.abs();
        let div = |x: f64, y: f64| if y == 0.0 { if x == 0.0 { 1.0 } else { f64::INFINITY } } else { x / y };
        AlphaDeltaReport {
            alpha: p.alpha,
            delta,
            delta_rel,
            perturbation,
            h_norm,
            ratio: div(a, delta_rel),
            ratio_raw: div(a, delta),
            ratio_alpha_perturbation: div(a, perturbation),
            ratio_h_delta: div(h_norm, delta_rel),
        }
    }
}

/// (1+α)W + εg with α of the given sign chosen so that E = E(W); g should lie in H⊥.
pub fn energy_matched_perturbation(h: &Hartree<'_>, g: &RadialField, eps: f64, sign: f64) -> Result<(RadialField, f64)> {
    let w = h.cache.groundstate_field();
    let ew = h.energy(&w);
    let f = |a: f64| h.energy(&w.scale(1.0 + a).axpy(eps, g)) - ew;
    // E(W + εg) - E(W) ≈ ε²Φ(g)/2 and E((1+α)W) - E(W) ≈ -(p-1)α²‖∇W‖²/2
    let kin = h.grid.h1_norm_sq(&w);
    let gain = f(0.0);
    if !(gain > 0.0) {
        return Err(Error::Numerical(format!("E(W + εg) - E(W) = {gain:e} is not positive; g is not in the coercive subspace")));
    }
    let mut a0 = sign.signum() * (2.0 * gain / ((h.params.p - 1.0) * kin)).sqrt();
    let mut a1 = a0 * 1.01;
    let (mut f0, mut f1) = (f(a0), f(a1));
    for _ in 0..60 {
        if f1 == 0.0 || f1 == f0 || (a1 - a0).abs() <= 1e-16 * a1.abs() {
            break;
        }
        let a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
        a0 = a1;
        f0 = f1;
        a1 = a2;
        f1 = f(a1);
    }
    if !(f1.abs() <= 1e-12 * ew) {
        return Err(Error::Numerical(format!("energy matching failed (residual {f1:e})")));
    }
    Ok((w.scale(1.0 + a1).axpy(eps, g), a1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::ModelParams;
    use crate::riesz::RieszKernel;

    fn setup(m: usize) -> (RadialGrid, ModelParams) {
        (RadialGrid::new(&GridSpec::preset(6).with_m(m)).unwrap(), ModelParams::new(6, 4.0).unwrap())
    }

    #[test]
    fn identity_and_range() {
        let (grid, _) = setup(64);
        let u = RadialField { re: grid.sample(|r| (-r).exp()), im: grid.sample(|r| r * (-r).exp()) };
        let v = rescale(&grid, &u, 0.0, 1.0).unwrap();
        assert_eq!(u.re, v.re);
        assert!(matches!(rescale(&grid, &u, 0.0, 9.0), Err(Error::Usage(_))));
    }

    #[test]
    fn rescale_composes_and_preserves_gradient() {
        let (grid, params) = setup(256);
        let w = RadialField::real(grid.sample(|r| params.groundstate(r)));
        let a = rescale(&grid, &rescale(&grid, &w, 0.3, 1.5).unwrap(), -0.1, 0.8).unwrap();
        let b = rescale(&grid, &w, 0.2, 1.2).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-9 * w.max_abs());
        let g0 = grid.h1_norm_sq(&w);
        assert!((grid.h1_norm_sq(&b) / g0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn decompose_inverts_symmetry() {
        let (grid, params) = setup(512);
        let kernel = RieszKernel::assemble(&grid, &params, "spectral").unwrap();
        let h = Hartree::new(&grid, &params, &kernel).unwrap();
        let md = Modulator::new(&h, ModulationOptions::default());
        let w = h.cache.groundstate_field();
        let p = md.decompose(&w, None).unwrap();
        assert!(p.theta.abs() < 1e-12 && (p.mu - 1.0).abs() < 1e-10 && p.alpha.abs() < 1e-12, "{p:?}");

        let u = rescale(&grid, &w, 0.1, 1.2).unwrap();
        let p = md.decompose(&u, None).unwrap();
        assert!((p.theta + 0.1).abs() < 1e-9, "theta {}", p.theta);
        assert!((p.mu * 1.2 - 1.0).abs() < 1e-9, "mu {}", p.mu);
        assert!(p.alpha.abs() < 1e-9);
        let hn = grid.h1_norm_sq(&p.h).sqrt() / md.kinetic().sqrt();
        // limited by the harmonic continuation of the tail past r_max
        assert!(hn < 1e-8, "h {hn:e}");
        assert!(p.orthogonality < 1e-10);
    }
}
