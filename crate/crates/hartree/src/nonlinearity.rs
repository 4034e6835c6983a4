//! The Hartree term `N(u) = (I_λ*|u|^p)|u|^{p-2}u`, the energy, and the
//! expansion of `N` around the ground state.

use ndarray::{Array1, Zip};

use crate::error::Result;
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::model::ModelParams;
use crate::riesz::RieszKernel;

/// |z|^e with a floor on |z|; exact shortcuts for the exponents that occur at p = 2.
pub fn abs_pow(modulus: &Array1<f64>, e: f64) -> Array1<f64> {
    if e == 0.0 {
        Array1::ones(modulus.len())
    } else if e == 1.0 {
        modulus.clone()
    } else if e == 2.0 {
        modulus.mapv(|m| m * m)
    } else {
        modulus.mapv(|m| (e * m.max(1e-300).ln()).exp())
    }
}

/// Ground-state profiles used by the linearization. `vw` is the discrete I_λ*W^p, so that
/// the linearization is the exact derivative of the discrete nonlinearity.
#[derive(Clone, Debug)]
pub struct PotentialCache {
    pub w: Array1<f64>,
    pub w_gen: Array1<f64>,
    pub vw: Array1<f64>,
    pub wpm2: Array1<f64>,
    pub wpm1: Array1<f64>,
}

impl PotentialCache {
    pub fn new(grid: &RadialGrid, params: &ModelParams, kernel: &RieszKernel) -> Self {
        let p = params.p;
        let w = grid.sample(|r| params.groundstate(r));
        PotentialCache {
            vw: kernel.apply(&abs_pow(&w, p)),
            w,
            w_gen: grid.sample(|r| params.groundstate_generator(r)),
            wpm2: grid.sample(|r| params.groundstate(r).powf(p - 2.0)),
            wpm1: grid.sample(|r| params.groundstate(r).powf(p - 1.0)),
        }
    }

    pub fn groundstate_field(&self) -> RadialField {
        RadialField::real(self.w.clone())
    }
}

/// Everything needed to evaluate the nonlinearity on one grid.
pub struct Hartree<'a> {
    pub grid: &'a RadialGrid,
    pub params: ModelParams,
    pub kernel: &'a RieszKernel,
    pub cache: PotentialCache,
}

impl<'a> Hartree<'a> {
    pub fn new(grid: &'a RadialGrid, params: &ModelParams, kernel: &'a RieszKernel) -> Result<Self> {
        grid.check_len(kernel.len())?;
        Ok(Hartree { grid, params: *params, kernel, cache: PotentialCache::new(grid, params, kernel) })
    }

    /// I_λ * |u|^p
    pub fn potential(&self, u: &RadialField) -> Array1<f64> {
        self.kernel.apply(&abs_pow(&u.modulus(), self.params.p))
    }

    /// (I_λ*|u|^p)|u|^{p-2}
    pub fn phase_rate(&self, u: &RadialField) -> Array1<f64> {
        let m = u.modulus();
        self.kernel.apply(&abs_pow(&m, self.params.p)) * abs_pow(&m, self.params.p - 2.0)
    }

    pub fn full(&self, u: &RadialField) -> RadialField {
        u.mul_real(&self.phase_rate(u))
    }

    /// ∫(I_λ*|u|^p)|u|^p
    pub fn interaction(&self, u: &RadialField) -> f64 {
        let up = abs_pow(&u.modulus(), self.params.p);
        self.grid.integrate(&(self.kernel.apply(&up) * &up))
    }

    pub fn energy(&self, u: &RadialField) -> f64 {
        0.5 * self.grid.h1_norm_sq(u) - self.interaction(u) / (2.0 * self.params.p)
    }

    /// V h with real part -(p-1)VW W^{p-2}h₁ - p[I_λ*(W^{p-1}h₁)]W^{p-1} and imaginary part -VW W^{p-2}h₂.
    pub fn linear_potential(&self, h: &RadialField) -> RadialField {
        let c = &self.cache;
        let p = self.params.p;
        let local = &c.vw * &c.wpm2;
        let nonlocal = self.kernel.apply(&(&c.wpm1 * &h.re)) * &c.wpm1;
        let re = -(p - 1.0) * &local * &h.re - p * nonlocal;
        let im = -(&local * &h.im);
        RadialField { re, im }
    }

    /// N(W+h) - N(W), written so that nothing of size N(W) cancels.
    pub fn increment(&self, h: &RadialField) -> RadialField {
        let c = &self.cache;
        let p = self.params.p;
        let u = c.groundstate_field().add(h);
        // |u|²/W² - 1
        let xi = (2.0 * &c.w * &h.re + h.modulus_sq()) / (&c.w * &c.w);
        let rel = |e: f64| xi.mapv(|x| (e * (x.max(-1.0)).ln_1p()).exp_m1());
        let a = &c.wpm1 * &c.w * rel(0.5 * p);
        let b = &c.wpm2 * rel(0.5 * (p - 2.0));
        let upm2 = &c.wpm2 + &b;
        let ka = self.kernel.apply(&a);
        let re = &ka * &upm2 * &u.re + &c.vw * (&b * &u.re + &c.wpm2 * &h.re);
        let im = &ka * &upm2 * &u.im + &c.vw * (&b * &u.im + &c.wpm2 * &h.im);
        RadialField { re, im }
    }

    /// R(h) = i[N(W+h) - N(W) + V h], so that ∂ₜh + 𝓛h = R(h) for u = W + h.
    pub fn remainder(&self, h: &RadialField) -> RadialField {
        self.increment(h).add(&self.linear_potential(h)).times_i()
    }

    /// -ΔW - N(W) for the discrete operators.
    pub fn stationary_residual(&self) -> RadialField {
        let w = self.cache.groundstate_field();
        self.grid.neg_laplacian_field(&w).sub(&self.full(&w))
    }

    /// i u_t + Δu + N(u) for a state and its time derivative.
    pub fn equation_residual(&self, u: &RadialField, u_t: &RadialField) -> RadialField {
        u_t.times_i().sub(&self.grid.neg_laplacian_field(u)).add(&self.full(u))
    }
}

/// Pointwise |u|^p for the integrand of the interaction.
pub fn modulus_pow(u: &RadialField, p: f64) -> Array1<f64> {
    abs_pow(&u.modulus(), p)
}

/// |a - b| / |b| elementwise max, used in tests of the nonlinear terms.
pub fn max_rel(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Zip::from(a).and(b).fold(0.0f64, |m, x, y| m.max((x - y).abs())) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    struct Setup {
        grid: RadialGrid,
        params: ModelParams,
        kernel: RieszKernel,
    }

    fn setup(n: usize, l: f64, m: usize) -> Setup {
        let params = ModelParams::new(n, l).unwrap();
        let grid = RadialGrid::new(&GridSpec::preset(n).with_m(m)).unwrap();
        let kernel = RieszKernel::assemble(&grid, &params, "spectral").unwrap();
        Setup { grid, params, kernel }
    }

    fn bump(grid: &RadialGrid, c: f64) -> RadialField {
        RadialField {
            re: grid.sample(|r| (1.0 + r * r).powi(-3) * (1.0 + c * r)),
            im: grid.sample(|r| c * (1.0 + r * r).powi(-3) * (1.0 - r)),
        }
    }

    #[test]
    fn groundstate_nonlinearity_matches_laplacian() {
        let s = setup(6, 4.0, 256);
        let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
        let w = h.cache.groundstate_field();
        let exact = s.grid.sample(|r| s.params.neg_laplacian_groundstate(r));
        assert!(max_rel(&h.full(&w).re, &exact) < 1e-8);
    }

    #[test]
    fn phase_equivariance() {
        let s = setup(6, 4.0, 128);
        let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
        let u = bump(&s.grid, 0.4);
        let a = h.full(&u.rotate(0.7));
        let b = h.full(&u).rotate(0.7);
        assert!(a.sub(&b).max_abs() < 1e-13 * b.max_abs());
        assert!((h.energy(&u.rotate(0.7)) - h.energy(&u)).abs() < 1e-13 * h.energy(&u).abs());
    }

    #[test]
    fn energy_of_groundstate() {
        for (n, l) in [(6, 4.0), (5, 4.0)] {
            let s = setup(n, l, 512);
            let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
            let e = h.energy(&h.cache.groundstate_field());
            let th = s.params.theoretical_energy();
            assert!((e / th.energy - 1.0).abs() < 1e-8, "({n},{l})");
        }
        let s = setup(6, 4.0, 64);
        let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
        assert_eq!(h.energy(&RadialField::zeros(64)), 0.0);
    }

    #[test]
    fn remainder_vanishes_at_zero_and_is_quadratic() {
        let s = setup(5, 3.0, 128);
        let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
        assert_eq!(h.remainder(&RadialField::zeros(128)).max_abs(), 0.0);
        let f = bump(&s.grid, 0.3);
        let norms: Vec<f64> =
            [1e-2, 1e-3].iter().map(|&e| s.grid.l2_norm(&h.remainder(&f.scale(e)))).collect();
        let order = (norms[0] / norms[1]).log10();
        assert!(order > 1.95, "order {order}");
    }

    #[test]
    fn remainder_matches_symbolic_expansion_at_p2() {
        let s = setup(6, 4.0, 128);
        let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
        let f = bump(&s.grid, 0.5).scale(0.3);
        let w = &h.cache.w;
        let k = |v: &Array1<f64>| s.kernel.apply(v);
        let a = k(&(w * &f.re)) * 2.0;
        let b = k(&f.modulus_sq());
        let u = h.cache.groundstate_field().add(&f);
        let q = f.mul_real(&a).add(&u.mul_real(&b));
        let got = h.remainder(&f);
        let expect = q.times_i();
        assert!(got.sub(&expect).max_abs() < 1e-10 * expect.max_abs());
    }

    #[test]
    fn increment_matches_difference() {
        for (n, l) in [(6, 4.0), (7, 3.0), (4, 2.0)] {
            let s = setup(n, l, 128);
            let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
            let w = h.cache.groundstate_field();
            let f = bump(&s.grid, 0.6).scale(0.2);
            let direct = h.full(&w.add(&f)).sub(&h.full(&w));
            let inc = h.increment(&f);
            assert!(inc.sub(&direct).max_abs() < 1e-12 * direct.max_abs(), "({n},{l})");
        }
    }

    #[test]
    fn frechet_derivative_is_minus_v() {
        let s = setup(7, 3.0, 128);
        let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
        let w = h.cache.groundstate_field();
        let f = bump(&s.grid, 0.8);
        let eps = 1e-4;
        let fd = h.full(&w.axpy(eps, &f)).sub(&h.full(&w.axpy(-eps, &f))).scale(0.5 / eps);
        let v = h.linear_potential(&f).scale(-1.0);
        assert!(fd.sub(&v).max_abs() < 1e-6 * v.max_abs());
    }

    #[test]
    fn linearized_form_matches_equation() {
        // i u_t + Δu + N(u) - (ΔW + N(W)) = i (h_t + 𝓛h - R(h)) for u = W + h
        let s = setup(6, 4.0, 128);
        let h = Hartree::new(&s.grid, &s.params, &s.kernel).unwrap();
        let w = h.cache.groundstate_field();
        let hh = bump(&s.grid, 0.2).scale(0.5);
        let ht = bump(&s.grid, -0.7);
        let lhs = h.equation_residual(&w.add(&hh), &ht).add(&h.stationary_residual());
        // 𝓛h = i(-Δ + V)h
        let op = s.grid.neg_laplacian_field(&hh).add(&h.linear_potential(&hh));
        let lin = ht.add(&op.times_i()).sub(&h.remainder(&hh));
        let rhs = lin.times_i();
        assert!(lhs.sub(&rhs).max_abs() < 1e-10 * lhs.max_abs().max(1.0));
    }
}
