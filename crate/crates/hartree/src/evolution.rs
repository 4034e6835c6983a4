//! Time integration by Strang splitting, conserved quantities, the localized
//! virial, the scattering norm, and trajectory classification.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::{LaplacianSpectrum, RadialGrid, Sampler};
use crate::modulation::{ModulationOptions, Modulator};
use crate::nonlinearity::{abs_pow, Hartree};
use crate::registry::Registry;
use crate::special::linear_slope;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Controls {
    /// Length of the run in |t|.
    pub duration: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// A diagnostics row every this many steps.
    pub sample_every: usize,
    /// Blow-up proxy: ‖∇u‖² above this multiple of ‖∇W‖².
    pub blowup_factor: f64,
    /// Cutoff radius R of the virial; 0 picks r_max/4.
    pub virial_radius: f64,
    /// Modulation is attempted while δ/‖∇W‖² is below this.
    pub delta0: f64,
    /// Scattering proxy: Z-norm growth per unit time over the trailing window,
    /// relative to the Z-norm integrand of W.
    pub scatter_z_rate: f64,
    pub scatter_window: f64,
    pub scatter_radius: f64,
    /// Scattering proxy: kinetic energy inside `scatter_radius` as a fraction of the total.
    pub scatter_local_fraction: f64,
    /// Convergence proxy: δ/‖∇W‖² below this after exponential decay.
    pub converge_delta: f64,
    /// Stop as soon as a proxy fires.
    pub stop_on_proxy: bool,
    pub min_rows: usize,
    /// Arrangement of Strang substeps within one step, by registry name.
    pub composition: String,
}

impl Default for Controls {
    fn default() -> Self {
        Controls {
            duration: 3.0,
            dt_max: 2.5e-4,
            dt_min: 1e-8,
            sample_every: 10,
            blowup_factor: 9.0,
            virial_radius: 0.0,
            delta0: 0.1,
            scatter_z_rate: 1e-4,
            scatter_window: 1.0,
            scatter_radius: 10.0,
            scatter_local_fraction: 0.05,
            converge_delta: 1e-6,
            stop_on_proxy: true,
            min_rows: 100,
            composition: "triple-jump".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Halt {
    Completed,
    /// dt fell below dt_min.
    ResolutionExhausted,
    GradientThreshold,
    Scattered,
    Converged,
    NonFinite,
}

/// Weights of the Strang substeps that make up one step of size dt.
pub trait Composition: Send + Sync {
    fn weights(&self) -> Vec<f64>;
}

/// A single Strang step, second order.
pub struct Strang;

/// Symmetric triple jump of Strang steps, fourth order.
pub struct TripleJump;

impl Composition for Strang {
    fn weights(&self) -> Vec<f64> {
        vec![1.0]
    }
}

impl Composition for TripleJump {
    fn weights(&self) -> Vec<f64> {
        let w1 = 1.0 / (2.0 - 2f64.cbrt());
        vec![w1, 1.0 - 2.0 * w1, w1]
    }
}

pub fn compositions() -> Registry<dyn Composition> {
    let mut reg: Registry<dyn Composition> = Registry::new("composition");
    reg.register("strang", Box::new(Strang)).expect("fresh registry");
    reg.register("triple-jump", Box::new(TripleJump)).expect("fresh registry");
    reg
}

// septic on [1,2] joining r²/2 to 0 through the third derivative, so Δ²φ stays bounded
const SEPTIC: [f64; 8] = [0.5, 1.0, 0.5, 0.0, -42.5, 97.0, -78.5, 22.0];

/// φ and its first four derivatives at x for the unit cutoff.
fn unit_cutoff(x: f64) -> [f64; 5] {
    if x <= 1.0 {
        [0.5 * x * x, x, 1.0, 0.0, 0.0]
    } else if x >= 2.0 {
        [0.0; 5]
    } else {
        let t = x - 1.0;
        let mut out = [0.0; 5];
        for (k, c) in SEPTIC.iter().enumerate() {
            let mut fall = 1.0;
            for (d, o) in out.iter_mut().enumerate() {
                if d > k {
                    break;
                }
                *o += c * fall * t.powi((k - d) as i32);
                fall *= (k - d) as f64;
            }
        }
        out
    }
}

/// φ_R = R²φ(·/R) sampled for the virial.
#[derive(Clone, Debug)]
pub struct CutoffProfile {
    pub radius: f64,
    /// Gauss points on [0, 2R] split at R and 2R.
    pub sampler: Sampler,
    /// φ_R, φ_R', φ_R'' and Δ²φ_R at the sampler points.
    pub phi: Array1<f64>,
    pub dphi: Array1<f64>,
    pub d2phi: Array1<f64>,
    pub bilap: Array1<f64>,
    /// max φ_R'' on a fine sample; the vanishing septic cannot keep this below 1.
    pub max_second_derivative: f64,
}

impl CutoffProfile {
    pub fn new(grid: &RadialGrid, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || radius > grid.r_max() / 4.0 {
            return Err(Error::Usage(format!(
                "virial radius {radius} must lie in (0, r_max/4 = {}]",
                grid.r_max() / 4.0
            )));
        }
        let nd = grid.dim() as f64 - 1.0;
        let rr = radius;
        let sampler = grid.sampler(&[rr], 2.0 * rr, 2 * grid.degree() + 4)?;
        let at = |r: f64| {
            let d = unit_cutoff(r / rr);
            [rr * rr * d[0], rr * d[1], d[2], d[3] / rr, d[4] / (rr * rr)]
        };
        let q = &sampler.points;
        let phi = q.mapv(|r| at(r)[0]);
        let dphi = q.mapv(|r| at(r)[1]);
        let d2phi = q.mapv(|r| at(r)[2]);
        let bilap = q.mapv(|r| {
            let [_, f1, f2, f3, f4] = at(r);
            if r <= rr || r >= 2.0 * rr {
                return 0.0;
            }
            // Δ²f = g'' + (N-1)g'/r with g = Δf = f'' + (N-1)f'/r
            let g1 = f3 + nd * (f2 / r - f1 / (r * r));
            let g2 = f4 + nd * (f3 / r - 2.0 * f2 / (r * r) + 2.0 * f1 / (r * r * r));
            g2 + nd * g1 / r
        });
        let max_second_derivative = (0..=2000).map(|i| unit_cutoff(1.0 + i as f64 / 2000.0)[2]).fold(f64::MIN, f64::max);
        Ok(CutoffProfile { radius, sampler, phi, dphi, d2phi, bilap, max_second_derivative })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Virial {
    pub v: f64,
    pub dv: f64,
    pub d2v: f64,
    /// 4‖∇u‖² - 4∫(I_λ*|u|^p)|u|^p
    pub main: f64,
    /// d2v - main
    pub a_r: f64,
}

pub fn virial(h: &Hartree<'_>, u: &RadialField, cut: &CutoffProfile) -> Virial {
    let g = h.grid;
    let p = h.params.p;
    let sm = &cut.sampler;
    let (re, im) = (sm.values(&u.re), sm.values(&u.im));
    let (dre, dim) = (sm.derivatives(&u.re), sm.derivatives(&u.im));
    let msq = &re * &re + &im * &im;
    let v = sm.integrate(&(&cut.phi * &msq));
    let dv = 2.0 * sm.integrate(&(&cut.dphi * &(&re * &dim - &im * &dre)));
    let m = u.modulus();
    let up = abs_pow(&m, p);
    let f = h.kernel.apply(&up);
    let drate = sm.derivatives(&(&f * &abs_pow(&m, p - 2.0)));
    let grad = &dre * &dre + &dim * &dim;
    let d2v = 4.0 * sm.integrate(&(&cut.d2phi * &grad)) - sm.integrate(&(&cut.bilap * &msq))
        + 2.0 * sm.integrate(&(&msq * &cut.dphi * &drate));
    let main = 4.0 * g.h1_norm_sq(u) - 4.0 * g.integrate(&(&f * &up));
    Virial { v, dv, d2v, main, a_r: d2v - main }
}

/// ‖u‖_{L^q}^{2p} with q = 2Np/(Np-2p-2), the integrand of the scattering norm.
pub fn z_integrand(h: &Hartree<'_>, u: &RadialField) -> f64 {
    let q = h.params.scattering_exponent();
    let lq = h.grid.integrate(&abs_pow(&u.modulus(), q));
    lq.powf(2.0 * h.params.p / q)
}

/// Trapezoidal time integral of ‖u(t)‖^{2p}_{L^q} along stored samples.
pub fn znorm_accumulate(samples: &[(f64, f64)]) -> f64 {
    samples.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0).abs() * (w[0].1 + w[1].1)).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub energy: f64,
    pub grad_norm_sq: f64,
    pub delta: f64,
    pub mass: Option<f64>,
    pub v_r: f64,
    pub dv_r: f64,
    pub d2v_r: f64,
    pub z_accum: f64,
    pub theta: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    /// Not written to the CSV.
    #[serde(skip)]
    pub dt: f64,
    #[serde(skip)]
    pub local_fraction: f64,
    #[serde(skip)]
    pub d2v_main: f64,
}

pub const TRAJECTORY_COLUMNS: [&str; 12] =
    ["t", "energy", "grad_norm_sq", "delta", "mass", "V_R", "dV_R", "d2V_R", "z_accum", "theta", "mu", "alpha"];

impl DiagnosticsRow {
    pub fn cells(&self) -> Vec<Option<f64>> {
        vec![
            Some(self.t),
            Some(self.energy),
            Some(self.grad_norm_sq),
            Some(self.delta),
            self.mass,
            Some(self.v_r),
            Some(self.dv_r),
            Some(self.d2v_r),
            Some(self.z_accum),
            self.theta,
            self.mu,
            self.alpha,
        ]
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub t: f64,
    pub u: RadialField,
    pub dt: f64,
    pub step_count: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub direction: Direction,
    pub rows: Vec<DiagnosticsRow>,
    pub halt: Halt,
    /// Last finite state, in physical time.
    pub last: EvolutionState,
    pub kinetic_w: f64,
    pub energy_w: f64,
    /// Z-norm integrand of W.
    pub z_w: f64,
}

/// Strang splitting: exact phase flow of the frozen potential, Crank–Nicolson for i u_t + Δu = 0.
pub struct Evolver<'h, 'a> {
    pub h: &'h Hartree<'a>,
    pub controls: Controls,
    spectrum: &'a LaplacianSpectrum,
    cutoff: CutoffProfile,
    modulator: Modulator<'a>,
    rho_w: f64,
    kinetic_w: f64,
    energy_w: f64,
    z_w: f64,
    weights: Vec<f64>,
    mass_tracked: bool,
    local_mask: Array1<f64>,
}

struct Inner {
    /// Field evolved in forward time and its current phase rate.
    u: RadialField,
    rate: Array1<f64>,
}

impl<'h, 'a> Evolver<'h, 'a> {
    pub fn new(h: &'h Hartree<'a>, controls: Controls) -> Result<Self> {
        let grid = h.grid;
        let spectrum = grid.spectrum()?;
        let radius = if controls.virial_radius > 0.0 { controls.virial_radius } else { grid.r_max() / 4.0 };
        let cutoff = CutoffProfile::new(grid, radius)?;
        let modulator = Modulator::new(h, ModulationOptions { delta0: controls.delta0, ..Default::default() });
        let w = h.cache.groundstate_field();
        let modes = spectrum.to_modes(&w.re);
        let rho_w = frequency(&spectrum.values, &modes, &Array1::zeros(modes.len()));
        let kinetic_w = grid.h1_norm_sq(&w);
        let energy_w = h.energy(&w);
        let weights = compositions().get(&controls.composition)?.weights();
        let z_w = z_integrand(h, &w);
        let local_mask = grid.qp_nodes().mapv(|r| if r <= controls.scatter_radius { 1.0 } else { 0.0 });
        Ok(Evolver {
            h,
            controls,
            spectrum,
            cutoff,
            modulator,
            rho_w,
            kinetic_w,
            energy_w,
            z_w,
            weights,
            mass_tracked: grid.dim() >= 5,
            local_mask,
        })
    }

    pub fn cutoff(&self) -> &CutoffProfile {
        &self.cutoff
    }

    pub fn kinetic_w(&self) -> f64 {
        self.kinetic_w
    }

    pub fn energy_w(&self) -> f64 {
        self.energy_w
    }

    fn modes(&self, u: &RadialField) -> Array2<f64> {
        let sw = &self.spectrum.sqrt_w;
        let mut x = Array2::zeros((u.len(), 2));
        x.column_mut(0).assign(&(&u.re * sw));
        x.column_mut(1).assign(&(&u.im * sw));
        self.spectrum.vectors.t().dot(&x)
    }

    fn nodal(&self, c: &Array2<f64>) -> RadialField {
        let x = self.spectrum.vectors.dot(c);
        let sw = &self.spectrum.sqrt_w;
        RadialField { re: &x.column(0) / sw, im: &x.column(1) / sw }
    }

    /// One Strang step of size dt; returns the spectral frequency ρ after the linear substep.
    fn advance(&self, s: &mut Inner, dt: f64) -> f64 {
        let mut rho = 0.0;
        for w in &self.weights {
            rho = self.strang(s, w * dt);
        }
        rho
    }

    fn strang(&self, s: &mut Inner, dt: f64) -> f64 {
        let half = |u: &RadialField, rate: &Array1<f64>| {
            let (sn, cs): (Array1<f64>, Array1<f64>) =
                (rate.mapv(|g| (0.5 * dt * g).sin()), rate.mapv(|g| (0.5 * dt * g).cos()));
            RadialField { re: &u.re * &cs - &u.im * &sn, im: &u.re * &sn + &u.im * &cs }
        };
        let u = half(&s.u, &s.rate);
        let mut c = self.modes(&u);
        // (1 - iκdt/2)/(1 + iκdt/2) acting on c₁ + i c₂
        for (k, mut row) in self.spectrum.values.iter().zip(c.axis_iter_mut(Axis(0))) {
            let a = 0.5 * k * dt;
            let d = 1.0 + a * a;
            let (cr, ci) = ((1.0 - a * a) / d, -2.0 * a / d);
            let (x, y) = (row[0], row[1]);
            row[0] = cr * x - ci * y;
            row[1] = cr * y + ci * x;
        }
        let rho = frequency(&self.spectrum.values, &c.column(0).to_owned(), &c.column(1).to_owned());
        let u = self.nodal(&c);
        let rate = self.h.phase_rate(&u);
        s.u = half(&u, &rate);
        s.rate = rate;
        rho
    }

    /// Advance a state by one step of its current dt (forward time).
    pub fn step(&self, state: &EvolutionState) -> EvolutionState {
        let mut inner = Inner { u: state.u.clone(), rate: self.h.phase_rate(&state.u) };
        let rho = self.advance(&mut inner, state.dt);
        EvolutionState { t: state.t + state.dt, u: inner.u, dt: self.next_dt(rho), step_count: state.step_count + 1 }
    }

    fn next_dt(&self, rho: f64) -> f64 {
        self.controls.dt_max * (self.rho_w / rho).min(1.0)
    }

    fn local_fraction(&self, u: &RadialField) -> f64 {
        let g = self.h.grid;
        let (a, b) = (g.derivative_at_qp(&u.re), g.derivative_at_qp(&u.im));
        let dens = &a * &a + &b * &b;
        let total = g.integrate_qp(&dens);
        if total > 0.0 {
            g.integrate_qp(&(&dens * &self.local_mask)) / total
        } else {
            0.0
        }
    }

    fn row(&self, t: f64, u: &RadialField, z_accum: f64, dt: f64, warm: &mut Option<(f64, f64)>) -> DiagnosticsRow {
        let g = self.h.grid;
        let grad = g.h1_norm_sq(u);
        let delta = (grad - self.kinetic_w).abs();
        let vir = virial(self.h, u, &self.cutoff);
        let (mut theta, mut mu, mut alpha) = (None, None, None);
        if delta / self.kinetic_w < self.controls.delta0 {
            if let Ok(p) = self.modulator.decompose(u, *warm) {
                *warm = Some((p.theta, p.mu));
                theta = Some(p.theta);
                mu = Some(p.mu);
                alpha = Some(p.alpha);
            } else {
                *warm = None;
            }
        }
        DiagnosticsRow {
            t,
            energy: self.h.energy(u),
            grad_norm_sq: grad,
            delta,
            mass: self.mass_tracked.then(|| g.l2_norm(u).powi(2)),
            v_r: vir.v,
            dv_r: vir.dv,
            d2v_r: vir.d2v,
            z_accum,
            theta,
            mu,
            alpha,
            dt,
            local_fraction: self.local_fraction(u),
            d2v_main: vir.main,
        }
    }

    /// Integrate from u0 at time t0 for `controls.duration`; backward runs evolve ū forward.
    pub fn evolve(&self, u0: &RadialField, t0: f64, direction: Direction) -> Result<Trajectory> {
        self.h.grid.check_len(u0.len())?;
        if !u0.is_finite() {
            return Err(Error::Numerical("initial data are not finite".into()));
        }
        let c = &self.controls;
        let sgn = direction.sign();
        let physical = |v: &RadialField| if sgn > 0.0 { v.clone() } else { v.conj() };
        let mut inner = Inner {
            u: physical(u0),
            rate: Array1::zeros(0),
        };
        inner.rate = self.h.phase_rate(&inner.u);
        let c0 = self.modes(&inner.u);
        let mut dt = self.next_dt(frequency(&self.spectrum.values, &c0.column(0).to_owned(), &c0.column(1).to_owned()));
        let mut s = 0.0;
        let mut steps = 0usize;
        let mut zint = z_integrand(self.h, u0);
        let mut zacc = 0.0;
        let mut warm = None;
        let mut rows = vec![self.row(t0, u0, 0.0, dt, &mut warm)];
        let mut peak_delta = rows[0].delta;
        let mut zhist = vec![(0.0, 0.0)];
        let mut last = EvolutionState { t: t0, u: u0.clone(), dt, step_count: 0 };
        let halt = loop {
            if s >= c.duration - 1e-12 {
                break Halt::Completed;
            }
            if dt < c.dt_min {
                break Halt::ResolutionExhausted;
            }
            let h = dt.min(c.duration - s);
            let prev = inner.u.clone();
            let prev_rate = inner.rate.clone();
            let rho = self.advance(&mut inner, h);
            if !inner.u.is_finite() || !rho.is_finite() {
                inner.u = prev;
                inner.rate = prev_rate;
                break Halt::NonFinite;
            }
            s += h;
            steps += 1;
            dt = self.next_dt(rho);
            let zn = z_integrand(self.h, &inner.u);
            zacc += 0.5 * h * (zint + zn);
            zint = zn;
            let u_phys = physical(&inner.u);
            last = EvolutionState { t: t0 + sgn * s, u: u_phys.clone(), dt, step_count: steps };
            let grad = self.h.grid.h1_norm_sq(&u_phys);
            let threshold = grad > c.blowup_factor * self.kinetic_w;
            let done = s >= c.duration - 1e-12;
            if steps % c.sample_every.max(1) == 0 || done || threshold || dt < c.dt_min {
                let row = self.row(t0 + sgn * s, &u_phys, zacc, dt, &mut warm);
                zhist.push((s, zacc));
                let scattered = self.scattered(&zhist, row.local_fraction);
                peak_delta = peak_delta.max(row.delta);
                let converged = row.delta < c.converge_delta * self.kinetic_w && peak_delta >= 100.0 * row.delta;
                rows.push(row);
                if threshold && c.stop_on_proxy {
                    break Halt::GradientThreshold;
                }
                if scattered && c.stop_on_proxy {
                    break Halt::Scattered;
                }
                if converged && c.stop_on_proxy {
                    break Halt::Converged;
                }
            }
        };
        if halt == Halt::NonFinite && rows.len() < 2 {
            return Err(Error::Numerical(format!("solution became non-finite at t = {}", last.t)));
        }
        Ok(Trajectory { direction, rows, halt, last, kinetic_w: self.kinetic_w, energy_w: self.energy_w, z_w: self.z_w })
    }

    fn scattered(&self, zhist: &[(f64, f64)], local_fraction: f64) -> bool {
        let c = &self.controls;
        let (s1, z1) = *zhist.last().unwrap();
        if s1 < c.scatter_window {
            return false;
        }
        let Some(&(s0, z0)) = zhist.iter().rev().find(|(s, _)| *s <= s1 - c.scatter_window) else {
            return false;
        };
        (z1 - z0) / (s1 - s0) / self.z_w < c.scatter_z_rate && local_fraction < c.scatter_local_fraction
    }
}

/// ρ = Σκ²|c|² / Σκ|c|², a squared frequency that scales like μ^{-2} under concentration.
fn frequency(kappa: &Array1<f64>, c1: &Array1<f64>, c2: &Array1<f64>) -> f64 {
    let e = c1 * c1 + c2 * c2;
    let num = (kappa * kappa * &e).sum();
    let den = (kappa * &e).sum();
    if den > 0.0 {
        num / den
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Scatter,
    ConvergeToW,
    BlowupProxy,
    Undecided,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub reason: String,
    /// Decay rate of δ(t) fitted on the converging segment.
    pub delta_rate: Option<f64>,
    pub alpha_rate: Option<f64>,
    /// Z-norm growth per unit time over the trailing window.
    pub z_rate: Option<f64>,
    pub local_fraction: f64,
    /// sign(‖∇u‖² - ‖∇W‖²) at the start, and whether it held throughout.
    pub side: i32,
    pub side_preserved: bool,
    /// (1/T)∫δ/‖∇W‖²
    pub mean_delta: f64,
    /// max |E(t) - E(0)| / max(|E|, E(W)) per unit time
    pub energy_drift: f64,
    pub mass_drift: Option<f64>,
}

/// Decay rate of log y over the rows where y lies between `floor` and `ceiling`.
fn decay_rate(pts: &[(f64, f64)], ceiling: f64, floor: f64) -> Option<(f64, usize)> {
    let sel: Vec<(f64, f64)> =
        pts.iter().filter(|(_, y)| *y > floor && *y < ceiling).map(|(t, y)| (t.abs(), y.ln())).collect();
    if sel.len() < 5 {
        return None;
    }
    Some((-linear_slope(&sel), sel.len()))
}

/// max |V_R'(t_i) - dV_R(t_i)| / max |dV_R| over interior rows, with V_R' the
/// second-order three-point derivative on the (possibly uneven) row times.
pub fn virial_derivative_mismatch(rows: &[DiagnosticsRow]) -> Option<f64> {
    if rows.len() < 3 {
        return None;
    }
    let scale = rows.iter().map(|r| r.dv_r.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let worst = rows
        .windows(3)
        .map(|w| {
            let (h0, h1) = (w[1].t - w[0].t, w[2].t - w[1].t);
            let d = -h1 / (h0 * (h0 + h1)) * w[0].v_r + (h1 - h0) / (h0 * h1) * w[1].v_r
                + h0 / (h1 * (h0 + h1)) * w[2].v_r;
            (d - w[1].dv_r).abs()
        })
        .fold(0.0, f64::max);
    Some(worst / scale)
}

pub fn classify(traj: &Trajectory, controls: &Controls) -> Classification {
    let rows = &traj.rows;
    let g = traj.kinetic_w;
    let t_span = (rows.last().map(|r| r.t).unwrap_or(0.0) - rows[0].t).abs();
    let e0 = rows[0].energy;
    let escale = e0.abs().max(traj.energy_w);
    let energy_drift = rows.iter().map(|r| (r.energy - e0).abs()).fold(0.0, f64::max) / escale / t_span.max(1.0);
    let mass_drift = rows[0].mass.map(|m0| {
        rows.iter().filter_map(|r| r.mass).map(|m| (m - m0).abs()).fold(0.0, f64::max) / m0 / t_span.max(1.0)
    });
    let noise = 1e-10 * g;
    let sides: Vec<i32> = rows
        .iter()
        .filter(|r| r.delta > noise)
        .map(|r| if r.grad_norm_sq > g { 1 } else { -1 })
        .collect();
    let side = sides.first().copied().unwrap_or(0);
    let side_preserved = sides.iter().all(|&s| s == side);
    let mean_delta = rows.windows(2).map(|w| 0.5 * (w[1].t - w[0].t).abs() * (w[0].delta + w[1].delta)).sum::<f64>()
        / g
        / t_span.max(f64::MIN_POSITIVE);
    let last = rows.last().unwrap();
    let window_start = rows.iter().rev().find(|r| (last.t - r.t).abs() >= controls.scatter_window);
    let z_rate = window_start.map(|r| (last.z_accum - r.z_accum) / (last.t - r.t).abs() / traj.z_w);
    let mut out = Classification {
        verdict: Verdict::Undecided,
        reason: String::new(),
        delta_rate: None,
        alpha_rate: None,
        z_rate,
        local_fraction: last.local_fraction,
        side,
        side_preserved,
        mean_delta,
        energy_drift,
        mass_drift,
    };
    if rows.len() < controls.min_rows {
        out.reason = format!("only {} diagnostic rows (need {})", rows.len(), controls.min_rows);
        return out;
    }
    match traj.halt {
        Halt::ResolutionExhausted | Halt::GradientThreshold => {
            out.verdict = Verdict::BlowupProxy;
            out.reason = format!(
                "{} at t = {} with ‖∇u‖²/‖∇W‖² = {:.3}",
                if traj.halt == Halt::GradientThreshold { "gradient threshold" } else { "dt collapse" },
                last.t,
                last.grad_norm_sq / g
            );
            return out;
        }
        Halt::NonFinite => {
            out.reason = format!("non-finite state after t = {}", last.t);
            return out;
        }
        _ => {}
    }
    let max_delta = rows.iter().map(|r| r.delta).fold(0.0, f64::max);
    if max_delta <= controls.converge_delta * g {
        out.verdict = Verdict::ConvergeToW;
        out.reason = format!("δ/‖∇W‖² stays below {:.1e} throughout", controls.converge_delta);
        return out;
    }
    let t0 = rows[0].t;
    // the decay phase ends at the smallest δ; past it the unstable direction of W takes over
    let imin = (0..rows.len()).min_by(|&i, &j| rows[i].delta.total_cmp(&rows[j].delta)).unwrap();
    let min_rel = rows[imin].delta / g;
    if min_rel < controls.converge_delta {
        let pre = &rows[..=imin];
        let delta_pts: Vec<(f64, f64)> = pre.iter().map(|r| (r.t - t0, r.delta / g)).collect();
        if let Some((rate, _)) = decay_rate(&delta_pts, 1e-2, (3.0 * min_rel).max(1e-13)) {
            if rate > 0.0 {
                out.delta_rate = Some(rate);
                let alpha_pts: Vec<(f64, f64)> =
                    pre.iter().filter_map(|r| r.alpha.map(|a| (r.t - t0, a.abs()))).collect();
                let afloor = alpha_pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                out.alpha_rate = decay_rate(&alpha_pts, 1e-2, (3.0 * afloor).max(1e-13)).map(|r| r.0);
                out.verdict = Verdict::ConvergeToW;
                out.reason = format!(
                    "δ decays exponentially at rate {rate:.6} to {min_rel:.3e} at t = {}",
                    rows[imin].t
                );
                return out;
            }
        }
    }
    if let Some(zr) = z_rate {
        if zr < controls.scatter_z_rate && last.local_fraction < controls.scatter_local_fraction {
            out.verdict = Verdict::Scatter;
            out.reason = format!(
                "relative Z-norm growth {zr:.3e} per unit time and local kinetic fraction {:.3e}",
                last.local_fraction
            );
            return out;
        }
    }
    out.reason = format!("no proxy fired by t = {} (δ/‖∇W‖² = {:.3e})", last.t, last.delta / g);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::ModelParams;
    use crate::riesz::RieszKernel;

    #[test]
    fn unit_cutoff_is_c3() {
        for (x, k) in [(1.0, 0), (2.0, 1)] {
            let a = unit_cutoff(x - 1e-9);
            let b = unit_cutoff(x + 1e-9);
            for d in 0..4 {
                assert!((a[d] - b[d]).abs() < 1e-5, "x={x} d={d} {k}");
            }
        }
        let c = unit_cutoff(1.5);
        let h = 1e-5;
        let fd = (unit_cutoff(1.5 + h)[0] - unit_cutoff(1.5 - h)[0]) / (2.0 * h);
        assert!((fd - c[1]).abs() < 1e-8);
        let fd4 = (unit_cutoff(1.5 + h)[3] - unit_cutoff(1.5 - h)[3]) / (2.0 * h);
        assert!((fd4 - c[4]).abs() < 1e-5);
    }

    #[test]
    fn znorm_of_constant_and_zero() {
        assert_eq!(znorm_accumulate(&[(0.0, 0.0), (1.0, 0.0)]), 0.0);
        let s: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64 * 0.1, 2.0)).collect();
        assert!((znorm_accumulate(&s) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn groundstate_virial_and_stationarity() {
        let params = ModelParams::new(6, 4.0).unwrap();
        let grid = RadialGrid::new(&GridSpec::preset(6).with_m(128)).unwrap();
        let kernel = RieszKernel::assemble(&grid, &params, "spectral").unwrap();
        let h = Hartree::new(&grid, &params, &kernel).unwrap();
        let w = h.cache.groundstate_field();
        let ev = Evolver::new(&h, Controls { duration: 1.5, ..Default::default() }).unwrap();
        let vir = virial(&h, &w, ev.cutoff());
        let g = ev.kinetic_w();
        assert!(vir.main.abs() < 1e-9 * g, "main {}", vir.main);
        assert!(vir.a_r.abs() < 1e-6 * g, "A_R {}", vir.a_r);
        assert!(vir.dv.abs() < 1e-14);
        let traj = ev.evolve(&w, 0.0, Direction::Forward).unwrap();
        let u = &traj.last.u;
        let dev = grid.l2_norm(&RadialField::real(u.modulus() - &w.re)) / grid.l2_norm(&w);
        assert!(dev < 1e-6, "modulus deviation {dev:e}");
        assert_eq!(traj.halt, Halt::Completed);
        let cl = classify(&traj, &Controls { min_rows: 10, ..Default::default() });
        assert!(cl.energy_drift < 1e-6, "{cl:?}");
    }
}
