//! Experiments assembled from the numerical modules: ground-state constants,
//! the spectral report, the series study and grid-refinement rows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::{GridSpec, RadialGrid};
use crate::io::kernel_cached;
use crate::linearized::{identity_checks, routes, Constraints, IdentityCheck, LinearizedSystem, SpectralData, SpectralOptions};
use crate::model::ModelParams;
use crate::nonlinearity::Hartree;
use crate::riesz::{closed_form_error, RieszKernel};
use crate::special::{build_series, start_time, ApproxSolutionSeries, FitOptions};

/// Parameters, grid and assembled kernel of one run.
pub struct Lab {
    pub params: ModelParams,
    pub grid: RadialGrid,
    pub kernel: RieszKernel,
    pub strategy: String,
}

impl Lab {
    pub fn new(params: ModelParams, spec: &GridSpec, strategy: &str, cache: Option<&Path>) -> Result<Self> {
        if spec.dim != params.n {
            return Err(Error::Config(format!("grid dimension {} differs from N = {}", spec.dim, params.n)));
        }
        let grid = RadialGrid::new(spec)?;
        let kernel = kernel_cached(cache, &grid, &params, strategy)?;
        Ok(Lab { params, grid, kernel, strategy: strategy.to_string() })
    }

    pub fn hartree(&self) -> Result<Hartree<'_>> {
        Hartree::new(&self.grid, &self.params, &self.kernel)
    }

    pub fn system(&self) -> Result<LinearizedSystem<'_>> {
        LinearizedSystem::assemble(&self.grid, &self.kernel, &self.params)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ConstantsTolerances {
    /// Relative mismatch of ‖∇W‖² against C^{-p/(p-1)}.
    pub kinetic: f64,
    /// Relative mismatch of E(W) against (p-1)/(2p)‖∇W‖².
    pub energy: f64,
    /// ‖-ΔW - N(W)‖/‖ΔW‖ in L².
    pub residual: f64,
}

impl Default for ConstantsTolerances {
    fn default() -> Self {
        ConstantsTolerances { kinetic: 1e-6, energy: 1e-8, residual: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstantsReport {
    pub n: usize,
    pub lambda: f64,
    pub p: f64,
    pub beta: f64,
    pub sharp_constant: f64,
    pub kinetic_theory: f64,
    pub kinetic_quadrature: f64,
    pub kinetic_mismatch: f64,
    pub energy_theory: f64,
    pub energy_quadrature: f64,
    pub energy_mismatch: f64,
    /// |E(W) - (p-1)/(2p)‖∇W‖²| / E(W) with both sides from quadrature.
    pub energy_identity: f64,
    pub stationary_residual: f64,
    /// Sup-relative error of the discrete I_λ*W^p against its closed form.
    pub kernel_error: f64,
    pub failures: Vec<String>,
    pub pass: bool,
}

pub fn constants(lab: &Lab, tol: &ConstantsTolerances) -> Result<ConstantsReport> {
    let h = lab.hartree()?;
    let g = &lab.grid;
    let p = lab.params.p;
    let w = h.cache.groundstate_field();
    let theory = lab.params.theoretical_energy();
    let kinetic_quadrature = g.h1_norm_sq(&w);
    let energy_quadrature = h.energy(&w);
    let kinetic_mismatch = ((kinetic_quadrature - theory.kinetic) / theory.kinetic).abs();
    let energy_mismatch = ((energy_quadrature - theory.energy) / theory.energy).abs();
    let energy_identity =
        ((energy_quadrature - (p - 1.0) / (2.0 * p) * kinetic_quadrature) / energy_quadrature).abs();
    let stationary_residual =
        g.l2_norm(&h.stationary_residual()) / g.l2_norm_real(&g.neg_laplacian(&w.re));
    let mut failures = Vec::new();
    for (name, value, limit) in [
        ("kinetic_mismatch", kinetic_mismatch, tol.kinetic),
        ("energy_identity", energy_identity, tol.energy),
        ("stationary_residual", stationary_residual, tol.residual),
    ] {
        if !(value < limit) {
            failures.push(format!("{name} = {value:.3e} exceeds {limit:.1e}"));
        }
    }
    Ok(ConstantsReport {
        n: lab.params.n,
        lambda: lab.params.lambda,
        p,
        beta: lab.params.beta,
        sharp_constant: lab.params.sharp_constant(),
        kinetic_theory: theory.kinetic,
        kinetic_quadrature,
        kinetic_mismatch,
        energy_theory: theory.energy,
        energy_quadrature,
        energy_mismatch,
        energy_identity,
        stationary_residual,
        kernel_error: closed_form_error(g, &lab.params, &lab.kernel),
        pass: failures.is_empty(),
        failures,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SpectrumTolerances {
    /// Relative agreement of e₀ between the two routes.
    pub route_agreement: f64,
    pub residual: f64,
    pub gap_ratio: f64,
    pub angle: f64,
    /// Relative mismatch of the α² coefficient of the sharp-ratio deficit.
    pub curvature: f64,
}

impl Default for SpectrumTolerances {
    fn default() -> Self {
        SpectrumTolerances { route_agreement: 1e-6, residual: 1e-6, gap_ratio: 100.0, angle: 1e-3, curvature: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumSettings {
    pub options: SpectralOptions,
    pub tolerances: SpectrumTolerances,
    /// Route whose eigenpair is reported and used downstream.
    pub route: String,
    /// Seed of the random pairs in the identity battery.
    pub seed: u64,
    /// Skip the O(M³) singular value decomposition of 𝓛.
    pub skip_certificate: bool,
}

impl Default for SpectrumSettings {
    fn default() -> Self {
        SpectrumSettings {
            options: SpectralOptions::default(),
            tolerances: SpectrumTolerances::default(),
            route: "direct".into(),
            seed: 7,
            skip_certificate: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub e0: f64,
    /// Coupled residuals of the reported route followed by those of the other one.
    pub residuals: Vec<f64>,
    pub kernel_singulars: Vec<f64>,
    pub coercivity_c: f64,
    pub identity_checks: Vec<IdentityCheck>,
}

impl SpectralReport {
    pub fn pass(&self) -> bool {
        self.identity_checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.identity_checks.iter().find(|c| c.name == name)
    }
}

pub struct SpectrumOutcome {
    pub report: SpectralReport,
    pub data: SpectralData,
}

/// A smooth complex test direction projected onto H⊥ and scaled to ‖h‖_{Ḣ¹} = ‖W‖_{Ḣ¹}.
pub fn hperp_probe(sys: &LinearizedSystem<'_>) -> RadialField {
    let g = sys.grid;
    let f = RadialField {
        re: g.sample(|r| (1.0 + r * r).powf(-(g.dim() as f64) / 2.0) * (1.0 - 0.5 * r)),
        im: g.sample(|r| (-0.5 * r * r).exp() * r),
    };
    let h = sys.project_hperp(&f);
    let w = sys.cache.groundstate_field();
    h.scale((g.h1_norm_sq(&w) / g.h1_norm_sq(&h)).sqrt())
}

/// Both eigen routes, the kernel certificate, coercivity on H⊥, the identity
/// battery and the quadratic coefficient of the sharp-ratio deficit.
pub fn spectrum(lab: &Lab, settings: &SpectrumSettings) -> Result<SpectrumOutcome> {
    let sys = lab.system()?;
    let reg = routes();
    let other = if settings.route == "direct" { "via-p" } else { "direct" };
    let main = reg.get(&settings.route)?.solve(&sys, &settings.options)?;
    let alt = reg.get(other)?.solve(&sys, &settings.options)?;
    let tol = &settings.tolerances;
    let mut checks = Vec::new();
    let agree = ((main.e0 - alt.e0) / main.e0).abs();
    checks.push(IdentityCheck::new("e0_route_agreement", agree, agree < tol.route_agreement));
    let worst = main.residuals.iter().chain(&alt.residuals).cloned().fold(0.0, f64::max);
    checks.push(IdentityCheck::new("coupled_residual", worst, worst < tol.residual));

    let mut kernel_singulars = Vec::new();
    if !settings.skip_certificate {
        let cert = sys.kernel_certificate(&settings.options)?;
        checks.push(IdentityCheck::new("kernel_count_below_tau", cert.below_tau as f64, cert.below_tau == 2));
        checks.push(IdentityCheck::new("kernel_gap_ratio", cert.gap_ratio, cert.gap_ratio >= tol.gap_ratio));
        checks.push(IdentityCheck::new("kernel_angle", cert.angle, cert.angle < tol.angle));
        checks.push(IdentityCheck::new(
            "kernel_count_deflated",
            cert.below_tau_deflated as f64,
            cert.below_tau_deflated == 0,
        ));
        kernel_singulars = cert.smallest;
    }

    let coercivity_c = match sys.coercivity(Constraints::Hperp) {
        Ok(c) => c.value,
        Err(Error::Spectral(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    checks.push(IdentityCheck::new("coercivity_positive", coercivity_c, coercivity_c > 0.0));

    let probe = hperp_probe(&sys);
    let kin = lab.grid.h1_norm_sq(&sys.cache.groundstate_field());
    let expected = 2.0 * lab.params.p * sys.phi(&probe) / kin;
    let alphas: Vec<f64> = (-4..=4).map(|i| 5e-4 * i as f64).collect();
    let curvature = sys.sharp_ratio_curvature(&probe, &alphas)?;
    let rel = ((curvature - expected) / expected).abs();
    checks.push(IdentityCheck::new("sharp_ratio_quadratic_coefficient", rel, rel < tol.curvature));

    checks.extend(identity_checks(&sys, &main, settings.seed));
    let mut residuals = main.residuals.to_vec();
    residuals.extend_from_slice(&alt.residuals);
    Ok(SpectrumOutcome {
        report: SpectralReport { e0: main.e0, residuals, kernel_singulars, coercivity_c, identity_checks: checks },
        data: main,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SeriesSettings {
    /// Sign of the threshold solution, ±1.
    pub a: f64,
    /// Number of series terms.
    pub k: usize,
    /// Initial time t₀ from e^{-e₀t₀} = decay.
    pub decay: f64,
    /// Sample times in the residual-slope window.
    pub samples: usize,
    pub fit: FitOptions,
}

impl Default for SeriesSettings {
    fn default() -> Self {
        SeriesSettings { a: 1.0, k: 3, decay: 0.05, samples: 13, fit: FitOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesReport {
    pub a: f64,
    pub k: usize,
    pub e0: f64,
    pub t0: f64,
    /// Start of the slope window.
    pub t_min: f64,
    /// Fitted log-slope of ‖ε_j(t)‖_{Ḣ¹} for j = 1..k.
    pub residual_slopes: Vec<f64>,
    /// Relative deviation of each slope from -(j+1)e₀.
    pub slope_errors: Vec<f64>,
}

pub fn series_study(
    sys: &LinearizedSystem<'_>,
    h: &Hartree<'_>,
    sd: &SpectralData,
    settings: &SeriesSettings,
) -> Result<(ApproxSolutionSeries, SeriesReport)> {
    if settings.a != 1.0 && settings.a != -1.0 {
        return Err(Error::Config(format!("series sign a must be +1 or -1, got {}", settings.a)));
    }
    let series = build_series(sys, h, sd, settings.a, settings.k, &settings.fit)?;
    let t_min = series.t_min(h);
    let mut residual_slopes = Vec::new();
    let mut slope_errors = Vec::new();
    for j in 1..=settings.k {
        let slope = series.truncated(j).residual_slope(h, t_min, settings.samples);
        let target = -(j as f64 + 1.0) * sd.e0;
        residual_slopes.push(slope);
        slope_errors.push(((slope - target) / target).abs());
    }
    let report = SeriesReport {
        a: settings.a,
        k: settings.k,
        e0: sd.e0,
        t0: start_time(sd.e0, settings.decay),
        t_min,
        residual_slopes,
        slope_errors,
    };
    Ok((series, report))
}

/// Diagnostics of one grid in a refinement study.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub m: usize,
    pub exactness_error: f64,
    pub kernel_error: f64,
    pub kinetic_mismatch: f64,
    pub energy_identity: f64,
    pub stationary_residual: f64,
    pub e0: f64,
    pub coercivity_c: f64,
}

pub fn convergence_row(params: ModelParams, spec: &GridSpec, strategy: &str, opts: &SpectralOptions) -> Result<ConvergenceRow> {
    let lab = Lab::new(params, spec, strategy, None)?;
    let c = constants(&lab, &ConstantsTolerances::default())?;
    let sys = lab.system()?;
    let e0 = routes().get("direct")?.solve(&sys, opts)?.e0;
    let coercivity_c = match sys.coercivity(Constraints::Hperp) {
        Ok(c) => c.value,
        Err(Error::Spectral(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(ConvergenceRow {
        m: spec.m,
        exactness_error: lab.grid.exactness_error(),
        kernel_error: c.kernel_error,
        kinetic_mismatch: c.kinetic_mismatch,
        energy_identity: c.energy_identity,
        stationary_residual: c.stationary_residual,
        e0,
        coercivity_c,
    })
}

/// One row per M, computed on up to `threads` workers; rows come back in the order of `ms`.
pub fn convergence_study(
    params: ModelParams,
    base: &GridSpec,
    ms: &[usize],
    strategy: &str,
    opts: &SpectralOptions,
    threads: usize,
) -> Result<Vec<ConvergenceRow>> {
    let threads = threads.clamp(1, ms.len().max(1));
    let mut slots: Vec<Option<Result<ConvergenceRow>>> = (0..ms.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..threads).map(|t| (t..ms.len()).step_by(threads).collect()).collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                scope.spawn(move || {
                    idx.into_iter()
                        .map(|i| (i, convergence_row(params, &base.with_m(ms[i]), strategy, opts)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for hd in handles {
            for (i, r) in hd.join().expect("convergence worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every row computed")).collect()
}

/// Observed order log₂(e_M/e_{2M}) between consecutive rows with doubled M.
pub fn observed_orders(rows: &[ConvergenceRow], key: impl Fn(&ConvergenceRow) -> f64) -> Vec<Option<f64>> {
    rows.windows(2)
        .map(|w| {
            let (a, b) = (key(&w[0]), key(&w[1]));
            (w[1].m == 2 * w[0].m && a > 0.0 && b > 0.0).then(|| (a / b).log2())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(m: usize) -> Lab {
        let params = ModelParams::new(6, 4.0).unwrap();
        Lab::new(params, &GridSpec::preset(6).with_m(m), "spectral", None).unwrap()
    }

    #[test]
    fn constants_pass_and_fail() {
        let r = constants(&lab(256), &ConstantsTolerances::default()).unwrap();
        assert!(r.pass, "{:?}", r.failures);
        let coarse = constants(&lab(16), &ConstantsTolerances::default()).unwrap();
        assert!(!coarse.pass);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let params = ModelParams::new(5, 4.0).unwrap();
        assert!(matches!(Lab::new(params, &GridSpec::preset(6).with_m(64), "spectral", None), Err(Error::Config(_))));
    }

    #[test]
    fn spectrum_report_passes() {
        let settings = SpectrumSettings { skip_certificate: true, ..Default::default() };
        let out = spectrum(&lab(256), &settings).unwrap();
        let failed: Vec<_> = out.report.identity_checks.iter().filter(|c| !c.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(out.report.coercivity_c > 0.0);
    }
}
