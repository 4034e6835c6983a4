//! The six subcommands. Each reads a [`RunConfig`], writes its artifacts into
//! the output directory and reports whether its tolerances were met.

use std::fs;
use std::path::{Path, PathBuf};

use hartree::evolution::{classify, Classification, DiagnosticsRow, EvolutionState, Evolver, Halt, Trajectory, Verdict, TRAJECTORY_COLUMNS};
use hartree::io::{read_field, read_table, write_field, write_table, FieldHeader};
use hartree::lab::{self, Lab};
use hartree::linearized::routes;
use hartree::special::special_initial_data;
use hartree::{thread_count, RadialField};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::{plots, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Constants,
    Spectrum,
    BuildSpecial,
    Evolve,
    Classify,
    ConvergenceStudy,
}

pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
    pub out: PathBuf,
    pub plots: bool,
}

/// What a successful run reports: printable lines and the tolerance verdict.
#[derive(Debug)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub pass: bool,
}

pub fn run(inv: &Invocation) -> Result<Outcome, CliError> {
    fs::create_dir_all(&inv.out).map_err(|e| CliError::io(&inv.out, e))?;
    match inv.command {
        Command::Constants => constants(inv),
        Command::Spectrum => spectrum(inv),
        Command::BuildSpecial => build_special(inv),
        Command::Evolve => evolve(inv),
        Command::Classify => reclassify(inv),
        Command::ConvergenceStudy => convergence(inv),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn open_lab(inv: &Invocation) -> Result<Lab, CliError> {
    let cfg = &inv.config;
    let cache = inv.out.join("kernels");
    if cfg.output.kernel_cache {
        fs::create_dir_all(&cache).map_err(|e| CliError::io(&cache, e))?;
    }
    let cache = cfg.output.kernel_cache.then_some(cache.as_path());
    Ok(Lab::new(cfg.model()?, &cfg.grid_spec(), &cfg.grid.kernel, cache)?)
}

fn g17(v: f64) -> String {
    format!("{v:.16e}")
}

fn constants(inv: &Invocation) -> Result<Outcome, CliError> {
    let lab = open_lab(inv)?;
    let r = lab::constants(&lab, &inv.config.constants)?;
    write_json(&inv.out.join("constants.json"), &r)?;
    let mut lines = vec![
        format!("{}  p = {}", lab.params.label(), g17(r.p)),
        format!("C(N,lambda)            {}", g17(r.sharp_constant)),
        format!("|grad W|^2 theory      {}", g17(r.kinetic_theory)),
        format!("|grad W|^2 quadrature  {}", g17(r.kinetic_quadrature)),
        format!("kinetic mismatch       {}", g17(r.kinetic_mismatch)),
        format!("E(W) theory            {}", g17(r.energy_theory)),
        format!("E(W) quadrature        {}", g17(r.energy_quadrature)),
        format!("energy identity        {}", g17(r.energy_identity)),
        format!("stationary residual    {}", g17(r.stationary_residual)),
        format!("kernel closed-form err {}", g17(r.kernel_error)),
    ];
    lines.extend(r.failures.iter().map(|f| format!("FAIL {f}")));
    Ok(Outcome { lines, pass: r.pass })
}

fn spectrum(inv: &Invocation) -> Result<Outcome, CliError> {
    let lab = open_lab(inv)?;
    let out = lab::spectrum(&lab, &inv.config.spectral)?;
    write_json(&inv.out.join("spectral_report.json"), &out.report)?;
    let header = FieldHeader::of(&lab.grid, lab.params.lambda);
    write_field(&inv.out.join("y_plus.csv"), &header, lab.grid.nodes(), &out.data.plus())?;
    write_field(&inv.out.join("y_minus.csv"), &header, lab.grid.nodes(), &out.data.minus())?;
    let mut lines = vec![format!("e0 {}", g17(out.report.e0)), format!("coercivity {}", g17(out.report.coercivity_c))];
    for c in &out.report.identity_checks {
        lines.push(format!("{} {} {}", if c.pass { "ok  " } else { "FAIL" }, c.name, g17(c.value)));
    }
    Ok(Outcome { lines, pass: out.report.pass() })
}

#[derive(Serialize, Deserialize)]
struct SpecialManifest {
    a: f64,
    k: usize,
    e0: f64,
    t0: f64,
    residual_slopes: Vec<f64>,
    t_min: f64,
    slope_errors: Vec<f64>,
    kinetic_gap: f64,
    energy_rel: f64,
    residual_norm: f64,
}

fn build_special(inv: &Invocation) -> Result<Outcome, CliError> {
    let cfg = &inv.config;
    let lab = open_lab(inv)?;
    let sys = lab.system()?;
    let h = lab.hartree()?;
    let sd = routes().get(&cfg.spectral.route)?.solve(&sys, &cfg.spectral.options)?;
    let (series, report) = lab::series_study(&sys, &h, &sd, &cfg.series.settings)?;
    let data = special_initial_data(&series, &h, report.t0)?;
    let header = FieldHeader::of(&lab.grid, lab.params.lambda);
    let dir = inv.out.join("series");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    for (j, z) in series.z.iter().enumerate() {
        write_field(&dir.join(format!("z{}.csv", j + 1)), &header, lab.grid.nodes(), z)?;
    }
    let manifest = SpecialManifest {
        a: report.a,
        k: report.k,
        e0: report.e0,
        t0: report.t0,
        residual_slopes: report.residual_slopes.clone(),
        t_min: report.t_min,
        slope_errors: report.slope_errors.clone(),
        kinetic_gap: data.kinetic_gap,
        energy_rel: data.energy_rel,
        residual_norm: data.residual_norm,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_field(&inv.out.join("special.csv"), &header, lab.grid.nodes(), &data.u)?;

    let mut lines = vec![
        format!("a {}  k {}  e0 {}  t0 {}", report.a, report.k, g17(report.e0), g17(report.t0)),
        format!("kinetic gap {}", g17(data.kinetic_gap)),
        format!("energy rel {}", g17(data.energy_rel)),
    ];
    let mut pass = data.energy_rel < cfg.series.energy_tolerance;
    for (j, (s, e)) in report.residual_slopes.iter().zip(&report.slope_errors).enumerate() {
        let ok = *e < cfg.series.slope_tolerance;
        pass &= ok;
        lines.push(format!(
            "{} slope k={} {} (target {})",
            if ok { "ok  " } else { "FAIL" },
            j + 1,
            g17(*s),
            g17(-(j as f64 + 2.0) * report.e0)
        ));
    }
    Ok(Outcome { lines, pass })
}

#[derive(Serialize, Deserialize)]
struct Scales {
    kinetic_w: f64,
    energy_w: f64,
    z_w: f64,
}

fn initial_data(inv: &Invocation, lab: &Lab) -> Result<(RadialField, f64, String), CliError> {
    let cfg = &inv.config;
    let check = |path: &Path| -> Result<RadialField, CliError> {
        let (hd, _, u) = read_field(path)?;
        let want = FieldHeader::of(&lab.grid, lab.params.lambda);
        if hd.n != want.n || hd.m != want.m || hd.lambda != want.lambda || hd.r_max != want.r_max {
            return Err(CliError::Config(format!(
                "{} was written for N={} lambda={} M={} r_max={}, not the configured grid",
                path.display(),
                hd.n,
                hd.lambda,
                hd.m,
                hd.r_max
            )));
        }
        Ok(u)
    };
    match cfg.evolution.initial.as_str() {
        "special" => {
            let u = check(&inv.out.join("special.csv"))?;
            let m: SpecialManifest = read_json(&inv.out.join("series").join("manifest.json"))?;
            Ok((u, m.t0, format!("special a={} k={}", m.a, m.k)))
        }
        "groundstate" => Ok((RadialField::real(lab.grid.sample(|r| lab.params.groundstate(r))), cfg.evolution.t0, "groundstate".into())),
        path => Ok((check(Path::new(path))?, cfg.evolution.t0, path.to_string())),
    }
}

fn rates_json(c: &Classification) -> serde_json::Value {
    json!({ "delta_rate": c.delta_rate, "alpha_rate": c.alpha_rate, "z_rate": c.z_rate })
}

fn verdict_lines(c: &Classification, expect: Option<Verdict>) -> (Vec<String>, bool) {
    let name = serde_json::to_value(c.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut lines = vec![format!("verdict {name}"), format!("reason {}", c.reason)];
    if let Some(r) = c.delta_rate {
        lines.push(format!("delta rate {}", g17(r)));
    }
    lines.push(format!("energy drift {}", g17(c.energy_drift)));
    lines.push(format!("side {} preserved {}", c.side, c.side_preserved));
    let pass = expect.is_none_or(|e| e == c.verdict);
    if !pass {
        lines.push(format!("FAIL expected {:?}", expect.unwrap()));
    }
    (lines, pass)
}

fn evolve(inv: &Invocation) -> Result<Outcome, CliError> {
    let cfg = &inv.config;
    let lab = open_lab(inv)?;
    let h = lab.hartree()?;
    let (u0, t0, source) = initial_data(inv, &lab)?;
    let ev = Evolver::new(&h, cfg.evolution.controls.clone())?;
    let traj = ev.evolve(&u0, t0, cfg.evolution.direction)?;
    let class = classify(&traj, &cfg.evolution.controls);
    let rows: Vec<_> = traj.rows.iter().map(DiagnosticsRow::cells).collect();
    write_table(&inv.out.join("trajectory.csv"), &TRAJECTORY_COLUMNS, &rows)?;
    let manifest = json!({
        "params": lab.params,
        "grid": { "spec": cfg.grid_spec(), "kernel": cfg.grid.kernel },
        "controls": cfg.evolution,
        "verdict": class.verdict,
        "fitted_rates": rates_json(&class),
        "seed": cfg.spectral.seed,
        "initial": { "source": source, "t0": t0 },
        "halt": traj.halt,
        "scales": Scales { kinetic_w: traj.kinetic_w, energy_w: traj.energy_w, z_w: traj.z_w },
        "final_local_fraction": class.local_fraction,
        "classification": class,
        "config": cfg,
    });
    write_json(&inv.out.join("run_manifest.json"), &manifest)?;
    if inv.plots {
        plots::trajectory(&inv.out, &traj.rows, traj.kinetic_w)?;
    }
    let (mut lines, pass) = verdict_lines(&class, cfg.expected_verdict()?);
    lines.insert(0, format!("halt {:?} after {} rows", traj.halt, traj.rows.len()));
    Ok(Outcome { lines, pass })
}

/// Rows of a trajectory CSV; diagnostics not stored in it are left at zero.
pub fn rows_from_table(path: &Path) -> Result<Vec<DiagnosticsRow>, CliError> {
    let (cols, table) = read_table(path)?;
    if cols.iter().map(String::as_str).ne(TRAJECTORY_COLUMNS.iter().copied()) {
        return Err(CliError::Config(format!("{} does not have the trajectory columns", path.display())));
    }
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| CliError::Config(format!("{}: empty {name} cell", path.display())))
    };
    table
        .into_iter()
        .map(|r| {
            Ok(DiagnosticsRow {
                t: need(r[0], "t")?,
                energy: need(r[1], "energy")?,
                grad_norm_sq: need(r[2], "grad_norm_sq")?,
                delta: need(r[3], "delta")?,
                mass: r[4],
                v_r: need(r[5], "V_R")?,
                dv_r: need(r[6], "dV_R")?,
                d2v_r: need(r[7], "d2V_R")?,
                z_accum: need(r[8], "z_accum")?,
                theta: r[9],
                mu: r[10],
                alpha: r[11],
                dt: 0.0,
                local_fraction: 0.0,
                d2v_main: 0.0,
            })
        })
        .collect()
}

fn reclassify(inv: &Invocation) -> Result<Outcome, CliError> {
    let cfg = &inv.config;
    let manifest: serde_json::Value = read_json(&inv.out.join("run_manifest.json"))?;
    let field = |k: &str| {
        manifest.get(k).cloned().ok_or_else(|| CliError::Config(format!("run manifest lacks {k}")))
    };
    let scales: Scales = serde_json::from_value(field("scales")?)?;
    let halt: Halt = serde_json::from_value(field("halt")?)?;
    let local: f64 = serde_json::from_value(field("final_local_fraction")?)?;
    let controls: hartree::evolution::Controls = serde_json::from_value(field("controls")?)?;
    let mut rows = rows_from_table(&inv.out.join("trajectory.csv"))?;
    if rows.is_empty() {
        return Err(CliError::Config("trajectory.csv has no rows".into()));
    }
    rows.last_mut().unwrap().local_fraction = local;
    let direction = if rows.len() > 1 && rows[1].t < rows[0].t {
        hartree::evolution::Direction::Backward
    } else {
        hartree::evolution::Direction::Forward
    };
    let last = EvolutionState { t: rows.last().unwrap().t, u: RadialField::zeros(0), dt: 0.0, step_count: 0 };
    let traj = Trajectory {
        direction,
        rows,
        halt,
        last,
        kinetic_w: scales.kinetic_w,
        energy_w: scales.energy_w,
        z_w: scales.z_w,
    };
    // proxy thresholds come from the current configuration, the run itself from the manifest
    let thresholds = hartree::evolution::Controls { duration: controls.duration, ..cfg.evolution.controls.clone() };
    let class = classify(&traj, &thresholds);
    write_json(&inv.out.join("classification.json"), &json!({ "verdict": class.verdict, "fitted_rates": rates_json(&class), "classification": class }))?;
    if inv.plots {
        plots::trajectory(&inv.out, &traj.rows, traj.kinetic_w)?;
    }
    let (lines, pass) = verdict_lines(&class, cfg.expected_verdict()?);
    Ok(Outcome { lines, pass })
}

fn convergence(inv: &Invocation) -> Result<Outcome, CliError> {
    let cfg = &inv.config;
    let ms = &cfg.convergence.ms;
    if ms.len() < 2 {
        return Err(CliError::Config("convergence.ms needs at least two grid sizes".into()));
    }
    let rows = lab::convergence_study(
        cfg.model()?,
        &cfg.grid_spec(),
        ms,
        &cfg.grid.kernel,
        cfg.spectral_options(),
        thread_count(),
    )?;
    let cols = [
        "m",
        "exactness_error",
        "kernel_error",
        "kinetic_mismatch",
        "energy_identity",
        "stationary_residual",
        "e0",
        "coercivity_c",
    ];
    let table: Vec<Vec<Option<f64>>> = rows
        .iter()
        .map(|r| {
            vec![
                Some(r.m as f64),
                Some(r.exactness_error),
                Some(r.kernel_error),
                Some(r.kinetic_mismatch),
                Some(r.energy_identity),
                Some(r.stationary_residual),
                Some(r.e0),
                Some(r.coercivity_c),
            ]
        })
        .collect();
    write_table(&inv.out.join("convergence.csv"), &cols, &table)?;
    let n = rows.len();
    let e0_change = ((rows[n - 1].e0 - rows[n - 2].e0) / rows[n - 1].e0).abs();
    let sign_stable = rows.iter().all(|r| r.coercivity_c > 0.0) || rows.iter().all(|r| r.coercivity_c < 0.0);
    let pass = e0_change < cfg.convergence.e0_tolerance && sign_stable;
    let orders = lab::observed_orders(&rows, |r| r.exactness_error);
    write_json(
        &inv.out.join("convergence.json"),
        &json!({
            "rows": rows,
            "exactness_orders": orders,
            "e0_change": e0_change,
            "coercivity_sign_stable": sign_stable,
            "pass": pass,
        }),
    )?;
    let mut lines: Vec<String> = rows
        .iter()
        .map(|r| format!("M {:5}  e0 {}  coercivity {}  residual {}", r.m, g17(r.e0), g17(r.coercivity_c), g17(r.stationary_residual)))
        .collect();
    lines.push(format!("e0 change {}  coercivity sign stable {}", g17(e0_change), sign_stable));
    Ok(Outcome { lines, pass })
}
