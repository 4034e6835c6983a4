use std::sync::OnceLock;

use hartree::evolution::{classify, virial_derivative_mismatch, Controls, Direction, Evolver, Verdict};
use hartree::lab::Lab;
use hartree::linearized::{routes, SpectralData, SpectralOptions};
use hartree::special::{build_series, special_initial_data, start_time, FitOptions, SpecialData};
use hartree::{GridSpec, ModelParams, RadialField};

fn lab() -> &'static Lab {
    static L: OnceLock<Lab> = OnceLock::new();
    L.get_or_init(|| {
        let params = ModelParams::new(6, 4.0).unwrap();
        Lab::new(params, &GridSpec::preset(6).with_m(256), "spectral", None).unwrap()
    })
}

fn special(a: f64) -> (SpectralData, SpecialData) {
    let lab = lab();
    let sys = lab.system().unwrap();
    let h = lab.hartree().unwrap();
    let sd = routes().get("direct").unwrap().solve(&sys, &SpectralOptions::default()).unwrap();
    let series = build_series(&sys, &h, &sd, a, 3, &FitOptions::default()).unwrap();
    let data = special_initial_data(&series, &h, start_time(sd.e0, 0.05)).unwrap();
    (sd, data)
}

#[test]
fn groundstate_stays_put() {
    let h = lab().hartree().unwrap();
    let controls = Controls { duration: 0.5, ..Controls::default() };
    let ev = Evolver::new(&h, controls.clone()).unwrap();
    let traj = ev.evolve(&h.cache.groundstate_field(), 0.0, Direction::Forward).unwrap();
    let c = classify(&traj, &controls);
    assert_eq!(c.verdict, Verdict::ConvergeToW, "{}", c.reason);
    let worst = traj.rows.iter().map(|r| r.delta).fold(0.0, f64::max) / traj.kinetic_w;
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn subthreshold_multiple_of_groundstate_scatters() {
    let h = lab().hartree().unwrap();
    let controls = Controls { duration: 15.0, ..Controls::default() };
    let ev = Evolver::new(&h, controls.clone()).unwrap();
    let u0 = h.cache.groundstate_field().scale(0.9);
    let traj = ev.evolve(&u0, 0.0, Direction::Forward).unwrap();
    let c = classify(&traj, &controls);
    assert_eq!(c.verdict, Verdict::Scatter, "{}", c.reason);
    assert_eq!(c.side, -1);
    assert!(c.side_preserved);
}

#[test]
fn backward_run_undoes_forward_run() {
    let lab = lab();
    let h = lab.hartree().unwrap();
    let controls = Controls { duration: 0.2, stop_on_proxy: false, ..Controls::default() };
    let ev = Evolver::new(&h, controls).unwrap();
    let u0 = RadialField {
        re: lab.grid.sample(|r| 3.0 * (-(r / 2.0).powi(2)).exp()),
        im: lab.grid.sample(|r| r * (-(r / 3.0).powi(2)).exp()),
    };
    let fwd = ev.evolve(&u0, 0.0, Direction::Forward).unwrap();
    let back = ev.evolve(&fwd.last.u, fwd.last.t, Direction::Backward).unwrap();
    assert!(back.last.t.abs() < 1e-12, "{}", back.last.t);
    let err = lab.grid.l2_norm(&back.last.u.sub(&u0)) / lab.grid.l2_norm(&u0);
    assert!(err < 1e-7, "{err:e}");
}

#[test]
fn threshold_solution_converges_with_virial_identities() {
    let (sd, data) = special(1.0);
    let h = lab().hartree().unwrap();
    let controls = Controls { duration: 3.0, ..Controls::default() };
    let ev = Evolver::new(&h, controls.clone()).unwrap();
    let traj = ev.evolve(&data.u, data.t0, Direction::Forward).unwrap();
    let c = classify(&traj, &controls);
    assert_eq!(c.verdict, Verdict::ConvergeToW, "{}", c.reason);
    let rate = c.delta_rate.unwrap();
    assert!((rate / sd.e0 - 1.0).abs() < 0.1, "δ rate {rate} vs e0 {}", sd.e0);
    let arate = c.alpha_rate.unwrap();
    assert!((arate / rate - 1.0).abs() < 0.1, "α rate {arate} vs δ rate {rate}");
    assert!(c.energy_drift < 1e-6);

    // at E = E(W): d2V_main = 4(p-1)(‖∇W‖² - ‖∇u‖²)
    let g = traj.kinetic_w;
    let p = lab().params.p;
    for r in &traj.rows {
        let want = 4.0 * (p - 1.0) * (g - r.grad_norm_sq);
        assert!((r.d2v_main - want).abs() < 1e-8 * g, "t={} {} vs {}", r.t, r.d2v_main, want);
    }
    let fd = virial_derivative_mismatch(&traj.rows).unwrap();
    assert!(fd < 1e-4, "{fd:e}");
}

#[test]
fn upper_threshold_solution_leaves_backward_above_groundstate() {
    let (_, data) = special(1.0);
    let h = lab().hartree().unwrap();
    let controls = Controls { duration: 3.0, ..Controls::default() };
    let ev = Evolver::new(&h, controls.clone()).unwrap();
    let traj = ev.evolve(&data.u, data.t0, Direction::Backward).unwrap();
    let c = classify(&traj, &controls);
    assert_eq!(c.verdict, Verdict::BlowupProxy, "{}", c.reason);
    assert_eq!(c.side, 1);
    assert!(c.side_preserved);
    assert!(traj.rows.windows(2).all(|w| w[1].t < w[0].t));
}
