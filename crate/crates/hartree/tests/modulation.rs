use hartree::lab::{hperp_probe, Lab};
use hartree::modulation::{energy_matched_perturbation, ModulationOptions, Modulator};
use hartree::{GridSpec, ModelParams};

fn lab() -> Lab {
    let params = ModelParams::new(6, 4.0).unwrap();
    Lab::new(params, &GridSpec::preset(6).with_m(256), "spectral", None).unwrap()
}

#[test]
fn groundstate_decomposes_trivially() {
    let lab = lab();
    let h = lab.hartree().unwrap();
    let md = Modulator::new(&h, ModulationOptions::default());
    let w = h.cache.groundstate_field();
    let p = md.decompose(&w, None).unwrap();
    let r = md.alpha_delta_report(&p, &w);
    assert!(r.alpha.abs() < 1e-12 && r.delta_rel < 1e-12 && r.h_norm < 1e-12, "{r:?}");
}

#[test]
fn small_hperp_perturbation_is_second_order_in_parameters() {
    let lab = lab();
    let h = lab.hartree().unwrap();
    let sys = lab.system().unwrap();
    let md = Modulator::new(&h, ModulationOptions::default());
    let g = hperp_probe(&sys);
    let w = h.cache.groundstate_field();
    let wn = md.kinetic().sqrt();
    let eps = 1e-3;
    let p = md.decompose(&w.axpy(eps, &g), None).unwrap();
    let drift = p.theta.abs() + (p.mu - 1.0).abs() + p.alpha.abs();
    assert!(drift < 10.0 * eps * eps, "{drift:e}");
    let dev = lab.grid.h1_norm_sq(&p.h.sub(&g.scale(eps))).sqrt() / wn;
    assert!(dev < 10.0 * eps * eps, "{dev:e}");
    assert!(p.orthogonality < 1e-10);
}

#[test]
fn alpha_and_delta_are_comparable_at_threshold_energy() {
    let lab = lab();
    let h = lab.hartree().unwrap();
    let sys = lab.system().unwrap();
    let md = Modulator::new(&h, ModulationOptions::default());
    let g = hperp_probe(&sys);
    let ew = h.energy(&h.cache.groundstate_field());
    for eps in [1e-2, 1e-3, 1e-4] {
        for sign in [1.0, -1.0] {
            let (u, _) = energy_matched_perturbation(&h, &g, eps, sign).unwrap();
            assert!(((h.energy(&u) - ew) / ew).abs() < 1e-12);
            let p = md.decompose(&u, None).unwrap();
            assert!(p.orthogonality < 1e-10);
            let r = md.alpha_delta_report(&p, &u);
            assert!((1.0 / 20.0..=20.0).contains(&r.ratio), "eps {eps} sign {sign}: {r:?}");
            assert_eq!(p.alpha.signum(), sign);
        }
    }
}
