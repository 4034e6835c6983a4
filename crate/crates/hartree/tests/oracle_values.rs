//! Grid quantities against values frozen from the mpmath oracle in tools/oracles.py.

use hartree::riesz::RieszKernel;
use hartree::{GridSpec, ModelParams, RadialGrid};

const KINETIC: [(usize, f64, f64); 5] = [
    (6, 4.0, 7143.84614714107856842974299146),
    (5, 4.0, 872.051531633432442435271361262),
    (3, 2.0, 13.4506960502446425135529003626),
    (4, 2.0, 105.275780278286491934234570665),
    (7, 3.0, 51830.5942482556267189698229079),
];

const BETA: [(usize, f64, f64); 5] = [
    (6, 4.0, 24.0),
    (5, 4.0, 7.74596669241483377035853079956),
    (3, 2.0, 1.3480061545972776673742363139),
    (4, 2.0, 2.82842712474619009760337744842),
    (7, 3.0, 76.4055556970447225057524360344),
];

fn grid(n: usize, m: usize) -> RadialGrid {
    RadialGrid::new(&GridSpec::preset(n).with_m(m)).unwrap()
}

#[test]
fn kinetic_energy_of_groundstate_by_quadrature() {
    for (n, l, want) in KINETIC {
        let p = ModelParams::new(n, l).unwrap();
        let g = grid(n, 512);
        let w = hartree::RadialField::real(g.sample(|r| p.groundstate(r)));
        let got = g.h1_norm_sq(&w);
        assert!((got / want - 1.0).abs() < 1e-6, "({n},{l}): {got} vs {want}");
    }
}

#[test]
fn groundstate_amplitudes() {
    for (n, l, want) in BETA {
        let p = ModelParams::new(n, l).unwrap();
        assert!((p.beta / want - 1.0).abs() < 1e-14, "({n},{l}): {} vs {want}", p.beta);
    }
}

#[test]
fn radial_integral_over_r6() {
    let g = grid(6, 256);
    let got = g.integrate(&g.sample(|r| (1.0 + r * r).powi(-6)));
    let want = 0.516771278004997002924605251118;
    assert!((got / want - 1.0).abs() < 1e-10, "{got}");
}

#[test]
fn riesz_potential_of_groundstate_power_at_points() {
    for (n, l, pts) in [(5usize, 4.0, vec![(0.5, 9.6), (2.0, 0.6)]), (6, 4.0, vec![(1.0, 6.0)])] {
        let p = ModelParams::new(n, l).unwrap();
        let g = grid(n, 512);
        let k = RieszKernel::assemble(&g, &p, "spectral").unwrap();
        let f = k.apply(&g.sample(|r| p.groundstate(r).powf(p.p)));
        for (r, want) in pts {
            let got = g.interpolate(&f, r);
            assert!((got / want - 1.0).abs() < 1e-8, "({n},{l}) r={r}: {got} vs {want}");
        }
    }
}
