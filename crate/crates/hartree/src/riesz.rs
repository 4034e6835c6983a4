//! Riesz potential `I_λ * f` of radial functions as a dense nodal matrix.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::dense::{bandwidth, BandedCholesky};
use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::model::ModelParams;
use crate::quadrature::{gauss_jacobi, gauss_legendre, Rule};
use crate::registry::Registry;

/// A way of building K with `(I_λ * f)(r_i) ≈ Σ_j K_ij f(r_j)`.
pub trait KernelAssembly: Send + Sync {
    fn assemble(&self, grid: &RadialGrid, params: &ModelParams) -> Result<Array2<f64>>;
}

/// `(-Δ_h)^{-s}` from the eigen-decomposition of the discrete Laplacian.
pub struct SpectralAssembly;

/// `(-Δ_h)^{-s}` by sinc quadrature of the Balakrishnan integral, using
/// banded solves only.
pub struct ResolventAssembly {
    pub step: f64,
}

/// Direct quadrature of the angular mean of `c_λ|x-y|^{-λ}` with the
/// diagonal fixed by the exact potential of the ball.
pub struct NystromAssembly {
    pub points_per_panel: usize,
}

impl KernelAssembly for SpectralAssembly {
    fn assemble(&self, grid: &RadialGrid, params: &ModelParams) -> Result<Array2<f64>> {
        let s = params.riesz_order();
        Ok(grid.spectrum()?.function_matrix(|k| k.powf(-s)))
    }
}

impl KernelAssembly for ResolventAssembly {
    fn assemble(&self, grid: &RadialGrid, params: &ModelParams) -> Result<Array2<f64>> {
        let s = params.riesz_order();
        let whole = s.floor() as usize;
        let frac = s - s.floor();
        let stiff = grid.stiffness();
        let w = grid.weights();
        let band = bandwidth(stiff);
        let m = grid.len();
        // K-form of B^{-1}: S^{-1} W
        let inverse = BandedCholesky::new(stiff, band)?.solve_diagonal(w);
        let mut k = if frac < 1e-14 {
            Array2::<f64>::eye(m)
        } else {
            let (lo, hi) = spectral_bounds(stiff, w, band)?;
            let y0 = lo.ln() - 32.0 / (1.0 - frac);
            let y1 = hi.ln() + 32.0 / frac;
            let steps = ((y1 - y0) / self.step).ceil() as usize;
            let pref = (PI * frac).sin() / PI * self.step;
            let mut acc = Array2::<f64>::zeros((m, m));
            for q in 0..=steps {
                let y = y0 + q as f64 * self.step;
                let ey = y.exp();
                let shifted = stiff + &Array2::from_diag(&(w * ey));
                let sol = BandedCholesky::new(&shifted, band)?.solve_diagonal(w);
                acc.scaled_add(pref * ((1.0 - frac) * y).exp(), &sol);
            }
            acc
        };
        for _ in 0..whole {
            k = inverse.dot(&k);
        }
        Ok(k)
    }
}

/// Bounds on the spectrum of W^{-1}S: Gershgorin above, inverse iteration below.
fn spectral_bounds(stiff: &Array2<f64>, w: &Array1<f64>, band: usize) -> Result<(f64, f64)> {
    let m = w.len();
    let mut hi: f64 = 0.0;
    for i in 0..m {
        let row: f64 = (0..m).map(|j| stiff[[i, j]].abs() / (w[i] * w[j]).sqrt()).sum();
        hi = hi.max(row);
    }
    let chol = BandedCholesky::new(stiff, band)?;
    let mut v = Array1::<f64>::ones(m);
    let mut est = 0.0;
    for _ in 0..30 {
        let mut x = (&v * w).to_vec();
        chol.solve_in_place(&mut x);
        let x = Array1::from(x);
        let norm = (w * &x * &x).sum().sqrt();
        est = 1.0 / norm * (w * &v * &v).sum().sqrt();
        v = x / norm;
    }
    Ok((0.5 * est, hi))
}

impl NystromAssembly {
    /// Mean of |r e₁ - s ω|^{-λ} over the unit sphere ω ∈ S^{N-1}.
    fn angular_mean(&self, ctx: &AngularRules, r: f64, s: f64) -> f64 {
        let big = r.max(s);
        let rho = r.min(s) / big;
        let lam = ctx.lambda;
        let nu = ctx.nu;
        // 1 + ρ² - 2ρt = (1-ρ)² + 2ρu with u = 1 - t ∈ [0, 2]
        let gap = (1.0 - rho) * (1.0 - rho);
        let f = |u: f64| (gap + 2.0 * rho * u).powf(-lam / 2.0);
        let delta = gap / (2.0 * rho).max(1e-300);
        let mut total = 0.0;
        if delta >= 0.5 {
            for (t, wt) in ctx.full.nodes.iter().zip(&ctx.full.weights) {
                total += wt * f(1.0 - t);
            }
        } else {
            // geometric panels in u toward the near-singular endpoint u = 0
            let mut edges = vec![2.0];
            let mut u = 2.0;
            while u > delta {
                u *= 0.25;
                edges.push(u.max(delta));
            }
            edges.reverse();
            let u0 = edges[0];
            // [0, u0] with weight u^ν mapped from (1+x)^ν
            let c = (u0 / 2.0).powf(nu + 1.0);
            for (x, wx) in ctx.first.nodes.iter().zip(&ctx.first.weights) {
                let uu = u0 * (1.0 + x) / 2.0;
                total += c * wx * (2.0 - uu).powf(nu) * f(uu);
            }
            let last = edges.len() - 2;
            for pair in edges[..=last].windows(2) {
                let (xs, ws) = ctx.panel.affine(pair[0], pair[1]);
                for (uu, wu) in xs.iter().zip(&ws) {
                    total += wu * (uu * (2.0 - uu)).powf(nu) * f(*uu);
                }
            }
            // [u_a, 2] with weight (2-u)^ν mapped from (1-x)^ν
            let ua = edges[last];
            let c = ((2.0 - ua) / 2.0).powf(nu + 1.0);
            for (x, wx) in ctx.last.nodes.iter().zip(&ctx.last.weights) {
                let uu = ua + (2.0 - ua) * (1.0 + x) / 2.0;
                total += c * wx * uu.powf(nu) * f(uu);
            }
        }
        big.powf(-lam) * total / ctx.norm
    }
}

struct AngularRules {
    lambda: f64,
    nu: f64,
    norm: f64,
    full: Rule,
    first: Rule,
    last: Rule,
    panel: Rule,
}

/// (I_λ * 1_{|y|<R})(r) / c_λ for r ≤ R, via the cap fraction of spheres |y| = ρ inside the ball.
fn ball_potential(n: usize, lambda: f64, big_r: f64, r: f64, panel: &Rule) -> f64 {
    let nf = n as f64;
    let omega = crate::model::sphere_area(n);
    let a = (nf - 1.0) / 2.0;
    let inner = big_r - r;
    let mut total = inner.max(0.0).powf(nf - lambda) / (nf - lambda);
    let (lo, hi) = (inner.abs(), big_r + r);
    if r > 0.0 && hi > lo {
        let integrand = |rho: f64| {
            let t0 = ((rho * rho + r * r - big_r * big_r) / (2.0 * rho * r)).clamp(-1.0, 1.0);
            rho.powf(nf - 1.0 - lambda) * beta_reg(a, a, (1.0 - t0) / 2.0)
        };
        // grade toward both ends of [lo, hi], where the cap fraction has endpoint singularities
        let mid = 0.5 * (lo + hi);
        let mut edges = vec![lo, mid, hi];
        let half = 0.5 * (hi - lo);
        let mut d = half;
        for _ in 0..14 {
            d *= 0.2;
            edges.push(lo + d);
            edges.push(hi - d);
        }
        edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for pair in edges.windows(2) {
            let (xs, ws) = panel.affine(pair[0], pair[1]);
            for (x, wx) in xs.iter().zip(&ws) {
                total += wx * integrand(*x);
            }
        }
    }
    omega * total
}

impl KernelAssembly for NystromAssembly {
    fn assemble(&self, grid: &RadialGrid, params: &ModelParams) -> Result<Array2<f64>> {
        let n = params.n;
        let lambda = params.lambda;
        if lambda >= n as f64 - 1.0 {
            return Err(Error::Assembly(format!(
                "the angular mean is singular on the diagonal for lambda = {lambda} >= N-1 = {}; \
                 use a graded strategy (`spectral` or `resolvent`)",
                n - 1
            )));
        }
        let nu = (n as f64 - 3.0) / 2.0;
        let q = self.points_per_panel;
        let ctx = AngularRules {
            lambda,
            nu,
            norm: (2.0 * nu + 1.0) * std::f64::consts::LN_2 + ln_beta(nu + 1.0, nu + 1.0),
            full: gauss_jacobi(2 * q, nu, nu)?,
            first: gauss_jacobi(q, 0.0, nu)?,
            last: gauss_jacobi(q, nu, 0.0)?,
            panel: gauss_legendre(q)?,
        };
        let ctx = AngularRules { norm: ctx.norm.exp(), ..ctx };
        let r = grid.nodes();
        let w = grid.weights();
        let m = grid.len();
        let cl = params.riesz_constant();
        let r_max = grid.r_max();

        let threads = crate::thread_count().min(m).max(1);
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); m];
        std::thread::scope(|scope| {
            let chunks: Vec<_> = rows.chunks_mut(m.div_ceil(threads)).enumerate().collect();
            let chunk_len = m.div_ceil(threads);
            for (c, chunk) in chunks {
                let ctx = &ctx;
                scope.spawn(move || {
                    for (k, row) in chunk.iter_mut().enumerate() {
                        let i = c * chunk_len + k;
                        *row = (0..m)
                            .map(|j| if j == i { 0.0 } else { cl * self.angular_mean(ctx, r[i], r[j]) })
                            .collect();
                    }
                });
            }
        });
        let panel = gauss_legendre(q)?;
        let mut k = Array2::<f64>::zeros((m, m));
        for i in 0..m {
            let mut off = 0.0;
            for j in 0..m {
                if j != i {
                    k[[i, j]] = w[j] * rows[i][j];
                    off += k[[i, j]];
                }
            }
            k[[i, i]] = cl * ball_potential(n, lambda, r_max, r[i], &panel) - off;
        }
        Ok(k)
    }
}

pub fn strategies() -> Registry<dyn KernelAssembly> {
    let mut reg: Registry<dyn KernelAssembly> = Registry::new("kernel strategy");
    reg.register("spectral", Box::new(SpectralAssembly)).expect("fresh registry");
    reg.register("resolvent", Box::new(ResolventAssembly { step: 0.3 })).expect("fresh registry");
    reg.register("nystrom", Box::new(NystromAssembly { points_per_panel: 16 }))
        .expect("fresh registry");
    reg
}

#[derive(Clone, Debug)]
pub struct RieszKernel {
    pub lambda: f64,
    pub strategy: String,
    pub matrix: Array2<f64>,
}

impl RieszKernel {
    pub fn assemble(grid: &RadialGrid, params: &ModelParams, strategy: &str) -> Result<Self> {
        if grid.dim() != params.n {
            return Err(Error::Usage(format!(
                "grid is for N = {} but parameters have N = {}",
                grid.dim(),
                params.n
            )));
        }
        let matrix = strategies().get(strategy)?.assemble(grid, params)?;
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly(format!("{strategy} kernel has non-finite entries")));
        }
        Ok(RieszKernel { lambda: params.lambda, strategy: strategy.to_string(), matrix })
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn apply(&self, f: &Array1<f64>) -> Array1<f64> {
        self.matrix.dot(f)
    }

    pub fn convolve(&self, f: &RadialField) -> RadialField {
        RadialField { re: self.apply(&f.re), im: self.apply(&f.im) }
    }

    /// max |w_i K_ij - w_j K_ji| / max |w_i K_ij|
    pub fn weighted_asymmetry(&self, w: &Array1<f64>) -> f64 {
        let m = self.len();
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let a = w[i] * self.matrix[[i, j]];
                num = num.max((a - w[j] * self.matrix[[j, i]]).abs());
                den = den.max(a.abs());
            }
        }
        num / den
    }
}

/// Sup-norm relative error of K W^p against the closed form of I_λ * W^p.
pub fn closed_form_error(grid: &RadialGrid, params: &ModelParams, kernel: &RieszKernel) -> f64 {
    let wp = grid.sample(|r| params.groundstate(r).powf(params.p));
    let exact = grid.sample(|r| params.riesz_of_wp(r));
    let got = kernel.apply(&wp);
    let err = (&got - &exact).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    err / exact.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
