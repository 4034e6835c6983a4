//! Linearization around the ground state: `L₊`, `L₋`, the block operator
//! `𝓛(h₁,h₂) = (-L₋h₂, L₊h₁)`, the forms Φ and B, and the spectral facts
//! about them (kernel, eigenpair ±e₀, coercivity).

use ndarray::{s, Array1, Array2, Axis};
use ndarray_linalg::{Eig, Eigh, FactorizeInto, JobSvd, Solve, SVDDC, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dense::{null_space, symmetrize};
use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::model::ModelParams;
use crate::nonlinearity::PotentialCache;
use crate::registry::Registry;
use crate::riesz::RieszKernel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralOptions {
    /// Singular values below this count as kernel.
    pub tau_small: f64,
    /// Eigenvalues with |Im| <= imag_ratio |Re| count as real.
    pub imag_ratio: f64,
    /// |λ| below this is part of the zero cluster of 𝓛.
    pub zero_tol: f64,
    /// Real eigenvalues of 𝓛 with |Re| up to this are reported.
    pub search_window: f64,
    /// First L₋ eigenvalue cutoff of the P route; doubled until e₀ settles.
    pub kcut_start: f64,
    pub kcut_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            tau_small: 1e-6,
            imag_ratio: 1e-3,
            zero_tol: 1e-2,
            search_window: 1e3,
            kcut_start: 100.0,
            kcut_tol: 1e-11,
        }
    }
}

pub struct LinearizedSystem<'a> {
    pub grid: &'a RadialGrid,
    pub params: ModelParams,
    pub kernel: &'a RieszKernel,
    pub cache: PotentialCache,
    pub lplus: Array2<f64>,
    pub lminus: Array2<f64>,
    pub(crate) sqrt_w: Array1<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub route: String,
    pub e0: f64,
    #[serde(skip)]
    pub y1: Array1<f64>,
    #[serde(skip)]
    pub y2: Array1<f64>,
    /// ‖-L₋Y₂ - e₀Y₁‖ / ‖(Y₁,Y₂)‖ and ‖L₊Y₁ - e₀Y₂‖ / ‖(Y₁,Y₂)‖ in L².
    pub residuals: [f64; 2],
    /// Real eigenvalues of 𝓛 found in the search window (direct route only).
    pub real_spectrum: Vec<f64>,
}

impl SpectralData {
    pub fn plus(&self) -> RadialField {
        RadialField { re: self.y1.clone(), im: self.y2.clone() }
    }

    pub fn minus(&self) -> RadialField {
        self.plus().conj()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelCertificate {
    /// Smallest singular values of 𝓛 in ascending order.
    pub smallest: Vec<f64>,
    pub below_tau: usize,
    pub gap_ratio: f64,
    /// Largest principal angle between the near-null space and span{(0,W), (W̃,0)}.
    pub angle: f64,
    /// Count below τ after removing span{(0,W), (W̃,0)}.
    pub below_tau_deflated: usize,
}

#[derive(Clone, Debug)]
pub struct Coercivity {
    pub value: f64,
    pub real_block: f64,
    pub imag_block: f64,
    pub direction: RadialField,
}

pub enum Constraints<'s> {
    /// (h, W)_{Ḣ¹} = (h, iW)_{Ḣ¹} = (h, W̃)_{Ḣ¹} = 0
    Hperp,
    /// (h, iW)_{Ḣ¹} = (h, W̃)_{Ḣ¹} = B(𝒴₊, h) = B(𝒴₋, h) = 0
    Gperp(&'s SpectralData),
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

impl IdentityCheck {
    pub fn new(name: &str, value: f64, pass: bool) -> Self {
        IdentityCheck { name: name.to_string(), value, pass }
    }
}

fn scaled(a: &Array2<f64>, sw: &Array1<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= sw[i] / sw[j];
    }
    symmetrize(&out)
}

impl<'a> LinearizedSystem<'a> {
    pub fn assemble(grid: &'a RadialGrid, kernel: &'a RieszKernel, params: &ModelParams) -> Result<Self> {
        grid.check_len(kernel.len())?;
        let cache = PotentialCache::new(grid, params, kernel);
        let p = params.p;
        let local = &cache.vw * &cache.wpm2;
        let mut lminus = grid.neg_laplacian_matrix();
        for i in 0..grid.len() {
            lminus[[i, i]] -= local[i];
        }
        let mut lplus = lminus.clone();
        for i in 0..grid.len() {
            lplus[[i, i]] -= (p - 2.0) * local[i];
        }
        let wk = &kernel.matrix * &cache.wpm1.view().insert_axis(Axis(0));
        let wk = &wk * &cache.wpm1.view().insert_axis(Axis(1));
        lplus.scaled_add(-p, &wk);
        let sqrt_w = grid.weights().mapv(f64::sqrt);
        Ok(LinearizedSystem { grid, params: *params, kernel, cache, lplus, lminus, sqrt_w })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// W^{1/2} L₊ W^{-1/2}, symmetric.
    pub fn lplus_sym(&self) -> Array2<f64> {
        scaled(&self.lplus, &self.sqrt_w)
    }

    pub fn lminus_sym(&self) -> Array2<f64> {
        scaled(&self.lminus, &self.sqrt_w)
    }

    /// 𝓛h = (-L₋h₂, L₊h₁)
    pub fn apply(&self, h: &RadialField) -> RadialField {
        RadialField { re: -self.lminus.dot(&h.im), im: self.lplus.dot(&h.re) }
    }

    pub fn phi(&self, h: &RadialField) -> f64 {
        self.bilinear(h, h)
    }

    /// B(g,h) = ½∫(L₊g₁)h₁ + ½∫(L₋g₂)h₂
    pub fn bilinear(&self, g: &RadialField, h: &RadialField) -> f64 {
        let w = self.grid.weights();
        0.5 * (w * &self.lplus.dot(&g.re) * &h.re).sum()
            + 0.5 * (w * &self.lminus.dot(&g.im) * &h.im).sum()
    }

    /// Relative L² residuals of L₋W and L₊W̃.
    pub fn kernel_residuals(&self) -> (f64, f64) {
        let g = self.grid;
        let c = &self.cache;
        let rm = g.l2_norm_real(&self.lminus.dot(&c.w)) / g.l2_norm_real(&g.neg_laplacian(&c.w));
        let rp = g.l2_norm_real(&self.lplus.dot(&c.w_gen))
            / g.l2_norm_real(&g.neg_laplacian(&c.w_gen));
        (rm, rp)
    }

    /// Ḣ¹-orthogonal projection onto H⊥.
    pub fn project_hperp(&self, h: &RadialField) -> RadialField {
        let g = self.grid;
        let w = &self.cache.w;
        let wt = &self.cache.w_gen;
        let gram = [
            [g.h1_inner_real(w, w), g.h1_inner_real(w, wt)],
            [g.h1_inner_real(wt, w), g.h1_inner_real(wt, wt)],
        ];
        let rhs = [g.h1_inner_real(w, &h.re), g.h1_inner_real(wt, &h.re)];
        let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
        let a = (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det;
        let b = (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det;
        let re = &h.re - &(w * a) - &(wt * b);
        let c = g.h1_inner_real(w, &h.im) / gram[0][0];
        let im = &h.im - &(w * c);
        RadialField { re, im }
    }

    /// Singular values of 𝓛 (in the L² scaling) and the match of its near-null space.
    pub fn kernel_certificate(&self, opts: &SpectralOptions) -> Result<KernelCertificate> {
        let m = self.len();
        let big = self.block_scaled();
        let (_, sv, vt) = big.svddc(JobSvd::All)?;
        let vt = vt.ok_or_else(|| Error::Linalg("SVD returned no right vectors".into()))?;
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[a].partial_cmp(&sv[b]).unwrap());
        let smallest: Vec<f64> = order.iter().take(6).map(|&i| sv[i]).collect();
        let below_tau = sv.iter().filter(|&&v| v < opts.tau_small).count();
        let gap_ratio = smallest[2] / smallest[1].max(f64::MIN_POSITIVE);

        // expected null directions in scaled coordinates
        let mut expect = Array2::<f64>::zeros((2 * m, 2));
        let a = &self.cache.w_gen * &self.sqrt_w;
        let b = &self.cache.w * &self.sqrt_w;
        expect.slice_mut(s![..m, 0]).assign(&(&a / a.dot(&a).sqrt()));
        expect.slice_mut(s![m.., 1]).assign(&(&b / b.dot(&b).sqrt()));
        let mut found = Array2::<f64>::zeros((2 * m, 2));
        for (k, &i) in order.iter().take(2).enumerate() {
            found.column_mut(k).assign(&vt.row(i));
        }
        let overlap = expect.t().dot(&found);
        let (_, cosines, _) = overlap.svddc(JobSvd::None)?;
        let min_cos = cosines.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
        let angle = min_cos.acos();

        // deflate: restrict 𝓛 to the orthogonal complement of the expected directions
        let z = null_space(&expect.t().to_owned())?;
        let restricted = big.dot(&z);
        let (_, sv2, _) = restricted.svddc(JobSvd::None)?;
        let below_tau_deflated = sv2.iter().filter(|&&v| v < opts.tau_small).count();
        Ok(KernelCertificate { smallest, below_tau, gap_ratio, angle, below_tau_deflated })
    }

    /// [[0, -L₋], [L₊, 0]] in the symmetric L² scaling.
    pub(crate) fn block_scaled(&self) -> Array2<f64> {
        let m = self.len();
        let mut big = Array2::<f64>::zeros((2 * m, 2 * m));
        big.slice_mut(s![..m, m..]).assign(&(-self.lminus_sym()));
        big.slice_mut(s![m.., ..m]).assign(&self.lplus_sym());
        big
    }

    /// Fix scale (‖𝒴₊‖_{Ḣ¹} = 1) and sign (∫∇W·∇Y₁ > 0), then measure residuals.
    fn finish(&self, route: &str, e0: f64, y1: Array1<f64>, y2: Array1<f64>, real_spectrum: Vec<f64>) -> SpectralData {
        let g = self.grid;
        let norm = (g.h1_inner_real(&y1, &y1) + g.h1_inner_real(&y2, &y2)).sqrt();
        let sign = if g.h1_inner_real(&self.cache.w, &y1) < 0.0 { -1.0 } else { 1.0 };
        let y1 = y1 * (sign / norm);
        let y2 = y2 * (sign / norm);
        let size = (g.l2_norm_real(&y1).powi(2) + g.l2_norm_real(&y2).powi(2)).sqrt();
        let r1 = -self.lminus.dot(&y2) - &(&y1 * e0);
        let r2 = self.lplus.dot(&y1) - &(&y2 * e0);
        let residuals = [g.l2_norm_real(&r1) / size, g.l2_norm_real(&r2) / size];
        SpectralData { route: route.to_string(), e0, y1, y2, residuals, real_spectrum }
    }

    /// Smallest value of Φ(h)/‖h‖²_{Ḣ¹} under the given orthogonality constraints.
    pub fn coercivity(&self, constraints: Constraints<'_>) -> Result<Coercivity> {
        let spec = self.grid.spectrum()?;
        let q = &spec.vectors;
        let kappa = &spec.values;
        let rs = kappa.mapv(|k| 1.0 / k.sqrt());
        let sw = &self.sqrt_w;
        let coords_h1 = |f: &Array1<f64>| q.t().dot(&(f * sw)) * &kappa.mapv(f64::sqrt);
        let coords_l2 = |f: &Array1<f64>| q.t().dot(&(f * sw)) * &rs;
        let c = &self.cache;
        let (re_rows, im_rows) = match constraints {
            Constraints::Hperp => (vec![coords_h1(&c.w), coords_h1(&c.w_gen)], vec![coords_h1(&c.w)]),
            Constraints::Gperp(sd) => (
                vec![coords_h1(&c.w_gen), coords_l2(&self.lplus.dot(&sd.y1))],
                vec![coords_h1(&c.w), coords_l2(&self.lminus.dot(&sd.y2))],
            ),
        };
        let block = |lsym: Array2<f64>, rows: Vec<Array1<f64>>| -> Result<(f64, Array1<f64>)> {
            let x = q.t().dot(&lsym).dot(q);
            let mut t = x;
            for ((i, j), v) in t.indexed_iter_mut() {
                *v *= 0.5 * rs[i] * rs[j];
            }
            let mut cm = Array2::<f64>::zeros((rows.len(), kappa.len()));
            for (k, r) in rows.iter().enumerate() {
                cm.row_mut(k).assign(&(r / r.dot(r).sqrt()));
            }
            let z = null_space(&cm)?;
            let reduced = symmetrize(&z.t().dot(&t).dot(&z));
            let (vals, vecs) = reduced.eigh(UPLO::Lower)?;
            let zc = z.dot(&vecs.column(0));
            let h = q.dot(&(&zc * &rs)) / sw;
            Ok((vals[0], h))
        };
        let (cre, hre) = block(self.lplus_sym(), re_rows)?;
        let (cim, him) = block(self.lminus_sym(), im_rows)?;
        let direction = if cre <= cim {
            RadialField::real(hre)
        } else {
            RadialField::imag(him)
        };
        let value = cre.min(cim);
        if value <= 0.0 {
            return Err(Error::Spectral(format!(
                "Φ is not coercive on the constrained subspace (value {value:e}, {} part)",
                if cre <= cim { "real" } else { "imaginary" }
            )));
        }
        Ok(Coercivity { value, real_block: cre, imag_block: cim, direction })
    }

    /// I(u) = ‖∇u‖^{2p}/‖∇W‖^{2p} - D(u)/D(W) with D(u) = ∫(I_λ*|u|^p)|u|^p.
    pub fn sharp_ratio_deficit(&self, u: &RadialField) -> f64 {
        let g = self.grid;
        let p = self.params.p;
        let w = self.cache.groundstate_field();
        let d = |f: &RadialField| {
            let fp = crate::nonlinearity::abs_pow(&f.modulus(), p);
            g.integrate(&(self.kernel.apply(&fp) * &fp))
        };
        (g.h1_norm_sq(u) / g.h1_norm_sq(&w)).powf(p) - d(u) / d(&w)
    }

    /// α² coefficient of I(W+αh) from a least-squares quadratic fit on the given α.
    pub fn sharp_ratio_curvature(&self, h: &RadialField, alphas: &[f64]) -> Result<f64> {
        let w = self.cache.groundstate_field();
        let n = alphas.len();
        let mut a = Array2::<f64>::zeros((n, 3));
        let mut b = Array1::<f64>::zeros(n);
        for (k, &al) in alphas.iter().enumerate() {
            a[[k, 0]] = 1.0;
            a[[k, 1]] = al;
            a[[k, 2]] = al * al;
            b[k] = self.sharp_ratio_deficit(&w.axpy(al, h));
        }
        let ata = a.t().dot(&a);
        let atb = a.t().dot(&b);
        Ok(ata.solve(&atb)?[2])
    }
}

/// A way of computing (e₀, 𝒴₊).
pub trait EigenRoute: Send + Sync {
    fn solve(&self, sys: &LinearizedSystem<'_>, opts: &SpectralOptions) -> Result<SpectralData>;
}

/// Nonsymmetric eigensolve of the 2M block operator.
pub struct DirectRoute;

/// Most negative eigenvalue of P = L₋^{1/2} L₊ L₋^{1/2} on low L₋ modes.
pub struct ViaPRoute;

impl EigenRoute for DirectRoute {
    fn solve(&self, sys: &LinearizedSystem<'_>, opts: &SpectralOptions) -> Result<SpectralData> {
        let m = sys.len();
        let big = sys.block_scaled();
        let (vals, vecs) = big.eig()?;
        let mut real_spectrum = Vec::new();
        let mut candidates: Vec<(usize, f64)> = Vec::new();
        let mut near: Vec<Complex64> = Vec::new();
        for (i, v) in vals.iter().enumerate() {
            let is_real = v.im.abs() <= opts.imag_ratio * v.re.abs();
            if v.norm() < opts.zero_tol {
                // the generalized kernel and the bottom of the continuous spectrum
                if !real_spectrum.contains(&0.0) {
                    real_spectrum.push(0.0);
                }
            } else if is_real && v.re.abs() <= opts.search_window {
                real_spectrum.push(v.re);
                if v.re > 0.0 {
                    candidates.push((i, v.im.abs() / v.re.abs()));
                }
            } else if v.re > 0.0 {
                near.push(*v);
            }
        }
        real_spectrum.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let Some(&(idx, _)) = candidates.iter().min_by(|a, b| a.1.partial_cmp(&b.1).unwrap()) else {
            near.sort_by(|a, b| (a.im.abs() / a.re).partial_cmp(&(b.im.abs() / b.re)).unwrap());
            let show: Vec<String> = near.iter().take(4).map(|z| format!("{z:.6e}")).collect();
            return Err(Error::Spectral(format!(
                "no real positive eigenvalue of the linearized operator; nearest candidates: {}",
                show.join(", ")
            )));
        };
        let e0 = vals[idx].re;
        let col = vecs.column(idx);
        let pivot = col.iter().cloned().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
        let phase = pivot.conj() / pivot.norm();
        let mut v: Array1<f64> = col.mapv(|z| (z * phase).re);
        // inverse iteration polish
        let mut shifted = big.clone();
        for i in 0..2 * m {
            shifted[[i, i]] -= e0;
        }
        let lu = shifted.factorize_into()?;
        for _ in 0..2 {
            let x = lu.solve(&v)?;
            let n = x.dot(&x).sqrt();
            v = x / n;
        }
        let y1 = v.slice(s![..m]).to_owned() / &sys.sqrt_w;
        let y2 = v.slice(s![m..]).to_owned() / &sys.sqrt_w;
        Ok(sys.finish("direct", e0, y1, y2, real_spectrum))
    }
}

impl EigenRoute for ViaPRoute {
    fn solve(&self, sys: &LinearizedSystem<'_>, opts: &SpectralOptions) -> Result<SpectralData> {
        let lm = sys.lminus_sym();
        let lp = sys.lplus_sym();
        let (k, q) = lm.eigh(UPLO::Lower)?;
        let scale = k.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let wv = &sys.cache.w * &sys.sqrt_w;
        let wv = &wv / wv.dot(&wv).sqrt();
        let overlaps = q.t().dot(&wv);
        let kernel_idx = (0..k.len())
            .max_by(|&a, &b| overlaps[a].abs().partial_cmp(&overlaps[b].abs()).unwrap())
            .unwrap();
        for (i, &v) in k.iter().enumerate() {
            if i != kernel_idx && v < -1e-10 * scale {
                return Err(Error::Spectral(format!(
                    "L₋ is not positive off its kernel (eigenvalue {v:e})"
                )));
            }
        }
        let mut kcut = opts.kcut_start;
        let mut prev: Option<f64> = None;
        loop {
            let idx: Vec<usize> = (0..k.len())
                .filter(|&i| i != kernel_idx && k[i] <= kcut && k[i] > 1e-12 * scale)
                .collect();
            let n = idx.len();
            let mut qs = Array2::<f64>::zeros((k.len(), n));
            let mut sk = Array1::<f64>::zeros(n);
            for (c, &i) in idx.iter().enumerate() {
                qs.column_mut(c).assign(&q.column(i));
                sk[c] = k[i].sqrt();
            }
            let r = &qs * &sk.view().insert_axis(Axis(0));
            let pmat = symmetrize(&r.t().dot(&lp).dot(&r));
            let (pv, pvec) = pmat.eigh(UPLO::Lower)?;
            if pv[0] >= 0.0 {
                return Err(Error::Spectral(format!(
                    "P has no negative eigenvalue (lowest {:e}); discretization fault",
                    pv[0]
                )));
            }
            let e0 = (-pv[0]).sqrt();
            let settled = prev.is_some_and(|p| ((e0 - p) / e0).abs() < opts.kcut_tol);
            if settled || n == k.len() - 1 {
                // the truncated eigenvector leaks into the discarded modes; polish it
                // by inverse iteration on the coupled system at the shift e0
                let m = k.len();
                let mut a = sys.block_scaled();
                for i in 0..2 * m {
                    a[[i, i]] -= e0;
                }
                let lu = a.factorize_into()?;
                let y1s = r.dot(&pvec.column(0));
                let mut v = ndarray::concatenate![Axis(0), y1s, lp.dot(&y1s) / e0];
                for _ in 0..2 {
                    let x = lu.solve(&v)?;
                    v = &x / x.dot(&x).sqrt();
                }
                let y1 = v.slice(s![..m]).to_owned() / &sys.sqrt_w;
                let y2 = v.slice(s![m..]).to_owned() / &sys.sqrt_w;
                return Ok(sys.finish("via-p", e0, y1, y2, Vec::new()));
            }
            prev = Some(e0);
            kcut *= 2.0;
        }
    }
}

pub fn routes() -> Registry<dyn EigenRoute> {
    let mut reg: Registry<dyn EigenRoute> = Registry::new("eigen route");
    reg.register("direct", Box::new(DirectRoute)).expect("fresh registry");
    reg.register("via-p", Box::new(ViaPRoute)).expect("fresh registry");
    reg
}

/// The identity battery for Φ, B and the eigenfunctions.
pub fn identity_checks(sys: &LinearizedSystem<'_>, sd: &SpectralData, seed: u64) -> Vec<IdentityCheck> {
    use rand::{Rng, SeedableRng};
    let g = sys.grid;
    let w = sys.cache.groundstate_field();
    let wt = RadialField::real(sys.cache.w_gen.clone());
    let kin = g.h1_norm_sq(&w);
    let mut out = Vec::new();

    let phi_w = sys.phi(&w);
    let target = -(sys.params.p - 1.0) * kin;
    let rel = ((phi_w - target) / target).abs();
    out.push(IdentityCheck::new("phi_W_equals_minus_(p-1)_kinetic", rel, rel < 1e-8));
    let unit = |f: &RadialField| f.scale(1.0 / g.h1_norm_sq(f).sqrt());
    for (name, f) in [
        ("phi_iW", w.times_i()),
        ("phi_W_generator", wt.clone()),
        ("phi_Y_plus", sd.plus()),
        ("phi_Y_minus", sd.minus()),
    ] {
        let v = sys.phi(&unit(&f)).abs();
        out.push(IdentityCheck::new(name, v, v < 1e-6));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let random_field = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut re = Array1::<f64>::zeros(g.len());
        let mut im = Array1::<f64>::zeros(g.len());
        for _ in 0..4 {
            let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let width: f64 = rng.random_range(0.3..5.0);
            let prof = g.sample(|r| (-(r / width).powi(2)).exp());
            re.scaled_add(a, &prof);
            im.scaled_add(b, &prof);
        }
        RadialField { re, im }
    };
    for _ in 0..100 {
        let f = random_field(&mut rng);
        let h = random_field(&mut rng);
        let lhs = sys.bilinear(&sys.apply(&f), &h);
        let rhs = -sys.bilinear(&f, &sys.apply(&h));
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    out.push(IdentityCheck::new("B_antisymmetry_100_pairs", worst, worst < 1e-8));

    let f = random_field(&mut rng);
    let fscale = sys.phi(&f).abs().max(g.h1_norm_sq(&f));
    let b_iw = sys.bilinear(&w.times_i(), &f).abs() / fscale.sqrt() / kin.sqrt();
    out.push(IdentityCheck::new("B_iW_random", b_iw, b_iw < 1e-6));
    let b_wt = sys.bilinear(&wt, &f).abs() / fscale.sqrt() / g.h1_norm_sq(&wt).sqrt();
    out.push(IdentityCheck::new("B_W_generator_random", b_wt, b_wt < 1e-6));

    let b_pm = sys.bilinear(&sd.plus(), &sd.minus()).abs();
    out.push(IdentityCheck::new("B_Y_plus_Y_minus", b_pm, b_pm > 1e-3));
    let wy = g.h1_inner_real(&w.re, &sd.y1) / kin.sqrt();
    out.push(IdentityCheck::new("grad_W_dot_grad_Y1", wy, wy.abs() > 1e-3));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn fixtures(m: usize) -> (RadialGrid, ModelParams, RieszKernel) {
        let params = ModelParams::new(6, 4.0).unwrap();
        let grid = RadialGrid::new(&GridSpec::preset(6).with_m(m)).unwrap();
        let kernel = RieszKernel::assemble(&grid, &params, "spectral").unwrap();
        (grid, params, kernel)
    }

    #[test]
    fn kernel_directions() {
        let (g, p, k) = fixtures(256);
        let sys = LinearizedSystem::assemble(&g, &k, &p).unwrap();
        let (rm, rp) = sys.kernel_residuals();
        assert!(rm < 1e-7 && rp < 1e-7, "{rm} {rp}");
        // L₊W = 2(p-1)ΔW
        let lw = sys.lplus.dot(&sys.cache.w);
        let target = g.neg_laplacian(&sys.cache.w) * (-2.0 * (p.p - 1.0));
        assert!(g.l2_norm_real(&(&lw - &target)) < 1e-7 * g.l2_norm_real(&target));
    }

    #[test]
    fn hperp_projection() {
        let (g, p, k) = fixtures(128);
        let sys = LinearizedSystem::assemble(&g, &k, &p).unwrap();
        let f = RadialField {
            re: g.sample(|r| (1.0 + r * r).powi(-3) * (2.0 - r)),
            im: g.sample(|r| (-r * r).exp()),
        };
        let h = sys.project_hperp(&f);
        let hh = sys.project_hperp(&h);
        assert!(hh.sub(&h).max_abs() < 1e-12 * h.max_abs());
        let w = sys.cache.groundstate_field();
        assert!(sys.project_hperp(&w).max_abs() < 1e-12 * w.max_abs());
        assert!(sys.project_hperp(&w.times_i()).max_abs() < 1e-12 * w.max_abs());
        let bw = sys.bilinear(&w, &h).abs() / (g.h1_norm_sq(&w) * g.h1_norm_sq(&h)).sqrt();
        assert!(bw < 1e-8);
    }

    #[test]
    fn routes_agree() {
        let (g, p, k) = fixtures(256);
        let sys = LinearizedSystem::assemble(&g, &k, &p).unwrap();
        let opts = SpectralOptions::default();
        let a = DirectRoute.solve(&sys, &opts).unwrap();
        let b = ViaPRoute.solve(&sys, &opts).unwrap();
        assert!(((a.e0 - b.e0) / a.e0).abs() < 1e-6, "{} {}", a.e0, b.e0);
        assert!(a.residuals.iter().chain(&b.residuals).all(|&r| r < 1e-6));
        assert!(g.h1_inner_real(&sys.cache.w, &a.y1) > 0.0);
        let close = a.plus().sub(&b.plus());
        assert!(g.h1_norm_sq(&close).sqrt() < 1e-5);
    }
}
