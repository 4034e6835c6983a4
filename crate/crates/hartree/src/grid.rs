//! Spectral-element radial grid on (0, r_max] with a harmonic far field.
//!
//! Elements are Legendre–Gauss–Lobatto of degree `P`, except the axis element
//! `[0, b_1]`, whose unknowns are polynomials in `r²` on Gauss–Radau–Jacobi
//! nodes so that smoothness at the origin is built in. Past `r_max` a field is
//! continued by the decaying harmonic `u(r_max)(r_max/r)^{N-2}`; its Dirichlet
//! energy is the Robin term added to the last diagonal entry of the stiffness.

use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::model::sphere_area;
use crate::quadrature::{
    barycentric_weights, differentiation_matrix, gauss_legendre, gauss_lobatto, interpolate,
    lagrange_basis, lagrange_basis_derivative, radau_jacobi,
};
use crate::registry::Registry;

/// Placement of element ends `0 = b_0 < b_1 < … < b_E = r_max`.
pub trait ElementLayout: Send + Sync {
    fn breakpoints(&self, elements: usize, r_max: f64, scale: f64) -> Result<Vec<f64>>;
}

/// `b_e = r_max sinh(κe/E)/sinh κ` with slope `scale` at the origin.
pub struct SinhLayout;

/// First element ends at `scale`, then a constant ratio out to `r_max`.
pub struct GeometricLayout;

impl ElementLayout for SinhLayout {
    fn breakpoints(&self, elements: usize, r_max: f64, scale: f64) -> Result<Vec<f64>> {
        if !(scale > 0.0 && scale < r_max) {
            return Err(Error::Config(format!("sinh layout needs 0 < scale < r_max, got {scale}")));
        }
        let target = scale / r_max;
        let f = |k: f64| k / k.sinh() - target;
        let (mut lo, mut hi) = (1e-8, 700.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let kappa = 0.5 * (lo + hi);
        let ef = elements as f64;
        let mut b: Vec<f64> =
            (0..=elements).map(|e| r_max * (kappa * e as f64 / ef).sinh() / kappa.sinh()).collect();
        b[elements] = r_max;
        Ok(b)
    }
}

impl ElementLayout for GeometricLayout {
    fn breakpoints(&self, elements: usize, r_max: f64, scale: f64) -> Result<Vec<f64>> {
        if !(scale > 0.0 && scale < r_max) {
            return Err(Error::Config(format!(
                "geometric layout needs 0 < scale < r_max, got {scale}"
            )));
        }
        let mut b = vec![0.0];
        if elements == 1 {
            b.push(r_max);
            return Ok(b);
        }
        let q = (r_max / scale).powf(1.0 / (elements as f64 - 1.0));
        for e in 0..elements {
            b.push(scale * q.powi(e as i32));
        }
        b[elements] = r_max;
        Ok(b)
    }
}

pub fn layouts() -> Registry<dyn ElementLayout> {
    let mut reg: Registry<dyn ElementLayout> = Registry::new("element layout");
    reg.register("sinh", Box::new(SinhLayout)).expect("fresh registry");
    reg.register("geometric", Box::new(GeometricLayout)).expect("fresh registry");
    reg
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Number of unknowns.
    pub m: usize,
    pub r_max: f64,
    pub layout: String,
    /// Polynomial degree per element; 0 picks 32, or M/2 for small M.
    pub degree: usize,
    /// Layout length scale: slope at the origin (sinh) or first element end (geometric).
    pub scale: f64,
}

impl GridSpec {
    /// Baseline resolution for dimension `dim`; r_max grows as the tail of W gets heavier.
    pub fn preset(dim: usize) -> Self {
        let r_max = match dim {
            3 => 2.0e4,
            4 => 2.0e3,
            5 => 500.0,
            _ => 200.0,
        };
        GridSpec { dim, m: 512, r_max, layout: "sinh".into(), degree: 0, scale: 8.0 }
    }

    pub fn with_m(&self, m: usize) -> Self {
        GridSpec { m, ..self.clone() }
    }

    pub fn resolved_degree(&self) -> usize {
        if self.degree > 0 {
            self.degree
        } else if self.m >= 64 {
            32
        } else {
            (self.m / 2).max(1)
        }
    }

    pub fn elements(&self) -> usize {
        self.m / self.resolved_degree()
    }
}

/// Eigen-decomposition of `B = W^{-1/2} S W^{-1/2}`, the discrete `-Δ` in the
/// weighted inner product. Columns of `vectors` are orthonormal.
#[derive(Clone, Debug)]
pub struct LaplacianSpectrum {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
    pub sqrt_w: Array1<f64>,
}

impl LaplacianSpectrum {
    pub fn to_modes(&self, f: &Array1<f64>) -> Array1<f64> {
        self.vectors.t().dot(&(f * &self.sqrt_w))
    }

    pub fn from_modes(&self, c: &Array1<f64>) -> Array1<f64> {
        self.vectors.dot(c) / &self.sqrt_w
    }

    /// Nodal matrix of g(-Δ_h).
    pub fn function_matrix(&self, g: impl Fn(f64) -> f64) -> Array2<f64> {
        let gv = self.values.mapv(g);
        let scaled = &self.vectors * &gv;
        let mut out = scaled.dot(&self.vectors.t());
        let m = out.nrows();
        for i in 0..m {
            for j in 0..m {
                out[[i, j]] *= self.sqrt_w[j] / self.sqrt_w[i];
            }
        }
        out
    }
}

/// Gauss points on [0, upto] split at element breaks and extra cuts, with
/// interpolation rows so that piecewise-smooth integrands integrate accurately.
#[derive(Clone, Debug)]
pub struct Sampler {
    pub points: Array1<f64>,
    /// Includes ω r^{N-1}.
    pub weights: Array1<f64>,
    rows: Vec<SampleRow>,
}

#[derive(Clone, Debug)]
struct SampleRow {
    first: usize,
    value: Vec<f64>,
    slope: Vec<f64>,
}

impl Sampler {
    pub fn values(&self, f: &Array1<f64>) -> Array1<f64> {
        self.rows.iter().map(|row| row.value.iter().enumerate().map(|(k, c)| c * f[row.first + k]).sum()).collect()
    }

    pub fn derivatives(&self, f: &Array1<f64>) -> Array1<f64> {
        self.rows.iter().map(|row| row.slope.iter().enumerate().map(|(k, c)| c * f[row.first + k]).sum()).collect()
    }

    pub fn integrate(&self, g: &Array1<f64>) -> f64 {
        self.weights.dot(g)
    }
}

struct Element {
    /// Global index of the first local node.
    first: usize,
    lo: f64,
    hi: f64,
}

pub struct RadialGrid {
    spec: GridSpec,
    degree: usize,
    sphere: f64,
    breaks: Vec<f64>,
    r: Array1<f64>,
    w: Array1<f64>,
    stiffness: Array2<f64>,
    elements: Vec<Element>,
    axis_t: Vec<f64>,
    axis_bw: Vec<f64>,
    axis_dt: Array2<f64>,
    gll_x: Vec<f64>,
    gll_bw: Vec<f64>,
    gll_dx: Array2<f64>,
    qp_r: Array1<f64>,
    qp_w: Array1<f64>,
    spectrum: OnceLock<LaplacianSpectrum>,
}

impl std::fmt::Debug for RadialGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialGrid").field("spec", &self.spec).finish()
    }
}

impl RadialGrid {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        if spec.dim < 3 {
            return Err(Error::Config(format!("grid dimension must be >= 3, got {}", spec.dim)));
        }
        if spec.m < 16 {
            return Err(Error::Config(format!("M must be >= 16, got {}", spec.m)));
        }
        if !(spec.r_max > 10.0) {
            return Err(Error::Config(format!("r_max must exceed 10, got {}", spec.r_max)));
        }
        let degree = spec.resolved_degree();
        if degree < 2 || spec.m % degree != 0 {
            return Err(Error::Config(format!(
                "M = {} must be a multiple of the element degree {degree} (>= 2)",
                spec.m
            )));
        }
        let ne = spec.m / degree;
        if ne < 2 {
            return Err(Error::Config("at least two elements are required".into()));
        }
        let layout_reg = layouts();
        let breaks = layout_reg.get(&spec.layout)?.breakpoints(ne, spec.r_max, spec.scale)?;
        if breaks.windows(2).any(|b| !(b[1] > b[0])) {
            return Err(Error::Config("element layout produced non-increasing breakpoints".into()));
        }

        let n = spec.dim as f64;
        let omega = sphere_area(spec.dim);
        let m = spec.m;
        let p = degree;
        let mut r = Array1::<f64>::zeros(m);
        let mut w = Array1::<f64>::zeros(m);
        let mut s = Array2::<f64>::zeros((m, m));
        let mut qp_r = Vec::with_capacity(m + ne);
        let mut qp_w = Vec::with_capacity(m + ne);
        let mut elements = Vec::with_capacity(ne);

        // Axis element: u(r) = q(η), η = r², on Radau nodes in t with η = b1²(1+t)/2.
        let a = (n - 2.0) / 2.0;
        let radau = radau_jacobi(p, a)?;
        let b1 = breaks[1];
        let c = b1 * b1 / 2.0;
        let axis_dt = differentiation_matrix(&radau.nodes);
        let d_eta = &axis_dt / c;
        let mut meas = vec![0.0; p];
        for i in 0..p {
            let eta = c * (1.0 + radau.nodes[i]);
            // r^{N-1} dr = ½ η^a dη = ½ c^{a+1} (1+t)^a dt
            meas[i] = omega * 0.5 * c.powf(a + 1.0) * radau.weights[i];
            r[i] = eta.sqrt();
            w[i] = meas[i];
            qp_r.push(r[i]);
            qp_w.push(meas[i]);
        }
        for i in 0..p {
            for j in 0..p {
                let mut acc = 0.0;
                for q in 0..p {
                    let eta = r[q] * r[q];
                    acc += d_eta[[q, i]] * 4.0 * eta * meas[q] * d_eta[[q, j]];
                }
                s[[i, j]] += acc;
            }
        }
        elements.push(Element { first: 0, lo: 0.0, hi: b1 });

        let gll = gauss_lobatto(p + 1)?;
        let gll_dx = differentiation_matrix(&gll.nodes);
        for e in 1..ne {
            let (lo, hi) = (breaks[e], breaks[e + 1]);
            let h = hi - lo;
            let first = e * p - 1;
            let mut gw = vec![0.0; p + 1];
            for k in 0..=p {
                let rk = if k == p { hi } else { lo + (gll.nodes[k] + 1.0) * h / 2.0 };
                gw[k] = omega * gll.weights[k] * h / 2.0 * rk.powf(n - 1.0);
                r[first + k] = rk;
                w[first + k] += gw[k];
                qp_r.push(rk);
                qp_w.push(gw[k]);
            }
            let scale = 2.0 / h;
            for i in 0..=p {
                for j in 0..=p {
                    let mut acc = 0.0;
                    for q in 0..=p {
                        acc += gll_dx[[q, i]] * gw[q] * gll_dx[[q, j]];
                    }
                    s[[first + i, first + j]] += acc * scale * scale;
                }
            }
            elements.push(Element { first, lo, hi });
        }
        s[[m - 1, m - 1]] += omega * (n - 2.0) * spec.r_max.powf(n - 2.0);
        // exact symmetry
        for i in 0..m {
            for j in 0..i {
                let v = 0.5 * (s[[i, j]] + s[[j, i]]);
                s[[i, j]] = v;
                s[[j, i]] = v;
            }
        }

        Ok(RadialGrid {
            spec: GridSpec { degree, ..spec.clone() },
            degree,
            sphere: omega,
            breaks,
            r,
            w,
            stiffness: s,
            elements,
            axis_bw: barycentric_weights(&radau.nodes),
            axis_t: radau.nodes,
            axis_dt,
            gll_bw: barycentric_weights(&gll.nodes),
            gll_x: gll.nodes,
            gll_dx,
            qp_r: Array1::from(qp_r),
            qp_w: Array1::from(qp_w),
            spectrum: OnceLock::new(),
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn len(&self) -> usize {
        self.spec.m
    }

    pub fn is_empty(&self) -> bool {
        self.spec.m == 0
    }

    pub fn r_max(&self) -> f64 {
        self.spec.r_max
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn sphere_area(&self) -> f64 {
        self.sphere
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn nodes(&self) -> &Array1<f64> {
        &self.r
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.w
    }

    /// Ḣ¹ Gram matrix, including the exterior harmonic energy.
    pub fn stiffness(&self) -> &Array2<f64> {
        &self.stiffness
    }

    /// Coefficient c with ∫_{|x|>r_max} |∇u|² = c |u(r_max)|².
    pub fn exterior_coefficient(&self) -> f64 {
        let n = self.spec.dim as f64;
        self.sphere * (n - 2.0) * self.spec.r_max.powf(n - 2.0)
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Array1<f64> {
        self.r.mapv(f)
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.spec.m {
            return Err(Error::Usage(format!(
                "field has {len} samples but the grid has {}",
                self.spec.m
            )));
        }
        Ok(())
    }

    /// ∫_{ℝ^N} f over the grid quadrature.
    pub fn integrate(&self, f: &Array1<f64>) -> f64 {
        self.w.dot(f)
    }

    /// Real L² pairing Re∫ f ḡ.
    pub fn l2_inner(&self, f: &RadialField, g: &RadialField) -> f64 {
        self.w.dot(&(&f.re * &g.re + &f.im * &g.im))
    }

    pub fn l2_norm(&self, f: &RadialField) -> f64 {
        self.l2_inner(f, f).sqrt()
    }

    pub fn l2_norm_real(&self, f: &Array1<f64>) -> f64 {
        self.w.dot(&(f * f)).sqrt()
    }

    pub fn h1_inner_real(&self, f: &Array1<f64>, g: &Array1<f64>) -> f64 {
        f.dot(&self.stiffness.dot(g))
    }

    /// Re∫ ∇f·∇ḡ.
    pub fn h1_inner(&self, f: &RadialField, g: &RadialField) -> Result<f64> {
        self.check_len(f.len())?;
        self.check_len(g.len())?;
        Ok(self.h1_inner_real(&f.re, &g.re) + self.h1_inner_real(&f.im, &g.im))
    }

    pub fn h1_norm_sq(&self, f: &RadialField) -> f64 {
        self.h1_inner_real(&f.re, &f.re) + self.h1_inner_real(&f.im, &f.im)
    }

    /// Discrete -Δ f = W^{-1} S f.
    pub fn neg_laplacian(&self, f: &Array1<f64>) -> Array1<f64> {
        self.stiffness.dot(f) / &self.w
    }

    pub fn neg_laplacian_field(&self, f: &RadialField) -> RadialField {
        RadialField { re: self.neg_laplacian(&f.re), im: self.neg_laplacian(&f.im) }
    }

    /// Nodal matrix of -Δ_h.
    pub fn neg_laplacian_matrix(&self) -> Array2<f64> {
        &self.stiffness / &self.w.view().insert_axis(ndarray::Axis(1))
    }

    /// Element-local quadrature points (shared nodes appear once per element).
    pub fn qp_nodes(&self) -> &Array1<f64> {
        &self.qp_r
    }

    /// Weights of the element-local quadrature, including ω r^{N-1}.
    pub fn qp_weights(&self) -> &Array1<f64> {
        &self.qp_w
    }

    /// Element-local values of a nodal field at the quadrature points.
    pub fn values_at_qp(&self, f: &Array1<f64>) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.qp_r.len());
        for (e, el) in self.elements.iter().enumerate() {
            let n = if e == 0 { self.degree } else { self.degree + 1 };
            out.extend((0..n).map(|k| f[el.first + k]));
        }
        Array1::from(out)
    }

    /// Radial derivative u' at the quadrature points, element by element.
    pub fn derivative_at_qp(&self, f: &Array1<f64>) -> Array1<f64> {
        let p = self.degree;
        let mut out = Vec::with_capacity(self.qp_r.len());
        let b1 = self.breaks[1];
        let c = b1 * b1 / 2.0;
        // u' = 2 r dq/dη, dq/dη = (1/c) dq/dt
        for i in 0..p {
            let mut acc = 0.0;
            for j in 0..p {
                acc += self.axis_dt[[i, j]] * f[j];
            }
            out.push(2.0 * self.r[i] * acc / c);
        }
        for el in &self.elements[1..] {
            let sc = 2.0 / (el.hi - el.lo);
            for i in 0..=p {
                let mut acc = 0.0;
                for j in 0..=p {
                    acc += self.gll_dx[[i, j]] * f[el.first + j];
                }
                out.push(acc * sc);
            }
        }
        Array1::from(out)
    }

    /// Quadrature ∫ g(|x|) for g given at the element-local points.
    pub fn integrate_qp(&self, g: &Array1<f64>) -> f64 {
        self.qp_w.dot(g)
    }

    /// Polynomial interpolant at radius `x`; harmonic continuation past r_max.
    pub fn interpolate(&self, f: &Array1<f64>, x: f64) -> f64 {
        let rm = self.spec.r_max;
        if x >= rm {
            let n = self.spec.dim as f64;
            return f[self.spec.m - 1] * (rm / x).powf(n - 2.0);
        }
        let x = x.max(0.0);
        let p = self.degree;
        let b1 = self.breaks[1];
        if x <= b1 {
            let t = 2.0 * x * x / (b1 * b1) - 1.0;
            return interpolate(&self.axis_t, &self.axis_bw, &f.as_slice().unwrap()[..p], t);
        }
        let e = match self.breaks.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
            Ok(k) => k.saturating_sub(1).max(1),
            Err(k) => k - 1,
        };
        let el = &self.elements[e];
        let t = 2.0 * (x - el.lo) / (el.hi - el.lo) - 1.0;
        let vals = &f.as_slice().unwrap()[el.first..el.first + p + 1];
        interpolate(&self.gll_x, &self.gll_bw, vals, t)
    }

    pub fn interpolate_field(&self, f: &RadialField, x: f64) -> (f64, f64) {
        (self.interpolate(&f.re, x), self.interpolate(&f.im, x))
    }

    /// Eigenpairs of the discrete -Δ, computed once per grid.
    pub fn spectrum(&self) -> Result<&LaplacianSpectrum> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let sqrt_w = self.w.mapv(f64::sqrt);
        let m = self.spec.m;
        let mut b = self.stiffness.clone();
        for i in 0..m {
            for j in 0..m {
                b[[i, j]] /= sqrt_w[i] * sqrt_w[j];
            }
        }
        let (values, vectors) = b.eigh(UPLO::Lower)?;
        if values[0] <= 0.0 {
            return Err(Error::Spectral(format!(
                "discrete Laplacian is not positive definite (lowest eigenvalue {})",
                values[0]
            )));
        }
        let _ = self.spectrum.set(LaplacianSpectrum { values, vectors, sqrt_w });
        Ok(self.spectrum.get().expect("just set"))
    }

    /// Relative error of the quadrature of (1+r²)^{-N} against ω B(N/2,N/2)/2.
    /// Sampler on [0, upto] with `order` Gauss points per piece.
    pub fn sampler(&self, cuts: &[f64], upto: f64, order: usize) -> Result<Sampler> {
        if !(upto > 0.0) || upto > self.spec.r_max {
            return Err(Error::Usage(format!("sampler range {upto} must lie in (0, r_max]")));
        }
        let gl = gauss_legendre(order)?;
        let n = self.spec.dim as f64;
        let p = self.degree;
        let b1 = self.breaks[1];
        let c = b1 * b1 / 2.0;
        let (mut points, mut weights, mut rows) = (Vec::new(), Vec::new(), Vec::new());
        for (e, el) in self.elements.iter().enumerate() {
            if el.lo >= upto {
                break;
            }
            let mut knots = vec![el.lo, el.hi.min(upto)];
            knots.extend(cuts.iter().copied().filter(|&x| x > el.lo && x < el.hi.min(upto)));
            knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in knots.windows(2) {
                let (a, b) = (k[0], k[1]);
                for (&x, &wx) in gl.nodes.iter().zip(&gl.weights) {
                    let r = a + (x + 1.0) * (b - a) / 2.0;
                    points.push(r);
                    weights.push(self.sphere * wx * (b - a) / 2.0 * r.powf(n - 1.0));
                    rows.push(if e == 0 {
                        let t = r * r / c - 1.0;
                        let slope = lagrange_basis_derivative(&self.axis_t, &self.axis_bw, t);
                        SampleRow {
                            first: 0,
                            value: lagrange_basis(&self.axis_t, &self.axis_bw, t),
                            slope: slope.into_iter().map(|d| 2.0 * r * d / c).collect(),
                        }
                    } else {
                        let sc = 2.0 / (el.hi - el.lo);
                        let t = sc * (r - el.lo) - 1.0;
                        let slope = lagrange_basis_derivative(&self.gll_x, &self.gll_bw, t);
                        SampleRow {
                            first: el.first,
                            value: lagrange_basis(&self.gll_x, &self.gll_bw, t),
                            slope: slope.into_iter().map(|d| d * sc).collect(),
                        }
                    });
                }
            }
        }
        debug_assert!(rows.iter().all(|r| r.value.len() == if r.first == 0 { p } else { p + 1 }));
        Ok(Sampler { points: Array1::from(points), weights: Array1::from(weights), rows })
    }

    pub fn exactness_error(&self) -> f64 {
        let n = self.spec.dim as f64;
        let f = self.sample(|r| (1.0 + r * r).powf(-n));
        let exact = 0.5
            * self.sphere
            * (2.0 * statrs::function::gamma::ln_gamma(n / 2.0) - statrs::function::gamma::ln_gamma(n))
                .exp();
        ((self.integrate(&f) - exact) / exact).abs()
    }
}
