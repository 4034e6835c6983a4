//! Small dense and banded linear-algebra helpers.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive definite band matrix, stored by
/// diagonals: `band[[i, k]] = L[i, i-k]`.
pub struct BandedCholesky {
    band: Array2<f64>,
    width: usize,
}

impl BandedCholesky {
    /// Factor `a`, reading only entries with |i-j| <= width.
    pub fn new(a: &Array2<f64>, width: usize) -> Result<Self> {
        let n = a.nrows();
        let mut band = Array2::<f64>::zeros((n, width + 1));
        for i in 0..n {
            let lo = i.saturating_sub(width);
            for j in lo..=i {
                let mut s = a[[i, j]];
                let klo = lo.max(j.saturating_sub(width));
                for k in klo..j {
                    s -= band[[i, i - k]] * band[[j, j - k]];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Linalg(format!(
                            "band matrix is not positive definite at row {i}"
                        )));
                    }
                    band[[i, 0]] = s.sqrt();
                } else {
                    band[[i, i - j]] = s / band[[j, 0]];
                }
            }
        }
        Ok(BandedCholesky { band, width })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = x.len();
        let w = self.width;
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(w)..i {
                s -= self.band[[i, i - k]] * x[k];
            }
            x[i] = s / self.band[[i, 0]];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n.min(i + w + 1) {
                s -= self.band[[k, k - i]] * x[k];
            }
            x[i] = s / self.band[[i, 0]];
        }
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Array1::from(x)
    }

    /// A^{-1} D for a diagonal D, column by column.
    pub fn solve_diagonal(&self, d: &Array1<f64>) -> Array2<f64> {
        let n = d.len();
        let mut out = Array2::<f64>::zeros((n, n));
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = d[j];
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[[i, j]] = col[i];
            }
        }
        out
    }
}

/// Largest |i-j| with a nonzero entry.
pub fn bandwidth(a: &Array2<f64>) -> usize {
    let mut w = 0;
    for ((i, j), v) in a.indexed_iter() {
        if *v != 0.0 {
            w = w.max(i.abs_diff(j));
        }
    }
    w
}

/// D^{1/2} A D^{-1/2} for a positive diagonal `d`.
pub fn similarity_scale(a: &Array2<f64>, sqrt_d: &Array1<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= sqrt_d[i] / sqrt_d[j];
    }
    out
}

/// (A + Aᵀ)/2
pub fn symmetrize(a: &Array2<f64>) -> Array2<f64> {
    let t = a.t();
    (a + &t) * 0.5
}

/// max |A - Aᵀ| / max |A|
pub fn asymmetry(a: &Array2<f64>) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for ((i, j), v) in a.indexed_iter() {
        num = num.max((v - a[[j, i]]).abs());
        den = den.max(v.abs());
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Orthonormal basis of the null space of the rows of `c` (k x m, k << m),
/// taken from the trailing right singular vectors.
pub fn null_space(c: &Array2<f64>) -> Result<Array2<f64>> {
    use ndarray_linalg::SVD;
    let (_, s, vt) = c.svd(false, true)?;
    let vt = vt.ok_or_else(|| Error::Linalg("SVD returned no right vectors".into()))?;
    let k = c.nrows();
    let tol = s.iter().cloned().fold(0.0, f64::max) * 1e-12;
    if s.iter().filter(|&&v| v > tol).count() < k {
        return Err(Error::Linalg("constraint rows are linearly dependent".into()));
    }
    Ok(vt.slice(ndarray::s![k.., ..]).t().to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn banded_cholesky_solves() {
        let n = 12;
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            a[[i, i]] = 4.0 + i as f64;
            if i + 1 < n {
                a[[i, i + 1]] = -1.0;
                a[[i + 1, i]] = -1.0;
            }
            if i + 2 < n {
                a[[i, i + 2]] = 0.5;
                a[[i + 2, i]] = 0.5;
            }
        }
        assert_eq!(bandwidth(&a), 2);
        let f = BandedCholesky::new(&a, 2).unwrap();
        let b = Array1::from_iter((0..n).map(|i| (i as f64).sin()));
        let x = f.solve(b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn indefinite_band_rejected() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(BandedCholesky::new(&a, 1).is_err());
    }

    #[test]
    fn null_space_is_orthogonal() {
        let c = array![[1.0, 1.0, 0.0, 0.0], [0.0, 1.0, 1.0, 1.0]];
        let z = null_space(&c).unwrap();
        assert_eq!(z.dim(), (4, 2));
        let p = c.dot(&z);
        assert!(p.iter().all(|v| v.abs() < 1e-14));
        let g = z.t().dot(&z);
        assert!((g[[0, 0]] - 1.0).abs() < 1e-14 && g[[0, 1]].abs() < 1e-14);
    }
}
