//! Complex radial samples `h = h1 + i h2` on grid nodes.

use ndarray::{Array1, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RadialField {
    pub re: Array1<f64>,
    pub im: Array1<f64>,
}

impl RadialField {
    pub fn zeros(m: usize) -> Self {
        RadialField { re: Array1::zeros(m), im: Array1::zeros(m) }
    }

    pub fn real(re: Array1<f64>) -> Self {
        let im = Array1::zeros(re.len());
        RadialField { re, im }
    }

    pub fn imag(im: Array1<f64>) -> Self {
        let re = Array1::zeros(im.len());
        RadialField { re, im }
    }

    pub fn from_parts(re: Array1<f64>, im: Array1<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::Usage(format!(
                "real and imaginary parts differ in length ({} vs {})",
                re.len(),
                im.len()
            )));
        }
        Ok(RadialField { re, im })
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn at(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|v| v.is_finite())
    }

    pub fn modulus_sq(&self) -> Array1<f64> {
        Zip::from(&self.re).and(&self.im).map_collect(|a, b| a * a + b * b)
    }

    pub fn modulus(&self) -> Array1<f64> {
        Zip::from(&self.re).and(&self.im).map_collect(|a, b| a.hypot(*b))
    }

    pub fn conj(&self) -> Self {
        RadialField { re: self.re.clone(), im: -&self.im }
    }

    /// Multiplication by i: (h1, h2) -> (-h2, h1).
    pub fn times_i(&self) -> Self {
        RadialField { re: -&self.im, im: self.re.clone() }
    }

    pub fn scale(&self, c: f64) -> Self {
        RadialField { re: &self.re * c, im: &self.im * c }
    }

    pub fn rotate(&self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        RadialField { re: &self.re * c - &self.im * s, im: &self.re * s + &self.im * c }
    }

    pub fn add(&self, other: &Self) -> Self {
        RadialField { re: &self.re + &other.re, im: &self.im + &other.im }
    }

    pub fn sub(&self, other: &Self) -> Self {
        RadialField { re: &self.re - &other.re, im: &self.im - &other.im }
    }

    /// self + c * other
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        RadialField { re: &self.re + &(&other.re * c), im: &self.im + &(&other.im * c) }
    }

    /// Pointwise product with a real profile.
    pub fn mul_real(&self, v: &Array1<f64>) -> Self {
        RadialField { re: &self.re * v, im: &self.im * v }
    }

    pub fn max_abs(&self) -> f64 {
        self.re.iter().chain(self.im.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Stacked real vector (h1; h2) of length 2M.
    pub fn stacked(&self) -> Array1<f64> {
        let m = self.len();
        let mut out = Array1::zeros(2 * m);
        out.slice_mut(ndarray::s![..m]).assign(&self.re);
        out.slice_mut(ndarray::s![m..]).assign(&self.im);
        out
    }

    pub fn from_stacked(v: &Array1<f64>) -> Self {
        let m = v.len() / 2;
        RadialField {
            re: v.slice(ndarray::s![..m]).to_owned(),
            im: v.slice(ndarray::s![m..]).to_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parts_round_trip() {
        let f = RadialField::from_parts(array![1.0, 2.0], array![-3.0, 0.5]).unwrap();
        let back = RadialField::real(f.re.clone()).add(&RadialField::imag(f.im.clone()));
        assert_eq!(back, f);
        assert_eq!(RadialField::from_stacked(&f.stacked()), f);
    }

    #[test]
    fn times_i_squares_to_minus_one() {
        let f = RadialField::from_parts(array![1.0, 2.0], array![-3.0, 0.5]).unwrap();
        assert_eq!(f.times_i().times_i(), f.scale(-1.0));
    }

    #[test]
    fn rotation_keeps_modulus() {
        let f = RadialField::from_parts(array![1.0, 2.0], array![-3.0, 0.5]).unwrap();
        let g = f.rotate(0.7);
        for (a, b) in f.modulus().iter().zip(g.modulus().iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(RadialField::from_parts(array![1.0], array![1.0, 2.0]).is_err());
    }
}
