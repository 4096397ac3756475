//! Dense polynomials stored as ascending coefficient lists.

use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use num_traits::Float;

use crate::scalar::Scalar;

/// Multiplies `poly` by `(s + shift)`.
pub fn mul_linear<T: Scalar>(poly: &[T], shift: &T) -> Vec<T> {
    let mut out = vec![T::zero(); poly.len() + 1];
    for (k, c) in poly.iter().enumerate() {
        out[k] = out[k].clone() + c.clone() * shift.clone();
        out[k + 1] = out[k + 1].clone() + c.clone();
    }
    out
}

/// Monic product `prod_i (s + shift_i)`; the empty product is `1`.
pub fn product_of_linears<'a, T: Scalar>(shifts: impl IntoIterator<Item = &'a T>) -> Vec<T> {
    shifts
        .into_iter()
        .fold(vec![T::one()], |acc, a| mul_linear(&acc, a))
}

/// `acc += scale * poly`, growing `acc` if needed.
pub fn add_scaled<T: Scalar>(acc: &mut Vec<T>, poly: &[T], scale: &T) {
    if acc.len() < poly.len() {
        acc.resize(poly.len(), T::zero());
    }
    for (dst, c) in acc.iter_mut().zip(poly) {
        *dst = dst.clone() + c.clone() * scale.clone();
    }
}

/// Horner evaluation of a real-coefficient polynomial at a complex point.
pub fn eval_complex<F: Float>(coeffs: &[F], s: Complex<F>) -> Complex<F> {
    coeffs
        .iter()
        .rev()
        .fold(Complex::new(F::zero(), F::zero()), |acc, &c| acc * s + c)
}

/// Evaluates the monic polynomial `s^k + lower[k-1] s^(k-1) + ... + lower[0]`.
pub fn eval_monic_complex<F: Float>(lower: &[F], s: Complex<F>) -> Complex<F> {
    let mut acc = Complex::new(F::one(), F::zero());
    for &c in lower.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

fn eval_monic_with_derivative(lower: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(1.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in lower.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Roots of a monic polynomial given its non-leading coefficients
/// (ascending), via companion-matrix eigenvalues followed by a few Newton
/// polishing steps on the original polynomial.
pub fn monic_roots(lower: &[f64]) -> Vec<Complex64> {
    let k = lower.len();
    match k {
        0 => return Vec::new(),
        1 => return vec![Complex64::new(-lower[0], 0.0)],
        _ => {}
    }
    let mut companion = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        companion[(i, i - 1)] = 1.0;
    }
    for (i, c) in lower.iter().enumerate() {
        companion[(i, k - 1)] = -c;
    }
    let mut roots: Vec<Complex64> = companion.complex_eigenvalues().iter().copied().collect();
    for z in roots.iter_mut() {
        polish(lower, z);
    }
    roots
}

fn polish(lower: &[f64], z: &mut Complex64) {
    let (mut p, _) = eval_monic_with_derivative(lower, *z);
    for _ in 0..4 {
        let (_, dp) = eval_monic_with_derivative(lower, *z);
        if dp.norm() == 0.0 || !dp.is_finite() {
            return;
        }
        let candidate = *z - p / dp;
        let (pc, _) = eval_monic_with_derivative(lower, candidate);
        if !(pc.norm() < p.norm()) {
            return;
        }
        *z = candidate;
        p = pc;
    }
}
