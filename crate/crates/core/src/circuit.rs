//! Generalised Randles circuit: physical parameters, the modal
//! reparametrisation, and the state-space and transfer-function forms.
//!
//! The circuit is a series resistor `R∞`, then `n` parallel RC pairs, then a
//! series capacitor `Cw`. With current as input and terminal voltage as
//! output its impedance is
//!
//! ```text
//! T(s) = sum_i b_i / (s + a_i) + b_w / s + d
//! a_i = 1/(R_i C_i),  b_i = 1/C_i,  b_w = 1/Cw,  d = R∞
//! ```

use num_complex::Complex;
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly;
use crate::scalar::Scalar;

/// Largest order accepted by the constructors. Expansion in the monomial
/// basis becomes ill-conditioned in double precision beyond this.
pub const MAX_ORDER: usize = 10;

/// Relative pole spacing below which poles are treated as coincident.
pub const DUPLICATE_POLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CircuitError {
    #[error("{name} must be strictly positive and finite (got {value})")]
    NonPositive { name: String, value: f64 },
    #[error("element lists differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },
    #[error("circuit order {0} exceeds the supported maximum of {MAX_ORDER}")]
    OrderTooLarge(usize),
    #[error("transfer function denominator vanishes at omega = {0} rad/s")]
    PoleOnAxis(f64),
}

/// Physical element values `(R∞, R_1..R_n, C_1..C_n, Cw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams<T> {
    /// Series resistance (Ω).
    pub r_inf: T,
    /// RC-pair resistances (Ω).
    pub r: Vec<T>,
    /// RC-pair capacitances (F).
    pub c: Vec<T>,
    /// Series (Warburg) capacitance (F).
    pub c_w: T,
}

/// Modal parameters: pole rates, residues and feedthrough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalParams<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub b_w: T,
    pub d: T,
}

/// Diagonal state-space realisation. States are the RC-pair voltages
/// followed by the voltage across `Cw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel<T> {
    pub a_diag: Vec<T>,
    pub b_vec: Vec<T>,
    pub c_vec: Vec<T>,
    pub d_scalar: T,
}

/// Rational transfer function with a monic denominator.
///
/// Both lists are ascending in `s`. The leading denominator coefficient is
/// an implicit `1` and is never stored, so `den.len()` is the denominator
/// degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTf<T> {
    pub num: Vec<T>,
    pub den: Vec<T>,
    #[serde(default)]
    pub integrator_fixed: bool,
}

fn check_positive<T: Scalar>(name: impl FnOnce() -> String, v: &T) -> Result<(), CircuitError> {
    if v.is_strictly_positive() {
        Ok(())
    } else {
        Err(CircuitError::NonPositive {
            name: name(),
            value: v.approx_f64(),
        })
    }
}

fn check_order(left: usize, right: usize) -> Result<(), CircuitError> {
    if left != right {
        return Err(CircuitError::LengthMismatch { left, right });
    }
    if left > MAX_ORDER {
        return Err(CircuitError::OrderTooLarge(left));
    }
    Ok(())
}

impl<T: Scalar> CircuitParams<T> {
    pub fn new(r_inf: T, r: Vec<T>, c: Vec<T>, c_w: T) -> Result<Self, CircuitError> {
        let p = Self { r_inf, r, c, c_w };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check_order(self.r.len(), self.c.len())?;
        check_positive(|| "r_inf".into(), &self.r_inf)?;
        check_positive(|| "c_w".into(), &self.c_w)?;
        for (i, (r, c)) in self.r.iter().zip(&self.c).enumerate() {
            check_positive(|| format!("r[{i}]"), r)?;
            check_positive(|| format!("c[{i}]"), c)?;
        }
        Ok(())
    }

    /// Number of parallel RC pairs.
    pub fn order(&self) -> usize {
        self.r.len()
    }

    /// Time constants `τ_i = R_i C_i`.
    pub fn time_constants(&self) -> Vec<T> {
        self.r
            .iter()
            .zip(&self.c)
            .map(|(r, c)| r.clone() * c.clone())
            .collect()
    }

    /// Flattened `θ = (R∞, R_1..R_n, C_1..C_n, Cw)`.
    pub fn to_vector(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(2 * self.order() + 2);
        v.push(self.r_inf.clone());
        v.extend(self.r.iter().cloned());
        v.extend(self.c.iter().cloned());
        v.push(self.c_w.clone());
        v
    }
}

/// Names matching [`CircuitParams::to_vector`]: `r_inf, r1.., c1.., c_w`.
pub fn parameter_names(n: usize) -> Vec<String> {
    let mut names = vec!["r_inf".to_string()];
    names.extend((1..=n).map(|i| format!("r{i}")));
    names.extend((1..=n).map(|i| format!("c{i}")));
    names.push("c_w".into());
    names
}

impl<T: Scalar> ModalParams<T> {
    pub fn new(a: Vec<T>, b: Vec<T>, b_w: T, d: T) -> Result<Self, CircuitError> {
        let m = Self { a, b, b_w, d };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        check_order(self.a.len(), self.b.len())?;
        check_positive(|| "b_w".into(), &self.b_w)?;
        check_positive(|| "d".into(), &self.d)?;
        for (i, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            check_positive(|| format!("a[{i}]"), a)?;
            check_positive(|| format!("b[{i}]"), b)?;
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }
}

pub fn to_modal<T: Scalar>(p: &CircuitParams<T>) -> Result<ModalParams<T>, CircuitError> {
    p.validate()?;
    let a = p
        .r
        .iter()
        .zip(&p.c)
        .map(|(r, c)| T::one() / (r.clone() * c.clone()))
        .collect();
    let b = p.c.iter().map(|c| T::one() / c.clone()).collect();
    Ok(ModalParams {
        a,
        b,
        b_w: T::one() / p.c_w.clone(),
        d: p.r_inf.clone(),
    })
}

/// Inverse of [`to_modal`]: `R∞ = d, Cw = 1/b_w, R_i = b_i/a_i, C_i = 1/b_i`.
pub fn from_modal<T: Scalar>(m: &ModalParams<T>) -> Result<CircuitParams<T>, CircuitError> {
    m.validate()?;
    let r = m
        .a
        .iter()
        .zip(&m.b)
        .map(|(a, b)| b.clone() / a.clone())
        .collect();
    let c = m.b.iter().map(|b| T::one() / b.clone()).collect();
    Ok(CircuitParams {
        r_inf: m.d.clone(),
        r,
        c,
        c_w: T::one() / m.b_w.clone(),
    })
}

pub fn to_state_space<T: Scalar>(m: &ModalParams<T>) -> StateSpaceModel<T> {
    let mut a_diag: Vec<T> = m.a.iter().map(|a| T::zero() - a.clone()).collect();
    a_diag.push(T::zero());
    let mut b_vec = m.b.clone();
    b_vec.push(m.b_w.clone());
    StateSpaceModel {
        c_vec: vec![T::one(); a_diag.len()],
        a_diag,
        b_vec,
        d_scalar: m.d.clone(),
    }
}

/// Smallest pairwise pole gap relative to the largest pole, or `None` for
/// fewer than two poles.
pub fn relative_pole_gap<T: Scalar>(a: &[T]) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let v: Vec<f64> = a.iter().map(Scalar::approx_f64).collect();
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut gap = f64::INFINITY;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            gap = gap.min((v[i] - v[j]).abs());
        }
    }
    Some(if scale > 0.0 { gap / scale } else { 0.0 })
}

/// Expands `sum_i b_i/(s + a_i) [+ b_w/s] + d` over its common denominator
/// without checking signs. With `b_w = None` there is no integrator.
pub fn expand_partial_fractions<T: Scalar>(
    a: &[T],
    b: &[T],
    b_w: Option<&T>,
    d: &T,
) -> RationalTf<T> {
    assert_eq!(a.len(), b.len(), "pole and residue lists differ in length");
    let integrator = b_w.is_some();
    let zero = T::zero();
    let with_integrator = |poly: Vec<T>| {
        if integrator {
            poly::mul_linear(&poly, &zero)
        } else {
            poly
        }
    };

    let den_full = with_integrator(poly::product_of_linears(a));
    let mut num = Vec::new();
    poly::add_scaled(&mut num, &den_full, d);
    for (i, bi) in b.iter().enumerate() {
        let others = a
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, aj)| aj);
        let partial = with_integrator(poly::product_of_linears(others));
        poly::add_scaled(&mut num, &partial, bi);
    }
    if let Some(bw) = b_w {
        poly::add_scaled(&mut num, &poly::product_of_linears(a), bw);
    }

    let degree = den_full.len() - 1;
    RationalTf {
        num,
        den: den_full[..degree].to_vec(),
        integrator_fixed: integrator,
    }
}

/// Monic transfer function of the circuit. Logs a warning when poles are
/// closer than [`DUPLICATE_POLE_TOL`]; the expansion is still returned.
pub fn to_tf<T: Scalar>(m: &ModalParams<T>) -> RationalTf<T> {
    if let Some(gap) = relative_pole_gap(&m.a) {
        if gap < DUPLICATE_POLE_TOL {
            log::warn!("near-coincident poles (relative gap {gap:.3e}); parameters are not locally unique");
        }
    }
    expand_partial_fractions(&m.a, &m.b, Some(&m.b_w), &m.d)
}

impl<T: Scalar> RationalTf<T> {
    /// `(k1, k2)`: numerator and denominator degrees.
    pub fn orders(&self) -> (usize, usize) {
        (self.num.len().saturating_sub(1), self.den.len())
    }
}

/// `T(jω)`.
pub fn eval_tf<F: Float + Scalar>(tf: &RationalTf<F>, omega: F) -> Result<Complex<F>, CircuitError> {
    let s = Complex::new(F::zero(), omega);
    let den = poly::eval_monic_complex(&tf.den, s);
    if den.norm() < F::from(1e-300).unwrap_or_else(F::min_positive_value) {
        return Err(CircuitError::PoleOnAxis(omega.approx_f64()));
    }
    Ok(poly::eval_complex(&tf.num, s) / den)
}

/// Direct evaluation of the partial-fraction sum at `jω`.
pub fn eval_modal(m: &ModalParams<f64>, omega: f64) -> Complex<f64> {
    let s = Complex::new(0.0, omega);
    let mut v = Complex::new(m.d, 0.0) + m.b_w / s;
    for (a, b) in m.a.iter().zip(&m.b) {
        v += *b / (s + a);
    }
    v
}
