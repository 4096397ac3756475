//! Structural identifiability of the generalised Randles circuit.
//!
//! The coefficient map sends modal parameters to the coefficients of the
//! monic transfer function. For `n = 1` it is injective. For `n > 1` every
//! relabelling of the RC pairs gives the same coefficients, so there are
//! exactly `n!` preimages; fixing the order `a_1 > a_2 > ... > a_n` leaves
//! one.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::circuit::{
    self, from_modal, to_tf, CircuitError, CircuitParams, ModalParams, RationalTf,
    DUPLICATE_POLE_TOL,
};
use crate::poly;
use crate::scalar::Scalar;

/// Enumeration is `O(n!)`; orders above this are refused.
pub const MAX_ENUMERATION_ORDER: usize = 6;

/// A root is real when `|Im| / (1 + |Re|)` is below this.
pub const REAL_ROOT_TOL: f64 = 1e-7;

/// Maximum relative coefficient mismatch for a candidate to count as a
/// preimage of the target.
pub const IMAGE_TOL: f64 = 1e-8;

/// Computed roots closer than this (relative) are treated as coincident.
/// A double root splits by roughly `sqrt(eps)` under eigenvalue solvers.
pub const ROOT_DUPLICATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdentError {
    #[error("circuit order must be at least 1 (got {0})")]
    InvalidOrder(usize),
    #[error("solution enumeration is limited to n <= {MAX_ENUMERATION_ORDER} (got {0})")]
    OrderTooLarge(usize),
    #[error("coefficient vector has length {got}, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("target is not in the image of the coefficient map: {0}")]
    NotInImage(String),
    #[error("denominator roots coincide within tolerance")]
    DuplicateRoots,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// `(c_0..c_k1, d_0..d_{k2-1})` in that order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientVector<T> {
    pub values: Vec<T>,
    pub k1: usize,
    pub k2: usize,
}

impl<T: Scalar> CoefficientVector<T> {
    pub fn from_tf(tf: &RationalTf<T>) -> Self {
        let (k1, k2) = tf.orders();
        let mut values = tf.num.clone();
        values.extend(tf.den.iter().cloned());
        Self { values, k1, k2 }
    }

    pub fn numerator(&self) -> &[T] {
        &self.values[..=self.k1]
    }

    pub fn denominator(&self) -> &[T] {
        &self.values[self.k1 + 1..]
    }
}

impl CoefficientVector<f64> {
    /// `max |self - other| / max |other|`.
    pub fn relative_distance(&self, other: &Self) -> f64 {
        if self.values.len() != other.values.len() {
            return f64::INFINITY;
        }
        let scale = other.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let diff = self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

pub fn coefficient_map<T: Scalar>(m: &ModalParams<T>) -> CoefficientVector<T> {
    CoefficientVector::from_tf(&to_tf(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    GloballyIdentifiable,
    LocallyIdentifiable,
    Unidentifiable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionCount {
    Finite(u64),
    Infinite,
}

impl Serialize for SolutionCount {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SolutionCount::Finite(k) => s.serialize_u64(*k),
            SolutionCount::Infinite => s.serialize_str("infinite"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiabilityVerdict {
    pub classification: Classification,
    pub solution_count: SolutionCount,
    pub witnesses: Vec<CircuitParams<f64>>,
}

impl IdentifiabilityVerdict {
    fn from_count(count: u64) -> Self {
        let classification = if count == 1 {
            Classification::GloballyIdentifiable
        } else {
            Classification::LocallyIdentifiable
        };
        Self {
            classification,
            solution_count: SolutionCount::Finite(count),
            witnesses: Vec::new(),
        }
    }
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Identifiability class of the order-`n` model structure, with or without
/// the pole ordering constraint.
pub fn classify(n: usize, ordered: bool) -> Result<IdentifiabilityVerdict, IdentError> {
    if n == 0 {
        return Err(IdentError::InvalidOrder(n));
    }
    let count = if ordered { 1 } else { factorial(n) };
    Ok(IdentifiabilityVerdict::from_count(count))
}

/// [`classify`] plus the concrete parameter sets sharing `m`'s transfer
/// function. With `ordered` only the canonical witness survives.
pub fn verdict_for(m: &ModalParams<f64>, ordered: bool) -> Result<IdentifiabilityVerdict, IdentError> {
    let mut verdict = classify(m.order(), ordered)?;
    let mut solutions = enumerate_solutions(&coefficient_map(m), m.order())?;
    if ordered {
        solutions.retain(is_canonical);
    }
    verdict.witnesses = solutions
        .iter()
        .map(from_modal)
        .collect::<Result<_, _>>()?;
    Ok(verdict)
}

/// Residues `(b_1..b_n, b_w)` and feedthrough `d` that realise `num` over
/// the denominator `s * prod (s + a_i)`.
///
/// Matches coefficients of `N(s) - d D(s)` against the basis
/// `s prod_{j != i}(s + a_j)` (one per RC pair) and `prod_j (s + a_j)`
/// (the integrator); for `n = 2` this is the familiar 3x3 system.
/// Returns `None` when the system is singular.
pub fn residues_for_poles(num: &[f64], a: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    let n = a.len();
    if num.len() != n + 2 {
        return None;
    }
    let d = num[n + 1];
    let den_full = poly::mul_linear(&poly::product_of_linears(a), &0.0);
    let mut rhs = num.to_vec();
    poly::add_scaled(&mut rhs, &den_full, &-d);
    rhs.truncate(n + 1);

    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let others = a.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v);
            poly::mul_linear(&poly::product_of_linears(others), &0.0)
        })
        .collect();
    columns.push(poly::product_of_linears(a));

    let mut mat = DMatrix::<f64>::zeros(n + 1, n + 1);
    for (col, coeffs) in columns.iter().enumerate() {
        for (row, v) in coeffs.iter().enumerate() {
            mat[(row, col)] = *v;
        }
    }
    // Row equilibration; the monomial rows span many decades.
    let mut b = DVector::from_vec(rhs);
    for row in 0..=n {
        let scale = mat.row(row).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            mat.row_mut(row).scale_mut(1.0 / scale);
            b[row] /= scale;
        }
    }
    let x = mat.lu().solve(&b)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let b_w = x[n];
    Some((x.iter().take(n).copied().collect(), b_w, d))
}

/// Every modal parameter set of order `n` whose coefficient vector equals
/// `target`.
///
/// The `n + 1` denominator roots are assigned to the `n` RC slots and the
/// integrator slot in every possible way; assignments that do not put the
/// zero root on the integrator are discarded. Each surviving assignment
/// fixes the residues uniquely. Returns `n!` solutions for targets in the
/// image with distinct poles.
pub fn enumerate_solutions(
    target: &CoefficientVector<f64>,
    n: usize,
) -> Result<Vec<ModalParams<f64>>, IdentError> {
    if n == 0 {
        return Err(IdentError::InvalidOrder(n));
    }
    if n > MAX_ENUMERATION_ORDER {
        return Err(IdentError::OrderTooLarge(n));
    }
    let expected = 2 * n + 3;
    if target.values.len() != expected || target.k1 != n + 1 || target.k2 != n + 1 {
        return Err(IdentError::ShapeMismatch {
            expected,
            got: target.values.len(),
        });
    }

    let roots = poly::monic_roots(target.denominator());
    if roots
        .iter()
        .any(|z| z.im.abs() / (1.0 + z.re.abs()) >= REAL_ROOT_TOL)
    {
        return Err(IdentError::NotInImage("complex denominator roots".into()));
    }
    let real: Vec<f64> = roots.iter().map(|z| z.re).collect();
    if circuit::relative_pole_gap(&real).is_some_and(|g| g < ROOT_DUPLICATE_TOL) {
        return Err(IdentError::DuplicateRoots);
    }
    let scale = real.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    let is_zero = |r: f64| r.abs() <= 1e-8 * (1.0 + scale);

    let mut solutions = Vec::new();
    for assignment in (0..=n).permutations(n + 1) {
        if !is_zero(real[assignment[n]]) {
            continue;
        }
        let a: Vec<f64> = assignment[..n].iter().map(|&k| -real[k]).collect();
        if a.iter().any(|&v| v <= 0.0) {
            return Err(IdentError::NotInImage("denominator root in the right half-plane".into()));
        }
        let (b, b_w, d) = residues_for_poles(target.numerator(), &a)
            .ok_or(IdentError::DuplicateRoots)?;
        let candidate = ModalParams::new(a, b, b_w, d)
            .map_err(|e| IdentError::NotInImage(format!("non-physical residues ({e})")))?;
        let remapped = coefficient_map(&candidate);
        let mismatch = remapped.relative_distance(target);
        if mismatch > IMAGE_TOL {
            return Err(IdentError::NotInImage(format!(
                "re-mapping mismatch {mismatch:.3e}"
            )));
        }
        solutions.push(candidate);
    }
    if solutions.is_empty() {
        return Err(IdentError::NotInImage("no root at the origin".into()));
    }
    Ok(solutions)
}

/// `a_1 > a_2 > ... > a_n` strictly.
pub fn is_canonical(m: &ModalParams<f64>) -> bool {
    m.a.windows(2).all(|w| w[0] > w[1])
}

/// Sorts the `(a_i, b_i)` pairs so that `a` is strictly decreasing.
pub fn canonical_ordering<T: Scalar>(m: &ModalParams<T>) -> Result<ModalParams<T>, IdentError> {
    if circuit::relative_pole_gap(&m.a).is_some_and(|g| g < DUPLICATE_POLE_TOL) {
        return Err(IdentError::DuplicateRoots);
    }
    let mut pairs: Vec<(T, T)> = m.a.iter().cloned().zip(m.b.iter().cloned()).collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let (a, b) = pairs.into_iter().unzip();
    Ok(ModalParams {
        a,
        b,
        b_w: m.b_w.clone(),
        d: m.d.clone(),
    })
}

/// Closed-form inverse of the `n = 1` coefficient map
/// `(c_0, c_1, c_2, d_0, d_1)`:
/// `R∞ = c_2`, `R_1 C_1 = 1/d_1`, `Cw = d_1/c_0`,
/// `1/C_1 = c_1 - c_2 d_1 - c_0/d_1`.
pub fn invert_first_order<T: Scalar>(cv: &CoefficientVector<T>) -> Result<CircuitParams<T>, IdentError> {
    if cv.values.len() != 5 || cv.k1 != 2 || cv.k2 != 2 {
        return Err(IdentError::ShapeMismatch {
            expected: 5,
            got: cv.values.len(),
        });
    }
    let [c0, c1, c2, d0, d1] = <[T; 5]>::try_from(cv.values.clone())
        .map_err(|_| IdentError::ShapeMismatch { expected: 5, got: cv.values.len() })?;
    if d0 != T::zero() {
        return Err(IdentError::NotInImage("d_0 must vanish".into()));
    }
    if !d1.is_strictly_positive() {
        return Err(IdentError::NotInImage("d_1 must be positive".into()));
    }
    let b_w = c0.clone() / d1.clone();
    let b1 = c1 - c2.clone() * d1.clone() - b_w.clone();
    let m = ModalParams::new(vec![d1], vec![b1], b_w, c2)
        .map_err(|e| IdentError::NotInImage(e.to_string()))?;
    Ok(from_modal(&m)?)
}
