//! Collective spin algebra for integer total spin `S`.
//!
//! All vectors and matrices are indexed with `m` descending: index 0 is
//! `m = S`, index `2S` is `m = -S`. The X basis is reached from the Z basis
//! through the Wigner small-d matrix at `β = -π/2`:
//!
//! ```text
//! |S,m'>_z = Σ_m d^S_{m,m'}(-π/2) |S,m>_x
//! ```
//!
//! so Z-basis coordinates `a` map to X-basis coordinates `d · a`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector, RMatrix, I};

/// Total collective spin `S` (a positive integer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinQuantum(u32);

impl SpinQuantum {
    pub fn new(s: u32) -> Result<Self> {
        if s == 0 {
            return Err(Error::invalid("total spin must be a positive integer"));
        }
        Ok(Self(s))
    }

    #[inline]
    pub fn value(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn s(self) -> i64 {
        self.0 as i64
    }

    #[inline]
    pub fn dim(self) -> usize {
        2 * self.0 as usize + 1
    }

    /// `m` values in storage order: S, S-1, ..., -S.
    pub fn m_values(self) -> impl DoubleEndedIterator<Item = i64> + Clone {
        let s = self.s();
        (0..=2 * s).map(move |i| s - i)
    }

    #[inline]
    pub fn index_of(self, m: i64) -> usize {
        debug_assert!(m.abs() <= self.s());
        (self.s() - m) as usize
    }

    #[inline]
    pub fn m_at(self, index: usize) -> i64 {
        self.s() - index as i64
    }

    pub fn check_m(self, m: i64) -> Result<()> {
        if m.abs() > self.s() {
            return Err(Error::invalid(format!("|m| = {} exceeds S = {}", m.abs(), self.0)));
        }
        Ok(())
    }
}

impl fmt::Display for SpinQuantum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S={}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "z" => Ok(Basis::Z),
            "x" => Ok(Basis::X),
            other => Err(Error::invalid(format!("unknown basis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollectiveOp {
    Sx,
    Sy,
    Sz,
    Splus,
    Sminus,
}

impl FromStr for CollectiveOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sx" => Ok(Self::Sx),
            "sy" => Ok(Self::Sy),
            "sz" => Ok(Self::Sz),
            "splus" | "s+" | "sp" => Ok(Self::Splus),
            "sminus" | "s-" | "sm" => Ok(Self::Sminus),
            other => Err(Error::invalid(format!("unknown collective operator '{other}'"))),
        }
    }
}

/// A pure collective-spin state with amplitudes in a tagged basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinState {
    pub spin: SpinQuantum,
    pub basis: Basis,
    pub amplitudes: CVector,
}

impl SpinState {
    pub fn new(spin: SpinQuantum, basis: Basis, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != spin.dim() {
            return Err(Error::DimensionMismatch { expected: spin.dim(), found: amplitudes.len() });
        }
        Ok(Self { spin, basis, amplitudes })
    }

    pub fn basis_state(spin: SpinQuantum, basis: Basis, m: i64) -> Result<Self> {
        spin.check_m(m)?;
        let mut amps = CVector::zeros(spin.dim());
        amps[spin.index_of(m)] = c(1.0);
        Self::new(spin, basis, amps)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Numeric("cannot normalize a zero or non-finite state".into()));
        }
        self.amplitudes /= c(n);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// `<self|other>`; both states must share spin and basis.
    pub fn inner(&self, other: &SpinState) -> Result<Complex64> {
        if self.spin != other.spin {
            return Err(Error::DimensionMismatch { expected: self.spin.dim(), found: other.spin.dim() });
        }
        if self.basis != other.basis {
            return Err(Error::BasisMismatch);
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Overlap `|<self|other>|²` after bringing `other` into this basis.
    pub fn fidelity_with(&self, other: &SpinState) -> Result<f64> {
        let other = rotate_basis(other, self.basis);
        Ok(self.inner(&other)?.norm_sqr())
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        if op.spin != self.spin {
            return Err(Error::DimensionMismatch { expected: self.spin.dim(), found: op.spin.dim() });
        }
        if op.basis != self.basis {
            return Err(Error::BasisMismatch);
        }
        Ok(self.amplitudes.dotc(&(&op.matrix * &self.amplitudes)))
    }

    /// Populations `|<S,m|ψ>|²` in the state's own basis, `m` descending.
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// A collective operator matrix in a tagged basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub spin: SpinQuantum,
    pub basis: Basis,
    pub matrix: CMatrix,
}

impl OperatorMatrix {
    pub fn is_hermitian(&self, tol: f64) -> bool {
        crate::linalg::hermiticity_defect(&self.matrix) <= tol
    }

    pub fn adjoint(&self) -> Self {
        Self { spin: self.spin, basis: self.basis, matrix: self.matrix.adjoint() }
    }

    pub fn squared(&self) -> Self {
        Self { spin: self.spin, basis: self.basis, matrix: &self.matrix * &self.matrix }
    }
}

/// Raising operator in the Z basis.
fn splus_z(spin: SpinQuantum) -> CMatrix {
    let s = spin.s() as f64;
    let d = spin.dim();
    let mut m = CMatrix::zeros(d, d);
    for col in 1..d {
        let mz = spin.m_at(col) as f64;
        m[(col - 1, col)] = c(((s - mz) * (s + mz + 1.0)).sqrt());
    }
    m
}

fn operator_z(spin: SpinQuantum, which: CollectiveOp) -> CMatrix {
    let d = spin.dim();
    match which {
        CollectiveOp::Sz => CMatrix::from_fn(d, d, |i, j| if i == j { c(spin.m_at(i) as f64) } else { c(0.0) }),
        CollectiveOp::Splus => splus_z(spin),
        CollectiveOp::Sminus => splus_z(spin).adjoint(),
        CollectiveOp::Sx => {
            let p = splus_z(spin);
            (&p + p.adjoint()) * c(0.5)
        }
        CollectiveOp::Sy => {
            let p = splus_z(spin);
            (&p - p.adjoint()) * (-0.5 * I)
        }
    }
}

/// Angular-momentum matrix `which` expressed in `basis`.
pub fn collective_operator(spin: SpinQuantum, which: CollectiveOp, basis: Basis) -> OperatorMatrix {
    let z = operator_z(spin, which);
    let matrix = match basis {
        Basis::Z => z,
        Basis::X => BasisRotation::new(spin).operator_to_x(&z),
    };
    OperatorMatrix { spin, basis, matrix }
}

/// Parses `which`/`basis` names, rejecting unknown combinations.
pub fn collective_operator_by_name(spin: SpinQuantum, which: &str, basis: &str) -> Result<OperatorMatrix> {
    Ok(collective_operator(spin, which.parse()?, basis.parse()?))
}

/// Small-d element `d^j_{m,m'}(β)` (row `m`, column `m'`) through the Jacobi
/// polynomial representation, which stays accurate for large `j` where the
/// alternating factorial sum cancels catastrophically.
fn small_d_element(j: i64, m: i64, mp: i64, beta: f64) -> f64 {
    let (k, a, lambda) = {
        let candidates = [(j + mp, m - mp, m - mp), (j - mp, mp - m, 0), (j + m, mp - m, 0), (j - m, m - mp, m - mp)];
        *candidates.iter().min_by_key(|(k, _, _)| *k).unwrap()
    };
    let b = 2 * j - 2 * k - a;
    debug_assert!(a >= 0 && b >= 0 && k >= 0);

    let half = 0.5 * beta;
    let (sin_h, cos_h) = half.sin_cos();
    let x = beta.cos();

    let ln_ratio = ln_binomial(2 * j - k, k + a) - ln_binomial(k + b, b);
    let mut mag = 0.5 * ln_ratio;
    let mut sign = if lambda.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    for (base, power) in [(sin_h, a), (cos_h, b)] {
        if power == 0 {
            continue;
        }
        if base == 0.0 {
            return 0.0;
        }
        mag += power as f64 * base.abs().ln();
        if base < 0.0 && power % 2 == 1 {
            sign = -sign;
        }
    }
    sign * mag.exp() * jacobi(k as usize, a as f64, b as f64, x)
}

/// Jacobi polynomial `P_n^{(a,b)}(x)` by forward three-term recurrence.
fn jacobi(n: usize, a: f64, b: f64, x: f64) -> f64 {
    let p0 = 1.0;
    if n == 0 {
        return p0;
    }
    let p1 = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0);
    let (mut prev, mut cur) = (p0, p1);
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let c1 = 2.0 * k * (k + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let next = (c2 * cur - c3 * prev) / c1;
        prev = cur;
        cur = next;
    }
    cur
}

pub(crate) fn ln_binomial(n: i64, k: i64) -> f64 {
    debug_assert!(0 <= k && k <= n);
    ln_factorial(n as u64) - ln_factorial(k as u64) - ln_factorial((n - k) as u64)
}

/// Wigner small-d matrix `d^S(β)`; rows indexed by `m`, columns by `m'`, both
/// descending from `S`.
pub fn wigner_small_d(spin: SpinQuantum, beta: f64) -> RMatrix {
    let d = spin.dim();
    let j = spin.s();
    RMatrix::from_fn(d, d, |r, col| small_d_element(j, spin.m_at(r), spin.m_at(col), beta))
}

/// The same matrix evaluated term by term from the factorial sum
///
/// ```text
/// d_{m,m'} = Σ_k (-1)^{k-m'+m} √((S+m')!(S-m')!(S+m)!(S-m)!)
///            / (k!(S+m'-k)!(S-m-k)!(k+m-m')!)
///            · cos(β/2)^{2S-2k+m'-m} sin(β/2)^{2k-m'+m}
/// ```
///
/// with `k` running over every value that keeps all factorial arguments
/// non-negative. Factorials are combined in log space. The alternating sum
/// loses precision for `S ≳ 30`; use [`wigner_small_d`] there.
pub fn wigner_small_d_factorial(spin: SpinQuantum, beta: f64) -> RMatrix {
    let d = spin.dim();
    let s = spin.s();
    let (sin_h, cos_h) = (0.5 * beta).sin_cos();
    RMatrix::from_fn(d, d, |r, col| {
        let m = spin.m_at(r);
        let mp = spin.m_at(col);
        let ln_pref = 0.5
            * (ln_factorial((s + mp) as u64) + ln_factorial((s - mp) as u64) + ln_factorial((s + m) as u64) + ln_factorial((s - m) as u64));
        let mut total = 0.0;
        for k in 0..=2 * s {
            let args = [k, s + mp - k, s - m - k, k + m - mp];
            if args.iter().any(|&v| v < 0) {
                continue;
            }
            let ln_den: f64 = args.iter().map(|&v| ln_factorial(v as u64)).sum();
            let cos_pow = 2 * s - 2 * k + mp - m;
            let sin_pow = 2 * k - mp + m;
            let sign = if (k - mp + m).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
            total += sign * (ln_pref - ln_den).exp() * cos_h.powi(cos_pow as i32) * sin_h.powi(sin_pow as i32);
        }
        total
    })
}

/// Closed form of the top column `d^S_{m,S}(-π/2) = (-1)^{S-m} 2^{-S} √C(2S, S+m)`,
/// returned in storage order.
pub fn top_column_closed_form(spin: SpinQuantum) -> Vec<f64> {
    let s = spin.s();
    spin.m_values()
        .map(|m| {
            let mag = (0.5 * ln_binomial(2 * s, s + m) - s as f64 * std::f64::consts::LN_2).exp();
            if (s - m) % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Cached `d^S(-π/2)` for repeated Z ↔ X conversions at fixed `S`.
#[derive(Debug, Clone)]
pub struct BasisRotation {
    pub spin: SpinQuantum,
    /// `d^S(-π/2)`, real.
    pub d: RMatrix,
    dc: CMatrix,
}

impl BasisRotation {
    pub fn new(spin: SpinQuantum) -> Self {
        let d = wigner_small_d(spin, -FRAC_PI_2);
        let dc = d.map(c);
        Self { spin, d, dc }
    }

    pub fn vector_to_x(&self, z: &CVector) -> CVector {
        &self.dc * z
    }

    pub fn vector_to_z(&self, x: &CVector) -> CVector {
        self.dc.transpose() * x
    }

    /// `O_x = d O_z dᵀ`.
    pub fn operator_to_x(&self, z: &CMatrix) -> CMatrix {
        &self.dc * z * self.dc.transpose()
    }

    pub fn operator_to_z(&self, x: &CMatrix) -> CMatrix {
        self.dc.transpose() * x * &self.dc
    }

    pub fn rotate(&self, state: &SpinState, to: Basis) -> SpinState {
        assert_eq!(state.spin, self.spin);
        let amplitudes = match (state.basis, to) {
            (a, b) if a == b => state.amplitudes.clone(),
            (Basis::Z, Basis::X) => self.vector_to_x(&state.amplitudes),
            _ => self.vector_to_z(&state.amplitudes),
        };
        SpinState { spin: state.spin, basis: to, amplitudes }
    }
}

/// Re-expresses `state` in basis `to`.
pub fn rotate_basis(state: &SpinState, to: Basis) -> SpinState {
    if state.basis == to {
        return state.clone();
    }
    BasisRotation::new(state.spin).rotate(state, to)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KittenSign {
    Plus,
    Minus,
}

/// Named states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// Dicke state `|S,m>` of the given basis.
    Dicke { m: i64, basis: Basis },
    /// `(1+i)/2 |S,S>_z + (-1)^S (1-i)/2 |S,-S>_z`
    CatPsi,
    /// `(1+i)/2 |S,S>_z + (-1)^{S+1} (1-i)/2 |S,-S>_z`
    CatPsiPrime,
    /// `(|S,m>_x ± |S,-m>_x)/√2`, without the time-dependent phase.
    Kitten { m: i64, sign: KittenSign },
}

pub fn make_state(spin: SpinQuantum, kind: StateKind) -> Result<SpinState> {
    let s = spin.s();
    match kind {
        StateKind::Dicke { m, basis } => SpinState::basis_state(spin, basis, m),
        StateKind::CatPsi | StateKind::CatPsiPrime => {
            let parity = if s % 2 == 0 { 1.0 } else { -1.0 };
            let parity = if kind == StateKind::CatPsi { parity } else { -parity };
            let mut amps = CVector::zeros(spin.dim());
            amps[0] = Complex64::new(0.5, 0.5);
            amps[spin.dim() - 1] = Complex64::new(0.5, -0.5) * parity;
            SpinState::new(spin, Basis::Z, amps)
        }
        StateKind::Kitten { m, sign } => {
            spin.check_m(m)?;
            if m == 0 && sign == KittenSign::Minus {
                return Err(Error::invalid("kitten state with m = 0 and minus sign is the zero vector"));
            }
            let mut amps = CVector::zeros(spin.dim());
            let partner = match sign {
                KittenSign::Plus => 1.0,
                KittenSign::Minus => -1.0,
            };
            amps[spin.index_of(m)] += c(1.0);
            amps[spin.index_of(-m)] += c(partner);
            SpinState::new(spin, Basis::X, amps)?.normalized()
        }
    }
}

/// Real amplitudes as a complex column vector.
pub fn real_vector(values: &[f64]) -> CVector {
    DVector::from_iterator(values.len(), values.iter().map(|&v| c(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn spin(s: u32) -> SpinQuantum {
        SpinQuantum::new(s).unwrap()
    }

    #[test]
    fn zero_spin_rejected() {
        assert!(SpinQuantum::new(0).is_err());
        assert_eq!(spin(3).dim(), 7);
    }

    #[test]
    fn sz_and_splus_spin_one() {
        let sz = collective_operator(spin(1), CollectiveOp::Sz, Basis::Z);
        for (i, want) in [1.0, 0.0, -1.0].iter().enumerate() {
            assert_eq!(sz.matrix[(i, i)], c(*want));
        }
        let sp = collective_operator(spin(1), CollectiveOp::Splus, Basis::Z);
        let r2 = 2f64.sqrt();
        assert_abs_diff_eq!(sp.matrix[(0, 1)].re, r2, epsilon = 1e-15);
        assert_abs_diff_eq!(sp.matrix[(1, 2)].re, r2, epsilon = 1e-15);
        let nonzero = sp.matrix.iter().filter(|v| v.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn sx_spectrum_is_integer_ladder() {
        let sx = collective_operator(spin(10), CollectiveOp::Sx, Basis::Z);
        let (vals, _) = crate::linalg::hermitian_eigh(&sx.matrix);
        for (v, want) in vals.iter().zip((-10..=10).rev()) {
            assert_abs_diff_eq!(*v, want as f64, epsilon = 1e-10);
        }
    }

    #[test]
    fn commutation_and_hermiticity() {
        for basis in [Basis::Z, Basis::X] {
            let s = spin(6);
            let sx = collective_operator(s, CollectiveOp::Sx, basis).matrix;
            let sy = collective_operator(s, CollectiveOp::Sy, basis).matrix;
            let sz = collective_operator(s, CollectiveOp::Sz, basis).matrix;
            let sp = collective_operator(s, CollectiveOp::Splus, basis).matrix;
            let sm = collective_operator(s, CollectiveOp::Sminus, basis).matrix;
            for m in [&sx, &sy, &sz] {
                assert!(crate::linalg::hermiticity_defect(m) < 1e-12);
            }
            assert!(crate::linalg::max_abs_diff(&sp, &sm.adjoint()) < 1e-12);
            let comm = &sx * &sy - &sy * &sx;
            assert!(crate::linalg::max_abs_diff(&comm, &(&sz * I)) < 1e-10);
        }
    }

    #[test]
    fn name_parsing_rejects_unknown() {
        assert!(collective_operator_by_name(spin(2), "sq", "z").is_err());
        assert!(collective_operator_by_name(spin(2), "sx", "y").is_err());
        assert!(collective_operator_by_name(spin(2), "Splus", "X").is_ok());
    }

    #[test]
    fn small_d_identity_and_known_entries() {
        let d0 = wigner_small_d(spin(1), 0.0);
        assert!((d0 - RMatrix::identity(3, 3)).abs().max() < 1e-15);
        let d = wigner_small_d(spin(1), -PI / 2.0);
        assert_abs_diff_eq!(d[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn jacobi_route_matches_factorial_sum() {
        for s in 1..=16 {
            for beta in [-PI / 2.0, PI / 2.0, FRAC_PI_4, -FRAC_PI_4, 1.234, 2.9] {
                let a = wigner_small_d(spin(s), beta);
                let b = wigner_small_d_factorial(spin(s), beta);
                let err = (&a - &b).abs().max();
                assert!(err < 1e-10, "S={s} β={beta}: {err:e}");
            }
        }
    }

    #[test]
    fn top_column_matches_closed_form_at_large_spin() {
        for s in [10, 60, 100, 150] {
            let d = wigner_small_d(spin(s), -PI / 2.0);
            let closed = top_column_closed_form(spin(s));
            for (i, want) in closed.iter().enumerate() {
                let got = d[(i, 0)];
                assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300) + 1e-300, "S={s} row {i}: {got:e} vs {want:e}");
            }
        }
    }

    #[test]
    fn small_d_orthogonal() {
        for s in [1, 5, 17, 30, 100] {
            for beta in [PI / 2.0, -PI / 2.0, FRAC_PI_4, -FRAC_PI_4] {
                let d = wigner_small_d(spin(s), beta);
                let defect = (d.transpose() * &d - RMatrix::identity(d.nrows(), d.nrows())).abs().max();
                assert!(defect < 1e-10, "S={s} β={beta}: {defect:e}");
            }
        }
    }

    #[test]
    fn d_matrix_column_symmetries() {
        let s = spin(12);
        let d = wigner_small_d(s, -PI / 2.0);
        let top = s.index_of(12);
        let bottom = s.index_of(-12);
        for m in s.m_values() {
            let a = d[(s.index_of(m), top)];
            let b = d[(s.index_of(-m), top)];
            assert!((a - b).abs() <= 1e-12 * a.abs());
            let sign = if (12 - m) % 2 == 0 { 1.0 } else { -1.0 };
            let lower = d[(s.index_of(m), bottom)];
            assert!((a - sign * lower).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn rotate_top_state_spin_one() {
        let up = make_state(spin(1), StateKind::Dicke { m: 1, basis: Basis::Z }).unwrap();
        let x = rotate_basis(&up, Basis::X);
        let want = [0.5, -1.0 / 2f64.sqrt(), 0.5];
        for (a, w) in x.amplitudes.iter().zip(want) {
            assert_abs_diff_eq!(a.re, w, epsilon = 1e-14);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-14);
        }
        let back = rotate_basis(&x, Basis::Z);
        assert!((back.amplitudes - up.amplitudes).norm() < 1e-12);
    }

    #[test]
    fn x_basis_diagonalizes_sx() {
        let s = spin(9);
        let sx_x = collective_operator(s, CollectiveOp::Sx, Basis::X).matrix;
        let want = collective_operator(s, CollectiveOp::Sz, Basis::Z).matrix;
        assert!(crate::linalg::max_abs_diff(&sx_x, &want) < 1e-10);
    }

    #[test]
    fn even_spin_x_zero_has_even_z_support() {
        let s = spin(8);
        let x0 = make_state(s, StateKind::Dicke { m: 0, basis: Basis::X }).unwrap();
        let z = rotate_basis(&x0, Basis::Z);
        for m in s.m_values().filter(|m| m % 2 != 0) {
            assert!(z.amplitudes[s.index_of(m)].norm() < 1e-13);
        }
    }

    #[test]
    fn named_states() {
        let d = make_state(spin(2), StateKind::Dicke { m: 2, basis: Basis::Z }).unwrap();
        assert_eq!(d.amplitudes[0], c(1.0));
        assert_abs_diff_eq!(d.norm(), 1.0);

        let cat = make_state(spin(1), StateKind::CatPsi).unwrap();
        assert_eq!(cat.amplitudes[0], Complex64::new(0.5, 0.5));
        assert_eq!(cat.amplitudes[1], c(0.0));
        assert_eq!(cat.amplitudes[2], -Complex64::new(0.5, -0.5));
        let prime = make_state(spin(1), StateKind::CatPsiPrime).unwrap();
        assert_eq!(prime.amplitudes[2], Complex64::new(0.5, -0.5));

        let kit = make_state(spin(10), StateKind::Kitten { m: 3, sign: KittenSign::Plus }).unwrap();
        let sx2 = collective_operator(spin(10), CollectiveOp::Sx, Basis::X).squared();
        assert_abs_diff_eq!(kit.expectation(&sx2).unwrap().re, 9.0, epsilon = 1e-12);

        assert!(make_state(spin(3), StateKind::Kitten { m: 0, sign: KittenSign::Minus }).is_err());
        assert!(make_state(spin(3), StateKind::Dicke { m: 4, basis: Basis::Z }).is_err());
        let k0 = make_state(spin(3), StateKind::Kitten { m: 0, sign: KittenSign::Plus }).unwrap();
        assert_abs_diff_eq!(k0.amplitudes[3].re, 1.0, epsilon = 1e-15);
    }
}
