//! Lindblad master equations for the boson-coupled Dicke model, the reduced
//! collective-spin model obtained after eliminating the boson, and the bare
//! twisting model `H = -Λ Sx²` with collective decay through `Sx`.
//!
//! Dissipators follow the convention `D[O]ρ = 2OρO† - ρO†O - O†Oρ`, so a term
//! with rate `r` contributes `r D[O]ρ`.

use log::warn;
use nalgebra::{DMatrixView, DMatrixViewMut};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::{DensityMatrix, StateSpace};
use crate::error::{Error, Result};
use crate::linalg::{c, hermiticity_defect, kron, trace, trace_distance, CMatrix, I};
use crate::ode::{DormandPrince, OdeOptions, OdeStats};
use crate::spin_algebra::{collective_operator, Basis, CollectiveOp, SpinQuantum, SpinState};

const HAMILTONIAN_TOLERANCE: f64 = 1e-10;

/// Parameters of the generalized Dicke model, all angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub omega0: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub kappa: f64,
    pub nbar: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega", self.omega),
            ("omega0", self.omega0),
            ("lambda_plus", self.lambda_plus),
            ("lambda_minus", self.lambda_minus),
            ("kappa", self.kappa),
            ("nbar", self.nbar),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        if self.kappa < 0.0 || self.nbar < 0.0 {
            return Err(Error::invalid("kappa and nbar must be non-negative"));
        }
        if self.omega == 0.0 && self.kappa == 0.0 {
            return Err(Error::invalid("omega and kappa cannot both vanish"));
        }
        Ok(())
    }

    /// Advisory check that `√(ω²+κ²)` exceeds the spin-side scales tenfold.
    pub fn dispersive_valid(&self) -> bool {
        let scale = self.omega.hypot(self.kappa);
        let spin_side = self.omega0.abs().max(self.lambda_plus.abs()).max(self.lambda_minus.abs());
        scale >= 10.0 * spin_side
    }

    fn denominator(&self, spin: SpinQuantum) -> f64 {
        2.0 * spin.s() as f64 * (self.omega * self.omega + self.kappa * self.kappa)
    }

    /// Twisting rate of the `Sx²` term, `ω(λ₋+λ₊)²/(2S(ω²+κ²))`. Equals
    /// `2λ²ω/(S(ω²+κ²))` for balanced couplings.
    pub fn twist_rate(&self, spin: SpinQuantum) -> f64 {
        let sum = self.lambda_minus + self.lambda_plus;
        self.omega * sum * sum / self.denominator(spin)
    }

    /// Collective decay rate `κ(2n̄+1)Λ/ω` for balanced couplings.
    pub fn decay_rate(&self, spin: SpinQuantum) -> f64 {
        let sum = self.lambda_minus + self.lambda_plus;
        self.kappa * (2.0 * self.nbar + 1.0) * sum * sum / self.denominator(spin)
    }

    /// Fock truncation `max(4, ⌈8(n̄ + λ²S/ω²)⌉)` with `λ = max(λ₊, λ₋)`.
    pub fn default_nmax(&self, spin: SpinQuantum) -> usize {
        let lam = self.lambda_plus.abs().max(self.lambda_minus.abs());
        let occupancy = self.nbar + lam * lam * spin.s() as f64 / (self.omega * self.omega).max(f64::MIN_POSITIVE);
        let n = (8.0 * occupancy).ceil();
        if n.is_finite() {
            (n as usize).max(4)
        } else {
            usize::MAX
        }
    }
}

/// One dissipator `rate · D[operator]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTerm {
    pub label: String,
    pub rate: f64,
    pub operator: CMatrix,
}

#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub space: StateSpace,
    pub hamiltonian: CMatrix,
    pub terms: Vec<LindbladTerm>,
}

impl LindbladModel {
    pub fn new(space: StateSpace, hamiltonian: CMatrix, terms: Vec<LindbladTerm>) -> Result<Self> {
        let d = space.dimension();
        if hamiltonian.nrows() != d || hamiltonian.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: hamiltonian.nrows() });
        }
        let defect = hermiticity_defect(&hamiltonian);
        let scale = hamiltonian.iter().map(|v| v.norm()).fold(1.0, f64::max);
        if defect > HAMILTONIAN_TOLERANCE * scale {
            return Err(Error::NotHermitian(defect));
        }
        for t in &terms {
            if !(t.rate >= 0.0) || !t.rate.is_finite() {
                return Err(Error::invalid(format!("rate of term {} must be non-negative", t.label)));
            }
            if t.operator.nrows() != d || t.operator.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: t.operator.nrows() });
            }
        }
        Ok(Self { space, hamiltonian, terms })
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension()
    }

    /// `H - i Σ rate O†O`.
    pub fn effective_hamiltonian(&self) -> CMatrix {
        let mut h = self.hamiltonian.clone();
        for t in &self.terms {
            h -= (t.operator.adjoint() * &t.operator) * (I * t.rate);
        }
        h
    }

    /// `L[ρ]`.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dimension();
        let mut out = CMatrix::zeros(d, d);
        Liouvillian::new(self).apply(rho.as_slice(), out.as_mut_slice());
        out
    }

    /// `|Tr L[ρ]|`, which should vanish for any ρ.
    pub fn trace_defect(&self, rho: &CMatrix) -> f64 {
        trace(&self.apply(rho)).norm()
    }
}

/// Nonzero entries `(row, col, value)` of a mostly empty matrix.
struct Sparse {
    entries: Vec<(usize, usize, Complex64)>,
}

impl Sparse {
    /// Returns `None` when more than a quarter of the entries are nonzero.
    fn try_from(m: &CMatrix) -> Option<Self> {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != Complex64::new(0.0, 0.0) {
                    entries.push((i, j, v));
                }
            }
        }
        (4 * entries.len() <= m.len()).then_some(Self { entries })
    }

    /// `out += w · A X` for column-major `d×d` buffers.
    fn left_acc(&self, w: Complex64, x: &[Complex64], out: &mut [Complex64], d: usize) {
        for &(i, k, a) in &self.entries {
            let wa = w * a;
            for col in 0..d {
                out[i + col * d] += wa * x[k + col * d];
            }
        }
    }

    /// `out += w · X A†` for column-major `d×d` buffers.
    fn right_adjoint_acc(&self, w: Complex64, x: &[Complex64], out: &mut [Complex64], d: usize) {
        for &(j, k, a) in &self.entries {
            let wa = w * a.conj();
            let (src, dst) = (k * d, j * d);
            for row in 0..d {
                out[dst + row] += wa * x[src + row];
            }
        }
    }
}

/// Right-hand side prepared for repeated application.
enum Liouvillian {
    /// All operators diagonal: `dρ_ij = G_ij ρ_ij`.
    Diagonal(Vec<Complex64>),
    Sparse {
        d: usize,
        heff: Sparse,
        jumps: Vec<(f64, Sparse)>,
        scratch: Vec<Complex64>,
    },
    Dense {
        d: usize,
        heff: CMatrix,
        heff_dag: CMatrix,
        jumps: Vec<(f64, CMatrix, CMatrix)>,
        scratch: CMatrix,
    },
}

fn diagonal_of(m: &CMatrix) -> Option<Vec<Complex64>> {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != Complex64::new(0.0, 0.0) {
                return None;
            }
        }
    }
    Some(m.diagonal().iter().copied().collect())
}

impl Liouvillian {
    fn new(model: &LindbladModel) -> Self {
        let d = model.dimension();
        let heff = model.effective_hamiltonian();
        let active: Vec<&LindbladTerm> = model.terms.iter().filter(|t| t.rate > 0.0).collect();
        let diag_h = diagonal_of(&heff);
        let diag_ops: Option<Vec<_>> = active.iter().map(|t| diagonal_of(&t.operator)).collect();
        if let (Some(h), Some(ops)) = (diag_h, diag_ops) {
            let mut g = vec![Complex64::new(0.0, 0.0); d * d];
            for j in 0..d {
                for i in 0..d {
                    let mut v = -I * (h[i] - h[j].conj());
                    for (t, o) in active.iter().zip(&ops) {
                        v += o[i] * o[j].conj() * (2.0 * t.rate);
                    }
                    g[j * d + i] = v;
                }
            }
            return Liouvillian::Diagonal(g);
        }
        let sparse_h = Sparse::try_from(&heff);
        let sparse_ops: Option<Vec<_>> = active.iter().map(|t| Sparse::try_from(&t.operator)).collect();
        if let (Some(heff), Some(ops)) = (sparse_h, sparse_ops) {
            return Liouvillian::Sparse {
                d,
                heff,
                jumps: active.iter().map(|t| 2.0 * t.rate).zip(ops).collect(),
                scratch: vec![Complex64::new(0.0, 0.0); d * d],
            };
        }
        let jumps = active.iter().map(|t| (2.0 * t.rate, t.operator.clone(), t.operator.adjoint())).collect();
        Liouvillian::Dense { d, heff_dag: heff.adjoint(), heff, jumps, scratch: CMatrix::zeros(d, d) }
    }

    fn apply(&mut self, y: &[Complex64], dy: &mut [Complex64]) {
        match self {
            Liouvillian::Diagonal(g) => {
                for ((out, &v), &gi) in dy.iter_mut().zip(y).zip(g.iter()) {
                    *out = gi * v;
                }
            }
            Liouvillian::Sparse { d, heff, jumps, scratch } => {
                let d = *d;
                dy.fill(Complex64::new(0.0, 0.0));
                heff.left_acc(-I, y, dy, d);
                // ρ H_eff† term of -i(H_eff ρ - ρ H_eff†)
                heff.right_adjoint_acc(I, y, dy, d);
                for (w, op) in jumps.iter() {
                    scratch.fill(Complex64::new(0.0, 0.0));
                    op.left_acc(c(1.0), y, scratch, d);
                    op.right_adjoint_acc(c(*w), scratch, dy, d);
                }
            }
            Liouvillian::Dense { d, heff, heff_dag, jumps, scratch } => {
                let rho = DMatrixView::from_slice(y, *d, *d);
                let mut out = DMatrixViewMut::from_slice(dy, *d, *d);
                out.gemm(-I, heff, &rho, c(0.0));
                out.gemm(I, &rho, heff_dag, c(1.0));
                for (w, op, op_dag) in jumps.iter() {
                    scratch.gemm(c(1.0), op, &rho, c(0.0));
                    out.gemm(c(*w), &*scratch, op_dag, c(1.0));
                }
            }
        }
    }
}

fn ladder(nmax: usize) -> CMatrix {
    let nb = nmax + 1;
    let mut a = CMatrix::zeros(nb, nb);
    for n in 1..nb {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    a
}

/// Boson-coupled model
/// `H = ωa†a + ω₀Sz + λ₋/√(2S)(aS₊ + a†S₋) + λ₊/√(2S)(aS₋ + a†S₊)` with
/// damping `κ(n̄+1)D[a] + κn̄D[a†]`. Warns when the Fock truncation clips a
/// noticeable thermal tail.
pub fn build_full_dicke(params: &ModelParams, space: StateSpace) -> Result<LindbladModel> {
    params.validate()?;
    let StateSpace::SpinBoson { spin, nmax } = space else {
        return Err(Error::invalid("the boson-coupled model needs a spin-boson state space"));
    };
    if params.nbar > 0.0 {
        let tail = (params.nbar / (params.nbar + 1.0)).powi(nmax as i32 + 1);
        if tail > 1e-6 {
            warn!("Fock truncation nmax = {nmax} leaves thermal tail weight {tail:.2e}");
        }
    }
    let op = |w| collective_operator(spin, w, Basis::Z).matrix;
    let ids = CMatrix::identity(spin.dim(), spin.dim());
    let idb = CMatrix::identity(nmax + 1, nmax + 1);
    let a_small = ladder(nmax);
    let a = kron(&ids, &a_small);
    let ad = a.adjoint();
    let sp = kron(&op(CollectiveOp::Splus), &idb);
    let sm = kron(&op(CollectiveOp::Sminus), &idb);
    let sz = kron(&op(CollectiveOp::Sz), &idb);
    let g = 1.0 / (2.0 * spin.s() as f64).sqrt();
    let h = (&ad * &a) * c(params.omega)
        + sz * c(params.omega0)
        + (&a * &sp + &ad * &sm) * c(params.lambda_minus * g)
        + (&a * &sm + &ad * &sp) * c(params.lambda_plus * g);
    let terms = vec![
        LindbladTerm { label: "a".into(), rate: params.kappa * (params.nbar + 1.0), operator: a },
        LindbladTerm { label: "a_dag".into(), rate: params.kappa * params.nbar, operator: ad },
    ];
    LindbladModel::new(space, h, terms)
}

/// Collective-spin model left after eliminating the boson:
/// `H = [ω₀ - ω(2n̄+1)(λ₋²-λ₊²)/(2S(ω²+κ²))] Sz
///      - ω/(2S(ω²+κ²)) [(λ₋+λ₊)² Sx² + (λ₋-λ₊)² Sy²]`
/// with dissipators `D[λ₋S₋+λ₊S₊]` and `D[λ₋S₊+λ₊S₋]` at rates
/// `κ(n̄+1)/(2S(ω²+κ²))` and `κn̄/(2S(ω²+κ²))`.
pub fn build_reduced(params: &ModelParams, spin: SpinQuantum) -> Result<LindbladModel> {
    params.validate()?;
    let op = |w| collective_operator(spin, w, Basis::Z).matrix;
    let (sx, sy, sz) = (op(CollectiveOp::Sx), op(CollectiveOp::Sy), op(CollectiveOp::Sz));
    let (sp, sm) = (op(CollectiveOp::Splus), op(CollectiveOp::Sminus));
    let (lp, lm) = (params.lambda_plus, params.lambda_minus);
    let den = params.denominator(spin);
    let shift = params.omega * (2.0 * params.nbar + 1.0) * (lm * lm - lp * lp) / den;
    let twist = params.omega / den;
    let h = &sz * c(params.omega0 - shift) - (&sx * &sx * c((lm + lp).powi(2)) + &sy * &sy * c((lm - lp).powi(2))) * c(twist);
    let terms = vec![
        LindbladTerm { label: "emission".into(), rate: params.kappa * (params.nbar + 1.0) / den, operator: &sm * c(lm) + &sp * c(lp) },
        LindbladTerm { label: "absorption".into(), rate: params.kappa * params.nbar / den, operator: &sp * c(lm) + &sm * c(lp) },
    ];
    LindbladModel::new(StateSpace::SpinOnly { spin, basis: Basis::Z }, h, terms)
}

/// Twisting model `H = -ΛSx²` with collective decay `Γ D[Sx]`, expressed in
/// the X basis where both operators are diagonal.
pub fn build_twisting(lambda: f64, gamma: f64, spin: SpinQuantum) -> Result<LindbladModel> {
    build_twisting_in(lambda, gamma, spin, Basis::X)
}

/// [`build_twisting`] in an explicit basis.
pub fn build_twisting_in(lambda: f64, gamma: f64, spin: SpinQuantum, basis: Basis) -> Result<LindbladModel> {
    if !(lambda >= 0.0 && gamma >= 0.0) || !lambda.is_finite() || !gamma.is_finite() {
        return Err(Error::invalid("twisting and decay rates must be finite and non-negative"));
    }
    let sx = collective_operator(spin, CollectiveOp::Sx, basis).matrix;
    let sx = match basis {
        // rounding in the rotated operator would defeat the diagonal fast path
        Basis::X => CMatrix::from_diagonal(&sx.diagonal()),
        Basis::Z => sx,
    };
    let h = -(&sx * &sx) * c(lambda);
    LindbladModel::new(StateSpace::SpinOnly { spin, basis }, h, vec![LindbladTerm { label: "Sx".into(), rate: gamma, operator: sx }])
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub ode: OdeOptions,
    /// Largest tolerated `|Tr ρ - 1|` after any accepted step.
    pub trace_tolerance: f64,
    /// Most negative eigenvalue tolerated at output times; `None` skips the
    /// eigen-decomposition.
    pub positivity_tolerance: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), trace_tolerance: 1e-8, positivity_tolerance: Some(1e-8) }
    }
}

/// Integrated states on the requested grid plus step statistics.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub stats: OdeStats,
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("time grid must be finite and non-decreasing"));
    }
    Ok(())
}

/// Solves `ρ̇ = L[ρ]` from `rho0` at `times[0]` and reports the state at every
/// grid point. Output states are Hermitized and renormalized.
pub fn integrate(model: &LindbladModel, rho0: &DensityMatrix, times: &[f64], opts: &IntegrateOptions) -> Result<Solution> {
    check_grid(times)?;
    if rho0.space != model.space {
        return Err(match (rho0.space, model.space) {
            (StateSpace::SpinOnly { spin: a, .. }, StateSpace::SpinOnly { spin: b, .. }) if a == b => Error::BasisMismatch,
            _ => Error::DimensionMismatch { expected: model.dimension(), found: rho0.space.dimension() },
        });
    }
    rho0.validate(1e-10)?;

    let d = model.dimension();
    let mut liouvillian = Liouvillian::new(model);
    let mut rhs = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| liouvillian.apply(y, dy);
    let mut stepper = DormandPrince::new(d * d, opts.ode);
    let mut y: Vec<Complex64> = rho0.matrix.as_slice().to_vec();
    let trace_tol = opts.trace_tolerance;
    let diag_trace = |y: &[Complex64]| (0..d).map(|i| y[i * d + i]).sum::<Complex64>();

    let mut states = Vec::with_capacity(times.len());
    let mut t = times[0];
    for &t_next in times {
        stepper.advance(&mut rhs, t, t_next, &mut y, |_, y| {
            let tr = diag_trace(y);
            if (tr.re - 1.0).abs() > trace_tol || tr.im.abs() > trace_tol {
                return Err(Error::TraceDrift { trace: tr.re });
            }
            Ok(false)
        })?;
        t = t_next;
        let mut m = CMatrix::from_column_slice(d, d, &y);
        m = (&m + m.adjoint()) * c(0.5);
        let tr = trace(&m).re;
        m /= c(tr);
        let rho = DensityMatrix::new(model.space, m)?;
        if let Some(tol) = opts.positivity_tolerance {
            let min = rho.min_eigenvalue();
            if min < -tol {
                return Err(Error::Positivity(min));
            }
        }
        y.copy_from_slice(rho.matrix.as_slice());
        stepper.invalidate();
        states.push(rho);
    }
    Ok(Solution { times: times.to_vec(), states, stats: stepper.stats })
}

/// Thermal boson state `ρ_n ∝ (n̄/(n̄+1))^n` truncated at `nmax`.
fn thermal_weights(nbar: f64, nmax: usize) -> Vec<f64> {
    let q = if nbar > 0.0 { nbar / (nbar + 1.0) } else { 0.0 };
    let mut w: Vec<f64> = (0..=nmax).map(|n| q.powi(n as i32)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Spin state tensored with the truncated thermal boson state.
pub fn spin_boson_thermal(spin_state: &SpinState, nmax: usize, nbar: f64) -> Result<DensityMatrix> {
    let space = StateSpace::spin_boson(spin_state.spin, nmax)?;
    let spin_rho = DensityMatrix::from_pure(&crate::spin_algebra::rotate_basis(spin_state, Basis::Z));
    let boson = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(nmax + 1, thermal_weights(nbar, nmax).into_iter().map(c)));
    DensityMatrix::new(space, kron(&spin_rho.matrix, &boson))
}

/// Outcome of comparing the boson-coupled model with the reduced model.
#[derive(Debug, Clone, Serialize)]
pub struct EliminationReport {
    pub nmax: usize,
    /// Whether raising the truncation by two moved the spin state by less
    /// than the convergence tolerance.
    pub converged: bool,
    pub times: Vec<f64>,
    /// Trace distance between the spin-reduced full state and the reduced
    /// model state at each time.
    pub trace_distance: Vec<f64>,
}

impl EliminationReport {
    pub fn max_distance(&self) -> f64 {
        self.trace_distance.iter().copied().fold(0.0, f64::max)
    }
}

const NMAX_CONVERGENCE: f64 = 1e-6;
const NMAX_LIMIT: usize = 128;

fn spin_states_of(model: &LindbladModel, rho0: &DensityMatrix, times: &[f64], opts: &IntegrateOptions) -> Result<Vec<DensityMatrix>> {
    integrate(model, rho0, times, opts)?.states.iter().map(DensityMatrix::spin_reduced).collect()
}

/// Runs the boson-coupled and reduced models from `initial ⊗ thermal boson`
/// and reports the spin-state trace distance on `times`. The truncation
/// starts at [`ModelParams::default_nmax`] and doubles until the spin state
/// stops changing under `nmax → nmax + 2`.
pub fn compare_full_and_reduced(
    params: &ModelParams,
    initial: &SpinState,
    times: &[f64],
    opts: &IntegrateOptions,
) -> Result<EliminationReport> {
    let spin = initial.spin;
    let mut nmax = params.default_nmax(spin);
    let run = |nmax: usize| -> Result<Vec<DensityMatrix>> {
        let space = StateSpace::spin_boson(spin, nmax)?;
        let model = build_full_dicke(params, space)?;
        spin_states_of(&model, &spin_boson_thermal(initial, nmax, params.nbar)?, times, opts)
    };
    let mut full = run(nmax)?;
    let converged = loop {
        let finer = run(nmax + 2)?;
        let change = full.iter().zip(&finer).map(|(a, b)| crate::linalg::max_abs_diff(&a.matrix, &b.matrix)).fold(0.0, f64::max);
        if change < NMAX_CONVERGENCE {
            break true;
        }
        if 2 * nmax > NMAX_LIMIT {
            warn!("boson truncation not converged at nmax = {nmax} (change {change:.2e})");
            break false;
        }
        nmax *= 2;
        full = run(nmax)?;
    };

    let reduced_model = build_reduced(params, spin)?;
    let reduced =
        spin_states_of(&reduced_model, &DensityMatrix::from_pure(&crate::spin_algebra::rotate_basis(initial, Basis::Z)), times, opts)?;
    let trace_distance = full.iter().zip(&reduced).map(|(a, b)| trace_distance(&a.matrix, &b.matrix)).collect();
    Ok(EliminationReport { nmax, converged, times: times.to_vec(), trace_distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_function, max_abs_diff};
    use crate::metrics::fidelity;
    use crate::spin_algebra::{make_state, rotate_basis, StateKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn spin(s: u32) -> SpinQuantum {
        SpinQuantum::new(s).unwrap()
    }

    fn top(s: SpinQuantum, basis: Basis) -> DensityMatrix {
        let z = SpinState::basis_state(s, Basis::Z, s.s()).unwrap();
        DensityMatrix::from_pure(&rotate_basis(&z, basis))
    }

    fn balanced(omega: f64, kappa: f64) -> ModelParams {
        ModelParams { omega, omega0: 0.0, lambda_plus: 1.0, lambda_minus: 1.0, kappa, nbar: 0.0 }
    }

    fn grid(t1: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t1 * k as f64 / n as f64).collect()
    }

    #[test]
    fn model_rejects_bad_input() {
        let s = spin(1);
        let space = StateSpace::SpinOnly { spin: s, basis: Basis::Z };
        let sp = collective_operator(s, CollectiveOp::Splus, Basis::Z).matrix;
        assert!(matches!(LindbladModel::new(space, sp.clone(), vec![]), Err(Error::NotHermitian(_))));
        let bad = LindbladTerm { label: "x".into(), rate: -1.0, operator: sp };
        assert!(LindbladModel::new(space, CMatrix::zeros(3, 3), vec![bad]).is_err());
        assert!(build_full_dicke(&balanced(10.0, 1.0), space).is_err());
    }

    #[test]
    fn reduced_balanced_is_twisting_with_decay() {
        let s = spin(3);
        let p = balanced(7.0, 1.3);
        let reduced = build_reduced(&p, s).unwrap();
        let lambda = p.twist_rate(s);
        let sf = 3.0;
        assert_abs_diff_eq!(lambda, 2.0 * 7.0 / (sf * (49.0 + 1.69)), epsilon = 1e-15);
        let sx = collective_operator(s, CollectiveOp::Sx, Basis::Z).matrix;
        assert!(max_abs_diff(&reduced.hamiltonian, &(-(&sx * &sx) * c(lambda))) < 1e-14);
        // rate·D[2λ Sx] = Γ D[Sx]
        let emission = &reduced.terms[0];
        let gamma = emission.rate * 4.0;
        assert_abs_diff_eq!(gamma, 1.3 / 7.0 * lambda, epsilon = 1e-15);
        assert_abs_diff_eq!(p.decay_rate(s), gamma, epsilon = 1e-15);
        assert!(max_abs_diff(&emission.operator, &(&sx * c(2.0))) < 1e-14);
        assert_eq!(reduced.terms[1].rate, 0.0);
    }

    #[test]
    fn reduced_hamiltonian_matches_ladder_form() {
        // ω₀Sz - ω(n̄+1)/(ω²+κ²) X†X + ωn̄/(ω²+κ²) XX†, X = (λ₋S₋ + λ₊S₊)/√(2S)
        let s = spin(4);
        let p = ModelParams { omega: 5.0, omega0: 0.4, lambda_plus: 0.3, lambda_minus: 1.1, kappa: 0.7, nbar: 0.6 };
        let op = |w| collective_operator(s, w, Basis::Z).matrix;
        let x = (op(CollectiveOp::Sminus) * c(p.lambda_minus) + op(CollectiveOp::Splus) * c(p.lambda_plus)) * c(1.0 / (8.0f64).sqrt());
        let xd = x.adjoint();
        let den = p.omega * p.omega + p.kappa * p.kappa;
        let h =
            op(CollectiveOp::Sz) * c(p.omega0) - (&xd * &x) * c(p.omega * (p.nbar + 1.0) / den) + (&x * &xd) * c(p.omega * p.nbar / den);
        let reduced = build_reduced(&p, s).unwrap();
        // the two forms differ by a multiple of the identity
        let diff = &reduced.hamiltonian - &h;
        let shift = diff[(0, 0)];
        assert!(max_abs_diff(&diff, &(CMatrix::identity(9, 9) * shift)) < 1e-13);
    }

    #[test]
    fn single_sided_coupling_is_collective_decay() {
        let s = spin(2);
        let p = ModelParams { lambda_plus: 0.0, ..balanced(4.0, 1.0) };
        let m = build_reduced(&p, s).unwrap();
        let sm = collective_operator(s, CollectiveOp::Sminus, Basis::Z).matrix;
        assert!(max_abs_diff(&m.terms[0].operator, &sm) < 1e-15);
        let sol = integrate(&m, &top(s, Basis::Z), &grid(5.0, 5), &IntegrateOptions::default()).unwrap();
        for st in &sol.states {
            assert_abs_diff_eq!(st.trace().re, 1.0, epsilon = 1e-12);
        }
        let sz = collective_operator(s, CollectiveOp::Sz, Basis::Z);
        let last = sol.states.last().unwrap().expectation(&sz).unwrap().re;
        assert!(last < 2.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn liouvillian_is_trace_free(vals in prop::collection::vec(-1.0f64..1.0, 2 * 36),
                                     nbar in 0.0f64..2.0) {
            let s = spin(2);
            let p = ModelParams { nbar, lambda_plus: 0.4, ..balanced(3.0, 0.8) };
            let m = build_full_dicke(&p, StateSpace::spin_boson(s, 1).unwrap()).unwrap();
            let d = m.dimension();
            prop_assert_eq!(d, 10);
            let raw = CMatrix::from_fn(d, d, |i, j| Complex64::new(vals[(i * d + j) % 72], vals[(j * d + i + 7) % 72]));
            let rho = &raw + raw.adjoint();
            prop_assert!(m.trace_defect(&rho) < 1e-10);
            let r = build_reduced(&p, s).unwrap();
            let rr = rho.view((0, 0), (5, 5)).into_owned();
            prop_assert!(r.trace_defect(&rr) < 1e-10);
            let t = build_twisting_in(0.7, 0.3, s, Basis::Z).unwrap();
            prop_assert!(t.trace_defect(&rr) < 1e-10);
        }
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let s = spin(2);
        let p = ModelParams { nbar: 0.5, lambda_plus: 0.3, ..balanced(3.0, 0.8) };
        let m = build_full_dicke(&p, StateSpace::spin_boson(s, 3).unwrap()).unwrap();
        let d = m.dimension();
        let raw = CMatrix::from_fn(d, d, |i, j| Complex64::new((i as f64 * 0.37 + j as f64).sin(), (i * j) as f64 * 0.01));
        let rho = &raw + raw.adjoint();
        let mut sparse = Liouvillian::new(&m);
        assert!(matches!(sparse, Liouvillian::Sparse { .. }));
        let mut a = CMatrix::zeros(d, d);
        sparse.apply(rho.as_slice(), a.as_mut_slice());
        let heff = m.effective_hamiltonian();
        let mut b = (&heff * &rho - &rho * heff.adjoint()) * (-I);
        for t in &m.terms {
            b += &t.operator * &rho * t.operator.adjoint() * c(2.0 * t.rate);
        }
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn zero_generator_keeps_state() {
        let s = spin(3);
        let m = build_twisting(0.0, 0.0, s).unwrap();
        let rho0 = top(s, Basis::X);
        let sol = integrate(&m, &rho0, &grid(3.0, 3), &IntegrateOptions::default()).unwrap();
        for st in &sol.states {
            assert!(max_abs_diff(&st.matrix, &rho0.matrix) < 1e-14);
        }
    }

    #[test]
    fn unitary_twisting_matches_dense_propagator() {
        let s = spin(5);
        let m = build_twisting_in(1.0, 0.0, s, Basis::Z).unwrap();
        let rho0 = top(s, Basis::Z);
        let times = grid(2.0, 8);
        let sol = integrate(&m, &rho0, &times, &IntegrateOptions::default()).unwrap();
        for (t, st) in times.iter().zip(&sol.states) {
            let u = hermitian_function(&m.hamiltonian, |h| Complex64::from_polar(1.0, -h * t));
            let exact = &u * &rho0.matrix * u.adjoint();
            assert!(max_abs_diff(&st.matrix, &exact) < 1e-8, "t={t}");
        }
    }

    #[test]
    fn cat_state_from_twisting() {
        let s = spin(10);
        let m = build_twisting(1.0, 0.0, s).unwrap();
        let sol = integrate(&m, &top(s, Basis::X), &[0.0, FRAC_PI_2], &IntegrateOptions::default()).unwrap();
        let z = sol.states[1].to_basis(Basis::Z, None).unwrap();
        let pops = z.populations();
        assert_abs_diff_eq!(pops[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(pops[20], 0.5, epsilon = 1e-6);
        let cat = make_state(s, StateKind::CatPsi).unwrap();
        assert_abs_diff_eq!(fidelity(&z, &cat).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn weak_decay_cat_regression() {
        let s = spin(20);
        let m = build_twisting(1.0, 0.05, s).unwrap();
        let sol = integrate(&m, &top(s, Basis::X), &[0.0, FRAC_PI_2], &IntegrateOptions::default()).unwrap();
        let z = sol.states[1].to_basis(Basis::Z, None).unwrap();
        let f = fidelity(&z, &make_state(s, StateKind::CatPsi).unwrap()).unwrap();
        assert_abs_diff_eq!(f, 0.490493239830, epsilon = 1e-6);
        // the jump-free branch alone contributes P_0 · F_nojump
        use crate::nojump_analytic::{cat_fidelity, nojump_probability, Time, TwistParams};
        let p0 = nojump_probability(s, &TwistParams::from_ratio(0.05).unwrap(), Time::LambdaT(FRAC_PI_2)).unwrap();
        assert!(f > p0 * cat_fidelity(s, 0.05).unwrap());
        assert!(f < 1.0);
    }

    #[test]
    fn x_and_z_basis_runs_agree() {
        let s = spin(4);
        let times = grid(2.0, 4);
        let opts = IntegrateOptions::default();
        let x = integrate(&build_twisting(1.0, 0.3, s).unwrap(), &top(s, Basis::X), &times, &opts).unwrap();
        let z = integrate(&build_twisting_in(1.0, 0.3, s, Basis::Z).unwrap(), &top(s, Basis::Z), &times, &opts).unwrap();
        for (a, b) in x.states.iter().zip(&z.states) {
            let a = a.to_basis(Basis::Z, None).unwrap();
            assert!(max_abs_diff(&a.matrix, &b.matrix) < 1e-7);
        }
    }

    #[test]
    fn pure_decay_dephases_x_basis() {
        let s = spin(6);
        let m = build_twisting(0.0, 1.0, s).unwrap();
        let sol = integrate(&m, &top(s, Basis::X), &[0.0, 40.0], &IntegrateOptions::default()).unwrap();
        let rho = &sol.states[1];
        let off = rho.matrix.iter().enumerate().filter(|(k, _)| k % 14 != 0).map(|(_, v)| v.norm()).fold(0.0, f64::max);
        assert!(off < 1e-8);
        let p0 = crate::nojump_analytic::dicke0_probability(s).exact;
        assert_abs_diff_eq!(rho.populations()[6], p0, epsilon = 1e-9);
    }

    #[test]
    fn sx_squared_conserved_and_purity_decreasing() {
        let s = spin(5);
        let m = build_twisting(1.0, 0.4, s).unwrap();
        let sol = integrate(&m, &top(s, Basis::X), &grid(3.0, 30), &IntegrateOptions::default()).unwrap();
        let sx2 = collective_operator(s, CollectiveOp::Sx, Basis::X).squared();
        let first = sol.states[0].expectation(&sx2).unwrap().re;
        assert_abs_diff_eq!(first, 2.5, epsilon = 1e-12);
        let mut purity = f64::INFINITY;
        for st in &sol.states {
            assert_abs_diff_eq!(st.expectation(&sx2).unwrap().re, first, epsilon = 1e-9);
            assert!(st.purity() <= purity + 1e-12);
            purity = st.purity();
            assert!(st.hermiticity_defect() < 1e-9);
        }
    }

    #[test]
    fn decoupled_boson_leaves_spin_alone() {
        let s = spin(2);
        let p = ModelParams { lambda_plus: 0.0, lambda_minus: 0.0, ..balanced(5.0, 1.0) };
        let space = StateSpace::spin_boson(s, 4).unwrap();
        let m = build_full_dicke(&p, space).unwrap();
        let x0 = make_state(s, StateKind::Dicke { m: 1, basis: Basis::X }).unwrap();
        let rho0 = spin_boson_thermal(&x0, 4, 0.0).unwrap();
        let sol = integrate(&m, &rho0, &grid(3.0, 6), &IntegrateOptions::default()).unwrap();
        let sz = collective_operator(s, CollectiveOp::Sz, Basis::Z);
        let start = sol.states[0].spin_reduced().unwrap().populations();
        for st in &sol.states {
            let pops = st.spin_reduced().unwrap().populations();
            for (a, b) in pops.iter().zip(&start) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
            assert_abs_diff_eq!(st.boson_number(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(st.expectation(&sz).unwrap().re, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn basis_and_grid_validation() {
        let s = spin(2);
        let m = build_twisting(1.0, 0.0, s).unwrap();
        assert!(matches!(integrate(&m, &top(s, Basis::Z), &[0.0, 1.0], &IntegrateOptions::default()), Err(Error::BasisMismatch)));
        assert!(integrate(&m, &top(s, Basis::X), &[1.0, 0.0], &IntegrateOptions::default()).is_err());
        let mut bad = top(s, Basis::X);
        bad.matrix *= c(2.0);
        assert!(matches!(integrate(&m, &bad, &[0.0, 1.0], &IntegrateOptions::default()), Err(Error::TraceDrift { .. })));
    }

    #[test]
    fn nmax_rule() {
        let s = spin(2);
        assert_eq!(balanced(10.0, 2.0).default_nmax(s), 4);
        let hot = ModelParams { nbar: 1.5, ..balanced(2.0, 1.0) };
        // 8(1.5 + 2/4) = 16
        assert_eq!(hot.default_nmax(s), 16);
        assert!(balanced(10.0, 2.0).dispersive_valid());
        assert!(!balanced(5.0, 2.0).dispersive_valid());
    }
}
