//! Permutation-invariant dynamics of `N` spin-1/2 particles with local
//! (single-particle) dissipation.
//!
//! A permutation-invariant state decomposes as `ρ = ⊕_j ρ̃_j ⊗ 1_{d_j}` over
//! total-spin blocks `j = N/2, N/2-1, …, 0`, where `d_j` counts the copies of
//! the spin-`j` irrep. [`BlockDensity`] stores the weighted blocks
//! `R_j = d_j ρ̃_j`, so `Σ_j Tr R_j = Tr ρ` and collective expectation values
//! are `Σ_j Tr(R_j O_j)`. Within a block, basis index `i` is `m = j - i`.
//!
//! A local channel with rate `r` on single-particle operator `A` adds
//! `(r/2) Σ_n D[A_n]ρ = r Σ_n (A_n ρ A_n† - ½{A_n†A_n, ρ})`. The jump part
//! `Σ_n A_n ρ A_n†` moves weight between neighbouring blocks; its matrix
//! elements follow from coupling the last particle to the remaining `N-1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigh, hermitian_function, trace, CMatrix, RMatrix, I};
use crate::metrics::qfi_spectral_sum;
use crate::ode::{DormandPrince, OdeOptions};
use crate::spin_algebra::{SpinQuantum, SpinState};

/// Largest particle count whose degeneracies stay exact in `u128`.
pub const MAX_PARTICLES: usize = 120;

fn binomial(n: u64, k: i64) -> u128 {
    if k < 0 || k as u64 > n {
        return 0;
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc
}

/// Copies of the spin-`j` irrep among `n` spin-1/2 particles, with `j`
/// given doubled (`two_j = 2j`).
pub fn degeneracy(n: usize, two_j: usize) -> u128 {
    if two_j > n || (n - two_j) % 2 != 0 {
        return 0;
    }
    let k = ((n - two_j) / 2) as i64;
    binomial(n as u64, k) - binomial(n as u64, k - 1)
}

/// Spin `j` matrices `(Sx, Sy, Sz)` for doubled spin `two_j`, `m` descending.
fn spin_matrices(two_j: usize) -> [CMatrix; 3] {
    let d = two_j + 1;
    let j = two_j as f64 / 2.0;
    let m_of = |i: usize| j - i as f64;
    let mut sp = CMatrix::zeros(d, d);
    for i in 1..d {
        let m = m_of(i);
        sp[(i - 1, i)] = c((j * (j + 1.0) - m * (m + 1.0)).sqrt());
    }
    let sm = sp.adjoint();
    let sx = (&sp + &sm) * c(0.5);
    let sy = (&sp - &sm) * (-I * 0.5);
    let sz = CMatrix::from_fn(d, d, |r, col| if r == col { c(m_of(r)) } else { c(0.0) });
    [sx, sy, sz]
}

/// One total-spin block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Block {
    pub j: usize,
    pub degeneracy: u128,
}

impl Block {
    pub fn dim(&self) -> usize {
        2 * self.j + 1
    }
}

/// Block structure for `N` (even) spin-1/2 particles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DickeSpace {
    n: usize,
    blocks: Vec<Block>,
    offsets: Vec<usize>,
}

impl DickeSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n % 2 != 0 {
            return Err(Error::invalid(format!("particle count must be even and positive for an integer collective spin, got {n}")));
        }
        if n > MAX_PARTICLES {
            return Err(Error::invalid(format!("at most {MAX_PARTICLES} particles are supported")));
        }
        let blocks: Vec<Block> = (0..=n / 2).rev().map(|j| Block { j, degeneracy: degeneracy(n, 2 * j) }).collect();
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        for b in &blocks {
            offsets.push(acc);
            acc += b.dim() * b.dim();
        }
        Ok(Self { n, blocks, offsets })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    /// Collective spin `S = N/2` of the symmetric block.
    pub fn collective_spin(&self) -> SpinQuantum {
        SpinQuantum::new((self.n / 2) as u32).expect("n is positive and even")
    }

    /// Blocks ordered from `j = N/2` down to `j = 0`.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// `Σ_j d_j (2j+1)`, which must equal `2^N`.
    pub fn total_dimension(&self) -> u128 {
        self.blocks.iter().map(|b| b.degeneracy * b.dim() as u128).sum()
    }

    /// Number of stored complex entries across all blocks.
    pub fn storage_len(&self) -> usize {
        self.blocks.iter().map(|b| b.dim() * b.dim()).sum()
    }

    fn block_index(&self, j: usize) -> usize {
        self.n / 2 - j
    }
}

/// Degeneracy-weighted block matrices `R_j = d_j ρ̃_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDensity {
    pub space: DickeSpace,
    pub blocks: Vec<CMatrix>,
}

impl BlockDensity {
    pub fn zeros(space: &DickeSpace) -> Self {
        let blocks = space.blocks.iter().map(|b| CMatrix::zeros(b.dim(), b.dim())).collect();
        Self { space: space.clone(), blocks }
    }

    /// Places a pure collective-spin state of `S = N/2` in the symmetric block.
    pub fn from_symmetric(space: &DickeSpace, state: &SpinState) -> Result<Self> {
        if state.spin != space.collective_spin() {
            return Err(Error::DimensionMismatch { expected: space.collective_spin().dim(), found: state.spin.dim() });
        }
        let z = crate::spin_algebra::rotate_basis(state, crate::spin_algebra::Basis::Z);
        let mut rho = Self::zeros(space);
        let psi = z.normalized()?.amplitudes;
        rho.blocks[0] = &psi * psi.adjoint();
        Ok(rho)
    }

    /// `1/2^N` over the full `2^N`-dimensional space.
    pub fn maximally_mixed(space: &DickeSpace) -> Self {
        let total = space.total_dimension() as f64;
        let blocks = space.blocks.iter().map(|b| CMatrix::identity(b.dim(), b.dim()) * c(b.degeneracy as f64 / total)).collect();
        Self { space: space.clone(), blocks }
    }

    pub fn trace(&self) -> f64 {
        self.blocks.iter().map(|b| trace(b).re).sum()
    }

    /// Weight `Tr R_j` of every block.
    pub fn block_populations(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| trace(b).re).collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            *b *= c(factor);
        }
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(|b| hermitian_eigh(b).0.last().copied().unwrap_or(0.0)).fold(f64::INFINITY, f64::min)
    }

    /// Checks unit trace and block positivity.
    pub fn validate(&self, trace_tol: f64, positivity_tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > trace_tol {
            return Err(Error::TraceDrift { trace: tr });
        }
        let min = self.min_eigenvalue();
        if min < -positivity_tol {
            return Err(Error::Positivity(min));
        }
        Ok(())
    }

    fn to_flat(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.space.storage_len());
        for b in &self.blocks {
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    fn from_flat(space: &DickeSpace, y: &[Complex64]) -> Self {
        let blocks = space
            .blocks
            .iter()
            .zip(&space.offsets)
            .map(|(b, &o)| CMatrix::from_column_slice(b.dim(), b.dim(), &y[o..o + b.dim() * b.dim()]))
            .collect();
        Self { space: space.clone(), blocks }
    }

    fn hermitize(&mut self) {
        for b in &mut self.blocks {
            *b = (&*b + b.adjoint()) * c(0.5);
        }
    }
}

/// Collective observables that act block by block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockObservable {
    Sx,
    Sy,
    Sz,
    Sx2,
    Sy2,
    Sz2,
    /// Total spin `S² = Sx² + Sy² + Sz²`.
    S2,
}

impl std::str::FromStr for BlockObservable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "Sx" | "sx" => BlockObservable::Sx,
            "Sy" | "sy" => BlockObservable::Sy,
            "Sz" | "sz" => BlockObservable::Sz,
            "Sx2" | "sx2" | "Sx^2" => BlockObservable::Sx2,
            "Sy2" | "sy2" | "Sy^2" => BlockObservable::Sy2,
            "Sz2" | "sz2" | "Sz^2" => BlockObservable::Sz2,
            "S2" | "s2" | "S^2" => BlockObservable::S2,
            other => return Err(Error::invalid(format!("not a collective observable: {other}"))),
        })
    }
}

impl BlockObservable {
    fn matrix(self, two_j: usize) -> CMatrix {
        let [sx, sy, sz] = spin_matrices(two_j);
        match self {
            BlockObservable::Sx => sx,
            BlockObservable::Sy => sy,
            BlockObservable::Sz => sz,
            BlockObservable::Sx2 => &sx * &sx,
            BlockObservable::Sy2 => &sy * &sy,
            BlockObservable::Sz2 => &sz * &sz,
            BlockObservable::S2 => &sx * &sx + &sy * &sy + &sz * &sz,
        }
    }
}

/// `Σ_j Tr(R_j O_j)`.
pub fn block_expectation(rho: &BlockDensity, op: BlockObservable) -> Complex64 {
    rho.space.blocks.iter().zip(&rho.blocks).map(|(b, r)| trace(&(r * op.matrix(2 * b.j)))).sum()
}

/// [`block_expectation`] with the observable given by name.
pub fn block_expectation_by_name(rho: &BlockDensity, name: &str) -> Result<Complex64> {
    Ok(block_expectation(rho, name.parse()?))
}

/// `<Ψ|ρ|Ψ>` for a target in the symmetric block (`d_{N/2} = 1`).
pub fn block_fidelity(rho: &BlockDensity, target: &SpinState) -> Result<f64> {
    if target.spin != rho.space.collective_spin() {
        return Err(Error::DimensionMismatch { expected: rho.space.collective_spin().dim(), found: target.spin.dim() });
    }
    let z = crate::spin_algebra::rotate_basis(target, crate::spin_algebra::Basis::Z);
    let psi = &z.amplitudes;
    Ok(psi.dotc(&(&rho.blocks[0] * psi)).re.clamp(0.0, 1.0))
}

/// QFI with respect to the collective `Sz`. Each block contributes the
/// spectral sum of its weighted eigenvalues; the degeneracy factor and the
/// `1/d_j` inside `ρ̃_j` cancel because the sum is homogeneous of degree one.
pub fn block_qfi(rho: &BlockDensity) -> f64 {
    rho.space
        .blocks
        .iter()
        .zip(&rho.blocks)
        .map(|(b, r)| {
            let (vals, vecs) = hermitian_eigh(r);
            let vals: Vec<f64> = vals.into_iter().map(|v| v.max(0.0)).collect();
            qfi_spectral_sum(&vals, &vecs, &spin_matrices(2 * b.j)[2])
        })
        .sum()
}

/// Rates of the local channels. Each rate `r` enters as `(r/2) Σ_n D[A_n]`
/// with `A = σz/2` (dephasing), `σ+` (raising) or `σ-` (lowering).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalChannels {
    pub dephasing: f64,
    pub raising: f64,
    pub lowering: f64,
}

impl LocalChannels {
    /// Pure dephasing at rate `ε`.
    pub fn dephasing(epsilon: f64) -> Self {
        Self { dephasing: epsilon, ..Self::default() }
    }

    /// Dephasing, raising and lowering, all at rate `γ_eff`.
    pub fn spontaneous_emission(gamma_eff: f64) -> Self {
        Self { dephasing: gamma_eff, raising: gamma_eff, lowering: gamma_eff }
    }

    pub fn is_zero(&self) -> bool {
        self.dephasing == 0.0 && self.raising == 0.0 && self.lowering == 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, r) in [("dephasing", self.dephasing), ("raising", self.raising), ("lowering", self.lowering)] {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::invalid(format!("{name} rate must be non-negative, got {r}")));
            }
        }
        Ok(())
    }

    /// `(rate, single-particle operator)` in the `(↑, ↓)` basis.
    fn operators(&self) -> Vec<(f64, RMatrix)> {
        let mut out = Vec::new();
        if self.dephasing > 0.0 {
            out.push((self.dephasing, RMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.5])));
        }
        if self.raising > 0.0 {
            out.push((self.raising, RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])));
        }
        if self.lowering > 0.0 {
            out.push((self.lowering, RMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])));
        }
        out
    }
}

/// Columns are the coupled states `|j, m>` of `j₁ ⊗ ½` for `j = j₁ + ½`
/// (first `2j₁+2` columns) and `j = j₁ - ½`, expanded over the product basis
/// `|j₁, m₁>|s>` with index `2·i₁ + s`, `s = 0` for spin up.
fn coupling_matrix(two_j1: usize) -> RMatrix {
    let d1 = two_j1 + 1;
    let mut u = RMatrix::zeros(2 * d1, 2 * d1);
    let tj1 = two_j1 as f64;
    let idx1 = |tm1: i64| ((two_j1 as i64 - tm1) / 2) as usize;
    let mut col = 0;
    for upper in [true, false] {
        let two_j = if upper { two_j1 + 1 } else { two_j1 - 1 };
        let mut tm = two_j as i64;
        while tm >= -(two_j as i64) {
            let a = ((tj1 + tm as f64 + 1.0) / (2.0 * tj1 + 2.0)).sqrt();
            let b = ((tj1 - tm as f64 + 1.0) / (2.0 * tj1 + 2.0)).sqrt();
            let (up, down) = if upper { (a, b) } else { (-b, a) };
            if (tm - 1).abs() <= two_j1 as i64 {
                u[(2 * idx1(tm - 1), col)] = up;
            }
            if (tm + 1).abs() <= two_j1 as i64 {
                u[(2 * idx1(tm + 1) + 1, col)] = down;
            }
            col += 1;
            tm -= 2;
        }
    }
    u
}

/// `weight · M R_src Mᵀ` added into block `dst`.
#[derive(Debug, Clone)]
struct Transfer {
    src: usize,
    dst: usize,
    weight: f64,
    m: CMatrix,
}

/// Generator `dR/dt` for collective twisting `-Λ Sx²`, the no-jump part of
/// collective decay `-Γ{Sx², ρ}` and the local channels.
#[derive(Debug, Clone)]
pub struct BlockGenerator {
    space: DickeSpace,
    /// Per block `G_j = H_j - (i/2) Σ r K_j - iΓ Sx_j²`, used as `-i(GR - RG†)`.
    g: Vec<CMatrix>,
    g_dag: Vec<CMatrix>,
    transfers: Vec<Transfer>,
}

impl BlockGenerator {
    pub fn new(space: &DickeSpace, lambda: f64, gamma: f64, channels: &LocalChannels) -> Result<Self> {
        channels.validate()?;
        if !lambda.is_finite() || !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid("twisting rate must be finite and decay rate non-negative"));
        }
        let n = space.n;
        let nf = n as f64;
        let mut g = Vec::with_capacity(space.blocks.len());
        for b in &space.blocks {
            let [sx, _, sz] = spin_matrices(2 * b.j);
            let sx2 = &sx * &sx;
            let id = CMatrix::identity(b.dim(), b.dim());
            // Σ_n A_n†A_n: N/4 for σz/2, N/2 - Sz for σ+, N/2 + Sz for σ-
            let k = &id * c(channels.dephasing * nf / 4.0)
                + (&id * c(nf / 2.0) - &sz) * c(channels.raising)
                + (&id * c(nf / 2.0) + &sz) * c(channels.lowering);
            g.push(-(&sx2 * c(lambda)) - k * (I * 0.5) - sx2 * (I * gamma));
        }
        let g_dag = g.iter().map(|m| m.adjoint()).collect();

        let mut transfers = Vec::new();
        let ops = channels.operators();
        if !ops.is_empty() {
            // j₁ runs over the half-integer spins of N-1 particles
            let mut two_j1 = 1;
            while two_j1 < n {
                let d_rest = degeneracy(n - 1, two_j1) as f64;
                let u = coupling_matrix(two_j1);
                let d1 = two_j1 + 1;
                let (upper, lower) = (u.columns(0, d1 + 1).into_owned(), u.columns(d1 + 1, d1 - 1).into_owned());
                let coupled = [(two_j1 + 1, upper), (two_j1 - 1, lower)];
                for (rate, a) in &ops {
                    let full = kron_identity_left(d1, a);
                    for (two_src, u_src) in &coupled {
                        for (two_dst, u_dst) in &coupled {
                            let m = u_dst.transpose() * &full * u_src;
                            if m.amax() < 1e-15 {
                                continue;
                            }
                            let src = space.block_index(two_src / 2);
                            let d_src = space.blocks[src].degeneracy as f64;
                            transfers.push(Transfer {
                                src,
                                dst: space.block_index(two_dst / 2),
                                weight: rate * nf * d_rest / d_src,
                                m: m.map(c),
                            });
                        }
                    }
                }
                two_j1 += 2;
            }
        }
        Ok(Self { space: space.clone(), g, g_dag, transfers })
    }

    pub fn space(&self) -> &DickeSpace {
        &self.space
    }

    /// `dR/dt` for a block state.
    pub fn apply(&self, rho: &BlockDensity) -> BlockDensity {
        let y = rho.to_flat();
        let mut dy = vec![Complex64::new(0.0, 0.0); y.len()];
        self.apply_flat(&y, &mut dy);
        BlockDensity::from_flat(&self.space, &dy)
    }

    fn apply_flat(&self, y: &[Complex64], dy: &mut [Complex64]) {
        let sp = &self.space;
        let view = |k: usize| {
            let d = sp.blocks[k].dim();
            nalgebra::DMatrixView::from_slice(&y[sp.offsets[k]..sp.offsets[k] + d * d], d, d)
        };
        for (k, b) in sp.blocks.iter().enumerate() {
            let d = b.dim();
            let r = view(k);
            let mut out = nalgebra::DMatrixViewMut::from_slice(&mut dy[sp.offsets[k]..sp.offsets[k] + d * d], d, d);
            out.gemm(-I, &self.g[k], &r, c(0.0));
            out.gemm(I, &r, &self.g_dag[k], c(1.0));
        }
        for t in &self.transfers {
            let r = view(t.src);
            let tmp = &t.m * r;
            let d = sp.blocks[t.dst].dim();
            let o = sp.offsets[t.dst];
            let mut out = nalgebra::DMatrixViewMut::from_slice(&mut dy[o..o + d * d], d, d);
            out.gemm(c(t.weight), &tmp, &t.m.transpose(), c(1.0));
        }
    }
}

/// `I_{d1} ⊗ A` over the product basis `2·i₁ + s`.
fn kron_identity_left(d1: usize, a: &RMatrix) -> RMatrix {
    let mut out = RMatrix::zeros(2 * d1, 2 * d1);
    for i in 0..d1 {
        for s in 0..2 {
            for sp in 0..2 {
                out[(2 * i + s, 2 * i + sp)] = a[(s, sp)];
            }
        }
    }
    out
}

/// Ordering of the collective no-jump factor and the local exponential.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    /// Half collective factor, full local step, half collective factor.
    #[default]
    Strang,
    /// Collective factor followed by the local step.
    Lie,
}

impl std::str::FromStr for Splitting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strang" => Ok(Splitting::Strang),
            "lie" => Ok(Splitting::Lie),
            other => Err(Error::invalid(format!("unknown splitting {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    /// Largest split step; each output interval is divided evenly.
    pub dt: f64,
    pub splitting: Splitting,
    /// Bound on the step-doubling estimate of the splitting error over the
    /// first step.
    pub split_tolerance: f64,
    /// Tolerances of the inner local exponential.
    pub ode: OdeOptions,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { dt: 1e-2, splitting: Splitting::Strang, split_tolerance: 1e-6, ode: OdeOptions::with_tolerances(1e-10, 1e-12) }
    }
}

/// Renormalized states on the output grid and the conditional norm, i.e. the
/// probability that no collective jump has occurred.
#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub times: Vec<f64>,
    pub states: Vec<BlockDensity>,
    pub norms: Vec<f64>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("time grid must be non-empty, finite and non-decreasing"));
    }
    Ok(())
}

/// `e^{-Γ Sx_j² τ}` per block.
fn nojump_factors(space: &DickeSpace, gamma: f64, tau: f64) -> Vec<CMatrix> {
    space
        .blocks
        .iter()
        .map(|b| {
            let sx = &spin_matrices(2 * b.j)[0];
            hermitian_function(&(sx * sx), |v| c((-gamma * tau * v).exp()))
        })
        .collect()
}

fn sandwich(factors: &[CMatrix], y: &mut [Complex64], space: &DickeSpace) {
    for (k, b) in space.blocks.iter().enumerate() {
        let d = b.dim();
        let o = space.offsets[k];
        let r = CMatrix::from_column_slice(d, d, &y[o..o + d * d]);
        let out = &factors[k] * r * &factors[k];
        y[o..o + d * d].copy_from_slice(out.as_slice());
    }
}

struct Splitter<'a> {
    local: &'a BlockGenerator,
    stepper: DormandPrince,
    gamma: f64,
    splitting: Splitting,
    cache: Option<(f64, Vec<CMatrix>)>,
}

impl Splitter<'_> {
    fn factors(&mut self, tau: f64) -> Vec<CMatrix> {
        match &self.cache {
            Some((t, f)) if *t == tau => f.clone(),
            _ => {
                let f = nojump_factors(&self.local.space, self.gamma, tau);
                self.cache = Some((tau, f.clone()));
                f
            }
        }
    }

    fn step(&mut self, y: &mut [Complex64], t: f64, dt: f64) -> Result<()> {
        let space = self.local.space.clone();
        let collective = self.gamma > 0.0;
        let first = match self.splitting {
            Splitting::Strang => 0.5 * dt,
            Splitting::Lie => dt,
        };
        if collective {
            let f = self.factors(first);
            sandwich(&f, y, &space);
        }
        self.stepper.invalidate();
        let local = self.local;
        let mut rhs = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| local.apply_flat(y, dy);
        self.stepper.advance(&mut rhs, t, t + dt, y, |_, _| Ok(false))?;
        if collective && self.splitting == Splitting::Strang {
            let f = self.factors(0.5 * dt);
            sandwich(&f, y, &space);
        }
        Ok(())
    }
}

fn sum_trace(space: &DickeSpace, y: &[Complex64]) -> f64 {
    space.blocks.iter().zip(&space.offsets).map(|(b, &o)| (0..b.dim()).map(|i| y[o + i * b.dim() + i].re).sum::<f64>()).sum()
}

/// Evolves `rho0` by alternating the collective no-jump factor
/// `e^{-ΓSx²δt} ρ e^{-ΓSx²δt}` with the exponential of twisting plus local
/// channels. States are renormalized at every output time and the lost weight
/// is reported in `norms`.
pub fn split_step_evolve(
    lambda: f64,
    gamma: f64,
    channels: &LocalChannels,
    rho0: &BlockDensity,
    times: &[f64],
    opts: &SplitOptions,
) -> Result<BlockSolution> {
    check_times(times)?;
    if !(opts.dt > 0.0) || !opts.dt.is_finite() {
        return Err(Error::invalid("split step must be positive"));
    }
    rho0.validate(1e-8, 1e-9)?;
    let space = &rho0.space;
    let local = BlockGenerator::new(space, lambda, 0.0, channels)?;
    let mut splitter = Splitter {
        local: &local,
        stepper: DormandPrince::new(space.storage_len(), opts.ode),
        gamma,
        splitting: opts.splitting,
        cache: None,
    };

    let mut y = rho0.to_flat();
    let span = times.last().unwrap() - times[0];
    if gamma > 0.0 && !channels.is_zero() && span > 0.0 {
        let dt = opts.dt.min(span);
        let mut coarse = y.clone();
        splitter.step(&mut coarse, times[0], dt)?;
        let mut fine = y.clone();
        splitter.step(&mut fine, times[0], 0.5 * dt)?;
        splitter.step(&mut fine, times[0] + 0.5 * dt, 0.5 * dt)?;
        let estimate = coarse.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if estimate > opts.split_tolerance {
            return Err(Error::SplitStepTooLarge { dt: opts.dt, estimate });
        }
    }

    let mut norm = 1.0;
    let mut states = Vec::with_capacity(times.len());
    let mut norms = Vec::with_capacity(times.len());
    let mut t = times[0];
    for &t_next in times {
        let span = t_next - t;
        if span > 0.0 {
            let steps = (span / opts.dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for k in 0..steps {
                splitter.step(&mut y, t + k as f64 * h, h)?;
            }
        }
        t = t_next;
        let tr = sum_trace(space, &y);
        if !(tr > 0.0) {
            return Err(Error::Numeric("conditional state lost all weight".into()));
        }
        norm *= tr;
        y.iter_mut().for_each(|v| *v /= tr);
        let mut rho = BlockDensity::from_flat(space, &y);
        rho.hermitize();
        let min = rho.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::Positivity(min));
        }
        y = rho.to_flat();
        states.push(rho);
        norms.push(norm);
    }
    Ok(BlockSolution { times: times.to_vec(), states, norms })
}

/// Integrates the full conditional generator (twisting, no-jump collective
/// decay and local channels together) without splitting.
pub fn evolve_unsplit(
    lambda: f64,
    gamma: f64,
    channels: &LocalChannels,
    rho0: &BlockDensity,
    times: &[f64],
    ode: &OdeOptions,
) -> Result<BlockSolution> {
    check_times(times)?;
    rho0.validate(1e-8, 1e-9)?;
    let space = &rho0.space;
    let generator = BlockGenerator::new(space, lambda, gamma, channels)?;
    let mut stepper = DormandPrince::new(space.storage_len(), *ode);
    let mut rhs = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| generator.apply_flat(y, dy);
    let mut y = rho0.to_flat();
    let mut states = Vec::new();
    let mut norms = Vec::new();
    let mut t = times[0];
    for &t_next in times {
        stepper.advance(&mut rhs, t, t_next, &mut y, |_, _| Ok(false))?;
        t = t_next;
        let tr = sum_trace(space, &y);
        let mut rho = BlockDensity::from_flat(space, &y);
        rho.scale(1.0 / tr);
        rho.hermitize();
        states.push(rho);
        norms.push(tr);
    }
    Ok(BlockSolution { times: times.to_vec(), states, norms })
}

/// Runs the local exponential over the whole interval first and applies the
/// collective no-jump factor for the full duration afterwards.
pub fn evolve_commuted(
    lambda: f64,
    gamma: f64,
    channels: &LocalChannels,
    rho0: &BlockDensity,
    t_final: f64,
    ode: &OdeOptions,
) -> Result<(BlockDensity, f64)> {
    let local = evolve_unsplit(lambda, 0.0, channels, rho0, &[0.0, t_final], ode)?;
    let rho = local.states.last().unwrap();
    let space = &rho0.space;
    let mut y = rho.to_flat();
    sandwich(&nojump_factors(space, gamma, t_final), &mut y, space);
    let tr = sum_trace(space, &y);
    let mut out = BlockDensity::from_flat(space, &y);
    out.scale(1.0 / tr);
    Ok((out, tr))
}
