//! Quantum-jump trajectories of the collective twisting model with jump
//! operator `√(2Γ) Sx`.
//!
//! Every operator involved is diagonal in the X basis, so between jumps the
//! amplitudes evolve exactly as `c_m → c_m e^{(iΛ-Γ)m²δ}`. Jump times come from
//! the waiting-time rule: draw `u ~ U(0,1)` and jump when the squared norm of
//! the unnormalized state falls to `u`. The norm is a sum of decaying
//! exponentials, so the crossing is found by root finding instead of stepping.
//!
//! Times in configs and records are dimensionless: `Λt`, or `Γt` when `Λ = 0`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::density::{DensityMatrix, StateSpace};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector};
use crate::spin_algebra::{rotate_basis, top_column_closed_form, Basis, OperatorMatrix, SpinQuantum, SpinState};

/// Upper bound on `dt · 2ΓS²` (the largest jump rate times the grid step).
pub const MAX_STEP_JUMP_PROBABILITY: f64 = 0.05;
/// Population the dominant `±m` pair must exceed for a cycle to count as held.
pub const SETTLE_POPULATION: f64 = 0.95;
/// Consecutive inter-jump intervals the pair must hold before a cycle is settled.
pub const SETTLE_INTERVALS: usize = 5;
/// Jumps a detection window needs before the rate estimator is trusted.
pub const MIN_WINDOW_JUMPS: usize = 5;

const ROOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub spin: SpinQuantum,
    pub lambda: f64,
    pub gamma: f64,
    /// Final time in `Λt` (or `Γt` when `Λ = 0`).
    pub t_final: f64,
    /// Grid step in the same units; snapshots land on multiples of it.
    pub dt: f64,
    pub seed: u64,
    /// ChaCha stream; ensembles use the trajectory index.
    pub stream: u64,
    /// Grid steps between stored snapshots.
    pub record_stride: usize,
}

impl TrajectoryConfig {
    pub fn new(spin: SpinQuantum, lambda: f64, gamma: f64, t_final: f64, dt: f64) -> Self {
        Self { spin, lambda, gamma, t_final, dt, seed: 0, stream: 0, record_stride: 1 }
    }

    /// Rates in the units of the recorded times: `(Λ, Γ)/Λ`, or `(0, 1)` when `Λ = 0`.
    pub fn scaled_rates(&self) -> (f64, f64) {
        if self.lambda > 0.0 {
            (1.0, self.gamma / self.lambda)
        } else {
            (0.0, 1.0)
        }
    }

    fn steps(&self) -> Result<usize> {
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(Error::invalid(format!("t_final = {} is not a multiple of dt = {}", self.t_final, self.dt)));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.lambda == 0.0 && self.gamma == 0.0 {
            return Err(Error::invalid("lambda and gamma cannot both vanish"));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::invalid(format!("t_final must be non-negative, got {}", self.t_final)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("record_stride must be at least 1"));
        }
        let s2 = (self.spin.s() * self.spin.s()) as f64;
        let peak = self.dt * 2.0 * self.scaled_rates().1 * s2;
        if self.gamma > 0.0 && peak >= MAX_STEP_JUMP_PROBABILITY {
            return Err(Error::invalid(format!("dt · 2ΓS² = {peak:.3e} must stay below {MAX_STEP_JUMP_PROBABILITY}")));
        }
        self.steps().map(|_| ())
    }

    fn same_physics(&self, other: &Self) -> bool {
        self.spin == other.spin
            && self.lambda == other.lambda
            && self.gamma == other.gamma
            && self.t_final == other.t_final
            && self.dt == other.dt
            && self.record_stride == other.record_stride
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    /// Normalized, X basis.
    pub state: SpinState,
}

/// Post-jump overlaps with `|S,±m>_x` for the pair of interest (the settled
/// cycle, or the dominant pair right after the jump when nothing settled),
/// with the twisting phase `e^{iΛm²t}` removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub m: u32,
    pub overlap_plus: Complex64,
    pub overlap_minus: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cycle {
    pub m: u32,
    /// Start of the first interval of the holding streak.
    pub settle_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub config: TrajectoryConfig,
    pub snapshots: Vec<Snapshot>,
    pub jump_times: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    pub cycle: Option<Cycle>,
    pub final_state: SpinState,
    /// `|<ψ|S,m>_x|²` at `t_final`, `m` descending.
    pub final_overlaps: Vec<f64>,
}

impl TrajectoryRecord {
    /// Number of jumps in `[from, to)`.
    pub fn jumps_between(&self, from: f64, to: f64) -> usize {
        self.jump_times.iter().filter(|&&t| t >= from && t < to).count()
    }

    pub fn first_jump(&self) -> Option<f64> {
        self.jump_times.first().copied()
    }
}

/// Exactly propagated amplitudes, anchored at the last jump.
struct Propagator {
    spin: SpinQuantum,
    lambda: f64,
    gamma: f64,
    anchor: f64,
    /// Normalized amplitudes at `anchor`.
    amps: Vec<Complex64>,
    m2: Vec<f64>,
}

impl Propagator {
    fn new(spin: SpinQuantum, lambda: f64, gamma: f64) -> Self {
        let amps = top_column_closed_form(spin).into_iter().map(c).collect();
        let m2 = spin.m_values().map(|m| (m * m) as f64).collect();
        Self { spin, lambda, gamma, anchor: 0.0, amps, m2 }
    }

    /// Unnormalized amplitudes at `t ≥ anchor`.
    fn at(&self, t: f64) -> Vec<Complex64> {
        let delta = t - self.anchor;
        self.amps
            .iter()
            .zip(&self.m2)
            .map(|(a, &m2)| a * Complex64::from_polar((-self.gamma * m2 * delta).exp(), (self.lambda * m2 * delta).rem_euclid(TAU)))
            .collect()
    }

    fn squared_norm(&self, delta: f64) -> f64 {
        self.amps.iter().zip(&self.m2).map(|(a, &m2)| a.norm_sqr() * (-2.0 * self.gamma * m2 * delta).exp()).sum()
    }

    /// Time after `anchor` at which the squared norm reaches `u`, or `None`
    /// when the non-decaying part alone stays above `u`.
    fn waiting_time(&self, u: f64) -> Option<f64> {
        let floor: f64 = self.amps.iter().zip(&self.m2).filter(|(_, &m2)| self.gamma * m2 == 0.0).map(|(a, _)| a.norm_sqr()).sum();
        if floor >= u {
            return None;
        }
        let mut hi = 1.0 / (2.0 * self.gamma).max(f64::MIN_POSITIVE);
        while self.squared_norm(hi) > u {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut x = 0.5 * hi;
        for _ in 0..200 {
            let f = self.squared_norm(x) - u;
            if f > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let slope: f64 = self
                .amps
                .iter()
                .zip(&self.m2)
                .map(|(a, &m2)| -2.0 * self.gamma * m2 * a.norm_sqr() * (-2.0 * self.gamma * m2 * x).exp())
                .sum();
            let newton = if slope < 0.0 { x - f / slope } else { f64::NAN };
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - x).abs() <= ROOT_TOLERANCE * x.max(1.0) || hi - lo <= ROOT_TOLERANCE * hi.max(1.0) {
                return Some(next);
            }
            x = next;
        }
        Some(x)
    }

    /// Applies `Sx` at time `t` and renormalizes.
    fn jump(&mut self, t: f64) -> Result<()> {
        let mut amps = self.at(t);
        for (a, m) in amps.iter_mut().zip(self.spin.m_values()) {
            *a *= m as f64;
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numeric("jump annihilated the state".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        self.amps = amps;
        self.anchor = t;
        Ok(())
    }

    fn state(&self, t: f64) -> Result<SpinState> {
        SpinState::new(self.spin, Basis::X, CVector::from_vec(self.at(t)))?.normalized()
    }

    /// Phase-stripped normalized amplitudes at `t`.
    fn stripped(&self, t: f64) -> Vec<Complex64> {
        let amps = self.at(t);
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        strip_phase(&amps, &self.m2, self.lambda, t).into_iter().map(|a| a / norm).collect()
    }
}

fn strip_phase(amps: &[Complex64], m2: &[f64], lambda: f64, t: f64) -> Vec<Complex64> {
    amps.iter().zip(m2).map(|(a, &m2)| a * Complex64::from_polar(1.0, -(lambda * m2 * t).rem_euclid(TAU))).collect()
}

/// Population of each `±m` pair, `m = 0..=S`.
pub fn pair_populations(state: &SpinState) -> Vec<f64> {
    let x = rotate_basis(state, Basis::X);
    let spin = x.spin;
    (0..=spin.s())
        .map(|m| {
            let p = x.amplitudes[spin.index_of(m)].norm_sqr();
            if m == 0 {
                p
            } else {
                p + x.amplitudes[spin.index_of(-m)].norm_sqr()
            }
        })
        .collect()
}

fn pair_populations_of(spin: SpinQuantum, amps: &[Complex64]) -> Vec<f64> {
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    (0..=spin.s())
        .map(|m| {
            let p = amps[spin.index_of(m)].norm_sqr();
            let p = if m == 0 { p } else { p + amps[spin.index_of(-m)].norm_sqr() };
            p / total
        })
        .collect()
}

/// The `±m` pair (`m ≥ 1`) holding more than [`SETTLE_POPULATION`].
fn holding_pair(pairs: &[f64]) -> Option<u32> {
    pairs.iter().enumerate().skip(1).find(|(_, &p)| p > SETTLE_POPULATION).map(|(m, _)| m as u32)
}

/// `Sx|ψ>` renormalized; the jump of the collective decay channel.
pub fn apply_jump(state: &SpinState) -> Result<SpinState> {
    let mut x = rotate_basis(state, Basis::X);
    for (a, m) in x.amplitudes.iter_mut().zip(state.spin.m_values()) {
        *a *= m as f64;
    }
    x.normalized()
}

/// Streak of consecutive intervals in which one pair holds.
#[derive(Default)]
struct SettleTracker {
    current: Option<(u32, f64, usize)>,
}

impl SettleTracker {
    /// Interval `[start, end]` with pair populations at both ends.
    fn interval(&mut self, start: f64, at_start: &[f64], at_end: &[f64]) {
        let held = match (holding_pair(at_start), holding_pair(at_end)) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        };
        self.current = match (held, self.current) {
            (Some(m), Some((cm, since, n))) if cm == m => Some((m, since, n + 1)),
            (Some(m), _) => Some((m, start, 1)),
            (None, _) => None,
        };
    }

    fn cycle(&self) -> Option<Cycle> {
        match self.current {
            Some((m, settle_time, n)) if n >= SETTLE_INTERVALS => Some(Cycle { m, settle_time }),
            _ => None,
        }
    }
}

/// One trajectory from `|S,S>_z`.
pub fn run_trajectory(cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let spin = cfg.spin;
    let (lambda, gamma) = cfg.scaled_rates();
    let steps = cfg.steps()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);

    let mut prop = Propagator::new(spin, lambda, gamma);
    let mut grid = (0..=steps)
        .filter(|k| k % cfg.record_stride == 0 || *k == steps)
        .map(|k| if k == steps { cfg.t_final } else { k as f64 * cfg.dt })
        .peekable();
    let mut snapshots = Vec::new();
    let mut jump_times = Vec::new();
    let mut stripped_after = Vec::new();
    let mut tracker = SettleTracker::default();
    let mut interval_start = (0.0, pair_populations_of(spin, &prop.amps));

    loop {
        let u = 1.0 - rng.random::<f64>();
        let next = prop.waiting_time(u).map(|d| prop.anchor + d).filter(|&t| t <= cfg.t_final);
        let horizon = next.unwrap_or(cfg.t_final);
        while let Some(&t) = grid.peek() {
            if t > horizon || (next.is_some() && t == horizon) {
                break;
            }
            snapshots.push(Snapshot { time: t, state: prop.state(t)? });
            grid.next();
        }
        let Some(t_jump) = next else { break };
        let before = pair_populations_of(spin, &prop.at(t_jump));
        if !jump_times.is_empty() {
            tracker.interval(interval_start.0, &interval_start.1, &before);
        }
        prop.jump(t_jump)?;
        jump_times.push(t_jump);
        stripped_after.push(prop.stripped(t_jump));
        interval_start = (t_jump, pair_populations_of(spin, &prop.amps));
    }
    if !jump_times.is_empty() && interval_start.0 < cfg.t_final {
        tracker.interval(interval_start.0, &interval_start.1, &pair_populations_of(spin, &prop.at(cfg.t_final)));
    }
    let cycle = tracker.cycle();

    let jumps = jump_times
        .iter()
        .zip(&stripped_after)
        .map(|(&time, amps)| {
            let m = match cycle {
                Some(cy) => cy.m,
                None => dominant_pair(&pair_populations_of(spin, amps)),
            };
            JumpEvent {
                time,
                m,
                overlap_plus: amps[spin.index_of(m as i64)].conj(),
                overlap_minus: amps[spin.index_of(-(m as i64))].conj(),
            }
        })
        .collect();
    let final_state = prop.state(cfg.t_final)?;
    let final_overlaps = final_state.populations();
    Ok(TrajectoryRecord { config: cfg.clone(), snapshots, jump_times, jumps, cycle, final_state, final_overlaps })
}

/// Largest pair population among `m ≥ 1` (`m = 0` is never a cycle).
fn dominant_pair(pairs: &[f64]) -> u32 {
    pairs.iter().enumerate().skip(1).fold((0usize, f64::NEG_INFINITY), |best, (m, &p)| if p > best.1 { (m, p) } else { best }).0 as u32
}

/// Overlaps `<ψ|S,m>_x` with the twisting phase removed, `m` descending.
pub fn stripped_overlaps(snapshot: &Snapshot, lambda_scaled: f64) -> Vec<Complex64> {
    let x = rotate_basis(&snapshot.state, Basis::X);
    let m2: Vec<f64> = x.spin.m_values().map(|m| (m * m) as f64).collect();
    strip_phase(x.amplitudes.as_slice(), &m2, lambda_scaled, snapshot.time).into_iter().map(|a| a.conj()).collect()
}

/// `count` configurations sharing `base` physics and seed, streams `0..count`.
pub fn ensemble_configs(base: &TrajectoryConfig, count: usize) -> Vec<TrajectoryConfig> {
    (0..count as u64).map(|stream| TrajectoryConfig { stream, ..base.clone() }).collect()
}

/// Runs the configurations in parallel; output order follows the input.
pub fn run_ensemble(cfgs: &[TrajectoryConfig]) -> Result<Vec<TrajectoryRecord>> {
    if let Some(first) = cfgs.first() {
        if let Some(bad) = cfgs.iter().find(|c| !c.same_physics(first)) {
            return Err(Error::invalid(format!("ensemble mixes physics: {bad:?} vs {first:?}")));
        }
    }
    cfgs.par_iter().map(run_trajectory).collect()
}

fn check_grids(records: &[TrajectoryRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Err(Error::invalid("empty ensemble"));
    };
    for r in records {
        if !r.config.same_physics(&first.config) || r.snapshots.len() != first.snapshots.len() {
            return Err(Error::invalid("records do not share physics and snapshot grid"));
        }
    }
    Ok(())
}

/// Mean of `|ψ><ψ|` over trajectories at each snapshot time.
pub fn average_records(records: &[TrajectoryRecord]) -> Result<Vec<DensityMatrix>> {
    check_grids(records)?;
    let spin = records[0].config.spin;
    let n = spin.dim();
    let weight = c(1.0 / records.len() as f64);
    (0..records[0].snapshots.len())
        .map(|k| {
            let sum = records.iter().fold(CMatrix::zeros(n, n), |acc, r| {
                let psi = &r.snapshots[k].state.amplitudes;
                acc + psi * psi.adjoint()
            });
            DensityMatrix::new(StateSpace::SpinOnly { spin, basis: Basis::X }, sum * weight)
        })
        .collect()
}

/// Runs the ensemble and averages it.
pub fn ensemble_average(cfgs: &[TrajectoryConfig]) -> Result<Vec<DensityMatrix>> {
    average_records(&run_ensemble(cfgs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub time: f64,
    pub mean: f64,
    pub standard_error: f64,
}

/// Ensemble mean and standard error of `<ψ|O|ψ>` at each snapshot time.
pub fn observable_statistics(records: &[TrajectoryRecord], op: &OperatorMatrix) -> Result<Vec<MeanEstimate>> {
    check_grids(records)?;
    let n = records.len() as f64;
    (0..records[0].snapshots.len())
        .map(|k| {
            let values = records
                .iter()
                .map(|r| Ok(rotate_basis(&r.snapshots[k].state, op.basis).expectation(op)?.re))
                .collect::<Result<Vec<f64>>>()?;
            let mean = values.iter().sum::<f64>() / n;
            let var = if n > 1.0 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            Ok(MeanEstimate { time: records[0].snapshots[k].time, mean, standard_error: (var / n).sqrt() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleEstimate {
    pub m: u32,
    /// Fraction of window snapshots in which the pair holds more than
    /// [`SETTLE_POPULATION`].
    pub confidence: f64,
}

/// Cycle over the trailing `window`, estimated from the dominant pair of the
/// window snapshots and from the jump rate `2Γm²`. Returns `None` unless both
/// estimates agree and the window holds at least [`MIN_WINDOW_JUMPS`] jumps.
pub fn detect_cycle(record: &TrajectoryRecord, window: f64) -> Option<CycleEstimate> {
    let t_end = record.config.t_final;
    let start = t_end - window;
    if !(window > 0.0) || start < 0.0 {
        return None;
    }
    let jumps = record.jump_times.iter().filter(|&&t| t > start && t <= t_end).count();
    if jumps < MIN_WINDOW_JUMPS {
        return None;
    }
    let gamma = record.config.scaled_rates().1;
    let by_rate = (jumps as f64 / (2.0 * gamma * window)).sqrt().round() as u32;

    let in_window: Vec<Vec<f64>> = record.snapshots.iter().filter(|s| s.time >= start).map(|s| pair_populations(&s.state)).collect();
    if in_window.is_empty() {
        return None;
    }
    let size = in_window[0].len();
    let mean: Vec<f64> = (0..size).map(|m| in_window.iter().map(|p| p[m]).sum::<f64>() / in_window.len() as f64).collect();
    let by_population = dominant_pair(&mean);
    if by_population != by_rate {
        return None;
    }
    let held = in_window.iter().filter(|p| p[by_population as usize] > SETTLE_POPULATION).count();
    Some(CycleEstimate { m: by_population, confidence: held as f64 / in_window.len() as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRate {
    pub m: u32,
    pub trajectories: usize,
    pub jumps: usize,
    /// Total settled time, in the record's time units.
    pub duration: f64,
    pub rate: f64,
    /// `2Γm²`.
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstJumpRow {
    pub m: u32,
    pub count: usize,
    pub mean_first_jump: f64,
    pub median_first_jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleStatistics {
    pub spin: u32,
    pub gamma_scaled: f64,
    pub total: usize,
    /// Trajectories that never jumped and head for `|S,0>_x`.
    pub never_jumped: usize,
    /// Trajectories that jumped but never settled.
    pub unsettled: usize,
    pub counts: BTreeMap<u32, usize>,
    pub rates: Vec<CycleRate>,
    pub first_jump: Vec<FirstJumpRow>,
}

pub fn cycle_statistics(records: &[TrajectoryRecord]) -> Result<CycleStatistics> {
    let Some(first) = records.first() else {
        return Err(Error::invalid("no records"));
    };
    let spin = first.config.spin;
    let gamma = first.config.scaled_rates().1;
    let mut counts = BTreeMap::new();
    let mut rates: BTreeMap<u32, CycleRate> = BTreeMap::new();
    let mut first_jumps: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let (mut never_jumped, mut unsettled) = (0, 0);
    for r in records {
        if r.config.spin != spin || r.config.scaled_rates().1 != gamma {
            return Err(Error::invalid("records mix physics"));
        }
        match (r.jump_times.is_empty(), r.cycle) {
            (true, _) => never_jumped += 1,
            (false, None) => unsettled += 1,
            (false, Some(cy)) => {
                *counts.entry(cy.m).or_insert(0) += 1;
                let m2 = (cy.m * cy.m) as f64;
                let entry = rates.entry(cy.m).or_insert_with(|| CycleRate {
                    m: cy.m,
                    trajectories: 0,
                    jumps: 0,
                    duration: 0.0,
                    rate: 0.0,
                    expected: 2.0 * gamma * m2,
                });
                entry.trajectories += 1;
                entry.jumps += r.jumps_between(cy.settle_time, f64::INFINITY);
                entry.duration += r.config.t_final - cy.settle_time;
                first_jumps.entry(cy.m).or_default().push(r.jump_times[0]);
            }
        }
    }
    let rates = rates
        .into_values()
        .map(|mut r| {
            r.rate = if r.duration > 0.0 { r.jumps as f64 / r.duration } else { 0.0 };
            r
        })
        .collect();
    let first_jump = first_jumps
        .into_iter()
        .map(|(m, mut times)| {
            times.sort_by(f64::total_cmp);
            let n = times.len();
            let median = if n % 2 == 1 { times[n / 2] } else { 0.5 * (times[n / 2 - 1] + times[n / 2]) };
            FirstJumpRow { m, count: n, mean_first_jump: times.iter().sum::<f64>() / n as f64, median_first_jump: median }
        })
        .collect();
    Ok(CycleStatistics {
        spin: spin.value(),
        gamma_scaled: gamma,
        total: records.len(),
        never_jumped,
        unsettled,
        counts,
        rates,
        first_jump,
    })
}

/// Probability `2D²_{m,S}` of ending in cycle `m`, for `m = 1..=S`.
pub fn cycle_weights(spin: SpinQuantum) -> Vec<f64> {
    let top = top_column_closed_form(spin);
    (1..=spin.s()).map(|m| 2.0 * top[spin.index_of(m)].powi(2)).collect()
}

/// Relative populations of `|S,m>_x` after `j` jumps at `t = 0`,
/// `(m^j D_{m,S})²` normalized, `m` descending.
pub fn immediate_jump_weights(spin: SpinQuantum, jumps: u32) -> Vec<f64> {
    let top = top_column_closed_form(spin);
    let raw: Vec<f64> = spin.m_values().zip(&top).map(|(m, d)| ((m as f64).powi(jumps as i32) * d).powi(2)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `(first m, last m, observed, expected)` after merging sparse bins.
    pub bins: Vec<(u32, u32, usize, f64)>,
}

impl CycleStatistics {
    /// Settled-cycle histogram against `2D²_{m,S}`, renormalized over `m ≥ 1`.
    /// Adjacent bins are merged from the top until each expects at least 5.
    pub fn chi_square(&self) -> Result<ChiSquareTest> {
        let spin = SpinQuantum::new(self.spin)?;
        let weights = cycle_weights(spin);
        let total_weight: f64 = weights.iter().sum();
        let settled: usize = self.counts.values().sum();
        if settled == 0 {
            return Err(Error::invalid("no settled trajectories"));
        }
        let mut bins: Vec<(u32, u32, usize, f64)> = Vec::new();
        let mut pending: Option<(u32, u32, usize, f64)> = None;
        for m in (1..=self.spin).rev() {
            let observed = self.counts.get(&m).copied().unwrap_or(0);
            let expected = settled as f64 * weights[m as usize - 1] / total_weight;
            let bin = match pending.take() {
                Some((_, hi, o, e)) => (m, hi, o + observed, e + expected),
                None => (m, m, observed, expected),
            };
            if bin.3 >= 5.0 {
                bins.push(bin);
            } else {
                pending = Some(bin);
            }
        }
        if let Some((lo, _, o, e)) = pending {
            match bins.last_mut() {
                Some(last) => {
                    last.0 = lo;
                    last.2 += o;
                    last.3 += e;
                }
                None => bins.push((lo, lo, o, e)),
            }
        }
        bins.reverse();
        if bins.len() < 2 {
            return Err(Error::invalid("too few populated bins for a chi-square test"));
        }
        let statistic = bins.iter().map(|&(_, _, o, e)| (o as f64 - e).powi(2) / e).sum();
        let dof = bins.len() - 1;
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(ChiSquareTest { statistic, dof, p_value: 1.0 - dist.cdf(statistic), bins })
    }
}

/// Whether the `-m` overlap flips sign relative to the `+m` overlap at every
/// jump from `since` on.
pub fn alternates_sign(jumps: &[JumpEvent], since: f64) -> bool {
    let signs: Vec<f64> = jumps.iter().filter(|j| j.time >= since).map(|j| (j.overlap_minus * j.overlap_plus.conj()).re.signum()).collect();
    signs.windows(2).all(|w| w[0] * w[1] < 0.0)
}
