//! One function per experiment. Each turns typed settings into tables and a
//! summary; nothing here touches the filesystem.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::config::*;
use super::table::{Cell, Table};
use super::{Category, CliError};
use crate::density::DensityMatrix;
use crate::frameworks::{feasibility_report, Framework};
use crate::local_dissipation::{
    block_fidelity, block_qfi, split_step_evolve, BlockDensity, DickeSpace, LocalChannels, SplitOptions, MAX_PARTICLES,
};
use crate::master_equation::{build_twisting, compare_full_and_reduced, integrate, IntegrateOptions, ModelParams};
use crate::metrics::{fidelity_any_basis, qfi, qfi_pure};
use crate::nojump_analytic::{dicke0_probability, nojump_probability, nojump_state, CatCurve, Time, TwistParams};
use crate::ode::OdeOptions;
use crate::spin_algebra::{
    collective_operator, make_state, rotate_basis, Basis, BasisRotation, CollectiveOp, SpinQuantum, SpinState, StateKind,
};
use crate::trajectories::{
    cycle_statistics, ensemble_configs, observable_statistics, run_ensemble, stripped_overlaps, TrajectoryConfig, TrajectoryRecord,
};

/// Largest spin integrated with the dense master equation.
pub const MAX_ME_SPIN: u32 = 60;
/// Memory budget for stored trajectory snapshots, bytes.
pub const SNAPSHOT_BUDGET: f64 = 4.0 * 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// The first table is the experiment's primary output.
    pub tables: Vec<Table>,
    pub results: Map<String, Value>,
    pub checks: Vec<Check>,
    pub grid_requested: usize,
}

impl Outcome {
    fn new(grid_requested: usize) -> Self {
        Self { grid_requested, ..Default::default() }
    }

    fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.into(), value);
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match &cfg.settings {
        Settings::Fig1(s) => fig1(s),
        Settings::Fig2(s) => fig2(s),
        Settings::Fig3(s) => fig3(s),
        Settings::Fig4(s) => fig4(s),
        Settings::Fig5(s) => fig5(s),
        Settings::Fig6(s) => fig6(s),
        Settings::Fig7(s) => fig7(s, cfg.seed),
        Settings::Nojump(s) => nojump(s),
        Settings::Mesolve(s) => match s.model {
            MesolveModel::Twisting => mesolve_twisting(&s.twisting),
            MesolveModel::Elimination => elimination(&s.elimination),
        },
        Settings::Trajectories(s) => trajectories(s, cfg.seed),
        Settings::Params(s) => params(s),
        Settings::Dicke0(s) => dicke0(s),
    }
}

fn spin(s: u32) -> Result<SpinQuantum, CliError> {
    Ok(SpinQuantum::new(s)?)
}

fn me_spin(s: u32) -> Result<SpinQuantum, CliError> {
    if s > MAX_ME_SPIN {
        return Err(CliError::new(Category::Limit, format!("master-equation runs are limited to S ≤ {MAX_ME_SPIN}, got {s}")));
    }
    spin(s)
}

fn block_space(s: u32) -> Result<DickeSpace, CliError> {
    let n = 2 * s as usize;
    if n > MAX_PARTICLES {
        return Err(CliError::new(Category::Limit, format!("block evolution is limited to N ≤ {MAX_PARTICLES} particles, got {n}")));
    }
    Ok(DickeSpace::new(n)?)
}

fn ratio(value: f64, what: &str) -> Result<f64, CliError> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(CliError::config(format!("{what} must be finite and non-negative, got {value}")));
    }
    Ok(value)
}

fn time_grid(sweep: &Sweep) -> Result<Vec<f64>, CliError> {
    let times = sweep.points("times")?;
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(CliError::config("times must be non-negative and non-decreasing"));
    }
    Ok(times)
}

/// Pure-state runs keep eigenvalues at zero; the default tolerances let
/// them drift past the QFI positivity threshold over `Λt = 2π`.
fn tight() -> IntegrateOptions {
    IntegrateOptions { ode: OdeOptions::with_tolerances(1e-12, 1e-14), ..IntegrateOptions::default() }
}

fn top_z(spin: SpinQuantum) -> SpinState {
    SpinState::basis_state(spin, Basis::Z, spin.s()).expect("m = S is valid")
}

fn index_near(values: &[f64], target: f64) -> Option<usize> {
    values.iter().position(|&v| (v - target).abs() <= 1e-12 * target.max(1.0))
}

/// Figures of merit along a master-equation run of the twisting model.
struct TwistingRow {
    pop_up: f64,
    pop_down: f64,
    pop_cat: f64,
    qfi_over_4s2: f64,
    sz: f64,
    sx2: f64,
}

fn twisting_rows(spin: SpinQuantum, gamma_ratio: f64, times: &[f64]) -> Result<Vec<TwistingRow>, CliError> {
    let model = build_twisting(1.0, gamma_ratio, spin)?;
    let rho0 = DensityMatrix::from_pure(&rotate_basis(&top_z(spin), Basis::X));
    // the integrator starts at the first grid time, so anchor the grid at 0
    let mut grid = vec![0.0];
    grid.extend_from_slice(times);
    let sol = integrate(&model, &rho0, &grid, &tight())?;
    let rotation = BasisRotation::new(spin);
    let cat = make_state(spin, StateKind::CatPsi)?;
    let sz = collective_operator(spin, CollectiveOp::Sz, Basis::Z);
    let sx2 = collective_operator(spin, CollectiveOp::Sx, Basis::X).squared();
    let s = spin.s() as f64;
    sol.states[1..]
        .iter()
        .map(|rho_x| {
            let rho = rho_x.to_basis(Basis::Z, Some(&rotation))?;
            let pops = rho.populations();
            Ok(TwistingRow {
                pop_up: pops[0],
                pop_down: pops[pops.len() - 1],
                pop_cat: fidelity_any_basis(&rho, &cat)?,
                qfi_over_4s2: qfi(&rho, &sz)? / (4.0 * s * s),
                sz: rho.expectation(&sz)?.re,
                sx2: rho_x.expectation(&sx2)?.re,
            })
        })
        .collect::<crate::Result<Vec<_>>>()
        .map_err(Into::into)
}

fn half_pi_summary(out: &mut Outcome, times: &[f64], rows: &[TwistingRow], gamma_ratio: f64) {
    let Some(k) = index_near(times, FRAC_PI_2) else { return };
    let r = &rows[k];
    out.result(
        "at_lambda_t_half_pi",
        json!({
            "pop_up_z": r.pop_up,
            "pop_down_z": r.pop_down,
            "pop_cat": r.pop_cat,
            "qfi_over_4s2": r.qfi_over_4s2,
        }),
    );
    if gamma_ratio == 0.0 {
        out.checks.push(Check::new(
            "cat_reached_at_half_pi",
            r.pop_cat >= 0.999 && (r.qfi_over_4s2 - 1.0).abs() <= 1e-3,
            format!("pop_cat = {:.6}, qfi/4S² = {:.6}", r.pop_cat, r.qfi_over_4s2),
        ));
    }
}

fn fig1(cfg: &Fig1) -> Result<Outcome, CliError> {
    let spin = me_spin(cfg.spin)?;
    let gamma = ratio(cfg.gamma_ratio, "gamma_ratio")?;
    let times = time_grid(&cfg.times)?;
    let rows = twisting_rows(spin, gamma, &times)?;
    let mut out = Outcome::new(times.len());
    let mut t = Table::new("fig1", &["lambda_t[1]", "pop_up_z[1]", "pop_down_z[1]", "pop_cat[1]", "qfi_over_4s2[1]"]);
    for (time, r) in times.iter().zip(&rows) {
        t.push(vec![(*time).into(), r.pop_up.into(), r.pop_down.into(), r.pop_cat.into(), r.qfi_over_4s2.into()]);
    }
    half_pi_summary(&mut out, &times, &rows, gamma);
    out.tables.push(t);
    Ok(out)
}

fn mesolve_twisting(cfg: &Twisting) -> Result<Outcome, CliError> {
    let spin = me_spin(cfg.spin)?;
    let gamma = ratio(cfg.gamma_ratio, "gamma_ratio")?;
    let times = time_grid(&cfg.times)?;
    let rows = twisting_rows(spin, gamma, &times)?;
    let mut out = Outcome::new(times.len());
    let mut t = Table::new("mesolve", &["lambda_t[1]", "pop_up_z[1]", "pop_down_z[1]", "pop_cat[1]", "qfi_over_4s2[1]", "sz[1]", "sx2[1]"]);
    for (time, r) in times.iter().zip(&rows) {
        t.push(vec![
            (*time).into(),
            r.pop_up.into(),
            r.pop_down.into(),
            r.pop_cat.into(),
            r.qfi_over_4s2.into(),
            r.sz.into(),
            r.sx2.into(),
        ]);
    }
    half_pi_summary(&mut out, &times, &rows, gamma);
    out.tables.push(t);
    Ok(out)
}

fn elimination(cfg: &Elimination) -> Result<Outcome, CliError> {
    let spin = me_spin(cfg.spin)?;
    let times = time_grid(&cfg.times)?;
    if cfg.omega_ratios.is_empty() {
        return Err(CliError::config("omega_ratios is empty"));
    }
    let initial = top_z(spin);
    let reports = cfg
        .omega_ratios
        .par_iter()
        .map(|&omega| {
            let params = ModelParams {
                omega,
                omega0: cfg.omega0_ratio,
                lambda_plus: 1.0,
                lambda_minus: 1.0,
                kappa: cfg.kappa_ratio,
                nbar: cfg.nbar,
            };
            params.validate()?;
            let lambda = params.twist_rate(spin);
            if !(lambda > 0.0) {
                return Err(crate::Error::invalid(format!("omega = {omega} gives no twisting")));
            }
            let physical: Vec<f64> = times.iter().map(|t| t / lambda).collect();
            compare_full_and_reduced(&params, &initial, &physical, &IntegrateOptions::default())
        })
        .collect::<crate::Result<Vec<_>>>()?;

    let mut out = Outcome::new(times.len() * cfg.omega_ratios.len());
    let mut t = Table::new("elimination", &["omega_over_lambda[1]", "lambda_t[1]", "time[1/lambda]", "trace_distance[1]", "nmax[1]"]);
    let mut maxima = Vec::new();
    for (omega, report) in cfg.omega_ratios.iter().zip(&reports) {
        for ((tau, time), d) in times.iter().zip(&report.times).zip(&report.trace_distance) {
            t.push(vec![(*omega).into(), (*tau).into(), (*time).into(), (*d).into(), report.nmax.into()]);
        }
        maxima.push(json!({ "omega_over_lambda": omega, "max_trace_distance": report.max_distance(), "nmax": report.nmax, "converged": report.converged }));
        if !report.converged {
            out.checks.push(Check::new("truncation_converged", false, format!("omega/lambda = {omega}, nmax = {}", report.nmax)));
        }
    }
    let ascending = cfg.omega_ratios.windows(2).all(|w| w[1] > w[0]);
    if ascending && reports.len() > 1 {
        let decreasing = reports.windows(2).all(|w| w[1].max_distance() < w[0].max_distance());
        out.checks.push(Check::new(
            "distance_decreases_with_omega",
            decreasing,
            format!("{:?}", reports.iter().map(|r| r.max_distance()).collect::<Vec<_>>()),
        ));
    }
    out.result("per_omega", Value::Array(maxima));
    out.tables.push(t);
    Ok(out)
}

/// Block evolution of `|S,S>_z` to `Λt = π/2` under the given channels.
fn block_point(
    space: &DickeSpace,
    gamma: f64,
    channels: LocalChannels,
    splitting: crate::local_dissipation::Splitting,
    dt: f64,
) -> crate::Result<(f64, f64, f64)> {
    let s = space.collective_spin();
    let rho0 = BlockDensity::from_symmetric(space, &top_z(s))?;
    let opts = SplitOptions { dt, splitting, ..SplitOptions::default() };
    let sol = split_step_evolve(1.0, gamma, &channels, &rho0, &[0.0, FRAC_PI_2], &opts)?;
    let rho = &sol.states[1];
    let sf = s.s() as f64;
    Ok((block_fidelity(rho, &make_state(s, StateKind::CatPsi)?)?, block_qfi(rho) / (4.0 * sf * sf), sol.norms[1]))
}

fn fig2(cfg: &Fig2) -> Result<Outcome, CliError> {
    let space = block_space(cfg.spin)?;
    let mut eps = cfg.epsilon_ratio.points("epsilon_ratio")?;
    for &e in &eps {
        ratio(e, "epsilon_ratio")?;
    }
    let budget = ratio(cfg.budget, "budget")?;
    let n = eps.len();
    let budget_index = eps.iter().position(|&e| e == budget).unwrap_or_else(|| {
        eps.push(budget);
        n
    });
    let values = eps
        .par_iter()
        .map(|&e| block_point(&space, 0.0, LocalChannels::dephasing(e), cfg.splitting, cfg.dt))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut out = Outcome::new(n);
    let mut t = Table::new("fig2", &["epsilon_over_lambda[1]", "fidelity[1]", "qfi_over_4s2[1]"]);
    for (e, (f, q, _)) in eps.iter().zip(&values).take(n) {
        t.push(vec![(*e).into(), (*f).into(), (*q).into()]);
    }
    let (f_budget, q_budget, _) = values[budget_index];
    out.result("budget", json!({ "epsilon_over_lambda": budget, "fidelity": f_budget, "qfi_over_4s2": q_budget }));
    out.checks.push(Check::new("fidelity_above_0.9_at_budget", f_budget >= 0.9, format!("F({budget}) = {f_budget:.6}")));
    out.tables.push(t);
    Ok(out)
}

fn fig3(cfg: &Fig3) -> Result<Outcome, CliError> {
    let ratios = cfg.gamma_ratio.points("gamma_ratio")?;
    for &r in &ratios {
        ratio(r, "gamma_ratio")?;
    }
    let spins = cfg.spins.iter().map(|&s| spin(s)).collect::<Result<Vec<_>, _>>()?;
    let mut out = Outcome::new(ratios.len() * spins.len());
    let mut t = Table::new("fig3", &["spin[1]", "gamma_over_lambda[1]", "nojump_probability[1]", "plateau[1]"]);
    let mut worst: f64 = 0.0;
    let mut plateaus = Map::new();
    for &s in &spins {
        let plateau = dicke0_probability(s).exact;
        plateaus.insert(s.value().to_string(), json!(plateau));
        for &r in &ratios {
            let p = nojump_probability(s, &TwistParams::from_ratio(r)?, Time::LambdaT(FRAC_PI_2))?;
            if r >= 3.0 {
                worst = worst.max((p - plateau).abs());
            }
            t.push(vec![s.value().into(), r.into(), p.into(), plateau.into()]);
        }
    }
    out.result("plateau", Value::Object(plateaus));
    if ratios.iter().any(|&r| r >= 3.0) {
        out.checks.push(Check::new("plateau_within_1e-3_for_ratio_ge_3", worst <= 1e-3, format!("max deviation {worst:.3e}")));
    }
    out.tables.push(t);
    Ok(out)
}

fn fig4(cfg: &Fig4) -> Result<Outcome, CliError> {
    let ratios = cfg.gamma_ratio.points("gamma_ratio")?;
    for &r in &ratios {
        ratio(r, "gamma_ratio")?;
    }
    let spins = cfg.spins.iter().map(|&s| spin(s)).collect::<Result<Vec<_>, _>>()?;
    let per_spin = spins
        .par_iter()
        .map(|&s| {
            let curve = CatCurve::new(s);
            let sf = s.s() as f64;
            ratios.iter().map(|&r| Ok((curve.fidelity(r)?, curve.qfi(r)? / (4.0 * sf * sf)))).collect::<crate::Result<Vec<_>>>()
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut out = Outcome::new(ratios.len() * spins.len());
    let mut t = Table::new("fig4", &["spin[1]", "gamma_over_lambda[1]", "fidelity[1]", "qfi_over_4s2[1]"]);
    for (s, values) in spins.iter().zip(&per_spin) {
        for (r, (f, q)) in ratios.iter().zip(values) {
            t.push(vec![s.value().into(), (*r).into(), (*f).into(), (*q).into()]);
        }
    }
    out.tables.push(t);
    Ok(out)
}

fn fig5(cfg: &Fig5) -> Result<Outcome, CliError> {
    if cfg.spin_min == 0 || cfg.spin_max < cfg.spin_min {
        return Err(CliError::config("need 1 ≤ spin_min ≤ spin_max"));
    }
    for &r in &cfg.gamma_ratios {
        ratio(r, "gamma_ratios")?;
    }
    let spins: Vec<u32> = (cfg.spin_min..=cfg.spin_max).collect();
    let per_spin = spins
        .par_iter()
        .map(|&s| {
            let curve = CatCurve::new(SpinQuantum::new(s)?);
            cfg.gamma_ratios.iter().map(|&r| curve.qfi(r)).collect::<crate::Result<Vec<_>>>()
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut out = Outcome::new(spins.len() * cfg.gamma_ratios.len());
    let mut t = Table::new("fig5", &["gamma_over_lambda[1]", "spin[1]", "qfi[1]", "qfi_over_4s2[1]", "qfi_over_2s2_plus_2s[1]"]);
    for (k, &r) in cfg.gamma_ratios.iter().enumerate() {
        for (&s, values) in spins.iter().zip(&per_spin) {
            let sf = s as f64;
            let q = values[k];
            t.push(vec![r.into(), s.into(), q.into(), (q / (4.0 * sf * sf)).into(), (q / (2.0 * sf * sf + 2.0 * sf)).into()]);
        }
    }
    out.tables.push(t);
    Ok(out)
}

fn fig6(cfg: &Fig6) -> Result<Outcome, CliError> {
    let space = block_space(cfg.spin)?;
    let gamma = ratio(cfg.gamma_ratio, "gamma_ratio")?;
    let rates = cfg.gamma_eff_ratio.points("gamma_eff_ratio")?;
    for &r in &rates {
        ratio(r, "gamma_eff_ratio")?;
    }
    let values = rates
        .par_iter()
        .map(|&g| block_point(&space, gamma, LocalChannels::spontaneous_emission(g), cfg.splitting, cfg.dt))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut out = Outcome::new(rates.len());
    let mut t = Table::new("fig6", &["gamma_eff_over_lambda[1]", "fidelity[1]", "qfi_over_4s2[1]", "nojump_norm[1]"]);
    for (g, (f, q, norm)) in rates.iter().zip(&values) {
        t.push(vec![(*g).into(), (*f).into(), (*q).into(), (*norm).into()]);
    }
    out.tables.push(t);
    Ok(out)
}

fn check_snapshot_budget(spin: SpinQuantum, count: usize, t_final: f64, dt: f64, stride: usize) -> Result<(), CliError> {
    let snapshots = (t_final / (dt * stride as f64)).floor() + 1.0;
    let bytes = count as f64 * snapshots * spin.dim() as f64 * 16.0;
    if bytes > SNAPSHOT_BUDGET {
        return Err(CliError::new(
            Category::Limit,
            format!("stored snapshots would need {:.1} GiB; raise record_stride or lower the count", bytes / (1u64 << 30) as f64),
        ));
    }
    Ok(())
}

fn ensemble(
    spin: SpinQuantum,
    gamma: f64,
    t_final: f64,
    dt: f64,
    stride: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>, CliError> {
    if count == 0 {
        return Err(CliError::config("trajectories must be at least 1"));
    }
    check_snapshot_budget(spin, count, t_final, dt, stride)?;
    let mut base = TrajectoryConfig::new(spin, 1.0, ratio(gamma, "gamma_ratio")?, t_final, dt);
    base.seed = seed;
    base.record_stride = stride;
    base.validate()?;
    Ok(run_ensemble(&ensemble_configs(&base, count))?)
}

fn cycle_cells(index: usize, r: &TrajectoryRecord) -> Vec<Cell> {
    vec![index.into(), r.jump_times.len().into(), r.first_jump().into(), r.cycle.map(|c| c.m).into(), r.cycle.map(|c| c.settle_time).into()]
}

const CYCLE_COLUMNS: [&str; 5] = ["trajectory[1]", "jumps[1]", "first_jump_lambda_t[1]", "cycle_m[1]", "settle_lambda_t[1]"];

fn fig7(cfg: &Fig7, seed: u64) -> Result<Outcome, CliError> {
    let spin = spin(cfg.spin)?;
    let records = ensemble(spin, cfg.gamma_ratio, cfg.t_final, cfg.dt, cfg.record_stride, cfg.trajectories, seed)?;
    let snapshots = records[0].snapshots.len();
    let mut out = Outcome::new(cfg.trajectories * snapshots * spin.dim());
    let mut t = Table::new("fig7", &["trajectory[1]", "lambda_t[1]", "m[1]", "overlap_re[1]", "overlap_im[1]"]);
    let mut cycles = Table::new("fig7_cycles", &CYCLE_COLUMNS);
    let lambda = records[0].config.scaled_rates().0;
    for (k, r) in records.iter().enumerate() {
        for snap in &r.snapshots {
            for (m, z) in spin.m_values().zip(stripped_overlaps(snap, lambda)) {
                t.push(vec![k.into(), snap.time.into(), m.into(), z.re.into(), z.im.into()]);
            }
        }
        cycles.push(cycle_cells(k, r));
    }
    out.tables.push(t);
    out.tables.push(cycles);
    Ok(out)
}

fn trajectories(cfg: &Trajectories, seed: u64) -> Result<Outcome, CliError> {
    let spin = spin(cfg.spin)?;
    if cfg.reference && cfg.spin > MAX_ME_SPIN {
        return Err(CliError::new(Category::Limit, format!("reference master equation limited to S ≤ {MAX_ME_SPIN}")));
    }
    let records = ensemble(spin, cfg.gamma_ratio, cfg.t_final, cfg.dt, cfg.record_stride, cfg.trajectories, seed)?;
    let times: Vec<f64> = records[0].snapshots.iter().map(|s| s.time).collect();
    let sz_op = collective_operator(spin, CollectiveOp::Sz, Basis::X);
    let sx2_op = collective_operator(spin, CollectiveOp::Sx, Basis::X).squared();
    let sz = observable_statistics(&records, &sz_op)?;
    let sx2 = observable_statistics(&records, &sx2_op)?;
    let reference = if cfg.reference {
        let model = build_twisting(1.0, cfg.gamma_ratio, spin)?;
        let rho0 = DensityMatrix::from_pure(&rotate_basis(&top_z(spin), Basis::X));
        let sol = integrate(&model, &rho0, &times, &tight())?;
        Some(
            sol.states
                .iter()
                .map(|rho| Ok((rho.expectation(&sz_op)?.re, rho.expectation(&sx2_op)?.re)))
                .collect::<crate::Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let mut out = Outcome::new(times.len());
    let mut t = Table::new("trajectories", &["lambda_t[1]", "sz_mean[1]", "sz_se[1]", "sx2_mean[1]", "sx2_se[1]", "sz_me[1]", "sx2_me[1]"]);
    let mut outside = 0usize;
    for (k, time) in times.iter().enumerate() {
        let me = reference.as_ref().map(|r| r[k]);
        if let Some((a, b)) = me {
            let bound = |e: &crate::trajectories::MeanEstimate, exact: f64| (e.mean - exact).abs() <= 3.0 * e.standard_error + 1e-9;
            outside += usize::from(!bound(&sz[k], a)) + usize::from(!bound(&sx2[k], b));
        }
        t.push(vec![
            (*time).into(),
            sz[k].mean.into(),
            sz[k].standard_error.into(),
            sx2[k].mean.into(),
            sx2[k].standard_error.into(),
            me.map(|m| m.0).into(),
            me.map(|m| m.1).into(),
        ]);
    }
    if reference.is_some() {
        out.checks.push(Check::new(
            "ensemble_within_3se_of_master_equation",
            outside == 0,
            format!("{outside} of {} comparisons outside 3 SE", 2 * times.len()),
        ));
    }

    let quiet = records.iter().filter(|r| r.jump_times.is_empty()).count();
    let n = records.len() as f64;
    let p = nojump_probability(spin, &TwistParams::from_ratio(cfg.gamma_ratio)?, Time::LambdaT(cfg.t_final))?;
    let sigma = (p * (1.0 - p) / n).sqrt();
    out.result("jump_free", json!({ "fraction": quiet as f64 / n, "nojump_probability": p, "binomial_sigma": sigma }));
    out.checks.push(Check::new(
        "jump_free_fraction_within_3_sigma",
        (quiet as f64 / n - p).abs() <= 3.0 * sigma,
        format!("{} vs {p:.6}", quiet as f64 / n),
    ));

    let stats = cycle_statistics(&records)?;
    if stats.counts.values().sum::<usize>() > 0 {
        if let Ok(test) = stats.chi_square() {
            out.result("chi_square", serde_json::to_value(test).expect("plain data"));
        }
    }
    out.result("cycles", serde_json::to_value(&stats).expect("plain data"));
    let mut cycles = Table::new("trajectory_cycles", &CYCLE_COLUMNS);
    for (k, r) in records.iter().enumerate() {
        cycles.push(cycle_cells(k, r));
    }
    out.tables.push(t);
    out.tables.push(cycles);
    Ok(out)
}

fn nojump(cfg: &Nojump) -> Result<Outcome, CliError> {
    let spin = spin(cfg.spin)?;
    let p = TwistParams::from_ratio(ratio(cfg.gamma_ratio, "gamma_ratio")?)?;
    let times = time_grid(&cfg.times)?;
    let cat = rotate_basis(&make_state(spin, StateKind::CatPsi)?, Basis::X);
    let sz = collective_operator(spin, CollectiveOp::Sz, Basis::X);
    let s = spin.s() as f64;
    let mut out = Outcome::new(times.len());
    let mut t = Table::new("nojump", &["lambda_t[1]", "nojump_probability[1]", "fidelity[1]", "qfi_over_4s2[1]"]);
    for &time in &times {
        let psi = nojump_state(spin, &p, Time::LambdaT(time))?;
        t.push(vec![
            time.into(),
            nojump_probability(spin, &p, Time::LambdaT(time))?.into(),
            psi.fidelity_with(&cat)?.into(),
            (qfi_pure(&psi, &sz)? / (4.0 * s * s)).into(),
        ]);
    }
    out.tables.push(t);
    Ok(out)
}

fn flat_value(v: &Value) -> Cell {
    match v {
        Value::Null => Cell::Empty,
        Value::Bool(b) => Cell::Text(b.to_string()),
        Value::Number(n) => match n.as_i64() {
            Some(i) => Cell::Int(i),
            None => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        Value::String(s) => Cell::Text(s.clone()),
        other => Cell::Text(other.to_string()),
    }
}

fn params(cfg: &Params) -> Result<Outcome, CliError> {
    let framework = match cfg.framework {
        FrameworkKind::Ion => Framework::Ion(cfg.ion_angular()),
        FrameworkKind::Cavity => Framework::Cavity(cfg.cavity_angular()),
    };
    let report = feasibility_report(&framework)?;
    let value = serde_json::to_value(&report).expect("plain data");
    let Value::Object(map) = value else { unreachable!("report is a struct") };
    let mut out = Outcome::new(map.len());
    let mut t = Table::new("params", &["quantity", "value"]);
    for (k, v) in &map {
        t.push(vec![Cell::Text(k.clone()), flat_value(v)]);
    }
    out.result("report", Value::Object(map));
    out.tables.push(t);
    Ok(out)
}

fn dicke0(cfg: &Dicke0) -> Result<Outcome, CliError> {
    let mut out = Outcome::new(cfg.spins.len());
    let mut t = Table::new("dicke0", &["spin[1]", "exact[1]", "stirling[1]", "relative_difference[1]"]);
    let mut results = Vec::new();
    for &s in &cfg.spins {
        let p = dicke0_probability(spin(s)?);
        let rel = (p.stirling - p.exact) / p.exact;
        t.push(vec![s.into(), p.exact.into(), p.stirling.into(), rel.into()]);
        results.push(json!({ "spin": s, "exact": p.exact, "stirling": p.stirling }));
    }
    out.result("probabilities", Value::Array(results));
    out.tables.push(t);
    Ok(out)
}
