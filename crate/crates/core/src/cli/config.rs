//! Run configuration: a TOML document with top-level run settings and one
//! table per experiment. Missing keys take the defaults below; `--set`
//! overrides are applied to the parsed document before it is typed.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::{Category, CliError};
use crate::frameworks::{hz, CavityMode, CavityParams, IonParams};
use crate::local_dissipation::Splitting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Nojump,
    Mesolve,
    Trajectories,
    Params,
    Dicke0,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1 => "fig1",
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Fig6 => "fig6",
            Experiment::Fig7 => "fig7",
            Experiment::Nojump => "nojump",
            Experiment::Mesolve => "mesolve",
            Experiment::Trajectories => "trajectories",
            Experiment::Params => "params",
            Experiment::Dicke0 => "dicke0",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// `count` points from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub scale: Scale,
}

impl Sweep {
    pub const fn linear(start: f64, stop: f64, count: usize) -> Self {
        Self { start, stop, count, scale: Scale::Linear }
    }

    pub const fn log(start: f64, stop: f64, count: usize) -> Self {
        Self { start, stop, count, scale: Scale::Log }
    }

    pub fn points(&self, what: &str) -> Result<Vec<f64>, CliError> {
        let bad = |msg: String| CliError::config(format!("{what}: {msg}"));
        if self.count == 0 {
            return Err(bad("count must be at least 1".into()));
        }
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(bad("start and stop must be finite".into()));
        }
        let (a, b) = match self.scale {
            Scale::Linear => (self.start, self.stop),
            Scale::Log => {
                if !(self.start > 0.0 && self.stop > 0.0) {
                    return Err(bad("a log sweep needs positive start and stop".into()));
                }
                (self.start.log10(), self.stop.log10())
            }
        };
        let n = self.count;
        Ok((0..n)
            .map(|k| {
                // endpoints are reproduced exactly rather than through the formula
                if k == 0 {
                    return self.start;
                }
                if k == n - 1 {
                    return self.stop;
                }
                let x = a + (b - a) * k as f64 / (n - 1) as f64;
                match self.scale {
                    Scale::Linear => x,
                    Scale::Log => 10f64.powf(x),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig1 {
    pub spin: u32,
    pub gamma_ratio: f64,
    /// Grid in `Λt`.
    pub times: Sweep,
}

impl Default for Fig1 {
    fn default() -> Self {
        Self { spin: 10, gamma_ratio: 0.0, times: Sweep::linear(0.0, TAU, 201) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig2 {
    pub spin: u32,
    pub epsilon_ratio: Sweep,
    /// Extra point evaluated for the summary.
    pub budget: f64,
    pub splitting: Splitting,
    pub dt: f64,
}

impl Default for Fig2 {
    fn default() -> Self {
        Self { spin: 10, epsilon_ratio: Sweep::log(1e-3, 1e2, 21), budget: 0.02, splitting: Splitting::Strang, dt: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig3 {
    pub spins: Vec<u32>,
    pub gamma_ratio: Sweep,
}

impl Default for Fig3 {
    fn default() -> Self {
        Self { spins: vec![5, 10, 20, 50], gamma_ratio: Sweep::log(1e-3, 10.0, 40) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig4 {
    pub spins: Vec<u32>,
    pub gamma_ratio: Sweep,
}

impl Default for Fig4 {
    fn default() -> Self {
        Self { spins: vec![10, 20, 50, 100], gamma_ratio: Sweep::log(1e-4, 1.0, 41) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig5 {
    pub gamma_ratios: Vec<f64>,
    pub spin_min: u32,
    pub spin_max: u32,
}

impl Default for Fig5 {
    fn default() -> Self {
        Self { gamma_ratios: vec![0.0, 0.01, 0.1, 1.0], spin_min: 1, spin_max: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig6 {
    pub spin: u32,
    pub gamma_ratio: f64,
    pub gamma_eff_ratio: Sweep,
    pub splitting: Splitting,
    pub dt: f64,
}

impl Default for Fig6 {
    fn default() -> Self {
        Self { spin: 10, gamma_ratio: 0.0, gamma_eff_ratio: Sweep::log(1e-3, 10.0, 17), splitting: Splitting::Strang, dt: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fig7 {
    pub spin: u32,
    pub gamma_ratio: f64,
    pub t_final: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub trajectories: usize,
}

impl Default for Fig7 {
    fn default() -> Self {
        Self { spin: 10, gamma_ratio: 0.5, t_final: 20.0, dt: 4e-4, record_stride: 50, trajectories: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Nojump {
    pub spin: u32,
    pub gamma_ratio: f64,
    pub times: Sweep,
}

impl Default for Nojump {
    fn default() -> Self {
        Self { spin: 10, gamma_ratio: 0.1, times: Sweep::linear(0.0, FRAC_PI_2, 51) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MesolveModel {
    #[default]
    Twisting,
    Elimination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Twisting {
    pub spin: u32,
    pub gamma_ratio: f64,
    pub times: Sweep,
}

impl Default for Twisting {
    fn default() -> Self {
        Self { spin: 10, gamma_ratio: 0.05, times: Sweep::linear(0.0, PI, 101) }
    }
}

/// Boson-coupled versus reduced model; rates in units of `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Elimination {
    pub spin: u32,
    pub omega_ratios: Vec<f64>,
    pub kappa_ratio: f64,
    pub omega0_ratio: f64,
    pub nbar: f64,
    /// Grid in `Λt` of each reduced model.
    pub times: Sweep,
}

impl Default for Elimination {
    fn default() -> Self {
        Self {
            spin: 2,
            omega_ratios: vec![10.0, 20.0, 40.0],
            kappa_ratio: 2.0,
            omega0_ratio: 0.0,
            nbar: 0.0,
            times: Sweep::linear(0.0, PI, 17),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mesolve {
    pub model: MesolveModel,
    pub twisting: Twisting,
    pub elimination: Elimination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Trajectories {
    pub spin: u32,
    pub gamma_ratio: f64,
    pub t_final: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub trajectories: usize,
    /// Integrate the master equation on the snapshot grid for comparison.
    pub reference: bool,
}

impl Default for Trajectories {
    fn default() -> Self {
        Self { spin: 6, gamma_ratio: 0.1, t_final: PI, dt: PI / 800.0, record_stride: 50, trajectories: 2000, reference: true }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Ordinary frequencies; converted with `2π`.
    #[default]
    Hz,
    /// Angular frequencies, used as given.
    Rad,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameworkKind {
    #[default]
    Ion,
    Cavity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub framework: FrameworkKind,
    pub units: Units,
    pub ion: IonParams,
    pub cavity: CavityParams,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            framework: FrameworkKind::Ion,
            units: Units::Hz,
            ion: IonParams { nu: 3e6, omega_ts: 411.042e12, rabi: 300e3, eta: 0.05, delta: 300e3, ions: 20, nbar: 0.0, epsilon: None },
            // illustrative 87Rb-like numbers with κ/ω = 0.1
            cavity: CavityParams {
                g: 1e6,
                rabi_plus: 50e6,
                rabi_minus: 50e6,
                detuning: -2e9,
                omega_cavity: 200e3 + 10.0 * 1e12 / (3.0 * 2e9),
                laser_plus: 0.0,
                laser_minus: 0.0,
                omega_zeeman: 0.0,
                kappa: 20e3,
                gamma: 3e6,
                spin: 10,
                mode: CavityMode::Twisting,
            },
        }
    }
}

impl Params {
    fn factor(&self) -> f64 {
        match self.units {
            Units::Hz => hz(1.0),
            Units::Rad => 1.0,
        }
    }

    /// Ion parameters in rad/s.
    pub fn ion_angular(&self) -> IonParams {
        let f = self.factor();
        IonParams {
            nu: self.ion.nu * f,
            omega_ts: self.ion.omega_ts * f,
            rabi: self.ion.rabi * f,
            delta: self.ion.delta * f,
            epsilon: self.ion.epsilon.map(|e| e * f),
            ..self.ion
        }
    }

    /// Cavity parameters in rad/s.
    pub fn cavity_angular(&self) -> CavityParams {
        let f = self.factor();
        let c = self.cavity;
        CavityParams {
            g: c.g * f,
            rabi_plus: c.rabi_plus * f,
            rabi_minus: c.rabi_minus * f,
            detuning: c.detuning * f,
            omega_cavity: c.omega_cavity * f,
            laser_plus: c.laser_plus * f,
            laser_minus: c.laser_minus * f,
            omega_zeeman: c.omega_zeeman * f,
            kappa: c.kappa * f,
            gamma: c.gamma * f,
            ..c
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dicke0 {
    pub spins: Vec<u32>,
}

impl Default for Dicke0 {
    fn default() -> Self {
        Self { spins: vec![30] }
    }
}

/// Typed settings of the selected experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Settings {
    Fig1(Fig1),
    Fig2(Fig2),
    Fig3(Fig3),
    Fig4(Fig4),
    Fig5(Fig5),
    Fig6(Fig6),
    Fig7(Fig7),
    Nojump(Nojump),
    Mesolve(Mesolve),
    Trajectories(Trajectories),
    Params(Params),
    Dicke0(Dicke0),
}

/// Fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub format: Format,
    pub settings: Settings,
}

const TOP_LEVEL: [&str; 5] = ["experiment", "seed", "threads", "out", "format"];

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies `key=value`. Keys without a top-level name are taken relative to
/// the experiment's table; dots descend into sub-tables. A bare key that
/// matches the experiment's name (`trajectories=60`) is a field, not the
/// section.
fn apply_set(doc: &mut Table, experiment: Experiment, set: &str) -> Result<(), CliError> {
    let (key, raw) = set.split_once('=').ok_or_else(|| CliError::config(format!("--set expects key=value, got {set:?}")))?;
    let mut path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(format!("malformed key {key:?}")));
    }
    let names_section = path[0] == experiment.name() && path.len() > 1;
    if !(TOP_LEVEL.contains(&path[0]) || names_section) {
        path.insert(0, experiment.name());
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::config(format!("{key}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Overlays `over` onto `base`, descending into tables, so a partial section
/// such as `[fig3.gamma_ratio] count = 3` keeps the remaining defaults.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn typed<T: serde::de::DeserializeOwned + Serialize + Default>(doc: &Table, name: &str) -> Result<T, CliError> {
    let Some(section) = doc.get(name) else { return Ok(T::default()) };
    let mut value = Value::try_from(T::default()).expect("defaults serialize");
    merge(&mut value, section);
    value.try_into().map_err(|e: toml::de::Error| CliError::config(format!("[{name}] {}", e.message())))
}

pub fn resolve(experiment: Experiment, file: Option<&str>, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut doc: Table = match file {
        Some(text) => text.parse().map_err(|e: toml::de::Error| CliError::config(format!("config: {}", e.message())))?,
        None => Table::new(),
    };
    for set in &overrides.sets {
        apply_set(&mut doc, experiment, set)?;
    }
    for key in doc.keys() {
        let known = TOP_LEVEL.contains(&key.as_str()) || Experiment::value_variants().iter().any(|e| e.name() == key);
        if !known {
            return Err(CliError::config(format!("unknown key {key:?}")));
        }
    }
    if let Some(v) = doc.get("experiment") {
        if v.as_str() != Some(experiment.name()) {
            return Err(CliError::config(format!("config is for experiment {v}, not {}", experiment.name())));
        }
    }
    let seed = match (overrides.seed, doc.get("seed")) {
        (Some(s), _) => s,
        (None, None) => 0,
        (None, Some(v)) => {
            v.as_integer().and_then(|i| u64::try_from(i).ok()).ok_or_else(|| CliError::config("seed must be a non-negative integer"))?
        }
    };
    let threads = match (overrides.threads, doc.get("threads")) {
        (Some(t), _) => Some(t),
        (None, None) => None,
        (None, Some(v)) => Some(
            v.as_integer()
                .and_then(|i| usize::try_from(i).ok())
                .ok_or_else(|| CliError::config("threads must be a non-negative integer"))?,
        ),
    };
    if threads == Some(0) {
        return Err(CliError::config("threads must be at least 1"));
    }
    let out = match (&overrides.out, doc.get("out")) {
        (Some(o), _) => o.clone(),
        (None, None) => PathBuf::from("out"),
        (None, Some(v)) => PathBuf::from(v.as_str().ok_or_else(|| CliError::config("out must be a string"))?),
    };
    let format = match (overrides.format, doc.get("format")) {
        (Some(f), _) => f,
        (None, None) => Format::Csv,
        (None, Some(v)) => v.clone().try_into().map_err(|_| CliError::config("format must be csv or json"))?,
    };
    let name = experiment.name();
    let settings = match experiment {
        Experiment::Fig1 => Settings::Fig1(typed(&doc, name)?),
        Experiment::Fig2 => Settings::Fig2(typed(&doc, name)?),
        Experiment::Fig3 => Settings::Fig3(typed(&doc, name)?),
        Experiment::Fig4 => Settings::Fig4(typed(&doc, name)?),
        Experiment::Fig5 => Settings::Fig5(typed(&doc, name)?),
        Experiment::Fig6 => Settings::Fig6(typed(&doc, name)?),
        Experiment::Fig7 => Settings::Fig7(typed(&doc, name)?),
        Experiment::Nojump => Settings::Nojump(typed(&doc, name)?),
        Experiment::Mesolve => Settings::Mesolve(typed(&doc, name)?),
        Experiment::Trajectories => Settings::Trajectories(typed(&doc, name)?),
        Experiment::Params => Settings::Params(typed(&doc, name)?),
        Experiment::Dicke0 => Settings::Dicke0(typed(&doc, name)?),
    };
    Ok(RunConfig { experiment, seed, threads, out, format, settings })
}

impl RunConfig {
    /// The resolved configuration as a TOML document that reproduces the run.
    pub fn to_toml(&self) -> Result<String, CliError> {
        let section = match &self.settings {
            Settings::Fig1(s) => Value::try_from(s),
            Settings::Fig2(s) => Value::try_from(s),
            Settings::Fig3(s) => Value::try_from(s),
            Settings::Fig4(s) => Value::try_from(s),
            Settings::Fig5(s) => Value::try_from(s),
            Settings::Fig6(s) => Value::try_from(s),
            Settings::Fig7(s) => Value::try_from(s),
            Settings::Nojump(s) => Value::try_from(s),
            Settings::Mesolve(s) => Value::try_from(s),
            Settings::Trajectories(s) => Value::try_from(s),
            Settings::Params(s) => Value::try_from(s),
            Settings::Dicke0(s) => Value::try_from(s),
        }
        .map_err(|e| CliError::new(Category::Config, format!("cannot serialize config: {e}")))?;
        let mut doc = Table::new();
        doc.insert("experiment".into(), Value::String(self.experiment.name().into()));
        doc.insert("seed".into(), Value::Integer(self.seed as i64));
        if let Some(t) = self.threads {
            doc.insert("threads".into(), Value::Integer(t as i64));
        }
        doc.insert("out".into(), Value::String(self.out.display().to_string()));
        doc.insert("format".into(), Value::String(if self.format == Format::Csv { "csv" } else { "json" }.into()));
        doc.insert(self.experiment.name().into(), section);
        toml::to_string(&doc).map_err(|e| CliError::new(Category::Config, format!("cannot serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweeps_keep_their_endpoints_and_length() {
        let log = Sweep::log(1e-3, 10.0, 40).points("x").unwrap();
        assert_eq!(log.len(), 40);
        assert_eq!((log[0], log[39]), (1e-3, 10.0));
        assert!(log.windows(2).all(|w| w[1] > w[0]));
        let lin = Sweep::linear(0.0, TAU, 201).points("t").unwrap();
        assert_eq!(lin[50], FRAC_PI_2);
        assert_eq!(Sweep::linear(2.0, 5.0, 1).points("t").unwrap(), vec![2.0]);
        assert!(Sweep::log(0.0, 1.0, 3).points("x").is_err());
        assert!(Sweep::linear(0.0, 1.0, 0).points("x").is_err());
    }

    #[test]
    fn sets_override_file_values() {
        let file = "seed = 3\n[fig3]\nspins = [5]\n";
        let o = Overrides { sets: vec!["spins=[7, 8]".into(), "gamma_ratio.count=3".into(), "seed=9".into()], ..Default::default() };
        let cfg = resolve(Experiment::Fig3, Some(file), &o).unwrap();
        assert_eq!(cfg.seed, 9);
        let Settings::Fig3(f) = cfg.settings else { panic!() };
        assert_eq!(f.spins, vec![7, 8]);
        assert_eq!(f.gamma_ratio, Sweep::log(1e-3, 10.0, 3));
    }

    #[test]
    fn field_named_like_its_experiment() {
        for sets in [vec!["trajectories=60".to_string()], vec!["trajectories.trajectories=60".to_string()]] {
            let cfg = resolve(Experiment::Trajectories, None, &Overrides { sets, ..Default::default() }).unwrap();
            let Settings::Trajectories(t) = cfg.settings else { panic!() };
            assert_eq!(t.trajectories, 60);
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let o = Overrides { seed: Some(5), sets: vec!["mesolve.model=\"elimination\"".into()], ..Default::default() };
        let cfg = resolve(Experiment::Mesolve, None, &o).unwrap();
        let text = cfg.to_toml().unwrap();
        let again = resolve(Experiment::Mesolve, Some(&text), &Overrides::default()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn typos_and_mismatches_are_config_errors() {
        let typo = resolve(Experiment::Fig1, Some("[fig1]\nspn = 3\n"), &Overrides::default()).unwrap_err();
        assert_eq!(typo.category, Category::Config);
        assert!(resolve(Experiment::Fig1, Some("experiment = \"fig3\"\n"), &Overrides::default()).is_err());
        assert!(resolve(Experiment::Fig1, Some("colour = 1\n"), &Overrides::default()).is_err());
        let o = Overrides { sets: vec!["spin".into()], ..Default::default() };
        assert!(resolve(Experiment::Fig1, None, &o).is_err());
    }
}
