//! Scenario configuration: a TOML file with unit-suffixed keys.
//!
//! Validation walks the whole tree and reports every violation at once. Keys
//! are addressed by dotted paths (`noise.t2_s`, `beams[1].direction`).

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use toml::{Table, Value};
use trapcal_core::compensation::DriftModel;
use trapcal_core::estimators::SettingsTag;
use trapcal_core::protocol::Estimator;
use trapcal_core::pulse::{NoiseModel, Timing};
use trapcal_core::resonator::ServoMode;
use trapcal_core::trap::{hz_to_angular, IonSpecies, LaserBeam, TrapSetting, Vec3, ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};

use crate::error::CliError;

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Fringe,
    MethodBDrift,
    ClosedLoop,
    Robustness,
    RpeScaling,
    Geometry2d,
    Axial,
    StatUncertainty,
    Resonator,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::Fringe,
        Scenario::MethodBDrift,
        Scenario::ClosedLoop,
        Scenario::Robustness,
        Scenario::RpeScaling,
        Scenario::Geometry2d,
        Scenario::Axial,
        Scenario::StatUncertainty,
        Scenario::Resonator,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Fringe => "fringe",
            Scenario::MethodBDrift => "method-b-drift",
            Scenario::ClosedLoop => "closed-loop",
            Scenario::Robustness => "robustness",
            Scenario::RpeScaling => "rpe-scaling",
            Scenario::Geometry2d => "geometry-2d",
            Scenario::Axial => "axial",
            Scenario::StatUncertainty => "stat-uncertainty",
            Scenario::Resonator => "resonator",
        }
    }

    pub fn summary(&self) -> &'static str {
        match self {
            Scenario::Fringe => "excitation fringes against stray field for each sequence length",
            Scenario::MethodBDrift => "two-beam phase under injected beam-path drift at two stiffness settings",
            Scenario::ClosedLoop => "calibrate, run the compensation loop, Allan-style stability",
            Scenario::Robustness => "phase bias of control-phase settings under pulse-area errors and detuning",
            Scenario::RpeScaling => "binary-search estimation error against total pulse area",
            Scenario::Geometry2d => "sensitivity directions against radial splitting, single-beam hybrid loop",
            Scenario::Axial => "axial field compensation with an axial RF component",
            Scenario::StatUncertainty => "arctan2 estimator error against sample count and phase",
            Scenario::Resonator => "drive-resonator envelope when switching RF sources",
        }
    }

    /// Name of the scenario-specific table.
    pub fn table(&self) -> &'static str {
        match self {
            Scenario::MethodBDrift => "method_b_drift",
            Scenario::ClosedLoop => "closed_loop",
            Scenario::RpeScaling => "rpe_scaling",
            Scenario::Geometry2d => "geometry_2d",
            Scenario::StatUncertainty => "stat_uncertainty",
            s => s.name(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| CliError::ScenarioUnknown(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Shots per probe setting.
    pub shots: u64,
    pub m: Vec<u32>,
    pub theta_t: Vec<f64>,
    /// Shots per binary-search pass; empty means `shots` for every pass.
    pub passes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveConfig {
    pub rf_drive_hz: f64,
    pub rf_axial_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FringeMethod {
    A { beam: String, setting_a: String, setting_b: String },
    B { alpha: String, beta: String, setting: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeParams {
    pub method: FringeMethod,
    /// Unit vector.
    pub field_direction: Vec3,
    pub span_v_per_m: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodBDriftParams {
    pub alpha: String,
    pub beta: String,
    pub setting_a: String,
    pub setting_b: String,
    pub field: Vec3,
    /// Random-walk step of the alpha/beta path phase (rad per step).
    pub drift_step_rad: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    pub beam: String,
    pub m: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopParams {
    pub observables: Vec<ObservableSpec>,
    pub setting_a: String,
    pub setting_b: String,
    pub duration_s: f64,
    pub interval_s: f64,
    pub initial_field: Vec3,
    pub scan_amplitude_v: f64,
    pub scan_points: usize,
    /// RF power during setting B relative to nominal.
    pub reduced_rf_power: f64,
    /// Largest averaging window used for the fitted Allan exponent.
    pub fit_max_window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessParams {
    pub m: u32,
    pub phi_points: usize,
    pub even_factors: Vec<f64>,
    pub odd_factor: f64,
    pub detunings_hz: Vec<f64>,
    pub estimators: Vec<(String, Estimator)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpeScalingParams {
    pub j_max: u32,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridParams {
    pub beam: String,
    pub electrodes: [String; 2],
    pub b_radial_hz: f64,
    pub initial_field: Vec3,
    pub sideband_area_pi: f64,
    pub sideband_shots: u64,
    pub search_halfwidth_v: f64,
    pub search_steps: usize,
    pub phase_threshold_rad: f64,
    pub sideband_threshold: f64,
    pub max_rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry2dParams {
    /// Setting whose frequencies fix the RF drive model.
    pub setting: String,
    pub beams: [String; 2],
    pub b_radial_hz: Vec<f64>,
    pub hybrid: Option<HybridParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxialParams {
    pub setting: String,
    pub beam: String,
    pub electrode: String,
    pub b_scale: f64,
    pub m: u32,
    pub initial_field: Vec3,
    pub scan_amplitude_v: f64,
    pub scan_points: usize,
    /// Closed-loop updates after calibration.
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatUncertaintyParams {
    pub n: Vec<u64>,
    pub trials: u64,
    pub phi_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorParamsCfg {
    pub tau_s: f64,
    pub a1: f64,
    pub a2: f64,
    pub delta_phi_rad: Vec<f64>,
    pub t_switch_s: f64,
    pub t_revert_s: f64,
    pub t_end_s: f64,
    pub dt_s: f64,
    pub settle_tolerance: f64,
    pub ion_loss_floor: f64,
    pub servo: ServoMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioParams {
    Fringe(FringeParams),
    MethodBDrift(MethodBDriftParams),
    ClosedLoop(ClosedLoopParams),
    Robustness(RobustnessParams),
    RpeScaling(RpeScalingParams),
    Geometry2d(Geometry2dParams),
    Axial(AxialParams),
    StatUncertainty(StatUncertaintyParams),
    Resonator(ResonatorParamsCfg),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub ion: IonSpecies,
    pub timing: Timing,
    pub noise: NoiseModel,
    pub estimator: Estimator,
    pub settings: Vec<TrapSetting>,
    pub drive: Option<DriveConfig>,
    pub beams: Vec<(String, LaserBeam)>,
    /// Field at the ion per volt on each electrode (V/m per V).
    pub electrodes: Vec<(String, Vec3)>,
    pub drift: DriftModel,
    pub schedule: Schedule,
    pub params: ScenarioParams,
}

impl ScenarioConfig {
    pub fn beam(&self, id: &str) -> Option<&LaserBeam> {
        self.beams.iter().find(|(b, _)| b == id).map(|(_, b)| b)
    }

    pub fn electrode(&self, id: &str) -> Option<Vec3> {
        self.electrodes.iter().find(|(e, _)| e == id).map(|(_, v)| *v)
    }

    pub fn setting(&self, id: &str) -> Option<&TrapSetting> {
        self.settings.iter().find(|s| s.label() == id)
    }
}

/// Parses and validates a configuration; every violation is reported.
pub fn validate_config(raw: &str) -> Result<ScenarioConfig, CliError> {
    let root: Table = toml::from_str(raw).map_err(|e| CliError::ConfigInvalid(vec![format!("syntax: {}", e.message())]))?;
    let mut v = Violations::default();
    let cfg = parse(&root, &mut v);
    match cfg {
        Some(cfg) if v.0.is_empty() => Ok(cfg),
        _ => Err(CliError::ConfigInvalid(v.0)),
    }
}

#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn push(&mut self, path: &str, msg: impl fmt::Display) {
        self.0.push(format!("{path}: {msg}"));
    }
}

/// A (possibly absent) table at a dotted path.
#[derive(Clone, Copy)]
struct Node<'a> {
    table: Option<&'a Table>,
    path: &'a str,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_f64(value: &Value) -> Option<f64> {
    match value {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn vec3(value: &Value) -> Option<Vec3> {
    let arr = value.as_array()?;
    if arr.len() != 3 {
        return None;
    }
    let xs: Option<Vec<f64>> = arr.iter().map(as_f64).collect();
    xs.map(|x| Vec3::new(x[0], x[1], x[2]))
}

impl<'a> Node<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn f64(&self, key: &str, v: &mut Violations) -> Option<f64> {
        let path = join(self.path, key);
        match self.get(key) {
            None => {
                v.push(&path, "required key is missing");
                None
            }
            Some(x) => match as_f64(x) {
                Some(f) if f.is_finite() || f.is_infinite() && f > 0.0 => Some(f),
                _ => {
                    v.push(&path, format!("expected a number, got {x}"));
                    None
                }
            },
        }
    }

    fn f64_or(&self, key: &str, default: f64, v: &mut Violations) -> Option<f64> {
        if self.get(key).is_none() {
            return Some(default);
        }
        self.f64(key, v)
    }

    /// Number satisfying `ok`, else a violation with `expect` as the message.
    fn checked(&self, key: &str, default: Option<f64>, ok: impl Fn(f64) -> bool, expect: &str, v: &mut Violations) -> Option<f64> {
        let x = match default {
            Some(d) => self.f64_or(key, d, v)?,
            None => self.f64(key, v)?,
        };
        if ok(x) {
            Some(x)
        } else {
            v.push(&join(self.path, key), format!("{expect}, got {x}"));
            None
        }
    }

    fn positive(&self, key: &str, default: Option<f64>, v: &mut Violations) -> Option<f64> {
        self.checked(key, default, |x| x > 0.0 && x.is_finite(), "must be > 0", v)
    }

    fn count(&self, key: &str, default: Option<i64>, min: i64, v: &mut Violations) -> Option<i64> {
        let path = join(self.path, key);
        let x = match (self.get(key), default) {
            (None, Some(d)) => return Some(d),
            (None, None) => {
                v.push(&path, "required key is missing");
                return None;
            }
            (Some(x), _) => x,
        };
        match x.as_integer() {
            Some(i) if i >= min => Some(i),
            Some(i) => {
                v.push(&path, format!("must be >= {min}, got {i}"));
                None
            }
            None => {
                v.push(&path, format!("expected an integer, got {x}"));
                None
            }
        }
    }

    fn string(&self, key: &str, default: Option<&str>, v: &mut Violations) -> Option<String> {
        let path = join(self.path, key);
        match (self.get(key), default) {
            (None, Some(d)) => Some(d.to_string()),
            (None, None) => {
                v.push(&path, "required key is missing");
                None
            }
            (Some(Value::String(s)), _) => Some(s.clone()),
            (Some(x), _) => {
                v.push(&path, format!("expected a string, got {x}"));
                None
            }
        }
    }

    fn boolean(&self, key: &str, default: bool, v: &mut Violations) -> Option<bool> {
        match self.get(key) {
            None => Some(default),
            Some(Value::Boolean(b)) => Some(*b),
            Some(x) => {
                v.push(&join(self.path, key), format!("expected true or false, got {x}"));
                None
            }
        }
    }

    fn vec3(&self, key: &str, default: Option<Vec3>, v: &mut Violations) -> Option<Vec3> {
        let path = join(self.path, key);
        match (self.get(key), default) {
            (None, Some(d)) => Some(d),
            (None, None) => {
                v.push(&path, "required key is missing");
                None
            }
            (Some(x), _) => match vec3(x) {
                Some(r) if r.iter().all(|c| c.is_finite()) => Some(r),
                _ => {
                    v.push(&path, format!("expected an array of three numbers, got {x}"));
                    None
                }
            },
        }
    }

    fn f64_list(&self, key: &str, default: Option<Vec<f64>>, v: &mut Violations) -> Option<Vec<f64>> {
        let path = join(self.path, key);
        match (self.get(key), default) {
            (None, Some(d)) => Some(d),
            (None, None) => {
                v.push(&path, "required key is missing");
                None
            }
            (Some(Value::Array(a)), _) if !a.is_empty() => {
                let xs: Option<Vec<f64>> = a.iter().map(as_f64).collect();
                match xs {
                    Some(xs) if xs.iter().all(|x| x.is_finite()) => Some(xs),
                    _ => {
                        v.push(&path, "expected an array of finite numbers");
                        None
                    }
                }
            }
            (Some(x), _) => {
                v.push(&path, format!("expected a non-empty array of numbers, got {x}"));
                None
            }
        }
    }

    fn int_list(&self, key: &str, default: Option<Vec<i64>>, min: i64, v: &mut Violations) -> Option<Vec<i64>> {
        let path = join(self.path, key);
        match (self.get(key), default) {
            (None, Some(d)) => Some(d),
            (None, None) => {
                v.push(&path, "required key is missing");
                None
            }
            (Some(Value::Array(a)), _) if !a.is_empty() => {
                let xs: Option<Vec<i64>> = a.iter().map(|x| x.as_integer()).collect();
                match xs {
                    Some(xs) if xs.iter().all(|x| *x >= min) => Some(xs),
                    _ => {
                        v.push(&path, format!("expected an array of integers >= {min}"));
                        None
                    }
                }
            }
            (Some(x), _) => {
                v.push(&path, format!("expected a non-empty array of integers, got {x}"));
                None
            }
        }
    }

    fn string_list(&self, key: &str, v: &mut Violations) -> Option<Vec<String>> {
        let path = join(self.path, key);
        match self.get(key) {
            None => {
                v.push(&path, "required key is missing");
                None
            }
            Some(Value::Array(a)) if !a.is_empty() => {
                let xs: Option<Vec<String>> = a.iter().map(|x| x.as_str().map(String::from)).collect();
                if xs.is_none() {
                    v.push(&path, "expected an array of strings");
                }
                xs
            }
            Some(x) => {
                v.push(&path, format!("expected a non-empty array of strings, got {x}"));
                None
            }
        }
    }
}

/// Table at `key` under `parent`; absent tables are allowed unless `required`.
fn child<'a>(parent: &'a Table, key: &'a str, required: bool, v: &mut Violations) -> Node<'a> {
    match parent.get(key) {
        Some(Value::Table(t)) => Node { table: Some(t), path: key },
        Some(x) => {
            v.push(key, format!("expected a table, got {x}"));
            Node { table: None, path: key }
        }
        None => {
            if required {
                v.push(key, "required table is missing");
            }
            Node { table: None, path: key }
        }
    }
}

fn array_of_tables<'a>(parent: &'a Table, key: &str, v: &mut Violations) -> Vec<(String, &'a Table)> {
    match parent.get(key) {
        None => Vec::new(),
        Some(Value::Array(a)) => a
            .iter()
            .enumerate()
            .filter_map(|(i, x)| match x {
                Value::Table(t) => Some((format!("{key}[{i}]"), t)),
                _ => {
                    v.push(&format!("{key}[{i}]"), "expected a table");
                    None
                }
            })
            .collect(),
        Some(x) => {
            v.push(key, format!("expected an array of tables, got {x}"));
            Vec::new()
        }
    }
}

/// Records a violation if `id` is not in `known`.
fn resolve(path: &str, kind: &str, id: &str, known: &BTreeSet<String>, v: &mut Violations) {
    if !known.contains(id) {
        let list: Vec<&str> = known.iter().map(String::as_str).collect();
        v.push(path, format!("undefined {kind} id `{id}` (defined: {})", list.join(", ")));
    }
}

fn parse_estimator(name: &str, contrast: f64) -> Option<Estimator> {
    Some(match name {
        "arctan2" => Estimator::Arctan2,
        "arctan2-offset" => Estimator::Arctan2Offset,
        "arcsin" => Estimator::Arcsin { contrast },
        "settings-plain" => Estimator::Settings(SettingsTag::Plain),
        "settings-i" => Estimator::Settings(SettingsTag::I),
        "settings-ii" => Estimator::Settings(SettingsTag::II),
        "settings-iii" => Estimator::Settings(SettingsTag::III),
        "settings-averaged" => Estimator::AveragedSettings,
        _ => return None,
    })
}

const ESTIMATORS: &str = "arctan2, arctan2-offset, arcsin, settings-plain, settings-i, settings-ii, settings-iii, settings-averaged";

struct Ids {
    settings: BTreeSet<String>,
    beams: BTreeSet<String>,
    electrodes: BTreeSet<String>,
}

fn parse(root: &Table, v: &mut Violations) -> Option<ScenarioConfig> {
    let top = Node { table: Some(root), path: "" };

    let schema = top.count("schema_version", None, 0, v);
    if let Some(s) = schema {
        if s != SCHEMA_VERSION {
            v.push("schema_version", format!("unsupported version {s}, expected {SCHEMA_VERSION}"));
        }
    }
    let scenario = top.string("scenario", None, v).and_then(|s| match s.parse::<Scenario>() {
        Ok(sc) => Some(sc),
        Err(_) => {
            let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
            v.push("scenario", format!("unknown scenario `{s}` (known: {})", names.join(", ")));
            None
        }
    });
    let seed = top.count("seed", None, 0, v).map(|s| s as u64);
    let output_dir = top.string("output_dir", Some(""), v).filter(|s| !s.is_empty()).map(PathBuf::from);

    // ion
    let ion_node = child(root, "ion", false, v);
    let mass_u = ion_node.positive("mass_u", Some(88.0), v);
    let charge_e = ion_node.positive("charge_e", Some(1.0), v);
    let ion = match (mass_u, charge_e) {
        (Some(m), Some(q)) => IonSpecies::new(q * ELEMENTARY_CHARGE, m * ATOMIC_MASS_UNIT).ok(),
        _ => None,
    };

    // timing
    let timing_node = child(root, "timing", false, v);
    let pi_time = timing_node.positive("pi_time_s", Some(10e-6), v);
    let wait = timing_node.checked("wait_s", Some(50e-6), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
    let timing = match (pi_time, wait) {
        (Some(p), Some(w)) => Timing::new(p, w).ok(),
        _ => None,
    };

    // noise
    let noise_node = child(root, "noise", false, v);
    let t2 = noise_node.checked("t2_s", Some(f64::INFINITY), |x| x > 0.0, "must be > 0 (omit for no dephasing)", v);
    let even = noise_node.positive("area_error_even", Some(1.0), v);
    let odd = noise_node.positive("area_error_odd", Some(1.0), v);
    let detuning = noise_node.f64_or("detuning_hz", 0.0, v);
    let sampling = noise_node.boolean("projection_sampling", true, v);
    let dephase_pulses = noise_node.boolean("dephase_during_pulses", true, v);
    let noise = match (t2, even, odd, detuning, sampling, dephase_pulses) {
        (Some(t2), Some(e), Some(o), Some(d), Some(s), Some(dp)) => {
            let mut n = NoiseModel::ideal()
                .with_t2(t2)
                .with_area_errors(e, o)
                .with_detuning(hz_to_angular(d))
                .with_sampling(s);
            n.dephase_during_pulses = dp;
            Some(n)
        }
        _ => None,
    };

    // estimator
    let est_node = child(root, "estimator", false, v);
    let contrast = est_node.checked("contrast", Some(1.0), |c| c > 0.0 && c <= 1.0, "must be in (0, 1]", v);
    let estimator = est_node.string("kind", Some("arctan2"), v).and_then(|k| {
        let e = parse_estimator(&k, contrast.unwrap_or(1.0));
        if e.is_none() {
            v.push("estimator.kind", format!("unknown estimator `{k}` (known: {ESTIMATORS})"));
        }
        e
    });

    // trap
    let trap = child(root, "trap", false, v);
    let mut settings = Vec::new();
    let mut ids = Ids {
        settings: BTreeSet::new(),
        beams: BTreeSet::new(),
        electrodes: BTreeSet::new(),
    };
    if let Some(t) = trap.table {
        for (path, table) in array_of_tables(t, "settings", v) {
            let path = format!("trap.{path}");
            let node = Node { table: Some(table), path: &path };
            let id = node.string("id", None, v);
            let hz = node.vec3("secular_hz", None, v);
            if let (Some(id), Some(hz)) = (id, hz) {
                if !ids.settings.insert(id.clone()) {
                    v.push(&path, format!("duplicate setting id `{id}`"));
                }
                match TrapSetting::from_hz(id, [hz.x, hz.y, hz.z]) {
                    Ok(s) => settings.push(s),
                    Err(e) => v.push(&join(&path, "secular_hz"), e),
                }
            }
        }
    }
    let drive = if trap.get("rf_drive_hz").is_some() {
        let rf = trap.positive("rf_drive_hz", None, v);
        let axial = trap.checked("rf_axial_hz", Some(0.0), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
        rf.zip(axial).map(|(rf_drive_hz, rf_axial_hz)| DriveConfig { rf_drive_hz, rf_axial_hz })
    } else {
        None
    };

    // beams
    let mut beams = Vec::new();
    for (path, table) in array_of_tables(root, "beams", v) {
        let node = Node { table: Some(table), path: &path };
        let id = node.string("id", None, v);
        let dir = node.vec3("direction", None, v);
        let lambda = node.positive("wavelength_m", Some(674e-9), v);
        let offset = node.f64_or("phase_offset_rad", 0.0, v);
        if let (Some(id), Some(dir), Some(lambda), Some(offset)) = (id, dir, lambda, offset) {
            if !ids.beams.insert(id.clone()) {
                v.push(&path, format!("duplicate beam id `{id}`"));
            }
            match LaserBeam::along(dir, lambda) {
                Ok(b) => beams.push((id, b.with_phase_offset(offset))),
                Err(e) => v.push(&join(&path, "direction"), e),
            }
        }
    }

    // electrodes
    let mut electrodes = Vec::new();
    for (path, table) in array_of_tables(root, "electrodes", v) {
        let node = Node { table: Some(table), path: &path };
        let id = node.string("id", None, v);
        let field = node.vec3("field_per_volt_v_per_m", None, v);
        if let (Some(id), Some(field)) = (id, field) {
            if !ids.electrodes.insert(id.clone()) {
                v.push(&path, format!("duplicate electrode id `{id}`"));
            }
            if field.norm() == 0.0 {
                v.push(&join(&path, "field_per_volt_v_per_m"), "electrode field must be non-zero");
            }
            electrodes.push((id, field));
        }
    }

    // drift
    let drift_node = child(root, "drift", false, v);
    let rate = drift_node.checked("field_rate_v_per_m_per_sqrt_s", Some(0.0), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
    let vnoise = drift_node.checked("voltage_noise_v", Some(0.0), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
    let drift = rate.zip(vnoise).and_then(|(r, n)| DriftModel::new(r, n).ok());

    // schedule
    let sched = child(root, "schedule", false, v);
    let shots = sched.count("shots", Some(100), 1, v);
    let ms = sched.int_list("m", Some(vec![1]), 1, v);
    let theta_t = sched.f64_list("theta_t_rad", Some(vec![0.0]), v);
    let passes = sched.int_list("passes", Some(Vec::new()), 2, v);
    let schedule = match (shots, ms, theta_t, passes) {
        (Some(s), Some(m), Some(t), Some(p)) => Some(Schedule {
            shots: s as u64,
            m: m.into_iter().map(|x| x as u32).collect(),
            theta_t: t,
            passes: p.into_iter().map(|x| x as u64).collect(),
        }),
        _ => None,
    };

    let params = scenario.and_then(|sc| {
        let node = child(root, sc.table(), false, v);
        parse_params(sc, node, &ids, drive.is_some(), schedule.as_ref(), v)
    });

    Some(ScenarioConfig {
        scenario: scenario?,
        seed: seed?,
        output_dir,
        ion: ion?,
        timing: timing?,
        noise: noise?,
        estimator: estimator?,
        settings,
        drive,
        beams,
        electrodes,
        drift: drift?,
        schedule: schedule?,
        params: params?,
    })
}

fn parse_params(
    sc: Scenario,
    node: Node<'_>,
    ids: &Ids,
    has_drive: bool,
    schedule: Option<&Schedule>,
    v: &mut Violations,
) -> Option<ScenarioParams> {
    let p = node.path;
    let setting_ref = |key: &str, default: Option<&str>, v: &mut Violations| -> Option<String> {
        let id = node.string(key, default, v)?;
        resolve(&join(p, key), "setting", &id, &ids.settings, v);
        Some(id)
    };
    let beam_ref = |key: &str, default: Option<&str>, v: &mut Violations| -> Option<String> {
        let id = node.string(key, default, v)?;
        resolve(&join(p, key), "beam", &id, &ids.beams, v);
        Some(id)
    };
    let need_drive = |v: &mut Violations| {
        if !has_drive {
            v.push("trap.rf_drive_hz", format!("required by scenario `{sc}`"));
        }
    };

    Some(match sc {
        Scenario::Fringe => {
            let method = node.string("method", Some("A"), v);
            let method = match method.as_deref() {
                Some("A") => {
                    let beam = beam_ref("beam", None, v);
                    let a = setting_ref("setting_a", Some("A"), v);
                    let b = setting_ref("setting_b", Some("B"), v);
                    Some(FringeMethod::A {
                        beam: beam?,
                        setting_a: a?,
                        setting_b: b?,
                    })
                }
                Some("B") => {
                    let alpha = beam_ref("alpha", None, v);
                    let beta = beam_ref("beta", None, v);
                    let s = setting_ref("setting", Some("A"), v);
                    Some(FringeMethod::B {
                        alpha: alpha?,
                        beta: beta?,
                        setting: s?,
                    })
                }
                Some(other) => {
                    v.push(&join(p, "method"), format!("expected `A` or `B`, got `{other}`"));
                    None
                }
                None => None,
            };
            let dir = node.vec3("field_direction", None, v).and_then(|d| {
                if d.norm() == 0.0 {
                    v.push(&join(p, "field_direction"), "must be non-zero");
                    None
                } else {
                    Some(d.normalize())
                }
            });
            let span = node.positive("span_v_per_m", None, v);
            let points = node.count("points", Some(401), 2, v);
            ScenarioParams::Fringe(FringeParams {
                method: method?,
                field_direction: dir?,
                span_v_per_m: span?,
                points: points? as usize,
            })
        }
        Scenario::MethodBDrift => {
            let alpha = beam_ref("alpha", None, v);
            let beta = beam_ref("beta", None, v);
            let a = setting_ref("setting_a", Some("A"), v);
            let b = setting_ref("setting_b", Some("B"), v);
            let field = node.vec3("field_v_per_m", None, v);
            let step = node.checked("drift_step_rad", Some(0.3), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
            let steps = node.count("steps", Some(200), 1, v);
            ScenarioParams::MethodBDrift(MethodBDriftParams {
                alpha: alpha?,
                beta: beta?,
                setting_a: a?,
                setting_b: b?,
                field: field?,
                drift_step_rad: step?,
                steps: steps? as usize,
            })
        }
        Scenario::ClosedLoop => {
            let a = setting_ref("setting_a", Some("A"), v);
            let b = setting_ref("setting_b", Some("B"), v);
            let mut observables = Vec::new();
            let obs_tables = node.table.map(|t| array_of_tables(t, "observables", v)).unwrap_or_default();
            if obs_tables.is_empty() {
                v.push(&join(p, "observables"), "at least one observable is required");
            }
            for (path, table) in obs_tables {
                let path = join(p, &path);
                let o = Node { table: Some(table), path: &path };
                let beam = o.string("beam", None, v);
                if let Some(b) = &beam {
                    resolve(&join(&path, "beam"), "beam", b, &ids.beams, v);
                }
                let m = o.count("m", Some(1), 1, v);
                if let (Some(beam), Some(m)) = (beam, m) {
                    observables.push(ObservableSpec { beam, m: m as u32 });
                }
            }
            if ids.electrodes.is_empty() {
                v.push("electrodes", format!("scenario `{sc}` needs at least one electrode"));
            }
            let duration = node.positive("duration_s", None, v);
            let interval = node.positive("interval_s", None, v);
            if let (Some(d), Some(i)) = (duration, interval) {
                if i > d {
                    v.push(&join(p, "interval_s"), format!("must not exceed duration_s ({d}), got {i}"));
                }
            }
            let initial = node.vec3("initial_field_v_per_m", Some(Vec3::zeros()), v);
            let amp = node.positive("scan_amplitude_v", Some(2.0), v);
            let points = node.count("scan_points", Some(11), 3, v);
            let reduced = node.checked("reduced_rf_power", Some(0.16), |x| (0.0..1.0).contains(&x), "must be in [0, 1)", v);
            let fit_max = node.count("fit_max_window", Some(256), 2, v);
            ScenarioParams::ClosedLoop(ClosedLoopParams {
                observables,
                setting_a: a?,
                setting_b: b?,
                duration_s: duration?,
                interval_s: interval?,
                initial_field: initial?,
                scan_amplitude_v: amp?,
                scan_points: points? as usize,
                reduced_rf_power: reduced?,
                fit_max_window: fit_max? as usize,
            })
        }
        Scenario::Robustness => {
            let m = node.count("m", Some(16), 2, v).and_then(|m| {
                if m % 2 == 1 {
                    v.push(&join(p, "m"), format!("must be even, got {m}"));
                    None
                } else {
                    Some(m as u32)
                }
            });
            let phi_points = node.count("phi_points", Some(360), 2, v);
            let evens = node.f64_list("even_factors", Some(vec![0.9, 1.0, 1.1]), v);
            if let Some(e) = &evens {
                if e.iter().any(|x| *x <= 0.0) {
                    v.push(&join(p, "even_factors"), "area factors must be > 0");
                }
            }
            let odd = node.positive("odd_factor", Some(1.0), v);
            let det = node.f64_list("detunings_hz", Some(vec![0.0]), v);
            let names = if node.get("estimators").is_some() {
                node.string_list("estimators", v)
            } else {
                Some(vec!["settings-i".into(), "settings-ii".into(), "settings-iii".into(), "settings-averaged".into()])
            };
            let estimators = names.and_then(|names| {
                let mut out = Vec::new();
                let mut ok = true;
                for n in names {
                    match parse_estimator(&n, 1.0) {
                        Some(e) => out.push((n, e)),
                        None => {
                            v.push(&join(p, "estimators"), format!("unknown estimator `{n}` (known: {ESTIMATORS})"));
                            ok = false;
                        }
                    }
                }
                ok.then_some(out)
            });
            ScenarioParams::Robustness(RobustnessParams {
                m: m?,
                phi_points: phi_points? as usize,
                even_factors: evens?,
                odd_factor: odd?,
                detunings_hz: det?,
                estimators: estimators?,
            })
        }
        Scenario::RpeScaling => {
            let j_max = node.count("j_max", Some(5), 1, v);
            let trials = node.count("trials", Some(2000), 2, v);
            if let (Some(j), Some(s)) = (j_max, schedule) {
                if !s.passes.is_empty() && s.passes.len() < j as usize {
                    v.push(
                        "schedule.passes",
                        format!("needs at least j_max = {j} entries, got {}", s.passes.len()),
                    );
                }
                if s.passes.is_empty() && s.shots < 2 {
                    v.push("schedule.shots", "binary search needs at least 2 shots per pass");
                }
            }
            ScenarioParams::RpeScaling(RpeScalingParams {
                j_max: j_max? as u32,
                trials: trials? as u64,
            })
        }
        Scenario::Geometry2d => {
            need_drive(v);
            let setting = setting_ref("setting", Some("A"), v);
            let beams = node.string_list("beams", v).and_then(|b| {
                if b.len() != 2 {
                    v.push(&join(p, "beams"), format!("expected two beam ids, got {}", b.len()));
                    return None;
                }
                for id in &b {
                    resolve(&join(p, "beams"), "beam", id, &ids.beams, v);
                }
                Some([b[0].clone(), b[1].clone()])
            });
            let radial = node.f64_list("b_radial_hz", None, v);
            if let Some(r) = &radial {
                if r.iter().any(|x| *x <= 0.0) {
                    v.push(&join(p, "b_radial_hz"), "frequencies must be > 0");
                }
            }
            let hybrid = match node.get("hybrid") {
                None => Some(None),
                Some(Value::Table(t)) => {
                    let hp = join(p, "hybrid");
                    let h = Node { table: Some(t), path: &hp };
                    let beam = h.string("beam", None, v);
                    if let Some(b) = &beam {
                        resolve(&join(&hp, "beam"), "beam", b, &ids.beams, v);
                    }
                    let els = h.string_list("electrodes", v).and_then(|e| {
                        if e.len() != 2 {
                            v.push(&join(&hp, "electrodes"), format!("expected two electrode ids, got {}", e.len()));
                            return None;
                        }
                        for id in &e {
                            resolve(&join(&hp, "electrodes"), "electrode", id, &ids.electrodes, v);
                        }
                        Some([e[0].clone(), e[1].clone()])
                    });
                    let b_radial = h.positive("b_radial_hz", None, v);
                    let initial = h.vec3("initial_field_v_per_m", None, v);
                    let area = h.positive("sideband_area_pi", Some(50.0), v);
                    let shots = h.count("sideband_shots", Some(200), 1, v);
                    let width = h.positive("search_halfwidth_v", Some(2.0), v);
                    let steps = h.count("search_steps", Some(25), 1, v);
                    let pth = h.positive("phase_threshold_rad", Some(0.15), v);
                    let sth = h.positive("sideband_threshold", Some(2e-3), v);
                    let rounds = h.count("max_rounds", Some(12), 1, v);
                    (|| {
                        Some(Some(HybridParams {
                            beam: beam?,
                            electrodes: els?,
                            b_radial_hz: b_radial?,
                            initial_field: initial?,
                            sideband_area_pi: area?,
                            sideband_shots: shots? as u64,
                            search_halfwidth_v: width?,
                            search_steps: steps? as usize,
                            phase_threshold_rad: pth?,
                            sideband_threshold: sth?,
                            max_rounds: rounds? as usize,
                        }))
                    })()
                }
                Some(x) => {
                    v.push(&join(p, "hybrid"), format!("expected a table, got {x}"));
                    None
                }
            };
            ScenarioParams::Geometry2d(Geometry2dParams {
                setting: setting?,
                beams: beams?,
                b_radial_hz: radial?,
                hybrid: hybrid?,
            })
        }
        Scenario::Axial => {
            need_drive(v);
            let setting = setting_ref("setting", Some("A"), v);
            let beam = beam_ref("beam", None, v);
            let electrode = node.string("electrode", None, v);
            if let Some(e) = &electrode {
                resolve(&join(p, "electrode"), "electrode", e, &ids.electrodes, v);
            }
            let scale = node.checked("b_scale", Some(0.6), |x| x > 0.0 && x < 1.0, "must be in (0, 1)", v);
            let m = node.count("m", Some(1), 1, v);
            let initial = node.vec3("initial_field_v_per_m", None, v);
            let amp = node.positive("scan_amplitude_v", Some(0.5), v);
            let points = node.count("scan_points", Some(5), 3, v);
            let updates = node.count("updates", Some(10), 1, v);
            ScenarioParams::Axial(AxialParams {
                setting: setting?,
                beam: beam?,
                electrode: electrode?,
                b_scale: scale?,
                m: m? as u32,
                initial_field: initial?,
                scan_amplitude_v: amp?,
                scan_points: points? as usize,
                updates: updates? as usize,
            })
        }
        Scenario::StatUncertainty => {
            let n = node.int_list("n", Some(vec![20, 40, 80]), 1, v);
            let trials = node.count("trials", Some(20_000), 2, v);
            let phi_points = node.count("phi_points", Some(61), 2, v);
            ScenarioParams::StatUncertainty(StatUncertaintyParams {
                n: n?.into_iter().map(|x| x as u64).collect(),
                trials: trials? as u64,
                phi_points: phi_points? as usize,
            })
        }
        Scenario::Resonator => {
            let tau = node.positive("tau_s", Some(17e-6), v);
            let a1 = node.positive("a1", Some(1.0), v);
            let a2 = node.checked("a2", Some(0.7), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
            let dphi = node.f64_list("delta_phi_rad", Some(vec![0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI]), v);
            let t_switch = node.checked("t_switch_s", Some(20e-6), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
            let t_revert = node.positive("t_revert_s", Some(300e-6), v);
            let t_end = node.positive("t_end_s", Some(400e-6), v);
            let dt = node.positive("dt_s", Some(0.5e-6), v);
            if let (Some(s), Some(r)) = (t_switch, t_revert) {
                if r <= s {
                    v.push(&join(p, "t_revert_s"), format!("must be after t_switch_s ({s}), got {r}"));
                }
            }
            let tol = node.checked("settle_tolerance", Some(0.05), |x| x > 0.0 && x < 1.0, "must be in (0, 1)", v);
            let floor = node.checked("ion_loss_floor", Some(0.1), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
            let servo = match node.string("servo", Some("ideal"), v).as_deref() {
                Some("ideal") => Some(ServoMode::Ideal),
                Some("steady-state-corrected") => {
                    let g = node.positive("path_gain", None, v);
                    let d = node.checked("correction_delay_s", Some(0.0), |x| x >= 0.0 && x.is_finite(), "must be >= 0", v);
                    g.zip(d).map(|(path_gain, delay)| ServoMode::SteadyStateCorrected { path_gain, delay })
                }
                Some("ramped") => node.positive("ramp_time_s", None, v).map(|ramp_time| ServoMode::Ramped { ramp_time }),
                Some(other) => {
                    v.push(
                        &join(p, "servo"),
                        format!("expected ideal, steady-state-corrected or ramped, got `{other}`"),
                    );
                    None
                }
                None => None,
            };
            ScenarioParams::Resonator(ResonatorParamsCfg {
                tau_s: tau?,
                a1: a1?,
                a2: a2?,
                delta_phi_rad: dphi?,
                t_switch_s: t_switch?,
                t_revert_s: t_revert?,
                t_end_s: t_end?,
                dt_s: dt?,
                settle_tolerance: tol?,
                ion_loss_floor: floor?,
                servo: servo?,
            })
        }
    })
}
