//! Named experiments. Each writes its CSV files into the output directory
//! and returns headline metrics for the report.

mod estimation;
mod geometry;
mod interferometry;
mod loops;
mod resonator;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::Value;
use trapcal_core::pulse::Apparatus;
use trapcal_core::rng::StreamKey;
use trapcal_core::trap::{hz_to_angular, RfDriveModel, TrapSetting};

use crate::config::{ScenarioConfig, ScenarioParams, SCHEMA_VERSION};
use crate::error::CliError;
use crate::output::{write_report, OutputDir, RunReport};

/// Directory used when neither the command line nor the config names one.
pub const DEFAULT_OUTPUT_DIR: &str = "trapcal-out";

pub(crate) type Metrics = BTreeMap<String, Value>;

pub(crate) struct Ctx<'a> {
    pub cfg: &'a ScenarioConfig,
    pub out: OutputDir,
    pub metrics: Metrics,
}

impl Ctx<'_> {
    /// Root of the random streams for this run; `label` separates the parts
    /// of one scenario.
    pub fn key(&self, label: &str) -> StreamKey {
        StreamKey::new(self.cfg.seed, self.cfg.scenario.name()).child(label)
    }

    pub fn metric(&mut self, key: impl Into<String>, value: impl Into<Value>) {
        self.metrics.insert(key.into(), value.into());
    }

    /// Every configured setting and beam.
    pub fn apparatus(&self) -> Apparatus {
        let mut app = Apparatus::new(self.cfg.ion.clone());
        for s in &self.cfg.settings {
            app.insert_setting(s.clone());
        }
        for (id, b) in &self.cfg.beams {
            app.insert_beam(id.clone(), b.clone());
        }
        app
    }

    pub fn setting(&self, id: &str) -> Result<&TrapSetting, CliError> {
        self.cfg
            .setting(id)
            .ok_or_else(|| CliError::ConfigInvalid(vec![format!("undefined setting id `{id}`")]))
    }

    /// Drive model fitted to setting `id`.
    pub fn drive_model(&self, id: &str) -> Result<RfDriveModel, CliError> {
        let drive = self
            .cfg
            .drive
            .as_ref()
            .ok_or_else(|| CliError::ConfigInvalid(vec!["trap.rf_drive_hz: required".into()]))?;
        Ok(RfDriveModel::fit(
            self.setting(id)?,
            hz_to_angular(drive.rf_axial_hz),
            hz_to_angular(drive.rf_drive_hz),
        )?)
    }
}

/// Runs the configured scenario, writing into `cfg.output_dir` (or
/// [`DEFAULT_OUTPUT_DIR`]) and returning the report also saved as
/// `report.json`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let root = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    run_scenario_in(cfg, &root)
}

pub fn run_scenario_in(cfg: &ScenarioConfig, root: &Path) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut ctx = Ctx {
        cfg,
        out: OutputDir::create(root)?,
        metrics: Metrics::new(),
    };
    match &cfg.params {
        ScenarioParams::Fringe(p) => interferometry::fringe(&mut ctx, p)?,
        ScenarioParams::MethodBDrift(p) => interferometry::method_b_drift(&mut ctx, p)?,
        ScenarioParams::ClosedLoop(p) => loops::closed_loop(&mut ctx, p)?,
        ScenarioParams::Axial(p) => loops::axial(&mut ctx, p)?,
        ScenarioParams::Robustness(p) => estimation::robustness(&mut ctx, p)?,
        ScenarioParams::RpeScaling(p) => estimation::rpe_scaling(&mut ctx, p)?,
        ScenarioParams::StatUncertainty(p) => estimation::stat_uncertainty(&mut ctx, p)?,
        ScenarioParams::Geometry2d(p) => geometry::geometry_2d(&mut ctx, p)?,
        ScenarioParams::Resonator(p) => resonator::resonator(&mut ctx, p)?,
    }
    let Ctx { out, metrics, .. } = ctx;
    let report = RunReport {
        scenario: cfg.scenario.name().to_string(),
        seed: cfg.seed,
        schema_version: SCHEMA_VERSION,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.into_files(),
        metrics,
    };
    write_report(root, &report)?;
    Ok(report)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Cell-centred grid over `[-pi, pi)`.
pub(crate) fn phase_grid(n: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..n).map(|k| -PI + 2.0 * PI * (k as f64 + 0.5) / n as f64).collect()
}

/// Removes `2 pi` jumps between consecutive samples.
pub(crate) fn unwrap(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    for (i, &p) in phases.iter().enumerate() {
        if i == 0 {
            out.push(p);
        } else {
            let prev: f64 = out[i - 1];
            out.push(prev + trapcal_core::trap::wrap_phase(p - phases[i - 1]));
        }
    }
    out
}
