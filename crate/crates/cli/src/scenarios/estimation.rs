use rayon::prelude::*;
use trapcal_core::estimators::{sql_bound, RpeSchedule};
use trapcal_core::protocol::{arctan2_rms_curve, arctan2_rms_uniform, phi_pd_bias, RpeExperiment};
use trapcal_core::stats::loglog_fit;
use trapcal_core::trap::hz_to_angular;

use super::{phase_grid, Ctx};
use crate::config::{RobustnessParams, RpeScalingParams, StatUncertaintyParams};
use crate::error::CliError;
use crate::output::{header, Cell};

/// `robustness.csv`: estimator, even_factor, odd_factor, detuning_hz,
/// phi_pd_rad, bias_rad.
pub(super) fn robustness(ctx: &mut Ctx<'_>, p: &RobustnessParams) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let grid = phase_grid(p.phi_points);
    let mut rows = Vec::new();
    for (name, est) in &p.estimators {
        let mut worst = 0.0f64;
        for &even in &p.even_factors {
            for &det in &p.detunings_hz {
                let noise = cfg
                    .noise
                    .with_area_errors(even, p.odd_factor)
                    .with_detuning(hz_to_angular(det));
                let biases = grid
                    .par_iter()
                    .map(|&phi| phi_pd_bias(phi, p.m, *est, &noise, &cfg.timing))
                    .collect::<Result<Vec<f64>, _>>()?;
                for (&phi, &b) in grid.iter().zip(&biases) {
                    worst = worst.max(b.abs());
                    rows.push(vec![
                        Cell::from(name.as_str()),
                        even.into(),
                        p.odd_factor.into(),
                        det.into(),
                        phi.into(),
                        b.into(),
                    ]);
                }
            }
        }
        ctx.metric(format!("max_abs_bias_rad.{name}"), worst);
    }
    ctx.out.write_csv(
        "robustness.csv",
        &header(&["estimator", "even_factor", "odd_factor", "detuning_hz", "phi_pd_rad", "bias_rad"]),
        rows,
    )
}

/// `rpe_scaling.csv`: j_max, m_max, total_area_rad, rms_error_rad, sql_rad.
pub(super) fn rpe_scaling(ctx: &mut Ctx<'_>, p: &RpeScalingParams) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let mut rows = Vec::new();
    let (mut areas, mut errs) = (Vec::new(), Vec::new());
    for j in 1..=p.j_max {
        let schedule = if cfg.schedule.passes.is_empty() {
            RpeSchedule::uniform(j, cfg.schedule.shots)?
        } else {
            RpeSchedule::new(cfg.schedule.passes[..j as usize].to_vec())?
        };
        let exp = RpeExperiment::new(schedule, cfg.timing, cfg.noise);
        let rms = exp.rms_error(p.trials, &ctx.key(&format!("j{j}")))?;
        let area = exp.total_area();
        let sql = sql_bound(area)?;
        rows.push(vec![Cell::from(j), RpeSchedule::sequence_length(j).into(), area.into(), rms.into(), sql.into()]);
        areas.push(area);
        errs.push(rms);
        if j == p.j_max {
            ctx.metric("final_rms_error_rad", rms);
            ctx.metric("final_sql_rad", sql);
            ctx.metric("below_sql", rms < sql);
        }
    }
    if areas.len() >= 2 {
        ctx.metric("fitted_exponent", loglog_fit(&areas, &errs)?.slope);
    }
    ctx.out.write_csv(
        "rpe_scaling.csv",
        &header(&["j_max", "m_max", "total_area_rad", "rms_error_rad", "sql_rad"]),
        rows,
    )
}

/// `stat_uncertainty.csv`: n, rms_error_rad, rms_times_sqrt_n.
/// `stat_uncertainty_curve.csv`: n, phi_t_rad, rms_error_rad.
pub(super) fn stat_uncertainty(ctx: &mut Ctx<'_>, p: &StatUncertaintyParams) -> Result<(), CliError> {
    let grid = phase_grid(p.phi_points);
    let mut rows = Vec::new();
    let mut curve = Vec::new();
    for &n in &p.n {
        let rms = arctan2_rms_uniform(n, p.trials, &ctx.key(&format!("uniform-n{n}")));
        let coeff = rms * (n as f64).sqrt();
        ctx.metric(format!("rms_times_sqrt_n.n{n}"), coeff);
        rows.push(vec![Cell::from(n), rms.into(), coeff.into()]);
        let at = arctan2_rms_curve(&grid, n, p.trials, &ctx.key(&format!("curve-n{n}")));
        curve.extend(grid.iter().zip(at).map(|(&phi, r)| vec![Cell::from(n), phi.into(), r.into()]));
    }
    ctx.out.write_csv(
        "stat_uncertainty.csv",
        &header(&["n", "rms_error_rad", "rms_times_sqrt_n"]),
        rows,
    )?;
    ctx.out.write_csv(
        "stat_uncertainty_curve.csv",
        &header(&["n", "phi_t_rad", "rms_error_rad"]),
        curve,
    )
}
