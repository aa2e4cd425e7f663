use trapcal_core::compensation::{
    allan_style_deviation_vec, calibrate_gradient_matrix, closed_loop_run, duty_cycle_report, residual_rf_field,
    DriftModel, ElectrodeGeometry, GradientMatrix, LoopConfig, LoopTrace, Observable, RfOperatingPoint, RfSegment,
    ScanConfig,
};
use trapcal_core::pulse::{Apparatus, SequenceSpec};
use trapcal_core::stats::loglog_fit;
use trapcal_core::trap::{StrayField, Vec3};

use super::Ctx;
use crate::config::{AxialParams, ClosedLoopParams};
use crate::error::CliError;
use crate::output::{header, Cell};

fn observable(ctx: &Ctx<'_>, name: String, beam: &str, m: u32, a: &str, b: &str) -> Result<Observable, CliError> {
    let cfg = ctx.cfg;
    Ok(Observable {
        name,
        template: SequenceSpec::method_a(m, beam, a, b, &vec![0.0; m as usize + 1], &cfg.timing)?,
        estimator: cfg.estimator,
        shots: cfg.schedule.shots,
    })
}

fn write_gradient(ctx: &mut Ctx<'_>, lc: &LoopConfig, gm: &GradientMatrix, electrodes: &[String]) -> Result<(), CliError> {
    let mut cols = vec!["observable".to_string()];
    cols.extend(electrodes.iter().map(|e| format!("{e}_rad_per_v")));
    let rows = lc.observables.iter().enumerate().map(|(i, o)| {
        let mut row = vec![Cell::from(o.name.as_str())];
        row.extend((0..gm.matrix.ncols()).map(|j| Cell::from(gm.matrix[(i, j)])));
        row
    });
    ctx.out.write_csv("gradient.csv", &cols, rows)
}

/// `closed_loop.csv`: t_s, Ex_true, Ey_true, Ez_true, Ex_est, Ey_est, Ez_est,
/// V1..Vn, Erf_Vm. `allan.csv`: window, tau_s, deviation_v_per_m.
/// `gradient.csv`: observable, then one slope column per electrode.
pub(super) fn closed_loop(ctx: &mut Ctx<'_>, p: &ClosedLoopParams) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let observables = p
        .observables
        .iter()
        .enumerate()
        .map(|(i, o)| observable(ctx, format!("{}{}_m{}", o.beam, i, o.m), &o.beam, o.m, &p.setting_a, &p.setting_b))
        .collect::<Result<Vec<_>, _>>()?;
    let columns: Vec<Vec3> = cfg.electrodes.iter().map(|(_, v)| *v).collect();
    let rf = match cfg.drive {
        Some(_) => Some(RfOperatingPoint::new(ctx.drive_model(&p.setting_a)?, 1.0)?),
        None => None,
    };
    let lc = LoopConfig {
        apparatus: ctx.apparatus(),
        observables,
        geometry: ElectrodeGeometry::new(&columns)?,
        noise: cfg.noise,
        rf,
    };
    let scan = ScanConfig {
        amplitude: p.scan_amplitude_v,
        points: p.scan_points,
        base_field: StrayField::zero(),
    };
    let gm = calibrate_gradient_matrix(&lc, &scan, &mut ctx.key("calibration").stream(0))?;
    let trace = closed_loop_run(
        p.duration_s,
        p.interval_s,
        &lc,
        &gm,
        &cfg.drift,
        &StrayField::new(p.initial_field)?,
        &ctx.key("loop"),
    )?;
    let electrode_ids: Vec<String> = cfg.electrodes.iter().map(|(id, _)| id.clone()).collect();
    write_gradient(ctx, &lc, &gm, &electrode_ids)?;
    write_trace(ctx, &trace, electrode_ids.len())?;

    ctx.metric("gradient_condition_number", gm.condition_number());
    if let Some(last) = trace.samples.last() {
        ctx.metric("final_residual_norm_v_per_m", last.residual.norm());
        ctx.metric("final_residual_radial_v_per_m", last.residual.xy().norm());
        ctx.metric("final_residual_rf_v_per_m", last.e_rf);
    }
    let half = &trace.samples[trace.samples.len() / 2..];
    let rms_res = (half.iter().map(|s| s.residual.norm_squared()).sum::<f64>() / half.len() as f64).sqrt();
    ctx.metric("late_rms_residual_v_per_m", rms_res);

    if trace.samples.len() >= 4 {
        let dev = allan_style_deviation_vec(&trace.estimates(), trace.interval)?;
        let (tau, d): (Vec<f64>, Vec<f64>) = dev
            .iter()
            .filter(|pt| pt.window <= p.fit_max_window)
            .map(|pt| (pt.tau, pt.deviation))
            .unzip();
        if tau.len() >= 2 {
            ctx.metric("allan_exponent", loglog_fit(&tau, &d)?.slope);
        }
        if let Some(min) = dev.iter().min_by(|a, b| a.deviation.total_cmp(&b.deviation)) {
            ctx.metric("allan_min_v_per_m", min.deviation);
            ctx.metric("allan_min_tau_s", min.tau);
        }
        let rows = dev.iter().map(|pt| vec![Cell::from(pt.window), pt.tau.into(), pt.deviation.into()]);
        ctx.out.write_csv("allan.csv", &header(&["window", "tau_s", "deviation_v_per_m"]), rows)?;
    }

    // time spent at setting B per update, half of every sequence
    let probes = lc.observables.iter().map(|o| o.estimator.probes(o.template.m).map(|v| v.len())).collect::<Result<Vec<_>, _>>()?;
    let reduced: f64 = lc
        .observables
        .iter()
        .zip(&probes)
        .map(|(o, n)| 0.5 * cfg.timing.sequence_duration(o.template.m) * (*n as u64 * o.shots) as f64)
        .sum();
    if reduced < p.interval_s {
        let schedule = [
            RfSegment::new(p.interval_s - reduced, 1.0),
            RfSegment::new(reduced, p.reduced_rf_power),
        ];
        let duty = duty_cycle_report(&schedule, 1.0)?;
        ctx.metric("reduced_rf_fraction", duty.reduced_fraction);
        ctx.metric("mean_rf_power", duty.mean_power);
        ctx.metric("balanced_mean_rf_power", duty.balanced_mean_power);
    } else {
        ctx.metric("reduced_rf_fraction", 1.0);
    }
    Ok(())
}

fn write_trace(ctx: &mut Ctx<'_>, trace: &LoopTrace, n_el: usize) -> Result<(), CliError> {
    let mut cols = header(&["t_s", "Ex_true", "Ey_true", "Ez_true", "Ex_est", "Ey_est", "Ez_est"]);
    cols.extend((1..=n_el).map(|i| format!("V{i}")));
    cols.push("Erf_Vm".into());
    let rows = trace.samples.iter().map(|s| {
        let mut row: Vec<Cell> = vec![s.t.into()];
        row.extend(s.e_true.iter().map(|x| Cell::from(*x)));
        row.extend(s.e_est.iter().map(|x| Cell::from(*x)));
        row.extend(s.voltages.iter().map(|x| Cell::from(*x)));
        row.push(s.e_rf.into());
        row
    });
    ctx.out.write_csv("closed_loop.csv", &cols, rows)
}

/// Axial compensation: settings from the fitted drive model at scales 1 and
/// `b_scale`, one electrode. `axial.csv`: update, Ez_residual_v_per_m,
/// V1, Erf_Vm.
pub(super) fn axial(ctx: &mut Ctx<'_>, p: &AxialParams) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let model = ctx.drive_model(&p.setting)?;
    let mut app = Apparatus::new(cfg.ion.clone())
        .with_setting(model.secular_from_scale(1.0)?.with_label("A"))
        .with_setting(model.secular_from_scale(p.b_scale)?.with_label("B"));
    for (id, b) in &cfg.beams {
        app.insert_beam(id.clone(), b.clone());
    }
    let column = cfg.electrode(&p.electrode).ok_or_else(|| {
        CliError::ConfigInvalid(vec![format!("undefined electrode id `{}`", p.electrode)])
    })?;
    let op = RfOperatingPoint::new(model, 1.0)?;
    let lc = LoopConfig {
        observables: vec![observable(ctx, format!("{}_m{}", p.beam, p.m), &p.beam, p.m, "A", "B")?],
        apparatus: app,
        geometry: ElectrodeGeometry::new(&[column])?,
        noise: cfg.noise,
        rf: Some(op.clone()),
    };
    let scan = ScanConfig {
        amplitude: p.scan_amplitude_v,
        points: p.scan_points,
        base_field: StrayField::zero(),
    };
    let initial = StrayField::new(p.initial_field)?;
    ctx.metric("initial_rf_field_v_per_m", residual_rf_field(&cfg.ion, &op, &initial));
    ctx.metric("initial_ez_v_per_m", p.initial_field.z);
    let gm = calibrate_gradient_matrix(&lc, &scan, &mut ctx.key("calibration").stream(0))?;
    ctx.metric("slope_rad_per_v", gm.matrix[(0, 0)]);
    let trace = closed_loop_run(p.updates as f64, 1.0, &lc, &gm, &DriftModel::none(), &initial, &ctx.key("loop"))?;
    let rows = trace
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| vec![Cell::from(k), s.residual.z.into(), s.voltages[0].into(), s.e_rf.into()]);
    ctx.out.write_csv("axial.csv", &header(&["update", "Ez_residual_v_per_m", "V1", "Erf_Vm"]), rows)?;
    let last = trace.samples.last().expect("at least one update");
    ctx.metric("final_ez_v_per_m", last.residual.z);
    ctx.metric("final_rf_field_v_per_m", last.e_rf);
    Ok(())
}
