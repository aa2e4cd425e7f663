use rand_distr::{Distribution, Normal};
use trapcal_core::estimators::thetas_for_total;
use trapcal_core::protocol::{measure_in_apparatus, measure_phi_t};
use trapcal_core::pulse::{laser_phases, run_sequence, sample_measurements, total_phase, SequenceSpec};
use trapcal_core::stats::{linear_fit, mean};
use trapcal_core::trap::{wrap_phase, StrayField};

use super::{linspace, unwrap, Ctx};
use crate::config::{FringeMethod, FringeParams, MethodBDriftParams};
use crate::error::CliError;
use crate::output::{header, Cell};

fn template(method: &FringeMethod, m: u32, ctx: &Ctx<'_>) -> Result<SequenceSpec, CliError> {
    let zeros = vec![0.0; m as usize + 1];
    let t = &ctx.cfg.timing;
    Ok(match method {
        FringeMethod::A { beam, setting_a, setting_b } => SequenceSpec::method_a(m, beam, setting_a, setting_b, &zeros, t)?,
        FringeMethod::B { alpha, beta, setting } => SequenceSpec::method_b(m, alpha, beta, setting, &zeros, t)?,
    })
}

/// `fringe.csv`: m, e_v_per_m, theta_t_rad, p.
/// `fringe_phase.csv`: m, e_v_per_m, phi_t_rad, phi_t_est_rad.
pub(super) fn fringe(ctx: &mut Ctx<'_>, p: &FringeParams) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let app = ctx.apparatus();
    let fields = linspace(-p.span_v_per_m, p.span_v_per_m, p.points);
    let mut rows = Vec::new();
    let mut phase_rows = Vec::new();
    let mut slopes = Vec::new();
    for &m in &cfg.schedule.m {
        let mut seq = template(&p.method, m, ctx)?;
        let key = ctx.key(&format!("m{m}"));
        let mut estimates = Vec::with_capacity(fields.len());
        for (i, &e) in fields.iter().enumerate() {
            let field = StrayField::new(p.field_direction * e)?;
            let mut rng = key.stream(i as u64);
            for &theta_t in &cfg.schedule.theta_t {
                seq.set_control_phases(&thetas_for_total(m, theta_t))?;
                let exact = run_sequence(&seq, &app, &field, &cfg.noise)?;
                let prob = if cfg.noise.projection_sampling {
                    sample_measurements(exact, cfg.schedule.shots, &mut rng) as f64 / cfg.schedule.shots as f64
                } else {
                    exact
                };
                rows.push(vec![Cell::from(m), e.into(), theta_t.into(), prob.into()]);
            }
            seq.set_control_phases(&vec![0.0; m as usize + 1])?;
            let phis = laser_phases(&seq, &app, &field)?;
            let (phi_t, _) = total_phase(&phis, &seq.control_phases(), m)?;
            let est = measure_in_apparatus(&seq, &app, &field, &cfg.noise, cfg.estimator, cfg.schedule.shots, &mut rng)?;
            estimates.push(est.value);
            phase_rows.push(vec![Cell::from(m), e.into(), wrap_phase(phi_t).into(), est.value.into()]);
        }
        let slope = linear_fit(&fields, &unwrap(&estimates))?.slope;
        ctx.metric(format!("fringe_slope_rad_per_v_per_m.m{m}"), slope);
        slopes.push((m, slope));
    }
    if let Some(&(m0, s0)) = slopes.first() {
        for &(m, s) in &slopes {
            ctx.metric(format!("frequency_ratio.m{m}_over_m{m0}"), s / s0);
        }
    }
    ctx.out.write_csv("fringe.csv", &header(&["m", "e_v_per_m", "theta_t_rad", "p"]), rows)?;
    ctx.out.write_csv(
        "fringe_phase.csv",
        &header(&["m", "e_v_per_m", "phi_t_rad", "phi_t_est_rad"]),
        phase_rows,
    )?;
    Ok(())
}

/// Two-beam phase at both stiffness settings while the alpha path phase
/// random-walks. `method_b_drift.csv`: step, path_drift_rad, phi_t_a_rad,
/// phi_t_b_rad, difference_rad.
pub(super) fn method_b_drift(ctx: &mut Ctx<'_>, p: &MethodBDriftParams) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let m = cfg.schedule.m[0];
    let zeros = vec![0.0; m as usize + 1];
    let at_a = SequenceSpec::method_b(m, &p.alpha, &p.beta, &p.setting_a, &zeros, &cfg.timing)?;
    let at_b = SequenceSpec::method_b(m, &p.alpha, &p.beta, &p.setting_b, &zeros, &cfg.timing)?;
    let field = StrayField::new(p.field)?;
    let mut app = ctx.apparatus();
    let base = app.beam(&p.alpha)?.clone();
    let walk = Normal::new(0.0, p.drift_step_rad).map_err(|e| trapcal_core::Error::InvalidParameter(e.to_string()))?;
    let key = ctx.key("drift");

    // noiseless reference difference
    let exact = cfg.noise.with_sampling(false);
    let reference = {
        let a = laser_phases(&at_a, &app, &field)?;
        let b = laser_phases(&at_b, &app, &field)?;
        let mut rng = key.stream(u64::MAX);
        let ea = measure_phi_t(&at_a, &a, &exact, cfg.estimator, 0, &mut rng)?.value;
        let eb = measure_phi_t(&at_b, &b, &exact, cfg.estimator, 0, &mut rng)?.value;
        wrap_phase(ea - eb)
    };

    let mut drift = 0.0;
    let mut rows = Vec::with_capacity(p.steps);
    let mut singles = Vec::with_capacity(p.steps);
    let mut deviations = Vec::with_capacity(p.steps);
    for step in 0..p.steps {
        let mut rng = key.stream(step as u64);
        if step > 0 && p.drift_step_rad > 0.0 {
            drift += walk.sample(&mut rng);
        }
        app.insert_beam(p.alpha.clone(), base.clone().with_phase_offset(base.phase_offset() + drift));
        let a = measure_in_apparatus(&at_a, &app, &field, &cfg.noise, cfg.estimator, cfg.schedule.shots, &mut rng)?.value;
        let b = measure_in_apparatus(&at_b, &app, &field, &cfg.noise, cfg.estimator, cfg.schedule.shots, &mut rng)?.value;
        let diff = wrap_phase(a - b);
        rows.push(vec![Cell::from(step), drift.into(), a.into(), b.into(), diff.into()]);
        singles.push(a);
        deviations.push(wrap_phase(diff - reference));
    }
    let spread = |xs: &[f64]| {
        let mu = mean(xs);
        (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len().max(2).saturating_sub(1) as f64).sqrt()
    };
    ctx.metric("reference_difference_rad", reference);
    ctx.metric("phi_t_a_spread_rad", spread(&unwrap(&singles)));
    ctx.metric("difference_mean_offset_rad", mean(&deviations));
    ctx.metric("difference_spread_rad", spread(&deviations));
    ctx.metric("max_abs_difference_offset_rad", deviations.iter().fold(0.0f64, |a, d| a.max(d.abs())));
    ctx.out.write_csv(
        "method_b_drift.csv",
        &header(&["step", "path_drift_rad", "phi_t_a_rad", "phi_t_b_rad", "difference_rad"]),
        rows,
    )?;
    Ok(())
}
