use std::f64::consts::PI;

use trapcal_core::compensation::{hybrid_2d_minimize, ElectrodeGeometry, HybridConfig, Observable, RfOperatingPoint};
use trapcal_core::pulse::{Apparatus, SequenceSpec};
use trapcal_core::trap::{hz_to_angular, line_angle, sensitivity_direction, SensitivityMethod, StrayField};

use super::Ctx;
use crate::config::Geometry2dParams;
use crate::error::CliError;
use crate::output::{header, Cell};

/// `geometry_2d.csv`: b_radial_hz, b_scale, d1_x, d1_y, d1_z, d2_x, d2_y,
/// d2_z, angle_deg. With a hybrid table, `hybrid.csv`: round, phase_rad,
/// sideband_ratio, Ex, Ey, Ez.
pub(super) fn geometry_2d(ctx: &mut Ctx<'_>, p: &Geometry2dParams) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let model = ctx.drive_model(&p.setting)?;
    let a = model.secular_from_scale(1.0)?;
    let beam = |id: &str| {
        cfg.beam(id)
            .ok_or_else(|| CliError::ConfigInvalid(vec![format!("undefined beam id `{id}`")]))
    };
    let (b1, b2) = (beam(&p.beams[0])?, beam(&p.beams[1])?);
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &f in &p.b_radial_hz {
        let s = model.scale_for_radial(0, hz_to_angular(f));
        let b = model.secular_from_scale(s)?;
        let d1 = sensitivity_direction(SensitivityMethod::A { beam: b1 }, &a, &b)?.unit;
        let d2 = sensitivity_direction(SensitivityMethod::A { beam: b2 }, &a, &b)?.unit;
        let angle = line_angle(&d1, &d2) * 180.0 / PI;
        lo = lo.min(angle);
        hi = hi.max(angle);
        let mut row = vec![Cell::from(f), s.into()];
        row.extend(d1.iter().chain(d2.iter()).map(|x| Cell::from(*x)));
        row.push(angle.into());
        rows.push(row);
    }
    ctx.metric("min_angle_deg", lo);
    ctx.metric("max_angle_deg", hi);
    ctx.out.write_csv(
        "geometry_2d.csv",
        &header(&["b_radial_hz", "b_scale", "d1_x", "d1_y", "d1_z", "d2_x", "d2_y", "d2_z", "angle_deg"]),
        rows,
    )?;

    let Some(h) = &p.hybrid else {
        return Ok(());
    };
    let scale_b = model.scale_for_radial(0, hz_to_angular(h.b_radial_hz));
    let mut app = Apparatus::new(cfg.ion.clone())
        .with_setting(a.clone().with_label("A"))
        .with_setting(model.secular_from_scale(scale_b)?.with_label("B"));
    for (id, b) in &cfg.beams {
        app.insert_beam(id.clone(), b.clone());
    }
    let electrode = |id: &str| {
        cfg.electrode(id)
            .ok_or_else(|| CliError::ConfigInvalid(vec![format!("undefined electrode id `{id}`")]))
    };
    let m = cfg.schedule.m[0];
    let hc = HybridConfig {
        apparatus: app,
        observable: Observable {
            name: h.beam.clone(),
            template: SequenceSpec::method_a(m, &h.beam, "A", "B", &vec![0.0; m as usize + 1], &cfg.timing)?,
            estimator: cfg.estimator,
            shots: cfg.schedule.shots,
        },
        beam_id: h.beam.clone(),
        geometry: ElectrodeGeometry::new(&[electrode(&h.electrodes[0])?, electrode(&h.electrodes[1])?])?,
        rf: RfOperatingPoint::new(model, 1.0)?,
        noise: cfg.noise,
        sideband_area: h.sideband_area_pi * PI,
        sideband_shots: h.sideband_shots,
        search_halfwidth: h.search_halfwidth_v,
        search_steps: h.search_steps,
        phase_threshold: h.phase_threshold_rad,
        sideband_threshold: h.sideband_threshold,
        max_rounds: h.max_rounds,
    };
    let result = hybrid_2d_minimize(&hc, &StrayField::new(h.initial_field)?, &ctx.key("hybrid"))?;
    let rows = result.history.iter().map(|s| {
        vec![
            Cell::from(s.round),
            s.phase.into(),
            s.sideband.into(),
            s.field.x.into(),
            s.field.y.into(),
            s.field.z.into(),
        ]
    });
    ctx.out
        .write_csv("hybrid.csv", &header(&["round", "phase_rad", "sideband_ratio", "Ex", "Ey", "Ez"]), rows)?;
    ctx.metric("hybrid_converged", result.converged);
    ctx.metric("hybrid_rounds", result.rounds);
    ctx.metric("hybrid_initial_radial_v_per_m", h.initial_field.xy().norm());
    ctx.metric("hybrid_final_radial_v_per_m", result.final_field.xy().norm());
    Ok(())
}
