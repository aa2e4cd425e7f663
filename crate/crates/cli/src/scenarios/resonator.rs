use trapcal_core::resonator::{dropout_depth_with, envelope_with, settle_time_with, ResonatorParams, SourceSwitch};
use trapcal_core::Error;

use super::Ctx;
use crate::config::ResonatorParamsCfg;
use crate::error::CliError;
use crate::output::{header, Cell};

/// One `resonator_dphi{k}.csv` per phase mismatch: t_us, re_b, im_b, abs_b.
pub(super) fn resonator(ctx: &mut Ctx<'_>, p: &ResonatorParamsCfg) -> Result<(), CliError> {
    let params = ResonatorParams::new(p.tau_s)?;
    let n = (p.t_end_s / p.dt_s + 1e-9).floor() as usize + 1;
    for (k, &dphi) in p.delta_phi_rad.iter().enumerate() {
        let sw = SourceSwitch::new(p.a1, p.a2, dphi, p.t_switch_s, p.t_revert_s)?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 * p.dt_s;
            let b = envelope_with(&params, &sw, p.servo, t)?;
            rows.push(vec![Cell::from(t * 1e6), b.re.into(), b.im.into(), b.norm().into()]);
        }
        ctx.out
            .write_csv(&format!("resonator_dphi{k}.csv"), &header(&["t_us", "re_b", "im_b", "abs_b"]), rows)?;

        let drop = dropout_depth_with(&params, &sw, p.servo, p.ion_loss_floor)?;
        ctx.metric(format!("delta_phi_rad.{k}"), dphi);
        ctx.metric(format!("min_abs_b.{k}"), drop.min_abs);
        ctx.metric(format!("t_min_after_switch_us.{k}"), (drop.t_min - p.t_switch_s) * 1e6);
        ctx.metric(format!("ion_loss_risk.{k}"), drop.ion_loss_risk);
        match settle_time_with(&params, &sw, p.servo, p.settle_tolerance) {
            Ok(t) => ctx.metric(format!("settle_time_us.{k}"), t * 1e6),
            Err(Error::NoProgress(_)) => ctx.metric(format!("settle_time_us.{k}"), serde_json::Value::Null),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
