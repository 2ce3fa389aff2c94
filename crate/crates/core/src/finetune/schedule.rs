/// Tri-stage schedule: linear warm-up over the first 10% of steps, constant
/// `peak` for the next 40%, then linear decay to 0 at `total`.
pub fn lr_schedule_tristage(step: usize, total: usize, peak: f64) -> f64 {
    let step = step.min(total) as u128;
    let total = total as u128;
    if total == 0 {
        return 0.0;
    }
    if step * 10 < total {
        peak * ((step * 10) as f64) / (total as f64)
    } else if step * 2 < total {
        peak
    } else {
        peak * (((total - step) * 2) as f64) / (total as f64)
    }
}
