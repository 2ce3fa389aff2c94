/// Linear warm-up to `peak` over the first 8% of `total` steps, then linear
/// decay to 0 at `total`.
pub fn lr_schedule_pretrain(step: usize, total: usize, peak: f64) -> f64 {
    let step = step.min(total) as u128;
    let total = total as u128;
    if total == 0 {
        return 0.0;
    }
    // step/total < 8/100 without rounding
    if step * 100 < 8 * total {
        peak * ((step * 100) as f64) / ((8 * total) as f64)
    } else {
        peak * (((total - step) * 100) as f64) / ((92 * total) as f64)
    }
}
