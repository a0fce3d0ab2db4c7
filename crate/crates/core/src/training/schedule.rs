use super::TrainConfig;

/// Linear warmup from 0 to `peak_lr`, then linear decay to 0 at
/// `total_steps`. Steps past the end are clamped to 0.
pub fn lr_at(step: usize, total_steps: usize, config: &TrainConfig) -> f64 {
    if step > total_steps {
        log::warn!("lr_at: step {step} is past the final step {total_steps}; using 0");
        return 0.0;
    }
    let warmup = config.warmup_steps(total_steps);
    let peak = config.peak_lr;
    if step < warmup {
        peak * step as f64 / warmup as f64
    } else if step == warmup {
        peak
    } else {
        peak * (total_steps - step) as f64 / (total_steps - warmup) as f64
    }
}
