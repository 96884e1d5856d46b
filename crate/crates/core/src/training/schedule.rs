use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup to the peak rate, then linear decay to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub warmup_ratio: f64,
    pub total_steps: u64,
}

impl ScheduleConfig {
    pub fn new(warmup_ratio: f64, total_steps: u64) -> Result<Self> {
        if !(warmup_ratio > 0.0 && warmup_ratio < 1.0) {
            return Err(Error::Config(format!(
                "warmup_ratio must lie in (0, 1), got {warmup_ratio}"
            )));
        }
        if total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        Ok(ScheduleConfig {
            warmup_ratio,
            total_steps,
        })
    }

    /// Peak step `ceil(ratio * total)`.
    pub fn warmup_steps(&self) -> u64 {
        ((self.warmup_ratio * self.total_steps as f64).ceil() as u64).max(1)
    }
}

pub fn lr_at(step: u64, cfg: &ScheduleConfig, max_lr: f64) -> Result<f64> {
    let total = cfg.total_steps;
    if step > total {
        return Err(Error::Usage(format!(
            "schedule step {step} is past the final step {total}"
        )));
    }
    let w = cfg.warmup_steps();
    Ok(if step <= w {
        max_lr * (step as f64 / w as f64)
    } else {
        max_lr * ((total - step) as f64 / (total - w) as f64)
    })
}
