use serde::{Deserialize, Serialize};

/// Epoch boundaries of the warm-up, re-labeling and fine-tuning phases.
///
/// `α` ramps linearly from 0 at `lambda_init` to 1 at
/// `lambda_start = lambda_init + delta_start`; `w` then ramps from 0 to 1 up
/// to `lambda_end = lambda_start + delta_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub lambda_init: usize,
    pub delta_start: usize,
    pub delta_end: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            lambda_init: 0,
            delta_start: 25,
            delta_end: 30,
        }
    }
}

impl ScheduleParams {
    pub fn new(lambda_init: usize, delta_start: usize, delta_end: usize) -> Self {
        Self {
            lambda_init,
            delta_start,
            delta_end,
        }
    }

    pub fn lambda_start(&self) -> usize {
        self.lambda_init + self.delta_start
    }

    pub fn lambda_end(&self) -> usize {
        self.lambda_start() + self.delta_end
    }

    /// Checks that the schedule completes within `epochs`.
    pub fn validate(&self, epochs: usize) -> Result<(), String> {
        if self.lambda_end() > epochs {
            return Err(format!(
                "schedule ends at epoch {} but training runs {epochs} epochs",
                self.lambda_end()
            ));
        }
        Ok(())
    }
}

/// Linear ramp that is 0 up to `from`, 1 from `to` on. A zero-length ramp is
/// a step to 1 at `from`.
fn ramp(t: usize, from: usize, to: usize) -> f64 {
    if t >= to {
        1.0
    } else if t <= from {
        0.0
    } else {
        (t - from) as f64 / (to - from) as f64
    }
}

/// Weight of the supervised loss group at epoch `t`.
pub fn alpha_at(t: usize, s: &ScheduleParams) -> f64 {
    ramp(t, s.lambda_init, s.lambda_start())
}

/// Weight of the pseudo-labels in re-labeling at epoch `t`.
pub fn w_at(t: usize, s: &ScheduleParams) -> f64 {
    ramp(t, s.lambda_start(), s.lambda_end())
}
