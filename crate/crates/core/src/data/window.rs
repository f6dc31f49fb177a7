use super::{DataError, Dataset};

/// Sliding-window parameters, in resampled steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowingConfig {
    pub window_len: usize,
    pub stride: usize,
    /// Raw samples averaged into one resampled step.
    pub resample_factor: usize,
    /// Number of power levels.
    pub levels: usize,
    pub p_max: f64,
}

impl WindowingConfig {
    pub fn new(p_max: f64) -> Self {
        Self {
            window_len: 36,
            stride: 1,
            resample_factor: 10,
            levels: 5,
            p_max,
        }
    }

    /// Power level of a window with mean output `mean`: half-open bins of
    /// width `p_max / levels`, clamped to the top level.
    pub fn level(&self, mean: f64) -> usize {
        let j = (self.levels as f64 * mean / self.p_max).floor();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.levels - 1)
        }
    }
}

fn block_mean(x: &[f64], factor: usize) -> Vec<f64> {
    x.chunks_exact(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect()
}

/// Cuts aligned `channels` into windows labeled by the mean of `power` over
/// the same span. Every series is first block-averaged by the resample
/// factor (a trailing partial block is dropped).
pub fn windowize(channels: &[Vec<f64>], power: &[f64], cfg: &WindowingConfig) -> Result<Dataset, DataError> {
    if cfg.window_len == 0 || cfg.stride == 0 || cfg.resample_factor == 0 {
        return Err(DataError::Invalid("window length, stride and resample factor must be positive".into()));
    }
    if cfg.levels < 2 || !(cfg.p_max > 0.0) {
        return Err(DataError::Invalid("need at least 2 levels and a positive p_max".into()));
    }
    if channels.is_empty() {
        return Err(DataError::Invalid("no channels".into()));
    }
    if let Some(c) = channels.iter().position(|c| c.len() != power.len()) {
        return Err(DataError::Shape(format!(
            "channel {c} has {} samples, power has {}",
            channels[c].len(),
            power.len()
        )));
    }
    let resampled: Vec<Vec<f64>> = channels.iter().map(|c| block_mean(c, cfg.resample_factor)).collect();
    let power = block_mean(power, cfg.resample_factor);
    let lr = power.len();
    if lr < cfg.window_len {
        return Err(DataError::Shape(format!(
            "series of {lr} resampled steps is shorter than one window of {}",
            cfg.window_len
        )));
    }
    let count = (lr - cfg.window_len) / cfg.stride + 1;
    let c = channels.len();
    let mut samples = Vec::with_capacity(count * c * cfg.window_len);
    let mut labels = Vec::with_capacity(count);
    for w in 0..count {
        let s = w * cfg.stride;
        let e = s + cfg.window_len;
        for ch in &resampled {
            samples.extend(ch[s..e].iter().map(|&v| v as f32));
        }
        let mean = power[s..e].iter().sum::<f64>() / cfg.window_len as f64;
        labels.push(cfg.level(mean));
    }
    Dataset::new("chp", c, cfg.window_len, samples, labels, cfg.levels)
}
