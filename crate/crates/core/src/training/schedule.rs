use crate::error::{Error, Result};

/// Linear warmup from 0 to `peak_lr` over `warmup_steps`, then linear decay
/// to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupLinearDecay {
    peak_lr: f64,
    warmup_steps: u64,
    total_steps: u64,
}

impl WarmupLinearDecay {
    pub fn new(peak_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        if total_steps <= warmup_steps {
            return Err(Error::Config(vec![format!(
                "total steps ({total_steps}) must exceed warmup steps ({warmup_steps})"
            )]));
        }
        Ok(WarmupLinearDecay {
            peak_lr,
            warmup_steps,
            total_steps,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            self.peak_lr * (step as f64 / self.warmup_steps as f64)
        } else {
            let remaining = self.total_steps.saturating_sub(step) as f64;
            self.peak_lr * (remaining / (self.total_steps - self.warmup_steps) as f64)
        }
    }
}

/// Learning rate at `step` for the given peak and warmup.
pub fn lr_at(step: u64, peak_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<f64> {
    Ok(WarmupLinearDecay::new(peak_lr, warmup_steps, total_steps)?.lr_at(step))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let s = WarmupLinearDecay::new(1e-5, 500, 2000).unwrap();
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(250) - 5e-6).abs() <= 1e-15);
        assert_eq!(s.lr_at(500), 1e-5);
        assert_eq!(s.lr_at(2000), 0.0);
        assert!((s.lr_at(1250) - 5e-6).abs() <= 1e-15);
        assert!(lr_at(0, 1e-5, 500, 500).is_err());
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        let s = WarmupLinearDecay::new(0.1, 0, 10).unwrap();
        assert_eq!(s.lr_at(0), 0.1);
        assert!((s.lr_at(5) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn continuous_piecewise_linear_nonnegative() {
        let s = WarmupLinearDecay::new(3e-4, 37, 400).unwrap();
        let left = s.lr_at(36) + (s.lr_at(36) - s.lr_at(35));
        assert!((left - s.lr_at(37)).abs() < 1e-15);
        for step in 0..=400 {
            assert!(s.lr_at(step) >= 0.0);
        }
        for step in 38..400 {
            let d1 = s.lr_at(step) - s.lr_at(step - 1);
            let d2 = s.lr_at(step + 1) - s.lr_at(step);
            assert!((d1 - d2).abs() < 1e-15);
        }
    }
}
