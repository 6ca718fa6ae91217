//! Linear warmup followed by linear decay to zero.

use super::TrainError;

/// Piecewise-linear learning rate over `1..=total_steps`.
///
/// Steps up to `warmup_steps` ramp linearly from `lr_max / warmup_steps` to
/// `lr_max`; later steps decay linearly so the final step lands on zero.
/// The curve is continuous at the warmup boundary and nonnegative
/// everywhere.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> Result<f64, TrainError> {
        if step == 0 || step > self.total_steps {
            return Err(TrainError::StepOutOfRange {
                step,
                total: self.total_steps,
            });
        }
        if step <= self.warmup_steps {
            Ok(self.lr_max * step as f64 / self.warmup_steps as f64)
        } else {
            let span = (self.total_steps - self.warmup_steps) as f64;
            Ok(self.lr_max * (self.total_steps - step) as f64 / span)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHED: LrSchedule = LrSchedule {
        lr_max: 2e-6,
        warmup_steps: 30,
        total_steps: 100,
    };

    #[test]
    fn peak_at_end_of_warmup() {
        assert_eq!(SCHED.lr_at(30).unwrap(), 2e-6);
    }

    #[test]
    fn halfway_through_warmup() {
        assert_eq!(SCHED.lr_at(15).unwrap(), 1e-6);
    }

    #[test]
    fn zero_at_the_final_step() {
        assert_eq!(SCHED.lr_at(100).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_steps_error() {
        assert!(SCHED.lr_at(0).is_err());
        assert!(SCHED.lr_at(101).is_err());
    }

    #[test]
    fn continuous_piecewise_linear_and_nonnegative() {
        let mut prev = 0.0;
        for step in 1..=SCHED.total_steps {
            let lr = SCHED.lr_at(step).unwrap();
            assert!(lr >= 0.0);
            assert!(lr <= SCHED.lr_max + 1e-18);
            if step <= SCHED.warmup_steps {
                assert!(lr >= prev);
            } else {
                assert!(lr <= prev);
            }
            prev = lr;
        }
        // Slope changes only once; the boundary value is the shared peak.
        let just_after = SCHED.lr_at(31).unwrap();
        let expected = 2e-6 * (100.0 - 31.0) / 70.0;
        assert!((just_after - expected).abs() < 1e-20);
    }
}
