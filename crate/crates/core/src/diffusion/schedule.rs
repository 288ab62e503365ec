//! Diffusion time grid with signal/noise coefficients.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleShape {
    Cosine,
    Linear,
}

/// Per-step signal coefficients: alpha_bar strictly decreasing from ~1,
/// with sigma_t = sqrt(1 - alpha_bar_t) and log-SNR lambda_t.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub t_steps: usize,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(t_steps: usize, shape: ScheduleShape) -> Result<NoiseSchedule> {
        if t_steps < 2 {
            return Err(Error::Config("schedule needs at least 2 steps".into()));
        }
        let alpha_bar: Vec<f64> = match shape {
            ScheduleShape::Cosine => {
                // f(t) = cos^2((t/T + s)/(1 + s) * pi/2), alpha_bar = f/f(0).
                let s = 0.008;
                let f = |t: f64| {
                    let u = (t / t_steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
                    u.cos().powi(2)
                };
                let f0 = f(0.0);
                (0..=t_steps)
                    .map(|t| (f(t as f64) / f0).clamp(1e-7, 1.0 - 1e-6))
                    .collect()
            }
            ScheduleShape::Linear => {
                let beta = |t: usize| 1e-4 + (0.02 - 1e-4) * (t as f64 - 1.0) / (t_steps as f64 - 1.0);
                let mut acc = 1.0 - 1e-6;
                let mut out = vec![acc];
                for t in 1..=t_steps {
                    acc *= 1.0 - beta(t);
                    out.push(acc.clamp(1e-7, 1.0 - 1e-6));
                }
                out
            }
        };
        for w in alpha_bar.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config(
                    "alpha_bar must be strictly decreasing".into(),
                ));
            }
        }
        if alpha_bar[0] <= 0.999 {
            return Err(Error::Config("alpha_bar(0) must be near one".into()));
        }
        Ok(NoiseSchedule { t_steps, alpha_bar })
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar[t]).sqrt()
    }

    /// Log signal-to-noise ratio ln(alpha_bar / (1 - alpha_bar)).
    pub fn lambda(&self, t: usize) -> f64 {
        let a = self.alpha_bar[t];
        (a / (1.0 - a)).ln()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t > self.t_steps {
            return Err(Error::Precondition(format!(
                "t = {t} outside schedule range 0..={}",
                self.t_steps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_boundaries_and_monotonicity() {
        let s = NoiseSchedule::build(1000, ScheduleShape::Cosine).unwrap();
        assert!(s.alpha_bar(0) > 0.999);
        for t in 1..=1000 {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert!(s.lambda(t) < s.lambda(t - 1));
        }
    }

    #[test]
    fn cosine_closed_form_at_midpoint() {
        let t_steps = 1000;
        let s = NoiseSchedule::build(t_steps, ScheduleShape::Cosine).unwrap();
        // Direct recomputation of the closed form at t = T/2.
        let sc = 0.008;
        let f = |t: f64| {
            let u = (t / t_steps as f64 + sc) / (1.0 + sc) * std::f64::consts::FRAC_PI_2;
            u.cos().powi(2)
        };
        let want = f(500.0) / f(0.0);
        assert!((s.alpha_bar(500) - want).abs() < 1e-12);
    }

    #[test]
    fn snr_strictly_decreasing_for_linear_too() {
        let s = NoiseSchedule::build(500, ScheduleShape::Linear).unwrap();
        for t in 1..=500 {
            let snr_prev = s.alpha_bar(t - 1) / (1.0 - s.alpha_bar(t - 1));
            let snr = s.alpha_bar(t) / (1.0 - s.alpha_bar(t));
            assert!(snr < snr_prev);
        }
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(NoiseSchedule::build(1, ScheduleShape::Cosine).is_err());
    }
}
