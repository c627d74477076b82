//! Empirical quantile function, DKW radius and the pessimistic/optimistic sample curves.

use crate::curves::RevenueCurve;
use crate::error::{invalid, Result};

/// `x·m` within this distance of an integer is treated as that integer.
const SNAP: f64 = 1e-9;

/// Order statistics `X(1) <= ... <= X(m)` of a sample set with a known bound.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalQuantile {
    sorted: Vec<f64>,
    h_max: f64,
}

impl EmpiricalQuantile {
    pub fn new(samples: &[f64], h_max: f64) -> Result<Self> {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self::from_sorted(sorted, h_max)
    }

    pub fn from_sorted(sorted: Vec<f64>, h_max: f64) -> Result<Self> {
        if !(h_max.is_finite() && h_max > 0.0) {
            return Err(invalid(format!(
                "h_max must be finite and positive, got {h_max}"
            )));
        }
        if sorted.is_empty() {
            return Err(invalid("at least one sample is required"));
        }
        if let Some(bad) = sorted.iter().find(|&&v| !(0.0..=h_max).contains(&v)) {
            return Err(invalid(format!("sample {bad} outside [0, {h_max}]")));
        }
        if sorted.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("samples are not sorted"));
        }
        Ok(Self { sorted, h_max })
    }

    pub fn m(&self) -> usize {
        self.sorted.len()
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// `X(i)` with 1-based `i`.
    pub fn order_stat(&self, i: usize) -> f64 {
        self.sorted[i - 1]
    }

    /// `F̂⁻¹(x) = X(max(1, ⌈x·m⌉))`, 0 below the domain and `h_max` above it.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x > 1.0 {
            return self.h_max;
        }
        let scaled = x * self.m() as f64;
        let nearest = scaled.round();
        let idx = if (scaled - nearest).abs() <= SNAP {
            nearest
        } else {
            scaled.ceil()
        };
        self.order_stat((idx as usize).clamp(1, self.m()))
    }

    /// `F̂(v) = |{X_i <= v}| / m`.
    pub fn ecdf(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= v) as f64 / self.m() as f64
    }

    /// `q·F̂⁻¹(1 − q − ε)`: the pessimistic curve.
    pub fn r_min_curve(&self, epsilon: f64) -> Result<RevenueCurve> {
        check_epsilon(epsilon)?;
        let m = self.m();
        let mf = m as f64;
        // X(i) is posted on [1 − ε − i/m, 1 − ε − (i−1)/m).
        let mut steps: Vec<(f64, f64)> = (1..=m)
            .rev()
            .map(|i| (1.0 - epsilon - i as f64 / mf, self.order_stat(i)))
            .collect();
        let q0 = 1.0 - epsilon;
        if q0 < 1.0 {
            steps.push((q0, 0.0));
        }
        Ok(RevenueCurve::from_price_steps(&steps))
    }

    /// `q·F̂⁻¹(1 − q + ε + 1/m)`: the optimistic curve.
    pub fn r_max_curve(&self, epsilon: f64) -> Result<RevenueCurve> {
        check_epsilon(epsilon)?;
        let m = self.m();
        let mf = m as f64;
        let top = 1.0 + epsilon + 1.0 / mf;
        // h_max below ε + 1/m, then X(i) on [top − i/m, top − (i−1)/m).
        let steps: Vec<(f64, f64)> = std::iter::once((0.0, self.h_max))
            .chain(
                (1..=m)
                    .rev()
                    .map(|i| (top - i as f64 / mf, self.order_stat(i))),
            )
            .collect();
        Ok(RevenueCurve::from_price_steps(&steps))
    }
}

/// Radii of 1 or more are accepted: the pessimistic curve is then identically zero.
fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "epsilon {epsilon} must be finite and nonnegative"
        )))
    }
}

/// DKW radius `√(ln(2/δ) / (2m))`.
pub fn dkw_epsilon(m: usize, delta: f64) -> Result<f64> {
    if m == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta {delta} outside (0, 1)")));
    }
    Ok(((2.0 / delta).ln() / (2.0 * m as f64)).sqrt())
}
