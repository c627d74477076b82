//! Learning an ironing plan from samples, and the sample-size calculators.

use serde::{Deserialize, Serialize};

use crate::curves::{ironing_tolerance, RevenueCurve};
use crate::empirical::{dkw_epsilon, EmpiricalQuantile};
use crate::error::{invalid, Error, Result};

/// Half-open value interval `[lo, hi)` whose bids are ranked as equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ValueInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v < self.hi
    }
}

/// Ironing intervals plus a reserve price, in canonical form: intervals are
/// sorted, disjoint, nonempty and start at or above the reserve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct IroningPlan {
    reserve: f64,
    intervals: Vec<ValueInterval>,
}

#[derive(Deserialize)]
struct RawPlan {
    reserve: f64,
    #[serde(default)]
    intervals: Vec<ValueInterval>,
}

impl TryFrom<RawPlan> for IroningPlan {
    type Error = Error;

    fn try_from(raw: RawPlan) -> Result<Self> {
        Self::new(raw.intervals, raw.reserve)
    }
}

impl IroningPlan {
    /// Canonicalizes: drops empty intervals, clips at the reserve, merges
    /// overlaps. Intervals that merely touch stay separate.
    pub fn new(intervals: Vec<ValueInterval>, reserve: f64) -> Result<Self> {
        if !(reserve.is_finite() && reserve >= 0.0) {
            return Err(invalid(format!(
                "reserve {reserve} must be finite and nonnegative"
            )));
        }
        if let Some(bad) = intervals
            .iter()
            .find(|iv| !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo >= 0.0))
        {
            return Err(invalid(format!(
                "invalid interval [{}, {})",
                bad.lo, bad.hi
            )));
        }
        let mut kept: Vec<ValueInterval> = intervals
            .into_iter()
            .map(|iv| ValueInterval {
                lo: iv.lo.max(reserve),
                hi: iv.hi,
            })
            .filter(|iv| iv.lo < iv.hi)
            .collect();
        kept.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        let mut merged: Vec<ValueInterval> = Vec::with_capacity(kept.len());
        for iv in kept {
            match merged.last_mut() {
                Some(last) if iv.lo < last.hi => last.hi = last.hi.max(iv.hi),
                _ => merged.push(iv),
            }
        }
        Ok(Self {
            reserve,
            intervals: merged,
        })
    }

    /// No ironing and reserve 0: the plain VCG auction.
    pub fn empty() -> Self {
        Self {
            reserve: 0.0,
            intervals: Vec::new(),
        }
    }

    pub fn reserve_only(reserve: f64) -> Result<Self> {
        Self::new(Vec::new(), reserve)
    }

    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    pub fn intervals(&self) -> &[ValueInterval] {
        &self.intervals
    }

    /// The interval containing `v`, if any.
    pub fn interval_of(&self, v: f64) -> Option<&ValueInterval> {
        let idx = self.intervals.partition_point(|iv| iv.lo <= v);
        idx.checked_sub(1)
            .map(|i| &self.intervals[i])
            .filter(|iv| iv.contains(v))
    }

    /// Stable 64-bit FNV-1a digest of the plan's bit patterns, as 16 hex digits.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let words = std::iter::once(self.reserve)
            .chain(self.intervals.iter().flat_map(|iv| [iv.lo, iv.hi]));
        for word in words {
            for byte in word.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }
}

/// Iron wherever the curve falls below its concave envelope and post the
/// revenue-maximizing price; interval endpoints are the curve's own prices.
pub fn plan_from_revenue_curve(curve: &RevenueCurve, h_max: f64) -> IroningPlan {
    let tol = ironing_tolerance(h_max);
    let (reserve, _) = curve.reserve(tol);
    let intervals = curve
        .ironing_spans(tol)
        .into_iter()
        .map(|s| ValueInterval { lo: s.lo, hi: s.hi })
        .collect();
    IroningPlan::new(intervals, reserve).expect("prices are finite and nonnegative")
}

/// Learns a plan from the pessimistic curve `q·F̂⁻¹(1 − q − ε)`.
pub fn compute_auction(samples: &[f64], delta: f64, h_max: f64) -> Result<IroningPlan> {
    let eq = EmpiricalQuantile::new(samples, h_max)?;
    compute_auction_sorted(&eq, delta)
}

pub fn compute_auction_sorted(eq: &EmpiricalQuantile, delta: f64) -> Result<IroningPlan> {
    let epsilon = dkw_epsilon(eq.m(), delta)?;
    let curve = eq.r_min_curve(epsilon)?;
    Ok(plan_from_revenue_curve(&curve, eq.h_max()))
}

/// `⌈(ln(2/δ)/2)·(3nγH/(ε − δ))²⌉`.
pub fn required_samples_iid(
    eps_target: f64,
    delta: f64,
    n: usize,
    gamma: f64,
    h_max: f64,
) -> Result<u64> {
    if !(0.0 < delta && delta < eps_target && eps_target < 1.0) {
        return Err(invalid(format!(
            "need 0 < delta < eps < 1, got delta={delta}, eps={eps_target}"
        )));
    }
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(gamma >= 1.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma {gamma} must be at least 1")));
    }
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(invalid(format!("h_max {h_max} must be positive")));
    }
    let ratio = 3.0 * n as f64 * gamma * h_max / (eps_target - delta);
    let m = (2.0 / delta).ln() / 2.0 * ratio * ratio;
    Ok(m.ceil() as u64)
}

/// `3·n·H·ε(m, δ)`.
pub fn loss_bound(m: usize, delta: f64, n: usize, h_max: f64) -> Result<f64> {
    Ok(3.0 * n as f64 * h_max * dkw_epsilon(m, delta)?)
}
