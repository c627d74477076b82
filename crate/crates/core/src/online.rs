//! Repeated auctions that relearn from all bids seen so far.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::distributions::ValueDistribution;
use crate::empirical::{dkw_epsilon, EmpiricalQuantile};
use crate::environments::Environment;
use crate::error::{invalid, Result};
use crate::learner::{compute_auction_sorted, IroningPlan};
use crate::oracle::{
    clamp_loss, exact_revenue, optimal_plan, preferred_exact_method, RevenueMethod,
};
use crate::rng::rng_from_seed;

pub const TRACE_HEADER: &str =
    "seed,t,m_t,epsilon_t,plan_t,expected_round_revenue,round_loss,cumulative_loss,bound_t";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretRecord {
    pub t: usize,
    pub m_t: usize,
    /// `None` in round 0, which runs the unreserved auction without learning.
    pub epsilon_t: Option<f64>,
    pub plan_t: String,
    pub expected_round_revenue: f64,
    pub round_loss: f64,
    pub cumulative_loss: f64,
    pub bound_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretTrace {
    pub seed: u64,
    pub records: Vec<RegretRecord>,
}

impl RegretTrace {
    pub fn cumulative_loss(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_loss)
    }

    /// Sum of the per-round confidence bounds, round 0 included.
    pub fn bound_sum(&self) -> f64 {
        self.records.iter().map(|r| r.bound_t).sum()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        for r in &self.records {
            let eps = r.epsilon_t.map(|e| e.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                self.seed,
                r.t,
                r.m_t,
                eps,
                r.plan_t,
                r.expected_round_revenue,
                r.round_loss,
                r.cumulative_loss,
                r.bound_t
            )?;
        }
        Ok(())
    }
}

/// Expected revenue of each distinct plan is computed once.
struct RevenueCache<'a> {
    dist: &'a ValueDistribution,
    env: &'a Environment,
    method: RevenueMethod,
    seen: HashMap<String, f64>,
}

impl RevenueCache<'_> {
    fn revenue(&mut self, plan: &IroningPlan) -> Result<f64> {
        let key = plan.digest();
        if let Some(&v) = self.seen.get(&key) {
            return Ok(v);
        }
        let v = exact_revenue(self.dist, self.env, plan, self.method)?;
        self.seen.insert(key, v);
        Ok(v)
    }
}

/// Round 0 runs VCG; round `t ≥ 1` learns with confidence `δ/T` from the
/// `n·t` bids of earlier rounds. Fresh bids are drawn each round and appended.
/// Losses are the oracle's expected losses of the deployed plans.
pub fn run_no_regret(
    dist: &ValueDistribution,
    env: &Environment,
    rounds: usize,
    delta: f64,
    seed: u64,
) -> Result<RegretTrace> {
    if rounds == 0 {
        return Err(invalid("need at least one round"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta {delta} outside (0, 1)")));
    }
    let n = env.n();
    let h = dist.h_max();
    let round_delta = delta / rounds as f64;
    let mut cache = RevenueCache {
        dist,
        env,
        method: preferred_exact_method(env),
        seen: HashMap::new(),
    };
    let opt = cache.revenue(&optimal_plan(dist)?)?;
    let mut rng = rng_from_seed(seed);
    let mut held: Vec<f64> = Vec::with_capacity(n * (rounds + 1));
    let mut records = Vec::with_capacity(rounds + 1);
    let mut cumulative = 0.0;

    for t in 0..=rounds {
        let (plan, epsilon, bound) = if t == 0 {
            (IroningPlan::empty(), None, n as f64 * h)
        } else {
            let eq = EmpiricalQuantile::from_sorted(held.clone(), h)?;
            let eps = dkw_epsilon(eq.m(), round_delta)?;
            (
                compute_auction_sorted(&eq, round_delta)?,
                Some(eps),
                3.0 * eps * n as f64 * h,
            )
        };
        let revenue = cache.revenue(&plan)?;
        let loss = clamp_loss(opt - revenue)?;
        cumulative += loss;
        records.push(RegretRecord {
            t,
            m_t: held.len(),
            epsilon_t: epsilon,
            plan_t: plan.digest(),
            expected_round_revenue: revenue,
            round_loss: loss,
            cumulative_loss: cumulative,
            bound_t: bound,
        });
        for bid in dist.sample_with(n, &mut rng) {
            let at = held.partition_point(|&x| x <= bid);
            held.insert(at, bid);
        }
    }
    Ok(RegretTrace { seed, records })
}

/// Horizon-free variant: epoch `j` restarts the procedure (its own VCG round
/// included) with horizon `2^j` and confidence `δ/2^(j+1)`, until `rounds + 1`
/// rounds have been played.
pub fn run_no_regret_doubling(
    dist: &ValueDistribution,
    env: &Environment,
    rounds: usize,
    delta: f64,
    seed: u64,
) -> Result<RegretTrace> {
    if rounds == 0 {
        return Err(invalid("need at least one round"));
    }
    let mut records: Vec<RegretRecord> = Vec::new();
    let mut cumulative = 0.0;
    let mut epoch = 0u32;
    while records.len() < rounds + 1 {
        let length = 1usize << epoch;
        let epoch_delta = delta / f64::from(2u32.pow(epoch + 1));
        let trace = run_no_regret(
            dist,
            env,
            length,
            epoch_delta,
            crate::rng::stream_seed(seed, u64::from(epoch)),
        )?;
        for mut r in trace.records {
            if records.len() == rounds + 1 {
                break;
            }
            cumulative += r.round_loss;
            r.t = records.len();
            r.cumulative_loss = cumulative;
            records.push(r);
        }
        epoch += 1;
    }
    Ok(RegretTrace { seed, records })
}

/// `n·H·(1 + 3·√(2T·ln(4T/δ)/n))`.
pub fn regret_bound(rounds: usize, delta: f64, n: usize, h_max: f64) -> Result<f64> {
    if rounds == 0 || n == 0 {
        return Err(invalid("rounds and n must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta {delta} outside (0, 1)")));
    }
    let t = rounds as f64;
    let nf = n as f64;
    Ok(nf * h_max * (1.0 + 3.0 * (2.0 * t * (4.0 * t / delta).ln() / nf).sqrt()))
}

/// Least-squares slope of `ln(cumulative_loss)` against `ln(t)` over rounds in
/// `[t_lo, t_hi]` with positive loss; 0 when fewer than two such rounds exist.
pub fn fit_exponent(trace: &RegretTrace, t_lo: usize, t_hi: usize) -> f64 {
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| r.t >= t_lo && r.t <= t_hi && r.cumulative_loss > 0.0)
        .map(|r| ((r.t as f64).ln(), r.cumulative_loss.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
