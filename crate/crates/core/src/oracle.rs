//! Ground truth on known distributions: the optimal plan, expected revenue by
//! three independent routes, induced true curves and additive loss.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{Chord, PiecewiseLinearCurve};
use crate::distributions::{Atom, ValueDistribution};
use crate::engine::{interim_revenue, BidProfile};
use crate::environments::{Environment, EnvironmentKind};
use crate::error::{invalid, Error, Result};
use crate::learner::{plan_from_revenue_curve, IroningPlan};
use crate::rng::stream_rng;

/// Largest number of valuation profiles the enumeration oracle will visit.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Monte Carlo trials per seeded shard.
const SHARD: usize = 1024;

/// Losses this far below zero are treated as rounding noise.
const LOSS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevenueMethod {
    Enumeration,
    Quadrature,
    MonteCarlo,
}

impl FromStr for RevenueMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enum" | "enumeration" => Ok(Self::Enumeration),
            "quad" | "quadrature" => Ok(Self::Quadrature),
            "mc" | "monte_carlo" => Ok(Self::MonteCarlo),
            other => Err(invalid(format!("unknown revenue method {other:?}"))),
        }
    }
}

impl fmt::Display for RevenueMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Enumeration => "enumeration",
            Self::Quadrature => "quadrature",
            Self::MonteCarlo => "monte_carlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevenueReport {
    pub expected_revenue: f64,
    pub method: RevenueMethod,
    pub stderr: f64,
    pub trials: Option<usize>,
}

impl RevenueReport {
    fn exact(expected_revenue: f64, method: RevenueMethod) -> Self {
        Self {
            expected_revenue,
            method,
            stderr: 0.0,
            trials: None,
        }
    }
}

/// Myerson's plan for a discrete law: iron where the exact revenue curve
/// leaves its concave envelope, reserve at the curve's maximizer.
pub fn optimal_plan(dist: &ValueDistribution) -> Result<IroningPlan> {
    dist.require_atoms()?;
    Ok(plan_from_revenue_curve(
        &dist.exact_revenue_curve(),
        dist.h_max(),
    ))
}

fn is_symmetric(env: &Environment) -> bool {
    !matches!(
        env.kind(),
        EnvironmentKind::Matroid(crate::environments::MatroidSpec::Partition { .. })
    )
}

fn check_enumeration_size(atoms: usize, n: usize) -> Result<()> {
    let profiles = (atoms as f64).powi(n as i32);
    if profiles > ENUMERATION_LIMIT {
        return Err(Error::Guard(format!(
            "enumeration would visit {atoms}^{n} = {profiles:e} profiles (limit {ENUMERATION_LIMIT:e})"
        )));
    }
    Ok(())
}

/// Visits every nondecreasing atom-index tuple of length `len` starting at `from`.
fn for_each_multiset(
    s: usize,
    len: usize,
    from: usize,
    prefix: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if len == 0 {
        visit(prefix);
        return;
    }
    for a in from..s {
        prefix.push(a);
        for_each_multiset(s, len - 1, a, prefix, visit);
        prefix.pop();
    }
}

fn for_each_tuple(s: usize, len: usize, prefix: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if len == 0 {
        visit(prefix);
        return;
    }
    for a in 0..s {
        prefix.push(a);
        for_each_tuple(s, len - 1, prefix, visit);
        prefix.pop();
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Profile probability, times the number of orderings when `tuple` stands for a multiset.
fn profile_weight(atoms: &[Atom], tuple: &[usize], multiset: bool) -> f64 {
    let prob: f64 = tuple.iter().map(|&a| atoms[a].prob).product();
    if !multiset {
        return prob;
    }
    let mut orderings = factorial(tuple.len());
    let mut run = 1;
    for w in tuple.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            orderings /= factorial(run);
            run = 1;
        }
    }
    orderings / factorial(run) * prob
}

/// Exact expectation over all `sⁿ` valuation profiles of the total interim payment.
pub fn expected_revenue_enum(
    dist: &ValueDistribution,
    env: &Environment,
    plan: &IroningPlan,
) -> Result<RevenueReport> {
    let atoms = dist.require_atoms()?;
    let (s, n) = (atoms.len(), env.n());
    check_enumeration_size(s, n)?;
    let multiset = is_symmetric(env);

    // One task per atom of the first coordinate; partial sums are added in order.
    let partials: Vec<Result<f64>> = (0..s)
        .into_par_iter()
        .map(|first| {
            let mut total = 0.0;
            let mut failure = None;
            let mut prefix = vec![first];
            let mut visit = |tuple: &[usize]| {
                if failure.is_some() {
                    return;
                }
                let bids: Vec<f64> = tuple.iter().map(|&a| atoms[a].value).collect();
                let result = BidProfile::new(bids).and_then(|b| interim_revenue(env, plan, &b));
                match result {
                    Ok(rev) => total += profile_weight(atoms, tuple, multiset) * rev,
                    Err(e) => failure = Some(e),
                }
            };
            if multiset {
                for_each_multiset(s, n - 1, first, &mut prefix, &mut visit);
            } else {
                for_each_tuple(s, n - 1, &mut prefix, &mut visit);
            }
            failure.map_or(Ok(total), Err)
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(RevenueReport::exact(total, RevenueMethod::Enumeration))
}

/// The revenue curve induced on the true distribution by a plan: posted-price
/// points `(P(V ≥ p), P(V ≥ p)·p)` joined by chords across each pooled value
/// range, and the plateau `P(V ≥ r)·r` beyond the reserve's quantile.
pub fn induced_true_curve(
    dist: &ValueDistribution,
    plan: &IroningPlan,
) -> Result<PiecewiseLinearCurve> {
    dist.require_atoms()?;
    let base = dist.exact_revenue_curve().into_curve();
    let r = plan.reserve();
    let q_r = dist.tail(r);
    let plateau = q_r * r;
    let mut chords: Vec<Chord> = plan
        .intervals()
        .iter()
        .filter_map(|iv| {
            let lo = iv.lo.max(r);
            if lo >= iv.hi {
                return None;
            }
            let (qa, qb) = (dist.tail(iv.hi), dist.tail(lo));
            (qa < qb).then_some(Chord {
                a: qa,
                va: qa * iv.hi,
                b: qb,
                vb: qb * lo,
            })
        })
        .collect();
    chords.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(base.induce_with(&chords, q_r, plateau, plateau))
}

/// `n·[R(1)·y(1) − ∫₀¹ R(q)·y'(q) dq]` with `R` the induced true curve,
/// integrated by parts on each linear piece.
pub fn expected_revenue_quadrature(
    dist: &ValueDistribution,
    env: &Environment,
    plan: &IroningPlan,
) -> Result<RevenueReport> {
    if env.is_matroid() {
        return Err(Error::Unsupported(
            "quadrature needs a rank-based environment; use enumeration or Monte Carlo for matroids".into(),
        ));
    }
    let curve = induced_true_curve(dist, plan)?;
    let y = |q: f64| env.interim_allocation(q).expect("rank-based");
    let big_y = |q: f64| env.interim_allocation_integral(q).expect("rank-based");
    let v = curve.vertices();
    let mut total = v[v.len() - 1].value * y(1.0);
    for w in v.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.q <= a.q {
            continue;
        }
        let slope = (b.value - a.value) / (b.q - a.q);
        total += a.value * y(a.q) - b.value * y(b.q) + slope * (big_y(b.q) - big_y(a.q));
    }
    Ok(RevenueReport::exact(
        env.n() as f64 * total,
        RevenueMethod::Quadrature,
    ))
}

/// Mean total interim payment over seeded i.i.d. profiles. Shards of
/// [`SHARD`] trials draw from independent streams and are combined in order.
pub fn expected_revenue_mc(
    dist: &ValueDistribution,
    env: &Environment,
    plan: &IroningPlan,
    trials: usize,
    seed: u64,
) -> Result<RevenueReport> {
    if trials == 0 {
        return Err(invalid("Monte Carlo needs at least one trial"));
    }
    let shards = trials.div_ceil(SHARD);
    let sums: Vec<Result<(f64, f64)>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = stream_rng(seed, shard as u64);
            let count = SHARD.min(trials - shard * SHARD);
            let (mut sum, mut sumsq) = (0.0, 0.0);
            for _ in 0..count {
                let bids = BidProfile::new(dist.sample_with(env.n(), &mut rng))?;
                let rev = interim_revenue(env, plan, &bids)?;
                sum += rev;
                sumsq += rev * rev;
            }
            Ok((sum, sumsq))
        })
        .collect();
    let (mut sum, mut sumsq) = (0.0, 0.0);
    for s in sums {
        let (a, b) = s?;
        sum += a;
        sumsq += b;
    }
    let t = trials as f64;
    let mean = sum / t;
    let stderr = if trials > 1 {
        ((sumsq - t * mean * mean).max(0.0) / (t - 1.0) / t).sqrt()
    } else {
        0.0
    };
    Ok(RevenueReport {
        expected_revenue: mean,
        method: RevenueMethod::MonteCarlo,
        stderr,
        trials: Some(trials),
    })
}

/// Quadrature where it applies, enumeration otherwise.
pub fn preferred_exact_method(env: &Environment) -> RevenueMethod {
    if env.is_matroid() {
        RevenueMethod::Enumeration
    } else {
        RevenueMethod::Quadrature
    }
}

pub fn expected_revenue(
    dist: &ValueDistribution,
    env: &Environment,
    plan: &IroningPlan,
    method: RevenueMethod,
    trials: usize,
    seed: u64,
) -> Result<RevenueReport> {
    match method {
        RevenueMethod::Enumeration => expected_revenue_enum(dist, env, plan),
        RevenueMethod::Quadrature => expected_revenue_quadrature(dist, env, plan),
        RevenueMethod::MonteCarlo => expected_revenue_mc(dist, env, plan, trials, seed),
    }
}

/// Exact revenue with the given method; Monte Carlo is not accepted here.
pub fn exact_revenue(
    dist: &ValueDistribution,
    env: &Environment,
    plan: &IroningPlan,
    method: RevenueMethod,
) -> Result<f64> {
    match method {
        RevenueMethod::Enumeration => Ok(expected_revenue_enum(dist, env, plan)?.expected_revenue),
        RevenueMethod::Quadrature => {
            Ok(expected_revenue_quadrature(dist, env, plan)?.expected_revenue)
        }
        RevenueMethod::MonteCarlo => Err(invalid("additive loss needs an exact method")),
    }
}

/// Clamps rounding noise below zero; a clearly negative loss is an error.
pub fn clamp_loss(loss: f64) -> Result<f64> {
    if loss >= 0.0 {
        Ok(loss)
    } else if loss >= -LOSS_SLACK {
        Ok(0.0)
    } else {
        Err(Error::Guard(format!(
            "learned plan beats the optimal plan by {}",
            -loss
        )))
    }
}

/// Optimal expected revenue minus that of `learned`, both by `method`.
pub fn additive_loss_with(
    dist: &ValueDistribution,
    env: &Environment,
    learned: &IroningPlan,
    method: RevenueMethod,
) -> Result<f64> {
    let opt = exact_revenue(dist, env, &optimal_plan(dist)?, method)?;
    let alg = exact_revenue(dist, env, learned, method)?;
    clamp_loss(opt - alg)
}

pub fn additive_loss(
    dist: &ValueDistribution,
    env: &Environment,
    learned: &IroningPlan,
) -> Result<f64> {
    additive_loss_with(dist, env, learned, RevenueMethod::Enumeration)
}
