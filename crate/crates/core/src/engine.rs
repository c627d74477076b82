//! Running an ironed, reserved auction on a bid profile.
//!
//! Equal rank keys split the contested capacity fractionally, payments follow
//! from the threshold integral `b·x(b) − ∫₀ᵇ x(z) dz`, and a realized outcome
//! is drawn by a seeded random priority order among tied bidders.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::environments::{Environment, EnvironmentKind};
use crate::error::{invalid, Result};
use crate::learner::IroningPlan;
use crate::rng::rng_from_seed;

/// Ranking key of a bid; `Rejected` sorts below every accepted key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankKey {
    Rejected,
    Accepted(f64),
}

impl RankKey {
    pub fn value(&self) -> Option<f64> {
        match self {
            RankKey::Rejected => None,
            RankKey::Accepted(v) => Some(*v),
        }
    }
}

impl Eq for RankKey {}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (RankKey::Rejected, RankKey::Rejected) => Ordering::Equal,
            (RankKey::Rejected, _) => Ordering::Less,
            (_, RankKey::Rejected) => Ordering::Greater,
            (RankKey::Accepted(a), RankKey::Accepted(b)) => a.total_cmp(b),
        }
    }
}

/// Bids below the reserve are rejected; bids inside an ironing interval
/// `[lo, hi)` rank as `lo`; all others rank as themselves.
pub fn ironed_key(bid: f64, plan: &IroningPlan) -> RankKey {
    if bid < plan.reserve() {
        RankKey::Rejected
    } else {
        RankKey::Accepted(plan.interval_of(bid).map_or(bid, |iv| iv.lo))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BidProfile {
    bids: Vec<f64>,
}

impl BidProfile {
    pub fn new(bids: Vec<f64>) -> Result<Self> {
        if let Some(bad) = bids.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(invalid(format!("bid {bad} must be finite and nonnegative")));
        }
        Ok(Self { bids })
    }

    pub fn bids(&self) -> &[f64] {
        &self.bids
    }

    pub fn len(&self) -> usize {
        self.bids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuctionOutcome {
    pub interim_alloc: Vec<f64>,
    pub interim_payment: Vec<f64>,
    pub realized_alloc: Vec<f64>,
    pub realized_payments: Vec<f64>,
}

impl AuctionOutcome {
    pub fn revenue(&self) -> f64 {
        self.interim_payment.iter().sum()
    }

    pub fn realized_revenue(&self) -> f64 {
        self.realized_payments.iter().sum()
    }
}

fn check_profile(env: &Environment, bids: &BidProfile) -> Result<()> {
    if bids.len() != env.n() {
        return Err(invalid(format!(
            "environment has {} bidders but {} bids were given",
            env.n(),
            bids.len()
        )));
    }
    Ok(())
}

/// Bidders with accepted keys grouped by equal key, best group first.
fn tie_groups(keys: &[RankKey]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..keys.len())
        .filter(|&i| keys[i] != RankKey::Rejected)
        .collect();
    order.sort_by(|&a, &b| keys[b].cmp(&keys[a]).then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if keys[g[0]] == keys[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Expected allocation given rank keys, splitting ties symmetrically.
fn allocate_keys(env: &Environment, keys: &[RankKey]) -> Vec<f64> {
    let mut alloc = vec![0.0; keys.len()];
    let groups = tie_groups(keys);
    match env.kind() {
        EnvironmentKind::Matroid(spec) => {
            let (blocks, mut remaining) = spec.block_structure(env.n());
            for group in groups {
                let mut tied = vec![0usize; remaining.len()];
                for &i in &group {
                    tied[blocks[i]] += 1;
                }
                for &i in &group {
                    let b = blocks[i];
                    alloc[i] = (remaining[b] as f64 / tied[b] as f64).min(1.0);
                }
                for (b, t) in tied.into_iter().enumerate() {
                    remaining[b] -= remaining[b].min(t);
                }
            }
        }
        _ => {
            let weights = env.slot_weights().expect("rank-based environment");
            let mut next = 0;
            for group in groups {
                let t = group.len();
                let share = weights[next..next + t].iter().sum::<f64>() / t as f64;
                for &i in &group {
                    alloc[i] = share;
                }
                next += t;
            }
        }
    }
    alloc
}

pub fn allocate(env: &Environment, plan: &IroningPlan, bids: &BidProfile) -> Result<Vec<f64>> {
    check_profile(env, bids)?;
    let keys: Vec<RankKey> = bids.bids().iter().map(|&b| ironed_key(b, plan)).collect();
    Ok(allocate_keys(env, &keys))
}

/// Threshold payment of one bidder, integrating its allocation exactly over
/// the pieces on which it is constant.
fn payment_with_keys(
    env: &Environment,
    plan: &IroningPlan,
    bids: &[f64],
    keys: &[RankKey],
    own_alloc: f64,
    bidder: usize,
) -> f64 {
    if own_alloc == 0.0 {
        return 0.0;
    }
    let bid = bids[bidder];
    let mut cuts: Vec<f64> = vec![0.0, bid, plan.reserve()];
    cuts.extend(plan.intervals().iter().flat_map(|iv| [iv.lo, iv.hi]));
    cuts.extend(
        keys.iter()
            .enumerate()
            .filter(|&(j, _)| j != bidder)
            .filter_map(|(_, k)| k.value()),
    );
    cuts.retain(|&c| (0.0..=bid).contains(&c));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut probe = keys.to_vec();
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        probe[bidder] = ironed_key(mid, plan);
        let x = allocate_keys(env, &probe)[bidder];
        if x != 0.0 {
            area += x * (w[1] - w[0]);
        }
    }
    let payment = bid * own_alloc - area;
    payment.max(0.0)
}

pub fn myerson_payment(
    env: &Environment,
    plan: &IroningPlan,
    bids: &BidProfile,
    bidder: usize,
) -> Result<f64> {
    check_profile(env, bids)?;
    if bidder >= env.n() {
        return Err(invalid(format!("bidder {bidder} out of range")));
    }
    let keys: Vec<RankKey> = bids.bids().iter().map(|&b| ironed_key(b, plan)).collect();
    let alloc = allocate_keys(env, &keys);
    Ok(payment_with_keys(
        env,
        plan,
        bids.bids(),
        &keys,
        alloc[bidder],
        bidder,
    ))
}

/// Interim allocations and payments for every bidder.
pub fn interim_outcome(
    env: &Environment,
    plan: &IroningPlan,
    bids: &BidProfile,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_profile(env, bids)?;
    let keys: Vec<RankKey> = bids.bids().iter().map(|&b| ironed_key(b, plan)).collect();
    let alloc = allocate_keys(env, &keys);
    let payments = (0..env.n())
        .map(|i| payment_with_keys(env, plan, bids.bids(), &keys, alloc[i], i))
        .collect();
    Ok((alloc, payments))
}

/// Total expected payment of a profile.
pub fn interim_revenue(env: &Environment, plan: &IroningPlan, bids: &BidProfile) -> Result<f64> {
    Ok(interim_outcome(env, plan, bids)?.1.iter().sum())
}

/// One draw of the lottery behind the fractional allocation: tied bidders are
/// ordered by a seeded random priority and served greedily.
fn realize(env: &Environment, keys: &[RankKey], seed: u64) -> Vec<f64> {
    let n = keys.len();
    let mut priority: Vec<usize> = (0..n).collect();
    priority.shuffle(&mut rng_from_seed(seed));
    let mut rank_of = vec![0usize; n];
    for (pos, &i) in priority.iter().enumerate() {
        rank_of[i] = pos;
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| keys[i] != RankKey::Rejected).collect();
    order.sort_by(|&a, &b| keys[b].cmp(&keys[a]).then(rank_of[a].cmp(&rank_of[b])));

    let mut realized = vec![0.0; n];
    match env.kind() {
        EnvironmentKind::Matroid(spec) => {
            let mut chosen = Vec::new();
            for i in order {
                chosen.push(i);
                if spec.is_independent(&chosen) {
                    realized[i] = 1.0;
                } else {
                    chosen.pop();
                }
            }
        }
        _ => {
            let weights = env.slot_weights().expect("rank-based environment");
            for (slot, i) in order.into_iter().enumerate() {
                realized[i] = weights[slot];
            }
        }
    }
    realized
}

/// Interim outcome plus a seeded realization in which each winner pays the
/// per-unit price `interim_payment / interim_alloc`.
pub fn run_auction(
    env: &Environment,
    plan: &IroningPlan,
    bids: &BidProfile,
    seed: u64,
) -> Result<AuctionOutcome> {
    let (interim_alloc, interim_payment) = interim_outcome(env, plan, bids)?;
    let keys: Vec<RankKey> = bids.bids().iter().map(|&b| ironed_key(b, plan)).collect();
    let realized_alloc = realize(env, &keys, seed);
    let realized_payments = (0..env.n())
        .map(|i| {
            if realized_alloc[i] > 0.0 && interim_alloc[i] > 0.0 {
                realized_alloc[i] * (interim_payment[i] / interim_alloc[i])
            } else {
                0.0
            }
        })
        .collect();
    Ok(AuctionOutcome {
        interim_alloc,
        interim_payment,
        realized_alloc,
        realized_payments,
    })
}
