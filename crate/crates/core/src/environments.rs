//! Feasibility environments and their interim allocation rules.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform and partition matroids on the ground set `{0, …, n−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatroidSpec {
    Uniform {
        rank: usize,
    },
    Partition {
        blocks: Vec<usize>,
        capacities: Vec<usize>,
    },
}

impl MatroidSpec {
    fn validate(&self, n: usize) -> Result<()> {
        if let MatroidSpec::Partition { blocks, capacities } = self {
            if blocks.len() != n {
                return Err(invalid(format!(
                    "partition assigns {} elements but n = {n}",
                    blocks.len()
                )));
            }
            if let Some(&b) = blocks.iter().find(|&&b| b >= capacities.len()) {
                return Err(invalid(format!("block {b} has no capacity")));
            }
        }
        Ok(())
    }

    /// Block of each element and the capacity of each block.
    pub fn block_structure(&self, n: usize) -> (Vec<usize>, Vec<usize>) {
        match self {
            MatroidSpec::Uniform { rank } => (vec![0; n], vec![*rank]),
            MatroidSpec::Partition { blocks, capacities } => (blocks.clone(), capacities.clone()),
        }
    }

    pub fn is_independent(&self, set: &[usize]) -> bool {
        match self {
            MatroidSpec::Uniform { rank } => {
                let mut seen = set.to_vec();
                seen.sort_unstable();
                seen.dedup();
                seen.len() <= *rank
            }
            MatroidSpec::Partition { blocks, capacities } => {
                let mut used = vec![0usize; capacities.len()];
                let mut seen = set.to_vec();
                seen.sort_unstable();
                seen.dedup();
                for e in seen {
                    let b = blocks[e];
                    used[b] += 1;
                    if used[b] > capacities[b] {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Greedy scan by weight (descending), ties in `priority` order; only
    /// positive weights are taken.
    pub fn greedy_max_weight(&self, weights: &[f64], priority: &[usize]) -> Vec<usize> {
        let mut rank_of = vec![0usize; weights.len()];
        for (pos, &e) in priority.iter().enumerate() {
            rank_of[e] = pos;
        }
        let mut order: Vec<usize> = (0..weights.len()).filter(|&e| weights[e] > 0.0).collect();
        order.sort_by(|&a, &b| {
            weights[b]
                .total_cmp(&weights[a])
                .then(rank_of[a].cmp(&rank_of[b]))
        });
        let mut chosen: Vec<usize> = Vec::new();
        for e in order {
            chosen.push(e);
            if !self.is_independent(&chosen) {
                chosen.pop();
            }
        }
        chosen.sort_unstable();
        chosen
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentKind {
    SingleItem,
    KUnit { k: usize },
    Position { weights: Vec<f64> },
    Matroid(MatroidSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvironment", into = "RawEnvironment")]
pub struct Environment {
    kind: EnvironmentKind,
    n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RawEnvironment {
    SingleItem {
        n: usize,
    },
    KUnit {
        k: usize,
        n: usize,
    },
    Position {
        weights: Vec<f64>,
        n: usize,
    },
    Matroid {
        #[serde(flatten)]
        spec: MatroidSpec,
        n: usize,
    },
}

impl TryFrom<RawEnvironment> for Environment {
    type Error = Error;

    fn try_from(raw: RawEnvironment) -> Result<Self> {
        match raw {
            RawEnvironment::SingleItem { n } => Self::single_item(n),
            RawEnvironment::KUnit { k, n } => Self::k_unit(k, n),
            RawEnvironment::Position { weights, n } => Self::position(weights, n),
            RawEnvironment::Matroid { spec, n } => Self::matroid(spec, n),
        }
    }
}

impl From<Environment> for RawEnvironment {
    fn from(env: Environment) -> Self {
        let n = env.n;
        match env.kind {
            EnvironmentKind::SingleItem => RawEnvironment::SingleItem { n },
            EnvironmentKind::KUnit { k } => RawEnvironment::KUnit { k, n },
            EnvironmentKind::Position { weights } => RawEnvironment::Position { weights, n },
            EnvironmentKind::Matroid(spec) => RawEnvironment::Matroid { spec, n },
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("an environment needs at least one bidder"))
    } else {
        Ok(())
    }
}

impl Environment {
    pub fn single_item(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Self {
            kind: EnvironmentKind::SingleItem,
            n,
        })
    }

    pub fn k_unit(k: usize, n: usize) -> Result<Self> {
        check_n(n)?;
        if k == 0 || k > n {
            return Err(invalid(format!("k = {k} must satisfy 1 <= k <= n = {n}")));
        }
        Ok(Self {
            kind: EnvironmentKind::KUnit { k },
            n,
        })
    }

    pub fn position(weights: Vec<f64>, n: usize) -> Result<Self> {
        check_n(n)?;
        if weights.is_empty() || weights.len() > n {
            return Err(invalid(format!("need between 1 and n = {n} slot weights")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("slot weights must be finite and nonnegative"));
        }
        if weights.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("slot weights must be nonincreasing"));
        }
        Ok(Self {
            kind: EnvironmentKind::Position { weights },
            n,
        })
    }

    pub fn matroid(spec: MatroidSpec, n: usize) -> Result<Self> {
        check_n(n)?;
        spec.validate(n)?;
        Ok(Self {
            kind: EnvironmentKind::Matroid(spec),
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &EnvironmentKind {
        &self.kind
    }

    pub fn is_matroid(&self) -> bool {
        matches!(self.kind, EnvironmentKind::Matroid(_))
    }

    /// Slot weights padded with zeros to length `n`, for rank-based environments.
    pub fn slot_weights(&self) -> Option<Vec<f64>> {
        let mut w = match &self.kind {
            EnvironmentKind::SingleItem => vec![1.0],
            EnvironmentKind::KUnit { k } => vec![1.0; *k],
            EnvironmentKind::Position { weights } => weights.clone(),
            EnvironmentKind::Matroid(_) => return None,
        };
        w.resize(self.n, 0.0);
        Some(w)
    }

    /// Mixture coefficients `(j, w_j − w_{j+1})` expressing the environment as a
    /// combination of `j`-unit auctions.
    pub fn unit_mixture(&self) -> Option<Vec<(usize, f64)>> {
        let w = self.slot_weights()?;
        Some(
            (0..self.n)
                .map(|j| (j + 1, w[j] - w.get(j + 1).copied().unwrap_or(0.0)))
                .filter(|&(_, c)| c != 0.0)
                .collect(),
        )
    }

    fn mix(&self, f: impl Fn(usize) -> f64) -> Result<f64> {
        let mixture = self.unit_mixture().ok_or_else(|| {
            Error::Unsupported("matroid environments have no closed-form interim allocation".into())
        })?;
        Ok(mixture.iter().map(|&(j, c)| c * f(j)).sum())
    }

    /// Interim allocation `y(q)` of a bidder at quantile `q`.
    pub fn interim_allocation(&self, q: f64) -> Result<f64> {
        self.mix(|j| interim_allocation_kunit(q, j, self.n))
    }

    pub fn interim_allocation_derivative(&self, q: f64) -> Result<f64> {
        self.mix(|j| interim_allocation_derivative_kunit(q, j, self.n))
    }

    /// `∫₀^q y`.
    pub fn interim_allocation_integral(&self, q: f64) -> Result<f64> {
        self.mix(|j| interim_allocation_integral_kunit(q, j, self.n))
    }
}

/// `C(n, k)` in floating point.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_kn(k: usize, n: usize) {
    assert!(1 <= k && k <= n, "need 1 <= k <= n, got k={k}, n={n}");
}

/// `y_{k,n}(q) = Σ_{i=1}^{k} C(n−1, i−1) q^{i−1} (1−q)^{n−i}`: the chance that a
/// bidder at quantile `q` is among the top `k` of `n`.
///
/// Panics unless `1 <= k <= n`.
pub fn interim_allocation_kunit(q: f64, k: usize, n: usize) -> f64 {
    check_kn(k, n);
    (1..=k)
        .map(|i| binomial(n - 1, i - 1) * q.powi(i as i32 - 1) * (1.0 - q).powi((n - i) as i32))
        .sum()
}

/// `y'_{k,n}(q) = −(n−k) C(n−1, k−1) q^{k−1} (1−q)^{n−k−1}`.
pub fn interim_allocation_derivative_kunit(q: f64, k: usize, n: usize) -> f64 {
    check_kn(k, n);
    if k == n {
        return 0.0;
    }
    -((n - k) as f64)
        * binomial(n - 1, k - 1)
        * q.powi(k as i32 - 1)
        * (1.0 - q).powi((n - k - 1) as i32)
}

/// `∫₀^x y_{k,n} = E[min(Bin(n, x), k)] / n`.
pub fn interim_allocation_integral_kunit(x: f64, k: usize, n: usize) -> f64 {
    check_kn(k, n);
    let mut below = 0.0;
    let mut mass = 0.0;
    for j in 0..k {
        let p = binomial(n, j) * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
        below += j as f64 * p;
        mass += p;
    }
    (below + k as f64 * (1.0 - mass)) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    fn partition(blocks: &[usize], caps: &[usize]) -> MatroidSpec {
        MatroidSpec::Partition {
            blocks: blocks.to_vec(),
            capacities: caps.to_vec(),
        }
    }

    fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
        (0u32..1 << n).map(move |mask| (0..n).filter(|&e| mask >> e & 1 == 1).collect())
    }

    #[test]
    fn independence_examples() {
        let u = MatroidSpec::Uniform { rank: 2 };
        assert!(!u.is_independent(&[0, 1, 2]));
        assert!(u.is_independent(&[0, 2]));
        let p = partition(&[0, 0, 1], &[1, 1]);
        assert!(p.is_independent(&[0, 2]));
        assert!(!p.is_independent(&[0, 1]));
        assert!(u.is_independent(&[]) && p.is_independent(&[]));
    }

    #[test]
    fn matroid_axioms_hold_exhaustively() {
        let mut rng = rng_from_seed(11);
        for trial in 0..40 {
            let n = 1 + trial % 10;
            let spec = if trial % 3 == 0 {
                MatroidSpec::Uniform {
                    rank: rng.gen_range(0..=n),
                }
            } else {
                let nb = rng.gen_range(1..=3);
                let blocks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..nb)).collect();
                let caps: Vec<usize> = (0..nb).map(|_| rng.gen_range(0..=3)).collect();
                partition(&blocks, &caps)
            };
            let indep: Vec<Vec<usize>> = subsets(n).filter(|s| spec.is_independent(s)).collect();
            for s in &indep {
                for drop in 0..s.len() {
                    let mut sub = s.clone();
                    sub.remove(drop);
                    assert!(spec.is_independent(&sub), "downward closure");
                }
            }
            for a in &indep {
                for b in &indep {
                    if a.len() < b.len() {
                        let ok = b.iter().filter(|e| !a.contains(e)).any(|&e| {
                            let mut grown = a.clone();
                            grown.push(e);
                            spec.is_independent(&grown)
                        });
                        assert!(ok, "exchange property");
                    }
                }
            }
        }
    }

    #[test]
    fn greedy_examples() {
        let u = MatroidSpec::Uniform { rank: 2 };
        assert_eq!(
            u.greedy_max_weight(&[3.0, 1.0, 2.0], &[0, 1, 2]),
            vec![0, 2]
        );
        assert_eq!(
            u.greedy_max_weight(&[1.0, 1.0, 1.0], &[2, 0, 1]),
            vec![0, 2]
        );
        assert_eq!(
            u.greedy_max_weight(&[1.0, 1.0, 1.0], &[1, 2, 0]),
            vec![1, 2]
        );
        assert_eq!(u.greedy_max_weight(&[1.0, 0.0, -1.0], &[0, 1, 2]), vec![0]);
    }

    #[test]
    fn greedy_matches_brute_force() {
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let n = rng.gen_range(1..=8);
            let nb = rng.gen_range(1..=3);
            let blocks: Vec<usize> = (0..n).map(|_| rng.gen_range(0..nb)).collect();
            let caps: Vec<usize> = (0..nb).map(|_| rng.gen_range(0..=3)).collect();
            let spec = partition(&blocks, &caps);
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..10.0)).collect();
            let mut priority: Vec<usize> = (0..n).collect();
            priority.shuffle(&mut rng);
            let greedy: f64 = spec
                .greedy_max_weight(&weights, &priority)
                .iter()
                .map(|&e| weights[e])
                .sum();
            let best = subsets(n)
                .filter(|s| spec.is_independent(s))
                .map(|s| s.iter().map(|&e| weights[e]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((greedy - best).abs() < 1e-12);
        }
    }

    #[test]
    fn json_shapes() {
        let env: Environment = serde_json::from_str(r#"{"type":"k_unit","k":2,"n":5}"#).unwrap();
        assert_eq!(env, Environment::k_unit(2, 5).unwrap());
        let env: Environment =
            serde_json::from_str(r#"{"type":"position","weights":[1.0,0.6,0.3],"n":5}"#).unwrap();
        assert_eq!(env.slot_weights().unwrap(), vec![1.0, 0.6, 0.3, 0.0, 0.0]);
        let text =
            r#"{"type":"matroid","kind":"partition","blocks":[0,0,1,1],"capacities":[1,1],"n":4}"#;
        let env: Environment = serde_json::from_str(text).unwrap();
        assert!(env.is_matroid());
        let back: Environment =
            serde_json::from_str(&serde_json::to_string(&env).unwrap()).unwrap();
        assert_eq!(back, env);
        let env: Environment = serde_json::from_str(r#"{"type":"single_item","n":3}"#).unwrap();
        assert_eq!(env.slot_weights().unwrap(), vec![1.0, 0.0, 0.0]);

        assert!(serde_json::from_str::<Environment>(r#"{"type":"k_unit","k":6,"n":5}"#).is_err());
        assert!(serde_json::from_str::<Environment>(
            r#"{"type":"position","weights":[0.5,1.0],"n":5}"#
        )
        .is_err());
        let bad =
            r#"{"type":"matroid","kind":"partition","blocks":[0,2],"capacities":[1,1],"n":2}"#;
        assert!(serde_json::from_str::<Environment>(bad).is_err());
    }

    #[test]
    fn kunit_values() {
        assert_eq!(interim_allocation_kunit(0.5, 1, 2), 0.5);
        assert!((interim_allocation_kunit(0.3, 1, 4) - 0.7f64.powi(3)).abs() < 1e-15);
        for n in 1..8 {
            for k in 1..=n {
                assert!((interim_allocation_kunit(0.0, k, n) - 1.0).abs() < 1e-15);
            }
            for i in 0..=10 {
                assert!((interim_allocation_kunit(i as f64 / 10.0, n, n) - 1.0).abs() < 1e-12);
                assert_eq!(
                    interim_allocation_derivative_kunit(i as f64 / 10.0, n, n),
                    0.0
                );
            }
        }
        for i in 0..=10 {
            assert_eq!(
                interim_allocation_derivative_kunit(i as f64 / 10.0, 1, 2),
                -1.0
            );
        }
    }

    #[test]
    fn derivative_peak_location() {
        for n in 5..12 {
            for k in 2..n - 1 {
                let peak = (k - 1) as f64 / (n - 2) as f64;
                let at_peak = interim_allocation_derivative_kunit(peak, k, n).abs();
                for i in 0..=2000 {
                    let q = i as f64 / 2000.0;
                    assert!(interim_allocation_derivative_kunit(q, k, n).abs() <= at_peak + 1e-12);
                }
            }
        }
    }

    #[test]
    fn integral_matches_derivative_of_integral() {
        let h = 1e-5;
        for n in 1..9 {
            for k in 1..=n {
                assert_eq!(interim_allocation_integral_kunit(0.0, k, n), 0.0);
                for i in 1..20 {
                    let q = i as f64 / 20.0;
                    let fd = (interim_allocation_integral_kunit(q + h, k, n)
                        - interim_allocation_integral_kunit(q - h, k, n))
                        / (2.0 * h);
                    assert!(
                        (fd - interim_allocation_kunit(q, k, n)).abs() < 1e-8,
                        "k={k} n={n} q={q}"
                    );
                }
            }
        }
    }

    #[test]
    fn kunit_monte_carlo() {
        // A bidder at quantile q beats an opponent with probability 1 − q.
        let mut rng = rng_from_seed(77);
        let draws = 100_000;
        for (k, n, q) in [(1, 3, 0.3), (2, 4, 0.5), (2, 5, 0.7), (3, 5, 0.2)] {
            let wins = (0..draws)
                .filter(|_| {
                    let above = (0..n - 1).filter(|_| rng.gen::<f64>() < q).count();
                    above < k
                })
                .count();
            let p = interim_allocation_kunit(q, k, n);
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            assert!(
                (wins as f64 / draws as f64 - p).abs() <= 3.0 * sd + 1e-12,
                "k={k} n={n}"
            );
        }
    }

    #[test]
    fn position_mixture() {
        let env = Environment::position(vec![1.0, 0.6, 0.3], 5).unwrap();
        let direct = |q: f64| {
            0.4 * interim_allocation_kunit(q, 1, 5)
                + 0.3 * interim_allocation_kunit(q, 2, 5)
                + 0.3 * interim_allocation_kunit(q, 3, 5)
        };
        for i in 0..=10 {
            let q = i as f64 / 10.0;
            assert!((env.interim_allocation(q).unwrap() - direct(q)).abs() < 1e-14);
        }
        let matroid = Environment::matroid(MatroidSpec::Uniform { rank: 2 }, 3).unwrap();
        assert!(matroid.interim_allocation(0.5).is_err());
    }
}
