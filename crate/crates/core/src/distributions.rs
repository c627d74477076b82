//! Bounded value distributions with exact CDF, quantile and revenue curve.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::curves::RevenueCurve;
use crate::error::{invalid, Error, Result};
use crate::rng::{rng_from_seed, Rng};

const SUM_TOLERANCE: f64 = 1e-12;

/// Default number of quantile grid cells for uniform-mixture revenue curves.
pub const DEFAULT_GRID: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformComponent {
    pub lo: f64,
    pub hi: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionKind {
    Discrete(Vec<Atom>),
    UniformMixture(Vec<UniformComponent>),
}

/// A value law on `[0, h_max]`.
///
/// Discrete distributions additionally cache the upper tail `P(V >= v_i)` of
/// every atom. All exact quantities (CDF, quantile, revenue curve) are computed
/// from these tails so that they agree bit-for-bit at atom boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct ValueDistribution {
    kind: DistributionKind,
    h_max: f64,
    tails: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum DistributionSpec {
    Discrete {
        h_max: f64,
        atoms: Vec<Atom>,
    },
    UniformMixture {
        h_max: f64,
        components: Vec<UniformComponent>,
    },
}

impl TryFrom<DistributionSpec> for ValueDistribution {
    type Error = Error;

    fn try_from(spec: DistributionSpec) -> Result<Self> {
        match spec {
            DistributionSpec::Discrete { h_max, atoms } => Self::discrete(atoms, h_max),
            DistributionSpec::UniformMixture { h_max, components } => {
                Self::uniform_mixture(components, h_max)
            }
        }
    }
}

impl From<ValueDistribution> for DistributionSpec {
    fn from(dist: ValueDistribution) -> Self {
        match dist.kind {
            DistributionKind::Discrete(atoms) => DistributionSpec::Discrete {
                h_max: dist.h_max,
                atoms,
            },
            DistributionKind::UniformMixture(components) => DistributionSpec::UniformMixture {
                h_max: dist.h_max,
                components,
            },
        }
    }
}

fn check_h_max(h_max: f64) -> Result<()> {
    if !(h_max.is_finite() && h_max > 0.0) {
        return Err(invalid(format!(
            "h_max must be finite and positive, got {h_max}"
        )));
    }
    Ok(())
}

fn check_mass(total: f64) -> Result<()> {
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(invalid(format!("probabilities sum to {total}, expected 1")));
    }
    Ok(())
}

impl ValueDistribution {
    pub fn discrete(atoms: Vec<Atom>, h_max: f64) -> Result<Self> {
        check_h_max(h_max)?;
        if atoms.is_empty() {
            return Err(invalid("discrete distribution needs at least one atom"));
        }
        for (i, atom) in atoms.iter().enumerate() {
            if !(atom.value.is_finite() && (0.0..=h_max).contains(&atom.value)) {
                return Err(invalid(format!(
                    "atom value {} outside [0, {h_max}]",
                    atom.value
                )));
            }
            if !(atom.prob.is_finite() && atom.prob > 0.0 && atom.prob <= 1.0) {
                return Err(invalid(format!(
                    "atom probability {} not in (0, 1]",
                    atom.prob
                )));
            }
            if i > 0 && atoms[i - 1].value >= atom.value {
                return Err(invalid("atoms must be sorted by strictly increasing value"));
            }
        }
        check_mass(atoms.iter().map(|a| a.prob).sum())?;

        let mut tails = vec![0.0; atoms.len()];
        let mut acc = 0.0;
        for i in (0..atoms.len()).rev() {
            acc += atoms[i].prob;
            tails[i] = acc;
        }
        tails[0] = 1.0;
        Ok(Self {
            kind: DistributionKind::Discrete(atoms),
            h_max,
            tails,
        })
    }

    /// Convenience constructor from `(value, prob)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)], h_max: f64) -> Result<Self> {
        let atoms = pairs
            .iter()
            .map(|&(value, prob)| Atom { value, prob })
            .collect();
        Self::discrete(atoms, h_max)
    }

    pub fn uniform_mixture(components: Vec<UniformComponent>, h_max: f64) -> Result<Self> {
        check_h_max(h_max)?;
        if components.is_empty() {
            return Err(invalid("uniform mixture needs at least one component"));
        }
        for c in &components {
            if !(c.lo.is_finite()
                && c.hi.is_finite()
                && 0.0 <= c.lo
                && c.lo < c.hi
                && c.hi <= h_max)
            {
                return Err(invalid(format!(
                    "component [{}, {}] must satisfy 0 <= lo < hi <= {h_max}",
                    c.lo, c.hi
                )));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(invalid(format!(
                    "component weight {} must be positive",
                    c.weight
                )));
            }
        }
        check_mass(components.iter().map(|c| c.weight).sum())?;
        Ok(Self {
            kind: DistributionKind::UniformMixture(components),
            h_max,
            tails: Vec::new(),
        })
    }

    /// A single atom at `value` with `h_max = max(value, 1)`.
    pub fn point_mass(value: f64) -> Result<Self> {
        Self::from_pairs(&[(value, 1.0)], value.max(1.0))
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn kind(&self) -> &DistributionKind {
        &self.kind
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, DistributionKind::Discrete(_))
    }

    pub fn atoms(&self) -> Option<&[Atom]> {
        match &self.kind {
            DistributionKind::Discrete(atoms) => Some(atoms),
            DistributionKind::UniformMixture(_) => None,
        }
    }

    /// Atoms, or an `Unsupported` error for continuous laws.
    pub fn require_atoms(&self) -> Result<&[Atom]> {
        self.atoms().ok_or_else(|| {
            Error::Unsupported("exact oracle requires a discrete distribution".into())
        })
    }

    /// `P(V > v)` for discrete laws.
    fn strict_tail(&self, atoms: &[Atom], v: f64) -> f64 {
        let idx = atoms.partition_point(|a| a.value <= v);
        self.tails.get(idx).copied().unwrap_or(0.0)
    }

    /// Right-continuous CDF `P(V <= v)`.
    pub fn cdf(&self, v: f64) -> f64 {
        match &self.kind {
            DistributionKind::Discrete(atoms) => 1.0 - self.strict_tail(atoms, v),
            DistributionKind::UniformMixture(components) => components
                .iter()
                .map(|c| c.weight * ((v - c.lo) / (c.hi - c.lo)).clamp(0.0, 1.0))
                .sum(),
        }
    }

    /// `P(V >= v)`, the quantile of a posted price `v`.
    pub fn tail(&self, v: f64) -> f64 {
        match &self.kind {
            DistributionKind::Discrete(atoms) => {
                let idx = atoms.partition_point(|a| a.value < v);
                self.tails.get(idx).copied().unwrap_or(0.0)
            }
            DistributionKind::UniformMixture(_) => 1.0 - self.cdf(v),
        }
    }

    /// Smallest `v` with `cdf(v) >= p`; `quantile(0)` is the smallest support point.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("quantile argument {p} outside [0, 1]")));
        }
        Ok(match &self.kind {
            DistributionKind::Discrete(atoms) => {
                for (i, atom) in atoms.iter().enumerate() {
                    let cdf = 1.0 - self.tails.get(i + 1).copied().unwrap_or(0.0);
                    if cdf >= p {
                        return Ok(atom.value);
                    }
                }
                atoms[atoms.len() - 1].value
            }
            DistributionKind::UniformMixture(components) => {
                let mut points: Vec<f64> = components.iter().flat_map(|c| [c.lo, c.hi]).collect();
                points.sort_by(f64::total_cmp);
                points.dedup();
                let mut prev = points[0];
                let mut prev_cdf = self.cdf(prev);
                if p <= prev_cdf {
                    return Ok(prev);
                }
                for &point in &points[1..] {
                    let cdf = self.cdf(point);
                    if cdf >= p {
                        return Ok(prev + (p - prev_cdf) / (cdf - prev_cdf) * (point - prev));
                    }
                    prev = point;
                    prev_cdf = cdf;
                }
                prev
            }
        })
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(invalid("sample count must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        Ok(self.sample_with(count, &mut rng))
    }

    pub fn sample_with(&self, count: usize, rng: &mut Rng) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    fn draw(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.gen();
        match &self.kind {
            DistributionKind::Discrete(atoms) => {
                // u < P(V >= v_i) picks the largest such atom.
                let idx = self.tails.partition_point(|&t| t > u);
                atoms[idx.saturating_sub(1)].value
            }
            DistributionKind::UniformMixture(components) => {
                let mut acc = 0.0;
                let last = components.len() - 1;
                let chosen = components
                    .iter()
                    .enumerate()
                    .find(|(i, c)| {
                        acc += c.weight;
                        u < acc || *i == last
                    })
                    .map(|(_, c)| c)
                    .unwrap_or(&components[last]);
                rng.gen_range(chosen.lo..chosen.hi)
            }
        }
    }

    /// `R(q) = q·F⁻¹(1−q)`: exact for discrete laws, on a uniform grid of
    /// [`DEFAULT_GRID`] cells for uniform mixtures.
    pub fn exact_revenue_curve(&self) -> RevenueCurve {
        self.revenue_curve_with_grid(DEFAULT_GRID)
    }

    pub fn revenue_curve_with_grid(&self, grid: usize) -> RevenueCurve {
        match &self.kind {
            DistributionKind::Discrete(atoms) => {
                // Atom i sells on quantiles [P(V >= v_{i+1}), P(V >= v_i)).
                let steps: Vec<(f64, f64)> = (0..atoms.len())
                    .rev()
                    .map(|i| {
                        (
                            self.tails.get(i + 1).copied().unwrap_or(0.0),
                            atoms[i].value,
                        )
                    })
                    .collect();
                RevenueCurve::from_price_steps(&steps)
            }
            DistributionKind::UniformMixture(_) => {
                let grid = grid.max(1);
                let points = (0..=grid).map(|j| {
                    let q = j as f64 / grid as f64;
                    let price = self.quantile(1.0 - q).unwrap_or(self.h_max);
                    (q, price)
                });
                RevenueCurve::from_continuous_prices(points)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_two() -> ValueDistribution {
        ValueDistribution::from_pairs(&[(1.0, 0.9), (5.0, 0.1)], 5.0).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ValueDistribution::from_pairs(&[(1.0, 0.5)], 5.0).is_err());
        assert!(ValueDistribution::from_pairs(&[(5.0, 0.5), (1.0, 0.5)], 5.0).is_err());
        assert!(ValueDistribution::from_pairs(&[(6.0, 1.0)], 5.0).is_err());
        assert!(ValueDistribution::from_pairs(&[(1.0, 0.5), (1.0, 0.5)], 5.0).is_err());
        let bad = UniformComponent {
            lo: 2.0,
            hi: 1.0,
            weight: 1.0,
        };
        assert!(ValueDistribution::uniform_mixture(vec![bad], 5.0).is_err());
    }

    #[test]
    fn point_mass_samples() {
        let dist = ValueDistribution::from_pairs(&[(1.0, 1.0)], 1.0).unwrap();
        assert_eq!(dist.sample(3, 99).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(dist.sample(0, 1).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let dist = example_two();
        assert_eq!(dist.sample(50, 4).unwrap(), dist.sample(50, 4).unwrap());
        assert_ne!(dist.sample(50, 4).unwrap(), dist.sample(50, 5).unwrap());
    }

    #[test]
    fn discrete_frequencies() {
        // Binomial(1e5, 0.1): sd of the fraction is sqrt(0.09/1e5) = 9.49e-4,
        // so 3 sd < 0.003 and the stated ±0.01 band is comfortably wide.
        let draws = example_two().sample(100_000, 2024).unwrap();
        let fives = draws.iter().filter(|&&v| v == 5.0).count() as f64 / 1e5;
        assert!((fives - 0.1).abs() < 0.01, "fraction {fives}");
        assert!(draws.iter().all(|&v| v == 1.0 || v == 5.0));
    }

    #[test]
    fn uniform_mean() {
        // U(0,1): sd of the mean is sqrt(1/12/1e5) = 9.1e-4.
        let c = UniformComponent {
            lo: 0.0,
            hi: 1.0,
            weight: 1.0,
        };
        let dist = ValueDistribution::uniform_mixture(vec![c], 1.0).unwrap();
        let draws = dist.sample(100_000, 7).unwrap();
        let mean = draws.iter().sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!(draws.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn cdf_and_quantile() {
        let dist = example_two();
        assert_eq!(dist.cdf(1.0), 0.9);
        assert_eq!(dist.cdf(0.5), 0.0);
        assert_eq!(dist.cdf(5.0), 1.0);
        assert_eq!(dist.quantile(0.95).unwrap(), 5.0);
        assert_eq!(dist.quantile(0.9).unwrap(), 1.0);
        assert_eq!(dist.quantile(0.0).unwrap(), 1.0);
        assert_eq!(dist.quantile(1.0).unwrap(), 5.0);
        assert!(dist.quantile(1.5).is_err());
        assert!(dist.quantile(-0.1).is_err());
        assert_eq!(dist.tail(5.0), 0.1);
        assert_eq!(dist.tail(3.0), 0.1);
        assert_eq!(dist.tail(1.0), 1.0);
        assert_eq!(dist.tail(5.5), 0.0);

        let c = UniformComponent {
            lo: 0.0,
            hi: 2.0,
            weight: 1.0,
        };
        let uniform = ValueDistribution::uniform_mixture(vec![c], 2.0).unwrap();
        assert_eq!(uniform.quantile(0.25).unwrap(), 0.5);
        assert_eq!(uniform.quantile(0.0).unwrap(), 0.0);
    }

    #[test]
    fn quantile_skips_gaps_in_mixtures() {
        let a = UniformComponent {
            lo: 0.0,
            hi: 1.0,
            weight: 0.5,
        };
        let b = UniformComponent {
            lo: 3.0,
            hi: 4.0,
            weight: 0.5,
        };
        let dist = ValueDistribution::uniform_mixture(vec![a, b], 4.0).unwrap();
        assert_eq!(dist.quantile(0.5).unwrap(), 1.0);
        assert!((dist.quantile(0.75).unwrap() - 3.5).abs() < 1e-12);
        assert!((dist.cdf(2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cdf_quantile_consistency_on_grid() {
        let dist =
            ValueDistribution::from_pairs(&[(0.5, 0.3), (2.0, 0.25), (3.0, 0.45)], 3.0).unwrap();
        for i in 0..=1000 {
            let p = i as f64 / 1000.0;
            let v = dist.quantile(p).unwrap();
            assert!(dist.cdf(v) >= p, "p={p}");
        }
    }

    #[test]
    fn revenue_curve_vertices() {
        let curve = example_two().exact_revenue_curve();
        let pts: Vec<(f64, f64)> = curve
            .curve()
            .vertices()
            .iter()
            .map(|v| (v.q, v.value))
            .collect();
        assert!(pts.contains(&(0.1, 0.5)));
        assert!(pts.contains(&(1.0, 1.0)));
        assert_eq!(pts[0], (0.0, 0.0));

        let flat = ValueDistribution::from_pairs(&[(3.0, 1.0)], 3.0).unwrap();
        let pts: Vec<(f64, f64)> = flat
            .exact_revenue_curve()
            .curve()
            .vertices()
            .iter()
            .map(|v| (v.q, v.value))
            .collect();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 3.0)]);

        let h = 10.0;
        let ex1 = ValueDistribution::from_pairs(&[(1.0, 1.0 - 1.0 / h), (h, 1.0 / h)], h).unwrap();
        let pts: Vec<(f64, f64)> = ex1
            .exact_revenue_curve()
            .curve()
            .vertices()
            .iter()
            .map(|v| (v.q, v.value))
            .collect();
        assert!(pts.contains(&(1.0 / h, 1.0)));
        assert!(pts.contains(&(1.0, 1.0)));
    }

    #[test]
    fn revenue_curve_matches_definition_at_breakpoints() {
        let dist =
            ValueDistribution::from_pairs(&[(0.7, 0.2), (1.3, 0.35), (2.9, 0.05), (4.0, 0.4)], 4.0)
                .unwrap();
        let curve = dist.exact_revenue_curve();
        for v in curve.curve().vertices() {
            let expected = v.q * dist.quantile(1.0 - v.q).unwrap();
            assert_eq!(curve.curve().evaluate(v.q).unwrap(), expected, "q={}", v.q);
        }
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"type":"discrete","h_max":5,"atoms":[{"value":1,"prob":0.9},{"value":5,"prob":0.1}]}"#;
        let dist: ValueDistribution = serde_json::from_str(text).unwrap();
        assert_eq!(dist, example_two());
        let back: ValueDistribution =
            serde_json::from_str(&serde_json::to_string(&dist).unwrap()).unwrap();
        assert_eq!(back, dist);

        let text =
            r#"{"type":"uniform_mixture","h_max":2,"components":[{"lo":0,"hi":2,"weight":1.0}]}"#;
        let dist: ValueDistribution = serde_json::from_str(text).unwrap();
        assert!(!dist.is_discrete());

        let bad = r#"{"type":"discrete","h_max":5,"atoms":[{"value":1,"prob":0.5}]}"#;
        assert!(serde_json::from_str::<ValueDistribution>(bad).is_err());
    }
}
