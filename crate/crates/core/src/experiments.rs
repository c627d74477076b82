//! Experiment drivers behind the command-line harness.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::ValueDistribution;
use crate::empirical::dkw_epsilon;
use crate::environments::Environment;
use crate::error::{invalid, Result};
use crate::learner::{compute_auction, IroningPlan, ValueInterval};
use crate::oracle::{
    clamp_loss, exact_revenue, expected_revenue_enum, optimal_plan, RevenueMethod,
};
use crate::rng::stream_seed;

pub const LOSS_HEADER: &str = "m,trial,epsilon,loss,bound,within_bound";

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub m_list: Vec<usize>,
    pub trials: usize,
    pub delta: f64,
    pub seed: u64,
    pub method: RevenueMethod,
}

impl LossConfig {
    fn validate(&self) -> Result<()> {
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return Err(invalid("m_list must be nonempty and positive"));
        }
        if self.m_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("m_list must be strictly ascending"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.method == RevenueMethod::MonteCarlo {
            return Err(invalid("loss experiments need an exact revenue method"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub m: usize,
    pub trial: usize,
    pub epsilon: f64,
    pub loss: f64,
    pub bound: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossSummary {
    pub m: usize,
    pub epsilon: f64,
    pub bound: f64,
    pub median_loss: f64,
    pub fraction_within: f64,
}

/// Sample seed of one trial; depends only on the master seed, `m` and the trial index.
pub fn trial_seed(master: u64, m: usize, trial: usize) -> u64 {
    stream_seed(stream_seed(master, m as u64), trial as u64)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// For every `m`, runs `trials` independent sample → learn → loss pipelines,
/// writing each block of rows (then its summary row) as soon as it is done.
/// Summary rows carry `summary` in the trial column, the median loss in the
/// loss column and the fraction within bound in the last column.
pub fn run_loss_experiment(
    dist: &ValueDistribution,
    env: &Environment,
    config: &LossConfig,
    out: &mut impl Write,
) -> Result<Vec<LossSummary>> {
    config.validate()?;
    let n = env.n();
    let h = dist.h_max();
    let opt = exact_revenue(dist, env, &optimal_plan(dist)?, config.method)?;
    writeln!(out, "{LOSS_HEADER}")?;
    let mut summaries = Vec::with_capacity(config.m_list.len());
    for &m in &config.m_list {
        let epsilon = dkw_epsilon(m, config.delta)?;
        let bound = 3.0 * epsilon * n as f64 * h;
        let rows: Vec<Result<LossRow>> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                let samples = dist.sample(m, trial_seed(config.seed, m, trial))?;
                let plan = compute_auction(&samples, config.delta, h)?;
                let loss = clamp_loss(opt - exact_revenue(dist, env, &plan, config.method)?)?;
                Ok(LossRow {
                    m,
                    trial,
                    epsilon,
                    loss,
                    bound,
                    within_bound: loss <= bound,
                })
            })
            .collect();
        let mut losses = Vec::with_capacity(config.trials);
        let mut within = 0usize;
        for row in rows {
            let row = row?;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                row.m, row.trial, row.epsilon, row.loss, row.bound, row.within_bound
            )?;
            out.flush()?;
            losses.push(row.loss);
            within += usize::from(row.within_bound);
        }
        let summary = LossSummary {
            m,
            epsilon,
            bound,
            median_loss: median(&mut losses),
            fraction_within: within as f64 / config.trials as f64,
        };
        writeln!(
            out,
            "{},summary,{},{},{},{}",
            m, epsilon, summary.median_loss, bound, summary.fraction_within
        )?;
        out.flush()?;
        summaries.push(summary);
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IroningValueRow {
    pub n: usize,
    pub h_max: f64,
    pub ironed_revenue: f64,
    pub second_price_revenue: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverIroningDemo {
    pub n: usize,
    pub atoms: Vec<(f64, f64)>,
    pub plan: IroningPlan,
    pub over_ironed_revenue: f64,
    pub second_price_revenue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExamplesReport {
    pub ironing_value: Vec<IroningValueRow>,
    pub over_ironing: OverIroningDemo,
}

/// Values 1 and `h` with `P(h) = p`.
pub fn two_point(h: f64, p: f64) -> Result<ValueDistribution> {
    ValueDistribution::from_pairs(&[(1.0, 1.0 - p), (h, p)], h)
}

/// Iron `[1, h)` with reserve 1.
pub fn iron_below(h: f64) -> IroningPlan {
    IroningPlan::new(vec![ValueInterval { lo: 1.0, hi: h }], 1.0).expect("valid plan")
}

/// (a) value of ironing on the two-point law with `P(H) = 1/(nH)`, against
/// second price; (b) ironing `[1, 5.5)` when a little mass sits above 5,
/// against second price.
pub fn experiment_examples() -> Result<ExamplesReport> {
    let mut ironing_value = Vec::new();
    let single = |n: usize| Environment::single_item(n);
    for n in [2usize, 5, 10] {
        for h in [10.0, 100.0, 1000.0] {
            let dist = two_point(h, 1.0 / (n as f64 * h))?;
            let env = single(n)?;
            ironing_value.push(IroningValueRow {
                n,
                h_max: h,
                ironed_revenue: expected_revenue_enum(&dist, &env, &iron_below(h))?
                    .expected_revenue,
                second_price_revenue: expected_revenue_enum(&dist, &env, &IroningPlan::empty())?
                    .expected_revenue,
                limit: 2.0 - 1.0 / n as f64,
            });
        }
    }

    let atoms = vec![(1.0, 0.9), (5.0, 0.09), (5.5, 0.01)];
    let dist = ValueDistribution::from_pairs(&atoms, 5.5)?;
    let env = single(10)?;
    let plan = iron_below(5.5);
    let over_ironing = OverIroningDemo {
        n: 10,
        over_ironed_revenue: expected_revenue_enum(&dist, &env, &plan)?.expected_revenue,
        second_price_revenue: expected_revenue_enum(&dist, &env, &IroningPlan::empty())?
            .expected_revenue,
        atoms,
        plan,
    };
    Ok(ExamplesReport {
        ironing_value,
        over_ironing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bimodal() -> ValueDistribution {
        ValueDistribution::from_pairs(&[(1.0, 0.9), (5.0, 0.1)], 5.0).unwrap()
    }

    #[test]
    fn loss_experiment_is_reproducible() {
        let env = Environment::single_item(3).unwrap();
        let config = LossConfig {
            m_list: vec![50, 200],
            trials: 4,
            delta: 0.1,
            seed: 17,
            method: RevenueMethod::Quadrature,
        };
        let mut first = Vec::new();
        let summaries = run_loss_experiment(&bimodal(), &env, &config, &mut first).unwrap();
        let mut second = Vec::new();
        run_loss_experiment(&bimodal(), &env, &config, &mut second).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first).unwrap();
        assert_eq!(text.lines().next().unwrap(), LOSS_HEADER);
        assert_eq!(text.lines().count(), 1 + 2 * (4 + 1));
        assert_eq!(summaries.len(), 2);
        assert!(text.lines().nth(5).unwrap().starts_with("50,summary,"));
    }

    #[test]
    fn loss_config_validation() {
        let env = Environment::single_item(3).unwrap();
        let mut config = LossConfig {
            m_list: vec![200, 50],
            trials: 4,
            delta: 0.1,
            seed: 17,
            method: RevenueMethod::Quadrature,
        };
        assert!(run_loss_experiment(&bimodal(), &env, &config, &mut Vec::new()).is_err());
        config.m_list = vec![50];
        config.trials = 0;
        assert!(run_loss_experiment(&bimodal(), &env, &config, &mut Vec::new()).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn examples_report() {
        let report = experiment_examples().unwrap();
        for row in &report.ironing_value {
            assert!(row.ironed_revenue > row.second_price_revenue);
            if row.h_max == 1000.0 {
                assert!((row.ironed_revenue - row.limit).abs() < 0.02, "{row:?}");
                assert!((row.second_price_revenue - 1.0).abs() < 0.02, "{row:?}");
            }
        }
        let demo = &report.over_ironing;
        assert!(demo.over_ironed_revenue < demo.second_price_revenue);
    }
}
