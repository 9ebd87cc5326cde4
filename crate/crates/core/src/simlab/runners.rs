//! Study runners. Replications run in parallel and are collected in
//! replication order, so reports depend only on the configuration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mse, quantile_sorted, r_and_p, sorted, RSummary};
use super::studies::{generate, StudyConfig, StudyId, StudyKind};
use super::SimError;
use crate::borrowing::{build_weight_field, LrThreshold, PairTester, WeightOptions};
use crate::isotonic::DesignPoint;
use crate::joint::{fit_joint, BinomialWeighting, FitOptions, JointError, JointFit, JointProblem, SweepOrder};
use crate::likelihood::AlignedDesign;

pub const SCHEMA: &str = "isofuse-v1";
pub const LR_PROBS: [f64; 5] = [0.5, 0.7, 0.8, 0.9, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema: String,
    pub study: StudyId,
    pub n: usize,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    pub result: StudyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyResult {
    Performance(PerformanceSummary),
    Quantiles(QuantileTable),
    Power(PowerCurve),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_sweeps: usize,
    pub nonconverged: usize,
    pub descent_violations: usize,
    pub order_checked: bool,
    /// Largest difference between ascending and descending sweep orders.
    pub max_order_gap: f64,
    /// Replications whose order gap exceeds ten times the tolerance.
    pub order_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSummary {
    pub functions: Vec<RSummary>,
    pub overall: RSummary,
    /// Overall ratio of every replication.
    pub ratios: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub label: String,
    /// Evaluation point, averaged over replications for random designs.
    pub x: f64,
    pub samples: usize,
    pub positive: usize,
    /// One entry per probability; empty when there are no samples.
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub probs: Vec<f64>,
    pub rows: Vec<QuantileRow>,
    /// Same rows restricted to replications with a positive statistic.
    pub conditioned: Option<Vec<QuantileRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub critical_value: f64,
    pub x: Vec<f64>,
    pub rejection: Vec<f64>,
    /// Mean rejection rate over points with x in [0, 2].
    pub null_region_mean: f64,
    /// Smallest rejection rate over points with x > 2.5.
    pub min_beyond_2_5: f64,
}

pub fn run_study(config: &StudyConfig) -> Result<StudyReport, SimError> {
    config.validate()?;
    let result = match config.study.kind() {
        StudyKind::LrQuantile => StudyResult::Quantiles(lr_quantile_study(config)?),
        StudyKind::Power => StudyResult::Power(power_study(config)?),
        StudyKind::Performance => StudyResult::Performance(performance_study(config)?),
    };
    Ok(StudyReport {
        schema: SCHEMA.to_string(),
        study: config.study,
        n: config.n,
        alpha: config.alpha,
        replications: config.replications,
        seed: config.seed,
        result,
    })
}

fn labels(study: StudyId) -> [&'static str; 3] {
    if study == StudyId::LRQuantileRandom {
        ["q25", "q50", "q75"]
    } else {
        ["x=1", "x=2", "x=3"]
    }
}

/// Likelihood-ratio statistics under equal functions at three points.
pub fn lr_quantile_study(config: &StudyConfig) -> Result<QuantileTable, SimError> {
    if config.study.kind() != StudyKind::LrQuantile {
        return Err(SimError::InvalidConfig(format!("{} is not a quantile study", config.study)));
    }
    let threshold = LrThreshold::new(config.alpha)?;
    let reps: Vec<[(f64, f64); 3]> = (0..config.replications)
        .into_par_iter()
        .map(|rep| -> Result<[(f64, f64); 3], SimError> {
            let sim = generate(config, rep)?;
            let points: Vec<Vec<f64>> = if config.study == StudyId::LRQuantileRandom {
                let xs = sorted(&sim.datasets[0].rows().iter().map(|r| r.point.coords()[0]).collect::<Vec<_>>());
                [0.25, 0.5, 0.75]
                    .iter()
                    .map(|&p| vec![xs[((p * xs.len() as f64).ceil() as usize).max(1) - 1]])
                    .collect()
            } else {
                [1.0, 2.0, 3.0]
                    .iter()
                    .map(|&x| {
                        let i = ((x * config.n as f64 / 4.0).round() as usize).clamp(1, config.n);
                        vec![4.0 * i as f64 / config.n as f64]
                    })
                    .collect()
            };
            let design = AlignedDesign::new(sim.datasets, sim.families, false)?;
            let tester = PairTester::new(&design)?;
            let mut out = [(0.0, 0.0); 3];
            for (slot, x) in out.iter_mut().zip(points) {
                let node = design
                    .poset()
                    .index_of(&DesignPoint::new(x.clone()).expect("finite"))
                    .expect("evaluation point is a design point");
                *slot = (x[0], tester.test(0, 1, node, &threshold)?.lr);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let row = |j: usize, label: &str, positive_only: bool| {
        let lrs: Vec<f64> = reps.iter().map(|r| r[j].1).filter(|&v| !positive_only || v > 0.0).collect();
        let x = reps.iter().map(|r| r[j].0).sum::<f64>() / reps.len() as f64;
        let s = sorted(&lrs);
        QuantileRow {
            label: label.to_string(),
            x,
            samples: s.len(),
            positive: s.iter().filter(|&&v| v > 0.0).count(),
            quantiles: if s.is_empty() { Vec::new() } else { LR_PROBS.iter().map(|&p| quantile_sorted(&s, p)).collect() },
        }
    };
    let names = labels(config.study);
    let rows = (0..3).map(|j| row(j, names[j], false)).collect();
    let conditioned = (config.study == StudyId::LRQuantileRandom).then(|| (0..3).map(|j| row(j, names[j], true)).collect());
    Ok(QuantileTable { probs: LR_PROBS.to_vec(), rows, conditioned })
}

/// Rejection rate of the level-`alpha` test at every design point.
pub fn power_study(config: &StudyConfig) -> Result<PowerCurve, SimError> {
    let threshold = LrThreshold::new(config.alpha)?;
    let first = generate(config, 0)?;
    let design0 = AlignedDesign::new(first.datasets, first.families, false)?;
    let order: Vec<usize> = design0.poset().sorted_indices().to_vec();
    let x: Vec<f64> = order.iter().map(|&i| design0.poset().point(i).coords()[0]).collect();
    let counts: Vec<Vec<bool>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<bool>, SimError> {
            let sim = generate(config, rep)?;
            let design = AlignedDesign::new(sim.datasets, sim.families, false)?;
            let tester = PairTester::new(&design)?;
            order
                .iter()
                .map(|&t| Ok(threshold.rejects(tester.test(0, 1, t, &threshold)?.lr)))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let reps = counts.len() as f64;
    let rejection: Vec<f64> = (0..order.len())
        .map(|j| counts.iter().filter(|c| c[j]).count() as f64 / reps)
        .collect();
    let null: Vec<f64> = x.iter().zip(&rejection).filter(|(x, _)| **x <= 2.0).map(|(_, r)| *r).collect();
    let beyond = x
        .iter()
        .zip(&rejection)
        .filter(|(x, _)| **x > 2.5)
        .map(|(_, r)| *r)
        .fold(f64::INFINITY, f64::min);
    Ok(PowerCurve {
        critical_value: threshold.quantile,
        null_region_mean: if null.is_empty() { f64::NAN } else { null.iter().sum::<f64>() / null.len() as f64 },
        min_beyond_2_5: beyond,
        x,
        rejection,
    })
}

/// Outcome of one performance replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub joint_mse: Vec<f64>,
    pub separate_mse: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub descent_ok: bool,
    pub order_gap: Option<f64>,
}

impl ReplicationOutcome {
    pub fn overall(&self) -> (f64, f64) {
        let k = self.joint_mse.len() as f64;
        ((self.joint_mse.iter().sum::<f64>() / k).sqrt(), (self.separate_mse.iter().sum::<f64>() / k).sqrt())
    }
}

fn trace_descends(fit: &JointFit<f64>) -> bool {
    fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0))
}

/// Fits one replication jointly and separately.
pub fn run_replication(config: &StudyConfig, rep: usize, options: &FitOptions<f64>) -> Result<ReplicationOutcome, SimError> {
    let sim = generate(config, rep)?;
    let kk = sim.datasets.len();
    let design = AlignedDesign::new(sim.datasets, sim.families, false)?;
    let weights = {
        let tester = PairTester::new(&design)?;
        build_weight_field(&tester, &WeightOptions { alpha: config.alpha, cap: config.cap_weights })?
    };
    let weighting = if config.study.is_binomial() { BinomialWeighting::Normalized } else { BinomialWeighting::Trials };
    let problem = JointProblem::with_weighting(design, weights, weighting)?;
    let (fit, descent_ok) = match fit_joint(&problem, options) {
        Ok(fit) => {
            let ok = trace_descends(&fit);
            (fit, ok)
        }
        Err(JointError::DescentViolation { sweep, .. }) => {
            return Ok(ReplicationOutcome {
                joint_mse: vec![f64::NAN; kk],
                separate_mse: vec![f64::NAN; kk],
                sweeps: sweep,
                converged: false,
                descent_ok: false,
                order_gap: None,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let order_gap = if config.check_order {
        let rev = fit_joint(&problem, &FitOptions { order: SweepOrder::Descending, ..*options })?;
        let mut gap: f64 = 0.0;
        for (a, b) in fit.values.iter().flatten().zip(rev.values.iter().flatten()) {
            if let (Some(a), Some(b)) = (a, b) {
                gap = gap.max((a - b).abs());
            }
        }
        Some(gap)
    } else {
        None
    };
    let mut joint_mse = Vec::with_capacity(kk);
    let mut separate_mse = Vec::with_capacity(kk);
    for (k, truth) in sim.truth.iter().enumerate() {
        let rows = problem.design().row_nodes(k);
        let joint: Vec<f64> = rows.iter().map(|&i| fit.values[k][i].expect("observed node")).collect();
        let sep: Vec<f64> = rows.iter().map(|&i| problem.separate(k)[i].expect("observed node")).collect();
        joint_mse.push(mse(&joint, truth)?);
        separate_mse.push(mse(&sep, truth)?);
    }
    Ok(ReplicationOutcome { joint_mse, separate_mse, sweeps: fit.sweeps, converged: fit.converged, descent_ok, order_gap })
}

/// Accuracy of joint versus separate fits over replications.
pub fn performance_study(config: &StudyConfig) -> Result<PerformanceSummary, SimError> {
    if config.study.kind() != StudyKind::Performance {
        return Err(SimError::InvalidConfig(format!("{} is not a performance study", config.study)));
    }
    let options = FitOptions::default();
    let outcomes: Vec<ReplicationOutcome> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, rep, &options))
        .collect::<Result<_, _>>()?;
    summarize(&outcomes, config.check_order, options.tol)
}

pub fn summarize(outcomes: &[ReplicationOutcome], order_checked: bool, tol: f64) -> Result<PerformanceSummary, SimError> {
    let usable: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.descent_ok).collect();
    let kk = outcomes.first().map_or(0, |o| o.joint_mse.len());
    let functions = (0..kk)
        .map(|k| {
            let pairs: Vec<(f64, f64)> = usable.iter().map(|o| (o.joint_mse[k].sqrt(), o.separate_mse[k].sqrt())).collect();
            r_and_p(&pairs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let overall_pairs: Vec<(f64, f64)> = usable.iter().map(|o| o.overall()).collect();
    let overall = r_and_p(&overall_pairs)?;
    let gaps: Vec<f64> = outcomes.iter().filter_map(|o| o.order_gap).collect();
    let diagnostics = Diagnostics {
        max_sweeps: outcomes.iter().map(|o| o.sweeps).max().unwrap_or(0),
        nonconverged: outcomes.iter().filter(|o| !o.converged).count(),
        descent_violations: outcomes.len() - usable.len(),
        order_checked,
        max_order_gap: gaps.iter().copied().fold(0.0, f64::max),
        order_violations: gaps.iter().filter(|&&g| g > 10.0 * tol).count(),
    };
    Ok(PerformanceSummary {
        functions,
        overall,
        ratios: overall_pairs.iter().map(|(j, s)| j / s).collect(),
        diagnostics,
    })
}

impl StudyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// Flat table view of the report.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.result {
            StudyResult::Performance(s) => {
                let mut header = vec!["study".to_string(), "n".into(), "alpha".into()];
                let mut row = vec![self.study.to_string(), self.n.to_string(), self.alpha.to_string()];
                let named = s
                    .functions
                    .iter()
                    .enumerate()
                    .map(|(k, r)| (format!("f{}", k + 1), r))
                    .chain(std::iter::once(("overall".to_string(), &s.overall)));
                for (name, r) in named {
                    for (col, v) in [("r_median", r.median), ("r_q1", r.q1), ("r_q3", r.q3), ("p", r.p)] {
                        header.push(format!("{name}_{col}"));
                        row.push(v.to_string());
                    }
                }
                out.push_str(&header.join(","));
                out.push('\n');
                out.push_str(&row.join(","));
                out.push('\n');
            }
            StudyResult::Quantiles(t) => {
                out.push_str("study,n,table,point,x,samples");
                for p in &t.probs {
                    out.push_str(&format!(",q{p}"));
                }
                out.push('\n');
                let tables = std::iter::once(("all", &t.rows)).chain(t.conditioned.iter().map(|c| ("positive", c)));
                for (name, rows) in tables {
                    for r in rows {
                        out.push_str(&format!("{},{},{},{},{},{}", self.study, self.n, name, r.label, r.x, r.samples));
                        for j in 0..t.probs.len() {
                            out.push(',');
                            if let Some(q) = r.quantiles.get(j) {
                                out.push_str(&q.to_string());
                            }
                        }
                        out.push('\n');
                    }
                }
            }
            StudyResult::Power(c) => {
                out.push_str("study,n,alpha,x,rejection\n");
                for (x, r) in c.x.iter().zip(&c.rejection) {
                    out.push_str(&format!("{},{},{},{},{}\n", self.study, self.n, self.alpha, x, r));
                }
            }
        }
        out
    }
}
