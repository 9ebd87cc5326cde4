//! Command implementations, independent of argument parsing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use isofuse::borrowing::{chi2_quantile_1df, extrapolates, LrThreshold, PairTester, WeightOptions};
use isofuse::isotonic::{solve_partial_order, ConstraintGraph, DesignPoint, IsotonicProblem};
use isofuse::joint::{estimate, BinomialWeighting, EstimateOptions, FitOptions, SweepOrder};
use isofuse::likelihood::{AlignedDesign, ModelFamily};
use isofuse::simlab::{run_study, StudyConfig, StudyId, StudyKind, StudyReport, SCHEMA};
use serde::Serialize;

use crate::error::CliError;
use crate::ingest::Input;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Weighting {
    Trials,
    Normalized,
}

#[derive(Debug, Clone)]
pub struct ModelArgs {
    pub family: Family,
    pub sigma2: Option<f64>,
    pub alpha: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub cap_weights: bool,
    pub weighting: Weighting,
}

impl Default for ModelArgs {
    fn default() -> Self {
        Self {
            family: Family::Gaussian,
            sigma2: None,
            alpha: 0.1,
            tol: 1e-8,
            max_sweeps: 10_000,
            cap_weights: false,
            weighting: Weighting::Trials,
        }
    }
}

impl ModelArgs {
    fn validate(&self, input: &Input) -> Result<(), CliError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.tol > 0.0) {
            return Err(CliError::Config("tol must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(CliError::Config("max-sweeps must be at least 1".into()));
        }
        match self.family {
            Family::Gaussian => {
                if input.has_trials {
                    return Err(CliError::Config("a trials column needs --family binomial".into()));
                }
                if let Some(s2) = self.sigma2 {
                    if !(s2 > 0.0 && s2.is_finite()) {
                        return Err(CliError::Config("sigma2 must be positive".into()));
                    }
                }
            }
            Family::Binomial => {
                if self.sigma2.is_some() {
                    return Err(CliError::Config("--sigma2 only applies to --family gaussian".into()));
                }
                if !input.has_trials {
                    return Err(CliError::Config("--family binomial needs a trials column".into()));
                }
            }
        }
        Ok(())
    }

    fn families(&self, k: usize) -> Vec<ModelFamily<f64>> {
        let f = match self.family {
            Family::Gaussian => ModelFamily::Gaussian { sigma2: self.sigma2 },
            Family::Binomial => ModelFamily::Binomial,
        };
        vec![f; k]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedPoint {
    pub x: Vec<f64>,
    pub value: Option<f64>,
    pub observed: bool,
    pub borrowed_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupFit {
    pub group: String,
    pub sigma2: Option<f64>,
    pub points: Vec<FittedPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairRecord {
    pub group_a: String,
    pub group_b: String,
    pub x: Vec<f64>,
    pub lr: f64,
    pub constrained_active: bool,
    pub reject: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Steps {
    pub group: String,
    pub knots: Vec<f64>,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneCheck {
    pub group: String,
    pub rss_increasing: f64,
    pub rss_decreasing: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub family: Family,
    pub alpha: f64,
    pub groups: Vec<String>,
    pub dim: usize,
    pub converged: bool,
    pub sweeps: usize,
    pub objective: f64,
    pub last_change: f64,
    pub objective_trace: Vec<f64>,
    pub fits: Vec<GroupFit>,
    pub tests: Vec<PairRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<Steps>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotone_check: Option<Vec<MonotoneCheck>>,
}

pub fn fit(input: &Input, args: &ModelArgs, check_monotone: bool) -> Result<FitReport, CliError> {
    args.validate(input)?;
    let kk = input.datasets.len();
    let options = EstimateOptions {
        weights: WeightOptions { alpha: args.alpha, cap: args.cap_weights },
        fit: FitOptions { tol: args.tol, max_sweeps: args.max_sweeps, order: SweepOrder::Ascending },
        estimate_variance: true,
        binomial_weighting: match args.weighting {
            Weighting::Trials => BinomialWeighting::Trials,
            Weighting::Normalized => BinomialWeighting::Normalized,
        },
    };
    let est = estimate(input.datasets.clone(), args.families(kk), &options)?;
    let design = est.problem.design();
    let poset = design.poset();
    let threshold = LrThreshold::new(args.alpha)?;

    let fits = (0..kk)
        .map(|k| GroupFit {
            group: input.groups[k].clone(),
            sigma2: match design.family(k) {
                ModelFamily::Gaussian { sigma2 } => *sigma2,
                ModelFamily::Binomial => None,
            },
            points: poset
                .sorted_indices()
                .iter()
                .map(|&i| FittedPoint {
                    x: poset.point(i).coords().to_vec(),
                    value: est.fit.values[k][i],
                    observed: design.nodes(k).is_observed(i),
                    borrowed_only: est.fit.borrowed_only[k][i],
                })
                .collect(),
        })
        .collect::<Vec<_>>();

    let tests = est
        .problem
        .weights()
        .tests()
        .iter()
        .map(|t| PairRecord {
            group_a: input.groups[t.k].clone(),
            group_b: input.groups[t.p].clone(),
            x: poset.point(t.node).coords().to_vec(),
            lr: t.lr,
            constrained_active: t.constrained_active,
            reject: threshold.rejects(t.lr),
            weight: t.weight,
        })
        .collect();

    let steps = (input.dim == 1).then(|| {
        fits.iter()
            .map(|g| {
                let mut knots = Vec::new();
                let mut levels: Vec<f64> = Vec::new();
                for p in &g.points {
                    if let Some(v) = p.value {
                        if levels.last() != Some(&v) {
                            knots.push(p.x[0]);
                            levels.push(v);
                        }
                    }
                }
                Steps { group: g.group.clone(), knots, levels }
            })
            .collect()
    });

    let monotone_check = if check_monotone { Some(monotone_check(design, &input.groups)?) } else { None };

    Ok(FitReport {
        schema: SCHEMA,
        command: "fit",
        family: args.family,
        alpha: args.alpha,
        groups: input.groups.clone(),
        dim: input.dim,
        converged: est.fit.converged,
        sweeps: est.fit.sweeps,
        objective: est.fit.objective_trace.last().copied().unwrap_or(0.0),
        last_change: est.fit.last_change,
        objective_trace: est.fit.objective_trace.clone(),
        fits,
        tests,
        steps,
        monotone_check,
    })
}

/// Weighted residual sums of the separate increasing and decreasing fits.
fn monotone_check(design: &AlignedDesign<f64>, groups: &[String]) -> Result<Vec<MonotoneCheck>, CliError> {
    let graph = design.poset().graph();
    let reversed = ConstraintGraph::new(graph.len(), graph.edges().iter().map(|&(i, j)| (j, i)).collect())
        .map_err(|e| CliError::Model(e.to_string()))?;
    let mut out = Vec::new();
    for (k, group) in groups.iter().enumerate() {
        let d = design.nodes(k);
        let rss = |g: &ConstraintGraph| -> Result<f64, CliError> {
            let p = IsotonicProblem::new(g.clone(), d.target.clone(), d.weight.clone()).map_err(|e| CliError::Model(e.to_string()))?;
            Ok(solve_partial_order(&p).map_err(|e| CliError::Model(e.to_string()))?.objective)
        };
        out.push(MonotoneCheck { group: group.clone(), rss_increasing: rss(graph)?, rss_decreasing: rss(&reversed)? });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub group_a: String,
    pub group_b: String,
    pub x: Vec<f64>,
    pub lr: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub decision: &'static str,
    pub weight: f64,
    pub constrained_active: bool,
    /// Outside the observed range of either group; the weight field
    /// would hold zero here.
    pub extrapolates: bool,
}

pub fn test(input: &Input, args: &ModelArgs, group_a: &str, group_b: &str, x: &[f64]) -> Result<TestReport, CliError> {
    args.validate(input)?;
    let find = |g: &str| input.groups.iter().position(|h| h == g).ok_or_else(|| CliError::UnknownGroup(g.to_string()));
    let (k, p) = (find(group_a)?, find(group_b)?);
    if k == p {
        return Err(CliError::Config("the two groups must differ".into()));
    }
    let design = AlignedDesign::new(input.datasets.clone(), args.families(input.datasets.len()), true)?;
    let point = DesignPoint::new(x.to_vec()).map_err(|e| CliError::Config(e.to_string()))?;
    let t = design
        .poset()
        .index_of(&point)
        .ok_or_else(|| CliError::Config(format!("point {x:?} is not a design point")))?;
    let tester = PairTester::new(&design)?;
    let threshold = LrThreshold::new(args.alpha)?;
    let result = tester.test(k, p, t, &threshold).map_err(|e| match e {
        isofuse::borrowing::BorrowingError::Unobserved { .. } => CliError::PointNotTestable {
            a: group_a.to_string(),
            b: group_b.to_string(),
            reason: "neither group observes it".into(),
        },
        other => other.into(),
    })?;
    Ok(TestReport {
        schema: SCHEMA,
        command: "test",
        group_a: group_a.to_string(),
        group_b: group_b.to_string(),
        x: x.to_vec(),
        lr: result.lr,
        alpha: args.alpha,
        critical_value: chi2_quantile_1df(1.0 - args.alpha)?,
        decision: if threshold.rejects(result.lr) { "reject" } else { "retain" },
        weight: result.weight,
        constrained_active: result.constrained_active,
        extrapolates: extrapolates(&design, k, t) || extrapolates(&design, p, t),
    })
}

#[derive(Debug, Clone, Default)]
pub struct StudyArgs {
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub reps: Option<usize>,
    pub seed: u64,
    pub fast: bool,
    pub cap_weights: bool,
    pub skip_order_check: bool,
}

pub fn study_config(study: &str, args: &StudyArgs) -> Result<StudyConfig, CliError> {
    let id: StudyId = study.parse()?;
    let mut c = StudyConfig::new(id, args.seed, args.fast);
    if let Some(n) = args.n {
        c.n = n;
    }
    if let Some(a) = args.alpha {
        c.alpha = a;
    }
    if let Some(r) = args.reps {
        c.replications = r;
    }
    c.cap_weights = args.cap_weights;
    c.check_order = !args.skip_order_check;
    c.validate()?;
    Ok(c)
}

pub fn simulate(study: &str, args: &StudyArgs) -> Result<StudyReport, CliError> {
    Ok(run_study(&study_config(study, args)?)?)
}

pub fn quantiles(study: &str, args: &StudyArgs) -> Result<StudyReport, CliError> {
    let c = study_config(study, args)?;
    if c.study.kind() != StudyKind::LrQuantile {
        return Err(CliError::Config(format!("{} is not an LR quantile study", c.study.name())));
    }
    Ok(run_study(&c)?)
}

fn coords_header(dim: usize) -> String {
    (1..=dim).map(|j| format!(",x{j}")).collect()
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|v| format!(",{v}")).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl FitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// Fitted values, one row per group and design point.
    pub fn values_csv(&self) -> String {
        let mut out = format!("group{},value,observed,borrowed_only\n", coords_header(self.dim));
        for g in &self.fits {
            for p in &g.points {
                let _ = writeln!(out, "{}{},{},{},{}", g.group, coords(&p.x), opt(p.value), p.observed, p.borrowed_only);
            }
        }
        out
    }

    pub fn weights_csv(&self) -> String {
        let mut out = format!("group_a,group_b{},weight\n", coords_header(self.dim));
        for t in &self.tests {
            let _ = writeln!(out, "{},{}{},{}", t.group_a, t.group_b, coords(&t.x), t.weight);
        }
        out
    }

    pub fn lr_csv(&self) -> String {
        let mut out = format!("group_a,group_b{},lr,constrained_active,reject\n", coords_header(self.dim));
        for t in &self.tests {
            let _ = writeln!(out, "{},{}{},{},{},{}", t.group_a, t.group_b, coords(&t.x), t.lr, t.constrained_active, t.reject);
        }
        out
    }

    pub fn steps_csv(&self) -> Option<String> {
        let steps = self.steps.as_ref()?;
        let mut out = String::from("group,knot,level\n");
        for s in steps {
            for (k, l) in s.knots.iter().zip(&s.levels) {
                let _ = writeln!(out, "{},{k},{l}", s.group);
            }
        }
        Some(out)
    }
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "group_a,group_b{},lr,alpha,critical_value,decision,weight,constrained_active,extrapolates\n{},{}{},{},{},{},{},{},{},{}\n",
            coords_header(self.x.len()),
            self.group_a,
            self.group_b,
            coords(&self.x),
            self.lr,
            self.alpha,
            self.critical_value,
            self.decision,
            self.weight,
            self.constrained_active,
            self.extrapolates
        )
    }
}

/// `out.json` becomes `out.<suffix>`.
pub fn side_path(main: &Path, suffix: &str) -> PathBuf {
    main.with_extension(suffix)
}
