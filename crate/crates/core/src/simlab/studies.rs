//! Study catalogue: true functions, designs and data generation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::isotonic::DesignPoint;
use crate::likelihood::{Dataset, ModelFamily, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudyId {
    LRQuantileFixed,
    LRQuantileRandom,
    PowerCurve,
    Sensitivity1,
    Sensitivity2,
    Sensitivity3,
    FiveFunctionFixed,
    TwoDimStudy1,
    TwoDimStudy2,
    TwoDimStudy1Modified,
    BinomialK2,
    BinomialK4Balanced,
    BinomialK4Unbalanced,
    FiveFunctionRandom1,
    FiveFunctionRandom2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    LrQuantile,
    Power,
    Performance,
}

impl StudyId {
    pub const ALL: [StudyId; 15] = [
        StudyId::LRQuantileFixed,
        StudyId::LRQuantileRandom,
        StudyId::PowerCurve,
        StudyId::Sensitivity1,
        StudyId::Sensitivity2,
        StudyId::Sensitivity3,
        StudyId::FiveFunctionFixed,
        StudyId::TwoDimStudy1,
        StudyId::TwoDimStudy2,
        StudyId::TwoDimStudy1Modified,
        StudyId::BinomialK2,
        StudyId::BinomialK4Balanced,
        StudyId::BinomialK4Unbalanced,
        StudyId::FiveFunctionRandom1,
        StudyId::FiveFunctionRandom2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyId::LRQuantileFixed => "LRQuantileFixed",
            StudyId::LRQuantileRandom => "LRQuantileRandom",
            StudyId::PowerCurve => "PowerCurve",
            StudyId::Sensitivity1 => "Sensitivity1",
            StudyId::Sensitivity2 => "Sensitivity2",
            StudyId::Sensitivity3 => "Sensitivity3",
            StudyId::FiveFunctionFixed => "FiveFunctionFixed",
            StudyId::TwoDimStudy1 => "TwoDimStudy1",
            StudyId::TwoDimStudy2 => "TwoDimStudy2",
            StudyId::TwoDimStudy1Modified => "TwoDimStudy1Modified",
            StudyId::BinomialK2 => "BinomialK2",
            StudyId::BinomialK4Balanced => "BinomialK4Balanced",
            StudyId::BinomialK4Unbalanced => "BinomialK4Unbalanced",
            StudyId::FiveFunctionRandom1 => "FiveFunctionRandom1",
            StudyId::FiveFunctionRandom2 => "FiveFunctionRandom2",
        }
    }

    pub fn kind(self) -> StudyKind {
        match self {
            StudyId::LRQuantileFixed | StudyId::LRQuantileRandom => StudyKind::LrQuantile,
            StudyId::PowerCurve => StudyKind::Power,
            _ => StudyKind::Performance,
        }
    }

    pub fn num_functions(self) -> usize {
        match self {
            StudyId::FiveFunctionFixed | StudyId::FiveFunctionRandom1 | StudyId::FiveFunctionRandom2 => 5,
            StudyId::BinomialK4Balanced | StudyId::BinomialK4Unbalanced => 4,
            _ => 2,
        }
    }

    /// Covariate dimension.
    pub fn dim(self) -> usize {
        match self {
            StudyId::TwoDimStudy1 | StudyId::TwoDimStudy2 | StudyId::TwoDimStudy1Modified => 2,
            _ => 1,
        }
    }

    pub fn is_binomial(self) -> bool {
        matches!(self, StudyId::BinomialK2 | StudyId::BinomialK4Balanced | StudyId::BinomialK4Unbalanced)
    }

    pub fn is_random_design(self) -> bool {
        matches!(self, StudyId::LRQuantileRandom | StudyId::FiveFunctionRandom1 | StudyId::FiveFunctionRandom2)
    }

    /// Default size: points per function, grid side for 2-D studies, and
    /// the size of the second dataset for the unequal random design.
    pub fn default_n(self) -> usize {
        match self {
            StudyId::LRQuantileFixed | StudyId::LRQuantileRandom => 50,
            StudyId::PowerCurve => 200,
            StudyId::TwoDimStudy1 | StudyId::TwoDimStudy2 | StudyId::TwoDimStudy1Modified => 10,
            _ => 100,
        }
    }

    pub fn default_alpha(self) -> f64 {
        match self {
            StudyId::PowerCurve | StudyId::LRQuantileFixed | StudyId::LRQuantileRandom => 0.05,
            _ => 0.1,
        }
    }

    pub fn default_replications(self, fast: bool) -> usize {
        match (self.kind(), fast) {
            (StudyKind::LrQuantile, false) => 20_000,
            (StudyKind::LrQuantile, true) => 2_000,
            (StudyKind::Power, false) => 1_000,
            (StudyKind::Power, true) => 200,
            (StudyKind::Performance, false) => 200,
            (StudyKind::Performance, true) => 50,
        }
    }

    fn tag(self) -> u64 {
        StudyId::ALL.iter().position(|&s| s == self).expect("listed") as u64 + 1
    }

    /// Binomial trials of function `k`.
    pub fn trials(self, k: usize) -> u64 {
        match self {
            StudyId::BinomialK2 => 5,
            StudyId::BinomialK4Unbalanced if k == 1 => 5,
            _ => 20,
        }
    }

    /// True mean (or success probability) of function `k` at `x`.
    pub fn truth(self, k: usize, x: &[f64]) -> f64 {
        let expit = |t: f64| 1.0 / (1.0 + (-t).exp());
        let sq = |t: f64| t * t;
        let x0 = x[0];
        match self {
            StudyId::LRQuantileFixed | StudyId::LRQuantileRandom => x0 * x0,
            StudyId::PowerCurve | StudyId::Sensitivity1 => match k {
                0 => x0 * x0,
                _ if x0 <= 2.0 => x0 * x0,
                _ => x0 + 2.0,
            },
            StudyId::Sensitivity2 => match k {
                0 => 1.95,
                _ => 1.0 + expit(x0),
            },
            StudyId::Sensitivity3 => match k {
                0 => x0 * x0,
                _ => x0.powi(4) - 1.0,
            },
            StudyId::FiveFunctionFixed | StudyId::FiveFunctionRandom1 | StudyId::FiveFunctionRandom2 => match k {
                0 => x0,
                1 => 0.9 * x0 + 0.2 + if x0 > 2.0 { 6.0 } else { 0.0 },
                2 => 0.8 * x0 + 4.0 * expit(2.0 * x0 - 5.0),
                3 => 0.3 * x0 * x0 + x0 - 0.2,
                _ => 4.0 * (x0 + 1.0).sqrt() + 1.0,
            },
            StudyId::TwoDimStudy1 | StudyId::TwoDimStudy1Modified => {
                let top = x[0].max(x[1]);
                match (self, k) {
                    (_, 0) => 0.5 * x[0] + 0.7 * x[1] + if top > 2.0 { 1.5 } else { 0.0 },
                    (StudyId::TwoDimStudy1, _) => 0.6 * x[0] + 0.5 * x[1] + if top > 2.0 { 1.4 } else { 0.0 },
                    _ => 0.6 * x[0] + 0.5 * x[1] + if top > 1.5 { 1.4 } else { 0.0 },
                }
            }
            StudyId::TwoDimStudy2 => match k {
                0 => {
                    let r = sq(x[0] / 2.0) + sq(x[1] / 2.0);
                    0.4 + if r > 1.0 { 3.0 * (r - 1.0).sqrt() } else { 0.0 }
                }
                _ => {
                    let r = sq(2.0 * x[0] / 5.0) + sq(2.0 * x[1] / 5.0);
                    0.3 + if r > 1.0 { 0.3 + 4.0 * (r - 1.0).sqrt() } else { 0.0 }
                }
            },
            StudyId::BinomialK2 => match k {
                0 => 0.9 * (x0 + 0.3).sin() + 0.01,
                _ => (x0 + 0.2).sin(),
            },
            StudyId::BinomialK4Balanced | StudyId::BinomialK4Unbalanced => match k {
                0 => 0.05 + 0.73 * expit(10.0 * x0 - 5.0),
                1 => 0.2 + 0.55 * expit(13.0 * x0 - 4.0),
                2 => 0.2 + 0.7 * expit(11.0 * x0 - 4.0),
                _ => 0.05 + 0.8 * expit(4.0 * x0 - 4.0),
            },
        }
    }
}

impl fmt::Display for StudyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyId {
    type Err = SimError;

    /// Case-insensitive; `-` and `_` are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        StudyId::ALL
            .iter()
            .copied()
            .find(|id| id.name().to_ascii_lowercase() == key)
            .ok_or_else(|| SimError::UnknownStudy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: StudyId,
    pub n: usize,
    pub alpha: f64,
    pub replications: usize,
    pub seed: u64,
    /// Refit every replication with reversed sweep order.
    pub check_order: bool,
    /// Cap borrowing weights at `1 / (K - 1)`.
    #[serde(default)]
    pub cap_weights: bool,
}

impl StudyConfig {
    /// Defaults for `study` (reduced replication counts when `fast`).
    pub fn new(study: StudyId, seed: u64, fast: bool) -> Self {
        Self {
            study,
            n: study.default_n(),
            alpha: study.default_alpha(),
            replications: study.default_replications(fast),
            seed,
            check_order: true,
            cap_weights: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.replications == 0 {
            return Err(SimError::InvalidConfig("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimError::InvalidConfig(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        let min_n = if self.study == StudyId::FiveFunctionRandom2 { 4 } else { 2 };
        if self.n < min_n {
            return Err(SimError::InvalidConfig(format!("n must be at least {min_n}")));
        }
        Ok(())
    }
}

/// One replication's data with the true values at every row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub datasets: Vec<Dataset<f64>>,
    pub families: Vec<ModelFamily<f64>>,
    pub truth: Vec<Vec<f64>>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one (seed, study, replication, function).
pub fn substream(seed: u64, study: StudyId, replication: usize, function: usize) -> ChaCha8Rng {
    let mut h = mix(seed);
    for part in [study.tag(), replication as u64, function as u64] {
        h = mix(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Design points of function `k` (random designs draw from `rng`).
fn design(study: StudyId, n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if study.is_random_design() {
        let size = if study == StudyId::FiveFunctionRandom2 && !matches!(k, 1 | 2) { n / 2 } else { n };
        return (0..size).map(|_| vec![rng.random_range(0.0..4.0)]).collect();
    }
    if study.dim() == 2 {
        let step = 4.0 / n as f64;
        let mut pts = Vec::with_capacity(n * n);
        for i in 1..=n {
            for j in 1..=n {
                pts.push(vec![step * i as f64, step * j as f64]);
            }
        }
        return pts;
    }
    let span = if study.is_binomial() { 1.0 } else { 4.0 };
    (1..=n).map(|i| vec![span * i as f64 / n as f64]).collect()
}

/// Generates replication `replication` of `config`.
pub fn generate(config: &StudyConfig, replication: usize) -> Result<SimData, SimError> {
    config.validate()?;
    let study = config.study;
    let kk = study.num_functions();
    let mut datasets = Vec::with_capacity(kk);
    let mut families = Vec::with_capacity(kk);
    let mut truth = Vec::with_capacity(kk);
    for k in 0..kk {
        let mut rng = substream(config.seed, study, replication, k);
        let xs = design(study, config.n, k, &mut rng);
        let mut rows = Vec::with_capacity(xs.len());
        let mut t = Vec::with_capacity(xs.len());
        for x in xs {
            let mu = study.truth(k, &x);
            let point = DesignPoint::new(x).expect("generated points are finite");
            if study.is_binomial() {
                let m = study.trials(k);
                let draw = Binomial::new(m, mu).expect("probability in [0, 1]").sample(&mut rng);
                rows.push(Observation::binomial(point, draw as f64, m));
            } else {
                let e: f64 = StandardNormal.sample(&mut rng);
                rows.push(Observation::new(point, mu + e));
            }
            t.push(mu);
        }
        datasets.push(Dataset::new(k, rows)?);
        families.push(if study.is_binomial() { ModelFamily::Binomial } else { ModelFamily::gaussian(1.0) });
        truth.push(t);
    }
    Ok(SimData { datasets, families, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensitivity1_small_design() {
        let cfg = StudyConfig { n: 4, ..StudyConfig::new(StudyId::Sensitivity1, 1, true) };
        let sim = generate(&cfg, 0).unwrap();
        let xs: Vec<f64> = sim.datasets[0].rows().iter().map(|r| r.point.coords()[0]).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(sim.truth[0], vec![1.0, 4.0, 9.0, 16.0]);
        assert_eq!(sim.truth[1], vec![1.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn binomial_trials() {
        assert_eq!(StudyId::BinomialK4Balanced.trials(1), 20);
        assert_eq!(StudyId::BinomialK4Unbalanced.trials(1), 5);
        assert_eq!(StudyId::BinomialK4Unbalanced.trials(0), 20);
        let sim = generate(&StudyConfig::new(StudyId::BinomialK4Balanced, 3, true), 2).unwrap();
        for d in &sim.datasets {
            assert!(d.rows().iter().all(|r| r.trials == Some(20) && r.response <= 20.0));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = StudyConfig::new(StudyId::FiveFunctionRandom2, 11, true);
        assert_eq!(generate(&cfg, 5).unwrap(), generate(&cfg, 5).unwrap());
        assert_ne!(generate(&cfg, 5).unwrap(), generate(&cfg, 6).unwrap());
        let sim = generate(&cfg, 0).unwrap();
        let sizes: Vec<usize> = sim.datasets.iter().map(|d| d.len()).collect();
        assert_eq!(sizes, vec![50, 100, 100, 50, 50]);
    }

    #[test]
    fn grid() {
        let cfg = StudyConfig { n: 3, ..StudyConfig::new(StudyId::TwoDimStudy2, 0, true) };
        let sim = generate(&cfg, 0).unwrap();
        assert_eq!(sim.datasets[0].len(), 9);
        assert_eq!(sim.datasets[0].rows()[8].point.coords(), &[4.0, 4.0]);
    }

    #[test]
    fn parse_names() {
        assert_eq!("Sensitivity1".parse::<StudyId>().unwrap(), StudyId::Sensitivity1);
        assert_eq!("lr-quantile-fixed".parse::<StudyId>().unwrap(), StudyId::LRQuantileFixed);
        assert!(matches!("Nope".parse::<StudyId>(), Err(SimError::UnknownStudy(_))));
        for id in StudyId::ALL {
            assert_eq!(id.name().parse::<StudyId>().unwrap(), id);
        }
    }
}
