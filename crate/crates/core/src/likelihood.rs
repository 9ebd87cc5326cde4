//! Response families: isotonic weights, log-likelihoods and nuisance
//! parameters.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::isotonic::{build_poset, solve_partial_order, DesignPoint, DesignPoset, IsotonicError, IsotonicProblem};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LikelihoodError {
    #[error("dataset {0} has no rows")]
    EmptyDataset(usize),
    #[error("row {row}: non-finite response")]
    NonFiniteResponse { row: usize },
    #[error("row {row}: binomial response outside [0, trials]")]
    ResponseOutOfRange { row: usize },
    #[error("row {row}: binomial trials must be positive")]
    ZeroTrials { row: usize },
    #[error("gaussian variance is unknown and was not estimated")]
    MissingNuisance,
    #[error("gaussian variance must be positive")]
    NonPositiveVariance,
    #[error("fitted vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("fitted probability {p} outside [0, 1] at row {row}")]
    ProbabilityOutOfRange { row: usize, p: f64 },
    #[error("row {row}: fitted probability contradicts observed counts")]
    DegenerateLikelihood { row: usize },
    #[error("row {row}: design point is not a node of the design")]
    PointNotInDesign { row: usize },
    #[error("need at least two observations, found {0}")]
    InsufficientData(usize),
    #[error("null fit has smaller residual than the alternative ({rss0} < {rss1})")]
    NullBeatsAlternative { rss0: f64, rss1: f64 },
    #[error(transparent)]
    Isotonic(#[from] IsotonicError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Gaussian,
    Binomial,
}

/// Response distribution of one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFamily<T> {
    /// Normal errors with variance `sigma2`; `None` until estimated.
    Gaussian { sigma2: Option<T> },
    /// Binomial counts; trial counts live on the observations.
    Binomial,
}

impl<T: Real> ModelFamily<T> {
    pub fn gaussian(sigma2: T) -> Self {
        ModelFamily::Gaussian { sigma2: Some(sigma2) }
    }

    pub fn kind(&self) -> FamilyKind {
        match self {
            ModelFamily::Gaussian { .. } => FamilyKind::Gaussian,
            ModelFamily::Binomial => FamilyKind::Binomial,
        }
    }

    fn sigma2(&self) -> Result<T, LikelihoodError> {
        match self {
            ModelFamily::Gaussian { sigma2: Some(s) } if *s > T::zero() => Ok(*s),
            ModelFamily::Gaussian { sigma2: Some(_) } => Err(LikelihoodError::NonPositiveVariance),
            ModelFamily::Gaussian { sigma2: None } => Err(LikelihoodError::MissingNuisance),
            ModelFamily::Binomial => unreachable!("binomial family has no variance"),
        }
    }
}

/// A single observation. `trials` is only used by the binomial family,
/// where `response` is a success count (a 0/1 row has `trials = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub point: DesignPoint<T>,
    pub response: T,
    pub trials: Option<u64>,
}

impl<T: Real> Observation<T> {
    pub fn new(point: DesignPoint<T>, response: T) -> Self {
        Self { point, response, trials: None }
    }

    pub fn binomial(point: DesignPoint<T>, successes: T, trials: u64) -> Self {
        Self { point, response: successes, trials: Some(trials) }
    }

    fn trials_or_one(&self) -> T {
        T::from_u64(self.trials.unwrap_or(1)).expect("trial count is representable")
    }
}

/// Observations of one regression function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub function_id: usize,
    rows: Vec<Observation<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(function_id: usize, rows: Vec<Observation<T>>) -> Result<Self, LikelihoodError> {
        if rows.is_empty() {
            return Err(LikelihoodError::EmptyDataset(function_id));
        }
        if let Some(row) = rows.iter().position(|r| !r.response.is_finite()) {
            return Err(LikelihoodError::NonFiniteResponse { row });
        }
        Ok(Self { function_id, rows })
    }

    pub fn rows(&self) -> &[Observation<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks the rows against `family` (binomial counts within range).
    pub fn validate_for(&self, family: &ModelFamily<T>) -> Result<(), LikelihoodError> {
        if family.kind() == FamilyKind::Binomial {
            for (row, r) in self.rows.iter().enumerate() {
                if r.trials == Some(0) {
                    return Err(LikelihoodError::ZeroTrials { row });
                }
                if r.response < T::zero() || r.response > r.trials_or_one() {
                    return Err(LikelihoodError::ResponseOutOfRange { row });
                }
            }
        }
        Ok(())
    }
}

/// Per-row weights of the weighted least-squares isotonic fit whose
/// solution is the constrained maximum likelihood estimate.
pub fn iso_weights<T: Real>(data: &Dataset<T>, family: &ModelFamily<T>) -> Result<Vec<T>, LikelihoodError> {
    match family {
        ModelFamily::Gaussian { .. } => {
            let w = T::one() / family.sigma2()?;
            Ok(vec![w; data.len()])
        }
        ModelFamily::Binomial => {
            data.validate_for(family)?;
            Ok(data.rows.iter().map(Observation::trials_or_one).collect())
        }
    }
}

/// Per-row least-squares targets: responses, or observed proportions.
pub fn iso_targets<T: Real>(data: &Dataset<T>, family: &ModelFamily<T>) -> Vec<T> {
    match family {
        ModelFamily::Gaussian { .. } => data.rows.iter().map(|r| r.response).collect(),
        ModelFamily::Binomial => data.rows.iter().map(|r| r.response / r.trials_or_one()).collect(),
    }
}

/// Log-likelihood of `data` given one fitted mean (or probability) per row.
pub fn log_likelihood<T: Real>(data: &Dataset<T>, fitted: &[T], family: &ModelFamily<T>) -> Result<T, LikelihoodError> {
    if fitted.len() != data.len() {
        return Err(LikelihoodError::LengthMismatch { expected: data.len(), found: fitted.len() });
    }
    match family {
        ModelFamily::Gaussian { .. } => {
            let s2 = family.sigma2()?;
            let two = lit::<T>(2.0);
            let norm = -(lit::<T>(std::f64::consts::TAU) * s2).ln() / two;
            let mut total = T::zero();
            for (r, &f) in data.rows.iter().zip(fitted) {
                let e = r.response - f;
                total = total + norm - e * e / (two * s2);
            }
            Ok(total)
        }
        ModelFamily::Binomial => {
            data.validate_for(family)?;
            let mut total = T::zero();
            for (row, (r, &p)) in data.rows.iter().zip(fitted).enumerate() {
                let m = r.trials_or_one();
                let y = r.response;
                let (mf, yf) = (m.to_f64().unwrap_or(f64::NAN), y.to_f64().unwrap_or(f64::NAN));
                let log_choose = if yf.fract() == 0.0 {
                    lit::<T>(ln_binomial(mf as u64, yf as u64))
                } else {
                    lit::<T>(ln_gamma(mf + 1.0) - ln_gamma(yf + 1.0) - ln_gamma(mf - yf + 1.0))
                };
                total = total + log_choose + binomial_kernel(y, m, p, row)?;
            }
            Ok(total)
        }
    }
}

/// `y log p + (m - y) log(1 - p)` with `0 log 0 = 0`.
pub(crate) fn binomial_kernel<T: Real>(y: T, m: T, p: T, row: usize) -> Result<T, LikelihoodError> {
    if !(T::zero()..=T::one()).contains(&p) {
        return Err(LikelihoodError::ProbabilityOutOfRange { row, p: p.to_f64().unwrap_or(f64::NAN) });
    }
    let fail = m - y;
    let mut total = T::zero();
    if y > T::zero() {
        if p == T::zero() {
            return Err(LikelihoodError::DegenerateLikelihood { row });
        }
        total = total + y * p.ln();
    }
    if fail > T::zero() {
        if p == T::one() {
            return Err(LikelihoodError::DegenerateLikelihood { row });
        }
        total = total + fail * (T::one() - p).ln();
    }
    Ok(total)
}

/// `(rss0 - rss1) / sigma2`: the Gaussian likelihood-ratio contribution of
/// one function.
pub fn lr_gaussian_shortcut<T: Real>(rss0: T, rss1: T, sigma2: T) -> Result<T, LikelihoodError> {
    let tol = lit::<T>(1e-10) * T::one().max(rss0.abs());
    if rss0 < rss1 - tol {
        return Err(LikelihoodError::NullBeatsAlternative {
            rss0: rss0.to_f64().unwrap_or(f64::NAN),
            rss1: rss1.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(((rss0 - rss1) / sigma2).max(T::zero()))
}

/// One function's observations collapsed onto the nodes of a design poset.
/// Unobserved nodes have weight zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeData<T> {
    pub weight: Vec<T>,
    pub target: Vec<T>,
    /// Raw rows per node.
    pub count: Vec<usize>,
}

impl<T: Real> NodeData<T> {
    pub fn is_observed(&self, i: usize) -> bool {
        self.count[i] > 0
    }

    pub fn observed(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count.len()).filter(|&i| self.count[i] > 0)
    }
}

/// Aggregates rows at the same design point: weights add up, the target is
/// the weighted mean. Every row's point must belong to `poset`.
pub fn aggregate<T: Real>(data: &Dataset<T>, family: &ModelFamily<T>, poset: &DesignPoset<T>) -> Result<NodeData<T>, LikelihoodError> {
    let w = iso_weights(data, family)?;
    let y = iso_targets(data, family);
    let n = poset.len();
    let mut weight = vec![T::zero(); n];
    let mut wsum = vec![T::zero(); n];
    let mut count = vec![0usize; n];
    for (row, ((r, wi), yi)) in data.rows.iter().zip(w).zip(y).enumerate() {
        let i = poset.index_of(&r.point).ok_or(LikelihoodError::PointNotInDesign { row })?;
        weight[i] = weight[i] + wi;
        wsum[i] = wsum[i] + wi * yi;
        count[i] += 1;
    }
    let target = weight
        .iter()
        .zip(&wsum)
        .map(|(&w, &s)| if w > T::zero() { s / w } else { T::zero() })
        .collect();
    Ok(NodeData { weight, target, count })
}

/// Separate isotonic fit of `data` on its own distinct points.
pub(crate) fn own_fit<T: Real>(data: &Dataset<T>, family: &ModelFamily<T>) -> Result<(DesignPoset<T>, NodeData<T>, Vec<T>, usize), LikelihoodError> {
    let mut points: Vec<DesignPoint<T>> = data.rows.iter().map(|r| r.point.clone()).collect();
    points.sort_by(|a, b| a.lex_cmp(b));
    points.dedup();
    let poset = build_poset(points)?;
    let nodes = aggregate(data, family, &poset)?;
    let problem = IsotonicProblem::new(poset.graph().clone(), nodes.target.clone(), nodes.weight.clone())?;
    let sol = solve_partial_order(&problem)?;
    let levels = sol.distinct_levels();
    Ok((poset, nodes, sol.dense(), levels))
}

/// Residual variance around the separate isotonic fit, with the number of
/// distinct fitted levels as degrees of freedom used.
pub fn estimate_sigma2<T: Real>(data: &Dataset<T>) -> Result<T, LikelihoodError> {
    let n = data.len();
    if n < 2 {
        return Err(LikelihoodError::InsufficientData(n));
    }
    let unit = ModelFamily::gaussian(T::one());
    let (poset, _, fitted, levels) = own_fit(data, &unit)?;
    let mut rss = T::zero();
    for r in &data.rows {
        let i = poset.index_of(&r.point).expect("row point is in its own poset");
        let e = r.response - fitted[i];
        rss = rss + e * e;
    }
    let divisor = if n > levels { n - levels } else { (n - 1).max(1) };
    let est = rss / T::from_usize(divisor).expect("usize fits");
    Ok(est.max(lit(1e-8)))
}

/// Several datasets aligned on the union of their design points.
#[derive(Debug, Clone)]
pub struct AlignedDesign<T> {
    poset: DesignPoset<T>,
    families: Vec<ModelFamily<T>>,
    nodes: Vec<NodeData<T>>,
    datasets: Vec<Dataset<T>>,
    row_nodes: Vec<Vec<usize>>,
}

impl<T: Real> AlignedDesign<T> {
    /// Aligns `datasets` (function `k` is `datasets[k]`). A Gaussian family
    /// with unknown variance is resolved by [`estimate_sigma2`] when
    /// `estimate_variance` is set, and rejected otherwise.
    pub fn new(datasets: Vec<Dataset<T>>, families: Vec<ModelFamily<T>>, estimate_variance: bool) -> Result<Self, LikelihoodError> {
        if families.len() != datasets.len() {
            return Err(LikelihoodError::LengthMismatch { expected: datasets.len(), found: families.len() });
        }
        let mut resolved = Vec::with_capacity(families.len());
        for (d, f) in datasets.iter().zip(families) {
            d.validate_for(&f)?;
            resolved.push(match f {
                ModelFamily::Gaussian { sigma2: None } if estimate_variance => ModelFamily::gaussian(estimate_sigma2(d)?),
                ModelFamily::Gaussian { sigma2: None } => return Err(LikelihoodError::MissingNuisance),
                other => other,
            });
        }
        let mut points: Vec<DesignPoint<T>> = datasets.iter().flat_map(|d| d.rows.iter().map(|r| r.point.clone())).collect();
        points.sort_by(|a, b| a.lex_cmp(b));
        points.dedup();
        let poset = build_poset(points)?;
        let mut nodes = Vec::with_capacity(datasets.len());
        let mut row_nodes = Vec::with_capacity(datasets.len());
        for (d, f) in datasets.iter().zip(&resolved) {
            nodes.push(aggregate(d, f, &poset)?);
            row_nodes.push(d.rows.iter().map(|r| poset.index_of(&r.point).expect("union contains every row")).collect());
        }
        Ok(Self { poset, families: resolved, nodes, datasets, row_nodes })
    }

    pub fn poset(&self) -> &DesignPoset<T> {
        &self.poset
    }

    pub fn num_functions(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.poset.len()
    }

    pub fn family(&self, k: usize) -> &ModelFamily<T> {
        &self.families[k]
    }

    pub fn nodes(&self, k: usize) -> &NodeData<T> {
        &self.nodes[k]
    }

    pub fn dataset(&self, k: usize) -> &Dataset<T> {
        &self.datasets[k]
    }

    /// Union node of every row of dataset `k`.
    pub fn row_nodes(&self, k: usize) -> &[usize] {
        &self.row_nodes[k]
    }

    /// Separate isotonic fit of function `k` on the union design; `None`
    /// where `k` has no observation.
    pub fn separate_fit(&self, k: usize) -> Result<Vec<Option<T>>, LikelihoodError> {
        let d = &self.nodes[k];
        let problem = IsotonicProblem::new(self.poset.graph().clone(), d.target.clone(), d.weight.clone())?;
        Ok(solve_partial_order(&problem)?.values)
    }
}
