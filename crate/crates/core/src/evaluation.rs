//! Agreement between a distance model and ground-truth MAD: Spearman ρ,
//! Pearson r and the ratio coefficient of variation.

use std::fmt;

use rand::{Rng, RngCore};

use crate::diffnet::{DiffError, Mlp, Tensor};
use crate::env::{Environment, GroundTruthMad};
use crate::quasimetric::{QuasimetricError, QuasimetricSpec};

/// Pair count up to which [`evaluate`] enumerates instead of sampling.
pub const ENUMERATION_LIMIT: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {0} true vs {1} predicted values")]
    Length(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("ratio CV undefined: mean ratio is zero")]
    ZeroMeanRatio,
    #[error("ratio CV needs positive true distances, got {0}")]
    NonPositiveTruth(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Quasimetric(#[from] QuasimetricError),
}

fn check_pair(t: &[f64], p: &[f64]) -> Result<(), EvalError> {
    if t.len() != p.len() {
        return Err(EvalError::Length(t.len(), p.len()));
    }
    if t.len() < 2 {
        return Err(EvalError::TooFewPairs(t.len()));
    }
    if !t.iter().all(|v| v.is_finite()) {
        return Err(EvalError::NonFinite("true distances"));
    }
    if !p.iter().all(|v| v.is_finite()) {
        return Err(EvalError::NonFinite("predicted distances"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Product-moment correlation.
pub fn pearson(true_d: &[f64], pred_d: &[f64]) -> Result<f64, EvalError> {
    check_pair(true_d, pred_d)?;
    let (mt, mp) = (mean(true_d), mean(pred_d));
    let (mut stp, mut stt, mut spp) = (0.0, 0.0, 0.0);
    for (t, p) in true_d.iter().zip(pred_d) {
        let (a, b) = (t - mt, p - mp);
        stp += a * b;
        stt += a * a;
        spp += b * b;
    }
    if stt == 0.0 {
        return Err(EvalError::ZeroVariance("true distances"));
    }
    if spp == 0.0 {
        return Err(EvalError::ZeroVariance("predicted distances"));
    }
    Ok((stp / (stt.sqrt() * spp.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of average ranks.
pub fn spearman(true_d: &[f64], pred_d: &[f64]) -> Result<f64, EvalError> {
    check_pair(true_d, pred_d)?;
    pearson(&average_ranks(true_d), &average_ranks(pred_d))
}

/// `σ_r / μ_r` over `r_i = pred_i / true_i`, population standard deviation.
pub fn ratio_cv(true_d: &[f64], pred_d: &[f64]) -> Result<f64, EvalError> {
    check_pair(true_d, pred_d)?;
    if let Some(&t) = true_d.iter().find(|&&t| t <= 0.0) {
        return Err(EvalError::NonPositiveTruth(t));
    }
    let ratios: Vec<f64> = pred_d.iter().zip(true_d).map(|(p, t)| p / t).collect();
    let mu = mean(&ratios);
    if mu == 0.0 {
        return Err(EvalError::ZeroMeanRatio);
    }
    let var = ratios.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / ratios.len() as f64;
    Ok(var.sqrt() / mu.abs())
}

/// Any distance over environment states: a learned embedding, the oracle,
/// or a baseline.
pub trait StateDistance<E: Environment> {
    /// `d(states[a], states[b])` for every `(a, b)` in `pairs`. Each state is
    /// observed once, so noisy observations are shared by all its pairs.
    fn pairwise(
        &self,
        env: &E,
        states: &[E::State],
        pairs: &[(usize, usize)],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, EvalError>;
}

/// `d_θ(s, s') = d(φ_θ(o), φ_θ(o'))`.
#[derive(Clone, Copy, Debug)]
pub struct LearnedDistance<'a> {
    pub net: &'a Mlp,
    pub quasimetric: &'a QuasimetricSpec,
}

impl<'a> LearnedDistance<'a> {
    pub fn new(net: &'a Mlp, quasimetric: &'a QuasimetricSpec) -> Self {
        Self { net, quasimetric }
    }

    /// Embeddings for a batch of observation rows.
    pub fn embed(&self, observations: &[Vec<f64>]) -> Result<Tensor, EvalError> {
        Ok(self.net.forward(&Tensor::from_rows(observations)?)?)
    }
}

impl<E: Environment> StateDistance<E> for LearnedDistance<'_> {
    fn pairwise(
        &self,
        env: &E,
        states: &[E::State],
        pairs: &[(usize, usize)],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, EvalError> {
        let obs: Vec<Vec<f64>> = states.iter().map(|s| env.observe(s, rng)).collect();
        let emb = self.embed(&obs)?;
        pairs
            .iter()
            .map(|&(a, b)| Ok(self.quasimetric.distance(emb.row(a), emb.row(b))?))
            .collect()
    }
}

/// Ground-truth lookup by latent id; unreachable pairs are `+∞`.
#[derive(Clone, Copy, Debug)]
pub struct OracleDistance<'a> {
    pub truth: &'a GroundTruthMad,
}

impl<E: Environment> StateDistance<E> for OracleDistance<'_> {
    fn pairwise(
        &self,
        env: &E,
        states: &[E::State],
        pairs: &[(usize, usize)],
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, EvalError> {
        let ids: Vec<usize> = states.iter().map(|s| env.latent_id(s)).collect();
        Ok(pairs
            .iter()
            .map(|&(a, b)| {
                self.truth
                    .get(ids[a], ids[b])
                    .map_or(f64::INFINITY, f64::from)
            })
            .collect())
    }
}

/// `d ≡ c`; a zero constant makes every candidate look equally good.
#[derive(Clone, Copy, Debug)]
pub struct ConstantDistance(pub f64);

impl<E: Environment> StateDistance<E> for ConstantDistance {
    fn pairwise(
        &self,
        _env: &E,
        _states: &[E::State],
        pairs: &[(usize, usize)],
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, EvalError> {
        Ok(vec![self.0; pairs.len()])
    }
}

/// Metrics for one evaluation. A metric that is mathematically undefined
/// for the given predictions (zero variance, zero mean ratio) is `NaN`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub spearman: f64,
    pub pearson: f64,
    pub ratio_cv: f64,
    /// Pairs entering the correlations.
    pub n_pairs: usize,
    /// Pairs entering the ratio CV (true distance > 0).
    pub n_ratio_pairs: usize,
    /// Pairs dropped for infinite ground truth.
    pub excluded_infinite: usize,
    /// Whether pairs were sampled rather than enumerated.
    pub sampled: bool,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "spearman,pearson,ratio_cv,n_pairs,n_ratio_pairs,excluded_infinite,sampled";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.spearman,
            self.pearson,
            self.ratio_cv,
            self.n_pairs,
            self.n_ratio_pairs,
            self.excluded_infinite,
            self.sampled
        )
    }

    /// Metrics over already-filtered finite pairs.
    pub fn from_pairs(
        true_d: &[f64],
        pred_d: &[f64],
        excluded_infinite: usize,
        sampled: bool,
    ) -> Result<Self, EvalError> {
        check_pair(true_d, pred_d)?;
        let undefined_as_nan = |r: Result<f64, EvalError>| match r {
            Ok(v) => Ok(v),
            Err(
                EvalError::ZeroVariance(_) | EvalError::ZeroMeanRatio | EvalError::TooFewPairs(_),
            ) => Ok(f64::NAN),
            Err(e) => Err(e),
        };
        let (pos_t, pos_p): (Vec<f64>, Vec<f64>) = true_d
            .iter()
            .zip(pred_d)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, p)| (*t, *p))
            .unzip();
        Ok(Self {
            spearman: undefined_as_nan(spearman(true_d, pred_d))?,
            pearson: undefined_as_nan(pearson(true_d, pred_d))?,
            ratio_cv: undefined_as_nan(ratio_cv(&pos_t, &pos_p))?,
            n_pairs: true_d.len(),
            n_ratio_pairs: pos_t.len(),
            excluded_infinite,
            sampled,
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "spearman={:.4} pearson={:.4} ratio_cv={:.4} pairs={} (infinite excluded: {})",
            self.spearman, self.pearson, self.ratio_cv, self.n_pairs, self.excluded_infinite
        )
    }
}

/// One evaluated latent pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairRecord {
    pub from: usize,
    pub to: usize,
    pub true_distance: f64,
    pub predicted: f64,
}

/// Scores `model` against `truth` on latent-state pairs with finite ground
/// truth. All ordered pairs are used when there are at most `max_pairs`
/// of them; otherwise `max_pairs` are drawn uniformly with replacement.
/// Each latent state is represented by [`Environment::representative`].
pub fn evaluate_pairs<E, M>(
    env: &E,
    model: &M,
    truth: &GroundTruthMad,
    max_pairs: usize,
    rng: &mut dyn RngCore,
) -> Result<(Vec<PairRecord>, usize, bool), EvalError>
where
    E: Environment,
    M: StateDistance<E> + ?Sized,
{
    let n = env.num_latent();
    let finite = truth
        .table()
        .iter()
        .filter(|&&d| d != GroundTruthMad::INF)
        .count();
    let excluded = n * n - finite;
    let sampled = finite > max_pairs;
    let pairs: Vec<(usize, usize)> = if sampled {
        let mut out = Vec::with_capacity(max_pairs);
        while out.len() < max_pairs {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if truth.get(a, b).is_some() {
                out.push((a, b));
            }
        }
        out
    } else {
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| truth.get(a, b).is_some())
            .collect()
    };
    let states: Vec<E::State> = (0..n).map(|id| env.representative(id)).collect();
    let pred = model.pairwise(env, &states, &pairs, rng)?;
    let records = pairs
        .iter()
        .zip(pred)
        .map(|(&(from, to), predicted)| PairRecord {
            from,
            to,
            true_distance: f64::from(truth.raw(from, to)),
            predicted,
        })
        .collect();
    Ok((records, excluded, sampled))
}

pub fn evaluate<E, M>(
    env: &E,
    model: &M,
    truth: &GroundTruthMad,
    max_pairs: usize,
    rng: &mut dyn RngCore,
) -> Result<MetricsReport, EvalError>
where
    E: Environment,
    M: StateDistance<E> + ?Sized,
{
    let (records, excluded, sampled) = evaluate_pairs(env, model, truth, max_pairs, rng)?;
    if records.len() < 2 {
        return Err(EvalError::TooFewPairs(records.len()));
    }
    let t: Vec<f64> = records.iter().map(|r| r.true_distance).collect();
    let p: Vec<f64> = records.iter().map(|r| r.predicted).collect();
    MetricsReport::from_pairs(&t, &p, excluded, sampled)
}
