//! Asymmetric distances on latent vectors built from the ReLU reduction
//! `r(x, y)_i = max(x_i − y_i, 0)`.
//!
//! Every kind here satisfies `d(x, x) = 0`, `d ≥ 0`, the triangle inequality
//! and positive homogeneity, but not symmetry.
//!
//! Subgradient conventions: a coordinate with `x_i = y_i` contributes 0, and
//! ties in the max go to the lowest index.

use std::fmt;
use std::str::FromStr;

use crate::diffnet::{DiffError, Graph, Tensor, Var};

/// Default weight between the max and mean parts of `simple`.
pub const DEFAULT_ALPHA: f64 = 0.5;
const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum QuasimetricError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("latent vectors must have at least one component")]
    Empty,
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
    #[error("convex weights must be non-negative and sum to 1 (sum = {0})")]
    Weights(f64),
    #[error("cannot parse quasimetric `{0}`")]
    Parse(String),
}

/// Scalar reductions of the ReLU-reduced vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Aggregation {
    Max,
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub enum QuasimetricSpec {
    /// `α·max_i r_i + (1 − α)·mean_i r_i`.
    Simple {
        alpha: f64,
    },
    Max,
    Sum,
    Mean,
    /// `Σ_k w_k d_k` with non-negative weights summing to one.
    Convex(Vec<(f64, QuasimetricSpec)>),
}

impl Default for QuasimetricSpec {
    fn default() -> Self {
        QuasimetricSpec::Simple {
            alpha: DEFAULT_ALPHA,
        }
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<(), QuasimetricError> {
    if x.len() != y.len() {
        return Err(QuasimetricError::Dimension(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(QuasimetricError::Empty);
    }
    Ok(())
}

/// Componentwise `max(x_i − y_i, 0)`.
pub fn relu_reduction(x: &[f64], y: &[f64]) -> Result<Vec<f64>, QuasimetricError> {
    check_dims(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).max(0.0)).collect())
}

fn aggregate(r: &[f64], kind: Aggregation) -> f64 {
    match kind {
        Aggregation::Max => r.iter().copied().fold(0.0, f64::max),
        Aggregation::Sum => r.iter().sum(),
        Aggregation::Mean => r.iter().sum::<f64>() / r.len() as f64,
    }
}

pub fn d_aggregate(x: &[f64], y: &[f64], kind: Aggregation) -> Result<f64, QuasimetricError> {
    Ok(aggregate(&relu_reduction(x, y)?, kind))
}

pub fn d_simple(x: &[f64], y: &[f64], alpha: f64) -> Result<f64, QuasimetricError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(QuasimetricError::Alpha(alpha));
    }
    let r = relu_reduction(x, y)?;
    Ok(alpha * aggregate(&r, Aggregation::Max) + (1.0 - alpha) * aggregate(&r, Aggregation::Mean))
}

pub fn d_convex(
    x: &[f64],
    y: &[f64],
    members: &[(f64, QuasimetricSpec)],
) -> Result<f64, QuasimetricError> {
    validate_weights(members)?;
    members
        .iter()
        .try_fold(0.0, |acc, (w, m)| Ok(acc + w * m.distance(x, y)?))
}

fn validate_weights(members: &[(f64, QuasimetricSpec)]) -> Result<(), QuasimetricError> {
    let sum: f64 = members.iter().map(|(w, _)| *w).sum();
    if members.is_empty()
        || members.iter().any(|(w, _)| !(*w >= 0.0) || !w.is_finite())
        || (sum - 1.0).abs() > WEIGHT_TOLERANCE
    {
        return Err(QuasimetricError::Weights(sum));
    }
    Ok(())
}

impl QuasimetricSpec {
    pub fn simple(alpha: f64) -> Result<Self, QuasimetricError> {
        let s = QuasimetricSpec::Simple { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn convex(members: Vec<(f64, QuasimetricSpec)>) -> Result<Self, QuasimetricError> {
        let s = QuasimetricSpec::Convex(members);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), QuasimetricError> {
        match self {
            QuasimetricSpec::Simple { alpha } if !(0.0..=1.0).contains(alpha) => {
                Err(QuasimetricError::Alpha(*alpha))
            }
            QuasimetricSpec::Convex(members) => {
                validate_weights(members)?;
                members.iter().try_for_each(|(_, m)| m.validate())
            }
            _ => Ok(()),
        }
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64, QuasimetricError> {
        match self {
            QuasimetricSpec::Simple { alpha } => d_simple(x, y, *alpha),
            QuasimetricSpec::Max => d_aggregate(x, y, Aggregation::Max),
            QuasimetricSpec::Sum => d_aggregate(x, y, Aggregation::Sum),
            QuasimetricSpec::Mean => d_aggregate(x, y, Aggregation::Mean),
            QuasimetricSpec::Convex(members) => d_convex(x, y, members),
        }
    }

    /// Closed-form subgradients `(∂d/∂x, ∂d/∂y)`.
    pub fn gradients(
        &self,
        x: &[f64],
        y: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), QuasimetricError> {
        check_dims(x, y)?;
        self.validate()?;
        let mut gx = vec![0.0; x.len()];
        self.accumulate_gradient(x, y, 1.0, &mut gx);
        let gy = gx.iter().map(|g| -g).collect();
        Ok((gx, gy))
    }

    fn accumulate_gradient(&self, x: &[f64], y: &[f64], weight: f64, gx: &mut [f64]) {
        let d = x.len() as f64;
        let active = |i: usize| x[i] > y[i];
        let add_max = |gx: &mut [f64], w: f64| {
            let mut best: Option<usize> = None;
            for i in 0..x.len() {
                let r = x[i] - y[i];
                if r > 0.0 && best.is_none_or(|b| r > x[b] - y[b]) {
                    best = Some(i);
                }
            }
            if let Some(i) = best {
                gx[i] += w;
            }
        };
        let add_sum = |gx: &mut [f64], w: f64| {
            for (i, g) in gx.iter_mut().enumerate() {
                if active(i) {
                    *g += w;
                }
            }
        };
        match self {
            QuasimetricSpec::Simple { alpha } => {
                add_max(gx, weight * alpha);
                add_sum(gx, weight * (1.0 - alpha) / d);
            }
            QuasimetricSpec::Max => add_max(gx, weight),
            QuasimetricSpec::Sum => add_sum(gx, weight),
            QuasimetricSpec::Mean => add_sum(gx, weight / d),
            QuasimetricSpec::Convex(members) => {
                for (w, m) in members {
                    m.accumulate_gradient(x, y, weight * w, gx);
                }
            }
        }
    }

    /// Row-wise distance between two `[B × k]` matrices.
    pub fn distance_rows(&self, from: &Tensor, to: &Tensor) -> Result<Vec<f64>, QuasimetricError> {
        if from.shape() != to.shape() {
            return Err(QuasimetricError::Dimension(from.cols(), to.cols()));
        }
        (0..from.rows())
            .map(|i| self.distance(from.row(i), to.row(i)))
            .collect()
    }

    /// Records `d(from_i, to_i)` for every row of two `[B × k]` embedding
    /// nodes, producing a `[B]` node.
    pub fn record(&self, graph: &mut Graph, from: Var, to: Var) -> Result<Var, DiffError> {
        let k = graph.value(from)?.cols();
        if k == 0 {
            return Err(DiffError::Shape(
                "quasimetric over zero-width embeddings".into(),
            ));
        }
        let diff = graph.sub(from, to)?;
        let r = graph.relu(diff)?;
        self.record_reduced(graph, r, k)
    }

    fn record_reduced(&self, graph: &mut Graph, r: Var, k: usize) -> Result<Var, DiffError> {
        match self {
            QuasimetricSpec::Simple { alpha } => {
                let mx = graph.row_max(r)?;
                let sm = graph.row_sum(r)?;
                let a = graph.scale(mx, *alpha)?;
                let b = graph.scale(sm, (1.0 - alpha) / k as f64)?;
                graph.add(a, b)
            }
            QuasimetricSpec::Max => graph.row_max(r),
            QuasimetricSpec::Sum => graph.row_sum(r),
            QuasimetricSpec::Mean => {
                let s = graph.row_sum(r)?;
                graph.scale(s, 1.0 / k as f64)
            }
            QuasimetricSpec::Convex(members) => {
                let mut acc: Option<Var> = None;
                for (w, m) in members {
                    let d = m.record_reduced(graph, r, k)?;
                    let d = graph.scale(d, *w)?;
                    acc = Some(match acc {
                        Some(a) => graph.add(a, d)?,
                        None => d,
                    });
                }
                acc.ok_or_else(|| DiffError::Usage("empty convex combination".into()))
            }
        }
    }
}

impl fmt::Display for QuasimetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuasimetricSpec::Simple { alpha } => write!(f, "simple({alpha})"),
            QuasimetricSpec::Max => f.write_str("max"),
            QuasimetricSpec::Sum => f.write_str("sum"),
            QuasimetricSpec::Mean => f.write_str("mean"),
            QuasimetricSpec::Convex(members) => {
                f.write_str("convex(")?;
                for (i, (w, m)) in members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{w}*{m}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Grammar: `max | sum | mean | simple | simple(α) | convex(w*spec, ...)`.
impl FromStr for QuasimetricSpec {
    type Err = QuasimetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || QuasimetricError::Parse(s.to_string());
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let spec = match t.as_str() {
            "max" => QuasimetricSpec::Max,
            "sum" => QuasimetricSpec::Sum,
            "mean" => QuasimetricSpec::Mean,
            "simple" => QuasimetricSpec::default(),
            _ => {
                if let Some(inner) = t.strip_prefix("simple(").and_then(|r| r.strip_suffix(')')) {
                    QuasimetricSpec::Simple {
                        alpha: inner.parse().map_err(|_| err())?,
                    }
                } else if let Some(inner) =
                    t.strip_prefix("convex(").and_then(|r| r.strip_suffix(')'))
                {
                    let mut members = Vec::new();
                    for part in split_top_level(inner).ok_or_else(err)? {
                        let (w, m) = part.split_once('*').ok_or_else(err)?;
                        members.push((w.parse().map_err(|_| err())?, m.parse()?));
                    }
                    QuasimetricSpec::Convex(members)
                } else {
                    return Err(err());
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Splits on commas outside parentheses.
fn split_top_level(s: &str) -> Option<Vec<&str>> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return None;
    }
    parts.push(&s[start..]);
    Some(parts)
}
