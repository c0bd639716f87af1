//! Exact minimum action distances over a finite one-step relation.

use std::io::{self, Write};

/// All-pairs unit-cost shortest paths. Unreachable pairs hold [`GroundTruthMad::INF`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthMad {
    n: usize,
    dist: Vec<u32>,
}

impl GroundTruthMad {
    /// Sentinel for "unreachable".
    pub const INF: u32 = u32::MAX;

    /// Wraps a dense row-major table.
    pub fn from_table(n: usize, dist: Vec<u32>) -> Self {
        assert_eq!(dist.len(), n * n, "table must be n×n");
        Self { n, dist }
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    /// Raw entry, [`Self::INF`] when unreachable.
    pub fn raw(&self, from: usize, to: usize) -> u32 {
        self.dist[from * self.n + to]
    }

    /// Finite distance or `None`.
    pub fn get(&self, from: usize, to: usize) -> Option<u32> {
        let d = self.raw(from, to);
        (d != Self::INF).then_some(d)
    }

    pub fn table(&self) -> &[u32] {
        &self.dist
    }

    /// `f64` copy with `+∞` for unreachable pairs.
    pub fn to_f64(&self) -> Vec<f64> {
        self.dist
            .iter()
            .map(|&d| {
                if d == Self::INF {
                    f64::INFINITY
                } else {
                    d as f64
                }
            })
            .collect()
    }

    /// `state_id_from,state_id_to,distance` rows, `INF` for unreachable.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "state_id_from,state_id_to,distance")?;
        for i in 0..self.n {
            for j in 0..self.n {
                match self.get(i, j) {
                    Some(d) => writeln!(w, "{i},{j},{d}")?,
                    None => writeln!(w, "{i},{j},INF")?,
                }
            }
        }
        Ok(())
    }
}

/// Floyd-Warshall with unit edge costs. `successors[s]` lists every `s'` with
/// `(s, s') ∈ R`; self-loops are allowed and ignored.
pub fn floyd_warshall(successors: &[Vec<usize>]) -> GroundTruthMad {
    let n = successors.len();
    let inf = GroundTruthMad::INF;
    let mut d = vec![inf; n * n];
    for (s, next) in successors.iter().enumerate() {
        for &t in next {
            assert!(t < n, "successor {t} of state {s} out of range");
            d[s * n + t] = 1;
        }
        d[s * n + s] = 0;
    }
    for k in 0..n {
        let row_k: Vec<u32> = d[k * n..(k + 1) * n].to_vec();
        for i in 0..n {
            let dik = d[i * n + k];
            if dik == inf {
                continue;
            }
            let row_i = &mut d[i * n..(i + 1) * n];
            for (dij, &dkj) in row_i.iter_mut().zip(&row_k) {
                if dkj != inf {
                    let via = dik + dkj;
                    if via < *dij {
                        *dij = via;
                    }
                }
            }
        }
    }
    GroundTruthMad { n, dist: d }
}

/// Feasibility of a candidate distance against the MAD linear program
/// (identity, one-step bound, triangle inequality) and its objective compared
/// with the exact solution.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityReport {
    pub identity_violations: usize,
    pub one_step_violations: usize,
    pub triangle_violations: usize,
    pub feasible: bool,
    pub candidate_sum: f64,
    pub mad_sum: f64,
    /// `Σ candidate ≤ Σ d_MAD`.
    pub dominated: bool,
    /// `candidate ≤ d_MAD` entrywise.
    pub pointwise_dominated: bool,
}

const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Checks a row-major `n×n` candidate (`+∞` allowed) against the relation.
pub fn check_mad_optimality(candidate: &[f64], successors: &[Vec<usize>]) -> OptimalityReport {
    let n = successors.len();
    assert_eq!(candidate.len(), n * n, "candidate must be n×n");
    let at = |i: usize, j: usize| candidate[i * n + j];

    let identity_violations = (0..n).filter(|&i| at(i, i) != 0.0).count();
    let one_step_violations = successors
        .iter()
        .enumerate()
        .flat_map(|(s, next)| next.iter().map(move |&t| (s, t)))
        .filter(|&(s, t)| at(s, t) > 1.0 + FEASIBILITY_TOLERANCE)
        .count();
    let mut triangle_violations = 0;
    for i in 0..n {
        for k in 0..n {
            let dik = at(i, k);
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                if at(i, j) > dik + at(k, j) + FEASIBILITY_TOLERANCE {
                    triangle_violations += 1;
                }
            }
        }
    }
    let feasible = identity_violations == 0
        && one_step_violations == 0
        && triangle_violations == 0
        && candidate.iter().all(|&v| v >= 0.0);

    let mad = floyd_warshall(successors).to_f64();
    let candidate_sum: f64 = candidate.iter().sum();
    let mad_sum: f64 = mad.iter().sum();
    OptimalityReport {
        identity_violations,
        one_step_violations,
        triangle_violations,
        feasible,
        candidate_sum,
        mad_sum,
        dominated: candidate_sum <= mad_sum + FEASIBILITY_TOLERANCE * mad_sum.abs().max(1.0),
        pointwise_dominated: candidate
            .iter()
            .zip(&mad)
            .all(|(c, m)| *c <= m + FEASIBILITY_TOLERANCE),
    }
}
