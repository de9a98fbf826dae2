//! Steady-state and potential analysis of a finite Markov chain with a cost
//! vector.
//!
//! All solves are dense and direct. A chain must be unichain (exactly one
//! closed communicating class, transient states allowed, periodicity allowed)
//! for any of the analyses below to be defined.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::settings::NumericSettings;

/// Row-stochastic square matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds a matrix from rows, checking every row sums to one within
    /// `row_sum_tol` and every entry lies in `[0, 1]`.
    pub fn new(rows: Vec<Vec<f64>>, row_sum_tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMatrix("matrix has no states".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (s, row) in rows.into_iter().enumerate() {
            check_row(&row, n, row_sum_tol).map_err(|m| Error::InvalidMatrix(format!("row {s}: {m}")))?;
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    /// Builds from rows that are already known to be stochastic (blends of
    /// validated rows). Entries are still range-checked in debug builds.
    pub(crate) fn from_trusted_rows(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        debug_assert!(data.iter().all(|p| (0.0..=1.0).contains(p)));
        Self { n, data }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n..(s + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    /// `P · v` for a column vector `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows().map(|row| dot(row, v)).collect()
    }

    /// `v · P` for a row vector `v`.
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (s, row) in self.rows().enumerate() {
            for (o, p) in out.iter_mut().zip(row) {
                *o += v[s] * p;
            }
        }
        out
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

pub(crate) fn check_row(row: &[f64], n: usize, row_sum_tol: f64) -> std::result::Result<(), String> {
    if row.len() != n {
        return Err(format!("has {} entries, expected {n}", row.len()));
    }
    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("entry {p} outside [0, 1]"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > row_sum_tol {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of [`classify_chain`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainClass {
    /// Exactly one closed class; the mask marks its states.
    Unichain(Vec<bool>),
    /// Two or more closed classes.
    Multichain { closed_classes: usize },
}

/// Classifies a chain from the strongly connected components of its
/// positive-probability graph.
pub fn classify_chain(p: &TransitionMatrix) -> ChainClass {
    let n = p.n_states();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * 2);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for (s, row) in p.rows().enumerate() {
        for (t, &prob) in row.iter().enumerate() {
            if prob > 0.0 {
                graph.add_edge(nodes[s], nodes[t], ());
            }
        }
    }

    let mut component = vec![usize::MAX; n];
    let sccs = tarjan_scc(&graph);
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            component[v.index()] = c;
        }
    }
    let closed: Vec<usize> = (0..sccs.len())
        .filter(|&c| {
            sccs[c].iter().all(|v| {
                let s = v.index();
                p.row(s)
                    .iter()
                    .enumerate()
                    .all(|(t, &prob)| prob == 0.0 || component[t] == c)
            })
        })
        .collect();

    match closed.as_slice() {
        [c] => ChainClass::Unichain(component.iter().map(|k| k == c).collect()),
        _ => ChainClass::Multichain {
            closed_classes: closed.len(),
        },
    }
}

fn recurrent_mask(p: &TransitionMatrix) -> Result<Vec<bool>> {
    match classify_chain(p) {
        ChainClass::Unichain(mask) => Ok(mask),
        ChainClass::Multichain { closed_classes } => Err(Error::Multichain {
            closed_classes,
            player: None,
            iteration: None,
        }),
    }
}

/// Solves `a x = b`, rejecting systems whose LU factor has a pivot below
/// `solve_tol` in magnitude.
fn solve_dense(a: DMatrix<f64>, b: DVector<f64>, solve_tol: f64) -> Result<DVector<f64>> {
    let lu = a.lu();
    let pivot = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, d| m.min(d.abs()));
    if !(pivot >= solve_tol) {
        return Err(Error::Singular { pivot });
    }
    lu.solve(&b).ok_or(Error::Singular { pivot })
}

/// Unique stationary distribution of a unichain, exactly zero off the
/// recurrent class.
pub fn stationary_distribution(p: &TransitionMatrix, settings: &NumericSettings) -> Result<Vec<f64>> {
    let mask = recurrent_mask(p)?;
    stationary_on_class(p, &mask, settings)
}

fn stationary_on_class(p: &TransitionMatrix, mask: &[bool], settings: &NumericSettings) -> Result<Vec<f64>> {
    let class: Vec<usize> = (0..p.n_states()).filter(|&s| mask[s]).collect();
    let k = class.len();

    // Balance equations pi (P_RR - I) = 0 transposed, last one swapped for sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(k, k);
    for (col, &from) in class.iter().enumerate() {
        for (row, &to) in class.iter().enumerate() {
            a[(row, col)] = p.get(from, to) - if row == col { 1.0 } else { 0.0 };
        }
    }
    for col in 0..k {
        a[(k - 1, col)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(k);
    b[k - 1] = 1.0;

    let x = solve_dense(a, b, settings.solve_tol)?;
    let mut pi = vec![0.0; p.n_states()];
    for (&s, &v) in class.iter().zip(x.iter()) {
        // round-off can leave -1e-17 on states with tiny mass
        pi[s] = v.max(0.0);
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// Stationary distribution, average cost and bias potential of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAnalysis {
    pub pi: Vec<f64>,
    pub avg_cost: f64,
    pub potential: Vec<f64>,
    pub recurrent_mask: Vec<bool>,
}

impl ChainAnalysis {
    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    /// Largest elementwise violation of `g = c - J 1 + P g`.
    pub fn poisson_residual(&self, p: &TransitionMatrix, cost: &[f64]) -> f64 {
        let pg = p.apply(&self.potential);
        self.potential
            .iter()
            .zip(cost)
            .zip(&pg)
            .map(|((g, c), pg)| (g - (c - self.avg_cost + pg)).abs())
            .fold(0.0, f64::max)
    }
}

/// Average cost and potential `g` normalized by `pi . g = 0`, obtained from the
/// fundamental-matrix system `(I - P + 1 pi) g = c - J 1`.
pub fn solve_poisson(p: &TransitionMatrix, cost: &[f64], settings: &NumericSettings) -> Result<ChainAnalysis> {
    let n = p.n_states();
    if cost.len() != n {
        return Err(Error::AnalysisMismatch {
            expected: n,
            found: cost.len(),
        });
    }
    let mask = recurrent_mask(p)?;
    let pi = stationary_on_class(p, &mask, settings)?;
    let avg_cost = dot(&pi, cost);

    let mut a = -p.to_dmatrix();
    for r in 0..n {
        a[(r, r)] += 1.0;
        for c in 0..n {
            a[(r, c)] += pi[c];
        }
    }
    let b = DVector::from_iterator(n, cost.iter().map(|c| c - avg_cost));
    let g = solve_dense(a, b, settings.solve_tol)?;

    let analysis = ChainAnalysis {
        pi,
        avg_cost,
        potential: g.iter().copied().collect(),
        recurrent_mask: mask,
    };
    let residual = analysis.poisson_residual(p, cost);
    if !(residual <= settings.residual_tol) {
        return Err(Error::Residual { residual });
    }
    Ok(analysis)
}
