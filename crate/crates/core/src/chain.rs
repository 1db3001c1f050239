//! Finite transition matrices: validation, stationary distributions, the
//! averaged matrix and single-step simulation.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_ROW_TOLERANCE: f64 = 1e-9;

/// Row-stochastic `n x n` matrix. Rows are stored dense, together with their
/// running sums for inverse-CDF stepping.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
    cumulative: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds a matrix, rejecting rows whose sum is off by more than `1e-9`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(rows, DEFAULT_ROW_TOLERANCE)
    }

    pub fn with_tolerance(rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let n = check_shape(&rows)?;
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::InvalidMatrix(format!(
                        "entry ({}, {}) = {x} is outside [0, 1]",
                        i + 1,
                        j + 1
                    )));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidMatrix(format!(
                    "row {} sums to {sum}, not 1",
                    i + 1
                )));
            }
        }
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        let mut cumulative = Vec::with_capacity(n * n);
        for row in entries.chunks(n) {
            let mut acc = 0.0;
            for &x in row {
                acc += x;
                cumulative.push(acc);
            }
        }
        Ok(Self {
            n,
            entries,
            cumulative,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Runs [`validate`] at the default tolerance.
    pub fn validate(&self) -> ValidationReport {
        validate(self, DEFAULT_ROW_TOLERANCE)
    }

    pub(crate) fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    /// Inverse-CDF transition from `state` given a uniform draw `u` in `[0, 1)`.
    ///
    /// Returns the first `j` whose running row sum exceeds `u`. If rounding
    /// leaves `u` above the final running sum, the last positive entry wins.
    #[inline]
    pub fn select(&self, state: usize, u: f64) -> usize {
        let cum = &self.cumulative[state * self.n..(state + 1) * self.n];
        if let Some(j) = cum.iter().position(|&c| u < c) {
            return j;
        }
        self.row(state)
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("row of a transition matrix has a positive entry")
    }
}

fn check_shape(rows: &[Vec<f64>]) -> Result<usize> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidMatrix("matrix has no rows".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Shape {
                row: i + 1,
                len: row.len(),
                expected: n,
            });
        }
    }
    Ok(n)
}

/// Structural facts about a candidate transition matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub row_stochastic: bool,
    pub irreducible: bool,
    pub aperiodic: bool,
    pub assumption_a: bool,
    /// gcd of cycle lengths in the strongly connected component of state 1;
    /// `None` when that component has no cycle.
    pub period: Option<usize>,
}

pub fn validate(p: &TransitionMatrix, tol: f64) -> ValidationReport {
    report_for(&p.rows(), tol)
}

/// Validates raw rows that may not yet form a stochastic matrix.
pub fn validate_rows(rows: &[Vec<f64>], tol: f64) -> Result<ValidationReport> {
    check_shape(rows)?;
    Ok(report_for(rows, tol))
}

fn report_for(rows: &[Vec<f64>], tol: f64) -> ValidationReport {
    let n = rows.len();
    let row_stochastic = rows.iter().all(|row| {
        row.iter().all(|x| (0.0..=1.0).contains(x)) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
    });
    let adj: Vec<Vec<usize>> = rows
        .iter()
        .map(|row| (0..n).filter(|&j| row[j] > 0.0).collect())
        .collect();
    let forward = reachable(&adj, 0);
    let radj = reverse(&adj);
    let backward = reachable(&radj, 0);
    let irreducible = forward.iter().all(|&r| r) && backward.iter().all(|&r| r);
    let component: Vec<bool> = forward
        .iter()
        .zip(&backward)
        .map(|(&f, &b)| f && b)
        .collect();
    let period = period_of(&adj, &component);
    ValidationReport {
        row_stochastic,
        irreducible,
        aperiodic: period == Some(1),
        assumption_a: rows[0].iter().all(|&x| x > 0.0),
        period,
    }
}

fn reverse(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut radj = vec![Vec::new(); adj.len()];
    for (i, out) in adj.iter().enumerate() {
        for &j in out {
            radj[j].push(i);
        }
    }
    radj
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// gcd over edges `u -> v` inside the component of `level(u) + 1 - level(v)`,
/// with BFS levels measured from state 0.
fn period_of(adj: &[Vec<usize>], component: &[bool]) -> Option<usize> {
    let n = adj.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if component[j] && level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let mut g = 0usize;
    for i in (0..n).filter(|&i| component[i]) {
        for &j in adj[i].iter().filter(|&&j| component[j]) {
            let diff = (level[i] + 1).abs_diff(level[j]);
            g = gcd(g, diff);
        }
    }
    (g > 0).then_some(g)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A probability vector over `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("distribution over zero states".into()));
        }
        if probs.iter().any(|&p| p.is_nan() || p < 0.0) {
            return Err(Error::Domain("distribution has a negative entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("distribution sums to {total}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF draw using one uniform variate.
    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn require_irreducible(p: &TransitionMatrix, what: &str) -> Result<()> {
    if p.validate().irreducible {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} requires an irreducible chain"
        )))
    }
}

/// Solves `pi P = pi`, `sum(pi) = 1` with the last balance equation replaced by
/// the normalization.
pub fn stationary_solve(p: &TransitionMatrix) -> Result<Distribution> {
    require_irreducible(p, "stationary_solve")?;
    let n = p.n();
    let mut a = p.to_dmatrix().transpose() - DMatrix::<f64>::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Domain("singular stationary system".into()))?;
    let mut probs: Vec<f64> = pi.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|x| *x /= total);
    Distribution::new(probs)
}

/// `(1/n) * (P + P^2 + ... + P^n)`.
pub fn averaged_matrix(p: &TransitionMatrix) -> Result<TransitionMatrix> {
    require_irreducible(p, "averaged_matrix")?;
    let n = p.n();
    let base = p.to_dmatrix();
    let mut power = base.clone();
    let mut sum = base.clone();
    for _ in 1..n {
        power = &power * &base;
        sum += &power;
    }
    sum /= n as f64;
    let rows = (0..n)
        .map(|i| (0..n).map(|j| sum[(i, j)].clamp(0.0, 1.0)).collect())
        .collect();
    TransitionMatrix::new(rows)
}

/// One transition from `state`, consuming exactly one uniform variate.
#[inline]
pub fn step(p: &TransitionMatrix, state: usize, rng: &mut RngStream) -> usize {
    p.select(state, rng.uniform())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> TransitionMatrix {
        TransitionMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn validate_uniform_two_state() {
        let r = m(&[&[0.5, 0.5], &[0.5, 0.5]]).validate();
        assert_eq!(
            r,
            ValidationReport {
                row_stochastic: true,
                irreducible: true,
                aperiodic: true,
                assumption_a: true,
                period: Some(1),
            }
        );
    }

    #[test]
    fn validate_two_cycle() {
        let r = m(&[&[0.0, 1.0], &[1.0, 0.0]]).validate();
        assert!(r.row_stochastic && r.irreducible);
        assert!(!r.aperiodic);
        assert!(!r.assumption_a);
        assert_eq!(r.period, Some(2));
    }

    #[test]
    fn validate_identity_is_reducible() {
        let r = m(&[&[1.0, 0.0], &[0.0, 1.0]]).validate();
        assert!(r.row_stochastic);
        assert!(!r.irreducible);
    }

    #[test]
    fn validate_three_cycle_period() {
        let r = m(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]).validate();
        assert_eq!(r.period, Some(3));
        assert!(!r.aperiodic);
    }

    #[test]
    fn validate_rows_flags_bad_row_sum() {
        let r = validate_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]], 1e-9).unwrap();
        assert!(!r.row_stochastic);
        let r = validate_rows(&[vec![0.5, 0.5 + 2e-9], vec![0.5, 0.5]], 1e-9).unwrap();
        assert!(!r.row_stochastic);
        let r = validate_rows(&[vec![0.5, 0.5 + 5e-10], vec![0.5, 0.5]], 1e-9).unwrap();
        assert!(r.row_stochastic);
    }

    #[test]
    fn non_square_is_shape_error() {
        let err = validate_rows(&[vec![0.5, 0.5], vec![1.0]], 1e-9).unwrap_err();
        assert_eq!(
            err,
            Error::Shape {
                row: 2,
                len: 1,
                expected: 2
            }
        );
        assert!(matches!(
            TransitionMatrix::new(vec![vec![0.5, 0.5]]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn stationary_two_state() {
        let pi = stationary_solve(&m(&[&[0.5, 0.5], &[0.5, 0.5]])).unwrap();
        assert!((pi.probs()[0] - 0.5).abs() < 1e-14);
        let pi = stationary_solve(&m(&[&[0.7, 0.3], &[0.6, 0.4]])).unwrap();
        assert!((pi.probs()[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((pi.probs()[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn stationary_rejects_reducible() {
        let err = stationary_solve(&m(&[&[1.0, 0.0], &[0.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn averaged_two_cycle() {
        let bar = averaged_matrix(&m(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((bar.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
        let bar = averaged_matrix(&m(&[&[1.0]])).unwrap();
        assert_eq!(bar.get(0, 0), 1.0);
    }

    #[test]
    fn step_inverse_cdf() {
        let p = m(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(p.select(0, 0.2), 0);
        assert_eq!(p.select(0, 0.7), 1);
        assert_eq!(p.select(0, 0.5), 1);
        let cycle = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let mut rng = RngStream::new(3, 0);
        for _ in 0..100 {
            assert_eq!(step(&cycle, 0, &mut rng), 1);
        }
    }

    #[test]
    fn step_consumes_one_variate() {
        let p = m(&[&[0.2, 0.3, 0.5], &[0.1, 0.1, 0.8], &[1.0, 0.0, 0.0]]);
        let mut a = RngStream::new(11, 4);
        let mut b = RngStream::new(11, 4);
        for _ in 0..50 {
            let j = step(&p, 1, &mut a);
            assert_eq!(j, p.select(1, b.uniform()));
        }
    }

    #[test]
    fn select_skips_zero_tail_on_rounding() {
        let p = m(&[&[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        assert_eq!(p.select(0, 1.0), 1);
    }
}
