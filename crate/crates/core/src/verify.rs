//! Statistical verification of a sampler against the exact oracles.
//!
//! [`verify`] replicates a sampler and checks, at a fixed significance:
//! agreement of the two stationary routes, absence of censored runs, tree
//! and root goodness of fit, independence of the stopping time and the
//! returned root, and the per-block success rate given event `A`.

use serde::Serialize;

use crate::arborescence::{tree_distribution, tree_theorem_stationary};
use crate::chain::{stationary_solve, TransitionMatrix};
use crate::error::{Error, Result};
use crate::sampler::{
    general_block_success_probability, replicate_with, restricted_block_success_probability,
    Replication, ReplicationSampler, SamplerMode,
};
use crate::stats::{
    chi_square_gof, chi_square_independence, drop_empty_margins, merge_sparse_cells, tally,
    TallyKey, TestReport, MIN_EXPECTED,
};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.001;

/// Tolerance for the two stationary routes to agree.
pub const STATIONARY_AGREEMENT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub replications: u64,
    pub seed: u64,
    pub significance: f64,
    /// Which success-probability formula applies to the sampler's blocks.
    pub mode: SamplerMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub p: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub replications: u64,
    pub censored: u64,
    pub significance: f64,
    pub criteria: Vec<CriterionOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

fn outcome(name: &'static str, passed: bool, p: Option<f64>, detail: String) -> CriterionOutcome {
    CriterionOutcome {
        name,
        passed,
        p,
        detail,
    }
}

/// GOF after pooling sparse cells. An observed category outside the
/// expected support is a statistical failure, not an infrastructure one.
fn gof_outcome(
    name: &'static str,
    replications: &[Replication],
    key: TallyKey,
    expected: &[(String, f64)],
    significance: f64,
) -> Result<CriterionOutcome> {
    let categories: Vec<String> = expected.iter().map(|(k, _)| k.clone()).collect();
    let observed = tally(replications, key, &categories)?;
    let (observed, expected) = merge_sparse_cells(&observed, expected, MIN_EXPECTED);
    if expected.len() < 2 {
        return Ok(outcome(
            name,
            true,
            None,
            "single cell after pooling; nothing to test".into(),
        ));
    }
    match chi_square_gof(&observed, &expected) {
        Ok(r) => Ok(report_outcome(name, &r, significance)),
        Err(Error::Domain(msg)) => Ok(outcome(name, false, Some(0.0), msg)),
        Err(e) => Err(e),
    }
}

fn report_outcome(name: &'static str, r: &TestReport, significance: f64) -> CriterionOutcome {
    outcome(
        name,
        !r.rejects(significance),
        Some(r.p_value),
        format!("chi2 = {:.4}, dof = {}", r.statistic, r.dof),
    )
}

/// `tau` quartile bucket of every completed replication, 0..4.
pub fn tau_quartile_buckets(taus: &[u64]) -> Vec<usize> {
    let mut sorted = taus.to_vec();
    sorted.sort_unstable();
    let m = sorted.len();
    let cuts: Vec<u64> = (1..4)
        .map(|k| sorted[((k * m).div_ceil(4)).max(1) - 1])
        .collect();
    taus.iter()
        .map(|t| cuts.iter().filter(|&&c| *t > c).count())
        .collect()
}

/// Merges the sparsest row or column into its smallest neighbour until every
/// expected count reaches [`MIN_EXPECTED`]. Returns `None` if a side drops
/// below two.
fn merge_for_independence(mut table: Vec<Vec<u64>>) -> Option<Vec<Vec<u64>>> {
    loop {
        table = drop_empty_margins(&table);
        let rows = table.len();
        let cols = table.first().map_or(0, Vec::len);
        if rows < 2 || cols < 2 {
            return None;
        }
        let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<u64> = (0..cols)
            .map(|j| table.iter().map(|r| r[j]).sum())
            .collect();
        let total: u64 = row_sums.iter().sum();
        let min_row = (0..rows).min_by_key(|&i| row_sums[i]).unwrap();
        let min_col = (0..cols).min_by_key(|&j| col_sums[j]).unwrap();
        let min_expected = row_sums[min_row] as f64 * col_sums[min_col] as f64 / total as f64;
        if min_expected >= MIN_EXPECTED {
            return Some(table);
        }
        // merge whichever margin is relatively thinner
        if (row_sums[min_row] as f64 / total as f64) <= (col_sums[min_col] as f64 / total as f64) {
            let into = neighbour(min_row, rows, |i| row_sums[i]);
            let taken = table.remove(min_row);
            let into = if into > min_row { into - 1 } else { into };
            for (a, b) in table[into].iter_mut().zip(taken) {
                *a += b;
            }
        } else {
            // columns are unordered categories: fold into the next smallest
            let into = (0..cols)
                .filter(|&j| j != min_col)
                .min_by_key(|&j| col_sums[j])
                .unwrap();
            for r in table.iter_mut() {
                let v = r[min_col];
                r[into] += v;
            }
            for r in table.iter_mut() {
                r.remove(min_col);
            }
        }
    }
}

/// Adjacent index (ordered rows) with the smaller margin.
fn neighbour(i: usize, len: usize, margin: impl Fn(usize) -> u64) -> usize {
    match (i.checked_sub(1), (i + 1 < len).then_some(i + 1)) {
        (Some(a), Some(b)) => {
            if margin(a) <= margin(b) {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => i,
    }
}

/// Independence of the `tau` quartile and the output root.
pub fn interruptibility_outcome(
    replications: &[Replication],
    n: usize,
    significance: f64,
) -> Result<CriterionOutcome> {
    const NAME: &str = "interruptibility (tau quartile x root)";
    let done: Vec<_> = replications
        .iter()
        .filter_map(Replication::sample)
        .collect();
    let taus: Vec<u64> = done.iter().map(|r| r.tau).collect();
    if taus.is_empty() {
        return Err(Error::Domain("no completed replications".into()));
    }
    let buckets = tau_quartile_buckets(&taus);
    let mut table = vec![vec![0u64; n]; 4];
    for (r, b) in done.iter().zip(buckets) {
        table[b][r.root()] += 1;
    }
    match merge_for_independence(table) {
        Some(t) => {
            let r = chi_square_independence(&t)?;
            Ok(report_outcome(NAME, &r, significance))
        }
        None => Ok(outcome(
            NAME,
            true,
            None,
            "fewer than two populated buckets or roots; independence holds trivially".into(),
        )),
    }
}

/// Empirical block success rate given `A`, against its exact value, with a
/// 3-sigma binomial band.
pub fn block_rate_outcome(replications: &[Replication], exact: f64) -> CriterionOutcome {
    const NAME: &str = "block success rate given A";
    let trials: u64 = replications
        .iter()
        .map(|r| match r {
            Replication::Completed(s) => s.conditioning_blocks,
            Replication::Censored {
                conditioning_blocks,
                ..
            } => *conditioning_blocks,
        })
        .sum();
    let successes = replications.iter().filter(|r| !r.is_censored()).count() as u64;
    if trials == 0 {
        return outcome(NAME, false, None, "no conditioning blocks observed".into());
    }
    let rate = successes as f64 / trials as f64;
    let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
    let z = (rate - exact) / sigma;
    let p = crate::stats::chi_square_sf(z * z, 1);
    outcome(
        NAME,
        z.abs() <= 3.0,
        Some(p),
        format!("rate = {rate:.6}, exact = {exact:.6}, trials = {trials}, z = {z:.3}"),
    )
}

pub fn verify(
    p: &TransitionMatrix,
    sampler: &dyn ReplicationSampler,
    cfg: &VerifyConfig,
) -> Result<VerifyReport> {
    let n = p.n();
    let mut criteria = Vec::new();

    let pi_tree = tree_theorem_stationary(p)?;
    let pi_lin = stationary_solve(p)?;
    let gap = pi_tree.max_abs_diff(&pi_lin);
    criteria.push(outcome(
        "stationary dual oracle",
        gap < STATIONARY_AGREEMENT,
        None,
        format!("max |pi_tree - pi_linear| = {gap:.3e}"),
    ));

    let dist = tree_distribution(p)?;
    let reps = replicate_with(sampler, p, 0..cfg.replications, cfg.seed)?;
    let censored = reps.iter().filter(|r| r.is_censored()).count() as u64;
    criteria.push(outcome(
        "termination (no censored runs)",
        censored == 0,
        None,
        format!("{censored} of {} runs censored", cfg.replications),
    ));

    criteria.push(gof_outcome(
        "tree exactness",
        &reps,
        TallyKey::Tree,
        &dist.probabilities(),
        cfg.significance,
    )?);
    let roots: Vec<(String, f64)> = pi_lin
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &q)| ((i + 1).to_string(), q))
        .collect();
    criteria.push(gof_outcome(
        "root exactness",
        &reps,
        TallyKey::Root,
        &roots,
        cfg.significance,
    )?);
    criteria.push(interruptibility_outcome(&reps, n, cfg.significance)?);

    let exact = match cfg.mode {
        SamplerMode::Restricted => restricted_block_success_probability(p)?,
        SamplerMode::General => general_block_success_probability(p)?,
    };
    criteria.push(block_rate_outcome(&reps, exact));

    Ok(VerifyReport {
        replications: cfg.replications,
        censored,
        significance: cfg.significance,
        criteria,
    })
}
