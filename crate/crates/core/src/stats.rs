//! Frequency tables and Pearson chi-square tests.

use std::collections::HashMap;

use serde::{Serialize, Serializer};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::arborescence::canonical_encode;
use crate::error::{Error, Result};
use crate::sampler::Replication;

/// Smallest expected count a cell may have before it must be merged.
pub const MIN_EXPECTED: f64 = 5.0;

pub const REPORTED_SIGNIFICANCE: [f64; 3] = [0.05, 0.01, 0.001];

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_sf(statistic: f64, dof: usize) -> f64 {
    assert!(dof > 0, "chi-square needs dof >= 1");
    if statistic <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64)
        .expect("dof >= 1")
        .sf(statistic)
        .clamp(0.0, 1.0)
}

/// Counts per category key. Zero-count categories are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    categories: Vec<String>,
    counts: Vec<u64>,
    total: u64,
}

impl FrequencyTable {
    /// Tallies `keys`, listing `expected_categories` first (in order, with
    /// zero counts where unseen) and any other key after them in order of
    /// first appearance.
    pub fn from_keys<I, K>(keys: I, expected_categories: &[String]) -> Self
    where
        I: IntoIterator<Item = K>,
        K: AsRef<str>,
    {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut categories = Vec::new();
        for c in expected_categories {
            if !index.contains_key(c) {
                index.insert(c.clone(), categories.len());
                categories.push(c.clone());
            }
        }
        let mut counts = vec![0u64; categories.len()];
        let mut total = 0;
        for k in keys {
            let k = k.as_ref();
            let slot = match index.get(k) {
                Some(&i) => i,
                None => {
                    index.insert(k.to_owned(), categories.len());
                    categories.push(k.to_owned());
                    counts.push(0);
                    categories.len() - 1
                }
            };
            counts[slot] += 1;
            total += 1;
        }
        Self {
            categories,
            counts,
            total,
        }
    }

    pub fn from_counts(pairs: Vec<(String, u64)>) -> Self {
        let total = pairs.iter().map(|(_, c)| c).sum();
        let (categories, counts) = pairs.into_iter().unzip();
        Self {
            categories,
            counts,
            total,
        }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, category: &str) -> u64 {
        self.categories
            .iter()
            .position(|c| c == category)
            .map_or(0, |i| self.counts[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.categories
            .iter()
            .map(String::as_str)
            .zip(self.counts.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TallyKey {
    /// 1-based root label.
    Root,
    /// Canonical tree string.
    Tree,
}

/// Tallies completed replications by root or tree; censored runs never
/// enter the table.
pub fn tally(
    results: &[Replication],
    key: TallyKey,
    expected_categories: &[String],
) -> Result<FrequencyTable> {
    let keys: Vec<String> = results
        .iter()
        .filter_map(Replication::sample)
        .map(|r| match key {
            TallyKey::Root => (r.root() + 1).to_string(),
            TallyKey::Tree => canonical_encode(&r.tree),
        })
        .collect();
    if keys.is_empty() {
        return Err(Error::Domain("no uncensored results to tally".into()));
    }
    Ok(FrequencyTable::from_keys(keys, expected_categories))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `(significance, rejected)` at the conventional levels.
    pub reject_at: Vec<(f64, bool)>,
}

impl TestReport {
    fn new(statistic: f64, dof: usize) -> Self {
        let p_value = chi_square_sf(statistic, dof);
        Self {
            statistic,
            dof,
            p_value,
            reject_at: REPORTED_SIGNIFICANCE
                .iter()
                .map(|&a| (a, p_value < a))
                .collect(),
        }
    }

    pub fn rejects(&self, significance: f64) -> bool {
        self.p_value < significance
    }
}

impl Serialize for TestReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            stat: f64,
            dof: usize,
            p: f64,
        }
        Wire {
            stat: self.statistic,
            dof: self.dof,
            p: self.p_value,
        }
        .serialize(s)
    }
}

fn check_expected(expected: &[(String, f64)]) -> Result<()> {
    let sum: f64 = expected.iter().map(|(_, p)| p).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "expected probabilities sum to {sum}"
        )));
    }
    if expected.iter().any(|(_, p)| p.is_nan() || *p < 0.0) {
        return Err(Error::Domain("negative expected probability".into()));
    }
    Ok(())
}

/// Pearson goodness of fit of `observed` against category probabilities.
pub fn chi_square_gof(observed: &FrequencyTable, expected: &[(String, f64)]) -> Result<TestReport> {
    check_expected(expected)?;
    let probs: HashMap<&str, f64> = expected.iter().map(|(k, p)| (k.as_str(), *p)).collect();
    for (cat, count) in observed.iter() {
        if count > 0 && probs.get(cat).is_none_or(|&p| p <= 0.0) {
            return Err(Error::Domain(format!(
                "observed category `{cat}` has no expected mass"
            )));
        }
    }
    let total = observed.total() as f64;
    if total == 0.0 {
        return Err(Error::Domain("empty frequency table".into()));
    }
    let mut statistic = 0.0;
    let mut cells = 0;
    for (cat, p) in expected.iter().filter(|(_, p)| *p > 0.0) {
        let e = total * p;
        if e < MIN_EXPECTED {
            return Err(Error::CellMergeRequired {
                category: cat.clone(),
                expected: e,
                minimum: MIN_EXPECTED,
            });
        }
        let o = observed.count(cat) as f64;
        statistic += (o - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return Err(Error::Domain(
            "goodness of fit needs at least two cells".into(),
        ));
    }
    Ok(TestReport::new(statistic, cells - 1))
}

pub const OTHER_CELL: &str = "other";

/// Pools the rarest expected categories into one [`OTHER_CELL`] until every
/// cell, the pooled one included, has expected count at least `minimum`.
/// Observed categories outside `expected` are carried through untouched so
/// that the subsequent test still flags them.
pub fn merge_sparse_cells(
    observed: &FrequencyTable,
    expected: &[(String, f64)],
    minimum: f64,
) -> (FrequencyTable, Vec<(String, f64)>) {
    let total = observed.total() as f64;
    let mut order: Vec<&(String, f64)> = expected.iter().filter(|(_, p)| *p > 0.0).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut pooled_p = 0.0;
    let mut pooled = 0usize;
    while pooled < order.len() {
        let next_small = order[pooled].1 * total < minimum;
        let pool_small = pooled > 0 && pooled_p * total < minimum;
        if !(next_small || pool_small) {
            break;
        }
        pooled_p += order[pooled].1;
        pooled += 1;
    }
    let merged: std::collections::HashSet<&str> =
        order[..pooled].iter().map(|(k, _)| k.as_str()).collect();
    let known: std::collections::HashSet<&str> = expected.iter().map(|(k, _)| k.as_str()).collect();

    let mut new_expected: Vec<(String, f64)> = expected
        .iter()
        .filter(|(k, p)| *p > 0.0 && !merged.contains(k.as_str()))
        .cloned()
        .collect();
    let mut counts: Vec<(String, u64)> = new_expected
        .iter()
        .map(|(k, _)| (k.clone(), observed.count(k)))
        .collect();
    if pooled > 0 {
        let pooled_count = observed
            .iter()
            .filter(|(k, _)| merged.contains(k))
            .map(|(_, c)| c)
            .sum();
        new_expected.push((OTHER_CELL.to_owned(), pooled_p));
        counts.push((OTHER_CELL.to_owned(), pooled_count));
    }
    for (k, c) in observed.iter() {
        if !known.contains(k) || (c > 0 && expected.iter().any(|(e, p)| e == k && *p <= 0.0)) {
            counts.push((k.to_owned(), c));
        }
    }
    (FrequencyTable::from_counts(counts), new_expected)
}

/// Pearson test of independence on a contingency table of counts.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<TestReport> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(Error::Domain(
            "independence test needs a rectangular table of at least 2 x 2".into(),
        ));
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    if row_sums.iter().chain(&col_sums).any(|&s| s == 0.0) {
        return Err(Error::Domain(
            "contingency table has a zero marginal".into(),
        ));
    }
    let total: f64 = row_sums.iter().sum();
    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = row_sums[i] * col_sums[j] / total;
            if e < MIN_EXPECTED {
                return Err(Error::CellMergeRequired {
                    category: format!("({}, {})", i + 1, j + 1),
                    expected: e,
                    minimum: MIN_EXPECTED,
                });
            }
            statistic += (o as f64 - e).powi(2) / e;
        }
    }
    Ok(TestReport::new(statistic, (rows - 1) * (cols - 1)))
}

/// Drops all-zero rows and columns.
pub fn drop_empty_margins(table: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let cols = table.first().map_or(0, Vec::len);
    let keep: Vec<usize> = (0..cols)
        .filter(|&j| table.iter().any(|r| r[j] > 0))
        .collect();
    table
        .iter()
        .filter(|r| r.iter().any(|&c| c > 0))
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn table(pairs: &[(&str, u64)]) -> FrequencyTable {
        FrequencyTable::from_counts(pairs.iter().map(|(k, c)| (k.to_string(), *c)).collect())
    }

    fn probs(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
        pairs.iter().map(|(k, p)| (k.to_string(), *p)).collect()
    }

    #[test]
    fn sf_closed_forms() {
        // dof 2: exp(-x/2)
        for x in [0.1, 1.0, 5.0, 30.0] {
            assert!((chi_square_sf(x, 2) - (-x / 2.0f64).exp()).abs() < 1e-14);
        }
        // dof 1 at 4: erfc(sqrt(2)) = 0.0455002638963584...
        assert!((chi_square_sf(4.0, 1) - 0.045_500_263_896_358_4).abs() < 1e-12);
        for dof in 1..20 {
            assert_eq!(chi_square_sf(0.0, dof), 1.0);
        }
    }

    #[test]
    fn gof_examples() {
        let r = chi_square_gof(
            &table(&[("1", 50), ("2", 50)]),
            &probs(&[("1", 0.5), ("2", 0.5)]),
        )
        .unwrap();
        assert_eq!((r.statistic, r.dof, r.p_value), (0.0, 1, 1.0));
        let r = chi_square_gof(
            &table(&[("1", 60), ("2", 40)]),
            &probs(&[("1", 0.5), ("2", 0.5)]),
        )
        .unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert!((r.p_value - 0.045_50).abs() < 1e-5);
        assert!(r.rejects(0.05) && !r.rejects(0.01));
        let uniform4 = probs(&[("1", 0.25), ("2", 0.25), ("3", 0.25), ("4", 0.25)]);
        let r = chi_square_gof(
            &table(&[("1", 25), ("2", 25), ("3", 25), ("4", 25)]),
            &uniform4,
        )
        .unwrap();
        assert_eq!((r.statistic, r.dof, r.p_value), (0.0, 3, 1.0));
    }

    #[test]
    fn gof_errors() {
        let half = probs(&[("1", 0.5), ("2", 0.5)]);
        assert!(matches!(
            chi_square_gof(&table(&[("1", 4), ("2", 4)]), &half),
            Err(Error::CellMergeRequired { .. })
        ));
        assert!(matches!(
            chi_square_gof(&table(&[("1", 40), ("3", 4)]), &half),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            chi_square_gof(&table(&[("1", 40)]), &probs(&[("1", 0.5), ("2", 0.4)])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gof_counts_unseen_expected_cells_as_zero() {
        let r = chi_square_gof(&table(&[("1", 100)]), &probs(&[("1", 0.5), ("2", 0.5)])).unwrap();
        assert!((r.statistic - 100.0).abs() < 1e-12);
    }

    #[test]
    fn tally_examples() {
        use crate::arborescence::Arborescence;
        use crate::sampler::SampleResult;
        let done = |root: usize| {
            let parent = (0..2).map(|i| (i != root).then_some(root)).collect();
            Replication::Completed(SampleResult {
                tree: Arborescence::new(root, parent).unwrap(),
                tau: 2,
                blocks_examined: 1,
                conditioning_blocks: 1,
                offsets: None,
            })
        };
        let reps = vec![done(0), done(0), done(1)];
        let t = tally(&reps, TallyKey::Root, &[]).unwrap();
        assert_eq!((t.count("1"), t.count("2"), t.total()), (2, 1, 3));
        let t = tally(&reps, TallyKey::Tree, &[]).unwrap();
        assert_eq!(t.categories(), &["1:0,1".to_string(), "2:2,0".to_string()]);
        let mut mixed = reps.clone();
        mixed.push(Replication::Censored {
            blocks_examined: 1,
            conditioning_blocks: 1,
            time: 2,
        });
        let t = tally(
            &mixed,
            TallyKey::Root,
            &["1".into(), "2".into(), "3".into()],
        )
        .unwrap();
        assert_eq!(t.total(), 3);
        assert_eq!(t.count("3"), 0);
        assert_eq!(t.categories().len(), 3);
        let censored = vec![Replication::Censored {
            blocks_examined: 1,
            conditioning_blocks: 1,
            time: 2,
        }];
        assert!(tally(&censored, TallyKey::Root, &[]).is_err());
    }

    #[test]
    fn independence_examples() {
        let r = chi_square_independence(&[vec![50, 50], vec![50, 50]]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = chi_square_independence(&[vec![70, 30], vec![30, 70]]).unwrap();
        assert!((r.statistic - 32.0).abs() < 1e-12);
        assert_eq!(r.dof, 1);
        assert!(r.p_value < 1e-7);
        let r = chi_square_independence(&[vec![10, 20, 30], vec![30, 60, 90], vec![5, 10, 15]])
            .unwrap();
        assert!(r.statistic.abs() < 1e-9);
        assert!(matches!(
            chi_square_independence(&[vec![0, 0], vec![5, 5]]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            chi_square_independence(&[vec![1, 2], vec![3, 4]]),
            Err(Error::CellMergeRequired { .. })
        ));
    }

    #[test]
    fn merge_pools_rare_cells() {
        let expected = probs(&[("a", 0.88), ("b", 0.06), ("c", 0.05), ("d", 0.01)]);
        let obs = table(&[("a", 89), ("b", 5), ("c", 3), ("d", 3)]);
        let (m, e) = merge_sparse_cells(&obs, &expected, 5.0);
        assert_eq!(e.len(), 3);
        assert_eq!(e[2].0, OTHER_CELL);
        assert!((e[2].1 - 0.06).abs() < 1e-12);
        assert_eq!(m.count(OTHER_CELL), 6);
        let r = chi_square_gof(&m, &e).unwrap();
        assert_eq!(r.dof, 2);
    }

    #[test]
    fn merge_keeps_unknown_categories_visible() {
        let expected = probs(&[("a", 0.5), ("b", 0.5)]);
        let obs = table(&[("a", 50), ("b", 45), ("zz", 5)]);
        let (m, e) = merge_sparse_cells(&obs, &expected, 5.0);
        assert!(matches!(chi_square_gof(&m, &e), Err(Error::Domain(_))));
    }

    #[test]
    fn drop_empty() {
        let t = drop_empty_margins(&[vec![1, 0, 2], vec![0, 0, 0], vec![3, 0, 4]]);
        assert_eq!(t, vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn null_rejection_rate() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let expected = probs(&[("0", 0.1), ("1", 0.2), ("2", 0.3), ("3", 0.4)]);
        let mut rng = RngStream::new(2024, 0);
        let trials = 10_000;
        let mut rejected = 0;
        for _ in 0..trials {
            let mut counts = [0u64; 4];
            for _ in 0..200 {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut k = 3;
                for (i, &q) in p.iter().enumerate() {
                    acc += q;
                    if u < acc {
                        k = i;
                        break;
                    }
                }
                counts[k] += 1;
            }
            let obs = FrequencyTable::from_counts(
                counts
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (i.to_string(), c))
                    .collect(),
            );
            rejected += chi_square_gof(&obs, &expected).unwrap().rejects(0.01) as u32;
        }
        let rate = rejected as f64 / trials as f64;
        assert!((0.005..=0.02).contains(&rate), "rate {rate}");
    }
}
