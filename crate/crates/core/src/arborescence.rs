//! Arborescences, tree weights and the Markov chain tree theorem.
//!
//! An arborescence rooted at `r` gives every other state exactly one outgoing
//! edge, and following those edges from any state ends at `r`. Its weight
//! under `P` is the product of `p_ij` over its edges. Two independent routes
//! produce the per-root weight sums `w_r`: brute-force enumeration (capped at
//! small `n`) and a determinant of the out-degree Laplacian with row and
//! column `r` removed.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{Distribution, TransitionMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 7;

/// Weights below this are treated as zero.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arborescence {
    root: usize,
    parent: Vec<Option<usize>>,
}

impl Arborescence {
    /// `parent[root]` must be `None`; every other entry names the head of
    /// that state's single outgoing edge.
    pub fn new(root: usize, parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        if root >= n {
            return Err(Error::Structure(format!(
                "root {} outside 1..={n}",
                root + 1
            )));
        }
        for (i, p) in parent.iter().enumerate() {
            match (*p, i == root) {
                (None, true) => {}
                (Some(_), true) => {
                    return Err(Error::Structure("root has an outgoing edge".into()));
                }
                (None, false) => {
                    return Err(Error::Structure(format!("state {} has no out-edge", i + 1)));
                }
                (Some(j), false) if j >= n => {
                    return Err(Error::Structure(format!(
                        "edge target {} outside 1..={n}",
                        j + 1
                    )));
                }
                _ => {}
            }
        }
        let tree = Self { root, parent };
        if !tree.reaches_root() {
            return Err(Error::Structure("edges contain a cycle".into()));
        }
        Ok(tree)
    }

    /// Builds an arborescence from `n - 1` directed edges `(from, to)`.
    /// The root is the unique state with no outgoing edge.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 || edges.len() != n - 1 {
            return Err(Error::Structure(format!(
                "{} edges cannot span {n} states",
                edges.len()
            )));
        }
        let mut parent = vec![None; n];
        for &(from, to) in edges {
            if from >= n || to >= n {
                return Err(Error::Structure("edge endpoint out of range".into()));
            }
            if parent[from].replace(to).is_some() {
                return Err(Error::Structure(format!(
                    "state {} has two outgoing edges",
                    from + 1
                )));
            }
        }
        let root = parent
            .iter()
            .position(Option::is_none)
            .expect("n-1 sources among n states");
        Self::new(root, parent)
    }

    fn reaches_root(&self) -> bool {
        let n = self.parent.len();
        // 0 unknown, 1 on current path, 2 known to reach the root
        let mut mark = vec![0u8; n];
        mark[self.root] = 2;
        for start in 0..n {
            let mut path = Vec::new();
            let mut v = start;
            while mark[v] == 0 {
                mark[v] = 1;
                path.push(v);
                v = self.parent[v].expect("non-root has a parent");
            }
            if mark[v] == 1 {
                return false;
            }
            for u in path {
                mark[u] = 2;
            }
        }
        true
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, state: usize) -> Option<usize> {
        self.parent[state]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Directed edges `(from, to)`, in increasing `from` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|j| (i, j)))
    }
}

impl fmt::Display for Arborescence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_encode(self))
    }
}

/// `"root:p1,p2,...,pn"` with 1-based labels; the root's own slot is `0`.
pub fn canonical_encode(tree: &Arborescence) -> String {
    let parents: Vec<String> = tree
        .parent
        .iter()
        .map(|p| p.map_or(0, |j| j + 1).to_string())
        .collect();
    format!("{}:{}", tree.root + 1, parents.join(","))
}

pub fn canonical_decode(key: &str) -> Result<Arborescence> {
    let bad = || Error::Parse(format!("malformed tree key `{key}`"));
    let (root, rest) = key.split_once(':').ok_or_else(bad)?;
    let root: usize = root.trim().parse().map_err(|_| bad())?;
    let parent = rest
        .split(',')
        .map(|s| match s.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(j) => Ok(Some(j - 1)),
            Err(_) => Err(bad()),
        })
        .collect::<Result<Vec<_>>>()?;
    if root == 0 || parent.get(root - 1) != Some(&None) {
        return Err(bad());
    }
    Arborescence::new(root - 1, parent)
}

/// Product of `p_ij` over the tree's edges, floored to zero below
/// [`WEIGHT_FLOOR`].
pub fn tree_weight(p: &TransitionMatrix, tree: &Arborescence) -> Result<f64> {
    if tree.n() != p.n() {
        return Err(Error::Structure(format!(
            "tree on {} states, chain on {}",
            tree.n(),
            p.n()
        )));
    }
    let w: f64 = tree.edges().map(|(i, j)| p.get(i, j)).product();
    Ok(if w < WEIGHT_FLOOR { 0.0 } else { w })
}

/// Every positive-weight arborescence, sorted by root and then by parent
/// array.
pub fn enumerate_arborescences(p: &TransitionMatrix) -> Result<Vec<Arborescence>> {
    enumerate_with_cap(p, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_with_cap(p: &TransitionMatrix, cap: usize) -> Result<Vec<Arborescence>> {
    let n = p.n();
    if n > cap {
        return Err(Error::Capacity { n, cap });
    }
    let mut out = Vec::new();
    for root in 0..n {
        for_each_rooted(p, root, |parent, _| {
            out.push(Arborescence {
                root,
                parent: parent.to_vec(),
            })
        });
    }
    Ok(out)
}

/// Visits every acyclic positive-weight parent assignment for `root`, in
/// lexicographic order of the parent array, with its weight.
fn for_each_rooted(
    p: &TransitionMatrix,
    root: usize,
    mut visit: impl FnMut(&[Option<usize>], f64),
) {
    let n = p.n();
    // choices[i]: heads j != i with p_ij > 0, ascending
    let choices: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if i == root {
                Vec::new()
            } else {
                (0..n).filter(|&j| j != i && p.get(i, j) > 0.0).collect()
            }
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| i != root).collect();
    if free.iter().any(|&i| choices[i].is_empty()) {
        return;
    }
    let mut digit = vec![0usize; free.len()];
    let mut parent = vec![None; n];
    loop {
        for (k, &i) in free.iter().enumerate() {
            parent[i] = Some(choices[i][digit[k]]);
        }
        let candidate = Arborescence {
            root,
            parent: std::mem::take(&mut parent),
        };
        if candidate.reaches_root() {
            let w: f64 = candidate.edges().map(|(i, j)| p.get(i, j)).product();
            if w >= WEIGHT_FLOOR {
                visit(&candidate.parent, w);
            }
        }
        parent = candidate.parent;
        // odometer with the last free state as least significant digit
        let mut k = free.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            digit[k] += 1;
            if digit[k] < choices[free[k]].len() {
                break;
            }
            digit[k] = 0;
        }
    }
}

/// `w_root` as the determinant of the out-degree Laplacian minor.
///
/// `L_ii = sum_{j != i} p_ij`, `L_ij = -p_ij`; row and column `root` are
/// removed before taking the determinant by partial-pivot LU.
pub fn matrix_tree_root_weight(p: &TransitionMatrix, root: usize) -> Result<f64> {
    let n = p.n();
    if root >= n {
        return Err(Error::Domain(format!("root {} outside 1..={n}", root + 1)));
    }
    if n == 1 {
        return Ok(1.0);
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != root).collect();
    let minor = DMatrix::from_fn(n - 1, n - 1, |a, b| {
        let (i, j) = (keep[a], keep[b]);
        if i == j {
            (0..n).filter(|&k| k != i).map(|k| p.get(i, k)).sum()
        } else {
            -p.get(i, j)
        }
    });
    let det = minor.lu().determinant();
    Ok(if det.abs() < WEIGHT_FLOOR { 0.0 } else { det })
}

fn root_weights(p: &TransitionMatrix) -> Result<Vec<f64>> {
    (0..p.n()).map(|r| matrix_tree_root_weight(p, r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedTree {
    #[serde(serialize_with = "ser_tree")]
    pub tree: Arborescence,
    pub weight: f64,
    pub probability: f64,
}

fn ser_tree<S: serde::Serializer>(t: &Arborescence, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&canonical_encode(t))
}

/// The normalized weights of every positive-weight arborescence.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDistribution {
    pub trees: Vec<WeightedTree>,
    pub total_weight: f64,
    /// Per-root probability mass, equal to `w_i / w`.
    pub root_mass: Vec<f64>,
}

impl TreeDistribution {
    /// `(canonical key, probability)` pairs in enumeration order.
    pub fn probabilities(&self) -> Vec<(String, f64)> {
        self.trees
            .iter()
            .map(|t| (canonical_encode(&t.tree), t.probability))
            .collect()
    }
}

/// Exact tree distribution by enumeration, cross-checked against the
/// determinant route.
pub fn tree_distribution(p: &TransitionMatrix) -> Result<TreeDistribution> {
    if !p.validate().irreducible {
        return Err(Error::Domain(
            "tree distribution requires an irreducible chain".into(),
        ));
    }
    let n = p.n();
    if n > DEFAULT_ENUMERATION_CAP {
        return Err(Error::Capacity {
            n,
            cap: DEFAULT_ENUMERATION_CAP,
        });
    }
    let mut trees = Vec::new();
    let mut per_root = vec![0.0; n];
    for (root, slot) in per_root.iter_mut().enumerate() {
        for_each_rooted(p, root, |parent, w| {
            *slot += w;
            trees.push(WeightedTree {
                tree: Arborescence {
                    root,
                    parent: parent.to_vec(),
                },
                weight: w,
                probability: 0.0,
            });
        });
    }
    let total_weight: f64 = per_root.iter().sum();
    let det_total: f64 = root_weights(p)?.iter().sum();
    if ((total_weight - det_total) / total_weight).abs() > 1e-10 {
        return Err(Error::OracleMismatch(format!(
            "enumerated total weight {total_weight} vs determinant total {det_total}"
        )));
    }
    for t in trees.iter_mut() {
        t.probability = t.weight / total_weight;
    }
    let root_mass = per_root.iter().map(|w| w / total_weight).collect();
    Ok(TreeDistribution {
        trees,
        total_weight,
        root_mass,
    })
}

/// `pi_i = w_i / w` through matrix-tree determinants (no enumeration cap).
pub fn tree_theorem_stationary(p: &TransitionMatrix) -> Result<Distribution> {
    if !p.validate().irreducible {
        return Err(Error::Domain(
            "tree theorem requires an irreducible chain".into(),
        ));
    }
    let w = root_weights(p)?;
    let total: f64 = w.iter().sum();
    Distribution::new(w.into_iter().map(|x| x / total).collect())
}

/// Total weight `w = sum_i w_i` through determinants.
pub fn total_tree_weight(p: &TransitionMatrix) -> Result<f64> {
    Ok(root_weights(p)?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> TransitionMatrix {
        TransitionMatrix::new(vec![vec![1.0 / n as f64; n]; n]).unwrap()
    }

    #[test]
    fn weight_of_single_edge() {
        let t = Arborescence::from_edges(2, &[(1, 0)]).unwrap();
        assert_eq!(t.root(), 0);
        assert_eq!(tree_weight(&uniform(2), &t).unwrap(), 0.5);
    }

    #[test]
    fn weight_uniform_three() {
        for t in enumerate_arborescences(&uniform(3)).unwrap() {
            assert!((tree_weight(&uniform(3), &t).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_zero_edge() {
        let p = TransitionMatrix::new(vec![
            vec![0.5, 0.5, 0.0],
            vec![0.2, 0.3, 0.5],
            vec![0.4, 0.3, 0.3],
        ])
        .unwrap();
        let t = Arborescence::from_edges(3, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(tree_weight(&p, &t).unwrap(), 0.0);
    }

    #[test]
    fn malformed_trees_rejected() {
        assert!(Arborescence::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(Arborescence::from_edges(3, &[(0, 1)]).is_err());
        assert!(Arborescence::from_edges(3, &[(0, 1), (0, 2)]).is_err());
        assert!(Arborescence::from_edges(2, &[(1, 1)]).is_err());
        assert!(Arborescence::new(0, vec![None, Some(2), Some(1)]).is_err());
        assert!(Arborescence::new(0, vec![Some(1), None]).is_err());
    }

    #[test]
    fn enumeration_small_cases() {
        let two = enumerate_arborescences(&uniform(2)).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(canonical_encode(&two[0]), "1:0,1");
        assert_eq!(canonical_encode(&two[1]), "2:2,0");
        let three = enumerate_arborescences(&uniform(3)).unwrap();
        assert_eq!(three.len(), 9);
        for r in 0..3 {
            assert_eq!(three.iter().filter(|t| t.root() == r).count(), 3);
        }
        let four = enumerate_arborescences(&uniform(4)).unwrap();
        assert_eq!(four.iter().filter(|t| t.root() == 0).count(), 16);
    }

    #[test]
    fn enumeration_is_sorted_and_unique() {
        let trees = enumerate_arborescences(&uniform(4)).unwrap();
        let mut sorted = trees.clone();
        sorted.sort_by_key(|a| (a.root, canonical_encode(a)));
        assert_eq!(trees, sorted);
        let mut keys: Vec<String> = trees.iter().map(canonical_encode).collect();
        keys.dedup();
        assert_eq!(keys.len(), trees.len());
    }

    #[test]
    fn enumeration_cap() {
        let err = enumerate_arborescences(&uniform(8)).unwrap_err();
        assert_eq!(err, Error::Capacity { n: 8, cap: 7 });
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn matrix_tree_two_state() {
        let p = TransitionMatrix::new(vec![vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        assert!((matrix_tree_root_weight(&p, 0).unwrap() - 0.6).abs() < 1e-15);
        assert!((matrix_tree_root_weight(&p, 1).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn matrix_tree_uniform_three() {
        assert!((matrix_tree_root_weight(&uniform(3), 0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tree_distribution_two_state() {
        let p = TransitionMatrix::new(vec![vec![0.7, 0.3], vec![0.6, 0.4]]).unwrap();
        let d = tree_distribution(&p).unwrap();
        assert!((d.trees[0].probability - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.total_weight - 0.9).abs() < 1e-15);
        let pi = tree_theorem_stationary(&p).unwrap();
        assert!((pi.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tree_distribution_uniform_three() {
        let d = tree_distribution(&uniform(3)).unwrap();
        assert_eq!(d.trees.len(), 9);
        for t in &d.trees {
            assert!((t.probability - 1.0 / 9.0).abs() < 1e-15);
        }
        for m in &d.root_mass {
            assert!((m - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn reducible_rejected() {
        let p = TransitionMatrix::new(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(tree_distribution(&p), Err(Error::Domain(_))));
        assert!(matches!(tree_theorem_stationary(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn canonical_examples() {
        let t = Arborescence::from_edges(3, &[(0, 1), (2, 1)]).unwrap();
        assert_eq!(canonical_encode(&t), "2:2,0,2");
        assert_eq!(canonical_decode("2:2,0,2").unwrap(), t);
        assert!(canonical_decode("2:2,1,2").is_err());
        assert!(canonical_decode("x").is_err());
    }

    #[test]
    fn canonical_round_trip_enumerated() {
        for n in 1..=5 {
            for t in enumerate_arborescences(&uniform(n)).unwrap() {
                assert_eq!(canonical_decode(&canonical_encode(&t)).unwrap(), t);
            }
        }
    }

    #[test]
    fn single_state_chain() {
        let p = uniform(1);
        let trees = enumerate_arborescences(&p).unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(canonical_encode(&trees[0]), "1:0");
        assert_eq!(tree_theorem_stationary(&p).unwrap().probs(), &[1.0]);
    }
}
