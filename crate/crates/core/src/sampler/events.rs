//! Block success events for both samplers.
//!
//! A block succeeds when four events hold together:
//! * `A`: every copy sits at state 1 at the start of the block;
//! * `B`: copy 1 is at state 1 at its designated probe time;
//! * `C`: copy 1's root candidate plus the edge tails of copies `2..n` list
//!   every state exactly once;
//! * `D`: the edges traced by copies `2..n` form an arborescence.
//!
//! When all four hold, the arborescence is returned and its root is the
//! state reported by copy 1.

use serde::Serialize;

use crate::arborescence::Arborescence;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampler::window::BlockWindow;

/// Which of the four block events held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EventTrace {
    pub a: bool,
    pub b: bool,
    pub c: bool,
    pub d: bool,
}

impl EventTrace {
    pub fn success(&self) -> bool {
        self.a && self.b && self.c && self.d
    }
}

/// The offsets `U_0, ..., U_n`, each uniform on `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct OffsetVector(Vec<usize>);

impl OffsetVector {
    pub fn new(values: Vec<usize>, n: usize) -> Result<Self> {
        if values.len() != n + 1 {
            return Err(Error::Structure(format!(
                "{} offsets for n = {n}, expected {}",
                values.len(),
                n + 1
            )));
        }
        if values.iter().any(|&u| u == 0 || u > n) {
            return Err(Error::Structure(format!("offsets must lie in 1..={n}")));
        }
        Ok(Self(values))
    }

    /// Draws `U_0, ..., U_n` in index order.
    pub fn draw(n: usize, rng: &mut RngStream) -> Self {
        Self((0..=n).map(|_| 1 + rng.below(n)).collect())
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

#[inline]
pub(crate) fn all_at_first_state(v: &[usize]) -> bool {
    v.iter().all(|&x| x == 0)
}

/// `C` and `D` for root candidate `root` and edges `tails[l] -> heads[l]`
/// of copies `2..n`.
fn permutation_and_tree(
    n: usize,
    root: usize,
    edges: impl Iterator<Item = (usize, usize)> + Clone,
) -> (bool, Option<Arborescence>) {
    let mut seen = vec![false; n];
    let mut c = root < n;
    if c {
        seen[root] = true;
    }
    for (tail, _) in edges.clone() {
        if tail >= n || std::mem::replace(&mut seen[tail], true) {
            c = false;
        }
    }
    let edges: Vec<(usize, usize)> = edges.collect();
    let tree = Arborescence::from_edges(n, &edges).ok();
    (c, tree)
}

/// Restricted-mode events on the vectors at times `t-2`, `t-1`, `t`.
pub fn detect_restricted(
    w2: &[usize],
    w1: &[usize],
    w0: &[usize],
) -> (Option<Arborescence>, EventTrace) {
    let n = w0.len();
    assert!(
        n > 0 && w1.len() == n && w2.len() == n,
        "vectors must share length n > 0"
    );
    let a = all_at_first_state(w2);
    let b = w1[0] == 0;
    let edges = (1..n).map(|l| (w1[l], w0[l]));
    let (c, tree) = permutation_and_tree(n, w0[0], edges);
    let trace = EventTrace {
        a,
        b,
        c,
        d: tree.is_some(),
    };
    if !trace.success() {
        return (None, trace);
    }
    let tree = tree.expect("D held");
    assert_eq!(tree.root(), w0[0], "root must be copy 1's state");
    (Some(tree), trace)
}

/// General-mode events on a window spanning `t-2n ..= t`.
pub fn detect_general(
    window: &BlockWindow,
    u: &OffsetVector,
) -> Result<(Option<Arborescence>, EventTrace)> {
    let n = window.n();
    let span = 2 * n;
    if window.len() < span + 1 {
        return Err(Error::Structure(format!(
            "general-mode window holds {} vectors, needs {}",
            window.len(),
            span + 1
        )));
    }
    if u.values().len() != n + 1 {
        return Err(Error::Structure(
            "offset vector length must be n + 1".into(),
        ));
    }
    let u = u.values();
    // state of copy l at time t - 2n + k
    let at = |k: usize, l: usize| window.back(span - k)[l];
    let a = all_at_first_state(window.back(span));
    let b = at(u[0], 0) == 0;
    let root = at(u[0] + u[1], 0);
    let edges = (1..n).map(|l| (at(u[l + 1], l), at(u[l + 1] + 1, l)));
    let (c, tree) = permutation_and_tree(n, root, edges);
    let trace = EventTrace {
        a,
        b,
        c,
        d: tree.is_some(),
    };
    if !trace.success() {
        return Ok((None, trace));
    }
    let tree = tree.expect("D held");
    assert_eq!(tree.root(), root, "root must be copy 1's probed state");
    Ok((Some(tree), trace))
}
