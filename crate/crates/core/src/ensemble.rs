//! Passive ensembles of synchronized trajectories.

use crate::chain::{step, TransitionMatrix};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A read-only stream of synchronized state vectors.
///
/// The first call yields the vector at `t = 0`, each later call the next time
/// step. A consumer can only watch: there is no way to set, reset or steer
/// the states. `None` means the stream has ended.
pub trait EnsembleSource {
    fn next(&mut self) -> Option<&[usize]>;
}

impl<S: EnsembleSource + ?Sized> EnsembleSource for &mut S {
    fn next(&mut self) -> Option<&[usize]> {
        (**self).next()
    }
}

impl<S: EnsembleSource + ?Sized> EnsembleSource for Box<S> {
    fn next(&mut self) -> Option<&[usize]> {
        (**self).next()
    }
}

/// `n` conditionally independent copies of one chain, advanced in index
/// order on every tick.
#[derive(Debug, Clone)]
pub struct SimulatedEnsemble<'a> {
    p: &'a TransitionMatrix,
    states: Vec<usize>,
    rng: RngStream,
    started: bool,
}

impl EnsembleSource for SimulatedEnsemble<'_> {
    fn next(&mut self) -> Option<&[usize]> {
        if self.started {
            for x in self.states.iter_mut() {
                *x = step(self.p, *x, &mut self.rng);
            }
        } else {
            self.started = true;
        }
        Some(&self.states)
    }
}

/// Starts `init.len()` copies of `p` at `init` (0-based states).
pub fn make_ensemble_source<'a>(
    p: &'a TransitionMatrix,
    init: Vec<usize>,
    rng: RngStream,
) -> Result<SimulatedEnsemble<'a>> {
    if let Some(&bad) = init.iter().find(|&&s| s >= p.n()) {
        return Err(Error::Domain(format!(
            "initial state {} is outside 1..={}",
            bad + 1,
            p.n()
        )));
    }
    Ok(SimulatedEnsemble {
        p,
        states: init,
        rng,
        started: false,
    })
}

/// Lifts a two-state trajectory (states `0` and `1`) to `n` states.
///
/// State `0` is kept; every visit to state `1` is replaced by a fresh uniform
/// draw from `1..n`.
pub fn lift_two_state(traj: &[usize], n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if n < 3 {
        return Err(Error::Domain(format!("lifting needs n >= 3, got {n}")));
    }
    traj.iter()
        .map(|&x| match x {
            0 => Ok(0),
            1 => Ok(1 + rng.below(n - 1)),
            other => Err(Error::Domain(format!(
                "trajectory state {} is not in {{1, 2}}",
                other + 1
            ))),
        })
        .collect()
}
