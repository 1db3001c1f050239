//! Independent replications of a sampler, each on its own random streams.

use rayon::prelude::*;
use serde::Serialize;

use crate::arborescence::canonical_encode;
use crate::chain::{Distribution, TransitionMatrix};
use crate::ensemble::make_ensemble_source;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sampler::{run_general, run_restricted, SampleResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMode {
    Restricted,
    General,
}

impl SamplerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SamplerMode::Restricted => "restricted",
            SamplerMode::General => "general",
        }
    }
}

/// How each replication's copies are started (0-based states).
#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy {
    AllOnes,
    Fixed(Vec<usize>),
    /// Every coordinate drawn independently from the distribution, afresh per
    /// replication.
    Random(Distribution),
}

impl InitPolicy {
    fn initial_states(&self, n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        match self {
            InitPolicy::AllOnes => Ok(vec![0; n]),
            InitPolicy::Fixed(v) if v.len() == n => Ok(v.clone()),
            InitPolicy::Fixed(v) => Err(Error::Domain(format!(
                "fixed initial vector has {} entries, expected {n}",
                v.len()
            ))),
            InitPolicy::Random(d) if d.len() == n => Ok((0..n).map(|_| d.sample(rng)).collect()),
            InitPolicy::Random(d) => Err(Error::Domain(format!(
                "initial distribution over {} states, expected {n}",
                d.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub max_blocks: Option<u64>,
    pub init: InitPolicy,
}

/// One replication: a sample, or a run aborted by the block budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Replication {
    Completed(SampleResult),
    Censored {
        blocks_examined: u64,
        /// Failed blocks that started in event `A`.
        conditioning_blocks: u64,
        time: u64,
    },
}

impl Replication {
    pub fn sample(&self) -> Option<&SampleResult> {
        match self {
            Replication::Completed(r) => Some(r),
            Replication::Censored { .. } => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Replication::Censored { .. })
    }

    pub fn record(&self) -> SampleRecord {
        match self {
            Replication::Completed(r) => SampleRecord {
                tau: r.tau,
                root: Some(r.root() + 1),
                tree: Some(canonical_encode(&r.tree)),
                blocks: r.blocks_examined,
                censored: false,
                offsets: r.offsets.as_ref().map(|u| u.values().to_vec()),
            },
            Replication::Censored {
                blocks_examined,
                time,
                ..
            } => SampleRecord {
                tau: *time,
                root: None,
                tree: None,
                blocks: *blocks_examined,
                censored: true,
                offsets: None,
            },
        }
    }
}

/// One JSON-lines row. For censored rows `tau` is the time reached when the
/// budget ran out and `root`/`tree` are null.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleRecord {
    pub tau: u64,
    pub root: Option<usize>,
    pub tree: Option<String>,
    pub blocks: u64,
    pub censored: bool,
    pub offsets: Option<Vec<usize>>,
}

/// Anything that can produce replication `index` of an experiment seeded by
/// `seed`, deterministically.
pub trait ReplicationSampler: Sync {
    fn run_one(&self, p: &TransitionMatrix, seed: u64, index: u64) -> Result<Replication>;
}

/// Stream ids used by replication `index`.
const SOURCE_STREAM: u64 = 0;
const OFFSET_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

fn stream(seed: u64, index: u64, purpose: u64) -> RngStream {
    RngStream::new(
        seed,
        index.checked_mul(4).expect("replication index overflow") + purpose,
    )
}

/// The real samplers, driven by a [`SamplerConfig`].
#[derive(Debug, Clone)]
pub struct ConfiguredSampler(pub SamplerConfig);

impl ReplicationSampler for ConfiguredSampler {
    fn run_one(&self, p: &TransitionMatrix, seed: u64, index: u64) -> Result<Replication> {
        let cfg = &self.0;
        let init = cfg
            .init
            .initial_states(p.n(), &mut stream(seed, index, INIT_STREAM))?;
        let src = make_ensemble_source(p, init, stream(seed, index, SOURCE_STREAM))?;
        let outcome = match cfg.mode {
            SamplerMode::Restricted => run_restricted(src, cfg.max_blocks),
            SamplerMode::General => {
                run_general(src, &mut stream(seed, index, OFFSET_STREAM), cfg.max_blocks)
            }
        };
        match outcome {
            Ok(r) => Ok(Replication::Completed(r)),
            Err(Error::Budget {
                blocks_examined,
                conditioning_blocks,
                time,
            }) => Ok(Replication::Censored {
                blocks_examined,
                conditioning_blocks,
                time,
            }),
            Err(e) => Err(e),
        }
    }
}

/// Deliberately biased fixture: reruns the inner sampler on fresh seeds
/// until it returns a tree rooted at state 1. Exists to show the
/// verification harness can reject a wrong sampler.
#[derive(Debug, Clone)]
pub struct RootOneBiased<S>(pub S);

impl<S: ReplicationSampler> ReplicationSampler for RootOneBiased<S> {
    fn run_one(&self, p: &TransitionMatrix, seed: u64, index: u64) -> Result<Replication> {
        for attempt in 0u64.. {
            let reseeded = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let r = self.0.run_one(p, reseeded, index)?;
            match r.sample() {
                Some(s) if s.root() != 0 => continue,
                _ => return Ok(r),
            }
        }
        unreachable!()
    }
}

/// `count` independent replications of the configured sampler, in index
/// order. Parallel across the current rayon pool; the result does not depend
/// on the number of threads.
pub fn replicate(
    config: &SamplerConfig,
    p: &TransitionMatrix,
    count: u64,
    seed: u64,
) -> Result<Vec<Replication>> {
    replicate_with(&ConfiguredSampler(config.clone()), p, 0..count, seed)
}

pub fn replicate_with(
    sampler: &dyn ReplicationSampler,
    p: &TransitionMatrix,
    indices: std::ops::Range<u64>,
    seed: u64,
) -> Result<Vec<Replication>> {
    indices
        .into_par_iter()
        .map(|i| sampler.run_one(p, seed, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform2() -> TransitionMatrix {
        TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    fn cfg(mode: SamplerMode, max_blocks: Option<u64>) -> SamplerConfig {
        SamplerConfig {
            mode,
            max_blocks,
            init: InitPolicy::AllOnes,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = uniform2();
        for mode in [SamplerMode::Restricted, SamplerMode::General] {
            let a = replicate(&cfg(mode, None), &p, 3, 9).unwrap();
            let b = replicate(&cfg(mode, None), &p, 3, 9).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let p = uniform2();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| replicate(&cfg(SamplerMode::Restricted, None), &p, 200, 5).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn censoring_with_one_block() {
        let p = uniform2();
        let reps = replicate(&cfg(SamplerMode::Restricted, Some(1)), &p, 10_000, 1).unwrap();
        let censored = reps.iter().filter(|r| r.is_censored()).count();
        // a single block succeeds with probability 1/8 from (1,1)
        assert!(censored > 8_000 && censored < 9_500, "{censored}");
        for r in &reps {
            match r {
                Replication::Censored {
                    blocks_examined, ..
                } => assert_eq!(*blocks_examined, 1),
                Replication::Completed(s) => assert_eq!(s.tau, 2),
            }
            let rec = r.record();
            assert_eq!(rec.censored, rec.root.is_none());
        }
    }

    #[test]
    fn fixed_and_random_init() {
        let p = uniform2();
        let fixed = SamplerConfig {
            init: InitPolicy::Fixed(vec![1, 1]),
            ..cfg(SamplerMode::Restricted, None)
        };
        for r in replicate(&fixed, &p, 20, 3).unwrap() {
            assert!(r.sample().unwrap().tau >= 4);
        }
        let bad = SamplerConfig {
            init: InitPolicy::Fixed(vec![0]),
            ..cfg(SamplerMode::Restricted, None)
        };
        assert!(replicate(&bad, &p, 1, 3).is_err());
        let random = SamplerConfig {
            init: InitPolicy::Random(Distribution::uniform(2)),
            ..cfg(SamplerMode::General, None)
        };
        assert_eq!(replicate(&random, &p, 50, 3).unwrap().len(), 50);
    }

    #[test]
    fn record_layout() {
        let p = uniform2();
        let reps = replicate(&cfg(SamplerMode::General, None), &p, 1, 0).unwrap();
        let line = serde_json::to_string(&reps[0].record()).unwrap();
        let keys: Vec<&str> = [
            "\"tau\"",
            "\"root\"",
            "\"tree\"",
            "\"blocks\"",
            "\"censored\"",
            "\"offsets\"",
        ]
        .to_vec();
        let mut last = 0;
        for k in keys {
            let pos = line.find(k).unwrap();
            assert!(pos >= last);
            last = pos;
        }
    }

    #[test]
    fn biased_fixture_only_returns_root_one() {
        let p = uniform2();
        let biased = RootOneBiased(ConfiguredSampler(cfg(SamplerMode::Restricted, None)));
        for r in replicate_with(&biased, &p, 0..100, 4).unwrap() {
            assert_eq!(r.sample().unwrap().root(), 0);
        }
    }
}
