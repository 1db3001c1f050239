use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use arbor_core::chain_file::ChainSpec;
use arbor_core::sampler::{ConfiguredSampler, ReplicationSampler, RootOneBiased};
use arbor_core::stats::{chi_square_gof, FrequencyTable};
use arbor_core::verify::{VerifyConfig, VerifyReport};
use arbor_core::{
    lift_two_state, matrix_tree_root_weight, stationary_solve, step, tree_distribution,
    tree_theorem_stationary, validate_rows, Distribution, Error, InitPolicy, RngStream,
    SamplerConfig, SamplerMode, TransitionMatrix, ValidationReport, WeightedTree,
    DEFAULT_ENUMERATION_CAP, DEFAULT_ROW_TOLERANCE,
};

/// Replications computed per parallel batch before being written in order.
const WRITE_BATCH: u64 = 8192;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    /// Domain or statistical failure.
    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// Parse, I/O or other infrastructure failure.
    pub fn infra(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::OracleMismatch(_) | Error::SourceExhausted { .. } => {
                Self::infra(e.to_string())
            }
            _ => Self::domain(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::infra(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Restricted,
    General,
}

impl From<ModeArg> for SamplerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Restricted => SamplerMode::Restricted,
            ModeArg::General => SamplerMode::General,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    AllOnes,
    Fixed,
    Random,
}

/// Parallel pool sized by `ARBOR_THREADS` when set.
pub fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = std::env::var("ARBOR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
    {
        builder = builder.num_threads(k);
    }
    builder.build().expect("thread pool")
}

fn load_spec(path: &Path) -> Result<ChainSpec, CliError> {
    ChainSpec::load(path).map_err(|e| CliError::infra(e.to_string()))
}

fn load_chain(path: &Path) -> Result<(ChainSpec, TransitionMatrix, ValidationReport), CliError> {
    let spec = load_spec(path)?;
    let report = validate_rows(&spec.p, DEFAULT_ROW_TOLERANCE)?;
    if !report.row_stochastic {
        return Err(CliError::domain("transition matrix is not row-stochastic"));
    }
    if !report.irreducible {
        return Err(CliError::domain("chain is not irreducible"));
    }
    let p = spec.matrix()?;
    Ok((spec, p, report))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::infra(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn print_json(value: &impl Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("output serializes")
    );
}

#[derive(Serialize)]
struct ValidateOutput {
    n: usize,
    row_stochastic: bool,
    irreducible: bool,
    aperiodic: bool,
    assumption_a: bool,
    period: Option<usize>,
    warnings: Vec<String>,
}

pub fn validate(path: &Path) -> Result<(), CliError> {
    let spec = load_spec(path)?;
    let r = validate_rows(&spec.p, DEFAULT_ROW_TOLERANCE)?;
    let mut warnings = Vec::new();
    if !r.aperiodic {
        warnings.push("chain is periodic; general mode needs --allow-periodic".to_owned());
    }
    if !r.assumption_a {
        warnings.push("Assumption A fails (some p_1j = 0); only general mode applies".to_owned());
    }
    print_json(&ValidateOutput {
        n: spec.n,
        row_stochastic: r.row_stochastic,
        irreducible: r.irreducible,
        aperiodic: r.aperiodic,
        assumption_a: r.assumption_a,
        period: r.period,
        warnings,
    });
    if r.row_stochastic && r.irreducible {
        Ok(())
    } else {
        Err(CliError::domain(""))
    }
}

#[derive(Serialize)]
struct DistOutput {
    n: usize,
    labels: Option<Vec<String>>,
    /// `w = sum_i w_i`.
    total_weight: f64,
    /// `w_i` by matrix-tree determinants.
    root_weights: Vec<f64>,
    trees: Option<Vec<WeightedTree>>,
    pi_tree: Distribution,
    pi_linear: Distribution,
    discrepancy: f64,
}

pub fn dist(path: &Path, output: &Path, stationary_only: bool) -> Result<(), CliError> {
    let (spec, p, _) = load_chain(path)?;
    if !stationary_only && p.n() > DEFAULT_ENUMERATION_CAP {
        return Err(CliError::domain(format!(
            "n = {} exceeds the enumeration cap of {DEFAULT_ENUMERATION_CAP}; pass --stationary-only",
            p.n()
        )));
    }
    let root_weights = (0..p.n())
        .map(|r| matrix_tree_root_weight(&p, r))
        .collect::<arbor_core::Result<Vec<_>>>()?;
    let (trees, total_weight) = if stationary_only {
        (None, root_weights.iter().sum())
    } else {
        let d = tree_distribution(&p)?;
        (Some(d.trees), d.total_weight)
    };
    let pi_tree = tree_theorem_stationary(&p)?;
    let pi_linear = stationary_solve(&p)?;
    let discrepancy = pi_tree.max_abs_diff(&pi_linear);
    write_json(
        output,
        &DistOutput {
            n: p.n(),
            labels: spec.labels,
            total_weight,
            root_weights,
            trees,
            pi_tree,
            pi_linear,
            discrepancy,
        },
    )
}

fn init_policy(init: InitArg, vector: Option<&[usize]>, n: usize) -> Result<InitPolicy, CliError> {
    match init {
        InitArg::AllOnes => Ok(InitPolicy::AllOnes),
        InitArg::Random => Ok(InitPolicy::Random(Distribution::uniform(n))),
        InitArg::Fixed => {
            let v = vector.ok_or_else(|| CliError::domain("--init fixed needs --init-vector"))?;
            if v.len() != n || v.iter().any(|&s| s == 0 || s > n) {
                return Err(CliError::domain(format!(
                    "--init-vector must list {n} states in 1..={n}"
                )));
            }
            Ok(InitPolicy::Fixed(v.iter().map(|s| s - 1).collect()))
        }
    }
}

fn check_mode(
    mode: SamplerMode,
    report: &ValidationReport,
    allow_periodic: bool,
) -> Result<(), CliError> {
    match mode {
        SamplerMode::Restricted if !report.assumption_a => Err(CliError::domain(
            "restricted mode needs Assumption A (every p_1j > 0); use --mode general",
        )),
        SamplerMode::General if !report.aperiodic && !allow_periodic => Err(CliError::domain(
            "general mode needs an aperiodic chain; pass --allow-periodic to run anyway",
        )),
        _ => Ok(()),
    }
}

pub struct SampleArgs {
    pub spec: PathBuf,
    pub mode: ModeArg,
    pub replications: u64,
    pub seed: u64,
    pub max_blocks: Option<u64>,
    pub init: InitArg,
    pub init_vector: Option<Vec<usize>>,
    pub output: PathBuf,
    pub allow_periodic: bool,
}

#[derive(Serialize)]
struct SampleSummary {
    replications: u64,
    censored: u64,
    mean_tau: Option<f64>,
    /// Over uncensored runs, indexed by 1-based root.
    root_frequencies: Vec<f64>,
}

pub fn sample(args: &SampleArgs) -> Result<(), CliError> {
    if args.replications == 0 {
        return Err(CliError::domain("--replications must be at least 1"));
    }
    let (_, p, report) = load_chain(&args.spec)?;
    let mode = SamplerMode::from(args.mode);
    check_mode(mode, &report, args.allow_periodic)?;
    let config = SamplerConfig {
        mode,
        max_blocks: args.max_blocks,
        init: init_policy(args.init, args.init_vector.as_deref(), p.n())?,
    };
    let sampler = ConfiguredSampler(config);

    let mut out = BufWriter::new(File::create(&args.output)?);
    let mut censored = 0u64;
    let mut tau_sum = 0f64;
    let mut roots = vec![0u64; p.n()];
    let mut start = 0;
    while start < args.replications {
        let end = (start + WRITE_BATCH).min(args.replications);
        let batch = arbor_core::sampler::replicate_with(&sampler, &p, start..end, args.seed)?;
        for r in &batch {
            serde_json::to_writer(&mut out, &r.record())
                .map_err(|e| CliError::infra(e.to_string()))?;
            out.write_all(b"\n")?;
            match r.sample() {
                Some(s) => {
                    tau_sum += s.tau as f64;
                    roots[s.root()] += 1;
                }
                None => censored += 1,
            }
        }
        start = end;
    }
    out.flush()?;

    let done = args.replications - censored;
    print_json(&SampleSummary {
        replications: args.replications,
        censored,
        mean_tau: (done > 0).then(|| tau_sum / done as f64),
        root_frequencies: roots
            .iter()
            .map(|&c| {
                if done > 0 {
                    c as f64 / done as f64
                } else {
                    0.0
                }
            })
            .collect(),
    });
    Ok(())
}

pub struct VerifyArgs {
    pub spec: PathBuf,
    pub replications: u64,
    pub seed: u64,
    pub alpha: f64,
    pub mode: Option<ModeArg>,
    pub max_blocks: u64,
    pub init: InitArg,
    pub init_vector: Option<Vec<usize>>,
    pub allow_periodic: bool,
    pub biased_fixture: bool,
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    if !(args.alpha > 0.0 && args.alpha < 0.5) {
        return Err(CliError::domain("--alpha must lie in (0, 0.5)"));
    }
    if args.replications == 0 {
        return Err(CliError::domain("--replications must be at least 1"));
    }
    let (_, p, report) = load_chain(&args.spec)?;
    if p.n() > DEFAULT_ENUMERATION_CAP {
        return Err(CliError::domain(format!(
            "verification enumerates trees; n = {} exceeds the cap of {DEFAULT_ENUMERATION_CAP}",
            p.n()
        )));
    }
    let mode = args
        .mode
        .map(SamplerMode::from)
        .unwrap_or(if report.assumption_a {
            SamplerMode::Restricted
        } else {
            SamplerMode::General
        });
    check_mode(mode, &report, args.allow_periodic)?;
    let config = SamplerConfig {
        mode,
        max_blocks: Some(args.max_blocks),
        init: init_policy(args.init, args.init_vector.as_deref(), p.n())?,
    };
    let real = ConfiguredSampler(config);
    let biased = RootOneBiased(real.clone());
    let sampler: &dyn ReplicationSampler = if args.biased_fixture { &biased } else { &real };
    let cfg = VerifyConfig {
        replications: args.replications,
        seed: args.seed,
        significance: args.alpha,
        mode,
    };
    let report = arbor_core::verify::verify(&p, sampler, &cfg)
        .map_err(|e| CliError::infra(e.to_string()))?;
    print_table(&report, mode);
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::domain("verification failed"))
    }
}

fn print_table(report: &VerifyReport, mode: SamplerMode) {
    println!(
        "mode {}, {} replications, {} censored, significance {}",
        mode.as_str(),
        report.replications,
        report.censored,
        report.significance
    );
    for c in &report.criteria {
        let p = c.p.map_or_else(|| "-".to_owned(), |p| format!("{p:.4e}"));
        println!(
            "{}  {:<40} p = {:<11} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            p,
            c.detail
        );
    }
    println!(
        "{}",
        if report.all_passed() {
            "ALL PASS"
        } else {
            "FAILED"
        }
    );
}

#[derive(Serialize)]
struct LiftOutput {
    n: usize,
    steps: u64,
    predicted: Vec<f64>,
    empirical: Vec<f64>,
    stat: f64,
    dof: usize,
    p: f64,
    state1_positions_preserved: bool,
    passed: bool,
}

pub fn lift_demo(path: &Path, n: usize, steps: u64, seed: u64, alpha: f64) -> Result<(), CliError> {
    if n < 3 {
        return Err(CliError::domain(format!("--n must be at least 3, got {n}")));
    }
    if steps == 0 {
        return Err(CliError::domain("--steps must be at least 1"));
    }
    let (_, p, report) = load_chain(path)?;
    if p.n() != 2 || !report.aperiodic {
        return Err(CliError::domain(
            "lift-demo needs an aperiodic two-state chain",
        ));
    }
    let pi = stationary_solve(&p)?;
    let mut chain_rng = RngStream::new(seed, 0);
    let mut x = pi.sample(&mut chain_rng);
    let mut traj = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        traj.push(x);
        x = step(&p, x, &mut chain_rng);
    }
    let lifted = lift_two_state(&traj, n, &mut RngStream::new(seed, 1))?;
    let preserved = traj
        .iter()
        .zip(&lifted)
        .all(|(&a, &b)| (a == 0) == (b == 0));

    let pi2 = pi.probs()[1] / (n - 1) as f64;
    let predicted: Vec<f64> = std::iter::once(pi.probs()[0])
        .chain(std::iter::repeat_n(pi2, n - 1))
        .collect();
    let mut counts = vec![0u64; n];
    for &y in &lifted {
        counts[y] += 1;
    }
    let observed = FrequencyTable::from_counts(
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| ((i + 1).to_string(), c))
            .collect(),
    );
    let expected: Vec<(String, f64)> = predicted
        .iter()
        .enumerate()
        .map(|(i, &q)| ((i + 1).to_string(), q))
        .collect();
    let gof = chi_square_gof(&observed, &expected)?;
    let passed = preserved && !gof.rejects(alpha);
    print_json(&LiftOutput {
        n,
        steps,
        predicted,
        empirical: counts.iter().map(|&c| c as f64 / steps as f64).collect(),
        stat: gof.statistic,
        dof: gof.dof,
        p: gof.p_value,
        state1_positions_preserved: preserved,
        passed,
    });
    if passed {
        Ok(())
    } else {
        Err(CliError::domain(
            "lifted occupation frequencies do not match",
        ))
    }
}
