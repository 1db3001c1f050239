use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

use commands::{CliError, InitArg, ModeArg};

#[derive(Parser)]
#[command(
    name = "arbor",
    version,
    about = "Passive exact sampling of arborescences and stationary states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a chain spec: stochastic rows, irreducibility, period, Assumption A.
    Validate { spec: PathBuf },

    /// Exact tree distribution and stationary distribution by two routes.
    Dist {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Skip the tree listing (allowed above the enumeration cap).
        #[arg(long)]
        stationary_only: bool,
    },

    /// Run independent sampler replications and write them as JSON lines.
    Sample {
        spec: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(short = 'r', long, default_value_t = 1)]
        replications: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_blocks: Option<u64>,
        #[arg(long, value_enum, default_value_t = InitArg::AllOnes)]
        init: InitArg,
        /// Comma-separated 1-based states for `--init fixed`.
        #[arg(long, value_delimiter = ',')]
        init_vector: Option<Vec<usize>>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        allow_periodic: bool,
    },

    /// Statistical verification of the sampler against the exact oracles.
    Verify {
        spec: PathBuf,
        #[arg(short = 'r', long, default_value_t = 100_000)]
        replications: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = arbor_core::verify::DEFAULT_SIGNIFICANCE)]
        alpha: f64,
        /// Defaults to restricted when every transition out of state 1 is
        /// positive, general otherwise.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, default_value_t = 1_000_000)]
        max_blocks: u64,
        #[arg(long, value_enum, default_value_t = InitArg::AllOnes)]
        init: InitArg,
        #[arg(long, value_delimiter = ',')]
        init_vector: Option<Vec<usize>>,
        #[arg(long)]
        allow_periodic: bool,
        /// Substitute a test fixture for the real sampler.
        #[arg(long, value_enum, hide = true)]
        sampler_fixture: Option<FixtureArg>,
    },

    /// Lift a two-state trajectory to n states and compare occupation
    /// frequencies with the predicted stationary distribution.
    LiftDemo {
        spec: PathBuf,
        #[arg(long = "n")]
        states: usize,
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = arbor_core::verify::DEFAULT_SIGNIFICANCE)]
        alpha: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureArg {
    /// Keeps only trees rooted at state 1.
    BiasedRootOne,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { spec } => commands::validate(&spec),
        Command::Dist {
            spec,
            output,
            stationary_only,
        } => commands::dist(&spec, &output, stationary_only),
        Command::Sample {
            spec,
            mode,
            replications,
            seed,
            max_blocks,
            init,
            init_vector,
            output,
            allow_periodic,
        } => commands::sample(&commands::SampleArgs {
            spec,
            mode,
            replications,
            seed,
            max_blocks,
            init,
            init_vector,
            output,
            allow_periodic,
        }),
        Command::Verify {
            spec,
            replications,
            seed,
            alpha,
            mode,
            max_blocks,
            init,
            init_vector,
            allow_periodic,
            sampler_fixture,
        } => commands::verify(&commands::VerifyArgs {
            spec,
            replications,
            seed,
            alpha,
            mode,
            max_blocks,
            init,
            init_vector,
            allow_periodic,
            biased_fixture: matches!(sampler_fixture, Some(FixtureArg::BiasedRootOne)),
        }),
        Command::LiftDemo {
            spec,
            states,
            steps,
            seed,
            alpha,
        } => commands::lift_demo(&spec, states, steps, seed, alpha),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = commands::thread_pool();
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("arbor: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}
