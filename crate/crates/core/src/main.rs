use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hier_subspace::harness::{self, TableFormat};
use hier_subspace::{persist, selftest};

#[derive(Parser)]
#[command(name = "hier-subspace", version, about = "Hierarchical subspace learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write a result table.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: TableFormat,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print a summary of a stored projection history.
    Inspect {
        #[arg(long)]
        history: PathBuf,
    },
    /// Run the built-in numerical checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn fail(code: u8, e: &dyn std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

fn run(config: PathBuf, out: Option<PathBuf>, format: TableFormat, seed: Option<u64>, jobs: Option<usize>) -> ExitCode {
    let mut grid = match harness::parse_config(&config) {
        Ok(g) => g,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    if let Some(s) = seed {
        grid.master_seed = s;
    }
    if let Some(j) = jobs {
        grid.jobs = j;
    }
    let data = match harness::load_datasets(&grid) {
        Ok(d) => d,
        Err(e) => return fail(EXIT_DATA, &e),
    };
    let records = match harness::run_grid_on(&grid, &data) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_RUNTIME, &e),
    };
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see the status column", records.len());
    }
    match harness::emit_table(&records, format, out.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(EXIT_RUNTIME, &e),
    }
}

fn inspect(path: PathBuf) -> ExitCode {
    let h = match persist::load_history(&path) {
        Ok(h) => h,
        Err(e) => return fail(EXIT_DATA, &e),
    };
    println!("{}: {} stored iteration(s)", path.display(), h.len());
    for (m, s) in h.models.iter().zip(&h.schedule_log) {
        println!(
            "  iteration {}/{}: {} {} -> {} (asked {}), {} features used; r = {:.4}, spheres = {}, p = {:.2}, n_f = {}",
            s.tau,
            s.total,
            m.method,
            m.input_dim,
            m.out_dim,
            m.requested_dim,
            m.selected_features.len(),
            s.radius,
            s.n_spheres,
            s.p_tau,
            s.n_features,
        );
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, out, format, seed, jobs } => run(config, out, format, seed, jobs),
        Command::Inspect { history } => inspect(history),
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
