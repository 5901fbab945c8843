use std::path::PathBuf;
use std::process::ExitCode;

use braun_heap::bench::{emit_csv, sweep, BenchConfig, ConfigError, Matrix, Structure, Task};
use clap::Parser;

/// Benchmark the concurrent Braun heap against a mutex-guarded array heap.
///
/// With no --task, --structure or --threads, every task runs on both
/// structures at 1, 2, 4 and 8 threads.
#[derive(Parser, Debug)]
#[command(name = "braun-bench", version)]
struct Args {
    /// Workloads to run (comma separated): sum, snap-insert, mixed, snap-only, insert, remove-min.
    #[arg(long, value_delimiter = ',')]
    task: Vec<Task>,

    /// Structures to run (comma separated): braun, locked-array.
    #[arg(long, value_delimiter = ',')]
    structure: Vec<Structure>,

    /// Thread counts (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8])]
    threads: Vec<usize>,

    /// Entries the structure holds before each run.
    #[arg(long, default_value_t = 1 << 20)]
    init_size: usize,

    /// Operations per run, split evenly across threads.
    #[arg(long, default_value_t = 1344)]
    ops: usize,

    /// Discarded runs before measuring.
    #[arg(long, default_value_t = 10)]
    warmup: usize,

    /// Measured runs.
    #[arg(long, default_value_t = 40)]
    runs: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Matrix file, one `key=value ...` configuration per line; other flags
    /// supply the defaults.
    #[arg(long)]
    sweep: Option<PathBuf>,
}

fn matrix(args: &Args) -> Result<Matrix, String> {
    let base = BenchConfig {
        task: args.task.first().copied().unwrap_or(Task::Sum),
        structure: args.structure.first().copied().unwrap_or(Structure::Braun),
        threads: args.threads.first().copied().unwrap_or(1),
        init_size: args.init_size,
        total_ops: args.ops,
        warmup_runs: args.warmup,
        measured_runs: args.runs,
        seed: args.seed,
    };
    if let Some(path) = &args.sweep {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        return Matrix::parse(&text, &base).map_err(|e| format!("{}: {e}", path.display()));
    }
    let tasks = if args.task.is_empty() { Task::ALL } else { &args.task[..] };
    let structures = if args.structure.is_empty() {
        Structure::ALL
    } else {
        &args.structure[..]
    };
    let m = Matrix::product(&base, tasks, structures, &args.threads);
    for c in &m.configs {
        c.validate().map_err(|e: ConfigError| e.to_string())?;
    }
    Ok(m)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let m = match matrix(&args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("braun-bench: {e}");
            return ExitCode::from(2);
        }
    };
    let results = match sweep(&m, |i, n, c| {
        eprintln!(
            "[{}/{}] task={} structure={} threads={} init_size={}",
            i + 1,
            n,
            c.task,
            c.structure,
            c.threads,
            c.init_size
        )
    }) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("braun-bench: {e}");
            return ExitCode::from(2);
        }
    };
    let csv = emit_csv(&results);
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, csv) {
                eprintln!("braun-bench: cannot write {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
        None => print!("{csv}"),
    }
    ExitCode::SUCCESS
}
