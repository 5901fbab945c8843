//! Benchmark workloads comparing the Braun heap against the locked array heap.
//!
//! Each run rebuilds the structure from the same `init_size` random entries,
//! pre-generates every thread's operations, then releases the workers through
//! a barrier and times until the last one finishes. Snapshots created by the
//! workers are released after the clock stops.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Barrier;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baseline::LockedArrayHeap;
use crate::concurrent::{AllocStats, CHeap};

/// Elements summed by the `sum` step of the mixed task.
pub const MIXED_SUM_PREFIX: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("thread count must be at least 1")]
    NoThreads,
    #[error("total ops {ops} is not divisible by thread count {threads}")]
    Indivisible { ops: usize, threads: usize },
    #[error("initial size must be at least 1")]
    EmptyInit,
    #[error("at least one measured run is required")]
    NoRuns,
    #[error("unknown {what} {value:?}")]
    Unknown { what: &'static str, value: String },
    #[error("line {line}: {msg}")]
    Matrix { line: usize, msg: String },
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident, $what:literal { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = ConfigError;
            fn from_str(s: &str) -> Result<Self, ConfigError> {
                match s {
                    $($s => Ok($name::$variant),)+
                    _ => Err(ConfigError::Unknown { what: $what, value: s.to_string() }),
                }
            }
        }
    };
}

named_enum!(
    /// The six workloads, in report order.
    Task, "task" {
        Sum => "sum",
        SnapInsert => "snap-insert",
        Mixed => "mixed",
        SnapOnly => "snap-only",
        Insert => "insert",
        RemoveMin => "remove-min",
    }
);

named_enum!(
    Structure, "structure" {
        Braun => "braun",
        LockedArray => "locked-array",
    }
);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BenchConfig {
    pub task: Task,
    pub structure: Structure,
    pub threads: usize,
    pub init_size: usize,
    pub total_ops: usize,
    pub warmup_runs: usize,
    pub measured_runs: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            task: Task::Mixed,
            structure: Structure::Braun,
            threads: 1,
            init_size: 1 << 20,
            total_ops: 1344,
            warmup_runs: 10,
            measured_runs: 40,
            seed: 42,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.threads == 0 {
            return Err(ConfigError::NoThreads);
        }
        if !self.total_ops.is_multiple_of(self.threads) {
            return Err(ConfigError::Indivisible {
                ops: self.total_ops,
                threads: self.threads,
            });
        }
        if self.init_size == 0 {
            return Err(ConfigError::EmptyInit);
        }
        if self.measured_runs == 0 {
            return Err(ConfigError::NoRuns);
        }
        Ok(())
    }

    pub fn ops_per_thread(&self) -> usize {
        self.total_ops / self.threads
    }
}

/// Operation counts actually executed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpTally {
    pub inserts: u64,
    pub remove_mins: u64,
    pub sums: u64,
    pub snapshots: u64,
}

impl OpTally {
    pub fn total(&self) -> u64 {
        self.inserts + self.remove_mins + self.sums + self.snapshots
    }

    fn add(&mut self, o: &OpTally) {
        self.inserts += o.inserts;
        self.remove_mins += o.remove_mins;
        self.sums += o.sums;
        self.snapshots += o.snapshots;
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub per_run_ms: Vec<f64>,
    /// Node allocation counters over the measured runs (Braun only).
    pub alloc_stats: Option<AllocStats>,
    /// Operations executed over the measured runs.
    pub tally: OpTally,
    /// Operations executed by each thread in one run.
    pub ops_per_thread: Vec<usize>,
    /// Element count after the last measured run.
    pub final_size: usize,
}

/// One step of the mixed task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedOp {
    Insert(i64),
    RemoveMin,
    /// Sum of the [`MIXED_SUM_PREFIX`] smallest elements.
    SumPrefix,
}

fn run_seed(seed: u64, run: usize) -> u64 {
    seed ^ (run as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generator for one thread of one run; thread streams never overlap.
pub fn thread_rng(seed: u64, run: usize, thread: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(seed, run));
    rng.set_stream(thread as u64 + 1);
    rng
}

/// The `init_size` entries every run starts from.
pub fn initial_entries(cfg: &BenchConfig) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.init_size).map(|_| rng.gen()).collect()
}

/// Mixed-task operations of `thread` in `run`: insert 3/8, remove-min 3/8,
/// prefix sum 1/4.
pub fn mixed_ops(cfg: &BenchConfig, run: usize, thread: usize) -> Vec<MixedOp> {
    let mut rng = thread_rng(cfg.seed, run, thread);
    (0..cfg.ops_per_thread())
        .map(|_| match rng.gen_range(0..8) {
            0..=2 => MixedOp::Insert(rng.gen()),
            3..=5 => MixedOp::RemoveMin,
            _ => MixedOp::SumPrefix,
        })
        .collect()
}

/// Values inserted by `thread` in `run` for the insert and snap-insert tasks.
pub fn insert_values(cfg: &BenchConfig, run: usize, thread: usize) -> Vec<i64> {
    let mut rng = thread_rng(cfg.seed, run, thread);
    (0..cfg.ops_per_thread()).map(|_| rng.gen()).collect()
}

/// The operations the workloads need from a structure.
pub trait BenchHeap: Sync + Send + Sized {
    fn build(entries: &[i64]) -> Self;
    fn insert(&self, x: i64);
    fn remove_min(&self) -> Option<i64>;
    fn snapshot(&self) -> Self;
    fn release(self);
    fn sum(&self) -> i128;
    fn len(&self) -> usize;
    fn alloc_stats(&self) -> Option<AllocStats> {
        None
    }

    /// Sum of the `k` smallest elements, from a private snapshot.
    fn sum_smallest(&self, k: usize) -> i128 {
        let snap = self.snapshot();
        let total = (0..k).map_while(|_| snap.remove_min()).map(i128::from).sum();
        snap.release();
        total
    }
}

impl BenchHeap for CHeap<i64> {
    fn build(entries: &[i64]) -> Self {
        let h = CHeap::with_stats();
        for &x in entries {
            h.insert(x);
        }
        h
    }
    fn insert(&self, x: i64) {
        CHeap::insert(self, x)
    }
    fn remove_min(&self) -> Option<i64> {
        CHeap::remove_min(self)
    }
    fn snapshot(&self) -> Self {
        CHeap::snapshot(self)
    }
    fn release(self) {
        CHeap::release(&self).expect("benchmark handle released once");
    }
    fn sum(&self) -> i128 {
        CHeap::sum(self)
    }
    fn len(&self) -> usize {
        CHeap::len(self)
    }
    fn alloc_stats(&self) -> Option<AllocStats> {
        CHeap::alloc_stats(self)
    }
}

impl BenchHeap for LockedArrayHeap<i64> {
    fn build(entries: &[i64]) -> Self {
        let h = LockedArrayHeap::new();
        for &x in entries {
            h.insert(x);
        }
        h
    }
    fn insert(&self, x: i64) {
        LockedArrayHeap::insert(self, x)
    }
    fn remove_min(&self) -> Option<i64> {
        LockedArrayHeap::remove_min(self)
    }
    fn snapshot(&self) -> Self {
        LockedArrayHeap::snapshot(self)
    }
    fn release(self) {}
    fn sum(&self) -> i128 {
        LockedArrayHeap::sum(self)
    }
    fn len(&self) -> usize {
        LockedArrayHeap::len(self)
    }
}

enum Work {
    Values(Vec<i64>),
    Mixed(Vec<MixedOp>),
    Count(usize),
}

fn prepare(cfg: &BenchConfig, run: usize, thread: usize) -> Work {
    match cfg.task {
        Task::Insert | Task::SnapInsert => Work::Values(insert_values(cfg, run, thread)),
        Task::Mixed => Work::Mixed(mixed_ops(cfg, run, thread)),
        Task::RemoveMin => Work::Count(cfg.ops_per_thread()),
        Task::Sum | Task::SnapOnly => Work::Count(1),
    }
}

// Executes one thread's share, returning what it did and any snapshot to
// release after timing.
fn execute<H: BenchHeap>(task: Task, heap: &H, work: Work) -> (OpTally, usize, Option<H>) {
    let mut tally = OpTally::default();
    let mut ops = 0usize;
    let mut keep = None;
    match (task, work) {
        (Task::Sum, _) => {
            std::hint::black_box(heap.sum());
            tally.sums += 1;
            ops = 1;
        }
        (Task::SnapOnly, _) => {
            keep = Some(heap.snapshot());
            tally.snapshots += 1;
            ops = 1;
        }
        (Task::SnapInsert, Work::Values(vs)) => {
            let snap = heap.snapshot();
            tally.snapshots += 1;
            for x in vs {
                snap.insert(x);
                tally.inserts += 1;
                ops += 1;
            }
            keep = Some(snap);
        }
        (Task::Insert, Work::Values(vs)) => {
            for x in vs {
                heap.insert(x);
                tally.inserts += 1;
                ops += 1;
            }
        }
        (Task::RemoveMin, Work::Count(n)) => {
            for _ in 0..n {
                std::hint::black_box(heap.remove_min());
                tally.remove_mins += 1;
                ops += 1;
            }
        }
        (Task::Mixed, Work::Mixed(list)) => {
            for op in list {
                match op {
                    MixedOp::Insert(x) => {
                        heap.insert(x);
                        tally.inserts += 1;
                    }
                    MixedOp::RemoveMin => {
                        std::hint::black_box(heap.remove_min());
                        tally.remove_mins += 1;
                    }
                    MixedOp::SumPrefix => {
                        std::hint::black_box(heap.sum_smallest(MIXED_SUM_PREFIX));
                        tally.sums += 1;
                    }
                }
                ops += 1;
            }
        }
        _ => unreachable!("work prepared for a different task"),
    }
    (tally, ops, keep)
}

struct RunOutcome {
    millis: f64,
    tally: OpTally,
    ops_per_thread: Vec<usize>,
    final_size: usize,
    alloc: Option<AllocStats>,
}

fn run_once<H: BenchHeap>(cfg: &BenchConfig, entries: &[i64], run: usize) -> RunOutcome {
    let heap = H::build(entries);
    let before = heap.alloc_stats();
    let work: Vec<Work> = (0..cfg.threads).map(|t| prepare(cfg, run, t)).collect();
    let barrier = Barrier::new(cfg.threads + 1);
    let (millis, outcomes) = std::thread::scope(|s| {
        let workers: Vec<_> = work
            .into_iter()
            .map(|w| {
                let (heap, barrier) = (&heap, &barrier);
                s.spawn(move || {
                    barrier.wait();
                    execute(cfg.task, heap, w)
                })
            })
            .collect();
        barrier.wait();
        let start = Instant::now();
        let outcomes: Vec<_> = workers
            .into_iter()
            .map(|w| w.join().expect("benchmark worker panicked"))
            .collect();
        (start.elapsed().as_secs_f64() * 1e3, outcomes)
    });
    let alloc = match (before, heap.alloc_stats()) {
        (Some(b), Some(a)) => Some(a - b),
        _ => None,
    };
    let mut tally = OpTally::default();
    let mut ops_per_thread = Vec::with_capacity(outcomes.len());
    for (t, n, keep) in outcomes {
        tally.add(&t);
        ops_per_thread.push(n);
        if let Some(snap) = keep {
            snap.release();
        }
    }
    RunOutcome {
        millis,
        tally,
        ops_per_thread,
        final_size: heap.len(),
        alloc,
    }
}

/// Runs warmups and measured runs of one configuration.
pub fn run_task(cfg: &BenchConfig) -> Result<BenchResult, ConfigError> {
    cfg.validate()?;
    Ok(match cfg.structure {
        Structure::Braun => run_with::<CHeap<i64>>(cfg),
        Structure::LockedArray => run_with::<LockedArrayHeap<i64>>(cfg),
    })
}

fn run_with<H: BenchHeap>(cfg: &BenchConfig) -> BenchResult {
    let entries = initial_entries(cfg);
    for run in 0..cfg.warmup_runs {
        run_once::<H>(cfg, &entries, run);
    }
    let mut per_run_ms = Vec::with_capacity(cfg.measured_runs);
    let mut tally = OpTally::default();
    let mut alloc: Option<AllocStats> = None;
    let mut ops_per_thread = Vec::new();
    let mut final_size = 0;
    for i in 0..cfg.measured_runs {
        let out = run_once::<H>(cfg, &entries, cfg.warmup_runs + i);
        per_run_ms.push(out.millis);
        tally.add(&out.tally);
        if let Some(a) = out.alloc {
            let acc = alloc.get_or_insert_with(AllocStats::default);
            acc.nodes_allocated += a.nodes_allocated;
            acc.nodes_peeled += a.nodes_peeled;
            acc.snapshots += a.snapshots;
        }
        ops_per_thread = out.ops_per_thread;
        final_size = out.final_size;
    }
    let (mean_ms, std_ms) = mean_std(&per_run_ms);
    BenchResult {
        config: cfg.clone(),
        mean_ms,
        std_ms,
        per_run_ms,
        alloc_stats: alloc,
        tally,
        ops_per_thread,
        final_size,
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const CSV_HEADER: &str = "task,structure,threads,init_size,mean_ms,std_ms";

/// CSV report ordered by task, structure, then thread count.
pub fn emit_csv(results: &[BenchResult]) -> String {
    let mut rows: Vec<&BenchResult> = results.iter().collect();
    rows.sort_by_key(|r| (r.config.task, r.config.structure, r.config.threads));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.config;
        out.push_str(&format!(
            "{},{},{},{},{:.4},{:.4}\n",
            c.task, c.structure, c.threads, c.init_size, r.mean_ms, r.std_ms
        ));
    }
    out
}

/// A list of configurations to run, in order, without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matrix {
    pub configs: Vec<BenchConfig>,
}

impl Matrix {
    /// Cartesian product of the given axes over `base`.
    pub fn product(
        base: &BenchConfig,
        tasks: &[Task],
        structures: &[Structure],
        threads: &[usize],
    ) -> Matrix {
        let mut m = Matrix::default();
        for &task in tasks {
            for &structure in structures {
                for &t in threads {
                    m.push(BenchConfig {
                        task,
                        structure,
                        threads: t,
                        ..base.clone()
                    });
                }
            }
        }
        m
    }

    /// Adds `cfg` unless an identical configuration is already present.
    pub fn push(&mut self, cfg: BenchConfig) {
        if !self.configs.contains(&cfg) {
            self.configs.push(cfg);
        }
    }

    /// Parses a matrix file. Each non-empty line holds whitespace-separated
    /// `key=value` pairs (`task`, `structure`, `threads`, `init_size`, `ops`,
    /// `warmup`, `runs`, `seed`); missing keys come from `base`. `task`,
    /// `structure` and `threads` accept comma-separated lists, expanded as a
    /// product. `#` starts a comment.
    pub fn parse(text: &str, base: &BenchConfig) -> Result<Matrix, ConfigError> {
        let mut m = Matrix::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Matrix { line: n + 1, msg };
            let mut cfg = base.clone();
            let mut tasks = vec![base.task];
            let mut structures = vec![base.structure];
            let mut threads = vec![base.threads];
            let mut seen = HashSet::new();
            for pair in line.split_whitespace() {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, found {pair:?}")))?;
                if !seen.insert(k) {
                    return Err(err(format!("duplicate key {k:?}")));
                }
                let num = |v: &str| -> Result<usize, ConfigError> {
                    v.parse().map_err(|e| err(format!("{k}: {e}")))
                };
                match k {
                    "task" => {
                        tasks = v
                            .split(',')
                            .map(str::parse)
                            .collect::<Result<_, ConfigError>>()
                            .map_err(|e| err(e.to_string()))?
                    }
                    "structure" => {
                        structures = v
                            .split(',')
                            .map(str::parse)
                            .collect::<Result<_, ConfigError>>()
                            .map_err(|e| err(e.to_string()))?
                    }
                    "threads" => threads = v.split(',').map(num).collect::<Result<_, _>>()?,
                    "init_size" => cfg.init_size = num(v)?,
                    "ops" => cfg.total_ops = num(v)?,
                    "warmup" => cfg.warmup_runs = num(v)?,
                    "runs" => cfg.measured_runs = num(v)?,
                    "seed" => cfg.seed = v.parse().map_err(|e| err(format!("seed: {e}")))?,
                    _ => return Err(err(format!("unknown key {k:?}"))),
                }
            }
            for c in Matrix::product(&cfg, &tasks, &structures, &threads).configs {
                c.validate().map_err(|e| err(e.to_string()))?;
                m.push(c);
            }
        }
        Ok(m)
    }
}

/// Runs every configuration of `matrix`, reporting progress before each.
pub fn sweep(
    matrix: &Matrix,
    mut progress: impl FnMut(usize, usize, &BenchConfig),
) -> Result<Vec<BenchResult>, ConfigError> {
    for c in &matrix.configs {
        c.validate()?;
    }
    let total = matrix.configs.len();
    matrix
        .configs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            progress(i, total, c);
            run_task(c)
        })
        .collect()
}
