//! Recording and checking concurrent runs of [`CHeap`].
//!
//! A [`History`] is a list of invoke/respond events stamped from one atomic
//! counter. [`check_linearizable`] searches for a total order of the recorded
//! operations that respects real-time order and replays exactly against the
//! persistent heap. It is brute force and only meant for small histories.
//!
//! A snapshot's response is the sorted contents of the new handle, read by
//! draining it after the run; a sum's response is the value returned.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};

use rand::Rng;
use thiserror::Error;

use crate::concurrent::{sweep, CHeap};
use crate::persistent::PHeap;
use crate::validate::Violation;

pub type Elem = i64;

/// Largest history the checker accepts.
pub const MAX_OPS: usize = 8;
pub const MAX_THREADS: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("history too large: {ops} operations on {threads} threads (limit {MAX_OPS} ops, {MAX_THREADS} threads)")]
    TooLarge { ops: usize, threads: usize },
    #[error("malformed history: {0}")]
    Malformed(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Insert,
    RemoveMin,
    GetMin,
    Snapshot,
    Sum,
}

impl OpKind {
    fn name(self) -> &'static str {
        match self {
            OpKind::Insert => "insert",
            OpKind::RemoveMin => "remove_min",
            OpKind::GetMin => "get_min",
            OpKind::Snapshot => "snapshot",
            OpKind::Sum => "sum",
        }
    }
}

impl FromStr for OpKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "insert" => OpKind::Insert,
            "remove_min" => OpKind::RemoveMin,
            "get_min" => OpKind::GetMin,
            "snapshot" => OpKind::Snapshot,
            "sum" => OpKind::Sum,
            _ => return Err(format!("unknown operation {s:?}")),
        })
    }
}

/// One scripted operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Insert(Elem),
    RemoveMin,
    GetMin,
    Snapshot,
    Sum,
}

impl Op {
    pub fn kind(self) -> OpKind {
        match self {
            Op::Insert(_) => OpKind::Insert,
            Op::RemoveMin => OpKind::RemoveMin,
            Op::GetMin => OpKind::GetMin,
            Op::Snapshot => OpKind::Snapshot,
            Op::Sum => OpKind::Sum,
        }
    }

    pub fn arg(self) -> Option<Elem> {
        match self {
            Op::Insert(x) => Some(x),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Response {
    Unit,
    Elem(Option<Elem>),
    /// Snapshot handle id and its sorted contents.
    Snapshot { handle: usize, contents: Vec<Elem> },
    Sum(i128),
}

impl Response {
    // Equality as far as the sequential model can tell: handle ids are labels.
    fn matches(&self, other: &Response) -> bool {
        match (self, other) {
            (Response::Snapshot { contents: a, .. }, Response::Snapshot { contents: b, .. }) => {
                a == b
            }
            _ => self == other,
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Unit => f.write_str("unit"),
            Response::Elem(None) => f.write_str("none"),
            Response::Elem(Some(x)) => write!(f, "some:{x}"),
            Response::Snapshot { handle, contents } => {
                write!(f, "snap:{handle}:[{}]", join(contents))
            }
            Response::Sum(s) => write!(f, "sum:{s}"),
        }
    }
}

impl FromStr for Response {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = |e: &dyn fmt::Display| format!("bad response {s:?}: {e}");
        if s == "unit" {
            return Ok(Response::Unit);
        }
        if s == "none" {
            return Ok(Response::Elem(None));
        }
        if let Some(x) = s.strip_prefix("some:") {
            return x.parse().map(|x| Response::Elem(Some(x))).map_err(|e| bad(&e));
        }
        if let Some(x) = s.strip_prefix("sum:") {
            return x.parse().map(Response::Sum).map_err(|e| bad(&e));
        }
        if let Some(rest) = s.strip_prefix("snap:") {
            let (handle, list) = rest.split_once(':').ok_or_else(|| bad(&"missing ':'"))?;
            let handle = handle.parse().map_err(|e| bad(&e))?;
            let list = list
                .strip_prefix('[')
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(|| bad(&"missing brackets"))?;
            let contents = parse_list(list).map_err(|e| bad(&e))?;
            return Ok(Response::Snapshot { handle, contents });
        }
        Err(format!("unknown response {s:?}"))
    }
}

fn join(xs: &[Elem]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> Result<Vec<Elem>, std::num::ParseIntError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Invoke,
    Respond,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub seq: u64,
    pub thread: usize,
    pub phase: Phase,
    pub kind: OpKind,
    pub arg: Option<Elem>,
    pub response: Option<Response>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct History {
    pub initial: Vec<Elem>,
    pub events: Vec<Event>,
}

impl History {
    /// Line-oriented text form: an `initial` header, then one
    /// `seq thread phase op arg resp` line per event, `-` for absent fields.
    pub fn to_text(&self) -> String {
        let mut out = format!("initial [{}]\n", join(&self.initial));
        for e in &self.events {
            let phase = match e.phase {
                Phase::Invoke => "invoke",
                Phase::Respond => "respond",
            };
            let arg = e.arg.map_or("-".to_string(), |x| x.to_string());
            let resp = e.response.as_ref().map_or("-".to_string(), |r| r.to_string());
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                e.seq,
                e.thread,
                phase,
                e.kind.name(),
                arg,
                resp
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<History, VerifyError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let err = |line: usize, msg: String| VerifyError::Parse { line: line + 1, msg };
        let (n, header) = lines.next().ok_or_else(|| err(0, "empty input".into()))?;
        let list = header
            .trim()
            .strip_prefix("initial [")
            .and_then(|l| l.strip_suffix(']'))
            .ok_or_else(|| err(n, "expected `initial [..]` header".into()))?;
        let initial = parse_list(list).map_err(|e| err(n, e.to_string()))?;
        let mut events = Vec::new();
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(err(n, format!("expected 6 fields, found {}", f.len())));
            }
            let phase = match f[2] {
                "invoke" => Phase::Invoke,
                "respond" => Phase::Respond,
                p => return Err(err(n, format!("unknown phase {p:?}"))),
            };
            fn opt(s: &str) -> Option<&str> {
                (s != "-").then_some(s)
            }
            events.push(Event {
                seq: f[0].parse().map_err(|e| err(n, format!("seq: {e}")))?,
                thread: f[1].parse().map_err(|e| err(n, format!("thread: {e}")))?,
                phase,
                kind: f[3].parse().map_err(|e| err(n, e))?,
                arg: opt(f[4])
                    .map(str::parse)
                    .transpose()
                    .map_err(|e| err(n, format!("arg: {e}")))?,
                response: opt(f[5]).map(str::parse).transpose().map_err(|e| err(n, e))?,
            });
        }
        Ok(History { initial, events })
    }

    /// Pairs up events into operations, checking well-formedness.
    pub fn operations(&self) -> Result<Vec<Operation>, VerifyError> {
        let mut seqs = HashSet::new();
        let mut open: Vec<Option<usize>> = Vec::new();
        let mut ops: Vec<Operation> = Vec::new();
        let mut events: Vec<&Event> = self.events.iter().collect();
        events.sort_by_key(|e| e.seq);
        for e in events {
            if !seqs.insert(e.seq) {
                return Err(VerifyError::Malformed(format!("duplicate seq {}", e.seq)));
            }
            if open.len() <= e.thread {
                open.resize(e.thread + 1, None);
            }
            match (e.phase, open[e.thread]) {
                (Phase::Invoke, None) => {
                    if (e.kind == OpKind::Insert) != e.arg.is_some() {
                        return Err(VerifyError::Malformed(format!(
                            "seq {}: argument does not fit {}",
                            e.seq,
                            e.kind.name()
                        )));
                    }
                    open[e.thread] = Some(ops.len());
                    ops.push(Operation {
                        thread: e.thread,
                        kind: e.kind,
                        arg: e.arg,
                        invoked: e.seq,
                        responded: None,
                        response: None,
                    });
                }
                (Phase::Invoke, Some(_)) => {
                    return Err(VerifyError::Malformed(format!(
                        "seq {}: thread {} invokes while an operation is pending",
                        e.seq, e.thread
                    )))
                }
                (Phase::Respond, None) => {
                    return Err(VerifyError::Malformed(format!(
                        "seq {}: thread {} responds without an invocation",
                        e.seq, e.thread
                    )))
                }
                (Phase::Respond, Some(i)) => {
                    let op = &mut ops[i];
                    if op.kind != e.kind {
                        return Err(VerifyError::Malformed(format!(
                            "seq {}: response kind {} does not match invocation {}",
                            e.seq,
                            e.kind.name(),
                            op.kind.name()
                        )));
                    }
                    let resp = e.response.clone().ok_or_else(|| {
                        VerifyError::Malformed(format!("seq {}: response missing", e.seq))
                    })?;
                    op.responded = Some(e.seq);
                    op.response = Some(resp);
                    open[e.thread] = None;
                }
            }
        }
        Ok(ops)
    }
}

/// An invocation and its (possibly missing) response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub thread: usize,
    pub kind: OpKind,
    pub arg: Option<Elem>,
    pub invoked: u64,
    pub responded: Option<u64>,
    pub response: Option<Response>,
}

impl Operation {
    fn op(&self) -> Op {
        match self.kind {
            OpKind::Insert => Op::Insert(self.arg.expect("insert carries an argument")),
            OpKind::RemoveMin => Op::RemoveMin,
            OpKind::GetMin => Op::GetMin,
            OpKind::Snapshot => Op::Snapshot,
            OpKind::Sum => Op::Sum,
        }
    }
}

/// Applies `op` to the sequential model.
pub fn apply(state: &PHeap<Elem>, op: Op) -> (PHeap<Elem>, Response) {
    match op {
        Op::Insert(x) => (state.insert(x), Response::Unit),
        Op::RemoveMin => {
            let (next, v) = state.remove_min();
            (next, Response::Elem(v))
        }
        Op::GetMin => (state.clone(), Response::Elem(state.get_min())),
        Op::Snapshot => (
            state.clone(),
            Response::Snapshot {
                handle: 0,
                contents: state.to_sorted_vec(),
            },
        ),
        Op::Sum => {
            let s = state.to_sorted_vec().into_iter().map(i128::from).sum();
            (state.clone(), Response::Sum(s))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Indices into [`History::operations`], in a witnessing order.
    Linearizable(Vec<usize>),
    NotLinearizable,
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable(_))
    }
}

/// Brute-force linearizability check against the persistent heap.
///
/// Operations still pending at the end of the history may be placed anywhere
/// after their invocation, with any result, or left out.
pub fn check_linearizable(history: &History) -> Result<Verdict, VerifyError> {
    let ops = history.operations()?;
    let threads = ops.iter().map(|o| o.thread + 1).max().unwrap_or(0);
    if ops.len() > MAX_OPS || threads > MAX_THREADS {
        return Err(VerifyError::TooLarge {
            ops: ops.len(),
            threads,
        });
    }
    let state: PHeap<Elem> = history.initial.iter().copied().collect();
    let all = (1u32 << ops.len()) - 1;
    let mut order = Vec::with_capacity(ops.len());
    let mut dead = HashSet::new();
    Ok(if search(&ops, all, &state, &mut order, &mut dead) {
        Verdict::Linearizable(order)
    } else {
        Verdict::NotLinearizable
    })
}

fn search(
    ops: &[Operation],
    remaining: u32,
    state: &PHeap<Elem>,
    order: &mut Vec<usize>,
    dead: &mut HashSet<(u32, Vec<Elem>)>,
) -> bool {
    let complete_left = (0..ops.len())
        .filter(|&i| remaining & (1 << i) != 0)
        .any(|i| ops[i].responded.is_some());
    if !complete_left {
        return true;
    }
    let key = (remaining, state.to_sorted_vec());
    if dead.contains(&key) {
        return false;
    }
    for i in 0..ops.len() {
        if remaining & (1 << i) == 0 {
            continue;
        }
        // `i` can go next only if nothing still unplaced finished before it began.
        let blocked = (0..ops.len()).any(|j| {
            j != i
                && remaining & (1 << j) != 0
                && ops[j].responded.is_some_and(|r| r < ops[i].invoked)
        });
        if blocked {
            continue;
        }
        let (next, resp) = apply(state, ops[i].op());
        if let Some(expected) = &ops[i].response {
            if !expected.matches(&resp) {
                continue;
            }
        }
        order.push(i);
        if search(ops, remaining & !(1 << i), &next, order, dead) {
            return true;
        }
        order.pop();
    }
    dead.insert(key);
    false
}

/// Per-thread operation scripts plus the heap's initial contents.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Workload {
    pub initial: Vec<Elem>,
    pub threads: Vec<Vec<Op>>,
}

impl Workload {
    pub fn total_ops(&self) -> usize {
        self.threads.iter().map(Vec::len).sum()
    }

    /// Random script: `total_ops` operations spread round-robin over `threads`.
    /// Values come from a small range so duplicates and equal minima occur.
    pub fn random(rng: &mut impl Rng, threads: usize, total_ops: usize) -> Workload {
        let initial = (0..rng.gen_range(0..4)).map(|_| rng.gen_range(0..10)).collect();
        let mut scripts = vec![Vec::new(); threads];
        for i in 0..total_ops {
            let op = match rng.gen_range(0..10) {
                0..=3 => Op::Insert(rng.gen_range(0..10)),
                4..=6 => Op::RemoveMin,
                7 => Op::GetMin,
                8 => Op::Snapshot,
                _ => Op::Sum,
            };
            scripts[i % threads].push(op);
        }
        Workload {
            initial,
            threads: scripts,
        }
    }
}

/// Thread-safe event log with a single logical clock.
#[derive(Debug, Default)]
pub struct Recorder {
    clock: AtomicU64,
    events: Mutex<Vec<Event>>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    fn log(&self, thread: usize, phase: Phase, kind: OpKind, arg: Option<Elem>, response: Option<Response>) {
        let seq = self.clock.fetch_add(1, Ordering::SeqCst);
        self.events.lock().unwrap().push(Event {
            seq,
            thread,
            phase,
            kind,
            arg,
            response,
        });
    }

    pub fn invoke(&self, thread: usize, op: Op) {
        self.log(thread, Phase::Invoke, op.kind(), op.arg(), None);
    }

    pub fn respond(&self, thread: usize, kind: OpKind, response: Response) {
        self.log(thread, Phase::Respond, kind, None, Some(response));
    }

    pub fn finish(self, initial: Vec<Elem>) -> History {
        let mut events = self.events.into_inner().unwrap();
        events.sort_by_key(|e| e.seq);
        History { initial, events }
    }
}

/// Runs `workload` against a fresh [`CHeap`], one OS thread per script,
/// released together by a barrier.
pub fn record(workload: &Workload) -> Result<History, VerifyError> {
    let ops = workload.total_ops();
    let threads = workload.threads.len();
    if ops > MAX_OPS || threads > MAX_THREADS {
        return Err(VerifyError::TooLarge { ops, threads });
    }
    let heap = CHeap::new();
    for &x in &workload.initial {
        heap.insert(x);
    }
    let recorder = Recorder::new();
    let handles = AtomicU64::new(0);
    let barrier = Barrier::new(threads);
    let snaps: Vec<(usize, CHeap<Elem>)> = std::thread::scope(|s| {
        let workers: Vec<_> = workload
            .threads
            .iter()
            .enumerate()
            .map(|(t, script)| {
                let (heap, recorder, handles, barrier) = (&heap, &recorder, &handles, &barrier);
                s.spawn(move || {
                    let mut kept = Vec::new();
                    barrier.wait();
                    for &op in script {
                        recorder.invoke(t, op);
                        let resp = match op {
                            Op::Insert(x) => {
                                heap.insert(x);
                                Response::Unit
                            }
                            Op::RemoveMin => Response::Elem(heap.remove_min()),
                            Op::GetMin => Response::Elem(heap.get_min()),
                            Op::Sum => Response::Sum(heap.sum()),
                            Op::Snapshot => {
                                let snap = heap.snapshot();
                                let id = handles.fetch_add(1, Ordering::Relaxed) as usize;
                                kept.push((id, snap));
                                Response::Snapshot {
                                    handle: id,
                                    contents: Vec::new(),
                                }
                            }
                        };
                        recorder.respond(t, op.kind(), resp);
                    }
                    kept
                })
            })
            .collect();
        workers
            .into_iter()
            .flat_map(|w| w.join().expect("worker panicked"))
            .collect()
    });
    let mut history = recorder.finish(workload.initial.clone());
    for (id, snap) in snaps {
        let drained = snap.to_sorted_vec();
        let slot = history
            .events
            .iter_mut()
            .find_map(|e| match &mut e.response {
                Some(Response::Snapshot { handle, contents }) if *handle == id => Some(contents),
                _ => None,
            })
            .ok_or_else(|| VerifyError::Malformed(format!("snapshot {id} has no response")))?;
        *slot = drained;
    }
    history.operations()?;
    Ok(history)
}

/// Every history an atomic execution of `workload` can produce.
///
/// Each operation is split into invoke, take-effect and respond steps; all
/// interleavings of those steps that respect each thread's program order are
/// enumerated, and effects are computed on the persistent heap in
/// take-effect order. This does not use the checker and serves as its oracle.
pub fn enumerate_atomic_histories(workload: &Workload) -> Vec<History> {
    #[derive(Clone, Copy)]
    enum Step {
        Invoke,
        Effect,
        Respond,
    }
    let steps_per_thread: Vec<Vec<(usize, Step)>> = workload
        .threads
        .iter()
        .map(|script| {
            (0..script.len())
                .flat_map(|i| [(i, Step::Invoke), (i, Step::Effect), (i, Step::Respond)])
                .collect()
        })
        .collect();

    let mut out = Vec::new();
    let mut cursor = vec![0usize; workload.threads.len()];
    let mut trail: Vec<(usize, usize, Step)> = Vec::new();
    fn rec(
        steps: &[Vec<(usize, Step)>],
        cursor: &mut Vec<usize>,
        trail: &mut Vec<(usize, usize, Step)>,
        emit: &mut dyn FnMut(&[(usize, usize, Step)]),
    ) {
        let mut progressed = false;
        for t in 0..steps.len() {
            if cursor[t] < steps[t].len() {
                progressed = true;
                let (i, s) = steps[t][cursor[t]];
                cursor[t] += 1;
                trail.push((t, i, s));
                rec(steps, cursor, trail, emit);
                trail.pop();
                cursor[t] -= 1;
            }
        }
        if !progressed {
            emit(trail);
        }
    }
    let mut emit = |trail: &[(usize, usize, Step)]| {
        let mut state: PHeap<Elem> = workload.initial.iter().copied().collect();
        let mut results: Vec<Vec<Option<Response>>> =
            workload.threads.iter().map(|s| vec![None; s.len()]).collect();
        let mut events = Vec::new();
        let mut seq = 0u64;
        let mut snap_id = 0usize;
        for &(t, i, step) in trail {
            let op = workload.threads[t][i];
            match step {
                Step::Invoke => {
                    events.push(Event {
                        seq,
                        thread: t,
                        phase: Phase::Invoke,
                        kind: op.kind(),
                        arg: op.arg(),
                        response: None,
                    });
                    seq += 1;
                }
                Step::Effect => {
                    let (next, mut resp) = apply(&state, op);
                    if let Response::Snapshot { handle, .. } = &mut resp {
                        *handle = snap_id;
                        snap_id += 1;
                    }
                    state = next;
                    results[t][i] = Some(resp);
                }
                Step::Respond => {
                    events.push(Event {
                        seq,
                        thread: t,
                        phase: Phase::Respond,
                        kind: op.kind(),
                        arg: None,
                        response: results[t][i].take(),
                    });
                    seq += 1;
                }
            }
        }
        out.push(History {
            initial: workload.initial.clone(),
            events,
        });
    };
    rec(&steps_per_thread, &mut cursor, &mut trail, &mut emit);
    out
}

/// Which handle receives the mutations in a snapshot-isolation drill.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutatedSide {
    Origin,
    Snapshot,
}

#[derive(Debug, Clone)]
pub struct IsolationPlan {
    pub initial: Vec<Elem>,
    pub mutations: usize,
    pub side: MutatedSide,
    /// Drain the frozen handle after every this many mutations.
    pub drain_every: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolationReport {
    pub drains: usize,
    /// Every drain of the frozen handle matched the contents at snapshot time.
    pub frozen_stable: bool,
    /// The mutated handle ended with exactly the contents the model predicts.
    pub mutated_matches_model: bool,
}

impl IsolationReport {
    pub fn passed(&self) -> bool {
        self.frozen_stable && self.mutated_matches_model
    }
}

/// Takes a snapshot, then mutates one side while a second thread keeps
/// draining copies of the other, comparing each drain with the frozen contents.
pub fn check_snapshot_isolation(plan: &IsolationPlan) -> IsolationReport {
    use rand::SeedableRng;
    let origin = CHeap::new();
    for &x in &plan.initial {
        origin.insert(x);
    }
    let snap = origin.snapshot();
    let (mutated, frozen) = match plan.side {
        MutatedSide::Origin => (&origin, &snap),
        MutatedSide::Snapshot => (&snap, &origin),
    };
    let mut expected_frozen = plan.initial.clone();
    expected_frozen.sort_unstable();

    let done = std::sync::atomic::AtomicBool::new(false);
    let progress = AtomicU64::new(0);
    let drained = AtomicU64::new(0);
    let (drains, stable, model) = std::thread::scope(|s| {
        let mutator = s.spawn(|| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(plan.seed);
            let mut model: PHeap<Elem> = plan.initial.iter().copied().collect();
            let step = plan.drain_every.max(1) as u64;
            for i in 0..plan.mutations as u64 {
                // Stay at most one drain interval ahead of the drainer.
                while i / step > drained.load(Ordering::Acquire) {
                    std::thread::yield_now();
                }
                if rng.gen_bool(0.6) {
                    let x = rng.gen_range(-1000..1000);
                    mutated.insert(x);
                    model = model.insert(x);
                } else {
                    let got = mutated.remove_min();
                    let (next, want) = model.remove_min();
                    model = next;
                    assert_eq!(got, want, "mutated handle diverged from the model");
                }
                progress.fetch_add(1, Ordering::Release);
            }
            done.store(true, Ordering::Release);
            model
        });
        let mut drains = 0usize;
        let mut stable = true;
        let mut next_at = 0u64;
        let step = plan.drain_every.max(1) as u64;
        loop {
            let finished = done.load(Ordering::Acquire);
            if progress.load(Ordering::Acquire) >= next_at || finished {
                stable &= frozen.to_sorted_vec() == expected_frozen;
                drains += 1;
                drained.store(drains as u64, Ordering::Release);
                next_at += step;
            } else {
                std::thread::yield_now();
            }
            if finished {
                break;
            }
        }
        (drains, stable, mutator.join().expect("mutator panicked"))
    });
    IsolationReport {
        drains,
        frozen_stable: stable && frozen.to_sorted_vec() == expected_frozen,
        mutated_matches_model: mutated.to_sorted_vec() == model.to_sorted_vec(),
    }
}

/// Full Braun / heap / snapshot-count walk over quiescent handles.
pub fn invariant_sweep(handles: &[&CHeap<Elem>]) -> Result<(), Violation> {
    sweep(handles)
}

#[derive(Debug, Clone)]
pub struct StressConfig {
    pub threads: usize,
    pub ops_per_thread: usize,
    pub initial_size: usize,
    pub seed: u64,
}

/// What a stress run leaves behind for inspection.
#[derive(Debug)]
pub struct StressOutcome {
    pub origin: CHeap<Elem>,
    /// Snapshots kept alive (and mutated) by the workers.
    pub snapshots: Vec<CHeap<Elem>>,
    /// Sorted expected contents of `origin`: initial plus inserted minus removed.
    pub expected_origin: Vec<Elem>,
}

impl StressOutcome {
    pub fn handles(&self) -> Vec<&CHeap<Elem>> {
        std::iter::once(&self.origin).chain(&self.snapshots).collect()
    }
}

/// Mixed concurrent workload on one heap. Workers insert, remove, peek, sum,
/// take snapshots (keeping the last two and mutating them) and release older
/// ones.
pub fn stress(cfg: &StressConfig) -> StressOutcome {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    let origin = CHeap::with_stats();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut initial = Vec::with_capacity(cfg.initial_size);
    for _ in 0..cfg.initial_size {
        let x = rng.gen_range(-1_000_000..1_000_000);
        origin.insert(x);
        initial.push(x);
    }
    let barrier = Barrier::new(cfg.threads);
    let results: Vec<(Vec<Elem>, Vec<Elem>, Vec<CHeap<Elem>>)> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..cfg.threads)
            .map(|t| {
                let (origin, barrier) = (&origin, &barrier);
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(t as u64 + 1);
                    let mut inserted = Vec::new();
                    let mut removed = Vec::new();
                    let mut kept: Vec<CHeap<Elem>> = Vec::new();
                    barrier.wait();
                    for _ in 0..cfg.ops_per_thread {
                        match rng.gen_range(0..100) {
                            0..=34 => {
                                let x = rng.gen_range(-1_000_000..1_000_000);
                                origin.insert(x);
                                inserted.push(x);
                            }
                            35..=69 => removed.extend(origin.remove_min()),
                            70..=79 => {
                                let _ = origin.get_min();
                            }
                            80..=84 => {
                                let _ = origin.sum();
                            }
                            85..=89 => {
                                kept.push(origin.snapshot());
                                if kept.len() > 2 {
                                    kept.remove(0).release().expect("kept snapshot live");
                                }
                            }
                            _ => {
                                if let Some(s) = kept.last() {
                                    if rng.gen_bool(0.5) {
                                        s.insert(rng.gen_range(-1_000_000..1_000_000));
                                    } else {
                                        s.remove_min();
                                    }
                                }
                            }
                        }
                    }
                    (inserted, removed, kept)
                })
            })
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().expect("stress worker panicked"))
            .collect()
    });
    let mut expected = initial;
    let mut snapshots = Vec::new();
    let mut removed_all = Vec::new();
    for (ins, rem, kept) in results {
        expected.extend(ins);
        removed_all.extend(rem);
        snapshots.extend(kept);
    }
    expected.sort_unstable();
    removed_all.sort_unstable();
    let expected_origin = multiset_difference(&expected, &removed_all);
    StressOutcome {
        origin,
        snapshots,
        expected_origin,
    }
}

// Sorted `a` minus sorted `b`, as multisets. Elements of `b` missing from `a`
// are kept out of the result but make it differ from the heap's drain.
fn multiset_difference(a: &[Elem], b: &[Elem]) -> Vec<Elem> {
    let mut out = Vec::with_capacity(a.len());
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j < b.len() && b[j] == x {
            j += 1;
        } else {
            out.push(x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(seq: u64, thread: usize, phase: Phase, op: Op, resp: Option<Response>) -> Event {
        Event {
            seq,
            thread,
            phase,
            kind: op.kind(),
            arg: if phase == Phase::Invoke { op.arg() } else { None },
            response: resp,
        }
    }

    fn sequential(initial: Vec<Elem>, ops: &[(Op, Response)]) -> History {
        let mut events = Vec::new();
        for (i, (op, r)) in ops.iter().enumerate() {
            events.push(ev(2 * i as u64, 0, Phase::Invoke, *op, None));
            events.push(ev(2 * i as u64 + 1, 0, Phase::Respond, *op, Some(r.clone())));
        }
        History { initial, events }
    }

    #[test]
    fn sequential_history_accepted_iff_replay_matches() {
        let good = sequential(
            vec![3],
            &[
                (Op::Insert(1), Response::Unit),
                (Op::GetMin, Response::Elem(Some(1))),
                (Op::RemoveMin, Response::Elem(Some(1))),
                (Op::Sum, Response::Sum(3)),
            ],
        );
        assert!(check_linearizable(&good).unwrap().is_linearizable());
        let bad = sequential(
            vec![3],
            &[
                (Op::Insert(1), Response::Unit),
                (Op::RemoveMin, Response::Elem(Some(3))),
            ],
        );
        assert_eq!(check_linearizable(&bad).unwrap(), Verdict::NotLinearizable);
    }

    #[test]
    fn overlapping_insert_and_empty_remove_accepted() {
        let h = History {
            initial: vec![],
            events: vec![
                ev(0, 0, Phase::Invoke, Op::Insert(1), None),
                ev(1, 1, Phase::Invoke, Op::RemoveMin, None),
                ev(2, 1, Phase::Respond, Op::RemoveMin, Some(Response::Elem(None))),
                ev(3, 0, Phase::Respond, Op::Insert(1), Some(Response::Unit)),
            ],
        };
        assert_eq!(check_linearizable(&h).unwrap(), Verdict::Linearizable(vec![1, 0]));
    }

    #[test]
    fn impossible_get_min_rejected() {
        let h = sequential(vec![1], &[(Op::GetMin, Response::Elem(Some(5)))]);
        assert_eq!(check_linearizable(&h).unwrap(), Verdict::NotLinearizable);
    }

    #[test]
    fn real_time_order_enforced() {
        // remove_min finished before insert(0) began, so it cannot see 0.
        let h = History {
            initial: vec![5],
            events: vec![
                ev(0, 1, Phase::Invoke, Op::RemoveMin, None),
                ev(1, 1, Phase::Respond, Op::RemoveMin, Some(Response::Elem(Some(0)))),
                ev(2, 0, Phase::Invoke, Op::Insert(0), None),
                ev(3, 0, Phase::Respond, Op::Insert(0), Some(Response::Unit)),
            ],
        };
        assert_eq!(check_linearizable(&h).unwrap(), Verdict::NotLinearizable);
    }

    #[test]
    fn pending_operation_may_take_effect() {
        let h = History {
            initial: vec![],
            events: vec![
                ev(0, 0, Phase::Invoke, Op::Insert(4), None),
                ev(1, 1, Phase::Invoke, Op::GetMin, None),
                ev(2, 1, Phase::Respond, Op::GetMin, Some(Response::Elem(Some(4)))),
            ],
        };
        assert!(check_linearizable(&h).unwrap().is_linearizable());
    }

    #[test]
    fn snapshot_contents_checked() {
        let ok = sequential(
            vec![2, 1],
            &[(
                Op::Snapshot,
                Response::Snapshot {
                    handle: 7,
                    contents: vec![1, 2],
                },
            )],
        );
        assert!(check_linearizable(&ok).unwrap().is_linearizable());
        let bad = sequential(
            vec![2, 1],
            &[(
                Op::Snapshot,
                Response::Snapshot {
                    handle: 7,
                    contents: vec![1],
                },
            )],
        );
        assert!(!check_linearizable(&bad).unwrap().is_linearizable());
    }

    #[test]
    fn oversize_history_refused() {
        let ops: Vec<(Op, Response)> = (0..9).map(|i| (Op::Insert(i), Response::Unit)).collect();
        let h = sequential(vec![], &ops);
        assert!(matches!(
            check_linearizable(&h),
            Err(VerifyError::TooLarge { ops: 9, .. })
        ));
        let w = Workload {
            initial: vec![],
            threads: vec![vec![Op::GetMin]; 5],
        };
        assert!(matches!(record(&w), Err(VerifyError::TooLarge { threads: 5, .. })));
    }

    #[test]
    fn malformed_histories_rejected() {
        let h = History {
            initial: vec![],
            events: vec![ev(0, 0, Phase::Respond, Op::GetMin, Some(Response::Elem(None)))],
        };
        assert!(matches!(check_linearizable(&h), Err(VerifyError::Malformed(_))));
        let h = History {
            initial: vec![],
            events: vec![
                ev(0, 0, Phase::Invoke, Op::GetMin, None),
                ev(1, 0, Phase::Invoke, Op::GetMin, None),
            ],
        };
        assert!(matches!(check_linearizable(&h), Err(VerifyError::Malformed(_))));
    }

    #[test]
    fn record_one_thread_two_ops() {
        let w = Workload {
            initial: vec![4],
            threads: vec![vec![Op::Insert(2), Op::RemoveMin]],
        };
        let h = record(&w).unwrap();
        assert_eq!(h.events.len(), 4);
        assert_eq!(h.operations().unwrap().len(), 2);
        assert!(check_linearizable(&h).unwrap().is_linearizable());
    }

    #[test]
    fn record_two_threads_two_ops() {
        let w = Workload {
            initial: vec![],
            threads: vec![vec![Op::Insert(2), Op::Snapshot], vec![Op::Insert(1), Op::Sum]],
        };
        let h = record(&w).unwrap();
        let ops = h.operations().unwrap();
        assert_eq!(ops.len(), 4);
        assert!(ops.iter().all(|o| o.responded.is_some()));
        assert!(check_linearizable(&h).unwrap().is_linearizable());
    }

    #[test]
    fn record_sweep_three_threads_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let w = Workload::random(&mut rng, 3, 6);
            let h = record(&w).unwrap();
            assert_eq!(h.operations().unwrap().len(), 6);
            for pair in h.events.windows(2) {
                assert!(pair[0].seq < pair[1].seq);
            }
        }
    }

    #[test]
    fn text_format_round_trip() {
        let w = Workload {
            initial: vec![3, -1],
            threads: vec![vec![Op::Insert(2), Op::Snapshot], vec![Op::RemoveMin, Op::Sum]],
        };
        let h = record(&w).unwrap();
        let text = h.to_text();
        assert_eq!(History::from_text(&text).unwrap(), h);
        assert!(text.starts_with("initial [3,-1]\n"));
    }

    #[test]
    fn text_format_errors_carry_line() {
        let err = History::from_text("initial []\n0 0 invoke insert\n").unwrap_err();
        assert!(matches!(err, VerifyError::Parse { line: 2, .. }));
    }

    #[test]
    fn atomic_histories_count() {
        // Two threads with one operation each: C(6,3) interleavings of steps.
        let w = Workload {
            initial: vec![],
            threads: vec![vec![Op::Insert(1)], vec![Op::RemoveMin]],
        };
        let hs = enumerate_atomic_histories(&w);
        assert_eq!(hs.len(), 20);
        assert!(hs.iter().all(|h| check_linearizable(h).unwrap().is_linearizable()));
    }

    #[test]
    fn isolation_trivial_and_small() {
        let plan = IsolationPlan {
            initial: (0..50).collect(),
            mutations: 0,
            side: MutatedSide::Origin,
            drain_every: 1,
            seed: 1,
        };
        assert!(check_snapshot_isolation(&plan).passed());
        let plan = IsolationPlan {
            mutations: 300,
            side: MutatedSide::Snapshot,
            ..plan
        };
        assert!(check_snapshot_isolation(&plan).passed());
    }

    #[test]
    fn small_stress_is_clean() {
        let out = stress(&StressConfig {
            threads: 4,
            ops_per_thread: 500,
            initial_size: 200,
            seed: 5,
        });
        invariant_sweep(&out.handles()).unwrap();
        assert_eq!(out.origin.to_sorted_vec(), out.expected_origin);
    }

    #[test]
    fn multiset_difference_basic() {
        assert_eq!(multiset_difference(&[1, 1, 2, 3], &[1, 3]), vec![1, 2]);
    }
}
