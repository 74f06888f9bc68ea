//! A `2^k`-endpoint hypercube of workers that talk only to their neighbors.
//!
//! Worker programs are `async` functions over an [`Endpoint`]. The same
//! program runs on either backend:
//!
//! * [`Backend::Simulated`] polls every worker round-robin on the calling
//!   thread. A receive with no matching message yields to the next worker,
//!   so execution and counters are fully deterministic.
//! * [`Backend::Parallel`] runs one thread per endpoint; a receive blocks
//!   until its message arrives.
//!
//! Both backends detect a global deadlock (every live worker waiting on a
//! message nobody will send) and report who waits on what, together with the
//! messages still sitting in inboxes.

use std::collections::VecDeque;
use std::fmt;
use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::task::{Context, Poll, Waker};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::logspace::{log_add, LogScore};
use crate::varset::{bit_string, low_mask};

/// Largest hypercube dimension the simulated backend accepts.
pub const SIMULATED_MAX_DIM: usize = 20;
/// Largest number of endpoints (threads) the parallel backend accepts.
pub const PARALLEL_MAX_WORKERS: usize = 1024;

const BLOCK_POLL: Duration = Duration::from_millis(20);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Backend {
    Simulated,
    Parallel,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Simulated => "simulated",
            Backend::Parallel => "parallel",
        })
    }
}

/// Which computation a message belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Stage {
    UpwardZeta,
    DownwardZeta,
    Forward,
    Backward,
    Exchange,
    Reduce,
    User,
}

/// Message tag. Receives match on `(source, tag)`, so two stages, nodes or
/// lattice blocks never consume each other's traffic even when fast workers
/// run ahead of slow ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Tag {
    pub stage: Stage,
    /// The node the stage works for, e.g. `i` of `A_i` or `v` of `Gamma_v`.
    pub instance: u32,
    /// Iteration number for transforms and reduces, block prefix for the
    /// lattice sweeps.
    pub key: u64,
}

impl Tag {
    pub const fn new(stage: Stage, instance: u32, key: u64) -> Self {
        Tag {
            stage,
            instance,
            key,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}[{}]#{}", self.stage, self.instance, self.key)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FabricMessage {
    pub source: u64,
    pub tag: Tag,
    pub payload: Vec<LogScore>,
    /// Modeled arrival time under the fabric's [`CostModel`].
    pub arrival: f64,
}

/// Per-message cost: `latency + per_byte * bytes`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct CostModel {
    pub latency: f64,
    pub per_byte: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EndpointCounters {
    pub sent_msgs: u64,
    pub sent_bytes: u64,
    pub recv_msgs: u64,
    /// Polls (simulated) or timed waits (parallel) that found no message.
    pub idle_steps: u64,
    /// Messages sent along each hypercube dimension.
    pub sent_per_dim: Vec<u64>,
    /// Sends refused because the destination was not a neighbor.
    pub rejected_sends: u64,
    /// Arithmetic updates reported by the worker program.
    pub ops: u64,
    /// Largest score-table footprint reported by the worker program.
    pub peak_table_bytes: u64,
    /// Logical clock under the cost model.
    pub modeled_time: f64,
}

impl EndpointCounters {
    fn new(k: usize) -> Self {
        EndpointCounters {
            sent_per_dim: vec![0; k],
            ..Default::default()
        }
    }

    fn absorb(&mut self, other: &EndpointCounters) {
        self.sent_msgs += other.sent_msgs;
        self.sent_bytes += other.sent_bytes;
        self.recv_msgs += other.recv_msgs;
        self.idle_steps += other.idle_steps;
        for (a, b) in self.sent_per_dim.iter_mut().zip(&other.sent_per_dim) {
            *a += b;
        }
        self.rejected_sends += other.rejected_sends;
        self.ops += other.ops;
        self.peak_table_bytes = self.peak_table_bytes.max(other.peak_table_bytes);
        self.modeled_time = self.modeled_time.max(other.modeled_time);
    }
}

/// Snapshot of a stuck fabric.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeadlockReport {
    /// `(endpoint, expected source, tag)` for every blocked receive.
    pub waiting: Vec<(u64, u64, Tag)>,
    /// `(destination, source, tag, payload length)` of undelivered messages.
    pub pending: Vec<(u64, u64, Tag, usize)>,
    pub k: usize,
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |id: u64| bit_string(id, self.k.max(1));
        let waits: Vec<String> = self
            .waiting
            .iter()
            .map(|(ep, src, tag)| format!("endpoint {} waits for {} from {}", name(*ep), tag, name(*src)))
            .collect();
        write!(f, "{}", waits.join("; "))?;
        if self.pending.is_empty() {
            write!(f, "; no pending messages")
        } else {
            let pending: Vec<String> = self
                .pending
                .iter()
                .map(|(dst, src, tag, len)| {
                    format!("{} -> {} {} ({} values)", name(*src), name(*dst), tag, len)
                })
                .collect();
            write!(f, "; pending: {}", pending.join(", "))
        }
    }
}

#[derive(Debug, Error)]
pub enum FabricError {
    #[error("{backend} backend supports at most {max} endpoints, asked for 2^{k}")]
    TooManyWorkers {
        backend: Backend,
        k: usize,
        max: usize,
    },
    #[error("expected {expected} worker inputs, got {got}")]
    WrongInputCount { expected: usize, got: usize },
    #[error("endpoint {from} cannot reach non-adjacent endpoint {to}")]
    NotAdjacent { from: u64, to: u64 },
    #[error("dimension {dim} does not exist in a {k}-dimensional hypercube")]
    NoSuchDimension { dim: usize, k: usize },
    #[error("deadlock: {0}")]
    Deadlock(Box<DeadlockReport>),
}

struct Inbox {
    queue: VecDeque<FabricMessage>,
    waiting: Option<(u64, Tag)>,
    /// Counted in `Monitor::blocked`.
    registered: bool,
}

struct Mailbox {
    inbox: Mutex<Inbox>,
    signal: Condvar,
}

#[derive(Default)]
struct Monitor {
    blocked: usize,
    finished: usize,
    deadlocked: bool,
}

struct Shared {
    k: usize,
    backend: Backend,
    cost: CostModel,
    mailboxes: Vec<Mailbox>,
    monitor: Mutex<Monitor>,
    counters: Mutex<Vec<EndpointCounters>>,
    victims: Vec<AtomicBool>,
    epoch: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn new(k: usize, backend: Backend, cost: CostModel, start: &[EndpointCounters]) -> Self {
        let p = 1usize << k;
        Shared {
            k,
            backend,
            cost,
            mailboxes: (0..p)
                .map(|_| Mailbox {
                    inbox: Mutex::new(Inbox {
                        queue: VecDeque::new(),
                        waiting: None,
                        registered: false,
                    }),
                    signal: Condvar::new(),
                })
                .collect(),
            monitor: Mutex::new(Monitor::default()),
            counters: Mutex::new(
                start
                    .iter()
                    .map(|c| EndpointCounters {
                        modeled_time: c.modeled_time,
                        ..EndpointCounters::new(k)
                    })
                    .collect(),
            ),
            victims: (0..p).map(|_| AtomicBool::new(false)).collect(),
            epoch: AtomicU64::new(0),
        }
    }

    fn endpoints(&self) -> usize {
        self.mailboxes.len()
    }

    fn wake_all(&self) {
        for mb in &self.mailboxes {
            mb.signal.notify_all();
        }
    }

    fn finish(&self) {
        let mut mon = lock(&self.monitor);
        mon.finished += 1;
        if mon.blocked > 0 && mon.blocked + mon.finished == self.endpoints() {
            mon.deadlocked = true;
            drop(mon);
            self.wake_all();
        }
    }

    fn report(&self) -> DeadlockReport {
        let mut report = DeadlockReport {
            k: self.k,
            ..Default::default()
        };
        for (id, mb) in self.mailboxes.iter().enumerate() {
            let inbox = lock(&mb.inbox);
            if let Some((src, tag)) = inbox.waiting {
                report.waiting.push((id as u64, src, tag));
            }
            for m in &inbox.queue {
                report
                    .pending
                    .push((id as u64, m.source, m.tag, m.payload.len()));
            }
        }
        report
    }
}

/// One worker's handle onto the fabric.
pub struct Endpoint {
    id: u64,
    shared: Arc<Shared>,
    counters: EndpointCounters,
}

impl Endpoint {
    fn new(id: u64, shared: Arc<Shared>) -> Self {
        let counters = EndpointCounters {
            modeled_time: lock(&shared.counters)[id as usize].modeled_time,
            ..EndpointCounters::new(shared.k)
        };
        Endpoint {
            id,
            shared,
            counters,
        }
    }

    /// `k`-bit worker id.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Hypercube dimension `k`.
    pub fn dim(&self) -> usize {
        self.shared.k
    }

    /// Number of endpoints, `2^k`.
    pub fn endpoints(&self) -> usize {
        self.shared.endpoints()
    }

    pub fn backend(&self) -> Backend {
        self.shared.backend
    }

    /// Whether bit `j` of this endpoint's id is set.
    pub fn bit(&self, j: usize) -> bool {
        self.id >> j & 1 == 1
    }

    /// The endpoint across dimension `j`.
    pub fn neighbor(&self, j: usize) -> u64 {
        self.id ^ 1 << j
    }

    /// Record arithmetic work for the complexity counters.
    pub fn add_ops(&mut self, ops: u64) {
        self.counters.ops += ops;
    }

    /// Record the bytes of score tables currently held; the counters keep
    /// the maximum.
    pub fn note_table_bytes(&mut self, bytes: u64) {
        self.counters.peak_table_bytes = self.counters.peak_table_bytes.max(bytes);
    }

    pub fn counters(&self) -> &EndpointCounters {
        &self.counters
    }

    /// Send across dimension `dim`.
    pub fn send(&mut self, dim: usize, tag: Tag, payload: Vec<LogScore>) -> Result<(), FabricError> {
        if dim >= self.shared.k {
            return Err(FabricError::NoSuchDimension {
                dim,
                k: self.shared.k,
            });
        }
        self.deliver(dim, tag, payload);
        Ok(())
    }

    /// Send to an explicit endpoint, which must be a neighbor.
    pub fn send_to(&mut self, dest: u64, tag: Tag, payload: Vec<LogScore>) -> Result<(), FabricError> {
        let diff = self.id ^ dest;
        if diff.count_ones() != 1 || dest >= self.endpoints() as u64 {
            self.counters.rejected_sends += 1;
            return Err(FabricError::NotAdjacent {
                from: self.id,
                to: dest,
            });
        }
        self.deliver(diff.trailing_zeros() as usize, tag, payload);
        Ok(())
    }

    fn deliver(&mut self, dim: usize, tag: Tag, payload: Vec<LogScore>) {
        let dest = self.neighbor(dim);
        let bytes = (payload.len() * std::mem::size_of::<LogScore>()) as u64;
        let c = &mut self.counters;
        c.sent_msgs += 1;
        c.sent_bytes += bytes;
        c.sent_per_dim[dim] += 1;
        let cost = self.shared.cost;
        let msg = FabricMessage {
            source: self.id,
            tag,
            payload,
            arrival: c.modeled_time + cost.latency + cost.per_byte * bytes as f64,
        };
        let mb = &self.shared.mailboxes[dest as usize];
        let mut inbox = lock(&mb.inbox);
        inbox.queue.push_back(msg);
        if inbox.registered {
            inbox.registered = false;
            lock(&self.shared.monitor).blocked -= 1;
        }
        drop(inbox);
        mb.signal.notify_one();
        self.shared.epoch.fetch_add(1, Ordering::Relaxed);
    }

    /// Receive the oldest message tagged `tag` from the neighbor across
    /// dimension `dim`.
    pub fn recv(&mut self, dim: usize, tag: Tag) -> Recv<'_> {
        let source = self.neighbor(dim);
        let invalid = dim >= self.shared.k;
        Recv {
            endpoint: self,
            source,
            tag,
            invalid,
        }
    }

    fn take(&mut self, inbox: &mut Inbox, source: u64, tag: Tag) -> Option<FabricMessage> {
        let pos = inbox
            .queue
            .iter()
            .position(|m| m.source == source && m.tag == tag)?;
        let msg = inbox.queue.remove(pos)?;
        inbox.waiting = None;
        if inbox.registered {
            inbox.registered = false;
            lock(&self.shared.monitor).blocked -= 1;
        }
        self.counters.recv_msgs += 1;
        self.counters.modeled_time = self.counters.modeled_time.max(msg.arrival);
        self.shared.epoch.fetch_add(1, Ordering::Relaxed);
        Some(msg)
    }

    fn deadlocked(&self) -> FabricError {
        self.shared.victims[self.id as usize].store(true, Ordering::Relaxed);
        FabricError::Deadlock(Box::default())
    }
}

impl Drop for Endpoint {
    fn drop(&mut self) {
        let mut all = lock(&self.shared.counters);
        let slot = &mut all[self.id as usize];
        let time = self.counters.modeled_time;
        slot.absorb(&self.counters);
        slot.modeled_time = time;
    }
}

/// Future returned by [`Endpoint::recv`].
pub struct Recv<'a> {
    endpoint: &'a mut Endpoint,
    source: u64,
    tag: Tag,
    invalid: bool,
}

impl Future for Recv<'_> {
    type Output = Result<FabricMessage, FabricError>;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Self::Output> {
        let this = self.get_mut();
        let ep = &mut *this.endpoint;
        if this.invalid {
            return Poll::Ready(Err(FabricError::NoSuchDimension {
                dim: (ep.id ^ this.source).trailing_zeros() as usize,
                k: ep.shared.k,
            }));
        }
        let shared = Arc::clone(&ep.shared);
        let mb = &shared.mailboxes[ep.id as usize];
        let mut inbox = lock(&mb.inbox);
        if let Some(msg) = ep.take(&mut inbox, this.source, this.tag) {
            return Poll::Ready(Ok(msg));
        }
        inbox.waiting = Some((this.source, this.tag));
        if shared.backend == Backend::Simulated {
            ep.counters.idle_steps += 1;
            return Poll::Pending;
        }
        loop {
            if !inbox.registered {
                inbox.registered = true;
                let mut mon = lock(&shared.monitor);
                mon.blocked += 1;
                if mon.blocked + mon.finished == shared.endpoints() {
                    mon.deadlocked = true;
                    drop(mon);
                    shared.wake_all();
                }
            }
            if lock(&shared.monitor).deadlocked {
                return Poll::Ready(Err(ep.deadlocked()));
            }
            inbox = mb
                .signal
                .wait_timeout(inbox, BLOCK_POLL)
                .unwrap_or_else(|e| e.into_inner())
                .0;
            if let Some(msg) = ep.take(&mut inbox, this.source, this.tag) {
                return Poll::Ready(Ok(msg));
            }
            ep.counters.idle_steps += 1;
        }
    }
}

/// Marks a parallel worker finished even if its program panics.
struct FinishGuard<'a>(&'a Shared);

impl Drop for FinishGuard<'_> {
    fn drop(&mut self) {
        self.0.finish();
    }
}

/// A hypercube of `2^k` workers.
pub struct HypercubeFabric {
    k: usize,
    backend: Backend,
    cost: CostModel,
    counters: Vec<EndpointCounters>,
}

impl HypercubeFabric {
    pub fn spawn(k: usize, backend: Backend) -> Result<Self, FabricError> {
        let limit_ok = match backend {
            Backend::Simulated => k <= SIMULATED_MAX_DIM,
            Backend::Parallel => k < 63 && 1usize << k <= PARALLEL_MAX_WORKERS,
        };
        if !limit_ok {
            return Err(FabricError::TooManyWorkers {
                backend,
                k,
                max: match backend {
                    Backend::Simulated => 1 << SIMULATED_MAX_DIM,
                    Backend::Parallel => PARALLEL_MAX_WORKERS,
                },
            });
        }
        Ok(HypercubeFabric {
            k,
            backend,
            cost: CostModel::default(),
            counters: vec![EndpointCounters::new(k); 1 << k],
        })
    }

    pub fn with_cost_model(mut self, cost: CostModel) -> Self {
        self.cost = cost;
        self
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn endpoints(&self) -> usize {
        1 << self.k
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Endpoint ids adjacent to `id`, by ascending dimension.
    pub fn neighbors(&self, id: u64) -> Vec<u64> {
        (0..self.k).map(|j| id ^ 1 << j).collect()
    }

    /// The endpoint whose id is all ones.
    pub fn top(&self) -> u64 {
        low_mask(self.k)
    }

    /// Counters accumulated over every run so far.
    pub fn counters(&self) -> &[EndpointCounters] {
        &self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = vec![EndpointCounters::new(self.k); 1 << self.k];
    }

    /// Messages that did not travel along a single hypercube dimension.
    /// Always zero unless the transport is broken; kept as an audit.
    pub fn locality_violations(&self) -> u64 {
        self.counters
            .iter()
            .map(|c| c.rejected_sends + (c.sent_msgs - c.sent_per_dim.iter().sum::<u64>()))
            .sum()
    }

    /// Counter dump, one object per endpoint.
    pub fn counters_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.counters
                .iter()
                .enumerate()
                .map(|(id, c)| {
                    serde_json::json!({
                        "endpoint": bit_string(id as u64, self.k),
                        "sent_msgs": c.sent_msgs,
                        "sent_bytes": c.sent_bytes,
                        "recv_msgs": c.recv_msgs,
                        "idle_steps": c.idle_steps,
                        "sent_per_dim": c.sent_per_dim,
                        "ops": c.ops,
                        "peak_table_bytes": c.peak_table_bytes,
                        "modeled_time": c.modeled_time,
                    })
                })
                .collect(),
        )
    }

    /// Run `program` once per endpoint, handing endpoint `r` the input
    /// `inputs[r]`. Returns the outputs in endpoint order.
    ///
    /// When several workers fail, the first failure that is not a
    /// consequence of the deadlock it caused is returned.
    pub fn run<I, T, E, F, Fut>(&mut self, inputs: Vec<I>, program: F) -> Result<Vec<T>, E>
    where
        I: Send,
        T: Send,
        E: From<FabricError> + Send,
        F: Fn(Endpoint, I) -> Fut + Sync,
        Fut: Future<Output = Result<T, E>>,
    {
        let p = self.endpoints();
        if inputs.len() != p {
            return Err(FabricError::WrongInputCount {
                expected: p,
                got: inputs.len(),
            }
            .into());
        }
        let shared = Arc::new(Shared::new(self.k, self.backend, self.cost, &self.counters));
        let results = match self.backend {
            Backend::Simulated => run_simulated(&shared, inputs, &program),
            Backend::Parallel => run_parallel(&shared, inputs, &program),
        };

        let finished = std::mem::take(&mut *lock(&shared.counters));
        for (acc, run) in self.counters.iter_mut().zip(&finished) {
            let time = run.modeled_time;
            acc.absorb(run);
            acc.modeled_time = time;
        }

        let mut outputs = Vec::with_capacity(p);
        let mut first_victim = None;
        let mut root_cause = None;
        for (id, res) in results.into_iter().enumerate() {
            match res {
                Ok(v) => outputs.push(v),
                Err(e) if shared.victims[id].load(Ordering::Relaxed) => {
                    first_victim.get_or_insert(e);
                }
                Err(e) => {
                    root_cause.get_or_insert(e);
                }
            }
        }
        if let Some(e) = root_cause {
            return Err(e);
        }
        if first_victim.is_some() {
            return Err(FabricError::Deadlock(Box::new(shared.report())).into());
        }
        Ok(outputs)
    }
}

fn run_simulated<I, T, E, F, Fut>(shared: &Arc<Shared>, inputs: Vec<I>, program: &F) -> Vec<Result<T, E>>
where
    E: From<FabricError>,
    F: Fn(Endpoint, I) -> Fut,
    Fut: Future<Output = Result<T, E>>,
{
    let mut tasks: Vec<Option<Pin<Box<Fut>>>> = inputs
        .into_iter()
        .enumerate()
        .map(|(id, input)| {
            Some(Box::pin(program(
                Endpoint::new(id as u64, Arc::clone(shared)),
                input,
            )))
        })
        .collect();
    let mut results: Vec<Option<Result<T, E>>> = tasks.iter().map(|_| None).collect();
    let mut cx = Context::from_waker(Waker::noop());
    let mut live = tasks.len();
    while live > 0 {
        let before = shared.epoch.load(Ordering::Relaxed);
        let mut completed = false;
        for (id, slot) in tasks.iter_mut().enumerate() {
            if let Some(task) = slot {
                if let Poll::Ready(res) = task.as_mut().poll(&mut cx) {
                    results[id] = Some(res);
                    *slot = None;
                    live -= 1;
                    completed = true;
                }
            }
        }
        if live > 0 && !completed && shared.epoch.load(Ordering::Relaxed) == before {
            // Nobody moved during a full round: every live worker is stuck.
            for (id, slot) in tasks.iter_mut().enumerate() {
                if slot.take().is_some() {
                    shared.victims[id].store(true, Ordering::Relaxed);
                    results[id] = Some(Err(FabricError::Deadlock(Box::default()).into()));
                }
            }
            live = 0;
        }
    }
    results.into_iter().map(|r| r.expect("every task resolved")).collect()
}

fn run_parallel<I, T, E, F, Fut>(shared: &Arc<Shared>, inputs: Vec<I>, program: &F) -> Vec<Result<T, E>>
where
    I: Send,
    T: Send,
    E: Send,
    F: Fn(Endpoint, I) -> Fut + Sync,
    Fut: Future<Output = Result<T, E>>,
{
    std::thread::scope(|scope| {
        let handles: Vec<_> = inputs
            .into_iter()
            .enumerate()
            .map(|(id, input)| {
                let shared = Arc::clone(shared);
                scope.spawn(move || {
                    let _guard = FinishGuard(&shared);
                    let endpoint = Endpoint::new(id as u64, Arc::clone(&shared));
                    block_on(program(endpoint, input))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|panic| std::panic::resume_unwind(panic)))
            .collect()
    })
}

fn block_on<F: Future>(fut: F) -> F::Output {
    let mut fut = std::pin::pin!(fut);
    let mut cx = Context::from_waker(Waker::noop());
    loop {
        if let Poll::Ready(v) = fut.as_mut().poll(&mut cx) {
            return v;
        }
        std::thread::yield_now();
    }
}

/// Elementwise log-sum-exp reduction onto the all-ones endpoint.
///
/// Round `j` (ascending) pairs endpoints whose low `j` bits are all ones:
/// the one with bit `j` clear sends its vector across dimension `j`, the
/// other accumulates `log_add(own, received)`. After `k` rounds the
/// all-ones endpoint holds the total and returns `Some`; every other
/// endpoint returns `None`.
pub async fn reduce_to_top(
    ep: &mut Endpoint,
    instance: u32,
    mut values: Vec<LogScore>,
) -> Result<Option<Vec<LogScore>>, FabricError> {
    for j in 0..ep.dim() {
        let tag = Tag::new(Stage::Reduce, instance, j as u64);
        if !ep.bit(j) {
            ep.send(j, tag, values)?;
            return Ok(None);
        }
        let other = ep.recv(j, tag).await?;
        for (acc, x) in values.iter_mut().zip(&other.payload) {
            *acc = log_add(*acc, *x);
        }
        ep.add_ops(values.len() as u64);
    }
    Ok(Some(values))
}

/// Reduce one vector per endpoint and return the result held by the
/// all-ones endpoint.
pub fn reduce_logsumexp(
    fabric: &mut HypercubeFabric,
    contributions: Vec<Vec<LogScore>>,
) -> Result<Vec<LogScore>, FabricError> {
    let top = fabric.top() as usize;
    let mut out = fabric.run(contributions, |mut ep, values| async move {
        reduce_to_top(&mut ep, 0, values).await
    })?;
    Ok(out.swap_remove(top).expect("all-ones endpoint holds the reduction"))
}
