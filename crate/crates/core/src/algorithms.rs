//! QuanTimed-DSGD and its baselines (DSGD, Q-DSGD, asynchronous DSGD).
//!
//! Synchronous rounds follow a fixed order: every node publishes its
//! message from iteration-`t` state, then each node computes its gradient
//! and applies the update. All randomness is drawn from per-node
//! substreams keyed by iteration, so results equal sequential node-order
//! execution exactly.

use serde::{Deserialize, Serialize};

use crate::compute::{batch_size_for_deadline, compute_phase, AsyncEvent, AsyncSchedule, RoundMode, SimClock, SpeedModel};
use crate::error::{Error, Result};
use crate::metrics::{consensus_error, MetricsRow};
use crate::objectives::{deadline_stochastic_gradient, global_gradient, global_loss, sample_batch, DataShards, GradSample, Objective};
use crate::quantize::{dequantize, quantize, MessagePrecision};
use crate::rng::{Purpose, Streams};
use crate::topology::{Graph, MixingMatrix};
use crate::vecops::{dist_sq, mean, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Deadline-based gradients, quantized exchange.
    Quantimed,
    /// Fixed batch, exact exchange, plain gossip averaging.
    Dsgd,
    /// Fixed batch, quantized exchange, ε-averaged update.
    Qdsgd,
    /// Event-driven DSGD reading the latest neighbor models.
    Async,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Quantimed => "quantimed",
            Algorithm::Dsgd => "dsgd",
            Algorithm::Qdsgd => "qdsgd",
            Algorithm::Async => "async",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quantimed" => Some(Algorithm::Quantimed),
            "dsgd" => Some(Algorithm::Dsgd),
            "qdsgd" => Some(Algorithm::Qdsgd),
            "async" => Some(Algorithm::Async),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Convex { delta: f64 },
    Nonconvex,
    Constant,
}

/// Gradient step `alpha` and averaging weight `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub alpha: f64,
    pub eps: f64,
    pub schedule: Schedule,
}

impl StepSizes {
    pub fn constant(alpha: f64, eps: f64) -> Result<Self> {
        StepSizes { alpha, eps, schedule: Schedule::Constant }.validated()
    }

    /// Multiplies both sizes; the result must still satisfy `0 < eps <= 1`.
    pub fn scaled(self, alpha_scale: f64, eps_scale: f64) -> Result<Self> {
        StepSizes { alpha: self.alpha * alpha_scale, eps: self.eps * eps_scale, schedule: self.schedule }.validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha={} must be positive", self.alpha)));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::invalid(format!("eps={} outside (0, 1]", self.eps)));
        }
        Ok(self)
    }
}

/// `α = T^{-δ/2}`, `ε = T^{-3δ/2}` for `δ ∈ (0, 1/2)`.
pub fn stepsizes_convex(t: u64, delta: f64) -> Result<StepSizes> {
    if t == 0 {
        return Err(Error::invalid("step-size schedule needs T >= 1"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::invalid(format!("delta={delta} outside the open interval (0, 1/2)")));
    }
    let t = t as f64;
    Ok(StepSizes { alpha: t.powf(-delta / 2.0), eps: t.powf(-1.5 * delta), schedule: Schedule::Convex { delta } })
}

/// `α = T^{-1/6}`, `ε = T^{-1/2}`.
pub fn stepsizes_nonconvex(t: u64) -> Result<StepSizes> {
    if t == 0 {
        return Err(Error::invalid("step-size schedule needs T >= 1"));
    }
    let t = t as f64;
    Ok(StepSizes { alpha: t.powf(-1.0 / 6.0), eps: 1.0 / t.sqrt(), schedule: Schedule::Nonconvex })
}

/// `x_i ← (1 - ε + ε w_ii) x_i + ε Σ_{j≠i} w_ij z_j - αε g_i`.
pub fn quantimed_update(
    models: &[Vec<f64>],
    messages: &[Vec<f64>],
    w: &MixingMatrix,
    sizes: StepSizes,
    grads: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let (alpha, eps) = (sizes.alpha, sizes.eps);
    (0..models.len())
        .map(|i| {
            let self_weight = 1.0 - eps + eps * w.weight(i, i);
            let mut out: Vec<f64> = models[i].iter().map(|x| self_weight * x).collect();
            for (j, zj) in messages.iter().enumerate() {
                let wij = w.weight(i, j);
                if j != i && wij != 0.0 {
                    for (o, z) in out.iter_mut().zip(zj) {
                        *o += eps * wij * z;
                    }
                }
            }
            for (o, g) in out.iter_mut().zip(&grads[i]) {
                *o -= alpha * eps * g;
            }
            out
        })
        .collect()
}

/// `x_i ← Σ_j w_ij x_j - α g_i`, where `x_j` is whatever node `i` holds for `j`.
pub fn dsgd_update(models: &[Vec<f64>], w: &MixingMatrix, alpha: f64, grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..models.len()).map(|i| dsgd_node_update(i, models, w, alpha, &grads[i])).collect()
}

fn dsgd_node_update(i: usize, view: &[Vec<f64>], w: &MixingMatrix, alpha: f64, grad: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grad.len()];
    for (j, xj) in view.iter().enumerate() {
        let wij = w.weight(i, j);
        if wij != 0.0 {
            for (o, x) in out.iter_mut().zip(xj) {
                *o += wij * x;
            }
        }
    }
    for (o, g) in out.iter_mut().zip(grad) {
        *o -= alpha * g;
    }
    out
}

/// Time cost of one model exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommModel {
    /// Seconds to send one 16-bit p-vector.
    pub tc: f64,
    /// Multiply by the largest node degree (sequential sends).
    pub per_degree: bool,
}

/// Everything a run needs besides its evolving state.
#[derive(Debug, Clone)]
pub struct Setup {
    pub objective: Objective,
    pub shards: DataShards,
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub precision: MessagePrecision,
    pub speed: SpeedModel,
    pub sizes: StepSizes,
    pub comm: CommModel,
    pub streams: Streams,
}

impl Setup {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn comm_seconds(&self, precision: MessagePrecision) -> f64 {
        let max_degree = (0..self.n()).map(|i| self.graph.degree(i)).max().unwrap_or(0);
        let factor = if self.comm.per_degree { max_degree as f64 } else { 1.0 };
        precision.comm_time(self.comm.tc) * factor
    }

    /// Bytes on the wire for one all-neighbors exchange.
    pub fn round_bytes(&self, precision: MessagePrecision) -> u64 {
        let per_message = precision.message_bytes(self.objective.dim());
        (0..self.n()).map(|i| self.graph.degree(i) as u64 * per_message).sum()
    }

    fn check(&self) -> Result<()> {
        let n = self.n();
        if self.mixing.n() != n || self.shards.n() != n {
            return Err(Error::invalid(format!(
                "size mismatch: graph n={n}, mixing n={}, shards n={}",
                self.mixing.n(),
                self.shards.n()
            )));
        }
        if !self.mixing.conforms_to(&self.graph) {
            return Err(Error::invalid("mixing matrix has weight on a non-edge"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub models: Vec<Vec<f64>>,
    pub clock: SimClock,
    pub iteration: u64,
}

impl SimState {
    /// All nodes start at the origin.
    pub fn zeros(n: usize, p: usize) -> Self {
        Self::from_models(vec![vec![0.0; p]; n])
    }

    pub fn from_models(models: Vec<Vec<f64>>) -> Self {
        SimState { models, clock: SimClock::new(), iteration: 0 }
    }
}

/// What happened during one synchronous round.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// Values received by neighbors (`z_{j,t}`); equal to the models when exact.
    pub messages: Vec<Vec<f64>>,
    pub samples: Vec<GradSample>,
    pub clamped: usize,
    pub round_seconds: f64,
    pub bytes: u64,
}

impl StepReport {
    pub fn gradients(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.gradient.clone()).collect()
    }
}

fn publish(setup: &Setup, precision: MessagePrecision, models: &[Vec<f64>], t: u64) -> Result<(Vec<Vec<f64>>, usize)> {
    match precision {
        MessagePrecision::Exact => Ok((models.to_vec(), 0)),
        MessagePrecision::Quantized(spec) => {
            let mut clamped = 0;
            let mut out = Vec::with_capacity(models.len());
            for (i, x) in models.iter().enumerate() {
                let mut rng = setup.streams.stream(i as u64, Purpose::Quantize, t);
                let q = quantize(x, &spec, &mut rng)?;
                clamped += q.clamped;
                out.push(dequantize(&q.vector));
            }
            Ok((out, clamped))
        }
    }
}

fn round_speeds(setup: &Setup, t: u64) -> Vec<f64> {
    (0..setup.n()).map(|i| setup.speed.draw(&mut setup.streams.stream(i as u64, Purpose::Speed, t))).collect()
}

fn gradients(setup: &Setup, models: &[Vec<f64>], batch_sizes: &[usize], t: u64) -> Result<Vec<GradSample>> {
    let m = setup.shards.m();
    models
        .iter()
        .zip(batch_sizes)
        .enumerate()
        .map(|(i, (x, &size))| {
            let batch = sample_batch(m, size, &mut setup.streams.stream(i as u64, Purpose::Batch, t));
            deadline_stochastic_gradient(&setup.objective, &setup.shards, i, t as usize, x, batch)
        })
        .collect()
}

fn advance(state: &mut SimState, models: Vec<Vec<f64>>, seconds: f64) {
    state.models = models;
    state.clock.advance(seconds);
    state.iteration += 1;
}

/// One QuanTimed-DSGD round: node `i` computes `floor(V_{i,t}·T_d)` sample
/// gradients (capped at `m`), the round lasts `T_d` plus exchange time.
pub fn quantimed_step(setup: &Setup, state: &mut SimState, deadline: f64) -> Result<StepReport> {
    let t = state.iteration;
    let (messages, clamped) = publish(setup, setup.precision, &state.models, t)?;
    let m = setup.shards.m();
    let sizes: Vec<usize> = round_speeds(setup, t).iter().map(|&v| batch_size_for_deadline(v, deadline, m)).collect();
    let samples = gradients(setup, &state.models, &sizes, t)?;
    let grads: Vec<Vec<f64>> = samples.iter().map(|s| s.gradient.clone()).collect();
    let next = quantimed_update(&state.models, &messages, &setup.mixing, setup.sizes, &grads);
    let round_seconds = compute_phase(RoundMode::Deadline { deadline }, &[]) + setup.comm_seconds(setup.precision);
    advance(state, next, round_seconds);
    Ok(StepReport { messages, samples, clamped, round_seconds, bytes: setup.round_bytes(setup.precision) })
}

/// One Q-DSGD round: same update as QuanTimed-DSGD with a fixed batch, and
/// the round waits for the slowest node.
pub fn qdsgd_step(setup: &Setup, state: &mut SimState, batch: usize) -> Result<StepReport> {
    let t = state.iteration;
    let (messages, clamped) = publish(setup, setup.precision, &state.models, t)?;
    let speeds = round_speeds(setup, t);
    let samples = gradients(setup, &state.models, &vec![batch; setup.n()], t)?;
    let grads: Vec<Vec<f64>> = samples.iter().map(|s| s.gradient.clone()).collect();
    let next = quantimed_update(&state.models, &messages, &setup.mixing, setup.sizes, &grads);
    let round_seconds = compute_phase(RoundMode::FixedBatch { batch }, &speeds) + setup.comm_seconds(setup.precision);
    advance(state, next, round_seconds);
    Ok(StepReport { messages, samples, clamped, round_seconds, bytes: setup.round_bytes(setup.precision) })
}

/// One DSGD round: exact exchange, `x_i ← Σ_j w_ij x_j - α g_i`.
pub fn dsgd_step(setup: &Setup, state: &mut SimState, batch: usize) -> Result<StepReport> {
    let t = state.iteration;
    let speeds = round_speeds(setup, t);
    let samples = gradients(setup, &state.models, &vec![batch; setup.n()], t)?;
    let grads: Vec<Vec<f64>> = samples.iter().map(|s| s.gradient.clone()).collect();
    let next = dsgd_update(&state.models, &setup.mixing, setup.sizes.alpha, &grads);
    let exact = MessagePrecision::Exact;
    let round_seconds = compute_phase(RoundMode::FixedBatch { batch }, &speeds) + setup.comm_seconds(exact);
    let messages = std::mem::take(&mut state.models.clone());
    advance(state, next, round_seconds);
    Ok(StepReport { messages, samples, clamped: 0, round_seconds, bytes: setup.round_bytes(exact) })
}

/// Event-driven asynchronous DSGD.
///
/// A node firing at time `τ` reads, for each neighbor, the message that
/// neighbor published strictly before `τ`; simultaneous firings all see the
/// pre-instant state. Each cycle lasts `b/V + exchange time`.
#[derive(Debug)]
pub struct AsyncEngine<'a> {
    setup: &'a Setup,
    batch: usize,
    precision: MessagePrecision,
    schedule: AsyncSchedule,
    models: Vec<Vec<f64>>,
    published: Vec<Vec<f64>>,
    updates: Vec<u64>,
    now: f64,
    clamped: usize,
    bytes: u64,
}

impl<'a> AsyncEngine<'a> {
    /// `precision` is normally exact; a quantized mode is available but untested
    /// against any reference behavior.
    pub fn new(setup: &'a Setup, models: Vec<Vec<f64>>, batch: usize, precision: MessagePrecision) -> Result<Self> {
        setup.check()?;
        let overhead = setup.comm_seconds(precision);
        let schedule = AsyncSchedule::homogeneous(setup.n(), &setup.speed, batch, overhead, setup.streams)?;
        let (published, clamped) = publish(setup, precision, &models, 0)?;
        let n = setup.n();
        Ok(AsyncEngine { setup, batch, precision, schedule, models, published, updates: vec![0; n], now: 0.0, clamped, bytes: 0 })
    }

    pub fn models(&self) -> &[Vec<f64>] {
        &self.models
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn updates(&self) -> &[u64] {
        &self.updates
    }

    pub fn next_time(&self) -> Option<f64> {
        self.schedule.peek_time()
    }

    /// Bytes sent since the last call.
    pub fn take_bytes(&mut self) -> u64 {
        std::mem::take(&mut self.bytes)
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    /// Processes every event at the next event time; returns them.
    pub fn process_next_instant(&mut self) -> Result<Vec<AsyncEvent>> {
        let Some(t) = self.schedule.peek_time() else { return Ok(Vec::new()) };
        let mut events = Vec::new();
        while self.schedule.peek_time() == Some(t) {
            events.push(self.schedule.next().expect("peeked"));
        }
        let m = self.setup.shards.m();
        let mut fresh = Vec::with_capacity(events.len());
        for ev in &events {
            let i = ev.node;
            let k = self.updates[i];
            let batch = sample_batch(m, self.batch, &mut self.setup.streams.stream(i as u64, Purpose::Batch, k));
            let g = deadline_stochastic_gradient(&self.setup.objective, &self.setup.shards, i, k as usize, &self.models[i], batch)?;
            // node i uses its own exact model and the latest published neighbor values
            let mut view = self.published.clone();
            view[i] = self.models[i].clone();
            fresh.push((i, dsgd_node_update(i, &view, &self.setup.mixing, self.setup.sizes.alpha, &g.gradient)));
        }
        let per_message = self.precision.message_bytes(self.setup.objective.dim());
        for (i, x) in fresh {
            self.updates[i] += 1;
            let (msg, clamped) = match self.precision {
                MessagePrecision::Exact => (x.clone(), 0),
                MessagePrecision::Quantized(spec) => {
                    let mut rng = self.setup.streams.stream(i as u64, Purpose::Quantize, self.updates[i]);
                    let q = quantize(&x, &spec, &mut rng)?;
                    (dequantize(&q.vector), q.clamped)
                }
            };
            self.clamped += clamped;
            self.bytes += self.setup.graph.degree(i) as u64 * per_message;
            self.published[i] = msg;
            self.models[i] = x;
        }
        self.now = t;
        Ok(events)
    }
}

/// How a run is driven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunPlan {
    /// `iterations` synchronous rounds; a row every `record_every` rounds
    /// plus the initial and final state.
    Rounds { iterations: u64, record_every: u64 },
    /// Asynchronous execution until `budget` simulated seconds, sampled at
    /// `samples + 1` evenly spaced instants.
    TimeBudget { budget: f64, samples: u64 },
}

/// Work per node per round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Workload {
    Deadline { seconds: f64 },
    Batch { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Mean of `‖∇f(x̄_t)‖²` over `t = 0..T-1`.
    pub mean_grad_norm_sq: f64,
    /// Mean of the consensus error over `t = 0..T-1`.
    pub mean_consensus: f64,
    pub iterations: u64,
    pub clamped: u64,
    pub final_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub final_models: Vec<Vec<f64>>,
    pub summary: RunSummary,
}

/// Metrics of a set of models at a given time.
pub fn measure(setup: &Setup, models: &[Vec<f64>], iter: u64, time: f64, bytes: u64) -> MetricsRow {
    let avg = mean(models);
    let gap = setup.objective.optimum().map(|opt| models.iter().map(|x| dist_sq(x, opt)).sum::<f64>() / models.len() as f64);
    MetricsRow {
        iter,
        sim_time_s: time,
        loss: global_loss(&setup.objective, &setup.shards, &avg),
        gap,
        consensus: consensus_error(models),
        grad_norm_sq: norm_sq(&global_gradient(&setup.objective, &setup.shards, &avg)),
        bytes,
    }
}

/// Runs one algorithm from `initial` models.
pub fn run(setup: &Setup, algo: Algorithm, workload: Workload, plan: RunPlan, initial: Vec<Vec<f64>>) -> Result<RunOutput> {
    setup.check()?;
    if initial.len() != setup.n() || initial.iter().any(|x| x.len() != setup.objective.dim()) {
        return Err(Error::invalid("initial models do not match n x p"));
    }
    match (algo, plan) {
        (Algorithm::Async, RunPlan::TimeBudget { budget, samples }) => {
            let Workload::Batch { size } = workload else {
                return Err(Error::invalid("async runs need a fixed batch, not a deadline"));
            };
            run_async(setup, initial, size, budget, samples)
        }
        (Algorithm::Async, _) => Err(Error::invalid("async runs are driven by a time budget")),
        (_, RunPlan::Rounds { iterations, record_every }) => run_sync(setup, algo, workload, iterations, record_every.max(1), initial),
        (_, RunPlan::TimeBudget { .. }) => Err(Error::invalid("synchronous runs are driven by an iteration count")),
    }
}

fn run_sync(setup: &Setup, algo: Algorithm, workload: Workload, iterations: u64, every: u64, initial: Vec<Vec<f64>>) -> Result<RunOutput> {
    let mut state = SimState::from_models(initial);
    let mut rows = vec![measure(setup, &state.models, 0, 0.0, 0)];
    let (mut grad_acc, mut cons_acc) = (0.0, 0.0);
    let mut clamped = 0u64;
    let mut bytes_since = 0u64;
    for t in 0..iterations {
        // rows[..] already holds the state at t when t is a recording point
        let current = if rows.last().is_some_and(|r| r.iter == t) {
            rows.last().cloned().expect("non-empty")
        } else {
            measure(setup, &state.models, t, state.clock.now(), 0)
        };
        grad_acc += current.grad_norm_sq;
        cons_acc += current.consensus;

        let report = match (algo, workload) {
            (Algorithm::Quantimed, Workload::Deadline { seconds }) => quantimed_step(setup, &mut state, seconds),
            (Algorithm::Qdsgd, Workload::Batch { size }) => qdsgd_step(setup, &mut state, size),
            (Algorithm::Dsgd, Workload::Batch { size }) => dsgd_step(setup, &mut state, size),
            (a, w) => Err(Error::invalid(format!("{} cannot run with workload {w:?}", a.name()))),
        }
        .map_err(|e| Error::AtIteration { iteration: t as usize, source: Box::new(e) })?;
        clamped += report.clamped as u64;
        bytes_since += report.bytes;

        let done = t + 1;
        if done % every == 0 || done == iterations {
            rows.push(measure(setup, &state.models, done, state.clock.now(), bytes_since));
            bytes_since = 0;
        }
    }
    let denom = iterations.max(1) as f64;
    let summary = RunSummary {
        mean_grad_norm_sq: if iterations == 0 { rows[0].grad_norm_sq } else { grad_acc / denom },
        mean_consensus: if iterations == 0 { rows[0].consensus } else { cons_acc / denom },
        iterations,
        clamped,
        final_time_s: state.clock.now(),
    };
    Ok(RunOutput { rows, final_models: state.models, summary })
}

fn run_async(setup: &Setup, initial: Vec<Vec<f64>>, batch: usize, budget: f64, samples: u64) -> Result<RunOutput> {
    if !(budget >= 0.0 && budget.is_finite()) || samples == 0 {
        return Err(Error::invalid("async runs need a finite budget >= 0 and samples >= 1"));
    }
    let mut engine = AsyncEngine::new(setup, initial, batch, MessagePrecision::Exact)?;
    let mut rows = Vec::with_capacity(samples as usize + 1);
    let (mut grad_acc, mut cons_acc) = (0.0, 0.0);
    for k in 0..=samples {
        let grid = budget * k as f64 / samples as f64;
        while engine.next_time().is_some_and(|t| t <= grid) {
            engine.process_next_instant()?;
        }
        let bytes = engine.take_bytes();
        let row = measure(setup, engine.models(), k, grid, bytes);
        if k < samples {
            grad_acc += row.grad_norm_sq;
            cons_acc += row.consensus;
        }
        rows.push(row);
    }
    let summary = RunSummary {
        mean_grad_norm_sq: grad_acc / samples as f64,
        mean_consensus: cons_acc / samples as f64,
        iterations: engine.updates().iter().sum(),
        clamped: engine.clamped() as u64,
        final_time_s: budget,
    };
    Ok(RunOutput { rows, final_models: engine.models().to_vec(), summary })
}
