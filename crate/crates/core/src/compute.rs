//! Node speed model, deadline/batch conversion, and simulated time.
//!
//! Speeds are in per-sample gradients per second. A node working to a
//! deadline `T_d` finishes `floor(V·T_d)` gradients (capped at `m`); a
//! fixed-batch round lasts until the slowest node finishes `b` gradients.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamRng, Streams};

/// Absorbs products like `50 × 0.8 = 39.999…` before flooring.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedModel {
    Uniform { lo: f64, hi: f64 },
    Degenerate { value: f64 },
    Empirical { values: Vec<f64> },
}

impl SpeedModel {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let m = SpeedModel::Uniform { lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn degenerate(value: f64) -> Result<Self> {
        let m = SpeedModel::Degenerate { value };
        m.validate()?;
        Ok(m)
    }

    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        let m = SpeedModel::Empirical { values };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match self {
            SpeedModel::Uniform { lo, hi } if ok(*lo) && ok(*hi) && lo <= hi => Ok(()),
            SpeedModel::Degenerate { value } if ok(*value) => Ok(()),
            SpeedModel::Empirical { values } if !values.is_empty() && values.iter().all(|&v| ok(v)) => Ok(()),
            other => Err(Error::invalid(format!("speed model needs bounded positive support: {other:?}"))),
        }
    }

    /// `[v_min, v_max]` of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SpeedModel::Uniform { lo, hi } => (*lo, *hi),
            SpeedModel::Degenerate { value } => (*value, *value),
            SpeedModel::Empirical { values } => (
                values.iter().copied().fold(f64::INFINITY, f64::min),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            SpeedModel::Uniform { lo, hi } => 0.5 * (lo + hi),
            SpeedModel::Degenerate { value } => *value,
            SpeedModel::Empirical { values } => values.iter().sum::<f64>() / values.len() as f64,
        }
    }

    /// `E[1/V]`.
    pub fn expected_inverse(&self) -> f64 {
        match self {
            SpeedModel::Uniform { lo, hi } if hi > lo => (hi.ln() - lo.ln()) / (hi - lo),
            SpeedModel::Uniform { lo, .. } => 1.0 / lo,
            SpeedModel::Degenerate { value } => 1.0 / value,
            SpeedModel::Empirical { values } => values.iter().map(|v| 1.0 / v).sum::<f64>() / values.len() as f64,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SpeedModel::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            SpeedModel::Degenerate { value } => *value,
            SpeedModel::Empirical { values } => values[rng.random_range(0..values.len())],
        }
    }
}

pub fn draw_speed<R: Rng + ?Sized>(model: &SpeedModel, rng: &mut R) -> f64 {
    model.draw(rng)
}

/// `min(floor(v·T_d), m)`.
pub fn batch_size_for_deadline(v: f64, deadline: f64, m: usize) -> usize {
    let raw = (v * deadline + FLOOR_SLACK).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(m)
    }
}

/// `T_d = b / E[V]`, so the expected batch is `b`.
pub fn deadline_for_batch(b: f64, model: &SpeedModel) -> f64 {
    b / model.mean()
}

/// `T_d = b·E[1/V]`, so the effective (variance-equivalent) batch is `b`.
pub fn deadline_for_effective_batch(b: f64, model: &SpeedModel) -> f64 {
    b * model.expected_inverse()
}

pub fn expected_inverse_speed(model: &SpeedModel) -> f64 {
    model.expected_inverse()
}

/// `min(T_d / E[1/V], m)`.
pub fn effective_batch(deadline: f64, model: &SpeedModel, m: usize) -> f64 {
    (deadline / model.expected_inverse()).min(m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RoundMode {
    Deadline { deadline: f64 },
    FixedBatch { batch: usize },
}

/// Compute phase of one synchronous round given this round's speeds.
pub fn compute_phase(mode: RoundMode, speeds: &[f64]) -> f64 {
    match mode {
        RoundMode::Deadline { deadline } => deadline,
        RoundMode::FixedBatch { batch } => {
            let slowest = speeds.iter().copied().fold(f64::INFINITY, f64::min);
            batch as f64 / slowest
        }
    }
}

/// Duration of one synchronous round: compute phase plus `comm_seconds`.
/// Fixed-batch mode draws `n` fresh speeds from `rng`.
pub fn sync_round_time<R: Rng + ?Sized>(mode: RoundMode, model: &SpeedModel, n: usize, comm_seconds: f64, rng: &mut R) -> f64 {
    let speeds: Vec<f64> = match mode {
        RoundMode::Deadline { .. } => Vec::new(),
        RoundMode::FixedBatch { .. } => (0..n).map(|_| model.draw(rng)).collect(),
    };
    compute_phase(mode, &speeds) + comm_seconds
}

/// Simulated wall clock.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn new() -> Self {
        SimClock { now: 0.0 }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn advance(&mut self, seconds: f64) {
        assert!(seconds >= 0.0, "clock cannot run backwards ({seconds})");
        self.now += seconds;
    }

    pub fn advance_to(&mut self, t: f64) {
        assert!(t >= self.now, "clock cannot run backwards ({} -> {t})", self.now);
        self.now = t;
    }
}

/// A node finishing its `seq`-th local update at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsyncEvent {
    pub time: f64,
    pub node: usize,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending(AsyncEvent);

impl Eq for Pending {}

impl Ord for Pending {
    // BinaryHeap is a max-heap: reverse so the earliest (then lowest index) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.time.total_cmp(&self.0.time).then(other.0.node.cmp(&self.0.node))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Event stream of asynchronous workers. Node `i`'s `k`-th update completes
/// at `Σ_{j<=k} (b / V_{i,j} + overhead)`; events come out ordered by time,
/// ties broken by node index.
#[derive(Debug, Clone)]
pub struct AsyncSchedule {
    speeds: Vec<SpeedModel>,
    batch: usize,
    overhead: f64,
    streams: Streams,
    heap: BinaryHeap<Pending>,
}

impl AsyncSchedule {
    /// One speed model per node. `overhead` is added to every cycle (use 0
    /// for a compute-only schedule).
    pub fn new(speeds: Vec<SpeedModel>, batch: usize, overhead: f64, streams: Streams) -> Result<Self> {
        if batch == 0 {
            return Err(Error::invalid("async schedule needs batch >= 1"));
        }
        if !(overhead >= 0.0 && overhead.is_finite()) {
            return Err(Error::invalid("async overhead must be finite and >= 0"));
        }
        for s in &speeds {
            s.validate()?;
        }
        let mut sched = AsyncSchedule { speeds, batch, overhead, streams, heap: BinaryHeap::new() };
        for node in 0..sched.speeds.len() {
            let first = sched.cycle_seconds(node, 0);
            sched.heap.push(Pending(AsyncEvent { time: first, node, seq: 0 }));
        }
        Ok(sched)
    }

    pub fn homogeneous(n: usize, model: &SpeedModel, batch: usize, overhead: f64, streams: Streams) -> Result<Self> {
        Self::new(vec![model.clone(); n], batch, overhead, streams)
    }

    fn cycle_seconds(&self, node: usize, seq: u64) -> f64 {
        let mut rng: StreamRng = self.streams.stream(node as u64, Purpose::AsyncSpeed, seq);
        self.batch as f64 / self.speeds[node].draw(&mut rng) + self.overhead
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|p| p.0.time)
    }
}

impl Iterator for AsyncSchedule {
    type Item = AsyncEvent;

    fn next(&mut self) -> Option<AsyncEvent> {
        let Pending(ev) = self.heap.pop()?;
        let next = ev.time + self.cycle_seconds(ev.node, ev.seq + 1);
        self.heap.push(Pending(AsyncEvent { time: next, node: ev.node, seq: ev.seq + 1 }));
        Some(ev)
    }
}

/// Compute-only asynchronous schedule for `n` identical nodes.
pub fn async_schedule(n: usize, b: usize, model: &SpeedModel, streams: Streams) -> Result<AsyncSchedule> {
    AsyncSchedule::homogeneous(n, model, b, 0.0, streams)
}
