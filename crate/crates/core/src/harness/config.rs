//! Flat `section.key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Top-level keys have no section (`algo`, `seed`, `n`, `m`, `p`, `T`).
//! A sweep is a base file plus override lines, where later lines replace
//! earlier ones (see [`parse_with_overrides`]).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::algorithms::{Algorithm, CommModel};
use crate::compute::SpeedModel;
use crate::error::{Error, Result};
use crate::objectives::mlp_param_count;
use crate::quantize::QuantizerSpec;
use crate::topology::DEFAULT_KAPPA_MARGIN;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveConfig {
    Quadratic,
    Logistic { lambda: f64, csv: Option<String> },
    Mlp { in_dim: usize, hidden: usize },
}

impl ObjectiveConfig {
    pub fn is_convex(&self) -> bool {
        !matches!(self, ObjectiveConfig::Mlp { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyKind {
    ErdosRenyi { p_c: f64 },
    Ring,
    Path,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaChoice {
    Explicit(f64),
    /// `κ = (1 + margin)·λ_max(L)/2`.
    Margin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    pub kappa: KappaChoice,
}

/// Per-round work: a fixed batch, or a deadline given directly or through
/// a batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkSpec {
    /// Baselines: batch size. QuanTimed: `T_d = b / E[V]`.
    Batch(usize),
    Deadline(f64),
    /// `T_d = b · E[1/V]`, so the expected deadline batch matches `b`.
    Effective(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Iterations(u64),
    Budget { seconds: f64, samples: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Convex { delta: f64 },
    Nonconvex,
    Constant { alpha: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub schedule: StepSchedule,
    pub alpha_scale: f64,
    pub eps_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitConfig {
    Zero,
    /// Every node starts at one common `N(0, scale²)` draw.
    Normal { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algorithm,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub objective: ObjectiveConfig,
    pub topology: TopologyConfig,
    pub quantizer: Option<QuantizerSpec>,
    pub speed: SpeedModel,
    pub horizon: Horizon,
    pub work: WorkSpec,
    pub step: StepConfig,
    pub comm: CommModel,
    pub init: InitConfig,
    pub record_every: u64,
}

const KEYS: &[&str] = &[
    "algo",
    "seed",
    "n",
    "m",
    "p",
    "T",
    "objective.family",
    "objective.lambda",
    "objective.csv",
    "objective.in_dim",
    "objective.hidden",
    "topology.kind",
    "topology.p_c",
    "topology.kappa",
    "topology.margin",
    "quantizer.bits",
    "quantizer.eta",
    "quantizer.lo",
    "speed.kind",
    "speed.lo",
    "speed.hi",
    "speed.value",
    "speed.values",
    "batch.b",
    "batch.deadline",
    "batch.effective",
    "step.schedule",
    "step.delta",
    "step.alpha",
    "step.eps",
    "step.alpha_scale",
    "step.eps_scale",
    "comm.tc",
    "comm.per_degree",
    "async.budget",
    "async.samples",
    "init.kind",
    "init.scale",
    "record.every",
];

#[derive(Debug, Default)]
struct Raw {
    entries: BTreeMap<&'static str, (usize, String)>,
}

fn config_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config { line, reason: reason.into() }
}

impl Raw {
    fn absorb(&mut self, text: &str, first_line: usize, allow_replace: bool) -> Result<()> {
        for (idx, raw_line) in text.lines().enumerate() {
            let line = first_line + idx;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_err(line, format!("expected `key = value`, got `{content}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|&&k| k == key) else {
                return Err(config_err(line, format!("unknown key `{key}`")));
            };
            if value.is_empty() {
                return Err(config_err(line, format!("empty value for `{key}`")));
            }
            if let Some((prev, _)) = self.entries.get(known) {
                if !allow_replace {
                    return Err(config_err(line, format!("duplicate key `{key}` (first set at line {prev})")));
                }
            }
            self.entries.insert(known, (line, value.to_string()));
        }
        Ok(())
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(l, _)| *l)
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| config_err(*line, format!("expected {what} for `{key}`, got `{v}`"))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parsed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(config_err(self.line(key).unwrap_or(0), format!("`{key}` must be finite"))),
            other => Ok(other),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.parsed(key, "a non-negative integer")
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.parsed(key, "a non-negative integer")
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.parsed(key, "`true` or `false`")
    }

    fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some((line, v)) = self.entries.get(key) else { return Ok(None) };
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| config_err(*line, format!("expected a comma-separated list of numbers for `{key}`, got `{v}`"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn err(&self, key: &str, reason: impl Into<String>) -> Error {
        config_err(self.line(key).unwrap_or(0), reason)
    }

    /// Rejects `key` when it is set, with `reason`.
    fn forbid(&self, key: &str, reason: &str) -> Result<()> {
        if self.has(key) {
            return Err(self.err(key, format!("`{key}` not allowed: {reason}")));
        }
        Ok(())
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut raw = Raw::default();
    raw.absorb(text, 1, false)?;
    resolve(&raw)
}

/// Parses `base`, then applies `overrides` (each a `key = value` line)
/// replacing any earlier value. Override lines are numbered after the base.
pub fn parse_with_overrides(base: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut raw = Raw::default();
    raw.absorb(base, 1, false)?;
    let mut next = base.lines().count() + 1;
    for o in overrides {
        raw.absorb(o, next, true)?;
        next += o.lines().count().max(1);
    }
    resolve(&raw)
}

fn positive(raw: &Raw, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(raw.err(key, format!("`{key}` must be positive, got {v}")))
    }
}

fn resolve(raw: &Raw) -> Result<ExperimentConfig> {
    let algo_text = raw.str("algo").ok_or(Error::MissingKey("algo"))?;
    let algo = Algorithm::parse(algo_text)
        .ok_or_else(|| raw.err("algo", format!("unknown algo `{algo_text}` (expected quantimed, dsgd, qdsgd or async)")))?;
    let seed = raw.u64("seed")?.ok_or(Error::MissingKey("seed"))?;
    let n = raw.usize("n")?.unwrap_or(10);
    let m = raw.usize("m")?.unwrap_or(20);
    if n == 0 {
        return Err(raw.err("n", "`n` must be at least 1"));
    }
    if m == 0 {
        return Err(raw.err("m", "`m` must be at least 1"));
    }

    let family = raw.str("objective.family").unwrap_or("quadratic");
    let objective = match family {
        "quadratic" | "logistic" => {
            raw.forbid("objective.in_dim", "only the mlp family has in_dim")?;
            raw.forbid("objective.hidden", "only the mlp family has hidden")?;
            if family == "quadratic" {
                raw.forbid("objective.lambda", "only the logistic family has lambda")?;
                raw.forbid("objective.csv", "only the logistic family reads a dataset")?;
                ObjectiveConfig::Quadratic
            } else {
                let lambda = raw.f64("objective.lambda")?.unwrap_or(0.01);
                if lambda < 0.0 {
                    return Err(raw.err("objective.lambda", "`objective.lambda` must be >= 0"));
                }
                ObjectiveConfig::Logistic { lambda, csv: raw.str("objective.csv").map(str::to_string) }
            }
        }
        "mlp" => {
            raw.forbid("objective.lambda", "only the logistic family has lambda")?;
            raw.forbid("objective.csv", "only the logistic family reads a dataset")?;
            let in_dim = raw.usize("objective.in_dim")?.unwrap_or(8);
            let hidden = raw.usize("objective.hidden")?.unwrap_or(10);
            if in_dim == 0 || hidden == 0 {
                return Err(raw.err(if in_dim == 0 { "objective.in_dim" } else { "objective.hidden" }, "mlp dimensions must be at least 1"));
            }
            ObjectiveConfig::Mlp { in_dim, hidden }
        }
        other => return Err(raw.err("objective.family", format!("unknown family `{other}` (expected quadratic, logistic or mlp)"))),
    };
    let p = match (&objective, raw.usize("p")?) {
        (ObjectiveConfig::Mlp { in_dim, hidden }, given) => {
            let count = mlp_param_count(*in_dim, *hidden);
            if let Some(g) = given.filter(|&g| g != count) {
                return Err(raw.err("p", format!("p={g} disagrees with the mlp parameter count {count}")));
            }
            count
        }
        (_, Some(0)) => return Err(raw.err("p", "`p` must be at least 1")),
        (_, given) => given.unwrap_or(2),
    };

    let topology = resolve_topology(raw)?;
    let quantizer = resolve_quantizer(raw, algo)?;
    let speed = resolve_speed(raw)?;

    let horizon = if algo == Algorithm::Async {
        raw.forbid("T", "async runs use async.budget instead of an iteration count")?;
        let seconds = raw.f64("async.budget")?.ok_or(Error::MissingKey("async.budget"))?;
        if seconds < 0.0 {
            return Err(raw.err("async.budget", "`async.budget` must be >= 0"));
        }
        let samples = raw.u64("async.samples")?.unwrap_or(200);
        if samples == 0 {
            return Err(raw.err("async.samples", "`async.samples` must be at least 1"));
        }
        Horizon::Budget { seconds, samples }
    } else {
        raw.forbid("async.budget", "only async runs take a time budget")?;
        raw.forbid("async.samples", "only async runs take a time budget")?;
        Horizon::Iterations(raw.u64("T")?.ok_or(Error::MissingKey("T"))?)
    };

    let work = resolve_work(raw, algo)?;
    let step = resolve_step(raw, algo, &objective)?;
    let tc = raw.f64("comm.tc")?.unwrap_or(0.0);
    if tc < 0.0 {
        return Err(raw.err("comm.tc", "`comm.tc` must be >= 0"));
    }
    let comm = CommModel { tc, per_degree: raw.bool("comm.per_degree")?.unwrap_or(false) };

    let init = match raw.str("init.kind").unwrap_or("zero") {
        "zero" => {
            raw.forbid("init.scale", "init.kind = zero has no scale")?;
            InitConfig::Zero
        }
        "normal" => InitConfig::Normal { scale: positive(raw, "init.scale", raw.f64("init.scale")?.unwrap_or(1.0))? },
        other => return Err(raw.err("init.kind", format!("unknown init `{other}` (expected zero or normal)"))),
    };
    let record_every = raw.u64("record.every")?.unwrap_or(1);
    if record_every == 0 {
        return Err(raw.err("record.every", "`record.every` must be at least 1"));
    }

    Ok(ExperimentConfig { algo, seed, n, m, p, objective, topology, quantizer, speed, horizon, work, step, comm, init, record_every })
}

fn resolve_topology(raw: &Raw) -> Result<TopologyConfig> {
    let kind = match raw.str("topology.kind").unwrap_or("erdos_renyi") {
        "erdos_renyi" => {
            let p_c = raw.f64("topology.p_c")?.unwrap_or(0.4);
            if !(0.0..=1.0).contains(&p_c) {
                return Err(raw.err("topology.p_c", format!("`topology.p_c` must lie in [0, 1], got {p_c}")));
            }
            TopologyKind::ErdosRenyi { p_c }
        }
        other => {
            raw.forbid("topology.p_c", "only erdos_renyi graphs have an edge probability")?;
            match other {
                "ring" => TopologyKind::Ring,
                "path" => TopologyKind::Path,
                "complete" => TopologyKind::Complete,
                _ => return Err(raw.err("topology.kind", format!("unknown topology `{other}` (expected erdos_renyi, ring, path or complete)"))),
            }
        }
    };
    let kappa = match (raw.f64("topology.kappa")?, raw.f64("topology.margin")?) {
        (Some(_), Some(_)) => return Err(raw.err("topology.margin", "set either topology.kappa or topology.margin, not both")),
        (Some(k), None) => KappaChoice::Explicit(positive(raw, "topology.kappa", k)?),
        (None, Some(mg)) => KappaChoice::Margin(positive(raw, "topology.margin", mg)?),
        (None, None) => KappaChoice::Margin(DEFAULT_KAPPA_MARGIN),
    };
    Ok(TopologyConfig { kind, kappa })
}

fn resolve_quantizer(raw: &Raw, algo: Algorithm) -> Result<Option<QuantizerSpec>> {
    let any = ["quantizer.bits", "quantizer.eta", "quantizer.lo"].iter().find(|k| raw.has(k));
    let Some(first) = any else { return Ok(None) };
    if matches!(algo, Algorithm::Dsgd | Algorithm::Async) {
        return Err(raw.err(first, format!("{} exchanges exact models; remove the quantizer section", algo.name())));
    }
    let bits = raw.parsed::<u8>("quantizer.bits", "an integer in 1..=16")?.ok_or(Error::MissingKey("quantizer.bits"))?;
    let eta = raw.f64("quantizer.eta")?.ok_or(Error::MissingKey("quantizer.eta"))?;
    let spec = match raw.f64("quantizer.lo")? {
        Some(lo) => QuantizerSpec::with_lo(eta, bits, lo),
        None => QuantizerSpec::new(eta, bits),
    };
    spec.map(Some).map_err(|e| raw.err("quantizer.bits", e.to_string()))
}

fn resolve_speed(raw: &Raw) -> Result<SpeedModel> {
    let kind = raw.str("speed.kind").unwrap_or("uniform");
    let model = match kind {
        "uniform" => {
            raw.forbid("speed.value", "uniform speeds use lo/hi")?;
            raw.forbid("speed.values", "uniform speeds use lo/hi")?;
            SpeedModel::uniform(raw.f64("speed.lo")?.unwrap_or(10.0), raw.f64("speed.hi")?.unwrap_or(90.0))
        }
        "degenerate" => {
            raw.forbid("speed.lo", "degenerate speeds use value")?;
            raw.forbid("speed.hi", "degenerate speeds use value")?;
            raw.forbid("speed.values", "degenerate speeds use value")?;
            SpeedModel::degenerate(raw.f64("speed.value")?.ok_or(Error::MissingKey("speed.value"))?)
        }
        "empirical" => {
            raw.forbid("speed.lo", "empirical speeds use values")?;
            raw.forbid("speed.hi", "empirical speeds use values")?;
            raw.forbid("speed.value", "empirical speeds use values")?;
            SpeedModel::empirical(raw.f64_list("speed.values")?.ok_or(Error::MissingKey("speed.values"))?)
        }
        other => return Err(raw.err("speed.kind", format!("unknown speed model `{other}` (expected uniform, degenerate or empirical)"))),
    };
    model.map_err(|e| raw.err("speed.kind", e.to_string()))
}

fn resolve_work(raw: &Raw, algo: Algorithm) -> Result<WorkSpec> {
    let set: Vec<&str> = ["batch.b", "batch.deadline", "batch.effective"].into_iter().filter(|k| raw.has(k)).collect();
    if set.len() > 1 {
        return Err(raw.err(set[1], format!("set exactly one of batch.b, batch.deadline, batch.effective (found {})", set.join(", "))));
    }
    if algo != Algorithm::Quantimed {
        if let Some(k) = set.iter().find(|&&k| k != "batch.b") {
            return Err(raw.err(k, format!("{} runs use a fixed batch (batch.b), not a deadline", algo.name())));
        }
    }
    let work = match set.first() {
        None => return Err(Error::MissingKey(if algo == Algorithm::Quantimed { "batch.deadline" } else { "batch.b" })),
        Some(&"batch.b") => {
            let b = raw.usize("batch.b")?.unwrap_or(0);
            if b == 0 {
                return Err(raw.err("batch.b", "`batch.b` must be at least 1"));
            }
            WorkSpec::Batch(b)
        }
        Some(&"batch.deadline") => WorkSpec::Deadline(positive(raw, "batch.deadline", raw.f64("batch.deadline")?.unwrap_or(0.0))?),
        Some(_) => WorkSpec::Effective(positive(raw, "batch.effective", raw.f64("batch.effective")?.unwrap_or(0.0))?),
    };
    Ok(work)
}

fn resolve_step(raw: &Raw, algo: Algorithm, objective: &ObjectiveConfig) -> Result<StepConfig> {
    let default = if algo == Algorithm::Async {
        "constant"
    } else if objective.is_convex() {
        "convex"
    } else {
        "nonconvex"
    };
    let schedule = match raw.str("step.schedule").unwrap_or(default) {
        "convex" => {
            raw.forbid("step.alpha", "the convex schedule derives alpha from T")?;
            raw.forbid("step.eps", "the convex schedule derives eps from T")?;
            let delta = raw.f64("step.delta")?.unwrap_or(0.4);
            if !(delta > 0.0 && delta < 0.5) {
                return Err(raw.err("step.delta", format!("delta={delta} must lie in the open interval (0, 1/2)")));
            }
            StepSchedule::Convex { delta }
        }
        "nonconvex" => {
            raw.forbid("step.alpha", "the nonconvex schedule derives alpha from T")?;
            raw.forbid("step.eps", "the nonconvex schedule derives eps from T")?;
            raw.forbid("step.delta", "delta belongs to the convex schedule")?;
            StepSchedule::Nonconvex
        }
        "constant" => {
            raw.forbid("step.delta", "delta belongs to the convex schedule")?;
            let alpha = positive(raw, "step.alpha", raw.f64("step.alpha")?.ok_or(Error::MissingKey("step.alpha"))?)?;
            let eps = raw.f64("step.eps")?.unwrap_or(1.0);
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(raw.err("step.eps", format!("eps={eps} must lie in (0, 1]")));
            }
            StepSchedule::Constant { alpha, eps }
        }
        other => return Err(raw.err("step.schedule", format!("unknown schedule `{other}` (expected convex, nonconvex or constant)"))),
    };
    if algo == Algorithm::Async && !matches!(schedule, StepSchedule::Constant { .. }) {
        return Err(raw.err("step.schedule", "async runs have no iteration count; use step.schedule = constant"));
    }
    let alpha_scale = positive(raw, "step.alpha_scale", raw.f64("step.alpha_scale")?.unwrap_or(1.0))?;
    let eps_scale = positive(raw, "step.eps_scale", raw.f64("step.eps_scale")?.unwrap_or(1.0))?;
    Ok(StepConfig { schedule, alpha_scale, eps_scale })
}

impl ExperimentConfig {
    /// Canonical text with every default spelled out; re-parses to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("algo", self.algo.name().to_string());
        kv("seed", self.seed.to_string());
        kv("n", self.n.to_string());
        kv("m", self.m.to_string());
        kv("p", self.p.to_string());
        match self.horizon {
            Horizon::Iterations(t) => kv("T", t.to_string()),
            Horizon::Budget { seconds, samples } => {
                kv("async.budget", format!("{seconds:?}"));
                kv("async.samples", samples.to_string());
            }
        }
        match &self.objective {
            ObjectiveConfig::Quadratic => kv("objective.family", "quadratic".into()),
            ObjectiveConfig::Logistic { lambda, csv } => {
                kv("objective.family", "logistic".into());
                kv("objective.lambda", format!("{lambda:?}"));
                if let Some(path) = csv {
                    kv("objective.csv", path.clone());
                }
            }
            ObjectiveConfig::Mlp { in_dim, hidden } => {
                kv("objective.family", "mlp".into());
                kv("objective.in_dim", in_dim.to_string());
                kv("objective.hidden", hidden.to_string());
            }
        }
        match self.topology.kind {
            TopologyKind::ErdosRenyi { p_c } => {
                kv("topology.kind", "erdos_renyi".into());
                kv("topology.p_c", format!("{p_c:?}"));
            }
            TopologyKind::Ring => kv("topology.kind", "ring".into()),
            TopologyKind::Path => kv("topology.kind", "path".into()),
            TopologyKind::Complete => kv("topology.kind", "complete".into()),
        }
        match self.topology.kappa {
            KappaChoice::Explicit(k) => kv("topology.kappa", format!("{k:?}")),
            KappaChoice::Margin(mg) => kv("topology.margin", format!("{mg:?}")),
        }
        if let Some(q) = &self.quantizer {
            kv("quantizer.bits", q.bits().to_string());
            kv("quantizer.eta", format!("{:?}", q.eta()));
            kv("quantizer.lo", format!("{:?}", q.lo()));
        }
        match &self.speed {
            SpeedModel::Uniform { lo, hi } => {
                kv("speed.kind", "uniform".into());
                kv("speed.lo", format!("{lo:?}"));
                kv("speed.hi", format!("{hi:?}"));
            }
            SpeedModel::Degenerate { value } => {
                kv("speed.kind", "degenerate".into());
                kv("speed.value", format!("{value:?}"));
            }
            SpeedModel::Empirical { values } => {
                kv("speed.kind", "empirical".into());
                kv("speed.values", values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
            }
        }
        match self.work {
            WorkSpec::Batch(b) => kv("batch.b", b.to_string()),
            WorkSpec::Deadline(d) => kv("batch.deadline", format!("{d:?}")),
            WorkSpec::Effective(b) => kv("batch.effective", format!("{b:?}")),
        }
        match self.step.schedule {
            StepSchedule::Convex { delta } => {
                kv("step.schedule", "convex".into());
                kv("step.delta", format!("{delta:?}"));
            }
            StepSchedule::Nonconvex => kv("step.schedule", "nonconvex".into()),
            StepSchedule::Constant { alpha, eps } => {
                kv("step.schedule", "constant".into());
                kv("step.alpha", format!("{alpha:?}"));
                kv("step.eps", format!("{eps:?}"));
            }
        }
        kv("step.alpha_scale", format!("{:?}", self.step.alpha_scale));
        kv("step.eps_scale", format!("{:?}", self.step.eps_scale));
        kv("comm.tc", format!("{:?}", self.comm.tc));
        kv("comm.per_degree", self.comm.per_degree.to_string());
        match self.init {
            InitConfig::Zero => kv("init.kind", "zero".into()),
            InitConfig::Normal { scale } => {
                kv("init.kind", "normal".into());
                kv("init.scale", format!("{scale:?}"));
            }
        }
        kv("record.every", self.record_every.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
# quadratic, deadline from batch size
algo = quantimed
seed = 1
n = 10
m = 20
p = 2
T = 1000
step.delta = 0.4
batch.b = 8
quantizer.bits = 4
quantizer.eta = 0.05
";

    fn line_of(e: Error) -> usize {
        match e {
            Error::Config { line, .. } => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_resolves_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.algo, Algorithm::Quantimed);
        assert_eq!((c.n, c.m, c.p), (10, 20, 2));
        assert_eq!(c.work, WorkSpec::Batch(8));
        assert_eq!(c.step.schedule, StepSchedule::Convex { delta: 0.4 });
        assert_eq!(c.quantizer.unwrap().bits(), 4);
        assert_eq!(c.topology.kappa, KappaChoice::Margin(DEFAULT_KAPPA_MARGIN));
        assert_eq!(c.speed, SpeedModel::Uniform { lo: 10.0, hi: 90.0 });
    }

    #[test]
    fn echo_reparses_to_equal_config() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        let text = "algo = async\nseed = 3\nasync.budget = 12.5\nbatch.b = 4\nstep.alpha = 0.05\nobjective.family = mlp\nspeed.kind = empirical\nspeed.values = 1.5, 2, 7\ninit.kind = normal\ninit.scale = 0.1\n";
        let a = parse_config(text).unwrap();
        assert_eq!(parse_config(&a.to_text()).unwrap(), a);
    }

    #[test]
    fn delta_at_half_is_rejected() {
        let e = parse_config(&MINIMAL.replace("step.delta = 0.4", "step.delta = 0.5")).unwrap_err();
        assert_eq!(line_of(e), 8);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let e = parse_config(&MINIMAL.replace("seed = 1\n", "")).unwrap_err();
        assert!(matches!(e, Error::MissingKey("seed")));
    }

    #[test]
    fn unknown_key_and_type_mismatch_carry_line_numbers() {
        assert_eq!(line_of(parse_config(&format!("{MINIMAL}topology.colour = red\n")).unwrap_err()), 12);
        assert_eq!(line_of(parse_config(&MINIMAL.replace("n = 10", "n = ten")).unwrap_err()), 4);
        assert_eq!(line_of(parse_config(&format!("{MINIMAL}n = 11\n")).unwrap_err()), 12);
    }

    #[test]
    fn async_with_deadline_is_inconsistent() {
        let text = "algo = async\nseed = 1\nasync.budget = 5\nbatch.deadline = 0.5\nstep.alpha = 0.1\n";
        assert_eq!(line_of(parse_config(text).unwrap_err()), 4);
    }

    #[test]
    fn baselines_reject_mismatched_sections() {
        let dsgd = "algo = dsgd\nseed = 1\nT = 10\nbatch.b = 4\nquantizer.bits = 4\nquantizer.eta = 0.1\n";
        assert_eq!(line_of(parse_config(dsgd).unwrap_err()), 5);
        let no_batch = "algo = quantimed\nseed = 1\nT = 10\n";
        assert!(matches!(parse_config(no_batch).unwrap_err(), Error::MissingKey("batch.deadline")));
    }

    #[test]
    fn overrides_replace_base_values() {
        let c = parse_with_overrides(MINIMAL, &["T = 8000".to_string(), "seed = 9".to_string()]).unwrap();
        assert_eq!(c.horizon, Horizon::Iterations(8000));
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn mlp_parameter_count_is_checked() {
        let text = "algo = quantimed\nseed = 1\nT = 10\nbatch.deadline = 0.1\nobjective.family = mlp\np = 3\n";
        assert_eq!(line_of(parse_config(text).unwrap_err()), 6);
        let ok = parse_config(&text.replace("p = 3\n", "")).unwrap();
        assert_eq!(ok.p, mlp_param_count(8, 10));
    }
}
