//! Turning a configuration into a run, and the reports built around it.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Horizon, InitConfig, KappaChoice, ObjectiveConfig, StepSchedule, TopologyKind, WorkSpec};
use super::record::{models_digest, RunRecord};
use crate::algorithms::{run, stepsizes_convex, stepsizes_nonconvex, Algorithm, RunPlan, Setup, StepSizes, Workload};
use crate::compute::{deadline_for_batch, deadline_for_effective_batch, effective_batch};
use crate::error::{Error, Result};
use crate::metrics::{convex_min_iterations, convex_bound, nonconvex_bounds, TheoryConstants};
use crate::objectives::{gradient_variance, load_logistic_csv, local_loss, local_minimum, make_logistic, make_mlp, make_quadratic};
use crate::quantize::MessagePrecision;
use crate::rng::{Purpose, Streams};
use crate::topology::{build_erdos_renyi, default_kappa, laplacian_mixing, validate_mixing, Check, Graph};

/// Values computed from a configuration before the run starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub p: usize,
    pub edges: usize,
    pub lambda_max: f64,
    pub kappa: f64,
    pub beta: f64,
    pub mean_speed: f64,
    pub expected_inverse_speed: f64,
    /// `T_d`; absent for fixed-batch algorithms.
    pub deadline: Option<f64>,
    /// Expected deadline batch `T_d / E[1/V]` capped at `m`.
    pub effective_batch: Option<f64>,
    pub batch: Option<usize>,
    pub alpha: f64,
    pub eps: f64,
    pub comm_seconds: f64,
    pub round_bytes: u64,
    pub smoothness: f64,
    pub smoothness_estimated: bool,
    pub strong_convexity: Option<f64>,
}

/// A configuration with everything built and ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub setup: Setup,
    pub derived: Derived,
    pub workload: Workload,
    pub plan: RunPlan,
    pub initial: Vec<Vec<f64>>,
}

fn build_graph(config: &ExperimentConfig, streams: &Streams) -> Result<Graph> {
    match config.topology.kind {
        TopologyKind::ErdosRenyi { p_c } => build_erdos_renyi(config.n, p_c, &mut streams.global(Purpose::Topology)),
        TopologyKind::Ring => Graph::ring(config.n),
        TopologyKind::Path => Graph::path(config.n),
        TopologyKind::Complete => Graph::complete(config.n),
    }
}

/// Builds data, graph, mixing matrix and step sizes for `config`.
pub fn prepare(config: &ExperimentConfig) -> Result<Experiment> {
    let (n, m, p) = (config.n, config.m, config.p);
    let streams = Streams::new(config.seed);
    let (objective, shards) = match &config.objective {
        ObjectiveConfig::Quadratic => make_quadratic(n, m, p, config.seed)?,
        ObjectiveConfig::Logistic { lambda, csv: Some(path) } => {
            let (obj, shards) = load_logistic_csv(Path::new(path), n, m, *lambda)?;
            if obj.dim() != p {
                return Err(Error::invalid(format!("dataset {path} has {} features but p={p}", obj.dim())));
            }
            (obj, shards)
        }
        ObjectiveConfig::Logistic { lambda, csv: None } => make_logistic(n, m, p, *lambda, config.seed)?,
        ObjectiveConfig::Mlp { in_dim, hidden } => make_mlp(n, m, *in_dim, *hidden, config.seed)?,
    };

    let graph = build_graph(config, &streams)?;
    let lambda_max = graph.laplacian_max_eigenvalue();
    let kappa = match config.topology.kappa {
        KappaChoice::Explicit(k) => k,
        KappaChoice::Margin(margin) => default_kappa(&graph, margin),
    };
    let mixing = laplacian_mixing(&graph, kappa)?;

    let speed = config.speed.clone();
    let (workload, deadline, batch) = match (config.algo, config.work) {
        (Algorithm::Quantimed, work) => {
            let td = match work {
                WorkSpec::Batch(b) => deadline_for_batch(b as f64, &speed),
                WorkSpec::Deadline(d) => d,
                WorkSpec::Effective(b) => deadline_for_effective_batch(b, &speed),
            };
            (Workload::Deadline { seconds: td }, Some(td), None)
        }
        (_, WorkSpec::Batch(b)) => (Workload::Batch { size: b }, None, Some(b)),
        (algo, _) => return Err(Error::invalid(format!("{} needs a fixed batch", algo.name()))),
    };

    let horizon_t = match config.horizon {
        Horizon::Iterations(t) => t.max(1),
        Horizon::Budget { .. } => 1,
    };
    let base = match config.step.schedule {
        StepSchedule::Convex { delta } => stepsizes_convex(horizon_t, delta)?,
        StepSchedule::Nonconvex => stepsizes_nonconvex(horizon_t)?,
        StepSchedule::Constant { alpha, eps } => StepSizes::constant(alpha, eps)?,
    };
    let sizes = base.scaled(config.step.alpha_scale, config.step.eps_scale)?;

    let precision = config.quantizer.map_or(MessagePrecision::Exact, MessagePrecision::Quantized);
    let setup = Setup { objective, shards, graph, mixing, precision, speed, sizes, comm: config.comm, streams };
    let exchange = if config.algo == Algorithm::Dsgd || config.algo == Algorithm::Async { MessagePrecision::Exact } else { precision };

    let plan = match config.horizon {
        Horizon::Iterations(iterations) => RunPlan::Rounds { iterations, record_every: config.record_every },
        Horizon::Budget { seconds, samples } => RunPlan::TimeBudget { budget: seconds, samples },
    };
    let initial = initial_models(config, &streams);
    let derived = Derived {
        p,
        edges: setup.graph.edge_count(),
        lambda_max,
        kappa,
        beta: setup.mixing.beta(),
        mean_speed: setup.speed.mean(),
        expected_inverse_speed: setup.speed.expected_inverse(),
        deadline,
        effective_batch: deadline.map(|td| effective_batch(td, &setup.speed, m)),
        batch,
        alpha: sizes.alpha,
        eps: sizes.eps,
        comm_seconds: setup.comm_seconds(exchange),
        round_bytes: setup.round_bytes(exchange),
        smoothness: setup.objective.smoothness(),
        smoothness_estimated: setup.objective.smoothness_is_estimate(),
        strong_convexity: setup.objective.strong_convexity(),
    };
    Ok(Experiment { config: config.clone(), setup, derived, workload, plan, initial })
}

fn initial_models(config: &ExperimentConfig, streams: &Streams) -> Vec<Vec<f64>> {
    let x0 = match config.init {
        InitConfig::Zero => vec![0.0; config.p],
        InitConfig::Normal { scale } => {
            let mut rng = streams.stream(0, Purpose::Init, 1);
            (0..config.p).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        }
    };
    vec![x0; config.n]
}

/// Runs `config` to completion.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let exp = prepare(config)?;
    let started = Instant::now();
    let out = run(&exp.setup, config.algo, exp.workload, exp.plan, exp.initial.clone())?;
    let wall_time_s = started.elapsed().as_secs_f64();
    Ok(RunRecord {
        config: config.to_text(),
        derived: exp.derived,
        rows: out.rows,
        summary: out.summary,
        final_models_digest: models_digest(&out.final_models),
        final_models: out.final_models,
        wall_time_s,
    })
}

/// Runs named configurations on up to `jobs` threads; results keep input order.
pub fn sweep(configs: &[(String, ExperimentConfig)], jobs: usize) -> Vec<Result<RunRecord>> {
    let one = |(name, config): &(String, ExperimentConfig)| {
        run_experiment(config).map_err(|e| Error::InRun { name: name.clone(), source: Box::new(e) })
    };
    if jobs <= 1 {
        return configs.iter().map(one).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| configs.par_iter().map(one).collect()),
        Err(_) => configs.iter().map(one).collect(),
    }
}

/// Constants for the rate envelopes, estimated from the configured problem.
pub fn theory_constants(exp: &Experiment) -> TheoryConstants {
    let s = &exp.setup;
    let (n, m, p) = (exp.config.n, exp.config.m, exp.config.p);
    let zero = vec![0.0; p];
    let k = s.objective.smoothness();
    let d_sq = 2.0 * k * (0..n).map(|i| local_loss(&s.objective, &s.shards, i, &zero) - local_minimum(&s.objective, &s.shards, i).0).sum::<f64>();
    let e_inv = s.speed.expected_inverse();
    TheoryConstants {
        mu: s.objective.strong_convexity().unwrap_or(0.0),
        k,
        gamma_sq: gradient_variance(&s.objective, &s.shards, &zero),
        sigma_sq: s.precision.variance_bound(p),
        beta: s.mixing.beta(),
        d_sq: d_sq.max(0.0),
        n,
        m,
        // a fixed batch b behaves like a deadline of b·E[1/V]
        deadline: exp.derived.deadline.unwrap_or_else(|| exp.derived.batch.unwrap_or(1) as f64 * e_inv),
        expected_inverse_speed: e_inv,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub t: u64,
    /// Strongly convex envelope terms (convex families with a convex schedule).
    pub convex: Option<(f64, f64, f64)>,
    /// Nonconvex stationarity and consensus envelopes.
    pub nonconvex: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub constants: TheoryConstants,
    pub delta: Option<f64>,
    /// Iteration count after which the convex envelope applies; informational.
    pub convex_min_iterations: Option<f64>,
    pub rows: Vec<BoundRow>,
}

pub fn bounds_report(config: &ExperimentConfig, t_list: &[u64]) -> Result<BoundsReport> {
    if t_list.iter().any(|&t| t == 0) {
        return Err(Error::invalid("T values must be >= 1"));
    }
    let exp = prepare(config)?;
    let c = theory_constants(&exp);
    c.validate()?;
    let delta = match config.step.schedule {
        StepSchedule::Convex { delta } if c.mu > 0.0 => Some(delta),
        _ => None,
    };
    let rows = t_list
        .iter()
        .map(|&t| {
            let convex = delta.map(|d| {
                let b = convex_bound(&c, t, d);
                (b.leading, b.gradient_noise, b.total())
            });
            let b2 = nonconvex_bounds(&c, t);
            BoundRow { t, convex, nonconvex: (b2.convergence, b2.consensus) }
        })
        .collect();
    Ok(BoundsReport { constants: c, delta, convex_min_iterations: delta.map(|d| convex_min_iterations(&c, d)), rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyReport {
    pub n: usize,
    pub edges: usize,
    pub min_degree: usize,
    pub max_degree: usize,
    pub lambda_max: f64,
    pub kappa: f64,
    pub beta: f64,
    pub spectral_gap: f64,
    pub eigenvalues: Vec<f64>,
    pub checks: Vec<Check>,
    pub edge_list: String,
}

pub fn topology_report(config: &ExperimentConfig) -> Result<TopologyReport> {
    let streams = Streams::new(config.seed);
    let graph = build_graph(config, &streams)?;
    let lambda_max = graph.laplacian_max_eigenvalue();
    let kappa = match config.topology.kappa {
        KappaChoice::Explicit(k) => k,
        KappaChoice::Margin(margin) => default_kappa(&graph, margin),
    };
    let mixing = laplacian_mixing(&graph, kappa)?;
    let spectral = validate_mixing(mixing.weights());
    let degrees: Vec<usize> = (0..graph.n()).map(|i| graph.degree(i)).collect();
    Ok(TopologyReport {
        n: graph.n(),
        edges: graph.edge_count(),
        min_degree: degrees.iter().copied().min().unwrap_or(0),
        max_degree: degrees.iter().copied().max().unwrap_or(0),
        lambda_max,
        kappa,
        beta: spectral.beta,
        spectral_gap: spectral.spectral_gap,
        eigenvalues: spectral.eigenvalues,
        checks: spectral.checks,
        edge_list: graph.to_edge_list(),
    })
}
