//! Loss families, the per-node data partition, and gradient oracles.
//!
//! Node `i` holds `m` samples; its local risk is the mean sample loss over
//! them and the global cost is the mean of the local risks.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, Streams};
use crate::vecops::{axpy, dist_sq, dot, norm_sq, scale};

/// Std-dev of the per-node offset and of the per-sample noise of synthetic
/// quadratic centers. Keeps optima well inside a ±1.28 quantizer range.
pub const QUADRATIC_OFFSET_STD: f64 = 0.3;
pub const QUADRATIC_NOISE_STD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `½‖x - c‖²` with per-sample center `c`.
    Quadratic,
    /// `log(1 + exp(-y·aᵀx)) + (λ/2)‖x‖²`.
    Logistic { lambda: f64 },
    /// One hidden tanh layer, squared loss against a teacher network.
    Mlp { in_dim: usize, hidden: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Quadratic => "quadratic",
            Family::Logistic { .. } => "logistic",
            Family::Mlp { .. } => "mlp",
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Family::Mlp { .. })
    }
}

/// One data point: center (quadratic), feature row (logistic), or network
/// input (mlp); `label` is unused by the quadratic family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataShards {
    n: usize,
    m: usize,
    samples: Vec<Sample>,
    /// Index of each sample in its source (synthetic order or file row).
    origin: Vec<usize>,
    source: String,
}

impl DataShards {
    /// `samples` is node-major: node `i` owns `samples[i*m .. (i+1)*m]`.
    pub fn new(n: usize, m: usize, samples: Vec<Sample>, source: impl Into<String>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("shards need n >= 1 and m >= 1"));
        }
        if samples.len() != n * m {
            return Err(Error::invalid(format!("expected {} samples, got {}", n * m, samples.len())));
        }
        let origin = (0..n * m).collect();
        Ok(DataShards { n, m, samples, origin, source: source.into() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn total(&self) -> usize {
        self.n * self.m
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn node(&self, i: usize) -> &[Sample] {
        &self.samples[i * self.m..(i + 1) * self.m]
    }

    pub fn all(&self) -> &[Sample] {
        &self.samples
    }

    /// Per-node source indices as JSON.
    pub fn dump(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            n: usize,
            m: usize,
            source: &'a str,
            nodes: Vec<&'a [usize]>,
        }
        let nodes = (0..self.n).map(|i| &self.origin[i * self.m..(i + 1) * self.m]).collect();
        Ok(serde_json::to_string_pretty(&Dump { n: self.n, m: self.m, source: &self.source, nodes })?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    family: Family,
    dim: usize,
    smoothness: f64,
    smoothness_estimated: bool,
    strong_convexity: Option<f64>,
    optimum: Option<Vec<f64>>,
}

impl Objective {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `K`. For the mlp family this is a sampled estimate.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn smoothness_is_estimate(&self) -> bool {
        self.smoothness_estimated
    }

    /// `μ`, for convex families.
    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    /// Closed-form global minimizer, when one exists.
    pub fn optimum(&self) -> Option<&[f64]> {
        self.optimum.as_deref()
    }

    pub fn sample_loss(&self, x: &[f64], s: &Sample) -> f64 {
        match self.family {
            Family::Quadratic => 0.5 * dist_sq(x, &s.features),
            Family::Logistic { lambda } => softplus(-s.label * dot(x, &s.features)) + 0.5 * lambda * norm_sq(x),
            Family::Mlp { in_dim, hidden } => {
                let r = mlp_forward(x, in_dim, hidden, &s.features, None) - s.label;
                0.5 * r * r
            }
        }
    }

    /// `out += weight · ∇ℓ(x, s)`.
    pub fn add_sample_gradient(&self, x: &[f64], s: &Sample, weight: f64, out: &mut [f64]) {
        match self.family {
            Family::Quadratic => {
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(&s.features) {
                    *o += weight * (xi - ci);
                }
            }
            Family::Logistic { lambda } => {
                let z = s.label * dot(x, &s.features);
                let coef = -s.label * sigmoid(-z);
                axpy(weight * coef, &s.features, out);
                axpy(weight * lambda, x, out);
            }
            Family::Mlp { in_dim, hidden } => {
                let mut h = vec![0.0; hidden];
                let r = mlp_forward(x, in_dim, hidden, &s.features, Some(&mut h)) - s.label;
                let (w1, rest) = out.split_at_mut(hidden * in_dim);
                let (b1, rest) = rest.split_at_mut(hidden);
                let (w2, b2) = rest.split_at_mut(hidden);
                let w2x = &x[hidden * in_dim + hidden..hidden * in_dim + 2 * hidden];
                for k in 0..hidden {
                    let back = weight * r * w2x[k] * (1.0 - h[k] * h[k]);
                    axpy(back, &s.features, &mut w1[k * in_dim..(k + 1) * in_dim]);
                    b1[k] += back;
                    w2[k] += weight * r * h[k];
                }
                b2[0] += weight * r;
            }
        }
    }

    pub fn sample_gradient(&self, x: &[f64], s: &Sample) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.add_sample_gradient(x, s, 1.0, &mut g);
        g
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Parameter layout: `W1` (hidden × in_dim, row-major), `b1`, `w2`, `b2`.
pub fn mlp_param_count(in_dim: usize, hidden: usize) -> usize {
    hidden * in_dim + 2 * hidden + 1
}

fn mlp_forward(x: &[f64], in_dim: usize, hidden: usize, input: &[f64], mut act: Option<&mut Vec<f64>>) -> f64 {
    let w1 = &x[..hidden * in_dim];
    let b1 = &x[hidden * in_dim..hidden * in_dim + hidden];
    let w2 = &x[hidden * in_dim + hidden..hidden * in_dim + 2 * hidden];
    let b2 = x[hidden * in_dim + 2 * hidden];
    let mut out = b2;
    for k in 0..hidden {
        let h = (dot(&w1[k * in_dim..(k + 1) * in_dim], input) + b1[k]).tanh();
        if let Some(a) = act.as_deref_mut() {
            a[k] = h;
        }
        out += w2[k] * h;
    }
    out
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, std: f64) -> Vec<f64> {
    (0..len).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Quadratic objective over explicit centers (node-major, `n*m` of them).
pub fn quadratic_from_centers(n: usize, m: usize, centers: Vec<Vec<f64>>, source: &str) -> Result<(Objective, DataShards)> {
    let p = centers.first().map_or(0, Vec::len);
    if p == 0 || centers.iter().any(|c| c.len() != p) {
        return Err(Error::invalid("centers must share a positive dimension"));
    }
    let samples = centers.into_iter().map(|features| Sample { features, label: 0.0 }).collect();
    let shards = DataShards::new(n, m, samples, source)?;
    let optimum = crate::vecops::mean(&shards.samples.iter().map(|s| s.features.clone()).collect::<Vec<_>>());
    let obj = Objective {
        family: Family::Quadratic,
        dim: p,
        smoothness: 1.0,
        smoothness_estimated: false,
        strong_convexity: Some(1.0),
        optimum: Some(optimum),
    };
    Ok((obj, shards))
}

/// Centers `c_ij = o_i + ξ_ij` with Gaussian node offsets `o_i` and noise `ξ_ij`.
pub fn make_quadratic(n: usize, m: usize, p: usize, seed: u64) -> Result<(Objective, DataShards)> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::invalid("quadratic objective needs n, m, p >= 1"));
    }
    let streams = Streams::new(seed);
    let mut centers = Vec::with_capacity(n * m);
    for i in 0..n {
        let mut rng = streams.stream(i as u64, Purpose::Data, 0);
        let offset = gaussian_vec(&mut rng, p, QUADRATIC_OFFSET_STD);
        for _ in 0..m {
            let mut c = gaussian_vec(&mut rng, p, QUADRATIC_NOISE_STD);
            axpy(1.0, &offset, &mut c);
            centers.push(c);
        }
    }
    quadratic_from_centers(n, m, centers, &format!("synthetic-quadratic seed={seed}"))
}

fn logistic_objective(p: usize, lambda: f64, shards: &DataShards) -> Result<Objective> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge lambda={lambda} must be finite and >= 0")));
    }
    let max_sq = shards.samples.iter().map(|s| norm_sq(&s.features)).fold(0.0, f64::max);
    Ok(Objective {
        family: Family::Logistic { lambda },
        dim: p,
        smoothness: lambda + max_sq / 4.0,
        smoothness_estimated: false,
        strong_convexity: Some(lambda),
        optimum: None,
    })
}

/// Logistic regression from explicit samples (node-major, labels ±1).
pub fn logistic_from_samples(n: usize, m: usize, lambda: f64, samples: Vec<Sample>, source: &str) -> Result<(Objective, DataShards)> {
    let p = samples.first().map_or(0, |s| s.features.len());
    if p == 0 || samples.iter().any(|s| s.features.len() != p) {
        return Err(Error::invalid("logistic samples must share a positive dimension"));
    }
    if let Some(s) = samples.iter().find(|s| s.label != 1.0 && s.label != -1.0) {
        return Err(Error::invalid(format!("logistic label {} not in {{-1, +1}}", s.label)));
    }
    let shards = DataShards::new(n, m, samples, source)?;
    let obj = logistic_objective(p, lambda, &shards)?;
    Ok((obj, shards))
}

/// Synthetic logistic data: Gaussian features, labels drawn from a random
/// ground-truth linear model through the logistic link.
pub fn make_logistic(n: usize, m: usize, p: usize, lambda: f64, seed: u64) -> Result<(Objective, DataShards)> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::invalid("logistic objective needs n, m, p >= 1"));
    }
    let streams = Streams::new(seed);
    let truth = gaussian_vec(&mut streams.global(Purpose::Data), p, 1.0);
    let mut samples = Vec::with_capacity(n * m);
    for i in 0..n {
        let mut rng = streams.stream(i as u64, Purpose::Data, 0);
        for _ in 0..m {
            let features = gaussian_vec(&mut rng, p, 1.0);
            let label = if rng.random::<f64>() < sigmoid(dot(&truth, &features)) { 1.0 } else { -1.0 };
            samples.push(Sample { features, label });
        }
    }
    logistic_from_samples(n, m, lambda, samples, &format!("synthetic-logistic seed={seed}"))
}

/// Reads `f_1,…,f_p,label` rows. A non-numeric first row is taken as a header.
/// The first `n*m` rows are dealt to nodes round-robin.
pub fn load_logistic_csv(path: &Path, n: usize, m: usize, lambda: f64) -> Result<(Objective, DataShards)> {
    let text = std::fs::read_to_string(path)?;
    let (n, m, mut samples, origin) = parse_logistic_csv(&text, n, m)?;
    let source = format!("csv:{}", path.display());
    let p = samples[0].features.len();
    // reorder to node-major
    let mut by_node: Vec<Vec<(usize, Sample)>> = vec![Vec::with_capacity(m); n];
    for (row, (s, o)) in samples.drain(..).zip(origin).enumerate() {
        by_node[row % n].push((o, s));
    }
    let mut ordered = Vec::with_capacity(n * m);
    let mut origins = Vec::with_capacity(n * m);
    for node in by_node {
        for (o, s) in node {
            origins.push(o);
            ordered.push(s);
        }
    }
    let mut shards = DataShards::new(n, m, ordered, source)?;
    shards.origin = origins;
    let obj = logistic_objective(p, lambda, &shards)?;
    Ok((obj, shards))
}

type ParsedCsv = (usize, usize, Vec<Sample>, Vec<usize>);

fn parse_logistic_csv(text: &str, n: usize, m: usize) -> Result<ParsedCsv> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut samples = Vec::new();
    let mut origin = Vec::new();
    let mut arity = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if samples.is_empty() && arity.is_none() && idx == 0 => continue,
            Err(e) => return Err(Error::Dataset { line, reason: format!("non-numeric field: {e}") }),
        };
        if values.len() < 2 {
            return Err(Error::Dataset { line, reason: "need at least one feature and a label".into() });
        }
        match arity {
            None => arity = Some(values.len()),
            Some(a) if a != values.len() => {
                return Err(Error::Dataset { line, reason: format!("expected {a} fields, got {}", values.len()) })
            }
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dataset { line, reason: "non-finite value".into() });
        }
        let (label, features) = values.split_last().expect("len >= 2");
        if *label != 1.0 && *label != -1.0 {
            return Err(Error::Dataset { line, reason: format!("label {label} not in {{-1, +1}}") });
        }
        origin.push(samples.len());
        samples.push(Sample { features: features.to_vec(), label: *label });
    }
    if samples.len() < n * m {
        return Err(Error::Dataset { line: 0, reason: format!("{} rows, need n*m = {}", samples.len(), n * m) });
    }
    samples.truncate(n * m);
    origin.truncate(n * m);
    Ok((n, m, samples, origin))
}

/// Teacher–student tanh network. Inputs are standard Gaussian; targets are
/// the teacher's outputs, so the student can reach zero loss.
pub fn make_mlp(n: usize, m: usize, in_dim: usize, hidden: usize, seed: u64) -> Result<(Objective, DataShards)> {
    let streams = Streams::new(seed);
    let p = mlp_param_count(in_dim, hidden);
    let teacher = gaussian_vec(&mut streams.global(Purpose::Init), p, 1.0 / (in_dim.max(1) as f64).sqrt());
    let inputs: Vec<Vec<f64>> = (0..n)
        .flat_map(|i| {
            let mut rng = streams.stream(i as u64, Purpose::Data, 0);
            (0..m).map(move |_| gaussian_vec(&mut rng, in_dim, 1.0)).collect::<Vec<_>>()
        })
        .collect();
    mlp_with_teacher(n, m, in_dim, hidden, &teacher, inputs, seed)
}

pub fn mlp_with_teacher(
    n: usize,
    m: usize,
    in_dim: usize,
    hidden: usize,
    teacher: &[f64],
    inputs: Vec<Vec<f64>>,
    seed: u64,
) -> Result<(Objective, DataShards)> {
    if in_dim == 0 || hidden == 0 {
        return Err(Error::invalid("mlp needs in_dim >= 1 and hidden >= 1"));
    }
    let p = mlp_param_count(in_dim, hidden);
    if teacher.len() != p {
        return Err(Error::invalid(format!("teacher has {} params, expected {p}", teacher.len())));
    }
    if inputs.iter().any(|u| u.len() != in_dim) {
        return Err(Error::invalid("mlp inputs must have length in_dim"));
    }
    let samples = inputs
        .into_iter()
        .map(|features| {
            let label = mlp_forward(teacher, in_dim, hidden, &features, None);
            Sample { features, label }
        })
        .collect();
    let shards = DataShards::new(n, m, samples, format!("synthetic-mlp seed={seed}"))?;
    let mut obj = Objective {
        family: Family::Mlp { in_dim, hidden },
        dim: p,
        smoothness: f64::NAN,
        smoothness_estimated: true,
        strong_convexity: None,
        optimum: None,
    };
    obj.smoothness = estimate_smoothness(&obj, &shards, teacher, seed);
    Ok((obj, shards))
}

/// Largest per-sample Hessian eigenvalue magnitude found by power iteration
/// with finite-difference Hessian-vector products, over a handful of samples.
fn estimate_smoothness(obj: &Objective, shards: &DataShards, at: &[f64], seed: u64) -> f64 {
    const PROBES: usize = 16;
    const STEPS: usize = 30;
    let mut rng = Streams::new(seed).global(Purpose::Probe);
    let total = shards.total();
    let mut best: f64 = 0.0;
    for _ in 0..PROBES.min(total) {
        let s = &shards.samples[rng.random_range(0..total)];
        let mut v = gaussian_vec(&mut rng, obj.dim, 1.0);
        let nv = norm_sq(&v).sqrt();
        scale(1.0 / nv, &mut v);
        let mut lambda = 0.0;
        for _ in 0..STEPS {
            let h = 1e-5;
            let mut plus = at.to_vec();
            axpy(h, &v, &mut plus);
            let mut minus = at.to_vec();
            axpy(-h, &v, &mut minus);
            let mut hv = obj.sample_gradient(&plus, s);
            axpy(-1.0, &obj.sample_gradient(&minus, s), &mut hv);
            scale(0.5 / h, &mut hv);
            let norm = norm_sq(&hv).sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            v = hv;
            scale(1.0 / norm, &mut v);
        }
        best = best.max(lambda);
    }
    best
}

/// Mini-batch gradient over `batch` (indices into `D_i`, repeats allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct GradSample {
    pub node: usize,
    pub iteration: usize,
    pub batch: Vec<usize>,
    pub gradient: Vec<f64>,
}

impl GradSample {
    pub fn batch_size(&self) -> usize {
        self.batch.len()
    }
}

pub fn local_loss(obj: &Objective, shards: &DataShards, i: usize, x: &[f64]) -> f64 {
    let d = shards.node(i);
    d.iter().map(|s| obj.sample_loss(x, s)).sum::<f64>() / d.len() as f64
}

pub fn local_full_gradient(obj: &Objective, shards: &DataShards, i: usize, x: &[f64]) -> Vec<f64> {
    let d = shards.node(i);
    let mut g = vec![0.0; obj.dim];
    let w = 1.0 / d.len() as f64;
    for s in d {
        obj.add_sample_gradient(x, s, w, &mut g);
    }
    g
}

/// `batch_size` indices drawn uniformly with replacement from `0..m`.
pub fn sample_batch<R: Rng + ?Sized>(m: usize, batch_size: usize, rng: &mut R) -> Vec<usize> {
    (0..batch_size).map(|_| rng.random_range(0..m)).collect()
}

/// Gradient assembled from whatever samples finished by the deadline; an
/// empty batch yields the zero vector.
pub fn deadline_stochastic_gradient(
    obj: &Objective,
    shards: &DataShards,
    i: usize,
    iteration: usize,
    x: &[f64],
    batch: Vec<usize>,
) -> Result<GradSample> {
    let d = shards.node(i);
    if let Some(&bad) = batch.iter().find(|&&j| j >= d.len()) {
        return Err(Error::invalid(format!("batch index {bad} out of range for m={}", d.len())));
    }
    let mut gradient = vec![0.0; obj.dim];
    if !batch.is_empty() {
        let w = 1.0 / batch.len() as f64;
        for &j in &batch {
            obj.add_sample_gradient(x, &d[j], w, &mut gradient);
        }
    }
    Ok(GradSample { node: i, iteration, batch, gradient })
}

pub fn global_loss(obj: &Objective, shards: &DataShards, x: &[f64]) -> f64 {
    (0..shards.n).map(|i| local_loss(obj, shards, i, x)).sum::<f64>() / shards.n as f64
}

pub fn global_gradient(obj: &Objective, shards: &DataShards, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; obj.dim];
    for i in 0..shards.n {
        axpy(1.0, &local_full_gradient(obj, shards, i, x), &mut g);
    }
    scale(1.0 / shards.n as f64, &mut g);
    g
}

/// Mean of `‖∇ℓ(x, θ) - ∇L_N(x)‖²` over all `N` samples (γ² estimate).
pub fn gradient_variance(obj: &Objective, shards: &DataShards, x: &[f64]) -> f64 {
    let mean = global_gradient(obj, shards, x);
    shards.samples.iter().map(|s| dist_sq(&obj.sample_gradient(x, s), &mean)).sum::<f64>() / shards.total() as f64
}

/// `f_i* = min f_i`: exact for the quadratic family, otherwise the value
/// after 200 gradient steps of size `1/K` from the origin.
pub fn local_minimum(obj: &Objective, shards: &DataShards, i: usize) -> (f64, bool) {
    match obj.family {
        Family::Quadratic => {
            let centers: Vec<Vec<f64>> = shards.node(i).iter().map(|s| s.features.clone()).collect();
            (local_loss(obj, shards, i, &crate::vecops::mean(&centers)), true)
        }
        _ => {
            let step = 1.0 / obj.smoothness.max(1e-12);
            let mut x = vec![0.0; obj.dim];
            for _ in 0..200 {
                let g = local_full_gradient(obj, shards, i, &x);
                axpy(-step, &g, &mut x);
            }
            (local_loss(obj, shards, i, &x).min(local_loss(obj, shards, i, &vec![0.0; obj.dim])), false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_centers() -> (Objective, DataShards) {
        quadratic_from_centers(3, 1, vec![vec![-1.0], vec![0.0], vec![1.0]], "test").unwrap()
    }

    #[test]
    fn quadratic_closed_form() {
        let (obj, shards) = three_centers();
        assert_eq!(obj.optimum().unwrap(), &[0.0]);
        assert!((global_loss(&obj, &shards, &[0.0]) - 1.0 / 3.0).abs() < 1e-15);
        assert!(norm_sq(&global_gradient(&obj, &shards, &[0.0])) <= 1e-24);
        assert_eq!(global_gradient(&obj, &shards, &[1.0]), vec![1.0]);
    }

    #[test]
    fn quadratic_degenerate_data() {
        let c0 = vec![0.7, -0.2];
        let (obj, shards) = quadratic_from_centers(2, 2, vec![c0.clone(); 4], "deg").unwrap();
        assert_eq!(obj.optimum().unwrap(), c0.as_slice());
        assert_eq!(global_loss(&obj, &shards, &c0), 0.0);
    }

    #[test]
    fn synthetic_quadratic_optimum_is_stationary() {
        let (obj, shards) = make_quadratic(5, 7, 3, 9).unwrap();
        let g = global_gradient(&obj, &shards, obj.optimum().unwrap());
        assert!(norm_sq(&g).sqrt() <= 1e-12);
        assert_eq!(obj.smoothness(), 1.0);
        assert_eq!(obj.strong_convexity(), Some(1.0));
    }

    #[test]
    fn local_gradient_examples() {
        let (obj, shards) = quadratic_from_centers(1, 2, vec![vec![1.0], vec![3.0]], "t").unwrap();
        assert_eq!(local_full_gradient(&obj, &shards, 0, &[0.0]), vec![-2.0]);

        let (obj, shards) = make_quadratic(4, 1, 2, 1).unwrap();
        let x = [0.3, -0.1];
        assert_eq!(local_full_gradient(&obj, &shards, 2, &x), obj.sample_gradient(&x, &shards.node(2)[0]));
        assert_eq!(global_loss(&obj, &shards, &x), global_loss(&obj, &shards, &x));
    }

    #[test]
    fn global_gradient_is_mean_of_local() {
        let (obj, shards) = make_logistic(4, 5, 3, 0.1, 2).unwrap();
        let x = [0.2, -0.4, 0.9];
        let mean = crate::vecops::mean(&(0..4).map(|i| local_full_gradient(&obj, &shards, i, &x)).collect::<Vec<_>>());
        let g = global_gradient(&obj, &shards, &x);
        assert!(dist_sq(&mean, &g).sqrt() <= 1e-12);

        let (obj1, shards1) = make_quadratic(1, 4, 2, 3).unwrap();
        assert_eq!(global_gradient(&obj1, &shards1, &x[..2]), local_full_gradient(&obj1, &shards1, 0, &x[..2]));
        assert_eq!(global_loss(&obj1, &shards1, &x[..2]), local_loss(&obj1, &shards1, 0, &x[..2]));
    }

    #[test]
    fn logistic_at_origin() {
        let (obj, shards) = make_logistic(2, 3, 4, 0.0, 5).unwrap();
        for s in shards.all() {
            assert!((obj.sample_loss(&[0.0; 4], s) - 2f64.ln()).abs() < 1e-15);
        }
        let (obj, shards) =
            logistic_from_samples(1, 1, 0.0, vec![Sample { features: vec![1.0, 0.0], label: 1.0 }], "one").unwrap();
        // ∇ log(1 + e^{-y aᵀx}) = -y σ(-y aᵀx) a = -0.5·(1, 0) at x = 0
        assert_eq!(local_full_gradient(&obj, &shards, 0, &[0.0, 0.0]), vec![-0.5, 0.0]);
        assert_eq!(obj.smoothness(), 0.25);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let s = vec![Sample { features: vec![1.0], label: 0.0 }];
        assert!(logistic_from_samples(1, 1, 0.0, s, "x").is_err());
    }

    #[test]
    fn deadline_gradient_edge_cases() {
        let (obj, shards) = make_quadratic(2, 4, 2, 4).unwrap();
        let x = [0.5, 0.5];
        let full = deadline_stochastic_gradient(&obj, &shards, 1, 0, &x, (0..4).collect()).unwrap();
        assert!(dist_sq(&full.gradient, &local_full_gradient(&obj, &shards, 1, &x)) < 1e-28);
        let empty = deadline_stochastic_gradient(&obj, &shards, 1, 0, &x, vec![]).unwrap();
        assert_eq!(empty.batch_size(), 0);
        assert_eq!(empty.gradient, vec![0.0, 0.0]);
        assert!(deadline_stochastic_gradient(&obj, &shards, 1, 0, &x, vec![4]).is_err());
    }

    #[test]
    fn singleton_batches_average_to_full_gradient() {
        let (obj, shards) = make_quadratic(2, 5, 3, 8).unwrap();
        let x = [0.1, 0.2, -0.3];
        let mut acc = vec![0.0; 3];
        for j in 0..5 {
            let g = deadline_stochastic_gradient(&obj, &shards, 0, 0, &x, vec![j]).unwrap();
            axpy(0.2, &g.gradient, &mut acc);
        }
        assert!(dist_sq(&acc, &local_full_gradient(&obj, &shards, 0, &x)).sqrt() < 1e-14);
    }

    #[test]
    fn mlp_trivial_cases() {
        let (in_dim, hidden) = (3, 4);
        let p = mlp_param_count(in_dim, hidden);
        let zero = vec![0.0; p];
        let inputs = vec![vec![0.5, -1.0, 2.0]; 2];
        let (obj, shards) = mlp_with_teacher(1, 2, in_dim, hidden, &zero, inputs, 0).unwrap();
        assert_eq!(global_loss(&obj, &shards, &zero), 0.0);
        assert!(global_gradient(&obj, &shards, &zero).iter().all(|&g| g == 0.0));

        let (obj, shards) = make_mlp(2, 3, in_dim, hidden, 6).unwrap();
        assert!(obj.smoothness_is_estimate() && obj.smoothness() > 0.0);
        // recover the teacher: same seed, same stream
        let teacher = gaussian_vec(&mut Streams::new(6).global(Purpose::Init), p, 1.0 / (in_dim as f64).sqrt());
        assert!(global_loss(&obj, &shards, &teacher) < 1e-30);
    }

    #[test]
    fn csv_ingestion() {
        let text = "f1,f2,label\n1.0,2.0,1\n-1,0.5,-1\n0,0,1\n3,1,-1\n9,9,1\n";
        let (n, m, samples, origin) = parse_logistic_csv(text, 2, 2).unwrap();
        assert_eq!((n, m, samples.len()), (2, 2, 4));
        assert_eq!(origin, vec![0, 1, 2, 3]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, text).unwrap();
        let (obj, shards) = load_logistic_csv(&path, 2, 2, 0.01).unwrap();
        assert_eq!(obj.dim(), 2);
        // round-robin: node 0 gets rows 0 and 2
        assert_eq!(shards.node(0)[1].features, vec![0.0, 0.0]);
        assert!(shards.dump().unwrap().contains("\"nodes\""));

        let arity = "1,2,1\n1,1\n";
        assert!(matches!(parse_logistic_csv(arity, 1, 2), Err(Error::Dataset { line: 2, .. })));
        let nonnum = "1,2,1\n1,x,1\n";
        assert!(matches!(parse_logistic_csv(nonnum, 1, 2), Err(Error::Dataset { line: 2, .. })));
        let label = "1,2,1\n1,2,0\n";
        assert!(matches!(parse_logistic_csv(label, 1, 2), Err(Error::Dataset { line: 2, .. })));
        assert!(parse_logistic_csv("1,2,1\n", 2, 2).is_err());
    }

    #[test]
    fn local_minimum_quadratic_is_exact() {
        let (obj, shards) = quadratic_from_centers(1, 2, vec![vec![1.0], vec![3.0]], "t").unwrap();
        let (v, exact) = local_minimum(&obj, &shards, 0);
        assert!(exact);
        assert_eq!(v, 0.5);
    }
}
