use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use quantimed::algorithms::{dsgd_update, quantimed_update, StepSizes};
use quantimed::harness::{parse_config, run_experiment};
use quantimed::metrics::{consensus_error, optimality_gap, penalty_gradient};
use quantimed::topology::{build_erdos_renyi, default_kappa, laplacian_mixing, MixingMatrix};
use quantimed::rng::{Purpose, Streams};

fn mixing(seed: u64, n: usize) -> MixingMatrix {
    let g = build_erdos_renyi(n, 0.5, &mut Streams::new(seed).global(Purpose::Topology)).unwrap();
    laplacian_mixing(&g, default_kappa(&g, 0.2)).unwrap()
}

fn random_rows(rng: &mut ChaCha20Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect()
}

fn column_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b / rows.len() as f64;
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // with zero gradients and exact messages the network average is invariant
    #[test]
    fn gossip_preserves_the_average(seed in any::<u64>(), n in 2usize..12, p in 1usize..5, eps in 0.01f64..1.0) {
        let w = mixing(seed, n);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = random_rows(&mut rng, n, p);
        let zeros = vec![vec![0.0; p]; n];
        let sizes = StepSizes::constant(0.3, eps).unwrap();
        for next in [quantimed_update(&x, &x, &w, sizes, &zeros), dsgd_update(&x, &w, 0.3, &zeros)] {
            for (a, b) in column_mean(&next).iter().zip(column_mean(&x)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    // the update equals a penalty-gradient step, written independently
    #[test]
    fn update_is_a_penalty_gradient_step(seed in any::<u64>(), n in 2usize..10, p in 1usize..4, eps in 0.01f64..1.0) {
        let w = mixing(seed, n);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
        let x = random_rows(&mut rng, n, p);
        let g = random_rows(&mut rng, n, p);
        let alpha = 0.7;
        let next = quantimed_update(&x, &x, &w, StepSizes::constant(alpha, eps).unwrap(), &g);
        let pg = penalty_gradient(&w, alpha, &x, &g);
        for i in 0..n {
            for k in 0..p {
                prop_assert!((next[i][k] - (x[i][k] - eps * pg[i][k])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gap_splits_into_mean_and_spread(seed in any::<u64>(), n in 1usize..10, p in 1usize..5) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = random_rows(&mut rng, n, p);
        let opt: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        let mean = column_mean(&x);
        let bias: f64 = mean.iter().zip(&opt).map(|(a, b)| (a - b).powi(2)).sum();
        let gap = optimality_gap(&x, Some(&opt)).unwrap();
        prop_assert!((gap - (bias + consensus_error(&x))).abs() <= 1e-12 * (1.0 + gap));
    }
}

const QUAD_RING: &str = "
algo = quantimed
seed = 4
n = 10
m = 20
p = 2
T = 2000
topology.kind = ring
step.delta = 0.4
speed.kind = degenerate
speed.value = 16
batch.deadline = 1
quantizer.bits = 8
quantizer.eta = 0.05
init.kind = normal
init.scale = 1
record.every = 100
";

#[test]
fn quadratic_ring_shrinks_the_gap_tenfold() {
    // from a unit-scale start; at zero init the starting gap is already tiny
    let rec = run_experiment(&parse_config(QUAD_RING).unwrap()).unwrap();
    let first = rec.rows.first().unwrap().gap.unwrap();
    let last = rec.rows.last().unwrap().gap.unwrap();
    assert!(last * 10.0 <= first, "gap {first} -> {last}");
    assert_eq!(rec.summary.clamped, 0);
}

#[test]
fn identical_configs_give_identical_records() {
    let cfg = parse_config(QUAD_RING).unwrap();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.content_digest().unwrap(), b.content_digest().unwrap());
    assert_eq!(a.final_models_digest, b.final_models_digest);
    let other = run_experiment(&parse_config(&QUAD_RING.replace("seed = 4", "seed = 5")).unwrap()).unwrap();
    assert_ne!(a.final_models_digest, other.final_models_digest);
}

#[test]
fn dsgd_and_quantimed_agree_without_noise_sources() {
    // equal speeds with a whole-batch deadline, a fine quantizer and ε = 1
    // turn QuanTimed into DSGD up to quantization noise
    let base = "
seed = 2
n = 6
m = 10
p = 2
T = 200
topology.kind = complete
step.schedule = constant
step.alpha = 0.2
speed.kind = degenerate
speed.value = 10
record.every = 200
";
    let q = parse_config(&format!("algo = quantimed\n{base}step.eps = 1\nbatch.b = 10\nquantizer.bits = 16\nquantizer.eta = 0.00001\n")).unwrap();
    let d = parse_config(&format!("algo = dsgd\n{base}batch.b = 10\n")).unwrap();
    let (rq, rd) = (run_experiment(&q).unwrap(), run_experiment(&d).unwrap());
    for (a, b) in rq.final_models.iter().flatten().zip(rd.final_models.iter().flatten()) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

#[test]
fn async_run_reaches_its_budget_and_improves() {
    let cfg = parse_config(
        "
algo = async
seed = 3
n = 8
m = 20
p = 2
topology.kind = ring
step.alpha = 0.05
batch.b = 4
async.budget = 20
async.samples = 40
init.kind = normal
init.scale = 1
",
    )
    .unwrap();
    let rec = run_experiment(&cfg).unwrap();
    assert_eq!(rec.rows.len(), 41);
    assert!(rec.rows.windows(2).all(|w| w[0].sim_time_s <= w[1].sim_time_s));
    assert!((rec.rows.last().unwrap().sim_time_s - 20.0).abs() < 1e-9);
    let (first, last) = (rec.rows[0].gap.unwrap(), rec.rows.last().unwrap().gap.unwrap());
    assert!(last < first, "gap {first} -> {last}");
}
