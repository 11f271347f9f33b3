use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use quantimed::rng::{Purpose, Streams};
use quantimed::topology::{build_erdos_renyi, default_kappa, laplacian_mixing, lazy_mixing, Graph, MixingMatrix};

fn random_mixing(seed: u64, n: usize, p_c: f64, margin: f64) -> (Graph, MixingMatrix) {
    let g = build_erdos_renyi(n, p_c, &mut Streams::new(seed).global(Purpose::Topology)).unwrap();
    let w = laplacian_mixing(&g, default_kappa(&g, margin)).unwrap();
    (g, w)
}

fn power_beta(w: &DMatrix<f64>, seed: u64) -> f64 {
    let n = w.nrows();
    let a = w - DMatrix::from_element(n, n, 1.0 / n as f64);
    let a2 = &a * &a;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    let mut rq = 0.0;
    for _ in 0..20_000 {
        let next = &a2 * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        rq = v.dot(&next) / v.dot(&v);
        v = next / norm;
    }
    rq.max(0.0).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_matrices_are_stochastic_and_symmetric(seed in any::<u64>(), n in 2usize..30, margin in 0.01f64..2.0) {
        let (g, w) = random_mixing(seed, n, 0.5, margin);
        let wm = w.weights();
        for i in 0..n {
            prop_assert!((wm.row(i).sum() - 1.0).abs() <= 1e-12);
            for j in 0..n {
                prop_assert_eq!(wm[(i, j)], wm[(j, i)]);
                if i != j && !g.has_edge(i, j) {
                    prop_assert_eq!(wm[(i, j)], 0.0);
                }
            }
        }
        prop_assert!(w.eigenvalues().iter().all(|&l| l > -1.0 && l <= 1.0 + 1e-9));
    }

    #[test]
    fn beta_matches_power_iteration(seed in any::<u64>(), n in 3usize..25) {
        let (_, w) = random_mixing(seed, n, 0.5, 0.2);
        let pb = power_beta(w.weights(), seed);
        prop_assert!((pb - w.beta()).abs() <= 1e-8, "power {} vs eigen {}", pb, w.beta());
    }

    #[test]
    fn lazy_spectrum_is_affine(seed in any::<u64>(), n in 2usize..20, t in 0.01f64..1.0) {
        let (_, w) = random_mixing(seed, n, 0.6, 0.3);
        let eps = t * w.lazy_eps_limit().min(1.0);
        let lazy = lazy_mixing(&w, eps).unwrap();
        // independent eigen-solve of W_ε built by hand
        let by_hand = DMatrix::identity(n, n) * (1.0 - eps) + w.weights() * eps;
        let mut direct: Vec<f64> = SymmetricEigen::new(by_hand).eigenvalues.iter().copied().collect();
        direct.sort_by(|a, b| b.total_cmp(a));
        for (k, &l) in w.eigenvalues().iter().enumerate() {
            let expected = 1.0 - eps + eps * l;
            prop_assert!((lazy.eigenvalues()[k] - expected).abs() <= 1e-10);
            prop_assert!((direct[k] - expected).abs() <= 1e-10);
        }
        let lambda2 = w.eigenvalues().get(1).copied().unwrap_or(0.0);
        let expected_beta = 1.0 - eps * (1.0 - lambda2);
        prop_assert!((w.lazy_beta(eps).unwrap() - expected_beta).abs() <= 1e-10);
    }

    #[test]
    fn gossip_contracts_disagreement(seed in any::<u64>(), n in 2usize..20, t in 0.01f64..1.0) {
        let (_, w) = random_mixing(seed, n, 0.6, 0.3);
        let eps = t * w.lazy_eps_limit().min(1.0);
        let lazy = lazy_mixing(&w, eps).unwrap();
        let beta_eps = w.lazy_beta(eps).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5a5a);
        let x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let centered = |v: &DVector<f64>| v.add_scalar(-v.mean());
        let before = centered(&x).norm();
        let after = centered(&(lazy.weights() * &x)).norm();
        prop_assert!(after <= beta_eps * before + 1e-12);
    }

    #[test]
    fn edge_list_round_trips(seed in any::<u64>(), n in 2usize..30) {
        let (g, _) = random_mixing(seed, n, 0.5, 0.2);
        prop_assert_eq!(Graph::parse_edge_list(&g.to_edge_list()).unwrap(), g);
    }
}

#[test]
fn erdos_renyi_edge_frequency_matches_probability() {
    // pairs in connected draws are slightly biased upward; at p_c = 0.5,
    // n = 30 disconnection is rare, so the frequency sits near 0.5
    let (mut edges, mut pairs) = (0usize, 0usize);
    for seed in 0..200u64 {
        let (g, _) = random_mixing(seed, 30, 0.5, 0.2);
        edges += g.edge_count();
        pairs += 30 * 29 / 2;
    }
    let freq = edges as f64 / pairs as f64;
    let se = (0.25 / pairs as f64).sqrt();
    assert!((freq - 0.5).abs() <= 4.0 * se, "edge frequency {freq}");
}

#[test]
fn ring_and_complete_spectra_match_closed_forms() {
    // complete graph: L has eigenvalues {0, n (n-1 times)}
    let n = 6;
    let kappa = 4.0;
    let w = laplacian_mixing(&Graph::complete(n).unwrap(), kappa).unwrap();
    let mut expected = vec![1.0];
    expected.extend(std::iter::repeat_n(1.0 - n as f64 / kappa, n - 1));
    for (a, b) in w.eigenvalues().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    // ring: L has eigenvalues 2 - 2cos(2πk/n)
    let n = 8;
    let w = laplacian_mixing(&Graph::ring(n).unwrap(), 3.0).unwrap();
    let mut ring: Vec<f64> = (0..n).map(|k| 1.0 - (2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()) / 3.0).collect();
    ring.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in w.eigenvalues().iter().zip(&ring) {
        assert!((a - b).abs() < 1e-12);
    }
}
