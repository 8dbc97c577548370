mod common;

use common::{brute_nn_distance, brute_select, permutation_p_value, reference_z, Xorshift};
use swfc_art::failure::default_max_tests;
use swfc_art::metrics::effect_size;
use swfc_art::{
    make_region, run_trial, seeded_rng, wilcoxon_rank_sum, Generator, GeneratorConfig, HnswParams, InputDomain,
    Pattern, Strategy, TestPoint,
};

fn sample(rng: &mut Xorshift, n: usize, levels: u64) -> Vec<f64> {
    (0..n).map(|_| rng.below(levels) as f64).collect()
}

#[test]
fn rank_sum_matches_permutation_enumeration() {
    let mut rng = Xorshift(0x9e37_79b9_7f4a_7c15);
    for n in 2..=10 {
        for n1 in 1..n {
            let n2 = n - n1;
            // Few levels force ties, many levels give distinct values.
            for levels in [3, 6, 1000] {
                for _ in 0..4 {
                    let a = sample(&mut rng, n1, levels);
                    let b = sample(&mut rng, n2, levels);
                    let got = wilcoxon_rank_sum(&a, &b).unwrap();
                    let all_equal = a.iter().chain(&b).all(|&v| v == a[0]);
                    let want = if all_equal { 1.0 } else { permutation_p_value(&a, &b) };
                    assert!(
                        (got.p_value - want).abs() <= 0.02,
                        "{a:?} {b:?}: p {} vs {want}",
                        got.p_value
                    );
                    assert!((got.z - reference_z(&a, &b)).abs() < 1e-12, "{a:?} {b:?}");
                    let r = got.z.abs() / (n as f64).sqrt();
                    assert_eq!(got.effect_size_r, r);
                    assert_eq!(effect_size(got.z, n1, n2), r);
                }
            }
        }
    }
}

#[test]
fn rank_sum_large_samples_use_normal_tail() {
    let a: Vec<f64> = (0..40).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..40).map(|i| i as f64 + 10.5).collect();
    let r = wilcoxon_rank_sum(&a, &b).unwrap();
    assert!(!r.exact);
    let z = reference_z(&a, &b);
    assert!((r.z - z).abs() < 1e-12);
    assert!(r.z < 0.0);
    let normal = independent_two_tailed(z);
    assert!((r.p_value - normal).abs() < 1e-6, "{} vs {normal}", r.p_value);
}

/// Two-tailed normal p-value through the complementary error function's
/// continued fraction, independent of the crate's statistics backend.
fn independent_two_tailed(z: f64) -> f64 {
    let x = z.abs() / std::f64::consts::SQRT_2;
    // Lentz evaluation of erfc for x > 0.
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = 1.0 / d;
        c = x + a / c;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
}

fn run_sequence(config: &GeneratorConfig, steps: usize) -> Vec<TestPoint> {
    let mut g = Generator::new(config.clone()).unwrap();
    (0..steps)
        .map(|_| {
            let t = g.next_test_case();
            g.record_outcome(&t, false);
            t
        })
        .collect()
}

#[test]
fn kd_tree_and_brute_force_choose_identical_candidates() {
    for d in 1..=5 {
        for seed in 0..4u64 {
            let dom = InputDomain::hypercube(d, -5000.0, 5000.0).unwrap();
            let brute = run_sequence(&GeneratorConfig::new(Strategy::FscsBruteForce, dom.clone(), seed), 100);
            let kd = run_sequence(&GeneratorConfig::new(Strategy::FscsKdTree, dom, seed), 100);
            assert_eq!(brute, kd, "d={d} seed={seed}");
        }
    }
}

#[test]
fn brute_force_selection_matches_independent_scan() {
    let mut rng = Xorshift(77);
    for _ in 0..100 {
        let dom = InputDomain::unit(3).unwrap();
        let mut g = Generator::new(GeneratorConfig::new(Strategy::FscsBruteForce, dom, rng.next_u64())).unwrap();
        let executed: Vec<Vec<f64>> = (0..1 + rng.below(200))
            .map(|_| (0..3).map(|_| rng.unit()).collect())
            .collect();
        for p in &executed {
            g.record_outcome(&TestPoint::new(p.clone()).unwrap(), false);
        }
        let candidates: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.unit()).collect()).collect();
        let points: Vec<TestPoint> = candidates.iter().map(|c| TestPoint::new(c.clone()).unwrap()).collect();
        assert_eq!(g.select_best(&points).0, brute_select(&executed, &candidates));
    }
}

#[test]
fn saturated_graph_selection_is_exact() {
    let params = HnswParams {
        m: 64,
        m0: 64,
        ef_search: 64,
        ef_construct: 64,
        level_norm: 1e-12,
        base_capacity: 128,
    };
    for d in [1, 2, 4] {
        for seed in 0..3u64 {
            let dom = InputDomain::unit(d).unwrap();
            let mut swfc = GeneratorConfig::new(Strategy::SwfcArt, dom.clone(), seed);
            swfc.hnsw = params.clone();
            let graph = run_sequence(&swfc, 60);
            let brute = run_sequence(&GeneratorConfig::new(Strategy::FscsBruteForce, dom, seed), 60);
            assert_eq!(graph, brute, "d={d} seed={seed}");
        }
    }
}

#[test]
fn graph_selection_stays_in_the_upper_half() {
    let k: usize = 10;
    let mut rng = Xorshift(2024);
    let mut good = 0;
    let mut steps = 0;
    for (d, seed) in [(2usize, 1u64), (5, 2), (10, 3), (3, 4)] {
        let dom = InputDomain::unit(d).unwrap();
        let mut g = Generator::new(GeneratorConfig::new(Strategy::SwfcArt, dom, seed)).unwrap();
        let mut executed: Vec<Vec<f64>> = Vec::new();
        for _ in 0..250 {
            let t = g.next_test_case();
            g.record_outcome(&t, false);
            executed.push(t.into_coords());
            let candidates: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.unit()).collect()).collect();
            let points: Vec<TestPoint> = candidates.iter().map(|c| TestPoint::new(c.clone()).unwrap()).collect();
            let (chosen, _) = g.select_best(&points);
            let true_nn: Vec<f64> = candidates.iter().map(|c| brute_nn_distance(&executed, c)).collect();
            let dominated = true_nn.iter().filter(|&&x| true_nn[chosen] >= x).count();
            steps += 1;
            if dominated >= k.div_ceil(2) {
                good += 1;
            }
        }
    }
    assert_eq!(steps, 1000);
    assert!(good >= 990, "{good} / {steps}");
}

#[test]
fn same_seed_same_sequence_for_every_strategy() {
    let dom = InputDomain::hypercube(3, -10.0, 10.0).unwrap();
    for s in Strategy::ALL {
        let cfg = GeneratorConfig::new(s, dom.clone(), 42);
        assert_eq!(run_sequence(&cfg, 300), run_sequence(&cfg, 300), "{s}");
        assert_ne!(run_sequence(&cfg, 5), run_sequence(&cfg.with_seed(43), 5), "{s}");
    }
}

#[test]
fn trials_replay_except_timing() {
    let dom = InputDomain::unit(2).unwrap();
    for pattern in Pattern::ALL {
        let region = make_region(pattern, &dom, 0.01, &mut seeded_rng(5)).unwrap();
        for s in Strategy::ALL {
            let cfg = GeneratorConfig::new(s, dom.clone(), 9);
            let mut a = run_trial(&cfg, &region, default_max_tests(0.01)).unwrap();
            let mut b = run_trial(&cfg, &region, default_max_tests(0.01)).unwrap();
            a.gen_time_ns = 0;
            b.gen_time_ns = 0;
            assert_eq!(a, b);
        }
    }
}

#[test]
fn candidate_streams_are_shared_across_strategies() {
    // First test case is a plain sample, identical for every strategy.
    let dom = InputDomain::unit(4).unwrap();
    let firsts: Vec<TestPoint> = Strategy::ALL
        .iter()
        .map(|&s| run_sequence(&GeneratorConfig::new(s, dom.clone(), 3), 1)[0].clone())
        .collect();
    assert!(firsts.windows(2).all(|w| w[0] == w[1]));
}
