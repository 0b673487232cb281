mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mlc_core::bilevel::{
    accumulate_meta_grad, main_step, meta_step, train_mlc, Corrector, LrDiag, MetaGradState,
    MetaOptimizer, MetaOptimizerKind, TrainConfig,
};
use mlc_core::data::{gen_blobs, make_bundle, SplitSize, SplitSpec};
use mlc_core::diffcore::{Graph, ParamVector, Tensor};
use mlc_core::harness::gradcheck::random_instance;
use mlc_core::models::{lcn_predict, ClassifierConfig, LcnConfig};
use mlc_core::noise::{inject, NoiseKind, NoiseSpec};

use common::central_diff;

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// A loss touching every primitive: affine, tanh, embedding, concat,
/// softmax, log, log-softmax, element-wise product, scale, sums and means.
fn composite(params: &ParamVector, x: &Tensor, idx: &[usize], t: &Tensor) -> (f64, ParamVector) {
    let mut g = Graph::new();
    let p = g.bind(params);
    let xi = g.input(x.clone());
    let ti = g.input(t.clone());
    let e = g.embedding(p.get("table").unwrap(), idx).unwrap();
    let h = g.concat_cols(e, xi).unwrap();
    let z = g.matmul(h, p.get("w").unwrap()).unwrap();
    let z = g.add_bias(z, p.get("b").unwrap()).unwrap();
    let a = g.tanh(z).unwrap();
    let ls = g.log_softmax(a).unwrap();
    let sm = g.softmax(a).unwrap();
    let lg = g.log(sm).unwrap();
    let both = g.add(ls, lg).unwrap();
    let prod = g.mul(both, ti).unwrap();
    let rows = g.sum_rows(prod).unwrap();
    let m = g.mean_batch(rows).unwrap();
    let sq = g.dot(a, a).unwrap();
    let sq = g.scale(sq, 0.1).unwrap();
    let total = g.add(m, sq).unwrap();
    let grads = g.backward_scalar(total).unwrap();
    (g.value(total).item(), grads.wrt(&p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primitive_gradients_match_central_differences(seed in any::<u64>(), n in 1usize..5, d in 1usize..4, c in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamVector::from_segments(vec![
            ("table".into(), tensor(&mut rng, &[3, 2], 1.0)),
            ("w".into(), tensor(&mut rng, &[2 + d, c], 1.0)),
            ("b".into(), tensor(&mut rng, &[c], 0.5)),
        ]).unwrap();
        let x = tensor(&mut rng, &[n, d], 1.5);
        let t = tensor(&mut rng, &[n, c], 1.0);
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let (_, analytic) = composite(&params, &x, &idx, &t);
        let numeric = central_diff(|p| composite(p, &x, &idx, &t).0, &params, 1e-5);
        for (a, n) in analytic.flatten().iter().zip(numeric.flatten()) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            prop_assert!(rel <= 1e-4, "analytic {a} numeric {n}");
        }
    }

    #[test]
    fn gradients_are_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamVector::from_segments(vec![
            ("table".into(), tensor(&mut rng, &[3, 2], 1.0)),
            ("w".into(), tensor(&mut rng, &[4, 3], 1.0)),
            ("b".into(), tensor(&mut rng, &[3], 0.5)),
        ]).unwrap();
        let x = tensor(&mut rng, &[4, 2], 1.0);
        let t = tensor(&mut rng, &[4, 3], 1.0);
        let idx = [0, 2, 1, 2];
        let (l1, g1) = composite(&params, &x, &idx, &t);
        let (l2, g2) = composite(&params, &x, &idx, &t);
        prop_assert_eq!(l1.to_bits(), l2.to_bits());
        prop_assert!(g1.flatten().iter().zip(g2.flatten()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn barriers_pass_zero_gradient(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = ParamVector::from_segments(vec![
            ("u".into(), tensor(&mut rng, &[3, 3], 1.0)),
            ("v".into(), tensor(&mut rng, &[3, 2], 1.0)),
        ]).unwrap();
        let mut g = Graph::new();
        let p = g.bind(&params);
        let x = g.input(tensor(&mut rng, &[2, 3], 1.0));
        let hu = g.matmul(x, p.get("u").unwrap()).unwrap();
        let hu = g.tanh(hu).unwrap();
        let blocked = g.stop_gradient(hu);
        let out = g.matmul(blocked, p.get("v").unwrap()).unwrap();
        let out = g.softmax(out).unwrap();
        let loss = g.dot(out, out).unwrap();
        let grads = g.backward_scalar(loss).unwrap().wrt(&p);
        prop_assert!(grads.get("u").unwrap().data().iter().all(|&v| v == 0.0));
        prop_assert!(grads.get("v").unwrap().data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn softmax_rows_are_distributions(rows in proptest::collection::vec(proptest::collection::vec(-700.0f64..700.0, 1..6), 1..5)) {
        let width = rows[0].len();
        let rows: Vec<Vec<f64>> = rows.into_iter().filter(|r| r.len() == width).collect();
        let mut g = Graph::new();
        let x = g.input(Tensor::from_rows(&rows).unwrap());
        let s = g.softmax(x).unwrap();
        let out = g.value(s);
        for i in 0..out.rows() {
            prop_assert!(out.row(i).iter().all(|&p| p >= 0.0));
            prop_assert!((out.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn lcn_outputs_are_distributions(seed in any::<u64>(), c in 2usize..6, f in 1usize..5, scale in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LcnConfig { num_classes: c, label_embed_dim: 4, feature_dim: f, hidden_dim: 5, ..LcnConfig::new(c, f) };
        let mut alpha = cfg.init(seed).unwrap();
        alpha.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
        let features = tensor(&mut rng, &[6, f], scale);
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..c)).collect();
        for s in lcn_predict(&cfg, &alpha, &features, &labels).unwrap() {
            prop_assert!(s.probs().iter().all(|&p| p >= 0.0));
            prop_assert!((s.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn noise_is_deterministic(seed in any::<u64>(), rho in 0.0f64..=1.0, flip in any::<bool>()) {
        let spec = NoiseSpec { kind: if flip { NoiseKind::Flip } else { NoiseKind::Unif }, rho, num_classes: 5, seed };
        let labels: Vec<usize> = (0..200).map(|i| i % 5).collect();
        prop_assert_eq!(inject(&labels, &spec).unwrap(), inject(&labels, &spec).unwrap());
    }

    #[test]
    fn flip_at_one_never_keeps(seed in any::<u64>(), c in 2usize..8) {
        let spec = NoiseSpec { kind: NoiseKind::Flip, rho: 1.0, num_classes: c, seed };
        let labels: Vec<usize> = (0..500).map(|i| i % c).collect();
        let noisy = inject(&labels, &spec).unwrap();
        prop_assert!(labels.iter().zip(&noisy).all(|(a, b)| a != b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bundles_are_stratified_and_deterministic(seed in any::<u64>(), clean in 8usize..40) {
        let data = gen_blobs(3, 2, &[60, 45, 80], 1.0, seed).unwrap();
        let split = SplitSpec { clean: SplitSize::Count(clean), test: SplitSize::Fraction(0.2), standardize: true };
        let noise = NoiseSpec { kind: NoiseKind::Unif, rho: 0.4, num_classes: 3, seed };
        let a = make_bundle(&data, &split, &noise, seed).unwrap();
        let counts = a.clean.class_counts();
        prop_assert_eq!(counts.iter().sum::<usize>(), clean);
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        let b = make_bundle(&data, &split, &noise, seed).unwrap();
        prop_assert_eq!(a.clean.features.data(), b.clean.features.data());
        prop_assert_eq!(&a.noisy.labels, &b.noisy.labels);
        prop_assert_eq!(&a.test.labels, &b.test.labels);
    }

    #[test]
    fn corrected_labels_are_valid_every_step(seed in any::<u64>()) {
        let inst = random_instance(seed, None, None).unwrap();
        let mut w = inst.w.clone();
        let mut velocity = w.zeros_like();
        for _ in 0..5 {
            let step = main_step(&inst.cls, &w, &mut velocity, Corrector::Network { cfg: &inst.lcn, alpha: &inst.alpha }, &inst.batch, 0.1, 0.9).unwrap();
            let targets = step.corrected.unwrap();
            for i in 0..targets.rows() {
                prop_assert!(targets.row(i).iter().all(|&p| p >= 0.0));
                prop_assert!((targets.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            w = step.w_next;
        }
    }

    #[test]
    fn meta_window_restarts_from_zero(k in 1usize..5, windows in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha = ParamVector::from_segments(vec![("a".into(), tensor(&mut rng, &[3], 1.0))]).unwrap();
        let w = ParamVector::from_segments(vec![("w".into(), tensor(&mut rng, &[4], 1.0))]).unwrap();
        let mut a = alpha.clone();
        let mut state = MetaGradState::new(&a, LrDiag::Uniform(0.1), k).unwrap();
        let mut opt = MetaOptimizer::new(MetaOptimizerKind::SgdMomentum, 0.9, &a);
        let mut updates = 0;
        for step in 0..windows * k {
            if step % k == 0 {
                prop_assert!(state.prev_meta_grad.iter().all(|&v| v == 0.0));
            }
            let g = w.plus_scaled(&w, rng.random_range(-1.0..1.0)).unwrap();
            let h = alpha.scaled(rng.random_range(-1.0..1.0));
            prop_assert!(meta_step(&mut a, &mut state, &mut opt, 0.1).is_err());
            accumulate_meta_grad(&mut state, &g, &w, &h).unwrap();
            if state.is_complete() {
                meta_step(&mut a, &mut state, &mut opt, 0.1).unwrap();
                updates += 1;
            }
        }
        prop_assert_eq!(updates, windows);
    }
}

/// Chi-square statistic of two count tables of equal total.
fn chi_square(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0.0)
        .map(|(x, y)| (x - y).powi(2) / (x + y))
        .sum()
}

#[test]
fn injection_commutes_with_class_relabelling() {
    let c = 4;
    let n = 100_000;
    let perm = [2usize, 0, 3, 1];
    let mut inv = [0usize; 4];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    for kind in [NoiseKind::Unif, NoiseKind::Flip] {
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let direct = inject(
            &labels,
            &NoiseSpec {
                kind,
                rho: 0.6,
                num_classes: c,
                seed: 1,
            },
        )
        .unwrap();
        let permuted: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let via_perm: Vec<usize> = inject(
            &permuted,
            &NoiseSpec {
                kind,
                rho: 0.6,
                num_classes: c,
                seed: 2,
            },
        )
        .unwrap()
        .into_iter()
        .map(|l| inv[l])
        .collect();
        let table = |noisy: &[usize]| {
            let mut t = vec![0.0; c * c];
            for (&y, &z) in labels.iter().zip(noisy) {
                t[y * c + z] += 1.0;
            }
            t
        };
        let stat = chi_square(&table(&direct), &table(&via_perm));
        // 16 cells, 12 degrees of freedom (rows fixed): p = 0.001 at 32.91.
        assert!(stat < 32.91, "{kind:?}: chi-square {stat}");
    }
}

#[test]
fn unif_at_one_keeps_one_in_c() {
    let c = 5;
    let n = 50_000;
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let noisy = inject(
        &labels,
        &NoiseSpec {
            kind: NoiseKind::Unif,
            rho: 1.0,
            num_classes: c,
            seed: 9,
        },
    )
    .unwrap();
    let kept = labels.iter().zip(&noisy).filter(|(a, b)| a == b).count() as f64;
    let p = 1.0 / c as f64;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((kept - n as f64 * p).abs() <= 3.0 * sigma, "kept {kept}");
}

#[test]
fn label_embedding_is_live() {
    let cfg = LcnConfig::new(4, 3);
    let mut differing = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let mut alpha = cfg.init(trial).unwrap();
        alpha
            .iter_mut()
            .for_each(|v| *v += rng.random_range(-0.5..0.5));
        let features = tensor(&mut rng, &[1, 3], 1.0);
        let y1 = rng.random_range(0..4);
        let y2 = (y1 + rng.random_range(1..4)) % 4;
        let a = lcn_predict(&cfg, &alpha, &features, &[y1]).unwrap();
        let b = lcn_predict(&cfg, &alpha, &features, &[y2]).unwrap();
        let dist: f64 = a[0]
            .probs()
            .iter()
            .zip(b[0].probs())
            .map(|(p, q)| (p - q).abs())
            .sum();
        differing += usize::from(dist > 0.0);
    }
    assert!(differing >= 99, "{differing}/100");
}

#[test]
fn one_meta_update_per_window_during_training() {
    let data = gen_blobs(3, 2, &[200, 200, 200], 1.0, 3).unwrap();
    let split = SplitSpec {
        clean: SplitSize::Count(60),
        test: SplitSize::Count(60),
        standardize: true,
    };
    let bundle = make_bundle(
        &data,
        &split,
        &NoiseSpec {
            kind: NoiseKind::Flip,
            rho: 0.4,
            num_classes: 3,
            seed: 3,
        },
        3,
    )
    .unwrap();
    let cls = ClassifierConfig {
        input_dim: 2,
        hidden_dims: vec![6],
        num_classes: 3,
    };
    let lcn = LcnConfig {
        label_embed_dim: 4,
        hidden_dim: 4,
        ..LcnConfig::new(3, 6)
    };
    for k in [1, 3, 7] {
        let cfg = TrainConfig {
            k,
            epochs: 2,
            batch_size_noisy: 40,
            batch_size_clean: 20,
            ..TrainConfig::default()
        };
        let out = train_mlc(bundle.training_view(), None, &cls, &lcn, &cfg).unwrap();
        let steps = out.history.steps.len();
        assert_eq!(steps, 2 * 480usize.div_ceil(40));
        assert_eq!(out.history.meta_updates, steps / k, "k = {k}");
    }
}
