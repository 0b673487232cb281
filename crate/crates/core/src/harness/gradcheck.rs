//! Randomized gradient and meta-gradient checks behind `mlc gradcheck`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bilevel::oracle::{
    compare, single_step_meta_gradient, training_mixed_hvp_double_fd, unrolled_alpha_grad_fd,
    EvalBatch,
};
use crate::bilevel::{
    lcn_features, mixed_hvp_fd, training_grad_alpha, training_grad_w, training_loss_pinned,
    Corrector, TrainBatch,
};
use crate::diffcore::{
    numerical_gradient, relative_error, Graph, ParamVector, Tensor, DEFAULT_FD_EPS,
};
use crate::error::Result;
use crate::models::{
    classifier_forward, lcn_predict, soft_cross_entropy, ClassifierConfig, FeatureSource, LcnConfig,
};

pub const GRADIENT_TOL: f64 = 1e-4;
pub const DETACHED_TOL: f64 = 1e-12;
pub const ANCHOR_MIN_COSINE: f64 = 0.99;
pub const ANCHOR_MAX_REL: f64 = 5e-2;
pub const HVP_TOL: f64 = 1e-2;

/// A small random classifier + correction network with data.
#[derive(Clone, Debug)]
pub struct Instance {
    pub cls: ClassifierConfig,
    pub lcn: LcnConfig,
    pub w: ParamVector,
    pub alpha: ParamVector,
    pub batch: TrainBatch,
    pub eval: EvalBatch,
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    let data = (0..n * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    Tensor::matrix(n, d, data).expect("sized")
}

fn labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..c)).collect()
}

/// Draws an instance. `num_classes`/`input_dim` of `None` are drawn too.
pub fn random_instance(
    seed: u64,
    num_classes: Option<usize>,
    input_dim: Option<usize>,
) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = num_classes.unwrap_or_else(|| rng.random_range(2..=4));
    let d = input_dim.unwrap_or_else(|| rng.random_range(1..=4));
    let depth = rng.random_range(1..=2);
    let hidden_dims = (0..depth).map(|_| rng.random_range(2..=6)).collect();
    let cls = ClassifierConfig {
        input_dim: d,
        hidden_dims,
        num_classes: c,
    };
    let lcn = LcnConfig {
        num_classes: c,
        label_embed_dim: rng.random_range(2..=5),
        feature_dim: cls.feature_dim(),
        hidden_dim: rng.random_range(2..=6),
        feature_source: if rng.random_bool(0.5) {
            FeatureSource::PostActivation
        } else {
            FeatureSource::PreActivation
        },
    };
    let mut w = cls.init(rng.random())?;
    let mut alpha = lcn.init(rng.random())?;
    // Nonzero biases and a live embedding so every parameter matters.
    for pv in [&mut w, &mut alpha] {
        for v in pv.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let n_noisy = rng.random_range(3..=8);
    let n_clean = rng.random_range(0..=3);
    let n_eval = rng.random_range(2..=6);
    let batch = TrainBatch {
        noisy_x: gaussian_rows(&mut rng, n_noisy, d),
        noisy_labels: labels(&mut rng, n_noisy, c),
        clean_x: gaussian_rows(&mut rng, n_clean, d),
        clean_labels: labels(&mut rng, n_clean, c),
    };
    let eval = EvalBatch {
        x: gaussian_rows(&mut rng, n_eval, d),
        labels: labels(&mut rng, n_eval, c),
    };
    Ok(Instance {
        cls,
        lcn,
        w,
        alpha,
        batch,
        eval,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    /// Worst value of the check's metric (error, or cosine for the anchor).
    pub worst: f64,
    pub threshold: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Reverse-mode gradients of the training loss w.r.t. `w` and `α` versus
/// central differences (`w` probes keep the correction network's input at
/// the unperturbed features, as the stop-gradient prescribes).
pub fn check_gradients(draws: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome {
        name: "gradients".into(),
        instances: draws,
        failures: 0,
        worst: 0.0,
        threshold: GRADIENT_TOL,
    };
    for i in 0..draws {
        let inst = random_instance(seed.wrapping_add(i as u64), None, None)?;
        let Instance {
            cls,
            lcn,
            w,
            alpha,
            batch,
            ..
        } = &inst;
        let corrector = Corrector::Network { cfg: lcn, alpha };
        let features = lcn_features(cls, lcn, w, &batch.noisy_x)?;
        let (_, gw) = training_grad_w(cls, w, corrector, batch)?;
        let nw = numerical_gradient(
            |wp| training_loss_pinned(cls, wp, w, corrector, batch),
            w,
            DEFAULT_FD_EPS,
        )?;
        let ga = training_grad_alpha(cls, lcn, alpha, w, batch, Some(&features))?;
        let na = numerical_gradient(
            |ap| {
                training_loss_pinned(
                    cls,
                    w,
                    w,
                    Corrector::Network {
                        cfg: lcn,
                        alpha: ap,
                    },
                    batch,
                )
            },
            alpha,
            DEFAULT_FD_EPS,
        )?;
        for (analytic, numeric) in [(gw, nw), (ga, na)] {
            let err = analytic
                .iter()
                .zip(numeric.iter())
                .map(|(&a, &n)| relative_error(a, n))
                .fold(0.0, f64::max);
            out.worst = out.worst.max(err);
            out.failures += usize::from(err > GRADIENT_TOL);
        }
    }
    Ok(out)
}

/// `∂L_{D'}/∂w` equals the gradient obtained when the corrected labels are
/// fed in as constants.
pub fn check_stop_gradient(draws: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome {
        name: "stop_gradient".into(),
        instances: draws,
        failures: 0,
        worst: 0.0,
        threshold: DETACHED_TOL,
    };
    for i in 0..draws {
        let mut inst = random_instance(seed.wrapping_add(i as u64), None, None)?;
        inst.batch.clean_x = Tensor::zeros(&[0, inst.cls.input_dim]);
        inst.batch.clean_labels.clear();
        let Instance {
            cls,
            lcn,
            w,
            alpha,
            batch,
            ..
        } = &inst;
        let (_, live) = training_grad_w(cls, w, Corrector::Network { cfg: lcn, alpha }, batch)?;

        let features = lcn_features(cls, lcn, w, &batch.noisy_x)?;
        let soft = lcn_predict(lcn, alpha, &features, &batch.noisy_labels)?;
        let targets: Vec<f64> = soft.iter().flat_map(|s| s.probs().to_vec()).collect();
        let mut g = Graph::new();
        let wh = g.bind(w);
        let x = g.input(batch.noisy_x.clone());
        let o = classifier_forward(&mut g, cls, x, &wh)?;
        let t = g.input(Tensor::matrix(soft.len(), cls.num_classes, targets)?);
        let loss = soft_cross_entropy(&mut g, t, o.logits)?;
        let detached = g.backward_scalar(loss)?.wrt(&wh);

        let diff = live
            .sub(&detached)?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        out.worst = out.worst.max(diff);
        out.failures += usize::from(diff > DETACHED_TOL);
    }
    Ok(out)
}

/// Single-step meta-gradient versus finite differences of the unrolled
/// objective `L_D(w − η∇_w L_{D'})` on 2-class, 2-feature instances.
pub fn check_meta_anchor(draws: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome {
        name: "meta_gradient_anchor".into(),
        instances: draws,
        failures: 0,
        worst: 1.0,
        threshold: ANCHOR_MIN_COSINE,
    };
    let lr = 0.5;
    for i in 0..draws {
        let inst = random_instance(seed.wrapping_add(i as u64), Some(2), Some(2))?;
        let Instance {
            cls,
            lcn,
            w,
            alpha,
            batch,
            eval,
        } = &inst;
        let ours = single_step_meta_gradient(cls, lcn, alpha, w, batch, eval, lr, 0.01)?;
        let fd = unrolled_alpha_grad_fd(cls, lcn, alpha, w, batch, eval, lr, DEFAULT_FD_EPS)?;
        let (cos, rel) = compare(&ours, &fd)?;
        out.worst = out.worst.min(cos);
        out.failures += usize::from(cos < ANCHOR_MIN_COSINE || rel > ANCHOR_MAX_REL);
    }
    Ok(out)
}

/// Finite-difference mixed HVP versus a loss-value double difference.
pub fn check_mixed_hvp(draws: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome {
        name: "mixed_hvp".into(),
        instances: draws,
        failures: 0,
        worst: 0.0,
        threshold: HVP_TOL,
    };
    for i in 0..draws {
        let inst = random_instance(seed.wrapping_add(i as u64), None, None)?;
        let Instance {
            cls,
            lcn,
            w,
            alpha,
            batch,
            ..
        } = &inst;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64) ^ 0x5eed);
        let flat: Vec<f64> = w.iter().map(|_| rng.random_range(-0.1..0.1)).collect();
        let v = w.unflatten(&flat)?;
        let ours = mixed_hvp_fd(cls, lcn, alpha, w, batch, &v, 0.01)?;
        let oracle = training_mixed_hvp_double_fd(cls, lcn, alpha, w, batch, &v, 1e-4, 1e-3)?;
        let (_, rel) = compare(&ours, &oracle)?;
        out.worst = out.worst.max(rel);
        out.failures += usize::from(rel > HVP_TOL);
    }
    Ok(out)
}

/// Runs every check with `draws` random instances each.
pub fn gradcheck_suite(draws: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_gradients(draws, seed)?,
        check_stop_gradient(draws, seed)?,
        check_meta_anchor(draws, seed)?,
        check_mixed_hvp(draws, seed)?,
    ])
}
