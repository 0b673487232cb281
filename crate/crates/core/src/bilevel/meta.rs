//! Meta-gradient accumulation over a look-ahead window and the α update.

use log::debug;
use serde::{Deserialize, Serialize};

use super::config::MetaOptimizerKind;
use crate::diffcore::ParamVector;
use crate::error::{Error, Result};

/// Below this `‖g_w‖²` the carry-over term is dropped.
pub const GRAD_NORM_SQ_FLOOR: f64 = 1e-20;

/// Per-parameter learning rates `Λ` of the main update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LrDiag {
    Uniform(f64),
    /// One rate per flattened main-model coordinate.
    PerParameter(Vec<f64>),
}

impl LrDiag {
    /// `Λ ⊙ x`.
    pub fn apply(&self, x: &ParamVector) -> Result<ParamVector> {
        match self {
            LrDiag::Uniform(lr) => Ok(x.scaled(*lr)),
            LrDiag::PerParameter(rates) => {
                check_len(rates.len(), x.total_len())?;
                let flat: Vec<f64> = x.iter().zip(rates).map(|(v, r)| v * r).collect();
                x.unflatten(&flat)
            }
        }
    }

    /// `⟨a, (1 − Λ) ⊙ b⟩`.
    pub fn complement_dot(&self, a: &ParamVector, b: &ParamVector) -> Result<f64> {
        match self {
            LrDiag::Uniform(lr) => Ok((1.0 - lr) * a.dot(b)?),
            LrDiag::PerParameter(rates) => {
                check_len(rates.len(), a.total_len())?;
                check_len(rates.len(), b.total_len())?;
                Ok(a.iter()
                    .zip(b.iter())
                    .zip(rates)
                    .map(|((x, y), r)| x * (1.0 - r) * y)
                    .sum())
            }
        }
    }
}

fn check_len(rates: usize, params: usize) -> Result<()> {
    if rates != params {
        return Err(Error::ShapeMismatch {
            op: "lr_diag",
            lhs: vec![rates],
            rhs: vec![params],
        });
    }
    Ok(())
}

/// Running approximation of `∂L_D(w)/∂α` inside one look-ahead window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaGradState {
    pub prev_meta_grad: ParamVector,
    pub lr_diag: LrDiag,
    /// Accumulations since the last meta update, in `0..=window`.
    pub steps_since_meta_update: usize,
    pub window: usize,
}

impl MetaGradState {
    pub fn new(alpha: &ParamVector, lr_diag: LrDiag, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig(
                "look-ahead window must be >= 1".into(),
            ));
        }
        Ok(Self {
            prev_meta_grad: alpha.zeros_like(),
            lr_diag,
            steps_since_meta_update: 0,
            window,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.steps_since_meta_update == self.window
    }

    fn reset(&mut self) {
        self.prev_meta_grad.fill(0.0);
        self.steps_since_meta_update = 0;
    }
}

/// Folds one main step into the window:
/// `c = ⟨g_{w'}, (1 − Λ) g_w⟩ / ‖g_w‖²`, `prev ← c·prev − hvp`.
///
/// The `H_{w,w}` factor of the recursion is taken as the identity.
pub fn accumulate_meta_grad(
    state: &mut MetaGradState,
    g_w: &ParamVector,
    g_w_next: &ParamVector,
    hvp: &ParamVector,
) -> Result<()> {
    if state.is_complete() {
        return Err(Error::WindowFull {
            window: state.window,
        });
    }
    if !g_w.is_finite() || !g_w_next.is_finite() || !hvp.is_finite() {
        return Err(Error::NonFinite(format!(
            "meta accumulation inputs: |g_w| {}, |g_w'| {}, |hvp| {}",
            g_w.l2_norm(),
            g_w_next.l2_norm(),
            hvp.l2_norm()
        )));
    }
    let norm_sq = g_w.norm_sq();
    let c = if norm_sq < GRAD_NORM_SQ_FLOOR {
        debug!("|g_w|^2 = {norm_sq:e} below floor, dropping carry-over term");
        0.0
    } else {
        state.lr_diag.complement_dot(g_w_next, g_w)? / norm_sq
    };
    state.prev_meta_grad.scale(c);
    state.prev_meta_grad.add_scaled(hvp, -1.0)?;
    state.steps_since_meta_update += 1;
    Ok(())
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer state for α.
#[derive(Clone, Debug)]
pub enum MetaOptimizer {
    SgdMomentum {
        momentum: f64,
        velocity: ParamVector,
    },
    Adaptive {
        m: ParamVector,
        v: ParamVector,
        t: u64,
    },
}

impl MetaOptimizer {
    pub fn new(kind: MetaOptimizerKind, momentum: f64, alpha: &ParamVector) -> Self {
        match kind {
            MetaOptimizerKind::SgdMomentum => MetaOptimizer::SgdMomentum {
                momentum,
                velocity: alpha.zeros_like(),
            },
            MetaOptimizerKind::Adaptive => MetaOptimizer::Adaptive {
                m: alpha.zeros_like(),
                v: alpha.zeros_like(),
                t: 0,
            },
        }
    }

    fn update(&mut self, alpha: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
        match self {
            MetaOptimizer::SgdMomentum { momentum, velocity } => {
                velocity.scale(*momentum);
                velocity.add_scaled(grad, 1.0)?;
                alpha.add_scaled(velocity, -lr)
            }
            MetaOptimizer::Adaptive { m, v, t } => {
                *t += 1;
                m.zip_apply(grad, |mi, g| {
                    *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g
                })?;
                v.zip_apply(grad, |vi, g| {
                    *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g
                })?;
                let bc1 = 1.0 - ADAM_BETA1.powi(*t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(*t as i32);
                let step: Vec<f64> = m
                    .iter()
                    .zip(v.iter())
                    .map(|(mi, vi)| (mi / bc1) / ((vi / bc2).sqrt() + ADAM_EPS))
                    .collect();
                let step = alpha.unflatten(&step)?;
                alpha.add_scaled(&step, -lr)
            }
        }
    }
}

/// Moves α against the accumulated meta-gradient and resets the window.
pub fn meta_step(
    alpha: &mut ParamVector,
    state: &mut MetaGradState,
    optimizer: &mut MetaOptimizer,
    meta_lr: f64,
) -> Result<()> {
    if !state.is_complete() {
        return Err(Error::IncompleteWindow {
            done: state.steps_since_meta_update,
            window: state.window,
        });
    }
    optimizer.update(alpha, &state.prev_meta_grad, meta_lr)?;
    state.reset();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn pv(name: &str, v: Vec<f64>) -> ParamVector {
        ParamVector::from_segments(vec![(name.into(), Tensor::vector(v))]).unwrap()
    }

    #[test]
    fn fresh_window_gives_negated_hvp() {
        let alpha = pv("a", vec![0.0, 0.0]);
        let mut st = MetaGradState::new(&alpha, LrDiag::Uniform(0.1), 3).unwrap();
        let hvp = pv("a", vec![0.5, -2.0]);
        accumulate_meta_grad(&mut st, &pv("w", vec![1.0]), &pv("w", vec![2.0]), &hvp).unwrap();
        assert_eq!(st.prev_meta_grad.flatten(), vec![-0.5, 2.0]);
        assert_eq!(st.steps_since_meta_update, 1);
    }

    #[test]
    fn unit_rate_kills_carry_over() {
        let alpha = pv("a", vec![0.0]);
        let mut st = MetaGradState::new(&alpha, LrDiag::Uniform(1.0), 2).unwrap();
        st.prev_meta_grad = pv("a", vec![7.0]);
        let hvp = pv("a", vec![1.0]);
        accumulate_meta_grad(&mut st, &pv("w", vec![1.0]), &pv("w", vec![3.0]), &hvp).unwrap();
        assert_eq!(st.prev_meta_grad.flatten(), vec![-1.0]);
    }

    #[test]
    fn carry_over_scalar() {
        let alpha = pv("a", vec![0.0]);
        let mut st = MetaGradState::new(&alpha, LrDiag::Uniform(0.5), 2).unwrap();
        st.prev_meta_grad = pv("a", vec![4.0]);
        // c = 0.5 * <(1,1),(2,0)> / 4 = 0.25
        accumulate_meta_grad(
            &mut st,
            &pv("w", vec![2.0, 0.0]),
            &pv("w", vec![1.0, 1.0]),
            &pv("a", vec![0.0]),
        )
        .unwrap();
        assert!((st.prev_meta_grad.flatten()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn per_parameter_matches_uniform() {
        let a = pv("w", vec![1.0, -2.0, 3.0]);
        let b = pv("w", vec![0.5, 0.5, 2.0]);
        let u = LrDiag::Uniform(0.3);
        let p = LrDiag::PerParameter(vec![0.3; 3]);
        assert!(
            (u.complement_dot(&a, &b).unwrap() - p.complement_dot(&a, &b).unwrap()).abs() < 1e-12
        );
        assert_eq!(
            u.apply(&a).unwrap().flatten(),
            p.apply(&a).unwrap().flatten()
        );
        assert!(LrDiag::PerParameter(vec![0.1]).apply(&a).is_err());
    }

    #[test]
    fn tiny_gradient_drops_first_term() {
        let alpha = pv("a", vec![0.0]);
        let mut st = MetaGradState::new(&alpha, LrDiag::Uniform(0.1), 2).unwrap();
        st.prev_meta_grad = pv("a", vec![5.0]);
        accumulate_meta_grad(
            &mut st,
            &pv("w", vec![1e-12]),
            &pv("w", vec![1.0]),
            &pv("a", vec![1.0]),
        )
        .unwrap();
        assert_eq!(st.prev_meta_grad.flatten(), vec![-1.0]);
    }

    #[test]
    fn window_discipline() {
        let alpha = pv("a", vec![1.0]);
        let mut st = MetaGradState::new(&alpha, LrDiag::Uniform(0.1), 2).unwrap();
        let mut opt = MetaOptimizer::new(MetaOptimizerKind::SgdMomentum, 0.9, &alpha);
        let mut a = alpha.clone();
        let g = pv("w", vec![1.0]);
        let h = pv("a", vec![1.0]);
        accumulate_meta_grad(&mut st, &g, &g, &h).unwrap();
        assert!(matches!(
            meta_step(&mut a, &mut st, &mut opt, 0.1),
            Err(Error::IncompleteWindow { done: 1, window: 2 })
        ));
        accumulate_meta_grad(&mut st, &g, &g, &h).unwrap();
        assert!(matches!(
            accumulate_meta_grad(&mut st, &g, &g, &h),
            Err(Error::WindowFull { window: 2 })
        ));
        meta_step(&mut a, &mut st, &mut opt, 0.1).unwrap();
        assert_eq!(st.steps_since_meta_update, 0);
        assert_eq!(st.prev_meta_grad.norm_sq(), 0.0);
        assert_ne!(a, alpha);
    }

    #[test]
    fn zero_meta_lr_keeps_alpha_and_resets() {
        for kind in [MetaOptimizerKind::SgdMomentum, MetaOptimizerKind::Adaptive] {
            let alpha = pv("a", vec![0.3, -0.4]);
            let mut st = MetaGradState::new(&alpha, LrDiag::Uniform(0.1), 1).unwrap();
            let mut opt = MetaOptimizer::new(kind, 0.9, &alpha);
            accumulate_meta_grad(
                &mut st,
                &pv("w", vec![1.0]),
                &pv("w", vec![1.0]),
                &pv("a", vec![2.0, 1.0]),
            )
            .unwrap();
            let mut a = alpha.clone();
            meta_step(&mut a, &mut st, &mut opt, 0.0).unwrap();
            assert_eq!(a, alpha);
            assert_eq!(st.steps_since_meta_update, 0);
            assert_eq!(st.prev_meta_grad.norm_sq(), 0.0);
        }
    }

    #[test]
    fn adaptive_first_step_is_sign_times_lr() {
        let alpha = pv("a", vec![0.0, 0.0]);
        let mut opt = MetaOptimizer::new(MetaOptimizerKind::Adaptive, 0.0, &alpha);
        let mut a = alpha.clone();
        opt.update(&mut a, &pv("a", vec![3.0, -0.01]), 0.1).unwrap();
        let f = a.flatten();
        assert!((f[0] + 0.1).abs() < 1e-6 && (f[1] - 0.1).abs() < 1e-5);
    }
}
