//! Reference implementations used as oracles by the integration tests.
//! Nothing here calls the library's own differentiation or checking code.
#![allow(dead_code)]

use mlc_core::diffcore::{ParamVector, Tensor};
use mlc_core::models::ClassifierConfig;

/// Row-major `[rows, cols]` matrix.
#[derive(Clone, Debug)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn from_tensor(t: &Tensor) -> Mat {
        Mat {
            rows: t.rows(),
            cols: t.cols(),
            data: t.data().to_vec(),
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

fn affine(x: &Mat, w: &Tensor, b: &Tensor) -> Mat {
    let (din, dout) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.cols, din);
    let mut out = vec![0.0; x.rows * dout];
    for i in 0..x.rows {
        for o in 0..dout {
            let mut s = b.data()[o];
            for k in 0..din {
                s += x.at(i, k) * w.data()[k * dout + o];
            }
            out[i * dout + o] = s;
        }
    }
    Mat {
        rows: x.rows,
        cols: dout,
        data: out,
    }
}

fn layer_names(cls: &ClassifierConfig) -> Vec<String> {
    let mut names: Vec<String> = (0..cls.hidden_dims.len())
        .map(|i| format!("hidden{i}"))
        .collect();
    names.push("output".into());
    names
}

/// Activations of every layer (input first) and the logits.
pub fn mlp_forward(cls: &ClassifierConfig, w: &ParamVector, x: &Mat) -> (Vec<Mat>, Mat) {
    let names = layer_names(cls);
    let mut acts = vec![x.clone()];
    for name in &names[..names.len() - 1] {
        let mut z = affine(
            acts.last().unwrap(),
            w.get(&format!("{name}.weight")).unwrap(),
            w.get(&format!("{name}.bias")).unwrap(),
        );
        z.data.iter_mut().for_each(|v| *v = v.tanh());
        acts.push(z);
    }
    let last = names.last().unwrap();
    let logits = affine(
        acts.last().unwrap(),
        w.get(&format!("{last}.weight")).unwrap(),
        w.get(&format!("{last}.bias")).unwrap(),
    );
    (acts, logits)
}

fn softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Mean soft cross-entropy of the classifier on `x` against row targets.
pub fn soft_ce(cls: &ClassifierConfig, w: &ParamVector, x: &Mat, targets: &[Vec<f64>]) -> f64 {
    let (_, logits) = mlp_forward(cls, w, x);
    let mut total = 0.0;
    for (i, t) in targets.iter().enumerate() {
        let row = &logits.data[i * logits.cols..(i + 1) * logits.cols];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total -= t.iter().zip(row).map(|(p, z)| p * (z - lse)).sum::<f64>();
    }
    total / targets.len() as f64
}

/// Hand-derived gradient of [`soft_ce`] w.r.t. the classifier weights.
pub fn soft_ce_grad(
    cls: &ClassifierConfig,
    w: &ParamVector,
    x: &Mat,
    targets: &[Vec<f64>],
) -> (f64, ParamVector) {
    let (acts, logits) = mlp_forward(cls, w, x);
    let n = targets.len() as f64;
    let c = logits.cols;
    let mut delta = Mat {
        rows: logits.rows,
        cols: c,
        data: vec![0.0; logits.data.len()],
    };
    for (i, t) in targets.iter().enumerate() {
        let p = softmax_row(&logits.data[i * c..(i + 1) * c]);
        for j in 0..c {
            delta.data[i * c + j] = (p[j] - t[j]) / n;
        }
    }
    let mut grad = w.zeros_like();
    let names = layer_names(cls);
    for (layer, name) in names.iter().enumerate().rev() {
        let a = &acts[layer];
        let wt = w.get(&format!("{name}.weight")).unwrap().clone();
        let (din, dout) = (wt.shape()[0], wt.shape()[1]);
        {
            let gw = grad.get_mut(&format!("{name}.weight")).unwrap().data_mut();
            for k in 0..din {
                for o in 0..dout {
                    gw[k * dout + o] = (0..a.rows).map(|i| a.at(i, k) * delta.at(i, o)).sum();
                }
            }
        }
        {
            let gb = grad.get_mut(&format!("{name}.bias")).unwrap().data_mut();
            for (o, g) in gb.iter_mut().enumerate() {
                *g = (0..delta.rows).map(|i| delta.at(i, o)).sum();
            }
        }
        if layer == 0 {
            break;
        }
        let mut next = vec![0.0; a.rows * din];
        for i in 0..a.rows {
            for k in 0..din {
                let back: f64 = (0..dout)
                    .map(|o| delta.at(i, o) * wt.data()[k * dout + o])
                    .sum();
                next[i * din + k] = back * (1.0 - a.at(i, k).powi(2));
            }
        }
        delta = Mat {
            rows: a.rows,
            cols: din,
            data: next,
        };
    }
    (soft_ce(cls, w, x, targets), grad)
}

pub fn one_hot_rows(labels: &[usize], c: usize) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| (0..c).map(|j| f64::from(u8::from(j == l))).collect())
        .collect()
}

pub fn stack(a: &Mat, b: &Mat) -> Mat {
    if a.rows == 0 {
        return b.clone();
    }
    if b.rows == 0 {
        return a.clone();
    }
    assert_eq!(a.cols, b.cols);
    let mut data = a.data.clone();
    data.extend_from_slice(&b.data);
    Mat {
        rows: a.rows + b.rows,
        cols: a.cols,
        data,
    }
}

/// Central differences, one coordinate at a time.
pub fn central_diff(f: impl Fn(&ParamVector) -> f64, at: &ParamVector, eps: f64) -> ParamVector {
    let flat = at.flatten();
    let mut grad = vec![0.0; flat.len()];
    let mut probe = flat.clone();
    for i in 0..flat.len() {
        probe[i] = flat[i] + eps;
        let up = f(&at.unflatten(&probe).unwrap());
        probe[i] = flat[i] - eps;
        let down = f(&at.unflatten(&probe).unwrap());
        probe[i] = flat[i];
        grad[i] = (up - down) / (2.0 * eps);
    }
    at.unflatten(&grad).unwrap()
}

/// `∂/∂α [∇_w f(α, w) · v]` from four loss values per α coordinate.
pub fn mixed_second_diff(
    f: impl Fn(&ParamVector, &ParamVector) -> f64,
    alpha: &ParamVector,
    w: &ParamVector,
    v: &ParamVector,
    eps_alpha: f64,
    eps_w: f64,
) -> ParamVector {
    let w_up = w.plus_scaled(v, eps_w).unwrap();
    let w_down = w.plus_scaled(v, -eps_w).unwrap();
    let flat = alpha.flatten();
    let mut probe = flat.clone();
    let mut out = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let mut dir = |sign: f64| {
            probe[i] = flat[i] + sign * eps_alpha;
            let a = alpha.unflatten(&probe).unwrap();
            probe[i] = flat[i];
            f(&a, &w_up) - f(&a, &w_down)
        };
        out[i] = (dir(1.0) - dir(-1.0)) / (4.0 * eps_alpha * eps_w);
    }
    alpha.unflatten(&out).unwrap()
}

pub fn cosine(a: &ParamVector, b: &ParamVector) -> f64 {
    let (fa, fb) = (a.flatten(), b.flatten());
    let dot: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
    let na = fa.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = fb.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// `‖a − b‖ / ‖b‖`.
pub fn rel_norm_err(a: &ParamVector, b: &ParamVector) -> f64 {
    let (fa, fb) = (a.flatten(), b.flatten());
    let diff = fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / fb.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `m[noisy][true]`: fraction of examples of each true class that received
/// each noisy label.
pub fn count_matrix(truth: &[usize], noisy: &[usize], c: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; c]; c];
    let mut per_true = vec![0.0; c];
    for (&t, &n) in truth.iter().zip(noisy) {
        m[n][t] += 1.0;
        per_true[t] += 1.0;
    }
    for row in &mut m {
        for (t, v) in row.iter_mut().enumerate() {
            *v /= per_true[t];
        }
    }
    m
}

/// Nearest-centroid accuracy with the generating class centers.
pub fn nearest_centroid_accuracy(
    x_raw: &[Vec<f64>],
    labels: &[usize],
    centers: &[Vec<f64>],
) -> f64 {
    let hits = x_raw
        .iter()
        .zip(labels)
        .filter(|(x, &y)| {
            let d = |c: &Vec<f64>| {
                c.iter()
                    .zip(x.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            };
            let best = (0..centers.len())
                .min_by(|&a, &b| d(&centers[a]).total_cmp(&d(&centers[b])))
                .unwrap();
            best == y
        })
        .count();
    hits as f64 / labels.len() as f64
}
