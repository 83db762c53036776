//! Named parameter tensors and the Adam optimizer.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamStore {
    pub(crate) names: Vec<String>,
    pub(crate) values: Vec<Mat>,
    pub(crate) trainable: Vec<bool>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub(crate) fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            trainable: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub(crate) fn add(&mut self, name: &str, value: Mat, trainable: bool) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.names.len());
        self.names.push(name.to_string());
        self.values.push(value);
        self.trainable.push(trainable);
        self.names.len() - 1
    }

    pub(crate) fn normal(&mut self, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize, std: f64) -> usize {
        let m = Mat::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal) * std);
        self.add(name, m, true)
    }

    pub(crate) fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.add(name, Mat::zeros((rows, cols)), true)
    }

    pub(crate) fn ones(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.add(name, Mat::ones((rows, cols)), true)
    }

    pub(crate) fn id(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub(crate) fn get(&self, name: &str) -> &Mat {
        &self.values[self.id(name)]
    }

    pub(crate) fn len(&self) -> usize {
        self.names.len()
    }

    pub(crate) fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.len()).sum()
    }

    /// Puts every parameter on the tape; `vars[id]` is the leaf for `id`.
    pub(crate) fn load(&self, tape: &mut Tape) -> Vec<Var> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if self.trainable[i] {
                    tape.param(i, m.clone())
                } else {
                    tape.input(m.clone())
                }
            })
            .collect()
    }
}

/// Sums `(id, grad)` pairs per parameter.
pub(crate) fn collect_grads(store: &ParamStore, pairs: Vec<(usize, Mat)>) -> Vec<Option<Mat>> {
    let mut grads: Vec<Option<Mat>> = (0..store.len()).map(|_| None).collect();
    for (id, g) in pairs {
        match &mut grads[id] {
            Some(existing) => *existing += &g,
            slot => *slot = Some(g),
        }
    }
    grads
}

#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    clip: f64,
    t: i32,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub(crate) fn new(store: &ParamStore, lr: f64, clip: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip,
            t: 0,
            m: store.values.iter().map(|p| Mat::zeros(p.dim())).collect(),
            v: store.values.iter().map(|p| Mat::zeros(p.dim())).collect(),
        }
    }

    /// One update with global-norm clipping; returns the pre-clip norm.
    pub(crate) fn step(&mut self, store: &mut ParamStore, grads: &[Option<Mat>]) -> f64 {
        let norm = grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let scale = if self.clip > 0.0 && norm > self.clip { self.clip / norm } else { 1.0 };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            if !store.trainable[i] {
                continue;
            }
            let (m, v, p) = (&mut self.m[i], &mut self.v[i], &mut store.values[i]);
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                let g = g * scale;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        }
        norm
    }
}
