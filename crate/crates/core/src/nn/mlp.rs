//! Fully connected classifier on pooled brain-graph vectors.
//!
//! Layers: input → 256 → 128 → 2 logits, ReLU between layers, dropout after
//! each hidden activation while training. The 128-wide activation is the
//! subject embedding. `P(class 1) = sigmoid(l₁ − l₀)`, which equals the
//! softmax probability.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::dropout::dropout_in_place;
use super::loss::{sigmoid, sigmoid_bce};
use super::model::{check_dropout, check_finite, init_weight, ModelState};
use super::sparse::SparseRows;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![256, 128],
            dropout: 0.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Invalid(
                "MLP needs a non-empty input and at least one non-empty hidden layer".into(),
            ));
        }
        check_dropout(self.dropout)
    }

    pub fn embedding_dim(&self) -> usize {
        *self.hidden.last().unwrap_or(&0)
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(2);
        w
    }
}

/// Parameters are `[W₀, b₀, W₁, b₁, …]` with `Wₗ` of shape `in × out` and
/// `bₗ` of shape `1 × out`.
pub type Mlp = ModelState<MlpConfig>;

impl ModelState<MlpConfig> {
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(config.seed).derive("mlp-init", 0);
        let widths = config.widths();
        let mut params = Vec::new();
        for w in widths.windows(2) {
            params.push(init_weight(w[0], w[1], &mut rng));
            params.push(Array2::zeros((1, w[1])));
        }
        let adam = super::adam::AdamState::new(&params);
        Self::from_parts(config, params, adam)
    }

    fn n_layers(&self) -> usize {
        self.params.len() / 2
    }

    /// Probability of class 1 for every row, in evaluation mode.
    pub fn predict_proba(&self, x: &SparseRows) -> Result<Vec<f64>> {
        let out = mlp_forward(self, x, None)?;
        Ok(class1_proba(&out.logits))
    }

    pub fn embed(&self, x: &SparseRows) -> Result<Array2<f64>> {
        Ok(mlp_forward(self, x, None)?.embedding)
    }
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    generation: u64,
    input: SparseRows,
    /// Hidden pre-activations.
    pre: Vec<Array2<f64>>,
    /// Inputs to layers 1.. (post ReLU and dropout).
    acts: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Debug, Clone)]
pub struct MlpOutput {
    pub logits: Array2<f64>,
    /// Last hidden activation, before dropout.
    pub embedding: Array2<f64>,
    pub cache: MlpCache,
}

pub struct MlpGrads {
    pub params: Vec<Array2<f64>>,
    /// `∂loss/∂input`, when requested.
    pub input: Option<Array2<f64>>,
}

/// Runs the network; `dropout_rng = None` means evaluation mode.
pub fn mlp_forward(
    model: &Mlp,
    x: &SparseRows,
    mut dropout_rng: Option<&mut RngStream>,
) -> Result<MlpOutput> {
    if x.ncols() != model.config.input_dim {
        return Err(Error::Shape(format!(
            "MLP expects {} input features, got {}",
            model.config.input_dim,
            x.ncols()
        )));
    }
    let n_layers = model.n_layers();
    let mut pre = Vec::with_capacity(n_layers - 1);
    let mut acts = Vec::with_capacity(n_layers - 1);
    let mut masks = Vec::with_capacity(n_layers - 1);
    let mut embedding = None;
    let mut z = x.matmul(&model.params[0])? + &model.params[1];
    for l in 1..n_layers {
        let mut h = z.mapv(|v| v.max(0.0));
        pre.push(z);
        if l == n_layers - 1 {
            embedding = Some(h.clone());
        }
        let mask = match dropout_rng.as_deref_mut() {
            Some(rng) => dropout_in_place(&mut h, model.config.dropout, rng),
            None => None,
        };
        masks.push(mask);
        z = h.dot(&model.params[2 * l]) + &model.params[2 * l + 1];
        acts.push(h);
    }
    check_finite("MLP logits", &z)?;
    Ok(MlpOutput {
        logits: z,
        embedding: embedding.expect("at least one hidden layer"),
        cache: MlpCache {
            generation: model.generation(),
            input: x.clone(),
            pre,
            acts,
            masks,
        },
    })
}

/// Gradients of the loss given `∂loss/∂logits`.
pub fn mlp_backward(
    model: &Mlp,
    cache: &MlpCache,
    dlogits: &Array2<f64>,
    want_input: bool,
) -> Result<MlpGrads> {
    model.check_generation(cache.generation)?;
    let n_layers = model.n_layers();
    if dlogits.dim() != (cache.input.nrows(), 2) {
        return Err(Error::Shape(format!(
            "logit gradient has shape {:?}, expected ({}, 2)",
            dlogits.dim(),
            cache.input.nrows()
        )));
    }
    let mut grads: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); model.params.len()];
    let mut dz = dlogits.clone();
    for l in (0..n_layers).rev() {
        let db = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
        grads[2 * l + 1] = db;
        if l == 0 {
            grads[0] = cache.input.transpose_matmul(&dz)?;
            let input = if want_input {
                Some(dz.dot(&model.params[0].t()))
            } else {
                None
            };
            return Ok(MlpGrads {
                params: grads,
                input,
            });
        }
        grads[2 * l] = cache.acts[l - 1].t().dot(&dz);
        let mut dh = dz.dot(&model.params[2 * l].t());
        if let Some(mask) = &cache.masks[l - 1] {
            dh *= mask;
        }
        ndarray::Zip::from(&mut dh)
            .and(&cache.pre[l - 1])
            .for_each(|g, &p| {
                if p <= 0.0 {
                    *g = 0.0
                }
            });
        dz = dh;
    }
    unreachable!("loop returns at layer 0")
}

pub fn class1_proba(logits: &Array2<f64>) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .map(|r| sigmoid(r[1] - r[0]))
        .collect()
}

/// Mean BCE over rows and its gradient with respect to the logits.
pub fn softmax_bce(logits: &Array2<f64>, labels: &[u8]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() || logits.ncols() != 2 {
        return Err(Error::Shape("logits and labels disagree".into()));
    }
    let n = labels.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for (i, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let (l, g) = sigmoid_bce(f64::from(y), row[1] - row[0]);
        loss += l;
        grad[[i, 1]] = g / n;
        grad[[i, 0]] = -g / n;
    }
    Ok((loss / n, grad))
}
