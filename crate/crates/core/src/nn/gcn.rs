//! Two-layer graph convolutional classifier over the population graph.
//!
//! Each layer is `relu(Â · drop(H) · W)` without bias, where
//! `Â = D̃^{-1/2}(A + I)D̃^{-1/2}`. A linear output with bias and a sigmoid
//! gives `P(ASD)` per node.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::dropout::dropout_in_place;
use super::loss::{sigmoid, sigmoid_bce};
use super::model::{check_dropout, check_finite, init_weight, ModelState};
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
}

impl GcnConfig {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![64, 64],
            dropout: 0.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Invalid(
                "GCN needs a non-empty input and at least one non-empty layer".into(),
            ));
        }
        check_dropout(self.dropout)
    }
}

/// Parameters are `[W₁, …, W_L, w_out, b_out]`.
pub type Gcn = ModelState<GcnConfig>;

impl ModelState<GcnConfig> {
    pub fn new(config: GcnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(config.seed).derive("gcn-init", 0);
        let mut params = Vec::new();
        let mut fan_in = config.input_dim;
        for &h in &config.hidden {
            params.push(init_weight(fan_in, h, &mut rng));
            fan_in = h;
        }
        params.push(init_weight(fan_in, 1, &mut rng));
        params.push(Array2::zeros((1, 1)));
        let adam = super::adam::AdamState::new(&params);
        Self::from_parts(config, params, adam)
    }

    fn n_conv(&self) -> usize {
        self.params.len() - 2
    }

    /// `P(ASD)` for every node of the graph behind `a_hat`, in evaluation
    /// mode.
    pub fn predict_proba(&self, a_hat: &AdjacencyMatrix, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let out = gcn_forward(self, a_hat, x, None)?;
        Ok(out.logits.iter().map(|&l| sigmoid(l)).collect())
    }
}

/// `relu(Â · H · W)`.
pub fn gcn_layer(
    a_hat: &AdjacencyMatrix,
    h: ArrayView2<f64>,
    w: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_layer_shapes(a_hat, h, w)?;
    Ok(a_hat.matmul(h)?.dot(&w).mapv(|v| v.max(0.0)))
}

/// Gradients `(∂/∂H, ∂/∂W)` of one layer given the output gradient.
pub fn gcn_layer_backward(
    a_hat: &AdjacencyMatrix,
    h: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dout: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_layer_shapes(a_hat, h, w)?;
    let ah = a_hat.matmul(h)?;
    let pre = ah.dot(&w);
    if dout.dim() != pre.dim() {
        return Err(Error::Shape("output gradient has the wrong shape".into()));
    }
    let dpre = relu_mask(&pre, dout.to_owned());
    let dw = ah.t().dot(&dpre);
    let dh = a_hat.transpose_matmul(dpre.dot(&w.t()).view())?;
    Ok((dh, dw))
}

fn check_layer_shapes(a_hat: &AdjacencyMatrix, h: ArrayView2<f64>, w: ArrayView2<f64>) -> Result<()> {
    if h.nrows() != a_hat.n() || h.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "GCN layer: Â is {0}×{0}, H is {1:?}, W is {2:?}",
            a_hat.n(),
            h.dim(),
            w.dim()
        )));
    }
    Ok(())
}

fn relu_mask(pre: &Array2<f64>, mut g: Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut g).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    g
}

#[derive(Debug, Clone)]
pub struct GcnCache {
    generation: u64,
    masks: Vec<Option<Array2<f64>>>,
    /// `Â · drop(H_k)` per layer.
    agg: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    last: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct GcnOutput {
    /// `n × 1` logits.
    pub logits: Array2<f64>,
    pub cache: GcnCache,
}

pub struct GcnGrads {
    pub params: Vec<Array2<f64>>,
    pub input: Array2<f64>,
}

/// Runs the network; `dropout_rng = None` means evaluation mode.
pub fn gcn_forward(
    model: &Gcn,
    a_hat: &AdjacencyMatrix,
    x: ArrayView2<f64>,
    mut dropout_rng: Option<&mut RngStream>,
) -> Result<GcnOutput> {
    if x.ncols() != model.config.input_dim || x.nrows() != a_hat.n() {
        return Err(Error::Shape(format!(
            "GCN expects {} nodes × {} features, got {:?}",
            a_hat.n(),
            model.config.input_dim,
            x.dim()
        )));
    }
    let k = model.n_conv();
    let mut masks = Vec::with_capacity(k);
    let mut agg = Vec::with_capacity(k);
    let mut pre = Vec::with_capacity(k);
    let mut h = x.to_owned();
    for l in 0..k {
        let mask = match dropout_rng.as_deref_mut() {
            Some(rng) => dropout_in_place(&mut h, model.config.dropout, rng),
            None => None,
        };
        let a = a_hat.matmul(h.view())?;
        let z = a.dot(&model.params[l]);
        h = z.mapv(|v| v.max(0.0));
        masks.push(mask);
        agg.push(a);
        pre.push(z);
    }
    let logits = h.dot(&model.params[k]) + &model.params[k + 1];
    check_finite("GCN logits", &logits)?;
    Ok(GcnOutput {
        logits,
        cache: GcnCache {
            generation: model.generation(),
            masks,
            agg,
            pre,
            last: h,
        },
    })
}

pub fn gcn_backward(
    model: &Gcn,
    a_hat: &AdjacencyMatrix,
    cache: &GcnCache,
    dlogits: &Array2<f64>,
) -> Result<GcnGrads> {
    model.check_generation(cache.generation)?;
    let k = model.n_conv();
    if dlogits.dim() != (cache.last.nrows(), 1) {
        return Err(Error::Shape("logit gradient has the wrong shape".into()));
    }
    let mut grads: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); model.params.len()];
    grads[k] = cache.last.t().dot(dlogits);
    grads[k + 1] = dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut dh = dlogits.dot(&model.params[k].t());
    for l in (0..k).rev() {
        let dz = relu_mask(&cache.pre[l], dh);
        grads[l] = cache.agg[l].t().dot(&dz);
        let da = dz.dot(&model.params[l].t());
        dh = a_hat.transpose_matmul(da.view())?;
        if let Some(mask) = &cache.masks[l] {
            dh *= mask;
        }
    }
    Ok(GcnGrads {
        params: grads,
        input: dh,
    })
}

/// Mean BCE over the nodes with `mask[i]`, and its gradient. Other nodes get
/// zero gradient. Returns `None` when no node is masked in.
pub fn masked_bce(
    logits: &Array2<f64>,
    labels: &[u8],
    mask: &[bool],
) -> Result<Option<(f64, Array2<f64>)>> {
    if logits.nrows() != labels.len() || labels.len() != mask.len() {
        return Err(Error::Shape("logits, labels and mask disagree".into()));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok(None);
    }
    let n = count as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for i in 0..labels.len() {
        if mask[i] {
            let (l, g) = sigmoid_bce(f64::from(labels[i]), logits[[i, 0]]);
            loss += l;
            grad[[i, 0]] = g / n;
        }
    }
    Ok(Some((loss / n, grad)))
}
