//! Logistic regression head on standardised embeddings.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::loss::{sigmoid, sigmoid_bce};
use super::model::{check_finite, ModelState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub input_dim: usize,
}

/// Parameters are `[w (d × 1), b (1 × 1)]`, both starting at zero.
pub type LogReg = ModelState<LogRegConfig>;

impl ModelState<LogRegConfig> {
    pub fn new(config: LogRegConfig) -> Result<Self> {
        if config.input_dim == 0 {
            return Err(Error::Invalid("logistic regression needs inputs".into()));
        }
        let params = vec![Array2::zeros((config.input_dim, 1)), Array2::zeros((1, 1))];
        let adam = super::adam::AdamState::new(&params);
        Self::from_parts(config, params, adam)
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "logistic regression expects {} features, got {}",
                self.config.input_dim,
                x.ncols()
            )));
        }
        Ok(x.dot(&self.params[0]).column(0).to_owned() + self.params[1][[0, 0]])
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.logits(x)?.iter().map(|&l| sigmoid(l)).collect())
    }

    /// Mean BCE and parameter gradients.
    pub fn loss_and_grads(&self, x: ArrayView2<f64>, y: &[u8]) -> Result<(f64, Vec<Array2<f64>>)> {
        if x.nrows() != y.len() {
            return Err(Error::Shape("features and labels disagree".into()));
        }
        let logits = self.logits(x)?;
        let n = y.len().max(1) as f64;
        let mut loss = 0.0;
        let mut dl = Array2::zeros((y.len(), 1));
        for (i, (&l, &t)) in logits.iter().zip(y).enumerate() {
            let (li, g) = sigmoid_bce(f64::from(t), l);
            loss += li;
            dl[[i, 0]] = g / n;
        }
        let dw = x.t().dot(&dl);
        let db = dl.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok((loss / n, vec![dw, db]))
    }
}

/// Full-batch Adam for `epochs` steps.
pub fn train_logreg(x: ArrayView2<f64>, y: &[u8], epochs: usize, adam: &AdamConfig) -> Result<LogReg> {
    adam.validate()?;
    let mut model = LogReg::new(LogRegConfig {
        input_dim: x.ncols(),
    })?;
    for _ in 0..epochs {
        let (loss, grads) = model.loss_and_grads(x, y)?;
        if !loss.is_finite() {
            return Err(Error::Numeric("logistic regression loss diverged".into()));
        }
        model.apply_gradients(&grads, adam)?;
    }
    for p in &model.params {
        check_finite("logistic regression weights", p)?;
    }
    Ok(model)
}

/// Per-column standardisation fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread get scale 1.
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Invalid("cannot standardise zero rows".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, &m)| {
                let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.nrows() as f64;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Shape("standardiser width mismatch".into()));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_data_is_learned() {
        let x = array![[-2.0, 0.1], [-1.0, -0.3], [1.0, 0.2], [2.0, -0.1]];
        let y = [0, 0, 1, 1];
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let m = train_logreg(x.view(), &y, 200, &cfg).unwrap();
        let p = m.predict_proba(x.view()).unwrap();
        assert!(p[0] < 0.2 && p[1] < 0.5 && p[2] > 0.5 && p[3] > 0.8);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let x = array![[0.3, -1.2, 0.5], [1.1, 0.4, -0.7], [-0.6, 0.9, 0.2]];
        let y = [1, 0, 1];
        let mut m = LogReg::new(LogRegConfig { input_dim: 3 }).unwrap();
        m.params[0] = array![[0.2], [-0.4], [0.1]];
        m.params[1] = array![[0.05]];
        let (_, g) = m.loss_and_grads(x.view(), &y).unwrap();
        let h = 1e-6;
        for p in 0..2 {
            for r in 0..m.params[p].nrows() {
                let mut a = m.clone();
                a.params[p][[r, 0]] += h;
                let mut b = m.clone();
                b.params[p][[r, 0]] -= h;
                let fd = (a.loss_and_grads(x.view(), &y).unwrap().0
                    - b.loss_and_grads(x.view(), &y).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g[p][[r, 0]]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn standardizer_uses_fit_statistics() {
        let train = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(train.view()).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        let t = s.transform(array![[4.0, 7.0]].view()).unwrap();
        assert_eq!(t, array![[2.0, 2.0]]);
    }
}
