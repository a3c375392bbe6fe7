//! Parameter containers shared by every model.

use ndarray::Array2;

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Config, parameters and optimiser state of one model.
///
/// `generation` increments on every parameter update. Forward caches record
/// it, and a backward pass against a newer model is refused.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<C> {
    pub config: C,
    pub params: Vec<Array2<f64>>,
    pub adam: AdamState,
    generation: u64,
}

impl<C> ModelState<C> {
    pub fn from_parts(config: C, params: Vec<Array2<f64>>, adam: AdamState) -> Result<Self> {
        if !adam.matches(&params) {
            return Err(Error::Shape("Adam moments do not match parameters".into()));
        }
        Ok(Self {
            config,
            params,
            adam,
            generation: 0,
        })
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn apply_gradients(&mut self, grads: &[Array2<f64>], cfg: &AdamConfig) -> Result<()> {
        adam_step(&mut self.params, grads, &mut self.adam, cfg)?;
        self.generation += 1;
        Ok(())
    }

    pub(crate) fn check_generation(&self, cached: u64) -> Result<()> {
        if cached != self.generation {
            return Err(Error::StaleCache(format!(
                "cache from generation {cached}, model is at {}",
                self.generation
            )));
        }
        Ok(())
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }
}

/// Uniform in `±1/√fan_in`.
pub(crate) fn init_weight(rows: usize, cols: usize, rng: &mut RngStream) -> Array2<f64> {
    let bound = 1.0 / (rows.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.uniform_range(-bound, bound))
}

pub(crate) fn check_finite(what: &str, x: &Array2<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite values in {what}")))
    }
}

pub(crate) fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("dropout must be in [0, 1), got {p}")))
    }
}
