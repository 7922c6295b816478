use std::sync::Arc;

use curio_diffcore::Tensor;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};

/// A batch of stacked-frame observations in sparse one-hot form.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsBatch {
    pub rows: usize,
    /// Active one-hot positions, `active_per_obs` per row.
    pub active: Arc<Vec<u32>>,
    /// `rows × scalars`.
    pub scalars: Tensor,
    /// Newest frame's class ids, `cells` per row (reconstruction target).
    pub target: Arc<Vec<u8>>,
}

impl ObsBatch {
    pub fn new(cfg: &ModelConfig, active: Vec<u32>, scalars: Vec<f64>, target: Vec<u8>) -> Result<Self> {
        let per = cfg.active_per_obs();
        if per == 0 || active.len() % per != 0 {
            return Err(ModelError::Shape {
                what: "one-hot indices",
                expected: per,
                got: active.len(),
            });
        }
        let rows = active.len() / per;
        if rows == 0 {
            return Err(ModelError::Shape {
                what: "observation rows",
                expected: 1,
                got: 0,
            });
        }
        let dim = cfg.obs_dim() as u32;
        if let Some(&bad) = active.iter().find(|&&i| i >= dim) {
            return Err(ModelError::Shape {
                what: "one-hot index",
                expected: dim as usize,
                got: bad as usize,
            });
        }
        if scalars.len() != rows * cfg.scalars {
            return Err(ModelError::Shape {
                what: "scalar channels",
                expected: rows * cfg.scalars,
                got: scalars.len(),
            });
        }
        if target.len() != rows * cfg.cells {
            return Err(ModelError::Shape {
                what: "target cells",
                expected: rows * cfg.cells,
                got: target.len(),
            });
        }
        if target.iter().any(|&c| c as usize >= cfg.classes) {
            return Err(ModelError::Config("target class id out of range".into()));
        }
        let scalars = Tensor::matrix(rows, cfg.scalars, scalars)?;
        Ok(Self {
            rows,
            active: Arc::new(active),
            scalars,
            target: Arc::new(target),
        })
    }

    /// Concatenates batches row-wise.
    pub fn stack(parts: &[&ObsBatch]) -> Self {
        let rows = parts.iter().map(|p| p.rows).sum();
        let width = parts[0].scalars.cols();
        let mut active = Vec::new();
        let mut scalars = Vec::new();
        let mut target = Vec::new();
        for p in parts {
            active.extend_from_slice(&p.active);
            scalars.extend_from_slice(p.scalars.data());
            target.extend_from_slice(&p.target);
        }
        Self {
            rows,
            active: Arc::new(active),
            scalars: Tensor::new(vec![rows, width], scalars).expect("consistent parts"),
            target: Arc::new(target),
        }
    }
}
