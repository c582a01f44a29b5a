use nalgebra::DMatrix;

use super::{Linear, NnError, ParamScope, TokenMatrix};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const CONTEXT_NORM_EPS: f64 = 1e-5;

pub fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

/// Softmax along each row.
pub fn row_softmax(m: &DMatrix<f64>) -> DMatrix<f64> {
    col_softmax(&m.transpose()).transpose()
}

/// Softmax along each column.
pub fn col_softmax(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col /= sum;
    }
    out
}

/// Per-token standardization over channels, without affine parameters.
pub fn layer_norm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let c = x.ncols() as f64;
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / c;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.apply(|v| *v = (*v - mean) * inv);
    }
    out
}

/// Per-channel standardization across tokens.
pub fn context_norm(x: &DMatrix<f64>) -> Result<DMatrix<f64>, NnError> {
    let n = x.nrows();
    if n < 2 {
        return Err(NnError::DegenerateNormalization { tokens: n });
    }
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + CONTEXT_NORM_EPS).sqrt();
        col.apply(|v| *v = (*v - mean) * inv);
    }
    Ok(out)
}

/// A stack of shared linear layers with ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(layers: Vec<Linear>) -> Self {
        Self { layers }
    }

    /// Loads `l0`, `l1`, ... until the first missing index.
    pub fn load(scope: &ParamScope<'_>) -> Result<Self, NnError> {
        let mut layers = Vec::new();
        while scope.has_linear(&format!("l{}", layers.len())) {
            layers.push(scope.linear(&format!("l{}", layers.len()))?);
        }
        if layers.is_empty() {
            return Err(NnError::MissingParam(scope.full_name("l0.weight")));
        }
        Ok(Self { layers })
    }

    pub fn forward_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NnError> {
        let mut h = self.layers[0].apply(x)?;
        for layer in &self.layers[1..] {
            h = layer.apply(&relu(&h))?;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &TokenMatrix) -> Result<TokenMatrix, NnError> {
        Ok(TokenMatrix::from_matrix(self.forward_matrix(x.matrix())?))
    }
}

pub fn mlp_forward(x: &TokenMatrix, scope: &ParamScope<'_>) -> Result<TokenMatrix, NnError> {
    Mlp::load(scope)?.forward(x)
}

/// `relu(CN(x)) -> l0 -> relu(CN) -> l1`, plus a shortcut from the input
/// (identity, or the `shortcut` projection when widths differ).
#[derive(Debug, Clone)]
pub struct ContextNormBlock {
    l0: Linear,
    l1: Linear,
    shortcut: Option<Linear>,
}

impl ContextNormBlock {
    pub fn load(scope: &ParamScope<'_>) -> Result<Self, NnError> {
        let l0 = scope.linear("l0")?;
        let l1 = scope.linear("l1")?;
        let shortcut = if scope.has_linear("shortcut") {
            Some(scope.linear("shortcut")?)
        } else {
            None
        };
        if shortcut.is_none() && l0.inputs() != l1.outputs() {
            return Err(NnError::ShapeMismatch {
                layer: scope.full_name("shortcut"),
                detail: format!(
                    "{} -> {} block needs a shortcut projection",
                    l0.inputs(),
                    l1.outputs()
                ),
            });
        }
        Ok(Self { l0, l1, shortcut })
    }

    pub fn forward_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NnError> {
        let h = self.l0.apply(&relu(&context_norm(x)?))?;
        let h = self.l1.apply(&relu(&context_norm(&h)?))?;
        Ok(match &self.shortcut {
            Some(s) => s.apply(x)? + h,
            None => x + h,
        })
    }

    pub fn forward(&self, x: &TokenMatrix) -> Result<TokenMatrix, NnError> {
        Ok(TokenMatrix::from_matrix(self.forward_matrix(x.matrix())?))
    }
}

/// Pre-norm residual feed-forward block: `x + l1(relu(l0(LN(x))))`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    l0: Linear,
    l1: Linear,
}

impl FeedForward {
    pub fn load(scope: &ParamScope<'_>) -> Result<Self, NnError> {
        Ok(Self {
            l0: scope.linear("l0")?,
            l1: scope.linear("l1")?,
        })
    }

    pub fn forward_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NnError> {
        let h = self.l1.apply(&relu(&self.l0.apply(&layer_norm(x))?))?;
        if h.shape() != x.shape() {
            return Err(NnError::ShapeMismatch {
                layer: self.l1.name().to_string(),
                detail: format!(
                    "output width {} differs from input width {}",
                    h.ncols(),
                    x.ncols()
                ),
            });
        }
        Ok(x + h)
    }

    pub fn forward(&self, x: &TokenMatrix) -> Result<TokenMatrix, NnError> {
        Ok(TokenMatrix::from_matrix(self.forward_matrix(x.matrix())?))
    }
}
