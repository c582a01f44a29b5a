//! Visual-spatial fusion in an `M`-token cluster space.
//!
//! Correspondence features are softly pooled into `M` clusters, fused with the
//! visual cues by self attention over the `2M` joint tokens, and broadcast back
//! to the correspondences through a second soft assignment.

use nalgebra::DMatrix;

use crate::nn::{
    col_softmax, row_softmax, ContextNormBlock, Linear, NetConfig, NnError, ParamScope,
    TokenMatrix, TransformerLayer,
};

#[derive(Debug, Clone)]
pub struct VsFusion {
    pool: Linear,
    layer: TransformerLayer,
    r1: ContextNormBlock,
    r2: ContextNormBlock,
    unpool: Linear,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    /// `fs + U * F_vs`, `N x C`.
    pub output: TokenMatrix,
    /// Pooling map `W` (`N x M`, columns sum to 1).
    pub assign: DMatrix<f64>,
    /// Unpooling map `U` (`N x M`, rows sum to 1).
    pub unassign: DMatrix<f64>,
    pub attention_maps: Option<Vec<DMatrix<f64>>>,
    pub fallback_rows: usize,
}

impl VsFusion {
    pub fn load(scope: &ParamScope<'_>, cfg: &NetConfig) -> Result<Self, NnError> {
        Ok(Self {
            pool: scope.linear("pool")?,
            layer: TransformerLayer::load(scope, "attn", "ffn", cfg.heads)?,
            r1: ContextNormBlock::load(&scope.scope("r1"))?,
            r2: ContextNormBlock::load(&scope.scope("r2"))?,
            unpool: scope.linear("unpool")?,
        })
    }

    pub fn forward(
        &self,
        fv: &TokenMatrix,
        fs: &TokenMatrix,
        trace: bool,
    ) -> Result<FusionOutput, NnError> {
        let (fs_proj, assign) = soft_assign_pool(fs, &self.pool)?;
        let (fvs, attention_maps, fallback_rows) = self.fuse_traced(fv, &fs_proj, trace)?;
        let (output, unassign) = soft_assign_unpool(&fvs, fs, &self.unpool)?;
        Ok(FusionOutput {
            output,
            assign,
            unassign,
            attention_maps,
            fallback_rows,
        })
    }

    /// `R1(fv + F'v) + R2(fs_proj + F''s)` where `(F'v, F''s)` split the
    /// transformer output over `concat(fv, fs_proj)`.
    pub fn fuse(&self, fv: &TokenMatrix, fs_proj: &TokenMatrix) -> Result<TokenMatrix, NnError> {
        Ok(self.fuse_traced(fv, fs_proj, false)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn fuse_traced(
        &self,
        fv: &TokenMatrix,
        fs_proj: &TokenMatrix,
        trace: bool,
    ) -> Result<(TokenMatrix, Option<Vec<DMatrix<f64>>>, usize), NnError> {
        if fv.rows() != fs_proj.rows() || fv.cols() != fs_proj.cols() {
            return Err(NnError::Config {
                field: "visual_tokens",
                reason: format!(
                    "visual cues are {}x{} but pooled spatial cues are {}x{}",
                    fv.rows(),
                    fv.cols(),
                    fs_proj.rows(),
                    fs_proj.cols()
                ),
            });
        }
        let m = fv.rows();
        let joint = TokenMatrix::concat_rows(fv, fs_proj)?;
        let att = self.layer.forward(&joint, None, trace)?;
        let (fv_att, fs_att) = att.output.split_rows(m);
        let a = self.r1.forward(&fv.add(&fv_att)?)?;
        let b = self.r2.forward(&fs_proj.add(&fs_att)?)?;
        Ok((a.add(&b)?, att.maps, att.fallback_rows))
    }
}

/// Column-softmax (over correspondences) of per-token cluster scores; returns
/// `Wᵀ fs` and `W`.
pub fn soft_assign_pool(
    fs: &TokenMatrix,
    scores: &Linear,
) -> Result<(TokenMatrix, DMatrix<f64>), NnError> {
    let w = col_softmax(&scores.apply(fs.matrix())?);
    let proj = w.tr_mul(fs.matrix());
    Ok((TokenMatrix::from_matrix(proj), w))
}

/// Row-softmax (over clusters) of scores predicted from `fs`; returns
/// `fs + U fvs` and `U`.
pub fn soft_assign_unpool(
    fvs: &TokenMatrix,
    fs: &TokenMatrix,
    scores: &Linear,
) -> Result<(TokenMatrix, DMatrix<f64>), NnError> {
    let u = row_softmax(&scores.apply(fs.matrix())?);
    if u.ncols() != fvs.rows() {
        return Err(NnError::ShapeMismatch {
            layer: scores.name().to_string(),
            detail: format!(
                "predicts {} clusters for {} joint tokens",
                u.ncols(),
                fvs.rows()
            ),
        });
    }
    let out = TokenMatrix::from_matrix(&u * fvs.matrix()).add(fs)?;
    Ok((out, u))
}
