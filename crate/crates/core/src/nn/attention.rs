use nalgebra::DMatrix;

use super::{layer_norm, FeedForward, Linear, NnError, ParamScope, TokenMatrix};

/// Query/key/value/output projections of a multi-head attention layer.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl AttentionParams {
    pub fn load(scope: &ParamScope<'_>, heads: usize) -> Result<Self, NnError> {
        let p = Self {
            q: scope.linear("q")?,
            k: scope.linear("k")?,
            v: scope.linear("v")?,
            o: scope.linear("o")?,
            heads,
        };
        let width = p.q.outputs();
        if heads == 0
            || !width.is_multiple_of(heads)
            || p.k.outputs() != width
            || p.v.outputs() != width
        {
            return Err(NnError::ShapeMismatch {
                layer: scope.full_name("q"),
                detail: format!("projection width {width} incompatible with {heads} heads"),
            });
        }
        Ok(p)
    }

    pub fn heads(&self) -> usize {
        self.heads
    }
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub output: TokenMatrix,
    /// Query rows whose gated weights vanished and fell back to the ungated
    /// distribution, summed over heads.
    pub fallback_rows: usize,
    /// Per-head `queries x keys` attention maps, when requested.
    pub maps: Option<Vec<DMatrix<f64>>>,
}

fn attend(
    qx: &DMatrix<f64>,
    kvx: &DMatrix<f64>,
    p: &AttentionParams,
    gate: Option<&DMatrix<f64>>,
    trace: bool,
) -> Result<AttentionOutput, NnError> {
    let (nq, nk) = (qx.nrows(), kvx.nrows());
    if let Some(g) = gate {
        if g.shape() != (nq, nk) {
            return Err(NnError::ShapeMismatch {
                layer: "attention gate".into(),
                detail: format!("gate is {:?}, expected ({nq}, {nk})", g.shape()),
            });
        }
        if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(NnError::NonFinite(
                "attention gate (entries must be finite and nonnegative)".into(),
            ));
        }
    }
    let q = p.q.apply(qx)?;
    let k = p.k.apply(kvx)?;
    let v = p.v.apply(kvx)?;
    let d = q.ncols() / p.heads;
    let scale = 1.0 / (d as f64).sqrt();
    // Gate laid out like the transposed scores below: keys x queries.
    let gate_t = gate.map(|g| g.transpose());

    let mut messages = DMatrix::zeros(nq, q.ncols());
    let mut fallback_rows = 0;
    let mut maps = trace.then(Vec::new);
    for h in 0..p.heads {
        let qh = q.columns(h * d, d);
        let kh = k.columns(h * d, d);
        let vh = v.columns(h * d, d);
        // Column i holds the logits of query i, so the softmax runs over
        // contiguous memory.
        let mut a = kh * qh.transpose() * scale;
        for mut col in a.column_iter_mut() {
            let max = col.max();
            col.apply(|x| *x = (*x - max).exp());
            let sum = col.sum();
            col /= sum;
        }
        if let Some(gt) = &gate_t {
            for (i, mut col) in a.column_iter_mut().enumerate() {
                let gated = col.component_mul(&gt.column(i));
                let sum = gated.sum();
                if sum > 0.0 && sum.is_finite() {
                    col.copy_from(&(gated / sum));
                } else {
                    fallback_rows += 1;
                }
            }
        }
        messages.columns_mut(h * d, d).copy_from(&a.tr_mul(&vh));
        if let Some(m) = maps.as_mut() {
            m.push(a.transpose());
        }
    }
    Ok(AttentionOutput {
        output: TokenMatrix::from_matrix(p.o.apply(&messages)?),
        fallback_rows,
        maps,
    })
}

/// Multi-head self attention. With a gate `G` (tokens x tokens, nonnegative)
/// each head's softmax map `A` becomes `A ⊙ G` renormalized per row; a row
/// whose gated mass is zero keeps `A`.
pub fn multi_head_self_attention(
    x: &TokenMatrix,
    p: &AttentionParams,
    gate: Option<&DMatrix<f64>>,
    trace: bool,
) -> Result<AttentionOutput, NnError> {
    attend(x.matrix(), x.matrix(), p, gate, trace)
}

/// Queries from `qx`, keys and values from `kvx`.
pub fn cross_attention(
    qx: &TokenMatrix,
    kvx: &TokenMatrix,
    p: &AttentionParams,
    trace: bool,
) -> Result<AttentionOutput, NnError> {
    attend(qx.matrix(), kvx.matrix(), p, None, trace)
}

/// Pre-norm transformer layer: `x + MHSA(LN(x))` followed by a feed-forward
/// block.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    attn: AttentionParams,
    ffn: FeedForward,
}

impl TransformerLayer {
    /// Loads `{attn_name}.{q,k,v,o}` and `{ffn_name}.{l0,l1}` from `scope`.
    pub fn load(
        scope: &ParamScope<'_>,
        attn_name: &str,
        ffn_name: &str,
        heads: usize,
    ) -> Result<Self, NnError> {
        Ok(Self {
            attn: AttentionParams::load(&scope.scope(attn_name), heads)?,
            ffn: FeedForward::load(&scope.scope(ffn_name))?,
        })
    }

    pub fn forward(
        &self,
        x: &TokenMatrix,
        gate: Option<&DMatrix<f64>>,
        trace: bool,
    ) -> Result<AttentionOutput, NnError> {
        let normed = TokenMatrix::from_matrix(layer_norm(x.matrix()));
        let att = multi_head_self_attention(&normed, &self.attn, gate, trace)?;
        let h = x.add(&att.output)?;
        Ok(AttentionOutput {
            output: self.ffn.forward(&h)?,
            ..att
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::test_support::*;
    use crate::nn::ParamStoreBuilder;

    fn random_attention(c: usize, heads: usize, seed: u64) -> AttentionParams {
        let mut b = ParamStoreBuilder::new(0);
        for (i, n) in ["q", "k", "v", "o"].iter().enumerate() {
            b.linear(
                &format!("a.{n}"),
                &rows_ref(&random_weights(c, c, seed * 7 + i as u64)),
                None,
            )
            .unwrap();
        }
        AttentionParams::load(&b.build().root().scope("a"), heads).unwrap()
    }

    fn identity_attention(c: usize) -> AttentionParams {
        let eye: Vec<Vec<f64>> = (0..c)
            .map(|i| (0..c).map(|j| f64::from(i == j)).collect())
            .collect();
        let mut b = ParamStoreBuilder::new(0);
        for n in ["q", "k", "v", "o"] {
            b.linear(&format!("a.{n}"), &rows_ref(&eye), None).unwrap();
        }
        AttentionParams::load(&b.build().root().scope("a"), 1).unwrap()
    }

    fn random_gate(n: usize, seed: u64) -> DMatrix<f64> {
        let w = random_weights(n, n, seed);
        DMatrix::from_fn(n, n, |i, j| w[i][j] + 0.5)
    }

    fn assert_row_stochastic(maps: &[DMatrix<f64>]) {
        for m in maps {
            for row in m.row_iter() {
                assert!((row.sum() - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn two_token_single_head_by_hand() {
        // Identity projections: logits are x_i·x_j / sqrt(2).
        let x = TokenMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        let out = multi_head_self_attention(&x, &identity_attention(2), None, true).unwrap();
        let s = 2f64.sqrt();
        let a00 = 1.0 / (1.0 + (-1.0 / s).exp());
        let a11 = 1.0 / (1.0 + (-4.0 / s).exp());
        let want = [a00, 2.0 * (1.0 - a00), 1.0 - a11, 2.0 * a11];
        for (i, w) in want.iter().enumerate() {
            assert!((out.output.get(i / 2, i % 2) - w).abs() < 1e-14);
        }
        let map = &out.maps.unwrap()[0];
        assert!((map[(0, 0)] - a00).abs() < 1e-15);
    }

    #[test]
    fn gated_two_token_by_hand() {
        let x = TokenMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        let gate = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 1.0]);
        let out = multi_head_self_attention(&x, &identity_attention(2), Some(&gate), true).unwrap();
        let s = 2f64.sqrt();
        let a00 = 1.0 / (1.0 + (-1.0 / s).exp());
        let g00 = a00 / (a00 + 0.25 * (1.0 - a00));
        assert!((out.output.get(0, 0) - g00).abs() < 1e-14);
        assert!((out.output.get(0, 1) - 2.0 * (1.0 - g00)).abs() < 1e-14);
        assert_eq!(out.fallback_rows, 0);
    }

    #[test]
    fn all_ones_gate_is_neutral() {
        let p = random_attention(8, 2, 3);
        let x = random_tokens(11, 8, 3);
        let plain = multi_head_self_attention(&x, &p, None, false).unwrap();
        let gated =
            multi_head_self_attention(&x, &p, Some(&DMatrix::from_element(11, 11, 1.0)), false)
                .unwrap();
        assert!(plain.output.max_abs_diff(&gated.output) < 1e-10);
    }

    #[test]
    fn zero_gate_row_falls_back() {
        let p = random_attention(4, 2, 1);
        let x = random_tokens(5, 4, 1);
        let mut gate = random_gate(5, 2);
        gate.row_mut(3).fill(0.0);
        let out = multi_head_self_attention(&x, &p, Some(&gate), true).unwrap();
        assert_eq!(out.fallback_rows, 2);
        assert_row_stochastic(out.maps.as_ref().unwrap());
        let plain = multi_head_self_attention(&x, &p, None, false).unwrap();
        assert!(
            (out.output
                .row_vec(3)
                .iter()
                .zip(plain.output.row_vec(3))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max))
                < 1e-12
        );
    }

    #[test]
    fn attention_rows_are_stochastic() {
        for seed in 0..20 {
            let p = random_attention(8, 4, seed);
            let x = random_tokens(9, 8, seed);
            let y = random_tokens(4, 8, seed + 100);
            let gate = random_gate(9, seed);
            for out in [
                multi_head_self_attention(&x, &p, None, true).unwrap(),
                multi_head_self_attention(&x, &p, Some(&gate), true).unwrap(),
                cross_attention(&x, &y, &p, true).unwrap(),
            ] {
                assert_eq!(out.maps.as_ref().unwrap().len(), 4);
                assert_row_stochastic(out.maps.as_ref().unwrap());
            }
        }
    }

    #[test]
    fn self_attention_equivariance() {
        for seed in 0..10 {
            let p = random_attention(8, 2, seed);
            let x = random_tokens(13, 8, seed);
            let gate = random_gate(13, seed);
            let perm = random_perm(13, seed);
            let gp = gate.select_rows(&perm).select_columns(&perm);
            let a =
                multi_head_self_attention(&x.permute_rows(&perm), &p, Some(&gp), false).unwrap();
            let b = multi_head_self_attention(&x, &p, Some(&gate), false).unwrap();
            assert!(a.output.max_abs_diff(&b.output.permute_rows(&perm)) < 1e-10);
        }
    }

    #[test]
    fn cross_attention_single_key_and_key_permutation() {
        let p = random_attention(6, 2, 5);
        let q = random_tokens(7, 6, 5);
        let kv = random_tokens(1, 6, 6);
        let out = cross_attention(&q, &kv, &p, false).unwrap();
        // With one key the output is o(v(kv)) for every query.
        let v = p.o.apply(&p.v.apply(kv.matrix()).unwrap()).unwrap();
        for i in 0..7 {
            for j in 0..6 {
                assert!((out.output.get(i, j) - v[(0, j)]).abs() < 1e-12);
            }
        }
        let kv = random_tokens(9, 6, 7);
        let perm = random_perm(9, 7);
        let a = cross_attention(&q, &kv, &p, false).unwrap();
        let b = cross_attention(&q, &kv.permute_rows(&perm), &p, false).unwrap();
        assert!(a.output.max_abs_diff(&b.output) < 1e-10);
    }

    #[test]
    fn cross_attention_two_by_two_by_hand() {
        let q = TokenMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.0]).unwrap();
        let kv = TokenMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]).unwrap();
        let out = cross_attention(&q, &kv, &identity_attention(2), false).unwrap();
        let s = 2f64.sqrt();
        for (i, qi) in [[1.0, 1.0], [-1.0, 0.0]].iter().enumerate() {
            let l0 = qi[0] / s;
            let l1 = 3.0 * qi[1] / s;
            let w0 = 1.0 / (1.0 + (l1 - l0).exp());
            assert!((out.output.get(i, 0) - w0).abs() < 1e-14);
            assert!((out.output.get(i, 1) - 3.0 * (1.0 - w0)).abs() < 1e-14);
        }
    }

    #[test]
    fn gate_shape_checked() {
        let p = random_attention(4, 1, 0);
        let x = random_tokens(3, 4, 0);
        assert!(multi_head_self_attention(&x, &p, Some(&DMatrix::zeros(2, 3)), false).is_err());
        assert!(
            multi_head_self_attention(&x, &p, Some(&DMatrix::from_element(3, 3, -1.0)), false)
                .is_err()
        );
    }
}
