//! Local context from a k-NN graph in feature space, global context from
//! attention gated by pairwise length consistency.

use nalgebra::{DMatrix, DVector};

use crate::geometry::CorrespondenceSet;
use crate::nn::{
    ContextNormBlock, Linear, Mlp, NetConfig, NnError, ParamScope, TokenMatrix, TransformerLayer,
};

/// Neighbor lists and edge features. Edge `(i, j)` lives in row `i * k + j`
/// of `edges` and holds `concat(f_i, f_i - f_{n_ij})`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub nodes: usize,
    pub k: usize,
    /// `nodes * k` neighbor indices, row-major, nearest first.
    pub neighbors: Vec<usize>,
    pub edges: TokenMatrix,
}

impl KnnGraph {
    pub fn neighbors_of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    fn with_edges(&self, edges: TokenMatrix) -> Self {
        Self {
            nodes: self.nodes,
            k: self.k,
            neighbors: self.neighbors.clone(),
            edges,
        }
    }
}

/// Squared Euclidean distance between rows `i` and `j` of a row-major buffer.
fn sq_dist(data: &[f64], c: usize, i: usize, j: usize) -> f64 {
    data[i * c..(i + 1) * c]
        .iter()
        .zip(&data[j * c..(j + 1) * c])
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// The `k` nearest other tokens of every token (ties to the lower index).
pub fn build_knn_graph(f: &TokenMatrix, k: usize) -> Result<KnnGraph, NnError> {
    let (n, c) = (f.rows(), f.cols());
    if k == 0 || k >= n {
        return Err(NnError::Config {
            field: "knn",
            reason: format!("k = {k} needs 1 <= k < {n} tokens"),
        });
    }
    let data: Vec<f64> = f.matrix().transpose().as_slice().to_vec();
    let mut neighbors = Vec::with_capacity(n * k);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        cand.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&data, c, i, j), j)),
        );
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, cmp);
        }
        let top = &mut cand[..k];
        top.sort_unstable_by(cmp);
        neighbors.extend(top.iter().map(|&(_, j)| j));
    }
    let m = f.matrix();
    let edges = DMatrix::from_fn(n * k, 2 * c, |r, ch| {
        let i = r / k;
        if ch < c {
            m[(i, ch)]
        } else {
            m[(i, ch - c)] - m[(neighbors[r], ch - c)]
        }
    });
    Ok(KnnGraph {
        nodes: n,
        k,
        neighbors,
        edges: TokenMatrix::from_matrix(edges),
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// PointCN embedding followed by channel, spatial and neighborhood
/// squeeze-excitation gates.
///
/// The channel and spatial gates rescale by `2 sigmoid(z)`, i.e.
/// `x + x tanh(z / 2)`, so zero logits leave features unchanged. The
/// neighborhood gate produces `G' sigmoid(A2) + G_in`.
#[derive(Debug, Clone)]
pub struct GraphAttentionBlock {
    pointcn: ContextNormBlock,
    channel: Mlp,
    spatial: Mlp,
    neighbor: Mlp,
}

impl GraphAttentionBlock {
    pub fn load(scope: &ParamScope<'_>) -> Result<Self, NnError> {
        Ok(Self {
            pointcn: ContextNormBlock::load(&scope.scope("pointcn"))?,
            channel: Mlp::load(&scope.scope("channel"))?,
            spatial: Mlp::load(&scope.scope("spatial"))?,
            neighbor: Mlp::load(&scope.scope("neighbor"))?,
        })
    }

    pub fn forward(&self, g: &KnnGraph) -> Result<KnnGraph, NnError> {
        let (n, k) = (g.nodes, g.k);
        let g_in = g.edges.matrix();
        let mut x = self.pointcn.forward_matrix(g_in)?;

        // Channel gate: squeeze over all edges.
        let width = x.ncols();
        let avg = DMatrix::from_fn(1, width, |_, j| x.column(j).mean());
        let max = DMatrix::from_fn(1, width, |_, j| x.column(j).max());
        let z = self.channel.forward_matrix(&avg)? + self.channel.forward_matrix(&max)?;
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col *= 2.0 * sigmoid(z[(0, j)]);
        }

        // Spatial gate: squeeze each node's k x width block to (avg, max).
        let pooled = DMatrix::from_fn(n, 2, |i, s| {
            let block = x.view((i * k, 0), (k, width));
            if s == 0 {
                block.mean()
            } else {
                block.max()
            }
        });
        let z = self.spatial.forward_matrix(&pooled)?;
        if z.ncols() != 1 {
            return Err(NnError::ShapeMismatch {
                layer: "spatial gate".into(),
                detail: format!("must produce one logit per node, got {}", z.ncols()),
            });
        }
        for i in 0..n {
            let s = 2.0 * sigmoid(z[(i, 0)]);
            x.view_mut((i * k, 0), (k, width)).scale_mut(s);
        }

        // Neighborhood gate: per-edge avg + max over channels, excited along k.
        let mut row_max = DVector::from_element(n * k, f64::NEG_INFINITY);
        for col in x.column_iter() {
            row_max.zip_apply(&col, |m, v| *m = m.max(v));
        }
        let a1_flat = x.column_mean() + row_max;
        let a1 = DMatrix::from_row_slice(n, k, a1_flat.as_slice());
        let a2 = self.neighbor.forward_matrix(&a1)?.map(sigmoid);
        if a2.ncols() != k {
            return Err(NnError::ShapeMismatch {
                layer: "neighbor gate".into(),
                detail: format!("maps {k} neighbors to {}", a2.ncols()),
            });
        }
        for j in 0..width {
            let mut col = x.column_mut(j);
            for r in 0..n * k {
                col[r] = col[r] * a2[(r / k, r % k)] + g_in[(r, j)];
            }
        }
        Ok(g.with_edges(TokenMatrix::from_matrix(x)))
    }
}

/// Shared map on every edge, then the maximum over each node's neighbors.
pub fn aggregate_neighborhood(g: &KnnGraph, mlp: &Mlp) -> Result<TokenMatrix, NnError> {
    let e = mlp.forward_matrix(g.edges.matrix())?;
    let k = g.k;
    Ok(TokenMatrix::from_matrix(DMatrix::from_fn(
        g.nodes,
        e.ncols(),
        |i, j| e.view((i * k, j), (k, 1)).max(),
    )))
}

/// Pairwise length disagreement `m_ij = | |pA_i - pA_j| - |pB_i - pB_j| |`.
pub fn length_difference_matrix(ic: &CorrespondenceSet) -> DMatrix<f64> {
    let items = ic.items();
    let n = items.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let b = &items[j];
        for i in j + 1..n {
            let a = &items[i];
            let la = ((a.xa - b.xa).powi(2) + (a.ya - b.ya).powi(2)).sqrt();
            let lb = ((a.xb - b.xb).powi(2) + (a.yb - b.yb).powi(2)).sqrt();
            let d = (la - lb).abs();
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    m
}

pub const LENGTH_SCALE_FLOOR: f64 = 1e-9;

/// `exp(-m / sigma)` with `sigma` the mean off-diagonal `m` (floored), unit
/// diagonal. Entries stay in `(0, 1]`.
pub fn length_similarity_matrix(ic: &CorrespondenceSet) -> DMatrix<f64> {
    let m = length_difference_matrix(ic);
    let n = m.nrows();
    let off = (n * n).saturating_sub(n);
    let sigma = if off == 0 {
        LENGTH_SCALE_FLOOR
    } else {
        (m.sum() / off as f64).max(LENGTH_SCALE_FLOOR)
    };
    let mut s = m.map(|v| (-v / sigma).exp().max(f64::MIN_POSITIVE));
    s.fill_diagonal(1.0);
    s
}

/// Self attention gated by `mls`, then a feed-forward block.
pub fn global_context(
    f: &TokenMatrix,
    mls: &DMatrix<f64>,
    layer: &TransformerLayer,
    trace: bool,
) -> Result<crate::nn::AttentionOutput, NnError> {
    layer.forward(f, Some(mls), trace)
}

#[derive(Debug, Clone)]
pub struct ContextFormer {
    gab: GraphAttentionBlock,
    aggregate: Mlp,
    global: TransformerLayer,
    compress: Linear,
    k: usize,
}

#[derive(Debug, Clone)]
pub struct ContextOutput {
    pub output: TokenMatrix,
    pub graph: KnnGraph,
    pub fallback_rows: usize,
    pub attention_maps: Option<Vec<DMatrix<f64>>>,
}

impl ContextFormer {
    pub fn load(scope: &ParamScope<'_>, cfg: &NetConfig, k: usize) -> Result<Self, NnError> {
        Ok(Self {
            gab: GraphAttentionBlock::load(&scope.scope("gab"))?,
            aggregate: Mlp::load(&scope.scope("aggregate"))?,
            global: TransformerLayer::load(&scope.scope("global"), "attn", "ffn", cfg.heads)?,
            compress: scope.linear("compress")?,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Local graph context, gated global context, then `compress(concat(global, f))`.
    pub fn forward(
        &self,
        f: &TokenMatrix,
        ic: &CorrespondenceSet,
        trace: bool,
    ) -> Result<ContextOutput, NnError> {
        if ic.len() != f.rows() {
            return Err(NnError::Shape(format!(
                "{} correspondences for {} feature tokens",
                ic.len(),
                f.rows()
            )));
        }
        let graph = build_knn_graph(f, self.k)?;
        let enhanced = self.gab.forward(&graph)?;
        let local = aggregate_neighborhood(&enhanced, &self.aggregate)?;
        let mls = length_similarity_matrix(ic);
        let global = global_context(&local, &mls, &self.global, trace)?;
        let joint = TokenMatrix::concat_cols(&global.output, f)?;
        let output = TokenMatrix::from_matrix(self.compress.apply(joint.matrix())?);
        Ok(ContextOutput {
            output,
            graph,
            fallback_rows: global.fallback_rows,
            attention_maps: global.maps,
        })
    }
}

pub fn contextformer_forward(
    f: &TokenMatrix,
    ic: &CorrespondenceSet,
    stage: &ContextFormer,
) -> Result<TokenMatrix, NnError> {
    Ok(stage.forward(f, ic, false)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Correspondence;
    use crate::nn::{init_params, ParamStore, ParamStoreBuilder};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tokens(rows: usize, cols: usize, seed: u64) -> TokenMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TokenMatrix::new(DMatrix::from_fn(rows, cols, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap()
    }

    fn perm(n: usize, seed: u64) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        p
    }

    fn random_set(n: usize, seed: u64) -> CorrespondenceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CorrespondenceSet::new(
            (0..n)
                .map(|_| {
                    Correspondence::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn toy() -> (NetConfig, ParamStore) {
        let cfg = NetConfig::toy();
        let store = init_params(&cfg, 31).unwrap();
        (cfg, store)
    }

    /// Inverse of a permutation in the `out[i] = in[perm[i]]` convention.
    fn inverse(p: &[usize]) -> Vec<usize> {
        let mut inv = vec![0; p.len()];
        for (i, &j) in p.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }

    #[test]
    fn one_dimensional_neighbors() {
        let f = TokenMatrix::from_row_slice(3, 1, &[0.0, 1.0, 10.0]).unwrap();
        let g = build_knn_graph(&f, 1).unwrap();
        assert_eq!(g.neighbors, vec![1, 0, 1]);
        assert_eq!(g.edges.row_vec(0), vec![0.0, -1.0]);
        assert!(matches!(
            build_knn_graph(&f, 3),
            Err(NnError::Config { .. })
        ));
    }

    #[test]
    fn ties_go_to_lower_index_and_identical_neighbor_edges_vanish() {
        let f = TokenMatrix::from_row_slice(4, 1, &[0.0, 1.0, -1.0, 0.0]).unwrap();
        let g = build_knn_graph(&f, 2).unwrap();
        assert_eq!(g.neighbors_of(0), &[3, 1]);
        assert_eq!(g.edges.get(0, 1), 0.0);
        assert_eq!(g.neighbors_of(3), &[0, 1]);
    }

    #[test]
    fn knn_matches_exhaustive_sort() {
        for seed in 0..3 {
            let f = tokens(500, 6, seed);
            let g = build_knn_graph(&f, 9).unwrap();
            let m = f.matrix();
            for i in 0..500 {
                let mut all: Vec<(f64, usize)> = (0..500)
                    .filter(|&j| j != i)
                    .map(|j| ((m.row(i) - m.row(j)).norm_squared(), j))
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let want: Vec<usize> = all[..9].iter().map(|p| p.1).collect();
                assert_eq!(g.neighbors_of(i), want.as_slice());
                let d: Vec<f64> = g
                    .neighbors_of(i)
                    .iter()
                    .map(|&j| (m.row(i) - m.row(j)).norm())
                    .collect();
                assert!(d.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    fn zero_gab(c2: usize, k: usize) -> ParamStore {
        let mut b = ParamStoreBuilder::new(0);
        let z = |b: &mut ParamStoreBuilder, name: &str, i: usize, o: usize| {
            b.insert(&format!("{name}.weight"), &[i, o], vec![0.0; i * o])
                .unwrap();
            b.insert(&format!("{name}.bias"), &[o], vec![0.0; o])
                .unwrap();
        };
        // PointCN with a non-trivial first layer so G' differs from G_in.
        b.insert(
            "g.pointcn.l0.weight",
            &[c2, c2],
            (0..c2 * c2).map(|v| (v % 5) as f64 * 0.1).collect(),
        )
        .unwrap();
        b.insert("g.pointcn.l0.bias", &[c2], vec![0.0; c2]).unwrap();
        b.insert(
            "g.pointcn.l1.weight",
            &[c2, c2],
            (0..c2 * c2).map(|v| (v % 3) as f64 * 0.2 - 0.2).collect(),
        )
        .unwrap();
        b.insert("g.pointcn.l1.bias", &[c2], vec![0.1; c2]).unwrap();
        z(&mut b, "g.channel.l0", c2, 2);
        z(&mut b, "g.channel.l1", 2, c2);
        z(&mut b, "g.spatial.l0", 2, 8);
        z(&mut b, "g.spatial.l1", 8, 1);
        z(&mut b, "g.neighbor.l0", k, k);
        z(&mut b, "g.neighbor.l1", k, k);
        b.build()
    }

    #[test]
    fn zero_logit_gates_give_half_embedding_plus_input() {
        let store = zero_gab(6, 3);
        let gab = GraphAttentionBlock::load(&store.root().scope("g")).unwrap();
        let f = tokens(10, 3, 2);
        let g = build_knn_graph(&f, 3).unwrap();
        let out = gab.forward(&g).unwrap();
        let pointcn = ContextNormBlock::load(&store.root().scope("g.pointcn")).unwrap();
        let embedded = pointcn.forward(&g.edges).unwrap();
        let want = embedded.scale(0.5).add(&g.edges).unwrap();
        assert!(out.edges.max_abs_diff(&want) < 1e-14);
        assert_eq!(out.neighbors, g.neighbors);
    }

    #[test]
    fn graph_block_node_equivariance() {
        let (cfg, store) = toy();
        let gab = GraphAttentionBlock::load(&store.root().scope("iter0.ctx.gab")).unwrap();
        for seed in 0..5 {
            let f = tokens(40, cfg.channels, seed);
            let p = perm(40, seed);
            let a = gab
                .forward(&build_knn_graph(&f.permute_rows(&p), cfg.knn[0]).unwrap())
                .unwrap();
            let b = gab
                .forward(&build_knn_graph(&f, cfg.knn[0]).unwrap())
                .unwrap();
            assert_eq!(
                (a.edges.rows(), a.edges.cols()),
                (40 * cfg.knn[0], 2 * cfg.channels)
            );
            let k = cfg.knn[0];
            let rows: Vec<usize> = (0..40 * k).map(|r| p[r / k] * k + r % k).collect();
            assert!(a.edges.max_abs_diff(&b.edges.select_rows(&rows)) < 1e-10);
            let inv = inverse(&p);
            for i in 0..40 {
                let mapped: Vec<usize> = a.neighbors_of(i).iter().map(|&j| p[j]).collect();
                assert_eq!(mapped.as_slice(), b.neighbors_of(p[i]));
                assert_eq!(inv[p[i]], i);
            }
        }
    }

    #[test]
    fn aggregation_cases() {
        // Selects the difference half of each edge.
        let mut b = ParamStoreBuilder::new(0);
        b.linear(
            "a.l0",
            &[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]],
            None,
        )
        .unwrap();
        let store = b.build();
        let mlp = Mlp::load(&store.root().scope("a")).unwrap();
        let f = TokenMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, -2.0, -3.0, 0.5]).unwrap();
        let g = build_knn_graph(&f, 2).unwrap();
        let agg = aggregate_neighborhood(&g, &mlp).unwrap();
        // Node 0's edges: 0 - f1 = (-1, 2), 0 - f2 = (3, -0.5).
        assert_eq!(agg.row_vec(0), vec![3.0, 2.0]);

        let g1 = build_knn_graph(&f, 1).unwrap();
        let agg1 = aggregate_neighborhood(&g1, &mlp).unwrap();
        let direct = mlp.forward(&g1.edges).unwrap();
        assert_eq!(agg1, direct);

        // Reordering one node's neighbor slots does not matter.
        let mut swapped = g.clone();
        let mut e = swapped.edges.clone().into_matrix();
        e.swap_rows(0, 1);
        swapped.edges = TokenMatrix::new(e).unwrap();
        swapped.neighbors.swap(0, 1);
        assert_eq!(aggregate_neighborhood(&swapped, &mlp).unwrap(), agg);
    }

    #[test]
    fn length_similarity_properties() {
        let ic = CorrespondenceSet::new(vec![
            Correspondence::new(0.0, 0.0, 0.0, 0.0),
            Correspondence::new(3.0, 4.0, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(length_difference_matrix(&ic)[(0, 1)], 5.0);

        let ic = random_set(30, 4);
        let s = length_similarity_matrix(&ic);
        for i in 0..30 {
            assert_eq!(s[(i, i)], 1.0);
            for j in 0..30 {
                assert_eq!(s[(i, j)], s[(j, i)]);
                assert!(s[(i, j)] > 0.0 && s[(i, j)] <= 1.0);
            }
        }
    }

    #[test]
    fn rigid_translation_of_view_b_keeps_lengths() {
        let ic = random_set(20, 5);
        let shifted = CorrespondenceSet::new(
            ic.items()
                .iter()
                .map(|c| Correspondence::new(c.xa, c.ya, c.xb + 0.37, c.yb - 0.81))
                .collect(),
        )
        .unwrap();
        let d = (length_difference_matrix(&ic) - length_difference_matrix(&shifted)).amax();
        assert!(d < 1e-12);
    }

    #[test]
    fn global_context_gate_cases() {
        let (cfg, store) = toy();
        let layer = TransformerLayer::load(
            &store.root().scope("iter0.ctx.global"),
            "attn",
            "ffn",
            cfg.heads,
        )
        .unwrap();
        let f = tokens(12, cfg.channels, 7);
        let ones = DMatrix::from_element(12, 12, 1.0);
        let gated = global_context(&f, &ones, &layer, false).unwrap();
        let plain = layer.forward(&f, None, false).unwrap();
        assert!(gated.output.max_abs_diff(&plain.output) < 1e-10);

        let ic = random_set(12, 8);
        let mls = length_similarity_matrix(&ic);
        let p = perm(12, 8);
        let a = global_context(
            &f.permute_rows(&p),
            &mls.select_rows(&p).select_columns(&p),
            &layer,
            false,
        )
        .unwrap();
        let b = global_context(&f, &mls, &layer, false).unwrap();
        assert!(a.output.max_abs_diff(&b.output.permute_rows(&p)) < 1e-10);
    }

    #[test]
    fn global_context_two_token_hand_case() {
        // Width 2, one head, identity q/k/v/o, zero FFN.
        let mut b = ParamStoreBuilder::new(0);
        for n in ["q", "k", "v", "o"] {
            b.linear(&format!("g.attn.{n}"), &[&[1.0, 0.0], &[0.0, 1.0]], None)
                .unwrap();
        }
        b.linear("g.ffn.l0", &[&[0.0], &[0.0]], Some(&[0.0]))
            .unwrap();
        b.linear("g.ffn.l1", &[&[0.0, 0.0]], Some(&[0.0, 0.0]))
            .unwrap();
        let store = b.build();
        let layer = TransformerLayer::load(&store.root().scope("g"), "attn", "ffn", 1).unwrap();
        let f = TokenMatrix::from_row_slice(2, 2, &[1.0, -1.0, -2.0, 2.0]).unwrap();
        let gate = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let out = global_context(&f, &gate, &layer, false).unwrap().output;

        // Layer norm gives u0 = s0 (1, -1) and u1 = s1 (-1, 1).
        let eps = crate::nn::LAYER_NORM_EPS;
        let s0 = 1.0 / (1.0 + eps).sqrt();
        let s1 = 2.0 / (4.0 + eps).sqrt();
        let r2 = 2f64.sqrt();
        let gated = |l_self: f64, l_other: f64| {
            let a = 1.0 / (1.0 + (l_other - l_self).exp());
            a / (a + 0.5 * (1.0 - a))
        };
        let g0 = gated(2.0 * s0 * s0 / r2, -2.0 * s0 * s1 / r2);
        let g1 = gated(2.0 * s1 * s1 / r2, -2.0 * s0 * s1 / r2);
        let m0 = g0 * s0 - (1.0 - g0) * s1;
        let m1 = (1.0 - g1) * s0 - g1 * s1;
        assert!((out.get(0, 0) - (1.0 + m0)).abs() < 1e-14);
        assert!((out.get(0, 1) - (-1.0 - m0)).abs() < 1e-14);
        assert!((out.get(1, 0) - (-2.0 + m1)).abs() < 1e-14);
        assert!((out.get(1, 1) - (2.0 - m1)).abs() < 1e-14);
    }

    #[test]
    fn stage_equivariance_shape_and_sensitivity() {
        let (cfg, store) = toy();
        let stage =
            ContextFormer::load(&store.root().scope("iter0.ctx"), &cfg, cfg.knn[0]).unwrap();
        for seed in 0..5 {
            let f = tokens(30, cfg.channels, seed);
            let ic = random_set(30, seed);
            let p = perm(30, seed + 1);
            let a = contextformer_forward(&f.permute_rows(&p), &ic.select(&p), &stage).unwrap();
            let b = contextformer_forward(&f, &ic, &stage).unwrap();
            assert_eq!((b.rows(), b.cols()), (30, cfg.channels));
            assert!(a.max_abs_diff(&b.permute_rows(&p)) < 1e-8);
        }
        let f = tokens(30, cfg.channels, 9);
        let ic = random_set(30, 9);
        let mut items = ic.items().to_vec();
        items[4].xb += 0.3;
        let moved = CorrespondenceSet::new(items).unwrap();
        let a = contextformer_forward(&f, &ic, &stage).unwrap();
        let b = contextformer_forward(&f, &moved, &stage).unwrap();
        assert!(a.max_abs_diff(&b) > 1e-9);
    }
}
