//! The iterative pruning network and the geometry it drives.
//!
//! Each iteration embeds the surviving candidates (coordinates plus, after the
//! first iteration, the logit inherited from the previous one), optionally
//! fuses in visual cues, captures local and global context, scores every
//! candidate and keeps the best `ceil(r * N_t)`. The survivors of the last
//! iteration are weighted by a softmax over their logits and fed to the
//! weighted eight-point regression, whose output is verified against the
//! full input set.

mod loss;

pub use loss::{
    alpha_schedule, bce_with_logits, classification_loss, essential_loss, hybrid_loss,
    iteration_labels, virtual_correspondences, LossError, ALPHA_SWITCH_STEP,
};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::contextformer::ContextFormer;
use crate::geometry::{
    decompose_essential, full_size_verification, weighted_eight_point, CorrespondenceSet,
    EssentialMatrix, GeometryError, RelativePose, DEFAULT_VERIFY_TAU,
};
use crate::nn::{
    ContextNormBlock, Linear, Mlp, NetConfig, NnError, ParamScope, ParamStore, TokenMatrix,
};
use crate::vcextractor::{
    backbone_forward, extract_spatial_cues, Backbone, ImagePair, VisualCueExtractor,
};
use crate::vsfusion::VsFusion;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(
        "weights were built for config hash {found:016x}, runtime config hashes to {expected:016x}"
    )]
    HashMismatch { expected: u64, found: u64 },
    #[error("{n} correspondences leave {final_count} final candidates; at least 8 are needed")]
    TooFewCandidates { n: usize, final_count: usize },
    #[error("oracle mode needs ground-truth labels on the correspondences")]
    MissingLabels,
}

/// Two context-norm blocks and a per-candidate linear score.
#[derive(Debug, Clone)]
pub struct InlierPredictor {
    cn0: ContextNormBlock,
    cn1: ContextNormBlock,
    out: Linear,
}

impl InlierPredictor {
    pub fn load(scope: &ParamScope<'_>) -> Result<Self, NnError> {
        let p = Self {
            cn0: ContextNormBlock::load(&scope.scope("cn0"))?,
            cn1: ContextNormBlock::load(&scope.scope("cn1"))?,
            out: scope.linear("out")?,
        };
        if p.out.outputs() != 1 {
            return Err(NnError::ShapeMismatch {
                layer: scope.full_name("out"),
                detail: format!("must produce one logit, got {}", p.out.outputs()),
            });
        }
        Ok(p)
    }

    pub fn forward(&self, features: &TokenMatrix) -> Result<Vec<f64>, NnError> {
        let h = self.cn0.forward_matrix(features.matrix())?;
        let h = self.cn1.forward_matrix(&h)?;
        Ok(self.out.apply(&h)?.as_slice().to_vec())
    }
}

pub fn inlier_predictor(
    features: &TokenMatrix,
    predictor: &InlierPredictor,
) -> Result<Vec<f64>, NnError> {
    predictor.forward(features)
}

#[derive(Debug, Clone)]
struct IterationStage {
    spatial: Mlp,
    fusion: Option<VsFusion>,
    context: ContextFormer,
    predictor: InlierPredictor,
}

/// All network stages, loaded once from a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Network {
    cfg: NetConfig,
    visual: Option<(Backbone, VisualCueExtractor)>,
    stages: Vec<IterationStage>,
}

impl Network {
    pub fn new(cfg: &NetConfig, store: &ParamStore) -> Result<Self, PipelineError> {
        cfg.validate()?;
        if store.config_hash() != cfg.hash() {
            return Err(PipelineError::HashMismatch {
                expected: cfg.hash(),
                found: store.config_hash(),
            });
        }
        let root = store.root();
        let visual = if cfg.uses_visual_branch() {
            Some((
                Backbone::load(&root.scope("backbone"), cfg)?,
                VisualCueExtractor::load(&root.scope("visual"), cfg)?,
            ))
        } else {
            None
        };
        let stages = (0..cfg.iterations)
            .map(|t| {
                let it = root.scope(&format!("iter{t}"));
                Ok(IterationStage {
                    spatial: Mlp::load(&it.scope("spatial"))?,
                    fusion: if cfg.fusion_active(t) {
                        Some(VsFusion::load(&it.scope("fusion"), cfg)?)
                    } else {
                        None
                    },
                    context: ContextFormer::load(&it.scope("ctx"), cfg, cfg.knn[t])?,
                    predictor: InlierPredictor::load(&it.scope("predictor"))?,
                })
            })
            .collect::<Result<_, NnError>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            visual,
            stages,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// Runs the network stages and pruning on one pair without touching the
    /// geometry back end. Without images the visual branch is skipped.
    pub fn score(
        &self,
        img: Option<&ImagePair>,
        ic: &CorrespondenceSet,
        opts: &ForwardOptions,
    ) -> Result<NetworkPass, PipelineError> {
        let n = ic.len();
        let counts = self.cfg.candidate_counts(n);
        let final_count = *counts.last().expect("non-empty");
        if final_count < 8 || counts.iter().zip(&self.cfg.knn).any(|(&c, &k)| k >= c) {
            return Err(PipelineError::TooFewCandidates { n, final_count });
        }
        let oracle_labels = if opts.oracle {
            Some(ic.labels().ok_or(PipelineError::MissingLabels)?)
        } else {
            None
        };

        let mut traces = Vec::new();
        let fv = match (img, &self.visual) {
            (Some(img), Some((backbone, extractor))) => {
                let maps = backbone_forward(img, backbone)?;
                let cues = extractor.forward(&maps, opts.trace)?;
                if let Some(maps) = cues.attention_maps {
                    traces.push(AttentionTrace {
                        stage: "visual.cross".into(),
                        maps,
                    });
                }
                Some(cues.fv)
            }
            _ => None,
        };

        let order = canonical_order(ic);
        let mut state: Option<IterationState> = None;
        let mut records = Vec::with_capacity(self.cfg.iterations);
        for (t, stage) in self.stages.iter().enumerate() {
            let (indices, inherited) = match &state {
                None => (order.clone(), None),
                Some(s) => (s.candidate_indices.clone(), Some(s.logits.clone())),
            };
            let candidates = ic.select(&indices);
            let mut fs = extract_spatial_cues(&candidates, &stage.spatial, inherited.as_deref())?;
            let mut fallback_rows = 0;
            if let (Some(fusion), Some(fv)) = (&stage.fusion, &fv) {
                let fused = fusion.forward(fv, &fs, opts.trace)?;
                fallback_rows += fused.fallback_rows;
                if let Some(maps) = fused.attention_maps {
                    traces.push(AttentionTrace {
                        stage: format!("iter{t}.fusion"),
                        maps,
                    });
                }
                fs = fused.output;
            }
            let ctx = stage.context.forward(&fs, &candidates, opts.trace)?;
            fallback_rows += ctx.fallback_rows;
            if let Some(maps) = ctx.attention_maps {
                traces.push(AttentionTrace {
                    stage: format!("iter{t}.ctx.global"),
                    maps,
                });
            }
            let network_logits = stage.predictor.forward(&ctx.output)?;
            let logits = match oracle_labels {
                Some(labels) => indices
                    .iter()
                    .map(|&i| f64::from(u8::from(labels[i])))
                    .collect(),
                None => network_logits.clone(),
            };
            let current = IterationState {
                candidates,
                candidate_indices: indices,
                logits,
                features: ctx.output,
            };
            let next = prune(&current, self.cfg.prune_ratio);
            records.push(IterationRecord {
                candidate_indices: current.candidate_indices,
                network_logits: network_logits.clone(),
                logits: current.logits,
                kept: next.candidate_indices.clone(),
                stats: LogitStats::of(&network_logits),
                fallback_rows,
            });
            state = Some(next);
        }

        Ok(NetworkPass {
            last: state.expect("at least one iteration"),
            diagnostics: Diagnostics {
                candidate_counts: counts,
                iterations: records,
                attention: traces,
            },
        })
    }

    /// [`Network::score`] followed by the weighted regression on the final
    /// candidates, verification over the whole input and pose recovery.
    pub fn forward(
        &self,
        img: Option<&ImagePair>,
        ic: &CorrespondenceSet,
        opts: &ForwardOptions,
    ) -> Result<PipelineOutput, PipelineError> {
        let NetworkPass { last, diagnostics } = self.score(img, ic, opts)?;
        let n = ic.len();
        let probs = if opts.oracle {
            normalized_indicator(&last.logits)
        } else {
            softmax(&last.logits)
        };
        let essential = weighted_eight_point(&last.candidates, &probs)?;
        let verified_flags = full_size_verification(ic, &essential, opts.verify_tau);
        let support: Vec<usize> = (0..n).filter(|&i| verified_flags[i]).collect();
        let voters = if support.is_empty() {
            last.candidates.clone()
        } else {
            ic.select(&support)
        };
        let pose = decompose_essential(&essential, &voters).ok();
        Ok(PipelineOutput {
            final_indices: last.candidate_indices,
            final_candidates: last.candidates,
            logits: last.logits,
            probs,
            essential,
            verified_flags,
            pose,
            diagnostics,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    /// Replace every iteration's logits by the ground-truth indicator.
    pub oracle: bool,
    /// Keep every attention map in the diagnostics.
    pub trace: bool,
    pub verify_tau: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            oracle: false,
            trace: false,
            verify_tau: DEFAULT_VERIFY_TAU,
        }
    }
}

/// Candidates entering (or leaving) an iteration.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub candidates: CorrespondenceSet,
    /// Position of each candidate in the original input set.
    pub candidate_indices: Vec<usize>,
    pub logits: Vec<f64>,
    pub features: TokenMatrix,
}

/// Lexicographic order of the correspondences by coordinates, ties to the
/// lower index. Processing candidates in this order makes every reduction
/// inside the network independent of how the input was ordered.
pub fn canonical_order(ic: &CorrespondenceSet) -> Vec<usize> {
    let items = ic.items();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&items[a], &items[b]);
        p.xa.total_cmp(&q.xa)
            .then(p.ya.total_cmp(&q.ya))
            .then(p.xb.total_cmp(&q.xb))
            .then(p.yb.total_cmp(&q.yb))
            .then(a.cmp(&b))
    });
    order
}

/// Keeps the `ceil(r * N_t)` highest logits (ties to the lower original
/// index), preserving the input order of the survivors.
pub fn prune(state: &IterationState, ratio: f64) -> IterationState {
    let keep = prune_positions(&state.logits, &state.candidate_indices, ratio);
    IterationState {
        candidates: state.candidates.select(&keep),
        candidate_indices: keep.iter().map(|&p| state.candidate_indices[p]).collect(),
        logits: keep.iter().map(|&p| state.logits[p]).collect(),
        features: state.features.select_rows(&keep),
    }
}

/// Positions (ascending) of the survivors of one pruning step.
pub fn prune_positions(logits: &[f64], original: &[usize], ratio: f64) -> Vec<usize> {
    let m = crate::nn::pruned_count(logits.len(), ratio).min(logits.len());
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| {
        logits[b]
            .total_cmp(&logits[a])
            .then(original[a].cmp(&original[b]))
    });
    let mut keep = order[..m].to_vec();
    keep.sort_unstable();
    keep
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Indicator weights scaled to sum to one (uniform if all are zero).
fn normalized_indicator(indicator: &[f64]) -> Vec<f64> {
    let sum: f64 = indicator.iter().sum();
    if sum > 0.0 {
        indicator.iter().map(|v| v / sum).collect()
    } else {
        vec![1.0 / indicator.len() as f64; indicator.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl LogitStats {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// Original indices of the candidates scored in this iteration, in
    /// processing order (see [`canonical_order`]).
    pub candidate_indices: Vec<usize>,
    /// Raw predictor output.
    pub network_logits: Vec<f64>,
    /// Scores used for pruning (the indicator in oracle mode).
    pub logits: Vec<f64>,
    /// Original indices that survived pruning.
    pub kept: Vec<usize>,
    pub stats: LogitStats,
    /// Attention rows whose gate vanished and fell back to plain softmax.
    pub fallback_rows: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub stage: String,
    pub maps: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// `[N, N_1, ..., N_λ]`.
    pub candidate_counts: Vec<usize>,
    pub iterations: Vec<IterationRecord>,
    pub attention: Vec<AttentionTrace>,
}

/// Output of the network stages alone.
#[derive(Debug, Clone)]
pub struct NetworkPass {
    /// Survivors of the final pruning step.
    pub last: IterationState,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Survivors of the last pruning step, in processing order.
    pub final_candidates: CorrespondenceSet,
    /// Original index of each final candidate.
    pub final_indices: Vec<usize>,
    pub logits: Vec<f64>,
    /// Eight-point weights over the final candidates; sums to one.
    pub probs: Vec<f64>,
    pub essential: EssentialMatrix,
    /// One flag per input correspondence.
    pub verified_flags: Vec<bool>,
    /// `None` when cheirality voting is tied.
    pub pose: Option<RelativePose>,
    pub diagnostics: Diagnostics,
}

pub fn forward(
    img: Option<&ImagePair>,
    ic: &CorrespondenceSet,
    store: &ParamStore,
    cfg: &NetConfig,
) -> Result<PipelineOutput, PipelineError> {
    Network::new(cfg, store)?.forward(img, ic, &ForwardOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pose_error, Correspondence};
    use crate::nn::{init_params, ParamStoreBuilder};
    use crate::synthgen::{generate_pair, SceneConfig};
    use crate::vcextractor::splat_images;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_net(seed: u64) -> (NetConfig, Network) {
        let cfg = NetConfig::toy();
        let store = init_params(&cfg, seed).unwrap();
        let net = Network::new(&cfg, &store).unwrap();
        (cfg, net)
    }

    fn pair(n: usize, outliers: f64, seed: u64) -> crate::synthgen::LabeledPair {
        generate_pair(&SceneConfig {
            n_points: n,
            outlier_ratio: outliers,
            seed,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    fn state(logits: Vec<f64>, original: Vec<usize>) -> IterationState {
        let n = logits.len();
        IterationState {
            candidates: CorrespondenceSet::new(
                (0..n)
                    .map(|i| Correspondence::new(i as f64, 0.0, 0.0, 0.0))
                    .collect(),
            )
            .unwrap(),
            candidate_indices: original,
            logits,
            features: TokenMatrix::from_fn(n, 1, |i, _| i as f64),
        }
    }

    #[test]
    fn prune_keeps_top_half() {
        let s = state(
            vec![0.1, 0.9, -1.0, 0.5, 0.3, 2.0],
            vec![10, 11, 12, 13, 14, 15],
        );
        let next = prune(&s, 0.5);
        assert_eq!(next.candidate_indices, vec![11, 13, 15]);
        assert_eq!(next.logits, vec![0.9, 0.5, 2.0]);
        assert_eq!(next.features.matrix().as_slice(), &[1.0, 3.0, 5.0]);
    }

    #[test]
    fn prune_ties_prefer_lower_original_index() {
        let s = state(vec![1.0, 1.0, 1.0, 0.0], vec![7, 3, 5, 0]);
        assert_eq!(prune(&s, 0.5).candidate_indices, vec![3, 5]);
        let s = state(vec![1.0; 5], vec![4, 3, 2, 1, 0]);
        assert_eq!(prune(&s, 0.5).candidate_indices, vec![2, 1, 0]);
    }

    #[test]
    fn prune_permutation_keeps_same_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: Vec<f64> = (0..101).map(|i| ((i * 37) % 101) as f64 * 0.01).collect();
        let s = state(logits.clone(), (0..101).collect());
        let mut perm: Vec<usize> = (0..101).collect();
        perm.shuffle(&mut rng);
        let sp = state(perm.iter().map(|&i| logits[i]).collect(), perm.clone());
        let mut a = prune(&s, 0.5).candidate_indices;
        let mut b = prune(&sp, 0.5).candidate_indices;
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        assert_eq!(a.len(), 51);
    }

    #[test]
    fn predictor_shape_and_hand_case() {
        let (cfg, _) = toy_net(0);
        let store = init_params(&cfg, 0).unwrap();
        let p = InlierPredictor::load(&store.root().scope("iter0.predictor")).unwrap();
        let f = TokenMatrix::from_fn(12, cfg.channels, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.1);
        assert_eq!(p.forward(&f).unwrap().len(), 12);

        // Zero encoders pass features through; the output map sums channels.
        let mut b = ParamStoreBuilder::new(0);
        for cn in ["cn0", "cn1"] {
            for l in ["l0", "l1"] {
                b.linear(
                    &format!("p.{cn}.{l}"),
                    &[&[0.0, 0.0], &[0.0, 0.0]],
                    Some(&[0.0, 0.0]),
                )
                .unwrap();
            }
        }
        b.linear("p.out", &[&[1.0], &[1.0]], Some(&[-0.5])).unwrap();
        let store = b.build();
        let p = InlierPredictor::load(&store.root().scope("p")).unwrap();
        let f = TokenMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.0, 0.25, 0.25]).unwrap();
        assert_eq!(inlier_predictor(&f, &p).unwrap(), vec![2.5, -1.5, 0.0]);
    }

    #[test]
    fn predictor_equivariance() {
        let cfg = NetConfig::toy();
        let store = init_params(&cfg, 4).unwrap();
        let p = InlierPredictor::load(&store.root().scope("iter1.predictor")).unwrap();
        let f = TokenMatrix::from_fn(20, cfg.channels, |i, j| {
            ((i * 13 + j * 5) % 17) as f64 * 0.1 - 0.8
        });
        let perm: Vec<usize> = (0..20).rev().collect();
        let a = p.forward(&f.permute_rows(&perm)).unwrap();
        let b = p.forward(&f).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            assert!((a[i] - b[pi]).abs() < 1e-10);
        }
    }

    #[test]
    fn forward_contract_on_toy_config() {
        let (cfg, net) = toy_net(1);
        let p = pair(cfg.correspondences, 0.5, 2);
        let img = splat_images(&p.correspondences, cfg.image_height, cfg.image_width);
        let out = net
            .forward(Some(&img), &p.correspondences, &ForwardOptions::default())
            .unwrap();
        assert_eq!(out.diagnostics.candidate_counts, vec![64, 32, 16]);
        assert_eq!(out.final_candidates.len(), 16);
        assert_eq!(out.verified_flags.len(), 64);
        assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(out.probs.iter().all(|&p| p >= 0.0));
        let kept = &out.diagnostics.iterations[0].kept;
        assert_eq!(kept, &out.diagnostics.iterations[1].candidate_indices);
    }

    #[test]
    fn oracle_mode_matches_direct_regression() {
        let (_, net) = toy_net(2);
        for seed in 0..5 {
            let p = pair(64, 0.5, 10 + seed);
            let opts = ForwardOptions {
                oracle: true,
                ..ForwardOptions::default()
            };
            let out = net.forward(None, &p.correspondences, &opts).unwrap();
            let labels = p.correspondences.labels().unwrap();
            assert!(out.final_indices.iter().all(|&i| labels[i]));
            let direct = weighted_eight_point(&out.final_candidates, &out.probs).unwrap();
            assert_eq!(direct, out.essential);
            let err = pose_error(out.pose.as_ref().unwrap(), &p.gt_pose);
            assert!(err < 1e-3, "{err}");
        }
    }

    #[test]
    fn forward_rejects_bad_setups() {
        let (cfg, net) = toy_net(3);
        let p = pair(20, 0.5, 1);
        assert!(matches!(
            net.forward(None, &p.correspondences, &ForwardOptions::default()),
            Err(PipelineError::TooFewCandidates { .. })
        ));
        let p = pair(64, 0.5, 1);
        let opts = ForwardOptions {
            oracle: true,
            ..ForwardOptions::default()
        };
        assert!(matches!(
            net.forward(None, &p.correspondences.without_labels(), &opts),
            Err(PipelineError::MissingLabels)
        ));
        let other = NetConfig { channels: 8, ..cfg };
        let store = init_params(&NetConfig::toy(), 0).unwrap();
        assert!(matches!(
            Network::new(&other, &store),
            Err(PipelineError::HashMismatch { .. })
        ));
    }

    #[test]
    fn forward_permutation_equivariance() {
        let (cfg, net) = toy_net(5);
        let p = pair(64, 0.3, 6);
        let img = splat_images(&p.correspondences, cfg.image_height, cfg.image_width);
        let mut perm: Vec<usize> = (0..64).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(6));
        let opts = ForwardOptions::default();
        let a = net.forward(Some(&img), &p.correspondences, &opts).unwrap();
        let b = net
            .forward(Some(&img), &p.correspondences.select(&perm), &opts)
            .unwrap();
        let flags: Vec<bool> = perm.iter().map(|&i| a.verified_flags[i]).collect();
        assert_eq!(flags, b.verified_flags);
        assert_eq!(a.essential.matrix(), b.essential.matrix());
        assert_eq!(a.probs, b.probs);
        let mapped: Vec<usize> = b.final_indices.iter().map(|&j| perm[j]).collect();
        assert_eq!(mapped, a.final_indices);
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        let set = CorrespondenceSet::new(vec![
            Correspondence::new(0.5, 0.0, 0.0, 0.0),
            Correspondence::new(-0.5, 1.0, 0.0, 0.0),
            Correspondence::new(0.5, -1.0, 0.0, 0.0),
            Correspondence::new(-0.5, 1.0, 0.0, 0.0),
        ])
        .unwrap();
        assert_eq!(canonical_order(&set), vec![1, 3, 2, 0]);
    }

    #[test]
    fn degenerate_regression_surfaces_after_scoring() {
        let cfg = NetConfig::toy();
        let opts = ForwardOptions::default();
        let mut seen = 0;
        for seed in 0..60 {
            let net = Network::new(&cfg, &init_params(&cfg, seed).unwrap()).unwrap();
            let p = pair(cfg.correspondences, 0.5, 100 + seed);
            let pass = net.score(None, &p.correspondences, &opts).unwrap();
            assert!(pass.last.logits.iter().all(|l| l.is_finite()));
            match net.forward(None, &p.correspondences, &opts) {
                Ok(out) => assert_eq!(out.final_indices, pass.last.candidate_indices),
                Err(PipelineError::Geometry(_)) => seen += 1,
                Err(e) => panic!("unexpected error {e}"),
            }
        }
        assert!(
            seen > 0,
            "expected some untrained pass to concentrate its weights"
        );
    }
}
