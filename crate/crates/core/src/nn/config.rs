use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::NnError;

/// Network hyperparameters. Every field participates in [`NetConfig::hash`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Feature width C of correspondence and visual tokens.
    pub channels: usize,
    pub heads: usize,
    /// Number of visual / cluster tokens M.
    pub visual_tokens: usize,
    /// Nominal correspondence count N (informational; inputs may differ).
    pub correspondences: usize,
    /// Number of pruning iterations.
    pub iterations: usize,
    pub prune_ratio: f64,
    /// Neighbor count of the k-NN graph, one entry per iteration.
    pub knn: Vec<usize>,
    /// Backbone output width C_F.
    pub backbone_channels: usize,
    /// Residual blocks after the stride-4 stem.
    pub backbone_blocks: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub ffn_expansion: usize,
    pub attention_bias: bool,
    /// Bottleneck divisor of the channel squeeze-excitation gate.
    pub se_reduction: usize,
    /// Run visual-spatial fusion only in the last iteration.
    pub fusion_final_only: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: 128,
            heads: 4,
            visual_tokens: 100,
            correspondences: 2000,
            iterations: 2,
            prune_ratio: 0.5,
            knn: vec![9, 6],
            backbone_channels: 64,
            backbone_blocks: 1,
            image_height: 120,
            image_width: 160,
            ffn_expansion: 2,
            attention_bias: false,
            se_reduction: 4,
            fusion_final_only: true,
        }
    }
}

impl NetConfig {
    /// A small configuration for tests and smoke runs.
    pub fn toy() -> Self {
        Self {
            channels: 16,
            heads: 2,
            visual_tokens: 8,
            correspondences: 64,
            backbone_channels: 8,
            image_height: 16,
            image_width: 16,
            knn: vec![4, 3],
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    /// Tokens per view after the stride-4 backbone.
    pub fn feature_tokens(&self) -> usize {
        (self.image_height / 4) * (self.image_width / 4)
    }

    pub fn fusion_active(&self, iteration: usize) -> bool {
        !self.fusion_final_only || iteration + 1 == self.iterations
    }

    pub fn uses_visual_branch(&self) -> bool {
        (0..self.iterations).any(|t| self.fusion_active(t))
    }

    /// Candidate counts entering each iteration followed by the final count:
    /// `[N, ceil(rN), ceil(r ceil(rN)), ...]`, length `iterations + 1`.
    pub fn candidate_counts(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![n];
        for _ in 0..self.iterations {
            let last = *counts.last().expect("non-empty");
            counts.push(pruned_count(last, self.prune_ratio));
        }
        counts
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |field: &'static str, reason: String| Err(NnError::Config { field, reason });
        if self.channels == 0 || self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return bad(
                "heads",
                format!(
                    "channels {} not divisible by heads {}",
                    self.channels, self.heads
                ),
            );
        }
        if self.backbone_channels < 2 || !self.backbone_channels.is_multiple_of(self.heads) {
            return bad(
                "backbone_channels",
                format!(
                    "{} must be >= 2 and divisible by heads {}",
                    self.backbone_channels, self.heads
                ),
            );
        }
        if self.iterations == 0 {
            return bad("iterations", "must be at least 1".into());
        }
        if !(self.prune_ratio > 0.0 && self.prune_ratio < 1.0) {
            return bad(
                "prune_ratio",
                format!("{} outside (0, 1)", self.prune_ratio),
            );
        }
        if self.knn.len() != self.iterations || self.knn.contains(&0) {
            return bad(
                "knn",
                format!(
                    "need {} positive entries, got {:?}",
                    self.iterations, self.knn
                ),
            );
        }
        if self.visual_tokens == 0 {
            return bad("visual_tokens", "must be at least 1".into());
        }
        if self.image_height == 0
            || self.image_width == 0
            || !self.image_height.is_multiple_of(4)
            || !self.image_width.is_multiple_of(4)
        {
            return bad(
                "image_height",
                format!(
                    "{}x{} image is not divisible by 4",
                    self.image_height, self.image_width
                ),
            );
        }
        if self.uses_visual_branch()
            && !(2 * self.feature_tokens()).is_multiple_of(self.visual_tokens)
        {
            return bad(
                "visual_tokens",
                format!(
                    "{} does not divide {} feature tokens",
                    self.visual_tokens,
                    2 * self.feature_tokens()
                ),
            );
        }
        if self.ffn_expansion == 0
            || self.se_reduction == 0
            || 2 * self.channels < self.se_reduction
        {
            return bad(
                "se_reduction",
                "expansion and reduction must be positive".into(),
            );
        }
        Ok(())
    }

    fn canonical(&self) -> String {
        format!(
            "channels={};heads={};visual_tokens={};correspondences={};iterations={};prune_ratio={:016x};\
             knn={:?};backbone_channels={};backbone_blocks={};image={}x{};ffn_expansion={};\
             attention_bias={};se_reduction={};fusion_final_only={}",
            self.channels,
            self.heads,
            self.visual_tokens,
            self.correspondences,
            self.iterations,
            self.prune_ratio.to_bits(),
            self.knn,
            self.backbone_channels,
            self.backbone_blocks,
            self.image_height,
            self.image_width,
            self.ffn_expansion,
            self.attention_bias,
            self.se_reduction,
            self.fusion_final_only,
        )
    }

    /// First eight bytes (little endian) of the SHA-256 of a canonical
    /// rendering of every field.
    pub fn hash(&self) -> u64 {
        let digest = Sha256::digest(self.canonical().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

/// `ceil(ratio * n)`, computed so that exact products are not bumped up by
/// rounding.
pub fn pruned_count(n: usize, ratio: f64) -> usize {
    let x = ratio * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}
