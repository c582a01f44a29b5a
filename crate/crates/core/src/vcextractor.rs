//! Visual cues from the image pair and spatial cues from the correspondences.

use nalgebra::DMatrix;

use crate::geometry::CorrespondenceSet;
use crate::nn::{
    cross_attention, relu, AttentionParams, Mlp, NetConfig, NnError, ParamScope, TokenMatrix,
};

/// An `H x W x 3` image with intensities in `[0, 1]`, stored row-major with
/// interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return Err(NnError::Shape(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(NnError::NonFinite(
                "image (intensities must lie in [0, 1])".into(),
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Pixels as tokens: `(H*W) x 3`.
    fn tokens(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.height * self.width, 3, &self.data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub a: Image,
    pub b: Image,
}

impl ImagePair {
    pub fn new(a: Image, b: Image) -> Result<Self, NnError> {
        if (a.height, a.width) != (b.height, b.width) {
            return Err(NnError::Shape(format!(
                "image sizes differ: {}x{} vs {}x{}",
                a.height, a.width, b.height, b.width
            )));
        }
        Ok(Self { a, b })
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }
}

/// Renders keypoint-density images from the correspondence endpoints: every
/// point deposits unit mass bilinearly at its pixel location (normalized
/// coordinates in `[-1, 1]` span the image), then intensities are clipped to
/// `[0, 1]` and copied to all three channels.
pub fn splat_images(ic: &CorrespondenceSet, height: usize, width: usize) -> ImagePair {
    let render = |pick: &dyn Fn(&crate::geometry::Correspondence) -> (f64, f64)| {
        let mut acc = vec![0.0; height * width];
        for c in ic.items() {
            let (x, y) = pick(c);
            let px = (x + 1.0) * 0.5 * (width as f64 - 1.0);
            let py = (y + 1.0) * 0.5 * (height as f64 - 1.0);
            if !(px.is_finite() && py.is_finite()) {
                continue;
            }
            let (x0, y0) = (px.floor(), py.floor());
            let (fx, fy) = (px - x0, py - y0);
            for (dx, dy, w) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                let (xi, yi) = (x0 as i64 + dx, y0 as i64 + dy);
                if xi >= 0 && yi >= 0 && (xi as usize) < width && (yi as usize) < height {
                    acc[yi as usize * width + xi as usize] += w;
                }
            }
        }
        let data = acc.iter().flat_map(|&v| [v.clamp(0.0, 1.0); 3]).collect();
        Image {
            height,
            width,
            data,
        }
    };
    ImagePair {
        a: render(&|c| (c.xa, c.ya)),
        b: render(&|c| (c.xb, c.yb)),
    }
}

/// Per-view backbone outputs, `(H/4 * W/4) x C_F` tokens in row-major spatial
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapPair {
    pub fa: TokenMatrix,
    pub fb: TokenMatrix,
}

/// 3x3 convolution with padding 1, weights `[out, in, 3, 3]`.
#[derive(Debug, Clone)]
struct Conv3x3 {
    name: String,
    inputs: usize,
    /// `(in * 9) x out`, rows ordered `(c, ky, kx)`.
    kernel: DMatrix<f64>,
    bias: Vec<f64>,
}

impl Conv3x3 {
    fn load(scope: &ParamScope<'_>, name: &str) -> Result<Self, NnError> {
        let full = scope.full_name(name);
        let w = scope.tensor(&format!("{name}.weight"))?;
        let &[out, inputs, 3, 3] = w.shape() else {
            return Err(NnError::ShapeMismatch {
                layer: full,
                detail: format!("conv weight must be [out, in, 3, 3], got {:?}", w.shape()),
            });
        };
        let b = scope.tensor(&format!("{name}.bias"))?;
        if b.shape() != [out] {
            return Err(NnError::ShapeMismatch {
                layer: full,
                detail: format!("bias shape {:?} for {out} outputs", b.shape()),
            });
        }
        // Row-major [out][in*9] is exactly the transpose of the kernel layout.
        let kernel = DMatrix::from_row_slice(out, inputs * 9, w.data()).transpose();
        Ok(Self {
            name: full,
            inputs,
            kernel,
            bias: b.data().to_vec(),
        })
    }

    /// `x` holds `h*w` pixel tokens of width `inputs`.
    fn apply(
        &self,
        x: &DMatrix<f64>,
        h: usize,
        w: usize,
        stride: usize,
    ) -> Result<(DMatrix<f64>, usize, usize), NnError> {
        if x.ncols() != self.inputs || x.nrows() != h * w {
            return Err(NnError::ShapeMismatch {
                layer: self.name.clone(),
                detail: format!(
                    "expects {} channels over {h}x{w}, got {:?}",
                    self.inputs,
                    x.shape()
                ),
            });
        }
        let oh = (h - 1) / stride + 1;
        let ow = (w - 1) / stride + 1;
        let mut cols = DMatrix::zeros(oh * ow, self.inputs * 9);
        for oy in 0..oh {
            for ox in 0..ow {
                let r = oy * ow + ox;
                for ky in 0..3 {
                    let iy = (oy * stride + ky) as i64 - 1;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * stride + kx) as i64 - 1;
                        if ix < 0 || ix as usize >= w {
                            continue;
                        }
                        let src = iy as usize * w + ix as usize;
                        for c in 0..self.inputs {
                            cols[(r, c * 9 + ky * 3 + kx)] = x[(src, c)];
                        }
                    }
                }
            }
        }
        let mut y = cols * &self.kernel;
        for (j, mut col) in y.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.bias[j]);
        }
        Ok((y, oh, ow))
    }
}

/// Strided stem, a second strided convolution, then residual blocks; total
/// stride 4.
#[derive(Debug, Clone)]
pub struct Backbone {
    stem: Conv3x3,
    down: Conv3x3,
    blocks: Vec<(Conv3x3, Conv3x3)>,
}

impl Backbone {
    pub fn load(scope: &ParamScope<'_>, cfg: &NetConfig) -> Result<Self, NnError> {
        let blocks = (0..cfg.backbone_blocks)
            .map(|b| {
                let s = scope.scope(&format!("block{b}"));
                Ok((Conv3x3::load(&s, "conv1")?, Conv3x3::load(&s, "conv2")?))
            })
            .collect::<Result<_, NnError>>()?;
        Ok(Self {
            stem: Conv3x3::load(scope, "stem")?,
            down: Conv3x3::load(scope, "down")?,
            blocks,
        })
    }

    pub fn forward_image(&self, img: &Image) -> Result<TokenMatrix, NnError> {
        let (h, w) = (img.height, img.width);
        if h % 4 != 0 || w % 4 != 0 {
            return Err(NnError::Config {
                field: "image_height",
                reason: format!("{h}x{w} image is not divisible by 4"),
            });
        }
        let (x, h, w) = self.stem.apply(&img.tokens(), h, w, 2)?;
        let (x, h, w) = self.down.apply(&relu(&x), h, w, 2)?;
        let mut x = relu(&x);
        for (c1, c2) in &self.blocks {
            let (y, _, _) = c1.apply(&x, h, w, 1)?;
            let (y, _, _) = c2.apply(&relu(&y), h, w, 1)?;
            x = relu(&(x + y));
        }
        Ok(TokenMatrix::from_matrix(x))
    }
}

pub fn backbone_forward(img: &ImagePair, backbone: &Backbone) -> Result<FeatureMapPair, NnError> {
    Ok(FeatureMapPair {
        fa: backbone.forward_image(&img.a)?,
        fb: backbone.forward_image(&img.b)?,
    })
}

/// Averages consecutive windows of `rows / m` tokens.
pub fn window_average(x: &TokenMatrix, m: usize) -> Result<TokenMatrix, NnError> {
    if m == 0 || !x.rows().is_multiple_of(m) {
        return Err(NnError::Config {
            field: "visual_tokens",
            reason: format!("{m} does not divide {} tokens", x.rows()),
        });
    }
    let win = x.rows() / m;
    let src = x.matrix();
    Ok(TokenMatrix::from_fn(m, x.cols(), |i, j| {
        src.view((i * win, j), (win, 1)).sum() / win as f64
    }))
}

/// Cross attention between the views (shared parameters), window pooling to
/// `M` tokens, and an MLP lift to width `C`.
#[derive(Debug, Clone)]
pub struct VisualCueExtractor {
    cross: AttentionParams,
    mlp: Mlp,
    tokens: usize,
}

#[derive(Debug, Clone)]
pub struct VisualCues {
    pub fv: TokenMatrix,
    /// `fa + CA(fa, fb)` and `fb + CA(fb, fa)`.
    pub fa_attended: TokenMatrix,
    pub fb_attended: TokenMatrix,
    pub attention_maps: Option<Vec<nalgebra::DMatrix<f64>>>,
}

impl VisualCueExtractor {
    pub fn load(scope: &ParamScope<'_>, cfg: &NetConfig) -> Result<Self, NnError> {
        Ok(Self {
            cross: AttentionParams::load(&scope.scope("cross"), cfg.heads)?,
            mlp: Mlp::load(&scope.scope("mlp"))?,
            tokens: cfg.visual_tokens,
        })
    }

    pub fn forward(&self, maps: &FeatureMapPair, trace: bool) -> Result<VisualCues, NnError> {
        let ab = cross_attention(&maps.fa, &maps.fb, &self.cross, trace)?;
        let ba = cross_attention(&maps.fb, &maps.fa, &self.cross, trace)?;
        let fa_attended = maps.fa.add(&ab.output)?;
        let fb_attended = maps.fb.add(&ba.output)?;
        let joint = TokenMatrix::concat_rows(&fa_attended, &fb_attended)?;
        let fv = self.mlp.forward(&window_average(&joint, self.tokens)?)?;
        let attention_maps = match (ab.maps, ba.maps) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        Ok(VisualCues {
            fv,
            fa_attended,
            fb_attended,
            attention_maps,
        })
    }
}

pub fn extract_visual_cues(
    maps: &FeatureMapPair,
    extractor: &VisualCueExtractor,
) -> Result<TokenMatrix, NnError> {
    Ok(extractor.forward(maps, false)?.fv)
}

/// Correspondence coordinates, with the inherited logit as a fifth column
/// when given.
pub fn correspondence_tokens(
    ic: &CorrespondenceSet,
    prev_weights: Option<&[f64]>,
) -> Result<TokenMatrix, NnError> {
    let n = ic.len();
    if let Some(w) = prev_weights {
        if w.len() != n {
            return Err(NnError::Shape(format!(
                "{} inherited weights for {n} correspondences",
                w.len()
            )));
        }
    }
    let width = if prev_weights.is_some() { 5 } else { 4 };
    let m = DMatrix::from_fn(n, width, |i, j| match j {
        4 => prev_weights.expect("width 5 implies weights")[i],
        _ => ic.items()[i].as_array()[j],
    });
    TokenMatrix::new(m)
}

/// Per-correspondence MLP embedding of the 4 (or 5) input channels.
pub fn extract_spatial_cues(
    ic: &CorrespondenceSet,
    embed: &Mlp,
    prev_weights: Option<&[f64]>,
) -> Result<TokenMatrix, NnError> {
    embed.forward(&correspondence_tokens(ic, prev_weights)?)
}
