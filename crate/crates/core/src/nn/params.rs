use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetConfig, NnError};

/// A named, shaped parameter tensor stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let size: usize = shape.iter().product();
        if shape.is_empty() || size != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Immutable name → tensor map tagged with the hash of the config it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    config_hash: u64,
    entries: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn root(&self) -> ParamScope<'_> {
        ParamScope {
            store: self,
            prefix: String::new(),
        }
    }

    /// Starts a builder seeded with this store's entries.
    pub fn to_builder(&self) -> ParamStoreBuilder {
        ParamStoreBuilder {
            config_hash: self.config_hash,
            entries: self.entries.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamStoreBuilder {
    config_hash: u64,
    entries: BTreeMap<String, Tensor>,
}

impl ParamStoreBuilder {
    pub fn new(config_hash: u64) -> Self {
        Self {
            config_hash,
            entries: BTreeMap::new(),
        }
    }

    /// Adds a tensor; names must be unique and values finite.
    pub fn insert(
        &mut self,
        name: &str,
        shape: &[usize],
        data: Vec<f64>,
    ) -> Result<&mut Self, NnError> {
        if self.entries.contains_key(name) {
            return Err(NnError::DuplicateName(name.to_string()));
        }
        self.put(name, shape, data)
    }

    /// Adds or replaces a tensor.
    pub fn set(
        &mut self,
        name: &str,
        shape: &[usize],
        data: Vec<f64>,
    ) -> Result<&mut Self, NnError> {
        self.put(name, shape, data)
    }

    fn put(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<&mut Self, NnError> {
        if name.is_empty() || name.len() > u16::MAX as usize {
            return Err(NnError::Shape(format!("invalid parameter name {name:?}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite(name.to_string()));
        }
        self.entries
            .insert(name.to_string(), Tensor::new(shape.to_vec(), data)?);
        Ok(self)
    }

    /// Adds a `[input, output]` weight and optional bias.
    pub fn linear(
        &mut self,
        name: &str,
        weight_rows: &[&[f64]],
        bias: Option<&[f64]>,
    ) -> Result<&mut Self, NnError> {
        let inputs = weight_rows.len();
        let outputs = weight_rows.first().map_or(0, |r| r.len());
        let data: Vec<f64> = weight_rows.iter().flat_map(|r| r.iter().copied()).collect();
        self.insert(&format!("{name}.weight"), &[inputs, outputs], data)?;
        if let Some(b) = bias {
            self.insert(&format!("{name}.bias"), &[b.len()], b.to_vec())?;
        }
        Ok(self)
    }

    pub fn build(self) -> ParamStore {
        ParamStore {
            config_hash: self.config_hash,
            entries: self.entries,
        }
    }
}

/// A view of the parameters under a dotted name prefix.
#[derive(Debug, Clone)]
pub struct ParamScope<'a> {
    store: &'a ParamStore,
    prefix: String,
}

impl<'a> ParamScope<'a> {
    pub fn scope(&self, name: &str) -> ParamScope<'a> {
        ParamScope {
            store: self.store,
            prefix: format!("{}{name}.", self.prefix),
        }
    }

    pub fn full_name(&self, name: &str) -> String {
        format!("{}{name}", self.prefix)
    }

    pub fn has(&self, name: &str) -> bool {
        self.store.get(&self.full_name(name)).is_some()
    }

    pub fn tensor(&self, name: &str) -> Result<&'a Tensor, NnError> {
        let full = self.full_name(name);
        self.store.get(&full).ok_or(NnError::MissingParam(full))
    }

    pub fn has_linear(&self, name: &str) -> bool {
        self.has(&format!("{name}.weight"))
    }

    /// Loads `{name}.weight` (`[in, out]`) and, if present, `{name}.bias`.
    pub fn linear(&self, name: &str) -> Result<Linear, NnError> {
        let full = self.full_name(name);
        let w = self.tensor(&format!("{name}.weight"))?;
        let [inputs, outputs] = w.shape() else {
            return Err(NnError::ShapeMismatch {
                layer: full,
                detail: format!("weight must be rank 2, got {:?}", w.shape()),
            });
        };
        let weight = DMatrix::from_row_slice(*inputs, *outputs, w.data());
        let bias = match self.store.get(&format!("{full}.bias")) {
            Some(b) if b.shape() == [*outputs] => Some(DVector::from_column_slice(b.data())),
            Some(b) => {
                return Err(NnError::ShapeMismatch {
                    layer: full,
                    detail: format!("bias shape {:?} for {outputs} outputs", b.shape()),
                })
            }
            None => None,
        };
        Ok(Linear {
            name: full,
            weight,
            bias,
        })
    }
}

/// Token-wise affine map `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    name: String,
    weight: DMatrix<f64>,
    bias: Option<DVector<f64>>,
}

impl Linear {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NnError> {
        if x.ncols() != self.inputs() {
            return Err(NnError::ShapeMismatch {
                layer: self.name.clone(),
                detail: format!(
                    "expects {} input channels, got {}",
                    self.inputs(),
                    x.ncols()
                ),
            });
        }
        let mut y = x * &self.weight;
        if let Some(b) = &self.bias {
            for (j, mut col) in y.column_iter_mut().enumerate() {
                col.add_scalar_mut(b[j]);
            }
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub kind: ParamKind,
}

#[derive(Default)]
struct SpecList(Vec<ParamSpec>);

impl SpecList {
    fn linear(&mut self, name: &str, inputs: usize, outputs: usize, bias: bool) {
        self.0.push(ParamSpec {
            name: format!("{name}.weight"),
            shape: vec![inputs, outputs],
            fan_in: inputs,
            kind: ParamKind::Weight,
        });
        if bias {
            self.0.push(ParamSpec {
                name: format!("{name}.bias"),
                shape: vec![outputs],
                fan_in: inputs,
                kind: ParamKind::Bias,
            });
        }
    }

    fn conv3x3(&mut self, name: &str, inputs: usize, outputs: usize) {
        self.0.push(ParamSpec {
            name: format!("{name}.weight"),
            shape: vec![outputs, inputs, 3, 3],
            fan_in: inputs * 9,
            kind: ParamKind::Weight,
        });
        self.0.push(ParamSpec {
            name: format!("{name}.bias"),
            shape: vec![outputs],
            fan_in: inputs * 9,
            kind: ParamKind::Bias,
        });
    }

    fn attention(&mut self, name: &str, width: usize, bias: bool) {
        for p in ["q", "k", "v", "o"] {
            self.linear(&format!("{name}.{p}"), width, width, bias);
        }
    }

    fn ffn(&mut self, name: &str, width: usize, expansion: usize) {
        self.linear(&format!("{name}.l0"), width, width * expansion, true);
        self.linear(&format!("{name}.l1"), width * expansion, width, true);
    }

    fn cn_block(&mut self, name: &str, inputs: usize, outputs: usize) {
        self.linear(&format!("{name}.l0"), inputs, outputs, true);
        self.linear(&format!("{name}.l1"), outputs, outputs, true);
        if inputs != outputs {
            self.linear(&format!("{name}.shortcut"), inputs, outputs, true);
        }
    }
}

/// Every parameter the network reads for `cfg`, in initialization order.
pub fn param_specs(cfg: &NetConfig) -> Vec<ParamSpec> {
    let c = cfg.channels;
    let cf = cfg.backbone_channels;
    let m = cfg.visual_tokens;
    let bias = cfg.attention_bias;
    let mut s = SpecList::default();

    if cfg.uses_visual_branch() {
        let stem = (cf / 2).max(1);
        s.conv3x3("backbone.stem", 3, stem);
        s.conv3x3("backbone.down", stem, cf);
        for b in 0..cfg.backbone_blocks {
            s.conv3x3(&format!("backbone.block{b}.conv1"), cf, cf);
            s.conv3x3(&format!("backbone.block{b}.conv2"), cf, cf);
        }
        s.attention("visual.cross", cf, bias);
        s.linear("visual.mlp.l0", cf, c, true);
        s.linear("visual.mlp.l1", c, c, true);
    }

    for t in 0..cfg.iterations {
        let it = format!("iter{t}");
        let k = cfg.knn[t];
        let input = if t == 0 { 4 } else { 5 };
        s.linear(&format!("{it}.spatial.l0"), input, c, true);
        if cfg.fusion_active(t) {
            s.linear(&format!("{it}.fusion.pool"), c, m, true);
            s.attention(&format!("{it}.fusion.attn"), c, bias);
            s.ffn(&format!("{it}.fusion.ffn"), c, cfg.ffn_expansion);
            s.cn_block(&format!("{it}.fusion.r1"), c, c);
            s.cn_block(&format!("{it}.fusion.r2"), c, c);
            s.linear(&format!("{it}.fusion.unpool"), c, m, true);
        }
        let gab = format!("{it}.ctx.gab");
        s.cn_block(&format!("{gab}.pointcn"), 2 * c, 2 * c);
        s.linear(
            &format!("{gab}.channel.l0"),
            2 * c,
            2 * c / cfg.se_reduction,
            true,
        );
        s.linear(
            &format!("{gab}.channel.l1"),
            2 * c / cfg.se_reduction,
            2 * c,
            true,
        );
        s.linear(&format!("{gab}.spatial.l0"), 2, 8, true);
        s.linear(&format!("{gab}.spatial.l1"), 8, 1, true);
        s.linear(&format!("{gab}.neighbor.l0"), k, k, true);
        s.linear(&format!("{gab}.neighbor.l1"), k, k, true);
        s.linear(&format!("{it}.ctx.aggregate.l0"), 2 * c, c, true);
        s.attention(&format!("{it}.ctx.global.attn"), c, bias);
        s.ffn(&format!("{it}.ctx.global.ffn"), c, cfg.ffn_expansion);
        s.linear(&format!("{it}.ctx.compress"), 2 * c, c, true);
        s.cn_block(&format!("{it}.predictor.cn0"), c, c);
        s.cn_block(&format!("{it}.predictor.cn1"), c, c);
        s.linear(&format!("{it}.predictor.out"), c, 1, true);
    }
    s.0
}

/// Uniform `±sqrt(6 / fan_in)` weights (drawn as `f32` so they survive the
/// binary format bit-exactly) and zero biases.
pub fn init_params(cfg: &NetConfig, seed: u64) -> Result<ParamStore, NnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ParamStoreBuilder::new(cfg.hash());
    for entry in param_specs(cfg) {
        let size: usize = entry.shape.iter().product();
        let data = match entry.kind {
            ParamKind::Bias => vec![0.0; size],
            ParamKind::Weight => {
                let bound = (6.0 / entry.fan_in as f64).sqrt() as f32;
                (0..size)
                    .map(|_| f64::from(rng.random_range(-bound..=bound)))
                    .collect()
            }
        };
        b.insert(&entry.name, &entry.shape, data)?;
    }
    Ok(b.build())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = NetConfig::toy();
        assert_eq!(init_params(&cfg, 5).unwrap(), init_params(&cfg, 5).unwrap());
        assert_ne!(init_params(&cfg, 5).unwrap(), init_params(&cfg, 6).unwrap());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let cfg = NetConfig::toy();
        let store = init_params(&cfg, 1).unwrap();
        let specs = param_specs(&cfg);
        assert_eq!(store.len(), specs.len());
        for entry in specs {
            let t = store.get(&entry.name).unwrap();
            assert_eq!(t.shape(), entry.shape.as_slice());
            let bound = (6.0 / entry.fan_in as f64).sqrt();
            assert!(t
                .data()
                .iter()
                .all(|v| v.is_finite() && v.abs() <= bound + 1e-7));
        }
    }

    #[test]
    fn store_carries_config_hash() {
        let cfg = NetConfig::toy();
        assert_eq!(init_params(&cfg, 0).unwrap().config_hash(), cfg.hash());
    }

    #[test]
    fn builder_rejects_duplicates_and_nan() {
        let mut b = ParamStoreBuilder::new(0);
        b.insert("a", &[1], vec![1.0]).unwrap();
        assert!(matches!(
            b.insert("a", &[1], vec![2.0]),
            Err(NnError::DuplicateName(_))
        ));
        assert!(matches!(
            b.insert("b", &[1], vec![f64::NAN]),
            Err(NnError::NonFinite(_))
        ));
        assert!(b.insert("c", &[2], vec![1.0]).is_err());
    }

    #[test]
    fn linear_shape_errors_name_the_layer() {
        let mut b = ParamStoreBuilder::new(0);
        b.linear("enc.l0", &[&[1.0, 0.0], &[0.0, 1.0]], Some(&[0.5, -0.5]))
            .unwrap();
        let store = b.build();
        let lin = store.root().scope("enc").linear("l0").unwrap();
        let y = lin
            .apply(&DMatrix::from_row_slice(1, 2, &[2.0, 3.0]))
            .unwrap();
        assert_eq!(y.as_slice(), &[2.5, 2.5]);
        let err = lin.apply(&DMatrix::zeros(1, 3)).unwrap_err();
        assert!(err.to_string().contains("enc.l0"));
        assert!(matches!(
            store.root().linear("missing"),
            Err(NnError::MissingParam(_))
        ));
    }
}
