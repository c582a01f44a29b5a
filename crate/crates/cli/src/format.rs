//! Line-delimited JSON files shared by the subcommands.
//!
//! Every file starts with a [`Header`] line carrying the tool version and the
//! resolved configuration that produced it. The remaining lines are records.
//! Floating-point data is written with 17 significant digits, which reloads
//! bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use nalgebra::{Matrix3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::Value;

use corrprune_core::geometry::{Correspondence, CorrespondenceSet, EssentialMatrix, RelativePose};
use corrprune_core::LabeledPair;

pub const TOOL: &str = "corrprune";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FILE_FORMAT: u32 = 1;

/// A finite `f64` serialized with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::Error;
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!(
                "cannot serialize non-finite value {}",
                self.0
            )));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for F17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(F17)
    }
}

pub fn f17s<const N: usize>(v: [f64; N]) -> [F17; N] {
    v.map(F17)
}

pub fn f17_vec(v: &[f64]) -> Vec<F17> {
    v.iter().copied().map(F17).collect()
}

pub fn plain<const N: usize>(v: &[F17; N]) -> [f64; N] {
    v.map(|x| x.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Dataset,
    Predictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub kind: FileKind,
    pub tool: String,
    pub version: String,
    pub format: u32,
    pub config: Value,
}

impl Header {
    pub fn new(kind: FileKind, config: Value) -> Self {
        Self {
            kind,
            tool: TOOL.into(),
            version: VERSION.into(),
            format: FILE_FORMAT,
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    /// Rotation, row-major.
    pub r: [F17; 9],
    /// Unit translation direction.
    pub t: [F17; 3],
}

impl PoseRecord {
    pub fn from_pose(p: &RelativePose) -> Self {
        let r = p.rotation();
        let t = p.translation();
        Self {
            r: f17s([
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ]),
            t: f17s([t.x, t.y, t.z]),
        }
    }

    pub fn to_pose(&self) -> Result<RelativePose> {
        let r = Matrix3::from_row_slice(&plain(&self.r));
        let t = Vector3::from_row_slice(&plain(&self.t));
        Ok(RelativePose::new(r, t)?)
    }
}

/// One synthetic pair with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: usize,
    pub seed: u64,
    pub pose: PoseRecord,
    /// Ground-truth essential matrix, row-major.
    pub essential: [F17; 9],
    /// `[xa, ya, xb, yb]` in normalized coordinates.
    pub correspondences: Vec<[F17; 4]>,
    pub labels: Vec<bool>,
}

impl DatasetRecord {
    pub fn from_pair(id: usize, seed: u64, pair: &LabeledPair) -> Self {
        Self {
            id,
            seed,
            pose: PoseRecord::from_pose(&pair.gt_pose),
            essential: f17s(pair.gt_essential.to_row_major()),
            correspondences: pair
                .correspondences
                .items()
                .iter()
                .map(|c| f17s(c.as_array()))
                .collect(),
            labels: pair
                .correspondences
                .labels()
                .map(<[bool]>::to_vec)
                .unwrap_or_default(),
        }
    }

    pub fn to_pair(&self) -> Result<LabeledPair> {
        let items = self
            .correspondences
            .iter()
            .map(|c| Correspondence::new(c[0].0, c[1].0, c[2].0, c[3].0))
            .collect();
        let correspondences = CorrespondenceSet::with_labels(items, self.labels.clone())
            .with_context(|| format!("pair {}", self.id))?;
        Ok(LabeledPair {
            correspondences,
            gt_pose: self
                .pose
                .to_pose()
                .with_context(|| format!("pair {}", self.id))?,
            gt_essential: EssentialMatrix::from_row_major(&plain(&self.essential)),
        })
    }
}

/// Estimation result for one pair, produced by `infer` or `ransac`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: usize,
    /// Number of input correspondences.
    pub n: usize,
    /// Candidates entering each stage, starting with `n`.
    pub candidate_counts: Vec<usize>,
    /// Input indices of the candidates used by the final regression.
    pub final_indices: Vec<usize>,
    /// Regression weights over `final_indices`.
    pub probs: Vec<F17>,
    /// Estimated essential matrix, row-major; absent on failure.
    pub essential: Option<[F17; 9]>,
    /// Verification flag per input correspondence.
    pub verified: Vec<bool>,
    pub pose: Option<PoseRecord>,
    /// Why estimation failed, if it did.
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn failed(id: usize, n: usize, candidate_counts: Vec<usize>, error: String) -> Self {
        Self {
            id,
            n,
            candidate_counts,
            final_indices: Vec::new(),
            probs: Vec::new(),
            essential: None,
            verified: vec![false; n],
            pose: None,
            error: Some(error),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: &Header, records: &[T]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, kind: FileKind) -> Result<(Header, Vec<T>)> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    parse_jsonl(BufReader::new(file), kind).with_context(|| format!("in {}", path.display()))
}

pub fn parse_jsonl<T: DeserializeOwned, R: BufRead>(
    reader: R,
    kind: FileKind,
) -> Result<(Header, Vec<T>)> {
    let mut lines = reader.lines().enumerate();
    let Some((_, first)) = lines.next() else {
        bail!("empty file");
    };
    let header: Header = serde_json::from_str(&first?).context("line 1: bad header")?;
    ensure!(
        header.kind == kind,
        "line 1: expected a {kind:?} file, found {:?}",
        header.kind
    );
    ensure!(
        header.tool == TOOL,
        "line 1: written by {:?}, not {TOOL}",
        header.tool
    );
    ensure!(
        header.format == FILE_FORMAT,
        "line 1: unsupported file format {} (expected {FILE_FORMAT})",
        header.format
    );
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?);
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use corrprune_core::synthgen::{generate_pair, SceneConfig};

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [
            0.1,
            -1.0 / 3.0,
            1e-300,
            6.02214076e23,
            0.0,
            -0.0,
            f64::MIN_POSITIVE,
        ] {
            let s = serde_json::to_string(&F17(v)).unwrap();
            let mantissa = s
                .trim_start_matches('-')
                .split('e')
                .next()
                .unwrap()
                .replace('.', "");
            assert_eq!(mantissa.len(), 17, "{s}");
            let back: F17 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.0.to_bits(), v.to_bits(), "{s}");
        }
        assert!(serde_json::to_string(&F17(f64::NAN)).is_err());
    }

    #[test]
    fn dataset_record_round_trip() {
        let pair = generate_pair(&SceneConfig {
            n_points: 40,
            noise_sigma: 1e-3,
            seed: 3,
            ..SceneConfig::default()
        })
        .unwrap();
        let rec = DatasetRecord::from_pair(7, 3, &pair);
        let text = serde_json::to_string(&rec).unwrap();
        let back: DatasetRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.to_pair().unwrap(), pair);
    }

    #[test]
    fn header_checks() {
        let rec = Header::new(FileKind::Predictions, Value::Null);
        let text = format!("{}\n", serde_json::to_string(&rec).unwrap());
        let err = parse_jsonl::<DatasetRecord, _>(text.as_bytes(), FileKind::Dataset).unwrap_err();
        assert!(format!("{err:#}").contains("expected a Dataset file"));
        assert!(parse_jsonl::<DatasetRecord, _>(&b""[..], FileKind::Dataset).is_err());
        let (h, recs) =
            parse_jsonl::<PredictionRecord, _>(text.as_bytes(), FileKind::Predictions).unwrap();
        assert_eq!(h, rec);
        assert!(recs.is_empty());
    }
}
