//! Versioned binary model files with a JSON sidecar.
//!
//! Layout (little-endian): magic `SQCM`, `u32` version, `u8` layout tag,
//! `u64` n, `u64` c, `u64` block_dim, `u64` num_actions, `f64` lambda,
//! `u64`-prefixed `f64` arrays for theta and intercepts, then optional
//! sections (scaling record, vocabulary with idf) each behind a `u8` flag,
//! and finally the label names. Strings are `u32`-length-prefixed UTF-8.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{ScalingRecord, TfidfIndex};
use crate::dwsc::{DwscModel, Featurization, RewardParams};
use crate::error::{Error, Result};
use crate::mdp::LinearPolicy;
use crate::text::{LabelMode, TextModel};

const MAGIC: &[u8; 4] = b"SQCM";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Dwsc { n: usize, c: usize, featurization: Featurization },
    Text { vocab_dim: usize, num_labels: usize, mode: LabelMode },
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Dwsc { featurization: Featurization::Unconstrained, .. } => 0,
            ModelKind::Dwsc { featurization: Featurization::Constrained, .. } => 1,
            ModelKind::Text { mode: LabelMode::Mono, .. } => 2,
            ModelKind::Text { mode: LabelMode::Multi, .. } => 3,
        }
    }

    fn dims(self) -> (usize, usize) {
        match self {
            ModelKind::Dwsc { n, c, .. } => (n, c),
            ModelKind::Text { vocab_dim, num_labels, .. } => (vocab_dim, num_labels),
        }
    }

    fn from_tag(tag: u8, a: usize, b: usize) -> Result<Self> {
        Ok(match tag {
            0 => ModelKind::Dwsc { n: a, c: b, featurization: Featurization::Unconstrained },
            1 => ModelKind::Dwsc { n: a, c: b, featurization: Featurization::Constrained },
            2 => ModelKind::Text { vocab_dim: a, num_labels: b, mode: LabelMode::Mono },
            3 => ModelKind::Text { vocab_dim: a, num_labels: b, mode: LabelMode::Multi },
            t => return Err(Error::Format(format!("unknown layout tag {t}"))),
        })
    }
}

/// Everything needed to classify new data with a trained policy.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub kind: ModelKind,
    pub policy: LinearPolicy<f64>,
    /// Feature cost used in training; 0 for text models.
    pub lambda: f64,
    pub scaling: Option<ScalingRecord<f64>>,
    pub vocabulary: Option<TfidfIndex<f64>>,
    pub label_names: Vec<String>,
}

impl SavedModel {
    pub fn dwsc_model(&self) -> Result<DwscModel<f64>> {
        match self.kind {
            ModelKind::Dwsc { n, c, featurization } => {
                let model = DwscModel::new(n, c, featurization, RewardParams::new(self.lambda)?)?;
                model.check_policy(&self.policy)?;
                Ok(model)
            }
            ModelKind::Text { .. } => Err(Error::Format("file holds a text model".into())),
        }
    }

    pub fn text_model(&self) -> Result<TextModel> {
        match self.kind {
            ModelKind::Text { vocab_dim, num_labels, mode } => {
                let model = TextModel::new(vocab_dim, num_labels, mode)?;
                model.check_policy(&self.policy)?;
                Ok(model)
            }
            ModelKind::Dwsc { .. } => Err(Error::Format("file holds a tabular model".into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&VERSION.to_le_bytes());
        w.push(self.kind.tag());
        let (a, b) = self.kind.dims();
        for v in [a, b, self.policy.block_dim(), self.policy.num_actions()] {
            put_u64(&mut w, v);
        }
        w.extend_from_slice(&self.lambda.to_le_bytes());
        put_f64s(&mut w, self.policy.theta());
        put_f64s(&mut w, self.policy.intercepts());
        match &self.scaling {
            Some(s) => {
                w.push(1);
                put_f64s(&mut w, &s.min);
                put_f64s(&mut w, &s.max);
            }
            None => w.push(0),
        }
        match &self.vocabulary {
            Some(v) => {
                w.push(1);
                put_strings(&mut w, v.tokens());
                put_f64s(&mut w, v.idf());
            }
            None => w.push(0),
        }
        put_strings(&mut w, &self.label_names);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a model file".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let tag = r.take(1)?[0];
        let a = r.usize()?;
        let b = r.usize()?;
        let block_dim = r.usize()?;
        let num_actions = r.usize()?;
        let kind = ModelKind::from_tag(tag, a, b)?;
        let lambda = r.f64()?;
        let theta = r.f64s()?;
        let intercepts = r.f64s()?;
        let policy = LinearPolicy::with_intercepts(theta, intercepts, block_dim, num_actions)?;
        let scaling = if r.flag()? {
            let min = r.f64s()?;
            let max = r.f64s()?;
            Some(ScalingRecord { min, max })
        } else {
            None
        };
        let vocabulary = if r.flag()? {
            let tokens = r.strings()?;
            let idf = r.f64s()?;
            Some(TfidfIndex::from_parts(tokens, idf)?)
        } else {
            None
        };
        let label_names = r.strings()?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(SavedModel { kind, policy, lambda, scaling, vocabulary, label_names })
    }

    /// Writes the model and `<path>.json` holding `sidecar`, each atomically.
    pub fn save(&self, path: impl AsRef<Path>, sidecar: &serde_json::Value) -> Result<()> {
        let path = path.as_ref();
        write_atomic(path, &self.to_bytes())?;
        let mut json = serde_json::to_string_pretty(sidecar).map_err(|e| Error::Format(e.to_string()))?;
        json.push('\n');
        write_atomic(sidecar_path(path), json.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn put_u64(w: &mut Vec<u8>, v: usize) {
    w.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64s(w: &mut Vec<u8>, vs: &[f64]) {
    put_u64(w, vs.len());
    for v in vs {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_strings(w: &mut Vec<u8>, ss: &[String]) {
    put_u64(w, ss.len());
    for s in ss {
        w.extend_from_slice(&(s.len() as u32).to_le_bytes());
        w.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format("model file truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Format(format!("length {v} does not fit")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("bad section flag {b}"))),
        }
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let len = self.usize()?;
        if len > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::Format("model file truncated".into()));
        }
        (0..len).map(|_| self.f64()).collect()
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let len = self.usize()?;
        if len > (self.bytes.len() - self.pos) / 4 {
            return Err(Error::Format("model file truncated".into()));
        }
        (0..len)
            .map(|_| {
                let k = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
                String::from_utf8(self.take(k)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SavedModel {
        let model = DwscModel::new(3, 2, Featurization::Constrained, RewardParams::new(0.05).unwrap()).unwrap();
        let theta: Vec<f64> = (0..model.theta_dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..model.num_actions()).map(|i| i as f64 / 10.0).collect();
        SavedModel {
            kind: ModelKind::Dwsc { n: 3, c: 2, featurization: Featurization::Constrained },
            policy: LinearPolicy::with_intercepts(theta, b, model.block_dim(), model.num_actions()).unwrap(),
            lambda: 0.05,
            scaling: Some(ScalingRecord { min: vec![0.0, -1.0, 2.0], max: vec![1.0, 1.0, 2.0] }),
            vocabulary: None,
            label_names: vec!["+1".into(), "-1".into()],
        }
    }

    #[test]
    fn bytes_round_trip() {
        let m = sample();
        let back = SavedModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        back.dwsc_model().unwrap();
        assert!(back.text_model().is_err());
    }

    #[test]
    fn text_round_trip() {
        let model = TextModel::new(2, 2, LabelMode::Multi).unwrap();
        let m = SavedModel {
            kind: ModelKind::Text { vocab_dim: 2, num_labels: 2, mode: LabelMode::Multi },
            policy: model.zero_policy(),
            lambda: 0.0,
            scaling: None,
            vocabulary: Some(TfidfIndex::from_parts(vec!["ä".into(), "b".into()], vec![0.5, 0.0]).unwrap()),
            label_names: vec!["x".into(), "y".into()],
        };
        assert_eq!(SavedModel::from_bytes(&m.to_bytes()).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(SavedModel::from_bytes(&bytes[..cut]), Err(Error::Format(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SavedModel::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(SavedModel::from_bytes(&extra).is_err());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = sample();
        m.save(&path, &serde_json::json!({"lambda": 0.05})).unwrap();
        assert_eq!(SavedModel::load(&path).unwrap(), m);
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side["lambda"], 0.05);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }
}
