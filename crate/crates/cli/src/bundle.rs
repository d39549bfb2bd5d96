//! Dataset bundle: pre-padded feature tensors, masks and labels per split.
//!
//! ```text
//! <dir>/manifest.json                   format version, modalities, split sizes
//! <dir>/vocab.txt                       one token per line (linguistic bundles)
//! <dir>/<split>/ids.txt                 example ids, one per line
//! <dir>/<split>/labels.tbjt             n × 7: raw sentiment, then six 0/1 emotion flags
//! <dir>/<split>/<modality>.features.tbjt  n × N × width
//! <dir>/<split>/<modality>.mask.tbjt      n × N, 1 for real rows and 0 for padding
//! ```
//!
//! Tensor files use the `TBJT` layout. Row `i` of every file in a split
//! belongs to the `i`-th id of `ids.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tbje_core::features::ModalityBatch;
use tbje_core::training::{Example, Label, EMOTIONS};
use tbje_core::{Modality, Tensor};

use crate::error::{format_err, io_err, Result};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityEntry {
    pub modality: Modality,
    pub width: usize,
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEntry {
    pub file: String,
    pub size: usize,
    /// Hex SHA-256 of the vocabulary file.
    pub sha256: String,
    /// Training tokens without a pretrained vector (zero fallback).
    pub missing: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub modalities: Vec<ModalityEntry>,
    /// Example count per split.
    pub splits: BTreeMap<String, usize>,
    pub labels: Vec<String>,
    pub vocabulary: Option<VocabEntry>,
    /// Largest log-mel value of the training split, used to scale acoustic
    /// features into `[0, 1]`.
    pub acoustic_max: Option<f64>,
}

impl Manifest {
    pub fn new(modalities: Vec<ModalityEntry>) -> Self {
        let mut labels = vec!["sentiment".to_string()];
        labels.extend(EMOTIONS.iter().map(|e| e.to_string()));
        Self {
            format_version: BUNDLE_FORMAT_VERSION,
            modalities,
            splits: BTreeMap::new(),
            labels,
            vocabulary: None,
            acoustic_max: None,
        }
    }

    pub fn modality(&self, m: Modality) -> Option<&ModalityEntry> {
        self.modalities.iter().find(|e| e.modality == m)
    }

    pub fn modality_letters(&self) -> String {
        self.modalities.iter().map(|e| e.modality.letter().to_string()).collect::<Vec<_>>().join("+")
    }

    pub fn vocab_hash(&self) -> Option<&str> {
        self.vocabulary.as_ref().map(|v| v.sha256.as_str())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }
}

/// One split held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitData {
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    /// One batch per modality, in manifest order.
    pub batches: Vec<ModalityBatch>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Examples carrying the listed modalities, in that order.
    pub fn examples(&self, modalities: &[Modality]) -> Result<Vec<Example>> {
        let batches = modalities
            .iter()
            .map(|&m| {
                self.batches
                    .iter()
                    .find(|b| b.modality == m)
                    .ok_or_else(|| format_err(format!("split has no {m} features")))
            })
            .collect::<Result<Vec<_>>>()?;
        (0..self.len())
            .map(|i| {
                let inputs = batches.iter().map(|b| b.example(i)).collect::<tbje_core::Result<Vec<_>>>()?;
                Ok(Example { inputs, label: self.labels[i] })
            })
            .collect()
    }

    fn label_tensor(&self) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = self
            .labels
            .iter()
            .map(|l| {
                let mut r = vec![l.sentiment];
                r.extend(l.emotions.iter().map(|&e| f64::from(u8::from(e))));
                r
            })
            .collect();
        Ok(Tensor::from_rows(&rows)?)
    }

    fn labels_from(t: &Tensor) -> Result<Vec<Label>> {
        if t.rank() != 2 || t.cols() != 7 {
            return Err(format_err(format!("labels must be n × 7, got {:?}", t.shape())));
        }
        (0..t.rows())
            .map(|i| {
                let r = t.row(i);
                let mut emotions = [false; 6];
                for (j, e) in emotions.iter_mut().enumerate() {
                    *e = match r[j + 1] {
                        0.0 => false,
                        1.0 => true,
                        v => return Err(format_err(format!("label row {i}: emotion flag {v} is not 0 or 1"))),
                    };
                }
                Label::new(r[0], emotions).map_err(|e| format_err(format!("label row {i}: {e}")))
            })
            .collect()
    }
}

fn mask_tensor(b: &ModalityBatch) -> Result<Tensor> {
    let data = b.mask().iter().map(|&m| f64::from(u8::from(m))).collect();
    Ok(Tensor::new(vec![b.len(), b.length()], data)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_err(path, e))
}

/// Writes a bundle; `vocab` is the token list for linguistic bundles and
/// its hash is recorded in the manifest. Splits must match the manifest's
/// modalities.
pub fn write_bundle(
    dir: &Path,
    mut manifest: Manifest,
    vocab: Option<&[String]>,
    splits: &BTreeMap<String, SplitData>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    manifest.splits = splits.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    if let Some(tokens) = vocab {
        let mut text = tokens.join("\n");
        text.push('\n');
        let missing = manifest.vocabulary.as_ref().map_or(0, |v| v.missing);
        manifest.vocabulary = Some(VocabEntry {
            file: "vocab.txt".into(),
            size: tokens.len(),
            sha256: sha256_hex(text.as_bytes()),
            missing,
        });
        write_file(&dir.join("vocab.txt"), text.as_bytes())?;
    }
    for (name, split) in splits {
        check_split(&manifest, name, split)?;
        let sub = dir.join(name);
        fs::create_dir_all(&sub).map_err(|e| io_err(&sub, e))?;
        let mut ids = split.ids.join("\n");
        ids.push('\n');
        write_file(&sub.join("ids.txt"), ids.as_bytes())?;
        write_file(&sub.join("labels.tbjt"), &split.label_tensor()?.to_bytes())?;
        for b in &split.batches {
            write_file(&sub.join(format!("{}.features.tbjt", b.modality)), &b.features().to_bytes())?;
            write_file(&sub.join(format!("{}.mask.tbjt", b.modality)), &mask_tensor(b)?.to_bytes())?;
        }
    }
    write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
    Ok(manifest)
}

fn check_split(manifest: &Manifest, name: &str, split: &SplitData) -> Result<()> {
    if split.is_empty() {
        return Err(format_err(format!("split {name} is empty")));
    }
    if split.labels.len() != split.len() {
        return Err(format_err(format!("split {name}: {} labels for {} ids", split.labels.len(), split.len())));
    }
    if split.batches.len() != manifest.modalities.len() {
        return Err(format_err(format!("split {name}: {} modalities, manifest lists {}", split.batches.len(), manifest.modalities.len())));
    }
    for (b, e) in split.batches.iter().zip(&manifest.modalities) {
        if b.modality != e.modality || b.length() != e.length || b.width() != e.width || b.len() != split.len() {
            return Err(format_err(format!(
                "split {name}: {} batch is {}×{}×{}, manifest expects {} {}×{}×{}",
                b.modality,
                b.len(),
                b.length(),
                b.width(),
                e.modality,
                split.len(),
                e.length,
                e.width
            )));
        }
    }
    Ok(())
}

/// A bundle on disk.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let path = dir.join("manifest.json");
        let bytes = read_file(&path)?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes).map_err(|e| format_err(format!("{}: {e}", path.display())))?;
        if manifest.format_version != BUNDLE_FORMAT_VERSION {
            return Err(format_err(format!(
                "bundle format version {} is not supported (expected {BUNDLE_FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        if let Some(v) = &manifest.vocabulary {
            let vpath = dir.join(&v.file);
            let hash = sha256_hex(&read_file(&vpath)?);
            if hash != v.sha256 {
                return Err(format_err(format!("{}: hash {hash} does not match the manifest", vpath.display())));
            }
        }
        Ok(Self { dir, manifest })
    }

    pub fn has_split(&self, name: &str) -> bool {
        self.manifest.splits.contains_key(name)
    }

    pub fn read_split(&self, name: &str) -> Result<SplitData> {
        let n = *self
            .manifest
            .splits
            .get(name)
            .ok_or_else(|| format_err(format!("bundle {} has no {name} split", self.dir.display())))?;
        let sub = self.dir.join(name);
        let ids_path = sub.join("ids.txt");
        let text = String::from_utf8(read_file(&ids_path)?)
            .map_err(|e| format_err(format!("{}: {e}", ids_path.display())))?;
        let ids: Vec<String> = text.lines().map(str::to_string).collect();
        if ids.len() != n {
            return Err(format_err(format!("{}: {} ids, manifest says {n}", ids_path.display(), ids.len())));
        }
        let labels = SplitData::labels_from(&load(&sub.join("labels.tbjt"))?)?;
        if labels.len() != n {
            return Err(format_err(format!("split {name}: {} label rows for {n} ids", labels.len())));
        }
        let batches = self
            .manifest
            .modalities
            .iter()
            .map(|e| {
                let features = load(&sub.join(format!("{}.features.tbjt", e.modality)))?;
                if features.shape() != [n, e.length, e.width] {
                    return Err(format_err(format!(
                        "split {name}: {} features are {:?}, expected [{n}, {}, {}]",
                        e.modality,
                        features.shape(),
                        e.length,
                        e.width
                    )));
                }
                let mask_t = load(&sub.join(format!("{}.mask.tbjt", e.modality)))?;
                if mask_t.shape() != [n, e.length] {
                    return Err(format_err(format!("split {name}: {} mask is {:?}", e.modality, mask_t.shape())));
                }
                let mask = mask_t
                    .data()
                    .iter()
                    .map(|&v| match v {
                        0.0 => Ok(false),
                        1.0 => Ok(true),
                        _ => Err(format_err(format!("split {name}: {} mask holds {v}", e.modality))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ModalityBatch::new(e.modality, features, mask)
                    .map_err(|err| format_err(format!("split {name}: {err}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SplitData { ids, labels, batches })
    }

    pub fn vocabulary(&self) -> Result<Option<Vec<String>>> {
        match &self.manifest.vocabulary {
            None => Ok(None),
            Some(v) => {
                let path = self.dir.join(&v.file);
                let text = String::from_utf8(read_file(&path)?).map_err(|e| format_err(format!("{}: {e}", path.display())))?;
                Ok(Some(text.lines().map(str::to_string).collect()))
            }
        }
    }
}

fn load(path: &Path) -> Result<Tensor> {
    Tensor::from_bytes(&read_file(path)?).map_err(|e| format_err(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_survive_the_tensor_encoding() {
        let labels = vec![
            Label::new(-3.0, [true, false, false, false, false, true]).unwrap(),
            Label::new(0.4, [false; 6]).unwrap(),
        ];
        let split = SplitData { ids: vec!["a".into(), "b".into()], labels: labels.clone(), batches: vec![] };
        let t = split.label_tensor().unwrap();
        assert_eq!(t.row(0), &[-3.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(SplitData::labels_from(&t).unwrap(), labels);
        let bad = Tensor::matrix(1, 7, vec![0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(SplitData::labels_from(&bad).is_err());
    }

    #[test]
    fn manifest_json_round_trips() {
        let mut m = Manifest::new(vec![ModalityEntry { modality: Modality::Acoustic, width: 80, length: 40 }]);
        m.splits.insert("train".into(), 3);
        m.acoustic_max = Some(2.5);
        let back: Manifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.labels.len(), 7);
        assert_eq!(m.modality_letters(), "A");
    }
}
