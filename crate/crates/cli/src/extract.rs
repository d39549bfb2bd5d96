//! Feature extraction from a CSV manifest into a dataset bundle.
//!
//! Manifest columns: `id, split, transcript, audio, visual, sentiment,
//! happy, sad, angry, fear, disgust, surprise`. The `transcript`, `audio`
//! and `visual` columns are optional; each one present adds a modality.
//! Paths are relative to the manifest's directory. Transcripts are UTF-8
//! text files, audio is WAV, and visual features are `t × w` TBJT tensors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use tbje_core::features::{
    mel_spectrogram, pad_truncate, resample_linear, tokenize_flagged, ModalityBatch, Vocabulary, EMBEDDING_DIM,
};
use tbje_core::training::Label;
use tbje_core::{Modality, Tensor};

use crate::bundle::{write_bundle, Manifest, ModalityEntry, SplitData, VocabEntry, SPLITS};
use crate::config::FeatureSection;
use crate::error::{config_err, format_err, io_err, CliError, Result};

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    split: String,
    #[serde(default)]
    transcript: Option<String>,
    #[serde(default)]
    audio: Option<String>,
    #[serde(default)]
    visual: Option<String>,
    sentiment: f64,
    happy: u8,
    sad: u8,
    angry: u8,
    fear: u8,
    disgust: u8,
    surprise: u8,
}

struct Entry {
    id: String,
    split: String,
    label: Label,
    paths: BTreeMap<Modality, PathBuf>,
}

/// Raw per-example features before vocabulary lookup and padding.
struct Raw {
    tokens: Option<Vec<String>>,
    empty_transcript: bool,
    mel: Option<Tensor>,
    short_audio: bool,
    visual: Option<Tensor>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractReport {
    pub examples: BTreeMap<String, usize>,
    pub modalities: Vec<Modality>,
    /// Ids whose transcript had no usable token.
    pub empty_transcripts: Vec<String>,
    /// Ids whose audio was shorter than one analysis window.
    pub short_audio: Vec<String>,
    /// Training tokens that fell back to a zero vector.
    pub missing_embeddings: usize,
}

impl ExtractReport {
    pub fn summary(&self) -> String {
        let counts: Vec<String> = self.examples.iter().map(|(k, v)| format!("{k} {v}")).collect();
        let mods: Vec<String> = self.modalities.iter().map(|m| m.letter().to_string()).collect();
        format!(
            "extracted {} ({}); {} empty transcript(s), {} short audio file(s), {} token(s) without embeddings",
            counts.join(", "),
            mods.join("+"),
            self.empty_transcripts.len(),
            self.short_audio.len(),
            self.missing_embeddings
        )
    }
}

fn flag(v: u8, id: &str, name: &str) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(format_err(format!("example {id}: {name} flag {v} is not 0 or 1"))),
    }
}

fn read_manifest(path: &Path) -> Result<(Vec<Modality>, Vec<Entry>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => format_err(format!("{}: {other:?}", path.display())),
    })?;
    let headers = reader.headers().map_err(|e| format_err(format!("{}: {e}", path.display())))?.clone();
    let has = |c: &str| headers.iter().any(|h| h == c);
    let modalities: Vec<Modality> = [
        (Modality::Linguistic, "transcript"),
        (Modality::Acoustic, "audio"),
        (Modality::Visual, "visual"),
    ]
    .into_iter()
    .filter(|(_, c)| has(c))
    .map(|(m, _)| m)
    .collect();
    if modalities.is_empty() {
        return Err(format_err(format!("{}: no transcript, audio or visual column", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| format_err(format!("{} row {}: {e}", path.display(), line + 1)))?;
        if !SPLITS.contains(&row.split.as_str()) {
            return Err(format_err(format!("example {}: unknown split {:?} (expected train, valid or test)", row.id, row.split)));
        }
        if !seen.insert(row.id.clone()) {
            return Err(format_err(format!("example id {} appears twice", row.id)));
        }
        let emotions = [
            flag(row.happy, &row.id, "happy")?,
            flag(row.sad, &row.id, "sad")?,
            flag(row.angry, &row.id, "angry")?,
            flag(row.fear, &row.id, "fear")?,
            flag(row.disgust, &row.id, "disgust")?,
            flag(row.surprise, &row.id, "surprise")?,
        ];
        let label = Label::new(row.sentiment, emotions).map_err(|e| format_err(format!("example {}: {e}", row.id)))?;
        let mut paths = BTreeMap::new();
        for (m, value) in [
            (Modality::Linguistic, &row.transcript),
            (Modality::Acoustic, &row.audio),
            (Modality::Visual, &row.visual),
        ] {
            if !modalities.contains(&m) {
                continue;
            }
            match value.as_deref().map(str::trim) {
                Some(p) if !p.is_empty() => {
                    paths.insert(m, base.join(p));
                }
                _ => return Err(format_err(format!("example {}: empty {m} path", row.id))),
            }
        }
        entries.push(Entry { id: row.id, split: row.split, label, paths });
    }
    Ok((modalities, entries))
}

fn read_wav(path: &Path) -> Result<(Vec<f64>, u32)> {
    let bad = |e: hound::Error| match e {
        hound::Error::IoError(io) => io_err(path, io),
        other => format_err(format!("{}: {other}", path.display())),
    };
    let mut reader = hound::WavReader::open(path).map_err(bad)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>(),
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(i32::from(spec.bits_per_sample) - 1);
            reader.samples::<i32>().map(|s| s.map(|v| f64::from(v) / scale)).collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(bad)?;
    let channels = usize::from(spec.channels.max(1));
    let mono = interleaved.chunks(channels).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    Ok((mono, spec.sample_rate))
}

fn read_raw(entry: &Entry, features: &FeatureSection) -> Result<Raw> {
    let mut raw = Raw { tokens: None, empty_transcript: false, mel: None, short_audio: false, visual: None };
    if let Some(p) = entry.paths.get(&Modality::Linguistic) {
        let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        let t = tokenize_flagged(&text);
        raw.empty_transcript = t.was_empty;
        raw.tokens = Some(t.tokens);
    }
    if let Some(p) = entry.paths.get(&Modality::Acoustic) {
        let (samples, rate) = read_wav(p)?;
        if samples.is_empty() {
            return Err(format_err(format!("{}: no audio samples", p.display())));
        }
        let samples = resample_linear(&samples, rate, features.mel.sample_rate)?;
        let out = mel_spectrogram(&samples, &features.mel).map_err(|e| format_err(format!("{}: {e}", p.display())))?;
        raw.short_audio = out.short_input;
        raw.mel = Some(out.spectrogram);
    }
    if let Some(p) = entry.paths.get(&Modality::Visual) {
        let bytes = std::fs::read(p).map_err(|e| io_err(p, e))?;
        let t = Tensor::from_bytes(&bytes).map_err(|e| format_err(format!("{}: {e}", p.display())))?;
        if t.rank() != 2 || t.rows() == 0 || t.cols() == 0 {
            return Err(format_err(format!("{}: visual features must be t × w, got {:?}", p.display(), t.shape())));
        }
        raw.visual = Some(t);
    }
    Ok(raw)
}

/// Reads `manifest`, extracts every modality it lists and writes a bundle
/// to `out`. The vocabulary and the acoustic scale come from the training
/// split only. `embeddings` is required when transcripts are present.
pub fn extract_features(
    manifest: &Path,
    out: &Path,
    embeddings: Option<&Path>,
    features: &FeatureSection,
) -> Result<(Manifest, ExtractReport)> {
    let (modalities, entries) = read_manifest(manifest)?;
    let has = |m| modalities.contains(&m);
    if has(Modality::Linguistic) && embeddings.is_none() {
        return Err(config_err("transcripts need an embedding file (--embeddings or paths.embeddings)"));
    }
    let mut missing: Vec<PathBuf> = entries.iter().flat_map(|e| e.paths.values()).filter(|p| !p.is_file()).cloned().collect();
    if let Some(p) = embeddings.filter(|_| has(Modality::Linguistic)) {
        if !p.is_file() {
            missing.insert(0, p.to_path_buf());
        }
    }
    if !missing.is_empty() {
        return Err(CliError::MissingFiles(missing));
    }
    if !entries.iter().any(|e| e.split == "train") {
        return Err(format_err("the manifest has no train examples"));
    }

    let raws = entries.par_iter().map(|e| read_raw(e, features)).collect::<Result<Vec<_>>>()?;
    let mut report = ExtractReport { modalities: modalities.clone(), ..Default::default() };
    for (e, r) in entries.iter().zip(&raws) {
        *report.examples.entry(e.split.clone()).or_default() += 1;
        if r.empty_transcript {
            report.empty_transcripts.push(e.id.clone());
        }
        if r.short_audio {
            report.short_audio.push(e.id.clone());
        }
    }

    let is_train = |i: &usize| entries[*i].split == "train";
    let vocab = match embeddings.filter(|_| has(Modality::Linguistic)) {
        Some(path) => {
            let train: Vec<Vec<String>> = (0..entries.len())
                .filter(is_train)
                .map(|i| raws[i].tokens.clone().expect("linguistic rows carry tokens"))
                .collect();
            let v = Vocabulary::build_from_path(&train, path, EMBEDDING_DIM)?;
            report.missing_embeddings = v.missing().len();
            Some(v)
        }
        None => None,
    };

    let floor = features.mel.log_floor.ln();
    let acoustic_max = has(Modality::Acoustic).then(|| {
        (0..entries.len())
            .filter(is_train)
            .flat_map(|i| raws[i].mel.as_ref().expect("acoustic rows carry spectrograms").data().iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let scale = acoustic_max.map(|m| if m > floor { m - floor } else { 1.0 });

    let visual_width = match has(Modality::Visual) {
        true => {
            let widths: BTreeSet<usize> = raws.iter().filter_map(|r| r.visual.as_ref().map(Tensor::cols)).collect();
            if widths.len() != 1 {
                return Err(format_err(format!("visual feature files disagree on width: {widths:?}")));
            }
            widths.into_iter().next()
        }
        false => None,
    };

    let entries_meta: Vec<ModalityEntry> = modalities
        .iter()
        .map(|&m| ModalityEntry {
            modality: m,
            width: match m {
                Modality::Linguistic => EMBEDDING_DIM,
                Modality::Acoustic => features.mel.n_mels,
                Modality::Visual => visual_width.expect("width checked above"),
            },
            length: features.length(m),
        })
        .collect();

    let sequence = |m: Modality, r: &Raw| -> Result<Tensor> {
        Ok(match m {
            Modality::Linguistic => vocab.as_ref().expect("built above").embed(r.tokens.as_ref().expect("tokens"))?,
            Modality::Acoustic => {
                let mel = r.mel.as_ref().expect("spectrogram");
                let s = scale.expect("scale computed above");
                let data = mel.data().iter().map(|v| (v - floor) / s).collect();
                Tensor::new(mel.shape().to_vec(), data)?
            }
            Modality::Visual => r.visual.clone().expect("visual features"),
        })
    };

    let mut splits = BTreeMap::new();
    for name in SPLITS {
        let idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].split == name).collect();
        if idx.is_empty() {
            continue;
        }
        let batches = entries_meta
            .iter()
            .map(|meta| {
                let rows = idx
                    .iter()
                    .map(|&i| Ok(pad_truncate(&sequence(meta.modality, &raws[i])?, meta.length)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ModalityBatch::from_examples(meta.modality, rows)?)
            })
            .collect::<Result<Vec<_>>>()?;
        splits.insert(
            name.to_string(),
            SplitData {
                ids: idx.iter().map(|&i| entries[i].id.clone()).collect(),
                labels: idx.iter().map(|&i| entries[i].label).collect(),
                batches,
            },
        );
    }

    let mut meta = Manifest::new(entries_meta);
    meta.acoustic_max = acoustic_max;
    if let Some(v) = &vocab {
        meta.vocabulary = Some(VocabEntry { file: String::new(), size: 0, sha256: String::new(), missing: v.missing().len() });
    }
    let written = write_bundle(out, meta, vocab.as_ref().map(|v| v.tokens()), &splits)?;
    Ok((written, report))
}
