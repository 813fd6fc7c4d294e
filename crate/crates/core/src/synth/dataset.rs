use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Renderer, SynthError, SynthParams};
use crate::state::EyeState;
use crate::strip::{EyeStrip, StripError};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "val")]
    Val,
    #[serde(rename = "test-known")]
    TestKnown,
    #[serde(rename = "test-unknown")]
    TestUnknown,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::TestKnown, Split::TestUnknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::TestKnown => "test-known",
            Split::TestUnknown => "test-unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|sp| sp.as_str() == s)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Images per class for each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test_known: usize,
    pub test_unknown: usize,
}

impl SplitCounts {
    pub fn uniform(per_class: usize) -> Self {
        Self {
            train: per_class,
            val: per_class,
            test_known: per_class,
            test_unknown: per_class,
        }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::TestKnown => self.test_known,
            Split::TestUnknown => self.test_unknown,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Relative to the dataset root.
    pub path: String,
    pub label: EyeState,
    pub split: Split,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn image_path(&self, record: &ManifestRecord) -> PathBuf {
        self.root.join(&record.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordIssue {
    /// Zero-based line index in the manifest.
    pub index: usize,
    pub message: String,
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.index, self.message)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: StripError,
    },
    #[error("invalid manifest:\n{}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))]
    Records(Vec<RecordIssue>),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders `counts` images per class per split under `root` and writes the
/// manifest. Test-unknown images use [`SynthParams::unknown_users`].
pub fn generate_dataset(
    root: &Path,
    counts: &SplitCounts,
    params: &SynthParams,
    master_seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    let known = Renderer::new(params.clone())?;
    let unknown = Renderer::new(params.unknown_users())?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut used = HashSet::new();
    let mut records = Vec::new();

    for split in Split::ALL {
        let renderer = if split == Split::TestUnknown { &unknown } else { &known };
        for label in EyeState::ALL {
            let dir = root.join("images").join(split.as_str()).join(label.code().to_string());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for _ in 0..counts.get(split) {
                let seed = loop {
                    let s: u64 = rng.gen();
                    if used.insert(s) {
                        break s;
                    }
                };
                let rel = format!("images/{}/{}/{}.png", split.as_str(), label.code(), seed);
                let path = root.join(&rel);
                renderer
                    .render(label, seed)
                    .save_png(&path)
                    .map_err(|source| match source {
                        StripError::Io { source, .. } => DatasetError::Io { path: path.clone(), source },
                        other => DatasetError::Image { path: path.clone(), source: other },
                    })?;
                records.push(ManifestRecord { path: rel, label, split, seed });
            }
        }
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        records,
    };
    write_manifest(&manifest)?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest) -> Result<(), DatasetError> {
    let path = manifest.root.join(MANIFEST_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    for r in &manifest.records {
        let line = serde_json::to_string(r).expect("manifest record serializes");
        writeln!(w, "{line}").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}

#[derive(Deserialize)]
struct RawRecord {
    path: String,
    label: i64,
    split: Split,
    seed: u64,
}

/// Reads and validates a manifest. Paths resolve against the manifest's
/// directory. Every bad record is reported, not just the first.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                issues.push(RecordIssue { index, message: format!("unparseable: {e}") });
                continue;
            }
        };
        let label = match EyeState::new(raw.label) {
            Ok(l) => l,
            Err(e) => {
                issues.push(RecordIssue { index, message: e.to_string() });
                continue;
            }
        };
        if !seen.insert(raw.path.clone()) {
            issues.push(RecordIssue { index, message: format!("duplicate path {}", raw.path) });
            continue;
        }
        if !root.join(&raw.path).is_file() {
            issues.push(RecordIssue { index, message: format!("missing image file {}", raw.path) });
            continue;
        }
        records.push(ManifestRecord { path: raw.path, label, split: raw.split, seed: raw.seed });
    }
    if !issues.is_empty() {
        return Err(DatasetError::Records(issues));
    }
    Ok(DatasetManifest { root, records })
}

/// Decoded `(strip, label)` pairs of one split, in manifest order or
/// shuffled by `shuffle_seed`.
pub fn iterate<'a>(
    manifest: &'a DatasetManifest,
    split: Split,
    shuffle_seed: Option<u64>,
) -> impl Iterator<Item = Result<(EyeStrip, EyeState), DatasetError>> + 'a {
    let mut records: Vec<&ManifestRecord> = manifest.split(split).collect();
    if let Some(seed) = shuffle_seed {
        records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    records.into_iter().map(move |r| {
        let path = manifest.image_path(r);
        EyeStrip::load_png(&path)
            .map(|s| (s, r.label))
            .map_err(|source| DatasetError::Image { path, source })
    })
}

pub fn load_split(manifest: &DatasetManifest, split: Split) -> Result<Vec<(EyeStrip, EyeState)>, DatasetError> {
    iterate(manifest, split, None).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn small_counts() -> SplitCounts {
        SplitCounts { train: 2, val: 1, test_known: 1, test_unknown: 1 }
    }

    #[test]
    fn counts_layout_and_histogram() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(dir.path(), &SplitCounts::uniform(2), &SynthParams::default(), 7).unwrap();
        assert_eq!(m.records.len(), 2 * 10 * 4);
        for split in Split::ALL {
            let mut hist = BTreeMap::new();
            for r in m.split(split) {
                *hist.entry(r.label).or_insert(0) += 1;
                assert_eq!(r.path, format!("images/{}/{}/{}.png", split, r.label.code(), r.seed));
            }
            assert_eq!(hist.len(), 10);
            assert!(hist.values().all(|&c| c == 2));
        }
        let seeds: HashSet<u64> = m.records.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), m.records.len());
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_dataset(a.path(), &small_counts(), &SynthParams::default(), 99).unwrap();
        let mb = generate_dataset(b.path(), &small_counts(), &SynthParams::default(), 99).unwrap();
        assert_eq!(ma.records, mb.records);
        for r in &ma.records {
            assert_eq!(fs::read(a.path().join(&r.path)).unwrap(), fs::read(b.path().join(&r.path)).unwrap());
        }
        assert_eq!(
            fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
            fs::read(b.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn load_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let params = SynthParams::default();
        generate_dataset(dir.path(), &small_counts(), &params, 3).unwrap();
        let m = load_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        let known = Renderer::new(params.clone()).unwrap();
        let unknown = Renderer::new(params.unknown_users()).unwrap();
        for split in Split::ALL {
            let records: Vec<_> = m.split(split).cloned().collect();
            let loaded = load_split(&m, split).unwrap();
            assert_eq!(records.len(), loaded.len());
            for (r, (strip, label)) in records.iter().zip(&loaded) {
                assert_eq!(*label, r.label);
                let renderer = if split == Split::TestUnknown { &unknown } else { &known };
                let original = renderer.render(r.label, r.seed);
                for (a, b) in original.data().iter().zip(strip.data()) {
                    assert!((a - b).abs() <= 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn shuffled_iteration_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(dir.path(), &small_counts(), &SynthParams::default(), 5).unwrap();
        let order = |seed| -> Vec<EyeState> {
            iterate(&m, Split::Train, Some(seed)).map(|r| r.unwrap().1).collect()
        };
        assert_eq!(order(1), order(1));
        assert_eq!(order(1).len(), 20);
    }

    #[test]
    fn empty_manifest_gives_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(&path, "").unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(iterate(&m, Split::Train, None).count(), 0);
    }

    #[test]
    fn bad_records_are_reported_with_index() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(dir.path(), &SplitCounts { train: 1, val: 0, test_known: 0, test_unknown: 0 }, &SynthParams::default(), 1).unwrap();
        let good = serde_json::to_string(&m.records[0]).unwrap();
        let bad_label = good.replace(&format!("\"label\":{}", m.records[0].label.code()), "\"label\":11");
        let missing = r#"{"path":"images/train/0/nope.png","label":0,"split":"train","seed":1}"#;
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(&path, format!("{good}\n{bad_label}\n{good}\n{missing}\n")).unwrap();
        match load_manifest(&path) {
            Err(DatasetError::Records(issues)) => {
                let idx: Vec<usize> = issues.iter().map(|i| i.index).collect();
                assert_eq!(idx, vec![1, 2, 3]);
                assert!(issues[0].message.contains("11"));
                assert!(issues[1].message.contains("duplicate"));
                assert!(issues[2].message.contains("missing"));
            }
            other => panic!("expected record issues, got {other:?}"),
        }
    }
}
