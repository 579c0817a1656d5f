use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layout::{COORDS, FEATURES, NUM_LANDMARKS};
use super::sequence::PoseSequence;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub class_index: usize,
    pub sequence: PoseSequence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    #[serde(default)]
    pub train: Vec<String>,
    #[serde(default)]
    pub val: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl Splits {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub class_index: usize,
    pub frames: usize,
    pub file: String,
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub num_landmarks: usize,
    pub coords: usize,
    pub classes: Vec<String>,
    pub samples: Vec<SampleEntry>,
    pub splits: Splits,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

/// Labeled pose samples with a class vocabulary and train/val/test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
    pub splits: Splits,
    pub synthetic: bool,
}

impl Dataset {
    pub fn new(name: impl Into<String>, classes: Vec<String>, samples: Vec<Sample>, splits: Splits) -> Result<Self> {
        let ds = Self { name: name.into(), classes, samples, splits, synthetic: false };
        ds.validate()?;
        Ok(ds)
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Checks class indices, sample id uniqueness and split disjointness.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::MalformedManifest("class list is empty".into()));
        }
        let mut ids = HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::MalformedManifest(format!("duplicate sample id {}", s.id)));
            }
            if s.class_index >= self.classes.len() {
                return Err(Error::InvalidClassIndex {
                    id: s.id.clone(),
                    class_index: s.class_index,
                    num_classes: self.classes.len(),
                });
            }
        }
        let mut seen = HashSet::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            let mut within = HashSet::new();
            for id in self.splits.ids(split) {
                if !ids.contains(id.as_str()) {
                    return Err(Error::MalformedManifest(format!("split references unknown sample {id}")));
                }
                if !within.insert(id.as_str()) {
                    return Err(Error::MalformedManifest(format!("sample {id} listed twice in one split")));
                }
                if !seen.insert(id.as_str()) {
                    return Err(Error::OverlappingSplits(id.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        let index: HashMap<&str, &Sample> = self.samples.iter().map(|s| (s.id.as_str(), s)).collect();
        self.splits.ids(split).iter().map(|id| index[id.as_str()]).collect()
    }

    pub fn split_owned(&self, split: Split) -> Vec<Sample> {
        self.split(split).into_iter().cloned().collect()
    }

    /// Samples per class within `split`.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in self.split(split) {
            counts[s.class_index] += 1;
        }
        counts
    }

    /// Applies `f` to every sequence.
    pub fn map_sequences(&self, mut f: impl FnMut(&PoseSequence) -> Result<PoseSequence>) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| Ok(Sample { id: s.id.clone(), class_index: s.class_index, sequence: f(&s.sequence)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples, ..self.clone() })
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            name: self.name.clone(),
            num_landmarks: NUM_LANDMARKS,
            coords: COORDS,
            classes: self.classes.clone(),
            samples: self
                .samples
                .iter()
                .map(|s| SampleEntry {
                    id: s.id.clone(),
                    class_index: s.class_index,
                    frames: s.sequence.frames(),
                    file: sample_file_name(&s.id),
                })
                .collect(),
            splits: self.splits.clone(),
            synthetic: self.synthetic,
        }
    }

    /// Writes `manifest.json` plus one little-endian `f32` file per sample.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.validate()?;
        let manifest = self.manifest();
        fs::create_dir_all(dir.join("samples")).map_err(|e| Error::io(dir, e))?;
        for (entry, sample) in manifest.samples.iter().zip(&self.samples) {
            let bytes: Vec<u8> = sample
                .sequence
                .values()
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect();
            let path = dir.join(&entry.file);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Self::load_inner(dir.as_ref(), None)
    }

    /// Loads a dataset stored with more than 60 landmarks per frame, keeping
    /// the 60 listed in `indices` (face, body, left hand, right hand order).
    pub fn load_with_subset(dir: impl AsRef<Path>, indices: &[usize]) -> Result<Self> {
        if indices.len() != NUM_LANDMARKS {
            return Err(Error::Config(format!(
                "landmark subset must list {NUM_LANDMARKS} indices, got {}",
                indices.len()
            )));
        }
        Self::load_inner(dir.as_ref(), Some(indices))
    }

    fn load_inner(dir: &Path, subset: Option<&[usize]>) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
        if manifest.classes.is_empty() {
            return Err(Error::MalformedManifest("class list is empty".into()));
        }
        if manifest.coords != COORDS {
            return Err(Error::MalformedManifest(format!("coords = {}, expected {COORDS}", manifest.coords)));
        }
        let stored_landmarks = manifest.num_landmarks;
        match subset {
            None if stored_landmarks != NUM_LANDMARKS => {
                return Err(Error::MalformedManifest(format!(
                    "num_landmarks = {stored_landmarks}, expected {NUM_LANDMARKS}"
                )))
            }
            Some(idx) if idx.iter().any(|&i| i >= stored_landmarks) => {
                return Err(Error::Config(format!(
                    "landmark subset index out of range for {stored_landmarks} landmarks"
                )))
            }
            _ => {}
        }
        let stored_features = stored_landmarks * COORDS;

        let mut samples = Vec::with_capacity(manifest.samples.len());
        for entry in &manifest.samples {
            if entry.frames == 0 {
                return Err(Error::MalformedManifest(format!("sample {} has zero frames", entry.id)));
            }
            let file = dir.join(&entry.file);
            let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let expected = entry.frames * stored_features * 4;
            if bytes.len() != expected {
                return Err(Error::FrameCountMismatch {
                    id: entry.id.clone(),
                    frames: entry.frames,
                    expected,
                    actual: bytes.len(),
                });
            }
            let raw: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let values = match subset {
                None => raw,
                Some(idx) => {
                    let mut v = Vec::with_capacity(entry.frames * FEATURES);
                    for frame in raw.chunks_exact(stored_features) {
                        for &l in idx {
                            v.extend_from_slice(&frame[l * COORDS..(l + 1) * COORDS]);
                        }
                    }
                    v
                }
            };
            samples.push(Sample {
                id: entry.id.clone(),
                class_index: entry.class_index,
                sequence: PoseSequence::new(entry.frames, values)?,
            });
        }
        let ds = Dataset {
            name: manifest.name,
            classes: manifest.classes,
            samples,
            splits: manifest.splits,
            synthetic: manifest.synthetic,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn sample_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("samples/{safe}.f32")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, class_index: usize, frames: usize) -> Sample {
        Sample { id: id.into(), class_index, sequence: PoseSequence::zeros(frames) }
    }

    fn splits(train: &[&str], test: &[&str]) -> Splits {
        Splits {
            train: train.iter().map(|s| s.to_string()).collect(),
            val: vec![],
            test: test.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn roundtrip_small_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let mut samples = vec![sample("a", 0, 3), sample("b", 1, 5), sample("c", 1, 2)];
        samples[0].sequence.values_mut()[7] = f64::NAN;
        samples[1].sequence.values_mut()[0] = 0.25;
        let ds = Dataset::new("toy", vec!["x".into(), "y".into()], samples, splits(&["a", "b"], &["c"])).unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.num_classes(), 2);
        assert_eq!(back.split(Split::Train).len(), 2);
        assert!(back.samples[0].sequence.values()[7].is_nan());
        assert_eq!(back.samples[1].sequence.values()[0], 0.25);
    }

    #[test]
    fn frame_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::new("toy", vec!["x".into()], vec![sample("a", 0, 3)], splits(&["a"], &[])).unwrap();
        ds.save(dir.path()).unwrap();
        fs::write(dir.path().join("samples/a.f32"), vec![0u8; 3 * 180 * 4 - 4]).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::FrameCountMismatch { .. })));
    }

    #[test]
    fn empty_class_list_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let m = r#"{"name":"t","num_landmarks":60,"coords":3,"classes":[],"samples":[],"splits":{"train":[],"val":[],"test":[]}}"#;
        fs::write(dir.path().join(MANIFEST_FILE), m).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::MalformedManifest(_))));
    }

    #[test]
    fn missing_manifest_and_missing_sample_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::MissingFile(_))));
        let ds = Dataset::new("toy", vec!["x".into()], vec![sample("a", 0, 1)], splits(&["a"], &[])).unwrap();
        ds.save(dir.path()).unwrap();
        fs::remove_file(dir.path().join("samples/a.f32")).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::MissingFile(_))));
    }

    #[test]
    fn overlapping_splits_and_bad_class() {
        let err = Dataset::new("t", vec!["x".into()], vec![sample("a", 0, 1)], splits(&["a"], &["a"]));
        assert!(matches!(err, Err(Error::OverlappingSplits(_))));
        let err = Dataset::new("t", vec!["x".into()], vec![sample("a", 3, 1)], splits(&["a"], &[]));
        assert!(matches!(err, Err(Error::InvalidClassIndex { .. })));
    }

    #[test]
    fn subset_loading_picks_listed_landmarks() {
        let dir = tempfile::tempdir().unwrap();
        let stored = 70usize;
        let frame: Vec<f32> = (0..stored * 3).map(|v| v as f32).collect();
        fs::create_dir_all(dir.path().join("samples")).unwrap();
        let bytes: Vec<u8> = frame.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.path().join("samples/a.f32"), bytes).unwrap();
        let m = format!(
            r#"{{"name":"raw","num_landmarks":{stored},"coords":3,"classes":["x"],
               "samples":[{{"id":"a","class_index":0,"frames":1,"file":"samples/a.f32"}}],
               "splits":{{"train":["a"]}}}}"#
        );
        fs::write(dir.path().join(MANIFEST_FILE), m).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::MalformedManifest(_))));
        let idx: Vec<usize> = (10..70).collect();
        let ds = Dataset::load_with_subset(dir.path(), &idx).unwrap();
        assert_eq!(ds.samples[0].sequence.point(0, 0), [30.0, 31.0, 32.0]);
    }
}
