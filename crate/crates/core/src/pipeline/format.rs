//! Binary dataset files (`LYDS`) and the text manifest written next to them.
//!
//! Layout, little-endian:
//!
//! ```text
//! magic "LYDS" | version u32 | system u8 | n_samples u32 | series_len u32 | n_les u32 | profile u8
//! per sample: sigma r b lambda1 lambda2 (f64) | le_truth (n_les f64) | series (series_len f64)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dynsys::{SystemKind, SystemParams};
use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, ByteReader};
use crate::lyapunov::{LeVector, Profile};

use super::{DatasetSplits, LabeledSample};

pub const DATASET_MAGIC: &[u8; 4] = b"LYDS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub system: SystemKind,
    pub profile: Profile,
    pub samples: Vec<LabeledSample>,
}

pub fn encode_dataset(system: SystemKind, profile: Profile, samples: &[LabeledSample]) -> Result<Vec<u8>> {
    let series_len = samples.first().map_or(0, |s| s.series.len());
    let n_les = system.dim();
    for s in samples {
        if s.series.len() != series_len || s.le_truth.len() != n_les {
            return Err(Error::contract("all samples in a dataset file must share their shapes"));
        }
    }
    let mut buf = Vec::with_capacity(22 + samples.len() * 8 * (5 + n_les + series_len));
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.push(system.id());
    buf.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(series_len as u32).to_le_bytes());
    buf.extend_from_slice(&(n_les as u32).to_le_bytes());
    buf.push(profile.id());
    for s in samples {
        let values = s
            .params
            .as_array()
            .into_iter()
            .chain(s.le_truth.as_slice().iter().copied())
            .chain(s.series.iter().copied());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<DatasetFile> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = ByteReader::new(bytes, path);
    if r.take(4)? != DATASET_MAGIC {
        return Err(bad("bad magic, not a dataset file".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let system = SystemKind::from_id(r.u8()?).ok_or_else(|| bad("unknown system id".into()))?;
    let n_samples = r.u32()? as usize;
    let series_len = r.u32()? as usize;
    let n_les = r.u32()? as usize;
    let profile = Profile::from_id(r.u8()?).ok_or_else(|| bad("unknown profile id".into()))?;
    if n_les != system.dim() {
        return Err(bad(format!(
            "{n_les} exponents stored for a {}-dimensional system",
            system.dim()
        )));
    }
    if n_samples == 0 && series_len != 0 {
        return Err(bad(format!("series length {series_len} recorded for an empty dataset")));
    }
    let per_sample = 8 * (5 + n_les + series_len);
    if r.remaining() != n_samples.saturating_mul(per_sample) {
        return Err(bad(format!(
            "payload is {} bytes, header implies {n_samples} samples of {per_sample} bytes",
            r.remaining()
        )));
    }
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut p = [0.0; 5];
        for v in &mut p {
            *v = r.f64()?;
        }
        let les = r.f64s(n_les)?;
        let series = r.f64s(series_len)?;
        let le_truth = LeVector::new(les).map_err(|e| bad(e.to_string()))?;
        samples.push(LabeledSample {
            params: SystemParams::from_array(p),
            series,
            le_truth,
        });
    }
    Ok(DatasetFile {
        system,
        profile,
        samples,
    })
}

pub fn write_dataset(path: &Path, system: SystemKind, profile: Profile, samples: &[LabeledSample]) -> Result<()> {
    write_atomic(path, &encode_dataset(system, profile, samples)?)
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_dataset(&bytes, path)
}

/// `key = value` text file describing a dataset directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest(pub BTreeMap<String, String>);

impl Manifest {
    pub fn parse(text: &str) -> Self {
        let map = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Manifest(map)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.0.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("manifest is missing '{key}'")))?
            .parse()
            .map_err(|_| Error::Config(format!("manifest value for '{key}' is malformed")))
    }
}

pub const MANIFEST_NAME: &str = "dataset.manifest";

fn split_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.lyds"))
}

/// Writes `train.lyds`, `val.lyds`, `test.lyds` and `dataset.manifest` into `dir`.
pub fn save_splits(dir: &Path, splits: &DatasetSplits, extra: &Manifest) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let parts = [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)];
    for (name, samples) in parts {
        write_dataset(&split_path(dir, name), splits.system, splits.profile, samples)?;
    }
    let mut m = extra.clone();
    m.set("system", splits.system);
    m.set("profile", splits.profile);
    m.set("seed", splits.seed);
    m.set("n_train", splits.train.len());
    m.set("n_val", splits.val.len());
    m.set("n_test", splits.test.len());
    m.set("batch_train", splits.batch_train);
    m.set("batch_eval", splits.batch_eval);
    m.set("series_len", super::SERIES_LEN);
    write_atomic(&dir.join(MANIFEST_NAME), m.render().as_bytes())
}

pub fn load_splits(dir: &Path) -> Result<DatasetSplits> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(format!("reading {} (run `gen-data` first)", manifest_path.display()), e))?;
    let m = Manifest::parse(&text);
    let train = read_dataset(&split_path(dir, "train"))?;
    let val = read_dataset(&split_path(dir, "val"))?;
    let test = read_dataset(&split_path(dir, "test"))?;
    for f in [&val, &test] {
        if f.system != train.system || f.profile != train.profile {
            return Err(Error::Format {
                path: dir.to_path_buf(),
                reason: "split files disagree on system or profile".into(),
            });
        }
    }
    Ok(DatasetSplits {
        system: train.system,
        profile: train.profile,
        seed: m.require("seed")?,
        train: train.samples,
        val: val.samples,
        test: test.samples,
        batch_train: m.require("batch_train")?,
        batch_eval: m.require("batch_eval")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(seed: u64, n_les: usize, len: usize) -> LabeledSample {
        let f = |i: usize| ((seed as f64 + 1.0) * (i as f64 + 0.5)).sin();
        LabeledSample {
            params: SystemParams::new(10.0, f(1) * 300.0, 2.0 + f(2).abs()),
            series: (0..len).map(f).collect(),
            le_truth: LeVector::new((0..n_les).map(|i| -(i as f64) + f(i)).collect()).unwrap(),
        }
    }

    proptest! {
        #[test]
        fn encode_decode_is_lossless(
            coupled in any::<bool>(),
            series in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 17), 0..6),
            params in prop::array::uniform5(-1e3f64..1e3),
        ) {
            let system = if coupled { SystemKind::CoupledLorenz } else { SystemKind::Lorenz };
            let samples: Vec<LabeledSample> = series
                .into_iter()
                .enumerate()
                .map(|(i, s)| LabeledSample {
                    params: SystemParams::from_array(params),
                    le_truth: LeVector::new((0..system.dim()).map(|k| s[k] - i as f64).collect()).unwrap(),
                    series: s,
                })
                .collect();
            let bytes = encode_dataset(system, Profile::Desk, &samples).unwrap();
            let back = decode_dataset(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(back.system, system);
            prop_assert_eq!(back.profile, Profile::Desk);
            prop_assert_eq!(back.samples, samples);
        }
    }

    #[test]
    fn corrupt_headers_are_errors() {
        let samples: Vec<_> = (0..3).map(|i| sample(i, 3, 20)).collect();
        let bytes = encode_dataset(SystemKind::Lorenz, Profile::Paper, &samples).unwrap();
        let p = Path::new("mem");
        for cut in [0, 3, 10, 21, bytes.len() - 1] {
            assert!(decode_dataset(&bytes[..cut], p).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_dataset(&bad, p).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9; // system id
        assert!(decode_dataset(&bad, p).is_err());
        let mut bad = bytes.clone();
        bad[9..13].copy_from_slice(&u32::MAX.to_le_bytes()); // n_samples
        assert!(decode_dataset(&bad, p).is_err());
        let mut bad = bytes;
        bad[17..21].copy_from_slice(&6u32.to_le_bytes()); // n_les
        assert!(decode_dataset(&bad, p).is_err());
    }

    #[test]
    fn empty_dataset_header_is_canonical() {
        let mut bytes = encode_dataset(SystemKind::Lorenz, Profile::Desk, &[]).unwrap();
        assert!(decode_dataset(&bytes, Path::new("e")).unwrap().samples.is_empty());
        bytes[13] = 7;
        assert!(decode_dataset(&bytes, Path::new("e")).is_err());
    }

    #[test]
    fn mixed_shapes_rejected() {
        let samples = vec![sample(0, 3, 20), sample(1, 3, 21)];
        assert!(encode_dataset(SystemKind::Lorenz, Profile::Paper, &samples).is_err());
    }

    #[test]
    fn splits_round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let splits = DatasetSplits {
            system: SystemKind::CoupledLorenz,
            profile: Profile::Desk,
            seed: 42,
            train: (0..4).map(|i| sample(i, 6, 12)).collect(),
            val: (4..6).map(|i| sample(i, 6, 12)).collect(),
            test: (6..7).map(|i| sample(i, 6, 12)).collect(),
            batch_train: 128,
            batch_eval: 100,
        };
        let mut extra = Manifest::default();
        extra.set("regime", "random");
        save_splits(dir.path(), &splits, &extra).unwrap();
        assert_eq!(load_splits(dir.path()).unwrap(), splits);
        let text = std::fs::read_to_string(dir.path().join(MANIFEST_NAME)).unwrap();
        assert!(text.contains("seed = 42") && text.contains("regime = random"));
        assert!(load_splits(&dir.path().join("missing")).is_err());
    }
}
