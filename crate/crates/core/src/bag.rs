//! Instance bags and their on-disk format.
//!
//! A bag file is `b"MILB"`, then little-endian `u32` version, `u32` instance
//! count `n` and `u32` feature dimension `d`, followed by `n * d` little-endian
//! `f32` values in row-major order. Nothing else: labels live in a JSON
//! manifest next to the bag files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::hierarchy::Hierarchy;

pub const MAGIC: &[u8; 4] = b"MILB";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 16;

/// Per-instance ground truth marker for background instances.
pub const BACKGROUND: i64 = -1;

#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub id: String,
    dim: usize,
    features: Vec<f32>,
    /// Class index per hierarchy level, coarsest first.
    pub labels: Vec<usize>,
    /// Planted class of each instance, or [`BACKGROUND`]. Synthetic data only.
    pub instance_labels: Option<Vec<i64>>,
}

impl Bag {
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        features: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("feature dimension must be positive".into()));
        }
        if features.is_empty() || !features.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} feature values do not form whole instances of dimension {dim}",
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("instance features must be finite".into()));
        }
        Ok(Self {
            id: id.into(),
            dim,
            features,
            labels,
            instance_labels: None,
        })
    }

    pub fn with_instance_labels(mut self, instance_labels: Vec<i64>) -> Result<Self> {
        if instance_labels.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} instance labels for {} instances",
                instance_labels.len(),
                self.len()
            )));
        }
        self.instance_labels = Some(instance_labels);
        Ok(self)
    }

    /// Number of instances.
    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn instance(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn instances(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn finest_label(&self) -> usize {
        *self.labels.last().expect("bag has labels")
    }

    /// Mean instance, in f64.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for x in self.instances() {
            for (a, &b) in m.iter_mut().zip(x) {
                *a += b as f64;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

pub fn encode_bag(bag: &Bag) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * bag.features.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(bag.len() as u32).to_le_bytes());
    out.extend_from_slice(&(bag.dim as u32).to_le_bytes());
    for v in &bag.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes instance features; returns `(n, d, features)`.
pub fn decode_bag(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let found = bytes.len() as u64;
    if found < HEADER_LEN {
        // a short file that does not even start with the magic is not a bag
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::BadMagic { path: path.into() });
        }
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN,
            found,
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            version,
        });
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    let expected = HEADER_LEN + 4 * (n as u64) * (d as u64);
    if found < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::TrailingBytes {
            path: path.into(),
            expected,
            found,
        });
    }
    let features = bytes[HEADER_LEN as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n, d, features))
}

pub fn write_bag(bag: &Bag, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_at(path))?;
    f.write_all(&encode_bag(bag))?;
    Ok(())
}

/// Reads the features of a bag file. Labels come from the manifest; see
/// [`read_dataset`].
pub fn read_bag_features(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    decode_bag(&bytes, path)
}

/// Reads a bag file and attaches the labels from its manifest entry.
pub fn read_bag(path: &Path, entry: &ManifestEntry, hierarchy: Option<&Hierarchy>) -> Result<Bag> {
    let (n, d, features) = read_bag_features(path)?;
    if let Some(h) = hierarchy {
        if !h.labels_consistent(&entry.labels) {
            return Err(Error::ManifestMismatch(format!(
                "bag {}: labels {:?} do not follow the hierarchy",
                entry.id, entry.labels
            )));
        }
    }
    if n == 0 || d == 0 {
        return Err(Error::Shape(format!("{}: empty bag", path.display())));
    }
    let mut bag = Bag::new(entry.id.clone(), d, features, entry.labels.clone())?;
    if let Some(il) = &entry.instance_labels {
        if il.len() != n {
            return Err(Error::ManifestMismatch(format!(
                "bag {}: {} instance labels for {n} instances",
                entry.id,
                il.len()
            )));
        }
        bag = bag.with_instance_labels(il.clone())?;
    }
    Ok(bag)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_labels: Option<Vec<i64>>,
    /// Bag file path, relative to the manifest's directory.
    pub path: String,
}

impl ManifestEntry {
    pub fn for_bag(bag: &Bag, path: impl Into<String>) -> Self {
        Self {
            id: bag.id.clone(),
            labels: bag.labels.clone(),
            instance_labels: bag.instance_labels.clone(),
            path: path.into(),
        }
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes every bag as `<dir>/bags/<id>.milb` and the manifest as
/// `<dir>/manifest.json`. Returns the manifest path.
pub fn write_dataset(dir: &Path, bags: &[Bag]) -> Result<PathBuf> {
    let bag_dir = dir.join("bags");
    fs::create_dir_all(&bag_dir)?;
    let mut entries = Vec::with_capacity(bags.len());
    for bag in bags {
        let rel = format!("bags/{}.milb", bag.id);
        write_bag(bag, &dir.join(&rel))?;
        entries.push(ManifestEntry::for_bag(bag, rel));
    }
    let manifest = dir.join(MANIFEST_NAME);
    fs::write(&manifest, serde_json::to_string_pretty(&entries)? + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(manifest: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(manifest).map_err(io_at(manifest))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_dataset(manifest: &Path, hierarchy: Option<&Hierarchy>) -> Result<Vec<Bag>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(manifest)?
        .iter()
        .map(|e| read_bag(&base.join(&e.path), e, hierarchy))
        .collect()
}
