use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Finetune,
    Eval,
}

impl Split {
    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "finetune" => Ok(Split::Finetune),
            "eval" => Ok(Split::Eval),
            _ => Err(Error::Config(format!("unknown split {s:?} (expected train, finetune or eval)"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Finetune => "finetune",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub split: Split,
}

impl ManifestEntry {
    /// Identifier used in reports: the image file stem.
    pub fn id(&self) -> String {
        self.image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// An image/mask list from one source, one `image<TAB>mask<TAB>split` line
/// per entry. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub source: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(source: impl Into<String>, entries: Vec<ManifestEntry>) -> DatasetManifest {
        DatasetManifest {
            source: source.into(),
            entries,
        }
    }

    pub fn parse(text: &str, base: &Path, source: impl Into<String>) -> Result<DatasetManifest> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [image, mask, split] = cols[..] else {
                return Err(Error::Config(format!(
                    "manifest line {}: expected 3 tab-separated fields, got {}",
                    n + 1,
                    cols.len()
                )));
            };
            entries.push(ManifestEntry {
                image: base.join(image),
                mask: base.join(mask),
                split: Split::parse(split.trim())
                    .map_err(|e| Error::Config(format!("manifest line {}: {e}", n + 1)))?,
            });
        }
        Ok(DatasetManifest::new(source, entries))
    }

    /// Reads a manifest file; the source tag defaults to the file stem.
    pub fn read(path: impl AsRef<Path>) -> Result<DatasetManifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let source = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        DatasetManifest::parse(&text, base, source)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\n", e.image.display(), e.mask.display(), e.split))
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Fails on the first referenced file that does not exist.
    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in [&e.image, &e.mask] {
                std::fs::metadata(p).map_err(|err| Error::io(p, err))?;
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).cloned().collect()
    }

    /// Entries of every split except `eval`.
    pub fn training_entries(&self) -> Vec<ManifestEntry> {
        self.entries.iter().filter(|e| e.split != Split::Eval).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lowercase hex MD5 of a file's bytes.
pub fn md5_hex(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Md5::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// The first `n` paths in ascending order of the MD5 digest of their contents.
pub fn select_subset_md5(paths: &[PathBuf], n: usize) -> Result<Vec<PathBuf>> {
    if n > paths.len() {
        return Err(Error::Config(format!("cannot select {n} of {} files", paths.len())));
    }
    let mut keyed = paths
        .iter()
        .map(|p| Ok((md5_hex(p)?, p.clone())))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort();
    Ok(keyed.into_iter().take(n).map(|(_, p)| p).collect())
}

/// Draws `targets[i]` entries without replacement from `manifests[i]` and
/// merges them, sources in order.
pub fn balance_sources(manifests: &[DatasetManifest], targets: &[usize], seed: u64) -> Result<DatasetManifest> {
    if manifests.len() != targets.len() {
        return Err(Error::Config(format!(
            "{} manifests but {} targets",
            manifests.len(),
            targets.len()
        )));
    }
    let mut rng = Rng::new(seed);
    let mut entries = Vec::with_capacity(targets.iter().sum());
    for (m, &k) in manifests.iter().zip(targets) {
        if k > m.len() {
            return Err(Error::Config(format!(
                "source {:?} has {} entries, cannot draw {k}",
                m.source,
                m.len()
            )));
        }
        let mut src = rng.fork();
        let mut idx: Vec<usize> = (0..m.len()).collect();
        for i in 0..k {
            let j = i + src.below(m.len() - i);
            idx.swap(i, j);
        }
        entries.extend(idx[..k].iter().map(|&i| m.entries[i].clone()));
    }
    let source = manifests.iter().map(|m| m.source.as_str()).collect::<Vec<_>>().join("+");
    Ok(DatasetManifest::new(source, entries))
}

/// Builds a manifest from paired image and mask directories, matching files by
/// stem after removing `mask_suffix` from mask stems (e.g. `_mask`).
pub fn import_paired_dirs(
    image_dir: &Path,
    mask_dir: &Path,
    mask_suffix: &str,
    split: Split,
    source: &str,
) -> Result<DatasetManifest> {
    let list = |dir: &Path| -> Result<BTreeMap<String, PathBuf>> {
        let mut out = BTreeMap::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let ext = path.extension().map(|e| e.to_string_lossy().to_lowercase());
            if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg" | "bmp")) {
                let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
                out.insert(stem, path);
            }
        }
        Ok(out)
    };
    let images = list(image_dir)?;
    let masks: BTreeMap<String, PathBuf> = list(mask_dir)?
        .into_iter()
        .map(|(stem, p)| (stem.strip_suffix(mask_suffix).unwrap_or(&stem).to_string(), p))
        .collect();
    let entries = images
        .into_iter()
        .filter_map(|(stem, image)| {
            masks.get(&stem).map(|mask| ManifestEntry {
                image,
                mask: mask.clone(),
                split,
            })
        })
        .collect::<Vec<_>>();
    if entries.is_empty() {
        return Err(Error::Config(format!(
            "no image/mask pairs found in {} and {}",
            image_dir.display(),
            mask_dir.display()
        )));
    }
    Ok(DatasetManifest::new(source, entries))
}
