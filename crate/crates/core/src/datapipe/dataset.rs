use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compute::tensor::Tensor4;
use crate::datapipe::image::{read_png, RawImage};
use crate::datapipe::preprocess::{normalize_to_net, NormRange, Preprocess};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingMode {
    Paired,
    Unpaired,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: RawImage,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Paired(Vec<(Sample, Sample)>),
    Unpaired { a: Vec<Sample>, b: Vec<Sample> },
}

fn png_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut files = BTreeMap::new();
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Dataset(format!("non UTF-8 file name {}", path.display())))?
                .to_string();
            files.insert(stem, path);
        }
    }
    Ok(files)
}

/// All PNG images of one domain directory, sorted by file name.
pub fn load_domain(dir: &Path) -> Result<Vec<Sample>> {
    png_files(dir)?
        .into_iter()
        .map(|(id, path)| Ok(Sample { id, image: read_png(&path)? }))
        .collect()
}

/// Load domains `root/<domain_a>` and `root/<domain_b>`. Paired mode matches
/// files by name and reports every orphan.
pub fn load_dataset(root: &Path, domain_a: &str, domain_b: &str, mode: PairingMode) -> Result<Dataset> {
    let (da, db) = (root.join(domain_a), root.join(domain_b));
    match mode {
        PairingMode::Unpaired => Ok(Dataset::Unpaired {
            a: load_domain(&da)?,
            b: load_domain(&db)?,
        }),
        PairingMode::Paired => {
            let fa = png_files(&da)?;
            let fb = png_files(&db)?;
            let orphans: Vec<String> = fa
                .iter()
                .filter(|(k, _)| !fb.contains_key(*k))
                .map(|(_, p)| format!("{}/{}", domain_a, p.file_name().unwrap().to_string_lossy()))
                .chain(
                    fb.iter()
                        .filter(|(k, _)| !fa.contains_key(*k))
                        .map(|(_, p)| format!("{}/{}", domain_b, p.file_name().unwrap().to_string_lossy())),
                )
                .collect();
            if !orphans.is_empty() {
                return Err(Error::Dataset(format!(
                    "paired mode needs matching file names in {domain_a} and {domain_b}; unmatched: {}",
                    orphans.join(", ")
                )));
            }
            if fa.is_empty() {
                return Err(Error::Dataset(format!("no images found in {}", da.display())));
            }
            fa.into_iter()
                .map(|(id, pa)| {
                    let pb = &fb[&id];
                    Ok((
                        Sample {
                            id: id.clone(),
                            image: read_png(&pa)?,
                        },
                        Sample { id, image: read_png(pb)? },
                    ))
                })
                .collect::<Result<Vec<_>>>()
                .map(Dataset::Paired)
        }
    }
}

/// A preprocessed image ready for a network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetImage {
    pub id: String,
    /// Shape `(1, 1, size, size)`, values in `[-1, 1]`.
    pub tensor: Tensor4,
    pub range: NormRange,
    /// The image after stretching and padding, before normalization.
    pub prepared: RawImage,
}

impl NetImage {
    pub fn new(id: impl Into<String>, prepared: RawImage) -> Self {
        let (tensor, range) = normalize_to_net(&prepared);
        NetImage {
            id: id.into(),
            tensor,
            range,
            prepared,
        }
    }
}

pub fn prepare_images(samples: &[Sample], pre: &Preprocess) -> Result<Vec<NetImage>> {
    samples
        .iter()
        .map(|s| Ok(NetImage::new(s.id.clone(), pre.prepare(&s.image)?)))
        .collect()
}

/// Prepare pairs, registering each `b` image onto its `a` partner when
/// `radius > 0`.
pub fn prepare_pairs(pairs: &[(Sample, Sample)], pre: &Preprocess, radius: usize, bins: usize) -> Result<Vec<(NetImage, NetImage)>> {
    pairs
        .iter()
        .map(|(a, b)| {
            let (pa, pb, _) = pre.prepare_pair(&a.image, &b.image, radius, bins)?;
            Ok((NetImage::new(a.id.clone(), pa), NetImage::new(b.id.clone(), pb)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::image::write_png;

    fn write(dir: &Path, domain: &str, names: &[&str]) {
        let d = dir.join(domain);
        std::fs::create_dir_all(&d).unwrap();
        for (i, n) in names.iter().enumerate() {
            write_png(&d.join(format!("{n}.png")), &RawImage::filled(8, 8, 8, i as u16).unwrap()).unwrap();
        }
    }

    #[test]
    fn paired_and_unpaired() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "A", &["s1", "s2"]);
        write(dir.path(), "B", &["s1", "s2"]);
        match load_dataset(dir.path(), "A", "B", PairingMode::Paired).unwrap() {
            Dataset::Paired(p) => assert_eq!(p.len(), 2),
            _ => unreachable!(),
        }
        write(dir.path(), "A", &["s1", "s2", "s3"]);
        let err = load_dataset(dir.path(), "A", "B", PairingMode::Paired).unwrap_err().to_string();
        assert!(err.contains("s3.png"), "{err}");

        write(dir.path(), "C", &["a", "b", "c", "d", "e"]);
        write(dir.path(), "D", &["x", "y", "z"]);
        match load_dataset(dir.path(), "C", "D", PairingMode::Unpaired).unwrap() {
            Dataset::Unpaired { a, b } => assert_eq!((a.len(), b.len()), (5, 3)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn bad_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "A", &["s1"]);
        write(dir.path(), "B", &["s1"]);
        std::fs::write(dir.path().join("B/s1.png"), b"junk").unwrap();
        let err = load_dataset(dir.path(), "A", "B", PairingMode::Paired).unwrap_err().to_string();
        assert!(err.contains("s1.png"), "{err}");
    }
}
