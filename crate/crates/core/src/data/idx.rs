//! IDX reader for the MNIST image/label file pair.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("slice of length 4")))
        .ok_or_else(|| Error::IdxTruncated {
            path: path.to_path_buf(),
            needed: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::IdxBadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], needed: usize, path: &Path) -> Result<()> {
    if bytes.len() < needed {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            needed,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Loads an `idx3-ubyte` image file and its `idx1-ubyte` label file.
///
/// Pixels are scaled to `[0, 1]`. The class count is one more than the
/// largest label seen (10 for MNIST).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;

    check_magic(&images, IMAGES_MAGIC, images_path)?;
    let n_images = be_u32(&images, 4, images_path)? as usize;
    let rows = be_u32(&images, 8, images_path)? as usize;
    let cols = be_u32(&images, 12, images_path)? as usize;
    let pixels = rows * cols;
    check_len(&images, 16 + n_images * pixels, images_path)?;

    check_magic(&labels, LABELS_MAGIC, labels_path)?;
    let n_labels = be_u32(&labels, 4, labels_path)? as usize;
    check_len(&labels, 8 + n_labels, labels_path)?;

    if n_images != n_labels {
        return Err(Error::IdxCountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    if pixels == 0 {
        return Err(Error::EmptyData("idx images have zero pixels"));
    }

    let features = images[16..16 + n_images * pixels]
        .iter()
        .map(|&p| p as f64 / 255.0)
        .collect();
    let labels: Vec<usize> = labels[8..8 + n_labels].iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1).max(10);
    LabeledDataset::new(features, labels, pixels, num_classes)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn write_idx_pair(
        dir: &Path,
        images: &[[u8; 4]],
        labels: &[u8],
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&(images.len() as u32).to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        img.extend_from_slice(&2u32.to_be_bytes());
        for im in images {
            img.extend_from_slice(im);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        let (ip, lp) = (dir.join("images.idx3-ubyte"), dir.join("labels.idx1-ubyte"));
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn reads_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[[0, 255, 51, 0], [255, 255, 0, 0]], &[3, 9]);
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.input_dim(), 4);
        assert_eq!(d.num_classes(), 10);
        assert_eq!(d.row(0), &[0.0, 1.0, 0.2, 0.0]);
        assert_eq!(d.labels(), &[3, 9]);
    }

    #[test]
    fn truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[[0; 4], [0; 4]], &[1, 2]);
        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::IdxTruncated { .. }));
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[[0; 4], [0; 4]], &[1]);
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::IdxCountMismatch { images: 2, labels: 1 }));
        assert!(err.to_string().contains("count mismatch"));
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_idx_pair(dir.path(), &[[0; 4]], &[1]);
        // swapped files: label magic where image magic is expected
        let err = load_idx(&lp, &ip).unwrap_err();
        assert!(matches!(err, Error::IdxBadMagic { found: LABELS_MAGIC, .. }));
    }
}
