use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;

/// File names of the standard distribution, `(images, labels)`.
pub const MNIST_TRAIN_FILES: (&str, &str) = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
pub const MNIST_TEST_FILES: (&str, &str) = ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");

fn read_u32(bytes: &[u8], offset: usize, file: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxLength {
            file: file.to_string(),
            expected: offset + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, file: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, file)?;
    if magic != expected {
        return Err(Error::IdxFormat {
            file: file.to_string(),
            message: format!("magic number {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

fn check_length(bytes: &[u8], expected: usize, file: &str) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::IdxLength {
            file: file.to_string(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Decodes an IDX3 image file into rows of `rows·cols` pixels scaled by 1/255.
pub fn parse_idx_images(bytes: &[u8], file: &str) -> Result<Matrix> {
    check_magic(bytes, IMAGES_MAGIC, file)?;
    let count = read_u32(bytes, 4, file)? as usize;
    let rows = read_u32(bytes, 8, file)? as usize;
    let cols = read_u32(bytes, 12, file)? as usize;
    let d = rows * cols;
    check_length(bytes, 16 + count * d, file)?;
    if count == 0 || d == 0 {
        return Err(Error::IdxFormat {
            file: file.to_string(),
            message: format!("empty image set ({count} images of {rows}x{cols})"),
        });
    }
    let data = bytes[16..].iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok(Matrix::from_vec(count, d, data)?)
}

/// Decodes an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8], file: &str) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC, file)?;
    let count = read_u32(bytes, 4, file)? as usize;
    check_length(bytes, 8 + count, file)?;
    Ok(bytes[8..].iter().map(|&l| usize::from(l)).collect())
}

/// Loads a pair of MNIST IDX files as a 10-class dataset.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images_name = images_path.display().to_string();
    let labels_name = labels_path.display().to_string();
    let images = parse_idx_images(&fs::read(images_path)?, &images_name)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?, &labels_name)?;
    if images.rows() != labels.len() {
        return Err(Error::IdxConsistency {
            images: images.rows(),
            labels: labels.len(),
        });
    }
    let name = images_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| images_name.clone());
    Dataset::new(images, labels, MNIST_CLASSES, name)
}

/// Loads `(train, test)` from a directory holding the four standard files.
pub fn load_mnist_dir(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_mnist_idx(
        &dir.join(MNIST_TRAIN_FILES.0),
        &dir.join(MNIST_TRAIN_FILES.1),
    )?;
    let test = load_mnist_idx(&dir.join(MNIST_TEST_FILES.0), &dir.join(MNIST_TEST_FILES.1))?;
    Ok((train, test))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IMAGES_MAGIC, count, rows, cols] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::File::create(&path).unwrap().write_all(bytes).unwrap();
        path
    }

    fn fixture_pixels() -> Vec<u8> {
        (0..2 * 784).map(|i| (i * 7 % 256) as u8).collect()
    }

    #[test]
    fn two_image_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let pixels = fixture_pixels();
        let img = write(dir.path(), "img", &idx_images(2, 28, 28, &pixels));
        let lab = write(dir.path(), "lab", &idx_labels(&[7, 3]));
        let ds = load_mnist_idx(&img, &lab).unwrap();
        assert_eq!(ds.inputs().shape(), (2, 784));
        assert_eq!(ds.labels(), &[7, 3]);
        for (v, p) in ds.inputs().as_slice().iter().zip(&pixels) {
            assert_eq!(*v, f64::from(*p) / 255.0);
        }
        assert!(ds
            .inputs()
            .as_slice()
            .iter()
            .all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn full_intensity_is_one() {
        let m = parse_idx_images(&idx_images(1, 1, 2, &[255, 0]), "t").unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn wrong_magic_named() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        match parse_idx_images(&bytes, "imgs") {
            Err(Error::IdxFormat { message, .. }) => assert!(message.contains("0x00000801")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = idx_images(2, 2, 2, &[1, 2, 3, 4, 5]);
        assert!(matches!(
            parse_idx_images(&bytes, "t"),
            Err(Error::IdxLength {
                expected: 24,
                actual: 21,
                ..
            })
        ));
        assert!(matches!(
            parse_idx_labels(&idx_labels(&[1, 2])[..9], "t"),
            Err(Error::IdxLength { .. })
        ));
        assert!(matches!(
            parse_idx_labels(&[0, 0], "t"),
            Err(Error::IdxLength { .. })
        ));
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_images(2, 28, 28, &fixture_pixels()));
        let lab = write(dir.path(), "lab", &idx_labels(&[1, 2, 3]));
        assert!(matches!(
            load_mnist_idx(&img, &lab),
            Err(Error::IdxConsistency {
                images: 2,
                labels: 3
            })
        ));
    }

    #[test]
    fn label_out_of_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_images(1, 1, 1, &[9]));
        let lab = write(dir.path(), "lab", &idx_labels(&[10]));
        assert!(matches!(load_mnist_idx(&img, &lab), Err(Error::Dataset(_))));
    }
}
