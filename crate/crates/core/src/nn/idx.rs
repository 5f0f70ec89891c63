//! Big-endian IDX files as used by the MNIST distribution.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::dataset::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn open(path: &Path, magic: u32) -> Result<BufReader<File>> {
    let mut r = BufReader::new(File::open(path)?);
    let m = read_u32(&mut r)?;
    if m != magic {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("bad magic {m:#010x}, expected {magic:#010x}"),
        });
    }
    Ok(r)
}

/// Raw image bytes with `(count, rows, cols)`.
pub fn read_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize)> {
    let mut r = open(path, IMAGES_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    let mut px = vec![0u8; n * rows * cols];
    r.read_exact(&mut px)?;
    Ok((px, n, rows, cols))
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = open(path, LABELS_MAGIC)?;
    let n = read_u32(&mut r)? as usize;
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)?;
    Ok(labels)
}

/// Load an image file and its label file; pixels are scaled to `[0, 1]`.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (px, n, rows, cols) = read_images(images.as_ref())?;
    let lab = read_labels(labels.as_ref())?;
    if lab.len() != n {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            n,
            lab.len()
        )));
    }
    if let Some(bad) = lab.iter().find(|&&l| l > 9) {
        return Err(Error::Format {
            path: labels.as_ref().to_path_buf(),
            reason: format!("label {bad} outside 0..=9"),
        });
    }
    Dataset::new(px.iter().map(|&p| p as f32 / 255.0).collect(), lab, rows, cols)
}

/// Standard MNIST file names inside `dir`: `(train images, train labels,
/// test images, test labels)`.
pub fn mnist_paths(dir: impl AsRef<Path>) -> [PathBuf; 4] {
    let d = dir.as_ref();
    [
        d.join("train-images-idx3-ubyte"),
        d.join("train-labels-idx1-ubyte"),
        d.join("t10k-images-idx3-ubyte"),
        d.join("t10k-labels-idx1-ubyte"),
    ]
}

pub fn write_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let n = pixels.len() / (rows * cols);
    let mut f = File::create(path)?;
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        f.write_all(&v.to_be_bytes())?;
    }
    f.write_all(pixels)?;
    Ok(())
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(&LABELS_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}
