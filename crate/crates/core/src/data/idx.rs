//! IDX containers: big-endian `0x0000 08 NN` magic, `NN` u32 dimensions, then
//! unsigned bytes.

use std::io::Write;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, WriteBytesExt};
use priorgan_autodiff::Tensor;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_header(bytes: &[u8], path: &Path, magic: u32) -> Result<(Vec<usize>, usize)> {
    if bytes.len() < 4 {
        return Err(Error::parse(
            path,
            format!("truncated header: expected 4 bytes at offset 0, found {}", bytes.len()),
        ));
    }
    let found = BigEndian::read_u32(&bytes[..4]);
    if found != magic {
        return Err(Error::parse(
            path,
            format!("bad magic at offset 0: expected {magic:#010x}, found {found:#010x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let header_len = 4 + 4 * rank;
    if bytes.len() < header_len {
        return Err(Error::parse(
            path,
            format!("truncated header: expected {header_len} bytes, found {}", bytes.len()),
        ));
    }
    let dims = (0..rank)
        .map(|i| BigEndian::read_u32(&bytes[4 + 4 * i..8 + 4 * i]) as usize)
        .collect();
    Ok((dims, header_len))
}

fn payload<'a>(bytes: &'a [u8], path: &Path, offset: usize, expected: usize) -> Result<&'a [u8]> {
    let actual = bytes.len() - offset;
    if actual != expected {
        let what = if actual < expected { "truncated" } else { "oversized" };
        return Err(Error::parse(
            path,
            format!("{what} payload at offset {offset}: expected {expected} bytes, found {actual}"),
        ));
    }
    Ok(&bytes[offset..])
}

/// Parses an image file into `(count, height, width, pixels)`.
pub fn read_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let (dims, offset) = read_header(bytes, path, IMAGES_MAGIC)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let data = payload(bytes, path, offset, n * h * w)?;
    Ok((n, h, w, data.to_vec()))
}

pub fn read_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let (dims, offset) = read_header(bytes, path, LABELS_MAGIC)?;
    Ok(payload(bytes, path, offset, dims[0])?.to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image file and optional label file. Features are raw pixel
/// values in `[0, 255]`, one flattened image per row.
pub fn load_idx(images: &Path, labels: Option<&Path>, classes: usize) -> Result<Dataset> {
    let (n, h, w, pixels) = read_idx_images(&read_file(images)?, images)?;
    let labels = match labels {
        Some(path) => {
            let raw = read_idx_labels(&read_file(path)?, path)?;
            if raw.len() != n {
                return Err(Error::parse(
                    path,
                    format!("label count {} does not match image count {n}", raw.len()),
                ));
            }
            if let Some((i, &l)) = raw.iter().enumerate().find(|(_, &l)| l as usize >= classes) {
                return Err(Error::parse(
                    path,
                    format!("label {l} at offset {} out of range for {classes} classes", 8 + i),
                ));
            }
            Some(raw.into_iter().map(usize::from).collect())
        }
        None => None,
    };
    let features = Tensor::matrix(n, h * w, pixels.into_iter().map(f64::from).collect())?;
    Dataset::new(features, labels, classes, Some((h, w)))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Writes `n` images of `h x w` bytes.
pub fn write_idx_images(path: &Path, h: usize, w: usize, pixels: &[u8]) -> Result<()> {
    if h * w == 0 || !pixels.len().is_multiple_of(h * w) {
        return Err(Error::contract(format!(
            "{} pixels do not tile {h}x{w} images",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, (pixels.len() / (h * w)) as u32, h as u32, w as u32] {
        out.write_u32::<BigEndian>(v).expect("vec write");
    }
    out.extend_from_slice(pixels);
    write_all(path, &out)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    for v in [LABELS_MAGIC, labels.len() as u32] {
        out.write_u32::<BigEndian>(v).expect("vec write");
    }
    out.extend_from_slice(labels);
    write_all(path, &out)
}
