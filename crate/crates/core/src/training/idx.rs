//! Reader for the IDX files MNIST ships in: big-endian magic (0x00000803 for
//! images, 0x00000801 for labels), big-endian u32 dimensions, then raw bytes.

use std::path::Path;

use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Idx {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn parse_header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let got = be_u32(bytes, 0).ok_or_else(|| malformed(path, "file shorter than its header"))?;
    if got != magic {
        return Err(malformed(path, format!("magic {got:#010x}, expected {magic:#010x}")));
    }
    (0..dims)
        .map(|d| {
            be_u32(bytes, 4 + 4 * d)
                .map(|v| v as usize)
                .ok_or_else(|| malformed(path, "file shorter than its header"))
        })
        .collect()
}

pub fn read_images(path: &Path) -> Result<IdxImages> {
    let bytes = read(path)?;
    let dims = parse_header(path, &bytes, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    let want = count * rows * cols;
    if body.len() != want {
        return Err(malformed(path, format!("expected {want} pixel bytes, found {}", body.len())));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    let dims = parse_header(path, &bytes, LABELS_MAGIC, 1)?;
    let body = &bytes[8..];
    if body.len() != dims[0] {
        return Err(malformed(path, format!("expected {} labels, found {}", dims[0], body.len())));
    }
    Ok(body.to_vec())
}

/// Serialize images in IDX form.
pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend(IMAGES_MAGIC.to_be_bytes());
    for d in [images.count, images.rows, images.cols] {
        out.extend((d as u32).to_be_bytes());
    }
    out.extend(&images.pixels);
    out
}

/// Serialize labels in IDX form.
pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = IdxImages {
            count: 2,
            rows: 2,
            cols: 3,
            pixels: (0..12).collect(),
        };
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        std::fs::write(&ip, encode_images(&imgs)).unwrap();
        std::fs::write(&lp, encode_labels(&[7, 1])).unwrap();
        assert_eq!(read_images(&ip).unwrap(), imgs);
        assert_eq!(read_labels(&lp).unwrap(), vec![7, 1]);
        // Header bytes are big-endian.
        let raw = std::fs::read(&ip).unwrap();
        assert_eq!(&raw[..4], &[0, 0, 8, 3]);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let lp = dir.path().join("lbl");
        std::fs::write(&lp, encode_labels(&[1, 2, 3])).unwrap();
        let err = read_images(&lp).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
        let mut bytes = encode_labels(&[1, 2, 3]);
        bytes.pop();
        std::fs::write(&lp, bytes).unwrap();
        assert!(read_labels(&lp).is_err());
        std::fs::write(&lp, [0u8, 0]).unwrap();
        assert!(read_labels(&lp).is_err());
        assert!(matches!(read_labels(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
