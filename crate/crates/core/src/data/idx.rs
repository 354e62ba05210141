//! Reader for the big-endian IDX format used by MNIST.

use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, field: &'static str) -> Result<u32> {
        let end = self.pos + 4;
        let b = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(field, "file truncated inside header"))?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]`; the class
/// count is `max(label) + 1`.
pub fn load_idx_dataset(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx_dataset(&images, &labels)
}

pub fn parse_idx_dataset(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let mut img = Cursor { bytes: images, pos: 0 };
    let magic = img.u32("images.magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            "images.magic",
            format!("expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = img.u32("images.count")? as usize;
    let rows = img.u32("images.rows")? as usize;
    let cols = img.u32("images.cols")? as usize;

    let mut lab = Cursor { bytes: labels, pos: 0 };
    let magic = lab.u32("labels.magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            "labels.magic",
            format!("expected {LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let label_count = lab.u32("labels.count")? as usize;
    if label_count != count {
        return Err(Error::format(
            "labels.count",
            format!("{label_count} labels for {count} images"),
        ));
    }

    let pixels = rows * cols;
    let body = img.rest();
    if body.len() != count * pixels {
        return Err(Error::format(
            "images.data",
            format!("expected {} pixel bytes, found {}", count * pixels, body.len()),
        ));
    }
    let label_bytes = lab.rest();
    if label_bytes.len() != count {
        return Err(Error::format(
            "labels.data",
            format!("expected {count} label bytes, found {}", label_bytes.len()),
        ));
    }
    let num_classes = label_bytes.iter().copied().max().map_or(1, |m| m as usize + 1);
    let samples = body
        .chunks_exact(pixels.max(1))
        .take(count)
        .zip(label_bytes)
        .map(|(px, &label)| Sample {
            features: px.iter().map(|&p| f64::from(p) / 255.0).collect(),
            label: label as usize,
        })
        .collect();
    Dataset::new(samples, num_classes)
}
