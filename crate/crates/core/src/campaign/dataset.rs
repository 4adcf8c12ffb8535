//! Image datasets: IDX files (the MNIST distribution format) and a seeded
//! synthetic generator for offline runs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::DatasetError;
use crate::tensor::{Shape, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// An image with its dataset label.
pub type Labeled = (Tensor, u8);

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DatasetError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DatasetError::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Checks the magic and returns the dimension sizes plus the payload.
fn parse_idx(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8]), DatasetError> {
    let found = be_u32(bytes, 0)?;
    if found != magic {
        return Err(DatasetError::BadMagic {
            expected: magic,
            found,
        });
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|i| be_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let header = 4 + 4 * rank;
    let expected = dims.iter().product::<usize>();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(DatasetError::Truncated {
            expected: header + expected,
            found: bytes.len(),
        });
    }
    if payload.len() > expected {
        return Err(DatasetError::Invalid(format!(
            "{} trailing bytes after the IDX payload",
            payload.len() - expected
        )));
    }
    Ok((dims, payload))
}

/// Parses an IDX image file into `rows x cols x 1` tensors with values in `[0, 255]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>, DatasetError> {
    let (dims, payload) = parse_idx(bytes, IDX_IMAGES_MAGIC)?;
    let (rows, cols) = (dims[1], dims[2]);
    let size = rows * cols;
    if size == 0 {
        return Err(DatasetError::Invalid(
            "IDX images have a zero dimension".into(),
        ));
    }
    Ok(payload
        .chunks_exact(size)
        .map(|c| {
            let data = c.iter().map(|&b| f32::from(b)).collect();
            Tensor::new(Shape::new([rows, cols, 1]), data).expect("chunk length matches the shape")
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, DatasetError> {
    let (_, payload) = parse_idx(bytes, IDX_LABELS_MAGIC)?;
    Ok(payload.to_vec())
}

/// Loads a matching pair of IDX image and label files.
pub fn load_idx(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
) -> Result<Vec<Labeled>, DatasetError> {
    let images = parse_idx_images(&fs::read(images)?)?;
    let labels = parse_idx_labels(&fs::read(labels)?)?;
    if images.len() != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    Ok(images.into_iter().zip(labels).collect())
}

/// Serializes images (single channel, values rounded into `0..=255`) as an IDX image file.
pub fn encode_idx_images(images: &[Tensor]) -> Result<Vec<u8>, DatasetError> {
    let (rows, cols) = match images.first().map(|t| t.shape().as_image()) {
        Some(Some((h, w, 1))) => (h, w),
        Some(_) => {
            return Err(DatasetError::Invalid(
                "IDX images must be single-channel".into(),
            ))
        }
        None => (0, 0),
    };
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [
        IDX_IMAGES_MAGIC,
        images.len() as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for t in images {
        if t.shape().as_image() != Some((rows, cols, 1)) {
            return Err(DatasetError::Invalid(format!(
                "image of shape {} in a {rows}x{cols} set",
                t.shape()
            )));
        }
        out.extend(t.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Seeded stand-ins for handwritten digits: dark background with one to
/// three bright strokes, integer pixel values, and a random label in `0..10`.
///
/// `shape` must be an image shape; multi-channel images get a random tint
/// per stroke.
pub fn synthetic_dataset(
    count: usize,
    shape: &Shape,
    seed: u64,
) -> Result<Vec<Labeled>, DatasetError> {
    let (h, w, c) = shape
        .as_image()
        .ok_or_else(|| DatasetError::Invalid(format!("shape {shape} is not an image")))?;
    if h < 4 || w < 4 {
        return Err(DatasetError::Invalid(format!(
            "synthetic images need at least 4x4 pixels, got {h}x{w}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| synthetic_image(h, w, c, &mut rng))
        .collect())
}

fn synthetic_image(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> Labeled {
    let mut data = vec![0.0f32; h * w * c];
    let margin = |n: usize| (n / 8) as f32;
    for _ in 0..rng.gen_range(1..=3) {
        let p0 = (
            rng.gen_range(margin(h)..h as f32 - margin(h)),
            rng.gen_range(margin(w)..w as f32 - margin(w)),
        );
        let p1 = (
            rng.gen_range(margin(h)..h as f32 - margin(h)),
            rng.gen_range(margin(w)..w as f32 - margin(w)),
        );
        let thickness: f32 = rng.gen_range(0.8..2.2);
        let intensity: f32 = rng.gen_range(160.0..=255.0);
        let tint: Vec<f32> = (0..c)
            .map(|_| {
                if c == 1 {
                    1.0
                } else {
                    rng.gen_range(0.4..=1.0)
                }
            })
            .collect();
        for y in 0..h {
            for x in 0..w {
                let d = segment_distance((y as f32, x as f32), p0, p1);
                // Solid core with a one-pixel linear falloff.
                let v = intensity * (1.0 - (d - thickness).max(0.0)).max(0.0);
                if v <= 0.0 {
                    continue;
                }
                for (ch, t) in tint.iter().enumerate() {
                    let px = &mut data[(y * w + x) * c + ch];
                    *px = px.max((v * t).round());
                }
            }
        }
    }
    let label = rng.gen_range(0..10u8);
    let image = Tensor::new(Shape::new([h, w, c]), data).expect("buffer matches the shape");
    (image, label)
}

fn segment_distance(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dy + (p.1 - a.1) * dx) / len2).clamp(0.0, 1.0)
    };
    let (qy, qx) = (a.0 + t * dy, a.1 + t * dx);
    ((p.0 - qy).powi(2) + (p.1 - qx).powi(2)).sqrt()
}
