//! CSV and IDX dataset files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use inas_core::data::{Dataset, InputShape};

use crate::error::{AppError, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Column holding the integer class in CSV files.
pub const LABEL_COLUMN: &str = "label";

/// Maps raw label values onto `0..n_classes` in ascending order.
fn remap_labels(raw: &[i64]) -> (Vec<usize>, Vec<i64>) {
    let values: Vec<i64> = raw.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<i64, usize> = values.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    (raw.iter().map(|v| index[v]).collect(), values)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

/// Reads a headed CSV file: the `label` column holds integer classes, every
/// other column is a numeric feature (kept in column order). Labels are
/// remapped densely; the original values stay in `class_values()`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(AppError::csv(path))?;
    let headers = reader.headers().map_err(AppError::csv(path))?.clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == LABEL_COLUMN)
        .ok_or_else(|| AppError::Data(format!("{}: no `{LABEL_COLUMN}` column", path.display())))?;
    let dim = headers.len() - 1;
    let mut features = Vec::new();
    let mut raw = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(AppError::csv(path))?;
        let row = line + 2;
        for (c, field) in record.iter().enumerate() {
            let field = field.trim();
            if c == label_col {
                let v = field.parse::<i64>().map_err(|_| {
                    AppError::Data(format!("{}:{row}: label `{field}` is not an integer", path.display()))
                })?;
                raw.push(v);
            } else {
                let v = field.parse::<f32>().map_err(|_| {
                    AppError::Data(format!("{}:{row}: feature `{field}` is not numeric", path.display()))
                })?;
                features.push(v);
            }
        }
    }
    if raw.is_empty() {
        return Err(AppError::Data(format!("{}: no data rows", path.display())));
    }
    let (labels, values) = remap_labels(&raw);
    let n_classes = values.len();
    Ok(Dataset::with_class_values(dataset_name(path), InputShape::Flat { dim }, features, labels, n_classes, values)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'a Path,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AppError::Data(format!("{}: truncated IDX file", self.what.display())))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(AppError::io(path))
}

fn check_magic(r: &mut Reader, want: u32) -> Result<()> {
    let magic = r.u32()?;
    if magic != want {
        return Err(AppError::Data(format!("{}: bad IDX magic {magic:#010x}, expected {want:#010x}", r.what.display())));
    }
    Ok(())
}

/// Reads an IDX image/label pair. Pixels are scaled to `[0, 1]` and labels
/// remapped densely as for CSV files.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read_file(images_path)?;
    let mut r = Reader { bytes: &image_bytes, pos: 0, what: images_path };
    check_magic(&mut r, IDX_IMAGES)?;
    let n = r.u32()? as usize;
    let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
    let pixels = r.take(n * rows * cols)?;
    let features: Vec<f32> = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();

    let label_bytes = read_file(labels_path)?;
    let mut r = Reader { bytes: &label_bytes, pos: 0, what: labels_path };
    check_magic(&mut r, IDX_LABELS)?;
    let n_labels = r.u32()? as usize;
    if n_labels != n {
        return Err(AppError::Data(format!("{n} images but {n_labels} labels")));
    }
    let raw: Vec<i64> = r.take(n)?.iter().map(|&b| i64::from(b)).collect();
    if raw.is_empty() {
        return Err(AppError::Data(format!("{}: no items", images_path.display())));
    }
    let (labels, values) = remap_labels(&raw);
    let shape = InputShape::Image { height: rows, width: cols, channels: 1 };
    Ok(Dataset::with_class_values(dataset_name(images_path), shape, features, labels, values.len(), values)?)
}

/// Writes a single-channel image dataset as an IDX pair (pixels rounded to
/// bytes, labels written as their original values).
pub fn write_idx(data: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let InputShape::Image { height, width, channels: 1 } = data.shape() else {
        return Err(AppError::Data("IDX output needs single-channel image data".into()));
    };
    let mut images = Vec::with_capacity(16 + data.features().len());
    for v in [IDX_IMAGES, data.len() as u32, height as u32, width as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(data.features().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&IDX_LABELS.to_be_bytes());
    labels.extend_from_slice(&(data.len() as u32).to_be_bytes());
    for &y in data.labels() {
        let v = data.class_values()[y];
        let byte = u8::try_from(v).map_err(|_| AppError::Data(format!("label {v} does not fit in a byte")))?;
        labels.push(byte);
    }
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    fs::write(images_path, images).map_err(AppError::io(images_path))?;
    fs::write(labels_path, labels).map_err(AppError::io(labels_path))
}

/// Reinterprets flat features as `height x width x channels` images.
pub fn reshape(data: Dataset, shape: InputShape) -> Result<Dataset> {
    if shape.len() != data.dim() {
        return Err(AppError::Data(format!("shape {shape:?} does not hold {} features", data.dim())));
    }
    let values = data.class_values().to_vec();
    let (name, features, labels, n_classes) = (data.name.clone(), data.features().to_vec(), data.labels().to_vec(), data.n_classes());
    Ok(Dataset::with_class_values(name, shape, features, labels, n_classes, values)?)
}
