//! The IDX container used by the MNIST family: a big-endian magic
//! (`0x0000 08 nd` for unsigned bytes), `nd` big-endian `u32` dimension
//! sizes, then the row-major payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::task::{TaskData, Targets};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn idx_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| idx_err(path, bytes.len(), format!("file truncated while reading u32 at {at}")))
}

/// Parse an unsigned-byte IDX file.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path)?;
    parse_idx(&bytes, path)
}

pub(crate) fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    let magic = be_u32(bytes, 0, path)?;
    if magic >> 16 != 0 {
        return Err(idx_err(path, 0, format!("bad magic 0x{magic:08x}: leading bytes must be zero")));
    }
    let dtype = (magic >> 8) & 0xff;
    if dtype != 0x08 {
        return Err(idx_err(path, 2, format!("unsupported element type 0x{dtype:02x} (only 0x08 = u8)")));
    }
    let ndim = (magic & 0xff) as usize;
    if ndim == 0 {
        return Err(idx_err(path, 3, "zero dimensions"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for d in 0..ndim {
        dims.push(be_u32(bytes, 4 + 4 * d, path)? as usize);
    }
    let header = 4 + 4 * ndim;
    let expected: usize = dims.iter().product();
    if expected == 0 {
        return Err(idx_err(path, header, "empty payload"));
    }
    let available = bytes.len() - header;
    if available < expected {
        return Err(idx_err(
            path,
            bytes.len(),
            format!("payload truncated: need {expected} bytes after header, found {available}"),
        ));
    }
    if available > expected {
        return Err(idx_err(path, header + expected, format!("{} trailing bytes", available - expected)));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&(0x0000_0800u32 | array.dims.len() as u32).to_be_bytes());
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

/// Load an image file (`0x00000803`) and label file (`0x00000801`) into a
/// classification task. Pixels are scaled to `[0, 1]`; the class count is
/// `max label + 1`.
pub fn load_idx(images: &Path, labels: &Path, task_id: &str) -> Result<TaskData> {
    let img = read_idx(images)?;
    if img.dims.len() != 3 {
        return Err(idx_err(
            images,
            0,
            format!("expected image magic 0x{IMAGES_MAGIC:08x} (3 dims), found {} dims", img.dims.len()),
        ));
    }
    let lab = read_idx(labels)?;
    if lab.dims.len() != 1 {
        return Err(idx_err(
            labels,
            0,
            format!("expected label magic 0x{LABELS_MAGIC:08x} (1 dim), found {} dims", lab.dims.len()),
        ));
    }
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(idx_err(
            labels,
            4,
            format!("label count {} does not match image count {n}", lab.dims[0]),
        ));
    }
    let dim = img.dims[1] * img.dims[2];
    let pixels: Vec<f64> = img.data.iter().map(|&b| b as f64 / 255.0).collect();
    let labels_v: Vec<usize> = lab.data.iter().map(|&b| b as usize).collect();
    let num_classes = labels_v.iter().max().map_or(0, |m| m + 1);
    TaskData::new(
        task_id,
        DenseTensor::matrix(n, dim, pixels)?,
        Targets::Classes {
            labels: labels_v,
            num_classes,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_fixture() -> Vec<u8> {
        // 2 images of 3×3
        let mut b = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 3];
        b.extend((0u8..18).map(|v| v * 15));
        b
    }

    fn label_fixture(n: u8) -> Vec<u8> {
        let mut b = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, n];
        b.extend((0..n).map(|i| i % 2));
        b
    }

    #[test]
    fn loads_hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        fs::write(&ip, image_fixture()).unwrap();
        fs::write(&lp, label_fixture(2)).unwrap();
        let task = load_idx(&ip, &lp, "t").unwrap();
        assert_eq!(task.len(), 2);
        assert_eq!(task.input_dim(), 9);
        assert_eq!(task.labels().unwrap(), &[0, 1]);
        assert_eq!(task.inputs().data()[1], 15.0 / 255.0);
        assert_eq!(task.inputs().data()[17], 1.0);
    }

    #[test]
    fn empty_payload_is_an_error() {
        let err = parse_idx(&[0, 0, 8, 1, 0, 0, 0, 0], Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("empty payload"));
    }

    #[test]
    fn truncation_reports_offset() {
        let mut b = image_fixture();
        b.truncate(20);
        match parse_idx(&b, Path::new("x")).unwrap_err() {
            Error::Idx { offset, .. } => assert_eq!(offset, 20),
            e => panic!("unexpected {e}"),
        }
        assert!(parse_idx(&[0, 0, 8], Path::new("x")).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let mut b = label_fixture(2);
        b[0] = 1;
        assert!(parse_idx(&b, Path::new("x")).is_err());
        let mut b = label_fixture(2);
        b[2] = 0x0d;
        assert!(parse_idx(&b, Path::new("x")).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        fs::write(&ip, image_fixture()).unwrap();
        fs::write(&lp, label_fixture(3)).unwrap();
        assert!(load_idx(&ip, &lp, "t").unwrap_err().to_string().contains("does not match"));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a");
        let arr = IdxArray { dims: vec![2, 2, 2], data: (0..8).collect() };
        write_idx(&p, &arr).unwrap();
        assert_eq!(read_idx(&p).unwrap(), arr);
        assert_eq!(&fs::read(&p).unwrap()[..4], &IMAGES_MAGIC.to_be_bytes());
    }
}
