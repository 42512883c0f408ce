//! Binary containers: the STV dataset file and the model checkpoint.
//!
//! STV layout (all integers little-endian): magic `STV1`; `T H W D` as u32;
//! `sample_count` as u32; payload of `sample_count * T*H*W*D` f32 values;
//! optional trailing label block of `sample_count` u32 class indices
//! (0-based). Payload floats are f32 on disk and promoted to f64 in memory.
//!
//! Checkpoint layout: magic `STRN`; mode and activation bytes; the two L1
//! weights as f64; the eight layer dimensions as u32; the grid mask; then
//! length-prefixed named tensors as raw f64 bits, so a load/save round trip
//! is bit-exact.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::graph::{GridLayout, LayoutError};
use crate::loss::LossConfig;
use crate::model::{Mode, ModelDims, StrnnParams};
use crate::numerics::{Activation, Rng};
use crate::volume::{Dataset, SpatioTemporalVolume};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("truncated file: {context} needs {needed} bytes, {found} available")]
    Truncated {
        context: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("dimension overflow: {0}")]
    DimOverflow(String),
    #[error("{0} trailing bytes after the expected end of file")]
    TrailingBytes(usize),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("dataset has no label block")]
    MissingLabels,
    #[error("label {label} out of range for {classes} classes (sample {index})")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        classes: usize,
    },
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const STV_MAGIC: &[u8; 4] = b"STV1";
const CHECKPOINT_MAGIC: &[u8; 4] = b"STRN";

/// In-memory form of an STV file.
#[derive(Clone, Debug, PartialEq)]
pub struct StvFile {
    pub t_len: u32,
    pub height: u32,
    pub width: u32,
    pub depth: u32,
    pub volumes: Vec<SpatioTemporalVolume>,
    pub labels: Option<Vec<u32>>,
}

impl StvFile {
    /// Wraps volumes (all sharing one shape) for writing.
    pub fn from_volumes(volumes: Vec<SpatioTemporalVolume>, labels: Option<Vec<u32>>) -> Self {
        assert!(!volumes.is_empty(), "cannot build an STV file with no samples");
        let first = &volumes[0];
        let dims = (first.t_len(), first.height(), first.width(), first.depth());
        for v in &volumes {
            assert_eq!(
                (v.t_len(), v.height(), v.width(), v.depth()),
                dims,
                "all samples in one file must share a shape"
            );
        }
        if let Some(labels) = &labels {
            assert_eq!(labels.len(), volumes.len(), "one label per sample");
        }
        StvFile {
            t_len: dims.0 as u32,
            height: dims.1 as u32,
            width: dims.2 as u32,
            depth: dims.3 as u32,
            volumes,
            labels,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STV_MAGIC);
        for dim in [self.t_len, self.height, self.width, self.depth] {
            out.extend_from_slice(&dim.to_le_bytes());
        }
        out.extend_from_slice(&(self.volumes.len() as u32).to_le_bytes());
        for v in &self.volumes {
            for &x in v.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        if let Some(labels) = &self.labels {
            for &y in labels {
                out.extend_from_slice(&y.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<StvFile, DataError> {
        let mut r = Reader::new(bytes);
        r.magic(STV_MAGIC, "STV1")?;
        let t_len = r.u32("T")?;
        let height = r.u32("H")?;
        let width = r.u32("W")?;
        let depth = r.u32("D")?;
        let count = r.u32("sample count")?;

        let per_sample = (t_len as u64)
            .checked_mul(height as u64)
            .and_then(|x| x.checked_mul(width as u64))
            .and_then(|x| x.checked_mul(depth as u64))
            .ok_or_else(|| DataError::DimOverflow(format!("{t_len}x{height}x{width}x{depth}")))?;
        if per_sample == 0 {
            return Err(DataError::Malformed("zero-sized sample shape".into()));
        }
        let payload_floats = per_sample
            .checked_mul(count as u64)
            .ok_or_else(|| DataError::DimOverflow(format!("{count} samples of {per_sample} values")))?;
        let payload_bytes = payload_floats
            .checked_mul(4)
            .filter(|&b| b <= usize::MAX as u64)
            .ok_or_else(|| DataError::DimOverflow(format!("{payload_floats} payload floats")))?
            as usize;

        let payload = r.take(payload_bytes, "payload")?;
        let mut volumes = Vec::with_capacity(count as usize);
        for s in 0..count as usize {
            let start = s * per_sample as usize * 4;
            let data: Vec<f64> = payload[start..start + per_sample as usize * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            volumes.push(SpatioTemporalVolume::from_vec(
                t_len as usize,
                height as usize,
                width as usize,
                depth as usize,
                data,
            ));
        }

        let labels = match r.remaining() {
            0 => None,
            n if n == count as usize * 4 => {
                let block = r.take(n, "labels")?;
                Some(
                    block
                        .chunks_exact(4)
                        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .collect(),
                )
            }
            n => return Err(DataError::TrailingBytes(n)),
        };

        Ok(StvFile {
            t_len,
            height,
            width,
            depth,
            volumes,
            labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<StvFile, DataError> {
        StvFile::from_bytes(&fs::read(path)?)
    }

    /// Converts to a labeled dataset, validating labels against `classes`.
    pub fn into_dataset(self, classes: usize) -> Result<Dataset, DataError> {
        let labels = self.labels.ok_or(DataError::MissingLabels)?;
        for (index, &label) in labels.iter().enumerate() {
            if label as usize >= classes {
                return Err(DataError::LabelOutOfRange {
                    index,
                    label,
                    classes,
                });
            }
        }
        Ok(Dataset::new(
            self.volumes,
            labels.into_iter().map(|y| y as usize).collect(),
        ))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, at: 0 }
    }

    /// A file too short to hold the magic is a bad-magic file, not a
    /// truncated one.
    fn magic(&mut self, expected: &'static [u8; 4], name: &'static str) -> Result<(), DataError> {
        if self.remaining() < 4 || &self.bytes[self.at..self.at + 4] != expected {
            return Err(DataError::BadMagic {
                expected: name,
                found: format!("{:?}", &self.bytes[self.at..self.bytes.len().min(self.at + 4)]),
            });
        }
        self.at += 4;
        Ok(())
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }

    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], DataError> {
        if self.remaining() < n {
            return Err(DataError::Truncated {
                context,
                needed: n,
                found: self.remaining(),
            });
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, DataError> {
        let b = self.take(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self, context: &'static str) -> Result<u8, DataError> {
        Ok(self.take(1, context)?[0])
    }

    fn f64(&mut self, context: &'static str) -> Result<f64, DataError> {
        let b = self.take(8, context)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }
}

fn mode_byte(mode: Mode) -> u8 {
    match mode {
        Mode::Strnn => 0,
        Mode::SrnnOnly => 1,
        Mode::TrnnOnly => 2,
        Mode::NonSparse => 3,
    }
}

fn mode_from_byte(b: u8) -> Result<Mode, DataError> {
    match b {
        0 => Ok(Mode::Strnn),
        1 => Ok(Mode::SrnnOnly),
        2 => Ok(Mode::TrnnOnly),
        3 => Ok(Mode::NonSparse),
        other => Err(DataError::Malformed(format!("unknown mode byte {other}"))),
    }
}

pub fn checkpoint_to_bytes(model: &StrnnParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(mode_byte(model.mode));
    out.push(match model.activation {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
    });
    out.extend_from_slice(&model.loss.lambda1.to_le_bytes());
    out.extend_from_slice(&model.loss.lambda2.to_le_bytes());
    let d = &model.dims;
    for dim in [
        d.input_dim,
        d.srnn_hidden,
        d.srnn_out,
        d.k_p,
        d.trnn_hidden,
        d.l_p,
        d.classes,
        d.seq_len,
    ] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(model.layout.height() as u32).to_le_bytes());
    out.extend_from_slice(&(model.layout.width() as u32).to_le_bytes());
    for &occ in model.layout.occupancy() {
        out.push(occ as u8);
    }

    let tensors = model.named_tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let (rows, cols) = t.shape();
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for &x in t.values() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<StrnnParams, DataError> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC, "STRN")?;
    let mode = mode_from_byte(r.u8("mode")?)?;
    let activation = match r.u8("activation")? {
        0 => Activation::Relu,
        1 => Activation::Sigmoid,
        other => {
            return Err(DataError::Malformed(format!(
                "unknown activation byte {other}"
            )))
        }
    };
    let lambda1 = r.f64("lambda1")?;
    let lambda2 = r.f64("lambda2")?;
    let mut dim = |context| r.u32(context).map(|d| d as usize);
    let dims = ModelDims {
        input_dim: dim("input_dim")?,
        srnn_hidden: dim("srnn_hidden")?,
        srnn_out: dim("srnn_out")?,
        k_p: dim("k_p")?,
        trnn_hidden: dim("trnn_hidden")?,
        l_p: dim("l_p")?,
        classes: dim("classes")?,
        seq_len: dim("seq_len")?,
    };
    let height = r.u32("layout height")? as usize;
    let width = r.u32("layout width")? as usize;
    let mask = r.take(
        height
            .checked_mul(width)
            .ok_or_else(|| DataError::DimOverflow(format!("layout {height}x{width}")))?,
        "layout mask",
    )?;
    let layout = GridLayout::new(height, width, mask.iter().map(|&b| b != 0).collect())?;

    // Rebuild the skeleton, then overwrite every tensor from the blobs.
    let mut model = StrnnParams::init(
        mode,
        dims,
        layout,
        activation,
        lambda1,
        lambda2,
        &mut Rng::new(0),
    );
    // NonSparse zeroes the lambdas at init; restore the stored values
    // (they are zero for genuinely non-sparse checkpoints anyway).
    model.loss = LossConfig::new(lambda1, lambda2, dims.classes);

    let tensor_count = r.u32("tensor count")? as usize;
    let mut blobs: Vec<(String, usize, usize, Vec<f64>)> = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name_len = r.u32("tensor name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| DataError::Malformed("tensor name is not UTF-8".into()))?;
        let rows = r.u32("tensor rows")? as usize;
        let cols = r.u32("tensor cols")? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| DataError::DimOverflow(format!("tensor {name}: {rows}x{cols}")))?;
        let raw = r.take(n * 8, "tensor data")?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        blobs.push((name, rows, cols, data));
    }
    if r.remaining() > 0 {
        return Err(DataError::TrailingBytes(r.remaining()));
    }

    let mut expected = model.named_tensors_mut();
    if expected.len() != blobs.len() {
        return Err(DataError::Malformed(format!(
            "checkpoint has {} tensors, model shape needs {}",
            blobs.len(),
            expected.len()
        )));
    }
    for ((name, tensor), (blob_name, rows, cols, data)) in expected.iter_mut().zip(blobs) {
        if *name != blob_name {
            return Err(DataError::Malformed(format!(
                "tensor order mismatch: expected {name}, found {blob_name}"
            )));
        }
        let dst = tensor.values_mut();
        if dst.len() != rows * cols {
            return Err(DataError::Malformed(format!(
                "tensor {name} has shape {rows}x{cols}, expected {} values",
                dst.len()
            )));
        }
        dst.copy_from_slice(&data);
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &StrnnParams) -> Result<(), DataError> {
    fs::write(path, checkpoint_to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<StrnnParams, DataError> {
    checkpoint_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn empty_or_wrong_prefix_is_bad_magic() {
        assert!(matches!(
            StvFile::from_bytes(&[]),
            Err(DataError::BadMagic { .. })
        ));
        assert!(matches!(
            StvFile::from_bytes(b"ST"),
            Err(DataError::BadMagic { .. })
        ));
        assert!(matches!(
            StvFile::from_bytes(b"NOPE...."),
            Err(DataError::BadMagic { .. })
        ));
    }

    #[test]
    fn minimal_file_has_expected_size_and_round_trips() {
        let mut v = SpatioTemporalVolume::zeros(1, 1, 1, 1);
        v.data_mut()[0] = 2.5;
        let unlabeled = StvFile::from_volumes(vec![v.clone()], None);
        // magic + 4 dims + count = 24 header bytes, one f32 payload.
        assert_eq!(unlabeled.to_bytes().len(), 4 + 16 + 4 + 4);
        let labeled = StvFile::from_volumes(vec![v], Some(vec![0]));
        assert_eq!(labeled.to_bytes().len(), 4 + 16 + 4 + 4 + 4);

        let back = StvFile::from_bytes(&labeled.to_bytes()).unwrap();
        assert_eq!(back, labeled);
        assert_eq!(back.volumes[0].data()[0], 2.5);
    }

    #[test]
    fn payload_round_trips_bitwise_at_f32_precision() {
        let mut rng = Rng::new(3);
        let volumes: Vec<SpatioTemporalVolume> = (0..1000)
            .map(|_| {
                SpatioTemporalVolume::from_vec(
                    2,
                    3,
                    2,
                    2,
                    (0..24).map(|_| rng.uniform(-10.0, 10.0) as f32 as f64).collect(),
                )
            })
            .collect();
        let labels: Vec<u32> = (0..1000).map(|i| i % 3).collect();
        let file = StvFile::from_volumes(volumes, Some(labels));
        let bytes = file.to_bytes();
        let back = StvFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_payload_is_detected() {
        let v = SpatioTemporalVolume::zeros(2, 2, 2, 2);
        let bytes = StvFile::from_volumes(vec![v], None).to_bytes();
        assert!(matches!(
            StvFile::from_bytes(&bytes[..bytes.len() - 3]),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn stray_trailing_bytes_are_rejected() {
        let v = SpatioTemporalVolume::zeros(1, 1, 1, 1);
        let mut bytes = StvFile::from_volumes(vec![v], None).to_bytes();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(
            StvFile::from_bytes(&bytes),
            Err(DataError::TrailingBytes(3))
        ));
    }

    #[test]
    fn dim_overflow_is_detected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"STV1");
        for _ in 0..4 {
            bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        bytes.extend_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            StvFile::from_bytes(&bytes),
            Err(DataError::DimOverflow(_))
        ));
    }

    #[test]
    fn labels_are_validated_against_class_count() {
        let v = SpatioTemporalVolume::zeros(1, 1, 1, 1);
        let file = StvFile::from_volumes(vec![v], Some(vec![5]));
        let parsed = StvFile::from_bytes(&file.to_bytes()).unwrap();
        assert!(matches!(
            parsed.into_dataset(3),
            Err(DataError::LabelOutOfRange { label: 5, .. })
        ));
    }

    fn small_model(mode: Mode) -> StrnnParams {
        let mut rng = Rng::new(11);
        StrnnParams::init(
            mode,
            ModelDims {
                input_dim: 2,
                srnn_hidden: 3,
                srnn_out: 3,
                k_p: 2,
                trnn_hidden: 3,
                l_p: 2,
                classes: 3,
                seq_len: 2,
            },
            GridLayout::from_text("2 2\n##\n#.\n").unwrap(),
            Activation::Sigmoid,
            0.05,
            0.01,
            &mut rng,
        )
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        for mode in [Mode::Strnn, Mode::SrnnOnly, Mode::TrnnOnly, Mode::NonSparse] {
            let model = small_model(mode);
            let bytes = checkpoint_to_bytes(&model);
            let back = checkpoint_from_bytes(&bytes).unwrap();
            assert_eq!(back.mode, model.mode);
            assert_eq!(back.dims, model.dims);
            assert_eq!(back.layout, model.layout);
            assert_eq!(back.activation, model.activation);
            assert_eq!(back.loss, model.loss);
            let a = model.flatten_params();
            let b = back.flatten_params();
            assert_eq!(a.len(), b.len());
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            // And the serialized form itself is stable.
            assert_eq!(checkpoint_to_bytes(&back), bytes);
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(matches!(
            checkpoint_from_bytes(b"STVX"),
            Err(DataError::BadMagic { .. })
        ));
        let model = small_model(Mode::Strnn);
        let mut bytes = checkpoint_to_bytes(&model);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(
            checkpoint_from_bytes(&bytes),
            Err(DataError::Truncated { .. })
        ));
    }
}
