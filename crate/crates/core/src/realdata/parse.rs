use ndarray::Array4;
use thiserror::Error;

/// Failures decoding the binary dataset formats.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("bad magic number {0:#010x}")]
    BadMagic(u32),
    #[error("stream truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("declared dimensions {0:?} overflow the address space")]
    DimensionOverflow(Vec<u32>),
    #[error("label {label} at record {index} outside 0..={max}")]
    InvalidLabel { index: usize, label: u8, max: u8 },
    #[error("stream length {len} is not valid: {reason}")]
    BadLength { len: usize, reason: &'static str },
}

/// Images with pixel values in `[0, 1]`, laid out `count × height × width ×
/// channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub data: Array4<f64>,
    pub labels: Vec<u8>,
}

impl ImageTensor {
    pub fn count(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[3]
    }
}

/// Decoded content of an IDX stream.
#[derive(Debug, Clone, PartialEq)]
pub enum IdxContent {
    /// `count × rows × cols` images (labels left empty).
    Images(ImageTensor),
    Labels(Vec<u8>),
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const MAX_DIGIT: u8 = 9;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, ParseError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(ParseError::Truncated { needed: at + 4, found: bytes.len() })
}

/// Parses an unsigned-byte IDX stream of rank 1 (labels) or 3 (images).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxContent, ParseError> {
    let magic = be_u32(bytes, 0)?;
    let rank = match magic {
        IDX_IMAGES_MAGIC => 3,
        IDX_LABELS_MAGIC => 1,
        other => return Err(ParseError::BadMagic(other)),
    };
    let dims = (0..rank).map(|k| be_u32(bytes, 4 + 4 * k)).collect::<Result<Vec<u32>, _>>()?;
    let header = 4 + 4 * rank;
    let payload = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|p| p.checked_add(header).map(|_| p))
        .ok_or_else(|| ParseError::DimensionOverflow(dims.clone()))?;
    let found = bytes.len();
    if found < header + payload {
        return Err(ParseError::Truncated { needed: header + payload, found });
    }
    if found > header + payload {
        return Err(ParseError::BadLength { len: found, reason: "trailing bytes after the declared payload" });
    }
    let body = &bytes[header..];
    if rank == 1 {
        if let Some((index, &label)) = body.iter().enumerate().find(|(_, &l)| l > MAX_DIGIT) {
            return Err(ParseError::InvalidLabel { index, label, max: MAX_DIGIT });
        }
        return Ok(IdxContent::Labels(body.to_vec()));
    }
    let shape = (dims[0] as usize, dims[1] as usize, dims[2] as usize, 1);
    let data = Array4::from_shape_vec(shape, body.iter().map(|&b| b as f64 / 255.0).collect())
        .expect("payload length matches the declared shape");
    Ok(IdxContent::Images(ImageTensor { data, labels: Vec::new() }))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageTensor, ParseError> {
    match parse_idx(bytes)? {
        IdxContent::Images(t) => Ok(t),
        IdxContent::Labels(_) => Err(ParseError::BadMagic(IDX_LABELS_MAGIC)),
    }
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, ParseError> {
    match parse_idx(bytes)? {
        IdxContent::Labels(l) => Ok(l),
        IdxContent::Images(_) => Err(ParseError::BadMagic(IDX_IMAGES_MAGIC)),
    }
}

/// Serializes labels or images back to IDX; used for fixtures and data
/// conversion.
pub fn encode_idx(content: &IdxContent) -> Vec<u8> {
    let mut out = Vec::new();
    match content {
        IdxContent::Labels(l) => {
            out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
            out.extend_from_slice(&(l.len() as u32).to_be_bytes());
            out.extend_from_slice(l);
        }
        IdxContent::Images(t) => {
            out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
            for d in [t.count(), t.height(), t.width()] {
                out.extend_from_slice(&(d as u32).to_be_bytes());
            }
            out.extend(t.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        }
    }
    out
}

pub const CIFAR_RECORD: usize = 3073;
const CIFAR_SIDE: usize = 32;
const CIFAR_PLANE: usize = CIFAR_SIDE * CIFAR_SIDE;

/// Parses a CIFAR-10 binary batch: records of one label byte followed by the
/// red, green and blue 32×32 planes in row-major order.
pub fn parse_cifar10_bin(bytes: &[u8]) -> Result<ImageTensor, ParseError> {
    let len = bytes.len();
    if len == 0 || len % CIFAR_RECORD != 0 {
        return Err(ParseError::BadLength { len, reason: "not a positive multiple of 3073" });
    }
    let count = len / CIFAR_RECORD;
    let mut data = Array4::<f64>::zeros((count, CIFAR_SIDE, CIFAR_SIDE, 3));
    let mut labels = Vec::with_capacity(count);
    for (index, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > MAX_DIGIT {
            return Err(ParseError::InvalidLabel { index, label: rec[0], max: MAX_DIGIT });
        }
        labels.push(rec[0]);
        for c in 0..3 {
            let plane = &rec[1 + c * CIFAR_PLANE..1 + (c + 1) * CIFAR_PLANE];
            for (k, &b) in plane.iter().enumerate() {
                data[[index, k / CIFAR_SIDE, k % CIFAR_SIDE, c]] = b as f64 / 255.0;
            }
        }
    }
    Ok(ImageTensor { data, labels })
}
