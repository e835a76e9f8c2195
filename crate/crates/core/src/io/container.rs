//! Binary container for stacks and masks.
//!
//! Layout, little-endian: magic `MTRS`, version `u16`, kind `u8`
//! (0 = float32 values, 1 = uint8 mask), dims `m n b t` as `u32`,
//! value range `f32`, then the payload with `j` fastest and `l` slowest.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stack::{ImageStack, ObservationMask, StackDims};
use crate::tensor::{BinaryTensor, Tensor};

pub const MAGIC: &[u8; 4] = b"MTRS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Values,
    Mask,
}

impl PayloadKind {
    fn code(self) -> u8 {
        match self {
            PayloadKind::Values => 0,
            PayloadKind::Mask => 1,
        }
    }

    fn element_size(self) -> usize {
        match self {
            PayloadKind::Values => 4,
            PayloadKind::Mask => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainerHeader {
    pub version: u16,
    pub kind: PayloadKind,
    pub dims: StackDims,
    pub value_range: f32,
}

impl ContainerHeader {
    pub fn elements(&self) -> usize {
        self.dims.len()
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.kind.code());
        for d in self.dims.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.value_range.to_le_bytes());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Container {
    Stack(ImageStack),
    Mask(ObservationMask),
}

impl Container {
    pub fn dims(&self) -> StackDims {
        match self {
            Container::Stack(s) => s.dims(),
            Container::Mask(m) => m.dims(),
        }
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Visits storage offsets in payload order.
fn payload_order(dims: StackDims, mut f: impl FnMut(usize)) {
    let (m, n, b) = (dims.height, dims.width, dims.bands);
    for l in 0..dims.times {
        for k in 0..b {
            for i in 0..m {
                for j in 0..n {
                    f(i + m * (j + n * (k + b * l)));
                }
            }
        }
    }
}

fn header_for(kind: PayloadKind, dims: StackDims, value_range: f32) -> Result<ContainerHeader> {
    if dims.shape().iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::Shape(format!("{dims} does not fit 32-bit dimensions")));
    }
    Ok(ContainerHeader {
        version: VERSION,
        kind,
        dims,
        value_range,
    })
}

/// Values are stored as float32; entries not representable in f32 are rounded.
pub fn encode_stack(stack: &ImageStack) -> Result<Vec<u8>> {
    let dims = stack.dims();
    let header = header_for(PayloadKind::Values, dims, stack.value_range() as f32)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * dims.len());
    header.encode(&mut out);
    let data = stack.values().data();
    payload_order(dims, |p| out.extend_from_slice(&(data[p] as f32).to_le_bytes()));
    Ok(out)
}

pub fn encode_mask(mask: &ObservationMask) -> Result<Vec<u8>> {
    let dims = mask.dims();
    let header = header_for(PayloadKind::Mask, dims, 1.0)?;
    let mut out = Vec::with_capacity(HEADER_LEN + dims.len());
    header.encode(&mut out);
    let data = mask.tensor().data();
    payload_order(dims, |p| out.push(u8::from(data[p])));
    Ok(out)
}

pub fn decode_header(bytes: &[u8]) -> Result<ContainerHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), format!("header truncated, {HEADER_LEN} bytes expected")));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(0, "bad magic, expected MTRS"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let kind = match bytes[6] {
        0 => PayloadKind::Values,
        1 => PayloadKind::Mask,
        other => return Err(format_err(6, format!("unknown payload kind {other}"))),
    };
    let mut d = [0usize; 4];
    for (n, slot) in d.iter_mut().enumerate() {
        let at = 7 + 4 * n;
        let v = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        if v == 0 {
            return Err(format_err(at, format!("dimension {} is zero", n + 1)));
        }
        *slot = v as usize;
    }
    let value_range = f32::from_le_bytes(bytes[23..27].try_into().expect("4 bytes"));
    let dims = StackDims::new(d[0], d[1], d[2], d[3]).map_err(|e| format_err(7, e.to_string()))?;
    Ok(ContainerHeader {
        version,
        kind,
        dims,
        value_range,
    })
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    let header = decode_header(bytes)?;
    let dims = header.dims;
    let size = dims
        .len()
        .checked_mul(header.kind.element_size())
        .ok_or_else(|| format_err(7, "payload size overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < size {
        return Err(format_err(
            bytes.len(),
            format!("payload truncated, {size} bytes declared"),
        ));
    }
    if payload.len() > size {
        return Err(format_err(HEADER_LEN + size, "trailing bytes after payload"));
    }
    match header.kind {
        PayloadKind::Values => {
            let mut data = vec![0.0; dims.len()];
            let mut q = 0;
            payload_order(dims, |p| {
                data[p] = f32::from_le_bytes(payload[q..q + 4].try_into().expect("4 bytes")) as f64;
                q += 4;
            });
            let values = Tensor::new(&dims.shape(), data)?;
            Ok(Container::Stack(ImageStack::new(values, header.value_range as f64)?))
        }
        PayloadKind::Mask => {
            if let Some(q) = payload.iter().position(|&b| b > 1) {
                return Err(format_err(
                    HEADER_LEN + q,
                    format!("mask byte {} is not 0 or 1", payload[q]),
                ));
            }
            let mut data = vec![false; dims.len()];
            let mut q = 0;
            payload_order(dims, |p| {
                data[p] = payload[q] == 1;
                q += 1;
            });
            let mask = BinaryTensor::new(&dims.shape(), data)?;
            Ok(Container::Mask(ObservationMask::new(mask)?))
        }
    }
}

pub fn save_stack(path: impl AsRef<Path>, stack: &ImageStack) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_stack(stack)?).map_err(|e| Error::io(path, e))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &ObservationMask) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mask(mask)?).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_stack(path: impl AsRef<Path>) -> Result<ImageStack> {
    match load_container(&path)? {
        Container::Stack(s) => Ok(s),
        Container::Mask(_) => Err(format_err(6, format!("{} holds a mask, not values", path.as_ref().display()))),
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<ObservationMask> {
    match load_container(&path)? {
        Container::Mask(m) => Ok(m),
        Container::Stack(_) => Err(format_err(6, format!("{} holds values, not a mask", path.as_ref().display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(seed: u64) -> ImageStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Tensor::from_fn(&[8, 6, 3, 4], |_| rng.random_range(0.0f32..255.0) as f64).unwrap();
        ImageStack::new(v, 255.0).unwrap()
    }

    #[test]
    fn stack_roundtrip_is_bit_exact() {
        let s = random_stack(1);
        let bytes = encode_stack(&s).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 4 * 8 * 6 * 3 * 4);
        match decode(&bytes).unwrap() {
            Container::Stack(t) => {
                assert_eq!(t.value_range(), 255.0);
                for (a, b) in t.values().data().iter().zip(s.values().data()) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_bytes_and_payload_order() {
        let dims = StackDims::new(2, 3, 1, 2).unwrap();
        let v = Tensor::from_fn(&dims.shape(), |x| (x[0] * 100 + x[1] * 10 + x[3]) as f64).unwrap();
        let bytes = encode_stack(&ImageStack::new(v, 255.0).unwrap()).unwrap();
        assert_eq!(&bytes[..4], b"MTRS");
        assert_eq!(&bytes[4..7], &[1, 0, 0]);
        assert_eq!(&bytes[7..11], &2u32.to_le_bytes());
        assert_eq!(&bytes[11..15], &3u32.to_le_bytes());
        assert_eq!(&bytes[23..27], &255f32.to_le_bytes());
        let payload: Vec<f32> = bytes[27..]
            .chunks(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        // time 0 row 0, time 0 row 1, time 1 row 0, ...
        assert_eq!(payload, vec![0., 10., 20., 100., 110., 120., 1., 11., 21., 101., 111., 121.]);
    }

    #[test]
    fn large_header_declares_element_count() {
        let h = ContainerHeader {
            version: VERSION,
            kind: PayloadKind::Values,
            dims: StackDims::new(512, 512, 3, 4).unwrap(),
            value_range: 255.0,
        };
        assert_eq!(h.elements(), 3_145_728);
        let mut bytes = Vec::new();
        h.encode(&mut bytes);
        assert_eq!(decode_header(&bytes).unwrap(), h);
    }

    #[test]
    fn mask_roundtrip_and_non_binary_byte() {
        let dims = StackDims::new(5, 4, 2, 3).unwrap();
        let m = ObservationMask::from_pixels(dims, |i, j, l| (i + j + l) % 3 == 0);
        let mut bytes = encode_mask(&m).unwrap();
        assert_eq!(decode(&bytes).unwrap(), Container::Mask(m));
        bytes[HEADER_LEN + 7] = 2;
        match decode(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, (HEADER_LEN + 7) as u64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn format_errors_carry_offsets() {
        let bytes = encode_stack(&random_stack(2)).unwrap();
        let offset = |b: &[u8]| match decode(b) {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("{other:?}"),
        };
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(offset(&bad), 0);
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(offset(&bad), 4);
        let mut bad = bytes.clone();
        bad[6] = 7;
        assert_eq!(offset(&bad), 6);
        let mut bad = bytes.clone();
        bad[11..15].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(offset(&bad), 11);
        assert_eq!(offset(&bytes[..10]), 10);
        assert_eq!(offset(&bytes[..bytes.len() - 1]), (bytes.len() - 1) as u64);
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(offset(&long), bytes.len() as u64);
    }

    #[test]
    fn files_roundtrip_and_kind_checks() {
        let dir = tempfile::tempdir().unwrap();
        let s = random_stack(3);
        let p = dir.path().join("s.mtrs");
        save_stack(&p, &s).unwrap();
        assert_eq!(load_stack(&p).unwrap(), s);
        assert!(load_mask(&p).is_err());
        assert!(matches!(load_stack(dir.path().join("none")), Err(Error::Io { .. })));
    }
}
