//! BTSR: a 24-byte little-endian header followed by the raw row-major payload.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "BTSR"
//!      4     4  version (u32, = 1)
//!      8     4  dtype code (u32: 1 = f32, 2 = u8, 3 = u32)
//!     12     4  height (u32)
//!     16     4  width (u32)
//!     20     4  channels (u32)
//!     24     -  payload, height * width * channels elements, little-endian
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DType, Result, Tensor3, TensorData, TensorIoError};

pub const BTSR_MAGIC: [u8; 4] = *b"BTSR";
pub const BTSR_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TensorIoError + '_ {
    move |source| TensorIoError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads into `buf` until it is full or EOF; returns the number of bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

fn u32_at(buf: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(buf[off..off + 4].try_into().unwrap())
}

/// Reads one BTSR record from a stream, leaving the stream positioned right
/// after the payload.
pub fn read_tensor_from<R: Read>(r: &mut R) -> Result<Tensor3> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(r, &mut header)?;
    if got >= 4 && header[..4] != BTSR_MAGIC {
        return Err(TensorIoError::BadMagic {
            found: header[..4].try_into().unwrap(),
            expected: BTSR_MAGIC,
        });
    }
    if got < HEADER_LEN {
        return Err(TensorIoError::TruncatedPayload {
            expected: HEADER_LEN,
            found: got,
        });
    }
    let version = u32_at(&header, 4);
    if version != BTSR_VERSION {
        return Err(TensorIoError::UnsupportedVersion(version));
    }
    let dtype = DType::from_code(u32_at(&header, 8))?;
    let height = u32_at(&header, 12) as usize;
    let width = u32_at(&header, 16) as usize;
    let channels = u32_at(&header, 20) as usize;
    if height == 0 || width == 0 || channels == 0 {
        return Err(TensorIoError::ZeroDimension {
            height,
            width,
            channels,
        });
    }
    let count = height * width * channels;
    let expected = count * dtype.size_of();
    let mut payload = vec![0u8; expected];
    let found = read_full(r, &mut payload)?;
    if found < expected {
        return Err(TensorIoError::TruncatedPayload { expected, found });
    }
    let data = match dtype {
        DType::Uint8 => TensorData::Uint8(payload),
        DType::Uint32 => TensorData::Uint32(
            payload
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        DType::Float32 => TensorData::Float32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Tensor3::new(height, width, channels, data)
}

/// Reads a file holding exactly one BTSR record.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let tensor = read_tensor_from(&mut reader)?;
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest).map_err(io_err(path))?;
    if !rest.is_empty() {
        return Err(TensorIoError::TrailingBytes(rest.len()));
    }
    Ok(tensor)
}

pub fn write_tensor_to<W: Write>(t: &Tensor3, w: &mut W) -> Result<()> {
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(&BTSR_MAGIC);
    for v in [
        BTSR_VERSION,
        t.dtype().code(),
        t.height() as u32,
        t.width() as u32,
        t.channels() as u32,
    ] {
        header.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&header)?;
    match t.data() {
        TensorData::Uint8(v) => w.write_all(v)?,
        TensorData::Uint32(v) => {
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            w.write_all(&bytes)?
        }
        TensorData::Float32(v) => {
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            w.write_all(&bytes)?
        }
    }
    Ok(())
}

pub fn write_tensor(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(t, &mut w)?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(t: &Tensor3) -> Vec<u8> {
        let mut buf = Vec::new();
        write_tensor_to(t, &mut buf).unwrap();
        buf
    }

    #[test]
    fn golden_single_float() {
        let t = Tensor3::from_f32(1, 1, 1, vec![1.0]).unwrap();
        let bytes = encode(&t);
        let mut expected = b"BTSR".to_vec();
        for v in [1u32, 1, 1, 1, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3F]);
        assert_eq!(bytes, expected);
        assert_eq!(bytes.len(), 28);
    }

    #[test]
    fn minimal_zero_tensor_reads() {
        let mut bytes = b"BTSR".to_vec();
        for v in [1u32, 1, 1, 1, 1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&0f32.to_le_bytes());
        let t = read_tensor_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(t, Tensor3::from_f32(1, 1, 1, vec![0.0]).unwrap());
    }

    #[test]
    fn u8_file_size() {
        let t = Tensor3::from_u8(2, 3, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(encode(&t).len(), 24 + 6);
    }

    #[test]
    fn header_errors() {
        let good = encode(&Tensor3::from_u32(1, 2, 1, vec![7, 8]).unwrap());

        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_tensor_from(&mut bad.as_slice()), Err(TensorIoError::BadMagic { .. })));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(
            read_tensor_from(&mut bad.as_slice()),
            Err(TensorIoError::UnsupportedVersion(2))
        ));

        let mut bad = good.clone();
        bad[8] = 9;
        assert!(matches!(read_tensor_from(&mut bad.as_slice()), Err(TensorIoError::DtypeUnknown(9))));

        let bad = &good[..good.len() - 1];
        assert!(matches!(
            read_tensor_from(&mut &bad[..]),
            Err(TensorIoError::TruncatedPayload { expected: 8, found: 7 })
        ));

        let bad = &good[..10];
        assert!(matches!(
            read_tensor_from(&mut &bad[..]),
            Err(TensorIoError::TruncatedPayload { expected: 24, .. })
        ));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = encode(&Tensor3::from_f32(1, 2, 1, vec![0.5, 2.0]).unwrap());
        bytes[28..32].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            read_tensor_from(&mut bytes.as_slice()),
            Err(TensorIoError::NonFiniteFloat { index: 1 })
        ));
    }

    #[test]
    fn trailing_bytes_rejected_for_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.btsr");
        let mut bytes = encode(&Tensor3::from_u8(1, 1, 1, vec![3]).unwrap());
        bytes.push(0);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_tensor(&p), Err(TensorIoError::TrailingBytes(1))));
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor3> {
        (1usize..5, 1usize..5, 1usize..4, 0u8..3).prop_flat_map(|(h, w, c, kind)| {
            let n = h * w * c;
            match kind {
                0 => prop::collection::vec(any::<u8>(), n)
                    .prop_map(move |v| Tensor3::from_u8(h, w, c, v).unwrap())
                    .boxed(),
                1 => prop::collection::vec(any::<u32>(), n)
                    .prop_map(move |v| Tensor3::from_u32(h, w, c, v).unwrap())
                    .boxed(),
                _ => prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO, n)
                    .prop_map(move |v| Tensor3::from_f32(h, w, c, v).unwrap())
                    .boxed(),
            }
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(t in arb_tensor()) {
            let bytes = encode(&t);
            let back = read_tensor_from(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(encode(&back), bytes);
            prop_assert_eq!(back, t);
        }
    }
}
