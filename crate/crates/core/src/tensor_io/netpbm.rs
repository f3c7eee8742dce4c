//! Binary netpbm: `P5` (gray) and `P6` (RGB), maxval 255.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DType, Result, Tensor3, TensorIoError};

struct HeaderParser<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            let b = self.buf[self.pos];
            if b == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' && self.buf[self.pos] != b'\r' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(TensorIoError::CorruptHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .unwrap()
            .parse::<usize>()
            .map_err(|e| TensorIoError::CorruptHeader(format!("{what}: {e}")))
    }
}

pub fn read_image_from<R: Read>(r: &mut R) -> Result<Tensor3> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

fn decode(buf: &[u8]) -> Result<Tensor3> {
    if buf.len() < 2 || buf[0] != b'P' {
        return Err(TensorIoError::UnsupportedFormat("not a netpbm file".into()));
    }
    let channels = match buf[1] {
        b'5' => 1,
        b'6' => 3,
        other => {
            return Err(TensorIoError::UnsupportedFormat(format!(
                "netpbm variant P{} (only binary P5/P6 are supported)",
                other as char
            )))
        }
    };
    let mut p = HeaderParser { buf, pos: 2 };
    if p.pos < buf.len() && !buf[p.pos].is_ascii_whitespace() && buf[p.pos] != b'#' {
        return Err(TensorIoError::CorruptHeader("missing whitespace after magic".into()));
    }
    let width = p.number("width")?;
    let height = p.number("height")?;
    let maxval = p.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(TensorIoError::CorruptHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(TensorIoError::UnsupportedFormat(format!("maxval {maxval} (only 255 is supported)")));
    }
    match buf.get(p.pos) {
        Some(b) if b.is_ascii_whitespace() => p.pos += 1,
        _ => return Err(TensorIoError::CorruptHeader("missing whitespace after maxval".into())),
    }
    let expected = width * height * channels;
    let pixels = &buf[p.pos..];
    if pixels.len() < expected {
        return Err(TensorIoError::TruncatedPixelData {
            expected,
            found: pixels.len(),
        });
    }
    Tensor3::from_u8(height, width, channels, pixels[..expected].to_vec())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| TensorIoError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    read_image_from(&mut BufReader::new(file))
}

pub fn write_image_to<W: Write>(t: &Tensor3, w: &mut W) -> Result<()> {
    let magic = match t.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(TensorIoError::UnsupportedChannels(c)),
    };
    if t.dtype() != DType::Uint8 {
        return Err(TensorIoError::WrongDtype {
            found: t.dtype(),
            expected: DType::Uint8,
        });
    }
    write!(w, "{magic}\n{} {}\n255\n", t.width(), t.height())?;
    w.write_all(t.as_u8()?)?;
    Ok(())
}

pub fn write_image(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let wrap = |source| TensorIoError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    write_image_to(t, &mut w)?;
    w.flush().map_err(wrap)?;
    Ok(())
}
