//! Minimal NPY v1.0 reader/writer for little-endian `f4`, `f8` and `i8`
//! arrays of rank 1 or 2 in C order.
//!
//! Written files use a 64-byte aligned header exactly as numpy emits it,
//! e.g. `{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }`.
//! Reading also accepts version 2.0/3.0 headers (4-byte length field).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// Element types the container can carry.
pub trait Element: Copy + Sized {
    const DESCR: &'static str;
    const SIZE: usize;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! element {
    ($t:ty, $descr:literal) => {
        impl Element for $t {
            const DESCR: &'static str = $descr;
            const SIZE: usize = std::mem::size_of::<$t>();
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("chunk size matches element"))
            }
        }
    };
}

element!(f32, "<f4");
element!(f64, "<f8");
element!(i64, "<i8");

/// Shape plus flat row-major payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Array<E> {
    pub shape: Vec<usize>,
    pub data: Vec<E>,
}

fn header_dict(descr: &str, shape: &[usize]) -> String {
    let shape = match shape {
        [n] => format!("({n},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape}, }}")
}

pub fn encode<E: Element>(shape: &[usize], data: &[E]) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), data.len());
    let mut header = header_dict(E::DESCR, shape);
    // magic(6) + version(2) + len(2) + header + '\n' padded to ALIGN
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + data.len() * E::SIZE);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for &x in data {
        x.write_le(&mut out);
    }
    out
}

pub fn write<E: Element>(path: &Path, shape: &[usize], data: &[E]) -> Result<()> {
    let bytes = encode(shape, data);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read<E: Element>(path: &Path) -> Result<Array<E>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|err| match err {
        DecodeError::Format(reason) => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        DecodeError::Dtype(found) => Error::Dtype {
            path: path.to_path_buf(),
            expected: E::DESCR,
            found,
        },
    })
}

#[derive(Debug)]
pub enum DecodeError {
    Format(String),
    Dtype(String),
}

fn fmt_err(reason: impl Into<String>) -> DecodeError {
    DecodeError::Format(reason.into())
}

pub fn decode<E: Element>(bytes: &[u8]) -> Result<Array<E>, DecodeError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(fmt_err("missing \\x93NUMPY magic"));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(fmt_err("truncated header length"));
            }
            (
                u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
                12,
            )
        }
        v => return Err(fmt_err(format!("unsupported version {v}.{}", bytes[7]))),
    };
    let header_end = header_start + header_len;
    if bytes.len() < header_end {
        return Err(fmt_err("truncated header"));
    }
    let header = std::str::from_utf8(&bytes[header_start..header_end])
        .map_err(|_| fmt_err("header is not valid text"))?;
    let dict = parse_header(header)?;
    if dict.fortran_order {
        return Err(fmt_err("fortran_order=True is not supported"));
    }
    if dict.descr != E::DESCR {
        return Err(DecodeError::Dtype(dict.descr));
    }
    if dict.shape.is_empty() || dict.shape.len() > 2 {
        return Err(fmt_err(format!(
            "expected rank 1 or 2, got shape {:?}",
            dict.shape
        )));
    }
    let count: usize = dict.shape.iter().product();
    let payload = &bytes[header_end..];
    if payload.len() != count * E::SIZE {
        return Err(fmt_err(format!(
            "payload has {} bytes, shape {:?} needs {}",
            payload.len(),
            dict.shape,
            count * E::SIZE
        )));
    }
    let data = payload.chunks_exact(E::SIZE).map(E::read_le).collect();
    Ok(Array {
        shape: dict.shape,
        data,
    })
}

struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Parses the python-literal dict numpy writes. Only the three standard
/// keys are recognised; anything else is a format error.
fn parse_header(header: &str) -> Result<HeaderDict, DecodeError> {
    let body = header.trim();
    let body = body
        .strip_prefix('{')
        .and_then(|b| b.strip_suffix('}'))
        .ok_or_else(|| fmt_err("header is not a dict literal"))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim();
    while !rest.is_empty() {
        let (key, after) = parse_quoted(rest).ok_or_else(|| fmt_err("expected quoted key"))?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| fmt_err("expected ':' after key"))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, a) =
                    parse_quoted(after).ok_or_else(|| fmt_err("descr must be a string"))?;
                descr = Some(v.to_string());
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("False") {
                    fortran = Some(false);
                    a
                } else if let Some(a) = after.strip_prefix("True") {
                    fortran = Some(true);
                    a
                } else {
                    return Err(fmt_err("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let close = after
                    .find(')')
                    .ok_or_else(|| fmt_err("unterminated shape tuple"))?;
                let inner = after
                    .strip_prefix('(')
                    .ok_or_else(|| fmt_err("shape must be a tuple"))?;
                let dims = inner[..close - 1]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.trim_end_matches('L')
                            .parse::<usize>()
                            .map_err(|_| fmt_err(format!("bad shape entry {s:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                shape = Some(dims);
                &after[close + 1..]
            }
            other => return Err(fmt_err(format!("unexpected header key {other:?}"))),
        };
        let after = after.trim_start();
        rest = after.strip_prefix(',').unwrap_or(after).trim_start();
    }
    Ok(HeaderDict {
        descr: descr.ok_or_else(|| fmt_err("missing descr"))?,
        fortran_order: fortran.ok_or_else(|| fmt_err("missing fortran_order"))?,
        shape: shape.ok_or_else(|| fmt_err("missing shape"))?,
    })
}

fn parse_quoted(s: &str) -> Option<(&str, &str)> {
    let q = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(q)?;
    Some((&inner[..end], &inner[end + 1..]))
}
