//! Canonical binary encoding of exports.
//!
//! ```text
//! export  := version:u8 (=1) count:u32 entry*
//! entry   := path nvalue
//! path    := ntok:u16 token*
//! token   := 0 str occurrence:u32      call site
//!          | 1 b:u8                    branch
//!          | 2 str                     process key
//! nvalue  := default:literal n:u16 (device:u32 literal)*
//! literal := 0 b:u8 | 1 i64 | 2 f64 | 3 device:u32
//!          | 4 literal literal | 5 n:u16 literal*
//! str     := len:u16 utf8-bytes
//! ```
//!
//! All integers little-endian; reals as IEEE-754 bit patterns. Maps are
//! written in key order, so equal exports encode to equal bytes.

use crate::xc_core::{AlignmentPath, DeviceId, Export, Literal, NValue, Token};

use super::TransportError;

pub const CODEC_VERSION: u8 = 1;

const MAX_DEPTH: usize = 64;

pub fn encode_export(export: &Export) -> Result<Vec<u8>, TransportError> {
    let mut out = vec![CODEC_VERSION];
    out.extend_from_slice(&(export.len() as u32).to_le_bytes());
    for (path, value) in export.iter() {
        put_len16(&mut out, path.len())?;
        for token in path.tokens() {
            match token {
                Token::Site { tag, occurrence } => {
                    out.push(0);
                    put_str(&mut out, tag)?;
                    out.extend_from_slice(&occurrence.to_le_bytes());
                }
                Token::Branch(b) => {
                    out.push(1);
                    out.push(u8::from(*b));
                }
                Token::Key(k) => {
                    out.push(2);
                    put_str(&mut out, k)?;
                }
            }
        }
        put_literal(&mut out, value.default_value())?;
        put_len16(&mut out, value.entries().len())?;
        for (device, lit) in value.entries() {
            out.extend_from_slice(&device.0.to_le_bytes());
            put_literal(&mut out, lit)?;
        }
    }
    Ok(out)
}

pub fn decode_export(bytes: &[u8]) -> Result<Export, TransportError> {
    let mut r = Reader { bytes, pos: 0 };
    let version = r.u8()?;
    if version != CODEC_VERSION {
        return Err(TransportError::Malformed(format!(
            "unsupported export version {version}"
        )));
    }
    let count = r.u32()?;
    let mut export = Export::new();
    for _ in 0..count {
        let ntok = r.u16()?;
        let mut tokens = Vec::with_capacity(usize::from(ntok));
        for _ in 0..ntok {
            tokens.push(match r.u8()? {
                0 => {
                    let tag = r.string()?;
                    Token::Site {
                        tag,
                        occurrence: r.u32()?,
                    }
                }
                1 => Token::Branch(r.u8()? != 0),
                2 => Token::Key(r.string()?),
                t => return Err(TransportError::Malformed(format!("unknown token tag {t}"))),
            });
        }
        let default = r.literal(0)?;
        let n = r.u16()?;
        let mut entries = Vec::with_capacity(usize::from(n));
        for _ in 0..n {
            let device = DeviceId(r.u32()?);
            entries.push((device, r.literal(0)?));
        }
        export
            .insert(
                AlignmentPath::from_tokens(tokens),
                NValue::with_entries(default, entries),
            )
            .map_err(|e| TransportError::Malformed(e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(TransportError::Malformed("trailing bytes after export".into()));
    }
    Ok(export)
}

fn put_len16(out: &mut Vec<u8>, n: usize) -> Result<(), TransportError> {
    let n = u16::try_from(n).map_err(|_| TransportError::Malformed(format!("length {n} exceeds u16")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), TransportError> {
    put_len16(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_literal(out: &mut Vec<u8>, l: &Literal) -> Result<(), TransportError> {
    match l {
        Literal::Bool(b) => {
            out.push(0);
            out.push(u8::from(*b));
        }
        Literal::Int(i) => {
            out.push(1);
            out.extend_from_slice(&i.to_le_bytes());
        }
        Literal::Real(x) => {
            out.push(2);
            out.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        Literal::Device(d) => {
            out.push(3);
            out.extend_from_slice(&d.0.to_le_bytes());
        }
        Literal::Pair(a, b) => {
            out.push(4);
            put_literal(out, a)?;
            put_literal(out, b)?;
        }
        Literal::Tuple(items) => {
            out.push(5);
            put_len16(out, items.len())?;
            for item in items {
                put_literal(out, item)?;
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], TransportError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TransportError::Malformed("truncated export".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], TransportError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, TransportError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TransportError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, TransportError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String, TransportError> {
        let n = usize::from(self.u16()?);
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| TransportError::Malformed("invalid utf-8".into()))
    }

    fn literal(&mut self, depth: usize) -> Result<Literal, TransportError> {
        if depth > MAX_DEPTH {
            return Err(TransportError::Malformed("literal nested too deeply".into()));
        }
        Ok(match self.u8()? {
            0 => Literal::Bool(self.u8()? != 0),
            1 => Literal::Int(i64::from_le_bytes(self.array()?)),
            2 => Literal::Real(f64::from_bits(u64::from_le_bytes(self.array()?))),
            3 => Literal::Device(DeviceId(self.u32()?)),
            4 => {
                let a = self.literal(depth + 1)?;
                Literal::pair(a, self.literal(depth + 1)?)
            }
            5 => {
                let n = self.u16()?;
                let mut items = Vec::with_capacity(usize::from(n));
                for _ in 0..n {
                    items.push(self.literal(depth + 1)?);
                }
                Literal::Tuple(items)
            }
            t => return Err(TransportError::Malformed(format!("unknown literal tag {t}"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Export {
        let mut e = Export::new();
        let p = AlignmentPath::root()
            .child(Token::site("tasks", 0))
            .child(Token::Key("T1".into()))
            .child(Token::Branch(true))
            .child(Token::site("claims", 2));
        e.insert(
            p,
            NValue::with_entries(
                Literal::Tuple(vec![Literal::Real(0.25), Literal::Int(i64::MAX)]),
                [(
                    DeviceId(7),
                    Literal::pair(Literal::Bool(true), Literal::Device(DeviceId(3))),
                )],
            ),
        )
        .unwrap();
        e.insert(
            AlignmentPath::root().child(Token::site("fault", 0)),
            NValue::local(Literal::Bool(false)),
        )
        .unwrap();
        e
    }

    #[test]
    fn round_trip() {
        let e = sample();
        let bytes = encode_export(&e).unwrap();
        assert_eq!(bytes[0], CODEC_VERSION);
        assert_eq!(decode_export(&bytes).unwrap(), e);
        assert_eq!(encode_export(&Export::new()).unwrap(), vec![1, 0, 0, 0, 0]);
    }

    #[test]
    fn rejects_truncation_and_bad_version() {
        let bytes = encode_export(&sample()).unwrap();
        for cut in 0..bytes.len() {
            assert!(decode_export(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut v2 = bytes.clone();
        v2[0] = 2;
        assert!(decode_export(&v2).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_export(&extra).is_err());
    }
}
