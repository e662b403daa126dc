use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Register encodings; 32-bit encodings take the high word first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    U16,
    S16,
    U32Be,
    F32Be,
}

impl Encoding {
    pub const ALL: [Encoding; 4] = [Encoding::U16, Encoding::S16, Encoding::U32Be, Encoding::F32Be];

    pub fn register_count(self) -> u16 {
        match self {
            Encoding::U16 | Encoding::S16 => 1,
            Encoding::U32Be | Encoding::F32Be => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::U16 => "u16",
            Encoding::S16 => "s16",
            Encoding::U32Be => "u32_be",
            Encoding::F32Be => "f32_be",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Encoding::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown encoding `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("encoding {encoding} needs {expected} register(s), got {got}")]
pub struct WordCountMismatch {
    pub encoding: Encoding,
    pub expected: usize,
    pub got: usize,
}

fn raw_value(words: &[u16], encoding: Encoding) -> Result<f64, WordCountMismatch> {
    let expected = encoding.register_count() as usize;
    if words.len() != expected {
        return Err(WordCountMismatch {
            encoding,
            expected,
            got: words.len(),
        });
    }
    let wide = || (u32::from(words[0]) << 16) | u32::from(words[1]);
    Ok(match encoding {
        Encoding::U16 => f64::from(words[0]),
        Encoding::S16 => f64::from(words[0] as i16),
        Encoding::U32Be => f64::from(wide()),
        Encoding::F32Be => f64::from(f32::from_bits(wide())),
    })
}

/// `decode(words) * scale + offset`.
pub fn decode_register(
    words: &[u16],
    encoding: Encoding,
    scale: f64,
    offset: f64,
) -> Result<f64, WordCountMismatch> {
    Ok(raw_value(words, encoding)? * scale + offset)
}

/// Inverse of [`decode_register`]; integer encodings round to nearest and
/// saturate at the type bounds.
pub fn encode_register(value: f64, encoding: Encoding, scale: f64, offset: f64) -> Vec<u16> {
    let raw = (value - offset) / scale;
    match encoding {
        Encoding::U16 => vec![raw.round() as u16],
        Encoding::S16 => vec![(raw.round() as i16) as u16],
        Encoding::U32Be => split(raw.round() as u32),
        Encoding::F32Be => split((raw as f32).to_bits()),
    }
}

fn split(v: u32) -> Vec<u16> {
    vec![(v >> 16) as u16, v as u16]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_decodings() {
        assert_eq!(decode_register(&[0x04D2], Encoding::U16, 0.1, 0.0).unwrap(), 123.4);
        assert_eq!(decode_register(&[0x42C8, 0x0000], Encoding::F32Be, 1.0, 0.0).unwrap(), 100.0);
        assert_eq!(decode_register(&[0x0001, 0x86A0], Encoding::U32Be, 1.0, 0.0).unwrap(), 100000.0);
        assert_eq!(decode_register(&[0xFFFF], Encoding::S16, 1.0, 0.0).unwrap(), -1.0);
        assert_eq!(decode_register(&[0xFFFF], Encoding::U16, 2.0, -1.0).unwrap(), 131069.0);
    }

    #[test]
    fn word_count_checked() {
        let err = decode_register(&[1], Encoding::U32Be, 1.0, 0.0).unwrap_err();
        assert_eq!(err.to_string(), "encoding u32_be needs 2 register(s), got 1");
    }

    #[test]
    fn encode_inverts_scaling() {
        assert_eq!(encode_register(123.4, Encoding::U16, 0.1, 0.0), vec![0x04D2]);
        assert_eq!(encode_register(100.0, Encoding::F32Be, 1.0, 0.0), vec![0x42C8, 0]);
        assert_eq!(encode_register(-2.0, Encoding::S16, 1.0, 0.0), vec![0xFFFE]);
    }

    #[test]
    fn names() {
        for e in Encoding::ALL {
            assert_eq!(e.as_str().parse::<Encoding>().unwrap(), e);
            assert_eq!(serde_json::to_string(&e).unwrap(), format!("\"{e}\""));
        }
    }
}
