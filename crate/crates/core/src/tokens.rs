//! Discrete carriers of the watermark: token maps and bit sequences.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};

/// `h × w` grid of codebook indices, raster order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenMap {
    height: usize,
    width: usize,
    vocab_size: usize,
    indices: Vec<u32>,
}

const BINARY_MAGIC: &[u8; 4] = b"TMAP";

impl TokenMap {
    pub fn new(height: usize, width: usize, vocab_size: usize, indices: Vec<u32>) -> Result<Self> {
        if indices.len() != height * width {
            return Err(shape(format!(
                "token map {height}x{width} needs {} indices, got {}",
                height * width,
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::TokenRange {
                index: bad as usize,
                vocab: vocab_size,
            });
        }
        Ok(Self {
            height,
            width,
            vocab_size,
            indices,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.indices[y * self.width + x]
    }

    /// Same grid, new indices (validated against the vocabulary).
    pub fn with_indices(&self, indices: Vec<u32>) -> Result<Self> {
        Self::new(self.height, self.width, self.vocab_size, indices)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and re-validates a JSON token map.
    pub fn from_json(s: &str) -> Result<Self> {
        let raw: TokenMap = serde_json::from_str(s)?;
        Self::new(raw.height, raw.width, raw.vocab_size, raw.indices)
    }

    /// Flat binary form: `b"TMAP"`, then `h`, `w`, `|V|` and every index as
    /// little-endian `u32`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        for v in [self.height, self.width, self.vocab_size] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        for &t in &self.indices {
            out.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("not a token map (bad magic)".into()));
        }
        let mut word = || -> Result<u32> {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let h = word()? as usize;
        let w = word()? as usize;
        let v = word()? as usize;
        let indices = (0..h * w).map(|_| word()).collect::<Result<Vec<_>>>()?;
        Self::new(h, w, v, indices)
    }
}

/// Ordered bits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitSeq(pub Vec<bool>);

impl BitSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("bit string contains {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitSeq)
    }
}

impl std::fmt::Display for BitSeq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl From<Vec<bool>> for BitSeq {
    fn from(v: Vec<bool>) -> Self {
        BitSeq(v)
    }
}
