use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Per-sublayer skip vector: `true` bypasses the sublayer when drafting.
/// The all-false mask is the full target model.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerMask {
    bits: Vec<bool>,
}

impl LayerMask {
    /// Mask of length `sublayers` that skips nothing.
    pub fn full(sublayers: usize) -> Self {
        LayerMask {
            bits: vec![false; sublayers],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        LayerMask { bits }
    }

    /// Panics if an index is out of range.
    pub fn from_skipped(sublayers: usize, skipped: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = vec![false; sublayers];
        for i in skipped {
            bits[i] = true;
        }
        LayerMask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_skipped(&self, sublayer: usize) -> bool {
        self.bits[sublayer]
    }

    pub fn skipped(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of sublayers skipped.
    pub fn skip_ratio(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.popcount() as f64 / self.bits.len() as f64
        }
    }

    pub fn is_full_model(&self) -> bool {
        self.popcount() == 0
    }

    /// Vertex of the unit hypercube.
    pub fn to_unit_vector(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// `"0110..."`, one character per sublayer.
    pub fn to_bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl fmt::Debug for LayerMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LayerMask({})", self.to_bitstring())
    }
}

impl fmt::Display for LayerMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

// JSON form is a plain 0/1 array.
impl Serialize for LayerMask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<u8> = self.bits.iter().map(|&b| b as u8).collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LayerMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<u8>::deserialize(d)?;
        if let Some(bad) = v.iter().find(|&&b| b > 1) {
            return Err(serde::de::Error::custom(format!("mask entries must be 0 or 1, got {bad}")));
        }
        Ok(LayerMask {
            bits: v.into_iter().map(|b| b == 1).collect(),
        })
    }
}
