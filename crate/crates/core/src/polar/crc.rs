//! Bitwise CRC over 0/1 bit slices, MSB-first.

use crate::error::{Error, Result};

/// CRC parameters. `poly` holds the generator without its implicit leading
/// `x^width` term, e.g. `0x07` for x^8 + x^2 + x + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrcSpec {
    width: usize,
    poly: u64,
    init: u64,
}

impl CrcSpec {
    pub fn new(width: usize, poly: u64, init: u64) -> Result<Self> {
        if width == 0 || width > 63 {
            return Err(Error::InvalidConfig(format!(
                "CRC width must be in 1..=63, got {width}"
            )));
        }
        let mask = (1u64 << width) - 1;
        if poly & !mask != 0 || init & !mask != 0 {
            return Err(Error::InvalidConfig(format!(
                "CRC polynomial/initial value exceed width {width}"
            )));
        }
        Ok(Self { width, poly, init })
    }

    /// CRC-8 with x^8 + x^2 + x + 1 and a zero register.
    pub fn crc8() -> Self {
        Self { width: 8, poly: 0x07, init: 0 }
    }

    /// A default generator for the given width, where one is known.
    pub fn default_for_width(width: usize) -> Option<Self> {
        let poly = match width {
            1 => 0x1,
            3 => 0x3,
            4 => 0x3,
            5 => 0x15,
            6 => 0x03,
            7 => 0x09,
            8 => 0x07,
            10 => 0x233,
            11 => 0x385,
            12 => 0x80f,
            16 => 0x1021,
            _ => return None,
        };
        Some(Self { width, poly, init: 0 })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn poly(&self) -> u64 {
        self.poly
    }

    pub fn init(&self) -> u64 {
        self.init
    }

    /// Remainder bits (MSB first) for `bits`.
    pub fn remainder(&self, bits: &[u8]) -> Vec<u8> {
        let top = 1u64 << (self.width - 1);
        let mask = (top << 1).wrapping_sub(1);
        let mut reg = self.init;
        for &b in bits {
            let feedback = ((reg & top) != 0) ^ (b & 1 == 1);
            reg = (reg << 1) & mask;
            if feedback {
                reg ^= self.poly;
            }
        }
        (0..self.width)
            .rev()
            .map(|s| ((reg >> s) & 1) as u8)
            .collect()
    }

    /// `payload` followed by its CRC remainder.
    pub fn append(&self, payload: &[u8]) -> Vec<u8> {
        let mut out = payload.to_vec();
        out.extend(self.remainder(payload));
        out
    }

    /// True when the trailing `width` bits equal the CRC of the leading bits.
    pub fn check(&self, message: &[u8]) -> bool {
        if message.len() < self.width {
            return false;
        }
        let (payload, tail) = message.split_at(message.len() - self.width);
        self.remainder(payload) == tail
    }
}

/// Appends the CRC of `payload`; with no CRC configured the payload is returned as is.
pub fn crc_append(payload: &[u8], spec: Option<&CrcSpec>) -> Vec<u8> {
    match spec {
        Some(crc) => crc.append(payload),
        None => payload.to_vec(),
    }
}

pub fn crc_check(message: &[u8], spec: Option<&CrcSpec>) -> bool {
    spec.is_none_or(|crc| crc.check(message))
}
