//! Fixed-width unsigned integers with EVM-style wrapping arithmetic and
//! SafeMath-style checked arithmetic.
//!
//! Values are stored as four little-endian 64-bit limbs regardless of width;
//! bits at or above `width` are always zero.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

const LIMBS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("invalid integer width {0}: expected a multiple of 8 between 8 and 256")]
    InvalidWidth(u16),
    #[error("operand width mismatch: uint{left} vs uint{right}")]
    WidthMismatch { left: u16, right: u16 },
    #[error("{kind} overflows uint{width}")]
    Overflow { kind: ArithKind, width: u16 },
    #[error("value does not fit in uint{width}")]
    OutOfRange { width: u16 },
    #[error("invalid integer literal {0:?}")]
    Parse(String),
}

/// The three arithmetic operations that can overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithKind {
    Add,
    Sub,
    Mul,
}

impl ArithKind {
    pub const ALL: [ArithKind; 3] = [ArithKind::Add, ArithKind::Sub, ArithKind::Mul];

    pub fn symbol(self) -> &'static str {
        match self {
            ArithKind::Add => "+",
            ArithKind::Sub => "-",
            ArithKind::Mul => "*",
        }
    }

    /// Name of the SafeMath-style method spelling (`a.add(b)`).
    pub fn method(self) -> &'static str {
        match self {
            ArithKind::Add => "add",
            ArithKind::Sub => "sub",
            ArithKind::Mul => "mul",
        }
    }
}

impl fmt::Display for ArithKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArithKind::Add => "addition",
            ArithKind::Sub => "subtraction",
            ArithKind::Mul => "multiplication",
        })
    }
}

/// An unsigned integer of a fixed bit width (`uint8` .. `uint256`).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct UInt {
    width: u16,
    limbs: [u64; LIMBS],
}

fn check_width(width: u16) -> Result<(), NumericError> {
    if width == 0 || width > 256 || !width.is_multiple_of(8) {
        Err(NumericError::InvalidWidth(width))
    } else {
        Ok(())
    }
}

fn mask_to(width: u16, limbs: &mut [u64; LIMBS]) {
    let width = width as usize;
    for (i, limb) in limbs.iter_mut().enumerate() {
        let lo = i * 64;
        if lo >= width {
            *limb = 0;
        } else if width - lo < 64 {
            *limb &= (1u64 << (width - lo)) - 1;
        }
    }
}

fn fits(width: u16, limbs: &[u64; LIMBS]) -> bool {
    let mut masked = *limbs;
    mask_to(width, &mut masked);
    masked == *limbs
}

impl UInt {
    pub const MAX_WIDTH: u16 = 256;

    pub fn from_limbs(width: u16, limbs: [u64; LIMBS]) -> Result<Self, NumericError> {
        check_width(width)?;
        if !fits(width, &limbs) {
            return Err(NumericError::OutOfRange { width });
        }
        Ok(UInt { width, limbs })
    }

    pub fn zero(width: u16) -> Result<Self, NumericError> {
        Self::from_limbs(width, [0; LIMBS])
    }

    pub fn max_value(width: u16) -> Result<Self, NumericError> {
        check_width(width)?;
        let mut limbs = [u64::MAX; LIMBS];
        mask_to(width, &mut limbs);
        Ok(UInt { width, limbs })
    }

    pub fn from_u128(width: u16, value: u128) -> Result<Self, NumericError> {
        Self::from_limbs(width, [value as u64, (value >> 64) as u64, 0, 0])
    }

    /// `2^exp` at the given width.
    pub fn pow2(width: u16, exp: u32) -> Result<Self, NumericError> {
        check_width(width)?;
        if exp >= width as u32 {
            return Err(NumericError::OutOfRange { width });
        }
        let mut limbs = [0; LIMBS];
        limbs[(exp / 64) as usize] = 1 << (exp % 64);
        Ok(UInt { width, limbs })
    }

    /// A `uint256` from a native integer. Never fails.
    pub fn u256(value: u128) -> Self {
        UInt {
            width: 256,
            limbs: [value as u64, (value >> 64) as u64, 0, 0],
        }
    }

    pub fn u256_from_limbs(limbs: [u64; LIMBS]) -> Self {
        UInt { width: 256, limbs }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn limbs(&self) -> [u64; LIMBS] {
        self.limbs
    }

    pub fn is_zero(&self) -> bool {
        self.limbs == [0; LIMBS]
    }

    pub fn to_u128(&self) -> Option<u128> {
        if self.limbs[2] != 0 || self.limbs[3] != 0 {
            None
        } else {
            Some(self.limbs[0] as u128 | (self.limbs[1] as u128) << 64)
        }
    }

    pub fn to_be_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, limb) in self.limbs.iter().enumerate() {
            out[32 - 8 * (i + 1)..32 - 8 * i].copy_from_slice(&limb.to_be_bytes());
        }
        out
    }

    /// Same value at a different width, if it fits.
    pub fn resize(&self, width: u16) -> Result<Self, NumericError> {
        Self::from_limbs(width, self.limbs)
    }

    pub fn cmp_value(&self, other: &UInt) -> Ordering {
        for i in (0..LIMBS).rev() {
            match self.limbs[i].cmp(&other.limbs[i]) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }

    /// Parses decimal or `0x`-prefixed hexadecimal text.
    pub fn parse(width: u16, text: &str) -> Result<Self, NumericError> {
        check_width(width)?;
        let (digits, radix) = match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
            Some(hex) => (hex, 16),
            None => (text, 10),
        };
        if digits.is_empty() || !digits.chars().all(|c| c.is_digit(radix)) {
            return Err(NumericError::Parse(text.to_string()));
        }
        let limbs = if radix == 16 {
            parse_hex_limbs(digits)
        } else {
            parse_dec_limbs(digits)
        }
        .ok_or(NumericError::OutOfRange { width })?;
        Self::from_limbs(width, limbs)
    }

    /// `0x`-prefixed hex, zero-padded to `width / 4` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.width as usize / 4;
        let full: String = self.limbs.iter().rev().map(|l| format!("{l:016x}")).collect();
        format!("0x{}", &full[64 - digits..])
    }
}

/// `None` when the value needs more than 256 bits.
fn parse_hex_limbs(hex: &str) -> Option<[u64; LIMBS]> {
    let digits = hex.trim_start_matches('0');
    if digits.len() > 64 {
        return None;
    }
    let mut limbs = [0u64; LIMBS];
    for (i, chunk) in digits.as_bytes().rchunks(16).enumerate() {
        limbs[i] = u64::from_str_radix(std::str::from_utf8(chunk).ok()?, 16).ok()?;
    }
    Some(limbs)
}

fn parse_dec_limbs(dec: &str) -> Option<[u64; LIMBS]> {
    let mut limbs = [0u64; LIMBS];
    for b in dec.bytes() {
        let mut carry = (b - b'0') as u128;
        for limb in limbs.iter_mut() {
            let t = (*limb as u128) * 10 + carry;
            *limb = t as u64;
            carry = t >> 64;
        }
        if carry != 0 {
            return None;
        }
    }
    Some(limbs)
}

/// Divides in place by a small divisor, returning the remainder.
fn div_rem_small(limbs: &mut [u64; LIMBS], divisor: u64) -> u64 {
    let mut rem = 0u128;
    for limb in limbs.iter_mut().rev() {
        let cur = (rem << 64) | *limb as u128;
        *limb = (cur / divisor as u128) as u64;
        rem = cur % divisor as u128;
    }
    rem as u64
}

impl fmt::Display for UInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const CHUNK: u64 = 10_000_000_000_000_000_000; // 10^19
        let mut rest = self.limbs;
        let mut chunks = Vec::new();
        loop {
            chunks.push(div_rem_small(&mut rest, CHUNK));
            if rest == [0; LIMBS] {
                break;
            }
        }
        let mut out = chunks.pop().unwrap().to_string();
        for c in chunks.iter().rev() {
            out.push_str(&format!("{c:019}"));
        }
        f.pad(&out)
    }
}

impl fmt::Debug for UInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "uint{}({})", self.width, self)
    }
}

impl PartialOrd for UInt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for UInt {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_value(other).then(self.width.cmp(&other.width))
    }
}

impl FromStr for UInt {
    type Err = NumericError;

    /// Parses at width 256.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UInt::parse(256, s)
    }
}

impl Serialize for UInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

fn add_limbs(a: &[u64; LIMBS], b: &[u64; LIMBS]) -> ([u64; LIMBS], bool) {
    let mut out = [0u64; LIMBS];
    let mut carry = false;
    for i in 0..LIMBS {
        let (s1, c1) = a[i].overflowing_add(b[i]);
        let (s2, c2) = s1.overflowing_add(carry as u64);
        out[i] = s2;
        carry = c1 || c2;
    }
    (out, carry)
}

fn sub_limbs(a: &[u64; LIMBS], b: &[u64; LIMBS]) -> ([u64; LIMBS], bool) {
    let mut out = [0u64; LIMBS];
    let mut borrow = false;
    for i in 0..LIMBS {
        let (d1, b1) = a[i].overflowing_sub(b[i]);
        let (d2, b2) = d1.overflowing_sub(borrow as u64);
        out[i] = d2;
        borrow = b1 || b2;
    }
    (out, borrow)
}

fn mul_limbs(a: &[u64; LIMBS], b: &[u64; LIMBS]) -> [u64; 2 * LIMBS] {
    let mut out = [0u64; 2 * LIMBS];
    for i in 0..LIMBS {
        let mut carry = 0u128;
        for j in 0..LIMBS {
            let t = a[i] as u128 * b[j] as u128 + out[i + j] as u128 + carry;
            out[i + j] = t as u64;
            carry = t >> 64;
        }
        out[i + LIMBS] = carry as u64;
    }
    out
}

/// Exact result truncated to 256 bits, plus whether anything was lost
/// (carry, borrow, or high product limbs).
fn raw_arith(kind: ArithKind, a: &UInt, b: &UInt) -> ([u64; LIMBS], bool) {
    match kind {
        ArithKind::Add => add_limbs(&a.limbs, &b.limbs),
        ArithKind::Sub => sub_limbs(&a.limbs, &b.limbs),
        ArithKind::Mul => {
            let wide = mul_limbs(&a.limbs, &b.limbs);
            let mut low = [0u64; LIMBS];
            low.copy_from_slice(&wide[..LIMBS]);
            (low, wide[LIMBS..].iter().any(|&l| l != 0))
        }
    }
}

fn same_width(a: &UInt, b: &UInt) -> Result<u16, NumericError> {
    if a.width != b.width {
        Err(NumericError::WidthMismatch {
            left: a.width,
            right: b.width,
        })
    } else {
        Ok(a.width)
    }
}

/// `(a op b) mod 2^width`. Only fails when the operand widths differ.
pub fn wrap_arith(kind: ArithKind, a: UInt, b: UInt) -> Result<UInt, NumericError> {
    let width = same_width(&a, &b)?;
    let (mut limbs, _) = raw_arith(kind, &a, &b);
    mask_to(width, &mut limbs);
    Ok(UInt { width, limbs })
}

/// The exact result, or [`NumericError::Overflow`] when it does not fit in the
/// operand width (or is negative).
pub fn checked_arith(kind: ArithKind, a: UInt, b: UInt) -> Result<UInt, NumericError> {
    let width = same_width(&a, &b)?;
    let (limbs, lost) = raw_arith(kind, &a, &b);
    if lost || !fits(width, &limbs) {
        return Err(NumericError::Overflow { kind, width });
    }
    Ok(UInt { width, limbs })
}
