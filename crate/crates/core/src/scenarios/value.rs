//! Integer expressions used in scenario manifests, e.g. `8 ether + 2`,
//! `${deposit} - 10 * ${withdraw}`, `2^255`, `0x8fff`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};

use crate::numeric::UInt;

const WEI_PER_ETHER: u64 = 1_000_000_000_000_000_000;
const WEI_PER_GWEI: u64 = 1_000_000_000;

/// A resolved manifest parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamValue {
    Int(BigInt),
    Flag(bool),
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Flag(b) => write!(f, "{b}"),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Param(String),
    Op(char),
}

fn lex(text: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let raw: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            let value = match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
                Some(hex) => BigUint::parse_bytes(hex.as_bytes(), 16),
                None => BigUint::parse_bytes(raw.as_bytes(), 10),
            }
            .ok_or_else(|| format!("bad number {raw:?}"))?;
            out.push(Tok::Num(value.into()));
            continue;
        }
        if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
            continue;
        }
        if c == '$' {
            if chars.get(i + 1) != Some(&'{') {
                return Err("expected `{` after `$`".into());
            }
            let start = i + 2;
            let end = chars[start..]
                .iter()
                .position(|c| *c == '}')
                .ok_or("unterminated `${`")?;
            out.push(Tok::Param(chars[start..start + end].iter().collect()));
            i = start + end + 1;
            continue;
        }
        if "+-*^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
            continue;
        }
        return Err(format!("unexpected character {c:?}"));
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    params: &'a Params,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<BigInt, String> {
        let mut acc = if self.eat('-') { -self.term()? } else { self.term()? };
        loop {
            if self.eat('+') {
                acc += self.term()?;
            } else if self.eat('-') {
                acc -= self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<BigInt, String> {
        let mut acc = self.power()?;
        while self.eat('*') {
            acc *= self.power()?;
        }
        Ok(acc)
    }

    fn power(&mut self) -> Result<BigInt, String> {
        let base = self.unit()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let exp = self.unit()?;
        let exp = u32::try_from(exp).map_err(|_| "exponent out of range".to_string())?;
        if exp > 4096 {
            return Err("exponent out of range".into());
        }
        Ok(num_traits::pow(base, exp as usize))
    }

    fn unit(&mut self) -> Result<BigInt, String> {
        let v = self.atom()?;
        let scale = match self.peek() {
            Some(Tok::Ident(u)) if u == "ether" => WEI_PER_ETHER,
            Some(Tok::Ident(u)) if u == "gwei" => WEI_PER_GWEI,
            Some(Tok::Ident(u)) if u == "wei" => 1,
            _ => return Ok(v),
        };
        self.pos += 1;
        Ok(v * scale)
    }

    fn atom(&mut self) -> Result<BigInt, String> {
        let tok = self.peek().cloned().ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Tok::Num(n) => Ok(n),
            Tok::Param(name) => match self.params.get(&name) {
                Some(ParamValue::Int(v)) => Ok(v.clone()),
                Some(ParamValue::Flag(_)) => Err(format!("parameter {name} is a flag, not a number")),
                None => Err(format!("unknown parameter {name}")),
            },
            Tok::Op('(') => {
                let v = self.expr()?;
                if !self.eat(')') {
                    return Err("expected `)`".into());
                }
                Ok(v)
            }
            other => Err(format!("unexpected {other:?}")),
        }
    }
}

/// Evaluates an integer expression exactly.
pub fn eval_int(text: &str, params: &Params) -> Result<BigInt, String> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        params,
    };
    if p.toks.is_empty() {
        return Err("empty expression".into());
    }
    let v = p.expr()?;
    match p.peek() {
        None => Ok(v),
        Some(t) => Err(format!("unexpected {t:?} in {text:?}")),
    }
}

pub fn to_uint(v: &BigInt) -> Result<UInt, String> {
    let (sign, bytes) = v.to_bytes_be();
    if sign == Sign::Minus || bytes.len() > 32 {
        return Err(format!("{v} is not a uint256"));
    }
    let mut buf = [0u8; 32];
    buf[32 - bytes.len()..].copy_from_slice(&bytes);
    let mut limbs = [0u64; 4];
    for (i, limb) in limbs.iter_mut().enumerate() {
        let chunk = &buf[32 - 8 * (i + 1)..32 - 8 * i];
        *limb = u64::from_be_bytes(chunk.try_into().unwrap());
    }
    Ok(UInt::u256_from_limbs(limbs))
}

pub fn to_bigint(v: &UInt) -> BigInt {
    BigUint::from_bytes_be(&v.to_be_bytes()).into()
}

/// Reduces `v` into `[0, 2^256)`.
pub fn wrap256(v: &BigInt) -> BigInt {
    let m = BigInt::from(1) << 256;
    ((v % &m) + &m) % m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Params {
        Params::from([
            ("deposit".into(), ParamValue::Int(BigInt::from(2u64) * WEI_PER_ETHER)),
            ("benign".into(), ParamValue::Flag(false)),
        ])
    }

    fn int(text: &str) -> BigInt {
        eval_int(text, &params()).unwrap()
    }

    #[test]
    fn units_and_operators() {
        assert_eq!(int("8 ether + 2"), BigInt::from(8_000_000_000_000_000_002u128));
        assert_eq!(int("${deposit} - 10 * 1 ether"), BigInt::from(-8_000_000_000_000_000_000i128));
        assert_eq!(int("2^8 - 1"), BigInt::from(255));
        assert_eq!(int("0xff"), BigInt::from(255));
        assert_eq!(int("(1 + 2) * 3 gwei"), BigInt::from(9_000_000_000u64));
        assert_eq!(int("1_000"), BigInt::from(1000));
    }

    #[test]
    fn errors() {
        let p = params();
        assert!(eval_int("", &p).is_err());
        assert!(eval_int("${nope}", &p).is_err());
        assert!(eval_int("${benign}", &p).is_err());
        assert!(eval_int("1 +", &p).is_err());
        assert!(eval_int("1 2", &p).is_err());
        assert!(eval_int("0xzz", &p).is_err());
    }

    #[test]
    fn wraps_and_converts() {
        let neg = int("2 ether - 10 ether");
        let wrapped = wrap256(&neg);
        assert_eq!(wrapped, (BigInt::from(1) << 256) - BigInt::from(8_000_000_000_000_000_000u128));
        let u = to_uint(&wrapped).unwrap();
        assert_eq!(to_bigint(&u), wrapped);
        assert!(to_uint(&neg).is_err());
        assert!(to_uint(&(BigInt::from(1) << 256)).is_err());
    }
}
