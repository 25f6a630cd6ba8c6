//! Exact coordinate parsing and printing for the JSON interchange format.
//!
//! Coordinates may appear as JSON integers, as decimal strings (`"0.25"`,
//! `"-3"`, `"1e-2"`), or as two-element `[numerator, denominator]` arrays.
//! Non-integer JSON numbers are accepted through their shortest round-trip
//! decimal form, which is the literal the producing side wrote in every case
//! we care about. On output we prefer the most readable exact form: a plain
//! integer, then a finite decimal when the denominator is of the form
//! 2^a·5^b, then a `[num, den]` pair.

use num::bigint::BigInt;
use num::{BigRational, One, Signed, Zero};
use serde_json::Value;

use crate::{Error, Result};

/// Parse one JSON value into an exact rational.
pub fn rat_from_json(v: &Value) -> Result<BigRational> {
    match v {
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(BigRational::from_integer(BigInt::from(i)))
            } else {
                // Shortest round-trip decimal of the float, parsed exactly.
                rat_from_decimal_str(&n.to_string())
            }
        }
        Value::String(s) => rat_from_decimal_str(s),
        Value::Array(parts) if parts.len() == 2 => {
            let num = int_from_json(&parts[0])?;
            let den = int_from_json(&parts[1])?;
            if den.is_zero() {
                return Err(Error::Parameter("coordinate denominator is zero".into()));
            }
            Ok(BigRational::new(num, den))
        }
        other => Err(Error::Parameter(format!(
            "expected number, decimal string, or [num, den] pair, got {other}"
        ))),
    }
}

fn int_from_json(v: &Value) -> Result<BigInt> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .map(BigInt::from)
            .ok_or_else(|| Error::Parameter(format!("expected integer, got {n}"))),
        Value::String(s) => s
            .parse::<BigInt>()
            .map_err(|_| Error::Parameter(format!("expected integer, got {s:?}"))),
        other => Err(Error::Parameter(format!("expected integer, got {other}"))),
    }
}

/// Parse a decimal literal (optional sign, optional fraction, optional
/// base-10 exponent) into an exact rational.
pub fn rat_from_decimal_str(s: &str) -> Result<BigRational> {
    let bad = || Error::Parameter(format!("malformed decimal literal {s:?}"));
    let t = s.trim();
    if t.is_empty() {
        return Err(bad());
    }
    // Split mantissa / exponent.
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = t[pos + 1..].parse().map_err(|_| bad())?;
            (&t[..pos], e)
        }
        None => (t, 0),
    };
    let (sign, digits) = match mant.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(pos) => (&digits[..pos], &digits[pos + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let joined = format!("{int_part}{frac_part}");
    let mantissa = if joined.is_empty() {
        BigInt::zero()
    } else {
        joined.parse::<BigInt>().map_err(|_| bad())?
    };
    let shift = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let scale = ten.pow(shift.unsigned_abs() as u32);
    let q = if shift >= 0 {
        BigRational::from_integer(mantissa * scale)
    } else {
        BigRational::new(mantissa, scale)
    };
    Ok(q * BigRational::from_integer(BigInt::from(sign)))
}

/// Print a rational as its preferred exact JSON form.
pub fn rat_to_json(q: &BigRational) -> Value {
    let num = q.numer();
    let den = q.denom();
    if den.is_one() {
        if let Ok(i) = i64::try_from(num.clone()) {
            return Value::from(i);
        }
        return Value::String(num.to_string());
    }
    if let Some(dec) = finite_decimal(q) {
        return Value::String(dec);
    }
    let as_i64 = |b: &BigInt| i64::try_from(b.clone()).map(Value::from).unwrap_or_else(|_| Value::String(b.to_string()));
    Value::Array(vec![as_i64(num), as_i64(den)])
}

/// Exact finite decimal representation, when the reduced denominator is of
/// the form 2^a·5^b (and reasonably small).
fn finite_decimal(q: &BigRational) -> Option<String> {
    let mut den = q.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut twos = 0u32;
    let mut fives = 0u32;
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() || twos > 64 || fives > 64 {
        return None;
    }
    let places = twos.max(fives);
    // num / den = num·(2^?·5^?) / 10^places
    let scaled = q.numer() * two.pow(places - twos) * five.pow(places - fives);
    let neg = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = format!("{:0>width$}", digits, width = places as usize + 1);
    let split = digits.len() - places as usize;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(&digits[..split]);
    out.push('.');
    out.push_str(&digits[split..]);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num::FromPrimitive;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_all_accepted_forms() {
        assert_eq!(rat_from_json(&serde_json::json!(-3)).unwrap(), q(-3, 1));
        assert_eq!(rat_from_json(&serde_json::json!("0.25")).unwrap(), q(1, 4));
        assert_eq!(rat_from_json(&serde_json::json!("-1.75")).unwrap(), q(-7, 4));
        assert_eq!(rat_from_json(&serde_json::json!([1, 3])).unwrap(), q(1, 3));
        assert_eq!(rat_from_json(&serde_json::json!([-2, 4])).unwrap(), q(-1, 2));
        assert_eq!(rat_from_json(&serde_json::json!("1e-2")).unwrap(), q(1, 100));
        assert_eq!(rat_from_json(&serde_json::json!("2.5e3")).unwrap(), q(2500, 1));
        // A JSON float that is exactly representable round-trips exactly.
        assert_eq!(rat_from_json(&serde_json::json!(0.25)).unwrap(), q(1, 4));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(rat_from_json(&serde_json::json!("1.2.3")).is_err());
        assert!(rat_from_json(&serde_json::json!([1, 0])).is_err());
        assert!(rat_from_json(&serde_json::json!([1, 2, 3])).is_err());
        assert!(rat_from_json(&serde_json::json!(null)).is_err());
        assert!(rat_from_decimal_str("").is_err());
        assert!(rat_from_decimal_str("--1").is_err());
    }

    #[test]
    fn prints_preferred_forms() {
        assert_eq!(rat_to_json(&q(-3, 1)), serde_json::json!(-3));
        assert_eq!(rat_to_json(&q(1, 4)), serde_json::json!("0.25"));
        assert_eq!(rat_to_json(&q(-1, 2)), serde_json::json!("-0.5"));
        assert_eq!(rat_to_json(&q(1, 20)), serde_json::json!("0.05"));
        assert_eq!(rat_to_json(&q(1, 3)), serde_json::json!([1, 3]));
    }

    #[test]
    fn print_parse_round_trip() {
        let samples = [q(0, 1), q(7, 8), q(-22, 7), q(1, 1024), q(355, 113), q(-5, 1)];
        for s in &samples {
            let v = rat_to_json(s);
            assert_eq!(&rat_from_json(&v).unwrap(), s, "round-trip of {s}");
        }
        let _ = BigRational::from_f64(0.1);
    }
}
