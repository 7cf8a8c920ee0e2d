//! Small helpers around `BigRational`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{FairDivError, Result};

pub type Rational = BigRational;

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // numerator/denominator overflow f64; fall back to scaled division
        let shift = r.denom().bits().max(r.numer().bits()).saturating_sub(1000);
        let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Exact rational value of a finite float.
pub fn from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| FairDivError::Parse(format!("non-finite number {x}")))
}

/// Parses `p/q`, an integer, or a decimal literal such as `0.125` or `-3e-2`, exactly.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    let err = || FairDivError::Parse(format!("cannot parse `{s}` as a rational"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| err())?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = Rational::from_integer(all.parse::<BigInt>().map_err(|_| err())?);
    let scale = exp - frac_part.len() as i32;
    let ten = Rational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, (-scale) as usize);
    }
    Ok(if neg { -value } else { value })
}

/// Canonical string form: `p/q`, or `p` for integers.
pub fn format(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn is_nonneg(r: &Rational) -> bool {
    !r.is_negative()
}

/// Serde adapter: rationals are written as strings and read from strings or numbers.
pub mod serde_rational {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub(crate) enum Repr {
        Str(String),
        Int(i64),
        Float(f64),
    }

    impl Repr {
        pub(crate) fn into_rational(self) -> Result<Rational> {
            match self {
                Repr::Str(s) => parse(&s),
                Repr::Int(i) => Ok(int(i)),
                // shortest round-trip decimal, so 0.1 reads as 1/10
                Repr::Float(f) => parse(&format!("{f:e}")),
            }
        }
    }

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        Repr::deserialize(d)?
            .into_rational()
            .map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for r in v {
                seq.serialize_element(&format(r))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<Rational>, D::Error> {
            Vec::<Repr>::deserialize(d)?
                .into_iter()
                .map(|r| r.into_rational().map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod matrix {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(
            m: &[Vec<Rational>],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(m.len()))?;
            for row in m {
                let row: Vec<String> = row.iter().map(format).collect();
                seq.serialize_element(&row)?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<Vec<Rational>>, D::Error> {
            Vec::<Vec<Repr>>::deserialize(d)?
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|r| r.into_rational().map_err(serde::de::Error::custom))
                        .collect()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_and_fraction_forms() {
        assert_eq!(parse("1/2").unwrap(), ratio(1, 2));
        assert_eq!(parse("0.125").unwrap(), ratio(1, 8));
        assert_eq!(parse("-3e-2").unwrap(), ratio(-3, 100));
        assert_eq!(parse("7").unwrap(), int(7));
        assert_eq!(parse(".5").unwrap(), ratio(1, 2));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
    }

    #[test]
    fn float_repr_reads_as_short_decimal() {
        let r = serde_rational::Repr::Float(0.1).into_rational().unwrap();
        assert_eq!(r, ratio(1, 10));
    }

    #[test]
    fn format_round_trips() {
        for r in [ratio(3, 7), int(-4), ratio(-1, 9)] {
            assert_eq!(parse(&format(&r)).unwrap(), r);
        }
    }
}
