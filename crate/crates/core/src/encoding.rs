//! Base-10 float tokenization and padded id-encoding of equations.
//!
//! Numeric samples are rounded to four significant digits and decomposed
//! into sign, mantissa (0–9999) and exponent (E-100–E100); 0.7895 becomes
//! (+, 7895, E-4). Equations are linearized to prefix tokens and padded to
//! a fixed length for the model.

use crate::expr::Expr;
use crate::token::{Token, EXPONENT_MAX, EXPONENT_MIN, MANTISSA_MAX, MAX_VARS};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error("value {0} outside the tokenizable exponent range E-100..=E100")]
    Range(f64),
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("prefix form has {got} tokens, exceeding pad length {pad_len}")]
    Length { got: usize, pad_len: usize },
    #[error("inconsistent input dimension: row {row} has {got} variables, expected {expected}")]
    DimMismatch {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("input dimension {0} exceeds the supported maximum {MAX_VARS}")]
    TooManyVars(usize),
}

/// A four-significant-digit base-10 float: sign · mantissa · 10^exponent.
/// Zero is encoded as (+, 0, E0); otherwise the mantissa is normalized to
/// 1000..=9999.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericTokenTriple {
    pub negative: bool,
    pub mantissa: u16,
    pub exponent: i16,
}

impl NumericTokenTriple {
    pub const ZERO: NumericTokenTriple = NumericTokenTriple {
        negative: false,
        mantissa: 0,
        exponent: 0,
    };

    /// Decoded magnitude: sign · mantissa · 10^exponent, correctly rounded
    /// to the nearest f64 (parsed as a decimal literal, so 7895·10^-4 is
    /// exactly the double 0.7895).
    pub fn value(self) -> f64 {
        let mag: f64 = format!("{}e{}", self.mantissa, self.exponent)
            .parse()
            .expect("decimal literal");
        if self.negative {
            -mag
        } else {
            mag
        }
    }

    pub fn tokens(self) -> [Token; 3] {
        [
            Token::Sign {
                negative: self.negative,
            },
            Token::Mantissa(self.mantissa),
            Token::Exponent(self.exponent),
        ]
    }
}

/// Round to four significant decimal digits (half-even) and decompose.
///
/// Delegates the correctly-rounded digit extraction to the standard
/// library's decimal formatter, which rounds the exact binary value of `v`
/// to nearest with ties to even.
pub fn tokenize_float(v: f64) -> Result<NumericTokenTriple, EncodingError> {
    if !v.is_finite() {
        return Err(EncodingError::NonFinite(v));
    }
    if v == 0.0 {
        return Ok(NumericTokenTriple::ZERO);
    }
    let (mantissa, exponent) = four_digit_parts(v.abs());
    if !(EXPONENT_MIN..=EXPONENT_MAX).contains(&exponent) {
        return Err(EncodingError::Range(v));
    }
    Ok(NumericTokenTriple {
        negative: v < 0.0,
        mantissa,
        exponent,
    })
}

/// Like [`tokenize_float`] but saturating: values beyond the exponent range
/// clamp to the largest representable magnitude, values that round below it
/// become zero. Used where encoding must not fail (prefix linearization of
/// fitted constants).
pub fn tokenize_float_saturating(v: f64) -> NumericTokenTriple {
    match tokenize_float(v) {
        Ok(t) => t,
        Err(EncodingError::NonFinite(_)) | Err(EncodingError::Range(_)) if v == 0.0 => {
            NumericTokenTriple::ZERO
        }
        Err(_) => {
            if !v.is_finite() || v.abs() >= 1.0 {
                NumericTokenTriple {
                    negative: v.is_sign_negative(),
                    mantissa: MANTISSA_MAX,
                    exponent: EXPONENT_MAX,
                }
            } else {
                NumericTokenTriple::ZERO
            }
        }
    }
}

/// Mantissa in 1000..=9999 and exponent with magnitude = mantissa·10^exp.
fn four_digit_parts(mag: f64) -> (u16, i16) {
    debug_assert!(mag > 0.0 && mag.is_finite());
    // "d.ddde±p" with correctly rounded digits, ties to even.
    let s = format!("{mag:.3e}");
    let (digits, exp) = s.split_once('e').expect("std exponential format");
    let p: i32 = exp.parse().expect("exponent digits");
    let mut mant = 0u16;
    for ch in digits.bytes() {
        if ch == b'.' {
            continue;
        }
        mant = mant * 10 + (ch - b'0') as u16;
    }
    debug_assert!((1000..=9999).contains(&mant));
    (mant, (p - 3) as i16)
}

/// Inverse map: sign · mantissa · 10^exponent.
pub fn detokenize_float(t: NumericTokenTriple) -> f64 {
    t.value()
}

/// Tokenized numeric samples: m rows of D+1 triples, row i encoding
/// (x_i, y_i). Never serialized; recomputed from raw data.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGrid {
    dim: usize,
    rows: Vec<Vec<NumericTokenTriple>>,
}

impl SampleGrid {
    /// Number of input variables D.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of samples m.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row i: D+1 triples covering x then y.
    pub fn row(&self, i: usize) -> &[NumericTokenTriple] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<NumericTokenTriple>] {
        &self.rows
    }

    /// Restrict to a subset of row indices (used to subsample long datasets
    /// during training). Indices must be in range.
    pub fn select_rows(&self, idx: &[usize]) -> SampleGrid {
        SampleGrid {
            dim: self.dim,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Tokenize a paired dataset into a [`SampleGrid`]. Row order is preserved;
/// the model itself must be insensitive to it.
pub fn encode_samples(data: &[(Vec<f64>, f64)]) -> Result<SampleGrid, EncodingError> {
    let dim = data.first().map(|(x, _)| x.len()).unwrap_or(0);
    if dim > MAX_VARS {
        return Err(EncodingError::TooManyVars(dim));
    }
    let mut rows = Vec::with_capacity(data.len());
    for (i, (x, y)) in data.iter().enumerate() {
        if x.len() != dim {
            return Err(EncodingError::DimMismatch {
                row: i,
                got: x.len(),
                expected: dim,
            });
        }
        let mut row = Vec::with_capacity(dim + 1);
        for &v in x {
            row.push(tokenize_float(v)?);
        }
        row.push(tokenize_float(*y)?);
        rows.push(row);
    }
    Ok(SampleGrid { dim, rows })
}

/// Encode an equation as token ids, BOS…EOS then PAD to `pad_len`.
pub fn encode_equation(e: &Expr, pad_len: usize) -> Result<Vec<u32>, EncodingError> {
    let toks = crate::expr::to_prefix(e);
    if toks.len() > pad_len {
        return Err(EncodingError::Length {
            got: toks.len(),
            pad_len,
        });
    }
    let mut ids: Vec<u32> = toks.iter().map(|t| t.id()).collect();
    ids.resize(pad_len, Token::Pad.id());
    Ok(ids)
}

/// Decode ids back to tokens, dropping ids outside the table.
pub fn ids_to_tokens(ids: &[u32]) -> Vec<Token> {
    ids.iter().filter_map(|&id| Token::from_id(id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_text, to_prefix};

    #[test]
    fn paper_worked_example() {
        assert_eq!(
            tokenize_float(0.7895).unwrap(),
            NumericTokenTriple {
                negative: false,
                mantissa: 7895,
                exponent: -4
            }
        );
        assert_eq!(detokenize_float(tokenize_float(0.7895).unwrap()), 0.7895);
    }

    #[test]
    fn zero_convention() {
        assert_eq!(tokenize_float(0.0).unwrap(), NumericTokenTriple::ZERO);
        assert_eq!(tokenize_float(-0.0).unwrap(), NumericTokenTriple::ZERO);
        assert_eq!(detokenize_float(NumericTokenTriple::ZERO), 0.0);
    }

    #[test]
    fn reference_rounding_case() {
        // -123456 rounds to 1235e2 (frozen from decimal string formatting).
        assert_eq!(
            tokenize_float(-123456.0).unwrap(),
            NumericTokenTriple {
                negative: true,
                mantissa: 1235,
                exponent: 2
            }
        );
        assert_eq!(
            detokenize_float(NumericTokenTriple {
                negative: true,
                mantissa: 1235,
                exponent: 2
            }),
            -123500.0
        );
    }

    #[test]
    fn half_even_ties() {
        // Exactly representable ties: 1000.5 and 1001.5 in binary are exact.
        assert_eq!(tokenize_float(1000.5).unwrap().mantissa, 1000);
        assert_eq!(tokenize_float(1001.5).unwrap().mantissa, 1002);
    }

    #[test]
    fn mantissa_carry_at_9999_5() {
        // 99996 -> "1.000e5" -> mantissa 1000, exponent 2.
        let t = tokenize_float(99996.0).unwrap();
        assert_eq!((t.mantissa, t.exponent), (1000, 2));
    }

    #[test]
    fn range_errors_and_saturation() {
        assert!(matches!(
            tokenize_float(1e105),
            Err(EncodingError::Range(_))
        ));
        assert!(matches!(
            tokenize_float(1e-120),
            Err(EncodingError::Range(_))
        ));
        assert!(matches!(
            tokenize_float(f64::NAN),
            Err(EncodingError::NonFinite(_))
        ));
        let hi = tokenize_float_saturating(1e200);
        assert_eq!((hi.mantissa, hi.exponent, hi.negative), (9999, 100, false));
        let lo = tokenize_float_saturating(1e-200);
        assert_eq!(lo, NumericTokenTriple::ZERO);
    }

    #[test]
    fn four_sig_digit_bound_over_decades() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20_000 {
            // 12 log-uniform decades, both signs.
            let e = rng.random_range(-6.0..6.0);
            let v: f64 = 10f64.powf(e) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let t = tokenize_float(v).unwrap();
            let back = detokenize_float(t);
            let decade = v.abs().log10().floor();
            let bound = 5.0 * 10f64.powf(decade - 4.0) * (1.0 + 1e-12);
            assert!(
                (back - v).abs() <= bound,
                "v={v} back={back} bound={bound}"
            );
            // Idempotence: re-tokenizing the decoded value is stable.
            assert_eq!(tokenize_float(back).unwrap(), t);
        }
    }

    #[test]
    fn encode_equation_pads_and_checks_length() {
        let e = parse_text("x0 + x1").unwrap();
        let ids = encode_equation(&e, 8).unwrap();
        assert_eq!(ids.len(), 8);
        assert_eq!(ids_to_tokens(&ids[..5]), to_prefix(&e));
        assert_eq!(&ids[5..], &[Token::Pad.id(); 3]);
        assert!(matches!(
            encode_equation(&e, 4),
            Err(EncodingError::Length { got: 5, pad_len: 4 })
        ));
    }

    #[test]
    fn encode_samples_shapes() {
        let grid = encode_samples(&[(vec![2.0], 5.0)]).unwrap();
        assert_eq!(grid.dim(), 1);
        assert_eq!(grid.len(), 1);
        assert_eq!(grid.row(0).len(), 2);

        let bad = encode_samples(&[(vec![1.0, 2.0], 0.0), (vec![1.0], 0.0)]);
        assert!(matches!(bad, Err(EncodingError::DimMismatch { .. })));

        let empty = encode_samples(&[]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.dim(), 0);
    }
}
