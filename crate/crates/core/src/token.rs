//! Token vocabulary shared by the equation channel and the numeric channel.
//!
//! The vocabulary is a fixed, versioned table: specials, operators,
//! variables, the constant placeholder, then the numeric sub-tokens
//! (sign, mantissa 0..=9999, exponent E-100..=E100). Token ids are the
//! index into the table; checkpoints ship the table so decoded ids stay
//! meaningful.

use crate::expr::{BinaryOp, UnaryOp};

/// Largest variable index + 1 supported anywhere in the engine.
pub const MAX_VARS: usize = 10;
/// Mantissa tokens cover the integers 0..=9999.
pub const MANTISSA_MAX: u16 = 9999;
/// Exponent tokens cover E-100..=E100.
pub const EXPONENT_MIN: i16 = -100;
pub const EXPONENT_MAX: i16 = 100;

/// One entry of the vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    Bos,
    Eos,
    Bin(BinaryOp),
    Un(UnaryOp),
    /// Variable x0..x9.
    Var(u8),
    /// The constant placeholder "c".
    ConstHole,
    /// Sign of a numeric triple; `negative = true` renders as "-".
    Sign { negative: bool },
    /// Mantissa of a numeric triple, 0..=9999.
    Mantissa(u16),
    /// Power-of-ten exponent of a numeric triple, -100..=100.
    Exponent(i16),
}

const ID_PAD: u32 = 0;
const ID_BOS: u32 = 1;
const ID_EOS: u32 = 2;
const ID_BIN_BASE: u32 = 3; // add, sub, mul, div
const ID_UN_BASE: u32 = 7; // log, exp, sin, cos, tan
const ID_VAR_BASE: u32 = 12; // x0..x9
const ID_CONST_HOLE: u32 = 22;
const ID_SIGN_PLUS: u32 = 23;
const ID_SIGN_MINUS: u32 = 24;
const ID_MANTISSA_BASE: u32 = 25;
const ID_EXPONENT_BASE: u32 = ID_MANTISSA_BASE + MANTISSA_MAX as u32 + 1; // 10025

/// Total number of vocabulary entries.
pub const VOCAB_SIZE: usize =
    ID_EXPONENT_BASE as usize + (EXPONENT_MAX - EXPONENT_MIN) as usize + 1; // 10226

impl Token {
    /// Stable id of this token in the vocabulary table.
    pub fn id(self) -> u32 {
        match self {
            Token::Pad => ID_PAD,
            Token::Bos => ID_BOS,
            Token::Eos => ID_EOS,
            Token::Bin(op) => ID_BIN_BASE + op as u32,
            Token::Un(op) => ID_UN_BASE + op as u32,
            Token::Var(i) => {
                debug_assert!((i as usize) < MAX_VARS);
                ID_VAR_BASE + i as u32
            }
            Token::ConstHole => ID_CONST_HOLE,
            Token::Sign { negative: false } => ID_SIGN_PLUS,
            Token::Sign { negative: true } => ID_SIGN_MINUS,
            Token::Mantissa(m) => {
                debug_assert!(m <= MANTISSA_MAX);
                ID_MANTISSA_BASE + m as u32
            }
            Token::Exponent(e) => {
                debug_assert!((EXPONENT_MIN..=EXPONENT_MAX).contains(&e));
                ID_EXPONENT_BASE + (e - EXPONENT_MIN) as u32
            }
        }
    }

    /// Inverse of [`Token::id`]. Returns `None` for out-of-table ids.
    pub fn from_id(id: u32) -> Option<Token> {
        match id {
            ID_PAD => Some(Token::Pad),
            ID_BOS => Some(Token::Bos),
            ID_EOS => Some(Token::Eos),
            _ if (ID_BIN_BASE..ID_UN_BASE).contains(&id) => {
                Some(Token::Bin(BinaryOp::from_index((id - ID_BIN_BASE) as usize)?))
            }
            _ if (ID_UN_BASE..ID_VAR_BASE).contains(&id) => {
                Some(Token::Un(UnaryOp::from_index((id - ID_UN_BASE) as usize)?))
            }
            _ if (ID_VAR_BASE..ID_VAR_BASE + MAX_VARS as u32).contains(&id) => {
                Some(Token::Var((id - ID_VAR_BASE) as u8))
            }
            ID_CONST_HOLE => Some(Token::ConstHole),
            ID_SIGN_PLUS => Some(Token::Sign { negative: false }),
            ID_SIGN_MINUS => Some(Token::Sign { negative: true }),
            _ if (ID_MANTISSA_BASE..ID_EXPONENT_BASE).contains(&id) => {
                Some(Token::Mantissa((id - ID_MANTISSA_BASE) as u16))
            }
            _ if (id as usize) < VOCAB_SIZE => {
                Some(Token::Exponent((id - ID_EXPONENT_BASE) as i16 + EXPONENT_MIN))
            }
            _ => None,
        }
    }

    /// Canonical string form used in corpus files and the checkpoint header.
    pub fn text(self) -> String {
        match self {
            Token::Pad => "PAD".into(),
            Token::Bos => "BOS".into(),
            Token::Eos => "EOS".into(),
            Token::Bin(op) => op.name().into(),
            Token::Un(op) => op.name().into(),
            Token::Var(i) => format!("x{i}"),
            Token::ConstHole => "c".into(),
            Token::Sign { negative: false } => "+".into(),
            Token::Sign { negative: true } => "-".into(),
            Token::Mantissa(m) => format!("{m}"),
            Token::Exponent(e) => format!("E{e}"),
        }
    }

    /// Inverse of [`Token::text`].
    pub fn from_text(s: &str) -> Option<Token> {
        match s {
            "PAD" => return Some(Token::Pad),
            "BOS" => return Some(Token::Bos),
            "EOS" => return Some(Token::Eos),
            "c" => return Some(Token::ConstHole),
            "+" => return Some(Token::Sign { negative: false }),
            "-" => return Some(Token::Sign { negative: true }),
            _ => {}
        }
        if let Some(op) = BinaryOp::from_name(s) {
            return Some(Token::Bin(op));
        }
        if let Some(op) = UnaryOp::from_name(s) {
            return Some(Token::Un(op));
        }
        if let Some(rest) = s.strip_prefix('x') {
            if let Ok(i) = rest.parse::<u8>() {
                if (i as usize) < MAX_VARS && rest == i.to_string() {
                    return Some(Token::Var(i));
                }
            }
        }
        if let Some(rest) = s.strip_prefix('E') {
            if let Ok(e) = rest.parse::<i16>() {
                if (EXPONENT_MIN..=EXPONENT_MAX).contains(&e) && rest == e.to_string() {
                    return Some(Token::Exponent(e));
                }
            }
        }
        if let Ok(m) = s.parse::<u16>() {
            if m <= MANTISSA_MAX && s == m.to_string() {
                return Some(Token::Mantissa(m));
            }
        }
        None
    }
}

/// An ordered token sequence. Well-formed sequences start with BOS, end
/// with EOS, and carry PAD only after EOS.
pub type TokenSeq = Vec<Token>;

/// The fixed vocabulary table. Kept as a unit struct: the table is defined
/// by the id layout above; this type exists to serialize it into
/// checkpoints and to verify a loaded table matches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Vocab;

impl Vocab {
    pub fn size(&self) -> usize {
        VOCAB_SIZE
    }

    /// Ordered list of token strings, index = id.
    pub fn table(&self) -> Vec<String> {
        (0..VOCAB_SIZE as u32)
            .map(|id| Token::from_id(id).expect("id < VOCAB_SIZE").text())
            .collect()
    }

    /// Check a serialized table against this build's vocabulary.
    pub fn matches_table(&self, table: &[String]) -> bool {
        table.len() == VOCAB_SIZE
            && table
                .iter()
                .enumerate()
                .all(|(id, s)| Token::from_id(id as u32).map(|t| t.text()) == Some(s.clone()))
    }
}

/// Levenshtein distance between two token sequences.
///
/// PAD tokens are stripped from both sides before comparison; all other
/// tokens (including BOS/EOS) participate.
pub fn edit_distance(a: &[Token], b: &[Token]) -> usize {
    let a: Vec<Token> = a.iter().copied().filter(|t| *t != Token::Pad).collect();
    let b: Vec<Token> = b.iter().copied().filter(|t| *t != Token::Pad).collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // Two-row DP over token equality.
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
