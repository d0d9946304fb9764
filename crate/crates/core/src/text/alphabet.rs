use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Lowercase letters, digits and the punctuation seen in queries and display
/// URLs; 47 symbols.
pub const DEFAULT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789 -_./:'&,!?";

#[derive(Clone, Debug, PartialEq)]
pub struct Alphabet {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let chars: Vec<char> = symbols.chars().collect();
        if chars.is_empty() {
            return Err(Error::Invalid("alphabet must not be empty".into()));
        }
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Invalid(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Alphabet { chars, index })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn position(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, i: usize) -> Option<char> {
        self.chars.get(i).copied()
    }

    pub fn symbols(&self) -> String {
        self.chars.iter().collect()
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Alphabet::new(DEFAULT_ALPHABET).expect("default alphabet is valid")
    }
}

/// One-hot `length x |V|` encoding. Text past `length` characters is ignored,
/// short text is zero-padded, and characters outside the alphabet leave an
/// all-zero row in place.
pub fn encode_chars(text: &str, length: usize, alphabet: &Alphabet) -> Tensor2 {
    let mut m = Tensor2::zeros(length, alphabet.len());
    for (i, c) in text.chars().take(length).enumerate() {
        if let Some(j) = alphabet.position(c) {
            m[(i, j)] = 1.0;
        }
    }
    m
}
