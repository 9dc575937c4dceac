//! Vocabularies, token sequences and the token-level edit distance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of distinct symbols with a designated sentence-end token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    eos_id: usize,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos_id: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidVocabulary("empty".into()));
        }
        if eos_id >= tokens.len() {
            return Err(Error::InvalidVocabulary(format!("eos id {eos_id} out of range for {} tokens", tokens.len())));
        }
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocabulary(format!("bad symbol {t:?}")));
            }
            if tokens[..i].contains(t) {
                return Err(Error::InvalidVocabulary(format!("duplicate symbol {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, eos_id })
    }

    /// `size - 1` single-letter symbols `A, B, ...` followed by `</s>`.
    pub fn letters(size: usize) -> Result<Self> {
        if size == 0 || size > 27 {
            return Err(Error::InvalidVocabulary(format!("letter vocabulary of size {size}")));
        }
        let mut tokens: Vec<String> = (0..size - 1).map(|i| char::from(b'A' + i as u8).to_string()).collect();
        tokens.push("</s>".into());
        Vocabulary::new(tokens, size - 1)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eos_id(&self) -> usize {
        self.eos_id
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id_of(&self, symbol: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == symbol)
    }

    pub fn check(&self, id: usize) -> Result<()> {
        if id < self.tokens.len() {
            Ok(())
        } else {
            Err(Error::InvalidToken { token: id, size: self.tokens.len() })
        }
    }

    /// Renders ids as concatenated symbols, `</s>` omitted.
    pub fn render(&self, ids: &[usize]) -> String {
        let sep = if self.tokens.iter().all(|t| t.chars().count() == 1 || t == "</s>") { "" } else { " " };
        ids.iter()
            .filter(|&&id| id != self.eos_id)
            .map(|&id| self.symbol(id).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(sep)
    }

    /// Parses a string of single-character symbols (e.g. `"BADC"`).
    pub fn parse_letters(&self, s: &str) -> Result<Vec<usize>> {
        s.chars()
            .map(|c| {
                self.id_of(&c.to_string()).ok_or_else(|| Error::InvalidVocabulary(format!("unknown symbol {c:?}")))
            })
            .collect()
    }
}

/// A label sequence over some vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<usize>);

impl TokenSequence {
    pub fn new(ids: Vec<usize>, vocab: &Vocabulary) -> Result<Self> {
        for &id in &ids {
            vocab.check(id)?;
        }
        Ok(TokenSequence(ids))
    }

    /// Appends `eos` to `ids`, rejecting sequences that already contain it.
    pub fn finished(mut ids: Vec<usize>, vocab: &Vocabulary) -> Result<Self> {
        if ids.contains(&vocab.eos_id()) {
            return Err(Error::InvalidVocabulary("eos inside sequence body".into()));
        }
        ids.push(vocab.eos_id());
        TokenSequence::new(ids, vocab)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Ends with `eos` and contains it exactly once.
    pub fn is_finished(&self, eos: usize) -> bool {
        self.0.last() == Some(&eos) && self.0.iter().filter(|&&t| t == eos).count() == 1
    }

    /// The tokens before the terminating `eos`, or all tokens if unfinished.
    pub fn body(&self, eos: usize) -> &[usize] {
        match self.0.last() {
            Some(&t) if t == eos => &self.0[..self.0.len() - 1],
            _ => &self.0,
        }
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Exhaustive alignment search: every way to consume both strings with
    // match/substitute, delete, or insert moves.
    fn brute_force_distance(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, None) => 0,
            (Some(_), None) => a.len(),
            (None, Some(_)) => b.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = brute_force_distance(ra, rb) + usize::from(x != y);
                let del = brute_force_distance(ra, b) + 1;
                let ins = brute_force_distance(a, rb) + 1;
                sub.min(del).min(ins)
            }
        }
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(b"ABC", b"ABC"), 0);
        assert_eq!(edit_distance(b"ABC", b"AXC"), 1);
        assert_eq!(brute_force_distance(b"AB", b"BABA"), 2);
        assert_eq!(edit_distance(b"AB", b"BABA"), 2);
        assert_eq!(edit_distance::<u8>(b"", b"AB"), 2);
    }

    #[test]
    fn vocabulary_validation() {
        assert!(Vocabulary::new(vec![], 0).is_err());
        assert!(Vocabulary::new(vec!["a".into()], 1).is_err());
        assert!(Vocabulary::new(vec!["a".into(), "a".into()], 1).is_err());
        let v = Vocabulary::letters(5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.eos_id(), 4);
        assert_eq!(v.symbol(4), Some("</s>"));
        assert_eq!(v.parse_letters("BAD").unwrap(), vec![1, 0, 3]);
        assert_eq!(v.render(&[1, 0, 3, 4]), "BAD");
    }

    #[test]
    fn finished_sequences() {
        let v = Vocabulary::letters(4).unwrap();
        let s = TokenSequence::finished(vec![0, 1], &v).unwrap();
        assert!(s.is_finished(3));
        assert_eq!(s.body(3), &[0, 1]);
        assert!(!TokenSequence(vec![3, 3]).is_finished(3));
        assert!(!TokenSequence(vec![0]).is_finished(3));
        assert!(TokenSequence::new(vec![7], &v).is_err());
    }

    proptest! {
        #[test]
        fn edit_distance_matches_brute_force(a in proptest::collection::vec(0u8..3, 0..6),
                                             b in proptest::collection::vec(0u8..3, 0..6)) {
            prop_assert_eq!(edit_distance(&a, &b), brute_force_distance(&a, &b));
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert_eq!(edit_distance(&a, &b) == 0, a == b);
        }

        #[test]
        fn edit_distance_triangle(a in proptest::collection::vec(0u8..3, 0..8),
                                  b in proptest::collection::vec(0u8..3, 0..8),
                                  c in proptest::collection::vec(0u8..3, 0..8)) {
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }
    }
}
