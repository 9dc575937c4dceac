//! A small hand-built scenario over the letters A..D whose beam search with
//! `k = 1` and four hypotheses ends in a lattice holding eight sequences.

use crate::error::Result;
use crate::models::{CombinedScorer, InputFeatures, PrefixTableScorer, Scorer};
use crate::search::{HistoryLimit, SearchConfig};
use crate::sequence::Vocabulary;

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const D: usize = 3;
const EOS: usize = 4;

pub fn demo_vocabulary() -> Vocabulary {
    Vocabulary::letters(5).expect("four letters and the end token")
}

/// Next-token table over `[A, B, C, D, </s>]`, keyed by the full prefix.
pub fn demo_scorer() -> Result<CombinedScorer> {
    let table = PrefixTableScorer::new(EOS, &[0.2; 5])?
        .with_entry(vec![], &[0.25, 0.35, 0.2, 0.15, 0.05])?
        .with_entry(vec![B], &[0.5, 0.4, 0.04, 0.04, 0.02])?
        .with_entry(vec![C], &[0.1, 0.6, 0.1, 0.1, 0.1])?
        .with_entry(vec![D], &[0.1, 0.1, 0.7, 0.05, 0.05])?
        .with_entry(vec![B, B], &[0.04, 0.04, 0.4, 0.5, 0.02])?
        .with_entry(vec![B, A], &[0.6, 0.04, 0.04, 0.3, 0.02])?
        .with_entry(vec![B, B, D], &[0.04, 0.04, 0.4, 0.5, 0.02])?
        .with_entry(vec![B, A, A], &[0.5, 0.4, 0.04, 0.04, 0.02])?;
    Ok(CombinedScorer::am_only(Scorer::PrefixTable(table)))
}

pub fn demo_config() -> SearchConfig {
    SearchConfig::new(4, HistoryLimit::Finite(1), 4)
}

/// The table ignores the input; any single frame will do.
pub fn demo_input() -> InputFeatures {
    InputFeatures::new(vec![vec![0.0]]).expect("one frame")
}

/// The eight four-letter sequences the demo lattice encodes.
pub const DEMO_SEQUENCES: [&str; 8] = ["BAAA", "BAAB", "BADC", "BBDC", "CBDC", "BADD", "BBDD", "CBDD"];
