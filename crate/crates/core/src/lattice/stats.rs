use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::Lattice;
use crate::error::Result;

pub const STATS_CSV_HEADER: &str = "k,b,log_score_mass,num_sequences_log10,num_recombinations,mean_distance";

/// Summary of one search lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeStats {
    /// Natural-log sum of all path scores.
    pub log_score_mass: f64,
    #[serde(with = "big_decimal")]
    pub num_sequences: BigUint,
    pub num_sequences_log10: f64,
    pub num_recombinations: usize,
    /// Mean of the distance samples; `None` when nothing was merged.
    pub mean_distance: Option<f64>,
}

mod big_decimal {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `log10(n)`, or `-inf` for zero.
pub fn big_log10(n: &BigUint) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let digits = n.to_string();
    if digits.len() <= 15 {
        return digits.parse::<f64>().expect("decimal digits").log10();
    }
    let lead: f64 = format!("0.{}", &digits[..17]).parse().expect("decimal digits");
    digits.len() as f64 + lead.log10()
}

pub fn assemble_stats(lattice: &Lattice, num_recombinations: usize, distance_samples: &[f64]) -> Result<LatticeStats> {
    let num_sequences = lattice.count_paths()?;
    let mean_distance = if distance_samples.is_empty() {
        None
    } else {
        Some(distance_samples.iter().sum::<f64>() / distance_samples.len() as f64)
    };
    Ok(LatticeStats {
        log_score_mass: lattice.total_mass()?,
        num_sequences_log10: big_log10(&num_sequences),
        num_sequences,
        num_recombinations,
        mean_distance,
    })
}

impl LatticeStats {
    /// One CSV row matching [`STATS_CSV_HEADER`]; `k` is rendered by the caller.
    pub fn csv_row(&self, k: &str, b: usize) -> String {
        let mean = self.mean_distance.map(|d| format!("{d:.10e}")).unwrap_or_default();
        format!(
            "{k},{b},{:.10},{:.10},{},{mean}",
            self.log_score_mass, self.num_sequences_log10, self.num_recombinations
        )
    }
}
