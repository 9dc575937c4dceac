use serde::{Deserialize, Serialize};

use super::{build_instance, ExperimentConfig};
use crate::error::Result;
use crate::lattice::{LatticeStats, STATS_CSV_HEADER};
use crate::parallel::ordered_map;
use crate::search::{search, HistoryLimit};

/// Instance-averaged lattice statistics for one `(k, b)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: HistoryLimit,
    pub b: usize,
    pub log_score_mass: f64,
    pub num_sequences_log10: f64,
    pub num_recombinations: f64,
    /// Mean over the instances that recombined at least once.
    pub mean_distance: Option<f64>,
    pub instances: usize,
}

pub fn stats_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let indices: Vec<usize> = (0..cfg.instances).collect();
    let instances: Vec<_> = ordered_map(&indices, |_, &i| build_instance(cfg, i)).into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &b in &cfg.beam_sizes {
        for &k in &cfg.k_values {
            let sc = cfg.search_config(k, b);
            let stats: Vec<LatticeStats> =
                ordered_map(&instances, |_, (combined, x)| search(combined, x, &sc)?.stats())
                    .into_iter()
                    .collect::<Result<_>>()?;
            rows.push(average(k, b, &stats));
        }
    }
    Ok(rows)
}

fn average(k: HistoryLimit, b: usize, stats: &[LatticeStats]) -> SweepRow {
    let n = stats.len() as f64;
    let distances: Vec<f64> = stats.iter().filter_map(|s| s.mean_distance).collect();
    SweepRow {
        k,
        b,
        log_score_mass: stats.iter().map(|s| s.log_score_mass).sum::<f64>() / n,
        num_sequences_log10: stats.iter().map(|s| s.num_sequences_log10).sum::<f64>() / n,
        num_recombinations: stats.iter().map(|s| s.num_recombinations as f64).sum::<f64>() / n,
        mean_distance: (!distances.is_empty()).then(|| distances.iter().sum::<f64>() / distances.len() as f64),
        instances: stats.len(),
    }
}

/// CSV with the lattice statistics header; a missing distance is left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(STATS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let d = r.mean_distance.map(|d| format!("{d:.10e}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{:.10},{:.10},{:.6},{}\n",
            r.k, r.b, r.log_score_mass, r.num_sequences_log10, r.num_recombinations, d
        ));
    }
    s
}
