use super::*;
use crate::error::Error;
use crate::lattice::deserialize;
use crate::models::Family;
use crate::search::HistoryLimit;

fn small() -> ExperimentConfig {
    ExperimentConfig { instances: 4, max_length: 5, ..ExperimentConfig::default() }
}

#[test]
fn config_reads_flat_toml() {
    let cfg = ExperimentConfig::from_toml(
        "family = \"limited\"\ncontext = 3\nk_values = [1, 3, \"inf\"]\nbeam_sizes = [2, 4]\nseed = 9\n",
    )
    .unwrap();
    assert_eq!(cfg.family, Family::Limited);
    assert_eq!(cfg.k_values, vec![HistoryLimit::Finite(1), HistoryLimit::Finite(3), HistoryLimit::Infinite]);
    assert_eq!(cfg.beam_sizes, vec![2, 4]);
    assert_eq!(cfg.vocab_size, ExperimentConfig::default().vocab_size);
    let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn config_rejects_unknown_and_invalid_fields() {
    let err = ExperimentConfig::from_toml("beam_size = 4\n").unwrap_err();
    assert!(matches!(&err, Error::InvalidConfig(m) if m.contains("beam_size")), "{err}");
    let err = ExperimentConfig::from_toml("instances = 0\n").unwrap_err();
    assert!(matches!(&err, Error::InvalidConfig(m) if m.starts_with("instances")), "{err}");
    let err = ExperimentConfig::from_toml("k_values = [0]\n").unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)));
    let err = ExperimentConfig::from_toml("beam_sizes = [0]\n").unwrap_err();
    assert!(matches!(&err, Error::InvalidConfig(m) if m.starts_with("beam_sizes")), "{err}");
}

#[test]
fn instances_are_reproducible_and_independent() {
    let cfg = small();
    let (a, xa) = build_instance(&cfg, 2).unwrap();
    let (b, xb) = build_instance(&ExperimentConfig { instances: 100, ..cfg.clone() }, 2).unwrap();
    assert_eq!((a, xa.clone()), (b, xb));
    let (_, xc) = build_instance(&cfg, 3).unwrap();
    assert_ne!(xa, xc);
}

#[test]
fn infinite_history_row_has_no_recombinations() {
    let cfg = ExperimentConfig { k_values: vec![HistoryLimit::Infinite], ..small() };
    let rows = stats_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].num_recombinations, 0.0);
    assert!(rows[0].num_sequences_log10 <= 8f64.log10() + 1e-12);
    assert_eq!(rows[0].mean_distance, None);
    let csv = sweep_csv(&rows);
    assert!(csv.starts_with("k,b,log_score_mass,num_sequences_log10,num_recombinations,mean_distance\ninf,8,"));
    assert!(csv.trim_end().ends_with(','));
}

#[test]
fn distance_vanishes_once_k_reaches_the_context() {
    let cfg = ExperimentConfig {
        family: Family::Limited,
        context: 3,
        beta: 0.0,
        k_values: vec![
            HistoryLimit::Finite(1),
            HistoryLimit::Finite(2),
            HistoryLimit::Finite(3),
            HistoryLimit::Finite(4),
        ],
        max_length: 7,
        ..small()
    };
    let rows = stats_sweep(&cfg).unwrap();
    assert!(rows[0].mean_distance.unwrap() > 0.0);
    assert!(rows[1].mean_distance.unwrap() > 0.0);
    for r in &rows[2..] {
        assert!(r.mean_distance.is_none_or(|d| d == 0.0), "{r:?}");
    }
}

#[test]
fn sweep_is_deterministic_across_pools() {
    let cfg = small();
    let one = crate::parallel::with_threads(1, || stats_sweep(&cfg)).unwrap().unwrap();
    let four = crate::parallel::with_threads(4, || stats_sweep(&cfg)).unwrap().unwrap();
    assert_eq!(sweep_csv(&one), sweep_csv(&four));
}

#[test]
fn search_report_matches_lattice() {
    let cfg = ExperimentConfig { k_values: vec![HistoryLimit::Finite(1)], beam_sizes: vec![3], instance: 1, ..small() };
    let (result, report) = run_search(&cfg).unwrap();
    assert_eq!(report.k, "1");
    assert_eq!(report.finished.len(), result.finished.len());
    assert_eq!(report.stats.num_recombinations, result.recombination_count);
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"num_sequences\""));
}

#[test]
fn demo_output_lists_eight_sequences() {
    let out = fig1_demo().unwrap();
    assert_eq!(out.path_count, "8");
    assert!(out.sequences.contains(&"BBDC".to_string()));
    assert!(out.sequences.contains(&"CBDC".to_string()));
    assert_eq!(out.sequences.len(), 8);
    let lattice = deserialize(&out.lattice_text).unwrap();
    assert_eq!(crate::lattice::serialize(&lattice), out.lattice_text);
    assert!(out.render().ends_with("paths 8\n"));
    assert_eq!(out.merges.len(), 2);
}

#[test]
fn oracle_suite_passes_and_detects_tight_tolerances() {
    let cfg = ExperimentConfig { instances: 3, ..small() };
    let report = oracle_check(&cfg).unwrap();
    for c in &report.checks {
        assert!(c.passed, "{c:?}");
    }
    assert!(report.passed);
    let strict = oracle_check(&ExperimentConfig { tolerance: Some(1e-30), ..cfg }).unwrap();
    assert!(!strict.passed);
    let failed: Vec<_> = strict.checks.iter().filter(|c| !c.passed).collect();
    assert!(failed.iter().all(|c| c.max_delta > 1e-30));
}

#[test]
fn training_run_logs_every_epoch() {
    let cfg = ExperimentConfig {
        family: Family::Limited,
        vocab_size: 4,
        train_size: 4,
        heldout_size: 3,
        epochs: 2,
        pretrain_epochs: 2,
        max_length: 4,
        ..ExperimentConfig::default()
    };
    let run = run_training(&cfg).unwrap();
    assert_eq!(run.log.epochs.len(), 3);
    assert_eq!(run.pretrain_loglik.len(), 2);
    let again = run_training(&cfg).unwrap();
    assert_eq!(run.log, again.log);
}
