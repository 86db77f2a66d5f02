//! Report emission: one JSON document with everything, plus small derived
//! artifacts (markdown table, CSVs, manifest, split plan, checkpoints).
//!
//! Nothing here records wall-clock time, so two runs with the same config
//! and corpus produce byte-identical files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use flakesift_core::corpus::{tokenize, Corpus};
use flakesift_core::eval::{MetricsReport, RobustnessReport};
use flakesift_core::symbolic::FeatureGroupSpec;
use flakesift_core::trainer::EpochStats;
use flakesift_core::{FlakinessCategory, SymbolicVocabulary};

use crate::config::RunConfig;
use crate::error::AppResult;
use crate::io::{atomic_write, save_checkpoint, save_split_plan, save_versioned, Checkpoint};
use crate::runner::RunOutcome;

/// Short column headers, in enum order plus the macro average.
const COLUMNS: [&str; 7] = ["Async.", "Conc.", "Time", "UC", "OD", "Non-flaky", "Macro Avg."];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub init_checksum: String,
    pub final_checksum: String,
    pub n_test: usize,
    pub epochs: Vec<EpochStats>,
    pub warnings: Vec<String>,
}

/// The full machine-readable outcome of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub config_hash: String,
    pub folds: Vec<FoldSummary>,
    pub pooled: MetricsReport,
    pub robustness: Option<RobustnessReport>,
    /// Fold-0 mined vocabulary (pre-ablation), for token inspection.
    pub vocabulary: SymbolicVocabulary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub model_seed: u64,
    pub training_seed: u64,
    pub split_seed: u64,
    pub no_symbolic: bool,
    pub no_augment: bool,
    pub hardcoded_symbols: bool,
    pub stress: bool,
    pub outputs: Vec<String>,
}

fn fmt_row(name: &str, values: &[f64]) -> String {
    let mut row = format!("| {name} |");
    for v in values {
        row.push_str(&format!(" {v:.2} |"));
    }
    row.push('\n');
    row
}

fn class_row(pick: impl Fn(FlakinessCategory) -> f64) -> Vec<f64> {
    FlakinessCategory::ALL.into_iter().map(pick).collect()
}

pub fn render_metrics_md(report: &MetricsReport, robustness: Option<&RobustnessReport>) -> String {
    let rule = |cols: usize| format!("|{}\n", "---|".repeat(cols));
    let mut md = String::from("# Classification results\n\n");
    md.push_str(&format!("| Metric | {} |\n", COLUMNS.join(" | ")));
    md.push_str(&rule(COLUMNS.len() + 1));
    let mut precision = class_row(|c| report.per_class[&c].precision);
    precision.push(precision.iter().sum::<f64>() / 6.0);
    let mut recall = class_row(|c| report.per_class[&c].recall);
    recall.push(recall.iter().sum::<f64>() / 6.0);
    let mut f1 = class_row(|c| report.f1(c));
    f1.push(report.macro_f1);
    md.push_str(&fmt_row("Precision", &precision));
    md.push_str(&fmt_row("Recall", &recall));
    md.push_str(&fmt_row("F1", &f1));

    if let Some(rob) = robustness {
        md.push_str("\n# Robustness (F1 drop, percentage points)\n\n");
        md.push_str(&format!("| Mode | {} | Average |\n", COLUMNS[..6].join(" | ")));
        md.push_str(&rule(8));
        for (mode, drops) in &rob.drops {
            let mut values: Vec<f64> =
                FlakinessCategory::ALL.into_iter().map(|c| drops.per_class[&c]).collect();
            values.push(drops.average);
            md.push_str(&fmt_row(mode.as_str(), &values));
        }
    }
    md
}

pub fn render_f1_csv(report: &MetricsReport) -> String {
    let mut csv = String::from("class,precision,recall,f1,support\n");
    for c in FlakinessCategory::ALL {
        let m = &report.per_class[&c];
        csv.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{}\n",
            c, m.precision, m.recall, m.f1, m.support
        ));
    }
    csv.push_str(&format!("macro_avg,,,{:.4},\n", report.macro_f1));
    csv
}

pub fn render_drops_csv(rob: &RobustnessReport) -> String {
    let mut csv = String::from("mode,class,clean_f1,perturbed_f1,drop\n");
    for (mode, drops) in &rob.drops {
        for c in FlakinessCategory::ALL {
            csv.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4}\n",
                mode.as_str(),
                c,
                rob.clean.f1(c),
                rob.perturbed[mode].f1(c),
                drops.per_class[&c]
            ));
        }
        csv.push_str(&format!("{},average,,,{:.4}\n", mode.as_str(), drops.average));
    }
    csv
}

pub fn render_token_rank_csv(vocab: &SymbolicVocabulary) -> String {
    let mut csv = String::from("category,rank,token,chi2,p_value,project_support\n");
    for c in FlakinessCategory::ALL {
        for (rank, entry) in vocab.entries(c).iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{:.6},{:.6e},{}\n",
                c,
                rank + 1,
                entry.token,
                entry.chi2,
                entry.p_value,
                entry.project_support
            ));
        }
    }
    csv
}

/// For each indicator group and category: how many tests of that category
/// hit the group at least once.
pub fn render_token_groups_csv(corpus: &Corpus, spec: &FeatureGroupSpec) -> String {
    let mut csv = String::from("group");
    for c in FlakinessCategory::ALL {
        csv.push_str(&format!(",{c}"));
    }
    csv.push('\n');
    let streams: Vec<_> =
        corpus.tests().iter().map(|t| (t.label, tokenize(&t.source))).collect();
    for (g, group) in spec.groups.iter().enumerate() {
        csv.push_str(&group.name);
        for c in FlakinessCategory::ALL {
            let n = streams
                .iter()
                .filter(|(label, s)| *label == c && spec.group_hits(g, s) > 0)
                .count();
            csv.push_str(&format!(",{n}"));
        }
        csv.push('\n');
    }
    csv
}

/// Write every artifact for one finished run into `dir`.
pub fn write_reports(
    corpus: &Corpus,
    outcome: &RunOutcome,
    config: &RunConfig,
    dir: &Path,
) -> AppResult<()> {
    let spec = FeatureGroupSpec::standard();
    let config_hash = config.hash();

    let folds: Vec<FoldSummary> = outcome
        .folds
        .iter()
        .map(|f| FoldSummary {
            fold: f.result.fold,
            init_checksum: f.result.init_checksum.clone(),
            final_checksum: f.result.final_checksum.clone(),
            n_test: f.result.predictions.len(),
            epochs: f.result.trace.epochs.clone(),
            warnings: f.result.trace.warnings.clone(),
        })
        .collect();
    let report = RunReport {
        config: config.clone(),
        config_hash: config_hash.clone(),
        folds,
        pooled: outcome.pooled.clone(),
        robustness: outcome.robustness.clone(),
        vocabulary: outcome.folds[0].mined.clone(),
    };
    save_versioned(&report, &dir.join("report.json"))?;

    save_split_plan(&outcome.plan, &dir.join("plan.json"))?;

    let mut model_config = config.model;
    model_config.use_symbolic = !config.no_symbolic;
    let mut outputs = vec![
        String::from("report.json"),
        String::from("plan.json"),
        String::from("metrics.md"),
        String::from("f1_table.csv"),
        String::from("token_rank.csv"),
        String::from("token_groups.csv"),
    ];
    for f in &outcome.folds {
        let name = format!("checkpoint_fold{}.json", f.result.fold);
        save_checkpoint(
            &Checkpoint { model_config, state: f.result.state.clone() },
            &dir.join(&name),
        )?;
        outputs.push(name);
    }

    let md = render_metrics_md(&outcome.pooled, outcome.robustness.as_ref());
    atomic_write(&dir.join("metrics.md"), md.as_bytes())?;
    atomic_write(&dir.join("f1_table.csv"), render_f1_csv(&outcome.pooled).as_bytes())?;
    if let Some(rob) = &outcome.robustness {
        atomic_write(&dir.join("drops.csv"), render_drops_csv(rob).as_bytes())?;
        outputs.push(String::from("drops.csv"));
    }
    atomic_write(
        &dir.join("token_rank.csv"),
        render_token_rank_csv(&outcome.folds[0].mined).as_bytes(),
    )?;
    atomic_write(
        &dir.join("token_groups.csv"),
        render_token_groups_csv(corpus, &spec).as_bytes(),
    )?;

    outputs.sort();
    let manifest = Manifest {
        config_hash,
        model_seed: config.model.seed,
        training_seed: config.training.seed,
        split_seed: config.split_seed,
        no_symbolic: config.no_symbolic,
        no_augment: config.no_augment,
        hardcoded_symbols: config.hardcoded_symbols,
        stress: config.stress,
        outputs,
    };
    save_versioned(&manifest, &dir.join("manifest.json"))?;
    Ok(())
}
