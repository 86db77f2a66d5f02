use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use flakesift::config::RunConfig;
use flakesift::error::{AppError, AppResult};
use flakesift::io;
use flakesift::report;
use flakesift::runner;
use flakesift::synth::{generate, SynthSpec};

use flakesift_core::augment::{perturb_for_stress, AugmentationPolicy, PerturbMode};
use flakesift_core::dtm::{mine, MiningParams};
use flakesift_core::splitter::plan_splits;
use flakesift_core::symbolic::{batch_extract, FeatureGroupSpec};
use flakesift_core::{Corpus, TestCase};

#[derive(Parser)]
#[command(name = "flakesift", about = "Neuro-symbolic flaky-test classification", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted-signal corpus.
    Synth(SynthArgs),
    /// Mine the discriminative token vocabulary from a corpus.
    Mine(MineArgs),
    /// Extract the 16-dimensional symbolic features to CSV.
    Features(FeaturesArgs),
    /// Build a stratified project-disjoint split plan.
    Split(SplitArgs),
    /// Apply stress perturbations to every test in a corpus.
    Perturb(PerturbArgs),
    /// Run the full cross-validated experiment and write all reports.
    Run(RunArgs),
    /// Re-render derived artifacts from an existing report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 40)]
    projects: usize,
    #[arg(long, default_value_t = 10)]
    tests_per_project: usize,
    #[arg(long, default_value_t = 0.1)]
    flaky_fraction: f64,
    #[arg(long, default_value_t = 0.8)]
    q_signal: f64,
    #[arg(long, default_value_t = 0.05)]
    q_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    q_var: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 3)]
    min_support: usize,
    #[arg(long, default_value_t = 0.05)]
    p_max: f64,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rename,
    Deadcode,
    Both,
}

impl From<ModeArg> for PerturbMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Rename => PerturbMode::Rename,
            ModeArg::Deadcode => PerturbMode::DeadCode,
            ModeArg::Both => PerturbMode::Both,
        }
    }
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON sidecar recording rename maps and applied transforms.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long)]
    epochs: Option<usize>,
    /// Disable the symbolic channel (ablation).
    #[arg(long)]
    no_symbolic: bool,
    /// Train without adversarial augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Keep the nine fixed indicator groups but drop the mined tokens.
    #[arg(long)]
    hardcoded_symbols: bool,
    /// Skip the stress-perturbation evaluation.
    #[arg(long)]
    no_stress: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Corpus used to regenerate token_groups.csv; skipped when absent.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

fn cmd_synth(args: &SynthArgs) -> AppResult<()> {
    let spec = SynthSpec {
        projects: args.projects,
        tests_per_project: args.tests_per_project,
        flaky_fraction: args.flaky_fraction,
        q_signal: args.q_signal,
        q_noise: args.q_noise,
        q_var: args.q_var,
        seed: args.seed,
    };
    let corpus = generate(&spec)?;
    io::save_corpus(&corpus, &args.out)?;
    println!("wrote {} tests to {}", corpus.len(), args.out.display());
    Ok(())
}

fn cmd_mine(args: &MineArgs) -> AppResult<()> {
    let corpus = io::load_corpus(&args.corpus)?;
    let params = MiningParams {
        top_k: args.top_k,
        min_project_support: args.min_support,
        p_max: args.p_max,
    };
    let vocab = mine(&corpus, &params)?;
    io::save_vocabulary(&vocab, &args.out)?;
    println!("mined {} tokens to {}", vocab.all_tokens().len(), args.out.display());
    Ok(())
}

fn cmd_features(args: &FeaturesArgs) -> AppResult<()> {
    let corpus = io::load_corpus(&args.corpus)?;
    let vocab = io::load_vocabulary(&args.vocab)?;
    let spec = FeatureGroupSpec::standard();
    let rows = batch_extract(&corpus, &vocab, &spec);
    let mut csv = String::from("id,label");
    for g in &spec.groups {
        csv.push_str(&format!(",{}", g.name));
    }
    for c in flakesift_core::FlakinessCategory::ALL {
        csv.push_str(&format!(",mined_{c}"));
    }
    csv.push_str(",mined_distinct\n");
    for (t, v) in corpus.tests().iter().zip(&rows) {
        csv.push_str(&format!("{},{}", t.id, t.label));
        for x in v.as_slice() {
            csv.push_str(&format!(",{x:.6}"));
        }
        csv.push('\n');
    }
    io::atomic_write(&args.out, csv.as_bytes())?;
    println!("wrote {} feature rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_split(args: &SplitArgs) -> AppResult<()> {
    let corpus = io::load_corpus(&args.corpus)?;
    let plan = plan_splits(&corpus, args.k, args.seed)?;
    io::save_split_plan(&plan, &args.out)?;
    println!("wrote {}-fold plan to {}", plan.k, args.out.display());
    Ok(())
}

fn cmd_perturb(args: &PerturbArgs) -> AppResult<()> {
    let corpus = io::load_corpus(&args.corpus)?;
    let mined = mine(&corpus, &MiningParams::default())?;
    let (train_decoys, stress_decoys) = runner::decoy_pools(&mined, &corpus);
    let policy = AugmentationPolicy::new(train_decoys, stress_decoys, args.seed);
    policy.validate()?;
    let mode: PerturbMode = args.mode.into();

    let mut perturbed = Vec::with_capacity(corpus.len());
    let mut sidecar = BTreeMap::new();
    for t in corpus.tests() {
        let p = perturb_for_stress(t, mode, &policy);
        perturbed.push(TestCase {
            id: t.id.clone(),
            project: t.project.clone(),
            source: p.source.clone(),
            label: t.label,
        });
        sidecar.insert(t.id.clone(), p);
    }
    let out = Corpus::new(perturbed)?;
    io::save_corpus(&out, &args.out)?;
    if let Some(path) = &args.sidecar {
        let mode = match args.mode {
            ModeArg::Rename => "rename",
            ModeArg::Deadcode => "deadcode",
            ModeArg::Both => "both",
        };
        io::save_sidecar(
            &io::PerturbSidecar { mode: mode.to_string(), tests: sidecar },
            path,
        )?;
    }
    println!("wrote {} perturbed tests to {}", out.len(), args.out.display());
    Ok(())
}

fn cmd_run(args: &RunArgs) -> AppResult<()> {
    let corpus = io::load_corpus(&args.corpus)?;
    let mut config = RunConfig::desk_default(args.seed);
    config.split_k = args.k;
    if let Some(e) = args.epochs {
        config.training.epochs = e;
    }
    config.no_symbolic = args.no_symbolic;
    config.no_augment = args.no_augment;
    config.hardcoded_symbols = args.hardcoded_symbols;
    config.stress = !args.no_stress;
    let outcome = runner::run_experiment(&corpus, &config)?;
    report::write_reports(&corpus, &outcome, &config, &args.out_dir)?;
    println!(
        "macro F1 {:.2} over {} folds; reports in {}",
        outcome.pooled.macro_f1,
        outcome.folds.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> AppResult<()> {
    let text = std::fs::read_to_string(&args.report)
        .map_err(|e| AppError::user(format!("cannot read {}: {e}", args.report.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| AppError::user(format!("{}: not valid JSON: {e}", args.report.display())))?;
    let run: report::RunReport = serde_json::from_value(doc)
        .map_err(|e| AppError::user(format!("{}: schema mismatch: {e}", args.report.display())))?;

    std::fs::create_dir_all(&args.out_dir)?;
    let md = report::render_metrics_md(&run.pooled, run.robustness.as_ref());
    io::atomic_write(&args.out_dir.join("metrics.md"), md.as_bytes())?;
    io::atomic_write(
        &args.out_dir.join("f1_table.csv"),
        report::render_f1_csv(&run.pooled).as_bytes(),
    )?;
    if let Some(rob) = &run.robustness {
        io::atomic_write(
            &args.out_dir.join("drops.csv"),
            report::render_drops_csv(rob).as_bytes(),
        )?;
    }
    io::atomic_write(
        &args.out_dir.join("token_rank.csv"),
        report::render_token_rank_csv(&run.vocabulary).as_bytes(),
    )?;
    if let Some(path) = &args.corpus {
        let corpus = io::load_corpus(path)?;
        io::atomic_write(
            &args.out_dir.join("token_groups.csv"),
            report::render_token_groups_csv(&corpus, &FeatureGroupSpec::standard()).as_bytes(),
        )?;
    }
    println!("re-rendered reports in {}", args.out_dir.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> AppResult<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Mine(a) => cmd_mine(a),
        Command::Features(a) => cmd_features(a),
        Command::Split(a) => cmd_split(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
