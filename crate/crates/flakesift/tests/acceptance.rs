//! End-to-end acceptance gate. Each criterion prints one pass/fail line;
//! run with `cargo test --test acceptance -- --nocapture` to see them all.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use flakesift::config::RunConfig;
use flakesift::report::write_reports;
use flakesift::runner::{decoy_pools, run_experiment};
use flakesift::synth::{generate, planted_tokens, SynthSpec, FLAKY_CATEGORIES};
use flakesift_core::augment::{
    inject_dead_code, inject_decoy_comments, rename_variables, strip_sentinels,
    AugmentationPolicy, GuardStyle, PerturbMode, RenameScheme, SENTINEL_BEGIN, SENTINEL_END,
};
use flakesift_core::category::FlakinessCategory;
use flakesift_core::corpus::{tokenize, Corpus, TestCase};
use flakesift_core::dtm::{mine, MiningParams};
use flakesift_core::eval::{f1_scores, robustness_drops, ClassMetrics, ConfusionMatrix, MetricsReport};
use flakesift_core::loss::{
    binary_focal_grad, binary_focal_from_logits, ens_weights, focal_loss,
    weighted_categorical_ce, weighted_categorical_ce_grad, ClassWeights, FocalParams,
};
use flakesift_core::rng::rng_from_seed;
use flakesift_core::splitter::plan_splits;
use flakesift_core::stats::{chi_square, p_value_chi2_1dof, ContingencyTable};
use rand::Rng;

fn check(name: &str, ok: bool, detail: &str) {
    if ok {
        println!("{name}: pass");
    } else {
        println!("{name}: FAIL ({detail})");
    }
    assert!(ok, "{name}: {detail}");
}

#[test]
fn a01_chi_square_oracle() {
    let start = Instant::now();
    let mut rng = rng_from_seed(11);
    let mut checked = 0usize;
    let mut max_err: f64 = 0.0;
    while checked < 1000 {
        let t = ContingencyTable {
            o11: rng.gen_range(0..200),
            o12: rng.gen_range(0..200),
            o21: rng.gen_range(0..200),
            o22: rng.gen_range(0..200),
        };
        if t.is_degenerate() {
            continue;
        }
        let got = chi_square(&t).unwrap();
        let (a, b, c, d) = (t.o11 as f64, t.o12 as f64, t.o21 as f64, t.o22 as f64);
        let n = a + b + c + d;
        let closed = n * (a * d - b * c) * (a * d - b * c)
            / ((a + b) * (c + d) * (a + c) * (b + d));
        max_err = max_err.max((got.chi2 - closed).abs());
        checked += 1;
    }
    let fixture = chi_square(&ContingencyTable { o11: 15, o12: 5, o21: 5, o22: 75 }).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    check(
        "A1 chi-square closed-form agreement",
        max_err < 1e-9 && (fixture.chi2 - 47.265625).abs() < 1e-9 && elapsed < 1.0,
        &format!("max_err {max_err:e}, fixture {}, {elapsed:.3}s", fixture.chi2),
    );
}

#[test]
fn a02_p_value_calibration() {
    let p_crit = p_value_chi2_1dof(3.841459).unwrap();
    let p_zero = p_value_chi2_1dof(0.0).unwrap();
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for i in 0..100 {
        let p = p_value_chi2_1dof(i as f64 * 0.2).unwrap();
        if p > prev {
            monotone = false;
        }
        prev = p;
    }
    check(
        "A2 p-value calibration",
        (p_crit - 0.05).abs() < 1e-3 && p_zero == 1.0 && monotone,
        &format!("p(3.841459)={p_crit}, p(0)={p_zero}, monotone={monotone}"),
    );
}

#[test]
fn a03_ens_weights() {
    use FlakinessCategory::*;
    let counts =
        |n: usize| -> BTreeMap<FlakinessCategory, usize> { [(Time, n)].into_iter().collect() };
    let w1 = ens_weights(&counts(1), 0.9999).unwrap().get(Time).unwrap();
    // The published fixture rounds to 0.027078; frozen full-precision oracle.
    let w37 = ens_weights(&counts(37), 0.9999).unwrap().get(Time).unwrap();
    let w8294 = ens_weights(&counts(8294), 0.9999).unwrap().get(Time).unwrap();
    let w_beta0 = ens_weights(&counts(500), 1e-12).unwrap().get(Time).unwrap();
    let w_beta1 = ens_weights(&counts(500), 1.0 - 1e-9).unwrap().get(Time).unwrap();
    check(
        "A3 effective-number class weights",
        w1 == 1.0
            && (w37 - 0.02707570648801996).abs() < 1e-6
            && (w8294 - 1.773970914249936e-4).abs() < 1e-8
            && (w_beta0 - 1.0).abs() < 1e-4
            && (w_beta1 - 1.0 / 500.0).abs() < 1e-4,
        &format!("w1={w1}, w37={w37}, w8294={w8294}, b->0 {w_beta0}, b->1 {w_beta1}"),
    );
}

#[test]
fn a04_focal_loss_and_gradients() {
    let params = FocalParams::default();
    let fl1 = focal_loss(1.0, &params).unwrap();
    let fl05 = focal_loss(0.5, &params).unwrap();
    let fl01 = focal_loss(0.1, &params).unwrap();
    let values_ok = fl1 == 0.0
        && (fl05 - 0.04332169878499658).abs() < 1e-9
        && (fl01 - 0.46627348133129426).abs() < 1e-6;

    let weights = ClassWeights::uniform();
    let mut rng = rng_from_seed(42);
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for _ in 0..100 {
        let bin: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let true_class = rng.gen_range(0..2usize);
        let grad = binary_focal_grad(&bin, true_class, &params).unwrap();
        for j in 0..2 {
            let mut hi = bin;
            let mut lo = bin;
            hi[j] += h;
            lo[j] -= h;
            let num = (binary_focal_from_logits(&hi, true_class, &params).unwrap()
                - binary_focal_from_logits(&lo, true_class, &params).unwrap())
                / (2.0 * h);
            let denom = num.abs().max(grad[j].abs()).max(1e-8);
            max_rel = max_rel.max((grad[j] - num).abs() / denom);
        }

        let mut cat = [0.0f64; 6];
        for c in &mut cat {
            *c = rng.gen_range(-3.0..3.0);
        }
        let label = FlakinessCategory::ALL[rng.gen_range(0..6)];
        let grad = weighted_categorical_ce_grad(&cat, label, &weights).unwrap();
        for j in 0..6 {
            let mut hi = cat;
            let mut lo = cat;
            hi[j] += h;
            lo[j] -= h;
            let num = (weighted_categorical_ce(&hi, label, &weights).unwrap()
                - weighted_categorical_ce(&lo, label, &weights).unwrap())
                / (2.0 * h);
            let denom = num.abs().max(grad[j].abs()).max(1e-8);
            max_rel = max_rel.max((grad[j] - num).abs() / denom);
        }
    }
    check(
        "A4 focal loss values and analytic gradients",
        values_ok && max_rel <= 1e-5,
        &format!("fl(0.5)={fl05}, fl(0.1)={fl01}, max grad rel err {max_rel:e}"),
    );
}

#[test]
fn a05_split_safety() {
    let start = Instant::now();
    let mut rng = rng_from_seed(5);
    let mut ok = true;
    let mut detail = String::new();
    for round in 0..200 {
        let n_projects = rng.gen_range(4..12usize);
        let mut tests = Vec::new();
        for p in 0..n_projects {
            for t in 0..rng.gen_range(1..6usize) {
                let label = FlakinessCategory::ALL[rng.gen_range(0..6)];
                tests.push(TestCase {
                    id: format!("r{round}_p{p}_t{t}"),
                    project: format!("p{p}"),
                    source: String::from("void a() { b(); }"),
                    label,
                });
            }
        }
        let corpus = Corpus::new(tests).unwrap();
        let k = rng.gen_range(2..=n_projects.min(4));
        let plan = plan_splits(&corpus, k, round as u64).unwrap();

        let mut seen_ids: BTreeSet<&String> = BTreeSet::new();
        for fold in &plan.folds {
            let train_projects: BTreeSet<&str> = fold
                .train
                .iter()
                .map(|id| {
                    corpus.tests().iter().find(|t| &t.id == id).unwrap().project.as_str()
                })
                .collect();
            for id in &fold.test {
                let proj = &corpus.tests().iter().find(|t| &t.id == id).unwrap().project;
                if train_projects.contains(proj.as_str()) {
                    ok = false;
                    detail = format!("round {round}: project {proj} leaks across the split");
                }
                if !seen_ids.insert(id) {
                    ok = false;
                    detail = format!("round {round}: {id} in two test folds");
                }
            }
        }
        if seen_ids.len() != corpus.len() {
            ok = false;
            detail = format!("round {round}: test folds do not cover the corpus");
        }

        // Stratification: per priority category, fold project counts differ
        // by at most one.
        let labels = flakesift_core::splitter::label_projects(&corpus).unwrap();
        let mut per_cat: BTreeMap<FlakinessCategory, Vec<usize>> = BTreeMap::new();
        for l in &labels {
            let fold = plan.assignment[&l.project];
            per_cat.entry(l.priority_category).or_insert_with(|| vec![0; k])[fold] += 1;
        }
        for (c, counts) in &per_cat {
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            if max - min > 1 {
                ok = false;
                detail = format!("round {round}: category {c} folds {counts:?}");
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        "A5 split safety over 200 randomized corpora",
        ok && elapsed < 10.0,
        &format!("{detail} ({elapsed:.2}s)"),
    );
}

#[test]
fn a06_augmentation_round_trip() {
    let mut rng = rng_from_seed(6);
    let nouns = ["delay", "latch", "cursor", "budget", "retries", "probe", "buffer", "handle"];
    let calls = ["service.invoke", "helper.run", "client.fetch", "store.flush"];
    let decoys: Vec<String> =
        ["thread.sleep", "countdownlatch", "nanotime"].iter().map(|s| s.to_string()).collect();
    let mut ok = true;
    let mut detail = String::new();
    for i in 0..1000 {
        let mut body = String::new();
        let n_vars = rng.gen_range(0..4usize);
        for v in 0..n_vars {
            let noun = nouns[rng.gen_range(0..nouns.len())];
            body.push_str(&format!("int {noun}{v} = {}; use({noun}{v}); ", rng.gen_range(0..9)));
        }
        for _ in 0..rng.gen_range(1..4usize) {
            body.push_str(&format!("{}({});", calls[rng.gen_range(0..calls.len())], i % 7));
        }
        let src = format!("@Test public void t{i}() {{ {body} }}");

        let style = [GuardStyle::IfFalse, GuardStyle::WhileFalse, GuardStyle::CatchNeverThrown]
            [rng.gen_range(0..3)];
        let seed = rng.gen::<u64>();
        let guarded_only = inject_dead_code(&src, style, &decoys, seed).unwrap();
        let mut injected = guarded_only.clone();
        if rng.gen::<bool>() {
            injected = inject_decoy_comments(&injected, &decoys, seed);
        }
        if strip_sentinels(&injected) != src {
            ok = false;
            detail = format!("fixture {i}: strip(augment(x)) != x");
        }
        if tokenize(&strip_sentinels(&injected)).tokens != tokenize(&src).tokens {
            ok = false;
            detail = format!("fixture {i}: token stream not restored");
        }
        // Every injected executable statement sits inside the sentinel
        // region, inside a false guard. Checked on the dead-code injection
        // alone: decoy comments are inert and carry no guard.
        let begin = guarded_only.find(SENTINEL_BEGIN).unwrap();
        let end = guarded_only.find(SENTINEL_END).unwrap();
        let region = &guarded_only[begin..end];
        let guarded = region.contains("if (false) {")
            || region.contains("while (false) {")
            || region.contains("catch (ArithmeticException");
        if !guarded {
            ok = false;
            detail = format!("fixture {i}: injected block not false-guarded");
        }

        let (renamed, map) = rename_variables(&src, RenameScheme::VarK, seed);
        let values: BTreeSet<&String> = map.values().collect();
        if values.len() != map.len() {
            ok = false;
            detail = format!("fixture {i}: rename map not injective");
        }
        let renamed_distinct = tokenize(&renamed).distinct().into_iter()
            .map(str::to_string)
            .collect::<BTreeSet<_>>();
        for old in map.keys() {
            if renamed_distinct.contains(&old.to_lowercase()) {
                ok = false;
                detail = format!("fixture {i}: stale occurrence of {old}");
            }
        }
    }

    // Training and stress pools from the standard pipeline are disjoint.
    let corpus = generate(&SynthSpec::default()).unwrap();
    let mined = mine(&corpus, &MiningParams::default()).unwrap();
    let (train_pool, stress_pool) = decoy_pools(&mined, &corpus);
    let policy = AugmentationPolicy::new(train_pool, stress_pool, 1);
    if policy.validate().is_err() {
        ok = false;
        detail = String::from("train/stress pools not disjoint");
    }
    check("A6 augmentation round-trip on 1000 fixtures", ok, &detail);
}

/// Epoch budget used for the planted-corpus experiments (A7/A8).
const PLANTED_EPOCHS: usize = 10;

fn planted_config(seed: u64, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::desk_default(seed);
    cfg.training.epochs = epochs;
    cfg
}

#[test]
fn a07_planted_signal_effectiveness() {
    let start = Instant::now();
    let mut recovery = 0.0;
    let mut full_f1 = 0.0;
    let mut ablated_f1 = 0.0;
    let seeds = [1u64, 2, 3, 4, 5];
    for &seed in &seeds {
        let corpus = generate(&SynthSpec { seed, ..SynthSpec::default() }).unwrap();

        let mined = mine(&corpus, &MiningParams::default()).unwrap();
        let mut found = 0usize;
        let mut total = 0usize;
        for c in FLAKY_CATEGORIES {
            let top: BTreeSet<&str> =
                mined.entries(c).iter().take(10).map(|e| e.token.as_str()).collect();
            for tok in planted_tokens(c) {
                total += 1;
                if top.contains(tok) {
                    found += 1;
                }
            }
        }
        recovery += found as f64 / total as f64;

        let mut cfg = planted_config(seed, PLANTED_EPOCHS);
        cfg.stress = false;
        let full = run_experiment(&corpus, &cfg).unwrap();
        full_f1 += full.pooled.macro_f1;

        let mut ablated_cfg = cfg.clone();
        ablated_cfg.no_symbolic = true;
        let ablated = run_experiment(&corpus, &ablated_cfg).unwrap();
        ablated_f1 += ablated.pooled.macro_f1;
    }
    let n = seeds.len() as f64;
    recovery /= n;
    full_f1 /= n;
    ablated_f1 /= n;
    let elapsed = start.elapsed().as_secs_f64();
    check(
        "A7 planted-signal effectiveness",
        recovery >= 0.9 && full_f1 >= 80.0 && full_f1 - ablated_f1 >= 5.0 && elapsed < 600.0,
        &format!(
            "recovery {recovery:.3}, full {full_f1:.2}, no-symbolic {ablated_f1:.2}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn a08_augmentation_robustness_direction() {
    let corpus = generate(&SynthSpec::default()).unwrap();
    let mut aug_drop = 0.0;
    let mut plain_drop = 0.0;
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let cfg = planted_config(seed, PLANTED_EPOCHS);
        let aug = run_experiment(&corpus, &cfg).unwrap();
        aug_drop += aug.robustness.unwrap().drops[&PerturbMode::Both].average;

        let mut plain_cfg = cfg.clone();
        plain_cfg.no_augment = true;
        let plain = run_experiment(&corpus, &plain_cfg).unwrap();
        plain_drop += plain.robustness.unwrap().drops[&PerturbMode::Both].average;
    }
    aug_drop /= seeds.len() as f64;
    plain_drop /= seeds.len() as f64;
    check(
        "A8 augmentation halves the unseen-perturbation drop",
        aug_drop <= 0.5 * plain_drop,
        &format!("augmented {aug_drop:.2} vs non-augmented {plain_drop:.2}"),
    );
}

#[test]
fn a09_fresh_reload_and_leakage_canary() {
    let corpus =
        generate(&SynthSpec { projects: 20, tests_per_project: 5, ..SynthSpec::default() })
            .unwrap();
    let mut cfg = RunConfig::desk_default(9);
    cfg.training.epochs = 2;
    cfg.model.d_neural = 16;
    cfg.model.vocab_cap = 256;
    cfg.model.max_seq = 48;
    cfg.stress = false;
    let base = run_experiment(&corpus, &cfg).unwrap();
    let init_equal = base
        .folds
        .iter()
        .all(|f| f.result.init_checksum == base.folds[0].result.init_checksum);

    // Canary: perturb one test's source. The fold holding it in the TEST
    // set trains on identical data, so its checkpoint must not move.
    let canary = &corpus.tests()[0];
    let canary_fold = base.plan.assignment[&canary.project];
    let mut tests = corpus.tests().to_vec();
    // Inserted at the front so it lands inside the truncation window.
    tests[0].source =
        tests[0].source.replacen('{', "{ int canaryProbe = 1; consume(canaryProbe);", 1);
    let poisoned = Corpus::new(tests).unwrap();
    let rerun = run_experiment(&poisoned, &cfg).unwrap();
    let canary_stable = rerun.folds[canary_fold].result.final_checksum
        == base.folds[canary_fold].result.final_checksum;
    let other_moves = rerun
        .folds
        .iter()
        .zip(&base.folds)
        .enumerate()
        .filter(|(i, _)| *i != canary_fold)
        .any(|(_, (a, b))| a.result.final_checksum != b.result.final_checksum);
    check(
        "A9 fresh reload and leakage canary",
        init_equal && canary_stable && other_moves,
        &format!("init_equal={init_equal}, canary_stable={canary_stable}, other_moves={other_moves}"),
    );
}

fn report_from_f1(rows: &[(FlakinessCategory, f64)]) -> MetricsReport {
    let per_class = rows
        .iter()
        .map(|&(c, f1)| (c, ClassMetrics { precision: f1, recall: f1, f1, support: 1 }))
        .collect();
    MetricsReport {
        per_class,
        macro_f1: rows.iter().map(|&(_, f)| f).sum::<f64>() / 6.0,
        confusion: ConfusionMatrix { counts: [[0; 6]; 6] },
    }
}

#[test]
fn a10_metric_fixtures() {
    use FlakinessCategory::*;
    let mut rng = rng_from_seed(10);
    let mut exact = true;
    for _ in 0..1000 {
        let n = rng.gen_range(1..30usize);
        let labels: Vec<FlakinessCategory> =
            (0..n).map(|_| FlakinessCategory::ALL[rng.gen_range(0..6)]).collect();
        let preds: Vec<FlakinessCategory> =
            (0..n).map(|_| FlakinessCategory::ALL[rng.gen_range(0..6)]).collect();
        let report = f1_scores(&preds, &labels).unwrap();
        for c in FlakinessCategory::ALL {
            let tp = labels.iter().zip(&preds).filter(|(&a, &p)| a == c && p == c).count() as f64;
            let fp = labels.iter().zip(&preds).filter(|(&a, &p)| a != c && p == c).count() as f64;
            let fn_ = labels.iter().zip(&preds).filter(|(&a, &p)| a == c && p != c).count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            if report.f1(c) != f1 * 100.0 {
                exact = false;
            }
        }
    }

    // Published robustness table, Section A: per-class F1 under each
    // perturbation. Four of the printed drop cells disagree with their own
    // F1 columns (a sign flip and three rounding slips); the drops below
    // are the values implied by the F1 columns.
    let clean = report_from_f1(&[
        (AsyncWait, 60.11),
        (Concurrency, 29.09),
        (Time, 66.67),
        (UnorderedCollections, 65.82),
        (OrderDependency, 67.39),
        (NonFlaky, 99.97),
    ]);
    let rename = report_from_f1(&[
        (AsyncWait, 58.62),
        (Concurrency, 31.58),
        (Time, 61.30),
        (UnorderedCollections, 56.10),
        (OrderDependency, 55.51),
        (NonFlaky, 99.96),
    ]);
    let deadcode = report_from_f1(&[
        (AsyncWait, 57.78),
        (Concurrency, 32.14),
        (Time, 54.85),
        (UnorderedCollections, 51.28),
        (OrderDependency, 59.54),
        (NonFlaky, 99.92),
    ]);
    let both = report_from_f1(&[
        (AsyncWait, 55.87),
        (Concurrency, 30.99),
        (Time, 51.72),
        (UnorderedCollections, 48.48),
        (OrderDependency, 53.41),
        (NonFlaky, 99.90),
    ]);
    let perturbed: BTreeMap<PerturbMode, MetricsReport> = [
        (PerturbMode::Rename, rename),
        (PerturbMode::DeadCode, deadcode),
        (PerturbMode::Both, both),
    ]
    .into_iter()
    .collect();
    let modes = PerturbMode::all();
    let rob = robustness_drops(&clean, &perturbed, &modes).unwrap();

    let expected: [(PerturbMode, [(FlakinessCategory, f64); 6]); 3] = [
        (
            PerturbMode::Rename,
            [
                (AsyncWait, 1.49),
                (Concurrency, -2.49),
                (Time, 5.37),
                (UnorderedCollections, 9.72),
                (OrderDependency, 11.88),
                (NonFlaky, 0.01),
            ],
        ),
        (
            PerturbMode::DeadCode,
            [
                (AsyncWait, 2.33),
                (Concurrency, -3.05),
                (Time, 11.82),
                (UnorderedCollections, 14.54),
                (OrderDependency, 7.85),
                (NonFlaky, 0.05),
            ],
        ),
        (
            PerturbMode::Both,
            [
                (AsyncWait, 4.24),
                (Concurrency, -1.90),
                (Time, 14.95),
                (UnorderedCollections, 17.34),
                (OrderDependency, 13.98),
                (NonFlaky, 0.07),
            ],
        ),
    ];
    let mut table_ok = true;
    let mut detail = String::new();
    for (mode, rows) in expected {
        let drops = &rob.drops[&mode];
        for (c, want) in rows {
            let got = drops.per_class[&c];
            if (got - want).abs() > 1e-9 {
                table_ok = false;
                detail = format!("{mode} {c}: got {got}, want {want}");
            }
            let arithmetic = clean.f1(c) - perturbed[&mode].f1(c);
            if got != arithmetic {
                table_ok = false;
                detail = format!("{mode} {c}: drop is not clean - perturbed");
            }
        }
    }
    check(
        "A10 metric fixtures and published drop arithmetic",
        exact && table_ok,
        &detail,
    );
}

#[test]
fn a11_determinism() {
    let corpus =
        generate(&SynthSpec { projects: 20, tests_per_project: 5, ..SynthSpec::default() })
            .unwrap();
    let mut cfg = RunConfig::desk_default(11);
    cfg.training.epochs = 2;
    cfg.model.d_neural = 16;
    cfg.model.vocab_cap = 256;
    cfg.model.max_seq = 48;

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        let outcome = run_experiment(&corpus, &cfg).unwrap();
        write_reports(&corpus, &outcome, &cfg, dir).unwrap();
    }
    let mut ok = true;
    let mut detail = String::new();
    let mut names: Vec<String> = vec![String::from("report.json")];
    for entry in std::fs::read_dir(dir_a.path()).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.starts_with("checkpoint_fold") {
            names.push(name);
        }
    }
    for name in &names {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        if a != b {
            ok = false;
            detail = format!("{name} differs between identical runs");
        }
    }
    check("A11 byte-identical reruns", ok && names.len() > 1, &detail);
}
