//! Synthetic planted-signal corpus generator.
//!
//! Each flaky category plants four API-level tokens (several of which hit
//! the fixed indicator groups) plus one semantic local-variable name. The
//! API tokens sit in call position, so identifier renaming cannot remove
//! them; the variable names are declared locals, so renaming destroys
//! them. That split is what makes the robustness experiments decidable.

use flakesift_core::category::FlakinessCategory;
use flakesift_core::corpus::{Corpus, TestCase};
use flakesift_core::rng::{derive_rng, uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub projects: usize,
    pub tests_per_project: usize,
    /// Fraction of all tests that are flaky, split evenly over the five
    /// flaky categories.
    pub flaky_fraction: f64,
    /// Probability that a flaky test embeds each of its category's planted
    /// tokens (at least one is always embedded).
    pub q_signal: f64,
    /// Probability that a non-flaky test embeds one random planted token.
    pub q_noise: f64,
    /// Probability that each semantic variable is declared.
    pub q_var: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            projects: 40,
            tests_per_project: 10,
            flaky_fraction: 0.1,
            q_signal: 0.8,
            q_noise: 0.05,
            q_var: 1.0,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> AppResult<()> {
        if self.projects == 0 || self.tests_per_project == 0 {
            return Err(AppError::user("projects and tests_per_project must be >= 1"));
        }
        for (name, p) in [
            ("flaky_fraction", self.flaky_fraction),
            ("q_signal", self.q_signal),
            ("q_noise", self.q_noise),
            ("q_var", self.q_var),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AppError::user(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

pub const FLAKY_CATEGORIES: [FlakinessCategory; 5] = [
    FlakinessCategory::AsyncWait,
    FlakinessCategory::Concurrency,
    FlakinessCategory::Time,
    FlakinessCategory::UnorderedCollections,
    FlakinessCategory::OrderDependency,
];

/// The four planted API tokens per flaky category, as they appear to the
/// mining tokenizer.
pub fn planted_tokens(c: FlakinessCategory) -> &'static [&'static str] {
    match c {
        FlakinessCategory::AsyncWait => &["thread.sleep", "await", "futurejoin", "pollinterval"],
        FlakinessCategory::Concurrency => {
            &["countdownlatch", "executorservice", "cyclicbarrier", "atomiccounter"]
        }
        FlakinessCategory::Time => &["nanotime", "currenttimemillis", "stopwatch", "clockskew"],
        FlakinessCategory::UnorderedCollections => &["hashmap", "iterator", "keyset", "jsonobject"],
        FlakinessCategory::OrderDependency => {
            &["staticregistry", "sharedfixture", "globalstate", "ordercache"]
        }
        FlakinessCategory::NonFlaky => {
            &["validateinput", "checkinvariant", "auditlog", "recordmetric"]
        }
    }
}

/// Declared-local variable names per category: learnable shortcuts that
/// identifier renaming destroys. Two per category so the decoy-pool split
/// can hold one back for stress while training augmentation spoofs the
/// other.
fn semantic_variables(c: FlakinessCategory) -> [&'static str; 2] {
    match c {
        FlakinessCategory::AsyncWait => ["asyncDelay", "pollBudget"],
        FlakinessCategory::Concurrency => ["latchCount", "barrierParties"],
        FlakinessCategory::Time => ["elapsedMillis", "clockDrift"],
        FlakinessCategory::UnorderedCollections => ["mapOrdering", "keyShuffle"],
        FlakinessCategory::OrderDependency => ["sharedState", "fixtureLeak"],
        FlakinessCategory::NonFlaky => ["plainValue", "localTally"],
    }
}

fn planted_statement(token: &str) -> String {
    if token == "thread.sleep" {
        String::from("Thread.sleep(50);")
    } else if token.contains('.') {
        format!("{token}(10);")
    } else {
        format!("{token}();")
    }
}

const FILLERS: [&str; 12] = [
    "helperInvoke", "buildConfig", "loadInput", "computeResult", "verifyOutput", "setupService",
    "prepareData", "readRecord", "writeRecord", "checkStatus", "resolveName", "formatEntry",
];

fn filler_statements(rng: &mut flakesift_core::rng::SeededRng, project: usize) -> Vec<String> {
    let n = rng.gen_range(4..=8usize);
    let mut out = Vec::with_capacity(n + 1);
    for _ in 0..n {
        let f = FILLERS[rng.gen_range(0..FILLERS.len())];
        out.push(format!("{f}();"));
    }
    out.push(format!("projutil{project}();"));
    out
}

fn render_test(name: &str, body: &[String]) -> String {
    let mut s = format!("@Test public void {name}() {{\n");
    for stmt in body {
        s.push_str("    ");
        s.push_str(stmt);
        s.push('\n');
    }
    s.push('}');
    s
}

/// Generate the corpus. Deterministic in `spec.seed`; independent of any
/// iteration order.
pub fn generate(spec: &SynthSpec) -> AppResult<Corpus> {
    spec.validate()?;
    let total = spec.projects * spec.tests_per_project;
    let n_flaky_total = ((total as f64) * spec.flaky_fraction).round() as usize;
    let per_cat = n_flaky_total / FLAKY_CATEGORIES.len();

    // flaky slot f: category f % 5, instance j = f / 5, hosted by project
    // (c + 5j) mod P. With 40 projects and 40 flaky tests this gives each
    // project exactly one flaky test and spreads each category over eight
    // projects.
    let mut flaky_of_project: Vec<Vec<FlakinessCategory>> = vec![Vec::new(); spec.projects];
    for f in 0..per_cat * FLAKY_CATEGORIES.len() {
        let c = FLAKY_CATEGORIES[f % FLAKY_CATEGORIES.len()];
        let j = f / FLAKY_CATEGORIES.len();
        let p = (f % FLAKY_CATEGORIES.len() + 5 * j) % spec.projects;
        flaky_of_project[p].push(c);
    }

    let all_planted: Vec<&'static str> =
        FLAKY_CATEGORIES.iter().flat_map(|&c| planted_tokens(c).iter().copied()).collect();

    let mut tests = Vec::with_capacity(total);
    for p in 0..spec.projects {
        for t in 0..spec.tests_per_project {
            let id = format!("p{p:02}_t{t:02}");
            let label = if t < flaky_of_project[p].len() {
                flaky_of_project[p][t]
            } else {
                FlakinessCategory::NonFlaky
            };
            let mut rng = derive_rng(spec.seed, &format!("synth/{id}"));
            let mut body = Vec::new();
            for var in semantic_variables(label) {
                if uniform(&mut rng) < spec.q_var {
                    body.push(format!("int {var} = {};", t + 1));
                    body.push(format!("consume({var});"));
                }
            }
            body.extend(filler_statements(&mut rng, p));
            if label != FlakinessCategory::NonFlaky {
                let mut any = false;
                for tok in planted_tokens(label) {
                    if uniform(&mut rng) < spec.q_signal {
                        body.push(planted_statement(tok));
                        any = true;
                    }
                }
                if !any {
                    body.push(planted_statement(planted_tokens(label)[0]));
                }
            } else {
                let nf = planted_tokens(FlakinessCategory::NonFlaky);
                body.push(planted_statement(nf[rng.gen_range(0..nf.len())]));
                if uniform(&mut rng) < spec.q_noise {
                    let tok = all_planted[rng.gen_range(0..all_planted.len())];
                    body.push(planted_statement(tok));
                }
            }
            body.push("assertEquals(expected, actual);".into());
            tests.push(TestCase {
                id: id.clone(),
                project: format!("proj{p:02}"),
                source: render_test(&format!("test_{id}"), &body),
                label,
            });
        }
    }
    Ok(Corpus::new(tests)?)
}
