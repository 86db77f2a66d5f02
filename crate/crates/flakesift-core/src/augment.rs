//! Adversarial augmentation (training side) and the disjoint unseen
//! perturbation generator (stress side).
//!
//! All injected text is wrapped in `/*AUG-BEGIN*/ ... /*AUG-END*/` sentinel
//! comments so [`strip_sentinels`] restores the original source byte for
//! byte; that round trip is the mechanical semantics-preservation check.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::category::FlakinessCategory;
use crate::corpus::TestCase;
use crate::error::{CoreError, CoreResult};
use crate::lexer::{self, CodeTokenKind, RegionKind};
use crate::rng::{derive_rng, SeededRng};

pub const SENTINEL_BEGIN: &str = "/*AUG-BEGIN*/";
pub const SENTINEL_END: &str = "/*AUG-END*/";

/// Unreachable-guard template wrapped around injected dead code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardStyle {
    IfFalse,
    CatchNeverThrown,
    WhileFalse,
}

/// Identifier scheme for renaming: VAR_k in training, underscore-style at
/// stress time, so the stress names are never seen in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenameScheme {
    VarK,
    Underscore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Rename,
    DeadCode,
    DecoyComments,
}

/// Stress perturbation mode (Table-4 columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    Rename,
    DeadCode,
    Both,
}

/// Probabilities, guard templates, and decoy pools for both sides.
///
/// The training and stress guard styles and decoy pools must be disjoint;
/// that disjointness is what makes the stress perturbations "unseen".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub p_base: f64,
    pub p_rare: f64,
    pub train_guard_styles: Vec<GuardStyle>,
    pub stress_guard_styles: Vec<GuardStyle>,
    pub train_decoys: Vec<String>,
    pub stress_decoys: Vec<String>,
    pub seed: u64,
}

impl AugmentationPolicy {
    /// Default guards and probabilities; decoy pools come from the caller
    /// (typically split halves of the mined vocabulary).
    pub fn new(train_decoys: Vec<String>, stress_decoys: Vec<String>, seed: u64) -> Self {
        AugmentationPolicy {
            p_base: 0.5,
            p_rare: 0.95,
            train_guard_styles: alloc::vec![GuardStyle::IfFalse, GuardStyle::CatchNeverThrown],
            stress_guard_styles: alloc::vec![GuardStyle::WhileFalse],
            train_decoys,
            stress_decoys,
            seed,
        }
    }

    pub fn validate(&self) -> CoreResult<()> {
        for p in [self.p_base, self.p_rare] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::InvalidArgument("probability outside [0, 1]".into()));
            }
        }
        let tg: BTreeSet<GuardStyle> = self.train_guard_styles.iter().copied().collect();
        let sg: BTreeSet<GuardStyle> = self.stress_guard_styles.iter().copied().collect();
        if !tg.is_disjoint(&sg) {
            return Err(CoreError::InvalidArgument("train and stress guard styles overlap".into()));
        }
        let td: BTreeSet<&str> = self.train_decoys.iter().map(|s| s.as_str()).collect();
        let sd: BTreeSet<&str> = self.stress_decoys.iter().map(|s| s.as_str()).collect();
        if !td.is_disjoint(&sd) {
            return Err(CoreError::InvalidArgument("train and stress decoy pools overlap".into()));
        }
        if self.train_guard_styles.is_empty() || self.stress_guard_styles.is_empty() {
            return Err(CoreError::InvalidArgument("guard style sets must be non-empty".into()));
        }
        Ok(())
    }
}

/// A stress-perturbed test plus the provenance of its transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedTest {
    pub original_id: String,
    pub source: String,
    pub label: FlakinessCategory,
    pub applied_transforms: Vec<TransformKind>,
    pub rename_map: BTreeMap<String, String>,
}

fn is_ident(tok: &lexer::CodeToken) -> bool {
    tok.kind == CodeTokenKind::Ident
}

fn punct_of(tok: Option<&lexer::CodeToken>) -> Option<char> {
    match tok {
        Some(t) => match t.kind {
            CodeTokenKind::Punct(c) => Some(c),
            _ => None,
        },
        None => None,
    }
}

/// Lexically rename declared local variables.
///
/// Declarations are recognized as `Type name =`, `Type name;`, catch and
/// method parameters (`Type name)` / `Type name,`), for-each heads
/// (`Type name :`), and lambda parameters (`name ->`). Exempt everywhere:
/// reserved words, identifiers after a `.`, identifiers directly before
/// `(`, and anything inside comments or string literals. The map is
/// injective and applied at every standalone occurrence.
pub fn rename_variables(
    source: &str,
    scheme: RenameScheme,
    seed: u64,
) -> (String, BTreeMap<String, String>) {
    let tokens = lexer::lex_code_tokens(source);
    let existing: BTreeSet<&str> =
        tokens.iter().filter(|t| is_ident(t)).map(|t| t.text(source)).collect();

    let mut rng = derive_rng(seed, "rename");
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    let mut next_k = 0usize;
    let mut fresh_name = |rng: &mut SeededRng, existing: &BTreeSet<&str>| loop {
        let name = match scheme {
            RenameScheme::VarK => format!("VAR_{next_k}"),
            RenameScheme::Underscore => {
                if rng.gen::<bool>() {
                    format!("_t{}", next_k + 1)
                } else {
                    format!("_val{}", (b'A' + (next_k % 26) as u8) as char)
                }
            }
        };
        next_k += 1;
        if !existing.contains(name.as_str()) {
            return name;
        }
    };

    for (j, tok) in tokens.iter().enumerate() {
        if !is_ident(tok) {
            continue;
        }
        let text = tok.text(source);
        if lexer::is_reserved(&text.to_ascii_lowercase()) || map.contains_key(text) {
            continue;
        }
        let prev = if j > 0 { tokens.get(j - 1) } else { None };
        let next = tokens.get(j + 1);
        let after_next = tokens.get(j + 2);

        // Lambda parameter: `name ->`, not after a dot.
        let lambda = punct_of(next) == Some('-')
            && punct_of(after_next) == Some('>')
            && matches!(punct_of(prev), None | Some('(') | Some(',') | Some('{') | Some(';'));
        // `Type name`: previous token is a plausible type tail.
        let typed_prev = match prev {
            Some(p) if is_ident(p) => {
                let w = p.text(source).to_ascii_lowercase();
                !lexer::is_reserved(&w) || lexer::is_primitive_type(&w)
            }
            Some(p) => p.kind == CodeTokenKind::Punct(']') || p.kind == CodeTokenKind::Punct('>'),
            None => false,
        };
        // `a > b)` is lexically identical to a generic parameter, so a `>`
        // tail is only trusted when an initializer follows.
        let generic_prev = punct_of(prev) == Some('>');
        let decl = lambda
            || (typed_prev
                && match punct_of(next) {
                    Some('=') => punct_of(after_next) != Some('='),
                    Some(';') | Some(':') => !generic_prev,
                    Some(')') | Some(',') => !generic_prev,
                    _ => false,
                });
        if decl {
            let name = fresh_name(&mut rng, &existing);
            map.insert(String::from(text), name);
        }
    }

    if map.is_empty() {
        return (String::from(source), map);
    }

    // Splice replacements at standalone occurrences.
    let mut out = String::with_capacity(source.len());
    let mut cursor = 0usize;
    for (j, tok) in tokens.iter().enumerate() {
        if !is_ident(tok) {
            continue;
        }
        let text = tok.text(source);
        let Some(new_name) = map.get(text) else { continue };
        let prev = if j > 0 { tokens.get(j - 1) } else { None };
        let next = tokens.get(j + 1);
        if punct_of(prev) == Some('.') || punct_of(next) == Some('(') {
            continue;
        }
        out.push_str(&source[cursor..tok.start]);
        out.push_str(new_name);
        cursor = tok.end;
    }
    out.push_str(&source[cursor..]);
    (out, map)
}

/// Byte offset just past the first `{` appearing in a code region.
fn body_insertion_point(source: &str) -> Option<usize> {
    for region in lexer::scan_regions(source) {
        if region.kind != RegionKind::Code {
            continue;
        }
        if let Some(off) = source[region.start..region.end].find('{') {
            return Some(region.start + off + 1);
        }
    }
    None
}

fn decoy_statement(decoy: &str, k: usize, rng: &mut SeededRng) -> String {
    if decoy.contains('.') || rng.gen::<bool>() {
        format!("{decoy}(0);")
    } else {
        format!("Object aug{k} = {decoy};")
    }
}

fn render_guard(style: GuardStyle, body: &str) -> String {
    match style {
        GuardStyle::IfFalse => format!("if (false) {{ {body} }}"),
        GuardStyle::WhileFalse => format!("while (false) {{ {body} }}"),
        GuardStyle::CatchNeverThrown => {
            format!("try {{ }} catch (ArithmeticException augNever) {{ {body} }}")
        }
    }
}

/// Insert one sentinel-delimited unreachable block, referencing 2 to 5
/// decoy tokens, immediately after the first opening brace.
pub fn inject_dead_code(
    source: &str,
    guard_style: GuardStyle,
    decoys: &[String],
    seed: u64,
) -> CoreResult<String> {
    let point = body_insertion_point(source)
        .ok_or_else(|| CoreError::InvalidArgument("no method body to inject into".into()))?;
    let mut rng = derive_rng(seed, "deadcode");
    let n = rng.gen_range(2..=5usize);
    let fallback = [String::from("aug")];
    let pool: &[String] = if decoys.is_empty() { &fallback } else { decoys };
    let start = rng.gen_range(0..pool.len());
    let body: Vec<String> =
        (0..n).map(|k| decoy_statement(&pool[(start + k) % pool.len()], k, &mut rng)).collect();
    let block = render_guard(guard_style, &body.join(" "));
    let mut out = String::with_capacity(source.len() + block.len() + 32);
    out.push_str(&source[..point]);
    out.push_str(SENTINEL_BEGIN);
    out.push(' ');
    out.push_str(&block);
    out.push(' ');
    out.push_str(SENTINEL_END);
    out.push_str(&source[point..]);
    Ok(out)
}

/// Append 1 to 3 sentinel-delimited decoy line comments (plus, sometimes, a
/// guarded print whose string literal carries decoys) after the first brace,
/// or at end of input when there is no body.
pub fn inject_decoy_comments(source: &str, decoys: &[String], seed: u64) -> String {
    let mut rng = derive_rng(seed, "decoy-comments");
    let fallback = [String::from("aug")];
    let pool: &[String] = if decoys.is_empty() { &fallback } else { decoys };
    let n = rng.gen_range(1..=3usize);
    let mut block = String::from(SENTINEL_BEGIN);
    block.push('\n');
    for k in 0..n {
        block.push_str(&format!("// decoy: {} timing\n", pool[k % pool.len()]));
    }
    if rng.gen::<bool>() {
        block.push_str(&format!("if (false) {{ System.out.println(\"{}\"); }}", pool.join(" ")));
    }
    block.push_str(SENTINEL_END);
    let point = body_insertion_point(source).unwrap_or(source.len());
    let mut out = String::with_capacity(source.len() + block.len());
    out.push_str(&source[..point]);
    out.push_str(&block);
    out.push_str(&source[point..]);
    out
}

/// Remove every sentinel-delimited region. Inverse of the injection ops.
pub fn strip_sentinels(source: &str) -> String {
    let mut out = String::with_capacity(source.len());
    let mut rest = source;
    while let Some(begin) = rest.find(SENTINEL_BEGIN) {
        out.push_str(&rest[..begin]);
        let after = &rest[begin + SENTINEL_BEGIN.len()..];
        match after.find(SENTINEL_END) {
            Some(end) => rest = &after[end + SENTINEL_END.len()..],
            None => {
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Training-time augmentation: with label-dependent probability, apply a
/// uniformly chosen non-empty subset of the three transforms. Labels are
/// never altered.
pub fn augment_training(
    test: &TestCase,
    policy: &AugmentationPolicy,
    rng: &mut SeededRng,
) -> TestCase {
    let p = if test.label == FlakinessCategory::NonFlaky { policy.p_base } else { policy.p_rare };
    if rng.gen::<f64>() >= p {
        return test.clone();
    }
    let subset: u8 = rng.gen_range(1..=7);
    let sub_seed: u64 = rng.gen();
    let mut source = test.source.clone();
    if subset & 1 != 0 {
        let (renamed, _) = rename_variables(&source, RenameScheme::VarK, sub_seed);
        source = renamed;
    }
    if subset & 2 != 0 {
        let style = policy.train_guard_styles
            [rng.gen_range(0..policy.train_guard_styles.len())];
        if let Ok(injected) = inject_dead_code(&source, style, &policy.train_decoys, sub_seed) {
            source = injected;
        }
    }
    if subset & 4 != 0 {
        source = inject_decoy_comments(&source, &policy.train_decoys, sub_seed);
    }
    TestCase { id: test.id.clone(), project: test.project.clone(), source, label: test.label }
}

/// Stress perturbation: deterministic, applied with probability 1, using
/// only the stress guard styles, stress decoys, and the underscore rename
/// scheme. Never draws from the training-side pools.
pub fn perturb_for_stress(
    test: &TestCase,
    mode: PerturbMode,
    policy: &AugmentationPolicy,
) -> PerturbedTest {
    let seed = crate::rng::derive_seed(policy.seed, &format!("stress/{}", test.id));
    let mut source = test.source.clone();
    let mut rename_map = BTreeMap::new();
    let mut applied = Vec::new();
    if matches!(mode, PerturbMode::Rename | PerturbMode::Both) {
        let (renamed, map) = rename_variables(&source, RenameScheme::Underscore, seed);
        source = renamed;
        rename_map = map;
        applied.push(TransformKind::Rename);
    }
    if matches!(mode, PerturbMode::DeadCode | PerturbMode::Both) {
        let mut rng = derive_rng(seed, "stress-guard");
        let style =
            policy.stress_guard_styles[rng.gen_range(0..policy.stress_guard_styles.len())];
        if let Ok(injected) = inject_dead_code(&source, style, &policy.stress_decoys, seed) {
            source = injected;
            applied.push(TransformKind::DeadCode);
        }
    }
    PerturbedTest {
        original_id: test.id.clone(),
        source,
        label: test.label,
        applied_transforms: applied,
        rename_map,
    }
}
