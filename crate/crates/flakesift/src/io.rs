//! File formats: JSONL corpora, versioned vocabulary and split-plan JSON,
//! checkpoint containers, and atomic writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use flakesift_core::augment::PerturbedTest;
use flakesift_core::model::{ModelConfig, ModelState, ParamSet, D_PROJ};
use flakesift_core::symbolic::SYMBOLIC_DIM;
use flakesift_core::{Corpus, SplitPlan, SymbolicVocabulary, TestCase};

use crate::error::{AppError, AppResult};

pub const FORMAT_VERSION: u32 = 1;

/// Write via a temp file in the same directory, then rename, so readers
/// never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Load a JSONL corpus; one object per line with fields id, project, code,
/// label. Errors name the offending line.
pub fn load_corpus(path: &Path) -> AppResult<Corpus> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::user(format!("cannot read {}: {e}", path.display())))?;
    let mut tests = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let test: TestCase = serde_json::from_str(line).map_err(|e| {
            AppError::user(format!("{}:{}: malformed record: {e}", path.display(), i + 1))
        })?;
        tests.push(test);
    }
    Ok(Corpus::new(tests)?)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> AppResult<()> {
    let mut out = String::new();
    for t in corpus.tests() {
        out.push_str(&serde_json::to_string(t).map_err(|e| AppError::internal(e.to_string()))?);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    version: u32,
    #[serde(flatten)]
    payload: T,
}

fn check_version(path: &Path, text: &str) -> AppResult<()> {
    let probe: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| AppError::user(format!("{}: not valid JSON: {e}", path.display())))?;
    match probe.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => Ok(()),
        Some(v) => Err(AppError::user(format!(
            "{}: unsupported format version {v} (expected {FORMAT_VERSION})",
            path.display()
        ))),
        None => Err(AppError::user(format!("{}: missing version field", path.display()))),
    }
}

pub(crate) fn save_versioned<T: Serialize>(payload: T, path: &Path) -> AppResult<()> {
    let doc = Versioned { version: FORMAT_VERSION, payload };
    let mut text =
        serde_json::to_string_pretty(&doc).map_err(|e| AppError::internal(e.to_string()))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

fn load_versioned<T: for<'de> Deserialize<'de>>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::user(format!("cannot read {}: {e}", path.display())))?;
    check_version(path, &text)?;
    let doc: Versioned<T> = serde_json::from_str(&text)
        .map_err(|e| AppError::user(format!("{}: schema mismatch: {e}", path.display())))?;
    Ok(doc.payload)
}

#[derive(Serialize, Deserialize)]
struct VocabularyDoc {
    vocabulary: SymbolicVocabulary,
}

pub fn save_vocabulary(vocab: &SymbolicVocabulary, path: &Path) -> AppResult<()> {
    save_versioned(VocabularyDoc { vocabulary: vocab.clone() }, path)
}

pub fn load_vocabulary(path: &Path) -> AppResult<SymbolicVocabulary> {
    Ok(load_versioned::<VocabularyDoc>(path)?.vocabulary)
}

#[derive(Serialize, Deserialize)]
struct SplitPlanDoc {
    plan: SplitPlan,
}

pub fn save_split_plan(plan: &SplitPlan, path: &Path) -> AppResult<()> {
    save_versioned(SplitPlanDoc { plan: plan.clone() }, path)
}

pub fn load_split_plan(path: &Path) -> AppResult<SplitPlan> {
    Ok(load_versioned::<SplitPlanDoc>(path)?.plan)
}

/// Checkpoint container: model config, seed, and every parameter tensor.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub state: ModelState,
}

fn expected_shapes(config: &ModelConfig) -> BTreeMap<&'static str, usize> {
    let d = config.d_neural;
    let df = config.d_fused();
    let attn = if config.n_attention_blocks == 1 { d * d } else { 0 };
    let sym = config.use_symbolic;
    [
        ("embed", config.vocab_cap * d),
        ("wq", attn),
        ("wk", attn),
        ("wv", attn),
        ("wo", attn),
        ("w_pool", d * d),
        ("b_pool", d),
        ("p_w1", if sym { SYMBOLIC_DIM * D_PROJ } else { 0 }),
        ("p_b1", if sym { D_PROJ } else { 0 }),
        ("p_w2", if sym { D_PROJ * D_PROJ } else { 0 }),
        ("p_b2", if sym { D_PROJ } else { 0 }),
        ("ln_gain", if sym { D_PROJ } else { 0 }),
        ("ln_bias", if sym { D_PROJ } else { 0 }),
        ("bin_w", df * 2),
        ("bin_b", 2),
        ("cat_w", df * 6),
        ("cat_b", 6),
    ]
    .into_iter()
    .collect()
}

pub fn validate_checkpoint(params: &ParamSet, config: &ModelConfig) -> AppResult<()> {
    let expected = expected_shapes(config);
    for (name, tensor) in params.tensors() {
        let want = expected[name];
        if tensor.len() != want {
            return Err(AppError::user(format!(
                "checkpoint tensor {name} has {} values, config expects {want}",
                tensor.len()
            )));
        }
    }
    Ok(())
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> AppResult<()> {
    validate_checkpoint(&ckpt.state.params, &ckpt.model_config)
        .map_err(|e| AppError::internal(e.to_string()))?;
    save_versioned(ckpt, path)
}

pub fn load_checkpoint(path: &Path) -> AppResult<Checkpoint> {
    let ckpt: Checkpoint = load_versioned(path)?;
    validate_checkpoint(&ckpt.state.params, &ckpt.model_config)?;
    Ok(ckpt)
}

/// Sidecar for perturbed corpora: per-test rename maps and transforms.
#[derive(Serialize, Deserialize)]
pub struct PerturbSidecar {
    pub mode: String,
    pub tests: BTreeMap<String, PerturbedTest>,
}

pub fn save_sidecar(sidecar: &PerturbSidecar, path: &Path) -> AppResult<()> {
    save_versioned(sidecar, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flakesift_core::model::init_params;
    use flakesift_core::FlakinessCategory;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn corpus_round_trip_preserves_fields() {
        let dir = tmpdir();
        let path = dir.path().join("c.jsonl");
        let tests = vec![TestCase {
            id: "t1".into(),
            project: "p1".into(),
            source: "@Test void a(){}".into(),
            label: FlakinessCategory::NonFlaky,
        }];
        let corpus = Corpus::new(tests).unwrap();
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded.tests(), corpus.tests());
        assert_eq!(loaded.category_count(FlakinessCategory::NonFlaky), 1);
    }

    #[test]
    fn minimal_record_parses() {
        let dir = tmpdir();
        let path = dir.path().join("c.jsonl");
        fs::write(
            &path,
            r#"{"id":"t1","project":"p1","code":"@Test void a(){}","label":"non_flaky"}"#,
        )
        .unwrap();
        let corpus = load_corpus(&path).unwrap();
        assert_eq!(corpus.len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tmpdir();
        let path = dir.path().join("c.jsonl");
        fs::write(
            &path,
            "{\"id\":\"t1\",\"project\":\"p\",\"code\":\"x\",\"label\":\"non_flaky\"}\nnot json\n",
        )
        .unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn duplicate_id_reported() {
        let dir = tmpdir();
        let path = dir.path().join("c.jsonl");
        let line = r#"{"id":"t1","project":"p","code":"x","label":"time"}"#;
        fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        let err = load_corpus(&path).unwrap_err();
        assert!(err.to_string().contains("t1"), "{err}");
    }

    #[test]
    fn vocabulary_requires_version() {
        let dir = tmpdir();
        let path = dir.path().join("v.json");
        fs::write(&path, "{\"vocabulary\": {}}").unwrap();
        let err = load_vocabulary(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let dir = tmpdir();
        let path = dir.path().join("ck.json");
        let config = ModelConfig {
            d_neural: 8,
            vocab_cap: 16,
            max_seq: 8,
            n_attention_blocks: 1,
            dropout_rate: 0.3,
            use_symbolic: true,
            seed: 3,
        };
        let state = init_params(&config).unwrap();
        let checksum = state.checksum();
        save_checkpoint(&Checkpoint { model_config: config, state }, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.state.checksum(), checksum);

        // Corrupt a tensor length and expect rejection.
        let mut bad = load_checkpoint(&path).unwrap();
        bad.state.params.cat_b.pop();
        assert!(validate_checkpoint(&bad.state.params, &bad.model_config).is_err());
    }

    #[test]
    fn split_plan_round_trip() {
        use flakesift_core::splitter::plan_splits;
        let dir = tmpdir();
        let path = dir.path().join("plan.json");
        let tests: Vec<TestCase> = (0..8)
            .map(|i| TestCase {
                id: format!("t{i}"),
                project: format!("p{i}"),
                source: "void a(){}".into(),
                label: FlakinessCategory::ALL[i % 6],
            })
            .collect();
        let corpus = Corpus::new(tests).unwrap();
        let plan = plan_splits(&corpus, 4, 9).unwrap();
        save_split_plan(&plan, &path).unwrap();
        assert_eq!(load_split_plan(&path).unwrap(), plan);
    }
}
