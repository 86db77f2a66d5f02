//! The dual-channel classifier: a small trainable code encoder, the
//! symbolic projection head, late fusion, and the two prediction heads.
//!
//! All tensors are `f64` in plain `Vec`s; forward passes cache every
//! intermediate so [`backward`] can produce exact analytic gradients.
//! Matrices are row-major with shape `(in, out)`: `y[j] = sum_i x[i] *
//! w[i * out + j] + b[j]`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TokenStream;
use crate::error::{CoreError, CoreResult};
use crate::rng::{rng_from_seed, SeededRng};
use crate::symbolic::{SymbolicFeatureVector, SYMBOLIC_DIM};

/// Projected symbolic width; fixed by the architecture.
pub const D_PROJ: usize = 128;
/// Epsilon inside the layer-norm variance denominator.
pub const LN_EPS: f64 = 1e-5;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Neural embedding width (768 for paper parity, 64 for the test preset).
    pub d_neural: usize,
    /// Maximum neural token-vocabulary size, including the UNK row.
    pub vocab_cap: usize,
    /// Maximum tokens per test; longer streams are truncated.
    pub max_seq: usize,
    /// 0 or 1 self-attention blocks.
    pub n_attention_blocks: usize,
    pub dropout_rate: f64,
    /// When false the symbolic channel is disabled: the fused vector is the
    /// neural vector alone and the symbolic input is never read.
    pub use_symbolic: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Paper-parity defaults (768-wide encoder).
    pub fn paper_default(seed: u64) -> Self {
        ModelConfig {
            d_neural: 768,
            vocab_cap: 20_000,
            max_seq: 512,
            n_attention_blocks: 1,
            dropout_rate: 0.3,
            use_symbolic: true,
            seed,
        }
    }

    /// Desk-scale preset used by the experiment suite.
    pub fn test_preset(seed: u64) -> Self {
        ModelConfig {
            d_neural: 64,
            vocab_cap: 2_000,
            max_seq: 128,
            n_attention_blocks: 1,
            dropout_rate: 0.3,
            use_symbolic: true,
            seed,
        }
    }

    /// Width of the fused representation.
    pub fn d_fused(&self) -> usize {
        if self.use_symbolic {
            self.d_neural + D_PROJ
        } else {
            self.d_neural
        }
    }

    pub fn validate(&self) -> CoreResult<()> {
        if self.d_neural == 0 || self.vocab_cap == 0 || self.max_seq == 0 {
            return Err(CoreError::InvalidArgument("zero model dimension".into()));
        }
        if self.n_attention_blocks > 1 {
            return Err(CoreError::InvalidArgument("n_attention_blocks must be 0 or 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CoreError::InvalidArgument("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Every trainable tensor. The same struct doubles as gradient storage and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    /// vocab_cap x d token embeddings; row 0 is UNK.
    pub embed: Vec<f64>,
    /// d x d attention projections; empty when the block is disabled.
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    /// d x d pooling affine and its bias.
    pub w_pool: Vec<f64>,
    pub b_pool: Vec<f64>,
    /// Projection head 16 -> 128 -> 128 with layer-norm gain/bias; empty
    /// when the symbolic channel is disabled.
    pub p_w1: Vec<f64>,
    pub p_b1: Vec<f64>,
    pub p_w2: Vec<f64>,
    pub p_b2: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    /// Prediction heads: d_fused -> 2 and d_fused -> 6.
    pub bin_w: Vec<f64>,
    pub bin_b: Vec<f64>,
    pub cat_w: Vec<f64>,
    pub cat_b: Vec<f64>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> ParamSet {
        ParamSet {
            embed: vec![0.0; other.embed.len()],
            wq: vec![0.0; other.wq.len()],
            wk: vec![0.0; other.wk.len()],
            wv: vec![0.0; other.wv.len()],
            wo: vec![0.0; other.wo.len()],
            w_pool: vec![0.0; other.w_pool.len()],
            b_pool: vec![0.0; other.b_pool.len()],
            p_w1: vec![0.0; other.p_w1.len()],
            p_b1: vec![0.0; other.p_b1.len()],
            p_w2: vec![0.0; other.p_w2.len()],
            p_b2: vec![0.0; other.p_b2.len()],
            ln_gain: vec![0.0; other.ln_gain.len()],
            ln_bias: vec![0.0; other.ln_bias.len()],
            bin_w: vec![0.0; other.bin_w.len()],
            bin_b: vec![0.0; other.bin_b.len()],
            cat_w: vec![0.0; other.cat_w.len()],
            cat_b: vec![0.0; other.cat_b.len()],
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 17] {
        [
            ("embed", &self.embed),
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("w_pool", &self.w_pool),
            ("b_pool", &self.b_pool),
            ("p_w1", &self.p_w1),
            ("p_b1", &self.p_b1),
            ("p_w2", &self.p_w2),
            ("p_b2", &self.p_b2),
            ("ln_gain", &self.ln_gain),
            ("ln_bias", &self.ln_bias),
            ("bin_w", &self.bin_w),
            ("bin_b", &self.bin_b),
            ("cat_w", &self.cat_w),
            ("cat_b", &self.cat_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 17] {
        [
            ("embed", &mut self.embed),
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("w_pool", &mut self.w_pool),
            ("b_pool", &mut self.b_pool),
            ("p_w1", &mut self.p_w1),
            ("p_b1", &mut self.p_b1),
            ("p_w2", &mut self.p_w2),
            ("p_b2", &mut self.p_b2),
            ("ln_gain", &mut self.ln_gain),
            ("ln_bias", &mut self.ln_bias),
            ("bin_w", &mut self.bin_w),
            ("bin_b", &mut self.bin_b),
            ("cat_w", &mut self.cat_w),
            ("cat_b", &mut self.cat_b),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

/// All trainable parameters plus the seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub params: ParamSet,
    pub seed: u64,
}

impl ModelState {
    /// SHA-256 over every tensor's little-endian bytes, in declaration
    /// order. Bit-identical parameters give identical checksums.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.params.tensors() {
            h.update(name.as_bytes());
            for x in t {
                h.update(x.to_le_bytes());
            }
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            use core::fmt::Write;
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

fn glorot(rng: &mut SeededRng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let bound = sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Deterministically initialize all parameters from `config.seed`.
///
/// Affine weights use scaled uniform bounds `sqrt(6 / (fan_in + fan_out))`,
/// biases start at zero, layer-norm gain at one.
pub fn init_params(config: &ModelConfig) -> CoreResult<ModelState> {
    config.validate()?;
    let d = config.d_neural;
    let df = config.d_fused();
    let mut rng = rng_from_seed(config.seed);
    let attn = config.n_attention_blocks == 1;
    let params = ParamSet {
        embed: glorot(&mut rng, config.vocab_cap, d, config.vocab_cap * d),
        wq: if attn { glorot(&mut rng, d, d, d * d) } else { Vec::new() },
        wk: if attn { glorot(&mut rng, d, d, d * d) } else { Vec::new() },
        wv: if attn { glorot(&mut rng, d, d, d * d) } else { Vec::new() },
        wo: if attn { glorot(&mut rng, d, d, d * d) } else { Vec::new() },
        w_pool: glorot(&mut rng, d, d, d * d),
        b_pool: vec![0.0; d],
        p_w1: if config.use_symbolic {
            glorot(&mut rng, SYMBOLIC_DIM, D_PROJ, SYMBOLIC_DIM * D_PROJ)
        } else {
            Vec::new()
        },
        p_b1: if config.use_symbolic { vec![0.0; D_PROJ] } else { Vec::new() },
        p_w2: if config.use_symbolic {
            glorot(&mut rng, D_PROJ, D_PROJ, D_PROJ * D_PROJ)
        } else {
            Vec::new()
        },
        p_b2: if config.use_symbolic { vec![0.0; D_PROJ] } else { Vec::new() },
        ln_gain: if config.use_symbolic { vec![1.0; D_PROJ] } else { Vec::new() },
        ln_bias: if config.use_symbolic { vec![0.0; D_PROJ] } else { Vec::new() },
        bin_w: glorot(&mut rng, df, 2, df * 2),
        bin_b: vec![0.0; 2],
        cat_w: glorot(&mut rng, df, 6, df * 6),
        cat_b: vec![0.0; 6],
    };
    Ok(ModelState { params, seed: config.seed })
}

/// Token-id mapping built from training-fold streams only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralVocab {
    ids: BTreeMap<String, usize>,
    cap: usize,
}

pub const UNK_ID: usize = 0;

impl NeuralVocab {
    /// Rank tokens by document frequency (descending, lexicographic
    /// tie-break) and keep the `cap - 1` most frequent; id 0 is UNK.
    pub fn build(streams: &[TokenStream], cap: usize) -> NeuralVocab {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for s in streams {
            for t in s.distinct() {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = df.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap.saturating_sub(1));
        let ids = ranked
            .into_iter()
            .enumerate()
            .map(|(i, (t, _))| (String::from(t), i + 1))
            .collect();
        NeuralVocab { ids, cap }
    }

    pub fn len(&self) -> usize {
        self.ids.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Map a stream to ids, truncating at `max_seq`; unknown tokens share
    /// the UNK id.
    pub fn map_stream(&self, stream: &TokenStream, max_seq: usize) -> Vec<usize> {
        stream
            .tokens
            .iter()
            .take(max_seq)
            .map(|t| self.ids.get(t).copied().unwrap_or(UNK_ID))
            .collect()
    }
}

/// Output of the two prediction heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logits {
    pub binary: [f64; 2],
    pub categorical: [f64; 6],
}

/// Cached intermediates from one forward pass.
pub struct ForwardCache {
    ids: Vec<usize>,
    x: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>,
    u: Vec<f64>,
    mean: Vec<f64>,
    sym_in: [f64; SYMBOLIC_DIM],
    z0: Vec<f64>,
    z1: Vec<f64>,
    zhat: Vec<f64>,
    inv_std: f64,
    z3: Vec<f64>,
    fused: Vec<f64>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)); all ones in eval mode.
    mask: Vec<f64>,
    dropped: Vec<f64>,
}

fn affine(x: &[f64], w: &[f64], b: &[f64], n_in: usize, n_out: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n_in {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * n_out..(i + 1) * n_out];
        for j in 0..n_out {
            y[j] += xi * row[j];
        }
    }
    y
}

fn softmax_rows(s: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut s[r * cols..(r + 1) * cols];
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = libm::exp(*x - max);
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

/// Full forward pass. `rng` is consumed only when `train_mode` is set (for
/// dropout); eval mode is a pure function of its inputs.
pub fn forward(
    ids: &[usize],
    symbolic: &SymbolicFeatureVector,
    state: &ModelState,
    config: &ModelConfig,
    train_mode: bool,
    rng: Option<&mut SeededRng>,
) -> CoreResult<(Logits, ForwardCache)> {
    config.validate()?;
    let d = config.d_neural;
    let p = &state.params;
    if p.embed.len() != config.vocab_cap * d {
        return Err(CoreError::ShapeMismatch("embedding table does not match config".into()));
    }
    let ids: Vec<usize> = ids.iter().take(config.max_seq).copied().collect();
    for &id in &ids {
        if id >= config.vocab_cap {
            return Err(CoreError::ShapeMismatch("token id out of range".into()));
        }
    }
    let l = ids.len();

    let mut x = vec![0.0; l * d];
    for (pos, &id) in ids.iter().enumerate() {
        x[pos * d..(pos + 1) * d].copy_from_slice(&p.embed[id * d..(id + 1) * d]);
    }

    let attn = config.n_attention_blocks == 1 && l > 0;
    let (q, k, v, att, u, h) = if attn {
        let mut q = vec![0.0; l * d];
        let mut k = vec![0.0; l * d];
        let mut v = vec![0.0; l * d];
        for r in 0..l {
            let xr = &x[r * d..(r + 1) * d];
            q[r * d..(r + 1) * d].copy_from_slice(&affine(xr, &p.wq, &vec![0.0; d], d, d));
            k[r * d..(r + 1) * d].copy_from_slice(&affine(xr, &p.wk, &vec![0.0; d], d, d));
            v[r * d..(r + 1) * d].copy_from_slice(&affine(xr, &p.wv, &vec![0.0; d], d, d));
        }
        let scale = 1.0 / sqrt(d as f64);
        let mut att = vec![0.0; l * l];
        for r in 0..l {
            for c in 0..l {
                let mut s = 0.0;
                for i in 0..d {
                    s += q[r * d + i] * k[c * d + i];
                }
                att[r * l + c] = s * scale;
            }
        }
        softmax_rows(&mut att, l, l);
        let mut u = vec![0.0; l * d];
        for r in 0..l {
            for c in 0..l {
                let a = att[r * l + c];
                if a == 0.0 {
                    continue;
                }
                for i in 0..d {
                    u[r * d + i] += a * v[c * d + i];
                }
            }
        }
        // Residual: H = X + U Wo.
        let mut h = x.clone();
        for r in 0..l {
            let ur = &u[r * d..(r + 1) * d];
            let proj = affine(ur, &p.wo, &vec![0.0; d], d, d);
            for i in 0..d {
                h[r * d + i] += proj[i];
            }
        }
        (q, k, v, att, u, h)
    } else {
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), x.clone())
    };

    // Mean pool, then affine to d_neural. Empty input pools to zero, so the
    // neural vector degenerates to the pooling bias.
    let mut mean = vec![0.0; d];
    if l > 0 {
        for r in 0..l {
            for i in 0..d {
                mean[i] += h[r * d + i];
            }
        }
        for m in &mut mean {
            *m /= l as f64;
        }
    }
    let neural = affine(&mean, &p.w_pool, &p.b_pool, d, d);

    // Symbolic projection head. Never touched when the channel is disabled.
    let (sym_in, z0, z1, zhat, inv_std, z3, z4) = if config.use_symbolic {
        let s = symbolic.0;
        let z0 = affine(&s, &p.p_w1, &p.p_b1, SYMBOLIC_DIM, D_PROJ);
        let z1: Vec<f64> = z0.iter().map(|&x| x.max(0.0)).collect();
        let z2 = affine(&z1, &p.p_w2, &p.p_b2, D_PROJ, D_PROJ);
        let mu: f64 = z2.iter().sum::<f64>() / D_PROJ as f64;
        let var: f64 = z2.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / D_PROJ as f64;
        let inv_std = 1.0 / sqrt(var + LN_EPS);
        let zhat: Vec<f64> = z2.iter().map(|&x| (x - mu) * inv_std).collect();
        let z3: Vec<f64> =
            zhat.iter().zip(&p.ln_gain).zip(&p.ln_bias).map(|((&zh, &g), &b)| g * zh + b).collect();
        let z4: Vec<f64> = z3.iter().map(|&x| x.max(0.0)).collect();
        (s, z0, z1, zhat, inv_std, z3, z4)
    } else {
        ([0.0; SYMBOLIC_DIM], Vec::new(), Vec::new(), Vec::new(), 0.0, Vec::new(), Vec::new())
    };

    // Late fusion: concatenation, neural first.
    let mut fused = neural;
    fused.extend_from_slice(&z4);
    debug_assert_eq!(fused.len(), config.d_fused());

    let mask: Vec<f64> = if train_mode && config.dropout_rate > 0.0 {
        let rng = rng.ok_or_else(|| {
            CoreError::InvalidArgument("train-mode forward needs an rng for dropout".into())
        })?;
        let keep = 1.0 - config.dropout_rate;
        (0..fused.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    } else {
        vec![1.0; fused.len()]
    };
    let dropped: Vec<f64> = fused.iter().zip(&mask).map(|(&f, &m)| f * m).collect();

    let df = config.d_fused();
    let bin = affine(&dropped, &p.bin_w, &p.bin_b, df, 2);
    let cat = affine(&dropped, &p.cat_w, &p.cat_b, df, 6);
    let logits =
        Logits { binary: [bin[0], bin[1]], categorical: [cat[0], cat[1], cat[2], cat[3], cat[4], cat[5]] };

    Ok((
        logits,
        ForwardCache { ids, x, q, k, v, att, u, mean, sym_in, z0, z1, zhat, inv_std, z3, fused, mask, dropped },
    ))
}

/// Eval-mode neural encoding (the op contract for the encoder alone).
pub fn encode_neural(
    ids: &[usize],
    state: &ModelState,
    config: &ModelConfig,
) -> CoreResult<Vec<f64>> {
    let (_, cache) = forward(
        ids,
        &SymbolicFeatureVector::zeros(),
        state,
        config,
        false,
        None,
    )?;
    Ok(cache.fused[..config.d_neural].to_vec())
}

/// Eval-mode symbolic projection (the op contract for the head alone).
pub fn project_symbolic(
    v: &SymbolicFeatureVector,
    state: &ModelState,
    config: &ModelConfig,
) -> CoreResult<Vec<f64>> {
    if !config.use_symbolic {
        return Err(CoreError::InvalidArgument("symbolic channel is disabled".into()));
    }
    let (_, cache) = forward(&[], v, state, config, false, None)?;
    Ok(cache.fused[config.d_neural..].to_vec())
}

/// Late fusion: concatenation, neural first.
pub fn fuse(neural: &[f64], symbolic: &[f64], config: &ModelConfig) -> CoreResult<Vec<f64>> {
    if neural.len() != config.d_neural || symbolic.len() != D_PROJ {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "fuse expects {} + {}, got {} + {}",
            config.d_neural,
            D_PROJ,
            neural.len(),
            symbolic.len()
        )));
    }
    let mut out = neural.to_vec();
    out.extend_from_slice(symbolic);
    Ok(out)
}

/// Accumulate gradients of a scalar loss into `grads`, given the loss
/// gradients with respect to the two heads' logits.
pub fn backward(
    cache: &ForwardCache,
    state: &ModelState,
    config: &ModelConfig,
    d_bin: &[f64; 2],
    d_cat: &[f64; 6],
    grads: &mut ParamSet,
) {
    let d = config.d_neural;
    let df = config.d_fused();
    let p = &state.params;
    let l = cache.ids.len();

    // Heads.
    let mut d_dropped = vec![0.0; df];
    for i in 0..df {
        let fi = cache.dropped[i];
        for j in 0..2 {
            grads.bin_w[i * 2 + j] += fi * d_bin[j];
            d_dropped[i] += p.bin_w[i * 2 + j] * d_bin[j];
        }
        for j in 0..6 {
            grads.cat_w[i * 6 + j] += fi * d_cat[j];
            d_dropped[i] += p.cat_w[i * 6 + j] * d_cat[j];
        }
    }
    for j in 0..2 {
        grads.bin_b[j] += d_bin[j];
    }
    for j in 0..6 {
        grads.cat_b[j] += d_cat[j];
    }

    let d_fused: Vec<f64> = d_dropped.iter().zip(&cache.mask).map(|(&g, &m)| g * m).collect();
    let d_neural_vec = &d_fused[..d];

    // Symbolic projection head.
    if config.use_symbolic {
        let d_z4 = &d_fused[d..];
        let d_z3: Vec<f64> = d_z4
            .iter()
            .zip(&cache.z3)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        let mut d_zhat = vec![0.0; D_PROJ];
        for i in 0..D_PROJ {
            grads.ln_gain[i] += d_z3[i] * cache.zhat[i];
            grads.ln_bias[i] += d_z3[i];
            d_zhat[i] = d_z3[i] * p.ln_gain[i];
        }
        let n = D_PROJ as f64;
        let sum_dzhat: f64 = d_zhat.iter().sum();
        let sum_dzhat_zhat: f64 = d_zhat.iter().zip(&cache.zhat).map(|(&a, &b)| a * b).sum();
        let mut d_z2 = vec![0.0; D_PROJ];
        for i in 0..D_PROJ {
            d_z2[i] = cache.inv_std / n
                * (n * d_zhat[i] - sum_dzhat - cache.zhat[i] * sum_dzhat_zhat);
        }
        let mut d_z1 = vec![0.0; D_PROJ];
        for i in 0..D_PROJ {
            let zi = cache.z1[i];
            for j in 0..D_PROJ {
                grads.p_w2[i * D_PROJ + j] += zi * d_z2[j];
                d_z1[i] += p.p_w2[i * D_PROJ + j] * d_z2[j];
            }
        }
        for j in 0..D_PROJ {
            grads.p_b2[j] += d_z2[j];
        }
        let d_z0: Vec<f64> = d_z1
            .iter()
            .zip(&cache.z0)
            .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
            .collect();
        for i in 0..SYMBOLIC_DIM {
            let si = cache.sym_in[i];
            for j in 0..D_PROJ {
                grads.p_w1[i * D_PROJ + j] += si * d_z0[j];
            }
        }
        for j in 0..D_PROJ {
            grads.p_b1[j] += d_z0[j];
        }
    }

    // Pooling affine.
    let mut d_mean = vec![0.0; d];
    for i in 0..d {
        let mi = cache.mean[i];
        for j in 0..d {
            grads.w_pool[i * d + j] += mi * d_neural_vec[j];
            d_mean[i] += p.w_pool[i * d + j] * d_neural_vec[j];
        }
    }
    for j in 0..d {
        grads.b_pool[j] += d_neural_vec[j];
    }

    if l == 0 {
        return;
    }

    let inv_l = 1.0 / l as f64;
    let mut d_h = vec![0.0; l * d];
    for r in 0..l {
        for i in 0..d {
            d_h[r * d + i] = d_mean[i] * inv_l;
        }
    }

    let attn = config.n_attention_blocks == 1;
    let mut d_x = d_h.clone(); // residual path (or identity when no attention)
    if attn {
        // H = X + U Wo.
        let mut d_u = vec![0.0; l * d];
        for r in 0..l {
            for i in 0..d {
                let ui = cache.u[r * d + i];
                for j in 0..d {
                    grads.wo[i * d + j] += ui * d_h[r * d + j];
                    d_u[r * d + i] += p.wo[i * d + j] * d_h[r * d + j];
                }
            }
        }
        // U = A V.
        let mut d_att = vec![0.0; l * l];
        let mut d_v = vec![0.0; l * d];
        for r in 0..l {
            for c in 0..l {
                let mut s = 0.0;
                for i in 0..d {
                    s += d_u[r * d + i] * cache.v[c * d + i];
                    d_v[c * d + i] += cache.att[r * l + c] * d_u[r * d + i];
                }
                d_att[r * l + c] = s;
            }
        }
        // Row softmax.
        let mut d_scores = vec![0.0; l * l];
        for r in 0..l {
            let row_a = &cache.att[r * l..(r + 1) * l];
            let row_da = &d_att[r * l..(r + 1) * l];
            let dot: f64 = row_a.iter().zip(row_da).map(|(&a, &g)| a * g).sum();
            for c in 0..l {
                d_scores[r * l + c] = row_a[c] * (row_da[c] - dot);
            }
        }
        // Scores = Q K^T / sqrt(d).
        let scale = 1.0 / sqrt(d as f64);
        let mut d_q = vec![0.0; l * d];
        let mut d_k = vec![0.0; l * d];
        for r in 0..l {
            for c in 0..l {
                let ds = d_scores[r * l + c] * scale;
                if ds == 0.0 {
                    continue;
                }
                for i in 0..d {
                    d_q[r * d + i] += ds * cache.k[c * d + i];
                    d_k[c * d + i] += ds * cache.q[r * d + i];
                }
            }
        }
        // Q = X Wq etc.
        for r in 0..l {
            for i in 0..d {
                let xi = cache.x[r * d + i];
                for j in 0..d {
                    grads.wq[i * d + j] += xi * d_q[r * d + j];
                    grads.wk[i * d + j] += xi * d_k[r * d + j];
                    grads.wv[i * d + j] += xi * d_v[r * d + j];
                    d_x[r * d + i] += p.wq[i * d + j] * d_q[r * d + j]
                        + p.wk[i * d + j] * d_k[r * d + j]
                        + p.wv[i * d + j] * d_v[r * d + j];
                }
            }
        }
    }

    // Embedding rows.
    for (pos, &id) in cache.ids.iter().enumerate() {
        for i in 0..d {
            grads.embed[id * d + i] += d_x[pos * d + i];
        }
    }
}

/// Inference rule: argmax of the categorical head, ties broken by enum
/// order. The binary head is an auxiliary training signal only.
pub fn predict(logits: &Logits) -> CoreResult<crate::FlakinessCategory> {
    if logits.categorical.iter().any(|x| !x.is_finite())
        || logits.binary.iter().any(|x| !x.is_finite())
    {
        return Err(CoreError::NonFinite("logits".into()));
    }
    let mut best = 0usize;
    for (i, &x) in logits.categorical.iter().enumerate() {
        if x > logits.categorical[best] {
            best = i;
        }
    }
    Ok(crate::FlakinessCategory::from_index(best).expect("index < 6"))
}
