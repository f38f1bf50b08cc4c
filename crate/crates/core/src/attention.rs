//! Self-attention feature extraction and its cross-attention variant.
//!
//! A module is: multi-head attention (unscaled softmax(QKᵀ)V by default),
//! head concatenation and merge, residual + whole-matrix layer norm, a ReLU
//! feed-forward, and a second residual + norm. The feature extractor runs a
//! linear band projection followed by three stacked modules, with positional
//! encoding added once before the first.

use std::cell::Cell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::signal::{DeFeature, BAND_COUNT};
use crate::tensor::{Graph, Param, Tensor, TensorError, Var};

/// Width of every feature map row.
pub const FEATURE_DIM: usize = 32;
pub const NUM_HEADS: usize = 8;
pub const HEAD_DIM: usize = FEATURE_DIM / NUM_HEADS;
pub const STACKED_MODULES: usize = 3;

pub const DEFAULT_PE_BASE: f64 = 1000.0;
pub const DEFAULT_FF_DIM: usize = 64;

/// Knobs that alter the attention arithmetic. Defaults follow the reference
/// formulation exactly; the flags expose the conventional alternatives.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSettings {
    /// Base constant of the positional encoding.
    pub pe_base: f64,
    /// Divide attention scores by √d_h before the softmax.
    pub scaled_attention: bool,
    /// Re-add the positional encoding before modules 2 and 3 as well.
    pub pe_every_module: bool,
    /// Feed-forward hidden width.
    pub d_ff: usize,
}

impl Default for AttentionSettings {
    fn default() -> Self {
        Self {
            pe_base: DEFAULT_PE_BASE,
            scaled_attention: false,
            pe_every_module: false,
            d_ff: DEFAULT_FF_DIM,
        }
    }
}

// ── Parameters ──────────────────────────────────────────────────────────────

fn init_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Param {
    let bound = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Param::from_values(rows, cols, data).expect("init dimensions are positive")
}

fn zero_row(cols: usize) -> Param {
    Param::new(Tensor::zeros(1, cols))
}

#[derive(Debug, Clone)]
pub struct HeadParams {
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
}

/// One attention module: 8 heads, merge matrix, and the feed-forward pair.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub heads: Vec<HeadParams>,
    pub w_merge: Param,
    pub ff_w1: Param,
    pub ff_b1: Param,
    pub ff_w2: Param,
    pub ff_b2: Param,
}

impl AttentionParams {
    pub fn init(rng: &mut ChaCha8Rng, d_ff: usize) -> Self {
        let heads = (0..NUM_HEADS)
            .map(|_| HeadParams {
                w_q: init_matrix(rng, FEATURE_DIM, HEAD_DIM),
                w_k: init_matrix(rng, FEATURE_DIM, HEAD_DIM),
                w_v: init_matrix(rng, FEATURE_DIM, HEAD_DIM),
            })
            .collect();
        Self {
            heads,
            w_merge: init_matrix(rng, FEATURE_DIM, FEATURE_DIM),
            ff_w1: init_matrix(rng, FEATURE_DIM, d_ff),
            ff_b1: zero_row(d_ff),
            ff_w2: init_matrix(rng, d_ff, FEATURE_DIM),
            ff_b2: zero_row(FEATURE_DIM),
        }
    }

    /// All-zero weights; used by reduction tests.
    pub fn zeroed(d_ff: usize) -> Self {
        let zero = |r, c| Param::new(Tensor::zeros(r, c));
        Self {
            heads: (0..NUM_HEADS)
                .map(|_| HeadParams {
                    w_q: zero(FEATURE_DIM, HEAD_DIM),
                    w_k: zero(FEATURE_DIM, HEAD_DIM),
                    w_v: zero(FEATURE_DIM, HEAD_DIM),
                })
                .collect(),
            w_merge: zero(FEATURE_DIM, FEATURE_DIM),
            ff_w1: zero(FEATURE_DIM, d_ff),
            ff_b1: zero_row(d_ff),
            ff_w2: zero(d_ff, FEATURE_DIM),
            ff_b2: zero_row(FEATURE_DIM),
        }
    }

    pub fn collect_named(&self, prefix: &str, out: &mut Vec<(String, Param)>) {
        for (h, head) in self.heads.iter().enumerate() {
            out.push((format!("{prefix}.head{h}.wq"), head.w_q.clone()));
            out.push((format!("{prefix}.head{h}.wk"), head.w_k.clone()));
            out.push((format!("{prefix}.head{h}.wv"), head.w_v.clone()));
        }
        out.push((format!("{prefix}.merge"), self.w_merge.clone()));
        out.push((format!("{prefix}.ff.w1"), self.ff_w1.clone()));
        out.push((format!("{prefix}.ff.b1"), self.ff_b1.clone()));
        out.push((format!("{prefix}.ff.w2"), self.ff_w2.clone()));
        out.push((format!("{prefix}.ff.b2"), self.ff_b2.clone()));
    }

    /// Value copy with no shared storage.
    pub fn detached_copy(&self) -> Self {
        Self {
            heads: self
                .heads
                .iter()
                .map(|h| HeadParams {
                    w_q: h.w_q.detached_copy(),
                    w_k: h.w_k.detached_copy(),
                    w_v: h.w_v.detached_copy(),
                })
                .collect(),
            w_merge: self.w_merge.detached_copy(),
            ff_w1: self.ff_w1.detached_copy(),
            ff_b1: self.ff_b1.detached_copy(),
            ff_w2: self.ff_w2.detached_copy(),
            ff_b2: self.ff_b2.detached_copy(),
        }
    }
}

/// Band projection plus the three stacked self-attention modules.
#[derive(Debug)]
pub struct FeatureExtractor {
    pub proj_w: Param,
    pub proj_b: Param,
    pub modules: Vec<AttentionParams>,
    /// Forward-invocation counter; lets tests assert the query-map caching
    /// contract.
    pub extraction_calls: Cell<u64>,
}

impl Clone for FeatureExtractor {
    fn clone(&self) -> Self {
        Self {
            proj_w: self.proj_w.clone(),
            proj_b: self.proj_b.clone(),
            modules: self.modules.clone(),
            extraction_calls: Cell::new(0),
        }
    }
}

impl FeatureExtractor {
    pub fn init(rng: &mut ChaCha8Rng, channels: usize, d_ff: usize) -> Self {
        Self {
            proj_w: init_matrix(rng, channels, FEATURE_DIM),
            proj_b: zero_row(FEATURE_DIM),
            modules: (0..STACKED_MODULES).map(|_| AttentionParams::init(rng, d_ff)).collect(),
            extraction_calls: Cell::new(0),
        }
    }

    pub fn channels(&self) -> usize {
        self.proj_w.dims().0
    }

    pub fn collect_named(&self, prefix: &str, out: &mut Vec<(String, Param)>) {
        out.push((format!("{prefix}.proj.w"), self.proj_w.clone()));
        out.push((format!("{prefix}.proj.b"), self.proj_b.clone()));
        for (m, module) in self.modules.iter().enumerate() {
            module.collect_named(&format!("{prefix}.sa{m}"), out);
        }
    }

    /// Value copy with no shared storage.
    pub fn detached_copy(&self) -> Self {
        Self {
            proj_w: self.proj_w.detached_copy(),
            proj_b: self.proj_b.detached_copy(),
            modules: self.modules.iter().map(AttentionParams::detached_copy).collect(),
            extraction_calls: Cell::new(0),
        }
    }
}

// ── Positional encoding ─────────────────────────────────────────────────────

/// PE(p, 2k) = sin(p / base^{2k/d}), PE(p, 2k+1) = cos(p / base^{2k/d}).
pub fn positional_encoding(positions: usize, dim: usize, base: f64) -> Result<Tensor, TensorError> {
    if !dim.is_multiple_of(2) {
        return Err(TensorError::Usage(format!(
            "positional encoding dimension must be even, got {dim}"
        )));
    }
    let mut data = Vec::with_capacity(positions * dim);
    for p in 0..positions {
        for i in 0..dim {
            let k = i / 2;
            let angle = p as f64 / base.powf(2.0 * k as f64 / dim as f64);
            data.push(if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::matrix(positions, dim, data)
}

// ── Modules ─────────────────────────────────────────────────────────────────

fn expect_feature_map(g: &Graph, v: Var, what: &'static str) -> Result<(), TensorError> {
    let (r, c) = g.dims(v);
    if (r, c) != (BAND_COUNT, FEATURE_DIM) {
        return Err(TensorError::ShapeMismatch {
            op: what,
            left: vec![r, c],
            right: vec![BAND_COUNT, FEATURE_DIM],
        });
    }
    Ok(())
}

/// Output of one module along with its first normalization site.
pub struct ModuleTrace {
    pub output: Var,
    /// The normalized residual that feeds the feed-forward layer.
    pub normalized_residual: Var,
}

/// Shared attention body. Q comes from `q_src`; K, V, and the residual
/// stream come from `kv_src`. Self-attention passes the same value for both.
fn attention_core(
    g: &mut Graph,
    q_src: Var,
    kv_src: Var,
    params: &AttentionParams,
    settings: &AttentionSettings,
) -> Result<ModuleTrace, TensorError> {
    let mut head_outputs = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let wq = g.param(&head.w_q);
        let wk = g.param(&head.w_k);
        let wv = g.param(&head.w_v);
        let q = g.matmul(q_src, wq)?;
        let k = g.matmul(kv_src, wk)?;
        let v = g.matmul(kv_src, wv)?;
        let kt = g.transpose(k);
        let mut scores = g.matmul(q, kt)?;
        if settings.scaled_attention {
            scores = g.scale(scores, 1.0 / (HEAD_DIM as f64).sqrt());
        }
        let weights = g.softmax_rows(scores)?;
        head_outputs.push(g.matmul(weights, v)?);
    }
    let concat = g.concat_cols(&head_outputs)?;
    let wm = g.param(&params.w_merge);
    let merged = g.matmul(concat, wm)?;

    let residual = g.add(merged, kv_src)?;
    let normalized = g.layer_norm(residual)?;

    let w1 = g.param(&params.ff_w1);
    let b1 = g.param(&params.ff_b1);
    let w2 = g.param(&params.ff_w2);
    let b2 = g.param(&params.ff_b2);
    let h1 = g.matmul(normalized, w1)?;
    let h1b = g.add_bias(h1, b1)?;
    let act = g.relu(h1b);
    let h2 = g.matmul(act, w2)?;
    let ff = g.add_bias(h2, b2)?;

    let summed = g.add(ff, kv_src)?;
    let output = g.layer_norm(summed)?;
    Ok(ModuleTrace { output, normalized_residual: normalized })
}

/// One self-attention module over a 5×32 feature map. When `add_pe` is set
/// the positional encoding is added to the input first and the residual
/// stream carries the encoded value.
pub fn self_attention_module(
    g: &mut Graph,
    x: Var,
    params: &AttentionParams,
    add_pe: bool,
    settings: &AttentionSettings,
) -> Result<Var, TensorError> {
    Ok(self_attention_module_traced(g, x, params, add_pe, settings)?.output)
}

pub fn self_attention_module_traced(
    g: &mut Graph,
    x: Var,
    params: &AttentionParams,
    add_pe: bool,
    settings: &AttentionSettings,
) -> Result<ModuleTrace, TensorError> {
    expect_feature_map(g, x, "self_attention_module input")?;
    let d_star = if add_pe {
        let pe = positional_encoding(BAND_COUNT, FEATURE_DIM, settings.pe_base)?;
        let pe_var = g.leaf(&pe);
        g.add(x, pe_var)?
    } else {
        x
    };
    attention_core(g, d_star, d_star, params, settings)
}

/// Cross-attention: Q from `q_feat`, K/V and the residual stream from
/// `kv_feat` (the feature being enhanced). No positional encoding.
pub fn cross_attention_module(
    g: &mut Graph,
    q_feat: Var,
    kv_feat: Var,
    params: &AttentionParams,
    settings: &AttentionSettings,
) -> Result<Var, TensorError> {
    expect_feature_map(g, q_feat, "cross_attention_module q input")?;
    expect_feature_map(g, kv_feat, "cross_attention_module kv input")?;
    Ok(attention_core(g, q_feat, kv_feat, params, settings)?.output)
}

/// Full feature extraction: project the 5×c DE matrix to 5×32 and run the
/// three stacked modules.
pub fn feature_extraction_block(
    g: &mut Graph,
    de: &DeFeature,
    fx: &FeatureExtractor,
    settings: &AttentionSettings,
) -> Result<Var, TensorError> {
    let (proj_rows, _) = fx.proj_w.dims();
    if de.channels() != proj_rows {
        return Err(TensorError::ShapeMismatch {
            op: "feature_extraction_block",
            left: vec![BAND_COUNT, de.channels()],
            right: vec![proj_rows, FEATURE_DIM],
        });
    }
    fx.extraction_calls.set(fx.extraction_calls.get() + 1);
    let de_var = g.leaf(de.values());
    let w = g.param(&fx.proj_w);
    let b = g.param(&fx.proj_b);
    let projected = g.matmul(de_var, w)?;
    let mut x = g.add_bias(projected, b)?;
    for (m, module) in fx.modules.iter().enumerate() {
        let add_pe = m == 0 || settings.pe_every_module;
        x = self_attention_module(g, x, module, add_pe, settings)?;
    }
    Ok(x)
}

/// Mean over the five band rows: 5×32 → 1×32.
pub fn global_average_pool(g: &mut Graph, x: Var) -> Result<Var, TensorError> {
    expect_feature_map(g, x, "global_average_pool")?;
    Ok(g.mean_rows(x))
}
