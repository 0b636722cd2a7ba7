//! The fusion network: encoders, masked self-attention over the four modality
//! tokens, pooling, the shared backbone and ten sigmoid heads.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::labels::N_HEADS;
use crate::data::mask::{Modality, ModalityMask};
use crate::error::{Error, Result};
use crate::features::window::ObservationWindow;
use crate::scalar::{axpy, Scalar};
use crate::seed;

use super::attention::{BlockCache, Mmsa, SEQ_LEN};
use super::encoders::{CnnCache, CnnEncoder, EhrCache, EhrEncoder};
use super::layout::Layout;
use super::ops::{relu_backward, relu_in_place, sigmoid, Lin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Mean of the present token rows.
    MaskedMean,
    /// The EHR token row alone.
    EhrToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub ehr_vars: usize,
    pub ehr_steps: usize,
    pub static_dim: usize,
    pub ehr_hidden: usize,
    pub accel_dim: usize,
    pub face_dim: usize,
    pub env_dim: usize,
    pub conv_channels: [usize; 2],
    /// Widths of the affine layers after pooling; ReLU between consecutive layers.
    pub backbone: Vec<usize>,
    pub pooling: Pooling,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            n_heads: 4,
            n_blocks: 2,
            ehr_vars: 12,
            ehr_steps: 4,
            static_dim: crate::data::record::STATIC_DIM,
            ehr_hidden: 32,
            accel_dim: 6,
            face_dim: 9,
            env_dim: 4,
            conv_channels: [16, 32],
            backbone: vec![128, 64, 32],
            pooling: Pooling::MaskedMean,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Small network for gradient checks: D = 8, H = 2, T = 2.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_blocks: 2,
            ehr_vars: 3,
            ehr_steps: 2,
            static_dim: 2,
            ehr_hidden: 4,
            accel_dim: 3,
            face_dim: 3,
            env_dim: 2,
            conv_channels: [2, 3],
            backbone: vec![6, 5, 4],
            pooling: Pooling::MaskedMean,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be a positive multiple of n_heads");
        }
        if self.n_blocks == 0 || self.backbone.is_empty() || self.backbone.contains(&0) {
            return bad("need at least one attention block and non-empty backbone widths");
        }
        if [self.ehr_vars, self.ehr_steps, self.ehr_hidden, self.accel_dim, self.face_dim, self.env_dim]
            .contains(&0)
            || self.conv_channels.contains(&0)
        {
            return bad("block and hidden sizes must be positive");
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer_norm_eps must be positive");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn block_len(&self, m: Modality) -> usize {
        match m {
            Modality::Ehr => self.ehr_vars * self.ehr_steps,
            Modality::Accel => self.accel_dim,
            Modality::Face => self.face_dim,
            Modality::Env => self.env_dim,
        }
    }
}

/// Normalized inputs of one window. A block is read only when its mask bit is set,
/// so absent blocks may hold anything (or nothing).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput<T> {
    pub ehr_temporal: Vec<T>,
    pub ehr_static: Vec<T>,
    pub accel: Option<Vec<T>>,
    pub face: Option<Vec<T>>,
    pub env: Option<Vec<T>>,
    pub mask: ModalityMask,
}

impl<T: Scalar> ModelInput<T> {
    pub fn from_window(w: &ObservationWindow) -> Self {
        let conv = |v: &Vec<f64>| v.iter().map(|&x| T::of(x)).collect::<Vec<T>>();
        ModelInput {
            ehr_temporal: conv(&w.ehr.temporal),
            ehr_static: conv(&w.ehr.static_),
            accel: w.accel.as_ref().map(conv),
            face: w.face.as_ref().map(conv),
            env: w.env.as_ref().map(conv),
            mask: w.mask,
        }
    }

    /// Uniform [0, 1) values for every block, the range of min-max scaled features.
    pub fn random<R: rand::Rng>(cfg: &ModelConfig, mask: ModalityMask, rng: &mut R) -> Self {
        let mut draw = |n: usize| (0..n).map(|_| T::of(rng.random::<f64>())).collect::<Vec<T>>();
        ModelInput {
            ehr_temporal: draw(cfg.ehr_vars * cfg.ehr_steps),
            ehr_static: draw(cfg.static_dim),
            accel: Some(draw(cfg.accel_dim)),
            face: Some(draw(cfg.face_dim)),
            env: Some(draw(cfg.env_dim)),
            mask,
        }
    }

    /// Optional-modality block; `None` for EHR.
    pub fn block(&self, m: Modality) -> Option<&Vec<T>> {
        match m {
            Modality::Ehr => None,
            Modality::Accel => self.accel.as_ref(),
            Modality::Face => self.face.as_ref(),
            Modality::Env => self.env.as_ref(),
        }
    }

    pub fn block_mut(&mut self, m: Modality) -> Option<&mut Option<Vec<T>>> {
        match m {
            Modality::Ehr => None,
            Modality::Accel => Some(&mut self.accel),
            Modality::Face => Some(&mut self.face),
            Modality::Env => Some(&mut self.env),
        }
    }
}

/// Every activation needed for backpropagation and attribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub mask: ModalityMask,
    /// Token positions in the sequence that are present, ascending.
    pub present: Vec<usize>,
    /// `SEQ_LEN` rows of width `d_model`; absent rows are zero vectors.
    pub embeddings: Vec<Vec<T>>,
    pub ehr: EhrCache<T>,
    /// Accel, face, env encoder caches when present.
    pub cnn: [Option<CnnCache<T>>; 3],
    /// Block caches over the present rows only.
    pub blocks: Vec<BlockCache<T>>,
    pub pooled: Vec<T>,
    /// `hidden[0]` is the pooled vector, `hidden[l + 1]` the output of backbone layer `l`.
    pub hidden: Vec<Vec<T>>,
    pub logits: [T; N_HEADS],
    pub probs: [T; N_HEADS],
}

impl<T: Scalar> ForwardTrace<T> {
    /// Full `SEQ_LEN x SEQ_LEN` attention weights of one head. Columns of absent
    /// keys are 0; rows of absent queries are never computed and are left at 0.
    pub fn attention(&self, block: usize, head: usize) -> [[T; SEQ_LEN]; SEQ_LEN] {
        let c = &self.blocks[block];
        let nk = c.keys.len();
        let mut w = [[T::zero(); SEQ_LEN]; SEQ_LEN];
        for (r, &pi) in self.present.iter().enumerate() {
            for (kj, &key_row) in c.keys.iter().enumerate() {
                w[pi][self.present[key_row]] = c.attn[head][r * nk + kj];
            }
        }
        w
    }

    /// Final block outputs for the present tokens.
    pub fn tokens(&self) -> &[Vec<T>] {
        &self.blocks.last().expect("at least one block").y
    }
}

/// Gradients of a scalar function of the logits with respect to the model inputs.
/// Blocks of absent modalities are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputGrads<T> {
    pub ehr_temporal: Vec<T>,
    pub ehr_static: Vec<T>,
    pub accel: Option<Vec<T>>,
    pub face: Option<Vec<T>>,
    pub env: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
struct Architecture {
    ehr: EhrEncoder,
    cnn: [CnnEncoder; 3],
    blocks: Vec<Mmsa>,
    backbone: Vec<Lin>,
    heads: Lin,
}

fn build(cfg: &ModelConfig) -> (Layout, Architecture) {
    let mut l = Layout::default();
    let d = cfg.d_model;
    let ehr = EhrEncoder::declare(&mut l, cfg.ehr_vars, cfg.ehr_steps, cfg.static_dim, cfg.ehr_hidden, d);
    let cnn = [
        CnnEncoder::declare(&mut l, "accel", cfg.accel_dim, cfg.conv_channels, d),
        CnnEncoder::declare(&mut l, "face", cfg.face_dim, cfg.conv_channels, d),
        CnnEncoder::declare(&mut l, "env", cfg.env_dim, cfg.conv_channels, d),
    ];
    let blocks = (0..cfg.n_blocks)
        .map(|b| Mmsa::declare(&mut l, &format!("mmsa{b}"), d, cfg.n_heads, cfg.layer_norm_eps))
        .collect();
    let mut width = d;
    let mut backbone = Vec::new();
    for (i, &w) in cfg.backbone.iter().enumerate() {
        backbone.push(Lin::declare(&mut l, &format!("backbone{i}"), width, w));
        width = w;
    }
    let heads = Lin::declare(&mut l, "heads", width, N_HEADS);
    (l, Architecture { ehr, cnn, blocks, backbone, heads })
}

#[derive(Debug, Clone)]
pub struct FusionModel<T> {
    config: ModelConfig,
    layout: Layout,
    arch: Architecture,
    pub params: Vec<T>,
}

fn check_finite<T: Scalar>(xs: &[T], name: &'static str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(name))
    }
}

fn check_len(got: usize, expected: usize, modality: &'static str) -> Result<()> {
    if got == expected {
        Ok(())
    } else {
        Err(Error::Shape { modality, expected, got })
    }
}

impl<T: Scalar> FusionModel<T> {
    /// Uniform fan-in initialization drawn from `seed` under the label "init".
    pub fn new(config: ModelConfig, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, arch) = build(&config);
        let params = layout.initialize(&mut seed::rng(master_seed, "init"));
        Ok(FusionModel { config, layout, arch, params })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, arch) = build(&config);
        let params = vec![T::zero(); layout.total];
        Ok(FusionModel { config, layout, arch, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        check_len(params.len(), m.layout.total, "parameters")?;
        m.params = params;
        Ok(m)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    pub fn cast<U: Scalar>(&self) -> FusionModel<U> {
        FusionModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            arch: self.arch.clone(),
            params: self.params.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }

    fn validate_input(&self, x: &ModelInput<T>) -> Result<()> {
        let c = &self.config;
        check_len(x.ehr_temporal.len(), c.ehr_vars * c.ehr_steps, "ehr")?;
        check_len(x.ehr_static.len(), c.static_dim, "ehr static")?;
        check_finite(&x.ehr_temporal, "ehr")?;
        check_finite(&x.ehr_static, "ehr static")?;
        for m in &Modality::ALL[1..] {
            if x.mask.is_present(*m) {
                let b = x.block(*m).ok_or(Error::AbsentModality(m.name()))?;
                check_len(b.len(), c.block_len(*m), m.name())?;
                check_finite(b, m.name())?;
            }
        }
        Ok(())
    }

    /// Embedding of one modality; the zero vector when it is absent.
    pub fn encode_modality(&self, x: &ModelInput<T>, m: Modality) -> Result<Vec<T>> {
        self.validate_input(x)?;
        Ok(match m {
            Modality::Ehr => self.arch.ehr.forward(&self.params, &x.ehr_temporal, &x.ehr_static).0,
            _ if !x.mask.is_present(m) => vec![T::zero(); self.config.d_model],
            _ => {
                let block = x.block(m).expect("validated");
                self.arch.cnn[m.index() - 1].forward(&self.params, block).0
            }
        })
    }

    /// One MMSA block over all `SEQ_LEN` rows with keys restricted to present tokens.
    /// Rows of absent queries are computed but carry no information to other rows.
    pub fn mmsa_block(&self, block: usize, x: &[Vec<T>], mask: ModalityMask) -> Vec<Vec<T>> {
        self.arch.blocks[block].forward(&self.params, x.to_vec(), &mask.bits()).y
    }

    pub fn forward(&self, x: &ModelInput<T>) -> Result<ForwardTrace<T>> {
        self.validate_input(x)?;
        let p = &self.params;
        let d = self.config.d_model;
        let present = x.mask.present_positions();
        let (e_ehr, ehr) = self.arch.ehr.forward(p, &x.ehr_temporal, &x.ehr_static);
        let mut embeddings = vec![vec![T::zero(); d]; SEQ_LEN];
        embeddings[0] = e_ehr;
        let mut cnn: [Option<CnnCache<T>>; 3] = [None, None, None];
        for &pos in &present[1..] {
            let m = Modality::ALL[pos];
            let (e, c) = self.arch.cnn[pos - 1].forward(p, x.block(m).expect("validated"));
            embeddings[pos] = e;
            cnn[pos - 1] = Some(c);
        }

        let mut rows: Vec<Vec<T>> = present.iter().map(|&i| embeddings[i].clone()).collect();
        let all_keys = vec![true; rows.len()];
        let mut blocks = Vec::with_capacity(self.arch.blocks.len());
        for b in &self.arch.blocks {
            let c = b.forward(p, rows, &all_keys);
            rows = c.y.clone();
            blocks.push(c);
        }

        let pooled = match self.config.pooling {
            Pooling::EhrToken => rows[0].clone(),
            Pooling::MaskedMean => {
                let mut acc = vec![T::zero(); d];
                let w = T::one() / T::of_usize(rows.len());
                for r in &rows {
                    axpy(w, r, &mut acc);
                }
                acc
            }
        };

        let mut hidden = vec![pooled.clone()];
        let last = self.arch.backbone.len() - 1;
        for (i, lin) in self.arch.backbone.iter().enumerate() {
            let mut h = lin.apply(p, hidden.last().expect("non-empty"));
            if i < last {
                relu_in_place(&mut h);
            }
            hidden.push(h);
        }
        let z = self.arch.heads.apply(p, hidden.last().expect("non-empty"));
        let mut logits = [T::zero(); N_HEADS];
        logits.copy_from_slice(&z);
        let probs = logits.map(sigmoid);
        Ok(ForwardTrace {
            mask: x.mask,
            present,
            embeddings,
            ehr,
            cnn,
            blocks,
            pooled,
            hidden,
            logits,
            probs,
        })
    }

    pub fn predict(&self, x: &ModelInput<T>) -> Result<[T; N_HEADS]> {
        Ok(self.forward(x)?.probs)
    }

    fn backward_impl(&self, t: &ForwardTrace<T>, dlogits: &[T; N_HEADS], mut grads: Option<&mut [T]>, want_input: bool) -> Option<InputGrads<T>> {
        let p = &self.params;
        let d = self.config.d_model;
        let depth = self.arch.backbone.len();
        let mut dz = vec![T::zero(); t.hidden[depth].len()];
        self.arch.heads.backward(p, &t.hidden[depth], dlogits, grads.as_deref_mut(), Some(&mut dz));
        for l in (0..depth).rev() {
            if l + 1 < depth {
                relu_backward(&t.hidden[l + 1], &mut dz);
            }
            let mut dprev = vec![T::zero(); t.hidden[l].len()];
            self.arch.backbone[l].backward(p, &t.hidden[l], &dz, grads.as_deref_mut(), Some(&mut dprev));
            dz = dprev;
        }

        let n = t.present.len();
        let mut drows = vec![vec![T::zero(); d]; n];
        match self.config.pooling {
            Pooling::EhrToken => drows[0] = dz,
            Pooling::MaskedMean => {
                let w = T::one() / T::of_usize(n);
                for r in drows.iter_mut() {
                    axpy(w, &dz, r);
                }
            }
        }
        for (b, c) in self.arch.blocks.iter().zip(&t.blocks).rev() {
            drows = b.backward(p, c, &drows, grads.as_deref_mut());
        }

        let ehr = self.arch.ehr.backward(p, &t.ehr, &drows[0], grads.as_deref_mut(), want_input);
        let mut blocks: [Option<Vec<T>>; 3] = [None, None, None];
        for (r, &pos) in t.present.iter().enumerate().skip(1) {
            let cache = t.cnn[pos - 1].as_ref().expect("present modality has a cache");
            blocks[pos - 1] = self.arch.cnn[pos - 1].backward(p, cache, &drows[r], grads.as_deref_mut(), want_input);
        }
        ehr.map(|e| {
            let [accel, face, env] = blocks;
            InputGrads {
                ehr_temporal: e.temporal,
                ehr_static: e.static_,
                accel,
                face,
                env,
            }
        })
    }

    /// Accumulates into `grads` the parameter gradient of `sum_h dlogits[h] * logit_h`.
    pub fn backward(&self, trace: &ForwardTrace<T>, dlogits: &[T; N_HEADS], grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len());
        self.backward_impl(trace, dlogits, Some(grads), false);
    }

    /// Input gradient of `sum_h dlogits[h] * logit_h` without touching parameter gradients.
    pub fn input_gradients(&self, trace: &ForwardTrace<T>, dlogits: &[T; N_HEADS]) -> InputGrads<T> {
        self.backward_impl(trace, dlogits, None, true).expect("inputs requested")
    }
}

/// Double-precision model used for training and gradient checks.
pub type Model = FusionModel<f64>;
pub type ModelF32 = FusionModel<f32>;
