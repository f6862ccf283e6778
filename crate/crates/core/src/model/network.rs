//! The full network: SE-ResNet backbone, optional transformer layer, span head,
//! pooling and prediction head.

use serde::{Deserialize, Serialize};

use super::attention::{positional_encoding, EncCache, Encoder};
use super::conv::{max_pool, max_pool_backward, relu, relu_backward, Act, BatchNorm, Block, BlockCache, BnCache, BnUpdate, Conv2d};
use super::dense::{Init, Linear};
use super::loss::{af_loss_grad, genuine_score, qa_loss_grad, LossParts};
use super::params::{Grads, Params};
use super::pooling::{PoolCache, PoolLayer, Pooling};
use super::switches::{Switches, Tape};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::stream_rng;
use crate::span::SpanTarget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Frames per utterance.
    pub frames: usize,
    /// Input feature bins.
    pub n_bins: usize,
    /// Stem channels followed by the four stage widths.
    pub stage_channels: [usize; 5],
    pub stage_blocks: [usize; 4],
    /// With `false` the transformer layer and positional encoding are removed.
    pub attention: bool,
    pub heads: usize,
    pub ffn_width: usize,
    pub dropout: f64,
    pub pooling: Pooling,
    pub se_reduction: usize,
    /// Parameter initialization seed.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    pub fn full() -> Self {
        Self {
            frames: 501,
            n_bins: 80,
            stage_channels: [16, 16, 32, 64, 128],
            stage_blocks: [3, 4, 6, 3],
            attention: true,
            heads: 8,
            ffn_width: 1536,
            dropout: 0.1,
            pooling: Pooling::Asp,
            se_reduction: 16,
            init_seed: 0,
        }
    }

    /// Scaled-down network for tests and desk-scale runs.
    pub fn tiny(frames: usize) -> Self {
        Self {
            frames,
            stage_channels: [4, 4, 8, 16, 32],
            stage_blocks: [1, 1, 1, 1],
            heads: 4,
            ffn_width: 96,
            ..Self::full()
        }
    }

    /// Frequency widths after the stem convolution, the max pool and each stage.
    pub fn freq_widths(&self) -> [usize; 6] {
        let half = |f: usize| (f - 1) / 2 + 1;
        let c1 = half(self.n_bins);
        let mp = half(c1);
        let s2 = half(mp);
        let s3 = half(s2);
        let s4 = half(s3);
        [c1, mp, mp, s2, s3, s4]
    }

    /// Width `n` of the per-frame bottleneck features.
    pub fn bottleneck_width(&self) -> usize {
        self.stage_channels[4] * self.freq_widths()[5]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid_config(m));
        if self.frames < 2 {
            return bad(format!("frames must be at least 2, got {}", self.frames));
        }
        if self.n_bins == 0 {
            return bad("n_bins must be positive".into());
        }
        if self.stage_channels.contains(&0) || self.stage_blocks.contains(&0) {
            return bad("stage channels and block counts must be positive".into());
        }
        if self.heads == 0 || self.bottleneck_width() % self.heads != 0 {
            return bad(format!(
                "heads ({}) must divide the bottleneck width {}",
                self.heads,
                self.bottleneck_width()
            ));
        }
        if self.ffn_width == 0 || self.se_reduction == 0 {
            return bad("ffn_width and se_reduction must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}

/// Training mode uses batch statistics and seeded dropout; evaluation uses running
/// statistics and no dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Eval,
}

impl Mode {
    fn is_train(self) -> bool {
        matches!(self, Mode::Train { .. })
    }

    fn dropout(self, sample: usize) -> Option<(u64, u64)> {
        match self {
            Mode::Train { dropout_seed } => Some((dropout_seed, sample as u64)),
            Mode::Eval => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `T × 2` span logits (start, end).
    pub a: Vec<f64>,
    /// Fake and real logits.
    pub s: [f64; 2],
    /// `T × n` bottleneck features.
    pub h: Vec<f64>,
}

impl ForwardOutput {
    pub fn score(&self) -> f64 {
        genuine_score(self.s)
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone)]
pub struct Example {
    pub features: FeatureMatrix,
    pub label: Label,
    pub target: Option<SpanTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub parts: Vec<LossParts>,
}

impl BatchLoss {
    /// Mean per-utterance joint loss.
    pub fn mean(&self) -> f64 {
        self.parts.iter().map(LossParts::total).sum::<f64>() / self.parts.len() as f64
    }

    /// Mean QA loss over fake utterances (0 if none).
    pub fn mean_qa(&self) -> f64 {
        let qa: Vec<f64> = self.parts.iter().filter_map(|p| p.qa).collect();
        if qa.is_empty() {
            0.0
        } else {
            qa.iter().sum::<f64>() / qa.len() as f64
        }
    }

    pub fn mean_af(&self) -> f64 {
        self.parts.iter().map(|p| p.af).sum::<f64>() / self.parts.len() as f64
    }
}

/// Result of a forward and backward pass over one batch.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub loss: BatchLoss,
    pub grads: Grads,
    /// Batch-norm running statistics to commit after the step.
    pub bn_updates: Vec<BnUpdate>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: Params,
    stem_conv: Conv2d,
    stem_bn: BatchNorm,
    stages: Vec<Vec<Block>>,
    encoder: Option<Encoder>,
    qa: Linear,
    pool: PoolLayer,
    pred: Linear,
    pe: Vec<f64>,
}

struct BackboneCache {
    x: Act,
    stem_bn: BnCache,
    stem_relu: Act,
    pool_arg: Vec<u32>,
    blocks: Vec<BlockCache>,
    out_shape: (usize, usize, usize),
}

struct HeadCache {
    z: Vec<f64>,
    enc: Option<EncCache>,
    h: Vec<f64>,
    pool: PoolCache,
    pooled: Vec<f64>,
}

/// Shapes of every layer output for one utterance, in forward order.
pub type ShapeTrace = Vec<(String, Vec<usize>)>;

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.init_seed, 0x1417);
        let mut p = Params::default();
        let c = config.stage_channels;
        let stem_conv = Conv2d::new(&mut p, "stem.conv", 1, c[0], 7, 2, &mut rng);
        let stem_bn = BatchNorm::new(&mut p, "stem.bn", c[0]);
        let mut stages = Vec::new();
        let mut cin = c[0];
        for (s, &blocks) in config.stage_blocks.iter().enumerate() {
            let cout = c[s + 1];
            let mut stage = Vec::new();
            for b in 0..blocks {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let name = format!("stage{}.block{}", s + 1, b);
                stage.push(Block::new(&mut p, &name, cin, cout, stride, config.se_reduction, &mut rng));
                cin = cout;
            }
            stages.push(stage);
        }
        let n = config.bottleneck_width();
        let encoder = config
            .attention
            .then(|| Encoder::new(&mut p, "attn", n, config.heads, config.ffn_width, config.dropout, &mut rng));
        let qa = Linear::new(&mut p, "qa", n, 2, Init::FanIn, &mut rng);
        let pool = PoolLayer::new(&mut p, "pool", config.pooling, n, &mut rng);
        let pred = Linear::new(&mut p, "pred", n, 2, Init::FanIn, &mut rng);
        let pe = if config.attention {
            positional_encoding(config.frames, n)
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            params: p,
            stem_conv,
            stem_bn,
            stages,
            encoder,
            qa,
            pool,
            pred,
            pe,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Replace all tensors, checking that names and shapes agree.
    pub fn set_params(&mut self, params: Params) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for id in self.params.ids() {
            let name = self.params.name(id);
            let other = params
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if params.shape(other) != self.params.shape(id) {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?}, expected {:?}",
                    params.shape(other),
                    self.params.shape(id)
                )));
            }
        }
        let mut fresh = self.params.clone();
        for id in fresh.ids().collect::<Vec<_>>() {
            let src = params.id(fresh.name(id)).expect("checked above");
            fresh.value_mut(id).copy_from_slice(params.value(src));
        }
        self.params = fresh;
        Ok(())
    }

    fn check_input(&self, x: &FeatureMatrix) -> Result<()> {
        if x.frames != self.config.frames || x.n_features != self.config.n_bins {
            return Err(Error::invalid_input(format!(
                "expected {}x{} features, got {}x{}",
                self.config.frames, self.config.n_bins, x.frames, x.n_features
            )));
        }
        Ok(())
    }

    fn stack(&self, xs: &[&FeatureMatrix]) -> Result<Act> {
        if xs.is_empty() {
            return Err(Error::invalid_input("empty batch"));
        }
        let (t, f) = (self.config.frames, self.config.n_bins);
        let mut act = Act::zeros(xs.len(), 1, t, f);
        for (i, x) in xs.iter().enumerate() {
            self.check_input(x)?;
            act.sample_mut(i).copy_from_slice(&x.values);
        }
        Ok(act)
    }

    fn backbone_forward(
        &self,
        x: Act,
        train: bool,
        upd: &mut Vec<BnUpdate>,
        trace: &mut ShapeTrace,
        tape: &mut Tape,
    ) -> (Act, BackboneCache) {
        let p = &self.params;
        let h = self.stem_conv.forward(p, &x);
        trace.push(("conv1".into(), h.shape().to_vec()));
        let (n, stem_bn) = self.stem_bn.forward(p, &h, train, upd);
        let stem_relu = relu(&n, tape);
        let (mut a, pool_arg) = max_pool(&stem_relu, tape);
        trace.push(("maxpool".into(), a.shape().to_vec()));
        let mut blocks = Vec::new();
        for (s, stage) in self.stages.iter().enumerate() {
            for block in stage {
                let (y, c) = block.forward(p, a, train, upd, tape);
                blocks.push(c);
                a = y;
            }
            trace.push((format!("stage{}", s + 1), a.shape().to_vec()));
        }
        let out_shape = (a.c, a.t, a.f);
        (
            a,
            BackboneCache {
                x,
                stem_bn,
                stem_relu,
                pool_arg,
                blocks,
                out_shape,
            },
        )
    }

    fn backbone_backward(&self, cache: &BackboneCache, mut d: Act, g: &mut Grads) {
        let p = &self.params;
        let mut idx = cache.blocks.len();
        for stage in self.stages.iter().rev() {
            for block in stage.iter().rev() {
                idx -= 1;
                d = block.backward(p, &cache.blocks[idx], &d, g);
            }
        }
        let d = max_pool_backward(&cache.stem_relu, &cache.pool_arg, &d);
        let d = relu_backward(&cache.stem_relu, &d);
        let d = self.stem_bn.backward(p, &cache.stem_bn, &d, g);
        // the input gradient is not needed
        let _ = self.stem_conv.backward(p, &cache.x, &d, g);
    }

    /// Per-frame flattening `[c][t][f] → [t][c·F + f]`.
    fn flatten(a: &Act, i: usize) -> Vec<f64> {
        let (c, t, f) = (a.c, a.t, a.f);
        let s = a.sample(i);
        let mut z = vec![0.0; t * c * f];
        for ch in 0..c {
            for ti in 0..t {
                let src = &s[(ch * t + ti) * f..(ch * t + ti + 1) * f];
                z[ti * c * f + ch * f..ti * c * f + (ch + 1) * f].copy_from_slice(src);
            }
        }
        z
    }

    fn unflatten(dz: &[f64], dst: &mut [f64], c: usize, t: usize, f: usize) {
        for ch in 0..c {
            for ti in 0..t {
                dst[(ch * t + ti) * f..(ch * t + ti + 1) * f]
                    .copy_from_slice(&dz[ti * c * f + ch * f..ti * c * f + (ch + 1) * f]);
            }
        }
    }

    fn head_forward(&self, z: Vec<f64>, dropout: Option<(u64, u64)>, tape: &mut Tape) -> (ForwardOutput, HeadCache) {
        let p = &self.params;
        let t = self.config.frames;
        let n = self.config.bottleneck_width();
        let (h, enc) = match &self.encoder {
            Some(e) => {
                let zin: Vec<f64> = z.iter().zip(&self.pe).map(|(a, b)| a + b).collect();
                let (h, c) = e.forward(p, &zin, dropout, tape);
                (h, Some(c))
            }
            None => (z.clone(), None),
        };
        let a = self.qa.forward(p, &h, t);
        let (pooled, pool) = self.pool.forward(p, &h, tape);
        let s = self.pred.forward(p, &pooled, 1);
        debug_assert_eq!(h.len(), t * n);
        let out = ForwardOutput {
            a,
            s: [s[0], s[1]],
            h: h.clone(),
        };
        (
            out,
            HeadCache {
                z,
                enc,
                h,
                pool,
                pooled,
            },
        )
    }

    /// Returns the gradient with respect to the bottleneck input `z`.
    fn head_backward(&self, c: &HeadCache, da: &[f64], ds: [f64; 2], g: &mut Grads) -> Vec<f64> {
        let p = &self.params;
        let t = self.config.frames;
        let dpooled = self.pred.backward(p, &c.pooled, 1, &ds, g);
        let mut dh = self.pool.backward(p, &c.h, &c.pool, &dpooled, g);
        let dh_qa = self.qa.backward(p, &c.h, t, da, g);
        dh.iter_mut().zip(dh_qa).for_each(|(a, b)| *a += b);
        match (&self.encoder, &c.enc) {
            (Some(e), Some(ec)) => e.backward(p, ec, &dh, g),
            _ => {
                debug_assert_eq!(c.z.len(), dh.len());
                dh
            }
        }
    }

    /// Forward pass over a batch. In training mode batch-norm statistics are shared
    /// across the batch.
    pub fn forward(&self, xs: &[&FeatureMatrix], mode: Mode) -> Result<Vec<ForwardOutput>> {
        Ok(self.forward_traced(xs, mode)?.0)
    }

    /// Forward pass that also reports every layer's output shape for the first
    /// utterance.
    pub fn forward_traced(&self, xs: &[&FeatureMatrix], mode: Mode) -> Result<(Vec<ForwardOutput>, ShapeTrace)> {
        let mut trace = ShapeTrace::new();
        let zs = self.bottleneck_traced(xs, mode, &mut Vec::new(), &mut trace, &mut Tape::Off)?;
        let n = self.config.bottleneck_width();
        let t = self.config.frames;
        trace.push(("flatten".into(), vec![t, n]));
        let mut outs = Vec::with_capacity(zs.len());
        for (i, z) in zs.into_iter().enumerate() {
            let (o, _) = self.head_forward(z, mode.dropout(i), &mut Tape::Off);
            outs.push(o);
        }
        if self.encoder.is_some() {
            trace.push(("attention".into(), vec![t, n]));
        }
        trace.push(("qa".into(), vec![outs[0].a.len() / 2, 2]));
        trace.push(("pooling".into(), vec![n]));
        trace.push(("prediction".into(), vec![2]));
        check_finite(&outs)?;
        Ok((outs, trace))
    }

    fn bottleneck_traced(
        &self,
        xs: &[&FeatureMatrix],
        mode: Mode,
        upd: &mut Vec<BnUpdate>,
        trace: &mut ShapeTrace,
        tape: &mut Tape,
    ) -> Result<Vec<Vec<f64>>> {
        let x = self.stack(xs)?;
        let (a, _) = self.backbone_forward(x, mode.is_train(), upd, trace, tape);
        Ok((0..a.b).map(|i| Self::flatten(&a, i)).collect())
    }

    /// Backbone output `Z` (`T × n`) for each utterance.
    pub fn bottleneck(&self, xs: &[&FeatureMatrix], mode: Mode) -> Result<Vec<Vec<f64>>> {
        self.bottleneck_traced(xs, mode, &mut Vec::new(), &mut ShapeTrace::new(), &mut Tape::Off)
    }

    fn head_loss(&self, zs: &[Vec<f64>], batch: &[Example], mode: Mode, tape: &mut Tape) -> Result<BatchLoss> {
        let mut parts = Vec::with_capacity(batch.len());
        for (i, (z, ex)) in zs.iter().zip(batch).enumerate() {
            let (o, _) = self.head_forward(z.clone(), mode.dropout(i), tape);
            parts.push(super::loss::total_loss(&o.a, o.s, ex.label, ex.target)?);
        }
        Ok(BatchLoss { parts })
    }

    /// Batch loss computed from precomputed backbone outputs.
    pub fn loss_from_bottleneck(&self, zs: &[Vec<f64>], batch: &[Example], mode: Mode) -> Result<BatchLoss> {
        self.head_loss(zs, batch, mode, &mut Tape::Off)
    }

    /// Mean joint loss of a batch without gradients.
    pub fn loss(&self, batch: &[Example], mode: Mode) -> Result<BatchLoss> {
        let xs: Vec<&FeatureMatrix> = batch.iter().map(|e| &e.features).collect();
        let zs = self.bottleneck(&xs, mode)?;
        self.loss_from_bottleneck(&zs, batch, mode)
    }

    fn tape_for(piece: Option<&Switches>) -> Tape {
        match piece {
            None => Tape::Record(Switches::default()),
            Some(sw) => Tape::replay(sw.clone()),
        }
    }

    /// Batch loss together with the non-smooth decisions taken on the way. With
    /// `piece` given, those decisions are replayed instead, so the result is the
    /// smooth piece of the loss on which the recording was made.
    pub fn loss_on_piece(&self, batch: &[Example], mode: Mode, piece: Option<&Switches>) -> Result<(BatchLoss, Switches)> {
        let xs: Vec<&FeatureMatrix> = batch.iter().map(|e| &e.features).collect();
        let mut tape = Self::tape_for(piece);
        let zs = self.bottleneck_traced(&xs, mode, &mut Vec::new(), &mut ShapeTrace::new(), &mut tape)?;
        let loss = self.head_loss(&zs, batch, mode, &mut tape)?;
        Ok((loss, tape.into_switches().unwrap_or_else(|| piece.cloned().unwrap_or_default())))
    }

    /// [`Model::loss_on_piece`] for the layers after the backbone only.
    pub fn head_loss_on_piece(
        &self,
        zs: &[Vec<f64>],
        batch: &[Example],
        mode: Mode,
        piece: Option<&Switches>,
    ) -> Result<(BatchLoss, Switches)> {
        let mut tape = Self::tape_for(piece);
        let loss = self.head_loss(zs, batch, mode, &mut tape)?;
        Ok((loss, tape.into_switches().unwrap_or_else(|| piece.cloned().unwrap_or_default())))
    }

    /// Mean joint loss of a batch and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[Example], mode: Mode) -> Result<StepOutput> {
        let xs: Vec<&FeatureMatrix> = batch.iter().map(|e| &e.features).collect();
        let x = self.stack(&xs)?;
        let mut bn_updates = Vec::new();
        let (a, bb) = self.backbone_forward(x, mode.is_train(), &mut bn_updates, &mut ShapeTrace::new(), &mut Tape::Off);
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.params.zeros_like();
        let (c, t, f) = bb.out_shape;
        let mut dact = Act::zeros(batch.len(), c, t, f);
        let mut parts = Vec::with_capacity(batch.len());
        for (i, ex) in batch.iter().enumerate() {
            if ex.label == Label::Fake && ex.target.is_none() {
                return Err(Error::invalid_input("fake utterance without a span target"));
            }
            let (o, hc) = self.head_forward(Self::flatten(&a, i), mode.dropout(i), &mut Tape::Off);
            let (af, mut ds) = af_loss_grad(o.s, ex.label.class_index());
            let (qa, mut da) = match (ex.label, ex.target) {
                (Label::Fake, Some(tg)) => {
                    let (l, g) = qa_loss_grad(&o.a, tg)?;
                    (Some(l), g)
                }
                _ => (None, vec![0.0; o.a.len()]),
            };
            let part = LossParts { qa, af };
            if !part.total().is_finite() {
                return Err(Error::Numerical(format!("non-finite loss for batch item {i}")));
            }
            parts.push(part);
            da.iter_mut().for_each(|v| *v *= scale);
            ds.iter_mut().for_each(|v| *v *= scale);
            let dz = self.head_backward(&hc, &da, ds, &mut grads);
            Self::unflatten(&dz, dact.sample_mut(i), c, t, f);
        }
        self.backbone_backward(&bb, dact, &mut grads);
        if !grads.all_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        Ok(StepOutput {
            loss: BatchLoss { parts },
            grads,
            bn_updates,
        })
    }

    /// Genuineness scores in evaluation mode.
    pub fn score(&self, xs: &[&FeatureMatrix]) -> Result<Vec<f64>> {
        Ok(self.forward(xs, Mode::Eval)?.iter().map(ForwardOutput::score).collect())
    }

    /// Names of the QA head's tensors.
    pub fn qa_param_names(&self) -> [&str; 2] {
        [self.params.name(self.qa.w), self.params.name(self.qa.b)]
    }

    /// Zero the output projections of the attention and feed-forward sublayers.
    pub fn zero_attention_outputs(&mut self) {
        if let Some(e) = &self.encoder {
            for id in [e.wo.w, e.wo.b, e.ff2.w, e.ff2.b] {
                self.params.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Per-head attention probabilities (`heads × T × T`) in evaluation mode.
    pub fn attention_probs(&self, x: &FeatureMatrix) -> Result<Option<Vec<f64>>> {
        let Some(e) = &self.encoder else { return Ok(None) };
        let z = self.bottleneck(&[x], Mode::Eval)?.remove(0);
        let zin: Vec<f64> = z.iter().zip(&self.pe).map(|(a, b)| a + b).collect();
        Ok(Some(e.forward(&self.params, &zin, None, &mut Tape::Off).1.probs))
    }

    /// Positional encoding added before the attention layer (empty without it).
    pub fn positional_encoding(&self) -> &[f64] {
        &self.pe
    }
}

fn check_finite(outs: &[ForwardOutput]) -> Result<()> {
    for o in outs {
        if !(o.a.iter().all(|v| v.is_finite()) && o.s.iter().all(|v| v.is_finite())) {
            return Err(Error::Numerical("non-finite network output".into()));
        }
    }
    Ok(())
}
