//! The multimodal network: one MLP encoder per modality, late fusion by
//! concatenation or summation, and a single linear classifier on top,
//! trained with one joint cross-entropy loss (optionally plus per-modality
//! unimodal losses).
//!
//! Each encoder is a fixed 2-hidden-layer ReLU MLP with configurable widths.
//! Per-modality predictions are obtained by zeroing every other modality's
//! contribution to the fused feature vector and re-applying the classifier;
//! for concatenation fusion this coincides with the partitioned-weight
//! product `W_m·φ_m(x) + b` with the full bias retained.

mod checkpoint;

pub use checkpoint::Checkpoint;

use crate::error::{Error, Result};
use crate::numerics::{
    linear_backward, linear_forward, norm_sq, relu, relu_backward, softmax_cross_entropy, RngState,
    Tensor,
};

/// How per-modality features are combined before the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Concat,
    Sum,
}

impl Fusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::Concat => "concat",
            Fusion::Sum => "sum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(Fusion::Concat),
            "sum" => Ok(Fusion::Sum),
            other => Err(Error::Config(format!("unknown fusion kind `{other}`"))),
        }
    }
}

/// Architecture hyperparameters shared by all encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Widths of the two hidden layers.
    pub hidden: [usize; 2],
    /// Encoder output dimension (identical across modalities).
    pub embed_dim: usize,
    pub fusion: Fusion,
    pub classes: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.embed_dim == 0 {
            return Err(Error::Config("hidden widths and embed_dim must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        Ok(())
    }
}

/// One dense layer: `w: [in, out]`, `b: [out]`. Also reused as the gradient
/// container, which mirrors the parameter layout exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    fn zeros_like(other: &Linear) -> Linear {
        Linear {
            w: Tensor::zeros(other.w.shape().to_vec()),
            b: Tensor::zeros(other.b.shape().to_vec()),
        }
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// All trainable parameters. The version counter advances on every SGD step
/// so stale forward traces can be rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub(crate) encoders: Vec<Vec<Linear>>,
    pub(crate) classifier: Linear,
    fusion: Fusion,
    classes: usize,
    version: u64,
}

impl ModelParams {
    /// Initialize for the given per-modality input dimensions. Every weight
    /// and bias draws uniformly from `±1/√fan_in`, in a fixed order (encoder
    /// by encoder, layer by layer, weights row-major then bias; classifier
    /// last), so a given init stream always produces the same model.
    pub fn init(cfg: &ModelConfig, input_dims: &[usize], rng: &mut RngState) -> Result<Self> {
        cfg.validate()?;
        if input_dims.is_empty() {
            return Err(Error::Config("at least one modality required".into()));
        }
        let mut draw_layer = |fan_in: usize, fan_out: usize| -> Linear {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            let b = (0..fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            Linear {
                w: Tensor::matrix(fan_in, fan_out, w).expect("init weight"),
                b: Tensor::vector(b).expect("init bias"),
            }
        };
        let mut encoders = Vec::with_capacity(input_dims.len());
        for &dim in input_dims {
            let sizes = [dim, cfg.hidden[0], cfg.hidden[1], cfg.embed_dim];
            let layers = sizes.windows(2).map(|io| draw_layer(io[0], io[1])).collect();
            encoders.push(layers);
        }
        let fused_dim = match cfg.fusion {
            Fusion::Concat => cfg.embed_dim * input_dims.len(),
            Fusion::Sum => cfg.embed_dim,
        };
        let classifier = draw_layer(fused_dim, cfg.classes);
        Ok(ModelParams {
            encoders,
            classifier,
            fusion: cfg.fusion,
            classes: cfg.classes,
            version: 0,
        })
    }

    pub(crate) fn from_parts(encoders: Vec<Vec<Linear>>, classifier: Linear, fusion: Fusion, classes: usize) -> Self {
        ModelParams { encoders, classifier, fusion, classes, version: 0 }
    }

    pub fn n_modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    pub fn embed_dim(&self) -> usize {
        self.encoders[0].last().expect("encoder has layers").w.cols()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.encoders.iter().map(|layers| layers[0].w.rows()).collect()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn encoder_param_count(&self, m: usize) -> usize {
        self.encoders[m].iter().map(Linear::param_count).sum()
    }

    /// Flatten encoder `m`'s parameters: layers in order, weights row-major,
    /// then bias. This order is shared with [`GradSet::flatten_encoder`] and
    /// the snapshot store.
    pub fn flatten_encoder(&self, m: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoder_param_count(m));
        for layer in &self.encoders[m] {
            out.extend_from_slice(layer.w.data());
            out.extend_from_slice(layer.b.data());
        }
        out
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let enc: usize = (0..self.encoders.len()).map(|m| self.encoder_param_count(m)).sum();
        enc + self.classifier.param_count()
    }

    fn locate(&self, mut i: usize) -> (Option<(usize, usize)>, bool, usize) {
        // ((encoder, layer) or None for classifier, is_weight, inner index)
        for (m, layers) in self.encoders.iter().enumerate() {
            for (l, layer) in layers.iter().enumerate() {
                if i < layer.w.len() {
                    return (Some((m, l)), true, i);
                }
                i -= layer.w.len();
                if i < layer.b.len() {
                    return (Some((m, l)), false, i);
                }
                i -= layer.b.len();
            }
        }
        if i < self.classifier.w.len() {
            return (None, true, i);
        }
        (None, false, i - self.classifier.w.len())
    }

    /// Read one parameter by flat index (encoder-major order, classifier last).
    pub fn param_get(&self, i: usize) -> f64 {
        match self.locate(i) {
            (Some((m, l)), true, j) => self.encoders[m][l].w.data()[j],
            (Some((m, l)), false, j) => self.encoders[m][l].b.data()[j],
            (None, true, j) => self.classifier.w.data()[j],
            (None, false, j) => self.classifier.b.data()[j],
        }
    }

    /// Write one parameter by flat index. Intended for finite-difference
    /// probing; does not advance the version counter.
    pub fn param_set(&mut self, i: usize, v: f64) {
        match self.locate(i) {
            (Some((m, l)), true, j) => self.encoders[m][l].w.data_mut()[j] = v,
            (Some((m, l)), false, j) => self.encoders[m][l].b.data_mut()[j] = v,
            (None, true, j) => self.classifier.w.data_mut()[j] = v,
            (None, false, j) => self.classifier.b.data_mut()[j] = v,
        }
    }

    fn fused_dim(&self) -> usize {
        match self.fusion {
            Fusion::Concat => self.embed_dim() * self.n_modalities(),
            Fusion::Sum => self.embed_dim(),
        }
    }
}

struct EncoderTrace {
    /// Input to each linear layer.
    layer_inputs: Vec<Tensor>,
    /// Pre-activation of each hidden layer (for the ReLU mask).
    pre_acts: Vec<Tensor>,
    features: Tensor,
}

/// Cached intermediates from one forward pass, tied to the parameter version
/// that produced them.
pub struct ForwardTrace {
    enc: Vec<EncoderTrace>,
    fused: Tensor,
    logits: Tensor,
    version: u64,
    batch_rows: usize,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn batch_rows(&self) -> usize {
        self.batch_rows
    }
}

/// Weights of the loss terms backward differentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub joint: f64,
    pub unimodal: f64,
}

impl LossWeights {
    pub fn joint_only() -> Self {
        LossWeights { joint: 1.0, unimodal: 0.0 }
    }
}

/// Loss values from one batch. Unimodal cross-entropies are always reported,
/// whether or not they were given gradient weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub joint: f64,
    pub unimodal: Vec<f64>,
    /// The differentiated objective: `joint_w·joint + uni_w·Σ_m unimodal_m`.
    pub total: f64,
}

/// Gradients mirroring [`ModelParams`], plus per-modality squared norms of
/// the flattened encoder gradients.
#[derive(Debug, Clone)]
pub struct GradSet {
    pub encoders: Vec<Vec<Linear>>,
    pub classifier: Linear,
    pub encoder_norm_sq: Vec<f64>,
}

impl GradSet {
    fn zeros_like(params: &ModelParams) -> GradSet {
        GradSet {
            encoders: params
                .encoders
                .iter()
                .map(|layers| layers.iter().map(Linear::zeros_like).collect())
                .collect(),
            classifier: Linear::zeros_like(&params.classifier),
            encoder_norm_sq: vec![0.0; params.encoders.len()],
        }
    }

    /// Flattened encoder gradient in the shared layer order.
    pub fn flatten_encoder(&self, m: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.encoders[m] {
            out.extend_from_slice(layer.w.data());
            out.extend_from_slice(layer.b.data());
        }
        out
    }

    /// Flatten everything in the order used by [`ModelParams::param_get`].
    pub fn flatten_all(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layers in &self.encoders {
            for layer in layers {
                out.extend_from_slice(layer.w.data());
                out.extend_from_slice(layer.b.data());
            }
        }
        out.extend_from_slice(self.classifier.w.data());
        out.extend_from_slice(self.classifier.b.data());
        out
    }

    /// Scatter-add a flat vector onto encoder `m`'s gradients.
    pub fn add_flat_to_encoder(&mut self, m: usize, flat: &[f64]) -> Result<()> {
        let need: usize = self.encoders[m].iter().map(Linear::param_count).sum();
        if flat.len() != need {
            return Err(Error::Contract(format!(
                "flat gradient len {} != encoder {m} param count {need}",
                flat.len()
            )));
        }
        let mut off = 0;
        for layer in &mut self.encoders[m] {
            for v in layer.w.data_mut() {
                *v += flat[off];
                off += 1;
            }
            for v in layer.b.data_mut() {
                *v += flat[off];
                off += 1;
            }
        }
        // The cached norm describes the gradients, so refresh it after mutation.
        self.encoder_norm_sq[m] = norm_sq(&self.flatten_encoder(m));
        Ok(())
    }

    /// Squared norm over every gradient entry (encoders and classifier).
    pub fn total_norm_sq(&self) -> f64 {
        let enc: f64 = self
            .encoders
            .iter()
            .flatten()
            .map(|l| norm_sq(l.w.data()) + norm_sq(l.b.data()))
            .sum();
        enc + norm_sq(self.classifier.w.data()) + norm_sq(self.classifier.b.data())
    }

    pub fn is_finite(&self) -> bool {
        self.encoders
            .iter()
            .flatten()
            .all(|l| l.w.is_finite() && l.b.is_finite())
            && self.classifier.w.is_finite()
            && self.classifier.b.is_finite()
    }
}

fn encoder_forward(layers: &[Linear], input: &Tensor) -> Result<EncoderTrace> {
    let mut layer_inputs = Vec::with_capacity(layers.len());
    let mut pre_acts = Vec::with_capacity(layers.len().saturating_sub(1));
    let mut x = input.clone();
    for (i, layer) in layers.iter().enumerate() {
        layer_inputs.push(x.clone());
        let z = linear_forward(&x, &layer.w, &layer.b)?;
        if i + 1 < layers.len() {
            pre_acts.push(z.clone());
            x = relu(&z);
        } else {
            x = z;
        }
    }
    Ok(EncoderTrace { layer_inputs, pre_acts, features: x })
}

/// Backprop `upstream` (gradient on the encoder features) through one
/// encoder, accumulating layer gradients into `grads`.
fn encoder_backward(
    layers: &[Linear],
    trace: &EncoderTrace,
    upstream: Tensor,
    grads: &mut [Linear],
) -> Result<()> {
    let mut g = upstream;
    for i in (0..layers.len()).rev() {
        let (gx, gw, gb) = linear_backward(&g, &trace.layer_inputs[i], &layers[i].w)?;
        accumulate(&mut grads[i].w, &gw);
        accumulate(&mut grads[i].b, &gb);
        if i > 0 {
            g = relu_backward(&gx, &trace.pre_acts[i - 1])?;
        }
    }
    Ok(())
}

fn accumulate(into: &mut Tensor, from: &Tensor) {
    debug_assert_eq!(into.shape(), from.shape());
    for (a, b) in into.data_mut().iter_mut().zip(from.data()) {
        *a += b;
    }
}

fn fuse(params: &ModelParams, features: &[&Tensor]) -> Result<Tensor> {
    let n = features[0].rows();
    let e = params.embed_dim();
    match params.fusion {
        Fusion::Concat => {
            let fused_dim = e * features.len();
            let mut data = vec![0.0; n * fused_dim];
            for (m, feat) in features.iter().enumerate() {
                for i in 0..n {
                    let dst = i * fused_dim + m * e;
                    data[dst..dst + e].copy_from_slice(feat.row(i));
                }
            }
            Tensor::matrix(n, fused_dim, data)
        }
        Fusion::Sum => {
            let mut data = vec![0.0; n * e];
            for feat in features {
                for (a, b) in data.iter_mut().zip(feat.data()) {
                    *a += b;
                }
            }
            Tensor::matrix(n, e, data)
        }
    }
}

/// Fused feature vector with every modality except `m` zeroed.
fn zerofused(params: &ModelParams, feature_m: &Tensor, m: usize) -> Result<Tensor> {
    let n = feature_m.rows();
    let e = params.embed_dim();
    match params.fusion {
        Fusion::Concat => {
            let fused_dim = params.fused_dim();
            let mut data = vec![0.0; n * fused_dim];
            for i in 0..n {
                let dst = i * fused_dim + m * e;
                data[dst..dst + e].copy_from_slice(feature_m.row(i));
            }
            Tensor::matrix(n, fused_dim, data)
        }
        Fusion::Sum => Ok(feature_m.clone()),
    }
}

/// Run the network on one batch (one tensor per modality, aligned rows).
pub fn forward(params: &ModelParams, batch: &[Tensor]) -> Result<(Tensor, ForwardTrace)> {
    if batch.len() != params.n_modalities() {
        return Err(Error::Dim(format!(
            "{} modalities in batch, model has {}",
            batch.len(),
            params.n_modalities()
        )));
    }
    let n = batch[0].rows();
    for (m, feats) in batch.iter().enumerate() {
        if feats.rows() != n {
            return Err(Error::Dim(format!("modality {m} batch rows differ")));
        }
        if feats.cols() != params.encoders[m][0].w.rows() {
            return Err(Error::Dim(format!(
                "modality {m}: input dim {} != encoder fan-in {}",
                feats.cols(),
                params.encoders[m][0].w.rows()
            )));
        }
    }
    let enc: Vec<EncoderTrace> = params
        .encoders
        .iter()
        .zip(batch)
        .map(|(layers, x)| encoder_forward(layers, x))
        .collect::<Result<_>>()?;
    let feats: Vec<&Tensor> = enc.iter().map(|t| &t.features).collect();
    let fused = fuse(params, &feats)?;
    let logits = linear_forward(&fused, &params.classifier.w, &params.classifier.b)?;
    let trace = ForwardTrace {
        enc,
        fused,
        logits: logits.clone(),
        version: params.version,
        batch_rows: n,
    };
    Ok((logits, trace))
}

/// Per-modality logits from cached features: all other modalities' fused
/// contributions are zeroed and the classifier (with full bias) re-applied.
pub fn unimodal_logits_from_trace(params: &ModelParams, trace: &ForwardTrace, m: usize) -> Result<Tensor> {
    if m >= params.n_modalities() {
        return Err(Error::Input(format!("modality index {m} out of range")));
    }
    if trace.version != params.version {
        return Err(Error::Contract("forward trace is stale".into()));
    }
    let zf = zerofused(params, &trace.enc[m].features, m)?;
    linear_forward(&zf, &params.classifier.w, &params.classifier.b)
}

/// Per-modality logits computed from scratch for one batch.
pub fn unimodal_logits(params: &ModelParams, batch: &[Tensor], m: usize) -> Result<Tensor> {
    let (_, trace) = forward(params, batch)?;
    unimodal_logits_from_trace(params, &trace, m)
}

/// Gradients of `joint_w·L_joint + uni_w·Σ_m L_unimodal_m` for the batch the
/// trace was computed on. Unimodal loss values are always reported; their
/// gradients only contribute when `uni_w != 0`.
pub fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    labels: &[usize],
    weights: &LossWeights,
) -> Result<(LossBreakdown, GradSet)> {
    if trace.version != params.version {
        return Err(Error::Contract(
            "forward trace is stale; rerun forward after updating parameters".into(),
        ));
    }
    if labels.len() != trace.batch_rows {
        return Err(Error::Dim(format!(
            "{} labels for a {}-row trace",
            labels.len(),
            trace.batch_rows
        )));
    }
    let m_count = params.n_modalities();
    let mut grads = GradSet::zeros_like(params);
    // Gradient w.r.t. each modality's encoder features.
    let mut gfeat: Vec<Tensor> = (0..m_count)
        .map(|m| Tensor::zeros(trace.enc[m].features.shape().to_vec()))
        .collect();

    // Joint path.
    let (joint_loss, glogits) = softmax_cross_entropy(&trace.logits, labels)?;
    if weights.joint != 0.0 {
        let scaled = scale(&glogits, weights.joint);
        let (gfused, gw, gb) = linear_backward(&scaled, &trace.fused, &params.classifier.w)?;
        accumulate(&mut grads.classifier.w, &gw);
        accumulate(&mut grads.classifier.b, &gb);
        let e = params.embed_dim();
        match params.fusion {
            Fusion::Concat => {
                for (m, gf) in gfeat.iter_mut().enumerate() {
                    for i in 0..trace.batch_rows {
                        let src = &gfused.row(i)[m * e..(m + 1) * e];
                        let dst = &mut gf.data_mut()[i * e..(i + 1) * e];
                        for (a, b) in dst.iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
            }
            Fusion::Sum => {
                for gf in gfeat.iter_mut() {
                    accumulate(gf, &gfused);
                }
            }
        }
    }

    // Unimodal paths: loss values always, gradients only when weighted.
    let mut uni_losses = Vec::with_capacity(m_count);
    for (m, gf) in gfeat.iter_mut().enumerate() {
        let zf = zerofused(params, &trace.enc[m].features, m)?;
        let uni_logits = linear_forward(&zf, &params.classifier.w, &params.classifier.b)?;
        let (uni_loss, guni) = softmax_cross_entropy(&uni_logits, labels)?;
        uni_losses.push(uni_loss);
        if weights.unimodal != 0.0 {
            let scaled = scale(&guni, weights.unimodal);
            let (gzf, gw, gb) = linear_backward(&scaled, &zf, &params.classifier.w)?;
            accumulate(&mut grads.classifier.w, &gw);
            accumulate(&mut grads.classifier.b, &gb);
            let e = params.embed_dim();
            match params.fusion {
                Fusion::Concat => {
                    let fd = params.fused_dim();
                    for i in 0..trace.batch_rows {
                        let src = &gzf.data()[i * fd + m * e..i * fd + (m + 1) * e];
                        let dst = &mut gf.data_mut()[i * e..(i + 1) * e];
                        for (a, b) in dst.iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
                Fusion::Sum => accumulate(gf, &gzf),
            }
        }
    }

    // Encoder backprop with the combined feature gradients.
    for m in 0..m_count {
        let upstream = std::mem::replace(&mut gfeat[m], Tensor::zeros(vec![1]));
        encoder_backward(&params.encoders[m], &trace.enc[m], upstream, &mut grads.encoders[m])?;
        grads.encoder_norm_sq[m] = grads.encoders[m]
            .iter()
            .map(|l| norm_sq(l.w.data()) + norm_sq(l.b.data()))
            .sum();
    }

    let total = weights.joint * joint_loss + weights.unimodal * uni_losses.iter().sum::<f64>();
    Ok((LossBreakdown { joint: joint_loss, unimodal: uni_losses, total }, grads))
}

fn scale(t: &Tensor, c: f64) -> Tensor {
    let data = t.data().iter().map(|v| v * c).collect();
    Tensor::new(t.shape().to_vec(), data).expect("scale preserves shape")
}

/// Forward-only task loss for the given weights. Useful as an objective for
/// finite-difference probing since it never touches the gradient path.
pub fn task_loss(
    params: &ModelParams,
    batch: &[Tensor],
    labels: &[usize],
    weights: &LossWeights,
) -> Result<f64> {
    let (logits, trace) = forward(params, batch)?;
    let (joint, _) = softmax_cross_entropy(&logits, labels)?;
    let mut total = weights.joint * joint;
    if weights.unimodal != 0.0 {
        for m in 0..params.n_modalities() {
            let uni = unimodal_logits_from_trace(params, &trace, m)?;
            total += weights.unimodal * softmax_cross_entropy(&uni, labels)?.0;
        }
    }
    Ok(total)
}

/// Accuracy of full logits and of each modality's zeroed-fusion logits.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub overall: f64,
    pub per_modality: Vec<f64>,
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let n = logits.rows();
    let correct = (0..n).filter(|&i| argmax_row(logits.row(i)) == labels[i]).count();
    correct as f64 / n as f64
}

/// Overall and per-modality accuracy on a full dataset.
pub fn evaluate(params: &ModelParams, ds: &crate::datagen::MultimodalDataset) -> Result<EvalResult> {
    if ds.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    let (batch, labels) = ds.gather(&all);
    let (logits, trace) = forward(params, &batch)?;
    let overall = accuracy(&logits, &labels);
    let per_modality = (0..params.n_modalities())
        .map(|m| Ok(accuracy(&unimodal_logits_from_trace(params, &trace, m)?, &labels)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalResult { overall, per_modality })
}
