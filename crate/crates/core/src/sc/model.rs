//! Architecture, forward graphs, and training/evaluation entry points of the
//! semantic-communication classifier.
//!
//! The pipeline is `semantic encoder (conv stack) -> channel encoder (dense
//! to the length-L semantic vector) -> channel -> channel decoder ->
//! semantic decoder (logits)`. The activations of the last convolution layer
//! are kept around so the explainer can differentiate semantic features
//! against them.

use rand::Rng;

use super::channel::{channel_noise, ChannelSpec};
use crate::autograd::{Gradients, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::fl::LocalObjective;
use crate::params::{LayerSpec, Manifest, ParamVector};
use crate::rng::{self, stream};

/// One convolution layer: `kernels` square kernels of side `kernel_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernels: usize,
    pub kernel_size: usize,
    pub stride: usize,
}

/// Static shape of the whole pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SCArchitecture {
    /// Input image shape `[C, H, W]`.
    pub image: [usize; 3],
    /// Semantic-encoder convolution stack.
    pub conv: Vec<ConvSpec>,
    /// Length L of the transmitted semantic vector.
    pub semantic_dim: usize,
    /// Hidden widths of the decoder between channel output and logits.
    pub decoder_hidden: Vec<usize>,
    /// Number of classes M.
    pub classes: usize,
    /// Negative slope of every activation in the network.
    pub activation_slope: f64,
}

impl SCArchitecture {
    /// The desk-scale default: two conv layers, a 16-dim semantic vector,
    /// one hidden decoder layer.
    pub fn desk_scale(image_side: usize, classes: usize) -> Self {
        Self {
            image: [1, image_side, image_side],
            conv: vec![
                ConvSpec {
                    kernels: 8,
                    kernel_size: 3,
                    stride: 1,
                },
                ConvSpec {
                    kernels: 16,
                    kernel_size: 3,
                    stride: 1,
                },
            ],
            semantic_dim: 16,
            decoder_hidden: vec![32],
            classes,
            activation_slope: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [c, h, w] = self.image;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidParameter("image shape has a zero dim".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.semantic_dim == 0 || self.semantic_dim >= c * h * w {
            return Err(Error::InvalidParameter(format!(
                "semantic dim {} must lie in [1, {}) for compression",
                self.semantic_dim,
                c * h * w
            )));
        }
        if !(self.activation_slope > 0.0 && self.activation_slope < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "activation slope must lie in (0,1), got {}",
                self.activation_slope
            )));
        }
        if self.decoder_hidden.contains(&0) {
            return Err(Error::InvalidParameter("zero-width decoder layer".into()));
        }
        self.conv_shapes()?;
        Ok(())
    }

    /// Output shape `[K, h, w]` of each conv layer in order.
    pub fn conv_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shapes = Vec::with_capacity(self.conv.len());
        let [_, mut h, mut w] = self.image;
        for (i, spec) in self.conv.iter().enumerate() {
            if spec.kernels == 0 || spec.kernel_size == 0 || spec.stride == 0 {
                return Err(Error::InvalidParameter(format!(
                    "conv layer {i} has a zero field"
                )));
            }
            if spec.kernel_size > h || spec.kernel_size > w {
                return Err(Error::Dimension(format!(
                    "conv layer {i}: kernel {} exceeds input {h}x{w}",
                    spec.kernel_size
                )));
            }
            h = (h - spec.kernel_size) / spec.stride + 1;
            w = (w - spec.kernel_size) / spec.stride + 1;
            shapes.push([spec.kernels, h, w]);
        }
        Ok(shapes)
    }

    /// Shape of the retained feature maps (last conv output), if any.
    pub fn feature_map_shape(&self) -> Option<[usize; 3]> {
        self.conv_shapes().ok()?.last().copied()
    }

    /// Flat length entering the channel encoder.
    pub fn encoder_flat_len(&self) -> usize {
        match self.feature_map_shape() {
            Some([c, h, w]) => c * h * w,
            None => self.image.iter().product(),
        }
    }

    /// Layer layout in flat-parameter order.
    pub fn manifest(&self) -> Manifest {
        let mut layers = Vec::new();
        let mut prev_c = self.image[0];
        for (i, spec) in self.conv.iter().enumerate() {
            layers.push(LayerSpec::new(
                format!("sem_enc.conv{i}.kernels"),
                vec![spec.kernels, prev_c, spec.kernel_size, spec.kernel_size],
            ));
            prev_c = spec.kernels;
        }
        let flat = self.encoder_flat_len();
        layers.push(LayerSpec::new(
            "chan_enc.weight",
            vec![self.semantic_dim, flat],
        ));
        layers.push(LayerSpec::new("chan_enc.bias", vec![self.semantic_dim]));
        let mut prev = self.semantic_dim;
        for (i, &width) in self.decoder_hidden.iter().enumerate() {
            let base = if i == 0 {
                "chan_dec".to_string()
            } else {
                format!("sem_dec.hidden{i}")
            };
            layers.push(LayerSpec::new(format!("{base}.weight"), vec![width, prev]));
            layers.push(LayerSpec::new(format!("{base}.bias"), vec![width]));
            prev = width;
        }
        layers.push(LayerSpec::new("sem_dec.out.weight", vec![self.classes, prev]));
        layers.push(LayerSpec::new("sem_dec.out.bias", vec![self.classes]));
        Manifest::new(layers)
    }
}

/// The length-L vector that crosses the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticVector {
    pub values: Vec<f64>,
}

/// Activations of the last convolution layer, shape `[K, h, w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet {
    pub maps: Tensor,
}

/// Xavier-uniform weights, zero biases, seeded and layer-ordered.
pub fn init_params(arch: &SCArchitecture, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let manifest = arch.manifest();
    let mut rng = rng::chacha(&[seed, stream::MODEL_INIT]);
    let mut values = vec![0.0; manifest.total()];
    for (idx, layer) in manifest.layers().iter().enumerate() {
        let range = manifest.range(idx);
        let fan = match layer.shape.len() {
            // Dense [out, in].
            2 => (layer.shape[1], layer.shape[0]),
            // Conv [K, C, kh, kw].
            4 => (
                layer.shape[1] * layer.shape[2] * layer.shape[3],
                layer.shape[0] * layer.shape[2] * layer.shape[3],
            ),
            // Bias stays zero.
            _ => continue,
        };
        let limit = (6.0 / (fan.0 + fan.1) as f64).sqrt();
        for v in &mut values[range] {
            *v = rng.gen_range(-limit..limit);
        }
    }
    ParamVector::new(manifest, values, 0)
}

/// Tape nodes of the bound parameters, aligned with the manifest.
pub struct ParamNodes {
    pub ids: Vec<NodeId>,
}

/// Nodes of one encoded sample.
pub struct EncodedNodes {
    pub input: NodeId,
    pub semantic: NodeId,
    pub feature_maps: Option<NodeId>,
}

/// Put every parameter layer on the tape as a leaf.
pub fn bind_params(
    tape: &mut Tape,
    params: &ParamVector,
) -> Result<ParamNodes> {
    let mut ids = Vec::with_capacity(params.manifest.len());
    for (idx, layer) in params.manifest.layers().iter().enumerate() {
        let tensor = Tensor::new(layer.shape.clone(), params.layer(idx).to_vec())?;
        ids.push(tape.leaf(tensor));
    }
    Ok(ParamNodes { ids })
}

fn check_input(arch: &SCArchitecture, x: &Tensor) -> Result<()> {
    if x.shape() != arch.image {
        return Err(Error::Dimension(format!(
            "input shape {:?} does not match architecture image {:?}",
            x.shape(),
            arch.image
        )));
    }
    Ok(())
}

/// Build the encoder graph for one input; returns the semantic vector node
/// and the retained last-conv activation node.
pub fn encoder_forward(
    tape: &mut Tape,
    arch: &SCArchitecture,
    nodes: &ParamNodes,
    x: &Tensor,
) -> Result<EncodedNodes> {
    check_input(arch, x)?;
    let input = tape.leaf(x.clone());
    let mut cur = input;
    let mut feature_maps = None;
    for (i, spec) in arch.conv.iter().enumerate() {
        let conv = tape.conv2d(cur, nodes.ids[i], spec.stride)?;
        cur = tape.leaky_relu(conv, arch.activation_slope)?;
        feature_maps = Some(cur);
    }
    let flat = tape.reshape(cur, vec![arch.encoder_flat_len()])?;
    let w_idx = arch.conv.len();
    let semantic = tape.dense(flat, nodes.ids[w_idx], nodes.ids[w_idx + 1])?;
    Ok(EncodedNodes {
        input,
        semantic,
        feature_maps,
    })
}

/// Build the decoder graph from a received-vector node to logits.
pub fn decoder_forward(
    tape: &mut Tape,
    arch: &SCArchitecture,
    nodes: &ParamNodes,
    received: NodeId,
) -> Result<NodeId> {
    let mut cur = received;
    let mut idx = arch.conv.len() + 2;
    for _ in &arch.decoder_hidden {
        cur = tape.dense(cur, nodes.ids[idx], nodes.ids[idx + 1])?;
        cur = tape.leaky_relu(cur, arch.activation_slope)?;
        idx += 2;
    }
    tape.dense(cur, nodes.ids[idx], nodes.ids[idx + 1])
}

/// Full per-sample graph: encode, cross the channel, decode, CE loss.
#[allow(clippy::too_many_arguments)]
fn build_sample_loss(
    tape: &mut Tape,
    arch: &SCArchitecture,
    nodes: &ParamNodes,
    x: &Tensor,
    label: usize,
    chan: &ChannelSpec,
    noise_seed: u64,
) -> Result<(NodeId, EncodedNodes)> {
    let encoded = encoder_forward(tape, arch, nodes, x)?;
    let noise = channel_noise(arch.semantic_dim, chan.noise_std, noise_seed);
    let received = tape.affine(encoded.semantic, chan.gain, &noise)?;
    let logits = decoder_forward(tape, arch, nodes, received)?;
    let loss = tape.softmax_cross_entropy(logits, label)?;
    Ok((loss, encoded))
}

/// Encode one input: semantic vector plus retained feature maps.
pub fn encode(
    arch: &SCArchitecture,
    params: &ParamVector,
    x: &Tensor,
) -> Result<(SemanticVector, Option<FeatureMapSet>)> {
    let mut tape = Tape::new();
    let nodes = bind_params(&mut tape, params)?;
    let encoded = encoder_forward(&mut tape, arch, &nodes, x)?;
    let semantic = SemanticVector {
        values: tape.value(encoded.semantic).data().to_vec(),
    };
    let maps = encoded.feature_maps.map(|id| FeatureMapSet {
        maps: tape.value(id).clone(),
    });
    Ok((semantic, maps))
}

/// Decode a received semantic vector into class logits.
pub fn decode(arch: &SCArchitecture, params: &ParamVector, y: &SemanticVector) -> Result<Vec<f64>> {
    if y.values.len() != arch.semantic_dim {
        return Err(Error::Dimension(format!(
            "received vector length {} != semantic dim {}",
            y.values.len(),
            arch.semantic_dim
        )));
    }
    let mut tape = Tape::new();
    let nodes = bind_params(&mut tape, params)?;
    let received = tape.leaf(Tensor::from_vec(y.values.clone()));
    let logits = decoder_forward(&mut tape, arch, &nodes, received)?;
    Ok(tape.value(logits).data().to_vec())
}

/// Cross-entropy loss of one sample through encoder, channel, decoder.
pub fn forward_loss(
    arch: &SCArchitecture,
    params: &ParamVector,
    x: &Tensor,
    label: usize,
    chan: &ChannelSpec,
    seed: u64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes = bind_params(&mut tape, params)?;
    let (loss, _) = build_sample_loss(&mut tape, arch, &nodes, x, label, chan, seed)?;
    Ok(tape.value(loss).item())
}

/// Flatten per-layer gradients into manifest order; absent layers are zero.
fn collect_flat_grads(
    grads: &Gradients,
    nodes: &ParamNodes,
    manifest: &Manifest,
) -> Vec<f64> {
    let mut flat = vec![0.0; manifest.total()];
    for (idx, &id) in nodes.ids.iter().enumerate() {
        if let Some(g) = grads.wrt(id) {
            flat[manifest.range(idx)].copy_from_slice(g.data());
        }
    }
    flat
}

/// Loss and flat gradient of one sample.
pub fn forward_loss_grad(
    arch: &SCArchitecture,
    params: &ParamVector,
    x: &Tensor,
    label: usize,
    chan: &ChannelSpec,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let nodes = bind_params(&mut tape, params)?;
    let (loss, _) = build_sample_loss(&mut tape, arch, &nodes, x, label, chan, seed)?;
    let grads = tape.backward(loss)?;
    let flat = collect_flat_grads(&grads, &nodes, &params.manifest);
    Ok((tape.value(loss).item(), flat))
}

/// Gradients keyed by layer name; one entry per trainable layer.
pub fn named_param_grads(
    arch: &SCArchitecture,
    params: &ParamVector,
    x: &Tensor,
    label: usize,
    chan: &ChannelSpec,
    seed: u64,
) -> Result<Vec<(String, Tensor)>> {
    let mut tape = Tape::new();
    let nodes = bind_params(&mut tape, params)?;
    let (loss, _) = build_sample_loss(&mut tape, arch, &nodes, x, label, chan, seed)?;
    let grads = tape.backward(loss)?;
    let mut out = Vec::with_capacity(params.manifest.len());
    for (idx, layer) in params.manifest.layers().iter().enumerate() {
        let g = grads
            .wrt(nodes.ids[idx])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(layer.shape.clone()));
        out.push((layer.name.clone(), g));
    }
    Ok(out)
}

/// Predicted class (argmax of logits, lowest index on ties) and the logits.
pub fn predict(
    arch: &SCArchitecture,
    params: &ParamVector,
    x: &Tensor,
    chan: &ChannelSpec,
    seed: u64,
) -> Result<(usize, Vec<f64>)> {
    let (semantic, _) = encode(arch, params, x)?;
    let received = super::channel::transmit(&semantic, chan, seed);
    let logits = decode(arch, params, &received)?;
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    Ok((best, logits))
}

/// A device-local training objective over an image/label dataset.
pub struct SCObjective<'a> {
    pub arch: &'a SCArchitecture,
    pub samples: &'a [Tensor],
    pub labels: &'a [usize],
    pub chan: ChannelSpec,
}

impl LocalObjective for SCObjective<'_> {
    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn batch_loss_grad(
        &self,
        params: &ParamVector,
        idxs: &[usize],
        noise_seeds: &[u64],
    ) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let nodes = bind_params(&mut tape, params)?;
        let mut losses = Vec::with_capacity(idxs.len());
        for (&i, &seed) in idxs.iter().zip(noise_seeds) {
            let (loss, _) = build_sample_loss(
                &mut tape,
                self.arch,
                &nodes,
                &self.samples[i],
                self.labels[i],
                &self.chan,
                seed,
            )?;
            losses.push(loss);
        }
        let mean = tape.mean_stack(&losses)?;
        let grads = tape.backward(mean)?;
        let flat = collect_flat_grads(&grads, &nodes, &params.manifest);
        Ok((tape.value(mean).item(), flat))
    }

    fn sample_loss_grad(
        &self,
        params: &ParamVector,
        idx: usize,
        noise_seed: u64,
    ) -> Result<(f64, Vec<f64>)> {
        forward_loss_grad(
            self.arch,
            params,
            &self.samples[idx],
            self.labels[idx],
            &self.chan,
            noise_seed,
        )
    }

    fn squared_grad_mean(&self, params: &ParamVector, noise_seeds: &[u64]) -> Result<Vec<f64>> {
        // Shared tape per chunk: parameters are bound once, each sample gets
        // its own loss root and its own backward sweep.
        let mut acc = vec![0.0; params.len()];
        let mut idx = 0;
        for seeds in noise_seeds.chunks(16) {
            let mut tape = Tape::new();
            let nodes = bind_params(&mut tape, params)?;
            let mut roots = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let (loss, _) = build_sample_loss(
                    &mut tape,
                    self.arch,
                    &nodes,
                    &self.samples[idx],
                    self.labels[idx],
                    &self.chan,
                    seed,
                )?;
                roots.push(loss);
                idx += 1;
            }
            for root in roots {
                let grads = tape.backward(root)?;
                for (layer_idx, &id) in nodes.ids.iter().enumerate() {
                    if let Some(g) = grads.wrt(id) {
                        let range = params.manifest.range(layer_idx);
                        for (a, gv) in acc[range].iter_mut().zip(g.data()) {
                            *a += gv * gv;
                        }
                    }
                }
            }
        }
        let inv = 1.0 / noise_seeds.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        Ok(acc)
    }
}
