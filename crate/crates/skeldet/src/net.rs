//! The detector network: a configurable convolutional backbone with
//! single-shot detection heads (5×1 convolutions) attached to several
//! feature maps of decreasing temporal resolution.
//!
//! The flattening contract ties predictions to priors: each head map of
//! shape `[rows, cols, ratios · components]` is read in row-major order, so
//! concatenating head outputs yields predictions in exactly the order
//! produced by [`generate_priors`](crate::boxes::generate_priors).

use crate::boxes::{PriorConfig, DEFAULT_ASPECT_RATIOS};
use crate::encoding::ActionImage;
use crate::error::{Error, Result};
use crate::ops::{conv2d, conv2d_backward, maxpool, maxpool_backward, relu, relu_backward};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One backbone layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    },
    Relu,
    MaxPool {
        size: (usize, usize),
        stride: (usize, usize),
    },
}

/// Architecture description: backbone layers, which layer outputs carry
/// detection heads, and the prior-box parameters tied to those heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Input size as (height, width, channels).
    pub input: (usize, usize, usize),
    pub backbone: Vec<LayerSpec>,
    /// Indices into `backbone`; a head reads the output of each listed layer.
    pub head_layers: Vec<usize>,
    /// Number of action classes K (background is an extra slot).
    pub num_classes: usize,
    /// Detection head kernel; fixed at 5 rows × 1 column.
    pub detection_kernel: (usize, usize),
    pub aspect_ratios: Vec<f64>,
    /// One prior scale per head, strictly increasing in (0, 1].
    pub layer_scales: Vec<f64>,
}

impl NetConfig {
    /// The default small detector: five 3×3 conv blocks with widths
    /// {16, 32, 64, 64, 64}, pooling both axes after blocks 1–2 and columns
    /// only afterwards, heads on blocks 3–5 plus two extra column-stride-2
    /// convolutions.
    pub fn tiny(num_classes: usize) -> Self {
        let conv = |out_channels: usize| LayerSpec::Conv {
            out_channels,
            kernel: (3, 3),
            stride: (1, 1),
            pad: (1, 1),
        };
        let strided = |out_channels: usize| LayerSpec::Conv {
            out_channels,
            kernel: (3, 3),
            stride: (1, 2),
            pad: (1, 1),
        };
        let pool = |size: (usize, usize)| LayerSpec::MaxPool { size, stride: size };
        NetConfig {
            input: (50, 512, 3),
            backbone: vec![
                conv(16),
                LayerSpec::Relu,
                pool((2, 2)),
                conv(32),
                LayerSpec::Relu,
                pool((2, 2)),
                conv(64),
                LayerSpec::Relu,
                pool((1, 2)),
                conv(64),
                LayerSpec::Relu,
                pool((1, 2)),
                conv(64),
                LayerSpec::Relu,
                pool((1, 2)),
                strided(64),
                LayerSpec::Relu,
                strided(64),
                LayerSpec::Relu,
            ],
            head_layers: vec![8, 11, 14, 16, 18],
            num_classes,
            detection_kernel: (5, 1),
            aspect_ratios: DEFAULT_ASPECT_RATIOS.to_vec(),
            layer_scales: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }

    /// Full-size VGG-16 preset: conv1_1 through conv4_3, the converted
    /// fully-connected layers as convolutions, and four extra stride-2
    /// blocks, with six heads. Provided as a documented configuration for
    /// larger machines; nothing in this crate trains it by default.
    pub fn vgg16(num_classes: usize) -> Self {
        let conv = |out_channels: usize| LayerSpec::Conv {
            out_channels,
            kernel: (3, 3),
            stride: (1, 1),
            pad: (1, 1),
        };
        let conv1x1 = |out_channels: usize| LayerSpec::Conv {
            out_channels,
            kernel: (1, 1),
            stride: (1, 1),
            pad: (0, 0),
        };
        let down = |out_channels: usize| LayerSpec::Conv {
            out_channels,
            kernel: (3, 3),
            stride: (2, 2),
            pad: (1, 1),
        };
        let pool = LayerSpec::MaxPool { size: (2, 2), stride: (2, 2) };
        let mut backbone = Vec::new();
        for &width in &[64usize, 64] {
            backbone.push(conv(width));
            backbone.push(LayerSpec::Relu);
        }
        backbone.push(pool);
        for &width in &[128usize, 128] {
            backbone.push(conv(width));
            backbone.push(LayerSpec::Relu);
        }
        backbone.push(pool);
        for &width in &[256usize, 256, 256] {
            backbone.push(conv(width));
            backbone.push(LayerSpec::Relu);
        }
        backbone.push(pool);
        for &width in &[512usize, 512, 512] {
            backbone.push(conv(width));
            backbone.push(LayerSpec::Relu);
        }
        // Index 22 is the relu after the third 512-channel conv.
        backbone.push(pool);
        for &width in &[512usize, 512, 512] {
            backbone.push(conv(width));
            backbone.push(LayerSpec::Relu);
        }
        // Converted FC layers: a 3×3 conv and a 1×1 conv, 1024 channels.
        backbone.push(conv(1024));
        backbone.push(LayerSpec::Relu);
        backbone.push(conv1x1(1024));
        backbone.push(LayerSpec::Relu); // index 33
        // Extra feature blocks: 1×1 bottleneck then stride-2 3×3.
        for &(narrow, wide) in &[(256usize, 512usize), (128, 256), (128, 256), (128, 256)] {
            backbone.push(conv1x1(narrow));
            backbone.push(LayerSpec::Relu);
            backbone.push(down(wide));
            backbone.push(LayerSpec::Relu);
        }
        NetConfig {
            input: (50, 512, 3),
            backbone,
            head_layers: vec![22, 33, 37, 41, 45, 49],
            num_classes,
            detection_kernel: (5, 1),
            aspect_ratios: DEFAULT_ASPECT_RATIOS.to_vec(),
            layer_scales: vec![0.1, 0.2, 0.375, 0.55, 0.725, 0.9],
        }
    }

    /// Output shape (h, w, c) of every backbone layer for this input.
    pub fn layer_shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        let (mut h, mut w, mut c) = self.input;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Config(format!(
                "input size {:?} has a zero dimension",
                self.input
            )));
        }
        let mut shapes = Vec::with_capacity(self.backbone.len());
        for (i, layer) in self.backbone.iter().enumerate() {
            match *layer {
                LayerSpec::Conv { out_channels, kernel, stride, pad } => {
                    if out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 {
                        return Err(Error::Config(format!(
                            "layer {}: conv with zero kernel or channels",
                            i
                        )));
                    }
                    if stride.0 == 0 || stride.1 == 0 {
                        return Err(Error::Config(format!("layer {}: zero stride", i)));
                    }
                    if h + 2 * pad.0 < kernel.0 || w + 2 * pad.1 < kernel.1 {
                        return Err(Error::Config(format!(
                            "layer {}: kernel {:?} exceeds padded input {}x{}",
                            i,
                            kernel,
                            h + 2 * pad.0,
                            w + 2 * pad.1
                        )));
                    }
                    h = (h + 2 * pad.0 - kernel.0) / stride.0 + 1;
                    w = (w + 2 * pad.1 - kernel.1) / stride.1 + 1;
                    c = out_channels;
                }
                LayerSpec::Relu => {}
                LayerSpec::MaxPool { size, stride } => {
                    if size.0 == 0 || size.1 == 0 || stride.0 == 0 || stride.1 == 0 {
                        return Err(Error::Config(format!("layer {}: zero pool size", i)));
                    }
                    if h < size.0 || w < size.1 {
                        return Err(Error::Config(format!(
                            "layer {}: pool {:?} exceeds input {}x{}",
                            i, size, h, w
                        )));
                    }
                    h = (h - size.0) / stride.0 + 1;
                    w = (w - size.1) / stride.1 + 1;
                }
            }
            shapes.push((h, w, c));
        }
        Ok(shapes)
    }

    /// (rows, cols) of each head's feature map.
    pub fn feature_map_shapes(&self) -> Result<Vec<(usize, usize)>> {
        let shapes = self.layer_shapes()?;
        self.head_layers
            .iter()
            .map(|&idx| {
                shapes
                    .get(idx)
                    .map(|&(h, w, _)| (h, w))
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "head layer index {} out of range for {} layers",
                            idx,
                            shapes.len()
                        ))
                    })
            })
            .collect()
    }

    /// Prior-box layout implied by this architecture.
    pub fn prior_config(&self) -> Result<PriorConfig> {
        Ok(PriorConfig {
            aspect_ratios: self.aspect_ratios.clone(),
            layer_scales: self.layer_scales.clone(),
            feature_map_shapes: self.feature_map_shapes()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".into()));
        }
        if self.backbone.is_empty() {
            return Err(Error::Config("backbone has no layers".into()));
        }
        if self.detection_kernel != (5, 1) {
            return Err(Error::Config(format!(
                "detection kernel must be (5, 1), got {:?}",
                self.detection_kernel
            )));
        }
        if self.head_layers.is_empty() {
            return Err(Error::Config("no head layers".into()));
        }
        for pair in self.head_layers.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::Config(format!(
                    "head layers must be strictly ascending, got {:?}",
                    self.head_layers
                )));
            }
        }
        if *self.head_layers.last().unwrap() >= self.backbone.len() {
            return Err(Error::Config(format!(
                "head layer {} out of range for {} backbone layers",
                self.head_layers.last().unwrap(),
                self.backbone.len()
            )));
        }
        let maps = self.feature_map_shapes()?;
        for pair in maps.windows(2) {
            if pair[1].1 >= pair[0].1 {
                return Err(Error::Config(format!(
                    "head feature maps must have strictly decreasing column counts, got {:?}",
                    maps
                )));
            }
        }
        // Heads need enough rows for the 5×1 kernel under (2, 0) padding.
        for (i, &(rows, _)) in maps.iter().enumerate() {
            if rows + 4 < self.detection_kernel.0 {
                return Err(Error::Config(format!(
                    "head {} feature map has only {} rows",
                    i, rows
                )));
            }
        }
        self.prior_config()?.validate()
    }
}

/// A convolution's parameters: kernel `[kh, kw, cin, cout]` and per-output-
/// channel bias `[cout]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    fn zeros(kh: usize, kw: usize, cin: usize, cout: usize) -> Self {
        ConvLayer {
            weight: Tensor::zeros(&[kh, kw, cin, cout]),
            bias: Tensor::zeros(&[cout]),
        }
    }

    fn apply(&self, input: &Tensor, stride: (usize, usize), pad: (usize, usize)) -> Result<Tensor> {
        let mut out = conv2d(input, &self.weight, stride, pad)?;
        let cout = self.bias.len();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += self.bias.data()[i % cout];
        }
        Ok(out)
    }
}

/// Localization and confidence convolutions reading one feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPair {
    pub loc: ConvLayer,
    pub conf: ConvLayer,
}

/// A fully materialized network: architecture plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    cfg: NetConfig,
    pub convs: Vec<ConvLayer>,
    pub heads: Vec<HeadPair>,
}

/// Intermediate state of one forward pass, kept for the backward pass.
pub struct Forward {
    /// `activations[0]` is the input; `activations[i + 1]` is layer i's output.
    activations: Vec<Tensor>,
    /// Per layer: max-pool source indices, if the layer is a pool.
    argmaxes: Vec<Option<Vec<usize>>>,
    head_shapes: Vec<(usize, usize)>,
    /// Flattened predictions in prior order: 4 offsets per prior.
    pub loc: Vec<f64>,
    /// Flattened logits in prior order: num_classes + 1 per prior.
    pub conf: Vec<f64>,
}

/// Parameter gradients, aligned one-to-one with [`Network::param_tensors`].
#[derive(Debug, Clone)]
pub struct Grads {
    pub tensors: Vec<Tensor>,
}

impl Grads {
    pub fn zeros_like(net: &Network) -> Self {
        Grads {
            tensors: net.param_tensors().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn add(&mut self, other: &Grads) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }
}

impl Network {
    /// Deterministic initialization: all conv weights (backbone and heads)
    /// drawn He-uniform (±sqrt(6 / fan_in)) from a dedicated PRNG stream in
    /// a fixed order, biases zero except a +2 confidence bias on every
    /// background slot so the untrained detector prefers background. Heads
    /// must start nonzero: a zero head would pass zero gradient to the
    /// backbone and stall training at the start.
    pub fn init(cfg: NetConfig, seed: u64) -> Result<Network> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let mut he_conv = |kh: usize, kw: usize, cin: usize, cout: usize| {
            let bound = (6.0 / (kh * kw * cin) as f64).sqrt();
            let mut lay = ConvLayer::zeros(kh, kw, cin, cout);
            for v in lay.weight.data_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            lay
        };
        let shapes = cfg.layer_shapes()?;
        let mut cin = cfg.input.2;
        let mut convs = Vec::new();
        for (i, layer) in cfg.backbone.iter().enumerate() {
            if let LayerSpec::Conv { out_channels, kernel, .. } = *layer {
                convs.push(he_conv(kernel.0, kernel.1, cin, out_channels));
            }
            cin = shapes[i].2;
        }
        let slots = cfg.num_classes + 1;
        let ratios = cfg.aspect_ratios.len();
        let (kh, kw) = cfg.detection_kernel;
        let mut heads = Vec::new();
        for &idx in &cfg.head_layers {
            let channels = shapes[idx].2;
            let loc = he_conv(kh, kw, channels, ratios * 4);
            let mut conf = he_conv(kh, kw, channels, ratios * slots);
            for a in 0..ratios {
                conf.bias.data_mut()[a * slots] = 2.0;
            }
            heads.push(HeadPair { loc, conf });
        }
        Ok(Network { cfg, convs, heads })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    /// All parameter tensors in a fixed order: backbone convolutions
    /// (weight, bias) in layer order, then per head (loc weight, loc bias,
    /// conf weight, conf bias). Checkpoints and the optimizer rely on this
    /// ordering.
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        for h in &self.heads {
            out.push(&h.loc.weight);
            out.push(&h.loc.bias);
            out.push(&h.conf.weight);
            out.push(&h.conf.bias);
        }
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for h in &mut self.heads {
            out.push(&mut h.loc.weight);
            out.push(&mut h.loc.bias);
            out.push(&mut h.conf.weight);
            out.push(&mut h.conf.bias);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.param_tensors().iter().map(|t| t.len()).sum()
    }

    /// Convert an encoded image to the network input tensor: width must
    /// match exactly, shorter images are zero-padded at the bottom, and
    /// pixel values are centered to [-0.5, 0.5] (centered inputs keep
    /// first-layer gradients from sharing one sign across every weight).
    pub fn image_to_input(&self, img: &ActionImage) -> Result<Tensor> {
        let (h, w, c) = self.cfg.input;
        if img.width != w {
            return Err(Error::Shape(format!(
                "image width {} does not match network input width {} (resample first)",
                img.width, w
            )));
        }
        if img.height > h {
            return Err(Error::Shape(format!(
                "image height {} exceeds network input height {}",
                img.height, h
            )));
        }
        let mut out = Tensor::zeros(&[h, w, c]);
        for r in 0..img.height {
            for col in 0..img.width {
                let rgb = img.pixel(r, col);
                for ch in 0..3 {
                    out.set3(r, col, ch, rgb[ch] as f64 / 255.0 - 0.5);
                }
            }
        }
        Ok(out)
    }

    fn head_pad(&self) -> (usize, usize) {
        ((self.cfg.detection_kernel.0 - 1) / 2, (self.cfg.detection_kernel.1 - 1) / 2)
    }

    pub fn forward(&self, input: &Tensor) -> Result<Forward> {
        let (h, w, c) = self.cfg.input;
        if input.shape() != [h, w, c] {
            return Err(Error::Shape(format!(
                "input {:?} does not match configured {:?}",
                input.shape(),
                self.cfg.input
            )));
        }
        let mut activations = Vec::with_capacity(self.cfg.backbone.len() + 1);
        activations.push(input.clone());
        let mut argmaxes = Vec::with_capacity(self.cfg.backbone.len());
        let mut conv_idx = 0;
        for layer in &self.cfg.backbone {
            let prev = activations.last().unwrap();
            let (out, argmax) = match *layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let out = self.convs[conv_idx].apply(prev, stride, pad)?;
                    conv_idx += 1;
                    (out, None)
                }
                LayerSpec::Relu => (relu(prev), None),
                LayerSpec::MaxPool { size, stride } => {
                    let (out, idx) = maxpool(prev, size, stride)?;
                    (out, Some(idx))
                }
            };
            activations.push(out);
            argmaxes.push(argmax);
        }

        let pad = self.head_pad();
        let mut loc = Vec::new();
        let mut conf = Vec::new();
        let mut head_shapes = Vec::with_capacity(self.heads.len());
        for (head, &idx) in self.heads.iter().zip(&self.cfg.head_layers) {
            let feat = &activations[idx + 1];
            let loc_map = head.loc.apply(feat, (1, 1), pad)?;
            let conf_map = head.conf.apply(feat, (1, 1), pad)?;
            head_shapes.push((loc_map.shape()[0], loc_map.shape()[1]));
            // Row-major [rows, cols, ratios·comp] is exactly prior order.
            loc.extend_from_slice(loc_map.data());
            conf.extend_from_slice(conf_map.data());
        }
        Ok(Forward { activations, argmaxes, head_shapes, loc, conf })
    }

    /// Backpropagate flattened prediction gradients to parameter gradients.
    pub fn backward(&self, fwd: &Forward, d_loc: &[f64], d_conf: &[f64]) -> Result<Grads> {
        if d_loc.len() != fwd.loc.len() || d_conf.len() != fwd.conf.len() {
            return Err(Error::Shape(format!(
                "prediction gradients ({}, {}) do not match outputs ({}, {})",
                d_loc.len(),
                d_conf.len(),
                fwd.loc.len(),
                fwd.conf.len()
            )));
        }
        let n_layers = self.cfg.backbone.len();
        let ratios = self.cfg.aspect_ratios.len();
        let slots = self.cfg.num_classes + 1;
        let pad = self.head_pad();

        // Head parameter gradients, plus gradient contributions to the
        // activations the heads read.
        let mut pending: Vec<Option<Tensor>> = (0..=n_layers).map(|_| None).collect();
        let mut head_grads = Vec::with_capacity(self.heads.len());
        let mut loc_off = 0;
        let mut conf_off = 0;
        for (h, (head, &idx)) in self.heads.iter().zip(&self.cfg.head_layers).enumerate() {
            let (rows, cols) = fwd.head_shapes[h];
            let feat = &fwd.activations[idx + 1];
            let loc_len = rows * cols * ratios * 4;
            let conf_len = rows * cols * ratios * slots;
            let d_loc_map =
                Tensor::from_vec(&[rows, cols, ratios * 4], d_loc[loc_off..loc_off + loc_len].to_vec())?;
            let d_conf_map = Tensor::from_vec(
                &[rows, cols, ratios * slots],
                d_conf[conf_off..conf_off + conf_len].to_vec(),
            )?;
            loc_off += loc_len;
            conf_off += conf_len;
            let (d_feat_loc, d_w_loc) =
                conv2d_backward(feat, &head.loc.weight, (1, 1), pad, &d_loc_map)?;
            let (d_feat_conf, d_w_conf) =
                conv2d_backward(feat, &head.conf.weight, (1, 1), pad, &d_conf_map)?;
            let d_b_loc = channel_sums(&d_loc_map);
            let d_b_conf = channel_sums(&d_conf_map);
            head_grads.push((d_w_loc, d_b_loc, d_w_conf, d_b_conf));
            let slot = &mut pending[idx + 1];
            add_into(slot, d_feat_loc);
            add_into(slot, d_feat_conf);
        }

        // Walk the backbone in reverse with a running activation gradient.
        let mut conv_grads: Vec<Option<(Tensor, Tensor)>> =
            (0..self.convs.len()).map(|_| None).collect();
        let mut conv_idx = self.convs.len();
        let mut d = pending[n_layers]
            .take()
            .unwrap_or_else(|| Tensor::zeros(fwd.activations[n_layers].shape()));
        for i in (0..n_layers).rev() {
            let input = &fwd.activations[i];
            d = match self.cfg.backbone[i] {
                LayerSpec::Conv { stride, pad, .. } => {
                    conv_idx -= 1;
                    let (d_in, d_w) =
                        conv2d_backward(input, &self.convs[conv_idx].weight, stride, pad, &d)?;
                    conv_grads[conv_idx] = Some((d_w, channel_sums(&d)));
                    d_in
                }
                LayerSpec::Relu => relu_backward(input, &d)?,
                LayerSpec::MaxPool { .. } => {
                    let argmax = fwd.argmaxes[i].as_ref().expect("pool recorded argmax");
                    maxpool_backward(input.shape(), argmax, &d)?
                }
            };
            if let Some(extra) = pending[i].take() {
                for (x, y) in d.data_mut().iter_mut().zip(extra.data()) {
                    *x += y;
                }
            }
        }

        let mut tensors = Vec::new();
        for g in conv_grads {
            let (d_w, d_b) = g.expect("every conv visited in backward");
            tensors.push(d_w);
            tensors.push(d_b);
        }
        for (d_w_loc, d_b_loc, d_w_conf, d_b_conf) in head_grads {
            tensors.push(d_w_loc);
            tensors.push(d_b_loc);
            tensors.push(d_w_conf);
            tensors.push(d_b_conf);
        }
        Ok(Grads { tensors })
    }
}

/// Sum a `[h, w, c]` map over its spatial extent: the bias gradient.
fn channel_sums(map: &Tensor) -> Tensor {
    let c = *map.shape().last().unwrap();
    let mut out = Tensor::zeros(&[c]);
    for (i, v) in map.data().iter().enumerate() {
        out.data_mut()[i % c] += v;
    }
    out
}

fn add_into(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(acc) => {
            for (x, y) in acc.data_mut().iter_mut().zip(t.data()) {
                *x += y;
            }
        }
        None => *slot = Some(t),
    }
}
