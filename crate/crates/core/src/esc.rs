//! Explainable semantic communication: maps each semantic feature back to
//! input pixels.
//!
//! For every semantic feature the explainer differentiates it against the
//! last convolution layer's activations, turns the gradients into pixel-wise
//! weighting coefficients and per-kernel importance weights, and combines the
//! feature maps through a leaky rectifier into a localization map. The
//! per-feature maps are averaged, min-max normalized, bilinearly upsampled to
//! input resolution, and exported as graymaps.
//!
//! Second and third derivatives in the weighting coefficients use the
//! exponential-score closed form (powers of the first gradient): for a
//! piecewise-linear network the literal higher derivatives vanish almost
//! everywhere, which would make the coefficients 0/0.

use std::path::{Path, PathBuf};

use crate::autograd::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::pgm::{self, GrayImage};
use crate::sc::{self, SCArchitecture};

/// Denominators at or below this magnitude count as degenerate.
const DEGENERATE_DENOM: f64 = 1e-12;

/// Pixel-wise weighting coefficients for one semantic feature.
///
/// For kernel k with activation sum s_k = sum_ab A[k,a,b], each pixel with
/// gradient g contributes g^2 / (2 g^2 + s_k g^3); a vanishing denominator
/// yields 0.
pub fn weighting_coefficients(gradients: &Tensor, activations: &Tensor) -> Result<Tensor> {
    if gradients.shape() != activations.shape() || gradients.shape().len() != 3 {
        return Err(Error::Dimension(format!(
            "gradients {:?} and activations {:?} must share a [K,h,w] shape",
            gradients.shape(),
            activations.shape()
        )));
    }
    let [k, h, w] = [
        gradients.shape()[0],
        gradients.shape()[1],
        gradients.shape()[2],
    ];
    let plane = h * w;
    let mut out = vec![0.0; k * plane];
    for kernel in 0..k {
        let a_slice = &activations.data()[kernel * plane..(kernel + 1) * plane];
        let g_slice = &gradients.data()[kernel * plane..(kernel + 1) * plane];
        let activation_sum: f64 = a_slice.iter().sum();
        for (o, &g) in out[kernel * plane..(kernel + 1) * plane]
            .iter_mut()
            .zip(g_slice)
        {
            let g2 = g * g;
            let denom = 2.0 * g2 + activation_sum * g2 * g;
            *o = if denom.abs() <= DEGENERATE_DENOM {
                0.0
            } else {
                g2 / denom
            };
        }
    }
    Tensor::new(vec![k, h, w], out)
}

/// Per-kernel neuron importance: omega_k = sum_ij rho[k,i,j] * g[k,i,j].
pub fn neuron_importance(coefficients: &Tensor, gradients: &Tensor) -> Result<Vec<f64>> {
    if coefficients.shape() != gradients.shape() || coefficients.shape().len() != 3 {
        return Err(Error::Dimension(format!(
            "coefficients {:?} and gradients {:?} must share a [K,h,w] shape",
            coefficients.shape(),
            gradients.shape()
        )));
    }
    let k = coefficients.shape()[0];
    let plane = coefficients.shape()[1] * coefficients.shape()[2];
    let mut omega = vec![0.0; k];
    for (kernel, slot) in omega.iter_mut().enumerate() {
        let range = kernel * plane..(kernel + 1) * plane;
        *slot = coefficients.data()[range.clone()]
            .iter()
            .zip(&gradients.data()[range])
            .map(|(c, g)| c * g)
            .sum();
    }
    Ok(omega)
}

/// Localization map: leakyReLU(sum_k omega_k * A^k) over the feature plane.
pub fn localization_map(omega: &[f64], activations: &Tensor, slope: f64) -> Result<Vec<f64>> {
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "localization slope must lie in (0,1), got {slope}"
        )));
    }
    if activations.shape().len() != 3 || activations.shape()[0] != omega.len() {
        return Err(Error::Dimension(format!(
            "{} weights do not match activations {:?}",
            omega.len(),
            activations.shape()
        )));
    }
    let plane = activations.shape()[1] * activations.shape()[2];
    let mut map = vec![0.0; plane];
    for (kernel, &weight) in omega.iter().enumerate() {
        let slice = &activations.data()[kernel * plane..(kernel + 1) * plane];
        for (m, &a) in map.iter_mut().zip(slice) {
            *m += weight * a;
        }
    }
    for v in &mut map {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    Ok(map)
}

/// Min-max normalization to [0, 1]; a constant map comes back as zeros with
/// the flag set.
pub fn normalize_unit(map: &[f64]) -> (Vec<f64>, bool) {
    let min = map.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = map.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return (vec![0.0; map.len()], true);
    }
    let scale = 1.0 / (max - min);
    (map.iter().map(|v| (v - min) * scale).collect(), false)
}

/// Bilinear upsampling with corner alignment.
pub fn upsample_bilinear(
    map: &[f64],
    height: usize,
    width: usize,
    out_height: usize,
    out_width: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; out_height * out_width];
    let y_step = if out_height > 1 {
        (height - 1) as f64 / (out_height - 1) as f64
    } else {
        0.0
    };
    let x_step = if out_width > 1 {
        (width - 1) as f64 / (out_width - 1) as f64
    } else {
        0.0
    };
    for i in 0..out_height {
        let y = i as f64 * y_step;
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(height - 1);
        let fy = y - y0 as f64;
        for j in 0..out_width {
            let x = j as f64 * x_step;
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(width - 1);
            let fx = x - x0 as f64;
            let top = map[y0 * width + x0] * (1.0 - fx) + map[y0 * width + x1] * fx;
            let bottom = map[y1 * width + x0] * (1.0 - fx) + map[y1 * width + x1] * fx;
            out[i * out_width + j] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

/// Full explanation of one input.
#[derive(Debug, Clone)]
pub struct Explanation {
    /// Feature-plane height and width.
    pub height: usize,
    pub width: usize,
    /// Raw localization map per semantic feature.
    pub per_feature: Vec<Vec<f64>>,
    /// Elementwise mean of the per-feature maps.
    pub mean_map: Vec<f64>,
    /// Normalized mean map in [0, 1] at feature resolution.
    pub normalized: Vec<f64>,
    /// Normalized mean map upsampled to input resolution.
    pub upsampled: Vec<f64>,
    pub input_height: usize,
    pub input_width: usize,
    /// Set when the aggregated map was constant and exported as zeros.
    pub constant: bool,
}

/// Explain one input: gradient maps, weighting coefficients, importance
/// weights, and localization maps for every semantic feature, then the
/// normalized aggregated heatmap.
pub fn explain(
    arch: &SCArchitecture,
    params: &ParamVector,
    x: &Tensor,
    slope: f64,
) -> Result<Explanation> {
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "explanation slope must lie in (0,1), got {slope}"
        )));
    }
    let mut tape = Tape::new();
    let nodes = sc::bind_params(&mut tape, params)?;
    let encoded = sc::encoder_forward(&mut tape, arch, &nodes, x)?;
    let feature_node = encoded.feature_maps.ok_or_else(|| {
        Error::Contract("explanation needs a convolutional encoder stage".into())
    })?;
    let activations = tape.value(feature_node).clone();
    let [_, h, w] = [
        activations.shape()[0],
        activations.shape()[1],
        activations.shape()[2],
    ];

    let mut per_feature = Vec::with_capacity(arch.semantic_dim);
    for l in 0..arch.semantic_dim {
        let q = tape.pick(encoded.semantic, l)?;
        let gradients = tape.grad_of(q, feature_node)?;
        let rho = weighting_coefficients(&gradients, &activations)?;
        let omega = neuron_importance(&rho, &gradients)?;
        per_feature.push(localization_map(&omega, &activations, slope)?);
    }

    let plane = h * w;
    let mut mean_map = vec![0.0; plane];
    for map in &per_feature {
        for (m, v) in mean_map.iter_mut().zip(map) {
            *m += v;
        }
    }
    let inv = 1.0 / arch.semantic_dim as f64;
    for m in &mut mean_map {
        *m *= inv;
    }
    let (normalized, constant) = normalize_unit(&mean_map);
    let (input_height, input_width) = (arch.image[1], arch.image[2]);
    let upsampled = upsample_bilinear(&normalized, h, w, input_height, input_width);

    Ok(Explanation {
        height: h,
        width: w,
        per_feature,
        mean_map,
        normalized,
        upsampled,
        input_height,
        input_width,
        constant,
    })
}

fn to_gray(map: &[f64], width: usize, height: usize) -> Result<GrayImage> {
    let pixels: Vec<u8> = map
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GrayImage::new(width, height, pixels)
}

/// Export one heatmap per semantic feature plus the aggregated mean map,
/// named `<stem>.esc.<l>.pgm` and `<stem>.esc.mean.pgm`. Every map is
/// normalized and upsampled to input resolution. Returns the written paths.
pub fn export_heatmaps(
    explanation: &Explanation,
    dir: &Path,
    stem: &str,
    ascii: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let write = |path: &Path, img: &GrayImage| -> Result<()> {
        if ascii {
            pgm::write_pgm_p2(path, img)
        } else {
            pgm::write_pgm_p5(path, img)
        }
    };
    let mut written = Vec::with_capacity(explanation.per_feature.len() + 1);
    for (l, map) in explanation.per_feature.iter().enumerate() {
        let (normalized, _) = normalize_unit(map);
        let upsampled = upsample_bilinear(
            &normalized,
            explanation.height,
            explanation.width,
            explanation.input_height,
            explanation.input_width,
        );
        let img = to_gray(&upsampled, explanation.input_width, explanation.input_height)?;
        let path = dir.join(format!("{stem}.esc.{l}.pgm"));
        write(&path, &img)?;
        written.push(path);
    }
    let img = to_gray(
        &explanation.upsampled,
        explanation.input_width,
        explanation.input_height,
    )?;
    let path = dir.join(format!("{stem}.esc.mean.pgm"));
    write(&path, &img)?;
    written.push(path);
    Ok(written)
}
