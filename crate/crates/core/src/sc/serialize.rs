//! Model file format: a text header describing the architecture and layer
//! manifest, followed by all parameters as little-endian 32-bit reals in
//! manifest order.
//!
//! ```text
//! SCMODEL v1
//! image <C> <H> <W>
//! conv <kernels> <kernel_size> <stride>     (one line per conv layer)
//! semantic <L>
//! hidden <width>                            (one line per decoder layer)
//! classes <M>
//! slope <activation slope>
//! params <layer count>
//! <layer name> <dim> <dim> ...              (one line per layer)
//! end
//! <raw f32 little-endian values>
//! ```

use std::fs;
use std::path::Path;

use super::model::{ConvSpec, SCArchitecture};
use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Serialize architecture and parameters. Values are quantized to `f32`.
pub fn save_model(path: &Path, arch: &SCArchitecture, params: &ParamVector) -> Result<()> {
    if params.manifest != arch.manifest() {
        return Err(Error::Contract(
            "parameter manifest does not match the architecture".into(),
        ));
    }
    let mut header = String::new();
    header.push_str("SCMODEL v1\n");
    header.push_str(&format!(
        "image {} {} {}\n",
        arch.image[0], arch.image[1], arch.image[2]
    ));
    for c in &arch.conv {
        header.push_str(&format!("conv {} {} {}\n", c.kernels, c.kernel_size, c.stride));
    }
    header.push_str(&format!("semantic {}\n", arch.semantic_dim));
    for h in &arch.decoder_hidden {
        header.push_str(&format!("hidden {h}\n"));
    }
    header.push_str(&format!("classes {}\n", arch.classes));
    header.push_str(&format!("slope {}\n", arch.activation_slope));
    header.push_str(&format!("params {}\n", params.manifest.len()));
    for layer in params.manifest.layers() {
        header.push_str(&layer.name);
        for d in &layer.shape {
            header.push_str(&format!(" {d}"));
        }
        header.push('\n');
    }
    header.push_str("end\n");

    let mut bytes = header.into_bytes();
    bytes.reserve(params.values.len() * 4);
    for &v in &params.values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn parse_nums<T: std::str::FromStr>(parts: &[&str], what: &str) -> Result<Vec<T>> {
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| bad(format!("bad {what}: {p}"))))
        .collect()
}

/// Load a model file written by [`save_model`].
pub fn load_model(path: &Path) -> Result<(SCArchitecture, ParamVector)> {
    let bytes = fs::read(path)?;
    let marker = b"end\n";
    let header_end = bytes
        .windows(marker.len())
        .enumerate()
        .filter(|(i, w)| *w == marker && (*i == 0 || bytes[i - 1] == b'\n'))
        .map(|(i, _)| i)
        .next()
        .ok_or_else(|| bad("missing end marker"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| bad("header is not valid UTF-8"))?;
    let binary = &bytes[header_end + marker.len()..];

    let mut lines = header.lines();
    if lines.next() != Some("SCMODEL v1") {
        return Err(bad("missing SCMODEL v1 magic"));
    }

    let mut image = None;
    let mut conv = Vec::new();
    let mut semantic_dim = None;
    let mut hidden = Vec::new();
    let mut classes = None;
    let mut slope = None;
    let mut n_layers = None;
    let mut manifest_lines = Vec::new();

    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        if n_layers.is_some() {
            manifest_lines.push(parts);
            continue;
        }
        match parts[0] {
            "image" => {
                let v: Vec<usize> = parse_nums(&parts[1..], "image dim")?;
                if v.len() != 3 {
                    return Err(bad("image wants 3 dims"));
                }
                image = Some([v[0], v[1], v[2]]);
            }
            "conv" => {
                let v: Vec<usize> = parse_nums(&parts[1..], "conv field")?;
                if v.len() != 3 {
                    return Err(bad("conv wants kernels, kernel_size, stride"));
                }
                conv.push(ConvSpec {
                    kernels: v[0],
                    kernel_size: v[1],
                    stride: v[2],
                });
            }
            "semantic" => semantic_dim = Some(parse_nums::<usize>(&parts[1..], "semantic")?[0]),
            "hidden" => hidden.push(parse_nums::<usize>(&parts[1..], "hidden")?[0]),
            "classes" => classes = Some(parse_nums::<usize>(&parts[1..], "classes")?[0]),
            "slope" => slope = Some(parse_nums::<f64>(&parts[1..], "slope")?[0]),
            "params" => n_layers = Some(parse_nums::<usize>(&parts[1..], "params")?[0]),
            other => return Err(bad(format!("unknown header field: {other}"))),
        }
    }

    let arch = SCArchitecture {
        image: image.ok_or_else(|| bad("missing image line"))?,
        conv,
        semantic_dim: semantic_dim.ok_or_else(|| bad("missing semantic line"))?,
        decoder_hidden: hidden,
        classes: classes.ok_or_else(|| bad("missing classes line"))?,
        activation_slope: slope.ok_or_else(|| bad("missing slope line"))?,
    };
    arch.validate()
        .map_err(|e| bad(format!("invalid architecture: {e}")))?;

    let n_layers = n_layers.ok_or_else(|| bad("missing params line"))?;
    if manifest_lines.len() != n_layers {
        return Err(bad(format!(
            "expected {n_layers} layer lines, found {}",
            manifest_lines.len()
        )));
    }
    let manifest = arch.manifest();
    if manifest.len() != n_layers {
        return Err(bad("layer count does not match the architecture"));
    }
    for (layer, parts) in manifest.layers().iter().zip(&manifest_lines) {
        let shape: Vec<usize> = parse_nums(&parts[1..], "layer dim")?;
        if parts[0] != layer.name || shape != layer.shape {
            return Err(bad(format!(
                "layer line `{} {:?}` does not match architecture layer `{} {:?}`",
                parts[0], shape, layer.name, layer.shape
            )));
        }
    }

    let total = manifest.total();
    if binary.len() != total * 4 {
        return Err(bad(format!(
            "expected {} bytes of parameter data, found {}",
            total * 4,
            binary.len()
        )));
    }
    let values: Vec<f64> = binary
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let params = ParamVector::new(manifest, values, 0)?;
    Ok((arch, params))
}
