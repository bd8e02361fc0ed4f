//! Flat parameter vectors, layer manifests, and freeze masks.
//!
//! A [`ParamVector`] is the unit that moves through the system: devices train
//! it, the server aggregates it, the freezing strategy masks it, and the
//! serializer writes it. The manifest pins the layer order so that a flat
//! offset always means the same coordinate on every device.

use crate::error::{Error, Result};

/// One named layer: a shape plus its position in the flat layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            shape,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered layer layout of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    layers: Vec<LayerSpec>,
}

impl Manifest {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Total parameter count.
    pub fn total(&self) -> usize {
        self.layers.iter().map(LayerSpec::numel).sum()
    }

    /// Flat range occupied by layer `idx`.
    pub fn range(&self, idx: usize) -> std::ops::Range<usize> {
        let start: usize = self.layers[..idx].iter().map(LayerSpec::numel).sum();
        start..start + self.layers[idx].numel()
    }
}

/// Flat model parameters tagged with their manifest and communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub manifest: Manifest,
    pub round: usize,
}

impl ParamVector {
    pub fn new(manifest: Manifest, values: Vec<f64>, round: usize) -> Result<Self> {
        if values.len() != manifest.total() {
            return Err(Error::Contract(format!(
                "parameter vector length {} does not match manifest total {}",
                values.len(),
                manifest.total()
            )));
        }
        Ok(Self {
            values,
            manifest,
            round,
        })
    }

    pub fn zeros(manifest: Manifest) -> Self {
        let n = manifest.total();
        Self {
            values: vec![0.0; n],
            manifest,
            round: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values of layer `idx`.
    pub fn layer(&self, idx: usize) -> &[f64] {
        &self.values[self.manifest.range(idx)]
    }
}

/// Boolean mask aligned with a [`ParamVector`]; `true` marks a frozen entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeMask {
    bits: Vec<bool>,
}

impl FreezeMask {
    pub fn all_trainable(len: usize) -> Self {
        Self {
            bits: vec![false; len],
        }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_frozen(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn frozen_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn trainable_count(&self) -> usize {
        self.len() - self.frozen_count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> Manifest {
        Manifest::new(vec![
            LayerSpec::new("a", vec![2, 3]),
            LayerSpec::new("b", vec![4]),
        ])
    }

    #[test]
    fn manifest_ranges_tile_the_vector() {
        let m = manifest();
        assert_eq!(m.total(), 10);
        assert_eq!(m.range(0), 0..6);
        assert_eq!(m.range(1), 6..10);
    }

    #[test]
    fn param_vector_checks_length() {
        assert!(ParamVector::new(manifest(), vec![0.0; 9], 0).is_err());
        let p = ParamVector::new(manifest(), (0..10).map(f64::from).collect(), 1).unwrap();
        assert_eq!(p.layer(1), &[6.0, 7.0, 8.0, 9.0]);
        assert_eq!(p.round, 1);
    }

    #[test]
    fn freeze_mask_counts() {
        let m = FreezeMask::from_bits(vec![true, false, true]);
        assert_eq!(m.frozen_count(), 2);
        assert_eq!(m.trainable_count(), 1);
        assert!(m.is_frozen(0) && !m.is_frozen(1));
    }
}
