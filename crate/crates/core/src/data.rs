//! Dataset ingestion, synthesis, and splitting.
//!
//! The synthetic generator stands in for a fire-surveillance image corpus:
//! class 1 images carry a bright high-intensity blob on a noise background,
//! class 0 images are noise only. The generator records each blob's bounding
//! box so localization checks can compare heatmap mass inside vs outside.

use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::pgm::{self, GrayImage};
use crate::rng::{self, stream};

/// Inclusive pixel bounding box (row0, col0, row1, col1).
pub type BlobBox = (usize, usize, usize, usize);

/// A labeled grayscale image set.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Images as `[1, S, S]` tensors with values in [0, 1].
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Blob bounding box per image; None for class 0 or external data.
    pub blob_boxes: Vec<Option<BlobBox>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub image_size: usize,
    pub count_per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Parse a synthesis spec in the flat `key = value` format.
    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut spec = Self {
            image_size: 16,
            count_per_class: 100,
            seed: 42,
        };
        for (line, key, value) in crate::config::parse_key_values(text)? {
            let parse = |what: &str| -> Result<u64> {
                value.parse().map_err(|_| Error::Config {
                    line,
                    reason: format!("{what}: not an integer: `{value}`"),
                })
            };
            match key.as_str() {
                "image_size" => spec.image_size = parse("image_size")? as usize,
                "count_per_class" => spec.count_per_class = parse("count_per_class")? as usize,
                "seed" => spec.seed = parse("seed")?,
                other => {
                    return Err(Error::Config {
                        line,
                        reason: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        Ok(spec)
    }
}

const BACKGROUND_MAX: u8 = 90;
const BLOB_MIN: u8 = 180;

/// Generate `2 * count_per_class` images, alternating labels, deterministic
/// per seed.
pub fn synthesize_fire_like(spec: &SynthSpec) -> Result<Dataset> {
    let s = spec.image_size;
    if s < 6 {
        return Err(Error::InvalidParameter(format!(
            "image size {s} too small for blob synthesis"
        )));
    }
    if spec.count_per_class == 0 {
        return Err(Error::InvalidParameter("empty class requested".into()));
    }
    let mut rng = rng::chacha(&[spec.seed, stream::DATA_SYNTH]);
    let total = 2 * spec.count_per_class;
    let mut images = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut blob_boxes = Vec::with_capacity(total);
    for i in 0..total {
        let label = i % 2;
        let mut pixels: Vec<u8> = (0..s * s)
            .map(|_| rng.gen_range(0..=BACKGROUND_MAX))
            .collect();
        let blob = if label == 1 {
            let radius = rng.gen_range(2..=3usize);
            let cy = rng.gen_range(radius..s - radius);
            let cx = rng.gen_range(radius..s - radius);
            for y in cy - radius..=cy + radius {
                for x in cx - radius..=cx + radius {
                    let dy = y as i64 - cy as i64;
                    let dx = x as i64 - cx as i64;
                    if dy * dy + dx * dx <= (radius * radius) as i64 {
                        pixels[y * s + x] = rng.gen_range(BLOB_MIN..=255);
                    }
                }
            }
            Some((cy - radius, cx - radius, cy + radius, cx + radius))
        } else {
            None
        };
        let data: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
        images.push(Tensor::new(vec![1, s, s], data)?);
        labels.push(label);
        blob_boxes.push(blob);
    }
    Ok(Dataset {
        images,
        labels,
        classes: 2,
        blob_boxes,
    })
}

/// Write a dataset as `class<k>/img_<i>.pgm` under `dir`.
pub fn write_dataset_dir(dataset: &Dataset, dir: &Path) -> Result<()> {
    for class in 0..dataset.classes {
        std::fs::create_dir_all(dir.join(format!("class{class}")))?;
    }
    for (i, (image, &label)) in dataset.images.iter().zip(&dataset.labels).enumerate() {
        let (h, w) = (image.shape()[1], image.shape()[2]);
        let pixels: Vec<u8> = image
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let gray = GrayImage::new(w, h, pixels)?;
        let path = dir.join(format!("class{label}/img_{i:05}.pgm"));
        pgm::write_pgm_p5(&path, &gray)?;
    }
    Ok(())
}

/// Load a directory of class-labeled subdirectories of PGM images. Classes
/// are the subdirectories in lexicographic order.
pub fn load_dir(path: &Path) -> Result<Dataset> {
    let mut class_dirs: Vec<_> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    class_dirs.sort();
    if class_dirs.len() < 2 {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!(
                "need at least two class subdirectories, found {}",
                class_dirs.len()
            ),
        });
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for (label, class_dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<_> = std::fs::read_dir(class_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let img = pgm::read_pgm(&file)?;
            match shape {
                None => shape = Some((img.height, img.width)),
                Some(expected) if expected != (img.height, img.width) => {
                    return Err(Error::Ingestion {
                        path: file,
                        reason: format!(
                            "image is {}x{}, expected {}x{}",
                            img.height, img.width, expected.0, expected.1
                        ),
                    });
                }
                _ => {}
            }
            let (h, w) = (img.height, img.width);
            images.push(Tensor::new(vec![1, h, w], img.to_unit_reals())?);
            labels.push(label);
        }
    }
    if images.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: "no images found".into(),
        });
    }
    let blob_boxes = vec![None; images.len()];
    Ok(Dataset {
        images,
        labels,
        classes: class_dirs.len(),
        blob_boxes,
    })
}

/// Draw per-device data volumes log-uniformly from [min, max].
pub fn draw_volumes(devices: usize, min: u64, max: u64, seed: u64) -> Vec<u64> {
    let mut rng = rng::chacha(&[seed, stream::VOLUMES]);
    let (ln_min, ln_max) = ((min as f64).ln(), (max as f64).ln());
    (0..devices)
        .map(|_| {
            let v = rng.gen_range(ln_min..=ln_max).exp().round() as u64;
            v.clamp(min, max)
        })
        .collect()
}

/// Total pool size so that the 80% train share covers `train_needed`.
pub fn pool_size_for(train_needed: usize) -> usize {
    let mut total = (train_needed as f64 / 0.8).ceil() as usize;
    while total - ((0.2 * total as f64).round() as usize) < train_needed {
        total += 1;
    }
    total
}

/// One device's training shard.
#[derive(Debug, Clone)]
pub struct DeviceShard {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

/// Shuffle, split 80/20 into train/test, and partition the train pool across
/// devices by their volumes. The split is exhaustive and disjoint.
pub fn split_and_partition(
    dataset: &Dataset,
    volumes: &[u64],
    seed: u64,
) -> Result<(Vec<DeviceShard>, Dataset)> {
    let total = dataset.len();
    if total == 0 {
        return Err(Error::Contract("splitting an empty dataset".into()));
    }
    let n_test = (0.2 * total as f64).round() as usize;
    let n_train = total - n_test;
    let needed: u64 = volumes.iter().sum();
    if needed > n_train as u64 {
        return Err(Error::Contract(format!(
            "devices need {needed} training samples but the 80% split holds {n_train}"
        )));
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng::chacha(&[seed, stream::SPLIT]));
    let (train_idx, test_idx) = order.split_at(n_train);

    let mut shards = Vec::with_capacity(volumes.len());
    let mut cursor = 0;
    for &volume in volumes {
        let take = &train_idx[cursor..cursor + volume as usize];
        shards.push(DeviceShard {
            images: take.iter().map(|&i| dataset.images[i].clone()).collect(),
            labels: take.iter().map(|&i| dataset.labels[i]).collect(),
        });
        cursor += volume as usize;
    }

    let test = Dataset {
        images: test_idx.iter().map(|&i| dataset.images[i].clone()).collect(),
        labels: test_idx.iter().map(|&i| dataset.labels[i]).collect(),
        classes: dataset.classes,
        blob_boxes: test_idx
            .iter()
            .map(|&i| dataset.blob_boxes[i])
            .collect(),
    };
    Ok((shards, test))
}
