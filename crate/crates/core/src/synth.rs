//! Analytically constructed fixture bundles modelled on colour-shifted digit datasets.
//!
//! Every category carries a colour code and neuron `j` is tuned to the identity
//! colour `j mod C`: it fires with mean 1.0 on images of that colour and mean 0.0
//! elsewhere. The per-(image, neuron) Gaussian noise draws depend only on the
//! seed, so the InD bundle and any shifted bundle built from the same spec share
//! one noise realisation and differ only by the colour assignment.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bundle::{BundleHeader, DatasetBundle, LayerSpec, Matrix};

pub const SYNTHETIC_LAYER: &str = "penult";
const PREDICTED_LOGIT: f32 = 4.0;
const THUMBNAIL_SIDE: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    Identity,
    Permuted,
    Arbitrary,
    Drifted,
}

impl ShiftKind {
    pub const ALL: [ShiftKind; 4] = [
        ShiftKind::Identity,
        ShiftKind::Permuted,
        ShiftKind::Arbitrary,
        ShiftKind::Drifted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShiftKind::Identity => "identity",
            ShiftKind::Permuted => "permuted",
            ShiftKind::Arbitrary => "arbitrary",
            ShiftKind::Drifted => "drifted",
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShiftKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShiftKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SynthError::InvalidSpec(format!("unknown shift kind {s:?}")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticShiftSpec {
    pub category_count: usize,
    pub images_per_category: usize,
    pub neuron_count: usize,
    pub shift_kind: ShiftKind,
    pub drift_magnitude: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Attach an 8x8 solid-colour PNG per image.
    #[serde(default)]
    pub thumbnails: bool,
}

impl Default for SyntheticShiftSpec {
    fn default() -> Self {
        SyntheticShiftSpec {
            category_count: 10,
            images_per_category: 100,
            neuron_count: 50,
            shift_kind: ShiftKind::Identity,
            drift_magnitude: 0.1,
            noise_sigma: 0.05,
            seed: 0,
            thumbnails: false,
        }
    }
}

impl SyntheticShiftSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.category_count < 2 {
            return fail("category_count must be at least 2");
        }
        if self.images_per_category == 0 {
            return fail("images_per_category must be at least 1");
        }
        if self.neuron_count == 0 {
            return fail("neuron_count must be at least 1");
        }
        if !self.drift_magnitude.is_finite() || !(0.0..=1.0).contains(&self.drift_magnitude) {
            return fail("drift_magnitude must be a finite value in [0, 1]");
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return fail("noise_sigma must be finite and non-negative");
        }
        if u32::try_from(2 * self.category_count).is_err() {
            return fail("category_count too large");
        }
        Ok(())
    }

    pub fn with_kind(&self, kind: ShiftKind) -> Self {
        SyntheticShiftSpec {
            shift_kind: kind,
            ..self.clone()
        }
    }

    pub fn image_count(&self) -> usize {
        self.category_count * self.images_per_category
    }
}

/// Per-category colour code and the category the logits route it to.
///
/// Identity colours are `0..C`; arbitrary colours are fresh codes in `C..2C`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorAssignment {
    pub colors: Vec<u32>,
    pub predicted: Vec<u32>,
}

/// Seeded permutation of `0..n` without fixed points (rejection sampling).
pub fn derangement(n: usize, rng: &mut impl rand::Rng) -> Vec<u32> {
    let mut perm: Vec<u32> = (0..n as u32).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| p as usize != i) {
            return perm;
        }
    }
}

fn assignment_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn color_assignment(spec: &SyntheticShiftSpec) -> ColorAssignment {
    let c = spec.category_count;
    let identity: Vec<u32> = (0..c as u32).collect();
    match spec.shift_kind {
        ShiftKind::Identity | ShiftKind::Drifted => ColorAssignment {
            colors: identity.clone(),
            predicted: identity,
        },
        ShiftKind::Permuted => {
            let sigma = derangement(c, &mut assignment_rng(spec.seed));
            ColorAssignment {
                colors: sigma.clone(),
                predicted: sigma,
            }
        }
        ShiftKind::Arbitrary => {
            // Fresh code C + k is closest to identity colour k, so the logits route it there.
            let mut nearest = identity;
            nearest.shuffle(&mut assignment_rng(spec.seed));
            ColorAssignment {
                colors: nearest.iter().map(|&k| c as u32 + k).collect(),
                predicted: nearest,
            }
        }
    }
}

/// Builds the bundle for `spec.shift_kind`. Pure function of `spec`.
pub fn generate_synthetic_bundle(spec: &SyntheticShiftSpec) -> Result<DatasetBundle, SynthError> {
    spec.validate()?;
    let c = spec.category_count;
    let m = spec.neuron_count;
    let n = spec.image_count();
    let assignment = color_assignment(spec);
    let scale = match spec.shift_kind {
        ShiftKind::Drifted => 1.0 - spec.drift_magnitude,
        _ => 1.0,
    };

    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("validated sigma"));

    let mut labels = Vec::with_capacity(n);
    let mut logits = Matrix::zeros(n, c);
    let mut activations = Matrix::zeros(n, m);
    for image in 0..n {
        let category = image / spec.images_per_category;
        let color = assignment.colors[category] as usize;
        labels.push(category as u32);
        logits.set(image, assignment.predicted[category] as usize, PREDICTED_LOGIT);
        for neuron in 0..m {
            let mean = if color == neuron % c { 1.0 } else { 0.0 };
            let eps = noise.map_or(0.0, |d| d.sample(&mut noise_rng));
            activations.set(image, neuron, (scale * (mean + eps)) as f32);
        }
    }

    let thumbnails = spec.thumbnails.then(|| {
        let per_code: Vec<Vec<u8>> = (0..2 * c).map(|code| solid_png(code, 2 * c)).collect();
        (0..n)
            .map(|i| per_code[assignment.colors[i / spec.images_per_category] as usize].clone())
            .collect()
    });

    let header = BundleHeader {
        dataset_name: format!("synthetic-{}", spec.shift_kind),
        class_names: (0..c).map(|k| k.to_string()).collect(),
        image_count: n,
        layer_specs: vec![LayerSpec {
            name: SYNTHETIC_LAYER.to_string(),
            neuron_count: m,
        }],
        has_thumbnails: spec.thumbnails,
    };
    Ok(DatasetBundle::new(header, labels, logits, vec![activations], thumbnails)
        .expect("synthetic bundle is valid by construction"))
}

/// The InD bundle (identity colours) paired with the bundle for `spec.shift_kind`.
pub fn generate_pair(spec: &SyntheticShiftSpec) -> Result<(DatasetBundle, DatasetBundle), SynthError> {
    let ind = generate_synthetic_bundle(&spec.with_kind(ShiftKind::Identity))?;
    let ood = generate_synthetic_bundle(spec)?;
    Ok((ind, ood))
}

/// Shape of a [`random_bundle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomBundleShape {
    pub classes: usize,
    pub images: usize,
    pub neurons: usize,
    pub layers: usize,
    pub thumbnails: bool,
}

/// Bundle of standard-normal activations and logits with uniform labels,
/// fully determined by `seed`. When `images >= classes` every class appears.
/// Layer `l` is named `layer{l}` and has `neurons + l` neurons.
pub fn random_bundle(shape: RandomBundleShape, seed: u64) -> DatasetBundle {
    use rand::Rng;
    let RandomBundleShape { classes, images, neurons, layers, thumbnails } = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    let labels: Vec<u32> = (0..images)
        .map(|i| if i < classes { i as u32 } else { rng.random_range(0..classes as u32) })
        .collect();
    let matrix = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
            .expect("sized data")
    };
    let logits = matrix(images, classes, &mut rng);
    let layer_specs: Vec<LayerSpec> = (0..layers)
        .map(|l| LayerSpec { name: format!("layer{l}"), neuron_count: neurons + l })
        .collect();
    let activations = layer_specs
        .iter()
        .map(|l| matrix(images, l.neuron_count, &mut rng))
        .collect();
    let thumbs = thumbnails.then(|| {
        (0..images)
            .map(|i| match i % 3 {
                0 => Vec::new(),
                _ => solid_png(rng.random_range(0..16), 16),
            })
            .collect()
    });
    let header = BundleHeader {
        dataset_name: format!("random-{seed}"),
        class_names: (0..classes).map(|c| format!("class_{c}")).collect(),
        image_count: images,
        layer_specs,
        has_thumbnails: thumbnails,
    };
    DatasetBundle::new(header, labels, logits, activations, thumbs).expect("random bundle is valid")
}

fn hue_to_rgb(hue: f64) -> [u8; 3] {
    let h = (hue.rem_euclid(1.0)) * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

fn solid_png(code: usize, palette_size: usize) -> Vec<u8> {
    let rgb = hue_to_rgb(code as f64 / palette_size as f64);
    let pixels: Vec<u8> = rgb
        .iter()
        .copied()
        .cycle()
        .take(3 * (THUMBNAIL_SIDE * THUMBNAIL_SIDE) as usize)
        .collect();
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, THUMBNAIL_SIDE, THUMBNAIL_SIDE);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().expect("in-memory png header");
    writer.write_image_data(&pixels).expect("in-memory png data");
    writer.finish().expect("in-memory png finish");
    out
}
