//! Analysis session over one InD bundle and any number of OOD bundles.
//!
//! Activations are clamped at zero and divided by each neuron's maximum
//! clamped InD activation. InD normalized values therefore lie in `[0, 1]`;
//! OOD values are not capped and may exceed 1. Neurons whose InD maximum is
//! zero are dead and excluded from every ranking, ratio and metric.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bundle::{DatasetBundle, Matrix};
use crate::error::AnalysisError;
use crate::select::{score_desc_id_asc, top_k_by};

/// Number of top images in a neuron grid (3x3).
pub const DEFAULT_TOP_K: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetId {
    Ind,
    Ood(usize),
}

impl DatasetId {
    fn slot(self) -> usize {
        match self {
            DatasetId::Ind => 0,
            DatasetId::Ood(i) => i + 1,
        }
    }

    fn from_slot(slot: usize) -> Self {
        match slot {
            0 => DatasetId::Ind,
            s => DatasetId::Ood(s - 1),
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetId::Ind => f.write_str("ind"),
            DatasetId::Ood(i) => write!(f, "ood{i}"),
        }
    }
}

impl FromStr for DatasetId {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "ind" {
            return Ok(DatasetId::Ind);
        }
        s.strip_prefix("ood")
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse().ok())
            .map(DatasetId::Ood)
            .ok_or_else(|| AnalysisError::UnknownDataset(s.to_string()))
    }
}

impl Serialize for DatasetId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DatasetId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub image_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedNeuron {
    pub neuron_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTopImages {
    pub dataset: DatasetId,
    pub images: Vec<RankedImage>,
    /// Max clamped activation over the dataset divided by the InD max.
    pub activation_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronView {
    pub neuron_id: usize,
    pub datasets: Vec<DatasetTopImages>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionNeuron {
    pub neuron_id: usize,
    pub score: f64,
    pub companion: Vec<RankedImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageView {
    pub dataset: DatasetId,
    pub image_id: usize,
    pub label: u32,
    pub prediction: u32,
    pub companion_dataset: DatasetId,
    pub neurons: Vec<CompanionNeuron>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionSet {
    pub category_a: usize,
    pub category_b: usize,
    pub dataset: DatasetId,
    pub image_ids: Vec<usize>,
}

#[inline]
pub(crate) fn relu(v: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax(row: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

#[derive(Debug, Clone)]
pub struct AnalysisSession {
    datasets: Vec<Arc<DatasetBundle>>,
    layer: String,
    layer_slots: Vec<usize>,
    neuron_count: usize,
    ind_max: Vec<f32>,
    dead: Vec<bool>,
    predictions: Vec<Vec<u32>>,
}

impl AnalysisSession {
    /// Pairs the InD bundle with OOD bundles on one layer.
    pub fn build(
        ind: impl Into<Arc<DatasetBundle>>,
        oods: impl IntoIterator<Item = impl Into<Arc<DatasetBundle>>>,
        layer: &str,
    ) -> Result<Self, AnalysisError> {
        let datasets: Vec<Arc<DatasetBundle>> = std::iter::once(ind.into())
            .chain(oods.into_iter().map(Into::into))
            .collect();
        let ind = &datasets[0];

        let mut layer_slots = Vec::with_capacity(datasets.len());
        let mut neuron_count = None;
        for (slot, bundle) in datasets.iter().enumerate() {
            let id = DatasetId::from_slot(slot);
            if bundle.class_names() != ind.class_names() {
                return Err(AnalysisError::Incompatible(format!(
                    "class names of {id} ({}) differ from the in-distribution set",
                    bundle.name()
                )));
            }
            let pos = bundle
                .layer_specs()
                .iter()
                .position(|l| l.name == layer)
                .ok_or_else(|| {
                    AnalysisError::Incompatible(format!(
                        "layer {layer:?} missing from {id} ({})",
                        bundle.name()
                    ))
                })?;
            let m = bundle.layer_specs()[pos].neuron_count;
            match neuron_count {
                None => neuron_count = Some(m),
                Some(expected) if expected != m => {
                    return Err(AnalysisError::Incompatible(format!(
                        "layer {layer:?} has {m} neurons in {id}, {expected} in the in-distribution set"
                    )))
                }
                _ => {}
            }
            layer_slots.push(pos);
        }
        let neuron_count = neuron_count.expect("at least the InD bundle");

        let ind_acts = &ind.activations()[layer_slots[0]];
        let mut ind_max = vec![0.0f32; neuron_count];
        for i in 0..ind_acts.rows() {
            for (mx, &v) in ind_max.iter_mut().zip(ind_acts.row(i)) {
                *mx = mx.max(relu(v));
            }
        }
        let dead = ind_max.iter().map(|&m| m == 0.0).collect();
        let predictions = datasets
            .iter()
            .map(|b| (0..b.image_count()).map(|i| argmax(b.logits().row(i))).collect())
            .collect();

        Ok(AnalysisSession {
            datasets,
            layer: layer.to_string(),
            layer_slots,
            neuron_count,
            ind_max,
            dead,
            predictions,
        })
    }

    pub fn layer(&self) -> &str {
        &self.layer
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_count
    }

    pub fn class_names(&self) -> &[String] {
        self.datasets[0].class_names()
    }

    pub fn class_count(&self) -> usize {
        self.class_names().len()
    }

    pub fn ood_count(&self) -> usize {
        self.datasets.len() - 1
    }

    pub fn dataset_ids(&self) -> impl Iterator<Item = DatasetId> {
        (0..self.datasets.len()).map(DatasetId::from_slot)
    }

    pub fn ood_ids(&self) -> impl Iterator<Item = DatasetId> {
        (0..self.ood_count()).map(DatasetId::Ood)
    }

    fn slot(&self, id: DatasetId) -> Result<usize, AnalysisError> {
        let slot = id.slot();
        if slot < self.datasets.len() {
            Ok(slot)
        } else {
            Err(AnalysisError::UnknownDataset(id.to_string()))
        }
    }

    pub fn dataset(&self, id: DatasetId) -> Result<&DatasetBundle, AnalysisError> {
        Ok(&self.datasets[self.slot(id)?])
    }

    pub fn bundle_arc(&self, id: DatasetId) -> Result<Arc<DatasetBundle>, AnalysisError> {
        Ok(Arc::clone(&self.datasets[self.slot(id)?]))
    }

    /// Raw (unclamped) activations of the session layer.
    pub fn activations(&self, id: DatasetId) -> Result<&Matrix, AnalysisError> {
        let slot = self.slot(id)?;
        Ok(&self.datasets[slot].activations()[self.layer_slots[slot]])
    }

    pub fn predictions(&self, id: DatasetId) -> Result<&[u32], AnalysisError> {
        Ok(&self.predictions[self.slot(id)?])
    }

    pub fn ind_max(&self) -> &[f32] {
        &self.ind_max
    }

    pub fn dead_mask(&self) -> &[bool] {
        &self.dead
    }

    pub fn is_dead(&self, neuron: usize) -> bool {
        self.dead.get(neuron).copied().unwrap_or(false)
    }

    pub fn live_neurons(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.neuron_count).filter(|&j| !self.dead[j])
    }

    pub(crate) fn check_neuron(&self, neuron: usize) -> Result<(), AnalysisError> {
        if neuron >= self.neuron_count {
            return Err(AnalysisError::OutOfBounds {
                what: "neuron",
                index: neuron,
                len: self.neuron_count,
            });
        }
        if self.dead[neuron] {
            return Err(AnalysisError::DeadNeuron(neuron));
        }
        Ok(())
    }

    fn check_image(&self, id: DatasetId, image: usize) -> Result<(), AnalysisError> {
        let len = self.dataset(id)?.image_count();
        if image >= len {
            return Err(AnalysisError::OutOfBounds {
                what: "image",
                index: image,
                len,
            });
        }
        Ok(())
    }

    /// Normalized value for a live neuron; no bounds or liveness checks.
    #[inline]
    pub(crate) fn normalize(&self, raw: f32, neuron: usize) -> f64 {
        relu(raw) as f64 / self.ind_max[neuron] as f64
    }

    pub fn normalized_activation(
        &self,
        id: DatasetId,
        image: usize,
        neuron: usize,
    ) -> Result<f64, AnalysisError> {
        self.check_neuron(neuron)?;
        self.check_image(id, image)?;
        Ok(self.normalize(self.activations(id)?.get(image, neuron), neuron))
    }

    pub fn activation_ratio(&self, id: DatasetId, neuron: usize) -> Result<f64, AnalysisError> {
        self.check_neuron(neuron)?;
        let max = self
            .activations(id)?
            .column(neuron)
            .fold(0.0f32, |m, v| m.max(relu(v)));
        Ok(max as f64 / self.ind_max[neuron] as f64)
    }

    pub fn top_k_images(
        &self,
        id: DatasetId,
        neuron: usize,
        k: usize,
    ) -> Result<Vec<RankedImage>, AnalysisError> {
        self.check_neuron(neuron)?;
        if k == 0 {
            return Err(AnalysisError::InvalidArgument("k must be at least 1".into()));
        }
        // All values share one divisor, so ranking the clamped raw values is exact.
        let candidates: Vec<(usize, f32)> = self
            .activations(id)?
            .column(neuron)
            .map(relu)
            .enumerate()
            .collect();
        Ok(top_k_by(candidates, k, |a, b| score_desc_id_asc(*a, *b))
            .into_iter()
            .map(|(image_id, v)| RankedImage {
                image_id,
                score: v as f64 / self.ind_max[neuron] as f64,
            })
            .collect())
    }

    /// Top-k images and activation ratio of one neuron in every dataset.
    pub fn neuron_view(&self, neuron: usize, k: usize) -> Result<NeuronView, AnalysisError> {
        let datasets = self
            .dataset_ids()
            .map(|id| {
                Ok(DatasetTopImages {
                    dataset: id,
                    images: self.top_k_images(id, neuron, k)?,
                    activation_ratio: self.activation_ratio(id, neuron)?,
                })
            })
            .collect::<Result<_, AnalysisError>>()?;
        Ok(NeuronView {
            neuron_id: neuron,
            datasets,
        })
    }

    /// Dataset shown next to an anchor: InD for OOD anchors, the first OOD
    /// set (or InD itself when there is none) for InD anchors.
    pub fn default_companion(&self, anchor: DatasetId) -> DatasetId {
        match anchor {
            DatasetId::Ood(_) => DatasetId::Ind,
            DatasetId::Ind if self.ood_count() > 0 => DatasetId::Ood(0),
            DatasetId::Ind => DatasetId::Ind,
        }
    }

    pub fn image_top_neurons(
        &self,
        id: DatasetId,
        image: usize,
        limit: usize,
    ) -> Result<ImageView, AnalysisError> {
        self.image_top_neurons_with(id, image, limit, self.default_companion(id), DEFAULT_TOP_K)
    }

    /// Live neurons ranked by one image's normalized activation, each with the
    /// companion dataset's top-k images for that neuron.
    pub fn image_top_neurons_with(
        &self,
        id: DatasetId,
        image: usize,
        limit: usize,
        companion: DatasetId,
        k: usize,
    ) -> Result<ImageView, AnalysisError> {
        self.check_image(id, image)?;
        self.slot(companion)?;
        let row = self.activations(id)?.row(image);
        let scored: Vec<(usize, f64)> = self
            .live_neurons()
            .map(|j| (j, self.normalize(row[j], j)))
            .collect();
        let neurons = top_k_by(scored, limit, |a, b| score_desc_id_asc(*a, *b))
            .into_iter()
            .map(|(neuron_id, score)| {
                Ok(CompanionNeuron {
                    neuron_id,
                    score,
                    companion: self.top_k_images(companion, neuron_id, k)?,
                })
            })
            .collect::<Result<_, AnalysisError>>()?;
        Ok(ImageView {
            dataset: id,
            image_id: image,
            label: self.dataset(id)?.labels()[image],
            prediction: self.predictions(id)?[image],
            companion_dataset: companion,
            neurons,
        })
    }

    /// Live neurons ranked by mean normalized activation over `images`.
    pub fn category_top_neurons(
        &self,
        id: DatasetId,
        images: &[usize],
        limit: usize,
    ) -> Result<Vec<RankedNeuron>, AnalysisError> {
        if images.is_empty() {
            return Err(AnalysisError::EmptySelection);
        }
        for &i in images {
            self.check_image(id, i)?;
        }
        let acts = self.activations(id)?;
        let mut sums = vec![0.0f64; self.neuron_count];
        for &i in images {
            let row = acts.row(i);
            for j in self.live_neurons() {
                sums[j] += self.normalize(row[j], j);
            }
        }
        let count = images.len() as f64;
        let scored: Vec<(usize, f64)> = self.live_neurons().map(|j| (j, sums[j] / count)).collect();
        Ok(top_k_by(scored, limit, |a, b| score_desc_id_asc(*a, *b))
            .into_iter()
            .map(|(neuron_id, score)| RankedNeuron { neuron_id, score })
            .collect())
    }

    pub fn check_category(&self, category: usize) -> Result<(), AnalysisError> {
        if category >= self.class_count() {
            return Err(AnalysisError::OutOfBounds {
                what: "category",
                index: category,
                len: self.class_count(),
            });
        }
        Ok(())
    }

    /// Images whose ground-truth label is `category`, ascending.
    pub fn images_of_category(
        &self,
        id: DatasetId,
        category: usize,
    ) -> Result<Vec<usize>, AnalysisError> {
        self.check_category(category)?;
        Ok(self
            .dataset(id)?
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l as usize == category)
            .map(|(i, _)| i)
            .collect())
    }

    /// Images with (label, prediction) equal to (a, b) or (b, a), ascending.
    pub fn confusion_set(
        &self,
        id: DatasetId,
        category_a: usize,
        category_b: usize,
    ) -> Result<ConfusionSet, AnalysisError> {
        if category_a == category_b {
            return Err(AnalysisError::InvalidArgument(
                "confusion set needs two different categories".into(),
            ));
        }
        self.check_category(category_a)?;
        self.check_category(category_b)?;
        let (a, b) = (category_a as u32, category_b as u32);
        let labels = self.dataset(id)?.labels();
        let image_ids = labels
            .iter()
            .zip(self.predictions(id)?)
            .enumerate()
            .filter(|(_, (&l, &p))| (l == a && p == b) || (l == b && p == a))
            .map(|(i, _)| i)
            .collect();
        Ok(ConfusionSet {
            category_a,
            category_b,
            dataset: id,
            image_ids,
        })
    }

    /// Fraction of images whose prediction equals the ground-truth label.
    pub fn accuracy(&self, id: DatasetId) -> Result<f64, AnalysisError> {
        let labels = self.dataset(id)?.labels();
        let hits = labels
            .iter()
            .zip(self.predictions(id)?)
            .filter(|(l, p)| l == p)
            .count();
        Ok(hits as f64 / labels.len() as f64)
    }
}
