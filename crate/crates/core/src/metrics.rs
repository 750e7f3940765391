//! Category-mean profiles and the two shift metrics.
//!
//! A neuron's profile for a dataset is the mean normalized activation over the
//! images of each ground-truth category. Novelty compares the profile peaks
//! (InD peak minus OOD peak, kept only when positive; the peaks may sit at
//! different categories). The spurious score is `1 - |rho|` for the Spearman
//! correlation of the two profiles. The absolute value means a perfectly
//! anti-correlated neuron scores 0.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::session::{AnalysisSession, DatasetId};
use crate::stats::{density_curve, spearman_rho, DensityPoint, DEFAULT_DENSITY_POINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronCategoryProfile {
    pub neuron_id: usize,
    pub dataset: DatasetId,
    pub means: Vec<f64>,
}

impl NeuronCategoryProfile {
    pub fn peak(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronScore {
    pub neuron_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    Dead,
    ConstantProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedNeuron {
    pub neuron_id: usize,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub ood: DatasetId,
    pub ood_name: String,
    /// Retained (strictly positive) novelty scores, by neuron id.
    pub novelty: Vec<NeuronScore>,
    pub novelty_retained: usize,
    pub spurious: Vec<NeuronScore>,
    /// `None` when fewer than two scores are available.
    pub novelty_density: Option<Vec<DensityPoint>>,
    pub spurious_density: Option<Vec<DensityPoint>>,
    pub excluded_neurons: Vec<ExcludedNeuron>,
}

fn category_means(
    session: &AnalysisSession,
    id: DatasetId,
    neuron: usize,
) -> Result<Vec<f64>, AnalysisError> {
    let bundle = session.dataset(id)?;
    let acts = session.activations(id)?;
    let c = session.class_count();
    let mut sums = vec![0.0f64; c];
    let mut counts = vec![0usize; c];
    for (image, &label) in bundle.labels().iter().enumerate() {
        sums[label as usize] += session.normalize(acts.get(image, neuron), neuron);
        counts[label as usize] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(AnalysisError::EmptyCategory {
            dataset: id,
            category: session.class_names()[empty].clone(),
        });
    }
    Ok(sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect())
}

pub fn category_profile(
    session: &AnalysisSession,
    id: DatasetId,
    neuron: usize,
) -> Result<NeuronCategoryProfile, AnalysisError> {
    session.check_neuron(neuron)?;
    Ok(NeuronCategoryProfile {
        neuron_id: neuron,
        dataset: id,
        means: category_means(session, id, neuron)?,
    })
}

/// InD-peak minus OOD-peak for one live neuron, before the positivity filter.
pub fn novelty_difference(ind: &NeuronCategoryProfile, ood: &NeuronCategoryProfile) -> f64 {
    ind.peak() - ood.peak()
}

/// `1 - |rho|` between two profiles.
pub fn spurious_from_profiles(ind: &[f64], ood: &[f64]) -> Result<f64, AnalysisError> {
    Ok(1.0 - spearman_rho(ind, ood)?.abs())
}

fn profile_pairs(
    session: &AnalysisSession,
    ood: DatasetId,
) -> Result<Vec<(NeuronCategoryProfile, NeuronCategoryProfile)>, AnalysisError> {
    session.dataset(ood)?;
    session
        .live_neurons()
        .map(|j| {
            Ok((
                category_profile(session, DatasetId::Ind, j)?,
                category_profile(session, ood, j)?,
            ))
        })
        .collect()
}

fn novelty_from_pairs(pairs: &[(NeuronCategoryProfile, NeuronCategoryProfile)]) -> Vec<NeuronScore> {
    pairs
        .iter()
        .map(|(ind, ood)| NeuronScore {
            neuron_id: ind.neuron_id,
            score: novelty_difference(ind, ood),
        })
        .filter(|s| s.score > 0.0)
        .collect()
}

fn spurious_from_pairs(
    pairs: &[(NeuronCategoryProfile, NeuronCategoryProfile)],
) -> Result<(Vec<NeuronScore>, Vec<ExcludedNeuron>), AnalysisError> {
    let mut scores = Vec::new();
    let mut excluded = Vec::new();
    for (ind, ood) in pairs {
        match spurious_from_profiles(&ind.means, &ood.means) {
            Ok(score) => scores.push(NeuronScore {
                neuron_id: ind.neuron_id,
                score,
            }),
            Err(AnalysisError::UndefinedCorrelation) => excluded.push(ExcludedNeuron {
                neuron_id: ind.neuron_id,
                reason: ExclusionReason::ConstantProfile,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok((scores, excluded))
}

/// Positive novelty scores of live neurons, ascending neuron id.
pub fn novelty_scores(session: &AnalysisSession, ood: DatasetId) -> Result<Vec<NeuronScore>, AnalysisError> {
    Ok(novelty_from_pairs(&profile_pairs(session, ood)?))
}

/// Spurious scores of eligible neurons; neurons with a constant profile in
/// either dataset are returned separately.
pub fn spurious_scores(
    session: &AnalysisSession,
    ood: DatasetId,
) -> Result<(Vec<NeuronScore>, Vec<ExcludedNeuron>), AnalysisError> {
    spurious_from_pairs(&profile_pairs(session, ood)?)
}

fn optional_density(scores: &[NeuronScore], points: usize) -> Result<Option<Vec<DensityPoint>>, AnalysisError> {
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    match density_curve(&values, points) {
        Ok(curve) => Ok(Some(curve)),
        Err(AnalysisError::InsufficientData { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn shift_report(session: &AnalysisSession, ood: DatasetId) -> Result<ShiftReport, AnalysisError> {
    shift_report_with(session, ood, DEFAULT_DENSITY_POINTS)
}

pub fn shift_report_with(
    session: &AnalysisSession,
    ood: DatasetId,
    points: usize,
) -> Result<ShiftReport, AnalysisError> {
    let pairs = profile_pairs(session, ood)?;
    let novelty = novelty_from_pairs(&pairs);
    let (spurious, constant) = spurious_from_pairs(&pairs)?;

    let mut excluded: Vec<ExcludedNeuron> = (0..session.neuron_count())
        .filter(|&j| session.is_dead(j))
        .map(|neuron_id| ExcludedNeuron {
            neuron_id,
            reason: ExclusionReason::Dead,
        })
        .chain(constant)
        .collect();
    excluded.sort_by_key(|e| e.neuron_id);

    Ok(ShiftReport {
        ood,
        ood_name: session.dataset(ood)?.name().to_string(),
        novelty_retained: novelty.len(),
        novelty_density: optional_density(&novelty, points)?,
        spurious_density: optional_density(&spurious, points)?,
        novelty,
        spurious,
        excluded_neurons: excluded,
    })
}

/// Median of the scores; `None` for an empty list.
pub fn median_score(scores: &[NeuronScore]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = scores.iter().map(|s| s.score).collect();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}
