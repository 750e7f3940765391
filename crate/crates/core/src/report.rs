//! Self-describing analysis report written by `deephys analyze`.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::metrics::{shift_report_with, ShiftReport};
use crate::session::{AnalysisSession, DatasetId};
use crate::stats::DEFAULT_DENSITY_POINTS;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub id: DatasetId,
    pub name: String,
    pub image_count: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub layer: String,
    pub neuron_count: usize,
    pub class_count: usize,
    pub class_names: Vec<String>,
    pub live_neurons: usize,
    pub dead_neurons: Vec<usize>,
    pub datasets: Vec<DatasetDescriptor>,
}

impl SessionDescriptor {
    pub fn of(session: &AnalysisSession) -> Self {
        let datasets = session
            .dataset_ids()
            .map(|id| {
                let bundle = session.dataset(id).expect("id from session");
                DatasetDescriptor {
                    id,
                    name: bundle.name().to_string(),
                    image_count: bundle.image_count(),
                    accuracy: session.accuracy(id).expect("id from session"),
                }
            })
            .collect();
        SessionDescriptor {
            layer: session.layer().to_string(),
            neuron_count: session.neuron_count(),
            class_count: session.class_count(),
            class_names: session.class_names().to_vec(),
            live_neurons: session.live_neurons().count(),
            dead_neurons: (0..session.neuron_count()).filter(|&j| session.is_dead(j)).collect(),
            datasets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRatio {
    pub dataset: DatasetId,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetImageIds {
    pub dataset: DatasetId,
    pub image_ids: Vec<usize>,
}

/// Compact per-neuron summary: ratios and top image ids per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronDigest {
    pub neuron_id: usize,
    pub dead: bool,
    pub ind_max: f32,
    pub activation_ratios: Vec<DatasetRatio>,
    pub top_images: Vec<DatasetImageIds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub tool_version: String,
    pub top_k: usize,
    pub session: SessionDescriptor,
    pub shift_reports: Vec<ShiftReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neuron_digests: Option<Vec<NeuronDigest>>,
}

pub fn neuron_digests(session: &AnalysisSession, k: usize) -> Result<Vec<NeuronDigest>, AnalysisError> {
    (0..session.neuron_count())
        .map(|j| {
            let dead = session.is_dead(j);
            let (activation_ratios, top_images) = if dead {
                (Vec::new(), Vec::new())
            } else {
                let ratios = session
                    .ood_ids()
                    .map(|id| Ok(DatasetRatio { dataset: id, ratio: session.activation_ratio(id, j)? }))
                    .collect::<Result<_, AnalysisError>>()?;
                let tops = session
                    .dataset_ids()
                    .map(|id| {
                        Ok(DatasetImageIds {
                            dataset: id,
                            image_ids: session.top_k_images(id, j, k)?.iter().map(|r| r.image_id).collect(),
                        })
                    })
                    .collect::<Result<_, AnalysisError>>()?;
                (ratios, tops)
            };
            Ok(NeuronDigest {
                neuron_id: j,
                dead,
                ind_max: session.ind_max()[j],
                activation_ratios,
                top_images,
            })
        })
        .collect()
}

impl ReportDocument {
    pub fn build(session: &AnalysisSession, top_k: usize, with_digests: bool) -> Result<Self, AnalysisError> {
        let shift_reports = session
            .ood_ids()
            .map(|id| shift_report_with(session, id, DEFAULT_DENSITY_POINTS))
            .collect::<Result<_, _>>()?;
        Ok(ReportDocument {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            top_k,
            session: SessionDescriptor::of(session),
            shift_reports,
            neuron_digests: if with_digests {
                Some(neuron_digests(session, top_k)?)
            } else {
                None
            },
        })
    }

    pub fn to_json_pretty(&self) -> String {
        crate::json::to_string_pretty(self)
    }
}
