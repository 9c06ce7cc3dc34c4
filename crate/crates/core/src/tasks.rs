//! Downstream uses of the graph embedding: topic classification and
//! nearest-neighbour retrieval.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::extract::{extract_all, ExtractionConfig};
use crate::model::Gui;
use crate::network::{Network, Task};
use crate::tensor::{Checkpoint, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub topic: String,
    pub probabilities: Vec<TopicProbability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicProbability {
    pub topic: String,
    pub p: f64,
}

fn require(net: &Network, task: Task) -> Result<()> {
    if net.task != task {
        return Err(LayoutError::Validation(format!(
            "checkpoint was trained for {:?}, not {task:?}",
            net.task
        )));
    }
    Ok(())
}

/// Graph embedding of a GUI's placed elements under their extracted constraints.
pub fn embed(net: &Network, gui: &Gui, cfg: &ExtractionConfig) -> Result<Vec<f64>> {
    let placed = gui.placed_subset();
    let cs = extract_all(&placed, cfg)?;
    net.graph_vector(&placed, &cs)
}

/// Most probable topic (ties → earlier topic) and the full distribution.
pub fn classify(net: &Network, gui: &Gui, cfg: &ExtractionConfig) -> Result<Classification> {
    require(net, Task::Classify)?;
    let placed = gui.placed_subset();
    let cs = extract_all(&placed, cfg)?;
    let probs = net.topic_probabilities(&placed, &cs)?;
    let topics = &net.config().topics;
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(Classification {
        topic: topics[best].clone(),
        probabilities: topics
            .iter()
            .zip(&probs)
            .map(|(t, &p)| TopicProbability { topic: t.clone(), p })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Distance::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
}

/// GUI ids with their graph embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub distance: Distance,
}

#[derive(Serialize, Deserialize)]
struct IndexMeta {
    kind: String,
    ids: Vec<String>,
    distance: Distance,
}

impl EmbeddingIndex {
    pub fn build(net: &Network, items: &[(String, Gui)], cfg: &ExtractionConfig, distance: Distance) -> Result<Self> {
        let vectors = items
            .par_iter()
            .map(|(_, g)| embed(net, g, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingIndex {
            ids: items.iter().map(|(id, _)| id.clone()).collect(),
            vectors,
            distance,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The `k` nearest entries to `query`, ascending by distance then id,
    /// skipping `exclude` (the query's own id when it is indexed).
    pub fn retrieve(&self, query: &[f64], k: usize, exclude: Option<&str>) -> Result<Vec<Neighbor>> {
        let mut all: Vec<Neighbor> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .filter(|(id, _)| Some(id.as_str()) != exclude)
            .map(|(id, v)| {
                if v.len() != query.len() {
                    return Err(LayoutError::Shape(format!(
                        "query width {} vs index width {}",
                        query.len(),
                        v.len()
                    )));
                }
                Ok(Neighbor {
                    id: id.clone(),
                    distance: self.distance.between(query, v),
                })
            })
            .collect::<Result<_>>()?;
        if k == 0 || k > all.len() {
            return Err(LayoutError::OutOfRange(format!(
                "k = {k} with {} candidates",
                all.len()
            )));
        }
        all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
        all.truncate(k);
        Ok(all)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let dim = self.vectors.first().map_or(0, Vec::len);
        let meta = IndexMeta {
            kind: "embedding_index".into(),
            ids: self.ids.clone(),
            distance: self.distance,
        };
        let mut ck = Checkpoint::new(serde_json::to_value(meta)?);
        if dim > 0 {
            let data = self.vectors.iter().flatten().copied().collect();
            ck.arrays.push(("vectors".into(), Tensor::new(self.len(), dim, data)?));
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: IndexMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| LayoutError::Checkpoint(format!("index metadata: {e}")))?;
        if meta.kind != "embedding_index" {
            return Err(LayoutError::Checkpoint("not an embedding index".into()));
        }
        let vectors = match ck.get("vectors") {
            Some(t) if t.rows() == meta.ids.len() => (0..t.rows()).map(|r| t.row(r).to_vec()).collect(),
            None if meta.ids.is_empty() => Vec::new(),
            _ => return Err(LayoutError::Checkpoint("index vectors do not match ids".into())),
        };
        Ok(EmbeddingIndex {
            ids: meta.ids,
            vectors,
            distance: meta.distance,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
