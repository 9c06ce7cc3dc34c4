//! Metrics, pair generation, the synthetic corpus and the evaluation harness.

mod metrics;
mod pairs;
mod synth;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{align_error, area_error, pos_error, truth_alignments};
pub use pairs::{kfold, make_pairs, reading_order, split, ChunkMode, FoldPlan, PairSample, MIN_PAIR_ELEMENTS};
pub use synth::{gen_synthetic, generate, SynthConfig, Template, CANVAS_H, CANVAS_W};

use crate::autocomplete::{cold_start, refine, Confidence, RefineConfig, RefineInput, Suggester, TargetPredictor};
use crate::error::{LayoutError, Result};
use crate::extract::{extract_all, extract_placed, ExtractionConfig};
use crate::model::{gui_from_json, gui_to_json, BBox, ConstraintNode, Element, Gui};
use crate::network::Network;

/// Writes each GUI to `dir/<id>.json` in canonical form.
pub fn write_dataset(dir: &Path, items: &[(String, Gui)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (id, g) in items {
        std::fs::write(dir.join(format!("{id}.json")), gui_to_json(g))?;
    }
    Ok(())
}

/// Reads every `*.json` in `dir`, sorted by file name; ids are file stems.
pub fn read_dataset(dir: &Path) -> Result<Vec<(String, Gui)>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let g = gui_from_json(&std::fs::read(&p)?)
                .map_err(|e| LayoutError::Validation(format!("{}: {e}", p.display())))?;
            Ok((id, g))
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[PairSample]) -> Result<()> {
    std::fs::write(path, serde_json::to_vec(pairs)?)?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairSample>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Whether the held-out `target` (placed at its truth) satisfies each of
/// `constraints`: alignments and sizes within `tol`; a group when
/// re-extraction with the target yields a group of the same family that
/// contains all old members and the target.
pub fn constraint_flags(partial: &Gui, constraints: &[ConstraintNode], target: &Element, cfg: &ExtractionConfig) -> Result<Vec<f64>> {
    let b = target.bbox_or_err()?;
    let regrouped = if constraints.iter().any(|c| c.family().is_group()) {
        let mut full = partial.placed_subset();
        full.elements.push(target.clone());
        extract_all(&full, cfg)?
            .into_iter()
            .filter(|c| c.family().is_group() && c.has_member(&target.id))
            .collect()
    } else {
        Vec::new()
    };
    Ok(constraints
        .iter()
        .map(|c| {
            let hit = match c.satisfied_within(&b, cfg.tol) {
                Some(ok) => ok,
                None => regrouped
                    .iter()
                    .any(|d: &ConstraintNode| d.family() == c.family() && c.members.iter().all(|m| d.has_member(m))),
            };
            f64::from(u8::from(hit))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub bbox: BBox,
    pub confidence: Option<Confidence>,
}

/// Produces a placement for the held-out element of a pair.
pub trait Placer: Sync {
    fn name(&self) -> &str;
    fn place(&self, sample: &PairSample) -> Result<Placement>;
}

/// The trained model with refinement.
pub struct ModelPlacer<'a> {
    pub net: &'a Network,
    pub refine: RefineConfig,
    pub extraction: ExtractionConfig,
}

impl Placer for ModelPlacer<'_> {
    fn name(&self) -> &str {
        "model"
    }

    fn place(&self, s: &PairSample) -> Result<Placement> {
        let sug = Suggester {
            predictor: self.net,
            refine: self.refine,
            extraction: self.extraction,
        }
        .suggest_for(&s.query(), &s.target.id)?;
        Ok(Placement {
            bbox: sug.bbox,
            confidence: Some(sug.confidence),
        })
    }
}

/// Canvas centre, 10% of the canvas area, the target's true aspect ratio.
pub struct CenterPlacer;

impl Placer for CenterPlacer {
    fn name(&self) -> &str {
        "center"
    }

    fn place(&self, s: &PairSample) -> Result<Placement> {
        Ok(Placement {
            bbox: cold_start(&s.partial, &s.target.as_target()).bbox,
            confidence: None,
        })
    }
}

/// Returns the ground truth.
pub struct OraclePlacer;

impl Placer for OraclePlacer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn place(&self, s: &PairSample) -> Result<Placement> {
        Ok(Placement {
            bbox: s.target.bbox_or_err()?,
            confidence: None,
        })
    }
}

/// The model's raw placement refined with ground-truth constraint flags in
/// place of predicted probabilities.
pub struct OracleConstraintPlacer<'a> {
    pub net: &'a Network,
    pub refine: RefineConfig,
    pub extraction: ExtractionConfig,
}

impl Placer for OracleConstraintPlacer<'_> {
    fn name(&self) -> &str {
        "oracle_constraints"
    }

    fn place(&self, s: &PairSample) -> Result<Placement> {
        let target = s.target.as_target();
        let query = s.query();
        if s.placed_count() == 0 {
            return Ok(Placement {
                bbox: cold_start(&query, &target).bbox,
                confidence: Some(Confidence::Low),
            });
        }
        let constraints = extract_placed(&s.partial, &self.extraction)?;
        let pred = self.net.predict_target(&query, &constraints, &target)?;
        let flags = constraint_flags(&s.partial, &pred.constraints, &s.target, &self.extraction)?;
        let r = refine(
            &RefineInput {
                raw: pred.bbox,
                probs: &flags,
                constraints: &pred.constraints,
                partial: &query,
                target: &target,
            },
            &self.refine,
        );
        Ok(Placement {
            bbox: r.bbox,
            confidence: Some(r.confidence),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub pos_error: f64,
    pub area_error: f64,
    pub align_error: f64,
}

impl MetricSummary {
    fn from_rows<'a>(rows: impl IntoIterator<Item = &'a [f64; 3]>) -> Self {
        let mut s = MetricSummary::default();
        for r in rows {
            s.count += 1;
            s.pos_error += r[0];
            s.area_error += r[1];
            s.align_error += r[2];
        }
        if s.count > 0 {
            let n = s.count as f64;
            s.pos_error /= n;
            s.area_error /= n;
            s.align_error /= n;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    /// Number of pre-existing (placed) elements.
    pub placed: usize,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub placer: String,
    pub overall: MetricSummary,
    pub buckets: Vec<BucketReport>,
    /// Metrics over High-confidence placements only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<MetricSummary>,
    pub confidence_counts: BTreeMap<String, usize>,
    /// Mean wall time of one placement, in seconds.
    pub mean_seconds: f64,
}

struct Row {
    placed: usize,
    metrics: [f64; 3],
    confidence: Option<Confidence>,
    seconds: f64,
}

/// Runs `placer` over every pair and averages the metrics overall, per
/// bucket of pre-existing element count, and over High placements.
pub fn evaluate(placer: &dyn Placer, samples: &[PairSample], cfg: &ExtractionConfig) -> Result<MetricReport> {
    let rows = samples
        .par_iter()
        .map(|s| {
            let truth = s.target.bbox_or_err()?;
            let start = Instant::now();
            let p = placer.place(s)?;
            let seconds = start.elapsed().as_secs_f64();
            let aligns = truth_alignments(&s.partial, &s.target, cfg)?;
            Ok(Row {
                placed: s.placed_count(),
                metrics: [
                    pos_error(&p.bbox, &truth, s.partial.canvas),
                    area_error(&p.bbox, &truth),
                    align_error(&p.bbox, &aligns, cfg.tol),
                ],
                confidence: p.confidence,
                seconds,
            })
        })
        .collect::<Result<Vec<Row>>>()?;

    let mut by_bucket: BTreeMap<usize, Vec<&[f64; 3]>> = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for r in &rows {
        by_bucket.entry(r.placed).or_default().push(&r.metrics);
        if let Some(c) = r.confidence {
            *counts.entry(c.name().to_string()).or_insert(0) += 1;
        }
    }
    let high: Vec<&[f64; 3]> = rows
        .iter()
        .filter(|r| r.confidence == Some(Confidence::High))
        .map(|r| &r.metrics)
        .collect();
    Ok(MetricReport {
        placer: placer.name().to_string(),
        overall: MetricSummary::from_rows(rows.iter().map(|r| &r.metrics)),
        buckets: by_bucket
            .into_iter()
            .map(|(placed, v)| BucketReport {
                placed,
                metrics: MetricSummary::from_rows(v),
            })
            .collect(),
        high: (!high.is_empty()).then(|| MetricSummary::from_rows(high)),
        confidence_counts: counts,
        mean_seconds: if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.seconds).sum::<f64>() / rows.len() as f64
        },
    })
}
