//! Suggestion modes: one element, a group of elements, or the whole pool.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::refine::{group_run, normalize_raw, refine, Confidence, RefineConfig, RefineInput};
use crate::error::{LayoutError, Result};
use crate::extract::{extract_placed, ExtractionConfig};
use crate::model::{ratio_consistent, BBox, ConstraintFamily, ConstraintNode, Element, Gui};
use crate::network::Network;

/// Raw output of a target predictor, in pixels, with constraint
/// probabilities aligned to `constraints`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub bbox: [f64; 4],
    pub constraints: Vec<ConstraintNode>,
    pub probs: Vec<f64>,
}

/// Anything that can place one unplaced element given the placed layout.
pub trait TargetPredictor: Send + Sync {
    fn predict_target(&self, gui: &Gui, constraints: &[ConstraintNode], target: &Element) -> Result<RawPrediction>;
}

impl TargetPredictor for Network {
    fn predict_target(&self, gui: &Gui, constraints: &[ConstraintNode], target: &Element) -> Result<RawPrediction> {
        let p = self.prepare(gui, constraints, Some(target))?;
        let (v, probs) = self.predict_prepared(&p)?;
        let (cw, ch) = (gui.canvas.w as f64, gui.canvas.h as f64);
        Ok(RawPrediction {
            bbox: [v[0] * cw, v[1] * ch, v[2] * cw, v[3] * ch],
            constraints: p.graph.constraints,
            probs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredConstraint {
    pub id: String,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for RawBox {
    fn from(v: [f64; 4]) -> Self {
        RawBox {
            x: v[0],
            y: v[1],
            w: v[2],
            h: v[3],
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub element_id: String,
    pub bbox: BBox,
    pub confidence: Confidence,
    pub constraints: Vec<ScoredConstraint>,
    pub trace: Vec<String>,
    pub raw: RawBox,
    #[serde(default, skip_serializing_if = "is_false")]
    pub cold_start: bool,
}

impl Suggestion {
    /// Mean probability of the constraints the suggestion satisfies (0 if none).
    pub fn mean_probability(&self) -> f64 {
        if self.constraints.is_empty() {
            0.0
        } else {
            self.constraints.iter().map(|c| c.p).sum::<f64>() / self.constraints.len() as f64
        }
    }
}

/// Suggestion for a target on an empty canvas: centred, 10% of the canvas
/// area, the target's aspect ratio, `Low`.
pub fn cold_start(gui: &Gui, target: &Element) -> Suggestion {
    let (cw, ch) = (gui.canvas.w as f64, gui.canvas.h as f64);
    let r = target.ratio().unwrap_or(1.0);
    let area = 0.1 * cw * ch;
    let w = (area * r).sqrt();
    let h = w / r;
    let raw = [(cw - w) / 2.0, (ch - h) / 2.0, w, h];
    Suggestion {
        element_id: target.id.clone(),
        bbox: normalize_raw(raw, r, gui.canvas),
        confidence: Confidence::Low,
        constraints: Vec::new(),
        trace: vec!["cold start: no placed elements".into()],
        raw: raw.into(),
        cold_start: true,
    }
}

/// Places `id` at `bbox`. The box must lie inside the canvas; overlap is
/// allowed. A declared aspect ratio that the new box contradicts (a
/// designer resize) is dropped in favour of the box's own.
pub fn accept(gui: &Gui, id: &str, bbox: BBox) -> Result<Gui> {
    bbox.validate()?;
    if !bbox.inside(gui.canvas) {
        return Err(LayoutError::OutOfRange(format!(
            "bbox ({}, {}, {}, {}) is outside the {}x{} canvas",
            bbox.x, bbox.y, bbox.w, bbox.h, gui.canvas.w, gui.canvas.h
        )));
    }
    let mut out = gui.clone();
    let e = out
        .element_mut(id)
        .ok_or_else(|| LayoutError::UnknownElement(id.to_string()))?;
    if e.is_placed() {
        return Err(LayoutError::Validation(format!("element `{id}` is already placed")));
    }
    e.bbox = Some(bbox);
    if e.aspect_ratio.is_some_and(|r| !ratio_consistent(bbox.w, bbox.h, r)) {
        e.aspect_ratio = None;
    }
    Ok(out)
}

fn rank(a: &Suggestion, b: &Suggestion) -> Ordering {
    // best first
    b.confidence
        .cmp(&a.confidence)
        .then_with(|| {
            b.mean_probability()
                .partial_cmp(&a.mean_probability())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.element_id.cmp(&b.element_id))
}

/// Prediction plus refinement under fixed configuration.
#[derive(Clone, Copy)]
pub struct Suggester<'a> {
    pub predictor: &'a dyn TargetPredictor,
    pub refine: RefineConfig,
    pub extraction: ExtractionConfig,
}

impl<'a> Suggester<'a> {
    pub fn new(predictor: &'a dyn TargetPredictor) -> Self {
        Suggester {
            predictor,
            refine: RefineConfig::default(),
            extraction: ExtractionConfig::default(),
        }
    }

    fn pending<'g>(&self, gui: &'g Gui, id: &str) -> Result<&'g Element> {
        let t = gui
            .element(id)
            .ok_or_else(|| LayoutError::UnknownElement(id.to_string()))?;
        if t.is_placed() {
            return Err(LayoutError::Validation(format!("element `{id}` is already placed")));
        }
        Ok(t)
    }

    fn predict(&self, gui: &Gui, constraints: &[ConstraintNode], target: &Element) -> Result<RawPrediction> {
        let pred = self.predictor.predict_target(gui, constraints, &target.as_target())?;
        if pred.probs.len() != pred.constraints.len() {
            return Err(LayoutError::Shape(format!(
                "{} probabilities for {} constraints",
                pred.probs.len(),
                pred.constraints.len()
            )));
        }
        Ok(pred)
    }

    fn refine_prediction(&self, gui: &Gui, target: &Element, pred: &RawPrediction) -> Suggestion {
        let r = refine(
            &RefineInput {
                raw: pred.bbox,
                probs: &pred.probs,
                constraints: &pred.constraints,
                partial: gui,
                target,
            },
            &self.refine,
        );
        Suggestion {
            element_id: target.id.clone(),
            bbox: r.bbox,
            confidence: r.confidence,
            constraints: r
                .satisfied
                .into_iter()
                .map(|(id, p)| ScoredConstraint { id, p })
                .collect(),
            trace: r.steps.iter().map(|s| s.to_string()).collect(),
            raw: pred.bbox.into(),
            cold_start: false,
        }
    }

    /// Suggestion for one specific unplaced element.
    pub fn suggest_for(&self, gui: &Gui, id: &str) -> Result<Suggestion> {
        let target = self.pending(gui, id)?;
        if gui.placed().next().is_none() {
            return Ok(cold_start(gui, target));
        }
        let constraints = extract_placed(gui, &self.extraction)?;
        let pred = self.predict(gui, &constraints, target)?;
        Ok(self.refine_prediction(gui, target, &pred))
    }

    /// Suggestions for every unplaced element, best first
    /// (confidence, then mean probability, then id).
    pub fn rank_pool(&self, gui: &Gui) -> Result<Vec<Suggestion>> {
        let ids: Vec<&str> = gui.unplaced().map(|e| e.id.as_str()).collect();
        if ids.is_empty() {
            return Err(LayoutError::Empty("no unplaced elements".into()));
        }
        let mut all = ids
            .par_iter()
            .map(|id| self.suggest_for(gui, id))
            .collect::<Result<Vec<_>>>()?;
        all.sort_by(rank);
        Ok(all)
    }

    /// The best suggestion over the unplaced pool.
    pub fn suggest_one(&self, gui: &Gui) -> Result<Suggestion> {
        Ok(self.rank_pool(gui)?.remove(0))
    }

    /// Places every pending element predicting the same element group
    /// together: a common cross-axis dimension and uniform spacing that
    /// continues the group. Falls back to `[suggest_one]`.
    pub fn suggest_group(&self, gui: &Gui) -> Result<Vec<Suggestion>> {
        let pool: Vec<&Element> = gui.unplaced().collect();
        if pool.len() < 2 || gui.placed().next().is_none() {
            return Ok(vec![self.suggest_one(gui)?]);
        }
        let constraints = extract_placed(gui, &self.extraction)?;
        let preds = pool
            .par_iter()
            .map(|t| self.predict(gui, &constraints, t))
            .collect::<Result<Vec<_>>>()?;

        // votes[g] = (pool index, p) of every element predicting group g
        let mut votes: std::collections::BTreeMap<&str, (&ConstraintNode, Vec<(usize, f64)>)> = Default::default();
        for (i, pred) in preds.iter().enumerate() {
            for (c, &p) in pred.constraints.iter().zip(&pred.probs) {
                if c.family() == ConstraintFamily::ElementGroup && p >= self.refine.prob_threshold {
                    votes.entry(c.id.as_str()).or_insert((c, Vec::new())).1.push((i, p));
                }
            }
        }
        let mean = |v: &[(usize, f64)]| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;
        let best = votes
            .values()
            .filter(|(_, v)| v.len() >= 2)
            .min_by(|(ca, a), (cb, b)| {
                b.len()
                    .cmp(&a.len())
                    .then_with(|| mean(b).partial_cmp(&mean(a)).unwrap_or(Ordering::Equal))
                    .then_with(|| ca.id.cmp(&cb.id))
            });
        let Some((group, members)) = best else {
            return Ok(vec![self.suggest_one(gui)?]);
        };
        match self.joint_placement(gui, group, members, &pool, &preds) {
            Some(s) => Ok(s),
            None => Ok(vec![self.suggest_one(gui)?]),
        }
    }

    fn joint_placement(
        &self,
        gui: &Gui,
        group: &ConstraintNode,
        members: &[(usize, f64)],
        pool: &[&Element],
        preds: &[RawPrediction],
    ) -> Option<Vec<Suggestion>> {
        let run = group_run(group, gui)?;
        let axis = |i: usize| if run.vertical { preds[i].bbox[1] } else { preds[i].bbox[0] };
        let mut order: Vec<(usize, f64)> = members.to_vec();
        order.sort_by(|a, b| {
            axis(a.0)
                .partial_cmp(&axis(b.0))
                .unwrap_or(Ordering::Equal)
                .then_with(|| pool[a.0].id.cmp(&pool[b.0].id))
        });
        // common cross-axis dimension, along-axis size from each ratio
        let sizes: Vec<(i64, i64)> = order
            .iter()
            .map(|&(i, _)| {
                let r = pool[i].ratio().unwrap_or(1.0);
                if run.vertical {
                    (run.w, ((run.w as f64 / r).round() as i64).max(1))
                } else {
                    (((run.h as f64 * r).round() as i64).max(1), run.h)
                }
            })
            .collect();
        let along = |s: &(i64, i64)| if run.vertical { s.1 } else { s.0 };
        let total: i64 = sizes.iter().map(along).sum::<i64>() + run.gap * (sizes.len() as i64 - 1);
        let limit = if run.vertical { gui.canvas.h } else { gui.canvas.w };
        let after = run.end + run.gap;
        let before = run.start - run.gap - total;
        let start = if after >= 0 && after + total <= limit {
            after
        } else if before >= 0 && before + total <= limit {
            before
        } else {
            return None;
        };

        let mut out = Vec::with_capacity(order.len());
        let mut pos = start;
        for (k, (&(i, p), size)) in order.iter().zip(&sizes).enumerate() {
            let (w, h) = *size;
            let bbox = if run.vertical {
                BBox { x: run.lane, y: pos, w, h }
            } else {
                BBox { x: pos, y: run.lane, w, h }
            };
            if !bbox.inside(gui.canvas) {
                return None;
            }
            pos += along(size) + run.gap;
            let pred = &preds[i];
            let mut constraints = vec![ScoredConstraint {
                id: group.id.clone(),
                p,
            }];
            for (c, &cp) in pred.constraints.iter().zip(&pred.probs) {
                if cp >= self.refine.prob_threshold && c.satisfied_exactly(&bbox) == Some(true) {
                    constraints.push(ScoredConstraint { id: c.id.clone(), p: cp });
                }
            }
            out.push(Suggestion {
                element_id: pool[i].id.clone(),
                bbox,
                confidence: Confidence::Medium,
                constraints,
                trace: vec![format!(
                    "group {} slot {k}: ({}, {}, {}, {}) with gap {}",
                    group.id, bbox.x, bbox.y, bbox.w, bbox.h, run.gap
                )],
                raw: pred.bbox.into(),
                cold_start: false,
            });
        }
        Some(out)
    }

    /// Repeatedly suggests the best element and tentatively accepts it
    /// until the pool is empty. `gui` itself is not modified.
    pub fn suggest_all(&self, gui: &Gui) -> Result<Vec<Suggestion>> {
        let mut cur = gui.clone();
        let mut out = Vec::new();
        while cur.unplaced().next().is_some() {
            let s = self.suggest_one(&cur)?;
            cur = accept(&cur, &s.element_id, s.bbox)?;
            out.push(s);
        }
        if out.is_empty() {
            return Err(LayoutError::Empty("no unplaced elements".into()));
        }
        Ok(out)
    }
}
