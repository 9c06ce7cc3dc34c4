//! Placement-quality metrics, each in `[0, 1]`.

use crate::error::Result;
use crate::extract::{extract_all, ExtractionConfig};
use crate::model::{BBox, Canvas, ConstraintFamily, ConstraintNode, Element, Gui};

/// Distance between predicted and true origins, relative to the largest
/// displacement the predicted box could have inside the canvas.
/// A box filling the canvas has no room to move: 0 if the origins agree, else 1.
pub fn pos_error(pred: &BBox, truth: &BBox, canvas: Canvas) -> f64 {
    let d = ((pred.x - truth.x) as f64).hypot((pred.y - truth.y) as f64);
    let room = ((canvas.w - pred.w).max(0) as f64).hypot((canvas.h - pred.h).max(0) as f64);
    if room == 0.0 {
        return if d == 0.0 { 0.0 } else { 1.0 };
    }
    (d / room).min(1.0)
}

/// `|â − a| / max(â, a)` over box areas.
pub fn area_error(pred: &BBox, truth: &BBox) -> f64 {
    let (a, b) = (pred.area() as f64, truth.area() as f64);
    (a - b).abs() / a.max(b)
}

/// Fraction of the true alignments the prediction misses (within `tol`);
/// 0 when there are none.
pub fn align_error(pred: &BBox, truth: &[ConstraintNode], tol: i64) -> f64 {
    let aligns: Vec<&ConstraintNode> = truth
        .iter()
        .filter(|c| c.family() == ConstraintFamily::Alignment)
        .collect();
    if aligns.is_empty() {
        return 0.0;
    }
    let hit = aligns
        .iter()
        .filter(|c| c.satisfied_within(pred, tol) == Some(true))
        .count();
    1.0 - hit as f64 / aligns.len() as f64
}

/// Alignments the placed target takes part in, extracted from `partial`
/// with the target added at its true position.
pub fn truth_alignments(partial: &Gui, target: &Element, cfg: &ExtractionConfig) -> Result<Vec<ConstraintNode>> {
    target.bbox_or_err()?;
    let mut full = partial.placed_subset();
    full.elements.push(target.clone());
    Ok(extract_all(&full, cfg)?
        .into_iter()
        .filter(|c| c.family() == ConstraintFamily::Alignment && c.has_member(&target.id))
        .collect())
}
