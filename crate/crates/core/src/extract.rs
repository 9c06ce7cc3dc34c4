//! Constraint extraction from a fully placed layout.
//!
//! All four families use transitive (single-linkage) clustering of a 1-D
//! coordinate within `tol`. Alignment and same-size clusters are then
//! anchored at the rounded median and trimmed to members within `tol` of it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::model::{
    AlignKind, BBox, ConstraintKind, ConstraintNode, Element, Gui, SizeDim,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Geometric tolerance in pixels.
    pub tol: i64,
    /// Largest spacing between successive members of an element group.
    pub group_gap: i64,
    pub min_members: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            tol: 2,
            group_gap: 32,
            min_members: 2,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol < 0 || self.group_gap < 0 || self.min_members < 2 {
            return Err(LayoutError::Validation(format!(
                "invalid extraction config {self:?}"
            )));
        }
        Ok(())
    }
}

fn placed(gui: &Gui) -> Result<Vec<(&Element, BBox)>> {
    gui.elements
        .iter()
        .map(|e| e.bbox_or_err().map(|b| (e, b)))
        .collect()
}

/// Splits `items` (sorted by key) wherever successive keys differ by more than `tol`.
fn split_sorted<T>(items: Vec<(i64, T)>, tol: i64) -> Vec<Vec<(i64, T)>> {
    let mut out: Vec<Vec<(i64, T)>> = Vec::new();
    let mut last: Option<i64> = None;
    for (k, t) in items {
        match last {
            Some(prev) if k - prev <= tol => out.last_mut().unwrap().push((k, t)),
            _ => out.push(vec![(k, t)]),
        }
        last = Some(k);
    }
    out
}

/// Rounded (half up) median of sorted values, divided by `scale`.
fn rounded_median(sorted: &[i64], scale: i64) -> i64 {
    let n = sorted.len();
    if n % 2 == 1 {
        (2 * sorted[n / 2] + scale).div_euclid(2 * scale)
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2] + scale).div_euclid(2 * scale)
    }
}

pub fn extract_alignments(gui: &Gui, cfg: &ExtractionConfig) -> Result<Vec<ConstraintNode>> {
    cfg.validate()?;
    let els = placed(gui)?;
    let mut out = Vec::new();
    for align in AlignKind::ALL {
        let mut vals: Vec<(i64, &str)> = els
            .iter()
            .map(|(e, b)| (align.coord2(b), e.id.as_str()))
            .collect();
        vals.sort();
        for cluster in split_sorted(vals, 2 * cfg.tol) {
            let keys: Vec<i64> = cluster.iter().map(|(k, _)| *k).collect();
            let line = rounded_median(&keys, 2);
            let members: Vec<String> = cluster
                .iter()
                .filter(|(k, _)| (k - 2 * line).abs() <= 2 * cfg.tol)
                .map(|(_, id)| id.to_string())
                .collect();
            if members.len() >= cfg.min_members {
                out.push(ConstraintNode::new(
                    ConstraintKind::Alignment { align, line },
                    members,
                ));
            }
        }
    }
    Ok(out)
}

pub fn extract_same_size(gui: &Gui, cfg: &ExtractionConfig) -> Result<Vec<ConstraintNode>> {
    cfg.validate()?;
    let els = placed(gui)?;
    let mut out = Vec::new();
    for dim in [SizeDim::Width, SizeDim::Height] {
        let mut vals: Vec<(i64, &str)> =
            els.iter().map(|(e, b)| (dim.of(b), e.id.as_str())).collect();
        vals.sort();
        for cluster in split_sorted(vals, cfg.tol) {
            let keys: Vec<i64> = cluster.iter().map(|(k, _)| *k).collect();
            let value = rounded_median(&keys, 1);
            let members: Vec<String> = cluster
                .iter()
                .filter(|(k, _)| (k - value).abs() <= cfg.tol)
                .map(|(_, id)| id.to_string())
                .collect();
            if members.len() >= cfg.min_members {
                out.push(ConstraintNode::new(
                    ConstraintKind::SameSize { dim, value },
                    members,
                ));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Vertical,
    Horizontal,
}

/// Maximal contiguous windows of `seq` whose successive gaps all lie in
/// `[0, group_gap]` and differ from each other by at most `tol`.
fn maximal_runs(seq: &[(BBox, &str)], axis: Axis, cfg: &ExtractionConfig) -> Vec<Vec<String>> {
    let gap = |a: &BBox, b: &BBox| match axis {
        Axis::Vertical => b.y - a.bottom(),
        Axis::Horizontal => b.x - a.right(),
    };
    let n = seq.len();
    let mut out = Vec::new();
    let mut prev_end: Option<usize> = None;
    for start in 0..n {
        let mut end = start;
        let (mut lo, mut hi) = (i64::MAX, i64::MIN);
        while end + 1 < n {
            let g = gap(&seq[end].0, &seq[end + 1].0);
            if g < 0 || g > cfg.group_gap {
                break;
            }
            let (nlo, nhi) = (lo.min(g), hi.max(g));
            if nhi - nlo > cfg.tol {
                break;
            }
            lo = nlo;
            hi = nhi;
            end += 1;
        }
        let maximal = prev_end.is_none_or(|p| end > p);
        if maximal && end + 1 - start >= cfg.min_members {
            out.push(seq[start..=end].iter().map(|(_, id)| id.to_string()).collect());
        }
        prev_end = Some(end);
    }
    out
}

pub fn extract_groups(gui: &Gui, cfg: &ExtractionConfig) -> Result<Vec<ConstraintNode>> {
    cfg.validate()?;
    let els = placed(gui)?;
    let mut by_kind: BTreeMap<&str, Vec<(BBox, &str)>> = BTreeMap::new();
    for (e, b) in &els {
        by_kind.entry(e.kind.as_str()).or_default().push((*b, e.id.as_str()));
    }
    let mut out: BTreeMap<String, ConstraintNode> = BTreeMap::new();
    for items in by_kind.values() {
        for axis in [Axis::Vertical, Axis::Horizontal] {
            // Lanes: transitive clusters on the orthogonal edge.
            let mut keyed: Vec<(i64, (BBox, &str))> = items
                .iter()
                .map(|&(b, id)| match axis {
                    Axis::Vertical => (b.x, (b, id)),
                    Axis::Horizontal => (b.y, (b, id)),
                })
                .collect();
            keyed.sort_by(|a, b| (a.0, a.1 .1).cmp(&(b.0, b.1 .1)));
            for lane in split_sorted(keyed, cfg.tol) {
                let mut seq: Vec<(BBox, &str)> = lane.into_iter().map(|(_, v)| v).collect();
                seq.sort_by_key(|(b, id)| match axis {
                    Axis::Vertical => (b.y, b.x, *id),
                    Axis::Horizontal => (b.x, b.y, *id),
                });
                for members in maximal_runs(&seq, axis, cfg) {
                    let c = ConstraintNode::new(ConstraintKind::ElementGroup, members);
                    out.entry(c.id.clone()).or_insert(c);
                }
            }
        }
    }
    Ok(out.into_values().collect())
}

/// A row tuple: 2..=4 elements sharing a horizontal midline, ordered left to right.
#[derive(Debug, Clone)]
struct Tuple<'a> {
    members: Vec<(&'a Element, BBox)>,
}

impl Tuple<'_> {
    fn matches(&self, other: &Tuple<'_>, tol: i64) -> bool {
        if self.members.len() != other.members.len() {
            return false;
        }
        let (a0, b0) = (self.members[0].1, other.members[0].1);
        self.members.iter().zip(&other.members).all(|((ea, a), (eb, b))| {
            ea.kind == eb.kind
                && ((a.x - a0.x) - (b.x - b0.x)).abs() <= tol
                && ((a.y - a0.y) - (b.y - b0.y)).abs() <= tol
                && (a.w - b.w).abs() <= tol
                && (a.h - b.h).abs() <= tol
        })
    }
}

/// Rows of mixed-kind tuples repeated with matching geometry. Each tuple
/// becomes one multimodal node, and every repetition set adds one
/// spanning node over all of its tuples.
pub fn extract_multimodal_groups(
    gui: &Gui,
    cfg: &ExtractionConfig,
) -> Result<Vec<ConstraintNode>> {
    cfg.validate()?;
    let els = placed(gui)?;
    let mut keyed: Vec<(i64, (&Element, BBox))> = els
        .iter()
        .map(|&(e, b)| (AlignKind::HMid.coord2(&b), (e, b)))
        .collect();
    keyed.sort_by(|a, b| (a.0, &a.1 .0.id).cmp(&(b.0, &b.1 .0.id)));

    let mut tuples: Vec<Tuple> = Vec::new();
    for row in split_sorted(keyed, 2 * cfg.tol) {
        if !(2..=4).contains(&row.len()) {
            continue;
        }
        let mut members: Vec<(&Element, BBox)> = row.into_iter().map(|(_, v)| v).collect();
        let first_kind = &members[0].0.kind;
        if members.iter().all(|(e, _)| &e.kind == first_kind) {
            continue;
        }
        members.sort_by(|(ea, a), (eb, b)| (a.x, a.y, &ea.id).cmp(&(b.x, b.y, &eb.id)));
        tuples.push(Tuple { members });
    }

    // Repetition sets: connected components of the match relation.
    let n = tuples.len();
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while comp[r] != r {
            r = comp[r];
        }
        comp[i] = r;
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if tuples[i].matches(&tuples[j], cfg.tol) {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a.max(b)] = a.min(b);
            }
        }
    }
    let mut sets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut comp, i);
        sets.entry(root).or_default().push(i);
    }

    let mut out: BTreeMap<String, ConstraintNode> = BTreeMap::new();
    for set in sets.values().filter(|s| s.len() >= cfg.min_members) {
        let mut span = Vec::new();
        for &t in set {
            let ids: Vec<String> = tuples[t].members.iter().map(|(e, _)| e.id.clone()).collect();
            span.extend(ids.iter().cloned());
            let c = ConstraintNode::new(ConstraintKind::MultimodalGroup, ids);
            out.entry(c.id.clone()).or_insert(c);
        }
        let c = ConstraintNode::new(ConstraintKind::MultimodalGroup, span);
        out.entry(c.id.clone()).or_insert(c);
    }
    Ok(out.into_values().collect())
}

/// Union of the four extractors, sorted by family then id.
pub fn extract_all(gui: &Gui, cfg: &ExtractionConfig) -> Result<Vec<ConstraintNode>> {
    let mut all = extract_alignments(gui, cfg)?;
    all.extend(extract_same_size(gui, cfg)?);
    all.extend(extract_groups(gui, cfg)?);
    all.extend(extract_multimodal_groups(gui, cfg)?);
    all.sort_by(|a, b| (a.family(), &a.id).cmp(&(b.family(), &b.id)));
    all.dedup_by(|a, b| a.id == b.id);
    Ok(all)
}

/// Extraction over the placed elements only, ignoring the unplaced pool.
pub fn extract_placed(gui: &Gui, cfg: &ExtractionConfig) -> Result<Vec<ConstraintNode>> {
    extract_all(&gui.placed_subset(), cfg)
}

/// Tuple structure of a spanning multimodal node: the tuple nodes it covers,
/// each listed as member ids in left-to-right order.
pub fn multimodal_tuples<'a>(
    span: &ConstraintNode,
    constraints: &'a [ConstraintNode],
) -> Vec<&'a ConstraintNode> {
    constraints
        .iter()
        .filter(|c| {
            c.family() == crate::model::ConstraintFamily::MultimodalGroup
                && c.id != span.id
                && c.members.len() < span.members.len()
                && c.members.iter().all(|m| span.has_member(m))
        })
        .collect()
}
