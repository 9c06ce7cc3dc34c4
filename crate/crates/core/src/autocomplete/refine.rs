//! σ-threshold snapping of a raw placement onto predicted constraints.
//!
//! A raw prediction is first normalised to an integer box that matches the
//! target's aspect ratio and lies inside the canvas. One refinement step then
//! tries, in order:
//!
//! * **High**: a same-size snap for one dimension (the other derived from the
//!   ratio) plus an alignment snap on each axis;
//! * **Medium**: a group snap (average size, equidistant continuation slot)
//!   supplying the dimension, the position, or both, the rest coming from
//!   same-size/alignment snaps;
//! * **Low**: the box unchanged.
//!
//! Steps repeat until the box is a fixed point, which makes refinement idempotent.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::extract::multimodal_tuples;
use crate::model::{
    AlignKind, BBox, Canvas, ConstraintFamily, ConstraintKind, ConstraintNode, Element, Gui, SizeDim,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Snapping distance in pixels (inclusive).
    pub sigma: f64,
    /// Probability at which a constraint counts as predicted.
    pub prob_threshold: f64,
    pub max_iterations: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            sigma: 20.0,
            prob_threshold: 0.5,
            max_iterations: 8,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite())
            || !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0)
            || self.max_iterations == 0
        {
            return Err(crate::error::LayoutError::Validation(format!(
                "invalid refine config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

impl Confidence {
    pub fn name(self) -> &'static str {
        match self {
            Confidence::Low => "low",
            Confidence::Medium => "medium",
            Confidence::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    X,
    Y,
    W,
    H,
}

/// One snap: which field moved, from where to where, and the constraint
/// (with its distance) that triggered it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapStep {
    pub field: Field,
    pub from: i64,
    pub to: i64,
    pub constraint: String,
    pub distance: f64,
}

impl std::fmt::Display for SnapStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let field = match self.field {
            Field::X => "x",
            Field::Y => "y",
            Field::W => "w",
            Field::H => "h",
        };
        write!(
            f,
            "snap {field} {} -> {} via {} (distance {})",
            self.from, self.to, self.constraint, self.distance
        )
    }
}

/// Inputs shared by every refinement step.
#[derive(Debug, Clone, Copy)]
pub struct RefineInput<'a> {
    /// Raw `(x, y, w, h)` in pixels.
    pub raw: [f64; 4],
    /// Probabilities aligned with `constraints`.
    pub probs: &'a [f64],
    pub constraints: &'a [ConstraintNode],
    /// Placed elements the constraints refer to.
    pub partial: &'a Gui,
    pub target: &'a Element,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub bbox: BBox,
    pub confidence: Confidence,
    pub steps: Vec<SnapStep>,
    /// Predicted constraints the final box satisfies: alignment and same-size
    /// constraints satisfied exactly, and group constraints used for snapping.
    pub satisfied: Vec<(String, f64)>,
}

fn round_pos(v: f64) -> i64 {
    v.round() as i64
}

/// Integer box of ratio `r` whose size fits `canvas`, shrinking while keeping the ratio.
fn fit_size(mut w: i64, mut h: i64, r: f64, canvas: Canvas) -> (i64, i64) {
    if w > canvas.w {
        w = canvas.w;
        h = round_pos(w as f64 / r).max(1);
    }
    if h > canvas.h {
        h = canvas.h;
        w = round_pos(h as f64 * r).clamp(1, canvas.w);
    }
    (w, h)
}

/// Rounds a raw prediction, projects it onto the aspect ratio when the
/// rounded size disagrees by more than a pixel (keeping its area), and
/// clamps it into the canvas: shrink first, then translate.
pub fn normalize_raw(raw: [f64; 4], ratio: f64, canvas: Canvas) -> BBox {
    let fin = |v: f64| if v.is_finite() { v } else { 0.0 };
    let (x, y) = (round_pos(fin(raw[0])), round_pos(fin(raw[1])));
    let mut w = round_pos(fin(raw[2]).clamp(1.0, 1e9)).max(1);
    let mut h = round_pos(fin(raw[3]).clamp(1.0, 1e9)).max(1);
    if !crate::model::ratio_consistent(w, h, ratio) {
        let area = (w * h) as f64;
        w = round_pos((area * ratio).sqrt()).max(1);
        h = round_pos(w as f64 / ratio).max(1);
    }
    let (w, h) = fit_size(w, h, ratio, canvas);
    BBox {
        x: x.clamp(0, canvas.w - w),
        y: y.clamp(0, canvas.h - h),
        w,
        h,
    }
}

#[derive(Debug, Clone, Copy)]
struct Cand<'a> {
    c: &'a ConstraintNode,
    p: f64,
}

fn better(a: (f64, f64, &str), b: (f64, f64, &str)) -> bool {
    // smaller distance, then larger probability, then smaller id
    match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => match b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.2 < b.2,
        },
    }
}

struct DimSnap {
    w: i64,
    h: i64,
    step: SnapStep,
}

struct PosSnap {
    origin: i64,
    step: SnapStep,
}

fn derive(dim: SizeDim, value: i64, r: f64) -> (i64, i64) {
    match dim {
        SizeDim::Width => (value, round_pos(value as f64 / r).max(1)),
        SizeDim::Height => (round_pos(value as f64 * r).max(1), value),
    }
}

fn snap_dimension(b: BBox, cands: &[Cand], r: f64, canvas: Canvas, sigma: f64) -> Option<DimSnap> {
    let mut best: Option<(DimSnap, f64)> = None;
    for cand in cands {
        let ConstraintKind::SameSize { dim, value } = cand.c.kind else {
            continue;
        };
        let d = (dim.of(&b) - value).abs() as f64;
        if d > sigma {
            continue;
        }
        let (w, h) = derive(dim, value, r);
        if w > canvas.w || h > canvas.h {
            continue;
        }
        if let Some((cur, p)) = &best {
            if !better((d, cand.p, &cand.c.id), (cur.step.distance, *p, &cur.step.constraint)) {
                continue;
            }
        }
        let field = match dim {
            SizeDim::Width => Field::W,
            SizeDim::Height => Field::H,
        };
        let step = SnapStep {
            field,
            from: dim.of(&b),
            to: value,
            constraint: cand.c.id.clone(),
            distance: d,
        };
        best = Some((DimSnap { w, h, step }, cand.p));
    }
    best.map(|(s, _)| s)
}

/// Alignment snap on one axis for a box of size `w x h` at `(x, y)`.
fn snap_axis(b: BBox, vertical: bool, cands: &[Cand], canvas: Canvas, sigma: f64) -> Option<PosSnap> {
    let mut best: Option<(PosSnap, f64)> = None;
    for cand in cands {
        let ConstraintKind::Alignment { align, line } = cand.c.kind else {
            continue;
        };
        if align.is_vertical_line() != vertical {
            continue;
        }
        let d = (align.coord2(&b) - 2 * line).abs() as f64 / 2.0;
        if d > sigma {
            continue;
        }
        let (size, limit, from) = if vertical { (b.w, canvas.w, b.x) } else { (b.h, canvas.h, b.y) };
        let origin = align.origin_for(line, size);
        if origin < 0 || origin + size > limit {
            continue;
        }
        if let Some((cur, p)) = &best {
            if !better((d, cand.p, &cand.c.id), (cur.step.distance, *p, &cur.step.constraint)) {
                continue;
            }
        }
        let step = SnapStep {
            field: if vertical { Field::X } else { Field::Y },
            from,
            to: origin,
            constraint: cand.c.id.clone(),
            distance: d,
        };
        best = Some((PosSnap { origin, step }, cand.p));
    }
    best.map(|(s, _)| s)
}

/// Continuation geometry of a group: its average member size and the
/// lattice of positions that continue its spacing before or after the run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProposal {
    pub constraint: String,
    pub w: i64,
    pub h: i64,
    lattice: Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lattice {
    /// Element-group run: successive members `gap` apart along the axis.
    Run { vertical: bool, lane: i64, start: i64, end: i64, gap: i64 },
    /// Repeated tuples: new tuples every `stride`, offset `(dx, dy)` from the tuple origin.
    Stride { vertical: bool, cross: i64, first: i64, last: i64, stride: i64, dx: i64, dy: i64 },
}

const MAX_SLOTS: i64 = 64;

impl GroupProposal {
    /// Origins (nearest to the run first) of a `w x h` member continuing the
    /// group, alternating after/before, limited to the canvas.
    pub fn slot_origins(&self, w: i64, h: i64, canvas: Canvas) -> Vec<(i64, i64)> {
        let fits = |(x, y): (i64, i64)| x >= 0 && y >= 0 && x + w <= canvas.w && y + h <= canvas.h;
        let (after, before): (Vec<(i64, i64)>, Vec<(i64, i64)>) = match self.lattice {
            Lattice::Run { vertical, lane, start, end, gap } => {
                let size = if vertical { h } else { w };
                let step = size + gap;
                let at = |a: i64| if vertical { (lane, a) } else { (a, lane) };
                let n = if step > 0 { MAX_SLOTS } else { 1 };
                (
                    (0..n).map(|j| at(end + gap + j * step)).take_while(|&o| fits(o)).collect(),
                    (0..n).map(|j| at(start - gap - size - j * step)).take_while(|&o| fits(o)).collect(),
                )
            }
            Lattice::Stride { vertical, cross, first, last, stride, dx, dy } => {
                let at = |a: i64| if vertical { (cross + dx, a + dy) } else { (a + dx, cross + dy) };
                let n = if stride > 0 { MAX_SLOTS } else { 1 };
                (
                    (1..=n).map(|j| at(last + j * stride)).take_while(|&o| fits(o)).collect(),
                    (1..=n).map(|j| at(first - j * stride)).take_while(|&o| fits(o)).collect(),
                )
            }
        };
        let mut out = Vec::with_capacity(after.len() + before.len());
        for j in 0..after.len().max(before.len()) {
            out.extend(after.get(j));
            out.extend(before.get(j));
        }
        out
    }
}

fn mean_round(vals: impl IntoIterator<Item = i64>) -> i64 {
    let v: Vec<i64> = vals.into_iter().collect();
    let n = v.len() as i64;
    let s: i64 = v.iter().sum();
    (2 * s + n).div_euclid(2 * n)
}

fn lower_median(mut v: Vec<i64>) -> i64 {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

fn is_vertical_run(boxes: &[BBox]) -> bool {
    let span = |f: fn(&BBox) -> i64| {
        let vals: Vec<i64> = boxes.iter().map(f).collect();
        vals.iter().max().unwrap() - vals.iter().min().unwrap()
    };
    span(|b| b.y) >= span(|b| b.x)
}

/// Layout of an element group's run: orientation, average member size,
/// spacing (mean successive gap), lane (median cross-axis origin) and the
/// run's extent along its axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupRun {
    pub vertical: bool,
    pub w: i64,
    pub h: i64,
    pub gap: i64,
    pub lane: i64,
    pub start: i64,
    pub end: i64,
}

pub fn group_run(c: &ConstraintNode, partial: &Gui) -> Option<GroupRun> {
    let mut boxes: Vec<BBox> = c
        .members
        .iter()
        .map(|m| partial.element(m).and_then(|e| e.bbox))
        .collect::<Option<_>>()?;
    if boxes.len() < 2 {
        return None;
    }
    let w = mean_round(boxes.iter().map(|b| b.w));
    let h = mean_round(boxes.iter().map(|b| b.h));
    let vertical = is_vertical_run(&boxes);
    let run = if vertical {
        boxes.sort_by_key(|b| (b.y, b.x));
        GroupRun {
            vertical,
            w,
            h,
            gap: mean_round(boxes.windows(2).map(|p| p[1].y - p[0].bottom())),
            lane: lower_median(boxes.iter().map(|b| b.x).collect()),
            start: boxes[0].y,
            end: boxes[boxes.len() - 1].bottom(),
        }
    } else {
        boxes.sort_by_key(|b| (b.x, b.y));
        GroupRun {
            vertical,
            w,
            h,
            gap: mean_round(boxes.windows(2).map(|p| p[1].x - p[0].right())),
            lane: lower_median(boxes.iter().map(|b| b.y).collect()),
            start: boxes[0].x,
            end: boxes[boxes.len() - 1].right(),
        }
    };
    Some(run)
}

/// Continuation of an element group's run in either direction.
pub fn element_group_proposal(c: &ConstraintNode, partial: &Gui) -> Option<GroupProposal> {
    let run = group_run(c, partial)?;
    Some(GroupProposal {
        constraint: c.id.clone(),
        w: run.w,
        h: run.h,
        lattice: Lattice::Run {
            vertical: run.vertical,
            lane: run.lane,
            start: run.start,
            end: run.end,
            gap: run.gap,
        },
    })
}

/// Geometry of a spanning multimodal group for a target of `kind`: the
/// target takes the tuple position of the first member of that kind in a
/// new tuple a whole number of strides before or after the run.
pub fn multimodal_proposal(
    span: &ConstraintNode,
    constraints: &[ConstraintNode],
    partial: &Gui,
    kind: &str,
) -> Option<GroupProposal> {
    let mut tuples: Vec<Vec<(&Element, BBox)>> = Vec::new();
    for t in multimodal_tuples(span, constraints) {
        let mut members: Vec<(&Element, BBox)> = t
            .members
            .iter()
            .map(|m| partial.element(m).and_then(|e| e.bbox.map(|b| (e, b))))
            .collect::<Option<_>>()?;
        members.sort_by(|(ea, a), (eb, b)| (a.x, a.y, &ea.id).cmp(&(b.x, b.y, &eb.id)));
        tuples.push(members);
    }
    if tuples.len() < 2 {
        return None;
    }
    let kinds: Vec<&str> = tuples[0].iter().map(|(e, _)| e.kind.as_str()).collect();
    if tuples
        .iter()
        .any(|t| t.len() != kinds.len() || t.iter().zip(&kinds).any(|((e, _), k)| e.kind != *k))
    {
        return None;
    }
    let slot = kinds.iter().position(|k| *k == kind)?;
    let origins: Vec<BBox> = tuples.iter().map(|t| t[0].1).collect();
    let vertical = is_vertical_run(&origins);
    tuples.sort_by_key(|t| if vertical { (t[0].1.y, t[0].1.x) } else { (t[0].1.x, t[0].1.y) });
    let axis = |b: &BBox| if vertical { b.y } else { b.x };
    let stride = mean_round(tuples.windows(2).map(|p| axis(&p[1][0].1) - axis(&p[0][0].1)));
    let dx = mean_round(tuples.iter().map(|t| t[slot].1.x - t[0].1.x));
    let dy = mean_round(tuples.iter().map(|t| t[slot].1.y - t[0].1.y));
    let w = mean_round(tuples.iter().map(|t| t[slot].1.w));
    let h = mean_round(tuples.iter().map(|t| t[slot].1.h));
    let cross = lower_median(
        tuples
            .iter()
            .map(|t| if vertical { t[0].1.x } else { t[0].1.y })
            .collect(),
    );
    Some(GroupProposal {
        constraint: span.id.clone(),
        w,
        h,
        lattice: Lattice::Stride {
            vertical,
            cross,
            first: axis(&tuples[0][0].1),
            last: axis(&tuples[tuples.len() - 1][0].1),
            stride,
            dx,
            dy,
        },
    })
}

fn group_proposal(c: &ConstraintNode, input: &RefineInput) -> Option<GroupProposal> {
    match c.family() {
        ConstraintFamily::ElementGroup => {
            let same_kind = c
                .members
                .iter()
                .all(|m| input.partial.element(m).is_some_and(|e| e.kind == input.target.kind));
            if !same_kind {
                return None;
            }
            element_group_proposal(c, input.partial)
        }
        ConstraintFamily::MultimodalGroup => {
            multimodal_proposal(c, input.constraints, input.partial, &input.target.kind)
        }
        _ => None,
    }
}

/// Proposals of every predicted group, strongest first.
fn proposals(input: &RefineInput, cfg: &RefineConfig) -> Vec<(GroupProposal, f64)> {
    let mut out: Vec<(GroupProposal, f64)> = input
        .constraints
        .iter()
        .zip(input.probs)
        .filter(|(c, &p)| c.family().is_group() && p >= cfg.prob_threshold)
        .filter_map(|(c, &p)| group_proposal(c, input).map(|g| (g, p)))
        .collect();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.constraint.cmp(&b.0.constraint))
    });
    out
}

fn predicted<'a>(input: &RefineInput<'a>, cfg: &RefineConfig) -> Vec<Cand<'a>> {
    input
        .constraints
        .iter()
        .zip(input.probs)
        .filter(|(_, &p)| p >= cfg.prob_threshold)
        .map(|(c, &p)| Cand { c, p })
        .collect()
}

/// One refinement step from box `b`.
pub fn refine_step(b: BBox, input: &RefineInput, cfg: &RefineConfig) -> (BBox, Confidence, Vec<SnapStep>) {
    let canvas = input.partial.canvas;
    let r = input.target.ratio().unwrap_or(b.w as f64 / b.h as f64);
    let cands = predicted(input, cfg);
    let sigma = cfg.sigma;

    let dim = snap_dimension(b, &cands, r, canvas, sigma);
    if let Some(d) = &dim {
        let sized = BBox { w: d.w, h: d.h, ..b };
        if let (Some(x), Some(y)) = (
            snap_axis(sized, true, &cands, canvas, sigma),
            snap_axis(sized, false, &cands, canvas, sigma),
        ) {
            let out = BBox { x: x.origin, y: y.origin, ..sized };
            return (out, Confidence::High, vec![d.step.clone(), x.step, y.step]);
        }
    }

    for (g, _) in proposals(input, cfg) {
        let group_dim = if (b.w - g.w).abs() as f64 <= sigma {
            let (w, h) = derive(SizeDim::Width, g.w, r);
            Some((w, h, Field::W, b.w, g.w, (b.w - g.w).abs()))
        } else if (b.h - g.h).abs() as f64 <= sigma {
            let (w, h) = derive(SizeDim::Height, g.h, r);
            Some((w, h, Field::H, b.h, g.h, (b.h - g.h).abs()))
        } else {
            None
        };
        let group_dim = group_dim.filter(|d| d.0 <= canvas.w && d.1 <= canvas.h);
        let (w, h, dim_step, from_group) = match (&group_dim, &dim) {
            (Some((w, h, field, from, to, d)), _) => (
                *w,
                *h,
                SnapStep {
                    field: *field,
                    from: *from,
                    to: *to,
                    constraint: g.constraint.clone(),
                    distance: *d as f64,
                },
                true,
            ),
            (None, Some(d)) => (d.w, d.h, d.step.clone(), false),
            (None, None) => continue,
        };
        let sized = BBox { w, h, ..b };

        let mut best_slot: Option<((i64, i64), i64)> = None;
        for (sx, sy) in g.slot_origins(w, h, canvas) {
            let d = (b.x - sx).abs().max((b.y - sy).abs());
            let fits = sx >= 0 && sy >= 0 && sx + w <= canvas.w && sy + h <= canvas.h;
            if d as f64 > sigma || !fits {
                continue;
            }
            if best_slot.is_none_or(|(_, bd)| d < bd) {
                best_slot = Some(((sx, sy), d));
            }
        }
        if let Some(((sx, sy), _)) = best_slot {
            let steps = vec![
                dim_step,
                SnapStep {
                    field: Field::X,
                    from: b.x,
                    to: sx,
                    constraint: g.constraint.clone(),
                    distance: (b.x - sx).abs() as f64,
                },
                SnapStep {
                    field: Field::Y,
                    from: b.y,
                    to: sy,
                    constraint: g.constraint.clone(),
                    distance: (b.y - sy).abs() as f64,
                },
            ];
            return (BBox { x: sx, y: sy, w, h }, Confidence::Medium, steps);
        }
        if from_group {
            if let (Some(x), Some(y)) = (
                snap_axis(sized, true, &cands, canvas, sigma),
                snap_axis(sized, false, &cands, canvas, sigma),
            ) {
                let out = BBox { x: x.origin, y: y.origin, ..sized };
                return (out, Confidence::Medium, vec![dim_step, x.step, y.step]);
            }
        }
    }

    // Low: keep whatever individual snaps qualify, the raw value elsewhere.
    let mut steps = Vec::new();
    let mut out = b;
    if let Some(d) = dim {
        out.w = d.w;
        out.h = d.h;
        // a wider box may now overhang the canvas: translate it back in
        out.x = out.x.clamp(0, canvas.w - out.w);
        out.y = out.y.clamp(0, canvas.h - out.h);
        steps.push(d.step);
    }
    let x = snap_axis(out, true, &cands, canvas, sigma);
    let y = snap_axis(out, false, &cands, canvas, sigma);
    for s in [x, y].into_iter().flatten() {
        match s.step.field {
            Field::X => out.x = s.origin,
            _ => out.y = s.origin,
        }
        steps.push(s.step);
    }
    (out, Confidence::Low, steps)
}

/// Refines a raw prediction to a fixed point of [`refine_step`]. Falls back
/// to the normalised raw box at `Low` if no fixed point is reached.
pub fn refine(input: &RefineInput, cfg: &RefineConfig) -> Refined {
    let canvas = input.partial.canvas;
    let ratio = input
        .target
        .ratio()
        .unwrap_or_else(|| (input.raw[2] / input.raw[3]).max(1e-6));
    let start = normalize_raw(input.raw, ratio, canvas);
    let mut b = start;
    let mut history = Vec::new();
    for _ in 0..cfg.max_iterations {
        let (next, conf, steps) = refine_step(b, input, cfg);
        if next == b {
            let cited: Vec<String> = steps.iter().map(|s| s.constraint.clone()).collect();
            let satisfied = satisfied(input, cfg, &b, conf, &cited);
            if history.is_empty() {
                history = steps;
            }
            return Refined {
                bbox: b,
                confidence: conf,
                steps: history,
                satisfied,
            };
        }
        history.extend(steps);
        b = next;
    }
    Refined {
        bbox: start,
        confidence: Confidence::Low,
        steps: Vec::new(),
        satisfied: satisfied(input, cfg, &start, Confidence::Low, &[]),
    }
}

fn satisfied(input: &RefineInput, cfg: &RefineConfig, b: &BBox, conf: Confidence, cited: &[String]) -> Vec<(String, f64)> {
    input
        .constraints
        .iter()
        .zip(input.probs)
        .filter(|(_, &p)| p >= cfg.prob_threshold)
        .filter(|(c, _)| match c.satisfied_exactly(b) {
            Some(ok) => ok,
            None => conf == Confidence::Medium && cited.contains(&c.id),
        })
        .map(|(c, &p)| (c.id.clone(), p))
        .collect()
}

/// Whether `align` on `line` is satisfied by `b` to the half pixel.
pub fn on_line(align: AlignKind, line: i64, b: &BBox) -> bool {
    let d = (align.coord2(b) - 2 * line).abs();
    match align {
        AlignKind::VMid | AlignKind::HMid => d <= 1,
        _ => d == 0,
    }
}
