//! Shared test helpers: brute-force constraint oracles, random layouts and
//! an independent re-derivation of the refinement confidence rules.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use layoutgraph::autocomplete::{normalize_raw, refine, refine_step, Confidence, RefineConfig, RefineInput, Refined};
use layoutgraph::extract::{extract_all, ExtractionConfig};
use layoutgraph::model::{ratio_consistent, AlignKind, BBox, Canvas, ConstraintKind, ConstraintNode, Element, Gui, SizeDim};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// extraction oracle

/// Connected components of the "within `tol`" relation over `vals`, by
/// explicit pairwise comparison.
fn components(vals: &[i64], tol: i64) -> Vec<Vec<usize>> {
    let n = vals.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut i = 0;
        while i < comp.len() {
            let a = comp[i];
            for b in 0..n {
                if !seen[b] && (vals[a] - vals[b]).abs() <= tol {
                    seen[b] = true;
                    comp.push(b);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Median of integer values rounded half up after dividing by `scale`.
fn median_over(mut v: Vec<i64>, scale: i64) -> i64 {
    v.sort_unstable();
    let n = v.len();
    let twice = if n % 2 == 1 { 2 * v[n / 2] } else { v[n / 2 - 1] + v[n / 2] };
    // round(twice / (2 * scale)) half up, as an exact rational
    let den = 2 * scale;
    (twice * 2 + den).div_euclid(2 * den)
}

fn placed(gui: &Gui) -> Vec<(&Element, BBox)> {
    gui.elements.iter().map(|e| (e, e.bbox.expect("placed"))).collect()
}

pub fn oracle_alignments(gui: &Gui, cfg: &ExtractionConfig) -> Vec<ConstraintNode> {
    let els = placed(gui);
    let mut out = Vec::new();
    for align in AlignKind::ALL {
        let vals: Vec<i64> = els.iter().map(|(_, b)| align.coord2(b)).collect();
        for comp in components(&vals, 2 * cfg.tol) {
            let line = median_over(comp.iter().map(|&i| vals[i]).collect(), 2);
            let members: Vec<String> = comp
                .iter()
                .filter(|&&i| (vals[i] - 2 * line).abs() <= 2 * cfg.tol)
                .map(|&i| els[i].0.id.clone())
                .collect();
            if members.len() >= cfg.min_members {
                out.push(ConstraintNode::new(ConstraintKind::Alignment { align, line }, members));
            }
        }
    }
    out
}

pub fn oracle_same_size(gui: &Gui, cfg: &ExtractionConfig) -> Vec<ConstraintNode> {
    let els = placed(gui);
    let mut out = Vec::new();
    for dim in [SizeDim::Width, SizeDim::Height] {
        let vals: Vec<i64> = els.iter().map(|(_, b)| dim.of(b)).collect();
        for comp in components(&vals, cfg.tol) {
            let value = median_over(comp.iter().map(|&i| vals[i]).collect(), 1);
            let members: Vec<String> = comp
                .iter()
                .filter(|&&i| (vals[i] - value).abs() <= cfg.tol)
                .map(|&i| els[i].0.id.clone())
                .collect();
            if members.len() >= cfg.min_members {
                out.push(ConstraintNode::new(ConstraintKind::SameSize { dim, value }, members));
            }
        }
    }
    out
}

/// Every contiguous window of every lane is tested for the run rules; the
/// valid windows not strictly inside another valid window are the groups.
pub fn oracle_groups(gui: &Gui, cfg: &ExtractionConfig) -> Vec<ConstraintNode> {
    let els = placed(gui);
    let kinds: BTreeSet<&str> = els.iter().map(|(e, _)| e.kind.as_str()).collect();
    let mut out: BTreeMap<String, ConstraintNode> = BTreeMap::new();
    for kind in kinds {
        let items: Vec<(&Element, BBox)> = els.iter().copied().filter(|(e, _)| e.kind == kind).collect();
        for vertical in [true, false] {
            let cross: Vec<i64> = items.iter().map(|(_, b)| if vertical { b.x } else { b.y }).collect();
            for lane in components(&cross, cfg.tol) {
                let mut seq: Vec<(&Element, BBox)> = lane.iter().map(|&i| items[i]).collect();
                seq.sort_by(|(ea, a), (eb, b)| {
                    let ka = if vertical { (a.y, a.x) } else { (a.x, a.y) };
                    let kb = if vertical { (b.y, b.x) } else { (b.x, b.y) };
                    (ka, &ea.id).cmp(&(kb, &eb.id))
                });
                let gap = |i: usize| {
                    let (a, b) = (seq[i].1, seq[i + 1].1);
                    if vertical { b.y - (a.y + a.h) } else { b.x - (a.x + a.w) }
                };
                let valid = |s: usize, e: usize| {
                    if e + 1 - s < 2 {
                        return true;
                    }
                    let gaps: Vec<i64> = (s..e).map(gap).collect();
                    gaps.iter().all(|&g| (0..=cfg.group_gap).contains(&g))
                        && gaps.iter().max().unwrap() - gaps.iter().min().unwrap() <= cfg.tol
                };
                let n = seq.len();
                let mut windows = Vec::new();
                for s in 0..n {
                    for e in s..n {
                        if valid(s, e) {
                            windows.push((s, e));
                        }
                    }
                }
                for &(s, e) in &windows {
                    let inside_other = windows
                        .iter()
                        .any(|&(s2, e2)| (s2, e2) != (s, e) && s2 <= s && e <= e2);
                    if !inside_other && e + 1 - s >= cfg.min_members {
                        let c = ConstraintNode::new(
                            ConstraintKind::ElementGroup,
                            seq[s..=e].iter().map(|(el, _)| el.id.clone()),
                        );
                        out.insert(c.id.clone(), c);
                    }
                }
            }
        }
    }
    out.into_values().collect()
}

/// Rows sharing a horizontal midline become tuples; tuples are grouped by
/// their kind sequence (the template) and, within a template, linked when
/// their relative geometry agrees; each linked set large enough is a
/// repetition.
pub fn oracle_multimodal(gui: &Gui, cfg: &ExtractionConfig) -> Vec<ConstraintNode> {
    let els = placed(gui);
    let mids: Vec<i64> = els.iter().map(|(_, b)| 2 * b.y + b.h).collect();
    let mut tuples: Vec<Vec<(&Element, BBox)>> = Vec::new();
    for row in components(&mids, 2 * cfg.tol) {
        if !(2..=4).contains(&row.len()) {
            continue;
        }
        let mut t: Vec<(&Element, BBox)> = row.iter().map(|&i| els[i]).collect();
        if t.iter().all(|(e, _)| e.kind == t[0].0.kind) {
            continue;
        }
        t.sort_by(|(ea, a), (eb, b)| (a.x, a.y, &ea.id).cmp(&(b.x, b.y, &eb.id)));
        tuples.push(t);
    }
    let mut templates: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
    for (i, t) in tuples.iter().enumerate() {
        templates.entry(t.iter().map(|(e, _)| e.kind.as_str()).collect()).or_default().push(i);
    }
    let same_geometry = |a: &[(&Element, BBox)], b: &[(&Element, BBox)]| {
        let (a0, b0) = (a[0].1, b[0].1);
        a.iter().zip(b).all(|((_, p), (_, q))| {
            ((p.x - a0.x) - (q.x - b0.x)).abs() <= cfg.tol
                && ((p.y - a0.y) - (q.y - b0.y)).abs() <= cfg.tol
                && (p.w - q.w).abs() <= cfg.tol
                && (p.h - q.h).abs() <= cfg.tol
        })
    };
    let mut out: BTreeMap<String, ConstraintNode> = BTreeMap::new();
    for members in templates.values() {
        // linked sets by flood fill over the pairwise relation
        let mut seen = BTreeSet::new();
        for &s in members {
            if !seen.insert(s) {
                continue;
            }
            let mut set = vec![s];
            let mut i = 0;
            while i < set.len() {
                let a = set[i];
                for &b in members {
                    if !seen.contains(&b) && same_geometry(&tuples[a], &tuples[b]) {
                        seen.insert(b);
                        set.push(b);
                    }
                }
                i += 1;
            }
            if set.len() < cfg.min_members {
                continue;
            }
            let mut span = Vec::new();
            for &t in &set {
                let ids: Vec<String> = tuples[t].iter().map(|(e, _)| e.id.clone()).collect();
                span.extend(ids.clone());
                let c = ConstraintNode::new(ConstraintKind::MultimodalGroup, ids);
                out.insert(c.id.clone(), c);
            }
            let c = ConstraintNode::new(ConstraintKind::MultimodalGroup, span);
            out.insert(c.id.clone(), c);
        }
    }
    out.into_values().collect()
}

/// Union of the four oracles as a set of canonical ids.
pub fn oracle_all(gui: &Gui, cfg: &ExtractionConfig) -> BTreeSet<String> {
    let mut all = oracle_alignments(gui, cfg);
    all.extend(oracle_same_size(gui, cfg));
    all.extend(oracle_groups(gui, cfg));
    all.extend(oracle_multimodal(gui, cfg));
    all.into_iter().map(|c| c.id).collect()
}

/// Same as [`oracle_all`] but keeping the attribute (line/size) too.
pub fn oracle_keys(gui: &Gui, cfg: &ExtractionConfig) -> BTreeSet<(String, ConstraintKind)> {
    let mut all = oracle_alignments(gui, cfg);
    all.extend(oracle_same_size(gui, cfg));
    all.extend(oracle_groups(gui, cfg));
    all.extend(oracle_multimodal(gui, cfg));
    all.into_iter().map(|c| (c.id, c.kind)).collect()
}

// ---------------------------------------------------------------------------
// random layouts

const KINDS: [&str; 4] = ["Button", "Text", "Icon", "ListItem"];

/// A layout of at most `max` elements on a coarse grid with occasional
/// one-pixel jitter, mixing repeated rows (for groups and multimodal
/// tuples) with loose elements so that near-coincidences are common.
pub fn random_layout(rng: &mut ChaCha8Rng, max: usize) -> Gui {
    let mut gui = Gui::new(360, 640);
    let n = rng.random_range(0..=max);
    let jitter = |rng: &mut ChaCha8Rng| if rng.random_bool(0.3) { rng.random_range(-2..=2) } else { 0 };
    let mut next = 0;
    while gui.elements.len() < n {
        let left = n - gui.elements.len();
        if left >= 4 && rng.random_bool(0.4) {
            // repeated (Icon, Text) style rows
            let reps = rng.random_range(2..=(left / 2).min(4));
            let (x0, y0) = (rng.random_range(0..10) * 8, rng.random_range(0..40) * 8);
            let stride = rng.random_range(4..9) * 8;
            let (k1, k2) = (KINDS[rng.random_range(0..4)], KINDS[rng.random_range(0..4)]);
            for r in 0..reps {
                let y = y0 + r as i64 * stride + jitter(rng);
                let a = BBox { x: x0 + jitter(rng), y, w: 24 + jitter(rng).abs(), h: 24 };
                let b = BBox { x: x0 + 40 + jitter(rng), y: y + 2, w: 120, h: 20 + jitter(rng).abs() };
                for (k, bb) in [(k1, a), (k2, b)] {
                    if bb.x + bb.w <= 360 && bb.y + bb.h <= 640 && bb.x >= 0 && bb.y >= 0 {
                        gui.elements.push(Element::placed(format!("e{next}"), k, bb));
                        next += 1;
                    }
                }
            }
        } else {
            let w = [24, 40, 48, 96, 120, 200][rng.random_range(0..6)] + jitter(rng);
            let h = [20, 24, 40, 48][rng.random_range(0..4)] + jitter(rng).abs();
            let x = (rng.random_range(0..(360 - w) / 8) * 8 + jitter(rng)).clamp(0, 360 - w);
            let y = (rng.random_range(0..(640 - h) / 8) * 8 + jitter(rng)).clamp(0, 640 - h);
            let k = KINDS[rng.random_range(0..4)];
            gui.elements.push(Element::placed(format!("e{next}"), k, BBox { x, y, w, h }));
            next += 1;
        }
    }
    gui.elements.truncate(n);
    gui
}

// ---------------------------------------------------------------------------
// refinement rule tracer

/// The confidence rules, evaluated from scratch on the final box `b` of a
/// refinement (a fixed point): which level the rules assign to it.
pub struct Tracer<'a> {
    pub constraints: &'a [ConstraintNode],
    pub probs: &'a [f64],
    pub partial: &'a Gui,
    pub target: &'a Element,
    pub sigma: i64,
    pub threshold: f64,
}

fn exact_line(align: AlignKind, line: i64, b: &BBox) -> bool {
    let twice = match align {
        AlignKind::Left => 2 * b.x,
        AlignKind::Right => 2 * (b.x + b.w),
        AlignKind::VMid => 2 * b.x + b.w,
        AlignKind::Top => 2 * b.y,
        AlignKind::Bottom => 2 * (b.y + b.h),
        AlignKind::HMid => 2 * b.y + b.h,
    };
    let d = (twice - 2 * line).abs();
    if matches!(align, AlignKind::VMid | AlignKind::HMid) { d <= 1 } else { d == 0 }
}

fn vertical_line(a: AlignKind) -> bool {
    matches!(a, AlignKind::Left | AlignKind::Right | AlignKind::VMid)
}

fn avg(v: &[i64]) -> i64 {
    // mean rounded half up
    let s: i64 = v.iter().sum();
    let n = v.len() as i64;
    (2 * s + n).div_euclid(2 * n)
}

fn low_median(mut v: Vec<i64>) -> i64 {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Group continuation: average size and the positions on its lattice.
pub struct GroupGeom {
    pub w: i64,
    pub h: i64,
    pub slots: Vec<(i64, i64)>,
}

impl<'a> Tracer<'a> {
    fn predicted(&self) -> impl Iterator<Item = &'a ConstraintNode> + '_ {
        self.constraints
            .iter()
            .zip(self.probs)
            .filter(|(_, &p)| p >= self.threshold)
            .map(|(c, _)| c)
    }

    fn boxes(&self, ids: &[String]) -> Option<Vec<(&'a Element, BBox)>> {
        ids.iter()
            .map(|m| self.partial.elements.iter().find(|e| &e.id == m).and_then(|e| e.bbox.map(|b| (e, b))))
            .collect()
    }

    /// Both axes pinned to a predicted alignment line.
    fn position_aligned(&self, b: &BBox) -> bool {
        let mut v = false;
        let mut h = false;
        for c in self.predicted() {
            if let ConstraintKind::Alignment { align, line } = c.kind {
                if exact_line(align, line, b) {
                    if vertical_line(align) { v = true } else { h = true }
                }
            }
        }
        v && h
    }

    fn size_confirmed(&self, b: &BBox) -> bool {
        self.predicted().any(|c| match c.kind {
            ConstraintKind::SameSize { dim: SizeDim::Width, value } => b.w == value,
            ConstraintKind::SameSize { dim: SizeDim::Height, value } => b.h == value,
            _ => false,
        })
    }

    pub fn high(&self, b: &BBox) -> bool {
        self.size_confirmed(b) && self.position_aligned(b)
    }

    /// Geometry of every predicted group that can host the target, with the
    /// slots computed for a `w x h` box.
    pub fn groups(&self, w: i64, h: i64) -> Vec<GroupGeom> {
        let canvas = self.partial.canvas;
        let mut out = Vec::new();
        for c in self.predicted() {
            match c.kind {
                ConstraintKind::ElementGroup => {
                    let Some(bs) = self.boxes(&c.members) else { continue };
                    if bs.len() < 2 || bs.iter().any(|(e, _)| e.kind != self.target.kind) {
                        continue;
                    }
                    out.push(run_geometry(&bs.iter().map(|(_, b)| *b).collect::<Vec<_>>(), w, h, canvas));
                }
                ConstraintKind::MultimodalGroup => {
                    if let Some(g) = self.stride_geometry(c, w, h) {
                        out.push(g);
                    }
                }
                _ => {}
            }
        }
        out
    }

    fn stride_geometry(&self, span: &ConstraintNode, w: i64, h: i64) -> Option<GroupGeom> {
        let canvas = self.partial.canvas;
        let parts: Vec<&ConstraintNode> = self
            .constraints
            .iter()
            .filter(|c| {
                matches!(c.kind, ConstraintKind::MultimodalGroup)
                    && c.members.len() < span.members.len()
                    && c.members.iter().all(|m| span.members.contains(m))
            })
            .collect();
        let mut tuples = Vec::new();
        for p in parts {
            let mut t = self.boxes(&p.members)?;
            t.sort_by(|(ea, a), (eb, b)| (a.x, a.y, &ea.id).cmp(&(b.x, b.y, &eb.id)));
            tuples.push(t);
        }
        if tuples.len() < 2 {
            return None;
        }
        let kinds: Vec<&str> = tuples[0].iter().map(|(e, _)| e.kind.as_str()).collect();
        if tuples.iter().any(|t| t.iter().map(|(e, _)| e.kind.as_str()).collect::<Vec<_>>() != kinds) {
            return None;
        }
        let slot = kinds.iter().position(|k| *k == self.target.kind)?;
        let heads: Vec<BBox> = tuples.iter().map(|t| t[0].1).collect();
        let vertical = spread(&heads, |b| b.y) >= spread(&heads, |b| b.x);
        tuples.sort_by_key(|t| if vertical { (t[0].1.y, t[0].1.x) } else { (t[0].1.x, t[0].1.y) });
        let along = |b: &BBox| if vertical { b.y } else { b.x };
        let steps: Vec<i64> = tuples.windows(2).map(|p| along(&p[1][0].1) - along(&p[0][0].1)).collect();
        let stride = avg(&steps);
        let dx = avg(&tuples.iter().map(|t| t[slot].1.x - t[0].1.x).collect::<Vec<_>>());
        let dy = avg(&tuples.iter().map(|t| t[slot].1.y - t[0].1.y).collect::<Vec<_>>());
        let gw = avg(&tuples.iter().map(|t| t[slot].1.w).collect::<Vec<_>>());
        let gh = avg(&tuples.iter().map(|t| t[slot].1.h).collect::<Vec<_>>());
        let cross = low_median(tuples.iter().map(|t| if vertical { t[0].1.x } else { t[0].1.y }).collect());
        let first = along(&tuples[0][0].1);
        let last = along(&tuples[tuples.len() - 1][0].1);
        let mut slots = Vec::new();
        let place = |a: i64| if vertical { (cross + dx, a + dy) } else { (a + dx, cross + dy) };
        let reach = if stride > 0 { 64 } else { 1 };
        for dir in [1, -1] {
            for j in 1..=reach {
                let a = if dir == 1 { last + j * stride } else { first - j * stride };
                let o = place(a);
                if !fits(o, w, h, canvas) {
                    break;
                }
                slots.push(o);
            }
        }
        Some(GroupGeom { w: gw, h: gh, slots })
    }

    /// The Medium rules hold at `b`: some group supplies a dimension (or a
    /// same-size constraint does) and either a lattice slot or, when the
    /// dimension came from the group, both alignment lines pin the position.
    pub fn medium(&self, b: &BBox) -> bool {
        self.groups(b.w, b.h).iter().any(|g| {
            let group_dim = b.w == g.w || b.h == g.h;
            let dim = group_dim || self.size_confirmed(b);
            dim && (g.slots.contains(&(b.x, b.y)) || (group_dim && self.position_aligned(b)))
        })
    }

    /// Checks a refinement result against the rules; returns a description
    /// of the first violation.
    pub fn check(&self, r: &Refined) -> Result<(), String> {
        let b = &r.bbox;
        let high = self.high(b);
        let medium = self.medium(b);
        let expected = if high {
            Confidence::High
        } else if medium {
            Confidence::Medium
        } else {
            Confidence::Low
        };
        if r.confidence != expected {
            return Err(format!("confidence {:?}, rules give {:?} for {b:?}", r.confidence, expected));
        }
        for s in &r.steps {
            if s.distance > self.sigma as f64 {
                return Err(format!("snap beyond sigma: {s}"));
            }
        }
        if r.confidence == Confidence::High {
            for (id, _) in &r.satisfied {
                let c = self.constraints.iter().find(|c| &c.id == id).unwrap();
                let ok = match c.kind {
                    ConstraintKind::Alignment { align, line } => exact_line(align, line, b),
                    ConstraintKind::SameSize { dim, value } => dim.of(b) == value,
                    _ => true,
                };
                if !ok {
                    return Err(format!("{id} marked satisfied but not exact for {b:?}"));
                }
            }
        }
        Ok(())
    }
}

fn spread(bs: &[BBox], f: fn(&BBox) -> i64) -> i64 {
    let v: Vec<i64> = bs.iter().map(f).collect();
    v.iter().max().unwrap() - v.iter().min().unwrap()
}

fn fits((x, y): (i64, i64), w: i64, h: i64, canvas: Canvas) -> bool {
    x >= 0 && y >= 0 && x + w <= canvas.w && y + h <= canvas.h
}

/// A run of equally spaced members: slots continue it by whole members
/// (with the mean gap) after its end and before its start.
fn run_geometry(bs: &[BBox], w: i64, h: i64, canvas: Canvas) -> GroupGeom {
    let vertical = spread(bs, |b| b.y) >= spread(bs, |b| b.x);
    let mut bs = bs.to_vec();
    if vertical {
        bs.sort_by_key(|b| (b.y, b.x));
    } else {
        bs.sort_by_key(|b| (b.x, b.y));
    }
    let gw = avg(&bs.iter().map(|b| b.w).collect::<Vec<_>>());
    let gh = avg(&bs.iter().map(|b| b.h).collect::<Vec<_>>());
    let (gaps, lane, start, end): (Vec<i64>, i64, i64, i64) = if vertical {
        (
            bs.windows(2).map(|p| p[1].y - (p[0].y + p[0].h)).collect(),
            low_median(bs.iter().map(|b| b.x).collect()),
            bs[0].y,
            bs[bs.len() - 1].y + bs[bs.len() - 1].h,
        )
    } else {
        (
            bs.windows(2).map(|p| p[1].x - (p[0].x + p[0].w)).collect(),
            low_median(bs.iter().map(|b| b.y).collect()),
            bs[0].x,
            bs[bs.len() - 1].x + bs[bs.len() - 1].w,
        )
    };
    let gap = avg(&gaps);
    let size = if vertical { h } else { w };
    let pitch = size + gap;
    let reach = if pitch > 0 { 64 } else { 1 };
    let at = |a: i64| if vertical { (lane, a) } else { (a, lane) };
    let mut slots = Vec::new();
    for j in 0..reach {
        let o = at(end + gap + j * pitch);
        if !fits(o, w, h, canvas) {
            break;
        }
        slots.push(o);
    }
    for j in 0..reach {
        let o = at(start - gap - size - j * pitch);
        if !fits(o, w, h, canvas) {
            break;
        }
        slots.push(o);
    }
    GroupGeom { w: gw, h: gh, slots }
}

// ---------------------------------------------------------------------------
// random refinement problems

/// A random refinement problem built on a random layout: its extracted
/// constraints with random probabilities, a target of a kind present in the
/// layout, and a raw box near one of the placed elements.
pub struct Case {
    pub partial: Gui,
    pub constraints: Vec<ConstraintNode>,
    pub probs: Vec<f64>,
    pub target: Element,
    pub raw: [f64; 4],
}

impl Case {
    pub fn input(&self) -> RefineInput<'_> {
        RefineInput {
            raw: self.raw,
            probs: &self.probs,
            constraints: &self.constraints,
            partial: &self.partial,
            target: &self.target,
        }
    }

    pub fn tracer(&self, cfg: &RefineConfig) -> Tracer<'_> {
        Tracer {
            constraints: &self.constraints,
            probs: &self.probs,
            partial: &self.partial,
            target: &self.target,
            sigma: cfg.sigma as i64,
            threshold: cfg.prob_threshold,
        }
    }
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let mut partial = random_layout(rng, 12);
    while partial.elements.len() < 2 {
        partial = random_layout(rng, 12);
    }
    let constraints = extract_all(&partial, &ExtractionConfig::default()).unwrap();
    let probs = constraints
        .iter()
        .map(|_| if rng.random_bool(0.7) { rng.random_range(0.5..1.0) } else { rng.random_range(0.0..0.5) })
        .collect();
    let model = partial.elements[rng.random_range(0..partial.elements.len())].clone();
    let mb = model.bbox.unwrap();
    let ratio = if rng.random_bool(0.8) { mb.w as f64 / mb.h as f64 } else { rng.random_range(0.5..6.0) };
    let target = Element::unplaced("target", model.kind.clone(), ratio);
    let d = |rng: &mut ChaCha8Rng| rng.random_range(-30.0..30.0);
    let raw = [
        mb.x as f64 + d(rng),
        (mb.y + mb.h) as f64 + rng.random_range(-10.0..60.0),
        mb.w as f64 + d(rng),
        mb.h as f64 + d(rng) / 3.0,
    ];
    Case { partial, constraints, probs, target, raw }
}

fn is_fixed_point(case: &Case, r: &Refined, cfg: &RefineConfig) -> bool {
    refine_step(r.bbox, &case.input(), cfg).0 == r.bbox
}

/// Everything the refinement contract promises for one input.
pub fn check_contract(case: &Case, cfg: &RefineConfig) -> Result<Confidence, String> {
    let r = refine(&case.input(), cfg);
    let canvas = case.partial.canvas;
    if !r.bbox.inside(canvas) {
        return Err(format!("{:?} leaves the canvas", r.bbox));
    }
    let ratio = case.target.aspect_ratio.unwrap();
    if !ratio_consistent(r.bbox.w, r.bbox.h, ratio) {
        return Err(format!("{:?} breaks ratio {ratio}", r.bbox));
    }
    let again = refine(
        &RefineInput {
            raw: [r.bbox.x as f64, r.bbox.y as f64, r.bbox.w as f64, r.bbox.h as f64],
            ..case.input()
        },
        cfg,
    );
    if again.bbox != r.bbox || again.confidence != r.confidence {
        return Err(format!("not idempotent: {:?}/{:?} then {:?}/{:?}", r.bbox, r.confidence, again.bbox, again.confidence));
    }
    if is_fixed_point(case, &r, cfg) {
        case.tracer(cfg).check(&r)?;
    } else {
        // no fixed point within the iteration budget: the normalised raw box at Low
        let start = normalize_raw(case.raw, ratio, canvas);
        if r.bbox != start || r.confidence != Confidence::Low {
            return Err(format!("non-converged result {:?} is not the raw fallback", r.bbox));
        }
    }
    Ok(r.confidence)
}

// ---------------------------------------------------------------------------
// objective recomputed with plain loops

/// `(mse, boundary, bce, total)` evaluated term by term.
pub fn scalar_loss(
    pred: &[[f64; 4]],
    truth: &[[f64; 4]],
    probs: &[f64],
    flags: &[f64],
    canvas: (f64, f64),
    lambda: f64,
    eta: f64,
) -> (f64, f64, f64, f64) {
    let mut sq = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        for k in 0..4 {
            sq += (p[k] - t[k]) * (p[k] - t[k]);
        }
    }
    let mse = sq / pred.len() as f64;
    let mut out = 0.0;
    for p in pred {
        let [x, y, w, h] = *p;
        out += f64::max(-x, 0.0) + f64::max(-y, 0.0) + f64::max(x + w - canvas.0, 0.0) + f64::max(y + h - canvas.1, 0.0);
    }
    let boundary = eta * out;
    let bce = if probs.is_empty() {
        0.0
    } else {
        let mut s = 0.0;
        for (&p, &c) in probs.iter().zip(flags) {
            let q = p.clamp(1e-7, 1.0 - 1e-7);
            s += -(c * q.ln() + (1.0 - c) * (1.0 - q).ln());
        }
        s / probs.len() as f64
    };
    (mse, boundary, bce, mse + boundary + lambda * bce)
}

/// `|a − b|` within `tol`, relative once the magnitude exceeds 1.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
