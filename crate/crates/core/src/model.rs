//! Value types for GUIs, elements, constraint nodes and the bipartite layout graph.
//!
//! Coordinates are integer pixels with the origin at the top-left corner of
//! the canvas and `y` growing downward.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LayoutError, Result};

/// Element-type vocabulary used when no vocabulary file is supplied.
pub const DEFAULT_KINDS: [&str; 18] = [
    "Text",
    "Image",
    "Icon",
    "Button",
    "TextField",
    "Checkbox",
    "RadioButton",
    "Switch",
    "Slider",
    "ListItem",
    "Card",
    "Toolbar",
    "NavBar",
    "Tab",
    "Ad",
    "Map",
    "WebView",
    "Background",
];

/// Axis-aligned integer bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Result<Self> {
        let b = BBox { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w < 1 || self.h < 1 {
            return Err(LayoutError::Validation(format!(
                "bbox size must be positive, got {}x{}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn area(&self) -> i64 {
        self.w * self.h
    }

    pub fn inside(&self, canvas: Canvas) -> bool {
        self.x >= 0 && self.y >= 0 && self.right() <= canvas.w && self.bottom() <= canvas.h
    }
}

/// Canvas dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub w: i64,
    pub h: i64,
}

/// Ordered set of element kinds; the index of a kind is its one-hot slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    kinds: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            kinds: DEFAULT_KINDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Vocabulary {
    pub fn new(kinds: Vec<String>) -> Result<Self> {
        if kinds.is_empty() {
            return Err(LayoutError::Validation("empty vocabulary".into()));
        }
        let mut seen = HashSet::new();
        for k in &kinds {
            if !seen.insert(k.as_str()) {
                return Err(LayoutError::Validation(format!("duplicate kind `{k}`")));
            }
        }
        Ok(Vocabulary { kinds })
    }

    /// Reads a JSON array of kind names.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let kinds: Vec<String> = serde_json::from_slice(bytes)?;
        Self::new(kinds)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn index_of(&self, kind: &str) -> Option<usize> {
        self.kinds.iter().position(|k| k == kind)
    }

    pub fn kinds(&self) -> &[String] {
        &self.kinds
    }
}

/// One GUI element. `bbox == None` means the element is still unplaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect_ratio: Option<f64>,
}

impl Element {
    pub fn placed(id: impl Into<String>, kind: impl Into<String>, bbox: BBox) -> Self {
        Element {
            id: id.into(),
            kind: kind.into(),
            bbox: Some(bbox),
            text: None,
            appearance: None,
            aspect_ratio: None,
        }
    }

    pub fn unplaced(id: impl Into<String>, kind: impl Into<String>, aspect_ratio: f64) -> Self {
        Element {
            id: id.into(),
            kind: kind.into(),
            bbox: None,
            text: None,
            appearance: None,
            aspect_ratio: Some(aspect_ratio),
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn is_placed(&self) -> bool {
        self.bbox.is_some()
    }

    /// Declared aspect ratio, falling back to the bbox ratio for placed elements.
    pub fn ratio(&self) -> Option<f64> {
        self.aspect_ratio
            .or_else(|| self.bbox.map(|b| b.w as f64 / b.h as f64))
    }

    /// Returns the bbox or an `Unplaced` error.
    pub fn bbox_or_err(&self) -> Result<BBox> {
        self.bbox.ok_or_else(|| LayoutError::Unplaced(self.id.clone()))
    }

    /// The same element with its geometry removed and its ratio kept.
    pub fn as_target(&self) -> Element {
        let mut t = self.clone();
        t.aspect_ratio = self.ratio();
        t.bbox = None;
        t
    }

    fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.id.is_empty() {
            return Err(LayoutError::Validation("empty element id".into()));
        }
        if vocab.index_of(&self.kind).is_none() {
            return Err(LayoutError::Validation(format!(
                "element `{}` has unknown kind `{}`",
                self.id, self.kind
            )));
        }
        if let Some(r) = self.aspect_ratio {
            if !(r.is_finite() && r > 0.0) {
                return Err(LayoutError::Validation(format!(
                    "element `{}` has invalid aspect ratio {r}",
                    self.id
                )));
            }
        }
        if let Some(a) = &self.appearance {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(LayoutError::Validation(format!(
                    "element `{}` has non-finite appearance features",
                    self.id
                )));
            }
        }
        match (self.bbox, self.aspect_ratio) {
            (Some(b), r) => {
                b.validate().map_err(|e| {
                    LayoutError::Validation(format!("element `{}`: {e}", self.id))
                })?;
                if let Some(r) = r {
                    if !ratio_consistent(b.w, b.h, r) {
                        return Err(LayoutError::Validation(format!(
                            "element `{}` aspect ratio {r} disagrees with bbox {}x{}",
                            self.id, b.w, b.h
                        )));
                    }
                }
            }
            (None, None) => {
                return Err(LayoutError::Validation(format!(
                    "unplaced element `{}` needs an aspect_ratio",
                    self.id
                )))
            }
            (None, Some(_)) => {}
        }
        Ok(())
    }
}

/// True when `w x h` matches ratio `r` up to one pixel of rounding in either dimension.
pub fn ratio_consistent(w: i64, h: i64, r: f64) -> bool {
    (w as f64 - r * h as f64).abs() <= 1.0 || (h as f64 - w as f64 / r).abs() <= 1.0
}

/// A canvas with placed and unplaced elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gui {
    pub canvas: Canvas,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default)]
    pub elements: Vec<Element>,
}

impl Gui {
    pub fn new(w: i64, h: i64) -> Self {
        Gui {
            canvas: Canvas { w, h },
            topic: None,
            elements: Vec::new(),
        }
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        if self.canvas.w < 1 || self.canvas.h < 1 {
            return Err(LayoutError::Validation(format!(
                "canvas must be at least 1x1, got {}x{}",
                self.canvas.w, self.canvas.h
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.elements {
            if !seen.insert(e.id.as_str()) {
                return Err(LayoutError::Validation(format!(
                    "duplicate element id `{}`",
                    e.id
                )));
            }
            e.validate(vocab)?;
        }
        Ok(())
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn element_mut(&mut self, id: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.id == id)
    }

    pub fn placed(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.is_placed())
    }

    pub fn unplaced(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| !e.is_placed())
    }

    /// Copy of this GUI keeping only placed elements, in order.
    pub fn placed_subset(&self) -> Gui {
        Gui {
            canvas: self.canvas,
            topic: self.topic.clone(),
            elements: self.placed().cloned().collect(),
        }
    }

    pub fn bbox_map(&self) -> HashMap<&str, BBox> {
        self.elements
            .iter()
            .filter_map(|e| e.bbox.map(|b| (e.id.as_str(), b)))
            .collect()
    }
}

/// Parses and validates a GUI against the default vocabulary.
pub fn gui_from_json(bytes: &[u8]) -> Result<Gui> {
    gui_from_json_with(bytes, &Vocabulary::default())
}

pub fn gui_from_json_with(bytes: &[u8], vocab: &Vocabulary) -> Result<Gui> {
    let gui: Gui = serde_json::from_slice(bytes)?;
    gui.validate(vocab)?;
    Ok(gui)
}

/// Canonical JSON: sorted keys, no insignificant whitespace.
pub fn gui_to_json(gui: &Gui) -> Vec<u8> {
    to_canonical_json(gui).into_bytes()
}

/// Serializes any value with object keys sorted recursively and no whitespace.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable value");
    let mut out = String::new();
    write_canonical(&v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (k, val)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(val, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

/// The six alignment kinds, in one-hot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlignKind {
    Left,
    Top,
    Right,
    Bottom,
    VMid,
    HMid,
}

impl AlignKind {
    pub const ALL: [AlignKind; 6] = [
        AlignKind::Left,
        AlignKind::Top,
        AlignKind::Right,
        AlignKind::Bottom,
        AlignKind::VMid,
        AlignKind::HMid,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Left, Right and VMid constrain an `x = a` line.
    pub fn is_vertical_line(self) -> bool {
        matches!(self, AlignKind::Left | AlignKind::Right | AlignKind::VMid)
    }

    /// The aligned coordinate of `b`, doubled so midlines stay integral.
    pub fn coord2(self, b: &BBox) -> i64 {
        match self {
            AlignKind::Left => 2 * b.x,
            AlignKind::Right => 2 * b.right(),
            AlignKind::VMid => 2 * b.x + b.w,
            AlignKind::Top => 2 * b.y,
            AlignKind::Bottom => 2 * b.bottom(),
            AlignKind::HMid => 2 * b.y + b.h,
        }
    }

    /// Origin coordinate (x or y) that puts an extent of `size` on line `line`.
    pub fn origin_for(self, line: i64, size: i64) -> i64 {
        match self {
            AlignKind::Left | AlignKind::Top => line,
            AlignKind::Right | AlignKind::Bottom => line - size,
            AlignKind::VMid | AlignKind::HMid => (2 * line - size).div_euclid(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AlignKind::Left => "left",
            AlignKind::Top => "top",
            AlignKind::Right => "right",
            AlignKind::Bottom => "bottom",
            AlignKind::VMid => "vmid",
            AlignKind::HMid => "hmid",
        }
    }
}

impl FromStr for AlignKind {
    type Err = LayoutError;
    fn from_str(s: &str) -> Result<Self> {
        AlignKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LayoutError::Validation(format!("unknown align_kind `{s}`")))
    }
}

impl fmt::Display for AlignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SizeDim {
    Width,
    Height,
}

impl SizeDim {
    pub fn name(self) -> &'static str {
        match self {
            SizeDim::Width => "width",
            SizeDim::Height => "height",
        }
    }

    pub fn of(self, b: &BBox) -> i64 {
        match self {
            SizeDim::Width => b.w,
            SizeDim::Height => b.h,
        }
    }
}

/// The four constraint families; the index selects per-family weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintFamily {
    Alignment,
    SameSize,
    ElementGroup,
    MultimodalGroup,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 4] = [
        ConstraintFamily::Alignment,
        ConstraintFamily::SameSize,
        ConstraintFamily::ElementGroup,
        ConstraintFamily::MultimodalGroup,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::Alignment => "alignment",
            ConstraintFamily::SameSize => "same_size",
            ConstraintFamily::ElementGroup => "element_group",
            ConstraintFamily::MultimodalGroup => "multimodal_group",
        }
    }

    pub fn is_group(self) -> bool {
        matches!(
            self,
            ConstraintFamily::ElementGroup | ConstraintFamily::MultimodalGroup
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    Alignment { align: AlignKind, line: i64 },
    SameSize { dim: SizeDim, value: i64 },
    ElementGroup,
    MultimodalGroup,
}

impl ConstraintKind {
    pub fn family(&self) -> ConstraintFamily {
        match self {
            ConstraintKind::Alignment { .. } => ConstraintFamily::Alignment,
            ConstraintKind::SameSize { .. } => ConstraintFamily::SameSize,
            ConstraintKind::ElementGroup => ConstraintFamily::ElementGroup,
            ConstraintKind::MultimodalGroup => ConstraintFamily::MultimodalGroup,
        }
    }

    /// Prefix of the deterministic constraint id.
    fn tag(&self) -> String {
        match self {
            ConstraintKind::Alignment { align, .. } => format!("align:{align}"),
            ConstraintKind::SameSize { dim, .. } => format!("size:{}", dim.name()),
            ConstraintKind::ElementGroup => "group".into(),
            ConstraintKind::MultimodalGroup => "mmgroup".into(),
        }
    }
}

/// A layout relation over two or more elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintNode {
    pub id: String,
    pub kind: ConstraintKind,
    /// Member element ids, sorted.
    pub members: Vec<String>,
}

impl ConstraintNode {
    /// Builds a node whose id is derived from its kind and sorted member ids.
    pub fn new(kind: ConstraintKind, members: impl IntoIterator<Item = String>) -> Self {
        let mut members: Vec<String> = members.into_iter().collect();
        members.sort();
        members.dedup();
        let id = format!("{}:{}", kind.tag(), members.join(","));
        ConstraintNode { id, kind, members }
    }

    pub fn family(&self) -> ConstraintFamily {
        self.kind.family()
    }

    pub fn has_member(&self, id: &str) -> bool {
        self.members.binary_search_by(|m| m.as_str().cmp(id)).is_ok()
    }

    /// Attribute vector in pixel units: 6 one-hot + `[a, 0]`/`[0, b]` for
    /// alignments, `[w, 0]`/`[0, h]` for same-size, and a zero slot of
    /// `group_slot` entries for both group families.
    pub fn raw_attr(&self, group_slot: usize) -> Vec<f64> {
        match self.kind {
            ConstraintKind::Alignment { align, line } => {
                let mut v = vec![0.0; 8];
                v[align.index()] = 1.0;
                if align.is_vertical_line() {
                    v[6] = line as f64;
                } else {
                    v[7] = line as f64;
                }
                v
            }
            ConstraintKind::SameSize { dim, value } => match dim {
                SizeDim::Width => vec![value as f64, 0.0],
                SizeDim::Height => vec![0.0, value as f64],
            },
            ConstraintKind::ElementGroup | ConstraintKind::MultimodalGroup => {
                vec![0.0; group_slot]
            }
        }
    }

    /// Whether `b` satisfies this alignment or same-size constraint exactly.
    /// Midline alignments allow half a pixel because an odd extent cannot
    /// be centred on an integer line. Group constraints return `None`.
    pub fn satisfied_exactly(&self, b: &BBox) -> Option<bool> {
        match self.kind {
            ConstraintKind::Alignment { align, line } => {
                let d = (align.coord2(b) - 2 * line).abs();
                Some(match align {
                    AlignKind::VMid | AlignKind::HMid => d <= 1,
                    _ => d == 0,
                })
            }
            ConstraintKind::SameSize { dim, value } => Some(dim.of(b) == value),
            _ => None,
        }
    }

    /// Geometric satisfaction within `tol` pixels (alignment and same-size only).
    pub fn satisfied_within(&self, b: &BBox, tol: i64) -> Option<bool> {
        match self.kind {
            ConstraintKind::Alignment { align, line } => {
                Some((align.coord2(b) - 2 * line).abs() <= 2 * tol)
            }
            ConstraintKind::SameSize { dim, value } => Some((dim.of(b) - value).abs() <= tol),
            _ => None,
        }
    }
}

/// JSON wire form of a constraint node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintJson {
    pub id: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub align_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_value: Option<i64>,
    pub members: Vec<String>,
}

impl From<&ConstraintNode> for ConstraintJson {
    fn from(c: &ConstraintNode) -> Self {
        let mut j = ConstraintJson {
            id: c.id.clone(),
            kind: c.family().name().to_string(),
            align_kind: None,
            line: None,
            size_kind: None,
            size_value: None,
            members: c.members.clone(),
        };
        match c.kind {
            ConstraintKind::Alignment { align, line } => {
                j.align_kind = Some(align.name().into());
                j.line = Some(line);
            }
            ConstraintKind::SameSize { dim, value } => {
                j.size_kind = Some(dim.name().into());
                j.size_value = Some(value);
            }
            _ => {}
        }
        j
    }
}

impl TryFrom<ConstraintJson> for ConstraintNode {
    type Error = LayoutError;

    fn try_from(j: ConstraintJson) -> Result<Self> {
        let kind = match j.kind.as_str() {
            "alignment" => {
                let align: AlignKind = j
                    .align_kind
                    .as_deref()
                    .ok_or_else(|| LayoutError::Validation("alignment without align_kind".into()))?
                    .parse()?;
                let line = j
                    .line
                    .ok_or_else(|| LayoutError::Validation("alignment without line".into()))?;
                ConstraintKind::Alignment { align, line }
            }
            "same_size" => {
                let dim = match j.size_kind.as_deref() {
                    Some("width") => SizeDim::Width,
                    Some("height") => SizeDim::Height,
                    other => {
                        return Err(LayoutError::Validation(format!(
                            "invalid size_kind {other:?}"
                        )))
                    }
                };
                let value = j
                    .size_value
                    .ok_or_else(|| LayoutError::Validation("same_size without size_value".into()))?;
                if value < 1 {
                    return Err(LayoutError::Validation(format!(
                        "nonpositive size_value {value}"
                    )));
                }
                ConstraintKind::SameSize { dim, value }
            }
            "element_group" => ConstraintKind::ElementGroup,
            "multimodal_group" => ConstraintKind::MultimodalGroup,
            other => {
                return Err(LayoutError::Validation(format!(
                    "unknown constraint kind `{other}`"
                )))
            }
        };
        let mut members = j.members;
        members.sort();
        members.dedup();
        Ok(ConstraintNode {
            id: j.id,
            kind,
            members,
        })
    }
}

pub fn constraints_from_json(bytes: &[u8]) -> Result<Vec<ConstraintNode>> {
    let raw: Vec<ConstraintJson> = serde_json::from_slice(bytes)?;
    raw.into_iter().map(ConstraintNode::try_from).collect()
}

pub fn constraints_to_json(cs: &[ConstraintNode]) -> Vec<u8> {
    let raw: Vec<ConstraintJson> = cs.iter().map(ConstraintJson::from).collect();
    to_canonical_json(&raw).into_bytes()
}

/// Heterogeneous bipartite graph over placed elements and constraint nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutGraph {
    /// Element node ids, in GUI order.
    pub element_ids: Vec<String>,
    /// Index of each element node in the source `Gui::elements`.
    pub element_index: Vec<usize>,
    pub constraints: Vec<ConstraintNode>,
    adjacency: Vec<bool>,
    element_neighbors: Vec<Vec<usize>>,
    constraint_neighbors: Vec<Vec<usize>>,
}

impl LayoutGraph {
    pub fn element_count(&self) -> usize {
        self.element_ids.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    /// `a[i][j]`: element node `i` is a member of constraint node `j`.
    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.constraints.len() + j]
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<bool>> {
        (0..self.element_count())
            .map(|i| (0..self.constraint_count()).map(|j| self.adjacent(i, j)).collect())
            .collect()
    }

    /// Constraint nodes adjacent to element node `i`.
    pub fn element_neighbors(&self, i: usize) -> &[usize] {
        &self.element_neighbors[i]
    }

    /// Element nodes adjacent to constraint node `j`.
    pub fn constraint_neighbors(&self, j: usize) -> &[usize] {
        &self.constraint_neighbors[j]
    }

    pub fn edge_count(&self) -> usize {
        self.constraint_neighbors.iter().map(Vec::len).sum()
    }

    pub fn element_position(&self, id: &str) -> Option<usize> {
        self.element_ids.iter().position(|e| e == id)
    }
}

/// Builds the bipartite graph of the GUI's placed elements and `constraints`.
/// Constraints with fewer than two members are dropped.
pub fn build_graph(gui: &Gui, constraints: &[ConstraintNode]) -> Result<LayoutGraph> {
    let mut element_ids = Vec::new();
    let mut element_index = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for (idx, e) in gui.elements.iter().enumerate() {
        if e.is_placed() {
            pos.insert(e.id.as_str(), element_ids.len());
            element_ids.push(e.id.clone());
            element_index.push(idx);
        }
    }

    let mut kept = Vec::new();
    for c in constraints {
        for m in &c.members {
            if !pos.contains_key(m.as_str()) {
                return match gui.element(m) {
                    Some(_) => Err(LayoutError::Unplaced(m.clone())),
                    None => Err(LayoutError::UnknownElement(m.clone())),
                };
            }
        }
        if c.members.len() >= 2 {
            kept.push(c.clone());
        }
    }

    let m = element_ids.len();
    let n = kept.len();
    let mut adjacency = vec![false; m * n];
    let mut element_neighbors = vec![Vec::new(); m];
    let mut constraint_neighbors = vec![Vec::new(); n];
    for (j, c) in kept.iter().enumerate() {
        let mut rows: Vec<usize> = c.members.iter().map(|id| pos[id.as_str()]).collect();
        rows.sort_unstable();
        for &i in &rows {
            adjacency[i * n + j] = true;
            element_neighbors[i].push(j);
        }
        constraint_neighbors[j] = rows;
    }

    Ok(LayoutGraph {
        element_ids,
        element_index,
        constraints: kept,
        adjacency,
        element_neighbors,
        constraint_neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_col() -> Gui {
        let mut g = Gui::new(400, 400);
        for (i, y) in [0, 50, 100].into_iter().enumerate() {
            g.elements.push(Element::placed(
                format!("e{i}"),
                "Button",
                BBox::new(10, y, 100, 40).unwrap(),
            ));
        }
        g
    }

    #[test]
    fn single_button_round_trip() {
        let json = br#"{"canvas":{"w":1440,"h":2560},"elements":[{"id":"b","kind":"Button","bbox":{"x":100,"y":100,"w":200,"h":80}}]}"#;
        let gui = gui_from_json(json).unwrap();
        assert_eq!(gui.placed().count(), 1);
        let bytes = gui_to_json(&gui);
        assert_eq!(gui_from_json(&bytes).unwrap(), gui);
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            r#"{"canvas":{"h":2560,"w":1440},"elements":[{"bbox":{"h":80,"w":200,"x":100,"y":100},"id":"b","kind":"Button"}]}"#
        );
    }

    #[test]
    fn zero_width_rejected() {
        let json = br#"{"canvas":{"w":100,"h":100},"elements":[{"id":"b","kind":"Button","bbox":{"x":0,"y":0,"w":0,"h":10}}]}"#;
        assert!(matches!(gui_from_json(json), Err(LayoutError::Validation(_))));
    }

    #[test]
    fn malformed_and_invalid_inputs() {
        assert!(matches!(gui_from_json(b"{"), Err(LayoutError::Parse(_))));
        let dup = br#"{"canvas":{"w":100,"h":100},"elements":[{"id":"a","kind":"Text","bbox":{"x":0,"y":0,"w":5,"h":5}},{"id":"a","kind":"Text","bbox":{"x":0,"y":0,"w":5,"h":5}}]}"#;
        assert!(matches!(gui_from_json(dup), Err(LayoutError::Validation(_))));
        let unk = br#"{"canvas":{"w":100,"h":100},"elements":[{"id":"a","kind":"Spaceship","bbox":{"x":0,"y":0,"w":5,"h":5}}]}"#;
        assert!(matches!(gui_from_json(unk), Err(LayoutError::Validation(_))));
        let no_ratio = br#"{"canvas":{"w":100,"h":100},"elements":[{"id":"a","kind":"Text"}]}"#;
        assert!(matches!(gui_from_json(no_ratio), Err(LayoutError::Validation(_))));
    }

    #[test]
    fn empty_gui_emits_canvas_only() {
        let g = Gui::new(10, 20);
        assert_eq!(
            String::from_utf8(gui_to_json(&g)).unwrap(),
            r#"{"canvas":{"h":20,"w":10},"elements":[]}"#
        );
    }

    #[test]
    fn unplaced_keeps_ratio() {
        let json = br#"{"canvas":{"w":100,"h":100},"elements":[{"id":"a","kind":"Text","aspect_ratio":2.5}]}"#;
        let g = gui_from_json(json).unwrap();
        assert_eq!(g.elements[0].ratio(), Some(2.5));
        assert!(!g.elements[0].is_placed());
    }

    #[test]
    fn graph_all_ones_for_shared_alignment() {
        let g = three_col();
        let c = ConstraintNode::new(
            ConstraintKind::Alignment { align: AlignKind::Left, line: 10 },
            ["e0", "e1", "e2"].map(String::from),
        );
        let graph = build_graph(&g, &[c]).unwrap();
        assert_eq!(graph.adjacency_matrix(), vec![vec![true]; 3]);
        assert_eq!(graph.edge_count(), 3);
    }

    #[test]
    fn degree_one_constraint_dropped() {
        let g = three_col();
        let c = ConstraintNode::new(ConstraintKind::ElementGroup, ["e1".to_string()]);
        let graph = build_graph(&g, &[c]).unwrap();
        assert_eq!(graph.constraint_count(), 0);
        assert_eq!(graph.element_count(), 3);
    }

    #[test]
    fn unknown_member_is_an_error() {
        let g = three_col();
        let c = ConstraintNode::new(ConstraintKind::ElementGroup, ["e1", "zz"].map(String::from));
        assert!(matches!(build_graph(&g, &[c]), Err(LayoutError::UnknownElement(_))));
    }

    #[test]
    fn constraint_json_round_trip() {
        let cs = vec![
            ConstraintNode::new(
                ConstraintKind::Alignment { align: AlignKind::HMid, line: 7 },
                ["b", "a"].map(String::from),
            ),
            ConstraintNode::new(
                ConstraintKind::SameSize { dim: SizeDim::Height, value: 40 },
                ["a", "c"].map(String::from),
            ),
            ConstraintNode::new(ConstraintKind::MultimodalGroup, ["a", "c"].map(String::from)),
        ];
        let bytes = constraints_to_json(&cs);
        assert_eq!(constraints_from_json(&bytes).unwrap(), cs);
    }

    #[test]
    fn attr_layouts() {
        let left = ConstraintNode::new(
            ConstraintKind::Alignment { align: AlignKind::Left, line: 100 },
            ["a", "b"].map(String::from),
        );
        assert_eq!(left.raw_attr(8), vec![1., 0., 0., 0., 0., 0., 100., 0.]);
        let top = ConstraintNode::new(
            ConstraintKind::Alignment { align: AlignKind::Top, line: 5 },
            ["a", "b"].map(String::from),
        );
        assert_eq!(top.raw_attr(8), vec![0., 1., 0., 0., 0., 0., 0., 5.]);
        let w = ConstraintNode::new(
            ConstraintKind::SameSize { dim: SizeDim::Width, value: 200 },
            ["a", "b"].map(String::from),
        );
        assert_eq!(w.raw_attr(8), vec![200., 0.]);
        let g = ConstraintNode::new(ConstraintKind::ElementGroup, ["a", "b"].map(String::from));
        assert_eq!(g.raw_attr(8).len(), 8);
    }

    #[test]
    fn midline_origin_is_within_half_pixel() {
        for line in 0..20 {
            for size in 1..9 {
                let x = AlignKind::VMid.origin_for(line, size);
                let b = BBox { x, y: 0, w: size, h: 1 };
                assert!((AlignKind::VMid.coord2(&b) - 2 * line).abs() <= 1);
            }
        }
    }
}
