//! The trainable encoder: element/constraint embeddings, message passing,
//! the graph readout and the prediction heads.

mod embed;
pub mod gnn;

pub use embed::{
    embed_text, sinusoid_table, CorpusStats, EmbeddingConfig, FeatureProvider, HashedFeatures,
};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::model::{
    build_graph, BBox, Canvas, ConstraintFamily, ConstraintKind, ConstraintNode, Element, Gui, LayoutGraph,
    Vocabulary,
};
use crate::tensor::{Bound, Checkpoint, ParamId, ParamStore, Tape, Tensor, Var};
use gnn::{gnn_forward, graph_embedding, LayerVars, NodeVars, Topology};

/// Topic labels of the synthetic corpus templates.
pub const DEFAULT_TOPICS: [&str; 8] = [
    "gallery", "list", "form", "settings", "login", "news", "profile", "map",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub embed: EmbeddingConfig,
    /// Message-passing layers.
    pub layers: usize,
    pub topics: Vec<String>,
    /// Hidden widths of the topic classifier.
    pub classifier_hidden: [usize; 2],
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            embed: EmbeddingConfig::default(),
            layers: 2,
            topics: DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect(),
            classifier_hidden: [256, 64],
        }
    }
}

impl NetworkConfig {
    pub fn with_node_dim(mut self, d: usize) -> Self {
        self.embed.node_dim = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        if self.layers == 0 {
            return Err(LayoutError::Validation("layers must be >= 1".into()));
        }
        if self.topics.len() < 2 {
            return Err(LayoutError::Validation("need at least two topics".into()));
        }
        if self.classifier_hidden.contains(&0) {
            return Err(LayoutError::Validation("classifier widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Readout matrix names, in the order expected by [`graph_embedding`].
const READOUT: [&str; 5] = ["ele", "align", "size", "eg", "mg"];

fn family_key(k: usize) -> &'static str {
    ConstraintFamily::ALL[k].name()
}

#[derive(Debug, Clone)]
struct LayerIds {
    element_self: ParamId,
    element_neigh: [ParamId; 4],
    constraint_self: [ParamId; 4],
    constraint_neigh: [ParamId; 4],
}

#[derive(Debug, Clone)]
struct Ids {
    pos_table: ParamId,
    size_table: ParamId,
    type_matrix: ParamId,
    placeholder: ParamId,
    elem: (ParamId, ParamId),
    cons: [(ParamId, ParamId); 4],
    group_slot: [ParamId; 2],
    layers: Vec<LayerIds>,
    readout: [ParamId; 5],
    place: [(ParamId, ParamId); 3],
    cons_head: [(ParamId, ParamId); 2],
    recon: (ParamId, ParamId),
    cls: [(ParamId, ParamId); 3],
}

fn lookup(store: &ParamStore, name: &str) -> Result<ParamId> {
    store
        .id(name)
        .ok_or_else(|| LayoutError::Checkpoint(format!("missing parameter '{name}'")))
}

impl Ids {
    fn resolve(store: &ParamStore, layers: usize) -> Result<Ids> {
        let l = |n: &str| lookup(store, n);
        let wb = |n: &str| -> Result<(ParamId, ParamId)> { Ok((l(&format!("{n}.w"))?, l(&format!("{n}.b"))?)) };
        let fam = |f: &dyn Fn(&str) -> String| -> Result<[ParamId; 4]> {
            Ok([l(&f(family_key(0)))?, l(&f(family_key(1)))?, l(&f(family_key(2)))?, l(&f(family_key(3)))?])
        };
        let mut layer_ids = Vec::with_capacity(layers);
        for i in 0..layers {
            layer_ids.push(LayerIds {
                element_self: l(&format!("gnn.{i}.element.self"))?,
                element_neigh: fam(&|k| format!("gnn.{i}.element.neigh.{k}"))?,
                constraint_self: fam(&|k| format!("gnn.{i}.{k}.self"))?,
                constraint_neigh: fam(&|k| format!("gnn.{i}.{k}.neigh"))?,
            });
        }
        Ok(Ids {
            pos_table: l("embed.position")?,
            size_table: l("embed.size")?,
            type_matrix: l("embed.type")?,
            placeholder: l("embed.placeholder")?,
            elem: wb("embed.element")?,
            cons: [
                wb(&format!("embed.{}", family_key(0)))?,
                wb(&format!("embed.{}", family_key(1)))?,
                wb(&format!("embed.{}", family_key(2)))?,
                wb(&format!("embed.{}", family_key(3)))?,
            ],
            group_slot: [
                l(&format!("embed.{}.slot", family_key(2)))?,
                l(&format!("embed.{}.slot", family_key(3)))?,
            ],
            layers: layer_ids,
            readout: [
                l(&format!("readout.{}", READOUT[0]))?,
                l(&format!("readout.{}", READOUT[1]))?,
                l(&format!("readout.{}", READOUT[2]))?,
                l(&format!("readout.{}", READOUT[3]))?,
                l(&format!("readout.{}", READOUT[4]))?,
            ],
            place: [wb("head.place.0")?, wb("head.place.1")?, wb("head.place.2")?],
            cons_head: [wb("head.constraint.0")?, wb("head.constraint.1")?],
            recon: wb("head.recon")?,
            cls: [wb("head.topic.0")?, wb("head.topic.1")?, wb("head.topic.2")?],
        })
    }
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::from_parts(rows, cols, data)
}

fn init_params(cfg: &NetworkConfig, vocab_len: usize, seed: u64) -> Result<ParamStore> {
    let e = &cfg.embed;
    let d = e.node_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    let rows = e.table_rows();
    s.add("embed.position", Tensor::from_parts(rows, e.coord_dim, sinusoid_table(rows, e.coord_dim)))?;
    s.add("embed.size", Tensor::from_parts(rows, e.coord_dim, sinusoid_table(rows, e.coord_dim)))?;
    s.add("embed.type", glorot(&mut rng, vocab_len, e.type_dim))?;
    s.add("embed.placeholder", Tensor::zeros(1, e.position_width() + e.size_width()))?;
    let linear = |s: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| -> Result<()> {
        s.add(format!("{name}.w"), glorot(rng, i, o))?;
        s.add(format!("{name}.b"), Tensor::zeros(1, o))?;
        Ok(())
    };
    linear(&mut s, &mut rng, "embed.element", e.element_input_width(), d)?;
    for k in ConstraintFamily::ALL {
        let width = attr_width(k, e.group_slot);
        linear(&mut s, &mut rng, &format!("embed.{}", k.name()), width, d)?;
    }
    for k in [ConstraintFamily::ElementGroup, ConstraintFamily::MultimodalGroup] {
        s.add(format!("embed.{}.slot", k.name()), Tensor::zeros(1, e.group_slot))?;
    }
    for i in 0..cfg.layers {
        s.add(format!("gnn.{i}.element.self"), glorot(&mut rng, d, d))?;
        for k in ConstraintFamily::ALL {
            s.add(format!("gnn.{i}.element.neigh.{}", k.name()), glorot(&mut rng, d, d))?;
        }
        for k in ConstraintFamily::ALL {
            s.add(format!("gnn.{i}.{}.self", k.name()), glorot(&mut rng, d, d))?;
            s.add(format!("gnn.{i}.{}.neigh", k.name()), glorot(&mut rng, d, d))?;
        }
    }
    for r in READOUT {
        s.add(format!("readout.{r}"), glorot(&mut rng, d, d))?;
    }
    linear(&mut s, &mut rng, "head.place.0", 2 * d, d)?;
    linear(&mut s, &mut rng, "head.place.1", d, d)?;
    linear(&mut s, &mut rng, "head.place.2", d, 4)?;
    linear(&mut s, &mut rng, "head.constraint.0", 3 * d, d)?;
    linear(&mut s, &mut rng, "head.constraint.1", d, 1)?;
    linear(&mut s, &mut rng, "head.recon", d, 4)?;
    let [h1, h2] = cfg.classifier_hidden;
    linear(&mut s, &mut rng, "head.topic.0", d, h1)?;
    linear(&mut s, &mut rng, "head.topic.1", h1, h2)?;
    linear(&mut s, &mut rng, "head.topic.2", h2, cfg.topics.len())?;
    Ok(s)
}

/// Attribute width of a constraint family.
pub fn attr_width(k: ConstraintFamily, group_slot: usize) -> usize {
    match k {
        ConstraintFamily::Alignment => 8,
        ConstraintFamily::SameSize => 2,
        _ => group_slot,
    }
}

/// Constraint attributes with line and size values divided by the matching
/// canvas dimension. Group families have no data attributes.
pub fn normalized_attr(c: &ConstraintNode, canvas: Canvas) -> Option<Vec<f64>> {
    let mut v = c.raw_attr(0);
    match c.kind {
        ConstraintKind::Alignment { .. } => {
            v[6] /= canvas.w as f64;
            v[7] /= canvas.h as f64;
            Some(v)
        }
        ConstraintKind::SameSize { .. } => {
            v[0] /= canvas.w as f64;
            v[1] /= canvas.h as f64;
            Some(v)
        }
        _ => None,
    }
}

/// What the network learned to do, stored in checkpoint metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Untrained,
    Autocomplete,
    Classify,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    config: NetworkConfig,
    vocab: Vec<String>,
    stats: CorpusStats,
    task: Task,
    seed: u64,
    #[serde(default)]
    corpus_hash: Option<String>,
}

/// Constant inputs of one forward pass.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub canvas: Canvas,
    pub graph: LayoutGraph,
    pub topo: Topology,
    placed: Option<ElementRows>,
    target: Option<ElementRows>,
    attrs: [Option<Tensor>; 4],
}

#[derive(Debug, Clone)]
struct ElementRows {
    coords: [Vec<usize>; 6],
    kinds: Vec<usize>,
    /// Appearance and text features.
    content: Tensor,
    /// `[target flag, ln aspect ratio]`.
    extra: Tensor,
}

impl Prepared {
    pub fn placed_count(&self) -> usize {
        self.graph.element_count()
    }

    pub fn has_target(&self) -> bool {
        self.target.is_some()
    }
}

/// Tape handles produced by [`Network::encode`].
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub nodes: NodeVars,
    pub graph: Var,
    pub target: Option<Var>,
}

/// The full model: configuration, vocabulary, text statistics and parameters.
#[derive(Clone)]
pub struct Network {
    cfg: NetworkConfig,
    vocab: Vocabulary,
    stats: CorpusStats,
    provider: Arc<dyn FeatureProvider>,
    params: ParamStore,
    ids: Ids,
    pub task: Task,
    pub seed: u64,
    pub corpus_hash: Option<String>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("cfg", &self.cfg)
            .field("task", &self.task)
            .field("params", &self.params.scalar_count())
            .finish()
    }
}

impl Network {
    pub fn new(cfg: NetworkConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let params = init_params(&cfg, vocab.len(), seed)?;
        let ids = Ids::resolve(&params, cfg.layers)?;
        let provider = Arc::new(HashedFeatures {
            text_dim: cfg.embed.text_dim,
            appearance_dim: cfg.embed.appearance_dim,
        });
        Ok(Network {
            cfg,
            vocab,
            stats: CorpusStats::default(),
            provider,
            params,
            ids,
            task: Task::Untrained,
            seed,
            corpus_hash: None,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }

    pub fn set_stats(&mut self, stats: CorpusStats) {
        self.stats = stats;
    }

    pub fn set_provider(&mut self, provider: Arc<dyn FeatureProvider>) {
        self.provider = provider;
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = Meta {
            config: self.cfg.clone(),
            vocab: self.vocab.kinds().to_vec(),
            stats: self.stats.clone(),
            task: self.task,
            seed: self.seed,
            corpus_hash: self.corpus_hash.clone(),
        };
        self.params
            .to_checkpoint(serde_json::to_value(meta).expect("metadata serializes"))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: Meta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| LayoutError::Checkpoint(format!("metadata: {e}")))?;
        meta.config.validate()?;
        let vocab = Vocabulary::new(meta.vocab)?;
        let params = ParamStore::from_checkpoint(ck)?;
        let ids = Ids::resolve(&params, meta.config.layers)?;
        let fresh = init_params(&meta.config, vocab.len(), 0)?;
        for ((n1, t1), (n2, t2)) in fresh.iter().zip(params.iter()) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(LayoutError::Checkpoint(format!("unexpected parameter '{n2}'")));
            }
        }
        if fresh.len() != params.len() {
            return Err(LayoutError::Checkpoint("parameter count mismatch".into()));
        }
        Ok(Network {
            provider: Arc::new(HashedFeatures {
                text_dim: meta.config.embed.text_dim,
                appearance_dim: meta.config.embed.appearance_dim,
            }),
            cfg: meta.config,
            vocab,
            stats: meta.stats,
            params,
            ids,
            task: meta.task,
            seed: meta.seed,
            corpus_hash: meta.corpus_hash,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Checkpoint metadata without the parameter arrays.
    pub fn info(&self) -> serde_json::Value {
        serde_json::json!({
            "task": self.task,
            "seed": self.seed,
            "corpus_hash": self.corpus_hash,
            "node_dim": self.cfg.embed.node_dim,
            "coord_dim": self.cfg.embed.coord_dim,
            "layers": self.cfg.layers,
            "topics": self.cfg.topics,
            "vocab_size": self.vocab.len(),
            "parameters": self.params.scalar_count(),
        })
    }

    fn element_rows(&self, els: &[(&Element, Option<BBox>)], target: bool) -> Result<ElementRows> {
        let e = &self.cfg.embed;
        let max = e.max_coord as i64;
        let mut coords: [Vec<usize>; 6] = Default::default();
        let mut kinds = Vec::with_capacity(els.len());
        let cw = e.appearance_dim + e.text_dim;
        let mut content = Vec::with_capacity(els.len() * cw);
        let mut extra = Vec::with_capacity(els.len() * 2);
        for (el, bbox) in els {
            kinds.push(self.vocab.index_of(&el.kind).ok_or_else(|| {
                LayoutError::Validation(format!("element `{}` has unknown kind `{}`", el.id, el.kind))
            })?);
            if let Some(b) = bbox {
                let vals = [b.x, b.y, b.right(), b.bottom(), b.w, b.h];
                for (slot, v) in coords.iter_mut().zip(vals) {
                    if !(0..=max).contains(&v) {
                        return Err(LayoutError::OutOfRange(format!(
                            "coordinate {v} of `{}` outside lookup table 0..={max}",
                            el.id
                        )));
                    }
                    slot.push(v as usize);
                }
            }
            match &el.appearance {
                Some(a) => content.extend(self.provider.appearance(a)),
                None => content.extend(std::iter::repeat_n(0.0, e.appearance_dim)),
            }
            if content.len() != kinds.len() * cw - e.text_dim {
                return Err(LayoutError::Shape("appearance feature width".into()));
            }
            content.extend(embed_text(
                el.text.as_deref(),
                &self.stats,
                e.unk_threshold,
                self.provider.as_ref(),
                e.text_dim,
            )?);
            let ratio = match bbox {
                Some(b) if !target => b.w as f64 / b.h as f64,
                _ => el
                    .aspect_ratio
                    .ok_or_else(|| LayoutError::Validation(format!("target `{}` has no aspect_ratio", el.id)))?,
            };
            extra.push(if target { 1.0 } else { 0.0 });
            extra.push(ratio.ln());
        }
        let n = els.len();
        Ok(ElementRows {
            coords,
            kinds,
            content: Tensor::new(n, cw, content)?,
            extra: Tensor::new(n, 2, extra)?,
        })
    }

    /// Builds the graph over `partial`'s placed elements and `constraints`,
    /// with `target` (if any) appended as an isolated unplaced node.
    pub fn prepare(&self, partial: &Gui, constraints: &[ConstraintNode], target: Option<&Element>) -> Result<Prepared> {
        let graph = build_graph(partial, constraints)?;
        let placed: Vec<(&Element, Option<BBox>)> = graph
            .element_index
            .iter()
            .map(|&i| (&partial.elements[i], partial.elements[i].bbox))
            .collect();
        let placed = if placed.is_empty() {
            None
        } else {
            Some(self.element_rows(&placed, false)?)
        };
        let target = match target {
            Some(t) => Some(self.element_rows(&[(t, None)], true)?),
            None => None,
        };
        if placed.is_none() && target.is_none() {
            return Err(LayoutError::Empty("graph has no element nodes".into()));
        }
        let topo = Topology::new(&graph, usize::from(target.is_some()));
        let mut attrs: [Option<Tensor>; 4] = Default::default();
        for k in [ConstraintFamily::Alignment, ConstraintFamily::SameSize] {
            let rows = &topo.family_rows[k.index()];
            if rows.is_empty() {
                continue;
            }
            let width = attr_width(k, 0);
            let mut data = Vec::with_capacity(rows.len() * width);
            for &j in rows {
                data.extend(normalized_attr(&graph.constraints[j], partial.canvas).expect("data family"));
            }
            attrs[k.index()] = Some(Tensor::new(rows.len(), width, data)?);
        }
        Ok(Prepared {
            canvas: partial.canvas,
            graph,
            topo,
            placed,
            target,
            attrs,
        })
    }

    fn linear(&self, tape: &mut Tape, b: &Bound, x: Var, (w, bias): (ParamId, ParamId)) -> Result<Var> {
        let y = tape.matmul(x, b.var(w))?;
        tape.add_row(y, b.var(bias))
    }

    fn element_features(&self, tape: &mut Tape, b: &Bound, rows: &ElementRows, target: bool) -> Result<Var> {
        let mut parts = Vec::with_capacity(10);
        if target {
            parts.push(b.var(self.ids.placeholder));
        } else {
            for (i, idx) in rows.coords.iter().enumerate() {
                let table = if i < 4 { self.ids.pos_table } else { self.ids.size_table };
                parts.push(tape.gather(b.var(table), idx)?);
            }
        }
        parts.push(tape.constant(rows.content.clone())?);
        parts.push(tape.gather(b.var(self.ids.type_matrix), &rows.kinds)?);
        parts.push(tape.constant(rows.extra.clone())?);
        tape.concat(&parts)
    }

    /// Runs embeddings, message passing and the readout.
    pub fn encode(&self, tape: &mut Tape, b: &Bound, p: &Prepared) -> Result<Encoded> {
        let mut raw = Vec::with_capacity(2);
        if let Some(rows) = &p.placed {
            raw.push(self.element_features(tape, b, rows, false)?);
        }
        if let Some(rows) = &p.target {
            raw.push(self.element_features(tape, b, rows, true)?);
        }
        let x = if raw.len() == 1 { raw[0] } else { tape.concat_rows(&raw)? };
        let h_e = self.linear(tape, b, x, self.ids.elem)?;

        let mut h_c: [Option<Var>; 4] = [None; 4];
        for k in ConstraintFamily::ALL {
            let n = p.topo.family_rows[k.index()].len();
            if n == 0 {
                continue;
            }
            let attr = match &p.attrs[k.index()] {
                Some(a) => tape.constant(a.clone())?,
                None => {
                    let slot = self.ids.group_slot[k.index() - 2];
                    tape.gather(b.var(slot), &vec![0; n])?
                }
            };
            h_c[k.index()] = Some(self.linear(tape, b, attr, self.ids.cons[k.index()])?);
        }

        let layers: Vec<LayerVars> = self
            .ids
            .layers
            .iter()
            .map(|l| LayerVars {
                element_self: b.var(l.element_self),
                element_neigh: l.element_neigh.map(|i| b.var(i)),
                constraint_self: l.constraint_self.map(|i| b.var(i)),
                constraint_neigh: l.constraint_neigh.map(|i| b.var(i)),
            })
            .collect();
        let nodes = gnn_forward(tape, &p.topo, NodeVars { elements: h_e, constraints: h_c }, &layers)?;

        let m = p.placed_count();
        let (readout_rows, target) = match (&p.target, m) {
            (None, _) => (nodes.elements, None),
            (Some(_), 0) => (nodes.elements, Some(nodes.elements)),
            (Some(_), m) => {
                let placed: Vec<usize> = (0..m).collect();
                (tape.gather(nodes.elements, &placed)?, Some(tape.lookup_row(nodes.elements, m)?))
            }
        };
        let readout = self.ids.readout.map(|i| b.var(i));
        let graph = graph_embedding(tape, readout_rows, &nodes.constraints, &readout)?;
        Ok(Encoded { nodes, graph, target })
    }

    /// Placement head: `concat(h_t, h_G)` → two hidden relu layers → 4 outputs
    /// in canvas-normalised units.
    pub fn placement_head(&self, tape: &mut Tape, b: &Bound, enc: &Encoded) -> Result<Var> {
        let t = enc
            .target
            .ok_or_else(|| LayoutError::Validation("placement needs a target node".into()))?;
        let x = tape.concat(&[t, enc.graph])?;
        let h = self.linear(tape, b, x, self.ids.place[0])?;
        let h = tape.relu(h)?;
        let h = self.linear(tape, b, h, self.ids.place[1])?;
        let h = tape.relu(h)?;
        self.linear(tape, b, h, self.ids.place[2])
    }

    /// Constraint head: one sigmoid probability per graph constraint, in graph
    /// order (`N x 1`), or `None` when the graph has no constraints.
    pub fn constraint_head(&self, tape: &mut Tape, b: &Bound, p: &Prepared, enc: &Encoded) -> Result<Option<Var>> {
        let n = p.graph.constraint_count();
        if n == 0 {
            return Ok(None);
        }
        let t = enc
            .target
            .ok_or_else(|| LayoutError::Validation("constraint prediction needs a target node".into()))?;
        let mut stacked = Vec::new();
        let mut order = vec![0usize; n];
        let mut row = 0;
        for k in 0..4 {
            if let Some(h) = enc.nodes.constraints[k] {
                stacked.push(h);
                for &j in &p.topo.family_rows[k] {
                    order[j] = row;
                    row += 1;
                }
            }
        }
        let all = if stacked.len() == 1 { stacked[0] } else { tape.concat_rows(&stacked)? };
        let h_c = tape.gather(all, &order)?;
        let ts = tape.gather(t, &vec![0; n])?;
        let gs = tape.gather(enc.graph, &vec![0; n])?;
        let x = tape.concat(&[ts, gs, h_c])?;
        let h = self.linear(tape, b, x, self.ids.cons_head[0])?;
        let h = tape.relu(h)?;
        let logit = self.linear(tape, b, h, self.ids.cons_head[1])?;
        Ok(Some(tape.sigmoid(logit)?))
    }

    /// Per-element reconstruction head over element embeddings (`M x 4`, normalised).
    pub fn reconstruction_head(&self, tape: &mut Tape, b: &Bound, enc: &Encoded, rows: usize) -> Result<Var> {
        let idx: Vec<usize> = (0..rows).collect();
        let h = tape.gather(enc.nodes.elements, &idx)?;
        self.linear(tape, b, h, self.ids.recon)
    }

    /// Topic logits from the graph embedding.
    pub fn topic_logits(&self, tape: &mut Tape, b: &Bound, enc: &Encoded) -> Result<Var> {
        let h = self.linear(tape, b, enc.graph, self.ids.cls[0])?;
        let h = tape.relu(h)?;
        let h = self.linear(tape, b, h, self.ids.cls[1])?;
        let h = tape.relu(h)?;
        self.linear(tape, b, h, self.ids.cls[2])
    }

    /// Raw target prediction: normalised `(x, y, w, h)` and constraint probabilities in graph order.
    pub fn predict_prepared(&self, p: &Prepared) -> Result<([f64; 4], Vec<f64>)> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let enc = self.encode(&mut tape, &b, p)?;
        let place = self.placement_head(&mut tape, &b, &enc)?;
        let probs = self.constraint_head(&mut tape, &b, p, &enc)?;
        let v = tape.value(place).data();
        Ok((
            [v[0], v[1], v[2], v[3]],
            probs.map(|pv| tape.value(pv).data().to_vec()).unwrap_or_default(),
        ))
    }

    /// Graph embedding of a GUI's placed elements under `constraints`.
    pub fn graph_vector(&self, gui: &Gui, constraints: &[ConstraintNode]) -> Result<Vec<f64>> {
        let p = self.prepare(gui, constraints, None)?;
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let enc = self.encode(&mut tape, &b, &p)?;
        Ok(tape.value(enc.graph).data().to_vec())
    }

    /// Topic probabilities of a GUI's placed elements under `constraints`.
    pub fn topic_probabilities(&self, gui: &Gui, constraints: &[ConstraintNode]) -> Result<Vec<f64>> {
        let p = self.prepare(gui, constraints, None)?;
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let enc = self.encode(&mut tape, &b, &p)?;
        let logits = self.topic_logits(&mut tape, &b, &enc)?;
        let probs = tape.softmax(logits)?;
        Ok(tape.value(probs).data().to_vec())
    }

    /// Full-layout reconstruction of every placed element, in pixels.
    /// Sizes are clamped to at least one pixel.
    pub fn predict(&self, gui: &Gui, constraints: &[ConstraintNode]) -> Result<Vec<(String, BBox)>> {
        let p = self.prepare(gui, constraints, None)?;
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape);
        let enc = self.encode(&mut tape, &b, &p)?;
        let out = self.reconstruction_head(&mut tape, &b, &enc, p.placed_count())?;
        let t = tape.value(out);
        let (cw, ch) = (gui.canvas.w as f64, gui.canvas.h as f64);
        Ok(p.graph
            .element_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let r = t.row(i);
                let bbox = BBox {
                    x: (r[0] * cw).round() as i64,
                    y: (r[1] * ch).round() as i64,
                    w: ((r[2] * cw).round() as i64).max(1),
                    h: ((r[3] * ch).round() as i64).max(1),
                };
                (id.clone(), bbox)
            })
            .collect())
    }
}
