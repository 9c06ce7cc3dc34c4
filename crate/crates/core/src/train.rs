//! Training loops: autocompletion (placement + constraint heads), topic
//! classification and full-layout reconstruction.
//!
//! Each sample runs on its own tape (in parallel); per-sample gradients are
//! summed in batch order, so results do not depend on the thread count.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::eval::{constraint_flags, reading_order, ChunkMode, PairSample};
use crate::extract::{extract_all, extract_placed, ExtractionConfig};
use crate::model::{to_canonical_json, Gui};
use crate::network::{Network, Prepared, Task};
use crate::objective::{total_loss, LossReport, LossWeights};
use crate::tensor::{adam_step, AdamConfig, AdamState, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub extraction: ExtractionConfig,
    /// Chunk draws per training GUI when generating pairs.
    pub chunks_per_gui: usize,
    pub chunk_mode: ChunkMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            seed: 0,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            extraction: ExtractionConfig::default(),
            chunks_per_gui: 30,
            chunk_mode: ChunkMode::Contiguous,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(LayoutError::Validation("epochs and batch_size must be positive".into()));
        }
        self.adam.validate()?;
        self.weights.validate()?;
        self.extraction.validate()
    }
}

/// FNV-1a over the canonical JSON of every `(id, gui)` in order.
pub fn corpus_hash(items: &[(String, Gui)]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (id, g) in items {
        for byte in id.bytes().chain(to_canonical_json(g).into_bytes()) {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Largest canvas side in the corpus, used to size the coordinate tables.
pub fn max_canvas_side(items: &[(String, Gui)]) -> i64 {
    items.iter().map(|(_, g)| g.canvas.w.max(g.canvas.h)).max().unwrap_or(1)
}

/// One autocompletion example: the prepared partial graph with its target
/// node, the target's normalised truth box, and truth flags per constraint.
pub struct AutocompleteSample {
    pub prepared: Prepared,
    pub truth: [f64; 4],
    pub flags: Vec<f64>,
}

pub fn autocomplete_sample(net: &Network, pair: &PairSample, cfg: &ExtractionConfig) -> Result<AutocompleteSample> {
    let b = pair.target.bbox_or_err()?;
    let constraints = extract_placed(&pair.partial, cfg)?;
    let prepared = net.prepare(&pair.query(), &constraints, Some(&pair.target.as_target()))?;
    let flags = constraint_flags(&pair.partial, &prepared.graph.constraints, &pair.target, cfg)?;
    let (w, h) = (pair.partial.canvas.w as f64, pair.partial.canvas.h as f64);
    Ok(AutocompleteSample {
        prepared,
        truth: [b.x as f64 / w, b.y as f64 / h, b.w as f64 / w, b.h as f64 / h],
        flags,
    })
}

pub fn autocomplete_samples(net: &Network, pairs: &[PairSample], cfg: &ExtractionConfig) -> Result<Vec<AutocompleteSample>> {
    pairs.par_iter().map(|p| autocomplete_sample(net, p, cfg)).collect()
}

/// Loss and per-parameter gradients of one autocompletion sample, with the
/// loss in canvas-normalised units (a 1 x 1 canvas for the boundary term).
pub fn autocomplete_grads(net: &Network, s: &AutocompleteSample, w: LossWeights) -> Result<(LossReport, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let b = net.params().bind(&mut tape);
    let enc = net.encode(&mut tape, &b, &s.prepared)?;
    let pred = net.placement_head(&mut tape, &b, &enc)?;
    let truth = tape.constant(Tensor::row_vector(s.truth.to_vec())?)?;
    let cons = match net.constraint_head(&mut tape, &b, &s.prepared, &enc)? {
        Some(p) => Some((p, tape.constant(Tensor::new(s.flags.len(), 1, s.flags.clone())?)?)),
        None => None,
    };
    let vars = total_loss(&mut tape, pred, truth, cons, (1.0, 1.0), w)?;
    let mut g = tape.backward(vars.total)?;
    Ok((vars.report(&tape), net.params().collect_grads(&b, &mut g)))
}

/// A prepared GUI (complete or partial) with its topic index.
pub struct ClassifySample {
    pub prepared: Prepared,
    pub label: usize,
}

/// Complete and partial instances 50/50: every GUI contributes itself and
/// one contiguous reading-order chunk keeping at least half its elements.
pub fn classify_samples(net: &Network, items: &[(String, Gui)], seed: u64, cfg: &ExtractionConfig) -> Result<Vec<ClassifySample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut guis = Vec::with_capacity(items.len() * 2);
    for (id, g) in items {
        let topic = g
            .topic
            .as_deref()
            .ok_or_else(|| LayoutError::Validation(format!("GUI `{id}` has no topic")))?;
        let label = net
            .config()
            .topics
            .iter()
            .position(|t| t == topic)
            .ok_or_else(|| LayoutError::Validation(format!("GUI `{id}` has unknown topic `{topic}`")))?;
        let placed = g.placed_subset();
        let n = placed.elements.len();
        guis.push((placed.clone(), label));
        if n >= 2 {
            let k = rng.random_range(n.div_ceil(2)..n);
            let start = rng.random_range(0..=n - k);
            let order = reading_order(&placed);
            let mut keep = vec![false; n];
            for &i in &order[start..start + k] {
                keep[i] = true;
            }
            let mut partial = placed.clone();
            partial.elements = (0..n).filter(|&i| keep[i]).map(|i| placed.elements[i].clone()).collect();
            guis.push((partial, label));
        }
    }
    guis.par_iter()
        .map(|(g, label)| {
            let cs = extract_all(g, cfg)?;
            Ok(ClassifySample {
                prepared: net.prepare(g, &cs, None)?,
                label: *label,
            })
        })
        .collect()
}

pub fn classify_grads(net: &Network, s: &ClassifySample) -> Result<(LossReport, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let b = net.params().bind(&mut tape);
    let enc = net.encode(&mut tape, &b, &s.prepared)?;
    let logits = net.topic_logits(&mut tape, &b, &enc)?;
    let ce = tape.cross_entropy(logits, &[s.label])?;
    let mut g = tape.backward(ce)?;
    let v = tape.value(ce).item();
    let report = LossReport {
        total: v,
        ..LossReport::default()
    };
    Ok((report, net.params().collect_grads(&b, &mut g)))
}

/// A placed GUI with its normalised element boxes in graph order.
pub struct ReconstructionSample {
    pub prepared: Prepared,
    pub truth: Tensor,
    pub canvas: (f64, f64),
}

pub fn reconstruction_sample(net: &Network, gui: &Gui, cfg: &ExtractionConfig) -> Result<ReconstructionSample> {
    let placed = gui.placed_subset();
    let cs = extract_all(&placed, cfg)?;
    let prepared = net.prepare(&placed, &cs, None)?;
    let (w, h) = (gui.canvas.w as f64, gui.canvas.h as f64);
    let mut data = Vec::new();
    for e in &placed.elements {
        let b = e.bbox_or_err()?;
        data.extend([b.x as f64 / w, b.y as f64 / h, b.w as f64 / w, b.h as f64 / h]);
    }
    Ok(ReconstructionSample {
        truth: Tensor::new(placed.elements.len(), 4, data)?,
        prepared,
        canvas: (1.0, 1.0),
    })
}

/// Element MSE + boundary over every element of a complete layout.
pub fn reconstruction_grads(net: &Network, s: &ReconstructionSample, w: LossWeights) -> Result<(LossReport, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let b = net.params().bind(&mut tape);
    let enc = net.encode(&mut tape, &b, &s.prepared)?;
    let pred = net.reconstruction_head(&mut tape, &b, &enc, s.truth.rows())?;
    let truth = tape.constant(s.truth.clone())?;
    let vars = total_loss(&mut tape, pred, truth, None, s.canvas, w)?;
    let mut g = tape.backward(vars.total)?;
    Ok((vars.report(&tape), net.params().collect_grads(&b, &mut g)))
}

fn mean_report(rs: &[LossReport]) -> LossReport {
    let n = rs.len().max(1) as f64;
    let mut out = LossReport::default();
    for r in rs {
        out.total += r.total / n;
        out.element_mse += r.element_mse / n;
        out.boundary += r.boundary / n;
        out.constraint_bce += r.constraint_bce / n;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub epochs: usize,
    pub samples: usize,
    /// Mean loss over the final epoch.
    pub final_loss: LossReport,
}

/// Mini-batch Adam over `samples`, minimising the batch-mean loss.
/// Writes one CSV row per step to `log` when given.
pub fn fit<S, F>(
    net: &mut Network,
    samples: &[S],
    cfg: &TrainConfig,
    grads: F,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainSummary>
where
    S: Sync,
    F: Fn(&Network, &S) -> Result<(LossReport, Vec<Tensor>)> + Sync,
{
    cfg.validate()?;
    if samples.is_empty() {
        return Err(LayoutError::Empty("no training samples".into()));
    }
    if let Some(l) = log.as_deref_mut() {
        writeln!(l, "{}", LossReport::csv_header())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::for_params(net.params());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    let mut last_epoch = Vec::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        last_epoch.clear();
        for batch in order.chunks(cfg.batch_size) {
            let net_ref = &*net;
            let results = batch
                .par_iter()
                .map(|&i| grads(net_ref, &samples[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut reports = Vec::with_capacity(results.len());
            let mut acc: Option<Vec<Tensor>> = None;
            for (r, g) in results {
                reports.push(r);
                match &mut acc {
                    None => acc = Some(g),
                    Some(a) => a.iter_mut().zip(&g).for_each(|(a, g)| a.add_assign(g)),
                }
            }
            let mut acc = acc.expect("non-empty batch");
            let scale = 1.0 / batch.len() as f64;
            acc.iter_mut().for_each(|t| t.scale_in_place(scale));
            adam_step(net.params_mut(), &acc, &mut state, &cfg.adam)?;
            step += 1;
            let mean = mean_report(&reports);
            if let Some(l) = log.as_deref_mut() {
                writeln!(l, "{}", mean.csv_row(step))?;
            }
            last_epoch.extend(reports);
        }
    }
    Ok(TrainSummary {
        steps: step,
        epochs: cfg.epochs,
        samples: samples.len(),
        final_loss: mean_report(&last_epoch),
    })
}

pub fn train_autocomplete(
    net: &mut Network,
    samples: &[AutocompleteSample],
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<TrainSummary> {
    let w = cfg.weights;
    let s = fit(net, samples, cfg, |n, s| autocomplete_grads(n, s, w), log)?;
    net.task = Task::Autocomplete;
    net.seed = cfg.seed;
    Ok(s)
}

pub fn train_classifier(
    net: &mut Network,
    samples: &[ClassifySample],
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<TrainSummary> {
    let s = fit(net, samples, cfg, classify_grads, log)?;
    net.task = Task::Classify;
    net.seed = cfg.seed;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Element, Vocabulary};
    use crate::network::NetworkConfig;

    fn toy() -> Gui {
        let mut g = Gui::new(100, 100);
        for (i, (x, y)) in [(10, 10), (10, 40), (60, 10)].into_iter().enumerate() {
            g.elements.push(Element::placed(format!("e{i}"), "Button", BBox::new(x, y, 30, 20).unwrap()));
        }
        g
    }

    fn net() -> Network {
        let mut cfg = NetworkConfig::default().with_node_dim(16);
        cfg.embed.max_coord = 100;
        cfg.classifier_hidden = [16, 16];
        Network::new(cfg, Vocabulary::default(), 3).unwrap()
    }

    #[test]
    fn overfits_one_layout() {
        let mut n = net();
        let s = reconstruction_sample(&n, &toy(), &ExtractionConfig::default()).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 1,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let w = cfg.weights;
        fit(&mut n, std::slice::from_ref(&s), &cfg, |n, s| reconstruction_grads(n, s, w), None).unwrap();
        let (r, _) = reconstruction_grads(&n, &s, w).unwrap();
        assert!(r.element_mse / 1.0 < 1e-3, "{r:?}");
    }

    #[test]
    fn identical_seeds_identical_params() {
        let pairs = crate::eval::make_pairs("g", &{
            let mut g = toy();
            g.elements.push(Element::placed("e3", "Text", BBox::new(60, 40, 30, 20).unwrap()));
            g
        }, 1, 3, ChunkMode::Contiguous)
        .unwrap();
        let run = || {
            let mut n = net();
            let s = autocomplete_samples(&n, &pairs, &ExtractionConfig::default()).unwrap();
            let cfg = TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::default() };
            let mut log = Vec::new();
            train_autocomplete(&mut n, &s, &cfg, Some(&mut log)).unwrap();
            (n.to_checkpoint().to_bytes(), log)
        };
        let (a, log) = run();
        assert_eq!(a, run().0);
        assert!(String::from_utf8(log).unwrap().starts_with("step,total,mse,boundary,bce\n1,"));
    }
}
