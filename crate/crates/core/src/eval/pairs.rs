//! Partial-GUI pairs and the k-fold plan.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::model::{Element, Gui};

/// A placed subset of a GUI and one held-out element (geometry kept as truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub gui_id: String,
    pub partial: Gui,
    pub target: Element,
}

impl PairSample {
    /// `partial` with the target added unplaced.
    pub fn query(&self) -> Gui {
        let mut g = self.partial.clone();
        g.elements.push(self.target.as_target());
        g
    }

    pub fn placed_count(&self) -> usize {
        self.partial.placed().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkMode {
    /// A contiguous run in reading order.
    #[default]
    Contiguous,
    /// A uniformly random subset.
    Uniform,
}

pub const MIN_PAIR_ELEMENTS: usize = 4;

/// Indices of `gui`'s elements in reading order (top to bottom, left to right).
pub fn reading_order(gui: &Gui) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..gui.elements.len()).collect();
    idx.sort_by_key(|&i| {
        let e = &gui.elements[i];
        let (y, x) = e.bbox.map_or((i64::MAX, i64::MAX), |b| (b.y, b.x));
        (y, x, e.id.clone())
    });
    idx
}

/// `chunks` draws; each keeps `k ~ U[1, n-1]` elements and pairs that
/// partial with every removed element.
pub fn make_pairs(gui_id: &str, gui: &Gui, seed: u64, chunks: usize, mode: ChunkMode) -> Result<Vec<PairSample>> {
    let n = gui.elements.len();
    if n < MIN_PAIR_ELEMENTS {
        return Err(LayoutError::Validation(format!(
            "GUI `{gui_id}` has {n} elements; pairs need at least {MIN_PAIR_ELEMENTS}"
        )));
    }
    if let Some(e) = gui.unplaced().next() {
        return Err(LayoutError::Unplaced(e.id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = reading_order(gui);
    let mut out = Vec::new();
    for _ in 0..chunks {
        let k = rng.random_range(1..n);
        let mut keep = vec![false; n];
        match mode {
            ChunkMode::Contiguous => {
                let start = rng.random_range(0..=n - k);
                for &i in &order[start..start + k] {
                    keep[i] = true;
                }
            }
            ChunkMode::Uniform => {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                for &i in &idx[..k] {
                    keep[i] = true;
                }
            }
        }
        let partial = Gui {
            canvas: gui.canvas,
            topic: gui.topic.clone(),
            elements: (0..n).filter(|&i| keep[i]).map(|i| gui.elements[i].clone()).collect(),
        };
        for &i in order.iter().filter(|&&i| !keep[i]) {
            out.push(PairSample {
                gui_id: gui_id.to_string(),
                partial: partial.clone(),
                target: gui.elements[i].clone(),
            });
        }
    }
    Ok(out)
}

/// Seeded fold assignment: shuffle, then deal round-robin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    /// Ids of each fold, sorted.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.k];
        for (id, &f) in &self.assignments {
            out[f].push(id.clone());
        }
        out
    }
}

pub fn kfold(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > ids.len() {
        return Err(LayoutError::Validation(format!(
            "cannot split {} items into {k} folds",
            ids.len()
        )));
    }
    let mut order: Vec<&String> = ids.iter().collect();
    order.sort();
    order.dedup();
    if order.len() != ids.len() {
        return Err(LayoutError::Validation("duplicate ids in dataset".into()));
    }
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(FoldPlan {
        k,
        assignments: order.into_iter().enumerate().map(|(i, id)| (id.clone(), i % k)).collect(),
    })
}

/// Seeded split of `ids` into (train, held-out) with `held_out` items held out.
pub fn split(ids: &[String], held_out: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut order = ids.to_vec();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(order.len() - held_out.min(order.len()));
    (order, test)
}
