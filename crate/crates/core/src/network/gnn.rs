//! Mean-aggregation message passing over the bipartite graph and the
//! per-kind weighted readout.

use crate::error::{LayoutError, Result};
use crate::model::{ConstraintFamily, LayoutGraph};
use crate::tensor::{Tape, Tensor, Var};

/// Row-normalised aggregation matrices for one graph.
///
/// Element rows are the graph's element nodes followed by `extra` isolated rows
/// (the unplaced target). Constraint rows are grouped per family in graph order.
#[derive(Debug, Clone)]
pub struct Topology {
    pub element_rows: usize,
    /// Graph constraint indices of each family's rows.
    pub family_rows: [Vec<usize>; 4],
    /// `element_rows x N_k`: mean over an element's family-k neighbours.
    pub to_element: [Option<Tensor>; 4],
    /// `N_k x element_rows`: mean over a constraint's member elements.
    pub to_constraint: [Option<Tensor>; 4],
}

impl Topology {
    pub fn new(graph: &LayoutGraph, extra: usize) -> Self {
        let m = graph.element_count() + extra;
        let mut family_rows: [Vec<usize>; 4] = Default::default();
        for (j, c) in graph.constraints.iter().enumerate() {
            family_rows[c.family().index()].push(j);
        }
        let mut to_element: [Option<Tensor>; 4] = Default::default();
        let mut to_constraint: [Option<Tensor>; 4] = Default::default();
        for k in 0..4 {
            let rows = &family_rows[k];
            if rows.is_empty() || m == 0 {
                continue;
            }
            let n = rows.len();
            let mut ce = Tensor::zeros(m, n);
            let mut ec = Tensor::zeros(n, m);
            for (r, &j) in rows.iter().enumerate() {
                let members = graph.constraint_neighbors(j);
                for &i in members {
                    ec.set(r, i, 1.0 / members.len() as f64);
                }
            }
            for i in 0..graph.element_count() {
                let neigh: Vec<usize> = rows
                    .iter()
                    .enumerate()
                    .filter(|(_, &j)| graph.adjacent(i, j))
                    .map(|(r, _)| r)
                    .collect();
                for &r in &neigh {
                    ce.set(i, r, 1.0 / neigh.len() as f64);
                }
            }
            to_element[k] = Some(ce);
            to_constraint[k] = Some(ec);
        }
        Topology {
            element_rows: m,
            family_rows,
            to_element,
            to_constraint,
        }
    }
}

/// Weights of one message-passing layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub element_self: Var,
    /// Constraint-to-element message weights, one per family.
    pub element_neigh: [Var; 4],
    pub constraint_self: [Var; 4],
    /// Element-to-constraint message weights, one per family.
    pub constraint_neigh: [Var; 4],
}

/// Node embeddings per node kind.
#[derive(Debug, Clone, Copy)]
pub struct NodeVars {
    pub elements: Var,
    pub constraints: [Option<Var>; 4],
}

/// `L` layers of `h' = relu(h·W_self + Σ_k mean_k(neighbours)·W_neigh_k)`.
pub fn gnn_forward(tape: &mut Tape, topo: &Topology, h0: NodeVars, layers: &[LayerVars]) -> Result<NodeVars> {
    if tape.value(h0.elements).rows() != topo.element_rows {
        return Err(LayoutError::Shape(format!(
            "{} element rows for a {}-row topology",
            tape.value(h0.elements).rows(),
            topo.element_rows
        )));
    }
    let mut h = h0;
    for layer in layers {
        let mut e_next = tape.matmul(h.elements, layer.element_self)?;
        let mut c_next: [Option<Var>; 4] = [None; 4];
        for k in 0..4 {
            let (Some(hk), Some(ce), Some(ec)) = (h.constraints[k], &topo.to_element[k], &topo.to_constraint[k]) else {
                continue;
            };
            let ce = tape.constant(ce.clone())?;
            let msg = tape.matmul(ce, hk)?;
            let msg = tape.matmul(msg, layer.element_neigh[k])?;
            e_next = tape.add(e_next, msg)?;

            let ec = tape.constant(ec.clone())?;
            let own = tape.matmul(hk, layer.constraint_self[k])?;
            let msg = tape.matmul(ec, h.elements)?;
            let msg = tape.matmul(msg, layer.constraint_neigh[k])?;
            let sum = tape.add(own, msg)?;
            c_next[k] = Some(tape.relu(sum)?);
        }
        h = NodeVars {
            elements: tape.relu(e_next)?,
            constraints: c_next,
        };
    }
    Ok(h)
}

/// `h_G = avg(H_ele)·W_ele + Σ_k avg(H_k)·W_k`; absent kinds contribute nothing.
/// `readout` is ordered element, alignment, same-size, element group, multimodal group.
pub fn graph_embedding(tape: &mut Tape, elements: Var, constraints: &[Option<Var>; 4], readout: &[Var; 5]) -> Result<Var> {
    let avg = tape.mean_rows(elements)?;
    let mut out = tape.matmul(avg, readout[0])?;
    for k in ConstraintFamily::ALL {
        if let Some(hk) = constraints[k.index()] {
            let avg = tape.mean_rows(hk)?;
            let term = tape.matmul(avg, readout[k.index() + 1])?;
            out = tape.add(out, term)?;
        }
    }
    Ok(out)
}
