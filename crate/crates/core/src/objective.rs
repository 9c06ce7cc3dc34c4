//! Composite loss: element MSE, canvas boundary hinge and constraint BCE.

use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the constraint term.
    pub lambda: f64,
    /// Weight of the boundary term.
    pub eta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 1.0,
            eta: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite() && self.eta > 0.0 && self.eta.is_finite()) {
            return Err(LayoutError::Validation(format!(
                "loss weights must be positive, got lambda={} eta={}",
                self.lambda, self.eta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub element_mse: f64,
    pub boundary: f64,
    pub constraint_bce: f64,
}

impl LossReport {
    pub fn csv_header() -> &'static str {
        "step,total,mse,boundary,bce"
    }

    pub fn csv_row(&self, step: usize) -> String {
        format!(
            "{step},{},{},{},{}",
            self.total, self.element_mse, self.boundary, self.constraint_bce
        )
    }
}

/// Tape handles of each loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub element_mse: Var,
    pub boundary: Var,
    pub constraint_bce: Option<Var>,
}

impl LossVars {
    pub fn report(&self, tape: &Tape) -> LossReport {
        LossReport {
            total: tape.value(self.total).item(),
            element_mse: tape.value(self.element_mse).item(),
            boundary: tape.value(self.boundary).item(),
            constraint_bce: self.constraint_bce.map_or(0.0, |v| tape.value(v).item()),
        }
    }
}

/// Mean over elements of the squared `(x, y, w, h)` difference, and
/// `eta · Σ` of how far each predicted box protrudes past the canvas.
/// `pred` and `truth` are `M x 4`; `canvas` is `(w, h)` in the same units.
pub fn element_loss(tape: &mut Tape, pred: Var, truth: Var, canvas: (f64, f64), eta: f64) -> Result<(Var, Var)> {
    let (p, t) = (tape.value(pred), tape.value(truth));
    if p.shape() != t.shape() || p.cols() != 4 {
        return Err(LayoutError::Shape(format!(
            "element loss over {}x{} predictions and {}x{} targets",
            p.rows(),
            p.cols(),
            t.rows(),
            t.cols()
        )));
    }
    let m = p.rows() as f64;
    let diff = tape.sub(pred, truth)?;
    let sq = tape.mul(diff, diff)?;
    let sum = tape.sum(sq)?;
    let mse = tape.scale(sum, 1.0 / m)?;

    // Columns of pred·S are [-x, -y, x + w, y + h].
    #[rustfmt::skip]
    let s = Tensor::new(4, 4, vec![
        -1.0, 0.0, 1.0, 0.0,
        0.0, -1.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ])?;
    let s = tape.constant(s)?;
    let faces = tape.matmul(pred, s)?;
    let limits = tape.constant(Tensor::row_vector(vec![0.0, 0.0, -canvas.0, -canvas.1])?)?;
    let excess = tape.add_row(faces, limits)?;
    let hinge = tape.relu(excess)?;
    let total = tape.sum(hinge)?;
    let boundary = tape.scale(total, eta)?;
    Ok((mse, boundary))
}

/// Mean clamped binary cross-entropy of `N x 1` probabilities against 0/1 flags.
pub fn constraint_loss(tape: &mut Tape, probs: Var, flags: Var) -> Result<Var> {
    if tape.value(probs).shape() != tape.value(flags).shape() {
        return Err(LayoutError::Shape("probability and flag counts differ".into()));
    }
    tape.bce(probs, flags)
}

/// `total = mse + boundary + lambda · bce`; the constraint term is omitted
/// (zero) when there are no constraint slots.
pub fn total_loss(
    tape: &mut Tape,
    pred: Var,
    truth: Var,
    constraints: Option<(Var, Var)>,
    canvas: (f64, f64),
    w: LossWeights,
) -> Result<LossVars> {
    w.validate()?;
    let (mse, boundary) = element_loss(tape, pred, truth, canvas, w.eta)?;
    let mut total = tape.add(mse, boundary)?;
    let mut bce = None;
    if let Some((p, f)) = constraints {
        let b = constraint_loss(tape, p, f)?;
        let weighted = tape.scale(b, w.lambda)?;
        total = tape.add(total, weighted)?;
        bce = Some(b);
    }
    Ok(LossVars {
        total,
        element_mse: mse,
        boundary,
        constraint_bce: bce,
    })
}

/// Evaluates [`total_loss`] on plain values.
pub fn loss_report(
    pred: &[[f64; 4]],
    truth: &[[f64; 4]],
    probs: &[f64],
    flags: &[f64],
    canvas: (f64, f64),
    w: LossWeights,
) -> Result<LossReport> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(LayoutError::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if probs.len() != flags.len() {
        return Err(LayoutError::Shape(format!(
            "{} probabilities for {} flags",
            probs.len(),
            flags.len()
        )));
    }
    let mut tape = Tape::new();
    let rows = |v: &[[f64; 4]]| Tensor::new(v.len(), 4, v.iter().flatten().copied().collect());
    let p = tape.leaf(rows(pred)?)?;
    let t = tape.constant(rows(truth)?)?;
    let cons = if probs.is_empty() {
        None
    } else {
        let pv = tape.leaf(Tensor::new(probs.len(), 1, probs.to_vec())?)?;
        let fv = tape.constant(Tensor::new(flags.len(), 1, flags.to_vec())?)?;
        Some((pv, fv))
    };
    let vars = total_loss(&mut tape, p, t, cons, canvas, w)?;
    Ok(vars.report(&tape))
}
