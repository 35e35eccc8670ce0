//! Closed-form backprop through the marginal prediction.
//!
//! With `p = sum_k pi_k q_k`, `pi = softmax(s)`, `s_k = x . w_k`:
//!
//! ```text
//! dp/dq_k = pi_k
//! dp/ds_k = pi_k (q_k - p)
//! ds_k/dx = w_k,  ds_k/dw_k = x
//! ```
//!
//! Every parameter gradient is a sum of rank-one terms, so each example
//! contributes factor pairs that are folded into the batch total in input
//! order. The total does not depend on how the per-example work was scheduled.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::exec::{self, Execution};
use crate::linalg::add_outer;
use crate::model::{forward_with, ExampleFeatures, HeadParams, HeadTrace, ModelError, ModelParams};

use super::{bce_loss, LOSS_EPSILON};

/// Gradient tensors share the parameter layout.
pub type Gradients = ModelParams;

pub fn zeros_like(p: &ModelParams) -> Gradients {
    let pr = &p.projection;
    let h = &p.head;
    ModelParams {
        projection: crate::embedding::ProjectionParams {
            w_comment: Array2::zeros(pr.w_comment.raw_dim()),
            w_window: Array2::zeros(pr.w_window.raw_dim()),
        },
        head: HeadParams {
            w_hidden: Array2::zeros(h.w_hidden.raw_dim()),
            b_hidden: Array1::zeros(h.b_hidden.raw_dim()),
            w_out: Array2::zeros(h.w_out.raw_dim()),
            b_out: Array1::zeros(h.b_out.raw_dim()),
        },
    }
}

/// `dL/dp` for the clamped binary cross-entropy; zero where the clamp is active.
pub fn dloss_dp(p: f64, label: u8) -> f64 {
    if !(LOSS_EPSILON..=1.0 - LOSS_EPSILON).contains(&p) {
        return 0.0;
    }
    if label == 1 {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

struct HeadTerm {
    input: Arc<Array1<f64>>,
    g_pre: Array1<f64>,
    hidden: Array1<f64>,
    g_logits: [f64; 2],
}

/// Rank-one gradient factors for one example.
pub struct ExampleGrad {
    pub loss: f64,
    target: Arc<Array1<f64>>,
    g_x: Option<Array1<f64>>,
    windows: Vec<(Array1<f64>, Array1<f64>)>,
    heads: Vec<HeadTerm>,
}

fn head_backward(head: &HeadParams, trace: &HeadTrace, input: &Arc<Array1<f64>>, dq1: f64) -> HeadTerm {
    let [q0, q1] = trace.probs;
    let g = dq1 * q0 * q1;
    let g_logits = [-g, g];
    let mut g_pre = Array1::zeros(head.hidden_dim());
    for (i, gp) in g_pre.iter_mut().enumerate() {
        if trace.pre[i] > 0.0 {
            *gp = head.w_out[[0, i]] * g_logits[0] + head.w_out[[1, i]] * g_logits[1];
        }
    }
    HeadTerm {
        input: input.clone(),
        g_pre,
        hidden: trace.hidden.clone(),
        g_logits,
    }
}

pub fn example_gradient(params: &ModelParams, f: &ExampleFeatures, label: u8) -> Result<ExampleGrad, ModelError> {
    let trace = forward_with(params, f)?;
    let p = trace.p_positive;
    let loss = bce_loss(p, label);
    let dp = dloss_dp(p, label);

    if let (Some(fb), Some(head)) = (&f.fallback, &trace.fallback_head) {
        return Ok(ExampleGrad {
            loss,
            target: f.target.clone(),
            g_x: None,
            windows: Vec::new(),
            heads: vec![head_backward(&params.head, head, fb, dp)],
        });
    }

    let pi = &trace.retrieval.as_ref().expect("context path has a distribution").probs;
    let mut g_x = Array1::zeros(trace.x.len());
    let mut windows = Vec::new();
    let mut heads = Vec::new();
    for (k, wf) in f.windows.iter().enumerate() {
        let (Some(wf), Some(head), Some(wk)) = (wf, &trace.heads[k], &trace.w[k]) else {
            continue;
        };
        let q1 = head.probs[1];
        let ds = dp * pi[k] * (q1 - p);
        g_x.scaled_add(ds, wk);
        windows.push((&trace.x * ds, wf.mean.clone()));
        heads.push(head_backward(&params.head, head, &wf.joined, dp * pi[k]));
    }
    Ok(ExampleGrad {
        loss,
        target: f.target.clone(),
        g_x: Some(g_x),
        windows,
        heads,
    })
}

impl ExampleGrad {
    pub fn accumulate_into(&self, g: &mut Gradients, alpha: f64) {
        if let Some(gx) = &self.g_x {
            add_outer(&mut g.projection.w_comment, alpha, gx, &self.target);
        }
        for (gw, mean) in &self.windows {
            add_outer(&mut g.projection.w_window, alpha, gw, mean);
        }
        for h in &self.heads {
            add_outer(&mut g.head.w_hidden, alpha, &h.g_pre, &h.input);
            g.head.b_hidden.scaled_add(alpha, &h.g_pre);
            for k in 0..2 {
                let gk = alpha * h.g_logits[k];
                if gk != 0.0 {
                    g.head.w_out.row_mut(k).scaled_add(gk, &h.hidden);
                }
                g.head.b_out[k] += gk;
            }
        }
    }
}

/// Gradient of the mean batch loss, and that mean loss.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[(&ExampleFeatures, u8)],
    exec: Execution,
) -> Result<(Gradients, f64), ModelError> {
    let mut g = zeros_like(params);
    let loss = batch_gradient_into(params, batch, exec, &mut g)?;
    Ok((g, loss))
}

/// As [`batch_gradient`], overwriting a caller-owned buffer.
pub fn batch_gradient_into(
    params: &ModelParams,
    batch: &[(&ExampleFeatures, u8)],
    exec: Execution,
    g: &mut Gradients,
) -> Result<f64, ModelError> {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let per_example = exec::try_map(exec, batch, |(f, y)| example_gradient(params, f, *y))?;
    g.slices_mut().into_iter().for_each(|s| s.fill(0.0));
    let alpha = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for eg in &per_example {
        eg.accumulate_into(g, alpha);
        loss += eg.loss;
    }
    Ok(loss * alpha)
}

/// Mean batch loss without gradients.
pub fn batch_loss(params: &ModelParams, batch: &[(&ExampleFeatures, u8)]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (f, y) in batch {
        total += bce_loss(forward_with(params, f)?.p_positive, *y);
    }
    Ok(total / batch.len() as f64)
}
