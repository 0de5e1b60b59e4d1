use ndarray::Array2;

use super::{mask_regularizer, ExplainContext, ExplainerConfig, ExplanationMask};
use crate::autodiff::{sigmoid, Adam, Tape};

/// Optimises one logit per maskable edge of `v`'s computational subgraph so
/// that the sigmoid-weighted graph keeps the model's clean prediction at `v`,
/// then keeps the `top_k` highest-scoring edges.
pub fn explain_node_gnnexplainer(
    ctx: &ExplainContext,
    v: usize,
    cfg: &ExplainerConfig,
) -> ExplanationMask {
    let sub = ctx.subgraph(v);
    if sub.is_isolated() {
        return ExplanationMask::isolated(v);
    }
    let e = sub.num_masked();
    let target = ctx.predictions[v];
    let local_proj = sub.local_projections(&ctx.projections);
    let mut logits = Array2::from_elem((e, 1), cfg.init_logit);
    let mut adam = Adam::new(cfg.lr, &[(e, 1)]);
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let l = tape.param(logits.clone());
        let m = tape.sigmoid(l);
        let out = sub.forward(&mut tape, &ctx.params, local_proj.clone(), m);
        let ce = tape.softmax_cross_entropy(out, vec![0].into(), vec![target].into());
        let reg = mask_regularizer(&mut tape, m, cfg);
        let loss = tape.add(ce, reg);
        tape.backward(loss);
        let g = tape.grad(l).expect("mask gradient").clone();
        adam.step(&mut [&mut logits], &[&g]);
    }
    let scores: Vec<f64> = logits.iter().map(|&x| sigmoid(x)).collect();
    ExplanationMask::from_scores(v, sub.masked, scores, cfg.top_k)
}
