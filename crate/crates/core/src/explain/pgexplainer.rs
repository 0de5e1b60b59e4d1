use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::subgraph::ComputationalSubgraph;
use super::{mask_regularizer, ExplainContext, ExplainerConfig, ExplanationMask};
use crate::autodiff::{sigmoid, Adam, Matrix, Tape, Var};
use crate::error::Result;
use crate::seed;

/// Width of the edge scorer's hidden layer.
pub const PG_HIDDEN: usize = 64;
/// Concrete-relaxation temperature, annealed from the first value to the
/// second over training.
pub const PG_TEMPERATURE: (f64, f64) = (5.0, 2.0);
/// Uniform noise is drawn from `[bias, 1 - bias]` to keep its logit finite.
const PG_NOISE_BIAS: f64 = 0.01;

/// Shared edge scorer: a two-layer perceptron from `[z_i | z_j | z_v]`, the
/// model's final-layer outputs at the edge's endpoints and the explained
/// node, to an edge logit.
#[derive(Debug, Clone, PartialEq)]
pub struct PgExplainer {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

fn edge_inputs(sub: &ComputationalSubgraph, ctx: &ExplainContext, z: &Matrix) -> Matrix {
    let m = z.ncols();
    let mut x = Array2::zeros((sub.num_masked(), 3 * m));
    let zv = z.row(sub.center);
    for (r, &id) in sub.masked.iter().enumerate() {
        let (s, d) = ctx.graph.directed_edge(id);
        let mut row = x.row_mut(r);
        row.slice_mut(ndarray::s![..m]).assign(&z.row(s));
        row.slice_mut(ndarray::s![m..2 * m]).assign(&z.row(d));
        row.slice_mut(ndarray::s![2 * m..]).assign(&zv);
    }
    x
}

/// Node representations fed to the scorer: the model's final-layer outputs.
pub fn scorer_embeddings(ctx: &ExplainContext) -> Result<Matrix> {
    let (_, z) = crate::nn::embeddings(&ctx.params, &ctx.graph)?;
    Ok(z)
}

impl PgExplainer {
    fn init(input: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        let mut glorot = |r: usize, c: usize| {
            let b = (6.0 / (r + c) as f64).sqrt();
            Array2::from_shape_simple_fn((r, c), || rng.random_range(-b..b))
        };
        PgExplainer {
            w1: glorot(input, PG_HIDDEN),
            b1: Array2::zeros((1, PG_HIDDEN)),
            w2: glorot(PG_HIDDEN, 1),
            b2: Array2::zeros((1, 1)),
        }
    }

    fn record(&self, tape: &mut Tape, vars: &[Var; 4], x: Matrix) -> Var {
        let x = tape.constant(x);
        let h = tape.matmul(x, vars[0]);
        let h = tape.add_row(h, vars[1]);
        let h = tape.relu(h);
        let o = tape.matmul(h, vars[2]);
        tape.add_row(o, vars[3])
    }

    fn tensors(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    /// Trains the scorer on every training node, one Adam step per node,
    /// visiting nodes in a seeded order each epoch.
    pub fn train(ctx: &ExplainContext, cfg: &ExplainerConfig) -> Result<Self> {
        let z = scorer_embeddings(ctx)?;
        let mut rng = seed::rng(seed::derive(cfg.seed, "pgexplainer-init", 0));
        let mut model = PgExplainer::init(3 * z.ncols(), &mut rng);
        let shapes: Vec<_> = model.tensors().iter().map(|t| t.dim()).collect();
        let mut adam = Adam::new(cfg.lr, &shapes);
        let nodes = ctx.graph.train_nodes();
        let subgraphs: Vec<(usize, ComputationalSubgraph)> = nodes
            .iter()
            .map(|&v| (v, ctx.subgraph(v)))
            .filter(|(_, s)| !s.is_isolated())
            .collect();
        let mut order: Vec<usize> = (0..subgraphs.len()).collect();
        let (t0, t1) = PG_TEMPERATURE;
        for epoch in 0..cfg.epochs {
            let temperature = t0 * (t1 / t0).powf(epoch as f64 / cfg.epochs as f64);
            let mut epoch_rng = seed::rng(seed::derive(cfg.seed, "pgexplainer-epoch", epoch as u64));
            order.shuffle(&mut epoch_rng);
            for &i in &order {
                let (v, sub) = &subgraphs[i];
                let e = sub.num_masked();
                let mut tape = Tape::new();
                let vars = model.tensors().map(|t| tape.param(t.clone()));
                let raw = model.record(&mut tape, &vars, edge_inputs(sub, ctx, &z));
                let noise = Array2::from_shape_simple_fn((e, 1), || {
                    let u = PG_NOISE_BIAS + (1.0 - 2.0 * PG_NOISE_BIAS) * epoch_rng.random::<f64>();
                    u.ln() - (1.0 - u).ln()
                });
                let noisy = tape.shift(raw, &noise);
                let tempered = tape.scale(noisy, 1.0 / temperature);
                let m = tape.sigmoid(tempered);
                let out = sub.forward(&mut tape, &ctx.params, sub.local_projections(&ctx.projections), m);
                let target = ctx.predictions[*v];
                let ce = tape.softmax_cross_entropy(out, vec![0].into(), vec![target].into());
                let reg = mask_regularizer(&mut tape, m, cfg);
                let loss = tape.add(ce, reg);
                tape.backward(loss);
                let grads: Vec<Matrix> = vars
                    .iter()
                    .map(|&v| tape.grad(v).expect("scorer gradient").clone())
                    .collect();
                let refs: Vec<&Matrix> = grads.iter().collect();
                adam.step(
                    &mut [&mut model.w1, &mut model.b1, &mut model.w2, &mut model.b2],
                    &refs,
                );
            }
        }
        Ok(model)
    }

    /// Deterministic edge scores `sigmoid(logit)` for `v`'s subgraph.
    pub fn explain(
        &self,
        ctx: &ExplainContext,
        z: &Matrix,
        v: usize,
        top_k: usize,
    ) -> ExplanationMask {
        let sub = ctx.subgraph(v);
        if sub.is_isolated() {
            return ExplanationMask::isolated(v);
        }
        let h = edge_inputs(&sub, ctx, z).dot(&self.w1) + &self.b1;
        let h = h.mapv(|x| x.max(0.0));
        let o = h.dot(&self.w2) + &self.b2;
        let scores: Vec<f64> = o.index_axis(Axis(1), 0).iter().map(|&x| sigmoid(x)).collect();
        ExplanationMask::from_scores(v, sub.masked, scores, top_k)
    }
}
