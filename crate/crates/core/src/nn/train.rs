use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    decay_term, forward_on_tape, Architecture, EdgeWeights, Inputs, Mode, ModelParams, Structure,
};
use crate::autodiff::{Adam, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults: 200 epochs, Adam at 0.01, decay 5e-4, 16 hidden units,
    /// dropout 0.6 for GAT and 0.5 otherwise.
    pub fn for_arch(arch: Architecture) -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.01,
            weight_decay: 5e-4,
            dropout: arch.default_dropout(),
            hidden: 16,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.hidden == 0 || !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Parameter(
                "hidden, lr must be positive and weight decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (lowest validation loss).
    pub best_epoch: usize,
}

/// Full-batch Adam training on the train mask; returns the parameters with
/// the lowest validation loss seen.
pub fn train(
    graph: &Graph,
    arch: Architecture,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainingLog)> {
    config.validate()?;
    let train_rows: Arc<[usize]> = graph.train_nodes().into();
    let val_rows: Arc<[usize]> = graph.val_nodes().into();
    if train_rows.is_empty() {
        return Err(Error::EmptyMask);
    }
    let labels = graph.labels();
    let train_targets: Arc<[usize]> = train_rows.iter().map(|&r| labels[r]).collect();
    let val_targets: Arc<[usize]> = val_rows.iter().map(|&r| labels[r]).collect();

    let mut init_rng = seed::rng(seed::derive(config.seed, "init", 0));
    let mut dropout_rng = seed::rng(seed::derive(config.seed, "dropout", 0));
    let mut params = ModelParams::init(
        arch,
        graph.num_features(),
        config.hidden,
        graph.num_classes(),
        &mut init_rng,
    );
    let structure = Structure::of_graph(graph);
    let features = graph.sparse_features();
    let unit = EdgeWeights::ones(graph).as_column();
    let mut adam = Adam::new(config.lr, &params.shapes());

    let mut log = TrainingLog::default();
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.tensors.iter().map(|t| tape.param(t.clone())).collect();
        let w = tape.constant(unit.clone());
        let out = forward_on_tape(
            &mut tape,
            &params,
            &vars,
            Inputs::Features(features.clone()),
            &structure,
            w,
            &mut Mode::Train {
                rng: &mut dropout_rng,
                dropout: config.dropout,
            },
        );
        let ce = tape.softmax_cross_entropy(out.logits, train_rows.clone(), train_targets.clone());
        let loss = match decay_term(&mut tape, &vars, config.weight_decay) {
            Some(d) => tape.add(ce, d),
            None => ce,
        };
        let train_loss = tape.scalar(loss);
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: train_loss,
            });
        }
        tape.backward(loss);
        let grads: Vec<_> = vars
            .iter()
            .map(|&v| tape.grad(v).expect("parameter gradient").clone())
            .collect();
        let mut refs: Vec<_> = params.tensors.iter_mut().collect();
        adam.step(&mut refs, &grads.iter().collect::<Vec<_>>());

        let (val_loss, val_accuracy) = if val_rows.is_empty() {
            (train_loss, f64::NAN)
        } else {
            evaluate_rows(&params, graph, &structure, &val_rows, &val_targets)
        };
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: val_loss,
            });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, params.clone()));
            log.best_epoch = epoch;
        }
    }
    let (_, best_params) = best.expect("at least one epoch");
    Ok((best_params, log))
}

fn evaluate_rows(
    params: &ModelParams,
    graph: &Graph,
    structure: &Structure,
    rows: &Arc<[usize]>,
    targets: &Arc<[usize]>,
) -> (f64, f64) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.tensors.iter().map(|t| tape.constant(t.clone())).collect();
    let w = tape.constant(EdgeWeights::ones(graph).as_column());
    let out = forward_on_tape(
        &mut tape,
        params,
        &vars,
        Inputs::Features(graph.sparse_features()),
        structure,
        w,
        &mut Mode::Eval,
    );
    let ce = tape.softmax_cross_entropy(out.logits, rows.clone(), targets.clone());
    let pred = super::argmax_rows(tape.value(out.logits));
    let correct = rows
        .iter()
        .zip(targets.iter())
        .filter(|(&r, &t)| pred[r] == t)
        .count();
    (tape.scalar(ce), correct as f64 / rows.len() as f64)
}
