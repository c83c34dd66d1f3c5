use super::{nt_xent_with_grad, TrainConfig, TrainerError};
use crate::augment::Replica;
use crate::autodiff::{adam_step, AdamState, Graph, Mode, Tensor, Var};
use crate::encoder::{EncoderError, Model};
use crate::par::{self, Execution};
use crate::rng::derive_indexed;

struct Pass {
    graph: Graph<f32>,
    params: Vec<Var>,
    output: Var,
}

/// One optimization step on a batch of positive pairs.
///
/// The 2B forward passes (originals then replicas) run independently; the
/// loss gradient with respect to the stacked embeddings is then pushed back
/// through each pass and the parameter gradients are summed in item order,
/// so the result does not depend on the execution mode. Returns the loss.
pub fn train_step(
    model: &mut Model<f32>,
    batch: &[Replica],
    adam: &mut AdamState<f32>,
    lr: f64,
    cfg: &TrainConfig,
    step_seed: u64,
    exec: Execution,
) -> Result<f64, TrainerError> {
    let b = batch.len();
    if b < 2 {
        return Err(TrainerError::InvalidConfig(format!("batch of {b} pairs, need at least 2")));
    }
    let inputs: Vec<_> = batch.iter().map(|r| &r.original).chain(batch.iter().map(|r| &r.replica)).collect();
    let frozen: &Model<f32> = model;
    let passes = par::map_range(exec, 2 * b, |i| -> Result<Pass, EncoderError> {
        let mut graph = Graph::new(Mode::Train, derive_indexed(step_seed, "dropout", i as u64))
            .with_check_finite(false)
            .with_execution(Execution::Sequential);
        let params = frozen.params().bind(&mut graph, true);
        let x = frozen.input_node(&mut graph, inputs[i])?;
        let output = frozen.forward(&mut graph, &params, x)?;
        Ok(Pass { graph, params, output })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let d = frozen.config().embedding_dim;
    let mut stacked = Vec::with_capacity(2 * b * d);
    for p in &passes {
        stacked.extend_from_slice(p.graph.value(p.output).data());
    }
    let z = Tensor::new(vec![2 * b, d], stacked)?;
    let diagnose = |passes: &[Pass]| {
        let max_abs_activation = passes.iter().map(|p| p.graph.max_abs_value().0).fold(0.0, f64::max);
        let items = passes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.graph.max_abs_value().1)
            .map(|(i, _)| if i < b { format!("original {i}") } else { format!("replica {}", i - b) })
            .collect();
        TrainerError::NonFiniteLoss {
            step: adam.step + 1,
            items,
            max_abs_activation,
        }
    };
    if !z.is_finite() {
        return Err(diagnose(&passes));
    }
    let (loss, dz) = nt_xent_with_grad(&z, cfg.temperature)?;
    if !loss.is_finite() {
        return Err(diagnose(&passes));
    }

    let dz_rows: Vec<Tensor<f32>> = (0..2 * b)
        .map(|i| Tensor::new(vec![1, d], dz.row(i).to_vec()))
        .collect::<Result<_, _>>()?;
    let mut indexed: Vec<(Pass, Tensor<f32>)> = passes.into_iter().zip(dz_rows).collect();
    let grads = par::map_mut(exec, &mut indexed, |(p, upstream)| -> Result<Vec<Tensor<f32>>, TrainerError> {
        let c = p.graph.constant(upstream.clone());
        let weighted = p.graph.mul(p.output, c)?;
        let root = p.graph.sum(weighted)?;
        let mut g = p.graph.backward(root)?;
        Ok(p
            .params
            .iter()
            .map(|&v| g.take(v).unwrap_or_else(|| Tensor::zeros(p.graph.shape(v))))
            .collect())
    });
    drop(indexed);
    let mut total: Option<Vec<Tensor<f32>>> = None;
    for item in grads {
        let item = item?;
        match &mut total {
            None => total = Some(item),
            Some(acc) => acc.iter_mut().zip(&item).for_each(|(a, g)| a.add_assign(g)),
        }
    }
    let total = total.expect("batch is non-empty");
    adam_step(model.params_mut(), &total, adam, lr, &cfg.adam())?;
    Ok(loss)
}
