use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterConfig, AdapterState};
use crate::error::{Error, Result};
use crate::grad::{param_grads, ParamGrads};
use crate::linalg::Matrix;
use crate::trainer::task::{Sample, Target, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Squared error summed over outputs.
    Mse,
    /// Softmax cross-entropy over the output logits.
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub adapter: AdapterState,
    /// Elementwise ReLU on the layer output.
    pub relu: bool,
}

/// A stack of adapted linear layers sharing one method.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    loss: LossKind,
}

impl Model {
    pub fn new(layers: Vec<Layer>, loss: LossKind) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::invalid("layers", "model needs at least one layer"));
        };
        let method = first.adapter.method();
        for (i, pair) in layers.windows(2).enumerate() {
            let (d, _) = pair[0].adapter.shape();
            let (_, k) = pair[1].adapter.shape();
            if d != k {
                return Err(Error::invalid(
                    "layers",
                    format!("layer {i} outputs {d} values but layer {} expects {k}", i + 1),
                ));
            }
        }
        if let Some(l) = layers.iter().find(|l| l.adapter.method() != method) {
            return Err(Error::invalid(
                "layers",
                format!("mixed methods {method} and {}", l.adapter.method()),
            ));
        }
        Ok(Self { layers, loss })
    }

    /// One adapted layer over the task's pre-trained weight.
    pub fn for_task(task: &Task, cfg: &AdapterConfig) -> Result<Self> {
        let adapter = AdapterState::init(task.base(), cfg)?;
        Self::new(vec![Layer { adapter, relu: false }], task.loss_kind())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].adapter.shape().1
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].adapter.shape().0
    }

    /// Trainable tensors of every layer, in layer order.
    pub fn trainables_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.adapter.trainables_mut())
            .collect()
    }

    pub fn trainables(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.adapter.trainables()).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let weights = self.effective_weights();
        Ok(self.forward_with(&weights, x)?.pop().expect("at least one layer").1)
    }

    fn effective_weights(&self) -> Vec<Matrix> {
        self.layers.iter().map(|l| l.adapter.effective_weight()).collect()
    }

    /// Per layer: (input, output after activation).
    fn forward_with(&self, weights: &[Matrix], x: &[f64]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut input = x.to_vec();
        for (layer, w) in self.layers.iter().zip(weights) {
            let mut y = w.matvec(&input)?;
            if layer.relu {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            let next = y.clone();
            out.push((input, y));
            input = next;
        }
        Ok(out)
    }
}

/// Loss of one prediction and its gradient with respect to the output.
fn loss_and_output_grad(kind: LossKind, y: &[f64], target: &Target) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (LossKind::Mse, Target::Regression(t)) => {
            if t.len() != y.len() {
                return Err(Error::mismatch("mse target", (y.len(), 1), (t.len(), 1)));
            }
            let diff: Vec<f64> = y.iter().zip(t).map(|(a, b)| a - b).collect();
            let loss = diff.iter().map(|e| e * e).sum();
            Ok((loss, diff.into_iter().map(|e| 2.0 * e).collect()))
        }
        (LossKind::CrossEntropy, Target::Class(c)) => {
            if *c >= y.len() {
                return Err(Error::invalid("target", format!("class {c} out of range for {} logits", y.len())));
            }
            let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = y.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exp.iter().sum();
            let loss = total.ln() - (y[*c] - max);
            let mut grad: Vec<f64> = exp.iter().map(|e| e / total).collect();
            grad[*c] -= 1.0;
            Ok((loss, grad))
        }
        (kind, _) => Err(Error::invalid("target", format!("target type does not match {kind:?} loss"))),
    }
}

/// Mean loss over `batch` and per-layer parameter gradients of that mean.
pub fn loss_and_grads(model: &Model, batch: &[Sample]) -> Result<(f64, Vec<ParamGrads>)> {
    if batch.is_empty() {
        return Err(Error::invalid("batch", "must be non-empty"));
    }
    let n = batch.len() as f64;
    let weights = model.effective_weights();
    let mut weight_grads: Vec<Matrix> = weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
    let mut total = 0.0;

    for sample in batch {
        if sample.x.len() != model.input_dim() {
            return Err(Error::mismatch("sample", (model.input_dim(), 1), (sample.x.len(), 1)));
        }
        let trace = model.forward_with(&weights, &sample.x)?;
        let y = &trace.last().expect("at least one layer").1;
        let (loss, mut g) = loss_and_output_grad(model.loss, y, &sample.target)?;
        total += loss;
        g.iter_mut().for_each(|v| *v /= n);

        for (l, layer) in model.layers.iter().enumerate().rev() {
            let (input, output) = &trace[l];
            if layer.relu {
                // Subgradient 0 at a pre-activation of exactly 0.
                for (gi, &oi) in g.iter_mut().zip(output) {
                    if oi <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            let wg = &mut weight_grads[l];
            for (i, &gi) in g.iter().enumerate() {
                if gi == 0.0 {
                    continue;
                }
                for (j, &xj) in input.iter().enumerate() {
                    wg[(i, j)] += gi * xj;
                }
            }
            if l > 0 {
                g = weights[l].t_matvec(&g)?;
            }
        }
    }

    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NumericFailure {
            step: None,
            what: format!("loss is {loss}"),
        });
    }
    let grads = model
        .layers
        .iter()
        .zip(&weight_grads)
        .map(|(layer, g)| param_grads(&layer.adapter, g))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, grads))
}

/// Mean loss for regression, accuracy for classification.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("eval set", "must be non-empty"));
    }
    let weights = model.effective_weights();
    let mut total = 0.0;
    for s in samples {
        let trace = model.forward_with(&weights, &s.x)?;
        let y = &trace.last().expect("at least one layer").1;
        total += match (&s.target, model.loss) {
            (Target::Class(c), LossKind::CrossEntropy) => {
                // Ties go to the lowest index.
                let mut best = 0;
                for (i, v) in y.iter().enumerate() {
                    if *v > y[best] {
                        best = i;
                    }
                }
                if best == *c { 1.0 } else { 0.0 }
            }
            (target, kind) => loss_and_output_grad(kind, y, target)?.0,
        };
    }
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::Method;
    use crate::trainer::task::{make_task, TaskKind};

    fn two_layer(method: Method) -> Model {
        let w1 = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 1.3 + 0.2).sin());
        let w2 = Matrix::from_fn(2, 4, |i, j| ((i * 4 + j) as f64 * 0.7 - 0.4).cos());
        let mut l1 = AdapterState::init(&w1, &AdapterConfig::new(method, 2).with_seed(1)).unwrap();
        let mut l2 = AdapterState::init(&w2, &AdapterConfig::new(method, 1).with_seed(2)).unwrap();
        l1.jitter_trainables(10, 0.2);
        l2.jitter_trainables(11, 0.2);
        Model::new(
            vec![
                Layer { adapter: l1, relu: true },
                Layer { adapter: l2, relu: false },
            ],
            LossKind::Mse,
        )
        .unwrap()
    }

    fn regression(x: &[f64], t: &[f64]) -> Sample {
        Sample {
            x: x.to_vec(),
            target: Target::Regression(t.to_vec()),
        }
    }

    #[test]
    fn duplicated_batch_matches_single_sample() {
        let model = two_layer(Method::Dude);
        let s = regression(&[0.3, -0.8, 1.1], &[0.5, -0.5]);
        let (l1, g1) = loss_and_grads(&model, std::slice::from_ref(&s)).unwrap();
        let (l3, g3) = loss_and_grads(&model, &[s.clone(), s.clone(), s]).unwrap();
        assert!((l1 - l3).abs() <= 1e-14);
        for (a, b) in g1.iter().zip(&g3) {
            for (x, y) in a.as_slices().iter().zip(b.as_slices()) {
                for (p, q) in x.iter().zip(y) {
                    assert!((p - q).abs() <= 1e-14 * (1.0 + p.abs()));
                }
            }
        }
    }

    #[test]
    fn two_layer_relu_gradients_match_finite_differences() {
        for method in Method::ALL {
            let model = two_layer(method);
            let batch = vec![
                regression(&[0.3, -0.8, 1.1], &[0.5, -0.5]),
                regression(&[-1.2, 0.4, 0.9], &[-0.2, 1.0]),
            ];
            // Fixtures must avoid pre-activations at exactly 0.
            let (_, grads) = loss_and_grads(&model, &batch).unwrap();
            let analytic: Vec<f64> = grads.iter().flat_map(|g| g.as_slices().concat()).collect();

            let mut probe = model.clone();
            let sizes: Vec<usize> = probe.trainables().iter().map(|t| t.len()).collect();
            let mut flat_idx = 0;
            for (t, &len) in sizes.iter().enumerate() {
                for i in 0..len {
                    let theta = probe.trainables()[t][i];
                    let h = 1e-6 * (1.0 + theta.abs());
                    probe.trainables_mut()[t][i] = theta + h;
                    let up = loss_and_grads(&probe, &batch).unwrap().0;
                    probe.trainables_mut()[t][i] = theta - h;
                    let down = loss_and_grads(&probe, &batch).unwrap().0;
                    probe.trainables_mut()[t][i] = theta;
                    let fd = (up - down) / (2.0 * h);
                    let a = analytic[flat_idx];
                    let err = (a - fd).abs() / 1f64.max(a.abs()).max(fd.abs());
                    assert!(err <= 1e-5, "{method} tensor {t} entry {i}: {a} vs {fd}");
                    flat_idx += 1;
                }
            }
            assert_eq!(flat_idx, analytic.len());
        }
    }

    #[test]
    fn zero_inputs_and_targets_give_zero_lora_loss() {
        let task = make_task(TaskKind::TeacherStudent, 4, 4, 1, 0.0, 1).unwrap();
        let model = Model::for_task(&task, &AdapterConfig::new(Method::Lora, 2)).unwrap();
        let batch = vec![regression(&[0.0; 4], &[0.0; 4]); 3];
        let (loss, grads) = loss_and_grads(&model, &batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads[0].squared_norm(), 0.0);
    }

    #[test]
    fn cross_entropy_is_non_negative_and_matches_softmax() {
        let (loss, grad) = loss_and_output_grad(LossKind::CrossEntropy, &[1.0, 2.0, 3.0], &Target::Class(2)).unwrap();
        let z: f64 = [1f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        assert!((loss - (z.ln() - 3.0)).abs() < 1e-14);
        assert!(loss >= 0.0);
        assert!(grad.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn mixed_methods_and_bad_shapes_are_rejected() {
        let w = Matrix::identity(3);
        let a = AdapterState::init(&w, &AdapterConfig::new(Method::Lora, 1)).unwrap();
        let b = AdapterState::init(&w, &AdapterConfig::new(Method::Dude, 1)).unwrap();
        assert!(Model::new(
            vec![
                Layer { adapter: a.clone(), relu: true },
                Layer { adapter: b, relu: false }
            ],
            LossKind::Mse
        )
        .is_err());
        let wide = AdapterState::init(&Matrix::zeros(2, 5), &AdapterConfig::new(Method::Lora, 1)).unwrap();
        assert!(Model::new(
            vec![
                Layer { adapter: a, relu: true },
                Layer { adapter: wide, relu: false }
            ],
            LossKind::Mse
        )
        .is_err());
        assert!(Model::new(vec![], LossKind::Mse).is_err());
    }

    #[test]
    fn empty_batch_is_an_error() {
        let model = two_layer(Method::Lora);
        assert!(loss_and_grads(&model, &[]).is_err());
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let w = Matrix::identity(2);
        let a = AdapterState::init(&w, &AdapterConfig::new(Method::Full, 1)).unwrap();
        let model = Model::new(vec![Layer { adapter: a, relu: false }], LossKind::CrossEntropy).unwrap();
        let samples = vec![
            Sample { x: vec![1.0, 0.0], target: Target::Class(0) },
            Sample { x: vec![0.0, 1.0], target: Target::Class(0) },
        ];
        assert_eq!(evaluate(&model, &samples).unwrap(), 0.5);
    }
}
