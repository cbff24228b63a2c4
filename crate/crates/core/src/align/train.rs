use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{clip_loss, clip_loss_grad};
use super::{AlignmentDataset, AlignmentModel, ProjectionHead, SimilarityMatrix, DEFAULT_K, DEFAULT_TEMPERATURE};
use crate::embed::norm;
use crate::error::{Error, Result};
use crate::optim::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub k: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// L2-normalize projections before the inner product.
    pub normalize: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            k: DEFAULT_K,
            temperature: DEFAULT_TEMPERATURE,
            learning_rate: 1e-2,
            epochs: 2000,
            seed: 0,
            normalize: true,
        }
    }
}

/// Full-batch training of both heads on the symmetric contrastive loss.
/// Returns the model and the loss before each epoch's update.
pub fn train_alignment(data: &AlignmentDataset, config: &AlignConfig) -> Result<(AlignmentModel, Vec<f64>)> {
    if data.len() < 2 {
        return Err(Error::Parameter("alignment needs at least two pairs".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::Parameter("learning rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let text_head = ProjectionHead::random(data.text_dim(), config.k, &mut rng)?;
    let policy_head = ProjectionHead::random(data.policy_dim(), config.k, &mut rng)?;
    let (mean, scale) = data.policy_standardization();
    let mut model = AlignmentModel::new(text_head, policy_head, config.temperature, mean, scale)?;
    model.normalize = config.normalize;

    let split = model.text_head.params().len();
    let mut params: Vec<f64> = [model.text_head.params(), model.policy_head.params()].concat();
    let mut opt = Adam::new(params.len(), config.learning_rate);
    let mut trace = Vec::with_capacity(config.epochs);
    let inputs = StandardizedInputs::new(&model, data)?;

    for epoch in 0..config.epochs {
        let (loss, grad) = inputs.loss_and_grad(&model)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        trace.push(loss);
        opt.step(&mut params, &grad);
        model.text_head.params_mut().copy_from_slice(&params[..split]);
        model.policy_head.params_mut().copy_from_slice(&params[split..]);
    }
    Ok((model, trace))
}

/// Loss and gradient over the flat parameter vector (text head then policy
/// head, each weight-then-bias).
pub fn loss_and_grad(model: &AlignmentModel, data: &AlignmentDataset) -> Result<(f64, Vec<f64>)> {
    StandardizedInputs::new(model, data)?.loss_and_grad(model)
}

struct StandardizedInputs<'a> {
    texts: &'a [Vec<f64>],
    policies: Vec<Vec<f64>>,
}

impl<'a> StandardizedInputs<'a> {
    fn new(model: &AlignmentModel, data: &'a AlignmentDataset) -> Result<Self> {
        if data.text_dim() != model.text_dim() {
            return Err(Error::Shape(format!(
                "model expects {}-dim text embeddings, dataset has {}",
                model.text_dim(),
                data.text_dim()
            )));
        }
        let policies = data.policies().iter().map(|w| model.standardize(w)).collect::<Result<_>>()?;
        Ok(StandardizedInputs { texts: data.texts(), policies })
    }

    fn loss_and_grad(&self, model: &AlignmentModel) -> Result<(f64, Vec<f64>)> {
        let n = self.texts.len();
        let text_side = forward_side(&model.text_head, self.texts, model.normalize)?;
        let policy_side = forward_side(&model.policy_head, &self.policies, model.normalize)?;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let s = SimilarityMatrix::from_rows(
            text_side.out.iter().map(|u| policy_side.out.iter().map(|v| dot(u, v)).collect()).collect(),
        )?;
        let loss = clip_loss(&s, model.temperature)?;
        let ds = clip_loss_grad(&s, model.temperature)?;

        let k = model.k();
        // dL/du_i = sum_j dS_ij v_j ; dL/dv_j = sum_i dS_ij u_i
        let mut du = vec![vec![0.0; k]; n];
        let mut dv = vec![vec![0.0; k]; n];
        for i in 0..n {
            for j in 0..n {
                let g = ds[i * n + j];
                for c in 0..k {
                    du[i][c] += g * policy_side.out[j][c];
                    dv[j][c] += g * text_side.out[i][c];
                }
            }
        }
        let mut grad = backward_side(&model.text_head, self.texts, &text_side, &du, model.normalize);
        grad.extend(backward_side(&model.policy_head, &self.policies, &policy_side, &dv, model.normalize));
        Ok((loss, grad))
    }
}

struct Side {
    out: Vec<Vec<f64>>,
    /// Pre-normalization norms.
    norms: Vec<f64>,
}

fn forward_side(head: &ProjectionHead, xs: &[Vec<f64>], normalize: bool) -> Result<Side> {
    let mut out = Vec::with_capacity(xs.len());
    let mut norms = Vec::with_capacity(xs.len());
    for x in xs {
        if normalize {
            let y = head.affine(x)?;
            norms.push(norm(&y));
            out.push(head.project(x)?);
        } else {
            norms.push(1.0);
            out.push(head.affine(x)?);
        }
    }
    Ok(Side { out, norms })
}

fn backward_side(head: &ProjectionHead, xs: &[Vec<f64>], side: &Side, dout: &[Vec<f64>], normalize: bool) -> Vec<f64> {
    let (din, k) = (head.in_dim(), head.out_dim());
    let mut grad = vec![0.0; din * k + k];
    for ((x, (u, &r)), g) in xs.iter().zip(side.out.iter().zip(&side.norms)).zip(dout) {
        // Through u = y / |y|: dL/dy = (g - u (u.g)) / |y|.
        let dy: Vec<f64> = if normalize {
            let ug: f64 = u.iter().zip(g).map(|(a, b)| a * b).sum();
            u.iter().zip(g).map(|(uc, gc)| (gc - uc * ug) / r).collect()
        } else {
            g.clone()
        };
        for (row, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let w = &mut grad[row * din..(row + 1) * din];
            w.iter_mut().zip(x).for_each(|(gw, xv)| *gw += d * xv);
            grad[din * k + row] += d;
        }
    }
    grad
}

/// Largest relative error between the analytic gradient and central
/// differences with step `1e-5`, over `samples` random parameters.
pub fn gradient_check(model: &AlignmentModel, data: &AlignmentDataset, samples: usize, seed: u64) -> Result<f64> {
    gradient_check_with_step(model, data, samples, seed, 1e-5)
}

/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn gradient_check_with_step(
    model: &AlignmentModel,
    data: &AlignmentDataset,
    samples: usize,
    seed: u64,
    h: f64,
) -> Result<f64> {
    let (_, grad) = loss_and_grad(model, data)?;
    let split = model.text_head.params().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let idx = rng.gen_range(0..grad.len());
        let eval = |delta: f64| -> Result<f64> {
            let mut m = model.clone();
            if idx < split {
                m.text_head.params_mut()[idx] += delta;
            } else {
                m.policy_head.params_mut()[idx - split] += delta;
            }
            let s = super::similarity_matrix(&m, data)?;
            clip_loss(&s, m.temperature)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        let denom = grad[idx].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((grad[idx] - numeric).abs() / denom);
    }
    Ok(worst)
}
