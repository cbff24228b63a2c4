//! Contrastive alignment of instruction embeddings with policy weights.
//!
//! Two affine projection heads map instruction embeddings (dimension `D`) and
//! standardized flattened policy weights (dimension `P`) into a shared
//! `K`-dimensional space. Outputs are L2-normalized, so the similarity matrix
//! `S[i][j] = <text_i, policy_j>` holds cosines. Both heads are trained on the
//! symmetric temperature-scaled cross-entropy over `S`: every instruction
//! should pick out its own policy among the batch, and vice versa.

mod io;
mod loss;
mod train;

pub use io::{load_model, read_model, save_model, write_model};
pub use loss::{clip_loss, clip_loss_grad};
pub use train::{gradient_check, gradient_check_with_step, loss_and_grad, train_alignment, AlignConfig};

use rand::Rng;

use crate::embed::norm;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 32;
pub const DEFAULT_TEMPERATURE: f64 = 0.07;

/// Affine map `x -> W x + b` with `W` stored row-major (`K` rows) followed by
/// `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    in_dim: usize,
    out_dim: usize,
    params: Vec<f64>,
}

impl ProjectionHead {
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        let scale = 1.0 / (in_dim.max(1) as f64).sqrt();
        let params = (0..in_dim * out_dim + out_dim).map(|_| rng.gen_range(-scale..scale)).collect();
        Self::from_params(in_dim, out_dim, params)
    }

    pub fn from_params(in_dim: usize, out_dim: usize, params: Vec<f64>) -> Result<Self> {
        if out_dim < 2 {
            return Err(Error::Shape(format!("projection dimension must be at least 2, got {out_dim}")));
        }
        if in_dim == 0 {
            return Err(Error::Shape("projection input dimension must be positive".into()));
        }
        if params.len() != in_dim * out_dim + out_dim {
            return Err(Error::Shape(format!(
                "{in_dim}->{out_dim} head needs {} parameters, got {}",
                in_dim * out_dim + out_dim,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("projection head has non-finite parameters".into()));
        }
        Ok(ProjectionHead { in_dim, out_dim, params })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self) -> &[f64] {
        &self.params[..self.in_dim * self.out_dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.in_dim * self.out_dim..]
    }

    /// `W x + b` without normalization.
    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::Shape(format!(
                "head expects {}-dim input, got {}",
                self.in_dim,
                x.len()
            )));
        }
        Ok(self
            .weight()
            .chunks_exact(self.in_dim)
            .zip(self.bias())
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect())
    }

    /// `(W x + b) / ||W x + b||`. With `b != 0` this is not positively
    /// homogeneous in `x`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.affine(x)?;
        let n = norm(&y);
        if !(n >= 1e-12) {
            return Err(Error::Numeric(format!("projection norm {n:e} is degenerate")));
        }
        y.iter_mut().for_each(|v| *v /= n);
        Ok(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentModel {
    pub text_head: ProjectionHead,
    pub policy_head: ProjectionHead,
    pub temperature: f64,
    /// When false, projections skip L2 normalization and `S` holds raw inner
    /// products.
    pub normalize: bool,
    /// Per-coordinate mean and scale applied to policy weights before the
    /// policy head.
    pub policy_mean: Vec<f64>,
    pub policy_scale: Vec<f64>,
}

impl AlignmentModel {
    pub fn new(
        text_head: ProjectionHead,
        policy_head: ProjectionHead,
        temperature: f64,
        policy_mean: Vec<f64>,
        policy_scale: Vec<f64>,
    ) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
        }
        if text_head.out_dim() != policy_head.out_dim() {
            return Err(Error::Shape(format!(
                "heads project to {} and {} dimensions",
                text_head.out_dim(),
                policy_head.out_dim()
            )));
        }
        let p = policy_head.in_dim();
        if policy_mean.len() != p || policy_scale.len() != p {
            return Err(Error::Shape("standardization vectors do not match the policy head".into()));
        }
        if policy_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Numeric("standardization scales must be positive".into()));
        }
        Ok(AlignmentModel { text_head, policy_head, temperature, normalize: true, policy_mean, policy_scale })
    }

    /// Random heads with identity standardization.
    pub fn random<R: Rng + ?Sized>(d: usize, p: usize, k: usize, temperature: f64, rng: &mut R) -> Result<Self> {
        let text_head = ProjectionHead::random(d, k, rng)?;
        let policy_head = ProjectionHead::random(p, k, rng)?;
        Self::new(text_head, policy_head, temperature, vec![0.0; p], vec![1.0; p])
    }

    pub fn text_dim(&self) -> usize {
        self.text_head.in_dim()
    }

    pub fn policy_dim(&self) -> usize {
        self.policy_head.in_dim()
    }

    pub fn k(&self) -> usize {
        self.text_head.out_dim()
    }

    pub fn standardize(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.policy_dim() {
            return Err(Error::Shape(format!(
                "model expects {}-dim policy vectors, got {}",
                self.policy_dim(),
                weights.len()
            )));
        }
        Ok(weights
            .iter()
            .zip(&self.policy_mean)
            .zip(&self.policy_scale)
            .map(|((w, m), s)| (w - m) / s)
            .collect())
    }

    fn head_output(&self, head: &ProjectionHead, x: &[f64]) -> Result<Vec<f64>> {
        if self.normalize {
            head.project(x)
        } else {
            head.affine(x)
        }
    }

    pub fn project_text(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        self.head_output(&self.text_head, embedding)
    }

    /// Projects raw (unstandardized) flattened policy weights.
    pub fn project_policy(&self, weights: &[f64]) -> Result<Vec<f64>> {
        self.head_output(&self.policy_head, &self.standardize(weights)?)
    }
}

/// `N` (instruction embedding, flattened policy) pairs; pair `i` is the
/// ground-truth match for row and column `i` of the similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentDataset {
    texts: Vec<Vec<f64>>,
    policies: Vec<Vec<f64>>,
}

impl AlignmentDataset {
    pub fn new(texts: Vec<Vec<f64>>, policies: Vec<Vec<f64>>) -> Result<Self> {
        if texts.len() != policies.len() {
            return Err(Error::Shape(format!("{} texts but {} policies", texts.len(), policies.len())));
        }
        if texts.is_empty() {
            return Err(Error::Shape("alignment dataset is empty".into()));
        }
        let (d, p) = (texts[0].len(), policies[0].len());
        if texts.iter().any(|t| t.len() != d) || policies.iter().any(|w| w.len() != p) {
            return Err(Error::Shape("dataset rows have ragged dimensions".into()));
        }
        Ok(AlignmentDataset { texts, policies })
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn text_dim(&self) -> usize {
        self.texts[0].len()
    }

    pub fn policy_dim(&self) -> usize {
        self.policies[0].len()
    }

    pub fn texts(&self) -> &[Vec<f64>] {
        &self.texts
    }

    pub fn policies(&self) -> &[Vec<f64>] {
        &self.policies
    }

    /// Per-coordinate mean and standard deviation over the policies; a zero
    /// deviation is replaced by 1 so the coordinate passes through unscaled.
    pub fn policy_standardization(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len() as f64;
        let p = self.policy_dim();
        let mut mean = vec![0.0; p];
        for w in &self.policies {
            mean.iter_mut().zip(w).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; p];
        for w in &self.policies {
            var.iter_mut().zip(w).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n);
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        (mean, scale)
    }
}

/// Square matrix, row `i` = instruction `i`, column `j` = policy `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("similarity matrix must be square".into()));
        }
        Ok(SimilarityMatrix { n, values: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Column index of each row's largest entry (first on ties).
    pub fn row_argmax(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                let row = self.row(i);
                (0..self.n).fold(0, |best, j| if row[j] > row[best] { j } else { best })
            })
            .collect()
    }

    /// Whether every row's strict maximum sits on the diagonal.
    pub fn diagonal_argmax(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| j == i || self.get(i, i) > self.get(i, j)))
    }
}

pub fn similarity_matrix(model: &AlignmentModel, data: &AlignmentDataset) -> Result<SimilarityMatrix> {
    let texts = data.texts().iter().map(|t| model.project_text(t)).collect::<Result<Vec<_>>>()?;
    let policies = data.policies().iter().map(|w| model.project_policy(w)).collect::<Result<Vec<_>>>()?;
    let rows = texts
        .iter()
        .map(|u| policies.iter().map(|v| u.iter().zip(v).map(|(a, b)| a * b).sum()).collect())
        .collect();
    SimilarityMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, d: usize, p: usize, seed: u64) -> AlignmentDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = |dim: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        };
        let texts = rows(d);
        let policies = rows(p);
        AlignmentDataset::new(texts, policies).unwrap()
    }

    #[test]
    fn identity_head_projects_to_input() {
        // 3 -> 4 head: identity on the first three outputs, zero bias.
        let mut params = vec![0.0; 3 * 4 + 4];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let head = ProjectionHead::from_params(3, 4, params).unwrap();
        let x = [0.6, 0.0, 0.8];
        assert_eq!(head.project(&x).unwrap(), vec![0.6, 0.0, 0.8, 0.0]);
        let y = head.project(&[1.2, 0.0, 1.6]).unwrap();
        assert!(y.iter().zip([0.6, 0.0, 0.8, 0.0]).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn bias_breaks_homogeneity() {
        let head = ProjectionHead::from_params(1, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let a = head.project(&[1.0]).unwrap();
        let b = head.project(&[3.0]).unwrap();
        assert!((a[0] - b[0]).abs() > 0.1);
    }

    #[test]
    fn head_errors() {
        let head = ProjectionHead::from_params(2, 2, vec![0.0; 6]).unwrap();
        assert!(matches!(head.project(&[1.0, 1.0]), Err(Error::Numeric(_))));
        assert!(matches!(head.project(&[1.0]), Err(Error::Shape(_))));
        assert!(ProjectionHead::from_params(2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn projections_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ProjectionHead::random(16, 8, &mut rng).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert!((norm(&head.project(&x).unwrap()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_pair_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = AlignmentModel::random(4, 6, 3, 0.07, &mut rng).unwrap();
        let s = similarity_matrix(&model, &random_data(1, 4, 6, 3)).unwrap();
        assert_eq!(s.n(), 1);
        assert!((-1.0..=1.0).contains(&s.get(0, 0)));
    }

    #[test]
    fn collapsed_heads_give_all_ones() {
        // Zero weights and the same bias on both sides.
        let mut tp = vec![0.0; 4 * 2 + 2];
        tp[8] = 3.0;
        let mut pp = vec![0.0; 5 * 2 + 2];
        pp[10] = 0.5;
        let model = AlignmentModel::new(
            ProjectionHead::from_params(4, 2, tp).unwrap(),
            ProjectionHead::from_params(5, 2, pp).unwrap(),
            0.07,
            vec![0.0; 5],
            vec![1.0; 5],
        )
        .unwrap();
        let s = similarity_matrix(&model, &random_data(3, 4, 5, 9)).unwrap();
        assert!(s.rows().iter().flatten().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn matrix_matches_direct_dot_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = AlignmentModel::random(16, 50, 8, 0.07, &mut rng).unwrap();
        let data = random_data(4, 16, 50, 6);
        let s = similarity_matrix(&model, &data).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                // Recompute from the raw parameter layout.
                let proj = |head: &ProjectionHead, x: &[f64]| -> Vec<f64> {
                    let (din, k) = (head.in_dim(), head.out_dim());
                    let p = head.params();
                    let y: Vec<f64> =
                        (0..k).map(|r| p[din * k + r] + (0..din).map(|c| p[r * din + c] * x[c]).sum::<f64>()).collect();
                    let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                    y.into_iter().map(|v| v / n).collect()
                };
                let u = proj(&model.text_head, &data.texts()[i]);
                let v = proj(&model.policy_head, &data.policies()[j]);
                let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                assert!((dot - s.get(i, j)).abs() < 1e-12);
                assert!((-1.0..=1.0).contains(&s.get(i, j)));
            }
        }
    }

    #[test]
    fn standardization_handles_constant_coordinates() {
        let data = AlignmentDataset::new(
            vec![vec![1.0], vec![2.0]],
            vec![vec![1.0, 5.0, 0.0], vec![3.0, 5.0, 2.0]],
        )
        .unwrap();
        let (mean, scale) = data.policy_standardization();
        assert_eq!(mean, vec![2.0, 5.0, 1.0]);
        assert_eq!(scale, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn dataset_shape_errors() {
        assert!(AlignmentDataset::new(vec![vec![1.0]], vec![]).is_err());
        assert!(AlignmentDataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![vec![1.0], vec![1.0]]).is_err());
    }
}
