use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};
use crate::tensor::Matrix;
use crate::Scalar;

/// Every tensor of the decoder, in storage and checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    TokenEmbedding,
    PositionEmbedding,
    FeatureProjection,
    SelfQuery,
    SelfKey,
    SelfValue,
    SelfOutput,
    CrossQuery,
    CrossKey,
    CrossValue,
    CrossOutput,
    FeedForwardIn,
    FeedForwardOut,
    Norm1Gain,
    Norm1Bias,
    Norm2Gain,
    Norm2Bias,
}

impl ParamId {
    pub const ALL: [ParamId; 17] = [
        ParamId::TokenEmbedding,
        ParamId::PositionEmbedding,
        ParamId::FeatureProjection,
        ParamId::SelfQuery,
        ParamId::SelfKey,
        ParamId::SelfValue,
        ParamId::SelfOutput,
        ParamId::CrossQuery,
        ParamId::CrossKey,
        ParamId::CrossValue,
        ParamId::CrossOutput,
        ParamId::FeedForwardIn,
        ParamId::FeedForwardOut,
        ParamId::Norm1Gain,
        ParamId::Norm1Bias,
        ParamId::Norm2Gain,
        ParamId::Norm2Bias,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamId::TokenEmbedding => "token_embedding",
            ParamId::PositionEmbedding => "position_embedding",
            ParamId::FeatureProjection => "feature_projection",
            ParamId::SelfQuery => "self_attn.query",
            ParamId::SelfKey => "self_attn.key",
            ParamId::SelfValue => "self_attn.value",
            ParamId::SelfOutput => "self_attn.output",
            ParamId::CrossQuery => "cross_attn.query",
            ParamId::CrossKey => "cross_attn.key",
            ParamId::CrossValue => "cross_attn.value",
            ParamId::CrossOutput => "cross_attn.output",
            ParamId::FeedForwardIn => "ffn.in",
            ParamId::FeedForwardOut => "ffn.out",
            ParamId::Norm1Gain => "norm1.gain",
            ParamId::Norm1Bias => "norm1.bias",
            ParamId::Norm2Gain => "norm2.gain",
            ParamId::Norm2Bias => "norm2.bias",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn shape(self, cfg: &ModelConfig) -> (usize, usize) {
        let d = cfg.d_model;
        match self {
            ParamId::TokenEmbedding => (cfg.vocab_size, d),
            ParamId::PositionEmbedding => (cfg.max_len, d),
            ParamId::FeatureProjection => (cfg.feature_dim, d),
            ParamId::FeedForwardIn => (d, 4 * d),
            ParamId::FeedForwardOut => (4 * d, d),
            ParamId::Norm1Gain | ParamId::Norm1Bias | ParamId::Norm2Gain | ParamId::Norm2Bias => (1, d),
            _ => (d, d),
        }
    }
}

/// All dense tensors of the decoder. The output projection is tied to the token embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    tensors: Vec<Matrix<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-uniform weights drawn from a ChaCha stream seeded with `config.seed`;
    /// layer-norm gains start at 1 and biases at 0.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = ParamId::ALL
            .iter()
            .map(|&id| {
                let (rows, cols) = id.shape(config);
                match id {
                    ParamId::Norm1Gain | ParamId::Norm2Gain => Matrix::from_vec(rows, cols, vec![T::one(); rows * cols]),
                    ParamId::Norm1Bias | ParamId::Norm2Bias => Matrix::zeros(rows, cols),
                    _ => {
                        let s = (6.0 / (rows + cols) as f64).sqrt();
                        let data = (0..rows * cols).map(|_| T::of(rng.random_range(-s..=s))).collect();
                        Matrix::from_vec(rows, cols, data)
                    }
                }
            })
            .collect();
        Ok(Self { config: config.clone(), tensors })
    }

    /// Assembles parameters from tensors in [`ParamId::ALL`] order, checking every shape.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Matrix<T>>) -> Result<Self, ModelError> {
        config.validate()?;
        if tensors.len() != ParamId::ALL.len() {
            return Err(ModelError::ShapeMismatch(format!("expected {} tensors, got {}", ParamId::ALL.len(), tensors.len())));
        }
        for (id, t) in ParamId::ALL.iter().zip(&tensors) {
            if t.shape() != id.shape(&config) {
                return Err(ModelError::ShapeMismatch(format!("{}: {:?} vs {:?}", id.name(), t.shape(), id.shape(&config))));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.tensors[id.index()]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.tensors[id.index()]
    }

    pub fn tensors(&self) -> &[Matrix<T>] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

/// One gradient tensor per [`ParamId`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    tensors: Vec<Matrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        Self { tensors: params.tensors().iter().map(|t| Matrix::zeros(t.rows(), t.cols())).collect() }
    }

    pub(crate) fn from_tensors(tensors: Vec<Matrix<T>>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.tensors[id.index()]
    }

    pub fn tensors(&self) -> &[Matrix<T>] {
        &self.tensors
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: T) {
        for t in &mut self.tensors {
            t.as_mut_slice().iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn max_abs(&self) -> T {
        self.tensors.iter().fold(T::zero(), |m, t| m.max(t.max_abs()))
    }
}
