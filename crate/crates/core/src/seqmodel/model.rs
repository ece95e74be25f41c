use super::params::{Gradients, ModelParams, ParamId};
use super::tape::{NodeId, Tape};
use super::ModelError;
use crate::tensor::Matrix;
use crate::textproc::BOS;
use crate::Scalar;

/// A recorded forward pass: the tape plus the node ids needed to pull parameter gradients.
pub struct ForwardTrace<'a, T: Scalar> {
    tape: Tape<'a, T>,
    params: Vec<NodeId>,
    head: Option<NodeId>,
    logits: NodeId,
}

impl<T: Scalar> ForwardTrace<'_, T> {
    /// `len(prefix) × |V|`; row `t` scores the token following `prefix[..=t]`.
    pub fn logits(&self) -> &Matrix<T> {
        self.tape.value(self.logits)
    }

    pub fn tape(&self) -> &Tape<'_, T> {
        &self.tape
    }
}

fn check_inputs<T: Scalar>(params: &ModelParams<T>, features: &Matrix<T>, prefix: &[usize]) -> Result<(), ModelError> {
    let cfg = params.config();
    match prefix.first() {
        None => return Err(ModelError::BadPrefix("empty prefix".into())),
        Some(&first) if first != BOS => return Err(ModelError::BadPrefix(format!("prefix starts with {first}, not BOS"))),
        _ => {}
    }
    if prefix.len() > cfg.max_len {
        return Err(ModelError::BadPrefix(format!("prefix length {} exceeds max_len {}", prefix.len(), cfg.max_len)));
    }
    if let Some(&bad) = prefix.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(ModelError::BadPrefix(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
    }
    if features.rows() == 0 {
        return Err(ModelError::BadFeatures("no feature rows".into()));
    }
    if features.cols() != cfg.feature_dim {
        return Err(ModelError::BadFeatures(format!("feature width {} != {}", features.cols(), cfg.feature_dim)));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn attention<T: Scalar>(
    tape: &mut Tape<'_, T>,
    n_heads: usize,
    queries_from: NodeId,
    keys_from: NodeId,
    weights: [NodeId; 4],
    causal: bool,
) -> NodeId {
    let [wq, wk, wv, wo] = weights;
    let q = tape.matmul(queries_from, wq);
    let k = tape.matmul(keys_from, wk);
    let v = tape.matmul(keys_from, wv);
    let d = tape.value(q).cols();
    let dh = d / n_heads;
    let inv_sqrt = T::one() / T::from_usize(dh).expect("head width fits").sqrt();
    let heads: Vec<NodeId> = (0..n_heads)
        .map(|h| {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let scores = tape.matmul_nt(qh, kh);
            let scaled = tape.scale(scores, inv_sqrt);
            let probs = tape.softmax_rows(scaled, causal);
            tape.matmul(probs, vh)
        })
        .collect();
    let merged = if n_heads == 1 { heads[0] } else { tape.concat_cols(&heads) };
    tape.matmul(merged, wo)
}

pub(crate) fn forward_with_head<'a, T: Scalar>(
    params: &'a ModelParams<T>,
    features: &'a Matrix<T>,
    prefix: &[usize],
    head: Option<&'a Matrix<T>>,
) -> Result<ForwardTrace<'a, T>, ModelError> {
    check_inputs(params, features, prefix)?;
    let cfg = params.config();
    let mut tape = Tape::new();
    let p: Vec<NodeId> = ParamId::ALL.iter().map(|&id| tape.leaf(params.get(id))).collect();
    let at = |id: ParamId| p[id.index()];

    let positions: Vec<usize> = (0..prefix.len()).collect();
    let tok = tape.gather(at(ParamId::TokenEmbedding), prefix);
    let pos = tape.gather(at(ParamId::PositionEmbedding), &positions);
    let x0 = tape.add(tok, pos);

    let self_w = [ParamId::SelfQuery, ParamId::SelfKey, ParamId::SelfValue, ParamId::SelfOutput].map(at);
    let sa = attention(&mut tape, cfg.n_heads, x0, x0, self_w, true);
    let h1 = tape.add(x0, sa);

    let feats = tape.leaf(features);
    let projected = tape.matmul(feats, at(ParamId::FeatureProjection));
    let cross_w = [ParamId::CrossQuery, ParamId::CrossKey, ParamId::CrossValue, ParamId::CrossOutput].map(at);
    let ca = attention(&mut tape, cfg.n_heads, h1, projected, cross_w, false);
    let r2 = tape.add(h1, ca);
    let h2 = tape.layer_norm(r2, at(ParamId::Norm1Gain), at(ParamId::Norm1Bias));

    let up = tape.matmul(h2, at(ParamId::FeedForwardIn));
    let act = tape.gelu(up);
    let down = tape.matmul(act, at(ParamId::FeedForwardOut));
    let r3 = tape.add(h2, down);
    let h3 = tape.layer_norm(r3, at(ParamId::Norm2Gain), at(ParamId::Norm2Bias));

    let head_node = head.map(|m| tape.leaf(m));
    let logits = tape.matmul_nt(h3, head_node.unwrap_or(at(ParamId::TokenEmbedding)));
    Ok(ForwardTrace { tape, params: p, head: head_node, logits })
}

/// Logits for every position of `prefix` (which must start with BOS), conditioned on `features`.
pub fn forward<T: Scalar>(params: &ModelParams<T>, features: &Matrix<T>, prefix: &[usize]) -> Result<Matrix<T>, ModelError> {
    Ok(forward_with_head(params, features, prefix, None)?.logits().clone())
}

/// Like [`forward`], keeping the tape for [`backward`].
pub fn forward_train<'a, T: Scalar>(
    params: &'a ModelParams<T>,
    features: &'a Matrix<T>,
    prefix: &[usize],
) -> Result<ForwardTrace<'a, T>, ModelError> {
    forward_with_head(params, features, prefix, None)
}

/// Parameter gradients given `loss_grad = ∂loss/∂logits`.
pub fn backward<T: Scalar>(trace: &ForwardTrace<'_, T>, loss_grad: Matrix<T>) -> Gradients<T> {
    backward_with_head(trace, loss_grad).0
}

pub(crate) fn backward_with_head<T: Scalar>(trace: &ForwardTrace<'_, T>, loss_grad: Matrix<T>) -> (Gradients<T>, Option<Matrix<T>>) {
    let mut grads = trace.tape.backward(trace.logits, loss_grad);
    let tensors = trace
        .params
        .iter()
        .map(|&id| {
            grads.take(id).unwrap_or_else(|| {
                let v = trace.tape.value(id);
                Matrix::zeros(v.rows(), v.cols())
            })
        })
        .collect();
    let head = trace.head.and_then(|h| grads.take(h));
    (Gradients::from_tensors(tensors), head)
}
