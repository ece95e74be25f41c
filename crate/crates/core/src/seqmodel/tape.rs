//! Matrix-level reverse-mode differentiation.
//!
//! Every primitive appends a node holding its output value and whatever intermediates its
//! backward rule needs. [`Tape::backward`] walks the nodes in exact reverse order of
//! recording and accumulates gradients additively, so a node used twice (the tied
//! embedding, for one) receives the sum of both contributions.

use std::borrow::Cow;

use crate::tensor::Matrix;
use crate::Scalar;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Gather { table: NodeId, ids: Vec<usize> },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Softmax { input: NodeId },
    LayerNorm { input: NodeId, gain: NodeId, bias: NodeId, normed: Matrix<T>, inv_std: Vec<T> },
    Gelu(NodeId),
    SliceCols { input: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Matrix<T>>,
    op: Op<T>,
}

/// Recorded computation over borrowed or owned matrices.
pub struct Tape<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one scalar objective with respect to every node.
pub struct NodeGrads<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> NodeGrads<T> {
    /// `None` when the objective does not depend on the node.
    pub fn get(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix<T>> {
        self.grads[id.0].take()
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Matrix<T>>, g: Matrix<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value: Cow::Owned(value), op });
        NodeId(self.nodes.len() - 1)
    }

    /// An input or parameter, borrowed for the lifetime of the tape.
    pub fn leaf(&mut self, value: &'a Matrix<T>) -> NodeId {
        self.nodes.push(Node { value: Cow::Borrowed(value), op: Op::Leaf });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf_owned(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Rows `ids` of `table`, in order.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Matrix::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.as_slice().iter().zip(y.as_slice()).map(|(&p, &q)| p * q).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let v = self.value(a).scale(c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(v, Op::MatMulNT(a, b))
    }

    /// Row softmax. With `causal`, entry `(i, j)` for `j > i` is excluded (probability 0).
    pub fn softmax_rows(&mut self, input: NodeId, causal: bool) -> NodeId {
        let x = self.value(input);
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for r in 0..x.rows() {
            let width = if causal { (r + 1).min(x.cols()) } else { x.cols() };
            softmax_into(&x.row(r)[..width], &mut out.row_mut(r)[..width]);
        }
        self.push(out, Op::Softmax { input })
    }

    /// Per-row layer normalization followed by `gain ⊙ x̂ + bias` (`gain`, `bias` are `1 × d`).
    pub fn layer_norm(&mut self, input: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let x = self.value(input);
        let (g, b) = (self.value(gain), self.value(bias));
        let (rows, d) = x.shape();
        assert_eq!(g.shape(), (1, d), "layer norm gain shape");
        assert_eq!(b.shape(), (1, d), "layer norm bias shape");
        let df = T::from_usize(d).expect("width fits");
        let mut normed = Matrix::zeros(rows, d);
        let mut out = Matrix::zeros(rows, d);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() / df;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / df;
            let istd = T::one() / (var + T::of(LN_EPS)).sqrt();
            inv_std.push(istd);
            for c in 0..d {
                let xh = (row[c] - mean) * istd;
                normed[(r, c)] = xh;
                out[(r, c)] = xh * g.as_slice()[c] + b.as_slice()[c];
            }
        }
        self.push(out, Op::LayerNorm { input, gain, bias, normed, inv_std })
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, input: NodeId) -> NodeId {
        let v = self.value(input).map(gelu_value);
        self.push(v, Op::Gelu(input))
    }

    pub fn slice_cols(&mut self, input: NodeId, start: usize, len: usize) -> NodeId {
        let x = self.value(input);
        assert!(start + len <= x.cols(), "column slice out of range");
        let mut out = Matrix::zeros(x.rows(), len);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { input, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + v.cols()].copy_from_slice(v.row(r));
            }
            offset += v.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Reverse pass from `output`, seeded with `output_grad = ∂objective/∂output`.
    pub fn backward(&self, output: NodeId, output_grad: Matrix<T>) -> NodeGrads<T> {
        assert_eq!(self.value(output).shape(), output_grad.shape(), "seed gradient shape");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(output_grad);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut gt = Matrix::zeros(t.rows(), t.cols());
                    for (r, &id) in ids.iter().enumerate() {
                        for (acc, &v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads[table.0], gt);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = elementwise(&g, y);
                    let gb = elementwise(&g, x);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads[a.0], g.scale(*c)),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b));
                    let gb = self.value(*a).matmul_tn(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulNT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.matmul_tn(self.value(*a));
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Softmax { input } => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let inner: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for (o, (&p, &q)) in gx.row_mut(r).iter_mut().zip(yr.iter().zip(gr)) {
                            *o = p * (q - inner);
                        }
                    }
                    accumulate(&mut grads[input.0], gx);
                }
                Op::LayerNorm { input, gain, bias, normed, inv_std } => {
                    let gain_v = self.value(*gain);
                    let (rows, d) = normed.shape();
                    let df = T::from_usize(d).expect("width fits");
                    let mut gx = Matrix::zeros(rows, d);
                    let mut gg = Matrix::zeros(1, d);
                    let mut gb = Matrix::zeros(1, d);
                    for r in 0..rows {
                        let mut dxh = vec![T::zero(); d];
                        for c in 0..d {
                            let go = g[(r, c)];
                            gg.as_mut_slice()[c] += go * normed[(r, c)];
                            gb.as_mut_slice()[c] += go;
                            dxh[c] = go * gain_v.as_slice()[c];
                        }
                        let mean_d = dxh.iter().copied().sum::<T>() / df;
                        let mean_dx: T = dxh.iter().zip(normed.row(r)).map(|(&a, &b)| a * b).sum::<T>() / df;
                        for c in 0..d {
                            gx[(r, c)] = inv_std[r] * (dxh[c] - mean_d - normed[(r, c)] * mean_dx);
                        }
                    }
                    accumulate(&mut grads[input.0], gx);
                    accumulate(&mut grads[gain.0], gg);
                    accumulate(&mut grads[bias.0], gb);
                }
                Op::Gelu(input) => {
                    let x = self.value(*input);
                    let data = x
                        .as_slice()
                        .iter()
                        .zip(g.as_slice())
                        .map(|(&x, &go)| {
                            let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
                            let t = u.tanh();
                            let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
                            let d = T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du;
                            go * d
                        })
                        .collect();
                    accumulate(&mut grads[input.0], Matrix::from_vec(x.rows(), x.cols(), data));
                }
                Op::SliceCols { input, start } => {
                    let x = self.value(*input);
                    let mut gx = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads[input.0], gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let width = self.value(*p).cols();
                        let mut gp = Matrix::zeros(g.rows(), width);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + width]);
                        }
                        offset += width;
                        accumulate(&mut grads[p.0], gp);
                    }
                }
            }
        }
        NodeGrads { grads }
    }
}

fn elementwise<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| x * y).collect();
    Matrix::from_vec(a.rows(), a.cols(), data)
}

pub(crate) fn gelu_value<T: Scalar>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

/// Numerically stable softmax of `x` written into `out`.
pub(crate) fn softmax_into<T: Scalar>(x: &[T], out: &mut [T]) {
    let max = x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log softmax(x)`.
pub(crate) fn log_softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let max = x.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let lse = max + x.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    x.iter().map(|&v| v - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Checks every leaf gradient of `objective = Σ weights ⊙ f(leaves)` against central differences.
    fn check<F>(leaves: Vec<Matrix<f64>>, build: F)
    where
        F: for<'t> Fn(&mut Tape<'t, f64>, &[NodeId]) -> NodeId,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let objective = |leaves: &[Matrix<f64>], weights: Option<&Matrix<f64>>| -> (f64, Matrix<f64>, Vec<Matrix<f64>>) {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = leaves.iter().map(|m| tape.leaf(m)).collect();
            let out = build(&mut tape, &ids);
            let v = tape.value(out).clone();
            let w = weights.cloned().unwrap_or_else(|| Matrix::zeros(v.rows(), v.cols()));
            let value = v.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
            let mut grads = tape.backward(out, w.clone());
            let g = ids
                .iter()
                .zip(leaves)
                .map(|(&id, m)| grads.take(id).unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols())))
                .collect();
            (value, w, g)
        };
        let (_, shape_probe, _) = objective(&leaves, None);
        let weights = random(shape_probe.rows(), shape_probe.cols(), &mut rng);
        let (_, _, analytic) = objective(&leaves, Some(&weights));
        let h = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            for k in 0..leaf.as_slice().len() {
                let mut plus = leaves.clone();
                plus[li].as_mut_slice()[k] += h;
                let mut minus = leaves.clone();
                minus[li].as_mut_slice()[k] -= h;
                let fd = (objective(&plus, Some(&weights)).0 - objective(&minus, Some(&weights)).0) / (2.0 * h);
                let an = analytic[li].as_slice()[k];
                assert!(
                    (an - fd).abs() / an.abs().max(1.0) < 1e-6,
                    "leaf {li} entry {k}: analytic {an} vs numeric {fd}"
                );
            }
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn matmul_gradients() {
        let mut r = rng();
        check(vec![random(3, 4, &mut r), random(4, 2, &mut r)], |t, x| t.matmul(x[0], x[1]));
        check(vec![random(3, 4, &mut r), random(5, 4, &mut r)], |t, x| t.matmul_nt(x[0], x[1]));
    }

    #[test]
    fn elementwise_gradients() {
        let mut r = rng();
        check(vec![random(2, 3, &mut r), random(2, 3, &mut r)], |t, x| t.add(x[0], x[1]));
        check(vec![random(2, 3, &mut r), random(2, 3, &mut r)], |t, x| t.mul(x[0], x[1]));
        check(vec![random(2, 3, &mut r)], |t, x| t.scale(x[0], -0.7));
        check(vec![random(3, 3, &mut r)], |t, x| t.gelu(x[0]));
    }

    #[test]
    fn softmax_gradients() {
        let mut r = rng();
        check(vec![random(4, 4, &mut r)], |t, x| t.softmax_rows(x[0], false));
        check(vec![random(4, 4, &mut r)], |t, x| t.softmax_rows(x[0], true));
    }

    #[test]
    fn layer_norm_gradients() {
        let mut r = rng();
        check(vec![random(3, 5, &mut r), random(1, 5, &mut r), random(1, 5, &mut r)], |t, x| {
            t.layer_norm(x[0], x[1], x[2])
        });
    }

    #[test]
    fn gather_slice_concat_gradients() {
        let mut r = rng();
        check(vec![random(5, 3, &mut r)], |t, x| t.gather(x[0], &[4, 0, 4, 2]));
        check(vec![random(3, 6, &mut r)], |t, x| {
            let a = t.slice_cols(x[0], 0, 2);
            let b = t.slice_cols(x[0], 3, 3);
            t.concat_cols(&[b, a])
        });
    }

    #[test]
    fn reused_node_accumulates() {
        let mut r = rng();
        check(vec![random(3, 3, &mut r)], |t, x| {
            let y = t.matmul(x[0], x[0]);
            t.add(y, x[0])
        });
    }

    #[test]
    fn causal_softmax_zeroes_the_future() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]);
        let mut t = Tape::new();
        let x = t.leaf(&m);
        let y = t.softmax_rows(x, true);
        let v = t.value(y);
        assert_eq!(v.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(v[(1, 2)], 0.0);
        for r in 0..3 {
            assert!((v.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut t = Tape::new();
        let x = t.leaf(&a);
        let y = t.matmul(x, x);
        let grads = t.backward(y, Matrix::zeros(2, 2));
        assert_eq!(grads.get(x).unwrap().max_abs(), 0.0);
    }
}
