use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::TensorData;

/// Variance epsilon for layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Reference to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    /// General matmul; 1-d operands act as row (lhs) / column (rhs) vectors.
    Matmul(Var, Var),
    /// a * b^T for 2-d operands.
    MatmulNT(Var, Var),
    /// Elementwise; a 1-d rhs broadcasts across the rows of a 2-d lhs.
    Add(Var, Var),
    Mul(Var, Var),
    Concat1d(Vec<Var>),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxLastDim(Var),
    LayerNorm(Var),
    Sum(Var),
    Mean(Var),
    Log(Var),
    Scale(Var, f64),
    Row(Var, usize),
    Get(Var, usize),
    Slice1d(Var, usize, usize),
}

struct Node<T> {
    value: TensorData<T>,
    op: Op,
}

/// Wengert tape: records every differentiable operation in execution
/// order; `backward` replays it once in reverse, accumulating parameter
/// gradients into the originating [`ParamStore`].
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    param_cache: HashMap<ParamId, Var>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_cache: HashMap::new(),
        }
    }

    fn push(&mut self, value: TensorData<T>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &TensorData<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: TensorData<T>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(TensorData::scalar(T::of(v)))
    }

    /// Record a parameter leaf; repeated requests for the same parameter
    /// return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.param_cache.get(&id) {
            return v;
        }
        let var = self.push(store.value(id).clone(), Op::Param(id));
        self.param_cache.insert(id, var);
        var
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.value(a).as_2d();
        let (br, bc) = self.value(b).as_2d();
        let a_rank = self.value(a).shape().len();
        let b_rank = self.value(b).shape().len();
        // 1-d rhs is a column vector
        let (bk, bn) = if b_rank == 1 { (bc, 1) } else { (br, bc) };
        assert_eq!(
            ac, bk,
            "matmul: inner dims differ ({:?} x {:?})",
            self.value(a).shape(),
            self.value(b).shape()
        );
        let out = mat_mul(self.value(a).data(), ar, ac, self.value(b).data(), bn, b_rank == 1);
        let shape = match (a_rank, b_rank) {
            (2, 2) => vec![ar, bc],
            (2, 1) => vec![ar],
            (1, 2) => vec![bc],
            (1, 1) => vec![1],
            _ => unreachable!(),
        };
        self.push(TensorData::new(shape, out), Op::Matmul(a, b))
    }

    /// a * b^T; both operands 2-d with equal column counts.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.value(a).as_2d();
        let (br, bc) = self.value(b).as_2d();
        assert_eq!(
            ac, bc,
            "matmul_nt: column dims differ ({:?} x {:?})",
            self.value(a).shape(),
            self.value(b).shape()
        );
        let mut out = vec![T::zero(); ar * br];
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        for i in 0..ar {
            for j in 0..br {
                let mut s = T::zero();
                for k in 0..ac {
                    s += ad[i * ac + k] * bd[j * ac + k];
                }
                out[i * br + j] = s;
            }
        }
        self.push(TensorData::matrix(ar, br, out), Op::MatmulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(self.value(a), self.value(b), "add", |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = broadcast_zip(self.value(a), self.value(b), "mul", |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn concat1d(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat1d: no inputs");
        let mut data = Vec::new();
        for &p in parts {
            assert_eq!(
                self.value(p).shape().len(),
                1,
                "concat1d: rank-1 inputs required, got {:?}",
                self.value(p).shape()
            );
            data.extend_from_slice(self.value(p).data());
        }
        self.push(TensorData::vector(data), Op::Concat1d(parts.to_vec()))
    }

    /// Concatenate 2-d inputs with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = self.value(parts[0]).as_2d().0;
        let total: usize = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.value(p).as_2d();
                assert_eq!(r, rows, "concat_cols: row counts differ");
                c
            })
            .sum();
        let mut data = vec![T::zero(); rows * total];
        let mut off = 0;
        for &p in parts {
            let (_, c) = self.value(p).as_2d();
            for r in 0..rows {
                let src = self.value(p).row_slice(r);
                data[r * total + off..r * total + off + c].copy_from_slice(src);
            }
            off += c;
        }
        self.push(TensorData::matrix(rows, total, data), Op::ConcatCols(parts.to_vec()))
    }

    /// Stack equal-length 1-d inputs as the rows of a matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "stack_rows: no inputs");
        let cols = self.value(parts[0]).numel();
        let mut data = Vec::with_capacity(parts.len() * cols);
        for &p in parts {
            assert_eq!(
                self.value(p).shape(),
                &[cols],
                "stack_rows: inputs must all be rank-1 of length {cols}"
            );
            data.extend_from_slice(self.value(p).data());
        }
        self.push(
            TensorData::matrix(parts.len(), cols, data),
            Op::StackRows(parts.to_vec()),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.tanh());
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let one = T::one();
        let value = self.value(a).map(|x| one / (one + (-x).exp()));
        self.push(value, Op::Sigmoid(a))
    }

    /// Numerically stable softmax over the last dimension, row by row.
    pub fn softmax_lastdim(&mut self, a: Var) -> Var {
        let (rows, cols) = self.value(a).as_2d();
        let mut data = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &self.value(a).data()[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                data[r * cols + j] = e;
                sum += e;
            }
            for j in 0..cols {
                data[r * cols + j] = data[r * cols + j] / sum;
            }
        }
        let value = TensorData::new(self.value(a).shape().to_vec(), data);
        self.push(value, Op::SoftmaxLastDim(a))
    }

    /// (x - mean) / sqrt(var + eps) over the last dimension; affine terms
    /// are left to explicit mul/add with learned gain and bias.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let (rows, cols) = self.value(a).as_2d();
        let mut data = vec![T::zero(); rows * cols];
        let eps = T::of(LAYER_NORM_EPS);
        let n = T::of(cols as f64);
        for r in 0..rows {
            let row = &self.value(a).data()[r * cols..(r + 1) * cols];
            let mean = row.iter().cloned().sum::<T>() / n;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            for j in 0..cols {
                data[r * cols + j] = (row[j] - mean) * inv;
            }
        }
        let value = TensorData::new(self.value(a).shape().to_vec(), data);
        self.push(value, Op::LayerNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().cloned().sum::<T>();
        self.push(TensorData::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::of(self.value(a).numel() as f64);
        let s = self.value(a).data().iter().cloned().sum::<T>() / n;
        self.push(TensorData::scalar(s), Op::Mean(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.ln());
        self.push(value, Op::Log(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let k = T::of(c);
        let value = self.value(a).map(|x| x * k);
        self.push(value, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Select row `i` of a 2-d value as a 1-d vector.
    pub fn row(&mut self, a: Var, i: usize) -> Var {
        let (rows, _) = self.value(a).as_2d();
        assert_eq!(self.value(a).shape().len(), 2, "row: rank-2 input required");
        assert!(i < rows, "row index {i} out of range ({rows} rows)");
        let value = TensorData::vector(self.value(a).row_slice(i).to_vec());
        self.push(value, Op::Row(a, i))
    }

    /// Select element `i` of a 1-d value as a scalar.
    pub fn get(&mut self, a: Var, i: usize) -> Var {
        assert_eq!(self.value(a).shape().len(), 1, "get: rank-1 input required");
        assert!(i < self.value(a).numel(), "get index {i} out of range");
        let value = TensorData::scalar(self.value(a).data()[i]);
        self.push(value, Op::Get(a, i))
    }

    pub fn slice1d(&mut self, a: Var, start: usize, len: usize) -> Var {
        assert_eq!(self.value(a).shape().len(), 1, "slice1d: rank-1 input required");
        assert!(start + len <= self.value(a).numel(), "slice1d out of range");
        let value = TensorData::vector(self.value(a).data()[start..start + len].to_vec());
        self.push(value, Op::Slice1d(a, start, len))
    }

    /// Reverse pass from a scalar loss; parameter gradients accumulate
    /// into `store`. Consumes the tape.
    pub fn backward(self, loss: Var, store: &mut ParamStore<T>) {
        assert!(
            self.value(loss).is_scalar(),
            "backward: loss must be scalar, got shape {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<TensorData<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(TensorData::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Constant => {}
                Op::Param(id) => store.grad_add(*id, &g),
                Op::Matmul(a, b) => {
                    let (da, db) = matmul_backward(self.value(*a), self.value(*b), &g);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::MatmulNT(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (ar, ac) = av.as_2d();
                    let (br, _) = bv.as_2d();
                    // dA = G B, dB = G^T A
                    let mut da = vec![T::zero(); ar * ac];
                    let mut db = vec![T::zero(); br * ac];
                    for i in 0..ar {
                        for j in 0..br {
                            let gij = g.data()[i * br + j];
                            for k in 0..ac {
                                da[i * ac + k] += gij * bv.data()[j * ac + k];
                                db[j * ac + k] += gij * av.data()[i * ac + k];
                            }
                        }
                    }
                    acc(&mut grads, *a, TensorData::matrix(ar, ac, da));
                    acc(&mut grads, *b, TensorData::matrix(br, ac, db));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, reduce_broadcast(&g, self.value(*b)));
                }
                Op::Mul(a, b) => {
                    let da = broadcast_zip(&g, self.value(*b), "mul-bwd", |x, y| x * y);
                    acc(&mut grads, *a, da);
                    let prod = broadcast_zip(&g, self.value(*a), "mul-bwd", |x, y| x * y);
                    acc(&mut grads, *b, reduce_broadcast(&prod, self.value(*b)));
                }
                Op::Concat1d(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        acc(
                            &mut grads,
                            p,
                            TensorData::vector(g.data()[off..off + n].to_vec()),
                        );
                        off += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let (rows, total) = g.as_2d();
                    let mut off = 0;
                    for &p in parts {
                        let (_, c) = self.value(p).as_2d();
                        let mut d = vec![T::zero(); rows * c];
                        for r in 0..rows {
                            d[r * c..(r + 1) * c]
                                .copy_from_slice(&g.data()[r * total + off..r * total + off + c]);
                        }
                        acc(&mut grads, p, TensorData::matrix(rows, c, d));
                        off += c;
                    }
                }
                Op::StackRows(parts) => {
                    let (_, cols) = g.as_2d();
                    for (r, &p) in parts.iter().enumerate() {
                        acc(
                            &mut grads,
                            p,
                            TensorData::vector(g.data()[r * cols..(r + 1) * cols].to_vec()),
                        );
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let d: Vec<T> = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                        .collect();
                    acc(&mut grads, *a, TensorData::new(x.shape().to_vec(), d));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let d: Vec<T> = y
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &g)| g * (T::one() - y * y))
                        .collect();
                    acc(&mut grads, *a, TensorData::new(y.shape().to_vec(), d));
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[idx].value;
                    let d: Vec<T> = y
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&y, &g)| g * y * (T::one() - y))
                        .collect();
                    acc(&mut grads, *a, TensorData::new(y.shape().to_vec(), d));
                }
                Op::SoftmaxLastDim(a) => {
                    let y = &self.nodes[idx].value;
                    let (rows, cols) = y.as_2d();
                    let mut d = vec![T::zero(); rows * cols];
                    for r in 0..rows {
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let dot = yr
                            .iter()
                            .zip(gr)
                            .map(|(&y, &g)| y * g)
                            .sum::<T>();
                        for j in 0..cols {
                            d[r * cols + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(&mut grads, *a, TensorData::new(y.shape().to_vec(), d));
                }
                Op::LayerNorm(a) => {
                    let x = self.value(*a);
                    let y = &self.nodes[idx].value;
                    let (rows, cols) = y.as_2d();
                    let n = T::of(cols as f64);
                    let eps = T::of(LAYER_NORM_EPS);
                    let mut d = vec![T::zero(); rows * cols];
                    for r in 0..rows {
                        let xr = &x.data()[r * cols..(r + 1) * cols];
                        let yr = &y.data()[r * cols..(r + 1) * cols];
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let mean = xr.iter().cloned().sum::<T>() / n;
                        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                        let inv = T::one() / (var + eps).sqrt();
                        let g_mean = gr.iter().cloned().sum::<T>() / n;
                        let gy_mean = gr.iter().zip(yr).map(|(&g, &y)| g * y).sum::<T>() / n;
                        for j in 0..cols {
                            d[r * cols + j] = inv * (gr[j] - g_mean - yr[j] * gy_mean);
                        }
                    }
                    acc(&mut grads, *a, TensorData::new(y.shape().to_vec(), d));
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    let shape = self.value(*a).shape().to_vec();
                    let numel = self.value(*a).numel();
                    acc(&mut grads, *a, TensorData::new(shape, vec![gv; numel]));
                }
                Op::Mean(a) => {
                    let numel = self.value(*a).numel();
                    let gv = g.item() / T::of(numel as f64);
                    let shape = self.value(*a).shape().to_vec();
                    acc(&mut grads, *a, TensorData::new(shape, vec![gv; numel]));
                }
                Op::Log(a) => {
                    let x = self.value(*a);
                    let d: Vec<T> = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, &g)| g / x)
                        .collect();
                    acc(&mut grads, *a, TensorData::new(x.shape().to_vec(), d));
                }
                Op::Scale(a, c) => {
                    acc(&mut grads, *a, g.map(|x| x * T::of(*c)));
                }
                Op::Row(a, i) => {
                    let (rows, cols) = self.value(*a).as_2d();
                    let mut d = TensorData::zeros(&[rows, cols]);
                    d.data_mut()[i * cols..(i + 1) * cols].copy_from_slice(g.data());
                    acc(&mut grads, *a, d);
                }
                Op::Get(a, i) => {
                    let mut d = TensorData::zeros(self.value(*a).shape());
                    d.data_mut()[*i] = g.item();
                    acc(&mut grads, *a, d);
                }
                Op::Slice1d(a, start, len) => {
                    let mut d = TensorData::zeros(self.value(*a).shape());
                    d.data_mut()[*start..start + len].copy_from_slice(g.data());
                    acc(&mut grads, *a, d);
                }
            }
        }
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn acc<T: Scalar>(grads: &mut [Option<TensorData<T>>], v: Var, delta: TensorData<T>) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn mat_mul<T: Scalar>(a: &[T], ar: usize, ac: usize, b: &[T], bn: usize, _b_is_vec: bool) -> Vec<T> {
    let mut out = vec![T::zero(); ar * bn];
    for i in 0..ar {
        for k in 0..ac {
            let aik = a[i * ac + k];
            for j in 0..bn {
                out[i * bn + j] += aik * b[k * bn + j];
            }
        }
    }
    out
}

fn matmul_backward<T: Scalar>(
    a: &TensorData<T>,
    b: &TensorData<T>,
    g: &TensorData<T>,
) -> (TensorData<T>, TensorData<T>) {
    let (ar, ac) = a.as_2d();
    let b_rank = b.shape().len();
    let (bk, bn) = if b_rank == 1 {
        (b.numel(), 1)
    } else {
        b.as_2d()
    };
    debug_assert_eq!(ac, bk);
    // G viewed as (ar, bn)
    let gd = g.data();
    let mut da = vec![T::zero(); ar * ac];
    let mut db = vec![T::zero(); bk * bn];
    for i in 0..ar {
        for j in 0..bn {
            let gij = gd[i * bn + j];
            for k in 0..ac {
                da[i * ac + k] += gij * b.data()[k * bn + j];
                db[k * bn + j] += gij * a.data()[i * ac + k];
            }
        }
    }
    (
        TensorData::new(a.shape().to_vec(), da),
        TensorData::new(b.shape().to_vec(), db),
    )
}

/// Elementwise zip with rhs row-broadcast: shapes equal, or lhs [n,d] with rhs [d].
fn broadcast_zip<T: Scalar>(
    a: &TensorData<T>,
    b: &TensorData<T>,
    op: &str,
    f: impl Fn(T, T) -> T,
) -> TensorData<T> {
    if a.shape() == b.shape() {
        let d: Vec<T> = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return TensorData::new(a.shape().to_vec(), d);
    }
    if a.shape().len() == 2 && b.shape().len() == 1 && a.shape()[1] == b.shape()[0] {
        let (rows, cols) = a.as_2d();
        let mut d = vec![T::zero(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                d[r * cols + c] = f(a.data()[r * cols + c], b.data()[c]);
            }
        }
        return TensorData::matrix(rows, cols, d);
    }
    panic!(
        "{op}: incompatible shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    );
}

/// Collapse an upstream gradient onto the shape of a (possibly
/// row-broadcast) operand by summing over broadcast rows.
fn reduce_broadcast<T: Scalar>(g: &TensorData<T>, target: &TensorData<T>) -> TensorData<T> {
    if g.shape() == target.shape() {
        return g.clone();
    }
    let (rows, cols) = g.as_2d();
    assert_eq!(target.shape(), &[cols], "broadcast gradient shape mismatch");
    let mut d = vec![T::zero(); cols];
    for r in 0..rows {
        for (c, acc) in d.iter_mut().enumerate() {
            *acc += g.data()[r * cols + c];
        }
    }
    TensorData::vector(d)
}
