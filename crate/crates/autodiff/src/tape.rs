//! Recording of forward computations and the reverse sweep over them.

use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::kernels::{self, gemm, split_axis};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// The fixed set of differentiable operations.
///
/// Reductions with `Some(axis)` remove that axis; `None` reduces to a rank-0
/// scalar. `Add`, `Sub` and `Mul` broadcast the right operand when its shape
/// is a suffix of the left operand's shape (e.g. a bias row over a batch).
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `[m,k]·[k,n]`.
    MatMul,
    /// Inputs `x [N,C,H,W]`, `weight [O,C,3,3]`, `bias [O]`; stride 1, pad 1.
    Conv2d,
    /// 2×2 window, stride 2, on `[N,C,H,W]` with even `H` and `W`.
    MaxPool2d,
    LeakyRelu(f64),
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    Concat(usize),
    Reshape(Vec<usize>),
    Sum(Option<usize>),
    Mean(Option<usize>),
    /// Mean cross-entropy of `[B,C]` logits against one class index per row.
    SoftmaxCrossEntropy(Vec<usize>),
    L2Norm(Option<usize>),
    Exp,
    Log,
    /// Selects rows (axis 0) by index; indices may repeat.
    Gather(Vec<usize>),
    Narrow {
        axis: usize,
        start: usize,
        len: usize,
    },
}

impl Primitive {
    fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Conv2d => "conv2d",
            Primitive::MaxPool2d => "maxpool2d",
            Primitive::LeakyRelu(_) => "leaky_relu",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::AddScalar(_) => "add_scalar",
            Primitive::Concat(_) => "concat",
            Primitive::Reshape(_) => "reshape",
            Primitive::Sum(_) => "sum",
            Primitive::Mean(_) => "mean",
            Primitive::SoftmaxCrossEntropy(_) => "softmax_cross_entropy",
            Primitive::L2Norm(_) => "l2_norm",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Gather(_) => "gather",
            Primitive::Narrow { .. } => "narrow",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::Conv2d => Some(3),
            Primitive::MatMul | Primitive::Add | Primitive::Sub | Primitive::Mul => Some(2),
            Primitive::Concat(_) => None,
            _ => Some(1),
        }
    }
}

enum Saved<T> {
    Nothing,
    Cols(Vec<T>),
    Indices(Vec<usize>),
    Probs(Vec<T>),
}

struct Node<T> {
    value: Tensor<T>,
    prim: Option<Primitive>,
    inputs: Vec<usize>,
    saved: Saved<T>,
    param: Option<ParamId>,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to registered parameters.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_param: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.by_param.get(id.index()).and_then(Option::as_ref)
    }

    /// Gradient for every parameter of `store`, zero where the loss does not
    /// depend on it.
    pub fn dense(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        store
            .ids()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
            })
            .collect()
    }
}

/// Single-writer record of a forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    bound: HashMap<ParamId, Var>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            bound: HashMap::new(),
            recording: true,
        }
    }

    /// A tape that evaluates values only; intermediates needed for the reverse
    /// sweep are dropped and [`Tape::backward`] is unavailable.
    pub fn inference() -> Self {
        Tape {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Which piece of every non-smooth operation the recorded values fell
    /// on: the sign of each leaky-relu input and the winner of each max-pool
    /// window. Two evaluations with equal patterns differ only through
    /// smooth operations.
    pub fn branch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.prim {
                Some(Primitive::LeakyRelu(_)) => {
                    let x = &self.nodes[node.inputs[0]].value;
                    out.extend(x.data().iter().map(|&v| usize::from(v > T::zero())));
                }
                Some(Primitive::MaxPool2d) => {
                    let x = &self.nodes[node.inputs[0]].value;
                    let s = x.shape();
                    out.extend(kernels::maxpool2x2_forward(x.data(), s[0] * s[1], s[2], s[3]).1);
                }
                _ => {}
            }
        }
        out
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push_leaf(&mut self, value: Tensor<T>, param: Option<ParamId>) -> Var {
        self.nodes.push(Node {
            value,
            prim: None,
            inputs: Vec::new(),
            saved: Saved::Nothing,
            needs_grad: param.is_some() && self.recording,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiated input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, None)
    }

    /// Binds a parameter of `store`; repeated binds return the same leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push_leaf(store.get(id).clone(), Some(id));
        self.bound.insert(id, v);
        v
    }

    /// Records `prim` applied to `inputs` and returns the output handle.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var> {
        if let Some(n) = prim.arity() {
            if inputs.len() != n {
                return Err(TensorError::Arity {
                    op: prim.name(),
                    expected: n,
                    got: inputs.len(),
                });
            }
        } else if inputs.is_empty() {
            return Err(TensorError::invalid(prim.name(), "no inputs"));
        }
        let ins: Vec<&Tensor<T>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (value, saved) = forward(&prim, &ins)?;
        debug_assert!(
            value.all_finite(),
            "non-finite output from {}",
            prim.name()
        );
        let needs_grad = self.recording && inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            saved: if needs_grad { saved } else { Saved::Nothing },
            prim: Some(prim),
            inputs: inputs.iter().map(|v| v.0).collect(),
            param: None,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse sweep from a scalar `loss`. Only parameter leaves receive
    /// gradients; the tape itself is left untouched, so repeated calls agree.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        if !self.recording {
            return Err(TensorError::invalid("backward", "tape was built for inference"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape(), T::one()));
        let mut by_param: Vec<Option<Tensor<T>>> = Vec::new();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(prim) = &node.prim else {
                if let Some(id) = node.param {
                    if by_param.len() <= id.index() {
                        by_param.resize_with(id.index() + 1, || None);
                    }
                    match &mut by_param[id.index()] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                }
                continue;
            };
            let ins: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
            let want: Vec<bool> = node.inputs.iter().map(|&i| self.nodes[i].needs_grad).collect();
            let input_grads = backward(prim, &ins, &node.value, &node.saved, &g, &want)?;
            for ((&i, gi), w) in node.inputs.iter().zip(input_grads).zip(want) {
                if !w {
                    continue;
                }
                let Some(gi) = gi else { continue };
                match &mut grads[i] {
                    Some(acc) => acc.add_assign(&gi),
                    slot => *slot = Some(gi),
                }
            }
        }
        Ok(Gradients { by_param })
    }

    // Convenience wrappers; all go through `apply`.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn conv2d(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        self.apply(Primitive::Conv2d, &[x, weight, bias])
    }

    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::MaxPool2d, &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.apply(Primitive::LeakyRelu(slope), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::Scale(s), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::AddScalar(s), &[x])
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        self.apply(Primitive::Concat(axis), xs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[x])
    }

    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.apply(Primitive::Sum(axis), &[x])
    }

    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.apply(Primitive::Mean(axis), &[x])
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        self.apply(Primitive::SoftmaxCrossEntropy(targets.to_vec()), &[logits])
    }

    pub fn l2_norm(&mut self, x: Var, axis: Option<usize>) -> Result<Var> {
        self.apply(Primitive::L2Norm(axis), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Exp, &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.apply(Primitive::Log, &[x])
    }

    pub fn gather(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        self.apply(Primitive::Gather(rows.to_vec()), &[x])
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply(Primitive::Narrow { axis, start, len }, &[x])
    }

    /// `x·w + b` for `x [m,in]`, `w [in,out]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }
}

fn is_suffix(long: &[usize], short: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn reduced_shape(shape: &[usize], axis: Option<usize>, op: &'static str) -> Result<Vec<usize>> {
    match axis {
        None => Ok(vec![]),
        Some(a) if a < shape.len() => {
            let mut s = shape.to_vec();
            s.remove(a);
            Ok(s)
        }
        Some(a) => Err(TensorError::invalid(
            op,
            format!("axis {a} out of range for shape {shape:?}"),
        )),
    }
}

fn forward<T: Scalar>(prim: &Primitive, ins: &[&Tensor<T>]) -> Result<(Tensor<T>, Saved<T>)> {
    let op = prim.name();
    let plain = |t: Tensor<T>| Ok((t, Saved::Nothing));
    match prim {
        Primitive::MatMul => {
            let (a, b) = (ins[0], ins[1]);
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(TensorError::shape(op, a.shape(), b.shape()));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = vec![T::zero(); m * n];
            gemm(m, k, n, a.data(), false, b.data(), false, T::zero(), &mut out);
            plain(Tensor::new(&[m, n], out)?)
        }
        Primitive::Conv2d => {
            let (x, w, b) = (ins[0], ins[1], ins[2]);
            let xs = x.shape();
            let ws = w.shape();
            if xs.len() != 4 || ws.len() != 4 || ws[2] != 3 || ws[3] != 3 || ws[1] != xs[1] {
                return Err(TensorError::shape(op, xs, ws));
            }
            if b.shape() != [ws[0]] {
                return Err(TensorError::shape(op, ws, b.shape()));
            }
            let (n, c, h, wd, o) = (xs[0], xs[1], xs[2], xs[3], ws[0]);
            let (out, cols) = kernels::conv2d_forward(x.data(), w.data(), b.data(), n, c, h, wd, o);
            Ok((Tensor::new(&[n, o, h, wd], out)?, Saved::Cols(cols)))
        }
        Primitive::MaxPool2d => {
            let xs = ins[0].shape();
            if xs.len() != 4 || xs[2] % 2 != 0 || xs[3] % 2 != 0 {
                return Err(TensorError::invalid(op, format!("needs [N,C,even,even], got {xs:?}")));
            }
            let (out, arg) = kernels::maxpool2x2_forward(ins[0].data(), xs[0] * xs[1], xs[2], xs[3]);
            Ok((
                Tensor::new(&[xs[0], xs[1], xs[2] / 2, xs[3] / 2], out)?,
                Saved::Indices(arg),
            ))
        }
        Primitive::LeakyRelu(slope) => {
            let s = T::from_f64(*slope);
            plain(ins[0].map(|v| if v > T::zero() { v } else { v * s }))
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            let (a, b) = (ins[0], ins[1]);
            if !is_suffix(a.shape(), b.shape()) {
                return Err(TensorError::shape(op, a.shape(), b.shape()));
            }
            let f: fn(T, T) -> T = match prim {
                Primitive::Add => |x, y| x + y,
                Primitive::Sub => |x, y| x - y,
                _ => |x, y| x * y,
            };
            let inner = b.len().max(1);
            let mut out = a.data().to_vec();
            if !b.is_empty() {
                for chunk in out.chunks_exact_mut(inner) {
                    for (o, &bv) in chunk.iter_mut().zip(b.data()) {
                        *o = f(*o, bv);
                    }
                }
            }
            plain(Tensor::new(a.shape(), out)?)
        }
        Primitive::Scale(s) => {
            let s = T::from_f64(*s);
            plain(ins[0].map(|v| v * s))
        }
        Primitive::AddScalar(s) => {
            let s = T::from_f64(*s);
            plain(ins[0].map(|v| v + s))
        }
        Primitive::Concat(axis) => {
            let first = ins[0].shape();
            if *axis >= first.len() {
                return Err(TensorError::invalid(op, format!("axis {axis} for shape {first:?}")));
            }
            let mut total = 0;
            for t in ins {
                let s = t.shape();
                let compatible = s.len() == first.len()
                    && s.iter()
                        .zip(first)
                        .enumerate()
                        .all(|(d, (x, y))| d == *axis || x == y);
                if !compatible {
                    return Err(TensorError::shape(op, first, s));
                }
                total += s[*axis];
            }
            let (outer, _, inner) = split_axis(first, *axis);
            let mut out = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for t in ins {
                    let len = t.shape()[*axis] * inner;
                    out.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
                }
            }
            let mut shape = first.to_vec();
            shape[*axis] = total;
            plain(Tensor::new(&shape, out)?)
        }
        Primitive::Reshape(shape) => {
            if shape.iter().product::<usize>() != ins[0].len() {
                return Err(TensorError::shape(op, ins[0].shape(), shape));
            }
            plain(ins[0].clone().reshaped(shape)?)
        }
        Primitive::Sum(axis) | Primitive::Mean(axis) | Primitive::L2Norm(axis) => {
            let x = ins[0];
            let shape = reduced_shape(x.shape(), *axis, op)?;
            let (outer, len, inner) = match axis {
                Some(a) => split_axis(x.shape(), *a),
                None => (1, x.len(), 1),
            };
            if len == 0 {
                return Err(TensorError::invalid(op, "reduction over an empty axis"));
            }
            let mut out = vec![T::zero(); outer * inner];
            let square = matches!(prim, Primitive::L2Norm(_));
            for o in 0..outer {
                for j in 0..len {
                    let row = &x.data()[(o * len + j) * inner..][..inner];
                    for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                        *acc = *acc + if square { v * v } else { v };
                    }
                }
            }
            match prim {
                Primitive::Mean(_) => {
                    let d = T::from_f64(len as f64);
                    out.iter_mut().for_each(|v| *v = *v / d);
                }
                Primitive::L2Norm(_) => out.iter_mut().for_each(|v| *v = v.sqrt()),
                _ => {}
            }
            plain(Tensor::new(&shape, out)?)
        }
        Primitive::SoftmaxCrossEntropy(targets) => {
            let x = ins[0];
            if x.shape().len() != 2 || x.shape()[0] != targets.len() || x.shape()[0] == 0 {
                return Err(TensorError::invalid(
                    op,
                    format!("logits {:?} vs {} targets", x.shape(), targets.len()),
                ));
            }
            let (b, c) = (x.shape()[0], x.shape()[1]);
            let mut probs = vec![T::zero(); b * c];
            let mut loss = 0.0;
            for (i, &t) in targets.iter().enumerate() {
                if t >= c {
                    return Err(TensorError::invalid(op, format!("target {t} >= {c} classes")));
                }
                let row = x.row(i);
                let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let mut z = T::zero();
                for (p, &v) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                    *p = (v - max).exp();
                    z = z + *p;
                }
                probs[i * c..(i + 1) * c].iter_mut().for_each(|p| *p = *p / z);
                loss += (z.ln() + max - row[t]).as_f64();
            }
            Ok((
                Tensor::scalar(T::from_f64(loss / b as f64)),
                Saved::Probs(probs),
            ))
        }
        Primitive::Exp => plain(ins[0].map(|v| v.exp())),
        Primitive::Log => plain(ins[0].map(|v| v.ln())),
        Primitive::Gather(rows) => {
            let x = ins[0];
            if x.shape().is_empty() {
                return Err(TensorError::invalid(op, "cannot gather from a scalar"));
            }
            let n = x.shape()[0];
            let width = x.len() / n.max(1);
            let mut out = Vec::with_capacity(rows.len() * width);
            for &r in rows {
                if r >= n {
                    return Err(TensorError::invalid(op, format!("row {r} out of {n}")));
                }
                out.extend_from_slice(&x.data()[r * width..(r + 1) * width]);
            }
            let mut shape = x.shape().to_vec();
            shape[0] = rows.len();
            plain(Tensor::new(&shape, out)?)
        }
        Primitive::Narrow { axis, start, len } => {
            let x = ins[0];
            if *axis >= x.shape().len() || start + len > x.shape()[*axis] {
                return Err(TensorError::invalid(
                    op,
                    format!("[{start}, {}) along axis {axis} of {:?}", start + len, x.shape()),
                ));
            }
            let (outer, extent, inner) = split_axis(x.shape(), *axis);
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                out.extend_from_slice(&x.data()[(o * extent + start) * inner..][..len * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[*axis] = *len;
            plain(Tensor::new(&shape, out)?)
        }
    }
}

fn backward<T: Scalar>(
    prim: &Primitive,
    ins: &[&Tensor<T>],
    out: &Tensor<T>,
    saved: &Saved<T>,
    g: &Tensor<T>,
    want: &[bool],
) -> Result<Vec<Option<Tensor<T>>>> {
    let zero = T::zero();
    let grads = match prim {
        Primitive::MatMul => {
            let (a, b) = (ins[0], ins[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let da = want[0].then(|| {
                let mut d = vec![zero; m * k];
                gemm(m, n, k, g.data(), false, b.data(), true, zero, &mut d);
                Tensor::new(a.shape(), d)
            });
            let db = want[1].then(|| {
                let mut d = vec![zero; k * n];
                gemm(k, m, n, a.data(), true, g.data(), false, zero, &mut d);
                Tensor::new(b.shape(), d)
            });
            vec![da.transpose()?, db.transpose()?]
        }
        Primitive::Conv2d => {
            let Saved::Cols(cols) = saved else {
                return Err(TensorError::invalid("conv2d", "missing saved patches"));
            };
            let (x, w) = (ins[0], ins[1]);
            let xs = x.shape();
            let (dx, dw, db) = kernels::conv2d_backward(
                g.data(),
                cols,
                w.data(),
                xs[0],
                xs[1],
                xs[2],
                xs[3],
                w.shape()[0],
                want[0],
            );
            vec![
                dx.map(|d| Tensor::new(xs, d)).transpose()?,
                Some(Tensor::new(w.shape(), dw)?),
                Some(Tensor::new(ins[2].shape(), db)?),
            ]
        }
        Primitive::MaxPool2d => {
            let Saved::Indices(arg) = saved else {
                return Err(TensorError::invalid("maxpool2d", "missing saved argmax"));
            };
            let mut d = Tensor::zeros(ins[0].shape());
            let dd = d.data_mut();
            for (&i, &gv) in arg.iter().zip(g.data()) {
                dd[i] = dd[i] + gv;
            }
            vec![Some(d)]
        }
        Primitive::LeakyRelu(slope) => {
            let s = T::from_f64(*slope);
            let data = ins[0]
                .data()
                .iter()
                .zip(g.data())
                .map(|(&x, &gv)| if x > zero { gv } else { gv * s })
                .collect();
            vec![Some(Tensor::new(ins[0].shape(), data)?)]
        }
        Primitive::Add | Primitive::Sub | Primitive::Mul => {
            let (a, b) = (ins[0], ins[1]);
            let inner = b.len().max(1);
            let da = want[0].then(|| match prim {
                Primitive::Mul => {
                    let mut d = g.data().to_vec();
                    for chunk in d.chunks_exact_mut(inner) {
                        for (o, &bv) in chunk.iter_mut().zip(b.data()) {
                            *o = *o * bv;
                        }
                    }
                    Tensor::new(a.shape(), d)
                }
                _ => Ok(g.clone()),
            });
            let db = want[1].then(|| {
                let mut d = vec![zero; b.len()];
                for (ci, chunk) in g.data().chunks_exact(inner).enumerate() {
                    let arow = &a.data()[ci * inner..(ci + 1) * inner];
                    for ((acc, &gv), &av) in d.iter_mut().zip(chunk).zip(arow) {
                        *acc = match prim {
                            Primitive::Add => *acc + gv,
                            Primitive::Sub => *acc - gv,
                            _ => *acc + gv * av,
                        };
                    }
                }
                Tensor::new(b.shape(), d)
            });
            vec![da.transpose()?, db.transpose()?]
        }
        Primitive::Scale(s) => {
            let s = T::from_f64(*s);
            vec![Some(g.map(|v| v * s))]
        }
        Primitive::AddScalar(_) | Primitive::Reshape(_) => {
            vec![Some(g.clone().reshaped(ins[0].shape())?)]
        }
        Primitive::Concat(axis) => {
            let (outer, total, inner) = split_axis(out.shape(), *axis);
            let mut offset = 0;
            let mut res = Vec::with_capacity(ins.len());
            for (t, &w) in ins.iter().zip(want) {
                let len = t.shape()[*axis];
                if w {
                    let mut d = Vec::with_capacity(t.len());
                    for o in 0..outer {
                        d.extend_from_slice(&g.data()[(o * total + offset) * inner..][..len * inner]);
                    }
                    res.push(Some(Tensor::new(t.shape(), d)?));
                } else {
                    res.push(None);
                }
                offset += len;
            }
            res
        }
        Primitive::Sum(axis) | Primitive::Mean(axis) | Primitive::L2Norm(axis) => {
            let x = ins[0];
            let (outer, len, inner) = match axis {
                Some(a) => split_axis(x.shape(), *a),
                None => (1, x.len(), 1),
            };
            let mut d = vec![zero; x.len()];
            let mean_div = T::from_f64(len as f64);
            for o in 0..outer {
                for j in 0..len {
                    let base = (o * len + j) * inner;
                    for i in 0..inner {
                        let gv = g.data()[o * inner + i];
                        d[base + i] = match prim {
                            Primitive::Sum(_) => gv,
                            Primitive::Mean(_) => gv / mean_div,
                            _ => {
                                let norm = out.data()[o * inner + i];
                                // Subgradient 0 at the origin.
                                if norm > zero {
                                    gv * x.data()[base + i] / norm
                                } else {
                                    zero
                                }
                            }
                        };
                    }
                }
            }
            vec![Some(Tensor::new(x.shape(), d)?)]
        }
        Primitive::SoftmaxCrossEntropy(targets) => {
            let Saved::Probs(probs) = saved else {
                return Err(TensorError::invalid("softmax_cross_entropy", "missing probabilities"));
            };
            let (b, c) = (ins[0].shape()[0], ins[0].shape()[1]);
            let scale = g.item() / T::from_f64(b as f64);
            let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
            for (i, &t) in targets.iter().enumerate() {
                d[i * c + t] = d[i * c + t] - scale;
            }
            vec![Some(Tensor::new(ins[0].shape(), d)?)]
        }
        Primitive::Exp => {
            let data = out.data().iter().zip(g.data()).map(|(&y, &gv)| y * gv).collect();
            vec![Some(Tensor::new(out.shape(), data)?)]
        }
        Primitive::Log => {
            let data = ins[0].data().iter().zip(g.data()).map(|(&x, &gv)| gv / x).collect();
            vec![Some(Tensor::new(out.shape(), data)?)]
        }
        Primitive::Gather(rows) => {
            let x = ins[0];
            let width = x.len() / x.shape()[0].max(1);
            let mut d = Tensor::zeros(x.shape());
            let dd = d.data_mut();
            for (k, &r) in rows.iter().enumerate() {
                for (acc, &gv) in dd[r * width..(r + 1) * width]
                    .iter_mut()
                    .zip(&g.data()[k * width..(k + 1) * width])
                {
                    *acc = *acc + gv;
                }
            }
            vec![Some(d)]
        }
        Primitive::Narrow { axis, start, len } => {
            let x = ins[0];
            let (outer, extent, inner) = split_axis(x.shape(), *axis);
            let mut d = Tensor::zeros(x.shape());
            let dd = d.data_mut();
            for o in 0..outer {
                dd[(o * extent + start) * inner..][..len * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(d)]
        }
    };
    Ok(grads)
}
