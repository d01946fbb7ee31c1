use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::kernels::{self, broadcast_shapes, broadcast_strides, for_each_broadcast, numel};
use super::{Op, Result, Tape, TensorError, Var};

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

impl Tape {
    fn binary(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        let requires_grad = na.requires_grad || nb.requires_grad;
        if na.shape == nb.shape {
            let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
            let shape = na.shape.clone();
            return Ok(self.push(shape, value, op, requires_grad));
        }
        let out = broadcast_shapes(&na.shape, &nb.shape)
            .ok_or_else(|| mismatch(op_name, &na.shape, &nb.shape))?;
        let sa = broadcast_strides(&na.shape, &out);
        let sb = broadcast_strides(&nb.shape, &out);
        let mut value = vec![0.0; numel(&out)];
        let (va, vb) = (&na.value, &nb.value);
        for_each_broadcast(&out, &sa, &sb, |o, ia, ib| value[o] = f(va[ia], vb[ib]));
        Ok(self.push(out, value, op, requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(x);
        let value = n.value.iter().map(|&v| f(v)).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, value, op, rg)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.unary(x, |v| scale * v + shift, Op::Affine(x, scale))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 0.0)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.affine(x, c, 0.0)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.value(x).iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(TensorError::NumericalDomain { op: "log" });
        }
        Ok(self.unary(x, f64::ln, Op::Log(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// ELU with alpha = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, elu, Op::Elu(x))
    }

    pub fn clamp_min(&mut self, x: Var, min: f64) -> Var {
        self.unary(x, |v| v.max(min), Op::ClampMin(x, min))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.shape.len() != 2 || nb.shape.len() != 2 || na.shape[1] != nb.shape[0] {
            return Err(mismatch("matmul", &na.shape, &nb.shape));
        }
        let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
        let mut value = vec![0.0; m * n];
        kernels::gemm(m, k, n, &na.value, false, &nb.value, false, &mut value, false);
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(vec![m, n], value, Op::MatMul(a, b), rg))
    }

    /// `[g, m, k] x [g, k, n] -> [g, m, n]`; with `transpose_b`, `b` is `[g, n, k]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        let err = || mismatch("batch_matmul", &na.shape, &nb.shape);
        if na.shape.len() != 3 || nb.shape.len() != 3 || na.shape[0] != nb.shape[0] {
            return Err(err());
        }
        let (g, m, k) = (na.shape[0], na.shape[1], na.shape[2]);
        let (bk, n) = if transpose_b {
            (nb.shape[2], nb.shape[1])
        } else {
            (nb.shape[1], nb.shape[2])
        };
        if bk != k {
            return Err(err());
        }
        let mut value = vec![0.0; g * m * n];
        for i in 0..g {
            kernels::gemm(
                m,
                k,
                n,
                &na.value[i * m * k..(i + 1) * m * k],
                false,
                &nb.value[i * k * n..(i + 1) * k * n],
                transpose_b,
                &mut value[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(
            vec![g, m, n],
            value,
            Op::BatchMatMul { a, b, transpose_b },
            rg,
        ))
    }

    /// Concatenates along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs.first().ok_or(TensorError::Invalid {
            op: "concat",
            reason: "no operands",
        })?;
        let lead = {
            let s = self.shape(*first);
            if s.is_empty() {
                return Err(TensorError::Invalid {
                    op: "concat",
                    reason: "scalar operand",
                });
            }
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(mismatch("concat", self.shape(*first), s));
            }
            widths.push(s[s.len() - 1]);
        }
        let rows = numel(&lead);
        let total: usize = widths.iter().sum();
        let mut value = vec![0.0; rows * total];
        let mut offset = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let src = self.value(x);
            for r in 0..rows {
                value[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let rg = xs.iter().any(|&x| self.requires_grad(x));
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(shape, value, Op::Concat(xs.to_vec()), rg))
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.node(x);
        let Some(&w) = n.shape.last() else {
            return Err(TensorError::Invalid {
                op: "slice_last",
                reason: "scalar operand",
            });
        };
        if start + len > w {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_last",
                index: start + len,
                len: w,
            });
        }
        let rows = n.value.len() / w.max(1);
        let mut value = Vec::with_capacity(rows * len);
        for r in 0..rows {
            value.extend_from_slice(&n.value[r * w + start..r * w + start + len]);
        }
        let mut shape = n.shape.clone();
        *shape.last_mut().unwrap() = len;
        let rg = n.requires_grad;
        Ok(self.push(shape, value, Op::SliceLast { x, start }, rg))
    }

    fn check_axis(&self, op: &'static str, x: Var, axis: usize) -> Result<()> {
        if axis >= self.shape(x).len() {
            return Err(TensorError::Invalid {
                op,
                reason: "axis out of range",
            });
        }
        Ok(())
    }

    fn reduce_axis(&mut self, x: Var, axis: usize, mean: bool) -> Var {
        let n = self.node(x);
        let (outer, len, inner) = kernels::split_axis(&n.shape, axis);
        let mut value = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &n.value[(o * len + a) * inner..(o * len + a + 1) * inner];
                value[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, s)| *d += s);
            }
        }
        if mean && len > 0 {
            let inv = 1.0 / len as f64;
            value.iter_mut().for_each(|v| *v *= inv);
        }
        let mut shape = n.shape.clone();
        shape.remove(axis);
        let rg = n.requires_grad;
        let op = if mean {
            Op::Mean { x, axis }
        } else {
            Op::Sum { x, axis }
        };
        self.push(shape, value, op, rg)
    }

    /// Sum over `axis`, removing it.
    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("sum", x, axis)?;
        Ok(self.reduce_axis(x, axis, false))
    }

    /// Mean over `axis`, removing it.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("mean", x, axis)?;
        Ok(self.reduce_axis(x, axis, true))
    }

    /// Sum of all elements as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let n = self.node(x);
        let s = n.value.iter().sum();
        let rg = n.requires_grad;
        self.push(Vec::new(), vec![s], Op::SumAll(x), rg)
    }

    fn last_axis_rows(&self, op: &'static str, x: Var) -> Result<(usize, usize)> {
        let n = self.node(x);
        let w = *n.shape.last().ok_or(TensorError::Invalid {
            op,
            reason: "scalar operand",
        })?;
        if n.value.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NumericalDomain { op });
        }
        Ok((n.value.len() / w.max(1), w))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (rows, w) = self.last_axis_rows("softmax", x)?;
        let n = self.node(x);
        let mut value = n.value.clone();
        for r in 0..rows {
            let row = &mut value[r * w..(r + 1) * w];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, value, Op::Softmax(x), rg))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (rows, w) = self.last_axis_rows("log_softmax", x)?;
        let n = self.node(x);
        let mut value = n.value.clone();
        for r in 0..rows {
            let row = &mut value[r * w..(r + 1) * w];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, value, Op::LogSoftmax(x), rg))
    }

    /// Gathers rows (axis 0) in the order given by `index`.
    pub fn index_select(&mut self, x: Var, index: &Arc<[usize]>) -> Result<Var> {
        let n = self.node(x);
        let rows = *n.shape.first().ok_or(TensorError::Invalid {
            op: "index_select",
            reason: "scalar operand",
        })?;
        let w = if rows == 0 { 0 } else { n.value.len() / rows };
        let mut value = Vec::with_capacity(index.len() * w);
        for &i in index.iter() {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "index_select",
                    index: i,
                    len: rows,
                });
            }
            value.extend_from_slice(&n.value[i * w..(i + 1) * w]);
        }
        let mut shape = n.shape.clone();
        shape[0] = index.len();
        let rg = n.requires_grad;
        Ok(self.push(
            shape,
            value,
            Op::IndexSelect {
                x,
                index: index.clone(),
            },
            rg,
        ))
    }

    /// Adds row `m` of `x` into row `index[m]` of a zero tensor with `rows` rows.
    pub fn scatter_add(&mut self, x: Var, index: &Arc<[usize]>, rows: usize) -> Result<Var> {
        let n = self.node(x);
        let m = *n.shape.first().ok_or(TensorError::Invalid {
            op: "scatter_add",
            reason: "scalar operand",
        })?;
        if m != index.len() {
            return Err(mismatch("scatter_add", &n.shape, &[index.len()]));
        }
        let w = if m == 0 { 0 } else { n.value.len() / m };
        let mut value = vec![0.0; rows * w];
        for (src, &dst) in index.iter().enumerate() {
            if dst >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "scatter_add",
                    index: dst,
                    len: rows,
                });
            }
            value[dst * w..(dst + 1) * w]
                .iter_mut()
                .zip(&n.value[src * w..(src + 1) * w])
                .for_each(|(d, s)| *d += s);
        }
        let mut shape = n.shape.clone();
        shape[0] = rows;
        let rg = n.requires_grad;
        Ok(self.push(
            shape,
            value,
            Op::ScatterAdd {
                x,
                index: index.clone(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = self.node(x);
        if numel(shape) != n.value.len() {
            return Err(mismatch("reshape", &n.shape, shape));
        }
        let (value, rg) = (n.value.clone(), n.requires_grad);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), rg))
    }

    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = self.node(x);
        match broadcast_shapes(&n.shape, shape) {
            Some(out) if out == shape => {}
            _ => return Err(mismatch("broadcast_to", &n.shape, shape)),
        }
        let sx = broadcast_strides(&n.shape, shape);
        let zero = vec![0; shape.len()];
        let mut value = vec![0.0; numel(shape)];
        for_each_broadcast(shape, &sx, &zero, |o, i, _| value[o] = n.value[i]);
        let rg = n.requires_grad;
        Ok(self.push(shape.to_vec(), value, Op::BroadcastTo(x), rg))
    }
}
