//! Local gradient rules, one arm per [`Op`].

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::kernels::{self, broadcast_strides, for_each_broadcast};
use super::{Node, Op, Var};

fn slot<'a>(nodes: &[Node], pass: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let n = node.value.len();
    Some(pass[v.0].get_or_insert_with(|| vec![0.0; n]))
}

/// Accumulates `f(out_index, a_index, b_index)` contributions for a broadcast binary op.
fn binary(
    nodes: &[Node],
    out: Var,
    a: Var,
    b: Var,
    grad: &[f64],
    pass: &mut [Option<Vec<f64>>],
    da: impl Fn(f64, f64, f64) -> f64,
    db: impl Fn(f64, f64, f64) -> f64,
) {
    let (na, nb) = (&nodes[a.0], &nodes[b.0]);
    let out_shape = &nodes[out.0].shape;
    let (va, vb) = (&na.value, &nb.value);
    if na.shape == nb.shape {
        if let Some(ga) = slot(nodes, pass, a) {
            for i in 0..grad.len() {
                ga[i] += da(grad[i], va[i], vb[i]);
            }
        }
        if let Some(gb) = slot(nodes, pass, b) {
            for i in 0..grad.len() {
                gb[i] += db(grad[i], va[i], vb[i]);
            }
        }
        return;
    }
    let sa = broadcast_strides(&na.shape, out_shape);
    let sb = broadcast_strides(&nb.shape, out_shape);
    if let Some(ga) = slot(nodes, pass, a) {
        for_each_broadcast(out_shape, &sa, &sb, |o, ia, ib| {
            ga[ia] += da(grad[o], va[ia], vb[ib])
        });
    }
    if let Some(gb) = slot(nodes, pass, b) {
        for_each_broadcast(out_shape, &sa, &sb, |o, ia, ib| {
            gb[ib] += db(grad[o], va[ia], vb[ib])
        });
    }
}

fn unary(
    nodes: &[Node],
    out: Var,
    x: Var,
    grad: &[f64],
    pass: &mut [Option<Vec<f64>>],
    f: impl Fn(f64, f64, f64) -> f64,
) {
    let (xv, yv) = (&nodes[x.0].value, &nodes[out.0].value);
    if let Some(gx) = slot(nodes, pass, x) {
        for i in 0..grad.len() {
            gx[i] += f(grad[i], xv[i], yv[i]);
        }
    }
}

pub(super) fn propagate(nodes: &[Node], out: Var, grad: &[f64], pass: &mut [Option<Vec<f64>>]) {
    let node = &nodes[out.0];
    match &node.op {
        Op::Leaf => {}
        &Op::Add(a, b) => binary(nodes, out, a, b, grad, pass, |g, _, _| g, |g, _, _| g),
        &Op::Sub(a, b) => binary(nodes, out, a, b, grad, pass, |g, _, _| g, |g, _, _| -g),
        &Op::Mul(a, b) => binary(nodes, out, a, b, grad, pass, |g, _, y| g * y, |g, x, _| g * x),
        &Op::Div(a, b) => binary(
            nodes,
            out,
            a,
            b,
            grad,
            pass,
            |g, _, y| g / y,
            |g, x, y| -g * x / (y * y),
        ),
        &Op::Affine(x, scale) => unary(nodes, out, x, grad, pass, |g, _, _| g * scale),
        &Op::Exp(x) => unary(nodes, out, x, grad, pass, |g, _, y| g * y),
        &Op::Log(x) => unary(nodes, out, x, grad, pass, |g, x, _| g / x),
        &Op::Sigmoid(x) => unary(nodes, out, x, grad, pass, |g, _, y| g * y * (1.0 - y)),
        &Op::Tanh(x) => unary(nodes, out, x, grad, pass, |g, _, y| g * (1.0 - y * y)),
        &Op::Elu(x) => unary(nodes, out, x, grad, pass, |g, x, y| {
            if x > 0.0 {
                g
            } else {
                g * (y + 1.0)
            }
        }),
        &Op::ClampMin(x, min) => {
            unary(nodes, out, x, grad, pass, |g, x, _| if x > min { g } else { 0.0 })
        }
        &Op::MatMul(a, b) => {
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            let (m, k, n) = (na.shape[0], na.shape[1], nb.shape[1]);
            if let Some(ga) = slot(nodes, pass, a) {
                kernels::gemm(m, n, k, grad, false, &nb.value, true, ga, true);
            }
            if let Some(gb) = slot(nodes, pass, b) {
                kernels::gemm(k, m, n, &na.value, true, grad, false, gb, true);
            }
        }
        &Op::BatchMatMul { a, b, transpose_b } => {
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            let (g, m, k) = (na.shape[0], na.shape[1], na.shape[2]);
            let n = node.shape[2];
            let (sa, sb, so) = (m * k, k * n, m * n);
            if let Some(ga) = slot(nodes, pass, a) {
                for i in 0..g {
                    let go = &grad[i * so..(i + 1) * so];
                    let bv = &nb.value[i * sb..(i + 1) * sb];
                    // dA = dC * op(B)^T
                    kernels::gemm(m, n, k, go, false, bv, !transpose_b, &mut ga[i * sa..(i + 1) * sa], true);
                }
            }
            if let Some(gb) = slot(nodes, pass, b) {
                for i in 0..g {
                    let go = &grad[i * so..(i + 1) * so];
                    let av = &na.value[i * sa..(i + 1) * sa];
                    let dst = &mut gb[i * sb..(i + 1) * sb];
                    if transpose_b {
                        // B stored [n, k]: dB = dC^T * A
                        kernels::gemm(n, m, k, go, true, av, false, dst, true);
                    } else {
                        kernels::gemm(k, m, n, av, true, go, false, dst, true);
                    }
                }
            }
        }
        Op::Concat(xs) => {
            let total = *node.shape.last().unwrap();
            let rows = grad.len() / total.max(1);
            let mut offset = 0;
            for &x in xs {
                let w = *nodes[x.0].shape.last().unwrap();
                if let Some(gx) = slot(nodes, pass, x) {
                    for r in 0..rows {
                        gx[r * w..(r + 1) * w]
                            .iter_mut()
                            .zip(&grad[r * total + offset..r * total + offset + w])
                            .for_each(|(d, s)| *d += s);
                    }
                }
                offset += w;
            }
        }
        &Op::SliceLast { x, start } => {
            let w = *nodes[x.0].shape.last().unwrap();
            let len = *node.shape.last().unwrap();
            let rows = grad.len() / len.max(1);
            if let Some(gx) = slot(nodes, pass, x) {
                for r in 0..rows {
                    gx[r * w + start..r * w + start + len]
                        .iter_mut()
                        .zip(&grad[r * len..(r + 1) * len])
                        .for_each(|(d, s)| *d += s);
                }
            }
        }
        &Op::Sum { x, axis } | &Op::Mean { x, axis } => {
            let (outer, len, inner) = kernels::split_axis(&nodes[x.0].shape, axis);
            let scale = match node.op {
                Op::Mean { .. } if len > 0 => 1.0 / len as f64,
                _ => 1.0,
            };
            if let Some(gx) = slot(nodes, pass, x) {
                for o in 0..outer {
                    let src = &grad[o * inner..(o + 1) * inner];
                    for a in 0..len {
                        gx[(o * len + a) * inner..(o * len + a + 1) * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(d, s)| *d += s * scale);
                    }
                }
            }
        }
        &Op::SumAll(x) => {
            if let Some(gx) = slot(nodes, pass, x) {
                gx.iter_mut().for_each(|d| *d += grad[0]);
            }
        }
        &Op::Softmax(x) => {
            let w = *node.shape.last().unwrap();
            let y = &node.value;
            if let Some(gx) = slot(nodes, pass, x) {
                for r in 0..grad.len() / w.max(1) {
                    let (yr, gr) = (&y[r * w..(r + 1) * w], &grad[r * w..(r + 1) * w]);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..w {
                        gx[r * w + c] += yr[c] * (gr[c] - dot);
                    }
                }
            }
        }
        &Op::LogSoftmax(x) => {
            let w = *node.shape.last().unwrap();
            let y = &node.value;
            if let Some(gx) = slot(nodes, pass, x) {
                for r in 0..grad.len() / w.max(1) {
                    let gr = &grad[r * w..(r + 1) * w];
                    let total: f64 = gr.iter().sum();
                    for c in 0..w {
                        gx[r * w + c] += gr[c] - y[r * w + c].exp() * total;
                    }
                }
            }
        }
        Op::IndexSelect { x, index } => {
            let w = grad.len() / index.len().max(1);
            if let Some(gx) = slot(nodes, pass, *x) {
                for (row, &i) in index.iter().enumerate() {
                    gx[i * w..(i + 1) * w]
                        .iter_mut()
                        .zip(&grad[row * w..(row + 1) * w])
                        .for_each(|(d, s)| *d += s);
                }
            }
        }
        Op::ScatterAdd { x, index } => {
            let w = nodes[x.0].value.len() / index.len().max(1);
            if let Some(gx) = slot(nodes, pass, *x) {
                for (row, &i) in index.iter().enumerate() {
                    gx[row * w..(row + 1) * w]
                        .iter_mut()
                        .zip(&grad[i * w..(i + 1) * w])
                        .for_each(|(d, s)| *d += s);
                }
            }
        }
        &Op::Reshape(x) => {
            if let Some(gx) = slot(nodes, pass, x) {
                gx.iter_mut().zip(grad).for_each(|(d, s)| *d += s);
            }
        }
        &Op::BroadcastTo(x) => {
            let sx = broadcast_strides(&nodes[x.0].shape, &node.shape);
            let zero = vec![0; node.shape.len()];
            if let Some(gx) = slot(nodes, pass, x) {
                for_each_broadcast(&node.shape, &sx, &zero, |o, i, _| gx[i] += grad[o]);
            }
        }
    }
}
