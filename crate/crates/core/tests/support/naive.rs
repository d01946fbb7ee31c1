//! Straight-line loop re-implementations of the model, reading parameters by
//! name. Shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use nri_core::config::SequenceKind;
use nri_core::params::ParamStore;

pub type Rows = Vec<Vec<f64>>;

pub fn param<'a>(store: &'a ParamStore, name: &str) -> &'a [f64] {
    let id = store.find(name).unwrap_or_else(|| panic!("missing {name}"));
    &store[id].data
}

fn shape(store: &ParamStore, name: &str) -> Vec<usize> {
    store[store.find(name).unwrap()].shape.clone()
}

pub fn linear(store: &ParamStore, name: &str, x: &[f64], bias: bool) -> Vec<f64> {
    let w = param(store, &format!("{name}.W"));
    let s = shape(store, &format!("{name}.W"));
    let (fan_in, fan_out) = (s[0], s[1]);
    assert_eq!(x.len(), fan_in);
    let mut y = vec![0.0; fan_out];
    for o in 0..fan_out {
        let mut acc = 0.0;
        for i in 0..fan_in {
            acc += x[i] * w[i * fan_out + o];
        }
        if bias {
            acc += param(store, &format!("{name}.b"))[o];
        }
        y[o] = acc;
    }
    y
}

pub fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp() - 1.0
    }
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn mlp(store: &ParamStore, name: &str, x: &[f64], final_elu: bool) -> Vec<f64> {
    let h: Vec<f64> = linear(store, &format!("{name}.1"), x, true).into_iter().map(elu).collect();
    let y = linear(store, &format!("{name}.2"), &h, true);
    if final_elu {
        y.into_iter().map(elu).collect()
    } else {
        y
    }
}

pub fn gru(store: &ParamStore, name: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let hd = h.len();
    let gate = |g: &str, hin: &[f64]| -> Vec<f64> {
        let w = param(store, &format!("{name}.W_{g}"));
        let u = param(store, &format!("{name}.U_{g}"));
        let b = param(store, &format!("{name}.b_{g}"));
        (0..hd)
            .map(|o| {
                let mut acc = b[o];
                for (i, xi) in x.iter().enumerate() {
                    acc += xi * w[i * hd + o];
                }
                for (i, hi) in hin.iter().enumerate() {
                    acc += hi * u[i * hd + o];
                }
                acc
            })
            .collect()
    };
    let z: Vec<f64> = gate("z", h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate("r", h).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = gate("h", &rh).into_iter().map(f64::tanh).collect();
    (0..hd).map(|o| (1.0 - z[o]) * cand[o] + z[o] * h[o]).collect()
}

/// Context vectors of one query against `keys`/`values` with an explicit softmax loop.
pub fn attend(query: &[f64], keys: &Rows, values: &Rows) -> Vec<f64> {
    let scale = 1.0 / (query.len() as f64).sqrt();
    let scores: Vec<f64> = keys
        .iter()
        .map(|k| k.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() * scale)
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut out = vec![0.0; values[0].len()];
    for (w, v) in exps.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += w / total * x;
        }
    }
    out
}

pub fn sequence(store: &ParamStore, name: &str, kind: SequenceKind, xs: &Rows) -> Rows {
    match kind {
        SequenceKind::Identity => xs.clone(),
        SequenceKind::Gru => {
            let mut h = vec![0.0; xs[0].len()];
            xs.iter()
                .map(|x| {
                    h = gru(store, name, x, &h);
                    h.clone()
                })
                .collect()
        }
        SequenceKind::SelfAttention => {
            let q: Rows = xs.iter().map(|x| linear(store, &format!("{name}.q"), x, false)).collect();
            let k: Rows = xs.iter().map(|x| linear(store, &format!("{name}.k"), x, false)).collect();
            let v: Rows = xs.iter().map(|x| linear(store, &format!("{name}.v"), x, false)).collect();
            q.iter().map(|qi| attend(qi, &k, &v)).collect()
        }
    }
}

/// Receiver-major edge list of the complete graph on `n` nodes.
pub fn edge_list(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

pub struct EncoderSpec {
    pub kind: SequenceKind,
    pub use_intra: bool,
    pub use_inter: bool,
}

/// Edge embeddings of one sample; `seqs[i]` is node `i`'s flattened sequence.
pub fn encode_base(store: &ParamStore, seqs: &Rows) -> Rows {
    let n = seqs.len();
    let h1: Rows = seqs.iter().map(|s| mlp(store, "encoder.f_emb", s, true)).collect();
    let hd = h1[0].len();
    let mut h2 = Vec::new();
    for j in 0..n {
        let mut agg = vec![0.0; hd];
        for i in 0..n {
            if i == j {
                continue;
            }
            let e = mlp(store, "encoder.f_e1", &[h1[i].clone(), h1[j].clone()].concat(), true);
            for (a, b) in agg.iter_mut().zip(&e) {
                *a += b;
            }
        }
        h2.push(mlp(store, "encoder.f_v1", &agg, true));
    }
    edge_list(n)
        .into_iter()
        .map(|(i, j)| mlp(store, "encoder.f_e2", &[h2[i].clone(), h2[j].clone()].concat(), true))
        .collect()
}

/// Per-edge logits of one sample.
pub fn encoder_logits(store: &ParamStore, spec: &EncoderSpec, seqs: &Rows) -> Rows {
    let n = seqs.len();
    let edges = edge_list(n);
    let h2 = encode_base(store, seqs);
    let mut e1 = vec![Vec::new(); edges.len()];
    for j in 0..n {
        let ids: Vec<usize> = (0..edges.len()).filter(|&p| edges[p].1 == j).collect();
        let incoming: Rows = ids.iter().map(|&p| h2[p].clone()).collect();
        let out = if spec.use_intra {
            sequence(store, "encoder.g_intra", spec.kind, &incoming)
        } else {
            incoming
        };
        for (p, v) in ids.into_iter().zip(out) {
            e1[p] = v;
        }
    }
    let e2 = spec.use_inter.then(|| {
        let pooled: Rows = (0..n)
            .map(|j| {
                let ids: Vec<usize> = (0..edges.len()).filter(|&p| edges[p].1 == j).collect();
                let mut m = vec![0.0; e1[0].len()];
                for &p in &ids {
                    for (a, b) in m.iter_mut().zip(&e1[p]) {
                        *a += b / ids.len() as f64;
                    }
                }
                m
            })
            .collect();
        sequence(store, "encoder.g_inter", spec.kind, &pooled)
    });
    edges
        .iter()
        .enumerate()
        .map(|(p, &(_, j))| {
            let input = match &e2 {
                Some(e2) => [e1[p].clone(), e2[j].clone()].concat(),
                None => e1[p].clone(),
            };
            mlp(store, "encoder.fuse", &input, false)
        })
        .collect()
}

pub struct DecoderState {
    pub edge_h: Rows,
    pub node_h: Rows,
    pub history: Vec<Rows>,
}

impl DecoderState {
    pub fn zeros(n: usize, hidden: usize, attention: bool) -> Self {
        let edges = n * (n - 1);
        Self {
            edge_h: vec![vec![0.0; hidden]; edges],
            node_h: vec![vec![0.0; hidden]; n],
            history: if attention { vec![vec![vec![0.0; hidden]; n]] } else { Vec::new() },
        }
    }
}

/// One decoder step for one sample: `x[i]` states, `z[p]` relation weights per edge.
pub fn decoder_step(store: &ParamStore, use_st: bool, x: &Rows, z: &Rows, state: &mut DecoderState) -> Rows {
    let n = x.len();
    let edges = edge_list(n);
    let k = z[0].len();
    let mut new_edge = Vec::new();
    for (p, &(i, j)) in edges.iter().enumerate() {
        let pair = [x[i].clone(), x[j].clone()].concat();
        let mut e_hat: Vec<f64> = Vec::new();
        for t in 0..k {
            let m = mlp(store, &format!("decoder.f_e{t}"), &pair, true);
            if e_hat.is_empty() {
                e_hat = vec![0.0; m.len()];
            }
            for (a, b) in e_hat.iter_mut().zip(&m) {
                *a += z[p][t] * b;
            }
        }
        new_edge.push(if use_st {
            gru(store, "decoder.s_edge", &e_hat, &state.edge_h[p])
        } else {
            e_hat
        });
    }
    let mut new_node = Vec::new();
    let mut mu = Vec::new();
    for j in 0..n {
        let mut msg = vec![0.0; new_edge[0].len()];
        for (p, &(_, r)) in edges.iter().enumerate() {
            if r == j {
                for (a, b) in msg.iter_mut().zip(&new_edge[p]) {
                    *a += b;
                }
            }
        }
        let input = [msg, x[j].clone()].concat();
        let h = if use_st {
            gru(store, "decoder.s_node", &input, &state.node_h[j])
        } else {
            input
        };
        let readout = if state.history.is_empty() {
            h.clone()
        } else {
            let keys: Rows = state.history.iter().map(|hs| linear(store, "decoder.att.k", &hs[j], false)).collect();
            let vals: Rows = state.history.iter().map(|hs| linear(store, "decoder.att.v", &hs[j], false)).collect();
            let ctx = attend(&h, &keys, &vals);
            h.iter().zip(&ctx).map(|(a, b)| a + b).collect()
        };
        let delta = mlp(store, "decoder.f_v", &readout, false);
        mu.push(x[j].iter().zip(&delta).map(|(a, b)| a + b).collect());
        new_node.push(h);
    }
    state.edge_h = new_edge;
    if !state.history.is_empty() {
        state.history.push(new_node.clone());
    }
    state.node_h = new_node;
    mu
}

/// Rollout with ground truth fed every `segment` steps; returns predictions for steps `1..T`.
pub fn rollout(store: &ParamStore, use_st: bool, attention: bool, xs: &[Rows], z: &Rows, segment: usize) -> Vec<Rows> {
    let n = xs[0].len();
    let h = shape(store, "decoder.f_e0.2.W")[1];
    let mut state = DecoderState::zeros(n, h, attention);
    let mut preds: Vec<Rows> = Vec::new();
    for t in 0..xs.len() - 1 {
        let input = if t % segment == 0 { xs[t].clone() } else { preds[t - 1].clone() };
        preds.push(decoder_step(store, use_st, &input, z, &mut state));
    }
    preds
}

pub fn nll(preds: &[f64], targets: &[f64], sigma2: f64, batch: usize) -> f64 {
    let mut total = 0.0;
    for (m, x) in preds.iter().zip(targets) {
        total += (x - m) * (x - m) / (2.0 * sigma2) + 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    }
    total / batch as f64
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn kl_uniform(probs: &Rows, batch: usize) -> f64 {
    let mut total = 0.0;
    for row in probs {
        let k = row.len() as f64;
        for &p in row {
            if p > 0.0 {
                total += p * (p * k).ln();
            }
        }
    }
    total / batch as f64
}

/// `probs` concatenated over samples in edge order.
pub fn kl_symmetry(probs: &Rows, n: usize, batch: usize) -> f64 {
    let edges = edge_list(n);
    let e = edges.len();
    let mut total = 0.0;
    for b in 0..batch {
        for (p, &(i, j)) in edges.iter().enumerate() {
            let q = edges.iter().position(|&x| x == (j, i)).unwrap();
            let (qij, qji) = (&probs[b * e + p], &probs[b * e + q]);
            for k in 0..qij.len() {
                total += qji[k] * (qji[k].max(1e-12).ln() - qij[k].max(1e-12).ln());
            }
        }
    }
    total / batch as f64
}
