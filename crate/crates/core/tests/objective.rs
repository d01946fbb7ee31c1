mod support;

use nri_core::config::{ModelConfig, SymMode};
use nri_core::data::EdgeIndex;
use nri_core::encoder::{
    argmax_rows, gumbel_noise, gumbel_softmax, symmetric_gumbel_noise, EdgeDistribution, GraphIndex,
};
use nri_core::gradcheck::finite_difference_check;
use nri_core::model::{BatchInputs, Model};
use nri_core::objective::{gaussian_nll, kl_to_uniform, symmetry_kl, total_loss};
use nri_core::tensor::Tape;
use proptest::prelude::*;
use rand::Rng;
use support::fixtures::*;
use support::naive;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn loss_terms_match_loop_oracle_on_twenty_instances() {
    for seed in 0..20u64 {
        let mut r = rng(seed);
        let n = 2 + seed as usize % 4;
        let k = 2 + seed as usize % 3;
        let b = 1 + seed as usize % 3;
        let g = GraphIndex::new(&EdgeIndex::new(n).unwrap(), b);
        let logits: Vec<f64> = (0..g.num_edges() * k).map(|_| r.random_range(-3.0..3.0)).collect();
        let steps = 4;
        let width = b * n * 3;
        let preds: Vec<Vec<f64>> = (0..steps).map(|_| random_rows(&mut r, 1, width).remove(0)).collect();
        let targets: Vec<Vec<f64>> = (0..steps).map(|_| random_rows(&mut r, 1, width).remove(0)).collect();
        let sigma2 = [5e-5, 0.1, 1.0][seed as usize % 3];
        let lambda = r.random_range(0.0..200.0);

        let mut tape = Tape::new();
        let l = tape.constant(&[g.num_edges(), k], logits.clone()).unwrap();
        let dist = EdgeDistribution::from_logits(&mut tape, l).unwrap();
        let pv: Vec<_> = preds.iter().map(|p| tape.constant(&[b * n, 3], p.clone()).unwrap()).collect();
        let tv: Vec<_> = targets.iter().map(|p| tape.constant(&[b * n, 3], p.clone()).unwrap()).collect();
        let terms = total_loss(&mut tape, &g, &pv, &tv, &dist, lambda, sigma2).unwrap();
        let got = terms.report(&tape, lambda);

        let probs: naive::Rows = logits.chunks(k).map(naive::softmax).collect();
        let nll = naive::nll(&preds.concat(), &targets.concat(), sigma2, b);
        let kl = naive::kl_uniform(&probs, b);
        let sym = naive::kl_symmetry(&probs, n, b);
        assert!(rel(got.nll, nll) < 1e-10, "seed {seed}");
        assert!(rel(got.kl_prior, kl) < 1e-10, "seed {seed}");
        assert!(rel(got.kl_sym, sym) < 1e-10, "seed {seed}");
        assert!(rel(got.total, nll + kl + lambda * sym) < 1e-10, "seed {seed}");
    }
}

#[test]
fn nll_constant_term_counts_every_element() {
    let mut tape = Tape::new();
    let x = tape.constant(&[4, 2], vec![0.25; 8]).unwrap();
    let nll = gaussian_nll(&mut tape, &[x, x], &[x, x], 0.5, 2).unwrap();
    let want = 16.0 * 0.5 * (std::f64::consts::PI).ln() / 2.0;
    assert!((tape.item(nll) - want).abs() < 1e-12);
    assert!(gaussian_nll(&mut tape, &[x], &[x, x], 0.5, 2).is_err());
    assert!(gaussian_nll(&mut tape, &[x], &[x], 0.0, 2).is_err());
}

#[test]
fn lambda_derivative_is_the_symmetry_term() {
    let mut r = rng(4);
    let g = GraphIndex::new(&EdgeIndex::new(4).unwrap(), 2);
    let logits: Vec<f64> = (0..g.num_edges() * 2).map(|_| r.random_range(-2.0..2.0)).collect();
    let x: Vec<f64> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
    let eval = |lambda: f64| {
        let mut tape = Tape::new();
        let l = tape.constant(&[g.num_edges(), 2], logits.clone()).unwrap();
        let dist = EdgeDistribution::from_logits(&mut tape, l).unwrap();
        let p = tape.constant(&[8, 3], x.clone()).unwrap();
        let t = tape.constant(&[8, 3], y.clone()).unwrap();
        let terms = total_loss(&mut tape, &g, &[p], &[t], &dist, lambda, 0.1).unwrap();
        (tape.item(terms.total), tape.item(terms.kl_sym))
    };
    let (t0, sym) = eval(3.0);
    let (t1, _) = eval(3.5);
    assert!(((t1 - t0) / 0.5 - sym).abs() < 1e-9);
}

#[test]
fn symmetric_distribution_has_zero_symmetry_penalty() {
    let g = GraphIndex::new(&EdgeIndex::new(5).unwrap(), 3);
    let mut r = rng(9);
    let raw: Vec<f64> = (0..g.num_edges() * 3).map(|_| r.random_range(-2.0..2.0)).collect();
    let mut sym = raw.clone();
    for e in 0..g.num_edges() {
        let t = g.transpose[e];
        for c in 0..3 {
            sym[e * 3 + c] = raw[e.min(t) * 3 + c];
        }
    }
    let mut tape = Tape::new();
    let l = tape.constant(&[g.num_edges(), 3], sym).unwrap();
    let dist = EdgeDistribution::from_logits(&mut tape, l).unwrap();
    let kl = symmetry_kl(&mut tape, dist.probs, &g).unwrap();
    assert!(tape.item(kl).abs() < 1e-14);
}

fn kl_values(logits: &[f64], n: usize, k: usize) -> (f64, f64) {
    let g = GraphIndex::new(&EdgeIndex::new(n).unwrap(), 1);
    let mut tape = Tape::new();
    let l = tape.constant(&[g.num_edges(), k], logits.to_vec()).unwrap();
    let dist = EdgeDistribution::from_logits(&mut tape, l).unwrap();
    let prior = kl_to_uniform(&mut tape, &dist, 1).unwrap();
    let sym = symmetry_kl(&mut tape, dist.probs, &g).unwrap();
    (tape.item(prior), tape.item(sym))
}

proptest! {
    #[test]
    fn kl_terms_are_non_negative(
        n in 2usize..6,
        k in 2usize..5,
        seed in any::<u64>(),
        spread in 0.0f64..30.0,
    ) {
        let mut r = rng(seed);
        let logits: Vec<f64> = (0..n * (n - 1) * k).map(|_| r.random_range(-spread..=spread)).collect();
        let (prior, sym) = kl_values(&logits, n, k);
        prop_assert!(prior >= -1e-12);
        prop_assert!(sym >= -1e-12);
    }

    #[test]
    fn gumbel_samples_lie_on_the_simplex(
        k in 2usize..6,
        rows in 1usize..20,
        tau in 0.05f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let logits: Vec<f64> = (0..rows * k).map(|_| r.random_range(-5.0..5.0)).collect();
        let noise = gumbel_noise(&mut r, rows * k);
        let mut tape = Tape::new();
        let l = tape.constant(&[rows, k], logits).unwrap();
        let z = gumbel_softmax(&mut tape, l, &noise, tau).unwrap();
        for row in tape.value(z).chunks(k) {
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn gumbel_argmax_frequencies_follow_softmax() {
    let logits = [0.3, -1.2, 1.1];
    let probs = naive::softmax(&logits);
    let draws = 100_000;
    let mut r = rng(21);
    let noise = gumbel_noise(&mut r, draws * 3);
    let perturbed: Vec<f64> = noise.iter().enumerate().map(|(i, g)| logits[i % 3] + g).collect();
    let mut counts = [0usize; 3];
    for a in argmax_rows(&perturbed, 3) {
        counts[a] += 1;
    }
    for c in 0..3 {
        let freq = counts[c] as f64 / draws as f64;
        assert!((freq - probs[c]).abs() < 0.01, "class {c}: {freq} vs {}", probs[c]);
    }
}

#[test]
fn low_temperature_concentrates_samples() {
    let rows = 10_000;
    let mut r = rng(22);
    let logits: Vec<f64> = (0..rows * 2).map(|_| r.random_range(-1.0..1.0)).collect();
    let noise = gumbel_noise(&mut r, rows * 2);
    let mut tape = Tape::new();
    let l = tape.constant(&[rows, 2], logits).unwrap();
    let z = gumbel_softmax(&mut tape, l, &noise, 0.1).unwrap();
    let mean_max = tape.value(z).chunks(2).map(|row| row[0].max(row[1])).sum::<f64>() / rows as f64;
    assert!(mean_max > 0.95, "{mean_max}");
    assert!(gumbel_softmax(&mut tape, l, &noise, 0.0).is_err());
}

#[test]
fn hard_symmetry_gives_paired_equal_samples() {
    let cfg = ModelConfig {
        n: 5,
        t: 6,
        d: 3,
        hidden: 6,
        ..ModelConfig::default()
    };
    let model = random_model(cfg, 31, 0.5);
    let batch = full_batch(&random_dataset(5, 6, 3, 3, 32));
    let g = GraphIndex::new(&EdgeIndex::new(5).unwrap(), batch.b);
    let mut tape = Tape::new();
    let p = model.store.bind_frozen(&mut tape).unwrap();
    let inputs = BatchInputs::new(&mut tape, &batch).unwrap();
    let dist = model.edge_distribution(&mut tape, &p, &g, &inputs, SymMode::HardSym).unwrap();
    let noise = symmetric_gumbel_noise(&mut rng(33), &g, 2);
    let z = gumbel_softmax(&mut tape, dist.logits, &noise, 0.5).unwrap();
    let z = tape.value(z);
    for e in 0..g.num_edges() {
        let t = g.transpose[e];
        assert_eq!(z[e * 2..e * 2 + 2], z[t * 2..t * 2 + 2]);
    }
    let soft = model.edge_distribution(&mut tape, &p, &g, &inputs, SymMode::SoftSym).unwrap();
    let kl = symmetry_kl(&mut tape, dist.probs, &g).unwrap();
    assert!(tape.item(kl).abs() < 1e-14);
    let kl = symmetry_kl(&mut tape, soft.probs, &g).unwrap();
    assert!(tape.item(kl) > 0.0);
}

/// Joint loss of the whole model as a function of its flattened parameters.
fn joint_loss(model: &Model, flat: &[f64], noise: &[f64], segment: usize, with_grad: bool) -> (f64, Vec<f64>) {
    let mut m = model.clone();
    m.store.set_flat(flat);
    let batch = full_batch(&random_dataset(3, 4, 2, 2, 41));
    let g = GraphIndex::new(&EdgeIndex::new(3).unwrap(), batch.b);
    let mut tape = Tape::new();
    let p = m.store.bind(&mut tape).unwrap();
    let inputs = BatchInputs::new(&mut tape, &batch).unwrap();
    let dist = m.edge_distribution(&mut tape, &p, &g, &inputs, SymMode::SoftSym).unwrap();
    let z = gumbel_softmax(&mut tape, dist.logits, noise, 0.5).unwrap();
    let preds = m.decoder.rollout(&mut tape, &p, &g, &inputs.steps, z, segment).unwrap();
    let terms = total_loss(&mut tape, &g, &preds, &inputs.steps[1..], &dist, 10.0, 0.05).unwrap();
    let loss = tape.item(terms.total);
    if !with_grad {
        return (loss, Vec::new());
    }
    tape.backward(terms.total).unwrap();
    (loss, p.take_grads(&mut tape).concat())
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    for (use_st, attention) in [(true, false), (true, true), (false, false)] {
        let cfg = ModelConfig {
            n: 3,
            t: 4,
            d: 2,
            hidden: 8,
            use_st,
            node_attention: attention,
            ..ModelConfig::default()
        };
        let model = random_model(cfg, 40, 0.3);
        let noise = gumbel_noise(&mut rng(42), 2 * 6 * 2);
        let flat = model.store.flatten();
        let (_, analytic) = joint_loss(&model, &flat, &noise, 2, true);
        let err = finite_difference_check(|x| joint_loss(&model, x, &noise, 2, false).0, &flat, &analytic, 1e-6);
        assert!(err < 1e-4, "use_st {use_st}, attention {attention}: {err}");
    }
}
