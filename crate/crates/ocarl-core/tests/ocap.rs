//! Perception module tests: encoder geometry, category-head semantics, loss
//! anchors, and gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ocarl_core::autodiff::{grad_check_graph, Graph, Tensor};
use ocarl_core::nn::ParamStore;
use ocarl_core::ocap::{category_loss, total_loss, Ocap, CELLS, FEATURES, GRID};
use ocarl_core::Error;

fn random_image(seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..3 * 64 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::from_vec(&[3, 64, 64], data).unwrap()
}

fn perception(seed: u64, categories: usize, with_head: bool) -> (ParamStore<f64>, Ocap) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ocap = Ocap::init(&mut store, &mut rng, categories, with_head).unwrap();
    (store, ocap)
}

#[test]
fn encoder_maps_image_to_feature_grid() {
    let (store, ocap) = perception(7, 4, true);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let img = g.leaf(random_image(1), false);
    let z = ocap.encode(&mut g, &p, img).unwrap();
    assert_eq!(g.shape(z), [FEATURES, GRID, GRID]);

    let logits = ocap.category_logits(&mut g, &p, z).unwrap();
    assert_eq!(g.shape(logits), [CELLS, 5]);

    let bad = g.leaf(Tensor::zeros(&[3, 32, 32]), false);
    assert!(matches!(ocap.encode(&mut g, &p, bad), Err(Error::Dimension(_))));
}

#[test]
fn initialization_is_seed_deterministic_and_fan_in_bounded() {
    let (a, _) = perception(11, 4, true);
    let (b, _) = perception(11, 4, true);
    let (c, _) = perception(12, 4, true);
    for (name, ta) in a.iter() {
        assert_eq!(ta.data(), b.get(name).unwrap().data(), "{name} differs across same seed");
    }
    let first = "encoder.stage0.reduce.w";
    assert_ne!(a.get(first).unwrap().data(), c.get(first).unwrap().data());

    let bound_conv = 1.0 / (3.0f64 * 9.0).sqrt();
    let w = a.get(first).unwrap();
    assert!(w.data().iter().all(|v| v.abs() < bound_conv));
    assert!(w.data().iter().any(|v| v.abs() > bound_conv * 0.5));

    let bound_fcat = 1.0 / (FEATURES as f64).sqrt();
    let w = a.get("fcat.l1.w").unwrap();
    assert!(w.data().iter().all(|v| v.abs() < bound_fcat));
}

#[test]
fn category_head_is_shared_across_cells() {
    let (store, ocap) = perception(3, 4, true);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cell: Vec<f64> = (0..FEATURES).map(|_| rng.gen_range(-1.0..1.0)).collect();

    // Plant the same feature column at cell (0, 0) of one volume and cell
    // (3, 5) of another; the shared head must emit identical logits rows.
    let mut za = vec![0.0; FEATURES * CELLS];
    let mut zb = vec![0.0; FEATURES * CELLS];
    for (f, &v) in cell.iter().enumerate() {
        za[f * CELLS] = v;
        zb[f * CELLS + 3 * GRID + 5] = v;
    }
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let za = g.leaf(Tensor::from_vec(&[FEATURES, GRID, GRID], za).unwrap(), false);
    let zb = g.leaf(Tensor::from_vec(&[FEATURES, GRID, GRID], zb).unwrap(), false);
    let la = ocap.category_logits(&mut g, &p, za).unwrap();
    let lb = ocap.category_logits(&mut g, &p, zb).unwrap();
    let row_a = &g.value(la).data()[0..5];
    let row_b = &g.value(lb).data()[(3 * GRID + 5) * 5..(3 * GRID + 5) * 5 + 5];
    for (x, y) in row_a.iter().zip(row_b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn category_head_absent_when_not_allocated() {
    let (store, ocap) = perception(3, 4, false);
    assert!(!store.contains("fcat.l1.w"));
    assert!(!store.contains("fcat.l2.b"));
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z = g.leaf(Tensor::zeros(&[FEATURES, GRID, GRID]), false);
    assert!(matches!(ocap.category_logits(&mut g, &p, z), Err(Error::State(_))));
}

#[test]
fn uniform_logits_cost_is_cells_times_log_classes() {
    let mut g: Graph<f64> = Graph::new();
    let logits = g.leaf(Tensor::zeros(&[CELLS, 5]), true);
    let targets: Vec<usize> = (0..CELLS).map(|i| i % 5).collect();
    let loss = category_loss(&mut g, logits, &targets).unwrap();
    let expected = 64.0 * 5.0f64.ln();
    assert!((g.value(loss).item() - expected).abs() < 1e-9);
}

#[test]
fn saturated_correct_logits_drive_cost_to_zero() {
    let targets: Vec<usize> = (0..CELLS).map(|i| (i * 7) % 5).collect();
    let mut data = vec![0.0; CELLS * 5];
    for (i, &t) in targets.iter().enumerate() {
        data[i * 5 + t] = 40.0;
    }
    let mut g = Graph::new();
    let logits = g.leaf(Tensor::from_vec(&[CELLS, 5], data).unwrap(), true);
    let loss = category_loss(&mut g, logits, &targets).unwrap();
    assert!(g.value(loss).item() < 1e-6);
}

#[test]
fn category_loss_gradient_is_softmax_minus_onehot() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let data: Vec<f64> = (0..CELLS * 5).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let targets: Vec<usize> = (0..CELLS).map(|_| rng.gen_range(0..5)).collect();

    let mut g = Graph::new();
    let logits = g.leaf(Tensor::from_vec(&[CELLS, 5], data.clone()).unwrap(), true);
    let loss = category_loss(&mut g, logits, &targets).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad(logits).unwrap().data().to_vec();

    for r in 0..CELLS {
        let row = &data[r * 5..(r + 1) * 5];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        for c in 0..5 {
            let expected = exps[c] / z - if c == targets[r] { 1.0 } else { 0.0 };
            assert!((grad[r * 5 + c] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn total_loss_composes_linearly() {
    let mut g = Graph::new();
    let rl = g.leaf(Tensor::scalar(2.0), true);
    let cat = g.leaf(Tensor::scalar(100.0), true);
    let total = total_loss(&mut g, rl, Some(cat), 0.01).unwrap();
    assert!((g.value(total).item() - 3.0f64).abs() < 1e-12);

    let plain = total_loss(&mut g, rl, None, 0.0).unwrap();
    assert_eq!(plain, rl);
    let ignored = total_loss(&mut g, rl, Some(cat), 0.0).unwrap();
    assert_eq!(ignored, rl);

    assert!(matches!(total_loss(&mut g, rl, None, 0.5), Err(Error::Argument(_))));
    assert!(matches!(total_loss(&mut g, rl, Some(cat), -0.01), Err(Error::Argument(_))));
    assert!(matches!(total_loss(&mut g, rl, Some(cat), f64::NAN), Err(Error::Argument(_))));
}

#[test]
fn perception_gradients_match_finite_differences() {
    let (store, ocap) = perception(23, 4, true);
    let mut g = Graph::new();
    let p = store.bind(&mut g, true);
    let img = g.leaf(random_image(2), true);
    let z = ocap.encode(&mut g, &p, img).unwrap();
    let logits = ocap.category_logits(&mut g, &p, z).unwrap();
    let targets: Vec<usize> = (0..CELLS).map(|i| (i * 3) % 5).collect();
    let loss = category_loss(&mut g, logits, &targets).unwrap();

    // The category head in full, plus one bias per encoder depth. The
    // remaining encoder weights go through the same conv adjoints, which the
    // engine tests cover coordinate by coordinate; the wide sweep over every
    // parameter runs with the acceptance suite.
    let leaves = [
        "fcat.l1.w",
        "fcat.l1.b",
        "fcat.l2.w",
        "fcat.l2.b",
        "encoder.stage0.reduce.b",
        "encoder.stage1.res0.a.b",
        "encoder.stage2.res1.b.b",
    ]
    .map(|n| p.id(n).unwrap());
    // The step must stay well inside the distance to the nearest ReLU kink;
    // at 1e-5 a handful of coordinates already straddle one.
    let worst = grad_check_graph(&mut g, loss, &leaves, 1e-6).unwrap();
    assert!(worst < 1e-3, "worst relative error {worst}");
}
