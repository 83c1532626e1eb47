//! Reasoning module tests: coordinate tagging, attention semantics, expert
//! routing, the pooled head, and gradient verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ocarl_core::autodiff::{grad_check_graph, Graph, NodeId, Tensor};
use ocarl_core::nn::ParamStore;
use ocarl_core::ocmr::{Ocmr, ReasonerKind};
use ocarl_core::Error;

const F: usize = 4;
const ACTIONS: usize = 3;

fn reasoner(seed: u64, kind: ReasonerKind) -> (ParamStore<f64>, Ocmr) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ocmr = Ocmr::init(&mut store, &mut rng, kind, F, ACTIONS).unwrap();
    (store, ocmr)
}

fn routed(seed: u64) -> (ParamStore<f64>, Ocmr) {
    reasoner(seed, ReasonerKind::Routed { categories: 2 })
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

fn eye(n: usize) -> Tensor<f64> {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    Tensor::from_vec(&[n, n], data).unwrap()
}

/// Reference two-layer perceptron using the raw parameter tensors.
fn mlp_rows(store: &ParamStore<f64>, prefix: &str, x: &[f64], rows: usize) -> Vec<f64> {
    let w1 = store.get(&format!("{prefix}.l1.w")).unwrap();
    let b1 = store.get(&format!("{prefix}.l1.b")).unwrap();
    let w2 = store.get(&format!("{prefix}.l2.w")).unwrap();
    let b2 = store.get(&format!("{prefix}.l2.b")).unwrap();
    let (d_in, hidden) = (w1.shape()[0], w1.shape()[1]);
    let d_out = w2.shape()[1];
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        let row = &x[r * d_in..(r + 1) * d_in];
        let mut h = vec![0.0; hidden];
        for j in 0..hidden {
            let mut acc = b1.data()[j];
            for i in 0..d_in {
                acc += row[i] * w1.data()[i * hidden + j];
            }
            h[j] = acc.max(0.0);
        }
        for j in 0..d_out {
            let mut acc = b2.data()[j];
            for i in 0..hidden {
                acc += h[i] * w2.data()[i * d_out + j];
            }
            out[r * d_out + j] = acc;
        }
    }
    out
}

fn onehots(cats: &[usize], width: usize) -> Vec<f64> {
    let mut v = vec![0.0; cats.len() * width];
    for (r, &c) in cats.iter().enumerate() {
        v[r * width + c] = 1.0;
    }
    v
}

#[test]
fn coordinates_are_appended_normalized_and_re_embedded() {
    let (mut store, ocmr) = routed(1);
    // Embed weights that copy the x coordinate to output 0 and y to output
    // 1, so the tagged positions are directly visible after the ReLU.
    let mut w = vec![0.0; (F + 2) * F];
    w[F * F] = 1.0;
    w[(F + 1) * F + 1] = 1.0;
    store.set("ocmr.embed.w", Tensor::from_vec(&[F + 2, F], w).unwrap()).unwrap();
    store.set("ocmr.embed.b", Tensor::zeros(&[F])).unwrap();

    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z = g.leaf(Tensor::zeros(&[F, 3, 3]), false);
    let z_hat = ocmr.add_coords(&mut g, &p, z).unwrap();
    assert_eq!(g.shape(z_hat), [9, F]);
    let got = g.value(z_hat).data();
    for i in 0..3 {
        for j in 0..3 {
            let x = -1.0 + j as f64;
            let y = -1.0 + i as f64;
            let row = &got[(i * 3 + j) * F..(i * 3 + j) * F + F];
            assert_eq!(row, [x.max(0.0), y.max(0.0), 0.0, 0.0]);
        }
    }

    let narrow = g.leaf(Tensor::zeros(&[F, 1, 3]), false);
    assert!(matches!(ocmr.add_coords(&mut g, &p, narrow), Err(Error::Dimension(_))));
    let wrong_f = g.leaf(Tensor::zeros(&[F + 1, 3, 3]), false);
    assert!(matches!(ocmr.add_coords(&mut g, &p, wrong_f), Err(Error::Dimension(_))));
}

#[test]
fn attention_applies_unscaled_softmax_scores() {
    let (mut store, ocmr) = routed(2);
    let mut wq = vec![0.0; F * F];
    for i in 0..F {
        wq[i * F + i] = 3.0;
    }
    store.set("ocmr.attn.wq", Tensor::from_vec(&[F, F], wq).unwrap()).unwrap();
    store.set("ocmr.attn.wk", eye(F)).unwrap();
    store.set("ocmr.attn.wv", eye(F)).unwrap();

    // With identity rows and identity value weights the attended output IS
    // the attention matrix: softmax of 3 * I, row by row.
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z_hat = g.leaf(eye(F), false);
    let q_hat = ocmr.self_attention(&mut g, &p, z_hat).unwrap();
    let got = g.value(q_hat).data();

    let hot = 3.0f64.exp() / (3.0f64.exp() + (F - 1) as f64);
    let cold = 1.0 / (3.0f64.exp() + (F - 1) as f64);
    for i in 0..F {
        let mut sum = 0.0;
        for j in 0..F {
            let expected = if i == j { hot } else { cold };
            assert!((got[i * F + j] - expected).abs() < 1e-12);
            sum += got[i * F + j];
        }
        assert!((sum - 1.0).abs() < 1e-9, "attention row must be a distribution");
    }
}

#[test]
fn zero_query_attention_averages_value_rows() {
    let (mut store, ocmr) = routed(3);
    store.set("ocmr.attn.wq", Tensor::zeros(&[F, F])).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let z = random_matrix(&mut rng, 5, F);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z_hat = g.leaf(z.clone(), false);
    let q_hat = ocmr.self_attention(&mut g, &p, z_hat).unwrap();

    // Uniform weights reduce attention to the column mean of Z Wv.
    let wv = store.get("ocmr.attn.wv").unwrap();
    let mut mean = vec![0.0; F];
    for r in 0..5 {
        for c in 0..F {
            let mut acc = 0.0;
            for k in 0..F {
                acc += z.data()[r * F + k] * wv.data()[k * F + c];
            }
            mean[c] += acc / 5.0;
        }
    }
    let got = g.value(q_hat).data();
    for r in 0..5 {
        for c in 0..F {
            assert!((got[r * F + c] - mean[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_is_permutation_equivariant() {
    let (store, ocmr) = routed(4);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let z = random_matrix(&mut rng, 6, F);
    let perm = [2usize, 0, 5, 1, 4, 3];
    let mut permuted = vec![0.0; 6 * F];
    for (r, &src) in perm.iter().enumerate() {
        permuted[r * F..(r + 1) * F].copy_from_slice(&z.data()[src * F..(src + 1) * F]);
    }

    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let a = g.leaf(z, false);
    let b = g.leaf(Tensor::from_vec(&[6, F], permuted).unwrap(), false);
    let qa = ocmr.self_attention(&mut g, &p, a).unwrap();
    let qb = ocmr.self_attention(&mut g, &p, b).unwrap();
    let (qa, qb) = (g.value(qa).data(), g.value(qb).data());
    for (r, &src) in perm.iter().enumerate() {
        for c in 0..F {
            assert!((qb[r * F + c] - qa[src * F + c]).abs() < 1e-12);
        }
    }
}

#[test]
fn identical_rows_attend_identically() {
    let (store, ocmr) = routed(5);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut z = random_matrix(&mut rng, 4, F);
    let dup: Vec<f64> = z.data()[F..2 * F].to_vec();
    z.data_mut()[3 * F..4 * F].copy_from_slice(&dup);

    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z_hat = g.leaf(z, false);
    let q_hat = ocmr.self_attention(&mut g, &p, z_hat).unwrap();
    let got = g.value(q_hat).data();
    for c in 0..F {
        assert!((got[F + c] - got[3 * F + c]).abs() < 1e-12);
    }
}

#[test]
fn route_rejects_anything_but_one_hot_rows() {
    let (store, ocmr) = routed(6);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z_tilde = g.leaf(Tensor::zeros(&[2, 2 * F]), false);

    for bad in [
        vec![0.5, 0.5, 0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
        vec![1.2, -0.2, 0.0, 1.0, 0.0, 0.0],
    ] {
        assert!(matches!(
            ocmr.route(&mut g, &p, z_tilde, &bad),
            Err(Error::Argument(_))
        ));
    }
    assert!(matches!(
        ocmr.route(&mut g, &p, z_tilde, &[1.0, 0.0, 0.0]),
        Err(Error::Dimension(_))
    ));
    let ok = ocmr.route(&mut g, &p, z_tilde, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(g.shape(ok), [2, F]);
}

#[test]
fn routing_matches_per_row_expert_application() {
    let (store, ocmr) = routed(7);
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let z_tilde = random_matrix(&mut rng, 3, 2 * F);
    let cats = [1usize, 0, 2];

    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let zt = g.leaf(z_tilde.clone(), false);
    let out = ocmr.route(&mut g, &p, zt, &onehots(&cats, 3)).unwrap();
    let got = g.value(out).data();

    for (r, &cat) in cats.iter().enumerate() {
        let expert = ocmr.routing()[cat];
        let row = &z_tilde.data()[r * 2 * F..(r + 1) * 2 * F];
        let expected = mlp_rows(&store, &format!("ocmr.expert.{expert}"), row, 1);
        for c in 0..F {
            assert!((got[r * F + c] - expected[c]).abs() < 1e-12);
        }
    }
    // Category c is served by expert c - 1; background by the last expert.
    assert_eq!(ocmr.routing(), [2, 0, 1]);
}

#[test]
fn unused_experts_receive_no_gradient() {
    let (store, ocmr) = routed(8);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let z_tilde = random_matrix(&mut rng, 4, 2 * F);

    let mut g = Graph::new();
    let p = store.bind(&mut g, true);
    let zt = g.leaf(z_tilde, false);
    // Every row is category 1, so only expert 0 participates.
    let out = ocmr.route(&mut g, &p, zt, &onehots(&[1, 1, 1, 1], 3)).unwrap();
    let loss = g.sum_all(out);
    g.backward(loss).unwrap();

    let used = p.id("ocmr.expert.0.l1.w").unwrap();
    let grad = g.grad(used).expect("used expert must have a gradient");
    assert!(grad.data().iter().any(|v| *v != 0.0));
    for k in [1usize, 2] {
        let id = p.id(&format!("ocmr.expert.{k}.l1.w")).unwrap();
        assert!(g.grad(id).is_none(), "expert {k} never ran");
    }
}

#[test]
fn disabling_a_category_reroutes_it_to_background() {
    let (store, mut ocmr) = routed(9);
    let before: Vec<Vec<f64>> = store.iter().map(|(_, t)| t.data().to_vec()).collect();
    ocmr.disable_category(1).unwrap();
    assert_eq!(ocmr.routing(), [2, 2, 1]);
    let after: Vec<Vec<f64>> = store.iter().map(|(_, t)| t.data().to_vec()).collect();
    assert_eq!(before, after, "disabling must not touch parameters");

    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let z_tilde = random_matrix(&mut rng, 2, 2 * F);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let zt = g.leaf(z_tilde.clone(), false);
    let out = ocmr.route(&mut g, &p, zt, &onehots(&[1, 1], 3)).unwrap();
    let expected = mlp_rows(&store, "ocmr.expert.2", z_tilde.data(), 2);
    let got = g.value(out).data();
    for i in 0..2 * F {
        assert!((got[i] - expected[i]).abs() < 1e-12);
    }

    assert!(matches!(ocmr.disable_category(0), Err(Error::Argument(_))));
    assert!(matches!(ocmr.disable_category(3), Err(Error::Argument(_))));
    let (_, mut universal) = reasoner(10, ReasonerKind::Universal);
    assert!(matches!(universal.disable_category(1), Err(Error::State(_))));
}

#[test]
fn head_output_is_cell_order_invariant() {
    let (store, ocmr) = routed(11);
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let z_out = random_matrix(&mut rng, 4, F);
    let z_hat = random_matrix(&mut rng, 4, F);
    let perm = [3usize, 1, 0, 2];
    let permute = |t: &Tensor<f64>| {
        let mut data = vec![0.0; 4 * F];
        for (r, &src) in perm.iter().enumerate() {
            data[r * F..(r + 1) * F].copy_from_slice(&t.data()[src * F..(src + 1) * F]);
        }
        Tensor::from_vec(&[4, F], data).unwrap()
    };

    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let a_out = g.leaf(z_out.clone(), false);
    let a_hat = g.leaf(z_hat.clone(), false);
    let b_out = g.leaf(permute(&z_out), false);
    let b_hat = g.leaf(permute(&z_hat), false);
    let a = ocmr.head(&mut g, &p, a_out, a_hat).unwrap();
    let b = ocmr.head(&mut g, &p, b_out, b_hat).unwrap();

    assert_eq!(g.shape(a.action_logits), [1, ACTIONS]);
    assert_eq!(g.shape(a.value), [1, 1]);
    for c in 0..ACTIONS {
        let x = g.value(a.action_logits).data()[c];
        let y = g.value(b.action_logits).data()[c];
        assert!((x - y).abs() < 1e-12);
    }
    let (va, vb) = (g.value(a.value).item(), g.value(b.value).item());
    assert!((va - vb).abs() < 1e-12);
}

#[test]
fn forward_validates_category_wiring() {
    let (store, ocmr) = routed(12);
    let mut g = Graph::new();
    let p = store.bind(&mut g, false);
    let z = g.leaf(Tensor::zeros(&[F, 2, 2]), false);
    assert!(matches!(ocmr.forward(&mut g, &p, z, None), Err(Error::Argument(_))));
    assert!(matches!(
        ocmr.forward(&mut g, &p, z, Some(&[0, 1, 2, 3])),
        Err(Error::Argument(_))
    ));
    let out = ocmr.forward(&mut g, &p, z, Some(&[0, 1, 2, 0])).unwrap();
    assert_eq!(g.shape(out.action_logits), [1, ACTIONS]);

    let (ustore, universal) = reasoner(13, ReasonerKind::Universal);
    let mut g = Graph::new();
    let p = ustore.bind(&mut g, false);
    let z = g.leaf(Tensor::zeros(&[F, 2, 2]), false);
    assert!(matches!(
        universal.forward(&mut g, &p, z, Some(&[0, 0, 0, 0])),
        Err(Error::Argument(_))
    ));
    let out = universal.forward(&mut g, &p, z, None).unwrap();
    assert_eq!(g.shape(out.value), [1, 1]);
}

#[test]
fn universal_reasoning_applies_one_network_to_all_rows() {
    let (store, _) = reasoner(14, ReasonerKind::Universal);
    assert!(store.contains("ocmr.universal.l1.w"));
    assert!(!store.contains("ocmr.expert.0.l1.w"));
}

#[test]
fn reasoning_gradients_match_finite_differences() {
    for kind in [ReasonerKind::Routed { categories: 2 }, ReasonerKind::Universal] {
        let (store, ocmr) = reasoner(15, kind);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let data: Vec<f64> = (0..F * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut g = Graph::new();
        let p = store.bind(&mut g, true);
        let z = g.leaf(Tensor::from_vec(&[F, 2, 2], data).unwrap(), true);
        let cats = [0usize, 1, 2, 0];
        let cats = matches!(kind, ReasonerKind::Routed { .. }).then_some(&cats[..]);
        let out = ocmr.forward(&mut g, &p, z, cats).unwrap();
        let ls = g.sum_all(out.action_logits);
        let vs = g.sum_all(out.value);
        let loss = g.add(ls, vs).unwrap();

        let mut leaves: Vec<NodeId> = p.iter().map(|(_, id)| id).collect();
        leaves.push(z);
        let worst = grad_check_graph(&mut g, loss, &leaves, 1e-5).unwrap();
        assert!(worst < 1e-3, "worst relative error {worst} ({kind:?})");
    }
}
