use knowlens_core::dataset::{normalize_matrix, FeatureMatrix};
use knowlens_core::embednet::{
    batch_gradients, batch_loss, class_loss, decode, epoch_order, fit, init_model, joint_loss, predict_label,
    recon_loss, train, train_epoch, train_epoch_with_order, EmbeddingModel, Hyperparams, Snapshot,
};
use knowlens_core::knowledge::LabelAssignment;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_features(n: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    normalize_matrix(Array2::from_shape_simple_fn((n, d), || rng.gen::<f64>()))
}

fn objective(
    model: &EmbeddingModel,
    x: &FeatureMatrix,
    labels: &LabelAssignment,
    snap: &Snapshot,
    batch: &[usize],
    alpha: f64,
) -> f64 {
    batch_loss(model, x, &labels.labels, snap, batch, alpha).objective()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

type Access = fn(&mut EmbeddingModel) -> &mut [f64];

#[test]
fn analytic_gradients_match_central_differences() {
    let step = 1e-5;
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let d = rng.gen_range(2..6);
        let x = random_features(5, d, &mut rng);
        let labels = LabelAssignment::from_dense(&[0, 1, 0, 1, (trial % 2) as usize]).unwrap();
        let alpha = [0.0, 0.3, 0.7, 1.0][trial as usize % 4];
        let hp = Hyperparams {
            embed_dim: 3,
            hidden_dim: 4,
            seed: trial,
            ..Default::default()
        };
        let mut model = init_model(5, d, &hp).unwrap();
        // larger embeddings keep the ReLU and argmax kinks away from the probes
        model.h.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        model.b1.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        model.b2.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        let batch: Vec<usize> = (0..5).collect();
        let snap = Snapshot::new(&model.h, &labels.labels, 2);
        let (_, grads) = batch_gradients(&model, &x, &labels.labels, &snap, &batch, alpha);

        let tensors: [(Access, Vec<f64>); 5] = [
            (|m| m.h.as_slice_mut().unwrap(), grads.h_rows.iter().copied().collect()),
            (|m| m.w1.as_slice_mut().unwrap(), grads.w1.iter().copied().collect()),
            (|m| m.b1.as_slice_mut().unwrap(), grads.b1.to_vec()),
            (|m| m.w2.as_slice_mut().unwrap(), grads.w2.iter().copied().collect()),
            (|m| m.b2.as_slice_mut().unwrap(), grads.b2.to_vec()),
        ];
        for (access, analytic) in tensors {
            for (j, &g) in analytic.iter().enumerate() {
                let mut plus = model.clone();
                access(&mut plus)[j] += step;
                let mut minus = model.clone();
                access(&mut minus)[j] -= step;
                let numeric = (objective(&plus, &x, &labels, &snap, &batch, alpha)
                    - objective(&minus, &x, &labels, &snap, &batch, alpha))
                    / (2.0 * step);
                worst = worst.max(rel_err(g, numeric));
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn reconstruction_loss_decreases_without_class_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_features(8, 6, &mut rng);
    let labels = LabelAssignment::from_dense(&[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
    let hp = Hyperparams {
        alpha: 0.0,
        eta: 0.05,
        batch_size: 8,
        epochs: 200,
        ..Default::default()
    };
    let (_, reports) = fit(&x, &labels, &hp).unwrap();
    for w in reports[..10].windows(2) {
        assert!(w[1].recon < w[0].recon, "{} !< {}", w[1].recon, w[0].recon);
    }
    assert!(reports[199].recon < reports[0].recon);
}

#[test]
fn class_term_separates_two_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let raw = Array2::from_shape_fn((n, 5), |(i, _)| {
        let base = if i < n / 2 { 0.0 } else { 10.0 };
        base + rng.gen::<f64>()
    });
    let x = normalize_matrix(raw);
    let dense: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
    let labels = LabelAssignment::from_dense(&dense).unwrap();
    let hp = Hyperparams {
        alpha: 1.0,
        batch_size: 8,
        epochs: 50,
        seed: 3,
        ..Default::default()
    };
    let (_, reports) = fit(&x, &labels, &hp).unwrap();
    assert!(reports.iter().any(|r| r.training_accuracy == 1.0));
}

#[test]
fn same_seed_same_embeddings() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_features(30, 7, &mut rng);
    let dense: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let labels = LabelAssignment::from_dense(&dense).unwrap();
    let hp = Hyperparams {
        alpha: 0.4,
        batch_size: 7,
        epochs: 20,
        seed: 11,
        ..Default::default()
    };
    let (a, ra) = fit(&x, &labels, &hp).unwrap();
    let (b, rb) = fit(&x, &labels, &hp).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let (c, _) = fit(&x, &labels, &Hyperparams { seed: 12, ..hp }).unwrap();
    assert_ne!(a.h, c.h);
}

#[test]
fn permuting_samples_permutes_embeddings() {
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_features(n, 4, &mut rng);
    let dense = [0, 1, 2, 0, 1, 2, 0, 1];
    let labels = LabelAssignment::from_dense(&dense).unwrap();
    let hp = Hyperparams {
        alpha: 0.5,
        batch_size: 3,
        epochs: 5,
        embed_dim: 4,
        seed: 2,
        ..Default::default()
    };
    let model = init_model(n, 4, &hp).unwrap();

    // new index j holds old sample perm[j]
    let perm = [5, 2, 7, 0, 3, 6, 1, 4];
    let mut inverse = [0; 8];
    for (j, &old) in perm.iter().enumerate() {
        inverse[old] = j;
    }
    let px = FeatureMatrix {
        values: x.values.select(ndarray::Axis(0), &perm),
        ranges: x.ranges.clone(),
    };
    let plabels = LabelAssignment::from_dense(&perm.iter().map(|&o| dense[o]).collect::<Vec<_>>()).unwrap();
    let mut pmodel = model.clone();
    pmodel.h = model.h.select(ndarray::Axis(0), &perm);

    let mut original = model;
    for epoch in 0..hp.epochs {
        let order = epoch_order(&labels, hp.seed, epoch);
        let porder: Vec<usize> = order.iter().map(|&o| inverse[o]).collect();
        train_epoch_with_order(&mut original, &x, &labels, &hp, epoch, &order).unwrap();
        train_epoch_with_order(&mut pmodel, &px, &plabels, &hp, epoch, &porder).unwrap();
    }
    for (j, &old) in perm.iter().enumerate() {
        for k in 0..hp.embed_dim {
            assert!((pmodel.h[[j, k]] - original.h[[old, k]]).abs() < 1e-10);
        }
    }
    for (a, b) in pmodel.w2.iter().zip(original.w2.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn epoch_order_matches_train_epoch() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_features(12, 3, &mut rng);
    let labels = LabelAssignment::from_dense(&[0, 1].repeat(6)).unwrap();
    let hp = Hyperparams {
        alpha: 0.2,
        batch_size: 5,
        seed: 4,
        ..Default::default()
    };
    let mut a = init_model(12, 3, &hp).unwrap();
    let mut b = a.clone();
    for epoch in 0..3 {
        let ra = train_epoch(&mut a, &x, &labels, &hp, epoch).unwrap();
        let order = epoch_order(&labels, hp.seed, epoch);
        let rb = train_epoch_with_order(&mut b, &x, &labels, &hp, epoch, &order).unwrap();
        assert_eq!(ra, rb);
    }
    assert_eq!(a, b);
    assert_ne!(epoch_order(&labels, 4, 0), epoch_order(&labels, 4, 1));
}

#[test]
fn batch_report_agrees_with_reference_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random_features(20, 5, &mut rng);
    let dense: Vec<usize> = (0..20).map(|i| i % 4).collect();
    let labels = LabelAssignment::from_dense(&dense).unwrap();
    let hp = Hyperparams {
        embed_dim: 6,
        ..Default::default()
    };
    let mut model = init_model(20, 5, &hp).unwrap();
    model.h.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    let batch: Vec<usize> = (0..20).collect();
    let snap = Snapshot::new(&model.h, &labels.labels, 4);
    let alpha = 0.35;
    let got = batch_loss(&model, &x, &labels.labels, &snap, &batch, alpha);
    let (mut lr_sum, mut lc_sum, mut total, mut correct) = (0.0, 0.0, 0.0, 0);
    for i in 0..20 {
        let lr = recon_loss(decode(&model, model.h.row(i)).view(), x.values.row(i)).unwrap();
        let lc = class_loss(&model, i, &labels.labels).unwrap();
        if predict_label(&model, i, &labels.labels).unwrap() == dense[i] {
            correct += 1;
        }
        lr_sum += lr;
        lc_sum += lc;
        total += joint_loss(lr, lc, alpha).unwrap();
    }
    assert!((got.recon - lr_sum).abs() < 1e-10);
    assert!((got.class - lc_sum).abs() < 1e-10);
    assert!((got.total - total).abs() < 1e-10);
    assert_eq!(got.correct, correct);
}

#[test]
fn embeddings_are_the_model_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random_features(10, 3, &mut rng);
    let labels = LabelAssignment::from_dense(&[0, 1].repeat(5)).unwrap();
    let hp = Hyperparams {
        batch_size: 5,
        epochs: 3,
        ..Default::default()
    };
    let model = init_model(10, 3, &hp).unwrap();
    let mut epochs = Vec::new();
    let (trained, reports) = train(model, &x, &labels, &hp, |r| {
        epochs.push(r.epoch);
        true
    })
    .unwrap();
    assert_eq!(epochs, vec![0, 1, 2]);
    assert_eq!(reports.len(), 3);
    assert_eq!(trained.h.dim(), (10, hp.embed_dim));
    let recon: Array1<f64> = decode(&trained, trained.h.row(0));
    assert_eq!(recon.len(), 3);
}

#[test]
fn wide_outputs_match_untiled_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (n, d) = (6, 1300);
    let x = random_features(n, d, &mut rng);
    let labels = LabelAssignment::from_dense(&[0, 1, 0, 1, 0, 1]).unwrap();
    let hp = Hyperparams {
        embed_dim: 4,
        hidden_dim: 8,
        ..Default::default()
    };
    let mut model = init_model(n, d, &hp).unwrap();
    model.h.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    model.b2.mapv_inplace(|_| rng.gen_range(-0.2..0.2));
    let batch = [4, 1, 5];
    let alpha = 0.25;
    let snap = Snapshot::new(&model.h, &labels.labels, 2);
    let (loss, g) = batch_gradients(&model, &x, &labels.labels, &snap, &batch, alpha);

    let hb = model.h.select(ndarray::Axis(0), &batch);
    let xb = x.values.select(ndarray::Axis(0), &batch);
    let pre = hb.dot(&model.w1) + &model.b1;
    let hidden = pre.mapv(|v| v.max(0.0));
    let out = hidden.dot(&model.w2) + &model.b2;
    let diff = &out - &xb;
    let recon: f64 = diff.mapv(|v| v * v).sum() / d as f64;
    assert!((loss.recon - recon).abs() < 1e-9);
    let g_out = &diff * (2.0 * (1.0 - alpha) / (3.0 * d as f64));
    let gw2 = hidden.t().dot(&g_out);
    let mask = pre.mapv(|p| if p > 0.0 { 1.0 } else { 0.0 });
    let g_pre = g_out.dot(&model.w2.t()) * &mask;
    for (a, b) in g.w2.iter().zip(gw2.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in g.b2.iter().zip(g_out.sum_axis(ndarray::Axis(0)).iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in g.w1.iter().zip(hb.t().dot(&g_pre).iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}
