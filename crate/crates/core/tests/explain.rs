use std::collections::BTreeMap;

use knowlens_core::dataset::{load_dataset, parse_schema, Dataset};
use knowlens_core::explain::{
    exact_shap, explain, factor_histogram, factor_matrix, histogram, kernel_shap, objective, overlap_coefficient,
    rank_factors, resolve_comparison, train_discriminator, Discriminator, ExplainConfig, FactorKind,
};
use knowlens_core::knowledge::{KnowledgeTree, ROOT};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn covid() -> Dataset {
    let schema = parse_schema(include_str!("fixtures/covid_mini.schema.json")).unwrap();
    load_dataset(include_str!("fixtures/covid_mini.csv").as_bytes(), &schema).unwrap()
}

fn identity_map(k: usize) -> BTreeMap<usize, usize> {
    (0..k).map(|i| (i, i)).collect()
}

fn random_model(m: usize, rng: &mut ChaCha8Rng) -> Discriminator {
    Discriminator {
        weights: Array1::from_shape_simple_fn(m, || rng.gen_range(-2.0..2.0)),
        bias: rng.gen_range(-0.5..0.5),
        lambda: 0.0,
        accuracy: 0.0,
        steps: 0,
    }
}

#[test]
fn continent_factors_partition_the_rows() {
    let ds = covid();
    let tree = KnowledgeTree::new()
        .create_classes(&ds, ROOT, "continent", 1, &identity_map(6))
        .unwrap();
    let (cf, set) = factor_matrix(&ds, &tree, FactorKind::Classification).unwrap();
    assert_eq!(cf.dim(), (8, 6));
    assert!(set.factors.iter().all(|f| f.binary));
    for row in cf.rows() {
        assert_eq!(row.sum(), 1.0);
    }
    let (ef, set) = factor_matrix(&ds, &tree, FactorKind::Embedding).unwrap();
    assert_eq!(ef.ncols(), 12);
    assert_eq!(set.factors[0].name, "m01");
    assert!(factor_matrix(&ds, &KnowledgeTree::new(), FactorKind::Classification).is_err());
}

#[test]
fn cf_columns_follow_live_bins() {
    let ds = covid();
    // two age groups, the older one refined by GDP, then one GDP child dropped
    let tree = KnowledgeTree::new()
        .create_classes(&ds, ROOT, "median_age", 2, &identity_map(2))
        .unwrap();
    let older = tree.leaves()[1];
    let tree = tree
        .refine_class(&ds, older, "gdp_per_capita", 2, &identity_map(2))
        .unwrap();
    let (cf, set) = factor_matrix(&ds, &tree, FactorKind::Classification).unwrap();
    assert_eq!(cf.ncols(), tree.live_bins().len());
    assert_eq!(cf.ncols(), 4);
    let doomed = tree.leaves()[2];
    let pruned = tree.delete_class(doomed).unwrap();
    let (cf, _) = factor_matrix(&ds, &pruned, FactorKind::Classification).unwrap();
    assert_eq!(cf.ncols(), 3);
    let names: std::collections::HashSet<_> = set.factors.iter().map(|f| f.name.clone()).collect();
    assert_eq!(names.len(), set.len());
}

#[test]
fn logistic_weights_match_newton_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array2::from_shape_simple_fn((20, 3), || rng.gen_range(-1.0..1.0));
    let y: Vec<bool> = x
        .rows()
        .into_iter()
        .map(|r| r[0] + 0.5 * r[1] + rng.gen_range(-0.8..0.8) > 0.0)
        .collect();
    let lambda = 1e-3;
    let fit = train_discriminator(x.view(), &y, lambda).unwrap();

    // Newton's method on the augmented problem [w, b]
    let xa = Array2::from_shape_fn((20, 4), |(i, j)| if j < 3 { x[[i, j]] } else { 1.0 });
    let mut theta = Array1::<f64>::zeros(4);
    for _ in 0..50 {
        let mut grad = Array1::<f64>::zeros(4);
        let mut hess = Array2::<f64>::zeros((4, 4));
        for i in 0..20 {
            let p = 1.0 / (1.0 + (-xa.row(i).dot(&theta)).exp());
            let t = if y[i] { 1.0 } else { 0.0 };
            for a in 0..4 {
                grad[a] += (p - t) * xa[[i, a]] / 20.0;
                for b in 0..4 {
                    hess[[a, b]] += p * (1.0 - p) * xa[[i, a]] * xa[[i, b]] / 20.0;
                }
            }
        }
        for a in 0..3 {
            grad[a] += lambda * theta[a];
            hess[[a, a]] += lambda;
        }
        // Gauss-Jordan solve of hess · step = grad
        let mut aug = Array2::<f64>::zeros((4, 5));
        for a in 0..4 {
            for b in 0..4 {
                aug[[a, b]] = hess[[a, b]];
            }
            aug[[a, 4]] = grad[a];
        }
        for c in 0..4 {
            let piv = (c..4)
                .max_by(|&p, &q| aug[[p, c]].abs().total_cmp(&aug[[q, c]].abs()))
                .unwrap();
            for k in 0..5 {
                let tmp = aug[[c, k]];
                aug[[c, k]] = aug[[piv, k]];
                aug[[piv, k]] = tmp;
            }
            for r in 0..4 {
                if r != c {
                    let f = aug[[r, c]] / aug[[c, c]];
                    for k in 0..5 {
                        aug[[r, k]] -= f * aug[[c, k]];
                    }
                }
            }
        }
        for a in 0..4 {
            theta[a] -= aug[[a, 4]] / aug[[a, a]];
        }
    }
    for j in 0..3 {
        assert!(
            (fit.weights[j] - theta[j]).abs() < 1e-4,
            "{} vs {}",
            fit.weights[j],
            theta[j]
        );
    }
    assert!((fit.bias - theta[3]).abs() < 1e-4);
    let w = theta.slice(ndarray::s![..3]).to_owned();
    assert!(
        objective(x.view(), &y, &fit.weights, fit.bias, lambda) - objective(x.view(), &y, &w, theta[3], lambda) < 1e-10
    );
}

#[test]
fn zero_weight_factor_gets_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = random_model(6, &mut rng);
    model.weights[2] = 0.0;
    let x = Array2::from_shape_simple_fn((10, 6), || rng.gen::<f64>());
    let bg = Array2::from_shape_simple_fn((30, 6), || rng.gen::<f64>());
    let a = exact_shap(&model, x.view(), bg.view()).unwrap();
    assert!(a.values.column(2).iter().all(|v| v.abs() < 1e-6));
    assert!(a.local_accuracy_residual() < 1e-6);
}

#[test]
fn duplicated_columns_share_credit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut model = random_model(5, &mut rng);
    model.weights[4] = model.weights[1];
    let mut x = Array2::from_shape_simple_fn((10, 5), || rng.gen::<f64>());
    let mut bg = Array2::from_shape_simple_fn((40, 5), || rng.gen::<f64>());
    for m in [&mut x, &mut bg] {
        let col = m.column(1).to_owned();
        m.column_mut(4).assign(&col);
    }
    let a = exact_shap(&model, x.view(), bg.view()).unwrap();
    for r in 0..10 {
        assert!((a.values[[r, 1]] - a.values[[r, 4]]).abs() < 1e-2);
    }
}

#[test]
fn kernel_matches_exact_on_eight_factors() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
        let model = random_model(8, &mut rng);
        let x = Array2::from_shape_simple_fn((12, 8), || rng.gen::<f64>());
        let bg = Array2::from_shape_simple_fn((50, 8), || rng.gen::<f64>());
        let exact = exact_shap(&model, x.view(), bg.view()).unwrap();
        let kernel = kernel_shap(&model, x.view(), bg.view(), 256, seed).unwrap();
        let diff = (&exact.values - &kernel.values)
            .mapv(f64::abs)
            .fold(0.0, |a: f64, &b| a.max(b));
        assert!(diff < 1e-2, "seed {seed}: {diff}");
        assert!(kernel.local_accuracy_residual() < 5e-2);
    }
}

#[test]
fn sampled_kernel_stays_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let model = random_model(12, &mut rng);
    let x = Array2::from_shape_simple_fn((6, 12), || rng.gen::<f64>());
    let bg = Array2::from_shape_simple_fn((40, 12), || rng.gen::<f64>());
    let exact = exact_shap(&model, x.view(), bg.view()).unwrap();
    let kernel = kernel_shap(&model, x.view(), bg.view(), 2048, 1).unwrap();
    assert!(!kernel.exact);
    let diff = (&exact.values - &kernel.values)
        .mapv(f64::abs)
        .fold(0.0, |a: f64, &b| a.max(b));
    assert!(diff < 2e-2, "{diff}");
    assert!(kernel.local_accuracy_residual() < 1e-9);
}

#[test]
fn top_factor_separates_and_bottom_overlaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // column 0 separates the sets, columns 1..4 are shared noise
    let n = 200;
    let x = Array2::from_shape_fn((n, 4), |(i, j)| {
        if j == 0 {
            if i < n / 2 {
                rng.gen_range(0.0..0.4)
            } else {
                rng.gen_range(0.6..1.0)
            }
        } else {
            rng.gen::<f64>()
        }
    });
    let set = knowlens_core::explain::FactorSet {
        kind: FactorKind::Embedding,
        factors: (0..4)
            .map(|j| knowlens_core::explain::Factor {
                name: format!("f{j}"),
                kind: FactorKind::Embedding,
                binary: false,
                attribute: format!("f{j}"),
                bin: None,
            })
            .collect(),
    };
    let a: Vec<usize> = (0..n / 2).collect();
    let b: Vec<usize> = (n / 2..n).collect();
    let cfg = ExplainConfig {
        seed: 3,
        ..Default::default()
    };
    let result = explain(x.view(), &set, &a, &b, &cfg).unwrap();
    assert_eq!(result.factors[0].name, "f0");
    assert!(result.discriminator_accuracy > 0.95);
    let top = factor_histogram(x.view(), &set, result.factors[0].index, &a, &b, 20).unwrap();
    let bottom = factor_histogram(x.view(), &set, result.factors[3].index, &a, &b, 20).unwrap();
    assert!(overlap_coefficient(&top) < 0.2);
    assert!(overlap_coefficient(&bottom) > 0.7);
    let again = explain(x.view(), &set, &a, &b, &cfg).unwrap();
    assert_eq!(result, again);
    let shap: Vec<f64> = result.factors.iter().map(|f| f.shap).collect();
    assert!(shap.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn ranking_matches_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut want: Vec<usize> = (0..30).collect();
    want.sort_by(|&i, &j| v[j].abs().partial_cmp(&v[i].abs()).unwrap());
    assert_eq!(rank_factors(&v), want);
}

#[test]
fn rest_histogram_covers_active_samples() {
    let ds = covid();
    let tree = KnowledgeTree::new()
        .create_classes(&ds, ROOT, "continent", 1, &identity_map(6))
        .unwrap();
    let active: Vec<usize> = (0..8).collect();
    let (a, b) = resolve_comparison(&active, &[2, 3], None).unwrap();
    let raw = ds.raw_features();
    let h = histogram(
        &a.iter().map(|&r| raw[[r, 10]]).collect::<Vec<_>>(),
        &b.iter().map(|&r| raw[[r, 10]]).collect::<Vec<_>>(),
        20,
        false,
    )
    .unwrap();
    assert_eq!(h.counts_a.iter().sum::<usize>() + h.counts_b.iter().sum::<usize>(), 8);
    let (cf, set) = factor_matrix(&ds, &tree, FactorKind::Classification).unwrap();
    let h = factor_histogram(cf.view(), &set, 0, &a, &b, 20).unwrap();
    assert_eq!(h.edges.len(), 3);
}
