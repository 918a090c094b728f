//! End-to-end acceptance checks. Runs without the libtest harness so the
//! timing grid never shares the CPU with another test, and prints one
//! PASS/FAIL line per criterion.

use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::Instant;

use knowlens_core::dataset::{load_dataset, normalize_features, parse_schema, FeatureMatrix};
use knowlens_core::embednet::{
    batch_gradients, batch_loss, class_loss, fit, init_model, joint_loss, predict_label, EmbeddingModel, Hyperparams,
    Snapshot,
};
use knowlens_core::explain::{
    default_coalitions, exact_shap, explain, factor_histogram, factor_matrix, kernel_shap, Discriminator,
    ExplainConfig, FactorKind,
};
use knowlens_core::knowledge::{KnowledgeTree, LabelAssignment, ROOT};
use knowlens_core::projection::{project, NeighborParams, ProjectionMethod};
use knowlens_evalbench::experiment::{
    accuracy_runs, compaction_run, grid_monotone, median, synthetic_hp, synthetic_run, timing_grid, Experiment,
    ExperimentFile, Suite,
};
use knowlens_evalbench::{fuzz_dataset, gen_synthetic, knowledge_fuzz, SyntheticSpec};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Criteria whose thresholds depend on the host hardware. They are measured
/// and reported like the rest but do not decide the exit status.
const HARDWARE_BOUND: [&str; 1] = ["training-time trend"];

fn list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn default_experiment(suite: Suite, index: usize) -> Experiment {
    ExperimentFile::default_for(suite).experiments.swap_remove(index)
}

fn synthetic_reproduction() -> Outcome {
    let mut detail = String::new();
    let mut ok = true;
    for seed in 0..3 {
        let r = synthetic_run(&synthetic_hp(), seed, false).expect("synthetic run");
        let pass = r.accuracy >= 0.95 && r.ordered() && r.seconds < 60.0;
        ok &= pass;
        write!(
            detail,
            "seed {seed}: acc {:.3}, d(A,B) {:.3} < d(B,C) {:.3} < d(B,D) {:.3}, {:.1}s; ",
            r.accuracy, r.dist_ab, r.dist_bc, r.dist_bd, r.seconds
        )
        .unwrap();
    }
    outcome(ok, detail.trim_end_matches("; "))
}

fn merged_class() -> Outcome {
    let accs: Vec<f64> = (0..3)
        .map(|seed| {
            synthetic_run(&synthetic_hp(), seed, true)
                .unwrap()
                .merged_accuracy
                .unwrap()
        })
        .collect();
    outcome(
        accs.iter().all(|&a| a >= 0.9),
        format!("2-means on C and D: {} (need >= 0.9)", list(&accs)),
    )
}

fn libras_trend() -> Outcome {
    let Experiment::Accuracy(cfg) = default_experiment(Suite::Accuracy, 0) else {
        unreachable!()
    };
    let start = Instant::now();
    let acc = accuracy_runs(&cfg).expect("libras runs");
    let secs = start.elapsed().as_secs_f64();
    let medians: Vec<f64> = acc.iter().map(|a| median(a)).collect();
    let increasing = medians.windows(2).all(|w| w[0] < w[1]);
    let top = *medians.last().unwrap();
    outcome(
        increasing && top >= 0.80 && secs < 300.0,
        format!(
            "CLR {:?} medians {} (paper 0.69/0.82/0.86), {secs:.1}s",
            cfg.clr,
            list(&medians)
        ),
    )
}

fn timing_trend() -> Outcome {
    let Experiment::Timing(cfg) = default_experiment(Suite::Timing, 0) else {
        unreachable!()
    };
    let grid = timing_grid(&cfg, 0).expect("timing grid");
    let last = grid.last().unwrap();
    let ratio = last.last().unwrap().median / last[0].median;
    let rows: Vec<String> = cfg
        .n
        .iter()
        .zip(&grid)
        .map(|(n, r)| format!("n={n} {}", list(&r.iter().map(|s| s.median).collect::<Vec<_>>())))
        .collect();
    outcome(
        grid_monotone(&grid) && (2.0..=10.0).contains(&ratio),
        format!(
            "medians (s) over dims {:?}: {}; dims ratio at n=1000 {ratio:.2} (need [2, 10])",
            cfg.dims,
            rows.join(", ")
        ),
    )
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut violations) = (0usize, 0usize);
    let mut worst_insensitivity = 0.0f64;
    while checked < 1000 {
        let k = rng.gen_range(2..4);
        let n = rng.gen_range(2 * k..12);
        let dense: Vec<usize> = (0..n)
            .map(|i| if i < 2 * k { i % k } else { rng.gen_range(0..k) })
            .collect();
        let labels: Vec<Option<usize>> = dense.iter().map(|&l| Some(l)).collect();
        let hp = Hyperparams {
            embed_dim: 3,
            hidden_dim: 4,
            seed: rng.gen(),
            ..Default::default()
        };
        let mut model = init_model(n, 4, &hp).unwrap();
        model.h.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        for i in 0..n {
            let lc = class_loss(&model, i, &labels).unwrap();
            let pred = predict_label(&model, i, &labels).unwrap();
            if lc < 0.0 || (lc == 0.0) != (pred == dense[i]) {
                violations += 1;
            }
            let lr: f64 = rng.gen_range(0.0..2.0);
            let bump: f64 = rng.gen_range(-1.0..1.0);
            let d0 = (joint_loss(lr, lc, 0.0).unwrap() - joint_loss(lr, lc + bump, 0.0).unwrap()).abs();
            let d1 = (joint_loss(lr, lc, 1.0).unwrap() - joint_loss(lr + bump, lc, 1.0).unwrap()).abs();
            worst_insensitivity = worst_insensitivity.max(d0).max(d1);
            checked += 1;
        }
    }
    outcome(
        violations == 0 && worst_insensitivity < 1e-12,
        format!("{checked} samples, {violations} violations, endpoint sensitivity {worst_insensitivity:.1e}"),
    )
}

type Access = fn(&mut EmbeddingModel) -> &mut [f64];

fn gradient_check() -> Outcome {
    let step = 1e-5;
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let d = rng.gen_range(2..7);
        let raw = Array2::from_shape_simple_fn((5, d), || rng.gen::<f64>());
        let x = knowlens_core::dataset::normalize_matrix(raw);
        let labels = LabelAssignment::from_dense(&[0, 1, 0, 1, rng.gen_range(0..2)]).unwrap();
        let alpha = rng.gen_range(0.0..=1.0);
        let hp = Hyperparams {
            embed_dim: 3,
            hidden_dim: 5,
            seed: trial,
            ..Default::default()
        };
        let mut model = init_model(5, d, &hp).unwrap();
        model.h.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        model.b1.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        model.b2.mapv_inplace(|_| rng.gen_range(-0.3..0.3));
        let batch: Vec<usize> = (0..5).collect();
        let snap = Snapshot::new(&model.h, &labels.labels, 2);
        let (_, grads) = batch_gradients(&model, &x, &labels.labels, &snap, &batch, alpha);
        let loss =
            |m: &EmbeddingModel, x: &FeatureMatrix| batch_loss(m, x, &labels.labels, &snap, &batch, alpha).objective();
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
                let numeric = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * step);
                let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
    }
    outcome(worst < 1e-4, format!("20 instances, max relative error {worst:.2e}"))
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

fn shap_oracle() -> Outcome {
    let (mut kernel_gap, mut residual, mut null, mut sym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = random_model(8, &mut rng);
        // factor 5 is a null player, factors 2 and 6 are interchangeable
        model.weights[5] = 0.0;
        model.weights[6] = model.weights[2];
        let mut x = Array2::from_shape_simple_fn((16, 8), || rng.gen::<f64>());
        let mut bg = Array2::from_shape_simple_fn((64, 8), || rng.gen::<f64>());
        for m in [&mut x, &mut bg] {
            let col = m.column(2).to_owned();
            m.column_mut(6).assign(&col);
        }
        let exact = exact_shap(&model, x.view(), bg.view()).unwrap();
        let kernel = kernel_shap(&model, x.view(), bg.view(), default_coalitions(8), seed).unwrap();
        kernel_gap = kernel_gap.max((&exact.values - &kernel.values).iter().fold(0.0, |a, v| a.max(v.abs())));
        residual = residual.max(exact.local_accuracy_residual());
        for a in [&exact, &kernel] {
            null = null.max(a.values.column(5).iter().fold(0.0, |m, v| m.max(v.abs())));
            sym = sym.max(
                (&a.values.column(2) - &a.values.column(6))
                    .iter()
                    .fold(0.0, |m, v| m.max(v.abs())),
            );
        }
    }
    outcome(
        kernel_gap < 1e-2 && residual < 1e-6 && null < 1e-2 && sym < 1e-2,
        format!("kernel vs exact {kernel_gap:.1e}, local accuracy {residual:.1e}, null player {null:.1e}, symmetry {sym:.1e}"),
    )
}

fn knowledge_invariants() -> Outcome {
    let ds = fuzz_dataset(400, 11);
    let report = knowledge_fuzz(&ds, 10_000, 12);
    outcome(
        report.violations.is_empty(),
        format!(
            "{} steps, {} applied, {} rejected, {} violations{}",
            report.steps,
            report.applied,
            report.rejected,
            report.violations.len(),
            report
                .violations
                .first()
                .map(|v| format!(" (first: {v})"))
                .unwrap_or_default()
        ),
    )
}

fn clr_compaction() -> Outcome {
    let Experiment::Compaction(cfg) = default_experiment(Suite::Synth, 1) else {
        unreachable!()
    };
    let mut wins = 0;
    let mut detail = Vec::new();
    for &seed in &cfg.seeds {
        let r = compaction_run(&cfg, seed).expect("compaction run");
        wins += usize::from(r[1] < r[0]);
        detail.push(format!("{:.3}<{:.3}", r[1], r[0]));
    }
    outcome(
        wins == cfg.seeds.len(),
        format!(
            "{wins}/{} seeds, ratio at CLR 90 < CLR 0: {}",
            cfg.seeds.len(),
            detail.join(" ")
        ),
    )
}

/// Load, build a tree, train, project and explain; every artifact as JSON.
fn pipeline(seed: u64) -> String {
    let (synth, _) = gen_synthetic(&SyntheticSpec::four_groups(seed)).unwrap();
    let group = synth.attribute_index("group").unwrap();
    let mut csv = String::from("x1,x2,x3,x4,x5,group\n");
    let raw = synth.raw_features();
    for r in 0..synth.n() {
        let cells: Vec<String> = raw.row(r).iter().map(|v| v.to_string()).collect();
        let g = match synth.value(group, r) {
            knowlens_core::dataset::Value::Cat(g) => g,
            _ => unreachable!(),
        };
        writeln!(csv, "{},{g}", cells.join(",")).unwrap();
    }
    let schema = parse_schema(
        r#"[{"name":"x1","kind":"numeric","role":"embedding"},
            {"name":"x2","kind":"numeric","role":"embedding"},
            {"name":"x3","kind":"numeric","role":"embedding"},
            {"name":"x4","kind":"numeric","role":"embedding"},
            {"name":"x5","kind":"numeric","role":"embedding"},
            {"name":"group","kind":"categorical","role":"descriptive"}]"#,
    )
    .unwrap();
    let ds = load_dataset(csv.as_bytes(), &schema).unwrap();
    let map = (0..4).map(|i| (i, i)).collect();
    let tree = KnowledgeTree::new()
        .create_classes(&ds, ROOT, "group", 1, &map)
        .unwrap();
    let labels = tree.derive_labels(&ds).unwrap();
    let hp = Hyperparams {
        seed,
        epochs: 30,
        ..synthetic_hp()
    };
    let (model, losses) = fit(&normalize_features(&ds), &labels, &hp).unwrap();
    let projection = project(
        model.h.view(),
        ProjectionMethod::NeighborEmbedding,
        &NeighborParams::default(),
        seed,
    )
    .unwrap();
    let a: Vec<usize> = (0..ds.n()).filter(|&s| labels.labels[s] == Some(0)).collect();
    let b: Vec<usize> = (0..ds.n()).filter(|&s| labels.labels[s] == Some(1)).collect();
    let (ef, set) = factor_matrix(&ds, &tree, FactorKind::Embedding).unwrap();
    let explanation = explain(
        ef.view(),
        &set,
        &a,
        &b,
        &ExplainConfig {
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    let histogram = factor_histogram(ef.view(), &set, explanation.factors[0].index, &a, &b, 20).unwrap();
    serde_json::to_string(&(tree, labels, model, losses, projection, explanation, histogram)).unwrap()
}

fn determinism() -> Outcome {
    let first = pipeline(3);
    let second = pipeline(3);
    let other = pipeline(4);
    outcome(
        first == second && first != other,
        format!(
            "{} bytes, identical on rerun: {}, differs for another seed: {}",
            first.len(),
            first == second,
            first != other
        ),
    )
}

fn main() -> ExitCode {
    // timing first, while nothing else has warmed or fragmented the heap
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("training-time trend", timing_trend),
        ("synthetic reproduction", synthetic_reproduction),
        ("merged-class separation", merged_class),
        ("libras accuracy trend", libras_trend),
        ("loss identities", loss_identities),
        ("gradient check", gradient_check),
        ("shap oracle equivalence", shap_oracle),
        ("knowledge invariants", knowledge_invariants),
        ("clr compaction", clr_compaction),
        ("pipeline determinism", determinism),
    ];
    let (mut failed, mut gating_failed) = (0, 0);
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let hardware = HARDWARE_BOUND.contains(&name);
        if !o.passed {
            failed += 1;
            gating_failed += usize::from(!hardware);
        }
        println!(
            "{} {name}: {} [{:.1}s]{}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64(),
            if hardware && !o.passed {
                " (hardware-dependent, not gating)"
            } else {
                ""
            }
        );
    }
    println!("acceptance: {}/10 criteria passed", 10 - failed);
    if gating_failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
