//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Pass criterion names (e.g. `AC-3`) to run a subset.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treefuse::bench::random::{random_instance, random_matrix, random_tree};
use treefuse::bench::{
    run_experiment_on, synth_generate, DatasetSource, ExperimentConfig, FusionConfig,
    PerturbationSweep, SplitMode, SweepKind, SyntheticSpec,
};
use treefuse::fusion::{composite_objective, solve_weighted, update_weights};
use treefuse::model::TreeFile;
use treefuse::oracle::{prox_numeric, solve_subgradient, weight_grid_search};
use treefuse::prox::{
    dual_norm_joint, group_soft_threshold, prox_joint, prox_l1, prox_objective,
    soft_threshold_scalar,
};
use treefuse::solver::{grad_f, objective};
use treefuse::{
    prox_tree, solve, CoefficientMatrix, FusionSettings, Group, Method, ProxProblem,
    QualityWeights, SolverSettings, SparsityPrior, TreeGroupStructure,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Tight inner settings so that solver/oracle comparisons measure the
/// optimisation error rather than early stopping.
fn tight() -> SolverSettings {
    SolverSettings {
        max_iterations: 50_000,
        tolerance: 1e-15,
        ..Default::default()
    }
}

fn ac1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_coord, mut worst_obj) = (0.0f64, f64::NEG_INFINITY);
    for _ in 0..200 {
        let s = rng.random_range(1..=4);
        let rows = rng.random_range(1..=6);
        let tree = random_tree(&mut rng, s);
        let beta = rng.random_range(0.1..=2.0);
        let v = random_matrix(&mut rng, rows, s, 3.0);
        let u = prox_tree(&ProxProblem::new(v.view(), &tree, beta).unwrap());
        for j in 0..rows {
            let oracle = prox_numeric(v.row(j), &tree, beta).unwrap();
            for (a, b) in u.row(j).iter().zip(&oracle) {
                worst_coord = worst_coord.max((a - b).abs());
            }
            let row = |x: ndarray::ArrayView1<f64>| x.to_owned().insert_axis(ndarray::Axis(0));
            let ours = prox_objective(row(u.row(j)).view(), row(v.row(j)).view(), &tree, beta);
            let theirs =
                prox_objective(row(oracle.view()).view(), row(v.row(j)).view(), &tree, beta);
            worst_obj = worst_obj.max(ours - theirs);
        }
    }
    outcome(
        worst_coord <= 1e-5 && worst_obj <= 1e-8,
        format!("200 problems: max coordinate deviation {worst_coord:.2e} (≤1e-5), max objective excess {worst_obj:.2e} (≤1e-8)"),
    )
}

fn ac2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = rng.random_range(1..=6);
        let rows = rng.random_range(1..=20);
        let beta = rng.random_range(0.05..2.0);
        let weight = rng.random_range(0.1..2.0);
        let v = random_matrix(&mut rng, rows, s, 2.0);
        let root = TreeGroupStructure::root_only(s, weight).unwrap();
        let joint = prox_joint(v.view(), beta * weight);
        let tree = prox_tree(&ProxProblem::new(v.view(), &root, beta).unwrap());
        worst = worst.max((&tree - &joint).iter().fold(0.0, |m, x| m.max(x.abs())));
        let singles = TreeGroupStructure::singletons(s, weight).unwrap();
        let l1 = prox_l1(v.view(), beta * weight);
        let tree = prox_tree(&ProxProblem::new(v.view(), &singles, beta).unwrap());
        worst = worst.max((&tree - &l1).iter().fold(0.0, |m, x| m.max(x.abs())));
        // direct check of the scalar and group maps
        let row = v.row(0);
        let g = group_soft_threshold(row, beta);
        let norm = row.dot(&row).sqrt();
        for (a, b) in g.iter().zip(row) {
            let expect = if norm > beta {
                b * (1.0 - beta / norm)
            } else {
                0.0
            };
            worst = worst.max((a - expect).abs());
        }
        worst = worst.max(
            (soft_threshold_scalar(row[0], beta)
                - row[0].signum() * (row[0].abs() - beta).max(0.0))
            .abs(),
        );
    }
    outcome(
        worst <= 1e-12,
        format!("100 matrices: max deviation {worst:.2e} (≤1e-12)"),
    )
}

struct TreeSolution {
    tree: TreeGroupStructure,
    coefficients: Array2<f64>,
}

fn ac3_and_8() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let lambdas = [0.01, 0.1, 1.0];
    let mut worst_gap = 0.0f64;
    let mut tree_solutions = Vec::new();
    let mut failures = Vec::new();
    for i in 0..50 {
        let (dict, y) = random_instance(&mut rng, 8, 4, 4, 3).unwrap();
        let lambda = lambdas[i % 3];
        let (prior, tree) = if i % 2 == 0 {
            (SparsityPrior::joint(lambda).unwrap(), None)
        } else {
            let tree = random_tree(&mut rng, 3);
            (
                SparsityPrior::tree(tree.clone(), lambda).unwrap(),
                Some(tree),
            )
        };
        let ours = solve(&dict, &y, &prior, &tight(), None, None).unwrap();
        let oracle = match solve_subgradient(&dict, &y, &prior, 5000) {
            Ok(o) => o,
            Err(e) => {
                failures.push(format!("instance {i}: oracle error {e}"));
                continue;
            }
        };
        let gap = (ours.objective - oracle.objective).abs() / oracle.objective.abs().max(1e-300);
        worst_gap = worst_gap.max(gap);
        if let Some(tree) = tree {
            tree_solutions.push(TreeSolution {
                tree,
                coefficients: ours.coefficients.into_inner(),
            });
        }
    }

    // zero-solution case
    let mut zero_ok = true;
    for _ in 0..10 {
        let (dict, y) = random_instance(&mut rng, 8, 4, 4, 3).unwrap();
        let g0 = grad_f(&CoefficientMatrix::zeros(16, 3), &dict, &y, None).unwrap();
        let threshold = dual_norm_joint(g0.view());
        for factor in [1.0, 1.5] {
            let prior = SparsityPrior::joint(threshold * factor).unwrap();
            let r = solve(&dict, &y, &prior, &SolverSettings::default(), None, None).unwrap();
            zero_ok &= r.coefficients.as_array().iter().all(|&x| x == 0.0);
        }
    }

    let ac3 = outcome(
        worst_gap <= 1e-6 && zero_ok && failures.is_empty(),
        format!(
            "50 instances: max relative gap {worst_gap:.2e} (≤1e-6); zero solution exact: {zero_ok}{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    );

    let mut violations = 0;
    let mut rows = 0;
    for sol in &tree_solutions {
        for row in sol.coefficients.rows() {
            rows += 1;
            let zero: Vec<bool> = row.iter().map(|x| x.abs() <= 1e-10).collect();
            if !sol.tree.is_union_of_groups(&zero) {
                violations += 1;
            }
        }
    }
    let ac8 = outcome(
        violations == 0 && !tree_solutions.is_empty(),
        format!("{} tree solutions, {rows} rows: {violations} rows whose zero set is not a union of groups", tree_solutions.len()),
    );
    (ac3, ac8)
}

fn ac4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (dict, y) = random_instance(&mut rng, 6, 3, 3, 3).unwrap();
        let weights = (i % 2 == 1).then(|| {
            let mu = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let m = [1.5, 2.0, 3.0][i % 3];
            QualityWeights::new(mu, vec![1.0; 3], m).unwrap()
        });
        let a = CoefficientMatrix::new(random_matrix(&mut rng, 9, 3, 1.0));
        let g = grad_f(&a, &dict, &y, weights.as_ref()).unwrap();
        // the smooth term alone: objective minus the penalty
        let prior = SparsityPrior::joint(1.0).unwrap();
        let f = |x: &Array2<f64>| {
            objective(
                &CoefficientMatrix::new(x.clone()),
                &dict,
                &y,
                &prior,
                weights.as_ref(),
            )
            .unwrap()
                - prior.penalty(x.view())
        };
        let mut fd = Array2::zeros(g.raw_dim());
        for idx in ndarray::indices(g.raw_dim()) {
            let mut plus = a.as_array().clone();
            let mut minus = a.as_array().clone();
            plus[idx] += h;
            minus[idx] -= h;
            fd[idx] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        let err = (&g - &fd).iter().map(|x| x * x).sum::<f64>().sqrt()
            / g.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(err);
    }
    outcome(
        worst < 1e-5,
        format!("20 instances: max relative error {worst:.2e} (<1e-5)"),
    )
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_grid = 0.0f64;
    for _ in 0..100 {
        let r = rng.random_range(0.0..5.0);
        let lambda = rng.random_range(0.01..5.0);
        let m = [1.5, 2.0, 3.0][rng.random_range(0..3)];
        let closed = update_weights(&[r], &[lambda], m)[0];
        worst_grid = worst_grid.max((closed - weight_grid_search(r, lambda, m)).abs());
    }

    let mut worst_rise = f64::NEG_INFINITY;
    for seed in 0..20 {
        let data = synth_generate(&SyntheticSpec {
            classes: 3,
            modalities: 3,
            dims: vec![12; 3],
            subspace_dim: 2,
            train_per_class: 5,
            test_per_class: 1,
            latent_groups: vec![],
            noise: vec![0.05, 0.05, 0.5],
            class_overlap: 0.0,
            prototypes: 0,
            prototype_jitter: 0.1,
            seed,
        })
        .unwrap();
        let dict = data.dictionary().unwrap();
        let prior = if seed % 2 == 0 {
            SparsityPrior::joint(0.02).unwrap()
        } else {
            SparsityPrior::tree(TreeGroupStructure::root_only(3, 1.0).unwrap(), 0.02).unwrap()
        };
        let settings = FusionSettings {
            alternations: 10,
            fuzzifier: 2.0,
            ..Default::default()
        };
        let run = solve_weighted(&dict, &data.test.samples[0], &prior, &settings).unwrap();
        for w in run.trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
        let last = composite_objective(
            &run.coefficients,
            &dict,
            &data.test.samples[0],
            &prior,
            &run.weights,
        )
        .unwrap();
        worst_rise = worst_rise.max((last - run.trace[run.trace.len() - 1]).abs() - 1e-12);
    }
    outcome(
        worst_grid <= 1e-3 && worst_rise <= 1e-6,
        format!("closed form vs grid max {worst_grid:.2e} (≤1e-3); 20 runs, largest trace increase {worst_rise:.2e} (≤1e-6)"),
    )
}

fn ac6() -> Outcome {
    let levels = vec![0.0, 0.5, 1.0, 2.0];
    let methods = vec![
        Method::SrcPerModality,
        Method::Hsrc,
        Method::Jsrc,
        Method::JsrcW,
    ];
    let seeds = 10;
    // [method][level] sums
    let mut ccr = vec![vec![0.0; levels.len()]; methods.len()];
    let mut mu_corrupted = vec![0.0; levels.len()];
    for seed in 0..seeds {
        let spec = SyntheticSpec {
            classes: 5,
            modalities: 3,
            dims: vec![32; 3],
            subspace_dim: 3,
            train_per_class: 20,
            test_per_class: 20,
            latent_groups: vec![],
            noise: vec![0.003; 3],
            class_overlap: 0.0,
            prototypes: 0,
            prototype_jitter: 0.1,
            seed,
        };
        let config = ExperimentConfig {
            schema: 1,
            seed,
            dataset: DatasetSource::Synthetic(spec.clone()),
            methods: methods.clone(),
            lambda: 3e-4,
            tree: None,
            weight_scale: None,
            solver: SolverSettings::default(),
            fusion: FusionConfig::default(),
            perturbation: Some(PerturbationSweep {
                modality: 3,
                kind: SweepKind::Gaussian,
                levels: levels.clone(),
            }),
            split: SplitMode::Holdout,
            rank_budget: None,
            positive_class: None,
        };
        let out = run_experiment_on(&config, &synth_generate(&spec).unwrap()).unwrap();
        for e in &out.summary {
            let m = methods.iter().position(|&x| x == e.method).unwrap();
            ccr[m][e.level_index] += e.mean_ccr / seeds as f64;
            if let Some(mu) = &e.mean_mu {
                mu_corrupted[e.level_index] += mu[2] / seeds as f64;
            }
        }
    }
    let jsrc = methods.iter().position(|&m| m == Method::Jsrc).unwrap();
    let jsrc_w = methods.iter().position(|&m| m == Method::JsrcW).unwrap();
    let last = levels.len() - 1;
    let drop = mu_corrupted[0] - mu_corrupted[last];
    let clean_ok = ccr.iter().all(|row| row[0] >= 0.95);
    let weighted_ok = ccr[jsrc_w][last] >= ccr[jsrc][last];
    let table: Vec<String> = methods
        .iter()
        .zip(&ccr)
        .map(|(m, row)| {
            format!(
                "{m} {}",
                row.iter()
                    .map(|c| format!("{c:.3}"))
                    .collect::<Vec<_>>()
                    .join("/")
            )
        })
        .collect();
    outcome(
        drop >= 0.2 && clean_ok && weighted_ok,
        format!(
            "μ corrupted σ=0→2: {:.3}→{:.3} (drop {drop:.3}, need ≥0.2); JSRC_W {:.3} vs JSRC {:.3} at σ=2 (need ≥); all ≥0.95 at σ=0: {clean_ok}; CCR by σ: {}",
            mu_corrupted[0],
            mu_corrupted[last],
            ccr[jsrc_w][last],
            ccr[jsrc][last],
            table.join(", ")
        ),
    )
}

fn pair_tree() -> TreeFile {
    let g = |m: Vec<usize>| Group::new(m, 1.0);
    TreeFile {
        groups: vec![
            g(vec![1]),
            g(vec![2]),
            g(vec![1, 2]),
            g(vec![3]),
            g(vec![4]),
            g(vec![3, 4]),
            g(vec![1, 2, 3, 4]),
        ],
    }
}

fn ac7() -> Outcome {
    let (mut sum_j, mut sum_m, mut wins) = (0.0, 0.0, 0);
    let mut per_seed = Vec::new();
    for seed in 0..10u64 {
        let spec = SyntheticSpec {
            classes: 5,
            modalities: 4,
            dims: vec![32; 4],
            subspace_dim: 3,
            train_per_class: 6,
            test_per_class: 10,
            latent_groups: vec![vec![1, 2], vec![3, 4]],
            noise: vec![0.1; 4],
            class_overlap: 0.8,
            prototypes: 4,
            prototype_jitter: 0.1,
            seed,
        };
        let config = ExperimentConfig {
            schema: 1,
            seed,
            dataset: DatasetSource::Synthetic(spec.clone()),
            methods: vec![Method::Jsrc, Method::Mtsrc],
            lambda: 0.01,
            tree: Some(pair_tree()),
            weight_scale: None,
            solver: SolverSettings::default(),
            fusion: FusionConfig::default(),
            perturbation: None,
            split: SplitMode::Holdout,
            rank_budget: None,
            positive_class: None,
        };
        let out = run_experiment_on(&config, &synth_generate(&spec).unwrap()).unwrap();
        let (j, m) = (out.summary[0].mean_ccr, out.summary[1].mean_ccr);
        sum_j += j;
        sum_m += m;
        wins += usize::from(m > j);
        per_seed.push(format!("{j:.2}/{m:.2}"));
    }
    let (mean_j, mean_m) = (sum_j / 10.0, sum_m / 10.0);
    outcome(
        mean_m >= mean_j - 0.01 && wins >= 6,
        format!(
            "mean CCR MTSRC {mean_m:.3} vs JSRC {mean_j:.3}; MTSRC strictly better in {wins}/10 seeds (JSRC/MTSRC: {})",
            per_seed.join(" ")
        ),
    )
}

fn ac9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "schema": 1,
        "seed": 9,
        "dataset": {"synthetic": {
            "classes": 3, "modalities": 3, "dims": [10, 10, 10], "subspace_dim": 2,
            "train_per_class": 5, "test_per_class": 4, "noise": [0.02, 0.02, 0.02], "seed": 9
        }},
        "methods": ["JSRC", "JSRC_W", "MTSRC", "HSRC"],
        "lambda": 0.01,
        "tree": {"groups": [{"members": [1, 2], "weight": 1.0}, {"members": [1, 2, 3], "weight": 1.0}]},
        "perturbation": {"modality": 2, "kind": "gaussian", "levels": [0.0, 1.0]},
        "split": {"mode": "two_way_swap"},
        "positive_class": 1
    });
    let config_path = tmp.path().join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let run = |dir: &Path| {
        Command::new(env!("CARGO_BIN_EXE_treefuse"))
            .args(["experiment", "--config"])
            .arg(&config_path)
            .arg("--out-dir")
            .arg(dir)
            .status()
            .unwrap()
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (sa, sb) = (run(&a), run(&b));
    if !sa.success() || !sb.success() {
        return outcome(false, format!("experiment exited with {sa} / {sb}"));
    }
    let list = |dir: &Path| {
        let mut names: Vec<String> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    };
    let names = list(&a);
    let same_names = names == list(&b);
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(a.join(n)).ok() != fs::read(b.join(n)).ok())
        .collect();
    outcome(
        same_names && differing.is_empty() && names.contains(&"summary.json".to_string()),
        format!("{} files per run, {} differ", names.len(), differing.len()),
    )
}

type Report = (&'static str, Outcome);
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn record(
    results: &mut Vec<Report>,
    name: &'static str,
    title: &str,
    mut o: Outcome,
    elapsed: Duration,
) {
    let budget = budget(name);
    let in_time = budget.is_none_or(|b| elapsed <= b);
    o.pass &= in_time;
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    let limit = budget.map_or(String::new(), |b| format!(" of {}s", b.as_secs()));
    let overrun = if in_time { "" } else { " (over budget)" };
    println!(
        "{name} {verdict} {title}: {} [{:.1}s{limit}{overrun}]",
        o.detail,
        elapsed.as_secs_f64()
    );
    results.push((name, o));
}

/// Runtime limit per criterion.
fn budget(name: &str) -> Option<Duration> {
    let secs = match name {
        "AC-1" => 30,
        "AC-2" => 5,
        "AC-3" => 120,
        "AC-4" => 10,
        "AC-5" => 60,
        "AC-6" | "AC-7" => 600,
        _ => return None,
    };
    Some(Duration::from_secs(secs))
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| f == name);
    let mut results: Vec<Report> = Vec::new();
    let single: [Criterion; 7] = [
        ("AC-1", "prox exactness", ac1),
        ("AC-2", "reduction identities", ac2),
        ("AC-4", "gradient check", ac4),
        ("AC-5", "weight update", ac5),
        ("AC-6", "robustness to a corrupted modality", ac6),
        ("AC-7", "structure advantage", ac7),
        ("AC-9", "determinism", ac9),
    ];
    for (name, title, f) in &single[..2] {
        if wanted(name) {
            let start = Instant::now();
            let o = f();
            record(&mut results, name, title, o, start.elapsed());
        }
    }
    if wanted("AC-3") || wanted("AC-8") {
        let start = Instant::now();
        let (ac3, ac8) = ac3_and_8();
        let elapsed = start.elapsed();
        for (name, title, o) in [
            ("AC-3", "solver optimality", ac3),
            ("AC-8", "hierarchical zero pattern", ac8),
        ] {
            if wanted(name) {
                record(&mut results, name, title, o, elapsed);
            }
        }
    }
    for (name, title, f) in &single[2..] {
        if wanted(name) {
            let start = Instant::now();
            let o = f();
            record(&mut results, name, title, o, start.elapsed());
        }
    }

    let failed: Vec<&str> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({})", failed.join(", "))
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
