//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_gap, desk_network, finite_difference_check, gaussian_matrix, gini_oracle, gradient_fixture, paired_fixture,
    paired_t_by_hand, random_fixture, rng, student_t_two_sided_odd,
};
use fairmtl::baselines::{forest_fit, ForestConfig, MaxFeatures};
use fairmtl::explain::{gini_importance, rank_report, shapley_exact, shapley_sampled, Scorer};
use fairmtl::fairmtl::{FairMtlParams, Mode, ModelShape};
use fairmtl::ingest::{generate_synthetic, stratified_split, SplitRatios, SynthSpec};
use fairmtl::metrics::{accuracy, bootstrap_ci, dp_difference, eo_difference, paired_bootstrap_ttest};
use fairmtl::subgroup::{infer_subgroups, kmeans_fit, SubgroupConfig};
use fairmtl::training::{
    compute_weights, data_loss, run_ablation, AblationOptions, AblationResult, Batch, TrainingConfig, Variant,
};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_correctness() -> Outcome {
    let cases = [(true, Mode::Eval, 3), (true, Mode::Train, 4), (false, Mode::Eval, 5), (false, Mode::Train, 6)];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (shared, mode, seed) in cases {
        let params = desk_network(shared, seed);
        let data = gradient_fixture(24, seed + 1);
        let weights = compute_weights(&data.z, 2).expect("weights");
        let batch = Batch {
            x: &data.x,
            y: &data.y,
            z: &data.z,
        };
        let r = finite_difference_check(&params, batch, &weights, 1e-2, mode, 1e-4, 1e-6);
        worst = worst.max(r.max_relative_error);
        checked += r.checked;
    }
    outcome(worst < 1e-4, format!("max relative error {worst:.2e} over {checked} parameters"))
}

fn fairness_oracle() -> Outcome {
    let mut compared = 0;
    let mut mismatches = 0;
    for seed in 0..50 {
        let f = random_fixture(1000 + seed);
        for c in 0..f.num_classes {
            let expected = brute_gap(&f.y, &f.pred, &f.groups, f.num_groups, c);
            let dp = dp_difference(&f.pred, &f.groups, f.num_groups, c).expect("dp");
            let eo = eo_difference(&f.y, &f.pred, &f.groups, f.num_groups, c).expect("eo");
            mismatches += usize::from(dp.value != expected.dp) + usize::from(eo.value != expected.eo);
            compared += 2;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of {compared} gaps differ from brute-force counts"))
}

struct Network(FairMtlParams);

impl Scorer for Network {
    fn n_features(&self) -> usize {
        self.0.shape.input_dim
    }

    fn predict_proba(&self, x: &Array2<f64>) -> fairmtl::Result<Array2<f64>> {
        self.0.predict_proba(x, &vec![1; x.nrows()])
    }
}

fn shapley_axioms() -> Outcome {
    let mut params = FairMtlParams::init(ModelShape::new(6, &[8], 1, 3, 0.0), 31).expect("init");
    let first = &mut params.encoders[0].blocks[0].dense.weight;
    first.row_mut(5).fill(0.0);
    let shared = first.row(2).to_owned();
    first.row_mut(3).assign(&shared);
    let model = Network(params);
    let mut r = rng(32);
    let mut background = gaussian_matrix(50, 6, &mut r);
    background.axis_iter_mut(Axis(0)).for_each(|mut row| row[3] = row[2]);
    let mut instance: Array1<f64> = (0..6).map(|_| r.random_range(-2.0..2.0)).collect();
    instance[3] = instance[2];

    let exact = shapley_exact(&model, 0, instance.view(), &background, 1).expect("exact");
    let dummy = exact.attributions[5].abs();
    let symmetry = (exact.attributions[2] - exact.attributions[3]).abs();
    let sampled = shapley_sampled(&model, 0, instance.view(), &background, 1, 2000, 33).expect("sampled");
    let se = sampled.std_errors.as_ref().expect("standard errors");
    let worst_z = (0..6)
        .map(|j| {
            let diff = (sampled.attributions[j] - exact.attributions[j]).abs();
            if se[j] > 0.0 { diff / se[j] } else if diff == 0.0 { 0.0 } else { f64::INFINITY }
        })
        .fold(0.0, f64::max);
    let pass = exact.local_accuracy_gap < 1e-6 && dummy < 1e-9 && symmetry < 1e-9 && worst_z <= 3.0;
    outcome(
        pass,
        format!(
            "efficiency gap {:.1e}, dummy {dummy:.1e}, symmetry {symmetry:.1e}, sampled within {worst_z:.2} SE",
            exact.local_accuracy_gap
        ),
    )
}

fn gini_oracle_check() -> Outcome {
    let mut r = rng(41);
    let x = gaussian_matrix(400, 3, &mut r);
    let y: Vec<usize> = x.column(0).iter().map(|&v| usize::from(v > 0.3)).collect();
    let config = ForestConfig {
        n_trees: 10,
        max_features: MaxFeatures::All,
        seed: 42,
        ..ForestConfig::default()
    };
    let model = forest_fit(&x, &y, 2, &config).expect("forest");
    let raw = gini_importance(&model, false);
    let oracle = gini_oracle(&model, &x, &y);
    let worst = raw.scores.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let names: Vec<String> = (0..3).map(|j| format!("x{j}")).collect();
    let top = rank_report(&gini_importance(&model, true).scores, &names, 1).expect("ranks")[0].index;
    outcome(worst < 1e-9 && top == 0, format!("max deviation {worst:.1e}, top feature x{top}"))
}

fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let mut x = gaussian_matrix(n, 3, &mut r);
    let truth: Vec<usize> = (0..n).map(|i| usize::from(i % 5 == 0)).collect();
    for (mut row, &g) in x.axis_iter_mut(Axis(0)).zip(&truth) {
        if g == 1 {
            row += 7.0;
        }
    }
    (x, truth)
}

fn agreement(labels: &[usize], truth: &[usize]) -> f64 {
    let same = labels.iter().zip(truth).filter(|(&l, &t)| l - 1 == t).count();
    same.max(labels.len() - same) as f64 / labels.len() as f64
}

fn subgroup_recovery() -> Outcome {
    let (x, truth) = blobs(2000, 51);
    let fit = kmeans_fit(&x, 2, 100, 52).expect("kmeans");
    let fitted = agreement(&fit.labels, &truth);
    let (held, held_truth) = blobs(1000, 53);
    let held_out = agreement(&fit.nearest(&held).expect("assign"), &held_truth);
    outcome(
        fitted >= 0.99 && held_out >= 0.98,
        format!("fitted agreement {fitted:.4}, held-out agreement {held_out:.4}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

fn ablation(n_rows: usize, seed: u64, config: &TrainingConfig) -> AblationResult {
    let synth = generate_synthetic(&SynthSpec::biased(n_rows, seed)).expect("synthetic cohort");
    let cohort = stratified_split(&synth.cohort, SplitRatios::default(), seed).expect("split");
    let (_, routing) = infer_subgroups(&cohort, &SubgroupConfig { seed, ..Default::default() }).expect("subgroups");
    run_ablation(&cohort, &routing, 2, config, AblationOptions::default()).expect("ablation")
}

fn fairness_improvement() -> Outcome {
    let mut ratios = Vec::new();
    let mut ratios_sex = Vec::new();
    let mut accuracy_gaps = Vec::new();
    for seed in 0..5 {
        let config = TrainingConfig { seed, ..TrainingConfig::desk() };
        let result = ablation(4000, seed, &config);
        let full = result.row(Variant::Full).expect("full row");
        let plain = result.row(Variant::NoTaskHeads).expect("plain row");
        let eo = |r: &fairmtl::training::AblationRow| r.eo.iter().sum::<f64>() / r.eo.len() as f64;
        ratios.push(eo(full) / eo(plain));
        ratios_sex.push(full.eo[0] / plain.eo[0]);
        accuracy_gaps.push((full.accuracy - plain.accuracy).abs());
    }
    let ratio = median(ratios);
    let gap = median(accuracy_gaps);
    outcome(
        ratio <= 0.7 && gap <= 0.05,
        format!("median EO ratio {ratio:.3} (sex only {:.3}), median accuracy gap {gap:.3}", median(ratios_sex)),
    )
}

fn ablation_table() -> Outcome {
    let config = TrainingConfig {
        seed: 61,
        max_epochs: 20,
        ..TrainingConfig::desk()
    };
    let a = ablation(1200, 61, &config);
    let b = ablation(1200, 61, &config);
    let shape_ok = a.rows.len() == 4
        && a.columns().len() == 6
        && a.rows.iter().all(|r| r.auc.is_some() && r.dp.len() == 2 && r.eo.len() == 2);
    let deterministic = a.rows == b.rows && a.to_csv() == b.to_csv();
    outcome(
        shape_ok && deterministic,
        format!("{} variants x {} metrics, repeat run identical: {deterministic}", a.rows.len(), a.columns().len()),
    )
}

fn statistical_machinery() -> Outcome {
    let mut r = rng(71);
    let y: Vec<usize> = (0..500).map(|_| r.random_range(0..4)).collect();
    let pred: Vec<usize> = y.iter().map(|&c| if r.random_bool(0.6) { c } else { r.random_range(0..4) }).collect();
    let metric = |rows: &[usize]| {
        let yy: Vec<usize> = rows.iter().map(|&i| y[i]).collect();
        let pp: Vec<usize> = rows.iter().map(|&i| pred[i]).collect();
        Some(accuracy(&yy, &pp))
    };
    let first = bootstrap_ci(metric, y.len(), 0.95, 1000, 72).expect("ci");
    let again = bootstrap_ci(metric, y.len(), 0.95, 1000, 72).expect("ci");
    let contains = first.lower <= first.point && first.point <= first.upper;

    let (a, b) = paired_fixture();
    let (_, t) = paired_t_by_hand(&a, &b);
    let p = student_t_two_sided_odd(t, 29);
    let test = paired_bootstrap_ttest(&a, &b).expect("t-test");
    let t_err = (test.t - t).abs();
    let p_err = (test.p - p).abs();
    outcome(
        first == again && contains && t_err < 1e-6 && p_err < 1e-6,
        format!("CI repeatable: {}, contains point: {contains}, t error {t_err:.1e}, p error {p_err:.1e}", first == again),
    )
}

fn weight_identities() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(80 + seed);
        let k = r.random_range(1..8);
        let z: Vec<usize> = (0..r.random_range(k..2000)).map(|i| if i < k { i + 1 } else { r.random_range(1..=k) }).collect();
        let w = compute_weights(&z, k).expect("weights");
        worst_sum = worst_sum.max((w.w.iter().sum::<f64>() - 1.0).abs());
        let mass: Vec<f64> = (0..k).map(|g| w.w[g] * w.counts[g] as f64).collect();
        let spread = mass.iter().copied().fold(f64::NEG_INFINITY, f64::max) - mass.iter().copied().fold(f64::INFINITY, f64::min);
        worst_mass = worst_mass.max(spread);
    }
    let mut worst_ce: f64 = 0.0;
    for c in 2..10 {
        let probs = Array2::from_elem((1, c), 1.0 / c as f64);
        let ce = data_loss(&probs, &[c - 1], &[1], &fairmtl::training::SubgroupWeights { w: vec![1.0], counts: vec![1] });
        worst_ce = worst_ce.max((ce - (c as f64).ln()).abs());
    }
    outcome(
        worst_sum < 1e-9 && worst_mass < 1e-9 && worst_ce < 1e-9,
        format!("sum error {worst_sum:.1e}, mass spread {worst_mass:.1e}, uniform CE error {worst_ce:.1e}"),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 9] = [
        ("gradient correctness", gradient_correctness, Duration::from_secs(10)),
        ("fairness metric oracle", fairness_oracle, Duration::from_secs(5)),
        ("Shapley axioms", shapley_axioms, Duration::MAX),
        ("Gini importance oracle", gini_oracle_check, Duration::MAX),
        ("subgroup recovery", subgroup_recovery, Duration::MAX),
        ("end-to-end fairness improvement", fairness_improvement, Duration::from_secs(300)),
        ("ablation table", ablation_table, Duration::MAX),
        ("statistical machinery", statistical_machinery, Duration::MAX),
        ("weighted-loss identities", weight_identities, Duration::MAX),
    ];
    let mut failures = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = result.pass && in_time;
        failures += usize::from(!pass);
        let budget_note = if *budget == Duration::MAX {
            String::new()
        } else {
            format!(" / {}s budget", budget.as_secs())
        };
        println!(
            "criterion {}: {} | {name}: {} ({:.2}s{budget_note})",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
