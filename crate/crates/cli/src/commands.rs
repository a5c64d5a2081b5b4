use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fairmtl::baselines::{forest_fit_cohort, ForestConfig, ForestModel};
use fairmtl::explain::{
    background_sample, gini_importance, rank_report, ranking_csv, shapley_exact, shapley_sampled, Scorer,
};
use fairmtl::fairmtl::predict_labels;
use fairmtl::ingest::{
    generate_synthetic, load_csv, stratified_split, Cohort, FeatureSchema, Split, SplitRatios, SynthSpec, RAW_CSV,
    SCHEMA_JSON,
};
use fairmtl::metrics::{compare_disparity, fairness_report, BootstrapSettings, Disparity};
use fairmtl::subgroup::{infer_subgroups as fit_subgroups, FitRows, SubgroupConfig, SubgroupModel};
use fairmtl::training::{self, run_ablation, AblationOptions, Checkpoint, TrainingConfig, Variant};
use ndarray::Array2;
use serde_json::json;

use crate::failure::{load_with, read_json, CliResult, Failure};
use crate::manifest::RunManifest;
use crate::{
    AblateArgs, EvaluateArgs, ExplainArgs, InferArgs, Method, ModelKind, NetworkArgs, Preset, PreprocessArgs,
    SubgroupArgs, SynthArgs, TrainArgs,
};

pub const SUBGROUPS_JSON: &str = "subgroups.json";
pub const ROUTING_CSV: &str = "routing.csv";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";
pub const FOREST_JSON: &str = "forest.json";
pub const TRAINING_LOG: &str = "training_log.jsonl";
pub const REPORT_STEM: &str = "report";
pub const GINI_CSV: &str = "gini_importance.csv";

/// Exact explanations must add up to the prediction within this.
const LOCAL_ACCURACY_TOLERANCE: f64 = 1e-6;

pub struct Global {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn finish(global: &Global, manifest: RunManifest, started: Instant) -> CliResult<()> {
    manifest.append(&global.out, started.elapsed())?;
    Ok(())
}

fn read_cohort(dir: &Path) -> CliResult<Cohort> {
    if !dir.is_dir() {
        return Err(Failure::input(format!("{}: not a cohort directory", dir.display())));
    }
    Cohort::read(dir).map_err(|e| Failure::from(e).context(dir))
}

pub fn synth(global: &Global, args: SynthArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut spec = match &args.spec {
        Some(path) => read_json::<SynthSpec>(path)?,
        None => SynthSpec::biased(args.rows, 0),
    };
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }
    let synth = generate_synthetic(&spec)?;
    synth.raw.write_csv(&global.path(RAW_CSV))?;
    fs::write(global.path(SCHEMA_JSON), serde_json::to_string_pretty(&synth.schema)?)?;

    let mut manifest = RunManifest::new("synth", spec.seed);
    manifest.config = serde_json::to_value(&spec)?;
    manifest.inputs.extend(args.spec);
    manifest.outputs = vec![RAW_CSV.into(), SCHEMA_JSON.into()];
    finish(global, manifest, started)
}

pub fn preprocess(global: &Global, args: PreprocessArgs) -> CliResult<()> {
    let started = Instant::now();
    let schema: FeatureSchema = read_json(&args.schema)?;
    schema.validate()?;
    let ratios = SplitRatios::new(args.split[0], args.split[1], args.split[2])?;
    if !args.input.exists() {
        return Err(Failure::input(format!("{}: no such file", args.input.display())));
    }
    let cohort = load_csv(&args.input, &schema).map_err(|e| Failure::from(e).context(&args.input))?;
    let cohort = stratified_split(&cohort, ratios, global.seed())?;
    cohort.write(&global.out)?;

    let mut manifest = RunManifest::new("preprocess", global.seed());
    manifest.config = json!({
        "split": { "train": ratios.train, "val": ratios.val, "test": ratios.test },
        "rows": cohort.len(),
        "dropped_rows": cohort.dropped_rows(),
        "features": cohort.num_features(),
    });
    manifest.inputs = vec![args.input, args.schema];
    manifest.outputs = vec![
        fairmtl::ingest::ENCODED_CSV.into(),
        fairmtl::ingest::ENCODED_SIDECAR.into(),
    ];
    finish(global, manifest, started)
}

fn write_routing(path: &Path, cohort: &Cohort, labels: &[usize]) -> CliResult<()> {
    let mut out = String::from("row,split,subgroup\n");
    for (i, (label, split)) in labels.iter().zip(cohort.split()).enumerate() {
        out.push_str(&format!("{i},{},{label}\n", split.as_str()));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn infer_subgroups(global: &Global, args: InferArgs) -> CliResult<()> {
    let started = Instant::now();
    let cohort = read_cohort(&args.cohort)?;
    let mut config: SubgroupConfig = match &global.config {
        Some(path) => read_json(path)?,
        None => SubgroupConfig::default(),
    };
    config.k = args.k;
    config.seed = global.seed.unwrap_or(config.seed);
    if let Some(b) = args.bottleneck {
        config.bottleneck = b;
    }
    if let Some(e) = args.epochs {
        config.autoencoder_epochs = e;
    }
    if args.all_rows {
        config.fit_rows = FitRows::All;
    }
    let (model, labels) = fit_subgroups(&cohort, &config)?;
    model.save(&global.path(SUBGROUPS_JSON))?;
    write_routing(&global.path(ROUTING_CSV), &cohort, &labels)?;

    let mut manifest = RunManifest::new("infer-subgroups", config.seed);
    manifest.config = serde_json::to_value(&config)?;
    manifest.inputs = vec![args.cohort];
    manifest.inputs.extend(global.config.clone());
    manifest.outputs = vec![SUBGROUPS_JSON.into(), ROUTING_CSV.into()];
    finish(global, manifest, started)
}

fn training_config(global: &Global, network: &NetworkArgs) -> CliResult<TrainingConfig> {
    let mut config = match &global.config {
        Some(path) => read_json::<TrainingConfig>(path)?,
        None => match network.preset {
            Preset::Full => TrainingConfig::default(),
            Preset::Desk => TrainingConfig::desk(),
        },
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(e) = network.epochs {
        config.max_epochs = e;
    }
    if let Some(lr) = network.lr {
        config.learning_rate = lr;
    }
    if let Some(b) = network.batch_size {
        config.batch_size = b;
    }
    config.validate()?;
    Ok(config)
}

/// Routing for every cohort row, fitted or loaded; `None` when heads are off.
fn routing(
    global: &Global,
    cohort: &Cohort,
    args: &SubgroupArgs,
    seed: u64,
) -> CliResult<(SubgroupModel, Vec<usize>, Option<PathBuf>)> {
    match &args.subgroups {
        Some(path) => {
            let model = load_with(path, SubgroupModel::load)?;
            let labels = model.assign(&cohort.sensitive_matrix())?;
            Ok((model, labels, Some(path.clone())))
        }
        None => {
            let config = SubgroupConfig {
                k: args.k,
                seed,
                ..SubgroupConfig::default()
            };
            let (model, labels) = fit_subgroups(cohort, &config)?;
            model.save(&global.path(SUBGROUPS_JSON))?;
            Ok((model, labels, None))
        }
    }
}

pub fn train(global: &Global, args: TrainArgs) -> CliResult<()> {
    let started = Instant::now();
    let cohort = read_cohort(&args.cohort)?;
    let mut manifest;
    match args.model {
        ModelKind::Forest => {
            let mut config = ForestConfig {
                seed: global.seed(),
                ..ForestConfig::default()
            };
            if let Some(path) = &global.config {
                config = read_json(path)?;
                config.seed = global.seed.unwrap_or(config.seed);
            }
            if let Some(t) = args.trees {
                config.n_trees = t;
            }
            if args.max_depth.is_some() {
                config.max_depth = args.max_depth;
            }
            let model = forest_fit_cohort(&cohort, &config)?;
            model.save(&global.path(FOREST_JSON))?;
            manifest = RunManifest::new("train", config.seed);
            manifest.config = json!({ "model": "forest", "forest": config });
            manifest.outputs = vec![FOREST_JSON.into()];
        }
        ModelKind::Fairmtl => {
            let mut config = training_config(global, &args.network)?;
            if let Some(name) = &args.ablation {
                config = name.parse::<Variant>()?.apply(&config);
            }
            let mut outputs: Vec<PathBuf> = Vec::new();
            let (subgroups, labels, k) = if config.ablation.task_heads {
                let (model, labels, loaded) = routing(global, &cohort, &args.subgroups, config.seed)?;
                if loaded.is_none() {
                    outputs.push(SUBGROUPS_JSON.into());
                }
                let k = model.k;
                (Some(model), labels, k)
            } else {
                (None, vec![1; cohort.len()], 1)
            };
            let (params, log) = training::train(&cohort, &labels, k, &config)?;
            let checkpoint = Checkpoint::new(params, config.clone(), &cohort, subgroups)?;
            checkpoint.save(&global.path(CHECKPOINT_JSON))?;
            fs::write(global.path(TRAINING_LOG), log.to_json_lines()?)?;
            outputs.extend([CHECKPOINT_JSON.into(), TRAINING_LOG.into()]);
            manifest = RunManifest::new("train", config.seed);
            manifest.config = json!({
                "model": "fairmtl",
                "training": config,
                "num_subgroups": checkpoint.num_subgroups,
                "best_epoch": log.best_epoch,
                "best_val_macro_f1": log.best_val_macro_f1,
                "stopped_early": log.stopped_early,
            });
            manifest.inputs.extend(args.subgroups.subgroups.clone());
            manifest.outputs = outputs;
        }
    }
    manifest.inputs.insert(0, args.cohort);
    manifest.inputs.extend(global.config.clone());
    finish(global, manifest, started)
}

/// A fitted model of either family.
enum Model {
    Network(Box<Checkpoint>),
    Forest(ForestModel),
}

impl Model {
    fn load(path: &Path) -> CliResult<Self> {
        let value: serde_json::Value = read_json(path)?;
        if value.get("trees").is_some() {
            Ok(Model::Forest(load_with(path, ForestModel::load)?))
        } else {
            Ok(Model::Network(Box::new(load_with(path, Checkpoint::load)?)))
        }
    }

    fn scorer(&self) -> &dyn Scorer {
        match self {
            Model::Network(c) => c.as_ref(),
            Model::Forest(f) => f,
        }
    }

    fn check_compatible(&self, cohort: &Cohort) -> CliResult<()> {
        match self {
            Model::Network(c) => c.check_compatible(cohort)?,
            Model::Forest(f) => {
                if f.n_features != cohort.num_features() || f.num_classes != cohort.num_classes() {
                    return Err(Failure::input(format!(
                        "forest expects {} features and {} classes, cohort has {} and {}",
                        f.n_features,
                        f.num_classes,
                        cohort.num_features(),
                        cohort.num_classes()
                    )));
                }
            }
        }
        Ok(())
    }
}

fn test_predictions(model: &Model, x: &Array2<f64>) -> CliResult<(Vec<usize>, Array2<f64>)> {
    let proba = model.scorer().predict_proba(x)?;
    Ok((predict_labels(&proba), proba))
}

fn model_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn evaluate(global: &Global, args: EvaluateArgs) -> CliResult<()> {
    let started = Instant::now();
    let cohort = read_cohort(&args.cohort)?;
    let model = Model::load(&args.model)?;
    model.check_compatible(&cohort)?;
    let test = cohort.rows(Split::Test);
    if test.is_empty() {
        return Err(Failure::input("cohort has no test rows"));
    }
    let x = cohort.select_x(&test);
    let y = cohort.select_y(&test);
    let mut attributes: Vec<_> = cohort.sensitive_attributes().into_iter().map(|a| a.select(&test)).collect();
    if !args.attributes.is_empty() {
        if let Some(missing) = args.attributes.iter().find(|n| !attributes.iter().any(|a| &a.name == *n)) {
            return Err(Failure::input(format!("unknown sensitive attribute {missing:?}")));
        }
        attributes.retain(|a| args.attributes.contains(&a.name));
    }
    let settings = (args.bootstrap > 0).then(|| BootstrapSettings::new(args.bootstrap, global.seed()));
    let (pred, proba) = test_predictions(&model, &x)?;
    let mut report = fairness_report(&y, &pred, &proba, &attributes, settings)?;

    if let Some(other_path) = &args.compare {
        let Some(settings) = settings else {
            return Err(Failure::input("--compare needs --bootstrap greater than 0"));
        };
        let other = Model::load(other_path)?;
        other.check_compatible(&cohort)?;
        let (other_pred, _) = test_predictions(&other, &x)?;
        let baseline = model_name(other_path);
        let candidate = model_name(&args.model);
        for attr in &attributes {
            for kind in [Disparity::DemographicParity, Disparity::EqualizedOdds] {
                report.significance.push(compare_disparity(
                    kind,
                    &y,
                    (&baseline, &other_pred),
                    (&candidate, &pred),
                    attr,
                    cohort.num_classes(),
                    settings,
                )?);
            }
        }
    }
    report.write(&global.out, REPORT_STEM)?;

    let mut manifest = RunManifest::new("evaluate", global.seed());
    manifest.config = json!({
        "bootstrap": args.bootstrap,
        "attributes": attributes.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
        "test_rows": test.len(),
    });
    manifest.inputs = vec![args.model, args.cohort];
    manifest.inputs.extend(args.compare);
    manifest.outputs = vec![format!("{REPORT_STEM}.json").into(), format!("{REPORT_STEM}.csv").into()];
    finish(global, manifest, started)
}

pub fn explain(global: &Global, args: ExplainArgs) -> CliResult<()> {
    let started = Instant::now();
    let cohort = read_cohort(&args.cohort)?;
    let model = Model::load(&args.model)?;
    model.check_compatible(&cohort)?;
    if args.instances.is_empty() && args.global.is_none() {
        return Err(Failure::input("nothing to explain: pass --instances and/or --global"));
    }
    if let Some(&bad) = args.instances.iter().find(|&&i| i >= cohort.len()) {
        return Err(Failure::input(format!(
            "instance {bad} does not exist; the cohort has {} rows",
            cohort.len()
        )));
    }
    let names = cohort.feature_names().to_vec();
    let mut outputs: Vec<PathBuf> = Vec::new();

    if !args.instances.is_empty() {
        let background = background_sample(&cohort, args.background, global.seed())?;
        let scorer = model.scorer();
        for &id in &args.instances {
            let instance = cohort.x().row(id);
            let class = match args.class {
                Some(c) => c,
                None => predict_labels(&scorer.predict_proba(&instance.to_owned().insert_axis(ndarray::Axis(0)))?)[0],
            };
            let explanation = match args.method {
                Method::Exact => {
                    let e = shapley_exact(scorer, id, instance, &background, class)?;
                    if e.local_accuracy_gap > LOCAL_ACCURACY_TOLERANCE {
                        return Err(Failure::numeric(format!(
                            "instance {id}: attributions miss the prediction by {:.3e}",
                            e.local_accuracy_gap
                        )));
                    }
                    e
                }
                Method::Sampled => shapley_sampled(scorer, id, instance, &background, class, args.samples, global.seed())?,
            };
            let magnitudes: Vec<f64> = explanation.attributions.iter().map(|v| v.abs()).collect();
            let ranking = rank_report(&magnitudes, &names, args.top)?;
            let name = format!("shap_{id}.json");
            fs::write(
                global.path(&name),
                serde_json::to_string_pretty(&json!({ "explanation": explanation, "ranking": ranking }))?,
            )?;
            outputs.push(name.into());
        }
    }

    if args.global.is_some() {
        let Model::Forest(forest) = &model else {
            return Err(Failure::input("Gini importance needs a forest model"));
        };
        let importance = gini_importance(forest, true);
        let ranking = rank_report(&importance.scores, &names, args.top.max(names.len()))?;
        fs::write(global.path(GINI_CSV), ranking_csv(&ranking))?;
        outputs.push(GINI_CSV.into());
    }

    let mut manifest = RunManifest::new("explain", global.seed());
    manifest.config = json!({
        "method": format!("{:?}", args.method).to_lowercase(),
        "instances": args.instances,
        "class": args.class,
        "samples": args.samples,
        "background": args.background,
        "global": args.global.map(|_| "gini"),
    });
    manifest.inputs = vec![args.model, args.cohort];
    manifest.outputs = outputs;
    finish(global, manifest, started)
}

pub fn ablate(global: &Global, args: AblateArgs) -> CliResult<()> {
    let started = Instant::now();
    let cohort = read_cohort(&args.cohort)?;
    let config = training_config(global, &args.network)?;
    let (model, labels, loaded) = routing(global, &cohort, &args.subgroups, config.seed)?;
    let options = AblationOptions {
        bootstrap: (args.bootstrap > 0).then(|| BootstrapSettings::new(args.bootstrap, config.seed)),
        ..AblationOptions::default()
    };
    let result = run_ablation(&cohort, &labels, model.k, &config, options)?;
    fs::write(global.path("ablation.csv"), result.to_csv())?;
    fs::write(global.path("ablation.json"), serde_json::to_string_pretty(&result)?)?;
    let mut outputs: Vec<PathBuf> = vec!["ablation.csv".into(), "ablation.json".into()];
    for run in &result.runs {
        let name = format!("training_log.{}.jsonl", run.variant.as_str());
        fs::write(global.path(&name), run.log.to_json_lines()?)?;
        outputs.push(name.into());
    }
    if loaded.is_none() {
        outputs.push(SUBGROUPS_JSON.into());
    }

    let mut manifest = RunManifest::new("ablate", config.seed);
    manifest.config = json!({ "training": config, "num_subgroups": model.k, "bootstrap": args.bootstrap });
    manifest.inputs = vec![args.cohort];
    manifest.inputs.extend(loaded);
    manifest.inputs.extend(global.config.clone());
    manifest.outputs = outputs;
    finish(global, manifest, started)
}
