//! Subcommand implementations.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use wbslr_core::cohort::{
    apply_grouping, build_cohort, group_into_visits, read_events_file, read_grouping_map,
    read_sequences_jsonl, write_sequences_jsonl, LabeledSequence,
};
use wbslr_core::ensemble::{
    bagged_vote_fraction, draw_bootstraps, fit_members, fit_wbslr, AggregationWeights, WbSlrModel,
};
use wbslr_core::featurize::{
    afv, atv, bps_features, build_vocabulary, labels as label_vec, stack_feature_rows,
    windowed_count_matrix, write_matrix_csv, EventVocabulary, WindowGrid, WindowedCountMatrix,
};
use wbslr_core::metrics::{
    auc, confusion, f2, repeated_eval, sensitivity_specificity, EvalReport, RunMetrics,
};
use wbslr_core::seqmine::{mine_frequent, read_patterns, write_patterns, SequentialPattern};
use wbslr_core::sgl::{fit, LabelVector, SglConfig, SglModel};
use wbslr_core::split::{stratified_resample, stratified_split};
use wbslr_core::synth::generate;

use crate::artifacts::{write_atomic, ManifestBuilder};
use crate::config::{PipelineConfig, Representation};
use crate::CliError;

pub struct Ctx {
    pub config: PipelineConfig,
    pub quiet: bool,
}

impl Ctx {
    fn say(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }
}

/// Bulk output to stdout, tolerating a closed pipe (e.g. `| head`).
fn print_out(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

// ---------------------------------------------------------------------------
// data and representation plumbing
// ---------------------------------------------------------------------------

fn load_labeled(config: &PipelineConfig) -> Result<Vec<LabeledSequence>, CliError> {
    let path = config
        .paths
        .labeled
        .as_ref()
        .ok_or_else(|| CliError::Usage("paths.labeled is required for this command".into()))?;
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let seqs = read_sequences_jsonl(BufReader::new(file))?;
    if seqs.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no sequences",
            path.display()
        )));
    }
    Ok(seqs)
}

/// Feature-space assets frozen from training data. Building matrices for
/// other splits reuses them unchanged.
enum ReprAssets {
    Windowed {
        grid: WindowGrid,
        vocab: EventVocabulary,
    },
    Afv {
        vocab: EventVocabulary,
    },
    Atv {
        vocab: EventVocabulary,
    },
    Bps {
        patterns: Vec<SequentialPattern>,
    },
}

impl ReprAssets {
    fn build(
        repr: Representation,
        train: &[LabeledSequence],
        config: &PipelineConfig,
        synth_grid: Option<(usize, u32)>,
    ) -> Result<Self, CliError> {
        match repr {
            Representation::Slr | Representation::Wbslr | Representation::BaggedSlr => {
                Ok(ReprAssets::Windowed {
                    grid: config.grid.resolve(synth_grid)?,
                    vocab: build_vocabulary(train)?,
                })
            }
            Representation::Afv => Ok(ReprAssets::Afv {
                vocab: build_vocabulary(train)?,
            }),
            Representation::Atv => Ok(ReprAssets::Atv {
                vocab: build_vocabulary(train)?,
            }),
            Representation::Bps => {
                let itemsets: Vec<_> = train
                    .iter()
                    .map(|s| s.visits.iter().map(|v| v.codes.clone()).collect())
                    .collect();
                let patterns = mine_frequent(&itemsets, &config.miner.to_config())?;
                if patterns.is_empty() {
                    return Err(CliError::Data(
                        "pattern miner found no frequent patterns; lower miner.min_support".into(),
                    ));
                }
                Ok(ReprAssets::Bps { patterns })
            }
        }
    }

    fn matrix(&self, seqs: &[LabeledSequence]) -> Result<WindowedCountMatrix<f64>, CliError> {
        let span_days = |seqs: &[LabeledSequence]| {
            seqs.iter().map(|s| s.span_days()).max().unwrap_or(1).max(1) as u32
        };
        match self {
            ReprAssets::Windowed { grid, vocab } => {
                let (matrix, dropped) = windowed_count_matrix::<f64>(seqs, grid, vocab)?;
                if dropped > 0 {
                    eprintln!("warning: dropped {dropped} occurrences of out-of-vocabulary codes");
                }
                Ok(matrix)
            }
            ReprAssets::Afv { vocab } => Ok(stack_feature_rows(
                seqs,
                seqs.iter().map(|s| afv::<f64>(s, vocab)).collect(),
                span_days(seqs),
            )?),
            ReprAssets::Atv { vocab } => Ok(stack_feature_rows(
                seqs,
                seqs.iter().map(|s| atv::<f64>(s, vocab)).collect(),
                span_days(seqs),
            )?),
            ReprAssets::Bps { patterns } => Ok(stack_feature_rows(
                seqs,
                seqs.iter()
                    .map(|s| bps_features::<f64>(s, patterns))
                    .collect(),
                span_days(seqs),
            )?),
        }
    }

    fn patterns(&self) -> Option<&[SequentialPattern]> {
        match self {
            ReprAssets::Bps { patterns } => Some(patterns),
            _ => None,
        }
    }

    /// Rebuild assets from a persisted model so evaluation featurizes new
    /// data in exactly the model's feature space.
    fn from_model(
        repr: Representation,
        model: &LoadedModel,
        model_path: &Path,
    ) -> Result<Self, CliError> {
        let single = model.reference();
        match repr {
            Representation::Slr | Representation::Wbslr | Representation::BaggedSlr => {
                Ok(ReprAssets::Windowed {
                    grid: single.grid,
                    vocab: single.vocab.clone(),
                })
            }
            Representation::Afv => Ok(ReprAssets::Afv {
                vocab: single.vocab.clone(),
            }),
            Representation::Atv => {
                // Pair names are `a>b` laid out row-major; the base codes are
                // the left components at stride P.
                let names = single.vocab.codes();
                let p = (names.len() as f64).sqrt().round() as usize;
                if p * p != names.len() {
                    return Err(CliError::Data(format!(
                        "model vocabulary of {} names is not a P^2 transition space",
                        names.len()
                    )));
                }
                let base: Vec<String> = (0..p)
                    .map(|i| {
                        names[i * p]
                            .split_once('>')
                            .map(|(a, _)| a.to_string())
                            .ok_or_else(|| {
                                CliError::Data(format!(
                                    "model feature {:?} is not a transition name",
                                    names[i * p]
                                ))
                            })
                    })
                    .collect::<Result<_, _>>()?;
                Ok(ReprAssets::Atv {
                    vocab: EventVocabulary::from_codes(base),
                })
            }
            Representation::Bps => {
                let sidecar = patterns_sidecar(model_path);
                let file = File::open(&sidecar).map_err(|e| {
                    CliError::Data(format!(
                        "BPS models need their pattern sidecar {}: {e}",
                        sidecar.display()
                    ))
                })?;
                Ok(ReprAssets::Bps {
                    patterns: read_patterns(BufReader::new(file))?,
                })
            }
        }
    }
}

fn patterns_sidecar(model_path: &Path) -> PathBuf {
    let mut name = model_path.as_os_str().to_os_string();
    name.push(".patterns");
    PathBuf::from(name)
}

// ---------------------------------------------------------------------------
// model persistence
// ---------------------------------------------------------------------------

pub enum LoadedModel {
    Single(SglModel<f64>),
    Ensemble(WbSlrModel<f64>),
}

impl LoadedModel {
    /// The model whose grid/vocab define the feature space.
    fn reference(&self) -> &SglModel<f64> {
        match self {
            LoadedModel::Single(m) => m,
            LoadedModel::Ensemble(m) => &m.members[0].model,
        }
    }

    fn n_features(&self) -> usize {
        self.reference().omega.len()
    }
}

pub fn load_model(path: &Path) -> Result<LoadedModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read model {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("model {} is not JSON: {e}", path.display())))?;
    if value.get("members").is_some() {
        Ok(LoadedModel::Ensemble(WbSlrModel::from_json(&text)?))
    } else {
        Ok(LoadedModel::Single(SglModel::from_json(&text)?))
    }
}

/// Probability-like scores for every matrix row under the chosen
/// representation's prediction rule.
fn scores_for(
    model: &LoadedModel,
    repr: Representation,
    matrix: &WindowedCountMatrix<f64>,
) -> Result<Vec<f64>, CliError> {
    if matrix.n_features() != model.n_features() {
        return Err(CliError::Data(format!(
            "vocabulary mismatch: model expects {} features, data produced {}",
            model.n_features(),
            matrix.n_features()
        )));
    }
    match (model, repr) {
        (LoadedModel::Single(m), _) => Ok(m.predict_rows(matrix.values.view())?.to_vec()),
        (LoadedModel::Ensemble(m), Representation::BaggedSlr) => (0..matrix.n_rows())
            .map(|i| Ok(bagged_vote_fraction(&m.members, matrix.values.row(i))?))
            .collect(),
        (LoadedModel::Ensemble(m), _) => (0..matrix.n_rows())
            .map(|i| Ok(m.predict(matrix.values.row(i))?))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// fitting helpers
// ---------------------------------------------------------------------------

/// Fit one SGL model, tuning (alpha, lambda) on the validation matrix when
/// grids are configured: highest validation AUC wins, with a sparser
/// tie-break within 0.01.
fn fit_single(
    x_train: &WindowedCountMatrix<f64>,
    labels_train: &[u8],
    valid: Option<(&WindowedCountMatrix<f64>, &[u8])>,
    config: &PipelineConfig,
) -> Result<SglModel<f64>, CliError> {
    let y_train = LabelVector::from_binary(labels_train)?;
    let base = config.sgl.to_config();
    let Some((alphas, lambdas)) = config.sgl.tuning_grid() else {
        return Ok(fit(x_train, &y_train, &base)?);
    };
    let Some((x_valid, labels_valid)) = valid else {
        return Err(CliError::Usage(
            "sgl.alpha_grid/lambda_grid need a validation split (eval.valid_fraction > 0)".into(),
        ));
    };
    let mut candidates: Vec<(f64, usize, SglModel<f64>)> = Vec::new();
    for &alpha in &alphas {
        for &lambda in &lambdas {
            let candidate = SglConfig {
                alpha,
                lambda,
                ..base
            };
            candidate.validate()?;
            let model = fit(x_train, &y_train, &candidate)?;
            let scores = model.predict_rows(x_valid.values.view())?;
            let score = auc(labels_valid, &scores.to_vec())?;
            candidates.push((score, model.selected.len(), model));
        }
    }
    let best = candidates
        .iter()
        .map(|(s, _, _)| *s)
        .fold(f64::MIN, f64::max);
    Ok(candidates
        .into_iter()
        .filter(|(s, _, _)| *s >= best - 0.01)
        .min_by(|a, b| a.1.cmp(&b.1))
        .map(|(_, _, m)| m)
        .expect("non-empty tuning grid"))
}

fn run_metrics(labels: &[u8], scores: &[f64], threshold: f64) -> Result<RunMetrics<f64>, CliError> {
    let c = confusion(labels, scores, threshold)?;
    let (sensitivity, specificity) = sensitivity_specificity(&c)?;
    Ok(RunMetrics {
        sensitivity,
        specificity,
        auc: auc(labels, scores)?,
        f2: f2(&c),
    })
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

pub fn cmd_synth(ctx: &Ctx) -> Result<(), CliError> {
    let out_dir = ctx.config.out_dir();
    let mut manifest = ManifestBuilder::new("synth", &ctx.config);
    let generator = ctx.config.synth.to_config();
    generator.validate()?;
    manifest.seed("synth", generator.seed);

    let cohort = generate(&generator)?;
    let data_path = out_dir.join("synth.jsonl");
    let mut buf = Vec::new();
    write_sequences_jsonl(&mut buf, &cohort.sequences)?;
    write_atomic(&data_path, &buf)?;
    manifest.artifact(&data_path);

    let truth_path = out_dir.join("ground_truth.json");
    write_atomic(&truth_path, cohort.truth.to_json()?.as_bytes())?;
    manifest.artifact(&truth_path);

    let positives = cohort.sequences.iter().filter(|s| s.label == 1).count();
    ctx.say(format!(
        "wrote {} patients ({} positive) to {}",
        cohort.sequences.len(),
        positives,
        data_path.display()
    ));
    manifest.write(&out_dir)?;
    Ok(())
}

pub fn cmd_cohort(ctx: &Ctx) -> Result<(), CliError> {
    let config = &ctx.config;
    let events_path = config
        .paths
        .events
        .as_ref()
        .ok_or_else(|| CliError::Usage("paths.events is required for `cohort`".into()))?;
    let spec = config.cohort.to_spec();
    spec.validate()?;

    let mut events = read_events_file(events_path)?;
    if let Some(grouping) = &config.paths.grouping {
        let file = File::open(grouping)
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", grouping.display())))?;
        let map = read_grouping_map(BufReader::new(file))?;
        apply_grouping(&mut events, &map);
    }
    let records = group_into_visits(&events)?;
    let (seqs, summary) = build_cohort(&records, &spec)?;

    let out_dir = config.out_dir();
    let mut manifest = ManifestBuilder::new("cohort", config);
    let labeled_path = out_dir.join("labeled.jsonl");
    let mut buf = Vec::new();
    write_sequences_jsonl(&mut buf, &seqs)?;
    write_atomic(&labeled_path, &buf)?;
    manifest.artifact(&labeled_path);

    let summary_path = out_dir.join("cohort_summary.json");
    write_atomic(
        &summary_path,
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    manifest.artifact(&summary_path);

    ctx.say(format!(
        "cohort: {} positives, {} negatives, {} excluded (of {} patients)",
        summary.positives,
        summary.negatives,
        summary.excluded(),
        records.len()
    ));
    manifest.write(&out_dir)?;
    Ok(())
}

pub fn cmd_featurize(ctx: &Ctx) -> Result<(), CliError> {
    let config = &ctx.config;
    let seqs = load_labeled(config)?;
    let repr = config.representation();
    let assets = ReprAssets::build(repr, &seqs, config, None)?;
    let matrix = assets.matrix(&seqs)?;
    let labels = label_vec(&seqs);

    let out_dir = config.out_dir();
    let mut manifest = ManifestBuilder::new("featurize", config);
    let csv_path = out_dir.join("features.csv");
    let mut buf = Vec::new();
    write_matrix_csv(&mut buf, &matrix, &labels)?;
    write_atomic(&csv_path, &buf)?;
    manifest.artifact(&csv_path);

    if let Some(patterns) = assets.patterns() {
        let pattern_path = out_dir.join("patterns.txt");
        let mut buf = Vec::new();
        write_patterns(&mut buf, patterns)?;
        write_atomic(&pattern_path, &buf)?;
        manifest.artifact(&pattern_path);
    }

    ctx.say(format!(
        "wrote {} x {} {repr} matrix to {}",
        matrix.n_rows(),
        matrix.n_features(),
        csv_path.display()
    ));
    manifest.write(&out_dir)?;
    Ok(())
}

pub fn cmd_mine(ctx: &Ctx) -> Result<(), CliError> {
    let config = &ctx.config;
    let seqs = load_labeled(config)?;
    let itemsets: Vec<_> = seqs
        .iter()
        .map(|s| s.visits.iter().map(|v| v.codes.clone()).collect())
        .collect();
    let patterns = mine_frequent(&itemsets, &config.miner.to_config())?;

    let out_dir = config.out_dir();
    let mut manifest = ManifestBuilder::new("mine", config);
    let pattern_path = out_dir.join("patterns.txt");
    let mut buf = Vec::new();
    write_patterns(&mut buf, &patterns)?;
    write_atomic(&pattern_path, &buf)?;
    manifest.artifact(&pattern_path);

    ctx.say(format!(
        "mined {} frequent patterns to {}",
        patterns.len(),
        pattern_path.display()
    ));
    manifest.write(&out_dir)?;
    Ok(())
}

pub fn cmd_train(ctx: &Ctx) -> Result<(), CliError> {
    let config = &ctx.config;
    let seqs = load_labeled(config)?;
    let labels = label_vec(&seqs);
    let repr = config.representation();

    let split = stratified_split(&labels, config.eval.fractions(), config.eval.base_seed)?;
    let pick =
        |idx: &[usize]| -> Vec<LabeledSequence> { idx.iter().map(|&i| seqs[i].clone()).collect() };
    let train = pick(&split.train);
    let valid = pick(&split.valid);
    let labels_train = label_vec(&train);
    let labels_valid = label_vec(&valid);

    let assets = ReprAssets::build(repr, &train, config, None)?;
    let x_train = assets.matrix(&train)?;

    let out_dir = config.out_dir();
    let mut manifest = ManifestBuilder::new("train", config);
    manifest.seed("split", config.eval.base_seed);
    let model_path = out_dir.join("model.json");

    let model_json = match repr {
        Representation::Wbslr => {
            let ensemble = config.ensemble.to_config();
            manifest.seed("ensemble", ensemble.seed);
            let model = fit_wbslr(&x_train, &labels_train, &ensemble, &config.sgl.to_config())?;
            let no_oob = model
                .members
                .iter()
                .filter(|m| m.bootstrap.oob.is_empty())
                .count();
            if no_oob > 0 {
                eprintln!("warning: {no_oob} bootstrap(s) left no rows out-of-bag");
            }
            ctx.say(format!(
                "fitted WB-SLR: B = {}, weight range [{:.3}, {:.3}]",
                model.members.len(),
                model
                    .weights
                    .w
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min),
                model
                    .weights
                    .w
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max),
            ));
            model.to_json()?
        }
        Representation::BaggedSlr => {
            let ensemble = config.ensemble.to_config();
            manifest.seed("ensemble", ensemble.seed);
            let bootstraps = draw_bootstraps(x_train.n_rows(), ensemble.b_count, ensemble.seed)?;
            let members = fit_members(
                &x_train,
                &labels_train,
                &bootstraps,
                &config.sgl.to_config(),
                ensemble.seed,
            )?;
            let model = WbSlrModel {
                weights: AggregationWeights {
                    w: vec![1.0; members.len()],
                },
                members,
                sgl_config: config.sgl.to_config(),
                seed: ensemble.seed,
            };
            ctx.say(format!(
                "fitted bagged SLR with {} members",
                model.members.len()
            ));
            model.to_json()?
        }
        _ => {
            let x_valid = assets.matrix(&valid)?;
            let model = fit_single(
                &x_train,
                &labels_train,
                (!valid.is_empty()).then_some((&x_valid, labels_valid.as_slice())),
                config,
            )?;
            ctx.say(format!(
                "fitted {repr} model: {} of {} coefficients selected (alpha {}, lambda {})",
                model.selected.len(),
                model.omega.len(),
                model.alpha,
                model.lambda
            ));
            model.to_json()?
        }
    };
    write_atomic(&model_path, model_json.as_bytes())?;
    manifest.artifact(&model_path);

    if let Some(patterns) = assets.patterns() {
        let sidecar = patterns_sidecar(&model_path);
        let mut buf = Vec::new();
        write_patterns(&mut buf, patterns)?;
        write_atomic(&sidecar, &buf)?;
        manifest.artifact(&sidecar);
    }

    manifest.write(&out_dir)?;
    Ok(())
}

pub fn cmd_evaluate(ctx: &Ctx, model_path: &Path) -> Result<(), CliError> {
    let config = &ctx.config;
    let seqs = load_labeled(config)?;
    let labels = label_vec(&seqs);
    let repr = config.representation();
    let model = load_model(model_path)?;
    let assets = ReprAssets::from_model(repr, &model, model_path)?;
    let matrix = assets.matrix(&seqs)?;
    let scores = scores_for(&model, repr, &matrix)?;

    // The model is fixed; the repeats measure sampling spread over
    // stratified bootstrap resamples of the held-out data.
    let threshold = config.eval.threshold;
    let report: EvalReport<f64> = repeated_eval(
        |seed| {
            let sample = stratified_resample(&labels, seed)?;
            let l: Vec<u8> = sample.iter().map(|&i| labels[i]).collect();
            let s: Vec<f64> = sample.iter().map(|&i| scores[i]).collect();
            run_metrics(&l, &s, threshold).map_err(|e| wbslr_core::Error::Numerical(e.to_string()))
        },
        config.eval.repeats,
        config.eval.base_seed,
        threshold,
    )?;

    let out_dir = config.out_dir();
    let mut manifest = ManifestBuilder::new("evaluate", config);
    manifest.seed("resample_base", config.eval.base_seed);
    let json_path = out_dir.join("report.json");
    write_atomic(&json_path, report.to_json()?.as_bytes())?;
    manifest.artifact(&json_path);

    let mut table = Vec::new();
    report.write_table(&mut table)?;
    let text_path = out_dir.join("report.txt");
    write_atomic(&text_path, &table)?;
    manifest.artifact(&text_path);

    print_out(&String::from_utf8_lossy(&table));
    manifest.write(&out_dir)?;
    Ok(())
}

pub fn cmd_pipeline(ctx: &Ctx) -> Result<(), CliError> {
    let config = &ctx.config;
    let out_dir = config.out_dir();
    let mut manifest = ManifestBuilder::new("pipeline", config);
    let repr = config.representation();

    // Source data: an existing labeled file, else raw events through the
    // cohort rules, else the synthetic generator. Synthetic runs keep their
    // generator grid unless [grid] overrides it.
    let mut synth_grid: Option<(usize, u32)> = None;
    let seqs: Vec<LabeledSequence> = if config.paths.labeled.is_some() {
        load_labeled(config)?
    } else if let Some(events_path) = &config.paths.events {
        let mut events = read_events_file(events_path)?;
        if let Some(grouping) = &config.paths.grouping {
            let file = File::open(grouping)
                .map_err(|e| CliError::Data(format!("cannot open {}: {e}", grouping.display())))?;
            apply_grouping(&mut events, &read_grouping_map(BufReader::new(file))?);
        }
        let spec = config.cohort.to_spec();
        spec.validate()?;
        let records = group_into_visits(&events)?;
        let (seqs, summary) = build_cohort(&records, &spec)?;
        ctx.say(format!(
            "cohort: {} positives, {} negatives, {} excluded",
            summary.positives,
            summary.negatives,
            summary.excluded()
        ));
        let labeled_path = out_dir.join("labeled.jsonl");
        let mut buf = Vec::new();
        write_sequences_jsonl(&mut buf, &seqs)?;
        write_atomic(&labeled_path, &buf)?;
        manifest.artifact(&labeled_path);
        seqs
    } else {
        let generator = config.synth.to_config();
        generator.validate()?;
        manifest.seed("synth", generator.seed);
        synth_grid = Some((generator.t_windows, generator.window_days));
        let cohort = generate(&generator)?;
        let labeled_path = out_dir.join("labeled.jsonl");
        let mut buf = Vec::new();
        write_sequences_jsonl(&mut buf, &cohort.sequences)?;
        write_atomic(&labeled_path, &buf)?;
        manifest.artifact(&labeled_path);
        let truth_path = out_dir.join("ground_truth.json");
        write_atomic(&truth_path, cohort.truth.to_json()?.as_bytes())?;
        manifest.artifact(&truth_path);
        cohort.sequences
    };
    let labels = label_vec(&seqs);
    manifest.seed("eval_base", config.eval.base_seed);

    // One full experiment: split, freeze assets on train, fit, score test.
    let experiment = |seed: u64| -> Result<(RunMetrics<f64>, String), CliError> {
        let split = stratified_split(&labels, config.eval.fractions(), seed)?;
        let pick = |idx: &[usize]| -> Vec<LabeledSequence> {
            idx.iter().map(|&i| seqs[i].clone()).collect()
        };
        let train = pick(&split.train);
        let valid = pick(&split.valid);
        let test = pick(&split.test);
        let labels_train = label_vec(&train);
        let labels_valid = label_vec(&valid);
        let labels_test = label_vec(&test);

        let assets = ReprAssets::build(repr, &train, config, synth_grid)?;
        let x_train = assets.matrix(&train)?;
        let x_test = assets.matrix(&test)?;

        let (scores, model_json) = match repr {
            Representation::Wbslr => {
                let mut ensemble = config.ensemble.to_config();
                ensemble.seed = seed;
                let model = fit_wbslr(&x_train, &labels_train, &ensemble, &config.sgl.to_config())?;
                let scores: Vec<f64> = (0..x_test.n_rows())
                    .map(|i| model.predict(x_test.values.row(i)))
                    .collect::<Result<_, _>>()?;
                (scores, model.to_json()?)
            }
            Representation::BaggedSlr => {
                let mut ensemble = config.ensemble.to_config();
                ensemble.seed = seed;
                let bootstraps =
                    draw_bootstraps(x_train.n_rows(), ensemble.b_count, ensemble.seed)?;
                let members = fit_members(
                    &x_train,
                    &labels_train,
                    &bootstraps,
                    &config.sgl.to_config(),
                    ensemble.seed,
                )?;
                let model = WbSlrModel {
                    weights: AggregationWeights {
                        w: vec![1.0; members.len()],
                    },
                    members,
                    sgl_config: config.sgl.to_config(),
                    seed: ensemble.seed,
                };
                let scores: Vec<f64> = (0..x_test.n_rows())
                    .map(|i| bagged_vote_fraction(&model.members, x_test.values.row(i)))
                    .collect::<Result<_, _>>()?;
                (scores, model.to_json()?)
            }
            _ => {
                let x_valid = assets.matrix(&valid)?;
                let model = fit_single(
                    &x_train,
                    &labels_train,
                    (!valid.is_empty()).then_some((&x_valid, labels_valid.as_slice())),
                    config,
                )?;
                let scores = model.predict_rows(x_test.values.view())?.to_vec();
                (scores, model.to_json()?)
            }
        };
        let metrics = run_metrics(&labels_test, &scores, config.eval.threshold)?;
        Ok((metrics, model_json))
    };

    // The model artifact comes from the first repeat's experiment.
    let (_, first_model_json) = experiment(config.eval.base_seed)
        .map_err(|e| CliError::Numeric(format!("seed {} failed: {e}", config.eval.base_seed)))?;
    let model_path = out_dir.join("model.json");
    write_atomic(&model_path, first_model_json.as_bytes())?;
    manifest.artifact(&model_path);
    if repr == Representation::Bps {
        // Persist the first repeat's mined patterns for later evaluation.
        let split = stratified_split(&labels, config.eval.fractions(), config.eval.base_seed)?;
        let train: Vec<LabeledSequence> = split.train.iter().map(|&i| seqs[i].clone()).collect();
        let assets = ReprAssets::build(repr, &train, config, synth_grid)?;
        if let Some(patterns) = assets.patterns() {
            let sidecar = patterns_sidecar(&model_path);
            let mut buf = Vec::new();
            write_patterns(&mut buf, patterns)?;
            write_atomic(&sidecar, &buf)?;
            manifest.artifact(&sidecar);
        }
    }

    let report: EvalReport<f64> = repeated_eval(
        |seed| {
            experiment(seed)
                .map(|(metrics, _)| metrics)
                .map_err(|e| wbslr_core::Error::Numerical(e.to_string()))
        },
        config.eval.repeats,
        config.eval.base_seed,
        config.eval.threshold,
    )?;

    let json_path = out_dir.join("report.json");
    write_atomic(&json_path, report.to_json()?.as_bytes())?;
    manifest.artifact(&json_path);
    let mut table = Vec::new();
    report.write_table(&mut table)?;
    let text_path = out_dir.join("report.txt");
    write_atomic(&text_path, &table)?;
    manifest.artifact(&text_path);

    print_out(&String::from_utf8_lossy(&table));
    manifest.write(&out_dir)?;
    Ok(())
}

pub fn cmd_inspect(ctx: &Ctx, model_path: &Path) -> Result<(), CliError> {
    let config = &ctx.config;
    let model = load_model(model_path)?;

    // For ensembles, inspect the member with the largest weight and report
    // how often each coordinate was selected across members.
    type FrequencyFn = Box<dyn Fn(usize, usize) -> f64>;
    let (inspected, frequency): (&SglModel<f64>, FrequencyFn) = match &model {
        LoadedModel::Single(m) => (m, Box::new(|_, _| 1.0)),
        LoadedModel::Ensemble(m) => {
            let top = m
                .weights
                .w
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap_or(0);
            let total = m.members.len() as f64;
            let members = m.members.clone();
            (
                &m.members[top].model,
                Box::new(move |j, e| {
                    members
                        .iter()
                        .filter(|member| member.model.selected.contains(&(j, e)))
                        .count() as f64
                        / total
                }),
            )
        }
    };

    let mut rows: Vec<(usize, String, String, f64, char, f64)> = inspected
        .selected_events()
        .into_iter()
        .map(|(j, e, sign)| {
            let p = inspected.vocab.len();
            let coefficient = inspected.omega[j * p + e];
            let wd = inspected.grid.window_days as usize;
            (
                j,
                format!("[{},{})d", j * wd, (j + 1) * wd),
                inspected.vocab.codes()[e].clone(),
                coefficient,
                if sign > 0 { '+' } else { '-' },
                frequency(j, e),
            )
        })
        .collect();
    rows.sort_by(|a, b| b.3.abs().partial_cmp(&a.3.abs()).unwrap());

    let out_dir = config.out_dir();
    let mut manifest = ManifestBuilder::new("inspect", config);
    let csv_path = out_dir.join("inspect.csv");
    let mut csv =
        String::from("window_index,window_range,code,coefficient,sign,member_frequency\n");
    for (j, range, code, coefficient, sign, freq) in &rows {
        csv.push_str(&format!("{j},{range},{code},{coefficient},{sign},{freq}\n"));
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    manifest.artifact(&csv_path);

    if rows.is_empty() {
        print_out("no features selected: the model is empty at its (alpha, lambda)\n");
    } else {
        let mut table = format!(
            "{:<8} {:<14} {:<12} {:>12} {:>5} {:>10}\n",
            "window", "range", "code", "coefficient", "sign", "frequency"
        );
        for (j, range, code, coefficient, sign, freq) in &rows {
            table.push_str(&format!(
                "{j:<8} {range:<14} {code:<12} {coefficient:>12.5} {sign:>5} {freq:>10.2}\n"
            ));
        }
        print_out(&table);
    }
    manifest.write(&out_dir)?;
    Ok(())
}
