//! The subcommands.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use survstack::io::{read_curves, write_curves, write_dataset, write_stacked, RawTable};
use survstack::metrics::{default_grid, evaluate, integrated_brier, quantile, EvalOptions};
use survstack::model::StackingLog;
use survstack::persist::{write_interactions, write_shape_functions};
use survstack::preprocess::{transform, FeatureTable};
use survstack::select::fixed_horizon_labels;
use survstack::stacking::{expected_size, LABEL_COLUMN};
use survstack::{
    fit_model, generate, select_features, select_linear, stack, Error, Estimator, FitOptions, GamModel,
    ModelChoice, ModelFile, PredictionConfig, SelectConfig, SelectionResult, StackingConfig, SurvivalCurve,
    SurvivalDataset, SyntheticSpec,
};

use crate::config::{PipelineConfig, SelectionMethod, Stage};
use crate::data::{self, Loaded};
use crate::{out_file, write_text, CliError, StageExt};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).stage("output")?))
}

fn stacking_config(cfg: &PipelineConfig, gamma: f64) -> Result<StackingConfig, CliError> {
    let sc = StackingConfig {
        gamma,
        seed: cfg.stage_seed(Stage::Stacking),
    };
    sc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(sc)
}

fn fit_options(cfg: &PipelineConfig) -> Result<FitOptions, CliError> {
    let mut gam = cfg.gam.clone();
    gam.seed = cfg.stage_seed(Stage::Model);
    Ok(FitOptions {
        model: cfg.model.kind,
        stacking: stacking_config(cfg, cfg.stacking.gamma)?,
        gam,
        logistic: cfg.logistic.clone(),
        cox: cfg.cox.clone(),
        raw_hazard: cfg.model.raw_hazard,
    })
}

fn prediction_config(cfg: &PipelineConfig, grid: Vec<f64>) -> PredictionConfig {
    PredictionConfig {
        n_mc: cfg.prediction.n_mc,
        seed: cfg.stage_seed(Stage::Prediction),
        grid,
        sampling: cfg.prediction.sampling,
    }
}

fn data_path(cfg: &PipelineConfig, arg: Option<&Path>) -> Result<PathBuf, CliError> {
    arg.map(Path::to_path_buf)
        .or_else(|| cfg.paths.data.clone())
        .ok_or_else(|| CliError::Usage("no input table: pass --data or set paths.data".into()))
}

pub fn synth(cfg: &PipelineConfig, spec_path: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Usage(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let mut spec: SyntheticSpec =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (ds, oracle) = generate(&spec).stage("synth")?;
    log::info!(
        "synth: {} records, {} events, censoring fraction {:.3}",
        ds.len(),
        ds.n_events(),
        oracle.censoring_fraction
    );
    write_dataset(&ds, create(&out_file(cfg, "data.csv")?)?).stage("output")?;
    let truth = serde_json::to_string_pretty(&oracle).stage("output")?;
    write_text(&out_file(cfg, "truth.json")?, &truth)
}

/// Selected columns plus the rows and labels they were chosen on.
struct Selection {
    result: SelectionResult,
    horizon: Option<f64>,
    rows: usize,
}

fn median_event_time(ds: &SurvivalDataset) -> f64 {
    let ev: Vec<f64> = ds.records().iter().filter(|r| r.event).map(|r| r.time).collect();
    quantile(&data::sorted(&ev), 0.5)
}

fn run_selection(cfg: &PipelineConfig, train: &SurvivalDataset) -> Result<Option<Selection>, CliError> {
    let sc = &cfg.selection;
    if sc.method == SelectionMethod::None {
        return Ok(None);
    }
    let groups = train.feature_groups();
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    if sc.k == 0 {
        return Err(CliError::Usage("selection.k must be at least 1".into()));
    }
    if sc.k >= n_groups {
        log::warn!("selection: k = {} covers all {n_groups} feature groups; keeping every column", sc.k);
        return Ok(None);
    }
    let exp = expected_size(train, cfg.stacking.gamma);
    let expected_rows = exp.positives as f64 + exp.expected_negatives;
    let (rows, labels, horizon) = if expected_rows > sc.row_budget {
        let h = sc.horizon.unwrap_or_else(|| median_event_time(train));
        log::info!(
            "selection: {expected_rows:.0} expected stacked rows exceed the budget; fixed-horizon labels at t = {h}"
        );
        let (kept, labels) = fixed_horizon_labels(train, h).stage("selection")?;
        let rows = kept.iter().map(|&i| train.records()[i].covariates.clone()).collect();
        (rows, labels, Some(h))
    } else {
        let st = stack(train, &stacking_config(cfg, cfg.stacking.gamma)?).stage("selection")?;
        let d = train.n_features();
        let rows: Vec<Vec<f64>> = st.rows.into_iter().map(|mut r| {
            r.truncate(d);
            r
        }).collect();
        (rows, st.labels, None)
    };
    let n_rows = rows.len();
    let result = match sc.method {
        SelectionMethod::Controlburn => {
            let mut forest = sc.forest.clone();
            forest.seed = cfg.stage_seed(Stage::Selection);
            let scfg = SelectConfig {
                forest,
                bisection_steps: sc.bisection_steps,
            };
            select_features(&rows, &labels, &groups, sc.k, &scfg)
        }
        SelectionMethod::LassoLinear => select_linear(&rows, &labels, &groups, sc.k, sc.bisection_steps),
        SelectionMethod::None => unreachable!("handled above"),
    }
    .stage("selection")?;
    log::info!("selection: kept {} of {} columns", result.selected.len(), train.n_features());
    Ok(Some(Selection {
        result,
        horizon,
        rows: n_rows,
    }))
}

fn selection_text(sel: &Selection, names: &[String], method: SelectionMethod) -> String {
    let name = match method {
        SelectionMethod::None => "none",
        SelectionMethod::Controlburn => "controlburn",
        SelectionMethod::LassoLinear => "lasso_linear",
    };
    let mut out = format!("method\t{name}\n");
    match sel.horizon {
        Some(h) => out.push_str(&format!("labels\tfixed_horizon\nhorizon\t{h}\n")),
        None => out.push_str("labels\tstacked\n"),
    }
    out.push_str(&format!("rows\t{}\n", sel.rows));
    out.push_str(&sel.result.report(names));
    out
}

/// Writes the GAM exports; importances are measured on `rows` when given.
fn write_gam_exports(cfg: &PipelineConfig, gam: &GamModel, rows: Option<&[Vec<f64>]>) -> Result<(), CliError> {
    write_shape_functions(gam, create(&out_file(cfg, "shape_functions.csv")?)?).stage("output")?;
    write_interactions(gam, create(&out_file(cfg, "interactions.csv")?)?).stage("output")?;
    if let Some(rows) = rows {
        let binned = gam.bin_rows(rows).stage("explain")?;
        let mut text = String::from("term,importance\n");
        for t in gam.feature_importance(&binned) {
            text.push_str(&format!("{},{}\n", t.term, t.importance));
        }
        write_text(&out_file(cfg, "importance.csv")?, &text)?;
    }
    Ok(())
}

fn fit_stage(cfg: &PipelineConfig, train: &SurvivalDataset) -> Result<(ModelFile, Option<StackingLog>), CliError> {
    let (model, slog) = fit_model(train, &fit_options(cfg)?).stage("model")?;
    log::info!("model: {} fit on {} records", model.estimator.kind(), train.len());
    Ok((model, slog))
}

fn mean_abs_diff(curves: &[SurvivalCurve], truth: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (c, t) in curves.iter().zip(truth) {
        for (s, s0) in c.probabilities.iter().zip(t) {
            total += (s - s0).abs();
            n += 1;
        }
    }
    total / n.max(1) as f64
}

pub fn run(cfg: &PipelineConfig, data_arg: Option<&Path>) -> Result<(), CliError> {
    let path = data_path(cfg, data_arg)?;
    let loaded = data::load(&path)?;
    let (tr, te) = survstack::preprocess::split_indices(
        &loaded.events,
        cfg.split.test_fraction,
        cfg.stage_seed(Stage::Split),
    )
    .stage("split")?;
    log::info!("split: {} train, {} test", tr.len(), te.len());
    let (pm, mut train, mut test) = loaded.prepare(&tr, &te, &cfg.preprocess.categorical)?;
    let all_names = train.feature_names().to_vec();

    let selection = run_selection(cfg, &train)?;
    if let Some(sel) = &selection {
        write_text(
            &out_file(cfg, "selection.txt")?,
            &selection_text(sel, &all_names, cfg.selection.method),
        )?;
        train = train.select_columns(&sel.result.selected).stage("selection")?;
        test = test.select_columns(&sel.result.selected).stage("selection")?;
    }

    let (mut model, slog) = fit_stage(cfg, &train)?;
    model.preprocess = Some(pm);
    model.selected_columns = selection.as_ref().map(|s| s.result.selected.clone());
    model.write(create(&out_file(cfg, "model.json")?)?).stage("output")?;

    let grid = if cfg.metrics.grid.is_empty() {
        default_grid(&test, cfg.metrics.grid_points).stage("evaluate")?
    } else {
        cfg.metrics.grid.clone()
    };
    let pcfg = prediction_config(cfg, grid.clone());
    let xs = test.covariates();
    let curves = model.survival_curves(&xs, &pcfg).stage("predict")?;
    write_curves(&curves, create(&out_file(cfg, "curves.csv")?)?).stage("output")?;
    let risk = model.static_risk(&xs);
    let options = EvalOptions {
        censoring: cfg.metrics.censoring,
        aggregation: cfg.metrics.aggregation,
    };
    let report = evaluate(&train, &test, &curves, risk.as_deref(), &grid, options).stage("evaluate")?;

    let mut text = String::from("survstack run\n");
    text.push_str(&format!("data\t{}\n", path.display()));
    text.push_str(&format!("seed\t{}\n", cfg.seed));
    text.push_str(&format!("model\t{}\n", model.estimator.kind()));
    text.push_str(&format!("train_records\t{}\ntrain_events\t{}\n", train.len(), train.n_events()));
    text.push_str(&format!("test_records\t{}\ntest_events\t{}\n", test.len(), test.n_events()));
    text.push_str(&format!("model_columns\t{}/{}\n", train.n_features(), all_names.len()));
    if let Some(s) = slog {
        text.push_str(&format!(
            "stacked_rows\t{}\nstacked_positives\t{}\nexpected_stacked_rows\t{:.1}\n",
            s.rows, s.positives, s.expected_rows
        ));
        text.push_str(&format!("gamma\t{}\n", cfg.stacking.gamma));
        let hazard = if model.calibration.is_some() { "calibrated" } else { "raw" };
        text.push_str(&format!("hazard\t{hazard}\nn_mc\t{}\n", cfg.prediction.n_mc));
    }
    text.push_str(&report.to_text());
    if model.calibration.is_some() {
        let raw = model.raw_survival_curves(&xs, &pcfg).stage("predict")?;
        let (_, ibs) = integrated_brier(&train, &test, &raw, &grid, cfg.metrics.censoring).stage("evaluate")?;
        text.push_str(&format!("\nraw_hazard_integrated_brier\t{ibs}\n"));
    }
    if let Some(tp) = &cfg.paths.truth {
        let oracle = data::read_truth(tp)?;
        let raw_x = loaded.oracle_covariates(&oracle, &te)?;
        let truth: Vec<Vec<f64>> = raw_x
            .iter()
            .map(|x| grid.iter().map(|&t| oracle.survival(x, t)).collect())
            .collect();
        text.push_str(&format!("truth_curve_mae\t{}\n", mean_abs_diff(&curves, &truth)));
    }
    write_text(&out_file(cfg, "report.txt")?, &text)?;

    if let Estimator::Gam(gam) = &model.estimator {
        let st = stack(&train, &stacking_config(cfg, cfg.stacking.gamma)?).stage("explain")?;
        write_gam_exports(cfg, gam, Some(&st.rows))?;
    }
    print!("{text}");
    Ok(())
}

pub fn stack_cmd(cfg: &PipelineConfig, data_arg: &Path, gamma: Option<f64>) -> Result<(), CliError> {
    let loaded = data::load(data_arg)?;
    let (_, ds) = loaded.prepare_all(&cfg.preprocess.categorical)?;
    let sc = stacking_config(cfg, gamma.unwrap_or(cfg.stacking.gamma))?;
    let exp = expected_size(&ds, sc.gamma);
    let st = stack(&ds, &sc).stage("stacking")?;
    log::info!(
        "stacked {} rows ({} positive); expected {:.1}",
        st.len(),
        st.n_positive(),
        exp.positives as f64 + exp.expected_negatives
    );
    write_stacked(&st, create(&out_file(cfg, "stacked.csv")?)?).stage("output")
}

pub fn select_cmd(cfg: &PipelineConfig, data_arg: &Path) -> Result<(), CliError> {
    let loaded = data::load(data_arg)?;
    let (_, ds) = loaded.prepare_all(&cfg.preprocess.categorical)?;
    let names = ds.feature_names().to_vec();
    let text = match run_selection(cfg, &ds)? {
        Some(sel) => selection_text(&sel, &names, cfg.selection.method),
        None => format!("selected\t{}\n", names.join(",")),
    };
    write_text(&out_file(cfg, "selection.txt")?, &text)?;
    print!("{text}");
    Ok(())
}

pub fn train_cmd(cfg: &PipelineConfig, data_arg: &Path) -> Result<(), CliError> {
    let loaded = data::load(data_arg)?;
    let (pm, mut ds) = loaded.prepare_all(&cfg.preprocess.categorical)?;
    let selection = run_selection(cfg, &ds)?;
    if let Some(sel) = &selection {
        ds = ds.select_columns(&sel.result.selected).stage("selection")?;
    }
    let (mut model, _) = fit_stage(cfg, &ds)?;
    model.preprocess = Some(pm);
    model.selected_columns = selection.map(|s| s.result.selected);
    model.write(create(&out_file(cfg, "model.json")?)?).stage("output")
}

fn read_model(path: &Path) -> Result<ModelFile, CliError> {
    let f = File::open(path).map_err(|e| CliError::Usage(format!("cannot open model {}: {e}", path.display())))?;
    ModelFile::read(std::io::BufReader::new(f)).stage("load")
}

/// Model-space covariates of every row of `raw`.
fn model_rows(model: &ModelFile, raw: &RawTable) -> Result<Vec<Vec<f64>>, CliError> {
    let cols = data::non_outcome_columns(raw);
    let rows = match &model.preprocess {
        Some(pm) => transform(pm, &FeatureTable::from_raw(raw, &cols)).stage("preprocess")?.rows,
        None => raw
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                cols.iter()
                    .map(|&c| {
                        r[c].as_deref().and_then(|s| s.parse().ok()).ok_or_else(|| {
                            Error::InvalidCell {
                                row: i,
                                column: raw.columns[c].clone(),
                                reason: "not numeric".into(),
                            }
                        })
                    })
                    .collect::<Result<Vec<f64>, Error>>()
            })
            .collect::<Result<_, _>>()
            .stage("preprocess")?,
    };
    Ok(match &model.selected_columns {
        Some(sel) => rows.into_iter().map(|r| sel.iter().map(|&c| r[c]).collect()).collect(),
        None => rows,
    })
}

pub fn predict_cmd(cfg: &PipelineConfig, model_path: &Path, data_arg: &Path, grid: &[f64]) -> Result<(), CliError> {
    let model = read_model(model_path)?;
    let raw = data::read_table(data_arg)?;
    let xs = model_rows(&model, &raw)?;
    let grid = if !grid.is_empty() {
        grid.to_vec()
    } else if !cfg.metrics.grid.is_empty() {
        cfg.metrics.grid.clone()
    } else if raw.column_index(survstack::data::TIME_COLUMN).is_some() {
        default_grid(&data::outcomes_only(data_arg)?, cfg.metrics.grid_points).stage("predict")?
    } else {
        return Err(CliError::Usage("no evaluation grid: pass --grid or set metrics.grid".into()));
    };
    let pcfg = prediction_config(cfg, grid);
    pcfg.validate_grid().map_err(|e| CliError::Usage(e.to_string()))?;
    let curves = model.survival_curves(&xs, &pcfg).stage("predict")?;
    log::info!("predict: {} curves on {} grid points", curves.len(), pcfg.grid.len());
    write_curves(&curves, create(&out_file(cfg, "curves.csv")?)?).stage("output")
}

pub fn evaluate_cmd(cfg: &PipelineConfig, train: &Path, test: &Path, curves_path: &Path) -> Result<(), CliError> {
    let train = data::outcomes_only(train)?;
    let test = data::outcomes_only(test)?;
    let f = File::open(curves_path)
        .map_err(|e| CliError::Usage(format!("cannot open curves {}: {e}", curves_path.display())))?;
    let curves = read_curves(std::io::BufReader::new(f)).stage("load")?;
    let grid = curves.first().map(|c| c.times.clone()).unwrap_or_default();
    let options = EvalOptions {
        censoring: cfg.metrics.censoring,
        aggregation: cfg.metrics.aggregation,
    };
    let report = evaluate(&train, &test, &curves, None, &grid, options).stage("evaluate")?;
    let text = report.to_text();
    write_text(&out_file(cfg, "report.txt")?, &text)?;
    print!("{text}");
    Ok(())
}

pub fn explain_cmd(cfg: &PipelineConfig, model_path: &Path, stacked: Option<&Path>) -> Result<(), CliError> {
    let model = read_model(model_path)?;
    let Estimator::Gam(gam) = &model.estimator else {
        return Err(CliError::Usage(format!(
            "explain needs a gam model, {} holds a {} model",
            model_path.display(),
            model.estimator.kind()
        )));
    };
    let rows = match stacked {
        None => None,
        Some(p) => {
            let raw = data::read_table(p)?;
            let cols: Vec<usize> = gam
                .feature_names
                .iter()
                .map(|n| raw.column_index(n).ok_or_else(|| Error::MissingColumn(n.clone())))
                .collect::<Result<_, _>>()
                .stage("explain")?;
            let rows: Vec<Vec<f64>> = raw
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    cols.iter()
                        .map(|&c| {
                            r[c].as_deref()
                                .and_then(|s| s.parse().ok())
                                .ok_or_else(|| Error::Parse(format!("stacked row {i}: bad numeric field")))
                        })
                        .collect::<Result<Vec<f64>, Error>>()
                })
                .collect::<Result<_, _>>()
                .stage("explain")?;
            if raw.column_index(LABEL_COLUMN).is_none() {
                log::warn!("explain: {} has no `{LABEL_COLUMN}` column", p.display());
            }
            Some(rows)
        }
    };
    write_gam_exports(cfg, gam, rows.as_deref())
}

/// Empirical summary of one estimator's values.
fn summary_line(name: &str, values: &[f64]) -> String {
    let s = data::sorted(values);
    let mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
    let q = |p| quantile(&s, p);
    format!(
        "{name}\t{mean:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
        q(0.1),
        q(0.25),
        q(0.5),
        q(0.75),
        q(0.9)
    )
}

/// Histogram counts over `bins` equal-width bins of `[0, 1]`.
fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

pub fn compare_cmd(cfg: &PipelineConfig, data_arg: Option<&Path>) -> Result<(), CliError> {
    if cfg.model.kind == ModelChoice::Cox {
        return Err(CliError::Usage("compare-estimators needs a stacked classifier (gam or logistic)".into()));
    }
    let t = cfg.compare.time;
    if !(t > 0.0 && t.is_finite()) || cfg.compare.bins == 0 {
        return Err(CliError::Usage("compare.time must be positive and compare.bins at least 1".into()));
    }
    let path = data_path(cfg, data_arg)?;
    let loaded: Loaded = data::load(&path)?;
    let (tr, te) = survstack::preprocess::split_indices(
        &loaded.events,
        cfg.split.test_fraction,
        cfg.stage_seed(Stage::Split),
    )
    .stage("split")?;
    let (_, mut train, mut test) = loaded.prepare(&tr, &te, &cfg.preprocess.categorical)?;
    if let Some(sel) = run_selection(cfg, &train)? {
        train = train.select_columns(&sel.result.selected).stage("selection")?;
        test = test.select_columns(&sel.result.selected).stage("selection")?;
    }
    let (model, _) = fit_stage(cfg, &train)?;
    let xs = test.covariates();
    let pcfg = prediction_config(cfg, vec![t]);

    let mut columns: Vec<(&str, Vec<f64>)> = Vec::new();
    let discrete: Vec<f64> = xs
        .iter()
        .map(|x| model.survival_discrete(x, t).expect("classifier model"))
        .collect();
    columns.push(("discrete", discrete));
    let at_t = |c: Vec<SurvivalCurve>| c.into_iter().map(|c| c.probabilities[0]).collect::<Vec<f64>>();
    columns.push(("exponential", at_t(model.survival_curves(&xs, &pcfg).stage("predict")?)));
    if model.calibration.is_some() {
        columns.push(("exponential_raw", at_t(model.raw_survival_curves(&xs, &pcfg).stage("predict")?)));
    }
    if let Some(tp) = &cfg.paths.truth {
        let oracle = data::read_truth(tp)?;
        let raw_x = loaded.oracle_covariates(&oracle, &te)?;
        columns.push(("truth", raw_x.iter().map(|x| oracle.survival(x, t)).collect()));
    }

    let mut text = format!("time\t{t}\ntest_records\t{}\n\n", xs.len());
    text.push_str("estimator\tmean\tq10\tq25\tmedian\tq75\tq90\n");
    for (name, v) in &columns {
        text.push_str(&summary_line(name, v));
    }
    if let Some((_, truth)) = columns.iter().find(|(n, _)| *n == "truth") {
        text.push('\n');
        for (name, v) in columns.iter().filter(|(n, _)| *n != "truth") {
            let mae = v.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / v.len().max(1) as f64;
            text.push_str(&format!("mae_vs_truth_{name}\t{mae:.6}\n"));
        }
    }
    write_text(&out_file(cfg, "compare.txt")?, &text)?;

    let bins = cfg.compare.bins;
    let counts: Vec<Vec<usize>> = columns.iter().map(|(_, v)| histogram(v, bins)).collect();
    let mut csv = String::from("bin_low,bin_high");
    for (name, _) in &columns {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for b in 0..bins {
        csv.push_str(&format!("{},{}", b as f64 / bins as f64, (b + 1) as f64 / bins as f64));
        for c in &counts {
            csv.push_str(&format!(",{}", c[b]));
        }
        csv.push('\n');
    }
    write_text(&out_file(cfg, "compare_histogram.csv")?, &csv)?;
    print!("{text}");
    Ok(())
}
