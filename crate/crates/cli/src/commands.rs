use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use spikelda::classify::pclda::{DEFAULT_THRESHOLD_ALPHA, DEFAULT_THRESHOLD_C};
use spikelda::classify::NscStats;
use spikelda::data::{load_csv, read_table, DEFAULT_LABEL_COLUMN};
use spikelda::diagnostics::{
    decay_checks, recovery_checks, run_cells, whitening_identity_check, write_rates_csv, DecayCheck,
    DiagPopulation, DiagnosticsConfig, RateRow, DEFAULT_DECAY_TOLERANCE,
};
use spikelda::model_io::ModelDocument;
use spikelda::sim::harness::Method;
use spikelda::sim::metrics::{write_replicates_csv, write_summary_csv};
use spikelda::sim::models::{DEFAULT_BLOCK, DEFAULT_RANK};
use spikelda::sim::{run_example1, run_mc, CovModel, EntryDist, Example1Config, SimSpec};
use spikelda::tuning::{
    cv_select_delta, cv_select_s, tune_and_fit, DPolicy, SPolicy, DEFAULT_DELTA_GRID, DEFAULT_FOLDS,
    DEFAULT_MAX_S,
};
use spikelda::whitening::{choose_d_for, pooled_covariance, DEFAULT_VARIANCE_FRACTION};

use crate::args::*;
use crate::error::{usage, CliError, CliResult};

/// Settings shared by every subcommand after layering.
pub struct Global {
    pub seed: u64,
    pub format: Format,
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    let path = value
        .as_deref()
        .ok_or_else(|| usage(format!("--{flag} is required")))?;
    if !path.exists() {
        return Err(usage(format!("{} does not exist", path.display())));
    }
    Ok(path)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_pairs<W: Write>(out: W, pairs: &[(&str, String)]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "value"]).map_err(runtime)?;
    for (k, v) in pairs {
        w.write_record([*k, v.as_str()]).map_err(runtime)?;
    }
    w.flush()?;
    Ok(())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn d_policy(o: &PcldaOpts) -> CliResult<DPolicy> {
    match (o.d, o.frac) {
        (Some(_), Some(_)) => Err(usage("--d and --frac are mutually exclusive")),
        (Some(d), None) => Ok(DPolicy::Fixed { d }),
        (None, frac) => Ok(DPolicy::Fraction {
            frac: frac.unwrap_or(DEFAULT_VARIANCE_FRACTION),
        }),
    }
}

fn s_policy(o: &PcldaOpts) -> CliResult<SPolicy> {
    let kind = o.selection.unwrap_or(if o.s.is_some() {
        SelectionKind::TopS
    } else {
        SelectionKind::Cv
    });
    match kind {
        SelectionKind::TopS => Ok(SPolicy::Fixed {
            s: o.s.ok_or_else(|| usage("--selection top-s needs --s"))?,
        }),
        SelectionKind::Cv => Ok(SPolicy::Cv {
            max_s: o.max_s.unwrap_or(DEFAULT_MAX_S),
            folds: o.folds.unwrap_or(DEFAULT_FOLDS),
        }),
        SelectionKind::Threshold => Ok(SPolicy::Threshold {
            c: o.c.unwrap_or(DEFAULT_THRESHOLD_C),
            alpha: o.alpha.unwrap_or(DEFAULT_THRESHOLD_ALPHA),
            fallback: o.fallback,
        }),
    }
}

pub fn simulate(a: &SimulateArgs, g: &Global) -> CliResult<()> {
    let kind = a.model.unwrap_or(ModelKind::Eqcorr);
    if kind == ModelKind::Example1 {
        return example1(a, g);
    }
    let rho = a.rho.unwrap_or(0.5);
    let model = match kind {
        ModelKind::Eqcorr => CovModel::EqualCorr { rho },
        ModelKind::Block => CovModel::BlockDiag {
            rho,
            block: a.block.unwrap_or(DEFAULT_BLOCK),
        },
        ModelKind::Randcorr => CovModel::RandomCorr {
            rank: a.rank.unwrap_or(DEFAULT_RANK),
            dist: a
                .dist
                .as_deref()
                .unwrap_or("normal")
                .parse::<EntryDist>()
                .map_err(|e| usage(e.to_string()))?,
        },
        ModelKind::Example1 => unreachable!("handled above"),
    };
    let spec = SimSpec {
        model,
        p: a.p.unwrap_or(800),
        n_train: a.n.unwrap_or(100),
        n_test: a.n_test.unwrap_or(100),
    };
    spec.validate()?;
    let method = match a.method.unwrap_or(MethodKind::Pclda) {
        MethodKind::Oracle => Method::Oracle,
        MethodKind::Nsc => Method::Nsc {
            grid: a.grid.unwrap_or(DEFAULT_DELTA_GRID),
            folds: a.pclda.folds.unwrap_or(DEFAULT_FOLDS),
        },
        MethodKind::Pclda => Method::Pclda {
            d: d_policy(&a.pclda)?,
            s: s_policy(&a.pclda)?,
        },
    };
    let out = run_mc(&spec, &method, a.reps.unwrap_or(200), g.seed)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(runtime)?;
        write_replicates_csv(&out.rows, create(&dir.join("replicates.csv"))?)?;
        match g.format {
            Format::Csv => write_summary_csv(&out.summary, create(&dir.join("summary.csv"))?)?,
            Format::Json => write_json(create(&dir.join("summary.json"))?, &out)?,
        }
    }
    for f in &out.failures {
        eprintln!(
            "replicate {} (seed {}) failed: {}",
            f.replicate, f.seed, f.message
        );
    }
    let stdout = io::stdout().lock();
    match g.format {
        Format::Csv => write_summary_csv(&out.summary, stdout)?,
        Format::Json => write_json(
            stdout,
            &json!({
                "spec": out.spec,
                "method": out.method,
                "base_seed": out.base_seed,
                "summary": out.summary,
                "failures": out.failures,
            }),
        )?,
    }
    Ok(())
}

fn example1(a: &SimulateArgs, g: &Global) -> CliResult<()> {
    let cfg = Example1Config {
        n_per_class: a.n.unwrap_or(500),
        rho: a.rho.unwrap_or(0.9),
        reps: a.reps.unwrap_or(1000),
    };
    let r = run_example1(&cfg, g.seed)?;
    let rows = [("nu", r.nu), ("nu_zeta", r.nu_zeta), ("beta", r.beta)];
    let render = |out: &mut dyn Write| -> CliResult<()> {
        match g.format {
            Format::Json => write_json(out, &json!({ "config": cfg, "base_seed": g.seed, "result": r })),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record([
                    "projection",
                    "error_mean",
                    "error_sd",
                    "fpr_mean",
                    "fpr_sd",
                    "fnr_mean",
                    "fnr_sd",
                ])
                .map_err(runtime)?;
                for (name, pr) in rows {
                    w.write_record([
                        name.to_string(),
                        pr.error.mean.to_string(),
                        pr.error.sd.to_string(),
                        pr.fpr.mean.to_string(),
                        pr.fpr.sd.to_string(),
                        pr.fnr.mean.to_string(),
                        pr.fnr.sd.to_string(),
                    ])
                    .map_err(runtime)?;
                }
                w.flush()?;
                Ok(())
            }
        }
    };
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(runtime)?;
        let name = match g.format {
            Format::Csv => "summary.csv",
            Format::Json => "summary.json",
        };
        render(&mut create(&dir.join(name))?)?;
    }
    render(&mut io::stdout().lock())
}

pub fn fit(a: &FitArgs, g: &Global) -> CliResult<()> {
    let train_path = required(&a.train, "train")?;
    let label = a.label_column.as_deref().unwrap_or(DEFAULT_LABEL_COLUMN);
    let train = load_csv(train_path, label)?;
    if train.num_classes() != 2 {
        return Err(usage(format!(
            "fit needs exactly 2 classes, found {}",
            train.num_classes()
        )));
    }
    let tuned = tune_and_fit(&train, d_policy(&a.pclda)?, s_policy(&a.pclda)?, g.seed)?;
    let model = &tuned.model;
    let pred = model.predict_rows(train.features())?;
    let errors = pred
        .iter()
        .zip(train.class_ordinals())
        .filter(|(p, t)| p != t)
        .count();
    let doc = ModelDocument::from_model(model, Some(train.feature_names()));
    if let Some(out) = &a.out {
        doc.save(out)?;
    }
    let names: Vec<&str> = model
        .selected()
        .iter()
        .map(|&j| train.feature_names()[j].as_str())
        .collect();
    let stdout = io::stdout().lock();
    match g.format {
        Format::Json => write_json(
            stdout,
            &json!({
                "n": train.n(),
                "p": train.p(),
                "d": tuned.d,
                "selection": model.selection(),
                "threshold": model.threshold(),
                "model_size": model.selected().len(),
                "selected": names,
                "train_errors": errors,
                "cv": tuned.cv,
            }),
        ),
        Format::Csv => write_pairs(
            stdout,
            &[
                ("n", train.n().to_string()),
                ("p", train.p().to_string()),
                ("d", tuned.d.to_string()),
                ("model_size", model.selected().len().to_string()),
                (
                    "threshold",
                    model.threshold().map(|t| t.to_string()).unwrap_or_default(),
                ),
                ("train_errors", format!("{errors}/{}", train.n())),
                ("selected", names.join(" ")),
            ],
        ),
    }
}

pub fn predict(a: &PredictArgs, g: &Global) -> CliResult<()> {
    let model_path = required(&a.model, "model")?;
    let input = required(&a.input, "input")?;
    let label = a.label_column.as_deref().unwrap_or(DEFAULT_LABEL_COLUMN);
    let doc = ModelDocument::load(model_path).map_err(|e| usage(format!("{}: {e}", model_path.display())))?;
    let model = doc.to_model()?;
    let table = read_table(input, Some(label), false)?;
    if table.features.ncols() != doc.p {
        return Err(usage(format!(
            "dimension mismatch: model expects {} features, {} has {}",
            doc.p,
            input.display(),
            table.features.ncols()
        )));
    }
    if let Some(names) = &doc.feature_names {
        if *names != table.feature_names {
            return Err(usage(
                "feature columns do not match the ones the model was fit on",
            ));
        }
    }
    let pred = model.predict_rows(&table.features)?;
    let labels: Vec<&str> = pred.iter().map(|&c| model.classes()[c].as_str()).collect();
    let errors = table.labels.as_ref().map(|truth| {
        truth
            .iter()
            .zip(&labels)
            .filter(|(t, p)| t.as_str() != **p)
            .count()
    });

    let write = |out: &mut dyn Write| -> CliResult<()> {
        match g.format {
            Format::Json => write_json(
                out,
                &json!({ "predictions": labels, "errors": errors, "n": labels.len() }),
            ),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["predicted"]).map_err(runtime)?;
                for l in &labels {
                    w.write_record([l]).map_err(runtime)?;
                }
                w.flush()?;
                Ok(())
            }
        }
    };
    match &a.out {
        Some(path) => write(&mut create(path)?)?,
        None => write(&mut io::stdout().lock())?,
    }
    if let Some(e) = errors {
        eprintln!("errors: {e}/{}", labels.len());
    }
    Ok(())
}

pub fn tune(a: &TuneArgs, g: &Global) -> CliResult<()> {
    let train_path = required(&a.train, "train")?;
    let label = a.label_column.as_deref().unwrap_or(DEFAULT_LABEL_COLUMN);
    let train = load_csv(train_path, label)?;
    let folds = a.pclda.folds.unwrap_or(DEFAULT_FOLDS);
    let (parameter, candidates, errors, best, d) = match a.method.unwrap_or(TuneMethod::Pclda) {
        TuneMethod::Pclda => {
            let d = match d_policy(&a.pclda)? {
                DPolicy::Fixed { d } => d,
                DPolicy::Fraction { frac } => choose_d_for(&pooled_covariance(&train)?, frac)?,
            };
            let max_s = a.pclda.max_s.unwrap_or(DEFAULT_MAX_S).min(train.p());
            let cands: Vec<usize> = (1..=max_s).collect();
            let cv = cv_select_s(&train, d, &cands, folds, g.seed)?;
            let as_f: Vec<f64> = cv.candidates.iter().map(|&s| s as f64).collect();
            ("s", as_f, cv.errors, cv.best as f64, Some(d))
        }
        TuneMethod::Nsc => {
            let stats = NscStats::new(&train)?;
            let top = stats.max_statistic();
            let len = a.grid.unwrap_or(DEFAULT_DELTA_GRID).max(2);
            let deltas: Vec<f64> = (0..len).map(|i| top * i as f64 / (len - 1) as f64).collect();
            let cv = cv_select_delta(&train, &deltas, folds, g.seed)?;
            ("delta", cv.candidates, cv.errors, cv.best, None)
        }
    };
    let write = |out: &mut dyn Write| -> CliResult<()> {
        match g.format {
            Format::Json => write_json(
                out,
                &json!({
                    "parameter": parameter,
                    "d": d,
                    "best": best,
                    "candidates": candidates,
                    "cv_error": errors,
                }),
            ),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["parameter", "candidate", "cv_error", "chosen"])
                    .map_err(runtime)?;
                for (c, e) in candidates.iter().zip(&errors) {
                    w.write_record([
                        parameter.to_string(),
                        c.to_string(),
                        e.map(|v| v.to_string()).unwrap_or_default(),
                        (*c == best).to_string(),
                    ])
                    .map_err(runtime)?;
                }
                w.flush()?;
                Ok(())
            }
        }
    };
    match &a.out {
        Some(path) => write(&mut create(path)?),
        None => write(&mut io::stdout().lock()),
    }
}

fn diag_config(a: &DiagnoseArgs, g: &Global) -> CliResult<DiagnosticsConfig> {
    let base = DiagnosticsConfig::default();
    let population = match a.model.unwrap_or(DiagModel::Delocalized) {
        DiagModel::Delocalized => DiagPopulation::default(),
        DiagModel::Eqcorr => DiagPopulation::Sim {
            model: CovModel::EqualCorr {
                rho: a.rho.unwrap_or(0.5),
            },
        },
        DiagModel::Block => DiagPopulation::Sim {
            model: CovModel::BlockDiag {
                rho: a.rho.unwrap_or(0.5),
                block: DEFAULT_BLOCK,
            },
        },
        DiagModel::Randcorr => DiagPopulation::Sim {
            model: CovModel::RandomCorr {
                rank: DEFAULT_RANK,
                dist: EntryDist::Normal,
            },
        },
    };
    let ps = a.p.clone().unwrap_or_else(|| vec![100, 200, 400]);
    let ns = a.n.clone().unwrap_or_else(|| vec![250, 1000, 4000]);
    let grid = ps.iter().flat_map(|&p| ns.iter().map(move |&n| (n, p))).collect();
    let identity_whitener = match a.inject_fault.as_deref() {
        None => false,
        Some("identity-whitener") => true,
        Some(other) => return Err(usage(format!("unknown fault '{other}'"))),
    };
    let cfg = DiagnosticsConfig {
        grid,
        reps: a.reps.unwrap_or(base.reps),
        population,
        threshold_c: a.c.unwrap_or(base.threshold_c),
        threshold_alpha: a.alpha.unwrap_or(base.threshold_alpha),
        seed: g.seed,
        identity_whitener,
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn diagnose(a: &DiagnoseArgs, g: &Global) -> CliResult<()> {
    let cfg = diag_config(a, g)?;
    let theorem = a.theorem.unwrap_or(Theorem::All);
    let tolerance = a.tolerance.unwrap_or(DEFAULT_DECAY_TOLERANCE);
    let mut tables: Vec<(&str, Vec<RateRow>)> = Vec::new();
    let mut checks: Vec<DecayCheck> = Vec::new();

    if theorem == Theorem::Identity {
        let p = cfg.grid[0].1;
        let n_factor = a.n_factor.unwrap_or(50);
        let devs = whitening_identity_check(&cfg.population, p, n_factor, cfg.reps, cfg.seed)?;
        let mean = devs.iter().sum::<f64>() / devs.len() as f64;
        tables.push((
            "identity",
            vec![RateRow {
                n: n_factor * p,
                p,
                metric: "whitening_identity".into(),
                mean,
                q95: Some(spikelda::diagnostics::quantile(&devs, 0.95)),
                ratio_to_bound: None,
            }],
        ));
    } else {
        let cells = run_cells(&cfg)?;
        let rows = spikelda::diagnostics::rows_from_cells(&cfg, &cells)?;
        let pick = |metrics: &[&str]| -> Vec<RateRow> {
            rows.iter()
                .filter(|r| metrics.contains(&r.metric.as_str()))
                .cloned()
                .collect()
        };
        if matches!(theorem, Theorem::One | Theorem::All) {
            let t = pick(&["u_2inf_aligned", "u_2inf_raw"]);
            checks.extend(decay_checks(&t, "u_2inf_aligned", tolerance));
            tables.push(("theorem1", t));
        }
        if matches!(theorem, Theorem::Two | Theorem::All) {
            let t = pick(&["zeta_inf"]);
            checks.extend(decay_checks(&t, "zeta_inf", tolerance));
            tables.push(("theorem2", t));
        }
        if matches!(theorem, Theorem::Three | Theorem::All) {
            let t = pick(&["exact_recovery"]);
            checks.extend(recovery_checks(&t, cfg.reps));
            tables.push(("theorem3", t));
        }
    }

    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(runtime)?;
        for (name, rows) in &tables {
            match g.format {
                Format::Csv => write_rates_csv(rows, create(&dir.join(format!("{name}.csv")))?)?,
                Format::Json => write_json(create(&dir.join(format!("{name}.json")))?, rows)?,
            }
        }
    }
    let mut stdout = io::stdout().lock();
    match g.format {
        Format::Json => {
            let obj: serde_json::Map<String, serde_json::Value> = tables
                .iter()
                .map(|(n, r)| (n.to_string(), serde_json::to_value(r).expect("rows serialize")))
                .collect();
            write_json(&mut stdout, &json!({ "tables": obj, "checks": checks }))?;
        }
        Format::Csv => {
            for (i, (_, rows)) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(stdout)?;
                }
                write_rates_csv(rows, &mut stdout)?;
            }
        }
    }
    let failed: Vec<&DecayCheck> = checks.iter().filter(|c| !c.passed).collect();
    for c in &failed {
        eprintln!(
            "check failed: {} at p={} n {}->{}: {:.4} outside [{:.4}, {:.4}]",
            c.metric, c.p, c.n_from, c.n_to, c.factor, c.lower, c.upper
        );
    }
    if !failed.is_empty() {
        return Err(CliError::Assertion(format!(
            "{} of {} checks failed",
            failed.len(),
            checks.len()
        )));
    }
    Ok(())
}

pub fn info(g: &Global, threads: usize) -> CliResult<()> {
    let pairs = [
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("seed", g.seed.to_string()),
        ("threads", threads.to_string()),
        ("variance_fraction", DEFAULT_VARIANCE_FRACTION.to_string()),
        ("max_s", DEFAULT_MAX_S.to_string()),
        ("folds", DEFAULT_FOLDS.to_string()),
        ("threshold_c", DEFAULT_THRESHOLD_C.to_string()),
        ("threshold_alpha", DEFAULT_THRESHOLD_ALPHA.to_string()),
        ("nsc_grid", DEFAULT_DELTA_GRID.to_string()),
    ];
    let stdout = io::stdout().lock();
    match g.format {
        Format::Csv => write_pairs(stdout, &pairs),
        Format::Json => {
            let obj: serde_json::Map<String, serde_json::Value> =
                pairs.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
            write_json(stdout, &obj)
        }
    }
}
