use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::model_file::{LoadedModel, ModelFile};
use super::{Cli, Command, GlobalArgs};
use crate::autodiff::Matrix;
use crate::data::{fmt_f64, Dataset};
use crate::datagen::{generate, GeneratorSpec};
use crate::encoders::EncoderKind;
use crate::error::{Error, Result};
use crate::glm::{Family, LikelihoodSpec, SampleModel};
use crate::identifiability::{heuristic_check, rank_check, EncoderClass, IdentifiabilityReport};
use crate::nonparametric::{
    adaptive_grid, cluster_atoms, fit_atoms, fit_pseudo, linspace, pseudo_density, stitch_transmission, KMeansOptions,
};
use crate::training::{bootstrap_fit, fit, FitReport, FittedModel};

/// CSV column names of a flattened sample model, in [`SampleModel::flatten`] order.
pub fn parameter_names(likelihood: &LikelihoodSpec, predictors: &[String]) -> Vec<String> {
    let linear = |prefix: &str| {
        let mut v: Vec<String> = predictors.iter().map(|p| format!("{prefix}coef_{p}")).collect();
        v.push(format!("{prefix}offset"));
        v
    };
    match likelihood.family {
        Family::Gaussian | Family::Bernoulli => linear(""),
        Family::HeteroGaussian => {
            let mut v = linear("");
            v.push("log_variance".into());
            v
        }
        Family::MixtureGaussian => (0..likelihood.mixture_count).flat_map(|k| linear(&format!("head{k}_"))).collect(),
    }
}

fn note(global: &GlobalArgs, msg: &str) {
    if !global.quiet {
        eprintln!("{msg}");
    }
}

fn out_dir(global: &GlobalArgs, fallback: PathBuf) -> Result<PathBuf> {
    let dir = global.out.clone().unwrap_or(fallback);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn require_config(global: &GlobalArgs, what: &str) -> Result<RunConfig> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| Error::Config(format!("`{what}` needs --config <path>")))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = global.seed {
        cfg.training.seed = seed;
    }
    Ok(cfg)
}

pub fn run_command(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Fit => cmd_fit(g),
        Command::Predict { model, data } => cmd_predict(g, model, data),
        Command::Density {
            model,
            context,
            x,
            y_min,
            y_max,
            points,
        } => cmd_density(g, model, context, x, *y_min, *y_max, *points),
        Command::CheckId {
            n,
            m,
            p,
            encoder_class,
            data,
            context_cols,
            predictor_cols,
        } => cmd_check_id(g, *n, *m, *p, encoder_class, data.as_deref(), context_cols, predictor_cols),
        Command::Simulate { spec } => cmd_simulate(g, spec.as_deref()),
        Command::Atoms {
            l,
            k,
            predictor,
            grid_points,
        } => cmd_atoms(g, *l, *k, *predictor, *grid_points),
    }
}

#[derive(Serialize)]
struct Metrics<'a> {
    n: usize,
    context_dim: usize,
    predictor_dim: usize,
    initial_train_nll: f64,
    final_train_nll: f64,
    reports: Vec<&'a FitReport>,
    identifiability: Option<IdentifiabilityReport>,
}

fn write_param_csv(path: &Path, names: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sample_id".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (i, r) in rows.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(r.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn flat_rows(models: &[SampleModel]) -> Vec<Vec<f64>> {
    models.iter().map(SampleModel::flatten).collect()
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn cmd_fit(g: &GlobalArgs) -> Result<()> {
    let cfg = require_config(g, "fit")?;
    let data = cfg.load_dataset()?;
    let out = out_dir(g, cfg.output_dir())?;
    let (m, p) = (data.context_dim(), data.predictor_dim());
    note(g, &format!("fitting on {} rows ({m} context, {p} predictor columns)", data.n()));

    let mut identifiability = None;
    if cfg.encoder.kind == EncoderKind::Linear && cfg.pseudo.is_none() {
        let report = heuristic_check(data.n(), m, p, EncoderClass::LinearVc)?.with_rank_check(&data.context, &data.predictors)?;
        if report.empirical_identifiable == Some(false) {
            note(
                g,
                &format!(
                    "warning: the linear varying-coefficient design has rank {} < {}; coefficients are not uniquely determined",
                    report.empirical_rank.unwrap_or(0),
                    m * p
                ),
            );
        }
        identifiability = Some(report);
    }

    let likelihood = cfg.likelihood.spec();
    let (file, models, train_params): (ModelFile, Vec<FittedModel>, Vec<Vec<f64>>) = if let Some(ps) = &cfg.pseudo {
        if cfg.training.n_bootstraps > 1 {
            note(g, "warning: n_bootstraps is ignored for pseudo-sampled fits");
        }
        let model = fit_pseudo(&data, ps, &cfg.regularization, &cfg.training)?;
        let rows = flat_rows(&model.sample_models(&data.context)?);
        (ModelFile::from_model(&model), vec![model], rows)
    } else {
        let encoder = cfg.encoder.spec(m, likelihood.output_dim(p));
        if cfg.training.n_bootstraps > 1 {
            let ens = bootstrap_fit(&data, &encoder, &likelihood, &cfg.regularization, &cfg.training, true)?;
            let pred = ens.predict(&data.context, &data.predictors)?;
            (ModelFile::from_ensemble(&ens), ens.members, matrix_rows(&pred.param_mean))
        } else {
            let model = fit(&data, &encoder, &likelihood, &cfg.regularization, &cfg.training)?;
            let rows = flat_rows(&model.sample_models(&data.context)?);
            (ModelFile::from_model(&model), vec![model], rows)
        }
    };

    file.save(&out.join("model.json"))?;
    let names = parameter_names(&models[0].likelihood, &data.roles.predictors);
    write_param_csv(&out.join("params.csv"), &names, &train_params)?;
    let k = models.len() as f64;
    let metrics = Metrics {
        n: data.n(),
        context_dim: m,
        predictor_dim: p,
        initial_train_nll: models.iter().map(|m| m.report.initial_train_nll).sum::<f64>() / k,
        final_train_nll: models.iter().map(|m| m.report.final_train_nll).sum::<f64>() / k,
        reports: models.iter().map(|m| &m.report).collect(),
        identifiability,
    };
    write_json(&out.join("metrics.json"), &metrics)?;
    note(
        g,
        &format!(
            "train nll {:.6} -> {:.6}; wrote {}",
            metrics.initial_train_nll,
            metrics.final_train_nll,
            out.display()
        ),
    );
    Ok(())
}

fn cmd_predict(g: &GlobalArgs, model_path: &Path, data_path: &Path) -> Result<()> {
    let loaded = ModelFile::load(model_path)?;
    let primary = loaded.primary();
    let roles = &primary.roles;
    let data = Dataset::inputs_from_csv(data_path, &roles.context, &roles.predictors)?;
    let names = parameter_names(&primary.likelihood, &roles.predictors);
    let out = out_dir(g, PathBuf::from("."))?;
    let path = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    match &loaded {
        LoadedModel::Single(model) => {
            let pred = model.predict(&data.context, &data.predictors)?;
            let mut header = vec!["sample_id".to_string(), "prediction".to_string()];
            header.extend(names.iter().cloned());
            w.write_record(&header)?;
            for (i, (mean, sm)) in pred.mean.iter().zip(&pred.models).enumerate() {
                let mut rec = vec![i.to_string(), fmt_f64(*mean)];
                rec.extend(sm.flatten().iter().map(|&v| fmt_f64(v)));
                w.write_record(&rec)?;
            }
        }
        LoadedModel::Ensemble(ens) => {
            let pred = ens.predict(&data.context, &data.predictors)?;
            let mut header: Vec<String> = ["sample_id", "prediction", "prediction_lower", "prediction_upper"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            header.extend(names.iter().cloned());
            header.extend(names.iter().map(|n| format!("{n}_lower")));
            header.extend(names.iter().map(|n| format!("{n}_upper")));
            w.write_record(&header)?;
            for i in 0..data.n() {
                let mut rec = vec![
                    i.to_string(),
                    fmt_f64(pred.mean[i]),
                    fmt_f64(pred.lower[i]),
                    fmt_f64(pred.upper[i]),
                ];
                for m in [&pred.param_mean, &pred.param_lower, &pred.param_upper] {
                    rec.extend(m.row(i).iter().map(|&v| fmt_f64(v)));
                }
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    note(g, &format!("wrote {} predictions to {}", data.n(), path.display()));
    Ok(())
}

fn parse_values(what: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Data(format!("{what}: `{v}` is not a finite number")))
        })
        .collect()
}

fn parse_names(s: &str) -> Vec<String> {
    s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
}

fn cmd_density(
    g: &GlobalArgs,
    model_path: &Path,
    context: &str,
    x: &str,
    y_min: Option<f64>,
    y_max: Option<f64>,
    points: usize,
) -> Result<()> {
    let model = match ModelFile::load(model_path)? {
        LoadedModel::Single(m) if m.pseudo.is_some() => m,
        _ => {
            return Err(Error::NotPseudo(format!(
                "{} was not fit with pseudo-sampling enabled",
                model_path.display()
            )))
        }
    };
    let c = parse_values("--context", context)?;
    let xv = parse_values("--x", x)?;
    let grid = match (y_min, y_max) {
        (Some(lo), Some(hi)) if lo < hi => linspace(lo, hi, points.max(2)),
        (None, None) => adaptive_grid(&model, &c, &xv, points)?,
        _ => return Err(Error::Config("give both --y-min and --y-max with y-min < y-max, or neither".into())),
    };
    let d = pseudo_density(&model, &c, &xv, &grid)?;
    if d.narrow_grid {
        note(g, "warning: the grid does not cover +/-4 sd of every component; the integral may fall short of 1");
    }
    let out = out_dir(g, PathBuf::from("."))?;
    let path = out.join("density.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["y", "density"])?;
    for (y, v) in d.grid.iter().zip(&d.density) {
        w.write_record([fmt_f64(*y), fmt_f64(*v)])?;
    }
    w.flush()?;
    drop(w);
    let footer = format!("# integral={} narrow_grid={}\n", fmt_f64(d.integral), d.narrow_grid);
    std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .and_then(|mut f| std::io::Write::write_all(&mut f, footer.as_bytes()))?;
    note(g, &format!("integral {:.6}; wrote {}", d.integral, path.display()));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_check_id(
    g: &GlobalArgs,
    n: Option<usize>,
    m: Option<usize>,
    p: Option<usize>,
    class: &str,
    data: Option<&Path>,
    context_cols: &Option<String>,
    predictor_cols: &Option<String>,
) -> Result<()> {
    let class: EncoderClass = class.parse()?;
    let dataset = match data {
        Some(path) => {
            let (ctx, preds) = match (context_cols, predictor_cols) {
                (Some(c), Some(x)) => (parse_names(c), parse_names(x)),
                _ => match &g.config {
                    Some(_) => {
                        let cfg = require_config(g, "check-id")?;
                        (cfg.data.context.clone(), cfg.data.predictors.clone())
                    }
                    None => {
                        return Err(Error::Config(
                            "--data needs --context-cols and --predictor-cols (or a --config with role lists)".into(),
                        ))
                    }
                },
            };
            Some(Dataset::inputs_from_csv(path, &ctx, &preds)?)
        }
        None => None,
    };
    let pick = |given: Option<usize>, from_data: Option<usize>, name: &str| {
        given
            .or(from_data)
            .ok_or_else(|| Error::Config(format!("--{name} is required without --data")))
    };
    let n = pick(n, dataset.as_ref().map(Dataset::n), "n")?;
    let m = pick(m, dataset.as_ref().map(Dataset::context_dim), "m")?;
    let p = pick(p, dataset.as_ref().map(Dataset::predictor_dim), "p")?;
    let mut report = heuristic_check(n, m, p, class)?;
    if let Some(d) = &dataset {
        let (rank, ok) = rank_check(&d.context, &d.predictors)?;
        report.empirical_rank = Some(rank);
        report.empirical_identifiable = Some(ok);
        if !ok {
            note(g, &format!("warning: design rank {rank} < {}", d.context_dim() * d.predictor_dim()));
        }
    }
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("identifiability.json"), &report)?;
    }
    Ok(())
}

fn cmd_simulate(g: &GlobalArgs, spec: Option<&Path>) -> Result<()> {
    let path = spec
        .or(g.config.as_deref())
        .ok_or_else(|| Error::Config("`simulate` needs --spec <path> (or --config)".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read generator spec {}: {e}", path.display())))?;
    let mut spec: GeneratorSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid generator spec: {e}")))?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let gen = generate(&spec)?;
    let out = out_dir(g, PathBuf::from("."))?;
    gen.data.write_csv(&out.join("data.csv"))?;
    gen.truth.write_csv(&out.join("truth.csv"))?;
    if let Some((test, truth)) = &gen.test {
        test.write_csv(&out.join("test.csv"))?;
        truth.write_csv(&out.join("test_truth.csv"))?;
    }
    if !g.quiet {
        println!("simulated {} rows (seed {}) into {}", gen.data.n(), spec.seed, out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterSummary {
    l: usize,
    k: usize,
    inertia: f64,
    degenerate: bool,
    bandwidths: Vec<f64>,
}

fn cmd_atoms(g: &GlobalArgs, l: usize, k: usize, predictor: usize, grid_points: usize) -> Result<()> {
    let cfg = require_config(g, "atoms")?;
    let data = cfg.load_dataset()?;
    if predictor >= data.predictor_dim() {
        return Err(Error::Config(format!(
            "--predictor {predictor} is out of range for {} predictors",
            data.predictor_dim()
        )));
    }
    let out = out_dir(g, cfg.output_dir())?;
    let atoms = fit_atoms(&data, l, &cfg.training)?;
    let opts = KMeansOptions {
        seed: cfg.training.seed,
        ..Default::default()
    };
    let clustering = cluster_atoms(&atoms, k, &opts)?;
    if clustering.degenerate {
        note(g, "warning: all atoms coincide; returning a single cluster");
    }

    let names = parameter_names(&LikelihoodSpec::gaussian(), &data.roles.predictors);
    let mut w = csv::Writer::from_path(out.join("atoms.csv"))?;
    let mut header = vec!["atom_id".to_string(), "sample_id".to_string()];
    header.extend(names);
    w.write_record(&header)?;
    for (a, (row, sm)) in atoms.anchors.iter().zip(&atoms.atoms).enumerate() {
        let mut rec = vec![a.to_string(), row.to_string()];
        rec.extend(sm.flatten().iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("assignments.csv"))?;
    w.write_record(["atom_id", "sample_id", "cluster"])?;
    for (a, (row, c)) in atoms.anchors.iter().zip(&clustering.assignments).enumerate() {
        w.write_record([a.to_string(), row.to_string(), c.to_string()])?;
    }
    w.flush()?;

    let xs = data.predictors.column(predictor);
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid = if hi > lo { linspace(lo, hi, grid_points.max(2)) } else { vec![lo] };
    let mut w = csv::Writer::from_path(out.join("components.csv"))?;
    w.write_record(["x", "yhat", "cluster"])?;
    let mut bandwidths = Vec::new();
    let clusters = clustering.assignments.iter().max().map_or(0, |m| m + 1);
    for c in 0..clusters {
        let comp = stitch_transmission(&atoms, &clustering.assignments, c, &grid, predictor)?;
        bandwidths.push(comp.bandwidth);
        for (x, y) in comp.grid.iter().zip(&comp.yhat) {
            w.write_record([fmt_f64(*x), fmt_f64(*y), c.to_string()])?;
        }
    }
    w.flush()?;
    write_json(
        &out.join("clustering.json"),
        &ClusterSummary {
            l,
            k,
            inertia: clustering.inertia,
            degenerate: clustering.degenerate,
            bandwidths,
        },
    )?;
    note(g, &format!("wrote {l} atoms in {clusters} clusters to {}", out.display()));
    Ok(())
}
