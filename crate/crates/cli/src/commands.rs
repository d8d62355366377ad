use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use simam::experiments::{
    convergence_study, paired_t_test, per_node_rmse, prediction_study, Alternative, ConvergenceDesign, PredictionDesign,
};
use simam::io::{self, node_header};
use simam::model::{EarlyStop, Sparsity};
use simam::network::{influence_ranking, spectral_clustering, symmetrize_or};
use simam::simulation::{gen_ground_truth, simulate_series, LinkFamily, Noise, PaperDesign};
use simam::{fit_network, rollout_predict, Error, Init, NodeConfig};

use crate::{
    CliError, ClusterArgs, DesignPreset, ExperimentArgs, ExperimentPreset, FitArgs, InitKind, PredictArgs, Scale,
    SimulateArgs, EXIT_FIT, EXIT_INGEST, EXIT_SHAPE, EXIT_USAGE,
};

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::new(EXIT_USAGE, msg)
}

fn ingest(e: Error) -> CliError {
    match e {
        Error::Shape(_) => CliError::new(EXIT_SHAPE, e.to_string()),
        _ => CliError::new(EXIT_INGEST, e.to_string()),
    }
}

fn fit_error(e: Error) -> CliError {
    match e {
        Error::Config(_) => CliError::new(EXIT_USAGE, e.to_string()),
        Error::Shape(_) => CliError::new(EXIT_SHAPE, e.to_string()),
        _ => CliError::new(EXIT_FIT, e.to_string()),
    }
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(1, format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| write_error(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| write_error(path, e))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::new(EXIT_INGEST, format!("cannot read {}: {e}", path.display())))
}

fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::new(EXIT_INGEST, format!("cannot read {}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    args: &'a T,
}

fn manifest_json<T: Serialize>(command: &str, args: &T) -> CliResult<String> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    let mut s = serde_json::to_string_pretty(&m).map_err(|e| usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_noise(text: &str) -> CliResult<Noise> {
    let (kind, value) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("noise `{text}`: expected gaussian:SIGMA or uniform:HALF_WIDTH")))?;
    let v: f64 = value
        .parse()
        .map_err(|_| usage(format!("noise scale `{value}` is not a number")))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(usage("noise scale must be finite and non-negative"));
    }
    match kind {
        "gaussian" => Ok(Noise::Gaussian { sigma: v }),
        "uniform" => Ok(Noise::Uniform { half_width: v }),
        _ => Err(usage(format!("unknown noise law `{kind}`"))),
    }
}

fn parse_sparsity(text: &str) -> CliResult<Sparsity> {
    if text == "lasso-cv" {
        return Ok(Sparsity::LassoCv);
    }
    text.parse()
        .map(Sparsity::Fixed)
        .map_err(|_| usage(format!("sparsity `{text}`: expected an integer or lasso-cv")))
}

fn parse_early_stop(text: &str) -> CliResult<EarlyStop> {
    let bad = || usage(format!("early stop `{text}`: expected FRACTION,PATIENCE"));
    let (f, p) = text.split_once(',').ok_or_else(bad)?;
    Ok(EarlyStop {
        validation_fraction: f.trim().parse().map_err(|_| bad())?,
        patience: p.trim().parse().map_err(|_| bad())?,
    })
}

fn design(p: DesignPreset) -> PaperDesign {
    match p {
        DesignPreset::Sim9 => PaperDesign::Sim9,
        DesignPreset::Predict9 => PaperDesign::Predict9,
        DesignPreset::Sim36 => PaperDesign::Sim36,
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let noise = parse_noise(&args.noise)?;
    if args.transitions < 2 {
        return Err(usage("--T must be at least 2"));
    }
    let truth_seed = simam::simulation::derive_seed(args.seed, 0);
    let series_seed = simam::simulation::derive_seed(args.seed, 1);
    let truth = match args.paper_design {
        Some(p) => design(p).ground_truth(noise, truth_seed),
        None => {
            let m = args
                .nodes
                .ok_or_else(|| usage("either --M or --paper-design is required"))?;
            if m == 0 {
                return Err(usage("--M must be at least 1"));
            }
            let s = args.s_star.unwrap_or(m.min(3));
            if s == 0 || s > m {
                return Err(usage(format!("--s-star {s} outside 1..={m}")));
            }
            if args.first_link == 0 {
                return Err(usage("--first-link must be at least 1"));
            }
            gen_ground_truth(m, s, LinkFamily::consecutive(m, args.first_link), noise, truth_seed)
        }
    }
    .map_err(|e| usage(e.to_string()))?;
    let (x, _) = simulate_series(&truth, args.transitions, series_seed).map_err(fit_error)?;

    let csv = with_suffix(&args.out_prefix, ".csv");
    let mut w = create(&csv)?;
    io::write_csv(x.view(), Some(&node_header(x.nodes())), &mut w).map_err(|e| write_error(&csv, e))?;
    w.flush().map_err(|e| write_error(&csv, e))?;
    let truth_path = with_suffix(&args.out_prefix, ".truth.json");
    write_text(
        &truth_path,
        &io::to_json(&truth).map_err(|e| write_error(&truth_path, e))?,
    )?;
    write_text(
        &with_suffix(&args.out_prefix, ".manifest.json"),
        &manifest_json("simulate", args)?,
    )
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let sparsity = parse_sparsity(&args.sparsity)?;
    let early_stop = args.early_stop.as_deref().map(parse_early_stop).transpose()?;
    if !(args.train_frac > 0.0 && args.train_frac <= 1.0) {
        return Err(usage("--train-frac must lie in (0, 1]"));
    }
    let x = io::read_series(open(&args.input)?).map_err(ingest)?;
    let n_train = (args.train_frac * x.transitions() as f64).round() as usize;
    if n_train < 2 {
        return Err(usage(format!(
            "--train-frac leaves {n_train} transitions, need at least 2"
        )));
    }
    let x = x.slice_rows(0..n_train + 1).map_err(ingest)?;

    let mut cfg = NodeConfig::new(0, args.step_size, args.max_iters);
    cfg.sparsity = sparsity;
    cfg.init = match args.init {
        InitKind::Paper => Init::Paper,
        InitKind::Lasso => Init::LassoWarmStart,
    };
    cfg.early_stop = early_stop;
    cfg.record_iterates = args.record_iterates;
    cfg.validate(x.nodes()).map_err(fit_error)?;

    let mut model = fit_network(&x, &vec![cfg; x.nodes()], args.seed).map_err(fit_error)?;
    model.manifest.insert("command".into(), "fit".into());
    model
        .manifest
        .insert("version".into(), env!("CARGO_PKG_VERSION").into());
    model.manifest.insert(
        "args".into(),
        serde_json::to_string(args).map_err(|e| usage(e.to_string()))?,
    );
    let text = io::write_model(&model).map_err(|e| write_error(&args.out, e))?;
    write_text(&args.out, &text)
}

#[derive(Serialize)]
struct PredictMetrics {
    rows: usize,
    per_node_rmse: Vec<f64>,
    per_node_mse: Vec<f64>,
    mean_mse: f64,
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let model = io::read_model(&read_to_string(&args.model)?).map_err(ingest)?;
    let x = io::read_window(open(&args.input)?).map_err(ingest)?;
    let preds = rollout_predict(&model, &x).map_err(fit_error)?;
    let rmse = per_node_rmse(preds.view(), x.targets()).map_err(fit_error)?;
    let mse: Vec<f64> = rmse.iter().map(|r| r * r).collect();
    let metrics = PredictMetrics {
        rows: preds.nrows(),
        mean_mse: mse.iter().sum::<f64>() / mse.len() as f64,
        per_node_mse: mse,
        per_node_rmse: rmse,
    };

    let mut w = create(&args.out)?;
    io::write_csv(preds.view(), Some(&node_header(model.nodes())), &mut w).map_err(|e| write_error(&args.out, e))?;
    w.flush().map_err(|e| write_error(&args.out, e))?;
    let path = args
        .metrics
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".metrics.json"));
    let text = io::to_json(&json!({ "metrics": metrics, "manifest": serde_json::to_value(args).ok() }))
        .map_err(|e| write_error(&path, e))?;
    write_text(&path, &(text + "\n"))
}

pub fn experiment(args: &ExperimentArgs) -> CliResult<()> {
    let replicates = args.replicates.unwrap_or(match (args.scale, args.preset) {
        (Scale::Desk, _) => 20,
        (Scale::Paper, ExperimentPreset::Convergence) => 100,
        (Scale::Paper, _) => 50,
    });
    if replicates == 0 {
        return Err(usage("--replicates must be at least 1"));
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| write_error(&args.out_dir, e))?;
    let name = match args.preset {
        ExperimentPreset::Convergence => "convergence",
        ExperimentPreset::Predict9 => "predict9",
        ExperimentPreset::Predict36 => "predict36",
    };
    let csv_path = args.out_dir.join(format!("{name}.csv"));
    let json_path = args.out_dir.join(format!("{name}.json"));

    let (report, body) = match args.preset {
        ExperimentPreset::Convergence => {
            let mut d = ConvergenceDesign::default();
            if let Some(k) = args.max_iters {
                d.max_iters = k;
            }
            let grid: Vec<usize> = match args.scale {
                Scale::Desk => (1..=6).map(|i| 100 * i).collect(),
                Scale::Paper => (2..=21).map(|i| 50 * i).collect(),
            };
            let out = convergence_study(&d, &grid, replicates, args.seed).map_err(fit_error)?;
            if out.curve.is_empty() {
                return Err(CliError::new(EXIT_FIT, "every replicate failed"));
            }
            let curve_path = args.out_dir.join(format!("{name}_curve.csv"));
            let mut w = create(&curve_path)?;
            writeln!(w, "t,t_inv_cbrt,mean_error").map_err(|e| write_error(&curve_path, e))?;
            for p in &out.curve {
                writeln!(
                    w,
                    "{},{},{}",
                    p.t,
                    io::format_float(p.t_inv_cbrt),
                    io::format_float(p.mean_error)
                )
                .map_err(|e| write_error(&curve_path, e))?;
            }
            w.flush().map_err(|e| write_error(&curve_path, e))?;
            let body = json!({
                "design": d,
                "t_grid": grid,
                "curve": out.curve,
                "log_log": out.log_log,
                "inverse_cube_root": out.inverse_cube_root,
                "report": out.report,
            });
            (out.report, body)
        }
        ExperimentPreset::Predict9 | ExperimentPreset::Predict36 => {
            let noise = parse_noise(&args.noise)?;
            let mut d = if args.preset == ExperimentPreset::Predict9 {
                PredictionDesign::nine(noise)
            } else {
                PredictionDesign::thirty_six(noise)
            };
            if let Some(k) = args.max_iters {
                d.max_iters = k;
            }
            let out = prediction_study(&d, replicates, args.seed).map_err(fit_error)?;
            let ok: Vec<_> = out.replicates.iter().flatten().collect();
            if ok.is_empty() {
                return Err(CliError::new(EXIT_FIT, "every replicate failed"));
            }
            let simam: Vec<f64> = ok
                .iter()
                .map(|r| *r.simam_test.last().expect("non-empty trace"))
                .collect();
            let lasso: Vec<f64> = ok.iter().map(|r| r.lasso_test).collect();
            let test = paired_t_test(&simam, &lasso, Alternative::Less).ok();
            let body = json!({
                "design": d,
                "simam_win_rate": out.simam_win_rate(),
                "paired_t_test_final_test_mse": test,
                "replicates": out.replicates,
                "report": out.report,
            });
            (out.report, body)
        }
    };

    let mut w = create(&csv_path)?;
    report.write_csv(&mut w).map_err(|e| write_error(&csv_path, e))?;
    w.flush().map_err(|e| write_error(&csv_path, e))?;
    let text = io::to_json(&body).map_err(|e| write_error(&json_path, e))?;
    write_text(&json_path, &(text + "\n"))?;
    write_text(&args.out_dir.join("manifest.json"), &manifest_json("experiment", args)?)
}

pub fn cluster(args: &ClusterArgs) -> CliResult<()> {
    let model = io::read_model(&read_to_string(&args.model)?).map_err(ingest)?;
    let network = model.network();
    let mut w = create(&args.out)?;
    if args.rank_influence {
        let ranking = influence_ranking(network.view()).map_err(fit_error)?;
        io::write_ranking(&ranking, &mut w).map_err(|e| write_error(&args.out, e))?;
    } else {
        let k = args.k_clusters.expect("clap enforces one mode");
        let m = model.nodes();
        if k == 0 || k > m {
            return Err(usage(format!("--k-clusters {k} outside 1..={m}")));
        }
        if args.restarts == 0 {
            return Err(usage("--restarts must be at least 1"));
        }
        let adj = symmetrize_or(network.view()).map_err(fit_error)?;
        let labels = spectral_clustering(adj.view(), k, args.seed, args.restarts).map_err(fit_error)?;
        io::write_labels(&labels, &mut w).map_err(|e| write_error(&args.out, e))?;
    }
    w.flush().map_err(|e| write_error(&args.out, e))
}
