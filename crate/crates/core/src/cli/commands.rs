use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde_json::{json, Value};

use crate::analysis::{
    count_params, enumerate_params, export_shapes, extract_shapes, match_shapes, sensitivity_matrix,
};
use crate::cli::config::{AnalysisKind, LoadedConfig, RunConfig};
use crate::data::{
    downsample, export_csv, gen_synthetic, ingest_csv, make_windows, split_622, Partition, PartitionKind, SeriesTable,
    WindowedDataset,
};
use crate::error::{Error, Result};
use crate::metrics::horizon_report;
use crate::models::{checkpoint, Model};
use crate::numerics::Tensor;
use crate::training::{predict, train};

/// Exclusive claim on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Io(std::io::Error::new(
                e.kind(),
                format!("output directory {} is locked by another run ({})", dir.display(), path.display()),
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Records this command's config echo and outputs under its own key in
/// `manifest.json`, keeping entries written by earlier commands.
fn write_manifest(run: &RunConfig, command: &str, outputs: &[&str]) -> Result<()> {
    let path = run.out_dir.join("manifest.json");
    let mut root = match fs::read_to_string(&path) {
        Ok(s) => serde_json::from_str::<Value>(&s).unwrap_or_else(|_| json!({})),
        Err(_) => json!({}),
    };
    let entry = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": run.seed,
        "config": run,
        "outputs": outputs,
    });
    if let Value::Object(map) = &mut root {
        map.insert(command.to_string(), entry);
    } else {
        root = json!({ command: entry });
    }
    fs::write(&path, serde_json::to_string_pretty(&root)? + "\n")?;
    Ok(())
}

/// The configured series: the CSV at `data.path` when set, otherwise the
/// synthetic generator seeded by the run seed.
pub fn load_series(run: &RunConfig) -> Result<SeriesTable> {
    let table = match &run.data.path {
        Some(p) => {
            let (table, fills) = ingest_csv(p)?;
            if fills.total() > 0 {
                warn!(
                    "{}: filled {} missing cells ({} forward, {} leading zeros)",
                    p.display(),
                    fills.total(),
                    fills.forward_filled.iter().sum::<usize>(),
                    fills.zero_filled.iter().sum::<usize>()
                );
            }
            table
        }
        None => {
            let mut spec = run.data.synthetic.clone();
            spec.seed = run.seed;
            gen_synthetic(&spec)?
        }
    };
    if run.data.downsample > 1 {
        downsample(&table, run.data.downsample, run.data.aggregation)
    } else {
        Ok(table)
    }
}

fn windows(run: &RunConfig, parts: &[Partition; 3], kind: PartitionKind, t_in: usize, t_out: usize) -> Result<WindowedDataset> {
    let part = parts.iter().find(|p| p.kind == kind).expect("all kinds present");
    make_windows(part, t_in, t_out, run.data.stride)
}

pub fn gen_data(run: &RunConfig) -> Result<()> {
    let _lock = OutputLock::acquire(&run.out_dir)?;
    let mut spec = run.data.synthetic.clone();
    spec.seed = run.seed;
    let table = gen_synthetic(&spec)?;
    export_csv(&table, &run.out_dir.join("series.csv"))?;
    write_manifest(run, "gen-data", &["series.csv"])?;
    println!("wrote {} steps x {} channels to {}", table.len(), table.n_channels(), run.out_dir.join("series.csv").display());
    Ok(())
}

pub fn train_cmd(run: &RunConfig) -> Result<()> {
    let _lock = OutputLock::acquire(&run.out_dir)?;
    let table = load_series(run)?;
    let parts = split_622(&table)?;
    let (t_in, t_out) = (run.model.t_in, run.model.t_out);
    let train_ds = windows(run, &parts, PartitionKind::Train, t_in, t_out)?;
    let val_ds = windows(run, &parts, PartitionKind::Val, t_in, t_out)?;
    let mut tc = run.train.clone();
    tc.seed = run.seed;
    info!(
        "training {} on {} windows, validating on {}",
        run.model.kind.name(),
        train_ds.len(),
        val_ds.len()
    );
    let (model, report) = train(&run.model, &train_ds, &val_ds, &tc)?;
    checkpoint::save(&model, &run.out_dir.join("model.ckpt"))?;
    report.save(&run.out_dir, "train_report")?;
    write_manifest(run, "train", &["model.ckpt", "train_report.json", "train_report_epochs.csv"])?;
    println!(
        "best epoch {} of {}: validation MAE {}",
        report.best_epoch,
        report.epochs.len(),
        report.best_val_mae
    );
    Ok(())
}

fn checkpoint_path(run: &RunConfig, given: Option<&Path>) -> PathBuf {
    given.map_or_else(|| run.out_dir.join("model.ckpt"), Path::to_path_buf)
}

/// Loads a checkpoint and, when the config names a model explicitly, checks
/// that both agree.
fn load_model(cfg: &LoadedConfig, path: &Path) -> Result<Model> {
    let model = checkpoint::load(path)?;
    if cfg.model_explicit && *model.config() != cfg.run.model {
        return Err(Error::shape(
            "checkpoint",
            format!(
                "{} holds {:?} but the config asks for {:?}",
                path.display(),
                model.config(),
                cfg.run.model
            ),
        ));
    }
    Ok(model)
}

pub fn eval(cfg: &LoadedConfig, ckpt: Option<&Path>) -> Result<()> {
    let run = &cfg.run;
    let _lock = OutputLock::acquire(&run.out_dir)?;
    let model = load_model(cfg, &checkpoint_path(run, ckpt))?;
    let table = load_series(run)?;
    let parts = split_622(&table)?;
    let c = model.config();
    let ds = windows(run, &parts, run.eval.partition, c.t_in, c.t_out)?;
    if ds.is_empty() {
        return Err(Error::Data(format!("{} partition yields no windows", run.eval.partition.name())));
    }
    let (pred, target) = predict(&model, &ds)?;
    let report = horizon_report(&pred, &target, None, run.eval.mape_threshold)?;
    report.save(&run.out_dir, "metrics")?;
    write_manifest(run, "eval", &["metrics.csv", "metrics.json"])?;
    for r in &report.rows {
        let mape = r.mape.map_or("n/a".to_string(), |v| format!("{v:.4}%"));
        println!("{:<11} MAE {:.6}  RMSE {:.6}  MAPE {mape}", r.label, r.mae, r.rmse);
    }
    Ok(())
}

pub fn forecast(cfg: &LoadedConfig, ckpt: Option<&Path>, input: &Path) -> Result<()> {
    let run = &cfg.run;
    let _lock = OutputLock::acquire(&run.out_dir)?;
    let model = load_model(cfg, &checkpoint_path(run, ckpt))?;
    let (table, _) = ingest_csv(input)?;
    let (t_in, t_out) = (model.config().t_in, model.config().t_out);
    if table.len() < t_in {
        return Err(Error::shape(
            "forecast",
            format!("input has {} steps but the model needs {t_in}", table.len()),
        ));
    }
    let start = table.len() - t_in;
    let n = table.n_channels();
    let mut x = Vec::with_capacity(n * t_in);
    for c in 0..n {
        x.extend_from_slice(&table.column(c)[start..]);
    }
    let y = model.forward(&Tensor::new(vec![n, t_in], x)?)?;
    let last = *table.timestamps().last().expect("non-empty input");
    let steps: Vec<i64> = (1..=t_out as i64).map(|k| last + k * table.interval()).collect();
    let mut data = vec![0.0; t_out * n];
    for c in 0..n {
        for s in 0..t_out {
            data[s * n + c] = y.at2(c, s);
        }
    }
    let out = SeriesTable::new(steps, table.channels().to_vec(), Tensor::new(vec![t_out, n], data)?, table.interval())?;
    export_csv(&out, &run.out_dir.join("forecast.csv"))?;
    write_manifest(run, "forecast", &["forecast.csv"])?;
    println!("wrote {t_out}-step forecast for {n} channels to {}", run.out_dir.join("forecast.csv").display());
    Ok(())
}

pub fn analyze(cfg: &LoadedConfig, ckpt: Option<&Path>, which: Option<AnalysisKind>) -> Result<()> {
    let run = &cfg.run;
    let which = which.unwrap_or(run.analysis.which);
    // A checkpoint is needed for anything but the parameter count.
    let model = match (ckpt, which) {
        (Some(p), _) => Some(load_model(cfg, p)?),
        (None, AnalysisKind::Params) => None,
        (None, _) => Some(load_model(cfg, &checkpoint_path(run, None))?),
    };
    let config = model.as_ref().map_or(&run.model, Model::config);
    match which {
        AnalysisKind::Params => {
            let (count, method) = match count_params(config) {
                Ok(n) => (n, "formula"),
                Err(Error::Unsupported(_)) => (enumerate_params(config)?, "enumeration"),
                Err(e) => return Err(e),
            };
            println!("{count}");
            let _lock = OutputLock::acquire(&run.out_dir)?;
            let body = json!({ "model": config, "param_count": count, "method": method });
            fs::write(run.out_dir.join("params.json"), serde_json::to_string_pretty(&body)? + "\n")?;
            write_manifest(run, "analyze-params", &["params.json"])?;
        }
        AnalysisKind::Sensitivity => {
            let _lock = OutputLock::acquire(&run.out_dir)?;
            let s = sensitivity_matrix(model.as_ref().expect("loaded above"))?;
            s.save(&run.out_dir, "sensitivity")?;
            write_manifest(run, "analyze-sensitivity", &["sensitivity.csv", "sensitivity.json"])?;
            println!("wrote {}x{} sensitivity matrix", s.j.shape()[0], s.j.shape()[1]);
        }
        AnalysisKind::Shapes => {
            let _lock = OutputLock::acquire(&run.out_dir)?;
            let mut records = extract_shapes(model.as_ref().expect("loaded above"))?;
            if run.analysis.match_shapes {
                match_shapes(&mut records, &load_series(run)?)?;
            }
            export_shapes(&records, &run.out_dir.join("shapes.csv"))?;
            write_manifest(run, "analyze-shapes", &["shapes.csv"])?;
            println!("wrote {} shapes", records.len());
        }
    }
    Ok(())
}
