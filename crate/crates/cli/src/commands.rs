use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Duration;

use ocae_core::pipeline::{fit_detector, scale_all, train_from_csv, PipelinePlan, PipelineReport};
use ocae_core::preprocess::{fit_scaler, load_frames, write_csv, SensorFrame};
use ocae_core::simgen::{
    evaluate, generate, inject_anomalies, inject_corruption, read_labels, runs_detected, write_labels,
    GeneratorConfig, Metrics,
};
use ocae_core::store::{load_bundle, BundleFiles, MODEL_FILE, SCALER_FILE, THRESHOLD_FILE};
use ocae_core::tuner::{tune, TuneConfig};
use ocae_core::{DetectorBundle, TrainConfig};
use ocae_monitor::MonitorConfig;
use serde_json::json;

use crate::args::{
    Command, EvalArgs, ExportArgs, GenerateArgs, ModelArgs, MonitorArgs, PipelineArgs, TrainArgs, TuneArgs,
};
use crate::error::{CliError, Result};

/// Row count below which training works but is not recommended.
const RECOMMENDED_ROWS: usize = 2000;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate_cmd(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Tune(a) => tune_cmd(&a),
        Command::Eval(a) => eval_cmd(&a).map(|_| ()),
        Command::Export(a) => export_cmd(&a),
        Command::Monitor(a) => monitor_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(&a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn generator_config(path: Option<&Path>, seed: u64, rate_hz: Option<f64>) -> Result<GeneratorConfig> {
    let mut cfg = match path {
        Some(p) => GeneratorConfig::load(p)?,
        None => GeneratorConfig::default(),
    };
    cfg.seed = seed;
    if let Some(r) = rate_hz {
        cfg.rate_hz = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate_cmd(a: &GenerateArgs) -> Result<()> {
    let cfg = generator_config(a.generator_config.as_deref(), a.seed, a.rate_hz)?;
    let frames = generate(&cfg, a.rows as usize)?;
    let stream = inject_anomalies(&frames, a.anomaly_rate, a.magnitude, a.seed.wrapping_add(1))?;
    let out = inject_corruption(&stream, a.corruption_rate, a.seed.wrapping_add(2), a.protect_labels)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_csv(BufWriter::new(fs::File::create(&a.out)?), out.rows.iter().cloned())?;
    if let Some(path) = &a.labels_out {
        let seqs: Vec<u64> = stream.frames.iter().map(|f| f.seq).collect();
        write_labels(path, &seqs, &out.labels)?;
    }
    println!(
        "wrote {} rows to {} ({} anomalous, {} corrupted)",
        a.rows,
        a.out.display(),
        stream.anomaly_count(),
        out.corrupted_count()
    );
    Ok(())
}

fn plan(m: &ModelArgs, seed: u64) -> PipelinePlan {
    PipelinePlan {
        layout: m.layout.into(),
        hidden_dim: m.hidden_dim,
        train: TrainConfig {
            batch_size: m.batch_size,
            learning_rate: m.learning_rate,
            epochs: m.epochs,
            patience: m.patience,
            val_fraction: m.val_fraction,
            seed,
            train_attention: !m.no_attention,
        },
        tune: m.tune.then(|| TuneConfig {
            n_trials: m.trials,
            seed,
            ..TuneConfig::default()
        }),
        ..PipelinePlan::default()
    }
}

fn print_files(dir: &Path, files: &BundleFiles) {
    println!("bundle: {}", dir.display());
    println!("  {MODEL_FILE}: {} bytes", files.model_bytes);
    println!("  {SCALER_FILE}: {} bytes", files.scaler_bytes);
    println!("  {THRESHOLD_FILE}: {} bytes", files.threshold_bytes);
}

fn print_training(report: &PipelineReport) {
    let p = &report.params;
    println!(
        "model {}: hidden_dim {} ({} parameters), batch {}, lr {}, {} epochs max",
        report.model_id, p.hidden_dim, report.param_count, p.batch_size, p.learning_rate, p.epochs
    );
    if let Some(last) = report.history.last() {
        let best = &report.history[report.best_epoch - 1];
        println!(
            "trained {} epochs on {} rows: final train loss {:.6e}, best val loss {:.6e} (epoch {})",
            report.history.len(),
            report.rows,
            last.train_loss,
            best.val_loss,
            best.epoch
        );
    }
    let t = &report.threshold;
    println!("threshold {} (mean {:.6e} + 2 × std {:.6e} over {} rows)", t.value, t.mean, t.std, t.n);
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let plan = plan(&a.model, a.seed);
    let (fitted, files) = train_from_csv(&a.data, &a.model_dir, &plan)?;
    if fitted.report.rows < RECOMMENDED_ROWS {
        log::warn!(
            "trained on {} rows; at least {RECOMMENDED_ROWS} are recommended",
            fitted.report.rows
        );
    }
    if let Some(clean) = &fitted.report.clean {
        println!(
            "rows: {} read, {} kept, {} sentinel, {} non-numeric",
            clean.rows_in, clean.rows_out, clean.rows_dropped_sentinel, clean.rows_dropped_nonnumeric
        );
    }
    print_training(&fitted.report);
    print_files(&a.model_dir, &files);
    if let Some(path) = &a.report {
        write_text(path, &serde_json::to_string_pretty(&fitted.report).expect("report serializes"))?;
    }
    Ok(())
}

fn tune_cmd(a: &TuneArgs) -> Result<()> {
    let (frames, _) = load_frames(&a.data)?;
    let scaler = fit_scaler(&frames)?;
    let cfg = TuneConfig {
        n_trials: a.trials,
        seed: a.seed,
        patience: a.patience,
        val_fraction: a.val_fraction,
        layout: a.layout.into(),
        ..TuneConfig::default()
    };
    let outcome = tune(&scale_all(&scaler, &frames), &cfg)?;
    log::info!("best trial {}: {:?}", outcome.best_trial, outcome.best);
    let text = outcome.report_json();
    println!("{text}");
    if let Some(path) = &a.out {
        write_text(path, &text)?;
    }
    Ok(())
}

/// Metrics plus the extra counts printed by `eval`.
pub(crate) fn score_labelled(
    bundle: &DetectorBundle,
    frames: &[SensorFrame],
    labels: &[(u64, bool)],
) -> Result<(Metrics, serde_json::Value)> {
    if labels.is_empty() {
        return Err(CliError::Data("labels file holds no labels".into()));
    }
    let mut by_seq = HashMap::with_capacity(labels.len());
    for &(seq, label) in labels {
        if by_seq.insert(seq, label).is_some() {
            return Err(CliError::Data(format!("duplicate label for seq {seq}")));
        }
    }
    let mut truth = Vec::with_capacity(frames.len());
    let mut preds = Vec::with_capacity(frames.len());
    for f in frames {
        let Some(&label) = by_seq.get(&f.seq) else {
            return Err(CliError::Data(format!("no label for seq {}", f.seq)));
        };
        truth.push(label);
        preds.push(bundle.verdict(f)?.is_anomaly);
    }
    let metrics = evaluate(&truth, &preds)?;
    let (runs_hit, runs) = runs_detected(&truth, &preds);
    let mut value = serde_json::to_value(metrics).expect("metrics serialize");
    let extra = json!({
        "false_positive_rate": metrics.false_positive_rate(),
        "rows_scored": frames.len(),
        "labels_unused": labels.len() - frames.len(),
        "anomaly_runs": runs,
        "anomaly_runs_detected": runs_hit,
        "threshold": bundle.threshold.value,
        "model_id": bundle.model_id,
    });
    value
        .as_object_mut()
        .expect("metrics are an object")
        .extend(extra.as_object().expect("object").clone());
    Ok((metrics, value))
}

fn eval_cmd(a: &EvalArgs) -> Result<Metrics> {
    let bundle = load_bundle(&a.model_dir)?;
    let (frames, clean) = load_frames(&a.data)?;
    let labels = read_labels(&a.labels)?;
    let (m, value) = score_labelled(&bundle, &frames, &labels)?;
    println!("rows        {} scored, {} dropped", frames.len(), clean.rows_in - clean.rows_out);
    println!("threshold   {}", bundle.threshold.value);
    println!("            predicted+  predicted-");
    println!("actual+     {:>10}  {:>10}", m.tp, m.fn_);
    println!("actual-     {:>10}  {:>10}", m.fp, m.tn);
    println!("precision   {:.4}", m.precision);
    println!("recall      {:.4}", m.recall);
    println!("f1          {:.4}", m.f1);
    println!("fpr         {:.4}", m.false_positive_rate());
    let line = value.to_string();
    println!("{line}");
    if let Some(path) = &a.json_out {
        write_text(path, &serde_json::to_string_pretty(&value).expect("serializes"))?;
    }
    Ok(m)
}

fn export_cmd(a: &ExportArgs) -> Result<()> {
    let bundle = load_bundle(&a.model_dir)?;
    let out = a.out.as_deref().unwrap_or(&a.model_dir);
    let files = bundle.save(out)?;
    println!("model_id: {}", bundle.model_id);
    println!("parameters: {}", bundle.model.param_count());
    print_files(out, &files);
    Ok(())
}

fn monitor_cmd(a: MonitorArgs) -> Result<()> {
    if !(a.interval > 0.0 && a.interval.is_finite()) {
        return Err(CliError::Data(format!("--interval must be positive, got {}", a.interval)));
    }
    let mut cfg = MonitorConfig::new(&a.model_dir, &a.csv);
    cfg.interval = Duration::from_secs_f64(a.interval);
    cfg.alarm_n = a.alarm_n;
    cfg.bind = a.bind;
    if let Some(root) = a.models_root {
        cfg.models_root = root;
    }
    cfg.snapshot_path = a.snapshot;
    cfg.max_cycles = a.max_cycles;

    let rt = tokio::runtime::Runtime::new()?;
    let snap = rt.block_on(ocae_monitor::serve(cfg, async {
        if tokio::signal::ctrl_c().await.is_err() {
            std::future::pending::<()>().await;
        }
        log::info!("interrupted; shutting down");
    }))?;
    println!("{}", serde_json::to_string(&snap).expect("snapshot serializes"));
    Ok(())
}

fn pipeline_cmd(a: &PipelineArgs) -> Result<()> {
    let dir = &a.out_dir;
    fs::create_dir_all(dir)?;
    let train_csv = dir.join("train.csv");
    let test_csv = dir.join("test.csv");
    let labels_csv = dir.join("test_labels.csv");
    let model_dir = dir.join("model");

    println!("== generate");
    let cfg = generator_config(a.generator_config.as_deref(), a.seed, None)?;
    let train_frames = generate(&cfg, a.rows as usize)?;
    write_csv(
        BufWriter::new(fs::File::create(&train_csv)?),
        train_frames.iter().map(|f| f.to_cells()),
    )?;
    let test = generate(&cfg.clone().with_seed(a.test_seed), a.test_rows as usize)?;
    let test = inject_anomalies(&test, a.anomaly_rate, a.magnitude, a.inject_seed)?;
    write_csv(
        BufWriter::new(fs::File::create(&test_csv)?),
        test.frames.iter().map(|f| f.to_cells()),
    )?;
    let seqs: Vec<u64> = test.frames.iter().map(|f| f.seq).collect();
    write_labels(&labels_csv, &seqs, &test.labels)?;
    println!(
        "{} training rows, {} test rows ({} anomalous)",
        train_frames.len(),
        test.frames.len(),
        test.anomaly_count()
    );

    println!("== train");
    let fitted = fit_detector(&train_frames, &plan(&a.model, a.seed))?;
    if let Some(trials) = &fitted.report.tuning {
        println!("searched {} trials", trials.len());
    }
    print_training(&fitted.report);
    write_text(
        &dir.join("train_report.json"),
        &serde_json::to_string_pretty(&fitted.report).expect("report serializes"),
    )?;

    println!("== export");
    let files = fitted.bundle.save(&model_dir)?;
    print_files(&model_dir, &files);

    println!("== eval");
    eval_cmd(&EvalArgs {
        model_dir,
        data: test_csv,
        labels: labels_csv,
        json_out: Some(dir.join("metrics.json")),
    })?;
    Ok(())
}
