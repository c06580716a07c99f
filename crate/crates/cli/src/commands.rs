//! Subcommand implementations. Each returns an error carrying its exit status.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ritz_core::analysis::{
    count_bands, count_kinks, evaluate_grid, evaluate_on, interface_alignment, layer_width, microstructure_report,
    y_independence, FieldGrid, MicrostructureReport, BAND_THRESHOLD, LAYER_HI, LAYER_LO, MIN_RUN,
};
use ritz_core::energy::{quadrature_energy, EnergyModel, Resolution};
use ritz_core::network::{Checkpoint, Mlp};
use ritz_core::optimize::{train_with, InitialProfile, TrainOutcome};
use ritz_core::sampling::Domain;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::gradcheck::{gradcheck, GradcheckReport};
use crate::presets;

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const CHECKPOINT_FINAL: &str = "checkpoint_final.json";
pub const CHECKPOINT_BEST: &str = "checkpoint_best.json";
pub const FIELD_CSV: &str = "field.csv";
pub const CONFIG_ECHO: &str = "config.toml";
pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_JSON: &str = "summary.json";

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    ritz_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Command-line adjustments applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub gamma: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            config.train.seed = seed;
        }
        if let Some(n) = self.iterations {
            config.train.iterations = n;
        }
        if let Some(g) = self.gamma {
            config.model.set_gamma(g);
            if let Some(p) = &mut config.train.pretrain {
                if let InitialProfile::SineRamp { gamma, .. } = &mut p.target {
                    *gamma = g;
                }
            }
        }
        if let Some(out) = &self.out {
            config.outputs.directory = out.clone();
        }
    }
}

/// Angle of the laminate normal used by the alignment metric.
pub fn laminate_angle(model: &EnergyModel) -> Option<f64> {
    match *model {
        EnergyModel::Rotated { phi, .. } => Some(phi),
        _ if model.dim() == 2 => Some(0.0),
        _ => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub seed: u64,
    pub iterations: u64,
    pub final_quad_energy: f64,
    pub final_boundary_mismatch: f64,
    pub best_score: f64,
    pub wall_time: f64,
    pub report: MicrostructureReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

pub struct RunResult {
    pub summary: RunSummary,
    pub outcome: TrainOutcome,
    pub grid: FieldGrid,
}

/// Trains one experiment and writes its artifacts into
/// `config.outputs.directory`: the config echo, the JSON-lines log, final and
/// best checkpoints, the field export and the microstructure report.
pub fn run_experiment(name: &str, config: &ExperimentConfig) -> CliResult<RunResult> {
    config.check().map_err(|message| CliError::Config {
        path: PathBuf::from(name),
        message,
    })?;
    let dir = &config.outputs.directory;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    config.save(dir.join(CONFIG_ECHO))?;

    let log_path = dir.join(TRAIN_LOG);
    let file = File::create(&log_path).map_err(|e| io_err(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut write_err = None;
    let net = config.init_net()?;
    let outcome = train_with(&config.model, net, &config.train, &mut |record| {
        let line = serde_json::to_string(record).expect("record serializes");
        if let Err(e) = writeln!(log, "{line}") {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&log_path, e));
    }
    log.flush().map_err(|e| io_err(&log_path, e))?;

    outcome.final_checkpoint.save(dir.join(CHECKPOINT_FINAL))?;
    outcome.best_checkpoint.save(dir.join(CHECKPOINT_BEST))?;
    let g = config.grid();
    let grid = evaluate_grid(&outcome.net, &config.model, g.nx, g.ny)?;
    grid.save_csv(dir.join(FIELD_CSV))?;
    let report = microstructure_report(&grid, laminate_angle(&config.model), Some(outcome.final_quad_energy))?;
    write_json(&dir.join(REPORT_JSON), &report)?;

    let summary = RunSummary {
        name: name.to_string(),
        seed: config.train.seed,
        iterations: outcome.final_checkpoint.iteration,
        final_quad_energy: outcome.final_quad_energy,
        final_boundary_mismatch: outcome.final_boundary_mismatch,
        best_score: outcome.best_score,
        wall_time: outcome.records.last().map_or(0.0, |r| r.wall_time),
        report,
        aborted: outcome.aborted.as_ref().map(|e| e.to_string()),
    };
    Ok(RunResult { summary, outcome, grid })
}

pub fn cmd_train(config_path: &Path, overrides: &Overrides) -> CliResult<RunSummary> {
    let mut config = ExperimentConfig::load(config_path)?;
    overrides.apply(&mut config);
    let name = config_path
        .file_stem()
        .map_or_else(|| "run".to_string(), |s| s.to_string_lossy().into_owned());
    let run = run_experiment(&name, &config)?;
    let s = &run.summary;
    println!(
        "{}: {} iterations, quad energy {:.6e}, boundary mismatch {:.3e}",
        s.name, s.iterations, s.final_quad_energy, s.final_boundary_mismatch
    );
    println!("artifacts in {}", config.outputs.directory.display());
    if let Some(e) = &s.aborted {
        return Err(CliError::Numerical(e.clone()));
    }
    Ok(run.summary)
}

/// Domain of a checkpoint: its recorded model, else the unit interval or
/// the square of side `length`.
fn checkpoint_domain(ckpt: &Checkpoint, length: Option<f64>) -> Domain {
    match (&ckpt.model, ckpt.input_dim) {
        (Some(model), _) if length.is_none() => model.domain(),
        (_, 1) => Domain::interval(),
        (Some(model), _) => Domain::rectangle(length.unwrap_or(model.domain().length)),
        (None, _) => Domain::rectangle(length.unwrap_or(1.0)),
    }
}

pub fn cmd_eval(checkpoint: &Path, nx: usize, ny: usize, length: Option<f64>, out: &Path) -> CliResult<FieldGrid> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let net = ckpt.mlp()?;
    let grid = evaluate_on(&net, &checkpoint_domain(&ckpt, length), nx, ny)?;
    grid.save_csv(out)?;
    println!("wrote {}x{} field to {}", grid.nx, grid.ny, out.display());
    Ok(grid)
}

pub fn cmd_gradcheck(config_path: &Path, probes: usize, seed: Option<u64>, corrupt: bool) -> CliResult<GradcheckReport> {
    let config = ExperimentConfig::load(config_path)?;
    if probes == 0 {
        return Err(CliError::usage("--probes must be >= 1"));
    }
    let seed = seed.unwrap_or(config.train.seed);
    let mut net_config = config.clone();
    net_config.train.seed = seed;
    let net = net_config.init_net()?;
    let report = gradcheck(&config, &net, probes, seed, corrupt)?;
    println!(
        "{} probes over {} parameters: max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e})",
        report.probes,
        report.param_count,
        report.max_rel_error,
        report.worst.param_name,
        report.worst.analytic,
        report.worst.numeric
    );
    if report.passed {
        println!("gradcheck passed");
        Ok(report)
    } else {
        Err(CliError::CheckFailed(format!(
            "max relative error {:.3e} at {} exceeds {:e}",
            report.max_rel_error,
            report.worst.param_name,
            crate::gradcheck::TOLERANCE
        )))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MetricSelection {
    pub bands: bool,
    pub kinks: bool,
    pub layer_width: bool,
    pub y_independence: bool,
    pub alignment: Option<f64>,
}

impl MetricSelection {
    fn is_empty(&self) -> bool {
        !(self.bands || self.kinks || self.layer_width || self.y_independence || self.alignment.is_some())
    }
}

pub enum AnalyzeInput<'a> {
    Field(&'a Path),
    Checkpoint { path: &'a Path, nx: usize, ny: usize },
}

/// Runs the selected metrics, or every applicable one when none is
/// selected, and returns the report as a JSON object.
pub fn cmd_analyze(input: AnalyzeInput<'_>, metrics: MetricSelection, y_line: f64, out: Option<&Path>) -> CliResult<Value> {
    let (grid, model, net): (FieldGrid, Option<EnergyModel>, Option<Mlp>) = match input {
        AnalyzeInput::Field(path) => (FieldGrid::load_csv(path)?, None, None),
        AnalyzeInput::Checkpoint { path, nx, ny } => {
            let ckpt = Checkpoint::load(path)?;
            let net = ckpt.mlp()?;
            let grid = evaluate_on(&net, &checkpoint_domain(&ckpt, None), nx, ny)?;
            (grid, ckpt.model, Some(net))
        }
    };
    let two_d = grid.domain.dim == 2;
    if metrics.kinks && two_d {
        return Err(CliError::usage("kink counting applies to 1D fields only; use --bands on 2D fields"));
    }
    if metrics.y_independence && !two_d {
        return Err(CliError::usage("y-independence applies to 2D fields only"));
    }
    if metrics.alignment.is_some() && !two_d {
        return Err(CliError::usage("interface alignment applies to 2D fields only"));
    }
    let quad = match (&model, &net) {
        (Some(m), Some(n)) => Some(quadrature_energy(m, n, Resolution::default_for(&m.domain()))?),
        _ => None,
    };
    let report = if metrics.is_empty() {
        let phi = model.as_ref().and_then(laminate_angle);
        serde_json::to_value(microstructure_report(&grid, phi, quad)?).expect("report serializes")
    } else {
        let mut map = Map::new();
        if metrics.bands {
            let b = count_bands(&grid, y_line, BAND_THRESHOLD, MIN_RUN);
            map.insert("band_count".into(), json!(b.count));
            map.insert("band_intervals".into(), json!(b.intervals));
        }
        if metrics.kinks {
            let k = count_kinks(&grid, BAND_THRESHOLD)?;
            map.insert("kink_count".into(), json!(k.up + k.down));
            map.insert("kinks".into(), json!(k));
        }
        if metrics.layer_width {
            map.insert("layer_widths".into(), json!(layer_width(&grid, LAYER_LO, LAYER_HI)));
        }
        if metrics.y_independence {
            map.insert("y_independence".into(), json!(y_independence(&grid)?));
        }
        if let Some(phi) = metrics.alignment {
            map.insert("interface_alignment".into(), json!(interface_alignment(&grid, phi)?));
        }
        if let Some(q) = quad {
            map.insert("quad_energy".into(), json!(q));
        }
        Value::Object(map)
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproduceSummary {
    pub preset: String,
    pub full: bool,
    pub description: String,
    pub runs: Vec<RunSummary>,
}

/// Runs every configuration of a preset, `threads` runs at a time, and
/// writes `summary.json` under `out`.
pub fn cmd_reproduce(name: &str, full: bool, overrides: &Overrides, threads: usize, out: &Path) -> CliResult<ReproduceSummary> {
    let preset = presets::find(name).ok_or_else(|| {
        CliError::usage(format!(
            "unknown preset '{name}'; available presets: {}",
            presets::names().join(", ")
        ))
    })?;
    let mut runs = preset.configs(full, overrides.gamma);
    for (run_name, config) in &mut runs {
        let per_run = Overrides {
            out: Some(out.join(&*run_name)),
            gamma: None,
            ..overrides.clone()
        };
        per_run.apply(config);
    }
    let results = run_all(&runs, threads.max(1));
    let mut summaries = Vec::with_capacity(results.len());
    for r in results {
        summaries.push(r?);
    }
    let summary = ReproduceSummary {
        preset: preset.name.to_string(),
        full,
        description: preset.description.to_string(),
        runs: summaries,
    };
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    println!("{:<36} {:>14} {:>12} {:>6} {:>6}", "run", "quad energy", "mismatch", "bands", "kinks");
    for s in &summary.runs {
        println!(
            "{:<36} {:>14.6e} {:>12.3e} {:>6} {:>6}",
            s.name,
            s.final_quad_energy,
            s.final_boundary_mismatch,
            s.report.band_count,
            s.report.kink_count.map_or("-".to_string(), |k| k.to_string())
        );
    }
    if let Some(s) = summary.runs.iter().find(|s| s.aborted.is_some()) {
        return Err(CliError::Numerical(format!("{}: {}", s.name, s.aborted.as_deref().unwrap_or(""))));
    }
    Ok(summary)
}

/// Runs are independent and individually deterministic, so the worker count
/// does not affect any result.
fn run_all(runs: &[(String, ExperimentConfig)], threads: usize) -> Vec<CliResult<RunSummary>> {
    let one = |(name, config): &(String, ExperimentConfig)| {
        log::info!("starting {name}");
        run_experiment(name, config).map(|r| r.summary)
    };
    if threads == 1 {
        return runs.iter().map(one).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<CliResult<RunSummary>>>> = runs.iter().map(|_| Default::default()).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.min(runs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= runs.len() {
                    break;
                }
                *slots[i].lock().expect("slot lock") = Some(one(&runs[i]));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every run completes"))
        .collect()
}
