use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use wiredepth::benchmark::{run_benchmark, BenchmarkConfig};
use wiredepth::datagen::{build_training_set, displacement_grid, read_dataset, write_dataset};
use wiredepth::mlp::{self, MlpError, TrainConfig, TrainReport};
use wiredepth::search::{self, GaConfig, HillClimbSchedule, ReconstructionReport, Scorer, SearchError};
use wiredepth::shapes::ShapeKind;
use wiredepth::wireframe::parse_obj;
use wiredepth::{aligned_depth_error, load_model, parse_wireframe, save_model, Network, Wireframe};

use crate::{BenchmarkArgs, EvaluateArgs, ExportObjArgs, GenDataArgs, ReconstructArgs, TrainArgs};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::InvalidConfig(_) => CliError::Usage(e.into()),
            _ => CliError::Input(e.into()),
        }
    }
}

impl From<MlpError> for CliError {
    fn from(e: MlpError) -> Self {
        match e {
            MlpError::InvalidConfig(_) => CliError::Usage(e.into()),
            MlpError::NonFiniteLoss { .. } => CliError::Runtime(e.into()),
            _ => CliError::Input(e.into()),
        }
    }
}

pub struct Output {
    pub quiet: bool,
    pub no_timing: bool,
}

impl Output {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

type CmdResult = Result<(), CliError>;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(CliError::Input)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(CliError::Runtime)?;
    }
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(CliError::Runtime)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// JSON wireframe, or OBJ when the extension says so.
fn load_wireframe(path: &Path) -> Result<Wireframe, CliError> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
        parse_obj(&text)
    } else {
        parse_wireframe(&text)
    };
    parsed
        .with_context(|| format!("invalid wireframe {}", path.display()))
        .map_err(CliError::Input)
}

fn load_network(path: &Path) -> Result<Network, CliError> {
    let text = read_text(path)?;
    load_model(&text)
        .with_context(|| format!("invalid model {}", path.display()))
        .map_err(CliError::Input)
}

pub fn gen_data(a: &GenDataArgs, out: &Output) -> CmdResult {
    let grid = displacement_grid(a.grid).map_err(|e| CliError::Usage(e.into()))?;
    let data = build_training_set(a.prisms, &grid, a.seed).map_err(|e| CliError::Usage(e.into()))?;
    write_text(&a.out, &write_dataset(&data))?;
    out.say(format!("rows {} discarded {}", data.set.len(), data.discarded));
    Ok(())
}

#[derive(Serialize)]
struct TrainFile<'a> {
    data: String,
    report: &'a TrainReport,
}

pub fn train(a: &TrainArgs, out: &Output) -> CmdResult {
    let text = read_text(&a.data)?;
    let set = read_dataset(&text)
        .with_context(|| format!("invalid dataset {}", a.data.display()))
        .map_err(CliError::Input)?;
    let cfg = TrainConfig {
        hidden: a.hidden,
        max_epochs: a.max_epochs,
        validation_fraction: a.validation_fraction,
        patience: a.patience,
        seed: a.seed,
    };
    let (net, report) = mlp::train(&set, &cfg)?;
    write_text(&a.out, &save_model(&net))?;
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    let file = TrainFile {
        data: a.data.display().to_string(),
        report: &report,
    };
    write_text(&report_path, &to_json(&file))?;
    out.say(format!(
        "train_mse {:.6e} validation_mse {:.6e} best_epoch {} epochs {} stop {:?}",
        report.train_mse, report.validation_mse, report.best_epoch, report.epochs_run, report.stop_reason
    ));
    Ok(())
}

#[derive(Serialize)]
struct ReconstructFile<'a> {
    sketch: String,
    model: String,
    config: &'a GaConfig,
    result: &'a ReconstructionReport,
}

pub fn reconstruct(a: &ReconstructArgs, out: &Output) -> CmdResult {
    let sketch = load_wireframe(&a.sketch)?;
    let net = load_network(&a.model)?;
    let cfg = GaConfig {
        population: a.pop,
        generations: a.gens,
        mutation_rate: a.mutation_rate,
        init_range: a.init_range,
        hill_climb: HillClimbSchedule {
            initial_step: a.hc_step,
            min_step: a.hc_min_step,
            max_evaluations: a.hc_max_evals,
        },
        seed: a.seed,
        early_exit: None,
    };
    let (lifted, mut report) = search::reconstruct(&sketch, &net, &cfg)?;
    if out.no_timing {
        report.wall_time_ms = 0;
    }
    write_text(&a.out, &lifted.to_json())?;
    if let Some(obj) = &a.obj {
        let text = lifted.to_obj().map_err(|e| CliError::Runtime(e.into()))?;
        write_text(obj, &text)?;
    }
    let file = ReconstructFile {
        sketch: a.sketch.display().to_string(),
        model: a.model.display().to_string(),
        config: &cfg,
        result: &report,
    };
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    write_text(&report_path, &to_json(&file))?;
    let mut line = format!(
        "fitness {:.6} generations {} plateau {} corners {}",
        report.final_fitness, report.generations_run, report.plateau_generation, report.corners
    );
    if let (Some(t), Some(rms)) = (report.target_fitness, report.target_rms) {
        line.push_str(&format!(" target_fitness {t:.6} target_rms {rms:.6}"));
    }
    out.say(line);
    Ok(())
}

#[derive(Debug, Serialize)]
struct Evaluation {
    candidate: String,
    target: String,
    rms: f64,
    negated: bool,
    threshold: f64,
    success: bool,
    candidate_fitness: Option<f64>,
    target_fitness: Option<f64>,
}

pub fn evaluate(a: &EvaluateArgs, out: &Output) -> CmdResult {
    let candidate = load_wireframe(&a.candidate)?;
    let target = load_wireframe(&a.target)?;
    if candidate.vertex_count() != target.vertex_count() {
        return Err(CliError::Input(anyhow!(
            "candidate has {} vertices, target has {}",
            candidate.vertex_count(),
            target.vertex_count()
        )));
    }
    let (normalized, record) = target
        .normalize()
        .map_err(|e| CliError::Input(e.into()))?;
    let need = |w: &Wireframe, p: &Path| {
        w.depths()
            .map(|d| record.apply_to_depths(d))
            .ok_or_else(|| CliError::Input(anyhow!("{} carries no depths", p.display())))
    };
    let cand_depths = need(&candidate, &a.candidate)?;
    let target_depths = need(&target, &a.target)?;
    let err = aligned_depth_error(&cand_depths, &target_depths).map_err(|e| CliError::Input(e.into()))?;

    let (candidate_fitness, target_fitness) = match &a.model {
        Some(path) => {
            let net = load_network(path)?;
            let plane = normalized.project();
            let scorer = Scorer::new(&plane, &net)?;
            (Some(scorer.fitness(&cand_depths)), Some(scorer.fitness(&target_depths)))
        }
        None => (None, None),
    };
    let eval = Evaluation {
        candidate: a.candidate.display().to_string(),
        target: a.target.display().to_string(),
        rms: err.rms,
        negated: err.negated,
        threshold: a.threshold,
        success: err.rms <= a.threshold,
        candidate_fitness,
        target_fitness,
    };
    if let Some(path) = &a.out {
        write_text(path, &to_json(&eval))?;
    }
    let mut line = format!("rms {:.6} negated {} success {}", eval.rms, eval.negated, eval.success);
    if let (Some(c), Some(t)) = (candidate_fitness, target_fitness) {
        line.push_str(&format!(" candidate_fitness {c:.6} target_fitness {t:.6}"));
    }
    out.say(line);
    Ok(())
}

fn parse_shape(name: &str) -> Result<ShapeKind, CliError> {
    ShapeKind::from_name(name.trim())
        .ok_or_else(|| CliError::Usage(anyhow!("unknown shape {name:?}; expected prism, box, l-block or house")))
}

pub fn benchmark(a: &BenchmarkArgs, out: &Output) -> CmdResult {
    let net = load_network(&a.model)?;
    let shapes = a.shapes.iter().map(|s| parse_shape(s)).collect::<Result<Vec<_>, _>>()?;
    let cfg = BenchmarkConfig {
        shapes,
        repeats: a.repeats,
        seed: a.seed,
        ga: GaConfig {
            population: a.pop,
            generations: a.gens,
            ..GaConfig::default()
        },
        success_threshold: a.threshold,
        sweep_shape: parse_shape(&a.sweep_shape)?,
        sweep_populations: a.sweep_pops.clone(),
        sweep_generations: a.sweep_gens,
    };
    if cfg.repeats == 0 {
        return Err(CliError::Usage(anyhow!("--repeats must be at least 1")));
    }
    let mut report = run_benchmark(&net, &cfg)?;
    if out.no_timing {
        report.rows.iter_mut().for_each(|r| r.wall_time_ms = 0);
        report.runs.iter_mut().for_each(|r| r.wall_time_ms = 0);
        report.sweep.series.iter_mut().for_each(|s| s.wall_time_ms = 0);
    }
    let table = report.table();
    write_text(&a.out.join("benchmark.json"), &to_json(&report))?;
    write_text(&a.out.join("table.txt"), &table)?;
    write_text(&a.out.join("population_series.csv"), &report.population_series_csv())?;
    write_text(&a.out.join("baseline_series.csv"), &report.baseline_series_csv())?;
    out.say(table.trim_end());
    out.say(format!(
        "sweep {}: target {:.4} baseline {:.4}",
        report.sweep.shape.name(),
        report.sweep.target_fitness,
        report.sweep.baseline_final_fitness
    ));
    for s in &report.sweep.series {
        out.say(format!(
            "  pop {:>5}: median evolved {:.4} median final {:.4}",
            s.population, s.median_evolved_fitness, s.median_final_fitness
        ));
    }
    Ok(())
}

pub fn export_obj(a: &ExportObjArgs, out: &Output) -> CmdResult {
    let w = load_wireframe(&a.input)?;
    let text = w
        .to_obj()
        .with_context(|| format!("{} cannot be exported", a.input.display()))
        .map_err(CliError::Input)?;
    write_text(&a.out, &text)?;
    out.say(format!("vertices {} edges {}", w.vertex_count(), w.edges().len()));
    Ok(())
}
