//! `raman-pcr`: validate inputs, generate synthetic sets, cross-validate,
//! select a pre-treatment, train and predict.
//!
//! Exit status: 0 on success, 2 on any input or validation error, 3 when
//! `select` found no significant pre-treatment and fell back.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raman_pcr::selector::inputs_digest;
use raman_pcr::significance::save_boxplot_csv;
use raman_pcr::spectra::{load_concentrations_for, save_labeled_matrix};
use raman_pcr::synth::random_concentrations;
use raman_pcr::{
    default_candidates, generate, load_spectra, loo_press_matrix, save_concentrations, save_spectra,
    select_method_with, select_optimal_pc_scaled, tears_phantom, train_final, Candidate, Pipeline, PcrModel,
    PressScale, SelectOptions, SelectionReport, SpectraFormat, SpectraSet, Species,
};

use config::{RunConfig, SynthConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_SIGNIFICANT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "raman-pcr", version, about = "PCR calibration with significance-gated pre-treatment selection")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = all cores). Never changes any output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and check a spectra file and, optionally, its concentrations.
    Validate(Inputs),
    /// Write a synthetic spectra/concentration pair.
    Synth(SynthArgs),
    /// Leave-one-out PRESS matrix, box-plot table and PC verdict for one pipeline.
    Crossval(CrossvalArgs),
    /// Evaluate candidate pipelines and write the selection report.
    Select(SelectArgs),
    /// Fit the final model.
    Train(TrainArgs),
    /// Predict concentrations with a saved model.
    Predict(PredictArgs),
}

#[derive(Args, Debug, Default)]
struct Inputs {
    #[arg(long)]
    spectra: Option<PathBuf>,
    #[arg(long)]
    concentrations: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct Significance {
    #[arg(long)]
    alpha: Option<f64>,
    /// Run the ANOVA on log10(PRESS).
    #[arg(long)]
    log_press: bool,
}

#[derive(Args, Debug)]
struct CrossvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Pipeline, e.g. `baseline_als|rnv(90)`.
    #[arg(long)]
    pipeline: Option<String>,
    #[command(flatten)]
    sig: Significance,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Candidate `pipeline` or `label=pipeline`; repeatable. Defaults to the stock grid.
    #[arg(long = "candidate")]
    candidates: Vec<String>,
    #[command(flatten)]
    sig: Significance,
    /// Report path (default `<out-dir>/selection_report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    pc_count: Option<usize>,
    /// Take pipeline and PC count from a selection report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Model path (default `<out-dir>/model.json`).
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    spectra: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Predictions path (default `<out-dir>/predictions.csv`).
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Outcome {
    Done,
    NotSignificant,
}

type CmdResult = Result<Outcome, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotSignificant) => ExitCode::from(EXIT_NOT_SIGNIFICANT),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.out_dir.is_some() {
        cfg.out_dir = cli.out_dir;
    }
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(err)?;
    }
    match cli.command {
        Command::Validate(a) => {
            merge_inputs(&mut cfg, a);
            cmd_validate(&cfg)
        }
        Command::Synth(a) => {
            let s = cfg.synth.get_or_insert_with(SynthConfig::default);
            s.n = a.n.or(s.n);
            s.seed = a.seed.or(s.seed);
            cmd_synth(&cfg)
        }
        Command::Crossval(a) => {
            merge_inputs(&mut cfg, a.inputs);
            merge_sig(&mut cfg, a.sig);
            cfg.pipeline = a.pipeline.or(cfg.pipeline);
            cmd_crossval(&cfg)
        }
        Command::Select(a) => {
            merge_inputs(&mut cfg, a.inputs);
            merge_sig(&mut cfg, a.sig);
            if !a.candidates.is_empty() {
                cfg.candidates = Some(a.candidates);
            }
            cfg.report = a.report.or(cfg.report);
            cmd_select(&cfg)
        }
        Command::Train(a) => {
            merge_inputs(&mut cfg, a.inputs);
            cfg.pipeline = a.pipeline.or(cfg.pipeline);
            cfg.pc_count = a.pc_count.or(cfg.pc_count);
            cfg.report = a.report.or(cfg.report);
            cfg.model = a.model.or(cfg.model);
            cmd_train(&cfg)
        }
        Command::Predict(a) => {
            cfg.spectra = a.spectra.or(cfg.spectra);
            cfg.model = a.model.or(cfg.model);
            cmd_predict(&cfg, a.output)
        }
    }
}

fn merge_inputs(cfg: &mut RunConfig, a: Inputs) {
    cfg.spectra = a.spectra.or(cfg.spectra.take());
    cfg.concentrations = a.concentrations.or(cfg.concentrations.take());
}

fn merge_sig(cfg: &mut RunConfig, s: Significance) {
    cfg.alpha = s.alpha.or(cfg.alpha);
    if s.log_press {
        cfg.log_press = Some(true);
    }
}

fn scale(cfg: &RunConfig) -> PressScale {
    if cfg.log_press.unwrap_or(false) {
        PressScale::Log10
    } else {
        PressScale::Raw
    }
}

fn load_pair(cfg: &RunConfig) -> Result<(SpectraSet, raman_pcr::ConcentrationSet), String> {
    let set = load_spectra(RunConfig::require(&cfg.spectra, "spectra")?, SpectraFormat::WideCsv).map_err(err)?;
    let conc = load_concentrations_for(RunConfig::require(&cfg.concentrations, "concentrations")?, &set).map_err(err)?;
    Ok((set, conc))
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf, String> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| format!("IoFailure path={}: {e}", dir.display()))?;
    Ok(dir.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("IoFailure path={}: {e}", path.display()))
}

fn cmd_validate(cfg: &RunConfig) -> CmdResult {
    let set = load_spectra(RunConfig::require(&cfg.spectra, "spectra")?, SpectraFormat::WideCsv).map_err(err)?;
    match &cfg.concentrations {
        Some(path) => {
            let conc = load_concentrations_for(path, &set).map_err(err)?;
            println!("i={} j={} q={}", set.n_spectra(), set.n_channels(), conc.n_species());
        }
        None => println!("i={} j={}", set.n_spectra(), set.n_channels()),
    }
    Ok(Outcome::Done)
}

fn cmd_synth(cfg: &RunConfig) -> CmdResult {
    let s = cfg.synth.clone().unwrap_or_default();
    let n = s.n.unwrap_or(40);
    let seed = s.seed.unwrap_or(1);
    let (set, conc) = match s.recipe {
        None => tears_phantom(n, seed).map_err(err)?,
        Some(mut recipe) => {
            if s.seed.is_some() {
                recipe.seed = seed;
            }
            let ranges = s
                .ranges
                .ok_or("MissingArgument: synth.ranges is required with a custom recipe")?;
            let species: Vec<Species> = recipe.species.iter().map(|sp| Species::new(&sp.name, &sp.unit)).collect();
            let prefix = s.prefix.as_deref().unwrap_or("s");
            let conc = random_concentrations(&species, &ranges, n, recipe.seed, prefix).map_err(err)?;
            (generate(&recipe, &conc).map_err(err)?, conc)
        }
    };
    let spectra_path = out_path(cfg, "spectra.csv")?;
    let conc_path = out_path(cfg, "concentrations.csv")?;
    save_spectra(&spectra_path, &set).map_err(err)?;
    save_concentrations(&conc_path, &conc).map_err(err)?;
    println!("wrote {} and {}", spectra_path.display(), conc_path.display());
    Ok(Outcome::Done)
}

fn cmd_crossval(cfg: &RunConfig) -> CmdResult {
    let (set, conc) = load_pair(cfg)?;
    let alpha = cfg.alpha()?;
    let pipeline: Pipeline = cfg.pipeline.as_deref().unwrap_or("identity").parse().map_err(err)?;
    let s = loo_press_matrix(&set, &conc, &pipeline).map_err(err)?;
    let verdict = select_optimal_pc_scaled(&s, alpha, scale(cfg)).map_err(err)?;
    s.save(out_path(cfg, "press_matrix.csv")?).map_err(err)?;
    save_boxplot_csv(out_path(cfg, "boxplot.csv")?, &verdict.boxplot).map_err(err)?;
    let mut json = serde_json::to_string_pretty(&verdict).map_err(err)?;
    json.push('\n');
    write_text(&out_path(cfg, "verdict.json")?, &json)?;
    for note in &s.notes {
        eprintln!("note: {note:?}");
    }
    println!(
        "pipeline={} rows={} pcs={} significant={} optimal_pc={}",
        pipeline.name(),
        s.n_rows(),
        s.n_pcs(),
        verdict.significant,
        verdict.optimal_pc
    );
    Ok(Outcome::Done)
}

fn cmd_select(cfg: &RunConfig) -> CmdResult {
    let (set, conc) = load_pair(cfg)?;
    let candidates = match &cfg.candidates {
        Some(list) => list.iter().map(|c| Candidate::parse(c)).collect::<Result<Vec<_>, _>>().map_err(err)?,
        None => default_candidates(),
    };
    let options = SelectOptions {
        alpha: cfg.alpha()?,
        scale: scale(cfg),
        ..SelectOptions::default()
    };
    let report = select_method_with(&set, &conc, &candidates, &options).map_err(err)?;
    let path = match &cfg.report {
        Some(p) => p.clone(),
        None => out_path(cfg, "selection_report.json")?,
    };
    report.save(&path).map_err(err)?;
    for c in &report.candidates {
        let status = match (&c.error, c.significant) {
            (Some(e), _) => format!("failed: {e}"),
            (None, true) => "significant".into(),
            (None, false) => "not significant".into(),
        };
        println!(
            "{:<24} pc={:<4} sum_press={:<14} {status}",
            c.label,
            c.optimal_pc.map(|p| p.to_string()).unwrap_or_else(|| "-".into()),
            c.sum_press_at_optimal.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into()),
        );
        eprintln!("time {} {:.3}s", c.label, c.wall_time.as_secs_f64());
    }
    for a in &report.alerts {
        eprintln!("alert: {a}");
    }
    println!(
        "chosen={} pipeline={} pc={} significant={} digest={}",
        report.chosen_label,
        report.chosen_pipeline,
        report.chosen_pc,
        report.chosen_significant,
        inputs_digest(&set, &conc)
    );
    Ok(if report.chosen_significant {
        Outcome::Done
    } else {
        Outcome::NotSignificant
    })
}

fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let (set, conc) = load_pair(cfg)?;
    let from_report = match &cfg.report {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("IoFailure path={}: {e}", p.display()))?;
            Some(SelectionReport::from_json(&text).map_err(err)?)
        }
        None => None,
    };
    let pipeline_text = cfg
        .pipeline
        .clone()
        .or_else(|| from_report.as_ref().map(|r| r.chosen_pipeline.clone()))
        .unwrap_or_else(|| "identity".into());
    let pc_count = cfg
        .pc_count
        .or_else(|| from_report.as_ref().map(|r| r.chosen_pc))
        .ok_or("MissingArgument: --pc-count or --report is required")?;
    let pipeline: Pipeline = pipeline_text.parse().map_err(err)?;
    let model = train_final(&set, &conc, &pipeline, pc_count).map_err(err)?;
    let path = match &cfg.model {
        Some(p) => p.clone(),
        None => out_path(cfg, "model.json")?,
    };
    model.save(&path).map_err(err)?;
    println!("pipeline={} pc_count={pc_count} wrote {}", pipeline.name(), path.display());
    Ok(Outcome::Done)
}

fn cmd_predict(cfg: &RunConfig, output: Option<PathBuf>) -> CmdResult {
    let model = PcrModel::load(RunConfig::require(&cfg.model, "model")?).map_err(err)?;
    let set = load_spectra(RunConfig::require(&cfg.spectra, "spectra")?, SpectraFormat::WideCsv).map_err(err)?;
    let est = model.predict_raw(&set).map_err(err)?;
    let path = match output {
        Some(p) => p,
        None => out_path(cfg, "predictions.csv")?,
    };
    let species: Vec<String> = model.species.iter().map(|s| s.name.clone()).collect();
    save_labeled_matrix(&path, &est, set.labels(), "species", &species).map_err(err)?;
    println!("predicted {} spectra, wrote {}", set.n_spectra(), path.display());
    Ok(Outcome::Done)
}
