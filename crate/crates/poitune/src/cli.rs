//! Command-line front end: `simulate`, `poi-graph`, `attack`, `eda`, `doe`.
//!
//! Every subcommand takes flags plus an optional `--config` file; flags win
//! over config keys, and seeds fall back to the `SCA_SEED` environment
//! variable, then 0. Each run writes a manifest alongside its outputs that
//! reproduces the run when passed back through `--config`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::error::Error;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::aes::LeakageModel;
use crate::config::{parse_hex_key, ConfigFile, SectionView};
use crate::doe::{full_factorial_plan, run_doe, FactorBinder, FactorSpec, ResponseKind};
use crate::eda::{run_eda, EdaConfig, EdaInputs, EvalConfig, GeAggregation, InitStrategy};
use crate::poi::{self, GraphicMethod};
use crate::report::{
    doe_effects_csv, doe_runs_csv, ge_curve_csv, graphic_csv, sha256_hex, write_iteration_csvs,
    RunManifest,
};
use crate::sim::{simulate, DeviceProfile, Implementation, KeyMode, LeakPoints, SimConfig};
use crate::template::{build_for_scoring, rank_with, MaskClassing, Scoring};
use crate::trace::{read_sctf, write_sctf, TraceSet};

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "poitune",
    version,
    about = "Template-attack point-of-interest tuning on synthetic AES leakage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic leakage traces and write them as SCTF
    Simulate(SimulateArgs),
    /// Compute a POI selection graphic over a profiling set
    PoiGraph(PoiGraphArgs),
    /// Run one template attack and emit its guessing-entropy curve
    Attack(AttackArgs),
    /// Search POI subsets with the estimation-of-distribution optimizer
    Eda(EdaArgs),
    /// Run a 2^3 factorial experiment over optimizer parameters
    Doe(DoeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// unprotected or masked
    #[arg(long = "impl")]
    implementation: Option<String>,
    #[arg(long)]
    n_traces: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Fixed 16-byte key as 32 hex digits; omit for per-trace random keys
    #[arg(long)]
    key: Option<String>,
    #[arg(long)]
    byte: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output SCTF path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PoiGraphArgs {
    #[arg(long)]
    profile: Option<PathBuf>,
    /// iv-sbox, hw-sbox (default), or hd-lastround
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    byte: Option<usize>,
    /// Second ciphertext byte for hd-lastround (defaults to --byte)
    #[arg(long)]
    byte2: Option<usize>,
    /// sost, sosd, snr, or corr
    #[arg(long)]
    method: Option<String>,
    /// Min-max normalize the graphic before writing it
    #[arg(long)]
    normalize: bool,
    /// Profiling key as 32 hex digits when the set has no key field
    #[arg(long)]
    known_key: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    attack: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    byte: Option<usize>,
    /// Second ciphertext byte for hd-lastround (defaults to --byte)
    #[arg(long)]
    byte2: Option<usize>,
    /// Comma-separated sample indices to use as POIs
    #[arg(long)]
    poi: Option<String>,
    /// Use only the first N attack traces
    #[arg(long)]
    n_attack: Option<usize>,
    /// direct, hw3, hw9, or id256
    #[arg(long)]
    scoring: Option<String>,
    #[arg(long)]
    known_key: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EdaArgs {
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Attack pool; repeat the flag for one pool per device
    #[arg(long)]
    attack: Vec<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    byte: Option<usize>,
    /// Second ciphertext byte for hd-lastround (defaults to --byte)
    #[arg(long)]
    byte2: Option<usize>,
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    n_selected: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// uniform or graphic
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cf: Option<f64>,
    #[arg(long)]
    n_attack: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for per-iteration CSVs and the manifest
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DoeArgs {
    /// Config file holding the [doe] factors and the base search settings
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for run/effect CSVs and the manifest
    #[arg(long)]
    out: PathBuf,
}

/// Parses argv and runs the chosen subcommand, translating outcomes to the
/// documented exit codes.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => exec_simulate(args),
        Command::PoiGraph(args) => exec_poi_graph(args),
        Command::Attack(args) => exec_attack(args),
        Command::Eda(args) => exec_eda(args),
        Command::Doe(args) => exec_doe(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Box<dyn Error>> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Ok(ConfigFile::parse(&text)?)
        }
    }
}

/// flag > config > SCA_SEED > 0.
fn resolve_seed(flag: Option<u64>, from_config: Option<u64>) -> Result<u64, Box<dyn Error>> {
    if let Some(s) = flag.or(from_config) {
        return Ok(s);
    }
    match std::env::var("SCA_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| format!("SCA_SEED: expected an integer, got {v:?}").into()),
        Err(_) => Ok(0),
    }
}

fn parse_or<T>(
    key: &str,
    flag: Option<String>,
    from_config: Option<&str>,
    default: T,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<T, Box<dyn Error>> {
    let Some(text) = flag.as_deref().or(from_config) else {
        return Ok(default);
    };
    parse(text).ok_or_else(|| format!("key {key:?}: unrecognized value {text:?}").into())
}

fn implementation_of(s: &str) -> Option<Implementation> {
    match s {
        "unprotected" => Some(Implementation::Unprotected),
        "masked" => Some(Implementation::Masked),
        _ => None,
    }
}

fn implementation_name(i: Implementation) -> &'static str {
    match i {
        Implementation::Unprotected => "unprotected",
        Implementation::Masked => "masked",
    }
}

fn model_of(s: &str, byte_index: usize, byte_index2: usize) -> Option<LeakageModel> {
    match s {
        "iv-sbox" => Some(LeakageModel::IvSbox { byte_index }),
        "hw-sbox" => Some(LeakageModel::HwSbox { byte_index }),
        "hd-lastround" => Some(LeakageModel::HdLastRound {
            byte_pair: (byte_index, byte_index2),
        }),
        _ => None,
    }
}

fn model_name(m: &LeakageModel) -> &'static str {
    match m {
        LeakageModel::IvSbox { .. } => "iv-sbox",
        LeakageModel::HwSbox { .. } => "hw-sbox",
        LeakageModel::HdLastRound { .. } => "hd-lastround",
    }
}

fn method_of(s: &str) -> Option<GraphicMethod> {
    match s {
        "sost" => Some(GraphicMethod::Sost),
        "sosd" => Some(GraphicMethod::Sosd),
        "snr" => Some(GraphicMethod::Snr),
        "corr" => Some(GraphicMethod::Correlation),
        _ => None,
    }
}

fn method_name(m: GraphicMethod) -> &'static str {
    match m {
        GraphicMethod::Sost => "sost",
        GraphicMethod::Sosd => "sosd",
        GraphicMethod::Snr => "snr",
        GraphicMethod::Correlation => "corr",
    }
}

fn scoring_of(s: &str) -> Option<Scoring> {
    match s {
        "direct" => Some(Scoring::Direct),
        "hw3" => Some(Scoring::MaskMarginal(MaskClassing::Hw3)),
        "hw9" => Some(Scoring::MaskMarginal(MaskClassing::Hw9)),
        "id256" => Some(Scoring::MaskMarginal(MaskClassing::Identity256)),
        _ => None,
    }
}

fn scoring_name(s: &Scoring) -> &'static str {
    match s {
        Scoring::Direct => "direct",
        Scoring::MaskMarginal(MaskClassing::Hw3) => "hw3",
        Scoring::MaskMarginal(MaskClassing::Hw9) => "hw9",
        Scoring::MaskMarginal(MaskClassing::Identity256) => "id256",
    }
}

fn aggregation_of(s: &str) -> Option<GeAggregation> {
    match s {
        "product" => Some(GeAggregation::Product),
        "sum" => Some(GeAggregation::Sum),
        _ => None,
    }
}

fn key_of(key: &str, flag: Option<String>, section: SectionView) -> Result<Option<[u8; 16]>, Box<dyn Error>> {
    match flag {
        Some(text) => parse_hex_key(&text)
            .map(Some)
            .ok_or_else(|| format!("key {key:?}: expected 32 hex digits, got {text:?}").into()),
        None => Ok(section.get_key16(key)?),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn digest_file(path: &Path) -> Result<(String, String), Box<dyn Error>> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((path.display().to_string(), sha256_hex(&bytes)))
}

fn read_traces(path: &Path) -> Result<TraceSet, Box<dyn Error>> {
    read_sctf(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

struct Settings(Vec<(String, String, String)>);

impl Settings {
    fn new() -> Self {
        Settings(Vec::new())
    }
    fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.0
            .push((section.to_string(), key.to_string(), value.to_string()));
    }
}

fn leak_points_string(lp: &LeakPoints) -> String {
    lp.positions
        .iter()
        .zip(&lp.coeffs)
        .map(|(p, c)| format!("{p}:{c}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn hex_key_string(key: &[u8; 16]) -> String {
    key.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_manifest(
    path: &Path,
    subcommand: &str,
    started: u64,
    inputs: Vec<(String, String)>,
    settings: Settings,
) -> CliResult {
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        inputs,
        settings: settings.0,
    };
    fs::write(path, manifest.render()).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

/// Evenly spread leak positions used when no device section is given.
fn default_positions(n_samples: usize, shifted: bool) -> Vec<usize> {
    let shift = if shifted { n_samples / 20 } else { 0 };
    (0..5).map(|i| n_samples * (2 * i + 1) / 10 + shift).collect()
}

fn exec_simulate(args: SimulateArgs) -> CliResult {
    let started = unix_now();
    let cfg = load_config(args.config.as_deref())?;
    cfg.ensure_known(&[
        (
            "simulate",
            &["impl", "n_traces", "n_samples", "key", "byte_index", "seed"],
        ),
        (
            "device",
            &[
                "gain",
                "offset",
                "noise_sigma",
                "value_leaks",
                "mask_leaks",
                "baseline_seed",
            ],
        ),
    ])?;
    let sim_section = cfg.section("simulate");
    let dev = cfg.section("device");

    let implementation = parse_or(
        "impl",
        args.implementation,
        sim_section.get("impl"),
        Implementation::Unprotected,
        implementation_of,
    )?;
    let n_traces = args
        .n_traces
        .or(sim_section.get_usize("n_traces")?)
        .unwrap_or(1000);
    let n_samples = args
        .n_samples
        .or(sim_section.get_usize("n_samples")?)
        .unwrap_or(500);
    let byte_index = args.byte.or(sim_section.get_usize("byte_index")?).unwrap_or(0);
    let seed = resolve_seed(args.seed, sim_section.get_u64("seed")?)?;
    let fixed_key = key_of("key", args.key, sim_section)?;
    let key_mode = match fixed_key {
        Some(k) => KeyMode::Fixed(k),
        None => KeyMode::Random,
    };

    let value_leaks = match dev.get_leak_points("value_leaks")? {
        Some((positions, coeffs)) => LeakPoints::new(positions, coeffs),
        None => LeakPoints::uniform(default_positions(n_samples, false), 1.0),
    };
    let mask_leaks = match dev.get_leak_points("mask_leaks")? {
        Some((positions, coeffs)) => LeakPoints::new(positions, coeffs),
        None if implementation == Implementation::Masked => {
            LeakPoints::uniform(default_positions(n_samples, true), 1.0)
        }
        None => LeakPoints::none(),
    };
    let profile = DeviceProfile {
        gain: dev.get_f64("gain")?.unwrap_or(1.0),
        offset: dev.get_f64("offset")?.unwrap_or(0.0),
        noise_sigma: dev.get_f64("noise_sigma")?.unwrap_or(1.0),
        value_leaks,
        mask_leaks,
        baseline_seed: dev.get_u64("baseline_seed")?.unwrap_or(1),
    };
    let sim_config = SimConfig {
        implementation,
        n_traces,
        key_mode,
        byte_index,
        n_samples,
        seed,
    };
    let ts = simulate(&profile, &sim_config)?;
    write_sctf(&ts, &args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;

    let mut settings = Settings::new();
    settings.set("simulate", "impl", implementation_name(implementation));
    settings.set("simulate", "n_traces", n_traces);
    settings.set("simulate", "n_samples", n_samples);
    settings.set("simulate", "byte_index", byte_index);
    settings.set("simulate", "seed", seed);
    if let Some(k) = fixed_key {
        settings.set("simulate", "key", hex_key_string(&k));
    }
    settings.set("device", "gain", profile.gain);
    settings.set("device", "offset", profile.offset);
    settings.set("device", "noise_sigma", profile.noise_sigma);
    settings.set("device", "value_leaks", leak_points_string(&profile.value_leaks));
    if !profile.mask_leaks.positions.is_empty() {
        settings.set("device", "mask_leaks", leak_points_string(&profile.mask_leaks));
    }
    settings.set("device", "baseline_seed", profile.baseline_seed);
    let manifest_path = manifest_sibling(&args.out);
    write_manifest(&manifest_path, "simulate", started, Vec::new(), settings)?;

    println!(
        "wrote {} traces x {} samples to {}",
        n_traces,
        n_samples,
        args.out.display()
    );
    Ok(())
}

fn manifest_sibling(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.cfg");
    out.with_file_name(name)
}

fn exec_poi_graph(args: PoiGraphArgs) -> CliResult {
    let started = unix_now();
    let cfg = load_config(args.config.as_deref())?;
    cfg.ensure_known(&[
        (
            "data",
            &["profile", "model", "byte_index", "byte_index2", "known_key"],
        ),
        ("poi", &["method", "normalize"]),
    ])?;
    let data = cfg.section("data");
    let poi_section = cfg.section("poi");

    let profile_path = args
        .profile
        .or_else(|| data.get("profile").map(PathBuf::from))
        .ok_or("missing required key \"profile\"")?;
    let byte_index = args.byte.or(data.get_usize("byte_index")?).unwrap_or(0);
    let byte_index2 = args
        .byte2
        .or(data.get_usize("byte_index2")?)
        .unwrap_or(byte_index);
    let model_text = args
        .model
        .or_else(|| data.get("model").map(str::to_string))
        .unwrap_or_else(|| "hw-sbox".to_string());
    let model = model_of(&model_text, byte_index, byte_index2)
        .ok_or_else(|| format!("key \"model\": unrecognized value {model_text:?}"))?;
    let method = parse_or(
        "method",
        args.method,
        poi_section.get("method"),
        GraphicMethod::Sost,
        method_of,
    )?;
    let normalize = args.normalize || poi_section.get_bool("normalize")?.unwrap_or(false);
    let known_key = key_of("known_key", args.known_key, data)?;

    let ts = read_traces(&profile_path)?;
    let labels = crate::template::class_labels(&ts, &model, known_key.as_ref())?;
    let mut graphic = match method {
        GraphicMethod::Sost => poi::sost(&ts, &labels)?,
        GraphicMethod::Sosd => poi::sosd(&ts, &labels)?,
        GraphicMethod::Snr => poi::snr(&ts, &labels)?,
        GraphicMethod::Correlation => {
            let hyps: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
            poi::correlation_graphic(&ts, &hyps)?
        }
    };
    if normalize {
        graphic = poi::normalize(&graphic);
    }
    fs::write(&args.out, graphic_csv(&graphic))
        .map_err(|e| format!("{}: {e}", args.out.display()))?;

    let mut settings = Settings::new();
    settings.set("data", "profile", profile_path.display());
    settings.set("data", "model", model_name(&model));
    settings.set("data", "byte_index", byte_index);
    if matches!(model, LeakageModel::HdLastRound { .. }) {
        settings.set("data", "byte_index2", byte_index2);
    }
    if let Some(k) = known_key {
        settings.set("data", "known_key", hex_key_string(&k));
    }
    settings.set("poi", "method", method_name(method));
    settings.set("poi", "normalize", normalize);
    let inputs = vec![digest_file(&profile_path)?];
    write_manifest(&manifest_sibling(&args.out), "poi-graph", started, inputs, settings)?;

    println!(
        "wrote {} graphic over {} samples to {}",
        method_name(method),
        graphic.values.len(),
        args.out.display()
    );
    Ok(())
}

fn exec_attack(args: AttackArgs) -> CliResult {
    let started = unix_now();
    let cfg = load_config(args.config.as_deref())?;
    cfg.ensure_known(&[
        (
            "data",
            &[
                "profile",
                "attack",
                "model",
                "byte_index",
                "byte_index2",
                "known_key",
            ],
        ),
        ("attack", &["poi", "n_attack", "scoring"]),
    ])?;
    let data = cfg.section("data");
    let attack_section = cfg.section("attack");

    let profile_path = args
        .profile
        .or_else(|| data.get("profile").map(PathBuf::from))
        .ok_or("missing required key \"profile\"")?;
    let attack_path = args
        .attack
        .or_else(|| data.get("attack").map(PathBuf::from))
        .ok_or("missing required key \"attack\"")?;
    let byte_index = args.byte.or(data.get_usize("byte_index")?).unwrap_or(0);
    let byte_index2 = args
        .byte2
        .or(data.get_usize("byte_index2")?)
        .unwrap_or(byte_index);
    let model_text = args
        .model
        .or_else(|| data.get("model").map(str::to_string))
        .unwrap_or_else(|| "hw-sbox".to_string());
    let model = model_of(&model_text, byte_index, byte_index2)
        .ok_or_else(|| format!("key \"model\": unrecognized value {model_text:?}"))?;
    let poi_indices: Vec<usize> = match args.poi {
        Some(text) => text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| format!("key \"poi\": bad index {s:?}"))
            })
            .collect::<Result<_, _>>()?,
        None => attack_section
            .get_usize_list("poi")?
            .ok_or("missing required key \"poi\"")?,
    };
    let scoring = parse_or(
        "scoring",
        args.scoring,
        attack_section.get("scoring"),
        Scoring::Direct,
        scoring_of,
    )?;
    let known_key = key_of("known_key", args.known_key, data)?;
    let n_attack = args.n_attack.or(attack_section.get_usize("n_attack")?);

    let profiling = read_traces(&profile_path)?;
    let attack_pool = read_traces(&attack_path)?;
    let attack_set = match n_attack {
        Some(n) if n < attack_pool.n_traces() => {
            attack_pool.select(&(0..n).collect::<Vec<_>>())
        }
        _ => attack_pool.clone(),
    };
    let poi_ind = crate::eda::Individual::from_indices(profiling.n_samples(), &poi_indices)?;
    let built = build_for_scoring(&profiling, &model, &poi_ind, known_key.as_ref(), &scoring)?;
    let result = rank_with(&built, &attack_set)?;
    fs::write(&args.out, ge_curve_csv(&result))
        .map_err(|e| format!("{}: {e}", args.out.display()))?;

    let mut settings = Settings::new();
    settings.set("data", "profile", profile_path.display());
    settings.set("data", "attack", attack_path.display());
    settings.set("data", "model", model_name(&model));
    settings.set("data", "byte_index", byte_index);
    if matches!(model, LeakageModel::HdLastRound { .. }) {
        settings.set("data", "byte_index2", byte_index2);
    }
    if let Some(k) = known_key {
        settings.set("data", "known_key", hex_key_string(&k));
    }
    let poi_text = poi_indices
        .iter()
        .map(|p| p.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    settings.set("attack", "poi", poi_text);
    settings.set("attack", "n_attack", attack_set.n_traces());
    settings.set("attack", "scoring", scoring_name(&scoring));
    let inputs = vec![digest_file(&profile_path)?, digest_file(&attack_path)?];
    write_manifest(&manifest_sibling(&args.out), "attack", started, inputs, settings)?;

    println!(
        "correct key ranked {} after {} traces; curve in {}",
        result.correct_rank,
        attack_set.n_traces(),
        args.out.display()
    );
    Ok(())
}

const EDA_KEYS: (&str, &[&str]) = (
    "eda",
    &[
        "population_size",
        "n_selected",
        "n_iterations",
        "seed",
        "init",
        "init_p",
        "base_p",
        "init_graphic",
        "elitism",
        "p_floor",
        "p_ceil",
        "entropy_stop",
    ],
);
const EVAL_KEYS: (&str, &[&str]) = (
    "eval",
    &[
        "correction_factor",
        "n_attack",
        "eval_n_samples",
        "ge_aggregation",
        "scoring",
        "seed",
    ],
);
const DATA_KEYS: (&str, &[&str]) = (
    "data",
    &["profile", "attack", "model", "byte_index", "byte_index2"],
);

struct SearchSetup {
    profile_path: PathBuf,
    attack_paths: Vec<PathBuf>,
    model: LeakageModel,
    byte_index: usize,
    byte_index2: usize,
    profiling: TraceSet,
    attacks: Vec<TraceSet>,
    eda_cfg: EdaConfig,
    eval_cfg: EvalConfig,
    init_text: String,
    init_p: f64,
    base_p: f64,
    init_graphic: GraphicMethod,
}

/// Resolves everything `eda` and `doe` share: trace material, the optimizer
/// configuration, and the evaluation configuration.
fn resolve_search(cfg: &ConfigFile, args: &EdaArgs) -> Result<SearchSetup, Box<dyn Error>> {
    let data = cfg.section("data");
    let eda = cfg.section("eda");
    let eval = cfg.section("eval");

    let profile_path = args
        .profile
        .clone()
        .or_else(|| data.get("profile").map(PathBuf::from))
        .ok_or("missing required key \"profile\"")?;
    let attack_paths: Vec<PathBuf> = if args.attack.is_empty() {
        data.get_list("attack")
            .map(|l| l.into_iter().map(PathBuf::from).collect())
            .ok_or("missing required key \"attack\"")?
    } else {
        args.attack.clone()
    };
    if attack_paths.is_empty() {
        return Err("key \"attack\": needs at least one path".into());
    }
    let byte_index = args.byte.or(data.get_usize("byte_index")?).unwrap_or(0);
    let byte_index2 = args
        .byte2
        .or(data.get_usize("byte_index2")?)
        .unwrap_or(byte_index);
    let model_text = args
        .model
        .clone()
        .or_else(|| data.get("model").map(str::to_string))
        .unwrap_or_else(|| "hw-sbox".to_string());
    let model = model_of(&model_text, byte_index, byte_index2)
        .ok_or_else(|| format!("key \"model\": unrecognized value {model_text:?}"))?;

    let profiling = read_traces(&profile_path)?;
    let mut attacks = Vec::with_capacity(attack_paths.len());
    for p in &attack_paths {
        attacks.push(read_traces(p)?);
    }

    let population_size = args
        .population_size
        .or(eda.get_usize("population_size")?)
        .unwrap_or(20);
    let n_selected = args
        .n_selected
        .or(eda.get_usize("n_selected")?)
        .unwrap_or(population_size / 2);
    let n_iterations = args
        .iterations
        .or(eda.get_usize("n_iterations")?)
        .unwrap_or(10);
    let seed = resolve_seed(args.seed, eda.get_u64("seed")?)?;
    let init_text = args
        .init
        .clone()
        .or_else(|| eda.get("init").map(str::to_string))
        .unwrap_or_else(|| "graphic".to_string());
    let init_p = eda.get_f64("init_p")?.unwrap_or(0.1);
    let base_p = eda.get_f64("base_p")?.unwrap_or(0.5);
    let init_graphic = parse_or(
        "init_graphic",
        None,
        eda.get("init_graphic"),
        GraphicMethod::Sost,
        method_of,
    )?;
    let init = match init_text.as_str() {
        "uniform" => InitStrategy::Uniform { p: init_p },
        "graphic" => {
            let labels = crate::template::class_labels(&profiling, &model, None)?;
            let graphic = match init_graphic {
                GraphicMethod::Sost => poi::sost(&profiling, &labels)?,
                GraphicMethod::Sosd => poi::sosd(&profiling, &labels)?,
                GraphicMethod::Snr => poi::snr(&profiling, &labels)?,
                GraphicMethod::Correlation => {
                    let hyps: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
                    poi::correlation_graphic(&profiling, &hyps)?
                }
            };
            InitStrategy::FromGraphic { graphic, base_p }
        }
        other => return Err(format!("key \"init\": unrecognized value {other:?}").into()),
    };
    let eda_cfg = EdaConfig {
        population_size,
        n_selected,
        n_iterations,
        seed,
        init,
        elitism: eda.get_bool("elitism")?.unwrap_or(true),
        p_floor: eda.get_f64("p_floor")?,
        p_ceil: eda.get_f64("p_ceil")?,
        entropy_stop: eda.get_f64("entropy_stop")?,
    };

    let correction_factor = args
        .cf
        .or(eval.get_f64("correction_factor")?)
        .unwrap_or(10.0);
    let n_attack = args
        .n_attack
        .or(eval.get_usize("n_attack")?)
        .unwrap_or(100);
    let scoring = parse_or(
        "scoring",
        None,
        eval.get("scoring"),
        Scoring::Direct,
        scoring_of,
    )?;
    let ge_aggregation = parse_or(
        "ge_aggregation",
        None,
        eval.get("ge_aggregation"),
        GeAggregation::Product,
        aggregation_of,
    )?;
    let eval_cfg = EvalConfig {
        correction_factor,
        eval_n_samples: eval.get_usize("eval_n_samples")?,
        ge_aggregation,
        n_attack,
        key_space: 256,
        scoring,
        seed: eval.get_u64("seed")?.unwrap_or(seed),
    };

    Ok(SearchSetup {
        profile_path,
        attack_paths,
        model,
        byte_index,
        byte_index2,
        profiling,
        attacks,
        eda_cfg,
        eval_cfg,
        init_text,
        init_p,
        base_p,
        init_graphic,
    })
}

fn search_settings(setup: &SearchSetup) -> Settings {
    let mut s = Settings::new();
    s.set("data", "profile", setup.profile_path.display());
    let attacks = setup
        .attack_paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ");
    s.set("data", "attack", attacks);
    s.set("data", "model", model_name(&setup.model));
    s.set("data", "byte_index", setup.byte_index);
    if matches!(setup.model, LeakageModel::HdLastRound { .. }) {
        s.set("data", "byte_index2", setup.byte_index2);
    }
    s.set("eda", "population_size", setup.eda_cfg.population_size);
    s.set("eda", "n_selected", setup.eda_cfg.n_selected);
    s.set("eda", "n_iterations", setup.eda_cfg.n_iterations);
    s.set("eda", "seed", setup.eda_cfg.seed);
    s.set("eda", "init", &setup.init_text);
    s.set("eda", "init_p", setup.init_p);
    s.set("eda", "base_p", setup.base_p);
    s.set("eda", "init_graphic", method_name(setup.init_graphic));
    s.set("eda", "elitism", setup.eda_cfg.elitism);
    if let Some(v) = setup.eda_cfg.p_floor {
        s.set("eda", "p_floor", v);
    }
    if let Some(v) = setup.eda_cfg.p_ceil {
        s.set("eda", "p_ceil", v);
    }
    if let Some(v) = setup.eda_cfg.entropy_stop {
        s.set("eda", "entropy_stop", v);
    }
    s.set("eval", "correction_factor", setup.eval_cfg.correction_factor);
    s.set("eval", "n_attack", setup.eval_cfg.n_attack);
    if let Some(v) = setup.eval_cfg.eval_n_samples {
        s.set("eval", "eval_n_samples", v);
    }
    let agg = match setup.eval_cfg.ge_aggregation {
        GeAggregation::Product => "product",
        GeAggregation::Sum => "sum",
    };
    s.set("eval", "ge_aggregation", agg);
    s.set("eval", "scoring", scoring_name(&setup.eval_cfg.scoring));
    s.set("eval", "seed", setup.eval_cfg.seed);
    s
}

fn search_inputs(setup: &SearchSetup) -> Result<Vec<(String, String)>, Box<dyn Error>> {
    let mut inputs = vec![digest_file(&setup.profile_path)?];
    for p in &setup.attack_paths {
        inputs.push(digest_file(p)?);
    }
    Ok(inputs)
}

fn exec_eda(args: EdaArgs) -> CliResult {
    let started = unix_now();
    let cfg = load_config(args.config.as_deref())?;
    cfg.ensure_known(&[DATA_KEYS, EDA_KEYS, EVAL_KEYS])?;
    let setup = resolve_search(&cfg, &args)?;

    let inputs = EdaInputs {
        profiling: &setup.profiling,
        attacks: setup.attacks.iter().collect(),
        model: setup.model,
    };
    let records = run_eda(&setup.eda_cfg, &setup.eval_cfg, &inputs)?;

    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    write_iteration_csvs(&args.out, &records)?;
    let manifest_inputs = search_inputs(&setup)?;
    write_manifest(
        &args.out.join("manifest.cfg"),
        "eda",
        started,
        manifest_inputs,
        search_settings(&setup),
    )?;

    let best = records
        .last()
        .expect("search always yields records")
        .best();
    let ge = best.ge.as_deref().unwrap_or(&[]);
    println!(
        "best Eval {} with {} POIs, ge {:?}; {} iteration files in {}",
        crate::report::format_sci(best.eval.unwrap_or(f64::NEG_INFINITY)),
        best.n_poi(),
        ge,
        records.len(),
        args.out.display()
    );
    println!(
        "selected sample indices: {}",
        best.selected_indices()
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(())
}

fn binder_of(s: &str) -> Option<FactorBinder> {
    match s {
        "cf" => Some(FactorBinder::CorrectionFactor),
        "iterations" => Some(FactorBinder::Iterations),
        "population" => Some(FactorBinder::PopulationSize),
        _ => None,
    }
}

fn binder_name(b: FactorBinder) -> &'static str {
    match b {
        FactorBinder::CorrectionFactor => "cf",
        FactorBinder::Iterations => "iterations",
        FactorBinder::PopulationSize => "population",
    }
}

/// `name:binder:low:high`, e.g. `CF:cf:1:10`.
fn parse_factor(key: &str, text: &str) -> Result<FactorSpec, Box<dyn Error>> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let bad = |msg: &str| -> Box<dyn Error> { format!("key {key:?}: {msg} in {text:?}").into() };
    if parts.len() != 4 {
        return Err(bad("expected name:binder:low:high"));
    }
    let binder = binder_of(parts[1]).ok_or_else(|| bad("unknown binder"))?;
    let low: f64 = parts[2].parse().map_err(|_| bad("bad low level"))?;
    let high: f64 = parts[3].parse().map_err(|_| bad("bad high level"))?;
    Ok(FactorSpec {
        name: parts[0].to_string(),
        low,
        high,
        binder,
    })
}

fn exec_doe(args: DoeArgs) -> CliResult {
    let started = unix_now();
    let cfg = load_config(Some(&args.config))?;
    cfg.ensure_known(&[
        DATA_KEYS,
        EDA_KEYS,
        EVAL_KEYS,
        ("doe", &["factor_a", "factor_b", "factor_c", "response"]),
    ])?;
    let doe = cfg.section("doe");
    let factors = [
        parse_factor("factor_a", doe.required("factor_a")?)?,
        parse_factor("factor_b", doe.required("factor_b")?)?,
        parse_factor("factor_c", doe.required("factor_c")?)?,
    ];
    let response = match doe.get("response").unwrap_or("best_eval") {
        "best_eval" => ResponseKind::BestEval,
        "best_ge" => ResponseKind::BestGe,
        other => return Err(format!("key \"response\": unrecognized value {other:?}").into()),
    };

    let eda_args = EdaArgs {
        profile: None,
        attack: Vec::new(),
        model: None,
        byte: None,
        byte2: None,
        population_size: None,
        n_selected: None,
        iterations: None,
        init: None,
        seed: args.seed,
        cf: None,
        n_attack: None,
        config: None,
        out: args.out.clone(),
    };
    let setup = resolve_search(&cfg, &eda_args)?;
    let inputs = EdaInputs {
        profiling: &setup.profiling,
        attacks: setup.attacks.iter().collect(),
        model: setup.model,
    };
    let plan = full_factorial_plan(factors)?;
    let table = run_doe(&plan, &setup.eda_cfg, &setup.eval_cfg, &inputs, response)?;

    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    fs::write(args.out.join("doe_runs.csv"), doe_runs_csv(&plan, &table)?)?;
    fs::write(args.out.join("doe_effects.csv"), doe_effects_csv(&table))?;

    let mut settings = search_settings(&setup);
    for (key, f) in ["factor_a", "factor_b", "factor_c"].iter().zip(&plan.factors) {
        settings.set(
            "doe",
            key,
            format!("{}:{}:{}:{}", f.name, binder_name(f.binder), f.low, f.high),
        );
    }
    let response_name = match response {
        ResponseKind::BestEval => "best_eval",
        ResponseKind::BestGe => "best_ge",
    };
    settings.set("doe", "response", response_name);
    let manifest_inputs = search_inputs(&setup)?;
    write_manifest(
        &args.out.join("manifest.cfg"),
        "doe",
        started,
        manifest_inputs,
        settings,
    )?;

    println!("ran 8 factorial runs; effects:");
    for (name, value) in crate::doe::EFFECT_NAMES.iter().zip(table.effects) {
        println!("  {name:>3} = {}", crate::report::format_sci(value));
    }
    Ok(())
}
