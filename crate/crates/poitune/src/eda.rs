//! Univariate marginal distribution search over binary POI vectors.
//!
//! Each candidate is a length-T bit vector selecting trace samples. One
//! round evaluates the population (template attack per individual, scored
//! by the correction-factor fitness), keeps the top N, learns per-bit
//! marginal frequencies, and samples the next population from them.
//!
//! Randomness is keyed three ways so schedules never matter: population
//! sampling streams on `(seed, round, index)`, and each individual's attack
//! resampling derives from a digest of its own bits, so the same candidate
//! always meets the same attack subsets.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aes::LeakageModel;
use crate::poi::{normalize, SelectionGraphic};
use crate::template::{build_for_scoring, rank_with, Scoring, TemplateError};
use crate::trace::TraceSet;

/// One candidate POI selection: a bit per trace sample, plus cached
/// evaluation results once scored.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    bits: Vec<bool>,
    n_poi: usize,
    pub eval: Option<f64>,
    /// Rank of the correct key per attack device, cached by evaluation.
    pub ge: Option<Vec<u32>>,
}

impl Individual {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let n_poi = bits.iter().filter(|&&b| b).count();
        Self {
            bits,
            n_poi,
            eval: None,
            ge: None,
        }
    }

    /// All-zeros vector of length `t` with the listed positions set.
    pub fn from_indices(t: usize, indices: &[usize]) -> Result<Self, EdaError> {
        let mut bits = vec![false; t];
        for &i in indices {
            if i >= t {
                return Err(EdaError::IndexOutOfRange { index: i, length: t });
            }
            bits[i] = true;
        }
        Ok(Self::from_bits(bits))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn n_poi(&self) -> usize {
        self.n_poi
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    /// Bits packed LSB-first into bytes; the memoization key.
    pub fn packed_bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    /// Hex SHA-256 over length and packed bits; stable identifier for logs.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.bits.len() as u64).to_le_bytes());
        h.update(self.packed_bits());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-bit Bernoulli probabilities the next population is drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalModel {
    pub probs: Vec<f64>,
}

/// How per-device normalized ranks combine into ge_All for the fitness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeAggregation {
    /// Product of ge_d/key_space across devices (default).
    Product,
    /// Sum of ge_d/key_space across devices.
    Sum,
}

/// Fitness parameters: correction factor, the n_samples constant of the
/// success branch, rank aggregation, attack sizing, and the evaluation seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub correction_factor: f64,
    /// Denominator of the n_POI penalty; `None` uses the trace length.
    pub eval_n_samples: Option<usize>,
    pub ge_aggregation: GeAggregation,
    /// Traces resampled (without replacement) from each device's pool per
    /// evaluation.
    pub n_attack: usize,
    pub key_space: usize,
    pub scoring: Scoring,
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(correction_factor: f64, n_attack: usize) -> Self {
        Self {
            correction_factor,
            eval_n_samples: None,
            ge_aggregation: GeAggregation::Product,
            n_attack,
            key_space: 256,
            scoring: Scoring::Direct,
            seed: 0,
        }
    }
}

/// Initial population distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Every bit Bernoulli(p).
    Uniform { p: f64 },
    /// Bit n Bernoulli(alpha(n) * base_p) where alpha is the min-max
    /// normalized selection graphic; a degenerate graphic falls back to
    /// Uniform(base_p).
    FromGraphic {
        graphic: SelectionGraphic,
        base_p: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaConfig {
    pub population_size: usize,
    pub n_selected: usize,
    pub n_iterations: usize,
    pub seed: u64,
    pub init: InitStrategy,
    pub elitism: bool,
    /// Marginal clamp bounds; `None` defaults to 1/T and 1 - 1/T.
    pub p_floor: Option<f64>,
    pub p_ceil: Option<f64>,
    /// Stop once every marginal's binary entropy falls below this value.
    pub entropy_stop: Option<f64>,
}

/// Trace material one search runs against: a profiling set and one attack
/// pool per device, labelled by the given model.
pub struct EdaInputs<'a> {
    pub profiling: &'a TraceSet,
    pub attacks: Vec<&'a TraceSet>,
    pub model: LeakageModel,
}

/// Snapshot of one round: the evaluated population in descending eval order
/// and the marginals it was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub population: Vec<Individual>,
    pub marginals: Vec<f64>,
}

impl IterationRecord {
    pub fn best(&self) -> &Individual {
        &self.population[0]
    }
}

#[derive(Debug, Error)]
pub enum EdaError {
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
    #[error("n_selected {n_selected} must satisfy 1 <= N < R = {population_size}")]
    InvalidSelection {
        n_selected: usize,
        population_size: usize,
    },
    #[error("clamp bounds ({floor}, {ceil}) must satisfy 0 < floor < ceil < 1")]
    InvalidClampBounds { floor: f64, ceil: f64 },
    #[error("cannot learn marginals from an empty selection")]
    EmptySelection,
    #[error("individuals have differing bit lengths")]
    MixedBitLengths,
    #[error("individual has no cached evaluation")]
    UnevaluatedIndividual,
    #[error("POI index {index} is outside a length-{length} vector")]
    IndexOutOfRange { index: usize, length: usize },
    #[error("probability model has no entries")]
    EmptyModel,
    #[error("no attack trace sets supplied")]
    EmptyAttackList,
    #[error("device {device} pool holds {available} traces, {requested} requested per evaluation")]
    AttackPoolTooSmall {
        device: usize,
        available: usize,
        requested: usize,
    },
    #[error("device {device} traces are {attack} samples long, profiling has {profiling}")]
    SampleCountMismatch {
        device: usize,
        profiling: usize,
        attack: usize,
    },
    #[error("individual has {bits} bits for {n_samples}-sample traces")]
    BitLengthMismatch { bits: usize, n_samples: usize },
    #[error("correction factor must be positive, got {0}")]
    InvalidCorrectionFactor(f64),
    #[error("eval_n_samples must be at least 1")]
    InvalidEvalSamples,
    #[error("n_attack must be at least 1")]
    ZeroAttackTraces,
    #[error("key_space must be at least 1")]
    InvalidKeySpace,
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Single-device fitness: -CF * ge/key_space, with the POI-count factor
/// applied when the attack ranks the key first.
pub fn eval_single_device(
    correction_factor: f64,
    ge: u32,
    n_poi: usize,
    eval_n_samples: usize,
    key_space: usize,
) -> f64 {
    eval_multi_device(
        correction_factor,
        &[ge],
        n_poi,
        eval_n_samples,
        GeAggregation::Product,
        key_space,
    )
}

/// Multi-device fitness over ge_All (product or sum of normalized ranks);
/// the n_POI/n_samples factor applies only when every device ranks the key
/// first.
pub fn eval_multi_device(
    correction_factor: f64,
    ges: &[u32],
    n_poi: usize,
    eval_n_samples: usize,
    aggregation: GeAggregation,
    key_space: usize,
) -> f64 {
    let normalized = ges.iter().map(|&g| g as f64 / key_space as f64);
    let ge_all: f64 = match aggregation {
        GeAggregation::Product => normalized.product(),
        GeAggregation::Sum => normalized.sum(),
    };
    if ges.iter().all(|&g| g == 1) {
        -correction_factor * (n_poi as f64 / eval_n_samples as f64) * ge_all
    } else {
        -correction_factor * ge_all
    }
}

fn sample_one(probs: &[f64], rng: &mut ChaCha8Rng) -> Individual {
    for _ in 0..17 {
        let bits: Vec<bool> = probs.iter().map(|&p| rng.gen_bool(p)).collect();
        if bits.iter().any(|&b| b) {
            return Individual::from_bits(bits);
        }
    }
    // Nothing after the retry budget: force one bit, preferring positions
    // the model can actually set.
    let positive: Vec<usize> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, _)| i)
        .collect();
    let pool: Vec<usize> = if positive.is_empty() {
        (0..probs.len()).collect()
    } else {
        positive
    };
    let mut bits = vec![false; probs.len()];
    bits[pool[rng.gen_range(0..pool.len())]] = true;
    Individual::from_bits(bits)
}

fn sample_core(probs: &[f64], r: usize, seed: u64, round: u32) -> Vec<Individual> {
    (0..r)
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((round as u64) << 32) | idx as u64);
            sample_one(probs, &mut rng)
        })
        .collect()
}

/// R length-t individuals with every bit Bernoulli(p); all-zero draws are
/// retried, then one random bit is forced.
pub fn init_uniform(t: usize, r: usize, p: f64, seed: u64) -> Result<Vec<Individual>, EdaError> {
    if t == 0 {
        return Err(EdaError::EmptyModel);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(EdaError::InvalidProbability(p));
    }
    Ok(sample_core(&vec![p; t], r, seed, 0))
}

fn graphic_init_probs(g: &SelectionGraphic, base_p: f64) -> Result<Vec<f64>, EdaError> {
    if !(base_p > 0.0 && base_p < 1.0) {
        return Err(EdaError::InvalidProbability(base_p));
    }
    if g.values.is_empty() {
        return Err(EdaError::EmptyModel);
    }
    let n = normalize(g);
    if n.degenerate {
        return Ok(vec![base_p; n.values.len()]);
    }
    Ok(n.values.iter().map(|&v| v * base_p).collect())
}

/// Population seeded by a selection graphic: bit n is Bernoulli of the
/// normalized graphic value times base_p, so low-signal samples start rare
/// and the graphic minimum starts at exactly zero.
pub fn init_from_graphic(
    g: &SelectionGraphic,
    r: usize,
    base_p: f64,
    seed: u64,
) -> Result<Vec<Individual>, EdaError> {
    let probs = graphic_init_probs(g, base_p)?;
    Ok(sample_core(&probs, r, seed, 0))
}

/// Descending-fitness order: higher eval first, then fewer POIs, then
/// lexicographically smaller bits.
fn better_first(a: &Individual, b: &Individual) -> Ordering {
    let ea = a.eval.unwrap_or(f64::NEG_INFINITY);
    let eb = b.eval.unwrap_or(f64::NEG_INFINITY);
    eb.total_cmp(&ea)
        .then(a.n_poi.cmp(&b.n_poi))
        .then(a.bits.cmp(&b.bits))
}

/// The N best evaluated individuals.
pub fn select_top_n(population: &[Individual], n: usize) -> Result<Vec<Individual>, EdaError> {
    if population.iter().any(|i| i.eval.is_none()) {
        return Err(EdaError::UnevaluatedIndividual);
    }
    let mut sorted: Vec<Individual> = population.to_vec();
    sorted.sort_by(better_first);
    sorted.truncate(n);
    Ok(sorted)
}

/// Per-bit frequency over the selection, clamped into [p_floor, p_ceil].
pub fn learn_marginals(
    selected: &[Individual],
    p_floor: f64,
    p_ceil: f64,
) -> Result<MarginalModel, EdaError> {
    let first = selected.first().ok_or(EdaError::EmptySelection)?;
    if selected.iter().any(|i| i.bits.len() != first.bits.len()) {
        return Err(EdaError::MixedBitLengths);
    }
    if !(p_floor > 0.0 && p_floor < p_ceil && p_ceil < 1.0) {
        return Err(EdaError::InvalidClampBounds {
            floor: p_floor,
            ceil: p_ceil,
        });
    }
    let n = selected.len() as f64;
    let probs = (0..first.bits.len())
        .map(|i| {
            let count = selected.iter().filter(|ind| ind.bits[i]).count() as f64;
            (count / n).clamp(p_floor, p_ceil)
        })
        .collect();
    Ok(MarginalModel { probs })
}

/// R draws from the marginal model; streams keyed on (seed, round, index).
pub fn sample_population(
    m: &MarginalModel,
    r: usize,
    seed: u64,
    round: u32,
) -> Result<Vec<Individual>, EdaError> {
    if m.probs.is_empty() {
        return Err(EdaError::EmptyModel);
    }
    Ok(sample_core(&m.probs, r, seed, round))
}

fn validate_eval_setup(
    profiling: &TraceSet,
    attacks: &[&TraceSet],
    ecfg: &EvalConfig,
) -> Result<(), EdaError> {
    if attacks.is_empty() {
        return Err(EdaError::EmptyAttackList);
    }
    if ecfg.correction_factor <= 0.0 {
        return Err(EdaError::InvalidCorrectionFactor(ecfg.correction_factor));
    }
    if ecfg.eval_n_samples == Some(0) {
        return Err(EdaError::InvalidEvalSamples);
    }
    if ecfg.n_attack == 0 {
        return Err(EdaError::ZeroAttackTraces);
    }
    if ecfg.key_space == 0 {
        return Err(EdaError::InvalidKeySpace);
    }
    for (device, a) in attacks.iter().enumerate() {
        if a.n_samples() != profiling.n_samples() {
            return Err(EdaError::SampleCountMismatch {
                device,
                profiling: profiling.n_samples(),
                attack: a.n_samples(),
            });
        }
        if a.n_traces() < ecfg.n_attack {
            return Err(EdaError::AttackPoolTooSmall {
                device,
                available: a.n_traces(),
                requested: ecfg.n_attack,
            });
        }
    }
    Ok(())
}

/// A template build that merely reflects a bad candidate, as opposed to
/// broken inputs or configuration.
fn is_candidate_failure(e: &TemplateError) -> bool {
    matches!(
        e,
        TemplateError::EmptyPoi
            | TemplateError::ClassCoverage(_)
            | TemplateError::MaskClassBuild { .. }
    )
}

/// Seed for an individual's attack resampling: mixes the run seed with the
/// bit digest so a candidate's score never depends on when it is evaluated.
fn eval_seed_for(seed: u64, ind: &Individual) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((ind.bits.len() as u64).to_le_bytes());
    h.update(ind.packed_bits());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// Evaluation core; assumes `validate_eval_setup` has passed. Candidate
/// failures (empty POIs, starved template classes) score the worst-case
/// sentinel -CF with rank key_space per device.
fn evaluate_raw(
    ind: &Individual,
    profiling: &TraceSet,
    attacks: &[&TraceSet],
    model: &LeakageModel,
    ecfg: &EvalConfig,
) -> Result<(f64, Vec<u32>), EdaError> {
    let sentinel = (
        -ecfg.correction_factor,
        vec![ecfg.key_space as u32; attacks.len()],
    );
    if ind.n_poi == 0 {
        return Ok(sentinel);
    }
    let built = match build_for_scoring(profiling, model, ind, None, &ecfg.scoring) {
        Ok(b) => b,
        Err(e) if is_candidate_failure(&e) => return Ok(sentinel),
        Err(e) => return Err(e.into()),
    };
    let eval_seed = eval_seed_for(ecfg.seed, ind);
    let mut ges = Vec::with_capacity(attacks.len());
    for (device, attack) in attacks.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
        rng.set_stream((device as u64) << 32);
        let idx = rand::seq::index::sample(&mut rng, attack.n_traces(), ecfg.n_attack).into_vec();
        let subset = attack.select(&idx);
        match rank_with(&built, &subset) {
            Ok(r) => ges.push(r.correct_rank),
            Err(e) if is_candidate_failure(&e) => return Ok(sentinel),
            Err(e) => return Err(e.into()),
        }
    }
    let n_samples = ecfg.eval_n_samples.unwrap_or(profiling.n_samples());
    let eval = eval_multi_device(
        ecfg.correction_factor,
        &ges,
        ind.n_poi,
        n_samples,
        ecfg.ge_aggregation,
        ecfg.key_space,
    );
    Ok((eval, ges))
}

/// Scores one individual against one attack device and caches the result.
pub fn evaluate_single(
    ind: &mut Individual,
    profiling: &TraceSet,
    attack: &TraceSet,
    model: &LeakageModel,
    ecfg: &EvalConfig,
) -> Result<f64, EdaError> {
    evaluate_multi(ind, profiling, &[attack], model, ecfg)
}

/// Scores one individual against every attack device (templates built once
/// from the profiling set) and caches eval and per-device ranks.
pub fn evaluate_multi(
    ind: &mut Individual,
    profiling: &TraceSet,
    attacks: &[&TraceSet],
    model: &LeakageModel,
    ecfg: &EvalConfig,
) -> Result<f64, EdaError> {
    validate_eval_setup(profiling, attacks, ecfg)?;
    if ind.bits.len() != profiling.n_samples() {
        return Err(EdaError::BitLengthMismatch {
            bits: ind.bits.len(),
            n_samples: profiling.n_samples(),
        });
    }
    let (eval, ges) = evaluate_raw(ind, profiling, attacks, model, ecfg)?;
    ind.eval = Some(eval);
    ind.ge = Some(ges);
    Ok(eval)
}

type EvalCache = HashMap<Vec<u8>, (f64, Vec<u32>)>;

fn evaluate_population(
    population: &mut [Individual],
    memo: &mut EvalCache,
    inputs: &EdaInputs,
    ecfg: &EvalConfig,
) -> Result<(), EdaError> {
    let mut seen = HashSet::new();
    let todo: Vec<Individual> = population
        .iter()
        .filter(|ind| {
            let key = ind.packed_bits();
            !memo.contains_key(&key) && seen.insert(key)
        })
        .cloned()
        .collect();
    let results: Vec<(Vec<u8>, Result<(f64, Vec<u32>), EdaError>)> = todo
        .into_par_iter()
        .map(|ind| {
            let r = evaluate_raw(&ind, inputs.profiling, &inputs.attacks, &inputs.model, ecfg);
            (ind.packed_bits(), r)
        })
        .collect();
    for (key, r) in results {
        memo.insert(key, r?);
    }
    for ind in population.iter_mut() {
        let (eval, ges) = memo
            .get(&ind.packed_bits())
            .expect("every population member was just scored")
            .clone();
        ind.eval = Some(eval);
        ind.ge = Some(ges);
    }
    Ok(())
}

fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Full search loop: init, evaluate, select, learn, sample, for
/// `n_iterations` rounds (or until the marginals become near-deterministic
/// when an entropy stop is set). Returns one record per evaluated
/// population; index 0 is the initial population.
pub fn run_eda(
    cfg: &EdaConfig,
    ecfg: &EvalConfig,
    inputs: &EdaInputs,
) -> Result<Vec<IterationRecord>, EdaError> {
    validate_eval_setup(inputs.profiling, &inputs.attacks, ecfg)?;
    let t = inputs.profiling.n_samples();
    if cfg.n_selected == 0 || cfg.n_selected >= cfg.population_size {
        return Err(EdaError::InvalidSelection {
            n_selected: cfg.n_selected,
            population_size: cfg.population_size,
        });
    }
    let p_floor = cfg.p_floor.unwrap_or(1.0 / t as f64);
    let p_ceil = cfg.p_ceil.unwrap_or(1.0 - 1.0 / t as f64);
    if !(p_floor > 0.0 && p_floor < p_ceil && p_ceil < 1.0) {
        return Err(EdaError::InvalidClampBounds {
            floor: p_floor,
            ceil: p_ceil,
        });
    }

    let init_probs = match &cfg.init {
        InitStrategy::Uniform { p } => {
            if !(*p > 0.0 && *p < 1.0) {
                return Err(EdaError::InvalidProbability(*p));
            }
            vec![*p; t]
        }
        InitStrategy::FromGraphic { graphic, base_p } => {
            if graphic.values.len() != t {
                return Err(EdaError::BitLengthMismatch {
                    bits: graphic.values.len(),
                    n_samples: t,
                });
            }
            graphic_init_probs(graphic, *base_p)?
        }
    };

    let mut population = sample_core(&init_probs, cfg.population_size, cfg.seed, 0);
    let mut sampled_probs = init_probs;
    let mut memo: EvalCache = HashMap::new();
    let mut best: Option<Individual> = None;
    let mut records = Vec::with_capacity(cfg.n_iterations + 1);

    for iteration in 0..=cfg.n_iterations {
        evaluate_population(&mut population, &mut memo, inputs, ecfg)?;
        population.sort_by(better_first);
        if best
            .as_ref()
            .is_none_or(|b| better_first(&population[0], b) == Ordering::Less)
        {
            best = Some(population[0].clone());
        }
        records.push(IterationRecord {
            iteration,
            population: population.clone(),
            marginals: sampled_probs.clone(),
        });
        if iteration == cfg.n_iterations {
            break;
        }

        let selected = select_top_n(&population, cfg.n_selected)?;
        let model = learn_marginals(&selected, p_floor, p_ceil)?;
        if let Some(threshold) = cfg.entropy_stop {
            let max_entropy = model
                .probs
                .iter()
                .map(|&p| binary_entropy(p))
                .fold(0.0, f64::max);
            if max_entropy < threshold {
                break;
            }
        }
        sampled_probs = model.probs;
        population = sample_core(&sampled_probs, cfg.population_size, cfg.seed, iteration as u32 + 1);
        if cfg.elitism {
            let last = population.len() - 1;
            population[last] = best.clone().expect("best is set after the first round");
        }
    }
    Ok(records)
}
