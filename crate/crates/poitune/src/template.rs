//! Gaussian template profiling and Bayesian key-byte ranking.
//!
//! Templates are per-class Gaussians with diagonal covariance (mean and
//! variance per selected sample). Attack scores accumulate per-trace
//! log-likelihoods under a uniform key prior, so ranking keys by summed log
//! score implements the Bayes discriminant. Masked implementations are
//! handled by one template set per output-mask class and a log-sum-exp
//! marginalization over the mask prior at scoring time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aes::{hamming_weight, LeakageModel, ModelError};
use crate::eda::Individual;
use crate::trace::{
    TraceError, TraceSet, FIELD_CIPHERTEXT, FIELD_KEY, FIELD_MASK_OUT, FIELD_PLAINTEXT,
};

/// Smallest accepted per-class training count; variance estimates from
/// fewer points are too unstable to score with.
pub const MIN_CLASS_COUNT: usize = 4;
/// Element-wise lower bound on template variances; keeps noiseless classes
/// finite-scoring.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Number of key-byte hypotheses ranked.
pub const KEY_SPACE: usize = 256;

/// One class's Gaussian: mean and variance per selected sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub class_label: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub n_training: usize,
}

/// Every class template of one leakage model over one POI selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub templates: Vec<Template>,
    pub model: LeakageModel,
    pub poi: Individual,
}

/// Outcome of ranking all 256 key-byte hypotheses against an attack set.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Key bytes in decreasing score order.
    pub guessing_vector: Vec<u8>,
    /// 1-based rank of the correct key byte; 1 means recovered.
    pub correct_rank: u32,
    /// Entry i: rank of the correct key after the first i+1 attack traces.
    pub ge_curve: Vec<u32>,
    /// Final accumulated log score per key byte.
    pub log_scores: Vec<f64>,
}

/// How the output mask byte is binned into template classes for masked
/// profiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskClassing {
    /// Three Hamming-weight bins: 0..=3, 4, 5..=8. Coarse enough that every
    /// (value class, mask class) cell stays well populated at moderate
    /// profiling sizes.
    Hw3,
    /// Nine Hamming-weight classes.
    Hw9,
    /// One class per mask byte value.
    Identity256,
}

impl MaskClassing {
    pub fn n_classes(&self) -> usize {
        match self {
            MaskClassing::Hw3 => 3,
            MaskClassing::Hw9 => 9,
            MaskClassing::Identity256 => 256,
        }
    }

    pub fn class_of(&self, m_out: u8) -> usize {
        match self {
            MaskClassing::Hw3 => match hamming_weight(m_out) {
                0..=3 => 0,
                4 => 1,
                _ => 2,
            },
            MaskClassing::Hw9 => hamming_weight(m_out) as usize,
            MaskClassing::Identity256 => m_out as usize,
        }
    }

    /// Exact class probabilities for a uniformly drawn mask byte.
    pub fn priors(&self) -> Vec<f64> {
        const CHOOSE_8: [f64; 9] = [1.0, 8.0, 28.0, 56.0, 70.0, 56.0, 28.0, 8.0, 1.0];
        match self {
            MaskClassing::Hw3 => vec![93.0 / 256.0, 70.0 / 256.0, 93.0 / 256.0],
            MaskClassing::Hw9 => CHOOSE_8.iter().map(|c| c / 256.0).collect(),
            MaskClassing::Identity256 => vec![1.0 / 256.0; 256],
        }
    }
}

/// Scoring strategy: plain templates, or per-mask-class templates combined
/// by marginalizing over the mask prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    Direct,
    MaskMarginal(MaskClassing),
}

/// Templates prepared for a chosen scoring strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltTemplates {
    Direct(TemplateSet),
    Masked {
        sets: Vec<TemplateSet>,
        prior: Vec<f64>,
    },
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("POI selection is empty")]
    EmptyPoi,
    #[error("POI index {index} exceeds trace length {n_samples}")]
    PoiOutOfRange { index: usize, n_samples: usize },
    #[error("classes below the {MIN_CLASS_COUNT}-trace minimum: {0:?} (label, count)")]
    ClassCoverage(Vec<(usize, usize)>),
    #[error("mask class {mask_class}: {source}")]
    MaskClassBuild {
        mask_class: usize,
        #[source]
        source: Box<TemplateError>,
    },
    #[error("attack set is empty")]
    EmptyAttackSet,
    #[error("no template sets supplied")]
    EmptyTemplateList,
    #[error("{sets} template sets but {priors} prior entries")]
    PriorLengthMismatch { sets: usize, priors: usize },
    #[error("mask prior sums to {0}, expected 1")]
    PriorNotNormalized(f64),
    #[error("mask prior entry {0} is negative")]
    NegativePrior(f64),
    #[error("template sets differ in POIs or model")]
    MismatchedTemplateSets,
    #[error("attack pool holds {available} traces, {requested} requested")]
    NotEnoughAttackTraces { requested: usize, available: usize },
    #[error("n_experiments must be at least 1")]
    ZeroExperiments,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const ZERO_STATE: [u8; 16] = [0; 16];

/// Metadata columns a model needs for labelling; absent columns are only
/// fetched when the model reads them.
struct ModelColumns {
    plaintexts: Option<Vec<[u8; 16]>>,
    ciphertexts: Option<Vec<[u8; 16]>>,
}

impl ModelColumns {
    fn fetch(ts: &TraceSet, model: &LeakageModel) -> Result<Self, TemplateError> {
        let plaintexts = match model {
            LeakageModel::IvSbox { .. } | LeakageModel::HwSbox { .. } => {
                Some(ts.byte16_column(FIELD_PLAINTEXT)?)
            }
            LeakageModel::HdLastRound { .. } => None,
        };
        let ciphertexts = match model {
            LeakageModel::HdLastRound { .. } => Some(ts.byte16_column(FIELD_CIPHERTEXT)?),
            _ => None,
        };
        Ok(Self {
            plaintexts,
            ciphertexts,
        })
    }

    fn label(&self, model: &LeakageModel, trace: usize, key_byte: u8) -> usize {
        let p = self
            .plaintexts
            .as_ref()
            .map_or(&ZERO_STATE, |v| &v[trace]);
        let c = self
            .ciphertexts
            .as_ref()
            .map_or(&ZERO_STATE, |v| &v[trace]);
        model.intermediate_value(p, c, key_byte)
    }
}

/// Per-trace class labels under the true key: `known_key` overrides the
/// metadata key column when given.
pub fn class_labels(
    ts: &TraceSet,
    model: &LeakageModel,
    known_key: Option<&[u8; 16]>,
) -> Result<Vec<usize>, TemplateError> {
    model.validate()?;
    let cols = ModelColumns::fetch(ts, model)?;
    let byte = model.key_byte_index();
    let key_bytes: Vec<u8> = match known_key {
        Some(k) => vec![k[byte]; ts.n_traces()],
        None => ts
            .byte16_column(FIELD_KEY)?
            .into_iter()
            .map(|k| k[byte])
            .collect(),
    };
    Ok((0..ts.n_traces())
        .map(|i| cols.label(model, i, key_bytes[i]))
        .collect())
}

fn checked_indices(poi: &Individual, n_samples: usize) -> Result<Vec<usize>, TemplateError> {
    if poi.n_poi() == 0 {
        return Err(TemplateError::EmptyPoi);
    }
    let indices = poi.selected_indices();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n_samples) {
        return Err(TemplateError::PoiOutOfRange {
            index: bad,
            n_samples,
        });
    }
    Ok(indices)
}

/// Fits one Gaussian per class label over the given sample indices.
/// Population variance, floored element-wise. `rows` restricts the fit to a
/// subset of traces without copying them; labels stay indexed by absolute
/// trace position.
fn fit_templates(
    ts: &TraceSet,
    labels: &[usize],
    n_classes: usize,
    indices: &[usize],
    rows: Option<&[usize]>,
) -> Result<Vec<Template>, TemplateError> {
    let d = indices.len();
    let mut counts = vec![0usize; n_classes];
    let mut sums = vec![0.0f64; n_classes * d];
    let mut sqsums = vec![0.0f64; n_classes * d];
    let mut accumulate = |i: usize| {
        let base = labels[i] * d;
        counts[labels[i]] += 1;
        let row = ts.trace(i);
        for (j, &idx) in indices.iter().enumerate() {
            let v = row[idx] as f64;
            sums[base + j] += v;
            sqsums[base + j] += v * v;
        }
    };
    match rows {
        Some(rows) => rows.iter().for_each(|&i| accumulate(i)),
        None => (0..labels.len()).for_each(accumulate),
    }

    let underpopulated: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c < MIN_CLASS_COUNT)
        .map(|(l, &c)| (l, c))
        .collect();
    if !underpopulated.is_empty() {
        return Err(TemplateError::ClassCoverage(underpopulated));
    }
    Ok((0..n_classes)
        .map(|c| {
            let n = counts[c] as f64;
            let base = c * d;
            let mean: Vec<f64> = (0..d).map(|j| sums[base + j] / n).collect();
            let variance: Vec<f64> = (0..d)
                .map(|j| (sqsums[base + j] / n - mean[j] * mean[j]).max(VARIANCE_FLOOR))
                .collect();
            Template {
                class_label: c,
                mean,
                variance,
                n_training: counts[c],
            }
        })
        .collect())
}

/// Builds one template per model class from profiling traces labelled with
/// the true key (metadata key column unless `known_key` is given).
pub fn build_templates(
    profiling: &TraceSet,
    model: &LeakageModel,
    poi: &Individual,
    known_key: Option<&[u8; 16]>,
) -> Result<TemplateSet, TemplateError> {
    let indices = checked_indices(poi, profiling.n_samples())?;
    let labels = class_labels(profiling, model, known_key)?;
    let templates = fit_templates(profiling, &labels, model.class_count(), &indices, None)?;
    Ok(TemplateSet {
        templates,
        model: *model,
        poi: poi.clone(),
    })
}

/// Splits profiling traces by output-mask class and builds one template set
/// per class; returns the sets with the exact mask-class prior. The split is
/// by row index, so no trace data is copied.
pub fn build_masked_templates(
    profiling: &TraceSet,
    model: &LeakageModel,
    poi: &Individual,
    known_key: Option<&[u8; 16]>,
    classing: MaskClassing,
) -> Result<(Vec<TemplateSet>, Vec<f64>), TemplateError> {
    let indices = checked_indices(poi, profiling.n_samples())?;
    let labels = class_labels(profiling, model, known_key)?;
    let masks = profiling.byte1_column(FIELD_MASK_OUT)?;
    let mut partitions: Vec<Vec<usize>> = vec![Vec::new(); classing.n_classes()];
    for (i, &m) in masks.iter().enumerate() {
        partitions[classing.class_of(m)].push(i);
    }
    let mut sets = Vec::with_capacity(partitions.len());
    for (mask_class, rows) in partitions.iter().enumerate() {
        let templates =
            fit_templates(profiling, &labels, model.class_count(), &indices, Some(rows)).map_err(
                |source| TemplateError::MaskClassBuild {
                    mask_class,
                    source: Box::new(source),
                },
            )?;
        sets.push(TemplateSet {
            templates,
            model: *model,
            poi: poi.clone(),
        });
    }
    Ok((sets, classing.priors()))
}

/// Prepares templates for the chosen scoring strategy.
pub fn build_for_scoring(
    profiling: &TraceSet,
    model: &LeakageModel,
    poi: &Individual,
    known_key: Option<&[u8; 16]>,
    scoring: &Scoring,
) -> Result<BuiltTemplates, TemplateError> {
    match scoring {
        Scoring::Direct => Ok(BuiltTemplates::Direct(build_templates(
            profiling, model, poi, known_key,
        )?)),
        Scoring::MaskMarginal(classing) => {
            let (sets, prior) =
                build_masked_templates(profiling, model, poi, known_key, *classing)?;
            Ok(BuiltTemplates::Masked { sets, prior })
        }
    }
}

/// Log density of a diagonal Gaussian at `values`.
pub fn log_gaussian_score(values: &[f64], tpl: &Template) -> f64 {
    assert_eq!(values.len(), tpl.mean.len(), "POI dimension mismatch");
    let mut acc = 0.0;
    for j in 0..values.len() {
        let r = values[j] - tpl.mean[j];
        acc += (std::f64::consts::TAU * tpl.variance[j]).ln() + r * r / tpl.variance[j];
    }
    -0.5 * acc
}

/// Shared ranking loop: accumulates per-key log scores trace by trace using
/// a per-class scorer, tracking the correct key's rank as evidence grows.
fn rank_core(
    attack: &TraceSet,
    model: &LeakageModel,
    indices: &[usize],
    n_classes: usize,
    class_score: impl Fn(&[f64], usize) -> f64,
) -> Result<AttackResult, TemplateError> {
    if attack.n_traces() == 0 {
        return Err(TemplateError::EmptyAttackSet);
    }
    let cols = ModelColumns::fetch(attack, model)?;
    let byte = model.key_byte_index();
    let k_star = attack.byte16_column(FIELD_KEY)?[0][byte];

    let mut acc = [0.0f64; KEY_SPACE];
    let mut ge_curve = Vec::with_capacity(attack.n_traces());
    let mut values = vec![0.0f64; indices.len()];
    let mut scores = vec![0.0f64; n_classes];
    for i in 0..attack.n_traces() {
        let row = attack.trace(i);
        for (j, &idx) in indices.iter().enumerate() {
            values[j] = row[idx] as f64;
        }
        for (c, slot) in scores.iter_mut().enumerate() {
            *slot = class_score(&values, c);
        }
        for (k, slot) in acc.iter_mut().enumerate() {
            *slot += scores[cols.label(model, i, k as u8)];
        }
        let s_star = acc[k_star as usize];
        let rank = 1 + acc
            .iter()
            .enumerate()
            .filter(|&(k, &s)| s > s_star || (s == s_star && k < k_star as usize))
            .count();
        ge_curve.push(rank as u32);
    }

    let mut guessing_vector: Vec<u8> = (0..=255).collect();
    guessing_vector.sort_by(|&a, &b| acc[b as usize].total_cmp(&acc[a as usize]).then(a.cmp(&b)));
    let correct_rank = *ge_curve.last().expect("attack set checked non-empty");
    Ok(AttackResult {
        guessing_vector,
        correct_rank,
        ge_curve,
        log_scores: acc.to_vec(),
    })
}

/// Ranks all key-byte hypotheses by accumulated log likelihood over the
/// attack traces; ties broken by ascending key byte.
pub fn rank_keys(attack: &TraceSet, tset: &TemplateSet) -> Result<AttackResult, TemplateError> {
    let indices = checked_indices(&tset.poi, attack.n_samples())?;
    rank_core(
        attack,
        &tset.model,
        &indices,
        tset.model.class_count(),
        |values, c| log_gaussian_score(values, &tset.templates[c]),
    )
}

/// Ranks key hypotheses when the implementation is masked: per trace and
/// class, p(t|k) marginalizes over the mask classes (log-sum-exp over
/// `log prior + log gaussian` per mask-class template set).
pub fn masked_marginal_score(
    attack: &TraceSet,
    tsets: &[TemplateSet],
    mask_prior: &[f64],
) -> Result<AttackResult, TemplateError> {
    let first = tsets.first().ok_or(TemplateError::EmptyTemplateList)?;
    if tsets.len() != mask_prior.len() {
        return Err(TemplateError::PriorLengthMismatch {
            sets: tsets.len(),
            priors: mask_prior.len(),
        });
    }
    if let Some(&p) = mask_prior.iter().find(|&&p| p < 0.0) {
        return Err(TemplateError::NegativePrior(p));
    }
    let sum: f64 = mask_prior.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(TemplateError::PriorNotNormalized(sum));
    }
    if tsets
        .iter()
        .any(|t| t.poi != first.poi || t.model != first.model)
    {
        return Err(TemplateError::MismatchedTemplateSets);
    }

    let indices = checked_indices(&first.poi, attack.n_samples())?;
    let log_prior: Vec<f64> = mask_prior.iter().map(|&p| p.ln()).collect();
    rank_core(
        attack,
        &first.model,
        &indices,
        first.model.class_count(),
        |values, c| {
            let terms: Vec<f64> = tsets
                .iter()
                .zip(&log_prior)
                .map(|(t, lp)| lp + log_gaussian_score(values, &t.templates[c]))
                .collect();
            let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                return mx;
            }
            mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
        },
    )
}

/// Ranks an attack set with whichever templates were built.
pub fn rank_with(
    built: &BuiltTemplates,
    attack: &TraceSet,
) -> Result<AttackResult, TemplateError> {
    match built {
        BuiltTemplates::Direct(tset) => rank_keys(attack, tset),
        BuiltTemplates::Masked { sets, prior } => masked_marginal_score(attack, sets, prior),
    }
}

/// Mean rank of the correct key over `n_experiments` resamplings of
/// `n_attack` traces (without replacement) from the attack pool. One
/// experiment yields the integer rank used inside the optimizer loop.
#[allow(clippy::too_many_arguments)]
pub fn guessing_entropy(
    profiling: &TraceSet,
    attack_pool: &TraceSet,
    model: &LeakageModel,
    poi: &Individual,
    n_attack: usize,
    n_experiments: usize,
    seed: u64,
    scoring: &Scoring,
) -> Result<f64, TemplateError> {
    if n_experiments == 0 {
        return Err(TemplateError::ZeroExperiments);
    }
    if n_attack == 0 {
        return Err(TemplateError::EmptyAttackSet);
    }
    if attack_pool.n_traces() < n_attack {
        return Err(TemplateError::NotEnoughAttackTraces {
            requested: n_attack,
            available: attack_pool.n_traces(),
        });
    }
    let built = build_for_scoring(profiling, model, poi, None, scoring)?;
    let mut total = 0u64;
    for e in 0..n_experiments {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let idx = rand::seq::index::sample(&mut rng, attack_pool.n_traces(), n_attack).into_vec();
        let subset = attack_pool.select(&idx);
        total += rank_with(&built, &subset)?.correct_rank as u64;
    }
    Ok(total as f64 / n_experiments as f64)
}
