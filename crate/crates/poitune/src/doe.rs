//! 2^3 full-factorial tuning experiments over search parameters, with
//! main- and interaction-effect computation.
//!
//! Runs follow Yates standard order with factor A changing slowest: run i
//! (0-based) sets A to its high level iff bit 2 of i is set, B iff bit 1,
//! C iff bit 0. Run 0 is all-low, run 7 all-high.

use thiserror::Error;

use crate::eda::{run_eda, EdaConfig, EdaError, EdaInputs, EvalConfig, Individual};

pub const EFFECT_NAMES: [&str; 7] = ["A", "B", "C", "AB", "AC", "BC", "ABC"];

/// Which tunable a factor's level is written into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorBinder {
    CorrectionFactor,
    Iterations,
    /// Sets the population size R; the selection size N follows as R/2.
    PopulationSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub binder: FactorBinder,
}

/// One of the eight planned runs: which factors sit at their high level and
/// the resolved numeric levels in factor order.
#[derive(Debug, Clone, PartialEq)]
pub struct DoeRun {
    pub index: usize,
    pub high: [bool; 3],
    pub levels: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoePlan {
    pub factors: [FactorSpec; 3],
    pub runs: Vec<DoeRun>,
}

/// What the response column of the effect table measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    /// Best individual's Eval in the final round (default).
    BestEval,
    /// Best individual's rank, averaged over devices.
    BestGe,
}

/// Outcome of one executed run, kept for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run: DoeRun,
    pub best: Individual,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectTable {
    pub responses: [f64; 8],
    /// A, B, C, AB, AC, BC, ABC in the order of `EFFECT_NAMES`.
    pub effects: [f64; 7],
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Error)]
pub enum DoeError {
    #[error("factor {0:?} has equal low and high levels")]
    EqualLevels(String),
    #[error("factors {0:?} and {1:?} bind the same parameter")]
    DuplicateBinder(String, String),
    #[error("factor {name:?} level {value} must be a non-negative whole number")]
    NonIntegerLevel { name: String, value: f64 },
    #[error("factor {name:?} level {value} is not a usable population size")]
    BadPopulationSize { name: String, value: f64 },
    #[error("run {run}: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: EdaError,
    },
}

fn check_factor(f: &FactorSpec) -> Result<(), DoeError> {
    if f.low == f.high {
        return Err(DoeError::EqualLevels(f.name.clone()));
    }
    match f.binder {
        FactorBinder::CorrectionFactor => Ok(()),
        FactorBinder::Iterations | FactorBinder::PopulationSize => {
            for v in [f.low, f.high] {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(DoeError::NonIntegerLevel {
                        name: f.name.clone(),
                        value: v,
                    });
                }
                if f.binder == FactorBinder::PopulationSize && v < 2.0 {
                    return Err(DoeError::BadPopulationSize {
                        name: f.name.clone(),
                        value: v,
                    });
                }
            }
            Ok(())
        }
    }
}

/// The eight standard-order runs over three factors.
pub fn full_factorial_plan(factors: [FactorSpec; 3]) -> Result<DoePlan, DoeError> {
    for f in &factors {
        check_factor(f)?;
    }
    for i in 0..3 {
        for j in i + 1..3 {
            if factors[i].binder == factors[j].binder {
                return Err(DoeError::DuplicateBinder(
                    factors[i].name.clone(),
                    factors[j].name.clone(),
                ));
            }
        }
    }
    let runs = (0..8)
        .map(|index| {
            let high = [index & 4 != 0, index & 2 != 0, index & 1 != 0];
            let mut levels = [0.0; 3];
            for (slot, (f, &h)) in levels.iter_mut().zip(factors.iter().zip(&high)) {
                *slot = if h { f.high } else { f.low };
            }
            DoeRun {
                index,
                high,
                levels,
            }
        })
        .collect();
    Ok(DoePlan { factors, runs })
}

/// effect_X = mean(responses where X high) - mean(responses where X low),
/// with interaction signs as products of the constituent factor signs.
pub fn compute_effects(responses: &[f64; 8]) -> [f64; 7] {
    let mut effects = [0.0f64; 7];
    for (i, &r) in responses.iter().enumerate() {
        let a = if i & 4 != 0 { 1.0 } else { -1.0 };
        let b = if i & 2 != 0 { 1.0 } else { -1.0 };
        let c = if i & 1 != 0 { 1.0 } else { -1.0 };
        let signs = [a, b, c, a * b, a * c, b * c, a * b * c];
        for (e, s) in effects.iter_mut().zip(signs) {
            *e += s * r / 4.0;
        }
    }
    effects
}

fn apply_level(factor: &FactorSpec, level: f64, cfg: &mut EdaConfig, ecfg: &mut EvalConfig) {
    match factor.binder {
        FactorBinder::CorrectionFactor => ecfg.correction_factor = level,
        FactorBinder::Iterations => cfg.n_iterations = level as usize,
        FactorBinder::PopulationSize => {
            cfg.population_size = level as usize;
            cfg.n_selected = (level as usize) / 2;
        }
    }
}

/// Executes all eight runs (each seeded as base seed + run index), takes the
/// chosen response from the final round's best individual, and computes the
/// effects.
pub fn run_doe(
    plan: &DoePlan,
    base_cfg: &EdaConfig,
    base_ecfg: &EvalConfig,
    inputs: &EdaInputs,
    response: ResponseKind,
) -> Result<EffectTable, DoeError> {
    let mut responses = [0.0f64; 8];
    let mut runs = Vec::with_capacity(8);
    for run in &plan.runs {
        let mut cfg = base_cfg.clone();
        let mut ecfg = base_ecfg.clone();
        for (factor, &level) in plan.factors.iter().zip(&run.levels) {
            apply_level(factor, level, &mut cfg, &mut ecfg);
        }
        cfg.seed = base_cfg.seed + run.index as u64;
        let records = run_eda(&cfg, &ecfg, inputs).map_err(|source| DoeError::RunFailed {
            run: run.index,
            source,
        })?;
        let best = records
            .last()
            .expect("run_eda returns at least one record")
            .best()
            .clone();
        let value = match response {
            ResponseKind::BestEval => best.eval.expect("records hold evaluated individuals"),
            ResponseKind::BestGe => {
                let ges = best.ge.as_ref().expect("records hold evaluated individuals");
                ges.iter().map(|&g| g as f64).sum::<f64>() / ges.len() as f64
            }
        };
        responses[run.index] = value;
        runs.push(RunSummary {
            run: run.clone(),
            best,
            response: value,
        });
    }
    Ok(EffectTable {
        responses,
        effects: compute_effects(&responses),
        runs,
    })
}
