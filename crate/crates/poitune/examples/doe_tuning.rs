//! Quantify how the optimizer's knobs matter with a 2^3 factorial design:
//! eight runs over (correction factor, iterations, population size), then
//! main and interaction effects on the best fitness.
//!
//!     cargo run --example doe_tuning

use poitune::aes::LeakageModel;
use poitune::doe::{
    full_factorial_plan, run_doe, FactorBinder, FactorSpec, ResponseKind, EFFECT_NAMES,
};
use poitune::eda::{EdaConfig, EdaInputs, EvalConfig, GeAggregation, InitStrategy};
use poitune::sim::{simulate, DeviceProfile, Implementation, KeyMode, LeakPoints, SimConfig};
use poitune::template::Scoring;

const KEY: [u8; 16] = [
    0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f,
    0x3c,
];

fn main() {
    let device = DeviceProfile {
        gain: 1.0,
        offset: 0.0,
        noise_sigma: 8.0,
        value_leaks: LeakPoints::uniform(vec![30, 90, 150], 1.0),
        mask_leaks: LeakPoints::none(),
        baseline_seed: 1,
    };
    let sim = |n, key_mode, seed| {
        simulate(
            &device,
            &SimConfig {
                implementation: Implementation::Unprotected,
                n_traces: n,
                key_mode,
                byte_index: 0,
                n_samples: 180,
                seed,
            },
        )
        .unwrap()
    };
    let profiling = sim(4000, KeyMode::Random, 77);
    let attack = sim(250, KeyMode::Fixed(KEY), 78);

    let plan = full_factorial_plan([
        FactorSpec {
            name: "CF".into(),
            low: 1.0,
            high: 10.0,
            binder: FactorBinder::CorrectionFactor,
        },
        FactorSpec {
            name: "ITER".into(),
            low: 4.0,
            high: 8.0,
            binder: FactorBinder::Iterations,
        },
        FactorSpec {
            name: "POP".into(),
            low: 10.0,
            high: 20.0,
            binder: FactorBinder::PopulationSize,
        },
    ])
    .unwrap();

    // Factor levels overwrite these bases per run; each run reseeds as
    // base seed + run index.
    let base_cfg = EdaConfig {
        population_size: 10,
        n_selected: 5,
        n_iterations: 4,
        seed: 5,
        init: InitStrategy::Uniform { p: 0.1 },
        elitism: true,
        p_floor: None,
        p_ceil: None,
        entropy_stop: None,
    };
    let base_ecfg = EvalConfig {
        correction_factor: 1.0,
        eval_n_samples: None,
        ge_aggregation: GeAggregation::Product,
        n_attack: 150,
        key_space: 256,
        scoring: Scoring::Direct,
        seed: 5,
    };
    let inputs = EdaInputs {
        profiling: &profiling,
        attacks: vec![&attack],
        model: LeakageModel::HwSbox { byte_index: 0 },
    };
    let table = run_doe(&plan, &base_cfg, &base_ecfg, &inputs, ResponseKind::BestEval).unwrap();

    println!(" run   CF  ITER  POP      best eval   ge  n_POI");
    for summary in &table.runs {
        println!(
            "{:>4}  {:>3}  {:>4}  {:>3}  {:>13.4e}  {:>3}  {:>5}",
            summary.run.index + 1,
            summary.run.levels[0],
            summary.run.levels[1],
            summary.run.levels[2],
            summary.response,
            summary.best.ge.as_ref().unwrap()[0],
            summary.best.n_poi()
        );
    }

    println!("\neffects on the best eval (high level minus low level):");
    for (name, effect) in EFFECT_NAMES.iter().zip(table.effects) {
        println!("  {name:>3}: {effect:+.4e}");
    }
    let dominant = EFFECT_NAMES
        .iter()
        .zip(table.effects)
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    println!("largest influence: {} ({:+.3e})", dominant.0, dominant.1);
}
