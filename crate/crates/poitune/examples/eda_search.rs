//! Let the estimation-of-distribution optimizer pick the POI subset instead
//! of taking the k best graphic samples.
//!
//!     cargo run --example eda_search

use poitune::aes::LeakageModel;
use poitune::eda::{
    evaluate_single, run_eda, EdaConfig, EdaInputs, EvalConfig, GeAggregation, InitStrategy,
};
use poitune::poi::{normalize, sost, top_k_select};
use poitune::sim::{simulate, DeviceProfile, Implementation, KeyMode, LeakPoints, SimConfig};
use poitune::template::{class_labels, Scoring};

const KEY: [u8; 16] = [
    0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f,
    0x3c,
];

fn main() {
    let true_leaks = [50usize, 150, 250, 350, 450];
    let device = DeviceProfile {
        gain: 1.0,
        offset: 0.0,
        noise_sigma: 22.0,
        value_leaks: LeakPoints::uniform(true_leaks.to_vec(), 1.0),
        mask_leaks: LeakPoints::none(),
        baseline_seed: 3,
    };
    let sim = |n, key_mode, seed| {
        simulate(
            &device,
            &SimConfig {
                implementation: Implementation::Unprotected,
                n_traces: n,
                key_mode,
                byte_index: 0,
                n_samples: 500,
                seed,
            },
        )
        .unwrap()
    };
    let profiling = sim(5000, KeyMode::Random, 1000);
    let attack = sim(300, KeyMode::Fixed(KEY), 1001);

    let model = LeakageModel::HwSbox { byte_index: 0 };
    let labels = class_labels(&profiling, &model, None).unwrap();
    let graphic = normalize(&sost(&profiling, &labels).unwrap());

    let ecfg = EvalConfig {
        correction_factor: 10.0,
        eval_n_samples: None,
        ge_aggregation: GeAggregation::Product,
        n_attack: 200,
        key_space: 256,
        scoring: Scoring::Direct,
        seed: 0,
    };

    // Baseline: templates on the 20 top-scoring graphic samples.
    let mut baseline = top_k_select(&graphic, 20).unwrap();
    evaluate_single(&mut baseline, &profiling, &attack, &model, &ecfg).unwrap();
    println!(
        "top-20 baseline: eval {:+.3e}, ge {}, {} POIs",
        baseline.eval.unwrap(),
        baseline.ge.as_ref().unwrap()[0],
        baseline.n_poi()
    );

    // The optimizer samples POI subsets from per-bit marginals, keeps the
    // best half, and re-learns the marginals each round. Seeding the initial
    // probabilities from the graphic focuses the first population.
    let cfg = EdaConfig {
        population_size: 20,
        n_selected: 10,
        n_iterations: 20,
        seed: 0,
        init: InitStrategy::FromGraphic {
            graphic,
            base_p: 0.5,
        },
        elitism: true,
        p_floor: None,
        p_ceil: None,
        entropy_stop: None,
    };
    let inputs = EdaInputs {
        profiling: &profiling,
        attacks: vec![&attack],
        model,
    };
    let records = run_eda(&cfg, &ecfg, &inputs).unwrap();
    for record in &records {
        let best = record.best();
        println!(
            "iteration {:>2}: best eval {:+.3e}, ge {}, {} POIs",
            record.iteration,
            best.eval.unwrap(),
            best.ge.as_ref().unwrap()[0],
            best.n_poi()
        );
    }

    let best = records.last().unwrap().best();
    let picked = best.selected_indices();
    let covered = true_leaks.iter().filter(|l| picked.contains(l)).count();
    println!(
        "\nfinal selection ({} POIs) covers {covered} of {} true leak positions;\n\
         eval improved {:+.3e} -> {:+.3e}",
        picked.len(),
        true_leaks.len(),
        baseline.eval.unwrap(),
        best.eval.unwrap()
    );
}
