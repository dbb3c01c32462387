//! Profile on one device and attack four manufactured clones of it. The
//! product-mode fitness only rewards selections that transfer to every
//! device.
//!
//!     cargo run --example portability

use poitune::aes::LeakageModel;
use poitune::eda::{run_eda, EdaConfig, EdaInputs, EvalConfig, GeAggregation, InitStrategy};
use poitune::poi::{normalize, sost};
use poitune::sim::{
    make_clone_family, simulate, DeviceProfile, Implementation, KeyMode, LeakPoints, SimConfig,
};
use poitune::template::{class_labels, Scoring};

const KEY: [u8; 16] = [
    0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f,
    0x3c,
];

fn main() {
    let base = DeviceProfile {
        gain: 1.0,
        offset: 0.0,
        noise_sigma: 6.0,
        value_leaks: LeakPoints::uniform(vec![20, 60, 100, 140, 180], 1.0),
        mask_leaks: LeakPoints::none(),
        baseline_seed: 3,
    };
    // Four devices: the base plus three clones with jittered gain, offset,
    // and noise. Device 1 is the profiling device.
    let family = make_clone_family(&base, 4, 7000, 0.15, 0.10, 0.20).unwrap();
    for (d, device) in family.iter().enumerate() {
        println!(
            "device {}: gain {:.3}, offset {:+.3}, noise {:.3}",
            d + 1,
            device.gain,
            device.offset,
            device.noise_sigma
        );
    }

    let sim = |device: &DeviceProfile, n, key_mode, seed| {
        simulate(
            device,
            &SimConfig {
                implementation: Implementation::Unprotected,
                n_traces: n,
                key_mode,
                byte_index: 0,
                n_samples: 200,
                seed,
            },
        )
        .unwrap()
    };
    let profiling = sim(&family[0], 3000, KeyMode::Random, 3000);
    let attacks: Vec<_> = family
        .iter()
        .enumerate()
        .map(|(d, device)| sim(device, 300, KeyMode::Fixed(KEY), 3001 + d as u64))
        .collect();

    let model = LeakageModel::HwSbox { byte_index: 0 };
    let labels = class_labels(&profiling, &model, None).unwrap();
    let graphic = normalize(&sost(&profiling, &labels).unwrap());

    let ecfg = EvalConfig {
        correction_factor: 10.0,
        eval_n_samples: None,
        // Product of the four normalized ranks: one bad device ruins the
        // score, so the search cannot overfit the profiling device.
        ge_aggregation: GeAggregation::Product,
        n_attack: 200,
        key_space: 256,
        scoring: Scoring::Direct,
        seed: 0,
    };
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
        attacks: attacks.iter().collect(),
        model,
    };
    let records = run_eda(&cfg, &ecfg, &inputs).unwrap();

    println!();
    for record in records.iter().step_by(4) {
        let best = record.best();
        println!(
            "iteration {:>2}: eval {:+.3e}, per-device ranks {:?}, {} POIs",
            record.iteration,
            best.eval.unwrap(),
            best.ge.as_ref().unwrap(),
            best.n_poi()
        );
    }

    let best = records.last().unwrap().best();
    println!(
        "\nfinal POIs {:?} rank the key first on all {} devices: {}",
        best.selected_indices(),
        attacks.len(),
        best.ge.as_ref().unwrap().iter().all(|&g| g == 1)
    );
}
