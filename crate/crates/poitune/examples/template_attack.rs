//! Profile a device, build Gaussian templates on a handful of samples, and
//! recover a key byte from a fixed-key attack set.
//!
//!     cargo run --example template_attack

use poitune::aes::LeakageModel;
use poitune::eda::Individual;
use poitune::sim::{simulate, DeviceProfile, Implementation, KeyMode, LeakPoints, SimConfig};
use poitune::template::{build_templates, guessing_entropy, rank_keys, Scoring};

const KEY: [u8; 16] = [
    0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f,
    0x3c,
];

fn main() {
    let device = DeviceProfile {
        gain: 1.0,
        offset: 0.0,
        noise_sigma: 4.0,
        value_leaks: LeakPoints::uniform(vec![25, 75, 125], 1.0),
        mask_leaks: LeakPoints::none(),
        baseline_seed: 2,
    };
    let sim = |n, key_mode, seed| {
        simulate(
            &device,
            &SimConfig {
                implementation: Implementation::Unprotected,
                n_traces: n,
                key_mode,
                byte_index: 0,
                n_samples: 150,
                seed,
            },
        )
        .unwrap()
    };
    let profiling = sim(6000, KeyMode::Random, 100);
    let attack = sim(200, KeyMode::Fixed(KEY), 101);

    let model = LeakageModel::HwSbox { byte_index: 0 };
    let poi = Individual::from_indices(150, &[25, 75, 125]).unwrap();
    let templates = build_templates(&profiling, &model, &poi, None).unwrap();
    println!(
        "built {} class templates on {} POIs",
        templates.templates.len(),
        poi.n_poi()
    );

    let result = rank_keys(&attack, &templates).unwrap();
    println!(
        "correct key byte 0x{:02x} ranked {} of 256",
        KEY[0], result.correct_rank
    );
    println!(
        "top guesses: {:02x?}",
        &result.guessing_vector[..5.min(result.guessing_vector.len())]
    );

    // The rank-vs-traces curve shows how much attack data was needed.
    print!("rank after   ");
    for used in [1, 2, 5, 10, 20, 50, 100, 200] {
        print!("{used}:{}  ", result.ge_curve[used - 1]);
    }
    println!("traces");

    // Averaging over resampled attack subsets gives the guessing entropy.
    for n_attack in [5, 20, 80] {
        let ge = guessing_entropy(
            &profiling,
            &attack,
            &model,
            &poi,
            n_attack,
            10,
            7,
            &Scoring::Direct,
        )
        .unwrap();
        println!("guessing entropy with {n_attack:>3} traces per experiment: {ge:.1}");
    }
}
