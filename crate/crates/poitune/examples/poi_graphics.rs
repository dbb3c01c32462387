//! Compare the four point-of-interest selection graphics on one profiling
//! set and show where each one puts its mass.
//!
//!     cargo run --example poi_graphics

use poitune::aes::{hamming_weight, sbox, LeakageModel};
use poitune::poi::{correlation_graphic, normalize, snr, sosd, sost, top_k_select};
use poitune::sim::{simulate, DeviceProfile, Implementation, KeyMode, LeakPoints, SimConfig};
use poitune::template::class_labels;
use poitune::trace::FIELD_PLAINTEXT;

fn main() {
    let true_leaks = vec![30, 90, 150, 210, 270];
    let device = DeviceProfile {
        gain: 1.0,
        offset: 0.0,
        noise_sigma: 2.0,
        value_leaks: LeakPoints::uniform(true_leaks.clone(), 1.0),
        mask_leaks: LeakPoints::none(),
        baseline_seed: 7,
    };
    let profiling = simulate(
        &device,
        &SimConfig {
            implementation: Implementation::Unprotected,
            n_traces: 5000,
            key_mode: KeyMode::Random,
            byte_index: 0,
            n_samples: 300,
            seed: 9,
        },
    )
    .unwrap();
    println!("true leak positions: {true_leaks:?}\n");

    let model = LeakageModel::HwSbox { byte_index: 0 };
    let labels = class_labels(&profiling, &model, None).unwrap();

    // Correlation ranks samples against a per-trace hypothesis instead of
    // class statistics; build it from the same leakage model.
    let keys = profiling.byte16_column("key").unwrap();
    let plaintexts = profiling.byte16_column(FIELD_PLAINTEXT).unwrap();
    let hypothesis: Vec<f64> = keys
        .iter()
        .zip(&plaintexts)
        .map(|(k, p)| hamming_weight(sbox(p[0] ^ k[0])) as f64)
        .collect();

    let graphics = [
        ("SOST", sost(&profiling, &labels).unwrap()),
        ("SOSD", sosd(&profiling, &labels).unwrap()),
        ("SNR", snr(&profiling, &labels).unwrap()),
        ("|corr|", correlation_graphic(&profiling, &hypothesis).unwrap()),
    ];

    for (name, graphic) in &graphics {
        let scaled = normalize(graphic);
        let top = top_k_select(&scaled, 5).unwrap();
        let picked = top.selected_indices();
        let hits = picked.iter().filter(|i| true_leaks.contains(i)).count();
        println!("{name:>6}: top-5 {picked:?}  ({hits}/5 true leak positions)");
    }

    // Normalization is flagged on the graphic itself.
    let scaled = normalize(&graphics[0].1);
    println!(
        "\nnormalized SOST: min {:.3}, max {:.3}, normalized={} degenerate={}",
        scaled.values.iter().cloned().fold(f64::INFINITY, f64::min),
        scaled.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        scaled.normalized,
        scaled.degenerate,
    );
}
