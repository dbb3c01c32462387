//! Template-attack evaluation toolkit: synthetic AES leakage simulation,
//! point-of-interest selection graphics, Gaussian template attacks, and an
//! estimation-of-distribution search over POI subsets.
//!
//! The runnable examples are the best entry point, one per capability:
//!
//! - `simulate_traces`: device profiles, trace generation, SCTF round trips
//! - `poi_graphics`: SOST/SOSD/SNR/correlation selection statistics
//! - `template_attack`: template building, key ranking, guessing entropy
//! - `masked_attack`: mask-marginalized templates vs first-order ones
//! - `eda_search`: the optimizer against a top-k graphic baseline
//! - `portability`: product-mode fitness across a four-device clone family
//! - `doe_tuning`: 2^3 factorial effects of the optimizer parameters
//!
//! The same capabilities are scriptable through the `poitune` binary
//! (`simulate`, `poi-graph`, `attack`, `eda`, `doe`); every run writes a
//! manifest config that reproduces it exactly.

pub mod aes;
pub mod cli;
pub mod config;
pub mod doe;
pub mod eda;
pub mod poi;
pub mod report;
pub mod sim;
pub mod template;
pub mod trace;
