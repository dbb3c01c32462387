//! Result emission: fixed-width scientific formatting, the CSV layouts the
//! tool reports in, and run manifests that reproduce a run when fed back in
//! as a config file.
//!
//! CSVs are comma-separated with LF line ends and purely numeric or
//! identifier fields, so no quoting is ever required.

use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::doe::{DoePlan, EffectTable, EFFECT_NAMES};
use crate::eda::{Individual, IterationRecord};
use crate::poi::SelectionGraphic;
use crate::template::AttackResult;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("individual {index} has not been evaluated")]
    MissingEvaluation { index: usize },
    #[error("individuals disagree on device count")]
    MixedDeviceCounts,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Six significant digits, upper-case exponent marker, explicit exponent
/// sign, at least two exponent digits: -0.5078125 -> "-5.07813E-01".
///
/// Rounds half away from zero (report convention), which differs from the
/// standard formatter's ties-to-even on exact midpoints such as the example
/// above.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000E+00".to_string();
    }
    // 30 mantissa decimals is exact or correctly rounded far beyond the
    // digit we round at.
    let s = format!("{x:.30E}");
    let body = s.strip_prefix('-').unwrap_or(&s);
    let (mantissa, exponent) = body.split_once('E').expect("UpperExp emits an exponent");
    let mut exp: i32 = exponent.parse().expect("exponent is an integer");
    let mut digits: Vec<u8> = mantissa
        .bytes()
        .filter(|b| *b != b'.')
        .map(|b| b - b'0')
        .collect();
    if digits[6] >= 5 {
        let mut i = 5;
        loop {
            if digits[i] < 9 {
                digits[i] += 1;
                break;
            }
            digits[i] = 0;
            if i == 0 {
                digits[0] = 1;
                exp += 1;
                break;
            }
            i -= 1;
        }
    }
    let sign = if x < 0.0 { "-" } else { "" };
    let esign = if exp < 0 { '-' } else { '+' };
    let d = &digits[..6];
    format!(
        "{sign}{}.{}{}{}{}{}E{esign}{:02}",
        d[0],
        d[1],
        d[2],
        d[3],
        d[4],
        d[5],
        exp.unsigned_abs()
    )
}

fn ge_of(ind: &Individual, index: usize) -> Result<&[u32], ReportError> {
    ind.ge
        .as_deref()
        .ok_or(ReportError::MissingEvaluation { index })
}

/// One ranked population as CSV: `Ind,Eval,n_POI,ge` with `Ind` 1-based, or
/// `ge_D1..ge_Dk` columns when the evaluation spanned several devices. Rows
/// are ordered by descending Eval.
pub fn iteration_csv(population: &[Individual]) -> Result<String, ReportError> {
    if population.is_empty() {
        return Err(ReportError::EmptyPopulation);
    }
    let n_devices = ge_of(&population[0], 0)?.len();
    let mut rows: Vec<&Individual> = population.iter().collect();
    rows.sort_by(|a, b| {
        let ea = a.eval.unwrap_or(f64::NEG_INFINITY);
        let eb = b.eval.unwrap_or(f64::NEG_INFINITY);
        eb.total_cmp(&ea)
    });

    let mut out = String::from("Ind,Eval,n_POI");
    if n_devices == 1 {
        out.push_str(",ge");
    } else {
        for d in 1..=n_devices {
            out.push_str(&format!(",ge_D{d}"));
        }
    }
    out.push('\n');
    for (i, ind) in rows.iter().enumerate() {
        let eval = ind.eval.ok_or(ReportError::MissingEvaluation { index: i })?;
        let ges = ge_of(ind, i)?;
        if ges.len() != n_devices {
            return Err(ReportError::MixedDeviceCounts);
        }
        out.push_str(&format!("{},{},{}", i + 1, format_sci(eval), ind.n_poi()));
        for g in ges {
            out.push_str(&format!(",{g}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// One file per round, `iteration_000.csv` onward, in `dir`.
pub fn write_iteration_csvs(
    dir: &Path,
    records: &[IterationRecord],
) -> Result<Vec<PathBuf>, ReportError> {
    let mut paths = Vec::with_capacity(records.len());
    for rec in records {
        let path = dir.join(format!("iteration_{:03}.csv", rec.iteration));
        std::fs::write(&path, iteration_csv(&rec.population)?)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Rank of the correct key as the attack consumes traces one at a time:
/// `n_traces_used,rank`.
pub fn ge_curve_csv(result: &AttackResult) -> String {
    let mut out = String::from("n_traces_used,rank\n");
    for (i, rank) in result.ge_curve.iter().enumerate() {
        out.push_str(&format!("{},{rank}\n", i + 1));
    }
    out
}

/// A selection graphic as `sample_index,value` rows.
pub fn graphic_csv(graphic: &SelectionGraphic) -> String {
    let mut out = String::from("sample_index,value\n");
    for (i, v) in graphic.values.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", format_sci(*v)));
    }
    out
}

/// The eight factorial runs with their responses: factor levels by name,
/// then the winning subset's size, its rank(s), and its Eval.
pub fn doe_runs_csv(plan: &DoePlan, table: &EffectTable) -> Result<String, ReportError> {
    let first = table.runs.first().ok_or(ReportError::EmptyPopulation)?;
    let n_devices = ge_of(&first.best, 0)?.len();
    let mut out = format!(
        "{},{},{},n_POI",
        plan.factors[0].name, plan.factors[1].name, plan.factors[2].name
    );
    if n_devices == 1 {
        out.push_str(",ge");
    } else {
        for d in 1..=n_devices {
            out.push_str(&format!(",ge_D{d}"));
        }
    }
    out.push_str(",Eval\n");
    for (i, summary) in table.runs.iter().enumerate() {
        let eval = summary
            .best
            .eval
            .ok_or(ReportError::MissingEvaluation { index: i })?;
        let ges = ge_of(&summary.best, i)?;
        if ges.len() != n_devices {
            return Err(ReportError::MixedDeviceCounts);
        }
        for level in summary.run.levels {
            out.push_str(&format!("{level},"));
        }
        out.push_str(&format!("{}", summary.best.n_poi()));
        for g in ges {
            out.push_str(&format!(",{g}"));
        }
        out.push_str(&format!(",{}\n", format_sci(eval)));
    }
    Ok(out)
}

/// Main and interaction effects as `effect,value` rows.
pub fn doe_effects_csv(table: &EffectTable) -> String {
    let mut out = String::from("effect,value\n");
    for (name, value) in EFFECT_NAMES.iter().zip(table.effects) {
        out.push_str(&format!("{name},{}\n", format_sci(value)));
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Everything needed to reproduce a run. `settings` holds the fully resolved
/// configuration as (section, key, value) triples; rendering produces a valid
/// config file whose extra `[manifest]` section records provenance that the
/// parser ignores on re-runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub subcommand: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// (path as given, sha256 of contents) per input file.
    pub inputs: Vec<(String, String)>,
    pub settings: Vec<(String, String, String)>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::from("# run manifest; feed back via --config to reproduce\n");
        let mut current = String::new();
        let mut first = true;
        for (section, key, value) in &self.settings {
            if first || *section != current {
                out.push_str(&format!("\n[{section}]\n"));
                current = section.clone();
                first = false;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out.push_str("\n[manifest]\n");
        out.push_str(&format!("version = {}\n", self.version));
        out.push_str(&format!("subcommand = {}\n", self.subcommand));
        out.push_str(&format!("started_unix = {}\n", self.started_unix));
        out.push_str(&format!("finished_unix = {}\n", self.finished_unix));
        out.push_str("rank_base = 1\n");
        for (i, (path, digest)) in self.inputs.iter().enumerate() {
            out.push_str(&format!("input_{i}_path = {path}\n"));
            out.push_str(&format!("input_{i}_sha256 = {digest}\n"));
        }
        out
    }
}
