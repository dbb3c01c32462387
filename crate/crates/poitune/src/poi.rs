//! Point-of-interest selection graphics: SOST, SOSD, SNR, and absolute
//! Pearson correlation, plus min-max normalization and a top-k baseline
//! selector.
//!
//! All statistics use population variance. SOST uses the Welch-style
//! denominator `var_i/n_i + var_j/n_j`; class pairs (or samples) with a zero
//! denominator contribute zero instead of blowing up, since constant columns
//! carry no selectable signal.

use thiserror::Error;

use crate::eda::Individual;
use crate::trace::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphicMethod {
    Sost,
    Sosd,
    Snr,
    Correlation,
}

/// Per-sample selection statistic. `degenerate` marks a constant graphic
/// that normalization collapsed to all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGraphic {
    pub values: Vec<f64>,
    pub method: GraphicMethod,
    pub normalized: bool,
    pub degenerate: bool,
}

#[derive(Debug, Error)]
pub enum PoiError {
    #[error("{labels} labels for {traces} traces")]
    LabelCountMismatch { labels: usize, traces: usize },
    #[error("need at least 2 non-empty classes, found {0}")]
    TooFewClasses(usize),
    #[error("{hypotheses} hypothesis values for {traces} traces")]
    HypothesisCountMismatch { hypotheses: usize, traces: usize },
    #[error("cannot select {k} samples out of {t}")]
    BadSelectionCount { k: usize, t: usize },
}

struct ClassStats {
    n: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

fn class_stats(ts: &TraceSet, labels: &[usize]) -> Result<Vec<ClassStats>, PoiError> {
    if labels.len() != ts.n_traces() {
        return Err(PoiError::LabelCountMismatch {
            labels: labels.len(),
            traces: ts.n_traces(),
        });
    }
    let t = ts.n_samples();
    let n_buckets = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; n_buckets];
    let mut sums = vec![0.0f64; n_buckets * t];
    let mut sqsums = vec![0.0f64; n_buckets * t];
    for (i, &label) in labels.iter().enumerate() {
        counts[label] += 1;
        let row = ts.trace(i);
        let base = label * t;
        for (j, &v) in row.iter().enumerate() {
            let v = v as f64;
            sums[base + j] += v;
            sqsums[base + j] += v * v;
        }
    }
    let stats: Vec<ClassStats> = (0..n_buckets)
        .filter(|&c| counts[c] > 0)
        .map(|c| {
            let n = counts[c] as f64;
            let base = c * t;
            let mean: Vec<f64> = (0..t).map(|j| sums[base + j] / n).collect();
            let var: Vec<f64> = (0..t)
                .map(|j| (sqsums[base + j] / n - mean[j] * mean[j]).max(0.0))
                .collect();
            ClassStats { n, mean, var }
        })
        .collect();
    if stats.len() < 2 {
        return Err(PoiError::TooFewClasses(stats.len()));
    }
    Ok(stats)
}

/// Sum over unordered class pairs of squared mean difference over the
/// Welch denominator, per sample.
pub fn sost(ts: &TraceSet, labels: &[usize]) -> Result<SelectionGraphic, PoiError> {
    let stats = class_stats(ts, labels)?;
    let t = ts.n_samples();
    let mut values = vec![0.0f64; t];
    for (a, sa) in stats.iter().enumerate() {
        for sb in &stats[a + 1..] {
            for j in 0..t {
                let num = sa.mean[j] - sb.mean[j];
                let den = sa.var[j] / sa.n + sb.var[j] / sb.n;
                if den > 0.0 {
                    values[j] += num * num / den;
                }
            }
        }
    }
    Ok(SelectionGraphic {
        values,
        method: GraphicMethod::Sost,
        normalized: false,
        degenerate: false,
    })
}

/// Sum over unordered class pairs of squared mean difference, per sample.
pub fn sosd(ts: &TraceSet, labels: &[usize]) -> Result<SelectionGraphic, PoiError> {
    let stats = class_stats(ts, labels)?;
    let t = ts.n_samples();
    let mut values = vec![0.0f64; t];
    for (a, sa) in stats.iter().enumerate() {
        for sb in &stats[a + 1..] {
            for j in 0..t {
                let d = sa.mean[j] - sb.mean[j];
                values[j] += d * d;
            }
        }
    }
    Ok(SelectionGraphic {
        values,
        method: GraphicMethod::Sosd,
        normalized: false,
        degenerate: false,
    })
}

/// Variance of the class means over the mean of the class variances, per
/// sample; both moments are unweighted over the non-empty classes. Samples
/// with zero mean class variance map to 0.
pub fn snr(ts: &TraceSet, labels: &[usize]) -> Result<SelectionGraphic, PoiError> {
    let stats = class_stats(ts, labels)?;
    let t = ts.n_samples();
    let k = stats.len() as f64;
    let mut values = vec![0.0f64; t];
    for (j, slot) in values.iter_mut().enumerate() {
        let mean_of_means = stats.iter().map(|s| s.mean[j]).sum::<f64>() / k;
        let signal = stats
            .iter()
            .map(|s| {
                let d = s.mean[j] - mean_of_means;
                d * d
            })
            .sum::<f64>()
            / k;
        let noise = stats.iter().map(|s| s.var[j]).sum::<f64>() / k;
        if noise > 0.0 {
            *slot = signal / noise;
        }
    }
    Ok(SelectionGraphic {
        values,
        method: GraphicMethod::Snr,
        normalized: false,
        degenerate: false,
    })
}

/// Absolute Pearson correlation between each sample column and the
/// hypothesis vector; zero-variance columns (or hypothesis) map to 0.
pub fn correlation_graphic(
    ts: &TraceSet,
    hypothesis: &[f64],
) -> Result<SelectionGraphic, PoiError> {
    if hypothesis.len() != ts.n_traces() {
        return Err(PoiError::HypothesisCountMismatch {
            hypotheses: hypothesis.len(),
            traces: ts.n_traces(),
        });
    }
    let n = ts.n_traces() as f64;
    let t = ts.n_samples();
    let h_mean = hypothesis.iter().sum::<f64>() / n;
    let h_var: f64 = hypothesis.iter().map(|h| (h - h_mean) * (h - h_mean)).sum();
    let mut values = vec![0.0f64; t];
    if h_var > 0.0 {
        for (j, slot) in values.iter_mut().enumerate() {
            let col = ts.samples().column(j);
            let c_mean = col.iter().map(|&v| v as f64).sum::<f64>() / n;
            let mut cov = 0.0;
            let mut c_var = 0.0;
            for (&v, h) in col.iter().zip(hypothesis) {
                let dv = v as f64 - c_mean;
                cov += dv * (h - h_mean);
                c_var += dv * dv;
            }
            if c_var > 0.0 {
                *slot = (cov / (c_var * h_var).sqrt()).abs();
            }
        }
    }
    Ok(SelectionGraphic {
        values,
        method: GraphicMethod::Correlation,
        normalized: false,
        degenerate: false,
    })
}

/// Min-max rescale to [0,1]. A constant graphic yields all zeros with the
/// degenerate flag set, letting callers fall back to a default prior
/// instead of aborting.
pub fn normalize(g: &SelectionGraphic) -> SelectionGraphic {
    let min = g.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = g.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if g.values.is_empty() || min == max {
        return SelectionGraphic {
            values: vec![0.0; g.values.len()],
            method: g.method,
            normalized: true,
            degenerate: true,
        };
    }
    let span = max - min;
    SelectionGraphic {
        values: g.values.iter().map(|v| (v - min) / span).collect(),
        method: g.method,
        normalized: true,
        degenerate: false,
    }
}

/// Individual with ones at the k largest graphic values; ties prefer the
/// lower sample index.
pub fn top_k_select(g: &SelectionGraphic, k: usize) -> Result<Individual, PoiError> {
    let t = g.values.len();
    if k == 0 || k > t {
        return Err(PoiError::BadSelectionCount { k, t });
    }
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        g.values[b]
            .total_cmp(&g.values[a])
            .then(a.cmp(&b))
    });
    let mut bits = vec![false; t];
    for &i in &order[..k] {
        bits[i] = true;
    }
    Ok(Individual::from_bits(bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, DeviceProfile, Implementation, KeyMode, LeakPoints, SimConfig};
    use crate::trace::{SampleEncoding, FIELD_KEY, FIELD_PLAINTEXT};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn plain_set(rows: Vec<Vec<f32>>) -> TraceSet {
        let n = rows.len();
        let t = rows[0].len();
        let samples = Array2::from_shape_fn((n, t), |(i, j)| rows[i][j]);
        TraceSet::new(samples, SampleEncoding::Float32, vec![], vec![]).unwrap()
    }

    /// Two classes of 100 traces: means 0 and 1, population variance 1.
    fn two_class_set() -> (TraceSet, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            for i in 0..100 {
                let v = class as f32 + if i < 50 { -1.0 } else { 1.0 };
                rows.push(vec![v]);
                labels.push(class);
            }
        }
        (plain_set(rows), labels)
    }

    #[test]
    fn sost_matches_hand_computed_welch_value() {
        let (ts, labels) = two_class_set();
        let g = sost(&ts, &labels).unwrap();
        assert_abs_diff_eq!(g.values[0], 50.0, epsilon = 1e-9);
    }

    #[test]
    fn sosd_is_squared_mean_difference() {
        let (ts, labels) = two_class_set();
        let g = sosd(&ts, &labels).unwrap();
        assert_abs_diff_eq!(g.values[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_class_means_give_zero_graphics() {
        let rows = vec![vec![1.0], vec![3.0], vec![1.0], vec![3.0]];
        let ts = plain_set(rows);
        let labels = vec![0, 0, 1, 1];
        assert_eq!(sost(&ts, &labels).unwrap().values, vec![0.0]);
        assert_eq!(sosd(&ts, &labels).unwrap().values, vec![0.0]);
        assert_eq!(snr(&ts, &labels).unwrap().values, vec![0.0]);
    }

    #[test]
    fn single_class_is_rejected() {
        let ts = plain_set(vec![vec![1.0], vec![2.0]]);
        assert!(matches!(
            sost(&ts, &[3, 3]),
            Err(PoiError::TooFewClasses(1))
        ));
        assert!(matches!(
            snr(&ts, &[0, 0]),
            Err(PoiError::TooFewClasses(1))
        ));
    }

    #[test]
    fn constant_column_maps_to_zero_snr() {
        let rows = vec![vec![5.0, 0.0], vec![5.0, 1.0], vec![5.0, 0.0], vec![5.0, 3.0]];
        let ts = plain_set(rows);
        let g = snr(&ts, &[0, 0, 1, 1]).unwrap();
        assert_eq!(g.values[0], 0.0);
        assert!(g.values[1] > 0.0);
    }

    #[test]
    fn graphics_peak_at_the_simulated_leak_position() {
        let profile = DeviceProfile {
            gain: 1.0,
            offset: 0.3,
            noise_sigma: 0.5,
            value_leaks: LeakPoints::uniform(vec![13], 1.0),
            mask_leaks: LeakPoints::none(),
            baseline_seed: 5,
        };
        let cfg = SimConfig {
            implementation: Implementation::Unprotected,
            n_traces: 3000,
            key_mode: KeyMode::Fixed([7; 16]),
            byte_index: 0,
            n_samples: 40,
            seed: 21,
        };
        let ts = simulate(&profile, &cfg).unwrap();
        let pts = ts.byte16_column(FIELD_PLAINTEXT).unwrap();
        let keys = ts.byte16_column(FIELD_KEY).unwrap();
        let labels: Vec<usize> = (0..ts.n_traces())
            .map(|i| {
                crate::aes::hamming_weight(crate::aes::sbox(pts[i][0] ^ keys[i][0])) as usize
            })
            .collect();
        let hyp: Vec<f64> = labels.iter().map(|&l| l as f64).collect();

        for g in [
            sost(&ts, &labels).unwrap(),
            sosd(&ts, &labels).unwrap(),
            snr(&ts, &labels).unwrap(),
            correlation_graphic(&ts, &hyp).unwrap(),
        ] {
            let argmax = g
                .values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 13, "{:?} missed the leak", g.method);
        }
    }

    #[test]
    fn shuffled_labels_flatten_the_snr() {
        let profile = DeviceProfile {
            gain: 1.0,
            offset: 0.0,
            noise_sigma: 1.0,
            value_leaks: LeakPoints::uniform(vec![2], 1.0),
            mask_leaks: LeakPoints::none(),
            baseline_seed: 0,
        };
        let cfg = SimConfig {
            implementation: Implementation::Unprotected,
            n_traces: 10_000,
            key_mode: KeyMode::Random,
            byte_index: 0,
            n_samples: 5,
            seed: 3,
        };
        let ts = simulate(&profile, &cfg).unwrap();
        // Deterministic label scramble decoupled from the traces.
        let labels: Vec<usize> = (0..ts.n_traces()).map(|i| (i * 7 + 3) % 9).collect();
        let g = snr(&ts, &labels).unwrap();
        assert!(g.values.iter().all(|&v| v < 0.1), "{:?}", g.values);
    }

    #[test]
    fn correlation_is_one_for_matching_and_flipped_columns() {
        let rows = vec![vec![1.0, -1.0], vec![2.0, -2.0], vec![4.0, -4.0]];
        let ts = plain_set(rows);
        let hyp = vec![1.0, 2.0, 4.0];
        let g = correlation_graphic(&ts, &hyp).unwrap();
        assert_abs_diff_eq!(g.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.values[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn correlation_with_independent_hypothesis_is_small() {
        let n = 10_000;
        let rows: Vec<Vec<f32>> = (0..n).map(|i| vec![((i * 13 + 5) % 17) as f32]).collect();
        let ts = plain_set(rows);
        let hyp: Vec<f64> = (0..n).map(|i| ((i * 31 + 7) % 23) as f64).collect();
        let g = correlation_graphic(&ts, &hyp).unwrap();
        assert!(g.values[0] < 0.1);
    }

    #[test]
    fn normalize_rescales_and_flags_degenerate_input() {
        let g = SelectionGraphic {
            values: vec![2.0, 4.0, 6.0],
            method: GraphicMethod::Snr,
            normalized: false,
            degenerate: false,
        };
        let n = normalize(&g);
        assert_eq!(n.values, vec![0.0, 0.5, 1.0]);
        assert!(n.normalized && !n.degenerate);
        assert_eq!(normalize(&n), n);

        let flat = SelectionGraphic {
            values: vec![5.0; 3],
            method: GraphicMethod::Sost,
            normalized: false,
            degenerate: false,
        };
        let nf = normalize(&flat);
        assert_eq!(nf.values, vec![0.0; 3]);
        assert!(nf.degenerate);
    }

    #[test]
    fn top_k_breaks_ties_by_lower_index() {
        let g = SelectionGraphic {
            values: vec![0.1, 0.9, 0.9, 0.2],
            method: GraphicMethod::Sost,
            normalized: false,
            degenerate: false,
        };
        let ind = top_k_select(&g, 2).unwrap();
        assert_eq!(ind.selected_indices(), vec![1, 2]);
        assert_eq!(top_k_select(&g, 4).unwrap().n_poi(), 4);
        assert!(matches!(
            top_k_select(&g, 0),
            Err(PoiError::BadSelectionCount { k: 0, .. })
        ));
        assert!(matches!(
            top_k_select(&g, 5),
            Err(PoiError::BadSelectionCount { k: 5, .. })
        ));
    }

    #[test]
    fn graphics_ignore_trace_order_and_constant_shifts() {
        let (ts, labels) = two_class_set();
        let mut perm: Vec<usize> = (0..ts.n_traces()).collect();
        perm.reverse();
        let shuffled = ts.select(&perm);
        let shuffled_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let a = sost(&ts, &labels).unwrap();
        let b = sost(&shuffled, &shuffled_labels).unwrap();
        assert_abs_diff_eq!(a.values[0], b.values[0], epsilon = 1e-12);

        let shifted = plain_set(
            (0..ts.n_traces())
                .map(|i| vec![ts.samples()[(i, 0)] + 100.0])
                .collect(),
        );
        let c = sost(&shifted, &labels).unwrap();
        assert_abs_diff_eq!(a.values[0], c.values[0], epsilon = 1e-6);
    }
}
