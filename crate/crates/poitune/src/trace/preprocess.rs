//! Trace preprocessing: per-trace mean removal, moving-average lowpass,
//! per-sample standardization.

use ndarray::Array2;

use super::{SampleEncoding, TraceError, TraceSet};

/// Which transforms to apply. The order is fixed: zero-mean, then lowpass,
/// then standardize.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessSpec {
    /// Subtract each trace's own mean.
    pub zero_mean: bool,
    /// Per-sample-index z-score across the whole set, using the population
    /// standard deviation; constant sample columns map to exactly 0.
    pub standardize: bool,
    /// Centered moving-average width; 1 disables the filter. Windows are
    /// truncated at the trace edges (out-of-range neighbours contribute
    /// nothing) while the divisor stays at the full window width.
    pub lowpass_window: usize,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            zero_mean: false,
            standardize: false,
            lowpass_window: 1,
        }
    }
}

/// Applies the configured transforms and returns a new set. Any applied
/// transform produces FLOAT32 samples; an all-off spec returns a plain copy.
pub fn preprocess(ts: &TraceSet, spec: &PreprocessSpec) -> Result<TraceSet, TraceError> {
    if spec.lowpass_window == 0 {
        return Err(TraceError::LowpassWindowZero);
    }
    if spec.lowpass_window > ts.n_samples() {
        return Err(TraceError::LowpassWindowTooLarge {
            window: spec.lowpass_window,
            n_samples: ts.n_samples(),
        });
    }
    if !spec.zero_mean && !spec.standardize && spec.lowpass_window == 1 {
        return Ok(ts.clone());
    }

    let (n, t) = (ts.n_traces(), ts.n_samples());
    let mut data = Array2::<f64>::zeros((n, t));
    for i in 0..n {
        for j in 0..t {
            data[(i, j)] = ts.samples()[(i, j)] as f64;
        }
    }

    if spec.zero_mean {
        for mut row in data.outer_iter_mut() {
            let mean = row.sum() / t as f64;
            row.mapv_inplace(|v| v - mean);
        }
    }

    if spec.lowpass_window > 1 {
        let w = spec.lowpass_window;
        let left = (w - 1) / 2;
        let right = w / 2;
        let mut filtered = Array2::<f64>::zeros((n, t));
        for i in 0..n {
            for j in 0..t {
                let lo = j.saturating_sub(left);
                let hi = (j + right).min(t - 1);
                let mut sum = 0.0;
                for jj in lo..=hi {
                    sum += data[(i, jj)];
                }
                filtered[(i, j)] = sum / w as f64;
            }
        }
        data = filtered;
    }

    if spec.standardize {
        for j in 0..t {
            let mut col = data.column_mut(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            if var == 0.0 {
                col.fill(0.0);
            } else {
                let sd = var.sqrt();
                col.mapv_inplace(|v| (v - mean) / sd);
            }
        }
    }

    let samples = data.mapv(|v| v as f32);
    Ok(ts.with_samples(samples, SampleEncoding::Float32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn set_from(samples: Array2<f32>) -> TraceSet {
        TraceSet::new(samples, SampleEncoding::Float32, vec![], vec![]).unwrap()
    }

    #[test]
    fn zero_mean_centers_each_trace() {
        let ts = set_from(array![[1.0, 2.0, 3.0]]);
        let spec = PreprocessSpec {
            zero_mean: true,
            ..Default::default()
        };
        let out = preprocess(&ts, &spec).unwrap();
        assert_eq!(out.samples(), &array![[-1.0f32, 0.0, 1.0]]);
    }

    #[test]
    fn standardize_z_scores_each_column() {
        let ts = set_from(array![[0.0], [2.0]]);
        let spec = PreprocessSpec {
            standardize: true,
            ..Default::default()
        };
        let out = preprocess(&ts, &spec).unwrap();
        assert_eq!(out.samples(), &array![[-1.0f32], [1.0]]);
    }

    #[test]
    fn standardize_maps_constant_columns_to_zero() {
        let ts = set_from(array![[5.0, 1.0], [5.0, 3.0]]);
        let spec = PreprocessSpec {
            standardize: true,
            ..Default::default()
        };
        let out = preprocess(&ts, &spec).unwrap();
        assert_eq!(out.samples().column(0).to_vec(), vec![0.0f32, 0.0]);
    }

    #[test]
    fn lowpass_truncates_edge_windows() {
        let ts = set_from(array![[0.0, 3.0, 0.0, 3.0, 0.0]]);
        let spec = PreprocessSpec {
            lowpass_window: 3,
            ..Default::default()
        };
        let out = preprocess(&ts, &spec).unwrap();
        let row: Vec<f32> = out.trace(0).to_vec();
        assert_eq!(row, vec![1.0, 1.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn standardized_columns_have_unit_population_variance() {
        let samples = Array2::from_shape_fn((50, 4), |(i, j)| ((i * 7 + j * 13) % 11) as f32);
        let ts = set_from(samples);
        let spec = PreprocessSpec {
            zero_mean: true,
            standardize: true,
            lowpass_window: 2,
        };
        let out = preprocess(&ts, &spec).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = out.samples().column(j).iter().map(|&v| v as f64).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-6);
            assert!((var - 1.0).abs() < 1e-5 || var == 0.0);
        }
    }

    #[test]
    fn oversized_window_is_rejected() {
        let ts = set_from(array![[1.0, 2.0]]);
        let spec = PreprocessSpec {
            lowpass_window: 3,
            ..Default::default()
        };
        assert!(matches!(
            preprocess(&ts, &spec),
            Err(TraceError::LowpassWindowTooLarge { .. })
        ));
    }

    #[test]
    fn all_off_spec_is_identity() {
        let ts = set_from(array![[1.5, -2.5]]);
        let out = preprocess(&ts, &PreprocessSpec::default()).unwrap();
        assert_eq!(&out, &ts);
    }
}
