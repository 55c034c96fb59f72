//! 1-D resampling along an axis, expressed as a constant `n_out × n_in`
//! weight matrix so it composes with the tape's matmul rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpMode {
    /// Piecewise-linear with half-pixel centres (no corner alignment).
    Linear,
    /// Adaptive average pooling: output `i` averages inputs
    /// `floor(i·n_in/n_out) .. ceil((i+1)·n_in/n_out)`.
    Area,
}

pub fn interp_matrix<T: Scalar>(n_in: usize, n_out: usize, mode: InterpMode) -> Result<Tensor<T>> {
    if n_in == 0 || n_out == 0 {
        return Err(Error::InvalidArgument(format!(
            "interpolation between {n_in} and {n_out} positions"
        )));
    }
    let mut w = vec![0.0f64; n_out * n_in];
    match mode {
        InterpMode::Area => {
            for i in 0..n_out {
                let start = (i * n_in) / n_out;
                let end = ((i + 1) * n_in).div_ceil(n_out);
                let inv = 1.0 / (end - start) as f64;
                for j in start..end {
                    w[i * n_in + j] = inv;
                }
            }
        }
        InterpMode::Linear => {
            let ratio = n_in as f64 / n_out as f64;
            for i in 0..n_out {
                let src = ((i as f64 + 0.5) * ratio - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(n_in - 1);
                let hi = (lo + 1).min(n_in - 1);
                let frac = src - lo as f64;
                w[i * n_in + lo] += 1.0 - frac;
                w[i * n_in + hi] += frac;
            }
        }
    }
    Tensor::new(vec![n_out, n_in], w.into_iter().map(T::of).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_is_identity() {
        for mode in [InterpMode::Linear, InterpMode::Area] {
            let w = interp_matrix::<f64>(7, 7, mode).unwrap();
            for i in 0..7 {
                for j in 0..7 {
                    assert_eq!(w.at(i, j), if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn area_to_one_is_mean() {
        let w = interp_matrix::<f64>(5, 1, InterpMode::Area).unwrap();
        assert!(w.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn area_four_to_two_pairs() {
        let w = interp_matrix::<f64>(4, 2, InterpMode::Area).unwrap();
        assert_eq!(w.data(), &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn linear_rows_sum_to_one() {
        for (a, b) in [(1, 5), (2, 4), (4, 6), (6, 9), (9, 17), (17, 3)] {
            let w = interp_matrix::<f64>(a, b, InterpMode::Linear).unwrap();
            for i in 0..b {
                let s: f64 = w.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_two_to_four() {
        let w = interp_matrix::<f64>(2, 4, InterpMode::Linear).unwrap();
        assert_eq!(w.data(), &[1.0, 0.0, 0.75, 0.25, 0.25, 0.75, 0.0, 1.0]);
    }
}
