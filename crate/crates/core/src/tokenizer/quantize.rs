use crate::error::{Error, Result};
use crate::numerics::{interp, InterpMode, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Index of the nearest code (squared Euclidean distance) for every row of
/// `f`; ties go to the lowest index.
pub fn quantize<T: Scalar>(f: &Tensor<T>, codebook: &Tensor<T>) -> Result<Vec<usize>> {
    let (v, c) = (codebook.rows(), codebook.cols());
    if v == 0 {
        return Err(Error::InvalidArgument("empty codebook".into()));
    }
    if f.cols() != c {
        return Err(Error::shape(
            "quantize",
            format!("latent width {} vs code width {c}", f.cols()),
        ));
    }
    Ok((0..f.rows())
        .map(|i| {
            let row = f.row(i);
            let mut best = 0;
            let mut best_d = T::infinity();
            for k in 0..v {
                let mut d = T::zero();
                for (a, b) in row.iter().zip(codebook.row(k)) {
                    let t = *a - *b;
                    d += t * t;
                }
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Area (average) resampling of the latent rows to `n_k` rows.
pub fn downsample<T: Scalar>(f: &Tensor<T>, n_k: usize) -> Result<Tensor<T>> {
    resample(f, n_k, InterpMode::Area, true)
}

/// Linear resampling of quantized rows back up to `n` rows.
pub fn upsample<T: Scalar>(q: &Tensor<T>, n: usize) -> Result<Tensor<T>> {
    resample(q, n, InterpMode::Linear, false)
}

pub(crate) fn resample<T: Scalar>(x: &Tensor<T>, n_out: usize, mode: InterpMode, shrink: bool) -> Result<Tensor<T>> {
    let n = x.rows();
    if n_out == 0 || (shrink && n_out > n) || (!shrink && n_out < n) {
        return Err(Error::InvalidArgument(format!("cannot resample {n} rows to {n_out}")));
    }
    if n_out == n {
        return Ok(x.clone());
    }
    interp::interp_matrix::<T>(n, n_out, mode)?.matmul(&x.clone().reshape(&[n, x.cols()])?)
}

/// `‖sg(f) − q‖² + β‖f − sg(q)‖²`, summed over columns and averaged over rows.
pub fn vq_loss<T: Scalar>(tape: &mut Tape<T>, f: Var, q: Var, commitment: f64) -> Result<Var> {
    let rows = tape.shape(f).0;
    let fs = tape.detach(f);
    let qs = tape.detach(q);
    let a = tape.sub(fs, q)?;
    let a = tape.sum_squares(a)?;
    let b = tape.sub(f, qs)?;
    let b = tape.sum_squares(b)?;
    let b = tape.scale(b, T::of(commitment));
    let total = tape.add(a, b)?;
    Ok(tape.scale(total, T::of(1.0 / rows as f64)))
}

/// Per-code emission counts since the last reset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeUsage {
    counts: Vec<u64>,
}

impl CodeUsage {
    pub fn new(codebook_size: usize) -> Self {
        Self {
            counts: vec![0; codebook_size],
        }
    }

    pub fn record(&mut self, tokens: &[usize]) {
        for &t in tokens {
            self.counts[t] += 1;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn used(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn dead(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&k| self.counts[k] == 0).collect()
    }

    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;
    use rand::SeedableRng;

    #[test]
    fn exact_match_and_ties() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cb = Tensor::<f64>::randn(&[16, 3], 1.0, &mut rng);
        let row = Tensor::new(vec![1, 3], cb.row(7).to_vec()).unwrap();
        assert_eq!(quantize(&row, &cb).unwrap(), vec![7]);

        let mut cb = Tensor::<f64>::full(&[6, 2], 10.0);
        cb.row_mut(2).copy_from_slice(&[1.0, 0.0]);
        cb.row_mut(5).copy_from_slice(&[-1.0, 0.0]);
        let origin = Tensor::zeros(&[1, 2]);
        assert_eq!(quantize(&origin, &cb).unwrap(), vec![2]);
    }

    #[test]
    fn downsample_identity_mean_and_pairs() {
        let f = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 8.0], vec![7.0, 0.0]]).unwrap();
        assert_eq!(downsample(&f, 4).unwrap(), f);
        assert_eq!(downsample(&f, 1).unwrap().data(), &[4.0, 3.5]);
        assert_eq!(downsample(&f, 2).unwrap().data(), &[2.0, 3.0, 6.0, 4.0]);
        assert!(downsample(&f, 5).is_err());
        assert!(downsample(&f, 0).is_err());
    }

    #[test]
    fn vq_loss_scalar_case() {
        let mut tape = Tape::<f64>::new();
        let f = tape.constant(Tensor::scalar(1.0));
        let q = tape.constant(Tensor::scalar(0.0));
        let l = vq_loss(&mut tape, f, q, 0.25).unwrap();
        assert_eq!(tape.value(l).data()[0], 1.25);
        let l = vq_loss(&mut tape, f, f, 0.25).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);
    }

    #[test]
    fn vq_loss_gradients_split_between_codebook_and_encoder() {
        let mut tape = Tape::<f64>::new();
        let f = tape.constant(Tensor::scalar(1.0));
        let q = tape.constant(Tensor::scalar(0.0));
        let l = vq_loss(&mut tape, f, q, 0.25).unwrap();
        let g = tape.backward(l).unwrap();
        // d/df of 0.25 (f - q)^2 and d/dq of (f - q)^2
        assert_eq!(g.wrt(f).unwrap().data()[0], 0.5);
        assert_eq!(g.wrt(q).unwrap().data()[0], -2.0);
    }
}
