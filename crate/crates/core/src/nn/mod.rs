//! Small parameterised building blocks shared by the tokenizer and transformer.

use rand::Rng;

use crate::error::Result;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Affine map `x·W + b` with uniform `±1/√fan_in` initialisation.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = store.add(format!("{name}/w"), Tensor::uniform(&[fan_in, fan_out], bound, rng));
        let b = store.add(format!("{name}/b"), Tensor::uniform(&[1, fan_out], bound, rng));
        Self {
            w,
            b: Some(b),
            fan_in,
            fan_out,
        }
    }

    pub fn without_bias<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = store.add(format!("{name}/w"), Tensor::uniform(&[fan_in, fan_out], bound, rng));
        Self {
            w,
            b: None,
            fan_in,
            fan_out,
        }
    }

    /// Linear map whose weights and bias start at zero.
    pub fn zeroed<T: Scalar>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let w = store.add(format!("{name}/w"), Tensor::zeros(&[fan_in, fan_out]));
        let b = store.add(format!("{name}/b"), Tensor::zeros(&[1, fan_out]));
        Self {
            w,
            b: Some(b),
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, params: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(params, self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(params, b);
                tape.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Row-wise layer normalisation with a learned gain and bias.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize, eps: f64) -> Self {
        let gain = store.add(format!("{name}/gain"), Tensor::full(&[1, dim], T::one()));
        let bias = store.add(format!("{name}/bias"), Tensor::zeros(&[1, dim]));
        Self { gain, bias, eps }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, params: &ParamStore<T>, x: Var) -> Result<Var> {
        let n = tape.layer_norm_rows(x, self.eps);
        let g = tape.param(params, self.gain);
        let b = tape.param(params, self.bias);
        let y = tape.mul_row(n, g)?;
        tape.add_row(y, b)
    }
}
