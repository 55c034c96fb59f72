//! Catalog of every differentiable primitive on the tape, each wrapped as a
//! scalar objective over random inputs so it can be fed straight to
//! [`check_gradients_with`](crate::numerics::check_gradients_with).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::{InterpMode, ParamStore, Tape, Tensor, Var};

pub type BuildFn = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

pub struct Primitive {
    pub name: &'static str,
    /// Input shapes (rows, cols).
    pub inputs: Vec<(usize, usize)>,
    /// Dropout needs a training tape.
    pub train: bool,
    pub build: BuildFn,
}

impl Primitive {
    fn new(name: &'static str, inputs: &[(usize, usize)], build: BuildFn) -> Self {
        Self {
            name,
            inputs: inputs.to_vec(),
            train: false,
            build,
        }
    }

    /// Random inputs registered as parameters `in0, in1, ...`.
    pub fn random_inputs(&self, seed: u64) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        for (i, &(r, c)) in self.inputs.iter().enumerate() {
            store.add(format!("in{i}"), Tensor::randn(&[r, c], 1.0, &mut rng));
        }
        store
    }

    /// Scalar objective `Σ primitive(inputs) ⊙ W` for a fixed random `W`.
    pub fn objective(&self, tape: &mut Tape<f64>, params: &ParamStore<f64>) -> Result<Var> {
        let inputs: Vec<Var> = params.ids().map(|id| tape.param(params, id)).collect();
        let out = (self.build)(tape, &inputs)?;
        let (r, c) = tape.shape(out);
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE ^ (r * 131 + c) as u64);
        let w = tape.constant(Tensor::randn(&[r, c], 1.0, &mut rng));
        let prod = tape.mul(out, w)?;
        Ok(tape.sum_all(prod))
    }
}

/// Every primitive the model stack differentiates through.
pub fn primitive_set() -> Vec<Primitive> {
    let mut v = vec![
        Primitive::new("matmul", &[(3, 4), (4, 2)], |t, x| t.matmul(x[0], x[1])),
        Primitive::new("add", &[(3, 4), (3, 4)], |t, x| t.add(x[0], x[1])),
        Primitive::new("sub", &[(3, 4), (3, 4)], |t, x| t.sub(x[0], x[1])),
        Primitive::new("mul", &[(3, 4), (3, 4)], |t, x| t.mul(x[0], x[1])),
        Primitive::new("add_row", &[(3, 4), (1, 4)], |t, x| t.add_row(x[0], x[1])),
        Primitive::new("mul_row", &[(3, 4), (1, 4)], |t, x| t.mul_row(x[0], x[1])),
        Primitive::new("broadcast_rows", &[(1, 4)], |t, x| t.broadcast_rows(x[0], 3)),
        Primitive::new("scale", &[(3, 4)], |t, x| Ok(t.scale(x[0], -1.7))),
        Primitive::new("scale_by", &[(3, 4), (1, 1)], |t, x| t.scale_by(x[0], x[1])),
        Primitive::new("relu", &[(4, 5)], |t, x| Ok(t.relu(x[0]))),
        Primitive::new("softmax_rows", &[(3, 5)], |t, x| Ok(t.softmax_rows(x[0]))),
        Primitive::new("masked_softmax_rows", &[(3, 3)], |t, x| {
            let allowed = [true, false, false, true, true, false, true, true, true];
            t.masked_softmax_rows(x[0], &allowed)
        }),
        Primitive::new("log_softmax_rows", &[(3, 5)], |t, x| Ok(t.log_softmax_rows(x[0]))),
        Primitive::new("layer_norm_rows", &[(3, 6)], |t, x| Ok(t.layer_norm_rows(x[0], 1e-5))),
        Primitive::new("l2_normalize_rows", &[(3, 4)], |t, x| Ok(t.l2_normalize_rows(x[0], 1e-12))),
        Primitive::new("embedding_lookup", &[(5, 3)], |t, x| t.gather_rows(x[0], &[4, 0, 4, 2])),
        Primitive::new("concat_rows", &[(2, 3), (1, 3)], |t, x| t.concat_rows(&[x[0], x[1]])),
        Primitive::new("concat_cols", &[(2, 3), (2, 1)], |t, x| t.concat_cols(&[x[0], x[1]])),
        Primitive::new("slice_rows", &[(4, 3)], |t, x| t.slice_rows(x[0], 1, 3)),
        Primitive::new("slice_cols", &[(3, 5)], |t, x| t.slice_cols(x[0], 2, 4)),
        Primitive::new("transpose", &[(2, 5)], |t, x| Ok(t.transpose(x[0]))),
        Primitive::new("reshape", &[(2, 6)], |t, x| t.reshape(x[0], 4, 3)),
        Primitive::new("sum_all", &[(3, 4)], |t, x| Ok(t.sum_all(x[0]))),
        Primitive::new("mean_all", &[(3, 4)], |t, x| Ok(t.mean_all(x[0]))),
        Primitive::new("mean_rows", &[(3, 4)], |t, x| Ok(t.mean_rows(x[0]))),
        Primitive::new("interp_linear_rows", &[(3, 2)], |t, x| {
            t.interpolate(x[0], 7, InterpMode::Linear, 0)
        }),
        Primitive::new("interp_area_rows", &[(7, 2)], |t, x| t.interpolate(x[0], 3, InterpMode::Area, 0)),
        Primitive::new("interp_linear_cols", &[(2, 4)], |t, x| {
            t.interpolate(x[0], 6, InterpMode::Linear, 1)
        }),
        Primitive::new("interp_area_cols", &[(2, 6)], |t, x| t.interpolate(x[0], 4, InterpMode::Area, 1)),
        Primitive::new("cross_entropy", &[(3, 5)], |t, x| {
            t.cross_entropy(x[0], &[0, 4, 2], &[1.0, 0.5, 2.0])
        }),
    ];
    v.push(Primitive {
        name: "dropout",
        inputs: vec![(4, 4)],
        train: true,
        build: |t, x| Ok(t.dropout(x[0], 0.3)),
    });
    v
}
