//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many randomly chosen coordinates per parameter.
    pub max_coords_per_param: Option<usize>,
    /// Denominator floor for the relative error, so vanishing gradients are
    /// compared absolutely.
    pub floor: f64,
    /// Build the objective on training-mode tapes (dropout active, fixed seed).
    pub train: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_coords_per_param: None,
            floor: 1e-6,
            train: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval<F>(f: &mut F, p: &ParamStore<f64>, opts: &GradCheckOptions) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::with_mode(opts.train, opts.seed);
    let out = f(&mut tape, p)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::shape("check_gradients", "objective is not scalar"));
    }
    Ok(v.data()[0])
}

/// `check_gradients(f, params, eps)` with default options otherwise.
pub fn check_gradients<F>(f: F, params: &mut ParamStore<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    check_gradients_with(
        f,
        params,
        GradCheckOptions {
            eps,
            ..Default::default()
        },
    )
}

/// Compare analytic parameter gradients of the scalar objective `f` with
/// central differences `(f(p+eps) - f(p-eps)) / 2eps`, coordinate by
/// coordinate. `params` is restored before returning.
pub fn check_gradients_with<F>(
    mut f: F,
    params: &mut ParamStore<f64>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let first = eval(&mut f, params, &opts)?;
    let second = eval(&mut f, params, &opts)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let analytic = {
        let mut tape = Tape::with_mode(opts.train, opts.seed);
        let out = f(&mut tape, params)?;
        let grads = tape.backward(out)?;
        let mut dense: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        for (id, g) in grads.params() {
            dense[id.0] = g.data().to_vec();
        }
        dense
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let len = params.get(id).len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for k in coords {
            let orig = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = orig + opts.eps;
            let plus = eval(&mut f, params, &opts);
            params.get_mut(id).data_mut()[k] = orig - opts.eps;
            let minus = eval(&mut f, params, &opts);
            params.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.eps);
            let a = analytic[id.0][k];
            let err = relative_error(a, numeric, opts.floor);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = params.name(id).to_string();
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
