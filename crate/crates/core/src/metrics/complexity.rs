use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::ScaleSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// One node per step, attending to the whole prefix.
    NodeWise,
    /// One scale per step under the block-causal mask.
    ScaleWise,
}

/// Query-key pairs evaluated by attention over a full generation.
///
/// Node-wise: `Σ_{i≤N} i²`. Scale-wise: `Σ_k n_k·S_k`, with `S_k` the
/// tokens through scale `k` (the self block is attended).
pub fn count_attention_pairs(regime: Regime, schedule: &ScaleSchedule) -> u128 {
    match regime {
        Regime::NodeWise => {
            let n = schedule.n() as u128;
            n * (n + 1) * (2 * n + 1) / 6
        }
        Regime::ScaleWise => {
            let mut cumulative = 0u128;
            let mut total = 0u128;
            for &s in schedule.sizes() {
                cumulative += s as u128;
                total += s as u128 * cumulative;
            }
            total
        }
    }
}

/// Node-wise pairs by direct summation, for checking the closed form.
pub fn node_wise_pairs_by_summation(n: usize) -> u128 {
    (1..=n as u128).map(|i| i * i).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub n: usize,
    /// Scale count `K`.
    pub scales: usize,
    pub node_wise: u128,
    pub scale_wise: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    /// Growth constant `a` of the schedules.
    pub growth: usize,
    pub points: Vec<CostPoint>,
    pub node_wise_slope: f64,
    pub scale_wise_slope: f64,
}

impl CostCurve {
    /// Build from `(N, schedule)` pairs; slopes need at least 4 points.
    pub fn new(growth: usize, schedules: &[ScaleSchedule]) -> Result<Self> {
        let points: Vec<CostPoint> = schedules
            .iter()
            .map(|s| CostPoint {
                n: s.n(),
                scales: s.len(),
                node_wise: count_attention_pairs(Regime::NodeWise, s),
                scale_wise: count_attention_pairs(Regime::ScaleWise, s),
            })
            .collect();
        let fit = |f: fn(&CostPoint) -> u128| {
            let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.n as f64, f(p) as f64)).collect();
            fit_scaling_exponent(&xy)
        };
        Ok(Self {
            growth,
            node_wise_slope: fit(|p| p.node_wise)?,
            scale_wise_slope: fit(|p| p.scale_wise)?,
            points,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,scales,node_wise,scale_wise\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{}\n", p.n, p.scales, p.node_wise, p.scale_wise));
        }
        s
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidArgument("slope fit needs positive values".into()));
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    if hi < 10.0 * lo {
        return Err(Error::InvalidArgument("slope fit needs at least one decade of N".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
