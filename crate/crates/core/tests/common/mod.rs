#![allow(dead_code)]

use proptest::prelude::*;
use tiebreaker::design::DesignFunction;
use tiebreaker::dist::{Distribution, Kind};
use quadrature::double_exponential::integrate;

pub const QUAD_TOL: f64 = 1e-13;

pub fn weibull_half() -> Distribution {
    Distribution::weibull(0.5, 1.0).unwrap()
}

pub fn families() -> Vec<Distribution> {
    vec![
        Distribution::uniform(),
        Distribution::weibull(2.0, 1.0).unwrap(),
        weibull_half(),
        Distribution::gaussian(1.0).unwrap(),
        Distribution::gaussian(2.5).unwrap(),
    ]
}

const GAUSS_EDGES: [f64; 11] = [-40.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 40.0];
const EXP_EDGES: [f64; 8] = [0.0, 0.5, 1.0, 3.0, 10.0, 30.0, 100.0, 800.0];

/// Integral over `[lo, hi]` split at `edges`, so no single panel has to find
/// the bulk of the mass on its own.
fn piecewise(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, edges: &[f64]) -> f64 {
    let mut pts = vec![lo];
    pts.extend(edges.iter().copied().filter(|e| lo < *e && *e < hi));
    pts.push(hi);
    pts.windows(2).map(|w| integrate(f, w[0], w[1], QUAD_TOL).integral).sum()
}

/// `E(g(x) 1(lo < x < hi))` by quadrature against the density, with no use of
/// the closed-form moments.
pub fn density_integral(dist: &Distribution, g: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let lo = lo.max(dist.support_lo());
    let hi = hi.min(dist.support_hi());
    if !(lo < hi) {
        return 0.0;
    }
    match dist.kind() {
        Kind::Uniform => integrate(|x| 0.5 * g(x), lo, hi, QUAD_TOL).integral,
        Kind::Gaussian { sd } => {
            let sd = *sd;
            let (lo, hi) = (lo.max(-40.0 * sd), hi.min(40.0 * sd));
            let c = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
            piecewise(&|x| c * (-0.5 * (x / sd).powi(2)).exp() * g(x), lo, hi, &GAUSS_EDGES.map(|e| e * sd))
        }
        Kind::Weibull { shape, scale } => {
            // x = scale s^(1/shape) - mean with s ~ Exp(1)
            let (k, lam, mu) = (*shape, *scale, dist.centering_shift());
            let to_s = |x: f64| ((x + mu).max(0.0) / lam).powf(k);
            let (s0, s1) = (to_s(lo), if hi.is_finite() { to_s(hi) } else { 800.0 });
            piecewise(&|s| (-s).exp() * g(lam * s.powf(1.0 / k) - mu), s0, s1.min(800.0), &EXP_EDGES)
        }
        Kind::Empirical(emp) => emp
            .values()
            .iter()
            .zip(emp.masses())
            .filter(|(v, _)| lo < **v && **v < hi)
            .map(|(v, m)| m * g(*v))
            .sum(),
    }
}

/// `E_p(x^a z)` by piecewise quadrature (continuous laws) or enumeration over
/// the support (discrete laws).
pub fn oracle_moment(dist: &Distribution, p: &DesignFunction, a: i32) -> f64 {
    if let Some(emp) = dist.empirical_data() {
        return emp
            .values()
            .iter()
            .zip(emp.masses())
            .map(|(v, m)| m * v.powi(a) * (2.0 * p.eval(*v) - 1.0))
            .sum();
    }
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend_from_slice(p.breakpoints());
    edges.push(f64::INFINITY);
    edges
        .windows(2)
        .zip(p.levels())
        .map(|(w, &level)| density_integral(dist, &|x: f64| x.powi(a) * (2.0 * level - 1.0), w[0], w[1]))
        .sum()
}

/// Random step design with breakpoints in `[lo, hi]`.
pub fn design_strategy(lo: f64, hi: f64) -> impl Strategy<Value = DesignFunction> {
    (prop::collection::vec(lo..hi, 0..6), prop::collection::vec(0.0..=1.0f64, 7))
        .prop_map(|(mut bps, levels)| {
            bps.sort_by(f64::total_cmp);
            bps.dedup();
            let levels = levels[..bps.len() + 1].to_vec();
            let atoms = vec![None; bps.len()];
            DesignFunction::new(bps, levels, atoms).unwrap()
        })
}

/// Uniform-mass sample of size `n` from `U(-1, 1)` evaluated at cell midpoints.
pub fn midpoint_sample(n: usize) -> Vec<f64> {
    (0..n).map(|i| -1.0 + (2 * i + 1) as f64 / n as f64).collect()
}
