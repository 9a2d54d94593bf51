//! Running-variable distributions and their truncated moments.
//!
//! Every distribution is stored mean-centered. The amount subtracted is kept
//! in [`Distribution::centering_shift`] so thresholds can be mapped back to the
//! original scale.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;
use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::{gamma, gamma_lr};

use crate::error::{Error, Result};

/// Description of a running-variable law, before validation and centering.
#[derive(Debug, Clone, PartialEq)]
pub enum DistributionSpec {
    /// `U(-1, 1)`.
    Uniform,
    /// Weibull with the given shape and scale, shifted to mean zero.
    Weibull { shape: f64, scale: f64 },
    /// `N(0, sd^2)`.
    Gaussian { sd: f64 },
    /// Observed running-variable values, each with mass `1/n`.
    Sample(Vec<f64>),
}

/// Support points and masses of a discrete distribution, with prefix sums.
///
/// `cum[k]`, `cum_x[k]`, `cum_x2[k]` hold the sums of `m`, `m x`, `m x^2` over
/// the first `k` support points, so `cum[n]` is the total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    values: Vec<f64>,
    masses: Vec<f64>,
    cum: Vec<f64>,
    cum_x: Vec<f64>,
    cum_x2: Vec<f64>,
}

impl Empirical {
    fn from_sorted(values: Vec<f64>, masses: Vec<f64>, cum: Vec<f64>) -> Self {
        let n = values.len();
        let mut cum_x = Vec::with_capacity(n + 1);
        let mut cum_x2 = Vec::with_capacity(n + 1);
        cum_x.push(0.0);
        cum_x2.push(0.0);
        let (mut s1, mut s2) = (0.0, 0.0);
        for (v, m) in values.iter().zip(&masses) {
            s1 += m * v;
            s2 += m * v * v;
            cum_x.push(s1);
            cum_x2.push(s2);
        }
        Empirical {
            values,
            masses,
            cum,
            cum_x,
            cum_x2,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted, distinct support points.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Prefix sums of `x^a * mass` for `a` in `{0, 1, 2}`; length `n + 1`.
    pub fn prefix(&self, a: u32) -> &[f64] {
        match a {
            0 => &self.cum,
            1 => &self.cum_x,
            2 => &self.cum_x2,
            _ => panic!("prefix sums exist only for a in {{0, 1, 2}}"),
        }
    }

    /// Number of support points strictly below `t` (or at most `t` with `include_t`).
    pub fn count_below(&self, t: f64, include_t: bool) -> usize {
        if include_t {
            self.values.partition_point(|&v| v <= t)
        } else {
            self.values.partition_point(|&v| v < t)
        }
    }

    /// Index of the support point equal to `x`, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let k = self.values.partition_point(|&v| v < x);
        (k < self.values.len() && self.values[k] == x).then_some(k)
    }

    /// Index of the support point whose mass interval `[cum[k], cum[k+1])` holds `c`.
    pub(crate) fn atom_at_mass(&self, c: f64) -> usize {
        let n = self.values.len();
        // first k with cum[k+1] > c
        let k = self.cum[1..].partition_point(|&s| s <= c);
        k.min(n - 1)
    }

    /// Reflection `x -> -x`, used to map minimization problems onto maximization ones.
    pub fn reflected(&self) -> Empirical {
        let values: Vec<f64> = self.values.iter().rev().map(|v| -v).collect();
        let masses: Vec<f64> = self.masses.iter().rev().copied().collect();
        let total = self.cum[self.values.len()];
        let cum: Vec<f64> = self.cum.iter().rev().map(|c| total - c).collect();
        Empirical::from_sorted(values, masses, cum)
    }
}

/// Which family a [`Distribution`] belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Uniform,
    Weibull { shape: f64, scale: f64 },
    Gaussian { sd: f64 },
    Empirical(Arc<Empirical>),
}

/// A mean-centered running-variable distribution `F`.
///
/// Immutable after construction; clones are cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    kind: Kind,
    second_moment: f64,
    support_lo: f64,
    support_hi: f64,
    centering_shift: f64,
}

/// Builds a validated, mean-centered [`Distribution`].
pub fn make_distribution(spec: &DistributionSpec) -> Result<Distribution> {
    match spec {
        DistributionSpec::Uniform => Ok(Distribution::uniform()),
        DistributionSpec::Weibull { shape, scale } => Distribution::weibull(*shape, *scale),
        DistributionSpec::Gaussian { sd } => Distribution::gaussian(*sd),
        DistributionSpec::Sample(xs) => Distribution::empirical(xs),
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::Invalid(format!("{name} must be finite and positive, got {v}")));
    }
    Ok(())
}

impl Distribution {
    pub fn uniform() -> Self {
        Distribution {
            kind: Kind::Uniform,
            second_moment: 1.0 / 3.0,
            support_lo: -1.0,
            support_hi: 1.0,
            centering_shift: 0.0,
        }
    }

    /// Weibull(shape, scale) shifted by its mean `scale * Γ(1 + 1/shape)`.
    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        check_positive("weibull shape", shape)?;
        check_positive("weibull scale", scale)?;
        let g1 = gamma(1.0 + 1.0 / shape);
        let g2 = gamma(1.0 + 2.0 / shape);
        let mean = scale * g1;
        let second_moment = scale * scale * (g2 - g1 * g1);
        if !second_moment.is_finite() || second_moment <= 0.0 {
            return Err(Error::Invalid(format!("weibull shape {shape} gives a non-finite variance")));
        }
        Ok(Distribution {
            kind: Kind::Weibull { shape, scale },
            second_moment,
            support_lo: -mean,
            support_hi: f64::INFINITY,
            centering_shift: mean,
        })
    }

    pub fn gaussian(sd: f64) -> Result<Self> {
        check_positive("gaussian sd", sd)?;
        Ok(Distribution {
            kind: Kind::Gaussian { sd },
            second_moment: sd * sd,
            support_lo: f64::NEG_INFINITY,
            support_hi: f64::INFINITY,
            centering_shift: 0.0,
        })
    }

    /// Empirical distribution of a sample, each observation with mass `1/n`.
    ///
    /// Duplicate values are merged into atoms with mass `k/n`, then the sample
    /// mean is subtracted.
    pub fn empirical(sample: &[f64]) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::Invalid(format!("need at least 2 observations, got {}", sample.len())));
        }
        if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite observation {bad}")));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut values: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for v in sorted {
            match values.last() {
                Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
                _ => {
                    values.push(v);
                    counts.push(1);
                }
            }
        }
        Self::from_counts(values, counts, sample.len())
    }

    /// Discrete distribution with explicit (positive) masses, normalized to sum to one.
    pub fn discrete(values: &[f64], masses: &[f64]) -> Result<Self> {
        if values.len() != masses.len() {
            return Err(Error::Invalid("values and masses differ in length".into()));
        }
        if values.iter().chain(masses).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite value or mass".into()));
        }
        if masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::Invalid("masses must be positive".into()));
        }
        let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(masses.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut vs: Vec<f64> = Vec::new();
        let mut ms: Vec<f64> = Vec::new();
        for (v, m) in pairs {
            match vs.last() {
                Some(&last) if last == v => *ms.last_mut().unwrap() += m,
                _ => {
                    vs.push(v);
                    ms.push(m);
                }
            }
        }
        let total: f64 = ms.iter().sum();
        for m in &mut ms {
            *m /= total;
        }
        let mut cum = Vec::with_capacity(ms.len() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for m in &ms {
            acc += m;
            cum.push(acc);
        }
        let weights = ms.clone();
        Self::centered_discrete(vs, ms, cum, &weights)
    }

    fn from_counts(values: Vec<f64>, counts: Vec<usize>, n: usize) -> Result<Self> {
        let nf = n as f64;
        let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
        // cumulative masses from integer counts are correctly rounded
        let mut cum = Vec::with_capacity(values.len() + 1);
        cum.push(0.0);
        let mut acc = 0usize;
        for c in &counts {
            acc += c;
            cum.push(acc as f64 / nf);
        }
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::centered_discrete(values, masses, cum, &weights)
    }

    /// Centers at the weighted mean; integer `weights` keep the products exact.
    fn centered_discrete(values: Vec<f64>, masses: Vec<f64>, cum: Vec<f64>, weights: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Degenerate(
                "all observations are equal, so Var(x) = 0 and no design can identify the model".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
        let mut centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        // one more mean correction absorbs rounding in the first pass
        let residual = centered.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
        for v in &mut centered {
            *v -= residual;
        }
        if centered.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("support points collapse after centering".into()));
        }
        let emp = Empirical::from_sorted(centered, masses, cum);
        let second_moment = emp.cum_x2[emp.len()];
        if second_moment <= 0.0 {
            return Err(Error::Degenerate("Var(x) = 0".into()));
        }
        Ok(Distribution {
            support_lo: emp.values[0],
            support_hi: emp.values[emp.len() - 1],
            kind: Kind::Empirical(Arc::new(emp)),
            second_moment,
            centering_shift: mean + residual,
        })
    }

    pub(crate) fn from_empirical(emp: Empirical) -> Self {
        let second_moment = emp.cum_x2[emp.len()];
        Distribution {
            support_lo: emp.values[0],
            support_hi: emp.values[emp.len() - 1],
            kind: Kind::Empirical(Arc::new(emp)),
            second_moment,
            centering_shift: 0.0,
        }
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// `E(x^2)`, which equals the variance since the mean is zero.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn support_lo(&self) -> f64 {
        self.support_lo
    }

    pub fn support_hi(&self) -> f64 {
        self.support_hi
    }

    /// Amount subtracted from the raw running variable to center it.
    pub fn centering_shift(&self) -> f64 {
        self.centering_shift
    }

    pub fn empirical_data(&self) -> Option<&Arc<Empirical>> {
        match &self.kind {
            Kind::Empirical(e) => Some(e),
            _ => None,
        }
    }

    pub fn has_atoms(&self) -> bool {
        matches!(self.kind, Kind::Empirical(_))
    }

    /// True for laws with `F(x) = 1 - F(-x)`.
    pub fn is_symmetric(&self) -> bool {
        matches!(self.kind, Kind::Uniform | Kind::Gaussian { .. })
    }

    /// `E|x|^3 < ∞`. Holds for every supported family; the canonical-form
    /// solvers rely on it.
    pub fn has_finite_third_moment(&self) -> bool {
        true
    }

    /// `Pr(x = t)`.
    pub fn atom_mass(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::Empirical(e) => e.index_of(t).map_or(0.0, |k| e.masses[k]),
            _ => 0.0,
        }
    }

    /// `F(x) = Pr(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Uniform => ((x + 1.0) / 2.0).clamp(0.0, 1.0),
            Kind::Weibull { shape, scale } => {
                let raw = x + self.centering_shift;
                if raw <= 0.0 {
                    0.0
                } else {
                    -(-(raw / scale).powf(*shape)).exp_m1()
                }
            }
            Kind::Gaussian { sd } => std_normal_cdf(x / sd),
            Kind::Empirical(e) => e.cum[e.count_below(x, true)],
        }
    }

    /// `inf { s : F(s) >= q }`, with `q = 0` mapped to the lower support end.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Invalid(format!("quantile level {q} outside [0, 1]")));
        }
        Ok(self.quantile_unchecked(q))
    }

    pub(crate) fn quantile_unchecked(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return self.support_lo;
        }
        if q >= 1.0 {
            return self.support_hi;
        }
        match &self.kind {
            Kind::Uniform => 2.0 * q - 1.0,
            Kind::Weibull { shape, scale } => scale * (-(-q).ln_1p()).powf(1.0 / shape) - self.centering_shift,
            Kind::Gaussian { sd } => -sd * std::f64::consts::SQRT_2 * erfc_inv(2.0 * q),
            Kind::Empirical(e) => {
                let k = e.cum[1..].partition_point(|&s| s < q);
                e.values[k.min(e.len() - 1)]
            }
        }
    }

    /// `E(x^a)` for `a` in `{0, 1, 2}`.
    pub fn full_moment(&self, a: u32) -> f64 {
        match (&self.kind, a) {
            (Kind::Empirical(e), _) => e.prefix(a)[e.len()],
            (_, 0) => 1.0,
            (_, 1) => 0.0,
            (_, 2) => self.second_moment,
            _ => panic!("moment order {a} not supported"),
        }
    }

    /// `E(x^a 1(x < t))`, or `E(x^a 1(x <= t))` when `include_t` is set.
    ///
    /// `t = +∞` returns the full moment.
    pub fn truncated_moment(&self, a: u32, t: f64, include_t: bool) -> f64 {
        assert!(a <= 2, "moment order {a} not supported");
        if t.is_nan() {
            panic!("truncation point is NaN");
        }
        if t == f64::INFINITY {
            return self.full_moment(a);
        }
        if t == f64::NEG_INFINITY {
            return 0.0;
        }
        match &self.kind {
            Kind::Uniform => {
                let tt = t.clamp(-1.0, 1.0);
                let k = (a + 1) as i32;
                (tt.powi(k) - (-1f64).powi(k)) / (2.0 * k as f64)
            }
            Kind::Weibull { shape, scale } => weibull_truncated(*shape, *scale, self.centering_shift, a, t),
            Kind::Gaussian { sd } => {
                let u = t / sd;
                let cdf = std_normal_cdf(u);
                let pdf = std_normal_pdf(u);
                match a {
                    0 => cdf,
                    1 => -sd * pdf,
                    _ => sd * sd * (cdf - u * pdf),
                }
            }
            Kind::Empirical(e) => e.prefix(a)[e.count_below(t, include_t)],
        }
    }

    /// `E(x^a 1(U < c))` under the quantile coupling `x = F^{-1}(U)`, `U ~ U(0,1)`.
    ///
    /// For continuous `F` this is the truncated moment at the `c`-quantile.
    /// For atoms it takes the fraction of the straddling atom lying below `c`,
    /// which makes it continuous and piecewise linear in `c`.
    pub fn mass_moment(&self, a: u32, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        if c >= 1.0 {
            return self.full_moment(a);
        }
        match &self.kind {
            Kind::Empirical(e) => {
                let k = e.atom_at_mass(c);
                let frac = (c - e.cum[k]).clamp(0.0, e.masses[k]);
                e.prefix(a)[k] + e.values[k].powi(a as i32) * frac
            }
            _ => self.truncated_moment(a, self.quantile_unchecked(c), false),
        }
    }

    /// One draw by inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile_unchecked(u)
    }

    /// Reflected law of `-x`.
    pub fn reflected(&self) -> Distribution {
        match &self.kind {
            Kind::Empirical(e) => Distribution::from_empirical(e.reflected()),
            Kind::Uniform | Kind::Gaussian { .. } => self.clone(),
            Kind::Weibull { .. } => panic!("reflection of a Weibull law is not a supported family"),
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Uniform => write!(f, "uniform(-1,1)"),
            Kind::Weibull { shape, scale } => write!(f, "weibull(shape={shape},scale={scale})"),
            Kind::Gaussian { sd } => write!(f, "gaussian(sd={sd})"),
            Kind::Empirical(e) => write!(f, "empirical(n_support={})", e.len()),
        }
    }
}

fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

fn std_normal_pdf(u: f64) -> f64 {
    if u.is_infinite() {
        return 0.0;
    }
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Truncated moments of the centered Weibull via the lower incomplete gamma function.
///
/// With `X ~ Weibull(k, λ)`, `E(X^j 1(X < s)) = λ^j Γ(1 + j/k) P(1 + j/k, (s/λ)^k)`;
/// the centered moments follow by binomial expansion of `(X - μ)^a`.
fn weibull_truncated(shape: f64, scale: f64, mean: f64, a: u32, t: f64) -> f64 {
    let s = t + mean;
    if s <= 0.0 {
        return 0.0;
    }
    let w = (s / scale).powf(shape);
    let raw = |j: u32| {
        let order = 1.0 + j as f64 / shape;
        scale.powi(j as i32) * gamma(order) * gamma_lr(order, w)
    };
    let m0 = gamma_lr(1.0, w);
    match a {
        0 => m0,
        1 => raw(1) - mean * m0,
        _ => raw(2) - 2.0 * mean * raw(1) + mean * mean * m0,
    }
}

/// Parses running-variable values from text: one number per line, or a
/// single-column CSV with an optional header row.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut seen_row = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let first_row = !seen_row;
        seen_row = true;
        if line.contains(',') {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected a single column, found {line:?}"),
            });
        }
        let field = line.trim_matches('"').trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite value {v}"),
                })
            }
            Err(_) if first_row => continue, // header
            Err(_) => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("not a number: {field:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Reads running-variable values from a file in the format of [`parse_values`].
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_values(&text)
}
