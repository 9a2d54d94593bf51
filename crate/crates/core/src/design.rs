//! Piecewise-constant design functions and their moment triples.
//!
//! A design maps the running variable to a treatment probability. It is
//! stored as strictly increasing finite breakpoints, one level per open
//! interval between them, and an optional value exactly at each breakpoint.
//! An unset breakpoint value falls back to the level on its left; that only
//! matters when `F` puts mass on the breakpoint.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dist::Distribution;
use crate::error::{Error, Result};

/// `(E_p z, E_p xz, E_p x^2 z)`: the only functionals of a design that any
/// efficiency criterion depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentTriple {
    pub ez: f64,
    pub exz: f64,
    pub ex2z: f64,
}

impl MomentTriple {
    pub fn new(ez: f64, exz: f64, ex2z: f64) -> Self {
        MomentTriple { ez, exz, ex2z }
    }

    /// `lambda * self + (1 - lambda) * other`.
    pub fn blend(&self, lambda: f64, other: &MomentTriple) -> MomentTriple {
        let mix = |a: f64, b: f64| lambda * a + (1.0 - lambda) * b;
        MomentTriple {
            ez: mix(self.ez, other.ez),
            exz: mix(self.exz, other.exz),
            ex2z: mix(self.ex2z, other.ex2z),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignFunction {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
    atoms: Vec<Option<f64>>,
}

/// Named design families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignKind {
    /// RCT with treatment probability `theta`.
    Constant { theta: f64 },
    /// `l 1(x < t) + u 1(x >= t)`; no ordering of `l` and `u` is imposed.
    TwoLevel { l: f64, u: f64, t: f64 },
    /// `1(x in [lo, hi])`.
    IntervalIndicator { lo: f64, hi: f64 },
    /// `1(x not in [lo, hi])`.
    ComplementInterval { lo: f64, hi: f64 },
    /// Three level tie-breaker: 0 below the `(1-z)/2 - delta` quantile,
    /// 1/2 up to the `(1-z)/2 + delta` quantile, 1 above.
    ThreeLevel { z_tilde: f64, delta: f64 },
    /// Treats exactly the top `(1+z)/2` of the mass, splitting an atom at the
    /// threshold if needed.
    GeneralizedRdd { z_tilde: f64 },
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Invalid(format!("{name} = {v} is not a probability")));
    }
    Ok(())
}

/// Largest admissible three-level half width for treatment fraction parameter `z`.
pub fn three_level_max_delta(z_tilde: f64) -> f64 {
    ((1.0 - z_tilde) / 2.0).min((1.0 + z_tilde) / 2.0)
}

pub fn build_design(kind: DesignKind, dist: &Distribution) -> Result<DesignFunction> {
    match kind {
        DesignKind::Constant { theta } => DesignFunction::constant(theta),
        DesignKind::TwoLevel { l, u, t } => DesignFunction::two_level(l, u, t),
        DesignKind::IntervalIndicator { lo, hi } => DesignFunction::interval_indicator(lo, hi),
        DesignKind::ComplementInterval { lo, hi } => DesignFunction::complement_interval(lo, hi),
        DesignKind::ThreeLevel { z_tilde, delta } => {
            if !(-1.0..=1.0).contains(&z_tilde) {
                return Err(Error::Invalid(format!("z_tilde = {z_tilde} outside [-1, 1]")));
            }
            let max = three_level_max_delta(z_tilde);
            if !(0.0..=max + 1e-15).contains(&delta) {
                return Err(Error::ThreeLevelInfeasible { delta, max });
            }
            let delta = delta.min(max);
            let mid = (1.0 - z_tilde) / 2.0;
            Ok(DesignFunction::from_mass_steps(
                dist,
                &[mid - delta, mid + delta],
                &[0.0, 0.5, 1.0],
            ))
        }
        DesignKind::GeneralizedRdd { z_tilde } => {
            if !(-1.0..=1.0).contains(&z_tilde) {
                return Err(Error::Invalid(format!("z_tilde = {z_tilde} outside [-1, 1]")));
            }
            Ok(DesignFunction::from_mass_steps(dist, &[(1.0 - z_tilde) / 2.0], &[0.0, 1.0]))
        }
    }
}

impl DesignFunction {
    /// Validating constructor. Breakpoints must be finite and strictly increasing.
    pub fn new(breakpoints: Vec<f64>, levels: Vec<f64>, atoms: Vec<Option<f64>>) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 {
            return Err(Error::Invalid(format!(
                "{} breakpoints need {} levels, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                levels.len()
            )));
        }
        if atoms.len() != breakpoints.len() {
            return Err(Error::Invalid("one atom slot per breakpoint required".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Invalid("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("breakpoints must be strictly increasing".into()));
        }
        for &l in &levels {
            check_prob("level", l)?;
        }
        for a in atoms.iter().flatten() {
            check_prob("atom value", *a)?;
        }
        Ok(DesignFunction {
            breakpoints,
            levels,
            atoms,
        })
    }

    /// Builds from breakpoints that may be infinite or repeated.
    ///
    /// Infinite breakpoints drop the empty interval beyond them. A repeated
    /// breakpoint collapses into one, whose value is the first explicit atom
    /// value, else the (empty) level between the copies.
    pub fn from_pieces(breakpoints: &[f64], levels: &[f64], atoms: &[Option<f64>]) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 || atoms.len() != breakpoints.len() {
            return Err(Error::Invalid("inconsistent piece lengths".into()));
        }
        if breakpoints.iter().any(|b| b.is_nan()) || breakpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Invalid("breakpoints must be nondecreasing".into()));
        }
        let mut bps: Vec<f64> = Vec::new();
        let mut lv: Vec<f64> = Vec::new();
        let mut at: Vec<Option<f64>> = Vec::new();
        let mut left = levels[0];
        for (i, &b) in breakpoints.iter().enumerate() {
            let right = levels[i + 1];
            if b == f64::NEG_INFINITY {
                left = right;
                continue;
            }
            if b == f64::INFINITY {
                break;
            }
            if bps.last() == Some(&b) {
                let prev = at.last_mut().unwrap();
                if prev.is_none() {
                    *prev = Some(atoms[i].unwrap_or(left));
                }
                left = right;
                continue;
            }
            bps.push(b);
            lv.push(left);
            at.push(atoms[i]);
            left = right;
        }
        lv.push(left);
        DesignFunction::new(bps, lv, at)
    }

    pub fn constant(theta: f64) -> Result<Self> {
        check_prob("theta", theta)?;
        Ok(DesignFunction {
            breakpoints: vec![],
            levels: vec![theta],
            atoms: vec![],
        })
    }

    pub fn two_level(l: f64, u: f64, t: f64) -> Result<Self> {
        if t.is_nan() {
            return Err(Error::Invalid("threshold is NaN".into()));
        }
        DesignFunction::from_pieces(&[t], &[l, u], &[Some(u)])
    }

    pub fn interval_indicator(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Invalid(format!("interval [{lo}, {hi}] is empty")));
        }
        DesignFunction::from_pieces(&[lo, hi], &[0.0, 1.0, 0.0], &[Some(1.0), Some(1.0)])
    }

    pub fn complement_interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Invalid(format!("interval [{lo}, {hi}] is empty")));
        }
        DesignFunction::from_pieces(&[lo, hi], &[1.0, 0.0, 1.0], &[Some(0.0), Some(0.0)])
    }

    /// Design given as a step function of the mass coordinate `U = F(x)`.
    ///
    /// `cuts` are nondecreasing points in `[0, 1]` and `levels[i]` applies on
    /// `[cuts[i-1], cuts[i])`. For continuous `F` each cut becomes the
    /// breakpoint `F^{-1}(cut)`. An atom straddling a cut receives the
    /// mass-weighted average of the levels it covers.
    pub fn from_mass_steps(dist: &Distribution, cuts: &[f64], levels: &[f64]) -> DesignFunction {
        assert_eq!(levels.len(), cuts.len() + 1, "one more level than cuts");
        // pieces with positive width in mass coordinates
        let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
        let mut lo = 0.0;
        for (i, &level) in levels.iter().enumerate() {
            let hi = if i < cuts.len() { cuts[i].clamp(0.0, 1.0) } else { 1.0 };
            let hi = hi.max(lo);
            if hi > lo {
                match pieces.last_mut() {
                    Some(last) if last.2 == level => last.1 = hi,
                    _ => pieces.push((lo, hi, level)),
                }
            }
            lo = hi;
        }
        if pieces.is_empty() {
            pieces.push((0.0, 1.0, levels[levels.len() - 1]));
        }

        match dist.empirical_data() {
            None => {
                let bps: Vec<f64> = pieces[1..].iter().map(|p| dist.quantile_unchecked(p.0)).collect();
                let lv: Vec<f64> = pieces.iter().map(|p| p.2).collect();
                let at = vec![None; bps.len()];
                DesignFunction::from_pieces(&bps, &lv, &at).expect("mass-step pieces are well formed")
            }
            Some(emp) => {
                let cum = emp.prefix(0);
                let n = emp.len();
                let total = cum[n];
                let mut values = Vec::with_capacity(n);
                let mut j = 0;
                for k in 0..n {
                    let (a, b) = (cum[k], if k + 1 == n { total.max(1.0) } else { cum[k + 1] });
                    while j + 1 < pieces.len() && pieces[j].1 <= a {
                        j += 1;
                    }
                    if j + 1 == pieces.len() || b <= pieces[j].1 {
                        values.push(pieces[j].2);
                        continue;
                    }
                    let width = b - a;
                    let mut acc = 0.0;
                    for p in &pieces[j..] {
                        let ov = (b.min(p.1) - a.max(p.0)).max(0.0);
                        acc += p.2 * ov;
                        if p.1 >= b {
                            break;
                        }
                    }
                    let mut v = acc / width;
                    // snap rounding slivers left by cut points that coincide with atom edges
                    for p in &pieces[j..] {
                        if (v - p.2).abs() < 1e-12 {
                            v = p.2;
                        }
                        if p.1 >= b {
                            break;
                        }
                    }
                    values.push(v.clamp(0.0, 1.0));
                }
                DesignFunction::from_atom_values(emp.values(), &values)
            }
        }
    }

    /// Compact design taking value `p[k]` at each support point `values[k]`.
    pub fn from_atom_values(values: &[f64], p: &[f64]) -> DesignFunction {
        assert_eq!(values.len(), p.len());
        assert!(!values.is_empty());
        let mut runs: Vec<(usize, usize, f64)> = Vec::new();
        for (k, &v) in p.iter().enumerate() {
            match runs.last_mut() {
                Some(r) if r.2 == v => r.1 = k + 1,
                _ => runs.push((k, k + 1, v)),
            }
        }
        let mut bps = Vec::new();
        let mut levels = vec![runs[0].2];
        let mut atoms = Vec::new();
        let mut r = 1;
        while r < runs.len() {
            let (s, e, v) = runs[r];
            bps.push(values[s]);
            atoms.push(Some(v));
            if e - s == 1 && r + 1 < runs.len() {
                // lone atom: carry the next run as the level to its right
                levels.push(runs[r + 1].2);
                r += 2;
            } else {
                levels.push(v);
                r += 1;
            }
        }
        DesignFunction {
            breakpoints: bps,
            levels,
            atoms,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Explicit breakpoint values (`None` means the left level applies).
    pub fn atoms(&self) -> &[Option<f64>] {
        &self.atoms
    }

    fn atom_value(&self, i: usize) -> f64 {
        self.atoms[i].unwrap_or(self.levels[i])
    }

    /// `p(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b < x);
        if k < self.breakpoints.len() && self.breakpoints[k] == x {
            self.atom_value(k)
        } else {
            self.levels[k]
        }
    }

    /// Levels nondecreasing and every breakpoint value between its neighbours.
    pub fn is_monotone(&self) -> bool {
        self.levels.windows(2).all(|w| w[0] <= w[1])
            && (0..self.breakpoints.len()).all(|i| {
                let a = self.atom_value(i);
                self.levels[i] <= a && a <= self.levels[i + 1]
            })
    }

    /// Exact moment triple under `F`, via `E_p(x^a z) = 2 E(x^a p(x)) - E(x^a)`.
    pub fn moments(&self, dist: &Distribution) -> MomentTriple {
        let atoms = dist.has_atoms();
        let full = [dist.full_moment(0), dist.full_moment(1), dist.full_moment(2)];
        let mut acc = [0.0f64; 3];
        let mut lower = [0.0f64; 3];
        let nb = self.breakpoints.len();
        for i in 0..=nb {
            let upper = if i < nb {
                let b = self.breakpoints[i];
                [0u32, 1, 2].map(|a| dist.truncated_moment(a, b, false))
            } else {
                full
            };
            let level = self.levels[i];
            for a in 0..3 {
                acc[a] += level * (upper[a] - lower[a]);
            }
            if i < nb {
                if atoms {
                    let b = self.breakpoints[i];
                    let incl = [0u32, 1, 2].map(|a| dist.truncated_moment(a, b, true));
                    let v = self.atom_value(i);
                    for a in 0..3 {
                        acc[a] += v * (incl[a] - upper[a]);
                    }
                    lower = incl;
                } else {
                    lower = upper;
                }
            }
        }
        MomentTriple {
            ez: 2.0 * acc[0] - full[0],
            exz: 2.0 * acc[1] - full[1],
            ex2z: 2.0 * acc[2] - full[2],
        }
    }

    /// The design `x -> 1 - p(-x)`.
    pub fn reflected(&self) -> DesignFunction {
        let nb = self.breakpoints.len();
        DesignFunction {
            breakpoints: self.breakpoints.iter().rev().map(|b| -b).collect(),
            levels: self.levels.iter().rev().map(|l| 1.0 - l).collect(),
            atoms: (0..nb).rev().map(|i| Some(1.0 - self.atom_value(i))).collect(),
        }
    }

    /// Merges neighbouring intervals that carry the same level with no distinct
    /// breakpoint value between them.
    pub fn simplified(&self) -> DesignFunction {
        let mut bps = Vec::new();
        let mut levels = vec![self.levels[0]];
        let mut atoms = Vec::new();
        for i in 0..self.breakpoints.len() {
            let left = *levels.last().unwrap();
            let right = self.levels[i + 1];
            let v = self.atom_value(i);
            if left == right && v == left {
                continue;
            }
            bps.push(self.breakpoints[i]);
            atoms.push(self.atoms[i]);
            levels.push(right);
        }
        DesignFunction {
            breakpoints: bps,
            levels,
            atoms,
        }
    }

    /// F-almost-everywhere equality, checked through moments and point values
    /// at `F`'s atoms and at interior points of every interval with positive mass.
    pub fn equivalent(&self, other: &DesignFunction, dist: &Distribution, tol: f64) -> bool {
        let (a, b) = (self.moments(dist), other.moments(dist));
        if (a.ez - b.ez).abs() > tol || (a.exz - b.exz).abs() > tol || (a.ex2z - b.ex2z).abs() > tol {
            return false;
        }
        if let Some(emp) = dist.empirical_data() {
            return emp.values().iter().all(|&x| (self.eval(x) - other.eval(x)).abs() <= tol);
        }
        let merged = merged_breakpoints(&self.breakpoints, &other.breakpoints);
        interval_probes(&merged)
            .into_iter()
            .enumerate()
            .all(|(j, x)| {
                let lo = if j == 0 { f64::NEG_INFINITY } else { merged[j - 1] };
                let hi = if j == merged.len() { f64::INFINITY } else { merged[j] };
                let mass = dist.cdf(hi) - dist.cdf(lo);
                mass <= 0.0 || (self.eval(x) - other.eval(x)).abs() <= tol
            })
    }
}

fn merged_breakpoints(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut m: Vec<f64> = a.iter().chain(b).copied().collect();
    m.sort_by(f64::total_cmp);
    m.dedup();
    m
}

/// One interior point per interval of the partition induced by `bps`.
fn interval_probes(bps: &[f64]) -> Vec<f64> {
    if bps.is_empty() {
        return vec![0.0];
    }
    let mut out = Vec::with_capacity(bps.len() + 1);
    out.push(bps[0] - 1.0);
    for w in bps.windows(2) {
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(bps[bps.len() - 1] + 1.0);
    out
}

/// Moment triple of `p` under `F`.
pub fn moments(p: &DesignFunction, dist: &Distribution) -> MomentTriple {
    p.moments(dist)
}

pub fn is_monotone(p: &DesignFunction) -> bool {
    p.is_monotone()
}

/// Pointwise mixture `lambda p + (1 - lambda) q`.
pub fn convex_combination(lambda: f64, p: &DesignFunction, q: &DesignFunction) -> Result<DesignFunction> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("lambda = {lambda} outside [0, 1]")));
    }
    if lambda == 1.0 {
        return Ok(p.clone());
    }
    if lambda == 0.0 {
        return Ok(q.clone());
    }
    let mix = |x: f64| (lambda * p.eval(x) + (1.0 - lambda) * q.eval(x)).clamp(0.0, 1.0);
    let bps = merged_breakpoints(&p.breakpoints, &q.breakpoints);
    let levels: Vec<f64> = interval_probes(&bps).into_iter().map(mix).collect();
    let atoms: Vec<Option<f64>> = bps.iter().map(|&b| Some(mix(b))).collect();
    Ok(DesignFunction::new(bps, levels, atoms)?.simplified())
}

#[derive(Serialize, Deserialize)]
struct DesignJson {
    breakpoints: Vec<f64>,
    levels: Vec<f64>,
    #[serde(default)]
    atoms: BTreeMap<String, f64>,
    #[serde(default)]
    monotone: Option<bool>,
}

impl Serialize for DesignFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let atoms = self
            .breakpoints
            .iter()
            .zip(&self.atoms)
            .filter_map(|(b, a)| a.map(|v| (b.to_string(), v)))
            .collect();
        DesignJson {
            breakpoints: self.breakpoints.clone(),
            levels: self.levels.clone(),
            atoms,
            monotone: Some(self.is_monotone()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DesignFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = DesignJson::deserialize(deserializer)?;
        let mut atoms = vec![None; raw.breakpoints.len()];
        for (key, v) in raw.atoms {
            let b: f64 = key
                .parse()
                .map_err(|_| D::Error::custom(format!("atom key {key:?} is not a number")))?;
            let i = raw
                .breakpoints
                .iter()
                .position(|&x| x == b)
                .ok_or_else(|| D::Error::custom(format!("atom key {key} is not a breakpoint")))?;
            atoms[i] = Some(v);
        }
        DesignFunction::new(raw.breakpoints, raw.levels, atoms).map_err(D::Error::custom)
    }
}
