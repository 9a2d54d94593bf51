//! Extremal and optimal designs for a known running-variable distribution.
//!
//! Every design family here is parametrized in mass coordinates: a cut `c`
//! in `[0, 1]` stands for the `c`-quantile, and `G_a(c) = E(x^a 1(U < c))`
//! under the quantile coupling `x = F^{-1}(U)`. This keeps brackets finite on
//! unbounded supports and lets atoms be split exactly when `F` is discrete.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{criterion_value, eff_inv, select_x2z, Constraints, CriterionSpec};
use crate::design::{build_design, convex_combination, DesignFunction, DesignKind, MomentTriple};
use crate::dist::{Distribution, Kind};
use crate::error::{Error, Result};
use crate::scalar::bisect_monotone;

/// Feasibility residual above which a solver reports an internal failure.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Relative gap below which an optimum is snapped onto an extremal endpoint.
pub const ENDPOINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalKind {
    Max,
    Min,
    MaxMonotone,
    MinMonotone,
}

impl ExtremalKind {
    pub const ALL: [ExtremalKind; 4] = [
        ExtremalKind::Max,
        ExtremalKind::Min,
        ExtremalKind::MaxMonotone,
        ExtremalKind::MinMonotone,
    ];

    pub fn is_monotone(self) -> bool {
        matches!(self, ExtremalKind::MaxMonotone | ExtremalKind::MinMonotone)
    }

    pub fn is_max(self) -> bool {
        matches!(self, ExtremalKind::Max | ExtremalKind::MaxMonotone)
    }

    /// The `(min, max)` pair for a monotonicity requirement.
    pub fn pair(monotone: bool) -> (ExtremalKind, ExtremalKind) {
        if monotone {
            (ExtremalKind::MinMonotone, ExtremalKind::MaxMonotone)
        } else {
            (ExtremalKind::Min, ExtremalKind::Max)
        }
    }
}

/// Named parameters of the design families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DesignParams {
    /// 1 outside `[a1, a2]`, 0 inside.
    Max { a1: f64, a2: f64 },
    /// 1 on `(b1, b2)`, 0 outside.
    Min { b1: f64, b2: f64 },
    /// `two_level(l, 1, t)`.
    MaxMonotone { l: f64, t: f64 },
    /// `two_level(0, u, s)`.
    MinMonotone { u: f64, s: f64 },
    /// Half width in quantile units.
    ThreeLevel { delta: f64 },
}

/// An extremal design with its parameters and mass-coordinate cut.
#[derive(Debug, Clone, Serialize)]
pub struct Extremal {
    pub kind: ExtremalKind,
    pub params: DesignParams,
    pub cut: f64,
    pub design: DesignFunction,
    pub moments: MomentTriple,
}

/// How the returned optimal design is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignForm {
    /// `lambda p_min + (1 - lambda) p_max`.
    Blend { lambda: f64 },
    Extremal { kind: ExtremalKind },
    TwoLevel { l: f64, u: f64, t: f64 },
    /// 1 below `a1`, 0 on `(a1, a2)`, 1 on `(a2, a3)`, 0 above `a3`.
    ThreeStrata { a1: f64, a2: f64, a3: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalDesignResult {
    pub design: DesignFunction,
    pub form: DesignForm,
    pub z_tilde: f64,
    pub xz: f64,
    pub delta: f64,
    pub xz_max: f64,
    pub monotone: bool,
    /// Attainable `[I_min, I_max]` for `E_p x^2 z`.
    pub interval: (f64, f64),
    pub selected_x2z: f64,
    pub criterion: String,
    pub criterion_value: f64,
    pub eff_inv: f64,
    pub moments: MomentTriple,
    /// `|E_p z - z_tilde|`, `|E_p xz - xz|`.
    pub feasibility_residuals: (f64, f64),
    pub lower: DesignParams,
    pub upper: DesignParams,
}

/// Mass-coordinate view of a distribution.
pub(crate) struct MassView<'a> {
    dist: &'a Distribution,
    pub theta: f64,
    pub w0: f64,
    full: [f64; 3],
}

impl<'a> MassView<'a> {
    pub fn new(dist: &'a Distribution, z_tilde: f64) -> Self {
        let theta = (1.0 + z_tilde) / 2.0;
        MassView {
            dist,
            theta,
            w0: 1.0 - theta,
            full: [dist.full_moment(0), dist.full_moment(1), dist.full_moment(2)],
        }
    }

    pub fn g(&self, a: u32, c: f64) -> f64 {
        if c <= 0.0 {
            0.0
        } else if c >= 1.0 {
            self.full[a as usize]
        } else {
            self.dist.mass_moment(a, c)
        }
    }

    /// `E(x^a p)` for the step design with `levels` on consecutive mass cells.
    pub fn step_moment(&self, a: u32, cuts: &[f64], levels: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut lo = 0.0;
        for (i, &level) in levels.iter().enumerate() {
            let hi = if i < cuts.len() { self.g(a, cuts[i]) } else { self.full[a as usize] };
            acc += level * (hi - lo);
            lo = hi;
        }
        acc
    }

    /// `E_p(x^a z) = 2 E(x^a p) - E(x^a)`.
    pub fn step_z(&self, a: u32, cuts: &[f64], levels: &[f64]) -> f64 {
        2.0 * self.step_moment(a, cuts, levels) - self.full[a as usize]
    }

    pub fn quantile(&self, c: f64) -> f64 {
        self.dist.quantile_unchecked(c)
    }
}

/// Largest attainable `E_p xz` at treatment fraction `(1 + z_tilde) / 2`.
pub fn xz_max(dist: &Distribution, z_tilde: f64) -> f64 {
    let z = z_tilde.clamp(-1.0, 1.0);
    let view = MassView::new(dist, z);
    view.step_z(1, &[view.w0], &[0.0, 1.0]).max(0.0)
}

fn cells(kind: ExtremalKind, view: &MassView, c: f64) -> (Vec<f64>, Vec<f64>) {
    match kind {
        ExtremalKind::Max => (vec![c, c + view.w0], vec![1.0, 0.0, 1.0]),
        ExtremalKind::Min => (vec![c, c + view.theta], vec![0.0, 1.0, 0.0]),
        ExtremalKind::MaxMonotone => {
            let l = if c > 0.0 { (1.0 - view.w0 / c).max(0.0) } else { 0.0 };
            (vec![c], vec![l, 1.0])
        }
        ExtremalKind::MinMonotone => {
            let u = if c < 1.0 { (view.theta / (1.0 - c)).min(1.0) } else { 1.0 };
            (vec![c], vec![0.0, u])
        }
    }
}

/// Range of the cut and whether `E_p xz` increases along it.
fn cut_range(kind: ExtremalKind, view: &MassView) -> (f64, f64, bool) {
    match kind {
        ExtremalKind::Max => (0.0, view.theta, false),
        ExtremalKind::Min => (0.0, view.w0, true),
        ExtremalKind::MaxMonotone => (view.w0, 1.0, false),
        ExtremalKind::MinMonotone => (0.0, view.w0, true),
    }
}

/// Cut at which the family coincides with the generalized RDD.
fn rdd_cut(kind: ExtremalKind, view: &MassView) -> f64 {
    match kind {
        ExtremalKind::Max => 0.0,
        _ => view.w0,
    }
}

fn params_at(kind: ExtremalKind, view: &MassView, c: f64) -> DesignParams {
    let (cuts, levels) = cells(kind, view, c);
    match kind {
        ExtremalKind::Max => DesignParams::Max {
            a1: view.quantile(cuts[0]),
            a2: view.quantile(cuts[1]),
        },
        ExtremalKind::Min => DesignParams::Min {
            b1: view.quantile(cuts[0]),
            b2: view.quantile(cuts[1]),
        },
        ExtremalKind::MaxMonotone => DesignParams::MaxMonotone {
            l: levels[0],
            t: view.quantile(c),
        },
        ExtremalKind::MinMonotone => DesignParams::MinMonotone {
            u: levels[1],
            s: view.quantile(c),
        },
    }
}

fn residual_scale(dist: &Distribution) -> f64 {
    dist.second_moment().sqrt().max(1.0)
}

pub(crate) fn check_residuals(dist: &Distribution, m: &MomentTriple, c: &Constraints, what: &str) -> Result<(f64, f64)> {
    let r = ((m.ez - c.z_tilde).abs(), (m.exz - c.xz).abs());
    if r.0 > RESIDUAL_TOL || r.1 > RESIDUAL_TOL * residual_scale(dist) {
        return Err(Error::Consistency(format!(
            "{what}: feasibility residuals ({:e}, {:e}) exceed {RESIDUAL_TOL:e}",
            r.0, r.1
        )));
    }
    Ok(r)
}

/// Solves for the mass-coordinate cut of an extremal family.
pub(crate) fn extremal_cut(view: &MassView, c: &Constraints, kind: ExtremalKind, max: f64) -> f64 {
    if c.xz >= max {
        return rdd_cut(kind, view);
    }
    if c.xz <= 0.0 {
        match kind {
            ExtremalKind::MaxMonotone => return 1.0,
            ExtremalKind::MinMonotone => return 0.0,
            _ => {}
        }
    }
    let (lo, hi, increasing) = cut_range(kind, view);
    bisect_monotone(
        |cut| {
            let (cuts, levels) = cells(kind, view, cut);
            view.step_z(1, &cuts, &levels)
        },
        lo,
        hi,
        c.xz,
        increasing,
    )
}

/// Extremal design of `E_p x^2 z` with its parameters.
pub fn solve_extremal_detailed(dist: &Distribution, c: &Constraints, kind: ExtremalKind) -> Result<Extremal> {
    let max = c.check(dist)?;
    let c = c.clamped(max);
    let view = MassView::new(dist, c.z_tilde);
    let cut = extremal_cut(&view, &c, kind, max);
    let (cuts, levels) = cells(kind, &view, cut);
    let design = DesignFunction::from_mass_steps(dist, &cuts, &levels);
    let moments = design.moments(dist);
    check_residuals(dist, &moments, &c, "extremal design")?;
    Ok(Extremal {
        kind,
        params: params_at(kind, &view, cut),
        cut,
        design,
        moments,
    })
}

pub fn solve_extremal(dist: &Distribution, c: &Constraints, kind: ExtremalKind) -> Result<DesignFunction> {
    solve_extremal_detailed(dist, c, kind).map(|e| e.design)
}

/// Closed-form design parameters for the uniform distribution on `(-1, 1)`.
///
/// `kind = None` asks for the three-level half width. Each answer is checked
/// against exact moments of the design it describes.
pub fn uniform_closed_form(c: &Constraints, kind: Option<ExtremalKind>) -> Result<DesignParams> {
    let u = Distribution::uniform();
    let max = c.check(&u)?;
    let c = c.clamped(max);
    let (z, xz) = (c.z_tilde, c.xz);
    let params = match kind {
        Some(ExtremalKind::Max) => DesignParams::Max {
            a1: -xz / (1.0 - z) - (1.0 - z) / 2.0,
            a2: -xz / (1.0 - z) + (1.0 - z) / 2.0,
        },
        Some(ExtremalKind::Min) => DesignParams::Min {
            b1: xz / (1.0 + z) - (1.0 + z) / 2.0,
            b2: xz / (1.0 + z) + (1.0 + z) / 2.0,
        },
        Some(ExtremalKind::MaxMonotone) => DesignParams::MaxMonotone {
            l: (0.5 * (1.0 - z * z - 2.0 * xz) / (1.0 - z - xz)).max(0.0),
            t: 1.0 - 2.0 * xz / (1.0 - z),
        },
        Some(ExtremalKind::MinMonotone) => DesignParams::MinMonotone {
            u: (0.5 * (1.0 + z) * (1.0 + z) / (1.0 + z - xz)).min(1.0),
            s: 2.0 * xz / (1.0 + z) - 1.0,
        },
        None => {
            let delta = 0.5 * (1.0 - z * z - 2.0 * xz).max(0.0).sqrt();
            let limit = crate::design::three_level_max_delta(z);
            if delta > limit * (1.0 + 1e-12) {
                return Err(Error::ThreeLevelInfeasible { delta, max: limit });
            }
            DesignParams::ThreeLevel { delta: delta.min(limit) }
        }
    };
    let design = design_from_params(&u, z, &params)?;
    let m = design.moments(&u);
    let r = ((m.ez - z).abs(), (m.exz - xz).abs());
    if r.0 > 1e-10 || r.1 > 1e-10 {
        return Err(Error::Consistency(format!(
            "closed form {params:?} misses the constraints by ({:e}, {:e})",
            r.0, r.1
        )));
    }
    Ok(params)
}

/// Builds the design described by `params` (thresholds on the `x` scale).
pub fn design_from_params(dist: &Distribution, z_tilde: f64, params: &DesignParams) -> Result<DesignFunction> {
    match *params {
        DesignParams::Max { a1, a2 } => {
            DesignFunction::complement_interval(a1.max(dist.support_lo()).min(a2), a2.min(dist.support_hi()).max(a1))
        }
        DesignParams::Min { b1, b2 } => {
            DesignFunction::interval_indicator(b1.max(dist.support_lo()).min(b2), b2.min(dist.support_hi()).max(b1))
        }
        DesignParams::MaxMonotone { l, t } => DesignFunction::two_level(l, 1.0, t),
        DesignParams::MinMonotone { u, s } => DesignFunction::two_level(0.0, u, s),
        DesignParams::ThreeLevel { delta } => build_design(DesignKind::ThreeLevel { z_tilde, delta }, dist),
    }
}

/// Half width of the three-level design meeting `xz`, or `None` when no
/// three-level design is feasible.
pub fn three_level_delta(dist: &Distribution, z_tilde: f64, xz: f64) -> Option<f64> {
    let view = MassView::new(dist, z_tilde);
    let limit = crate::design::three_level_max_delta(z_tilde);
    let mid = view.w0;
    let exz = |d: f64| view.step_z(1, &[mid - d, mid + d], &[0.0, 0.5, 1.0]);
    let at_limit = exz(limit);
    let top = exz(0.0);
    let slack = 1e-12 * residual_scale(dist);
    if xz < at_limit - slack || xz > top + slack {
        return None;
    }
    if xz >= top {
        return Some(0.0);
    }
    if xz <= at_limit {
        return Some(limit);
    }
    Some(bisect_monotone(exz, 0.0, limit, xz, false))
}

/// Three-level design for the constraints, if one exists.
pub fn three_level_design(dist: &Distribution, c: &Constraints) -> Option<DesignFunction> {
    let delta = three_level_delta(dist, c.z_tilde, c.xz)?;
    build_design(
        DesignKind::ThreeLevel {
            z_tilde: c.z_tilde,
            delta,
        },
        dist,
    )
    .ok()
}

/// Optimal design in blend form.
pub fn optimal_design(
    dist: &Distribution,
    c: &Constraints,
    spec: &CriterionSpec,
    monotone: bool,
) -> Result<OptimalDesignResult> {
    let (lo_kind, hi_kind) = ExtremalKind::pair(monotone);
    let lower = solve_extremal_detailed(dist, c, lo_kind)?;
    let upper = solve_extremal_detailed(dist, c, hi_kind)?;
    assemble_optimal(dist, c, spec, monotone, lower, upper)
}

pub(crate) fn assemble_optimal(
    dist: &Distribution,
    c: &Constraints,
    spec: &CriterionSpec,
    monotone: bool,
    lower: Extremal,
    upper: Extremal,
) -> Result<OptimalDesignResult> {
    let max = c.check(dist)?;
    let c = c.clamped(max);
    let ex2 = dist.second_moment();
    let (i_min, i_max) = (lower.moments.ex2z, upper.moments.ex2z);
    let (lo, hi) = (i_min.min(i_max), i_min.max(i_max));
    let x2z = select_x2z(spec, c.z_tilde, c.xz, lo, hi, ex2)?;
    let width = hi - lo;
    let snap = ENDPOINT_TOL * ex2.max(1.0);
    let (design, form) = if width <= snap || (x2z - i_min).abs() <= snap {
        (lower.design.clone(), DesignForm::Extremal { kind: lower.kind })
    } else if (i_max - x2z).abs() <= snap {
        (upper.design.clone(), DesignForm::Extremal { kind: upper.kind })
    } else {
        let lambda = ((i_max - x2z) / (i_max - i_min)).clamp(0.0, 1.0);
        (
            convex_combination(lambda, &lower.design, &upper.design)?,
            DesignForm::Blend { lambda },
        )
    };
    finish(dist, &c, spec, monotone, design, form, (lo, hi), x2z, &lower, &upper)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    dist: &Distribution,
    c: &Constraints,
    spec: &CriterionSpec,
    monotone: bool,
    design: DesignFunction,
    form: DesignForm,
    interval: (f64, f64),
    x2z: f64,
    lower: &Extremal,
    upper: &Extremal,
) -> Result<OptimalDesignResult> {
    let ex2 = dist.second_moment();
    let moments = design.moments(dist);
    let feasibility_residuals = check_residuals(dist, &moments, c, "optimal design")?;
    let xz_max = xz_max(dist, c.z_tilde);
    Ok(OptimalDesignResult {
        criterion: spec.name().to_string(),
        criterion_value: criterion_value(spec, &moments, ex2)?,
        eff_inv: eff_inv(&moments, ex2),
        design,
        form,
        z_tilde: c.z_tilde,
        xz: c.xz,
        delta: if xz_max > 0.0 { (c.xz / xz_max).min(1.0) } else { 0.0 },
        xz_max,
        monotone,
        interval,
        selected_x2z: x2z,
        moments,
        feasibility_residuals,
        lower: lower.params,
        upper: upper.params,
    })
}

/// Optimal design expressed in its canonical form (two-level when monotone,
/// three strata otherwise).
pub fn optimal_design_canonical(
    dist: &Distribution,
    c: &Constraints,
    spec: &CriterionSpec,
    monotone: bool,
) -> Result<OptimalDesignResult> {
    let blend = optimal_design(dist, c, spec, monotone)?;
    let (design, form) = canonical_form_detailed(dist, c, blend.selected_x2z, monotone)?;
    let (lo_kind, hi_kind) = ExtremalKind::pair(monotone);
    let lower = solve_extremal_detailed(dist, c, lo_kind)?;
    let upper = solve_extremal_detailed(dist, c, hi_kind)?;
    let c = c.clamped(blend.xz_max);
    finish(dist, &c, spec, monotone, design, form, blend.interval, blend.selected_x2z, &lower, &upper)
}

pub fn canonical_form(dist: &Distribution, c: &Constraints, target_x2z: f64, monotone: bool) -> Result<DesignFunction> {
    canonical_form_detailed(dist, c, target_x2z, monotone).map(|(d, _)| d)
}

/// Design matching `(z_tilde, xz, target_x2z)` in canonical form.
pub fn canonical_form_detailed(
    dist: &Distribution,
    c: &Constraints,
    target_x2z: f64,
    monotone: bool,
) -> Result<(DesignFunction, DesignForm)> {
    if !dist.has_finite_third_moment() {
        return Err(Error::Invalid("canonical forms need E|x|^3 < infinity".into()));
    }
    let max = c.check(dist)?;
    let c = c.clamped(max);
    let (lo_kind, hi_kind) = ExtremalKind::pair(monotone);
    let lower = solve_extremal_detailed(dist, &c, lo_kind)?;
    let upper = solve_extremal_detailed(dist, &c, hi_kind)?;
    let (i_min, i_max) = (lower.moments.ex2z, upper.moments.ex2z);
    let slack = 1e-12 * dist.second_moment().max(1.0);
    if target_x2z < i_min - slack || target_x2z > i_max + slack {
        return Err(Error::Invalid(format!(
            "target x2z = {target_x2z} outside the attainable interval [{i_min}, {i_max}]"
        )));
    }
    let view = MassView::new(dist, c.z_tilde);
    let mut trace = Vec::new();
    let (cuts, levels, form) = if monotone {
        monotone_canonical(&view, &c, &lower, &upper, target_x2z, &mut trace)
    } else {
        strata_canonical(&view, &c, &upper, target_x2z, &mut trace)
    };
    let design = DesignFunction::from_mass_steps(dist, &cuts, &levels);
    let m = design.moments(dist);
    let bad = (m.ez - c.z_tilde).abs() > RESIDUAL_TOL
        || (m.exz - c.xz).abs() > RESIDUAL_TOL * residual_scale(dist)
        || (m.ex2z - target_x2z).abs() > RESIDUAL_TOL * dist.second_moment().max(1.0);
    if bad {
        return Err(Error::Bracket {
            message: format!(
                "canonical search missed the targets: moments ({}, {}, {}) vs ({}, {}, {})",
                m.ez, m.exz, m.ex2z, c.z_tilde, c.xz, target_x2z
            ),
            trace,
        });
    }
    Ok((design, form))
}

/// Two-level `(l, u)` with the jump at mass `cut` meeting both linear constraints.
fn two_level_at(view: &MassView, c: &Constraints, cut: f64) -> (f64, f64) {
    let g1 = view.g(1, cut);
    let f1 = view.full[1];
    let h = (c.xz + f1) / 2.0;
    let denom = cut * f1 - g1;
    if denom <= 0.0 {
        return (view.theta, view.theta);
    }
    let d = (h - view.theta * f1) / denom;
    let l = view.theta - d * (1.0 - cut);
    (l.clamp(0.0, 1.0), (l + d).clamp(0.0, 1.0))
}

fn monotone_canonical(
    view: &MassView,
    c: &Constraints,
    lower: &Extremal,
    upper: &Extremal,
    target: f64,
    trace: &mut Vec<(f64, f64)>,
) -> (Vec<f64>, Vec<f64>, DesignForm) {
    let x2z_at = |cut: f64| {
        let (l, u) = two_level_at(view, c, cut);
        view.step_z(2, &[cut], &[l, u])
    };
    let (lo, hi) = (lower.cut.min(upper.cut), lower.cut.max(upper.cut));
    let increasing = x2z_at(hi) >= x2z_at(lo);
    let cut = bisect_monotone(
        |cut| {
            let v = x2z_at(cut);
            trace.push((cut, v - target));
            v
        },
        lo,
        hi,
        target,
        increasing,
    );
    // at an end of the bracket the extremal levels are exact
    let (l, u) = if cut == upper.cut || cut == lower.cut {
        let kind = if cut == upper.cut { upper.kind } else { lower.kind };
        let levels = cells(kind, view, cut).1;
        (levels[0], levels[1])
    } else {
        two_level_at(view, c, cut)
    };
    let t = view.quantile(cut);
    (vec![cut], vec![l, u], DesignForm::TwoLevel { l, u, t })
}

/// Inner cut `c2` placing a treated window of mass `theta - c1` after an
/// untreated gap so that `E_p xz` hits its target.
fn strata_inner(view: &MassView, c: &Constraints, c1: f64) -> f64 {
    let width = (view.theta - c1).max(0.0);
    let exz = |c2: f64| view.step_z(1, &[c1, c2, c2 + width], &[1.0, 0.0, 1.0, 0.0]);
    bisect_monotone(exz, c1, (c1 + view.w0).min(1.0), c.xz, true)
}

fn strata_canonical(
    view: &MassView,
    c: &Constraints,
    upper: &Extremal,
    target: f64,
    trace: &mut Vec<(f64, f64)>,
) -> (Vec<f64>, Vec<f64>, DesignForm) {
    let levels = [1.0, 0.0, 1.0, 0.0];
    let cuts_at = |c1: f64| {
        let c2 = strata_inner(view, c, c1);
        [c1, c2, c2 + (view.theta - c1).max(0.0)]
    };
    let c1 = bisect_monotone(
        |c1| {
            let v = view.step_z(2, &cuts_at(c1), &levels);
            trace.push((c1, v - target));
            v
        },
        0.0,
        upper.cut,
        target,
        true,
    );
    let cuts = cuts_at(c1);
    let form = DesignForm::ThreeStrata {
        a1: view.quantile(cuts[0]),
        a2: view.quantile(cuts[1]),
        a3: view.quantile(cuts[2]),
    };
    (cuts.to_vec(), levels.to_vec(), form)
}

/// One row of an exploration/exploitation trade-off sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRecord {
    pub delta: f64,
    pub xz: f64,
    pub x2z_star_opt: f64,
    pub x2z_star_mon: f64,
    pub eff_inv_three_level: Option<f64>,
    pub eff_inv_opt_monotone: f64,
    pub eff_inv_opt: f64,
    pub delta_3: Option<f64>,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub lambda_opt: f64,
    pub l: f64,
    pub t: f64,
    pub u: f64,
    pub s: f64,
    pub lambda_mon: f64,
    pub criterion_opt: f64,
    pub criterion_mon: f64,
}

fn lambda_of(form: &DesignForm) -> f64 {
    match *form {
        DesignForm::Blend { lambda } => lambda,
        DesignForm::Extremal { kind } => {
            if kind.is_max() {
                0.0
            } else {
                1.0
            }
        }
        _ => f64::NAN,
    }
}

fn sweep_point(dist: &Distribution, z_tilde: f64, delta: f64, spec: &CriterionSpec) -> Result<TradeoffRecord> {
    let c = Constraints::from_delta(dist, z_tilde, delta)?;
    let opt = optimal_design(dist, &c, spec, false)?;
    let mon = optimal_design(dist, &c, spec, true)?;
    let ex2 = dist.second_moment();
    let delta_3 = three_level_delta(dist, z_tilde, c.xz);
    let eff_inv_three_level = delta_3.and_then(|d| {
        build_design(DesignKind::ThreeLevel { z_tilde, delta: d }, dist)
            .ok()
            .map(|p| eff_inv(&p.moments(dist), ex2))
    });
    let (mut a1, mut a2, mut b1, mut b2) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    let (mut l, mut t, mut u, mut s) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    for p in [opt.lower, opt.upper, mon.lower, mon.upper] {
        match p {
            DesignParams::Max { a1: x, a2: y } => (a1, a2) = (x, y),
            DesignParams::Min { b1: x, b2: y } => (b1, b2) = (x, y),
            DesignParams::MaxMonotone { l: x, t: y } => (l, t) = (x, y),
            DesignParams::MinMonotone { u: x, s: y } => (u, s) = (x, y),
            DesignParams::ThreeLevel { .. } => {}
        }
    }
    Ok(TradeoffRecord {
        delta,
        xz: c.xz,
        x2z_star_opt: opt.selected_x2z,
        x2z_star_mon: mon.selected_x2z,
        eff_inv_three_level,
        eff_inv_opt_monotone: mon.eff_inv,
        eff_inv_opt: opt.eff_inv,
        delta_3,
        a1,
        a2,
        b1,
        b2,
        lambda_opt: lambda_of(&opt.form),
        l,
        t,
        u,
        s,
        lambda_mon: lambda_of(&mon.form),
        criterion_opt: opt.criterion_value,
        criterion_mon: mon.criterion_value,
    })
}

/// Solves every grid point (in parallel), returning records in grid order.
pub fn tradeoff_sweep(
    dist: &Distribution,
    z_tilde: f64,
    grid: &[f64],
    spec: &CriterionSpec,
) -> Result<Vec<TradeoffRecord>> {
    if let Some(bad) = grid.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::Invalid(format!("grid value {bad} outside [0, 1]")));
    }
    grid.par_iter().map(|&d| sweep_point(dist, z_tilde, d, spec)).collect()
}

/// `n` equally spaced values from 0 to 1 inclusive.
pub fn delta_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

pub const SWEEP_COLUMNS: [&str; 20] = [
    "delta",
    "xz",
    "x2z_star_opt",
    "x2z_star_mon",
    "eff_inv_three_level",
    "eff_inv_opt_monotone",
    "eff_inv_opt",
    "delta_3",
    "a1",
    "a2",
    "b1",
    "b2",
    "lambda_opt",
    "l",
    "t",
    "u",
    "s",
    "lambda_mon",
    "criterion_opt",
    "criterion_mon",
];

fn field(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn write_sweep_csv<W: Write>(records: &[TradeoffRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", SWEEP_COLUMNS.join(","))?;
    for r in records {
        let row = [
            r.delta,
            r.xz,
            r.x2z_star_opt,
            r.x2z_star_mon,
            r.eff_inv_three_level.unwrap_or(f64::NAN),
            r.eff_inv_opt_monotone,
            r.eff_inv_opt,
            r.delta_3.unwrap_or(f64::NAN),
            r.a1,
            r.a2,
            r.b1,
            r.b2,
            r.lambda_opt,
            r.l,
            r.t,
            r.u,
            r.s,
            r.lambda_mon,
            r.criterion_opt,
            r.criterion_mon,
        ];
        let fields: Vec<String> = row.iter().map(|&v| field(v)).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// True when `F` is the built-in uniform law.
pub fn is_uniform(dist: &Distribution) -> bool {
    matches!(dist.kind(), Kind::Uniform)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_c(z: f64, xz: f64) -> (Distribution, Constraints) {
        (Distribution::uniform(), Constraints::new(z, xz))
    }

    #[test]
    fn xz_max_examples() {
        let u = Distribution::uniform();
        assert!((xz_max(&u, 0.0) - 0.5).abs() < 1e-15);
        assert!((xz_max(&u, -0.7) - 0.255).abs() < 1e-15);
        assert_eq!(xz_max(&u, 1.0), 0.0);
        let w = Distribution::weibull(2.0, 1.0).unwrap();
        assert_eq!(xz_max(&w, 1.0), 0.0);
    }

    #[test]
    fn max_monotone_matches_section_numbers() {
        let (u, c) = uniform_c(-0.7, 0.25);
        let e = solve_extremal_detailed(&u, &c, ExtremalKind::MaxMonotone).unwrap();
        let DesignParams::MaxMonotone { l, t } = e.params else { panic!() };
        assert!((l - 0.5 * 0.01 / 1.45).abs() < 1e-12);
        assert!((t - (1.0 - 0.5 / 1.7)).abs() < 1e-12);
    }

    #[test]
    fn max_matches_closed_form() {
        let (u, c) = uniform_c(-0.7, 0.25);
        let e = solve_extremal_detailed(&u, &c, ExtremalKind::Max).unwrap();
        let DesignParams::Max { a1, a2 } = e.params else { panic!() };
        assert!((a1 + 0.997_058_823_529_411_8).abs() < 1e-12);
        assert!((a2 - 0.702_941_176_470_588_2).abs() < 1e-12);
        assert!(!e.design.is_monotone());
    }

    #[test]
    fn closed_forms_agree_with_bisection() {
        for &(z, d) in &[(-0.7, 0.98), (-0.5, 0.3), (0.0, 0.5), (0.3, 0.1), (0.6, 0.9)] {
            let u = Distribution::uniform();
            let c = Constraints::from_delta(&u, z, d).unwrap();
            for kind in ExtremalKind::ALL {
                let closed = uniform_closed_form(&c, Some(kind)).unwrap();
                let generic = solve_extremal_detailed(&u, &c, kind).unwrap().params;
                let (a, b) = match (closed, generic) {
                    (DesignParams::Max { a1, a2 }, DesignParams::Max { a1: x, a2: y })
                    | (DesignParams::Min { b1: a1, b2: a2 }, DesignParams::Min { b1: x, b2: y })
                    | (DesignParams::MaxMonotone { l: a1, t: a2 }, DesignParams::MaxMonotone { l: x, t: y })
                    | (DesignParams::MinMonotone { u: a1, s: a2 }, DesignParams::MinMonotone { u: x, s: y }) => {
                        ((a1 - x).abs(), (a2 - y).abs())
                    }
                    _ => panic!("kind mismatch"),
                };
                assert!(a < 1e-10 && b < 1e-10, "{kind:?} z={z} d={d}: {closed:?} vs {generic:?}");
            }
        }
    }

    #[test]
    fn three_level_delta_examples() {
        let (u, c) = uniform_c(-0.7, 0.25);
        let DesignParams::ThreeLevel { delta } = uniform_closed_form(&c, None).unwrap() else { panic!() };
        assert!((delta - 0.05).abs() < 1e-12);
        let generic = three_level_delta(&u, -0.7, 0.25).unwrap();
        assert!((generic - 0.05).abs() < 1e-12);
        // below the gain of the widest three-level design nothing is feasible
        assert!(three_level_delta(&u, -0.7, 0.05).is_none());
        assert!(uniform_closed_form(&Constraints::new(-0.7, 0.05), None).is_err());
    }

    #[test]
    fn boundary_designs() {
        let u = Distribution::uniform();
        let c = Constraints::new(-0.4, 0.0);
        for kind in [ExtremalKind::MaxMonotone, ExtremalKind::MinMonotone] {
            let p = solve_extremal(&u, &c, kind).unwrap();
            assert!(p.equivalent(&DesignFunction::constant(0.3).unwrap(), &u, 1e-14), "{kind:?}");
        }
        let c = Constraints::from_delta(&u, -0.4, 1.0).unwrap();
        let rdd = build_design(DesignKind::GeneralizedRdd { z_tilde: -0.4 }, &u).unwrap();
        for kind in ExtremalKind::ALL {
            let p = solve_extremal(&u, &c, kind).unwrap();
            assert!(p.equivalent(&rdd, &u, 1e-12), "{kind:?}");
        }
    }

    #[test]
    fn infeasible_constraints() {
        let u = Distribution::uniform();
        let err = solve_extremal(&u, &Constraints::new(-0.7, 0.3), ExtremalKind::Max).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        assert!(solve_extremal(&u, &Constraints::new(0.0, -0.1), ExtremalKind::Max).is_err());
        assert!(solve_extremal(&u, &Constraints::new(1.0, 0.0), ExtremalKind::Max).is_err());
    }

    #[test]
    fn table_two_optimal_designs() {
        let (u, c) = uniform_c(-0.7, 0.25);
        let mon = optimal_design(&u, &c, &CriterionSpec::Eff, true).unwrap();
        assert!((mon.eff_inv - 54.897).abs() < 0.01, "{}", mon.eff_inv);
        assert_eq!(mon.form, DesignForm::Extremal { kind: ExtremalKind::MaxMonotone });
        let opt = optimal_design(&u, &c, &CriterionSpec::Eff, false).unwrap();
        assert!((opt.eff_inv - 42.367).abs() < 0.01, "{}", opt.eff_inv);
        assert_eq!(opt.form, DesignForm::Extremal { kind: ExtremalKind::Max });
    }

    #[test]
    fn blend_hits_interior_target() {
        let (u, c) = uniform_c(0.2, 0.2);
        let r = optimal_design(&u, &c, &CriterionSpec::Eff, false).unwrap();
        assert!(matches!(r.form, DesignForm::Blend { .. }), "{:?}", r.form);
        assert!((r.moments.ex2z - r.selected_x2z).abs() < 1e-12);
    }

    #[test]
    fn canonical_forms_match_targets() {
        let u = Distribution::uniform();
        let c = Constraints::new(-0.5, 0.1);
        let lo = solve_extremal_detailed(&u, &c, ExtremalKind::Min).unwrap().moments.ex2z;
        let hi = solve_extremal_detailed(&u, &c, ExtremalKind::Max).unwrap().moments.ex2z;
        let target = 0.3 * lo + 0.7 * hi;
        let (p, form) = canonical_form_detailed(&u, &c, target, false).unwrap();
        assert!(matches!(form, DesignForm::ThreeStrata { .. }));
        assert!((p.moments(&u).ex2z - target).abs() < 1e-10);

        let lo = solve_extremal_detailed(&u, &c, ExtremalKind::MinMonotone).unwrap().moments.ex2z;
        let hi = solve_extremal_detailed(&u, &c, ExtremalKind::MaxMonotone).unwrap().moments.ex2z;
        let target = 0.5 * (lo + hi);
        let (p, form) = canonical_form_detailed(&u, &c, target, true).unwrap();
        assert!(matches!(form, DesignForm::TwoLevel { .. }));
        assert!(p.is_monotone());
        assert!((p.moments(&u).ex2z - target).abs() < 1e-10);
        assert!(canonical_form(&u, &c, hi + 0.1, true).is_err());
    }

    #[test]
    fn canonical_at_upper_endpoint_is_extremal() {
        let (u, c) = uniform_c(-0.7, 0.25);
        let e = solve_extremal_detailed(&u, &c, ExtremalKind::MaxMonotone).unwrap();
        let (p, form) = canonical_form_detailed(&u, &c, e.moments.ex2z, true).unwrap();
        let DesignForm::TwoLevel { u: up, .. } = form else { panic!() };
        assert_eq!(up, 1.0);
        assert!(p.equivalent(&e.design, &u, 1e-10));
    }

    #[test]
    fn sweep_shape_and_order() {
        let u = Distribution::uniform();
        let grid = delta_grid(11);
        let recs = tradeoff_sweep(&u, -0.5, &grid, &CriterionSpec::Eff).unwrap();
        assert_eq!(recs.len(), 11);
        for (r, d) in recs.iter().zip(&grid) {
            assert_eq!(r.delta, *d);
            assert!((r.xz - d * 0.375).abs() < 1e-12);
        }
        assert!((1.0 / recs[0].eff_inv_opt_monotone - 0.25).abs() < 1e-12);
        assert!((1.0 / recs[0].eff_inv_opt - 1.0 / 3.0).abs() < 1e-9);
        let mut buf = Vec::new();
        write_sweep_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 12);
        assert!(text.starts_with("delta,xz,x2z_star_opt"));
    }
}
