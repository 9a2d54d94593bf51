//! Fixed-x problems: the running variable takes finitely many values.
//!
//! Monotone extremal designs use a binary search over support points with a
//! closed-form value at the threshold atom, so each candidate costs O(1)
//! given prefix sums. Non-monotone extremals and the generic fallbacks reuse
//! the mass-coordinate machinery of the continuous solver, which splits atoms
//! exactly.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::criteria::{Constraints, CriterionSpec};
use crate::design::DesignFunction;
use crate::dist::{Distribution, Empirical};
use crate::error::{Error, Result};
use crate::lp::{maximize, LinearProgram};
use crate::solve_continuous::{
    assemble_optimal, canonical_form_detailed, check_residuals, solve_extremal_detailed, DesignForm, DesignParams,
    Extremal, ExtremalKind, OptimalDesignResult,
};

/// Largest support accepted by [`lp_oracle_discrete`].
pub const LP_ORACLE_MAX_SUPPORT: usize = 200;

/// A discrete running-variable law with cached prefix sums.
#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    dist: Distribution,
    emp: Arc<Empirical>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Max,
    Min,
}

impl DiscreteInstance {
    /// Empirical law of a sample (centered, ties merged).
    pub fn from_sample(sample: &[f64]) -> Result<Self> {
        DiscreteInstance::from_distribution(Distribution::empirical(sample)?)
    }

    pub fn from_distribution(dist: Distribution) -> Result<Self> {
        let emp = dist
            .empirical_data()
            .cloned()
            .ok_or_else(|| Error::Invalid(format!("{dist} is not a discrete distribution")))?;
        Ok(DiscreteInstance { dist, emp })
    }

    pub fn distribution(&self) -> &Distribution {
        &self.dist
    }

    pub fn len(&self) -> usize {
        self.emp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emp.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.emp.values()
    }

    pub fn masses(&self) -> &[f64] {
        self.emp.masses()
    }

    pub fn prefix(&self, a: u32) -> &[f64] {
        self.emp.prefix(a)
    }

    fn reflected(&self) -> DiscreteInstance {
        DiscreteInstance::from_distribution(self.dist.reflected()).expect("reflection keeps the law discrete")
    }
}

/// `E_p(xz)` of `l` below atom `k`, `eps` at `k`, 1 above.
fn monotone_exz(inst: &DiscreteInstance, theta: f64, k: usize, eps: f64) -> f64 {
    let (s0, s1) = (inst.prefix(0), inst.prefix(1));
    let n = inst.len();
    let m = inst.masses()[k];
    let v = inst.values()[k];
    let upper = s0[n] - s0[k + 1];
    let l = if s0[k] > 0.0 { (theta - upper - eps * m) / s0[k] } else { 0.0 };
    2.0 * (l * s1[k] + eps * m * v + s1[n] - s1[k + 1]) - s1[n]
}

/// Maximizing monotone design `(l, k, eps)` for the constraints.
fn max_monotone_atoms(inst: &DiscreteInstance, c: &Constraints, xz_max: f64) -> (f64, usize, f64) {
    let (s0, s1) = (inst.prefix(0), inst.prefix(1));
    let n = inst.len();
    let total = s0[n];
    let theta = (total + c.z_tilde) / 2.0;
    let w0 = total - theta;
    // the generalized RDD splits the atom holding mass coordinate w0
    let k_star = s0[1..].partition_point(|&s| s < w0).min(n - 1);
    let f = |k: usize| 2.0 * (s1[n] - w0 * s1[k] / s0[k]) - s1[n];

    let mut k = k_star;
    if c.xz < xz_max && k_star + 1 < n && f(k_star + 1) >= c.xz {
        // f decreases in k: largest k in (k*, n-1] with f(k) >= xz
        let (mut lo, mut hi) = (k_star + 1, n - 1);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if f(mid) >= c.xz {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        k = lo;
    }

    let m = inst.masses()[k];
    let upper = total - s0[k + 1];
    if s0[k] <= 0.0 {
        let eps = ((theta - upper) / m).clamp(0.0, 1.0);
        return (0.0, k, eps);
    }
    // E_p(xz) is affine in eps at fixed k
    let a = monotone_exz(inst, theta, k, 0.0);
    let b = 2.0 * m * (inst.values()[k] - s1[k] / s0[k]);
    let eps_hi = ((theta - upper) / m).min(1.0);
    let eps_lo = (1.0 - w0 / s0[k + 1]).max(0.0);
    let eps = if c.xz >= xz_max {
        eps_hi
    } else if b > 0.0 {
        ((c.xz - a) / b).clamp(eps_lo, eps_hi)
    } else {
        eps_hi
    };
    let l = ((theta - upper - eps * m) / s0[k]).clamp(0.0, eps);
    (l, k, eps)
}

/// `l` below atom `k`, `eps` at it, 1 above, without touching the other atoms.
fn single_jump(values: &[f64], l: f64, k: usize, eps: f64) -> DesignFunction {
    let lo = k.saturating_sub(1);
    let hi = (k + 2).min(values.len());
    let p: Vec<f64> = (lo..hi)
        .map(|i| match i.cmp(&k) {
            std::cmp::Ordering::Less => l,
            std::cmp::Ordering::Equal => eps,
            std::cmp::Ordering::Greater => 1.0,
        })
        .collect();
    DesignFunction::from_atom_values(&values[lo..hi], &p)
}

fn max_monotone_extremal(inst: &DiscreteInstance, c: &Constraints) -> Result<Extremal> {
    let dist = &inst.dist;
    let xz_max = c.check(dist)?;
    let c = c.clamped(xz_max);
    let n = inst.len();
    let (l, k, eps) = if c.xz <= 0.0 {
        let theta = (1.0 + c.z_tilde) / 2.0;
        (theta, n - 1, theta)
    } else {
        max_monotone_atoms(inst, &c, xz_max)
    };
    let design = single_jump(inst.values(), l, k, eps);
    let moments = design.moments(dist);
    check_residuals(dist, &moments, &c, "discrete monotone extremal")?;
    let w0 = (1.0 - c.z_tilde) / 2.0;
    Ok(Extremal {
        kind: ExtremalKind::MaxMonotone,
        params: DesignParams::MaxMonotone {
            l,
            t: inst.values()[k],
        },
        cut: if l < 1.0 { w0 / (1.0 - l) } else { 1.0 },
        design,
        moments,
    })
}

/// Extremal design with parameters, for a discrete instance.
pub fn solve_extremal_discrete_detailed(inst: &DiscreteInstance, c: &Constraints, kind: ExtremalKind) -> Result<Extremal> {
    match kind {
        ExtremalKind::MaxMonotone => max_monotone_extremal(inst, c),
        ExtremalKind::MinMonotone => {
            c.check(&inst.dist)?;
            // p(x) = 1 - q(-x) maps the minimizer onto a maximizer for -x
            let mirrored = Constraints::new(-c.z_tilde, c.xz);
            let e = max_monotone_extremal(&inst.reflected(), &mirrored)?;
            let DesignParams::MaxMonotone { l, t } = e.params else {
                unreachable!("max monotone extremal carries (l, t)")
            };
            let design = e.design.reflected();
            let moments = design.moments(&inst.dist);
            let max = c.check(&inst.dist)?;
            check_residuals(&inst.dist, &moments, &c.clamped(max), "discrete monotone extremal")?;
            Ok(Extremal {
                kind,
                params: DesignParams::MinMonotone { u: 1.0 - l, s: -t },
                cut: 1.0 - e.cut,
                design,
                moments,
            })
        }
        ExtremalKind::Max | ExtremalKind::Min => solve_extremal_detailed(&inst.dist, c, kind),
    }
}

pub fn solve_extremal_discrete(inst: &DiscreteInstance, c: &Constraints, kind: ExtremalKind) -> Result<DesignFunction> {
    solve_extremal_discrete_detailed(inst, c, kind).map(|e| e.design)
}

/// Optimal design for a discrete instance, in blend form or (with
/// `canonical`) as a single-jump or three-strata design.
pub fn optimal_design_discrete(
    inst: &DiscreteInstance,
    c: &Constraints,
    spec: &CriterionSpec,
    monotone: bool,
    canonical: bool,
) -> Result<OptimalDesignResult> {
    let (lo_kind, hi_kind) = ExtremalKind::pair(monotone);
    let lower = solve_extremal_discrete_detailed(inst, c, lo_kind)?;
    let upper = solve_extremal_discrete_detailed(inst, c, hi_kind)?;
    let mut result = assemble_optimal(&inst.dist, c, spec, monotone, lower, upper)?;
    if canonical {
        let c = c.clamped(result.xz_max);
        let (design, form) = if monotone {
            match canonical_monotone_discrete(inst, &c, result.selected_x2z) {
                Some(found) => found,
                None => canonical_form_detailed(&inst.dist, &c, result.selected_x2z, true)?,
            }
        } else {
            canonical_form_detailed(&inst.dist, &c, result.selected_x2z, false)?
        };
        let moments = design.moments(&inst.dist);
        result.feasibility_residuals = check_residuals(&inst.dist, &moments, &c, "canonical design")?;
        let ex2 = inst.dist.second_moment();
        result.criterion_value = crate::criteria::criterion_value(spec, &moments, ex2)?;
        result.eff_inv = crate::criteria::eff_inv(&moments, ex2);
        result.moments = moments;
        result.design = design;
        result.form = form;
    }
    Ok(result)
}

/// `(l', u', t', eps')`: `l'` below atom `t'`, `eps'` at it, `u'` above.
///
/// Loops over the atom index and solves the three moment equations, which are
/// linear in `(l', eps', u')`, keeping the first admissible solution.
pub fn canonical_monotone_discrete(
    inst: &DiscreteInstance,
    c: &Constraints,
    target_x2z: f64,
) -> Option<(DesignFunction, DesignForm)> {
    let n = inst.len();
    let (s0, s1, s2) = (inst.prefix(0), inst.prefix(1), inst.prefix(2));
    let (values, masses) = (inst.values(), inst.masses());
    let rhs = Vector3::new(
        (s0[n] + c.z_tilde) / 2.0,
        (s1[n] + c.xz) / 2.0,
        (s2[n] + target_x2z) / 2.0,
    );
    let tol = 1e-12;
    for k in 1..n.saturating_sub(1) {
        let (m, v) = (masses[k], values[k]);
        let a = Matrix3::new(
            s0[k], m, s0[n] - s0[k + 1], //
            s1[k], m * v, s1[n] - s1[k + 1], //
            s2[k], m * v * v, s2[n] - s2[k + 1],
        );
        let Some(sol) = a.lu().solve(&rhs) else {
            continue;
        };
        let (l, eps, u) = (sol[0], sol[1], sol[2]);
        if !(l >= -tol && l <= eps + tol && eps <= u + tol && u <= 1.0 + tol) {
            continue;
        }
        let l = l.clamp(0.0, 1.0);
        let u = u.clamp(l, 1.0);
        let eps = eps.clamp(l, u);
        let mut p = vec![l; n];
        p[k] = eps;
        for x in &mut p[k + 1..] {
            *x = u;
        }
        let design = DesignFunction::from_atom_values(values, &p);
        let mm = design.moments(&inst.dist);
        let scale = inst.dist.second_moment().max(1.0);
        if (mm.ez - c.z_tilde).abs() > 1e-10
            || (mm.exz - c.xz).abs() > 1e-10 * scale
            || (mm.ex2z - target_x2z).abs() > 1e-10 * scale
        {
            continue;
        }
        return Some((design, DesignForm::TwoLevel { l, u, t: v }));
    }
    None
}

/// Exact LP optimum of `E_p(x^2 z)` over feasible designs on the support.
///
/// Returns the objective and one optimal vertex `p`.
pub fn lp_oracle_discrete(inst: &DiscreteInstance, c: &Constraints, sense: Sense, monotone: bool) -> Result<(f64, Vec<f64>)> {
    let n = inst.len();
    if n > LP_ORACLE_MAX_SUPPORT {
        return Err(Error::Invalid(format!(
            "LP oracle supports at most {LP_ORACLE_MAX_SUPPORT} support points, got {n}"
        )));
    }
    let (values, masses) = (inst.values(), inst.masses());
    let sign = if sense == Sense::Max { 1.0 } else { -1.0 };
    let total: f64 = masses.iter().sum();
    let s1: f64 = masses.iter().zip(values).map(|(m, v)| m * v).sum();
    let s2: f64 = masses.iter().zip(values).map(|(m, v)| m * v * v).sum();
    let mut lp = LinearProgram {
        objective: masses.iter().zip(values).map(|(m, v)| sign * 2.0 * m * v * v).collect(),
        eq: vec![
            (masses.to_vec(), (total + c.z_tilde) / 2.0),
            (masses.iter().zip(values).map(|(m, v)| m * v).collect(), (s1 + c.xz) / 2.0),
        ],
        le: Vec::new(),
    };
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        lp.le.push((row, 1.0));
    }
    if monotone {
        for i in 0..n - 1 {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            row[i + 1] = -1.0;
            lp.le.push((row, 0.0));
        }
    }
    let sol = maximize(&lp).map_err(|e| match e {
        Error::Invalid(msg) if msg.contains("infeasible") => Error::Infeasible {
            message: msg,
            z_tilde: c.z_tilde,
            xz: c.xz,
            xz_max: crate::solve_continuous::xz_max(&inst.dist, c.z_tilde),
        },
        other => other,
    })?;
    let p: Vec<f64> = sol.x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let objective = 2.0 * masses.iter().zip(values).zip(&p).map(|((m, v), q)| m * v * v * q).sum::<f64>() - s2;
    Ok((objective, p))
}

/// Writes `x,p` for every subject, with `x` on the original (uncentered) scale.
pub fn write_subject_probabilities<W: Write>(
    sample: &[f64],
    dist: &Distribution,
    design: &DesignFunction,
    mut out: W,
) -> std::io::Result<()> {
    let shift = dist.centering_shift();
    writeln!(out, "x,p")?;
    for &x in sample {
        // atoms were centered once, so recentering each raw value lands on them exactly
        let centered = match dist.empirical_data() {
            Some(emp) => {
                let target = x - shift;
                let k = emp.values().partition_point(|&v| v < target);
                let pick = [k.saturating_sub(1), k.min(emp.len() - 1)]
                    .into_iter()
                    .min_by(|&a, &b| (emp.values()[a] - target).abs().total_cmp(&(emp.values()[b] - target).abs()))
                    .unwrap();
                emp.values()[pick]
            }
            None => x - shift,
        };
        writeln!(out, "{},{}", x, design.eval(centered))?;
    }
    Ok(())
}
