//! Scalar root bracketing and one-dimensional maximization.

/// Iteration cap for bisection; far more than the 64 halvings a double can absorb.
pub const MAX_BISECTIONS: usize = 200;

/// Solves `f(x) = target` on `[lo, hi]` for a monotone `f` by bisection.
///
/// `increasing` gives the direction of monotonicity. Bisection runs until the
/// bracket cannot be split further in floating point, so the returned point
/// is as close to the crossing as the representation allows. When the target
/// lies outside `[f(lo), f(hi)]` the nearer endpoint is returned.
pub fn bisect_monotone<F>(mut f: F, mut lo: f64, mut hi: f64, target: f64, increasing: bool) -> f64
where
    F: FnMut(f64) -> f64,
{
    let sign = if increasing { 1.0 } else { -1.0 };
    let g_lo = sign * (f(lo) - target);
    if g_lo >= 0.0 {
        return lo;
    }
    let g_hi = sign * (f(hi) - target);
    if g_hi <= 0.0 {
        return hi;
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g = sign * (f(mid) - target);
        if g == 0.0 {
            return mid;
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the side with the smaller residual
    let r_lo = (f(lo) - target).abs();
    let r_hi = (f(hi) - target).abs();
    if r_lo <= r_hi {
        lo
    } else {
        hi
    }
}

/// Brent's method for the maximum of `f` on `[a, b]`.
///
/// Golden-section steps with parabolic interpolation when it is safe. Returns
/// `(argmax, max)`. Assumes a single local maximum inside the bracket.
pub fn brent_maximize<F>(mut f: F, a: f64, b: f64, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    const MAX_ITER: usize = 500;
    let mut neg = |x: f64| -f(x);

    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    if a == b {
        let v = -neg(a);
        return (a, v);
    }
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = neg(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for _ in 0..MAX_ITER {
        let m = 0.5 * (a + b);
        let tol1 = xtol.max(f64::EPSILON * x.abs()) + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = neg(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

/// Maximizes a continuous `f` on `[lo, hi]` without assuming unimodality.
///
/// Scans `grid` equally spaced points, then refines around the best one with
/// [`brent_maximize`]. The refined point is kept only if it improves on the
/// grid value.
pub fn grid_then_brent<F>(mut f: F, lo: f64, hi: f64, grid: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    if hi <= lo {
        return (lo, f(lo));
    }
    let grid = grid.max(3);
    let step = (hi - lo) / (grid - 1) as f64;
    let point = |i: usize| if i + 1 == grid { hi } else { lo + step * i as f64 };
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..grid {
        let v = f(point(i));
        if v > best_v || best_v.is_nan() {
            best_v = v;
            best_i = i;
        }
    }
    let best_x = point(best_i);
    let a = point(best_i.saturating_sub(1));
    let b = point((best_i + 1).min(grid - 1));
    let (x, v) = brent_maximize(&mut f, a, b, 1e-14 * (1.0 + best_x.abs()));
    if v >= best_v {
        (x, v)
    } else {
        (best_x, best_v)
    }
}
