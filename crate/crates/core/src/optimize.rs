//! Bounded scalar minimization: golden-section search with parabolic
//! interpolation steps (Brent's `localmin`).

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - √5) / 2
const SQRT_EPS: f64 = 1.490_116_119_384_765_6e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub evals: usize,
}

/// Minimizes `f` on `[lo, hi]` starting from `x0`, stopping once the
/// bracket is within `xtol` (plus a `√ε·|x|` relative term) of the iterate.
///
/// Non-finite values of `f` are treated as `+∞` and only drive golden
/// steps.
pub fn brent_bounded<F>(mut f: F, lo: f64, hi: f64, x0: f64, xtol: f64, max_evals: usize) -> Minimum
where
    F: FnMut(f64) -> f64,
{
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x = x0.clamp(a, b);
    let (mut w, mut v) = (x, x);
    let mut fx = eval(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut evals = 1;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    while evals < max_evals {
        let m = 0.5 * (a + b);
        let tol = SQRT_EPS * x.abs() + xtol / 3.0;
        let t2 = 2.0 * tol;
        if (x - m).abs() <= t2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let mut r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < t2 || b - u < t2 {
                    d = if x < m { tol } else { -tol };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol {
            x + d
        } else if d > 0.0 {
            x + tol
        } else {
            x - tol
        };
        let fu = eval(u);
        evals += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
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
    Minimum { x, fx, evals }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let m = brent_bounded(|x| (x - 1.3).powi(2) + 2.0, 0.0, 5.0, 2.5, 1e-10, 200);
        assert!((m.x - 1.3).abs() < 1e-7);
        assert!((m.fx - 2.0).abs() < 1e-14);
        assert!(m.evals < 20);
    }

    #[test]
    fn minimum_on_boundary() {
        let m = brent_bounded(|x| x, 1.0, 3.0, 2.0, 1e-9, 200);
        assert!((m.x - 1.0).abs() < 1e-7);
    }

    #[test]
    fn non_smooth_and_infinite_regions() {
        let m = brent_bounded(|x| if x < 0.5 { f64::INFINITY } else { (x - 2.0).abs() }, 0.0, 4.0, 3.0, 1e-9, 500);
        assert!((m.x - 2.0).abs() < 1e-6);
        let m = brent_bounded(|x| -(x.sin()), 0.0, 3.0, 0.1, 1e-10, 200);
        assert!((m.x - std::f64::consts::FRAC_PI_2).abs() < 1e-7);
    }
}
