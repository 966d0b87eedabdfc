//! Equilibrium operating points and the constants `w`, `f⁽¹⁾`, `f⁽²⁾` that
//! enter the global-stability condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Feedback, GeneralizedSystem};

/// Grid resolution of the numeric secant-slope maximization.
pub const MAX_GRID_POINTS: usize = 10_000;
/// Golden-section refinement stops once the bracket is this narrow in `u`.
pub const GOLDEN_TOLERANCE: f64 = 1e-10;
/// Bisection stops at `BISECTION_TOLERANCE · bracket_hi`.
pub const BISECTION_TOLERANCE: f64 = 1e-12;
/// Relative step of the central difference used for the `u → 0` limit.
pub const DERIVATIVE_STEP: f64 = 1e-6;

/// A root `ȳ` of the feedback function together with `f(ȳ)` as evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub y_bar: f64,
    pub residual: f64,
}

/// Equilibrium of the single-bottleneck system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    /// Aggregate arrival rate `ȳ`.
    pub y_bar: f64,
    /// Per-route rate `R̄ = ȳ / N`.
    pub r_bar: f64,
    pub routes: usize,
    /// Arithmetic mean `T̄` of the route delays.
    pub t_bar: f64,
    /// `f(ȳ)`.
    pub residual: f64,
}

impl EquilibriumPoint {
    pub fn of(sys: &GeneralizedSystem) -> Result<Self> {
        let op = match sys.feedback() {
            Feedback::Rcp {
                capacity,
                queue_weight,
                variance,
            } => {
                if *queue_weight > 0.0 {
                    solve_equilibrium_case_a(*capacity, *queue_weight, *variance)?
                } else {
                    OperatingPoint {
                        y_bar: *capacity,
                        residual: 0.0,
                    }
                }
            }
            f @ Feedback::Tabulated(_) => {
                let mut hi = 1.0f64.max(2.0 * sys.f_zero());
                while f.value(hi)? >= 0.0 {
                    hi *= 2.0;
                    if !hi.is_finite() {
                        return Err(Error::domain("feedback has no positive root"));
                    }
                }
                solve_equilibrium_general(|y| f.value(y).unwrap_or(f64::NAN), hi)?
            }
        };
        let routes = sys.route_count();
        Ok(EquilibriumPoint {
            y_bar: op.y_bar,
            r_bar: op.y_bar / routes as f64,
            routes,
            t_bar: sys.mean_delay(),
            residual: op.residual,
        })
    }
}

/// Root of `2 (C − y)² = b C σ² y` in `(0, C)`.
///
/// Evaluated as `4C / (4 + s + √(s (8 + s)))` with `s = bσ²`, the smaller root of
/// the quadratic written through the product of roots so it stays accurate as `b → 0`.
pub fn solve_equilibrium_case_a(capacity: f64, queue_weight: f64, variance: f64) -> Result<OperatingPoint> {
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(Error::domain(format!("capacity must be positive, got {capacity}")));
    }
    if !(queue_weight > 0.0 && queue_weight.is_finite()) {
        return Err(Error::domain(format!(
            "queue weight must be positive, got {queue_weight}"
        )));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::domain(format!("variance must be positive, got {variance}")));
    }
    let s = queue_weight * variance;
    let y_bar = 4.0 * capacity / (4.0 + s + (s * (8.0 + s)).sqrt());
    let f = Feedback::Rcp {
        capacity,
        queue_weight,
        variance,
    };
    Ok(OperatingPoint {
        y_bar,
        residual: f.value(y_bar)?,
    })
}

/// Bisection root of a decreasing `f` on `[0, bracket_hi]`.
pub fn solve_equilibrium_general<F: Fn(f64) -> f64>(f: F, bracket_hi: f64) -> Result<OperatingPoint> {
    let f0 = f(0.0);
    if !(f0 > 0.0) {
        return Err(Error::domain(format!("f(0) = {f0} must be positive")));
    }
    let fhi = f(bracket_hi);
    if !(fhi < 0.0) {
        return Err(Error::Bracket {
            hi: bracket_hi,
            value: fhi,
        });
    }
    let tol = BISECTION_TOLERANCE * bracket_hi;
    let (mut lo, mut hi) = (0.0, bracket_hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(OperatingPoint {
                y_bar: mid,
                residual: 0.0,
            });
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y_bar = 0.5 * (lo + hi);
    Ok(OperatingPoint {
        y_bar,
        residual: f(y_bar),
    })
}

/// `(p'(ȳ), 1/(b ȳ))` for the Case A equilibrium; the two agree.
pub fn queue_derivative_identity(capacity: f64, queue_weight: f64, variance: f64) -> Result<(f64, f64)> {
    if queue_weight <= 0.0 {
        return Err(Error::domain("queue derivative identity needs b > 0"));
    }
    let y = solve_equilibrium_case_a(capacity, queue_weight, variance)?.y_bar;
    let gap = capacity - y;
    let analytic = capacity * variance / (2.0 * gap * gap);
    Ok((analytic, 1.0 / (queue_weight * y)))
}

/// How `f⁽¹⁾` and `f⁽²⁾` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsMode {
    /// `f⁽¹⁾ = −f'(ȳ)`, `f⁽²⁾ = −f(ȳ + w)/w`; valid for concave `f`.
    ClosedForm,
    /// Grid search plus golden-section refinement of the secant slopes.
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    /// Upper perturbation envelope `w = κT̄f(0) ȳ / (1 − κT̄f(0))`.
    pub w: f64,
    /// `max_u f(ȳ − u)/u` over `(0, ȳ]`.
    pub f1: f64,
    /// `max_u −f(ȳ + u)/u` over `(0, w]`.
    pub f2: f64,
    /// `κ T̄ f(0)`.
    pub k_t_f0: f64,
}

pub fn theorem_constants(
    sys: &GeneralizedSystem,
    eq: &EquilibriumPoint,
    mode: ConstantsMode,
) -> Result<TheoremConstants> {
    let k_t_f0 = sys.kappa() * eq.t_bar * sys.f_zero();
    if !(k_t_f0 < 1.0) {
        return Err(Error::GainTooLarge(k_t_f0));
    }
    let y = eq.y_bar;
    let w = k_t_f0 * y / (1.0 - k_t_f0);
    let f = sys.feedback();
    if !(y + w < f.domain_upper()) {
        return Err(Error::domain(format!(
            "ybar + w = {} reaches the feedback pole at {}",
            y + w,
            f.domain_upper()
        )));
    }
    let (f1, f2) = match mode {
        ConstantsMode::ClosedForm => {
            if !f.is_concave() {
                return Err(Error::domain("closed-form constants require a concave feedback"));
            }
            (-f.derivative(y)?, -f.value(y + w)? / w)
        }
        ConstantsMode::Numeric => {
            let h = DERIVATIVE_STEP * y;
            let slope_limit = -(f.value(y + h)? - f.value(y - h)?) / (2.0 * h);
            let below = maximize_on(|u| f.value(y - u).map(|v| v / u), y)?;
            let above = maximize_on(|u| f.value(y + u).map(|v| -v / u), w)?;
            (below.max(slope_limit), above.max(slope_limit))
        }
    };
    Ok(TheoremConstants { w, f1, f2, k_t_f0 })
}

/// Maximum of `g` over `(0, hi]`: dense grid, then golden-section around the best node.
fn maximize_on<G: Fn(f64) -> Result<f64>>(g: G, hi: f64) -> Result<f64> {
    let n = MAX_GRID_POINTS;
    let step = hi / n as f64;
    let mut best_i = n;
    let mut best = g(hi)?;
    for i in 1..n {
        let v = g(step * i as f64)?;
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = step * (best_i - 1) as f64;
    let up = (step * (best_i + 1) as f64).min(hi);
    let lo = if lo > 0.0 { lo } else { step * 1e-6 };
    Ok(best.max(golden_max(&g, lo, up)?))
}

fn golden_max<G: Fn(f64) -> Result<f64>>(g: &G, mut a: f64, mut b: f64) -> Result<f64> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (g(c)?, g(d)?);
    while b - a > GOLDEN_TOLERANCE {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d)?;
        }
    }
    Ok(gc.max(gd).max(g(0.5 * (a + b))?))
}
