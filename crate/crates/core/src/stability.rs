//! Global and local stability conditions for the RCP fluid model and the
//! bounding recursion behind the global condition.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{theorem_constants, ConstantsMode, EquilibriumPoint, TheoremConstants};
use crate::error::{Error, Result};
use crate::model::GeneralizedSystem;

/// Threshold of the rate-mismatch-only global condition `a < 1/2`.
pub const CASE_B_GAIN_BOUND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `κ T̄ f(0) < 1`.
    GainProduct,
    /// The global sufficient condition, left-hand side below one.
    Theorem,
    /// Closed-form gain bound with queue feedback.
    CaseA,
    /// `a < 1/2` without queue feedback.
    CaseB,
    /// `a < π/4`, local, any `b`.
    LocalPi4,
    /// `a < π/2`, local, `b = 0` only.
    LocalPi2,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::GainProduct => "kappa*Tbar*f(0) < 1",
            Condition::Theorem => "global sufficient condition",
            Condition::CaseA => "case A closed-form gain bound",
            Condition::CaseB => "case B gain bound a < 1/2",
            Condition::LocalPi4 => "local a < pi/4",
            Condition::LocalPi2 => "local a < pi/2 (b = 0)",
        };
        f.write_str(s)
    }
}

/// `value < threshold` is the condition; `margin = threshold − value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub condition: Condition,
    pub value: f64,
    pub threshold: f64,
}

impl Margin {
    pub fn margin(&self) -> f64 {
        self.threshold - self.value
    }

    pub fn holds(&self) -> bool {
        self.value < self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Gain `a = κ T̄ f(0)` (for RCP feedback `f(0) = C`, so this is the protocol gain).
    pub gain: f64,
    pub k_t_f0: f64,
    pub theorem_lhs: f64,
    pub theorem_verdict: bool,
    pub equilibrium: EquilibriumPoint,
    pub constants: Option<TheoremConstants>,
    pub case_a_alpha_prime: Option<f64>,
    pub case_a_a_max: Option<f64>,
    pub case_a_verdict: Option<bool>,
    pub case_b_verdict: Option<bool>,
    pub local_pi4_verdict: bool,
    pub local_pi2_verdict: Option<bool>,
    pub margins: Vec<Margin>,
}

impl StabilityReport {
    pub fn margin(&self, condition: Condition) -> Option<&Margin> {
        self.margins.iter().find(|m| m.condition == condition)
    }

    /// Checks every stored verdict against the stored values.
    pub fn is_consistent(&self) -> bool {
        let verdict = |c| self.margin(c).map(Margin::holds);
        self.theorem_verdict == (self.k_t_f0 < 1.0 && self.theorem_lhs < 1.0)
            && verdict(Condition::Theorem) == Some(self.theorem_verdict)
            && verdict(Condition::CaseA) == self.case_a_verdict
            && verdict(Condition::CaseB) == self.case_b_verdict
            && verdict(Condition::LocalPi4) == Some(self.local_pi4_verdict)
            && verdict(Condition::LocalPi2) == self.local_pi2_verdict
    }
}

/// Evaluate the global condition from precomputed constants, plus every closed-form
/// and local condition applicable to the system's feedback.
pub fn theorem1_check(sys: &GeneralizedSystem, eq: &EquilibriumPoint, tc: &TheoremConstants) -> StabilityReport {
    let kt = sys.kappa() * eq.t_bar;
    let lhs = kt * kt * eq.y_bar * (eq.y_bar + tc.w) * tc.f1 * tc.f2 / (1.0 - tc.k_t_f0);
    build_report(sys, eq, Some(*tc), tc.k_t_f0, lhs)
}

/// Full assessment: equilibrium, constants (closed form when `f` is concave), and every condition.
///
/// When the constants do not exist (gain product ≥ 1, or `ȳ + w` past the pole) the
/// global condition is reported as failed with an infinite left-hand side.
pub fn assess(sys: &GeneralizedSystem) -> Result<StabilityReport> {
    let eq = EquilibriumPoint::of(sys)?;
    let mode = if sys.feedback().is_concave() {
        ConstantsMode::ClosedForm
    } else {
        ConstantsMode::Numeric
    };
    match theorem_constants(sys, &eq, mode) {
        Ok(tc) => Ok(theorem1_check(sys, &eq, &tc)),
        Err(Error::GainTooLarge(_)) | Err(Error::Domain(_)) => {
            let k_t_f0 = sys.kappa() * eq.t_bar * sys.f_zero();
            Ok(build_report(sys, &eq, None, k_t_f0, f64::INFINITY))
        }
        Err(e) => Err(e),
    }
}

fn build_report(
    sys: &GeneralizedSystem,
    eq: &EquilibriumPoint,
    constants: Option<TheoremConstants>,
    k_t_f0: f64,
    theorem_lhs: f64,
) -> StabilityReport {
    let gain = k_t_f0;
    let theorem_verdict = k_t_f0 < 1.0 && theorem_lhs < 1.0;
    let mut margins = vec![
        Margin {
            condition: Condition::GainProduct,
            value: k_t_f0,
            threshold: 1.0,
        },
        Margin {
            condition: Condition::Theorem,
            value: if k_t_f0 < 1.0 { theorem_lhs } else { f64::INFINITY },
            threshold: 1.0,
        },
    ];

    let queue = sys.feedback().rcp_params().map(|(_, b, s2)| (b, s2));
    let (mut alpha_prime, mut a_max, mut case_a, mut case_b) = (None, None, None, None);
    match queue {
        Some((b, s2)) if b > 0.0 => {
            let ap = case_a_alpha_prime(b, s2).expect("b > 0");
            let bound = case_a_global_bound(b, s2).expect("b > 0");
            alpha_prime = Some(ap);
            a_max = Some(bound);
            case_a = Some(gain < bound);
            margins.push(Margin {
                condition: Condition::CaseA,
                value: gain,
                threshold: bound,
            });
        }
        Some(_) => {
            case_b = Some(case_b_check(gain));
            margins.push(Margin {
                condition: Condition::CaseB,
                value: gain,
                threshold: CASE_B_GAIN_BOUND,
            });
        }
        None => {}
    }

    let b = queue.map_or(f64::NAN, |(b, _)| b);
    let local = local_check(gain, b);
    margins.push(Margin {
        condition: Condition::LocalPi4,
        value: gain,
        threshold: FRAC_PI_4,
    });
    if local.pi2.is_some() {
        margins.push(Margin {
            condition: Condition::LocalPi2,
            value: gain,
            threshold: FRAC_PI_2,
        });
    }

    StabilityReport {
        gain,
        k_t_f0,
        theorem_lhs,
        theorem_verdict,
        equilibrium: *eq,
        constants,
        case_a_alpha_prime: alpha_prime,
        case_a_a_max: a_max,
        case_a_verdict: case_a,
        case_b_verdict: case_b,
        local_pi4_verdict: local.pi4,
        local_pi2_verdict: local.pi2,
        margins,
    }
}

/// `α' = min(1/2, 2 / (bσ² (6 + √(2b) σ + bσ²)))`.
pub fn case_a_alpha_prime(queue_weight: f64, variance: f64) -> Result<f64> {
    if !(queue_weight > 0.0 && variance > 0.0) {
        return Err(Error::domain("alpha' needs b > 0 and sigma^2 > 0"));
    }
    let s = queue_weight * variance;
    let sigma_root = (2.0 * queue_weight).sqrt() * variance.sqrt();
    Ok(0.5f64.min(2.0 / (s * (6.0 + sigma_root + s))))
}

/// Largest certified gain with queue feedback: `α'M / (2 + α'M)`, `M = max(√(2b)σ, bσ²)`.
///
/// Independent of capacity and delays.
pub fn case_a_global_bound(queue_weight: f64, variance: f64) -> Result<f64> {
    let ap = case_a_alpha_prime(queue_weight, variance)?;
    let m = ((2.0 * queue_weight).sqrt() * variance.sqrt()).max(queue_weight * variance);
    Ok(ap * m / (2.0 + ap * m))
}

pub fn case_b_check(gain: f64) -> bool {
    gain < CASE_B_GAIN_BOUND
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalVerdicts {
    pub pi4: bool,
    /// Only defined without queue feedback.
    pub pi2: Option<bool>,
}

pub fn local_check(gain: f64, queue_weight: f64) -> LocalVerdicts {
    LocalVerdicts {
        pi4: gain < FRAC_PI_4,
        pi2: (queue_weight == 0.0).then_some(gain < FRAC_PI_2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundStep {
    pub u_hat: f64,
    pub u_check: f64,
}

/// Sequences of the bounding recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundIteration {
    /// Majorant chain: `û = κT̄ȳf⁽¹⁾ǔ/(1 − κT̄f(0))`, `ǔ' = κT̄(ȳ + w)f⁽²⁾ min(û, w/N)`.
    pub chain: Vec<BoundStep>,
    /// Direct recursion: `û = κR̄f(ȳ − Nǔ)T̄/(1 − κf(ȳ − Nǔ)T̄)`,
    /// `ǔ' = κ(R̄ + v̂)|f(ȳ + Nv̂)|T̄` with `v̂ = min(û, w/N)`.
    pub direct: Vec<BoundStep>,
    /// Contraction factor of the chain over its uncapped tail.
    pub gamma: f64,
    /// Largest step ratio of the direct recursion after its first round.
    pub direct_gamma: f64,
}

/// Stop iterating the chain once `ǔ` falls below this fraction of `R̄`.
const UNDERFLOW_FRACTION: f64 = 1e-250;
/// The direct recursion differences `f` around its root; below this fraction of `R̄`
/// the difference is rounding noise.
const DIRECT_PRECISION_FRACTION: f64 = 1e-10;

pub fn bound_iteration(
    sys: &GeneralizedSystem,
    eq: &EquilibriumPoint,
    tc: &TheoremConstants,
    u_check_0: f64,
    max_rounds: usize,
) -> Result<BoundIteration> {
    if !(u_check_0 > 0.0 && u_check_0 <= eq.r_bar * (1.0 + 1e-12)) {
        return Err(Error::domain(format!(
            "initial lower bound {u_check_0} must lie in (0, Rbar = {}]",
            eq.r_bar
        )));
    }
    if max_rounds == 0 {
        return Err(Error::domain("bound iteration needs at least one round"));
    }
    let n = eq.routes as f64;
    let kt = sys.kappa() * eq.t_bar;
    let cap = tc.w / n;
    let f = sys.feedback();
    let floor = eq.r_bar * UNDERFLOW_FRACTION;

    let hat_gain = kt * eq.y_bar * tc.f1 / (1.0 - tc.k_t_f0);
    let check_gain = kt * (eq.y_bar + tc.w) * tc.f2;
    let mut chain = Vec::new();
    let mut chain_capped = Vec::new();
    let mut u_check = u_check_0;
    for _ in 0..max_rounds {
        let u_hat = hat_gain * u_check;
        chain.push(BoundStep { u_hat, u_check });
        chain_capped.push(u_hat >= cap);
        u_check = check_gain * u_hat.min(cap);
        if u_check < floor {
            break;
        }
    }
    chain.push(BoundStep {
        u_hat: hat_gain * u_check,
        u_check,
    });

    let mut direct = Vec::new();
    let mut u_check = u_check_0;
    let root = f.value(eq.y_bar)?;
    for _ in 0..max_rounds {
        let lower = f.value(eq.y_bar - n * u_check)? - root;
        let u_hat = sys.kappa() * eq.r_bar * lower * eq.t_bar / (1.0 - sys.kappa() * lower * eq.t_bar);
        direct.push(BoundStep { u_hat, u_check });
        let v_hat = u_hat.min(cap);
        u_check = (kt * (eq.r_bar + v_hat) * (f.value(eq.y_bar + n * v_hat)? - root).abs()).min(eq.r_bar);
        if u_check < DIRECT_PRECISION_FRACTION * eq.r_bar {
            break;
        }
    }
    direct.push(BoundStep {
        u_hat: f64::NAN,
        u_check,
    });

    let ratio = |s: &[BoundStep], k: usize| s[k + 1].u_check / s[k].u_check;
    let uncapped: Vec<f64> = (1..chain.len() - 1)
        .filter(|&k| !chain_capped[k])
        .map(|k| ratio(&chain, k))
        .collect();
    let gamma = if !uncapped.is_empty() {
        uncapped.iter().copied().fold(0.0, f64::max)
    } else {
        (0..chain.len() - 1).map(|k| ratio(&chain, k)).fold(0.0, f64::max)
    };
    let direct_gamma = if direct.len() > 2 {
        (1..direct.len() - 1).map(|k| ratio(&direct, k)).fold(0.0, f64::max)
    } else {
        ratio(&direct, 0)
    };

    let lhs = theorem1_check(sys, eq, tc).theorem_lhs;
    if lhs < 1.0 && gamma >= 1.0 {
        return Err(Error::NonContractive { gamma, lhs });
    }
    Ok(BoundIteration {
        chain,
        direct,
        gamma,
        direct_gamma,
    })
}
