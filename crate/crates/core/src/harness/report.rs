use std::fmt;

use crate::equilibrium::{queue_derivative_identity, EquilibriumPoint};
use crate::error::Result;
use crate::model::Feedback;
use crate::stability::{assess, bound_iteration, Condition, StabilityReport};

use super::scenario::Scenario;
use super::sweep::isolated_equilibrium;

/// Rounds of the bounding recursion run for the contraction estimate in reports.
const REPORT_BOUND_ROUNDS: usize = 200;

/// Outcome of `check`: the analytic report, or a notice that the scenario lies
/// outside the single-bottleneck theory.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    SingleLink {
        label: String,
        report: StabilityReport,
        /// Contraction factor of the bounding recursion, when its constants exist.
        gamma: Option<f64>,
    },
    OutOfScope {
        label: String,
        links: usize,
    },
}

impl CheckOutcome {
    pub fn report(&self) -> Option<&StabilityReport> {
        match self {
            CheckOutcome::SingleLink { report, .. } => Some(report),
            CheckOutcome::OutOfScope { .. } => None,
        }
    }
}

pub fn run_check(scenario: &Scenario) -> Result<CheckOutcome> {
    if !scenario.network.is_single_link() {
        return Ok(CheckOutcome::OutOfScope {
            label: scenario.label.clone(),
            links: scenario.network.links().len(),
        });
    }
    let sys = scenario.network.to_generalized()?;
    let report = assess(&sys)?;
    let gamma = report.constants.as_ref().and_then(|tc| {
        bound_iteration(
            &sys,
            &report.equilibrium,
            tc,
            report.equilibrium.r_bar,
            REPORT_BOUND_ROUNDS,
        )
        .map(|it| it.gamma)
        .ok()
    });
    Ok(CheckOutcome::SingleLink {
        label: scenario.label.clone(),
        report,
        gamma,
    })
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "✓"
    } else {
        "✗"
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckOutcome::OutOfScope { label, links } => {
                writeln!(f, "scenario: {label}")?;
                writeln!(
                    f,
                    "analytic conditions are out of theory scope: the network has {links} links and the \
                     stability results cover a single bottleneck only"
                )?;
                writeln!(f, "use `rcp simulate --classify` to assess this scenario empirically")
            }
            CheckOutcome::SingleLink { label, report, gamma } => {
                writeln!(f, "scenario: {label}")?;
                write_equilibrium(f, &report.equilibrium)?;
                writeln!(f, "gain a = kappa*Tbar*f(0): {:.6}", report.k_t_f0)?;
                if let Some(tc) = &report.constants {
                    writeln!(f, "constants: w = {:.6e}, f1 = {:.6e}, f2 = {:.6e}", tc.w, tc.f1, tc.f2)?;
                }
                for m in &report.margins {
                    if m.condition == Condition::GainProduct {
                        continue;
                    }
                    writeln!(
                        f,
                        "{} {}: {:.6e} < {:.6e}  (margin {:+.6e})",
                        mark(m.holds()),
                        m.condition,
                        m.value,
                        m.threshold,
                        m.margin()
                    )?;
                }
                if let Some(ap) = report.case_a_alpha_prime {
                    writeln!(f, "alpha' = {ap:.6e}")?;
                }
                if let Some(g) = gamma {
                    writeln!(f, "bound recursion contraction factor: {g:.6e}")?;
                }
                Ok(())
            }
        }
    }
}

fn write_equilibrium(f: &mut fmt::Formatter<'_>, eq: &EquilibriumPoint) -> fmt::Result {
    writeln!(
        f,
        "equilibrium: ybar = {:.12e}, Rbar = {:.12e}, N = {}, Tbar = {:.6e}",
        eq.y_bar, eq.r_bar, eq.routes, eq.t_bar
    )
}

/// Text for `rcp equilibrium`: the equilibrium of every link in isolation.
pub fn render_equilibrium(scenario: &Scenario) -> Result<String> {
    let mut out = format!("scenario: {}\n", scenario.label);
    if let Ok(sys) = scenario.network.to_generalized() {
        let eq = EquilibriumPoint::of(&sys)?;
        out.push_str(&format!(
            "ybar = {:.16e}\nRbar = {:.16e}\nN = {}\nTbar = {:.16e}\nresidual f(ybar) = {:.3e}\n",
            eq.y_bar, eq.r_bar, eq.routes, eq.t_bar, eq.residual
        ));
        if let Feedback::Rcp {
            capacity,
            queue_weight,
            variance,
        } = sys.feedback()
        {
            if *queue_weight > 0.0 {
                let (analytic, identity) = queue_derivative_identity(*capacity, *queue_weight, *variance)?;
                out.push_str(&format!("p'(ybar) = {analytic:.16e}\n1/(b ybar) = {identity:.16e}\n"));
            }
        }
        return Ok(out);
    }
    out.push_str("multi-link network: per-link equilibria with every other link at its own equilibrium\n");
    for (j, link) in scenario.network.links().iter().enumerate() {
        let eq = isolated_equilibrium(&scenario.network, j)?;
        out.push_str(&format!(
            "{}: ybar = {:.16e}, Rbar = {:.16e}, N = {}\n",
            link.id, eq.y_bar, eq.r_bar, eq.routes
        ));
    }
    Ok(out)
}
