//! Fixed-step integration of the delayed rate dynamics.
//!
//! Classical RK4 on the non-delayed state; delayed rates are read from a
//! history buffer with cubic Hermite interpolation between grid samples
//! (each sample stores the rate and its derivative). Rates for `t ≤ 0` come
//! straight from the initial history function.

use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumPoint;
use crate::error::{Error, Result};
use crate::model::{generalized_rhs, link_rhs, GeneralizedSystem, LinkParams, NetworkModel, RateHistory};

pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-3;
pub const DEFAULT_BLOWUP_MARGIN: f64 = 1e-6;
/// Rates are floored at this fraction of capacity after every step.
pub const RATE_FLOOR: f64 = 1e-12;
/// Minimum number of steps per shortest delay.
pub const STEPS_PER_DELAY: f64 = 20.0;
/// Default horizon in units of the longest round trip.
pub const DEFAULT_HORIZON_RTTS: f64 = 50.0;
pub const MIN_HORIZON_RTTS: f64 = 20.0;
/// Default convergence window in units of the longest round trip.
pub const DEFAULT_WINDOW_RTTS: f64 = 10.0;
/// Fraction of the horizon inspected for sustained oscillation.
pub const OSCILLATION_TAIL: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TbarMode {
    /// `T̄_j(t)` from the current flow-weighted round trips.
    #[default]
    TimeVarying,
    /// `T̄_j` fixed at the arithmetic mean of the round trips through `j`.
    Frozen,
}

/// Rates on `[−depth, 0]`, one entry per state component (link).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialHistory {
    Constant(Vec<f64>),
    /// Knots `(t, R)` with increasing `t ≤ 0`, ending at `t = 0`; flat before the first knot.
    PiecewiseLinear(Vec<Vec<(f64, f64)>>),
}

impl InitialHistory {
    pub fn len(&self) -> usize {
        match self {
            InitialHistory::Constant(v) => v.len(),
            InitialHistory::PiecewiseLinear(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, k: usize, t: f64) -> f64 {
        match self {
            InitialHistory::Constant(v) => v[k],
            InitialHistory::PiecewiseLinear(tables) => {
                let knots = &tables[k];
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                let i = knots.iter().position(|&(x, _)| x >= t).unwrap_or(knots.len() - 1);
                let (x0, v0) = knots[i - 1];
                let (x1, v1) = knots[i];
                v0 + (v1 - v0) * (t - x0) / (x1 - x0)
            }
        }
    }

    fn validate(&self, dim: usize, depth: f64) -> Result<()> {
        if self.len() != dim {
            return Err(Error::Config(format!(
                "initial history has {} components, model has {dim}",
                self.len()
            )));
        }
        match self {
            InitialHistory::Constant(v) => {
                if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                    return Err(Error::Config(format!(
                        "initial history values must be positive, got {x}"
                    )));
                }
            }
            InitialHistory::PiecewiseLinear(tables) => {
                for (k, knots) in tables.iter().enumerate() {
                    if knots.len() < 2 {
                        return Err(Error::Config(format!("history table {k} needs at least two knots")));
                    }
                    if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                        return Err(Error::Config(format!("history table {k} times must increase")));
                    }
                    if knots.last().map(|k| k.0) != Some(0.0) {
                        return Err(Error::Config(format!("history table {k} must end at t = 0")));
                    }
                    if knots[0].0 > -depth {
                        return Err(Error::Config(format!(
                            "history table {k} starts at {} but the model looks back to {}",
                            knots[0].0, -depth
                        )));
                    }
                    if let Some(&(_, v)) = knots.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
                        return Err(Error::Config(format!("history table {k} has non-positive rate {v}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step: f64,
    pub horizon: f64,
    pub history: InitialHistory,
    pub convergence_tol: f64,
    /// Minimum time the trace must stay inside the tolerance band.
    pub convergence_window: f64,
    /// Blow-up is declared once `y_j ≥ C_j (1 − margin)` with queue feedback on.
    pub blowup_margin: f64,
    pub tbar_mode: TbarMode,
}

impl SimConfig {
    /// Step `τ_min/20`, horizon `50·max RTT`, window `10·max RTT`.
    pub fn defaults_for<'a>(target: impl Into<Target<'a>>, history: InitialHistory) -> Result<Self> {
        let target = target.into();
        let (min_lag, max_rtt) = target.delay_scales()?;
        Ok(SimConfig {
            step: min_lag / STEPS_PER_DELAY,
            horizon: DEFAULT_HORIZON_RTTS * max_rtt,
            history,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
            convergence_window: DEFAULT_WINDOW_RTTS * max_rtt,
            blowup_margin: DEFAULT_BLOWUP_MARGIN,
            tbar_mode: TbarMode::default(),
        })
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_tbar_mode(mut self, mode: TbarMode) -> Self {
        self.tbar_mode = mode;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.convergence_tol = tol;
        self
    }

    /// Check the configuration against the delays and dimension of `target`.
    pub fn validate_for<'a>(&self, target: impl Into<Target<'a>>) -> Result<()> {
        let target = target.into();
        let dim = match target {
            Target::Network(m) => m.links().len(),
            Target::Generalized(_) => 1,
        };
        validate_config(&target, self, dim)
    }

    fn step_count(&self) -> usize {
        let n = self.horizon / self.step;
        let rounded = n.round();
        if (n - rounded).abs() < 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }
}

/// What to integrate.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Network(&'a NetworkModel),
    Generalized(&'a GeneralizedSystem),
}

impl<'a> From<&'a NetworkModel> for Target<'a> {
    fn from(m: &'a NetworkModel) -> Self {
        Target::Network(m)
    }
}

impl<'a> From<&'a GeneralizedSystem> for Target<'a> {
    fn from(s: &'a GeneralizedSystem) -> Self {
        Target::Generalized(s)
    }
}

impl Target<'_> {
    /// `(shortest feedback lookback, longest round trip)`.
    fn delay_scales(&self) -> Result<(f64, f64)> {
        let (min_lag, max_rtt) = match self {
            Target::Network(m) => (m.feedback_lookbacks().fold(f64::INFINITY, f64::min), m.max_round_trip()),
            Target::Generalized(s) => (s.min_delay(), s.max_delay()),
        };
        if !(min_lag > 0.0) {
            return Err(Error::Config(
                "a route feeds a link with zero delay; the integrator needs positive lookbacks".into(),
            ));
        }
        Ok((min_lag, max_rtt))
    }

    fn depth(&self) -> f64 {
        match self {
            Target::Network(m) => m.history_depth(),
            Target::Generalized(s) => s.max_delay(),
        }
    }

    /// Single-bottleneck equilibrium, when the theory applies.
    pub fn equilibrium(&self) -> Option<EquilibriumPoint> {
        match self {
            Target::Network(m) => m.to_generalized().ok().and_then(|s| EquilibriumPoint::of(&s).ok()),
            Target::Generalized(s) => EquilibriumPoint::of(s).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification {
    Converged { settling_time: f64 },
    Oscillating { amplitude: f64, period: f64 },
    BlowUp { t_fail: f64 },
    Undetermined,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self {
            Classification::Converged { .. } => "converged",
            Classification::Oscillating { .. } => "oscillating",
            Classification::BlowUp { .. } => "blow-up",
            Classification::Undetermined => "undetermined",
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, Classification::Converged { .. })
    }
}

/// Sampled trajectory. Series are indexed `[component][sample]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub step: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub link_ids: Vec<String>,
    pub route_ids: Vec<String>,
    /// `R_j(t)`.
    pub rates: Vec<Vec<f64>>,
    /// `y_j(t)`.
    pub aggregates: Vec<Vec<f64>>,
    /// `x_r(t)`.
    pub flows: Vec<Vec<f64>>,
    pub classification: Classification,
    pub equilibrium: Option<EquilibriumPoint>,
    /// Per-link reference aggregate: `ȳ` when known, else the final sample.
    pub reference: Vec<f64>,
    pub blowup_time: Option<f64>,
    pub convergence_tol: f64,
    pub convergence_window: f64,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_aggregates(&self) -> Vec<f64> {
        self.aggregates.iter().map(|s| *s.last().unwrap_or(&f64::NAN)).collect()
    }
}

/// Per-step interruption raised by a right-hand side.
enum Halt {
    Pole(f64),
    Fail(Error),
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        Halt::Fail(e)
    }
}

struct Buffer<'h> {
    step: f64,
    depth: f64,
    initial: &'h InitialHistory,
    values: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
}

impl Buffer<'_> {
    fn last_index(&self) -> usize {
        self.values[0].len() - 1
    }
}

/// History plus the state of the RK stage currently being evaluated.
struct View<'b, 'h> {
    buf: &'b Buffer<'h>,
    stage_time: f64,
    stage: &'b [f64],
}

impl RateHistory for View<'_, '_> {
    fn rate(&self, k: usize, s: f64) -> Result<f64> {
        let buf = self.buf;
        if s <= 0.0 {
            if s < -buf.depth * (1.0 + 1e-9) - 1e-12 {
                return Err(Error::HistoryUnderflow {
                    requested: s,
                    available: -buf.depth,
                });
            }
            return Ok(buf.initial.value(k, s));
        }
        let n = buf.last_index();
        let h = buf.step;
        let p = s / h;
        let i = p.floor() as usize;
        if i >= n {
            let t_n = n as f64 * h;
            let y_n = buf.values[k][n];
            if self.stage_time > t_n {
                let theta = ((s - t_n) / (self.stage_time - t_n)).min(1.0);
                return Ok(y_n + theta * (self.stage[k] - y_n));
            }
            return Ok(y_n);
        }
        let theta = p - i as f64;
        let (y0, y1) = (buf.values[k][i], buf.values[k][i + 1]);
        let d = &buf.derivs[k];
        if i + 1 >= d.len() {
            return Ok(y0 + theta * (y1 - y0));
        }
        let (d0, d1) = (d[i] * h, d[i + 1] * h);
        let t2 = theta * theta;
        let t3 = t2 * theta;
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + theta) * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * d1)
    }
}

trait Dynamics {
    fn dim(&self) -> usize;
    fn floor(&self, k: usize) -> f64;
    fn derivative(&self, t: f64, view: &View, out: &mut [f64]) -> Result<(), Halt>;
    /// Aggregates `y_j(t)` and route flows `x_r(t)`.
    fn observe(&self, t: f64, view: &View, y: &mut [f64], x: &mut [f64]) -> Result<()>;
    fn link_count(&self) -> usize;
    fn route_count(&self) -> usize;
}

struct RouteTaps {
    /// `(link index, return delay T_kr)` per hop.
    hops: Vec<(usize, f64)>,
    round_trip: f64,
}

struct NetworkDynamics {
    params: Vec<LinkParams>,
    routes: Vec<RouteTaps>,
    /// Per link: `(route index, forward delay T_rj)`.
    feeds: Vec<Vec<(usize, f64)>>,
    frozen_rtt: Vec<f64>,
    mode: TbarMode,
    blowup_margin: f64,
}

impl NetworkDynamics {
    fn new(model: &NetworkModel, cfg: &SimConfig) -> Self {
        let params: Vec<LinkParams> = (0..model.links().len()).map(|j| model.effective_params(j)).collect();
        let routes = model
            .routes()
            .iter()
            .enumerate()
            .map(|(r, spec)| RouteTaps {
                hops: spec
                    .hops
                    .iter()
                    .zip(model.route_links(r))
                    .map(|(hop, &k)| (k, hop.return_delay))
                    .collect(),
                round_trip: spec.round_trip(),
            })
            .collect();
        let feeds = (0..params.len())
            .map(|j| {
                model
                    .routes_through(j)
                    .map(|(r, i)| (r, model.routes()[r].hops[i].forward_delay))
                    .collect()
            })
            .collect();
        let frozen_rtt = (0..params.len()).map(|j| model.equilibrium_mean_rtt(j)).collect();
        NetworkDynamics {
            params,
            routes,
            feeds,
            frozen_rtt,
            mode: cfg.tbar_mode,
            blowup_margin: cfg.blowup_margin,
        }
    }

    fn flow(&self, r: usize, view: &View, s: f64) -> Result<f64> {
        let taps = &self.routes[r];
        if let [(k, back)] = taps.hops[..] {
            return view.rate(k, s - back);
        }
        let mut inv = 0.0;
        for &(k, back) in &taps.hops {
            inv += view.rate(k, s - back)?.recip();
        }
        Ok(inv.recip())
    }

    fn aggregate(&self, j: usize, view: &View, t: f64) -> Result<f64> {
        let mut y = 0.0;
        for &(r, fwd) in &self.feeds[j] {
            y += self.flow(r, view, t - fwd)?;
        }
        Ok(y)
    }

    fn mean_rtt(&self, j: usize, view: &View, t: f64) -> Result<f64> {
        if self.mode == TbarMode::Frozen {
            return Ok(self.frozen_rtt[j]);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(r, _) in &self.feeds[j] {
            let x = self.flow(r, view, t)?;
            if x > 0.0 {
                num += x * self.routes[r].round_trip;
                den += x;
            }
        }
        Ok(if den > 0.0 { num / den } else { self.frozen_rtt[j] })
    }
}

impl Dynamics for NetworkDynamics {
    fn dim(&self) -> usize {
        self.params.len()
    }

    fn floor(&self, k: usize) -> f64 {
        RATE_FLOOR * self.params[k].capacity
    }

    fn derivative(&self, t: f64, view: &View, out: &mut [f64]) -> Result<(), Halt> {
        for (j, p) in self.params.iter().enumerate() {
            let y = self.aggregate(j, view, t)?;
            if p.has_queue_feedback() && y >= p.capacity * (1.0 - self.blowup_margin) {
                return Err(Halt::Pole(t));
            }
            let tbar = self.mean_rtt(j, view, t)?;
            out[j] = link_rhs(p, view.stage[j], y, tbar)?;
        }
        Ok(())
    }

    fn observe(&self, t: f64, view: &View, y: &mut [f64], x: &mut [f64]) -> Result<()> {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = self.aggregate(j, view, t)?;
        }
        for (r, xr) in x.iter_mut().enumerate() {
            *xr = self.flow(r, view, t)?;
        }
        Ok(())
    }

    fn link_count(&self) -> usize {
        self.params.len()
    }

    fn route_count(&self) -> usize {
        self.routes.len()
    }
}

struct GeneralizedDynamics<'a> {
    sys: &'a GeneralizedSystem,
    pole: f64,
    floor: f64,
}

impl<'a> GeneralizedDynamics<'a> {
    fn new(sys: &'a GeneralizedSystem, cfg: &SimConfig) -> Self {
        GeneralizedDynamics {
            sys,
            pole: sys.feedback().domain_upper() * (1.0 - cfg.blowup_margin),
            floor: RATE_FLOOR * sys.f_zero(),
        }
    }

    fn aggregate(&self, view: &View, t: f64) -> Result<f64> {
        let mut y = 0.0;
        for &d in self.sys.delays() {
            y += view.rate(0, t - d)?;
        }
        Ok(y)
    }
}

impl Dynamics for GeneralizedDynamics<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn floor(&self, _: usize) -> f64 {
        self.floor
    }

    fn derivative(&self, t: f64, view: &View, out: &mut [f64]) -> Result<(), Halt> {
        let delayed: Vec<f64> = self
            .sys
            .delays()
            .iter()
            .map(|&d| view.rate(0, t - d))
            .collect::<Result<_>>()?;
        if delayed.iter().sum::<f64>() >= self.pole {
            return Err(Halt::Pole(t));
        }
        out[0] = generalized_rhs(self.sys, view.stage[0], &delayed)?;
        Ok(())
    }

    fn observe(&self, t: f64, view: &View, y: &mut [f64], x: &mut [f64]) -> Result<()> {
        y[0] = self.aggregate(view, t)?;
        let r = view.rate(0, t)?;
        x.iter_mut().for_each(|xr| *xr = r);
        Ok(())
    }

    fn link_count(&self) -> usize {
        1
    }

    fn route_count(&self) -> usize {
        self.sys.route_count()
    }
}

fn validate_config(target: &Target, cfg: &SimConfig, dim: usize) -> Result<()> {
    let (min_lag, max_rtt) = target.delay_scales()?;
    if !(cfg.step.is_finite() && cfg.step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {}", cfg.step)));
    }
    if cfg.step > min_lag / STEPS_PER_DELAY * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "step {} exceeds shortest lookback {min_lag} / {STEPS_PER_DELAY}",
            cfg.step
        )));
    }
    if !(cfg.horizon.is_finite() && cfg.horizon >= MIN_HORIZON_RTTS * max_rtt * (1.0 - 1e-12)) {
        return Err(Error::Config(format!(
            "horizon {} is shorter than {MIN_HORIZON_RTTS} x max round trip {max_rtt}",
            cfg.horizon
        )));
    }
    if !(cfg.convergence_tol > 0.0 && cfg.convergence_window >= 0.0 && cfg.blowup_margin >= 0.0) {
        return Err(Error::Config(
            "tolerance, window and blow-up margin must be non-negative".into(),
        ));
    }
    cfg.history.validate(dim, target.depth())
}

/// Integrate `target` under `cfg` and classify the result.
pub fn simulate<'a>(target: impl Into<Target<'a>>, cfg: &SimConfig) -> Result<SimTrace> {
    let target = target.into();
    let (dynamics, link_ids, route_ids): (Box<dyn Dynamics>, Vec<String>, Vec<String>) = match target {
        Target::Network(m) => (
            Box::new(NetworkDynamics::new(m, cfg)),
            m.links().iter().map(|l| l.id.clone()).collect(),
            m.routes().iter().map(|r| r.id.clone()).collect(),
        ),
        Target::Generalized(s) => (
            Box::new(GeneralizedDynamics::new(s, cfg)),
            vec!["bottleneck".into()],
            (0..s.route_count()).map(|r| format!("r{r}")).collect(),
        ),
    };
    validate_config(&target, cfg, dynamics.dim())?;
    let mut trace = integrate(dynamics.as_ref(), cfg, target.depth(), link_ids, route_ids)?;
    trace.equilibrium = target.equilibrium();
    trace.reference = match &trace.equilibrium {
        Some(eq) => vec![eq.y_bar; trace.aggregates.len()],
        None => trace.final_aggregates(),
    };
    trace.classification = classify(&trace);
    Ok(trace)
}

fn integrate(
    dynamics: &dyn Dynamics,
    cfg: &SimConfig,
    depth: f64,
    link_ids: Vec<String>,
    route_ids: Vec<String>,
) -> Result<SimTrace> {
    let dim = dynamics.dim();
    let h = cfg.step;
    let steps = cfg.step_count();
    let mut buf = Buffer {
        step: h,
        depth,
        initial: &cfg.history,
        values: (0..dim)
            .map(|k| {
                let mut v = Vec::with_capacity(steps + 1);
                v.push(cfg.history.value(k, 0.0));
                v
            })
            .collect(),
        derivs: (0..dim).map(|_| Vec::with_capacity(steps + 1)).collect(),
    };
    let (nl, nr) = (dynamics.link_count(), dynamics.route_count());
    let mut trace = SimTrace {
        step: h,
        horizon: steps as f64 * h,
        times: Vec::with_capacity(steps + 1),
        link_ids,
        route_ids,
        rates: vec![Vec::with_capacity(steps + 1); dim],
        aggregates: vec![Vec::with_capacity(steps + 1); nl],
        flows: vec![Vec::with_capacity(steps + 1); nr],
        classification: Classification::Undetermined,
        equilibrium: None,
        reference: Vec::new(),
        blowup_time: None,
        convergence_tol: cfg.convergence_tol,
        convergence_window: cfg.convergence_window,
    };

    let mut state: Vec<f64> = (0..dim).map(|k| buf.values[k][0]).collect();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y = vec![0.0; nl];
    let mut x = vec![0.0; nr];

    let mut record = |buf: &Buffer, trace: &mut SimTrace, n: usize, state: &[f64]| -> Result<()> {
        let t = n as f64 * h;
        let view = View {
            buf,
            stage_time: t,
            stage: state,
        };
        dynamics.observe(t, &view, &mut y, &mut x)?;
        trace.times.push(t);
        for (s, v) in trace.rates.iter_mut().zip(state) {
            s.push(*v);
        }
        for (s, v) in trace.aggregates.iter_mut().zip(&y) {
            s.push(*v);
        }
        for (s, v) in trace.flows.iter_mut().zip(&x) {
            s.push(*v);
        }
        Ok(())
    };

    let halt = |trace: &mut SimTrace, e: Halt| -> Result<()> {
        match e {
            Halt::Pole(t) => {
                trace.blowup_time = Some(t);
                Ok(())
            }
            Halt::Fail(e) => Err(e),
        }
    };

    for n in 0..=steps {
        let t = n as f64 * h;
        let first = {
            let view = View {
                buf: &buf,
                stage_time: t,
                stage: &state,
            };
            dynamics.derivative(t, &view, &mut k1)
        };
        if let Err(e) = first {
            halt(&mut trace, e)?;
            record(&buf, &mut trace, n, &state)?;
            break;
        }
        for (d, v) in buf.derivs.iter_mut().zip(&k1) {
            d.push(*v);
        }
        record(&buf, &mut trace, n, &state)?;
        if n == steps {
            break;
        }

        let mut stages = || -> Result<(), Halt> {
            for k in 0..dim {
                stage[k] = state[k] + 0.5 * h * k1[k];
            }
            dynamics.derivative(
                t + 0.5 * h,
                &View {
                    buf: &buf,
                    stage_time: t + 0.5 * h,
                    stage: &stage,
                },
                &mut k2,
            )?;
            for k in 0..dim {
                stage[k] = state[k] + 0.5 * h * k2[k];
            }
            dynamics.derivative(
                t + 0.5 * h,
                &View {
                    buf: &buf,
                    stage_time: t + 0.5 * h,
                    stage: &stage,
                },
                &mut k3,
            )?;
            for k in 0..dim {
                stage[k] = state[k] + h * k3[k];
            }
            dynamics.derivative(
                t + h,
                &View {
                    buf: &buf,
                    stage_time: t + h,
                    stage: &stage,
                },
                &mut k4,
            )?;
            Ok(())
        };
        if let Err(e) = stages() {
            halt(&mut trace, e)?;
            break;
        }
        let mut finite = true;
        for k in 0..dim {
            let next = state[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
            finite &= next.is_finite();
            state[k] = next.max(dynamics.floor(k));
            buf.values[k].push(state[k]);
        }
        if !finite {
            trace.blowup_time = Some(t + h);
            break;
        }
    }
    Ok(trace)
}

/// Classification with precedence blow-up > oscillating > converged > undetermined.
pub fn classify(trace: &SimTrace) -> Classification {
    if let Some(t_fail) = trace.blowup_time {
        return Classification::BlowUp { t_fail };
    }
    let osc = detect_oscillation(trace, &trace.reference, trace.convergence_tol);
    if osc.sustained {
        return Classification::Oscillating {
            amplitude: osc.amplitude,
            period: osc.period,
        };
    }
    match detect_convergence(trace, &trace.reference, trace.convergence_tol, trace.convergence_window) {
        Some(settling_time) => Classification::Converged { settling_time },
        None => Classification::Undetermined,
    }
}

/// Earliest sample time after which every `|y_j − ȳ_j| / ȳ_j < tol` until the horizon,
/// provided that stretch lasts at least `window`.
pub fn detect_convergence(trace: &SimTrace, reference: &[f64], tol: f64, window: f64) -> Option<f64> {
    let n = trace.len();
    if n == 0 || trace.blowup_time.is_some() {
        return None;
    }
    let inside = |i: usize| {
        trace
            .aggregates
            .iter()
            .zip(reference)
            .all(|(s, &yb)| ((s[i] - yb) / yb).abs() < tol)
    };
    let mut first = n;
    while first > 0 && inside(first - 1) {
        first -= 1;
    }
    if first == n {
        return None;
    }
    let t_star = trace.times[first];
    let end = trace.times[n - 1];
    (end - t_star >= window * (1.0 - 1e-12)).then_some(t_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationSummary {
    /// Peak-to-peak amplitude of `y` over the inspected tail.
    pub amplitude: f64,
    /// Mean spacing of successive peaks; NaN with fewer than two peaks.
    pub period: f64,
    pub sustained: bool,
}

/// Inspect the final 30% of each `y_j(t)` for a sustained oscillation; the link with
/// the largest peak-to-peak amplitude is reported.
pub fn detect_oscillation(trace: &SimTrace, reference: &[f64], tol: f64) -> OscillationSummary {
    let mut best = OscillationSummary {
        amplitude: 0.0,
        period: f64::NAN,
        sustained: false,
    };
    let n = trace.len();
    if n < 3 {
        return best;
    }
    let start = ((1.0 - OSCILLATION_TAIL) * (n - 1) as f64).floor() as usize;
    for (series, &yb) in trace.aggregates.iter().zip(reference) {
        let s = oscillation_of(&trace.times[start..], &series[start..], tol * yb.abs());
        if s.amplitude > best.amplitude {
            best = s;
        }
    }
    best
}

fn oscillation_of(times: &[f64], ys: &[f64], tol_abs: f64) -> OscillationSummary {
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let amplitude = hi - lo;
    let mid = 0.5 * (hi + lo);

    // One extremum per excursion away from the midline; partial excursions at the
    // ends of the window are dropped.
    let mut extrema: Vec<(bool, f64, f64)> = Vec::new();
    let mut above = ys[0] >= mid;
    let mut ext = (times[0], ys[0]);
    for (&t, &y) in times.iter().zip(ys).skip(1) {
        let now_above = y >= mid;
        if now_above != above {
            extrema.push((above, ext.0, ext.1));
            above = now_above;
            ext = (t, y);
        } else if (above && y > ext.1) || (!above && y < ext.1) {
            ext = (t, y);
        }
    }
    if !extrema.is_empty() {
        extrema.remove(0);
    }

    let peaks: Vec<(f64, f64)> = extrema.iter().filter(|e| e.0).map(|e| (e.1, e.2)).collect();
    let period = if peaks.len() >= 2 {
        (peaks[peaks.len() - 1].0 - peaks[0].0) / (peaks.len() - 1) as f64
    } else {
        f64::NAN
    };
    // amplitude of a cycle: peak minus the trough preceding it
    let cycles: Vec<f64> = extrema
        .windows(2)
        .filter(|w| !w[0].0 && w[1].0)
        .map(|w| w[1].2 - w[0].2)
        .collect();
    let sustained =
        amplitude > 10.0 * tol_abs && cycles.len() >= 2 && cycles[cycles.len() - 1] >= 0.95 * cycles[cycles.len() - 2];
    OscillationSummary {
        amplitude,
        period,
        sustained,
    }
}

/// Largest `|R^{(h)} − R^{(h/2)}| / R̄` over the coarse grid.
///
/// `R̄` is the equilibrium per-route rate for single-bottleneck targets and the
/// mean fine-grid rate of each link otherwise.
pub fn step_refinement_check<'a>(target: impl Into<Target<'a>>, cfg: &SimConfig) -> Result<f64> {
    let target = target.into();
    let coarse = simulate(target, cfg)?;
    let fine_cfg = cfg.clone().with_step(cfg.step / 2.0);
    let fine = simulate(target, &fine_cfg)?;
    let scale: Vec<f64> = match &coarse.equilibrium {
        Some(eq) => vec![eq.r_bar; coarse.rates.len()],
        None => fine
            .rates
            .iter()
            .map(|s| s.iter().sum::<f64>() / s.len() as f64)
            .collect(),
    };
    let mut worst: f64 = 0.0;
    for (k, (c, f)) in coarse.rates.iter().zip(&fine.rates).enumerate() {
        for (i, &rc) in c.iter().enumerate() {
            let Some(&rf) = f.get(2 * i) else { break };
            worst = worst.max((rc - rf).abs() / scale[k]);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Feedback, Hop, Link, RouteSpec};

    fn case_b_model(a: f64, rtts: &[f64]) -> NetworkModel {
        NetworkModel::single_link(LinkParams::new(1.0, a, 0.0, 1.0).unwrap(), rtts).unwrap()
    }

    fn synthetic_trace(ys: Vec<f64>, step: f64) -> SimTrace {
        let n = ys.len();
        SimTrace {
            step,
            horizon: (n - 1) as f64 * step,
            times: (0..n).map(|i| i as f64 * step).collect(),
            link_ids: vec!["l".into()],
            route_ids: vec![],
            rates: vec![ys.clone()],
            aggregates: vec![ys],
            flows: vec![],
            classification: Classification::Undetermined,
            equilibrium: None,
            reference: vec![1.0],
            blowup_time: None,
            convergence_tol: 1e-3,
            convergence_window: 1.0,
        }
    }

    #[test]
    fn fixed_point_stays_put() {
        let model = case_b_model(0.4, &[1.0, 2.0]);
        let cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![0.5])).unwrap();
        let trace = simulate(&model, &cfg).unwrap();
        for r in &trace.rates[0] {
            assert!((r - 0.5).abs() <= 1e-10 * 0.5);
        }
        assert_eq!(trace.classification, Classification::Converged { settling_time: 0.0 });
        assert!((trace.times[1] - trace.times[0] - cfg.step).abs() < 1e-15);
    }

    #[test]
    fn case_b_converges() {
        let model = case_b_model(0.4, &[1.0]);
        let cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![0.5])).unwrap();
        let trace = simulate(&model, &cfg).unwrap();
        assert!(trace.classification.is_converged(), "{:?}", trace.classification);
        let y = *trace.aggregates[0].last().unwrap();
        assert!((y - 1.0).abs() < 1e-3);
    }

    #[test]
    fn config_validation() {
        let model = case_b_model(0.4, &[1.0]);
        let cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![0.5])).unwrap();
        assert!(simulate(&model, &cfg.clone().with_step(0.1)).is_err());
        assert!(simulate(&model, &cfg.clone().with_horizon(5.0)).is_err());
        let mut bad = cfg.clone();
        bad.history = InitialHistory::Constant(vec![0.0]);
        assert!(matches!(simulate(&model, &bad), Err(Error::Config(_))));
        bad.history = InitialHistory::PiecewiseLinear(vec![vec![(-0.5, 0.2), (0.0, 0.3)]]);
        assert!(matches!(simulate(&model, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn piecewise_history_is_followed() {
        let model = case_b_model(0.4, &[1.0]);
        let mut cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![0.5])).unwrap();
        cfg.history = InitialHistory::PiecewiseLinear(vec![vec![(-2.0, 0.2), (-1.0, 0.2), (0.0, 0.8)]]);
        let trace = simulate(&model, &cfg).unwrap();
        assert_eq!(trace.rates[0][0], 0.8);
        // y(t) = R(t - 1) for t in [0, 1] reproduces the history ramp
        assert!((trace.aggregates[0][0] - 0.2).abs() < 1e-12);
        let mid = (0.5 / cfg.step).round() as usize;
        assert!((trace.aggregates[0][mid] - 0.5).abs() < 1e-12);
        assert!(trace.classification.is_converged());
    }

    #[test]
    fn queue_feedback_blowup_is_recorded() {
        let model = NetworkModel::single_link(LinkParams::new(1.0, 0.5, 2.0, 1.0).unwrap(), &[1.0]).unwrap();
        let cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![1.2])).unwrap();
        let trace = simulate(&model, &cfg).unwrap();
        assert!(matches!(trace.classification, Classification::BlowUp { t_fail } if t_fail == 0.0));
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn multi_link_network_runs() {
        let l = LinkParams::new(2.0, 0.3, 0.0, 1.0).unwrap();
        let q = LinkParams::new(1.0, 0.2, 1.0, 1.0).unwrap();
        let model = NetworkModel::new(
            vec![
                Link {
                    id: "a".into(),
                    params: l,
                },
                Link {
                    id: "b".into(),
                    params: q,
                },
            ],
            vec![
                RouteSpec::new("long", vec![Hop::new("a", 0.2, 0.8), Hop::new("b", 0.6, 0.4)]),
                RouteSpec::single("short", "a", 0.5),
            ],
        )
        .unwrap();
        let cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![0.5, 0.2]))
            .unwrap()
            .with_horizon(300.0);
        let trace = simulate(&model, &cfg).unwrap();
        assert!(trace.equilibrium.is_none());
        assert!(trace.classification.is_converged(), "{:?}", trace.classification);
        let n = trace.len();
        for i in (0..n).step_by(97) {
            for (r, hops) in [(0usize, vec![(0usize, 0.8), (1, 0.4)]), (1, vec![(0, 0.0)])] {
                let bound = hops
                    .iter()
                    .map(|&(k, back)| {
                        let j = i as f64 - back / cfg.step;
                        if j < 0.0 {
                            [0.5, 0.2][k]
                        } else {
                            trace.rates[k][j.round() as usize]
                        }
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(trace.flows[r][i] <= bound * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn generalized_and_network_agree_when_frozen() {
        let link = LinkParams::new(1.0, 0.05, 2.0, 1.0).unwrap();
        let model = NetworkModel::single_link(link, &[0.5, 1.5]).unwrap();
        let sys = model.to_generalized().unwrap();
        let cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![0.1]))
            .unwrap()
            .with_tbar_mode(TbarMode::Frozen);
        let a = simulate(&model, &cfg).unwrap();
        let b = simulate(&sys, &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.rates[0].iter().zip(&b.rates[0]) {
            assert!((x - y).abs() <= 1e-9 * x.abs());
        }
    }

    #[test]
    fn generalized_tabulated_feedback_simulates() {
        let t = crate::model::TabulatedFeedback::new(vec![(0.0, 1.0), (1.0, 0.0), (2.0, -2.0)]).unwrap();
        let sys = GeneralizedSystem::new(0.2, vec![1.0, 2.0], Feedback::Tabulated(t)).unwrap();
        let cfg = SimConfig::defaults_for(&sys, InitialHistory::Constant(vec![0.3])).unwrap();
        let trace = simulate(&sys, &cfg).unwrap();
        assert!(trace.classification.is_converged(), "{:?}", trace.classification);
    }

    #[test]
    fn convergence_detector() {
        let flat = synthetic_trace(vec![1.0; 50], 0.1);
        assert_eq!(detect_convergence(&flat, &[1.0], 1e-3, 1.0), Some(0.0));
        let mut late = vec![1.0; 50];
        late[49] = 1.01;
        assert_eq!(detect_convergence(&synthetic_trace(late, 0.1), &[1.0], 1e-3, 1.0), None);
        let mut settling = vec![1.5; 10];
        settling.extend(vec![1.0; 40]);
        let t = detect_convergence(&synthetic_trace(settling.clone(), 0.1), &[1.0], 1e-3, 1.0).unwrap();
        assert!((t - 1.0).abs() < 1e-12);
        // window longer than the settled stretch
        assert_eq!(
            detect_convergence(&synthetic_trace(settling, 0.1), &[1.0], 1e-3, 10.0),
            None
        );
    }

    #[test]
    fn oscillation_detector() {
        let step = 0.01;
        let sine: Vec<f64> = (0..10_000).map(|i| 1.0 + 0.3 * (i as f64 * step).sin()).collect();
        let s = detect_oscillation(&synthetic_trace(sine, step), &[1.0], 1e-3);
        assert!(s.sustained);
        assert!((s.period - std::f64::consts::TAU).abs() < 0.05);
        assert!((s.amplitude - 0.6).abs() < 1e-3);

        let damped: Vec<f64> = (0..10_000)
            .map(|i| {
                let t = i as f64 * step;
                1.0 + 0.3 * (-0.1 * t).exp() * t.sin()
            })
            .collect();
        assert!(!detect_oscillation(&synthetic_trace(damped, step), &[1.0], 1e-3).sustained);
        assert!(!detect_oscillation(&synthetic_trace(vec![1.0; 1000], step), &[1.0], 1e-3).sustained);
    }

    #[test]
    fn deterministic() {
        let model = case_b_model(0.45, &[0.3, 1.1, 2.0]);
        let cfg = SimConfig::defaults_for(&model, InitialHistory::Constant(vec![0.05])).unwrap();
        let a = simulate(&model, &cfg).unwrap();
        let b = simulate(&model, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
