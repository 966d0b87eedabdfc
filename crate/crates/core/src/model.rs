//! Fluid-model right-hand sides for RCP links and the single-bottleneck
//! generalized system `dR/dt = κ R (f(y))⁺_R`, `y(t) = Σ_r R(t − τ_r)`.
//!
//! Units throughout: rates in packets/s, delays in seconds, queues in packets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `T_rj + T_jr` agreement across the hops of one route.
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-12;

/// Parameters of one RCP-controlled link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Capacity `C` in packets/s.
    pub capacity: f64,
    /// Gain `a`.
    pub gain: f64,
    /// Queue feedback weight `b`. Zero removes the queue term entirely.
    pub queue_weight: f64,
    /// Traffic variability `σ²` (1 for Poisson traffic).
    pub variance: f64,
}

impl LinkParams {
    pub fn new(capacity: f64, gain: f64, queue_weight: f64, variance: f64) -> Result<Self> {
        let link = LinkParams {
            capacity,
            gain,
            queue_weight,
            variance,
        };
        link.validate("link")?;
        Ok(link)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.capacity) {
            return Err(Error::validation(
                format!("{path}.capacity"),
                format!("capacity must be positive and finite, got {}", self.capacity),
            ));
        }
        if !positive(self.gain) {
            return Err(Error::validation(
                format!("{path}.a"),
                format!("gain must be positive and finite, got {}", self.gain),
            ));
        }
        if !(self.queue_weight.is_finite() && self.queue_weight >= 0.0) {
            return Err(Error::validation(
                format!("{path}.b"),
                format!(
                    "queue weight must be non-negative and finite, got {}",
                    self.queue_weight
                ),
            ));
        }
        if !positive(self.variance) {
            return Err(Error::validation(
                format!("{path}.sigma2"),
                format!("variance must be positive and finite, got {}", self.variance),
            ));
        }
        Ok(())
    }

    /// True when the queue term participates in the rate update.
    pub fn has_queue_feedback(&self) -> bool {
        self.queue_weight > 0.0
    }

    /// The feedback function `f(y) = C − y − b C p(y)` of this link.
    pub fn feedback(&self) -> Feedback {
        Feedback::Rcp {
            capacity: self.capacity,
            queue_weight: self.queue_weight,
            variance: self.variance,
        }
    }
}

/// One hop of a route: the link plus the forward (`T_rj`) and return (`T_jr`) delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub link: String,
    pub forward_delay: f64,
    pub return_delay: f64,
}

impl Hop {
    pub fn new(link: impl Into<String>, forward_delay: f64, return_delay: f64) -> Self {
        Hop {
            link: link.into(),
            forward_delay,
            return_delay,
        }
    }

    pub fn round_trip(&self) -> f64 {
        self.forward_delay + self.return_delay
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub id: String,
    pub hops: Vec<Hop>,
}

impl RouteSpec {
    pub fn new(id: impl Into<String>, hops: Vec<Hop>) -> Self {
        RouteSpec { id: id.into(), hops }
    }

    /// A single-hop route whose whole round trip is spent before the link.
    pub fn single(id: impl Into<String>, link: impl Into<String>, round_trip: f64) -> Self {
        RouteSpec::new(id, vec![Hop::new(link, round_trip, 0.0)])
    }

    /// Round trip `T_r`. Only meaningful once [`RouteSpec::validate`] passed.
    pub fn round_trip(&self) -> f64 {
        self.hops.first().map_or(0.0, Hop::round_trip)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.hops.is_empty() {
            return Err(Error::validation(
                format!("{path}.hops"),
                format!("route {:?} must traverse at least one link", self.id),
            ));
        }
        for (i, hop) in self.hops.iter().enumerate() {
            for (name, v) in [("forward_delay", hop.forward_delay), ("return_delay", hop.return_delay)] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::validation(
                        format!("{path}.hops[{i}].{name}"),
                        format!("delay must be non-negative and finite, got {v}"),
                    ));
                }
            }
            if self.hops[..i].iter().any(|h| h.link == hop.link) {
                return Err(Error::validation(
                    format!("{path}.hops[{i}].link"),
                    format!("route {:?} lists link {:?} twice", self.id, hop.link),
                ));
            }
        }
        let rtt = self.round_trip();
        if rtt <= 0.0 {
            return Err(Error::validation(
                format!("{path}.hops"),
                format!("route {:?} must have a positive round trip", self.id),
            ));
        }
        for (i, hop) in self.hops.iter().enumerate().skip(1) {
            if (hop.round_trip() - rtt).abs() > ROUND_TRIP_TOLERANCE {
                return Err(Error::validation(
                    format!("{path}.hops[{i}]"),
                    format!(
                        "route {:?}: forward+return delay {} differs from round trip {} of the first hop",
                        self.id,
                        hop.round_trip(),
                        rtt
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub params: LinkParams,
}

/// A set of links and the routes crossing them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    links: Vec<Link>,
    routes: Vec<RouteSpec>,
    queue_feedback_enabled: bool,
    /// `hop_links[r][i]` is the link index of hop `i` of route `r`.
    hop_links: Vec<Vec<usize>>,
}

impl NetworkModel {
    pub fn new(links: Vec<Link>, routes: Vec<RouteSpec>) -> Result<Self> {
        for (i, link) in links.iter().enumerate() {
            if link.id.is_empty() {
                return Err(Error::validation(format!("links[{i}].id"), "link id must not be empty"));
            }
            if links[..i].iter().any(|l| l.id == link.id) {
                return Err(Error::validation(
                    format!("links[{i}].id"),
                    format!("duplicate link id {:?}", link.id),
                ));
            }
            link.params.validate(&format!("links[{i}]"))?;
        }
        if routes.is_empty() {
            return Err(Error::validation("routes", "at least one route is required"));
        }
        let mut hop_links = Vec::with_capacity(routes.len());
        for (r, route) in routes.iter().enumerate() {
            let path = format!("routes[{r}]");
            if route.id.is_empty() {
                return Err(Error::validation(format!("{path}.id"), "route id must not be empty"));
            }
            if routes[..r].iter().any(|o| o.id == route.id) {
                return Err(Error::validation(
                    format!("{path}.id"),
                    format!("duplicate route id {:?}", route.id),
                ));
            }
            route.validate(&path)?;
            let mut idx = Vec::with_capacity(route.hops.len());
            for (i, hop) in route.hops.iter().enumerate() {
                let j = links.iter().position(|l| l.id == hop.link).ok_or_else(|| {
                    Error::validation(
                        format!("{path}.hops[{i}].link"),
                        format!("route {:?} references unknown link {:?}", route.id, hop.link),
                    )
                })?;
                idx.push(j);
            }
            hop_links.push(idx);
        }
        for (j, link) in links.iter().enumerate() {
            if !hop_links.iter().any(|hops| hops.contains(&j)) {
                return Err(Error::validation(
                    format!("links[{j}]"),
                    format!("link {:?} is not traversed by any route", link.id),
                ));
            }
        }
        Ok(NetworkModel {
            links,
            routes,
            queue_feedback_enabled: true,
            hop_links,
        })
    }

    /// A single link shared by the given round trips, one single-hop route each.
    pub fn single_link(params: LinkParams, round_trips: &[f64]) -> Result<Self> {
        let routes = round_trips
            .iter()
            .enumerate()
            .map(|(i, &t)| RouteSpec::single(format!("r{i}"), "l0", t))
            .collect();
        NetworkModel::new(
            vec![Link {
                id: "l0".into(),
                params,
            }],
            routes,
        )
    }

    /// Globally disable (or re-enable) queue feedback; when disabled every `b_j` reads as zero.
    pub fn with_queue_feedback(mut self, enabled: bool) -> Self {
        self.queue_feedback_enabled = enabled;
        self
    }

    pub fn queue_feedback_enabled(&self) -> bool {
        self.queue_feedback_enabled
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn routes(&self) -> &[RouteSpec] {
        &self.routes
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    /// Link indices of the hops of route `r`, in hop order.
    pub fn route_links(&self, r: usize) -> &[usize] {
        &self.hop_links[r]
    }

    /// Indices of routes crossing link `j` together with the hop position on each.
    pub fn routes_through(&self, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.hop_links
            .iter()
            .enumerate()
            .filter_map(move |(r, hops)| hops.iter().position(|&k| k == j).map(|i| (r, i)))
    }

    /// Link parameters with `b` zeroed when queue feedback is globally disabled.
    pub fn effective_params(&self, j: usize) -> LinkParams {
        let mut p = self.links[j].params;
        if !self.queue_feedback_enabled {
            p.queue_weight = 0.0;
        }
        p
    }

    /// Arithmetic mean of the round trips of routes through `j`: the equilibrium value of `T̄_j`.
    pub fn equilibrium_mean_rtt(&self, j: usize) -> f64 {
        let (sum, n) = self
            .routes_through(j)
            .fold((0.0, 0usize), |(s, n), (r, _)| (s + self.routes[r].round_trip(), n + 1));
        sum / n as f64
    }

    pub fn max_round_trip(&self) -> f64 {
        self.routes.iter().map(RouteSpec::round_trip).fold(0.0, f64::max)
    }

    /// All lookbacks `T_rj + T_kr` for `j, k ∈ r`, the delays at which link rates feed `y_j`.
    pub fn feedback_lookbacks(&self) -> impl Iterator<Item = f64> + '_ {
        self.routes.iter().flat_map(|route| {
            route
                .hops
                .iter()
                .flat_map(move |hj| route.hops.iter().map(move |hk| hj.forward_delay + hk.return_delay))
        })
    }

    /// History depth needed to evaluate every delayed term: `max_r (max_j T_rj + max_k T_kr)`.
    pub fn history_depth(&self) -> f64 {
        self.routes
            .iter()
            .map(|route| {
                let fwd = route.hops.iter().map(|h| h.forward_delay).fold(0.0, f64::max);
                let ret = route.hops.iter().map(|h| h.return_delay).fold(0.0, f64::max);
                fwd + ret
            })
            .fold(0.0, f64::max)
    }

    pub fn is_single_link(&self) -> bool {
        self.links.len() == 1
    }
}

/// Mean queue size `p(y) = y σ² / (2 (C − y))`.
pub fn queue_mean(y: f64, link: &LinkParams) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(format!("queue_mean: arrival rate {y} is negative")));
    }
    if y >= link.capacity {
        return Err(Error::domain(format!(
            "queue_mean: arrival rate {y} reaches capacity {}",
            link.capacity
        )));
    }
    Ok(y * link.variance / (2.0 * (link.capacity - y)))
}

/// Harmonic aggregation of the fair rates along a route, `(Σ_j 1/R_j)^{-1}`.
pub fn flow_rate(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::domain("flow_rate: empty route"));
    }
    if let [r] = rates {
        if !(*r > 0.0) {
            return Err(Error::domain(format!("flow_rate: non-positive rate {r}")));
        }
        return Ok(*r);
    }
    let mut inv = 0.0;
    for &r in rates {
        if !(r > 0.0) {
            return Err(Error::domain(format!("flow_rate: non-positive rate {r}")));
        }
        inv += r.recip();
    }
    Ok(inv.recip())
}

/// Flow-weighted mean round trip `Σ x_r T_r / Σ x_r`.
pub fn weighted_mean_rtt(flow_rates: &[f64], round_trips: &[f64]) -> Result<f64> {
    if flow_rates.is_empty() {
        return Err(Error::domain("weighted_mean_rtt: no flows"));
    }
    if flow_rates.len() != round_trips.len() {
        return Err(Error::domain(format!(
            "weighted_mean_rtt: {} rates but {} round trips",
            flow_rates.len(),
            round_trips.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&x, &t) in flow_rates.iter().zip(round_trips) {
        if !(x > 0.0) {
            return Err(Error::domain(format!("weighted_mean_rtt: non-positive rate {x}")));
        }
        if !(t > 0.0) {
            return Err(Error::domain(format!("weighted_mean_rtt: non-positive round trip {t}")));
        }
        num += x * t;
        den += x;
    }
    Ok(num / den)
}

/// Read access to past per-link fair rates `R_k(s)`.
pub trait RateHistory {
    fn rate(&self, link: usize, t: f64) -> Result<f64>;
}

impl<F> RateHistory for F
where
    F: Fn(usize, f64) -> Result<f64>,
{
    fn rate(&self, link: usize, t: f64) -> Result<f64> {
        self(link, t)
    }
}

/// Flow rate `x_r(s)` computed from `R_k(s − T_kr)` over the hops of route `r`.
pub fn route_flow_rate<H: RateHistory + ?Sized>(
    model: &NetworkModel,
    route: usize,
    history: &H,
    s: f64,
) -> Result<f64> {
    let spec = &model.routes[route];
    if let ([hop], [k]) = (&spec.hops[..], &model.hop_links[route][..]) {
        let r = history.rate(*k, s - hop.return_delay)?;
        if !(r > 0.0) {
            return Err(Error::domain(format!("flow_rate: non-positive rate {r}")));
        }
        return Ok(r);
    }
    let mut inv = 0.0;
    for (hop, &k) in spec.hops.iter().zip(&model.hop_links[route]) {
        let r = history.rate(k, s - hop.return_delay)?;
        if !(r > 0.0) {
            return Err(Error::domain(format!("flow_rate: non-positive rate {r}")));
        }
        inv += r.recip();
    }
    Ok(inv.recip())
}

/// Aggregate arrival `y_j(t) = Σ_{r ∋ j} x_r(t − T_rj)`.
pub fn aggregate_arrival<H: RateHistory + ?Sized>(
    model: &NetworkModel,
    link: usize,
    history: &H,
    t: f64,
) -> Result<f64> {
    let mut y = 0.0;
    for (r, hop) in model.routes_through(link) {
        let fwd = model.routes[r].hops[hop].forward_delay;
        y += route_flow_rate(model, r, history, t - fwd)?;
    }
    Ok(y)
}

/// `dR_j/dt = (a R_j / (C_j T̄_j)) (C_j − y_j − b_j C_j p_j(y_j))`.
///
/// With queue feedback off (globally or `b_j = 0`) the queue term is never
/// evaluated, so `y_j ≥ C_j` is admissible.
pub fn rcp_rhs(model: &NetworkModel, link: usize, rate: f64, aggregate: f64, mean_rtt: f64) -> Result<f64> {
    let p = model.effective_params(link);
    link_rhs(&p, rate, aggregate, mean_rtt)
}

pub(crate) fn link_rhs(p: &LinkParams, rate: f64, aggregate: f64, mean_rtt: f64) -> Result<f64> {
    let mismatch = p.capacity - aggregate;
    let feedback = if p.has_queue_feedback() {
        mismatch - p.queue_weight * p.capacity * queue_mean(aggregate, p)?
    } else {
        mismatch
    };
    Ok(projection(p.gain * rate / (p.capacity * mean_rtt) * feedback, rate))
}

/// `(v)⁺_w`: zero when `v < 0` and `w ≤ 0`, otherwise `v`.
pub fn projection(v: f64, w: f64) -> f64 {
    if v < 0.0 && w <= 0.0 {
        0.0
    } else {
        v
    }
}

/// A strictly decreasing feedback function `f(y)` with a positive root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feedback {
    /// `f(y) = C − y − b C σ² y / (2 (C − y))`; the queue term is absent when `b = 0`.
    Rcp {
        capacity: f64,
        queue_weight: f64,
        variance: f64,
    },
    /// Piecewise-linear interpolation through decreasing knots, extrapolated linearly.
    Tabulated(TabulatedFeedback),
}

impl Feedback {
    /// Case B feedback `f(y) = C − y`.
    pub fn linear(capacity: f64) -> Self {
        Feedback::Rcp {
            capacity,
            queue_weight: 0.0,
            variance: 1.0,
        }
    }

    pub fn value(&self, y: f64) -> Result<f64> {
        match self {
            Feedback::Rcp {
                capacity,
                queue_weight,
                variance,
            } => {
                if *queue_weight > 0.0 {
                    if y >= *capacity {
                        return Err(Error::domain(format!(
                            "feedback evaluated at y={y} beyond its pole at C={capacity}"
                        )));
                    }
                    Ok(capacity - y - queue_weight * capacity * variance * y / (2.0 * (capacity - y)))
                } else {
                    Ok(capacity - y)
                }
            }
            Feedback::Tabulated(t) => Ok(t.value(y)),
        }
    }

    /// Analytic derivative `f'(y)` (one-sided slope at tabulated knots).
    pub fn derivative(&self, y: f64) -> Result<f64> {
        match self {
            Feedback::Rcp {
                capacity,
                queue_weight,
                variance,
            } => {
                if *queue_weight > 0.0 {
                    if y >= *capacity {
                        return Err(Error::domain(format!(
                            "feedback derivative at y={y} beyond its pole at C={capacity}"
                        )));
                    }
                    let gap = capacity - y;
                    Ok(-1.0 - queue_weight * variance * capacity * capacity / (2.0 * gap * gap))
                } else {
                    Ok(-1.0)
                }
            }
            Feedback::Tabulated(t) => Ok(t.slope(y)),
        }
    }

    /// Least upper bound of the domain: `C` when the queue term is present, `+∞` otherwise.
    pub fn domain_upper(&self) -> f64 {
        match self {
            Feedback::Rcp {
                capacity, queue_weight, ..
            } if *queue_weight > 0.0 => *capacity,
            _ => f64::INFINITY,
        }
    }

    pub fn is_concave(&self) -> bool {
        match self {
            Feedback::Rcp { .. } => true,
            Feedback::Tabulated(t) => t.is_concave(),
        }
    }

    /// `(C, b, σ²)` when this is an RCP feedback.
    pub fn rcp_params(&self) -> Option<(f64, f64, f64)> {
        match self {
            Feedback::Rcp {
                capacity,
                queue_weight,
                variance,
            } => Some((*capacity, *queue_weight, *variance)),
            Feedback::Tabulated(_) => None,
        }
    }
}

/// Knots `(y_i, f_i)` with increasing `y_i` and decreasing `f_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct TabulatedFeedback {
    knots: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for TabulatedFeedback {
    type Error = Error;

    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        TabulatedFeedback::new(knots)
    }
}

impl From<TabulatedFeedback> for Vec<(f64, f64)> {
    fn from(t: TabulatedFeedback) -> Self {
        t.knots
    }
}

impl TabulatedFeedback {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::domain("tabulated feedback needs at least two knots"));
        }
        if knots.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
            return Err(Error::domain("tabulated feedback knots must be finite"));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::domain(
                    "tabulated feedback abscissae must be strictly increasing",
                ));
            }
            if !(w[1].1 < w[0].1) {
                return Err(Error::domain("tabulated feedback values must be strictly decreasing"));
            }
        }
        Ok(TabulatedFeedback { knots })
    }

    fn segment(&self, y: f64) -> usize {
        let n = self.knots.len();
        match self.knots.iter().position(|&(x, _)| x > y) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => n - 2,
        }
    }

    fn slope_of(&self, i: usize) -> f64 {
        let (x0, v0) = self.knots[i];
        let (x1, v1) = self.knots[i + 1];
        (v1 - v0) / (x1 - x0)
    }

    pub fn value(&self, y: f64) -> f64 {
        let i = self.segment(y);
        let (x0, v0) = self.knots[i];
        v0 + self.slope_of(i) * (y - x0)
    }

    pub fn slope(&self, y: f64) -> f64 {
        self.slope_of(self.segment(y))
    }

    pub fn is_concave(&self) -> bool {
        (0..self.knots.len() - 2).all(|i| self.slope_of(i + 1) <= self.slope_of(i))
    }
}

/// The single-bottleneck abstraction: gain `κ`, route delays `τ_r`, feedback `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedSystem {
    kappa: f64,
    delays: Vec<f64>,
    feedback: Feedback,
}

impl GeneralizedSystem {
    pub fn new(kappa: f64, delays: Vec<f64>, feedback: Feedback) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::domain(format!("kappa must be positive, got {kappa}")));
        }
        if delays.is_empty() {
            return Err(Error::domain("at least one route delay is required"));
        }
        if let Some(d) = delays.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::domain(format!("route delays must be positive, got {d}")));
        }
        if let Feedback::Rcp {
            capacity,
            queue_weight,
            variance,
        } = feedback
        {
            LinkParams {
                capacity,
                gain: 1.0,
                queue_weight,
                variance,
            }
            .validate("feedback")?;
        }
        let f0 = feedback.value(0.0)?;
        if !(f0 > 0.0) {
            return Err(Error::domain(format!("f(0) must be positive, got {f0}")));
        }
        Ok(GeneralizedSystem {
            kappa,
            delays,
            feedback,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn feedback(&self) -> &Feedback {
        &self.feedback
    }

    pub fn route_count(&self) -> usize {
        self.delays.len()
    }

    /// Arithmetic mean `T̄` of the delays.
    pub fn mean_delay(&self) -> f64 {
        self.delays.iter().sum::<f64>() / self.delays.len() as f64
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_delay(&self) -> f64 {
        self.delays.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `f(0)`, positive by construction.
    pub fn f_zero(&self) -> f64 {
        self.feedback.value(0.0).expect("f(0) validated at construction")
    }

    /// `κ T̄ f(0)`, which equals the RCP gain `a` for RCP feedback.
    pub fn gain_product(&self) -> f64 {
        self.kappa * self.mean_delay() * self.f_zero()
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        GeneralizedSystem::new(kappa, self.delays.clone(), self.feedback.clone())
    }
}

/// `(κ R f(Σ_r R(t − τ_r)))⁺_R`.
pub fn generalized_rhs(sys: &GeneralizedSystem, rate: f64, delayed_rates: &[f64]) -> Result<f64> {
    if delayed_rates.len() != sys.delays.len() {
        return Err(Error::domain(format!(
            "expected {} delayed rates, got {}",
            sys.delays.len(),
            delayed_rates.len()
        )));
    }
    let y: f64 = delayed_rates.iter().sum();
    Ok(projection(sys.kappa * rate * sys.feedback.value(y)?, rate))
}

/// Map a single RCP link and its single-hop routes onto the generalized system:
/// `κ = a / (C T̄)`, `τ_r = T_r`.
pub fn single_link_to_generalized(link: &LinkParams, routes: &[RouteSpec]) -> Result<GeneralizedSystem> {
    if routes.is_empty() {
        return Err(Error::Topology("no routes cross the link".into()));
    }
    if let Some(r) = routes.iter().find(|r| r.hops.len() != 1) {
        return Err(Error::Topology(format!(
            "route {:?} traverses {} links; the generalized system needs single-hop routes",
            r.id,
            r.hops.len()
        )));
    }
    for (i, r) in routes.iter().enumerate() {
        r.validate(&format!("routes[{i}]"))?;
    }
    link.validate("link")?;
    let delays: Vec<f64> = routes.iter().map(RouteSpec::round_trip).collect();
    let mean = delays.iter().sum::<f64>() / delays.len() as f64;
    GeneralizedSystem::new(link.gain / (link.capacity * mean), delays, link.feedback())
}

impl NetworkModel {
    /// Generalized-system view of a single-link network (honours the queue-feedback flag).
    pub fn to_generalized(&self) -> Result<GeneralizedSystem> {
        if !self.is_single_link() {
            return Err(Error::Topology(format!(
                "network has {} links; the generalized system is single-bottleneck",
                self.links.len()
            )));
        }
        single_link_to_generalized(&self.effective_params(0), &self.routes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn link(c: f64, a: f64, b: f64, s2: f64) -> LinkParams {
        LinkParams::new(c, a, b, s2).unwrap()
    }

    #[test]
    fn queue_mean_values() {
        let l = link(1.0, 0.1, 1.0, 1.0);
        assert_eq!(queue_mean(0.0, &l).unwrap(), 0.0);
        assert!((queue_mean(0.5, &l).unwrap() - 0.5).abs() < 1e-15);
        assert!((queue_mean(0.8, &l).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(queue_mean(1.0, &l), Err(Error::Domain(_))));
        assert!(matches!(queue_mean(-0.1, &l), Err(Error::Domain(_))));
    }

    #[test]
    fn flow_rate_values() {
        assert_eq!(flow_rate(&[5.0]).unwrap(), 5.0);
        assert!((flow_rate(&[2.0, 3.0]).unwrap() - 1.2).abs() < 1e-15);
        assert!((flow_rate(&[3.0; 4]).unwrap() - 0.75).abs() < 1e-15);
        assert!(flow_rate(&[1.0, 0.0]).is_err());
        assert!(flow_rate(&[]).is_err());
    }

    #[test]
    fn weighted_rtt_values() {
        assert!((weighted_mean_rtt(&[0.7, 0.7], &[2.0, 4.0]).unwrap() - 3.0).abs() < 1e-15);
        assert!((weighted_mean_rtt(&[1.0, 3.0], &[2.0, 4.0]).unwrap() - 3.5).abs() < 1e-15);
        assert_eq!(weighted_mean_rtt(&[1.0], &[7.0]).unwrap(), 7.0);
        assert!(weighted_mean_rtt(&[], &[]).is_err());
        assert!(weighted_mean_rtt(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn aggregate_arrival_constant_history() {
        let single = NetworkModel::single_link(link(1.0, 0.1, 0.0, 1.0), &[1.0]).unwrap();
        let h = |_: usize, _: f64| -> Result<f64> { Ok(0.3) };
        assert_eq!(aggregate_arrival(&single, 0, &h, 5.0).unwrap(), 0.3);

        let many = NetworkModel::single_link(link(1.0, 0.1, 0.0, 1.0), &[1.0, 2.0, 3.0]).unwrap();
        assert!((aggregate_arrival(&many, 0, &h, 5.0).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn aggregate_arrival_two_link_route() {
        let l = link(10.0, 0.1, 0.0, 1.0);
        let model = NetworkModel::new(
            vec![
                Link {
                    id: "a".into(),
                    params: l,
                },
                Link {
                    id: "b".into(),
                    params: l,
                },
            ],
            vec![RouteSpec::new(
                "r",
                vec![Hop::new("a", 0.2, 0.8), Hop::new("b", 0.5, 0.5)],
            )],
        )
        .unwrap();
        let h = |k: usize, _: f64| -> Result<f64> { Ok(if k == 0 { 2.0 } else { 3.0 }) };
        assert!((aggregate_arrival(&model, 0, &h, 3.0).unwrap() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn aggregate_arrival_reports_underflow() {
        let model = NetworkModel::single_link(link(1.0, 0.1, 0.0, 1.0), &[2.0]).unwrap();
        let h = |_: usize, t: f64| -> Result<f64> {
            if t < -1.0 {
                Err(Error::HistoryUnderflow {
                    requested: t,
                    available: -1.0,
                })
            } else {
                Ok(1.0)
            }
        };
        assert!(matches!(
            aggregate_arrival(&model, 0, &h, 0.0),
            Err(Error::HistoryUnderflow { .. })
        ));
    }

    #[test]
    fn rcp_rhs_values() {
        let b0 = NetworkModel::single_link(link(1.0, 0.4, 0.0, 1.0), &[1.0]).unwrap();
        assert!((rcp_rhs(&b0, 0, 0.5, 0.5, 1.0).unwrap() - 0.1).abs() < 1e-15);
        // queue term removed: y beyond capacity is legal
        assert!(rcp_rhs(&b0, 0, 0.5, 1.5, 1.0).unwrap() < 0.0);

        let b2 = NetworkModel::single_link(link(1.0, 0.1, 2.0, 1.0), &[1.0]).unwrap();
        assert!((rcp_rhs(&b2, 0, 0.2, 0.5, 1.0).unwrap() + 0.01).abs() < 1e-15);
        assert!(rcp_rhs(&b2, 0, 0.2, 1.0, 1.0).is_err());
        let off = b2.clone().with_queue_feedback(false);
        assert!(rcp_rhs(&off, 0, 0.2, 1.0, 1.0).is_ok());
    }

    #[test]
    fn rcp_rhs_vanishes_at_equilibrium() {
        let y = crate::equilibrium::solve_equilibrium_case_a(1.0, 2.0, 1.0)
            .unwrap()
            .y_bar;
        let m = NetworkModel::single_link(link(1.0, 0.1, 2.0, 1.0), &[1.0]).unwrap();
        assert!(rcp_rhs(&m, 0, y, y, 1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn projection_cases() {
        assert_eq!(projection(-1.0, -0.5), 0.0);
        assert_eq!(projection(-1.0, 0.0), 0.0);
        assert_eq!(projection(-1.0, 0.5), -1.0);
        assert_eq!(projection(1.0, -0.5), 1.0);
    }

    #[test]
    fn generalized_rhs_values() {
        let sys = GeneralizedSystem::new(0.4, vec![1.0], Feedback::linear(1.0)).unwrap();
        assert_eq!(generalized_rhs(&sys, 0.3, &[1.0]).unwrap(), 0.0);
        assert!((generalized_rhs(&sys, 0.5, &[0.5]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(generalized_rhs(&sys, 0.0, &[2.0]).unwrap(), 0.0);
        assert!(generalized_rhs(&sys, 0.5, &[0.5, 0.5]).is_err());

        let a = GeneralizedSystem::new(
            0.1,
            vec![1.0, 1.0],
            Feedback::Rcp {
                capacity: 1.0,
                queue_weight: 2.0,
                variance: 1.0,
            },
        )
        .unwrap();
        assert!(matches!(generalized_rhs(&a, 0.5, &[0.5, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn single_link_mapping() {
        let sys = single_link_to_generalized(&link(1.0, 0.4, 0.0, 1.0), &[RouteSpec::single("r", "l", 1.0)]).unwrap();
        assert!((sys.kappa() - 0.4).abs() < 1e-15);
        assert_eq!(sys.feedback().value(0.3).unwrap(), 0.7);
        assert_eq!(sys.feedback().domain_upper(), f64::INFINITY);
        assert_eq!(sys.f_zero(), 1.0);

        let sys = single_link_to_generalized(
            &link(1.0, 0.05, 2.0, 1.0),
            &[RouteSpec::single("r0", "l", 0.5), RouteSpec::single("r1", "l", 1.5)],
        )
        .unwrap();
        assert!((sys.kappa() - 0.05).abs() < 1e-15);
        assert_eq!(sys.mean_delay(), 1.0);
        assert_eq!(sys.feedback().domain_upper(), 1.0);
        assert!((sys.gain_product() - 0.05).abs() < 1e-15);

        let err = single_link_to_generalized(
            &link(1.0, 0.4, 0.0, 1.0),
            &[RouteSpec::new(
                "r",
                vec![Hop::new("l", 0.5, 0.5), Hop::new("m", 0.5, 0.5)],
            )],
        );
        assert!(matches!(err, Err(Error::Topology(_))));
    }

    #[test]
    fn route_validation() {
        let bad = RouteSpec::new("r9", vec![Hop::new("a", 0.5, 0.5), Hop::new("b", 0.5, 0.6)]);
        let err = bad.validate("routes[0]").unwrap_err().to_string();
        assert!(err.contains("r9"), "{err}");
        assert!(RouteSpec::new("r", vec![]).validate("routes[0]").is_err());
        assert!(RouteSpec::single("r", "a", 0.0).validate("routes[0]").is_err());
    }

    #[test]
    fn network_validation() {
        let l = link(1.0, 0.1, 0.0, 1.0);
        let unknown = NetworkModel::new(
            vec![Link {
                id: "a".into(),
                params: l,
            }],
            vec![RouteSpec::single("r", "zz", 1.0)],
        );
        assert!(unknown.is_err());
        let orphan = NetworkModel::new(
            vec![
                Link {
                    id: "a".into(),
                    params: l,
                },
                Link {
                    id: "b".into(),
                    params: l,
                },
            ],
            vec![RouteSpec::single("r", "a", 1.0)],
        );
        assert!(orphan.unwrap_err().to_string().contains("\"b\""));
    }

    #[test]
    fn tabulated_feedback() {
        let t = TabulatedFeedback::new(vec![(0.0, 2.0), (1.0, 1.0), (2.0, -1.0)]).unwrap();
        assert_eq!(t.value(0.5), 1.5);
        assert_eq!(t.value(3.0), -3.0);
        assert_eq!(t.value(-1.0), 3.0);
        assert!(t.is_concave());
        assert!(TabulatedFeedback::new(vec![(0.0, 1.0), (1.0, 2.0)]).is_err());
    }

    proptest! {
        #[test]
        fn harmonic_rate_below_min(rates in prop::collection::vec(1e-3f64..1e3, 1..8)) {
            let x = flow_rate(&rates).unwrap();
            let m = rates.iter().copied().fold(f64::INFINITY, f64::min);
            if rates.len() == 1 {
                prop_assert_eq!(x, m);
            } else {
                prop_assert!(x < m);
            }
        }

        #[test]
        fn rhs_sign_follows_feedback(
            c in 0.1f64..100.0, a in 0.01f64..2.0, b in 0.0f64..5.0, s2 in 0.25f64..4.0,
            frac in 0.0f64..0.999, r in 1e-3f64..10.0, tbar in 0.01f64..10.0,
        ) {
            let l = link(c, a, b, s2);
            let m = NetworkModel::single_link(l, &[tbar]).unwrap();
            let y = frac * c;
            let fb = l.feedback().value(y).unwrap();
            let d = rcp_rhs(&m, 0, r, y, tbar).unwrap();
            prop_assert!(d * fb.signum() >= 0.0);
        }

        #[test]
        fn rcp_feedback_strictly_decreasing(
            c in 0.1f64..100.0, b in 0.0f64..10.0, s2 in 0.25f64..4.0,
            u in 0.0f64..1.0, v in 0.0f64..1.0,
        ) {
            prop_assume!(u < v && v < 0.999_999);
            let f = Feedback::Rcp { capacity: c, queue_weight: b, variance: s2 };
            prop_assert!(f.value(u * c).unwrap() > f.value(v * c).unwrap());
        }

        #[test]
        fn case_b_mapping_matches_rcp_rhs(
            c in 0.1f64..100.0, a in 0.01f64..2.0, tbar in 0.01f64..10.0,
            r in 1e-3f64..10.0, yfrac in 0.0f64..3.0,
        ) {
            let l = link(c, a, 0.0, 1.0);
            let model = NetworkModel::single_link(l, &[tbar]).unwrap();
            let sys = model.to_generalized().unwrap();
            let y = yfrac * c;
            let g = generalized_rhs(&sys, r, &[y]).unwrap();
            let d = rcp_rhs(&model, 0, r, y, tbar).unwrap();
            prop_assert!((g - d).abs() <= 1e-12 * d.abs().max(1e-300));
        }
    }
}
