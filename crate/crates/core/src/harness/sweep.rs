use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumPoint;
use crate::error::{Error, Result};
use crate::model::NetworkModel;
use crate::sim::{simulate, Classification, InitialHistory};
use crate::stability::{assess, StabilityReport};

use super::csv_out::{csv_error, fmt_f64};
use super::scenario::{read_text, HistorySpec, Overrides, Scenario, ScenarioSpec};

/// Default range of randomized constant histories, as multiples of `R̄`.
pub const HISTORY_RANGE: (f64, f64) = (0.1, 2.0);
/// Range used when `wide_history` is set.
pub const WIDE_HISTORY_RANGE: (f64, f64) = (0.01, 10.0);
/// With queue feedback, initial aggregates stay this fraction below `min(ȳ + w, C)`.
pub const HISTORY_CAP_MARGIN: f64 = 1e-3;

pub const SWEEP_COLUMNS: [&str; 13] = [
    "kTf0",
    "theorem_lhs",
    "theorem_ok",
    "caseA_amax",
    "caseA_ok",
    "caseB_ok",
    "local_pi4",
    "local_pi2",
    "n_converged",
    "n_oscillating",
    "n_blowup",
    "n_undetermined",
    "mean_settling_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisTarget {
    #[serde(rename = "a")]
    Gain,
    #[serde(rename = "b")]
    QueueWeight,
    #[serde(rename = "sigma2")]
    Variance,
    #[serde(rename = "max-delay-scale")]
    DelayScale,
    #[serde(rename = "N-routes")]
    Routes,
}

impl AxisTarget {
    pub fn column(&self) -> &'static str {
        match self {
            AxisTarget::Gain => "a",
            AxisTarget::QueueWeight => "b",
            AxisTarget::Variance => "sigma2",
            AxisTarget::DelayScale => "max-delay-scale",
            AxisTarget::Routes => "N-routes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValues {
    List(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        count: usize,
        #[serde(default)]
        scale: Spacing,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub target: AxisTarget,
    pub values: AxisValues,
}

impl Axis {
    /// Expanded grid values, validated as non-empty and strictly increasing.
    pub fn grid(&self, path: &str) -> Result<Vec<f64>> {
        let vpath = format!("{path}.values");
        let values = match &self.values {
            AxisValues::List(v) => v.clone(),
            AxisValues::Range { min, max, count, scale } => {
                if *count == 0 {
                    return Err(Error::validation(format!("{vpath}.count"), "count must be at least 1"));
                }
                if *count == 1 && min != max {
                    return Err(Error::validation(format!("{vpath}.count"), "count 1 needs min == max"));
                }
                if *scale == Spacing::Log && !(*min > 0.0) {
                    return Err(Error::validation(format!("{vpath}.min"), "log spacing needs min > 0"));
                }
                let n = *count;
                (0..n)
                    .map(|k| {
                        if k == 0 {
                            return *min;
                        }
                        if k == n - 1 {
                            return *max;
                        }
                        let s = k as f64 / (n - 1) as f64;
                        match scale {
                            Spacing::Linear => min + s * (max - min),
                            Spacing::Log => (min.ln() + s * (max.ln() - min.ln())).exp(),
                        }
                    })
                    .collect()
            }
        };
        if values.is_empty() {
            return Err(Error::validation(vpath, "axis has no values"));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::validation(vpath, format!("non-finite value {x}")));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(vpath, "values must be strictly increasing"));
        }
        if self.target == AxisTarget::Routes {
            if let Some(x) = values.iter().find(|x| !(x.fract() == 0.0 && **x >= 1.0)) {
                return Err(Error::validation(
                    vpath,
                    format!("route counts must be positive integers, got {x}"),
                ));
            }
        }
        if self.target == AxisTarget::DelayScale {
            if let Some(x) = values.iter().find(|x| !(**x > 0.0)) {
                return Err(Error::validation(
                    vpath,
                    format!("delay scales must be positive, got {x}"),
                ));
            }
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    /// Inline scenario object, or a path relative to the sweep file.
    base: serde_json::Value,
    axes: Vec<Axis>,
    per_point_trials: usize,
    #[serde(default)]
    wide_history: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioSpec,
    pub axes: Vec<Axis>,
    pub per_point_trials: usize,
    /// Draw initial histories from the wide range instead of the default one.
    pub wide_history: bool,
}

impl SweepSpec {
    pub fn new(base: ScenarioSpec, axes: Vec<Axis>, per_point_trials: usize) -> Result<Self> {
        let spec = SweepSpec {
            base,
            axes,
            per_point_trials,
            wide_history: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse a sweep file; a string `base` is resolved against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: SweepFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Parse(format!("{path}: {}", e.into_inner()))
        })?;
        let base = match file.base {
            serde_json::Value::String(p) => {
                let path: PathBuf = base_dir.join(p);
                ScenarioSpec::from_json_str(&read_text(&path)?)?
            }
            v @ serde_json::Value::Object(_) => ScenarioSpec::from_value(v).map_err(|e| match e {
                Error::Parse(m) => Error::Parse(format!("base.{m}")),
                other => other,
            })?,
            _ => return Err(Error::Parse("base: expected a scenario object or a path".into())),
        };
        let spec = SweepSpec {
            base,
            axes: file.axes,
            per_point_trials: file.per_point_trials,
            wide_history: file.wide_history,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::validation(
                "axes",
                format!("expected 1 or 2 axes, got {}", self.axes.len()),
            ));
        }
        if self.axes.len() == 2 && self.axes[0].target == self.axes[1].target {
            return Err(Error::validation(
                "axes[1].target",
                "both axes sweep the same parameter",
            ));
        }
        if self.per_point_trials == 0 {
            return Err(Error::validation(
                "per_point_trials",
                "at least one trial per point is required",
            ));
        }
        for (i, axis) in self.axes.iter().enumerate() {
            axis.grid(&format!("axes[{i}]"))?;
        }
        self.base.build().map_err(|e| match e {
            Error::Validation { path, message } => Error::validation(format!("base.{path}"), message),
            other => other,
        })?;
        Ok(())
    }

    /// Grid points in row-major order (first axis outermost).
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let grids = self
            .axes
            .iter()
            .enumerate()
            .map(|(i, a)| a.grid(&format!("axes[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let mut points = vec![Vec::new()];
        for grid in &grids {
            points = points
                .into_iter()
                .flat_map(|p| {
                    grid.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }

    /// The base scenario with the swept parameters of one grid point applied.
    pub fn scenario_at(&self, values: &[f64]) -> ScenarioSpec {
        let mut spec = self.base.clone();
        for (axis, &v) in self.axes.iter().zip(values) {
            apply_axis(&mut spec, axis.target, v);
        }
        spec
    }
}

fn apply_axis(spec: &mut ScenarioSpec, target: AxisTarget, v: f64) {
    match target {
        AxisTarget::Gain => spec.links.iter_mut().for_each(|l| l.a = v),
        AxisTarget::QueueWeight => spec.links.iter_mut().for_each(|l| l.b = v),
        AxisTarget::Variance => spec.links.iter_mut().for_each(|l| l.sigma2 = v),
        AxisTarget::DelayScale => {
            for hop in spec.routes.iter_mut().flat_map(|r| r.hops.iter_mut()) {
                hop.forward_delay *= v;
                hop.return_delay *= v;
            }
            spec.sim.step = spec.sim.step.map(|s| s * v);
            spec.sim.horizon = spec.sim.horizon.map(|h| h * v);
            if let HistorySpec::PiecewiseLinear { tables } = &mut spec.sim.history {
                for knot in tables.values_mut().flatten() {
                    knot.0 *= v;
                }
            }
        }
        AxisTarget::Routes => {
            let base = std::mem::take(&mut spec.routes);
            let n = v as usize;
            spec.routes = (0..n)
                .map(|k| {
                    let mut r = base[k % base.len()].clone();
                    r.id = format!("{}-{k}", r.id);
                    r
                })
                .collect();
        }
    }
}

pub fn load_sweep(path: impl AsRef<Path>, overrides: &Overrides) -> Result<SweepSpec> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut spec = SweepSpec::from_json_str(&read_text(path)?, dir)?;
    overrides.apply(&mut spec.base);
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub converged: usize,
    pub oscillating: usize,
    pub blowup: usize,
    pub undetermined: usize,
}

impl Tallies {
    pub fn total(&self) -> usize {
        self.converged + self.oscillating + self.blowup + self.undetermined
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub values: Vec<f64>,
    /// Analytic report; absent for multi-link points or points that failed to build.
    pub report: Option<StabilityReport>,
    pub tallies: Tallies,
    pub mean_settling_time: Option<f64>,
    /// Per-point or per-trial failures; failed trials are tallied as undetermined.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axes: Vec<AxisTarget>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn header(&self) -> Vec<String> {
        self.axes
            .iter()
            .map(|a| a.column().to_string())
            .chain(SWEEP_COLUMNS.iter().map(|c| c.to_string()))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header()).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row_cells(row)).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv>".into(),
            message: e.to_string(),
        })
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn row_cells(row: &SweepRow) -> Vec<String> {
    let num = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let flag = |x: Option<bool>| x.map(|b| b.to_string()).unwrap_or_default();
    let r = row.report.as_ref();
    let mut cells: Vec<String> = row.values.iter().map(|&v| fmt_f64(v)).collect();
    cells.extend([
        num(r.map(|r| r.k_t_f0)),
        num(r.map(|r| r.theorem_lhs)),
        flag(r.map(|r| r.theorem_verdict)),
        num(r.and_then(|r| r.case_a_a_max)),
        flag(r.and_then(|r| r.case_a_verdict)),
        flag(r.and_then(|r| r.case_b_verdict)),
        flag(r.map(|r| r.local_pi4_verdict)),
        flag(r.and_then(|r| r.local_pi2_verdict)),
        row.tallies.converged.to_string(),
        row.tallies.oscillating.to_string(),
        row.tallies.blowup.to_string(),
        row.tallies.undetermined.to_string(),
        num(row.mean_settling_time),
    ]);
    cells
}

/// Equilibrium of link `j` fed by its own routes with every other link ignored.
pub fn isolated_equilibrium(network: &NetworkModel, j: usize) -> Result<EquilibriumPoint> {
    let rtts: Vec<f64> = network
        .routes_through(j)
        .map(|(r, _)| network.routes()[r].round_trip())
        .collect();
    let single = NetworkModel::single_link(network.effective_params(j), &rtts)?;
    EquilibriumPoint::of(&single.to_generalized()?)
}

/// Constant history per link drawn uniformly from `[lo·R̄_j, hi·R̄_j]`.
///
/// With queue feedback the upper end is capped so that the initial aggregate stays
/// below both `ȳ + w` and the capacity pole.
pub fn random_history(network: &NetworkModel, rng: &mut impl Rng, range: (f64, f64)) -> Result<InitialHistory> {
    let values = (0..network.links().len())
        .map(|j| {
            let eq = isolated_equilibrium(network, j)?;
            let p = network.effective_params(j);
            let lo = range.0 * eq.r_bar;
            let mut hi = range.1 * eq.r_bar;
            if p.has_queue_feedback() {
                let a = p.gain;
                let envelope = if a < 1.0 { eq.y_bar / (1.0 - a) } else { f64::INFINITY };
                let cap = envelope.min(p.capacity) * (1.0 - HISTORY_CAP_MARGIN) / eq.routes as f64;
                hi = hi.min(cap);
            }
            Ok(rng.gen_range(lo..=hi.max(lo)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InitialHistory::Constant(values))
}

/// Deterministic generator for trial `trial` of grid point `point`.
pub fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

struct Prepared {
    scenario: Result<Scenario>,
    report: Option<StabilityReport>,
    errors: Vec<String>,
}

type TrialOutcome = std::result::Result<Classification, String>;

fn run_trial(p: &Prepared, seed: u64, point: usize, trial: usize, range: (f64, f64)) -> TrialOutcome {
    let scenario = p.scenario.as_ref().map_err(|e| e.to_string())?;
    let mut rng = trial_rng(seed, point, trial);
    let mut cfg = scenario.sim.clone();
    cfg.history = random_history(&scenario.network, &mut rng, range).map_err(|e| e.to_string())?;
    simulate(&scenario.network, &cfg)
        .map(|t| t.classification)
        .map_err(|e| format!("trial {trial}: {e}"))
}

/// Run every grid point and trial on `workers` threads; output order is independent of `workers`.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepResult> {
    if workers == 0 {
        return Err(Error::validation("workers", "at least one worker is required"));
    }
    spec.validate()?;
    let points = spec.points()?;
    let seed = spec.base.seed;
    let range = if spec.wide_history {
        WIDE_HISTORY_RANGE
    } else {
        HISTORY_RANGE
    };

    let prepared: Vec<Prepared> = points
        .iter()
        .map(|values| {
            let mut errors = Vec::new();
            let scenario = spec.scenario_at(values).build();
            let report = match &scenario {
                Ok(s) if s.network.is_single_link() => match s.network.to_generalized().and_then(|g| assess(&g)) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        errors.push(format!("analysis: {e}"));
                        None
                    }
                },
                Ok(_) => None,
                Err(e) => {
                    errors.push(e.to_string());
                    None
                }
            };
            Prepared {
                scenario,
                report,
                errors,
            }
        })
        .collect();

    let trials = spec.per_point_trials;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        (0..points.len() * trials)
            .into_par_iter()
            .map(|item| {
                let (point, trial) = (item / trials, item % trials);
                run_trial(&prepared[point], seed, point, trial, range)
            })
            .collect()
    });

    let rows = points
        .into_iter()
        .zip(prepared)
        .zip(outcomes.chunks(trials))
        .map(|((values, prep), chunk)| {
            let mut tallies = Tallies::default();
            let mut errors = prep.errors;
            let mut settle = Vec::new();
            for outcome in chunk {
                match outcome {
                    Ok(Classification::Converged { settling_time }) => {
                        tallies.converged += 1;
                        settle.push(*settling_time);
                    }
                    Ok(Classification::Oscillating { .. }) => tallies.oscillating += 1,
                    Ok(Classification::BlowUp { .. }) => tallies.blowup += 1,
                    Ok(Classification::Undetermined) => tallies.undetermined += 1,
                    Err(e) => {
                        tallies.undetermined += 1;
                        if prep.scenario.is_ok() {
                            errors.push(e.clone());
                        }
                    }
                }
            }
            let mean_settling_time = (!settle.is_empty()).then(|| settle.iter().sum::<f64>() / settle.len() as f64);
            SweepRow {
                values,
                report: prep.report,
                tallies,
                mean_settling_time,
                errors,
            }
        })
        .collect();

    Ok(SweepResult {
        axes: spec.axes.iter().map(|a| a.target).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(a: f64, b: f64) -> ScenarioSpec {
        ScenarioSpec::from_json_str(&format!(
            r#"{{"label": "s", "links": [{{"id": "l0", "capacity": 1, "a": {a}, "b": {b}, "sigma2": 1}}],
                "routes": [{{"id": "r0", "hops": [{{"link": "l0", "forward_delay": 1, "return_delay": 0}}]}}],
                "sim": {{"tol": 0.001, "tbar_mode": "time-varying", "horizon": 40,
                         "history": {{"kind": "constant", "values": {{"l0": 0.5}}}}}}, "seed": 11}}"#
        ))
        .unwrap()
    }

    fn axis(target: AxisTarget, values: Vec<f64>) -> Axis {
        Axis {
            target,
            values: AxisValues::List(values),
        }
    }

    #[test]
    fn ranges_expand() {
        let a = Axis {
            target: AxisTarget::Gain,
            values: AxisValues::Range {
                min: 0.1,
                max: 0.4,
                count: 4,
                scale: Spacing::Linear,
            },
        };
        let g = a.grid("axes[0]").unwrap();
        assert_eq!(g.len(), 4);
        assert!((g[1] - 0.2).abs() < 1e-15 && g[3] == 0.4);
        let l = Axis {
            target: AxisTarget::QueueWeight,
            values: AxisValues::Range {
                min: 1e-3,
                max: 10.0,
                count: 5,
                scale: Spacing::Log,
            },
        };
        let g = l.grid("axes[0]").unwrap();
        assert!((g[1] - 1e-2).abs() < 1e-15 && g[4] == 10.0);
    }

    #[test]
    fn invalid_axes_rejected() {
        let err = SweepSpec::new(base(0.3, 0.0), vec![axis(AxisTarget::Gain, vec![0.2, 0.1])], 1).unwrap_err();
        assert!(matches!(err, Error::Validation { ref path, .. } if path == "axes[0].values"));
        assert!(SweepSpec::new(base(0.3, 0.0), vec![axis(AxisTarget::Gain, vec![])], 1).is_err());
        assert!(SweepSpec::new(base(0.3, 0.0), vec![axis(AxisTarget::Gain, vec![0.1])], 0).is_err());
        assert!(SweepSpec::new(base(0.3, 0.0), vec![], 1).is_err());
        assert!(SweepSpec::new(base(0.3, 0.0), vec![axis(AxisTarget::Routes, vec![1.5])], 1).is_err());
    }

    #[test]
    fn grid_is_row_major() {
        let spec = SweepSpec::new(
            base(0.3, 0.0),
            vec![
                axis(AxisTarget::Gain, vec![0.1, 0.2]),
                axis(AxisTarget::Routes, vec![1.0, 2.0, 3.0]),
            ],
            1,
        )
        .unwrap();
        let pts = spec.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![0.1, 2.0]);
        assert_eq!(pts[3], vec![0.2, 1.0]);
        let s = spec.scenario_at(&pts[5]).build().unwrap();
        assert_eq!(s.network.routes().len(), 3);
        assert_eq!(s.network.links()[0].params.gain, 0.2);
    }

    #[test]
    fn delay_scale_scales_everything() {
        let spec = SweepSpec::new(base(0.3, 0.0), vec![axis(AxisTarget::DelayScale, vec![2.0])], 1).unwrap();
        let s = spec.scenario_at(&[2.0]).build().unwrap();
        assert_eq!(s.network.max_round_trip(), 2.0);
        assert_eq!(s.sim.horizon, 80.0);
    }

    #[test]
    fn histories_respect_range_and_cap() {
        let s = base(0.05, 2.0).build().unwrap();
        let eq = isolated_equilibrium(&s.network, 0).unwrap();
        for t in 0..200 {
            let mut rng = trial_rng(3, 0, t);
            let InitialHistory::Constant(v) = random_history(&s.network, &mut rng, WIDE_HISTORY_RANGE).unwrap() else {
                unreachable!()
            };
            assert!(v[0] >= 0.01 * eq.r_bar);
            assert!(v[0] < eq.y_bar / 0.95);
        }
    }

    #[test]
    fn trial_streams_are_deterministic_and_distinct() {
        let x: f64 = trial_rng(1, 2, 3).gen();
        assert_eq!(x, trial_rng(1, 2, 3).gen::<f64>());
        assert_ne!(x, trial_rng(1, 2, 4).gen::<f64>());
        assert_ne!(x, trial_rng(1, 3, 3).gen::<f64>());
    }

    #[test]
    fn case_b_sweep_converges_and_tallies() {
        let spec = SweepSpec::new(base(0.3, 0.0), vec![axis(AxisTarget::Gain, vec![0.2, 0.4])], 3).unwrap();
        let res = run_sweep(&spec, 2).unwrap();
        assert_eq!(res.rows.len(), 2);
        for row in &res.rows {
            assert_eq!(row.tallies.total(), 3);
            assert_eq!(row.tallies.converged, 3, "{row:?}");
            assert!(row.errors.is_empty());
        }
        let csv = res.to_csv().unwrap();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, format!("a,{}", SWEEP_COLUMNS.join(",")));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn b_zero_leaves_case_a_cells_empty() {
        let spec = SweepSpec::new(base(0.05, 1.0), vec![axis(AxisTarget::QueueWeight, vec![0.0, 2.0])], 1).unwrap();
        let res = run_sweep(&spec, 1).unwrap();
        let csv = res.to_csv().unwrap();
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0][4], "");
        assert_eq!(rows[0][5], "");
        assert_eq!(rows[0][6], "true");
        assert_eq!(rows[1][4].parse::<f64>().unwrap(), 1.0 / 11.0);
        assert_eq!(rows[1][6], "");
    }

    #[test]
    fn failing_points_are_recorded() {
        let spec = SweepSpec::new(base(0.3, 0.0), vec![axis(AxisTarget::QueueWeight, vec![-1.0, 0.0])], 2).unwrap();
        let res = run_sweep(&spec, 1).unwrap();
        assert_eq!(res.rows[0].tallies.undetermined, 2);
        assert!(res.rows[0].report.is_none());
        assert!(res.rows[0].errors[0].contains("links[0].b"), "{:?}", res.rows[0].errors);
        assert!(res.rows[1].errors.is_empty());
        assert_eq!(res.rows[1].tallies.converged, 2);
    }
}
