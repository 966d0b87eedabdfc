use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hop, Link, LinkParams, NetworkModel, RouteSpec};
use crate::sim::{InitialHistory, SimConfig, TbarMode, DEFAULT_CONVERGENCE_TOL};

/// On-disk form of a scenario. Unknown keys are rejected at every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub label: String,
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteEntry>,
    pub sim: SimSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub capacity: f64,
    pub a: f64,
    pub b: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteEntry {
    pub id: String,
    pub hops: Vec<HopSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopSpec {
    pub link: String,
    pub forward_delay: f64,
    pub return_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    /// `None` selects the shortest lookback over 20.
    #[serde(default)]
    pub step: Option<f64>,
    /// `None` selects 50 times the longest round trip.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub tbar_mode: TbarMode,
    pub history: HistorySpec,
}

fn default_tol() -> f64 {
    DEFAULT_CONVERGENCE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HistorySpec {
    /// One constant rate per link id.
    Constant { values: BTreeMap<String, f64> },
    /// Knots `[t, R]` per link id, ending at `t = 0`.
    PiecewiseLinear { tables: BTreeMap<String, Vec<(f64, f64)>> },
}

/// Command-line overrides applied on top of the file's `sim` block.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub tol: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ScenarioSpec) {
        if let Some(step) = self.step {
            spec.sim.step = Some(step);
        }
        if let Some(horizon) = self.horizon {
            spec.sim.horizon = Some(horizon);
        }
        if let Some(tol) = self.tol {
            spec.sim.tol = tol;
        }
    }
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub network: NetworkModel,
    pub sim: SimConfig,
    pub seed: u64,
    pub spec: ScenarioSpec,
}

impl ScenarioSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path.is_empty() || path == "." {
                Error::Parse(inner.to_string())
            } else {
                Error::Parse(format!("{path}: {inner}"))
            }
        })
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::Parse(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn build(&self) -> Result<Scenario> {
        let links = self
            .links
            .iter()
            .enumerate()
            .map(|(i, l)| {
                check_finite(&format!("links[{i}].capacity"), l.capacity)?;
                check_finite(&format!("links[{i}].a"), l.a)?;
                check_finite(&format!("links[{i}].b"), l.b)?;
                check_finite(&format!("links[{i}].sigma2"), l.sigma2)?;
                let params = LinkParams {
                    capacity: l.capacity,
                    gain: l.a,
                    queue_weight: l.b,
                    variance: l.sigma2,
                };
                params.validate(&format!("links[{i}]"))?;
                Ok(Link {
                    id: l.id.clone(),
                    params,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if links.is_empty() {
            return Err(Error::validation("links", "at least one link is required"));
        }
        let routes = self
            .routes
            .iter()
            .map(|r| {
                RouteSpec::new(
                    r.id.clone(),
                    r.hops
                        .iter()
                        .map(|h| Hop::new(h.link.clone(), h.forward_delay, h.return_delay))
                        .collect(),
                )
            })
            .collect();
        let network = NetworkModel::new(links, routes)?;
        let sim = self.sim_config(&network)?;
        Ok(Scenario {
            label: self.label.clone(),
            network,
            sim,
            seed: self.seed,
            spec: self.clone(),
        })
    }

    fn sim_config(&self, network: &NetworkModel) -> Result<SimConfig> {
        let history = self.history(network)?;
        let mut cfg =
            SimConfig::defaults_for(network, history).map_err(|e| Error::validation("routes", config_message(e)))?;
        if let Some(step) = self.sim.step {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::validation(
                    "sim.step",
                    format!("step must be positive, got {step}"),
                ));
            }
            if step > cfg.step * (1.0 + 1e-12) {
                return Err(Error::validation(
                    "sim.step",
                    format!(
                        "step {step} is longer than the shortest lookback over 20 ({})",
                        cfg.step
                    ),
                ));
            }
            cfg.step = step;
        }
        if let Some(horizon) = self.sim.horizon {
            cfg.horizon = horizon;
            cfg.validate_for(network)
                .map_err(|e| Error::validation("sim.horizon", config_message(e)))?;
        }
        if !(self.sim.tol.is_finite() && self.sim.tol > 0.0) {
            return Err(Error::validation(
                "sim.tol",
                format!("tolerance must be positive, got {}", self.sim.tol),
            ));
        }
        cfg.convergence_tol = self.sim.tol;
        cfg.tbar_mode = self.sim.tbar_mode;
        cfg.validate_for(network)
            .map_err(|e| Error::validation("sim.history", config_message(e)))?;
        Ok(cfg)
    }

    fn history(&self, network: &NetworkModel) -> Result<InitialHistory> {
        let ids: Vec<&str> = network.links().iter().map(|l| l.id.as_str()).collect();
        match &self.sim.history {
            HistorySpec::Constant { values } => {
                check_keys(values.keys(), &ids, "sim.history.values")?;
                let v = ids
                    .iter()
                    .map(|id| {
                        let x = values[*id];
                        if !(x.is_finite() && x > 0.0) {
                            return Err(Error::validation(
                                format!("sim.history.values.{id}"),
                                format!("initial rate must be positive, got {x}"),
                            ));
                        }
                        Ok(x)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(InitialHistory::Constant(v))
            }
            HistorySpec::PiecewiseLinear { tables } => {
                check_keys(tables.keys(), &ids, "sim.history.tables")?;
                Ok(InitialHistory::PiecewiseLinear(
                    ids.iter().map(|id| tables[*id].clone()).collect(),
                ))
            }
        }
    }
}

fn check_finite(path: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(path, format!("value must be finite, got {x}")))
    }
}

fn check_keys<'a>(keys: impl Iterator<Item = &'a String>, ids: &[&str], path: &str) -> Result<()> {
    let keys: Vec<&String> = keys.collect();
    if let Some(k) = keys.iter().find(|k| !ids.contains(&k.as_str())) {
        return Err(Error::validation(
            format!("{path}.{k}"),
            format!("no link with id {k:?}"),
        ));
    }
    if let Some(id) = ids.iter().find(|id| !keys.iter().any(|k| k == *id)) {
        return Err(Error::validation(
            format!("{path}.{id}"),
            format!("missing initial history for link {id:?}"),
        ));
    }
    Ok(())
}

fn config_message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self> {
        ScenarioSpec::from_json_str(text)?.build()
    }

    /// Rebuild with command-line overrides applied.
    pub fn with_overrides(&self, overrides: &Overrides) -> Result<Self> {
        let mut spec = self.spec.clone();
        overrides.apply(&mut spec);
        spec.build()
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    Scenario::from_json_str(&read_text(path.as_ref())?)
}

pub fn load_scenario_with(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Scenario> {
    let mut spec = ScenarioSpec::from_json_str(&read_text(path.as_ref())?)?;
    overrides.apply(&mut spec);
    spec.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Feedback;

    const MINIMAL: &str = r#"{
        "label": "case-b",
        "links": [{"id": "l0", "capacity": 1, "a": 0.4, "b": 0, "sigma2": 1}],
        "routes": [{"id": "r0", "hops": [{"link": "l0", "forward_delay": 0.5, "return_delay": 0.5}]}],
        "sim": {"step": null, "horizon": null, "tol": 0.001, "tbar_mode": "time-varying",
                "history": {"kind": "constant", "values": {"l0": 0.5}}},
        "seed": 7
    }"#;

    fn edit(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        f(&mut v);
        v.to_string()
    }

    fn validation_path(text: &str) -> String {
        match Scenario::from_json_str(text) {
            Err(Error::Validation { path, .. }) => path,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_case_b_loads() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(s.label, "case-b");
        assert_eq!(s.seed, 7);
        let sys = s.network.to_generalized().unwrap();
        assert_eq!(sys.feedback().domain_upper(), f64::INFINITY);
        assert!(matches!(sys.feedback(), Feedback::Rcp { queue_weight, .. } if *queue_weight == 0.0));
        assert!((s.sim.step - 0.05).abs() < 1e-15);
        assert!((s.sim.horizon - 50.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_round_trip_names_route() {
        let text = r#"{
            "label": "x",
            "links": [{"id": "l0", "capacity": 1, "a": 0.4, "b": 0, "sigma2": 1},
                      {"id": "l1", "capacity": 1, "a": 0.4, "b": 0, "sigma2": 1}],
            "routes": [{"id": "long", "hops": [{"link": "l0", "forward_delay": 0.1, "return_delay": 0.9},
                                               {"link": "l1", "forward_delay": 0.3, "return_delay": 0.9}]}],
            "sim": {"tol": 0.001, "tbar_mode": "frozen",
                    "history": {"kind": "constant", "values": {"l0": 0.5, "l1": 0.5}}},
            "seed": 0
        }"#;
        let err = Scenario::from_json_str(text).unwrap_err();
        assert!(err.to_string().contains("long"), "{err}");
        assert!(matches!(err, Error::Validation { .. }));
    }

    #[test]
    fn zero_gain_is_rejected() {
        let text = edit(|v| v["links"][0]["a"] = 0.0.into());
        assert_eq!(validation_path(&text), "links[0].a");
    }

    #[test]
    fn unknown_keys_are_parse_errors() {
        let text = edit(|v| v["sim"]["extra"] = 1.into());
        let err = Scenario::from_json_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.contains("extra")), "{err}");

        let text = edit(|v| v["links"][0]["capcity"] = 1.into());
        let err = Scenario::from_json_str(&text).unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.starts_with("links[0]")), "{err}");
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(Scenario::from_json_str("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn history_must_cover_links() {
        let text = edit(|v| v["sim"]["history"]["values"] = serde_json::json!({"l9": 0.5}));
        assert_eq!(validation_path(&text), "sim.history.values.l9");
        let text = edit(|v| v["sim"]["history"]["values"] = serde_json::json!({}));
        assert_eq!(validation_path(&text), "sim.history.values.l0");
        let text = edit(|v| v["sim"]["history"]["values"]["l0"] = (-1.0).into());
        assert_eq!(validation_path(&text), "sim.history.values.l0");
    }

    #[test]
    fn step_and_horizon_checked() {
        let text = edit(|v| v["sim"]["step"] = 0.2.into());
        assert_eq!(validation_path(&text), "sim.step");
        let text = edit(|v| v["sim"]["horizon"] = 5.0.into());
        assert_eq!(validation_path(&text), "sim.horizon");
        let text = edit(|v| v["sim"]["tol"] = 0.0.into());
        assert_eq!(validation_path(&text), "sim.tol");
    }

    #[test]
    fn overrides_rebuild() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        let o = Overrides {
            step: Some(0.01),
            horizon: Some(30.0),
            tol: Some(1e-4),
        };
        let t = s.with_overrides(&o).unwrap();
        assert_eq!((t.sim.step, t.sim.horizon, t.sim.convergence_tol), (0.01, 30.0, 1e-4));
        assert!(s
            .with_overrides(&Overrides {
                step: Some(1.0),
                ..Default::default()
            })
            .is_err());
    }

    #[test]
    fn piecewise_history_loads() {
        let text = edit(|v| {
            v["sim"]["history"] =
                serde_json::json!({"kind": "piecewise-linear", "tables": {"l0": [[-2.0, 0.3], [0.0, 0.6]]}})
        });
        let s = Scenario::from_json_str(&text).unwrap();
        assert!(matches!(s.sim.history, InitialHistory::PiecewiseLinear(_)));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = ScenarioSpec::from_json_str(MINIMAL).unwrap();
        let again = ScenarioSpec::from_json_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }
}
