//! JSON run configuration.
//!
//! A config names the experiment, the scenario and optional per-experiment
//! knobs. Missing knobs take the defaults of [`ExperimentConfig::resolved`],
//! which is also what `run.json` records.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::alloc::{AssignPolicy, GeometrySearch};
use crate::lwa::{self, FrequencyGrid, WaveguideGeometry};
use crate::music::PilotScheme;
use crate::scene::{place_users, Scenario, User};

use super::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Beampattern,
    Sumrate,
    Music,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 3] = [Self::Beampattern, Self::Sumrate, Self::Music];

    pub fn name(self) -> &'static str {
        match self {
            Self::Beampattern => "beampattern",
            Self::Sumrate => "sumrate",
            Self::Music => "music",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub output_dir: PathBuf,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_bins: usize,
    pub geometry: GeometryConfig,
    pub users: UsersConfig,
    pub snr_db: f64,
    pub seed: u64,
    pub m_antennas: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub plate_sep_m: f64,
    pub slit_len_m: f64,
    /// Defaults to 90% leakage over the slit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leak_alpha_np_per_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum UsersConfig {
    /// Angles and distances drawn uniformly from the scenario seed.
    Random {
        count: usize,
        angle_range_deg: [f64; 2],
        dist_range_m: [f64; 2],
    },
    Fixed(Vec<FixedUser>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedUser {
    pub angle_deg: f64,
    pub dist_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleGridConfig {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl AngleGridConfig {
    pub fn angles(&self) -> crate::Result<Vec<f64>> {
        lwa::angle_grid(self.start_deg, self.stop_deg, self.step_deg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySearchConfig {
    pub plate_sep_m: Vec<f64>,
    pub slit_len_m: Vec<f64>,
}

impl From<&GeometrySearchConfig> for GeometrySearch {
    fn from(c: &GeometrySearchConfig) -> Self {
        GeometrySearch {
            plate_sep: c.plate_sep_m.clone(),
            slit_len: c.slit_len_m.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    MaxGain,
    Fair,
}

impl From<Policy> for AssignPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::MaxGain => AssignPolicy::MaxGain,
            Policy::Fair => AssignPolicy::Fair,
        }
    }
}

/// Which zero-forcing variant backs the `digital_zf` curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZfMode {
    /// Per-bin greedy user selection with joint power allocation.
    Scheduled,
    /// All users on every bin, equal per-bin budget.
    AllUsers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Sample covariance over `snapshots` columns.
    Snapshots,
    /// One snapshot, covariance averaged over sliding subbands.
    Smoothed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pilots {
    RandomQpsk,
    Orthogonal,
}

impl From<Pilots> for PilotScheme {
    fn from(p: Pilots) -> Self {
        match p {
            Pilots::RandomQpsk => PilotScheme::RandomQpsk,
            Pilots::Orthogonal => PilotScheme::Orthogonal,
        }
    }
}

/// Optional knobs. Each experiment reads only the ones it understands.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_grid: Option<AngleGridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune_geometry: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry_search: Option<GeometrySearchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Policy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_sweep_db: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zf_mode: Option<ZfMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_sources: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noiseless: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilots: Option<Pilots>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subband_len: Option<usize>,
}

/// Geometry search grid used when tuning is on and none is given.
pub fn default_geometry_search() -> GeometrySearchConfig {
    GeometrySearchConfig {
        plate_sep_m: vec![0.76e-3, 0.80e-3, 0.85e-3, 0.90e-3, 1.00e-3],
        slit_len_m: vec![10e-3, 20e-3, 30e-3, 40e-3, 50e-3],
    }
}

fn default_scenario(n_bins: usize, users: UsersConfig, snr_db: f64) -> ScenarioConfig {
    ScenarioConfig {
        f_min_hz: 200e9,
        f_max_hz: 800e9,
        n_bins,
        geometry: GeometryConfig {
            plate_sep_m: 0.8e-3,
            slit_len_m: 20e-3,
            leak_alpha_np_per_m: None,
        },
        users,
        snr_db,
        seed: 42,
        m_antennas: 32,
    }
}

fn random_users(count: usize) -> UsersConfig {
    UsersConfig::Random {
        count,
        angle_range_deg: [10.0, 80.0],
        dist_range_m: [1.0, 5.0],
    }
}

impl ExperimentConfig {
    /// Starting config of each experiment, all knobs spelled out.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let scenario = match kind {
            ExperimentKind::Beampattern => default_scenario(512, random_users(8), 10.0),
            ExperimentKind::Sumrate => default_scenario(512, random_users(32), 10.0),
            ExperimentKind::Music => default_scenario(
                128,
                UsersConfig::Fixed(vec![
                    FixedUser {
                        angle_deg: 30.0,
                        dist_m: 2.0,
                    },
                    FixedUser {
                        angle_deg: 50.0,
                        dist_m: 3.0,
                    },
                ]),
                0.0,
            ),
        };
        Self {
            experiment: kind,
            output_dir: PathBuf::from(format!("out/{kind}")),
            scenario,
            overrides: Overrides::default(),
        }
        .resolved()
    }

    /// The config with every knob its experiment reads filled in.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let o = &mut out.overrides;
        match self.experiment {
            ExperimentKind::Beampattern => {
                o.angle_grid.get_or_insert(AngleGridConfig {
                    start_deg: 0.5,
                    stop_deg: 89.5,
                    step_deg: 0.25,
                });
                o.tune_geometry.get_or_insert(true);
                o.geometry_search.get_or_insert_with(default_geometry_search);
                o.policy.get_or_insert(Policy::MaxGain);
            }
            ExperimentKind::Sumrate => {
                o.snr_sweep_db
                    .get_or_insert_with(|| (0..9).map(|i| -10.0 + 5.0 * i as f64).collect());
                o.draws.get_or_insert(20);
                o.tune_geometry.get_or_insert(true);
                o.geometry_search.get_or_insert_with(default_geometry_search);
                o.policy.get_or_insert(Policy::MaxGain);
                o.zf_mode.get_or_insert(ZfMode::Scheduled);
            }
            ExperimentKind::Music => {
                o.angle_grid.get_or_insert(AngleGridConfig {
                    start_deg: 0.5,
                    stop_deg: 89.5,
                    step_deg: 0.05,
                });
                o.snapshots.get_or_insert(64);
                let k = self.scenario.users.count();
                o.k_sources.get_or_insert(k);
                o.noiseless.get_or_insert(false);
                o.pilots.get_or_insert(Pilots::RandomQpsk);
                let estimator = *o.estimator.get_or_insert(Estimator::Snapshots);
                if estimator == Estimator::Smoothed {
                    o.subband_len.get_or_insert(self.scenario.n_bins / 2);
                }
            }
        }
        out
    }

    /// Parses a JSON document, rejecting unknown keys and wrong types.
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let value: Value = serde_json::from_str(text).map_err(|e| RunError::config("parse_error", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, RunError> {
        serde_json::from_value(value).map_err(classify_serde_error)
    }

    /// Semantic checks that the schema cannot express. Runs before any
    /// computation.
    pub fn validate(&self) -> Result<(), RunError> {
        let sc = &self.scenario;
        if !(sc.f_min_hz > 0.0 && sc.f_min_hz < sc.f_max_hz) {
            return Err(RunError::config(
                "band_order",
                format!("need 0 < f_min_hz < f_max_hz, got {} and {}", sc.f_min_hz, sc.f_max_hz),
            ));
        }
        if sc.n_bins == 0 {
            return Err(RunError::config("zero_bins", "n_bins must be at least 1"));
        }
        if sc.m_antennas == 0 {
            return Err(RunError::config("zero_antennas", "m_antennas must be at least 1"));
        }
        let g = sc.geometry;
        if !(g.plate_sep_m > 0.0 && g.slit_len_m > 0.0) || g.leak_alpha_np_per_m.is_some_and(|a| !(a > 0.0)) {
            return Err(RunError::config(
                "bad_geometry",
                "plate_sep_m, slit_len_m and leak_alpha_np_per_m must be positive",
            ));
        }
        if lwa::cutoff_frequency(&self.geometry().map_err(|e| RunError::config("bad_geometry", e.to_string()))?)
            >= sc.f_min_hz
        {
            return Err(RunError::config(
                "cutoff_in_band",
                format!("plate separation {} m puts the cutoff at or above f_min_hz", g.plate_sep_m),
            ));
        }
        match &sc.users {
            UsersConfig::Random {
                count,
                angle_range_deg: [lo, hi],
                dist_range_m: [dlo, dhi],
            } => {
                if *count == 0 {
                    return Err(RunError::config("no_users", "user count must be at least 1"));
                }
                if !(*lo > 0.0 && lo < hi && *hi < 90.0) {
                    return Err(RunError::config(
                        "user_angle",
                        format!("angle_range_deg must satisfy 0 < lo < hi < 90, got [{lo}, {hi}]"),
                    ));
                }
                if !(*dlo > 0.0 && dlo <= dhi) {
                    return Err(RunError::config(
                        "user_distance",
                        format!("dist_range_m must satisfy 0 < lo <= hi, got [{dlo}, {dhi}]"),
                    ));
                }
            }
            UsersConfig::Fixed(users) => {
                if users.is_empty() {
                    return Err(RunError::config("no_users", "user list is empty"));
                }
                for (i, u) in users.iter().enumerate() {
                    if !(u.angle_deg > 0.0 && u.angle_deg < 90.0) {
                        return Err(RunError::config(
                            "user_angle",
                            format!("user {i}: angle_deg {} outside (0, 90)", u.angle_deg),
                        ));
                    }
                    if !(u.dist_m > 0.0) {
                        return Err(RunError::config(
                            "user_distance",
                            format!("user {i}: dist_m {} must be positive", u.dist_m),
                        ));
                    }
                    if users[..i].iter().any(|v| v.angle_deg == u.angle_deg) {
                        return Err(RunError::config(
                            "duplicate_angle",
                            format!("user {i}: angle_deg {} repeats", u.angle_deg),
                        ));
                    }
                }
            }
        }
        self.validate_overrides()
    }

    fn validate_overrides(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::config("bad_override", msg));
        let o = &self.overrides;
        if let Some(grid) = &o.angle_grid {
            match grid.angles() {
                Ok(a) if a.iter().all(|&x| x > 0.0 && x < 90.0) => {}
                _ => return bad(format!("angle_grid must be a non-empty grid inside (0, 90), got {grid:?}")),
            }
        }
        if let Some(search) = &o.geometry_search {
            if search.plate_sep_m.is_empty() || search.slit_len_m.is_empty() {
                return bad("geometry_search grids must be non-empty".into());
            }
            if search.plate_sep_m.iter().chain(&search.slit_len_m).any(|v| !(*v > 0.0)) {
                return bad("geometry_search values must be positive".into());
            }
        }
        if o.snr_sweep_db.as_ref().is_some_and(|s| s.is_empty()) {
            return bad("snr_sweep_db must not be empty".into());
        }
        if o.draws == Some(0) {
            return bad("draws must be at least 1".into());
        }
        if o.snapshots == Some(0) {
            return bad("snapshots must be at least 1".into());
        }
        let n = self.scenario.n_bins;
        if let Some(len) = o.subband_len {
            if !(2..=n).contains(&len) {
                return bad(format!("subband_len must be in [2, {n}], got {len}"));
            }
        }
        if let Some(k) = o.k_sources {
            let dim = match o.estimator {
                Some(Estimator::Smoothed) => o.subband_len.unwrap_or(n / 2),
                _ => n,
            };
            if !(k >= 1 && k < dim) {
                return bad(format!("k_sources must be in [1, {dim}), got {k}"));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> crate::Result<WaveguideGeometry> {
        let g = self.scenario.geometry;
        match g.leak_alpha_np_per_m {
            Some(alpha) => WaveguideGeometry::new(g.plate_sep_m, g.slit_len_m, alpha),
            None => WaveguideGeometry::with_default_leakage(g.plate_sep_m, g.slit_len_m),
        }
    }

    pub fn frequency_grid(&self) -> crate::Result<FrequencyGrid> {
        FrequencyGrid::new(self.scenario.f_min_hz, self.scenario.f_max_hz, self.scenario.n_bins)
    }

    /// Users of scenario draw `draw`; fixed users ignore the draw index.
    pub fn users(&self, draw: u64) -> crate::Result<Vec<User>> {
        match &self.scenario.users {
            UsersConfig::Random {
                count,
                angle_range_deg,
                dist_range_m,
            } => place_users(
                self.scenario.seed,
                *count,
                (angle_range_deg[0], angle_range_deg[1]),
                (dist_range_m[0], dist_range_m[1]),
                draw,
            ),
            UsersConfig::Fixed(list) => list
                .iter()
                .enumerate()
                .map(|(i, u)| User::new(i, u.angle_deg, u.dist_m))
                .collect(),
        }
    }

    pub fn scenario(&self, draw: u64) -> crate::Result<Scenario> {
        let sc = &self.scenario;
        Scenario::new(
            self.frequency_grid()?,
            self.geometry()?,
            self.users(draw)?,
            sc.snr_db,
            sc.seed,
            sc.m_antennas,
        )
    }
}

impl UsersConfig {
    pub fn count(&self) -> usize {
        match self {
            Self::Random { count, .. } => *count,
            Self::Fixed(list) => list.len(),
        }
    }
}

fn classify_serde_error(e: serde_json::Error) -> RunError {
    let msg = e.to_string();
    let code = if msg.starts_with("missing field") {
        "missing_field"
    } else if msg.starts_with("unknown field") {
        "unknown_key"
    } else if msg.starts_with("unknown variant") {
        "unknown_variant"
    } else if msg.starts_with("invalid type") || msg.starts_with("invalid value") || msg.starts_with("invalid length") {
        "wrong_type"
    } else {
        "schema_error"
    };
    RunError::config(code, msg)
}

/// Applies `key=value` overrides to dotted paths of a JSON document.
/// `value` is parsed as JSON when possible and taken as a string otherwise.
pub fn apply_set(doc: &mut Value, assignment: &str) -> Result<(), RunError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::config("bad_set", format!("expected key=value, got {assignment:?}")))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(RunError::config("bad_set", format!("malformed key {path:?}")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| RunError::config("bad_set", format!("{path:?}: {part:?} is not inside an object")))?;
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one segment")
}
