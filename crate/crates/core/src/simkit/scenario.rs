//! Scenario files.
//!
//! Scenarios are TOML. Top-level keys configure the run; `[[vehicles]]`
//! declares the fleet with behaviour phases; `[[alerts]]`, `[[updates]]` and
//! `[[revocations]]` schedule explicit events. Unset keys take the defaults
//! of [`Scenario::default`].
//!
//! ```toml
//! seed = 7
//! duration_hours = 100.0
//!
//! [[vehicles]]
//! name = "A"
//! position_km = 1.0
//! phases = [{ from_hour = 0.0, to_hour = 100.0, role = "honest", rate = 0.3 }]
//!
//! [[alerts]]
//! at_hour = 12.5
//! level = 1
//! position_km = 1.0
//! ```

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reputation::ReputationParams;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Initiates genuine alerts at `rate`, co-alerts emergencies it witnesses
    /// and discloses forged alerts it receives.
    Honest,
    /// Broadcasts forged alerts at `rate`; otherwise passive.
    Forger,
    /// Disputes genuine alerts it receives, `rate` times per hour.
    Slanderer,
    /// Beacons only.
    NonParticipant,
    /// Broadcasts with a self-made certificate at `rate`.
    Impostor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub from_hour: f64,
    pub to_hour: f64,
    pub role: Role,
    /// Actions per hour.
    #[serde(default)]
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub name: String,
    pub position_km: f64,
    /// Movement along the ring road; 0 keeps the vehicle parked.
    #[serde(default)]
    pub speed_kmh: f64,
    /// Scenario-level stand-in for identity document checks.
    #[serde(default = "yes")]
    pub valid_identity: bool,
    pub phases: Vec<Phase>,
}

fn yes() -> bool {
    true
}

/// A genuine emergency. Every honest vehicle within broadcast radius alerts,
/// nearest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledAlert {
    pub at_hour: f64,
    pub level: u8,
    pub position_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledUpdate {
    pub at_hour: f64,
    pub vehicle: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledRevocation {
    pub at_hour: f64,
    pub vehicle: String,
}

/// Extra traffic not simulated as vehicles, added to measured density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityPhase {
    pub from_hour: f64,
    pub to_hour: f64,
    pub per_km: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_hours: f64,
    pub block_interval_s: u32,
    pub difficulty: u32,
    pub alpha: f64,
    pub beta: f64,
    pub beacon_interval_s: u32,
    pub cert_validity_hours: f64,
    pub revocation_window_hours: f64,
    pub freshness_ms: u64,
    pub rsu_count: usize,
    pub road_km: f64,
    pub radius_km: f64,
    /// Probability that a single vehicle-to-vehicle delivery is lost.
    pub loss_probability: f64,
    /// Periodic pseudonym change for every vehicle; 0 disables it.
    pub update_every_hours: f64,
    /// Keys nobody holds that the LEA and CA revoke at the start, and again
    /// every half revocation window, so RevBC is never nearly empty.
    pub cover_revocations: usize,
    pub density: Vec<DensityPhase>,
    pub vehicles: Vec<VehicleSpec>,
    pub alerts: Vec<ScheduledAlert>,
    pub updates: Vec<ScheduledUpdate>,
    pub revocations: Vec<ScheduledRevocation>,
}

impl Default for Scenario {
    fn default() -> Self {
        let p = ReputationParams::default();
        Self {
            name: "scenario".into(),
            seed: 0,
            duration_hours: 1.0,
            block_interval_s: crate::ledger::DEFAULT_BLOCK_INTERVAL_S,
            difficulty: crate::ledger::DEFAULT_DIFFICULTY,
            alpha: p.alpha,
            beta: p.beta,
            beacon_interval_s: 300,
            cert_validity_hours: 720.0,
            revocation_window_hours: 720.0,
            freshness_ms: crate::protocol::DEFAULT_FRESHNESS_MS,
            rsu_count: 5,
            road_km: 10.0,
            radius_km: 1.0,
            loss_probability: 0.0,
            update_every_hours: 0.0,
            cover_revocations: 64,
            density: Vec::new(),
            vehicles: Vec::new(),
            alerts: Vec::new(),
            updates: Vec::new(),
            revocations: Vec::new(),
        }
    }
}

/// Simulated milliseconds for a fractional hour.
pub fn hours_to_ms(h: f64) -> u64 {
    (h * 3_600_000.0).round() as u64
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn params(&self) -> ReputationParams {
        ReputationParams { alpha: self.alpha, beta: self.beta }
    }

    pub fn duration_ms(&self) -> u64 {
        hours_to_ms(self.duration_hours)
    }

    pub fn vehicle_index(&self, name: &str) -> Option<usize> {
        self.vehicles.iter().position(|v| v.name == name)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let finite_pos = |x: f64| x.is_finite() && x >= 0.0;
        if !(self.duration_hours.is_finite() && self.duration_hours > 0.0) {
            return invalid("duration_hours must be positive");
        }
        if self.duration_ms() / 1000 > u32::MAX as u64 {
            return invalid("duration_hours exceeds the header timestamp range");
        }
        if self.block_interval_s == 0 || self.beacon_interval_s == 0 {
            return invalid("block_interval_s and beacon_interval_s must be positive");
        }
        if self.difficulty > 24 {
            return invalid("difficulty above 24 bits is impractical for simulation");
        }
        self.params().validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if !(self.cert_validity_hours > 0.0 && self.revocation_window_hours > 0.0) {
            return invalid("cert_validity_hours and revocation_window_hours must be positive");
        }
        if self.rsu_count == 0 {
            return invalid("rsu_count must be at least 1");
        }
        if !(self.road_km > 0.0 && self.road_km.is_finite() && self.radius_km > 0.0) {
            return invalid("road_km and radius_km must be positive");
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return invalid("loss_probability must be in [0, 1)");
        }
        if !finite_pos(self.update_every_hours) {
            return invalid("update_every_hours must be non-negative");
        }
        for d in &self.density {
            if !(finite_pos(d.per_km) && d.from_hour < d.to_hour) {
                return invalid("density phases need from_hour < to_hour and per_km >= 0");
            }
        }
        if self.vehicles.is_empty() {
            return invalid("at least one vehicle is required");
        }
        let mut names = HashSet::new();
        for v in &self.vehicles {
            if !names.insert(v.name.as_str()) {
                return invalid(format!("duplicate vehicle name {:?}", v.name));
            }
            if !(v.position_km.is_finite() && v.speed_kmh.is_finite()) {
                return invalid(format!("vehicle {}: position and speed must be finite", v.name));
            }
            let mut phases: Vec<&Phase> = v.phases.iter().collect();
            phases.sort_by(|a, b| a.from_hour.total_cmp(&b.from_hour));
            for (i, p) in phases.iter().enumerate() {
                if !(p.from_hour < p.to_hour && finite_pos(p.from_hour) && finite_pos(p.rate)) {
                    return invalid(format!("vehicle {}: bad phase {:?}", v.name, p));
                }
                if i > 0 && phases[i - 1].to_hour > p.from_hour {
                    return invalid(format!("vehicle {}: overlapping phases", v.name));
                }
            }
        }
        for a in &self.alerts {
            if !(1..=3).contains(&a.level) {
                return invalid(format!("alert at hour {}: level must be 1, 2 or 3", a.at_hour));
            }
            if !(finite_pos(a.at_hour) && a.position_km.is_finite()) {
                return invalid("alert times must be non-negative");
            }
        }
        for (what, name, at) in self
            .updates
            .iter()
            .map(|u| ("update", &u.vehicle, u.at_hour))
            .chain(self.revocations.iter().map(|r| ("revocation", &r.vehicle, r.at_hour)))
        {
            if self.vehicle_index(name).is_none() {
                return invalid(format!("{what} names unknown vehicle {name:?}"));
            }
            if !finite_pos(at) {
                return invalid(format!("{what} time must be non-negative"));
            }
        }
        Ok(())
    }
}

impl VehicleSpec {
    pub fn role_at(&self, hour: f64) -> Option<Role> {
        self.phases.iter().find(|p| p.from_hour <= hour && hour < p.to_hour).map(|p| p.role)
    }
}
