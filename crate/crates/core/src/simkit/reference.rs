//! Bundled scenarios.

use super::scenario::Scenario;

pub const REPUTATION_PHASES_TOML: &str = include_str!("../../scenarios/reputation_phases.toml");
pub const SECURITY_PROBES_TOML: &str = include_str!("../../scenarios/security_probes.toml");

/// Three vehicles over five 20-hour phases: A honest, B forging then
/// slandering, C silent.
pub fn reputation_phases() -> Scenario {
    Scenario::from_toml(REPUTATION_PHASES_TOML).expect("bundled scenario is valid")
}

/// Impostor, mid-run revocation, refused registration, mobility and loss.
pub fn security_probes() -> Scenario {
    Scenario::from_toml(SECURITY_PROBES_TOML).expect("bundled scenario is valid")
}
