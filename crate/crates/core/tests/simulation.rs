use bars_core::simkit::reference::{reputation_phases, security_probes};
use bars_core::simkit::scenario::{Phase, VehicleSpec};
use bars_core::simkit::{run_scenario, write_run, Event, Role, Scenario, ScenarioError, ScorePoint};

const HOUR_MS: u64 = 3_600_000;

fn scores_between(series: &[&ScorePoint], from_h: u64, to_h: u64) -> Vec<f64> {
    series.iter().filter(|p| p.time_ms >= from_h * HOUR_MS && p.time_ms < to_h * HOUR_MS).map(|p| p.score).collect()
}

fn has_strict_drop(before: f64, window: &[f64]) -> bool {
    let mut prev = before;
    window.iter().any(|&s| {
        let drop = s < prev;
        prev = s;
        drop
    })
}

fn score_before(series: &[&ScorePoint], h: u64) -> f64 {
    series.iter().rfind(|p| p.time_ms < h * HOUR_MS).map_or(50.0, |p| p.score)
}

#[test]
fn reputation_phases_shape() {
    let out = run_scenario(&reputation_phases()).unwrap();
    assert!(out.all_probes_pass(), "{:#?}", out.probes);

    let a = out.series("A");
    assert!(a.windows(2).all(|w| w[1].score >= w[0].score), "A must never lose score");
    assert!(a.last().unwrap().score > 50.0);

    let b = out.series("B");
    assert!(has_strict_drop(score_before(&b, 20), &scores_between(&b, 20, 60)), "B drops while forging");
    assert!(has_strict_drop(score_before(&b, 60), &scores_between(&b, 60, 100)), "B drops while slandering");

    let c = out.series("C");
    assert!(c.iter().all(|p| p.score == 50.0), "silent C keeps its initial score");

    assert!(out.scores.iter().all(|p| (0.0..=100.0).contains(&p.score)));
    assert!(out.stats.judgments > 10 && out.stats.key_updates > 0);
}

#[test]
fn honest_only_scores_never_fall() {
    let mut sc = Scenario { name: "honest".into(), seed: 5, duration_hours: 12.0, ..Default::default() };
    sc.vehicles = (0..4)
        .map(|k| VehicleSpec {
            name: format!("h{k}"),
            position_km: 1.0 + 0.1 * k as f64,
            speed_kmh: 0.0,
            valid_identity: true,
            phases: vec![Phase { from_hour: 0.0, to_hour: 12.0, role: Role::Honest, rate: 0.5 }],
        })
        .collect();
    let out = run_scenario(&sc).unwrap();
    assert!(out.all_probes_pass(), "{:#?}", out.probes);
    for v in ["h0", "h1", "h2", "h3"] {
        let s = out.series(v);
        assert!(s.windows(2).all(|w| w[1].score >= w[0].score), "{v}");
    }
}

#[test]
fn idle_vehicles_keep_initial_scores() {
    let mut sc = Scenario { name: "idle".into(), duration_hours: 3.0, ..Default::default() };
    sc.vehicles = vec![VehicleSpec {
        name: "only".into(),
        position_km: 0.0,
        speed_kmh: 0.0,
        valid_identity: true,
        phases: vec![],
    }];
    let out = run_scenario(&sc).unwrap();
    assert_eq!(out.stats.judgments, 0);
    assert!(out.series("only").iter().all(|p| p.score == 50.0));
}

#[test]
fn runs_are_reproducible() {
    let sc = security_probes();
    let a = run_scenario(&sc).unwrap();
    let b = run_scenario(&sc).unwrap();
    assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
    assert_eq!(a.scores_csv(), b.scores_csv());
    assert_eq!(a.chain_files(), b.chain_files());

    let other = run_scenario(&Scenario { seed: sc.seed + 1, ..sc }).unwrap();
    assert_ne!(a.log.to_jsonl(), other.log.to_jsonl());
}

#[test]
fn malformed_scenarios_fail_early() {
    assert!(matches!(Scenario::from_toml("name = \"x\"\nbogus = 1\n"), Err(ScenarioError::Parse(_))));
    assert!(matches!(Scenario::from_toml("duration_hours = \"ten\"\n"), Err(ScenarioError::Parse(_))));

    let base = reputation_phases();
    let no_vehicles = Scenario { vehicles: vec![], ..base.clone() };
    assert!(run_scenario(&no_vehicles).is_err());

    let mut overlapping = base.clone();
    overlapping.vehicles[1].phases[1].from_hour = 10.0;
    assert!(matches!(overlapping.validate(), Err(ScenarioError::Invalid(m)) if m.contains("overlapping")));

    let mut bad_alpha = base.clone();
    bad_alpha.alpha = -0.05;
    assert!(bad_alpha.validate().is_err());

    let mut lossy = base;
    lossy.loss_probability = 1.0;
    assert!(lossy.validate().is_err());
}

#[test]
fn security_scenario_probes() {
    let out = run_scenario(&security_probes()).unwrap();
    for p in &out.probes {
        assert!(p.passed, "{}: {}", p.name, p.detail);
    }
    assert_eq!(out.stats.revocations, 1);
    assert!(out.stats.rejected.values().sum::<usize>() > 0, "impostor traffic must be rejected");
    assert!(out.log.entries.iter().any(|e| matches!(e.event, Event::RegistrationRefused { .. })));
    assert!(out.log.is_chronological());
}

#[test]
fn run_directory_matches_manifest() {
    let sc = security_probes();
    let out = run_scenario(&sc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_run(&out, &sc, dir.path()).unwrap();
    for name in ["events.jsonl", "scores.csv", "scenario.toml", "scores.svg", "cerbc.chain", "manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    for (name, digest) in &manifest.files {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert_eq!(&bars_core::sigcrypt::hash(&bytes).to_hex(), digest, "{name}");
    }
    let copy = Scenario::from_toml(&std::fs::read_to_string(dir.path().join("scenario.toml")).unwrap()).unwrap();
    assert_eq!(copy, sc);
}

