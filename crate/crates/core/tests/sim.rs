use std::collections::BTreeMap;

use sdrkms_core::lifecycle::{KeyKind, KeyState};
use sdrkms_core::sim::{
    contains_bytes, parse_record, query_log, resolve_seed, run_scenario, validate_config,
    LogFilter, ScenarioConfig, SimOutcome,
};

fn scenario(name: &str) -> ScenarioConfig {
    let path = format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    validate_config(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run(cfg: &ScenarioConfig) -> SimOutcome {
    run_scenario(cfg, cfg.seed.unwrap_or(0)).unwrap()
}

fn events<'a>(out: &'a SimOutcome, node: &str, event: &str) -> Vec<&'a str> {
    out.log
        .iter()
        .filter(|l| parse_record(l).is_some_and(|r| r.node == node && r.event == event))
        .map(String::as_str)
        .collect()
}

fn msg_id(detail: &str) -> Option<u64> {
    detail.strip_prefix('#')?.split(' ').next()?.parse().ok()
}

#[test]
fn netjoin_leaves_joiners_with_the_net_key_and_no_session_keys() {
    let out = run(&scenario("netjoin.scn"));
    for joiner in ["d2", "d3"] {
        assert_eq!(events(&out, joiner, "JOIN_COMPLETE").len(), 1);
        let d = &out.devices[joiner];
        let net = d.key("x", "net-a/k1").expect("net key");
        assert_eq!(net.state(), KeyState::Active);
        assert!(d
            .keys("y")
            .filter(|r| r.kind == KeyKind::Session)
            .all(|r| r.state() == KeyState::Destroyed));
        assert!(!d.y_busy());
    }
    assert!(!out.session_keys.is_empty());
    for d in out.devices.values() {
        let snap = d.snapshot();
        for k in &out.session_keys {
            assert!(
                !contains_bytes(&snap, k),
                "{} still holds a session key",
                d.device_id
            );
        }
    }
    assert!(out
        .log
        .iter()
        .any(|l| l.ends_with("TRAFFIC|net=net-a ok=d2,d3 stale=")));
}

#[test]
fn runs_are_deterministic_per_seed() {
    let cfg = scenario("netjoin.scn");
    let a = run_scenario(&cfg, 7).unwrap();
    let b = run_scenario(&cfg, 7).unwrap();
    assert_eq!(a.log_text(), b.log_text());
    let c = run_scenario(&cfg, 8).unwrap();
    assert_ne!(a.log_text(), c.log_text());
}

#[test]
fn seed_precedence() {
    let mut cfg = scenario("netjoin.scn");
    assert_eq!(resolve_seed(Some(1), &cfg, Some("3")), 1);
    assert_eq!(resolve_seed(None, &cfg, Some("3")), 42);
    cfg.seed = None;
    assert_eq!(resolve_seed(None, &cfg, Some("3")), 3);
    assert_eq!(resolve_seed(None, &cfg, Some("junk")), 0);
    assert_eq!(resolve_seed(None, &cfg, None), 0);
}

#[test]
fn dead_join_channel_exhausts_retries() {
    let text = std::fs::read_to_string(format!(
        "{}/scenarios/netjoin.scn",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
    .replace("y = loss=0 latency=2", "y = loss=1.0 latency=2");
    let cfg = validate_config(&text).unwrap();
    let out = run(&cfg);
    for joiner in ["d2", "d3"] {
        assert!(events(&out, joiner, "JOIN_COMPLETE").is_empty());
        assert_eq!(
            events(&out, joiner, "JOIN_RETRY").len(),
            cfg.max_retries as usize
        );
        assert_eq!(events(&out, joiner, "JOIN_FAILED").len(), 1);
        assert!(out.devices[joiner].key("x", "net-a/k1").is_none());
        assert!(!out.devices[joiner].y_busy());
    }
    assert!(out.log.iter().any(|l| l.contains("|LOST|")));
}

#[test]
fn every_message_is_accounted_for_once() {
    let mut text = std::fs::read_to_string(format!(
        "{}/scenarios/lifecycle.scn",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap();
    text = text.replace(
        "[timeline]",
        "[channels]\nx = loss=0.3 latency=1\nWIRED = loss=0.1 latency=1\n\n[timeline]",
    );
    for cfg in [
        scenario("netjoin.scn"),
        scenario("lifecycle.scn"),
        validate_config(&text).unwrap(),
    ] {
        let out = run(&cfg);
        let mut sent = Vec::new();
        let mut fate: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
        for l in &out.log {
            let r = parse_record(l).unwrap();
            let Some(id) = msg_id(r.detail) else { continue };
            match r.event {
                "SEND" => sent.push(id),
                "DELIVER" | "LOST" | "QUARANTINE" => fate.entry(id).or_default().push(r.event),
                _ => {}
            }
        }
        assert_eq!(sent.len(), out.wire.len());
        for id in &sent {
            assert_eq!(
                fate.get(id).map(Vec::len),
                Some(1),
                "message #{id} in {}",
                cfg.name
            );
        }
        assert_eq!(fate.len(), sent.len());
    }
}

#[test]
fn no_red_key_on_the_wire() {
    for name in ["netjoin.scn", "lifecycle.scn"] {
        let out = run(&scenario(name));
        assert!(!out.red_keys.is_empty());
        for m in &out.wire {
            for k in out.red_keys.iter().chain(&out.session_keys) {
                assert!(
                    !contains_bytes(m.body(), k),
                    "{name}: {} leaks a key",
                    m.msg_type()
                );
            }
        }
    }
}

#[test]
fn rnms_never_decrypts() {
    for name in ["netjoin.scn", "lifecycle.scn"] {
        let out = run(&scenario(name));
        for (id, rnms) in &out.rnms {
            assert!(events(&out, id, "DECRYPT").is_empty());
            let snap = rnms.snapshot();
            for k in out.red_keys.iter().chain(&out.session_keys) {
                assert!(!contains_bytes(&snap, k));
            }
        }
        let routed: usize = out.rnms.values().map(|r| r.stored_containers()).sum();
        assert!(routed > 0, "{name} routes through an RNMS");
    }
}

#[test]
fn lifecycle_rollover_and_suite_change() {
    let out = run(&scenario("lifecycle.scn"));
    for d in ["lead", "d2", "d3"] {
        assert!(out.log.contains(&format!("10|{d}|KEY_DESTROYED|net-a/k1")));
        assert!(out.log.contains(&format!("10|{d}|KEY_PROMOTED|net-a/k2")));
        assert_eq!(
            out.devices[d].key("x", "net-a/k1").unwrap().state(),
            KeyState::Destroyed
        );
        assert_eq!(
            out.devices[d].key("x", "net-a/k3").unwrap().state(),
            KeyState::Standby
        );
    }
    assert!(out
        .log
        .contains(&"10|lead|TRAFFIC|net=net-a ok=d2,d3 stale=".to_string()));
    assert_eq!(events(&out, "b1", "UNRECOVERABLE").len(), 1);
    assert!(out
        .log
        .contains(&"55|b1|TRAFFIC|net=net-b ok=b2 stale=".to_string()));

    // The suite is staged on delivery and goes live with the next key load.
    assert!(out.log.contains(&"32|b1|SUITE_STAGED|suite=2".to_string()));
    assert!(out.log.contains(&"50|b1|SUITE_ACTIVE|suite=2".to_string()));
    assert_eq!(out.devices["b1"].registry.active_id().0, 2);
    // Containers sealed under the first suite still open afterwards.
    assert_eq!(events(&out, "lead", "DECRYPT").len(), 4);

    let relays = events(&out, "k0", "RELAY").len() + events(&out, "k1", "RELAY").len();
    assert_eq!(relays, 8);
}

#[test]
fn log_query_selects_records() {
    let out = run(&scenario("netjoin.scn"));
    let text = out.log_text();
    let f = LogFilter {
        node: Some("d2".into()),
        event: Some("JOIN_COMPLETE".into()),
        ..Default::default()
    };
    assert_eq!(query_log(&text, &f).len(), 1);
    let f = LogFilter {
        from: Some(40),
        to: Some(40),
        ..Default::default()
    };
    assert!(query_log(&text, &f).iter().all(|l| l.starts_with("40|")));
}

#[test]
fn invalid_scenario_reports_all_errors() {
    let errs = validate_config("[nodes]\nrsms = RSMS\nd1 = DEVICE\n[kdms]\nk9 = d1\n[timeline]\nevent = 5 SYNC a=d1 b=d1\nevent = 2 PACKAGE_UPDATE to=d1\n")
        .unwrap_err();
    assert!(errs.len() >= 3, "{errs:?}");
    assert!(errs.windows(2).all(|w| w[0].line <= w[1].line));
    assert!(errs.iter().any(|e| e.message.contains("k9")));
}
