mod common;

use std::collections::BTreeMap;

use common::{fixture, has_high, EXPLOITED, HARDENED};
use exploitlab_core::analyzer::{analyze, analyze_all, DetectorId, Finding, Severity};
use exploitlab_core::lang::{Contract, Expr, Location, Step, Stmt};
use exploitlab_core::scenarios::{fixture_names, run_scenario};
use exploitlab_core::UInt;

#[test]
fn exploited_fixtures_have_high_findings() {
    for (scenario, name, function, detector) in EXPLOITED {
        let report = run_scenario(scenario, &BTreeMap::new()).unwrap();
        assert!(report.exploit_succeeded, "{scenario}");
        assert!(has_high(&analyze(&fixture(name)), function, *detector), "{name}.{function} {detector}");
    }
}

#[test]
fn hardened_fixtures_lack_the_matching_finding() {
    for (scenario, name, function, detector) in HARDENED {
        let report = run_scenario(scenario, &BTreeMap::new()).unwrap();
        assert!(!report.exploit_succeeded, "{scenario}");
        let findings = analyze(&fixture(name));
        assert!(!has_high(&findings, function, *detector), "{name}.{function} {detector}");
    }
    // The pull-payment bank has no external call in withdraw at all.
    assert!(!analyze(&fixture("bank_withdrawal"))
        .iter()
        .any(|f| f.detector == DetectorId::CeiViolation));
}

#[test]
fn vulnerable_and_cei_banks_both_forward_all_gas() {
    for name in ["bank_vulnerable", "bank_cei"] {
        let findings = analyze(&fixture(name));
        assert!(findings
            .iter()
            .any(|f| f.detector == DetectorId::UnboundedGasCall && f.function.to_string() == "withdraw"));
    }
    assert!(!analyze(&fixture("bank_transfer"))
        .iter()
        .any(|f| f.detector == DetectorId::UnboundedGasCall));
}

#[test]
fn lock_fixture_gets_limitation_note() {
    let findings = analyze(&fixture("bank_lock"));
    let note = findings
        .iter()
        .find(|f| f.detector == DetectorId::MissingReentrancyGuard)
        .unwrap();
    assert_eq!(note.severity, Severity::Info);
    assert!(note.message.contains("`locked`"));
}

#[test]
fn every_location_resolves() {
    for name in fixture_names() {
        let c = fixture(name);
        for f in analyze(&c) {
            assert!(c.resolve(&f.function, &f.location).is_some(), "{name} {}", f.location);
            for e in &f.evidence {
                assert!(c.resolve(&f.function, &e.location).is_some(), "{name} {}", e.location);
            }
        }
    }
}

#[test]
fn analysis_is_deterministic() {
    let contracts: Vec<Contract> = fixture_names().map(fixture).collect();
    let a = serde_json::to_string(&analyze_all(&contracts)).unwrap();
    let b = serde_json::to_string(&analyze_all(contracts.iter().rev())).unwrap();
    assert_eq!(a, b);
}

fn body_mut<'a>(c: &'a mut Contract, function: &str) -> &'a mut Vec<Stmt> {
    match function {
        "fallback" => &mut c.fallback.as_mut().unwrap().body,
        name => &mut c.functions.iter_mut().find(|f| f.name == name).unwrap().body,
    }
}

fn stmt_mut<'a>(mut block: &'a mut Vec<Stmt>, loc: &Location) -> &'a mut Stmt {
    let mut steps = loc.0.iter().peekable();
    loop {
        let Some(Step::Index(i)) = steps.next() else { panic!("bad location {loc}") };
        let stmt = &mut block[*i];
        match (steps.next(), stmt) {
            (None, stmt) => return stmt,
            (Some(Step::Then), Stmt::If { then_branch, .. }) => block = then_branch,
            (Some(Step::Else), Stmt::If { else_branch, .. }) => block = else_branch,
            (Some(Step::Body), Stmt::ForEach { body, .. }) => block = body,
            _ => panic!("bad location {loc}"),
        }
    }
}

/// Evidence text changes with the cap, so compare what was found and where.
fn identity(f: &Finding) -> (DetectorId, String, Location, String) {
    (f.detector, f.function.to_string(), f.location.clone(), f.message.clone())
}

#[test]
fn capping_gas_removes_exactly_one_finding() {
    for name in fixture_names() {
        let c = fixture(name);
        let before = analyze(&c);
        let uncapped: Vec<&Finding> = before
            .iter()
            .filter(|f| f.detector == DetectorId::UnboundedGasCall)
            .filter(|f| matches!(c.resolve(&f.function, &f.location), Some(Stmt::Call { .. })))
            .collect();
        for target in uncapped {
            let mut capped = c.clone();
            let body = body_mut(&mut capped, &target.function.to_string());
            let Stmt::Call { gas, .. } = stmt_mut(body, &target.location) else { unreachable!() };
            *gas = Some(Expr::Uint(UInt::u256(50_000)));
            let after: Vec<_> = analyze(&capped).iter().map(identity).collect();
            let expected: Vec<_> = before.iter().filter(|f| *f != target).map(identity).collect();
            assert_eq!(after, expected, "{name} {}", target.location);
        }
    }
}
