//! Static detectors over the contract IR.
//!
//! Statement order is the pre-order of the entry point body. Two statements
//! in opposite branches of the same `if` never follow each other; two
//! statements in the same loop body follow each other in both directions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::lang::{statement_head, stmt_exprs, walk_stmts, Contract, EntryPoint, Expr, LValue, Location, StorageKind, Stmt, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    High,
    Medium,
    Info,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::High => "high",
            Severity::Medium => "medium",
            Severity::Info => "info",
        }
    }

    /// True when `self` is at least as severe as `threshold`.
    pub fn at_least(self, threshold: Severity) -> bool {
        self <= threshold
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DetectorId {
    CeiViolation,
    UncheckedArith,
    UnboundedGasCall,
    UncheckedCallResult,
    MissingReentrancyGuard,
}

impl DetectorId {
    pub const ALL: [DetectorId; 5] = [
        DetectorId::CeiViolation,
        DetectorId::UncheckedArith,
        DetectorId::UnboundedGasCall,
        DetectorId::UncheckedCallResult,
        DetectorId::MissingReentrancyGuard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::CeiViolation => "CEI_VIOLATION",
            DetectorId::UncheckedArith => "UNCHECKED_ARITH",
            DetectorId::UnboundedGasCall => "UNBOUNDED_GAS_CALL",
            DetectorId::UncheckedCallResult => "UNCHECKED_CALL_RESULT",
            DetectorId::MissingReentrancyGuard => "MISSING_REENTRANCY_GUARD",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            DetectorId::CeiViolation | DetectorId::UncheckedArith => Severity::High,
            DetectorId::UnboundedGasCall | DetectorId::UncheckedCallResult => Severity::Medium,
            DetectorId::MissingReentrancyGuard => Severity::Info,
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub location: Location,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub detector: DetectorId,
    pub severity: Severity,
    pub contract: String,
    pub function: EntryPoint,
    pub location: Location,
    pub message: String,
    pub evidence: Vec<Evidence>,
}

impl Finding {
    fn sort_key(&self) -> (Severity, &str, &EntryPoint, &Location, DetectorId) {
        (self.severity, &self.contract, &self.function, &self.location, self.detector)
    }
}

/// Runs every detector over every entry point of `c`.
pub fn analyze(c: &Contract) -> Vec<Finding> {
    let mut out = Vec::new();
    for (entry, body) in c.entry_points() {
        let f = Flat::new(body);
        let mut push = |detector: DetectorId, at: usize, message: String, evidence: Vec<usize>| {
            out.push(Finding {
                detector,
                severity: detector.severity(),
                contract: c.name.clone(),
                function: entry.clone(),
                location: f.nodes[at].loc.clone(),
                message,
                evidence: evidence.into_iter().map(|i| f.evidence(i)).collect(),
            });
        };
        let guard = guard_var(c, body, &f);
        cei(&f, guard, &mut push);
        unchecked_arith(&f, &mut push);
        unbounded_gas(&f, &mut push);
        unchecked_result(&f, &mut push);
        if guard.is_none() {
            missing_guard(c, &f, &mut push);
        }
    }
    sort_findings(&mut out);
    out
}

/// Analyzes several contracts and merges their findings in canonical order.
pub fn analyze_all<'a>(contracts: impl IntoIterator<Item = &'a Contract>) -> Vec<Finding> {
    let mut out: Vec<Finding> = contracts.into_iter().flat_map(analyze).collect();
    sort_findings(&mut out);
    out
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

struct Node<'a> {
    loc: Location,
    stmt: &'a Stmt,
}

/// Pre-order statement list of one entry point body.
struct Flat<'a> {
    nodes: Vec<Node<'a>>,
    lets: BTreeMap<&'a str, &'a Expr>,
}

impl<'a> Flat<'a> {
    fn new(body: &'a [Stmt]) -> Self {
        let mut nodes = Vec::new();
        let mut lets = BTreeMap::new();
        walk_stmts(body, &mut |loc, stmt| {
            if let Stmt::Let { name, value } = stmt {
                lets.insert(name.as_str(), value);
            }
            nodes.push(Node { loc: loc.clone(), stmt });
        });
        Flat { nodes, lets }
    }

    fn evidence(&self, i: usize) -> Evidence {
        Evidence {
            location: self.nodes[i].loc.clone(),
            statement: statement_head(self.nodes[i].stmt),
        }
    }

    /// Whether statement `b` can run after statement `a` in one invocation.
    fn may_follow(&self, a: usize, b: usize) -> bool {
        let (la, lb) = (&self.nodes[a].loc.0, &self.nodes[b].loc.0);
        let common = la.iter().zip(lb).take_while(|(x, y)| x == y).count();
        if let (Some(x), Some(y)) = (la.get(common), lb.get(common)) {
            if matches!((x, y), (Step::Then, Step::Else) | (Step::Else, Step::Then)) {
                return false;
            }
        }
        b > a || la[..common].contains(&Step::Body)
    }

    /// Storage variables read by `e`, looking through one `let`.
    fn storage_reads(&self, e: &'a Expr) -> BTreeSet<&'a str> {
        let mut out = BTreeSet::new();
        e.visit(&mut |x| match x {
            Expr::Storage(n) | Expr::MapRead { map: n, .. } => {
                out.insert(n.as_str());
            }
            Expr::Local(n) => {
                if let Some(v) = self.lets.get(n.as_str()) {
                    v.visit(&mut |y| {
                        if let Expr::Storage(m) | Expr::MapRead { map: m, .. } = y {
                            out.insert(m.as_str());
                        }
                    });
                }
            }
            _ => {}
        });
        out
    }
}

/// External statement whose value is not the literal zero.
fn sends_value(s: &Stmt) -> bool {
    s.sent_value().is_some_and(|v| !v.is_zero_literal())
}

fn written_var(s: &Stmt) -> Option<&str> {
    match s {
        Stmt::Assign { target: LValue::Storage(n), .. } | Stmt::Assign { target: LValue::MapEntry { map: n, .. }, .. } => {
            Some(n)
        }
        _ => None,
    }
}

type Push<'p> = dyn FnMut(DetectorId, usize, String, Vec<usize>) + 'p;

/// `guard` is the lock variable of a recognised guard; clearing it after the
/// call is the point of the pattern.
fn cei(f: &Flat, guard: Option<&str>, push: &mut Push) {
    for (ci, call) in f.nodes.iter().enumerate() {
        if !sends_value(call.stmt) {
            continue;
        }
        let guarded: BTreeMap<&str, usize> = f
            .nodes
            .iter()
            .enumerate()
            .filter(|(ri, n)| *ri < ci && matches!(n.stmt, Stmt::Require(_)) && f.may_follow(*ri, ci))
            .flat_map(|(ri, n)| {
                let Stmt::Require(cond) = n.stmt else { unreachable!() };
                f.storage_reads(cond).into_iter().map(move |v| (v, ri))
            })
            .filter(|(v, _)| Some(*v) != guard)
            .collect();
        let write = f.nodes.iter().enumerate().find(|(wi, n)| {
            *wi != ci && f.may_follow(ci, *wi) && written_var(n.stmt).is_some_and(|v| guarded.contains_key(v))
        });
        if let Some((wi, w)) = write {
            let var = written_var(w.stmt).unwrap();
            push(
                DetectorId::CeiViolation,
                ci,
                format!(
                    "ether leaves at {} before `{var}` is updated at {}; `{var}` is checked by a require before the call",
                    call.loc, w.loc
                ),
                vec![guarded[var], ci, wi],
            );
        }
    }
}

fn influenced(f: &Flat, e: &Expr) -> bool {
    let direct = |x: &Expr| matches!(x, Expr::Param(_) | Expr::ListLen(_) | Expr::Storage(_) | Expr::MapRead { .. });
    let mut hit = false;
    e.visit(&mut |x| {
        hit |= direct(x);
        if let Expr::Local(n) = x {
            if let Some(v) = f.lets.get(n.as_str()) {
                v.visit(&mut |y| hit |= direct(y));
            }
        }
    });
    hit
}

fn unchecked_arith(f: &Flat, push: &mut Push) {
    for (i, n) in f.nodes.iter().enumerate() {
        let mut ops = Vec::new();
        for e in stmt_exprs(n.stmt) {
            e.visit(&mut |x| {
                if let Expr::Arith { kind, checked: false, lhs, rhs } = x {
                    if influenced(f, lhs) || influenced(f, rhs) {
                        ops.push(kind.to_string());
                    }
                }
            });
        }
        if !ops.is_empty() {
            ops.dedup();
            push(
                DetectorId::UncheckedArith,
                i,
                format!("unchecked {} on caller-influenced operands can wrap around", ops.join(", ")),
                vec![i],
            );
        }
    }
}

fn unbounded_gas(f: &Flat, push: &mut Push) {
    for (i, n) in f.nodes.iter().enumerate() {
        let what = match n.stmt {
            Stmt::Call { gas: None, .. } => "call",
            Stmt::Invoke { .. } => "invoke",
            _ => continue,
        };
        push(
            DetectorId::UnboundedGasCall,
            i,
            format!("{what} forwards nearly all remaining gas to the callee"),
            vec![i],
        );
    }
}

fn reads_local(e: &Expr, name: &str) -> bool {
    let mut hit = false;
    e.visit(&mut |x| hit |= matches!(x, Expr::Local(n) if n == name));
    hit
}

fn unchecked_result(f: &Flat, push: &mut Push) {
    for (i, n) in f.nodes.iter().enumerate() {
        let (what, result) = match n.stmt {
            Stmt::Call { result, .. } => ("call", result.as_deref()),
            Stmt::Send { result, .. } => ("send", Some(result.as_str())),
            _ => continue,
        };
        let message = match result {
            None => format!("result of {what} is discarded"),
            Some(r) => {
                let used = f.nodes.iter().enumerate().any(|(j, m)| {
                    j != i && f.may_follow(i, j) && stmt_exprs(m.stmt).into_iter().any(|e| reads_local(e, r))
                });
                if used {
                    continue;
                }
                format!("result `{r}` of {what} is never read")
            }
        };
        push(DetectorId::UncheckedCallResult, i, message, vec![i]);
    }
}

fn assigns_bool(s: &Stmt, var: &str, value: bool) -> bool {
    matches!(s, Stmt::Assign { target: LValue::Storage(n), value: Expr::Bool(b) } if n == var && *b == value)
}

/// Accepts only `require(!L); L = true; ... L = false;` at the top level
/// with every value-sending statement between the set and the clear.
fn guard_var<'a>(c: &Contract, body: &'a [Stmt], f: &Flat) -> Option<&'a str> {
    let calls: Vec<&Location> = f.nodes.iter().filter(|n| sends_value(n.stmt)).map(|n| &n.loc).collect();
    let top = |loc: &Location| match loc.0.first() {
        Some(Step::Index(i)) => *i,
        _ => unreachable!(),
    };
    for (ri, s) in body.iter().enumerate() {
        let Stmt::Require(Expr::Not(inner)) = s else { continue };
        let Expr::Storage(lock) = inner.as_ref() else { continue };
        if c.storage_kind(lock) != Some(StorageKind::Bool) {
            continue;
        }
        let Some(set) = (ri + 1..body.len()).find(|&i| assigns_bool(&body[i], lock, true)) else {
            continue;
        };
        let Some(clear) = (set + 1..body.len()).find(|&i| assigns_bool(&body[i], lock, false)) else {
            continue;
        };
        if calls.iter().all(|l| (set + 1..clear).contains(&top(l))) {
            return Some(lock);
        }
    }
    None
}

fn missing_guard(c: &Contract, f: &Flat, push: &mut Push) {
    let Some(first) = f.nodes.iter().position(|n| sends_value(n.stmt)) else {
        return;
    };
    let flags: BTreeSet<&str> = f
        .nodes
        .iter()
        .filter_map(|n| match n.stmt {
            Stmt::Assign { target: LValue::Storage(v), value: Expr::Bool(_) }
                if c.storage_kind(v) == Some(StorageKind::Bool) =>
            {
                Some(v.as_str())
            }
            _ => None,
        })
        .collect();
    let message = if flags.is_empty() {
        "value-sending external call without a reentrancy lock".to_string()
    } else {
        let names: Vec<String> = flags.iter().map(|v| format!("`{v}`")).collect();
        format!(
            "flag {} is not used as require(!flag); flag = true; ...; flag = false; only that exact shape is \
             recognised, and a lock cleared regardless of the call outcome still lets nested calls reach later statements",
            names.join(", ")
        )
    };
    let evidence = f
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| sends_value(n.stmt))
        .map(|(i, _)| i)
        .collect();
    push(DetectorId::MissingReentrancyGuard, first, message, evidence);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_contract;

    fn detectors(src: &str) -> Vec<(DetectorId, String, String)> {
        analyze(&parse_contract(src).unwrap())
            .into_iter()
            .map(|f| (f.detector, f.function.to_string(), f.location.to_string()))
            .collect()
    }

    #[test]
    fn empty_contract_has_no_findings() {
        assert!(analyze(&parse_contract("contract C {}").unwrap()).is_empty());
    }

    #[test]
    fn guard_shape_is_recognised() {
        let src = "contract G { storage b: map(address => uint256); storage lock: bool;
            fn w() { require(!lock); lock = true; call msg.sender value=1 gas=5000 -> ok; require(ok); lock = false; } }";
        assert!(detectors(src).is_empty(), "{:?}", detectors(src));
    }

    #[test]
    fn exclusive_branches_do_not_follow() {
        let src = "contract E { storage b: map(address => uint256);
            fn w(a: uint256) { require(b[msg.sender] >= a); if (a > 1) { call msg.sender value=a gas=1 -> ok; require(ok); } else { b[msg.sender] = 0; } } }";
        let found = detectors(src);
        assert!(!found.iter().any(|(d, ..)| *d == DetectorId::CeiViolation), "{found:?}");
    }

    #[test]
    fn loop_body_wraps_around() {
        let src = "contract L { storage b: map(address => uint256);
            fn w(to: address[]) { for r in to { require(b[r] > 0); b[r] = 0; call r value=1 gas=1 -> ok; require(ok); } } }";
        let found = detectors(src);
        assert!(found.contains(&(DetectorId::CeiViolation, "w".into(), "0.body.2".into())), "{found:?}");
    }

    #[test]
    fn unread_result_is_flagged() {
        let src = "contract R { fn f() { send msg.sender value=1 -> ok; } fn g() { send msg.sender value=1 -> ok; require(ok); } }";
        let found = detectors(src);
        assert!(found.contains(&(DetectorId::UncheckedCallResult, "f".into(), "0".into())));
        assert!(!found.iter().any(|(d, f, _)| *d == DetectorId::UncheckedCallResult && f == "g"));
    }

    #[test]
    fn findings_are_sorted() {
        let c = parse_contract(include_str!("../../../fixtures/bank_vulnerable.toy")).unwrap();
        let found = analyze(&c);
        let mut sorted = found.clone();
        sort_findings(&mut sorted);
        assert_eq!(found, sorted);
        assert_eq!(found[0].severity, Severity::High);
        for f in &found {
            assert!(c.resolve(&f.function, &f.location).is_some());
        }
    }

    #[test]
    fn severity_threshold() {
        assert!(Severity::High.at_least(Severity::Medium));
        assert!(!Severity::Info.at_least(Severity::Medium));
        assert!(Severity::Medium.at_least(Severity::Medium));
    }
}
