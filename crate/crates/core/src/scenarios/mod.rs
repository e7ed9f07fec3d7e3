//! Shipped fixtures, scenario manifests and the replay harness.

mod manifest;
mod value;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_bigint::BigInt;
use serde::Serialize;
use thiserror::Error;

use crate::address::Address;
use crate::lang::{parse_contract, EntryPoint};
use crate::numeric::UInt;
use crate::vm::{
    execute_transaction, NoTrace, Slot, Status, TraceEvent, TraceSink, Transaction, Value, VmError, WorldState,
};

pub use manifest::{AccountSpec, ArgSpec, Check, CmpOp, Expectation, Manifest, ParamDefault, TxSpec};
pub use value::{eval_int, to_bigint, to_uint, wrap256, ParamValue, Params};

const DEFAULT_GAS: u64 = 10_000_000;

macro_rules! embed {
    ($dir:literal, $ext:literal; $($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../../../", $dir, "/", $name, ".", $ext)))),*]
    };
}

static FIXTURES: &[(&str, &str)] = embed!(
    "fixtures", "toy";
    "bank_vulnerable",
    "bank_cei",
    "bank_lock",
    "bank_transfer",
    "bank_withdrawal",
    "attacker",
    "attacker_benign",
    "attacker_pull",
    "bec_token",
    "bec_token_safemath",
    "smt_token",
    "smt_token_safemath",
);

static SCENARIOS: &[(&str, &str)] = embed!(
    "scenarios", "toml";
    "reentrancy_vulnerable",
    "reentrancy_cei",
    "reentrancy_lock",
    "reentrancy_transfer",
    "reentrancy_withdrawal",
    "overflow_bec",
    "overflow_smt",
    "overflow_safemath_bec",
    "overflow_safemath_smt",
);

pub fn fixture_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(n, _)| *n)
}

pub fn builtin_fixture(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn scenario_names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}

pub fn builtin_manifest(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("bad value for parameter {param}: {message}")]
    BadOverride { param: String, message: String },
    #[error("fixture {name}: {message}")]
    Fixture { name: String, message: String },
    #[error("unknown account {0:?}")]
    UnknownAccount(String),
    #[error("{context}: {message}")]
    Value { context: String, message: String },
    #[error("setup transaction {index} failed with status {status}")]
    Setup { index: usize, status: Status },
    #[error(transparent)]
    Vm(#[from] VmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxOutcome {
    pub from: String,
    pub to: String,
    pub function: Option<String>,
    pub status: Status,
    pub gas_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StorageDelta {
    pub account: String,
    pub slot: String,
    pub before: Value,
    pub after: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExpectationResult {
    pub description: String,
    pub exploit: bool,
    pub passed: bool,
    pub actual: String,
}

/// Outcome of one scenario replay. Balances are keyed by account name and
/// taken right before the first attack transaction and after the last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub description: String,
    pub params: BTreeMap<String, String>,
    pub addresses: BTreeMap<String, Address>,
    pub initial_balances: BTreeMap<String, UInt>,
    pub final_balances: BTreeMap<String, UInt>,
    pub storage_deltas: Vec<StorageDelta>,
    pub outcomes: Vec<TxOutcome>,
    pub pre_state_hash: String,
    pub post_state_hash: String,
    pub exploit_expected: bool,
    pub exploit_succeeded: bool,
    pub expectations: Vec<ExpectationResult>,
    /// Attack-phase events; empty when the trace was streamed elsewhere.
    pub trace: Vec<TraceEvent>,
}

impl ScenarioReport {
    /// All regular expectations hold and the exploit went as expected.
    pub fn passed(&self) -> bool {
        self.expectations.iter().filter(|e| !e.exploit).all(|e| e.passed)
            && self.exploit_succeeded == self.exploit_expected
    }

    /// Final minus initial balance, in wei.
    pub fn balance_delta(&self, account: &str) -> Option<BigInt> {
        let before = self.initial_balances.get(account)?;
        let after = self.final_balances.get(account)?;
        Some(to_bigint(after) - to_bigint(before))
    }
}

/// Runs a shipped scenario.
pub fn run_scenario(name: &str, overrides: &BTreeMap<String, String>) -> Result<ScenarioReport, ScenarioError> {
    let manifest = load_builtin(name)?;
    run_manifest(&manifest, overrides, &|n: &str| builtin_fixture(n).map(str::to_string), None)
}

/// Like [`run_scenario`], but attack-phase trace events go to `sink` as they
/// happen instead of into the report.
pub fn run_scenario_streaming(
    name: &str,
    overrides: &BTreeMap<String, String>,
    sink: &mut dyn TraceSink,
) -> Result<ScenarioReport, ScenarioError> {
    let manifest = load_builtin(name)?;
    run_manifest(&manifest, overrides, &|n: &str| builtin_fixture(n).map(str::to_string), Some(sink))
}

fn load_builtin(name: &str) -> Result<Manifest, ScenarioError> {
    let text = builtin_manifest(name).ok_or_else(|| ScenarioError::UnknownScenario(name.to_string()))?;
    Manifest::from_toml(text).map_err(ScenarioError::Manifest)
}

/// Resolves parameters: manifest defaults, then overrides.
pub fn resolve_params(manifest: &Manifest, overrides: &BTreeMap<String, String>) -> Result<Params, ScenarioError> {
    let mut params = Params::new();
    for (name, default) in &manifest.params {
        let v = match default {
            ParamDefault::Flag(b) => ParamValue::Flag(*b),
            ParamDefault::Int(i) => ParamValue::Int(BigInt::from(*i)),
            ParamDefault::Expr(e) => ParamValue::Int(eval_int(e, &Params::new()).map_err(|message| {
                ScenarioError::BadOverride {
                    param: name.clone(),
                    message,
                }
            })?),
        };
        params.insert(name.clone(), v);
    }
    let defaults = params.clone();
    for (name, text) in overrides {
        let slot = params
            .get_mut(name)
            .ok_or_else(|| ScenarioError::UnknownParam(name.clone()))?;
        let bad = |message: String| ScenarioError::BadOverride {
            param: name.clone(),
            message,
        };
        *slot = match slot {
            ParamValue::Flag(_) => match text.trim() {
                "true" | "1" | "yes" => ParamValue::Flag(true),
                "false" | "0" | "no" => ParamValue::Flag(false),
                other => return Err(bad(format!("expected true or false, got {other:?}"))),
            },
            ParamValue::Int(_) => ParamValue::Int(eval_int(text, &defaults).map_err(bad)?),
        };
    }
    Ok(params)
}

struct Ctx<'a> {
    params: Params,
    addresses: BTreeMap<String, Address>,
    names: BTreeMap<Address, String>,
    manifest: &'a Manifest,
}

impl Ctx<'_> {
    fn int(&self, text: &str, context: impl Fn() -> String) -> Result<BigInt, ScenarioError> {
        eval_int(text, &self.params).map_err(|message| ScenarioError::Value {
            context: context(),
            message,
        })
    }

    fn uint(&self, text: &str, context: impl Fn() -> String) -> Result<UInt, ScenarioError> {
        let v = self.int(text, &context)?;
        to_uint(&v).map_err(|message| ScenarioError::Value {
            context: context(),
            message,
        })
    }

    fn address(&self, name: &str) -> Result<Address, ScenarioError> {
        let name = name.strip_prefix('@').unwrap_or(name);
        self.addresses
            .get(name)
            .copied()
            .ok_or_else(|| ScenarioError::UnknownAccount(name.to_string()))
    }

    fn flag(&self, name: &str) -> Result<bool, ScenarioError> {
        match self.params.get(name) {
            Some(ParamValue::Flag(b)) => Ok(*b),
            Some(ParamValue::Int(_)) => Err(ScenarioError::Manifest(format!("parameter {name} is not a flag"))),
            None => Err(ScenarioError::UnknownParam(name.to_string())),
        }
    }

    fn active(&self, when: &Option<String>) -> Result<bool, ScenarioError> {
        match when.as_deref().map(str::trim) {
            None => Ok(true),
            Some(w) => match w.strip_prefix('!') {
                Some(flag) => Ok(!self.flag(flag.trim())?),
                None => self.flag(w),
            },
        }
    }

    fn arg(&self, arg: &ArgSpec, context: &dyn Fn() -> String) -> Result<Value, ScenarioError> {
        match arg {
            ArgSpec::Scalar(s) if s.starts_with('@') => Ok(Value::Address(self.address(s)?)),
            ArgSpec::Scalar(s) => Ok(Value::U256(self.uint(s, context)?)),
            ArgSpec::List(items) => Ok(Value::AddressList(
                items.iter().map(|s| self.address(s)).collect::<Result<_, _>>()?,
            )),
        }
    }

    fn tx(&self, spec: &TxSpec, context: &dyn Fn() -> String) -> Result<Transaction, ScenarioError> {
        let args = spec
            .args
            .iter()
            .map(|a| self.arg(a, context))
            .collect::<Result<Vec<_>, _>>()?;
        let gas_limit = match &spec.gas {
            None => DEFAULT_GAS,
            Some(g) => {
                let v = self.int(g, context)?;
                u64::try_from(v).map_err(|_| ScenarioError::Value {
                    context: context(),
                    message: "gas must fit in 64 bits".into(),
                })?
            }
        };
        Ok(Transaction {
            from: self.address(&spec.from)?,
            to: self.address(&spec.to)?,
            function: spec.function.clone(),
            args,
            value: self.uint(&spec.value, context)?,
            gas_limit,
        })
    }

    fn slot_name(&self, slot: &Slot) -> String {
        match &slot.key {
            Some(k) => match self.names.get(k) {
                Some(n) => format!("{}[{n}]", slot.var),
                None => slot.to_string(),
            },
            None => slot.var.clone(),
        }
    }

    fn slot(&self, var: &str, key: &Option<String>) -> Result<Slot, ScenarioError> {
        Ok(match key {
            Some(k) => Slot::entry(var, self.address(k)?),
            None => Slot::scalar(var),
        })
    }
}

/// Records attack-phase events and counts frame entries per entry point.
struct Recorder<'a> {
    kept: Vec<TraceEvent>,
    forward: Option<&'a mut dyn TraceSink>,
    frames: BTreeMap<(Address, String), usize>,
}

impl TraceSink for Recorder<'_> {
    fn record(&mut self, event: TraceEvent) {
        if let TraceEvent::FrameEnter {
            callee, entry: Some(entry), ..
        } = &event
        {
            *self.frames.entry((*callee, entry.to_string())).or_default() += 1;
        }
        match &mut self.forward {
            Some(sink) => sink.record(event),
            None => self.kept.push(event),
        }
    }
}

/// Runs a manifest. `fixtures` maps a fixture name to its source text.
pub fn run_manifest(
    manifest: &Manifest,
    overrides: &BTreeMap<String, String>,
    fixtures: &dyn Fn(&str) -> Option<String>,
    sink: Option<&mut dyn TraceSink>,
) -> Result<ScenarioReport, ScenarioError> {
    let params = resolve_params(manifest, overrides)?;
    let mut ctx = Ctx {
        params,
        addresses: BTreeMap::new(),
        names: BTreeMap::new(),
        manifest,
    };
    for acct in &manifest.accounts {
        let address = Address::from_label(&acct.name);
        if ctx.addresses.insert(acct.name.clone(), address).is_some() {
            return Err(ScenarioError::Manifest(format!("duplicate account {}", acct.name)));
        }
        ctx.names.insert(address, acct.name.clone());
    }

    let mut world = WorldState::new();
    for acct in &manifest.accounts {
        let address = ctx.addresses[&acct.name];
        let balance = ctx.uint(&acct.balance, || format!("balance of {}", acct.name))?;
        let mut fixture = acct.contract.clone();
        for (flag, alt) in &acct.variants {
            if ctx.flag(flag)? {
                fixture = Some(alt.clone());
            }
        }
        let created = match fixture {
            None => world.create_account(address, balance),
            Some(name) => {
                let source = fixtures(&name).ok_or_else(|| ScenarioError::Fixture {
                    name: name.clone(),
                    message: "not found".into(),
                })?;
                let contract = parse_contract(&source).map_err(|e| ScenarioError::Fixture {
                    name: name.clone(),
                    message: e.to_string(),
                })?;
                world.deploy(address, Arc::new(contract), balance)
            }
        };
        created.map_err(|e| ScenarioError::Manifest(e.to_string()))?;
    }

    for (index, spec) in manifest.setup.iter().enumerate() {
        let tx = ctx.tx(spec, &|| format!("setup transaction {index}"))?;
        let out = execute_transaction(&mut world, &tx, &mut NoTrace)?;
        if !out.status.is_ok() {
            return Err(ScenarioError::Setup {
                index,
                status: out.status,
            });
        }
    }

    let pre = world.clone();
    let mut recorder = Recorder {
        kept: Vec::new(),
        forward: sink,
        frames: BTreeMap::new(),
    };
    let mut outcomes = Vec::new();
    for (index, spec) in manifest.attack.iter().enumerate() {
        let tx = ctx.tx(spec, &|| format!("attack transaction {index}"))?;
        let out = execute_transaction(&mut world, &tx, &mut recorder)?;
        outcomes.push(TxOutcome {
            from: spec.from.clone(),
            to: spec.to.clone(),
            function: spec.function.clone(),
            status: out.status,
            gas_used: out.gas_used,
        });
    }

    let balances = |w: &WorldState| -> BTreeMap<String, UInt> {
        ctx.addresses
            .iter()
            .map(|(n, a)| (n.clone(), w.balance(a)))
            .collect()
    };
    let mut storage_deltas = Vec::new();
    for acct in &manifest.accounts {
        let address = ctx.addresses[&acct.name];
        let (Some(before), Some(after)) = (pre.account(&address), world.account(&address)) else {
            continue;
        };
        let slots: BTreeSet<&Slot> = before.storage.keys().chain(after.storage.keys()).collect();
        for slot in slots {
            let (b, a) = (pre.storage(&address, slot), world.storage(&address, slot));
            if a != b {
                storage_deltas.push(StorageDelta {
                    account: acct.name.clone(),
                    slot: ctx.slot_name(slot),
                    before: b,
                    after: a,
                });
            }
        }
    }

    let mut expectations = Vec::new();
    for exp in &manifest.expect {
        if !ctx.active(&exp.when)? {
            continue;
        }
        let (description, passed, actual) = check(&ctx, &exp.check, &pre, &world, &outcomes, &recorder.frames)?;
        expectations.push(ExpectationResult {
            description,
            exploit: exp.exploit,
            passed,
            actual,
        });
    }
    let mut exploit_checks = expectations.iter().filter(|e| e.exploit).peekable();
    let exploit_succeeded = exploit_checks.peek().is_some() && exploit_checks.all(|e| e.passed);

    Ok(ScenarioReport {
        name: manifest.name.clone(),
        description: manifest.description.trim().to_string(),
        params: ctx.params.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
        addresses: ctx.addresses.clone(),
        initial_balances: balances(&pre),
        final_balances: balances(&world),
        storage_deltas,
        outcomes,
        pre_state_hash: pre.state_hash_hex(),
        post_state_hash: world.state_hash_hex(),
        exploit_expected: ctx.manifest.exploit_expected,
        exploit_succeeded,
        expectations,
        trace: recorder.kept,
    })
}

fn uint_value(v: &Value) -> Result<BigInt, String> {
    match v {
        Value::U256(u) => Ok(to_bigint(u)),
        Value::Bool(b) => Ok(BigInt::from(*b as u8)),
        other => Err(format!("{other} is not a number")),
    }
}

fn check(
    ctx: &Ctx,
    check: &Check,
    pre: &WorldState,
    post: &WorldState,
    outcomes: &[TxOutcome],
    frames: &BTreeMap<(Address, String), usize>,
) -> Result<(String, bool, String), ScenarioError> {
    let compare = |what: String, op: CmpOp, actual: BigInt, expected: BigInt| {
        let passed = op.holds(&actual, &expected);
        (format!("{what} {} {expected}", op.symbol()), passed, actual.to_string())
    };
    Ok(match check {
        Check::Balance { account, op, value } => {
            let a = ctx.address(account)?;
            let expected = ctx.int(value, || format!("expectation on balance({account})"))?;
            compare(format!("balance({account})"), *op, to_bigint(&post.balance(&a)), expected)
        }
        Check::BalanceDelta { account, op, value } => {
            let a = ctx.address(account)?;
            let expected = ctx.int(value, || format!("expectation on delta balance({account})"))?;
            let delta = to_bigint(&post.balance(&a)) - to_bigint(&pre.balance(&a));
            compare(format!("delta balance({account})"), *op, delta, expected)
        }
        Check::Storage {
            account,
            var,
            key,
            op,
            value,
            wrap,
        } => {
            let a = ctx.address(account)?;
            let slot = ctx.slot(var, key)?;
            let what = format!("{account}.{}", ctx.slot_name(&slot));
            let mut expected = ctx.int(value, || format!("expectation on {what}"))?;
            if *wrap {
                expected = wrap256(&expected);
            }
            match uint_value(&post.storage(&a, &slot)) {
                Ok(actual) => compare(what, *op, actual, expected),
                Err(e) => (format!("{what} {} {expected}", op.symbol()), false, e),
            }
        }
        Check::StorageDelta {
            account,
            var,
            key,
            op,
            value,
        } => {
            let a = ctx.address(account)?;
            let slot = ctx.slot(var, key)?;
            let what = format!("delta {account}.{}", ctx.slot_name(&slot));
            let expected = ctx.int(value, || format!("expectation on {what}"))?;
            match (uint_value(&post.storage(&a, &slot)), uint_value(&pre.storage(&a, &slot))) {
                (Ok(after), Ok(before)) => compare(what, *op, after - before, expected),
                (Err(e), _) | (_, Err(e)) => (format!("{what} {} {expected}", op.symbol()), false, e),
            }
        }
        Check::Status { tx, status } => {
            let what = format!("status(attack[{tx}]) == {status}");
            match outcomes.get(*tx) {
                None => (what, false, "no such transaction".into()),
                Some(o) => {
                    let passed = match status.as_str() {
                        "failed" => !o.status.is_ok(),
                        s => o.status.as_str() == s,
                    };
                    (what, passed, o.status.to_string())
                }
            }
        }
        Check::StateUnchanged => {
            let (b, a) = (pre.state_hash_hex(), post.state_hash_hex());
            ("state hash unchanged".into(), a == b, a)
        }
        Check::Frames {
            account,
            entry,
            op,
            value,
        } => {
            let a = ctx.address(account)?;
            let expected = ctx.int(value, || format!("expectation on frames({account}.{entry})"))?;
            let key = (a, EntryPoint::Function(entry.clone()).to_string());
            let count = frames.get(&key).copied().unwrap_or(0);
            compare(format!("frames({account}.{entry})"), *op, BigInt::from(count), expected)
        }
    })
}
