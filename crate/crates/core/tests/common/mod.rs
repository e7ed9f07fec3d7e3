//! Oracles and generators shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use exploitlab_core::analyzer::{DetectorId, Finding, Severity};
use exploitlab_core::lang::{parse_contract, Contract, ParamType};
use exploitlab_core::numeric::{checked_arith, wrap_arith};
use exploitlab_core::scenarios::{builtin_fixture, fixture_names};
use exploitlab_core::vm::{
    execute_transaction, max_nesting, Slot, Status, TraceEvent, Transaction, Value, WorldState, MAX_DEPTH, STIPEND,
};
use exploitlab_core::{Address, ArithKind, UInt};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const ETHER: u128 = 1_000_000_000_000_000_000;

pub fn to_big(v: &UInt) -> BigUint {
    BigUint::from_bytes_be(&v.to_be_bytes())
}

pub fn from_big(width: u16, v: &BigUint) -> UInt {
    UInt::parse(width, &v.to_str_radix(10)).unwrap()
}

/// Exact result, or None if it is negative.
pub fn oracle(kind: ArithKind, a: &BigUint, b: &BigUint) -> Option<BigUint> {
    match kind {
        ArithKind::Add => Some(a + b),
        ArithKind::Sub => (a >= b).then(|| a - b),
        ArithKind::Mul => Some(a * b),
    }
}

/// Compares both arithmetic modes on one case against the oracle.
pub fn check_arith(kind: ArithKind, a: UInt, b: UInt) -> Result<(), String> {
    let width = a.width();
    let modulus = BigUint::from(1u8) << width as usize;
    let (ba, bb) = (to_big(&a), to_big(&b));
    let exact = oracle(kind, &ba, &bb);
    let case = format!("{kind:?} {a:?} {b:?}");

    let wrapped = wrap_arith(kind, a, b).map_err(|e| format!("{case}: {e}"))?;
    let expected = match &exact {
        Some(v) => v % &modulus,
        None => &modulus + &ba - &bb,
    };
    if to_big(&wrapped) != expected || wrapped.width() != width {
        return Err(format!("{case}: wrapped {wrapped:?}, oracle {expected}"));
    }
    match (exact.filter(|v| *v < modulus), checked_arith(kind, a, b)) {
        (Some(v), Ok(got)) if to_big(&got) == v => Ok(()),
        (None, Err(_)) => Ok(()),
        (want, got) => Err(format!("{case}: checked {got:?}, oracle {want:?}")),
    }
}

/// Uniform limbs reduced to `width` bits, with boundary values mixed in.
pub fn random_operand(rng: &mut ChaCha8Rng, width: u16) -> UInt {
    match rng.gen_range(0..8) {
        0 => UInt::zero(width).unwrap(),
        1 => UInt::max_value(width).unwrap(),
        2 => UInt::pow2(width, rng.gen_range(0..width as u32)).unwrap(),
        _ => {
            let v = to_big(&UInt::u256_from_limbs(rng.gen())) % (BigUint::from(1u8) << width as usize);
            from_big(width, &v)
        }
    }
}

pub struct Fleet {
    pub world: WorldState,
    pub users: Vec<Address>,
    pub contracts: Vec<Address>,
}

/// Every fixture deployed next to four funded accounts, attackers aimed at
/// random banks.
pub fn fleet(rng: &mut ChaCha8Rng) -> Fleet {
    let mut world = WorldState::new();
    let users: Vec<Address> = ["alice", "bob", "carol", "eve"].iter().map(|u| Address::from_label(u)).collect();
    for u in &users {
        world.create_account(*u, UInt::u256(1000 * ETHER)).unwrap();
    }
    let mut contracts = Vec::new();
    for name in fixture_names() {
        let addr = Address::from_label(name);
        world.deploy(addr, Arc::new(fixture(name)), UInt::u256(rng.gen_range(0..3) * ETHER)).unwrap();
        contracts.push(addr);
    }
    let banks: Vec<Address> = fixture_names()
        .filter(|n| n.starts_with("bank"))
        .map(Address::from_label)
        .collect();
    for name in ["attacker", "attacker_benign", "attacker_pull"] {
        let tx = Transaction {
            from: users[0],
            to: Address::from_label(name),
            function: Some("set_target".into()),
            args: vec![Value::Address(*banks.choose(rng).unwrap())],
            value: UInt::u256(0),
            gas_limit: 1_000_000,
        };
        assert!(execute_transaction(&mut world, &tx, &mut Vec::new()).unwrap().status.is_ok());
    }
    Fleet { world, users, contracts }
}

fn amount(rng: &mut ChaCha8Rng) -> UInt {
    match rng.gen_range(0..6) {
        0 => UInt::u256(0),
        1 => UInt::u256(rng.gen_range(1..1000)),
        2 => UInt::u256(rng.gen_range(1..6) * ETHER),
        3 => UInt::u256(2000 * ETHER),
        4 => UInt::u256_from_limbs([0, 0, 0, 1 << 63]),
        _ => UInt::u256_from_limbs(rng.gen()),
    }
}

/// Mostly well-formed calls, plus unknown functions, extra arguments and
/// plain value sends.
pub fn random_tx(rng: &mut ChaCha8Rng, f: &Fleet) -> Transaction {
    let everyone: Vec<Address> = f.users.iter().chain(&f.contracts).copied().collect();
    let to = *everyone.choose(rng).unwrap();
    let code = f.world.code(&to);
    let (function, mut args) = match (&code, rng.gen_range(0..10)) {
        (Some(c), 0..=7) if !c.functions.is_empty() => {
            let func = c.functions.choose(rng).unwrap();
            let args = func
                .params
                .iter()
                .map(|p| match p.ty {
                    ParamType::U256 => Value::U256(amount(rng)),
                    ParamType::Address => Value::Address(*everyone.choose(rng).unwrap()),
                    ParamType::AddressList => {
                        Value::AddressList((0..rng.gen_range(0..4)).map(|_| *everyone.choose(rng).unwrap()).collect())
                    }
                })
                .collect();
            (Some(func.name.clone()), args)
        }
        (_, 8) => (Some("missing".into()), Vec::new()),
        _ => (None, Vec::new()),
    };
    if rng.gen_bool(0.05) {
        args.push(Value::Bool(true));
    }
    let value = if rng.gen_bool(0.5) { UInt::u256(0) } else { amount(rng) };
    let gas_limit = *[0, 50, 2_400, 30_000, 200_000, 10_000_000].choose(rng).unwrap();
    Transaction { from: *f.users.choose(rng).unwrap(), to, function, args, value, gas_limit }
}

/// Runs one transaction and checks conservation, atomicity, stipend entry
/// and gas accounting.
pub fn check_tx(world: &mut WorldState, tx: &Transaction) -> Result<Status, String> {
    let supply = world.total_balance();
    let hash = world.state_hash();
    let mut trace = Vec::new();
    let out = execute_transaction(world, tx, &mut trace).map_err(|e| e.to_string())?;

    if world.total_balance() != supply {
        return Err(format!("ether created or destroyed by {tx:?}"));
    }
    if out.gas_used > tx.gas_limit {
        return Err(format!("gas_used {} over limit in {tx:?}", out.gas_used));
    }
    if !out.status.is_ok() && world.state_hash() != hash {
        return Err(format!("failed tx changed state: {tx:?}"));
    }
    match max_nesting(&trace) {
        Some(n) if n <= MAX_DEPTH + 1 => {}
        n => return Err(format!("bad nesting {n:?} in {tx:?}")),
    }
    let mut entered = Vec::new();
    for (i, event) in trace.iter().enumerate() {
        match event {
            TraceEvent::StatementExec { depth, kind: kind @ ("transfer" | "send"), .. } => {
                if let Some(TraceEvent::FrameEnter { depth: child, gas, .. }) = trace.get(i + 1) {
                    if *child != depth + 1 || *gas != STIPEND {
                        return Err(format!("{kind} frame entered with {gas} gas in {tx:?}"));
                    }
                }
            }
            TraceEvent::FrameEnter { gas, .. } => entered.push(*gas),
            TraceEvent::FrameExit { gas_used, .. } => {
                let gas = entered.pop().ok_or("exit without enter")?;
                if *gas_used > gas {
                    return Err(format!("frame used {gas_used} of {gas} gas in {tx:?}"));
                }
            }
            _ => {}
        }
    }
    Ok(out.status)
}

/// Runs `count` random transactions from `seed`; returns (ok, failed).
pub fn run_sequence(seed: u64, count: usize) -> Result<(usize, usize), String> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = fleet(&mut rng);
    let mut ok = 0;
    for _ in 0..count {
        let tx = random_tx(&mut rng, &f);
        if check_tx(&mut f.world, &tx)?.is_ok() {
            ok += 1;
        }
    }
    Ok((ok, count - ok))
}

const DIVER: &str = "
contract Diver {
    storage deepest: uint256;
    storage level: uint256;

    fn dive() {
        level = level + 1;
        deepest = level;
        invoke this.dive() value=0 -> ok;
        level = level - 1;
    }
}
";

/// Self-recursion until the VM refuses a frame; returns the depths at
/// which frames failed with DepthExceeded and the deepest frame that ran.
pub fn dive() -> (Vec<usize>, UInt) {
    let mut w = WorldState::new();
    let diver = Address::from_label("diver");
    let user = Address::from_label("user");
    w.deploy(diver, Arc::new(parse_contract(DIVER).unwrap()), UInt::u256(0)).unwrap();
    w.create_account(user, UInt::u256(0)).unwrap();
    let tx = Transaction {
        from: user,
        to: diver,
        function: Some("dive".into()),
        args: vec![],
        value: UInt::u256(0),
        gas_limit: 1_000_000_000_000,
    };
    let mut trace = Vec::new();
    let out = execute_transaction(&mut w, &tx, &mut trace).unwrap();
    assert!(out.status.is_ok());
    let failed = trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::FrameExit { depth, status: Status::DepthExceeded, .. } => Some(*depth),
            _ => None,
        })
        .collect();
    let Value::U256(deepest) = w.storage(&diver, &Slot::scalar("deepest")) else { unreachable!() };
    (failed, deepest)
}

pub fn fixture(name: &str) -> Contract {
    parse_contract(builtin_fixture(name).unwrap()).unwrap()
}

pub fn has_high(findings: &[Finding], function: &str, detector: DetectorId) -> bool {
    findings
        .iter()
        .any(|f| f.severity == Severity::High && f.detector == detector && f.function.to_string() == function)
}

// (scenario, exploited fixture, function, detector)
pub const EXPLOITED: &[(&str, &str, &str, DetectorId)] = &[
    ("reentrancy_vulnerable", "bank_vulnerable", "withdraw", DetectorId::CeiViolation),
    ("reentrancy_vulnerable", "bank_vulnerable", "withdraw", DetectorId::UncheckedArith),
    ("reentrancy_lock", "bank_lock", "withdraw", DetectorId::CeiViolation),
    ("overflow_bec", "bec_token", "batchTransfer", DetectorId::UncheckedArith),
    ("overflow_smt", "smt_token", "transferProxy", DetectorId::UncheckedArith),
];

pub const HARDENED: &[(&str, &str, &str, DetectorId)] = &[
    ("reentrancy_cei", "bank_cei", "withdraw", DetectorId::CeiViolation),
    ("reentrancy_withdrawal", "bank_withdrawal", "claim", DetectorId::CeiViolation),
    ("overflow_safemath_bec", "bec_token_safemath", "batchTransfer", DetectorId::UncheckedArith),
    ("overflow_safemath_smt", "smt_token_safemath", "transferProxy", DetectorId::UncheckedArith),
];
