use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

use super::trace::{Status, TraceEvent, TraceSink};
use super::world::{Slot, Value, WorldState};
use crate::address::Address;
use crate::lang::{CmpOp, EntryPoint, Expr, LValue, Location, ParamType, Step, Stmt};
use crate::numeric::{checked_arith, wrap_arith, ArithKind, UInt};

pub const STMT_GAS: u64 = 10;
pub const STORAGE_WRITE_GAS: u64 = 200;
pub const CALL_GAS: u64 = 100;
/// Intrinsic cost charged once per transaction.
pub const TX_GAS: u64 = CALL_GAS;
pub const STIPEND: u64 = 2300;
pub const MAX_DEPTH: usize = 1024;

const STACK_RED_ZONE: usize = 64 * 1024;
const STACK_GROW: usize = 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub from: Address,
    pub to: Address,
    /// `None` sends plain value and runs the fallback.
    pub function: Option<String>,
    pub args: Vec<Value>,
    pub value: UInt,
    pub gas_limit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct CallOutcome {
    pub status: Status,
    pub gas_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("sender {0} does not exist")]
    UnknownSender(Address),
}

/// Runs `tx` against `world`. On any failure status the world is left
/// exactly as it was before the call.
pub fn execute_transaction(
    world: &mut WorldState,
    tx: &Transaction,
    sink: &mut dyn TraceSink,
) -> Result<CallOutcome, VmError> {
    if !world.exists(&tx.from) {
        return Err(VmError::UnknownSender(tx.from));
    }
    let mut vm = Interp { world, sink };
    let req = CallRequest {
        kind: CallKind::Tx,
        caller: tx.from,
        callee: tx.to,
        value: tx.value,
        function: tx.function.clone(),
        args: tx.args.clone(),
    };
    let Some(gas) = tx.gas_limit.checked_sub(TX_GAS) else {
        let entry = vm.entry_for(&req);
        vm.sink.record(TraceEvent::FrameEnter {
            depth: 0,
            caller: req.caller,
            callee: req.callee,
            entry,
            value: req.value,
            gas: 0,
        });
        vm.sink.record(TraceEvent::FrameExit {
            depth: 0,
            status: Status::OutOfGas,
            gas_used: 0,
        });
        return Ok(CallOutcome {
            status: Status::OutOfGas,
            gas_used: tx.gas_limit,
        });
    };
    let (status, left) = vm.message_call(req, gas, 0);
    let gas_used = match status {
        Status::OutOfGas => tx.gas_limit,
        _ => tx.gas_limit - left,
    };
    Ok(CallOutcome { status, gas_used })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CallKind {
    Tx,
    Call,
    Transfer,
    Send,
    Invoke,
}

struct CallRequest {
    kind: CallKind,
    caller: Address,
    callee: Address,
    value: UInt,
    function: Option<String>,
    args: Vec<Value>,
}

/// Why a frame stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Halt {
    Revert,
    OutOfGas,
}

enum Flow {
    Continue,
    Stop,
}

struct Frame {
    address: Address,
    caller: Address,
    value: UInt,
    depth: usize,
    gas: u64,
    args: HashMap<String, Value>,
    locals: HashMap<String, Value>,
}

impl Frame {
    fn charge(&mut self, amount: u64) -> Result<(), Halt> {
        match self.gas.checked_sub(amount) {
            Some(left) => {
                self.gas = left;
                Ok(())
            }
            None => {
                self.gas = 0;
                Err(Halt::OutOfGas)
            }
        }
    }
}

struct Interp<'w, 's> {
    world: &'w mut WorldState,
    sink: &'s mut dyn TraceSink,
}

impl Interp<'_, '_> {
    fn entry_for(&self, req: &CallRequest) -> Option<EntryPoint> {
        let code = self.world.code(&req.callee)?;
        match &req.function {
            Some(name) if code.function(name).is_some() => Some(EntryPoint::Function(name.clone())),
            _ => Some(EntryPoint::Fallback),
        }
    }

    /// Runs one message call frame. Returns the status and the unused gas.
    fn message_call(&mut self, req: CallRequest, gas: u64, depth: usize) -> (Status, u64) {
        stacker::maybe_grow(STACK_RED_ZONE, STACK_GROW, || self.message_call_inner(req, gas, depth))
    }

    fn message_call_inner(&mut self, req: CallRequest, gas: u64, depth: usize) -> (Status, u64) {
        let entry = self.entry_for(&req);
        self.sink.record(TraceEvent::FrameEnter {
            depth,
            caller: req.caller,
            callee: req.callee,
            entry: entry.clone(),
            value: req.value,
            gas,
        });
        let (status, left) = if depth >= MAX_DEPTH {
            (Status::DepthExceeded, gas)
        } else {
            let cp = self.world.snapshot();
            let (status, left) = match self.enter(&req, entry, gas, depth) {
                Ok(left) => (Status::Ok, left),
                Err((Halt::Revert, left)) => (Status::Reverted, left),
                Err((Halt::OutOfGas, _)) => (Status::OutOfGas, 0),
            };
            let released = if status.is_ok() {
                self.world.commit(cp)
            } else {
                self.world.rollback(cp)
            };
            released.expect("frame checkpoints are strictly nested");
            (status, left)
        };
        self.sink.record(TraceEvent::FrameExit {
            depth,
            status,
            gas_used: gas - left,
        });
        (status, left)
    }

    /// Moves value, dispatches and runs the body. Errors carry the gas left.
    fn enter(
        &mut self,
        req: &CallRequest,
        entry: Option<EntryPoint>,
        gas: u64,
        depth: usize,
    ) -> Result<u64, (Halt, u64)> {
        let revert = Err((Halt::Revert, gas));
        if !self.world.exists(&req.callee) {
            return revert;
        }
        if !req.value.is_zero() && self.move_value(req.caller, req.callee, req.value).is_err() {
            return revert;
        }
        let Some(entry) = entry else {
            // Plain account: value arrives, nothing runs.
            return match (req.kind, &req.function) {
                (CallKind::Invoke, _) | (CallKind::Tx, Some(_)) => revert,
                _ => Ok(gas),
            };
        };
        let contract = self.world.code(&req.callee).expect("entry implies code");
        let (payable, params, body): (bool, &[crate::lang::Param], &[Stmt]) = match &entry {
            EntryPoint::Function(name) => {
                let f = contract.function(name).expect("resolved above");
                (f.payable, &f.params, &f.body)
            }
            EntryPoint::Fallback => match &contract.fallback {
                Some(fb) => (fb.payable, &[], &fb.body),
                None => return revert,
            },
        };
        if !req.value.is_zero() && !payable {
            return revert;
        }
        let args = match (&entry, bind_args(params, &req.args)) {
            // The fallback ignores whatever arguments came with an unknown function.
            (EntryPoint::Fallback, _) => HashMap::new(),
            (_, Some(args)) => args,
            (_, None) => return revert,
        };
        let mut frame = Frame {
            address: req.callee,
            caller: req.caller,
            value: req.value,
            depth,
            gas,
            args,
            locals: HashMap::new(),
        };
        match self.exec_block(&mut frame, body, None) {
            Ok(_) => Ok(frame.gas),
            Err(h) => Err((h, frame.gas)),
        }
    }

    fn move_value(&mut self, from: Address, to: Address, value: UInt) -> Result<(), Halt> {
        let from_old = self.world.balance(&from);
        let from_new = checked_arith(ArithKind::Sub, from_old, value).map_err(|_| Halt::Revert)?;
        if from == to {
            return Ok(());
        }
        let to_old = self.world.balance(&to);
        let to_new = checked_arith(ArithKind::Add, to_old, value).map_err(|_| Halt::Revert)?;
        self.world.set_balance(from, from_new);
        self.world.set_balance(to, to_new);
        self.sink.record(TraceEvent::BalanceChange {
            address: from,
            old: from_old,
            new: from_new,
        });
        self.sink.record(TraceEvent::BalanceChange {
            address: to,
            old: to_old,
            new: to_new,
        });
        Ok(())
    }

    fn exec_block(&mut self, frame: &mut Frame, stmts: &[Stmt], parent: Option<(&Location, Step)>) -> Result<Flow, Halt> {
        for (i, stmt) in stmts.iter().enumerate() {
            let loc = match parent {
                None => Location::root(i),
                Some((p, step)) => p.child(step, i),
            };
            if let Flow::Stop = self.exec_stmt(frame, stmt, &loc)? {
                return Ok(Flow::Stop);
            }
        }
        Ok(Flow::Continue)
    }

    fn exec_stmt(&mut self, frame: &mut Frame, stmt: &Stmt, loc: &Location) -> Result<Flow, Halt> {
        self.sink.record(TraceEvent::StatementExec {
            depth: frame.depth,
            kind: stmt.kind_name(),
            location: loc.clone(),
        });
        let cost = match stmt {
            Stmt::Assign { .. } => STORAGE_WRITE_GAS,
            Stmt::Call { .. } | Stmt::Transfer { .. } | Stmt::Send { .. } | Stmt::Invoke { .. } => CALL_GAS,
            _ => STMT_GAS,
        };
        frame.charge(cost)?;
        match stmt {
            Stmt::Require(cond) => {
                if !self.eval(frame, cond)?.as_bool() {
                    return Err(Halt::Revert);
                }
            }
            Stmt::Assign { target, value } => {
                let v = self.eval(frame, value)?;
                let slot = match target {
                    LValue::Storage(name) => Slot::scalar(name.clone()),
                    LValue::MapEntry { map, key } => Slot::entry(map.clone(), self.eval(frame, key)?.as_address()),
                };
                self.world.set_storage(frame.address, slot, v);
            }
            Stmt::Let { name, value } => {
                let v = self.eval(frame, value)?;
                frame.locals.insert(name.clone(), v);
            }
            Stmt::If { cond, then_branch, else_branch } => {
                let flow = if self.eval(frame, cond)?.as_bool() {
                    self.exec_block(frame, then_branch, Some((loc, Step::Then)))?
                } else {
                    self.exec_block(frame, else_branch, Some((loc, Step::Else)))?
                };
                return Ok(flow);
            }
            Stmt::ForEach { var, list, body } => {
                let items = match frame.args.get(list) {
                    Some(Value::AddressList(items)) => items.clone(),
                    _ => return Err(Halt::Revert),
                };
                for item in items {
                    frame.locals.insert(var.clone(), Value::Address(item));
                    if let Flow::Stop = self.exec_block(frame, body, Some((loc, Step::Body)))? {
                        return Ok(Flow::Stop);
                    }
                }
            }
            Stmt::Call { target, value, gas, result } => {
                let target = self.eval(frame, target)?.as_address();
                let value = self.eval(frame, value)?.as_uint();
                let cap = match gas {
                    Some(g) => Some(self.eval(frame, g)?.as_uint()),
                    None => None,
                };
                let status = self.external(frame, CallKind::Call, target, value, cap, None, Vec::new())?;
                if let Some(r) = result {
                    frame.locals.insert(r.clone(), Value::Bool(status.is_ok()));
                }
            }
            Stmt::Transfer { target, value } => {
                let target = self.eval(frame, target)?.as_address();
                let value = self.eval(frame, value)?.as_uint();
                let status = self.external(frame, CallKind::Transfer, target, value, None, None, Vec::new())?;
                if !status.is_ok() {
                    return Err(Halt::Revert);
                }
            }
            Stmt::Send { target, value, result } => {
                let target = self.eval(frame, target)?.as_address();
                let value = self.eval(frame, value)?.as_uint();
                let status = self.external(frame, CallKind::Send, target, value, None, None, Vec::new())?;
                frame.locals.insert(result.clone(), Value::Bool(status.is_ok()));
            }
            Stmt::Invoke { target, function, args, value, result } => {
                let target = self.eval(frame, target)?.as_address();
                let mut argv = Vec::with_capacity(args.len());
                for a in args {
                    argv.push(self.eval(frame, a)?);
                }
                let value = self.eval(frame, value)?.as_uint();
                let status =
                    self.external(frame, CallKind::Invoke, target, value, None, Some(function.clone()), argv)?;
                if let Some(r) = result {
                    frame.locals.insert(r.clone(), Value::Bool(status.is_ok()));
                }
            }
            Stmt::Stop => return Ok(Flow::Stop),
        }
        Ok(Flow::Continue)
    }

    /// Performs a sub-call after the statement's base cost was charged.
    #[allow(clippy::too_many_arguments)]
    fn external(
        &mut self,
        frame: &mut Frame,
        kind: CallKind,
        target: Address,
        value: UInt,
        cap: Option<UInt>,
        function: Option<String>,
        args: Vec<Value>,
    ) -> Result<Status, Halt> {
        // Every external statement must be able to fund a full stipend.
        if frame.gas < STIPEND {
            frame.gas = 0;
            return Err(Halt::OutOfGas);
        }
        let forwarded = match kind {
            CallKind::Transfer | CallKind::Send => STIPEND,
            _ => {
                let all_but = frame.gas - frame.gas / 64;
                match cap {
                    Some(c) => match c.to_u128() {
                        Some(c) if c < all_but as u128 => c as u64,
                        _ => all_but,
                    },
                    None => all_but,
                }
            }
        };
        frame.gas -= forwarded;
        let req = CallRequest {
            kind,
            caller: frame.address,
            callee: target,
            value,
            function,
            args,
        };
        let (status, left) = self.message_call(req, forwarded, frame.depth + 1);
        frame.gas += left;
        Ok(status)
    }

    fn eval(&mut self, frame: &Frame, e: &Expr) -> Result<Value, Halt> {
        Ok(match e {
            Expr::Uint(v) => Value::U256(*v),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Address(a) => Value::Address(*a),
            Expr::Local(n) => frame.locals.get(n).cloned().ok_or(Halt::Revert)?,
            Expr::Param(n) => frame.args.get(n).cloned().ok_or(Halt::Revert)?,
            Expr::Storage(n) => self.world.storage(&frame.address, &Slot::scalar(n.clone())),
            Expr::MapRead { map, key } => {
                let key = self.eval(frame, key)?.as_address();
                self.world.storage(&frame.address, &Slot::entry(map.clone(), key))
            }
            Expr::MsgSender => Value::Address(frame.caller),
            Expr::MsgValue => Value::U256(frame.value),
            Expr::This => Value::Address(frame.address),
            Expr::ThisBalance => Value::U256(self.world.balance(&frame.address)),
            Expr::BalanceOf(a) => {
                let a = self.eval(frame, a)?.as_address();
                Value::U256(self.world.balance(&a))
            }
            Expr::ListLen(n) => match frame.args.get(n) {
                Some(Value::AddressList(l)) => Value::U256(UInt::u256(l.len() as u128)),
                _ => return Err(Halt::Revert),
            },
            Expr::Arith { kind, checked, lhs, rhs } => {
                let a = self.eval(frame, lhs)?.as_uint();
                let b = self.eval(frame, rhs)?.as_uint();
                let r = if *checked {
                    checked_arith(*kind, a, b)
                } else {
                    wrap_arith(*kind, a, b)
                };
                Value::U256(r.map_err(|_| Halt::Revert)?)
            }
            Expr::Cmp { op, lhs, rhs } => {
                let a = self.eval(frame, lhs)?;
                let b = self.eval(frame, rhs)?;
                Value::Bool(compare(*op, &a, &b))
            }
            Expr::And(l, r) => Value::Bool(self.eval(frame, l)?.as_bool() && self.eval(frame, r)?.as_bool()),
            Expr::Or(l, r) => Value::Bool(self.eval(frame, l)?.as_bool() || self.eval(frame, r)?.as_bool()),
            Expr::Not(inner) => Value::Bool(!self.eval(frame, inner)?.as_bool()),
        })
    }
}

fn compare(op: CmpOp, a: &Value, b: &Value) -> bool {
    let ord = match (a, b) {
        (Value::U256(x), Value::U256(y)) => x.cmp_value(y),
        _ => {
            return match op {
                CmpOp::Eq => a == b,
                _ => false,
            }
        }
    };
    match op {
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ge => ord != Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
    }
}

fn bind_args(params: &[crate::lang::Param], args: &[Value]) -> Option<HashMap<String, Value>> {
    if params.len() != args.len() {
        return None;
    }
    params
        .iter()
        .zip(args)
        .map(|(p, a)| {
            let fits = matches!(
                (p.ty, a),
                (ParamType::U256, Value::U256(_))
                    | (ParamType::Address, Value::Address(_))
                    | (ParamType::AddressList, Value::AddressList(_))
            );
            fits.then(|| (p.name.clone(), a.clone()))
        })
        .collect()
}

impl Value {
    // The parser type-checks every expression, so a mismatch here is a bug.
    fn as_bool(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            other => panic!("expected bool, found {other:?}"),
        }
    }

    fn as_uint(&self) -> UInt {
        match self {
            Value::U256(v) => *v,
            other => panic!("expected uint256, found {other:?}"),
        }
    }

    fn as_address(&self) -> Address {
        match self {
            Value::Address(a) => *a,
            other => panic!("expected address, found {other:?}"),
        }
    }
}
