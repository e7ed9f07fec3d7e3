//! The toy contract language: IR types, parser and pretty-printer.
//!
//! Every arithmetic node in the IR is 256 bits wide and carries a `checked`
//! flag. Unchecked nodes wrap silently; checked nodes (written with the
//! SafeMath method spelling, `a.add(b)`) revert on overflow.

mod lexer;
mod parser;
mod printer;

use std::fmt;

use serde::{Serialize, Serializer};

use crate::address::Address;
use crate::numeric::{ArithKind, UInt};

pub use parser::{parse_contract, parse_source, ParseError, ParseErrorKind};
pub use printer::{pretty_print, statement_head};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contract {
    pub name: String,
    pub storage: Vec<StorageDecl>,
    pub functions: Vec<Function>,
    pub fallback: Option<Fallback>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StorageKind {
    /// `mapping(address => uint256)`
    Map,
    U256,
    Bool,
    Address,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageDecl {
    pub name: String,
    pub kind: StorageKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamType {
    U256,
    Address,
    AddressList,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: ParamType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub payable: bool,
    pub body: Vec<Stmt>,
}

/// The single unnamed, parameterless entry point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fallback {
    pub payable: bool,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LValue {
    Storage(String),
    MapEntry { map: String, key: Expr },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Require(Expr),
    Assign {
        target: LValue,
        value: Expr,
    },
    Let {
        name: String,
        value: Expr,
    },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
    },
    ForEach {
        var: String,
        list: String,
        body: Vec<Stmt>,
    },
    /// Low-level call: forwards gas (optionally capped), never reverts the caller.
    Call {
        target: Expr,
        value: Expr,
        gas: Option<Expr>,
        result: Option<String>,
    },
    /// Forwards the 2300 stipend and reverts the caller on failure.
    Transfer {
        target: Expr,
        value: Expr,
    },
    /// Forwards the 2300 stipend and reports failure in `result`.
    Send {
        target: Expr,
        value: Expr,
        result: String,
    },
    /// External call of a named function.
    Invoke {
        target: Expr,
        function: String,
        args: Vec<Expr>,
        value: Expr,
        result: Option<String>,
    },
    Stop,
}

impl Stmt {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Stmt::Require(_) => "require",
            Stmt::Assign { .. } => "assign",
            Stmt::Let { .. } => "let",
            Stmt::If { .. } => "if",
            Stmt::ForEach { .. } => "for",
            Stmt::Call { .. } => "call",
            Stmt::Transfer { .. } => "transfer",
            Stmt::Send { .. } => "send",
            Stmt::Invoke { .. } => "invoke",
            Stmt::Stop => "stop",
        }
    }

    /// The value expression of an ether-moving statement.
    pub fn sent_value(&self) -> Option<&Expr> {
        match self {
            Stmt::Call { value, .. }
            | Stmt::Transfer { value, .. }
            | Stmt::Send { value, .. }
            | Stmt::Invoke { value, .. } => Some(value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Uint(UInt),
    Bool(bool),
    Address(Address),
    Local(String),
    Param(String),
    Storage(String),
    MapRead {
        map: String,
        key: Box<Expr>,
    },
    MsgSender,
    MsgValue,
    This,
    ThisBalance,
    BalanceOf(Box<Expr>),
    ListLen(String),
    Arith {
        kind: ArithKind,
        checked: bool,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Cmp {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    /// Pre-order walk over this expression and all sub-expressions.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::MapRead { key, .. } => key.visit(f),
            Expr::BalanceOf(e) | Expr::Not(e) => e.visit(f),
            Expr::Arith { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::And(l, r) | Expr::Or(l, r) => {
                l.visit(f);
                r.visit(f);
            }
            _ => {}
        }
    }

    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Uint(v) if v.is_zero())
    }
}

/// Names an entry point of a contract.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntryPoint {
    Function(String),
    Fallback,
}

impl fmt::Display for EntryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntryPoint::Function(name) => f.write_str(name),
            EntryPoint::Fallback => f.write_str("fallback"),
        }
    }
}

impl Serialize for EntryPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// One step of a statement path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    Index(usize),
    Then,
    Else,
    Body,
}

/// Structural position of a statement inside an entry point body, e.g.
/// `2.then.0` is the first statement of the then-branch of statement 2.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location(pub Vec<Step>);

impl Location {
    pub fn root(index: usize) -> Self {
        Location(vec![Step::Index(index)])
    }

    pub fn child(&self, branch: Step, index: usize) -> Self {
        let mut steps = self.0.clone();
        steps.push(branch);
        steps.push(Step::Index(index));
        Location(steps)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            match step {
                Step::Index(n) => write!(f, "{n}")?,
                Step::Then => f.write_str("then")?,
                Step::Else => f.write_str("else")?,
                Step::Body => f.write_str("body")?,
            }
        }
        Ok(())
    }
}

impl Serialize for Location {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl Contract {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn storage_kind(&self, name: &str) -> Option<StorageKind> {
        self.storage.iter().find(|d| d.name == name).map(|d| d.kind)
    }

    /// All entry points with their bodies, functions first in declaration order.
    pub fn entry_points(&self) -> Vec<(EntryPoint, &[Stmt])> {
        let mut out: Vec<(EntryPoint, &[Stmt])> = self
            .functions
            .iter()
            .map(|f| (EntryPoint::Function(f.name.clone()), f.body.as_slice()))
            .collect();
        if let Some(fb) = &self.fallback {
            out.push((EntryPoint::Fallback, fb.body.as_slice()));
        }
        out
    }

    pub fn body(&self, entry: &EntryPoint) -> Option<&[Stmt]> {
        match entry {
            EntryPoint::Function(name) => self.function(name).map(|f| f.body.as_slice()),
            EntryPoint::Fallback => self.fallback.as_ref().map(|f| f.body.as_slice()),
        }
    }

    /// Resolves a statement path.
    pub fn resolve(&self, entry: &EntryPoint, location: &Location) -> Option<&Stmt> {
        let mut block = self.body(entry)?;
        let mut current: Option<&Stmt> = None;
        for step in &location.0 {
            match (step, current) {
                (Step::Index(i), _) => current = Some(block.get(*i)?),
                (Step::Then, Some(Stmt::If { then_branch, .. })) => block = then_branch,
                (Step::Else, Some(Stmt::If { else_branch, .. })) => block = else_branch,
                (Step::Body, Some(Stmt::ForEach { body, .. })) => block = body,
                _ => return None,
            }
        }
        current.filter(|_| matches!(location.0.last(), Some(Step::Index(_))))
    }
}

/// Calls `f` for every statement in `body` (pre-order) with its location.
pub fn walk_stmts<'a>(body: &'a [Stmt], f: &mut impl FnMut(&Location, &'a Stmt)) {
    fn go<'a>(block: &'a [Stmt], parent: Option<(&Location, Step)>, f: &mut impl FnMut(&Location, &'a Stmt)) {
        for (i, stmt) in block.iter().enumerate() {
            let loc = match parent {
                Some((p, step)) => p.child(step, i),
                None => Location::root(i),
            };
            f(&loc, stmt);
            match stmt {
                Stmt::If { then_branch, else_branch, .. } => {
                    go(then_branch, Some((&loc, Step::Then)), f);
                    go(else_branch, Some((&loc, Step::Else)), f);
                }
                Stmt::ForEach { body, .. } => go(body, Some((&loc, Step::Body)), f),
                _ => {}
            }
        }
    }
    go(body, None, f)
}

/// Expressions directly owned by a statement (not those of nested blocks).
pub fn stmt_exprs(stmt: &Stmt) -> Vec<&Expr> {
    match stmt {
        Stmt::Require(e) => vec![e],
        Stmt::Assign { target, value } => match target {
            LValue::Storage(_) => vec![value],
            LValue::MapEntry { key, .. } => vec![key, value],
        },
        Stmt::Let { value, .. } => vec![value],
        Stmt::If { cond, .. } => vec![cond],
        Stmt::ForEach { .. } | Stmt::Stop => vec![],
        Stmt::Call { target, value, gas, .. } => {
            let mut v = vec![target, value];
            v.extend(gas.iter());
            v
        }
        Stmt::Transfer { target, value } | Stmt::Send { target, value, .. } => vec![target, value],
        Stmt::Invoke { target, args, value, .. } => {
            let mut v = vec![target];
            v.extend(args.iter());
            v.push(value);
            v
        }
    }
}
