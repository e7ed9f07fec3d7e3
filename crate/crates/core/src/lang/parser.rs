use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::lexer::{tokenize, Pos, Tok, Token};
use super::*;
use crate::numeric::{ArithKind, NumericError, UInt};

const WEI_PER_ETHER: u128 = 1_000_000_000_000_000_000;

const KEYWORDS: &[&str] = &[
    "contract", "storage", "fn", "fallback", "payable", "let", "if", "else", "for", "in", "require",
    "call", "transfer", "send", "invoke", "value", "gas", "stop", "true", "false", "msg", "this",
    "address", "map", "uint256", "bool", "ether", "wei",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Syntax,
    /// Well-formed text that violates a semantic rule (duplicate names,
    /// type errors, unknown identifiers, ...).
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn syntax(pos: Pos, message: impl Into<String>) -> Self {
        ParseError {
            kind: ParseErrorKind::Syntax,
            line: pos.line,
            column: pos.column,
            message: message.into(),
        }
    }

    fn validation(pos: Pos, message: impl Into<String>) -> Self {
        ParseError {
            kind: ParseErrorKind::Validation,
            ..Self::syntax(pos, message)
        }
    }

    pub fn is_validation(&self) -> bool {
        self.kind == ParseErrorKind::Validation
    }
}

type PResult<T> = Result<T, ParseError>;

/// Parses a source file holding exactly one contract.
pub fn parse_contract(source: &str) -> PResult<Contract> {
    let mut contracts = parse_source(source)?;
    match contracts.len() {
        1 => Ok(contracts.pop().unwrap()),
        n => Err(ParseError::validation(
            Pos { line: 1, column: 1 },
            format!("expected exactly one contract, found {n}"),
        )),
    }
}

/// Parses a source file holding one or more contracts. Invocations of a
/// function defined by a contract in the same file are arity-checked.
pub fn parse_source(source: &str) -> PResult<Vec<Contract>> {
    let toks = tokenize(source)?;
    let mut p = Parser { toks, i: 0, invokes: Vec::new() };
    let mut contracts = Vec::new();
    let mut names = HashSet::new();
    loop {
        let pos = p.pos();
        if p.peek() == &Tok::Eof {
            if contracts.is_empty() {
                return Err(ParseError::syntax(pos, "expected `contract`"));
            }
            break;
        }
        let c = p.contract()?;
        if !names.insert(c.name.clone()) {
            return Err(ParseError::validation(pos, format!("duplicate contract `{}`", c.name)));
        }
        contracts.push(c);
    }
    for (name, argc, pos) in &p.invokes {
        let arities: Vec<usize> = contracts
            .iter()
            .filter_map(|c| c.function(name))
            .map(|f| f.params.len())
            .collect();
        if !arities.is_empty() && !arities.contains(argc) {
            return Err(ParseError::validation(
                *pos,
                format!("`{name}` takes {} argument(s), {argc} given", arities[0]),
            ));
        }
    }
    Ok(contracts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    U256,
    Bool,
    Address,
    AddressList,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::U256 => "uint256",
            Ty::Bool => "bool",
            Ty::Address => "address",
            Ty::AddressList => "address[]",
        })
    }
}

impl From<ParamType> for Ty {
    fn from(t: ParamType) -> Self {
        match t {
            ParamType::U256 => Ty::U256,
            ParamType::Address => Ty::Address,
            ParamType::AddressList => Ty::AddressList,
        }
    }
}

fn storage_ty(kind: StorageKind) -> Option<Ty> {
    match kind {
        StorageKind::Map => None,
        StorageKind::U256 => Some(Ty::U256),
        StorageKind::Bool => Some(Ty::Bool),
        StorageKind::Address => Some(Ty::Address),
    }
}

/// Name resolution and typing context for one entry point body.
struct Scope<'a> {
    storage: &'a HashMap<String, StorageKind>,
    params: HashMap<String, ParamType>,
    blocks: Vec<HashMap<String, Ty>>,
    declared: HashSet<String>,
    payable: bool,
}

impl Scope<'_> {
    fn local(&self, name: &str) -> Option<Ty> {
        self.blocks.iter().rev().find_map(|b| b.get(name).copied())
    }

    fn declare(&mut self, name: &str, ty: Ty, pos: Pos) -> PResult<()> {
        if self.storage.contains_key(name) || self.params.contains_key(name) || !self.declared.insert(name.to_string()) {
            return Err(ParseError::validation(pos, format!("`{name}` is already declared")));
        }
        self.blocks.last_mut().unwrap().insert(name.to_string(), ty);
        Ok(())
    }
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    invokes: Vec<(String, usize, Pos)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError::syntax(
            self.pos(),
            format!("expected {expected}, found {}", Self::describe(self.peek())),
        ))
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = self.is_sym(sym);
        if hit {
            self.bump();
        }
        hit
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        if hit {
            self.bump();
        }
        hit
    }

    fn expect_sym(&mut self, sym: &str) -> PResult<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.unexpected(&format!("`{sym}`"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok((s, pos))
            }
            _ => self.unexpected("identifier"),
        }
    }

    /// Collects `storage NAME: KIND` declarations of the contract body that
    /// starts at the current `{`, so functions may use storage declared later.
    fn prescan_storage(&self) -> HashMap<String, StorageKind> {
        let mut out = HashMap::new();
        let mut depth = 0usize;
        let mut j = self.i;
        while j < self.toks.len() {
            match &self.toks[j].tok {
                Tok::Sym("{") => depth += 1,
                Tok::Sym("}") => {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                Tok::Ident(kw) if kw == "storage" && depth == 1 => {
                    if let (Some(Tok::Ident(name)), Some(Tok::Ident(ty))) =
                        (self.toks.get(j + 1).map(|t| &t.tok), self.toks.get(j + 3).map(|t| &t.tok))
                    {
                        let kind = match ty.as_str() {
                            "map" => Some(StorageKind::Map),
                            "uint256" => Some(StorageKind::U256),
                            "bool" => Some(StorageKind::Bool),
                            "address" => Some(StorageKind::Address),
                            _ => None,
                        };
                        if let Some(kind) = kind {
                            out.entry(name.clone()).or_insert(kind);
                        }
                    }
                }
                Tok::Eof => break,
                _ => {}
            }
            j += 1;
        }
        out
    }

    fn contract(&mut self) -> PResult<Contract> {
        self.expect_kw("contract")?;
        let (name, _) = self.ident()?;
        if !self.is_sym("{") {
            return self.unexpected("`{`");
        }
        let storage_map = self.prescan_storage();
        self.bump();

        let mut contract = Contract {
            name,
            storage: Vec::new(),
            functions: Vec::new(),
            fallback: None,
        };
        loop {
            let pos = self.pos();
            if self.eat_sym("}") {
                break;
            }
            if self.eat_kw("storage") {
                let (name, npos) = self.ident()?;
                self.expect_sym(":")?;
                let kind = self.storage_kind()?;
                self.expect_sym(";")?;
                if contract.storage.iter().any(|d| d.name == name) {
                    return Err(ParseError::validation(npos, format!("duplicate storage `{name}`")));
                }
                contract.storage.push(StorageDecl { name, kind });
            } else if self.eat_kw("fallback") {
                let payable = self.eat_kw("payable");
                if self.is_sym("(") {
                    return Err(ParseError::validation(self.pos(), "fallback takes no parameters"));
                }
                let body = self.entry_body(&storage_map, HashMap::new(), payable)?;
                if contract.fallback.is_some() {
                    return Err(ParseError::validation(pos, "duplicate fallback"));
                }
                contract.fallback = Some(Fallback { payable, body });
            } else if self.is_kw("payable") || self.is_kw("fn") {
                let payable = self.eat_kw("payable");
                self.expect_kw("fn")?;
                let (fname, fpos) = self.ident()?;
                if contract.function(&fname).is_some() {
                    return Err(ParseError::validation(fpos, format!("duplicate function `{fname}`")));
                }
                let params = self.params(&storage_map)?;
                let param_map = params.iter().map(|p| (p.name.clone(), p.ty)).collect();
                let body = self.entry_body(&storage_map, param_map, payable)?;
                contract.functions.push(Function { name: fname, params, payable, body });
            } else {
                return self.unexpected("`storage`, `fn`, `payable`, `fallback` or `}`");
            }
        }
        Ok(contract)
    }

    fn storage_kind(&mut self) -> PResult<StorageKind> {
        if self.eat_kw("map") {
            self.expect_sym("(")?;
            self.expect_kw("address")?;
            self.expect_sym("=>")?;
            self.expect_kw("uint256")?;
            self.expect_sym(")")?;
            Ok(StorageKind::Map)
        } else if self.eat_kw("uint256") {
            Ok(StorageKind::U256)
        } else if self.eat_kw("bool") {
            Ok(StorageKind::Bool)
        } else if self.eat_kw("address") {
            Ok(StorageKind::Address)
        } else {
            self.unexpected("storage type")
        }
    }

    fn params(&mut self, storage: &HashMap<String, StorageKind>) -> PResult<Vec<Param>> {
        self.expect_sym("(")?;
        let mut params: Vec<Param> = Vec::new();
        if !self.eat_sym(")") {
            loop {
                let (name, pos) = self.ident()?;
                if params.iter().any(|p| p.name == name) || storage.contains_key(&name) {
                    return Err(ParseError::validation(pos, format!("`{name}` is already declared")));
                }
                self.expect_sym(":")?;
                let ty = if self.eat_kw("uint256") {
                    ParamType::U256
                } else if self.eat_kw("address") {
                    if self.eat_sym("[") {
                        self.expect_sym("]")?;
                        ParamType::AddressList
                    } else {
                        ParamType::Address
                    }
                } else {
                    return self.unexpected("parameter type");
                };
                params.push(Param { name, ty });
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        Ok(params)
    }

    fn entry_body(
        &mut self,
        storage: &HashMap<String, StorageKind>,
        params: HashMap<String, ParamType>,
        payable: bool,
    ) -> PResult<Vec<Stmt>> {
        let mut scope = Scope {
            storage,
            params,
            blocks: Vec::new(),
            declared: HashSet::new(),
            payable,
        };
        self.block(&mut scope)
    }

    fn block(&mut self, scope: &mut Scope) -> PResult<Vec<Stmt>> {
        self.expect_sym("{")?;
        scope.blocks.push(HashMap::new());
        let mut stmts = Vec::new();
        while !self.eat_sym("}") {
            stmts.push(self.stmt(scope)?);
        }
        scope.blocks.pop();
        Ok(stmts)
    }

    fn typed(&mut self, scope: &Scope, want: Ty) -> PResult<Expr> {
        let pos = self.pos();
        let (e, ty) = self.expr(scope)?;
        if ty != want {
            return Err(ParseError::validation(pos, format!("expected {want}, found {ty}")));
        }
        Ok(e)
    }

    fn value_clause(&mut self, scope: &Scope) -> PResult<Expr> {
        self.expect_kw("value")?;
        self.expect_sym("=")?;
        self.typed(scope, Ty::U256)
    }

    fn result_clause(&mut self, scope: &mut Scope, required: bool) -> PResult<Option<String>> {
        if self.eat_sym("->") {
            let (name, pos) = self.ident()?;
            scope.declare(&name, Ty::Bool, pos)?;
            Ok(Some(name))
        } else if required {
            self.unexpected("`->`")
        } else {
            Ok(None)
        }
    }

    fn stmt(&mut self, scope: &mut Scope) -> PResult<Stmt> {
        let word = match self.peek() {
            Tok::Ident(w) => w.clone(),
            _ => return self.unexpected("statement"),
        };
        let stmt = match word.as_str() {
            "require" => {
                self.bump();
                self.expect_sym("(")?;
                let cond = self.typed(scope, Ty::Bool)?;
                self.expect_sym(")")?;
                Stmt::Require(cond)
            }
            "let" => {
                self.bump();
                let (name, npos) = self.ident()?;
                self.expect_sym("=")?;
                let (value, ty) = self.expr(scope)?;
                if ty == Ty::AddressList {
                    return Err(ParseError::validation(npos, "address lists cannot be bound to locals"));
                }
                scope.declare(&name, ty, npos)?;
                Stmt::Let { name, value }
            }
            "if" => return self.if_stmt(scope),
            "for" => {
                self.bump();
                let (var, vpos) = self.ident()?;
                self.expect_kw("in")?;
                let (list, lpos) = self.ident()?;
                if scope.params.get(&list) != Some(&ParamType::AddressList) {
                    return Err(ParseError::validation(
                        lpos,
                        format!("`{list}` is not an address[] parameter"),
                    ));
                }
                scope.declare(&var, Ty::Address, vpos)?;
                // The loop variable is only visible inside the body.
                let ty = scope.blocks.last_mut().unwrap().remove(&var).unwrap();
                self.expect_sym("{")?;
                scope.blocks.push(HashMap::from([(var.clone(), ty)]));
                let mut body = Vec::new();
                while !self.eat_sym("}") {
                    body.push(self.stmt(scope)?);
                }
                scope.blocks.pop();
                return Ok(Stmt::ForEach { var, list, body });
            }
            "call" => {
                self.bump();
                let target = self.typed(scope, Ty::Address)?;
                let value = self.value_clause(scope)?;
                let gas = if self.eat_kw("gas") {
                    self.expect_sym("=")?;
                    Some(self.typed(scope, Ty::U256)?)
                } else {
                    None
                };
                let result = self.result_clause(scope, false)?;
                Stmt::Call { target, value, gas, result }
            }
            "transfer" => {
                self.bump();
                let target = self.typed(scope, Ty::Address)?;
                let value = self.value_clause(scope)?;
                Stmt::Transfer { target, value }
            }
            "send" => {
                self.bump();
                let target = self.typed(scope, Ty::Address)?;
                let value = self.value_clause(scope)?;
                let result = self.result_clause(scope, true)?.unwrap();
                Stmt::Send { target, value, result }
            }
            "invoke" => {
                self.bump();
                let tpos = self.pos();
                let (target, ty) = self.atom(scope)?;
                if ty != Ty::Address {
                    return Err(ParseError::validation(tpos, format!("expected address, found {ty}")));
                }
                self.expect_sym(".")?;
                let (function, fpos) = self.ident()?;
                self.expect_sym("(")?;
                let mut args = Vec::new();
                if !self.eat_sym(")") {
                    loop {
                        args.push(self.expr(scope)?.0);
                        if self.eat_sym(")") {
                            break;
                        }
                        self.expect_sym(",")?;
                    }
                }
                self.invokes.push((function.clone(), args.len(), fpos));
                let value = self.value_clause(scope)?;
                let result = self.result_clause(scope, false)?;
                Stmt::Invoke { target, function, args, value, result }
            }
            "stop" => {
                self.bump();
                Stmt::Stop
            }
            _ => {
                let (name, npos) = self.ident()?;
                let target = if self.eat_sym("[") {
                    if scope.storage.get(&name) != Some(&StorageKind::Map) {
                        return Err(ParseError::validation(npos, format!("`{name}` is not a mapping")));
                    }
                    let key = self.typed(scope, Ty::Address)?;
                    self.expect_sym("]")?;
                    LValue::MapEntry { map: name, key }
                } else {
                    if scope.local(&name).is_some() {
                        return Err(ParseError::validation(npos, format!("local `{name}` is write-once")));
                    }
                    if scope.params.contains_key(&name) {
                        return Err(ParseError::validation(npos, format!("parameter `{name}` is read-only")));
                    }
                    match scope.storage.get(&name) {
                        None => return Err(ParseError::validation(npos, format!("unknown identifier `{name}`"))),
                        Some(StorageKind::Map) => {
                            return Err(ParseError::validation(npos, format!("mapping `{name}` needs a key")))
                        }
                        Some(_) => LValue::Storage(name),
                    }
                };
                let want = match &target {
                    LValue::MapEntry { .. } => Ty::U256,
                    LValue::Storage(n) => storage_ty(scope.storage[n]).unwrap(),
                };
                self.expect_sym("=")?;
                let value = self.typed(scope, want)?;
                Stmt::Assign { target, value }
            }
        };
        if !self.is_sym(";") {
            return Err(ParseError::syntax(
                self.pos(),
                format!("expected `;` after {} statement, found {}", stmt.kind_name(), Self::describe(self.peek())),
            ));
        }
        self.bump();
        Ok(stmt)
    }

    fn if_stmt(&mut self, scope: &mut Scope) -> PResult<Stmt> {
        self.expect_kw("if")?;
        let cond = self.typed(scope, Ty::Bool)?;
        let then_branch = self.block(scope)?;
        let else_branch = if self.eat_kw("else") {
            if self.is_kw("if") {
                scope.blocks.push(HashMap::new());
                let nested = self.if_stmt(scope)?;
                scope.blocks.pop();
                vec![nested]
            } else {
                self.block(scope)?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If { cond, then_branch, else_branch })
    }

    fn expr(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        self.or_expr(scope)
    }

    fn bool_operand(&mut self, scope: &Scope, f: fn(&mut Self, &Scope) -> PResult<(Expr, Ty)>) -> PResult<Expr> {
        let pos = self.pos();
        let (e, ty) = f(self, scope)?;
        if ty != Ty::Bool {
            return Err(ParseError::validation(pos, format!("expected bool, found {ty}")));
        }
        Ok(e)
    }

    fn or_expr(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        let (mut lhs, ty) = self.and_expr(scope)?;
        if !self.is_sym("||") {
            return Ok((lhs, ty));
        }
        if ty != Ty::Bool {
            return Err(ParseError::validation(pos, format!("expected bool, found {ty}")));
        }
        while self.eat_sym("||") {
            let rhs = self.bool_operand(scope, Self::and_expr)?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, Ty::Bool))
    }

    fn and_expr(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        let (mut lhs, ty) = self.not_expr(scope)?;
        if !self.is_sym("&&") {
            return Ok((lhs, ty));
        }
        if ty != Ty::Bool {
            return Err(ParseError::validation(pos, format!("expected bool, found {ty}")));
        }
        while self.eat_sym("&&") {
            let rhs = self.bool_operand(scope, Self::not_expr)?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, Ty::Bool))
    }

    fn not_expr(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        if self.eat_sym("!") {
            let inner = self.bool_operand(scope, Self::not_expr)?;
            return Ok((Expr::Not(Box::new(inner)), Ty::Bool));
        }
        self.cmp_expr(scope)
    }

    fn cmp_expr(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        let (lhs, lty) = self.add_expr(scope)?;
        let op = match self.peek() {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym("==") => CmpOp::Eq,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym(">") => CmpOp::Gt,
            _ => return Ok((lhs, lty)),
        };
        self.bump();
        let rpos = self.pos();
        let (rhs, rty) = self.add_expr(scope)?;
        if op == CmpOp::Eq {
            if lty == Ty::AddressList {
                return Err(ParseError::validation(pos, "address lists cannot be compared"));
            }
            if rty != lty {
                return Err(ParseError::validation(rpos, format!("expected {lty}, found {rty}")));
            }
        } else {
            if lty != Ty::U256 {
                return Err(ParseError::validation(pos, format!("expected uint256, found {lty}")));
            }
            if rty != Ty::U256 {
                return Err(ParseError::validation(rpos, format!("expected uint256, found {rty}")));
            }
        }
        if matches!(self.peek(), Tok::Sym("<" | "<=" | "==" | ">=" | ">")) {
            return Err(ParseError::syntax(self.pos(), "comparisons cannot be chained"));
        }
        Ok((Expr::Cmp { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, Ty::Bool))
    }

    fn arith_operand(&mut self, scope: &Scope, f: fn(&mut Self, &Scope) -> PResult<(Expr, Ty)>) -> PResult<Expr> {
        let pos = self.pos();
        let (e, ty) = f(self, scope)?;
        if ty != Ty::U256 {
            return Err(ParseError::validation(pos, format!("expected uint256, found {ty}")));
        }
        Ok(e)
    }

    fn add_expr(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        let (mut lhs, ty) = self.mul_expr(scope)?;
        let mut ty = ty;
        loop {
            let kind = match self.peek() {
                Tok::Sym("+") => ArithKind::Add,
                Tok::Sym("-") => ArithKind::Sub,
                _ => return Ok((lhs, ty)),
            };
            if ty != Ty::U256 {
                return Err(ParseError::validation(pos, format!("expected uint256, found {ty}")));
            }
            self.bump();
            let rhs = self.arith_operand(scope, Self::mul_expr)?;
            lhs = Expr::Arith { kind, checked: false, lhs: Box::new(lhs), rhs: Box::new(rhs) };
            ty = Ty::U256;
        }
    }

    fn mul_expr(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        let (mut lhs, mut ty) = self.postfix(scope)?;
        while self.is_sym("*") {
            if ty != Ty::U256 {
                return Err(ParseError::validation(pos, format!("expected uint256, found {ty}")));
            }
            self.bump();
            let rhs = self.arith_operand(scope, Self::postfix)?;
            lhs = Expr::Arith { kind: ArithKind::Mul, checked: false, lhs: Box::new(lhs), rhs: Box::new(rhs) };
            ty = Ty::U256;
        }
        Ok((lhs, ty))
    }

    fn postfix(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        let base_pos = self.pos();
        let (mut e, mut ty) = self.atom(scope)?;
        while self.is_sym(".") {
            self.bump();
            let mpos = self.pos();
            let member = match self.bump().tok {
                Tok::Ident(m) => m,
                other => {
                    return Err(ParseError::syntax(mpos, format!("expected member name, found {}", Self::describe(&other))))
                }
            };
            (e, ty) = match member.as_str() {
                "add" | "sub" | "mul" => {
                    let kind = match member.as_str() {
                        "add" => ArithKind::Add,
                        "sub" => ArithKind::Sub,
                        _ => ArithKind::Mul,
                    };
                    if ty != Ty::U256 {
                        return Err(ParseError::validation(base_pos, format!("expected uint256, found {ty}")));
                    }
                    self.expect_sym("(")?;
                    let rhs = self.typed(scope, Ty::U256)?;
                    self.expect_sym(")")?;
                    (Expr::Arith { kind, checked: true, lhs: Box::new(e), rhs: Box::new(rhs) }, Ty::U256)
                }
                "balance" => match (e, ty) {
                    (Expr::This, _) => (Expr::ThisBalance, Ty::U256),
                    (e, Ty::Address) => (Expr::BalanceOf(Box::new(e)), Ty::U256),
                    (_, ty) => {
                        return Err(ParseError::validation(base_pos, format!("expected address, found {ty}")))
                    }
                },
                "length" => match e {
                    Expr::Param(name) if ty == Ty::AddressList => (Expr::ListLen(name), Ty::U256),
                    _ => return Err(ParseError::validation(base_pos, "`.length` needs an address[] parameter")),
                },
                other => return Err(ParseError::validation(mpos, format!("unknown member `{other}`"))),
            };
        }
        Ok((e, ty))
    }

    /// Literals, names, `msg.*`, `this` and parenthesised expressions.
    fn atom(&mut self, scope: &Scope) -> PResult<(Expr, Ty)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Number(text) => {
                self.bump();
                let mut v = UInt::parse(256, &text).map_err(|e| match e {
                    NumericError::OutOfRange { .. } => {
                        ParseError::validation(pos, format!("literal `{text}` does not fit in uint256"))
                    }
                    _ => ParseError::syntax(pos, format!("invalid number `{text}`")),
                })?;
                if self.eat_kw("ether") {
                    v = crate::numeric::checked_arith(ArithKind::Mul, v, UInt::u256(WEI_PER_ETHER))
                        .map_err(|_| ParseError::validation(pos, format!("`{text} ether` does not fit in uint256")))?;
                } else {
                    self.eat_kw("wei");
                }
                Ok((Expr::Uint(v), Ty::U256))
            }
            Tok::Sym("(") => {
                self.bump();
                let inner = self.expr(scope)?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Tok::Ident(w) => match w.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok((Expr::Bool(w == "true"), Ty::Bool))
                }
                "msg" => {
                    self.bump();
                    self.expect_sym(".")?;
                    let mpos = self.pos();
                    if self.eat_kw("value") {
                        if !scope.payable {
                            return Err(ParseError::validation(
                                mpos,
                                "`msg.value` used in a non-payable entry point",
                            ));
                        }
                        Ok((Expr::MsgValue, Ty::U256))
                    } else if matches!(self.peek(), Tok::Ident(s) if s == "sender") {
                        self.bump();
                        Ok((Expr::MsgSender, Ty::Address))
                    } else {
                        self.unexpected("`sender` or `value`")
                    }
                }
                "this" => {
                    self.bump();
                    Ok((Expr::This, Ty::Address))
                }
                "address" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let apos = self.pos();
                    let lit = match self.bump().tok {
                        Tok::Number(n) => n
                            .strip_prefix("0x")
                            .and_then(Address::from_hex_digits)
                            .ok_or_else(|| ParseError::syntax(apos, format!("invalid address literal `{n}`")))?,
                        other => {
                            return Err(ParseError::syntax(
                                apos,
                                format!("expected hex address, found {}", Self::describe(&other)),
                            ))
                        }
                    };
                    self.expect_sym(")")?;
                    Ok((Expr::Address(lit), Ty::Address))
                }
                _ => {
                    let (name, npos) = self.ident()?;
                    if self.is_sym("[") {
                        if scope.storage.get(&name) != Some(&StorageKind::Map) {
                            return Err(ParseError::validation(npos, format!("`{name}` is not a mapping")));
                        }
                        self.bump();
                        let key = self.typed(scope, Ty::Address)?;
                        self.expect_sym("]")?;
                        return Ok((Expr::MapRead { map: name, key: Box::new(key) }, Ty::U256));
                    }
                    if let Some(ty) = scope.local(&name) {
                        return Ok((Expr::Local(name), ty));
                    }
                    if let Some(ty) = scope.params.get(&name) {
                        return Ok((Expr::Param(name), (*ty).into()));
                    }
                    match scope.storage.get(&name) {
                        Some(StorageKind::Map) => {
                            Err(ParseError::validation(npos, format!("mapping `{name}` needs a key")))
                        }
                        Some(kind) => Ok((Expr::Storage(name), storage_ty(*kind).unwrap())),
                        None => Err(ParseError::validation(npos, format!("unknown identifier `{name}`"))),
                    }
                }
            },
            _ => self.unexpected("expression"),
        }
    }
}
