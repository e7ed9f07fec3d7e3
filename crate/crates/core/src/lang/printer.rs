use std::fmt::Write;

use super::*;

const INDENT: &str = "    ";
const WEI_PER_ETHER: u128 = 1_000_000_000_000_000_000;

/// Canonical source text for a contract. `parse_contract` of the output is
/// structurally equal to the input.
pub fn pretty_print(c: &Contract) -> String {
    let mut out = String::new();
    if c.storage.is_empty() && c.functions.is_empty() && c.fallback.is_none() {
        let _ = writeln!(out, "contract {} {{}}", c.name);
        return out;
    }
    let _ = writeln!(out, "contract {} {{", c.name);
    let mut sections: Vec<String> = Vec::new();
    if !c.storage.is_empty() {
        let mut s = String::new();
        for d in &c.storage {
            let kind = match d.kind {
                StorageKind::Map => "map(address => uint256)",
                StorageKind::U256 => "uint256",
                StorageKind::Bool => "bool",
                StorageKind::Address => "address",
            };
            let _ = writeln!(s, "{INDENT}storage {}: {kind};", d.name);
        }
        sections.push(s);
    }
    for f in &c.functions {
        let params: Vec<String> = f
            .params
            .iter()
            .map(|p| {
                let ty = match p.ty {
                    ParamType::U256 => "uint256",
                    ParamType::Address => "address",
                    ParamType::AddressList => "address[]",
                };
                format!("{}: {ty}", p.name)
            })
            .collect();
        let mut s = String::new();
        let payable = if f.payable { "payable " } else { "" };
        let _ = write!(s, "{INDENT}{payable}fn {}({}) ", f.name, params.join(", "));
        block(&mut s, &f.body, 1);
        s.push('\n');
        sections.push(s);
    }
    if let Some(fb) = &c.fallback {
        let mut s = String::new();
        let payable = if fb.payable { " payable" } else { "" };
        let _ = write!(s, "{INDENT}fallback{payable} ");
        block(&mut s, &fb.body, 1);
        s.push('\n');
        sections.push(s);
    }
    out.push_str(&sections.join("\n"));
    out.push_str("}\n");
    out
}

/// One-line rendering of a statement. Compound statements show only their
/// header.
pub fn statement_head(s: &Stmt) -> String {
    match s {
        Stmt::If { cond, .. } => format!("if ({})", expr(cond)),
        Stmt::ForEach { var, list, .. } => format!("for {var} in {list}"),
        _ => {
            let mut out = String::new();
            stmt(&mut out, s, 0);
            out.trim_end().trim_end_matches(';').to_string()
        }
    }
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    if stmts.is_empty() {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    for s in stmts {
        stmt(out, s, depth + 1);
    }
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    let pad = INDENT.repeat(depth);
    out.push_str(&pad);
    match s {
        Stmt::Require(e) => {
            let _ = write!(out, "require({})", expr(e));
        }
        Stmt::Assign { target, value } => match target {
            LValue::Storage(name) => {
                let _ = write!(out, "{name} = {}", expr(value));
            }
            LValue::MapEntry { map, key } => {
                let _ = write!(out, "{map}[{}] = {}", expr(key), expr(value));
            }
        },
        Stmt::Let { name, value } => {
            let _ = write!(out, "let {name} = {}", expr(value));
        }
        Stmt::If { cond, then_branch, else_branch } => {
            if_chain(out, cond, then_branch, else_branch, depth);
            out.push('\n');
            return;
        }
        Stmt::ForEach { var, list, body } => {
            let _ = write!(out, "for {var} in {list} ");
            block(out, body, depth);
            out.push('\n');
            return;
        }
        Stmt::Call { target, value, gas, result } => {
            let _ = write!(out, "call {} value={}", expr(target), expr(value));
            if let Some(g) = gas {
                let _ = write!(out, " gas={}", expr(g));
            }
            if let Some(r) = result {
                let _ = write!(out, " -> {r}");
            }
        }
        Stmt::Transfer { target, value } => {
            let _ = write!(out, "transfer {} value={}", expr(target), expr(value));
        }
        Stmt::Send { target, value, result } => {
            let _ = write!(out, "send {} value={} -> {result}", expr(target), expr(value));
        }
        Stmt::Invoke { target, function, args, value, result } => {
            let args: Vec<String> = args.iter().map(expr).collect();
            let _ = write!(
                out,
                "invoke {}.{function}({}) value={}",
                atom(target),
                args.join(", "),
                expr(value)
            );
            if let Some(r) = result {
                let _ = write!(out, " -> {r}");
            }
        }
        Stmt::Stop => out.push_str("stop"),
    }
    out.push_str(";\n");
}

fn if_chain(out: &mut String, cond: &Expr, then_branch: &[Stmt], else_branch: &[Stmt], depth: usize) {
    let _ = write!(out, "if ({}) ", expr(cond));
    block(out, then_branch, depth);
    match else_branch {
        [] => {}
        [Stmt::If { cond, then_branch, else_branch }] => {
            out.push_str(" else ");
            if_chain(out, cond, then_branch, else_branch, depth);
        }
        _ => {
            out.push_str(" else ");
            block(out, else_branch, depth);
        }
    }
}

const P_OR: u8 = 1;
const P_AND: u8 = 2;
const P_NOT: u8 = 3;
const P_CMP: u8 = 4;
const P_ADD: u8 = 5;
const P_MUL: u8 = 6;
const P_POSTFIX: u8 = 7;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Or(..) => P_OR,
        Expr::And(..) => P_AND,
        Expr::Not(_) => P_NOT,
        Expr::Cmp { .. } => P_CMP,
        Expr::Arith { checked: false, kind: ArithKind::Mul, .. } => P_MUL,
        Expr::Arith { checked: false, .. } => P_ADD,
        _ => P_POSTFIX,
    }
}

pub(crate) fn expr(e: &Expr) -> String {
    at(e, 0)
}

/// Prints an invoke target, which the grammar restricts to an atom.
fn atom(e: &Expr) -> String {
    match e {
        Expr::Local(_) | Expr::Param(_) | Expr::Storage(_) | Expr::MsgSender | Expr::This | Expr::Address(_) => expr(e),
        _ => format!("({})", expr(e)),
    }
}

fn literal(v: &UInt) -> String {
    if let Some(n) = v.to_u128() {
        if n != 0 && n % WEI_PER_ETHER == 0 {
            return format!("{} ether", n / WEI_PER_ETHER);
        }
        if n <= u64::MAX as u128 {
            return n.to_string();
        }
    }
    // Large values read better in hex; drop the zero padding.
    let hex = v.to_hex();
    let digits = hex[2..].trim_start_matches('0');
    format!("0x{digits}")
}

fn at(e: &Expr, min: u8) -> String {
    let text = match e {
        Expr::Uint(v) => literal(v),
        Expr::Bool(b) => b.to_string(),
        Expr::Address(a) => format!("address({a})"),
        Expr::Local(n) | Expr::Param(n) | Expr::Storage(n) => n.clone(),
        Expr::MapRead { map, key } => format!("{map}[{}]", at(key, 0)),
        Expr::MsgSender => "msg.sender".into(),
        Expr::MsgValue => "msg.value".into(),
        Expr::This => "this".into(),
        Expr::ThisBalance => "this.balance".into(),
        Expr::BalanceOf(a) => format!("{}.balance", at(a, P_POSTFIX)),
        Expr::ListLen(n) => format!("{n}.length"),
        Expr::Arith { kind, checked: true, lhs, rhs } => {
            format!("{}.{}({})", at(lhs, P_POSTFIX), kind.method(), at(rhs, 0))
        }
        Expr::Arith { kind, checked: false, lhs, rhs } => {
            let p = prec(e);
            format!("{} {} {}", at(lhs, p), kind.symbol(), at(rhs, p + 1))
        }
        Expr::Cmp { op, lhs, rhs } => format!("{} {} {}", at(lhs, P_ADD), op.symbol(), at(rhs, P_ADD)),
        Expr::And(l, r) => format!("{} && {}", at(l, P_AND), at(r, P_NOT)),
        Expr::Or(l, r) => format!("{} || {}", at(l, P_OR), at(r, P_AND)),
        Expr::Not(inner) => format!("!{}", at(inner, P_NOT)),
    };
    if prec(e) < min {
        format!("({text})")
    } else {
        text
    }
}
