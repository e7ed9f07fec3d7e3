use exploitlab_core::lang::{
    parse_contract, parse_source, pretty_print, CmpOp, Contract, Expr, Fallback, Function, LValue, Param, ParamType,
    ParseErrorKind, StorageDecl, StorageKind, Stmt,
};
use exploitlab_core::scenarios::{builtin_fixture, fixture_names};
use exploitlab_core::{Address, ArithKind, UInt};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fixtures_round_trip() {
    for name in fixture_names() {
        let c = parse_contract(builtin_fixture(name).unwrap()).unwrap();
        let printed = pretty_print(&c);
        assert_eq!(parse_contract(&printed).unwrap(), c, "{name}");
        // Printing is a fixed point after one pass.
        assert_eq!(pretty_print(&parse_contract(&printed).unwrap()), printed, "{name}");
    }
}

const EVERY_STATEMENT: &str = r#"
contract Everything {
    storage owner: address;
    storage total: uint256;
    storage open: bool;
    storage balances: map(address => uint256);

    payable fn all(to: address, xs: address[], n: uint256) {
        require(open && !(n == 0) || msg.sender == owner);
        let before = this.balance;
        total = total.add(n * 2 - 1);
        balances[to] = balances[to].sub(n).mul(3);
        if (n > 10) {
            stop;
        } else if (n >= 5) {
            open = false;
        } else {
            owner = msg.sender;
        }
        for x in xs {
            balances[x] = xs.length + msg.value;
        }
        call to value=1 ether gas=2300 -> ok;
        call to value=0;
        transfer to value=n;
        send to value=before -> sent;
        invoke (to).poke(n, ok, 0x0000000000000000000000000000000000000001) value=0 -> done;
        invoke this.all(to, xs, to.balance) value=0;
    }

    fallback payable {}
}
"#;

#[test]
fn every_statement_kind_round_trips() {
    let c = parse_contract(EVERY_STATEMENT).unwrap();
    let kinds: Vec<_> = c.functions[0].body.iter().map(Stmt::kind_name).collect();
    for kind in ["require", "let", "assign", "if", "for", "call", "transfer", "send", "invoke"] {
        assert!(kinds.contains(&kind), "{kind}");
    }
    assert_eq!(parse_contract(&pretty_print(&c)).unwrap(), c);
}

#[test]
fn syntax_error_points_into_source() {
    let src = "contract A {\n    fn f() {\n        let x = ;\n    }\n}\n";
    let e = parse_contract(src).unwrap_err();
    assert_eq!(e.kind, ParseErrorKind::Syntax);
    assert_eq!((e.line, e.column), (3, 17));
    assert!(e.to_string().starts_with("3:17:"));
}

#[test]
fn duplicate_function_is_a_validation_error() {
    let src = "contract A {\n    fn f() {}\n    fn f() {}\n}\n";
    let e = parse_contract(src).unwrap_err();
    assert!(e.is_validation());
    assert_eq!(e.line, 3);
    assert!(e.message.contains("duplicate function"));
}

#[test]
fn validation_errors_have_positions() {
    let cases = [
        ("contract A {\n    fn f() { x = 1; }\n}\n", 2),
        ("contract A {\n    fn f() {\n        let a = msg.value;\n    }\n}\n", 3),
        ("contract A {\n    storage b: bool;\n    fn f() { b = 1; }\n}\n", 3),
        ("contract A {\n    fn f() {\n        let a = 1;\n        let a = 2;\n    }\n}\n", 4),
    ];
    for (src, line) in cases {
        let e = parse_contract(src).unwrap_err();
        assert!(e.is_validation(), "{src}: {e}");
        assert_eq!(e.line, line, "{src}: {e}");
        assert!(e.column >= 1);
    }
}

#[test]
fn invoke_arity_is_checked_within_a_file() {
    let ok = "contract A { fn f(x: uint256) {} }\ncontract B { fn g() { invoke this.f(1) value=0; } }";
    assert_eq!(parse_source(ok).unwrap().len(), 2);
    let bad = "contract A { fn f(x: uint256) {} }\ncontract B { fn g() { invoke this.f() value=0; } }";
    let e = parse_source(bad).unwrap_err();
    assert!(e.is_validation());
    assert_eq!(e.line, 2);
    assert!(parse_contract(ok).unwrap_err().is_validation());
}

#[test]
fn empty_input_is_a_syntax_error() {
    assert_eq!(parse_source("").unwrap_err().kind, ParseErrorKind::Syntax);
}

/// Builds random contracts that the parser must accept.
struct Gen {
    rng: ChaCha8Rng,
    storage: Vec<StorageDecl>,
    params: Vec<Param>,
    locals: Vec<Vec<(String, Ty)>>,
    payable: bool,
    fresh: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Ty {
    U256,
    Bool,
    Address,
}

impl Gen {
    fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            storage: Vec::new(),
            params: Vec::new(),
            locals: Vec::new(),
            payable: false,
            fresh: 0,
        }
    }

    fn name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn contract(&mut self) -> Contract {
        let kinds = [StorageKind::Map, StorageKind::U256, StorageKind::Bool, StorageKind::Address];
        self.storage = (0..self.rng.gen_range(0..5))
            .map(|i| StorageDecl { name: format!("s{i}"), kind: *kinds.choose(&mut self.rng).unwrap() })
            .collect();
        let functions = (0..self.rng.gen_range(0..4))
            .map(|i| {
                let types = [ParamType::U256, ParamType::Address, ParamType::AddressList];
                let params: Vec<Param> = (0..self.rng.gen_range(0..4))
                    .map(|j| Param { name: format!("p{j}"), ty: *types.choose(&mut self.rng).unwrap() })
                    .collect();
                let payable = self.rng.gen_bool(0.5);
                let body = self.entry(params.clone(), payable);
                Function { name: format!("f{i}"), params, payable, body }
            })
            .collect();
        let fallback = self.rng.gen_bool(0.5).then(|| {
            let payable = self.rng.gen_bool(0.5);
            Fallback { payable, body: self.entry(Vec::new(), payable) }
        });
        Contract { name: "Generated".into(), storage: self.storage.clone(), functions, fallback }
    }

    fn entry(&mut self, params: Vec<Param>, payable: bool) -> Vec<Stmt> {
        self.params = params;
        self.payable = payable;
        self.fresh = 0;
        self.block(3)
    }

    fn block(&mut self, depth: usize) -> Vec<Stmt> {
        self.locals.push(Vec::new());
        let body = (0..self.rng.gen_range(0..4)).map(|_| self.stmt(depth)).collect();
        self.locals.pop();
        body
    }

    fn bind(&mut self, ty: Ty) -> String {
        let name = self.name("v");
        self.locals.last_mut().unwrap().push((name.clone(), ty));
        name
    }

    fn storage_of(&self, kind: StorageKind) -> Vec<String> {
        self.storage.iter().filter(|d| d.kind == kind).map(|d| d.name.clone()).collect()
    }

    fn params_of(&self, ty: ParamType) -> Vec<String> {
        self.params.iter().filter(|p| p.ty == ty).map(|p| p.name.clone()).collect()
    }

    fn stmt(&mut self, depth: usize) -> Stmt {
        loop {
            let s = match self.rng.gen_range(0..12) {
                0 => Stmt::Require(self.expr(Ty::Bool, 2)),
                1 => {
                    let kind = *[StorageKind::U256, StorageKind::Bool, StorageKind::Address]
                        .choose(&mut self.rng)
                        .unwrap();
                    let Some(var) = self.storage_of(kind).choose(&mut self.rng).cloned() else { continue };
                    let ty = match kind {
                        StorageKind::U256 => Ty::U256,
                        StorageKind::Bool => Ty::Bool,
                        _ => Ty::Address,
                    };
                    Stmt::Assign { target: LValue::Storage(var), value: self.expr(ty, 2) }
                }
                2 => {
                    let Some(map) = self.storage_of(StorageKind::Map).choose(&mut self.rng).cloned() else { continue };
                    let key = self.expr(Ty::Address, 1);
                    Stmt::Assign { target: LValue::MapEntry { map, key }, value: self.expr(Ty::U256, 2) }
                }
                3 => {
                    let ty = *[Ty::U256, Ty::Bool, Ty::Address].choose(&mut self.rng).unwrap();
                    let value = self.expr(ty, 2);
                    Stmt::Let { name: self.bind(ty), value }
                }
                4 if depth > 0 => {
                    let cond = self.expr(Ty::Bool, 2);
                    let then_branch = self.block(depth - 1);
                    let else_branch = if self.rng.gen_bool(0.5) { self.block(depth - 1) } else { Vec::new() };
                    Stmt::If { cond, then_branch, else_branch }
                }
                5 if depth > 0 => {
                    let Some(list) = self.params_of(ParamType::AddressList).choose(&mut self.rng).cloned() else {
                        continue;
                    };
                    let var = self.name("x");
                    self.locals.push(vec![(var.clone(), Ty::Address)]);
                    let body = self.block(depth - 1);
                    self.locals.pop();
                    Stmt::ForEach { var, list, body }
                }
                6 => {
                    let target = self.expr(Ty::Address, 1);
                    let value = self.expr(Ty::U256, 1);
                    let gas = self.rng.gen_bool(0.5).then(|| self.expr(Ty::U256, 1));
                    let result = self.rng.gen_bool(0.5).then(|| self.bind(Ty::Bool));
                    Stmt::Call { target, value, gas, result }
                }
                7 => Stmt::Transfer { target: self.expr(Ty::Address, 1), value: self.expr(Ty::U256, 1) },
                8 => {
                    let target = self.expr(Ty::Address, 1);
                    let value = self.expr(Ty::U256, 1);
                    Stmt::Send { target, value, result: self.bind(Ty::Bool) }
                }
                9 => {
                    let target = self.expr(Ty::Address, 0);
                    let function = format!("ext{}", self.rng.gen_range(0..3));
                    let args = (0..self.rng.gen_range(0..3))
                        .map(|_| {
                            let ty = *[Ty::U256, Ty::Bool, Ty::Address].choose(&mut self.rng).unwrap();
                            self.expr(ty, 1)
                        })
                        .collect();
                    let value = self.expr(Ty::U256, 1);
                    let result = self.rng.gen_bool(0.5).then(|| self.bind(Ty::Bool));
                    Stmt::Invoke { target, function, args, value, result }
                }
                10 => Stmt::Stop,
                _ => continue,
            };
            return s;
        }
    }

    fn leaf(&mut self, ty: Ty) -> Expr {
        let mut options: Vec<Expr> = self
            .locals
            .iter()
            .flatten()
            .filter(|(_, t)| *t == ty)
            .map(|(n, _)| Expr::Local(n.clone()))
            .collect();
        match ty {
            Ty::U256 => {
                let v = match self.rng.gen_range(0..4) {
                    0 => UInt::u256(self.rng.gen_range(0..100)),
                    1 => UInt::u256(self.rng.gen_range(1..50) * 1_000_000_000_000_000_000),
                    2 => UInt::u256_from_limbs([u64::MAX; 4]),
                    _ => UInt::u256_from_limbs(self.rng.gen()),
                };
                options.push(Expr::Uint(v));
                options.push(Expr::ThisBalance);
                options.extend(self.storage_of(StorageKind::U256).into_iter().map(Expr::Storage));
                options.extend(self.params_of(ParamType::U256).into_iter().map(Expr::Param));
                options.extend(self.params_of(ParamType::AddressList).into_iter().map(Expr::ListLen));
                if self.payable {
                    options.push(Expr::MsgValue);
                }
            }
            Ty::Bool => {
                options.push(Expr::Bool(self.rng.gen()));
                options.extend(self.storage_of(StorageKind::Bool).into_iter().map(Expr::Storage));
            }
            Ty::Address => {
                options.push(Expr::Address(Address::from_label(&self.rng.gen::<u32>().to_string())));
                options.push(Expr::MsgSender);
                options.push(Expr::This);
                options.extend(self.storage_of(StorageKind::Address).into_iter().map(Expr::Storage));
                options.extend(self.params_of(ParamType::Address).into_iter().map(Expr::Param));
            }
        }
        let i = self.rng.gen_range(0..options.len());
        options.swap_remove(i)
    }

    fn expr(&mut self, ty: Ty, depth: usize) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.3) {
            return self.leaf(ty);
        }
        let d = depth - 1;
        match ty {
            Ty::U256 => match self.rng.gen_range(0..3) {
                0 => Expr::Arith {
                    kind: *ArithKind::ALL.choose(&mut self.rng).unwrap(),
                    checked: self.rng.gen(),
                    lhs: Box::new(self.expr(Ty::U256, d)),
                    rhs: Box::new(self.expr(Ty::U256, d)),
                },
                1 => match self.storage_of(StorageKind::Map).choose(&mut self.rng).cloned() {
                    Some(map) => Expr::MapRead { map, key: Box::new(self.expr(Ty::Address, d)) },
                    None => self.leaf(ty),
                },
                // `this.balance` parses to the dedicated node.
                _ => match self.expr(Ty::Address, d) {
                    Expr::This => Expr::ThisBalance,
                    target => Expr::BalanceOf(Box::new(target)),
                },
            },
            Ty::Bool => match self.rng.gen_range(0..5) {
                0 => {
                    let ops = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ge, CmpOp::Gt];
                    Expr::Cmp {
                        op: *ops.choose(&mut self.rng).unwrap(),
                        lhs: Box::new(self.expr(Ty::U256, d)),
                        rhs: Box::new(self.expr(Ty::U256, d)),
                    }
                }
                1 => {
                    let operand = *[Ty::Bool, Ty::Address].choose(&mut self.rng).unwrap();
                    Expr::Cmp {
                        op: CmpOp::Eq,
                        lhs: Box::new(self.expr(operand, d)),
                        rhs: Box::new(self.expr(operand, d)),
                    }
                }
                2 => Expr::And(Box::new(self.expr(Ty::Bool, d)), Box::new(self.expr(Ty::Bool, d))),
                3 => Expr::Or(Box::new(self.expr(Ty::Bool, d)), Box::new(self.expr(Ty::Bool, d))),
                _ => Expr::Not(Box::new(self.expr(Ty::Bool, d))),
            },
            Ty::Address => self.leaf(ty),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn generated_contracts_round_trip(seed in any::<u64>()) {
        let c = Gen::new(seed).contract();
        let printed = pretty_print(&c);
        let parsed = parse_contract(&printed).map_err(|e| TestCaseError::fail(format!("{e}\n{printed}")))?;
        prop_assert_eq!(parsed, c, "{}", printed);
    }
}
