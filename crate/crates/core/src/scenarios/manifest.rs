//! TOML scenario manifests.
//!
//! ```toml
//! name = "example"
//! exploit_expected = true
//!
//! [params]
//! deposit = "2 ether"
//! benign = false
//!
//! [[accounts]]
//! name = "bank"
//! contract = "bank_vulnerable"
//! balance = "0"
//!
//! [[setup]]
//! from = "alice"
//! to = "bank"
//! function = "statistis"
//! value = "${deposit}"
//!
//! [[expect]]
//! kind = "balance"
//! account = "bank"
//! op = "eq"
//! value = "2"
//! exploit = true
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Whether the exploit expectations are meant to pass.
    pub exploit_expected: bool,
    #[serde(default)]
    pub params: BTreeMap<String, ParamDefault>,
    pub accounts: Vec<AccountSpec>,
    #[serde(default)]
    pub setup: Vec<TxSpec>,
    pub attack: Vec<TxSpec>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ParamDefault {
    Flag(bool),
    Int(i64),
    Expr(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub name: String,
    /// Fixture name; plain account when absent.
    pub contract: Option<String>,
    /// Flag parameter name to replacement fixture.
    #[serde(default)]
    pub variants: BTreeMap<String, String>,
    #[serde(default = "zero")]
    pub balance: String,
}

fn zero() -> String {
    "0".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSpec {
    pub from: String,
    pub to: String,
    pub function: Option<String>,
    #[serde(default)]
    pub args: Vec<ArgSpec>,
    #[serde(default = "zero")]
    pub value: String,
    pub gas: Option<String>,
}

/// `"@name"` is an account address, anything else an integer expression.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ArgSpec {
    Scalar(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds<T: Ord>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Expectation {
    #[serde(flatten)]
    pub check: Check,
    /// Counts towards `exploit_succeeded` instead of the pass/fail verdict.
    #[serde(default)]
    pub exploit: bool,
    /// Flag parameter gating this expectation; `!flag` negates.
    pub when: Option<String>,
}

/// Balances and deltas compare against the state right before the attack.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    Balance {
        account: String,
        op: CmpOp,
        value: String,
    },
    BalanceDelta {
        account: String,
        op: CmpOp,
        value: String,
    },
    Storage {
        account: String,
        var: String,
        key: Option<String>,
        op: CmpOp,
        value: String,
        /// Reduce `value` modulo 2^256 first.
        #[serde(default)]
        wrap: bool,
    },
    StorageDelta {
        account: String,
        var: String,
        key: Option<String>,
        op: CmpOp,
        value: String,
    },
    /// `status` is a VM status name or `failed` for any non-ok status.
    Status {
        #[serde(default)]
        tx: usize,
        status: String,
    },
    StateUnchanged,
    /// Number of frames entered on `account` at `entry` during the attack.
    Frames {
        account: String,
        entry: String,
        op: CmpOp,
        value: String,
    },
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
