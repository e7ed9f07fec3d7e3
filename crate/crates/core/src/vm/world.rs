use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::address::Address;
use crate::lang::{Contract, StorageKind};
use crate::numeric::UInt;

/// A runtime value. Storage only ever holds the scalar variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Value {
    U256(UInt),
    Bool(bool),
    Address(Address),
    AddressList(Vec<Address>),
}

impl Value {
    pub fn default_for(kind: StorageKind) -> Value {
        match kind {
            StorageKind::Map | StorageKind::U256 => Value::U256(UInt::u256(0)),
            StorageKind::Bool => Value::Bool(false),
            StorageKind::Address => Value::Address(Address::ZERO),
        }
    }

    fn is_default(&self) -> bool {
        match self {
            Value::U256(v) => v.is_zero(),
            Value::Bool(b) => !b,
            Value::Address(a) => *a == Address::ZERO,
            Value::AddressList(l) => l.is_empty(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::U256(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Address(a) => write!(f, "{a}"),
            Value::AddressList(l) => {
                let items: Vec<String> = l.iter().map(|a| a.to_string()).collect();
                write!(f, "[{}]", items.join(", "))
            }
        }
    }
}

/// A storage variable, or one entry of a mapping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Slot {
    pub var: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<Address>,
}

impl Slot {
    pub fn scalar(var: impl Into<String>) -> Self {
        Slot { var: var.into(), key: None }
    }

    pub fn entry(var: impl Into<String>, key: Address) -> Self {
        Slot { var: var.into(), key: Some(key) }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "{}[{k}]", self.var),
            None => f.write_str(&self.var),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Account {
    pub balance: UInt,
    pub code: Option<Arc<Contract>>,
    /// Slots holding their default value are absent.
    pub storage: BTreeMap<Slot, Value>,
}

#[derive(Debug, Clone)]
enum Undo {
    Balance { address: Address, old: UInt },
    Storage { address: Address, slot: Slot, old: Option<Value> },
}

/// Handle returned by [`WorldState::snapshot`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint {
    id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JournalError {
    #[error("checkpoint {0} was already released")]
    Released(u64),
    #[error("checkpoint {0} is not the innermost live checkpoint")]
    OutOfOrder(u64),
}

#[derive(Debug, Clone, Default)]
struct Journal {
    undo: Vec<Undo>,
    /// Live checkpoints, innermost last: (id, undo log length at creation).
    live: Vec<(u64, usize)>,
    next_id: u64,
}

/// Accounts with balances, code and storage, plus the undo journal that
/// backs frame-level revert.
#[derive(Debug, Clone, Default)]
pub struct WorldState {
    accounts: BTreeMap<Address, Account>,
    journal: Journal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("account {0} already exists")]
    AccountExists(Address),
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_account(&mut self, address: Address, balance: UInt) -> Result<(), WorldError> {
        self.insert(address, balance, None)
    }

    pub fn deploy(&mut self, address: Address, contract: Arc<Contract>, balance: UInt) -> Result<(), WorldError> {
        self.insert(address, balance, Some(contract))
    }

    fn insert(&mut self, address: Address, balance: UInt, code: Option<Arc<Contract>>) -> Result<(), WorldError> {
        if self.accounts.contains_key(&address) {
            return Err(WorldError::AccountExists(address));
        }
        self.accounts.insert(
            address,
            Account {
                balance,
                code,
                storage: BTreeMap::new(),
            },
        );
        Ok(())
    }

    pub fn exists(&self, address: &Address) -> bool {
        self.accounts.contains_key(address)
    }

    pub fn account(&self, address: &Address) -> Option<&Account> {
        self.accounts.get(address)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&Address, &Account)> {
        self.accounts.iter()
    }

    pub fn code(&self, address: &Address) -> Option<Arc<Contract>> {
        self.accounts.get(address).and_then(|a| a.code.clone())
    }

    /// Zero for unknown accounts.
    pub fn balance(&self, address: &Address) -> UInt {
        self.accounts
            .get(address)
            .map(|a| a.balance)
            .unwrap_or_else(|| UInt::u256(0))
    }

    /// Reads a slot, falling back to the declared kind's default.
    pub fn storage(&self, address: &Address, slot: &Slot) -> Value {
        let Some(account) = self.accounts.get(address) else {
            return Value::U256(UInt::u256(0));
        };
        if let Some(v) = account.storage.get(slot) {
            return v.clone();
        }
        let kind = account
            .code
            .as_ref()
            .and_then(|c| c.storage_kind(&slot.var))
            .unwrap_or(StorageKind::U256);
        Value::default_for(kind)
    }

    /// Journaled balance update. Unknown accounts are ignored.
    pub fn set_balance(&mut self, address: Address, balance: UInt) {
        let Some(account) = self.accounts.get_mut(&address) else {
            return;
        };
        let old = std::mem::replace(&mut account.balance, balance);
        if !self.journal.live.is_empty() {
            self.journal.undo.push(Undo::Balance { address, old });
        }
    }

    /// Journaled storage write. Unknown accounts are ignored.
    pub fn set_storage(&mut self, address: Address, slot: Slot, value: Value) {
        let Some(account) = self.accounts.get_mut(&address) else {
            return;
        };
        let old = if value.is_default() {
            account.storage.remove(&slot)
        } else {
            account.storage.insert(slot.clone(), value)
        };
        if !self.journal.live.is_empty() {
            self.journal.undo.push(Undo::Storage { address, slot, old });
        }
    }

    pub fn snapshot(&mut self) -> Checkpoint {
        let id = self.journal.next_id;
        self.journal.next_id += 1;
        self.journal.live.push((id, self.journal.undo.len()));
        Checkpoint { id }
    }

    fn pop_checkpoint(&mut self, cp: Checkpoint) -> Result<usize, JournalError> {
        match self.journal.live.last() {
            Some(&(id, len)) if id == cp.id => {
                self.journal.live.pop();
                Ok(len)
            }
            _ if self.journal.live.iter().any(|(id, _)| *id == cp.id) => Err(JournalError::OutOfOrder(cp.id)),
            _ => Err(JournalError::Released(cp.id)),
        }
    }

    /// Undoes every change made since `cp` and releases it.
    pub fn rollback(&mut self, cp: Checkpoint) -> Result<(), JournalError> {
        let len = self.pop_checkpoint(cp)?;
        while self.journal.undo.len() > len {
            match self.journal.undo.pop().unwrap() {
                Undo::Balance { address, old } => {
                    if let Some(a) = self.accounts.get_mut(&address) {
                        a.balance = old;
                    }
                }
                Undo::Storage { address, slot, old } => {
                    if let Some(a) = self.accounts.get_mut(&address) {
                        match old {
                            Some(v) => a.storage.insert(slot, v),
                            None => a.storage.remove(&slot),
                        };
                    }
                }
            }
        }
        Ok(())
    }

    /// Keeps every change made since `cp` and releases it. Changes stay
    /// revertible through any enclosing checkpoint.
    pub fn commit(&mut self, cp: Checkpoint) -> Result<(), JournalError> {
        self.pop_checkpoint(cp)?;
        if self.journal.live.is_empty() {
            self.journal.undo.clear();
        }
        Ok(())
    }

    /// Sum of all balances, without wrapping.
    pub fn total_balance(&self) -> BigUint {
        self.accounts
            .values()
            .map(|a| BigUint::from_bytes_be(&a.balance.to_be_bytes()))
            .sum()
    }

    /// SHA-256 over the sorted `(address, balance, sorted storage)` tuples.
    pub fn state_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (address, account) in &self.accounts {
            h.update(address.0);
            h.update(account.balance.to_be_bytes());
            h.update((account.storage.len() as u64).to_be_bytes());
            for (slot, value) in &account.storage {
                h.update((slot.var.len() as u64).to_be_bytes());
                h.update(slot.var.as_bytes());
                match &slot.key {
                    Some(k) => {
                        h.update([1]);
                        h.update(k.0);
                    }
                    None => h.update([0]),
                }
                match value {
                    Value::U256(v) => {
                        h.update([0]);
                        h.update(v.to_be_bytes());
                    }
                    Value::Bool(b) => h.update([1, *b as u8]),
                    Value::Address(a) => {
                        h.update([2]);
                        h.update(a.0);
                    }
                    Value::AddressList(l) => {
                        h.update([3]);
                        h.update((l.len() as u64).to_be_bytes());
                        for a in l {
                            h.update(a.0);
                        }
                    }
                }
            }
        }
        h.finalize().into()
    }

    pub fn state_hash_hex(&self) -> String {
        self.state_hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}
