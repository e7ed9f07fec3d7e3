//! Inputs shared by the benchmarks.

use exploitlab_core::lang::{parse_contract, Contract};
use exploitlab_core::scenarios::{builtin_fixture, fixture_names};

/// Every shipped fixture, as (name, source).
pub fn fixture_sources() -> Vec<(&'static str, &'static str)> {
    fixture_names().map(|n| (n, builtin_fixture(n).unwrap())).collect()
}

pub fn fixture_contracts() -> Vec<Contract> {
    fixture_sources().iter().map(|(_, src)| parse_contract(src).unwrap()).collect()
}
