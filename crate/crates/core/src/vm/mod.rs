//! Message-call interpreter over the contract IR.
//!
//! Gas schedule: 10 per statement, 200 for a storage write, 100 plus the
//! forwarded gas for any external call. `call`/`invoke` forward all but 1/64
//! of what is left (or the `gas=` cap if lower); `transfer`/`send` forward
//! exactly [`STIPEND`]. Value moves when the callee frame is entered.

mod exec;
mod trace;
mod world;

pub use exec::{
    execute_transaction, CallOutcome, Transaction, VmError, CALL_GAS, MAX_DEPTH, STIPEND, STMT_GAS,
    STORAGE_WRITE_GAS, TX_GAS,
};
pub use trace::{max_nesting, NoTrace, Status, TraceEvent, TraceSink};
pub use world::{Account, Checkpoint, JournalError, Slot, Value, WorldError, WorldState};
