use serde::Serialize;

use crate::address::Address;
use crate::lang::{EntryPoint, Location};
use crate::numeric::UInt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Reverted,
    OutOfGas,
    DepthExceeded,
}

impl Status {
    pub fn is_ok(self) -> bool {
        self == Status::Ok
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Reverted => "reverted",
            Status::OutOfGas => "out_of_gas",
            Status::DepthExceeded => "depth_exceeded",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    FrameEnter {
        depth: usize,
        caller: Address,
        callee: Address,
        /// `None` when the callee has no code.
        entry: Option<EntryPoint>,
        value: UInt,
        gas: u64,
    },
    FrameExit {
        depth: usize,
        status: Status,
        gas_used: u64,
    },
    StatementExec {
        depth: usize,
        kind: &'static str,
        location: Location,
    },
    BalanceChange {
        address: Address,
        old: UInt,
        new: UInt,
    },
}

/// Receives trace events as they happen.
pub trait TraceSink {
    fn record(&mut self, event: TraceEvent);
}

impl TraceSink for Vec<TraceEvent> {
    fn record(&mut self, event: TraceEvent) {
        self.push(event);
    }
}

/// Discards every event.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTrace;

impl TraceSink for NoTrace {
    fn record(&mut self, _event: TraceEvent) {}
}

/// Deepest FrameEnter/FrameExit nesting, or `None` if the sequence is
/// unbalanced.
pub fn max_nesting(events: &[TraceEvent]) -> Option<usize> {
    let (mut open, mut max) = (0usize, 0usize);
    for e in events {
        match e {
            TraceEvent::FrameEnter { .. } => {
                open += 1;
                max = max.max(open);
            }
            TraceEvent::FrameExit { .. } => open = open.checked_sub(1)?,
            _ => {}
        }
    }
    (open == 0).then_some(max)
}
