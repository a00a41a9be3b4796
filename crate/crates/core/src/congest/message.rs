use std::fmt;

/// Tag of a protocol message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    /// Characteristic radius as `a / b`.
    Radius,
    /// A single count (`n_j`, `b_i`, witness counts).
    Count,
    /// Coordinator verdict: keep iterating.
    Continue,
    /// Coordinator verdict: stop (empty overlay) .
    Stop,
    /// Dissemination break; `a` = start offset, `b` = spread rounds.
    Break,
    /// Dissemination gave up after its iteration cap.
    Abort,
    /// Random cyclic shift of the sender's hash group.
    Shift,
    /// Overlay edge `{a, b}`, `a < b`.
    Edge,
    /// Redistribution start index `c(i)`.
    Index,
    Candidate,
    Dominated,
    Removed,
    Open,
    Opened,
    /// Free-form payload for tests and ad hoc programs.
    Data,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One bounded message: a tag plus at most two scalars (ids or counts).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Message {
    pub a: u64,
    pub b: u32,
    pub kind: MessageKind,
}

impl Message {
    pub const fn new(kind: MessageKind, a: u64, b: u32) -> Self {
        Message { a, b, kind }
    }

    pub const fn signal(kind: MessageKind) -> Self {
        Message { a: 0, b: 0, kind }
    }

    pub const fn scalar(kind: MessageKind, a: u64) -> Self {
        Message { a, b: 0, kind }
    }
}
