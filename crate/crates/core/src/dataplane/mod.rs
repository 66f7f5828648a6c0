//! Per-switch packet pipeline: header checksum, forwarding tables, ACLs and
//! the traced-packet instrumentation used for drop localization.

mod acl;
mod checksum;
mod counters;
mod fib;
mod headerlog;
mod pipeline;

pub use acl::acl_eval;
pub use checksum::{ipv4_header_checksum, verify_header, HeaderFields};
pub use counters::{
    ConsistentReport, Counter, Counters, DropCounters, PortCounters, WindowError, Windowed,
};
pub use fib::{lpm_lookup, Fib, FibEgress, FibEntry, RouteOrigin};
pub use headerlog::{HeaderLogs, LoggedHeader, PortLog, DEFAULT_LOG_CAPACITY};
pub use pipeline::{
    check_fault_trigger, transform_header, CpuReason, DataPlane, DropReason, ForwardingDecision,
    IngressOutcome, MirrorRecord, TriggerConfig, TriggerEvent,
};
