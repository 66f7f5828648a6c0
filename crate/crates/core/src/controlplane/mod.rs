//! BGP-lite routing: session state machine, update processing under
//! policy, best-path selection and FIB installation.

mod bgp;
mod rib;
mod session;

pub use bgp::{
    install_fib, Advert, BgpMessage, BgpProcess, BgpUpdate, Effects, Outbound, UpdateKind,
};
pub use rib::{
    best_path_select, compare_routes, external_path_len, RibEntry, RouteSource, DEFAULT_LOCAL_PREF,
};
pub use session::{BgpSessionState, SessionState, ACTIVE_OPEN_ATTEMPTS, DEFAULT_HOLD_TIME};
