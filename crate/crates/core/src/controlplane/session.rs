use serde::{Deserialize, Serialize};

use crate::netmodel::{BgpSessionConfig, FilterPolicy, SessionKind, SimTime, SwitchId};

pub const DEFAULT_HOLD_TIME: SimTime = SimTime(900_000);

/// OPEN attempts after a state change that still count as convergence
/// activity; later retries are background noise like keepalives.
pub const ACTIVE_OPEN_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Idle,
    Connecting,
    Established,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BgpSessionState {
    pub peer: SwitchId,
    pub kind: SessionKind,
    pub local_iface: u8,
    pub state: SessionState,
    pub last_keepalive_rx: SimTime,
    pub hold_time: SimTime,
    pub open_attempts: u32,
    pub policy_in: FilterPolicy,
    pub policy_out: FilterPolicy,
}

impl BgpSessionState {
    pub fn new(cfg: &BgpSessionConfig, hold_time: SimTime) -> Self {
        BgpSessionState {
            peer: cfg.peer,
            kind: cfg.kind,
            local_iface: cfg.local_iface,
            state: SessionState::Idle,
            last_keepalive_rx: SimTime::ZERO,
            hold_time,
            open_attempts: 0,
            policy_in: cfg.policy_in.clone(),
            policy_out: cfg.policy_out.clone(),
        }
    }

    pub fn established(&self) -> bool {
        self.state == SessionState::Established
    }

    pub fn hold_expired(&self, now: SimTime) -> bool {
        now.saturating_sub(self.last_keepalive_rx) > self.hold_time
    }
}
