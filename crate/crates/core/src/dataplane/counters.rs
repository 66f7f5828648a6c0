use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DropReason;
use crate::netmodel::SimTime;

/// Count over two adjacent fixed windows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Windowed {
    pub window: u64,
    pub current: u64,
    pub previous: u64,
}

impl Windowed {
    /// Counts one event attributed to window `w`. Events older than the
    /// previous window are lost, which only happens under extreme delay.
    pub fn add(&mut self, w: u64) {
        if w == self.window {
            self.current += 1;
        } else if w == self.window + 1 {
            self.previous = self.current;
            self.current = 1;
            self.window = w;
        } else if w > self.window {
            self.previous = 0;
            self.current = 1;
            self.window = w;
        } else if w + 1 == self.window {
            self.previous += 1;
        }
    }

    /// Count for window `w`, or `None` if it has rotated out.
    pub fn get(&self, w: u64) -> Option<u64> {
        if w > self.window {
            Some(0)
        } else if w == self.window {
            Some(self.current)
        } else if w + 1 == self.window {
            Some(self.previous)
        } else if self.current == 0 && self.previous == 0 {
            Some(0)
        } else {
            None
        }
    }
}

/// Windowed plus cumulative count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counter {
    pub windows: Windowed,
    pub total: u64,
}

impl Counter {
    pub fn add(&mut self, w: u64) {
        self.windows.add(w);
        self.total += 1;
    }
}

/// The four deliberate-drop counters of one ingress interface.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DropCounters {
    pub no_fib: Counter,
    pub acl_deny: Counter,
    pub zero_ttl: Counter,
    pub bad_checksum: Counter,
}

impl DropCounters {
    pub fn counter_mut(&mut self, r: DropReason) -> Option<&mut Counter> {
        match r {
            DropReason::NoFibEntry => Some(&mut self.no_fib),
            DropReason::AclDeny => Some(&mut self.acl_deny),
            DropReason::ZeroTtl => Some(&mut self.zero_ttl),
            DropReason::BadHeaderChecksum => Some(&mut self.bad_checksum),
            DropReason::Congestion | DropReason::SilentInjected => None,
        }
    }

    pub fn all(&self) -> [(DropReason, &Counter); 4] {
        [
            (DropReason::NoFibEntry, &self.no_fib),
            (DropReason::AclDeny, &self.acl_deny),
            (DropReason::ZeroTtl, &self.zero_ttl),
            (DropReason::BadHeaderChecksum, &self.bad_checksum),
        ]
    }

    pub fn in_window(&self, w: u64) -> Option<u64> {
        self.all()
            .iter()
            .map(|(_, c)| c.windows.get(w))
            .sum::<Option<u64>>()
    }

    pub fn total(&self) -> u64 {
        self.all().iter().map(|(_, c)| c.total).sum()
    }
}

/// Traced-packet counters of one interface. Every counter is keyed by the
/// window of the packet's ingress timestamp, so egress counts follow a
/// virtual clock driven by those stamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortCounters {
    pub ingress: Counter,
    pub egress: Counter,
    /// Traced packets delivered to the switch itself, counted at their ingress port.
    pub local: Counter,
    pub drops: DropCounters,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counters {
    pub window_len_us: u64,
    pub ports: BTreeMap<u8, PortCounters>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistentReport {
    pub window: u64,
    pub ingress_sum: u64,
    pub egress_sum: u64,
    pub deliberate_drops: u64,
    pub local_deliveries: u64,
    pub deficit: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum WindowError {
    #[error("window {window} still open until {ready_at}")]
    WindowNotClosed { window: u64, ready_at: SimTime },
    #[error("window {window} has rotated out of the counters")]
    WindowExpired { window: u64 },
}

impl Counters {
    pub fn new(window_len: SimTime) -> Self {
        Counters {
            window_len_us: window_len.0.max(1),
            ports: BTreeMap::new(),
        }
    }

    pub fn window_of(&self, t: SimTime) -> u64 {
        t.0 / self.window_len_us
    }

    pub fn port(&mut self, iface: u8) -> &mut PortCounters {
        self.ports.entry(iface).or_default()
    }

    pub fn reset(&mut self) {
        self.ports.clear();
    }

    /// Switch-wide (arrived, deliberately dropped) traced packets in window `w`.
    pub fn arrivals_and_drops(&self, w: u64) -> (u64, u64) {
        self.ports.values().fold((0, 0), |(a, d), p| {
            (
                a + p.ingress.windows.get(w).unwrap_or(0),
                d + p.drops.in_window(w).unwrap_or(0),
            )
        })
    }

    /// Conservation check over the last window that is closed on both the
    /// real and the virtual clock. `pipeline_delay` bounds how long a packet
    /// stamped in a window may still be inside the switch.
    pub fn silent_drop_check(
        &self,
        now: SimTime,
        pipeline_delay: SimTime,
    ) -> Result<ConsistentReport, WindowError> {
        let len = self.window_len_us;
        let current = now.0 / len;
        if current == 0 {
            return Err(WindowError::WindowNotClosed {
                window: 0,
                ready_at: SimTime(len + pipeline_delay.0),
            });
        }
        let w = current - 1;
        let ready_at = SimTime((w + 1) * len + pipeline_delay.0);
        if now < ready_at {
            return Err(WindowError::WindowNotClosed {
                window: w,
                ready_at,
            });
        }
        self.window_report(w)
    }

    pub fn window_report(&self, w: u64) -> Result<ConsistentReport, WindowError> {
        let expired = WindowError::WindowExpired { window: w };
        let (mut i, mut e, mut d, mut l) = (0u64, 0u64, 0u64, 0u64);
        for p in self.ports.values() {
            i += p.ingress.windows.get(w).ok_or(expired)?;
            e += p.egress.windows.get(w).ok_or(expired)?;
            d += p.drops.in_window(w).ok_or(expired)?;
            l += p.local.windows.get(w).ok_or(expired)?;
        }
        Ok(ConsistentReport {
            window: w,
            ingress_sum: i,
            egress_sum: e,
            deliberate_drops: d,
            local_deliveries: l,
            deficit: i as i64 - e as i64 - d as i64 - l as i64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_rotate() {
        let mut w = Windowed::default();
        w.add(0);
        w.add(0);
        w.add(1);
        assert_eq!(w.get(0), Some(2));
        assert_eq!(w.get(1), Some(1));
        w.add(0);
        assert_eq!(w.get(0), Some(3));
        w.add(5);
        assert_eq!(w.get(4), Some(0));
        assert_eq!(w.get(1), None);
        assert_eq!(w.get(9), Some(0));
    }

    #[test]
    fn check_refuses_open_window() {
        let c = Counters::new(SimTime::from_millis(200));
        let err = c
            .silent_drop_check(SimTime::from_millis(200), SimTime(10))
            .unwrap_err();
        assert_eq!(
            err,
            WindowError::WindowNotClosed {
                window: 0,
                ready_at: SimTime(200_010)
            }
        );
        assert!(c.silent_drop_check(SimTime(200_010), SimTime(10)).is_ok());
    }
}
