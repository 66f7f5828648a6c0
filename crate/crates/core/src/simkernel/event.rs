use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::agent::AgentTimer;
use crate::netmodel::{Endpoint, HostId, LinkId, Packet, Prefix, SimTime, SwitchId};

#[derive(Debug, Clone)]
pub enum EventKind {
    /// A packet reaches the far end of a link.
    Deliver {
        link: LinkId,
        to: Endpoint,
        pkt: Packet,
    },
    /// A forwarded packet leaves the switch pipeline.
    Egress {
        switch: SwitchId,
        iface: u8,
        next_hop_mac: u64,
        pkt: Packet,
    },
    BgpTick {
        switch: SwitchId,
    },
    Agent {
        switch: SwitchId,
        timer: AgentTimer,
    },
    PingmeshRound {
        host: HostId,
    },
    /// Fault hook that flips origination of a prefix at a fixed period.
    Oscillate {
        switch: SwitchId,
        prefix: Prefix,
        period: SimTime,
    },
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::Deliver { .. } => "deliver",
            EventKind::Egress { .. } => "egress",
            EventKind::BgpTick { .. } => "bgp-tick",
            EventKind::Agent { .. } => "agent",
            EventKind::PingmeshRound { .. } => "pingmesh",
            EventKind::Oscillate { .. } => "oscillate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    /// Periodic background work that does not hold off quiescence.
    pub background: bool,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Min-queue ordered by (time, seq).
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    foreground: usize,
}

impl EventQueue {
    pub fn push(&mut self, time: SimTime, background: bool, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        if !background {
            self.foreground += 1;
        }
        self.heap.push(Reverse(Event {
            time,
            seq,
            background,
            kind,
        }));
        seq
    }

    pub fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?.0;
        if !ev.background {
            self.foreground -= 1;
        }
        Some(ev)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|r| r.0.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Pending events that are not periodic background work.
    pub fn foreground(&self) -> usize {
        self.foreground
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_seq_order() {
        let mut q = EventQueue::default();
        let tick = |s| EventKind::BgpTick {
            switch: SwitchId(s),
        };
        q.push(SimTime(10), false, tick(0));
        q.push(SimTime(5), true, tick(1));
        q.push(SimTime(10), false, tick(2));
        q.push(SimTime(5), false, tick(3));
        assert_eq!(q.foreground(), 3);
        let order: Vec<(u64, u64)> =
            std::iter::from_fn(|| q.pop().map(|e| (e.time.0, e.seq))).collect();
        assert_eq!(order, vec![(5, 1), (5, 3), (10, 0), (10, 2)]);
        assert_eq!(q.foreground(), 0);
    }
}
