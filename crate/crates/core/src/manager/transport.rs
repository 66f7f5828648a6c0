//! In-band command transport between the diagnosis host and switch agents.

use std::net::Ipv4Addr;

use crate::agent::{
    decode, mgmt_packet, AgentCommand, AgentReply, CommandEnvelope, MgmtBody, ReplyPayload,
};
use crate::netmodel::{Body, SimTime, SwitchId};
use crate::simkernel::StopCondition;

use super::{CmdResult, Evidence, Manager, ManagerError, Script};

/// A command in flight.
#[derive(Debug, Clone)]
pub(super) struct Pending {
    pub id: u64,
    pub switch: SwitchId,
    pub cmd: AgentCommand,
    pub deadline: SimTime,
    pub retries_left: u32,
    pub evidence: usize,
}

impl Manager<'_> {
    fn mgmt_addr(&self, s: SwitchId) -> Ipv4Addr {
        self.mgmt_override
            .get(&s)
            .copied()
            .unwrap_or_else(|| self.net.model.config(s).loopback)
    }

    fn transmit(&mut self, id: u64, s: SwitchId, cmd: &AgentCommand) {
        let dst = self.mgmt_addr(s);
        let src = if dst == self.net.model.config(s).secondary {
            self.net.model.diag_secondary
        } else {
            self.dh_ip
        };
        let body = MgmtBody::Command(CommandEnvelope {
            request_id: id,
            command: cmd.clone(),
        });
        self.net.host_send(self.dh, mgmt_packet(src, dst, body));
    }

    /// Sends a command without waiting; the evidence entry is filled in
    /// when the reply or timeout is known.
    pub(super) fn send(&mut self, script: Script, s: SwitchId, cmd: AgentCommand) -> Pending {
        self.next_request += 1;
        let id = self.next_request;
        self.transmit(id, s, &cmd);
        if let AgentCommand::InjectFlow {
            count, interval_us, ..
        } = &cmd
        {
            let end = self.net.now + SimTime(*count as u64 * interval_us);
            self.state.flows_end = self.state.flows_end.max(end);
        }
        let primitive = match &cmd {
            AgentCommand::Relay { neighbor, inner } => {
                format!("Relay({})@{neighbor}", inner.name())
            }
            c => c.name().to_string(),
        };
        self.evidence.push(Evidence {
            run: self.run,
            script,
            primitive,
            target: s.to_string(),
            summary: String::from("pending"),
            time: self.net.now,
        });
        Pending {
            id,
            switch: s,
            cmd,
            deadline: self.net.now + self.config.command_timeout,
            retries_left: self.config.retries,
            evidence: self.evidence.len() - 1,
        }
    }

    /// Moves everything that reached the diagnosis host into the manager's
    /// buffers.
    pub(super) fn drain_inbox(&mut self) {
        while let Some((t, pkt)) = self.net.host_mut(self.dh).inbox.pop_front() {
            let Body::Mgmt(bytes) = &pkt.body else {
                continue;
            };
            match decode(bytes) {
                Ok(MgmtBody::Reply(r)) => {
                    self.replies.insert(r.request_id, r);
                }
                Ok(MgmtBody::FaultReport(r)) => self.fault_reports.push((t, r)),
                Ok(MgmtBody::Checksum(m)) => self.checksums.push((t, m)),
                Ok(MgmtBody::Anomaly(a)) => self.anomalies.push(a),
                _ => {}
            }
        }
    }

    /// Runs the simulation until `t`, collecting inbound messages.
    pub(super) fn run_to(&mut self, t: SimTime) -> Result<(), ManagerError> {
        while self.net.now < t {
            self.net.run_until(StopCondition::Inbox {
                host: self.dh,
                deadline: t,
            })?;
            self.drain_inbox();
        }
        self.drain_inbox();
        Ok(())
    }

    pub(super) fn sleep(&mut self, d: SimTime) -> Result<(), ManagerError> {
        let t = self.net.now + d;
        self.run_to(t)
    }

    /// Waits for every pending command, retrying on timeout.
    pub(super) fn wait_all(
        &mut self,
        mut pending: Vec<Pending>,
    ) -> Result<Vec<CmdResult>, ManagerError> {
        let mut results: Vec<Option<CmdResult>> = vec![None; pending.len()];
        loop {
            self.drain_inbox();
            let now = self.net.now;
            for (i, p) in pending.iter_mut().enumerate() {
                if results[i].is_some() {
                    continue;
                }
                if let Some(r) = self.replies.remove(&p.id) {
                    results[i] = Some(unwrap_reply(r));
                } else if now >= p.deadline {
                    if p.retries_left > 0 {
                        p.retries_left -= 1;
                        p.deadline = now + self.config.command_timeout;
                        let (id, s, cmd) = (p.id, p.switch, p.cmd.clone());
                        self.transmit(id, s, &cmd);
                    } else {
                        results[i] = Some(CmdResult::Timeout);
                    }
                }
            }
            let open: Vec<SimTime> = pending
                .iter()
                .zip(&results)
                .filter(|(_, r)| r.is_none())
                .map(|(p, _)| p.deadline)
                .collect();
            let Some(next) = open.into_iter().min() else {
                break;
            };
            self.net.run_until(StopCondition::Inbox {
                host: self.dh,
                deadline: next,
            })?;
        }
        let results: Vec<CmdResult> = results.into_iter().map(|r| r.expect("resolved")).collect();
        for (p, r) in pending.iter().zip(&results) {
            self.evidence[p.evidence].summary = r.summary();
        }
        Ok(results)
    }

    /// Sends one command and waits for its outcome.
    pub(super) fn query(
        &mut self,
        script: Script,
        s: SwitchId,
        cmd: AgentCommand,
    ) -> Result<CmdResult, ManagerError> {
        let p = self.send(script, s, cmd);
        Ok(self.wait_all(vec![p])?.remove(0))
    }
}

fn unwrap_reply(r: AgentReply) -> CmdResult {
    match r.result {
        Ok(ReplyPayload::Relayed(inner)) => match inner.result {
            Ok(p) => CmdResult::Ok(p),
            Err(e) => CmdResult::Err(e),
        },
        Ok(p) => CmdResult::Ok(p),
        Err(e) => CmdResult::Err(e),
    }
}
