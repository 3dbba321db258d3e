//! Command module: key clashes, ceasefire, operator referrals and the
//! simulated message channel between platforms and command centres.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::EncodedKey;
use crate::domain::{EntityRef, MissionConfig, Tick};
use crate::key::KeyTriple;
use crate::switch::{Action, ActionId, ActionKind, ActionState, Invocation, SwitchRuleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClashRecord {
    pub key: KeyTriple,
    pub rules: Vec<SwitchRuleId>,
    pub nullified: Vec<ActionId>,
    pub resolved_by: Option<KeyTriple>,
}

/// Nullify every proposed action and any pending action not yet executed.
///
/// # Panics
///
/// With fewer than two invocations; that is not a clash.
pub fn handle_clash(invs: &[Invocation], pending: Option<&mut Action>) -> ClashRecord {
    assert!(invs.len() >= 2, "a key clash needs at least two invocations");
    let mut nullified: Vec<ActionId> = invs
        .iter()
        .map(|i| {
            let mut a = i.proposed.clone();
            a.transition(ActionState::Nullified).expect("proposals are invoked");
            a.id()
        })
        .collect();
    if let Some(p) = pending {
        if p.state.is_active() {
            p.transition(ActionState::Nullified).expect("active actions can be nullified");
            nullified.push(p.id());
        }
    }
    ClashRecord {
        key: invs[0].key,
        rules: invs.iter().map(|i| i.rule).collect(),
        nullified,
        resolved_by: None,
    }
}

pub fn ceasefire_in_effect(clock: Tick, cfg: &MissionConfig) -> bool {
    cfg.ceasefire_timetable.is_some_and(|t| clock >= t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Approve,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyMode {
    ScriptedTable,
    AlwaysDeny,
    InteractivePrompt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorPolicy {
    pub mode: PolicyMode,
    pub table: BTreeMap<u64, Decision>,
}

impl Default for OperatorPolicy {
    fn default() -> Self {
        Self::always_deny()
    }
}

impl OperatorPolicy {
    pub fn always_deny() -> Self {
        Self { mode: PolicyMode::AlwaysDeny, table: BTreeMap::new() }
    }

    pub fn scripted(table: BTreeMap<u64, Decision>) -> Self {
        Self { mode: PolicyMode::ScriptedTable, table }
    }

    pub fn prompt() -> Self {
        Self { mode: PolicyMode::InteractivePrompt, table: BTreeMap::new() }
    }
}

/// Where interactive referrals are asked and answered.
pub struct OperatorConsole<'a> {
    pub input: &'a mut dyn BufRead,
    pub output: &'a mut dyn Write,
}

/// Decide an operator referral. Targets missing from a scripted table, and
/// prompts with no console attached, are denied.
///
/// # Panics
///
/// If `a` is not an operator referral.
pub fn resolve_referral(a: &Action, p: &OperatorPolicy, console: Option<&mut OperatorConsole>) -> Decision {
    assert_eq!(a.kind, ActionKind::OperatorReferral, "only referrals go to the operator");
    let target = a.target.expect("referrals name a target");
    match p.mode {
        PolicyMode::AlwaysDeny => Decision::Deny,
        PolicyMode::ScriptedTable => p.table.get(&target).copied().unwrap_or(Decision::Deny),
        PolicyMode::InteractivePrompt => {
            let Some(console) = console else { return Decision::Deny };
            let munition = a.munition.as_ref().map(|m| m.as_str()).unwrap_or("-");
            let _ = write!(console.output, "engage target {target} with {munition} ({})? [y/N] ", a.caused_by);
            let _ = console.output.flush();
            let mut line = String::new();
            match console.input.read_line(&mut line) {
                Ok(_) if line.trim() == "y" => Decision::Approve,
                _ => Decision::Deny,
            }
        }
    }
}

/// The operator seat for a run: a policy plus, for interactive runs, the
/// console the prompt goes to.
pub struct Operator {
    pub policy: OperatorPolicy,
    console: Option<(Box<dyn BufRead>, Box<dyn Write>)>,
}

impl Operator {
    pub fn new(policy: OperatorPolicy) -> Self {
        Self { policy, console: None }
    }

    pub fn with_console(policy: OperatorPolicy, input: Box<dyn BufRead>, output: Box<dyn Write>) -> Self {
        Self { policy, console: Some((input, output)) }
    }

    pub fn decide(&mut self, a: &Action) -> Decision {
        match self.console.as_mut() {
            Some((input, output)) => {
                let mut console = OperatorConsole { input: input.as_mut(), output: output.as_mut() };
                resolve_referral(a, &self.policy, Some(&mut console))
            }
            None => resolve_referral(a, &self.policy, None),
        }
    }
}

impl std::fmt::Debug for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Operator")
            .field("policy", &self.policy)
            .field("console", &self.console.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    KeyTransfer(EncodedKey),
    SwapProposal { swap: u64, targets: Vec<u64> },
    SwapAccept { swap: u64 },
    SwapComplete { swap: u64 },
    CeasefireNotice(Tick),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::KeyTransfer(_) => "key-transfer",
            Message::SwapProposal { .. } => "swap-proposal",
            Message::SwapAccept { .. } => "swap-accept",
            Message::SwapComplete { .. } => "swap-complete",
            Message::CeasefireNotice(_) => "ceasefire-notice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub delay: u64,
    pub loss: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { delay: 0, loss: 0.0 }
    }
}

/// Per-link parameters keyed by (from id, to id), with a default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinkTable {
    pub default: LinkParams,
    pub links: BTreeMap<(u64, u64), LinkParams>,
}

impl LinkTable {
    pub fn get(&self, from: u64, to: u64) -> LinkParams {
        self.links.get(&(from, to)).copied().unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub from: EntityRef,
    pub to: EntityRef,
    pub sent: Tick,
    pub deliver_at: Tick,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RouteOutcome {
    Queued { seq: u64, deliver_at: Tick },
    Lost { seq: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("unknown endpoint {0}")]
    UnknownEndpoint(EntityRef),
    #[error("a message cannot be sent from {0} to itself")]
    SelfAddressed(EntityRef),
}

/// The run's message channel. Deliveries are totally ordered by
/// (delivery tick, send sequence).
#[derive(Debug, Clone)]
pub struct MessageChannel {
    endpoints: BTreeSet<EntityRef>,
    links: LinkTable,
    rng: ChaCha8Rng,
    in_transit: Vec<Envelope>,
    next_seq: u64,
}

impl MessageChannel {
    pub fn new(endpoints: impl IntoIterator<Item = EntityRef>, links: LinkTable, rng: ChaCha8Rng) -> Self {
        Self {
            endpoints: endpoints.into_iter().collect(),
            links,
            rng,
            in_transit: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn links(&self) -> &LinkTable {
        &self.links
    }

    pub fn route_message(
        &mut self,
        message: Message,
        from: &EntityRef,
        to: &EntityRef,
        now: Tick,
    ) -> Result<RouteOutcome, RouteError> {
        for end in [from, to] {
            if !self.endpoints.contains(end) {
                return Err(RouteError::UnknownEndpoint(end.clone()));
            }
        }
        if from == to {
            return Err(RouteError::SelfAddressed(from.clone()));
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let link = self.links.get(from.id, to.id);
        let lost = link.loss > 0.0 && self.rng.gen_bool(link.loss.min(1.0));
        if lost {
            return Ok(RouteOutcome::Lost { seq });
        }
        let deliver_at = Tick(now.0 + link.delay);
        self.in_transit.push(Envelope {
            seq,
            from: from.clone(),
            to: to.clone(),
            sent: now,
            deliver_at,
            message,
        });
        Ok(RouteOutcome::Queued { seq, deliver_at })
    }

    /// Remove and return every message due by `now`, in delivery order.
    pub fn due(&mut self, now: Tick) -> Vec<Envelope> {
        let (mut due, rest): (Vec<_>, Vec<_>) = self.in_transit.drain(..).partition(|e| e.deliver_at <= now);
        self.in_transit = rest;
        due.sort_by_key(|e| (e.deliver_at, e.seq));
        due
    }

    pub fn in_transit(&self) -> usize {
        self.in_transit.len()
    }
}
