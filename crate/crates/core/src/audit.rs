//! Semi-honest transcript audit.
//!
//! Replays every party's received messages against the disclosure rules:
//! which tags may flow between which roles, and which values a single party
//! is allowed to reconstruct. A restoration is recorded whenever one party
//! receives slices of the same (round, tag, slot) from every other
//! participant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::share::PartyId;
use crate::transport::{slot, Message, Tag, Transcript};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restoration {
    /// Masked Beaver differences at P1.
    MulDifferencesAtP1,
    /// Comparison or gain-sign denominator at P1.
    DenominatorAtP1,
    /// Comparison or gain-sign numerator at P2.
    NumeratorAtP2,
    /// Sign bits of the numerator relayed to P1.
    SignBitAtP1,
    /// Perturbed curvature sum at P1.
    PerturbedCurvatureAtP1,
    /// Prediction outputs at P1.
    PredictionAtP1,
    /// Share orders of magnitude at P1 (Newton start value).
    MagnitudeAtP1,
}

impl Restoration {
    /// The set a default training run (with its between-tree predictions)
    /// is expected to produce.
    pub fn training_set() -> BTreeSet<Restoration> {
        use Restoration::*;
        [MulDifferencesAtP1, DenominatorAtP1, NumeratorAtP2, SignBitAtP1, PerturbedCurvatureAtP1, PredictionAtP1]
            .into_iter()
            .collect()
    }
}

impl fmt::Display for Restoration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Restoration::MulDifferencesAtP1 => "e,f -> P1",
            Restoration::DenominatorAtP1 => "H -> P1",
            Restoration::NumeratorAtP2 => "G -> P2",
            Restoration::SignBitAtP1 => "sign(G) -> P1",
            Restoration::PerturbedCurvatureAtP1 => "a + sigma -> P1",
            Restoration::PredictionAtP1 => "y_hat -> P1",
            Restoration::MagnitudeAtP1 => "mu -> P1",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub at: PartyId,
    pub from: PartyId,
    pub tag: Tag,
    pub slot: u8,
    pub round: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub messages: usize,
    pub violations: Vec<Violation>,
    pub restorations: BTreeMap<Restoration, usize>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn restoration_set(&self) -> BTreeSet<Restoration> {
        self.restorations.keys().copied().collect()
    }
}

/// Whether `m`, received by `at`, is allowed. `Err` carries the reason.
fn check(m: &Message, at: PartyId) -> Result<(), String> {
    let from = m.from;
    if at.is_coordinator() {
        return if m.tag == Tag::Control { Ok(()) } else { Err("coordinator may only receive control messages".into()) };
    }
    if from.is_coordinator() {
        return match m.tag {
            Tag::ShareDist | Tag::Control => Ok(()),
            _ => Err("coordinator may only send triples and control".into()),
        };
    }
    let need = |ok: bool, why: &str| if ok { Ok(()) } else { Err(why.to_string()) };
    match m.tag {
        Tag::ShareDist | Tag::SplitInfo => Ok(()),
        Tag::MulEF => need(at == PartyId::ACTIVE, "MUL differences sent to a party other than P1"),
        Tag::MulEFBroadcast => need(from == PartyId::ACTIVE, "MUL differences broadcast by a party other than P1"),
        Tag::SignVote => match m.slot {
            slot::DENOMINATOR => need(at == PartyId::ACTIVE, "denominator slice sent to a party other than P1"),
            slot::NUMERATOR => need(at == PartyId::SECOND, "numerator slice sent to a party other than P2"),
            s => Err(format!("sign vote with slot {s}")),
        },
        Tag::SignVerdict => match m.slot {
            slot::NUMERATOR => need(
                from == PartyId::SECOND && at == PartyId::ACTIVE,
                "numerator sign bits must go from P2 to P1",
            ),
            slot::NONE => need(from == PartyId::ACTIVE, "verdict broadcast by a party other than P1"),
            s => Err(format!("sign verdict with slot {s}")),
        },
        Tag::MagnitudeReport => match m.slot {
            slot::PERTURBED_CURVATURE | slot::ORDER_OF_MAGNITUDE => {
                need(at == PartyId::ACTIVE, "magnitude report sent to a party other than P1")
            }
            slot::NONE => need(from == PartyId::ACTIVE, "start value broadcast by a party other than P1"),
            s => Err(format!("magnitude report with slot {s}")),
        },
        Tag::StepSize => need(from == PartyId::ACTIVE, "step size sent by a party other than P1"),
        Tag::PredictShare => need(at == PartyId::ACTIVE, "prediction slice sent to a party other than P1"),
        Tag::Control => Err("control message between participants".into()),
    }
}

fn restoration_kind(m: &Message) -> Option<Restoration> {
    match (m.tag, m.slot) {
        (Tag::MulEF, _) => Some(Restoration::MulDifferencesAtP1),
        (Tag::SignVote, slot::DENOMINATOR) => Some(Restoration::DenominatorAtP1),
        (Tag::SignVote, slot::NUMERATOR) => Some(Restoration::NumeratorAtP2),
        (Tag::MagnitudeReport, slot::PERTURBED_CURVATURE) => Some(Restoration::PerturbedCurvatureAtP1),
        (Tag::MagnitudeReport, slot::ORDER_OF_MAGNITUDE) => Some(Restoration::MagnitudeAtP1),
        (Tag::PredictShare, _) => Some(Restoration::PredictionAtP1),
        _ => None,
    }
}

/// Audit a session: `parties` are the participants' transcripts in order.
pub fn audit(parties: &[Transcript], coordinator: &Transcript) -> AuditReport {
    let m = parties.len();
    let mut report = AuditReport::default();
    let all = parties.iter().enumerate().map(|(i, t)| (t.party.unwrap_or(PartyId::participant(i + 1)), t));
    for (at, t) in all.chain(std::iter::once((PartyId::COORDINATOR, coordinator))) {
        let mut groups: BTreeMap<(u64, Restoration), BTreeSet<PartyId>> = BTreeMap::new();
        for msg in t.received() {
            report.messages += 1;
            if msg.to != at {
                report.violations.push(violation(msg, at, format!("addressed to {}", msg.to)));
                continue;
            }
            if let Err(reason) = check(msg, at) {
                report.violations.push(violation(msg, at, reason));
                continue;
            }
            if msg.tag == Tag::SignVerdict && msg.slot == slot::NUMERATOR {
                *report.restorations.entry(Restoration::SignBitAtP1).or_default() += 1;
            }
            if let Some(kind) = restoration_kind(msg) {
                groups.entry((msg.round, kind)).or_default().insert(msg.from);
            }
        }
        for ((_, kind), senders) in groups {
            if m >= 2 && senders.len() == m - 1 {
                *report.restorations.entry(kind).or_default() += 1;
            }
        }
    }
    report
}

fn violation(m: &Message, at: PartyId, reason: String) -> Violation {
    Violation { at, from: m.from, tag: m.tag, slot: m.slot, round: m.round, reason }
}
