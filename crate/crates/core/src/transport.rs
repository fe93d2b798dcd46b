//! Lockstep message passing between participants and the coordinator.
//!
//! Every party owns one [`Endpoint`]. Inbound messages from all peers land in
//! a single channel and are demultiplexed per sender, which keeps delivery
//! FIFO per ordered pair regardless of backend. Both backends record the same
//! [`Transcript`], so a run over TCP can be compared message-for-message with
//! an in-process run.
//!
//! Frame layout (little-endian):
//!
//! ```text
//! u32 body_len | u64 session | u64 round | u16 from | u16 to | u8 tag | u8 slot
//!              | u8 payload_kind | u32 count | payload
//! ```
//!
//! `payload_kind` 0 carries `count` f64 values, 1 carries `count` raw bytes.

use std::collections::{HashMap, VecDeque};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::share::PartyId;

pub mod tcp;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const HEADER_LEN: usize = 8 + 8 + 2 + 2 + 1 + 1 + 1 + 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Tag {
    ShareDist = 0,
    MulEF = 1,
    MulEFBroadcast = 2,
    SignVote = 3,
    SignVerdict = 4,
    SplitInfo = 5,
    MagnitudeReport = 6,
    StepSize = 7,
    PredictShare = 8,
    Control = 9,
}

impl Tag {
    pub fn from_u8(v: u8) -> Result<Tag> {
        Ok(match v {
            0 => Tag::ShareDist,
            1 => Tag::MulEF,
            2 => Tag::MulEFBroadcast,
            3 => Tag::SignVote,
            4 => Tag::SignVerdict,
            5 => Tag::SplitInfo,
            6 => Tag::MagnitudeReport,
            7 => Tag::StepSize,
            8 => Tag::PredictShare,
            9 => Tag::Control,
            other => return Err(Error::Frame(format!("unknown tag {other}"))),
        })
    }
}

/// Sub-labels carried in the `slot` header byte.
pub mod slot {
    pub const NONE: u8 = 0;
    /// `SignVote` carrying shares of a comparison denominator.
    pub const DENOMINATOR: u8 = 1;
    /// `SignVote` carrying shares of a comparison numerator.
    pub const NUMERATOR: u8 = 2;
    /// `MagnitudeReport` with perturbed leaf curvature shares.
    pub const PERTURBED_CURVATURE: u8 = 3;
    /// `MagnitudeReport` with order-of-magnitude exponents for division.
    pub const ORDER_OF_MAGNITUDE: u8 = 4;
    /// `Control` triple batch request.
    pub const TRIPLE_REQUEST: u8 = 5;
    /// `Control` feature inventory / permutation exchange.
    pub const FEATURES: u8 = 6;
    /// `Control` shutdown notice for the coordinator.
    pub const SHUTDOWN: u8 = 7;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Reals(Vec<f64>),
    Bytes(Vec<u8>),
}

impl Payload {
    pub fn reals(&self) -> Result<&[f64]> {
        match self {
            Payload::Reals(v) => Ok(v),
            Payload::Bytes(_) => Err(Error::Protocol("expected real payload".into())),
        }
    }

    pub fn bytes(&self) -> Result<&[u8]> {
        match self {
            Payload::Bytes(v) => Ok(v),
            Payload::Reals(_) => Err(Error::Protocol("expected byte payload".into())),
        }
    }

    fn bit_eq(&self, other: &Payload) -> bool {
        match (self, other) {
            (Payload::Reals(a), Payload::Reals(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Payload::Bytes(a), Payload::Bytes(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub session: u64,
    pub round: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub tag: Tag,
    pub slot: u8,
    pub payload: Payload,
}

impl Message {
    /// Equality on every header field and the payload bit patterns.
    pub fn bit_eq(&self, other: &Message) -> bool {
        self.session == other.session
            && self.round == other.round
            && self.from == other.from
            && self.to == other.to
            && self.tag == other.tag
            && self.slot == other.slot
            && self.payload.bit_eq(&other.payload)
    }

    pub fn encode(&self) -> Vec<u8> {
        let (kind, count, body_len) = match &self.payload {
            Payload::Reals(v) => (0u8, v.len(), v.len() * 8),
            Payload::Bytes(b) => (1u8, b.len(), b.len()),
        };
        let mut out = Vec::with_capacity(4 + HEADER_LEN + body_len);
        out.extend_from_slice(&((HEADER_LEN + body_len) as u32).to_le_bytes());
        out.extend_from_slice(&self.session.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.from.0.to_le_bytes());
        out.extend_from_slice(&self.to.0.to_le_bytes());
        out.push(self.tag as u8);
        out.push(self.slot);
        out.push(kind);
        out.extend_from_slice(&(count as u32).to_le_bytes());
        match &self.payload {
            Payload::Reals(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            Payload::Bytes(b) => out.extend_from_slice(b),
        }
        out
    }

    /// Decode one frame body (everything after the length prefix).
    pub fn decode(body: &[u8]) -> Result<Message> {
        if body.len() < HEADER_LEN {
            return Err(Error::Frame(format!("frame of {} bytes is shorter than header", body.len())));
        }
        let u64_at = |i: usize| u64::from_le_bytes(body[i..i + 8].try_into().unwrap());
        let u16_at = |i: usize| u16::from_le_bytes(body[i..i + 2].try_into().unwrap());
        let session = u64_at(0);
        let round = u64_at(8);
        let from = PartyId(u16_at(16));
        let to = PartyId(u16_at(18));
        let tag = Tag::from_u8(body[20])?;
        let slot = body[21];
        let kind = body[22];
        let count = u32::from_le_bytes(body[23..27].try_into().unwrap()) as usize;
        let rest = &body[HEADER_LEN..];
        let payload = match kind {
            0 => {
                if rest.len() != count * 8 {
                    return Err(Error::Frame(format!(
                        "declared {count} reals but body holds {} bytes",
                        rest.len()
                    )));
                }
                Payload::Reals(
                    rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                )
            }
            1 => {
                if rest.len() != count {
                    return Err(Error::Frame(format!(
                        "declared {count} bytes but body holds {}",
                        rest.len()
                    )));
                }
                Payload::Bytes(rest.to_vec())
            }
            other => return Err(Error::Frame(format!("unknown payload kind {other}"))),
        };
        Ok(Message { session, round, from, to, tag, slot, payload })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub message: Message,
}

/// Append-only log of everything one party sent and received.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub party: Option<PartyId>,
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(party: PartyId) -> Self {
        Transcript { party: Some(party), entries: Vec::new() }
    }

    pub fn push(&mut self, direction: Direction, message: Message) {
        self.entries.push(TranscriptEntry { direction, message });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn received(&self) -> impl Iterator<Item = &Message> {
        self.entries.iter().filter(|e| e.direction == Direction::Received).map(|e| &e.message)
    }

    pub fn bit_eq(&self, other: &Transcript) -> bool {
        self.party == other.party
            && self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.direction == b.direction && a.message.bit_eq(&b.message))
    }
}

/// Raw outbound side of a backend.
pub trait Outbound: Send {
    fn deliver(&mut self, msg: &Message) -> Result<()>;
}

/// One party's connection to the session.
pub struct Endpoint {
    id: PartyId,
    session: u64,
    outbound: Box<dyn Outbound>,
    inbound: Receiver<Result<Message>>,
    stash: HashMap<PartyId, VecDeque<Message>>,
    timeout: Duration,
    transcript: Transcript,
    recording: bool,
}

impl Endpoint {
    pub fn new(
        id: PartyId,
        session: u64,
        outbound: Box<dyn Outbound>,
        inbound: Receiver<Result<Message>>,
    ) -> Self {
        Endpoint {
            id,
            session,
            outbound,
            inbound,
            stash: HashMap::new(),
            timeout: DEFAULT_TIMEOUT,
            transcript: Transcript::new(id),
            recording: true,
        }
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Transcript {
        std::mem::replace(&mut self.transcript, Transcript::new(self.id))
    }

    pub fn send(&mut self, to: PartyId, round: u64, tag: Tag, slot: u8, payload: Payload) -> Result<()> {
        if to == self.id {
            return Err(Error::Protocol(format!("{} tried to message itself", self.id)));
        }
        let msg = Message { session: self.session, round, from: self.id, to, tag, slot, payload };
        self.outbound.deliver(&msg)?;
        if self.recording {
            self.transcript.push(Direction::Sent, msg);
        }
        Ok(())
    }

    pub fn send_reals(&mut self, to: PartyId, round: u64, tag: Tag, slot: u8, v: Vec<f64>) -> Result<()> {
        self.send(to, round, tag, slot, Payload::Reals(v))
    }

    /// Send the same payload to every participant in `1..=parties` except self.
    pub fn broadcast(&mut self, parties: usize, round: u64, tag: Tag, slot: u8, payload: Payload) -> Result<usize> {
        let mut n = 0;
        for m in 1..=parties {
            let to = PartyId::participant(m);
            if to != self.id {
                self.send(to, round, tag, slot, payload.clone())?;
                n += 1;
            }
        }
        Ok(n)
    }

    fn pull(&mut self) -> Result<Message> {
        match self.inbound.recv_timeout(self.timeout) {
            Ok(Ok(msg)) => {
                if msg.session != self.session {
                    return Err(Error::Protocol(format!(
                        "{} got a frame for session {} while in session {}",
                        self.id, msg.session, self.session
                    )));
                }
                Ok(msg)
            }
            Ok(Err(e)) => Err(e),
            Err(RecvTimeoutError::Timeout) => {
                Err(Error::Timeout { what: "any message".into(), from: self.id })
            }
            Err(RecvTimeoutError::Disconnected) => Err(Error::Aborted(format!("{} lost its inbox", self.id))),
        }
    }

    fn record_in(&mut self, msg: Message) -> Message {
        if self.recording {
            self.transcript.push(Direction::Received, msg.clone());
        }
        msg
    }

    /// Next message from `from`; it must carry the expected tag, round and slot.
    pub fn recv(&mut self, from: PartyId, tag: Tag, round: u64, slot: u8) -> Result<Message> {
        let msg = loop {
            if let Some(m) = self.stash.get_mut(&from).and_then(|q| q.pop_front()) {
                break m;
            }
            let m = self.pull().map_err(|e| match e {
                Error::Timeout { .. } => Error::Timeout { what: format!("{tag:?} round {round}"), from },
                other => other,
            })?;
            if m.from == from {
                break m;
            }
            self.stash.entry(m.from).or_default().push_back(m);
        };
        if msg.tag != tag || msg.round != round || msg.slot != slot {
            return Err(Error::Protocol(format!(
                "{} expected {:?}/{}/{} from {} but got {:?}/{}/{}",
                self.id, tag, round, slot, from, msg.tag, msg.round, msg.slot
            )));
        }
        Ok(self.record_in(msg))
    }

    pub fn recv_reals(&mut self, from: PartyId, tag: Tag, round: u64, slot: u8) -> Result<Vec<f64>> {
        match self.recv(from, tag, round, slot)?.payload {
            Payload::Reals(v) => Ok(v),
            Payload::Bytes(_) => Err(Error::Protocol("expected real payload".into())),
        }
    }

    /// Next message from anyone, oldest stashed first.
    pub fn recv_any(&mut self) -> Result<Message> {
        let stashed = self
            .stash
            .iter_mut()
            .filter(|(_, q)| !q.is_empty())
            .min_by_key(|(p, _)| **p)
            .and_then(|(_, q)| q.pop_front());
        let msg = match stashed {
            Some(m) => m,
            None => self.pull()?,
        };
        Ok(self.record_in(msg))
    }
}

struct ChannelOutbound {
    peers: HashMap<PartyId, Sender<Result<Message>>>,
}

impl Outbound for ChannelOutbound {
    fn deliver(&mut self, msg: &Message) -> Result<()> {
        let tx = self
            .peers
            .get(&msg.to)
            .ok_or_else(|| Error::Protocol(format!("no route to {}", msg.to)))?;
        tx.send(Ok(msg.clone()))
            .map_err(|_| Error::Aborted(format!("{} has left the session", msg.to)))
    }
}

/// Endpoints for the coordinator and participants `1..=parties`, wired
/// through in-memory queues. Index 0 is the coordinator.
pub fn in_process(session: u64, parties: usize) -> Vec<Endpoint> {
    let ids: Vec<PartyId> = (0..=parties).map(|i| PartyId(i as u16)).collect();
    let (txs, rxs): (Vec<_>, Vec<_>) = ids.iter().map(|_| mpsc::channel()).unzip();
    let txs: HashMap<PartyId, Sender<Result<Message>>> = ids.iter().copied().zip(txs).collect();
    ids.iter()
        .zip(rxs)
        .map(|(id, rx)| {
            let peers = txs.iter().filter(|(p, _)| *p != id).map(|(p, t)| (*p, t.clone())).collect();
            Endpoint::new(*id, session, Box::new(ChannelOutbound { peers }), rx)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(payload: Payload) -> Message {
        Message {
            session: 9,
            round: 3,
            from: PartyId(1),
            to: PartyId(2),
            tag: Tag::MulEF,
            slot: 0,
            payload,
        }
    }

    #[test]
    fn frame_round_trip() {
        for p in [Payload::Reals(vec![1.5, -0.0, f64::MAX]), Payload::Bytes(vec![1, 2, 3])] {
            let m = msg(p);
            let bytes = m.encode();
            let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
            assert_eq!(len, bytes.len() - 4);
            assert!(Message::decode(&bytes[4..]).unwrap().bit_eq(&m));
        }
    }

    #[test]
    fn truncated_frame_is_rejected() {
        let bytes = msg(Payload::Reals(vec![1.0, 2.0])).encode();
        assert!(matches!(Message::decode(&bytes[4..bytes.len() - 3]), Err(Error::Frame(_))));
        assert!(matches!(Message::decode(&bytes[4..10]), Err(Error::Frame(_))));
    }

    #[test]
    fn send_then_recv_matches() {
        let mut eps = in_process(1, 2);
        let mut p2 = eps.pop().unwrap();
        let mut p1 = eps.pop().unwrap();
        p1.send_reals(PartyId(2), 4, Tag::SignVote, slot::NUMERATOR, vec![3.25]).unwrap();
        let got = p2.recv_reals(PartyId(1), Tag::SignVote, 4, slot::NUMERATOR).unwrap();
        assert_eq!(got, vec![3.25]);
        assert_eq!(p1.transcript().len(), 1);
        assert_eq!(p2.transcript().len(), 1);
    }

    #[test]
    fn broadcast_skips_self() {
        let mut eps = in_process(1, 4);
        let n = eps[1].broadcast(4, 0, Tag::SignVerdict, 0, Payload::Reals(vec![1.0])).unwrap();
        assert_eq!(n, 3);
        for ep in eps.iter_mut().skip(2) {
            ep.recv(PartyId(1), Tag::SignVerdict, 0, 0).unwrap();
        }
    }

    #[test]
    fn fifo_per_pair_with_interleaved_senders() {
        let mut eps = in_process(1, 3);
        for r in 0..5 {
            eps[2].send_reals(PartyId(1), r, Tag::MulEF, 0, vec![r as f64]).unwrap();
            eps[3].send_reals(PartyId(1), r, Tag::MulEF, 0, vec![10.0 + r as f64]).unwrap();
        }
        for r in 0..5 {
            assert_eq!(eps[1].recv_reals(PartyId(3), Tag::MulEF, r, 0).unwrap(), vec![10.0 + r as f64]);
        }
        for r in 0..5 {
            assert_eq!(eps[1].recv_reals(PartyId(2), Tag::MulEF, r, 0).unwrap(), vec![r as f64]);
        }
    }

    #[test]
    fn unexpected_header_is_a_protocol_error() {
        let mut eps = in_process(1, 2);
        eps[1].send_reals(PartyId(2), 0, Tag::MulEF, 0, vec![1.0]).unwrap();
        let err = eps[2].recv(PartyId(1), Tag::SignVote, 0, 0).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));
    }

    #[test]
    fn recv_times_out() {
        let mut eps = in_process(1, 2);
        eps[1].set_timeout(Duration::from_millis(20));
        let err = eps[1].recv(PartyId(2), Tag::MulEF, 0, 0).unwrap_err();
        assert!(matches!(err, Error::Timeout { .. }));
    }
}
