//! Per-party protocol runtime.
//!
//! Every participant runs the same straight-line protocol code against its own
//! [`Party`]; lockstep is kept by a round counter that each protocol step
//! advances identically on every participant. The coordinator runs
//! [`run_coordinator`], which only answers triple-batch requests and the
//! feature-permutation handshake.

use std::collections::{BTreeMap, HashMap};
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::share::{self, BeaverTriple, MulCounter, MulPhase, PartyId, ShareVector};
use crate::transport::{self, slot, Endpoint, Payload, Tag, Transcript};

pub const DEFAULT_TRIPLE_BATCH: usize = 1 << 14;

/// Derive a per-party RNG stream from the session seed.
pub fn party_rng(seed: u64, party: PartyId) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(party.0 as u64 + 1);
    rng
}

/// Scalar triple elements fetched from the coordinator, consumed in order.
struct TriplePool {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    cursor: usize,
    /// Sequence number of element `cursor`.
    next_id: u64,
    next_batch: u64,
}

impl TriplePool {
    fn available(&self) -> usize {
        self.a.len() - self.cursor
    }
}

pub struct Party {
    pub id: PartyId,
    pub parties: usize,
    pub mask_range: f64,
    pub counter: MulCounter,
    ep: Endpoint,
    rng: ChaCha20Rng,
    round: u64,
    pool: TriplePool,
    batch_size: usize,
    /// Triples with ids below this have been consumed.
    used_watermark: u64,
}

impl Party {
    pub fn new(ep: Endpoint, parties: usize, seed: u64, mask_range: f64, batch_size: usize) -> Result<Party> {
        let id = ep.id();
        if id.is_coordinator() || id.0 as usize > parties {
            return Err(Error::Topology(format!("{id} is not a participant of {parties}")));
        }
        if parties < 2 {
            return Err(Error::Topology(format!("need at least 2 participants, got {parties}")));
        }
        Ok(Party {
            id,
            parties,
            mask_range,
            counter: MulCounter::default(),
            rng: party_rng(seed, id),
            ep,
            round: 0,
            pool: TriplePool { a: vec![], b: vec![], c: vec![], cursor: 0, next_id: 0, next_batch: 0 },
            batch_size,
            used_watermark: 0,
        })
    }

    pub fn is_active(&self) -> bool {
        self.id.is_active()
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn endpoint(&mut self) -> &mut Endpoint {
        &mut self.ep
    }

    pub fn transcript(&self) -> &Transcript {
        self.ep.transcript()
    }

    pub fn next_round(&mut self) -> u64 {
        let r = self.round;
        self.round += 1;
        r
    }

    fn others(&self) -> impl Iterator<Item = PartyId> + '_ {
        (1..=self.parties).map(PartyId::participant).filter(move |p| *p != self.id)
    }

    pub fn zeros(&self, len: usize) -> ShareVector {
        ShareVector::zeros(self.id, len)
    }

    /// Share of a public constant held entirely by P1.
    pub fn public(&self, values: &[f64]) -> ShareVector {
        ShareVector::public(self.id, values)
    }

    /// Share of a public constant split evenly over all participants.
    pub fn even(&self, value: f64, len: usize) -> ShareVector {
        ShareVector::even(self.id, value, self.parties, len)
    }

    /// SHR: `owner` splits `plaintext` and sends each participant its slice.
    /// Non-owners pass `None` and the expected length.
    pub fn share_from(&mut self, owner: PartyId, plaintext: Option<&[f64]>, len: usize) -> Result<ShareVector> {
        let round = self.next_round();
        if self.id == owner {
            let x = plaintext.ok_or_else(|| Error::Protocol(format!("{owner} must supply the value it shares")))?;
            if x.len() != len {
                return Err(Error::Shape { left: x.len(), right: len });
            }
            let shares = share::shr(x, owner, self.parties, self.mask_range, &mut self.rng)?;
            let mut own = None;
            for s in shares {
                if s.owner == self.id {
                    own = Some(s);
                } else {
                    self.ep.send_reals(s.owner, round, Tag::ShareDist, slot::NONE, s.values)?;
                }
            }
            Ok(own.expect("owner share present"))
        } else {
            let v = self.ep.recv_reals(owner, Tag::ShareDist, round, slot::NONE)?;
            if v.len() != len {
                return Err(Error::Shape { left: v.len(), right: len });
            }
            Ok(ShareVector::new(self.id, v))
        }
    }

    /// Every participant sends its slice to `target`, which sums them in
    /// ascending party order. Returns the plaintext at `target` only.
    pub fn restore_at(&mut self, target: PartyId, x: &ShareVector, tag: Tag, slot: u8) -> Result<Option<Vec<f64>>> {
        let round = self.next_round();
        if self.id == target {
            let mut parts: BTreeMap<PartyId, Vec<f64>> = BTreeMap::new();
            parts.insert(self.id, x.values.clone());
            for p in self.others().collect::<Vec<_>>() {
                let v = self.ep.recv_reals(p, tag, round, slot)?;
                if v.len() != x.len() {
                    return Err(Error::Shape { left: v.len(), right: x.len() });
                }
                parts.insert(p, v);
            }
            Ok(Some(share::sum_ordered(parts.values().map(|v| v.as_slice()), x.len())))
        } else {
            self.ep.send_reals(target, round, tag, slot, x.values.clone())?;
            Ok(None)
        }
    }

    /// `from` sends `data` to every other participant; everyone returns it.
    pub fn broadcast_from(&mut self, from: PartyId, data: Option<Vec<f64>>, tag: Tag, slot: u8) -> Result<Vec<f64>> {
        let round = self.next_round();
        if self.id == from {
            let d = data.ok_or_else(|| Error::Protocol(format!("{from} has nothing to broadcast")))?;
            self.ep.broadcast(self.parties, round, tag, slot, Payload::Reals(d.clone()))?;
            Ok(d)
        } else {
            self.ep.recv_reals(from, tag, round, slot)
        }
    }

    /// Point-to-point send inside a lockstep round.
    pub fn relay(&mut self, from: PartyId, to: PartyId, data: Option<Vec<f64>>, tag: Tag, slot: u8) -> Result<Option<Vec<f64>>> {
        let round = self.next_round();
        if self.id == from {
            let d = data.ok_or_else(|| Error::Protocol(format!("{from} has nothing to relay")))?;
            self.ep.send_reals(to, round, tag, slot, d)?;
            Ok(None)
        } else if self.id == to {
            Ok(Some(self.ep.recv_reals(from, tag, round, slot)?))
        } else {
            Ok(None)
        }
    }

    fn fetch_batch(&mut self) -> Result<()> {
        let batch = self.pool.next_batch;
        self.ep.send(
            PartyId::COORDINATOR,
            batch,
            Tag::Control,
            slot::TRIPLE_REQUEST,
            Payload::Reals(vec![batch as f64, self.batch_size as f64]),
        )?;
        let v = self.ep.recv_reals(PartyId::COORDINATOR, Tag::ShareDist, batch, slot::NONE)?;
        if v.len() != 3 * self.batch_size {
            return Err(Error::Protocol(format!("triple batch of {} values", v.len())));
        }
        let keep = self.pool.available();
        let start = self.pool.cursor;
        let n = self.batch_size;
        let tail = |src: &mut Vec<f64>, fresh: &[f64]| {
            let mut next: Vec<f64> = src[start..].to_vec();
            next.extend_from_slice(fresh);
            *src = next;
        };
        tail(&mut self.pool.a, &v[..n]);
        tail(&mut self.pool.b, &v[n..2 * n]);
        tail(&mut self.pool.c, &v[2 * n..]);
        self.pool.cursor = 0;
        self.pool.next_batch += 1;
        debug_assert_eq!(self.pool.available(), keep + n);
        Ok(())
    }

    /// Take the next `len` unused triple elements.
    pub fn take_triple(&mut self, len: usize) -> Result<BeaverTriple> {
        while self.pool.available() < len {
            self.fetch_batch()?;
        }
        let (s, e) = (self.pool.cursor, self.pool.cursor + len);
        let t = BeaverTriple {
            id: self.pool.next_id,
            a: ShareVector::new(self.id, self.pool.a[s..e].to_vec()),
            b: ShareVector::new(self.id, self.pool.b[s..e].to_vec()),
            c: ShareVector::new(self.id, self.pool.c[s..e].to_vec()),
        };
        self.pool.cursor = e;
        self.pool.next_id += len as u64;
        Ok(t)
    }

    /// Element-wise secure multiplication with a fresh triple.
    pub fn mul(&mut self, x: &ShareVector, y: &ShareVector, phase: MulPhase) -> Result<ShareVector> {
        let t = self.take_triple(x.len())?;
        self.mul_with(x, y, &t, phase)
    }

    /// Secure multiplication with an explicit triple; a triple can be used once.
    pub fn mul_with(&mut self, x: &ShareVector, y: &ShareVector, t: &BeaverTriple, phase: MulPhase) -> Result<ShareVector> {
        if x.len() != y.len() {
            return Err(Error::Shape { left: x.len(), right: y.len() });
        }
        if t.len() != x.len() {
            return Err(Error::Shape { left: t.len(), right: x.len() });
        }
        if t.id < self.used_watermark {
            return Err(Error::Protocol(format!("triple {} reused", t.id)));
        }
        self.used_watermark = t.id + t.len() as u64;
        let n = x.len();
        let mut ef = Vec::with_capacity(2 * n);
        ef.extend(x.values.iter().zip(&t.a.values).map(|(x, a)| x - a));
        ef.extend(y.values.iter().zip(&t.b.values).map(|(y, b)| y - b));
        let share = ShareVector::new(self.id, ef);
        let opened = self.restore_at(PartyId::ACTIVE, &share, Tag::MulEF, slot::NONE)?;
        let ef = self.broadcast_from(PartyId::ACTIVE, opened, Tag::MulEFBroadcast, slot::NONE)?;
        if ef.len() != 2 * n {
            return Err(Error::Shape { left: ef.len(), right: 2 * n });
        }
        self.counter.record(phase);
        Ok(share::beaver_combine(&ef[..n], &ef[n..], t))
    }

    /// Multiply a chain of factors left to right.
    pub fn mul_chain(&mut self, factors: &[&ShareVector], phase: MulPhase) -> Result<ShareVector> {
        let (first, rest) = factors.split_first().ok_or_else(|| Error::Invalid("empty product".into()))?;
        let mut acc = (*first).clone();
        for f in rest {
            acc = self.mul(&acc, f, phase)?;
        }
        Ok(acc)
    }

    /// Feature inventory handshake with the coordinator: report the local
    /// column count, receive the global id table.
    pub fn exchange_features(&mut self, local_count: usize) -> Result<FeatureTable> {
        self.ep.send(PartyId::COORDINATOR, 0, Tag::Control, slot::FEATURES, Payload::Reals(vec![local_count as f64]))?;
        let v = self.ep.recv_reals(PartyId::COORDINATOR, Tag::Control, 0, slot::FEATURES)?;
        FeatureTable::decode(&v, self.id)
    }

    fn shutdown(&mut self) -> Result<()> {
        self.ep.send(PartyId::COORDINATOR, 0, Tag::Control, slot::SHUTDOWN, Payload::Bytes(vec![]))
    }
}

/// Global feature ids as issued by the coordinator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTable {
    /// Owner of each global id.
    pub owners: Vec<PartyId>,
    /// Owner-local column of each global id.
    pub local_index: Vec<usize>,
}

impl FeatureTable {
    /// Random permutation of global ids over the owners' columns.
    pub fn permuted(seed: u64, counts: &[usize]) -> FeatureTable {
        let mut slots: Vec<(PartyId, usize)> = counts
            .iter()
            .enumerate()
            .flat_map(|(m, &c)| (0..c).map(move |j| (PartyId::participant(m + 1), j)))
            .collect();
        let mut rng = party_rng(seed, PartyId::COORDINATOR);
        rng.set_stream(u64::MAX);
        slots.shuffle(&mut rng);
        FeatureTable {
            owners: slots.iter().map(|s| s.0).collect(),
            local_index: slots.iter().map(|s| s.1).collect(),
        }
    }

    /// Identity numbering: P1's columns first, then P2's, and so on.
    pub fn sequential(counts: &[usize]) -> FeatureTable {
        let slots: Vec<(PartyId, usize)> = counts
            .iter()
            .enumerate()
            .flat_map(|(m, &c)| (0..c).map(move |j| (PartyId::participant(m + 1), j)))
            .collect();
        FeatureTable {
            owners: slots.iter().map(|s| s.0).collect(),
            local_index: slots.iter().map(|s| s.1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn global_id(&self, owner: PartyId, local: usize) -> Option<usize> {
        (0..self.len()).find(|&g| self.owners[g] == owner && self.local_index[g] == local)
    }

    /// What a participant learns: every owner, plus its own local indices.
    fn encode_for(&self, party: PartyId) -> Vec<f64> {
        let mut v: Vec<f64> = self.owners.iter().map(|p| p.0 as f64).collect();
        v.extend(self.local_index.iter().zip(&self.owners).map(|(&l, &o)| if o == party { l as f64 } else { -1.0 }));
        v
    }

    fn decode(v: &[f64], _party: PartyId) -> Result<FeatureTable> {
        if v.len() % 2 != 0 {
            return Err(Error::Protocol("odd feature table".into()));
        }
        let j = v.len() / 2;
        Ok(FeatureTable {
            owners: v[..j].iter().map(|&p| PartyId(p as u16)).collect(),
            local_index: v[j..].iter().map(|&l| if l < 0.0 { usize::MAX } else { l as usize }).collect(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct CoordinatorConfig {
    pub parties: usize,
    pub seed: u64,
    pub mask_range: f64,
    /// Issue a random feature permutation instead of sequential ids.
    pub permute_features: bool,
}

/// Coordinator loop: serve triple batches and the feature handshake until
/// every participant has sent its shutdown notice.
pub fn run_coordinator(mut ep: Endpoint, cfg: &CoordinatorConfig) -> Result<Transcript> {
    let me = PartyId::COORDINATOR;
    let mut rng = party_rng(cfg.seed, me);
    let mut batches: Vec<Option<(Vec<BeaverTriple>, usize)>> = Vec::new();
    let mut inventory: HashMap<PartyId, usize> = HashMap::new();
    let mut done = 0;
    while done < cfg.parties {
        let msg = ep.recv_any()?;
        if msg.tag != Tag::Control {
            return Err(Error::Protocol(format!("coordinator received {:?} from {}", msg.tag, msg.from)));
        }
        match msg.slot {
            slot::TRIPLE_REQUEST => {
                let req = msg.payload.reals()?;
                let (index, size) = (req[0] as usize, req[1] as usize);
                while batches.len() <= index {
                    let id = (batches.len() * size) as u64;
                    let t = share::triple_gen(me, id, size, cfg.parties, cfg.mask_range, &mut rng)?;
                    batches.push(Some((t, 0)));
                }
                let entry = batches[index]
                    .as_mut()
                    .ok_or_else(|| Error::Protocol(format!("batch {index} requested after release")))?;
                let t = &entry.0[msg.from.slot()];
                let mut payload = t.a.values.clone();
                payload.extend_from_slice(&t.b.values);
                payload.extend_from_slice(&t.c.values);
                ep.send(msg.from, index as u64, Tag::ShareDist, slot::NONE, Payload::Reals(payload))?;
                entry.1 += 1;
                if entry.1 == cfg.parties {
                    batches[index] = None;
                }
            }
            slot::FEATURES => {
                inventory.insert(msg.from, msg.payload.reals()?[0] as usize);
                if inventory.len() == cfg.parties {
                    let counts: Vec<usize> = (1..=cfg.parties).map(|m| inventory[&PartyId::participant(m)]).collect();
                    let table = if cfg.permute_features {
                        FeatureTable::permuted(cfg.seed, &counts)
                    } else {
                        FeatureTable::sequential(&counts)
                    };
                    for m in 1..=cfg.parties {
                        let p = PartyId::participant(m);
                        ep.send(p, 0, Tag::Control, slot::FEATURES, Payload::Reals(table.encode_for(p)))?;
                    }
                }
            }
            slot::SHUTDOWN => done += 1,
            other => return Err(Error::Protocol(format!("unknown control slot {other}"))),
        }
    }
    Ok(ep.take_transcript())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    InProcess,
    Tcp,
}

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub session_id: u64,
    pub parties: usize,
    pub seed: u64,
    pub mask_range: f64,
    pub triple_batch: usize,
    pub backend: Backend,
    pub timeout: Duration,
    pub permute_features: bool,
}

impl SessionConfig {
    pub fn new(parties: usize, seed: u64) -> Self {
        SessionConfig {
            session_id: seed,
            parties,
            seed,
            mask_range: share::DEFAULT_MASK_RANGE,
            triple_batch: DEFAULT_TRIPLE_BATCH,
            backend: Backend::InProcess,
            timeout: transport::DEFAULT_TIMEOUT,
            permute_features: true,
        }
    }
}

/// Per-party results of a completed session.
#[derive(Debug)]
pub struct SessionOutput<T> {
    pub outputs: Vec<T>,
    pub transcripts: Vec<Transcript>,
    pub coordinator_transcript: Transcript,
    pub counters: Vec<MulCounter>,
}

/// Run `f` on every participant concurrently (one thread each) alongside a
/// coordinator thread. Outputs come back in party order.
pub fn run_session<T, F>(cfg: &SessionConfig, f: F) -> Result<SessionOutput<T>>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    if cfg.parties < 2 {
        return Err(Error::Topology(format!("need at least 2 participants, got {}", cfg.parties)));
    }
    let mut eps = match cfg.backend {
        Backend::InProcess => transport::in_process(cfg.session_id, cfg.parties),
        Backend::Tcp => transport::tcp::local_cluster(cfg.session_id, cfg.parties)?,
    };
    for ep in eps.iter_mut() {
        ep.set_timeout(cfg.timeout);
    }
    let coord_ep = eps.remove(0);
    let coord_cfg = CoordinatorConfig {
        parties: cfg.parties,
        seed: cfg.seed,
        mask_range: cfg.mask_range,
        permute_features: cfg.permute_features,
    };
    let f = &f;
    thread::scope(|scope| {
        let coord = scope.spawn(move || run_coordinator(coord_ep, &coord_cfg));
        let handles: Vec<_> = eps
            .into_iter()
            .map(|ep| {
                scope.spawn(move || -> Result<(T, Transcript, MulCounter)> {
                    let mut party = Party::new(ep, cfg.parties, cfg.seed, cfg.mask_range, cfg.triple_batch)?;
                    let out = f(&mut party);
                    // the coordinator must be released even when the protocol failed
                    let bye = party.shutdown();
                    let out = out?;
                    bye?;
                    Ok((out, party.ep.take_transcript(), party.counter.clone()))
                })
            })
            .collect();
        let mut outputs = Vec::new();
        let mut transcripts = Vec::new();
        let mut counters = Vec::new();
        let mut first_err = None;
        for h in handles {
            match h.join().map_err(|_| Error::Aborted("party thread panicked".into())) {
                Ok(Ok((o, t, c))) => {
                    outputs.push(o);
                    transcripts.push(t);
                    counters.push(c);
                }
                Ok(Err(e)) | Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let coord = coord.join().map_err(|_| Error::Aborted("coordinator panicked".into()));
        if let Some(e) = first_err {
            return Err(e);
        }
        let coordinator_transcript = coord??;
        Ok(SessionOutput { outputs, transcripts, coordinator_transcript, counters })
    })
}
