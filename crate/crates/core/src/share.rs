//! Additive secret sharing over 64-bit reals.
//!
//! A logical value `x` is held as `M` slices `<x>^1 .. <x>^M` with
//! `x = sum_m <x>^m`. Addition and subtraction are local; multiplication
//! needs a Beaver triple and one interactive round (see [`crate::party`]).
//!
//! Masks are drawn uniformly from `[-R, R]` and snapped to a dyadic grid of
//! `2^-32`, so sums of masks are exact in f64. A plaintext that itself lies on
//! that grid therefore reconstructs bit-exactly; any other plaintext picks up
//! at most a rounding error of the order of `ulp(M * R)` in the owner's slice.
//!
//! Float shares leak magnitude information. They are used here because the
//! protocol is defined over the reals and losslessness is checked against a
//! plaintext oracle in f64.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid step for mask values.
pub const MASK_QUANTUM: f64 = 1.0 / 4_294_967_296.0;

/// Default mask half-width.
pub const DEFAULT_MASK_RANGE: f64 = 1e3;

/// Participant index (1 = active participant) or the coordinator (0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId(pub u16);

impl PartyId {
    pub const COORDINATOR: PartyId = PartyId(0);
    pub const ACTIVE: PartyId = PartyId(1);
    pub const SECOND: PartyId = PartyId(2);

    pub fn participant(index: usize) -> PartyId {
        PartyId(index as u16)
    }

    pub fn is_coordinator(self) -> bool {
        self.0 == 0
    }

    pub fn is_active(self) -> bool {
        self.0 == 1
    }

    /// Zero-based slot among participants. Panics for the coordinator.
    pub fn slot(self) -> usize {
        assert!(!self.is_coordinator(), "coordinator holds no shares");
        self.0 as usize - 1
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_coordinator() {
            write!(f, "C")
        } else {
            write!(f, "P{}", self.0)
        }
    }
}

/// One party's slice of a shared vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShareVector {
    pub owner: PartyId,
    pub values: Vec<f64>,
}

/// A scalar share is a length-1 share vector.
pub type ShareValue = ShareVector;

impl ShareVector {
    pub fn new(owner: PartyId, values: Vec<f64>) -> Self {
        ShareVector { owner, values }
    }

    pub fn scalar(owner: PartyId, value: f64) -> Self {
        ShareVector { owner, values: vec![value] }
    }

    pub fn zeros(owner: PartyId, len: usize) -> Self {
        ShareVector { owner, values: vec![0.0; len] }
    }

    /// Share of a public constant: the active participant holds the value,
    /// everyone else holds zero.
    pub fn public(owner: PartyId, values: &[f64]) -> Self {
        if owner.is_active() {
            ShareVector::new(owner, values.to_vec())
        } else {
            ShareVector::zeros(owner, values.len())
        }
    }

    /// Share of a public constant split evenly: every party holds `v / M`.
    pub fn even(owner: PartyId, value: f64, parties: usize, len: usize) -> Self {
        ShareVector { owner, values: vec![value / parties as f64; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self) -> f64 {
        self.values[0]
    }

    fn check(&self, other: &ShareVector) -> Result<()> {
        if self.values.len() != other.values.len() {
            return Err(Error::Shape { left: self.values.len(), right: other.values.len() });
        }
        if self.owner != other.owner {
            return Err(Error::Protocol(format!(
                "share owners differ: {} vs {}",
                self.owner, other.owner
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &ShareVector) -> Result<ShareVector> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(ShareVector::new(self.owner, values))
    }

    pub fn sub(&self, other: &ShareVector) -> Result<ShareVector> {
        self.check(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(ShareVector::new(self.owner, values))
    }

    /// Multiply by a public scalar (local).
    pub fn scale(&self, k: f64) -> ShareVector {
        ShareVector::new(self.owner, self.values.iter().map(|v| v * k).collect())
    }

    /// Sum of all elements as a scalar share (local).
    pub fn sum(&self) -> ShareValue {
        ShareVector::scalar(self.owner, self.values.iter().sum())
    }

    /// Elements `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> ShareVector {
        ShareVector::new(self.owner, self.values[start..start + len].to_vec())
    }

    pub fn concat(parts: &[&ShareVector]) -> Result<ShareVector> {
        let owner = parts
            .first()
            .map(|p| p.owner)
            .ok_or_else(|| Error::Invalid("concat of nothing".into()))?;
        let mut values = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            if p.owner != owner {
                return Err(Error::Protocol("concat across owners".into()));
            }
            values.extend_from_slice(&p.values);
        }
        Ok(ShareVector::new(owner, values))
    }
}

impl Add for &ShareVector {
    type Output = ShareVector;
    fn add(self, rhs: &ShareVector) -> ShareVector {
        ShareVector::add(self, rhs).expect("share shapes agree")
    }
}

impl Sub for &ShareVector {
    type Output = ShareVector;
    fn sub(self, rhs: &ShareVector) -> ShareVector {
        ShareVector::sub(self, rhs).expect("share shapes agree")
    }
}

impl Neg for &ShareVector {
    type Output = ShareVector;
    fn neg(self) -> ShareVector {
        self.scale(-1.0)
    }
}

/// Draw one mask uniformly from `[-range, range]`, snapped to the mask grid.
pub fn draw_mask<R: Rng + ?Sized>(rng: &mut R, range: f64) -> f64 {
    let raw: f64 = rng.gen_range(-range..=range);
    (raw / MASK_QUANTUM).round() * MASK_QUANTUM
}

/// Split `x` into `parties` additive slices. `owner` keeps `x - sum(masks)`.
pub fn shr<R: Rng + ?Sized>(
    x: &[f64],
    owner: PartyId,
    parties: usize,
    range: f64,
    rng: &mut R,
) -> Result<Vec<ShareVector>> {
    if parties < 2 {
        return Err(Error::Topology(format!("need at least 2 participants, got {parties}")));
    }
    if owner.is_coordinator() || owner.0 as usize > parties {
        return Err(Error::Topology(format!("{owner} is not a participant")));
    }
    let n = x.len();
    let mut shares: Vec<ShareVector> =
        (1..=parties).map(|m| ShareVector::zeros(PartyId::participant(m), n)).collect();
    let mut mask_sum = vec![0.0; n];
    for share in shares.iter_mut().filter(|s| s.owner != owner) {
        for (v, acc) in share.values.iter_mut().zip(mask_sum.iter_mut()) {
            *v = draw_mask(rng, range);
            *acc += *v;
        }
    }
    let own = &mut shares[owner.slot()];
    for ((v, xi), m) in own.values.iter_mut().zip(x).zip(&mask_sum) {
        *v = xi - m;
    }
    Ok(shares)
}

/// Sum a complete share set in ascending party order.
pub fn reconstruct(shares: &[ShareVector]) -> Result<Vec<f64>> {
    let first = shares.first().ok_or(Error::IncompleteShares { expected: 1, got: 0 })?;
    let parties = shares.iter().map(|s| s.owner.0 as usize).max().unwrap_or(0);
    let mut by_party: BTreeMap<PartyId, &ShareVector> = BTreeMap::new();
    for s in shares {
        if s.owner.is_coordinator() {
            return Err(Error::Protocol("coordinator never holds shares".into()));
        }
        if s.len() != first.len() {
            return Err(Error::Shape { left: first.len(), right: s.len() });
        }
        if by_party.insert(s.owner, s).is_some() {
            return Err(Error::Protocol(format!("duplicate share from {}", s.owner)));
        }
    }
    if by_party.len() != parties || parties < 2 {
        return Err(Error::IncompleteShares { expected: parties.max(2), got: by_party.len() });
    }
    Ok(sum_ordered(by_party.values().map(|s| s.values.as_slice()), first.len()))
}

/// Element-wise sum of slices, taken in iteration order.
pub fn sum_ordered<'a, I>(slices: I, len: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = vec![0.0; len];
    for s in slices {
        for (o, v) in out.iter_mut().zip(s) {
            *o += v;
        }
    }
    out
}

/// One party's slice of a batch of element-wise Beaver triples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeaverTriple {
    /// Sequence number of the first element; used to detect reuse.
    pub id: u64,
    pub a: ShareVector,
    pub b: ShareVector,
    pub c: ShareVector,
}

impl BeaverTriple {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Coordinator-side triple generation: `a, b` uniform in `[-range, range]`,
/// `c = a * b`, each split with [`shr`] owned by the active participant.
pub fn triple_gen<R: Rng + ?Sized>(
    caller: PartyId,
    id: u64,
    len: usize,
    parties: usize,
    range: f64,
    rng: &mut R,
) -> Result<Vec<BeaverTriple>> {
    if !caller.is_coordinator() {
        return Err(Error::Role(format!("{caller} cannot issue triples")));
    }
    let a: Vec<f64> = (0..len).map(|_| draw_mask(rng, range)).collect();
    let b: Vec<f64> = (0..len).map(|_| draw_mask(rng, range)).collect();
    let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let sa = shr(&a, PartyId::ACTIVE, parties, range, rng)?;
    let sb = shr(&b, PartyId::ACTIVE, parties, range, rng)?;
    let sc = shr(&c, PartyId::ACTIVE, parties, range, rng)?;
    Ok(sa
        .into_iter()
        .zip(sb)
        .zip(sc)
        .map(|((a, b), c)| BeaverTriple { id, a, b, c })
        .collect())
}

/// Local half of Beaver multiplication: given the opened `e = x - a` and
/// `f = y - b`, produce this party's slice of `x * y`.
pub fn beaver_combine(e: &[f64], f: &[f64], triple: &BeaverTriple) -> ShareVector {
    let owner = triple.a.owner;
    let first = owner.is_active();
    let values = (0..e.len())
        .map(|i| {
            let mut z = f[i] * triple.a.values[i] + e[i] * triple.b.values[i] + triple.c.values[i];
            if first {
                z += e[i] * f[i];
            }
            z
        })
        .collect();
    ShareVector::new(owner, values)
}

/// Accounting bucket for a multiplication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MulPhase {
    BucketAgg,
    CandidatePrep,
    Argmax,
    GainSign,
    ChildPrep,
    LeafWeight,
    Predict,
    Division,
    Other,
}

impl MulPhase {
    pub const ALL: [MulPhase; 9] = [
        MulPhase::BucketAgg,
        MulPhase::CandidatePrep,
        MulPhase::Argmax,
        MulPhase::GainSign,
        MulPhase::ChildPrep,
        MulPhase::LeafWeight,
        MulPhase::Predict,
        MulPhase::Division,
        MulPhase::Other,
    ];

    /// Phases that make up the per-node split cost.
    pub fn is_split_phase(self) -> bool {
        matches!(
            self,
            MulPhase::BucketAgg | MulPhase::Argmax | MulPhase::GainSign | MulPhase::ChildPrep
        )
    }
}

/// Counts multiplication invocations. A vector MUL of any length counts 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MulCounter {
    pub total: u64,
    pub by_phase: BTreeMap<MulPhase, u64>,
}

impl MulCounter {
    pub fn record(&mut self, phase: MulPhase) {
        self.total += 1;
        *self.by_phase.entry(phase).or_default() += 1;
    }

    pub fn get(&self, phase: MulPhase) -> u64 {
        self.by_phase.get(&phase).copied().unwrap_or(0)
    }

    pub fn split_phase(&self) -> u64 {
        self.by_phase.iter().filter(|(p, _)| p.is_split_phase()).map(|(_, c)| c).sum()
    }

    /// `self - earlier`, phase by phase.
    pub fn since(&self, earlier: &MulCounter) -> MulCounter {
        let mut out = MulCounter { total: self.total - earlier.total, ..Default::default() };
        for (p, c) in &self.by_phase {
            let d = c - earlier.get(*p);
            if d > 0 {
                out.by_phase.insert(*p, d);
            }
        }
        out
    }
}
