//! Division-free split selection.
//!
//! Candidate losses are fractions `𝒢/ℋ` with `𝒢 = G²` and `ℋ = H + λ`. Two
//! candidates are compared by bringing `L1 − L2` over a common denominator
//! and learning only its sign: `ℋ` is restored on P1, `𝒢` on P2, P2 sends its
//! sign bit to P1 and P1 broadcasts the product.
//!
//! Selection is a single-elimination bracket: within each feature first, then
//! across feature champions. The incumbent (lower index) keeps its place
//! unless the challenger's gain is larger by more than the tie tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::Party;
use crate::share::{MulPhase, PartyId, ShareVector};
use crate::transport::{slot, Tag};

/// Reconstructed values with magnitude below this are reported as sign 0.
pub const ZERO_BAND: f64 = 1e-12;

/// How comparison MULs are grouped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountingMode {
    /// All matches of one bracket round share 9 vector MULs.
    #[default]
    Batched,
    /// Every match runs its own 9 MULs.
    PerMatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub mode: CountingMode,
    /// Gain differences (and gains) at or below this count as ties / non-positive.
    pub tolerance: f64,
    pub zero_band: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig { mode: CountingMode::Batched, tolerance: 1e-6, zero_band: ZERO_BAND }
    }
}

/// Shares of the per-candidate fraction terms for one node.
#[derive(Clone, Debug)]
pub struct CandidateStats {
    /// `G_L²`
    pub gl: ShareVector,
    /// `G_R²`
    pub gr: ShareVector,
    /// `H_L + λ`
    pub hl: ShareVector,
    /// `H_R + λ`
    pub hr: ShareVector,
}

impl CandidateStats {
    pub fn len(&self) -> usize {
        self.gl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gl.is_empty()
    }
}

/// Candidate ranges per feature, in ascending global feature id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateLayout {
    /// `(global feature id, first candidate index, candidate count)`
    pub features: Vec<(usize, usize, usize)>,
}

impl CandidateLayout {
    pub fn new(features: &[(usize, usize)]) -> Self {
        let mut start = 0;
        let features = features
            .iter()
            .map(|&(g, n)| {
                let e = (g, start, n);
                start += n;
                e
            })
            .collect();
        CandidateLayout { features }
    }

    pub fn len(&self) -> usize {
        self.features.iter().map(|f| f.2).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(global feature id, bucket)` of candidate `c`.
    pub fn locate(&self, c: usize) -> (usize, usize) {
        let &(g, start, _) = self
            .features
            .iter()
            .find(|&&(_, s, n)| c >= s && c < s + n)
            .expect("candidate index in range");
        (g, c - start)
    }
}

fn gather(x: &ShareVector, idx: &[usize]) -> ShareVector {
    ShareVector::new(x.owner, idx.iter().map(|&i| x.values[i]).collect())
}

/// Common-denominator difference `L(c1) − L(c2) = 𝒢/ℋ`, element-wise over
/// candidate pairs. Exactly 9 MULs regardless of the number of pairs.
pub fn diff_numerator_denominator(
    p: &mut Party,
    s: &CandidateStats,
    c1: &[usize],
    c2: &[usize],
) -> Result<(ShareVector, ShareVector)> {
    if c1.len() != c2.len() {
        return Err(Error::Shape { left: c1.len(), right: c2.len() });
    }
    let (gl1, gl2) = (gather(&s.gl, c1), gather(&s.gl, c2));
    let (gr1, gr2) = (gather(&s.gr, c1), gather(&s.gr, c2));
    let (hl1, hl2) = (gather(&s.hl, c1), gather(&s.hl, c2));
    let (hr1, hr2) = (gather(&s.hr, c1), gather(&s.hr, c2));
    let ph = MulPhase::Argmax;
    let x1 = p.mul(&gl1, &hl2, ph)?;
    let x2 = p.mul(&gl2, &hl1, ph)?;
    let y1 = p.mul(&gr1, &hr2, ph)?;
    let y2 = p.mul(&gr2, &hr1, ph)?;
    let pr = p.mul(&hr1, &hr2, ph)?;
    let pl = p.mul(&hl1, &hl2, ph)?;
    let s1 = p.mul(&pr, &(&x1 - &x2), ph)?;
    let s2 = p.mul(&pl, &(&y1 - &y2), ph)?;
    let den = p.mul(&pl, &pr, ph)?;
    Ok((&s1 + &s2, den))
}

fn sign_of(v: f64, band: f64) -> f64 {
    if v.abs() < band {
        0.0
    } else {
        v.signum()
    }
}

/// Sign of `num/den` element-wise. `den` is restored on P1 only, `num` on P2
/// only; every participant receives the verdicts (−1, 0 or +1).
pub fn sign_protocol(p: &mut Party, num: &ShareVector, den: &ShareVector, zero_band: f64) -> Result<Vec<i8>> {
    if num.len() != den.len() {
        return Err(Error::Shape { left: num.len(), right: den.len() });
    }
    let d = p.restore_at(PartyId::ACTIVE, den, Tag::SignVote, slot::DENOMINATOR)?;
    let n = p.restore_at(PartyId::SECOND, num, Tag::SignVote, slot::NUMERATOR)?;
    let bits = n.map(|v| v.iter().map(|&x| sign_of(x, zero_band)).collect());
    let bits = p.relay(PartyId::SECOND, PartyId::ACTIVE, bits, Tag::SignVerdict, slot::NUMERATOR)?;
    let verdict = match (d, bits) {
        (Some(d), Some(b)) => {
            if b.len() != d.len() {
                return Err(Error::Shape { left: b.len(), right: d.len() });
            }
            Some(d.iter().zip(&b).map(|(&dv, &bv)| bv * sign_of(dv, zero_band)).collect())
        }
        _ => None,
    };
    let v = p.broadcast_from(PartyId::ACTIVE, verdict, Tag::SignVerdict, slot::NONE)?;
    Ok(v.into_iter().map(|x| x as i8).collect())
}

/// Run a single-elimination bracket over `entrants` (in index order).
/// `challenger_wins` receives `(incumbent, challenger)` pairs; in batched
/// mode a whole round at a time, otherwise one pair per call.
pub fn bracket<F>(entrants: &[usize], batched: bool, mut challenger_wins: F) -> Result<usize>
where
    F: FnMut(&[(usize, usize)]) -> Result<Vec<bool>>,
{
    let mut alive = entrants.to_vec();
    if alive.is_empty() {
        return Err(Error::Invalid("bracket with no entrants".into()));
    }
    while alive.len() > 1 {
        let pairs: Vec<(usize, usize)> = alive.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let results = if batched {
            challenger_wins(&pairs)?
        } else {
            let mut r = Vec::with_capacity(pairs.len());
            for pair in &pairs {
                r.extend(challenger_wins(std::slice::from_ref(pair))?);
            }
            r
        };
        if results.len() != pairs.len() {
            return Err(Error::Shape { left: results.len(), right: pairs.len() });
        }
        let mut next: Vec<usize> =
            pairs.iter().zip(&results).map(|(&(a, b), &w)| if w { b } else { a }).collect();
        if alive.len() % 2 == 1 {
            next.push(*alive.last().unwrap());
        }
        alive = next;
    }
    Ok(alive[0])
}

/// Secure argmax over all candidates in `layout`; returns the winning
/// candidate index. Every participant learns the same winner.
pub fn secure_argmax(p: &mut Party, s: &CandidateStats, layout: &CandidateLayout, cfg: &SelectConfig) -> Result<usize> {
    if layout.is_empty() {
        return Err(Error::Invalid("no split candidates".into()));
    }
    if layout.len() != s.len() {
        return Err(Error::Shape { left: layout.len(), right: s.len() });
    }
    let batched = cfg.mode == CountingMode::Batched;
    let mut compare = |pairs: &[(usize, usize)]| -> Result<Vec<bool>> {
        let (c1, c2): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let (num, den) = diff_numerator_denominator(p, s, &c1, &c2)?;
        // challenger must beat the incumbent by more than the tolerance
        let shifted = &num + &den.scale(2.0 * cfg.tolerance);
        let v = sign_protocol(p, &shifted, &den, cfg.zero_band)?;
        Ok(v.into_iter().map(|x| x < 0).collect())
    };
    let mut champions = Vec::with_capacity(layout.features.len());
    for &(_, start, n) in &layout.features {
        let entrants: Vec<usize> = (start..start + n).collect();
        champions.push(bracket(&entrants, batched, &mut compare)?);
    }
    bracket(&champions, batched, &mut compare)
}

/// Sign of the best candidate's gain minus the tolerance, in exactly 8 MULs.
/// `loss_n = gΣ²`, `loss_d = hΣ + λ`, `gamma` is the shared split penalty.
pub fn best_gain_sign(
    p: &mut Party,
    s: &CandidateStats,
    c: usize,
    loss_n: &ShareVector,
    loss_d: &ShareVector,
    gamma: &ShareVector,
    cfg: &SelectConfig,
) -> Result<i8> {
    let (num, den) = gain_fraction(p, s, c, loss_n, loss_d, gamma)?;
    let shifted = &num - &den.scale(2.0 * cfg.tolerance);
    Ok(sign_protocol(p, &shifted, &den, cfg.zero_band)?[0])
}

/// `(𝒩, 𝒟)` with `𝒩/𝒟` equal to twice the split gain.
pub fn gain_fraction(
    p: &mut Party,
    s: &CandidateStats,
    c: usize,
    loss_n: &ShareVector,
    loss_d: &ShareVector,
    gamma: &ShareVector,
) -> Result<(ShareVector, ShareVector)> {
    let gl = gather(&s.gl, &[c]);
    let gr = gather(&s.gr, &[c]);
    let hl = gather(&s.hl, &[c]);
    let hr = gather(&s.hr, &[c]);
    let ph = MulPhase::GainSign;
    let a = p.mul(&gl, &hr, ph)?;
    let a = p.mul(&a, loss_d, ph)?;
    let b = p.mul(&gr, &hl, ph)?;
    let b = p.mul(&b, loss_d, ph)?;
    let lr = p.mul(&hl, &hr, ph)?;
    let parent = p.mul(loss_n, &lr, ph)?;
    let den = p.mul(&lr, loss_d, ph)?;
    let penalty = p.mul(gamma, &den, ph)?;
    let num = &(&(&a + &b) - &parent) - &penalty.scale(2.0);
    Ok((num, den))
}

pub fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}

/// Analytic MUL count of the division-free argmax: `9J⌈log₂K⌉ + 9⌈log₂J⌉`.
pub fn counter_formula(j: u64, k: u64) -> u64 {
    9 * j * ceil_log2(k) + 9 * ceil_log2(j)
}

/// Batched-mode argmax MULs for a node whose features have the given
/// candidate counts.
pub fn batched_argmax_muls(candidate_counts: &[usize]) -> u64 {
    let within: u64 = candidate_counts.iter().map(|&k| 9 * ceil_log2(k as u64)).sum();
    within + 9 * ceil_log2(candidate_counts.len() as u64)
}

/// Per-match argmax MULs: one 9-MUL comparison per eliminated candidate.
pub fn per_match_argmax_muls(candidate_counts: &[usize]) -> u64 {
    let total: usize = candidate_counts.iter().sum();
    9 * (total.saturating_sub(1)) as u64
}
