//! Secure reciprocal by Newton iteration, the division baseline.
//!
//! `x ← x(2 − dx)` on shares costs two MULs per iteration. The start value
//! comes from the order of magnitude of each party's slice of `d`, which P1
//! collects and turns into a public `x⁽⁰⁾ = 10^−(μmax+1)`.

use crate::error::{Error, Result};
use crate::party::Party;
use crate::share::{MulPhase, PartyId, ShareVector};
use crate::transport::{slot, Tag};

pub const DEFAULT_ITERATIONS: u32 = 20;

/// MULs for one gain via two divisions, times `J·K` candidates.
pub fn argmax_via_div_counter(j: u64, k: u64) -> u64 {
    82 * j * k
}

/// MULs for one full division with `n` Newton iterations.
pub fn division_muls(n: u32) -> u64 {
    2 * n as u64 + 1
}

/// `μ` with `|s| = d′·10^μ`, `d′ ∈ (0.1, 1]`. Zero gives `−∞`.
pub fn order_of_magnitude(s: f64) -> f64 {
    let a = s.abs();
    if a == 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut mu = a.log10().floor() + 1.0;
    if a <= 10f64.powf(mu - 1.0) {
        mu -= 1.0;
    } else if a > 10f64.powf(mu) {
        mu += 1.0;
    }
    mu
}

/// Start value from all parties' reported magnitudes. `None` if every slice
/// was zero.
pub fn initial_estimate(magnitudes: &[f64]) -> Option<f64> {
    let mu = magnitudes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    mu.is_finite().then(|| 10f64.powf(-(mu + 1.0)))
}

#[derive(Clone, Debug)]
pub struct NewtonState {
    pub x: ShareVector,
    pub n: u32,
}

/// Each party reports `μ_m` per element to P1, which broadcasts `x⁽⁰⁾`;
/// every party then holds `x⁽⁰⁾/M`.
pub fn init_reciprocal(p: &mut Party, d: &ShareVector) -> Result<NewtonState> {
    let len = d.len();
    let mine: Vec<f64> = d.values.iter().map(|&s| order_of_magnitude(s)).collect();
    let round = p.next_round();
    let x0 = if p.id == PartyId::ACTIVE {
        let mut reports = vec![mine];
        for m in 2..=p.parties {
            let v = p.endpoint().recv_reals(PartyId::participant(m), Tag::MagnitudeReport, round, slot::ORDER_OF_MAGNITUDE)?;
            if v.len() != len {
                return Err(Error::Shape { left: v.len(), right: len });
            }
            reports.push(v);
        }
        let x0: Vec<f64> = (0..len)
            .map(|i| {
                let col: Vec<f64> = reports.iter().map(|r| r[i]).collect();
                initial_estimate(&col).unwrap_or(f64::NAN)
            })
            .collect();
        p.broadcast_from(PartyId::ACTIVE, Some(x0), Tag::MagnitudeReport, slot::NONE)?
    } else {
        p.endpoint().send_reals(PartyId::ACTIVE, round, Tag::MagnitudeReport, slot::ORDER_OF_MAGNITUDE, mine)?;
        p.broadcast_from(PartyId::ACTIVE, None, Tag::MagnitudeReport, slot::NONE)?
    };
    if let Some(i) = x0.iter().position(|v| v.is_nan()) {
        return Err(Error::Invalid(format!("element {i}: every share is zero, magnitude undefined")));
    }
    let m = p.parties as f64;
    Ok(NewtonState { x: ShareVector::new(p.id, x0.iter().map(|v| v / m).collect()), n: 0 })
}

/// One iteration: `x ← x ⊗ (2/M − d ⊗ x)`.
pub fn newton_step(p: &mut Party, d: &ShareVector, state: &mut NewtonState) -> Result<()> {
    let dx = p.mul(d, &state.x, MulPhase::Division)?;
    let two = p.even(2.0, d.len());
    let corr = &two - &dx;
    state.x = p.mul(&state.x, &corr, MulPhase::Division)?;
    state.n += 1;
    Ok(())
}

/// Shares of `1/d` after `n` iterations.
pub fn newton_reciprocal(p: &mut Party, d: &ShareVector, n: u32) -> Result<ShareVector> {
    if n < 1 {
        return Err(Error::Invalid("newton iterations must be at least 1".into()));
    }
    let mut st = init_reciprocal(p, d)?;
    for _ in 0..n {
        newton_step(p, d, &mut st)?;
    }
    Ok(st.x)
}

/// Shares of `num/den` (elementwise): `2n + 1` MULs.
pub fn secure_divide(p: &mut Party, num: &ShareVector, den: &ShareVector, n: u32) -> Result<ShareVector> {
    let r = newton_reciprocal(p, den, n)?;
    p.mul(num, &r, MulPhase::Division)
}

/// Leaf weight `−b/a` through division instead of descent.
pub fn newton_leaf_weight(p: &mut Party, a: &ShareVector, b: &ShareVector, lambda: f64, n: u32) -> Result<ShareVector> {
    let a_reg = &p.even(lambda, a.len()) + a;
    let neg_b = b.scale(-1.0);
    secure_divide(p, &neg_b, &a_reg, n)
}

/// Plaintext replay: `x⁽⁰⁾ … x⁽ⁿ⁾`.
pub fn newton_plain(d: f64, x0: f64, n: u32) -> Vec<f64> {
    let mut xs = vec![x0];
    let mut x = x0;
    for _ in 0..n {
        x *= 2.0 - d * x;
        xs.push(x);
    }
    xs
}
