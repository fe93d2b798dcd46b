//! Leaf weights by perturbed gradient descent on `½aw² + bw`.
//!
//! P1 learns only `a + Σσ` (each party adds its own positive perturbation to
//! its slice of `a`), from which it sets the step `η' = 1/(a + Σσ) ≤ 1/a` and
//! an iteration count that guarantees `|w + b/a| ≤ ε`. The descent itself runs
//! on shares; every step after the first needs one MUL for `a·w`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::Party;
use crate::share::{MulPhase, PartyId, ShareVector};
use crate::transport::{slot, Tag};

/// Default lower bound assumed for `aε/|b|` when `b` is hidden from P1.
pub const DEFAULT_RATIO_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    #[default]
    Perturbed,
    /// No perturbation: `η = 1/a` and a single step. Reveals `a` to P1.
    ExactStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafParams {
    pub lambda: f64,
    pub mu: f64,
    pub ratio_floor: f64,
    pub mode: StepMode,
}

impl Default for LeafParams {
    fn default() -> Self {
        LeafParams { lambda: 1.0, mu: 2.0, ratio_floor: DEFAULT_RATIO_FLOOR, mode: StepMode::Perturbed }
    }
}

/// Step size and iteration count chosen by P1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub eta: f64,
    pub t: u32,
    /// `(a + Σσ)/(μλ)`; only meaningful on P1.
    pub v: f64,
    /// Contraction is at most `(r − 1)/r` per step; only meaningful on P1.
    pub r: f64,
}

impl StepPlan {
    pub fn for_perturbed_sum(sum: f64, params: &LeafParams) -> Result<StepPlan> {
        if !(sum > 0.0) {
            return Err(Error::Protocol(format!("perturbed curvature {sum} is not positive")));
        }
        let v = sum / (params.mu * params.lambda);
        let t = iteration_bound(v, params.mu, params.ratio_floor)?;
        Ok(StepPlan { eta: 1.0 / sum, t, v, r: effective_r(v, params.mu) })
    }
}

fn effective_r(v: f64, mu: f64) -> f64 {
    if v <= (mu + 1.0) / mu {
        v * mu
    } else {
        v / (v - 1.0)
    }
}

/// Iterations needed for `|w + b/a| ≤ ε` given `ratio = aε/|b|`.
pub fn iteration_bound(v: f64, mu: f64, ratio: f64) -> Result<u32> {
    if !(ratio > 0.0) {
        return Err(Error::Invalid(format!("ratio {ratio} must be positive")));
    }
    if !(mu > 1.0) {
        return Err(Error::Invalid(format!("mu {mu} must exceed 1")));
    }
    if v <= 1.0 / mu {
        return Err(Error::Invalid(format!("v = {v} is at or below 1/mu")));
    }
    if ratio >= 1.0 {
        return Ok(1);
    }
    let steps = |factor: f64| (ratio.ln() / factor.ln()).ceil();
    let by_floor = steps((v * mu - 1.0) / (v * mu));
    let by_ratio = if v > 1.0 { steps(1.0 / v) } else { f64::INFINITY };
    Ok(by_floor.min(by_ratio).max(1.0) as u32)
}

/// Plaintext replay of the descent: `w_t = ((1 − ηa)^t − 1)·b/a`.
pub fn closed_form(a: f64, b: f64, eta: f64, t: u32) -> f64 {
    ((1.0 - eta * a).powi(t as i32) - 1.0) * b / a
}

/// Smallest `t` with `|w_t + b/a| ≤ eps` under step `eta`.
pub fn iterations_to_eps(a: f64, b: f64, eta: f64, eps: f64) -> u32 {
    let mut w = 0.0;
    let mut t = 0;
    while (w + b / a).abs() > eps {
        w -= eta * (a * w + b);
        t += 1;
    }
    t
}

/// Securely compute the share of `−b/a`. `a` already includes `λ`.
pub fn secure_leaf_weight(
    p: &mut Party,
    a: &ShareVector,
    b: &ShareVector,
    params: &LeafParams,
) -> Result<(ShareVector, StepPlan)> {
    if a.len() != 1 || b.len() != 1 {
        return Err(Error::Shape { left: a.len(), right: 1 });
    }
    let sigma = match params.mode {
        StepMode::ExactStep => 0.0,
        StepMode::Perturbed => {
            let cap = params.mu * params.lambda / p.parties as f64;
            loop {
                let s: f64 = p.rng().gen_range(0.0..=cap);
                if s > 0.0 {
                    break s;
                }
            }
        }
    };
    let report = ShareVector::scalar(p.id, a.value() + sigma);
    let sum = p.restore_at(PartyId::ACTIVE, &report, Tag::MagnitudeReport, slot::PERTURBED_CURVATURE)?;
    let plan = match (sum, params.mode) {
        (Some(s), StepMode::Perturbed) => Some(StepPlan::for_perturbed_sum(s[0], params)?),
        (Some(s), StepMode::ExactStep) => Some(StepPlan { eta: 1.0 / s[0], t: 1, v: f64::NAN, r: f64::NAN }),
        (None, _) => None,
    };
    let announced = p.broadcast_from(
        PartyId::ACTIVE,
        plan.map(|pl| vec![pl.eta, pl.t as f64]),
        Tag::StepSize,
        slot::NONE,
    )?;
    let plan = plan.unwrap_or(StepPlan { eta: announced[0], t: announced[1] as u32, v: f64::NAN, r: f64::NAN });
    // w starts at the public value 0, so the first step needs no MUL
    let mut w = b.scale(-plan.eta);
    for _ in 1..plan.t {
        let aw = p.mul(a, &w, MulPhase::LeafWeight)?;
        w = &w - &(&aw + b).scale(plan.eta);
    }
    Ok((w, plan))
}
