//! Closed-form transmission-interval bounds and the scalar Riccati clock that
//! independently reproduces them.
//!
//! A [`GainTriple`] packs the three numbers that summarize a networked loop
//! for interval analysis: `l` — the growth rate of the network-error measure
//! W along flows, `gamma` — the L2-gain onto W, and `lambda` — the contraction
//! factor of the scheduling protocol at transmissions (`lambda = 0` is the
//! sampled-data case). The guaranteed interval equals the time the clock
//! variable φ, governed by φ̇ = −2Lφ − γ(φ² + 1), takes to fall from λ⁻¹ to λ.
//! [`mati_bound`] evaluates that transit in closed form, branching on the sign
//! of γ − L; [`phi_transit_time`] integrates the clock numerically and serves
//! as an independent oracle for the closed form.
//!
//! The bound is reported as a value; whether the admissible intervals are the
//! open or the closed set below it is left to the caller.

use crate::error::{Error, Result};
use serde::Serialize;

/// (L, γ, λ) with L > 0, γ > 0, 0 ≤ λ < 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainTriple {
    pub l: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl GainTriple {
    pub fn new(l: f64, gamma: f64, lambda: f64) -> Result<Self> {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::domain(format!("L must be positive and finite, got {l}")));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::domain(format!("gamma must be positive and finite, got {gamma}")));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::domain(format!("lambda must lie in [0, 1), got {lambda}")));
        }
        Ok(GainTriple { l, gamma, lambda })
    }
}

/// Which branch of the closed form applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    GammaGreater,
    GammaEqual,
    GammaLess,
}

/// A computed interval bound together with its branch and the ratio
/// parameter r = √|(γ/L)² − 1|.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MatiBound {
    pub value: f64,
    pub regime: Regime,
    pub r: f64,
}

/// r = √|(γ/L)² − 1|; exactly 0 when γ = L.
pub fn compute_r(l: f64, gamma: f64) -> Result<f64> {
    if !(l > 0.0) || !(gamma > 0.0) || !l.is_finite() || !gamma.is_finite() {
        return Err(Error::domain(format!(
            "compute_r needs positive finite arguments, got L = {l}, gamma = {gamma}"
        )));
    }
    if gamma == l {
        return Ok(0.0);
    }
    let q = gamma / l;
    Ok((q * q - 1.0).abs().sqrt())
}

/// γ and L within 1e-12 relative are treated as equal: the three branches
/// agree in that limit, so the coarse classification is harmless.
fn classify(l: f64, gamma: f64) -> Regime {
    if (gamma - l).abs() <= 1e-12 * gamma.max(l) {
        Regime::GammaEqual
    } else if gamma > l {
        Regime::GammaGreater
    } else {
        Regime::GammaLess
    }
}

/// Closed-form guaranteed transmission interval for a gain triple.
///
/// Evaluated in a form that stays stable for extreme gain ratios: with
/// s = √|γ² − L²| (= L·r) the γ > L branch is arctan(s·(1−λ)/q)/s where
/// q = (L(1+λ²) + 2λγ)/(1+λ) > 0, the γ < L branch replaces arctan by
/// arctanh, and the γ = L branch is (1−λ)/(L(1+λ)). At λ = 0 the argument
/// reduces to r, recovering the sampled-data expression exactly.
///
/// The value is the supremum of the safe interval; whether the endpoint
/// itself is admissible (strict vs. non-strict comparison against the
/// transmission interval) is left to the caller.
pub fn mati_bound(g: GainTriple) -> MatiBound {
    let GainTriple { l, gamma, lambda } = g;
    let regime = classify(l, gamma);
    let r = compute_r(l, gamma).expect("validated by GainTriple");
    let q = (l * (1.0 + lambda * lambda) + 2.0 * lambda * gamma) / (1.0 + lambda);
    let value = match regime {
        Regime::GammaEqual => (1.0 - lambda) / (l * (1.0 + lambda)),
        Regime::GammaGreater => {
            let s = (gamma * gamma - l * l).sqrt();
            (s * (1.0 - lambda) / q).atan() / s
        }
        Regime::GammaLess => {
            let s = (l * l - gamma * gamma).sqrt();
            (s * (1.0 - lambda) / q).atanh() / s
        }
    };
    MatiBound { value, regime, r }
}

/// Right-hand side of the clock dynamics φ̇ = −2Lφ − γ(φ² + 1).
fn phi_rhs(l: f64, gamma: f64, phi: f64) -> f64 {
    -2.0 * l * phi - gamma * (phi * phi + 1.0)
}

fn rk4_step(l: f64, gamma: f64, phi: f64, h: f64) -> f64 {
    let k1 = phi_rhs(l, gamma, phi);
    let k2 = phi_rhs(l, gamma, phi + 0.5 * h * k1);
    let k3 = phi_rhs(l, gamma, phi + 0.5 * h * k2);
    let k4 = phi_rhs(l, gamma, phi + h * k3);
    phi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Substep size at the current φ: at most ~1% displacement per step, and at
/// most 2% of the local linearization time scale 1/(2L + 2γ|φ|). The first
/// cap tames the stiff transient from large φ₀ (the λ → 0 surrogate starts
/// at 10⁶); the second keeps the step small relative to the contraction rate
/// even where the displacement per unit time is tiny (φ near zero with small
/// γ), which otherwise leaks a time-parametrization error past 10⁻⁶.
fn phi_step_cap(l: f64, gamma: f64, phi: f64) -> f64 {
    let rate = phi_rhs(l, gamma, phi).abs();
    let disp = if rate > 0.0 { 0.01 * (1.0 + phi.abs()) / rate } else { f64::INFINITY };
    disp.min(0.02 / (2.0 * l + 2.0 * gamma * phi.abs()))
}

/// Advance φ by `dt`, internally splitting the step per [`phi_step_cap`].
pub(crate) fn phi_advance(l: f64, gamma: f64, mut phi: f64, dt: f64) -> f64 {
    let mut remaining = dt;
    while remaining > 0.0 {
        let h = remaining.min(phi_step_cap(l, gamma, phi));
        phi = rk4_step(l, gamma, phi, h);
        remaining -= h;
    }
    phi
}

/// Sampled clock trajectory from `phi0` on a fixed output grid.
#[derive(Debug, Clone)]
pub struct PhiTrajectory {
    pub samples: Vec<(f64, f64)>,
    pub l: f64,
    pub gamma: f64,
    pub phi0: f64,
}

/// Integrate the clock from φ(0) = `phi0` and report samples at 0, step,
/// 2·step, …, `tau_end`. Sample spacing is `step`; the integration between
/// samples refines its own substeps, so the grid choice only controls output
/// resolution, not accuracy.
pub fn phi_flow(l: f64, gamma: f64, phi0: f64, tau_end: f64, step: f64) -> Result<PhiTrajectory> {
    if !(step > 0.0) {
        return Err(Error::domain(format!("phi_flow step must be positive, got {step}")));
    }
    if !(tau_end >= 0.0) {
        return Err(Error::domain(format!("phi_flow horizon must be nonnegative, got {tau_end}")));
    }
    if !(l > 0.0) || !(gamma > 0.0) {
        return Err(Error::domain("phi_flow needs positive L and gamma"));
    }
    let mut samples = vec![(0.0, phi0)];
    let mut phi = phi0;
    let mut tau = 0.0;
    while tau < tau_end {
        let next = (tau + step).min(tau_end);
        phi = phi_advance(l, gamma, phi, next - tau);
        tau = next;
        samples.push((tau, phi));
    }
    Ok(PhiTrajectory { samples, l, gamma, phi0 })
}

/// Surrogate initial value standing in for λ⁻¹ = ∞ in the sampled-data case.
pub const LAMBDA_ZERO_PHI0: f64 = 1e6;

/// Time for φ to fall from λ⁻¹ to λ — numerically, by event detection on the
/// integrated clock with the crossing bracket refined by bisection to 1e-9.
/// For λ = 0 the initial value λ⁻¹ = ∞ is replaced by the surrogate 10⁶ and
/// the target by 0; the offset this introduces is O(1/(γ·10⁶)).
pub fn phi_transit_time(g: GainTriple) -> Result<f64> {
    let GainTriple { l, gamma, lambda } = g;
    let (phi0, target) = if lambda > 0.0 { (1.0 / lambda, lambda) } else { (LAMBDA_ZERO_PHI0, 0.0) };
    let horizon = 10.0 / l;

    let mut t = 0.0;
    let mut phi = phi0;
    while t < horizon {
        let h = phi_step_cap(l, gamma, phi).min(horizon - t);
        let phi_next = rk4_step(l, gamma, phi, h);
        if phi_next < target {
            // crossing inside [t, t + h]: bisect on the substep offset
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                if phi_advance(l, gamma, phi, mid) < target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(t + 0.5 * (lo + hi));
        }
        phi = phi_next;
        t += h;
    }
    Err(Error::Convergence(format!(
        "phi did not reach {target} within horizon {horizon} (L = {l}, gamma = {gamma})"
    )))
}
