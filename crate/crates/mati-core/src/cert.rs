//! Numerical verification of scalar-loop certificates.
//!
//! For the loop ẋ = f(x,e) = −2x + d·x² − x³ − 2e (|d| ≤ 1, ė = −ẋ) with
//! error measure W = |e| and storage V(x) = c4·x⁴ + c2·x², a certificate
//! (c4, c2, k, δ, γ) claims two pointwise inequalities: the growth bound
//!
//! ```text
//! sign(e)·g(x,e) ≤ L_k·|e| + H_k(x,e),   L_k = 2 − k,
//! ```
//!
//! and the dissipation inequality
//!
//! ```text
//! −⟨∇V, f⟩ − δ²x² − δ²e² − H_k² + γ²e² ≥ 0.
//! ```
//!
//! Here H_k(x,e) = |g(x,e) − L_k·e| = |2x − d·x² + x³ + k·e|, which makes the
//! growth bound a triangle identity. The unknown d enters the dissipation
//! polynomial through d and d² only, so checking the four corner pairs
//! (d, d²) ∈ {(1,0), (1,1), (−1,0), (−1,1)} — whose convex hull contains the
//! curve {(d, d²) : |d| ≤ 1} — covers every admissible d. Verification
//! samples a dense grid on a box; a leading-coefficient check (4c4 − 1 > 0
//! radially in x, γ² − δ² − k² > 0 in e) extends coverage informally beyond
//! the box. A verified certificate converts to a guaranteed transmission
//! interval through the λ = 0 closed form with L = 2 − k.

use crate::bound::{mati_bound, GainTriple, MatiBound};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolyCertificate {
    pub c4: f64,
    pub c2: f64,
    pub k: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl PolyCertificate {
    pub fn from_k(c4: f64, c2: f64, k: f64, delta: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("c4", c4), ("c2", c2), ("k", k), ("delta", delta), ("gamma", gamma)] {
            if !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite, got {v}")));
            }
        }
        if c4 < 0.0 || c2 < 0.0 || (c4 == 0.0 && c2 == 0.0) {
            return Err(Error::domain(format!(
                "V = {c4}x^4 + {c2}x^2 must be positive definite"
            )));
        }
        if !(0.0..2.0).contains(&k) {
            return Err(Error::domain(format!("k must lie in [0, 2), got {k}")));
        }
        if !(delta > 0.0) {
            return Err(Error::domain(format!("delta must be positive, got {delta}")));
        }
        if gamma < delta {
            return Err(Error::domain(format!("gamma ({gamma}) must be at least delta ({delta})")));
        }
        Ok(PolyCertificate { c4, c2, k, delta, gamma })
    }

    /// Construct from the growth rate L instead of k (k = 2 − L).
    pub fn from_l(c4: f64, c2: f64, l: f64, delta: f64, gamma: f64) -> Result<Self> {
        if !(l > 0.0 && l <= 2.0) {
            return Err(Error::domain(format!("L must lie in (0, 2], got {l}")));
        }
        PolyCertificate::from_k(c4, c2, 2.0 - l, delta, gamma)
    }

    pub fn l(&self) -> f64 {
        2.0 - self.k
    }
}

/// Dissipation left-hand side with (d, d2) as independent symbols; setting
/// d2 = d·d recovers the literal inequality for parameter value d.
pub fn eval_poly_lhs(cert: &PolyCertificate, x: f64, e: f64, d: f64, d2: f64) -> f64 {
    let grad_v = 4.0 * cert.c4 * x * x * x + 2.0 * cert.c2 * x;
    // f = (−2x − x³ − 2e) + d·x²; H_k = (2x + x³ + ke) − d·x²
    let f_base = -2.0 * x - x * x * x - 2.0 * e;
    let h_base = 2.0 * x + x * x * x + cert.k * e;
    let x2 = x * x;
    let neg_grad_f = -grad_v * f_base - grad_v * x2 * d;
    let h_sq = h_base * h_base - 2.0 * h_base * x2 * d + x2 * x2 * d2;
    neg_grad_f - cert.delta * cert.delta * (x * x + e * e) - h_sq
        + cert.gamma * cert.gamma * e * e
}

/// The four (d, d²) corner pairs whose convex hull covers |d| ≤ 1.
pub const CORNERS: [(f64, f64); 4] = [(1.0, 0.0), (1.0, 1.0), (-1.0, 0.0), (-1.0, 1.0)];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WorstPoint {
    pub x: f64,
    pub e: f64,
    pub d: f64,
    pub d2: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub n_grid: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub grid: GridSpec,
    /// Minimum of the dissipation expression over the grid and all corners.
    pub min_margin: f64,
    /// Largest absolute value scanned; sets the tolerance scale.
    pub max_abs: f64,
    pub tol_cert: f64,
    pub worst: WorstPoint,
    /// Leading-coefficient conditions for radial growth outside the box.
    pub radial_ok: bool,
    /// pass ⇔ min_margin ≥ −tol_cert
    pub pass: bool,
}

/// Evaluate the dissipation inequality over an (x, e) grid on
/// [−half_width, half_width]² at all four (d, d²) corners.
///
/// Corner nonnegativity implies nonnegativity for every |d| ≤ 1 at that
/// point, so a pass certifies the inequality on the sampled box for all
/// admissible d. The tolerance absorbs floating-point noise of the degree-6
/// evaluation: tol = 10⁻⁶ × (largest |value| scanned).
pub fn verify_certificate(
    cert: &PolyCertificate,
    box_half_width: f64,
    n_grid: usize,
) -> Result<VerificationReport> {
    if !(box_half_width > 0.0 && box_half_width.is_finite()) {
        return Err(Error::domain(format!(
            "box half-width must be positive, got {box_half_width}"
        )));
    }
    if n_grid < 100 {
        return Err(Error::domain(format!("need at least 100 grid points per axis, got {n_grid}")));
    }

    let b = box_half_width;
    let coord = |i: usize| -b + 2.0 * b * i as f64 / (n_grid - 1) as f64;

    // deterministic min-reduction: order by (value, x index, e index, corner)
    let reduced = (0..n_grid)
        .into_par_iter()
        .map(|ix| {
            let x = coord(ix);
            let mut local_min = (f64::INFINITY, ix, 0usize, 0usize);
            let mut local_max_abs = 0.0f64;
            for ie in 0..n_grid {
                let e = coord(ie);
                for (ci, (d, d2)) in CORNERS.iter().enumerate() {
                    let v = eval_poly_lhs(cert, x, e, *d, *d2);
                    local_max_abs = local_max_abs.max(v.abs());
                    if v < local_min.0 {
                        local_min = (v, ix, ie, ci);
                    }
                }
            }
            (local_min, local_max_abs)
        })
        .reduce(
            || ((f64::INFINITY, usize::MAX, usize::MAX, usize::MAX), 0.0f64),
            |a, b| {
                let m = if (b.0 .0, b.0 .1, b.0 .2, b.0 .3) < (a.0 .0, a.0 .1, a.0 .2, a.0 .3) {
                    b.0
                } else {
                    a.0
                };
                (m, a.1.max(b.1))
            },
        );

    let ((min_margin, wx, we, wc), max_abs) = reduced;
    let tol_cert = 1e-6 * max_abs;
    let (d, d2) = CORNERS[wc];
    let radial_ok =
        4.0 * cert.c4 - 1.0 > 0.0 && cert.gamma * cert.gamma - cert.delta * cert.delta - cert.k * cert.k > 0.0;
    Ok(VerificationReport {
        grid: GridSpec { half_width: b, n_grid },
        min_margin,
        max_abs,
        tol_cert,
        worst: WorstPoint { x: coord(wx), e: coord(we), d, d2, value: min_margin },
        radial_ok,
        pass: min_margin >= -tol_cert,
    })
}

/// Convert a verified certificate into its guaranteed transmission interval
/// (single node, λ = 0, L = 2 − k). Refuses unverified certificates.
pub fn certificate_to_mati(
    cert: &PolyCertificate,
    report: &VerificationReport,
) -> Result<MatiBound> {
    if !report.pass {
        return Err(Error::CertificationFailed(format!(
            "dissipation inequality fails at (x, e) = ({:.4}, {:.4}), margin {:.4e}",
            report.worst.x, report.worst.e, report.min_margin
        )));
    }
    let g = GainTriple::new(cert.l(), cert.gamma, 0.0)?;
    Ok(mati_bound(g))
}

/// Growth-bound residual L_k·|e| + H_k(x,e) − sign(e)·g(x,e); nonnegative
/// for all inputs with |d| ≤ 1 by the triangle inequality.
pub fn check_w_growth(cert: &PolyCertificate, x: f64, e: f64, d: f64) -> Result<f64> {
    if e == 0.0 {
        return Err(Error::domain("growth residual is undefined at e = 0"));
    }
    let g = 2.0 * x - d * x * x + x * x * x + 2.0 * e;
    let h = (2.0 * x - d * x * x + x * x * x + cert.k * e).abs();
    Ok(cert.l() * e.abs() + h - e.signum() * g)
}
