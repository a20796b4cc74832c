//! Hybrid simulation of the networked loop: continuous flow between
//! transmissions, protocol jumps at transmissions, and the Lyapunov monitor
//! that checks a certified (L, γ, λ) triple against a produced trace.
//!
//! Trajectories live on a hybrid time domain: points carry both continuous
//! time t and a jump counter j. The state x flows through jumps unchanged;
//! the network error e is rewritten by the protocol; the timer τ measures
//! time since the last transmission and resets to zero at each jump.

use crate::bound::{self, mati_bound, GainTriple, LAMBDA_ZERO_PHI0};
use crate::error::{Error, Result};
use crate::lmi::LinearNcs;
use crate::protocol::{protocol_jump, ProtocolModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// State norm beyond which a trajectory is declared divergent and truncated.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Norm ratio under which a trajectory is considered settled; integration
/// stops early once ‖(x,e)‖ falls below this fraction of its initial value.
pub const SETTLED_RATIO: f64 = 1e-12;

/// Right-hand sides available to the simulator.
///
/// `NonlinearExample1` is the scalar loop ẋ = −2x + d·x² − x³ − 2e with
/// ė = −ẋ (held actuation between transmissions), |d| ≤ 1.
#[derive(Debug, Clone)]
pub enum NcsDynamics {
    Linear(LinearNcs),
    NonlinearExample1 { d: f64 },
}

impl NcsDynamics {
    pub fn nonlinear_example1(d: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&d) {
            return Err(Error::domain(format!("d must lie in [-1, 1], got {d}")));
        }
        Ok(NcsDynamics::NonlinearExample1 { d })
    }

    pub fn n_x(&self) -> usize {
        match self {
            NcsDynamics::Linear(sys) => sys.n_x(),
            NcsDynamics::NonlinearExample1 { .. } => 1,
        }
    }

    pub fn n_e(&self) -> usize {
        match self {
            NcsDynamics::Linear(sys) => sys.n_e(),
            NcsDynamics::NonlinearExample1 { .. } => 1,
        }
    }

    /// Time derivative of the stacked state z = (x, e) during flow.
    fn deriv(&self, z: &[f64], out: &mut [f64]) {
        match self {
            NcsDynamics::Linear(sys) => {
                let n_x = sys.n_x();
                let n_e = sys.n_e();
                for i in 0..n_x {
                    let mut acc = 0.0;
                    for j in 0..n_x {
                        acc += sys.a[(i, j)] * z[j];
                    }
                    for j in 0..n_e {
                        acc += sys.e[(i, j)] * z[n_x + j];
                    }
                    out[i] = acc;
                }
                for i in 0..n_e {
                    let mut acc = 0.0;
                    for j in 0..n_x {
                        acc += sys.c[(i, j)] * z[j];
                    }
                    for j in 0..n_e {
                        acc += sys.f[(i, j)] * z[n_x + j];
                    }
                    out[n_x + i] = acc;
                }
            }
            NcsDynamics::NonlinearExample1 { d } => {
                let (x, e) = (z[0], z[1]);
                let fx = -2.0 * x + d * x * x - x * x * x - 2.0 * e;
                out[0] = fx;
                out[1] = -fx;
            }
        }
    }
}

/// Inter-transmission timing. `UniformRandom` draws each gap uniformly from
/// [eps, tau_max) with a seeded portable generator, so traces reproduce
/// bit-for-bit across platforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    Constant { period: f64 },
    UniformRandom { eps: f64, tau_max: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub horizon: f64,
}

impl Schedule {
    pub fn constant(period: f64, horizon: f64) -> Result<Self> {
        let s = Schedule { kind: ScheduleKind::Constant { period }, horizon };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform_random(eps: f64, tau_max: f64, seed: u64, horizon: f64) -> Result<Self> {
        let s = Schedule { kind: ScheduleKind::UniformRandom { eps, tau_max, seed }, horizon };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        match self.kind {
            ScheduleKind::Constant { period } => {
                if !(period > 0.0 && period.is_finite()) {
                    return Err(Error::domain(format!("period must be positive, got {period}")));
                }
            }
            ScheduleKind::UniformRandom { eps, tau_max, .. } => {
                if !(eps > 0.0 && eps <= tau_max && tau_max.is_finite()) {
                    return Err(Error::domain(format!(
                        "need 0 < eps <= tau_max, got eps = {eps}, tau_max = {tau_max}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Flow,
    Jump,
}

#[derive(Debug, Clone)]
pub struct TracePoint {
    pub t: f64,
    pub j: usize,
    pub x: DVector<f64>,
    pub e: DVector<f64>,
    pub tau: f64,
    pub kappa: usize,
    pub event: TraceEvent,
}

impl TracePoint {
    pub fn state_norm(&self) -> f64 {
        (self.x.norm_squared() + self.e.norm_squared()).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct JumpRecord {
    pub t: f64,
    pub kappa_before: usize,
    pub granted: usize,
    pub e_norm_before: f64,
    pub e_norm_after: f64,
}

#[derive(Debug, Clone)]
pub struct HybridTrace {
    pub points: Vec<TracePoint>,
    pub jumps: Vec<JumpRecord>,
    pub diverged: bool,
    pub initial_norm: f64,
}

impl HybridTrace {
    /// Earliest continuous time at which ‖(x,e)‖ ≤ ratio·‖(x₀,e₀)‖.
    pub fn first_time_below(&self, ratio: f64) -> Option<f64> {
        let target = ratio * self.initial_norm;
        self.points.iter().find(|p| p.state_norm() <= target).map(|p| p.t)
    }

    pub fn final_norm(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.state_norm())
    }

    /// Largest inter-transmission time realized in the trace.
    pub fn max_interval(&self) -> f64 {
        self.points.iter().map(|p| p.tau).fold(0.0, f64::max)
    }

    /// Least-squares slope of ln‖(x,e)‖ against t; negative for exponential
    /// decay. None when fewer than two points carry a positive norm.
    pub fn decay_rate(&self) -> Option<f64> {
        let samples: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter_map(|p| {
                let n = p.state_norm();
                (n > 0.0).then(|| (p.t, n.ln()))
            })
            .collect();
        if samples.len() < 2 || samples.first().map(|s| s.0) == samples.last().map(|s| s.0) {
            return None;
        }
        let n = samples.len() as f64;
        let mean_t = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var = 0.0;
        for (t, y) in &samples {
            cov += (t - mean_t) * (y - mean_y);
            var += (t - mean_t) * (t - mean_t);
        }
        (var > 0.0).then(|| cov / var)
    }

    /// Structural checks on the hybrid time domain; returns human-readable
    /// descriptions of any violations (empty means well-formed).
    pub fn domain_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut jumps_seen = 0usize;
        for (i, w) in self.points.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            if b.t < a.t {
                out.push(format!("t decreases at point {}", i + 1));
            }
            match b.j.checked_sub(a.j) {
                Some(0) => {
                    if b.event == TraceEvent::Jump {
                        out.push(format!("jump event without j increment at point {}", i + 1));
                    }
                    if b.tau < a.tau {
                        out.push(format!("tau decreases without a jump at point {}", i + 1));
                    }
                }
                Some(1) => {
                    jumps_seen += 1;
                    if b.event != TraceEvent::Jump {
                        out.push(format!("j increments without a jump event at point {}", i + 1));
                    }
                    if b.tau != 0.0 {
                        out.push(format!("tau not reset at jump (point {})", i + 1));
                    }
                    if b.t != a.t {
                        out.push(format!("jump advances continuous time at point {}", i + 1));
                    }
                    if b.x != a.x {
                        out.push(format!("x discontinuous across jump at point {}", i + 1));
                    }
                    if b.kappa != a.kappa + 1 {
                        out.push(format!("kappa out of step with j at point {}", i + 1));
                    }
                }
                _ => out.push(format!("j changes by more than one at point {}", i + 1)),
            }
        }
        if jumps_seen != self.jumps.len() {
            out.push(format!(
                "jump records ({}) disagree with j increments ({})",
                self.jumps.len(),
                jumps_seen
            ));
        }
        out
    }
}

/// Classical RK4 step over the stacked state.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    fn step(&mut self, dynamics: &NcsDynamics, z: &mut [f64], h: f64) {
        let n = z.len();
        dynamics.deriv(z, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = z[i] + 0.5 * h * self.k1[i];
        }
        dynamics.deriv(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = z[i] + 0.5 * h * self.k2[i];
        }
        dynamics.deriv(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = z[i] + h * self.k3[i];
        }
        dynamics.deriv(&self.tmp, &mut self.k4);
        for i in 0..n {
            z[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrate the hybrid loop from (x0, e0) under the given schedule.
///
/// Flow uses RK4 with at least ten substeps per inter-transmission interval
/// (more when `step` demands finer resolution), and transmission instants are
/// hit exactly by sizing the substep to the interval. Integration stops early
/// once the state settles below [`SETTLED_RATIO`] of its initial norm, or is
/// truncated with the `diverged` flag once it exceeds [`DIVERGENCE_NORM`].
pub fn simulate(
    dynamics: &NcsDynamics,
    proto: &ProtocolModel,
    sched: &Schedule,
    x0: &DVector<f64>,
    e0: &DVector<f64>,
    step: f64,
) -> Result<HybridTrace> {
    sched.validate()?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::domain(format!("step must be positive, got {step}")));
    }
    let (n_x, n_e) = (dynamics.n_x(), dynamics.n_e());
    if x0.len() != n_x || e0.len() != n_e {
        return Err(Error::domain(format!(
            "initial condition dims ({}, {}) do not match the dynamics ({n_x}, {n_e})",
            x0.len(),
            e0.len()
        )));
    }
    let node_dims = proto.node_dims(n_e)?;

    let mut z: Vec<f64> = x0.iter().chain(e0.iter()).copied().collect();
    let initial_norm = norm(&z);
    let mut rk4 = Rk4::new(n_x + n_e);
    let mut rng = match sched.kind {
        ScheduleKind::UniformRandom { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        ScheduleKind::Constant { .. } => None,
    };

    let point = |t: f64, j: usize, z: &[f64], tau: f64, kappa: usize, event: TraceEvent| TracePoint {
        t,
        j,
        x: DVector::from_column_slice(&z[..n_x]),
        e: DVector::from_column_slice(&z[n_x..]),
        tau,
        kappa,
        event,
    };

    let mut points = vec![point(0.0, 0, &z, 0.0, 0, TraceEvent::Flow)];
    let mut jumps = Vec::new();
    let mut diverged = false;
    let mut t = 0.0;
    let mut j = 0usize;
    let mut kappa = 0usize;

    'outer: while t < sched.horizon - 1e-12 {
        let gap = match sched.kind {
            ScheduleKind::Constant { period } => period,
            ScheduleKind::UniformRandom { eps, tau_max, .. } => {
                let u: f64 = rng.as_mut().expect("random schedule has a generator").gen();
                eps + u * (tau_max - eps)
            }
        };
        let (dt, transmit) =
            if t + gap <= sched.horizon { (gap, true) } else { (sched.horizon - t, false) };
        let n_sub = ((dt / step).ceil() as usize).max(10);
        let h = dt / n_sub as f64;
        for s in 1..=n_sub {
            rk4.step(dynamics, &mut z, h);
            let tau = s as f64 * h;
            points.push(point(t + tau, j, &z, tau, kappa, TraceEvent::Flow));
            let nz = norm(&z);
            if !nz.is_finite() || nz > DIVERGENCE_NORM {
                diverged = true;
                break 'outer;
            }
            if initial_norm > 0.0 && nz <= SETTLED_RATIO * initial_norm {
                break 'outer;
            }
        }
        t += dt;
        if transmit {
            let e_now = DVector::from_column_slice(&z[n_x..]);
            let (e_plus, granted) = protocol_jump(proto.kind, kappa as u64, &e_now, &node_dims)?;
            jumps.push(JumpRecord {
                t,
                kappa_before: kappa,
                granted,
                e_norm_before: e_now.norm(),
                e_norm_after: e_plus.norm(),
            });
            z[n_x..].copy_from_slice(e_plus.as_slice());
            kappa += 1;
            j += 1;
            points.push(point(t, j, &z, 0.0, kappa, TraceEvent::Jump));
        }
    }

    Ok(HybridTrace { points, jumps, diverged, initial_norm })
}

/// Storage function V(x) used by the Lyapunov monitor.
#[derive(Debug, Clone)]
pub enum StoredV {
    /// V(x) = xᵀPx with P ≻ 0 (linear certificates).
    Quadratic(DMatrix<f64>),
    /// V(x) = c4·x⁴ + c2·x² for the scalar loop.
    Quartic { c4: f64, c2: f64 },
}

impl StoredV {
    fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            StoredV::Quadratic(p) => {
                if p.nrows() != x.len() {
                    return Err(Error::domain(format!(
                        "P is {}x{} but x has dimension {}",
                        p.nrows(),
                        p.ncols(),
                        x.len()
                    )));
                }
                Ok((x.transpose() * p * x)[(0, 0)])
            }
            StoredV::Quartic { c4, c2 } => {
                if x.len() != 1 {
                    return Err(Error::domain("quartic storage applies to the scalar loop only"));
                }
                let v = x[0];
                Ok(c4 * v.powi(4) + c2 * v * v)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub u0: f64,
    pub tol: f64,
    /// Largest U(post) − U(pre) over jumps; None when the trace has no jumps.
    pub max_jump_increase: Option<f64>,
    /// Largest U increase over a single flow substep.
    pub max_flow_increase: Option<f64>,
    pub violations: usize,
    pub points_checked: usize,
    pub pass: bool,
}

/// Check a trace against the composite function U = V(x) + γ·φ(τ)·‖e‖².
///
/// φ solves the gain clock ODE restarted at φ(0) = λ⁻¹ (the sampled-data
/// surrogate for λ = 0) after every jump. Theory says U never increases along
/// flows or across jumps when every inter-transmission interval stays within
/// `mati_bound(g)`; the monitor verifies that numerically at a tolerance of
/// 10⁻⁶·U(0) and errors out if the trace violates the interval precondition.
pub fn monitor_lyapunov(trace: &HybridTrace, v: &StoredV, g: GainTriple) -> Result<MonitorReport> {
    let bnd = mati_bound(g).value;
    let worst = trace.max_interval();
    if worst > bnd * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::domain(format!(
            "trace interval {worst:.6} exceeds the certified bound {bnd:.6}"
        )));
    }
    if trace.points.is_empty() {
        return Err(Error::domain("empty trace"));
    }

    let phi0 = if g.lambda > 0.0 { 1.0 / g.lambda } else { LAMBDA_ZERO_PHI0 };
    let u_of = |phi: f64, p: &TracePoint| -> Result<f64> {
        Ok(v.eval(&p.x)? + g.gamma * phi * p.e.norm_squared())
    };

    let mut phi = phi0;
    let mut u_prev = u_of(phi, &trace.points[0])?;
    let u0 = u_prev;
    let tol = 1e-6 * u0;
    let mut max_jump: Option<f64> = None;
    let mut max_flow: Option<f64> = None;
    let mut violations = 0usize;

    for w in trace.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let u_next;
        if b.j == a.j {
            phi = bound::phi_advance(g.l, g.gamma, phi, b.t - a.t);
            u_next = u_of(phi, b)?;
            let inc = u_next - u_prev;
            max_flow = Some(max_flow.map_or(inc, |m: f64| m.max(inc)));
            if inc > tol {
                violations += 1;
            }
        } else {
            phi = phi0;
            u_next = u_of(phi, b)?;
            let inc = u_next - u_prev;
            max_jump = Some(max_jump.map_or(inc, |m: f64| m.max(inc)));
            if inc > tol {
                violations += 1;
            }
        }
        u_prev = u_next;
    }

    Ok(MonitorReport {
        u0,
        tol,
        max_jump_increase: max_jump,
        max_flow_increase: max_flow,
        violations,
        points_checked: trace.points.len(),
        pass: violations == 0,
    })
}
