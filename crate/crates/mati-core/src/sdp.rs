//! Dense symmetric eigensystems and a deterministic feasibility solver for
//! affine matrix inequalities M(P) ⪯ −ε·I over P ⪰ p_min·I.
//!
//! The solver minimizes the largest eigenvalue of M(P) by smoothed spectral
//! descent: the soft-max μ·log Σᵢ exp(λᵢ/μ) of the eigenvalues is smooth and
//! convex in P (the map is affine), its gradient and Hessian follow from the
//! eigensystem, and a projected damped-Newton iteration with backtracking
//! (falling back to Barzilai–Borwein steepest descent) drives it down while
//! μ is continued from 1 toward 10⁻⁶. Because the
//! smoothed value overestimates λ_max by at most μ·ln m, a stage that reaches
//! stationarity with its value still above the feasibility threshold
//! certifies infeasibility without refining μ further. Everything is deterministic: fixed
//! initialization, no randomness, no order-dependent reductions.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Dense symmetric matrix; construction symmetrizes and rejects input whose
/// asymmetry exceeds 1e-12 of its Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::domain(format!("SymMatrix needs a square matrix, got {}x{}", m.nrows(), m.ncols())));
        }
        let asym = (&m - m.transpose()).norm();
        if asym > 1e-12 * m.norm().max(1.0) {
            return Err(Error::domain(format!("matrix is not symmetric (asymmetry {asym:.3e})")));
        }
        Ok(SymMatrix(0.5 * (&m + m.transpose())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_mat(self) -> DMatrix<f64> {
        self.0
    }
}

/// Eigenvalues (ascending) and matching orthonormal eigenvector columns.
pub fn eigensystem(m: &SymMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let se = m.0.clone().symmetric_eigen();
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &se.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Number of free entries of a symmetric d×d matrix.
pub fn sym_dof(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Upper-triangle (row-major) vectorization of a symmetric matrix.
pub fn sym_to_vec(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    let mut v = DVector::zeros(sym_dof(d));
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            v[k] = m[(i, j)];
            k += 1;
        }
    }
    v
}

/// Inverse of [`sym_to_vec`].
pub fn vec_to_sym(v: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// Basis of symmetric d×d matrices matching the [`sym_to_vec`] ordering:
/// e_ii on the diagonal, e_ij + e_ji off it.
pub fn sym_basis(d: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(sym_dof(d));
    for i in 0..d {
        for j in i..d {
            let mut b = DMatrix::zeros(d, d);
            if i == j {
                b[(i, i)] = 1.0;
            } else {
                b[(i, j)] = 1.0;
                b[(j, i)] = 1.0;
            }
            out.push(b);
        }
    }
    out
}

/// Feasibility problem: does some P ⪰ p_min·I make M(P) ⪯ −slack_margin·I?
///
/// The affine map is stored as its value at P = 0 plus its (constant)
/// directional derivatives along the symmetric basis of P, which also makes
/// every gradient of the smoothed objective a precomputed inner product.
#[derive(Debug, Clone)]
pub struct LmiFeasibilityProblem {
    pub dim_p: usize,
    pub constant: DMatrix<f64>,
    pub dirs: Vec<DMatrix<f64>>,
    pub p_min: f64,
    pub slack_margin: f64,
}

impl LmiFeasibilityProblem {
    pub fn new(
        dim_p: usize,
        constant: DMatrix<f64>,
        dirs: Vec<DMatrix<f64>>,
        p_min: f64,
        slack_margin: f64,
    ) -> Result<Self> {
        let m = constant.nrows();
        if constant.ncols() != m {
            return Err(Error::domain("constant block must be square"));
        }
        if dirs.len() != sym_dof(dim_p) {
            return Err(Error::domain(format!(
                "expected {} directional derivatives for dim_p = {dim_p}, got {}",
                sym_dof(dim_p),
                dirs.len()
            )));
        }
        if dirs.iter().any(|d| d.nrows() != m || d.ncols() != m) {
            return Err(Error::domain("directional derivative dimension mismatch"));
        }
        if !(p_min > 0.0) || !(slack_margin > 0.0) {
            return Err(Error::domain("p_min and slack_margin must be positive"));
        }
        Ok(LmiFeasibilityProblem { dim_p, constant, dirs, p_min, slack_margin })
    }

    /// Characteristic magnitude of the map, used to scale margins.
    pub fn scale_of(constant: &DMatrix<f64>, dirs: &[DMatrix<f64>]) -> f64 {
        let mut s = constant.norm();
        for d in dirs {
            s = s.max(d.norm());
        }
        1.0 + s
    }

    /// M(P) for the parameter vector `p` (upper-triangle coordinates of P).
    pub fn assemble(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (j, d) in self.dirs.iter().enumerate() {
            m += d * p[j];
        }
        m
    }
}

/// Knobs of the spectral-descent solver. The defaults realize the scheme
/// described in the module docs; `init` warm-starts the iteration (P = I
/// when absent), `stop_below`
/// ends the search as soon as some iterate certifies λ_max ≤ that threshold,
/// and `infeasibility_margin` permits a converged smoothing stage to declare
/// the problem infeasible early via the μ·ln m gap bound.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub mu0: f64,
    pub mu_min: f64,
    pub max_iter: usize,
    pub stationarity_tol: f64,
    pub init: Option<DVector<f64>>,
    pub stop_below: Option<f64>,
    pub infeasibility_margin: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            mu0: 1.0,
            mu_min: 1e-6,
            max_iter: 100_000,
            stationarity_tol: 1e-10,
            init: None,
            stop_below: None,
            infeasibility_margin: None,
        }
    }
}

/// Outcome of λ_max minimization. `certified_infeasible` records that some
/// smoothing stage reached stationarity with a value gap proving that no
/// parameter attains the requested margin.
#[derive(Debug, Clone)]
pub struct Minimization {
    pub t_star: f64,
    pub p_star: DVector<f64>,
    pub iterations: usize,
    pub certified_infeasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// An iterate met the feasibility margin (the witness is returned).
    Feasible,
    /// A converged smoothing stage proved the margin unattainable.
    Infeasible,
    /// No proof either way (stall, iteration budget, or a boundary case
    /// inside the smoothing resolution); callers treat this as infeasible.
    Indeterminate,
}

#[derive(Debug, Clone)]
pub struct Feasibility {
    pub verdict: Verdict,
    pub t_star: f64,
    pub witness: DMatrix<f64>,
    pub iterations: usize,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.verdict == Verdict::Feasible
    }
}

/// Smoothed value and true λ_max only — what a line-search candidate costs.
fn smoothed_value(prob: &LmiFeasibilityProblem, p: &DVector<f64>, mu: f64) -> (f64, f64) {
    let lam = prob.assemble(p).symmetric_eigenvalues();
    let lmax = lam.max();
    let zsum: f64 = lam.iter().map(|&l| ((l - lmax) / mu).exp()).sum();
    (lmax + mu * zsum.ln(), lmax)
}

/// Smoothed value, gradient, Hessian, and true λ_max at parameter vector `p`.
///
/// With the eigensystem of M(p) in hand, both derivatives of the soft-max
/// come cheap: the gradient is ⟨W, D_j⟩ for the softmax weight matrix
/// W = Σᵢ wᵢ vᵢ vᵢᵀ, and the Hessian combines first divided differences of
/// the weights across eigenvalue gaps with a (1/μ)-scaled weight covariance
/// of the diagonal entries.
fn smoothed_state(
    prob: &LmiFeasibilityProblem,
    p: &DVector<f64>,
    mu: f64,
) -> (f64, DVector<f64>, DMatrix<f64>, f64) {
    let m = prob.assemble(p);
    let se = m.symmetric_eigen();
    let lam = &se.eigenvalues;
    let lmax = lam.max();
    let mut zsum = 0.0;
    let weights: Vec<f64> = lam.iter().map(|&l| ((l - lmax) / mu).exp()).collect();
    for w in &weights {
        zsum += w;
    }
    let f = lmax + mu * zsum.ln();
    let n = lam.len();
    let w: Vec<f64> = weights.iter().map(|wi| wi / zsum).collect();

    // directions rotated into the eigenbasis: D̃_a = Vᵀ D_a V
    let dof = prob.dirs.len();
    let rotated: Vec<DMatrix<f64>> = prob
        .dirs
        .iter()
        .map(|d| se.eigenvectors.transpose() * d * &se.eigenvectors)
        .collect();

    let grad = DVector::from_iterator(
        dof,
        rotated.iter().map(|dt| (0..n).map(|i| w[i] * dt[(i, i)]).sum::<f64>()),
    );

    // dd[i][j] = (w_i − w_j)/(λ_i − λ_j), continued through coalescing
    // eigenvalues; the expm1 form avoids cancellation for small gaps and the
    // plain quotient avoids overflow for large ones
    let mut dd = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let gap = lam[i] - lam[j];
            let x = gap / mu;
            dd[(i, j)] = if x.abs() < 1e-6 {
                0.5 * (w[i] + w[j]) / mu
            } else if x < 30.0 {
                w[j] * x.exp_m1() / gap
            } else {
                (w[i] - w[j]) / gap
            };
        }
    }
    let mut hess = DMatrix::zeros(dof, dof);
    for a in 0..dof {
        for b in a..dof {
            let (da, db) = (&rotated[a], &rotated[b]);
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += dd[(i, j)] * da[(i, j)] * db[(i, j)];
                }
            }
            // weight covariance of the diagonals
            s -= grad[a] * grad[b] / mu;
            hess[(a, b)] = s;
            hess[(b, a)] = s;
        }
    }
    (f, grad, hess, lmax)
}

/// Project the parameter vector onto {P ⪰ p_min·I} by eigenvalue clipping.
fn project(p: &DVector<f64>, dim_p: usize, p_min: f64) -> DVector<f64> {
    let mat = vec_to_sym(p, dim_p);
    let mut se = mat.symmetric_eigen();
    let mut changed = false;
    for l in se.eigenvalues.iter_mut() {
        if *l < p_min {
            *l = p_min;
            changed = true;
        }
    }
    if !changed {
        return p.clone();
    }
    sym_to_vec(&se.recompose())
}

/// Levenberg-damped Newton descent direction −(H + τI)⁻¹g, escalating the
/// damping until the solve succeeds and descends; None when even heavy
/// damping fails.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let dof = hess.nrows();
    let scale = (hess.trace().abs() / dof as f64).max(1e-300);
    let mut tau = 1e-10 * scale;
    for _ in 0..8 {
        let damped = hess + DMatrix::from_diagonal_element(dof, dof, tau);
        if let Some(ch) = damped.cholesky() {
            let d = -ch.solve(grad);
            if d.iter().all(|x| x.is_finite()) && d.dot(grad) < 0.0 {
                return Some(d);
            }
        }
        tau *= 100.0;
    }
    None
}

/// Backtracking Armijo search from `step0` along `dir`: accept the first
/// candidate with f(cand) ≤ f + 10⁻⁴·⟨g, cand − p⟩, where cand − p is the
/// projected displacement. None when 40 halvings find no sufficient decrease.
fn line_search(
    prob: &LmiFeasibilityProblem,
    p: &DVector<f64>,
    f: f64,
    g: &DVector<f64>,
    dir: &DVector<f64>,
    step0: f64,
    mu: f64,
) -> Option<DVector<f64>> {
    let mut step = step0;
    for _ in 0..40 {
        let cand = project(&(p + step * dir), prob.dim_p, prob.p_min);
        let d = &cand - p;
        if d.dot(&d) == 0.0 {
            return None;
        }
        let slope = g.dot(&d);
        if slope < 0.0 {
            let (fc, _) = smoothed_value(prob, &cand, mu);
            if fc <= f + 1e-4 * slope {
                return Some(cand);
            }
        }
        step *= 0.5;
    }
    None
}

/// Minimize λ_max(M(P)) over P ⪰ p_min·I by smoothed spectral descent.
///
/// Deterministic given the problem and options. Fails with a solver-stall
/// error carrying the best iterate if the iteration budget runs out before
/// the final smoothing stage reaches stationarity (or an early-stop
/// condition, when configured, decides first).
pub fn max_eig_minimize(prob: &LmiFeasibilityProblem, opts: &SolveOptions) -> Result<Minimization> {
    let identity = sym_to_vec(&DMatrix::identity(prob.dim_p, prob.dim_p));
    let mut p = project(opts.init.as_ref().unwrap_or(&identity), prob.dim_p, prob.p_min);

    let mut best_t = f64::INFINITY;
    let mut best_p = p.clone();
    let mut total = 0usize;

    let mut mu = opts.mu0;
    loop {
        let (mut f, mut g, mut h, mut t) = smoothed_state(prob, &p, mu);
        if t < best_t {
            best_t = t;
            best_p = p.clone();
        }
        let mut bb_step = 1.0;
        let mut stage_converged = false;

        while total < opts.max_iter {
            total += 1;
            if let Some(stop) = opts.stop_below {
                if best_t <= stop {
                    return Ok(Minimization {
                        t_star: best_t,
                        p_star: best_p,
                        iterations: total,
                        certified_infeasible: false,
                    });
                }
            }
            // damped Newton first; steepest descent from the BB guess when
            // the Newton model finds no acceptable step
            let mut accepted = None;
            if let Some(dir) = newton_direction(&h, &g) {
                accepted = line_search(prob, &p, f, &g, &dir, 1.0, mu);
            }
            if accepted.is_none() {
                accepted = line_search(prob, &p, f, &g, &(-&g), bb_step, mu);
            }
            let Some(p_new) = accepted else {
                if bb_step > 1.0 {
                    // the BB guess overshot so badly that halving could not
                    // recover; retry from a unit step before giving up
                    bb_step = 1.0;
                    continue;
                }
                // no descent direction left at this smoothing level
                stage_converged = true;
                break;
            };
            let (f_new, g_new, h_new, t_new) = smoothed_state(prob, &p_new, mu);
            let s = &p_new - &p;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            bb_step = if sy > 1e-300 { (s.dot(&s) / sy).clamp(1e-12, 1e12) } else { 1.0 };
            p = p_new;
            f = f_new;
            g = g_new;
            h = h_new;
            t = t_new;
            if t < best_t {
                best_t = t;
                best_p = p.clone();
            }
            let pg = &p - &project(&(&p - &g), prob.dim_p, prob.p_min);
            if pg.norm() < opts.stationarity_tol * (1.0 + f.abs()) {
                stage_converged = true;
                break;
            }
        }

        if stage_converged {
            if let Some(margin) = opts.infeasibility_margin {
                // convex objective: at the stage optimum f* the gap bound gives
                // min λ_max ≥ f* − μ·ln m, so a positive gap proves infeasibility.
                // A line-search floor reached away from stationarity proves
                // nothing, hence the residual gate.
                let pg = &p - &project(&(&p - &g), prob.dim_p, prob.p_min);
                let stationary = pg.norm() < opts.stationarity_tol.sqrt() * (1.0 + f.abs());
                let m = prob.constant.nrows() as f64;
                if stationary && f - mu * m.ln() > -margin {
                    return Ok(Minimization {
                        t_star: best_t,
                        p_star: best_p,
                        iterations: total,
                        certified_infeasible: true,
                    });
                }
            }
        } else {
            return Err(Error::SolverStall { t_star: best_t, iterations: total });
        }

        if mu <= opts.mu_min * (1.0 + 1e-12) {
            return Ok(Minimization {
                t_star: best_t,
                p_star: best_p,
                iterations: total,
                certified_infeasible: false,
            });
        }
        mu = (mu * 1e-2).max(opts.mu_min);
    }
}

/// Feasibility verdict with witness. `Feasible` always carries an iterate
/// meeting the margin; `Infeasible` is returned only on a stationarity
/// certificate; anything short of a proof — a stall, an exhausted iteration
/// budget, or a boundary case the smoothing cannot separate — degrades to
/// `Indeterminate`, which callers must treat as infeasible.
pub fn is_feasible(prob: &LmiFeasibilityProblem, opts: &SolveOptions) -> Feasibility {
    let mut opts = opts.clone();
    opts.stop_below = Some(-prob.slack_margin);
    opts.infeasibility_margin = Some(prob.slack_margin);
    match max_eig_minimize(prob, &opts) {
        Ok(min) => {
            let verdict = if min.t_star <= -prob.slack_margin {
                Verdict::Feasible
            } else if min.certified_infeasible {
                Verdict::Infeasible
            } else {
                Verdict::Indeterminate
            };
            Feasibility {
                verdict,
                t_star: min.t_star,
                witness: vec_to_sym(&min.p_star, prob.dim_p),
                iterations: min.iterations,
            }
        }
        Err(Error::SolverStall { t_star, iterations }) => Feasibility {
            verdict: Verdict::Indeterminate,
            t_star,
            witness: DMatrix::identity(prob.dim_p, prob.dim_p),
            iterations,
        },
        Err(_) => unreachable!("max_eig_minimize only fails with SolverStall"),
    }
}
