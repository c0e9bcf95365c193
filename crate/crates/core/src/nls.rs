// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bounded nonlinear least squares for the segment decay model.
//!
//! The solver is a Levenberg–Marquardt iteration in Nash's form, solving
//! `(JᵀJ + μ·(diag(JᵀJ) + I))·δ = Jᵀr` at each step, with the trial point
//! projected back onto the parameter box. A step is accepted only when it
//! strictly lowers the residual sum of squares. Every value in
//! [`FitConfig::gamma_grid`] seeds an independent run and the best converged
//! run wins.

use serde::{Deserialize, Serialize};

use crate::decay_model::{DecayParams, SegmentCovariates};
use crate::error::{Error, Result};

/// Distance to a bound below which a parameter counts as sitting on it.
const BOUND_EPS: f64 = 1e-8;
/// Damping beyond which the iteration is considered stalled at a stationary point.
const MAX_DAMPING: f64 = 1e20;
/// Values of `φ^u` below this are flushed to zero to stay out of subnormals.
const FLUSH: f64 = 1e-300;

/// Closed interval for one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }

    fn near_edge(&self, v: f64) -> bool {
        v - self.lower <= BOUND_EPS || self.upper - v <= BOUND_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub alpha0: Bounds,
    pub alpha1: Bounds,
    pub gamma: Bounds,
    /// Starting values of γ; one LM run per entry.
    pub gamma_grid: Vec<f64>,
    pub max_iter: usize,
    /// Relative RSS improvement below which an accepted step ends the run.
    pub rel_tol: f64,
    /// Projected-gradient max-norm below which the run has converged.
    pub grad_tol: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// When non-zero, grid starts are ranked by the residual of the best
    /// bounded linear fit of (α0, α1) at that γ, and only this many of the
    /// best-ranked starts get an LM run. 0 runs every start.
    #[serde(default)]
    pub screen_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha0: Bounds::new(0.0, 0.4),
            alpha1: Bounds::new(0.001, 0.4),
            gamma: Bounds::new(-10.0, 3.0),
            gamma_grid: vec![-8.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0],
            max_iter: 100,
            rel_tol: 1e-9,
            grad_tol: 1e-10,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.4,
            screen_starts: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("alpha0", self.alpha0), ("alpha1", self.alpha1), ("gamma", self.gamma)] {
            if !(b.lower < b.upper) || !b.lower.is_finite() || !b.upper.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} bounds must satisfy lower < upper, got [{}, {}]",
                    b.lower, b.upper
                )));
            }
        }
        if self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gamma_grid must hold at least one finite value"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.rel_tol > 0.0) || !(self.grad_tol >= 0.0) {
            return Err(Error::invalid("rel_tol must be > 0 and grad_tol >= 0"));
        }
        if !(self.lambda_init > 0.0 && self.lambda_up > 1.0 && self.lambda_down > 0.0 && self.lambda_down < 1.0) {
            return Err(Error::invalid(
                "damping controls need lambda_init > 0, lambda_up > 1, 0 < lambda_down < 1",
            ));
        }
        Ok(())
    }

    /// Sets the upper bound of both α0 and α1 to `cap`.
    pub fn with_cap(mut self, cap: f64) -> Self {
        self.alpha0.upper = cap;
        self.alpha1.upper = cap;
        self
    }

    /// Sets the lower bound of α1, i.e. the smallest admissible jump.
    pub fn with_min_jump(mut self, min_jump: f64) -> Self {
        self.alpha1.lower = min_jump;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma: f64,
    pub beta: Vec<f64>,
    /// False when a parameter sits on a bound or the information matrix is singular.
    pub reliable: bool,
}

impl StdErrors {
    fn unavailable(q: usize) -> Self {
        Self {
            alpha0: f64::NAN,
            alpha1: f64::NAN,
            gamma: f64::NAN,
            beta: vec![f64::NAN; q],
            reliable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: DecayParams,
    pub beta: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub n_points: usize,
    pub std_errors: StdErrors,
    pub iterations: usize,
}

impl FitResult {
    /// Placeholder for a segment too short to fit; never converged.
    pub fn unfitted(n_points: usize, q: usize) -> Self {
        Self {
            params: DecayParams::new(f64::NAN, f64::NAN, f64::NAN),
            beta: vec![f64::NAN; q],
            rss: f64::NAN,
            converged: false,
            n_points,
            std_errors: StdErrors::unavailable(q),
            iterations: 0,
        }
    }
}

/// Outcome of a single LM run from one starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub params: DecayParams,
    pub beta: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Heuristic starting point: α0 just below the segment minimum, α1 from the
/// first observation, γ from the first grid entry. All clamped to bounds.
pub fn initial_params(values: &[f64], config: &FitConfig) -> DecayParams {
    let (lo, hi) = min_max(values);
    let alpha0 = config.alpha0.clamp((lo - 0.1 * (hi - lo)).max(config.alpha0.lower));
    let alpha1 = config.alpha1.clamp(values.first().copied().unwrap_or(lo) - alpha0);
    let gamma = config.gamma.clamp(config.gamma_grid.first().copied().unwrap_or(0.0));
    DecayParams::new(alpha0, alpha1, gamma)
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Fits the decay model to `values` (offsets `1..=len`) by multi-start
/// bounded Levenberg–Marquardt.
///
/// Non-convergence is reported through [`FitResult::converged`], never as an
/// error. A constant segment carries no decay signal and is reported as
/// not converged without running the solver.
pub fn fit_segment(values: &[f64], config: &FitConfig, covariates: &SegmentCovariates) -> Result<FitResult> {
    let problem = Problem::new(values, covariates, config)?;
    let q = covariates.dim();

    let (lo, hi) = min_max(values);
    if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
        let init = initial_params(values, config);
        return Ok(FitResult {
            params: init,
            beta: vec![0.0; q],
            rss: problem.rss_at(&problem.theta_of(&init, &vec![0.0; q])),
            converged: false,
            n_points: values.len(),
            std_errors: StdErrors::unavailable(q),
            iterations: 0,
        });
    }

    let starts = start_points(&problem, values, config);
    let mut best: Option<RunOutcome> = None;
    let mut total_iters = 0;
    let mut solver = Solver::new(problem.dim());
    for start in &starts {
        let run = solver.run(&problem, config, &problem.theta_of(start, &vec![0.0; q]));
        total_iters += run.iterations;
        let better = match &best {
            None => true,
            Some(b) => match (run.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => run.rss < b.rss,
            },
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("gamma_grid validated non-empty");
    let theta = problem.theta_of(&best.params, &best.beta);
    let std_errors = problem.std_errors(&theta, best.rss, config);
    Ok(FitResult {
        params: best.params,
        beta: best.beta,
        rss: best.rss,
        converged: best.converged,
        n_points: values.len(),
        std_errors,
        iterations: total_iters,
    })
}

/// Starting points for the multi-start fit, in run order.
fn start_points(problem: &Problem<'_>, values: &[f64], config: &FitConfig) -> Vec<DecayParams> {
    let init = initial_params(values, config);
    let grid = config.gamma_grid.iter().map(|&g| config.gamma.clamp(g));
    if config.screen_starts == 0 || config.screen_starts >= config.gamma_grid.len() {
        return grid.map(|g| DecayParams::new(init.alpha0, init.alpha1, g)).collect();
    }
    let mut ranked: Vec<(f64, DecayParams)> = grid.map(|g| problem.profiled_start(g, config)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    ranked.truncate(config.screen_starts);
    ranked.into_iter().map(|(_, p)| p).collect()
}

/// Runs LM from one explicit starting point. Exposed so callers can compare
/// individual starts against [`fit_segment`]'s best-of selection or seed a
/// fit from a neighbouring solution.
pub fn fit_from_start(
    values: &[f64],
    config: &FitConfig,
    covariates: &SegmentCovariates,
    start: &DecayParams,
    beta: &[f64],
) -> Result<RunOutcome> {
    let problem = Problem::new(values, covariates, config)?;
    if beta.len() != covariates.dim() {
        return Err(Error::LengthMismatch {
            expected: covariates.dim(),
            actual: beta.len(),
        });
    }
    let theta = problem.theta_of(start, beta);
    Ok(Solver::new(problem.dim()).run(&problem, config, &theta))
}

/// Wraps [`fit_from_start`] into a full [`FitResult`] with standard errors.
pub fn fit_single_start(
    values: &[f64],
    config: &FitConfig,
    covariates: &SegmentCovariates,
    start: &DecayParams,
) -> Result<FitResult> {
    let q = covariates.dim();
    let run = fit_from_start(values, config, covariates, start, &vec![0.0; q])?;
    let problem = Problem::new(values, covariates, config)?;
    let theta = problem.theta_of(&run.params, &run.beta);
    Ok(FitResult {
        std_errors: problem.std_errors(&theta, run.rss, config),
        params: run.params,
        beta: run.beta,
        rss: run.rss,
        converged: run.converged,
        n_points: values.len(),
        iterations: run.iterations,
    })
}

/// Least-squares problem for one segment; parameters are laid out as
/// `[α0, α1, γ, β_1..β_q]`.
struct Problem<'a> {
    y: &'a [f64],
    cov: &'a SegmentCovariates,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// RSS, `JᵀJ` (row-major `p×p`) and `Jᵀr` at one parameter vector. `J` is
/// the Jacobian of the model, so `Jᵀr` points downhill in RSS.
struct Normal {
    rss: f64,
    jtj: Vec<f64>,
    jtr: Vec<f64>,
}

impl Normal {
    fn new(p: usize) -> Self {
        Self {
            rss: 0.0,
            jtj: vec![0.0; p * p],
            jtr: vec![0.0; p],
        }
    }
}

impl<'a> Problem<'a> {
    fn new(y: &'a [f64], cov: &'a SegmentCovariates, config: &FitConfig) -> Result<Self> {
        let q = cov.dim();
        let min = 3 + q;
        if y.len() < min {
            return Err(Error::SegmentTooShort { len: y.len(), min });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValues);
        }
        if cov.columns().iter().any(|c| c.len() < y.len()) {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                actual: cov.columns().iter().map(Vec::len).min().unwrap_or(0),
            });
        }
        let mut lower = vec![config.alpha0.lower, config.alpha1.lower, config.gamma.lower];
        let mut upper = vec![config.alpha0.upper, config.alpha1.upper, config.gamma.upper];
        lower.extend(std::iter::repeat(f64::NEG_INFINITY).take(q));
        upper.extend(std::iter::repeat(f64::INFINITY).take(q));
        Ok(Self { y, cov, lower, upper })
    }

    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn theta_of(&self, params: &DecayParams, beta: &[f64]) -> Vec<f64> {
        let mut theta = params.as_array().to_vec();
        theta.extend_from_slice(beta);
        self.project(&mut theta);
        theta
    }

    fn project(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *t = t.max(*lo).min(*hi);
        }
    }

    fn rss_at(&self, theta: &[f64]) -> f64 {
        let mut n = Normal::new(self.dim());
        self.evaluate(theta, &mut n);
        n.rss
    }

    fn evaluate(&self, theta: &[f64], out: &mut Normal) {
        if self.cov.is_empty() {
            self.evaluate_plain(theta, out);
        } else {
            self.evaluate_general(theta, out);
        }
    }

    fn evaluate_plain(&self, theta: &[f64], out: &mut Normal) {
        let (a0, a1) = (theta[0], theta[1]);
        let rate = theta[2].exp();
        let phi = (-rate).exp();
        let mut e = 1.0;
        let (mut rss, mut s_e, mut s_ee, mut s_d, mut s_ed, mut s_dd) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
        for (i, &y) in self.y.iter().enumerate() {
            e *= phi;
            if e < FLUSH {
                e = 0.0;
            }
            let u = (i + 1) as f64;
            let r = y - a0 - a1 * e;
            let d = -a1 * u * rate * e;
            rss += r * r;
            s_e += e;
            s_ee += e * e;
            s_d += d;
            s_ed += e * d;
            s_dd += d * d;
            g0 += r;
            g1 += r * e;
            g2 += r * d;
        }
        let m = self.y.len() as f64;
        out.rss = rss;
        out.jtj.copy_from_slice(&[m, s_e, s_d, s_e, s_ee, s_ed, s_d, s_ed, s_dd]);
        out.jtr.copy_from_slice(&[g0, g1, g2]);
    }

    fn evaluate_general(&self, theta: &[f64], out: &mut Normal) {
        let p = self.dim();
        let (a0, a1) = (theta[0], theta[1]);
        let beta = &theta[3..];
        let rate = theta[2].exp();
        let phi = (-rate).exp();
        out.rss = 0.0;
        out.jtj.iter_mut().for_each(|v| *v = 0.0);
        out.jtr.iter_mut().for_each(|v| *v = 0.0);
        let mut row = vec![0.0; p];
        let mut e = 1.0;
        for (i, &y) in self.y.iter().enumerate() {
            e *= phi;
            if e < FLUSH {
                e = 0.0;
            }
            let u = (i + 1) as f64;
            let amp = a1 + self.cov.effect(beta, i);
            let r = y - a0 - amp * e;
            row[0] = 1.0;
            row[1] = e;
            row[2] = -amp * u * rate * e;
            for (k, col) in self.cov.columns().iter().enumerate() {
                row[3 + k] = col[i] * e;
            }
            out.rss += r * r;
            for a in 0..p {
                out.jtr[a] += row[a] * r;
                for b in a..p {
                    out.jtj[a * p + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                out.jtj[a * p + b] = out.jtj[b * p + a];
            }
        }
    }

    /// Best bounded linear fit of `(α0, α1)` with γ held at `gamma`, ignoring
    /// covariates, and its residual sum of squares.
    fn profiled_start(&self, gamma: f64, config: &FitConfig) -> (f64, DecayParams) {
        let phi = (-gamma.exp()).exp();
        let (mut se, mut see, mut sy, mut sye, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut e = 1.0;
        for &y in self.y {
            e *= phi;
            if e < FLUSH {
                e = 0.0;
            }
            se += e;
            see += e * e;
            sy += y;
            sye += y * e;
            syy += y * y;
        }
        let m = self.y.len() as f64;
        let rss = |a0: f64, a1: f64| {
            syy - 2.0 * a0 * sy - 2.0 * a1 * sye + m * a0 * a0 + 2.0 * a0 * a1 * se + a1 * a1 * see
        };
        let (b0, b1) = (config.alpha0, config.alpha1);
        let det = m * see - se * se;
        if det > f64::EPSILON * m * see {
            let a0 = (see * sy - se * sye) / det;
            let a1 = (m * sye - se * sy) / det;
            if b0.clamp(a0) == a0 && b1.clamp(a1) == a1 {
                return (rss(a0, a1), DecayParams::new(a0, a1, gamma));
            }
        }
        // The box-constrained optimum lies on an edge; each edge is a 1-D
        // convex problem solved by clamping.
        let mut edges = Vec::with_capacity(4);
        for a0 in [b0.lower, b0.upper] {
            let a1 = if see > 0.0 { b1.clamp((sye - a0 * se) / see) } else { b1.lower };
            edges.push((a0, a1));
        }
        for a1 in [b1.lower, b1.upper] {
            edges.push((b0.clamp((sy - a1 * se) / m), a1));
        }
        edges
            .into_iter()
            .map(|(a0, a1)| (rss(a0, a1), DecayParams::new(a0, a1, gamma)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("four edges")
    }

    /// True when parameter `k` sits on a bound and descent points outward.
    fn pinned(&self, theta: &[f64], jtr: &[f64], k: usize) -> bool {
        (theta[k] <= self.lower[k] && jtr[k] < 0.0) || (theta[k] >= self.upper[k] && jtr[k] > 0.0)
    }

    /// Gradient components that could still move the point inside the box.
    fn projected_gradient_norm(&self, theta: &[f64], jtr: &[f64]) -> f64 {
        (0..theta.len())
            .map(|k| if self.pinned(theta, jtr, k) { 0.0 } else { jtr[k].abs() })
            .fold(0.0, f64::max)
    }

    fn std_errors(&self, theta: &[f64], rss: f64, config: &FitConfig) -> StdErrors {
        let p = self.dim();
        let q = p - 3;
        let n = self.y.len();
        if n <= p || !rss.is_finite() {
            return StdErrors::unavailable(q);
        }
        let mut normal = Normal::new(p);
        self.evaluate(theta, &mut normal);
        let sigma2 = rss / (n - p) as f64;
        let mut chol = normal.jtj.clone();
        let diag = if cholesky_in_place(&mut chol, p) {
            let mut unit = vec![0.0; p];
            (0..p)
                .map(|k| {
                    unit.iter_mut().for_each(|v| *v = 0.0);
                    unit[k] = 1.0;
                    cholesky_solve(&chol, p, &mut unit);
                    (sigma2 * unit[k]).max(0.0).sqrt()
                })
                .collect::<Vec<_>>()
        } else {
            vec![f64::INFINITY; p]
        };
        let on_bound = config.alpha0.near_edge(theta[0])
            || config.alpha1.near_edge(theta[1])
            || config.gamma.near_edge(theta[2]);
        StdErrors {
            alpha0: diag[0],
            alpha1: diag[1],
            gamma: diag[2],
            beta: diag[3..].to_vec(),
            reliable: !on_bound && diag.iter().all(|v| v.is_finite()),
        }
    }
}

/// Scratch buffers for one LM run, reused across starts.
struct Solver {
    current: Normal,
    trial: Normal,
    system: Vec<f64>,
    step: Vec<f64>,
    theta: Vec<f64>,
    candidate: Vec<f64>,
    /// Per-parameter step forced by the box, `None` while the parameter is free.
    fixed: Vec<Option<f64>>,
}

impl Solver {
    fn new(p: usize) -> Self {
        Self {
            current: Normal::new(p),
            trial: Normal::new(p),
            system: vec![0.0; p * p],
            step: vec![0.0; p],
            theta: vec![0.0; p],
            candidate: vec![0.0; p],
            fixed: vec![None; p],
        }
    }

    /// Damped step restricted to the box. Parameters pinned on a bound by the
    /// gradient stay put; a free parameter whose step would leave the box is
    /// moved onto that bound and the remaining ones are re-solved. Returns
    /// false when the damped system is not positive definite.
    fn solve_step(&mut self, problem: &Problem<'_>, damping: f64) -> bool {
        let p = problem.dim();
        let jtj = &self.current.jtj;
        let jtr = &self.current.jtr;
        for k in 0..p {
            self.fixed[k] = problem.pinned(&self.theta, jtr, k).then_some(0.0);
        }
        for _ in 0..=p {
            for a in 0..p {
                match self.fixed[a] {
                    Some(d) => {
                        for b in 0..p {
                            self.system[a * p + b] = 0.0;
                        }
                        self.system[a * p + a] = 1.0;
                        self.step[a] = d;
                    }
                    None => {
                        let mut rhs = jtr[a];
                        for b in 0..p {
                            match self.fixed[b] {
                                Some(d) => {
                                    rhs -= jtj[a * p + b] * d;
                                    self.system[a * p + b] = 0.0;
                                }
                                None => self.system[a * p + b] = jtj[a * p + b],
                            }
                        }
                        self.system[a * p + a] += damping * (jtj[a * p + a] + 1.0);
                        self.step[a] = rhs;
                    }
                }
            }
            if !cholesky_in_place(&mut self.system, p) {
                return false;
            }
            cholesky_solve(&self.system, p, &mut self.step);
            let mut clipped = false;
            for k in 0..p {
                if self.fixed[k].is_none() {
                    let target = self.theta[k] + self.step[k];
                    if target < problem.lower[k] {
                        self.fixed[k] = Some(problem.lower[k] - self.theta[k]);
                        clipped = true;
                    } else if target > problem.upper[k] {
                        self.fixed[k] = Some(problem.upper[k] - self.theta[k]);
                        clipped = true;
                    }
                }
            }
            if !clipped {
                return true;
            }
        }
        true
    }

    fn run(&mut self, problem: &Problem<'_>, config: &FitConfig, start: &[f64]) -> RunOutcome {
        let p = problem.dim();
        self.theta.copy_from_slice(start);
        problem.evaluate(&self.theta, &mut self.current);

        let mut damping = config.lambda_init;
        let mut iterations = 0;
        let mut converged = false;
        if !self.current.rss.is_finite() {
            return self.outcome(false, 0);
        }
        if problem.projected_gradient_norm(&self.theta, &self.current.jtr) < config.grad_tol {
            return self.outcome(true, 0);
        }

        'outer: while iterations < config.max_iter {
            loop {
                if damping > MAX_DAMPING {
                    // No descent is possible from here: a projected stationary point.
                    converged = true;
                    break 'outer;
                }
                if !self.solve_step(problem, damping) {
                    damping *= config.lambda_up;
                    continue;
                }
                for k in 0..p {
                    self.candidate[k] = self.theta[k] + self.step[k];
                }
                problem.project(&mut self.candidate);
                if self.candidate == self.theta {
                    converged = true;
                    break 'outer;
                }
                problem.evaluate(&self.candidate, &mut self.trial);
                if self.trial.rss.is_finite() && self.trial.rss < self.current.rss {
                    break;
                }
                damping *= config.lambda_up;
            }

            iterations += 1;
            let improvement = self.current.rss - self.trial.rss;
            let scale = self.current.rss;
            std::mem::swap(&mut self.current, &mut self.trial);
            std::mem::swap(&mut self.theta, &mut self.candidate);
            damping = (damping * config.lambda_down).max(f64::MIN_POSITIVE);

            if improvement <= config.rel_tol * scale
                || problem.projected_gradient_norm(&self.theta, &self.current.jtr) < config.grad_tol
            {
                converged = true;
                break;
            }
        }
        self.outcome(converged, iterations)
    }

    fn outcome(&self, converged: bool, iterations: usize) -> RunOutcome {
        RunOutcome {
            params: DecayParams::new(self.theta[0], self.theta[1], self.theta[2]),
            beta: self.theta[3..].to_vec(),
            rss: self.current.rss,
            converged,
            iterations,
        }
    }
}

/// Cholesky factorisation `A = LLᵀ` of a row-major SPD matrix, storing `L`
/// in the lower triangle. Returns false if `A` is not positive definite.
fn cholesky_in_place(a: &mut [f64], p: usize) -> bool {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    true
}

/// Solves `LLᵀx = b` in place given the factor from [`cholesky_in_place`].
fn cholesky_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}
