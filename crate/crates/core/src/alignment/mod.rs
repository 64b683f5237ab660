//! Retrieval alignment.
//!
//! Two ways to distribute "strength" `x_s` over classes under per-chunk
//! budgets `f`:
//!
//! * log-utility maximization, `max sum_s gamma_s log x_s  s.t.  C x = f`,
//!   solved by dual price iteration. For fixed prices the optimal strengths
//!   have the closed form `x_s = gamma_s / (C(:,s)^T lambda)`;
//! * constrained least squares, `min 1/2 ||V x - q||^2  s.t.  C x = f`,
//!   solved directly from its KKT block system.
//!
//! Classes are then ranked by strength and the chunks containing the top
//! `k'` classes form the context.

pub mod linalg;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::ModelGateway;
use crate::index::Index;
use crate::retrieval::{self, filter_ballots, ChunkScore, ClassScore, RetrievalResult, RetrievalStatus};

use linalg::{lu_solve, norm_inf, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// The KKT system factored but its solution misses the residual bounds.
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    /// Utility: `max_s |gamma_s / x_s - C(:,s)^T lambda|` over classes with
    /// positive strength. CLS: `||V^T V x + C^T lambda - V^T q||_inf`.
    pub kkt_residual: f64,
    /// `||C x - f||_inf` over the constraints that were enforced.
    pub feasibility_residual: f64,
    pub status: SolveStatus,
}

/// Inputs shared by both alignment methods. `c` is `K x S` (0/1), `v` is
/// `P x S`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentProblem {
    pub c: Matrix,
    pub v: Matrix,
    pub q: Vec<f64>,
    pub f: Vec<f64>,
    /// Raw relevance weights, `V^T q` unless overridden.
    pub gamma: Vec<f64>,
}

impl AlignmentProblem {
    pub fn new(c: Matrix, v: Matrix, q: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if v.rows() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: v.rows(),
                got: q.len(),
            });
        }
        let gamma = v.matvec_t(&q);
        Self::with_gamma(c, v, q, f, gamma)
    }

    /// Same as [`AlignmentProblem::new`] with explicit relevance weights.
    pub fn with_gamma(c: Matrix, v: Matrix, q: Vec<f64>, f: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let (k, s) = (c.rows(), c.cols());
        if v.cols() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                got: v.cols(),
            });
        }
        if v.rows() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: v.rows(),
                got: q.len(),
            });
        }
        if f.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: f.len(),
            });
        }
        if gamma.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                got: gamma.len(),
            });
        }
        if f.iter().any(|&b| !(b.is_finite() && b > 0.0)) {
            return Err(Error::invalid("budgets f must be finite and positive"));
        }
        if gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("relevance weights must be finite"));
        }
        if let Some(col) = (0..s).find(|&j| (0..k).all(|i| c[(i, j)] == 0.0)) {
            return Err(Error::invalid(format!("class {col} occurs in no chunk")));
        }
        Ok(Self { c, v, q, f, gamma })
    }

    pub fn num_chunks(&self) -> usize {
        self.c.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.c.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityOptions {
    pub eps: f64,
    pub t_max: usize,
    pub step0: f64,
    pub lambda_min: f64,
    pub gamma_min: f64,
}

impl Default for UtilityOptions {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            t_max: 100_000,
            step0: 0.1,
            lambda_min: 1e-12,
            gamma_min: 1e-9,
        }
    }
}

/// Dual price iteration for the log-utility problem.
///
/// Prices start at `1/K`. Each round sets `x_s = gamma_s / (C(:,s)^T lambda)`,
/// measures the load `rho = C x`, stops once `||rho - f||_inf < eps`, and
/// otherwise moves prices along the excess demand with step
/// `step0 / sqrt(t)`, never below `lambda_min`.
///
/// The iteration runs with the weights divided by their mean so that the
/// step schedule does not depend on the magnitude of `gamma`; prices are
/// scaled back before returning.
///
/// Classes with `gamma_s <= 0` get no strength; positive weights are clamped
/// below at `gamma_min`. Chunks with no positively weighted class are left
/// unconstrained and keep a zero price.
pub fn solve_utility(problem: &AlignmentProblem, opts: &UtilityOptions) -> Result<AlignmentSolution> {
    let (k, s) = (problem.num_chunks(), problem.num_classes());
    let c = &problem.c;
    let active_class: Vec<bool> = problem.gamma.iter().map(|&g| g > 0.0).collect();
    let gamma: Vec<f64> = problem
        .gamma
        .iter()
        .map(|&g| if g > 0.0 { g.max(opts.gamma_min) } else { 0.0 })
        .collect();
    let active_row: Vec<bool> = (0..k)
        .map(|i| (0..s).any(|j| active_class[j] && c[(i, j)] != 0.0))
        .collect();
    let n_active = active_row.iter().filter(|&&a| a).count();
    let n_active_classes = active_class.iter().filter(|&&a| a).count();
    let gs = if n_active_classes == 0 {
        1.0
    } else {
        gamma.iter().sum::<f64>() / n_active_classes as f64
    };
    let g_n: Vec<f64> = gamma.iter().map(|g| g / gs).collect();
    let f = &problem.f;

    let mut lambda: Vec<f64> = active_row
        .iter()
        .map(|&a| if a { 1.0 / k as f64 } else { 0.0 })
        .collect();
    let mut x = vec![0.0; s];
    let mut rho = vec![0.0; k];

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    if n_active == 0 {
        return Ok(utility_solution(
            problem,
            &gamma,
            x,
            lambda,
            0,
            0.0,
            SolveStatus::Converged,
        ));
    }

    for t in 1..=opts.t_max {
        iterations = t;
        for j in 0..s {
            x[j] = if active_class[j] {
                let price: f64 = (0..k).map(|i| c[(i, j)] * lambda[i]).sum();
                g_n[j] / price
            } else {
                0.0
            };
        }
        let mut residual = 0.0f64;
        for i in 0..k {
            rho[i] = (0..s).map(|j| c[(i, j)] * x[j]).sum();
            if active_row[i] {
                residual = residual.max((rho[i] - f[i]).abs());
            }
        }
        if best.as_ref().is_none_or(|(r, _, _)| residual < *r) {
            best = Some((residual, x.clone(), lambda.clone()));
        }
        if residual < opts.eps {
            lambda.iter_mut().for_each(|l| *l *= gs);
            return Ok(utility_solution(
                problem,
                &gamma,
                x,
                lambda,
                t,
                residual,
                SolveStatus::Converged,
            ));
        }
        let step = opts.step0 / (t as f64).sqrt();
        for i in 0..k {
            if active_row[i] {
                lambda[i] = (lambda[i] + step * (rho[i] - f[i])).max(opts.lambda_min);
            }
        }
    }

    let (residual, x, mut lambda) = best.expect("at least one iteration ran");
    lambda.iter_mut().for_each(|l| *l *= gs);
    let sol = utility_solution(problem, &gamma, x, lambda, iterations, residual, SolveStatus::MaxIter);
    Err(Error::NonConvergence { best: Box::new(sol) })
}

fn utility_solution(
    problem: &AlignmentProblem,
    gamma: &[f64],
    x: Vec<f64>,
    lambda: Vec<f64>,
    iterations: usize,
    feasibility_residual: f64,
    status: SolveStatus,
) -> AlignmentSolution {
    let prices = problem.c.matvec_t(&lambda);
    let kkt_residual = x
        .iter()
        .zip(gamma)
        .zip(&prices)
        .filter(|((&xs, _), _)| xs > 0.0)
        .map(|((&xs, &g), &p)| (g / xs - p).abs())
        .fold(0.0, f64::max);
    AlignmentSolution {
        x,
        lambda,
        iterations,
        kkt_residual,
        feasibility_residual,
        status,
    }
}

/// Largest KKT system (`S + K` unknowns) `solve_cls` will assemble.
pub const DEFAULT_CLS_MAX_DIM: usize = 4096;
pub const CLS_TOL: f64 = 1e-8;

/// Solves `[V^T V, C^T; C, 0] [x; lambda] = [V^T q; f]` by LU.
///
/// A factorization failure is [`Error::SingularSystem`]; a solution that
/// misses either residual bound is returned with [`SolveStatus::Singular`].
pub fn solve_cls(problem: &AlignmentProblem, max_dim: usize) -> Result<AlignmentSolution> {
    let (k, s) = (problem.num_chunks(), problem.num_classes());
    let n = s + k;
    if n > max_dim {
        return Err(Error::invalid(format!(
            "KKT system of size {n} exceeds the limit of {max_dim}"
        )));
    }
    let gram = problem.v.gram();
    let vtq = problem.v.matvec_t(&problem.q);
    let kkt = Matrix::from_fn(n, n, |r, col| match (r < s, col < s) {
        (true, true) => gram[(r, col)],
        (true, false) => problem.c[(col - s, r)],
        (false, true) => problem.c[(r - s, col)],
        (false, false) => 0.0,
    });
    let rhs: Vec<f64> = vtq.iter().chain(&problem.f).copied().collect();
    let sol = lu_solve(&kkt, &rhs)?;
    let (x, lambda) = (sol[..s].to_vec(), sol[s..].to_vec());

    let cx = problem.c.matvec(&x);
    let feasibility_residual = norm_inf(&cx.iter().zip(&problem.f).map(|(a, b)| a - b).collect::<Vec<_>>());
    let gx = gram.matvec(&x);
    let ctl = problem.c.matvec_t(&lambda);
    let stationarity: Vec<f64> = (0..s).map(|j| gx[j] + ctl[j] - vtq[j]).collect();
    let kkt_residual = norm_inf(&stationarity);
    let status = if feasibility_residual < CLS_TOL && kkt_residual < CLS_TOL {
        SolveStatus::Converged
    } else {
        SolveStatus::Singular
    };
    Ok(AlignmentSolution {
        x,
        lambda,
        iterations: 1,
        kkt_residual,
        feasibility_residual,
        status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMethod {
    /// Rank classes by relevance `gamma = V^T q` alone.
    #[default]
    None,
    Utility,
    Cls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub method: AlignMethod,
    /// Per-chunk budget; every entry of `f` is set to this value.
    pub budget: f64,
    pub k_prime: usize,
    pub utility: UtilityOptions,
    pub cls_max_dim: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            method: AlignMethod::None,
            budget: 1.0,
            k_prime: 5,
            utility: UtilityOptions::default(),
            cls_max_dim: DEFAULT_CLS_MAX_DIM,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_prime == 0 {
            return Err(Error::invalid("k_prime must be >= 1"));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::invalid("budget must be finite and positive"));
        }
        Ok(())
    }
}

/// Alignment details attached to a retrieval result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub method: AlignMethod,
    pub gamma: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<AlignmentSolution>,
    /// The utility solver did not converge and classes were ranked by
    /// `gamma` instead.
    pub fell_back: bool,
}

pub fn aligned_retrieve(
    index: &Index,
    query_text: &str,
    cfg: &AlignConfig,
    gateway: Option<&ModelGateway>,
) -> Result<RetrievalResult> {
    cfg.validate()?;
    if index.num_classes() == 0 {
        return Ok(RetrievalResult::empty(index.num_chunks()));
    }
    let q = retrieval::embed_query(index, query_text, gateway)?;
    aligned_retrieve_with_vector(index, &q, cfg)
}

/// Ranks classes by aligned strength (ties: higher `gamma`, then lower id),
/// keeps the top `k'`, and returns every chunk containing one of them,
/// ordered by the strength mass of selected classes it holds.
pub fn aligned_retrieve_with_vector(index: &Index, q: &[f64], cfg: &AlignConfig) -> Result<RetrievalResult> {
    cfg.validate()?;
    let s = index.num_classes();
    if s == 0 {
        return Ok(RetrievalResult::empty(index.num_chunks()));
    }
    let problem = AlignmentProblem::new(
        index.incidence().to_matrix(),
        index.embedding_matrix(),
        q.to_vec(),
        vec![cfg.budget; index.num_chunks()],
    )?;

    let mut fell_back = false;
    let solution = match cfg.method {
        AlignMethod::None => None,
        AlignMethod::Utility => match solve_utility(&problem, &cfg.utility) {
            Ok(sol) => Some(sol),
            Err(Error::NonConvergence { best }) => {
                log::warn!(
                    "utility alignment stopped after {} iterations (residual {:.3e}); ranking by relevance",
                    best.iterations,
                    best.feasibility_residual
                );
                fell_back = true;
                Some(*best)
            }
            Err(e) => return Err(e),
        },
        AlignMethod::Cls => Some(solve_cls(&problem, cfg.cls_max_dim)?),
    };

    let gamma = &problem.gamma;
    let strength: Vec<f64> = match (&solution, fell_back) {
        (Some(sol), false) => sol.x.clone(),
        _ => gamma.clone(),
    };

    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| {
        strength[b]
            .total_cmp(&strength[a])
            .then(gamma[b].total_cmp(&gamma[a]))
            .then(a.cmp(&b))
    });
    order.truncate(cfg.k_prime.min(s));

    let incidence = index.incidence();
    let mut mass: Vec<(usize, f64)> = (0..index.num_chunks())
        .filter_map(|k| {
            let held: Vec<usize> = order.iter().copied().filter(|&c| incidence.get(k, c)).collect();
            (!held.is_empty()).then(|| (k, held.iter().map(|&c| strength[c]).sum()))
        })
        .collect();
    mass.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let selected_classes = order
        .iter()
        .map(|&c| ClassScore {
            class_id: c,
            score: strength[c],
        })
        .collect();
    Ok(RetrievalResult {
        status: RetrievalStatus::Ok,
        selected_classes,
        filtered_ballots: filter_ballots(incidence, &order),
        elected_chunks: mass.iter().map(|&(k, _)| k).collect(),
        padded: false,
        rule_scores: mass
            .iter()
            .map(|&(chunk_id, score)| ChunkScore { chunk_id, score })
            .collect(),
        alignment: Some(AlignmentReport {
            method: cfg.method,
            gamma: gamma.clone(),
            solution,
            fell_back,
        }),
    })
}
