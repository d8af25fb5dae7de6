//! Regularized nonnegative RESCAL: `X_t ≈ A R_t Aᵀ` fitted by multiplicative
//! updates.
//!
//! The loss is
//!
//! ```text
//! L = ½ Σ_t ‖X_t − A R_t Aᵀ‖²_F + ½ (λ_A ‖A‖²_F + λ_R Σ_t ‖R_t‖²_F)
//! ```
//!
//! and each sweep applies
//!
//! ```text
//! A   ← A   ⊙ Σ_t (X_t A R_tᵀ + X_tᵀ A R_t) ⊘ [A (Σ_t (R_t AᵀA R_tᵀ + R_tᵀ AᵀA R_t) + λ_A I) + ε]
//! R_t ← R_t ⊙ (Aᵀ X_t A) ⊘ [AᵀA R_t AᵀA + λ_R R_t + ε]
//! ```
//!
//! `fit` takes the plain sweep whenever it lowers `L`. When it does not (the
//! `A` update is not monotone on its own), the `A` ratio is applied with a
//! halved exponent until `L` stops increasing, so the objective history never
//! rises.
//!
//! Per-slice terms are computed in parallel (rayon) but always reduced in
//! slice order, so results do not depend on the worker count.

use std::io::{BufRead, Write};

use ndarray::{Array2, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::AdjacencyTensor;

pub const INIT_LOW: f64 = 0.1;
pub const INIT_HIGH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Rank of the decomposition, equal to the number of communities.
    pub k: usize,
    pub lambda_a: f64,
    pub lambda_r: f64,
    pub max_iters: usize,
    /// Stop once `|L_n − L_{n−1}| / (1 + L_{n−1}) < tol`.
    pub tol: f64,
    /// Added to every update denominator.
    pub epsilon: f64,
    pub seed: u64,
}

impl Hyperparams {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            lambda_a: 0.2,
            lambda_r: 0.07,
            max_iters: 500,
            tol: 1e-6,
            epsilon: 1e-12,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.lambda_a >= 0.0 && self.lambda_a.is_finite())
            || !(self.lambda_r >= 0.0 && self.lambda_r.is_finite())
        {
            return Err(Error::Config(
                "regularization coefficients must be finite and nonnegative".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config("tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionState {
    /// `N x k` shared node factor.
    pub a: Array2<f64>,
    /// One `k x k` core matrix per slice.
    pub r: Vec<Array2<f64>>,
    /// Objective at initialization followed by one value per full sweep.
    pub objective_history: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl DecompositionState {
    pub fn from_factors(a: Array2<f64>, r: Vec<Array2<f64>>) -> Result<Self> {
        let k = a.ncols();
        if r.is_empty() {
            return Err(Error::Dimension("no core matrices".into()));
        }
        if let Some(bad) = r.iter().find(|m| m.dim() != (k, k)) {
            return Err(Error::Dimension(format!(
                "core matrix shape {:?}, expected ({k}, {k})",
                bad.dim()
            )));
        }
        Ok(Self {
            a,
            r,
            objective_history: Vec::new(),
            iterations_run: 0,
            converged: false,
        })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_nodes(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_slices(&self) -> usize {
        self.r.len()
    }

    /// `A R_t Aᵀ`.
    pub fn reconstruct(&self, t: usize) -> Array2<f64> {
        self.a.dot(&self.r[t]).dot(&self.a.t())
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_history.last().copied()
    }

    fn check_against(&self, x: &AdjacencyTensor) -> Result<()> {
        let (n, _, t) = x.dims();
        if self.num_nodes() != n || self.num_slices() != t {
            return Err(Error::Dimension(format!(
                "factors cover N={}, T={} but tensor is N={n}, T={t}",
                self.num_nodes(),
                self.num_slices()
            )));
        }
        Ok(())
    }
}

/// Draws `A` (row-major) then each `R_t` (row-major) from `U(0.1, 1.0)`.
pub fn init_decomposition(n: usize, hyper: &Hyperparams, t: usize) -> Result<DecompositionState> {
    init_decomposition_stream(n, hyper, t, 0)
}

/// Like [`init_decomposition`], drawing from ChaCha stream `stream` of the
/// seed. Stream 0 is the plain seeded generator.
pub fn init_decomposition_stream(
    n: usize,
    hyper: &Hyperparams,
    t: usize,
    stream: u64,
) -> Result<DecompositionState> {
    hyper.validate()?;
    if n == 0 || t == 0 {
        return Err(Error::Dimension(format!(
            "need N ≥ 1 and T ≥ 1, got N={n}, T={t}"
        )));
    }
    if hyper.k > n {
        return Err(Error::RankExceedsNodes { k: hyper.k, n });
    }
    let k = hyper.k;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    rng.set_stream(stream);
    let dist = Uniform::new(INIT_LOW, INIT_HIGH).expect("valid init interval");
    let a = Array2::from_shape_simple_fn((n, k), || dist.sample(&mut rng));
    let r = (0..t)
        .map(|_| Array2::from_shape_simple_fn((k, k), || dist.sample(&mut rng)))
        .collect();
    DecompositionState::from_factors(a, r)
}

fn frob2(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn objective(state: &DecompositionState, x: &AdjacencyTensor, hyper: &Hyperparams) -> f64 {
    let residual: Vec<f64> = (0..x.num_slices())
        .into_par_iter()
        .map(|t| {
            let approx = state.reconstruct(t);
            Zip::from(x.slice(t))
                .and(&approx)
                .fold(0.0, |acc, &xv, &av| acc + (xv - av) * (xv - av))
        })
        .collect();
    let fit: f64 = residual.iter().sum();
    let reg_r: f64 = state.r.iter().map(frob2).sum();
    0.5 * fit + 0.5 * (hyper.lambda_a * frob2(&state.a) + hyper.lambda_r * reg_r)
}

fn ensure_finite(m: &Array2<f64>, stage: &'static str, iteration: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage, iteration })
    }
}

fn multiplicative_step(
    target: &mut Array2<f64>,
    numer: &Array2<f64>,
    denom: &Array2<f64>,
    epsilon: f64,
) {
    Zip::from(target)
        .and(numer)
        .and(denom)
        .for_each(|v, &num, &den| *v *= num / (den + epsilon));
}

pub fn update_a(
    state: &mut DecompositionState,
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
) -> Result<()> {
    update_a_damped(state, x, hyper, 1.0)
}

/// The `A` update with its ratio raised to `step` (`0 < step ≤ 1`); `step = 1`
/// is [`update_a`]. Smaller steps move along the same descent direction.
pub fn update_a_damped(
    state: &mut DecompositionState,
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
    step: f64,
) -> Result<()> {
    state.check_against(x)?;
    let a = &state.a;
    let gram = a.t().dot(a);
    let terms: Vec<(Array2<f64>, Array2<f64>)> = (0..x.num_slices())
        .into_par_iter()
        .map(|t| {
            let xt = x.slice(t);
            let rt = &state.r[t];
            let numer = xt.dot(a).dot(&rt.t()) + xt.t().dot(a).dot(rt);
            let core = rt.dot(&gram).dot(&rt.t()) + rt.t().dot(&gram).dot(rt);
            (numer, core)
        })
        .collect();

    let k = state.rank();
    let mut numer = Array2::zeros(a.dim());
    let mut core = Array2::<f64>::eye(k) * hyper.lambda_a;
    for (n_t, c_t) in &terms {
        numer += n_t;
        core += c_t;
    }
    let denom = a.dot(&core);
    let mut next = state.a.clone();
    if step == 1.0 {
        multiplicative_step(&mut next, &numer, &denom, hyper.epsilon);
    } else {
        Zip::from(&mut next)
            .and(&numer)
            .and(&denom)
            .for_each(|v, &num, &den| *v *= (num / (den + hyper.epsilon)).powf(step));
    }
    ensure_finite(&next, "update_A", state.iterations_run)?;
    state.a = next;
    Ok(())
}

pub fn update_r(
    state: &mut DecompositionState,
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
) -> Result<()> {
    state.check_against(x)?;
    let a = &state.a;
    let gram = a.t().dot(a);
    let next: Vec<Array2<f64>> = (0..x.num_slices())
        .into_par_iter()
        .map(|t| {
            let rt = &state.r[t];
            let numer = a.t().dot(x.slice(t)).dot(a);
            let denom = gram.dot(rt).dot(&gram) + rt * hyper.lambda_r;
            let mut out = rt.clone();
            multiplicative_step(&mut out, &numer, &denom, hyper.epsilon);
            out
        })
        .collect();
    for m in &next {
        ensure_finite(m, "update_R", state.iterations_run)?;
    }
    state.r = next;
    Ok(())
}

/// One full sweep: `A` first, then every `R_t`.
pub fn sweep(
    state: &mut DecompositionState,
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
) -> Result<()> {
    update_a(state, x, hyper)?;
    update_r(state, x, hyper)
}

pub fn fit(x: &AdjacencyTensor, hyper: &Hyperparams) -> Result<DecompositionState> {
    let state = init_decomposition(x.num_nodes(), hyper, x.num_slices())?;
    fit_from(state, x, hyper)
}

/// Fits from `restarts` independent initializations (streams `0..restarts`
/// of the seed) and keeps the one with the lowest final objective; ties go
/// to the earliest. `restarts = 1` is exactly [`fit`].
pub fn fit_best_of(
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
    restarts: usize,
) -> Result<DecompositionState> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let fits: Vec<DecompositionState> = (0..restarts as u64)
        .into_par_iter()
        .map(|stream| {
            let state = init_decomposition_stream(x.num_nodes(), hyper, x.num_slices(), stream)?;
            fit_from(state, x, hyper)
        })
        .collect::<Result<_>>()?;
    let mut best: Option<DecompositionState> = None;
    for state in fits {
        let better = match &best {
            None => true,
            Some(b) => state.final_objective() < b.final_objective(),
        };
        if better {
            best = Some(state);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Runs the update loop from a caller-supplied starting point.
pub fn fit_from(
    mut state: DecompositionState,
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
) -> Result<DecompositionState> {
    hyper.validate()?;
    state.check_against(x)?;
    if state.rank() != hyper.k {
        return Err(Error::Dimension(format!(
            "state rank {} but k = {}",
            state.rank(),
            hyper.k
        )));
    }
    state.converged = false;
    let initial = objective(&state, x, hyper);
    if !initial.is_finite() {
        return Err(Error::NonFinite {
            stage: "objective",
            iteration: state.iterations_run,
        });
    }
    state.objective_history.push(initial);

    let mut previous = initial;
    for _ in 0..hyper.max_iters {
        let accepted = descending_sweep(&state, x, hyper, previous)?;
        state.iterations_run += 1;
        let Some((a, r, current)) = accepted else {
            // No step along the update direction lowers the objective.
            state.objective_history.push(previous);
            state.converged = true;
            break;
        };
        state.a = a;
        state.r = r;
        state.objective_history.push(current);
        if (current - previous).abs() / (1.0 + previous) < hyper.tol {
            state.converged = true;
            break;
        }
        previous = current;
    }
    Ok(state)
}

const MAX_STEP_HALVINGS: usize = 30;

/// One sweep that never raises the objective. The plain sweep is tried first;
/// if it overshoots, the `A` ratio exponent is halved until the objective
/// stops increasing. The `R_t` update is monotone for fixed `A` and is always
/// taken in full.
fn descending_sweep(
    state: &DecompositionState,
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
    previous: f64,
) -> Result<Option<(Array2<f64>, Vec<Array2<f64>>, f64)>> {
    let mut step = 1.0;
    for _ in 0..=MAX_STEP_HALVINGS {
        let mut trial = DecompositionState {
            a: state.a.clone(),
            r: state.r.clone(),
            objective_history: Vec::new(),
            iterations_run: state.iterations_run,
            converged: false,
        };
        update_a_damped(&mut trial, x, hyper, step)?;
        update_r(&mut trial, x, hyper)?;
        let value = objective(&trial, x, hyper);
        if !value.is_finite() {
            return Err(Error::NonFinite {
                stage: "objective",
                iteration: state.iterations_run + 1,
            });
        }
        if value <= previous {
            return Ok(Some((trial.a, trial.r, value)));
        }
        step *= 0.5;
    }
    Ok(None)
}

/// Writes factors as text:
///
/// ```text
/// # rescal-factors v1
/// A <rows> <cols>
/// <row-major values, one matrix row per line>
/// R <t> <rows> <cols>
/// ...
/// ```
pub fn write_factors<W: Write>(state: &DecompositionState, mut out: W) -> Result<()> {
    writeln!(out, "# rescal-factors v1")?;
    let mut dump = |header: String, m: &Array2<f64>| -> std::io::Result<()> {
        writeln!(out, "{header} {} {}", m.nrows(), m.ncols())?;
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    };
    dump("A".into(), &state.a)?;
    for (t, r) in state.r.iter().enumerate() {
        dump(format!("R {t}"), r)?;
    }
    Ok(())
}

pub fn read_factors<R: BufRead>(source: R) -> Result<DecompositionState> {
    let mut lines = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if !(line.trim().is_empty() || line.starts_with('#')) {
            lines.push((i + 1, line));
        }
    }
    let bad = |line: usize, msg: &str| Error::Parse {
        line,
        message: msg.to_owned(),
    };

    let mut pos = 0;
    let mut a = None;
    let mut r = Vec::new();
    while pos < lines.len() {
        let (lineno, header) = &lines[pos];
        let fields: Vec<&str> = header.split_whitespace().collect();
        let dims: Vec<usize> = fields[1..]
            .iter()
            .map(|f| f.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(*lineno, "invalid matrix header"))?;
        let (rows, cols) = match (fields.first(), dims.as_slice()) {
            (Some(&"A"), &[rows, cols]) if a.is_none() => (rows, cols),
            (Some(&"R"), &[t, rows, cols]) if t == r.len() => (rows, cols),
            _ => return Err(bad(*lineno, "unexpected matrix header")),
        };
        pos += 1;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (lineno, line) = lines
                .get(pos)
                .ok_or_else(|| bad(*lineno, "truncated matrix"))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(*lineno, "invalid number"))?;
            if row.len() != cols {
                return Err(bad(*lineno, "wrong row length"));
            }
            values.extend(row);
            pos += 1;
        }
        let m = Array2::from_shape_vec((rows, cols), values).expect("shape checked");
        if fields[0] == "A" {
            a = Some(m);
        } else {
            r.push(m);
        }
    }
    let a = a.ok_or_else(|| bad(0, "missing A matrix"))?;
    DecompositionState::from_factors(a, r)
}

pub fn write_objective_csv<W: Write>(history: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iter", "objective"])?;
    for (i, v) in history.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
