//! Graph shifts, polynomial graph filters and diffusion with a doubly
//! stochastic operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::balance::DSOperator;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct GraphSignal(pub Vec<f64>);

impl GraphSignal {
    pub fn new(values: Vec<f64>) -> GraphSignal {
        GraphSignal(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn norm(&self, p: Norm) -> f64 {
        match p {
            Norm::L1 => self.0.iter().map(|v| v.abs()).sum(),
            Norm::L2 => self.0.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Inf => self.0.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn norms(&self) -> SignalNorms {
        SignalNorms {
            l1: self.norm(Norm::L1),
            l2: self.norm(Norm::L2),
            linf: self.norm(Norm::Inf),
            mean: self.mean(),
        }
    }

    /// `‖x - mean(x)·1‖∞`
    pub fn deviation_from_mean(&self) -> f64 {
        let mean = self.mean();
        self.0.iter().fold(0.0, |m, v| m.max((v - mean).abs()))
    }
}

impl From<Vec<f64>> for GraphSignal {
    fn from(v: Vec<f64>) -> Self {
        GraphSignal(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Inf];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignalNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub mean: f64,
}

/// Coefficients `h_0, …, h_K` of `y = Σ h_k S^k x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterSpec {
    coefficients: Vec<f64>,
}

impl FilterSpec {
    pub fn new(coefficients: Vec<f64>) -> Result<FilterSpec> {
        if coefficients.is_empty() {
            return Err(Error::invalid("filter needs at least one coefficient"));
        }
        if coefficients.iter().any(|h| !h.is_finite()) {
            return Err(Error::invalid("filter coefficients must be finite"));
        }
        Ok(FilterSpec { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `Σ |h_k|`, the gain bound on every p-norm.
    pub fn l1_gain(&self) -> f64 {
        self.coefficients.iter().map(|h| h.abs()).sum()
    }
}

fn check_dims(s: &DSOperator, x: &GraphSignal) -> Result<()> {
    if s.n() != x.len() {
        return Err(Error::invalid(format!(
            "signal has length {} but the operator is {}x{}",
            x.len(),
            s.n(),
            s.n()
        )));
    }
    Ok(())
}

/// `y_m = Σ_{n ∈ V_m} S_mn x_n`
pub fn apply_shift(s: &DSOperator, x: &GraphSignal) -> Result<GraphSignal> {
    check_dims(s, x)?;
    Ok(GraphSignal(s.matrix().matvec(x.values())))
}

/// Horner evaluation: `acc = h_K x`, then `acc = S acc + h_k x` down to `k = 0`.
pub fn apply_filter(s: &DSOperator, h: &FilterSpec, x: &GraphSignal) -> Result<GraphSignal> {
    check_dims(s, x)?;
    let coeffs = h.coefficients();
    let (last, rest) = coeffs.split_last().expect("FilterSpec is never empty");
    let mut acc: Vec<f64> = x.values().iter().map(|v| last * v).collect();
    for hk in rest.iter().rev() {
        acc = s.matrix().matvec(&acc);
        for (a, v) in acc.iter_mut().zip(x.values()) {
            *a += hk * v;
        }
    }
    Ok(GraphSignal(acc))
}

/// `S^k x` by `k` repeated shifts.
pub fn diffuse(s: &DSOperator, x: &GraphSignal, k: usize) -> Result<GraphSignal> {
    check_dims(s, x)?;
    let mut y = x.values().to_vec();
    for _ in 0..k {
        y = s.matrix().matvec(&y);
    }
    Ok(GraphSignal(y))
}

/// Shifts are compared against the residual this many steps earlier.
pub const DIFFUSION_WINDOW: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionOutcome {
    pub signal: GraphSignal,
    pub shifts: usize,
    pub residual: f64,
}

/// Repeats shifts until `‖S^k x − mean(x)·1‖∞ ≤ tol`.
///
/// Fails with [`Error::NonConvergentDiffusion`] when the residual at step `k`
/// is no smaller than at step `k − DIFFUSION_WINDOW`, which is what periodic
/// (e.g. permutation) or reducible operators do.
pub fn diffuse_to_mean(s: &DSOperator, x: &GraphSignal, tol: f64, max_shifts: usize) -> Result<DiffusionOutcome> {
    check_dims(s, x)?;
    let target = x.mean();
    let residual_of = |y: &[f64]| y.iter().fold(0.0f64, |m, v| m.max((v - target).abs()));
    let mut y = x.values().to_vec();
    let mut history = vec![residual_of(&y)];
    for k in 0..=max_shifts {
        let residual = history[k];
        if residual <= tol {
            return Ok(DiffusionOutcome {
                signal: GraphSignal(y),
                shifts: k,
                residual,
            });
        }
        if k >= DIFFUSION_WINDOW && residual >= history[k - DIFFUSION_WINDOW] {
            return Err(Error::NonConvergentDiffusion {
                window: DIFFUSION_WINDOW,
                residual,
            });
        }
        if k == max_shifts {
            break;
        }
        y = s.matrix().matvec(&y);
        history.push(residual_of(&y));
    }
    Err(Error::NonConvergentDiffusion {
        window: DIFFUSION_WINDOW,
        residual: *history.last().unwrap(),
    })
}

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 100_000;
const POWER_ITER_SEED: u64 = 0x5eed;

/// Induced matrix norm: max column sum (p = 1), spectral norm (p = 2, by power
/// iteration on `AᵀA`), max row sum (p = ∞).
pub fn matrix_norm(a: &Matrix, p: Norm) -> f64 {
    match p {
        Norm::L1 => {
            let mut sums = vec![0.0; a.n()];
            for (_, j, v) in a.triplets() {
                sums[j] += v.abs();
            }
            sums.into_iter().fold(0.0, f64::max)
        }
        Norm::Inf => (0..a.n())
            .map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        Norm::L2 => spectral_norm(a),
    }
}

/// Parses `1`, `2`, `inf` into a [`Norm`].
pub fn parse_norm(p: &str) -> Result<Norm> {
    match p.trim().to_ascii_lowercase().as_str() {
        "1" => Ok(Norm::L1),
        "2" => Ok(Norm::L2),
        "inf" | "infinity" | "∞" => Ok(Norm::Inf),
        other => Err(Error::invalid(format!("unsupported norm p = {other}; use 1, 2 or inf"))),
    }
}

fn spectral_norm(a: &Matrix) -> f64 {
    let n = a.n();
    if n == 0 || a.nnz() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITER_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let av = a.matvec(&v);
        // Rayleigh quotient of AᵀA at unit v is ‖Av‖².
        let next: f64 = av.iter().map(|x| x * x).sum();
        let mut w = a.matvec_transpose(&av);
        if normalize(&mut w) == 0.0 {
            return next.sqrt();
        }
        v = w;
        let converged = (next - lambda).abs() <= POWER_ITER_TOL * next;
        lambda = next;
        if converged {
            break;
        }
    }
    lambda.sqrt()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WssReport {
    /// `‖Sμ − μ‖∞`
    pub mean_residual: f64,
    /// `max |SΣSᵀ − Σ|`
    pub covariance_residual: f64,
    pub pass: bool,
}

/// Closed-form check of first- and second-moment invariance under a
/// deterministic shift: `Sμ = μ` and `SΣSᵀ = Σ`.
pub fn wss_check(s: &DSOperator, mean: &[f64], covariance: &Matrix, tol: f64) -> Result<WssReport> {
    let n = s.n();
    if mean.len() != n || covariance.n() != n {
        return Err(Error::invalid(format!(
            "operator is {n}x{n} but mean has length {} and covariance is {}x{}",
            mean.len(),
            covariance.n(),
            covariance.n()
        )));
    }
    if !covariance.is_symmetric(1e-12) {
        return Err(Error::invalid("covariance is not symmetric"));
    }
    let s_mu = s.matrix().matvec(mean);
    let mean_residual = s_mu.iter().zip(mean).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let sst = s.matrix().matmul(covariance).matmul(&s.matrix().transpose());
    let covariance_residual = sst.max_abs_diff(covariance);
    Ok(WssReport {
        mean_residual,
        covariance_residual,
        pass: mean_residual <= tol && covariance_residual <= tol,
    })
}
