//! Closed-form bias/variance/power bounds for a doubly stochastic shift of a
//! locally stationary random graph signal, and a Monte Carlo harness that
//! estimates the same quantities.
//!
//! Within the incoming neighbourhood `V_m` every vertex signal has mean `μ`,
//! standard deviation `σ` and pairwise correlation `ρ`. The shifted value is
//! `y_m = Σ_n S_mn x_n`, so
//!
//! * `E[y_m] = μ Σ_n S_mn = μ`
//! * `Var[y_m] = σ² (Σ S_mn² + ρ Σ_{n≠k} S_mn S_mk)`
//! * `Var[y_m] ≤ σ² (1 + N_m ρ) Σ S_mn²`, and `Σ S_mn² ≤ (L+U)² / (4 L U N_m)`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::balance::DSOperator;
use crate::error::{Error, Result};
use crate::graph::{incoming_neighborhood, Graph, Neighborhood};
use crate::shift::GraphSignal;

/// First- and second-order moments shared by one neighbourhood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalMoments {
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl LocalMoments {
    pub fn new(mu: f64, sigma: f64, rho: f64) -> Result<LocalMoments> {
        if !mu.is_finite() {
            return Err(Error::invalid(format!("mean must be finite, got {mu}")));
        }
        check_sigma(sigma)?;
        check_rho(rho)?;
        Ok(LocalMoments { mu, sigma, rho })
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
    }
    Ok(())
}

fn check_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower > 0.0 && lower <= upper && upper <= 1.0) {
        return Err(Error::invalid(format!(
            "entry bounds must satisfy 0 < L <= U <= 1, got L = {lower}, U = {upper}"
        )));
    }
    Ok(())
}

/// Per-neighbourhood moments of a locally stationary signal.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomSignalModel {
    per_center: Vec<LocalMoments>,
}

impl RandomSignalModel {
    /// The same moments at every vertex.
    pub fn homogeneous(n_vertices: usize, moments: LocalMoments) -> RandomSignalModel {
        RandomSignalModel {
            per_center: vec![moments; n_vertices],
        }
    }

    /// One set of moments per neighbourhood centre. Rejects assignments where
    /// a vertex shared by two neighbourhoods would need two different means or
    /// variances, or a shared pair would need two different correlations.
    pub fn from_neighborhoods(graph: &Graph, per_center: Vec<LocalMoments>) -> Result<RandomSignalModel> {
        let n = graph.n_vertices();
        if per_center.len() != n {
            return Err(Error::invalid(format!(
                "got {} moment sets for a graph with {n} vertices",
                per_center.len()
            )));
        }
        let mut vertex: Vec<Option<(usize, f64, f64)>> = vec![None; n];
        let mut pairs: HashMap<(usize, usize), (usize, f64)> = HashMap::new();
        for (m, mom) in per_center.iter().enumerate() {
            LocalMoments::new(mom.mu, mom.sigma, mom.rho)?;
            let members = incoming_neighborhood(graph, m)?.members;
            for &v in &members {
                match vertex[v] {
                    Some((other, mu, sigma)) if mu != mom.mu || sigma != mom.sigma => {
                        return Err(Error::invalid(format!(
                            "vertex {v} lies in the neighbourhoods of {other} and {m} with conflicting moments"
                        )));
                    }
                    Some(_) => {}
                    None => vertex[v] = Some((m, mom.mu, mom.sigma)),
                }
            }
            for (a, &p) in members.iter().enumerate() {
                for &q in &members[a + 1..] {
                    match pairs.get(&(p, q)) {
                        Some(&(other, rho)) if rho != mom.rho => {
                            return Err(Error::invalid(format!(
                                "pair ({p}, {q}) lies in the neighbourhoods of {other} and {m} with conflicting correlations"
                            )));
                        }
                        Some(_) => {}
                        None => {
                            pairs.insert((p, q), (m, mom.rho));
                        }
                    }
                }
            }
        }
        Ok(RandomSignalModel { per_center })
    }

    pub fn moments(&self, m: usize) -> Result<LocalMoments> {
        self.per_center
            .get(m)
            .copied()
            .ok_or_else(|| Error::invalid(format!("vertex {m} out of range")))
    }
}

/// Smallest and largest positive entries of one operator row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalBounds {
    pub lower: f64,
    pub upper: f64,
    pub size: usize,
}

fn positive_row(s: &DSOperator, m: usize) -> Result<Vec<f64>> {
    if m >= s.n() {
        return Err(Error::invalid(format!(
            "vertex {m} out of range for a {}-vertex operator",
            s.n()
        )));
    }
    let row: Vec<f64> = s.matrix().row(m).map(|(_, v)| v).filter(|v| *v > 0.0).collect();
    if row.is_empty() {
        return Err(Error::invalid(format!("row {m} has no positive entry")));
    }
    Ok(row)
}

pub fn local_bounds(s: &DSOperator, m: usize) -> Result<LocalBounds> {
    let row = positive_row(s, m)?;
    Ok(LocalBounds {
        lower: row.iter().copied().fold(f64::INFINITY, f64::min),
        upper: row.iter().copied().fold(0.0, f64::max),
        size: row.len(),
    })
}

/// `Σ_n S_mn²`
pub fn row_square_sum(s: &DSOperator, m: usize) -> Result<f64> {
    Ok(positive_row(s, m)?.iter().map(|v| v * v).sum())
}

/// `(L + U)² / (4 L U)`, the squared ratio of arithmetic to geometric mean.
pub fn amgm_bias_term(lower: f64, upper: f64) -> Result<f64> {
    if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
        return Err(Error::invalid(format!("need 0 < L <= U, got L = {lower}, U = {upper}")));
    }
    Ok((lower + upper).powi(2) / (4.0 * lower * upper))
}

/// Upper bound on `Σ_n S_mn²`: `(1 / N_m) (L + U)² / (4 L U)`.
///
/// The bound is below one only while the AM-GM term stays below `N_m`.
pub fn kantorovich_bound(s: &DSOperator, m: usize) -> Result<f64> {
    let b = local_bounds(s, m)?;
    let bound = amgm_bias_term(b.lower, b.upper)? / b.size as f64;
    debug_assert!(row_square_sum(s, m)? <= bound * (1.0 + 1e-12));
    Ok(bound)
}

/// `σ² (1 + N_m ρ) Σ_n S_mn²`
pub fn variance_upper_bound(s: &DSOperator, m: usize, sigma: f64, rho: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_rho(rho)?;
    let size = local_bounds(s, m)?.size as f64;
    Ok(sigma * sigma * (1.0 + size * rho) * row_square_sum(s, m)?)
}

/// The three terms of `Σ_{n≠k} S_mn S_mk ≤ (Σ S_mn)² ≤ N_m Σ S_mn²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossTermChain {
    pub cross: f64,
    pub squared_sum: f64,
    pub scaled_square_sum: f64,
}

pub fn cross_term_chain(s: &DSOperator, m: usize) -> Result<CrossTermChain> {
    let row = positive_row(s, m)?;
    let sum: f64 = row.iter().sum();
    let sq: f64 = row.iter().map(|v| v * v).sum();
    Ok(CrossTermChain {
        cross: sum * sum - sq,
        squared_sum: sum * sum,
        scaled_square_sum: row.len() as f64 * sq,
    })
}

/// `σ² (Σ S_mn² + ρ Σ_{n≠k} S_mn S_mk)`
pub fn exact_shift_variance(s: &DSOperator, m: usize, sigma: f64, rho: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_rho(rho)?;
    let row = positive_row(s, m)?;
    let sq: f64 = row.iter().map(|v| v * v).sum();
    let sum: f64 = row.iter().sum();
    let cross = (sum * sum - sq).max(0.0);
    Ok(sigma * sigma * (sq + rho * cross))
}

/// Limit of the variance bound as the neighbourhood grows: `ρ σ² (L+U)² / (4 L U)`.
pub fn asymptotic_variance_bound(sigma: f64, rho: f64, lower: f64, upper: f64) -> Result<f64> {
    check_sigma(sigma)?;
    check_rho(rho)?;
    check_bounds(lower, upper)?;
    Ok(rho * sigma * sigma * amgm_bias_term(lower, upper)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerBounds {
    /// `μ²`, from nonnegativity of the variance.
    pub lower: f64,
    /// `μ² + ρ σ² (L+U)² / (4 L U)`
    pub upper: f64,
}

pub fn l2_bounds(mu: f64, sigma: f64, rho: f64, lower: f64, upper: f64) -> Result<PowerBounds> {
    let var = asymptotic_variance_bound(sigma, rho, lower, upper)?;
    Ok(PowerBounds {
        lower: mu * mu,
        upper: mu * mu + var,
    })
}

/// Source of zero-mean, unit-variance draws for the sampler.
pub trait UnitNoise: Sync {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Gaussian;

impl UnitNoise for Gaussian {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.sample(StandardNormal)
    }
}

/// Uniform on `[-√3, √3]`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformNoise;

impl UnitNoise for UniformNoise {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let half_width = 3f64.sqrt();
        rng.random_range(-half_width..=half_width)
    }
}

/// One equicorrelated draw of `size` values:
/// `x_n = μ + σ (√ρ z₀ + √(1 − ρ) z_n)`.
pub fn sample_local<R: Rng + ?Sized, N: UnitNoise>(
    moments: &LocalMoments,
    size: usize,
    noise: &N,
    rng: &mut R,
) -> Vec<f64> {
    let shared = moments.rho.sqrt();
    let own = (1.0 - moments.rho).sqrt();
    let z0 = noise.draw(rng);
    (0..size)
        .map(|_| moments.mu + moments.sigma * (shared * z0 + own * noise.draw(rng)))
        .collect()
}

/// Gaussian draw of the signal restricted to `neighborhood`, using the
/// moments the model assigns to the neighbourhood centre.
pub fn sample_local_signal(model: &RandomSignalModel, neighborhood: &Neighborhood, seed: u64) -> Result<GraphSignal> {
    let moments = model.moments(neighborhood.center)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(GraphSignal::new(sample_local(
        &moments,
        neighborhood.size(),
        &Gaussian,
        &mut rng,
    )))
}

/// Independent random stream for one Monte Carlo trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShiftStats {
    pub mean: f64,
    pub variance: f64,
    pub power: f64,
    pub trials: usize,
    pub mean_stderr: f64,
    pub variance_stderr: f64,
    pub power_stderr: f64,
}

pub fn monte_carlo_shift_stats(
    s: &DSOperator,
    m: usize,
    model: &RandomSignalModel,
    trials: usize,
    seed: u64,
) -> Result<ShiftStats> {
    monte_carlo_shift_stats_with(s, m, model, trials, seed, &Gaussian)
}

/// Trials run in parallel on per-trial streams and are aggregated in trial
/// order, so the result does not depend on scheduling.
pub fn monte_carlo_shift_stats_with<N: UnitNoise>(
    s: &DSOperator,
    m: usize,
    model: &RandomSignalModel,
    trials: usize,
    seed: u64,
    noise: &N,
) -> Result<ShiftStats> {
    if trials < 2 {
        return Err(Error::invalid(format!("need at least 2 trials, got {trials}")));
    }
    positive_row(s, m)?;
    let weights: Vec<f64> = s.matrix().row(m).map(|(_, v)| v).filter(|v| *v > 0.0).collect();
    let moments = model.moments(m)?;
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let x = sample_local(&moments, weights.len(), noise, &mut rng);
            weights.iter().zip(&x).map(|(w, v)| w * v).sum()
        })
        .collect();
    Ok(summarize(&samples))
}

fn summarize(samples: &[f64]) -> ShiftStats {
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / t;
    let (mut m2, mut m4) = (0.0, 0.0);
    for y in samples {
        let d = (y - mean).powi(2);
        m2 += d;
        m4 += d * d;
    }
    let variance = m2 / (t - 1.0);
    let power = samples.iter().map(|y| y * y).sum::<f64>() / t;
    let power_var = samples.iter().map(|y| (y * y - power).powi(2)).sum::<f64>() / (t - 1.0);
    let central2 = m2 / t;
    let central4 = m4 / t;
    ShiftStats {
        mean,
        variance,
        power,
        trials: samples.len(),
        mean_stderr: (variance / t).sqrt(),
        variance_stderr: ((central4 - central2 * central2).max(0.0) / t).sqrt(),
        power_stderr: (power_var / t).sqrt(),
    }
}

/// All closed-form bounds for one vertex, plus an optional Monte Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub schema: u32,
    pub vertex: usize,
    pub neighborhood_size: usize,
    #[serde(rename = "L")]
    pub lower: f64,
    #[serde(rename = "U")]
    pub upper: f64,
    pub amgm: f64,
    pub square_sum: f64,
    pub kantorovich: f64,
    pub var_exact: f64,
    pub var_bound: f64,
    pub var_asymptotic: f64,
    pub power_upper: f64,
    pub power_lower: f64,
    pub mc: Option<McSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub var: f64,
    pub power: f64,
    pub trials: usize,
    pub seed: u64,
    pub stderr_mean: f64,
    pub stderr_var: f64,
    pub stderr_power: f64,
}

pub fn bounds_report(
    s: &DSOperator,
    m: usize,
    moments: LocalMoments,
    trials: Option<usize>,
    seed: u64,
) -> Result<BoundsReport> {
    let lb = local_bounds(s, m)?;
    let power = l2_bounds(moments.mu, moments.sigma, moments.rho, lb.lower, lb.upper)?;
    let mc = match trials {
        Some(trials) => {
            let model = RandomSignalModel::homogeneous(s.n(), moments);
            let st = monte_carlo_shift_stats(s, m, &model, trials, seed)?;
            Some(McSummary {
                mean: st.mean,
                var: st.variance,
                power: st.power,
                trials,
                seed,
                stderr_mean: st.mean_stderr,
                stderr_var: st.variance_stderr,
                stderr_power: st.power_stderr,
            })
        }
        None => None,
    };
    Ok(BoundsReport {
        schema: 1,
        vertex: m,
        neighborhood_size: lb.size,
        lower: lb.lower,
        upper: lb.upper,
        amgm: amgm_bias_term(lb.lower, lb.upper)?,
        square_sum: row_square_sum(s, m)?,
        kantorovich: kantorovich_bound(s, m)?,
        var_exact: exact_shift_variance(s, m, moments.sigma, moments.rho)?,
        var_bound: variance_upper_bound(s, m, moments.sigma, moments.rho)?,
        var_asymptotic: asymptotic_variance_bound(moments.sigma, moments.rho, lb.lower, lb.upper)?,
        power_upper: power.upper,
        power_lower: power.lower,
        mc,
    })
}
