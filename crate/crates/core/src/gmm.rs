//! Diagonal-covariance Gaussian mixtures and regularized EM.

use rand::seq::index::sample_weighted;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::network::sample_categorical;
use crate::rng::stream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mixture weight below which a component is considered dead.
pub const DEAD_COMPONENT: f64 = 1e-8;

/// Variance floor used only when the regularizer is zero and the data are degenerate.
pub const MIN_VARIANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalGmm {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_normal(y: f64, mean: f64, variance: f64) -> f64 {
    let d = y - mean;
    -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
}

impl DiagonalGmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let gmm = DiagonalGmm { weights, means, variances };
        gmm.check()?;
        Ok(gmm)
    }

    /// The zero-dimensional mixture: density 1 on the empty assignment.
    pub fn empty() -> Self {
        DiagonalGmm {
            weights: vec![1.0],
            means: vec![vec![]],
            variances: vec![vec![]],
        }
    }

    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    fn check(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::Contract("mixture needs matching, nonempty component lists".into()));
        }
        let d = self.means[0].len();
        if self.means.iter().chain(&self.variances).any(|v| v.len() != d) {
            return Err(Error::Contract("mixture components disagree on dimension".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Contract("mixture weights must be nonnegative and sum to 1".into()));
        }
        if self.variances.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Contract("mixture variances must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.means[k])
            .zip(&self.variances[k])
            .map(|((y, m), v)| log_normal(*y, *m, *v))
            .sum()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for k in 0..self.components() {
            let t = self.weights[k].ln() + self.component_log_density(k, x);
            if t > max {
                sum = sum * (max - t).exp() + 1.0;
                max = t;
            } else if t > f64::NEG_INFINITY {
                sum += (t - max).exp();
            }
        }
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + sum.ln()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = sample_categorical(&self.weights, rng);
        self.means[k]
            .iter()
            .zip(&self.variances[k])
            .map(|(m, v)| {
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            })
            .collect()
    }

    /// Keeps only the listed dimensions, in the given order.
    pub fn marginal(&self, keep: &[usize]) -> DiagonalGmm {
        let pick = |rows: &Vec<Vec<f64>>| rows.iter().map(|r| keep.iter().map(|&i| r[i]).collect()).collect();
        DiagonalGmm {
            weights: self.weights.clone(),
            means: pick(&self.means),
            variances: pick(&self.variances),
        }
    }

    /// Slices the mixture at `x[dim] = value`; returns the normalized
    /// remainder and the marginal density of the slice.
    pub fn condition(&self, dim: usize, value: f64) -> (DiagonalGmm, f64) {
        let logs: Vec<f64> = (0..self.components())
            .map(|k| self.weights[k].ln() + log_normal(value, self.means[k][dim], self.variances[k][dim]))
            .collect();
        let total = log_sum_exp(&logs);
        let keep: Vec<usize> = (0..self.dim()).filter(|&i| i != dim).collect();
        let mut out = self.marginal(&keep);
        if total == f64::NEG_INFINITY {
            return (out, 0.0);
        }
        out.weights = logs.iter().map(|l| (l - total).exp()).collect();
        out.prune();
        (out, total.exp())
    }

    /// Convex combination of mixtures over the same dimensions.
    pub fn mixture(parts: &[(f64, &DiagonalGmm)]) -> Result<DiagonalGmm> {
        let total: f64 = parts.iter().map(|(w, _)| *w).sum();
        if !(total > 0.0) {
            return Err(Error::Contract("mixture of zero total weight".into()));
        }
        let mut out = DiagonalGmm {
            weights: vec![],
            means: vec![],
            variances: vec![],
        };
        for (w, g) in parts {
            if *w <= 0.0 {
                continue;
            }
            for k in 0..g.components() {
                out.weights.push(w / total * g.weights[k]);
                out.means.push(g.means[k].clone());
                out.variances.push(g.variances[k].clone());
            }
        }
        out.prune();
        out.check()?;
        Ok(out)
    }

    /// Drops zero-weight components and renormalizes.
    fn prune(&mut self) {
        let keep: Vec<usize> = (0..self.components()).filter(|&k| self.weights[k] > 0.0).collect();
        if keep.len() < self.components() && !keep.is_empty() {
            self.weights = keep.iter().map(|&k| self.weights[k]).collect();
            self.means = keep.iter().map(|&k| self.means[k].clone()).collect();
            self.variances = keep.iter().map(|&k| self.variances[k].clone()).collect();
        }
        let s: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= s;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    pub lambda: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            lambda: 10.0,
            max_iterations: 100,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub model: DiagonalGmm,
    /// Regularized error of the initial model and after every iteration.
    pub errors: Vec<f64>,
    pub iterations: usize,
    pub reseeded: usize,
    /// Indices into `errors` of models produced by a step that re-seeded a
    /// component; the error may rise at these steps.
    pub reseed_steps: Vec<usize>,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Weighted negative log-likelihood plus `lambda * sum_k sum_i 1/(2 var_ki)`.
/// `data` is row-major with `model.dim()` columns.
pub fn regularized_error(model: &DiagonalGmm, data: &[f64], weights: &[f64], lambda: f64) -> f64 {
    let d = model.dim();
    let nll: f64 = if d == 0 {
        0.0
    } else {
        data.chunks(d)
            .zip(weights)
            .map(|(y, w)| if *w > 0.0 { -w * model.log_density(y) } else { 0.0 })
            .sum()
    };
    let penalty: f64 = model.variances.iter().flatten().map(|v| 1.0 / (2.0 * v)).sum();
    nll + lambda * penalty
}

/// Fits a `k`-component diagonal mixture to weighted rows of `data`.
pub fn em_fit(data: &[f64], dim: usize, weights: &[f64], k: usize, config: &EmConfig) -> Result<EmFit> {
    em_fit_with_rng(data, dim, weights, k, config, &mut stream(config.seed, 0))
}

pub fn em_fit_with_rng<R: Rng + ?Sized>(
    data: &[f64],
    dim: usize,
    weights: &[f64],
    k: usize,
    config: &EmConfig,
    rng: &mut R,
) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::Contract("at least one mixture component is required".into()));
    }
    if !(config.tolerance > 0.0) || !(config.lambda >= 0.0) {
        return Err(Error::Contract("EM tolerance must be positive and lambda nonnegative".into()));
    }
    if dim == 0 {
        return Ok(EmFit {
            model: DiagonalGmm::empty(),
            errors: vec![0.0],
            iterations: 0,
            reseeded: 0,
            reseed_steps: vec![],
            dropped: 0,
            warnings: vec![],
        });
    }
    let m = weights.len();
    if data.len() != m * dim {
        return Err(Error::Contract(format!("{} values for {m} rows of dimension {dim}", data.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Contract("sample weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Learning("EM needs positive total weight".into()));
    }
    let rows: Vec<&[f64]> = data.chunks(dim).collect();
    let positive: Vec<usize> = (0..m).filter(|&i| weights[i] > 0.0).collect();
    let mut warnings = vec![];

    let mut distinct: Vec<&[f64]> = positive.iter().map(|&i| rows[i]).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if config.lambda == 0.0 && k > distinct.len() {
        warnings.push(format!(
            "degenerate fit: {k} components for {} distinct points with lambda = 0",
            distinct.len()
        ));
    }

    let global_mean: Vec<f64> = (0..dim)
        .map(|i| rows.iter().zip(weights).map(|(y, w)| w * y[i]).sum::<f64>() / total)
        .collect();
    let global_var: Vec<f64> = (0..dim)
        .map(|i| {
            let v = rows
                .iter()
                .zip(weights)
                .map(|(y, w)| w * (y[i] - global_mean[i]).powi(2))
                .sum::<f64>()
                / total;
            v.max(MIN_VARIANCE)
        })
        .collect();

    let k_eff = k.min(positive.len());
    let chosen = sample_weighted(rng, positive.len(), |i| weights[positive[i]], k_eff)
        .map_err(|e| Error::Internal(format!("initial mean selection failed: {e}")))?;
    let mut model = DiagonalGmm {
        weights: vec![1.0 / k_eff as f64; k_eff],
        means: chosen.iter().map(|i| rows[positive[i]].to_vec()).collect(),
        variances: vec![global_var.clone(); k_eff],
    };
    let mut reseed_used = vec![false; k_eff];
    let mut reseeded = 0;
    let mut reseed_steps = vec![];
    let mut dropped = 0;

    let mut errors: Vec<f64> = vec![];
    let mut resp = vec![0.0; m * k_eff];
    let mut log_p = vec![0.0; m];
    let mut iterations = 0;
    let mut just_reseeded = false;
    loop {
        let kc = model.components();
        resp.resize(m * kc, 0.0);
        let offset: Vec<f64> = (0..kc)
            .map(|c| model.weights[c].ln() - 0.5 * model.variances[c].iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect();
        let half_precision: Vec<Vec<f64>> = model
            .variances
            .iter()
            .map(|v| v.iter().map(|x| 0.5 / x).collect())
            .collect();
        let mut nll = 0.0;
        for (n, y) in rows.iter().enumerate() {
            let r = &mut resp[n * kc..(n + 1) * kc];
            for (c, slot) in r.iter_mut().enumerate() {
                let mean = &model.means[c];
                let hp = &half_precision[c];
                let mut q = 0.0;
                for i in 0..dim {
                    let d = y[i] - mean[i];
                    q += d * d * hp[i];
                }
                *slot = offset[c] - q;
            }
            let lse = log_sum_exp(r);
            log_p[n] = lse;
            if weights[n] > 0.0 {
                nll -= weights[n] * lse;
            }
            for slot in r.iter_mut() {
                *slot = weights[n] * (*slot - lse).exp();
            }
        }
        let penalty: f64 = model.variances.iter().flatten().map(|v| 1.0 / (2.0 * v)).sum();
        let err = nll + config.lambda * penalty;
        let converged = !just_reseeded && errors.last().is_some_and(|prev| prev - err < config.tolerance);
        errors.push(err);
        if converged || iterations == config.max_iterations {
            break;
        }
        iterations += 1;
        just_reseeded = false;
        let last = iterations == config.max_iterations;

        let mut next = DiagonalGmm {
            weights: Vec::with_capacity(kc),
            means: Vec::with_capacity(kc),
            variances: Vec::with_capacity(kc),
        };
        let mut next_used = Vec::with_capacity(kc);
        for c in 0..kc {
            let nk: f64 = (0..m).map(|n| resp[n * kc + c]).sum();
            if nk / total < DEAD_COMPONENT {
                if reseed_used[c] || last {
                    dropped += 1;
                    continue;
                }
                let worst = positive
                    .iter()
                    .copied()
                    .min_by(|&a, &b| log_p[a].total_cmp(&log_p[b]).then(a.cmp(&b)))
                    .unwrap();
                reseeded += 1;
                if !just_reseeded {
                    reseed_steps.push(errors.len());
                }
                just_reseeded = true;
                next.weights.push(1.0 / kc as f64);
                next.means.push(rows[worst].to_vec());
                next.variances.push(global_var.clone());
                next_used.push(true);
                continue;
            }
            let mut mean = vec![0.0; dim];
            for n in 0..m {
                let r = resp[n * kc + c];
                if r > 0.0 {
                    for i in 0..dim {
                        mean[i] += r * rows[n][i];
                    }
                }
            }
            for x in &mut mean {
                *x /= nk;
            }
            let mut scatter = vec![0.0; dim];
            for n in 0..m {
                let r = resp[n * kc + c];
                if r > 0.0 {
                    for i in 0..dim {
                        let d = rows[n][i] - mean[i];
                        scatter[i] += r * d * d;
                    }
                }
            }
            let var: Vec<f64> = scatter
                .iter()
                .map(|sc| ((sc + config.lambda) / nk).max(MIN_VARIANCE))
                .collect();
            next.weights.push(nk / total);
            next.means.push(mean);
            next.variances.push(var);
            next_used.push(reseed_used[c]);
        }
        if next.weights.is_empty() {
            return Err(Error::Internal("every mixture component died".into()));
        }
        next.prune();
        model = next;
        reseed_used = next_used;
    }
    Ok(EmFit {
        model,
        errors,
        iterations,
        reseeded,
        reseed_steps,
        dropped,
        warnings,
    })
}
