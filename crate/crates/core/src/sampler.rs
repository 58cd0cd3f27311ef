//! Ancestral sampling, likelihood weighting and importance-sampling primitives.

use rand::Rng;

use crate::density_tree::{scope_of, WeightedSampleSet};
use crate::error::{Error, Result};
use crate::network::{Evidence, HybridNetwork, Value};

/// Weights above this multiple of the median positive weight are clipped.
pub const CLIP_FACTOR: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct SampleRun {
    /// Full assignments over every network variable, in id order.
    pub samples: WeightedSampleSet,
    /// Continuous draws clamped to their variable's range.
    pub clamped: usize,
    /// Every weight is zero.
    pub degenerate: bool,
}

fn ancestral<R: Rng + ?Sized>(net: &HybridNetwork, evidence: &Evidence, m: usize, rng: &mut R) -> Result<SampleRun> {
    evidence.check(net)?;
    let order = net.topological_order()?;
    let ids: Vec<usize> = (0..net.len()).collect();
    let mut samples = WeightedSampleSet::with_capacity(scope_of(net, &ids), m);
    let mut clamped = 0;
    let mut row = vec![Value::Discrete(0); net.len()];
    for _ in 0..m {
        let mut weight = 1.0;
        for &v in &order {
            let cpd = net
                .cpd_of(v)
                .ok_or_else(|| Error::Contract(format!("no CPD for {}", net.variables[v].name)))?;
            let parent = |i: usize| row[cpd.parents[i]];
            match evidence.get(v) {
                Some(value) => {
                    weight *= cpd.eval_with(net, value, parent)?;
                    row[v] = value;
                }
                None => {
                    let (value, was_clamped) = cpd.sample_with(net, parent, rng)?;
                    clamped += usize::from(was_clamped);
                    row[v] = value;
                }
            }
        }
        samples.push(&row, weight);
    }
    let degenerate = samples.weights.iter().all(|w| *w == 0.0);
    Ok(SampleRun {
        samples,
        clamped,
        degenerate,
    })
}

/// `m` independent draws from the network's joint, all with unit weight.
pub fn prior_sample<R: Rng + ?Sized>(net: &HybridNetwork, m: usize, rng: &mut R) -> Result<SampleRun> {
    ancestral(net, &Evidence::new(), m, rng)
}

/// Ancestral sampling with evidence clamped; each weight is the product of
/// the evidence variables' CPD values (densities for continuous evidence).
pub fn likelihood_weighting<R: Rng + ?Sized>(
    net: &HybridNetwork,
    evidence: &Evidence,
    m: usize,
    rng: &mut R,
) -> Result<SampleRun> {
    ancestral(net, evidence, m, rng)
}

/// Clips weights above `CLIP_FACTOR` times the median positive weight and
/// returns how many were clipped.
pub fn clip_weights(weights: &mut [f64]) -> usize {
    let mut positive: Vec<f64> = weights.iter().copied().filter(|w| *w > 0.0).collect();
    if positive.is_empty() {
        return 0;
    }
    let mid = positive.len() / 2;
    let (_, median, _) = positive.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let cap = *median * CLIP_FACTOR;
    let mut clipped = 0;
    for w in weights.iter_mut() {
        if *w > cap {
            *w = cap;
            clipped += 1;
        }
    }
    clipped
}

#[derive(Clone, Debug)]
pub struct Reweighted {
    pub samples: WeightedSampleSet,
    pub clipped: usize,
}

/// Multiplies each weight by `target / proposal` at its sample, then clips.
pub fn importance_reweight(
    samples: &WeightedSampleSet,
    target: impl Fn(&[Value]) -> f64,
    proposal: impl Fn(&[Value]) -> f64,
) -> Result<Reweighted> {
    let mut out = samples.clone();
    for i in 0..samples.len() {
        let row = samples.row(i);
        let q = proposal(row);
        if !(q > 0.0) {
            return Err(Error::Contract(format!("proposal density is {q} at sample {i}: {row:?}")));
        }
        out.weights[i] *= target(row) / q;
    }
    let clipped = clip_weights(&mut out.weights);
    Ok(Reweighted { samples: out, clipped })
}

/// Self-normalized estimate of `E[f]`.
pub fn weighted_expectation(samples: &WeightedSampleSet, f: impl Fn(&[Value]) -> f64) -> Result<f64> {
    let total = samples.total_weight();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let values: Vec<f64> = (0..samples.len()).map(|i| f(samples.row(i))).collect();
    let shift = values[0];
    let acc: f64 = values.iter().zip(&samples.weights).map(|(v, w)| (v - shift) * w).sum();
    Ok(shift + acc / total)
}

/// Weighted single-variable distribution over `bins` states or equal-width bins.
pub fn weighted_histogram(samples: &WeightedSampleSet, var: usize, bins: usize, range: Option<(f64, f64)>) -> Result<Vec<f64>> {
    let pos = samples
        .position(var)
        .ok_or_else(|| Error::Contract(format!("variable {var} is not in the sample scope")))?;
    let total = samples.total_weight();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight);
    }
    let mut h = vec![0.0; bins];
    for i in 0..samples.len() {
        let b = match (samples.row(i)[pos], range) {
            (Value::Discrete(s), _) => s,
            (Value::Continuous(x), Some((lo, hi))) => bin_index(x, lo, hi, bins),
            (Value::Continuous(_), None) => return Err(Error::Contract("continuous histogram needs a range".into())),
        };
        if b >= bins {
            return Err(Error::Contract(format!("state {b} outside {bins} bins")));
        }
        h[b] += samples.weights[i] / total;
    }
    Ok(h)
}

/// Equal-width bin of `x` over `[lo, hi]`, clamped to the boundary bins.
pub fn bin_index(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((x - lo) / (hi - lo) * bins as f64).floor();
    if t < 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}
