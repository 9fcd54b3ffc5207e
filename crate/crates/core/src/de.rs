//! Bounded differential evolution (rand/1/bin), maximizing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeParams {
    pub population: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    pub generations: usize,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            population: 30,
            f: 0.8,
            cr: 0.9,
            generations: 150,
        }
    }
}

impl DeParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::domain("differential evolution needs a population of at least 4"));
        }
        if !(self.f > 0.0 && self.f <= 2.0) || !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::domain("differential weight must be in (0, 2] and crossover in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeOutcome {
    pub best: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximizes `objective` over the box `[lower, upper]`.
///
/// `seed_point`, if given, replaces the first member of the initial population.
/// NaN objective values are treated as `-inf`. Ties in selection favor the trial.
pub fn maximize<F>(mut objective: F, lower: &[f64], upper: &[f64], params: &DeParams, seed: u64, seed_point: Option<&[f64]>) -> Result<DeOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    params.validate()?;
    let dim = lower.len();
    if dim == 0 || upper.len() != dim || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::domain("invalid search box"));
    }
    let mut eval = |x: &[f64]| {
        let v = objective(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let np = params.population;
    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| (0..dim).map(|k| lower[k] + rng.random::<f64>() * (upper[k] - lower[k])).collect())
        .collect();
    if let Some(p) = seed_point {
        if p.len() != dim {
            return Err(Error::domain("seed point dimension mismatch"));
        }
        pop[0] = (0..dim).map(|k| p[k].clamp(lower[k], upper[k])).collect();
    }
    let mut fit: Vec<f64> = pop.iter().map(|x| eval(x)).collect();
    let mut evaluations = np;
    let mut trial = vec![0.0; dim];
    for _ in 0..params.generations {
        let mut next = pop.clone();
        let mut next_fit = fit.clone();
        for i in 0..np {
            let (r1, r2, r3) = distinct3(&mut rng, np, i);
            let jrand = rng.random_range(0..dim);
            for k in 0..dim {
                let cross = k == jrand || rng.random::<f64>() < params.cr;
                trial[k] = if cross {
                    (pop[r1][k] + params.f * (pop[r2][k] - pop[r3][k])).clamp(lower[k], upper[k])
                } else {
                    pop[i][k]
                };
            }
            let v = eval(&trial);
            evaluations += 1;
            if v >= fit[i] {
                next[i].copy_from_slice(&trial);
                next_fit[i] = v;
            }
        }
        pop = next;
        fit = next_fit;
    }
    let mut best = 0;
    for i in 1..np {
        if fit[i] > fit[best] {
            best = i;
        }
    }
    Ok(DeOutcome {
        best: pop[best].clone(),
        value: fit[best],
        evaluations,
    })
}

fn distinct3(rng: &mut ChaCha8Rng, n: usize, exclude: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let r = rng.random_range(0..n);
        if !taken.contains(&r) {
            return r;
        }
    };
    let a = pick(&[exclude]);
    let b = pick(&[exclude, a]);
    let c = pick(&[exclude, a, b]);
    (a, b, c)
}
