//! Adaptive coordinate-wise random-walk Metropolis.

use rand::Rng;
use rand_distr::StandardNormal;

/// A log density that can be updated one coordinate at a time.
///
/// Implementations may cache intermediate quantities: `propose` evaluates the
/// density with one coordinate replaced and stages the result, `commit`
/// makes the staged state current. A `propose` without `commit` is discarded
/// by the next `propose`.
pub trait CoordinateTarget {
    fn dim(&self) -> usize;

    /// Resets the current state to `x` and returns its log density.
    fn set_state(&mut self, x: &[f64]) -> f64;

    fn propose(&mut self, coord: usize, value: f64) -> f64;

    fn commit(&mut self);
}

/// Wraps a plain function of the full state. Every proposal re-evaluates the
/// function, which is fine for small test targets.
pub struct FnTarget<F> {
    f: F,
    x: Vec<f64>,
    staged: Option<(usize, f64)>,
}

impl<F: Fn(&[f64]) -> f64> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self {
            f,
            x: vec![0.0; dim],
            staged: None,
        }
    }
}

impl<F: Fn(&[f64]) -> f64> CoordinateTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.x.len()
    }

    fn set_state(&mut self, x: &[f64]) -> f64 {
        self.x.copy_from_slice(x);
        self.staged = None;
        (self.f)(&self.x)
    }

    fn propose(&mut self, coord: usize, value: f64) -> f64 {
        let old = self.x[coord];
        self.x[coord] = value;
        let lp = (self.f)(&self.x);
        self.x[coord] = old;
        self.staged = Some((coord, value));
        lp
    }

    fn commit(&mut self) {
        if let Some((j, v)) = self.staged.take() {
            self.x[j] = v;
        }
    }
}

/// Sampler settings for one chain.
#[derive(Debug, Clone)]
pub struct SamplerSettings {
    pub burn_in: usize,
    pub total_iterations: usize,
    pub thin: usize,
    pub target_accept: f64,
    /// Iterations per adaptation batch.
    pub batch: usize,
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// Retained states, one per `thin` iterations after burn-in.
    pub draws: Vec<Vec<f64>>,
    /// Retained iteration numbers (1-based, counting burn-in).
    pub iterations: Vec<usize>,
    /// Per-coordinate acceptance rate after burn-in.
    pub accept_rates: Vec<f64>,
    /// Proposal scales at the end of every batch, over the whole run.
    pub step_history: Vec<Vec<f64>>,
}

/// Runs one chain from `x0`.
///
/// Each iteration sweeps all coordinates in order with a Gaussian
/// random-walk proposal. During burn-in the log proposal scale of each
/// coordinate takes a Robbins–Monro step towards `target_accept` after every
/// batch; afterwards the scales stay fixed.
pub fn run_chain<T, R>(target: &mut T, x0: &[f64], steps0: &[f64], s: &SamplerSettings, rng: &mut R) -> ChainRun
where
    T: CoordinateTarget + ?Sized,
    R: Rng + ?Sized,
{
    let dim = target.dim();
    assert_eq!(x0.len(), dim);
    assert_eq!(steps0.len(), dim);
    let mut x = x0.to_vec();
    let mut log_steps: Vec<f64> = steps0.iter().map(|s| s.ln()).collect();
    let mut lp = target.set_state(&x);

    let keep = (s.total_iterations - s.burn_in) / s.thin;
    let mut draws = Vec::with_capacity(keep);
    let mut iterations = Vec::with_capacity(keep);
    let mut step_history = Vec::new();
    let mut batch_accepts = vec![0usize; dim];
    let mut post_accepts = vec![0usize; dim];
    let mut batch_index = 0usize;

    for iter in 1..=s.total_iterations {
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            let proposal = x[j] + log_steps[j].exp() * z;
            let lp_new = target.propose(j, proposal);
            let u: f64 = rng.random();
            if lp_new.is_finite() && u.ln() < lp_new - lp {
                target.commit();
                x[j] = proposal;
                lp = lp_new;
                batch_accepts[j] += 1;
                if iter > s.burn_in {
                    post_accepts[j] += 1;
                }
            }
        }
        if iter % s.batch == 0 {
            if iter <= s.burn_in {
                batch_index += 1;
                let gain = 1.0 / (batch_index as f64).sqrt();
                for (ls, &acc) in log_steps.iter_mut().zip(&batch_accepts) {
                    let rate = acc as f64 / s.batch as f64;
                    *ls += gain * (rate - s.target_accept);
                }
            }
            batch_accepts.iter_mut().for_each(|a| *a = 0);
            step_history.push(log_steps.iter().map(|l| l.exp()).collect());
        }
        if iter > s.burn_in && (iter - s.burn_in).is_multiple_of(s.thin) {
            draws.push(x.clone());
            iterations.push(iter);
        }
    }

    let post = (s.total_iterations - s.burn_in) as f64;
    ChainRun {
        draws,
        iterations,
        accept_rates: post_accepts.iter().map(|&a| a as f64 / post).collect(),
        step_history,
    }
}
