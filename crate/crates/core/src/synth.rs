//! Synthetic triangles drawn from the negative-binomial model.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::Result;
use crate::nbmodel::{CellParams, Coefficients};
use crate::triangle::{ReportingTriangle, YearMonth};

/// One `NB(p, r)` variate via the gamma–Poisson mixture
/// `λ ~ Gamma(r, (1 − p)/p)`, `n ~ Poisson(λ)`.
pub fn nb_sample<R: Rng + ?Sized>(cell: CellParams, rng: &mut R) -> u64 {
    let scale = (1.0 - cell.p()) / cell.p();
    if scale <= 0.0 {
        return 0;
    }
    let gamma = Gamma::new(cell.r(), scale).expect("shape and scale are positive");
    let lambda: f64 = gamma.sample(rng);
    poisson(lambda, rng)
}

pub(crate) fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(p) => p.sample(rng) as u64,
        // beyond the sampler's range the normal limit is exact to many digits
        Err(_) => {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            (lambda + z * lambda.sqrt()).round().max(0.0) as u64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub max_delay: usize,
    pub truth: Coefficients,
    pub seed: u64,
    pub origin: YearMonth,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 72,
            max_delay: 12,
            truth: Coefficients::REFERENCE,
            seed: 0,
            origin: YearMonth::new(2018, 1).expect("valid month"),
        }
    }
}

impl SynthConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// A complete synthetic grid together with the configuration that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub config: SynthConfig,
    /// Every cell observed (present time = rows + D).
    pub triangle: ReportingTriangle,
}

impl Synthetic {
    /// The triangle as seen at the conventional present `rows + 1`, with the
    /// later cells held out as truth.
    pub fn at_present(&self, present: usize) -> Result<crate::triangle::MaskedTriangle> {
        self.triangle.mask_to_present(present)
    }
}

/// Draws every cell independently at the configured coefficients.
pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut counts = Vec::with_capacity(cfg.rows);
    for t in 1..=cfg.rows {
        let mut row = Vec::with_capacity(cfg.max_delay);
        for d in 1..=cfg.max_delay {
            let p = cfg.truth.link_p(t, d, cfg.max_delay);
            let r = cfg.truth.link_r(t, d, cfg.max_delay)?;
            // p can round to exactly 1 for very large predictors
            let n = if p >= 1.0 {
                0
            } else {
                nb_sample(CellParams::new(p, r)?, &mut rng)
            };
            row.push(n);
        }
        counts.push(row);
    }
    let triangle = ReportingTriangle::fully_observed(cfg.origin, cfg.max_delay, counts)?;
    Ok(Synthetic {
        config: cfg.clone(),
        triangle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbmodel::{log_likelihood, nb_logpmf, ModelParams};

    fn moments(xs: &[u64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<u64>() as f64 / n;
        let v = xs.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn near_one_probability_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = CellParams::new(1.0 - 1e-15, 3.0).unwrap();
        assert!((0..1000).all(|_| nb_sample(cell, &mut rng) == 0));
    }

    #[test]
    fn geometric_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cell = CellParams::new(0.5, 1.0).unwrap();
        let n = 100_000;
        let zeros = (0..n).filter(|_| nb_sample(cell, &mut rng) == 0).count() as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((zeros / n as f64 - 0.5).abs() < 4.0 * se);
    }

    #[test]
    fn moments_match_within_four_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = Coefficients::REFERENCE.cell(1, 12, 12).unwrap();
        let n = 100_000;
        let xs: Vec<u64> = (0..n).map(|_| nb_sample(cell, &mut rng)).collect();
        let (m, v) = moments(&xs);
        assert!((m - cell.mean()).abs() < 4.0 * (cell.variance() / n as f64).sqrt());
        // se of the sample variance ≈ sqrt((μ4 − σ⁴)/n); bound μ4 from the pmf
        let mu4: f64 = (0..400u64)
            .map(|k| (k as f64 - cell.mean()).powi(4) * nb_logpmf(k, cell).exp())
            .sum();
        let se_v = ((mu4 - cell.variance().powi(2)) / n as f64).sqrt();
        assert!((v - cell.variance()).abs() < 4.0 * se_v, "{v} vs {}", cell.variance());
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let a = generate(&SynthConfig::with_seed(11)).unwrap();
        let b = generate(&SynthConfig::with_seed(11)).unwrap();
        let c = generate(&SynthConfig::with_seed(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.triangle, c.triangle);
        assert_eq!(a.triangle.rows(), 72);
        assert_eq!(a.triangle.max_delay(), 12);
        assert_eq!(a.triangle.observed_cell_count(), 72 * 12);
    }

    #[test]
    fn huge_intercept_gives_empty_triangle() {
        let cfg = SynthConfig {
            truth: Coefficients {
                alpha: [60.0, 0.0, 0.0],
                beta: [0.0; 3],
            },
            ..SynthConfig::with_seed(5)
        };
        let s = generate(&cfg).unwrap();
        assert!(s.triangle.counts().iter().flatten().all(|&n| n == 0));
    }

    #[test]
    fn cell_means_over_replicates() {
        let cfg = SynthConfig {
            rows: 3,
            max_delay: 4,
            ..SynthConfig::default()
        };
        let reps = 10_000;
        let mut sums = vec![vec![0.0; 4]; 3];
        for s in 0..reps {
            let tri = generate(&SynthConfig { seed: s, ..cfg.clone() }).unwrap().triangle;
            for t in 1..=3 {
                for d in 1..=4 {
                    sums[t - 1][d - 1] += tri.count(t, d) as f64;
                }
            }
        }
        for t in 1..=3 {
            for d in 1..=4 {
                let cell = cfg.truth.cell(t, d, 4).unwrap();
                let se = (cell.variance() / reps as f64).sqrt();
                let m = sums[t - 1][d - 1] / reps as f64;
                assert!(
                    (m - cell.mean()).abs() < 4.0 * se,
                    "cell ({t},{d}): {m} vs {}",
                    cell.mean()
                );
            }
        }
    }

    #[test]
    fn likelihood_peaks_near_truth() {
        let s = generate(&SynthConfig::with_seed(21)).unwrap();
        let truth = ModelParams::new(s.config.truth, [1.0; 3], [1.0; 3]);
        let at_truth = log_likelihood(&truth, &s.triangle);
        for j in 0..6 {
            for delta in [-0.5, 0.5] {
                let mut v = s.config.truth.to_array();
                v[j] += delta;
                let q = ModelParams::new(Coefficients::from_array(v), [1.0; 3], [1.0; 3]);
                assert!(
                    log_likelihood(&q, &s.triangle) < at_truth,
                    "coordinate {j} delta {delta}"
                );
            }
        }
    }
}
