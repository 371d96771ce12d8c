//! Convergence diagnostics: Gelman–Rubin PSRF, the Brooks–Gelman
//! multivariate PSRF, and effective sample size.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats::{mean, variance};

fn check_shape<T>(chains: &[&[T]], min_draws: usize) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::invalid(format!(
            "PSRF needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("chains have unequal lengths"));
    }
    if n < min_draws {
        return Err(Error::invalid(format!(
            "PSRF needs at least {min_draws} draws per chain, got {n}"
        )));
    }
    Ok(n)
}

/// Univariate potential scale reduction factor
/// `sqrt(((n − 1)/n · W + B/n) / W)`.
pub fn psrf_chains(chains: &[&[f64]]) -> Result<f64> {
    let n = check_shape(chains, 10)? as f64;
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    if !(w > 0.0) {
        return Err(Error::numerical("within-chain variance is zero (degenerate chains)"));
    }
    let b_over_n = variance(&chains.iter().map(|c| mean(c)).collect::<Vec<_>>());
    Ok((((n - 1.0) / n * w + b_over_n) / w).sqrt())
}

/// Brooks–Gelman multivariate PSRF
/// `sqrt((n − 1)/n + (m + 1)/m · λ₁)` with `λ₁` the largest eigenvalue of
/// `W⁻¹ B/n`.
pub fn mpsrf_chains(chains: &[&[Vec<f64>]]) -> Result<f64> {
    let n = check_shape(chains, 10)?;
    let m = chains.len();
    let p = chains[0][0].len();
    let mut w = DMatrix::<f64>::zeros(p, p);
    let mut means = Vec::with_capacity(m);
    for chain in chains {
        let mu = column_means(chain, p);
        let mut s = DMatrix::<f64>::zeros(p, p);
        for x in chain.iter() {
            let dx = nalgebra::DVector::from_iterator(p, x.iter().zip(&mu).map(|(a, b)| a - b));
            s += &dx * dx.transpose();
        }
        w += s / (n as f64 - 1.0);
        means.push(mu);
    }
    w /= m as f64;
    let grand = column_means(&means, p);
    let mut b_over_n = DMatrix::<f64>::zeros(p, p);
    for mu in &means {
        let dx = nalgebra::DVector::from_iterator(p, mu.iter().zip(&grand).map(|(a, b)| a - b));
        b_over_n += &dx * dx.transpose();
    }
    b_over_n /= m as f64 - 1.0;

    // W = L Lᵀ, so W⁻¹B shares its spectrum with the symmetric L⁻¹ B L⁻ᵀ
    let chol = w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("within-chain covariance is singular; run longer chains or reparametrise"))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("within-chain covariance is singular"))?;
    let sym = &linv * b_over_n * linv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let lambda = sym.symmetric_eigenvalues().max();
    let (nf, mf) = (n as f64, m as f64);
    Ok(((nf - 1.0) / nf + (mf + 1.0) / mf * lambda.max(0.0)).sqrt())
}

fn column_means(rows: &[Vec<f64>], p: usize) -> Vec<f64> {
    let mut mu = vec![0.0; p];
    for x in rows {
        for (m, v) in mu.iter_mut().zip(x) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= rows.len() as f64);
    mu
}

/// Multi-chain effective sample size with Geyer's initial positive sequence.
///
/// Autocorrelations are combined across chains as
/// `ρ_t = 1 − (W − mean autocovariance_t) / var⁺`. Returns the total number
/// of draws when the chains are constant.
pub fn ess_chains(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let autocov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| {
                let s: f64 = c[..n - lag]
                    .iter()
                    .zip(&c[lag..])
                    .map(|(a, b)| (a - mu) * (b - mu))
                    .sum();
                s / n as f64
            })
            .sum::<f64>()
            / m as f64
    };
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    let b_over_n = if m > 1 { variance(&means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;

    // sum of consecutive pairs Γ_k = ρ_{2k} + ρ_{2k+1}, truncated at the first
    // negative pair and forced monotone
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let r0 = if lag == 0 { 1.0 } else { rho(lag) };
        let pair = r0 + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / (total.log10().max(1.0)));
    total / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn identical_chains_hit_lower_bound() {
        let a = normals(1, 500);
        let r = psrf_chains(&[&a, &a]).unwrap();
        assert_eq!(r, (499.0f64 / 500.0).sqrt());
    }

    #[test]
    fn independent_chains_near_one() {
        let (a, b, c) = (normals(1, 10_000), normals(2, 10_000), normals(3, 10_000));
        let r = psrf_chains(&[&a, &b, &c]).unwrap();
        assert!(r > 0.99 && r < 1.05, "{r}");
    }

    #[test]
    fn offset_chain_inflates() {
        let a = normals(1, 1000);
        let b: Vec<f64> = normals(2, 1000).iter().map(|x| x + 10.0).collect();
        assert!(psrf_chains(&[&a, &b]).unwrap() > 1.2);
    }

    #[test]
    fn preconditions() {
        let a = normals(1, 100);
        assert!(psrf_chains(&[&a]).is_err());
        assert!(psrf_chains(&[&a[..5], &a[..5]]).is_err());
        let flat = vec![1.0; 50];
        assert!(psrf_chains(&[&flat, &flat]).unwrap_err().is_numerical());
    }

    fn as_rows(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn multivariate_identical_chains() {
        let a: Vec<Vec<f64>> = normals(4, 400).chunks(2).map(|c| c.to_vec()).collect();
        let r = mpsrf_chains(&[&a, &a]).unwrap();
        assert!((r - (199.0f64 / 200.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_consistency_with_univariate() {
        let chains: Vec<Vec<f64>> = (0..3)
            .map(|i| normals(10 + i, 300).iter().map(|x| x + 0.2 * i as f64).collect())
            .collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let r = psrf_chains(&refs).unwrap();
        let rows: Vec<Vec<Vec<f64>>> = chains.iter().map(|c| as_rows(c)).collect();
        let rrefs: Vec<&[Vec<f64>]> = rows.iter().map(|c| c.as_slice()).collect();
        let mr = mpsrf_chains(&rrefs).unwrap();
        let (n, m) = (300.0f64, 3.0f64);
        let lower = (n - 1.0) / n;
        let lhs = (mr * mr - lower) * m / (m + 1.0);
        assert!((lhs - (r * r - lower)).abs() < 1e-12);
    }

    #[test]
    fn singular_within_covariance_is_reported() {
        // second coordinate is an exact copy of the first
        let a: Vec<Vec<f64>> = normals(5, 100).iter().map(|&x| vec![x, x]).collect();
        let b: Vec<Vec<f64>> = normals(6, 100).iter().map(|&x| vec![x, x]).collect();
        let err = mpsrf_chains(&[&a, &b]);
        assert!(err.is_err());
    }

    #[test]
    fn ess_of_white_noise_and_ar1() {
        let a = normals(7, 5000);
        let ess = ess_chains(&[&a]);
        assert!(ess > 4000.0 && ess < 6500.0, "{ess}");
        // AR(1) with φ = 0.9 has τ = (1 + φ)/(1 − φ) = 19
        let z = normals(8, 50_000);
        let mut x = vec![0.0; z.len()];
        for i in 1..z.len() {
            x[i] = 0.9 * x[i - 1] + z[i];
        }
        let ess = ess_chains(&[&x]);
        let expected = 50_000.0 / 19.0;
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }
}
