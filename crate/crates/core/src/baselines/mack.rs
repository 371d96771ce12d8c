//! Mack's distribution-free chain-ladder model.
//!
//! Assumes `E[F_ik | S] = f_k` and `Var[F_ik | S] = σ_k² / (w_ik S_ik^α)`
//! for individual development ratios `F_ik = S_{i,k+1} / S_ik`.

use crate::error::{Error, Result};

use super::chain_ladder::{complete, DevelopmentFactors, RunOff};

#[derive(Debug, Clone, PartialEq)]
pub struct MackConfig {
    /// Variance exponent α, one of 0, 1, 2.
    pub alpha: u8,
    /// Optional weights `w_ik ∈ [0, 1]` over the observed prefix of each row;
    /// `None` means all ones.
    pub weights: Option<Vec<Vec<f64>>>,
}

impl Default for MackConfig {
    fn default() -> Self {
        Self {
            alpha: 1,
            weights: None,
        }
    }
}

impl MackConfig {
    fn validate(&self, data: &RunOff) -> Result<()> {
        if self.alpha > 2 {
            return Err(Error::invalid(format!(
                "Mack exponent must be 0, 1 or 2, got {}",
                self.alpha
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != data.origins() || (0..data.origins()).any(|i| w[i].len() != data.observed_len(i)) {
                return Err(Error::invalid("Mack weights must match the observed cells"));
            }
            if w.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid("Mack weights must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    fn weight(&self, i: usize, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i][k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MackResult {
    pub factors: DevelopmentFactors,
    pub completed: Vec<Vec<f64>>,
    /// `σ̂_k²` per development step.
    pub sigma2: Vec<f64>,
    /// Standard error of each origin's reserve.
    pub se: Vec<f64>,
    pub total_se: f64,
}

impl MackResult {
    pub fn ultimate(&self, i: usize) -> f64 {
        *self.completed[i].last().expect("rows are nonempty")
    }
}

pub fn mack(data: &RunOff, cfg: &MackConfig) -> Result<MackResult> {
    cfg.validate(data)?;
    if data.origins() < 3 {
        return Err(Error::invalid(format!(
            "Mack variance estimation needs at least 3 origins, got {}",
            data.origins()
        )));
    }
    let alpha = i32::from(cfg.alpha);
    let steps = data.dev_periods() - 1;

    // volume ∑ w S^α and factor per step over origins with S_ik > 0
    let mut factors = Vec::with_capacity(steps);
    let mut volume = Vec::with_capacity(steps);
    for k in 0..steps {
        let (mut num, mut den) = (0.0, 0.0);
        for i in data.step_rows(k) {
            let s = data.row(i)[k];
            if s <= 0.0 {
                continue;
            }
            let v = cfg.weight(i, k) * s.powi(alpha);
            num += v * data.row(i)[k + 1] / s;
            den += v;
        }
        if !(den > 0.0) {
            return Err(Error::numerical(format!(
                "development factor {} has a zero denominator",
                k + 1
            )));
        }
        factors.push(num / den);
        volume.push(den);
    }
    let factors = DevelopmentFactors(factors);

    let mut sigma2 = vec![f64::NAN; steps];
    let mut missing = Vec::new();
    for k in 0..steps {
        let rows: Vec<usize> = data.step_rows(k).filter(|&i| data.row(i)[k] > 0.0).collect();
        if rows.len() >= 2 {
            let ss: f64 = rows
                .iter()
                .map(|&i| {
                    let s = data.row(i)[k];
                    let ratio = data.row(i)[k + 1] / s;
                    cfg.weight(i, k) * s.powi(alpha) * (ratio - factors.0[k]).powi(2)
                })
                .sum();
            sigma2[k] = ss / (rows.len() - 1) as f64;
        } else if k >= 2 && sigma2[k - 1].is_finite() && sigma2[k - 2].is_finite() {
            let (a, b) = (sigma2[k - 2], sigma2[k - 1]);
            let ratio = if a > 0.0 { b * b / a } else { f64::INFINITY };
            sigma2[k] = ratio.min(a.min(b));
        } else {
            missing.push(k + 1);
        }
    }
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "too few origins to estimate the variance of development steps {missing:?}"
        )));
    }

    let completed = complete(data, &factors);
    let var_f: Vec<f64> = sigma2.iter().zip(&volume).map(|(s, v)| s / v).collect();
    // tail[k] = Π_{l > k} f_l
    let mut tail = vec![1.0; steps];
    for k in (0..steps.saturating_sub(1)).rev() {
        tail[k] = tail[k + 1] * factors.0[k + 1];
    }

    let m = data.origins();
    let mut se = Vec::with_capacity(m);
    let mut total_process = 0.0;
    for (i, row) in completed.iter().enumerate() {
        let first = data.observed_len(i) - 1;
        let (mut process, mut param) = (0.0, 0.0);
        for k in first..steps {
            let s = row[k];
            let f = factors.0[k];
            process = f * f * process + sigma2[k] * s.powi(2 - alpha);
            param = f * f * param + s * s * var_f[k];
        }
        total_process += process;
        se.push((process + param).sqrt());
    }
    // estimation error of the total: the same δf_k moves every open origin
    let mut total_param = 0.0;
    for k in 0..steps {
        let exposure: f64 = (0..m)
            .filter(|&i| data.observed_len(i) - 1 <= k)
            .map(|i| completed[i][k] * tail[k])
            .sum();
        total_param += var_f[k] * exposure * exposure;
    }

    Ok(MackResult {
        factors,
        completed,
        sigma2,
        se,
        total_se: (total_process + total_param).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::chain_ladder::chain_ladder;

    fn staircase(rows: &[&[f64]]) -> RunOff {
        let d = rows[0].len();
        RunOff::from_cumulative(d, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn deterministic_triangle_has_zero_error() {
        let pattern = [10.0, 16.0, 20.0];
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let len = (5 - i).min(3);
                pattern[..len].iter().map(|v| v * (i + 2) as f64).collect()
            })
            .collect();
        let data = RunOff::from_cumulative(3, rows).unwrap();
        let res = mack(&data, &MackConfig::default()).unwrap();
        assert!(res.sigma2.iter().all(|&s| s.abs() < 1e-20), "{:?}", res.sigma2);
        assert!(res.se.iter().all(|&s| s.abs() < 1e-9));
        assert!(res.total_se.abs() < 1e-9);
    }

    #[test]
    fn sigma_matches_direct_weighted_residuals() {
        // 4 origins × 3 periods
        let data = staircase(&[&[100.0, 150.0, 170.0], &[80.0, 130.0, 140.0], &[120.0, 170.0], &[90.0]]);
        let res = mack(&data, &MackConfig::default()).unwrap();
        let f1 = (150.0 + 130.0 + 170.0) / (100.0 + 80.0 + 120.0);
        let f2: f64 = (170.0 + 140.0) / (150.0 + 130.0);
        let s1 = (100.0 * (1.5f64 - f1).powi(2)
            + 80.0 * (130.0f64 / 80.0 - f1).powi(2)
            + 120.0 * (170.0f64 / 120.0 - f1).powi(2))
            / 2.0;
        let s2 = 150.0 * (170.0f64 / 150.0 - f2).powi(2) + 130.0 * (140.0f64 / 130.0 - f2).powi(2);
        assert!((res.factors.0[0] - f1).abs() < 1e-14);
        assert!((res.sigma2[0] - s1).abs() < 1e-12 * s1);
        assert!((res.sigma2[1] - s2).abs() < 1e-12 * s2);
    }

    /// Mack's closed form for α = 1 (unit weights), evaluated independently.
    fn closed_form_se(data: &RunOff, res: &MackResult) -> (Vec<f64>, f64) {
        let m = data.origins();
        let n = data.dev_periods();
        let col_sum = |k: usize| -> f64 { data.step_rows(k).map(|i| data.row(i)[k]).sum() };
        let mut se = Vec::new();
        for i in 0..m {
            let first = data.observed_len(i) - 1;
            let ult = res.ultimate(i);
            let s: f64 = (first..n - 1)
                .map(|k| {
                    let f = res.factors.0[k];
                    res.sigma2[k] / (f * f) * (1.0 / res.completed[i][k] + 1.0 / col_sum(k))
                })
                .sum();
            se.push((ult * ult * s).sqrt());
        }
        let mut total = se.iter().map(|s| s * s).sum::<f64>();
        for i in 0..m {
            for j in i + 1..m {
                let first = (data.observed_len(i) - 1).max(data.observed_len(j) - 1);
                let s: f64 = (first..n - 1)
                    .map(|k| {
                        let f = res.factors.0[k];
                        2.0 * res.sigma2[k] / (f * f) / col_sum(k)
                    })
                    .sum();
                total += res.ultimate(i) * res.ultimate(j) * s;
            }
        }
        (se, total.sqrt())
    }

    fn raa() -> RunOff {
        staircase(&[
            &[
                5012.0, 8269.0, 10907.0, 11805.0, 13539.0, 16181.0, 18009.0, 18608.0, 18662.0, 18834.0,
            ],
            &[
                106.0, 4285.0, 5396.0, 10666.0, 13782.0, 15599.0, 15496.0, 16169.0, 16704.0,
            ],
            &[3410.0, 8992.0, 13873.0, 16141.0, 18735.0, 22214.0, 22863.0, 23466.0],
            &[5655.0, 11555.0, 15766.0, 21266.0, 23425.0, 26083.0, 27067.0],
            &[1092.0, 9565.0, 15836.0, 22169.0, 25955.0, 26180.0],
            &[1513.0, 6445.0, 11702.0, 12935.0, 15852.0],
            &[557.0, 4020.0, 10946.0, 12314.0],
            &[1351.0, 6947.0, 13112.0],
            &[3133.0, 5395.0],
            &[2063.0],
        ])
    }

    #[test]
    fn recursive_errors_match_closed_form_on_raa() {
        let data = raa();
        let res = mack(&data, &MackConfig::default()).unwrap();
        let (se, total) = closed_form_se(&data, &res);
        for (a, b) in res.se.iter().zip(&se) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
        }
        assert!((res.total_se - total).abs() < 1e-9 * total);
    }

    #[test]
    fn raa_factors_and_reserve() {
        let data = raa();
        let res = mack(&data, &MackConfig::default()).unwrap();
        let published = [2.999, 1.624, 1.271, 1.172, 1.113, 1.042, 1.033, 1.017, 1.009];
        for (f, p) in res.factors.0.iter().zip(published) {
            assert!((f - p).abs() < 5e-4, "{f} vs {p}");
        }
        let cl = chain_ladder(&data).unwrap();
        assert!((cl.total_reserve(&data) - 52_135.0).abs() < 1.0);
        // last step has one origin: Mack's extrapolation
        let s = &res.sigma2;
        let expected = (s[7] * s[7] / s[6]).min(s[6].min(s[7]));
        assert_eq!(s[8], expected);
    }

    #[test]
    fn point_forecasts_equal_chain_ladder() {
        let data = raa();
        let res = mack(&data, &MackConfig::default()).unwrap();
        let cl = chain_ladder(&data).unwrap();
        assert_eq!(res.completed, cl.completed);
    }

    #[test]
    fn exponent_and_weight_validation() {
        let data = raa();
        let cfg = MackConfig {
            alpha: 3,
            weights: None,
        };
        assert!(mack(&data, &cfg).is_err());
        let cfg = MackConfig {
            alpha: 1,
            weights: Some(vec![vec![1.0]]),
        };
        assert!(mack(&data, &cfg).is_err());
        for alpha in 0..=2 {
            let r = mack(&data, &MackConfig { alpha, weights: None }).unwrap();
            assert!(r.total_se > 0.0);
        }
    }

    #[test]
    fn too_few_origins() {
        let data = staircase(&[&[1.0, 2.0], &[1.0]]);
        assert!(mack(&data, &MackConfig::default()).is_err());
        // two early steps without variance support cannot be extrapolated
        let data = staircase(&[&[1.0, 2.0, 3.0], &[1.0, 2.5], &[2.0]]);
        let err = mack(&data, &MackConfig::default()).unwrap_err();
        assert!(err.to_string().contains("[2]"), "{err}");
    }
}
