use crate::error::{Error, Result};
use crate::triangle::ReportingTriangle;

/// Cumulative run-off data: origin rows with a left-aligned observed prefix
/// of development periods.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOff {
    dev_periods: usize,
    // cumulative[i] holds the observed prefix of row i
    cumulative: Vec<Vec<f64>>,
}

impl RunOff {
    /// Builds from cumulative rows; row `i` holds its observed prefix.
    pub fn from_cumulative(dev_periods: usize, cumulative: Vec<Vec<f64>>) -> Result<Self> {
        if dev_periods == 0 || cumulative.is_empty() {
            return Err(Error::invalid(
                "run-off needs at least one row and one development period",
            ));
        }
        for (i, row) in cumulative.iter().enumerate() {
            if row.is_empty() || row.len() > dev_periods {
                return Err(Error::invalid(format!(
                    "origin {} has {} observed periods, expected 1..={dev_periods}",
                    i + 1,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("origin {} has a non-finite value", i + 1)));
            }
        }
        Ok(Self {
            dev_periods,
            cumulative,
        })
    }

    pub fn from_triangle(tri: &ReportingTriangle) -> Result<Self> {
        let cum = tri
            .cumulate()
            .into_iter()
            .map(|row| row.into_iter().map(|v| v as f64).collect())
            .collect();
        Self::from_cumulative(tri.max_delay(), cum)
    }

    pub fn dev_periods(&self) -> usize {
        self.dev_periods
    }

    pub fn origins(&self) -> usize {
        self.cumulative.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cumulative[i]
    }

    /// Number of observed development periods of origin `i` (0-based).
    pub fn observed_len(&self, i: usize) -> usize {
        self.cumulative[i].len()
    }

    pub fn latest(&self, i: usize) -> f64 {
        *self.cumulative[i].last().expect("rows are nonempty")
    }

    /// Observed incremental values of origin `i`.
    pub fn incrementals(&self, i: usize) -> Vec<f64> {
        let row = &self.cumulative[i];
        let mut prev = 0.0;
        row.iter()
            .map(|&c| {
                let inc = c - prev;
                prev = c;
                inc
            })
            .collect()
    }

    /// Origins contributing to step `k → k + 1` (0-based `k`).
    pub fn step_rows(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.origins()).filter(move |&i| self.observed_len(i) > k + 1)
    }
}

/// Chain-ladder development factors `f_k`, `k = 1..D−1` (stored 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct DevelopmentFactors(pub Vec<f64>);

/// Chain-ladder completion of a run-off.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLadder {
    pub factors: DevelopmentFactors,
    /// Full cumulative grid: observed values kept, the rest projected.
    pub completed: Vec<Vec<f64>>,
}

impl ChainLadder {
    pub fn ultimate(&self, i: usize) -> f64 {
        *self.completed[i].last().expect("rows are nonempty")
    }

    pub fn reserves(&self, data: &RunOff) -> Vec<f64> {
        (0..data.origins()).map(|i| self.ultimate(i) - data.latest(i)).collect()
    }

    pub fn total_reserve(&self, data: &RunOff) -> f64 {
        self.reserves(data).iter().sum()
    }
}

/// Volume-weighted factors `f_k = Σ S_{i,k+1} / Σ S_{i,k}` over the origins
/// observed at both periods.
pub fn development_factors(data: &RunOff) -> Result<DevelopmentFactors> {
    let mut f = Vec::with_capacity(data.dev_periods() - 1);
    for k in 0..data.dev_periods() - 1 {
        let (mut num, mut den, mut rows) = (0.0, 0.0, 0);
        for i in data.step_rows(k) {
            num += data.row(i)[k + 1];
            den += data.row(i)[k];
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::invalid(format!(
                "no origin observed at both development periods {} and {}",
                k + 1,
                k + 2
            )));
        }
        if !(den > 0.0) {
            return Err(Error::numerical(format!(
                "development factor {} has a zero denominator",
                k + 1
            )));
        }
        f.push(num / den);
    }
    Ok(DevelopmentFactors(f))
}

/// Projects every row to the last development period with the given factors.
pub fn complete(data: &RunOff, factors: &DevelopmentFactors) -> Vec<Vec<f64>> {
    (0..data.origins())
        .map(|i| {
            let mut row = data.row(i).to_vec();
            while row.len() < data.dev_periods() {
                let k = row.len() - 1;
                row.push(row[k] * factors.0[k]);
            }
            row
        })
        .collect()
}

pub fn chain_ladder(data: &RunOff) -> Result<ChainLadder> {
    let factors = development_factors(data)?;
    let completed = complete(data, &factors);
    Ok(ChainLadder { factors, completed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_hand_case() {
        let data = RunOff::from_cumulative(2, vec![vec![10.0, 15.0], vec![20.0]]).unwrap();
        let cl = chain_ladder(&data).unwrap();
        assert_eq!(cl.factors.0, vec![1.5]);
        assert_eq!(cl.completed[1][1], 30.0);
        assert_eq!(cl.total_reserve(&data), 10.0);
    }

    #[test]
    fn complete_rows_have_no_reserve() {
        let data = RunOff::from_cumulative(3, vec![vec![1.0, 2.0, 4.0], vec![3.0, 3.0, 5.0]]).unwrap();
        let cl = chain_ladder(&data).unwrap();
        assert_eq!(cl.total_reserve(&data), 0.0);
        assert_eq!(cl.completed, vec![vec![1.0, 2.0, 4.0], vec![3.0, 3.0, 5.0]]);
    }

    #[test]
    fn proportional_rows_reproduce_ratios() {
        let pattern = [4.0, 6.0, 9.0, 9.9];
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| pattern[..4 - i].iter().map(|v| v * (i + 1) as f64).collect())
            .collect();
        let data = RunOff::from_cumulative(4, rows).unwrap();
        let cl = chain_ladder(&data).unwrap();
        for k in 0..3 {
            assert!((cl.factors.0[k] - pattern[k + 1] / pattern[k]).abs() < 1e-14);
        }
        assert!((cl.ultimate(3) - 4.0 * 9.9).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_names_the_step() {
        let data = RunOff::from_cumulative(3, vec![vec![0.0, 0.0, 1.0], vec![0.0, 2.0], vec![1.0]]).unwrap();
        let err = chain_ladder(&data).unwrap_err();
        assert!(err.to_string().contains("development factor 1"), "{err}");
    }

    #[test]
    fn step_without_support_is_rejected() {
        let data = RunOff::from_cumulative(3, vec![vec![1.0, 2.0], vec![1.0]]).unwrap();
        assert!(chain_ladder(&data).is_err());
    }
}
