//! The model posterior in the sampler's coordinates, with per-cell caches.
//!
//! The sampler walks a linear reparametrization of the coefficients, so the
//! density differs from the model posterior only by a constant. With
//! centered covariates `t̃ = t − t̄`, `x̃ = d/D − x̄`:
//!
//! ```text
//! z = [a0, a1, a2, g0, g1, g2, ln σα0, ln σα1, ln σα2, ln σβ0, ln σβ1, ln σβ2]
//! logit p = a0 + a1 t̃ + a2 x̃
//! log r   = logit p + g0 + g1 t̃ + g2 x̃
//! ```
//!
//! so `g` moves the log mean `log r − logit p` alone, and `a` moves `p`
//! at a fixed mean. The density includes the `+ ln σ` Jacobian of the log
//! transform.

use crate::nbmodel::{ln_normal, Coefficients, ModelParams};
use crate::special::{ln_gamma, ln_rising, softplus};
use crate::triangle::ReportingTriangle;

use super::sampler::CoordinateTarget;

#[derive(Debug, Clone)]
struct Cell {
    t: f64,
    x: f64,
    k: u64,
    kf: f64,
    ln_k_fact: f64,
}

#[derive(Debug, Clone, Default)]
struct CellCache {
    r: Vec<f64>,
    rising: Vec<f64>,
    log_p: Vec<f64>,
    log_1mp: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NbPosterior {
    t_bar: f64,
    x_bar: f64,
    cells: Vec<Cell>,
    z: [f64; 12],
    cur: CellCache,
    stage: CellCache,
    loglik: f64,
    staged: Option<Staged>,
}

#[derive(Debug, Clone, Copy)]
struct Staged {
    coord: usize,
    value: f64,
    loglik: f64,
}

impl NbPosterior {
    pub fn new(tri: &ReportingTriangle) -> Self {
        let d_max = tri.max_delay() as f64;
        let raw: Vec<(f64, f64, u64)> = tri
            .observed_cells()
            .map(|(t, d, k)| (t as f64, d as f64 / d_max, k))
            .collect();
        let n = raw.len().max(1) as f64;
        let t_bar = raw.iter().map(|c| c.0).sum::<f64>() / n;
        let x_bar = raw.iter().map(|c| c.1).sum::<f64>() / n;
        let cells: Vec<Cell> = raw
            .into_iter()
            .map(|(t, x, k)| Cell {
                t: t - t_bar,
                x: x - x_bar,
                k,
                kf: k as f64,
                ln_k_fact: ln_gamma(k as f64 + 1.0),
            })
            .collect();
        let n = cells.len();
        let cache = CellCache {
            r: vec![0.0; n],
            rising: vec![0.0; n],
            log_p: vec![0.0; n],
            log_1mp: vec![0.0; n],
        };
        Self {
            t_bar,
            x_bar,
            cells,
            z: [0.0; 12],
            cur: cache.clone(),
            stage: cache,
            loglik: 0.0,
            staged: None,
        }
    }

    /// Maps model parameters onto sampler coordinates.
    pub fn to_unconstrained(&self, p: &ModelParams) -> [f64; 12] {
        let (a, b) = (p.coef.alpha, p.coef.beta);
        let a0 = a[0] + a[1] * self.t_bar + a[2] * self.x_bar;
        let b0 = b[0] + b[1] * self.t_bar + b[2] * self.x_bar;
        let mut z = [0.0; 12];
        z[..3].copy_from_slice(&[a0, a[1], a[2]]);
        z[3..6].copy_from_slice(&[b0 - a0, b[1] - a[1], b[2] - a[2]]);
        for (s, v) in z[6..].iter_mut().zip(p.sigma_alpha.iter().chain(&p.sigma_beta)) {
            *s = v.ln();
        }
        z
    }

    pub fn to_params(&self, z: &[f64]) -> ModelParams {
        let (a, b) = Self::centered(z);
        let coef = Coefficients {
            alpha: [a[0] - a[1] * self.t_bar - a[2] * self.x_bar, a[1], a[2]],
            beta: [b[0] - b[1] * self.t_bar - b[2] * self.x_bar, b[1], b[2]],
        };
        let s = |j: usize| z[j].exp();
        ModelParams::new(coef, [s(6), s(7), s(8)], [s(9), s(10), s(11)])
    }

    /// Centered-covariate coefficients of `logit p` and `log r`.
    fn centered(z: &[f64]) -> ([f64; 3], [f64; 3]) {
        let a = [z[0], z[1], z[2]];
        (a, [a[0] + z[3], a[1] + z[4], a[2] + z[5]])
    }

    fn log_prior(&self, z: &[f64; 12]) -> f64 {
        let p = self.to_params(z);
        let coef = p.coef.to_array();
        let scales = p.sigma_alpha.iter().chain(&p.sigma_beta);
        let mut lp = 0.0;
        for ((c, &sigma), log_sigma) in coef.iter().zip(scales).zip(&z[6..]) {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return f64::NEG_INFINITY;
            }
            lp += ln_normal(*c, sigma) - sigma + log_sigma;
        }
        lp
    }

    fn fill_p(cells: &[Cell], a: [f64; 3], out: &mut CellCache) {
        for (i, c) in cells.iter().enumerate() {
            let eta = a[0] + a[1] * c.t + a[2] * c.x;
            out.log_p[i] = -softplus(-eta);
            out.log_1mp[i] = -softplus(eta);
        }
    }

    fn fill_r(cells: &[Cell], b: [f64; 3], out: &mut CellCache) {
        for (i, c) in cells.iter().enumerate() {
            let r = (b[0] + b[1] * c.t + b[2] * c.x).exp();
            out.r[i] = r;
            out.rising[i] = ln_rising(r, c.k);
        }
    }

    fn sum_loglik(cells: &[Cell], r: &[f64], rising: &[f64], log_p: &[f64], log_1mp: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, c) in cells.iter().enumerate() {
            let tail = if c.k == 0 { 0.0 } else { c.kf * log_1mp[i] };
            s += rising[i] - c.ln_k_fact + r[i] * log_p[i] + tail;
        }
        s
    }

    fn finite_or_reject(x: f64) -> f64 {
        if x.is_nan() {
            f64::NEG_INFINITY
        } else {
            x
        }
    }

    /// Coefficients of the current state.
    pub fn coefficients(&self) -> Coefficients {
        self.to_params(&self.z).coef
    }
}

impl CoordinateTarget for NbPosterior {
    fn dim(&self) -> usize {
        12
    }

    fn set_state(&mut self, x: &[f64]) -> f64 {
        self.z.copy_from_slice(x);
        self.staged = None;
        let (a, b) = Self::centered(&self.z);
        Self::fill_p(&self.cells, a, &mut self.cur);
        Self::fill_r(&self.cells, b, &mut self.cur);
        let c = &self.cur;
        self.loglik = Self::sum_loglik(&self.cells, &c.r, &c.rising, &c.log_p, &c.log_1mp);
        Self::finite_or_reject(self.loglik + self.log_prior(&self.z))
    }

    fn propose(&mut self, coord: usize, value: f64) -> f64 {
        let mut z = self.z;
        z[coord] = value;
        let (a, b) = Self::centered(&z);
        let loglik = match coord {
            0..=2 => {
                Self::fill_p(&self.cells, a, &mut self.stage);
                Self::fill_r(&self.cells, b, &mut self.stage);
                let s = &self.stage;
                Self::sum_loglik(&self.cells, &s.r, &s.rising, &s.log_p, &s.log_1mp)
            }
            3..=5 => {
                Self::fill_r(&self.cells, b, &mut self.stage);
                let (c, s) = (&self.cur, &self.stage);
                Self::sum_loglik(&self.cells, &s.r, &s.rising, &c.log_p, &c.log_1mp)
            }
            _ => self.loglik,
        };
        self.staged = Some(Staged { coord, value, loglik });
        Self::finite_or_reject(loglik + self.log_prior(&z))
    }

    fn commit(&mut self) {
        let Some(st) = self.staged.take() else { return };
        self.z[st.coord] = st.value;
        self.loglik = st.loglik;
        if st.coord < 3 {
            std::mem::swap(&mut self.cur.log_p, &mut self.stage.log_p);
            std::mem::swap(&mut self.cur.log_1mp, &mut self.stage.log_1mp);
        }
        if st.coord < 6 {
            std::mem::swap(&mut self.cur.r, &mut self.stage.r);
            std::mem::swap(&mut self.cur.rising, &mut self.stage.rising);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nbmodel::log_posterior;
    use crate::synth::{generate, SynthConfig};

    fn jacobian(p: &ModelParams) -> f64 {
        p.sigma_alpha.iter().chain(&p.sigma_beta).map(|s| s.ln()).sum()
    }

    fn triangle() -> ReportingTriangle {
        let s = generate(&SynthConfig {
            rows: 20,
            ..SynthConfig::with_seed(9)
        })
        .unwrap();
        s.at_present(21).unwrap().triangle
    }

    #[test]
    fn coordinate_map_round_trips() {
        let target = NbPosterior::new(&triangle());
        let p = ModelParams::new(Coefficients::REFERENCE, [0.5, 1.0, 2.0], [1.5, 0.7, 0.3]);
        let back = target.to_params(&target.to_unconstrained(&p));
        for (a, b) in p.to_array().iter().zip(back.to_array()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn cached_updates_match_full_recomputation() {
        let tri = triangle();
        let start = ModelParams::new(Coefficients::REFERENCE, [0.5, 1.0, 2.0], [1.5, 0.7, 0.3]);
        let mut target = NbPosterior::new(&tri);
        let mut z = target.to_unconstrained(&start);
        let lp0 = target.set_state(&z);
        assert!((lp0 - log_posterior(&start, &tri) - jacobian(&start)).abs() < 1e-8);

        let moves = [
            (0, 0.1),
            (4, -0.003),
            (7, 0.4),
            (2, -0.2),
            (3, 0.05),
            (1, 0.01),
            (11, -1.0),
        ];
        for (i, &(j, delta)) in moves.iter().enumerate() {
            let v = z[j] + delta;
            let lp = target.propose(j, v);
            let mut cand = z;
            cand[j] = v;
            let p = target.to_params(&cand);
            let full = log_posterior(&p, &tri) + jacobian(&p);
            assert!((lp - full).abs() < 1e-8 * full.abs(), "move {i}: {lp} vs {full}");
            if i % 2 == 0 {
                target.commit();
                z = cand;
            }
        }
        let p = target.to_params(&z);
        assert_eq!(target.coefficients(), p.coef);
    }
}
