//! Kalman regularization of gaze signals: a constant-velocity online filter
//! per channel plus a fixed-interval Rauch-Tung-Striebel smoother for
//! dataset construction.
//!
//! State is (value, velocity) with unit frame interval:
//! F = [[1,1],[0,1]], Q = q*[[1/4,1/2],[1/2,1]], H = [1,0], R = r.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_q() -> f64 {
    1e-4
}
fn default_r() -> f64 {
    1e-2
}
fn default_enabled() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalmanConfig {
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            q: default_q(),
            r: default_r(),
            enabled: default_enabled(),
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.r > 0.0) {
            return Err(Error::Config(format!(
                "kalman q and r must be positive, got q={}, r={}",
                self.q, self.r
            )));
        }
        Ok(())
    }
}

/// Per-signal filter state.
#[derive(Debug, Clone, Copy)]
pub struct KalmanChannel {
    /// (value, velocity)
    pub state: [f64; 2],
    /// Row-major 2x2 covariance.
    pub cov: [[f64; 2]; 2],
    pub q: f64,
    pub r: f64,
}

const SYM_TOL: f64 = 1e-9;

impl KalmanChannel {
    /// State starts at (first_obs, 0) with covariance diag(r, 1.0).
    pub fn init(first_obs: f64, q: f64, r: f64) -> Result<Self> {
        if !(q > 0.0 && r > 0.0) {
            return Err(Error::Argument(format!(
                "kalman noise parameters must be positive, got q={q}, r={r}"
            )));
        }
        if !first_obs.is_finite() {
            return Err(Error::Argument("first observation must be finite".into()));
        }
        Ok(KalmanChannel {
            state: [first_obs, 0.0],
            cov: [[r, 0.0], [0.0, 1.0]],
            q,
            r,
        })
    }

    fn predict_state(&self) -> [f64; 2] {
        [self.state[0] + self.state[1], self.state[1]]
    }

    fn predict_cov(&self) -> [[f64; 2]; 2] {
        let p = &self.cov;
        // F P F^T with F = [[1,1],[0,1]]
        let a = p[0][0] + p[0][1] + p[1][0] + p[1][1];
        let b = p[0][1] + p[1][1];
        let c = p[1][0] + p[1][1];
        let d = p[1][1];
        [
            [a + self.q * 0.25, b + self.q * 0.5],
            [c + self.q * 0.5, d + self.q],
        ]
    }

    /// Constant-velocity predict then scalar update; returns the posterior
    /// value. The covariance is re-symmetrized every step; an indefinite
    /// covariance after that is a numerical failure.
    pub fn step(&mut self, obs: f64) -> Result<f64> {
        if !obs.is_finite() {
            return Err(Error::Argument(format!(
                "observation must be finite: {obs}"
            )));
        }
        let xp = self.predict_state();
        let pp = self.predict_cov();

        let s = pp[0][0] + self.r;
        let k0 = pp[0][0] / s;
        let k1 = pp[1][0] / s;
        let innovation = obs - xp[0];
        self.state = [xp[0] + k0 * innovation, xp[1] + k1 * innovation];

        // P = (I - K H) P_pred, H = [1, 0]
        let mut p = [
            [(1.0 - k0) * pp[0][0], (1.0 - k0) * pp[0][1]],
            [pp[1][0] - k1 * pp[0][0], pp[1][1] - k1 * pp[0][1]],
        ];
        let off = 0.5 * (p[0][1] + p[1][0]);
        p[0][1] = off;
        p[1][0] = off;
        self.cov = p;

        if p[0][0] < -SYM_TOL || p[1][1] < -SYM_TOL || p[0][0] * p[1][1] - off * off < -SYM_TOL {
            return Err(Error::Numeric(format!(
                "covariance lost positive semidefiniteness: {p:?}"
            )));
        }
        Ok(self.state[0])
    }
}

/// Forward filter over a whole series (first value initializes the channel).
pub fn filter_series(obs: &[f64], q: f64, r: f64) -> Result<Vec<f64>> {
    if obs.is_empty() {
        return Err(Error::Argument("series must be nonempty".into()));
    }
    let mut ch = KalmanChannel::init(obs[0], q, r)?;
    let mut out = Vec::with_capacity(obs.len());
    out.push(ch.state[0]);
    for &o in &obs[1..] {
        out.push(ch.step(o)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SmoothedSeries {
    pub values: Vec<f64>,
    /// Smoothed posterior variance of the value component, per step.
    pub variances: Vec<f64>,
}

fn mat_mul2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mat_inv2(m: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 {
        return Err(Error::Numeric("singular predicted covariance".into()));
    }
    Ok([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

/// Forward filter then RTS backward pass. Output length equals input length;
/// the last smoothed value equals the last filtered value.
pub fn rts_smooth_full(obs: &[f64], q: f64, r: f64) -> Result<SmoothedSeries> {
    if obs.is_empty() {
        return Err(Error::Argument("series must be nonempty".into()));
    }
    let n = obs.len();
    let mut ch = KalmanChannel::init(obs[0], q, r)?;
    let mut filt_x = Vec::with_capacity(n);
    let mut filt_p = Vec::with_capacity(n);
    let mut pred_x = Vec::with_capacity(n);
    let mut pred_p = Vec::with_capacity(n);
    filt_x.push(ch.state);
    filt_p.push(ch.cov);
    pred_x.push(ch.state); // unused slot for t = 0
    pred_p.push(ch.cov);
    for &o in &obs[1..] {
        pred_x.push(ch.predict_state());
        pred_p.push(ch.predict_cov());
        ch.step(o)?;
        filt_x.push(ch.state);
        filt_p.push(ch.cov);
    }

    let f = [[1.0, 1.0], [0.0, 1.0]];
    let mut smooth_x = filt_x.clone();
    let mut smooth_p = filt_p.clone();
    for t in (0..n - 1).rev() {
        // C = P_t F^T (P_pred_{t+1})^-1
        let pf_t = mat_mul2(&filt_p[t], &[[f[0][0], f[1][0]], [f[0][1], f[1][1]]]);
        let inv = mat_inv2(&pred_p[t + 1])?;
        let c = mat_mul2(&pf_t, &inv);
        let dx = [
            smooth_x[t + 1][0] - pred_x[t + 1][0],
            smooth_x[t + 1][1] - pred_x[t + 1][1],
        ];
        smooth_x[t] = [
            filt_x[t][0] + c[0][0] * dx[0] + c[0][1] * dx[1],
            filt_x[t][1] + c[1][0] * dx[0] + c[1][1] * dx[1],
        ];
        // P = P_t + C (P_smooth_{t+1} - P_pred_{t+1}) C^T
        let dp = [
            [
                smooth_p[t + 1][0][0] - pred_p[t + 1][0][0],
                smooth_p[t + 1][0][1] - pred_p[t + 1][0][1],
            ],
            [
                smooth_p[t + 1][1][0] - pred_p[t + 1][1][0],
                smooth_p[t + 1][1][1] - pred_p[t + 1][1][1],
            ],
        ];
        let cdp = mat_mul2(&c, &dp);
        let cdpc = mat_mul2(&cdp, &[[c[0][0], c[1][0]], [c[0][1], c[1][1]]]);
        for i in 0..2 {
            for j in 0..2 {
                smooth_p[t][i][j] = filt_p[t][i][j] + cdpc[i][j];
            }
        }
    }
    Ok(SmoothedSeries {
        values: smooth_x.iter().map(|x| x[0]).collect(),
        variances: smooth_p.iter().map(|p| p[0][0]).collect(),
    })
}

/// Smoothed values only.
pub fn rts_smooth(obs: &[f64], q: f64, r: f64) -> Result<Vec<f64>> {
    Ok(rts_smooth_full(obs, q, r)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::variance;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn init_definition() {
        let ch = KalmanChannel::init(0.3, 1e-4, 1e-2).unwrap();
        assert_eq!(ch.state, [0.3, 0.0]);
        assert_eq!(ch.cov[0][1], ch.cov[1][0]);
        let again = KalmanChannel::init(0.3, 1e-4, 1e-2).unwrap();
        assert_eq!(ch.state, again.state);
        assert!(KalmanChannel::init(0.0, 0.0, 1.0).is_err());
        assert!(KalmanChannel::init(0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn constant_observations_stay_constant() {
        let c = 0.42;
        let mut ch = KalmanChannel::init(c, 1e-4, 1e-2).unwrap();
        for _ in 0..200 {
            let v = ch.step(c).unwrap();
            assert!((v - c).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_r_approaches_pure_prediction() {
        // step limit: once the state covariance is settled, an enormous r
        // makes the update ignore observations, so the output tracks the
        // predict-only recursion
        let mut ch = KalmanChannel {
            state: [1.0, 0.02],
            cov: [[1e-4, 0.0], [0.0, 1e-4]],
            q: 1e-9,
            r: 1e12,
        };
        let mut pred = ch.state;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let obs = rng.gen_range(-5.0..5.0);
            let v = ch.step(obs).unwrap();
            pred = [pred[0] + pred[1], pred[1]];
            assert!((v - pred[0]).abs() < 1e-6, "{v} vs {}", pred[0]);
        }
    }

    /// Textbook filter with explicit matrix algebra, kept deliberately
    /// separate from the gain-form implementation.
    fn textbook_filter(obs: &[f64], q: f64, r: f64) -> Vec<f64> {
        let f = [[1.0, 1.0], [0.0, 1.0]];
        let qm = [[q * 0.25, q * 0.5], [q * 0.5, q]];
        let mut x = [obs[0], 0.0];
        let mut p = [[r, 0.0], [0.0, 1.0]];
        let mut out = vec![x[0]];
        for &z in &obs[1..] {
            // predict
            let xp = [
                f[0][0] * x[0] + f[0][1] * x[1],
                f[1][0] * x[0] + f[1][1] * x[1],
            ];
            let fp = mat_mul2(&f, &p);
            let mut pp = mat_mul2(&fp, &[[f[0][0], f[1][0]], [f[0][1], f[1][1]]]);
            for i in 0..2 {
                for j in 0..2 {
                    pp[i][j] += qm[i][j];
                }
            }
            // update (H = [1, 0])
            let s = pp[0][0] + r;
            let k = [pp[0][0] / s, pp[1][0] / s];
            let innov = z - xp[0];
            x = [xp[0] + k[0] * innov, xp[1] + k[1] * innov];
            let ikh = [[1.0 - k[0], 0.0], [-k[1], 1.0]];
            p = mat_mul2(&ikh, &pp);
            let off = 0.5 * (p[0][1] + p[1][0]);
            p[0][1] = off;
            p[1][0] = off;
            out.push(x[0]);
        }
        out
    }

    #[test]
    fn random_walk_matches_textbook_oracle_at_every_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut obs = vec![0.0];
        for _ in 0..199 {
            let last = *obs.last().unwrap();
            obs.push(last + rng.gen_range(-0.1..0.1));
        }
        let ours = filter_series(&obs, 1e-3, 1e-2).unwrap();
        let oracle = textbook_filter(&obs, 1e-3, 1e-2);
        for (i, (a, b)) in ours.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() < 1e-9, "step {i}: {a} vs {b}");
        }
    }

    #[test]
    fn gain_stays_in_unit_interval_and_cov_symmetric() {
        let mut ch = KalmanChannel::init(0.0, 1e-4, 1e-2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let pp = ch.predict_cov();
            let gain = pp[0][0] / (pp[0][0] + ch.r);
            assert!((0.0..=1.0).contains(&gain));
            ch.step(rng.gen_range(-1.0..1.0)).unwrap();
            assert!((ch.cov[0][1] - ch.cov[1][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn length_one_series_returns_init_value() {
        let s = rts_smooth(&[0.9], 1e-4, 1e-2).unwrap();
        assert_eq!(s, vec![0.9]);
        assert!(rts_smooth(&[], 1e-4, 1e-2).is_err());
    }

    #[test]
    fn smoother_ends_at_the_filtered_value_and_preserves_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let obs: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let filtered = filter_series(&obs, 1e-4, 1e-2).unwrap();
        let smoothed = rts_smooth(&obs, 1e-4, 1e-2).unwrap();
        assert_eq!(smoothed.len(), obs.len());
        assert!((smoothed.last().unwrap() - filtered.last().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_plus_noise_variance_drops_fourfold() {
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let obs: Vec<f64> = (0..1000).map(|_| 2.0 + normal.sample(&mut rng)).collect();
        let smoothed = rts_smooth(&obs, 1e-4, 1e-2).unwrap();
        let raw_var = variance(&obs);
        let smooth_var = variance(&smoothed);
        assert!(
            smooth_var <= raw_var / 4.0,
            "raw {raw_var}, smoothed {smooth_var}"
        );
    }

    #[test]
    fn linear_ramp_is_tracked_within_two_sigma() {
        // assumed measurement noise is 3x the injected noise, so the
        // smoothed posterior sigma bounds the actual error with margin
        let slope = 0.01;
        let sigma = 1e-3;
        let assumed = 3.0 * sigma;
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let truth: Vec<f64> = (0..300).map(|t| slope * t as f64).collect();
        let obs: Vec<f64> = truth.iter().map(|x| x + normal.sample(&mut rng)).collect();
        let s = rts_smooth_full(&obs, 1e-4, assumed * assumed).unwrap();
        for (i, ((got, var), want)) in s.values.iter().zip(&s.variances).zip(&truth).enumerate() {
            let bound = 2.0 * var.sqrt();
            assert!(
                (got - want).abs() <= bound,
                "step {i}: |{got} - {want}| > {bound}"
            );
        }
    }

    #[test]
    fn smoother_never_beats_filter_in_reverse_on_linear_gaussian_signals() {
        // smoother MSE <= filter MSE vs truth, 5 seeds, 1000+ samples
        for seed in 0..5u64 {
            let q: f64 = 1e-4;
            let r: f64 = 1e-2;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let proc = Normal::new(0.0, q.sqrt()).unwrap();
            let meas = Normal::new(0.0, r.sqrt()).unwrap();
            let mut x = [0.0f64, 0.0];
            let mut truth = Vec::with_capacity(1200);
            let mut obs = Vec::with_capacity(1200);
            for _ in 0..1200 {
                let w: f64 = proc.sample(&mut rng);
                x = [x[0] + x[1] + 0.5 * w, x[1] + w];
                truth.push(x[0]);
                obs.push(x[0] + meas.sample(&mut rng));
            }
            let filtered = filter_series(&obs, q, r).unwrap();
            let smoothed = rts_smooth(&obs, q, r).unwrap();
            let mse = |est: &[f64]| {
                est.iter()
                    .zip(&truth)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / est.len() as f64
            };
            let fm = mse(&filtered);
            let sm = mse(&smoothed);
            assert!(sm <= fm, "seed {seed}: smoother MSE {sm} > filter MSE {fm}");
        }
    }

    #[test]
    fn zero_noise_constant_passes_through_exactly() {
        let obs = vec![0.123456; 500];
        let smoothed = rts_smooth(&obs, 1e-4, 1e-2).unwrap();
        for v in smoothed {
            assert!((v - 0.123456).abs() < 1e-9);
        }
    }
}
