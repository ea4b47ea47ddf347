//! One-dimensional Wright–Fisher diffusion
//!
//! ```text
//! dX = (a - (a + b) X) dt + sqrt(X (1 - X)) dB,   X(0) ∈ [0, 1]
//! ```
//!
//! with stationary (and reversible) law Beta(2a, 2b). Paths are produced by
//! Euler–Maruyama followed by clamping to `[0, 1]`. The diffusion
//! coefficient vanishes at both ends, so an overshoot is `O(dt)` and the
//! clamp introduces a bias of the same order; callers control it through
//! `dt`.

use log::warn;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::quadrature;
use crate::rng::RngStream;

/// Drift weights `(a, b)` of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WfParams {
    a: f64,
    b: f64,
}

impl WfParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", format!("must be positive and finite, got {a}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("b", format!("must be positive and finite, got {b}")));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `b >= 1/2`: the boundary at 1 is not reached from the interior.
    pub fn boundary_safe(&self) -> bool {
        self.b >= 0.5
    }

    pub fn drift(&self, x: f64) -> f64 {
        self.a - (self.a + self.b) * x
    }

    /// Stationary law is Beta(2a, 2b).
    pub fn stationary_shape(&self) -> (f64, f64) {
        (2.0 * self.a, 2.0 * self.b)
    }

    pub fn stationary_mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// A point of `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct WfState(f64);

impl WfState {
    pub fn new(x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) {
            return Err(invalid("x", format!("state must lie in [0,1], got {x}")));
        }
        Ok(Self(x))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Time discretisation and ensemble size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub n_paths: usize,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64, n_paths: usize) -> Result<Self> {
        let cfg = Self {
            dt,
            horizon,
            seed,
            n_paths,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be non-negative, got {}", self.horizon)));
        }
        if self.horizon > 0.0 && self.dt > self.horizon {
            return Err(invalid("dt", format!("dt {} exceeds horizon {}", self.dt, self.horizon)));
        }
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be positive"));
        }
        Ok(())
    }

    /// Step sizes covering `[0, horizon]`: `ceil(horizon/dt)` steps, the last
    /// one shortened so the total is exactly `horizon`.
    pub fn steps(&self) -> TimeSteps {
        TimeSteps::new(self.horizon, self.dt)
    }
}

/// Iterator over the step sizes of a uniform grid on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct TimeSteps {
    dt: f64,
    last: f64,
    remaining: usize,
}

impl TimeSteps {
    pub fn new(horizon: f64, dt: f64) -> Self {
        if horizon <= 0.0 {
            return Self {
                dt,
                last: 0.0,
                remaining: 0,
            };
        }
        // Tolerate representation error in horizon/dt.
        let n = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
        let last = horizon - (n - 1) as f64 * dt;
        Self {
            dt,
            last,
            remaining: n,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.remaining
    }
}

impl Iterator for TimeSteps {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        match self.remaining {
            0 => None,
            1 => {
                self.remaining = 0;
                Some(self.last)
            }
            _ => {
                self.remaining -= 1;
                Some(self.dt)
            }
        }
    }
}

/// One Euler–Maruyama step driven by the standard normal `z`, clamped to
/// `[0, 1]`.
#[inline]
pub fn wf_step(state: WfState, p: &WfParams, dt: f64, z: f64) -> WfState {
    WfState(step_raw(state.0, p.a, p.b, dt, z))
}

#[inline]
pub(crate) fn step_raw(x: f64, a: f64, b: f64, dt: f64, z: f64) -> f64 {
    let diffusion = (x * (1.0 - x)).max(0.0).sqrt();
    let next = x + (a - (a + b) * x) * dt + diffusion * dt.sqrt() * z;
    next.clamp(0.0, 1.0)
}

/// Advance `x` over `steps` drawing one normal per step from `rng`.
pub(crate) fn advance_raw(
    mut x: f64,
    a: f64,
    b: f64,
    steps: impl Iterator<Item = f64>,
    rng: &mut RngStream,
) -> f64 {
    for h in steps {
        x = step_raw(x, a, b, h, rng.standard_normal());
    }
    x
}

pub(crate) fn warn_if_unsafe(p: &WfParams) {
    if !p.boundary_safe() {
        warn!(
            "b = {} < 1/2: the boundary at 1 is accessible; simulation clamps at 1",
            p.b
        );
    }
}

/// Simulate one path to `cfg.horizon` and return its endpoint.
pub fn wf_simulate(x0: WfState, p: &WfParams, cfg: &SimConfig, rng: &mut RngStream) -> WfState {
    warn_if_unsafe(p);
    WfState(advance_raw(x0.0, p.a, p.b, cfg.steps(), rng))
}

/// Simulate one path and record every intermediate state (including `x0`)
/// together with its time.
pub fn wf_simulate_path(
    x0: WfState,
    p: &WfParams,
    cfg: &SimConfig,
    rng: &mut RngStream,
) -> Vec<(f64, WfState)> {
    warn_if_unsafe(p);
    let steps = cfg.steps();
    let mut out = Vec::with_capacity(steps.n_steps() + 1);
    let mut t = 0.0;
    let mut x = x0;
    out.push((t, x));
    for (k, h) in steps.enumerate() {
        x = wf_step(x, p, h, rng.standard_normal());
        t = if (k + 1) as f64 * cfg.dt >= cfg.horizon {
            cfg.horizon
        } else {
            (k + 1) as f64 * cfg.dt
        };
        out.push((t, x));
    }
    out
}

/// Endpoints of `cfg.n_paths` independent paths, path `i` driven by stream
/// `(seed, i)` under the label `tag`. `init` chooses the starting point from
/// the same stream, so it can be deterministic or a stationary draw.
pub fn wf_ensemble_endpoints<F>(p: &WfParams, cfg: &SimConfig, tag: &str, init: F) -> Vec<(f64, f64)>
where
    F: Fn(&mut RngStream) -> f64 + Sync,
{
    warn_if_unsafe(p);
    let (a, b) = (p.a, p.b);
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_task(cfg.seed, tag, i as u64);
            let x0 = init(&mut rng);
            (x0, advance_raw(x0, a, b, cfg.steps(), &mut rng))
        })
        .collect()
}

/// Draw from Beta(alpha, beta) as `G1 / (G1 + G2)` with independent gammas.
pub fn sample_beta(alpha: f64, beta: f64, rng: &mut RngStream) -> f64 {
    let g1 = Gamma::new(alpha, 1.0).expect("positive shape").sample(rng);
    let g2 = Gamma::new(beta, 1.0).expect("positive shape").sample(rng);
    let s = g1 + g2;
    if s > 0.0 {
        g1 / s
    } else {
        // Both shapes tiny and both draws underflowed.
        if rng.uniform() < alpha / (alpha + beta) {
            1.0
        } else {
            0.0
        }
    }
}

/// Exact draw from the stationary law Beta(2a, 2b).
pub fn stationary_sample(p: &WfParams, rng: &mut RngStream) -> f64 {
    sample_beta(2.0 * p.a, 2.0 * p.b, rng)
}

/// Scale function `s(x) = 4^{-(a+b)} ∫_{1/2}^x y^{-2a} (1-y)^{-2b} dy`,
/// computed by adaptive quadrature with relative tolerance 1e-8.
pub fn scale_function(p: &WfParams, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid("x", format!("scale function needs 0 < x < 1, got {x}")));
    }
    let (a2, b2) = (2.0 * p.a, 2.0 * p.b);
    // Work in log space: the integrand spans many orders of magnitude near 0 and 1.
    let integrand = |y: f64| (-a2 * y.ln() - b2 * (-y).ln_1p()).exp();
    let integral = quadrature::integrate(integrand, 0.5, x, 1e-8)?;
    Ok(0.25f64.powf(p.a + p.b) * integral)
}

/// `E_{x0}[h(X_t)] = e^{-(a+b)t} h(x0)` for the eigenfunction
/// `h(r) = a - (a+b) r`.
pub fn linear_eigen_prediction(p: &WfParams, x0: f64, t: f64) -> f64 {
    (-(p.a + p.b) * t).exp() * p.drift(x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(a: f64, b: f64) -> WfParams {
        WfParams::new(a, b).unwrap()
    }

    #[test]
    fn rejects_nonpositive_params() {
        assert!(WfParams::new(0.0, 1.0).is_err());
        assert!(WfParams::new(1.0, -1.0).is_err());
        assert!(WfParams::new(f64::NAN, 1.0).is_err());
        assert!(WfParams::new(0.5, 0.49).map(|p| !p.boundary_safe()).unwrap());
        assert!(params(0.5, 0.5).boundary_safe());
    }

    #[test]
    fn zero_noise_drift_step() {
        let x = wf_step(WfState::new(0.3).unwrap(), &params(0.5, 0.5), 0.1, 0.0);
        assert!((x.value() - 0.32).abs() < 1e-15);
    }

    #[test]
    fn step_from_zero_is_pure_drift() {
        let p = params(0.7, 1.3);
        let x = wf_step(WfState::new(0.0).unwrap(), &p, 0.01, 0.0);
        assert!((x.value() - 0.007).abs() < 1e-15);
        // noise has no effect at 0 either
        let y = wf_step(WfState::new(0.0).unwrap(), &p, 0.01, 3.0);
        assert_eq!(x, y);
    }

    #[test]
    fn step_from_one_ignores_noise() {
        let p = params(0.5, 0.5);
        for z in [-4.0, 0.0, 2.5] {
            let x = wf_step(WfState::new(1.0).unwrap(), &p, 0.1, z);
            assert!((x.value() - 0.95).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_horizon_returns_start() {
        let cfg = SimConfig::new(0.01, 0.0, 1, 1).unwrap();
        let mut rng = RngStream::new(1, 0);
        let x0 = WfState::new(0.42).unwrap();
        assert_eq!(wf_simulate(x0, &params(0.5, 0.5), &cfg, &mut rng), x0);
    }

    #[test]
    fn sim_config_validation() {
        assert!(SimConfig::new(0.0, 1.0, 0, 1).is_err());
        assert!(SimConfig::new(2.0, 1.0, 0, 1).is_err());
        assert!(SimConfig::new(0.1, 1.0, 0, 0).is_err());
        assert!(SimConfig::new(0.1, 1.0, 0, 1).is_ok());
    }

    #[test]
    fn time_steps_cover_horizon_exactly() {
        let steps: Vec<f64> = TimeSteps::new(20.0, 1e-3).collect();
        assert_eq!(steps.len(), 20_000);
        let total: f64 = crate::stats::kahan_sum(steps.iter().copied());
        assert!((total - 20.0).abs() < 1e-9);
        let steps: Vec<f64> = TimeSteps::new(0.25, 0.1).collect();
        assert_eq!(steps.len(), 3);
        assert!((steps[2] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn path_is_deterministic_and_timed() {
        let cfg = SimConfig::new(0.1, 1.0, 9, 1).unwrap();
        let p = params(0.5, 1.0);
        let x0 = WfState::new(0.5).unwrap();
        let a = wf_simulate_path(x0, &p, &cfg, &mut RngStream::new(9, 0));
        let b = wf_simulate_path(x0, &p, &cfg, &mut RngStream::new(9, 0));
        assert_eq!(a, b);
        assert_eq!(a.len(), 11);
        assert!((a.last().unwrap().0 - 1.0).abs() < 1e-12);
        let end = wf_simulate(x0, &p, &cfg, &mut RngStream::new(9, 0));
        assert_eq!(end, a.last().unwrap().1);
    }

    #[test]
    fn zero_noise_converges_to_ode_at_first_order() {
        // x' = a - (a+b) x  ⇒  x(t) = m + (x0 - m) e^{-(a+b) t}, m = a/(a+b)
        let p = params(0.5, 1.0);
        let (x0, t) = (0.9, 1.0);
        let m = p.stationary_mean();
        let exact = m + (x0 - m) * (-1.5f64 * t).exp();
        let err = |dt: f64| {
            let x = TimeSteps::new(t, dt).fold(x0, |x, h| step_raw(x, p.a, p.b, h, 0.0));
            (x - exact).abs()
        };
        let (e2, e3) = (err(1e-2), err(1e-3));
        let ratio = e2 / e3;
        assert!((ratio - 10.0).abs() < 0.5, "Richardson ratio {ratio}");
    }

    #[test]
    fn uniform_stationary_case() {
        let p = params(0.5, 0.5);
        let mut rng = RngStream::new(3, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| stationary_sample(&p, &mut rng)).collect();
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        let d = crate::stats::ks_statistic(&xs, |x| x);
        assert!(d < 0.015, "KS {d}");
    }

    #[test]
    fn stationary_means() {
        let n = 1_000_000;
        for ((a, b), expected) in [((0.5, 0.5), 0.5), ((0.5, 1.0), 1.0 / 3.0)] {
            let p = params(a, b);
            let mut rng = RngStream::new(11, 0);
            let xs: Vec<f64> = (0..n).map(|_| stationary_sample(&p, &mut rng)).collect();
            let e = crate::stats::Estimate::from_samples(&xs);
            assert!(e.within(expected, 3.0), "{e:?} vs {expected}");
        }
    }

    #[test]
    fn scale_function_values() {
        let p = params(0.5, 0.5);
        assert_eq!(scale_function(&p, 0.5).unwrap(), 0.0);
        // closed form (1/4) ln(x / (1-x))
        let v = scale_function(&p, 0.9).unwrap();
        assert!((v - 0.25 * 9f64.ln()).abs() < 1e-8 * v.abs());
        let w = scale_function(&p, 0.2).unwrap();
        assert!((w - 0.25 * (0.25f64).ln()).abs() < 1e-8 * w.abs());
        assert!(scale_function(&p, 0.0).is_err());
        assert!(scale_function(&p, 1.0).is_err());
    }

    #[test]
    fn scale_function_against_closed_form_general() {
        // a = 1/2, b = 1: 4^{-3/2} ∫ dy / (y (1-y)^2) = (1/8)[ln(y/(1-y)) + 1/(1-y)]
        let p = params(0.5, 1.0);
        let anti = |y: f64| 0.125 * ((y / (1.0 - y)).ln() + 1.0 / (1.0 - y));
        for x in [0.1, 0.3, 0.7, 0.99] {
            let v = scale_function(&p, x).unwrap();
            let expected = anti(x) - anti(0.5);
            assert!((v - expected).abs() <= 1e-8 * expected.abs(), "x={x}: {v} vs {expected}");
        }
    }

    #[test]
    fn scale_function_diverges_at_one() {
        let p = params(0.5, 0.5);
        let vals: Vec<f64> = (1..=8)
            .map(|k| scale_function(&p, 1.0 - 10f64.powi(-k)).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        // grows like (1/4) k ln 10
        let last = *vals.last().unwrap();
        assert!((last - 0.25 * ((1.0 - 1e-8) / 1e-8f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn eigen_prediction_values() {
        let p = params(0.5, 0.5);
        assert!((linear_eigen_prediction(&p, 0.2, 0.0) - 0.3).abs() < 1e-15);
        assert_eq!(linear_eigen_prediction(&p, 0.5, 3.0), 0.0);
        let v = linear_eigen_prediction(&p, 0.2, 1.0);
        assert!((v - 0.3 * (-1f64).exp()).abs() < 1e-15);
        assert!((v - 0.110364).abs() < 1e-6);
    }

    #[test]
    fn ensemble_is_order_independent() {
        let p = params(1.0, 2.0);
        let cfg = SimConfig::new(0.01, 0.5, 5, 64).unwrap();
        let a = wf_ensemble_endpoints(&p, &cfg, "t", |_| 0.5);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| wf_ensemble_endpoints(&p, &cfg, "t", |_| 0.5));
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn step_stays_in_unit_interval(
            x in 0.0f64..=1.0,
            a in 1e-3f64..5.0,
            b in 1e-3f64..5.0,
            dt in 1e-6f64..1.0,
            z in -10.0f64..10.0,
        ) {
            let p = params(a, b);
            let y = wf_step(WfState::new(x).unwrap(), &p, dt, z).value();
            prop_assert!((0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn step_stays_in_unit_interval_bulk() {
        let mut rng = RngStream::new(99, 0);
        for _ in 0..1_000_000 {
            let x = rng.uniform();
            let a = 1e-3 + 4.0 * rng.uniform();
            let b = 1e-3 + 4.0 * rng.uniform();
            let dt = rng.uniform();
            let z = 6.0 * rng.standard_normal();
            let y = step_raw(x, a, b, dt, z);
            assert!((0.0..=1.0).contains(&y));
        }
    }
}
