//! The measure-valued process `η_t = Σ X_i(t) δ_{ξ_i(t)}`: stick-breaking
//! weights driven by Wright–Fisher coordinates, types driven by an
//! independent parent-independent mutation process, combined by the
//! pushforward `ψ(x, ξ) = Σ x_i δ_{ξ_i}`.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::gem_generator::ParamSeq;
use crate::rng::RngStream;
use crate::stick_breaking::{phi_closed, Atom, DiscreteMeasure, SimplexPoint, TypeLaw};
use crate::wf_diffusion::{step_raw, warn_if_unsafe, SimConfig, TimeSteps};

/// Remainder mass above which [`integrate`] warns about truncation bias.
pub const REMAINDER_WARNING: f64 = 1e-3;

/// Types `ξ_1, …, ξ_n` in `S = [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeVector {
    xi: Vec<f64>,
}

impl TypeVector {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if let Some(s) = xi.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(invalid("xi", format!("types must lie in [0, 1], got {s}")));
        }
        Ok(Self { xi })
    }

    /// `n` i.i.d. draws from `nu`.
    pub fn sample<N: TypeLaw + ?Sized>(nu: &N, n: usize, rng: &mut RngStream) -> Self {
        Self {
            xi: (0..n).map(|_| nu.sample(rng)).collect(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.xi
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// Weights paired with types.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaState {
    weights: SimplexPoint,
    types: TypeVector,
}

impl EtaState {
    pub fn new(weights: SimplexPoint, types: TypeVector) -> Result<Self> {
        if weights.len() != types.len() {
            return Err(invalid(
                "types",
                format!("{} types for {} weights", types.len(), weights.len()),
            ));
        }
        Ok(Self { weights, types })
    }

    pub fn weights(&self) -> &SimplexPoint {
        &self.weights
    }

    pub fn types(&self) -> &TypeVector {
        &self.types
    }
}

/// The Markov product state: stick coordinates and types.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    pub sticks: Vec<f64>,
    pub types: TypeVector,
}

impl ProductState {
    /// Sticks from their stationary laws, types i.i.d. `nu`.
    pub fn stationary<N: TypeLaw + ?Sized>(p: &ParamSeq, nu: &N, rng: &mut RngStream) -> Self {
        let sticks = p.sample_stationary_sticks(p.len(), rng);
        let types = TypeVector::sample(nu, p.len(), rng);
        Self { sticks, types }
    }

    pub fn eta(&self) -> EtaState {
        EtaState {
            weights: phi_closed(&self.sticks),
            types: self.types.clone(),
        }
    }
}

/// Probability that a rate-`θ/2` jump clock rings within `dt`.
pub fn refresh_probability(theta: f64, dt: f64) -> f64 {
    -(-theta * dt / 2.0).exp_m1()
}

fn mutate_in_place<N: TypeLaw + ?Sized>(xi: &mut [f64], q: f64, nu: &N, rng: &mut RngStream) {
    if q == 0.0 {
        return;
    }
    for s in xi {
        if rng.uniform() < q {
            *s = nu.sample(rng);
        }
    }
}

/// Redraw each type from `nu` independently with probability
/// `1 - e^{-θ dt / 2}`.
pub fn mutation_step<N: TypeLaw + ?Sized>(
    types: &TypeVector,
    theta: f64,
    nu: &N,
    dt: f64,
    rng: &mut RngStream,
) -> Result<TypeVector> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(invalid("theta", format!("must be non-negative, got {theta}")));
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let mut xi = types.xi.clone();
    mutate_in_place(&mut xi, refresh_probability(theta, dt), nu, rng);
    Ok(TypeVector { xi })
}

/// `ψ(x, ξ) = Σ x_i δ_{ξ_i}`; atoms are not merged.
pub fn pushforward_psi(s: &EtaState) -> DiscreteMeasure {
    let atoms = s
        .weights
        .weights()
        .iter()
        .zip(&s.types.xi)
        .map(|(&weight, &location)| Atom { weight, location })
        .collect();
    DiscreteMeasure::from_parts_unchecked(atoms, s.weights.remainder())
}

/// `Σ w_i g(s_i)`; the remainder contributes nothing.
pub fn integrate(m: &DiscreteMeasure, g: impl Fn(f64) -> f64) -> f64 {
    if m.remainder() > REMAINDER_WARNING {
        warn!(
            "integrating against a measure with remainder {:.3e}; bias up to sup|g| times that",
            m.remainder()
        );
    }
    m.atoms().iter().map(|a| a.weight * g(a.location)).sum()
}

/// `η` at one sampled time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub measure: DiscreteMeasure,
}

#[derive(Serialize)]
struct SnapshotLine {
    t: f64,
    atoms: Vec<[f64; 2]>,
    remainder: f64,
}

impl Snapshot {
    /// `{"t": …, "atoms": [[w, s], …], "remainder": …}`.
    pub fn to_json_line(&self) -> String {
        let line = SnapshotLine {
            t: self.t,
            atoms: self.measure.atoms().iter().map(|a| [a.weight, a.location]).collect(),
            remainder: self.measure.remainder(),
        };
        serde_json::to_string(&line).expect("finite snapshot serialises")
    }
}

pub fn write_jsonl<W: Write>(mut out: W, snapshots: &[Snapshot]) -> std::io::Result<()> {
    for s in snapshots {
        writeln!(out, "{}", s.to_json_line())?;
    }
    Ok(())
}

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("times", "must be non-decreasing"));
    }
    if times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(invalid("times", format!("must lie in [0, {horizon}]")));
    }
    Ok(())
}

/// Evolve a product state and record `η` at each of `times`. Each step
/// advances every stick by one Wright–Fisher step and then applies one
/// mutation step of the same length.
pub fn evolve<N: TypeLaw + ?Sized>(
    mut state: ProductState,
    p: &ParamSeq,
    theta_mut: f64,
    nu: &N,
    dt: f64,
    times: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<Snapshot>> {
    if state.sticks.len() != state.types.len() || state.sticks.len() > p.len() {
        return Err(invalid("state", "sticks, types and parameters disagree in length"));
    }
    if !(theta_mut >= 0.0 && theta_mut.is_finite()) {
        return Err(invalid("theta_mut", format!("must be non-negative, got {theta_mut}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    check_times(times, f64::INFINITY)?;
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        for h in TimeSteps::new(t - now, dt) {
            for (c, x) in state.sticks.iter_mut().enumerate() {
                let q = p.get(c);
                *x = step_raw(*x, q.a(), q.b(), h, rng.standard_normal());
            }
            mutate_in_place(&mut state.types.xi, refresh_probability(theta_mut, h), nu, rng);
        }
        now = now.max(t);
        out.push(Snapshot {
            t,
            measure: pushforward_psi(&state.eta()),
        });
    }
    Ok(out)
}

/// One path from the stationary product state (sticks from their stationary
/// laws, types i.i.d. `nu`), truncated at `p.len()` atoms.
pub fn simulate_eta<N: TypeLaw + ?Sized>(
    cfg: &SimConfig,
    p: &ParamSeq,
    theta_mut: f64,
    nu: &N,
    times: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<Snapshot>> {
    cfg.validate()?;
    check_times(times, cfg.horizon)?;
    p.iter().for_each(warn_if_unsafe);
    let state = ProductState::stationary(p, nu, rng);
    evolve(state, p, theta_mut, nu, cfg.dt, times, rng)
}

/// `cfg.n_paths` independent stationary paths, path `i` on stream
/// `(cfg.seed, "eta", i)`.
pub fn simulate_eta_ensemble<N: TypeLaw + ?Sized>(
    cfg: &SimConfig,
    p: &ParamSeq,
    theta_mut: f64,
    nu: &N,
    times: &[f64],
) -> Result<Vec<Vec<Snapshot>>> {
    cfg.validate()?;
    check_times(times, cfg.horizon)?;
    p.iter().for_each(warn_if_unsafe);
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::for_task(cfg.seed, "eta", i as u64);
            let state = ProductState::stationary(p, nu, &mut rng);
            evolve(state, p, theta_mut, nu, cfg.dt, times, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_statistic, Estimate};
    use crate::stick_breaking::UniformTypes;

    #[test]
    fn zero_rate_keeps_types() {
        let mut rng = RngStream::new(1, 0);
        let t = TypeVector::sample(&UniformTypes, 50, &mut rng);
        assert_eq!(mutation_step(&t, 0.0, &UniformTypes, 0.5, &mut rng).unwrap(), t);
    }

    #[test]
    fn long_step_refreshes_everything() {
        let mut rng = RngStream::new(2, 0);
        let t = TypeVector::new(vec![0.25; 20_000]).unwrap();
        let s = mutation_step(&t, 2.0, &UniformTypes, 1e6, &mut rng).unwrap();
        assert!(s.as_slice().iter().all(|&x| x != 0.25));
        assert!(ks_statistic(s.as_slice(), |x| x) < 0.02);
    }

    #[test]
    fn refresh_fraction() {
        let mut rng = RngStream::new(3, 0);
        let n = 100_000;
        let t = TypeVector::new(vec![2.0f64.recip(); n]).unwrap();
        let s = mutation_step(&t, 2.0, &UniformTypes, 0.1, &mut rng).unwrap();
        let hits: Vec<f64> = s.as_slice().iter().map(|&x| if x != 0.5 { 1.0 } else { 0.0 }).collect();
        let e = Estimate::from_samples(&hits);
        assert!(e.within(1.0 - (-0.1f64).exp(), 3.5), "{e:?}");
    }

    #[test]
    fn mutation_rejects_bad_inputs() {
        let mut rng = RngStream::new(0, 0);
        let t = TypeVector::new(vec![0.1]).unwrap();
        assert!(mutation_step(&t, -1.0, &UniformTypes, 0.1, &mut rng).is_err());
        assert!(mutation_step(&t, 1.0, &UniformTypes, 0.0, &mut rng).is_err());
        assert!(TypeVector::new(vec![1.5]).is_err());
    }

    #[test]
    fn pushforward_examples() {
        let s = EtaState::new(
            SimplexPoint::from_weights(vec![1.0]).unwrap(),
            TypeVector::new(vec![0.3]).unwrap(),
        )
        .unwrap();
        let m = pushforward_psi(&s);
        assert_eq!(m.atoms().len(), 1);
        assert_eq!(integrate(&m, |x| x * x), 0.09);

        let s = EtaState::new(
            SimplexPoint::from_weights(vec![0.5, 0.5]).unwrap(),
            TypeVector::new(vec![0.7, 0.7]).unwrap(),
        )
        .unwrap();
        let m = pushforward_psi(&s);
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.total_mass(), 1.0);
        assert_eq!(integrate(&m, |x| x.sin()), 0.7f64.sin());
    }

    #[test]
    fn pushforward_integral_is_weighted_sum() {
        let mut rng = RngStream::new(4, 0);
        let p = ParamSeq::one_parameter(2.0, 30).unwrap();
        let st = ProductState::stationary(&p, &UniformTypes, &mut rng);
        let eta = st.eta();
        let m = pushforward_psi(&eta);
        let direct: f64 = eta
            .weights()
            .weights()
            .iter()
            .zip(eta.types().as_slice())
            .map(|(w, s)| w * s.cos())
            .sum();
        assert_eq!(integrate(&m, f64::cos), direct);
        assert!(integrate(&m, |_| 1.0) <= 1.0);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        assert!(EtaState::new(
            SimplexPoint::from_weights(vec![0.5]).unwrap(),
            TypeVector::new(vec![0.1, 0.2]).unwrap()
        )
        .is_err());
    }

    #[test]
    fn paths_are_reproducible_and_conserve_mass() {
        let p = ParamSeq::one_parameter(2.0, 20).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 0, 1).unwrap();
        let run = || {
            let mut rng = RngStream::new(11, 0);
            simulate_eta(&cfg, &p, 2.0, &UniformTypes, &[0.0, 0.5, 1.0], &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        for s in &a {
            assert!((s.measure.total_mass() + s.measure.remainder() - 1.0).abs() < 1e-9);
        }
        assert_eq!(a[0].t, 0.0);
    }

    #[test]
    fn frozen_types_without_mutation() {
        let p = ParamSeq::one_parameter(2.0, 10).unwrap();
        let cfg = SimConfig::new(1e-2, 0.5, 0, 1).unwrap();
        let mut rng = RngStream::new(12, 0);
        let path = simulate_eta(&cfg, &p, 0.0, &UniformTypes, &[0.0, 0.5], &mut rng).unwrap();
        let locs = |s: &Snapshot| s.measure.atoms().iter().map(|a| a.location).collect::<Vec<_>>();
        assert_eq!(locs(&path[0]), locs(&path[1]));
    }

    #[test]
    fn snapshot_json_shape() {
        let s = Snapshot {
            t: 0.5,
            measure: DiscreteMeasure::new(
                vec![Atom {
                    weight: 0.75,
                    location: 0.25,
                }],
                0.25,
            )
            .unwrap(),
        };
        assert_eq!(s.to_json_line(), r#"{"t":0.5,"atoms":[[0.75,0.25]],"remainder":0.25}"#);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[s.clone(), s]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    #[test]
    fn times_validated() {
        let p = ParamSeq::one_parameter(2.0, 5).unwrap();
        let cfg = SimConfig::new(1e-2, 1.0, 0, 1).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(simulate_eta(&cfg, &p, 1.0, &UniformTypes, &[0.5, 0.2], &mut rng).is_err());
        assert!(simulate_eta(&cfg, &p, 1.0, &UniformTypes, &[2.0], &mut rng).is_err());
    }
}
