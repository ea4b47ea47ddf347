//! Stick-breaking between `[0,1)^n` and the simplex, GEM and
//! Poisson–Dirichlet samplers, random Dirichlet measures and the Ewens
//! sampling formula.
//!
//! Infinite sequences are represented by their first `n` entries plus the
//! mass that the truncation leaves unassigned (`remainder`).

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::stats::kahan_sum;
use crate::wf_diffusion::sample_beta;

/// Mass-conservation tolerance of [`SimplexPoint`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Largest remainder accepted by [`size_biased_permutation`].
pub const MAX_SIZE_BIAS_REMAINDER: f64 = 0.01;

/// Stick fractions `u_1..u_n`, each in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StickPoint {
    u: Vec<f64>,
}

impl StickPoint {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = u.iter().enumerate().find(|(_, v)| !(0.0..1.0).contains(*v)) {
            return Err(invalid("u", format!("stick {} = {v} is outside [0,1)", i + 1)));
        }
        Ok(Self { u })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.u
    }
}

/// A truncated point of the closed simplex: weights `y_1..y_n` and the
/// unassigned mass `remainder`, with `Σ y_i + remainder = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexPoint {
    y: Vec<f64>,
    remainder: f64,
}

impl SimplexPoint {
    pub fn new(y: Vec<f64>, remainder: f64) -> Result<Self> {
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid("y", format!("weight {} = {v} is not a non-negative number", i + 1)));
        }
        if !(remainder >= 0.0) {
            return Err(invalid("remainder", format!("must be non-negative, got {remainder}")));
        }
        let total = kahan_sum(y.iter().copied()) + remainder;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid("y", format!("weights plus remainder sum to {total}, not 1")));
        }
        Ok(Self { y, remainder })
    }

    /// Build from weights alone, assigning `1 - Σ y` to the remainder.
    pub fn from_weights(y: Vec<f64>) -> Result<Self> {
        let s = kahan_sum(y.iter().copied());
        let remainder = if s > 1.0 && s - 1.0 <= MASS_TOLERANCE { 0.0 } else { 1.0 - s };
        Self::new(y, remainder)
    }

    pub(crate) fn from_parts_unchecked(y: Vec<f64>, remainder: f64) -> Self {
        Self { y, remainder }
    }

    pub fn weights(&self) -> &[f64] {
        &self.y
    }

    pub fn remainder(&self) -> f64 {
        self.remainder
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Tail masses `r_k = 1 - Σ_{l≤k} y_l` for `k = 0..=n`, accumulated from
    /// the stored remainder backwards so no cancellation occurs near the
    /// boundary.
    pub fn tail_masses(&self) -> Vec<f64> {
        tail_masses(&self.y, self.remainder)
    }

    /// Every partial sum up to index `n` is strictly below one.
    pub fn is_interior(&self) -> bool {
        self.remainder > 0.0
    }
}

pub(crate) fn tail_masses(y: &[f64], remainder: f64) -> Vec<f64> {
    let n = y.len();
    let mut r = vec![0.0; n + 1];
    r[n] = remainder;
    let mut c = 0.0;
    for k in (0..n).rev() {
        // compensated running sum r_k = r_{k+1} + y_{k+1}
        let add = y[k] - c;
        let t = r[k + 1] + add;
        c = (t - r[k + 1]) - add;
        r[k] = t;
    }
    r
}

/// GEM parameters: `0 <= alpha < 1`, `theta > -alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GemParams {
    alpha: f64,
    theta: f64,
}

impl GemParams {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid("alpha", format!("must lie in [0,1), got {alpha}")));
        }
        if !(theta + alpha > 0.0 && theta.is_finite()) {
            return Err(invalid("theta", format!("need theta > -alpha, got theta={theta}, alpha={alpha}")));
        }
        Ok(Self { alpha, theta })
    }

    pub fn one_parameter(theta: f64) -> Result<Self> {
        Self::new(0.0, theta)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Shapes of the `k`-th stick (1-based): Beta(1 - α, θ + kα).
    pub fn stick_shape(&self, k: usize) -> (f64, f64) {
        (1.0 - self.alpha, self.theta + k as f64 * self.alpha)
    }
}

/// Stick-breaking map `y_i = u_i Π_{l<i} (1 - u_l)`, remainder `Π_{l≤n}(1 - u_l)`.
pub fn phi(x: &StickPoint) -> SimplexPoint {
    phi_closed(&x.u)
}

/// [`phi`] on the closure `[0, 1]^n`; a stick equal to one exhausts the mass.
pub fn phi_closed(u: &[f64]) -> SimplexPoint {
    let mut y = Vec::with_capacity(u.len());
    let mut rest = 1.0;
    for &ui in u {
        y.push(ui * rest);
        rest *= 1.0 - ui;
    }
    SimplexPoint::from_parts_unchecked(y, rest)
}

/// Inverse stick-breaking `u_i = y_i / (1 - Σ_{l<i} y_l)`.
///
/// Fails with [`Error::BoundaryPoint`] carrying the 1-based index of the
/// first coordinate whose preceding partial sum has reached one.
pub fn phi_inverse(y: &SimplexPoint) -> Result<StickPoint> {
    let r = y.tail_masses();
    let mut u = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        // u_i is a genuine stick in [0,1) only while r_i > 0
        if !(r[i + 1] > 0.0) {
            return Err(Error::BoundaryPoint { index: i + 2 });
        }
        u.push((y.y[i] / r[i]).min(1.0 - f64::EPSILON / 2.0));
    }
    Ok(StickPoint { u })
}

/// Independent GEM sticks `V_k ~ Beta(1 - α, θ + kα)`, `k = 1..n`.
pub fn sample_gem_sticks(p: &GemParams, n: usize, rng: &mut RngStream) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let (s1, s2) = p.stick_shape(k);
            sample_beta(s1, s2, rng)
        })
        .collect()
}

/// Exact draw of the first `n` GEM weights.
pub fn sample_gem(p: &GemParams, n: usize, rng: &mut RngStream) -> SimplexPoint {
    phi_closed(&sample_gem_sticks(p, n, rng))
}

/// Weights sorted in descending order (stable, so ties keep their original
/// order); the remainder is unchanged.
pub fn descending_order(y: &SimplexPoint) -> SimplexPoint {
    let mut w = y.y.clone();
    w.sort_by(|a, b| b.total_cmp(a));
    SimplexPoint::from_parts_unchecked(w, y.remainder)
}

/// Size-biased random reordering of the weights.
///
/// Successive picks without replacement with probability proportional to
/// weight have the same law as sorting independent exponential clocks
/// `E_i / w_i` in increasing order; the latter is used. Zero weights come
/// last in their original order.
pub fn size_biased_permutation(y: &SimplexPoint, rng: &mut RngStream) -> Result<SimplexPoint> {
    if y.remainder > MAX_SIZE_BIAS_REMAINDER {
        return Err(Error::MassDeficit {
            remainder: y.remainder,
            limit: MAX_SIZE_BIAS_REMAINDER,
        });
    }
    let mut keyed: Vec<(f64, usize)> = y
        .y
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let e = rng.exp1();
            (if w > 0.0 { e / w } else { f64::INFINITY }, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let w = keyed.into_iter().map(|(_, i)| y.y[i]).collect();
    Ok(SimplexPoint::from_parts_unchecked(w, y.remainder))
}

/// A diffuse probability law on the type space `S = [0, 1]`.
pub trait TypeLaw: Sync {
    fn sample(&self, rng: &mut RngStream) -> f64;
}

/// Uniform law on `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UniformTypes;

impl UniformTypes {
    pub fn cdf(&self, s: f64) -> f64 {
        s.clamp(0.0, 1.0)
    }
}

impl TypeLaw for UniformTypes {
    fn sample(&self, rng: &mut RngStream) -> f64 {
        rng.uniform()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub weight: f64,
    pub location: f64,
}

/// Finitely many weighted atoms on `S` plus the unassigned remainder mass.
/// Coincident locations are kept as separate atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
    remainder: f64,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>, remainder: f64) -> Result<Self> {
        if atoms.iter().any(|a| !(a.weight >= 0.0)) {
            return Err(invalid("atoms", "weights must be non-negative"));
        }
        let mass = kahan_sum(atoms.iter().map(|a| a.weight));
        if !(remainder >= 0.0) || mass + remainder > 1.0 + 1e-9 {
            return Err(invalid("atoms", format!("total mass {mass} + remainder {remainder} exceeds 1")));
        }
        Ok(Self { atoms, remainder })
    }

    pub(crate) fn from_parts_unchecked(atoms: Vec<Atom>, remainder: f64) -> Self {
        Self { atoms, remainder }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn remainder(&self) -> f64 {
        self.remainder
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.atoms.iter().map(|a| a.weight))
    }

    /// Pick an atom index with probability equal to its weight; `None` means
    /// the draw fell into the remainder.
    pub fn sample_atom(&self, rng: &mut RngStream) -> Option<usize> {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            acc += a.weight;
            if u < acc {
                return Some(i);
            }
        }
        None
    }
}

/// Random Dirichlet(θ, α, ν) measure: GEM weights paired with i.i.d. `nu`
/// locations.
pub fn sample_dirichlet_measure(
    p: &GemParams,
    nu: &impl TypeLaw,
    n: usize,
    rng: &mut RngStream,
) -> DiscreteMeasure {
    let w = sample_gem(p, n, rng);
    let atoms = w
        .y
        .iter()
        .map(|&weight| Atom {
            weight,
            location: nu.sample(rng),
        })
        .collect();
    DiscreteMeasure::from_parts_unchecked(atoms, w.remainder)
}

/// Ewens sampling formula: probability that a sample of `n = Σ sizes`
/// draws from a Dirichlet(θ, ν) population has allelic partition with the
/// given block sizes,
///
/// `n! / θ^(n) · Π_j (θ/j)^{a_j} / a_j!`,
///
/// where `θ^(n)` is the rising factorial and `a_j` the number of blocks of
/// size `j`.
pub fn esf_probability(block_sizes: &[usize], theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(invalid("theta", format!("must be positive, got {theta}")));
    }
    if block_sizes.is_empty() {
        return Err(Error::InvalidPartition("no blocks".into()));
    }
    if block_sizes.contains(&0) {
        return Err(Error::InvalidPartition("block of size zero".into()));
    }
    let n: usize = block_sizes.iter().sum();
    let mut counts = vec![0usize; n + 1];
    for &s in block_sizes {
        counts[s] += 1;
    }
    let ln_fact = |m: usize| (1..=m).map(|k| (k as f64).ln()).sum::<f64>();
    let mut ln_p = ln_fact(n) - (0..n).map(|k| (theta + k as f64).ln()).sum::<f64>();
    for (j, &a) in counts.iter().enumerate().skip(1) {
        if a > 0 {
            ln_p += a as f64 * (theta / j as f64).ln() - ln_fact(a);
        }
    }
    Ok(ln_p.exp())
}

/// All partitions of `n` as non-increasing block-size lists, in reverse
/// lexicographic order (`[n]` first, `[1, …, 1]` last).
pub fn integer_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=rest.min(max)).rev() {
            cur.push(part);
            rec(rest - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, n, &mut Vec::new(), &mut out);
    }
    out
}

/// Allelic partition (non-increasing block sizes) of a sample of atom
/// labels; `None` entries are distinct fresh types.
pub fn allelic_partition(labels: &[Option<usize>]) -> Vec<usize> {
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut sizes = Vec::new();
    for l in labels {
        match l {
            Some(id) => match blocks.iter_mut().find(|(k, _)| k == id) {
                Some((_, c)) => *c += 1,
                None => blocks.push((*id, 1)),
            },
            None => sizes.push(1),
        }
    }
    sizes.extend(blocks.into_iter().map(|(_, c)| c));
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn phi_halving() {
        let y = phi(&StickPoint::new(vec![0.5, 0.5, 0.5]).unwrap());
        assert_eq!(y.weights(), &[0.5, 0.25, 0.125]);
        assert_eq!(y.remainder(), 0.125);
    }

    #[test]
    fn phi_first_stick_zero() {
        let y = phi(&StickPoint::new(vec![0.0, 0.3]).unwrap());
        assert!(close(y.weights(), &[0.0, 0.3], 1e-15));
        assert!((y.remainder() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn phi_inverse_halving() {
        let y = SimplexPoint::new(vec![0.5, 0.25, 0.125], 0.125).unwrap();
        assert_eq!(phi_inverse(&y).unwrap().as_slice(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn phi_inverse_rejects_exhausted_mass() {
        let y = SimplexPoint::new(vec![1.0, 0.0], 0.0).unwrap();
        assert_eq!(phi_inverse(&y), Err(Error::BoundaryPoint { index: 2 }));
    }

    #[test]
    fn stick_point_validation() {
        assert!(StickPoint::new(vec![0.0, 0.99]).is_ok());
        assert!(StickPoint::new(vec![1.0]).is_err());
        assert!(StickPoint::new(vec![-0.1]).is_err());
    }

    #[test]
    fn simplex_point_validation() {
        assert!(SimplexPoint::new(vec![0.5, 0.5], 0.0).is_ok());
        assert!(SimplexPoint::new(vec![0.5, 0.4], 0.0).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1], 0.0).is_err());
        let p = SimplexPoint::from_weights(vec![0.2, 0.3]).unwrap();
        assert!((p.remainder() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gem_params_validation() {
        assert!(GemParams::new(0.0, 1.0).is_ok());
        assert!(GemParams::new(0.5, -0.4).is_ok());
        assert!(GemParams::new(0.5, -0.5).is_err());
        assert!(GemParams::new(1.0, 1.0).is_err());
        assert!(GemParams::one_parameter(0.0).is_err());
    }

    #[test]
    fn tail_masses_match_products() {
        let x = StickPoint::new(vec![0.3, 0.6, 0.1, 0.9]).unwrap();
        let y = phi(&x);
        let r = y.tail_masses();
        let mut prod = 1.0;
        for (k, &u) in x.as_slice().iter().enumerate() {
            assert!((r[k] - prod).abs() < 1e-15);
            prod *= 1.0 - u;
        }
        assert!((r[4] - prod).abs() < 1e-15);
    }

    #[test]
    fn descending_order_examples() {
        let y = SimplexPoint::from_weights(vec![0.1, 0.5, 0.2]).unwrap();
        let d = descending_order(&y);
        assert_eq!(d.weights(), &[0.5, 0.2, 0.1]);
        assert_eq!(d.remainder(), y.remainder());
        assert_eq!(descending_order(&d), d);
    }

    #[test]
    fn size_biased_single_atom() {
        let y = SimplexPoint::new(vec![1.0], 0.0).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert_eq!(size_biased_permutation(&y, &mut rng).unwrap(), y);
    }

    #[test]
    fn size_biased_rejects_heavy_truncation() {
        let y = SimplexPoint::new(vec![0.5], 0.5).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(
            size_biased_permutation(&y, &mut rng),
            Err(Error::MassDeficit { .. })
        ));
    }

    #[test]
    fn size_biased_two_equal_atoms() {
        let y = SimplexPoint::new(vec![0.5, 0.5 - 1e-9], 1e-9).unwrap();
        let mut rng = RngStream::new(4, 0);
        let n = 100_000;
        let first = (0..n)
            .filter(|_| size_biased_permutation(&y, &mut rng).unwrap().weights()[0] == 0.5)
            .count() as f64
            / n as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((first - 0.5).abs() < 3.0 * sigma, "{first}");
    }

    #[test]
    fn size_biased_matches_sequential_picks() {
        // exact first-pick probabilities are the weights themselves
        let y = SimplexPoint::new(vec![0.6, 0.3, 0.1], 0.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        let n = 200_000;
        let mut counts = [0usize; 3];
        let mut second_after_first0 = [0usize; 3];
        for _ in 0..n {
            let s = size_biased_permutation(&y, &mut rng).unwrap();
            let idx = |w: f64| y.weights().iter().position(|&v| v == w).unwrap();
            let i0 = idx(s.weights()[0]);
            counts[i0] += 1;
            if i0 == 0 {
                second_after_first0[idx(s.weights()[1])] += 1;
            }
        }
        for (c, w) in counts.iter().zip([0.6, 0.3, 0.1]) {
            let p = *c as f64 / n as f64;
            assert!((p - w).abs() < 3.0 * (w * (1.0 - w) / n as f64).sqrt());
        }
        // P(second = index 1 | first = index 0) = 0.3 / 0.4
        let m = counts[0] as f64;
        let q = second_after_first0[1] as f64 / m;
        assert!((q - 0.75).abs() < 3.0 * (0.75 * 0.25 / m).sqrt());
    }

    #[test]
    fn esf_small_cases() {
        assert_eq!(esf_probability(&[1], 2.5).unwrap(), 1.0);
        let same = esf_probability(&[2], 1.0).unwrap();
        assert!((same - 0.5).abs() < 1e-15);
        let total: f64 = integer_partitions(3)
            .iter()
            .map(|p| esf_probability(p, 2.0).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(esf_probability(&[], 1.0).is_err());
        assert!(esf_probability(&[2, 0], 1.0).is_err());
        assert!(esf_probability(&[2], 0.0).is_err());
    }

    #[test]
    fn partitions_counts() {
        let counts: Vec<usize> = (1..=8).map(|n| integer_partitions(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 3, 5, 7, 11, 15, 22]);
        assert_eq!(integer_partitions(3), vec![vec![3], vec![2, 1], vec![1, 1, 1]]);
    }

    #[test]
    fn allelic_partition_of_labels() {
        let p = allelic_partition(&[Some(3), Some(1), Some(3), None, Some(1), Some(3)]);
        assert_eq!(p, vec![3, 2, 1]);
    }

    #[test]
    fn dirichlet_measure_remainder_is_small() {
        let p = GemParams::one_parameter(1.0).unwrap();
        let mut rng = RngStream::new(8, 0);
        let worst = (0..1000)
            .map(|_| sample_dirichlet_measure(&p, &UniformTypes, 60, &mut rng).remainder())
            .fold(0.0, f64::max);
        // E[remainder] = 2^-60; a draw above 1e-6 is astronomically unlikely
        assert!(worst < 1e-6, "{worst}");
    }

    proptest! {
        #[test]
        fn phi_round_trip(u in proptest::collection::vec(0.0f64..0.999, 8)) {
            let x = StickPoint::new(u).unwrap();
            let y = phi(&x);
            prop_assert!((kahan_sum(y.weights().iter().copied()) + y.remainder() - 1.0).abs() < 1e-12);
            let back = phi_inverse(&y).unwrap();
            prop_assert!(close(back.as_slice(), x.as_slice(), 1e-12));
        }

        #[test]
        fn phi_inverse_round_trip_on_gem(seed in 0u64..1000, theta in 0.3f64..3.0) {
            let p = GemParams::one_parameter(theta).unwrap();
            let y = sample_gem(&p, 12, &mut RngStream::new(seed, 0));
            if let Ok(x) = phi_inverse(&y) {
                let z = phi(&x);
                prop_assert!(close(z.weights(), y.weights(), 1e-12));
                prop_assert!((z.remainder() - y.remainder()).abs() < 1e-12);
            }
        }
    }
}
