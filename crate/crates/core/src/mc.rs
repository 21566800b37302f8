//! Seeded Monte Carlo coincidence experiments.
//!
//! Trials for each analyzer pair are cut into fixed blocks of
//! [`BLOCK_TRIALS`]. Every block owns a ChaCha8 stream selected by
//! `(pair_index, block_index)`, so the counts depend only on the seed: the
//! number of shards and the thread schedule change how blocks are grouped,
//! never which random numbers a trial sees.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::correlate::{
    self, entangled_joint_probs, subensemble_probs_from_cosines, Geometry, Model, OutcomeProbs, PLANE_TOL,
};
use crate::error::{Error, Result};
use crate::qstate::{Sign, UnitAxis};

/// Trials per RNG stream.
pub const BLOCK_TRIALS: u64 = 1 << 16;

/// How the hidden quantization axis is chosen for disentangled pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HiddenAxisMode {
    /// A fresh axis per trial from the geometry's isotropic distribution.
    PerTrial,
    /// One axis for the whole run: a prepared sub-ensemble.
    Fixed(UnitAxis),
}

/// Spin labels emitted by the source along the hidden axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePairing {
    /// `(+, −)` or `(−, +)` with probability ½ each.
    Randomized,
    /// Always `+` on the left and `−` on the right.
    PlusMinus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub model: Model,
    pub geometry: Geometry,
    pub doubled: bool,
    pub analyzer_pairs: Vec<(UnitAxis, UnitAxis)>,
    pub trials_per_pair: u64,
    pub seed: u64,
    pub hidden_axis: HiddenAxisMode,
    pub pairing: SourcePairing,
}

impl ExperimentSpec {
    /// Spec with per-trial hidden axes, randomized source signs and no
    /// angle doubling.
    pub fn new(
        model: Model,
        geometry: Geometry,
        analyzer_pairs: Vec<(UnitAxis, UnitAxis)>,
        trials_per_pair: u64,
        seed: u64,
    ) -> Self {
        Self {
            model,
            geometry,
            doubled: false,
            analyzer_pairs,
            trials_per_pair,
            seed,
            hidden_axis: HiddenAxisMode::PerTrial,
            pairing: SourcePairing::Randomized,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.trials_per_pair == 0 {
            return Err(Error::InvalidExperiment("trials_per_pair must be at least 1".into()));
        }
        if self.analyzer_pairs.is_empty() {
            return Err(Error::InvalidExperiment("analyzer_pairs must not be empty".into()));
        }
        if self.analyzer_pairs.len() as u64 > u32::MAX as u64
            || self.trials_per_pair.div_ceil(BLOCK_TRIALS) > u32::MAX as u64
        {
            return Err(Error::InvalidExperiment(
                "experiment too large for the stream layout".into(),
            ));
        }
        let samples_axes = self.model != Model::Entangled && self.hidden_axis == HiddenAxisMode::PerTrial;
        if samples_axes {
            if self.geometry == Geometry::Sphere3D && self.doubled {
                return Err(Error::DoubledSphere);
            }
            if self.geometry == Geometry::PlanePhoton {
                for (a, b) in &self.analyzer_pairs {
                    let z = a.vector()[2].abs().max(b.vector()[2].abs());
                    if z > PLANE_TOL {
                        return Err(Error::OutOfPlaneAnalyzer(z));
                    }
                }
            }
        }
        Ok(())
    }

    /// Closed-form correlation the simulation estimates for pair `index`.
    pub fn analytic_correlation(&self, index: usize) -> Result<f64> {
        Ok(self.analytic_probs(index)?.correlation())
    }

    /// Closed-form outcome probabilities for pair `index`.
    pub fn analytic_probs(&self, index: usize) -> Result<OutcomeProbs> {
        let (a, b) = self
            .analyzer_pairs
            .get(index)
            .ok_or_else(|| Error::InvalidExperiment(format!("no analyzer pair {index}")))?;
        match self.hidden_axis {
            HiddenAxisMode::PerTrial => correlate::joint_probs(self.model, self.geometry, a, b, self.doubled),
            HiddenAxisMode::Fixed(p) => {
                let e = entangled_joint_probs(a, b, self.doubled);
                let d = disentangled_trial_probs(p.vector(), &a.vector(), &b.vector(), self.doubled, self.pairing);
                Ok(e.blend(&d, self.model.disentangled_fraction()))
            }
        }
    }
}

/// Counts of the four coincidence outcomes for one analyzer pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct CoincidenceCounts {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
}

impl CoincidenceCounts {
    pub fn total(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    pub fn record(&mut self, outcome: (Sign, Sign)) {
        match outcome {
            (Sign::Plus, Sign::Plus) => self.n_pp += 1,
            (Sign::Plus, Sign::Minus) => self.n_pm += 1,
            (Sign::Minus, Sign::Plus) => self.n_mp += 1,
            (Sign::Minus, Sign::Minus) => self.n_mm += 1,
        }
    }

    fn add(&mut self, other: &CoincidenceCounts) {
        self.n_pp += other.n_pp;
        self.n_pm += other.n_pm;
        self.n_mp += other.n_mp;
        self.n_mm += other.n_mm;
    }

    /// Empirical frequencies in `(++, +-, -+, --)` order.
    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.total() as f64;
        [self.n_pp, self.n_pm, self.n_mp, self.n_mm].map(|c| c as f64 / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub e_hat: f64,
    pub std_err: f64,
    pub n: u64,
}

/// `ê = (n++ − n+- − n-+ + n--)/N` with standard error `√((1 − ê²)/N)`.
pub fn estimate_correlation(counts: &CoincidenceCounts) -> Result<CorrelationEstimate> {
    let n = counts.total();
    if n < 2 {
        return Err(Error::TooFewCounts { needed: 2, got: n });
    }
    let same = (counts.n_pp + counts.n_mm) as i128;
    let diff = (counts.n_pm + counts.n_mp) as i128;
    let e_hat = ((same - diff) as f64 / n as f64).clamp(-1.0, 1.0);
    let std_err = ((1.0 - e_hat * e_hat).max(0.0) / n as f64).sqrt();
    Ok(CorrelationEstimate { e_hat, std_err, n })
}

fn sample_direction<R: Rng + ?Sized>(geometry: Geometry, rng: &mut R) -> [f64; 3] {
    match geometry {
        Geometry::Sphere3D => {
            let z: f64 = rng.random_range(-1.0..=1.0);
            let phi: f64 = rng.random_range(0.0..TAU);
            let r = (1.0 - z * z).max(0.0).sqrt();
            let (s, c) = phi.sin_cos();
            [r * c, r * s, z]
        }
        Geometry::PlanePhoton => {
            let phi: f64 = rng.random_range(0.0..TAU);
            let (s, c) = phi.sin_cos();
            [c, s, 0.0]
        }
    }
}

/// Draws a hidden axis: uniform on the sphere (`cos θ` and `φ` uniform) or
/// uniform on the equator circle.
pub fn sample_axis<R: Rng + ?Sized>(geometry: Geometry, rng: &mut R) -> UnitAxis {
    UnitAxis::from_vector(sample_direction(geometry, rng)).expect("sampled direction has unit length")
}

fn dot(u: &[f64; 3], v: &[f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

fn cos_between(u: &[f64; 3], v: &[f64; 3], doubled: bool) -> f64 {
    let c = dot(u, v).clamp(-1.0, 1.0);
    if doubled {
        2.0 * c * c - 1.0
    } else {
        c
    }
}

fn disentangled_trial_probs(
    p: [f64; 3],
    a: &[f64; 3],
    b: &[f64; 3],
    doubled: bool,
    pairing: SourcePairing,
) -> OutcomeProbs {
    let ca = cos_between(a, &p, doubled);
    let cb = cos_between(&p, b, doubled);
    match pairing {
        SourcePairing::Randomized => subensemble_probs_from_cosines(ca, cb),
        SourcePairing::PlusMinus => {
            // left spin is + along p̂, right spin is −
            let l_plus = 0.5 * (1.0 + ca);
            let r_plus = 0.5 * (1.0 - cb);
            OutcomeProbs {
                p_pp: l_plus * r_plus,
                p_pm: l_plus * (1.0 - r_plus),
                p_mp: (1.0 - l_plus) * r_plus,
                p_mm: (1.0 - l_plus) * (1.0 - r_plus),
            }
        }
    }
}

/// Inverse-CDF draw over `(++, +-, -+, --)`.
fn draw_outcome<R: Rng + ?Sized>(probs: &OutcomeProbs, rng: &mut R) -> (Sign, Sign) {
    let u: f64 = rng.random();
    let mut acc = probs.p_pp;
    if u < acc {
        return (Sign::Plus, Sign::Plus);
    }
    acc += probs.p_pm;
    if u < acc {
        return (Sign::Plus, Sign::Minus);
    }
    acc += probs.p_mp;
    if u < acc {
        return (Sign::Minus, Sign::Plus);
    }
    (Sign::Minus, Sign::Minus)
}

/// One coincidence outcome for a pair with hidden axis `p_hat`.
///
/// Entangled pairs ignore `p_hat`. `Mixture(λ)` first decides with
/// probability λ that the pair is disentangled.
pub fn sample_outcome_pair<R: Rng + ?Sized>(
    model: Model,
    p_hat: &UnitAxis,
    a: &UnitAxis,
    b: &UnitAxis,
    doubled: bool,
    rng: &mut R,
) -> (Sign, Sign) {
    sample_outcome_pair_with(model, p_hat, a, b, doubled, SourcePairing::Randomized, rng)
}

pub fn sample_outcome_pair_with<R: Rng + ?Sized>(
    model: Model,
    p_hat: &UnitAxis,
    a: &UnitAxis,
    b: &UnitAxis,
    doubled: bool,
    pairing: SourcePairing,
    rng: &mut R,
) -> (Sign, Sign) {
    let disentangled = match model {
        Model::Entangled => false,
        Model::Disentangled => true,
        Model::Mixture(l) => rng.random::<f64>() < l,
    };
    let probs = if disentangled {
        disentangled_trial_probs(p_hat.vector(), &a.vector(), &b.vector(), doubled, pairing)
    } else {
        entangled_joint_probs(a, b, doubled)
    };
    draw_outcome(&probs, rng)
}

fn block_rng(seed: u64, pair: usize, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((pair as u64) << 32) | block);
    rng
}

fn run_block(spec: &ExperimentSpec, pair: usize, block: u64) -> CoincidenceCounts {
    let (a, b) = &spec.analyzer_pairs[pair];
    let (av, bv) = (a.vector(), b.vector());
    let start = block * BLOCK_TRIALS;
    let n = BLOCK_TRIALS.min(spec.trials_per_pair - start);
    let mut rng = block_rng(spec.seed, pair, block);
    let entangled = entangled_joint_probs(a, b, spec.doubled);

    let mut counts = CoincidenceCounts::default();
    for _ in 0..n {
        let disentangled = match spec.model {
            Model::Entangled => false,
            Model::Disentangled => true,
            Model::Mixture(l) => rng.random::<f64>() < l,
        };
        let outcome = if disentangled {
            let p = match spec.hidden_axis {
                HiddenAxisMode::PerTrial => sample_direction(spec.geometry, &mut rng),
                HiddenAxisMode::Fixed(p) => p.vector(),
            };
            draw_outcome(
                &disentangled_trial_probs(p, &av, &bv, spec.doubled, spec.pairing),
                &mut rng,
            )
        } else {
            draw_outcome(&entangled, &mut rng)
        };
        counts.record(outcome);
    }
    counts
}

/// Runs the experiment using one shard per rayon worker thread.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<CoincidenceCounts>> {
    run_experiment_sharded(spec, rayon::current_num_threads())
}

/// Runs every analyzer pair for `trials_per_pair` trials, with the work split
/// into `shards` contiguous groups of blocks executed in parallel.
///
/// Output is identical for every `shards >= 1`.
pub fn run_experiment_sharded(spec: &ExperimentSpec, shards: usize) -> Result<Vec<CoincidenceCounts>> {
    spec.validate()?;
    if shards == 0 {
        return Err(Error::InvalidExperiment("shard count must be at least 1".into()));
    }
    let blocks_per_pair = spec.trials_per_pair.div_ceil(BLOCK_TRIALS);
    let work: Vec<(usize, u64)> = (0..spec.analyzer_pairs.len())
        .flat_map(|p| (0..blocks_per_pair).map(move |b| (p, b)))
        .collect();
    let chunk = work.len().div_ceil(shards).max(1);

    let partials: Vec<Vec<(usize, CoincidenceCounts)>> = work
        .par_chunks(chunk)
        .map(|items| items.iter().map(|&(p, b)| (p, run_block(spec, p, b))).collect())
        .collect();

    let mut totals = vec![CoincidenceCounts::default(); spec.analyzer_pairs.len()];
    for shard in &partials {
        for (p, c) in shard {
            totals[*p].add(c);
        }
    }
    Ok(totals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_3;

    fn within(observed: f64, expected: f64, p: f64, n: u64, k: f64) -> bool {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        (observed - expected).abs() <= k * se.max(1e-15)
    }

    #[test]
    fn sphere_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000usize;
        let mut sum = [0.0f64; 3];
        let mut sum_sq = [0.0f64; 3];
        let mut z2 = 0.0;
        let mut z4 = 0.0;
        for _ in 0..n {
            let v = sample_axis(Geometry::Sphere3D, &mut rng).vector();
            for k in 0..3 {
                sum[k] += v[k];
                sum_sq[k] += v[k] * v[k];
            }
            z2 += v[2] * v[2];
            z4 += v[2].powi(4);
        }
        let nf = n as f64;
        for k in 0..3 {
            let mean = sum[k] / nf;
            let var = sum_sq[k] / nf - mean * mean;
            assert!(mean.abs() < 4.0 * (var / nf).sqrt(), "component {k} mean {mean}");
        }
        let m2 = z2 / nf;
        let se = ((z4 / nf - m2 * m2) / nf).sqrt();
        assert!((m2 - 1.0 / 3.0).abs() < 4.0 * se, "<z^2> = {m2}");
    }

    #[test]
    fn plane_samples_have_zero_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let a = sample_axis(Geometry::PlanePhoton, &mut rng);
            assert_eq!(a.vector()[2], 0.0);
        }
    }

    #[test]
    fn entangled_aligned_analyzers_never_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = UnitAxis::in_plane(0.4);
        for _ in 0..10_000 {
            let (s1, s2) = sample_outcome_pair(Model::Entangled, &UnitAxis::z(), &a, &a, false, &mut rng);
            assert_ne!(s1, s2);
        }
    }

    #[test]
    fn disentangled_perpendicular_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000u64;
        let mut c = CoincidenceCounts::default();
        for _ in 0..n {
            c.record(sample_outcome_pair(
                Model::Disentangled,
                &UnitAxis::z(),
                &UnitAxis::x(),
                &UnitAxis::new(0.5, 1.0),
                false,
                &mut rng,
            ));
        }
        for f in c.frequencies() {
            assert!(within(f, 0.25, 0.25, n, 4.0), "frequency {f}");
        }
    }

    #[test]
    fn mixture_zero_matches_entangled() {
        let a = UnitAxis::in_plane(0.0);
        let b = UnitAxis::in_plane(1.0);
        let n = 100_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut c = CoincidenceCounts::default();
        for _ in 0..n {
            let p = sample_axis(Geometry::PlanePhoton, &mut rng);
            c.record(sample_outcome_pair(Model::Mixture(0.0), &p, &a, &b, false, &mut rng));
        }
        let want = entangled_joint_probs(&a, &b, false).as_array();
        for (f, p) in c.frequencies().iter().zip(want) {
            assert!(within(*f, p, p, n, 4.0), "frequency {f} vs {p}");
        }
    }

    #[test]
    fn estimator_examples() {
        let e = estimate_correlation(&CoincidenceCounts {
            n_pp: 0,
            n_pm: 500,
            n_mp: 500,
            n_mm: 0,
        })
        .unwrap();
        assert_eq!(e.e_hat, -1.0);
        assert_eq!(e.std_err, 0.0);
        let e = estimate_correlation(&CoincidenceCounts {
            n_pp: 250,
            n_pm: 250,
            n_mp: 250,
            n_mm: 250,
        })
        .unwrap();
        assert_eq!(e.e_hat, 0.0);
        assert_abs_diff_eq!(e.std_err, (1.0f64 / 1000.0).sqrt(), epsilon = 1e-15);
        assert_eq!(e.n, 1000);
        assert!(matches!(
            estimate_correlation(&CoincidenceCounts {
                n_pp: 1,
                ..Default::default()
            }),
            Err(Error::TooFewCounts { .. })
        ));
    }

    fn pair_at(theta_ab: f64) -> (UnitAxis, UnitAxis) {
        (UnitAxis::in_plane(0.0), UnitAxis::in_plane(theta_ab))
    }

    #[test]
    fn validation() {
        let ok = ExperimentSpec::new(Model::Entangled, Geometry::PlanePhoton, vec![pair_at(0.3)], 10, 1);
        assert!(ok.validate().is_ok());
        let mut s = ok.clone();
        s.trials_per_pair = 0;
        assert!(matches!(s.validate(), Err(Error::InvalidExperiment(_))));
        let mut s = ok.clone();
        s.analyzer_pairs.clear();
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.model = Model::Disentangled;
        s.analyzer_pairs = vec![(UnitAxis::z(), UnitAxis::x())];
        assert!(matches!(s.validate(), Err(Error::OutOfPlaneAnalyzer(_))));
        let mut s = ok.clone();
        s.model = Model::Mixture(0.5);
        s.geometry = Geometry::Sphere3D;
        s.doubled = true;
        assert_eq!(s.validate(), Err(Error::DoubledSphere));
        s.hidden_axis = HiddenAxisMode::Fixed(UnitAxis::z());
        assert!(s.validate().is_ok());
        let mut s = ok;
        s.model = Model::Mixture(1.5);
        assert!(s.validate().is_err());
    }

    #[test]
    fn counts_are_conserved_and_shard_invariant() {
        let mut spec = ExperimentSpec::new(
            Model::Mixture(0.4),
            Geometry::PlanePhoton,
            vec![pair_at(0.0), pair_at(1.0), pair_at(2.5)],
            3 * BLOCK_TRIALS + 123,
            99,
        );
        spec.doubled = true;
        let base = run_experiment_sharded(&spec, 1).unwrap();
        for c in &base {
            assert_eq!(c.total(), spec.trials_per_pair);
        }
        for shards in [2, 3, 7, 64] {
            assert_eq!(run_experiment_sharded(&spec, shards).unwrap(), base);
        }
        assert_eq!(run_experiment(&spec).unwrap(), base);
        spec.seed = 100;
        assert_ne!(run_experiment(&spec).unwrap(), base);
    }

    #[test]
    fn entangled_and_planar_runs_match_closed_forms() {
        let n = 1_000_000;
        let spec = ExperimentSpec::new(Model::Entangled, Geometry::PlanePhoton, vec![pair_at(FRAC_PI_3)], n, 21);
        let c = run_experiment(&spec).unwrap()[0];
        assert!(within(c.n_pm as f64 / n as f64, 0.375, 0.375, n, 4.0));
        let est = estimate_correlation(&c).unwrap();
        assert!((est.e_hat + 0.5).abs() < 4.0 * est.std_err);

        let spec = ExperimentSpec::new(
            Model::Disentangled,
            Geometry::PlanePhoton,
            vec![pair_at(FRAC_PI_3)],
            n,
            22,
        );
        let c = run_experiment(&spec).unwrap()[0];
        assert!(within(c.n_pm as f64 / n as f64, 0.3125, 0.3125, n, 4.0));
    }

    #[test]
    fn fixed_axis_sub_ensemble() {
        let n = 400_000;
        let p = UnitAxis::new(0.9, 0.2);
        for pairing in [SourcePairing::Randomized, SourcePairing::PlusMinus] {
            let mut spec = ExperimentSpec::new(
                Model::Disentangled,
                Geometry::Sphere3D,
                vec![(UnitAxis::new(0.3, 1.0), UnitAxis::new(2.0, 4.0))],
                n,
                4,
            );
            spec.hidden_axis = HiddenAxisMode::Fixed(p);
            spec.pairing = pairing;
            let c = run_experiment(&spec).unwrap()[0];
            let want = spec.analytic_probs(0).unwrap();
            for (f, q) in c.frequencies().iter().zip(want.as_array()) {
                assert!(within(*f, q, q, n, 4.0), "{pairing:?}: {f} vs {q}");
            }
            let est = estimate_correlation(&c).unwrap();
            let e = correlate::subensemble_correlation(&p, &spec.analyzer_pairs[0].0, &spec.analyzer_pairs[0].1);
            assert!((est.e_hat - e).abs() < 4.0 * est.std_err);
        }
    }
}
