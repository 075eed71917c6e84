//! Generic plus individual classifier fusion with supervised online updates.
//!
//! The individual weight ramps linearly, `α = min(1, n_rep / ramp)`, and each
//! classifier's distance vector is divided by its own sum before mixing.

use crate::dsp::Epoch;
use crate::error::{Error, Result};
use crate::mdm::{DistanceVector, MdmModel};
use crate::spd::{distances_from, geodesic, geometric_mean, MeanConfig, SpdMatrix};

/// Repetitions after which the generic model no longer contributes.
pub const DEFAULT_RAMP: usize = 40;

/// How the individual class means absorb new trials.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum UpdateRule {
    /// Geodesic step `M ← geodesic(M, C, 1/(n+1))`; constant memory.
    #[default]
    Incremental,
    /// Keep every feature and recompute the geometric mean after each absorb.
    BatchRefit(MeanConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedClassifier {
    generic: MdmModel,
    individual: Vec<Option<SpdMatrix>>,
    counts: Vec<usize>,
    history: Vec<Vec<SpdMatrix>>,
    rule: UpdateRule,
    n_rep: usize,
    ramp: usize,
}

impl FusedClassifier {
    /// Naive start: no individual data, `α = 0`.
    pub fn new(generic: MdmModel, ramp: usize) -> Result<Self> {
        if ramp == 0 {
            return Err(Error::contract("ramp must be >= 1"));
        }
        let k = generic.class_ids().len();
        Ok(Self {
            generic,
            individual: vec![None; k],
            counts: vec![0; k],
            history: vec![Vec::new(); k],
            rule: UpdateRule::Incremental,
            n_rep: 0,
            ramp,
        })
    }

    pub fn with_rule(mut self, rule: UpdateRule) -> Self {
        self.rule = rule;
        self
    }

    /// Restores a saved state.
    pub fn from_parts(
        generic: MdmModel,
        individual: Vec<Option<SpdMatrix>>,
        counts: Vec<usize>,
        n_rep: usize,
        ramp: usize,
    ) -> Result<Self> {
        let mut fc = Self::new(generic, ramp)?;
        if individual.len() != fc.individual.len() || counts.len() != fc.counts.len() {
            return Err(Error::contract("individual state does not match the generic classes"));
        }
        let dim = fc.generic.dim();
        for (m, &n) in individual.iter().zip(&counts) {
            if m.is_some() != (n > 0) {
                return Err(Error::contract("individual means present iff their count is positive"));
            }
            if m.as_ref().is_some_and(|m| m.dim() != dim) {
                return Err(Error::contract("individual mean has the wrong dimension"));
            }
        }
        fc.individual = individual;
        fc.counts = counts;
        fc.n_rep = n_rep;
        Ok(fc)
    }

    /// Non-naive start: absorbs prior labelled features and raises `n_rep` to
    /// `min(ramp, fewest prior trials in any class)`.
    pub fn with_prior(mut self, prior: &[(u32, SpdMatrix)]) -> Result<Self> {
        for (z, c) in prior {
            self.absorb_feature(c, *z)?;
        }
        let fewest = self.counts.iter().copied().min().unwrap_or(0);
        self.n_rep = self.n_rep.max(fewest.min(self.ramp));
        Ok(self)
    }

    pub fn generic(&self) -> &MdmModel {
        &self.generic
    }

    pub fn n_rep(&self) -> usize {
        self.n_rep
    }

    pub fn ramp(&self) -> usize {
        self.ramp
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn individual_means(&self) -> &[Option<SpdMatrix>] {
        &self.individual
    }

    pub fn alpha(&self) -> f64 {
        (self.n_rep as f64 / self.ramp as f64).min(1.0)
    }

    /// The individual model once every class has at least one trial.
    pub fn individual(&self) -> Option<MdmModel> {
        let means: Option<Vec<SpdMatrix>> = self.individual.iter().cloned().collect();
        MdmModel::from_means(
            self.generic.class_ids().to_vec(),
            means?,
            self.counts.clone(),
            self.generic.recipe().clone(),
        )
        .ok()
    }

    /// Marks one supervised repetition as completed.
    pub fn complete_repetition(&mut self) {
        self.n_rep += 1;
    }

    pub fn fused_distances_to(&self, c: &SpdMatrix) -> Result<DistanceVector> {
        let ids = self.generic.class_ids().to_vec();
        let alpha = self.alpha();
        let generic = normalise(self.generic.distances_to(c)?.values);
        if alpha == 0.0 {
            return DistanceVector::new(ids, generic);
        }
        let means: Option<Vec<SpdMatrix>> = self.individual.iter().cloned().collect();
        let means = means.ok_or_else(|| {
            Error::contract(format!(
                "individual weight {alpha} > 0 but some class has no individual trials"
            ))
        })?;
        let individual = normalise(distances_from(c, &means)?);
        let fused = generic
            .iter()
            .zip(&individual)
            .map(|(g, i)| (1.0 - alpha) * g + alpha * i)
            .collect();
        DistanceVector::new(ids, fused)
    }

    pub fn fused_distances(&self, e: &Epoch) -> Result<DistanceVector> {
        self.fused_distances_to(&self.generic.features(e)?)
    }

    pub fn predict(&self, e: &Epoch) -> Result<u32> {
        Ok(self.fused_distances(e)?.argmin())
    }

    pub fn absorb(&mut self, e: &Epoch, label: u32) -> Result<()> {
        let c = self.generic.features(e)?;
        self.absorb_feature(&c, label)
    }

    /// Merges one labelled feature into its class's individual mean.
    pub fn absorb_feature(&mut self, c: &SpdMatrix, label: u32) -> Result<()> {
        let k = self
            .generic
            .class_ids()
            .iter()
            .position(|&z| z == label)
            .ok_or_else(|| Error::contract(format!("label {label} is not a model class")))?;
        if c.dim() != self.generic.dim() {
            return Err(Error::contract("feature dimension does not match the model"));
        }
        let n = self.counts[k];
        let updated = match (&self.rule, &self.individual[k]) {
            (UpdateRule::BatchRefit(cfg), _) => {
                self.history[k].push(c.clone());
                geometric_mean(&self.history[k], None, cfg)?
            }
            (UpdateRule::Incremental, None) => c.clone(),
            (UpdateRule::Incremental, Some(m)) => geodesic(m, c, 1.0 / (n as f64 + 1.0))?,
        };
        self.individual[k] = Some(updated);
        self.counts[k] = n + 1;
        Ok(())
    }
}

fn normalise(d: Vec<f64>) -> Vec<f64> {
    let s: f64 = d.iter().sum();
    if s > 0.0 {
        d.into_iter().map(|x| x / s).collect()
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureRecipe, Preprocess, Shrinkage};
    use crate::spd::{random_spd, riemann_distance, SymmetricMatrix};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn generic(rng: &mut ChaCha8Rng, dim: usize) -> MdmModel {
        let means = vec![random_spd(rng, dim, 10.0), random_spd(rng, dim, 10.0)];
        MdmModel::from_means(vec![0, 1], means, vec![5, 5], FeatureRecipe::mi(Shrinkage::Auto, Preprocess::none()))
            .unwrap()
    }

    /// Random point within Riemannian distance `radius` of `m`.
    fn near(rng: &mut ChaCha8Rng, m: &SpdMatrix, radius: f64) -> SpdMatrix {
        let d = m.dim();
        let s = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = SymmetricMatrix::new(&s + s.transpose()).unwrap();
        let scale = radius * rng.random::<f64>() / s.frobenius_norm();
        let e = SymmetricMatrix::new(s.into_matrix() * scale).unwrap().exp().unwrap();
        let sq = m.sqrt();
        SpdMatrix::from_matrix(sq.as_matrix() * e.as_matrix() * sq.as_matrix()).unwrap()
    }

    #[test]
    fn alpha_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut fc = FusedClassifier::new(generic(&mut rng, 3), DEFAULT_RAMP).unwrap();
        assert_eq!(fc.alpha(), 0.0);
        let mut last = 0.0;
        for n in 1..=41 {
            fc.complete_repetition();
            assert!(fc.alpha() >= last);
            last = fc.alpha();
            if n == 20 {
                assert_eq!(fc.alpha(), 0.5);
            }
        }
        assert_eq!(fc.alpha(), 1.0);
    }

    #[test]
    fn alpha_extremes_reproduce_single_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = generic(&mut rng, 3);
        let mut fc = FusedClassifier::new(g.clone(), 4).unwrap();
        for z in [0, 1, 0, 1] {
            fc.absorb_feature(&random_spd(&mut rng, 3, 10.0), z).unwrap();
        }
        for _ in 0..100 {
            let c = random_spd(&mut rng, 3, 10.0);
            assert_eq!(fc.fused_distances_to(&c).unwrap().argmin(), g.predict_feature(&c).unwrap());
        }
        for _ in 0..4 {
            fc.complete_repetition();
        }
        let ind = fc.individual().unwrap();
        for _ in 0..100 {
            let c = random_spd(&mut rng, 3, 10.0);
            assert_eq!(fc.fused_distances_to(&c).unwrap().argmin(), ind.predict_feature(&c).unwrap());
        }
    }

    #[test]
    fn agreeing_models_keep_their_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut fc = FusedClassifier::new(generic(&mut rng, 3), 2).unwrap();
        fc.absorb_feature(&random_spd(&mut rng, 3, 10.0), 0).unwrap();
        fc.absorb_feature(&random_spd(&mut rng, 3, 10.0), 1).unwrap();
        fc.complete_repetition();
        assert_eq!(fc.alpha(), 0.5);
        let ind = fc.individual().unwrap();
        let mut checked = 0;
        for _ in 0..500 {
            let c = random_spd(&mut rng, 3, 10.0);
            let a = fc.generic().predict_feature(&c).unwrap();
            if a == ind.predict_feature(&c).unwrap() {
                assert_eq!(fc.fused_distances_to(&c).unwrap().argmin(), a);
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn positive_alpha_without_individual_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut fc = FusedClassifier::new(generic(&mut rng, 3), 40).unwrap();
        fc.complete_repetition();
        fc.absorb_feature(&SpdMatrix::identity(3), 0).unwrap();
        assert!(matches!(
            fc.fused_distances_to(&SpdMatrix::identity(3)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn first_absorb_takes_the_feature_and_repeats_are_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut fc = FusedClassifier::new(generic(&mut rng, 4), 40).unwrap();
        let c = random_spd(&mut rng, 4, 30.0);
        fc.absorb_feature(&c, 1).unwrap();
        assert_eq!(fc.individual_means()[1].as_ref(), Some(&c));
        for _ in 0..20 {
            fc.absorb_feature(&c, 1).unwrap();
        }
        let m = fc.individual_means()[1].as_ref().unwrap();
        assert!(riemann_distance(m, &c).unwrap() < 1e-8);
        assert!(fc.absorb_feature(&c, 9).is_err());
    }

    #[test]
    fn incremental_mean_tracks_batch_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..20 {
            let centre = random_spd(&mut rng, 4, 20.0);
            let k = rng.random_range(2..=50);
            let set: Vec<_> = (0..k).map(|_| near(&mut rng, &centre, 0.5)).collect();
            let mut fc = FusedClassifier::new(generic(&mut rng, 4), 40).unwrap();
            for c in &set {
                fc.absorb_feature(c, 0).unwrap();
            }
            let batch = geometric_mean(&set, None, &MeanConfig::default()).unwrap();
            let spread = set.iter().map(|c| riemann_distance(c, &batch).unwrap()).fold(0.0, f64::max);
            assert!(spread <= 1.0);
            let d = riemann_distance(fc.individual_means()[0].as_ref().unwrap(), &batch).unwrap();
            assert!(d <= 0.05, "trial {trial}: k={k} d={d} spread={spread}");
        }
    }

    #[test]
    fn batch_refit_rule_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set: Vec<_> = (0..6).map(|_| random_spd(&mut rng, 3, 10.0)).collect();
        let cfg = MeanConfig::default();
        let mut fc = FusedClassifier::new(generic(&mut rng, 3), 40)
            .unwrap()
            .with_rule(UpdateRule::BatchRefit(cfg.clone()));
        for c in &set {
            fc.absorb_feature(c, 1).unwrap();
        }
        let batch = geometric_mean(&set, None, &cfg).unwrap();
        assert_eq!(fc.individual_means()[1].as_ref(), Some(&batch));
    }

    #[test]
    fn replay_is_bit_identical_and_prior_seeds_n_rep() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = generic(&mut rng, 3);
        let stream: Vec<_> = (0..30).map(|i| (i % 2, random_spd(&mut rng, 3, 10.0))).collect();
        let run = || {
            let mut fc = FusedClassifier::new(g.clone(), 40).unwrap();
            for (z, c) in &stream {
                fc.absorb_feature(c, *z).unwrap();
            }
            fc
        };
        assert_eq!(run(), run());

        let seeded = FusedClassifier::new(g.clone(), 40).unwrap().with_prior(&stream).unwrap();
        assert_eq!(seeded.n_rep(), 15);
        let long: Vec<_> = (0..100).map(|i| (i % 2, SpdMatrix::identity(3))).collect();
        let capped = FusedClassifier::new(g, 40).unwrap().with_prior(&long).unwrap();
        assert_eq!(capped.n_rep(), 40);
        assert_eq!(capped.alpha(), 1.0);
    }
}
