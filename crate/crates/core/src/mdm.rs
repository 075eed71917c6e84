//! Minimum distance to mean: one geometric mean per class, nearest mean wins.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dsp::Epoch;
use crate::error::{Error, Result};
use crate::features::FeatureRecipe;
use crate::spd::{distances_from, geometric_mean, MeanConfig, SpdMatrix};

/// Riemannian distance from one trial to every class mean, in model class order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceVector {
    pub class_ids: Vec<u32>,
    pub values: Vec<f64>,
}

impl DistanceVector {
    pub fn new(class_ids: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if class_ids.len() != values.len() || class_ids.is_empty() {
            return Err(Error::contract(format!(
                "{} class ids for {} distances",
                class_ids.len(),
                values.len()
            )));
        }
        if values.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::contract("distances must be finite and nonnegative"));
        }
        Ok(Self { class_ids, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, class: u32) -> Option<f64> {
        self.class_ids.iter().position(|&c| c == class).map(|i| self.values[i])
    }

    /// Class with the smallest distance; ties go to the lowest class id.
    pub fn argmin(&self) -> u32 {
        let mut best = 0;
        for i in 1..self.values.len() {
            let (d, b) = (self.values[i], self.values[best]);
            if d < b || (d == b && self.class_ids[i] < self.class_ids[best]) {
                best = i;
            }
        }
        self.class_ids[best]
    }

    /// `exp(−δ²/τ)` normalised to sum to one, with `τ` the mean squared distance.
    pub fn soft_scores(&self) -> Vec<f64> {
        let k = self.values.len();
        let sq: Vec<f64> = self.values.iter().map(|d| d * d).collect();
        let tau = sq.iter().sum::<f64>() / k as f64;
        if !(tau > 0.0) {
            return vec![1.0 / k as f64; k];
        }
        let x: Vec<f64> = sq.iter().map(|s| s / tau).collect();
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let e: Vec<f64> = x.iter().map(|v| (lo - v).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }

    /// `δ(target) − δ(other)` for a two-class vector; lower means more target-like.
    pub fn target_margin(&self, target: u32) -> Result<f64> {
        if self.values.len() != 2 {
            return Err(Error::contract(format!(
                "target margin needs a two-class vector, got {} classes",
                self.values.len()
            )));
        }
        let i = self
            .class_ids
            .iter()
            .position(|&c| c == target)
            .ok_or_else(|| Error::contract(format!("target class {target} not in the model")))?;
        Ok(self.values[i] - self.values[1 - i])
    }
}

/// Class whose probability is highest; ties go to the lowest class id.
pub fn argmax_scores(class_ids: &[u32], probs: &[f64]) -> u32 {
    let mut best = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[best] || (probs[i] == probs[best] && class_ids[i] < class_ids[best]) {
            best = i;
        }
    }
    class_ids[best]
}

/// Fitted classifier: class ids in ascending order with one mean each.
#[derive(Debug, Clone, PartialEq)]
pub struct MdmModel {
    class_ids: Vec<u32>,
    means: Vec<SpdMatrix>,
    counts: Vec<usize>,
    recipe: FeatureRecipe,
}

impl MdmModel {
    /// Assembles a model from precomputed means (e.g. loaded from disk).
    pub fn from_means(
        class_ids: Vec<u32>,
        means: Vec<SpdMatrix>,
        counts: Vec<usize>,
        recipe: FeatureRecipe,
    ) -> Result<Self> {
        if class_ids.len() < 2 {
            return Err(Error::contract(format!(
                "model needs >= 2 classes, got {}",
                class_ids.len()
            )));
        }
        if means.len() != class_ids.len() || counts.len() != class_ids.len() {
            return Err(Error::contract("class ids, means and counts differ in length"));
        }
        if class_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("class ids must be strictly increasing"));
        }
        let dim = means[0].dim();
        if means.iter().any(|m| m.dim() != dim) {
            return Err(Error::contract("class means differ in dimension"));
        }
        recipe.validate()?;
        Ok(Self { class_ids, means, counts, recipe })
    }

    /// Fits from labelled raw epochs.
    pub fn fit(training: &[Epoch], recipe: FeatureRecipe, cfg: &MeanConfig) -> Result<Self> {
        recipe.validate()?;
        let features = training
            .par_iter()
            .map(|e| {
                let label = e
                    .label()
                    .ok_or_else(|| Error::contract("training epochs must be labelled"))?;
                Ok((label, recipe.features(e)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::fit_features(&features, recipe, cfg)
    }

    /// Fits from already-built `(label, feature)` pairs.
    pub fn fit_features(features: &[(u32, SpdMatrix)], recipe: FeatureRecipe, cfg: &MeanConfig) -> Result<Self> {
        let mut groups: BTreeMap<u32, Vec<SpdMatrix>> = BTreeMap::new();
        for (label, c) in features {
            groups.entry(*label).or_default().push(c.clone());
        }
        if groups.len() < 2 {
            return Err(Error::contract(format!(
                "training needs >= 2 classes, found {}",
                groups.len()
            )));
        }
        if let Some((z, g)) = groups.iter().find(|(_, g)| g.len() < 2) {
            return Err(Error::contract(format!(
                "class {z} has {} training epoch(s); >= 2 required",
                g.len()
            )));
        }
        let fitted = groups
            .par_iter()
            .map(|(&z, set)| {
                let m = geometric_mean(set, None, cfg).map_err(|e| match e {
                    Error::MeanNonConvergence { iterations, residual, .. } => Error::MeanNonConvergence {
                        iterations,
                        residual,
                        class: Some(z),
                    },
                    other => other,
                })?;
                Ok((z, m, set.len()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut class_ids = Vec::new();
        let mut means = Vec::new();
        let mut counts = Vec::new();
        for (z, m, n) in fitted {
            class_ids.push(z);
            means.push(m);
            counts.push(n);
        }
        Self::from_means(class_ids, means, counts, recipe)
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn means(&self) -> &[SpdMatrix] {
        &self.means
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn recipe(&self) -> &FeatureRecipe {
        &self.recipe
    }

    pub fn dim(&self) -> usize {
        self.means[0].dim()
    }

    pub fn mean_of(&self, class: u32) -> Option<&SpdMatrix> {
        self.class_ids.iter().position(|&c| c == class).map(|i| &self.means[i])
    }

    /// For two-class P300 models: the target id from the recipe, else the larger id.
    pub fn target_class(&self) -> u32 {
        self.recipe
            .target_class
            .unwrap_or(*self.class_ids.last().expect("model has classes"))
    }

    pub fn features(&self, e: &Epoch) -> Result<SpdMatrix> {
        self.recipe.features(e)
    }

    pub fn distances_to(&self, c: &SpdMatrix) -> Result<DistanceVector> {
        if c.dim() != self.dim() {
            return Err(Error::contract(format!(
                "feature of dimension {} for a model of dimension {}",
                c.dim(),
                self.dim()
            )));
        }
        DistanceVector::new(self.class_ids.clone(), distances_from(c, &self.means)?)
    }

    pub fn distances(&self, e: &Epoch) -> Result<DistanceVector> {
        self.distances_to(&self.features(e)?)
    }

    pub fn predict(&self, e: &Epoch) -> Result<u32> {
        Ok(self.distances(e)?.argmin())
    }

    pub fn predict_feature(&self, c: &SpdMatrix) -> Result<u32> {
        Ok(self.distances_to(c)?.argmin())
    }

    /// `δ(non-target) − δ(target)`: larger is more target-like.
    pub fn p300_score(&self, e: &Epoch) -> Result<f64> {
        Ok(-self.distances(e)?.target_margin(self.target_class())?)
    }
}

/// One repetition: one epoch per item id.
pub type Repetition = BTreeMap<u32, Epoch>;

/// Running per-item sums of `δ(target) − δ(non-target)` over repetitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CumulativeScores {
    items: Vec<u32>,
    sums: Vec<f64>,
    repetitions: usize,
}

impl CumulativeScores {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// Adds one repetition's per-item margins (item ids in ascending order).
    pub fn add_margins(&mut self, margins: &BTreeMap<u32, f64>) -> Result<()> {
        if margins.is_empty() {
            return Err(Error::contract("repetition covers no items"));
        }
        if self.repetitions == 0 {
            self.items = margins.keys().copied().collect();
            self.sums = vec![0.0; self.items.len()];
        } else if !margins.keys().copied().eq(self.items.iter().copied()) {
            return Err(Error::contract("repetitions cover different item sets"));
        }
        for (s, m) in self.sums.iter_mut().zip(margins.values()) {
            *s += m;
        }
        self.repetitions += 1;
        Ok(())
    }

    pub fn add_repetition(&mut self, model: &MdmModel, rep: &Repetition) -> Result<()> {
        let target = model.target_class();
        let margins = rep
            .iter()
            .map(|(&item, e)| Ok((item, model.distances(e)?.target_margin(target)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        self.add_margins(&margins)
    }

    /// Item with the lowest cumulated margin; ties go to the lowest item id.
    pub fn select(&self) -> Option<u32> {
        let mut best: Option<usize> = None;
        for (i, &s) in self.sums.iter().enumerate() {
            if best.is_none_or(|b| s < self.sums[b]) {
                best = Some(i);
            }
        }
        best.map(|i| self.items[i])
    }
}

/// Selects the item most likely to be the target from all repetitions so far.
pub fn cumulative_select(model: &MdmModel, repetitions: &[Repetition]) -> Result<u32> {
    let mut acc = CumulativeScores::new();
    for rep in repetitions {
        acc.add_repetition(model, rep)?;
    }
    acc.select()
        .ok_or_else(|| Error::contract("cumulative selection needs at least one repetition"))
}

/// Area under the ROC curve by the Mann–Whitney statistic; tied scores count one half.
pub fn auc(scores: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|(_, y)| *y).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::contract("AUC needs both positive and negative labels"));
    }
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::contract("AUC scores must not be NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]].0 == scores[order[i]].0 {
            j += 1;
        }
        // Average of ranks i+1 ..= j.
        let avg = (i + j + 1) as f64 / 2.0;
        rank_sum += avg * order[i..j].iter().filter(|&&k| scores[k].1).count() as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Preprocess, Shrinkage};
    use crate::spd::{random_invertible, random_spd};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mi_recipe() -> FeatureRecipe {
        FeatureRecipe::mi(Shrinkage::Auto, Preprocess::none())
    }

    fn model_from(means: Vec<SpdMatrix>) -> MdmModel {
        let k = means.len();
        MdmModel::from_means((0..k as u32).collect(), means, vec![2; k], mi_recipe()).unwrap()
    }

    #[test]
    fn identical_class_members_give_that_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(&mut rng, 3, 10.0);
        let b = random_spd(&mut rng, 3, 10.0);
        let feats = vec![(1, a.clone()), (1, a.clone()), (2, b.clone()), (2, b.clone())];
        let m = MdmModel::fit_features(&feats, mi_recipe(), &MeanConfig::default()).unwrap();
        assert_eq!(m.class_ids(), &[1, 2]);
        assert!((m.means()[0].as_matrix() - a.as_matrix()).norm() < 1e-12);
        assert_eq!(m.predict_feature(&a).unwrap(), 1);
        assert!(m.distances_to(&a).unwrap().values[0] < 1e-10);
    }

    #[test]
    fn means_follow_congruence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_invertible(&mut rng, 4, 100.0);
        let feats: Vec<_> = (0..10).map(|i| (i % 2, random_spd(&mut rng, 4, 50.0))).collect();
        let moved: Vec<_> = feats.iter().map(|(z, c)| (*z, c.congruence(&w).unwrap())).collect();
        let cfg = MeanConfig { tol: Some(1e-11), ..MeanConfig::default() };
        let a = MdmModel::fit_features(&feats, mi_recipe(), &cfg).unwrap();
        let b = MdmModel::fit_features(&moved, mi_recipe(), &cfg).unwrap();
        for (ma, mb) in a.means().iter().zip(b.means()) {
            let expect = ma.congruence(&w).unwrap();
            let rel = (mb.as_matrix() - expect.as_matrix()).norm() / expect.as_matrix().norm();
            assert!(rel < 1e-7, "{rel}");
        }
    }

    #[test]
    fn distances_are_congruence_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let means: Vec<_> = (0..4).map(|_| random_spd(&mut rng, 5, 100.0)).collect();
        let w = random_invertible(&mut rng, 5, 100.0);
        let model = model_from(means.clone());
        let moved = model_from(means.iter().map(|m| m.congruence(&w).unwrap()).collect());
        let c = random_spd(&mut rng, 5, 100.0);
        let d1 = model.distances_to(&c).unwrap();
        let d2 = moved.distances_to(&c.congruence(&w).unwrap()).unwrap();
        assert_eq!(d1.len(), 4);
        for (x, y) in d1.values.iter().zip(&d2.values) {
            assert!((x - y).abs() <= 1e-8 * x.max(1e-300), "{x} {y}");
        }
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let c = SpdMatrix::identity(2);
        let model = model_from(vec![c.clone(), c.clone(), c.clone()]);
        assert_eq!(model.predict_feature(&SpdMatrix::from_diagonal(&[3.0, 1.0]).unwrap()).unwrap(), 0);
        let dv = DistanceVector::new(vec![7, 3, 5], vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(dv.argmin(), 3);
    }

    #[test]
    fn fit_rejects_too_few_classes_or_epochs() {
        let c = SpdMatrix::identity(2);
        let one = vec![(1, c.clone()), (1, c.clone())];
        match MdmModel::fit_features(&one, mi_recipe(), &MeanConfig::default()) {
            Err(Error::Contract(m)) => assert!(m.contains(">= 2 classes"), "{m}"),
            other => panic!("{other:?}"),
        }
        let thin = vec![(1, c.clone()), (1, c.clone()), (2, c)];
        assert!(matches!(
            MdmModel::fit_features(&thin, mi_recipe(), &MeanConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_convergence_names_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let feats: Vec<_> = (0..6).map(|i| (3 + i % 2, random_spd(&mut rng, 3, 1e3))).collect();
        let cfg = MeanConfig { tol: Some(0.0), max_iter: 1, ..MeanConfig::default() };
        match MdmModel::fit_features(&feats, mi_recipe(), &cfg) {
            Err(Error::MeanNonConvergence { class: Some(z), .. }) => assert!(z == 3 || z == 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_is_insensitive_to_training_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats: Vec<_> = (0..12).map(|i| (i % 2, random_spd(&mut rng, 4, 20.0))).collect();
        let mut rev = feats.clone();
        rev.reverse();
        let a = MdmModel::fit_features(&feats, mi_recipe(), &MeanConfig::default()).unwrap();
        let b = MdmModel::fit_features(&rev, mi_recipe(), &MeanConfig::default()).unwrap();
        for (x, y) in a.means().iter().zip(b.means()) {
            assert!((x.as_matrix() - y.as_matrix()).norm() / x.as_matrix().norm() < 1e-9);
        }
    }

    #[test]
    fn soft_scores_examples() {
        let dv = DistanceVector::new(vec![1, 2, 3], vec![2.0, 2.0, 2.0]).unwrap();
        assert_eq!(dv.soft_scores(), vec![1.0 / 3.0; 3]);
        let dv = DistanceVector::new(vec![1, 2, 3], vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(dv.soft_scores(), vec![1.0 / 3.0; 3]);
        let dv = DistanceVector::new(vec![1, 2, 3], vec![0.0, 40.0, 50.0]).unwrap();
        let p = dv.soft_scores();
        // The temperature scales with the distances, so the limit is a fixed
        // share rather than one: x = δ²/τ = (0, 1600, 2500) / (4100 / 3).
        let tau = 4100.0 / 3.0;
        let want = 1.0 / (1.0 + (-1600.0f64 / tau).exp() + (-2500.0f64 / tau).exp());
        assert!((p[0] - want).abs() < 1e-12, "{p:?}");
        assert!(p[0] > p[1] && p[1] > p[2]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_scores_agree_with_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let k = rng.random_range(2..8);
            let ids: Vec<u32> = (0..k).collect();
            let d: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
            let dv = DistanceVector::new(ids.clone(), d).unwrap();
            assert_eq!(argmax_scores(&ids, &dv.soft_scores()), dv.argmin());
        }
    }

    #[test]
    fn auc_examples() {
        let sep: Vec<_> = (0..10).map(|i| (i as f64, i >= 5)).collect();
        assert_eq!(auc(&sep).unwrap(), 1.0);
        let flat: Vec<_> = (0..10).map(|i| (1.0, i % 3 == 0)).collect();
        assert_eq!(auc(&flat).unwrap(), 0.5);
        assert!(auc(&[(1.0, true), (2.0, true)]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s: Vec<_> = (0..40)
                .map(|i| ((rng.random_range(0..10)) as f64, i % 3 == 0))
                .collect();
            let mut wins = 0.0;
            let mut pairs = 0.0;
            for a in s.iter().filter(|x| x.1) {
                for b in s.iter().filter(|x| !x.1) {
                    pairs += 1.0;
                    wins += if a.0 > b.0 { 1.0 } else if a.0 == b.0 { 0.5 } else { 0.0 };
                }
            }
            assert!((auc(&s).unwrap() - wins / pairs).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_of_random_labels_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 4000;
        let s: Vec<_> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<bool>())).collect();
        assert!((auc(&s).unwrap() - 0.5).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn cumulative_scores_select_lowest_margin() {
        let mut acc = CumulativeScores::new();
        acc.add_margins(&BTreeMap::from([(1, 0.5), (2, -0.2), (3, -0.2)])).unwrap();
        assert_eq!(acc.select(), Some(2));
        acc.add_margins(&BTreeMap::from([(1, -2.0), (2, 0.1), (3, 0.0)])).unwrap();
        assert_eq!(acc.select(), Some(1));
        assert!(acc.add_margins(&BTreeMap::from([(1, 0.0)])).is_err());
    }
}
