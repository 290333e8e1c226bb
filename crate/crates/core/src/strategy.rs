//! Match strategies: an ordered list of matchers plus a rule that combines
//! their similarities into a match decision.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Correspondence, Entity, MatchResult, MatchStats, TaskId};
use crate::similarity::{MeasureKind, Prepared, SimilarityMeasure};

/// Matchers per strategy are bounded so per-pair scratch space stays on the stack.
pub const MAX_MATCHERS: usize = 16;

/// Default per-pair memory cost for a lean weighted-average strategy.
pub const WAM_PAIR_COST: u64 = 20;
/// Default per-pair memory cost for a learner-based strategy.
pub const LRM_PAIR_COST: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Combiner {
    /// Match iff `Σ wᵢ·sᵢ ≥ threshold`.
    WeightedAverage {
        weights: Vec<f64>,
        threshold: f64,
        #[serde(default = "default_true")]
        pruning: bool,
    },
    /// Match iff `σ(β₀ + Σ βᵢ·sᵢ) ≥ decision_threshold`.
    LogisticRegression {
        intercept: f64,
        coefficients: Vec<f64>,
        #[serde(default = "default_decision_threshold")]
        decision_threshold: f64,
    },
}

fn default_true() -> bool {
    true
}

fn default_decision_threshold() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchStrategy {
    pub id: String,
    pub matchers: Vec<SimilarityMeasure>,
    pub combiner: Combiner,
    /// Bytes of working memory per compared entity pair (`c_ms`).
    pub pair_memory_cost: u64,
}

impl MatchStrategy {
    /// Edit distance on `title` and trigram on `description`, averaged with
    /// equal weights, threshold 0.75, pruning on.
    pub fn wam() -> Self {
        Self {
            id: "wam".into(),
            matchers: vec![
                SimilarityMeasure::new(MeasureKind::EditDistance, "title"),
                SimilarityMeasure::new(MeasureKind::Trigram, "description"),
            ],
            combiner: Combiner::WeightedAverage {
                weights: vec![0.5, 0.5],
                threshold: 0.75,
                pruning: true,
            },
            pair_memory_cost: WAM_PAIR_COST,
        }
    }

    /// Jaccard on `title`, trigram on `description`, cosine on `title`,
    /// combined by a logistic model with the given coefficients.
    pub fn lrm(intercept: f64, coefficients: [f64; 3]) -> Self {
        Self {
            id: "lrm".into(),
            matchers: vec![
                SimilarityMeasure::new(MeasureKind::JaccardToken, "title"),
                SimilarityMeasure::new(MeasureKind::Trigram, "description"),
                SimilarityMeasure::new(MeasureKind::CosineToken, "title"),
            ],
            combiner: Combiner::LogisticRegression {
                intercept,
                coefficients: coefficients.to_vec(),
                decision_threshold: 0.5,
            },
            pair_memory_cost: LRM_PAIR_COST,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.matchers.len();
        if n == 0 || n > MAX_MATCHERS {
            return Err(Error::config(
                "strategy.matchers",
                format!("expected 1..={MAX_MATCHERS} matchers, got {n}"),
            ));
        }
        if self.pair_memory_cost == 0 {
            return Err(Error::config("strategy.pair_memory_cost", "must be positive"));
        }
        match &self.combiner {
            Combiner::WeightedAverage {
                weights, threshold, ..
            } => {
                if weights.len() != n {
                    return Err(Error::config(
                        "strategy.combiner.weights",
                        format!("{} weights for {n} matchers", weights.len()),
                    ));
                }
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::config(
                        "strategy.combiner.weights",
                        "every weight must be positive",
                    ));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::config(
                        "strategy.combiner.weights",
                        format!("weights sum to {sum}, expected 1"),
                    ));
                }
                if !(*threshold > 0.0 && *threshold <= 1.0) {
                    return Err(Error::config(
                        "strategy.combiner.threshold",
                        "must lie in (0, 1]",
                    ));
                }
            }
            Combiner::LogisticRegression {
                intercept,
                coefficients,
                decision_threshold,
            } => {
                if coefficients.len() != n {
                    return Err(Error::config(
                        "strategy.combiner.coefficients",
                        format!("{} coefficients for {n} matchers", coefficients.len()),
                    ));
                }
                if !intercept.is_finite() || coefficients.iter().any(|b| !b.is_finite()) {
                    return Err(Error::config(
                        "strategy.combiner.coefficients",
                        "coefficients must be finite",
                    ));
                }
                if !(*decision_threshold > 0.0 && *decision_threshold < 1.0) {
                    return Err(Error::config(
                        "strategy.combiner.decision_threshold",
                        "must lie in (0, 1)",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Checks the strategy itself and that every matcher reads a known attribute.
    pub fn validate_schema<S: AsRef<str>>(&self, attributes: &[S]) -> Result<()> {
        self.validate()?;
        for m in &self.matchers {
            if !attributes.iter().any(|a| a.as_ref() == m.attribute) {
                return Err(Error::config(
                    "strategy.matchers",
                    format!("unknown attribute `{}`", m.attribute),
                ));
            }
        }
        Ok(())
    }

    /// Lowest similarity matcher `i` can return while the pair may still
    /// reach the weighted-average threshold, assuming every other matcher
    /// returns 1. `None` for non-averaging strategies.
    pub fn prune_bound(&self, i: usize) -> Option<f64> {
        match &self.combiner {
            Combiner::WeightedAverage {
                weights, threshold, ..
            } => {
                let w = *weights.get(i)?;
                Some(((threshold - (1.0 - w)) / w).clamp(0.0, 1.0))
            }
            Combiner::LogisticRegression { .. } => None,
        }
    }

    /// Combined similarity for a pair if it counts as a match.
    pub fn evaluate_pair(&self, e1: &Entity, e2: &Entity) -> Option<Correspondence> {
        let sim = self.score(|i| self.matchers[i].apply(e1, e2), |_| 1.0)?;
        Correspondence::new(e1.key(), e2.key(), sim).ok()
    }

    /// Compares every pair of `a × b`, or every unordered pair within `a`
    /// when `self_task` is set (`b` is then ignored).
    pub fn evaluate_partition_pair(
        &self,
        task_id: &TaskId,
        a: &[Arc<Entity>],
        b: &[Arc<Entity>],
        self_task: bool,
    ) -> MatchResult {
        let started = Instant::now();
        let prep_a = self.prepare_all(a);
        let mut correspondences = Vec::new();
        let pairs_compared;

        if self_task {
            pairs_compared = (a.len() as u64) * (a.len() as u64).saturating_sub(1) / 2;
            for i in 0..a.len() {
                for j in (i + 1)..a.len() {
                    self.emit(&a[i], &prep_a[i], &a[j], &prep_a[j], &mut correspondences);
                }
            }
        } else {
            pairs_compared = a.len() as u64 * b.len() as u64;
            let prep_b = self.prepare_all(b);
            for (ea, pa) in a.iter().zip(&prep_a) {
                for (eb, pb) in b.iter().zip(&prep_b) {
                    self.emit(ea, pa, eb, pb, &mut correspondences);
                }
            }
        }

        correspondences.sort_by(|x: &Correspondence, y| (x.a(), x.b()).cmp(&(y.a(), y.b())));
        MatchResult {
            task_id: task_id.clone(),
            correspondences,
            stats: MatchStats {
                pairs_compared,
                elapsed: started.elapsed(),
            },
        }
    }

    fn prepare_all(&self, entities: &[Arc<Entity>]) -> Vec<Vec<Option<Prepared>>> {
        entities
            .iter()
            .map(|e| self.matchers.iter().map(|m| m.prepare(e)).collect())
            .collect()
    }

    fn emit(
        &self,
        ea: &Entity,
        pa: &[Option<Prepared>],
        eb: &Entity,
        pb: &[Option<Prepared>],
        out: &mut Vec<Correspondence>,
    ) {
        if ea.key() == eb.key() {
            return;
        }
        let sim = |i: usize| match (&pa[i], &pb[i]) {
            (Some(x), Some(y)) => self.matchers[i].kind.compare(x, y),
            _ => 0.0,
        };
        let upper = |i: usize| match (&pa[i], &pb[i]) {
            (Some(x), Some(y)) => self.matchers[i].kind.upper_bound(x, y),
            _ => 0.0,
        };
        if let Some(s) = self.score(sim, upper) {
            if let Ok(c) = Correspondence::new(ea.key(), eb.key(), s) {
                out.push(c);
            }
        }
    }

    /// Runs the matchers in order and combines them. `upper(i)` must never be
    /// below `sim(i)`.
    ///
    /// With pruning on, a pair is dropped as soon as a matcher lands under its
    /// prune bound and the weighted sum, taking every unevaluated matcher as 1,
    /// is already below the threshold. The sum is evaluated in the same order
    /// as the final one and rounding is monotone, so a pruned pair could never
    /// have matched.
    fn score(&self, mut sim: impl FnMut(usize) -> f64, mut upper: impl FnMut(usize) -> f64) -> Option<f64> {
        let n = self.matchers.len();
        match &self.combiner {
            Combiner::WeightedAverage {
                weights,
                threshold,
                pruning,
            } => {
                let mut known = [1.0f64; MAX_MATCHERS];
                let weighted = |known: &[f64; MAX_MATCHERS]| {
                    weights
                        .iter()
                        .zip(known)
                        .fold(0.0, |acc, (w, s)| acc + w * s)
                };
                for i in 0..n {
                    if *pruning {
                        let bound = self.prune_bound(i).unwrap_or(0.0);
                        if bound > 0.0 {
                            let up = upper(i);
                            if up < bound {
                                known[i] = up;
                                if weighted(&known) < *threshold {
                                    return None;
                                }
                            }
                            known[i] = sim(i);
                            if known[i] < bound && weighted(&known) < *threshold {
                                return None;
                            }
                            continue;
                        }
                    }
                    known[i] = sim(i);
                }
                let combined = weighted(&known);
                (combined >= *threshold).then(|| combined.clamp(0.0, 1.0))
            }
            Combiner::LogisticRegression {
                intercept,
                coefficients,
                decision_threshold,
            } => {
                let z = coefficients
                    .iter()
                    .enumerate()
                    .fold(*intercept, |acc, (i, b)| acc + b * sim(i));
                let p = 1.0 / (1.0 + (-z).exp());
                (p >= *decision_threshold).then_some(p)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::EntityKey;

    fn entity(id: &str, title: &str, desc: &str) -> Arc<Entity> {
        Arc::new(
            Entity::new("s", id)
                .unwrap()
                .with_attribute("title", title)
                .with_attribute("description", desc),
        )
    }

    /// Weighted-average strategy over placeholder matchers; tests feed
    /// similarities straight into `score` through `combine`.
    fn wam(weights: Vec<f64>, threshold: f64, pruning: bool) -> MatchStrategy {
        MatchStrategy {
            id: "t".into(),
            matchers: (0..weights.len())
                .map(|i| SimilarityMeasure::new(MeasureKind::EditDistance, format!("m{i}")))
                .collect(),
            combiner: Combiner::WeightedAverage {
                weights,
                threshold,
                pruning,
            },
            pair_memory_cost: 20,
        }
    }

    fn combine(s: &MatchStrategy, sims: &[f64]) -> Option<f64> {
        s.score(|i| sims[i], |_| 1.0)
    }

    #[test]
    fn weighted_average_decisions() {
        let s = wam(vec![0.5, 0.5], 0.75, false);
        let combined = combine(&s, &[0.9, 0.7]).unwrap();
        assert!((combined - 0.8).abs() < 1e-12);
        assert_eq!(combine(&s, &[0.9, 0.5]), None);
    }

    #[test]
    fn zero_logistic_model_matches_at_half() {
        let s = MatchStrategy::lrm(0.0, [0.0, 0.0, 0.0]);
        let a = entity("1", "x", "y");
        let b = entity("2", "p", "q");
        let c = s.evaluate_pair(&a, &b).unwrap();
        assert_eq!(c.sim(), 0.5);
    }

    #[test]
    fn prune_bound_examples() {
        assert_eq!(wam(vec![0.5, 0.5], 0.75, true).prune_bound(0), Some(0.5));
        assert_eq!(wam(vec![1.0], 0.75, true).prune_bound(0), Some(0.75));
        let s = wam(vec![0.2, 0.8], 0.75, true);
        assert_eq!(s.prune_bound(0), Some(0.0));
        assert!((s.prune_bound(1).unwrap() - 0.6875).abs() < 1e-12);
        assert_eq!(MatchStrategy::lrm(0.0, [1.0; 3]).prune_bound(0), None);
    }

    #[test]
    fn partition_pair_counts() {
        let s = MatchStrategy::wam();
        let four: Vec<_> = (0..4).map(|i| entity(&i.to_string(), "t", "d")).collect();
        let r = s.evaluate_partition_pair(&"t".into(), &four, &[], true);
        assert_eq!(r.stats.pairs_compared, 6);
        // identical titles and descriptions: every pair matches, none with itself
        assert_eq!(r.correspondences.len(), 6);

        let a: Vec<_> = (0..3).map(|i| entity(&format!("a{i}"), "t", "d")).collect();
        let b: Vec<_> = (0..5).map(|i| entity(&format!("b{i}"), "t", "d")).collect();
        let r = s.evaluate_partition_pair(&"t".into(), &a, &b, false);
        assert_eq!(r.stats.pairs_compared, 15);
        assert_eq!(r.correspondences.len(), 15);
    }

    #[test]
    fn self_task_never_pairs_twice() {
        let s = MatchStrategy::wam();
        let es: Vec<_> = (0..6).map(|i| entity(&i.to_string(), "same", "same")).collect();
        let r = s.evaluate_partition_pair(&"t".into(), &es, &[], true);
        let mut seen = std::collections::HashSet::new();
        for c in &r.correspondences {
            assert_ne!(c.a(), c.b());
            assert!(seen.insert((c.a().clone(), c.b().clone())));
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(MatchStrategy::wam().validate().is_ok());
        assert!(wam(vec![0.5, 0.6], 0.75, true).validate().is_err());
        assert!(wam(vec![1.0, 0.0], 0.75, true).validate().is_err());
        assert!(wam(vec![0.5, 0.5], 0.0, true).validate().is_err());
        let mut lrm = MatchStrategy::lrm(0.0, [1.0; 3]);
        lrm.combiner = Combiner::LogisticRegression {
            intercept: 0.0,
            coefficients: vec![1.0],
            decision_threshold: 0.5,
        };
        assert!(lrm.validate().is_err());
        let mut zero_cost = MatchStrategy::wam();
        zero_cost.pair_memory_cost = 0;
        assert!(zero_cost.validate().is_err());
        assert!(MatchStrategy::wam()
            .validate_schema(&["title", "description"])
            .is_ok());
        assert!(MatchStrategy::wam().validate_schema(&["title"]).is_err());
    }

    #[test]
    fn prepared_path_equals_direct_path() {
        let s = MatchStrategy::wam();
        let es = vec![
            entity("1", "Samsung SH-224 DVD writer", "black internal sata drive"),
            entity("2", "Samsung SH-224 DVD-writer", "black internal sata drive 24x"),
            entity("3", "LG GH24 burner", "white external usb"),
            Arc::new(Entity::new("s", "4").unwrap().with_attribute("title", "LG GH24 burner")),
        ];
        let r = s.evaluate_partition_pair(&"t".into(), &es, &[], true);
        let mut direct = Vec::new();
        for i in 0..es.len() {
            for j in (i + 1)..es.len() {
                direct.extend(s.evaluate_pair(&es[i], &es[j]));
            }
        }
        direct.sort_by(|x, y| (x.a(), x.b()).cmp(&(y.a(), y.b())));
        assert_eq!(r.correspondences, direct);
        assert!(!direct.is_empty());
    }

    fn arb_wam() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (2usize..=4)
            .prop_flat_map(|n| (prop::collection::vec(0.05f64..1.0, n), 0.5f64..=0.95))
            .prop_map(|(raw, t)| {
                let sum: f64 = raw.iter().sum();
                (raw.iter().map(|w| w / sum).collect(), t)
            })
    }

    proptest! {
        #[test]
        fn pruning_never_changes_decision((weights, t) in arb_wam(), sims in prop::collection::vec(0.0f64..=1.0, 4)) {
            let on = wam(weights.clone(), t, true);
            let off = wam(weights, t, false);
            let on_r = combine(&on, &sims);
            let off_r = combine(&off, &sims);
            prop_assert_eq!(on_r.map(f64::to_bits), off_r.map(f64::to_bits));
        }

        #[test]
        fn logistic_is_monotone(b in prop::collection::vec(0.01f64..5.0, 3), s in prop::collection::vec(0.0f64..=1.0, 3), bump in 0.0f64..=1.0, i in 0usize..3) {
            let strat = MatchStrategy::lrm(-2.0, [b[0], b[1], b[2]]);
            let raw = |sims: &[f64]| {
                let z = -2.0 + b.iter().zip(sims).map(|(x, y)| x * y).sum::<f64>();
                1.0 / (1.0 + (-z).exp())
            };
            let mut higher = s.clone();
            higher[i] = (higher[i] + bump).min(1.0);
            prop_assert!(raw(&higher) >= raw(&s));
            // decision is monotone too
            if strat.score(|k| s[k], |_| 1.0).is_some() {
                prop_assert!(strat.score(|k| higher[k], |_| 1.0).is_some());
            }
        }

        #[test]
        fn evaluate_pair_is_symmetric(t1 in "[a-d ]{0,10}", t2 in "[a-d ]{0,10}", d1 in "[a-d ]{0,10}", d2 in "[a-d ]{0,10}") {
            let s = MatchStrategy::wam();
            let a = entity("a", &t1, &d1);
            let b = entity("b", &t2, &d2);
            let ab = s.evaluate_pair(&a, &b).map(|c| c.sim().to_bits());
            let ba = s.evaluate_pair(&b, &a).map(|c| c.sim().to_bits());
            prop_assert_eq!(ab, ba);
        }
    }

    #[test]
    fn entity_key_order_is_used_for_output() {
        let s = MatchStrategy::wam();
        let es = vec![entity("z", "same", "same"), entity("a", "same", "same")];
        let r = s.evaluate_partition_pair(&"t".into(), &es, &[], true);
        assert_eq!(r.correspondences[0].a(), &EntityKey::new("s", "a"));
    }
}
