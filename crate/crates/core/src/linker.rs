//! Map extracted span text to a KG entity.
//!
//! Candidates are entities whose label or alias equals the text. They are
//! ranked by a per-property linear model over one-hot outgoing-neighbor
//! features, trained pairwise so the true object outranks same-named entities.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{normalize_name, EntityId, KnowledgeGraph, PropertyId};
use crate::util::write_atomic;

/// Index → value; absent entries are zero.
pub type SparseVector = BTreeMap<usize, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity: EntityId,
    /// The label or alias that matched, as stored in the KG.
    pub matched_name: String,
    #[serde(default)]
    pub features: SparseVector,
}

/// Entities with a label or alias equal to `text` after normalization, by id.
pub fn gather_candidates(text: &str, kg: &KnowledgeGraph) -> Result<Vec<Candidate>> {
    let key = normalize_name(text);
    if key.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for id in kg.entities_named(text)? {
        let names = kg.fetch_labels_aliases(&id)?;
        let Some(matched) = names.into_iter().find(|n| normalize_name(n) == key) else {
            continue;
        };
        out.push(Candidate {
            entity: id,
            matched_name: matched,
            features: SparseVector::new(),
        });
    }
    out.sort_by(|a, b| a.entity.cmp(&b.entity));
    Ok(out)
}

/// Neighbor entity → feature index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub neighbor_index: BTreeMap<EntityId, usize>,
}

impl FeatureSpace {
    /// Indices follow id order, so the same neighbor set always gives the same space.
    pub fn from_neighbors(neighbors: impl IntoIterator<Item = EntityId>) -> Self {
        let set: BTreeSet<EntityId> = neighbors.into_iter().collect();
        Self {
            neighbor_index: set.into_iter().enumerate().map(|(i, e)| (e, i)).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.neighbor_index.len()
    }
}

pub fn featurize(entity: &EntityId, kg: &KnowledgeGraph, space: &FeatureSpace) -> Result<SparseVector> {
    Ok(kg
        .fetch_outgoing_neighbors(entity)?
        .iter()
        .filter_map(|n| space.neighbor_index.get(n))
        .map(|&i| (i, 1.0))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkTrainingInstance {
    pub gold: EntityId,
    pub confusables: Vec<EntityId>,
}

impl LinkTrainingInstance {
    /// No same-named alternative: ranked first by construction.
    pub fn is_trivial(&self) -> bool {
        self.confusables.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub instances: Vec<LinkTrainingInstance>,
    pub space: FeatureSpace,
}

/// Entities sharing any name with `gold`, excluding `gold`.
pub fn confusables_of(gold: &EntityId, kg: &KnowledgeGraph) -> Result<Vec<EntityId>> {
    let mut out = BTreeSet::new();
    for name in kg.fetch_labels_aliases(gold)? {
        out.extend(kg.entities_named(&name)?);
    }
    out.remove(gold);
    Ok(out.into_iter().collect())
}

/// Sample up to `sample_size` distinct objects of `p` (skipping `exclude_subjects`)
/// and pair each with its same-named confusables.
pub fn build_training(
    p: &PropertyId,
    kg: &KnowledgeGraph,
    sample_size: usize,
    seed: u64,
    exclude_subjects: &BTreeSet<EntityId>,
) -> Result<TrainingSet> {
    let objects: Vec<EntityId> = kg
        .triples_of(p)?
        .into_iter()
        .filter(|t| !exclude_subjects.contains(&t.subject))
        .filter_map(|t| t.object.as_entity().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if objects.is_empty() {
        return Err(Error::Training(format!("no entity objects for {p} to train on")));
    }
    let golds: Vec<EntityId> = if objects.len() <= sample_size {
        objects
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<EntityId> = index::sample(&mut rng, objects.len(), sample_size)
            .into_iter()
            .map(|i| objects[i].clone())
            .collect();
        picked.sort();
        picked
    };
    let mut instances = Vec::with_capacity(golds.len());
    let mut neighbors = BTreeSet::new();
    for gold in golds {
        let confusables = confusables_of(&gold, kg)?;
        for e in std::iter::once(&gold).chain(&confusables) {
            neighbors.extend(kg.fetch_outgoing_neighbors(e)?);
        }
        instances.push(LinkTrainingInstance { gold, confusables });
    }
    Ok(TrainingSet {
        instances,
        space: FeatureSpace::from_neighbors(neighbors),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerHyper {
    pub l2: f64,
    pub step: f64,
    pub max_epochs: usize,
    /// Stop once the relative loss change falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for RankerHyper {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            step: 0.1,
            max_epochs: 500,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub hyper: RankerHyper,
    pub iterations: usize,
    pub pairs: usize,
    pub trivial_instances: usize,
    pub loss_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingModel {
    pub property: PropertyId,
    pub space: FeatureSpace,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub meta: TrainingMeta,
}

/// Feature differences `f(gold) - f(confusable)`, one per pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    pub diffs: Vec<SparseVector>,
    pub dimension: usize,
}

pub fn training_pairs(set: &TrainingSet, kg: &KnowledgeGraph) -> Result<PairSet> {
    let mut diffs = Vec::new();
    for inst in &set.instances {
        let g = featurize(&inst.gold, kg, &set.space)?;
        for c in &inst.confusables {
            let mut d = g.clone();
            for (i, v) in featurize(c, kg, &set.space)? {
                *d.entry(i).or_default() -= v;
            }
            d.retain(|_, v| *v != 0.0);
            diffs.push(d);
        }
    }
    Ok(PairSet {
        diffs,
        dimension: set.space.dimension(),
    })
}

fn dot(w: &[f64], x: &SparseVector) -> f64 {
    x.iter().map(|(&i, v)| w[i] * v).sum()
}

/// log(1 + e^{-z}) without overflow.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean pairwise logistic loss plus `l2/2 · |w|²`.
pub fn pairwise_loss(w: &[f64], pairs: &PairSet, l2: f64) -> f64 {
    let n = pairs.diffs.len().max(1) as f64;
    let data: f64 = pairs.diffs.iter().map(|d| softplus_neg(dot(w, d))).sum();
    data / n + 0.5 * l2 * w.iter().map(|x| x * x).sum::<f64>()
}

pub fn pairwise_gradient(w: &[f64], pairs: &PairSet, l2: f64) -> Vec<f64> {
    let n = pairs.diffs.len().max(1) as f64;
    let mut g: Vec<f64> = w.iter().map(|x| l2 * x).collect();
    for d in &pairs.diffs {
        let s = sigmoid(-dot(w, d)) / n;
        for (&i, v) in d {
            g[i] -= s * v;
        }
    }
    g
}

/// Full-batch gradient descent; the step is halved whenever it would raise the loss.
pub fn train_ranker(
    property: &PropertyId,
    set: &TrainingSet,
    kg: &KnowledgeGraph,
    hyper: &RankerHyper,
) -> Result<RankingModel> {
    if !set.instances.iter().any(|i| !i.is_trivial()) {
        return Err(Error::Training(format!(
            "{property}: no training instance has a confusable entity"
        )));
    }
    let pairs = training_pairs(set, kg)?;
    let mut w = vec![0.0; pairs.dimension];
    let mut loss = pairwise_loss(&w, &pairs, hyper.l2);
    let mut curve = vec![loss];
    let mut iterations = 0;
    for _ in 0..hyper.max_epochs {
        let g = pairwise_gradient(&w, &pairs, hyper.l2);
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Training(format!("{property}: gradient diverged")));
        }
        let mut step = hyper.step;
        let (next_w, next_loss) = loop {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let l = pairwise_loss(&cand, &pairs, hyper.l2);
            if l.is_nan() {
                return Err(Error::Training(format!("{property}: loss is NaN")));
            }
            if l <= loss || step < 1e-12 {
                break (cand, l);
            }
            step /= 2.0;
        };
        iterations += 1;
        let rel = (loss - next_loss).abs() / loss.abs().max(f64::MIN_POSITIVE);
        w = next_w;
        loss = next_loss.min(loss);
        curve.push(loss);
        if rel < hyper.tolerance {
            break;
        }
    }
    Ok(RankingModel {
        property: property.clone(),
        space: set.space.clone(),
        weights: w,
        bias: 0.0,
        meta: TrainingMeta {
            hyper: hyper.clone(),
            iterations,
            pairs: pairs.diffs.len(),
            trivial_instances: set.instances.iter().filter(|i| i.is_trivial()).count(),
            loss_curve: curve,
        },
    })
}

impl RankingModel {
    pub fn score(&self, features: &SparseVector) -> f64 {
        dot(&self.weights, features) + self.bias
    }

    pub fn weight_of(&self, neighbor: &EntityId) -> f64 {
        self.space
            .neighbor_index
            .get(neighbor)
            .map_or(0.0, |&i| self.weights[i])
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.space.dimension() {
            return Err(Error::Config(format!(
                "model for {}: {} weights for {} features",
                self.property,
                self.weights.len(),
                self.space.dimension()
            )));
        }
        if self.weights.iter().chain([&self.bias]).any(|w| !w.is_finite()) {
            return Err(Error::Config(format!("model for {}: non-finite weight", self.property)));
        }
        Ok(())
    }

    /// JSON with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.check()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Candidates for `text` scored by `model`, best first (ties by id).
pub fn link(text: &str, model: &RankingModel, kg: &KnowledgeGraph) -> Result<Vec<(EntityId, f64)>> {
    if text.trim().is_empty() {
        return Err(Error::Precondition("cannot link empty text".into()));
    }
    let mut ranked = gather_candidates(text, kg)?
        .into_iter()
        .map(|c| {
            let f = featurize(&c.entity, kg, &model.space)?;
            Ok((c.entity, model.score(&f)))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// Percentage of ranked lists whose first entry is the gold entity.
pub fn evaluate_hit1(links: &[Vec<(EntityId, f64)>], golds: &[EntityId]) -> Result<f64> {
    if links.len() != golds.len() {
        return Err(Error::Evaluation(format!(
            "{} ranked lists for {} golds",
            links.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Evaluation("no gold links".into()));
    }
    let hits = links
        .iter()
        .zip(golds)
        .filter(|(l, g)| l.first().is_some_and(|(e, _)| e == *g))
        .count();
    Ok(100.0 * hits as f64 / golds.len() as f64)
}
