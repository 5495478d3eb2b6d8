//! Multiclass averaged perceptron over sparse features, one model per
//! sentence-distance bucket.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::document::Bucket;
use crate::features::FeatureVector;
use crate::relation::Relation;
use crate::scalar::Real;

pub const MODEL_HEADER: &str = "#temprel-model v1";
pub const DEFAULT_EPOCH_CANDIDATES: [usize; 4] = [1, 3, 5, 10];
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum PerceptronError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("need at least {folds} documents for {folds}-fold cross validation, found {documents}")]
    InsufficientDocuments { documents: usize, folds: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Soft-max scores over the six labels and their argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrediction<S> {
    pub label: Relation,
    pub scores: [S; 6],
}

impl<S: Real> ScoredPrediction<S> {
    /// Soft-max of `activations`, shifted by their maximum first.
    pub fn from_activations(activations: [S; 6]) -> Self {
        let max = activations.iter().copied().fold(S::neg_infinity(), S::max);
        let exp: [S; 6] = std::array::from_fn(|i| (activations[i] - max).exp());
        let total = exp.iter().copied().fold(S::zero(), |a, b| a + b);
        Self::from_scores(std::array::from_fn(|i| exp[i] / total))
    }

    /// Wraps given probabilities; the label is their argmax, ties to the
    /// earlier label.
    pub fn from_scores(scores: [S; 6]) -> Self {
        let mut best = 0;
        for i in 1..6 {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        Self {
            label: Relation::from_index(best),
            scores,
        }
    }

    pub fn score(&self, r: Relation) -> S {
        self.scores[r.index()]
    }
}

/// Trained weights for one bucket. Only averaged weights are used to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronModel<S> {
    pub bucket: Bucket,
    pub epochs_trained: usize,
    pub seed: u64,
    weights: HashMap<String, [S; 6]>,
    averaged: HashMap<String, [S; 6]>,
}

fn argmax_label<S: Real>(activations: &[S; 6]) -> Relation {
    let mut best = 0;
    for i in 1..6 {
        if activations[i] > activations[best] {
            best = i;
        }
    }
    Relation::from_index(best)
}

fn activations<S: Real>(weights: &HashMap<String, [S; 6]>, fv: &FeatureVector) -> [S; 6] {
    let mut a = [S::zero(); 6];
    for (name, value) in fv.iter() {
        if let Some(w) = weights.get(name) {
            let v = S::from_f64(value);
            for (acc, wi) in a.iter_mut().zip(w) {
                *acc = *acc + *wi * v;
            }
        }
    }
    a
}

impl<S: Real> PerceptronModel<S> {
    /// A model with no weights; predicts uniform scores.
    pub fn empty(bucket: Bucket) -> Self {
        Self {
            bucket,
            epochs_trained: 1,
            seed: DEFAULT_SEED,
            weights: HashMap::new(),
            averaged: HashMap::new(),
        }
    }

    /// Classic multiclass averaged perceptron with unit learning rate.
    ///
    /// The averaged weights are the mean of the weight vectors held after
    /// each processed example, computed lazily.
    pub fn train(
        bucket: Bucket,
        examples: &[(FeatureVector, Relation)],
        epochs: usize,
        seed: u64,
    ) -> Result<Self, PerceptronError> {
        if examples.is_empty() {
            return Err(PerceptronError::EmptyTrainingSet);
        }
        if epochs == 0 {
            return Err(PerceptronError::InvalidArgument("epochs must be at least 1".into()));
        }
        let mut weights: HashMap<String, [S; 6]> = HashMap::new();
        // sum of (step - 1) * delta, for w_avg = w - acc / steps
        let mut acc: HashMap<String, [S; 6]> = HashMap::new();
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut step: u64 = 0;
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                step += 1;
                let (fv, gold) = &examples[i];
                let guess = argmax_label(&activations(&weights, fv));
                if guess == *gold {
                    continue;
                }
                let age = S::from_f64((step - 1) as f64);
                for (name, value) in fv.iter() {
                    let v = S::from_f64(value);
                    let w = weights.entry(name.to_string()).or_insert([S::zero(); 6]);
                    w[gold.index()] = w[gold.index()] + v;
                    w[guess.index()] = w[guess.index()] - v;
                    let u = acc.entry(name.to_string()).or_insert([S::zero(); 6]);
                    u[gold.index()] = u[gold.index()] + age * v;
                    u[guess.index()] = u[guess.index()] - age * v;
                }
            }
        }
        let steps = S::from_f64(step as f64);
        let averaged = weights
            .iter()
            .map(|(name, w)| {
                let u = &acc[name];
                (name.clone(), std::array::from_fn(|r| w[r] - u[r] / steps))
            })
            .collect();
        Ok(Self {
            bucket,
            epochs_trained: epochs,
            seed,
            weights,
            averaged,
        })
    }

    pub fn predict(&self, fv: &FeatureVector) -> ScoredPrediction<S> {
        ScoredPrediction::from_activations(activations(&self.averaged, fv))
    }

    pub fn raw_weight(&self, feature: &str, r: Relation) -> Option<S> {
        self.weights.get(feature).map(|w| w[r.index()])
    }

    pub fn averaged_weight(&self, feature: &str, r: Relation) -> Option<S> {
        self.averaged.get(feature).map(|w| w[r.index()])
    }

    pub fn feature_count(&self) -> usize {
        self.averaged.len()
    }

    /// Sets one averaged (and raw) weight; for hand-built models.
    pub fn set_weight(&mut self, feature: &str, r: Relation, value: S) {
        self.weights.entry(feature.to_string()).or_insert([S::zero(); 6])[r.index()] = value;
        self.averaged.entry(feature.to_string()).or_insert([S::zero(); 6])[r.index()] = value;
    }

    /// Text model file. Weights carry 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MODEL_HEADER}").unwrap();
        writeln!(out, "bucket={}", self.bucket.name()).unwrap();
        writeln!(out, "epochs={}", self.epochs_trained).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        let sorted: BTreeMap<&String, &[S; 6]> = self.averaged.iter().collect();
        for r in Relation::ALL {
            for (name, w) in &sorted {
                writeln!(out, "{}\t{}\t{:.16e}", r.name(), name, w[r.index()].as_f64()).unwrap();
            }
        }
        out
    }

    /// Parses a model file. Raw weights are set equal to the averaged ones.
    pub fn from_text(text: &str) -> Result<Self, PerceptronError> {
        let perr = |line: usize, message: String| PerceptronError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut header = |expect: &str| -> Result<(usize, String), PerceptronError> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| perr(0, format!("missing `{expect}` line")))?;
            let value = if expect == MODEL_HEADER {
                (l == MODEL_HEADER).then(String::new)
            } else {
                l.strip_prefix(&format!("{expect}=")).map(str::to_string)
            };
            value
                .map(|v| (n, v))
                .ok_or_else(|| perr(n, format!("expected `{expect}` header")))
        };
        header(MODEL_HEADER)?;
        let (n, bucket) = header("bucket")?;
        let bucket: Bucket = bucket.parse().map_err(|e| perr(n, e))?;
        let (n, epochs) = header("epochs")?;
        let epochs_trained: usize = epochs.parse().map_err(|e| perr(n, format!("epochs: {e}")))?;
        if epochs_trained == 0 {
            return Err(perr(n, "epochs must be at least 1".into()));
        }
        let (n, seed) = header("seed")?;
        let seed: u64 = seed.parse().map_err(|e| perr(n, format!("seed: {e}")))?;

        let mut averaged: HashMap<String, [S; 6]> = HashMap::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(perr(
                    n,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let r: Relation = fields[0].parse().map_err(|e| perr(n, format!("{e}")))?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|e| perr(n, format!("weight `{}`: {e}", fields[2])))?;
            averaged.entry(fields[1].to_string()).or_insert([S::zero(); 6])[r.index()] = S::from_f64(w);
        }
        Ok(Self {
            bucket,
            epochs_trained,
            seed,
            weights: averaged.clone(),
            averaged,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PerceptronError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| PerceptronError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PerceptronError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PerceptronError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_text(&text)
    }
}

/// A training pair tagged with its source document.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub doc_id: String,
    pub features: FeatureVector,
    pub label: Relation,
}

/// Picks the candidate epoch count with the best mean held-out accuracy,
/// folding over documents. Ties go to fewer epochs.
pub fn tune_epochs<S: Real>(
    bucket: Bucket,
    examples: &[LabeledExample],
    folds: usize,
    candidates: &[usize],
    seed: u64,
) -> Result<usize, PerceptronError> {
    if folds < 2 {
        return Err(PerceptronError::InvalidArgument("folds must be at least 2".into()));
    }
    if candidates.is_empty() || candidates.contains(&0) {
        return Err(PerceptronError::InvalidArgument(
            "epoch candidates must be positive".into(),
        ));
    }
    let mut docs: Vec<&str> = Vec::new();
    for ex in examples {
        if !docs.contains(&ex.doc_id.as_str()) {
            docs.push(&ex.doc_id);
        }
    }
    if docs.len() < folds {
        return Err(PerceptronError::InsufficientDocuments {
            documents: docs.len(),
            folds,
        });
    }
    docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: HashMap<&str, usize> = docs.iter().enumerate().map(|(i, d)| (*d, i % folds)).collect();

    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for &epochs in &sorted {
        let mut total = 0.0;
        let mut used = 0;
        for f in 0..folds {
            let (test, train): (Vec<&LabeledExample>, Vec<&LabeledExample>) =
                examples.iter().partition(|ex| fold_of[ex.doc_id.as_str()] == f);
            if test.is_empty() || train.is_empty() {
                continue;
            }
            let train: Vec<(FeatureVector, Relation)> =
                train.iter().map(|ex| (ex.features.clone(), ex.label)).collect();
            let model = PerceptronModel::<S>::train(bucket, &train, epochs, seed)?;
            let correct = test
                .iter()
                .filter(|ex| model.predict(&ex.features).label == ex.label)
                .count();
            total += correct as f64 / test.len() as f64;
            used += 1;
        }
        let mean = if used == 0 { 0.0 } else { total / used as f64 };
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((epochs, mean));
        }
    }
    Ok(best.expect("at least one candidate").0)
}
