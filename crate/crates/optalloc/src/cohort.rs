//! Unit-level records, synthetic cohorts, and the simulated outcome model.
//!
//! A [`Cohort`] is an ordered collection of [`Individual`]s, each carrying a
//! targeting-utility score `u`, a baseline adverse-outcome probability `mu0`
//! and an optional group label. Every individual is tagged as belonging to
//! either the train split (used to solve designs) or the eval split (used to
//! report utility and variance).

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default concentration (`alpha + beta`) of the Beta score generator.
pub const DEFAULT_CONCENTRATION: f64 = 2.0;

/// Default fraction of a synthetic cohort tagged as train.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    /// Targeting utility in `[0, 1]`.
    pub u: f64,
    /// `Pr(Y(0) = 1 | X)` in `[0, 1]`.
    pub mu0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Individual {
    pub fn new(id: impl Into<String>, u: f64, mu0: f64) -> Self {
        Self {
            id: id.into(),
            u,
            mu0,
            group: None,
        }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Split::Train),
            "eval" | "test" => Some(Split::Eval),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    individuals: Vec<Individual>,
    splits: Vec<Split>,
}

impl Cohort {
    /// Builds a cohort with every individual tagged as train.
    pub fn new(individuals: Vec<Individual>) -> Result<Self> {
        let splits = vec![Split::Train; individuals.len()];
        Self::with_splits(individuals, splits)
    }

    pub fn with_splits(individuals: Vec<Individual>, splits: Vec<Split>) -> Result<Self> {
        if individuals.is_empty() {
            return Err(Error::Config("cohort must be nonempty".into()));
        }
        if splits.len() != individuals.len() {
            return Err(Error::Config(format!(
                "{} split tags for {} individuals",
                splits.len(),
                individuals.len()
            )));
        }
        let mut seen = HashSet::with_capacity(individuals.len());
        for (row, ind) in individuals.iter().enumerate() {
            validate_individual(row + 1, ind)?;
            if !seen.insert(ind.id.as_str()) {
                return Err(Error::Validation {
                    row: row + 1,
                    msg: format!("duplicate id `{}`", ind.id),
                });
            }
        }
        Ok(Self {
            individuals,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Individual> {
        self.individuals.iter()
    }

    /// Sub-cohort holding only the individuals tagged `split`, in order.
    pub fn subset(&self, split: Split) -> Result<Cohort> {
        let individuals: Vec<Individual> = self
            .individuals
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(ind, _)| ind.clone())
            .collect();
        if individuals.is_empty() {
            return Err(Error::Config(format!("{} split is empty", split.as_str())));
        }
        let splits = vec![split; individuals.len()];
        Ok(Cohort {
            individuals,
            splits,
        })
    }

    pub fn train(&self) -> Result<Cohort> {
        self.subset(Split::Train)
    }

    pub fn eval(&self) -> Result<Cohort> {
        self.subset(Split::Eval)
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.splits.contains(&split)
    }

    /// Re-tags the cohort with a seeded random split holding
    /// `round(train_fraction * n)` train individuals.
    pub fn assign_random_split(&mut self, train_fraction: f64, seed: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Config(format!(
                "train fraction {train_fraction} outside [0, 1]"
            )));
        }
        let n = self.len();
        let n_train = (train_fraction * n as f64).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5151_7e11_d00d_0001);
        idx.shuffle(&mut rng);
        for (rank, &i) in idx.iter().enumerate() {
            self.splits[i] = if rank < n_train {
                Split::Train
            } else {
                Split::Eval
            };
        }
        Ok(())
    }

    /// Assigns group labels independently of the scores: each individual gets
    /// `labels[k]` with probability `probs[k]`.
    pub fn assign_random_groups(&mut self, labels: &[&str], probs: &[f64], seed: u64) -> Result<()> {
        if labels.is_empty() || labels.len() != probs.len() {
            return Err(Error::Config("group labels and probabilities must align".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|p| *p < 0.0) || total <= 0.0 {
            return Err(Error::Config("group probabilities must be nonnegative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for ind in &mut self.individuals {
            let draw: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = labels[labels.len() - 1];
            for (label, p) in labels.iter().zip(probs) {
                acc += p;
                if draw < acc {
                    chosen = label;
                    break;
                }
            }
            ind.group = Some(chosen.to_string());
        }
        Ok(())
    }

    /// Empirical probability of `group`.
    pub fn group_probability(&self, group: &str) -> f64 {
        let hits = self
            .individuals
            .iter()
            .filter(|i| i.group.as_deref() == Some(group))
            .count();
        hits as f64 / self.len() as f64
    }

    pub fn mean_u(&self) -> f64 {
        self.individuals.iter().map(|i| i.u).sum::<f64>() / self.len() as f64
    }

    pub fn mean_mu0(&self) -> f64 {
        self.individuals.iter().map(|i| i.mu0).sum::<f64>() / self.len() as f64
    }

    pub fn u_values(&self) -> Vec<f64> {
        self.individuals.iter().map(|i| i.u).collect()
    }
}

fn validate_individual(row: usize, ind: &Individual) -> Result<()> {
    if !(0.0..=1.0).contains(&ind.u) {
        return Err(Error::Validation {
            row,
            msg: format!("u = {} outside [0, 1]", ind.u),
        });
    }
    if !(0.0..=1.0).contains(&ind.mu0) {
        return Err(Error::Validation {
            row,
            msg: format!("mu0 = {} outside [0, 1]", ind.mu0),
        });
    }
    Ok(())
}

/// Column names used when reading a cohort file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub id: String,
    pub u: String,
    /// Baseline-risk column. When the column is absent from the file, or
    /// names the same column as `u`, `mu0` is copied from `u`.
    pub mu0: String,
    pub group: String,
    pub split: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            u: "u".into(),
            mu0: "mu0".into(),
            group: "group".into(),
            split: "split".into(),
        }
    }
}

/// Reads a delimited cohort file (comma-separated, header row).
pub fn load_cohort(path: impl AsRef<Path>, schema: &Schema) -> Result<Cohort> {
    let file = std::fs::File::open(path)?;
    read_cohort(file, schema)
}

pub fn read_cohort<R: Read>(reader: R, schema: &Schema) -> Result<Cohort> {
    let mut individuals = Vec::new();
    let mut splits = Vec::new();
    for row in IndividualStream::new(reader, schema)? {
        let (ind, split) = row?;
        individuals.push(ind);
        splits.push(split);
    }
    Cohort::with_splits(individuals, splits)
}

/// Row-by-row reader over a cohort file. Holds one record at a time, so
/// memory does not grow with the file.
pub struct IndividualStream<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    id_col: usize,
    u_col: usize,
    mu0_col: usize,
    group_col: Option<usize>,
    split_col: Option<usize>,
    schema: Schema,
    row: usize,
}

impl<R: Read> IndividualStream<R> {
    pub fn new(reader: R, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let missing = |name: &str| Error::Parse { row: 0, msg: format!("missing column `{name}`") };
        let id_col = col(&schema.id).ok_or_else(|| missing(&schema.id))?;
        let u_col = col(&schema.u).ok_or_else(|| missing(&schema.u))?;
        Ok(Self {
            id_col,
            u_col,
            mu0_col: col(&schema.mu0).unwrap_or(u_col),
            group_col: col(&schema.group),
            split_col: col(&schema.split),
            records: rdr.into_records(),
            schema: schema.clone(),
            row: 0,
        })
    }

    /// Whether the file carries a group column.
    pub fn has_groups(&self) -> bool {
        self.group_col.is_some()
    }

    fn parse(&self, record: &csv::StringRecord) -> Result<(Individual, Split)> {
        let row = self.row;
        let field = |c: usize, name: &str| -> Result<&str> {
            match record.get(c) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::Parse { row, msg: format!("missing `{name}`") }),
            }
        };
        let number = |c: usize, name: &str| -> Result<f64> {
            let raw = field(c, name)?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                msg: format!("`{name}` = `{raw}` is not a number"),
            })
        };
        let id = field(self.id_col, &self.schema.id)?.to_string();
        let u = number(self.u_col, &self.schema.u)?;
        let mu0 = number(self.mu0_col, &self.schema.mu0)?;
        let group = self
            .group_col
            .and_then(|c| record.get(c))
            .filter(|g| !g.is_empty())
            .map(str::to_string);
        let split = match self.split_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => Split::parse(s).ok_or_else(|| Error::Parse {
                row,
                msg: format!("unknown split tag `{s}`"),
            })?,
            None => Split::Train,
        };
        let ind = Individual { id, u, mu0, group };
        validate_individual(row, &ind)?;
        Ok((ind, split))
    }
}

impl<R: Read> Iterator for IndividualStream<R> {
    type Item = Result<(Individual, Split)>;

    fn next(&mut self) -> Option<Self::Item> {
        let record = self.records.next()?;
        self.row += 1;
        Some(match record {
            Ok(r) => self.parse(&r),
            Err(e) => Err(Error::Parse { row: self.row, msg: e.to_string() }),
        })
    }
}

pub fn save_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_cohort(cohort, file)
}

/// Writes `id,u,mu0,group,split` with full float precision.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "u", "mu0", "group", "split"])?;
    for (ind, split) in cohort.individuals.iter().zip(&cohort.splits) {
        wtr.write_record([
            ind.id.as_str(),
            &ind.u.to_string(),
            &ind.mu0.to_string(),
            ind.group.as_deref().unwrap_or(""),
            split.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Law used to draw baseline risks for synthetic cohorts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum ScoreGenerator {
    /// `mu0 ~ Beta(base_rate * concentration, (1 - base_rate) * concentration)`.
    Beta { concentration: f64 },
    /// `mu0 = sigmoid(b0 + x . w)` with `x ~ N(0, I)` and `|w| = scale`; the
    /// intercept `b0` is calibrated so the sample mean matches the base rate.
    Logistic { features: usize, scale: f64 },
}

impl Default for ScoreGenerator {
    fn default() -> Self {
        ScoreGenerator::Beta {
            concentration: DEFAULT_CONCENTRATION,
        }
    }
}

impl ScoreGenerator {
    /// Looks up a generator by name with its default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "beta" => Ok(ScoreGenerator::default()),
            "logistic" => Ok(ScoreGenerator::Logistic {
                features: 5,
                scale: 1.5,
            }),
            other => Err(Error::UnknownGenerator(other.to_string())),
        }
    }

    fn draw(&self, n: usize, base_rate: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match *self {
            ScoreGenerator::Beta { concentration } => {
                if !(concentration > 0.0) {
                    return Err(Error::Config("Beta concentration must be positive".into()));
                }
                let law = Beta::new(base_rate * concentration, (1.0 - base_rate) * concentration)
                    .map_err(|e| Error::Config(e.to_string()))?;
                Ok((0..n).map(|_| law.sample(rng).clamp(0.0, 1.0)).collect())
            }
            ScoreGenerator::Logistic { features, scale } => {
                if features == 0 {
                    return Err(Error::Config("logistic generator needs >= 1 feature".into()));
                }
                let w = scale / (features as f64).sqrt();
                let index: Vec<f64> = (0..n)
                    .map(|_| {
                        (0..features)
                            .map(|_| w * rng.sample::<f64, _>(StandardNormal))
                            .sum()
                    })
                    .collect();
                let mean_at = |b0: f64| {
                    index.iter().map(|z| sigmoid(b0 + z)).sum::<f64>() / n as f64
                };
                let (mut lo, mut hi) = (-50.0, 50.0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mean_at(mid) < base_rate {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let b0 = 0.5 * (lo + hi);
                Ok(index.iter().map(|z| sigmoid(b0 + z)).collect())
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws a cohort of `n` individuals with `u := mu0`, ids `i0..i{n-1}` and a
/// seeded 40/60 train/eval split.
pub fn synthesize_cohort(
    n: usize,
    base_rate: f64,
    generator: &ScoreGenerator,
    seed: u64,
) -> Result<Cohort> {
    if n == 0 {
        return Err(Error::Config("cohort size must be at least 1".into()));
    }
    if !(base_rate > 0.0 && base_rate < 1.0) {
        return Err(Error::Config(format!("base rate {base_rate} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = generator.draw(n, base_rate, &mut rng)?;
    let individuals = scores
        .into_iter()
        .enumerate()
        .map(|(i, mu0)| Individual::new(format!("i{i}"), mu0, mu0))
        .collect();
    let mut cohort = Cohort::new(individuals)?;
    cohort.assign_random_split(DEFAULT_TRAIN_FRACTION, seed)?;
    Ok(cohort)
}

/// The two empirical settings the toolkit ships presets for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Base rate 0.54, 40% train.
    Housing,
    /// Base rate 0.39, 60% train.
    Reentry,
}

impl Preset {
    pub fn base_rate(self) -> f64 {
        match self {
            Preset::Housing => 0.54,
            Preset::Reentry => 0.39,
        }
    }

    pub fn train_fraction(self) -> f64 {
        match self {
            Preset::Housing => 0.4,
            Preset::Reentry => 0.6,
        }
    }

    pub fn synthesize(self, n: usize, seed: u64) -> Result<Cohort> {
        let mut cohort = synthesize_cohort(n, self.base_rate(), &ScoreGenerator::default(), seed)?;
        cohort.assign_random_split(self.train_fraction(), seed)?;
        Ok(cohort)
    }
}

/// Constant relative effect: `tau(X) = beta * mu0(X)`, so
/// `Y(1) ~ Bernoulli(mu0 - tau(X))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub beta: f64,
}

impl OutcomeModel {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Config(format!("effect multiplier {beta} outside [0, 1)")));
        }
        Ok(Self { beta })
    }

    /// Conditional effect magnitude (reduction in adverse-outcome probability).
    pub fn tau_x(&self, mu0: f64) -> f64 {
        self.beta * mu0
    }

    pub fn mu1(&self, mu0: f64) -> f64 {
        mu0 - self.tau_x(mu0)
    }

    pub fn var0(&self, mu0: f64) -> f64 {
        mu0 * (1.0 - mu0)
    }

    pub fn var1(&self, mu0: f64) -> f64 {
        let m = self.mu1(mu0);
        m * (1.0 - m)
    }

    /// Population effect over a cohort, `mean(tau(X))`.
    pub fn tau(&self, cohort: &Cohort) -> f64 {
        cohort.iter().map(|i| self.tau_x(i.mu0)).sum::<f64>() / cohort.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PotentialOutcomes {
    pub y0: bool,
    pub y1: bool,
}

/// Draws `(Y0, Y1)` per individual from one shared uniform each, so that
/// `Y1 <= Y0` and `beta = 0` gives `Y0 == Y1`.
pub fn draw_potential_outcomes(
    cohort: &Cohort,
    model: &OutcomeModel,
    seed: u64,
) -> Vec<PotentialOutcomes> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cohort
        .iter()
        .map(|ind| {
            let v: f64 = rng.random();
            PotentialOutcomes {
                y0: v < ind.mu0,
                y1: v < model.mu1(ind.mu0),
            }
        })
        .collect()
}
