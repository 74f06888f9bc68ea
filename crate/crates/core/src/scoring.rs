//! Discrete data and local family scores.
//!
//! A family score is the log of `rho_i(G) * p(x_i | x_G, G) * f_i(G)`: the
//! parent-set prior weight, the Dirichlet-multinomial marginal likelihood of
//! column `i` given its parents, and a 0/1 feature indicator.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logspace::{LogScore, LOG_ZERO};
use crate::varset::{binomial, subsets_upto, VarSet, MAX_VARS};

/// Default ceiling on the number of parent configurations of one family.
pub const DEFAULT_CONFIG_CAP: u64 = 1 << 20;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty file")]
    Empty,
    #[error("row width mismatch at line {line}: expected {expected} fields, found {found}")]
    RowWidth {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("constant column `{name}`: a variable needs at least two observed states")]
    ConstantColumn { name: String },
    #[error("column `{name}` has {arity} states, more than the supported {max}")]
    TooManyStates {
        name: String,
        arity: usize,
        max: usize,
    },
    #[error("{n} variables exceed the supported maximum of {max}")]
    TooManyVariables { n: usize, max: usize },
    #[error("cell ({row}, {col}) holds state {value} but the column arity is {arity}")]
    CellOutOfRange {
        row: usize,
        col: usize,
        value: u16,
        arity: usize,
    },
    #[error("column lengths disagree")]
    Ragged,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error(
        "node {node} with parents {parents:?} has {configs} parent configurations, above the cap of {cap}"
    )]
    TooManyConfigurations {
        node: usize,
        parents: VarSet,
        configs: u128,
        cap: u64,
    },
    #[error("node {node} cannot be its own parent")]
    SelfParent { node: usize },
    #[error("BDeu equivalent sample size must be positive, got {0}")]
    BadEss(f64),
}

/// Fully observed categorical data, stored column by column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataMatrix {
    names: Vec<String>,
    arity: Vec<usize>,
    columns: Vec<Vec<u16>>,
    samples: usize,
}

impl DataMatrix {
    /// Build from columns of state codes. Every code must be below its
    /// column's arity and every arity must be at least two.
    pub fn new(
        names: Vec<String>,
        arity: Vec<usize>,
        columns: Vec<Vec<u16>>,
    ) -> Result<Self, DataError> {
        let n = columns.len();
        if n == 0 {
            return Err(DataError::Empty);
        }
        if n > MAX_VARS - 1 {
            return Err(DataError::TooManyVariables {
                n,
                max: MAX_VARS - 1,
            });
        }
        if names.len() != n || arity.len() != n {
            return Err(DataError::Ragged);
        }
        let samples = columns[0].len();
        if samples == 0 {
            return Err(DataError::Empty);
        }
        for (col, values) in columns.iter().enumerate() {
            if values.len() != samples {
                return Err(DataError::Ragged);
            }
            if arity[col] < 2 {
                return Err(DataError::ConstantColumn {
                    name: names[col].clone(),
                });
            }
            if let Some((row, &value)) = values
                .iter()
                .enumerate()
                .find(|(_, &v)| v as usize >= arity[col])
            {
                return Err(DataError::CellOutOfRange {
                    row,
                    col,
                    value,
                    arity: arity[col],
                });
            }
        }
        Ok(DataMatrix {
            names,
            arity,
            columns,
            samples,
        })
    }

    /// Build from rows of state codes, taking each column's arity as one more
    /// than its largest code. Names default to `X0, X1, ...`.
    pub fn from_rows(rows: &[Vec<u16>]) -> Result<Self, DataError> {
        let n = rows.first().map(Vec::len).ok_or(DataError::Empty)?;
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(DataError::RowWidth {
                    line: r as u64 + 1,
                    expected: n,
                    found: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                columns[c].push(v);
            }
        }
        let arity = columns
            .iter()
            .map(|c| c.iter().copied().max().unwrap_or(0) as usize + 1)
            .collect();
        let names = (0..n).map(|i| format!("X{i}")).collect();
        DataMatrix::new(names, arity, columns)
    }

    pub fn vars(&self) -> usize {
        self.columns.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn arity(&self, i: usize) -> usize {
        self.arity[i]
    }

    pub fn arities(&self) -> &[usize] {
        &self.arity
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, i: usize) -> &[u16] {
        &self.columns[i]
    }

    /// The same data with its rows reordered by `order`.
    pub fn permute_rows(&self, order: &[usize]) -> DataMatrix {
        let columns = self
            .columns
            .iter()
            .map(|c| order.iter().map(|&r| c[r]).collect())
            .collect();
        DataMatrix {
            columns,
            ..self.clone()
        }
    }

    /// The same data with variable `perm[i]` of the result taken from
    /// variable `i` of `self`.
    pub fn relabel(&self, perm: &[usize]) -> DataMatrix {
        let n = self.vars();
        let mut names = vec![String::new(); n];
        let mut arity = vec![0; n];
        let mut columns = vec![Vec::new(); n];
        for (i, &p) in perm.iter().enumerate() {
            names[p] = self.names[i].clone();
            arity[p] = self.arity[i];
            columns[p] = self.columns[i].clone();
        }
        DataMatrix {
            names,
            arity,
            columns,
            samples: self.samples,
        }
    }
}

/// Read a comma-separated file with a header row of variable names.
///
/// Labels are dictionary-encoded per column in order of first appearance, so
/// integer and string labels are treated alike.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DataMatrix, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<DataMatrix, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let names: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(DataError::Empty);
    }
    let n = names.len();
    let mut dictionaries: Vec<HashMap<String, u16>> = vec![HashMap::new(); n];
    let mut columns: Vec<Vec<u16>> = vec![Vec::new(); n];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n {
            return Err(DataError::RowWidth {
                line,
                expected: n,
                found: record.len(),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let dict = &mut dictionaries[c];
            let next = dict.len();
            let code = match dict.get(field) {
                Some(&code) => code,
                None => {
                    if next > u16::MAX as usize {
                        return Err(DataError::TooManyStates {
                            name: names[c].clone(),
                            arity: next + 1,
                            max: u16::MAX as usize + 1,
                        });
                    }
                    dict.insert(field.to_owned(), next as u16);
                    next as u16
                }
            };
            columns[c].push(code);
        }
    }
    if columns[0].is_empty() {
        return Err(DataError::Empty);
    }
    let arity = dictionaries.iter().map(HashMap::len).collect();
    DataMatrix::new(names, arity, columns)
}

/// Conjugate Dirichlet-multinomial local likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScoreKind {
    /// Likelihood-equivalent uniform prior with the given equivalent sample size.
    BDeu { ess: f64 },
    /// All hyperparameters equal to one.
    K2,
}

/// The parent-set weight `rho_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParentPrior {
    /// `rho_i(G) = 1 / C(n-1, |G|)`.
    UniformPerCardinality,
    ConstantOne,
}

/// The order weight `q_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderPrior {
    ConstantOne,
}

/// Modular prior over orders and parent sets, plus the likelihood choice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub score: ScoreKind,
    pub rho: ParentPrior,
    pub q: OrderPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            score: ScoreKind::BDeu { ess: 1.0 },
            rho: ParentPrior::UniformPerCardinality,
            q: OrderPrior::ConstantOne,
        }
    }
}

impl PriorSpec {
    pub fn k2() -> Self {
        PriorSpec {
            score: ScoreKind::K2,
            ..PriorSpec::default()
        }
    }

    pub fn bdeu(ess: f64) -> Self {
        PriorSpec {
            score: ScoreKind::BDeu { ess },
            ..PriorSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        match self.score {
            ScoreKind::BDeu { ess } if !(ess > 0.0 && ess.is_finite()) => {
                Err(ScoreError::BadEss(ess))
            }
            _ => Ok(()),
        }
    }

    /// `log rho_i(G)` for a domain of `n` variables.
    pub fn log_rho(&self, n: usize, parents: VarSet) -> LogScore {
        match self.rho {
            ParentPrior::UniformPerCardinality => {
                -(binomial(n - 1, parents.len()) as f64).ln()
            }
            ParentPrior::ConstantOne => 0.0,
        }
    }

    /// `log q_i(L)`.
    pub fn log_q(&self, _node: usize, _predecessors: VarSet) -> LogScore {
        match self.q {
            OrderPrior::ConstantOne => 0.0,
        }
    }
}

/// A modular structural feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    /// `f == 1`.
    Trivial,
    /// The edge `from -> to`: `f_to(G) = [from in G]`, every other factor 1.
    Edge { from: usize, to: usize },
}

impl Feature {
    /// `f_node(parents)`.
    pub fn admits(&self, node: usize, parents: VarSet) -> bool {
        match *self {
            Feature::Trivial => true,
            Feature::Edge { from, to } => node != to || parents.contains(from),
        }
    }
}

/// Scores families of one data set under one prior.
#[derive(Clone, Debug)]
pub struct FamilyScorer<'a> {
    data: &'a DataMatrix,
    prior: PriorSpec,
    config_cap: u64,
}

impl<'a> FamilyScorer<'a> {
    pub fn new(data: &'a DataMatrix, prior: PriorSpec) -> Result<Self, ScoreError> {
        prior.validate()?;
        Ok(FamilyScorer {
            data,
            prior,
            config_cap: DEFAULT_CONFIG_CAP,
        })
    }

    pub fn with_config_cap(mut self, cap: u64) -> Self {
        self.config_cap = cap;
        self
    }

    pub fn data(&self) -> &'a DataMatrix {
        self.data
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    /// `log p(x_i | x_G, G)`.
    pub fn local_marginal_loglik(&self, node: usize, parents: VarSet) -> Result<LogScore, ScoreError> {
        if parents.contains(node) {
            return Err(ScoreError::SelfParent { node });
        }
        let data = self.data;
        let r = data.arity(node);
        let mut configs: u128 = 1;
        for p in parents.iter() {
            configs *= data.arity(p) as u128;
        }
        if configs > self.config_cap as u128 {
            return Err(ScoreError::TooManyConfigurations {
                node,
                parents,
                configs,
                cap: self.config_cap,
            });
        }

        // Parent configurations in order of first appearance keep the
        // floating-point accumulation order independent of hashing.
        let parent_cols: Vec<(&[u16], u64)> = {
            let mut stride = 1u64;
            parents
                .iter()
                .map(|p| {
                    let entry = (data.column(p), stride);
                    stride *= data.arity(p) as u64;
                    entry
                })
                .collect()
        };
        let child = data.column(node);
        let mut slot_of: HashMap<u64, usize> = HashMap::new();
        let mut counts: Vec<u32> = Vec::new();
        for row in 0..data.samples() {
            let key = parent_cols
                .iter()
                .map(|(col, stride)| col[row] as u64 * stride)
                .sum::<u64>();
            let next = slot_of.len();
            let slot = *slot_of.entry(key).or_insert(next);
            if slot == next {
                counts.resize(counts.len() + r, 0);
            }
            counts[slot * r + child[row] as usize] += 1;
        }

        let (alpha_cell, alpha_row) = match self.prior.score {
            ScoreKind::BDeu { ess } => {
                let q = configs as f64;
                (ess / (r as f64 * q), ess / q)
            }
            ScoreKind::K2 => (1.0, r as f64),
        };
        let lg_cell = libm::lgamma(alpha_cell);
        let lg_row = libm::lgamma(alpha_row);
        let mut total = 0.0;
        for row_counts in counts.chunks_exact(r) {
            let n_row: u32 = row_counts.iter().sum();
            total += lg_row - libm::lgamma(alpha_row + n_row as f64);
            for &c in row_counts {
                if c > 0 {
                    total += libm::lgamma(alpha_cell + c as f64) - lg_cell;
                }
            }
        }
        Ok(total)
    }

    /// `log rho_i(G) + log p(x_i | x_G, G)` for the trivial feature.
    pub fn family_score(&self, node: usize, parents: VarSet) -> Result<LogScore, ScoreError> {
        Ok(self.prior.log_rho(self.data.vars(), parents)
            + self.local_marginal_loglik(node, parents)?)
    }
}

/// Local scores `B_i(G)` of one node for all `G` in `V - {i}` with `|G| <= d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyScoreTable {
    pub node: usize,
    pub max_indegree: usize,
    /// In the order produced by [`subsets_upto`].
    pub entries: Vec<(VarSet, LogScore)>,
}

impl FamilyScoreTable {
    pub fn get(&self, parents: VarSet) -> Option<LogScore> {
        self.entries
            .binary_search_by_key(&(parents.len(), parents.bits()), |(g, _)| {
                (g.len(), g.bits())
            })
            .ok()
            .map(|idx| self.entries[idx].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Score every admissible parent set of `node`. Sets rejected by `feature`
/// get `-inf` without being scored.
pub fn build_family_scores(
    scorer: &FamilyScorer<'_>,
    node: usize,
    max_indegree: usize,
    feature: Feature,
) -> Result<FamilyScoreTable, ScoreError> {
    let n = scorer.data().vars();
    let candidates = VarSet::full(n).without(node);
    let entries = subsets_upto(candidates, max_indegree)
        .into_iter()
        .map(|g| {
            let score = if feature.admits(node, g) {
                scorer.family_score(node, g)?
            } else {
                LOG_ZERO
            };
            Ok((g, score))
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    Ok(FamilyScoreTable {
        node,
        max_indegree,
        entries,
    })
}
