//! Seeded synthetic data: a random DAG with bounded indegree, Dirichlet(1)
//! conditional probability tables, and ancestral sampling.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};

use crate::scoring::{DataError, DataMatrix};
use crate::varset::VarSet;

/// Attempts at drawing a data set without constant columns.
const MAX_DRAWS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthSpec {
    pub vars: usize,
    pub samples: usize,
    pub max_indegree: usize,
    pub arity: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vars: 8,
            samples: 500,
            max_indegree: 2,
            arity: 2,
            seed: 1,
        }
    }
}

/// A sampled network and its data.
#[derive(Clone, Debug)]
pub struct SyntheticNetwork {
    /// Parents of each node.
    pub parents: Vec<VarSet>,
    pub data: DataMatrix,
}

impl SyntheticNetwork {
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.parents[v].contains(u)
    }
}

/// Random DAG, then data from it.
pub fn generate(spec: &SynthSpec) -> Result<SyntheticNetwork, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..spec.vars).collect();
    order.shuffle(&mut rng);
    let mut parents = vec![VarSet::EMPTY; spec.vars];
    for (pos, &node) in order.iter().enumerate() {
        let count = rng.gen_range(0..=spec.max_indegree.min(pos));
        parents[node] = sample(&mut rng, pos, count)
            .into_iter()
            .map(|p| order[p])
            .collect();
    }
    let arity = vec![spec.arity; spec.vars];
    let data = sample_from_structure(&parents, &arity, spec.samples, &mut rng)?;
    Ok(SyntheticNetwork { parents, data })
}

/// Data from a fixed structure with Dirichlet(1) tables, seeded.
pub fn generate_with_structure(
    parents: &[VarSet],
    arity: &[usize],
    samples: usize,
    seed: u64,
) -> Result<DataMatrix, DataError> {
    sample_from_structure(parents, arity, samples, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn topological(parents: &[VarSet]) -> Vec<usize> {
    let n = parents.len();
    let mut placed = VarSet::EMPTY;
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let before = order.len();
        for v in 0..n {
            if !placed.contains(v) && parents[v].is_subset_of(placed) {
                order.push(v);
                placed = placed.with(v);
            }
        }
        assert!(order.len() > before, "parent sets contain a cycle");
    }
    order
}

fn sample_from_structure(
    parents: &[VarSet],
    arity: &[usize],
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DataMatrix, DataError> {
    let n = parents.len();
    let order = topological(parents);
    let mut last = None;
    for _ in 0..MAX_DRAWS {
        // cpt[v][config] is a distribution over v's states.
        let cpt: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|v| {
                let configs: usize = parents[v].iter().map(|p| arity[p]).product();
                let dirichlet = Dirichlet::new(&vec![1.0; arity[v]]).expect("arity >= 2");
                (0..configs).map(|_| dirichlet.sample(rng)).collect()
            })
            .collect();
        let rows: Vec<Vec<u16>> = (0..samples)
            .map(|_| {
                let mut row = vec![0u16; n];
                for &v in &order {
                    let config = parents[v]
                        .iter()
                        .fold(0, |acc, p| acc * arity[p] + row[p] as usize);
                    row[v] = draw(&cpt[v][config], rng.gen::<f64>()) as u16;
                }
                row
            })
            .collect();
        let columns: Vec<Vec<u16>> = (0..n).map(|v| rows.iter().map(|r| r[v]).collect()).collect();
        if let Some(v) = columns.iter().position(|c| c.iter().all(|&x| x == c[0])) {
            last = Some(v);
            continue;
        }
        let names = (0..n).map(|i| format!("X{i}")).collect();
        return DataMatrix::new(names, arity.to_vec(), columns);
    }
    Err(DataError::ConstantColumn {
        name: format!("X{}", last.unwrap_or(0)),
    })
}

fn draw(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_bounded() {
        let spec = SynthSpec {
            vars: 10,
            samples: 200,
            max_indegree: 3,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.parents, b.parents);
        assert!(a.parents.iter().all(|p| p.len() <= 3));
        assert_eq!(a.data.samples(), 200);
        assert_eq!(topological(&a.parents).len(), 10);
        let c = generate(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn fixed_structure() {
        let parents = [VarSet::EMPTY, VarSet::singleton(0), VarSet::singleton(1)];
        let data = generate_with_structure(&parents, &[2, 3, 2], 100, 7).unwrap();
        assert_eq!(data.arities(), &[2, 3, 2]);
        assert!(data.column(1).iter().all(|&x| x < 3));
    }
}
