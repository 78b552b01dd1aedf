//! Subset partitions and index-selection strategies.

use crate::error::{invalid, Result};
use crate::rng::{stream, STREAM_SAMPLER};
use rand::RngExt;
use rand_pcg::Pcg64;

/// Disjoint index sets covering `0..n_items`, sizes differing by at most one.
#[derive(Debug, Clone)]
pub struct Partition {
    sets: Vec<Vec<usize>>,
    n_items: usize,
}

impl Partition {
    pub fn n_subsets(&self) -> usize {
        self.sets.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.sets
    }
}

/// Staggered (equidistant) partition: subset `i` takes items
/// `i, i + n, i + 2n, ...`. For operator rows ordered by angle this spreads
/// every subset across the whole angular range, balancing the subset norms.
pub fn partition_staggered(n_items: usize, n_subsets: usize) -> Result<Partition> {
    if n_subsets == 0 || n_subsets > n_items {
        return Err(invalid(format!(
            "cannot split {n_items} items into {n_subsets} subsets"
        )));
    }
    let mut sets = vec![Vec::new(); n_subsets];
    for item in 0..n_items {
        sets[item % n_subsets].push(item);
    }
    Ok(Partition { sets, n_items })
}

/// Deterministic decorrelating order over `0..n` by mixed-radix digit
/// reversal of the prime factorisation of `n`.
///
/// Primes are taken in ascending order with multiplicity; index `i` is
/// expanded in the mixed radix with place values `1, p_1, p_1 p_2, ...` and
/// re-assembled with reversed place values `n/p_1, n/(p_1 p_2), ..., 1`.
/// For a power of two this is exactly bit reversal.
pub fn herman_meyer_order(n: usize) -> Vec<usize> {
    if n <= 1 {
        return (0..n).collect();
    }
    let primes = factorise(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rem = i;
        let mut scaled = 0usize;
        let mut place = n;
        for &p in &primes {
            let digit = rem % p;
            rem /= p;
            place /= p;
            scaled += digit * place;
        }
        out.push(scaled);
    }
    out
}

fn factorise(mut n: usize) -> Vec<usize> {
    let mut primes = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            primes.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        primes.push(n);
    }
    primes
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerKind {
    /// Uniform with replacement; the analysis default.
    UniformReplacement,
    /// Uniform without replacement, reshuffled each epoch.
    Permutation,
    Cyclic,
    HermanMeyer,
    /// Fixed probabilities, e.g. `p_i = L_i / sum L_j`.
    Importance(Vec<f64>),
}

/// Deterministic index stream over `0..n` for a given seed.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    n: usize,
    seed: u64,
    rng: Pcg64,
    order: Vec<usize>,
    pos: usize,
    cumulative: Vec<f64>,
}

impl Sampler {
    pub fn new(kind: SamplerKind, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("sampler needs at least one index"));
        }
        let mut cumulative = Vec::new();
        if let SamplerKind::Importance(ref p) = kind {
            if p.len() != n {
                return Err(invalid("importance weights must have length n"));
            }
            if p.iter().any(|&w| w < 0.0) {
                return Err(invalid("importance weights must be nonnegative"));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid("importance weights must sum to 1"));
            }
            let mut acc = 0.0;
            for &w in p {
                acc += w;
                cumulative.push(acc);
            }
            if let Some(last) = cumulative.last_mut() {
                *last = 1.0;
            }
        }
        let order = match kind {
            SamplerKind::HermanMeyer => herman_meyer_order(n),
            SamplerKind::Permutation => (0..n).collect(),
            _ => Vec::new(),
        };
        Ok(Sampler {
            kind,
            n,
            seed,
            rng: stream(seed, STREAM_SAMPLER),
            order,
            pos: 0,
            cumulative,
        })
    }

    pub fn uniform(n: usize, seed: u64) -> Result<Self> {
        Sampler::new(SamplerKind::UniformReplacement, n, seed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> &SamplerKind {
        &self.kind
    }

    /// Same strategy, fresh stream; for parallel experiment replicas.
    pub fn clone_with_seed(&self, seed: u64) -> Sampler {
        let mut s = self.clone();
        s.seed = seed;
        s.rng = stream(seed, STREAM_SAMPLER);
        s.pos = 0;
        if let SamplerKind::Permutation = s.kind {
            s.order = (0..s.n).collect();
        }
        s
    }

    pub fn next_index(&mut self) -> usize {
        match &self.kind {
            SamplerKind::UniformReplacement => self.rng.random_range(0..self.n),
            SamplerKind::Cyclic => {
                let i = self.pos % self.n;
                self.pos += 1;
                i
            }
            SamplerKind::HermanMeyer => {
                let i = self.order[self.pos % self.n];
                self.pos += 1;
                i
            }
            SamplerKind::Permutation => {
                if self.pos.is_multiple_of(self.n) {
                    // Fisher–Yates reshuffle at each epoch boundary
                    for i in (1..self.n).rev() {
                        let j = self.rng.random_range(0..=i);
                        self.order.swap(i, j);
                    }
                }
                let i = self.order[self.pos % self.n];
                self.pos += 1;
                i
            }
            SamplerKind::Importance(_) => {
                let u: f64 = self.rng.random_range(0.0..1.0);
                match self
                    .cumulative
                    .binary_search_by(|c| c.partial_cmp(&u).expect("finite"))
                {
                    Ok(i) => (i + 1).min(self.n - 1),
                    Err(i) => i.min(self.n - 1),
                }
            }
        }
    }
}
