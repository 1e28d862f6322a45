//! The interference structure `A` and treatment exposures.
//!
//! `A[i][j] = 1` means unit `j` may affect the outcome of unit `i`. The matrix
//! is stored in compressed sparse rows with `u32` column indices, which keeps
//! trial-scale networks (tens of thousands of units, a few hundred neighbours
//! each) to a few tens of megabytes.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterferenceMatrix {
    n: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl InterferenceMatrix {
    /// A matrix with no edges.
    pub fn empty(n: usize) -> Self {
        Self { n, offsets: vec![0; n + 1], neighbors: Vec::new() }
    }

    /// Build from `(i, j)` pairs meaning `A[i][j] = 1`. Duplicates collapse.
    /// With `symmetric` every pair is also inserted as `(j, i)`.
    pub fn from_edges(edges: &[(usize, usize)], n: usize, symmetric: bool) -> Result<Self> {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { i, j, n });
            }
            if i == j {
                return Err(Error::SelfEdge(i));
            }
            rows[i].push(j as u32);
            if symmetric {
                rows[j].push(i as u32);
            }
        }
        Self::from_rows(rows)
    }

    /// Build from per-unit neighbour lists (in any order, duplicates allowed).
    pub fn from_rows(mut rows: Vec<Vec<u32>>) -> Result<Self> {
        let n = rows.len();
        if n > u32::MAX as usize {
            return Err(Error::invalid("more units than a u32 index can address"));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            for &j in row.iter() {
                let j = j as usize;
                if j >= n {
                    return Err(Error::IndexOutOfRange { i, j, n });
                }
                if j == i {
                    return Err(Error::SelfEdge(i));
                }
            }
            neighbors.extend_from_slice(row);
            offsets.push(neighbors.len());
        }
        Ok(Self { n, offsets, neighbors })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted neighbour indices of unit `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// `A_i`, the size of unit `i`'s interference set.
    #[inline]
    pub fn row_sum(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Number of nonzero entries, `sum_i A_i`.
    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        j <= u32::MAX as usize && self.row(i).binary_search(&(j as u32)).is_ok()
    }

    /// All `(i, j)` with `A[i][j] = 1`, row-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j as usize)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|(i, j)| self.contains(j, i))
    }

    /// `A` with every edge mirrored.
    pub fn symmetrized(&self) -> Self {
        let mut rows: Vec<Vec<u32>> = (0..self.n).map(|i| self.row(i).to_vec()).collect();
        for (i, j) in self.edges() {
            rows[j].push(i as u32);
        }
        Self::from_rows(rows).expect("mirroring a valid matrix stays valid")
    }

    /// `T_i = sum_j A_ij z_j` for every unit, written into `out`.
    #[inline]
    pub fn treated_counts_into(&self, z: &[bool], out: &mut [u32]) {
        debug_assert_eq!(z.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.row(i).iter().filter(|&&j| z[j as usize]).count() as u32;
        }
    }

    pub fn treated_counts(&self, z: &[bool]) -> Vec<u32> {
        let mut out = vec![0; self.n];
        self.treated_counts_into(z, &mut out);
        out
    }

    /// Summary of the row sums (min, quartiles, mean, max).
    pub fn degree_summary(&self) -> DegreeSummary {
        let mut sums = self.row_sums();
        sums.sort_unstable();
        DegreeSummary::from_sorted(&sums)
    }
}

/// Distribution of interference-set sizes. Quartiles use linear interpolation
/// between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DegreeSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
}

impl DegreeSummary {
    fn from_sorted(sorted: &[usize]) -> Self {
        if sorted.is_empty() {
            return Self { n: 0, min: 0.0, q1: 0.0, median: 0.0, mean: 0.0, q3: 0.0, max: 0.0 };
        }
        let q = |p: f64| {
            let h = (sorted.len() - 1) as f64 * p;
            let lo = libm::floor(h) as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            sorted[lo] as f64 + (h - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64)
        };
        Self {
            n: sorted.len(),
            min: sorted[0] as f64,
            q1: q(0.25),
            median: q(0.5),
            mean: sorted.iter().sum::<usize>() as f64 / sorted.len() as f64,
            q3: q(0.75),
            max: sorted[sorted.len() - 1] as f64,
        }
    }
}

/// Treated-neighbour counts and proportions under one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureVector {
    /// `T_i`
    pub counts: Vec<u32>,
    /// `G_i = T_i / A_i`, zero when `A_i = 0`
    pub proportions: Vec<f64>,
    /// `G*_i = T_i / B_i`, present when a denominator was supplied
    pub proportions_star: Option<Vec<f64>>,
}

/// Check `B_i >= A_i` for every unit.
pub fn check_denominators(a: &InterferenceMatrix, b: &[u32]) -> Result<()> {
    if b.len() != a.n() {
        return Err(Error::LengthMismatch { what: "denominators", expected: a.n(), found: b.len() });
    }
    for (i, &bi) in b.iter().enumerate() {
        if (bi as usize) < a.row_sum(i) {
            return Err(Error::DenominatorTooSmall { index: i, denominator: bi, row_sum: a.row_sum(i) });
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn ratio(count: u32, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        count as f64 / denom as f64
    }
}

pub fn exposure(a: &InterferenceMatrix, z: &[bool], b: Option<&[u32]>) -> Result<ExposureVector> {
    if z.len() != a.n() {
        return Err(Error::LengthMismatch { what: "treatment vector", expected: a.n(), found: z.len() });
    }
    if let Some(b) = b {
        check_denominators(a, b)?;
    }
    let counts = a.treated_counts(z);
    let proportions = counts.iter().enumerate().map(|(i, &t)| ratio(t, a.row_sum(i))).collect();
    let proportions_star = b.map(|b| counts.iter().zip(b).map(|(&t, &bi)| ratio(t, bi as usize)).collect());
    Ok(ExposureVector { counts, proportions, proportions_star })
}

/// Each unit draws `A_i ~ Poisson(mean)` (truncated at `n - 1`) and then that
/// many distinct other units uniformly without replacement. The result is in
/// general not symmetric.
pub fn gen_poisson_neighbors<R: Rng + ?Sized>(n: usize, mean: f64, rng: &mut R) -> Result<InterferenceMatrix> {
    if n < 2 {
        return Err(Error::invalid("poisson network needs n >= 2"));
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::invalid("poisson mean must be positive and finite"));
    }
    let poisson = Poisson::new(mean).map_err(|_| Error::invalid("poisson mean out of range"))?;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let draw: f64 = poisson.sample(rng);
        let size = (draw as usize).min(n - 1);
        let row: Vec<u32> = rand::seq::index::sample(rng, n - 1, size)
            .into_iter()
            .map(|j| if j >= i { j + 1 } else { j } as u32)
            .collect();
        rows.push(row);
    }
    InterferenceMatrix::from_rows(rows)
}

/// Linear preferential attachment grown one unit at a time. Unit `j` links to
/// `min(j, m_edges)` distinct earlier units, each chosen with probability
/// proportional to its current degree plus one. The result is symmetric.
pub fn gen_preferential_attachment<R: Rng + ?Sized>(
    n: usize,
    m_edges: usize,
    rng: &mut R,
) -> Result<InterferenceMatrix> {
    if n < 2 {
        return Err(Error::invalid("preferential attachment needs n >= 2"));
    }
    if m_edges == 0 || m_edges >= n {
        return Err(Error::invalid("m_edges must satisfy 1 <= m_edges < n"));
    }
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    // Unit i appears deg(i) + 1 times.
    let mut pool: Vec<u32> = Vec::with_capacity(n * (2 * m_edges + 1));
    pool.push(0);
    let mut chosen: Vec<u32> = Vec::with_capacity(m_edges);
    for j in 1..n {
        chosen.clear();
        let k = j.min(m_edges);
        if k == j {
            chosen.extend(0..j as u32);
        } else {
            while chosen.len() < k {
                let t = pool[rng.random_range(0..pool.len())];
                if !chosen.contains(&t) {
                    chosen.push(t);
                }
            }
        }
        for &t in &chosen {
            rows[j].push(t);
            rows[t as usize].push(j as u32);
            pool.push(t);
            pool.push(j as u32);
        }
        pool.push(j as u32);
    }
    InterferenceMatrix::from_rows(rows)
}
