//! Rank computations over GF(2).
//!
//! Matrices here are tiny (a generator matrix has at most 20 columns), so the
//! elimination works on plain byte rows for the public entry point and on
//! `u32` bit masks for the hot paths used by the code and simulator modules.

/// Rank over GF(2) of a matrix given as rows of 0/1 entries.
///
/// Any nonzero entry is read as 1. Rows may be ragged; missing entries are
/// zero. The input is not modified.
pub fn rank_gf2(matrix: &[Vec<u8>]) -> usize {
    let cols = matrix.iter().map(Vec::len).max().unwrap_or(0);
    let mut rows: Vec<Vec<bool>> = matrix
        .iter()
        .map(|r| {
            let mut v: Vec<bool> = r.iter().map(|&b| b != 0).collect();
            v.resize(cols, false);
            v
        })
        .collect();

    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][col]) else {
            continue;
        };
        rows.swap(rank, pivot);
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[col] {
                for (a, &b) in row[col..cols].iter_mut().zip(&pivot_row[col..cols]) {
                    *a ^= b;
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Incrementally built xor basis of GF(2) vectors packed into `u32`.
///
/// Each stored vector has a distinct leading bit, so membership tests reduce
/// a candidate in at most `rank` steps.
#[derive(Debug, Clone, Default)]
pub(crate) struct XorBasis {
    vectors: Vec<u32>,
}

impl XorBasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    fn reduce(&self, mut v: u32) -> u32 {
        for &b in &self.vectors {
            v = v.min(v ^ b);
        }
        v
    }

    /// Inserts `v`; returns true if it was independent of the current span.
    pub fn insert(&mut self, v: u32) -> bool {
        let r = self.reduce(v);
        if r == 0 {
            return false;
        }
        // keep sorted by leading bit, descending, so `reduce` is a single pass
        let pos = self
            .vectors
            .iter()
            .position(|&b| b < r)
            .unwrap_or(self.vectors.len());
        self.vectors.insert(pos, r);
        true
    }

    pub fn contains(&self, v: u32) -> bool {
        self.reduce(v) == 0
    }
}

/// Rank of the span of the given packed vectors.
pub(crate) fn rank_of_masks(vectors: impl IntoIterator<Item = u32>) -> usize {
    let mut basis = XorBasis::new();
    for v in vectors {
        basis.insert(v);
    }
    basis.rank()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_three() {
        assert_eq!(rank_gf2(&[vec![1, 0, 1], vec![0, 1, 1]]), 2);
    }

    #[test]
    fn identity_and_zero() {
        let id = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        assert_eq!(rank_gf2(&id), 3);
        assert_eq!(rank_gf2(&[vec![0, 0], vec![0, 0]]), 0);
        assert_eq!(rank_gf2(&[]), 0);
        assert_eq!(rank_gf2(&[vec![], vec![]]), 0);
    }

    #[test]
    fn dependent_rows() {
        // third row is the sum of the first two
        let m = vec![vec![1, 1, 0, 1], vec![0, 1, 1, 1], vec![1, 0, 1, 0]];
        assert_eq!(rank_gf2(&m), 2);
    }

    #[test]
    fn input_untouched() {
        let m = vec![vec![1, 1], vec![1, 1]];
        let copy = m.clone();
        rank_gf2(&m);
        assert_eq!(m, copy);
    }

    fn to_masks(m: &[Vec<u8>]) -> Vec<u32> {
        m.iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold(0u32, |acc, (i, &b)| acc | ((b as u32 & 1) << i))
            })
            .collect()
    }

    fn transpose(m: &[Vec<u8>], cols: usize) -> Vec<Vec<u8>> {
        (0..cols).map(|c| m.iter().map(|r| r[c]).collect()).collect()
    }

    proptest! {
        #[test]
        fn row_rank_equals_column_rank(rows in 0usize..7, cols in 1usize..9, seed in any::<u64>()) {
            let mut s = seed;
            let m: Vec<Vec<u8>> = (0..rows).map(|_| (0..cols).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 63) as u8
            }).collect()).collect();
            let r = rank_gf2(&m);
            prop_assert!(r <= rows.min(cols));
            prop_assert_eq!(r, rank_gf2(&transpose(&m, cols)));
            prop_assert_eq!(r, rank_of_masks(to_masks(&m)));
        }
    }
}
