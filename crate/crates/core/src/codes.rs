//! Segment-level binary linear block codes.
//!
//! A user splits its packet into `k` segments and encodes them with an
//! `(n, k)` binary code described by its `k × n` generator matrix. The
//! receiver's MAP erasure decoder recovers exactly those coordinates whose
//! generator columns lie in the span of the columns it already holds.
//!
//! Coordinates are 0-indexed in this API.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{rank_gf2, rank_of_masks, XorBasis};

/// Largest code length for which exhaustive subset enumeration is allowed.
pub const MAX_CODE_LENGTH: usize = 20;

/// One reason a generator matrix does not describe an admissible code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CodeViolation {
    /// Generator shape disagrees with the declared `(n, k)`.
    Shape { rows: usize, expected_rows: usize },
    RowLength { row: usize, len: usize, expected: usize },
    NonBinaryEntry { row: usize, col: usize, value: u8 },
    /// `k` must be at least 1 and strictly below `n`.
    Dimension { n: usize, k: usize },
    RankDeficient { rank: usize, k: usize },
    IdleSymbol { col: usize },
    MinimumDistance { d_min: usize },
    TooLong { n: usize, limit: usize },
}

impl fmt::Display for CodeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeViolation::Shape {
                rows,
                expected_rows,
            } => write!(f, "generator has {rows} rows, expected k = {expected_rows}"),
            CodeViolation::RowLength { row, len, expected } => {
                write!(f, "generator row {row} has {len} entries, expected n = {expected}")
            }
            CodeViolation::NonBinaryEntry { row, col, value } => {
                write!(f, "generator entry ({row}, {col}) = {value} is not binary")
            }
            CodeViolation::Dimension { n, k } => write!(f, "need 1 <= k < n, got n = {n}, k = {k}"),
            CodeViolation::RankDeficient { rank, k } => {
                write!(f, "generator has GF(2) rank {rank} < k = {k}")
            }
            CodeViolation::IdleSymbol { col } => write!(f, "column {col} is all zero (idle symbol)"),
            CodeViolation::MinimumDistance { d_min } => {
                write!(f, "minimum distance {d_min} < 2")
            }
            CodeViolation::TooLong { n, limit } => {
                write!(f, "code length {n} exceeds limit {limit}")
            }
        }
    }
}

/// Serialized form of a code: `{ "k": int, "n": int, "generator": [[0|1,...],...] }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCode {
    pub k: usize,
    pub n: usize,
    pub generator: Vec<Vec<u8>>,
}

/// Checks every code invariant and lists all that fail.
///
/// The minimum distance is found by enumerating all `2^k - 1` nonzero
/// codewords, so it is only attempted once the shape checks pass.
pub fn validate_code(raw: &RawCode) -> std::result::Result<(), Vec<CodeViolation>> {
    let mut out = Vec::new();
    let RawCode { k, n, generator } = raw;
    let (k, n) = (*k, *n);

    if n > MAX_CODE_LENGTH {
        out.push(CodeViolation::TooLong {
            n,
            limit: MAX_CODE_LENGTH,
        });
        return Err(out);
    }
    if k == 0 || k >= n {
        out.push(CodeViolation::Dimension { n, k });
    }
    if generator.len() != k {
        out.push(CodeViolation::Shape {
            rows: generator.len(),
            expected_rows: k,
        });
    }
    for (r, row) in generator.iter().enumerate() {
        if row.len() != n {
            out.push(CodeViolation::RowLength {
                row: r,
                len: row.len(),
                expected: n,
            });
        }
        for (c, &v) in row.iter().enumerate() {
            if v > 1 {
                out.push(CodeViolation::NonBinaryEntry {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
    }
    if !out.is_empty() {
        return Err(out);
    }

    let rank = rank_gf2(generator);
    if rank < k {
        out.push(CodeViolation::RankDeficient { rank, k });
    }
    let columns = pack_columns(generator, n);
    for (c, &col) in columns.iter().enumerate() {
        if col == 0 {
            out.push(CodeViolation::IdleSymbol { col: c });
        }
    }
    let d_min = minimum_distance(&pack_rows(generator));
    if d_min < 2 {
        out.push(CodeViolation::MinimumDistance { d_min });
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn pack_rows(generator: &[Vec<u8>]) -> Vec<u32> {
    generator
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0u32, |acc, (c, &b)| acc | (u32::from(b & 1) << c))
        })
        .collect()
}

fn pack_columns(generator: &[Vec<u8>], n: usize) -> Vec<u32> {
    (0..n)
        .map(|c| {
            generator
                .iter()
                .enumerate()
                .fold(0u32, |acc, (r, row)| acc | (u32::from(row[c] & 1) << r))
        })
        .collect()
}

/// Smallest nonzero codeword weight; 0 when some nonzero message encodes to
/// the zero word (rank deficiency).
fn minimum_distance(rows: &[u32]) -> usize {
    let k = rows.len();
    let mut best = usize::MAX;
    for msg in 1u32..(1u32 << k) {
        let word = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| msg >> i & 1 == 1)
            .fold(0u32, |acc, (_, &r)| acc ^ r);
        best = best.min(word.count_ones() as usize);
    }
    if best == usize::MAX {
        0
    } else {
        best
    }
}

/// A validated `(n, k)` segment-level code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCode", into = "RawCode")]
pub struct CodeSpec {
    n: usize,
    k: usize,
    generator: Vec<Vec<u8>>,
    #[serde(skip)]
    columns: Vec<u32>,
}

impl TryFrom<RawCode> for CodeSpec {
    type Error = Error;

    fn try_from(raw: RawCode) -> Result<Self> {
        validate_code(&raw).map_err(Error::InvalidCode)?;
        let columns = pack_columns(&raw.generator, raw.n);
        Ok(Self {
            n: raw.n,
            k: raw.k,
            generator: raw.generator,
            columns,
        })
    }
}

impl From<CodeSpec> for RawCode {
    fn from(c: CodeSpec) -> Self {
        RawCode {
            k: c.k,
            n: c.n,
            generator: c.generator,
        }
    }
}

impl CodeSpec {
    pub fn new(generator: Vec<Vec<u8>>) -> Result<Self> {
        let k = generator.len();
        let n = generator.first().map_or(0, Vec::len);
        RawCode { k, n, generator }.try_into()
    }

    /// The `(n, 1)` repetition code.
    pub fn repetition(n: usize) -> Result<Self> {
        Self::new(vec![vec![1; n]])
    }

    /// The `(n, n-1)` single-parity-check code in systematic form.
    pub fn single_parity_check(n: usize) -> Result<Self> {
        let k = n.saturating_sub(1);
        let generator = (0..k)
            .map(|r| {
                let mut row = vec![0u8; n];
                row[r] = 1;
                row[n - 1] = 1;
                row
            })
            .collect();
        Self::new(generator)
    }

    /// Code length `n_h` (the user degree).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Code dimension `n_s` (segments per packet).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn generator(&self) -> &[Vec<u8>] {
        &self.generator
    }

    pub fn is_repetition(&self) -> bool {
        self.k == 1
    }

    /// Bit mask with one bit per coordinate.
    pub(crate) fn full_mask(&self) -> u32 {
        (1u32 << self.n) - 1
    }

    /// Rank of the generator columns selected by `mask`.
    pub(crate) fn rank_of(&self, mask: u32) -> usize {
        rank_of_masks((0..self.n).filter(|j| mask >> j & 1 == 1).map(|j| self.columns[j]))
    }

    /// Un-normalized information function: for each `t`, the sum of the
    /// ranks of all size-`t` column subsets of the generator.
    pub fn info_function(&self) -> InfoFunctionTable {
        let mut values = vec![0u64; self.n + 1];
        for mask in 0u32..=self.full_mask() {
            values[mask.count_ones() as usize] += self.rank_of(mask) as u64;
        }
        InfoFunctionTable { values }
    }

    /// MAP erasure closure, packed: every coordinate whose column lies in the
    /// span of the columns in `known`, including `known` itself.
    pub(crate) fn closure_mask(&self, known: u32) -> u32 {
        if known == 0 {
            return 0;
        }
        let mut basis = XorBasis::new();
        for j in 0..self.n {
            if known >> j & 1 == 1 {
                basis.insert(self.columns[j]);
            }
        }
        if basis.rank() == self.k {
            return self.full_mask();
        }
        let mut out = known;
        for j in 0..self.n {
            if known >> j & 1 == 0 && basis.contains(self.columns[j]) {
                out |= 1 << j;
            }
        }
        out
    }

    /// Erased coordinates that MAP erasure decoding determines from the
    /// coordinates in `known`. The result excludes `known` and is sorted.
    pub fn map_recoverable(&self, known: &[usize]) -> Result<Vec<usize>> {
        let mut mask = 0u32;
        for &j in known {
            if j >= self.n {
                return Err(Error::CoordinateOutOfRange { index: j, n: self.n });
            }
            mask |= 1 << j;
        }
        let closed = self.closure_mask(mask) & !mask;
        Ok((0..self.n).filter(|j| closed >> j & 1 == 1).collect())
    }
}

/// Un-normalized information function `ẽ_t`, indexed by `t = 0..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InfoFunctionTable {
    values: Vec<u64>,
}

impl InfoFunctionTable {
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn get(&self, t: usize) -> u64 {
        self.values[t]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Free-function form of [`CodeSpec::info_function`], rejecting lengths
/// above [`MAX_CODE_LENGTH`].
pub fn info_function(code: &CodeSpec) -> Result<InfoFunctionTable> {
    if code.n() > MAX_CODE_LENGTH {
        return Err(Error::CodeTooLong {
            n: code.n(),
            limit: MAX_CODE_LENGTH,
        });
    }
    Ok(code.info_function())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spc3() -> CodeSpec {
        CodeSpec::new(vec![vec![1, 0, 1], vec![0, 1, 1]]).unwrap()
    }

    fn hamming74() -> CodeSpec {
        CodeSpec::new(vec![
            vec![1, 0, 0, 0, 1, 1, 0],
            vec![0, 1, 0, 0, 1, 0, 1],
            vec![0, 0, 1, 0, 0, 1, 1],
            vec![0, 0, 0, 1, 1, 1, 1],
        ])
        .unwrap()
    }

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn repetition_is_valid() {
        let c = CodeSpec::repetition(3).unwrap();
        assert_eq!((c.n(), c.k()), (3, 1));
        assert!(validate_code(&c.clone().into()).is_ok());
    }

    #[test]
    fn weight_one_codeword_rejected() {
        let raw = RawCode {
            k: 2,
            n: 3,
            generator: vec![vec![1, 0, 0], vec![0, 1, 0]],
        };
        let errs = validate_code(&raw).unwrap_err();
        assert!(errs.contains(&CodeViolation::MinimumDistance { d_min: 1 }));
        // column 2 is zero too
        assert!(errs.contains(&CodeViolation::IdleSymbol { col: 2 }));
    }

    #[test]
    fn square_generator_rejected() {
        let raw = RawCode {
            k: 2,
            n: 2,
            generator: vec![vec![1, 0], vec![0, 1]],
        };
        let errs = validate_code(&raw).unwrap_err();
        assert!(errs.contains(&CodeViolation::Dimension { n: 2, k: 2 }));
    }

    #[test]
    fn rank_deficient_rejected() {
        let raw = RawCode {
            k: 2,
            n: 4,
            generator: vec![vec![1, 1, 1, 1], vec![1, 1, 1, 1]],
        };
        let errs = validate_code(&raw).unwrap_err();
        assert!(errs.contains(&CodeViolation::RankDeficient { rank: 1, k: 2 }));
    }

    #[test]
    fn shape_errors() {
        let raw = RawCode {
            k: 1,
            n: 3,
            generator: vec![vec![1, 2]],
        };
        let errs = validate_code(&raw).unwrap_err();
        assert!(matches!(errs[0], CodeViolation::RowLength { .. }));
        assert!(matches!(errs[1], CodeViolation::NonBinaryEntry { value: 2, .. }));
        let long = RawCode {
            k: 1,
            n: 21,
            generator: vec![vec![1; 21]],
        };
        assert_eq!(
            validate_code(&long).unwrap_err(),
            vec![CodeViolation::TooLong { n: 21, limit: 20 }]
        );
    }

    #[test]
    fn info_function_small_codes() {
        assert_eq!(CodeSpec::repetition(3).unwrap().info_function().values(), &[0, 3, 3, 1]);
        assert_eq!(spc3().info_function().values(), &[0, 3, 6, 2]);
    }

    #[test]
    fn info_function_repetition_is_binomial() {
        for n in 2..=8u64 {
            let table = CodeSpec::repetition(n as usize).unwrap().info_function();
            assert_eq!(table.get(0), 0);
            for t in 1..=n {
                assert_eq!(table.get(t as usize), binom(n, t));
            }
        }
    }

    #[test]
    fn info_function_endpoints() {
        for code in [spc3(), hamming74(), CodeSpec::single_parity_check(5).unwrap()] {
            let t = code.info_function();
            assert_eq!(t.len(), code.n() + 1);
            assert_eq!(t.get(0), 0);
            assert_eq!(t.get(1), code.n() as u64);
            assert_eq!(t.get(code.n()), code.k() as u64);
            for (i, &v) in t.values().iter().enumerate() {
                assert!(v <= binom(code.n() as u64, i as u64) * code.k() as u64);
            }
        }
    }

    #[test]
    fn map_decoding_examples() {
        let rep = CodeSpec::repetition(3).unwrap();
        assert_eq!(rep.map_recoverable(&[0]).unwrap(), vec![1, 2]);
        assert_eq!(rep.map_recoverable(&[]).unwrap(), Vec::<usize>::new());

        let spc = spc3();
        assert!(spc.map_recoverable(&[0]).unwrap().is_empty());
        assert_eq!(spc.map_recoverable(&[0, 1]).unwrap(), vec![2]);
        assert_eq!(
            spc.map_recoverable(&[3]).unwrap_err(),
            Error::CoordinateOutOfRange { index: 3, n: 3 }
        );
    }

    #[test]
    fn hamming_erasure_patterns() {
        let h = hamming74();
        // four information coordinates determine everything
        assert_eq!(h.map_recoverable(&[0, 1, 2, 3]).unwrap(), vec![4, 5, 6]);
        assert!(h.map_recoverable(&[0, 1]).unwrap().is_empty());
        // g4 = g0 + g1 + g3
        assert_eq!(h.map_recoverable(&[0, 1, 3]).unwrap(), vec![4]);
        // d_min = 3: any five coordinates fix the codeword
        assert_eq!(h.map_recoverable(&[0, 2, 4, 5, 6]).unwrap(), vec![1, 3]);
    }

    #[test]
    fn json_schema_round_trip() {
        let json = r#"{"k":2,"n":3,"generator":[[1,0,1],[0,1,1]]}"#;
        let code: CodeSpec = serde_json::from_str(json).unwrap();
        assert_eq!(code, spc3());
        assert_eq!(serde_json::to_string(&code).unwrap(), json);
        let bad = r#"{"k":2,"n":3,"generator":[[1,0,0],[0,1,0]]}"#;
        assert!(serde_json::from_str::<CodeSpec>(bad).is_err());
    }

    fn arb_code() -> impl Strategy<Value = CodeSpec> {
        (2usize..8, any::<u64>()).prop_filter_map("valid code", |(n, seed)| {
            let k = 1 + (seed % (n as u64 - 1)) as usize;
            let mut s = seed;
            let generator: Vec<Vec<u8>> = (0..k)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                            (s >> 62 & 1) as u8
                        })
                        .collect()
                })
                .collect();
            CodeSpec::new(generator).ok()
        })
    }

    proptest! {
        #[test]
        fn info_function_invariants(code in arb_code()) {
            let t = code.info_function();
            prop_assert_eq!(t.get(1), code.n() as u64);
            prop_assert_eq!(t.get(code.n()), code.k() as u64);
            // per-subset rank is monotone, and C(n,t) grows then shrinks, so
            // compare the averaged form
            for i in 1..code.n() {
                let a = t.get(i) as f64 / binom(code.n() as u64, i as u64) as f64;
                let b = t.get(i + 1) as f64 / binom(code.n() as u64, i as u64 + 1) as f64;
                prop_assert!(a <= b + 1e-12);
            }
        }

        #[test]
        fn map_closure_is_rank_preserving(code in arb_code(), known in any::<u32>()) {
            let known_mask = known & code.full_mask();
            let known: Vec<usize> = (0..code.n()).filter(|j| known_mask >> j & 1 == 1).collect();
            let base = code.rank_of(known_mask);
            for j in code.map_recoverable(&known).unwrap() {
                prop_assert_eq!(code.rank_of(known_mask | 1 << j), base);
            }
            // coordinates left out would raise the rank
            let closed = code.closure_mask(known_mask);
            for j in (0..code.n()).filter(|j| closed >> j & 1 == 0) {
                prop_assert_eq!(code.rank_of(known_mask | 1 << j), base + 1);
            }
        }

        #[test]
        fn all_but_one_recovers_last(code in arb_code(), drop in 0usize..8) {
            let drop = drop % code.n();
            let known: Vec<usize> = (0..code.n()).filter(|&j| j != drop).collect();
            prop_assert_eq!(code.map_recoverable(&known).unwrap(), vec![drop]);
        }

        #[test]
        fn repetition_recovers_complement(n in 2usize..10, known in 1u32..512) {
            let code = CodeSpec::repetition(n).unwrap();
            let mask = known & code.full_mask();
            prop_assume!(mask != 0);
            let known: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
            let expected: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 0).collect();
            prop_assert_eq!(code.map_recoverable(&known).unwrap(), expected);
        }
    }
}
