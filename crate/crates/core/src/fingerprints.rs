//! Sparse count fingerprints, Tanimoto similarity, and candidate pool
//! ingestion.
//!
//! Candidates are featurized as sparse nonnegative integer count vectors
//! (typically 2048-wide). Similarity between two count vectors uses the
//! min-max Tanimoto coefficient `sum_i min(a_i, b_i) / sum_i max(a_i, b_i)`,
//! which reduces to Jaccard on binary vectors; a dot-product variant is
//! available behind [`TanimotoKind`] for comparison.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::ErrorClass;

#[derive(Debug, Error)]
pub enum FingerprintError {
    #[error("fingerprint dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("fingerprint entry {index}:{count} invalid: {reason}")]
    InvalidEntry { index: u32, count: u32, reason: String },
    #[error("fingerprint indices must be strictly increasing (saw {0} after {1})")]
    UnsortedIndices(u32, u32),
}

impl FingerprintError {
    pub fn class(&self) -> ErrorClass {
        ErrorClass::Usage
    }
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("candidate {0} has dimension {1}, pool dimension is {2}")]
    MixedDimensions(usize, usize, usize),
    #[error("oracle values length {0} does not match candidate count {1}")]
    OracleLength(usize, usize),
    #[error("oracle value for candidate {0} is not finite")]
    NonFiniteOracle(usize),
    #[error("id list length {0} does not match candidate count {1}")]
    IdLength(usize, usize),
    #[error("candidate index {0} out of range for pool of {1}")]
    IndexOutOfRange(usize, usize),
    #[error("pool has no oracle values")]
    MissingOracle,
}

impl PoolError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PoolError::IndexOutOfRange(..) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

/// Parse failure for the delimited ingestion format; `line` is the 1-based
/// line number in the input stream (the header is line 1).
#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError { line, message: message.into() }
    }

    pub fn class(&self) -> ErrorClass {
        ErrorClass::Data
    }
}

/// Which Tanimoto form the kernel uses on count vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TanimotoKind {
    /// `sum min / sum max`; the standard count generalization of Jaccard.
    #[default]
    MinMax,
    /// `a.b / (|a|^2 + |b|^2 - a.b)`; the dot-product form.
    Dot,
}

/// Sparse count vector: sorted `(index, count)` entries with count >= 1,
/// all indices below `dimension`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountFingerprint {
    entries: Vec<(u32, u32)>,
    dimension: usize,
}

impl CountFingerprint {
    /// Build from entries, validating sortedness, positivity, and range.
    pub fn new(entries: Vec<(u32, u32)>, dimension: usize) -> Result<Self, FingerprintError> {
        let mut prev: Option<u32> = None;
        for &(index, count) in &entries {
            if let Some(p) = prev {
                if index <= p {
                    return Err(FingerprintError::UnsortedIndices(index, p));
                }
            }
            if count == 0 {
                return Err(FingerprintError::InvalidEntry {
                    index,
                    count,
                    reason: "count must be >= 1".into(),
                });
            }
            if index as usize >= dimension {
                return Err(FingerprintError::InvalidEntry {
                    index,
                    count,
                    reason: format!("index exceeds dimension {dimension}"),
                });
            }
            prev = Some(index);
        }
        Ok(CountFingerprint { entries, dimension })
    }

    /// Build from possibly unsorted, possibly duplicated (index, count) pairs;
    /// duplicate indices are summed. Used by ingestion and generators.
    pub fn from_counts(
        pairs: impl IntoIterator<Item = (u32, u32)>,
        dimension: usize,
    ) -> Result<Self, FingerprintError> {
        let mut map: BTreeMap<u32, u64> = BTreeMap::new();
        for (i, c) in pairs {
            if c == 0 {
                return Err(FingerprintError::InvalidEntry {
                    index: i,
                    count: c,
                    reason: "count must be >= 1".into(),
                });
            }
            *map.entry(i).or_insert(0) += c as u64;
        }
        let entries = map
            .into_iter()
            .map(|(i, c)| (i, u32::try_from(c).unwrap_or(u32::MAX)))
            .collect();
        CountFingerprint::new(entries, dimension)
    }

    pub fn empty(dimension: usize) -> Self {
        CountFingerprint { entries: Vec::new(), dimension }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }
}

/// Min-max Tanimoto similarity between two count fingerprints.
///
/// Two all-zero fingerprints compare as identical (1.0); a zero against a
/// nonzero vector scores 0. Dimension mismatch is a usage error.
pub fn tanimoto(a: &CountFingerprint, b: &CountFingerprint) -> Result<f64, FingerprintError> {
    tanimoto_with(a, b, TanimotoKind::MinMax)
}

/// Tanimoto similarity under an explicit kernel form.
pub fn tanimoto_with(
    a: &CountFingerprint,
    b: &CountFingerprint,
    kind: TanimotoKind,
) -> Result<f64, FingerprintError> {
    if a.dimension != b.dimension {
        return Err(FingerprintError::DimensionMismatch(a.dimension, b.dimension));
    }
    Ok(tanimoto_unchecked(a, b, kind))
}

/// Kernel hot path: assumes dimensions already match.
pub(crate) fn tanimoto_unchecked(a: &CountFingerprint, b: &CountFingerprint, kind: TanimotoKind) -> f64 {
    match kind {
        TanimotoKind::MinMax => {
            if a.entries.is_empty() && b.entries.is_empty() {
                return 1.0;
            }
            let mut sum_min: u64 = 0;
            let (mut i, mut j) = (0usize, 0usize);
            while i < a.entries.len() && j < b.entries.len() {
                let (ia, ca) = a.entries[i];
                let (ib, cb) = b.entries[j];
                if ia == ib {
                    sum_min += ca.min(cb) as u64;
                    i += 1;
                    j += 1;
                } else if ia < ib {
                    i += 1;
                } else {
                    j += 1;
                }
            }
            // sum over the union of max(a_i, b_i) = total(a) + total(b) - sum_min
            let sum_max = a.total() + b.total() - sum_min;
            sum_min as f64 / sum_max as f64
        }
        TanimotoKind::Dot => {
            if a.entries.is_empty() && b.entries.is_empty() {
                return 1.0;
            }
            let mut ab: u64 = 0;
            let (mut i, mut j) = (0usize, 0usize);
            while i < a.entries.len() && j < b.entries.len() {
                let (ia, ca) = a.entries[i];
                let (ib, cb) = b.entries[j];
                if ia == ib {
                    ab += ca as u64 * cb as u64;
                    i += 1;
                    j += 1;
                } else if ia < ib {
                    i += 1;
                } else {
                    j += 1;
                }
            }
            let aa: u64 = a.entries.iter().map(|&(_, c)| c as u64 * c as u64).sum();
            let bb: u64 = b.entries.iter().map(|&(_, c)| c as u64 * c as u64).sum();
            ab as f64 / (aa + bb - ab) as f64
        }
    }
}

/// Indexed discrete design space: fingerprints plus optional identifiers and
/// optional hidden objective values for benchmark (lookup-oracle) mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidatePool {
    candidates: Vec<CountFingerprint>,
    ids: Option<Vec<String>>,
    oracle_values: Option<Vec<f64>>,
    dimension: usize,
}

impl CandidatePool {
    pub fn new(
        candidates: Vec<CountFingerprint>,
        ids: Option<Vec<String>>,
        oracle_values: Option<Vec<f64>>,
        dimension: usize,
    ) -> Result<Self, PoolError> {
        for (i, fp) in candidates.iter().enumerate() {
            if fp.dimension() != dimension {
                return Err(PoolError::MixedDimensions(i, fp.dimension(), dimension));
            }
        }
        if let Some(ids) = &ids {
            if ids.len() != candidates.len() {
                return Err(PoolError::IdLength(ids.len(), candidates.len()));
            }
        }
        if let Some(vals) = &oracle_values {
            if vals.len() != candidates.len() {
                return Err(PoolError::OracleLength(vals.len(), candidates.len()));
            }
            if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
                return Err(PoolError::NonFiniteOracle(i));
            }
        }
        Ok(CandidatePool { candidates, ids, oracle_values, dimension })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn fingerprint(&self, i: usize) -> &CountFingerprint {
        &self.candidates[i]
    }

    pub fn fingerprints(&self) -> &[CountFingerprint] {
        &self.candidates
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn id_of(&self, i: usize) -> Option<&str> {
        self.ids.as_ref().map(|ids| ids[i].as_str())
    }

    pub fn oracle_values(&self) -> Option<&[f64]> {
        self.oracle_values.as_deref()
    }
}

/// Pairwise min-max Tanimoto matrix over `subset`; symmetric with unit
/// diagonal.
pub fn pairwise_tanimoto(pool: &CandidatePool, subset: &[usize]) -> Result<Matrix, PoolError> {
    pairwise_tanimoto_with(pool, subset, TanimotoKind::MinMax)
}

pub fn pairwise_tanimoto_with(
    pool: &CandidatePool,
    subset: &[usize],
    kind: TanimotoKind,
) -> Result<Matrix, PoolError> {
    for &i in subset {
        if i >= pool.len() {
            return Err(PoolError::IndexOutOfRange(i, pool.len()));
        }
    }
    let s = subset.len();
    let mut m = Matrix::zeros(s, s);
    for r in 0..s {
        m.set(r, r, 1.0);
        for c in (r + 1)..s {
            let v = tanimoto_unchecked(pool.fingerprint(subset[r]), pool.fingerprint(subset[c]), kind);
            m.set(r, c, v);
            m.set(c, r, v);
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum FpLayout {
    Sparse,
    Dense,
}

struct Header {
    has_id: bool,
    layout: FpLayout,
    has_objective: bool,
}

fn parse_header(line: &str, lineno: usize) -> Result<Header, ParseError> {
    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
    let mut idx = 0;
    let has_id = cols.get(idx) == Some(&"id");
    if has_id {
        idx += 1;
    }
    let layout = match cols.get(idx) {
        Some(&"sparse") => FpLayout::Sparse,
        Some(&"dense") => FpLayout::Dense,
        other => {
            return Err(ParseError::new(
                lineno,
                format!(
                    "expected fingerprint column 'sparse' or 'dense', found {:?}; header must be [id,] sparse|dense [,objective]",
                    other.unwrap_or(&"")
                ),
            ))
        }
    };
    idx += 1;
    let has_objective = match cols.get(idx) {
        None => false,
        Some(&"objective") => {
            idx += 1;
            true
        }
        Some(c) => return Err(ParseError::new(lineno, format!("unexpected column '{c}'"))),
    };
    if idx != cols.len() {
        return Err(ParseError::new(lineno, "trailing columns after 'objective'"));
    }
    Ok(Header { has_id, layout, has_objective })
}

fn parse_sparse_field(field: &str, dimension: usize, lineno: usize) -> Result<CountFingerprint, ParseError> {
    let mut pairs = Vec::new();
    for token in field.split_whitespace() {
        let (i_str, c_str) = token
            .split_once(':')
            .ok_or_else(|| ParseError::new(lineno, format!("malformed token '{token}', expected index:count")))?;
        let index: u32 = i_str
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("malformed index in token '{token}'")))?;
        let count: i64 = c_str
            .parse()
            .map_err(|_| ParseError::new(lineno, format!("malformed count in token '{token}'")))?;
        if count < 1 {
            return Err(ParseError::new(lineno, format!("count must be >= 1 in token '{token}'")));
        }
        let count = u32::try_from(count)
            .map_err(|_| ParseError::new(lineno, format!("count out of range in token '{token}'")))?;
        if index as usize >= dimension {
            return Err(ParseError::new(
                lineno,
                format!("index {index} out of range for dimension {dimension}"),
            ));
        }
        pairs.push((index, count));
    }
    CountFingerprint::from_counts(pairs, dimension).map_err(|e| ParseError::new(lineno, e.to_string()))
}

/// Load a candidate pool from the delimited ingestion format.
///
/// One candidate per row. The header row declares the layout:
/// `[id,] sparse|dense [,objective]`. Sparse rows carry whitespace-separated
/// `index:count` tokens in one field; dense rows spell out all `dimension`
/// counts as consecutive comma fields. `dimension` is the sidecar
/// configuration value and is required either way. An empty input yields an
/// empty pool.
pub fn load_pool<R: BufRead>(reader: R, dimension: usize) -> Result<CandidatePool, ParseError> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => {
                return CandidatePool::new(Vec::new(), None, None, dimension)
                    .map_err(|e| ParseError::new(0, e.to_string()))
            }
            Some((n, line)) => {
                let line = line.map_err(|e| ParseError::new(n + 1, e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                break parse_header(&line, n + 1)?;
            }
        }
    };

    let mut candidates = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    let mut objectives: Vec<f64> = Vec::new();
    for (n, line) in lines {
        let lineno = n + 1;
        let line = line.map_err(|e| ParseError::new(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let fp_fields = match header.layout {
            FpLayout::Sparse => 1,
            FpLayout::Dense => dimension,
        };
        let expected = usize::from(header.has_id) + fp_fields + usize::from(header.has_objective);
        if fields.len() != expected {
            return Err(ParseError::new(
                lineno,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        let mut cursor = 0;
        if header.has_id {
            ids.push(fields[cursor].to_string());
            cursor += 1;
        }
        let fp = match header.layout {
            FpLayout::Sparse => {
                let fp = parse_sparse_field(fields[cursor], dimension, lineno)?;
                cursor += 1;
                fp
            }
            FpLayout::Dense => {
                let mut pairs = Vec::new();
                for (off, field) in fields[cursor..cursor + dimension].iter().enumerate() {
                    let v: i64 = field.parse().map_err(|_| {
                        ParseError::new(lineno, format!("malformed dense count '{field}'"))
                    })?;
                    if v < 0 {
                        return Err(ParseError::new(lineno, format!("negative count '{field}'")));
                    }
                    if v > 0 {
                        let c = u32::try_from(v).map_err(|_| {
                            ParseError::new(lineno, format!("count out of range '{field}'"))
                        })?;
                        pairs.push((off as u32, c));
                    }
                }
                cursor += dimension;
                CountFingerprint::from_counts(pairs, dimension)
                    .map_err(|e| ParseError::new(lineno, e.to_string()))?
            }
        };
        candidates.push(fp);
        if header.has_objective {
            let v: f64 = fields[cursor]
                .parse()
                .map_err(|_| ParseError::new(lineno, format!("malformed objective '{}'", fields[cursor])))?;
            if !v.is_finite() {
                return Err(ParseError::new(lineno, "objective must be finite"));
            }
            objectives.push(v);
        }
    }
    CandidatePool::new(
        candidates,
        if header.has_id { Some(ids) } else { None },
        if header.has_objective { Some(objectives) } else { None },
        dimension,
    )
    .map_err(|e| ParseError::new(0, e.to_string()))
}

/// Write a pool in the sparse ingestion layout (inverse of [`load_pool`]).
pub fn write_pool<W: Write>(pool: &CandidatePool, mut w: W) -> std::io::Result<()> {
    let has_id = pool.ids().is_some();
    let has_obj = pool.oracle_values().is_some();
    let mut header = Vec::new();
    if has_id {
        header.push("id");
    }
    header.push("sparse");
    if has_obj {
        header.push("objective");
    }
    writeln!(w, "{}", header.join(","))?;
    for i in 0..pool.len() {
        let mut fields = Vec::new();
        if let Some(id) = pool.id_of(i) {
            fields.push(id.to_string());
        }
        let tokens: Vec<String> = pool
            .fingerprint(i)
            .entries()
            .iter()
            .map(|(idx, c)| format!("{idx}:{c}"))
            .collect();
        fields.push(tokens.join(" "));
        if let Some(vals) = pool.oracle_values() {
            fields.push(format!("{:?}", vals[i]));
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn fp(entries: &[(u32, u32)]) -> CountFingerprint {
        CountFingerprint::new(entries.to_vec(), 2048).unwrap()
    }

    #[test]
    fn identical_nonempty_vectors_score_one() {
        let a = fp(&[(0, 1), (5, 3)]);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_supports_score_zero() {
        let a = fp(&[(0, 2), (1, 1)]);
        let b = fp(&[(2, 1), (3, 4)]);
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_overlap() {
        // a = {0:1, 1:1}, b = {0:1, 2:1}: sum min = 1, sum max = 3
        let a = fp(&[(0, 1), (1, 1)]);
        let b = fp(&[(0, 1), (2, 1)]);
        let t = tanimoto(&a, &b).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_conventions() {
        let z = CountFingerprint::empty(2048);
        let a = fp(&[(7, 2)]);
        assert_eq!(tanimoto(&z, &z).unwrap(), 1.0);
        assert_eq!(tanimoto(&z, &a).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let a = CountFingerprint::new(vec![(0, 1)], 16).unwrap();
        let b = CountFingerprint::new(vec![(0, 1)], 32).unwrap();
        assert!(matches!(
            tanimoto(&a, &b),
            Err(FingerprintError::DimensionMismatch(16, 32))
        ));
    }

    #[test]
    fn dot_variant_matches_hand_value() {
        // a=(1,1,0), b=(1,0,1): ab=1, aa=2, bb=2 -> 1/3
        let a = fp(&[(0, 1), (1, 1)]);
        let b = fp(&[(0, 1), (2, 1)]);
        let t = tanimoto_with(&a, &b, TanimotoKind::Dot).unwrap();
        assert!((t - 1.0 / 3.0).abs() < 1e-15);
        // counts differ from min-max: a=(2,), b=(1,): minmax 1/2, dot 2/(4+1-2)=2/3
        let a = fp(&[(0, 2)]);
        let b = fp(&[(0, 1)]);
        assert!((tanimoto(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!((tanimoto_with(&a, &b, TanimotoKind::Dot).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn load_sparse_row_with_id_and_objective() {
        let data = "id,sparse,objective\nm1, 3:2 17:1, 0.45\n";
        let pool = load_pool(Cursor::new(data), 2048).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.fingerprint(0).entries(), &[(3, 2), (17, 1)]);
        assert_eq!(pool.id_of(0), Some("m1"));
        assert_eq!(pool.oracle_values().unwrap()[0], 0.45);
    }

    #[test]
    fn empty_file_is_valid_empty_pool() {
        let pool = load_pool(Cursor::new(""), 2048).unwrap();
        assert!(pool.is_empty());
        assert_eq!(pool.dimension(), 2048);
    }

    #[test]
    fn negative_count_token_is_parse_error() {
        let data = "sparse\n3:-1\n";
        let err = load_pool(Cursor::new(data), 2048).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("count"));
    }

    #[test]
    fn out_of_range_index_names_row() {
        let data = "sparse\n0:1\n4096:1\n";
        let err = load_pool(Cursor::new(data), 2048).unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn dense_layout_parses_counts_and_objective() {
        // dimension 3: fields are id, three counts, objective
        let pool = load_pool(Cursor::new("id,dense,objective\na,1,0,2,-0.5\n"), 3).unwrap();
        assert_eq!(pool.fingerprint(0).entries(), &[(0, 1), (2, 2)]);
        assert_eq!(pool.oracle_values().unwrap()[0], -0.5);
    }

    #[test]
    fn ragged_dense_row_is_parse_error() {
        let data = "dense\n1,2\n";
        let err = load_pool(Cursor::new(data), 3).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("expected 3 fields"));
    }

    #[test]
    fn pairwise_matches_scalar_op() {
        let fps = vec![fp(&[(0, 1), (1, 1)]), fp(&[(0, 1), (2, 1)]), fp(&[(9, 4)])];
        let pool = CandidatePool::new(fps.clone(), None, None, 2048).unwrap();
        let m = pairwise_tanimoto(&pool, &[0, 1, 2]).unwrap();
        for i in 0..3 {
            assert_eq!(m.get(i, i), 1.0);
            for j in 0..3 {
                let expect = tanimoto(&fps[i], &fps[j]).unwrap();
                assert_eq!(m.get(i, j), expect);
                assert_eq!(m.get(j, i), expect);
            }
        }
    }

    #[test]
    fn single_candidate_subset_is_unit_matrix() {
        let pool = CandidatePool::new(vec![fp(&[(1, 1)])], None, None, 2048).unwrap();
        let m = pairwise_tanimoto(&pool, &[0]).unwrap();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn write_then_load_roundtrips() {
        let fps = vec![fp(&[(3, 2), (17, 1)]), CountFingerprint::empty(2048)];
        let pool = CandidatePool::new(
            fps,
            Some(vec!["a".into(), "b".into()]),
            Some(vec![0.45, -1.25]),
            2048,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_pool(&pool, &mut buf).unwrap();
        let back = load_pool(Cursor::new(buf), 2048).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.fingerprint(0).entries(), pool.fingerprint(0).entries());
        assert_eq!(back.oracle_values().unwrap(), pool.oracle_values().unwrap());
        assert_eq!(back.ids().unwrap(), pool.ids().unwrap());
    }
}
