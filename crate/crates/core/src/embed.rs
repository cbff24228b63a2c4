//! Instruction encoder: signed feature hashing of word tokens and character
//! trigrams into a fixed number of buckets, L2-normalized.
//!
//! Features for the text `"top left"` are the words `top`, `left` and the
//! trigrams of each word padded with `<` and `>`: `<to`, `top`, `op>`,
//! `<le`, `lef`, `eft`, `ft>`. Each feature adds ±1 to bucket
//! `feature_hash(kind ‖ feature) mod D`; the sign is the low bit of a second
//! pass with a different offset basis. `feature_hash` is FNV-1a 64 followed by
//! the MurmurHash3 64-bit finalizer (raw FNV-1a low bits depend only on the
//! low bits of each input byte). Both are specified byte-wise, so outputs are
//! identical on every platform.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::env::normalize_text;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Offset basis of the sign hash (FNV offset with its halves swapped).
const SIGN_OFFSET: u64 = 0x8422_2325_cbf2_9ce4;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_from(FNV_OFFSET, bytes)
}

fn fnv1a64_from(basis: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(basis, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// MurmurHash3 `fmix64`.
fn fmix64(mut h: u64) -> u64 {
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Stable 64-bit hash used for feature buckets.
pub fn feature_hash(bytes: &[u8]) -> u64 {
    fmix64(fnv1a64(bytes))
}

fn sign_hash(bytes: &[u8]) -> u64 {
    fmix64(fnv1a64_from(SIGN_OFFSET, bytes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        EmbeddingVector(self.0.iter().map(|v| v * alpha).collect())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Word and padded-trigram features of already normalized text, each tagged
/// by kind (`w:` or `t:`).
pub fn hashed_features(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        out.push(format!("w:{word}"));
        let padded: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
        for tri in padded.windows(3) {
            out.push(format!("t:{}", tri.iter().collect::<String>()));
        }
    }
    out
}

pub fn encode(text: &str) -> Result<EmbeddingVector> {
    encode_with_dim(text, DEFAULT_DIM)
}

pub fn encode_with_dim(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim == 0 {
        return Err(Error::Parameter("embedding dimension must be positive".into()));
    }
    let text = normalize_text(text);
    if text.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut v = vec![0.0; dim];
    for f in hashed_features(&text) {
        let bucket = (feature_hash(f.as_bytes()) % dim as u64) as usize;
        let sign = if sign_hash(f.as_bytes()) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let n = norm(&v);
    if n == 0.0 {
        return Err(Error::Numeric(format!("hashed features of {text:?} cancel to zero")));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(EmbeddingVector(v))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(a.values(), b.values())
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of {}- and {}-dim vectors", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::Numeric("cosine of a zero-norm or non-finite vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingSource {
    Builtin,
    Imported,
}

/// Instruction text (normalized) to unit embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    source: EmbeddingSource,
    rows: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingTable {
    pub fn builtin(dim: usize) -> Self {
        EmbeddingTable { dim, source: EmbeddingSource::Builtin, rows: BTreeMap::new() }
    }

    /// Built-in table pre-populated with `texts`.
    pub fn encode_all<'a>(texts: impl IntoIterator<Item = &'a str>, dim: usize) -> Result<Self> {
        let mut table = Self::builtin(dim);
        for t in texts {
            let v = encode_with_dim(t, dim)?;
            table.rows.insert(normalize_text(t), v);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Stored row, or a fresh encoding when the table is built-in.
    pub fn embedding(&self, text: &str) -> Result<EmbeddingVector> {
        let key = normalize_text(text);
        if let Some(v) = self.rows.get(&key) {
            return Ok(v.clone());
        }
        match self.source {
            EmbeddingSource::Builtin => encode_with_dim(&key, self.dim),
            EmbeddingSource::Imported => Err(Error::MissingEmbedding(key)),
        }
    }
}

/// Reads `<instruction>\t<v1> <v2> ... <vD>` records; `#` starts a comment
/// line. Vectors are re-normalized to unit length.
pub fn import_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path)?;
    parse_embeddings(&text, path)
}

pub fn parse_embeddings(text: &str, origin: &Path) -> Result<EmbeddingTable> {
    let err = |line: usize, msg: String| Error::Import { path: origin.to_path_buf(), line, msg };
    let mut rows = BTreeMap::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let (key, values) = raw.split_once('\t').ok_or_else(|| err(line, "missing tab separator".into()))?;
        let key = normalize_text(key);
        if key.is_empty() {
            return Err(err(line, "empty instruction text".into()));
        }
        let v = values
            .split_whitespace()
            .map(|t| match t.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(err(line, format!("non-numeric field {t:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dim.get_or_insert(v.len());
        if v.len() != d {
            return Err(err(line, format!("dimension {} differs from {d} on the first row", v.len())));
        }
        if d == 0 {
            return Err(err(line, "empty vector".into()));
        }
        let n = norm(&v);
        if n == 0.0 {
            return Err(err(line, "zero vector".into()));
        }
        if rows.contains_key(&key) {
            return Err(err(line, format!("duplicate instruction {key:?}")));
        }
        rows.insert(key, EmbeddingVector(v.iter().map(|x| x / n).collect()));
    }
    let dim = dim.ok_or_else(|| err(0, "no records".into()))?;
    Ok(EmbeddingTable { dim, source: EmbeddingSource::Imported, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn features_of_short_text() {
        assert_eq!(
            hashed_features("top left"),
            ["w:top", "t:<to", "t:top", "t:op>", "w:left", "t:<le", "t:lef", "t:eft", "t:ft>"]
        );
    }

    #[test]
    fn encode_is_unit_and_deterministic() {
        let a = encode("top left first").unwrap();
        assert_eq!(a, encode("top left first").unwrap());
        assert_eq!(a, encode("  TOP left  first").unwrap());
        assert_eq!(a.dim(), DEFAULT_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!(matches!(encode("   "), Err(Error::EmptyText)));
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let base = encode("top left first").unwrap();
        let near = cosine(&base, &encode("top left second").unwrap()).unwrap();
        let far = cosine(&base, &encode("go to the red cone").unwrap()).unwrap();
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn cosine_basics() {
        let v = encode("go to the red box").unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine(&v, &v.scaled(-1.0)).unwrap() + 1.0).abs() < 1e-15);
        let e1 = EmbeddingVector::new(vec![1.0, 0.0, 0.0]);
        let e2 = EmbeddingVector::new(vec![0.0, 1.0, 0.0]);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        let zero = EmbeddingVector::new(vec![0.0; 3]);
        assert!(matches!(cosine(&e1, &zero), Err(Error::Numeric(_))));
        assert!(matches!(cosine(&e1, &v), Err(Error::Shape(_))));
    }

    fn random_word<R: Rng>(rng: &mut R) -> String {
        let len = rng.gen_range(3..=8);
        (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
    }

    #[test]
    fn disjoint_texts_have_small_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut pairs = 0;
        let mut worst: f64 = 0.0;
        while pairs < 1000 {
            let a: Vec<String> = (0..rng.gen_range(2..=4)).map(|_| random_word(&mut rng)).collect();
            let b: Vec<String> = (0..rng.gen_range(2..=4)).map(|_| random_word(&mut rng)).collect();
            let (ta, tb) = (a.join(" "), b.join(" "));
            let fa = hashed_features(&ta);
            let fb = hashed_features(&tb);
            if fa.iter().any(|f| fb.contains(f)) {
                continue;
            }
            pairs += 1;
            let c = cosine(&encode(&ta).unwrap(), &encode(&tb).unwrap()).unwrap();
            worst = worst.max(c.abs());
        }
        assert!(worst <= 0.35, "max |cosine| over disjoint pairs = {worst}");
    }

    #[test]
    fn import_well_formed() {
        let text = "# demo\ntop left first\t1 0 0\ntop left second\t0 2 0\n\ntop right first\t0 0 3\nTop Right Second\t1 1 0\n";
        let t = parse_embeddings(text, Path::new("e.tsv")).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.source(), EmbeddingSource::Imported);
        let v = t.embedding("top left second").unwrap();
        assert_eq!(v.values(), &[0.0, 1.0, 0.0]);
        assert!((t.embedding("top right second").unwrap().norm() - 1.0).abs() < 1e-12);
        assert!(matches!(t.embedding("top right third"), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn import_errors_name_the_line() {
        let line_of = |text: &str| match parse_embeddings(text, Path::new("e.tsv")) {
            Err(Error::Import { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("a\t1 2 3\nb\t1 2\n"), 2);
        assert_eq!(line_of("a\t1 2 3\n# c\nb\t1 x 3\n"), 3);
        assert_eq!(line_of("a\t1 2 3\nA\t1 2 3\n"), 2);
        assert_eq!(line_of("a 1 2 3\n"), 1);
        assert_eq!(line_of("a\t0 0 0\n"), 1);
    }

    #[test]
    fn builtin_table_encodes_on_miss() {
        let t = EmbeddingTable::encode_all(["top left first"], 32).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.embedding("top right third").unwrap(), encode_with_dim("top right third", 32).unwrap());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-1.0f64..1.0, 8),
            b in proptest::collection::vec(-1.0f64..1.0, 8),
            alpha in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let (va, vb) = (EmbeddingVector::new(a), EmbeddingVector::new(b));
            let c = cosine(&va, &vb).unwrap();
            prop_assert!((c - cosine(&vb, &va).unwrap()).abs() < 1e-15);
            prop_assert!((c - cosine(&va.scaled(alpha), &vb).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}
