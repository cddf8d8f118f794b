//! Semantic redundancy detection over sibling span outputs.
//!
//! Span outputs are embedded through an [`EmbeddingProvider`] and compared
//! with cosine similarity, but only between spans that share a parent. The
//! built-in provider hashes character trigrams into a fixed number of buckets
//! and needs no model or network access.

use std::collections::HashMap;
use std::hash::Hasher;
use std::sync::atomic::{AtomicUsize, Ordering};

use fnv::FnvHasher;

use crate::detection::{Detection, DetectorParams, Evidence, Flagged, Method};
use crate::error::{Error, Result};
use crate::trace_model::{Span, Trajectory};

pub const DEFAULT_DIMENSION: usize = 256;
pub const MIN_DIMENSION: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Turns text into fixed-dimension vectors. Implementations must return the
/// same vector for the same text and be callable from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Character-trigram feature hashing: lowercase, collapse whitespace, hash each
/// trigram with 64-bit FNV-1a into `hash % d`, count, then L2-normalize.
///
/// Text with fewer than three characters after normalization maps to the zero
/// vector. Panics if `d < MIN_DIMENSION`.
pub fn builtin_embed(text: &str, d: usize) -> EmbeddingVector {
    assert!(
        d >= MIN_DIMENSION,
        "embedding dimension must be >= {MIN_DIMENSION}"
    );
    let mut counts = vec![0.0f64; d];
    let chars: Vec<char> = normalize_text(text).chars().collect();
    let mut buf = [0u8; 12];
    for gram in chars.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let mut h = FnvHasher::default();
        h.write(&buf[..len]);
        counts[(h.finish() % d as u64) as usize] += 1.0;
    }
    let norm = counts.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        counts.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector(counts)
}

#[derive(Debug, Clone)]
pub struct BuiltinEmbedder {
    dimension: usize,
}

impl BuiltinEmbedder {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension < MIN_DIMENSION {
            return Err(Error::Param(format!(
                "embedding dimension must be >= {MIN_DIMENSION}, got {dimension}"
            )));
        }
        Ok(BuiltinEmbedder { dimension })
    }
}

impl Default for BuiltinEmbedder {
    fn default() -> Self {
        BuiltinEmbedder {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl EmbeddingProvider for BuiltinEmbedder {
    fn name(&self) -> &str {
        "builtin"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(builtin_embed(text, self.dimension))
    }
}

/// Wraps a provider and counts how many texts it was asked to embed.
#[derive(Debug)]
pub struct CountingProvider<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        CountingProvider {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CountingProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.embed(text)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        self.calls.fetch_add(texts.len(), Ordering::Relaxed);
        self.inner.embed_batch(texts)
    }
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dimension() != v.dimension() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {}",
            u.dimension(),
            v.dimension()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity("zero vector".into()));
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// All unordered pairs of spans sharing a parent. Roots are siblings of each
/// other. Pairs come out grouped by parent id, left id < right id.
pub fn sibling_pairs(t: &Trajectory) -> Vec<(&Span, &Span)> {
    let mut pairs = Vec::new();
    for children in t.children_by_parent().into_values() {
        for (i, left) in children.iter().enumerate() {
            for right in &children[i + 1..] {
                pairs.push((*left, *right));
            }
        }
    }
    pairs
}

pub(crate) fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi <= 1.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("phi must be in (0, 1], got {phi}")))
    }
}

/// Flags sibling pairs whose output similarity is strictly above `phi`.
/// Pairs where either output is empty are skipped.
pub fn detect_cdsa(
    t: &Trajectory,
    phi: f64,
    provider: &dyn EmbeddingProvider,
) -> Result<Detection> {
    check_phi(phi)?;
    detect_cdsa_on_pairs(sibling_pairs(t), phi, provider)
}

pub(crate) fn detect_cdsa_on_pairs(
    pairs: Vec<(&Span, &Span)>,
    phi: f64,
    provider: &dyn EmbeddingProvider,
) -> Result<Detection> {
    let params = DetectorParams {
        phi: Some(phi),
        ..Default::default()
    };
    let pairs: Vec<_> = pairs
        .into_iter()
        .filter(|(l, r)| !l.output.is_empty() && !r.output.is_empty())
        .collect();

    // Embed each participating span once.
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut texts: Vec<&str> = Vec::new();
    for (l, r) in &pairs {
        for s in [l, r] {
            slot.entry(s.span_id.as_str()).or_insert_with(|| {
                texts.push(s.output.as_str());
                texts.len() - 1
            });
        }
    }
    let vectors = if texts.is_empty() {
        Vec::new()
    } else {
        provider.embed_batch(&texts)?
    };
    if vectors.len() != texts.len() {
        return Err(Error::Provider(format!(
            "{} returned {} vectors for {} texts",
            provider.name(),
            vectors.len(),
            texts.len()
        )));
    }

    let mut comparisons = 0;
    let mut evidence = Vec::new();
    for (l, r) in &pairs {
        let u = &vectors[slot[l.span_id.as_str()]];
        let v = &vectors[slot[r.span_id.as_str()]];
        let similarity = match cosine(u, v) {
            Ok(s) => s,
            Err(Error::UndefinedSimilarity(_)) => continue,
            Err(e) => return Err(e),
        };
        comparisons += 1;
        if similarity > phi {
            evidence.push(Flagged {
                item: Evidence::SiblingPair {
                    parent_span_id: l.parent_span_id.clone(),
                    left_span_id: l.span_id.clone(),
                    right_span_id: r.span_id.clone(),
                    similarity,
                },
                score: similarity,
                threshold: phi,
            });
        }
    }
    let mut detection = Detection::new(Method::Cdsa, evidence, params);
    detection.comparisons = comparisons;
    Ok(detection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_model::SpanStatus;
    use proptest::prelude::*;

    fn span(id: &str, parent: Option<&str>, output: &str) -> Span {
        Span {
            trace_id: "t".into(),
            span_id: id.into(),
            parent_span_id: parent.map(Into::into),
            op: "op".into(),
            input: String::new(),
            output: output.into(),
            start_time: 0,
            end_time: None,
            status: SpanStatus::Ok,
            error_type: None,
        }
    }

    fn traj(spans: Vec<Span>) -> Trajectory {
        Trajectory::new("t", spans).unwrap()
    }

    #[test]
    fn fnv_constants() {
        // FNV-1a 64 reference values
        let mut h = FnvHasher::default();
        h.write(b"");
        assert_eq!(h.finish(), 0xcbf29ce484222325);
        let mut h = FnvHasher::default();
        h.write(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn builtin_embed_examples() {
        let a = builtin_embed("AAPL price 150", 256);
        assert_eq!(a, builtin_embed("AAPL price 150", 256));
        assert_eq!(a, builtin_embed("aapl   price 150", 256));
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(builtin_embed("", 256).is_zero());
        assert!(builtin_embed(" \t\n ", 256).is_zero());
        assert_eq!(builtin_embed("", 64).dimension(), 64);
    }

    #[test]
    fn builtin_embed_counts_trigrams() {
        // "aaaa" has two identical trigrams -> one bucket with all the mass
        let v = builtin_embed("aaaa", 32);
        assert_eq!(v.0.iter().filter(|&&x| x > 0.0).count(), 1);
        let mut h = FnvHasher::default();
        h.write(b"aaa");
        assert_eq!(v.0[(h.finish() % 32) as usize], 1.0);
    }

    #[test]
    fn cosine_examples() {
        let v = EmbeddingVector(vec![0.3, -1.2, 4.0]);
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let e1 = EmbeddingVector(vec![1.0, 0.0]);
        let e2 = EmbeddingVector(vec![0.0, 1.0]);
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        let v2 = EmbeddingVector(v.0.iter().map(|x| x * 2.0).collect());
        assert!((cosine(&v, &v2).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            cosine(&e1, &EmbeddingVector(vec![0.0, 0.0])),
            Err(Error::UndefinedSimilarity(_))
        ));
        assert!(matches!(cosine(&e1, &v), Err(Error::Domain(_))));
    }

    #[test]
    fn sibling_pair_examples() {
        let t = traj(vec![
            span("r", None, ""),
            span("a", Some("r"), ""),
            span("b", Some("r"), ""),
            span("c", Some("r"), ""),
        ]);
        let ids: Vec<_> = sibling_pairs(&t)
            .iter()
            .map(|(l, r)| (l.span_id.as_str(), r.span_id.as_str()))
            .collect();
        assert_eq!(ids, [("a", "b"), ("a", "c"), ("b", "c")]);

        let chain = traj(vec![
            span("r", None, ""),
            span("a", Some("r"), ""),
            span("b", Some("a"), ""),
        ]);
        assert!(sibling_pairs(&chain).is_empty());

        let two_roots = traj(vec![span("r1", None, ""), span("r2", None, "")]);
        assert_eq!(sibling_pairs(&two_roots).len(), 1);
    }

    #[test]
    fn cdsa_examples() {
        let p = BuiltinEmbedder::default();
        let t = traj(vec![
            span("r", None, "final"),
            span("a", Some("r"), "AAPL closed at 187.3"),
            span("b", Some("r"), "AAPL closed at 187.3"),
        ]);
        let d = detect_cdsa(&t, 0.85, &p).unwrap();
        assert_eq!(d.label, 1);
        assert_eq!(d.comparisons, 1);

        let sim = cosine(
            &builtin_embed("AAPL rose", 256),
            &builtin_embed("crude oil inventories fell", 256),
        )
        .unwrap();
        assert!(sim < 0.85, "{sim}");
        let t = traj(vec![
            span("r", None, ""),
            span("a", Some("r"), "AAPL rose"),
            span("b", Some("r"), "crude oil inventories fell"),
        ]);
        assert_eq!(detect_cdsa(&t, 0.85, &p).unwrap().label, 0);

        let t = traj(vec![span("r", None, "x"), span("a", Some("r"), "x")]);
        assert_eq!(detect_cdsa(&t, 0.85, &p).unwrap().label, 0);

        for bad in [0.0, -0.1, 1.01, f64::NAN] {
            assert!(matches!(detect_cdsa(&t, bad, &p), Err(Error::Param(_))));
        }
    }

    #[test]
    fn empty_outputs_are_skipped() {
        let p = CountingProvider::new(BuiltinEmbedder::default());
        let t = traj(vec![
            span("r", None, ""),
            span("a", Some("r"), ""),
            span("b", Some("r"), ""),
        ]);
        let d = detect_cdsa(&t, 0.5, &p).unwrap();
        assert_eq!((d.label, d.comparisons, p.calls()), (0, 0, 0));
    }

    #[test]
    fn comparisons_count_siblings_only() {
        // root with 3 children, one child with 4 children: C(3,2) + C(4,2) = 9
        let mut spans = vec![span("r", None, "root out")];
        for c in ["a", "b", "c"] {
            spans.push(span(c, Some("r"), &format!("output of {c} with words")));
        }
        for g in ["g1", "g2", "g3", "g4"] {
            spans.push(span(g, Some("a"), &format!("grandchild {g} text")));
        }
        let t = traj(spans);
        let p = CountingProvider::new(BuiltinEmbedder::default());
        let d = detect_cdsa(&t, 1.0, &p).unwrap();
        assert_eq!(d.comparisons, 9);
        assert_eq!(p.calls(), 7);
        assert!(d.comparisons < 8 * 7 / 2);
    }

    /// Returns a fixed vector keyed on the first byte of the text.
    struct MockProvider;

    impl EmbeddingProvider for MockProvider {
        fn name(&self) -> &str {
            "mock"
        }
        fn dimension(&self) -> usize {
            2
        }
        fn embed(&self, text: &str) -> Result<EmbeddingVector> {
            Ok(match text.as_bytes()[0] {
                b'x' => EmbeddingVector(vec![1.0, 0.0]),
                b'y' => EmbeddingVector(vec![0.9, 0.1]),
                _ => EmbeddingVector(vec![0.0, 1.0]),
            })
        }
    }

    #[test]
    fn provider_substitution() {
        let t = traj(vec![
            span("r", None, ""),
            span("a", Some("r"), "x1"),
            span("b", Some("r"), "y1"),
            span("c", Some("r"), "z1"),
        ]);
        let d = detect_cdsa(&t, 0.9, &MockProvider).unwrap();
        assert_eq!(d.label, 1);
        assert_eq!(d.evidence.len(), 1);
        assert_eq!(d.comparisons, 3);
        assert_eq!(detect_cdsa(&t, 1.0, &MockProvider).unwrap().label, 0);
    }

    proptest! {
        #[test]
        fn cosine_symmetric(u in prop::collection::vec(-10.0f64..10.0, 8), v in prop::collection::vec(-10.0f64..10.0, 8)) {
            let (u, v) = (EmbeddingVector(u), EmbeddingVector(v));
            prop_assume!(!u.is_zero() && !v.is_zero());
            let a = cosine(&u, &v).unwrap();
            prop_assert!((a - cosine(&v, &u).unwrap()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }

        #[test]
        fn embed_deterministic_and_unit(s in "\\PC{0,80}") {
            let a = builtin_embed(&s, 64);
            prop_assert_eq!(&a, &builtin_embed(&s, 64));
            prop_assert!(a.is_zero() || (a.norm() - 1.0).abs() < 1e-9);
        }
    }
}
