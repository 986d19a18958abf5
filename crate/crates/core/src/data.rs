//! Dataset ingestion: the sparse `label idx:val` tabular format, seeded
//! train/test splits, min-max scaling, and tf-idf vectorization of
//! pre-segmented document corpora.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text::{Document, LabelVector, SparseVector};

#[derive(Clone, Debug, PartialEq)]
pub struct Row<F> {
    pub features: Arc<[F]>,
    pub label: usize,
}

/// Labeled rows with `n` features and labels dense in `[0, C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularDataset<F> {
    rows: Vec<Row<F>>,
    n: usize,
    label_names: Vec<String>,
    feature_names: Option<Vec<String>>,
}

impl<F: Scalar> TabularDataset<F> {
    /// Label names default to the label indices.
    pub fn from_dense(xs: Vec<Vec<F>>, labels: Vec<usize>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        if xs.len() != labels.len() {
            return Err(Error::dim(xs.len(), labels.len()));
        }
        let n = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != n) {
            return Err(Error::dim(n, bad.len()));
        }
        let c = labels.iter().max().map_or(0, |m| m + 1);
        let rows = xs.into_iter().zip(labels).map(|(x, label)| Row { features: x.into(), label }).collect();
        Ok(TabularDataset { rows, n, label_names: (0..c).map(|k| k.to_string()).collect(), feature_names: None })
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() < self.num_classes() {
            return Err(Error::dim(self.num_classes(), names.len()));
        }
        self.label_names = names;
        Ok(self)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n {
            return Err(Error::dim(self.n, names.len()));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn rows(&self) -> &[Row<F>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().map(|r| r.label)
    }

    /// Rows at `indices`, sharing label and feature names.
    pub fn subset(&self, indices: &[usize]) -> Self {
        TabularDataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            n: self.n,
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Re-expresses the rows in another dataset's coordinates: labels are
    /// matched by name and rows are zero-padded up to `n` features. A sparse
    /// file only reveals features up to its largest nonzero index, so a test
    /// file can look narrower than the training file.
    pub fn align_to(&self, n: usize, label_names: &[String]) -> Result<Self> {
        if self.n > n {
            return Err(Error::dim(n, self.n));
        }
        let remap: Vec<usize> = self
            .label_names
            .iter()
            .map(|name| {
                label_names
                    .iter()
                    .position(|known| known == name)
                    .ok_or_else(|| Error::InvalidDataset(format!("label {name:?} was not seen in training")))
            })
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut x = r.features.to_vec();
                x.resize(n, F::zero());
                Row { features: x.into(), label: remap[r.label] }
            })
            .collect();
        Ok(TabularDataset { rows, n, label_names: label_names.to_vec(), feature_names: None })
    }

    /// Seeded shuffle, then the first `round(fraction * N)` rows train.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let (train, test) = split_indices(self.len(), train_fraction, seed)?;
        Ok((self.subset(&train), self.subset(&test)))
    }

    pub fn from_sparse_text(text: &str) -> Result<Self> {
        let mut label_index: HashMap<String, usize> = HashMap::new();
        let mut label_names = Vec::new();
        let mut parsed: Vec<(usize, Vec<(usize, F)>)> = Vec::new();
        let mut n = 0usize;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: lineno + 1, message };
            let mut tokens = line.split_whitespace();
            let label = tokens.next().expect("non-empty line has a token");
            if label.contains(':') {
                return Err(err(format!("missing label before {label:?}")));
            }
            let next_id = label_names.len();
            let y = *label_index.entry(label.to_string()).or_insert_with(|| {
                label_names.push(label.to_string());
                next_id
            });

            let mut entries = Vec::new();
            let mut last = 0usize;
            for tok in tokens {
                let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
                let idx: usize = idx.parse().map_err(|_| err(format!("bad feature index {idx:?}")))?;
                if idx == 0 {
                    return Err(err("feature indices are 1-based".into()));
                }
                if idx <= last {
                    return Err(err(format!("feature index {idx} does not increase (previous {last})")));
                }
                let val: f64 = val.parse().map_err(|_| err(format!("bad feature value {val:?}")))?;
                if !val.is_finite() {
                    return Err(err(format!("non-finite feature value {val}")));
                }
                last = idx;
                entries.push((idx - 1, F::lit(val)));
            }
            n = n.max(last);
            parsed.push((y, entries));
        }
        if parsed.is_empty() {
            return Err(Error::InvalidDataset("no data rows".into()));
        }
        let rows = parsed
            .into_iter()
            .map(|(label, entries)| {
                let mut x = vec![F::zero(); n];
                for (j, v) in entries {
                    x[j] = v;
                }
                Row { features: x.into(), label }
            })
            .collect();
        Ok(TabularDataset { rows, n, label_names, feature_names: None })
    }

    /// Inverse of [`TabularDataset::from_sparse_text`]: zeros are omitted,
    /// except that the last feature index is written explicitly when no row
    /// has a nonzero there, so `n` survives the round trip.
    pub fn to_sparse_text(&self) -> String {
        let last_used = self.rows.iter().any(|r| self.n > 0 && r.features[self.n - 1] != F::zero());
        let mut out = String::new();
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&self.label_names[r.label]);
            for (j, v) in r.features.iter().enumerate() {
                if *v != F::zero() || (i == 0 && !last_used && j + 1 == self.n) {
                    let _ = write!(out, " {}:{}", j + 1, v);
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_sparse_rows<F: Scalar>(path: impl AsRef<Path>) -> Result<TabularDataset<F>> {
    TabularDataset::from_sparse_text(&fs::read_to_string(path)?)
}

/// Shuffled `(train, test)` index partition of `0..len`.
pub fn split_indices(len: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let cut = (train_fraction * len as f64).round() as usize;
    if cut == 0 || cut == len {
        return Err(Error::InvalidArgument(format!("fraction {train_fraction} of {len} rows leaves one side empty")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(cut);
    Ok((order, test))
}

/// Per-feature min-max statistics from a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRecord<F> {
    pub min: Vec<F>,
    pub max: Vec<F>,
}

impl<F: Scalar> ScalingRecord<F> {
    pub fn fit(train: &TabularDataset<F>) -> Self {
        let n = train.num_features();
        let mut min = vec![F::infinity(); n];
        let mut max = vec![F::neg_infinity(); n];
        for r in train.rows() {
            for (j, &v) in r.features.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        ScalingRecord { min, max }
    }

    /// Maps each value to `[0, 1]`; constant features map to 0.
    pub fn scale_row(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                let range = hi - lo;
                if range > F::zero() {
                    ((v - lo) / range).max(F::zero()).min(F::one())
                } else {
                    F::zero()
                }
            })
            .collect()
    }

    pub fn apply(&self, data: &TabularDataset<F>) -> Result<TabularDataset<F>> {
        if data.num_features() != self.min.len() {
            return Err(Error::dim(self.min.len(), data.num_features()));
        }
        let mut out = data.clone();
        for r in &mut out.rows {
            r.features = self.scale_row(&r.features).into();
        }
        Ok(out)
    }
}

/// Min-max scales `train` with its own statistics and returns the record for
/// re-use on held-out data.
pub fn normalize_features<F: Scalar>(train: &TabularDataset<F>) -> Result<(TabularDataset<F>, ScalingRecord<F>)> {
    if train.num_features() == 0 {
        return Err(Error::InvalidDataset("dataset has no features".into()));
    }
    let record = ScalingRecord::fit(train);
    Ok((record.apply(train)?, record))
}

/// A document before vectorization: one string per sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDocument {
    pub id: String,
    pub sentences: Vec<String>,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawCorpus {
    pub docs: Vec<RawDocument>,
    pub label_names: Vec<String>,
}

impl RawCorpus {
    pub fn subset(&self, indices: &[usize]) -> Self {
        RawCorpus { docs: indices.iter().map(|&i| self.docs[i].clone()).collect(), label_names: self.label_names.clone() }
    }
}

/// Reads a manifest of `<doc-path>\t<cat,cat,...>` lines. Document paths are
/// relative to the manifest; each document holds one sentence per line.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<RawCorpus> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let text = fs::read_to_string(path)?;
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut label_names = Vec::new();
    let mut docs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: lineno + 1, message };
        let (doc_path, cats) = line.split_once('\t').ok_or_else(|| err("expected <path>\\t<categories>".into()))?;
        let mut labels = Vec::new();
        for cat in cats.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let next_id = label_names.len();
            let k = *label_index.entry(cat.to_string()).or_insert_with(|| {
                label_names.push(cat.to_string());
                next_id
            });
            if !labels.contains(&k) {
                labels.push(k);
            }
        }
        if labels.is_empty() {
            return Err(err(format!("document {doc_path} has no category")));
        }
        let content = fs::read_to_string(base.join(doc_path))?;
        let sentences: Vec<String> = content.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        if sentences.is_empty() {
            return Err(err(format!("document {doc_path} has no sentences")));
        }
        docs.push(RawDocument { id: doc_path.to_string(), sentences, labels });
    }
    if docs.is_empty() {
        return Err(Error::InvalidDataset("manifest lists no documents".into()));
    }
    Ok(RawCorpus { docs, label_names })
}

fn tokens(sentence: &str) -> impl Iterator<Item = String> + '_ {
    sentence.split_whitespace().map(str::to_lowercase)
}

/// Vocabulary in first-appearance order with document-level idf weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfIndex<F> {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<F>,
}

impl<F: Scalar> TfidfIndex<F> {
    /// `idf_t = ln(N_docs / df_t)`.
    pub fn fit(docs: &[RawDocument]) -> Result<Self> {
        let mut tokens_in_order = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        for doc in docs {
            let mut seen = vec![false; df.len()];
            for t in doc.sentences.iter().flat_map(|s| tokens(s)) {
                let id = match index.get(&t) {
                    Some(&id) => id,
                    None => {
                        let id = tokens_in_order.len();
                        index.insert(t.clone(), id);
                        tokens_in_order.push(t);
                        df.push(0);
                        seen.push(false);
                        id
                    }
                };
                if !seen[id] {
                    seen[id] = true;
                    df[id] += 1;
                }
            }
        }
        if tokens_in_order.is_empty() {
            return Err(Error::InvalidDataset("empty vocabulary".into()));
        }
        let n_docs = F::from_usize_lossy(docs.len());
        let idf = df.iter().map(|&d| (n_docs / F::from_usize_lossy(d)).ln()).collect();
        Ok(TfidfIndex { tokens: tokens_in_order, index, idf })
    }

    pub fn from_parts(tokens: Vec<String>, idf: Vec<F>) -> Result<Self> {
        if tokens.len() != idf.len() {
            return Err(Error::dim(tokens.len(), idf.len()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(TfidfIndex { tokens, index, idf })
    }

    pub fn dim(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn idf(&self) -> &[F] {
        &self.idf
    }

    pub fn token_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// L2-normalized tf-idf vector; unknown tokens are ignored.
    pub fn sentence_vector(&self, sentence: &str) -> SparseVector<F> {
        let mut tf: HashMap<usize, usize> = HashMap::new();
        for t in tokens(sentence) {
            if let Some(id) = self.token_id(&t) {
                *tf.entry(id).or_default() += 1;
            }
        }
        let mut entries: Vec<(usize, F)> =
            tf.into_iter().map(|(id, count)| (id, F::from_usize_lossy(count) * self.idf[id])).filter(|(_, v)| *v != F::zero()).collect();
        entries.sort_unstable_by_key(|(id, _)| *id);
        let norm = entries.iter().map(|(_, v)| *v * *v).sum::<F>().sqrt();
        if norm > F::zero() {
            for (_, v) in &mut entries {
                *v /= norm;
            }
        }
        SparseVector::new(self.dim(), entries).expect("sorted in-range indices")
    }

    pub fn vectorize(&self, raw: &RawDocument, num_labels: usize) -> Result<LabeledDocument<F>> {
        let sentences = raw.sentences.iter().map(|s| self.sentence_vector(s)).collect();
        let doc = Document::new(raw.id.clone(), sentences)?;
        if let Some(&bad) = raw.labels.iter().find(|&&k| k >= num_labels) {
            return Err(Error::InvalidDataset(format!("label {bad} out of range in {}", raw.id)));
        }
        Ok(LabeledDocument { doc: Arc::new(doc), labels: LabelVector::from_indices(num_labels, &raw.labels) })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDocument<F> {
    pub doc: Arc<Document<F>>,
    pub labels: LabelVector,
}

/// Vectorized documents together with the index that produced them.
#[derive(Clone, Debug)]
pub struct Corpus<F> {
    pub docs: Vec<LabeledDocument<F>>,
    pub index: TfidfIndex<F>,
    pub label_names: Vec<String>,
    /// `(document id, sentence index)` of sentences that vectorized to zero.
    pub empty_sentences: Vec<(String, usize)>,
}

impl<F: Scalar> Corpus<F> {
    /// Vectorizes held-out documents with this corpus' vocabulary and idf.
    pub fn transform(&self, raw: &[RawDocument]) -> Result<Vec<LabeledDocument<F>>> {
        raw.iter().map(|d| self.index.vectorize(d, self.label_names.len())).collect()
    }
}

pub fn tfidf_vectorize<F: Scalar>(raw: &RawCorpus) -> Result<Corpus<F>> {
    if raw.docs.is_empty() {
        return Err(Error::InvalidDataset("empty corpus".into()));
    }
    let index = TfidfIndex::fit(&raw.docs)?;
    let docs: Vec<LabeledDocument<F>> = raw.docs.iter().map(|d| index.vectorize(d, raw.label_names.len())).collect::<Result<_>>()?;
    let empty_sentences =
        docs.iter().flat_map(|d| d.doc.empty_sentences().into_iter().map(|i| (d.doc.id().to_string(), i))).collect::<Vec<_>>();
    if !empty_sentences.is_empty() {
        log::warn!("{} sentences have an all-zero tf-idf vector", empty_sentences.len());
    }
    Ok(Corpus { docs, index, label_names: raw.label_names.clone(), empty_sentences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn align_pads_and_renames() {
        let train = TabularDataset::<f64>::from_sparse_text("b 1:1 3:2\na 2:1\n").unwrap();
        let test = TabularDataset::<f64>::from_sparse_text("a 1:5\nb 2:1\n").unwrap();
        let aligned = test.align_to(3, train.label_names()).unwrap();
        assert_eq!(aligned.num_features(), 3);
        assert_eq!(&*aligned.rows()[0].features, &[5.0, 0.0, 0.0]);
        assert_eq!(aligned.labels().collect::<Vec<_>>(), vec![1, 0]);
        assert!(test.align_to(3, &["a".to_string()]).is_err());
        assert!(train.align_to(2, train.label_names()).is_err());
    }

    #[test]
    fn parses_sparse_line() {
        let d = TabularDataset::<f64>::from_sparse_text("+1 1:0.5 3:2\n-1 2:1\n").unwrap();
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.num_features(), 3);
        assert_eq!(&*d.rows()[0].features, &[0.5, 0.0, 2.0]);
        assert_eq!(d.rows()[0].label, 0);
        assert_eq!(d.rows()[1].label, 1);
        assert_eq!(d.label_names(), &["+1".to_string(), "-1".to_string()]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let d = TabularDataset::<f64>::from_sparse_text("# header\n\n2 1:1 # trailing\n").unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(TabularDataset::<f64>::from_sparse_text(""), Err(Error::InvalidDataset(_))));
        assert!(matches!(TabularDataset::<f64>::from_sparse_text("# only\n"), Err(Error::InvalidDataset(_))));
        match TabularDataset::<f64>::from_sparse_text("1 1:1\n2 2:1 1:1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(TabularDataset::<f64>::from_sparse_text("1 0:1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(TabularDataset::<f64>::from_sparse_text("1 2\n"), Err(Error::Parse { .. })));
        assert!(matches!(TabularDataset::<f64>::from_sparse_text("1 2:x\n"), Err(Error::Parse { .. })));
        assert!(matches!(TabularDataset::<f64>::from_sparse_text("1 2:2 2:3\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = TabularDataset::from_dense((0..10).map(|i| vec![i as f64]).collect(), vec![0; 10]).unwrap();
        let (a, b) = d.split(0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let (a2, b2) = d.split(0.5, 3).unwrap();
        assert_eq!((a, b), (a2, b2));
        assert!(d.split(0.01, 3).is_err());
        assert!(d.split(1.0, 3).is_err());
        assert!(d.split(0.0, 3).is_err());
    }

    #[test]
    fn normalization_rules() {
        let d = TabularDataset::from_dense(vec![vec![2.0, 3.0], vec![4.0, 3.0], vec![3.0, 3.0]], vec![0, 1, 0]).unwrap();
        let (scaled, rec) = normalize_features(&d).unwrap();
        let col0: Vec<f64> = scaled.rows().iter().map(|r| r.features[0]).collect();
        let col1: Vec<f64> = scaled.rows().iter().map(|r| r.features[1]).collect();
        assert_eq!(col0, vec![0.0, 1.0, 0.5]);
        assert_eq!(col1, vec![0.0; 3]);
        assert_eq!(rec.scale_row(&[10.0, 3.0]), vec![1.0, 0.0]);
        assert_eq!(rec.scale_row(&[-5.0, 7.0]), vec![0.0, 0.0]);
    }

    fn raw(id: &str, sentences: &[&str]) -> RawDocument {
        RawDocument { id: id.into(), sentences: sentences.iter().map(|s| s.to_string()).collect(), labels: vec![0] }
    }

    #[test]
    fn tfidf_rules() {
        let corpus =
            RawCorpus { docs: vec![raw("a", &["the cocoa", "The price"]), raw("b", &["the grain"])], label_names: vec!["x".into()] };
        let c = tfidf_vectorize::<f64>(&corpus).unwrap();
        let the = c.index.token_id("the").unwrap();
        assert_eq!(c.index.idf()[the], 0.0);
        let a = &c.docs[0].doc;
        let s0 = a.sentences()[0].to_dense();
        let s1 = a.sentences()[1].to_dense();
        // "the" contributes nothing; "cocoa" alone normalizes to 1
        assert_eq!(s0[c.index.token_id("cocoa").unwrap()], 1.0);
        assert_eq!(s0.iter().filter(|v| **v != 0.0).count(), 1);
        let dot: f64 = s0.iter().zip(&s1).map(|(x, y)| x * y).sum();
        assert_eq!(dot, 0.0);
        assert!(c.empty_sentences.is_empty());

        let single = RawCorpus { docs: vec![raw("a", &["same"]), raw("b", &["same"])], label_names: vec!["x".into()] };
        let c = tfidf_vectorize::<f64>(&single).unwrap();
        assert_eq!(c.empty_sentences.len(), 2);

        let nothing = RawCorpus { docs: vec![raw("a", &["  "])], label_names: vec!["x".into()] };
        assert!(matches!(tfidf_vectorize::<f64>(&nothing), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn manifest_loading() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("d1.txt"), "first sentence\n\nsecond one\n").unwrap();
        fs::write(dir.path().join("d2.txt"), "other text\n").unwrap();
        fs::write(dir.path().join("m.tsv"), "d1.txt\tcocoa,grain\n# skip\nd2.txt\tgrain\n").unwrap();
        let c = load_manifest(dir.path().join("m.tsv")).unwrap();
        assert_eq!(c.label_names, vec!["cocoa", "grain"]);
        assert_eq!(c.docs[0].sentences.len(), 2);
        assert_eq!(c.docs[0].labels, vec![0, 1]);
        assert_eq!(c.docs[1].labels, vec![1]);
    }

    proptest! {
        #[test]
        fn sparse_text_round_trip(
            rows in proptest::collection::vec(
                (0usize..3, proptest::collection::vec(prop_oneof![Just(0.0f64), -1e3f64..1e3], 5)), 1..12)
        ) {
            let (ys, xs): (Vec<usize>, Vec<Vec<f64>>) = rows.into_iter().unzip();
            let text = {
                let mut t = String::new();
                for (x, y) in xs.iter().zip(&ys) {
                    t.push_str(&format!("c{y}"));
                    for (j, v) in x.iter().enumerate() {
                        if *v != 0.0 { t.push_str(&format!(" {}:{}", j + 1, v)); }
                    }
                    t.push('\n');
                }
                t
            };
            let parsed = TabularDataset::<f64>::from_sparse_text(&text).unwrap();
            let again = TabularDataset::<f64>::from_sparse_text(&parsed.to_sparse_text()).unwrap();
            prop_assert_eq!(&parsed, &again);
        }

        #[test]
        fn split_is_a_partition(len in 4usize..60, frac in 0.2f64..0.8, seed in any::<u64>()) {
            let (a, b) = split_indices(len, frac, seed).unwrap();
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
            prop_assert_eq!(a.len(), (frac * len as f64).round() as usize);
        }

        #[test]
        fn normalized_training_features_in_unit_interval(
            xs in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 2..20)
        ) {
            let labels = vec![0; xs.len()];
            let d = TabularDataset::from_dense(xs, labels).unwrap();
            let (scaled, _) = normalize_features(&d).unwrap();
            for r in scaled.rows() {
                prop_assert!(r.features.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
