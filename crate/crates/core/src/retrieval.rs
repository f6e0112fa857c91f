//! Enrollment, category-gated similarity search and the relevance-feedback
//! rule that can move an image to another category.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{predict_category, Category, Probabilities, NUM_CATEGORIES};
use crate::color::{color_vector, ColorError, COLOR_DIM};
use crate::imagecore::{decode_image, sniff_format, ImageError, RasterImage};
use crate::shape::{shape_descriptor, ShapeError};
use crate::store::{
    now_ms, CategoryState, FeedbackEvent, ImageId, ImageRecord, LogEntry, Polarity, QueryId,
    QueryParams, QueryRecord, Store, StoreError,
};
use crate::texture::{texture_vector, TextureError, TEXTURE_DIM};

/// Negative marks in one category that trigger a reassignment.
pub const STRIKES_TO_REASSIGN: u32 = 3;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("classifier has not been trained")]
    UntrainedClassifier,
    #[error("corpus normalization has not been fitted")]
    UnfittedNormalization,
    #[error("cannot fit normalization on an empty corpus")]
    EmptyCorpus,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimMismatch(usize, usize),
    #[error("distance {0} is negative")]
    NegativeDistance(f64),
    #[error("feedback for query {query_id} and image {image_id} was already recorded")]
    DuplicateFeedback { query_id: QueryId, image_id: ImageId },
    #[error("unknown query {0}")]
    UnknownQuery(QueryId),
    #[error("unknown image {0}")]
    UnknownImage(ImageId),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Per-dimension bounds of the enrolled color and texture vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusNormalization {
    pub color_min: Vec<f64>,
    pub color_max: Vec<f64>,
    pub texture_min: Vec<f64>,
    pub texture_max: Vec<f64>,
    pub fitted_on: usize,
}

fn bounds<'a>(vectors: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for v in vectors {
        for (i, &x) in v.iter().enumerate().take(dim) {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
    }
    (lo, hi)
}

/// Fits min/max bounds over `(color, texture)` pairs.
pub fn fit_normalization<'a>(
    records: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
) -> Result<CorpusNormalization, RetrievalError> {
    let pairs: Vec<_> = records.into_iter().collect();
    if pairs.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    for (c, t) in &pairs {
        if c.len() != COLOR_DIM {
            return Err(RetrievalError::DimMismatch(c.len(), COLOR_DIM));
        }
        if t.len() != TEXTURE_DIM {
            return Err(RetrievalError::DimMismatch(t.len(), TEXTURE_DIM));
        }
    }
    let (color_min, color_max) = bounds(pairs.iter().map(|p| p.0), COLOR_DIM);
    let (texture_min, texture_max) = bounds(pairs.iter().map(|p| p.1), TEXTURE_DIM);
    Ok(CorpusNormalization { color_min, color_max, texture_min, texture_max, fitted_on: pairs.len() })
}

/// Refits normalization over every enrolled record and persists it.
pub fn refit_normalization(store: &Store) -> Result<CorpusNormalization, RetrievalError> {
    let n = {
        let state = store.read();
        fit_normalization(state.records().map(|r| (r.color.as_slice(), r.texture.as_slice())))?
    };
    store.put_normalization(n.clone())?;
    Ok(n)
}

/// Min-max scaling clamped to `[0, 1]`; a dimension with `max == min` maps to 0.
pub fn normalize(v: &[f64], min: &[f64], max: &[f64]) -> Result<Vec<f64>, RetrievalError> {
    if v.len() != min.len() || v.len() != max.len() {
        return Err(RetrievalError::DimMismatch(v.len(), min.len()));
    }
    Ok(v.iter()
        .zip(min.iter().zip(max))
        .map(|(&x, (&lo, &hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
        .collect())
}

impl CorpusNormalization {
    pub fn color(&self, v: &[f64]) -> Result<Vec<f64>, RetrievalError> {
        normalize(v, &self.color_min, &self.color_max)
    }

    pub fn texture(&self, v: &[f64]) -> Result<Vec<f64>, RetrievalError> {
        normalize(v, &self.texture_min, &self.texture_max)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `1 / (1 + d)`.
pub fn similarity(distance: f64) -> Result<f64, RetrievalError> {
    if distance < 0.0 || distance.is_nan() {
        return Err(RetrievalError::NegativeDistance(distance));
    }
    Ok(1.0 / (1.0 + distance))
}

/// Harmonic mean of the two similarities; 0 when both are 0.
pub fn fuse_harmonic(color_sim: f64, texture_sim: f64) -> f64 {
    let sum = color_sim + texture_sim;
    if sum == 0.0 {
        0.0
    } else {
        2.0 * color_sim * texture_sim / sum
    }
}

/// The three feature vectors of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub color: Vec<f64>,
    pub texture: Vec<f64>,
    pub shape: [f64; crate::shape::SHAPE_DIM],
}

pub fn extract_features(img: &RasterImage) -> Result<FeatureSet, RetrievalError> {
    // Shape first: it is the cheapest way to reject blank images.
    let shape = shape_descriptor(img)?;
    Ok(FeatureSet {
        color: color_vector(img)?.0,
        texture: texture_vector(img)?.0,
        shape: shape.0,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnrollRequest {
    /// Category supplied by the caller; takes precedence over the classifier.
    pub label: Option<Category>,
    pub keywords: Vec<String>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollOutcome {
    pub image_id: ImageId,
    pub category: Category,
    pub probs: Probabilities,
}

/// Decodes, extracts all features, classifies and persists one image.
pub fn enroll(store: &Store, bytes: &[u8], req: EnrollRequest) -> Result<EnrollOutcome, RetrievalError> {
    let weights = match store.weights() {
        Ok(w) => w,
        Err(StoreError::Missing(_)) => return Err(RetrievalError::UntrainedClassifier),
        Err(e) => return Err(e.into()),
    };
    let format = sniff_format(bytes)?;
    let img = decode_image(bytes)?;
    let features = extract_features(&img)?;
    let (predicted, probs) = predict_category(&weights, &features.shape);
    let category = req.label.unwrap_or(predicted);
    let record = ImageRecord {
        image_id: 0,
        blob: bytes.to_vec(),
        format,
        state: CategoryState { category: Some(category), ..CategoryState::default() },
        enroll_probs: probs,
        color: features.color,
        texture: features.texture,
        shape: features.shape.to_vec(),
        keywords: req.keywords,
        metadata: req.metadata,
    };
    let image_id = store.put_record(record)?;
    Ok(EnrollOutcome { image_id, category, probs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub image_id: ImageId,
    pub color_sim: f64,
    pub texture_sim: f64,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOptions {
    pub params: QueryParams,
    /// Compare only against the predicted category. Disabling this is for
    /// ablation; the normal search is always gated.
    pub gated: bool,
    /// Records never compared (for example the query's own record).
    pub exclude: Vec<ImageId>,
    /// Persist a query record so feedback can refer to it.
    pub persist: bool,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self { params: QueryParams::default(), gated: true, exclude: Vec::new(), persist: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    /// Present when the query was persisted.
    pub query: Option<QueryRecord>,
    pub predicted: Category,
    pub probs: Probabilities,
    /// Number of stored records whose distance was computed.
    pub comparisons: usize,
    pub results: Vec<QueryResult>,
}

pub fn query(store: &Store, img: &RasterImage, opts: &QueryOptions) -> Result<QueryOutcome, RetrievalError> {
    let weights = match store.weights() {
        Ok(w) => w,
        Err(StoreError::Missing(_)) => return Err(RetrievalError::UntrainedClassifier),
        Err(e) => return Err(e.into()),
    };
    let features = extract_features(img)?;
    let (predicted, probs) = predict_category(&weights, &features.shape);
    query_with_features(store, &features, predicted, probs, opts)
}

/// Search with already extracted features and an already predicted category.
pub fn query_with_features(
    store: &Store,
    features: &FeatureSet,
    predicted: Category,
    probs: Probabilities,
    opts: &QueryOptions,
) -> Result<QueryOutcome, RetrievalError> {
    let (comparisons, mut results) = {
        let state = store.read();
        let norm = state.normalization().ok_or(RetrievalError::UnfittedNormalization)?;
        let q_color = norm.color(&features.color)?;
        let q_texture = norm.texture(&features.texture)?;
        let mut comparisons = 0;
        let mut results = Vec::new();
        for rec in state.records() {
            if opts.gated && rec.category() != Some(predicted) {
                continue;
            }
            if opts.exclude.contains(&rec.image_id) {
                continue;
            }
            comparisons += 1;
            let color_sim = similarity(euclidean(&q_color, &norm.color(&rec.color)?)?)?;
            let texture_sim = similarity(euclidean(&q_texture, &norm.texture(&rec.texture)?)?)?;
            let score = fuse_harmonic(color_sim, texture_sim);
            if score >= opts.params.threshold {
                results.push(QueryResult { image_id: rec.image_id, color_sim, texture_sim, score, rank: 0 });
            }
        }
        (comparisons, results)
    };
    results.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.image_id.cmp(&b.image_id)));
    results.truncate(opts.params.top_k);
    for (i, r) in results.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    let query = if opts.persist { Some(store.record_query(predicted, opts.params)?) } else { None };
    Ok(QueryOutcome { query, predicted, probs, comparisons, results })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub query_id: QueryId,
    pub image_id: ImageId,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    pub reassigned: bool,
    /// The record's category after the update; `None` inside `Some` means it
    /// became uncategorized. Only set when `reassigned`.
    pub new_category: Option<Option<Category>>,
}

/// Next category state after one feedback event on a record, for feedback
/// attributed to a query that predicted `query_category`.
///
/// Positive feedback clears the negative marks for that category. Negative
/// feedback adds a mark; at [`STRIKES_TO_REASSIGN`] marks, if the record
/// still sits in that category, the category is vetoed and the record moves
/// to its most probable non-vetoed enrollment category (smallest code on
/// ties), or becomes uncategorized once all nine are vetoed.
pub fn feedback_transition(
    state: &CategoryState,
    enroll_probs: &Probabilities,
    query_category: Category,
    polarity: Polarity,
) -> CategoryState {
    let mut next = state.clone();
    match polarity {
        Polarity::Positive => {
            next.neg_counts.remove(&query_category);
        }
        Polarity::Negative => {
            let count = next.neg_counts.entry(query_category).or_insert(0);
            *count += 1;
            if *count >= STRIKES_TO_REASSIGN && next.category == Some(query_category) {
                next.vetoed.insert(query_category);
                next.category = best_allowed(enroll_probs, &next);
            }
        }
    }
    next
}

fn best_allowed(probs: &Probabilities, state: &CategoryState) -> Option<Category> {
    let mut best: Option<usize> = None;
    for k in 0..NUM_CATEGORIES {
        if state.vetoed.contains(&Category::ALL[k]) {
            continue;
        }
        if best.is_none_or(|b| probs[k] > probs[b]) {
            best = Some(k);
        }
    }
    best.map(|k| Category::ALL[k])
}

/// Records one feedback event and applies the category rule, atomically.
pub fn apply_feedback(store: &Store, req: FeedbackRequest) -> Result<FeedbackOutcome, RetrievalError> {
    store.transact(|state| {
        let query = state.query(req.query_id).ok_or(RetrievalError::UnknownQuery(req.query_id))?;
        let record = state.record(req.image_id).ok_or(RetrievalError::UnknownImage(req.image_id))?;
        if state.has_feedback(req.query_id, req.image_id) {
            return Err(RetrievalError::DuplicateFeedback { query_id: req.query_id, image_id: req.image_id });
        }
        let next = feedback_transition(&record.state, &record.enroll_probs, query.predicted, req.polarity);
        let reassigned = next.category != record.state.category;
        let outcome = FeedbackOutcome { reassigned, new_category: reassigned.then_some(next.category) };
        let event = FeedbackEvent {
            query_id: req.query_id,
            image_id: req.image_id,
            polarity: req.polarity,
            timestamp_ms: now_ms(),
        };
        let entries = vec![LogEntry::Feedback(event), LogEntry::Category { image_id: req.image_id, state: next }];
        Ok((entries, outcome))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_fit_examples() {
        let a_c = vec![2.0; COLOR_DIM];
        let a_t = vec![1.0; TEXTURE_DIM];
        let n = fit_normalization([(a_c.as_slice(), a_t.as_slice())]).unwrap();
        assert_eq!((n.color_min.clone(), n.color_max.clone()), (a_c.clone(), a_c.clone()));

        let b_c = vec![10.0; COLOR_DIM];
        let n2 = fit_normalization([(a_c.as_slice(), a_t.as_slice()), (b_c.as_slice(), a_t.as_slice())]).unwrap();
        assert_eq!((n2.color_min[0], n2.color_max[0], n2.fitted_on), (2.0, 10.0, 2));

        let mid = vec![6.0; COLOR_DIM];
        let n3 = fit_normalization([
            (a_c.as_slice(), a_t.as_slice()),
            (b_c.as_slice(), a_t.as_slice()),
            (mid.as_slice(), a_t.as_slice()),
        ])
        .unwrap();
        assert_eq!((n3.color_min.clone(), n3.color_max.clone()), (n2.color_min, n2.color_max));

        assert!(matches!(fit_normalization([]), Err(RetrievalError::EmptyCorpus)));
    }

    #[test]
    fn normalize_examples() {
        let v = normalize(&[2.0, 10.0, 6.0, 5.0, 99.0], &[2.0, 2.0, 2.0, 5.0, 0.0], &[10.0, 10.0, 10.0, 5.0, 1.0])
            .unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(normalize(&[1.0], &[0.0, 0.0], &[1.0, 1.0]), Err(RetrievalError::DimMismatch(1, 2))));
    }

    #[test]
    fn distance_similarity_and_fusion() {
        assert_eq!(euclidean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(euclidean(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(similarity(0.0).unwrap(), 1.0);
        assert_eq!(similarity(1.0).unwrap(), 0.5);
        assert_eq!(similarity(3.0).unwrap(), 0.25);
        assert!(matches!(similarity(-1.0), Err(RetrievalError::NegativeDistance(_))));
        assert_eq!(fuse_harmonic(1.0, 1.0), 1.0);
        assert!((fuse_harmonic(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(fuse_harmonic(0.0, 0.7), 0.0);
        assert_eq!(fuse_harmonic(0.0, 0.0), 0.0);
    }

    fn probs(order: &[(usize, f64)]) -> Probabilities {
        let mut p = [0.0; NUM_CATEGORIES];
        for &(k, v) in order {
            p[k] = v;
        }
        p
    }

    #[test]
    fn three_strikes_move_to_second_best() {
        let p = probs(&[(0, 0.6), (4, 0.3), (2, 0.1)]);
        let mut s = CategoryState { category: Some(Category::Boats), ..Default::default() };
        for _ in 0..2 {
            s = feedback_transition(&s, &p, Category::Boats, Polarity::Negative);
            assert_eq!(s.category, Some(Category::Boats));
        }
        s = feedback_transition(&s, &p, Category::Boats, Polarity::Negative);
        assert_eq!(s.category, Some(Category::Human));
        assert!(s.vetoed.contains(&Category::Boats));
    }

    #[test]
    fn positive_clears_marks() {
        let p = probs(&[(0, 0.6), (4, 0.4)]);
        let mut s = CategoryState { category: Some(Category::Boats), ..Default::default() };
        s = feedback_transition(&s, &p, Category::Boats, Polarity::Negative);
        s = feedback_transition(&s, &p, Category::Boats, Polarity::Positive);
        s = feedback_transition(&s, &p, Category::Boats, Polarity::Negative);
        s = feedback_transition(&s, &p, Category::Boats, Polarity::Negative);
        assert_eq!(s.category, Some(Category::Boats));
        assert_eq!(s.neg_counts[&Category::Boats], 2);
    }

    #[test]
    fn all_vetoed_becomes_uncategorized() {
        let p = [1.0 / 9.0; NUM_CATEGORIES];
        let mut s = CategoryState { category: Some(Category::Boats), ..Default::default() };
        let mut visited = vec![];
        while let Some(c) = s.category {
            visited.push(c);
            for _ in 0..STRIKES_TO_REASSIGN {
                s = feedback_transition(&s, &p, c, Polarity::Negative);
            }
        }
        // Uniform probabilities walk the codes in order.
        assert_eq!(visited, Category::ALL.to_vec());
        assert_eq!(s.vetoed.len(), NUM_CATEGORIES);
    }
}
