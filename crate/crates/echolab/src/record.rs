//! Records that flow through the pipeline, and the in-memory dataset they
//! are read from.

/// Target of one training example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    /// Class index for classification tasks.
    Class(u32),
    /// Real-valued target for regression tasks.
    Value(f64),
}

impl Label {
    /// Class index, for classification examples.
    ///
    /// # Panics
    /// Panics when called on a regression label; feeding regression data to
    /// a classifier is a wiring bug, not a runtime condition.
    pub fn class(self) -> u32 {
        match self {
            Label::Class(c) => c,
            Label::Value(_) => panic!("expected a class label, found a regression value"),
        }
    }

    /// Regression target, for regression examples.
    ///
    /// # Panics
    /// Panics when called on a classification label.
    pub fn value(self) -> f64 {
        match self {
            Label::Value(v) => v,
            Label::Class(_) => panic!("expected a regression value, found a class label"),
        }
    }
}

/// One example flowing through the pipeline, with read provenance.
///
/// `read_id` identifies the *fresh read* this example came from: every read
/// from the source gets a new id, and all echoed copies of that read share
/// it. `echo_index` distinguishes the copies (0 for the first emission).
/// Downstream duplicate accounting keys on `read_id` alone.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleRecord {
    /// Position of the underlying example in the dataset.
    pub source_index: usize,
    /// Serial number of the source read that produced this record.
    pub read_id: u64,
    /// Which echoed copy of the read this is (0-based).
    pub echo_index: u32,
    /// Seed stream for augmentation noise applied to this record.
    pub aug_seed: u64,
    /// Feature vector (possibly already augmented).
    pub features: Vec<f64>,
    /// Training target.
    pub label: Label,
}

/// A fixed-size group of examples emitted by the batching stage.
///
/// For batch-level echoing the whole batch is repeated and `echo_index` on
/// the batch counts the copies; the member examples keep their own fields.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchRecord {
    /// Serial number assigned by the batching stage (echoed copies share it).
    pub batch_id: u64,
    /// Which echoed copy of the batch this is (0 when batches are not echoed).
    pub echo_index: u32,
    /// The examples in the batch; always exactly the configured batch size.
    pub examples: Vec<ExampleRecord>,
}

impl BatchRecord {
    /// Number of examples in the batch.
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    /// True when the batch holds no examples (never produced by a pipeline).
    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Read ids of the member examples, in batch order.
    pub fn read_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.examples.iter().map(|ex| ex.read_id)
    }

    /// Sorted multiset of member read ids. Two batches are "identical" for
    /// duplication accounting when these compare equal.
    pub fn read_id_multiset(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.read_ids().collect();
        ids.sort_unstable();
        ids
    }

    /// Number of distinct read ids in the batch.
    pub fn distinct_reads(&self) -> usize {
        let mut ids = self.read_id_multiset();
        ids.dedup();
        ids.len()
    }

    /// Fraction of examples in the batch that share a read id with another
    /// example of the same batch (0 when all reads are distinct, 1 when
    /// every example has a twin).
    pub fn duplicate_fraction(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let ids = self.read_id_multiset();
        let mut dup = 0usize;
        let mut i = 0usize;
        while i < ids.len() {
            let mut j = i + 1;
            while j < ids.len() && ids[j] == ids[i] {
                j += 1;
            }
            if j - i > 1 {
                dup += j - i;
            }
            i = j;
        }
        dup as f64 / ids.len() as f64
    }
}

/// An in-memory dataset: dense feature vectors plus labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl Dataset {
    /// Build a dataset from parallel feature and label vectors.
    ///
    /// # Panics
    /// Panics if the vectors disagree in length or the feature rows are
    /// ragged; both indicate construction bugs.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<Label>) -> Dataset {
        assert_eq!(
            features.len(),
            labels.len(),
            "feature and label counts must match"
        );
        if let Some(first) = features.first() {
            let dim = first.len();
            assert!(
                features.iter().all(|row| row.len() == dim),
                "all feature rows must have the same dimension"
            );
        }
        Dataset { features, labels }
    }

    /// Dataset with `len` all-zero feature vectors of width `dim`, labelled
    /// class 0. Useful when only the flow of records matters, not values.
    pub fn zeros(len: usize, dim: usize) -> Dataset {
        Dataset {
            features: vec![vec![0.0; dim]; len],
            labels: vec![Label::Class(0); len],
        }
    }

    /// Number of examples.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    /// True when the dataset holds no examples.
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Width of the feature vectors (0 for an empty dataset).
    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Feature row `i`.
    pub fn features_at(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    /// Label of row `i`.
    pub fn label_at(&self, i: usize) -> Label {
        self.labels[i]
    }
}
