//! Dataset ingestion (IDX binary and CSV), deterministic shuffling, and
//! mini-batch iteration.

use crate::numerics::SeededRng;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use thiserror::Error;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: file truncated while reading {what}")]
    Truncated { path: String, what: &'static str },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}:{line}: {reason}")]
    MalformedRow {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: dataset is empty")]
    Empty { path: String },
    #[error("{path}:{line}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange {
        path: String,
        line: usize,
        label: i64,
        num_classes: usize,
    },
}

/// An in-memory classification dataset: `len x num_features` inputs in
/// row-major order plus one class index per sample. Immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Vec<f64>,
        labels: Vec<usize>,
        num_features: usize,
        num_classes: usize,
    ) -> Self {
        assert_eq!(
            inputs.len(),
            labels.len() * num_features,
            "input/label shape mismatch"
        );
        assert!(
            labels.iter().all(|&l| l < num_classes),
            "label out of range"
        );
        Dataset {
            name: name.into(),
            inputs,
            labels,
            num_features,
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn input(&self, sample: usize) -> &[f64] {
        &self.inputs[sample * self.num_features..(sample + 1) * self.num_features]
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} samples, {} features, {} classes",
            self.name,
            self.len(),
            self.num_features,
            self.num_classes
        )
    }
}

/// One mini-batch gathered out of a dataset.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn read_u32_be(reader: &mut impl Read, path: &str, what: &'static str) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| DataError::Truncated {
            path: path.to_string(),
            what,
        })?;
    Ok(u32::from_be_bytes(buf))
}

fn open(path: &Path) -> Result<BufReader<File>, DataError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Loads the classic IDX image/label pair: big-endian magic and dimensions,
/// then raw payload bytes. Pixels scale to `[0, 1]` by division with 255.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images_name = images_path.display().to_string();
    let mut reader = open(images_path)?;
    let magic = read_u32_be(&mut reader, &images_name, "images magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: images_name,
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&mut reader, &images_name, "image count")? as usize;
    let rows = read_u32_be(&mut reader, &images_name, "row count")? as usize;
    let cols = read_u32_be(&mut reader, &images_name, "column count")? as usize;
    let num_features = rows * cols;
    let mut pixels = vec![0u8; count * num_features];
    reader
        .read_exact(&mut pixels)
        .map_err(|_| DataError::Truncated {
            path: images_name.clone(),
            what: "pixel data",
        })?;

    let labels_name = labels_path.display().to_string();
    let mut reader = open(labels_path)?;
    let magic = read_u32_be(&mut reader, &labels_name, "labels magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_name,
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let label_count = read_u32_be(&mut reader, &labels_name, "label count")? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let mut raw_labels = vec![0u8; label_count];
    reader
        .read_exact(&mut raw_labels)
        .map_err(|_| DataError::Truncated {
            path: labels_name,
            what: "label data",
        })?;

    let inputs = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels = raw_labels.iter().map(|&l| l as usize).collect();
    Ok(Dataset::new("mnist", inputs, labels, num_features, 10))
}

/// Loads a headerless CSV dataset: each line holds `num_features` reals
/// followed by one integer class label.
pub fn load_csv_dataset(
    path: &Path,
    num_features: usize,
    num_classes: usize,
) -> Result<Dataset, DataError> {
    let name = path.display().to_string();
    let reader = open(path)?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: name.clone(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != num_features + 1 {
            return Err(DataError::MalformedRow {
                path: name.clone(),
                line: line_no,
                reason: format!(
                    "expected {} fields, found {}",
                    num_features + 1,
                    fields.len()
                ),
            });
        }
        for field in &fields[..num_features] {
            let value: f64 = field.parse().map_err(|_| DataError::MalformedRow {
                path: name.clone(),
                line: line_no,
                reason: format!("cannot parse feature value {field:?}"),
            })?;
            inputs.push(value);
        }
        let label: i64 = fields[num_features]
            .parse()
            .map_err(|_| DataError::MalformedRow {
                path: name.clone(),
                line: line_no,
                reason: format!("cannot parse label {:?}", fields[num_features]),
            })?;
        if label < 0 || label as usize >= num_classes {
            return Err(DataError::LabelOutOfRange {
                path: name.clone(),
                line: line_no,
                label,
                num_classes,
            });
        }
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(DataError::Empty { path: name });
    }
    Ok(Dataset::new(
        name,
        inputs,
        labels,
        num_features,
        num_classes,
    ))
}

fn synthetic_samples(
    centers: &[f64],
    rng: &mut SeededRng,
    samples: usize,
    num_features: usize,
    num_classes: usize,
    noise: f64,
    name: String,
) -> Dataset {
    let mut inputs = Vec::with_capacity(samples * num_features);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % num_classes;
        for f in 0..num_features {
            inputs.push(centers[class * num_features + f] + noise * rng.normal());
        }
        labels.push(class);
    }
    Dataset::new(name, inputs, labels, num_features, num_classes)
}

/// Deterministic synthetic classification data: Gaussian clusters around
/// per-class centers. Same seed, same dataset.
pub fn synthetic_classification(
    seed: u64,
    samples: usize,
    num_features: usize,
    num_classes: usize,
    noise: f64,
) -> Dataset {
    let (train, _) = synthetic_split(seed, samples, 0, num_features, num_classes, noise);
    train
}

/// Train/test splits drawn around the same class centers with independent
/// sample noise. Fully determined by the seed.
pub fn synthetic_split(
    seed: u64,
    train_samples: usize,
    test_samples: usize,
    num_features: usize,
    num_classes: usize,
    noise: f64,
) -> (Dataset, Dataset) {
    let mut center_rng = SeededRng::new(seed);
    let centers: Vec<f64> = (0..num_classes * num_features)
        .map(|_| center_rng.uniform_in(-1.0, 1.0))
        .collect();
    let name = format!("synthetic-{num_classes}c{num_features}f");
    let train = synthetic_samples(
        &centers,
        &mut center_rng.substream(1),
        train_samples,
        num_features,
        num_classes,
        noise,
        name.clone(),
    );
    let test = synthetic_samples(
        &centers,
        &mut center_rng.substream(2),
        test_samples,
        num_features,
        num_classes,
        noise,
        format!("{name}-test"),
    );
    (train, test)
}

/// Deterministic mini-batch schedule: one fresh permutation of the dataset
/// per epoch, derived from `(seed, epoch)` alone.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64) -> Self {
        assert!(batch_size >= 1, "batch size must be at least 1");
        BatchPlan { batch_size, seed }
    }

    /// Batches per epoch for a dataset of `len` samples; a trailing partial
    /// batch counts.
    pub fn batches_per_epoch(&self, len: usize) -> usize {
        len.div_ceil(self.batch_size)
    }

    /// The epoch permutation, reproducible from `(seed, epoch)`.
    pub fn permutation(&self, len: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        let mut rng = SeededRng::new(self.seed).substream(epoch as u64);
        rng.shuffle(&mut order);
        order
    }
}

/// Gathers the mini-batch for one cycle. Cycle `c` takes the
/// `(c mod batches_per_epoch)`-th slice of epoch `c div batches_per_epoch`'s
/// permutation, so every sample appears exactly once per epoch.
pub fn batches(dataset: &Dataset, plan: &BatchPlan, cycle: usize) -> MiniBatch {
    assert!(
        !dataset.is_empty(),
        "cannot draw batches from an empty dataset"
    );
    let per_epoch = plan.batches_per_epoch(dataset.len());
    let epoch = cycle / per_epoch;
    let index = cycle % per_epoch;
    let order = plan.permutation(dataset.len(), epoch);
    let start = index * plan.batch_size;
    let end = (start + plan.batch_size).min(dataset.len());
    let mut inputs = Vec::with_capacity((end - start) * dataset.num_features());
    let mut labels = Vec::with_capacity(end - start);
    for &sample in &order[start..end] {
        inputs.extend_from_slice(dataset.input(sample));
        labels.push(dataset.labels()[sample]);
    }
    MiniBatch { inputs, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) {
        let mut f = File::create(path).unwrap();
        f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(images.len() as u32).to_be_bytes()).unwrap();
        f.write_all(&(rows as u32).to_be_bytes()).unwrap();
        f.write_all(&(cols as u32).to_be_bytes()).unwrap();
        for img in images {
            f.write_all(img).unwrap();
        }
    }

    fn write_idx_labels(path: &Path, labels: &[u8]) {
        let mut f = File::create(path).unwrap();
        f.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
    }

    #[test]
    fn idx_round_trip_with_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("images");
        let labels_path = dir.path().join("labels");
        write_idx_images(
            &images_path,
            &[vec![0, 255, 128, 64], vec![10, 20, 30, 40]],
            2,
            2,
        );
        write_idx_labels(&labels_path, &[3, 7]);
        let ds = load_mnist_idx(&images_path, &labels_path).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_features(), 4);
        assert_eq!(ds.labels(), &[3, 7]);
        assert_eq!(ds.input(0)[0], 0.0);
        assert_eq!(ds.input(0)[1], 1.0);
        assert_eq!(ds.input(0)[2], 128.0 / 255.0);
        assert!(ds.inputs().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn idx_bad_magic_reports_expected_and_found() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("images");
        let labels_path = dir.path().join("labels");
        // labels magic written into the images file
        {
            let mut f = File::create(&images_path).unwrap();
            f.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
            f.write_all(&0u32.to_be_bytes()).unwrap();
        }
        write_idx_labels(&labels_path, &[]);
        let err = load_mnist_idx(&images_path, &labels_path).unwrap_err();
        match err {
            DataError::BadMagic {
                expected, found, ..
            } => {
                assert_eq!(expected, IDX_IMAGES_MAGIC);
                assert_eq!(found, IDX_LABELS_MAGIC);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn idx_count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("images");
        let labels_path = dir.path().join("labels");
        write_idx_images(&images_path, &[vec![0; 4]], 2, 2);
        write_idx_labels(&labels_path, &[1, 2]);
        let err = load_mnist_idx(&images_path, &labels_path).unwrap_err();
        assert!(matches!(
            err,
            DataError::CountMismatch {
                images: 1,
                labels: 2
            }
        ));
    }

    #[test]
    fn idx_truncated_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let images_path = dir.path().join("images");
        let labels_path = dir.path().join("labels");
        {
            let mut f = File::create(&images_path).unwrap();
            f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
            f.write_all(&5u32.to_be_bytes()).unwrap();
            f.write_all(&2u32.to_be_bytes()).unwrap();
            f.write_all(&2u32.to_be_bytes()).unwrap();
            f.write_all(&[1, 2, 3]).unwrap(); // far fewer than 5*4 bytes
        }
        write_idx_labels(&labels_path, &[0; 5]);
        let err = load_mnist_idx(&images_path, &labels_path).unwrap_err();
        assert!(matches!(err, DataError::Truncated { .. }));
    }

    #[test]
    fn csv_three_lines_forty_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let mut f = File::create(&path).unwrap();
        for label in 0..3 {
            let row: Vec<String> = (0..40).map(|i| format!("{}.5", i)).collect();
            writeln!(f, "{},{}", row.join(","), label).unwrap();
        }
        drop(f);
        let ds = load_csv_dataset(&path, 40, 10).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.num_features(), 40);
        assert_eq!(ds.input(1)[0], 0.5);
    }

    #[test]
    fn csv_empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        File::create(&path).unwrap();
        let err = load_csv_dataset(&path, 4, 2).unwrap_err();
        assert!(matches!(err, DataError::Empty { .. }));
    }

    #[test]
    fn csv_label_out_of_range_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "0.1,0.2,5").unwrap();
        drop(f);
        let err = load_csv_dataset(&path, 2, 3).unwrap_err();
        match err {
            DataError::LabelOutOfRange { line, label, .. } => {
                assert_eq!(line, 1);
                assert_eq!(label, 5);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn csv_malformed_row_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "0.1,0.2,1").unwrap();
        writeln!(f, "0.1,oops,1").unwrap();
        drop(f);
        let err = load_csv_dataset(&path, 2, 2).unwrap_err();
        match err {
            DataError::MalformedRow { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn sixty_batches_per_epoch_and_five_epochs_in_300_cycles() {
        let ds = synthetic_classification(1, 60_000, 2, 10, 0.1);
        let plan = BatchPlan::new(1000, 9);
        assert_eq!(plan.batches_per_epoch(ds.len()), 60);
        // cycle 299 is batch 59 of epoch 4
        assert_eq!(299 / plan.batches_per_epoch(ds.len()), 4);
        let b = batches(&ds, &plan, 299);
        assert_eq!(b.len(), 1000);
    }

    #[test]
    fn full_batch_mode_is_one_cycle_per_epoch() {
        let ds = synthetic_classification(2, 128, 3, 4, 0.1);
        let plan = BatchPlan::new(128, 3);
        assert_eq!(plan.batches_per_epoch(ds.len()), 1);
        let b = batches(&ds, &plan, 0);
        assert_eq!(b.len(), 128);
    }

    #[test]
    fn same_seed_same_batches() {
        let ds = synthetic_classification(3, 100, 2, 5, 0.1);
        for cycle in [0usize, 7, 23] {
            let a = batches(&ds, &BatchPlan::new(16, 42), cycle);
            let b = batches(&ds, &BatchPlan::new(16, 42), cycle);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.inputs, b.inputs);
        }
    }

    #[test]
    fn trailing_partial_batch_is_kept() {
        let ds = synthetic_classification(4, 25, 2, 5, 0.1);
        let plan = BatchPlan::new(10, 0);
        assert_eq!(plan.batches_per_epoch(25), 3);
        assert_eq!(batches(&ds, &plan, 2).len(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn one_epoch_covers_the_dataset_exactly(
            len in 1usize..200,
            batch_size in 1usize..50,
            seed in 0u64..1000,
            epoch in 0usize..4,
        ) {
            let ds = synthetic_classification(seed, len, 1, 3, 0.1);
            let plan = BatchPlan::new(batch_size, seed ^ 0xabcd);
            let per_epoch = plan.batches_per_epoch(len);
            // multiset of all first features across the epoch == dataset's
            let mut seen: Vec<u64> = Vec::new();
            for i in 0..per_epoch {
                let b = batches(&ds, &plan, epoch * per_epoch + i);
                for s in 0..b.len() {
                    seen.push(b.inputs[s].to_bits());
                }
            }
            let mut expected: Vec<u64> = (0..len).map(|s| ds.input(s)[0].to_bits()).collect();
            seen.sort_unstable();
            expected.sort_unstable();
            prop_assert_eq!(seen, expected);
        }

        #[test]
        fn permutations_are_reproducible(seed in 0u64..1000, epoch in 0usize..8) {
            let plan = BatchPlan::new(7, seed);
            prop_assert_eq!(plan.permutation(64, epoch), plan.permutation(64, epoch));
        }
    }
}
