//! Cosine nearest-neighbour classification, evaluation protocols and reports.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{derive_seed, train_pipeline};

pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine distance of a zero vector".into(),
        ));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((1.0 - dot / (nu * nv)).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledFeatureSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub video_ids: Vec<String>,
}

impl LabeledFeatureSet {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<String>,
        video_ids: Vec<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() || labels.len() != video_ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} features, {} labels, {} ids",
                features.len(),
                labels.len(),
                video_ids.len()
            )));
        }
        if let Some(f) = features.first() {
            if features.iter().any(|g| g.len() != f.len()) {
                return Err(Error::DimensionMismatch(
                    "training features differ in width".into(),
                ));
            }
        }
        Ok(Self {
            features,
            labels,
            video_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Index of the training feature nearest to `query`; ties go to the
    /// smaller index.
    pub fn nearest(&self, query: &[f64]) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let mut best = (0, f64::INFINITY);
        for (i, f) in self.features.iter().enumerate() {
            let d = cosine_distance(f, query)?;
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn classify(&self, query: &[f64]) -> Result<&str> {
        Ok(&self.labels[self.nearest(query)?])
    }
}

pub fn nn_classify<'a>(train: &'a LabeledFeatureSet, query: &[f64]) -> Result<&'a str> {
    train.classify(query)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    KFold(usize),
    RandomSplit { train_fraction: f64, trials: usize },
    LeaveOneOut,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::KFold(k) => write!(f, "kfold:{k}"),
            Protocol::RandomSplit {
                train_fraction,
                trials,
            } => write!(f, "split:{train_fraction},{trials}"),
            Protocol::LeaveOneOut => write!(f, "loo"),
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Protocol(format!(
                "unrecognised protocol {s:?}; use kfold:K, split:FRACTION,TRIALS or loo"
            ))
        };
        if s == "loo" {
            return Ok(Protocol::LeaveOneOut);
        }
        if let Some(k) = s.strip_prefix("kfold:") {
            let k: usize = k.parse().map_err(|_| bad())?;
            if k < 2 {
                return Err(Error::Protocol(format!("kfold needs k >= 2, got {k}")));
            }
            return Ok(Protocol::KFold(k));
        }
        if let Some(rest) = s.strip_prefix("split:") {
            let (frac, trials) = rest.split_once(',').ok_or_else(bad)?;
            let train_fraction: f64 = frac.parse().map_err(|_| bad())?;
            let trials: usize = trials.parse().map_err(|_| bad())?;
            if !(train_fraction > 0.0 && train_fraction < 1.0) || trials == 0 {
                return Err(Error::Protocol(format!(
                    "split needs a fraction in (0, 1) and >= 1 trial, got {rest}"
                )));
            }
            return Ok(Protocol::RandomSplit {
                train_fraction,
                trials,
            });
        }
        Err(bad())
    }
}

/// Dataset indices of one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn check_classes(
    dataset: &Dataset,
    min_per_class: usize,
    what: &str,
) -> Result<BTreeMap<String, Vec<usize>>> {
    let groups = dataset.by_class();
    if groups.len() < 2 {
        return Err(Error::Protocol(format!(
            "{what} needs >= 2 classes, dataset has {}",
            groups.len()
        )));
    }
    let short: Vec<String> = groups
        .iter()
        .filter(|(_, v)| v.len() < min_per_class)
        .map(|(c, v)| format!("{c} ({})", v.len()))
        .collect();
    if !short.is_empty() {
        return Err(Error::Protocol(format!(
            "{what} needs >= {min_per_class} videos per class; short: {}",
            short.join(", ")
        )));
    }
    Ok(groups)
}

fn assemble(n: usize, test_sets: Vec<Vec<usize>>) -> Vec<Fold> {
    test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let held: HashSet<usize> = test.iter().copied().collect();
            Fold {
                train: (0..n).filter(|i| !held.contains(i)).collect(),
                test,
            }
        })
        .collect()
}

/// Within each class, videos sorted by id go to fold `i mod k`, unless
/// `grouping` assigns folds by video id.
pub fn kfold_folds(
    dataset: &Dataset,
    k: usize,
    grouping: Option<&BTreeMap<String, usize>>,
) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Protocol(format!("kfold needs k >= 2, got {k}")));
    }
    let groups = check_classes(dataset, k, "kfold")?;
    let mut tests = vec![Vec::new(); k];
    for members in groups.values() {
        for (rank, &i) in members.iter().enumerate() {
            let fold = match grouping {
                None => rank % k,
                Some(map) => {
                    let id = &dataset.videos()[i].id;
                    let f = *map
                        .get(id)
                        .ok_or_else(|| Error::Protocol(format!("video {id:?} has no fold")))?;
                    if f >= k {
                        return Err(Error::Protocol(format!(
                            "video {id:?} assigned to fold {f} of {k}"
                        )));
                    }
                    f
                }
            };
            tests[fold].push(i);
        }
    }
    if let Some(empty) = tests.iter().position(Vec::is_empty) {
        return Err(Error::Protocol(format!("fold {empty} has no test videos")));
    }
    Ok(assemble(dataset.len(), tests))
}

/// Stratified seeded splits: per class, `round(n·fraction)` videos (at least
/// one, leaving at least one) train and the rest test.
pub fn random_split_folds(
    dataset: &Dataset,
    train_fraction: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<Fold>> {
    let groups = check_classes(dataset, 2, "random split")?;
    let mut folds = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[trial as u64]));
        let mut test = Vec::new();
        for members in groups.values() {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            let n_train = ((members.len() as f64 * train_fraction).round() as usize)
                .clamp(1, members.len() - 1);
            test.extend_from_slice(&shuffled[n_train..]);
        }
        folds.extend(assemble(dataset.len(), vec![test]));
    }
    Ok(folds)
}

/// One fold per video of the smallest class; each class is shuffled once and
/// fold `f` holds out its `f`-th video.
pub fn leave_one_out_folds(dataset: &Dataset, seed: u64) -> Result<Vec<Fold>> {
    let groups = check_classes(dataset, 2, "leave-one-out")?;
    let folds = groups.values().map(Vec::len).min().expect("classes exist");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests = vec![Vec::new(); folds];
    for members in groups.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (f, test) in tests.iter_mut().enumerate() {
            test.push(shuffled[f]);
        }
    }
    Ok(assemble(dataset.len(), tests))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub protocol: String,
    pub seed: u64,
    /// Sorted class labels indexing `confusion`.
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`, summed over folds.
    pub confusion: Vec<Vec<usize>>,
    pub per_trial: Vec<f64>,
    /// trace(confusion) / total.
    pub accuracy: f64,
    pub mean: f64,
    /// Sample standard deviation of `per_trial` (0 for one trial).
    pub std: f64,
}

/// Trains the full pipeline on each fold's training videos and classifies
/// its test videos.
pub fn run_folds(
    dataset: &Dataset,
    folds: &[Fold],
    config: &PipelineConfig,
    protocol: &str,
    seed: u64,
) -> Result<EvalReport> {
    let classes = dataset.classes();
    let class_index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    let mut per_trial = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let train_ids: HashSet<&str> = fold
            .train
            .iter()
            .map(|&i| dataset.videos()[i].id.as_str())
            .collect();
        if let Some(&leak) = fold
            .test
            .iter()
            .find(|&&i| train_ids.contains(dataset.videos()[i].id.as_str()))
        {
            return Err(Error::Protocol(format!(
                "fold {f}: video {:?} in both train and test",
                dataset.videos()[leak].id
            )));
        }
        if fold.test.is_empty() {
            return Err(Error::Protocol(format!("fold {f} has no test videos")));
        }
        let (model, _) = train_pipeline(&dataset.subset(&fold.train), config)?;
        let mut correct = 0;
        for video in dataset.subset(&fold.test) {
            let predicted = model.classify(&video.volume)?;
            let (t, p) = (class_index[video.label.as_str()], class_index[predicted]);
            confusion[t][p] += 1;
            correct += usize::from(t == p);
        }
        let acc = correct as f64 / fold.test.len() as f64;
        info!("fold {}/{}: accuracy {acc:.4}", f + 1, folds.len());
        per_trial.push(acc);
    }
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..classes.len()).map(|i| confusion[i][i]).sum();
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / n;
    let std = if per_trial.len() > 1 {
        (per_trial.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(EvalReport {
        protocol: protocol.to_owned(),
        seed,
        classes,
        confusion,
        per_trial,
        accuracy: trace as f64 / total as f64,
        mean,
        std,
    })
}

pub fn protocol_kfold(
    dataset: &Dataset,
    k: usize,
    grouping: Option<&BTreeMap<String, usize>>,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let folds = kfold_folds(dataset, k, grouping)?;
    run_folds(
        dataset,
        &folds,
        config,
        &Protocol::KFold(k).to_string(),
        config.seed,
    )
}

pub fn protocol_random_split(
    dataset: &Dataset,
    train_fraction: f64,
    trials: usize,
    seed: u64,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let folds = random_split_folds(dataset, train_fraction, trials, seed)?;
    run_folds(
        dataset,
        &folds,
        config,
        &Protocol::RandomSplit {
            train_fraction,
            trials,
        }
        .to_string(),
        seed,
    )
}

pub fn protocol_leave_one_out(
    dataset: &Dataset,
    seed: u64,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    let folds = leave_one_out_folds(dataset, seed)?;
    run_folds(
        dataset,
        &folds,
        config,
        &Protocol::LeaveOneOut.to_string(),
        seed,
    )
}

/// Runs `protocol`, splitting with `config.seed`.
pub fn evaluate(
    dataset: &Dataset,
    protocol: Protocol,
    config: &PipelineConfig,
) -> Result<EvalReport> {
    match protocol {
        Protocol::KFold(k) => protocol_kfold(dataset, k, None, config),
        Protocol::RandomSplit {
            train_fraction,
            trials,
        } => protocol_random_split(dataset, train_fraction, trials, config.seed, config),
        Protocol::LeaveOneOut => protocol_leave_one_out(dataset, config.seed, config),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `accuracy.csv`, `confusion.csv` and `report.txt` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut acc = csv::Writer::from_writer(Vec::new());
    acc.write_record(["trial", "accuracy"])?;
    for (i, a) in report.per_trial.iter().enumerate() {
        acc.write_record([(i + 1).to_string(), format!("{a:.6}")])?;
    }
    acc.write_record(["mean".to_string(), format!("{:.6}", report.mean)])?;
    acc.write_record(["std".to_string(), format!("{:.6}", report.std)])?;
    write_file(
        &dir.join("accuracy.csv"),
        &acc.into_inner().map_err(|e| Error::Format(e.to_string()))?,
    )?;

    let mut conf = csv::Writer::from_writer(Vec::new());
    conf.write_record(
        std::iter::once("true\\predicted").chain(report.classes.iter().map(String::as_str)),
    )?;
    for (class, row) in report.classes.iter().zip(&report.confusion) {
        conf.write_record(std::iter::once(class.clone()).chain(row.iter().map(usize::to_string)))?;
    }
    write_file(
        &dir.join("confusion.csv"),
        &conf
            .into_inner()
            .map_err(|e| Error::Format(e.to_string()))?,
    )?;

    let mut text = String::new();
    let total: usize = report.confusion.iter().flatten().sum();
    let _ = writeln!(text, "protocol: {}", report.protocol);
    let _ = writeln!(text, "seed: {}", report.seed);
    let _ = writeln!(text, "trials: {}", report.per_trial.len());
    let _ = writeln!(text, "test videos: {total}");
    let _ = writeln!(text, "accuracy: {:.6}", report.accuracy);
    let _ = writeln!(
        text,
        "mean trial accuracy: {:.6} +/- {:.6}",
        report.mean, report.std
    );
    let _ = writeln!(text, "\nper-class accuracy:");
    let width = report.classes.iter().map(String::len).max().unwrap_or(0);
    for (i, (class, row)) in report.classes.iter().zip(&report.confusion).enumerate() {
        let n: usize = row.iter().sum();
        let a = if n == 0 {
            0.0
        } else {
            row[i] as f64 / n as f64
        };
        let _ = writeln!(text, "  {class:<width$}  {a:.6}  ({}/{n})", row[i]);
    }
    write_file(&dir.join("report.txt"), text.as_bytes())
}

/// Per-trial accuracies from an `accuracy.csv` written by [`write_report`].
pub fn parse_accuracy_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record[0].parse::<usize>().is_ok() {
            out.push(
                record[1]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad accuracy {:?}", &record[1])))?,
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledVideo;
    use crate::volume::VideoVolume;
    use proptest::prelude::*;

    #[test]
    fn cosine_reference_values() {
        let u = [1.0, 2.0, -0.5];
        assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&u, &[-1.0, -2.0, 0.5]).unwrap() - 2.0).abs() < 1e-15);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    fn set(features: Vec<Vec<f64>>, labels: &[&str]) -> LabeledFeatureSet {
        let ids = (0..labels.len()).map(|i| i.to_string()).collect();
        LabeledFeatureSet::new(
            features,
            labels.iter().map(|s| s.to_string()).collect(),
            ids,
        )
        .unwrap()
    }

    #[test]
    fn nn_basics() {
        let one = set(vec![vec![1.0, 0.0]], &["a"]);
        assert_eq!(nn_classify(&one, &[0.0, 5.0]).unwrap(), "a");
        let two = set(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 0.0]],
            &["a", "b", "c"],
        );
        assert_eq!(nn_classify(&two, &[0.0, 1.0]).unwrap(), "b");
        assert_eq!(nn_classify(&two, &[0.0, 7.5]).unwrap(), "b");
        // [1,0] and [2,0] are both at distance 0
        assert_eq!(nn_classify(&two, &[3.0, 0.0]).unwrap(), "a");
        assert!(nn_classify(&LabeledFeatureSet::default(), &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn positive_rescaling_keeps_decisions(
            rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 2..8),
            query in proptest::collection::vec(0.01f64..1.0, 4),
            alpha in 0.01f64..100.0,
        ) {
            let labels: Vec<String> = (0..rows.len()).map(|i| format!("c{i}")).collect();
            let ids = labels.clone();
            let base = LabeledFeatureSet::new(rows.clone(), labels.clone(), ids.clone()).unwrap();
            let scaled_rows = rows.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect();
            let scaled = LabeledFeatureSet::new(scaled_rows, labels, ids).unwrap();
            let q2: Vec<f64> = query.iter().map(|v| v * alpha).collect();
            let d0: Vec<f64> = rows.iter().map(|r| cosine_distance(r, &query).unwrap()).collect();
            let mut sorted = d0.clone();
            sorted.sort_by(f64::total_cmp);
            // skip near-ties where rounding may flip the winner
            prop_assume!(sorted[1] - sorted[0] > 1e-12);
            prop_assert_eq!(base.nearest(&query).unwrap(), scaled.nearest(&q2).unwrap());
        }
    }

    fn layout(classes: usize, per_class: usize) -> Dataset {
        let vol = VideoVolume::from_fn(1, 1, 1, |_, _, _| 0.0).unwrap();
        let mut videos = Vec::new();
        for c in 0..classes {
            for v in 0..per_class {
                videos.push(LabeledVideo {
                    id: format!("c{c}/v{v:02}"),
                    label: format!("c{c}"),
                    volume: vol.clone(),
                });
            }
        }
        Dataset::new(videos).unwrap()
    }

    fn assert_partition(ds: &Dataset, folds: &[Fold]) {
        for f in folds {
            let mut all: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn kfold_holds_out_one_video_per_class() {
        let ds = layout(3, 4);
        let folds = kfold_folds(&ds, 4, None).unwrap();
        assert_eq!(folds.len(), 4);
        assert_partition(&ds, &folds);
        for f in &folds {
            let labels: Vec<&str> = f
                .test
                .iter()
                .map(|&i| ds.videos()[i].label.as_str())
                .collect();
            assert_eq!(labels, ["c0", "c1", "c2"]);
        }
        let mut held: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        held.sort_unstable();
        assert_eq!(held, (0..12).collect::<Vec<_>>());
        assert!(kfold_folds(&layout(2, 3), 4, None)
            .unwrap_err()
            .to_string()
            .contains("c0 (3)"));
    }

    #[test]
    fn kfold_grouping_map() {
        let ds = layout(2, 2);
        let map: BTreeMap<String, usize> =
            [("c0/v00", 1), ("c0/v01", 0), ("c1/v00", 0), ("c1/v01", 1)]
                .map(|(k, v)| (k.to_string(), v))
                .into();
        let folds = kfold_folds(&ds, 2, Some(&map)).unwrap();
        assert_eq!(folds[0].test, vec![1, 2]);
        let mut partial = map.clone();
        partial.remove("c1/v01");
        assert!(kfold_folds(&ds, 2, Some(&partial)).is_err());
    }

    #[test]
    fn random_split_is_stratified_and_seeded() {
        let ds = layout(3, 10);
        let a = random_split_folds(&ds, 0.5, 5, 7).unwrap();
        assert_eq!(a, random_split_folds(&ds, 0.5, 5, 7).unwrap());
        assert_ne!(a, random_split_folds(&ds, 0.5, 5, 8).unwrap());
        assert_eq!(a.len(), 5);
        assert_partition(&ds, &a);
        for f in &a {
            for c in 0..3 {
                let n = f
                    .test
                    .iter()
                    .filter(|&&i| ds.videos()[i].label == format!("c{c}"))
                    .count();
                assert_eq!(n, 5);
            }
        }
        assert!(random_split_folds(&layout(2, 1), 0.5, 1, 0).is_err());
    }

    #[test]
    fn leave_one_out_fold_counts() {
        let ds = layout(14, 30);
        let folds = leave_one_out_folds(&ds, 3).unwrap();
        assert_eq!(folds.len(), 30);
        assert!(folds.iter().all(|f| f.test.len() == 14));
        assert_partition(&ds, &folds);
        let folds = leave_one_out_folds(&layout(2, 2), 0).unwrap();
        assert_eq!(folds.len(), 2);
        assert!(folds.iter().all(|f| f.test.len() == 2));
        assert!(leave_one_out_folds(&layout(2, 1), 0).is_err());
    }

    #[test]
    fn protocol_strings_round_trip() {
        for s in ["kfold:4", "split:0.5,5", "loo"] {
            assert_eq!(s.parse::<Protocol>().unwrap().to_string(), s);
        }
        for s in ["kfold:1", "split:1.5,2", "split:0.5", "holdout", "kfold:x"] {
            assert!(s.parse::<Protocol>().is_err(), "{s}");
        }
    }

    fn sample_report() -> EvalReport {
        EvalReport {
            protocol: "loo".into(),
            seed: 1,
            classes: vec!["a".into(), "b".into()],
            confusion: vec![vec![3, 0], vec![0, 3]],
            per_trial: vec![1.0, 0.123456, 2.0 / 3.0],
            accuracy: 1.0,
            mean: 0.6,
            std: 0.1,
        }
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        write_report(&report, dir.path()).unwrap();
        let parsed = parse_accuracy_csv(&dir.path().join("accuracy.csv")).unwrap();
        assert_eq!(parsed, vec![1.0, 0.123456, 0.666667]);
        let conf = std::fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
        assert_eq!(conf, "true\\predicted,a,b\na,3,0\nb,0,3\n");
        let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(text.contains("accuracy: 1.000000"));
    }

    #[test]
    fn nine_class_confusion_shape() {
        let dir = tempfile::tempdir().unwrap();
        let classes: Vec<String> = (0..9).map(|i| format!("k{i}")).collect();
        let report = EvalReport {
            confusion: (0..9)
                .map(|i| (0..9).map(|j| usize::from(i == j)).collect())
                .collect(),
            classes,
            ..sample_report()
        };
        write_report(&report, dir.path()).unwrap();
        let mut reader = csv::Reader::from_path(dir.path().join("confusion.csv")).unwrap();
        assert_eq!(reader.headers().unwrap().len(), 10);
        let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 9);
        assert!(rows
            .iter()
            .all(|r| r.iter().skip(1).all(|c| c.parse::<usize>().is_ok())));
    }
}
