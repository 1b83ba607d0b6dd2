//! End-to-end training: PDV sampling, LLE affinities, hashing, codebooks,
//! histograms and PCA, plus featurization with a trained model.

use std::time::{Duration, Instant};

use log::info;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codebook::{fit_codebook_packed, video_histogram_packed};
use crate::config::PipelineConfig;
use crate::corpus::LabeledVideo;
use crate::error::{Error, Result};
use crate::eval::LabeledFeatureSet;
use crate::features::{encode_video, featurize, histogram_features, FeatureVector, ScaleModel};
use crate::hash::{train_hashing, TrainStats};
use crate::lle::affinity;
use crate::pca::{fit_pca, PcaBasis};
use crate::pdv::{extract_pdvs, PdvMatrix, Stride};
use crate::volume::VideoVolume;

pub const FORMAT_VERSION: u32 = 1;

/// Mixes `tags` into `base` (splitmix64 finalizer per tag).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(base, |acc, &t| {
        let mut z = acc
            ^ t.wrapping_add(0x9e37_79b9_7f4a_7c15)
                .wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub config: PipelineConfig,
    pub scales: Vec<ScaleModel>,
    pub pca: Option<PcaBasis>,
    /// Training features after PCA, for nearest-neighbour classification.
    pub train: LabeledFeatureSet,
    pub format_version: u32,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub timings: Vec<(String, Duration)>,
    /// `(side, stats)` per scale.
    pub hash_stats: Vec<(usize, TrainStats)>,
}

impl TrainReport {
    fn time<T>(&mut self, stage: String, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        let elapsed = start.elapsed();
        info!("{stage}: {:.3} s", elapsed.as_secs_f64());
        self.timings.push((stage, elapsed));
        Ok(out)
    }
}

/// Pools at most `cap` PDVs over `volumes`: an even per-video quota, then a
/// seeded trim of the concatenation.
pub fn sample_training_pdvs(
    volumes: &[&VideoVolume],
    side: usize,
    cap: usize,
    seed: u64,
) -> Result<PdvMatrix> {
    let quota = cap.div_ceil(volumes.len().max(1));
    let parts = volumes
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            extract_pdvs(
                v,
                side,
                Stride::DENSE,
                Some(quota),
                derive_seed(seed, &[i as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = PdvMatrix::concat(&parts)?;
    if pooled.count() <= cap {
        return Ok(pooled);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[u64::MAX]));
    let mut keep = rand::seq::index::sample(&mut rng, pooled.count(), cap).into_vec();
    keep.sort_unstable();
    PdvMatrix::from_matrix(side, pooled.matrix().select_columns(&keep))
}

fn sample_codes(per_video: &[Vec<u128>], cap: usize, seed: u64) -> Vec<u128> {
    let total: usize = per_video.iter().map(Vec::len).sum();
    let flat = per_video.iter().flatten().copied();
    if total <= cap {
        return flat.collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, total, cap).into_vec();
    keep.sort_unstable();
    let all: Vec<u128> = flat.collect();
    keep.into_iter().map(|i| all[i]).collect()
}

/// Trains every stage on `videos` only.
pub fn train_pipeline(
    videos: &[&LabeledVideo],
    config: &PipelineConfig,
) -> Result<(PipelineModel, TrainReport)> {
    config.validate()?;
    let mut classes: Vec<&str> = videos.iter().map(|v| v.label.as_str()).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training needs >= 2 classes, got {}",
            classes.len()
        )));
    }
    let volumes: Vec<&VideoVolume> = videos.iter().map(|v| &v.volume).collect();
    let largest = *config.scales.last().expect("validated");
    for v in videos {
        let (t, h, w) = v.volume.dims();
        if t < largest || h < largest || w < largest {
            return Err(Error::VolumeTooSmall {
                dims: v.volume.dims(),
                side: largest,
            });
        }
    }

    let mut report = TrainReport::default();
    let mut scales = Vec::with_capacity(config.scales.len());
    let mut histograms: Vec<Vec<f64>> = vec![Vec::new(); videos.len()];
    for (s, &side) in config.scales.iter().enumerate() {
        let seed = derive_seed(config.seed, &[side as u64]);
        let x = report.time(format!("P={side} extract"), || {
            sample_training_pdvs(&volumes, side, config.max_train_pdvs, seed)
        })?;
        let (_, a) = report.time(format!("P={side} lle"), || {
            affinity(x.matrix(), config.lle_neighbors)
        })?;
        let mut hash_config = config.hash_config(s);
        hash_config.seed = seed;
        let hashing = report.time(format!("P={side} hashing"), || {
            train_hashing(&x, &a, &hash_config)
        })?;
        drop((x, a));
        report.hash_stats.push((side, hashing.stats().clone()));

        let codes = report.time(format!("P={side} encode"), || {
            volumes
                .par_iter()
                .map(|v| encode_video(&hashing, v))
                .collect::<Result<Vec<_>>>()
        })?;
        let codebook = report.time(format!("P={side} codebook"), || {
            let pool = sample_codes(
                &codes,
                config.codebook_sample_cap(),
                derive_seed(seed, &[1]),
            );
            fit_codebook_packed(
                &pool,
                hashing.code_bits(),
                side,
                config.codebook_size,
                derive_seed(seed, &[2]),
            )
        })?;
        report.time(format!("P={side} histograms"), || {
            let hists = codes
                .par_iter()
                .map(|c| video_histogram_packed(&codebook, c))
                .collect::<Result<Vec<_>>>()?;
            for (acc, h) in histograms.iter_mut().zip(hists) {
                acc.extend(h);
            }
            Ok(())
        })?;
        scales.push(ScaleModel::new(hashing, codebook)?);
    }

    let pca = match config.pca.target() {
        None => None,
        Some(target) => Some(report.time("pca".into(), || {
            let width = histograms[0].len();
            let m = DMatrix::from_fn(histograms.len(), width, |r, c| histograms[r][c]);
            let basis = fit_pca(&m, target)?;
            if let Some(w) = basis.warning() {
                log::warn!("pca: {w}");
            }
            Ok(basis)
        })?),
    };
    let features = match &pca {
        None => histograms,
        Some(basis) => histograms
            .iter()
            .map(|h| basis.project(h))
            .collect::<Result<_>>()?,
    };
    let train = LabeledFeatureSet::new(
        features,
        videos.iter().map(|v| v.label.clone()).collect(),
        videos.iter().map(|v| v.id.clone()).collect(),
    )?;
    let model = PipelineModel {
        config: config.clone(),
        scales,
        pca,
        train,
        format_version: FORMAT_VERSION,
    };
    Ok((model, report))
}

impl PipelineModel {
    pub fn validate(&self) -> Result<()> {
        let sides: Vec<usize> = self.scales.iter().map(ScaleModel::scale).collect();
        if sides != self.config.scales {
            return Err(Error::Model(format!(
                "model scales {sides:?} differ from config {:?}",
                self.config.scales
            )));
        }
        for (m, &bits) in self.scales.iter().zip(&self.config.code_bits) {
            if m.hashing.code_bits() != bits {
                return Err(Error::Model(format!(
                    "P={} has {} bits, config says {bits}",
                    m.scale(),
                    m.hashing.code_bits()
                )));
            }
        }
        let raw: usize = self.scales.iter().map(|m| m.codebook.len()).sum();
        let width = self.pca.as_ref().map_or(raw, |p| {
            if p.input_dim() == raw {
                p.retained_dim()
            } else {
                usize::MAX
            }
        });
        if width == usize::MAX {
            return Err(Error::Model(format!(
                "PCA input width differs from histogram width {raw}"
            )));
        }
        if self.train.features.iter().any(|f| f.len() != width) {
            return Err(Error::Model(format!(
                "training features do not have width {width}"
            )));
        }
        Ok(())
    }

    /// Final (post-PCA when enabled) feature vector.
    pub fn featurize(&self, volume: &VideoVolume) -> Result<FeatureVector> {
        featurize(&self.scales, self.pca.as_ref(), volume)
    }

    /// Concatenated histograms before PCA.
    pub fn histograms(&self, volume: &VideoVolume) -> Result<FeatureVector> {
        histogram_features(&self.scales, volume)
    }

    pub fn classify(&self, volume: &VideoVolume) -> Result<&str> {
        let f = self.featurize(volume)?;
        self.train.classify(&f.values)
    }
}
