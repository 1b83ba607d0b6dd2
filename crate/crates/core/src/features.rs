//! Multi-scale codeword-histogram features.

use crate::codebook::{video_histogram_packed, Codebook};
use crate::error::{Error, Result};
use crate::hash::{encode_packed, HashingModel};
use crate::pca::PcaBasis;
use crate::pdv::dense_pdv_chunks;

const ENCODE_CHUNK: usize = 4096;
use crate::volume::VideoVolume;

/// Hashing projection and dictionary for one neighbourhood side.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleModel {
    pub hashing: HashingModel,
    pub codebook: Codebook,
}

impl ScaleModel {
    pub fn new(hashing: HashingModel, codebook: Codebook) -> Result<Self> {
        if hashing.scale() != codebook.scale() || hashing.code_bits() != codebook.bits() {
            return Err(Error::DimensionMismatch(format!(
                "hashing (side {}, {} bits) and codebook (side {}, {} bits) disagree",
                hashing.scale(),
                hashing.code_bits(),
                codebook.scale(),
                codebook.bits()
            )));
        }
        Ok(Self { hashing, codebook })
    }

    pub fn scale(&self) -> usize {
        self.hashing.scale()
    }
}

/// Segment of a feature vector contributed by one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub scale: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Per-scale histogram boundaries before PCA.
    pub segments: Vec<Segment>,
    pub pca_applied: bool,
}

/// Packed codes of every PDV of `volume` (dense, stride 1).
pub fn encode_video(hashing: &HashingModel, volume: &VideoVolume) -> Result<Vec<u128>> {
    let mut codes = Vec::new();
    for block in dense_pdv_chunks(volume, hashing.scale(), ENCODE_CHUNK)? {
        codes.extend(encode_packed(hashing.projection(), &block)?);
    }
    Ok(codes)
}

fn check_scales(models: &[ScaleModel], volume: &VideoVolume) -> Result<()> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no scale models".into()));
    }
    if models.windows(2).any(|w| w[0].scale() >= w[1].scale()) {
        return Err(Error::InvalidArgument(
            "scale models must be in strictly ascending side order".into(),
        ));
    }
    let largest = models.last().expect("non-empty").scale();
    let (t, h, w) = volume.dims();
    if t < largest || h < largest || w < largest {
        return Err(Error::VolumeTooSmall {
            dims: volume.dims(),
            side: largest,
        });
    }
    Ok(())
}

/// Concatenated per-scale histograms, ascending side order, before PCA.
pub fn histogram_features(models: &[ScaleModel], volume: &VideoVolume) -> Result<FeatureVector> {
    check_scales(models, volume)?;
    let mut values = Vec::new();
    let mut segments = Vec::with_capacity(models.len());
    for model in models {
        let codes = encode_video(&model.hashing, volume)?;
        let hist = video_histogram_packed(&model.codebook, &codes)?;
        segments.push(Segment {
            scale: model.scale(),
            start: values.len(),
            len: hist.len(),
        });
        values.extend(hist);
    }
    Ok(FeatureVector {
        values,
        segments,
        pca_applied: false,
    })
}

/// Histogram features projected onto `pca` when given.
pub fn featurize(
    models: &[ScaleModel],
    pca: Option<&PcaBasis>,
    volume: &VideoVolume,
) -> Result<FeatureVector> {
    let raw = histogram_features(models, volume)?;
    match pca {
        None => Ok(raw),
        Some(basis) => Ok(FeatureVector {
            values: basis.project(&raw.values)?,
            segments: raw.segments,
            pca_applied: true,
        }),
    }
}
