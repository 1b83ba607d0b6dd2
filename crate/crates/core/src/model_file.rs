//! Binary model files.
//!
//! Layout: magic `LP2DH\0`, u32 version, then sections until end of file.
//! A section is a u32 name length, the UTF-8 name, a u32 rank, `rank` u32
//! dims and the f64 payload in row-major order. Text sections use rank
//! `u32::MAX` followed by a u32 byte length and UTF-8 bytes. All integers and
//! floats are little-endian.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::codebook::{Codebook, KmeansStats};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::LabeledFeatureSet;
use crate::features::ScaleModel;
use crate::hash::{HashingModel, LossTerms, TrainStats};
use crate::pca::PcaBasis;
use crate::pipeline::{derive_seed, PipelineModel, FORMAT_VERSION};

pub const MAGIC: &[u8; 6] = b"LP2DH\0";
const TEXT_RANK: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Array { dims: Vec<u32>, data: Vec<f64> },
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub payload: Payload,
}

impl Section {
    pub fn array(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        let dims = dims.into_iter().map(|d| d as u32).collect();
        Self {
            name: name.into(),
            payload: Payload::Array { dims, data },
        }
    }

    pub fn matrix(name: impl Into<String>, m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|r| m.row(r).iter().copied().collect::<Vec<_>>())
            .collect();
        Self::array(name, vec![m.nrows(), m.ncols()], data)
    }

    pub fn text(name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            payload: Payload::Text(text.into()),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_sections(version: u32, sections: &[Section]) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, version);
    for s in sections {
        put_u32(&mut out, s.name.len() as u32);
        out.extend_from_slice(s.name.as_bytes());
        match &s.payload {
            Payload::Array { dims, data } => {
                put_u32(&mut out, dims.len() as u32);
                dims.iter().for_each(|&d| put_u32(&mut out, d));
                data.iter()
                    .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
            Payload::Text(t) => {
                put_u32(&mut out, TEXT_RANK);
                put_u32(&mut out, t.len() as u32);
                out.extend_from_slice(t.as_bytes());
            }
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Format(format!(
                "model file truncated in {what} at byte {}",
                self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<String> {
        String::from_utf8(self.take(n, what)?.to_vec())
            .map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}

pub fn decode_sections(bytes: &[u8]) -> Result<(u32, Vec<Section>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(MAGIC.len(), "magic").ok() != Some(&MAGIC[..]) {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = c.u32("version")?;
    let mut sections = Vec::new();
    while c.pos < bytes.len() {
        let len = c.u32("section name length")? as usize;
        let name = c.utf8(len, "section name")?;
        let rank = c.u32("section rank")?;
        let payload = if rank == TEXT_RANK {
            let n = c.u32("text length")? as usize;
            Payload::Text(c.utf8(n, &name)?)
        } else {
            let dims = (0..rank)
                .map(|_| c.u32("dims"))
                .collect::<Result<Vec<_>>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
            let count =
                count.ok_or_else(|| Error::Format(format!("section {name} is too large")))?;
            let raw = c.take(count.checked_mul(8).unwrap_or(usize::MAX), &name)?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            Payload::Array { dims, data }
        };
        sections.push(Section { name, payload });
    }
    Ok((version, sections))
}

struct Sections(Vec<Section>);

impl Sections {
    fn get(&self, name: &str) -> Result<&Payload> {
        self.0
            .iter()
            .find(|s| s.name == name)
            .map(|s| &s.payload)
            .ok_or_else(|| Error::Model(format!("missing section {name}")))
    }

    fn has(&self, name: &str) -> bool {
        self.0.iter().any(|s| s.name == name)
    }

    fn text(&self, name: &str) -> Result<&str> {
        match self.get(name)? {
            Payload::Text(t) => Ok(t),
            _ => Err(Error::Model(format!("section {name} should be text"))),
        }
    }

    fn array(&self, name: &str, rank: usize) -> Result<(&[u32], &[f64])> {
        match self.get(name)? {
            Payload::Array { dims, data } if dims.len() == rank => Ok((dims, data)),
            _ => Err(Error::Model(format!(
                "section {name} should be a rank-{rank} array"
            ))),
        }
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let (dims, data) = self.array(name, 2)?;
        Ok(DMatrix::from_row_slice(
            dims[0] as usize,
            dims[1] as usize,
            data,
        ))
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.array(name, 1)?.1.to_vec())
    }
}

fn lines(t: &str) -> Vec<String> {
    if t.is_empty() {
        Vec::new()
    } else {
        t.split('\n').map(str::to_owned).collect()
    }
}

fn hash_stats_vector(s: &TrainStats) -> Vec<f64> {
    let l = &s.final_loss;
    vec![
        s.outer_iterations as f64,
        s.accepted_steps as f64,
        s.initial_grad_norm,
        s.grad_norm,
        f64::from(u8::from(s.converged)),
        f64::from(u8::from(s.rank_deficient)),
        s.max_orthogonality_residual,
        s.monotonicity_violations as f64,
        l.l1,
        l.l2,
        l.l3,
        l.l4,
        l.total,
    ]
}

fn hash_stats_from(v: &[f64]) -> Result<TrainStats> {
    if v.len() != 13 {
        return Err(Error::Model(format!(
            "hash stats have {} entries, expected 13",
            v.len()
        )));
    }
    Ok(TrainStats {
        outer_iterations: v[0] as usize,
        accepted_steps: v[1] as usize,
        initial_grad_norm: v[2],
        grad_norm: v[3],
        converged: v[4] != 0.0,
        rank_deficient: v[5] != 0.0,
        max_orthogonality_residual: v[6],
        monotonicity_violations: v[7] as usize,
        final_loss: LossTerms {
            l1: v[8],
            l2: v[9],
            l3: v[10],
            l4: v[11],
            total: v[12],
        },
        phase_objectives: Vec::new(),
    })
}

/// Section list of `model`. Per-phase objective traces and k-means inertia
/// histories are not persisted.
pub fn model_sections(model: &PipelineModel) -> Vec<Section> {
    let mut out = vec![Section::text("config", model.config.to_config_string())];
    for m in &model.scales {
        let p = m.scale();
        out.push(Section::matrix(
            format!("hash.P{p}.w"),
            m.hashing.projection(),
        ));
        out.push(Section::array(
            format!("hash.P{p}.stats"),
            vec![13],
            hash_stats_vector(m.hashing.stats()),
        ));
        let cb = &m.codebook;
        out.push(Section::array(
            format!("codebook.P{p}.centroids"),
            vec![cb.len(), cb.bits()],
            cb.centroids().to_vec(),
        ));
        let st = cb.stats();
        out.push(Section::array(
            format!("codebook.P{p}.stats"),
            vec![3],
            vec![
                st.requested_codewords as f64,
                st.inertia,
                st.iterations as f64,
            ],
        ));
    }
    if let Some(pca) = &model.pca {
        out.push(Section::array(
            "pca.mean",
            vec![pca.input_dim()],
            pca.mean().as_slice().to_vec(),
        ));
        out.push(Section::matrix("pca.components", pca.components()));
        out.push(Section::array(
            "pca.explained",
            vec![pca.retained_dim()],
            pca.explained_variance_ratio().to_vec(),
        ));
        if let Some(w) = pca.warning() {
            out.push(Section::text("pca.warning", w));
        }
    }
    let t = &model.train;
    let width = t.features.first().map_or(0, Vec::len);
    out.push(Section::array(
        "train.features",
        vec![t.len(), width],
        t.features.concat(),
    ));
    out.push(Section::text("train.labels", t.labels.join("\n")));
    out.push(Section::text("train.video_ids", t.video_ids.join("\n")));
    out
}

pub fn model_from_sections(version: u32, sections: Vec<Section>) -> Result<PipelineModel> {
    if version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let s = Sections(sections);
    let config = PipelineConfig::parse(s.text("config")?)?;
    let mut scales = Vec::with_capacity(config.scales.len());
    for (i, &p) in config.scales.iter().enumerate() {
        let mut hc = config.hash_config(i);
        hc.seed = derive_seed(config.seed, &[p as u64]);
        let stats = hash_stats_from(&s.vector(&format!("hash.P{p}.stats"))?)?;
        let hashing = HashingModel::from_parts(s.matrix(&format!("hash.P{p}.w"))?, p, hc, stats)?;
        let (dims, centroids) = s.array(&format!("codebook.P{p}.centroids"), 2)?;
        if dims[1] as usize != hashing.code_bits() {
            return Err(Error::Model(format!(
                "P={p} codebook width {} differs from {} bits",
                dims[1],
                hashing.code_bits()
            )));
        }
        let st = s.vector(&format!("codebook.P{p}.stats"))?;
        if st.len() != 3 {
            return Err(Error::Model(format!("P={p} codebook stats malformed")));
        }
        let kstats = KmeansStats {
            requested_codewords: st[0] as usize,
            inertia: st[1],
            iterations: st[2] as usize,
            inertia_history: Vec::new(),
        };
        let codebook =
            Codebook::from_centroids(hashing.code_bits(), p, centroids.to_vec(), kstats)?;
        scales.push(ScaleModel::new(hashing, codebook)?);
    }
    let pca = if s.has("pca.mean") {
        let mut basis = PcaBasis::from_parts(
            DVector::from_vec(s.vector("pca.mean")?),
            s.matrix("pca.components")?,
            s.vector("pca.explained")?,
        )?;
        if s.has("pca.warning") {
            basis = basis.with_warning(s.text("pca.warning")?.to_owned());
        }
        Some(basis)
    } else {
        None
    };
    let (dims, data) = s.array("train.features", 2)?;
    let width = dims[1] as usize;
    let features = (0..dims[0] as usize)
        .map(|r| data[r * width..(r + 1) * width].to_vec())
        .collect();
    let train = LabeledFeatureSet::new(
        features,
        lines(s.text("train.labels")?),
        lines(s.text("train.video_ids")?),
    )?;
    let model = PipelineModel {
        config,
        scales,
        pca,
        train,
        format_version: version,
    };
    model.validate()?;
    Ok(model)
}

pub fn encode_model(model: &PipelineModel) -> Vec<u8> {
    encode_sections(model.format_version, &model_sections(model))
}

pub fn decode_model(bytes: &[u8]) -> Result<PipelineModel> {
    let (version, sections) = decode_sections(bytes)?;
    model_from_sections(version, sections)
}

pub fn save_model(model: &PipelineModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<PipelineModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
