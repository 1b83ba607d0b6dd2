//! Pipeline hyperparameters and their flat `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hash::HashConfig;
use crate::pca::PcaTarget;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaSetting {
    Off,
    Energy(f64),
    Dim(usize),
}

impl PcaSetting {
    pub fn target(&self) -> Option<PcaTarget> {
        match *self {
            PcaSetting::Off => None,
            PcaSetting::Energy(e) => Some(PcaTarget::Energy(e)),
            PcaSetting::Dim(d) => Some(PcaTarget::Dim(d)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Odd neighbourhood sides, ascending.
    pub scales: Vec<usize>,
    /// Code length per scale, aligned with `scales`.
    pub code_bits: Vec<usize>,
    pub codebook_size: usize,
    pub lle_neighbors: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub theta_rel: f64,
    pub max_outer: usize,
    pub inner_steps: usize,
    /// Cap on pooled training PDVs per scale.
    pub max_train_pdvs: usize,
    /// Cap on pooled codes for k-means; defaults to `max_train_pdvs`.
    pub max_codebook_codes: Option<usize>,
    pub pca: PcaSetting,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scales: vec![3, 5],
            code_bits: vec![16, 40],
            codebook_size: 3000,
            lle_neighbors: 10,
            lambda1: 10.0,
            lambda2: 1.0,
            lambda3: 1000.0,
            theta_rel: 1e-4,
            max_outer: 100,
            inner_steps: 10,
            max_train_pdvs: 100_000,
            max_codebook_codes: None,
            pca: PcaSetting::Energy(0.99),
            seed: 42,
        }
    }
}

/// Code length used when none is configured for a side.
pub fn default_code_bits(side: usize) -> Option<usize> {
    match side {
        3 => Some(16),
        5 => Some(40),
        _ => None,
    }
}

fn parse_list(value: &str) -> Option<Vec<usize>> {
    value.split(',').map(|s| s.trim().parse().ok()).collect()
}

impl PipelineConfig {
    pub fn hash_config(&self, scale_index: usize) -> HashConfig {
        HashConfig {
            code_bits: self.code_bits[scale_index],
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            theta_rel: self.theta_rel,
            max_outer: self.max_outer,
            inner_steps: self.inner_steps,
            neighbors: self.lle_neighbors,
            seed: self.seed,
        }
    }

    pub fn codebook_sample_cap(&self) -> usize {
        self.max_codebook_codes.unwrap_or(self.max_train_pdvs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidArgument(reason));
        if self.scales.is_empty() {
            return bad("at least one scale is required".into());
        }
        if self.scales.iter().any(|&p| p < 3 || p % 2 == 0) {
            return bad(format!("scales must be odd and >= 3: {:?}", self.scales));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!(
                "scales must be strictly ascending: {:?}",
                self.scales
            ));
        }
        if self.code_bits.len() != self.scales.len() {
            return bad(format!(
                "{} code lengths for {} scales",
                self.code_bits.len(),
                self.scales.len()
            ));
        }
        for (i, &p) in self.scales.iter().enumerate() {
            self.hash_config(i).validate(crate::pdv::pdv_dim(p))?;
            if self.code_bits[i] > crate::hash::MAX_PACKED_BITS {
                return bad(format!(
                    "code length {} exceeds {}",
                    self.code_bits[i],
                    crate::hash::MAX_PACKED_BITS
                ));
            }
        }
        if self.codebook_size == 0 || self.lle_neighbors == 0 || self.max_train_pdvs == 0 {
            return bad("codebook_size, lle_neighbors and max_train_pdvs must be positive".into());
        }
        if self.max_train_pdvs <= self.lle_neighbors {
            return bad("max_train_pdvs must exceed lle_neighbors".into());
        }
        if self.max_codebook_codes == Some(0) {
            return bad("max_codebook_codes must be positive".into());
        }
        match self.pca {
            PcaSetting::Energy(e) if !(e > 0.0 && e <= 1.0) => {
                bad(format!("pca_energy {e} outside (0, 1]"))
            }
            PcaSetting::Dim(0) => bad("pca_dim must be positive".into()),
            _ => Ok(()),
        }
    }

    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut bits_given = false;
        let mut pca_mode: Option<bool> = None;
        let mut energy = None;
        let mut dim = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |reason: String| Error::Config {
                line: line_no,
                reason,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            macro_rules! num {
                () => {
                    value
                        .parse()
                        .map_err(|_| err(format!("invalid value {value:?} for `{key}`")))?
                };
            }
            match key {
                "scales" => {
                    cfg.scales = parse_list(value)
                        .ok_or_else(|| err(format!("invalid scale list {value:?}")))?
                }
                "code_bits" => {
                    cfg.code_bits = parse_list(value)
                        .ok_or_else(|| err(format!("invalid code_bits list {value:?}")))?;
                    bits_given = true;
                }
                "codebook_size" => cfg.codebook_size = num!(),
                "lle_neighbors" => cfg.lle_neighbors = num!(),
                "lambda1" => cfg.lambda1 = num!(),
                "lambda2" => cfg.lambda2 = num!(),
                "lambda3" => cfg.lambda3 = num!(),
                "theta_rel" => cfg.theta_rel = num!(),
                "max_outer" => cfg.max_outer = num!(),
                "inner_steps" => cfg.inner_steps = num!(),
                "max_train_pdvs" => cfg.max_train_pdvs = num!(),
                "max_codebook_codes" => cfg.max_codebook_codes = Some(num!()),
                "pca" => {
                    pca_mode = Some(match value {
                        "on" => true,
                        "off" => false,
                        _ => return Err(err(format!("`pca` must be on or off, got {value:?}"))),
                    })
                }
                "pca_energy" => energy = Some(num!()),
                "pca_dim" => dim = Some(num!()),
                "seed" => cfg.seed = num!(),
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        if !bits_given {
            cfg.code_bits = cfg
                .scales
                .iter()
                .map(|&p| default_code_bits(p))
                .collect::<Option<_>>()
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "code_bits must be set for scales {:?}",
                        cfg.scales
                    ))
                })?;
        }
        cfg.pca = match (pca_mode, energy, dim) {
            (Some(false), _, _) => PcaSetting::Off,
            (_, _, Some(d)) => PcaSetting::Dim(d),
            (_, Some(e), None) => PcaSetting::Energy(e),
            (_, None, None) => PcaSetting::Energy(0.99),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(to_config_string())` reproduces `self`.
    pub fn to_config_string(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "scales = {}", join(&self.scales));
        let _ = writeln!(s, "code_bits = {}", join(&self.code_bits));
        let _ = writeln!(s, "codebook_size = {}", self.codebook_size);
        let _ = writeln!(s, "lle_neighbors = {}", self.lle_neighbors);
        let _ = writeln!(s, "lambda1 = {:?}", self.lambda1);
        let _ = writeln!(s, "lambda2 = {:?}", self.lambda2);
        let _ = writeln!(s, "lambda3 = {:?}", self.lambda3);
        let _ = writeln!(s, "theta_rel = {:?}", self.theta_rel);
        let _ = writeln!(s, "max_outer = {}", self.max_outer);
        let _ = writeln!(s, "inner_steps = {}", self.inner_steps);
        let _ = writeln!(s, "max_train_pdvs = {}", self.max_train_pdvs);
        if let Some(c) = self.max_codebook_codes {
            let _ = writeln!(s, "max_codebook_codes = {c}");
        }
        match self.pca {
            PcaSetting::Off => {
                let _ = writeln!(s, "pca = off");
            }
            PcaSetting::Energy(e) => {
                let _ = writeln!(s, "pca_energy = {e:?}");
            }
            PcaSetting::Dim(d) => {
                let _ = writeln!(s, "pca_dim = {d}");
            }
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_settings() {
        let c = PipelineConfig::default();
        assert_eq!(c.scales, vec![3, 5]);
        assert_eq!(c.code_bits, vec![16, 40]);
        assert_eq!(c.codebook_size, 3000);
        assert_eq!(c.lle_neighbors, 10);
        assert_eq!((c.lambda1, c.lambda2, c.lambda3), (10.0, 1.0, 1000.0));
        c.validate().unwrap();
        assert_eq!(PipelineConfig::parse("").unwrap(), c);
    }

    #[test]
    fn overrides_and_comments() {
        let c = PipelineConfig::parse(
            "# scaled down\ncodebook_size = 500\nscales = 3  # single\nseed=7\npca = off\n",
        )
        .unwrap();
        assert_eq!(c.codebook_size, 500);
        assert_eq!(c.scales, vec![3]);
        assert_eq!(c.code_bits, vec![16]);
        assert_eq!(c.seed, 7);
        assert_eq!(c.pca, PcaSetting::Off);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = PipelineConfig::parse("seed = 1\n\nbogus = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
        let e = PipelineConfig::parse("lambda1 = ten\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
        let e = PipelineConfig::parse("no equals sign\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
        assert!(PipelineConfig::parse("scales = 3,7\n").is_err());
        assert!(PipelineConfig::parse("scales = 5,3\ncode_bits = 4,4\n").is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        for text in [
            "",
            "pca = off\nmax_codebook_codes = 900\n",
            "pca_dim = 12\nlambda3 = 0.001\nscales = 3\n",
        ] {
            let c = PipelineConfig::parse(text).unwrap();
            assert_eq!(PipelineConfig::parse(&c.to_config_string()).unwrap(), c);
        }
    }
}
