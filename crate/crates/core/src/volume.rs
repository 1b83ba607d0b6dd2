//! Grayscale video volumes: frame-directory and raw-container loaders plus a
//! seeded generator of synthetic dynamic textures.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const RAW_MAGIC: &str = "LPVOL";

/// Intensity grid indexed `(t, y, x)`, frames stored one after another in
/// row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoVolume {
    frames: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    label: Option<String>,
}

impl VideoVolume {
    pub fn new(frames: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "volume dimensions must be positive, got {frames}x{rows}x{cols}"
            )));
        }
        if data.len() != frames * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} intensities for a {frames}x{rows}x{cols} volume",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite intensity at flat index {i}"
            )));
        }
        Ok(Self {
            frames,
            rows,
            cols,
            data,
            label: None,
        })
    }

    pub fn from_fn(
        frames: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(frames * rows * cols);
        for t in 0..frames {
            for y in 0..rows {
                for x in 0..cols {
                    data.push(f(t, y, x));
                }
            }
        }
        Self::new(frames, rows, cols, data)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(frames, rows, cols)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.rows + y) * self.cols + x
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(t, y, x)]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let len = self.rows * self.cols;
        &self.data[t * len..(t + 1) * len]
    }
}

/// Loads a directory of 8-bit grayscale frames (binary PGM or PNG) sorted by
/// file name.
pub fn load_frame_dir(path: &Path, label: Option<&str>) -> Result<VideoVolume> {
    if !path.is_dir() {
        return Err(Error::frame(path, "not a directory"));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && frame_kind(p).is_some())
        .collect();
    if files.is_empty() {
        return Err(Error::frame(path, "no .pgm or .png frames found"));
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let mut dims: Option<(usize, usize)> = None;
    let mut data = Vec::new();
    for file in &files {
        let (rows, cols, pixels) = match frame_kind(file) {
            Some(FrameKind::Pgm) => read_pgm(file)?,
            Some(FrameKind::Png) => read_png(file)?,
            None => unreachable!("filtered above"),
        };
        match dims {
            None => dims = Some((rows, cols)),
            Some(d) if d != (rows, cols) => {
                return Err(Error::frame(
                    file,
                    format!(
                        "frame is {rows}x{cols} but earlier frames are {}x{}",
                        d.0, d.1
                    ),
                ));
            }
            Some(_) => {}
        }
        data.extend(pixels.into_iter().map(f64::from));
    }
    let (rows, cols) = dims.expect("at least one frame");
    let volume = VideoVolume::new(files.len(), rows, cols, data)?;
    Ok(match label {
        Some(l) => volume.with_label(l),
        None => volume,
    })
}

#[derive(Clone, Copy)]
enum FrameKind {
    Pgm,
    Png,
}

fn frame_kind(path: &Path) -> Option<FrameKind> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "pgm" => Some(FrameKind::Pgm),
        "png" => Some(FrameKind::Png),
        _ => None,
    }
}

fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|reason| Error::frame(path, reason))
}

/// Parses a binary (P5) PGM with maxval 255.
fn parse_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (expected P5 magic)".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("unparseable PGM header field")?;
    }
    let [cols, rows, maxval] = fields;
    if maxval != 255 {
        return Err(format!(
            "unsupported pixel depth: maxval {maxval}, expected 255"
        ));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("missing whitespace after PGM header".into());
    }
    pos += 1;
    let len = rows * cols;
    if bytes.len() < pos + len {
        return Err(format!(
            "truncated PGM payload: {} of {len} bytes",
            bytes.len() - pos
        ));
    }
    Ok((rows, cols, bytes[pos..pos + len].to_vec()))
}

fn read_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::frame(path, e.to_string()))?;
    let info = reader.info();
    match info.color_type {
        png::ColorType::Grayscale => {}
        png::ColorType::GrayscaleAlpha => {
            return Err(Error::frame(
                path,
                "grayscale+alpha PNG frames are not supported",
            ))
        }
        other => {
            return Err(Error::frame(
                path,
                format!("color frame ({other:?}) rejected"),
            ))
        }
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::frame(
            path,
            format!(
                "unsupported pixel depth: {:?}, expected 8-bit",
                info.bit_depth
            ),
        ));
    }
    let (cols, rows) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::frame(path, "PNG too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::frame(path, e.to_string()))?;
    let stride = frame.line_size;
    let mut pixels = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        pixels.extend_from_slice(&buf[y * stride..y * stride + cols]);
    }
    Ok((rows, cols, pixels))
}

/// Reads an `LPVOL <T> <H> <W>\n` container followed by `T*H*W` bytes.
pub fn load_raw_volume(path: &Path) -> Result<VideoVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw_volume(&bytes)
}

pub fn decode_raw_volume(bytes: &[u8]) -> Result<VideoVolume> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Format("header is not ASCII".into()))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(RAW_MAGIC) {
        return Err(Error::Format(format!(
            "expected `{RAW_MAGIC}` magic in header {header:?}"
        )));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = parts
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|&v: &usize| v > 0)
            .ok_or_else(|| Error::Format(format!("bad dimensions in header {header:?}")))?;
    }
    if parts.next().is_some() {
        return Err(Error::Format(format!(
            "trailing fields in header {header:?}"
        )));
    }
    let [t, h, w] = dims;
    let payload = &bytes[newline + 1..];
    let expected = t * h * w;
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated payload: {} of {expected} bytes",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    VideoVolume::new(t, h, w, payload.iter().map(|&b| f64::from(b)).collect())
}

/// Intensities are rounded to the nearest integer and clamped to `[0, 255]`.
pub fn encode_raw_volume(volume: &VideoVolume) -> Vec<u8> {
    let (t, h, w) = volume.dims();
    let mut out = format!("{RAW_MAGIC} {t} {h} {w}\n").into_bytes();
    out.extend(
        volume
            .data()
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn save_raw_volume(volume: &VideoVolume, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_raw_volume(volume))
        .map_err(|e| Error::io(path, e))
}

/// Reads either a frame directory or an `.lpvol` file.
pub fn load_video(path: &Path, label: Option<&str>) -> Result<VideoVolume> {
    if path.is_dir() {
        return load_frame_dir(path, label);
    }
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let volume = decode_raw_volume(&bytes)?;
    Ok(match label {
        Some(l) => volume.with_label(l),
        None => volume,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    Grating,
    Noise,
    Pulsing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    pub kind: TextureKind,
    /// radians
    pub orientation: f64,
    /// cycles per pixel
    pub spatial_freq: f64,
    /// cycles per frame
    pub temporal_freq: f64,
    pub noise_sigma: f64,
}

impl TextureSpec {
    pub fn grating(
        orientation: f64,
        spatial_freq: f64,
        temporal_freq: f64,
        noise_sigma: f64,
    ) -> Self {
        Self {
            kind: TextureKind::Grating,
            orientation,
            spatial_freq,
            temporal_freq,
            noise_sigma,
        }
    }

    pub fn pulsing(temporal_freq: f64, noise_sigma: f64) -> Self {
        Self {
            kind: TextureKind::Pulsing,
            orientation: 0.0,
            spatial_freq: 0.0,
            temporal_freq,
            noise_sigma,
        }
    }

    pub fn noise() -> Self {
        Self {
            kind: TextureKind::Noise,
            orientation: 0.0,
            spatial_freq: 0.0,
            temporal_freq: 0.0,
            noise_sigma: 0.0,
        }
    }
}

/// Deterministic synthetic texture for a fixed `(spec, seed)`.
///
/// Gratings follow `127.5 + 100 sin(2π(f_s(x cosθ + y sinθ) + f_t t))` plus
/// Gaussian noise; pulsing volumes are spatially uniform with the same
/// temporal sinusoid; noise volumes are i.i.d. uniform on `[0, 255]`. Every
/// output is clipped to `[0, 255]`.
pub fn synthesize_texture(
    spec: &TextureSpec,
    dims: (usize, usize, usize),
    seed: u64,
) -> Result<VideoVolume> {
    let (t_len, h, w) = dims;
    if t_len < 8 || h < 8 || w < 8 {
        return Err(Error::InvalidArgument(format!(
            "synthetic volumes need every dimension >= 8, got {t_len}x{h}x{w}"
        )));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise_sigma must be a finite value >= 0, got {}",
            spec.noise_sigma
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
    let sigma = spec.noise_sigma;
    let (cos, sin) = (spec.orientation.cos(), spec.orientation.sin());

    VideoVolume::from_fn(t_len, h, w, |t, y, x| {
        let value = match spec.kind {
            TextureKind::Noise => rng.random_range(0.0..=255.0),
            TextureKind::Grating => {
                let phase = spec.spatial_freq * (x as f64 * cos + y as f64 * sin)
                    + spec.temporal_freq * t as f64;
                127.5 + 100.0 * (2.0 * PI * phase).sin()
            }
            TextureKind::Pulsing => {
                127.5 + 100.0 * (2.0 * PI * spec.temporal_freq * t as f64).sin()
            }
        };
        let noisy = if sigma > 0.0 && spec.kind != TextureKind::Noise {
            value + normal.sample(&mut rng)
        } else {
            value
        };
        noisy.clamp(0.0, 255.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pgm(dir: &Path, name: &str, rows: usize, cols: usize, fill: impl Fn(usize) -> u8) {
        let mut bytes = format!("P5\n# test frame\n{cols} {rows}\n255\n").into_bytes();
        bytes.extend((0..rows * cols).map(fill));
        fs::write(dir.join(name), bytes).unwrap();
    }

    fn write_png(
        dir: &Path,
        name: &str,
        rows: u32,
        cols: u32,
        color: png::ColorType,
        depth: png::BitDepth,
    ) {
        let file = fs::File::create(dir.join(name)).unwrap();
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), cols, rows);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header().unwrap();
        let channels = match color {
            png::ColorType::Rgb => 3,
            _ => 1,
        };
        let bytes_per = if depth == png::BitDepth::Sixteen {
            2
        } else {
            1
        };
        let data: Vec<u8> = (0..(rows * cols) as usize * channels * bytes_per)
            .map(|i| i as u8)
            .collect();
        writer.write_image_data(&data).unwrap();
    }

    #[test]
    fn loads_pgm_sequence_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        // written out of order on purpose
        write_pgm(dir.path(), "f002.pgm", 48, 48, |_| 2);
        write_pgm(dir.path(), "f000.pgm", 48, 48, |_| 0);
        write_pgm(dir.path(), "f001.pgm", 48, 48, |i| (i % 256) as u8);
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let v = load_frame_dir(dir.path(), Some("boil")).unwrap();
        assert_eq!(v.dims(), (3, 48, 48));
        assert_eq!(v.label(), Some("boil"));
        assert!(v.frame(0).iter().all(|&p| p == 0.0));
        assert_eq!(v.get(1, 0, 5), 5.0);
        assert!(v.frame(2).iter().all(|&p| p == 2.0));
    }

    #[test]
    fn loads_75_frames_of_48x48() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..75 {
            write_pgm(dir.path(), &format!("{i:03}.pgm"), 48, 48, |j| {
                (j + i) as u8
            });
        }
        assert_eq!(
            load_frame_dir(dir.path(), None).unwrap().dims(),
            (75, 48, 48)
        );
    }

    #[test]
    fn single_zero_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(dir.path(), "a.pgm", 3, 3, |_| 0);
        let v = load_frame_dir(dir.path(), None).unwrap();
        assert_eq!(v.dims(), (1, 3, 3));
        assert!(v.data().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn mixed_dimensions_name_the_offending_file() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(dir.path(), "a.pgm", 10, 10, |_| 0);
        write_pgm(dir.path(), "b.pgm", 10, 11, |_| 0);
        let err = load_frame_dir(dir.path(), None).unwrap_err();
        assert!(
            matches!(&err, Error::Frame { path, .. } if path.ends_with("b.pgm")),
            "{err}"
        );
    }

    #[test]
    fn missing_directory_is_an_error() {
        let err = load_frame_dir(Path::new("/nonexistent/lp2dh/frames"), None).unwrap_err();
        assert!(matches!(err, Error::Frame { .. }));
    }

    #[test]
    fn pgm_with_wrong_maxval_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"P5 4 4 65535\n".to_vec();
        bytes.extend(std::iter::repeat_n(0u8, 32));
        fs::write(dir.path().join("deep.pgm"), bytes).unwrap();
        let err = load_frame_dir(dir.path(), None).unwrap_err();
        assert!(
            err.to_string().contains("deep.pgm") && err.to_string().contains("depth"),
            "{err}"
        );
    }

    #[test]
    fn png_frames_gray8_accepted_color_and_16bit_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_png(
            dir.path(),
            "0.png",
            5,
            7,
            png::ColorType::Grayscale,
            png::BitDepth::Eight,
        );
        write_png(
            dir.path(),
            "1.png",
            5,
            7,
            png::ColorType::Grayscale,
            png::BitDepth::Eight,
        );
        let v = load_frame_dir(dir.path(), None).unwrap();
        assert_eq!(v.dims(), (2, 5, 7));
        assert_eq!(v.get(0, 1, 2), 9.0);

        let color = tempfile::tempdir().unwrap();
        write_png(
            color.path(),
            "0.png",
            4,
            4,
            png::ColorType::Rgb,
            png::BitDepth::Eight,
        );
        let err = load_frame_dir(color.path(), None).unwrap_err();
        assert!(err.to_string().contains("color"), "{err}");

        let deep = tempfile::tempdir().unwrap();
        write_png(
            deep.path(),
            "0.png",
            4,
            4,
            png::ColorType::Grayscale,
            png::BitDepth::Sixteen,
        );
        let err = load_frame_dir(deep.path(), None).unwrap_err();
        assert!(err.to_string().contains("depth"), "{err}");
    }

    #[test]
    fn raw_container_maps_bytes_directly() {
        let mut bytes = b"LPVOL 2 2 2\n".to_vec();
        bytes.extend(0u8..8);
        let v = decode_raw_volume(&bytes).unwrap();
        assert_eq!(v.dims(), (2, 2, 2));
        assert_eq!(v.get(1, 1, 1), 7.0);
        assert_eq!(v.get(0, 1, 0), 2.0);
    }

    #[test]
    fn raw_container_errors() {
        let mut short = b"LPVOL 2 2 2\n".to_vec();
        short.extend(0u8..7);
        assert!(
            matches!(decode_raw_volume(&short), Err(Error::Format(m)) if m.contains("truncated"))
        );
        assert!(decode_raw_volume(b"LPVOX 1 1 1\n\0").is_err());
        assert!(decode_raw_volume(b"LPVOL 1 one 1\n\0").is_err());
        assert!(decode_raw_volume(b"LPVOL 1 1\n\0").is_err());
        assert!(decode_raw_volume(b"LPVOL 1 1 1").is_err());
    }

    #[test]
    fn zero_frequency_grating_is_constant() {
        let spec = TextureSpec::grating(0.3, 0.0, 0.0, 0.0);
        let v = synthesize_texture(&spec, (8, 9, 10), 1).unwrap();
        assert!(v.data().iter().all(|&p| p == 127.5));
    }

    #[test]
    fn synthesis_is_deterministic_and_validated() {
        let spec = TextureSpec::grating(1.0, 0.1, 0.05, 12.0);
        let a = synthesize_texture(&spec, (8, 8, 8), 9).unwrap();
        let b = synthesize_texture(&spec, (8, 8, 8), 9).unwrap();
        assert_eq!(a, b);
        let c = synthesize_texture(&spec, (8, 8, 8), 10).unwrap();
        assert_ne!(a, c);
        assert!(synthesize_texture(&spec, (7, 8, 8), 0).is_err());
        let bad = TextureSpec {
            noise_sigma: -1.0,
            ..spec
        };
        assert!(synthesize_texture(&bad, (8, 8, 8), 0).is_err());
    }

    #[test]
    fn pulsing_frames_are_spatially_uniform_without_noise() {
        let v = synthesize_texture(&TextureSpec::pulsing(0.1, 0.0), (10, 8, 8), 0).unwrap();
        for t in 0..10 {
            let f = v.frame(t);
            assert!(f.iter().all(|&p| p == f[0]));
        }
        assert_ne!(v.get(0, 0, 0), v.get(2, 0, 0));
    }

    #[test]
    fn orthogonal_gratings_differ_substantially() {
        let a = synthesize_texture(&TextureSpec::grating(0.0, 0.1, 0.05, 5.0), (16, 24, 24), 3)
            .unwrap();
        let b = synthesize_texture(
            &TextureSpec::grating(PI / 2.0, 0.1, 0.05, 5.0),
            (16, 24, 24),
            3,
        )
        .unwrap();
        let mad = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.data().len() as f64;
        assert!(mad > 10.0, "mean absolute difference {mad}");
        // regression value from the reference generator
        assert!((mad - 78.910514).abs() < 1e-5, "{mad}");
    }
}
