//! Labelled video corpora on disk: `<class>/<video>/` frame directories or
//! `<class>/<video>.lpvol` files, with an optional class-mapping CSV.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{
    load_frame_dir, load_raw_volume, save_raw_volume, synthesize_texture, TextureSpec, VideoVolume,
};

#[derive(Debug, Clone)]
pub struct LabeledVideo {
    /// `<class>/<video>` relative to the corpus root.
    pub id: String,
    pub label: String,
    pub volume: VideoVolume,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    videos: Vec<LabeledVideo>,
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\n', '\r']) {
        return Err(Error::InvalidArgument(format!(
            "{kind} {s:?} must be non-empty and single-line"
        )));
    }
    Ok(())
}

impl Dataset {
    pub fn new(videos: Vec<LabeledVideo>) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in &videos {
            check_token("video id", &v.id)?;
            check_token("class label", &v.label)?;
            if !seen.insert(v.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate video id {:?}",
                    v.id
                )));
            }
        }
        Ok(Self { videos })
    }

    pub fn videos(&self) -> &[LabeledVideo] {
        &self.videos
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.videos.iter().map(|v| v.label.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Video indices per class, each list sorted by video id.
    pub fn by_class(&self) -> BTreeMap<String, Vec<usize>> {
        let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.videos.iter().enumerate() {
            map.entry(v.label.clone()).or_default().push(i);
        }
        for list in map.values_mut() {
            list.sort_by(|&a, &b| self.videos[a].id.cmp(&self.videos[b].id));
        }
        map
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<&LabeledVideo> {
        indices.iter().map(|&i| &self.videos[i]).collect()
    }
}

/// `old_class,new_class` relabelling, e.g. merging scenes into categories.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassMapping {
    map: BTreeMap<String, String>,
}

impl ClassMapping {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut map = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::Format(format!(
                    "class mapping row {}: expected 2 fields, got {}",
                    i + 1,
                    record.len()
                )));
            }
            let (old, new) = (&record[0], &record[1]);
            if i == 0 && old == "old_class" && new == "new_class" {
                continue;
            }
            check_token("class label", new)?;
            if map.insert(old.to_owned(), new.to_owned()).is_some() {
                return Err(Error::Format(format!("class {old:?} mapped twice")));
            }
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn map(&self, class: &str) -> Result<&str> {
        self.map.get(class).map(String::as_str).ok_or_else(|| {
            Error::InvalidArgument(format!("class {class:?} missing from class mapping"))
        })
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::fs::DirEntry>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.retain(|e| !e.file_name().to_string_lossy().starts_with('.'));
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

/// Loads every video under `root`. Class directories without any video are
/// errors; files other than `.lpvol` inside a class directory are ignored.
pub fn load_corpus(root: &Path, mapping: Option<&ClassMapping>) -> Result<Dataset> {
    let mut videos = Vec::new();
    for class_entry in sorted_entries(root)? {
        let class_path = class_entry.path();
        if !class_path.is_dir() {
            continue;
        }
        let class = class_entry.file_name().to_string_lossy().into_owned();
        let label = match mapping {
            Some(m) => m.map(&class)?.to_owned(),
            None => class.clone(),
        };
        let before = videos.len();
        for entry in sorted_entries(&class_path)? {
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            let volume = if path.is_dir() {
                load_frame_dir(&path, Some(&label))?
            } else if path.extension().is_some_and(|e| e == "lpvol") {
                load_raw_volume(&path)?.with_label(label.clone())
            } else {
                continue;
            };
            videos.push(LabeledVideo {
                id: format!("{class}/{name}"),
                label: label.clone(),
                volume,
            });
        }
        if videos.len() == before {
            return Err(Error::InvalidArgument(format!(
                "class {class:?} contains no videos"
            )));
        }
    }
    if videos.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no class directories under {}",
            root.display()
        )));
    }
    Dataset::new(videos)
}

/// Writes `dataset` as `<root>/<label>/<video>.lpvol`, one file per video.
pub fn write_corpus(dataset: &Dataset, root: &Path) -> Result<()> {
    for (i, v) in dataset.videos().iter().enumerate() {
        let dir = root.join(&v.label);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_raw_volume(&v.volume, &dir.join(format!("v{i:04}.lpvol")))?;
    }
    Ok(())
}

/// The four synthetic texture classes: horizontal and vertical gratings,
/// pulsing and uniform noise.
pub fn synthetic_classes(noise_sigma: f64) -> [(&'static str, TextureSpec); 4] {
    [
        (
            "grating_0",
            TextureSpec::grating(0.0, 0.1, 0.05, noise_sigma),
        ),
        (
            "grating_90",
            TextureSpec::grating(std::f64::consts::FRAC_PI_2, 0.1, 0.05, noise_sigma),
        ),
        ("pulsing", TextureSpec::pulsing(0.05, noise_sigma)),
        ("noise", TextureSpec::noise()),
    ]
}

/// `per_class` videos of each synthetic class, seeded per video.
pub fn synthetic_corpus(
    per_class: usize,
    dims: (usize, usize, usize),
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut videos = Vec::new();
    for (c, (label, spec)) in synthetic_classes(noise_sigma).into_iter().enumerate() {
        for i in 0..per_class {
            let volume = synthesize_texture(
                &spec,
                dims,
                crate::pipeline::derive_seed(seed, &[c as u64, i as u64]),
            )?
            .with_label(label);
            videos.push(LabeledVideo {
                id: format!("{label}/v{i:04}"),
                label: label.into(),
                volume,
            });
        }
    }
    Dataset::new(videos)
}
