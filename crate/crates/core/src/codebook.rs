//! k-means dictionaries over binary codes and codeword histograms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hash::{BinaryCodes, MAX_PACKED_BITS};

pub const KMEANS_MAX_ITERATIONS: usize = 100;
pub const KMEANS_TOLERANCE: f64 = 1e-6;
/// Independent seedings per fit; the lowest final inertia wins.
pub const KMEANS_RESTARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KmeansStats {
    pub requested_codewords: usize,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, initial seeding first.
    pub inertia_history: Vec<f64>,
}

/// Real-valued centroids in `[0, 1]^M`, with per-byte distance tables for
/// fast assignment of packed codes.
#[derive(Debug, Clone)]
pub struct Codebook {
    bits: usize,
    scale: usize,
    centroids: Vec<f64>,
    stats: KmeansStats,
    tables: Vec<f64>,
}

impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.bits == other.bits && self.scale == other.scale && self.centroids == other.centroids
    }
}

fn chunks(bits: usize) -> usize {
    bits.div_ceil(8)
}

/// `table[(j·256 + v)·C + c]` is the squared distance between byte `v` of a
/// code and the matching 8 coordinates of centroid `c`.
fn build_tables(bits: usize, centroids: &[f64]) -> Vec<f64> {
    let n_chunks = chunks(bits);
    let count = centroids.len() / bits.max(1);
    let mut tables = vec![0.0; n_chunks * 256 * count];
    for c in 0..count {
        let centroid = &centroids[c * bits..(c + 1) * bits];
        for j in 0..n_chunks {
            for v in 0..256usize {
                let mut d = 0.0;
                for i in 0..8 {
                    let m = j * 8 + i;
                    if m < bits {
                        let bit = ((v >> i) & 1) as f64;
                        d += (bit - centroid[m]) * (bit - centroid[m]);
                    }
                }
                tables[(j * 256 + v) * count + c] = d;
            }
        }
    }
    tables
}

impl Codebook {
    pub fn from_centroids(
        bits: usize,
        scale: usize,
        centroids: Vec<f64>,
        stats: KmeansStats,
    ) -> Result<Self> {
        if bits == 0 || bits > MAX_PACKED_BITS {
            return Err(Error::InvalidArgument(format!(
                "code length {bits} outside 1..={MAX_PACKED_BITS}"
            )));
        }
        if centroids.is_empty() || centroids.len() % bits != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} centroid values for {bits}-bit codes",
                centroids.len()
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite centroid".into()));
        }
        let tables = build_tables(bits, &centroids);
        Ok(Self {
            bits,
            scale,
            centroids,
            stats,
            tables,
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.centroids.len() / self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.bits..(c + 1) * self.bits]
    }

    /// Row-major `C x M`.
    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn stats(&self) -> &KmeansStats {
        &self.stats
    }

    /// Squared distances from `code` to every centroid, into `out`.
    fn distances_into(&self, code: u128, out: &mut [f64]) {
        let count = self.len();
        for j in 0..chunks(self.bits) {
            let v = ((code >> (8 * j)) & 0xff) as usize;
            let row = &self.tables[(j * 256 + v) * count..(j * 256 + v + 1) * count];
            if j == 0 {
                out.copy_from_slice(row);
            } else {
                out.iter_mut().zip(row).for_each(|(o, r)| *o += r);
            }
        }
    }

    fn argmin(distances: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (c, &d) in distances.iter().enumerate() {
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }

    /// Nearest centroid and its squared distance; ties go to the smaller index.
    pub fn nearest_packed(&self, code: u128) -> (usize, f64) {
        let mut scratch = vec![0.0; self.len()];
        self.distances_into(code, &mut scratch);
        Self::argmin(&scratch)
    }

    /// [`Self::nearest_packed`] for many codes, reusing one buffer.
    pub fn nearest_many(&self, codes: impl IntoIterator<Item = u128>) -> Vec<(usize, f64)> {
        let mut scratch = vec![0.0; self.len()];
        codes
            .into_iter()
            .map(|code| {
                self.distances_into(code, &mut scratch);
                Self::argmin(&scratch)
            })
            .collect()
    }

    pub fn assign_packed(&self, code: u128) -> usize {
        self.nearest_packed(code).0
    }

    /// Index of the nearest centroid to a `{0,1}^M` code.
    pub fn assign(&self, code: &[u8]) -> Result<usize> {
        if code.len() != self.bits {
            return Err(Error::DimensionMismatch(format!(
                "{}-bit code for a {}-bit codebook",
                code.len(),
                self.bits
            )));
        }
        Ok(self.assign_packed(crate::hash::codes_pack(code)))
    }
}

/// Sorted distinct codes with multiplicities.
pub(crate) fn distinct_counts(codes: &[u128]) -> Vec<(u128, usize)> {
    let mut sorted = codes.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(u128, usize)> = Vec::new();
    for c in sorted {
        match out.last_mut() {
            Some((last, n)) if *last == c => *n += 1,
            _ => out.push((c, 1)),
        }
    }
    out
}

fn unpack(bits: usize, code: u128) -> impl Iterator<Item = f64> {
    (0..bits).map(move |m| ((code >> m) & 1) as f64)
}

/// Greedy weighted k-means++ seeding over distinct codes: each new centre
/// is the best of several D²-sampled candidates by resulting potential.
fn seed_centers(points: &[(u128, usize)], k: usize, rng: &mut ChaCha8Rng) -> Vec<u128> {
    let total: usize = points.iter().map(|p| p.1).sum();
    let mut target = rng.random_range(0..total);
    let first = points
        .iter()
        .find(|p| {
            if target < p.1 {
                true
            } else {
                target -= p.1;
                false
            }
        })
        .expect("weights sum to total")
        .0;
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centers = vec![first];
    let mut nearest: Vec<u32> = points.iter().map(|p| (p.0 ^ first).count_ones()).collect();
    while centers.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .zip(&nearest)
            .map(|(p, &d)| p.1 as f64 * f64::from(d))
            .collect();
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            break;
        }
        let mut best: Option<(f64, usize)> = None;
        for _ in 0..trials {
            let mut r = rng.random::<f64>() * sum;
            let mut pick = None;
            for (i, &wgt) in weights.iter().enumerate() {
                if wgt > 0.0 {
                    pick = Some(i);
                    if r < wgt {
                        break;
                    }
                    r -= wgt;
                }
            }
            let pick = pick.expect("positive total weight");
            let code = points[pick].0;
            let potential: f64 = points
                .iter()
                .zip(&nearest)
                .map(|(p, &d)| p.1 as f64 * f64::from(d.min((p.0 ^ code).count_ones())))
                .sum();
            if best.is_none_or(|(b, _)| potential < b) {
                best = Some((potential, pick));
            }
        }
        let chosen = points[best.expect("at least one trial").1].0;
        centers.push(chosen);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = (*d).min((p.0 ^ chosen).count_ones());
        }
    }
    centers
}

/// k-means over packed `bits`-wide codes with greedy k-means++ seeding,
/// best of [`KMEANS_RESTARTS`] runs.
///
/// Runs on distinct codes weighted by multiplicity, which is the same
/// objective as clustering every code. If there are fewer distinct codes
/// than `codewords`, the dictionary shrinks to the distinct count.
pub fn fit_codebook_packed(
    codes: &[u128],
    bits: usize,
    scale: usize,
    codewords: usize,
    seed: u64,
) -> Result<Codebook> {
    if codewords == 0 {
        return Err(Error::InvalidArgument("codebook size must be >= 1".into()));
    }
    if codes.len() < codewords {
        return Err(Error::InvalidArgument(format!(
            "{} codes cannot fill {codewords} codewords",
            codes.len()
        )));
    }
    let points = distinct_counts(codes);
    let k = codewords.min(points.len());
    if k < codewords {
        log::warn!(
            "only {} distinct codes; codebook reduced from {codewords} to {k} codewords",
            points.len()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, KmeansStats)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let seeds = seed_centers(&points, k, &mut rng);
        let (centroids, mut stats) = lloyd(&points, bits, scale, &seeds)?;
        stats.requested_codewords = codewords;
        if best.as_ref().is_none_or(|(_, b)| stats.inertia < b.inertia) {
            best = Some((centroids, stats));
        }
    }
    let (centroids, stats) = best.expect("at least one restart");
    Codebook::from_centroids(bits, scale, centroids, stats)
}

/// Lloyd iterations from the given seed codes.
fn lloyd(
    points: &[(u128, usize)],
    bits: usize,
    scale: usize,
    seeds: &[u128],
) -> Result<(Vec<f64>, KmeansStats)> {
    let k = seeds.len();
    let mut centroids: Vec<f64> = seeds.iter().flat_map(|&c| unpack(bits, c)).collect();
    let mut stats = KmeansStats::default();
    let mut assignment = vec![0usize; points.len()];
    let mut cost = vec![0.0f64; points.len()];
    for iteration in 0..=KMEANS_MAX_ITERATIONS {
        let book =
            Codebook::from_centroids(bits, scale, centroids.clone(), KmeansStats::default())?;
        let mut inertia = 0.0;
        let nearest = book.nearest_many(points.iter().map(|p| p.0));
        for (i, (p, &(c, d))) in points.iter().zip(&nearest).enumerate() {
            assignment[i] = c;
            cost[i] = d;
            inertia += p.1 as f64 * d;
        }
        stats.inertia_history.push(inertia);
        stats.inertia = inertia;
        stats.iterations = iteration;
        if iteration == KMEANS_MAX_ITERATIONS {
            break;
        }

        let mut sums = vec![0.0f64; k * bits];
        let mut mass = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            mass[c] += p.1;
            for (s, b) in sums[c * bits..(c + 1) * bits]
                .iter_mut()
                .zip(unpack(bits, p.0))
            {
                *s += p.1 as f64 * b;
            }
        }
        let mut next = centroids.clone();
        for c in (0..k).filter(|&c| mass[c] > 0) {
            for m in 0..bits {
                next[c * bits + m] = sums[c * bits + m] / mass[c] as f64;
            }
        }
        for c in (0..k).filter(|&c| mass[c] == 0) {
            // reseed at the point farthest from its own centroid
            let far = (0..points.len())
                .max_by(|&i, &j| cost[i].partial_cmp(&cost[j]).unwrap().then(j.cmp(&i)))
                .expect("points exist");
            for (m, b) in unpack(bits, points[far].0).enumerate() {
                next[c * bits + m] = b;
            }
            cost[far] = 0.0;
        }
        let movement = (0..k)
            .map(|c| {
                (0..bits)
                    .map(|m| (next[c * bits + m] - centroids[c * bits + m]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if movement < KMEANS_TOLERANCE {
            // keep the centroids the recorded inertia was measured against
            break;
        }
        centroids = next;
    }
    Ok((centroids, stats))
}

pub fn fit_codebook(
    codes: &BinaryCodes,
    scale: usize,
    codewords: usize,
    seed: u64,
) -> Result<Codebook> {
    if codes.bits() > MAX_PACKED_BITS {
        return Err(Error::InvalidArgument(format!(
            "{} bits exceed {MAX_PACKED_BITS}",
            codes.bits()
        )));
    }
    let packed: Vec<u128> = (0..codes.count()).map(|n| codes.packed(n)).collect();
    fit_codebook_packed(&packed, codes.bits(), scale, codewords, seed)
}

/// Raw assignment counts per codeword.
pub fn histogram_counts(codebook: &Codebook, codes: &[u128]) -> Vec<usize> {
    let mut counts = vec![0usize; codebook.len()];
    let distinct = distinct_counts(codes);
    for (&(_, n), (c, _)) in distinct
        .iter()
        .zip(codebook.nearest_many(distinct.iter().map(|p| p.0)))
    {
        counts[c] += n;
    }
    counts
}

/// L1-normalised codeword histogram of one video's codes.
pub fn video_histogram_packed(codebook: &Codebook, codes: &[u128]) -> Result<Vec<f64>> {
    if codes.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot build a histogram from zero codes".into(),
        ));
    }
    let total = codes.len() as f64;
    Ok(histogram_counts(codebook, codes)
        .into_iter()
        .map(|c| c as f64 / total)
        .collect())
}

pub fn video_histogram(codebook: &Codebook, codes: &BinaryCodes) -> Result<Vec<f64>> {
    if codes.bits() != codebook.bits() {
        return Err(Error::DimensionMismatch(format!(
            "{}-bit codes for a {}-bit codebook",
            codes.bits(),
            codebook.bits()
        )));
    }
    let packed: Vec<u128> = (0..codes.count()).map(|n| codes.packed(n)).collect();
    video_histogram_packed(codebook, &packed)
}
