//! Pixel-difference vectors over cubic spatiotemporal neighbourhoods.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::VideoVolume;

/// Offset of a neighbour relative to the centre voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Offset {
    pub dt: isize,
    pub dy: isize,
    pub dx: isize,
}

/// All `P^3 - 1` offsets in `[-r, r]^3` minus the origin, sorted by `dt`, then
/// `dy`, then `dx`.
pub fn neighbor_offsets(side: usize) -> Vec<Offset> {
    let r = (side / 2) as isize;
    let mut out = Vec::with_capacity(side * side * side - 1);
    for dt in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if (dt, dy, dx) != (0, 0, 0) {
                    out.push(Offset { dt, dy, dx });
                }
            }
        }
    }
    out
}

pub fn pdv_dim(side: usize) -> usize {
    side * side * side - 1
}

/// Column-stacked PDVs, `dim x count`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdvMatrix {
    scale: usize,
    columns: DMatrix<f64>,
}

impl PdvMatrix {
    pub fn from_matrix(scale: usize, columns: DMatrix<f64>) -> Result<Self> {
        validate_side(scale)?;
        if columns.nrows() != pdv_dim(scale) {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for neighbourhood side {scale} (expected {})",
                columns.nrows(),
                pdv_dim(scale)
            )));
        }
        Ok(Self { scale, columns })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn count(&self) -> usize {
        self.columns.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.columns
    }

    pub fn neighbor_order(&self) -> Vec<Offset> {
        neighbor_offsets(self.scale)
    }

    /// Concatenates columns of several matrices at the same scale.
    pub fn concat(parts: &[PdvMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        if let Some(p) = parts.iter().find(|p| p.scale != first.scale) {
            return Err(Error::DimensionMismatch(format!(
                "mixed neighbourhood sides {} and {}",
                first.scale, p.scale
            )));
        }
        let dim = first.dim();
        let total: usize = parts.iter().map(PdvMatrix::count).sum();
        let mut data = Vec::with_capacity(dim * total);
        for p in parts {
            data.extend_from_slice(p.columns.as_slice());
        }
        Ok(Self {
            scale: first.scale,
            columns: DMatrix::from_vec(dim, total, data),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stride {
    pub t: usize,
    pub y: usize,
    pub x: usize,
}

impl Stride {
    pub const DENSE: Stride = Stride { t: 1, y: 1, x: 1 };
}

impl Default for Stride {
    fn default() -> Self {
        Self::DENSE
    }
}

fn validate_side(side: usize) -> Result<()> {
    if side < 3 || side % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "neighbourhood side must be odd and >= 3, got {side}"
        )));
    }
    Ok(())
}

/// Centres with a full neighbourhood inside the volume, subsampled by `stride`,
/// as flat volume indices in raster order.
fn valid_centers(volume: &VideoVolume, side: usize, stride: Stride) -> Vec<usize> {
    let r = side / 2;
    let (t_len, h, w) = volume.dims();
    let mut out = Vec::new();
    for t in (r..t_len - r).step_by(stride.t) {
        for y in (r..h - r).step_by(stride.y) {
            for x in (r..w - r).step_by(stride.x) {
                out.push(volume.index(t, y, x));
            }
        }
    }
    out
}

/// Extracts PDVs at neighbourhood side `side`.
///
/// Centres are kept in raster order. With `max_samples` set and more surviving
/// centres than that, a seeded uniform subset is kept (still in raster order).
pub fn extract_pdvs(
    volume: &VideoVolume,
    side: usize,
    stride: Stride,
    max_samples: Option<usize>,
    seed: u64,
) -> Result<PdvMatrix> {
    validate_side(side)?;
    if stride.t == 0 || stride.y == 0 || stride.x == 0 {
        return Err(Error::InvalidArgument(format!(
            "stride must be positive, got {stride:?}"
        )));
    }
    let (t_len, h, w) = volume.dims();
    if t_len < side || h < side || w < side {
        return Err(Error::VolumeTooSmall {
            dims: volume.dims(),
            side,
        });
    }

    let mut centers = valid_centers(volume, side, stride);
    if let Some(cap) = max_samples {
        if centers.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = rand::seq::index::sample(&mut rng, centers.len(), cap).into_vec();
            picked.sort_unstable();
            centers = picked.into_iter().map(|i| centers[i]).collect();
        }
    }

    Ok(PdvMatrix {
        scale: side,
        columns: gather(volume, side, &centers),
    })
}

fn gather(volume: &VideoVolume, side: usize, centers: &[usize]) -> DMatrix<f64> {
    let (_, h, w) = volume.dims();
    let deltas: Vec<isize> = neighbor_offsets(side)
        .iter()
        .map(|o| (o.dt * h as isize + o.dy) * w as isize + o.dx)
        .collect();
    let data = volume.data();
    let dim = deltas.len();
    let mut out = Vec::with_capacity(dim * centers.len());
    for &c in centers {
        let center = data[c];
        out.extend(
            deltas
                .iter()
                .map(|&d| data[(c as isize + d) as usize] - center),
        );
    }
    DMatrix::from_vec(dim, centers.len(), out)
}

/// Every PDV of `volume` (stride 1, raster order) in consecutive blocks of at
/// most `chunk` columns. Concatenating the blocks gives
/// `extract_pdvs(volume, side, Stride::DENSE, None, _)`.
pub fn dense_pdv_chunks(
    volume: &VideoVolume,
    side: usize,
    chunk: usize,
) -> Result<impl Iterator<Item = DMatrix<f64>> + '_> {
    validate_side(side)?;
    if chunk == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    let (t_len, h, w) = volume.dims();
    if t_len < side || h < side || w < side {
        return Err(Error::VolumeTooSmall {
            dims: volume.dims(),
            side,
        });
    }
    let centers = valid_centers(volume, side, Stride::DENSE);
    let count = centers.len();
    Ok((0..count)
        .step_by(chunk)
        .map(move |start| gather(volume, side, &centers[start..(start + chunk).min(count)])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chunks_concatenate_to_dense_extraction() {
        let v = random_volume((7, 8, 9), 4);
        let dense = extract_pdvs(&v, 3, Stride::DENSE, None, 0).unwrap();
        let parts: Vec<PdvMatrix> = dense_pdv_chunks(&v, 3, 17)
            .unwrap()
            .map(|m| PdvMatrix::from_matrix(3, m).unwrap())
            .collect();
        assert!(parts.iter().all(|p| p.count() <= 17));
        assert_eq!(PdvMatrix::concat(&parts).unwrap(), dense);
    }

    fn random_volume(dims: (usize, usize, usize), seed: u64) -> VideoVolume {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VideoVolume::from_fn(dims.0, dims.1, dims.2, |_, _, _| {
            rng.random_range(0..=255) as f64
        })
        .unwrap()
    }

    #[test]
    fn dims_for_common_sides() {
        assert_eq!(pdv_dim(3), 26);
        assert_eq!(pdv_dim(5), 124);
        assert_eq!(neighbor_offsets(3).len(), 26);
        assert_eq!(neighbor_offsets(5).len(), 124);
    }

    #[test]
    fn offsets_are_in_raster_order() {
        let offs = neighbor_offsets(3);
        assert_eq!(
            offs[0],
            Offset {
                dt: -1,
                dy: -1,
                dx: -1
            }
        );
        assert_eq!(
            offs[12],
            Offset {
                dt: 0,
                dy: 0,
                dx: -1
            }
        );
        assert_eq!(
            offs[13],
            Offset {
                dt: 0,
                dy: 0,
                dx: 1
            }
        );
        assert_eq!(
            offs[25],
            Offset {
                dt: 1,
                dy: 1,
                dx: 1
            }
        );
        assert!(offs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_volume_gives_zero_pdvs() {
        let v = VideoVolume::from_fn(6, 7, 8, |_, _, _| 42.0).unwrap();
        let x = extract_pdvs(&v, 3, Stride::DENSE, None, 0).unwrap();
        assert_eq!(x.count(), 4 * 5 * 6);
        assert!(x.matrix().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn single_neighbourhood_with_known_differences() {
        let v = VideoVolume::from_fn(
            3,
            3,
            3,
            |t, y, x| if (t, y, x) == (1, 1, 1) { 5.0 } else { 7.0 },
        )
        .unwrap();
        let x = extract_pdvs(&v, 3, Stride::DENSE, None, 0).unwrap();
        assert_eq!(x.count(), 1);
        assert_eq!(x.dim(), 26);
        assert!(x.matrix().iter().all(|&e| e == 2.0));
    }

    #[test]
    fn entries_follow_documented_offset_order() {
        let v = random_volume((5, 6, 7), 4);
        let x = extract_pdvs(&v, 3, Stride::DENSE, None, 0).unwrap();
        let offs = x.neighbor_order();
        // column for centre (2, 3, 4) in raster order over valid centres (3x4x5 grid)
        let (ct, cy, cx) = (2usize, 3usize, 4usize);
        let col = ((ct - 1) * 4 + (cy - 1)) * 5 + (cx - 1);
        for (p, o) in offs.iter().enumerate() {
            let neighbour = v.get(
                (ct as isize + o.dt) as usize,
                (cy as isize + o.dy) as usize,
                (cx as isize + o.dx) as usize,
            );
            assert_eq!(x.matrix()[(p, col)], neighbour - v.get(ct, cy, cx));
        }
    }

    #[test]
    fn too_small_volume_and_bad_side_rejected() {
        let v = random_volume((4, 4, 4), 0);
        assert!(matches!(
            extract_pdvs(&v, 5, Stride::DENSE, None, 0),
            Err(Error::VolumeTooSmall { side: 5, .. })
        ));
        assert!(extract_pdvs(&v, 4, Stride::DENSE, None, 0).is_err());
        assert!(extract_pdvs(&v, 3, Stride { t: 0, y: 1, x: 1 }, None, 0).is_err());
    }

    #[test]
    fn subsampling_keeps_all_when_under_cap_and_is_seeded() {
        let v = random_volume((8, 9, 10), 1);
        let full = extract_pdvs(&v, 3, Stride::DENSE, None, 0).unwrap();
        let capped_high = extract_pdvs(&v, 3, Stride::DENSE, Some(10_000), 3).unwrap();
        assert_eq!(full, capped_high);

        let a = extract_pdvs(&v, 3, Stride::DENSE, Some(50), 3).unwrap();
        let b = extract_pdvs(&v, 3, Stride::DENSE, Some(50), 3).unwrap();
        assert_eq!(a.count(), 50);
        assert_eq!(a, b);
        // every sampled column is one of the dense columns
        for c in a.matrix().column_iter() {
            assert!(full.matrix().column_iter().any(|f| f == c));
        }
    }

    #[test]
    fn stride_subsamples_centres() {
        let v = random_volume((9, 9, 9), 2);
        let x = extract_pdvs(&v, 3, Stride { t: 2, y: 3, x: 1 }, None, 0).unwrap();
        assert_eq!(x.count(), 4 * 3 * 7);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dense_count_matches_formula(t in 3usize..8, h in 3usize..8, w in 3usize..8, seed: u64) {
            let v = random_volume((t, h, w), seed);
            let x = extract_pdvs(&v, 3, Stride::DENSE, None, 0).unwrap();
            prop_assert_eq!(x.count(), (t - 2) * (h - 2) * (w - 2));
        }

        #[test]
        fn intensity_offset_invariance(c in -50.0f64..50.0, seed: u64) {
            let v = random_volume((6, 6, 6), seed);
            let shifted = VideoVolume::new(6, 6, 6, v.data().iter().map(|p| p + c.round()).collect()).unwrap();
            let a = extract_pdvs(&v, 3, Stride::DENSE, None, 0).unwrap();
            let b = extract_pdvs(&shifted, 3, Stride::DENSE, None, 0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
