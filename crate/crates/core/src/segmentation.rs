//! Multi-Otsu thresholding and per-region mean extraction used to seed the
//! attenuation estimator.

use crate::error::{dims_mismatch, Error, Result};
use crate::grid::ImageGrid;
use crate::inr::AcVector;

pub const DEFAULT_BINS: usize = 256;
/// Largest class count supported.
pub const MAX_CLASSES: usize = 6;
/// Class counts above this use the coarse-to-fine search when `bins > COARSE_BINS`.
const EXHAUSTIVE_MAX_CLASSES: usize = 4;
const COARSE_BINS: usize = 64;
const REFINE_RADIUS: isize = 2;

/// Equal-width histogram over `[min, max]` of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub min: f64,
    pub max: f64,
}

impl Histogram {
    pub fn of(image: &ImageGrid, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument(
                "histogram needs at least one bin".into(),
            ));
        }
        let (min, max) = image.min_max();
        let mut counts = vec![0u64; bins];
        let span = max - min;
        for &v in image.data() {
            let b = if span > 0.0 {
                (((v - min) / span * bins as f64).floor() as usize).min(bins - 1)
            } else {
                0
            };
            counts[b] += 1;
        }
        Ok(Self { counts, min, max })
    }

    pub fn bin_width(&self) -> f64 {
        (self.max - self.min) / self.counts.len() as f64
    }

    /// Upper edge of bin `b`.
    pub fn upper_edge(&self, b: usize) -> f64 {
        self.min + (b + 1) as f64 * self.bin_width()
    }
}

/// Prefix tables over bins: counts and count-weighted bin indices, both exact
/// integers, so class statistics are O(1) lookups.
struct LookupTables {
    weight: Vec<u64>,
    moment: Vec<u64>,
}

impl LookupTables {
    fn new(counts: &[u64]) -> Self {
        let mut weight = Vec::with_capacity(counts.len() + 1);
        let mut moment = Vec::with_capacity(counts.len() + 1);
        weight.push(0);
        moment.push(0);
        for (b, &c) in counts.iter().enumerate() {
            weight.push(weight[b] + c);
            moment.push(moment[b] + c * b as u64);
        }
        Self { weight, moment }
    }

    /// `S²/W` for the class spanning bins `lo..=hi`; zero for empty classes.
    fn class_term(&self, lo: usize, hi: usize) -> f64 {
        let w = self.weight[hi + 1] - self.weight[lo];
        if w == 0 {
            return 0.0;
        }
        let s = (self.moment[hi + 1] - self.moment[lo]) as f64;
        s * s / w as f64
    }

    /// Between-class variance up to the constant `N·μ_T²`, for classes ending
    /// at `splits` (inclusive) and the last class ending at `bins − 1`.
    fn objective(&self, splits: &[usize]) -> f64 {
        let last = self.weight.len() - 2;
        let mut total = 0.0;
        let mut lo = 0;
        for &s in splits {
            total += self.class_term(lo, s);
            lo = s + 1;
        }
        total + self.class_term(lo, last)
    }
}

/// Lexicographic enumeration of strictly increasing split tuples.
fn exhaustive(tables: &LookupTables, bins: usize, num_splits: usize) -> Vec<usize> {
    fn recurse(
        tables: &LookupTables,
        bins: usize,
        splits: &mut Vec<usize>,
        depth: usize,
        best: &mut (f64, Vec<usize>),
    ) {
        if depth == splits.len() {
            let value = tables.objective(splits);
            if value > best.0 {
                *best = (value, splits.clone());
            }
            return;
        }
        let start = if depth == 0 { 0 } else { splits[depth - 1] + 1 };
        // Leave room for the remaining splits and a non-empty last class range.
        let end = bins - 1 - (splits.len() - depth);
        for s in start..=end {
            splits[depth] = s;
            recurse(tables, bins, splits, depth + 1, best);
        }
    }
    let mut splits = vec![0; num_splits];
    let mut best = (f64::NEG_INFINITY, Vec::new());
    recurse(tables, bins, &mut splits, 0, &mut best);
    best.1
}

/// Coarse search on 64 merged bins, then ±2 fine bins around each split.
fn coarse_to_fine(counts: &[u64], num_splits: usize) -> Vec<usize> {
    let bins = counts.len();
    let mut coarse = vec![0u64; COARSE_BINS];
    for (b, &c) in counts.iter().enumerate() {
        coarse[b * COARSE_BINS / bins] += c;
    }
    let coarse_splits = exhaustive(&LookupTables::new(&coarse), COARSE_BINS, num_splits);
    // Last fine bin that merges into coarse bin c.
    let fine_end = |c: usize| ((c + 1) * bins).div_ceil(COARSE_BINS) - 1;
    let centres: Vec<isize> = coarse_splits
        .iter()
        .map(|&c| fine_end(c) as isize)
        .collect();

    let tables = LookupTables::new(counts);
    let width = (2 * REFINE_RADIUS + 1) as usize;
    let total = width.pow(num_splits as u32);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut splits = vec![0usize; num_splits];
    // Odometer order with the first split most significant is lexicographic.
    'combos: for code in 0..total {
        let mut rest = code;
        for d in (0..num_splits).rev() {
            let offset = (rest % width) as isize - REFINE_RADIUS;
            rest /= width;
            let s = centres[d] + offset;
            if s < 0 || s as usize > bins - 2 {
                continue 'combos;
            }
            splits[d] = s as usize;
        }
        if splits.windows(2).any(|w| w[1] <= w[0]) {
            continue;
        }
        let value = tables.objective(&splits);
        if value > best.0 {
            best = (value, splits.clone());
        }
    }
    best.1
}

/// Split bins (inclusive upper bin of each of the first K−1 classes)
/// maximizing between-class variance of `counts`. Ties go to the
/// lexicographically smallest tuple.
pub fn multi_otsu_bins(counts: &[u64], num_classes: usize) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "multi-Otsu needs K ≥ 2, got {num_classes}"
        )));
    }
    if num_classes > MAX_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "multi-Otsu supports K ≤ {MAX_CLASSES}, got {num_classes}"
        )));
    }
    if num_classes > counts.len() {
        return Err(Error::InvalidArgument(format!(
            "K = {num_classes} exceeds bin count {}",
            counts.len()
        )));
    }
    let occupied = counts.iter().filter(|&&c| c > 0).count();
    if occupied < num_classes {
        return Err(Error::TooFewLevels {
            needed: num_classes,
            found: occupied,
        });
    }
    let num_splits = num_classes - 1;
    if num_classes > EXHAUSTIVE_MAX_CLASSES && counts.len() > COARSE_BINS {
        Ok(coarse_to_fine(counts, num_splits))
    } else {
        Ok(exhaustive(
            &LookupTables::new(counts),
            counts.len(),
            num_splits,
        ))
    }
}

/// K−1 strictly increasing thresholds (upper edges of the split bins).
pub fn multi_otsu(image: &ImageGrid, num_classes: usize, bins: usize) -> Result<Vec<f64>> {
    let hist = Histogram::of(image, bins)?;
    let splits = multi_otsu_bins(&hist.counts, num_classes)?;
    Ok(splits.iter().map(|&s| hist.upper_edge(s)).collect())
}

/// Partition of an image into K disjoint regions, stored as one 0-based
/// region index per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    height: usize,
    width: usize,
    num_regions: usize,
    regions: Vec<usize>,
}

impl MaskSet {
    pub fn from_regions(
        height: usize,
        width: usize,
        num_regions: usize,
        regions: Vec<usize>,
    ) -> Result<Self> {
        if regions.len() != height * width {
            return Err(dims_mismatch(height * width, regions.len()));
        }
        if regions.iter().any(|&r| r >= num_regions) {
            return Err(Error::InvalidArgument("region index out of range".into()));
        }
        Ok(Self {
            height,
            width,
            num_regions,
            regions,
        })
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn regions(&self) -> &[usize] {
        &self.regions
    }

    /// Binary mask of region `j` (0-based).
    pub fn mask(&self, j: usize) -> Vec<bool> {
        self.regions.iter().map(|&r| r == j).collect()
    }
}

/// Pixel value `v` goes to region `j` with `t_{j−1} < v ≤ t_j`.
pub fn masks_from_thresholds(image: &ImageGrid, thresholds: &[f64]) -> Result<MaskSet> {
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "thresholds must be strictly increasing".into(),
        ));
    }
    let regions = image
        .data()
        .iter()
        .map(|&v| thresholds.partition_point(|&t| t < v))
        .collect();
    MaskSet::from_regions(image.height(), image.width(), thresholds.len() + 1, regions)
}

/// Region means with the regions whose mean fell back to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMeans {
    pub acv: AcVector,
    pub empty_regions: Vec<usize>,
}

/// Mean of the non-zero pixel values inside each region; regions with no
/// non-zero pixels get 0 and are flagged.
pub fn region_means(image: &ImageGrid, masks: &MaskSet) -> Result<RegionMeans> {
    if masks.dims() != image.dims() {
        return Err(dims_mismatch(
            format!("{:?}", image.dims()),
            format!("{:?}", masks.dims()),
        ));
    }
    let k = masks.num_regions;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&v, &r) in image.data().iter().zip(&masks.regions) {
        if v != 0.0 {
            sums[r] += v;
            counts[r] += 1;
        }
    }
    let mut empty_regions = Vec::new();
    let values = (0..k)
        .map(|j| {
            if counts[j] == 0 {
                empty_regions.push(j);
                0.0
            } else {
                sums[j] / counts[j] as f64
            }
        })
        .collect();
    Ok(RegionMeans {
        acv: AcVector::new(values)?,
        empty_regions,
    })
}

/// Renumbers regions so their means ascend (ties keep the original order).
/// Returns the new masks and the means in the new order.
pub fn relabel_by_mean(image: &ImageGrid, masks: &MaskSet) -> Result<(MaskSet, RegionMeans)> {
    let means = region_means(image, masks)?;
    let values = means.acv.values();
    let mut order: Vec<usize> = (0..masks.num_regions).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut new_index = vec![0; masks.num_regions];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let relabeled = MaskSet {
        regions: masks.regions.iter().map(|&r| new_index[r]).collect(),
        ..masks.clone()
    };
    let sorted = RegionMeans {
        acv: AcVector::new(order.iter().map(|&o| values[o]).collect())?,
        empty_regions: {
            let mut e: Vec<usize> = means.empty_regions.iter().map(|&r| new_index[r]).collect();
            e.sort_unstable();
            e
        },
    };
    Ok((relabeled, sorted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{seeded_rng, RngStream};
    use proptest::prelude::*;
    use rand::Rng;

    /// Naive search: every tuple, class statistics summed bin by bin.
    fn brute_force(counts: &[u64], k: usize) -> Vec<usize> {
        let bins = counts.len();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut tuple = vec![0usize; k - 1];
        fn next(t: &mut [usize], bins: usize) -> bool {
            let n = t.len();
            for d in (0..n).rev() {
                if t[d] < bins - 1 - (n - d) {
                    t[d] += 1;
                    for e in d + 1..n {
                        t[e] = t[e - 1] + 1;
                    }
                    return true;
                }
            }
            false
        }
        for (d, v) in tuple.iter_mut().enumerate() {
            *v = d;
        }
        loop {
            let mut bounds = vec![0];
            bounds.extend(tuple.iter().map(|s| s + 1));
            bounds.push(bins);
            let mut value = 0.0;
            for c in bounds.windows(2) {
                let (mut w, mut s) = (0u64, 0u64);
                for b in c[0]..c[1] {
                    w += counts[b];
                    s += counts[b] * b as u64;
                }
                if w > 0 {
                    value += (s as f64) * (s as f64) / w as f64;
                }
            }
            if value > best.0 {
                best = (value, tuple.clone());
            }
            if !next(&mut tuple, bins) {
                break;
            }
        }
        best.1
    }

    #[test]
    fn bimodal_split() {
        let img = ImageGrid::from_fn(8, 8, |i, _| if i < 4 { 0.0 } else { 10.0 }).unwrap();
        let t = multi_otsu(&img, 2, DEFAULT_BINS).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t[0] > 0.0 && t[0] < 10.0);
    }

    #[test]
    fn trimodal_split() {
        let img = ImageGrid::from_fn(9, 4, |i, _| [0.0, 5.0, 10.0][i / 3]).unwrap();
        let t = multi_otsu(&img, 3, DEFAULT_BINS).unwrap();
        assert!(t[0] > 0.0 && t[0] < 5.0, "{t:?}");
        assert!(t[1] > 5.0 && t[1] < 10.0, "{t:?}");
    }

    #[test]
    fn random_image_matches_brute_force() {
        let mut rng = seeded_rng(21, RngStream::Test);
        let img = ImageGrid::from_fn(32, 32, |_, _| rng.random::<f64>().powi(2)).unwrap();
        let hist = Histogram::of(&img, 64).unwrap();
        assert_eq!(
            multi_otsu_bins(&hist.counts, 3).unwrap(),
            brute_force(&hist.counts, 3)
        );
    }

    #[test]
    fn error_paths() {
        let flat = ImageGrid::filled(4, 4, 2.0);
        assert!(matches!(
            multi_otsu(&flat, 2, 16),
            Err(Error::TooFewLevels { .. })
        ));
        let img = ImageGrid::from_fn(4, 4, |i, j| (i * 4 + j) as f64).unwrap();
        assert!(multi_otsu(&img, 1, 16).is_err());
        assert!(multi_otsu(&img, 7, 16).is_err());
        assert!(multi_otsu(&img, 6, 5).is_err());
        assert!(masks_from_thresholds(&img, &[2.0, 2.0]).is_err());
    }

    #[test]
    fn six_classes_coarse_to_fine() {
        let levels = [0.0, 0.5, 1.0, 1.3, 1.8, 2.5];
        let mut rng = seeded_rng(9, RngStream::Test);
        let img = ImageGrid::from_fn(40, 40, |i, _| {
            levels[i * 6 / 40] + 0.01 * rng.random::<f64>()
        })
        .unwrap();
        let t = multi_otsu(&img, 6, DEFAULT_BINS).unwrap();
        assert_eq!(t.len(), 5);
        let masks = masks_from_thresholds(&img, &t).unwrap();
        for (p, &r) in masks.regions().iter().enumerate() {
            assert_eq!(r, (p / 40) * 6 / 40);
        }
    }

    #[test]
    fn masks_partition_and_ties() {
        let img = ImageGrid::new(1, 4, vec![0.0, 1.0, 0.5, 1.0]).unwrap();
        let m = masks_from_thresholds(&img, &[0.5]).unwrap();
        assert_eq!(m.mask(0), vec![true, false, true, false]);
        assert_eq!(m.mask(1), vec![false, true, false, true]);

        let mut rng = seeded_rng(2, RngStream::Test);
        let img = ImageGrid::from_fn(10, 10, |_, _| rng.random()).unwrap();
        let m = masks_from_thresholds(&img, &[0.2, 0.5, 0.7]).unwrap();
        for p in 0..100 {
            let covered: usize = (0..4).filter(|&j| m.mask(j)[p]).count();
            assert_eq!(covered, 1);
        }
    }

    #[test]
    fn region_mean_rules() {
        let img = ImageGrid::new(1, 9, vec![2.0, 2.0, 4.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
        let masks = MaskSet::from_regions(1, 9, 3, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]).unwrap();
        let means = region_means(&img, &masks).unwrap();
        assert!((means.acv.values()[0] - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(means.acv.values()[1], 3.0);
        assert_eq!(means.acv.values()[2], 0.0);
        assert_eq!(means.empty_regions, vec![2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lookup_search_equals_brute_force(
            seed in 0u64..10_000,
            k in 2usize..=4,
            bins in 8usize..=24,
        ) {
            let mut rng = seeded_rng(seed, RngStream::Test);
            let counts: Vec<u64> = (0..bins).map(|_| if rng.random_bool(0.2) { 0 } else { rng.random_range(0..50) }).collect();
            prop_assume!(counts.iter().filter(|&&c| c > 0).count() >= k);
            prop_assert_eq!(multi_otsu_bins(&counts, k).unwrap(), brute_force(&counts, k));
        }

        #[test]
        fn thresholds_track_affine_rescaling(seed in 0u64..1000, scale in 0.1f64..20.0, shift in -5.0f64..5.0) {
            let mut rng = seeded_rng(seed, RngStream::Test);
            let img = ImageGrid::from_fn(12, 12, |_, _| rng.random()).unwrap();
            let moved = ImageGrid::new(12, 12, img.data().iter().map(|v| scale * v + shift).collect()).unwrap();
            let t = multi_otsu(&img, 3, 32).unwrap();
            let tm = multi_otsu(&moved, 3, 32).unwrap();
            for (a, b) in t.iter().zip(&tm) {
                prop_assert!((scale * a + shift - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn relabeling_is_idempotent(seed in 0u64..1000) {
            let mut rng = seeded_rng(seed, RngStream::Test);
            let img = ImageGrid::from_fn(10, 10, |_, _| rng.random_range(-1.0..1.0)).unwrap();
            let masks = masks_from_thresholds(&img, &[-0.3, 0.1, 0.6]).unwrap();
            let (once, _) = relabel_by_mean(&img, &masks).unwrap();
            let (twice, means) = relabel_by_mean(&img, &once).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(means.acv.values().windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
