//! Edge, ground and surface segmentation in the image plane.
//!
//! Two routes are provided. [`segment_sobel`] thresholds horizontal and vertical
//! Sobel responses of the normalized range image. [`segment_frequency`] removes
//! the horizontal DC component of every row in the Fourier domain, which strips
//! ring-shaped ground returns from sparse sensors, and runs the edge detector on
//! what remains.
//!
//! Every valid source pixel lands in exactly one of the three feature images,
//! and feature images carry the original range, not a filter response.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{Grid, MaskedGrid};
use crate::sri::{normalize_to_gray, SphericalRangeImage};

pub type Kernel = [[f64; 3]; 3];

/// Horizontal derivative mask; responds to vertical structures (edges).
pub const EDGE_KERNEL: Kernel = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];

/// Vertical derivative mask; responds to horizontal structures (ground rings).
pub const GROUND_KERNEL: Kernel = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

/// Thresholds shared by both segmentation routes.
#[derive(Debug, Clone, PartialEq)]
pub struct SobelConfig {
    /// Minimum `|M_E ∗ I|` on the [0, 1] image for an edge pixel.
    pub edge_threshold: f64,
    /// Minimum `|M_G ∗ I|` on the [0, 1] image for a ground pixel.
    pub ground_threshold: f64,
    /// Ground pixels must lie below this height in the sensor frame, meters.
    pub ground_z_max: f64,
    /// Frequency route: a pixel within this fraction of the image span of its
    /// row mean is ground.
    pub fft_ground_eps: f64,
}

impl Default for SobelConfig {
    fn default() -> Self {
        Self {
            edge_threshold: 0.30,
            ground_threshold: 0.08,
            ground_z_max: -0.5,
            fft_ground_eps: 0.02,
        }
    }
}

impl SobelConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.edge_threshold) || !in_unit(self.ground_threshold) {
            return Err(Error::InvalidParameter(
                "filter thresholds must lie in (0, 1)".into(),
            ));
        }
        if !(self.fft_ground_eps > 0.0) {
            return Err(Error::InvalidParameter("fft_ground_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureClass {
    Edge,
    Ground,
    Surface,
}

/// Per-class range images. Invalid pixels of the source stay unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImages {
    pub edge: MaskedGrid,
    pub ground: MaskedGrid,
    pub surface: MaskedGrid,
    pub labels: Grid<Option<FeatureClass>>,
}

impl FeatureImages {
    fn from_labels(img: &SphericalRangeImage, labels: Grid<Option<FeatureClass>>) -> Self {
        let (m, n) = (img.rows(), img.cols());
        let mut out = Self {
            edge: MaskedGrid::empty(m, n),
            ground: MaskedGrid::empty(m, n),
            surface: MaskedGrid::empty(m, n),
            labels,
        };
        for i in 0..m {
            for j in 0..n {
                let r = *img.range.get(i, j);
                match out.labels.get(i, j) {
                    Some(FeatureClass::Edge) => out.edge.set(i, j, r),
                    Some(FeatureClass::Ground) => out.ground.set(i, j, r),
                    Some(FeatureClass::Surface) => out.surface.set(i, j, r),
                    None => {}
                }
            }
        }
        out
    }

    pub fn image(&self, class: FeatureClass) -> &MaskedGrid {
        match class {
            FeatureClass::Edge => &self.edge,
            FeatureClass::Ground => &self.ground,
            FeatureClass::Surface => &self.surface,
        }
    }

    pub fn count(&self, class: FeatureClass) -> usize {
        self.labels.iter().filter(|l| **l == Some(class)).count()
    }
}

/// 3x3 correlation of `kernel` with the valid pixels of `img`.
///
/// The output at `(i, j)` is `Σ kernel[a][b] · img[i+a−1][j+b−1]`. It is
/// invalid on the border and wherever any of the nine taps is invalid.
pub fn convolve3x3(img: &MaskedGrid, kernel: &Kernel) -> Result<MaskedGrid> {
    let (m, n) = (img.rows(), img.cols());
    if m < 3 || n < 3 {
        return Err(Error::ImageTooSmall { rows: m, cols: n });
    }
    let mut out = MaskedGrid::empty(m, n);
    let values = img.values.as_slice();
    let valid = img.valid.as_slice();
    for i in 1..m - 1 {
        'col: for j in 1..n - 1 {
            let mut acc = 0.0;
            for (a, krow) in kernel.iter().enumerate() {
                let base = (i + a - 1) * n + j - 1;
                for (b, k) in krow.iter().enumerate() {
                    if !valid[base + b] {
                        continue 'col;
                    }
                    acc += k * values[base + b];
                }
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Classifies pixels with Sobel responses on the normalized image.
///
/// Precedence is edge, then ground (strong vertical gradient and low height),
/// then surface.
pub fn segment_sobel(img: &SphericalRangeImage, cfg: &SobelConfig) -> Result<FeatureImages> {
    let gray = normalize_to_gray(img)?;
    let gray = MaskedGrid {
        values: gray.values,
        valid: gray.valid,
    };
    let edge = convolve3x3(&gray, &EDGE_KERNEL)?;
    let ground = convolve3x3(&gray, &GROUND_KERNEL)?;
    let labels = Grid::from_fn(img.rows(), img.cols(), |i, j| {
        if !img.is_valid(i, j) {
            return None;
        }
        if edge.value(i, j).is_some_and(|g| g.abs() >= cfg.edge_threshold) {
            Some(FeatureClass::Edge)
        } else if ground.value(i, j).is_some_and(|g| g.abs() >= cfg.ground_threshold)
            && *img.z_map.get(i, j) < cfg.ground_z_max
        {
            Some(FeatureClass::Ground)
        } else {
            Some(FeatureClass::Surface)
        }
    });
    Ok(FeatureImages::from_labels(img, labels))
}

/// Result of [`fft_ground_filter`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyFiltered {
    /// Range with the horizontal DC component removed, meters. Signed.
    pub filtered: MaskedGrid,
    /// Pixels whose filtered value is within `eps · span` of zero.
    pub ground: MaskedGrid,
    /// Range span of the source image, meters.
    pub span: f64,
}

/// Zeroes the centered horizontal-DC column of the 2D spectrum of the
/// normalized image and transforms back.
///
/// Invalid pixels are filled with their row's valid mean before the transform
/// and stay invalid in the output. Zeroing that column is the same as
/// subtracting each row's mean.
pub fn fft_ground_filter(img: &SphericalRangeImage, eps: f64) -> Result<FrequencyFiltered> {
    let n = img.cols();
    if n % 2 != 0 {
        return Err(Error::OddWidth(n));
    }
    let gray = normalize_to_gray(img)?;
    let m = img.rows();
    let filled = fill_invalid_with_row_mean(&gray.values, &img.valid);
    let center = n / 2;
    let spectrum_filtered = spectral_filter(&filled, |_, j| if j == center { 0.0 } else { 1.0 });

    let mut filtered = MaskedGrid::empty(m, n);
    let mut ground = MaskedGrid::empty(m, n);
    let tol = eps * gray.span;
    for i in 0..m {
        for j in 0..n {
            if !img.is_valid(i, j) {
                continue;
            }
            // The DC term is gone, so only the scale part of the de-normalization applies.
            let v = spectrum_filtered.get(i, j) * gray.span;
            filtered.set(i, j, v);
            if v.abs() <= tol {
                ground.set(i, j, *img.range.get(i, j));
            }
        }
    }
    Ok(FrequencyFiltered {
        filtered,
        ground,
        span: gray.span,
    })
}

/// Ground from the frequency route, edges from the horizontal Sobel response of
/// the ground-free image, surface for the rest.
pub fn segment_frequency(img: &SphericalRangeImage, cfg: &SobelConfig) -> Result<FeatureImages> {
    let freq = fft_ground_filter(img, cfg.fft_ground_eps)?;
    let scale = if freq.span > 0.0 { 1.0 / freq.span } else { 0.0 };
    let normalized = MaskedGrid {
        values: freq.filtered.values.map(|v| v * scale),
        valid: freq.filtered.valid.clone(),
    };
    let edge = convolve3x3(&normalized, &EDGE_KERNEL)?;
    let labels = Grid::from_fn(img.rows(), img.cols(), |i, j| {
        if !img.is_valid(i, j) {
            return None;
        }
        if freq.ground.is_valid(i, j) && *img.z_map.get(i, j) < cfg.ground_z_max {
            Some(FeatureClass::Ground)
        } else if edge.value(i, j).is_some_and(|g| g.abs() >= cfg.edge_threshold) {
            Some(FeatureClass::Edge)
        } else {
            Some(FeatureClass::Surface)
        }
    });
    Ok(FeatureImages::from_labels(img, labels))
}

fn fill_invalid_with_row_mean(values: &Grid<f64>, valid: &Grid<bool>) -> Grid<f64> {
    let (m, n) = (values.rows(), values.cols());
    let mut out = values.clone();
    for i in 0..m {
        let (sum, count) = (0..n)
            .filter(|&j| *valid.get(i, j))
            .fold((0.0, 0usize), |(s, c), j| (s + values.get(i, j), c + 1));
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        for j in 0..n {
            if !*valid.get(i, j) {
                out.set(i, j, mean);
            }
        }
    }
    out
}

/// Forward 2D DFT, centering shift, element-wise `mask`, inverse shift and
/// inverse DFT. `mask(i, j)` is indexed in the centered layout.
fn spectral_filter(input: &Grid<f64>, mask: impl Fn(usize, usize) -> f64) -> Grid<f64> {
    let (m, n) = (input.rows(), input.cols());
    let mut buf: Vec<Complex<f64>> = input.iter().map(|v| Complex::new(*v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    fft2d(&mut planner, &mut buf, m, n, false);

    // Centered position (i, j) holds the unshifted bin ((i + ceil(m/2)) % m, ...).
    let (ri, rj) = (m - m / 2, n - n / 2);
    for i in 0..m {
        for j in 0..n {
            let src = ((i + ri) % m) * n + (j + rj) % n;
            buf[src] *= mask(i, j);
        }
    }

    fft2d(&mut planner, &mut buf, m, n, true);
    let scale = 1.0 / (m * n) as f64;
    Grid::from_vec(m, n, buf.iter().map(|c| c.re * scale).collect())
}

fn fft2d(planner: &mut FftPlanner<f64>, buf: &mut [Complex<f64>], m: usize, n: usize, inverse: bool) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    row_fft.process(buf);

    let col_fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let mut column = vec![Complex::new(0.0, 0.0); m];
    for j in 0..n {
        for i in 0..m {
            column[i] = buf[i * n + j];
        }
        col_fft.process(&mut column);
        for i in 0..m {
            buf[i * n + j] = column[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn masked(rows: &[Vec<f64>]) -> MaskedGrid {
        let (m, n) = (rows.len(), rows[0].len());
        MaskedGrid {
            values: Grid::from_fn(m, n, |i, j| rows[i][j]),
            valid: Grid::filled(m, n, true),
        }
    }

    fn sri_from(range: &Grid<f64>, z: impl Fn(usize, usize) -> f64) -> SphericalRangeImage {
        let (m, n) = (range.rows(), range.cols());
        SphericalRangeImage {
            range: range.clone(),
            z_map: Grid::from_fn(m, n, z),
            valid: range.map(|r| *r > 0.0),
        }
    }

    /// Plain nine-tap dot product, no slicing tricks.
    fn naive_tap(img: &MaskedGrid, k: &Kernel, i: usize, j: usize) -> Option<f64> {
        if i == 0 || j == 0 || i + 1 >= img.rows() || j + 1 >= img.cols() {
            return None;
        }
        let mut s = 0.0;
        for di in 0..3 {
            for dj in 0..3 {
                let (y, x) = (i + di - 1, j + dj - 1);
                if !img.is_valid(y, x) {
                    return None;
                }
                s += k[di][dj] * img.values.get(y, x);
            }
        }
        Some(s)
    }

    fn random_masked(rng: &mut ChaCha8Rng, m: usize, n: usize, holes: f64) -> MaskedGrid {
        MaskedGrid {
            values: Grid::from_fn(m, n, |_, _| rng.random::<f64>()),
            valid: Grid::from_fn(m, n, |_, _| rng.random::<f64>() >= holes),
        }
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let img = masked(&vec![vec![0.7; 6]; 5]);
        let out = convolve3x3(&img, &GROUND_KERNEL).unwrap();
        for i in 1..4 {
            for j in 1..5 {
                assert!(out.value(i, j).unwrap().abs() < 1e-12);
            }
        }
        assert!(!out.is_valid(0, 2) && !out.is_valid(2, 0) && !out.is_valid(4, 5));
    }

    #[test]
    fn column_step_edge_response() {
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|j| if j < 4 { 0.0 } else { 1.0 }).collect()).collect();
        let img = masked(&rows);
        let out = convolve3x3(&img, &EDGE_KERNEL).unwrap();
        for i in 1..4 {
            for j in 1..7 {
                let expected = naive_tap(&img, &EDGE_KERNEL, i, j).unwrap();
                assert_eq!(out.value(i, j), Some(expected));
                let mag = if j == 3 || j == 4 { 4.0 } else { 0.0 };
                assert_eq!(expected.abs(), mag);
            }
        }
    }

    #[test]
    fn row_step_ground_response() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![if i < 3 { 0.0 } else { 1.0 }; 5]).collect();
        let img = masked(&rows);
        let out = convolve3x3(&img, &GROUND_KERNEL).unwrap();
        for i in 1..5 {
            for j in 1..4 {
                let mag = if i == 2 || i == 3 { 4.0 } else { 0.0 };
                assert_eq!(out.value(i, j).unwrap().abs(), mag);
            }
        }
    }

    #[test]
    fn small_image_rejected() {
        let img = masked(&vec![vec![1.0; 2]; 5]);
        assert!(matches!(
            convolve3x3(&img, &EDGE_KERNEL),
            Err(Error::ImageTooSmall { rows: 5, cols: 2 })
        ));
    }

    #[test]
    fn convolution_matches_naive_taps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let img = random_masked(&mut rng, 32, 64, 0.05);
            for kernel in [&EDGE_KERNEL, &GROUND_KERNEL] {
                let out = convolve3x3(&img, kernel).unwrap();
                for i in 0..32 {
                    for j in 0..64 {
                        assert_eq!(out.value(i, j), naive_tap(&img, kernel, i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn constant_range_is_all_surface() {
        let img = sri_from(&Grid::filled(8, 16, 12.0), |_, _| -2.0);
        let f = segment_sobel(&img, &SobelConfig::default()).unwrap();
        assert_eq!(f.count(FeatureClass::Edge), 0);
        assert_eq!(f.count(FeatureClass::Ground), 0);
        assert_eq!(f.count(FeatureClass::Surface), 8 * 16);
        assert_eq!(f.surface.value(3, 3), Some(12.0));
    }

    #[test]
    fn single_discontinuity_column_is_edge() {
        // Two-step ramp centered on column c: only c sees the full jump across
        // its horizontal neighbors.
        let (m, n, c) = (10, 20, 9);
        let range = Grid::from_fn(m, n, |_, j| match j {
            j if j < c => 10.0,
            j if j == c => 12.0,
            _ => 14.0,
        });
        // Corner outlier sets the span to 40 m: response 0.4 at c, 0.2 beside it.
        let mut range = range;
        range.set(0, 0, 50.0);
        let img = sri_from(&range, |_, _| 0.0);
        let cfg = SobelConfig::default();
        let f = segment_sobel(&img, &cfg).unwrap();

        // Per-pixel threshold oracle.
        let gray = normalize_to_gray(&img).unwrap();
        let gray = MaskedGrid { values: gray.values, valid: gray.valid };
        let mut expected = 0;
        for i in 0..m {
            for j in 0..n {
                if naive_tap(&gray, &EDGE_KERNEL, i, j).is_some_and(|g| g.abs() >= cfg.edge_threshold) {
                    expected += 1;
                    assert_eq!(f.labels.get(i, j), &Some(FeatureClass::Edge));
                }
            }
        }
        // The outlier also fires pixel (1, 1), which the oracle counts too.
        let in_column = (0..m).filter(|&i| f.labels.get(i, c) == &Some(FeatureClass::Edge)).count();
        assert_eq!(in_column, m - 2);
        assert_eq!(f.count(FeatureClass::Edge), expected);
    }

    #[test]
    fn ground_needs_gradient_and_height() {
        // Range grows down the image like rings on a road.
        let range = Grid::from_fn(12, 10, |i, _| 5.0 + 3.0 * i as f64);
        let low = sri_from(&range, |_, _| -1.7);
        let f = segment_sobel(&low, &SobelConfig::default()).unwrap();
        assert_eq!(f.count(FeatureClass::Ground), 10 * 8);
        let high = sri_from(&range, |_, _| 1.0);
        let f = segment_sobel(&high, &SobelConfig::default()).unwrap();
        assert_eq!(f.count(FeatureClass::Ground), 0);
    }

    fn assert_partition(img: &SphericalRangeImage, f: &FeatureImages) {
        for i in 0..img.rows() {
            for j in 0..img.cols() {
                let claims = [&f.edge, &f.ground, &f.surface]
                    .iter()
                    .filter(|g| g.is_valid(i, j))
                    .count();
                assert_eq!(claims, usize::from(img.is_valid(i, j)), "pixel ({i},{j})");
                for g in [&f.edge, &f.ground, &f.surface] {
                    if let Some(r) = g.value(i, j) {
                        assert_eq!(r, *img.range.get(i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn partition_on_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let range = Grid::from_fn(16, 32, |_, _| {
                if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random_range(1.0..60.0) }
            });
            let z = Grid::from_fn(16, 32, |_, _| rng.random_range(-3.0..3.0));
            let img = sri_from(&range, |i, j| *z.get(i, j));
            let cfg = SobelConfig::default();
            let a = segment_sobel(&img, &cfg).unwrap();
            assert_partition(&img, &a);
            let b = segment_frequency(&img, &cfg).unwrap();
            assert_partition(&img, &b);
            // Determinism.
            assert_eq!(a, segment_sobel(&img, &cfg).unwrap());
            assert_eq!(b, segment_frequency(&img, &cfg).unwrap());
        }
    }

    /// Row-mean subtraction over valid pixels.
    fn row_mean_oracle(img: &SphericalRangeImage) -> Grid<f64> {
        Grid::from_fn(img.rows(), img.cols(), |i, j| {
            let vals: Vec<f64> = (0..img.cols())
                .filter(|&k| img.is_valid(i, k))
                .map(|k| *img.range.get(i, k))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            img.range.get(i, j) - mean
        })
    }

    #[test]
    fn fft_filter_equals_row_mean_subtraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let range = Grid::from_fn(32, 64, |_, _| {
                if rng.random::<f64>() < 0.05 { 0.0 } else { rng.random_range(1.0..80.0) }
            });
            let img = sri_from(&range, |_, _| 0.0);
            let out = fft_ground_filter(&img, 0.02).unwrap();
            let oracle = row_mean_oracle(&img);
            let (lo, hi) = img.range_bounds().unwrap();
            for i in 0..32 {
                for j in 0..64 {
                    match out.filtered.value(i, j) {
                        Some(v) => assert!((v - oracle.get(i, j)).abs() <= 1e-6 * (hi - lo)),
                        None => assert!(!img.is_valid(i, j)),
                    }
                }
            }
        }
    }

    #[test]
    fn constant_rows_are_all_ground() {
        let range = Grid::from_fn(8, 16, |i, _| 3.0 + i as f64);
        let img = sri_from(&range, |_, _| -1.0);
        let out = fft_ground_filter(&img, 0.02).unwrap();
        let span = 7.0;
        for i in 0..8 {
            for j in 0..16 {
                assert!(out.filtered.value(i, j).unwrap().abs() <= 1e-6 * span);
                assert!(out.ground.is_valid(i, j));
            }
        }
    }

    #[test]
    fn zero_mean_rows_pass_through() {
        // Ranges are non-negative, so exercise the spectral core on signed data.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = Grid::from_fn(8, 16, |_, _| rng.random_range(-1.0..1.0));
        for i in 0..8 {
            let mean = g.row(i).iter().sum::<f64>() / 16.0;
            for j in 0..16 {
                *g.get_mut(i, j) -= mean;
            }
        }
        let out = spectral_filter(&g, |_, j| if j == 8 { 0.0 } else { 1.0 });
        for (a, b) in out.iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-6 * 2.0);
        }
    }

    #[test]
    fn all_ones_mask_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (m, n) in [(32, 64), (17, 30), (16, 720)] {
            let g = Grid::from_fn(m, n, |_, _| rng.random::<f64>());
            let out = spectral_filter(&g, |_, _| 1.0);
            for (a, b) in out.iter().zip(g.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn odd_width_rejected() {
        let img = sri_from(&Grid::filled(4, 5, 2.0), |_, _| 0.0);
        assert!(matches!(fft_ground_filter(&img, 0.02), Err(Error::OddWidth(5))));
    }

    #[test]
    fn empty_image_rejected() {
        let img = SphericalRangeImage::empty(4, 8);
        assert!(matches!(segment_sobel(&img, &SobelConfig::default()), Err(Error::EmptyImage)));
        assert!(matches!(fft_ground_filter(&img, 0.02), Err(Error::EmptyImage)));
    }
}
