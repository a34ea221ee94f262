//! Raster types and the preprocessing primitives the tracker runs on every
//! frame: block downsampling, isodata thresholding, dark-foreground
//! segmentation, 8-connected region labeling and Sobel gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Rect;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be non-zero, got {width}x{height}")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("{width}x{height} is not divisible by downsampling factor {factor}")]
    NonDivisibleDimensions { width: usize, height: usize, factor: usize },
    #[error("image of {width}x{height} is too small (need at least 3x3)")]
    ImageTooSmall { width: usize, height: usize },
}

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    /// Uniform image. Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("non-zero dimensions")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("non-zero dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width - 1, self.height - 1)
    }

    /// Copy of the pixels inside `rect` (which must lie inside the image).
    pub fn crop(&self, rect: &Rect) -> GrayImage {
        GrayImage::from_fn(rect.width(), rect.height(), |x, y| {
            self.get(rect.x_min + x, rect.y_min + y)
        })
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &p in &self.pixels {
            hist[p as usize] += 1;
        }
        hist
    }
}

/// Segmentation mask; `true` marks dark foreground (iris, eyebrow, lashes).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage { width, height });
        }
        if mask.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                actual: mask.len(),
            });
        }
        Ok(Self { width, height, mask })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// A connected foreground blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: u32,
    pub pixel_count: usize,
    pub bounding_box: Rect,
    pub centroid: (f64, f64),
}

/// Sobel response. `gx`/`gy` are the raw kernel sums.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<i32>,
    pub gy: Vec<i32>,
    pub magnitude: Vec<f64>,
}

impl GradientMap {
    #[inline]
    pub fn magnitude_at(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }
}

/// Block-average downsampling, rounding half up.
pub fn downsample(img: &GrayImage, factor: usize) -> Result<GrayImage, ImageError> {
    if factor == 0 || !img.width.is_multiple_of(factor) || !img.height.is_multiple_of(factor) {
        return Err(ImageError::NonDivisibleDimensions {
            width: img.width,
            height: img.height,
            factor,
        });
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (ow, oh) = (img.width / factor, img.height / factor);
    let mut sums = vec![0u32; ow * oh];
    for y in 0..img.height {
        let row = &img.pixels[y * img.width..(y + 1) * img.width];
        let out_row = &mut sums[(y / factor) * ow..(y / factor + 1) * ow];
        for (bx, chunk) in row.chunks_exact(factor).enumerate() {
            out_row[bx] += chunk.iter().map(|&p| p as u32).sum::<u32>();
        }
    }
    let n = (factor * factor) as u32;
    let pixels = sums.into_iter().map(|s| ((s + n / 2) / n) as u8).collect();
    GrayImage::new(ow, oh, pixels)
}

fn class_midpoint(hist: &[u64; 256], t: usize, global_mean: f64) -> f64 {
    let (mut n_lo, mut s_lo, mut n_hi, mut s_hi) = (0u64, 0u64, 0u64, 0u64);
    for (v, &c) in hist.iter().enumerate() {
        if v <= t {
            n_lo += c;
            s_lo += c * v as u64;
        } else {
            n_hi += c;
            s_hi += c * v as u64;
        }
    }
    match (n_lo, n_hi) {
        (0, 0) => global_mean,
        (0, _) => s_hi as f64 / n_hi as f64,
        (_, 0) => s_lo as f64 / n_lo as f64,
        _ => (s_lo as f64 / n_lo as f64 + s_hi as f64 / n_hi as f64) / 2.0,
    }
}

/// Isodata (Ridler-Calvard) threshold of a histogram.
///
/// Pixels are integers, so the class split only depends on `floor(T)`; the
/// iteration therefore runs on integer thresholds, starting from the floor of
/// the global mean and stopping once the threshold no longer moves (or after
/// 100 rounds). When one class is empty the other class mean is used, so a
/// single-intensity image returns that intensity.
pub fn isodata_threshold_histogram(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0;
    }
    let sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let mean = sum as f64 / total as f64;
    let mut t = mean.floor() as usize;
    for _ in 0..100 {
        let next = class_midpoint(hist, t, mean).floor() as usize;
        if next == t {
            break;
        }
        t = next;
    }
    t.min(255) as u8
}

pub fn isodata_threshold(img: &GrayImage) -> u8 {
    isodata_threshold_histogram(&img.histogram())
}

/// Isodata threshold restricted to the pixels inside `rect`.
pub fn isodata_threshold_in(img: &GrayImage, rect: &Rect) -> u8 {
    let mut hist = [0u64; 256];
    for y in rect.y_min..=rect.y_max {
        for x in rect.x_min..=rect.x_max {
            hist[img.get(x, y) as usize] += 1;
        }
    }
    isodata_threshold_histogram(&hist)
}

/// Dark-foreground segmentation: `true` where pixel <= threshold.
pub fn segment(img: &GrayImage, threshold: u8) -> BinaryImage {
    BinaryImage {
        width: img.width,
        height: img.height,
        mask: img.pixels.iter().map(|&p| p <= threshold).collect(),
    }
}

/// 8-connected labeling of the foreground. Regions come back largest first;
/// equal sizes are ordered by top edge, then left edge.
pub fn connected_components(bin: &BinaryImage) -> Vec<Region> {
    let (w, h) = (bin.width, bin.height);
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut regions = Vec::new();

    for start in 0..w * h {
        if !bin.mask[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut count, mut sx, mut sy) = (0usize, 0usize, 0usize);
        let mut bbox = Rect::new(usize::MAX, usize::MAX, 0, 0);
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            count += 1;
            sx += x;
            sy += y;
            bbox.x_min = bbox.x_min.min(x);
            bbox.y_min = bbox.y_min.min(y);
            bbox.x_max = bbox.x_max.max(x);
            bbox.y_max = bbox.y_max.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let n = ny * w + nx;
                    if bin.mask[n] && !visited[n] {
                        visited[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        regions.push(Region {
            label: 0,
            pixel_count: count,
            bounding_box: bbox,
            centroid: (sx as f64 / count as f64, sy as f64 / count as f64),
        });
    }

    regions.sort_by(|a, b| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then(a.bounding_box.y_min.cmp(&b.bounding_box.y_min))
            .then(a.bounding_box.x_min.cmp(&b.bounding_box.x_min))
    });
    for (i, r) in regions.iter_mut().enumerate() {
        r.label = i as u32 + 1;
    }
    regions
}

/// Full-image Sobel gradients; the one-pixel border is left at zero.
pub fn sobel(img: &GrayImage) -> Result<GradientMap, ImageError> {
    if img.width < 3 || img.height < 3 {
        return Err(ImageError::ImageTooSmall {
            width: img.width,
            height: img.height,
        });
    }
    Ok(sobel_region(img, &img.bounds()))
}

/// Sobel gradients for the pixels of `rect` only (output is `rect`-sized).
/// Pixels on the image border get zero gradient, exactly as in [`sobel`].
pub fn sobel_region(img: &GrayImage, rect: &Rect) -> GradientMap {
    let (w, h) = (rect.width(), rect.height());
    let mut gx = vec![0i32; w * h];
    let mut gy = vec![0i32; w * h];
    let mut magnitude = vec![0f64; w * h];
    for y in rect.y_min..=rect.y_max {
        if y == 0 || y + 1 >= img.height {
            continue;
        }
        for x in rect.x_min..=rect.x_max {
            if x == 0 || x + 1 >= img.width {
                continue;
            }
            let p = |dx: isize, dy: isize| img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i32;
            let sx = (p(1, -1) - p(-1, -1)) + 2 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
            let sy = (p(-1, 1) - p(-1, -1)) + 2 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
            let i = (y - rect.y_min) * w + (x - rect.x_min);
            gx[i] = sx;
            gy[i] = sy;
            magnitude[i] = (sx as f64).hypot(sy as f64);
        }
    }
    GradientMap {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: usize, h: usize, px: &[u8]) -> GrayImage {
        GrayImage::new(w, h, px.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            GrayImage::new(2, 2, vec![0; 3]),
            Err(ImageError::BufferSize { .. })
        ));
        assert!(matches!(
            GrayImage::new(0, 2, vec![]),
            Err(ImageError::EmptyImage { .. })
        ));
    }

    #[test]
    fn downsample_vga_to_80x60() {
        let out = downsample(&GrayImage::filled(640, 480, 100), 8).unwrap();
        assert_eq!((out.width(), out.height()), (80, 60));
        assert!(out.pixels().iter().all(|&p| p == 100));
    }

    #[test]
    fn downsample_rounds_half_up() {
        let out = downsample(&img(2, 2, &[0, 255, 255, 0]), 2).unwrap();
        assert_eq!(out.pixels(), &[128]);
    }

    #[test]
    fn downsample_rejects_non_divisible() {
        assert_eq!(
            downsample(&GrayImage::filled(10, 8, 0), 4),
            Err(ImageError::NonDivisibleDimensions {
                width: 10,
                height: 8,
                factor: 4
            })
        );
    }

    #[test]
    fn isodata_two_level() {
        let mut px = vec![50u8; 10];
        px.extend(std::iter::repeat_n(200u8, 10));
        assert_eq!(isodata_threshold(&img(20, 1, &px)), 125);
    }

    #[test]
    fn isodata_uniform() {
        assert_eq!(isodata_threshold(&GrayImage::filled(7, 3, 100)), 100);
    }

    #[test]
    fn segment_examples() {
        assert!(segment(&GrayImage::filled(3, 3, 0), 10).mask().iter().all(|&m| m));
        assert!(segment(&GrayImage::filled(3, 3, 255), 10).mask().iter().all(|&m| !m));
        assert_eq!(segment(&img(3, 1, &[5, 200, 10]), 100).mask(), &[true, false, true]);
    }

    fn mask_from(rows: &[&str]) -> BinaryImage {
        let w = rows[0].len();
        let mask = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        BinaryImage::new(w, rows.len(), mask).unwrap()
    }

    #[test]
    fn components_empty() {
        assert!(connected_components(&mask_from(&["....", "...."])).is_empty());
    }

    #[test]
    fn components_two_blocks() {
        let regions = connected_components(&mask_from(&["###....", "###....", "###.###", "....###", "....###"]));
        assert_eq!(regions.len(), 2);
        assert!(regions.iter().all(|r| r.pixel_count == 9));
        // equal sizes: upper block first
        assert_eq!(regions[0].bounding_box, Rect::new(0, 0, 2, 2));
        assert_eq!(regions[1].centroid, (5.0, 3.0));
    }

    #[test]
    fn components_diagonal_touch_is_connected() {
        let regions = connected_components(&mask_from(&["#...", ".#..", ".##.", "...#"]));
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].pixel_count, 5);
    }

    #[test]
    fn sobel_constant_is_zero() {
        let g = sobel(&GrayImage::filled(6, 5, 77)).unwrap();
        assert!(g.gx.iter().chain(g.gy.iter()).all(|&v| v == 0));
    }

    #[test]
    fn sobel_vertical_step() {
        // columns 0..=2 are 0, 3..=5 are 255: step between c=2 and c+1=3
        let im = GrayImage::from_fn(6, 5, |x, _| if x <= 2 { 0 } else { 255 });
        let g = sobel(&im).unwrap();
        for y in 1..4 {
            assert_eq!(g.gx[y * 6 + 2], 1020);
            assert_eq!(g.gx[y * 6 + 3], 1020);
            assert_eq!(g.gx[y * 6 + 1], 0);
            assert!((1..5).all(|x| g.gy[y * 6 + x] == 0));
        }
        // border stays zero
        assert_eq!(g.gx[2], 0);
    }

    #[test]
    fn sobel_horizontal_step() {
        let im = GrayImage::from_fn(5, 6, |_, y| if y <= 2 { 0 } else { 255 });
        let g = sobel(&im).unwrap();
        assert!(g.gx.iter().all(|&v| v == 0));
        assert_eq!(g.gy[2 * 5 + 2], 1020);
    }

    #[test]
    fn sobel_too_small() {
        assert!(matches!(
            sobel(&GrayImage::filled(2, 9, 0)),
            Err(ImageError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn sobel_region_matches_full() {
        let im = GrayImage::from_fn(12, 9, |x, y| ((x * 31 + y * 17) % 256) as u8);
        let full = sobel(&im).unwrap();
        let r = Rect::new(0, 2, 7, 8);
        let part = sobel_region(&im, &r);
        for y in r.y_min..=r.y_max {
            for x in r.x_min..=r.x_max {
                let i = (y - r.y_min) * r.width() + (x - r.x_min);
                assert_eq!(part.gx[i], full.gx[y * 12 + x]);
                assert_eq!(part.gy[i], full.gy[y * 12 + x]);
            }
        }
    }

    fn arb_image() -> impl Strategy<Value = GrayImage> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn isodata_within_range(im in arb_image()) {
            let t = isodata_threshold(&im);
            let lo = *im.pixels().iter().min().unwrap();
            let hi = *im.pixels().iter().max().unwrap();
            prop_assert!(lo <= t && t <= hi);
        }

        #[test]
        fn components_partition_foreground(im in arb_image(), t in any::<u8>()) {
            let bin = segment(&im, t);
            let regions = connected_components(&bin);
            let total: usize = regions.iter().map(|r| r.pixel_count).sum();
            prop_assert_eq!(total, bin.count());
            for r in &regions {
                prop_assert!(r.pixel_count >= 1);
                let (cx, cy) = r.centroid;
                prop_assert!(cx >= r.bounding_box.x_min as f64 && cx <= r.bounding_box.x_max as f64);
                prop_assert!(cy >= r.bounding_box.y_min as f64 && cy <= r.bounding_box.y_max as f64);
            }
            for pair in regions.windows(2) {
                prop_assert!(pair[0].pixel_count >= pair[1].pixel_count);
            }
        }

        #[test]
        fn segment_monotone(im in arb_image(), t1 in any::<u8>(), t2 in any::<u8>()) {
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let a = segment(&im, lo);
            let b = segment(&im, hi);
            prop_assert!(a.mask().iter().zip(b.mask()).all(|(&x, &y)| !x || y));
        }

        #[test]
        fn sobel_ignores_offset(w in 3usize..10, h in 3usize..10, seed in any::<u64>(), off in 0u8..60) {
            let im = GrayImage::from_fn(w, h, |x, y| {
                ((seed.wrapping_mul(6364136223846793005).wrapping_add((x * 131 + y * 7) as u64) >> 33) % 190) as u8
            });
            let shifted = GrayImage::from_fn(w, h, |x, y| im.get(x, y) + off);
            let a = sobel(&im).unwrap();
            let b = sobel(&shifted).unwrap();
            prop_assert_eq!(a.gx, b.gx);
            prop_assert_eq!(a.gy, b.gy);
        }

        #[test]
        fn downsample_preserves_mean(k in 1usize..5, bw in 1usize..6, bh in 1usize..6, seed in any::<u32>()) {
            let (w, h) = (bw * k, bh * k);
            let im = GrayImage::from_fn(w, h, |x, y| {
                (seed.wrapping_mul(2654435761).wrapping_add((x * 97 + y * 13) as u32).rotate_left(7) % 256) as u8
            });
            let small = downsample(&im, k).unwrap();
            // each block differs from its exact mean by at most the rounding bound
            for by in 0..bh {
                for bx in 0..bw {
                    let mut s = 0u32;
                    for y in 0..k { for x in 0..k { s += im.get(bx * k + x, by * k + y) as u32; } }
                    let exact = s as f64 / (k * k) as f64;
                    prop_assert!((small.get(bx, by) as f64 - exact).abs() <= 0.5);
                }
            }
        }
    }
}
