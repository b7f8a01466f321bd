//! Turns a raw grayscale letter into the canonical centered binary form the
//! feature extractor consumes.
//!
//! Stage order: threshold (Otsu unless overridden) -> delete small
//! foreground components -> nearest-neighbour resize to the target canvas ->
//! translate the foreground centroid to the canvas center. Every stage is
//! total; the pipeline reports a per-sample diagnostics record instead of
//! failing on odd inputs.

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryImage, GrayImage};

/// Pipeline configuration. The defaults produce the 44x44 canvas used by the
/// zoning extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub canvas_w: usize,
    pub canvas_h: usize,
    /// Foreground components of at most this many pixels are deleted.
    pub speck_max_area: usize,
    /// Fixed binarization threshold; `None` selects Otsu's method per image.
    pub threshold_override: Option<u8>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            canvas_w: 44,
            canvas_h: 44,
            speck_max_area: 4,
            threshold_override: None,
        }
    }
}

/// Per-sample record of what the pipeline did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessDiagnostics {
    /// Threshold that was applied (chosen by Otsu or taken from the config).
    pub threshold: u8,
    /// Number of small foreground components deleted.
    pub specks_removed: usize,
    /// Foreground pixels pushed off the canvas while centering.
    pub clipped: usize,
}

/// Otsu's threshold: the level maximizing between-class variance over the
/// 256-bin histogram, ties broken toward the smallest level. A single-level
/// image returns that level.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }

    let distinct = hist.iter().filter(|&&c| c > 0).count();
    if distinct <= 1 {
        return img.pixels()[0];
    }

    let total = img.pixels().len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(level, &count)| level as f64 * count as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_variance = f64::NEG_INFINITY;
    let mut weight_dark = 0.0;
    let mut sum_dark = 0.0;
    for t in 0..256usize {
        weight_dark += hist[t] as f64;
        sum_dark += t as f64 * hist[t] as f64;
        let weight_light = total - weight_dark;
        if weight_dark == 0.0 || weight_light == 0.0 {
            continue;
        }
        let mean_dark = sum_dark / weight_dark;
        let mean_light = (total_sum - sum_dark) / weight_light;
        let variance = weight_dark * weight_light * (mean_dark - mean_light).powi(2);
        if variance > best_variance {
            best_variance = variance;
            best_t = t as u8;
        }
    }
    best_t
}

/// Dark-is-ink binarization: pixels at or below `t` become foreground.
pub fn binarize(img: &GrayImage, t: u8) -> BinaryImage {
    let mask = img.pixels().iter().map(|&p| p <= t).collect();
    BinaryImage::new(img.width(), img.height(), mask)
}

/// Deletes every 8-connected foreground component of area `<= max_area`.
/// Returns the cleaned image and the number of components deleted.
pub fn remove_specks(img: &BinaryImage, max_area: usize) -> (BinaryImage, usize) {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    let mut visited = vec![false; w * h];
    let mut removed = 0;
    let mut stack = Vec::new();
    let mut component = Vec::new();

    for start in 0..w * h {
        if !img.mask()[start] || visited[start] {
            continue;
        }
        component.clear();
        stack.push(start);
        visited[start] = true;
        while let Some(idx) = stack.pop() {
            component.push(idx);
            let (x, y) = (idx % w, idx / w);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = ny as usize * w + nx as usize;
                    if img.mask()[nidx] && !visited[nidx] {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        if component.len() <= max_area {
            for &idx in &component {
                out.set(idx % w, idx / w, false);
            }
            removed += 1;
        }
    }
    (out, removed)
}

fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Translates the image so its foreground centroid lands on the canvas
/// center `(w/2, h/2)`. Foreground pixels pushed outside the canvas are
/// dropped; the second value counts them. An all-background image is
/// returned unchanged.
pub fn centralize(img: &BinaryImage) -> (BinaryImage, usize) {
    let (w, h) = (img.width(), img.height());
    let mut sum_x = 0u64;
    let mut sum_y = 0u64;
    let mut count = 0u64;
    for y in 0..h {
        for x in 0..w {
            if img.get(x, y) {
                sum_x += x as u64;
                sum_y += y as u64;
                count += 1;
            }
        }
    }
    if count == 0 {
        return (img.clone(), 0);
    }

    let cx = round_half_up(sum_x as f64 / count as f64);
    let cy = round_half_up(sum_y as f64 / count as f64);
    let dx = (w / 2) as i64 - cx;
    let dy = (h / 2) as i64 - cy;

    let mut out = BinaryImage::blank(w, h);
    let mut clipped = 0;
    for y in 0..h {
        for x in 0..w {
            if !img.get(x, y) {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                clipped += 1;
            } else {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    (out, clipped)
}

/// Nearest-neighbour resample: output pixel `(x, y)` copies input pixel
/// `(x * in_w / w, y * in_h / h)` (floor division).
pub fn resize_nearest(img: &BinaryImage, w: usize, h: usize) -> BinaryImage {
    assert!(w >= 1 && h >= 1, "target dimensions must be >= 1");
    let (in_w, in_h) = (img.width(), img.height());
    let mut out = BinaryImage::blank(w, h);
    for y in 0..h {
        let sy = y * in_h / h;
        for x in 0..w {
            let sx = x * in_w / w;
            if img.get(sx, sy) {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Full pipeline: binarize, clean specks, resize to the canvas, centralize.
///
/// A single-level image (a blank page) has no ink/paper separation; under
/// the automatic threshold it comes out all-background rather than letting
/// Otsu's degenerate level swallow the whole canvas as ink. An explicit
/// `threshold_override` is applied verbatim.
pub fn preprocess_pipeline(
    img: &GrayImage,
    cfg: &PreprocessConfig,
) -> (BinaryImage, PreprocessDiagnostics) {
    let threshold = cfg.threshold_override.unwrap_or_else(|| otsu_threshold(img));
    let single_level = img.pixels().iter().all(|&p| p == img.pixels()[0]);
    let binary = if cfg.threshold_override.is_none() && single_level {
        BinaryImage::blank(img.width(), img.height())
    } else {
        binarize(img, threshold)
    };
    let (cleaned, specks_removed) = remove_specks(&binary, cfg.speck_max_area);
    let resized = resize_nearest(&cleaned, cfg.canvas_w, cfg.canvas_h);
    let (centered, clipped) = centralize(&resized);
    (
        centered,
        PreprocessDiagnostics {
            threshold,
            specks_removed,
            clipped,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, px: Vec<u8>) -> GrayImage {
        GrayImage::new(w, h, px)
    }

    fn binary_from_str(rows: &[&str]) -> BinaryImage {
        let h = rows.len();
        let w = rows[0].len();
        let mask = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryImage::new(w, h, mask)
    }

    /// Exhaustive-sweep oracle: recompute between-class variance per level
    /// from raw pixel lists, keep the smallest argmax.
    fn otsu_oracle(img: &GrayImage) -> u8 {
        let pixels = img.pixels();
        let distinct: std::collections::BTreeSet<u8> = pixels.iter().copied().collect();
        if distinct.len() <= 1 {
            return pixels[0];
        }
        let mut best = (f64::NEG_INFINITY, 0u8);
        for t in 0..=255u8 {
            let dark: Vec<f64> = pixels.iter().filter(|&&p| p <= t).map(|&p| p as f64).collect();
            let light: Vec<f64> = pixels.iter().filter(|&&p| p > t).map(|&p| p as f64).collect();
            if dark.is_empty() || light.is_empty() {
                continue;
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let variance =
                dark.len() as f64 * light.len() as f64 * (mean(&dark) - mean(&light)).powi(2);
            if variance > best.0 {
                best = (variance, t);
            }
        }
        best.1
    }

    #[test]
    fn otsu_degenerate_single_level() {
        assert_eq!(otsu_threshold(&gray(2, 2, vec![128; 4])), 128);
        assert_eq!(otsu_threshold(&gray(1, 1, vec![0])), 0);
    }

    #[test]
    fn otsu_two_level_image_matches_sweep_oracle() {
        let mut px = vec![50u8; 10];
        px.extend(vec![200u8; 10]);
        let img = gray(4, 5, px);
        let t = otsu_threshold(&img);
        assert_eq!(t, otsu_oracle(&img));
        assert!((50..200).contains(&t));
        // Smallest-tie rule puts the threshold at the dark level itself.
        assert_eq!(t, 50);
    }

    proptest! {
        #[test]
        fn otsu_separates_any_two_level_image(
            a in 0u8..255,
            gap in 1u8..=100,
            n_dark in 1usize..12,
            n_light in 1usize..12,
        ) {
            let b = a.saturating_add(gap).max(a + 1);
            let mut px = vec![a; n_dark];
            px.extend(vec![b; n_light]);
            let img = gray(px.len(), 1, px);
            let t = otsu_threshold(&img);
            prop_assert_eq!(t, otsu_oracle(&img));
            prop_assert!(a <= t && t < b);
        }

        #[test]
        fn otsu_matches_oracle_on_random_images(seed in any::<u64>()) {
            let mut state = seed;
            let px: Vec<u8> = (0..48)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    (state & 0xFF) as u8
                })
                .collect();
            let img = gray(8, 6, px);
            prop_assert_eq!(otsu_threshold(&img), otsu_oracle(&img));
        }

        #[test]
        fn binarize_foreground_grows_with_threshold(t1 in 0u8..255, seed in any::<u64>()) {
            let t2 = t1 + 1;
            let mut state = seed;
            let px: Vec<u8> = (0..36)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    (state & 0xFF) as u8
                })
                .collect();
            let img = gray(6, 6, px);
            let fg1 = binarize(&img, t1).foreground_count();
            let fg2 = binarize(&img, t2).foreground_count();
            prop_assert!(fg1 <= fg2);
        }
    }

    #[test]
    fn binarize_polarity_and_boundaries() {
        let img = gray(2, 1, vec![0, 255]);
        assert_eq!(binarize(&img, 127).mask(), &[true, false]);
        assert_eq!(binarize(&img, 255).mask(), &[true, true]);
        let white = gray(2, 1, vec![255, 255]);
        assert_eq!(binarize(&white, 0).mask(), &[false, false]);
    }

    #[test]
    fn single_pixel_speck_is_removed() {
        let mut img = BinaryImage::blank(8, 8);
        img.set(3, 3, true);
        let (out, removed) = remove_specks(&img, 4);
        assert_eq!(out.foreground_count(), 0);
        assert_eq!(removed, 1);
    }

    #[test]
    fn solid_block_survives() {
        let img = binary_from_str(&["###", "###", "###"]);
        let (out, removed) = remove_specks(&img, 4);
        assert_eq!(out, img);
        assert_eq!(removed, 0);
    }

    #[test]
    fn mixed_components_filtered_by_area() {
        // Components of area 2 and 20; only the large one survives.
        let img = binary_from_str(&[
            "##........",
            "..........",
            "....######",
            "....######",
            "....######",
            "....##....",
        ]);
        let (out, removed) = remove_specks(&img, 4);
        assert_eq!(removed, 1);
        assert_eq!(out.foreground_count(), 20);
        assert!(!out.get(0, 0) && !out.get(1, 0));
        assert!(out.get(4, 2));
    }

    #[test]
    fn diagonal_pixels_are_one_component() {
        let img = binary_from_str(&["#...", ".#..", "..#.", "...#"]);
        // 8-connectivity: the diagonal is a single area-4 component.
        let (out, removed) = remove_specks(&img, 4);
        assert_eq!(out.foreground_count(), 0);
        assert_eq!(removed, 1);
        let (kept, removed) = remove_specks(&img, 3);
        assert_eq!(kept, img);
        assert_eq!(removed, 0);
    }

    /// Independent component labeling (BFS over an explicit queue) giving
    /// the 8-connected component size at every foreground pixel.
    fn component_sizes(img: &BinaryImage) -> Vec<usize> {
        let (w, h) = (img.width(), img.height());
        let mut label = vec![usize::MAX; w * h];
        let mut sizes = Vec::new();
        for start in 0..w * h {
            if !img.mask()[start] || label[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut queue = std::collections::VecDeque::from([start]);
            label[start] = id;
            let mut size = 0;
            while let Some(idx) = queue.pop_front() {
                size += 1;
                let (x, y) = ((idx % w) as i64, (idx / w) as i64);
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let nidx = (ny * w as i64 + nx) as usize;
                        if img.mask()[nidx] && label[nidx] == usize::MAX {
                            label[nidx] = id;
                            queue.push_back(nidx);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        (0..w * h)
            .map(|i| if label[i] == usize::MAX { 0 } else { sizes[label[i]] })
            .collect()
    }

    proptest! {
        #[test]
        fn remove_specks_idempotent_and_non_increasing(seed in any::<u64>(), max_area in 0usize..6) {
            let mut state = seed;
            let mask: Vec<bool> = (0..100)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    state & 3 == 0
                })
                .collect();
            let img = BinaryImage::new(10, 10, mask);
            let (once, _) = remove_specks(&img, max_area);
            let (twice, removed_again) = remove_specks(&once, max_area);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(removed_again, 0);
            prop_assert!(once.foreground_count() <= img.foreground_count());
        }

        #[test]
        fn remove_specks_matches_labeling_oracle_pixel_exactly(
            seed in any::<u64>(),
            max_area in 0usize..8,
        ) {
            let mut state = seed;
            let mask: Vec<bool> = (0..144)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    state & 3 == 0
                })
                .collect();
            let img = BinaryImage::new(12, 12, mask);
            let sizes = component_sizes(&img);
            let (out, _) = remove_specks(&img, max_area);
            for i in 0..144 {
                let expected = img.mask()[i] && sizes[i] > max_area;
                prop_assert_eq!(out.mask()[i], expected, "pixel {}", i);
            }
        }
    }

    #[test]
    fn centralize_moves_corner_pixel_to_center() {
        let mut img = BinaryImage::blank(44, 44);
        img.set(0, 0, true);
        let (out, clipped) = centralize(&img);
        assert_eq!(clipped, 0);
        assert_eq!(out.foreground_count(), 1);
        assert!(out.get(22, 22));
    }

    #[test]
    fn centralize_fixes_centered_blob() {
        let mut img = BinaryImage::blank(9, 9);
        for y in 3..=5 {
            for x in 3..=5 {
                img.set(x, y, true);
            }
        }
        let (out, clipped) = centralize(&img);
        assert_eq!(out, img);
        assert_eq!(clipped, 0);
    }

    #[test]
    fn centralize_matches_centroid_oracle_on_l_shape() {
        // L-shaped blob: pixels (1,1), (1,2), (1,3), (2,3), (3,3) on 11x11.
        let coords = [(1, 1), (1, 2), (1, 3), (2, 3), (3, 3)];
        let mut img = BinaryImage::blank(11, 11);
        for &(x, y) in &coords {
            img.set(x, y, true);
        }
        // Direct-summation oracle for the expected translation.
        let cx = (coords.iter().map(|c| c.0 as f64).sum::<f64>() / 5.0 + 0.5).floor() as i64;
        let cy = (coords.iter().map(|c| c.1 as f64).sum::<f64>() / 5.0 + 0.5).floor() as i64;
        let (dx, dy) = (5 - cx, 5 - cy);
        assert_eq!((dx, dy), (3, 3));

        let (out, clipped) = centralize(&img);
        assert_eq!(clipped, 0);
        for &(x, y) in &coords {
            assert!(out.get((x as i64 + dx) as usize, (y as i64 + dy) as usize));
        }
        assert_eq!(out.foreground_count(), 5);
    }

    #[test]
    fn centralize_half_up_rounding_shifts_off_center_pair() {
        let mut img = BinaryImage::blank(4, 1);
        img.set(2, 0, true);
        img.set(3, 0, true);
        // centroid 2.5 rounds half-up to 3; translation 2 - 3 = -1.
        let (out, clipped) = centralize(&img);
        assert_eq!(clipped, 0);
        assert!(out.get(1, 0) && out.get(2, 0));
        assert_eq!(out.foreground_count(), 2);
    }

    #[test]
    fn centralize_clips_and_counts_pixels_pushed_off_canvas() {
        // Top row full plus one pixel at (3,3): centroid (1.8, 0.6) rounds to
        // (2, 1), translation (0, +1), so (3,3) leaves the 4x4 canvas.
        let img = binary_from_str(&["####", "....", "....", "...#"]);
        let (out, clipped) = centralize(&img);
        assert_eq!(clipped, 1);
        assert_eq!(out.foreground_count(), 4);
        for x in 0..4 {
            assert!(out.get(x, 1));
        }
    }

    #[test]
    fn resize_identity_when_shape_matches() {
        let img = binary_from_str(&["#.", ".#"]);
        assert_eq!(resize_nearest(&img, 2, 2), img);
    }

    #[test]
    fn resize_upscales_checkerboard_into_blocks() {
        let img = binary_from_str(&["#.", ".#"]);
        let out = resize_nearest(&img, 4, 4);
        let expected = binary_from_str(&["##..", "##..", "..##", "..##"]);
        assert_eq!(out, expected);
    }

    proptest! {
        #[test]
        fn resize_matches_index_formula(seed in any::<u64>()) {
            let mut state = seed;
            let mask: Vec<bool> = (0..64 * 64)
                .map(|_| {
                    state = crate::rng::splitmix64(state);
                    state & 1 == 0
                })
                .collect();
            let img = BinaryImage::new(64, 64, mask);
            let out = resize_nearest(&img, 44, 44);
            for y in 0..44 {
                for x in 0..44 {
                    prop_assert_eq!(out.get(x, y), img.get(x * 64 / 44, y * 64 / 44));
                }
            }
        }
    }

    #[test]
    fn pipeline_on_blank_page_is_blank_canvas() {
        let img = gray(64, 64, vec![255; 64 * 64]);
        let (out, diag) = preprocess_pipeline(&img, &PreprocessConfig::default());
        assert_eq!((out.width(), out.height()), (44, 44));
        assert_eq!(out.foreground_count(), 0);
        assert_eq!(diag.clipped, 0);
    }

    #[test]
    fn pipeline_output_shape_is_always_canvas() {
        let img = gray(3, 5, vec![10; 15]);
        let (out, _) = preprocess_pipeline(&img, &PreprocessConfig::default());
        assert_eq!((out.width(), out.height()), (44, 44));
    }

    #[test]
    fn pipeline_matches_stage_by_stage_composition() {
        // Synthetic glyph: a bar plus two 1-pixel specks on a 64x64 page.
        let mut px = vec![235u8; 64 * 64];
        for y in 20..40 {
            for x in 28..34 {
                px[y * 64 + x] = 30;
            }
        }
        px[5 * 64 + 5] = 30;
        px[60 * 64 + 50] = 30;
        let img = gray(64, 64, px);
        let cfg = PreprocessConfig::default();

        let (out, diag) = preprocess_pipeline(&img, &cfg);

        let t = otsu_threshold(&img);
        let (cleaned, specks) = remove_specks(&binarize(&img, t), cfg.speck_max_area);
        let resized = resize_nearest(&cleaned, 44, 44);
        let (expected, clipped) = centralize(&resized);

        assert_eq!(out, expected);
        assert_eq!(diag.threshold, t);
        assert_eq!(diag.specks_removed, specks);
        assert_eq!(specks, 2);
        assert_eq!(diag.clipped, clipped);
        assert!(out.foreground_count() > 0);
    }

    #[test]
    fn pipeline_honours_threshold_override() {
        let img = gray(2, 1, vec![100, 200]);
        let cfg = PreprocessConfig {
            canvas_w: 2,
            canvas_h: 1,
            speck_max_area: 0,
            threshold_override: Some(250),
        };
        let (out, diag) = preprocess_pipeline(&img, &cfg);
        assert_eq!(diag.threshold, 250);
        assert_eq!(out.foreground_count(), 2);
    }

    proptest! {
        #[test]
        fn centralize_recenters_within_one_pixel(seed in any::<u64>()) {
            let mut state = seed;
            let mut img = BinaryImage::blank(44, 44);
            // Small random blob well inside the canvas so nothing clips.
            for _ in 0..30 {
                state = crate::rng::splitmix64(state);
                let x = 10 + (state % 12) as usize;
                let y = 10 + ((state >> 16) % 12) as usize;
                img.set(x, y, true);
            }
            let (out, clipped) = centralize(&img);
            prop_assert_eq!(clipped, 0);
            let mut sx = 0f64;
            let mut sy = 0f64;
            let mut n = 0f64;
            for y in 0..44 {
                for x in 0..44 {
                    if out.get(x, y) {
                        sx += x as f64;
                        sy += y as f64;
                        n += 1.0;
                    }
                }
            }
            prop_assert!((sx / n - 22.0).abs() <= 1.0);
            prop_assert!((sy / n - 22.0).abs() <= 1.0);
        }
    }
}
