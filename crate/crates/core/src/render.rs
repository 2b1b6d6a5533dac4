//! Heatmap rendering of a field to an RGB image, with an optional white
//! overlay for the tumour boundary.

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Palette {
    Viridis,
    Gray,
}

impl std::str::FromStr for Palette {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "viridis" => Ok(Palette::Viridis),
            "gray" | "grey" => Ok(Palette::Gray),
            other => Err(format!("unknown palette {other:?}, expected viridis or gray")),
        }
    }
}

const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

fn colour(palette: Palette, t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    match palette {
        Palette::Gray => {
            let g = (t * 255.0).round() as u8;
            Rgb([g, g, g])
        }
        Palette::Viridis => {
            let pos = t * (VIRIDIS.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(VIRIDIS.len() - 1);
            let frac = pos - lo as f64;
            let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * frac).round() as u8;
            Rgb([
                mix(VIRIDIS[lo][0], VIRIDIS[hi][0]),
                mix(VIRIDIS[lo][1], VIRIDIS[hi][1]),
                mix(VIRIDIS[lo][2], VIRIDIS[hi][2]),
            ])
        }
    }
}

/// Renders an n-by-n field, one `upscale`-pixel square per node, the first
/// grid row at the bottom. Values map linearly from the data range onto the
/// palette; a flat field lands mid-palette. Nodes listed in `boundary`
/// paint white.
pub fn render_heatmap(
    values: &[f64],
    n: usize,
    palette: Palette,
    upscale: usize,
    boundary: Option<&[usize]>,
) -> Result<RgbImage> {
    if values.len() != n * n {
        return Err(Error::Grid(format!(
            "image expects {} values for side {n}, got {}",
            n * n,
            values.len()
        )));
    }
    if upscale == 0 {
        return Err(Error::Grid("upscale factor must be at least 1".into()));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::Grid("cannot render non-finite values".into()));
        }
        min = min.min(v);
        max = max.max(v);
    }
    let span = max - min;

    let mut white = vec![false; n * n];
    if let Some(edge) = boundary {
        for &k in edge {
            if k >= n * n {
                return Err(Error::Grid(format!("boundary node {k} is off the grid")));
            }
            white[k] = true;
        }
    }

    let side = (n * upscale) as u32;
    let mut img = RgbImage::new(side, side);
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let px = if white[k] {
                Rgb([255, 255, 255])
            } else {
                let t = if span > 0.0 { (values[k] - min) / span } else { 0.5 };
                colour(palette, t)
            };
            for dy in 0..upscale {
                for dx in 0..upscale {
                    let x = (i * upscale + dx) as u32;
                    let y = ((n - 1 - j) * upscale + dy) as u32;
                    img.put_pixel(x, y, px);
                }
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_values_get_distinct_colours() {
        let values = [0.0, 1.0, 2.0, 3.0];
        let img = render_heatmap(&values, 2, Palette::Viridis, 1, None).unwrap();
        let px: Vec<_> = img.pixels().collect();
        assert_eq!(px.len(), 4);
        for a in 0..4 {
            for b in a + 1..4 {
                assert_ne!(px[a], px[b], "{a} vs {b}");
            }
        }
        // Row flip: value 0 sits at node (0, 0), drawn bottom-left; the
        // brightest value 3 at node (1, 1), drawn top-right.
        assert_eq!(*img.get_pixel(0, 1), colour(Palette::Viridis, 0.0));
        assert_eq!(*img.get_pixel(1, 0), colour(Palette::Viridis, 1.0));
    }

    #[test]
    fn flat_fields_render_mid_palette() {
        let values = [0.7; 9];
        let img = render_heatmap(&values, 3, Palette::Gray, 2, None).unwrap();
        assert_eq!(img.dimensions(), (6, 6));
        let mid = (0.5f64 * 255.0).round() as u8;
        for p in img.pixels() {
            assert_eq!(*p, Rgb([mid, mid, mid]));
        }
    }

    #[test]
    fn boundary_nodes_paint_white() {
        let values = [0.0, 0.25, 0.5, 0.75];
        let img = render_heatmap(&values, 2, Palette::Viridis, 3, Some(&[2])).unwrap();
        // Node (0, 1) occupies the top-left 3x3 block.
        for dy in 0..3 {
            for dx in 0..3 {
                assert_eq!(*img.get_pixel(dx, dy), Rgb([255, 255, 255]));
            }
        }
        assert_ne!(*img.get_pixel(3, 0), Rgb([255, 255, 255]));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(render_heatmap(&[0.0; 3], 2, Palette::Gray, 1, None).is_err());
        assert!(render_heatmap(&[0.0; 4], 2, Palette::Gray, 0, None).is_err());
        assert!(render_heatmap(&[f64::NAN; 4], 2, Palette::Gray, 1, None).is_err());
        assert!(render_heatmap(&[0.0; 4], 2, Palette::Gray, 1, Some(&[9])).is_err());
        assert_eq!("viridis".parse::<Palette>().unwrap(), Palette::Viridis);
        assert!("sepia".parse::<Palette>().is_err());
    }
}
