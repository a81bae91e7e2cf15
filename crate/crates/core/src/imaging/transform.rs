//! Center-anchored image transforms: rotation, flips, horizontal shear.
//!
//! All transforms use inverse mapping: every output pixel samples the source
//! at the pre-image of its own coordinates. Centered coordinates put `u`
//! rightward along columns and `v` upward along rows, with the origin at the
//! image center `((w-1)/2, (h-1)/2)`. Positive rotation angles turn the
//! content counter-clockwise. Rotations by multiples of 90 degrees and both
//! flips are exact index permutations; everything else resamples bilinearly
//! with out-of-frame sources read as 0 and the result clamped to `[0, 1]`.

use super::Image;

/// One deterministic image transform.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    /// Counter-clockwise rotation about the image center, in degrees.
    Rotate(f64),
    /// Mirror across the vertical axis: columns reversed.
    FlipH,
    /// Mirror across the horizontal axis: rows reversed.
    FlipV,
    /// Horizontal shear about the center with the given factor.
    Shear(f64),
}

impl TransformSpec {
    /// Short human-readable label, e.g. `rot90` or `shear0.55`.
    pub fn label(&self) -> String {
        match self {
            TransformSpec::Rotate(deg) => format!("rot{deg}"),
            TransformSpec::FlipH => "hflip".to_string(),
            TransformSpec::FlipV => "vflip".to_string(),
            TransformSpec::Shear(mu) => format!("shear{mu}"),
        }
    }
}

/// Apply one transform to an image.
pub fn apply_transform(img: &Image, spec: &TransformSpec) -> Image {
    match spec {
        TransformSpec::Rotate(deg) => rotate(img, *deg),
        TransformSpec::FlipH => flip_h(img),
        TransformSpec::FlipV => flip_v(img),
        TransformSpec::Shear(mu) => shear(img, *mu),
    }
}

fn permute(img: &Image, mut source: impl FnMut(usize, usize) -> (usize, usize)) -> Image {
    let (w, h, ch) = img.shape();
    let mut pixels = Vec::with_capacity(w * h * ch);
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = source(r, c);
            for q in 0..ch {
                pixels.push(img.get(sr, sc, q));
            }
        }
    }
    Image::new(w, h, ch, pixels).expect("permutation preserves shape and range")
}

/// Mirror across the vertical axis: `out[r][c] = in[r][w-1-c]`.
pub fn flip_h(img: &Image) -> Image {
    let w = img.width();
    permute(img, |r, c| (r, w - 1 - c))
}

/// Mirror across the horizontal axis: `out[r][c] = in[h-1-r][c]`.
pub fn flip_v(img: &Image) -> Image {
    let h = img.height();
    permute(img, |r, c| (h - 1 - r, c))
}

/// Rotate counter-clockwise about the image center.
pub fn rotate(img: &Image, degrees: f64) -> Image {
    let (w, h, _) = img.shape();
    let norm = degrees.rem_euclid(360.0);
    if norm == 0.0 {
        return img.clone();
    }
    if norm == 180.0 {
        return permute(img, |r, c| (h - 1 - r, w - 1 - c));
    }
    if w == h {
        if norm == 90.0 {
            return permute(img, |r, c| (c, w - 1 - r));
        }
        if norm == 270.0 {
            return permute(img, |r, c| (h - 1 - c, r));
        }
    }
    let theta = norm.to_radians();
    let (sin, cos) = theta.sin_cos();
    resample(img, |u, v| (u * cos + v * sin, -u * sin + v * cos))
}

/// Horizontal shear about the center: source column offset is `mu * v`.
pub fn shear(img: &Image, mu: f64) -> Image {
    if mu == 0.0 {
        return img.clone();
    }
    resample(img, |u, v| (u + mu * v, v))
}

/// Inverse-map resample: `source` takes output-centered `(u, v)` to
/// source-centered coordinates.
fn resample(img: &Image, source: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (w, h, ch) = img.shape();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut pixels = Vec::with_capacity(w * h * ch);
    for r in 0..h {
        for c in 0..w {
            let u = c as f64 - cx;
            let v = cy - r as f64;
            let (us, vs) = source(u, v);
            let sc = us + cx;
            let sr = cy - vs;
            for q in 0..ch {
                pixels.push(bilinear(img, sr, sc, q).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(w, h, ch, pixels).expect("resample preserves shape and range")
}

/// Bilinear sample at fractional (row, col); out-of-frame sources read 0.
/// Uses the lerp form, so constant neighborhoods reproduce exactly.
fn bilinear(img: &Image, sr: f64, sc: f64, channel: usize) -> f64 {
    let (w, h, _) = img.shape();
    let r0 = sr.floor();
    let c0 = sc.floor();
    let fr = sr - r0;
    let fc = sc - c0;
    let fetch = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 {
            return 0.0;
        }
        let (ri, ci) = (r as usize, c as usize);
        if ri >= h || ci >= w {
            return 0.0;
        }
        img.get(ri, ci, channel)
    };
    let v00 = fetch(r0, c0);
    let v01 = fetch(r0, c0 + 1.0);
    let v10 = fetch(r0 + 1.0, c0);
    let v11 = fetch(r0 + 1.0, c0 + 1.0);
    let top = v00 + fc * (v01 - v00);
    let bottom = v10 + fc * (v11 - v10);
    top + fr * (bottom - top)
}
