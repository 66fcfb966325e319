//! Truncated Euclidean distance transform.
//!
//! For every object pixel `p` the transform stores
//! `min(ceil(min_q d(p, q)), R)` where `q` ranges over the boundary set `Q`
//! (background pixels plus object pixels 4-adjacent to background, with the
//! outside of the image counted as background) and `d` is the Euclidean
//! distance between pixel centres. Pixels of `Q` store 0.
//!
//! [`truncated_edt`] computes exact squared distances with a separable
//! two-pass scan (column distances, then a lower envelope of parabolas per
//! row) in integer arithmetic. [`brute_force_edt`] is the quadratic oracle it
//! is tested against.

use crate::grid::{crop, crop_raster, BBox, BinaryMask};
use crate::{Error, Result};

/// Marks the pixels of `Q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundarySet {
    width: usize,
    height: usize,
    member: Vec<bool>,
}

impl BoundarySet {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn member(&self) -> &[bool] {
        &self.member
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.member[y * self.width + x]
    }

    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask::from_bits(self.width, self.height, self.member.clone())
            .expect("boundary set has valid dimensions")
    }
}

/// Integer distance raster with values in `[0, radius_cap]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedDistanceMap {
    width: usize,
    height: usize,
    values: Vec<u32>,
    radius_cap: u32,
}

impl TruncatedDistanceMap {
    pub fn new(width: usize, height: usize, values: Vec<u32>, radius_cap: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: "width and height must be at least 1".into(),
            });
        }
        if radius_cap == 0 {
            return Err(Error::param("radius cap must be >= 1"));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} map",
                values.len(),
                width,
                height
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v > radius_cap) {
            return Err(Error::param(format!("value {v} exceeds radius cap {radius_cap}")));
        }
        Ok(Self {
            width,
            height,
            values,
            radius_cap,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn radius_cap(&self) -> u32 {
        self.radius_cap
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.values[y * self.width + x]
    }

    /// Pixels with value >= 1.
    pub fn interior(&self) -> BinaryMask {
        BinaryMask::from_bits(self.width, self.height, self.values.iter().map(|&v| v > 0).collect())
            .expect("distance map has valid dimensions")
    }
}

/// Background pixels plus object pixels with a background (or out-of-image)
/// 4-neighbour.
pub fn boundary_set(mask: &BinaryMask) -> BoundarySet {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut member = Vec::with_capacity(mask.bits().len());
    for y in 0..h {
        for x in 0..w {
            let inside = mask.get(x as usize, y as usize);
            let on_edge = [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)]
                .iter()
                .any(|&(nx, ny)| !mask.get_signed(nx, ny).unwrap_or(false));
            member.push(!inside || on_edge);
        }
    }
    BoundarySet {
        width: mask.width(),
        height: mask.height(),
        member,
    }
}

/// Smallest integer `c` with `c * c >= n`.
#[inline]
pub(crate) fn ceil_sqrt(n: u64) -> u64 {
    let s = n.isqrt();
    if s * s == n {
        s
    } else {
        s + 1
    }
}

/// Exact squared distance from every pixel to the nearest member of `Q`.
pub fn squared_distance_to_boundary(q: &BoundarySet) -> Vec<u64> {
    let (w, h) = (q.width, q.height);
    let inf = (w + h) as i64;

    // Column pass: vertical distance to the nearest Q pixel in the same column.
    let mut g = vec![inf; w * h];
    for x in 0..w {
        let mut run = inf;
        for y in 0..h {
            run = if q.member[y * w + x] { 0 } else { (run + 1).min(inf) };
            g[y * w + x] = run;
        }
        let mut run = inf;
        for y in (0..h).rev() {
            run = if q.member[y * w + x] { 0 } else { (run + 1).min(inf) };
            let cell = &mut g[y * w + x];
            *cell = (*cell).min(run);
        }
    }

    // Row pass: lower envelope of parabolas (x - i)^2 + g(i)^2.
    let mut out = vec![0u64; w * h];
    let mut sites = vec![0usize; w];
    let mut starts = vec![0i64; w];
    for y in 0..h {
        let row = &g[y * w..(y + 1) * w];
        let f = |x: i64, i: usize| (x - i as i64).pow(2) + row[i] * row[i];
        let sep = |i: usize, u: usize| {
            let (i_, u_) = (i as i64, u as i64);
            (u_ * u_ - i_ * i_ + row[u] * row[u] - row[i] * row[i]).div_euclid(2 * (u_ - i_))
        };

        let mut k = 0usize;
        sites[0] = 0;
        starts[0] = 0;
        for u in 1..w {
            loop {
                let t = starts[k];
                if f(t, sites[k]) > f(t, u) {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                } else {
                    break;
                }
            }
            let t = starts[k];
            if f(t, sites[k]) > f(t, u) {
                // k == 0 and u dominates the whole envelope
                sites[0] = u;
                starts[0] = 0;
            } else {
                let start = 1 + sep(sites[k], u);
                if start < w as i64 {
                    k += 1;
                    sites[k] = u;
                    starts[k] = start;
                }
            }
        }
        for x in (0..w).rev() {
            out[y * w + x] = f(x as i64, sites[k]) as u64;
            if k > 0 && x as i64 == starts[k] {
                k -= 1;
            }
        }
    }
    out
}

fn check_cap(radius_cap: u32) -> Result<()> {
    if radius_cap == 0 {
        Err(Error::param("radius cap R must be >= 1"))
    } else {
        Ok(())
    }
}

/// Exact truncated distance transform via a linear-time separable scan.
pub fn truncated_edt(mask: &BinaryMask, radius_cap: u32) -> Result<TruncatedDistanceMap> {
    check_cap(radius_cap)?;
    let q = boundary_set(mask);
    let values = squared_distance_to_boundary(&q)
        .into_iter()
        .map(|d2| ceil_sqrt(d2).min(radius_cap as u64) as u32)
        .collect();
    TruncatedDistanceMap::new(mask.width(), mask.height(), values, radius_cap)
}

/// Quadratic-cost oracle: for every pixel, the ceiled distance to the nearest
/// member of `Q` found by exhaustive search, then truncated. Intended for
/// small rasters only.
pub fn brute_force_edt(mask: &BinaryMask, radius_cap: u32) -> Result<TruncatedDistanceMap> {
    check_cap(radius_cap)?;
    let q = boundary_set(mask);
    let (w, h) = (mask.width(), mask.height());
    let members: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| q.contains(x, y))
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    let mut values = vec![0u32; w * h];
    for py in 0..h {
        for px in 0..w {
            // ceil(sqrt) is monotone, so it can be taken after the minimum
            let mut best = u64::MAX;
            for &(qx, qy) in &members {
                let dx = px as i64 - qx;
                let dy = py as i64 - qy;
                best = best.min((dx * dx + dy * dy) as u64);
            }
            let d = (best as f64).sqrt().ceil();
            values[py * w + px] = d.min(radius_cap as f64) as u32;
        }
    }
    TruncatedDistanceMap::new(w, h, values, radius_cap)
}

/// Distances inside `window` measured against the boundary of the whole
/// object, so values next to a box edge that cuts the object keep their
/// full depth instead of dropping to the window border.
pub fn edt_with_external_boundary(
    window_mask: &BinaryMask,
    full_mask: &BinaryMask,
    window: &BBox,
    radius_cap: u32,
) -> Result<TruncatedDistanceMap> {
    check_cap(radius_cap)?;
    let expected = crop(full_mask, window, false)?;
    if !expected.same_dims(window_mask) {
        return Err(Error::InconsistentWindow(format!(
            "window mask is {}x{}, window is {}x{}",
            window_mask.width(),
            window_mask.height(),
            window.width(),
            window.height()
        )));
    }
    if &expected != window_mask {
        return Err(Error::InconsistentWindow(
            "pixel contents differ from the crop".into(),
        ));
    }
    let full = truncated_edt(full_mask, radius_cap)?;
    let values = crop_raster(full.values(), full.width(), full.height(), window, 0);
    TruncatedDistanceMap::new(
        window.width() as usize,
        window.height() as usize,
        values,
        radius_cap,
    )
}
