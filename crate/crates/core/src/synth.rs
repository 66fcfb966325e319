//! Deterministic fixture shapes and seeded random masks.
//!
//! All shapes are rasterized by testing pixel centres `(x, y)` (integer
//! coordinates) against the continuous shape.

use rand::Rng;

use crate::grid::BinaryMask;

fn canvas(width: usize, height: usize, f: impl FnMut(usize, usize) -> bool) -> BinaryMask {
    BinaryMask::from_fn(width.max(1), height.max(1), f).expect("non-zero canvas")
}

/// Pixels with `(x - cx)^2 + (y - cy)^2 <= r^2`.
pub fn disk(width: usize, height: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
    canvas(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy <= r * r
    })
}

/// Annulus `r_in < d <= r_out`.
pub fn ring(width: usize, height: usize, cx: f64, cy: f64, r_in: f64, r_out: f64) -> BinaryMask {
    canvas(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let d2 = dx * dx + dy * dy;
        d2 > r_in * r_in && d2 <= r_out * r_out
    })
}

/// Half-open rectangle `[x0, x1) x [y0, y1)`.
pub fn rect(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BinaryMask {
    canvas(width, height, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
}

/// An L: a vertical bar of the given thickness joined to a horizontal foot
/// along the bottom of the bounding rectangle.
pub fn l_shape(
    width: usize,
    height: usize,
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    thickness: usize,
) -> BinaryMask {
    canvas(width, height, |x, y| {
        let in_box = x >= x0 && x < x1 && y >= y0 && y < y1;
        in_box && (x < x0 + thickness || y >= y1.saturating_sub(thickness))
    })
}

/// Independent per-pixel noise with the given object probability.
pub fn random_noise<R: Rng>(rng: &mut R, width: usize, height: usize, density: f64) -> BinaryMask {
    canvas(width, height, |_, _| rng.gen_bool(density))
}

/// Union of a few random disks and rectangles with a sprinkle of holes;
/// gives masks with thick interiors as well as thin parts.
pub fn random_blobs<R: Rng>(rng: &mut R, width: usize, height: usize) -> BinaryMask {
    let (w, h) = (width.max(1), height.max(1));
    let mut mask = BinaryMask::new(w, h).expect("non-zero canvas");
    let scale = w.min(h) as f64;
    let shapes = rng.gen_range(1..=5);
    for _ in 0..shapes {
        let shape = if rng.gen_bool(0.6) {
            let r = rng.gen_range(0.5..=(scale * 0.45).max(1.0));
            disk(w, h, rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), r)
        } else {
            let x0 = rng.gen_range(0..w);
            let y0 = rng.gen_range(0..h);
            let x1 = rng.gen_range(x0 + 1..=w);
            let y1 = rng.gen_range(y0 + 1..=h);
            rect(w, h, x0, y0, x1, y1)
        };
        mask.or_assign(&shape).expect("same dims");
    }
    let holes = rng.gen_range(0..=3);
    for _ in 0..holes {
        let (x, y) = (rng.gen_range(0..w), rng.gen_range(0..h));
        mask.set(x, y, false);
    }
    mask
}
