//! Box-robustness simulation.
//!
//! A window is cut from the image around a (possibly wrong) box, encoded
//! against the true object boundary, normalized to a fixed size and decoded
//! back onto the full image canvas. Disks painted from inside the box may
//! reach past its edges, so parts of the object the box missed can still be
//! recovered. Clipping the same decode to the box gives the inside-box
//! baseline.
//!
//! Encoding order: full-resolution distances to the true boundary, crop,
//! nearest-neighbour resize, multiply by the tighter of the two axis scales,
//! ceiling, truncation at `R`, quantization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codec::{encode, BitPlaneStack, Disk, DiskMode, QuantizationScheme};
use crate::edt::{boundary_set, edt_with_external_boundary, TruncatedDistanceMap};
use crate::eval::mask_iou;
use crate::grid::{crop, nearest_source, resize_raster, BBox, BinaryMask};
use crate::{Error, Result};

pub const DEFAULT_NORM_SIZE: usize = 28;

/// A box in image coordinates and the size its window is normalized to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub bbox: BBox,
    pub norm_w: usize,
    pub norm_h: usize,
}

impl WindowSpec {
    pub fn new(bbox: BBox, norm_w: usize, norm_h: usize) -> Result<Self> {
        let bbox = BBox::new(bbox.x0, bbox.y0, bbox.x1, bbox.y1)?;
        if norm_w == 0 || norm_h == 0 {
            return Err(Error::InvalidDimensions {
                width: norm_w,
                height: norm_h,
                reason: "normalized window must be at least 1x1".into(),
            });
        }
        Ok(Self {
            bbox,
            norm_w,
            norm_h,
        })
    }

    /// Window normalized to its own size (scale 1 on both axes).
    pub fn unit(bbox: BBox) -> Result<Self> {
        Self::new(bbox, bbox.width().max(1) as usize, bbox.height().max(1) as usize)
    }

    pub fn scale_x(&self) -> f64 {
        self.norm_w as f64 / self.bbox.width() as f64
    }

    pub fn scale_y(&self) -> f64 {
        self.norm_h as f64 / self.bbox.height() as f64
    }

    /// `min(scale_x, scale_y)` as an exact fraction `(num, den)`.
    pub fn distance_scale(&self) -> (u64, u64) {
        let (nx, dx) = (self.norm_w as u64, self.bbox.width() as u64);
        let (ny, dy) = (self.norm_h as u64, self.bbox.height() as u64);
        if nx * dy <= ny * dx {
            (nx, dx)
        } else {
            (ny, dy)
        }
    }

    /// Image pixel sampled by normalized pixel `(i, j)`.
    pub fn to_image(&self, i: usize, j: usize) -> (i64, i64) {
        let x = nearest_source(i, self.bbox.width() as usize, self.norm_w);
        let y = nearest_source(j, self.bbox.height() as usize, self.norm_h);
        (self.bbox.x0 + x as i64, self.bbox.y0 + y as i64)
    }
}

/// Simulated proposal error: centre shift and extent scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub dx: i64,
    pub dy: i64,
    pub sx: f64,
    pub sy: f64,
    pub seed: u64,
}

impl Perturbation {
    pub const IDENTITY: Perturbation = Perturbation {
        dx: 0,
        dy: 0,
        sx: 1.0,
        sy: 1.0,
        seed: 0,
    };

    pub fn new(dx: i64, dy: i64, sx: f64, sy: f64) -> Result<Self> {
        if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
            return Err(Error::param(format!("scale factors must be positive, got ({sx}, {sy})")));
        }
        Ok(Self {
            dx,
            dy,
            sx,
            sy,
            seed: 0,
        })
    }

    /// Removes `pixels` from every side of `bbox` (negative values grow it).
    pub fn shrink(bbox: &BBox, pixels: i64) -> Result<Self> {
        let (w, h) = (bbox.width() as f64, bbox.height() as f64);
        Self::new(0, 0, (w - 2.0 * pixels as f64) / w, (h - 2.0 * pixels as f64) / h)
    }

    /// Shift drawn uniformly from `[-max_shift, max_shift]` and scale from
    /// `[min_scale, max_scale]` on each axis, from a ChaCha8 stream seeded by `seed`.
    pub fn random(seed: u64, max_shift: i64, min_scale: f64, max_scale: f64) -> Result<Self> {
        if !(min_scale > 0.0 && min_scale <= max_scale) {
            return Err(Error::param("scale range must satisfy 0 < min <= max"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dx = rng.gen_range(-max_shift..=max_shift);
        let dy = rng.gen_range(-max_shift..=max_shift);
        let sx = rng.gen_range(min_scale..=max_scale);
        let sy = rng.gen_range(min_scale..=max_scale);
        Ok(Self {
            seed,
            ..Self::new(dx, dy, sx, sy)?
        })
    }
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Shifts the centre by `(dx, dy)` and scales the extent by `(sx, sy)`; edges
/// are `centre +- half_extent` rounded half-up.
pub fn perturb_box(bbox: &BBox, pert: &Perturbation) -> Result<BBox> {
    if !(pert.sx > 0.0 && pert.sy > 0.0) {
        return Err(Error::param("scale factors must be positive"));
    }
    let cx = (bbox.x0 + bbox.x1) as f64 / 2.0 + pert.dx as f64;
    let cy = (bbox.y0 + bbox.y1) as f64 / 2.0 + pert.dy as f64;
    let hw = bbox.width() as f64 * pert.sx / 2.0;
    let hh = bbox.height() as f64 * pert.sy / 2.0;
    BBox::new(
        round_half_up(cx - hw),
        round_half_up(cy - hh),
        round_half_up(cx + hw),
        round_half_up(cy + hh),
    )
}

/// Ground-truth encoding of the window at its normalized size.
pub fn encode_window(
    full_mask: &BinaryMask,
    spec: &WindowSpec,
    scheme: &QuantizationScheme,
) -> Result<BitPlaneStack> {
    let cap = scheme.radius_cap() as u64;
    let (num, den) = spec.distance_scale();
    // any value >= full_cap already saturates at R after scaling
    let full_cap = (cap * den).div_ceil(num).max(1);
    let full_cap = u32::try_from(full_cap).map_err(|_| Error::param("window scale too small"))?;

    let window_mask = crop(full_mask, &spec.bbox, false)?;
    let dmap = edt_with_external_boundary(&window_mask, full_mask, &spec.bbox, full_cap)?;
    let resized = resize_raster(
        dmap.values(),
        dmap.width(),
        dmap.height(),
        spec.norm_w,
        spec.norm_h,
    );
    let values = resized
        .into_iter()
        .map(|v| ((v as u64 * num).div_ceil(den)).min(cap) as u32)
        .collect();
    let scaled = TruncatedDistanceMap::new(spec.norm_w, spec.norm_h, values, scheme.radius_cap())?;
    encode(&scaled, scheme)
}

/// Image-space disk radius for a normalized radius: `round(r / scale)`.
pub fn image_radius(r: u32, spec: &WindowSpec) -> u32 {
    let (num, den) = spec.distance_scale();
    ((2 * r as u64 * den + num) / (2 * num)) as u32
}

/// Paints every set bit's disk in image coordinates; disks may leave the box
/// and are clipped only to the canvas.
pub fn decode_to_canvas(
    stack: &BitPlaneStack,
    spec: &WindowSpec,
    canvas_w: usize,
    canvas_h: usize,
    mode: DiskMode,
) -> Result<BinaryMask> {
    if stack.width() != spec.norm_w || stack.height() != spec.norm_h {
        return Err(Error::DimensionMismatch(format!(
            "stack is {}x{} but window normalizes to {}x{}",
            stack.width(),
            stack.height(),
            spec.norm_w,
            spec.norm_h
        )));
    }
    let mut canvas = BinaryMask::new(canvas_w, canvas_h)?;
    for (plane, &r) in stack.planes().iter().zip(stack.scheme().radii()) {
        let Some(disk) = Disk::for_radius(image_radius(r, spec), mode) else {
            continue;
        };
        for j in 0..plane.height() {
            for i in 0..plane.width() {
                if plane.get(i, j) {
                    let (x, y) = spec.to_image(i, j);
                    disk.paint(&mut canvas, x, y);
                }
            }
        }
    }
    Ok(canvas)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessRecord {
    pub dx: i64,
    pub dy: i64,
    pub sx: f64,
    pub sy: f64,
    pub bbox: BBox,
    /// IoU of the canvas decode against the object's interior set.
    pub iou_beyond: f64,
    /// IoU of the same decode clipped to the box.
    pub iou_inside: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepConfig {
    /// Normalized window size; `None` normalizes each window to its own size.
    pub norm: Option<(usize, usize)>,
    pub mode: DiskMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            norm: None,
            mode: DiskMode::Conservative,
        }
    }
}

/// Object pixels outside the boundary set.
pub fn interior_set(mask: &BinaryMask) -> BinaryMask {
    mask.and_not(&boundary_set(mask).to_mask())
        .expect("same dimensions")
}

/// Keeps only canvas pixels inside `bbox`.
pub fn clip_to_box(mask: &BinaryMask, bbox: &BBox) -> BinaryMask {
    let mut out = mask.clone();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if !bbox.contains(x as i64, y as i64) {
                out.set(x, y, false);
            }
        }
    }
    out
}

fn run_one(
    full_mask: &BinaryMask,
    truth: &BinaryMask,
    base_box: &BBox,
    pert: &Perturbation,
    scheme: &QuantizationScheme,
    config: &SweepConfig,
) -> Result<RobustnessRecord> {
    let bbox = perturb_box(base_box, pert)?;
    let spec = match config.norm {
        Some((w, h)) => WindowSpec::new(bbox, w, h)?,
        None => WindowSpec::unit(bbox)?,
    };
    let stack = encode_window(full_mask, &spec, scheme)?;
    let beyond = decode_to_canvas(&stack, &spec, full_mask.width(), full_mask.height(), config.mode)?;
    let inside = clip_to_box(&beyond, &bbox);
    Ok(RobustnessRecord {
        dx: pert.dx,
        dy: pert.dy,
        sx: pert.sx,
        sy: pert.sy,
        bbox,
        iou_beyond: mask_iou(&beyond, truth)?,
        iou_inside: mask_iou(&inside, truth)?,
    })
}

/// One record per perturbation, in input order. `base_box` is expected to
/// enclose the object.
pub fn robustness_sweep(
    full_mask: &BinaryMask,
    base_box: &BBox,
    perturbations: &[Perturbation],
    scheme: &QuantizationScheme,
    config: &SweepConfig,
) -> Result<Vec<RobustnessRecord>> {
    let truth = interior_set(full_mask);
    perturbations
        .par_iter()
        .map(|p| run_one(full_mask, &truth, base_box, p, scheme, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::hard_decode;
    use crate::edt::{brute_force_edt, truncated_edt};
    use crate::synth;

    #[test]
    fn perturb_box_examples() {
        let b = BBox::new(0, 0, 10, 10).unwrap();
        assert_eq!(perturb_box(&b, &Perturbation::IDENTITY).unwrap(), b);
        let half = Perturbation::new(0, 0, 0.5, 0.5).unwrap();
        assert_eq!(perturb_box(&b, &half).unwrap(), BBox::new(3, 3, 8, 8).unwrap());
        let shifted = Perturbation::new(100, 0, 1.0, 1.0).unwrap();
        let far = perturb_box(&b, &shifted).unwrap();
        assert_eq!(far, BBox::new(100, 0, 110, 10).unwrap());
        let window = crop(&BinaryMask::filled(10, 10, true).unwrap(), &far, false).unwrap();
        assert!(window.is_blank());

        let tiny = Perturbation::new(0, 0, 0.01, 1.0).unwrap();
        assert!(perturb_box(&b, &tiny).is_err());
        assert!(Perturbation::new(0, 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn shrink_removes_pixels_per_side() {
        for (w, h) in [(21, 17), (30, 30), (13, 40)] {
            let b = BBox::new(3, 5, 3 + w, 5 + h).unwrap();
            for a in 1..=6 {
                let p = Perturbation::shrink(&b, a).unwrap();
                assert_eq!(perturb_box(&b, &p).unwrap(), BBox::new(3 + a, 5 + a, 3 + w - a, 5 + h - a).unwrap());
            }
        }
    }

    #[test]
    fn random_perturbation_is_seeded() {
        let a = Perturbation::random(5, 4, 0.7, 1.2).unwrap();
        assert_eq!(a, Perturbation::random(5, 4, 0.7, 1.2).unwrap());
        assert!(a.dx.abs() <= 4 && (0.7..=1.2).contains(&a.sx));
        assert!(Perturbation::random(5, 4, 1.2, 0.7).is_err());
    }

    #[test]
    fn window_with_margin_matches_local_encoding() {
        let full = synth::disk(40, 40, 20.0, 20.0, 9.0);
        let scheme = QuantizationScheme::uniform(5, 13).unwrap();
        let bbox = BBox::new(5, 5, 36, 36).unwrap();
        let spec = WindowSpec::unit(bbox).unwrap();
        let local = encode(&truncated_edt(&crop(&full, &bbox, false).unwrap(), 13).unwrap(), &scheme).unwrap();
        assert_eq!(encode_window(&full, &spec, &scheme).unwrap(), local);
    }

    #[test]
    fn cut_window_keeps_true_depth() {
        let full = synth::disk(32, 32, 16.0, 16.0, 10.0);
        let scheme = QuantizationScheme::new((0..=13).collect(), 13).unwrap();
        let bbox = BBox::new(8, 8, 24, 24).unwrap();
        let stack = encode_window(&full, &WindowSpec::unit(bbox).unwrap(), &scheme).unwrap();
        let oracle = brute_force_edt(&full, 13).unwrap();
        // left box edge on the horizontal diameter is image pixel (8, 16)
        assert_eq!(stack.representative(0, 8), oracle.get(8, 16));
        assert!(stack.representative(0, 8) > 1);
        for j in 0..16 {
            for i in 0..16 {
                assert_eq!(stack.representative(i, j), oracle.get(8 + i, 8 + j));
            }
        }
    }

    #[test]
    fn empty_object_window() {
        let full = BinaryMask::new(20, 20).unwrap();
        let scheme = QuantizationScheme::uniform(5, 13).unwrap();
        let spec = WindowSpec::new(BBox::new(2, 2, 15, 9).unwrap(), 28, 28).unwrap();
        let stack = encode_window(&full, &spec, &scheme).unwrap();
        assert!(stack.planes()[0].bits().iter().all(|&b| b));
    }

    #[test]
    fn scaled_window_values() {
        // 2x downscale: values halve (ceil) and the encoding stays one-hot
        let full = synth::disk(64, 64, 32.0, 32.0, 24.0);
        let scheme = QuantizationScheme::new((0..=13).collect(), 13).unwrap();
        let bbox = BBox::new(4, 4, 60, 60).unwrap();
        let spec = WindowSpec::new(bbox, 28, 28).unwrap();
        assert_eq!(spec.distance_scale(), (28, 56));
        let stack = encode_window(&full, &spec, &scheme).unwrap();
        stack.check_one_hot().unwrap();
        let exact = truncated_edt(&full, 64).unwrap();
        for j in 0..28 {
            for i in 0..28 {
                let (x, y) = spec.to_image(i, j);
                let want = exact.get(x as usize, y as usize).div_ceil(2).min(13);
                assert_eq!(stack.representative(i, j), want);
            }
        }
        assert_eq!(image_radius(5, &spec), 10);
    }

    #[test]
    fn decode_past_right_edge() {
        let scheme = QuantizationScheme::new(vec![0, 3], 3).unwrap();
        let bbox = BBox::new(0, 0, 6, 6).unwrap();
        let spec = WindowSpec::unit(bbox).unwrap();
        let mut planes = vec![BinaryMask::filled(6, 6, true).unwrap(), BinaryMask::new(6, 6).unwrap()];
        planes[0].set(5, 3, false);
        planes[1].set(5, 3, true);
        let stack = BitPlaneStack::from_planes(planes, scheme).unwrap();
        let canvas = decode_to_canvas(&stack, &spec, 12, 8, DiskMode::Conservative).unwrap();
        assert!(canvas.get(7, 3));
        assert!(!canvas.get(8, 3));
        assert_eq!(canvas.area(), 13);
        assert!((6..12).any(|x| canvas.get(x, 3)));
    }

    #[test]
    fn unit_full_canvas_decode_equals_hard_decode() {
        let m = synth::ring(30, 24, 15.0, 12.0, 3.0, 11.0);
        let scheme = QuantizationScheme::uniform(5, 13).unwrap();
        let stack = encode(&truncated_edt(&m, 13).unwrap(), &scheme).unwrap();
        let spec = WindowSpec::unit(BBox::full(30, 24)).unwrap();
        for mode in [DiskMode::Conservative, DiskMode::Literal] {
            assert_eq!(
                decode_to_canvas(&stack, &spec, 30, 24, mode).unwrap(),
                hard_decode(&stack, mode).unwrap()
            );
        }
        let blank = BitPlaneStack::from_planes(
            vec![BinaryMask::filled(30, 24, true).unwrap(), BinaryMask::new(30, 24).unwrap(),
                 BinaryMask::new(30, 24).unwrap(), BinaryMask::new(30, 24).unwrap(),
                 BinaryMask::new(30, 24).unwrap()],
            scheme,
        )
        .unwrap();
        assert!(decode_to_canvas(&blank, &spec, 30, 24, DiskMode::Literal).unwrap().is_blank());
    }

    #[test]
    fn sweep_examples() {
        let full = synth::disk(64, 64, 32.0, 32.0, 20.0);
        let base = BBox::new(12, 12, 53, 53).unwrap();
        let scheme = QuantizationScheme::uniform(5, 20).unwrap();
        let perts = vec![
            Perturbation::IDENTITY,
            Perturbation::shrink(&base, 4).unwrap(),
            Perturbation::new(200, 0, 1.0, 1.0).unwrap(),
        ];
        let recs = robustness_sweep(&full, &base, &perts, &scheme, &SweepConfig::default()).unwrap();
        assert_eq!(recs[0].iou_beyond, 1.0);
        assert!(recs[1].iou_beyond > recs[1].iou_inside);
        assert_eq!((recs[2].iou_beyond, recs[2].iou_inside), (0.0, 0.0));
        for r in &recs {
            assert!(r.iou_beyond >= r.iou_inside);
        }
        let again = robustness_sweep(&full, &base, &perts, &scheme, &SweepConfig::default()).unwrap();
        assert_eq!(recs, again);
    }

    /// With singleton bins the decode at unit scale recovers an outside
    /// object pixel exactly when some in-box pixel's disk `d <= D(p) - 1`
    /// reaches it.
    #[test]
    fn shrinkage_recovery_bound() {
        let scheme = QuantizationScheme::new((0..=20).collect(), 20).unwrap();
        for r in [8.0, 12.5, 17.0] {
            let full = synth::disk(48, 48, 24.0, 23.5, r);
            let exact = brute_force_edt(&full, 20).unwrap();
            let truth = interior_set(&full);
            for shrink in 1..=6 {
                let bbox = BBox::new(24 - r as i64 + shrink, 10, 24 + r as i64 + 1 - shrink, 38).unwrap();
                let spec = WindowSpec::unit(bbox).unwrap();
                let decoded =
                    decode_to_canvas(&encode_window(&full, &spec, &scheme).unwrap(), &spec, 48, 48, DiskMode::Conservative)
                        .unwrap();
                for qy in 0..48i64 {
                    for qx in 0..48i64 {
                        if bbox.contains(qx, qy) || !truth.get(qx as usize, qy as usize) {
                            continue;
                        }
                        let reachable = (bbox.y0..bbox.y1).any(|py| {
                            (bbox.x0..bbox.x1).any(|px| {
                                let d = exact.get(px as usize, py as usize) as i64;
                                d >= 1 && (px - qx).pow(2) + (py - qy).pow(2) <= (d - 1).pow(2)
                            })
                        });
                        assert_eq!(decoded.get(qx as usize, qy as usize), reachable);
                    }
                }
            }
        }
    }
}
