//! Raster and box types shared by every other module.
//!
//! Coordinates: rasters are row-major with the origin at the top-left pixel,
//! `x` grows to the right and `y` grows downward. Boxes are half-open,
//! `[x0, x1) x [y0, y1)`, and may extend outside the image; clipping is
//! always an explicit call.

use crate::{Error, Result};

/// A binary object/background raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, false)
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            bits: vec![value; width * height],
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {}x{} mask",
                bits.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask from rows of 0/1 values; any non-zero value is object.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut bits = Vec::with_capacity(width * height);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::DimensionMismatch("ragged rows".into()));
            }
            bits.extend(row.iter().map(|&v| v != 0));
        }
        Self::from_bits(width, height, bits)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_dims(width, height)?;
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Value at a possibly out-of-image coordinate; `None` outside.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> Option<bool> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.bits[y as usize * self.width + x as usize])
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    /// Number of object pixels.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when no pixel is set.
    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        self.expect_dims(other)?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    pub fn or_assign(&mut self, other: &BinaryMask) -> Result<()> {
        self.expect_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_dims(other) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub(crate) fn expect_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.width, self.height)?;
        for row in self.bits.chunks(self.width) {
            let line: String = row.iter().map(|&b| if b { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "width and height must be at least 1".into(),
        });
    }
    Ok(())
}

/// Instance annotations: 0 is background, `k >= 1` is instance `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        check_dims(width, height)?;
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {}x{} map",
                labels.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Distinct instance ids in ascending order.
    pub fn instance_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l > 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Binary mask of the pixels labelled `id`.
pub fn extract_instance(map: &LabelMap, id: u32) -> Result<BinaryMask> {
    if id == 0 {
        return Err(Error::param("instance id must be >= 1"));
    }
    let bits: Vec<bool> = map.labels.iter().map(|&l| l == id).collect();
    if !bits.iter().any(|&b| b) {
        return Err(Error::InstanceNotFound(id));
    }
    BinaryMask::from_bits(map.width, map.height, bits)
}

/// Axis-aligned half-open integer box `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl BBox {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Result<Self> {
        if x0 < x1 && y0 < y1 {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(Error::InvalidBox { x0, y0, x1, y1 })
        }
    }

    /// Box covering a whole `width x height` image.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width as i64,
            y1: height as i64,
        }
    }

    #[inline]
    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    #[inline]
    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
        .ok()
    }

    pub fn translate(&self, dx: i64, dy: i64) -> BBox {
        BBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    /// Part of the box inside a `width x height` image, if any.
    pub fn clip(&self, width: usize, height: usize) -> Option<BBox> {
        self.intersect(&BBox::full(width, height))
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersect(other).map_or(0, |b| b.area());
        let union = self.area() + other.area() - inter;
        inter as f64 / union as f64
    }
}

/// Which origin a proposal mask is stored relative to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAnchor {
    /// Mask pixel (0,0) is the box's top-left pixel; dimensions equal the box.
    Box,
    /// Mask pixel (0,0) is the image origin.
    Canvas,
}

/// A scored box, optionally carrying an instance mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxProposal {
    pub id: u32,
    pub bbox: BBox,
    pub score: f64,
    pub mask: Option<BinaryMask>,
    pub anchor: MaskAnchor,
}

impl BoxProposal {
    pub fn new(id: u32, bbox: BBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::param(format!("score {score} outside [0,1]")));
        }
        Ok(Self {
            id,
            bbox,
            score,
            mask: None,
            anchor: MaskAnchor::Canvas,
        })
    }

    pub fn with_mask(mut self, mask: BinaryMask, anchor: MaskAnchor) -> Result<Self> {
        if anchor == MaskAnchor::Box
            && (mask.width() as i64 != self.bbox.width() || mask.height() as i64 != self.bbox.height())
        {
            return Err(Error::DimensionMismatch(format!(
                "box-anchored mask is {}x{} but box is {}x{}",
                mask.width(),
                mask.height(),
                self.bbox.width(),
                self.bbox.height()
            )));
        }
        self.mask = Some(mask);
        self.anchor = anchor;
        Ok(self)
    }

    /// Image coordinates of mask pixel (0,0).
    pub fn mask_origin(&self) -> (i64, i64) {
        match self.anchor {
            MaskAnchor::Box => (self.bbox.x0, self.bbox.y0),
            MaskAnchor::Canvas => (0, 0),
        }
    }

    /// The proposal mask pasted onto a `width x height` canvas.
    pub fn canvas_mask(&self, width: usize, height: usize) -> Result<Option<BinaryMask>> {
        let Some(mask) = &self.mask else {
            return Ok(None);
        };
        let (ox, oy) = self.mask_origin();
        let frame = BBox::full(width, height).translate(-ox, -oy);
        crop(mask, &frame, false).map(Some)
    }
}

/// Copies the `bbox` window of `mask`; pixels outside the image take `pad_value`.
pub fn crop(mask: &BinaryMask, bbox: &BBox, pad_value: bool) -> Result<BinaryMask> {
    let bbox = BBox::new(bbox.x0, bbox.y0, bbox.x1, bbox.y1)?;
    let bits = crop_raster(mask.bits(), mask.width(), mask.height(), &bbox, pad_value);
    BinaryMask::from_bits(bbox.width() as usize, bbox.height() as usize, bits)
}

pub(crate) fn crop_raster<T: Copy>(
    src: &[T],
    width: usize,
    height: usize,
    bbox: &BBox,
    pad: T,
) -> Vec<T> {
    let out_w = bbox.width() as usize;
    let out_h = bbox.height() as usize;
    let mut out = vec![pad; out_w * out_h];
    let Some(inside) = bbox.clip(width, height) else {
        return out;
    };
    let span = inside.width() as usize;
    for y in inside.y0..inside.y1 {
        let src_start = y as usize * width + inside.x0 as usize;
        let dst_start = (y - bbox.y0) as usize * out_w + (inside.x0 - bbox.x0) as usize;
        out[dst_start..dst_start + span].copy_from_slice(&src[src_start..src_start + span]);
    }
    out
}

/// Source index sampled by output index `i` under nearest-neighbour resampling
/// from `n_in` to `n_out` samples: `floor((i + 0.5) * n_in / n_out)`.
#[inline]
pub(crate) fn nearest_source(i: usize, n_in: usize, n_out: usize) -> usize {
    ((2 * i + 1) * n_in) / (2 * n_out)
}

pub(crate) fn resize_raster<T: Copy>(
    src: &[T],
    width: usize,
    height: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<T> {
    let xs: Vec<usize> = (0..out_w).map(|i| nearest_source(i, width, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for j in 0..out_h {
        let row = &src[nearest_source(j, height, out_h) * width..][..width];
        out.extend(xs.iter().map(|&x| row[x]));
    }
    out
}

/// Nearest-neighbour resampling using pixel-centre sampling.
pub fn resize_nearest(mask: &BinaryMask, out_w: usize, out_h: usize) -> Result<BinaryMask> {
    check_dims(out_w, out_h)?;
    let bits = resize_raster(mask.bits(), mask.width(), mask.height(), out_w, out_h);
    BinaryMask::from_bits(out_w, out_h, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.5)).unwrap()
    }

    #[test]
    fn extract_instance_examples() {
        let map = LabelMap::from_labels(2, 2, vec![1, 0, 0, 2]).unwrap();
        let m = extract_instance(&map, 1).unwrap();
        assert_eq!(m, BinaryMask::from_rows(&[[1, 0], [0, 0]]).unwrap());
        assert!(matches!(
            extract_instance(&map, 3),
            Err(Error::InstanceNotFound(3))
        ));
        assert!(extract_instance(&map, 0).is_err());
    }

    #[test]
    fn extract_instance_union_and_disjointness() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labels: Vec<u32> = (0..64 * 64).map(|_| rng.gen_range(0..=5)).collect();
        let map = LabelMap::from_labels(64, 64, labels.clone()).unwrap();
        let ids = map.instance_ids();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
        let masks: Vec<_> = ids.iter().map(|&id| extract_instance(&map, id).unwrap()).collect();
        let mut union = BinaryMask::new(64, 64).unwrap();
        for m in &masks {
            union.or_assign(m).unwrap();
        }
        for (i, &l) in labels.iter().enumerate() {
            assert_eq!(union.bits()[i], l > 0);
        }
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                assert!(masks[i].and(&masks[j]).unwrap().is_blank());
            }
        }
    }

    #[test]
    fn crop_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mask(&mut rng, 8, 8);
        assert_eq!(crop(&m, &BBox::full(8, 8), false).unwrap(), m);

        let outside = crop(&m, &BBox::new(20, 20, 25, 23).unwrap(), false).unwrap();
        assert_eq!((outside.width(), outside.height()), (5, 3));
        assert!(outside.is_blank());

        let c = crop(&m, &BBox::new(2, 2, 6, 6).unwrap(), false).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(c.get(x, y), m.get(x + 2, y + 2));
            }
        }
    }

    #[test]
    fn crop_pads_partially_outside() {
        let m = BinaryMask::filled(4, 4, true).unwrap();
        let c = crop(&m, &BBox::new(-1, 2, 2, 6).unwrap(), false).unwrap();
        let expected = BinaryMask::from_rows(&[[0, 1, 1], [0, 1, 1], [0, 0, 0], [0, 0, 0]]).unwrap();
        assert_eq!(c, expected);
        let padded = crop(&m, &BBox::new(-1, 2, 2, 6).unwrap(), true).unwrap();
        assert_eq!(padded.area(), 12);
    }

    #[test]
    fn crop_rejects_degenerate_box() {
        let m = BinaryMask::new(4, 4).unwrap();
        let bad = BBox {
            x0: 3,
            y0: 0,
            x1: 3,
            y1: 2,
        };
        assert!(matches!(crop(&m, &bad, false), Err(Error::InvalidBox { .. })));
    }

    #[test]
    fn resize_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_mask(&mut rng, 28, 28);
        assert_eq!(resize_nearest(&m, 28, 28).unwrap(), m);

        let small = BinaryMask::from_rows(&[[1, 0], [0, 0]]).unwrap();
        let big = resize_nearest(&small, 4, 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(big.get(x, y), x < 2 && y < 2);
            }
        }

        let up = resize_nearest(&m, 56, 56).unwrap();
        assert_eq!(resize_nearest(&up, 28, 28).unwrap(), m);
    }

    #[test]
    fn box_iou_and_clip() {
        let a = BBox::new(0, 0, 2, 2).unwrap();
        let b = BBox::new(1, 0, 3, 2).unwrap();
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(BBox::new(-5, -5, 2, 3).unwrap().clip(10, 10), BBox::new(0, 0, 2, 3).ok());
        assert_eq!(BBox::new(12, 0, 15, 3).unwrap().clip(10, 10), None);
    }

    #[test]
    fn proposal_canvas_mask_from_box_anchor() {
        let bbox = BBox::new(1, 1, 3, 2).unwrap();
        let p = BoxProposal::new(0, bbox, 0.5)
            .unwrap()
            .with_mask(BinaryMask::filled(2, 1, true).unwrap(), MaskAnchor::Box)
            .unwrap();
        let canvas = p.canvas_mask(4, 3).unwrap().unwrap();
        let expected = BinaryMask::from_rows(&[[0, 0, 0, 0], [0, 1, 1, 0], [0, 0, 0, 0]]).unwrap();
        assert_eq!(canvas, expected);
        assert!(BoxProposal::new(0, bbox, 1.5).is_err());
        assert!(BoxProposal::new(0, bbox, 0.5)
            .unwrap()
            .with_mask(BinaryMask::new(3, 3).unwrap(), MaskAnchor::Box)
            .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
            (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
                proptest::collection::vec(any::<bool>(), w * h)
                    .prop_map(move |bits| BinaryMask::from_bits(w, h, bits).unwrap())
            })
        }

        proptest! {
            #[test]
            fn nested_crop_equals_single_crop(
                m in mask_strategy(),
                ox in -5i64..10, oy in -5i64..10, ow in 1i64..15, oh in 1i64..15,
                ix in 0i64..15, iy in 0i64..15, iw in 1i64..15, ih in 1i64..15,
            ) {
                let outer = BBox::new(ox, oy, ox + ow, oy + oh).unwrap();
                // inner box expressed in the outer crop's frame and lying inside it
                let ix = ix % ow;
                let iy = iy % oh;
                let inner = BBox::new(ix, iy, (ix + iw).min(ow), (iy + ih).min(oh)).unwrap();
                let twice = crop(&crop(&m, &outer, false).unwrap(), &inner, false).unwrap();
                let once = crop(&m, &inner.translate(ox, oy), false).unwrap();
                prop_assert_eq!(twice, once);
            }

            #[test]
            fn integer_upscale_then_downscale_is_identity(m in mask_strategy(), f in 1usize..5) {
                let up = resize_nearest(&m, m.width() * f, m.height() * f).unwrap();
                prop_assert_eq!(resize_nearest(&up, m.width(), m.height()).unwrap(), m);
            }
        }
    }
}
