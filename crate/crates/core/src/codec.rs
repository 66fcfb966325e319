//! K-bin one-hot encoding of truncated distance maps and its inverses.
//!
//! Encoding assigns every pixel to the bin whose lower edge `r_n` is the
//! largest one not exceeding its distance value, producing `K` binary planes
//! with exactly one plane set per pixel. Decoding paints a disk of radius
//! `r_n` at every set bit of plane `n` and takes the union, which is the same
//! as dilating each plane with a fixed disk structuring element and OR-ing
//! the results. The soft decoder replaces the OR with a weighted sum of disk
//! correlations followed by a sigmoid and a threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::edt::TruncatedDistanceMap;
use crate::grid::{nearest_source, BinaryMask};
use crate::{Error, Result};

/// Default plane count.
pub const DEFAULT_BINS: usize = 5;
/// Default binarization threshold applied after the soft decoder's sigmoid.
pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_WEIGHT: f64 = 10.0;
pub const DEFAULT_BIAS: f64 = -5.0;

/// Bin lower edges `r_1 = 0 < r_2 < ... < r_K <= R`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizationScheme {
    radii: Vec<u32>,
    radius_cap: u32,
}

impl QuantizationScheme {
    pub fn new(radii: Vec<u32>, radius_cap: u32) -> Result<Self> {
        if radius_cap == 0 {
            return Err(Error::InvalidScheme("radius cap must be >= 1".into()));
        }
        if radii.len() < 2 {
            return Err(Error::InvalidScheme(format!("need at least 2 bins, got {}", radii.len())));
        }
        if radii[0] != 0 {
            return Err(Error::InvalidScheme(format!("first radius must be 0, got {}", radii[0])));
        }
        if radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidScheme(format!("radii not strictly increasing: {radii:?}")));
        }
        let last = *radii.last().unwrap();
        if last > radius_cap {
            return Err(Error::InvalidScheme(format!(
                "largest radius {last} exceeds cap {radius_cap}"
            )));
        }
        Ok(Self { radii, radius_cap })
    }

    /// `r_1 = 0` and `r_n = 1 + floor((n - 2)(R - 1) / (K - 1))` for `n >= 2`:
    /// bin 1 holds the value 0 and the other `K - 1` bins split `[1, R]`.
    pub fn uniform(bins: usize, radius_cap: u32) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidScheme(format!("need at least 2 bins, got {bins}")));
        }
        if radius_cap == 0 {
            return Err(Error::InvalidScheme("radius cap must be >= 1".into()));
        }
        if bins as u64 - 1 > radius_cap as u64 {
            return Err(Error::InvalidScheme(format!(
                "{bins} bins cannot partition [0, {radius_cap}]"
            )));
        }
        let cap = radius_cap as u64;
        let k = bins as u64;
        let mut radii = vec![0u32];
        radii.extend((2..=k).map(|n| (1 + (n - 2) * (cap - 1) / (k - 1)) as u32));
        Self::new(radii, radius_cap)
            .map_err(|_| Error::InvalidScheme(format!("{bins} uniform bins collide for R = {radius_cap}")))
    }

    pub fn bins(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[u32] {
        &self.radii
    }

    pub fn radius_cap(&self) -> u32 {
        self.radius_cap
    }

    /// Zero-based bin index: the largest `n` with `r_n <= value`.
    pub fn bin_of(&self, value: u32) -> usize {
        self.radii.partition_point(|&r| r <= value) - 1
    }

    /// Multiplies every radius and the cap by `factor`.
    pub fn scaled(&self, factor: u32) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("scale factor must be >= 1"));
        }
        Self::new(
            self.radii.iter().map(|&r| r * factor).collect(),
            self.radius_cap * factor,
        )
    }
}

/// Boundary-inclusion rule for a decoded disk of radius `r >= 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DiskMode {
    /// `d(p, q) <= r - 1`; never reaches the boundary set of an exact encoding.
    #[default]
    Conservative,
    /// `d(p, q) <= r`.
    Literal,
}

impl DiskMode {
    /// Largest included squared distance for radius `r`; `None` for the empty
    /// radius-0 disk.
    pub fn reach_sq(self, r: u32) -> Option<u64> {
        if r == 0 {
            return None;
        }
        let reach = match self {
            DiskMode::Conservative => r as u64 - 1,
            DiskMode::Literal => r as u64,
        };
        Some(reach * reach)
    }

    pub fn name(self) -> &'static str {
        match self {
            DiskMode::Conservative => "conservative",
            DiskMode::Literal => "literal",
        }
    }
}

impl std::str::FromStr for DiskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conservative" => Ok(DiskMode::Conservative),
            "literal" => Ok(DiskMode::Literal),
            other => Err(Error::param(format!("unknown disk mode {other:?}"))),
        }
    }
}

/// Disk structuring element stored as one horizontal span per row offset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disk {
    /// `(dy, half_width)`: offsets `dx` in `-half_width..=half_width`.
    spans: Vec<(i64, i64)>,
}

impl Disk {
    /// All offsets with `dx^2 + dy^2 <= reach_sq`.
    pub fn with_reach_sq(reach_sq: u64) -> Self {
        let reach = reach_sq.isqrt() as i64;
        let spans = (-reach..=reach)
            .map(|dy| (dy, (reach_sq - (dy * dy) as u64).isqrt() as i64))
            .collect();
        Self { spans }
    }

    /// Disk for radius `r` under `mode`; `None` when the disk is empty.
    pub fn for_radius(r: u32, mode: DiskMode) -> Option<Self> {
        mode.reach_sq(r).map(Self::with_reach_sq)
    }

    pub fn spans(&self) -> &[(i64, i64)] {
        &self.spans
    }

    pub fn area(&self) -> usize {
        self.spans.iter().map(|&(_, h)| (2 * h + 1) as usize).sum()
    }

    /// Sets every canvas pixel of the disk centred at `(cx, cy)`; the centre
    /// may lie outside the canvas.
    pub fn paint(&self, canvas: &mut BinaryMask, cx: i64, cy: i64) {
        let (w, h) = (canvas.width() as i64, canvas.height() as i64);
        for &(dy, half) in &self.spans {
            let y = cy + dy;
            if y < 0 || y >= h {
                continue;
            }
            let lo = (cx - half).max(0);
            let hi = (cx + half).min(w - 1);
            if lo > hi {
                continue;
            }
            let row = y as usize * w as usize;
            canvas.bits_mut()[row + lo as usize..=row + hi as usize].fill(true);
        }
    }
}

/// Binary dilation of `plane` by `disk`.
pub fn dilate(plane: &BinaryMask, disk: &Disk) -> BinaryMask {
    let mut out = BinaryMask::new(plane.width(), plane.height()).expect("valid dims");
    for y in 0..plane.height() {
        for x in 0..plane.width() {
            if plane.get(x, y) {
                disk.paint(&mut out, x as i64, y as i64);
            }
        }
    }
    out
}

/// `K` binary planes plus the scheme that gives each plane its radius.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitPlaneStack {
    width: usize,
    height: usize,
    planes: Vec<BinaryMask>,
    scheme: QuantizationScheme,
}

impl BitPlaneStack {
    /// Builds a stack without checking the one-hot invariant; see
    /// [`BitPlaneStack::check_one_hot`].
    pub fn from_planes(planes: Vec<BinaryMask>, scheme: QuantizationScheme) -> Result<Self> {
        if planes.len() != scheme.bins() {
            return Err(Error::DimensionMismatch(format!(
                "{} planes for a {}-bin scheme",
                planes.len(),
                scheme.bins()
            )));
        }
        let first = &planes[0];
        for p in &planes[1..] {
            first.expect_dims(p)?;
        }
        Ok(Self {
            width: first.width(),
            height: first.height(),
            planes,
            scheme,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bins(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[BinaryMask] {
        &self.planes
    }

    pub fn scheme(&self) -> &QuantizationScheme {
        &self.scheme
    }

    /// Fails on the first pixel (row-major) without exactly one active plane.
    pub fn check_one_hot(&self) -> Result<()> {
        for y in 0..self.height {
            for x in 0..self.width {
                let active = self.planes.iter().filter(|p| p.get(x, y)).count();
                if active != 1 {
                    return Err(Error::OneHotViolation { x, y, active });
                }
            }
        }
        Ok(())
    }

    /// `sum_n r_n * B_n(p)`.
    pub fn representative(&self, x: usize, y: usize) -> u32 {
        self.planes
            .iter()
            .zip(self.scheme.radii())
            .filter(|(p, _)| p.get(x, y))
            .map(|(_, &r)| r)
            .sum()
    }

    /// The planes as exact 0/1 probabilities.
    pub fn to_prob(&self) -> ProbPlaneStack {
        ProbPlaneStack {
            width: self.width,
            height: self.height,
            planes: self
                .planes
                .iter()
                .map(|p| p.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
                .collect(),
            scheme: self.scheme.clone(),
        }
    }
}

/// Per-plane probabilities in `[0, 1]`; planes need not sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbPlaneStack {
    width: usize,
    height: usize,
    planes: Vec<Vec<f64>>,
    scheme: QuantizationScheme,
}

impl ProbPlaneStack {
    pub fn new(
        width: usize,
        height: usize,
        planes: Vec<Vec<f64>>,
        scheme: QuantizationScheme,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: "width and height must be at least 1".into(),
            });
        }
        if planes.len() != scheme.bins() {
            return Err(Error::DimensionMismatch(format!(
                "{} planes for a {}-bin scheme",
                planes.len(),
                scheme.bins()
            )));
        }
        for p in &planes {
            if p.len() != width * height {
                return Err(Error::DimensionMismatch(format!(
                    "plane of {} values for {}x{}",
                    p.len(),
                    width,
                    height
                )));
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::param(format!("probability {v} outside [0,1]")));
            }
        }
        Ok(Self {
            width,
            height,
            planes,
            scheme,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn planes(&self) -> &[Vec<f64>] {
        &self.planes
    }

    pub fn scheme(&self) -> &QuantizationScheme {
        &self.scheme
    }

    /// Nearest-neighbour upsampling by an integer factor. Radii and cap are
    /// scaled by the same factor so disks keep their extent in source pixels.
    pub fn upsample_nearest(&self, factor: u32) -> Result<Self> {
        let scheme = self.scheme.scaled(factor)?;
        let f = factor as usize;
        let (w, h) = (self.width * f, self.height * f);
        let planes = self
            .planes
            .iter()
            .map(|p| {
                let mut out = Vec::with_capacity(w * h);
                for y in 0..h {
                    let sy = nearest_source(y, self.height, h);
                    out.extend((0..w).map(|x| p[sy * self.width + nearest_source(x, self.width, w)]));
                }
                out
            })
            .collect();
        Ok(Self {
            width: w,
            height: h,
            planes,
            scheme,
        })
    }
}

/// Weighted-sum parameters of the soft decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftDecodeParams {
    weights: Vec<f64>,
    bias: f64,
    threshold: f64,
}

impl SoftDecodeParams {
    pub fn new(weights: Vec<f64>, bias: f64, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::param(format!("threshold {threshold} not in (0,1)")));
        }
        if weights.iter().chain([&bias]).any(|v| !v.is_finite()) {
            return Err(Error::param("weights and bias must be finite"));
        }
        Ok(Self {
            weights,
            bias,
            threshold,
        })
    }

    /// `w_n = 10`, `b = -5`, threshold 0.4.
    pub fn default_for(bins: usize) -> Self {
        Self {
            weights: vec![DEFAULT_WEIGHT; bins],
            bias: DEFAULT_BIAS,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::param(format!("threshold {threshold} not in (0,1)")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// One-hot encodes a distance map.
pub fn encode(dmap: &TruncatedDistanceMap, scheme: &QuantizationScheme) -> Result<BitPlaneStack> {
    if dmap.radius_cap() != scheme.radius_cap() {
        return Err(Error::InvalidScheme(format!(
            "scheme cap {} does not match distance map cap {}",
            scheme.radius_cap(),
            dmap.radius_cap()
        )));
    }
    let (w, h) = (dmap.width(), dmap.height());
    let mut planes = vec![BinaryMask::new(w, h)?; scheme.bins()];
    for y in 0..h {
        for x in 0..w {
            planes[scheme.bin_of(dmap.get(x, y))].set(x, y, true);
        }
    }
    BitPlaneStack::from_planes(planes, scheme.clone())
}

/// Union of disks via per-plane dilation and OR.
pub fn hard_decode(stack: &BitPlaneStack, mode: DiskMode) -> Result<BinaryMask> {
    stack.check_one_hot()?;
    let dilated: Vec<BinaryMask> = stack
        .planes
        .par_iter()
        .zip(stack.scheme.radii().par_iter())
        .filter_map(|(plane, &r)| Disk::for_radius(r, mode).map(|disk| dilate(plane, &disk)))
        .collect();
    let mut out = BinaryMask::new(stack.width, stack.height)?;
    for d in &dilated {
        out.or_assign(d)?;
    }
    Ok(out)
}

/// Per-pixel union `U_p T(p, D(p))` with `D(p)` read back from the planes.
/// Quadratic in the radius; meant for checking [`hard_decode`].
pub fn hard_decode_oracle(stack: &BitPlaneStack, mode: DiskMode) -> Result<BinaryMask> {
    stack.check_one_hot()?;
    let (w, h) = (stack.width as i64, stack.height as i64);
    let mut out = BinaryMask::new(stack.width, stack.height)?;
    for py in 0..h {
        for px in 0..w {
            let radius = stack.representative(px as usize, py as usize);
            let Some(reach_sq) = mode.reach_sq(radius) else {
                continue;
            };
            let r = radius as i64;
            for qy in (py - r).max(0)..=(py + r).min(h - 1) {
                for qx in (px - r).max(0)..=(px + r).min(w - 1) {
                    let d2 = ((qx - px).pow(2) + (qy - py).pow(2)) as u64;
                    if d2 <= reach_sq {
                        out.set(qx as usize, qy as usize, true);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sum of `plane` over the disk centred at every pixel (zero outside).
fn disk_correlation(plane: &[f64], width: usize, height: usize, disk: &Disk) -> Vec<f64> {
    let mut prefix = vec![0.0f64; (width + 1) * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        let pre = &mut prefix[y * (width + 1)..(y + 1) * (width + 1)];
        for x in 0..width {
            pre[x + 1] = pre[x] + row[x];
        }
    }
    let (w, h) = (width as i64, height as i64);
    let mut out = vec![0.0f64; width * height];
    for y in 0..h {
        for &(dy, half) in disk.spans() {
            let sy = y + dy;
            if sy < 0 || sy >= h {
                continue;
            }
            let pre = &prefix[sy as usize * (width + 1)..(sy as usize + 1) * (width + 1)];
            for x in 0..w {
                let lo = (x - half).max(0);
                let hi = (x + half).min(w - 1);
                if lo <= hi {
                    out[(y * w + x) as usize] += pre[hi as usize + 1] - pre[lo as usize];
                }
            }
        }
    }
    out
}

/// Sigmoid of the weighted sum of disk correlations, thresholded.
pub fn soft_decode(
    stack: &ProbPlaneStack,
    params: &SoftDecodeParams,
    mode: DiskMode,
) -> Result<BinaryMask> {
    if params.weights.len() != stack.planes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} planes",
            params.weights.len(),
            stack.planes.len()
        )));
    }
    let (w, h) = (stack.width, stack.height);
    let responses: Vec<Vec<f64>> = stack
        .planes
        .par_iter()
        .zip(stack.scheme.radii().par_iter())
        .zip(params.weights.par_iter())
        .filter_map(|((plane, &r), &weight)| {
            Disk::for_radius(r, mode).map(|disk| {
                let mut c = disk_correlation(plane, w, h, &disk);
                c.iter_mut().for_each(|v| *v *= weight);
                c
            })
        })
        .collect();
    let mut logits = vec![params.bias; w * h];
    for resp in &responses {
        for (l, v) in logits.iter_mut().zip(resp) {
            *l += v;
        }
    }
    let bits = logits
        .into_iter()
        .map(|l| sigmoid(l) >= params.threshold)
        .collect();
    BinaryMask::from_bits(w, h, bits)
}

/// Flips every plane bit independently with probability `flip_prob`. Bits
/// are visited plane by plane in row-major order from a ChaCha8 stream
/// seeded with `seed`.
pub fn corrupt(stack: &BitPlaneStack, flip_prob: f64, seed: u64) -> Result<ProbPlaneStack> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::param(format!("flip probability {flip_prob} not in [0,1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = stack
        .planes
        .iter()
        .map(|p| {
            p.bits()
                .iter()
                .map(|&b| {
                    let flip = rng.gen::<f64>() < flip_prob;
                    if b != flip {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(ProbPlaneStack {
        width: stack.width,
        height: stack.height,
        planes,
        scheme: stack.scheme.clone(),
    })
}
