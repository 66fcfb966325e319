//! The `dtmask` command-line front end.
//!
//! Every output file carries the run configuration as `#` comment lines.
//! Exit codes: 0 success, 1 internal or assertion failure, 2 input error.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::bench::{self, BenchConfig};
use crate::boxsim::{self, Perturbation, SweepConfig, DEFAULT_NORM_SIZE};
use crate::codec::{
    self, DiskMode, QuantizationScheme, SoftDecodeParams, DEFAULT_BIAS, DEFAULT_BINS, DEFAULT_THRESHOLD,
    DEFAULT_WEIGHT,
};
use crate::edt;
use crate::eval::{self, EvalConfig, BOX_NMS_IOU, BOX_NMS_TOP_K, MASK_NMS_IOU};
use crate::grid::{extract_instance, BBox, BinaryMask, BoxProposal, MaskAnchor};
use crate::io;

pub const DEFAULT_RADIUS: u32 = 13;
pub const THREADS_ENV: &str = "DTMASK_THREADS";

/// Marks a failure that is not the caller's fault (exit code 1).
#[derive(Debug)]
pub struct InternalFailure(pub String);

impl fmt::Display for InternalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InternalFailure {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threads {
    Auto,
    Count(usize),
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Count(n)),
            _ => Err(format!("expected a positive integer or \"auto\", got {s:?}")),
        }
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Auto => f.write_str("auto"),
            Threads::Count(n) => write!(f, "{n}"),
        }
    }
}

/// Normalized window size, or `unit` for one window pixel per image pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    Unit,
    Size(usize, usize),
}

impl FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("unit") {
            return Ok(Norm::Unit);
        }
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH or \"unit\", got {s:?}"))?;
        match (w.parse::<usize>(), h.parse::<usize>()) {
            (Ok(w), Ok(h)) if w > 0 && h > 0 => Ok(Norm::Size(w, h)),
            _ => Err(format!("expected WxH with positive sizes, got {s:?}")),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Unit => f.write_str("unit"),
            Norm::Size(w, h) => write!(f, "{w}x{h}"),
        }
    }
}

/// Inclusive integer range `a:b:step` (or a single value).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Range {
    pub start: i64,
    pub end: i64,
    pub step: i64,
}

impl Range {
    pub fn values(&self) -> Vec<i64> {
        let mut out = Vec::new();
        let mut v = self.start;
        while v <= self.end {
            out.push(v);
            v += self.step;
        }
        out
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| format!("expected a:b:step, got {s:?}"))?;
        let range = match nums[..] {
            [a] => Range { start: a, end: a, step: 1 },
            [a, b] => Range { start: a, end: b, step: 1 },
            [a, b, step] => Range { start: a, end: b, step },
            _ => return Err(format!("expected a:b:step, got {s:?}")),
        };
        if range.step <= 0 || range.start > range.end {
            return Err(format!("range {s:?} must satisfy a <= b and step > 0"));
        }
        Ok(range)
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxArg(pub BBox);

impl FromStr for BoxArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| format!("expected x0,y0,x1,y1, got {s:?}"))?;
        let [x0, y0, x1, y1] = v[..] else {
            return Err(format!("expected x0,y0,x1,y1, got {s:?}"));
        };
        BBox::new(x0, y0, x1, y1).map(BoxArg).map_err(|e| e.to_string())
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Parser)]
#[command(name = "dtmask", version, about = "Distance-transform mask codec and evaluation tools")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads, or "auto". Overridden by DTMASK_THREADS.
    #[arg(long, global = true, default_value = "auto")]
    pub threads: Threads,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Truncated distance transform of a mask.
    Dt(DtArgs),
    /// Encode a mask into one-hot bit planes.
    Encode(EncodeArgs),
    /// Union-of-disks decode of a bit-plane stack.
    Decode(DecodeArgs),
    /// Corrupt a stack with bit flips, then soft-decode it.
    Softdecode(SoftDecodeArgs),
    /// Box-perturbation robustness sweep over one instance.
    Boxsim(BoxsimArgs),
    /// Evaluate proposals against a label map.
    Eval(EvalArgs),
    /// Time the fast transform against the brute-force oracle.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct DtArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// Use the brute-force oracle.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "conservative")]
    pub mode: DiskMode,
    /// Accept stacks that violate one-hot.
    #[arg(long)]
    pub lax: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SoftDecodeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub flip_prob: f64,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Summation weight applied to every plane.
    #[arg(long, default_value_t = DEFAULT_WEIGHT)]
    pub weight: f64,
    #[arg(long, default_value_t = DEFAULT_BIAS, allow_hyphen_values = true)]
    pub bias: f64,
    #[arg(long, default_value = "conservative")]
    pub mode: DiskMode,
    #[arg(long)]
    pub lax: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoxsimArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub id: u32,
    /// Base box; defaults to the tight box of the instance.
    #[arg(long = "box")]
    pub bbox: Option<BoxArg>,
    /// Pixels removed from every side, `a:b:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub shrink_range: Option<Range>,
    /// Horizontal centre shifts, `a:b:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub shift_range: Option<Range>,
    /// Vertical centre shifts, `a:b:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub shift_y_range: Option<Range>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: u32,
    #[arg(long, default_value_t = Norm::Size(DEFAULT_NORM_SIZE, DEFAULT_NORM_SIZE))]
    pub norm: Norm,
    #[arg(long, default_value = "conservative")]
    pub mode: DiskMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = eval::DEFAULT_AR_NS)]
    pub ar_n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = eval::DEFAULT_AP_IOUS)]
    pub ap_iou: Vec<f64>,
    /// Mask NMS IoU threshold.
    #[arg(long, default_value_t = MASK_NMS_IOU)]
    pub nms: f64,
    #[arg(long)]
    pub no_nms: bool,
    /// Run box NMS with top-k truncation before mask NMS.
    #[arg(long)]
    pub box_nms: bool,
    #[arg(long, default_value_t = BOX_NMS_IOU)]
    pub box_nms_iou: f64,
    #[arg(long, default_value_t = BOX_NMS_TOP_K)]
    pub top_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [128, 256, 512])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: u32,
    #[arg(long)]
    pub out: PathBuf,
}

/// Settings shared by every command, echoed into output headers.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub bins: usize,
    pub radius: u32,
    pub norm: Norm,
    pub mode: DiskMode,
    pub weight: f64,
    pub bias: f64,
    pub threshold: f64,
    pub threads: Threads,
    pub box_nms_iou: f64,
    pub box_nms_top_k: usize,
    pub mask_nms_iou: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            bins: DEFAULT_BINS,
            radius: DEFAULT_RADIUS,
            norm: Norm::Size(DEFAULT_NORM_SIZE, DEFAULT_NORM_SIZE),
            mode: DiskMode::Conservative,
            weight: DEFAULT_WEIGHT,
            bias: DEFAULT_BIAS,
            threshold: DEFAULT_THRESHOLD,
            threads: Threads::Auto,
            box_nms_iou: BOX_NMS_IOU,
            box_nms_top_k: BOX_NMS_TOP_K,
            mask_nms_iou: MASK_NMS_IOU,
        }
    }
}

impl RunConfig {
    /// Comment lines for an output header: tool, command, config, then
    /// command-specific `extra` lines.
    pub fn provenance(&self, command: &str, extra: &[String]) -> Vec<String> {
        let mut lines = vec![
            format!("dtmask {} {command}", env!("CARGO_PKG_VERSION")),
            format!("seed={}", self.seed),
            format!("bins={}", self.bins),
            format!("radius={}", self.radius),
            format!("norm={}", self.norm),
            format!("mode={}", self.mode.name()),
            format!("soft_weight={}", self.weight),
            format!("soft_bias={}", self.bias),
            format!("soft_threshold={}", self.threshold),
            format!("threads={}", self.threads),
            format!("box_nms_iou={}", self.box_nms_iou),
            format!("box_nms_top_k={}", self.box_nms_top_k),
            format!("mask_nms_iou={}", self.mask_nms_iou),
        ];
        lines.extend(extra.iter().cloned());
        lines
    }
}

fn resolve_threads(flag: Threads) -> anyhow::Result<Threads> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|e: String| anyhow::anyhow!("{THREADS_ENV}: {e}")),
        Err(_) => Ok(flag),
    }
}

fn init_threads(threads: Threads) {
    let n = match threads {
        Threads::Auto => 0,
        Threads::Count(n) => n,
    };
    // a second initialisation in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

fn path_line(key: &str, path: &Path) -> String {
    format!("{key}={}", path.display())
}

fn cmd_dt(cfg: &RunConfig, a: &DtArgs) -> anyhow::Result<()> {
    let mask = io::read_mask(&a.input)?;
    let dmap = if a.oracle {
        edt::brute_force_edt(&mask, a.radius)?
    } else {
        edt::truncated_edt(&mask, a.radius)?
    };
    // oracle and fast outputs are byte-identical, so the flag is not echoed
    let cfg = RunConfig { radius: a.radius, ..cfg.clone() };
    let comments = cfg.provenance("dt", &[path_line("in", &a.input)]);
    io::write_dtm_with_comments(&a.out, &dmap, &comments)?;
    Ok(())
}

fn cmd_encode(cfg: &RunConfig, a: &EncodeArgs) -> anyhow::Result<()> {
    let mask = io::read_mask(&a.input)?;
    let scheme = QuantizationScheme::uniform(a.bins, a.radius)?;
    let stack = codec::encode(&edt::truncated_edt(&mask, a.radius)?, &scheme)?;
    let cfg = RunConfig {
        bins: a.bins,
        radius: a.radius,
        ..cfg.clone()
    };
    let comments = cfg.provenance("encode", &[path_line("in", &a.input)]);
    io::write_bps_with_comments(&a.out, &stack, &comments)?;
    Ok(())
}

fn cmd_decode(cfg: &RunConfig, a: &DecodeArgs) -> anyhow::Result<()> {
    let stack = io::read_bps(&a.input, a.lax)?;
    let mask = codec::hard_decode(&stack, a.mode)?;
    let cfg = RunConfig {
        bins: stack.bins(),
        mode: a.mode,
        ..cfg.clone()
    };
    let comments = cfg.provenance(
        "decode",
        &[path_line("in", &a.input), format!("radii={}", join(stack.scheme().radii()))],
    );
    io::write_mask_with_comments(&a.out, &mask, &comments)?;
    Ok(())
}

fn cmd_softdecode(cfg: &RunConfig, a: &SoftDecodeArgs) -> anyhow::Result<()> {
    let stack = io::read_bps(&a.input, a.lax)?;
    let params = SoftDecodeParams::new(vec![a.weight; stack.bins()], a.bias, a.threshold)?;
    let noisy = codec::corrupt(&stack, a.flip_prob, cfg.seed)?;
    let mask = codec::soft_decode(&noisy, &params, a.mode)?;
    let cfg = RunConfig {
        bins: stack.bins(),
        mode: a.mode,
        weight: a.weight,
        bias: a.bias,
        threshold: a.threshold,
        ..cfg.clone()
    };
    let comments = cfg.provenance(
        "softdecode",
        &[
            path_line("in", &a.input),
            format!("radii={}", join(stack.scheme().radii())),
            format!("flip_prob={}", a.flip_prob),
        ],
    );
    io::write_mask_with_comments(&a.out, &mask, &comments)?;
    Ok(())
}

fn tight_box(mask: &BinaryMask) -> Option<BBox> {
    let (w, h) = (mask.width(), mask.height());
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        return None;
    }
    BBox::new(x0 as i64, y0 as i64, x1 as i64, y1 as i64).ok()
}

/// Perturbation grid: every shrink combined with every shift pair.
pub fn perturbation_grid(
    bbox: &BBox,
    shrink: Option<Range>,
    shift_x: Option<Range>,
    shift_y: Option<Range>,
) -> crate::Result<Vec<Perturbation>> {
    let zero = Range { start: 0, end: 0, step: 1 };
    let mut out = Vec::new();
    for s in shrink.unwrap_or(zero).values() {
        let base = Perturbation::shrink(bbox, s)?;
        for dx in shift_x.unwrap_or(zero).values() {
            for dy in shift_y.unwrap_or(zero).values() {
                out.push(Perturbation::new(dx, dy, base.sx, base.sy)?);
            }
        }
    }
    Ok(out)
}

fn cmd_boxsim(cfg: &RunConfig, a: &BoxsimArgs) -> anyhow::Result<()> {
    let labels = io::read_label_map(&a.labels)?;
    let mask = extract_instance(&labels, a.id)?;
    let bbox = match a.bbox {
        Some(BoxArg(b)) => b,
        None => tight_box(&mask).context("instance has no pixels")?,
    };
    let scheme = QuantizationScheme::uniform(a.bins, a.radius)?;
    let perts = perturbation_grid(&bbox, a.shrink_range, a.shift_range, a.shift_y_range)?;
    let sweep = SweepConfig {
        norm: match a.norm {
            Norm::Unit => None,
            Norm::Size(w, h) => Some((w, h)),
        },
        mode: a.mode,
    };
    let records = boxsim::robustness_sweep(&mask, &bbox, &perts, &scheme, &sweep)?;
    let cfg = RunConfig {
        bins: a.bins,
        radius: a.radius,
        norm: a.norm,
        mode: a.mode,
        ..cfg.clone()
    };
    let none = || "none".to_string();
    let comments = cfg.provenance(
        "boxsim",
        &[
            path_line("labels", &a.labels),
            format!("id={}", a.id),
            format!("box={},{},{},{}", bbox.x0, bbox.y0, bbox.x1, bbox.y1),
            format!("shrink_range={}", a.shrink_range.map_or_else(none, |r| r.to_string())),
            format!("shift_range={}", a.shift_range.map_or_else(none, |r| r.to_string())),
            format!("shift_y_range={}", a.shift_y_range.map_or_else(none, |r| r.to_string())),
        ],
    );
    io::write_records_csv(&a.out, &records, &comments)?;
    Ok(())
}

/// Proposals without a mask use their box as the mask.
fn with_box_masks(proposals: Vec<BoxProposal>) -> crate::Result<Vec<BoxProposal>> {
    proposals
        .into_iter()
        .map(|p| {
            if p.mask.is_some() {
                return Ok(p);
            }
            let mask = BinaryMask::filled(p.bbox.width() as usize, p.bbox.height() as usize, true)?;
            p.with_mask(mask, MaskAnchor::Box)
        })
        .collect()
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs) -> anyhow::Result<()> {
    let labels = io::read_label_map(&a.gt)?;
    let gts = labels
        .instance_ids()
        .into_iter()
        .map(|id| extract_instance(&labels, id))
        .collect::<crate::Result<Vec<_>>>()?;
    if gts.is_empty() {
        return Err(crate::Error::EmptyGroundTruth.into());
    }
    let mut proposals = with_box_masks(io::read_proposals(&a.proposals)?)?;
    if a.box_nms {
        proposals = eval::nms_top_k(&proposals, a.box_nms_iou, false, a.top_k)?;
    }
    if !a.no_nms {
        proposals = eval::nms(&proposals, a.nms, true)?;
    }
    let config = EvalConfig {
        ar_ns: a.ar_n.clone(),
        ap_ious: a.ap_iou.clone(),
        ..EvalConfig::default()
    };
    let report = eval::evaluate(&proposals, &gts, &config)?;
    let cfg = RunConfig {
        box_nms_iou: a.box_nms_iou,
        box_nms_top_k: a.top_k,
        mask_nms_iou: a.nms,
        ..cfg.clone()
    };
    let comments = cfg.provenance(
        "eval",
        &[
            path_line("proposals", &a.proposals),
            path_line("gt", &a.gt),
            format!("box_nms={}", if a.box_nms { "on" } else { "off" }),
            format!("mask_nms={}", if a.no_nms { "off" } else { "on" }),
            format!("ar_n={}", join(&a.ar_n)),
            format!("ap_iou={}", join(&a.ap_iou)),
        ],
    );
    io::write_report_csv(&a.out, &report, &comments)?;
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, a: &BenchArgs) -> anyhow::Result<()> {
    let rows = bench::run(&BenchConfig {
        sizes: a.sizes.clone(),
        reps: a.reps,
        radius_cap: a.radius,
        seed: cfg.seed,
    })?;
    let cfg = RunConfig { radius: a.radius, ..cfg.clone() };
    let comments = cfg.provenance(
        "bench",
        &[format!("sizes={}", join(&a.sizes)), format!("reps={}", a.reps)],
    );
    io::write_text_file(&a.out, &bench::format_csv(&rows, &comments))?;
    if let Some(r) = rows.iter().find(|r| r.matches_oracle == Some(false)) {
        return Err(InternalFailure(format!("fast EDT differs from the oracle at size {}", r.size)).into());
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let threads = resolve_threads(cli.threads)?;
    init_threads(threads);
    let cfg = RunConfig {
        seed: cli.seed,
        threads,
        ..RunConfig::default()
    };
    match &cli.command {
        Command::Dt(a) => cmd_dt(&cfg, a),
        Command::Encode(a) => cmd_encode(&cfg, a),
        Command::Decode(a) => cmd_decode(&cfg, a),
        Command::Softdecode(a) => cmd_softdecode(&cfg, a),
        Command::Boxsim(a) => cmd_boxsim(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Bench(a) => cmd_bench(&cfg, a),
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<InternalFailure>().is_some() {
        1
    } else {
        2
    }
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("dtmask: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
