//! EDT timing harness: fast transform against the brute-force oracle.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::edt::{brute_force_edt, truncated_edt};
use crate::grid::BinaryMask;
use crate::synth;
use crate::{Error, Result};

/// Largest side the oracle is run on; larger sizes are extrapolated.
pub const ORACLE_MAX_SIZE: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub radius_cap: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub fast_secs: f64,
    /// Measured oracle time, `None` above [`ORACLE_MAX_SIZE`].
    pub oracle_secs: Option<f64>,
    /// Oracle time at this size: measured, or scaled from the largest
    /// measured size by the pixel count squared.
    pub oracle_estimate_secs: f64,
    pub speedup: f64,
    /// Bit-equality with the oracle where it ran.
    pub matches_oracle: Option<bool>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_reps<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut times = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    Ok((median(times), last.expect("reps >= 1")))
}

pub fn bench_mask(size: usize, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size as u64);
    synth::random_blobs(&mut rng, size, size)
}

/// Runs the benchmark. Sizes are processed in ascending order so the
/// oracle reference exists before it is extrapolated.
pub fn run(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.reps == 0 {
        return Err(Error::param("reps must be at least 1"));
    }
    if config.sizes.is_empty() || config.sizes.contains(&0) {
        return Err(Error::param("sizes must be non-empty and positive"));
    }
    let mut sizes = config.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();

    let mut reference: Option<(usize, f64)> = None;
    let mut rows = Vec::with_capacity(sizes.len());
    for size in sizes {
        let mask = bench_mask(size, config.seed);
        let (fast_secs, fast) = time_reps(config.reps, || truncated_edt(&mask, config.radius_cap))?;
        let (oracle_secs, matches) = if size <= ORACLE_MAX_SIZE {
            let (t, oracle) = time_reps(config.reps, || brute_force_edt(&mask, config.radius_cap))?;
            reference = Some((size, t));
            (Some(t), Some(oracle == fast))
        } else {
            (None, None)
        };
        let estimate = match (oracle_secs, reference) {
            (Some(t), _) => t,
            (None, Some((ref_size, t))) => {
                let ratio = (size * size) as f64 / (ref_size * ref_size) as f64;
                t * ratio * ratio
            }
            (None, None) => f64::NAN,
        };
        rows.push(BenchRow {
            size,
            fast_secs,
            oracle_secs,
            oracle_estimate_secs: estimate,
            speedup: estimate / fast_secs.max(1e-9),
            matches_oracle: matches,
        });
    }
    Ok(rows)
}

pub fn format_csv(rows: &[BenchRow], comments: &[String]) -> String {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.size.to_string(),
                format!("{:.6}", r.fast_secs),
                r.oracle_secs.map_or(String::new(), |t| format!("{t:.6}")),
                format!("{:.6}", r.oracle_estimate_secs),
                format!("{:.2}", r.speedup),
                r.matches_oracle.map_or(String::new(), |m| m.to_string()),
            ]
        })
        .collect();
    let header = ["size", "fast_secs", "oracle_secs", "oracle_estimate_secs", "speedup", "matches_oracle"];
    crate::io::format_csv(comments, &header, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(sizes: Vec<usize>, reps: usize) -> BenchConfig {
        BenchConfig {
            sizes,
            reps,
            radius_cap: 13,
            seed: 0,
        }
    }

    #[test]
    fn zero_reps_is_error() {
        assert!(run(&config(vec![16], 0)).is_err());
        assert!(run(&config(vec![], 1)).is_err());
    }

    #[test]
    fn small_sizes_match_oracle() {
        let rows = run(&config(vec![32, 16], 1)).unwrap();
        assert_eq!(rows.iter().map(|r| r.size).collect::<Vec<_>>(), vec![16, 32]);
        assert!(rows.iter().all(|r| r.matches_oracle == Some(true)));
    }

    #[test]
    fn extrapolation_scales_with_pixel_count_squared() {
        let rows = run(&config(vec![128, 256], 1)).unwrap();
        assert_eq!(rows[0].matches_oracle, Some(true));
        assert_eq!(rows[1].oracle_secs, None);
        let ratio = rows[1].oracle_estimate_secs / rows[0].oracle_estimate_secs;
        assert!((ratio - 16.0).abs() < 1e-9);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
