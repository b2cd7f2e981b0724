//! The randomized masking operator: per-instance target selection for
//! training, validation-target subsets, and the five-rate test schedule.
//!
//! Per instance, ceil(rate * J) attribute indices are drawn uniformly
//! without replacement from an instance-specific derived seed, so plans for
//! disjoint instance ranges can be generated (and consumed) concurrently
//! with identical results.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed::{self, stage};

/// Test-time masking rates, in schedule order.
pub const TEST_RATES: [f64; 5] = [0.10, 0.20, 0.40, 0.60, 0.80];

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub rate: f64,
    pub seed: u64,
    /// Per instance: sorted masked attribute indices.
    pub masked: Vec<Vec<usize>>,
    /// Per instance: sorted validation subset of `masked`. Empty until
    /// [`select_validation_targets`] fills it (test plans keep it empty).
    pub validation: Vec<Vec<usize>>,
}

impl MaskPlan {
    pub fn n(&self) -> usize {
        self.masked.len()
    }

    pub fn is_masked(&self, instance: usize, attr: usize) -> bool {
        self.masked[instance].binary_search(&attr).is_ok()
    }

    pub fn is_validation(&self, instance: usize, attr: usize) -> bool {
        self.validation[instance].binary_search(&attr).is_ok()
    }
}

/// ceil(rate * j) computed with a snap guard: decimal rates times small J
/// can land a hair above an exact integer in binary floating point, and
/// ceil would then overshoot by one.
fn ceil_count(rate: f64, j: usize) -> usize {
    let x = rate * j as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

pub fn make_mask_plan(n: usize, j: usize, rate: f64, seed: u64) -> Result<MaskPlan> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidArgument(format!("mask rate {rate} outside (0, 1)")));
    }
    if j < 1 {
        return Err(Error::InvalidArgument("no attributes to mask".into()));
    }
    let m = ceil_count(rate, j);
    if m >= j {
        return Err(Error::InvalidArgument(format!(
            "rate {rate} masks all {j} attributes; at least one must stay observable"
        )));
    }
    let masked = (0..n)
        .map(|i| {
            let mut rng = seed::rng(seed::derive2(seed, stage::MASK_DRAW, i as u64));
            let mut idx = rand::seq::index::sample(&mut rng, j, m).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    Ok(MaskPlan { rate, seed, masked, validation: vec![Vec::new(); n] })
}

/// Marks ceil(fraction * |masked|) of each instance's masked indices as
/// validation targets; returns a new plan, input untouched.
pub fn select_validation_targets(plan: &MaskPlan, fraction: f64, seed: u64) -> Result<MaskPlan> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {fraction} outside (0, 1]"
        )));
    }
    let validation = plan
        .masked
        .iter()
        .enumerate()
        .map(|(i, masked)| {
            let v = ceil_count(fraction, masked.len());
            let mut rng = seed::rng(seed::derive2(seed, stage::VALIDATION_DRAW, i as u64));
            let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, masked.len(), v)
                .into_iter()
                .map(|k| masked[k])
                .collect();
            picks.sort_unstable();
            picks
        })
        .collect();
    Ok(MaskPlan { validation, ..plan.clone() })
}

/// One independent plan per rate in [`TEST_RATES`].
pub fn test_mask_schedule(n: usize, j: usize, seed: u64) -> Result<Vec<MaskPlan>> {
    TEST_RATES
        .iter()
        .enumerate()
        .map(|(r, rate)| make_mask_plan(n, j, *rate, seed::derive2(seed, stage::TEST_MASK, r as u64)))
        .collect()
}

fn join(indices: &[usize]) -> String {
    indices.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_indices(field: &str) -> Result<Vec<usize>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad index '{tok}' in mask plan")))
        })
        .collect()
}

/// Line-oriented audit format: a header, then one
/// `instance<TAB>masked-csv<TAB>validation-csv` line per instance.
pub fn write_mask_plan(plan: &MaskPlan, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let io_err = |e| Error::io(path, e);
    writeln!(out, "# mask-plan v1 rate={} seed={} n={}", plan.rate, plan.seed, plan.n())
        .map_err(io_err)?;
    for i in 0..plan.n() {
        writeln!(out, "{i}\t{}\t{}", join(&plan.masked[i]), join(&plan.validation[i]))
            .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_mask_plan(path: impl AsRef<Path>) -> Result<MaskPlan> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines();

    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty mask plan file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let mut rate = None;
    let mut seed = None;
    let mut n = None;
    if !header.starts_with("# mask-plan v1") {
        return Err(Error::Parse(format!("unrecognized mask plan header: {header}")));
    }
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("rate=") {
            rate = v.parse::<f64>().ok();
        } else if let Some(v) = tok.strip_prefix("seed=") {
            seed = v.parse::<u64>().ok();
        } else if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse::<usize>().ok();
        }
    }
    let (rate, seed, n) = match (rate, seed, n) {
        (Some(r), Some(s), Some(n)) => (r, s, n),
        _ => return Err(Error::Parse(format!("incomplete mask plan header: {header}"))),
    };

    let mut masked = Vec::with_capacity(n);
    let mut validation = Vec::with_capacity(n);
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "mask plan line {}: expected 3 tab-separated fields",
                lineno + 2
            )));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad instance id '{}'", fields[0])))?;
        if id != masked.len() {
            return Err(Error::Parse(format!(
                "mask plan instances out of order: got {id}, expected {}",
                masked.len()
            )));
        }
        masked.push(parse_indices(fields[1])?);
        validation.push(parse_indices(fields[2])?);
    }
    if masked.len() != n {
        return Err(Error::Parse(format!(
            "mask plan header said n={n} but file has {} instances",
            masked.len()
        )));
    }
    Ok(MaskPlan { rate, seed, masked, validation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn masked_counts_match_protocol() {
        for (j, rate, want) in [(23, 0.2, 5), (7, 0.2, 2), (10, 0.8, 8), (23, 0.4, 10)] {
            let plan = make_mask_plan(4, j, rate, 1).unwrap();
            for m in &plan.masked {
                assert_eq!(m.len(), want, "J={j} rate={rate}");
            }
        }
    }

    #[test]
    fn validation_counts() {
        for (j, rate, want_v) in [(23usize, 0.2, 2usize), (7, 0.2, 1), (10, 0.8, 2)] {
            let plan = make_mask_plan(6, j, rate, 1).unwrap();
            let plan = select_validation_targets(&plan, 0.25, 2).unwrap();
            for i in 0..plan.n() {
                assert_eq!(plan.validation[i].len(), want_v);
                for v in &plan.validation[i] {
                    assert!(plan.is_masked(i, *v), "validation must be masked");
                }
            }
        }
    }

    #[test]
    fn schedule_counts() {
        let plans = test_mask_schedule(3, 23, 9).unwrap();
        let counts: Vec<usize> = plans.iter().map(|p| p.masked[0].len()).collect();
        assert_eq!(counts, vec![3, 5, 10, 14, 19]);

        let plans = test_mask_schedule(3, 7, 9).unwrap();
        let counts: Vec<usize> = plans.iter().map(|p| p.masked[0].len()).collect();
        assert_eq!(counts, vec![1, 2, 3, 5, 6]);
    }

    #[test]
    fn schedule_is_deterministic_and_rates_independent() {
        let a = test_mask_schedule(5, 23, 11).unwrap();
        let b = test_mask_schedule(5, 23, 11).unwrap();
        assert_eq!(a, b);
        // Independent sub-seeds: the 10% plan is not a prefix of the 20% plan.
        let nested = (0..5).all(|i| a[1].masked[i].starts_with(&a[0].masked[i]));
        assert!(!nested);
    }

    #[test]
    fn masking_everything_is_rejected() {
        assert!(make_mask_plan(1, 1, 0.5, 0).is_err());
        assert!(make_mask_plan(1, 4, 0.8, 0).is_err(), "ceil(3.2)=4 leaves nothing observed");
        assert!(make_mask_plan(1, 10, 0.95, 0).is_err());
    }

    #[test]
    fn marginal_frequency_gof() {
        // Each attribute should be masked in m/J of instances; chi-square
        // goodness of fit over attribute counts at alpha = 0.01.
        let (n, j, rate) = (100_000usize, 10usize, 0.3);
        let plan = make_mask_plan(n, j, rate, 12345).unwrap();
        let m = plan.masked[0].len();
        let mut counts = vec![0.0f64; j];
        for masked in &plan.masked {
            for a in masked {
                counts[*a] += 1.0;
            }
        }
        let expected = (n * m) as f64 / j as f64;
        let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        let crit = ChiSquared::new((j - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(stat < crit, "GOF stat {stat:.2} >= {crit:.2}");
    }

    #[test]
    fn plan_text_round_trip() {
        let plan = make_mask_plan(17, 9, 0.4, 77).unwrap();
        let plan = select_validation_targets(&plan, 0.25, 78).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_mask_plan(&plan, tmp.path()).unwrap();
        let back = read_mask_plan(tmp.path()).unwrap();
        assert_eq!(back, plan);
    }

    proptest! {
        #[test]
        fn plan_invariants(
            n in 1usize..40,
            j in 2usize..30,
            rate_pct in 5u32..90,
            seed in any::<u64>(),
        ) {
            let rate = rate_pct as f64 / 100.0;
            let Ok(plan) = make_mask_plan(n, j, rate, seed) else {
                // Only legal failure: everything would be masked.
                prop_assert!(ceil_count(rate, j) >= j);
                return Ok(());
            };
            let m = ceil_count(rate, j);
            for masked in &plan.masked {
                prop_assert_eq!(masked.len(), m);
                prop_assert!(masked.windows(2).all(|w| w[0] < w[1]), "sorted, duplicate-free");
                prop_assert!(masked.iter().all(|a| *a < j));
                prop_assert!(m < j, "at least one attribute observable");
            }
            let again = make_mask_plan(n, j, rate, seed).unwrap();
            prop_assert_eq!(&again, &plan, "pure function of (n, J, rate, seed)");

            let with_v = select_validation_targets(&plan, 0.25, seed ^ 1).unwrap();
            for i in 0..n {
                prop_assert_eq!(with_v.validation[i].len(), ceil_count(0.25, m));
                for v in &with_v.validation[i] {
                    prop_assert!(with_v.is_masked(i, *v));
                }
            }
        }
    }
}
