//! Empirical consistency harness for pseudo-likelihood estimation: on a
//! small log-linear family where exact maximum likelihood is tractable,
//! both estimators are fit on growing samples and their parameter errors
//! are tabulated. Three binary variables with full pairwise interactions
//! form the smallest identifiable strictly-positive family with nontrivial
//! conditionals.
//!
//! Parameter layout: theta[0..3] are the main effects of variables 0..2,
//! theta[3..6] the pairwise interactions (0,1), (0,2), (1,2). The joint is
//! P(x) proportional to exp(sum theta_j x_j + sum theta_jk x_j x_k), which
//! is strictly positive for every finite theta.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

pub const PARAMS: usize = 6;
const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearModel {
    pub theta: [f64; PARAMS],
}

/// Bits of the 8 joint states, variable j at bit j.
fn state_bits(s: usize) -> [f64; 3] {
    [(s & 1) as f64, ((s >> 1) & 1) as f64, ((s >> 2) & 1) as f64]
}

/// Sufficient statistics of one state: the three variables and their three
/// pairwise products.
fn suffstats(x: [f64; 3]) -> [f64; PARAMS] {
    [x[0], x[1], x[2], x[0] * x[1], x[0] * x[2], x[1] * x[2]]
}

impl LogLinearModel {
    pub fn new(theta: [f64; PARAMS]) -> LogLinearModel {
        LogLinearModel { theta }
    }

    fn energy(&self, x: [f64; 3]) -> f64 {
        suffstats(x).iter().zip(&self.theta).map(|(t, th)| t * th).sum()
    }

    /// Exact joint over the 8 states, normalized against the max energy so
    /// extreme parameters stay finite. Every entry is strictly positive.
    pub fn joint_probs(&self) -> [f64; 8] {
        let energies: Vec<f64> = (0..8).map(|s| self.energy(state_bits(s))).collect();
        let m = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs = [0.0; 8];
        let mut z = 0.0;
        for (p, e) in probs.iter_mut().zip(&energies) {
            *p = (e - m).exp();
            z += *p;
        }
        for p in &mut probs {
            *p /= z;
        }
        probs
    }

    /// Exact IID sampling by inverse CDF over the enumerated joint.
    pub fn sample(&self, n: usize, seed_value: u64) -> Vec<[u8; 3]> {
        let probs = self.joint_probs();
        let mut cum = [0.0; 8];
        let mut acc = 0.0;
        for (c, p) in cum.iter_mut().zip(&probs) {
            acc += p;
            *c = acc;
        }
        cum[7] = 1.0;
        let mut rng = seed::rng(seed_value);
        (0..n)
            .map(|_| {
                let u: f64 = rng.gen();
                let s = cum.iter().position(|c| u < *c).unwrap_or(7);
                let b = state_bits(s);
                [b[0] as u8, b[1] as u8, b[2] as u8]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: [f64; PARAMS],
    /// Objective value per accepted iteration, non-decreasing.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub init: [f64; PARAMS],
    /// Parameters left free to move; frozen ones stay at their init value.
    pub free: [bool; PARAMS],
    /// Infinity-norm tolerance on the mean-objective gradient.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> FitOptions {
        FitOptions { init: [0.0; PARAMS], free: [true; PARAMS], tol: 1e-8, max_iter: 100_000 }
    }
}

/// State counts plus the non-degeneracy precondition: both values of every
/// variable must occur, otherwise either estimator diverges.
fn state_counts(data: &[[u8; 3]]) -> Result<[f64; 8]> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let mut counts = [0.0; 8];
    for x in data {
        debug_assert!(x.iter().all(|&b| b <= 1));
        counts[(x[0] as usize) | (x[1] as usize) << 1 | (x[2] as usize) << 2] += 1.0;
    }
    for j in 0..3 {
        let ones: f64 =
            (0..8).filter(|s| s >> j & 1 == 1).map(|s| counts[s]).sum();
        if ones == 0.0 || ones == data.len() as f64 {
            return Err(Error::InvalidArgument(format!(
                "variable {j} is constant in the sample; estimates diverge"
            )));
        }
    }
    Ok(counts)
}

fn log1p_exp(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn pair_param(j: usize, k: usize) -> usize {
    let (lo, hi) = if j < k { (j, k) } else { (k, j) };
    3 + PAIRS.iter().position(|&p| p == (lo, hi)).expect("pair exists")
}

/// Mean log pseudo-likelihood and its gradient. Each variable's conditional
/// given the other two is logistic with activation theta_j + sum over
/// neighbors of theta_jk x_k; the objective sums all three conditionals
/// over the (aggregated) sample.
fn pl_objective(counts: &[f64; 8], n: f64, theta: &[f64; PARAMS]) -> (f64, [f64; PARAMS]) {
    let mut f = 0.0;
    let mut g = [0.0; PARAMS];
    for (s, &c) in counts.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let x = state_bits(s);
        for j in 0..3 {
            let mut a = theta[j];
            for k in 0..3 {
                if k != j {
                    a += theta[pair_param(j, k)] * x[k];
                }
            }
            f += c * (x[j] * a - log1p_exp(a));
            let r = c * (x[j] - sigmoid(a));
            g[j] += r;
            for k in 0..3 {
                if k != j {
                    g[pair_param(j, k)] += r * x[k];
                }
            }
        }
    }
    for v in &mut g {
        *v /= n;
    }
    (f / n, g)
}

/// Mean exact log-likelihood and its gradient (empirical minus expected
/// sufficient statistics); the 8-state partition function is enumerable.
fn ml_objective(counts: &[f64; 8], n: f64, theta: &[f64; PARAMS]) -> (f64, [f64; PARAMS]) {
    let model = LogLinearModel::new(*theta);
    let probs = model.joint_probs();
    let energies: Vec<f64> = (0..8).map(|s| model.energy(state_bits(s))).collect();
    let m = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lnz = m + energies.iter().map(|e| (e - m).exp()).sum::<f64>().ln();

    let mut f = -lnz;
    let mut g = [0.0; PARAMS];
    for (s, &c) in counts.iter().enumerate() {
        let t = suffstats(state_bits(s));
        f += c / n * energies[s];
        for (gi, ti) in g.iter_mut().zip(&t) {
            *gi += (c / n - probs[s]) * ti;
        }
    }
    (f, g)
}

/// Gradient ascent with backtracking line search (Armijo, halving steps)
/// on a concave objective. Frozen coordinates never move. Once the true
/// per-step increase falls below f64 resolution Armijo can no longer
/// certify progress, so the loop switches to accepting steps on strict
/// gradient-norm decrease; the trace stops growing at that point, which
/// keeps it exactly non-decreasing.
fn ascend(
    eval: impl Fn(&[f64; PARAMS]) -> (f64, [f64; PARAMS]),
    opts: &FitOptions,
) -> FitResult {
    let masked_norm = |g: &[f64; PARAMS]| {
        g.iter()
            .zip(&opts.free)
            .fold(0.0f64, |m, (v, &fr)| if fr { m.max(v.abs()) } else { m })
    };
    let mut theta = opts.init;
    let (mut f, mut g) = eval(&theta);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    let mut polish = false;

    for _ in 0..opts.max_iter {
        for (gi, &fr) in g.iter_mut().zip(&opts.free) {
            if !fr {
                *gi = 0.0;
            }
        }
        let gnorm = masked_norm(&g);
        if gnorm < opts.tol {
            converged = true;
            break;
        }
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        for phase_polish in [polish, true] {
            let mut t = 1.0;
            for _ in 0..60 {
                let mut cand = theta;
                for (c, gi) in cand.iter_mut().zip(&g) {
                    *c += t * gi;
                }
                if cand == theta {
                    // Step underflowed; smaller t cannot move either.
                    break;
                }
                let (fc, gc) = eval(&cand);
                let ok = if phase_polish {
                    masked_norm(&gc) < gnorm && fc >= f - 1e-12 * (1.0 + f.abs())
                } else {
                    fc > f && fc - f >= 1e-4 * t * g2
                };
                if ok {
                    theta = cand;
                    f = fc;
                    g = gc;
                    accepted = true;
                    if !phase_polish {
                        trace.push(f);
                    }
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
            polish = true;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    FitResult { theta, trace, iterations, converged }
}

pub fn fit_pseudo_likelihood(data: &[[u8; 3]]) -> Result<FitResult> {
    fit_pseudo_likelihood_with(data, &FitOptions::default())
}

pub fn fit_pseudo_likelihood_with(data: &[[u8; 3]], opts: &FitOptions) -> Result<FitResult> {
    let counts = state_counts(data)?;
    let n = data.len() as f64;
    Ok(ascend(|th| pl_objective(&counts, n, th), opts))
}

pub fn fit_mle(data: &[[u8; 3]]) -> Result<FitResult> {
    fit_mle_with(data, &FitOptions::default())
}

pub fn fit_mle_with(data: &[[u8; 3]], opts: &FitOptions) -> Result<FitResult> {
    let counts = state_counts(data)?;
    let n = data.len() as f64;
    Ok(ascend(|th| ml_objective(&counts, n, th), opts))
}

pub fn linf(a: &[f64; PARAMS], b: &[f64; PARAMS]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub seed: u64,
    pub pl_err: f64,
    pub ml_err: f64,
    pub pl_ml_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub n: usize,
    pub pl_err: f64,
    pub ml_err: f64,
    pub pl_ml_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    /// Per grid point, the across-seed medians of the three errors.
    pub medians: Vec<MedianRow>,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Errors of both estimators against the generating parameters, one row
/// per (sample size, seed), plus across-seed medians per sample size.
pub fn convergence_report(
    model: &LogLinearModel,
    n_grid: &[usize],
    seeds: &[u64],
) -> Result<ConvergenceReport> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid.is_empty() {
        return Err(Error::InvalidArgument("sample-size grid must be increasing".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed".into()));
    }
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &n in n_grid {
        let mut pl_errs = Vec::new();
        let mut ml_errs = Vec::new();
        let mut gaps = Vec::new();
        for &sd in seeds {
            let data = model.sample(n, sd);
            let pl = fit_pseudo_likelihood(&data)?;
            let ml = fit_mle(&data)?;
            let row = ReportRow {
                n,
                seed: sd,
                pl_err: linf(&pl.theta, &model.theta),
                ml_err: linf(&ml.theta, &model.theta),
                pl_ml_gap: linf(&pl.theta, &ml.theta),
            };
            pl_errs.push(row.pl_err);
            ml_errs.push(row.ml_err);
            gaps.push(row.pl_ml_gap);
            rows.push(row);
        }
        medians.push(MedianRow {
            n,
            pl_err: median(pl_errs),
            ml_err: median(ml_errs),
            pl_ml_gap: median(gaps),
        });
    }
    Ok(ConvergenceReport { rows, medians })
}

pub fn write_report_csv(report: &ConvergenceReport, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let w = |e: std::io::Error| Error::io(path, e);
    writeln!(out, "n,seed,pl_err,ml_err,pl_ml_gap").map_err(w)?;
    for r in &report.rows {
        writeln!(out, "{},{},{},{},{}", r.n, r.seed, r.pl_err, r.ml_err, r.pl_ml_gap).map_err(w)?;
    }
    out.flush().map_err(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn zero_theta_samples_uniformly() {
        let model = LogLinearModel::new([0.0; PARAMS]);
        let n = 100_000;
        let data = model.sample(n, 1);
        let counts = state_counts(&data).unwrap();
        let expect = n as f64 / 8.0;
        let chi2: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
        let crit = ChiSquared::new(7.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} over the alpha=0.01 critical value {crit}");
    }

    #[test]
    fn positive_interaction_yields_positive_correlation() {
        let mut theta = [0.0; PARAMS];
        theta[3] = 1.5;
        let data = LogLinearModel::new(theta).sample(20_000, 2);
        let n = data.len() as f64;
        let (mut m1, mut m2, mut m12) = (0.0, 0.0, 0.0);
        for x in &data {
            m1 += x[0] as f64 / n;
            m2 += x[1] as f64 / n;
            m12 += (x[0] * x[1]) as f64 / n;
        }
        assert!(m12 - m1 * m2 > 0.02, "cov {}", m12 - m1 * m2);
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let model = LogLinearModel::new([0.3, -0.2, 0.5, 0.7, -0.4, 0.1]);
        assert_eq!(model.sample(500, 7), model.sample(500, 7));
        assert_ne!(model.sample(500, 7), model.sample(500, 8));
    }

    #[test]
    fn joint_stays_strictly_positive_at_extreme_parameters() {
        for theta in [[30.0; PARAMS], [-30.0; PARAMS], [30.0, -30.0, 30.0, -30.0, 30.0, -30.0]] {
            let probs = LogLinearModel::new(theta).joint_probs();
            assert!(probs.iter().all(|p| *p > 0.0), "zeros in {probs:?}");
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let theta = [0.4, -0.6, 0.2, 0.8, -0.3, 0.5];
        let data = LogLinearModel::new(theta).sample(200, 3);
        let counts = state_counts(&data).unwrap();
        let n = data.len() as f64;
        let at = [0.1, 0.2, -0.3, 0.05, -0.15, 0.25];
        for eval in [
            &(|th: &[f64; PARAMS]| pl_objective(&counts, n, th))
                as &dyn Fn(&[f64; PARAMS]) -> (f64, [f64; PARAMS]),
            &(|th: &[f64; PARAMS]| ml_objective(&counts, n, th)),
        ] {
            let (_, g) = eval(&at);
            for i in 0..PARAMS {
                let h = 1e-5;
                let mut up = at;
                up[i] += h;
                let mut dn = at;
                dn[i] -= h;
                let fd = (eval(&up).0 - eval(&dn).0) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
                assert!(rel < 1e-6, "param {i}: analytic {} vs fd {fd}", g[i]);
            }
        }
    }

    #[test]
    fn zero_truth_is_recovered_near_zero_by_both_estimators() {
        let model = LogLinearModel::new([0.0; PARAMS]);
        let data = model.sample(100_000, 4);
        let pl = fit_pseudo_likelihood(&data).unwrap();
        let ml = fit_mle(&data).unwrap();
        assert!(pl.converged && ml.converged);
        assert!(linf(&pl.theta, &[0.0; PARAMS]) < 0.05, "{:?}", pl.theta);
        assert!(linf(&ml.theta, &[0.0; PARAMS]) < 0.05, "{:?}", ml.theta);
    }

    #[test]
    fn independent_model_matches_marginal_log_odds() {
        // With interactions frozen at zero the pseudo-likelihood decouples
        // into three intercept-only logistic fits, so each main effect must
        // equal the log-odds of its empirical marginal.
        let truth = LogLinearModel::new([0.4, -0.3, 0.8, 0.0, 0.0, 0.0]);
        let data = truth.sample(50_000, 5);
        let opts = FitOptions {
            free: [true, true, true, false, false, false],
            ..FitOptions::default()
        };
        let pl = fit_pseudo_likelihood_with(&data, &opts).unwrap();
        assert!(pl.converged);
        let n = data.len() as f64;
        for j in 0..3 {
            let p: f64 = data.iter().map(|x| x[j] as f64).sum::<f64>() / n;
            let logodds = (p / (1.0 - p)).ln();
            assert!(
                (pl.theta[j] - logodds).abs() < 1e-6,
                "var {j}: {} vs log-odds {logodds}",
                pl.theta[j]
            );
            assert_eq!(pl.theta[3 + j], 0.0, "frozen parameter moved");
        }
    }

    #[test]
    fn mle_matches_empirical_moments() {
        let truth = LogLinearModel::new([0.5, -0.7, 0.3, 0.9, -0.4, 0.6]);
        let data = truth.sample(3_000, 6);
        let ml = fit_mle(&data).unwrap();
        assert!(ml.converged);
        let counts = state_counts(&data).unwrap();
        let n = data.len() as f64;
        let probs = LogLinearModel::new(ml.theta).joint_probs();
        for i in 0..PARAMS {
            let emp: f64 =
                (0..8).map(|s| counts[s] / n * suffstats(state_bits(s))[i]).sum();
            let fit: f64 = (0..8).map(|s| probs[s] * suffstats(state_bits(s))[i]).sum();
            assert!((emp - fit).abs() < 1e-6, "stat {i}: empirical {emp} vs fitted {fit}");
        }
    }

    #[test]
    fn both_objectives_are_initialization_independent() {
        let truth = LogLinearModel::new([0.2, 0.1, -0.5, -0.8, 0.3, 0.4]);
        let data = truth.sample(2_000, 7);
        let warm = FitOptions { init: [0.9, -0.9, 0.9, -0.9, 0.9, -0.9], ..FitOptions::default() };
        for (fit_cold, fit_warm) in [
            (fit_pseudo_likelihood(&data).unwrap(), fit_pseudo_likelihood_with(&data, &warm).unwrap()),
            (fit_mle(&data).unwrap(), fit_mle_with(&data, &warm).unwrap()),
        ] {
            assert!(fit_cold.converged && fit_warm.converged);
            assert!(
                linf(&fit_cold.theta, &fit_warm.theta) < 1e-5,
                "{:?} vs {:?}",
                fit_cold.theta,
                fit_warm.theta
            );
        }
    }

    #[test]
    fn objective_trace_never_decreases() {
        let truth = LogLinearModel::new([0.5, -0.7, 0.3, 0.9, -0.4, 0.6]);
        let data = truth.sample(1_000, 8);
        for fr in [fit_pseudo_likelihood(&data).unwrap(), fit_mle(&data).unwrap()] {
            assert!(fr.trace.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn median_errors_shrink_along_the_grid() {
        let truth = LogLinearModel::new([0.5, -0.7, 0.3, 0.9, -0.4, 0.6]);
        let seeds: Vec<u64> = (0..10).collect();
        let report =
            convergence_report(&truth, &[1_000, 10_000, 100_000], &seeds).unwrap();
        let m = &report.medians;
        assert_eq!(m.len(), 3);
        assert!(
            m[0].pl_err > m[1].pl_err && m[1].pl_err > m[2].pl_err,
            "medians {:?}",
            m.iter().map(|r| r.pl_err).collect::<Vec<_>>()
        );
        assert!(m[2].pl_ml_gap < 0.05, "gap {}", m[2].pl_ml_gap);
        assert_eq!(report.rows.len(), 30);
    }

    #[test]
    fn report_csv_round_trips_through_text() {
        let truth = LogLinearModel::new([0.0; PARAMS]);
        let report = convergence_report(&truth, &[100, 200], &[1, 2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report_csv(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,seed,pl_err,ml_err,pl_ml_gap"));
        assert_eq!(lines.count(), 4);
        for (line, row) in text.lines().skip(1).zip(&report.rows) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0].parse::<usize>().unwrap(), row.n);
            assert_eq!(fields[2].parse::<f64>().unwrap(), row.pl_err);
        }
    }

    #[test]
    fn degenerate_samples_are_rejected() {
        let data = vec![[1u8, 0, 1]; 50];
        assert!(fit_pseudo_likelihood(&data).is_err());
        assert!(fit_mle(&data).is_err());
    }
}
