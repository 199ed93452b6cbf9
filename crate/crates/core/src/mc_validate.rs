//! Orchestrated validation experiments tying the analytic formulas to the
//! simulation oracle: correction-order studies in delta, implied-vol skew
//! power-law recovery, and phi-ensemble statistics. Every experiment is
//! reproducible bit-for-bit from (config, seed) and emits a machine-readable
//! report.
//!
//! Variance reduction, where the asymptotic effects are small against raw MC
//! noise: common random numbers across cells (one ChaCha stream per path id,
//! shared), antithetic pairing, and an exact-lognormal control variate (the
//! frozen-volatility payoff has a closed-form expectation).

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::calibrate::{fit_params, FitConfig};
use crate::error::{config, domain, Result};
use crate::fou_simulate::{
    draw_normals, fou_weights, path_rng, phi_weights, scaled_fou_weights, Convolver, PathGrid,
};
use crate::frac_kernel::{phi_variance, FouParams, Hurst};
use crate::implied_vol::{bs_implied_vol, generate_surface};
use crate::model::{FMap, FsvModel, SlowFsvModel, SlowMap};
use crate::pricing::{bs_price, corrected_price, slow_corrected_price, EuropeanCall};

/// One pass/fail check with the evidence: measured value, its standard
/// error where meaningful (0 when deterministic), and the target interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellCheck {
    pub label: String,
    pub measured: f64,
    pub std_err: f64,
    pub target_lo: f64,
    pub target_hi: f64,
    pub pass: bool,
}

impl CellCheck {
    fn new(label: impl Into<String>, measured: f64, std_err: f64, lo: f64, hi: f64) -> Self {
        let pass = measured.is_finite() && measured >= lo && measured <= hi;
        Self { label: label.into(), measured, std_err, target_lo: lo, target_hi: hi, pass }
    }
}

/// Machine-readable experiment outcome; embeds the resolved configuration
/// and seed so a run can be reproduced from the report alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub cells: Vec<CellCheck>,
    pub passed: bool,
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    fn assemble(
        experiment: &str,
        config: serde_json::Value,
        seed: u64,
        cells: Vec<CellCheck>,
        started: Instant,
    ) -> Self {
        let passed = cells.iter().all(|c| c.pass);
        Self {
            experiment: experiment.to_string(),
            config,
            seed,
            cells,
            passed,
            runtime_seconds: started.elapsed().as_secs_f64(),
        }
    }
}

const CHUNK: usize = 2048;

/// Deterministic parallel accumulation of per-path statistic vectors:
/// fixed-size chunks are mapped in parallel and folded in chunk order, so
/// the totals are bit-identical for any worker count.
fn accumulate(
    n_paths: usize,
    n_stats: usize,
    per_path: impl Fn(u64, &mut [f64]) + Sync,
) -> (Vec<f64>, Vec<f64>) {
    let n_chunks = n_paths.div_ceil(CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; n_stats];
            let mut sum_sq = vec![0.0; n_stats];
            let mut stats = vec![0.0; n_stats];
            for path in (c * CHUNK)..((c + 1) * CHUNK).min(n_paths) {
                stats.iter_mut().for_each(|s| *s = 0.0);
                per_path(path as u64, &mut stats);
                for (k, &v) in stats.iter().enumerate() {
                    sum[k] += v;
                    sum_sq[k] += v * v;
                }
            }
            (sum, sum_sq)
        })
        .collect();
    let mut sum = vec![0.0; n_stats];
    let mut sum_sq = vec![0.0; n_stats];
    for (ps, pq) in &partials {
        for k in 0..n_stats {
            sum[k] += ps[k];
            sum_sq[k] += pq[k];
        }
    }
    (sum, sum_sq)
}

fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Terminal log-asset over the live grid given a per-node volatility rule.
fn terminal_x(
    sigma_of: impl Fn(f64) -> f64,
    z: &[f64],
    dw_live: &[f64],
    db: &[f64],
    rho: f64,
    dt: f64,
) -> f64 {
    let rho_bar = (1.0 - rho * rho).max(0.0).sqrt();
    let mut log_x = 0.0;
    for i in 0..dw_live.len() {
        let s = sigma_of(z[i]);
        log_x += s * (rho * dw_live[i] + rho_bar * db[i]) - 0.5 * s * s * dt;
    }
    log_x.exp()
}

fn ols_exponent(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.abs().ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    sxy / sxx
}

/// Correction-order study for the small-fluctuation model (target order
/// delta^2): ATM call, zero-history conditioning (phi = 0), lognormal
/// step updates, CRN across the delta cells, antithetics, and the exact
/// constant-volatility payoff as control variate.
///
/// Protocol fixed by the acceptance design: H = 0.3, a = 1, sigma_bar = 0.2,
/// rho = -0.5, tau = 1, dt = 1/256, deltas {0.05, 0.1, 0.2}; the
/// slowly-saturating rational response map keeps the model's quadratic
/// remainder (what the order test measures) from being dominated by map
/// saturation at the invariant-forced scale just below sigma_bar.
pub fn run_delta_convergence(seed: u64, n_paths: usize) -> Result<ExperimentReport> {
    let started = Instant::now();
    if n_paths < 2 {
        return Err(config(format!("need at least 2 paths, got {n_paths}")));
    }
    let (sigma_bar, rho, h, a) = (0.2, -0.5, 0.3, 1.0);
    let deltas = [0.05, 0.1, 0.2];
    let tau = 1.0;
    let n_steps = 256usize;
    let dt = tau / n_steps as f64;
    let fou = FouParams::new(Hurst::new(h)?, a)?;
    let f_map = FMap::rational(0.199, 8)?;
    let models: Vec<FsvModel> = deltas
        .iter()
        .map(|&d| FsvModel::new(sigma_bar, d, rho, fou, f_map))
        .collect::<Result<_>>()?;
    let call = EuropeanCall::new(1.0, tau)?;
    let grid = PathGrid::new(0.0, dt, n_steps, 0)?;
    let weights = fou_weights(&grid, &fou)?;
    let conv = Convolver::new(&weights, &grid)?;
    let bs0 = bs_price(1.0, 1.0, sigma_bar, tau)?;
    let sqrt_dt = dt.sqrt();

    // stats: per delta the CV'd payoff difference; last slot the raw
    // constant-vol payoff (control cell)
    let n_stats = deltas.len() + 1;
    let (sum, sum_sq) = accumulate(n_paths, n_stats, |path, stats| {
        let mut rng = path_rng(seed, path);
        let mut dw = draw_normals(&mut rng, n_steps, sqrt_dt);
        let mut db = draw_normals(&mut rng, n_steps, sqrt_dt);
        let mut z = conv.z_live(&dw);
        for half in 0..2 {
            if half == 1 {
                // antithetic: all three processes are odd in the increments
                dw.iter_mut().for_each(|v| *v = -*v);
                db.iter_mut().for_each(|v| *v = -*v);
                z.iter_mut().for_each(|v| *v = -*v);
            }
            let x0_t = terminal_x(|_| sigma_bar, &z, &dw, &db, rho, dt);
            let payoff0 = (x0_t - 1.0).max(0.0);
            for (k, m) in models.iter().enumerate() {
                let x_t = terminal_x(|zi| m.sigma_of(zi), &z, &dw, &db, rho, dt);
                stats[k] += 0.5 * ((x_t - 1.0).max(0.0) - payoff0);
            }
            stats[deltas.len()] += 0.5 * payoff0;
        }
    });

    let mut cells = Vec::new();
    let mut err_points = Vec::new();
    let mut errs = Vec::new();
    for (k, (&delta, m)) in deltas.iter().zip(&models).enumerate() {
        let (diff, se) = mean_and_se(sum[k], sum_sq[k], n_paths);
        let mc = bs0 + diff;
        let analytic = corrected_price(m, &call, 0.0, 1.0, 0.0)?.total;
        let err = (mc - analytic).abs();
        errs.push(err);
        err_points.push((delta, err));
        // noise control: the order test is meaningless unless SE << err
        cells.push(CellCheck::new(
            format!("se_over_err_delta_{delta}"),
            se / err,
            0.0,
            0.0,
            0.2,
        ));
    }
    let (c0, se0) = mean_and_se(sum[deltas.len()], sum_sq[deltas.len()], n_paths);
    cells.push(CellCheck::new(
        "control_delta0_err_in_se",
        (c0 - bs0).abs() / se0,
        1.0,
        0.0,
        3.0,
    ));
    cells.push(CellCheck::new("err_ratio_0.2_over_0.1", errs[2] / errs[1], 0.0, 3.0, 5.5));
    cells.push(CellCheck::new("fitted_exponent", ols_exponent(&err_points), 0.0, 1.7, 2.3));

    let cfg = json!({
        "model": {"sigma_bar": sigma_bar, "rho": rho, "hurst": h, "a": a,
                  "f_map": "rational(0.199, 8)"},
        "deltas": deltas, "tau": tau, "dt": dt, "n_paths": n_paths,
        "antithetic": true, "control_variate": "frozen-vol lognormal",
        "conditioning": "zero history (phi = 0)",
    });
    Ok(ExperimentReport::assemble("delta_convergence_fsv", cfg, seed, cells, started))
}

/// Correction-order study for the slow-factor model (target order
/// delta^(2H)): deltas {0.04, 0.08, 0.16}, zero-history conditioning
/// (phi_delta = 0), same variance-reduction stack with the volatility
/// frozen at sigma_0 = F(z0) in the control leg.
pub fn run_delta_convergence_slow(h: f64, seed: u64, n_paths: usize) -> Result<ExperimentReport> {
    let started = Instant::now();
    if n_paths < 2 {
        return Err(config(format!("need at least 2 paths, got {n_paths}")));
    }
    let rho = -0.5;
    let a = 1.0;
    let deltas = [0.04, 0.08, 0.16];
    let tau = 1.0;
    let n_steps = 256usize;
    let dt = tau / n_steps as f64;
    let fou = FouParams::new(Hurst::new(h)?, a)?;
    let f_map = SlowMap::new(0.05, 0.1)?;
    let z0 = 0.0;
    let models: Vec<SlowFsvModel> = deltas
        .iter()
        .map(|&d| SlowFsvModel::new(d, rho, fou, f_map, z0))
        .collect::<Result<_>>()?;
    let sigma0 = models[0].sigma0();
    let call = EuropeanCall::new(1.0, tau)?;
    let grid = PathGrid::new(0.0, dt, n_steps, 0)?;
    let bs0 = bs_price(1.0, 1.0, sigma0, tau)?;
    let sqrt_dt = dt.sqrt();
    // the factor scale differs per delta: one convolver per cell, same dW
    let convs: Vec<Convolver> = deltas
        .iter()
        .map(|&d| Convolver::new(&scaled_fou_weights(&grid, &fou, d)?, &grid))
        .collect::<Result<_>>()?;

    let n_stats = deltas.len() + 1;
    let (sum, sum_sq) = accumulate(n_paths, n_stats, |path, stats| {
        let mut rng = path_rng(seed, path);
        let mut dw = draw_normals(&mut rng, n_steps, sqrt_dt);
        let mut db = draw_normals(&mut rng, n_steps, sqrt_dt);
        let mut zs: Vec<Vec<f64>> = convs.iter().map(|c| c.z_live(&dw)).collect();
        for half in 0..2 {
            if half == 1 {
                dw.iter_mut().for_each(|v| *v = -*v);
                db.iter_mut().for_each(|v| *v = -*v);
                zs.iter_mut().for_each(|z| z.iter_mut().for_each(|v| *v = -*v));
            }
            let x0_t = terminal_x(|_| sigma0, &zs[0], &dw, &db, rho, dt);
            let payoff0 = (x0_t - 1.0).max(0.0);
            for (k, z) in zs.iter().enumerate() {
                let x_t = terminal_x(|zi| f_map.eval(z0 + zi), z, &dw, &db, rho, dt);
                stats[k] += 0.5 * ((x_t - 1.0).max(0.0) - payoff0);
            }
            stats[deltas.len()] += 0.5 * payoff0;
        }
    });

    let mut cells = Vec::new();
    let mut err_points = Vec::new();
    for (k, (&delta, m)) in deltas.iter().zip(&models).enumerate() {
        let (diff, se) = mean_and_se(sum[k], sum_sq[k], n_paths);
        let mc = bs0 + diff;
        let analytic = slow_corrected_price(m, &call, 0.0, 1.0, 0.0)?.total;
        let err = (mc - analytic).abs();
        err_points.push((delta, err));
        cells.push(CellCheck::new(
            format!("se_over_err_delta_{delta}"),
            se / err,
            0.0,
            0.0,
            0.2,
        ));
    }
    let (c0, se0) = mean_and_se(sum[deltas.len()], sum_sq[deltas.len()], n_paths);
    cells.push(CellCheck::new(
        "control_delta0_err_in_se",
        (c0 - bs0).abs() / se0,
        1.0,
        0.0,
        3.0,
    ));
    cells.push(CellCheck::new(
        "fitted_exponent",
        ols_exponent(&err_points),
        0.0,
        2.0 * h - 0.3,
        2.0 * h + 0.3,
    ));

    let cfg = json!({
        "model": {"hurst": h, "a": a, "rho": rho, "f_map": "0.05 + 0.1 (1 + tanh)", "z0": z0},
        "deltas": deltas, "tau": tau, "dt": dt, "n_paths": n_paths,
        "antithetic": true, "control_variate": "frozen-vol lognormal",
        "conditioning": "zero history (phi_delta = 0)",
    });
    Ok(ExperimentReport::assemble("delta_convergence_slow", cfg, seed, cells, started))
}

/// MC recovery of the skew power law: per maturity, price two strikes at
/// +-dm from the money off the same paths (with the frozen-vol control
/// variate per strike), invert to implied vols, and regress the slope
/// magnitude against maturity on log-log axes. The regime — `a tau` below
/// 0.1 or above 10 across the whole grid — picks the target exponent
/// H - 1/2 or H - 3/2.
pub fn run_skew_powerlaw(
    h: f64,
    a: f64,
    tau_grid: &[f64],
    seed: u64,
    n_paths: usize,
) -> Result<ExperimentReport> {
    let started = Instant::now();
    if tau_grid.len() < 3 {
        return Err(config("skew power-law fit needs at least 3 maturities"));
    }
    let max_tau = tau_grid.iter().cloned().fold(0.0, f64::max);
    let min_tau = tau_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max_tau / min_tau >= 9.99) {
        return Err(config("tau grid must span at least a decade"));
    }
    let (target, regime) = if a * max_tau <= 0.1 * (1.0 + 1e-9) {
        (h - 0.5, "small a*tau")
    } else if a * min_tau >= 10.0 * (1.0 - 1e-9) {
        (h - 1.5, "large a*tau")
    } else {
        return Err(domain(format!(
            "tau grid [{min_tau}, {max_tau}] with a = {a} straddles regimes; keep a*tau <= 0.1 \
             or >= 10 throughout"
        )));
    };
    let tol = if target == h - 0.5 { 0.1 } else { 0.15 };

    let (sigma_bar, delta, rho) = (0.2, 0.1, -0.5);
    let fou = FouParams::new(Hurst::new(h)?, a)?;
    let model = FsvModel::with_default_map(sigma_bar, delta, rho, fou)?;
    let n_steps = 64usize;
    let n_batches = 16usize;

    let mut cells = Vec::new();
    let mut slope_points = Vec::new();
    for (cell_idx, &tau) in tau_grid.iter().enumerate() {
        let dt = tau / n_steps as f64;
        let dm = 0.5 * sigma_bar * tau.sqrt();
        let strikes = [(-dm as f64).exp(), dm.exp()];
        let grid = PathGrid::new(0.0, dt, n_steps, 0)?;
        let conv = Convolver::new(&fou_weights(&grid, &fou)?, &grid)?;
        let sqrt_dt = dt.sqrt();
        let bs_ref = [
            bs_price(1.0, strikes[0], sigma_bar, tau)?,
            bs_price(1.0, strikes[1], sigma_bar, tau)?,
        ];
        // decorrelate cells: distinct stream block per maturity
        let cell_seed = seed ^ ((cell_idx as u64 + 1) << 32);

        let (sum, _) = accumulate(n_paths, 2 * n_batches, |path, stats| {
            let mut rng = path_rng(cell_seed, path);
            let mut dw = draw_normals(&mut rng, n_steps, sqrt_dt);
            let mut db = draw_normals(&mut rng, n_steps, sqrt_dt);
            let mut z = conv.z_live(&dw);
            let batch = (path as usize) % n_batches;
            for half in 0..2 {
                if half == 1 {
                    dw.iter_mut().for_each(|v| *v = -*v);
                    db.iter_mut().for_each(|v| *v = -*v);
                    z.iter_mut().for_each(|v| *v = -*v);
                }
                let x_t = terminal_x(|zi| model.sigma_of(zi), &z, &dw, &db, rho, dt);
                let x0_t = terminal_x(|_| sigma_bar, &z, &dw, &db, rho, dt);
                for (s, &k) in strikes.iter().enumerate() {
                    let diff = (x_t - k).max(0.0) - (x0_t - k).max(0.0);
                    stats[s * n_batches + batch] += 0.5 * diff;
                }
            }
        });

        // batch-means standard error of the implied-vol slope
        let paths_per_batch = n_paths / n_batches;
        let mut batch_slopes = Vec::with_capacity(n_batches);
        for b in 0..n_batches {
            // path ids congruent to b mod n_batches; counts differ by at most 1
            let count = paths_per_batch + usize::from(b < n_paths % n_batches);
            let p_lo = bs_ref[0] + sum[b] / count as f64;
            let p_hi = bs_ref[1] + sum[n_batches + b] / count as f64;
            let iv_lo = bs_implied_vol(p_lo, 1.0, strikes[0], tau)?;
            let iv_hi = bs_implied_vol(p_hi, 1.0, strikes[1], tau)?;
            batch_slopes.push((iv_hi - iv_lo) / (2.0 * dm));
        }
        let bm = batch_slopes.iter().sum::<f64>() / n_batches as f64;
        let bvar = batch_slopes.iter().map(|s| (s - bm) * (s - bm)).sum::<f64>()
            / (n_batches as f64 - 1.0);
        let se = (bvar / n_batches as f64).sqrt();

        let p_lo = bs_ref[0] + sum[..n_batches].iter().sum::<f64>() / n_paths as f64;
        let p_hi = bs_ref[1] + sum[n_batches..].iter().sum::<f64>() / n_paths as f64;
        let slope = (bs_implied_vol(p_hi, 1.0, strikes[1], tau)?
            - bs_implied_vol(p_lo, 1.0, strikes[0], tau)?)
            / (2.0 * dm);
        slope_points.push((tau, slope));
        cells.push(CellCheck::new(
            format!("slope_noise_tau_{tau}"),
            se / slope.abs(),
            0.0,
            0.0,
            0.2,
        ));
        // leverage is negative: the skew must slope down
        // leverage is negative: the skew must slope down (finite lower bound
        // keeps the JSON report round-trippable)
        cells.push(CellCheck::new(format!("slope_sign_tau_{tau}"), slope, se, -1e9, 0.0));
    }
    let exponent = ols_exponent(&slope_points);
    cells.push(CellCheck::new("fitted_exponent", exponent, 0.0, target - tol, target + tol));

    let cfg = json!({
        "model": {"sigma_bar": sigma_bar, "delta": delta, "rho": rho, "hurst": h, "a": a},
        "tau_grid": tau_grid, "regime": regime, "target_exponent": target,
        "n_paths": n_paths, "n_steps_per_tau": n_steps, "n_batches": n_batches,
        "antithetic": true, "control_variate": "frozen-vol lognormal per strike",
    });
    Ok(ExperimentReport::assemble("skew_powerlaw", cfg, seed, cells, started))
}

/// Ensemble statistics of the simulated conditional functional phi against
/// the closed-form variance, on a (H, tau) grid at fixed mean-reversion
/// rate, plus the small-maturity consistency check that phi/tau approaches
/// the current factor value.
pub fn run_phi_statistics(a: f64, seed: u64, n_paths: usize) -> Result<ExperimentReport> {
    let started = Instant::now();
    if n_paths < 2 {
        return Err(config(format!("need at least 2 paths, got {n_paths}")));
    }
    let hs = [0.3, 0.5, 0.7];
    let taus = [0.25, 1.0, 4.0];
    let mut cells = Vec::new();

    // History horizon per cell: the phi-weight tail decays like
    // (tau K(u))^2 ~ tau^2 c^2 u^(2H-3), so the default 10/a window leaves
    // an O(U^(2H-2)) variance deficit that exceeds the MC noise for large
    // tau or persistent H. Grow the window until the analytic deficit is
    // half a standard error of the variance estimate.
    let horizon = |h: f64, tau: f64, target: f64| -> f64 {
        let floor = 10.0 / a;
        if (h - 0.5).abs() < 1e-12 {
            return floor;
        }
        let c = (h - 0.5) / (a * crate::special::gamma(h + 0.5));
        let budget = 0.5 * target * (2.0 / n_paths as f64).sqrt();
        let u = (tau * tau * c * c / ((2.0 - 2.0 * h) * budget)).powf(1.0 / (2.0 - 2.0 * h));
        u.max(floor)
    };

    for (hi, &h) in hs.iter().enumerate() {
        let fou = FouParams::new(Hurst::new(h)?, a)?;
        for (ti, &tau) in taus.iter().enumerate() {
            let dt = tau / 64.0;
            let target_var = phi_variance(tau, &fou)?;
            let hist = (horizon(h, tau, target_var) / dt).ceil() as usize;
            let grid = PathGrid::new(0.0, dt, 1, hist)?;
            let w = phi_weights(&grid, &fou, 0, tau)?;
            let sqrt_dt = dt.sqrt();
            let cell_seed = seed ^ (((hi * taus.len() + ti) as u64 + 1) << 32);
            let (sum, sum_sq) = accumulate(n_paths, 1, |path, stats| {
                let mut rng = path_rng(cell_seed, path);
                let dw = draw_normals(&mut rng, hist, sqrt_dt);
                stats[0] = w.iter().zip(&dw).map(|(wi, di)| wi * di).sum();
            });
            let (mean, mean_se) = mean_and_se(sum[0], sum_sq[0], n_paths);
            let nf = n_paths as f64;
            let var = (sum_sq[0] - nf * mean * mean) / (nf - 1.0);
            let target = target_var;
            let var_se = target * (2.0 / nf).sqrt();
            cells.push(CellCheck::new(
                format!("var_h{h}_tau{tau}"),
                var,
                var_se,
                target - 3.0 * var_se,
                target + 3.0 * var_se,
            ));
            cells.push(CellCheck::new(
                format!("mean_h{h}_tau{tau}"),
                mean.abs() / mean_se,
                1.0,
                0.0,
                3.0,
            ));
        }
    }

    // Small maturities: the ensemble mean square of phi/tau - Z_t decreases
    // over the smallest decade (phi/tau converges to the factor itself).
    let h = 0.3;
    let fou = FouParams::new(Hurst::new(h)?, a)?;
    let small_taus = [0.0125, 0.025, 0.05, 0.1];
    let mut mse = Vec::new();
    for (ti, &tau) in small_taus.iter().enumerate() {
        let dt = 0.0125;
        let hist = PathGrid::required_history(dt, a);
        let grid = PathGrid::new(0.0, dt, 1, hist)?;
        let wp = phi_weights(&grid, &fou, 0, tau)?;
        // the factor at the same node, from the same increments
        let wz = fou_weights(&grid, &fou)?;
        let sqrt_dt = dt.sqrt();
        let cell_seed = seed ^ (((100 + ti) as u64) << 32);
        let (sum, sum_sq) = accumulate(n_paths, 1, |path, stats| {
            let mut rng = path_rng(cell_seed, path);
            let dw = draw_normals(&mut rng, hist, sqrt_dt);
            let phi: f64 = wp.iter().zip(&dw).map(|(wi, di)| wi * di).sum();
            // Z at the node uses the most recent increment first
            let z: f64 = (0..hist).map(|m| wz[m] * dw[hist - 1 - m]).sum();
            stats[0] = (phi / tau - z) * (phi / tau - z);
        });
        let (m, _) = mean_and_se(sum[0], sum_sq[0], n_paths);
        mse.push(m);
    }
    for w in mse.windows(2) {
        // decreasing toward tau -> 0: mse(tau_small) < mse(tau_larger)
        cells.push(CellCheck::new("small_tau_mse_ratio", w[0] / w[1], 0.0, 0.0, 1.0));
    }

    let cfg = json!({
        "a": a, "hurst_grid": hs, "tau_grid": taus, "small_tau_grid": small_taus,
        "n_paths": n_paths, "steps_per_tau": 64,
    });
    Ok(ExperimentReport::assemble("phi_statistics", cfg, seed, cells, started))
}

/// Calibration round trip: generate an exact first-order surface from known
/// parameters (sigma_bar = 0.2, H = 0.3, delta rho = -0.05, a = 1), refit,
/// and check recovery; then repeat under 10 bp iid quote noise over
/// `n_noise_seeds` seeds and check the median Hurst error.
pub fn run_calibration_roundtrip(seed: u64, n_noise_seeds: usize) -> Result<ExperimentReport> {
    use rand::Rng;
    use rand::SeedableRng;
    let started = Instant::now();
    if n_noise_seeds < 1 {
        return Err(config("need at least one noise seed"));
    }
    let (sigma_bar, h, a, delta, rho) = (0.2, 0.3, 1.0, 0.1, -0.5);
    let model = FsvModel::with_default_map(sigma_bar, delta, rho, FouParams::new(Hurst::new(h)?, a)?)?;
    let taus: Vec<f64> = (0..12).map(|i| 0.05 * (20.0f64 / 0.05).powf(i as f64 / 11.0)).collect();
    let lms = [-0.2, -0.1, 0.0, 0.1, 0.2];
    let surface = generate_surface(&model, 1.0, 0.0, |_| 0.0, &taus, &lms)?;

    let fit = fit_params(&surface, &FitConfig::default())?;
    let mut cells = vec![
        CellCheck::new("clean_sigma_bar", fit.sigma_bar, 0.0, sigma_bar - 2e-3, sigma_bar + 2e-3),
        CellCheck::new("clean_hurst", fit.hurst.get(), 0.0, h - 0.02, h + 0.02),
        CellCheck::new("clean_delta_rho", fit.delta_rho, 0.0, -0.05 * 1.10, -0.05 * 0.90),
        CellCheck::new("clean_a", fit.a, 0.0, a * 0.85, a * 1.15),
        CellCheck::new("clean_converged", fit.converged as u8 as f64, 0.0, 1.0, 1.0),
    ];

    let mut errs: Vec<f64> = (0..n_noise_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ (i << 32));
            let mut noisy = surface.clone();
            for p in &mut noisy.points {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                p.iv += 1e-3 * g;
            }
            fit_params(&noisy, &FitConfig::default())
                .map(|f| (f.hurst.get() - h).abs())
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cells.push(CellCheck::new("noisy_hurst_median_err", errs[errs.len() / 2], 0.0, 0.0, 0.05));

    let cfg = json!({
        "truth": {"sigma_bar": sigma_bar, "hurst": h, "a": a, "delta": delta, "rho": rho},
        "tau_grid": taus, "log_moneyness_grid": lms,
        "noise_bp": 10.0, "n_noise_seeds": n_noise_seeds,
    });
    Ok(ExperimentReport::assemble("calibration_roundtrip", cfg, seed, cells, started))
}

#[cfg(test)]
mod tests {
    #[test]
    fn smooth_payoff_correction_is_first_order_in_delta() {
        // the order result is not call-specific: for a smooth payoff
        // (exponential, clipped far out of the visited range to stay bounded)
        // the remainder after removing the first-order term is O(delta^2).
        // The slope is estimated by a CRN finite difference at delta = 0.01,
        // which biases the remainder to L2*delta*(delta - 0.01); the expected
        // remainder ratio is then (0.2*0.19)/(0.1*0.09) = 4.22.
        let (sigma_bar, rho, h, a) = (0.2, -0.5, 0.3, 1.0);
        let deltas = [0.01, 0.1, 0.2];
        let tau = 1.0;
        let n_steps = 64usize;
        let dt = tau / n_steps as f64;
        let fou = FouParams::new(Hurst::new(h).unwrap(), a).unwrap();
        let f_map = FMap::rational(0.199, 8).unwrap();
        let models: Vec<FsvModel> = deltas
            .iter()
            .map(|&d| FsvModel::new(sigma_bar, d, rho, fou, f_map).unwrap())
            .collect();
        let grid = PathGrid::new(0.0, dt, n_steps, 0).unwrap();
        let conv = Convolver::new(&fou_weights(&grid, &fou).unwrap(), &grid).unwrap();
        let sqrt_dt = dt.sqrt();
        let g = |x: f64| x.min(3.0).exp();
        let n_paths = 200_000;
        let (sum, sum_sq) = accumulate(n_paths, 3, |path, stats| {
            let mut rng = path_rng(11, path);
            let mut dw = draw_normals(&mut rng, n_steps, sqrt_dt);
            let mut db = draw_normals(&mut rng, n_steps, sqrt_dt);
            let mut z = conv.z_live(&dw);
            for half in 0..2 {
                if half == 1 {
                    dw.iter_mut().for_each(|v| *v = -*v);
                    db.iter_mut().for_each(|v| *v = -*v);
                    z.iter_mut().for_each(|v| *v = -*v);
                }
                let base = g(terminal_x(|_| sigma_bar, &z, &dw, &db, rho, dt));
                for (k, m) in models.iter().enumerate() {
                    let x_t = terminal_x(|zi| m.sigma_of(zi), &z, &dw, &db, rho, dt);
                    stats[k] += 0.5 * (g(x_t) - base);
                }
            }
        });
        let (d_ref, se_ref) = mean_and_se(sum[0], sum_sq[0], n_paths);
        let (d1, _) = mean_and_se(sum[1], sum_sq[1], n_paths);
        let (d2, se2) = mean_and_se(sum[2], sum_sq[2], n_paths);
        let rem1 = d1 - 10.0 * d_ref;
        let rem2 = d2 - 20.0 * d_ref;
        assert!(
            20.0 * se_ref / rem1.abs() < 0.2 && se2 / rem2.abs() < 0.2,
            "too noisy for the order check: rem1 {rem1} (slope se {se_ref}), rem2 {rem2} +/- {se2}"
        );
        let ratio = rem2 / rem1;
        assert!((3.2..=5.2).contains(&ratio), "second-order remainder violated: ratio {ratio}");
    }

    use super::*;

    #[test]
    fn reports_are_reproducible_and_serializable() {
        let r1 = run_phi_statistics(1.0, 7, 2000).unwrap();
        let r2 = run_phi_statistics(1.0, 7, 2000).unwrap();
        for (a, b) in r1.cells.iter().zip(&r2.cells) {
            assert_eq!(a.measured.to_bits(), b.measured.to_bits());
        }
        let s = serde_json::to_string(&r1).unwrap();
        let back: ExperimentReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back.cells.len(), r1.cells.len());
        assert_eq!(back.seed, 7);
        assert!(back.config.get("n_paths").is_some());
    }

    #[test]
    fn phi_statistics_pass_at_moderate_budget() {
        let r = run_phi_statistics(1.0, 11, 10_000).unwrap();
        for c in &r.cells {
            assert!(c.pass, "{}: measured {} target [{}, {}]", c.label, c.measured, c.target_lo, c.target_hi);
        }
    }

    #[test]
    fn crn_coupling_shares_streams_across_cells() {
        // the delta = 0 control leg is a pure function of the shared streams:
        // identical seeds must give a bit-identical control cell
        let r1 = run_delta_convergence(5, 4000).unwrap();
        let r2 = run_delta_convergence(5, 4000).unwrap();
        let c1 = r1.cells.iter().find(|c| c.label.starts_with("control")).unwrap();
        let c2 = r2.cells.iter().find(|c| c.label.starts_with("control")).unwrap();
        assert_eq!(c1.measured.to_bits(), c2.measured.to_bits());
    }

    #[test]
    fn experiment_guards() {
        assert!(run_delta_convergence(1, 1).is_err());
        assert!(run_skew_powerlaw(0.2, 1.0, &[0.01, 0.02], 1, 100).is_err()); // too few taus
        assert!(run_skew_powerlaw(0.2, 1.0, &[0.5, 1.0, 5.0], 1, 100).is_err()); // mixed regime
    }

    #[test]
    fn failed_cells_carry_evidence() {
        // a tiny budget cannot resolve the order study; the report must say
        // which check failed and with what numbers, not silently widen
        let r = run_delta_convergence(3, 2000).unwrap();
        for c in &r.cells {
            assert!(c.measured.is_finite() || !c.pass);
            assert!(c.target_hi >= c.target_lo);
        }
        assert_eq!(r.cells.iter().filter(|c| c.label == "fitted_exponent").count(), 1);
    }
}
