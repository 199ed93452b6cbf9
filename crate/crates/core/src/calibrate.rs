//! Recover the group market parameters (sigma_bar, H, delta*rho, a) and the
//! effective-volatility curve from an observed implied-vol surface.
//!
//! The first-order surface is exactly affine in log-moneyness at each
//! maturity, so the fit is two-stage: per-maturity linear regression
//! extracts (level, slope), then a bounded derivative-free search over
//! (H, a) fits the slope term structure with the leverage bundle solved
//! in closed form at every step. This halves the nonlinear dimension and
//! makes the moneyness direction exact.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, under_identified, Result};
use crate::frac_kernel::{d_function, FouParams, Hurst};
use crate::implied_vol::VolSurface;

/// Per-point weighting of the least-squares objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightRule {
    /// `w = 1/tau`: balances short- and long-maturity regimes.
    InverseTau,
    Uniform,
}

/// Bounds, budget and weighting for [`fit_params`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub hurst_bounds: (f64, f64),
    pub a_bounds: (f64, f64),
    pub weight_rule: WeightRule,
    pub max_iters: usize,
    pub tol: f64,
    pub multi_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            hurst_bounds: (0.05, 0.95),
            a_bounds: (1e-2, 1e2),
            weight_rule: WeightRule::InverseTau,
            max_iters: 400,
            tol: 1e-12,
            multi_starts: 8,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo < hi && lo.is_finite() && hi.is_finite();
        if !ok(self.hurst_bounds)
            || self.hurst_bounds.0 <= 0.0
            || self.hurst_bounds.1 >= 1.0
            || !ok(self.a_bounds)
            || self.a_bounds.0 <= 0.0
        {
            return Err(domain("fit bounds must be well-ordered and inside the parameter domain"));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 || self.multi_starts == 0 {
            return Err(domain("fit needs tol > 0, max_iters >= 1, multi_starts >= 1"));
        }
        Ok(())
    }

    fn weight(&self, tau: f64) -> f64 {
        match self.weight_rule {
            WeightRule::InverseTau => 1.0 / tau,
            WeightRule::Uniform => 1.0,
        }
    }
}

/// Output of [`fit_params`]. Only the product `delta * rho` is reported:
/// the two factors enter every first-order formula only through it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibratedParams {
    pub sigma_bar: f64,
    pub hurst: Hurst,
    pub delta_rho: f64,
    pub a: f64,
    /// Nonparametric `(tau, sigma_{t,t+tau})` read off per maturity as
    /// `level(tau) - A(tau)`.
    pub effective_vol_curve: Vec<(f64, f64)>,
    pub residual_rms: f64,
    pub converged: bool,
    /// False when the observed skews carry no usable signal (e.g. rho = 0):
    /// `hurst`, `a` and the sign of `delta_rho` are then unidentified.
    pub skew_identifiable: bool,
}

/// Noise floor on per-maturity skew slopes, in vol units per unit
/// log-moneyness, below which the skew is treated as unidentifiable.
const SLOPE_FLOOR: f64 = 1e-12;

struct MaturityFit {
    tau: f64,
    level: f64,
    slope: f64,
    weight: f64,
    n_points: usize,
}

/// Stage 1: exact weighted OLS of iv against log-moneyness per maturity.
fn per_maturity_fits(surface: &VolSurface, cfg: &FitConfig) -> Result<Vec<MaturityFit>> {
    let taus = surface.maturities();
    if taus.len() < 2 {
        return Err(under_identified(format!(
            "surface has {} maturity; H, a and delta*rho need a term structure of at least 2",
            taus.len()
        )));
    }
    let mut fits = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let pts: Vec<(f64, f64)> = surface
            .points
            .iter()
            .filter(|p| p.tau == tau)
            .map(|p| (p.log_moneyness, p.iv))
            .collect();
        let n = pts.len() as f64;
        let sm: f64 = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let sv: f64 = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - sm) * (p.0 - sm)).sum();
        if pts.len() < 2 || sxx == 0.0 {
            return Err(under_identified(format!(
                "maturity {tau} has no moneyness spread; the skew slope (hence H, a, delta*rho) \
                 is unidentifiable"
            )));
        }
        let sxy: f64 = pts.iter().map(|p| (p.0 - sm) * (p.1 - sv)).sum();
        let slope = sxy / sxx;
        fits.push(MaturityFit {
            tau,
            level: sv - slope * sm,
            slope,
            weight: cfg.weight(tau),
            n_points: pts.len(),
        });
    }
    Ok(fits)
}

/// Weighted slope objective at fixed (H, a): the bundle `b = delta*rho /
/// sigma_bar` is linear, so it is profiled out exactly. Returns (sse, b).
fn slope_objective(fits: &[MaturityFit], h: f64, a: f64) -> Result<(f64, f64)> {
    let p = FouParams::new(Hurst::new(h)?, a)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut gs = Vec::with_capacity(fits.len());
    for f in fits {
        let g = d_function(f.tau, &p)? / (f.tau * f.tau);
        num += f.weight * f.slope * g;
        den += f.weight * g * g;
        gs.push(g);
    }
    let b = if den > 0.0 { num / den } else { 0.0 };
    let sse = fits
        .iter()
        .zip(&gs)
        .map(|(f, g)| {
            let r = f.slope - b * g;
            f.weight * r * r
        })
        .sum();
    Ok((sse, b))
}

/// Hand-rolled Nelder-Mead on a rectangle, with out-of-bounds points
/// rejected by an infinite penalty. Returns (argmin, min, converged).
/// The best vertex value is non-increasing across iterations by
/// construction (monotone descent contract).
pub(crate) fn nelder_mead(
    f: &dyn Fn(&[f64; 2]) -> f64,
    start: [f64; 2],
    scale: [f64; 2],
    max_iters: usize,
    tol: f64,
) -> ([f64; 2], f64, bool) {
    let mut simplex: Vec<([f64; 2], f64)> = vec![
        (start, f(&start)),
        ([start[0] + scale[0], start[1]], f(&[start[0] + scale[0], start[1]])),
        ([start[0], start[1] + scale[1]], f(&[start[0], start[1] + scale[1]])),
    ];
    let order = |s: &mut Vec<([f64; 2], f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
    };
    order(&mut simplex);
    let mut converged = false;
    for _ in 0..max_iters {
        let spread = (simplex[2].1 - simplex[0].1).abs();
        if spread <= tol * (1.0 + simplex[0].1.abs()) {
            converged = true;
            break;
        }
        let centroid = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let worst = simplex[2];
        let at = |c: f64| {
            [
                centroid[0] + c * (centroid[0] - worst.0[0]),
                centroid[1] + c * (centroid[1] - worst.0[1]),
            ]
        };
        let xr = at(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = at(2.0);
            let fe = f(&xe);
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (xr, fr);
        } else {
            let xc = at(if fr < worst.1 { 0.5 } else { -0.5 });
            let fc = f(&xc);
            if fc < worst.1.min(fr) {
                simplex[2] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    v.0[0] = 0.5 * (v.0[0] + best[0]);
                    v.0[1] = 0.5 * (v.0[1] + best[1]);
                    v.1 = f(&v.0);
                }
            }
        }
        order(&mut simplex);
    }
    (simplex[0].0, simplex[0].1, converged)
}

/// Fit the group market parameters to a surface.
///
/// Stage 1 regresses each maturity's quotes on log-moneyness (exact, the
/// model is affine there). Stage 2 runs a multi-start Nelder-Mead over
/// (H, log a) against the slope term structure, profiling out the linear
/// leverage bundle. `sigma_bar` is then solved from the longest-maturity
/// levels, where the conditional forecast term `delta*phi/tau` is
/// negligible, and the effective-vol curve is read off nonparametrically.
pub fn fit_params(surface: &VolSurface, cfg: &FitConfig) -> Result<CalibratedParams> {
    cfg.validate()?;
    let fits = per_maturity_fits(surface, cfg)?;

    let max_abs_slope = fits.iter().map(|f| f.slope.abs()).fold(0.0f64, f64::max);
    let skew_identifiable = max_abs_slope > SLOPE_FLOOR;

    let (h_lo, h_hi) = cfg.hurst_bounds;
    let (a_lo, a_hi) = cfg.a_bounds;
    let (la_lo, la_hi) = (a_lo.ln(), a_hi.ln());
    let obj = |x: &[f64; 2]| -> f64 {
        if x[0] < h_lo || x[0] > h_hi || x[1] < la_lo || x[1] > la_hi {
            return f64::INFINITY;
        }
        match slope_objective(&fits, x[0], x[1].exp()) {
            Ok((sse, _)) => sse,
            Err(_) => f64::INFINITY,
        }
    };

    // stratified deterministic starts: H sweeps the box, log a in a fixed
    // shuffled order so the starts do not sit on one diagonal
    let n = cfg.multi_starts;
    let starts: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            let v = ((i * 5 + 3) % n) as f64 / n as f64 + 0.5 / n as f64;
            [h_lo + u * (h_hi - h_lo), la_lo + v * (la_hi - la_lo)]
        })
        .collect();
    let scale = [0.1 * (h_hi - h_lo), 0.1 * (la_hi - la_lo)];
    let runs: Vec<([f64; 2], f64, bool)> = starts
        .par_iter()
        .map(|s| nelder_mead(&obj, *s, scale, cfg.max_iters, cfg.tol))
        .collect();
    // best objective wins; ties go to the earliest start
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.1.partial_cmp(&b.1).unwrap().then(i.cmp(j)))
        .map(|(_, r)| r)
        .expect("at least one start");
    let (x, _, converged) = *best;
    let (h, a) = (x[0], x[1].exp());
    let (_, bundle) = slope_objective(&fits, h, a)?;
    let p = FouParams::new(Hurst::new(h)?, a)?;

    // sigma_bar from the long-maturity levels: level = sigma + b sigma^2 q
    // with q = D(tau)/(2 tau), a quadratic in sigma per maturity
    let mut long = fits.iter().collect::<Vec<_>>();
    long.sort_by(|u, v| u.tau.partial_cmp(&v.tau).unwrap());
    let take = (long.len() / 2).max(1);
    let mut sigma_sum = 0.0;
    for f in long.iter().rev().take(take) {
        let q = bundle * d_function(f.tau, &p)? / (2.0 * f.tau);
        let sigma = if q.abs() < 1e-14 {
            f.level
        } else {
            let disc = (1.0 + 4.0 * q * f.level).max(0.0);
            (disc.sqrt() - 1.0) / (2.0 * q)
        };
        sigma_sum += sigma;
    }
    let sigma_bar = sigma_sum / take as f64;
    if !(sigma_bar > 0.0 && sigma_bar.is_finite()) {
        return Err(under_identified(format!(
            "long-maturity levels give a non-positive volatility level {sigma_bar}"
        )));
    }
    let delta_rho = bundle * sigma_bar;

    // nonparametric effective-vol curve and honest residuals
    let mut curve = Vec::with_capacity(fits.len());
    let mut sse = 0.0;
    let mut wsum = 0.0;
    for f in &fits {
        let d = d_function(f.tau, &p)?;
        let a_tau = delta_rho * sigma_bar * d / (2.0 * f.tau);
        curve.push((f.tau, f.level - a_tau));
        let model_slope = bundle * d / (f.tau * f.tau);
        for pt in surface.points.iter().filter(|pt| pt.tau == f.tau) {
            // level is nonparametric (per maturity), slope comes from the fit
            let resid = pt.iv - (f.level + model_slope * pt.log_moneyness);
            let w = f.weight / f.n_points as f64;
            sse += w * resid * resid;
            wsum += w;
        }
    }
    let residual_rms = (sse / wsum).sqrt();

    Ok(CalibratedParams {
        sigma_bar,
        hurst: Hurst::new(h)?,
        delta_rho,
        a,
        effective_vol_curve: curve,
        residual_rms,
        converged,
        skew_identifiable,
    })
}

/// Regime-wise Hurst estimates from a skew-slope term structure by log-log
/// regression: the slope magnitude decays like `tau^(H - 1/2)` for
/// `a tau` small and `tau^(H - 3/2)` for `a tau` large.
/// Needs at least 4 maturities inside a regime; returns `None` for a regime
/// without data, and an error when no regime has enough points.
pub fn fit_hurst_from_skew(
    slopes: &[(f64, f64)],
    a: f64,
) -> Result<(Option<f64>, Option<f64>)> {
    if !(a > 0.0) {
        return Err(domain(format!("mean-reversion rate must be positive, got {a}")));
    }
    let small: Vec<(f64, f64)> =
        slopes.iter().copied().filter(|&(tau, s)| a * tau < 0.1 && s != 0.0).collect();
    let large: Vec<(f64, f64)> =
        slopes.iter().copied().filter(|&(tau, s)| a * tau > 10.0 && s != 0.0).collect();
    let exponent = |pts: &[(f64, f64)]| -> Option<f64> {
        if pts.len() < 4 {
            return None;
        }
        let n = pts.len() as f64;
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.abs().ln()).collect();
        let xm = xs.iter().sum::<f64>() / n;
        let ym = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    };
    let h_small = exponent(&small).map(|e| e + 0.5);
    let h_large = exponent(&large).map(|e| e + 1.5);
    if h_small.is_none() && h_large.is_none() {
        return Err(under_identified(format!(
            "no regime has >= 4 maturities with nonzero skew (got {} with a*tau < 0.1, {} with \
             a*tau > 10)",
            small.len(),
            large.len()
        )));
    }
    Ok((h_small, h_large))
}
