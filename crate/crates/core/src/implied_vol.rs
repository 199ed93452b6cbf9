//! Black-Scholes implied-volatility inversion, the first-order implied-vol
//! formulas in all maturity regimes, effective-volatility forecasts, and
//! surface generation with CSV I/O.
//!
//! Log-moneyness is `log(K / X_t)` throughout.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{domain, numerical, schema, Result};
use crate::frac_kernel::d_function;
use crate::model::{FsvModel, SlowFsvModel};
use crate::pricing::bs_price;
use crate::special::{gamma, norm_pdf, SQRT_2};

/// Floor applied by [`generate_surface`]: the first-order formulas can go
/// non-positive far outside their asymptotic validity, so points are clipped
/// here and flagged rather than silently dropped.
pub const IV_MIN: f64 = 1e-4;

/// One implied-vol quote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolPoint {
    pub tau: f64,
    /// `log(K / X_t)`.
    pub log_moneyness: f64,
    pub iv: f64,
    /// True when the generator clipped the raw formula value at [`IV_MIN`].
    #[serde(default)]
    pub clipped: bool,
}

/// A set of quotes for one as-of time, with the spot they are struck against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolSurface {
    pub points: Vec<VolPoint>,
    pub spot: f64,
    pub as_of: f64,
}

impl VolSurface {
    pub fn new(points: Vec<VolPoint>, spot: f64, as_of: f64) -> Result<Self> {
        if !(spot > 0.0) {
            return Err(domain(format!("surface spot must be positive, got {spot}")));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.tau > 0.0 && p.iv > 0.0) {
                return Err(domain(format!(
                    "surface point {i}: tau and iv must be positive (tau {}, iv {})",
                    p.tau, p.iv
                )));
            }
            for q in &points[..i] {
                if q.tau == p.tau && q.log_moneyness == p.log_moneyness {
                    return Err(domain(format!(
                        "duplicate surface point at tau {} log-moneyness {}",
                        p.tau, p.log_moneyness
                    )));
                }
            }
        }
        Ok(Self { points, spot, as_of })
    }

    /// Distinct maturities, ascending.
    pub fn maturities(&self) -> Vec<f64> {
        let mut taus: Vec<f64> = self.points.iter().map(|p| p.tau).collect();
        taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        taus.dedup();
        taus
    }

    /// CSV dump: a `#`-prefixed JSON header (spot, as-of, caller-supplied
    /// echo, e.g. the generating model) followed by
    /// `tau,log_moneyness,iv,clipped` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W, echo: &serde_json::Value) -> Result<()> {
        let header = json!({ "spot": self.spot, "as_of": self.as_of, "echo": echo });
        let mut out = format!("# {header}\ntau,log_moneyness,iv,clipped\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{}\n",
                p.tau,
                p.log_moneyness,
                p.iv,
                p.clipped as u8
            ));
        }
        w.write_all(out.as_bytes()).map_err(|e| numerical(format!("csv write failed: {e}")))
    }

    /// Parse the CSV format written by [`VolSurface::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut spot = None;
        let mut as_of = 0.0;
        let mut points = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| schema(format!("line {lineno}: read failed: {e}")))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Ok(v) = serde_json::from_str::<serde_json::Value>(rest.trim()) {
                    spot = v.get("spot").and_then(|s| s.as_f64()).or(spot);
                    as_of = v.get("as_of").and_then(|s| s.as_f64()).unwrap_or(as_of);
                }
                continue;
            }
            if !saw_header {
                if line != "tau,log_moneyness,iv,clipped" {
                    return Err(schema(format!(
                        "line {lineno}: expected header 'tau,log_moneyness,iv,clipped', got '{line}'"
                    )));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(schema(format!("line {lineno}: expected 4 fields, got {}", fields.len())));
            }
            let num = |i: usize, name: &str| -> Result<f64> {
                fields[i]
                    .trim()
                    .parse()
                    .map_err(|_| schema(format!("line {lineno}: bad {name} '{}'", fields[i])))
            };
            points.push(VolPoint {
                tau: num(0, "tau")?,
                log_moneyness: num(1, "log_moneyness")?,
                iv: num(2, "iv")?,
                clipped: fields[3].trim() == "1" || fields[3].trim() == "true",
            });
        }
        if !saw_header {
            return Err(schema("no header row found"));
        }
        let spot = spot.ok_or_else(|| schema("no '# {\"spot\": ...}' header line found"))?;
        Self::new(points, spot, as_of)
    }
}

/// Term structure of the predicted effective volatility `sigma_{t,t+tau}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveVolForecast {
    /// `(tau, sigma_{t,t+tau})` pairs, ascending in tau.
    pub curve: Vec<(f64, f64)>,
}

/// A regime-formula value plus a flag telling whether the inputs actually sit
/// in the regime the formula was derived for.
#[derive(Debug, Clone, Copy)]
pub struct RegimeIv {
    pub iv: f64,
    pub in_regime: bool,
}

/// Invert the zero-rate Black-Scholes formula for volatility.
///
/// Newton from vega with a maintained bisection bracket; converges to 1e-12
/// absolute in price. The price must sit strictly between the no-arbitrage
/// bounds `(x - K)_+` and `x`.
pub fn bs_implied_vol(price: f64, x: f64, strike: f64, tau: f64) -> Result<f64> {
    if !(x > 0.0 && strike > 0.0 && tau > 0.0) {
        return Err(domain("implied vol needs x, strike, tau > 0"));
    }
    let intrinsic = (x - strike).max(0.0);
    if !(price > intrinsic && price < x) {
        return Err(domain(format!(
            "price {price} outside no-arbitrage bounds ({intrinsic}, {x})"
        )));
    }
    // bracket: price is increasing in sigma, -> intrinsic at 0 and -> x at inf
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while bs_price(x, strike, hi, tau)? < price {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(numerical("implied vol bracket exceeded 1e6"));
        }
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..200 {
        let value = bs_price(x, strike, sigma, tau)?;
        let diff = value - price;
        if diff.abs() < 1e-12 {
            return Ok(sigma);
        }
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let st = sigma * tau.sqrt();
        let d1 = (x / strike).ln() / st + 0.5 * st;
        let vega = x * tau.sqrt() * norm_pdf(d1);
        let newton = sigma - diff / vega;
        sigma = if vega > 1e-300 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    // the bracket still certifies the result to bracket width
    if hi - lo < 1e-9 {
        return Ok(0.5 * (lo + hi));
    }
    Err(numerical("implied vol did not converge in 200 iterations"))
}

/// General first-order implied vol:
/// `I = sigma_bar + delta phi_t/tau + delta rho D(tau) [sigma_bar/(2 tau) + m/(sigma_bar tau^2)]`
/// with `m = log(K / X_t)`.
pub fn iv_first_order(model: &FsvModel, tau: f64, log_moneyness: f64, phi_t: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(domain(format!("iv_first_order needs tau > 0, got {tau}")));
    }
    let sb = model.sigma_bar();
    let d = d_function(tau, model.fou())?;
    Ok(sb
        + model.delta() * phi_t / tau
        + model.delta_rho() * d * (sb / (2.0 * tau) + log_moneyness / (sb * tau * tau)))
}

/// Short-maturity regime (`a tau << 1`): the random part collapses to
/// `delta Z_t` and the skew term is a pure power law with exponent `H - 1/2`.
/// `in_regime` is false when `a tau >= 0.1`.
pub fn iv_small_maturity(
    model: &FsvModel,
    tau: f64,
    log_moneyness: f64,
    z_t: f64,
) -> Result<RegimeIv> {
    if !(tau > 0.0) {
        return Err(domain(format!("iv_small_maturity needs tau > 0, got {tau}")));
    }
    let h = model.fou().hurst().get();
    let sb = model.sigma_bar();
    let iv = sb
        + model.delta() * z_t
        + model.delta_rho() / gamma(h + 2.5)
            * (sb / 2.0 * tau.powf(0.5 + h) + log_moneyness / (sb * tau.powf(0.5 - h)));
    Ok(RegimeIv { iv, in_regime: model.fou().a() * tau < 0.1 })
}

/// Long-maturity regime (`a tau >> 1`): the random part is negligible and the
/// skew exponent is `H - 3/2`. `in_regime` is false when `a tau <= 10`.
pub fn iv_large_maturity(model: &FsvModel, tau: f64, log_moneyness: f64) -> Result<RegimeIv> {
    if !(tau > 0.0) {
        return Err(domain(format!("iv_large_maturity needs tau > 0, got {tau}")));
    }
    let h = model.fou().hurst().get();
    let sb = model.sigma_bar();
    let a = model.fou().a();
    let iv = sb
        + model.delta_rho() / (a * gamma(h + 1.5))
            * (sb / 2.0 * tau.powf(h - 0.5) + log_moneyness / (sb * tau.powf(1.5 - h)));
    Ok(RegimeIv { iv, in_regime: a * tau > 10.0 })
}

/// First-order effective-volatility forecast `sigma_bar + delta phi_t(tau)/tau`
/// along a caller-supplied forecast curve `(tau, phi_t(tau))`.
pub fn effective_vol_forecast(
    model: &FsvModel,
    phi_curve: &[(f64, f64)],
) -> Result<EffectiveVolForecast> {
    let mut curve = Vec::with_capacity(phi_curve.len());
    for &(tau, phi) in phi_curve {
        if !(tau > 0.0) {
            return Err(domain(format!("forecast horizon must be positive, got {tau}")));
        }
        curve.push((tau, model.sigma_bar() + model.delta() * phi / tau));
    }
    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(EffectiveVolForecast { curve })
}

/// Implied vol for the slow-factor model, `tau0 = 2/sigma0^2`:
/// `I = sigma0 + p0 phi^d/tau + delta^H p0 rho tau0^H / (sqrt(2) Gamma(H+5/2))
///      [ (tau/tau0)^(1/2+H) + (tau/tau0)^(H-1/2) m ]`.
pub fn iv_slow(model: &SlowFsvModel, tau: f64, log_moneyness: f64, phi_delta_t: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(domain(format!("iv_slow needs tau > 0, got {tau}")));
    }
    let sigma0 = model.sigma0();
    let p0 = model.p0();
    let h = model.fou().hurst().get();
    let tau0 = 2.0 / (sigma0 * sigma0);
    let amp = model.delta().powf(h) * p0 * model.rho() * tau0.powf(h) / (SQRT_2 * gamma(h + 2.5));
    Ok(sigma0
        + p0 * phi_delta_t / tau
        + amp * ((tau / tau0).powf(0.5 + h) + (tau / tau0).powf(h - 0.5) * log_moneyness))
}

/// Evaluate [`iv_first_order`] over a maturity/log-moneyness grid, clipping
/// at [`IV_MIN`]. `phi_t` maps a maturity to the forecast used at that point.
pub fn generate_surface<F: Fn(f64) -> f64>(
    model: &FsvModel,
    spot: f64,
    as_of: f64,
    phi_t: F,
    tau_grid: &[f64],
    moneyness_grid: &[f64],
) -> Result<VolSurface> {
    if tau_grid.is_empty() || moneyness_grid.is_empty() {
        return Err(domain("surface grids must be nonempty"));
    }
    let mut points = Vec::with_capacity(tau_grid.len() * moneyness_grid.len());
    for &tau in tau_grid {
        let phi = phi_t(tau);
        for &m in moneyness_grid {
            let raw = iv_first_order(model, tau, m, phi)?;
            let clipped = raw < IV_MIN;
            points.push(VolPoint {
                tau,
                log_moneyness: m,
                iv: if clipped { IV_MIN } else { raw },
                clipped,
            });
        }
    }
    VolSurface::new(points, spot, as_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac_kernel::{skew_amplitude, FouParams, Hurst};
    use crate::model::SlowMap;
    use crate::pricing::corrected_price;
    use crate::pricing::EuropeanCall;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn fou(h: f64, a: f64) -> FouParams {
        FouParams::new(Hurst::new(h).unwrap(), a).unwrap()
    }

    fn model(h: f64, a: f64, delta: f64, rho: f64) -> FsvModel {
        FsvModel::with_default_map(0.2, delta, rho, fou(h, a)).unwrap()
    }

    #[test]
    fn implied_vol_round_trip() {
        let p = bs_price(1.0, 1.0, 0.2, 1.0).unwrap();
        assert_abs_diff_eq!(bs_implied_vol(p, 1.0, 1.0, 1.0).unwrap(), 0.2, epsilon = 1e-8);
        for &(x, k, sigma, tau) in
            &[(1.0, 1.4, 0.31, 0.7), (1.0, 0.6, 0.08, 3.0), (2.0, 1.9, 0.55, 0.01)]
        {
            let p = bs_price(x, k, sigma, tau).unwrap();
            assert_abs_diff_eq!(bs_implied_vol(p, x, k, tau).unwrap(), sigma, epsilon = 1e-7);
        }
    }

    #[test]
    fn implied_vol_boundaries_and_stress() {
        // price just above intrinsic -> tiny vol (shrinks only like 1/sqrt(-ln eps))
        let iv = bs_implied_vol(0.1 + 1e-13, 1.1, 1.0, 1.0);
        assert!(iv.unwrap() < 0.05);
        // outside bounds -> domain errors
        assert!(bs_implied_vol(0.1, 1.1, 1.0, 1.0).is_err());
        assert!(bs_implied_vol(1.2, 1.1, 1.0, 1.0).is_err());
        // deep ITM, tiny vega stress grid
        for &sigma in &[0.05, 0.2, 0.8] {
            for &k in &[0.2, 0.5] {
                let p = bs_price(1.0, k, sigma, 0.05).unwrap();
                if p > (1.0f64 - k).max(0.0) + 1e-15 && p < 1.0 {
                    let iv = bs_implied_vol(p, 1.0, k, 0.05).unwrap();
                    assert_abs_diff_eq!(
                        bs_price(1.0, k, iv, 0.05).unwrap(),
                        p,
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn first_order_matches_amplitude_identity() {
        // I = (sigma_bar + delta phi/tau) + A(tau) [1 + m tau_bar / tau]
        let m = model(0.3, 1.0, 0.1, -0.5);
        let tau_bar = 2.0 / (0.2f64 * 0.2);
        for &tau in &[0.05, 0.4, 2.0, 20.0] {
            let a_tau = skew_amplitude(tau, &m).unwrap();
            for &lm in &[-0.2, 0.0, 0.15] {
                for &phi in &[0.0, 0.03] {
                    let lhs = iv_first_order(&m, tau, lm, phi).unwrap();
                    let rhs = 0.2 + 0.1 * phi / tau + a_tau * (1.0 + lm * tau_bar / tau);
                    assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
                }
            }
        }
        // delta = 0 -> flat sigma_bar
        let m0 = model(0.3, 1.0, 0.0, -0.5);
        assert_eq!(iv_first_order(&m0, 1.0, 0.3, 0.5).unwrap(), 0.2);
    }

    #[test]
    fn first_order_affine_in_log_moneyness() {
        let m = model(0.7, 0.5, 0.1, -0.6);
        for &tau in &[0.1, 1.0, 10.0] {
            let f = |lm: f64| iv_first_order(&m, tau, lm, 0.01).unwrap();
            let (a, b, c) = (f(-0.3), f(0.05), f(0.4));
            let w = (0.05 - (-0.3)) / (0.4 - (-0.3));
            assert_abs_diff_eq!(b, (1.0 - w) * a + w * c, epsilon = 1e-12);
        }
    }

    #[test]
    fn regime_formulas_agree_at_extremes() {
        for &h in &[0.3, 0.7] {
            let m = model(h, 1.0, 0.1, -0.5);
            // small maturity: a tau = 0.01
            let tau = 0.01;
            for &lm in &[-0.1, 0.0, 0.1] {
                let full = iv_first_order(&m, tau, lm, 0.0).unwrap();
                let small = iv_small_maturity(&m, tau, lm, 0.0).unwrap();
                assert!(small.in_regime);
                assert_relative_eq!(small.iv, full, max_relative = 2e-2);
            }
            // large maturity: a tau = 100
            let tau = 100.0;
            for &lm in &[-0.1, 0.0, 0.1] {
                let full = iv_first_order(&m, tau, lm, 0.0).unwrap();
                let large = iv_large_maturity(&m, tau, lm).unwrap();
                assert!(large.in_regime);
                assert_relative_eq!(large.iv, full, max_relative = 2e-2);
            }
        }
        // out-of-regime flags
        let m = model(0.3, 1.0, 0.1, -0.5);
        assert!(!iv_small_maturity(&m, 1.0, 0.0, 0.0).unwrap().in_regime);
        assert!(!iv_large_maturity(&m, 1.0, 0.0).unwrap().in_regime);
    }

    #[test]
    fn small_maturity_blowup_for_rough_h() {
        // fixed log-moneyness, H < 1/2: |I - sigma_bar - delta Z| ~ tau^(H-1/2)
        let m = model(0.3, 1.0, 0.1, -0.5);
        let excess = |tau: f64| (iv_small_maturity(&m, tau, 0.1, 0.02).unwrap().iv
            - 0.2
            - 0.1 * 0.02)
            .abs();
        let ratio = excess(0.001) / excess(0.01);
        assert_relative_eq!(ratio, 10f64.powf(0.2), max_relative = 0.15);
        // H > 1/2: level term of the long-maturity formula grows
        let ml = model(0.7, 1.0, 0.1, -0.5);
        assert!(
            (iv_large_maturity(&ml, 400.0, 0.0).unwrap().iv - 0.2).abs()
                > (iv_large_maturity(&ml, 100.0, 0.0).unwrap().iv - 0.2).abs()
        );
        // H < 1/2: long-maturity iv settles to sigma_bar
        let ms = model(0.3, 1.0, 0.1, -0.5);
        assert_abs_diff_eq!(iv_large_maturity(&ms, 1e6, 0.1).unwrap().iv, 0.2, epsilon = 1e-3);
    }

    #[test]
    fn inversion_consistency_is_second_order() {
        // bs_implied_vol(corrected_price) - iv_first_order = O(delta^2)
        let gap = |delta: f64, lm: f64| {
            let m = model(0.3, 1.0, delta, -0.5);
            let tau = 1.0;
            let strike = lm.exp(); // x = 1
            let call = EuropeanCall::new(strike, tau).unwrap();
            let price = corrected_price(&m, &call, 0.0, 1.0, 0.01).unwrap().total;
            let inv = bs_implied_vol(price, 1.0, strike, tau).unwrap();
            (inv - iv_first_order(&m, tau, lm, 0.01).unwrap()).abs()
        };
        for lm in [0.0, 0.2, -0.2] {
            let ratio = gap(0.1, lm) / gap(0.05, lm);
            assert!(
                (2.5..6.0).contains(&ratio),
                "expected ~4x shrink per delta halving, got {ratio} at lm {lm}"
            );
        }
    }

    #[test]
    fn effective_forecast_limits() {
        let m = model(0.3, 1.0, 0.1, -0.5);
        let flat = effective_vol_forecast(&m, &[(0.1, 0.0), (1.0, 0.0)]).unwrap();
        assert!(flat.curve.iter().all(|&(_, v)| v == 0.2));
        // small tau with phi ~ tau z: sigma -> sigma_bar + delta z
        let z = 0.3;
        let taus: Vec<(f64, f64)> = (1..5).map(|i| {
            let tau = 10f64.powi(-i);
            (tau, tau * z)
        }).collect();
        let f = effective_vol_forecast(&m, &taus).unwrap();
        for &(_, v) in &f.curve {
            assert_abs_diff_eq!(v, 0.2 + 0.1 * z, epsilon = 1e-12);
        }
    }

    #[test]
    fn slow_iv_shape() {
        let slow = SlowFsvModel::new(
            0.1,
            -0.5,
            fou(0.3, 1.0),
            SlowMap::new(0.1, 0.1).unwrap(),
            0.0,
        )
        .unwrap();
        // p0 = 0 via saturated z0
        let flat =
            SlowFsvModel::new(0.1, -0.5, fou(0.3, 1.0), SlowMap::new(0.1, 0.1).unwrap(), 40.0)
                .unwrap();
        assert_eq!(iv_slow(&flat, 1.0, 0.4, 0.2).unwrap(), flat.sigma0());

        // matches the small-maturity fSV shape under sigma_bar -> sigma0,
        // delta -> delta^H p0
        let h = 0.3;
        let sigma0 = slow.sigma0();
        let p0 = slow.p0();
        let eff = slow.delta().powf(h) * p0;
        for &tau in &[0.3, 1.0] {
            for &lm in &[-0.1, 0.0, 0.2] {
                let got = iv_slow(&slow, tau, lm, 0.0).unwrap();
                let want = sigma0
                    + eff * slow.rho() / gamma(h + 2.5)
                        * (sigma0 / 2.0 * tau.powf(0.5 + h) + lm / (sigma0 * tau.powf(0.5 - h)));
                assert_abs_diff_eq!(got, want, epsilon = 1e-12);
            }
        }

        // skew slope vs finite difference in log-moneyness
        let tau = 0.7;
        let tau0 = 2.0 / (sigma0 * sigma0);
        let want_slope = slow.delta().powf(h) * p0 * slow.rho() * tau0.powf(h)
            / (SQRT_2 * gamma(h + 2.5))
            * (tau / tau0).powf(h - 0.5);
        let d = 1e-6;
        let fd = (iv_slow(&slow, tau, d, 0.0).unwrap() - iv_slow(&slow, tau, -d, 0.0).unwrap())
            / (2.0 * d);
        assert_relative_eq!(fd, want_slope, max_relative = 1e-9);
    }

    #[test]
    fn surface_generation_and_csv_round_trip() {
        // rho = 0, phi = 0: flat at sigma_bar
        let flat_model = model(0.3, 1.0, 0.1, 0.0);
        let s = generate_surface(&flat_model, 1.0, 0.0, |_| 0.0, &[0.25, 1.0], &[-0.1, 0.0, 0.1])
            .unwrap();
        assert!(s.points.iter().all(|p| p.iv == 0.2 && !p.clipped));

        // extreme negative moneyness at tiny tau trips the clip flag
        let m = model(0.2, 1.0, 0.3, 0.9);
        let s = generate_surface(&m, 1.0, 0.0, |_| 0.0, &[0.01], &[-2.0]).unwrap();
        assert!(s.points[0].clipped && s.points[0].iv == IV_MIN);

        // CSV round trip
        let m = model(0.3, 1.0, 0.1, -0.5);
        let s =
            generate_surface(&m, 1.25, 0.5, |_| 0.01, &[0.25, 1.0, 4.0], &[-0.2, 0.0, 0.2])
                .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &serde_json::to_value(&m).unwrap()).unwrap();
        let back = VolSurface::read_csv(&buf[..]).unwrap();
        assert_eq!(back.spot, 1.25);
        assert_eq!(back.as_of, 0.5);
        assert_eq!(back.points, s.points);
        assert_eq!(back.maturities(), vec![0.25, 1.0, 4.0]);

        // schema violations carry line context
        let bad = "tau,log_moneyness,iv,clipped\n1.0,0.0\n";
        let err = VolSurface::read_csv(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
        // duplicate points rejected
        let dup = VolSurface::new(
            vec![
                VolPoint { tau: 1.0, log_moneyness: 0.0, iv: 0.2, clipped: false },
                VolPoint { tau: 1.0, log_moneyness: 0.0, iv: 0.21, clipped: false },
            ],
            1.0,
            0.0,
        );
        assert!(dup.is_err());
    }
}
