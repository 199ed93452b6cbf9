//! Model descriptions shared by the kernel math, the simulator, the pricer
//! and the calibrator.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::frac_kernel::FouParams;

/// Saturation profile of an [`FMap`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum FMapKind {
    /// `F(x) = scale * tanh(x / scale)`.
    Tanh,
    /// `F(x) = scale * y / (1 + y^(2n))^(1/(2n))` with `y = x / scale`.
    /// Stays within 1% of linear until `|x| ~ 0.75 * scale` (for `order` 8),
    /// unlike tanh which bends over from the start; useful when the quadratic
    /// remainder of the linearised model is what's being measured.
    Rational { order: u32 },
}

/// Bounded volatility perturbation map with `F(0) = 0`, `F'(0) = 1` and
/// `|F| <= scale`; the scale controls where the response saturates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FMap {
    scale: f64,
    kind: FMapKind,
}

impl FMap {
    /// Default tanh profile.
    pub fn new(scale: f64) -> Result<Self> {
        Self::with_kind(scale, FMapKind::Tanh)
    }

    pub fn rational(scale: f64, order: u32) -> Result<Self> {
        Self::with_kind(scale, FMapKind::Rational { order })
    }

    pub fn with_kind(scale: f64, kind: FMapKind) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(domain(format!("F-map scale must be positive, got {scale}")));
        }
        if let FMapKind::Rational { order } = kind {
            if order == 0 {
                return Err(domain("F-map rational order must be >= 1"));
            }
        }
        Ok(Self { scale, kind })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = x / self.scale;
        match self.kind {
            FMapKind::Tanh => self.scale * y.tanh(),
            FMapKind::Rational { order } => {
                if y.abs() > 1e6 {
                    return self.scale * y.signum();
                }
                let p = y.abs().powi(2 * order as i32);
                self.scale * y / (1.0 + p).powf(0.5 / order as f64)
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let y = x / self.scale;
        match self.kind {
            FMapKind::Tanh => {
                let t = y.tanh();
                1.0 - t * t
            }
            FMapKind::Rational { order } => {
                if y.abs() > 1e6 {
                    return 0.0;
                }
                let n2 = 2.0 * order as f64;
                let p = y.abs().powi(2 * order as i32);
                (1.0 + p).powf(-(n2 + 1.0) / n2)
            }
        }
    }

    /// Infimum of the map over the real line (`-scale`).
    pub fn lower_bound(&self) -> f64 {
        -self.scale
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Small-fluctuation volatility model: `sigma_t = sigma_bar + F(delta * Z_t)`
/// with `Z` the stationary fractional factor and leverage correlation `rho`
/// between volatility shocks and asset shocks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FsvModel {
    sigma_bar: f64,
    delta: f64,
    rho: f64,
    fou: FouParams,
    f_map: FMap,
}

impl FsvModel {
    pub fn new(sigma_bar: f64, delta: f64, rho: f64, fou: FouParams, f_map: FMap) -> Result<Self> {
        if !(sigma_bar > 0.0 && sigma_bar.is_finite()) {
            return Err(domain(format!("sigma_bar must be positive, got {sigma_bar}")));
        }
        if !(delta >= 0.0 && delta < 1.0) {
            return Err(domain(format!("delta must lie in [0, 1), got {delta}")));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(domain(format!("rho must lie in [-1, 1], got {rho}")));
        }
        if sigma_bar + f_map.lower_bound() <= 0.0 {
            return Err(domain(format!(
                "volatility not positive: sigma_bar {sigma_bar} + inf F {} <= 0",
                f_map.lower_bound()
            )));
        }
        Ok(Self { sigma_bar, delta, rho, fou, f_map })
    }

    /// Model with the default map scale `0.95 * sigma_bar` (keeps volatility
    /// bounded away from zero while staying close to linear response).
    pub fn with_default_map(sigma_bar: f64, delta: f64, rho: f64, fou: FouParams) -> Result<Self> {
        let f_map = FMap::new(0.95 * sigma_bar)?;
        Self::new(sigma_bar, delta, rho, fou, f_map)
    }

    pub fn sigma_bar(&self) -> f64 {
        self.sigma_bar
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn fou(&self) -> &FouParams {
        &self.fou
    }
    pub fn f_map(&self) -> &FMap {
        &self.f_map
    }
    /// The identifiable leverage bundle `delta * rho`.
    pub fn delta_rho(&self) -> f64 {
        self.delta * self.rho
    }
    /// Instantaneous volatility given a factor value.
    pub fn sigma_of(&self, z: f64) -> f64 {
        self.sigma_bar + self.f_map.eval(self.delta * z)
    }
}

/// Volatility map for the slow-factor model:
/// `F(x) = sigma_min + scale * (1 + tanh x)`, positive and bounded away from
/// zero.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlowMap {
    sigma_min: f64,
    scale: f64,
}

impl SlowMap {
    pub fn new(sigma_min: f64, scale: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && scale > 0.0) {
            return Err(domain(format!(
                "slow map needs sigma_min > 0 and scale > 0, got {sigma_min}, {scale}"
            )));
        }
        Ok(Self { sigma_min, scale })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sigma_min + self.scale * (1.0 + x.tanh())
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let t = x.tanh();
        self.scale * (1.0 - t * t)
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Order-one-amplitude volatility driven by a time-dilated fractional factor:
/// `sigma_t = F(Z_t^(delta))` where the factor's natural time scale is
/// `1/delta`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlowFsvModel {
    delta: f64,
    rho: f64,
    fou: FouParams,
    f_map: SlowMap,
    z0: f64,
}

impl SlowFsvModel {
    pub fn new(delta: f64, rho: f64, fou: FouParams, f_map: SlowMap, z0: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(domain(format!("rho must lie in [-1, 1], got {rho}")));
        }
        if !z0.is_finite() {
            return Err(domain("z0 must be finite"));
        }
        Ok(Self { delta, rho, fou, f_map, z0 })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn fou(&self) -> &FouParams {
        &self.fou
    }
    pub fn f_map(&self) -> &SlowMap {
        &self.f_map
    }
    pub fn z0(&self) -> f64 {
        self.z0
    }
    /// Local volatility level `sigma_0 = F(z0)`.
    pub fn sigma0(&self) -> f64 {
        self.f_map.eval(self.z0)
    }
    /// Local rate of change `p0 = F'(z0)`.
    pub fn p0(&self) -> f64 {
        self.f_map.derivative(self.z0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frac_kernel::{FouParams, Hurst};
    use approx::assert_relative_eq;

    fn fou() -> FouParams {
        FouParams::new(Hurst::new(0.3).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn fmap_shape() {
        let f = FMap::new(0.2).unwrap();
        assert_eq!(f.eval(0.0), 0.0);
        assert_relative_eq!(f.derivative(0.0), 1.0, epsilon = 1e-14);
        assert!(f.eval(100.0) <= 0.2 && f.eval(-100.0) >= -0.2);
        assert!(f.eval(0.5) < 0.2 && f.eval(-0.5) > -0.2);
        // small-argument linearity
        assert_relative_eq!(f.eval(1e-4), 1e-4, max_relative = 1e-7);
    }

    #[test]
    fn fmap_rational_shape() {
        let f = FMap::rational(0.199, 8).unwrap();
        assert_eq!(f.eval(0.0), 0.0);
        assert_relative_eq!(f.derivative(0.0), 1.0, epsilon = 1e-14);
        // near-linear deep into the band, unlike tanh
        assert_relative_eq!(f.eval(0.15), 0.15, max_relative = 2e-3);
        assert_relative_eq!(f.eval(-0.1), -0.1, max_relative = 1e-4);
        // bounded, odd, monotone
        assert!(f.eval(10.0) <= 0.199 && f.eval(10.0) > 0.198);
        assert!(f.eval(1e9) == 0.199 && f.eval(-1e9) == -0.199);
        assert_relative_eq!(f.eval(0.3), -f.eval(-0.3), epsilon = 1e-15);
        let mut last = -0.2;
        for i in -40..=40 {
            let v = f.eval(0.01 * i as f64);
            assert!(v > last);
            last = v;
        }
        // derivative matches a central difference
        for x in [0.05, 0.15, 0.25] {
            let h = 1e-6;
            let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
            assert_relative_eq!(f.derivative(x), fd, max_relative = 1e-6);
        }
        assert!(FMap::rational(0.2, 0).is_err());
    }

    #[test]
    fn fsv_model_positivity_guard() {
        let bad = FMap::new(0.3).unwrap(); // inf F = -0.3 < -sigma_bar
        assert!(FsvModel::new(0.2, 0.1, -0.5, fou(), bad).is_err());
        let ok = FsvModel::with_default_map(0.2, 0.1, -0.5, fou()).unwrap();
        assert!(ok.sigma_of(-1e6) > 0.0);
        assert_relative_eq!(ok.delta_rho(), -0.05, epsilon = 1e-15);
    }

    #[test]
    fn slow_model_local_state() {
        let m = SlowFsvModel::new(0.1, -0.6, fou(), SlowMap::new(0.05, 0.1).unwrap(), 0.0).unwrap();
        assert_relative_eq!(m.sigma0(), 0.15, epsilon = 1e-15);
        assert_relative_eq!(m.p0(), 0.1, epsilon = 1e-15);
        assert!(m.f_map().eval(-1e9) >= 0.05);
    }
}
