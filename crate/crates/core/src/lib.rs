//! Fractional stochastic volatility toolkit: kernel math for the fractional
//! Ornstein-Uhlenbeck volatility factor, first-order corrected option prices,
//! implied-volatility term structure, a Monte Carlo oracle, and surface
//! calibration.

pub mod calibrate;
pub mod error;
pub mod fou_simulate;
pub mod frac_kernel;
pub mod implied_vol;
pub mod mc_validate;
pub mod model;
pub mod pricing;
pub mod quad;
pub mod special;

pub use calibrate::{fit_hurst_from_skew, fit_params, CalibratedParams, FitConfig, WeightRule};
pub use error::{FracvolError, Result};
pub use fou_simulate::{
    draw_normals, fou_weights, mc_price, path_rng, phi_from_history, phi_weights,
    scaled_fou_weights, simulate_asset, simulate_asset_slow, simulate_fou, Convolver, McConfig,
    PathGrid, SimulatedScenario,
};
pub use frac_kernel::{
    cov_fou, d_function, d_function_quadrature, k_z, kernel_fou, phi_variance,
    phi_variance_quadrature, q_z, sigma_h_sq, sigma_ou_sq, skew_amplitude, skew_coefficients,
    theta, variance_quadrature, FouKernel, FouParams, Hurst, Kernel, PowerLawCutoffKernel,
    ScaledKernel, SkewCoefficients,
};
pub use implied_vol::{
    bs_implied_vol, effective_vol_forecast, generate_surface, iv_first_order, iv_large_maturity,
    iv_slow, iv_small_maturity, EffectiveVolForecast, RegimeIv, VolPoint, VolSurface, IV_MIN,
};
pub use mc_validate::{
    run_calibration_roundtrip, run_delta_convergence, run_delta_convergence_slow,
    run_phi_statistics, run_skew_powerlaw, CellCheck, ExperimentReport,
};
pub use model::{FMap, FMapKind, FsvModel, SlowFsvModel, SlowMap};
pub use pricing::{
    bs_derivative_operators, bs_price, corrected_price, phi_delta_variance,
    phi_delta_variance_exact, slow_corrected_price, EuropeanCall, PriceBreakdown, TAU_FLOOR,
};
