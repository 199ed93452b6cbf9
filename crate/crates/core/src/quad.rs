//! Adaptive Gauss-Kronrod quadrature plus the endpoint-singularity and
//! power-tail substitutions used throughout the kernel math.

use crate::error::{numerical, Result};

// 15-point Kronrod abscissae on [-1, 1] (positive half) and weights,
// with the embedded 7-point Gauss weights. QUADPACK QK15 constants.
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, &x) in XGK.iter().enumerate() {
        let (lo, hi) = (f(c - h * x), if x == 0.0 { 0.0 } else { f(c + h * x) });
        let pair = if x == 0.0 { lo } else { lo + hi };
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    kronrod *= h;
    gauss *= h;
    Panel {
        a,
        b,
        value: kronrod,
        err: (kronrod - gauss).abs().max(f64::EPSILON * kronrod.abs()),
    }
}

/// Integrate `f` over `[a, b]`, bisecting the worst panel until the summed
/// error estimate satisfies `abs_tol + rel_tol * |I|`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    integrate_split(f, &[a, b], abs_tol, rel_tol)
}

/// Same as [`integrate`] but with caller-supplied initial breakpoints
/// (strictly increasing; first and last are the integration limits).
pub fn integrate_split<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    const MAX_PANELS: usize = 4000;
    debug_assert!(breaks.len() >= 2);
    if breaks[0] == breaks[breaks.len() - 1] {
        return Ok(0.0);
    }
    let mut panels: Vec<Panel> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&f, w[0], w[1]))
        .collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.err).sum();
        let target = abs_tol + rel_tol * total.abs();
        if err <= target {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(numerical(format!(
                "quadrature did not converge: achieved error {err:.3e}, target {target:.3e} \
                 on [{}, {}]",
                breaks[0],
                breaks[breaks.len() - 1]
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("non-empty panel list");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval exhausted at machine precision; accept its estimate
            panels.push(Panel { err: 0.0, ..p });
            continue;
        }
        panels.push(gk15(&f, p.a, mid));
        panels.push(gk15(&f, mid, p.b));
    }
}

/// Integrate `u^beta * g(u)` over `(0, b]` where `g` is smooth at the origin
/// and `beta > -1`. The substitution `u = b x^(1/(1+beta))` removes the
/// endpoint singularity exactly.
pub fn integrate_power_singular<G: Fn(f64) -> f64>(
    g: G,
    beta: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    debug_assert!(beta > -1.0 && b > 0.0);
    let q = 1.0 / (1.0 + beta);
    let scale = q * b.powf(1.0 + beta);
    let v = integrate(|x| g(b * x.powf(q)), 0.0, 1.0, abs_tol / scale.max(1e-300), rel_tol)?;
    Ok(scale * v)
}

/// Integrate `f` over `[a, inf)` where `f(u) ~ C u^(-p)` (or faster) with
/// `p > 1`. The substitution `u = a x^(-1/(p-1))` maps the tail onto `(0, 1]`
/// with a bounded integrand; faster-than-power decay is handled too, only the
/// node clustering is tuned for the power case.
pub fn integrate_power_tail<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    p: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    debug_assert!(p > 1.0 && a > 0.0);
    let r = 1.0 / (p - 1.0);
    let scale = a * r;
    integrate(
        |x| {
            let u = a * x.powf(-r);
            if !u.is_finite() {
                return 0.0;
            }
            f(u) * x.powf(-r - 1.0)
        },
        0.0,
        1.0,
        abs_tol / scale.max(1e-300),
        rel_tol,
    )
    .map(|v| scale * v)
}
