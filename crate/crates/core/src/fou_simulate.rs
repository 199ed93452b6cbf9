//! Path simulation: the fractional volatility factor as a truncated
//! moving average over Brownian increments, the correlated asset path, the
//! realized conditional functional `phi`, and a Monte Carlo pricer.
//!
//! The factor is exact in distribution up to (a) truncation of the moving
//! average at a finite history window and (b) cell-averaged kernel weights.
//! Both error sources are controlled: the kernel tail is integrable-squared,
//! and cell averaging keeps the discrete variance within O(dt) of the
//! stationary variance even for rough kernels (H < 1/2), where pointwise
//! sampling of the singular kernel would bias the variance down.

use std::io::{BufRead, Write as IoWrite};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, schema, Result};
use crate::frac_kernel::{theta, FouParams};
use crate::model::{FsvModel, SlowFsvModel};
use crate::pricing::EuropeanCall;

/// Default history truncation horizon in units of the mean-reversion time
/// `1/a`: the moving average is cut at `10/a` into the past.
pub const HISTORY_HORIZON_RATE_UNITS: f64 = 10.0;

/// Kernel length above which the per-path convolution switches from direct
/// summation to FFT.
const FFT_THRESHOLD: usize = 512;

/// Uniform time grid: `n_history` steps of past increments before `t0`
/// (for the moving-average truncation) followed by `n_steps` live steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    t0: f64,
    dt: f64,
    n_steps: usize,
    n_history: usize,
}

impl PathGrid {
    pub fn new(t0: f64, dt: f64, n_steps: usize, n_history: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(domain(format!("grid dt must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(domain("grid needs at least one live step"));
        }
        if !t0.is_finite() {
            return Err(domain("grid t0 must be finite"));
        }
        Ok(Self { t0, dt, n_steps, n_history })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
    pub fn n_history(&self) -> usize {
        self.n_history
    }
    /// Number of Brownian increments (history + live).
    pub fn total_steps(&self) -> usize {
        self.n_history + self.n_steps
    }
    /// Time of live node `i` (0 ..= n_steps).
    pub fn node_time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
    /// Left endpoint of increment cell `j` (0 .. total_steps), counting from
    /// the start of the history window.
    fn cell_time(&self, j: usize) -> f64 {
        self.t0 + (j as f64 - self.n_history as f64) * self.dt
    }

    /// History steps needed to cover the default truncation horizon `10/a`.
    pub fn required_history(dt: f64, a: f64) -> usize {
        (HISTORY_HORIZON_RATE_UNITS / (a * dt)).ceil() as usize
    }
}

/// Cell-averaged moving-average weights for the fOU kernel on a grid:
/// `w_m = [theta((m+1) dt) - theta(m dt)] / dt`, so that `w_m * dW` carries
/// the exact integral of the kernel over the cell.
pub fn fou_weights(grid: &PathGrid, p: &FouParams) -> Result<Vec<f64>> {
    weights_from_theta(grid, |u| theta(u, p))
}

/// Weights for the time-dilated kernel `sqrt(delta) K(delta t)` used by the
/// slow-factor model; its running integral is `theta(delta u) / sqrt(delta)`.
pub fn scaled_fou_weights(grid: &PathGrid, p: &FouParams, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(domain(format!("delta must be positive, got {delta}")));
    }
    let root = delta.sqrt();
    weights_from_theta(grid, |u| Ok(theta(delta * u, p)? / root))
}

fn weights_from_theta(grid: &PathGrid, th: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    let total = grid.total_steps();
    let dt = grid.dt;
    let mut cum = Vec::with_capacity(total + 1);
    for m in 0..=total {
        cum.push(th(m as f64 * dt)?);
    }
    Ok((0..total).map(|m| (cum[m + 1] - cum[m]) / dt).collect())
}

/// Linear convolution of a fixed weight vector with per-path increment
/// vectors, returning the factor at the live nodes. FFT above
/// [`FFT_THRESHOLD`], direct summation below.
pub struct Convolver {
    n_history: usize,
    n_steps: usize,
    engine: ConvEngine,
}

enum ConvEngine {
    Direct { weights: Vec<f64> },
    Fft { fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>>, w_hat: Vec<Complex<f64>>, len: usize },
}

impl Convolver {
    pub fn new(weights: &[f64], grid: &PathGrid) -> Result<Self> {
        let total = grid.total_steps();
        if weights.len() != total {
            return Err(config(format!(
                "weight vector length {} does not match grid increments {total}",
                weights.len()
            )));
        }
        let engine = if total < FFT_THRESHOLD {
            ConvEngine::Direct { weights: weights.to_vec() }
        } else {
            let len = (2 * total).next_power_of_two();
            let mut planner = FftPlanner::new();
            let fwd = planner.plan_fft_forward(len);
            let inv = planner.plan_fft_inverse(len);
            let mut w_hat: Vec<Complex<f64>> =
                weights.iter().map(|&w| Complex::new(w, 0.0)).collect();
            w_hat.resize(len, Complex::new(0.0, 0.0));
            fwd.process(&mut w_hat);
            ConvEngine::Fft { fwd, inv, w_hat, len }
        };
        Ok(Self { n_history: grid.n_history, n_steps: grid.n_steps, engine })
    }

    /// Factor values at live nodes 0 ..= n_steps. Node `i` sums the
    /// `n_history + i` increments strictly before it; node 0 with no history
    /// is exactly zero (conditioning on a trivial past).
    pub fn z_live(&self, dw: &[f64]) -> Vec<f64> {
        assert_eq!(dw.len(), self.n_history + self.n_steps);
        match &self.engine {
            ConvEngine::Direct { weights } => {
                let mut z = Vec::with_capacity(self.n_steps + 1);
                for i in 0..=self.n_steps {
                    let cnt = self.n_history + i;
                    let mut acc = 0.0;
                    for m in 0..cnt {
                        acc += weights[m] * dw[cnt - 1 - m];
                    }
                    z.push(acc);
                }
                z
            }
            ConvEngine::Fft { fwd, inv, w_hat, len } => {
                let mut buf: Vec<Complex<f64>> =
                    dw.iter().map(|&x| Complex::new(x, 0.0)).collect();
                buf.resize(*len, Complex::new(0.0, 0.0));
                fwd.process(&mut buf);
                for (b, w) in buf.iter_mut().zip(w_hat) {
                    *b *= w;
                }
                inv.process(&mut buf);
                let scale = 1.0 / *len as f64;
                (0..=self.n_steps)
                    .map(|i| {
                        let cnt = self.n_history + i;
                        if cnt == 0 {
                            0.0
                        } else {
                            buf[cnt - 1].re * scale
                        }
                    })
                    .collect()
            }
        }
    }
}

/// One ChaCha stream per path: reproducible under any parallel schedule.
pub fn path_rng(seed: u64, path_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// `n` iid N(0, scale^2) draws.
pub fn draw_normals(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn check_history(grid: &PathGrid, a: f64) -> Result<()> {
    // n_history == 0 is an explicit request to condition on a trivial past
    // (factor started at zero at t0); anything in between is a truncation
    // error trap.
    if grid.n_history == 0 {
        return Ok(());
    }
    let required = PathGrid::required_history(grid.dt, a);
    if grid.n_history < required {
        return Err(config(format!(
            "n_history {} covers only {:.3} time units; the truncation horizon 10/a = {:.3} \
             needs n_history >= {required} at dt = {}",
            grid.n_history,
            grid.n_history as f64 * grid.dt,
            HISTORY_HORIZON_RATE_UNITS / a,
            grid.dt
        )));
    }
    Ok(())
}

/// Simulate one path of the stationary (history-truncated) fOU factor.
/// Returns the factor at the live nodes together with the same `dW`
/// increments that drove it, for leverage coupling downstream.
pub fn simulate_fou(grid: &PathGrid, p: &FouParams, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_history(grid, p.a())?;
    let weights = fou_weights(grid, p)?;
    let conv = Convolver::new(&weights, grid)?;
    let mut rng = path_rng(seed, 0);
    let dw = draw_normals(&mut rng, grid.total_steps(), grid.dt.sqrt());
    Ok((conv.z_live(&dw), dw))
}

/// Joint scenario: factor, volatility, asset and the raw increments.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScenario {
    pub grid: PathGrid,
    pub seed: u64,
    /// Brownian increments of the volatility driver, history + live.
    pub dw: Vec<f64>,
    /// Independent increments for the asset's orthogonal noise, live only.
    pub db: Vec<f64>,
    /// Factor values at live nodes (length n_steps + 1).
    pub z_path: Vec<f64>,
    /// Instantaneous volatility at live nodes.
    pub sigma_path: Vec<f64>,
    /// Asset values at live nodes.
    pub x_path: Vec<f64>,
}

fn asset_nodes(
    x0: f64,
    dt: f64,
    rho: f64,
    sigma: &[f64],
    dw_live: &[f64],
    db: &[f64],
) -> Vec<f64> {
    let rho_bar = (1.0 - rho * rho).max(0.0).sqrt();
    let mut x = Vec::with_capacity(sigma.len());
    let mut log_x = x0.ln();
    x.push(x0);
    for i in 0..dw_live.len() {
        let s = sigma[i];
        let dws = rho * dw_live[i] + rho_bar * db[i];
        log_x += s * dws - 0.5 * s * s * dt;
        x.push(log_x.exp());
    }
    x
}

fn build_scenario(
    grid: &PathGrid,
    seed: u64,
    rho: f64,
    x0: f64,
    conv: &Convolver,
    sigma_of: impl Fn(f64) -> f64,
) -> SimulatedScenario {
    let mut rng = path_rng(seed, 0);
    let sqrt_dt = grid.dt.sqrt();
    let dw = draw_normals(&mut rng, grid.total_steps(), sqrt_dt);
    let db = draw_normals(&mut rng, grid.n_steps, sqrt_dt);
    let z_path = conv.z_live(&dw);
    let sigma_path: Vec<f64> = z_path.iter().map(|&z| sigma_of(z)).collect();
    let x_path =
        asset_nodes(x0, grid.dt, rho, &sigma_path, &dw[grid.n_history..], &db);
    SimulatedScenario { grid: *grid, seed, dw, db, z_path, sigma_path, x_path }
}

/// Simulate the small-fluctuation model: factor, volatility
/// `sigma_bar + F(delta Z)`, and the asset with leverage `rho`.
pub fn simulate_asset(
    model: &FsvModel,
    grid: &PathGrid,
    seed: u64,
    x0: f64,
) -> Result<SimulatedScenario> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(domain(format!("x0 must be positive, got {x0}")));
    }
    check_history(grid, model.fou().a())?;
    let weights = fou_weights(grid, model.fou())?;
    let conv = Convolver::new(&weights, grid)?;
    Ok(build_scenario(grid, seed, model.rho(), x0, &conv, |z| model.sigma_of(z)))
}

/// Simulate the slow-factor model: time-dilated factor started at `z0`,
/// volatility `F(z0 + fluctuation)`.
pub fn simulate_asset_slow(
    model: &SlowFsvModel,
    grid: &PathGrid,
    seed: u64,
    x0: f64,
) -> Result<SimulatedScenario> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(domain(format!("x0 must be positive, got {x0}")));
    }
    // the dilated kernel reverts at rate delta * a
    check_history(grid, model.delta() * model.fou().a())?;
    let weights = scaled_fou_weights(grid, model.fou(), model.delta())?;
    let conv = Convolver::new(&weights, grid)?;
    let z0 = model.z0();
    let f = *model.f_map();
    Ok(build_scenario(grid, seed, model.rho(), x0, &conv, move |z| f.eval(z0 + z)))
}

/// Quadrature weights for the realized conditional functional: cell-midpoint
/// values of `theta(T - u) - theta(t - u)` over every increment cell up to
/// `t` (node index `i_t` on the live grid).
pub fn phi_weights(grid: &PathGrid, p: &FouParams, i_t: usize, big_t: f64) -> Result<Vec<f64>> {
    let t = grid.node_time(i_t);
    if i_t > grid.n_steps {
        return Err(domain(format!("node index {i_t} beyond grid ({} steps)", grid.n_steps)));
    }
    if big_t <= t {
        return Err(domain(format!("maturity {big_t} must exceed evaluation time {t}")));
    }
    let cells = grid.n_history + i_t;
    let mut w = Vec::with_capacity(cells);
    for j in 0..cells {
        let mid = grid.cell_time(j) + 0.5 * grid.dt;
        w.push(theta(big_t - mid, p)? - theta(t - mid, p)?);
    }
    Ok(w)
}

/// Realized `phi_t` for maturity `T` from a scenario's increment history:
/// the stochastic integral of `theta(T-u) - theta(t-u)` against `dW` up
/// to `t`. Mean zero; variance matches the closed-form `phi_variance`.
pub fn phi_from_history(
    scenario: &SimulatedScenario,
    p: &FouParams,
    t: f64,
    big_t: f64,
) -> Result<f64> {
    if t >= big_t {
        return Err(domain(format!("need t < T, got t = {t}, T = {big_t}")));
    }
    let grid = &scenario.grid;
    let pos = (t - grid.t0) / grid.dt;
    let i_t = pos.round() as isize;
    if (pos - i_t as f64).abs() > 1e-9 || i_t < 0 || i_t as usize > grid.n_steps {
        return Err(domain(format!("t = {t} is not a live grid node")));
    }
    let w = phi_weights(grid, p, i_t as usize, big_t)?;
    Ok(w.iter().zip(&scenario.dw).map(|(wi, dwi)| wi * dwi).sum())
}

/// Monte Carlo budget and discretization for [`mc_price`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub antithetic: bool,
    /// History steps for the factor's past; `None` picks the default
    /// truncation horizon, `Some(0)` conditions on a trivial past.
    pub history_steps: Option<usize>,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        Self { n_paths, dt, seed, antithetic: true, history_steps: None }
    }
}

/// Chunk size of the deterministic parallel reduction: partial sums are
/// combined in chunk order, so the estimate is bit-identical for any
/// worker count.
const MC_CHUNK: usize = 2048;

/// Monte Carlo price of a European call at `t = 0` under the
/// small-fluctuation model, with per-path antithetic pairing when enabled.
/// Returns (price, standard error).
pub fn mc_price(
    model: &FsvModel,
    call: &EuropeanCall,
    x0: f64,
    cfg: &McConfig,
) -> Result<(f64, f64)> {
    if cfg.n_paths < 2 {
        return Err(config(format!("need at least 2 paths, got {}", cfg.n_paths)));
    }
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(domain(format!("x0 must be positive, got {x0}")));
    }
    let tau = call.maturity();
    let n_steps = (tau / cfg.dt).ceil().max(1.0) as usize;
    let dt = tau / n_steps as f64;
    let hist = cfg
        .history_steps
        .unwrap_or_else(|| PathGrid::required_history(dt, model.fou().a()));
    let grid = PathGrid::new(0.0, dt, n_steps, hist)?;
    check_history(&grid, model.fou().a())?;
    let weights = fou_weights(&grid, model.fou())?;
    let conv = Convolver::new(&weights, &grid)?;

    let total = grid.total_steps();
    let sqrt_dt = dt.sqrt();
    let strike = call.strike();
    let rho = model.rho();
    let n_chunks = cfg.n_paths.div_ceil(MC_CHUNK);

    let partials: Vec<(f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * MC_CHUNK;
            let hi = ((c + 1) * MC_CHUNK).min(cfg.n_paths);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for path in lo..hi {
                let mut rng = path_rng(cfg.seed, path as u64);
                let mut dw = draw_normals(&mut rng, total, sqrt_dt);
                let mut db = draw_normals(&mut rng, n_steps, sqrt_dt);
                let mut payoff = terminal_payoff(
                    model, &conv, &dw, &db, x0, dt, rho, strike, hist, n_steps,
                );
                if cfg.antithetic {
                    for v in dw.iter_mut().chain(db.iter_mut()) {
                        *v = -*v;
                    }
                    let anti = terminal_payoff(
                        model, &conv, &dw, &db, x0, dt, rho, strike, hist, n_steps,
                    );
                    payoff = 0.5 * (payoff + anti);
                }
                sum += payoff;
                sum_sq += payoff * payoff;
            }
            (sum, sum_sq)
        })
        .collect();

    let (sum, sum_sq) = partials.iter().fold((0.0, 0.0), |(s, q), &(ps, pq)| (s + ps, q + pq));
    let n = cfg.n_paths as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

#[allow(clippy::too_many_arguments)]
fn terminal_payoff(
    model: &FsvModel,
    conv: &Convolver,
    dw: &[f64],
    db: &[f64],
    x0: f64,
    dt: f64,
    rho: f64,
    strike: f64,
    hist: usize,
    n_steps: usize,
) -> f64 {
    let z = conv.z_live(dw);
    let rho_bar = (1.0 - rho * rho).max(0.0).sqrt();
    let mut log_x = x0.ln();
    for i in 0..n_steps {
        let s = model.sigma_of(z[i]);
        let dws = rho * dw[hist + i] + rho_bar * db[i];
        log_x += s * dws - 0.5 * s * s * dt;
    }
    (log_x.exp() - strike).max(0.0)
}

#[derive(Serialize, Deserialize)]
struct ScenarioManifest {
    seed: u64,
    grid: PathGrid,
}

impl SimulatedScenario {
    /// Debug dump: JSON manifest comment, then
    /// `step,t,dW,dB,Z,sigma,X` with empty fields where a column is not
    /// defined (history nodes carry no factor/asset state; the last node has
    /// no outgoing increment).
    pub fn write_csv(&self, out: &mut impl IoWrite) -> std::io::Result<()> {
        let manifest = ScenarioManifest { seed: self.seed, grid: self.grid };
        writeln!(out, "# {}", serde_json::to_string(&manifest).expect("manifest serializes"))?;
        writeln!(out, "step,t,dW,dB,Z,sigma,X")?;
        let hist = self.grid.n_history;
        let total = self.grid.total_steps();
        for g in 0..=total {
            let t = self.grid.cell_time(g);
            let dw = if g < total { format!("{:.17e}", self.dw[g]) } else { String::new() };
            let db = if g >= hist && g < total {
                format!("{:.17e}", self.db[g - hist])
            } else {
                String::new()
            };
            let (z, s, x) = if g >= hist {
                let i = g - hist;
                (
                    format!("{:.17e}", self.z_path[i]),
                    format!("{:.17e}", self.sigma_path[i]),
                    format!("{:.17e}", self.x_path[i]),
                )
            } else {
                (String::new(), String::new(), String::new())
            };
            writeln!(out, "{g},{t:.17e},{dw},{db},{z},{s},{x}")?;
        }
        Ok(())
    }

    pub fn read_csv(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let manifest: ScenarioManifest = match lines.next() {
            Some((_, Ok(line))) if line.starts_with('#') => {
                serde_json::from_str(line.trim_start_matches('#').trim())
                    .map_err(|e| schema(format!("line 1: bad manifest: {e}")))?
            }
            _ => return Err(schema("line 1: expected '# {json manifest}'")),
        };
        match lines.next() {
            Some((_, Ok(line))) if line.trim() == "step,t,dW,dB,Z,sigma,X" => {}
            _ => return Err(schema("line 2: expected header step,t,dW,dB,Z,sigma,X")),
        }
        let grid = manifest.grid;
        let hist = grid.n_history;
        let total = grid.total_steps();
        let mut sc = SimulatedScenario {
            grid,
            seed: manifest.seed,
            dw: Vec::new(),
            db: Vec::new(),
            z_path: Vec::new(),
            sigma_path: Vec::new(),
            x_path: Vec::new(),
        };
        for (idx, line) in lines {
            let line = line.map_err(|e| schema(format!("line {}: {e}", idx + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(schema(format!(
                    "line {}: expected 7 fields, got {}",
                    idx + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str, name: &str| -> Result<f64> {
                s.parse().map_err(|e| {
                    schema(format!("line {}: bad {name} value {s:?}: {e}", idx + 1))
                })
            };
            let g: usize = fields[0]
                .parse()
                .map_err(|e| schema(format!("line {}: bad step: {e}", idx + 1)))?;
            if g < total {
                sc.dw.push(parse(fields[2], "dW")?);
            }
            if g >= hist && g < total {
                sc.db.push(parse(fields[3], "dB")?);
            }
            if g >= hist {
                sc.z_path.push(parse(fields[4], "Z")?);
                sc.sigma_path.push(parse(fields[5], "sigma")?);
                sc.x_path.push(parse(fields[6], "X")?);
            }
        }
        if sc.dw.len() != total || sc.z_path.len() != grid.n_steps + 1 {
            return Err(schema(format!(
                "row count inconsistent with grid: {} increments (need {total}), {} nodes (need {})",
                sc.dw.len(),
                sc.z_path.len(),
                grid.n_steps + 1
            )));
        }
        Ok(sc)
    }
}
