//! Trajectory generators for the pendulum, the scaled Lorenz system and a
//! pair of noisy damped oscillators.
//!
//! Randomness comes from `ChaCha8Rng` seeded with the run seed. Each noise
//! source draws from its own stream of that generator so that switching one
//! source off never shifts the draws of another:
//!
//! | stream | use                              |
//! |--------|----------------------------------|
//! | 0      | initial conditions               |
//! | 1      | dynamics (thermal) noise         |
//! | 2      | measurement noise                |

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STREAM_INIT: u64 = 0;
pub const STREAM_DYNAMICS: u64 = 1;
pub const STREAM_MEASUREMENT: u64 = 2;

pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Time-stamped state sequence sampled at a fixed step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    pub seed: u64,
    pub system_tag: String,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, dt: f64, seed: u64, tag: impl Into<String>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Shape(format!(
                "trajectory needs at least 2 states, got {}",
                states.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        let d = states[0].len();
        if states.iter().any(|s| s.len() != d) {
            return Err(Error::Shape("ragged trajectory states".into()));
        }
        if states.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("trajectory states"));
        }
        Ok(Self {
            states,
            dt,
            seed,
            system_tag: tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// One coordinate as a time series.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[j]).collect()
    }

    /// Writes `t,s0,s1,...` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for j in 0..self.dim() {
            write!(w, ",s{j}")?;
        }
        writeln!(w)?;
        for (k, s) in self.states.iter().enumerate() {
            write!(w, "{}", fmt17(k as f64 * self.dt))?;
            for x in s {
                write!(w, ",{}", fmt17(*x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Lossless text form of an `f64` (17 significant digits).
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConfig {
    pub g: f64,
    pub l: f64,
    pub dt: f64,
    /// Number of Euler steps; the trajectory holds `steps + 1` states.
    pub steps: usize,
    pub theta0_range: [f64; 2],
    pub omega0_range: [f64; 2],
    /// Overrides the random initial state when set.
    pub initial_state: Option<[f64; 2]>,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            g: 9.8,
            l: 1.0,
            dt: 0.2,
            steps: 1500,
            theta0_range: [0.0, 2.0 * PI],
            omega0_range: [-5.0, 5.0],
            initial_state: None,
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.steps < 2 {
            return Err(Error::param("steps", "must be at least 2"));
        }
        if !(self.l > 0.0) {
            return Err(Error::param("l", "must be positive"));
        }
        if self.theta0_range[0] > self.theta0_range[1] || self.omega0_range[0] > self.omega0_range[1] {
            return Err(Error::param("theta0_range/omega0_range", "empty range"));
        }
        Ok(())
    }

    /// Coefficient `3g/2l` of the angular acceleration.
    pub fn stiffness(&self) -> f64 {
        3.0 * self.g / (2.0 * self.l)
    }

    /// Mechanical energy shifted to be non-negative.
    pub fn energy(&self, state: &[f64]) -> f64 {
        0.5 * state[1] * state[1] + self.stiffness() * (1.0 - state[0].cos())
    }
}

/// One explicit Euler step with both updates using the state at step `k`.
pub fn pendulum_euler_step(cfg: &PendulumConfig, state: [f64; 2]) -> [f64; 2] {
    let [theta, omega] = state;
    [
        theta + cfg.dt * omega,
        omega - cfg.dt * cfg.stiffness() * theta.sin(),
    ]
}

pub fn simulate_pendulum(cfg: &PendulumConfig, seed: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let init = match cfg.initial_state {
        Some(s) => s,
        None => {
            let mut rng = rng_stream(seed, STREAM_INIT);
            let theta = uniform(&mut rng, cfg.theta0_range);
            let omega = uniform(&mut rng, cfg.omega0_range);
            [theta, omega]
        }
    };
    let mut states = Vec::with_capacity(cfg.steps + 1);
    let mut s = init;
    states.push(s.to_vec());
    for _ in 0..cfg.steps {
        s = pendulum_euler_step(cfg, s);
        states.push(s.to_vec());
    }
    Trajectory::new(states, cfg.dt, seed, "pendulum")
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LorenzConfig {
    pub sigma: f64,
    pub beta: f64,
    pub rho: f64,
    /// Scaling of the nonlinear coupling terms.
    pub s: f64,
    pub dt: f64,
    pub steps: usize,
    /// Steps integrated and discarded before recording.
    pub transient: usize,
    pub initial_state: [f64; 3],
}

impl Default for LorenzConfig {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            beta: 8.0 / 3.0,
            rho: 40.0,
            s: 0.1,
            dt: 0.05,
            steps: 4000,
            transient: 500,
            initial_state: [1.0, 1.0, 1.0],
        }
    }
}

impl LorenzConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.steps < 1 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn vector_field(&self, x: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (x[1] - x[0]),
            x[0] * (self.rho - self.s * x[2]) - x[1],
            self.s * x[0] * x[1] - self.beta * x[2],
        ]
    }

    /// Classical fourth-order Runge–Kutta step of length `dt`.
    pub fn rk4_step(&self, x: [f64; 3], dt: f64) -> [f64; 3] {
        let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
        let k1 = self.vector_field(x);
        let k2 = self.vector_field(add(x, k1, dt / 2.0));
        let k3 = self.vector_field(add(x, k2, dt / 2.0));
        let k4 = self.vector_field(add(x, k3, dt));
        let mut out = x;
        for i in 0..3 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Time-`dt` flow map.
    pub fn flow(&self, x: [f64; 3]) -> [f64; 3] {
        self.rk4_step(x, self.dt)
    }
}

const DIVERGENCE_NORM: f64 = 1e8;

/// Integrates the scaled Lorenz system from `init`, discarding
/// `cfg.transient` steps and then recording `cfg.steps + 1` states.
///
/// The dynamics are deterministic; `seed` is only recorded.
pub fn simulate_lorenz(cfg: &LorenzConfig, init: &[f64], seed: u64) -> Result<Trajectory> {
    cfg.validate()?;
    if init.len() != 3 {
        return Err(Error::Shape(format!("Lorenz state has dimension 3, got {}", init.len())));
    }
    let mut x = [init[0], init[1], init[2]];
    let check = |x: &[f64; 3], step: usize| -> Result<()> {
        let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            Err(Error::Divergence { step, norm })
        } else {
            Ok(())
        }
    };
    for step in 0..cfg.transient {
        x = cfg.flow(x);
        check(&x, step)?;
    }
    let mut states = Vec::with_capacity(cfg.steps + 1);
    states.push(x.to_vec());
    for step in 0..cfg.steps {
        x = cfg.flow(x);
        check(&x, cfg.transient + step)?;
        states.push(x.to_vec());
    }
    Trajectory::new(states, cfg.dt, seed, "lorenz")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OscillatorConfig {
    pub omega1: f64,
    pub omega2: f64,
    pub zeta: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub meas_noise_std: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Euler–Maruyama substeps per output sample.
    pub substeps: usize,
    pub x0: [f64; 2],
    pub v0: [f64; 2],
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            omega1: 3.0 * PI / 5.0,
            omega2: 6.0 * PI / 5.0,
            zeta: 0.2,
            sigma1: 0.05,
            sigma2: 0.15,
            meas_noise_std: 0.015,
            dt: 0.1,
            t_end: 190.0,
            substeps: 100,
            x0: [1.0, 1.0],
            v0: [0.0, 0.0],
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::param("zeta", "must lie in (0, 1)"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        if self.sample_count() < 2 {
            return Err(Error::param("t_end", "yields fewer than 2 samples"));
        }
        if self.sigma1 < 0.0 || self.sigma2 < 0.0 || self.meas_noise_std < 0.0 {
            return Err(Error::param("noise", "standard deviations must be non-negative"));
        }
        Ok(())
    }

    /// `L = t_end / dt`.
    pub fn sample_count(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Damped angular frequency `ω_i·√(1 − ζ²)`.
    pub fn damped_frequency(&self, mode: usize) -> f64 {
        let w = if mode == 0 { self.omega1 } else { self.omega2 };
        w * (1.0 - self.zeta * self.zeta).sqrt()
    }

    /// Phase advanced per sample, `ω_i·√(1 − ζ²)·Δt`.
    pub fn discrete_phase(&self, mode: usize) -> f64 {
        self.damped_frequency(mode) * self.dt
    }
}

/// Output of [`simulate_oscillators`].
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorRun {
    /// Observed scalar `x_1 + x_2 + ξ`.
    pub signal: Trajectory,
    /// Internal states `(x_1, ẋ_1, x_2, ẋ_2)`.
    pub internal: Trajectory,
}

impl OscillatorRun {
    pub fn observation(&self) -> Vec<f64> {
        self.signal.component(0)
    }

    /// Ground-truth displacement of mode `i` (0 or 1).
    pub fn mode(&self, i: usize) -> Vec<f64> {
        self.internal.component(2 * i)
    }
}

/// Euler–Maruyama integration of two independent damped oscillators driven
/// by white noise, observed through their sum plus Gaussian measurement noise.
pub fn simulate_oscillators(cfg: &OscillatorConfig, seed: u64) -> Result<OscillatorRun> {
    cfg.validate()?;
    let len = cfg.sample_count();
    let h = cfg.dt / cfg.substeps as f64;
    let sqrt_h = h.sqrt();
    let mut dyn_rng = rng_stream(seed, STREAM_DYNAMICS);
    let mut meas_rng = rng_stream(seed, STREAM_MEASUREMENT);
    let omegas = [cfg.omega1, cfg.omega2];
    let sigmas = [cfg.sigma1, cfg.sigma2];
    let mut x = cfg.x0;
    let mut v = cfg.v0;

    let mut internal = Vec::with_capacity(len);
    let mut observed = Vec::with_capacity(len);
    for _ in 0..len {
        internal.push(vec![x[0], v[0], x[1], v[1]]);
        let xi: f64 = meas_rng.sample(StandardNormal);
        observed.push(vec![x[0] + x[1] + cfg.meas_noise_std * xi]);
        for _ in 0..cfg.substeps {
            let eta: [f64; 2] = [dyn_rng.sample(StandardNormal), dyn_rng.sample(StandardNormal)];
            for i in 0..2 {
                let w = omegas[i];
                let acc = -2.0 * cfg.zeta * w * v[i] - w * w * x[i];
                let xn = x[i] + h * v[i];
                let vn = v[i] + h * acc + sigmas[i] * sqrt_h * eta[i];
                x[i] = xn;
                v[i] = vn;
            }
        }
    }
    Ok(OscillatorRun {
        signal: Trajectory::new(observed, cfg.dt, seed, "oscillators")?,
        internal: Trajectory::new(internal, cfg.dt, seed, "oscillators-internal")?,
    })
}

/// Linear map `x ↦ B·x` with known Koopman spectrum, used by tests.
pub fn simulate_linear(b: &[Vec<f64>], init: &[f64], steps: usize, dt: f64) -> Result<Trajectory> {
    let d = init.len();
    if b.len() != d || b.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("linear map must be square and match the state".into()));
    }
    let mut states = vec![init.to_vec()];
    for _ in 0..steps {
        let x = states.last().unwrap();
        let y: Vec<f64> = b.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
        states.push(y);
    }
    Trajectory::new(states, dt, 0, "linear")
}
