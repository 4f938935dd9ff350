//! Ground-truth switched-system simulator: polyhedral mode regions, affine
//! local dynamics, regressor construction, trajectory generation, and a
//! persistence-of-excitation check.

use serde::{Deserialize, Serialize};
use switchid_core::rng::SplitMix64;

use crate::{Error, Result};

/// Closed halfspace constraint `a . phi <= b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Halfspace {
    pub fn contains(&self, phi: &[f64]) -> bool {
        let dot: f64 = self.a.iter().zip(phi).map(|(a, p)| a * p).sum();
        dot <= self.b
    }
}

/// One affine local model together with the polyhedral region it is active
/// on. `theta` is stored as rows (m rows of length d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMode {
    pub theta: Vec<Vec<f64>>,
    pub region: Vec<Halfspace>,
}

impl AffineMode {
    pub fn contains(&self, phi: &[f64]) -> bool {
        self.region.iter().all(|h| h.contains(phi))
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        self.theta
            .iter()
            .map(|row| row.iter().zip(phi).map(|(a, p)| a * p).sum())
            .collect()
    }

    /// Parameters flattened row-major.
    pub fn theta_flat(&self) -> Vec<f64> {
        self.theta.iter().flatten().copied().collect()
    }
}

/// Scalar input signal generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSignal {
    /// `amplitude * cos(2*pi*frequency*t*dt)`.
    Sinusoid { amplitude: f64, frequency: f64 },
    UniformRandom { lo: f64, hi: f64 },
    /// Explicit values, cycled when the trajectory is longer than the list.
    Sequence { values: Vec<f64> },
}

impl InputSignal {
    pub fn value(&self, t: u64, dt: f64, rng: &mut SplitMix64) -> f64 {
        match self {
            InputSignal::Sinusoid { amplitude, frequency } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * t as f64 * dt).cos()
            }
            InputSignal::UniformRandom { lo, hi } => lo + (hi - lo) * rng.next_f64(),
            InputSignal::Sequence { values } => values[(t as usize) % values.len()],
        }
    }
}

/// Full description of a simulated switched system.
///
/// `dt` present means a state-space system: the feature vector is
/// `[x; u]` and the state chain is closed through the emitted output
/// (`x_{t+1} = psi_t`). `dt` absent means an input-output system whose
/// feature vector is a regressor of past outputs and inputs with a trailing
/// constant 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedSystemSpec {
    pub m: usize,
    pub d: usize,
    pub modes: Vec<AffineMode>,
    pub noise_std: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub input: InputSignal,
    #[serde(default)]
    pub n_a: usize,
    #[serde(default)]
    pub n_b: usize,
}

impl SwitchedSystemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("spec needs at least one mode".into()));
        }
        for (i, mode) in self.modes.iter().enumerate() {
            if mode.theta.len() != self.m || mode.theta.iter().any(|r| r.len() != self.d) {
                return Err(Error::Config(format!(
                    "mode {i}: theta must be {}x{}",
                    self.m, self.d
                )));
            }
            if !mode.theta_flat().iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("mode {i}: non-finite theta entry")));
            }
            if mode.region.is_empty() {
                return Err(Error::Config(format!("mode {i}: empty region")));
            }
            for h in &mode.region {
                if h.a.iter().all(|v| *v == 0.0) {
                    return Err(Error::Config(format!("mode {i}: zero halfspace normal")));
                }
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be nonnegative".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config("dt must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }
}

/// One observation of a generated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: u64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub true_mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Identifier of the RNG algorithm that produced noise and inputs.
    pub rng_algorithm: String,
    pub seed: u64,
}

/// Lowest mode index whose region contains `phi`; boundary points resolve
/// to the lowest index by construction.
pub fn active_mode(spec: &SwitchedSystemSpec, phi: &[f64]) -> Option<usize> {
    spec.modes.iter().position(|m| m.contains(phi))
}

/// One simulation step: output of the active mode plus Gaussian noise.
pub fn step(
    spec: &SwitchedSystemSpec,
    phi: &[f64],
    rng: &mut SplitMix64,
) -> Option<(Vec<f64>, usize)> {
    let mode = active_mode(spec, phi)?;
    let mut psi = spec.modes[mode].apply(phi);
    if spec.noise_std > 0.0 {
        for v in psi.iter_mut() {
            *v += spec.noise_std * rng.next_gaussian();
        }
    }
    Some((psi, mode))
}

/// Stack past outputs and current-plus-past inputs into a regressor:
/// `[y_{t-1} .. y_{t-n_a}, u_t, u_{t-1} .. u_{t-n_b}]`.
/// `y_past[0]` is `y_{t-1}`; `u_curr_past[0]` is `u_t`.
pub fn build_regressor(
    y_past: &[Vec<f64>],
    u_curr_past: &[Vec<f64>],
    n_a: usize,
    n_b: usize,
) -> Result<Vec<f64>> {
    if y_past.len() < n_a {
        return Err(Error::InvalidInput(format!(
            "regressor needs {n_a} past outputs, got {}",
            y_past.len()
        )));
    }
    if u_curr_past.len() < n_b + 1 {
        return Err(Error::InvalidInput(format!(
            "regressor needs {} inputs including current, got {}",
            n_b + 1,
            u_curr_past.len()
        )));
    }
    let mut phi = Vec::new();
    for y in &y_past[..n_a] {
        phi.extend_from_slice(y);
    }
    for u in &u_curr_past[..n_b + 1] {
        phi.extend_from_slice(u);
    }
    Ok(phi)
}

/// Simulate `n` steps. Deterministic in `(spec, n, seed, initial_state)`.
pub fn generate_trajectory(
    spec: &SwitchedSystemSpec,
    n: usize,
    seed: u64,
    initial_state: Option<&[f64]>,
) -> Result<Trajectory> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("trajectory length must be >= 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let dt = spec.dt.unwrap_or(1.0);
    let mut samples = Vec::with_capacity(n);

    if spec.dt.is_some() {
        // state-space: phi = [x; u], closed chain x_{t+1} = psi_t
        let mut x = match initial_state {
            Some(x0) => {
                if x0.len() != spec.m {
                    return Err(Error::InvalidInput(format!(
                        "initial state must have dimension {}",
                        spec.m
                    )));
                }
                x0.to_vec()
            }
            None => vec![0.0; spec.m],
        };
        for t in 0..n as u64 {
            let u = spec.input.value(t, dt, &mut rng);
            let mut phi = x.clone();
            phi.push(u);
            let (psi, true_mode) = step(spec, &phi, &mut rng).ok_or(Error::OutOfDomain { t })?;
            x = psi.clone();
            samples.push(Sample { t, phi, psi, true_mode });
        }
    } else {
        // input-output: regressor of emitted outputs and inputs, trailing 1
        let mut y_past: Vec<Vec<f64>> = Vec::new();
        let mut u_hist: Vec<Vec<f64>> = Vec::new();
        for t in 0..n as u64 {
            let u = spec.input.value(t, dt, &mut rng);
            u_hist.insert(0, vec![u]);
            // zero-pad history before t=0 so early regressors are defined
            while y_past.len() < spec.n_a {
                y_past.push(vec![0.0; spec.m]);
            }
            while u_hist.len() < spec.n_b + 1 {
                u_hist.push(vec![0.0]);
            }
            let mut phi = build_regressor(&y_past, &u_hist, spec.n_a, spec.n_b)?;
            phi.push(1.0);
            let (psi, true_mode) = step(spec, &phi, &mut rng).ok_or(Error::OutOfDomain { t })?;
            y_past.insert(0, psi.clone());
            y_past.truncate(spec.n_a.max(1));
            u_hist.truncate(spec.n_b + 1);
            samples.push(Sample { t, phi, psi, true_mode });
        }
    }
    Ok(Trajectory {
        samples,
        rng_algorithm: switchid_core::rng::ALGORITHM.to_string(),
        seed,
    })
}

/// Windowed persistence-of-excitation check: over every window of `window`
/// consecutive samples, form the Gram matrix `sum phi phi^T` and return the
/// minimum smallest eigenvalue and maximum largest eigenvalue across
/// windows. Excitation persists iff the first is positive and the second
/// finite.
pub fn pe_check(trajectory: &Trajectory, window: usize) -> Result<(f64, f64)> {
    if window < 1 || trajectory.samples.len() <= window {
        return Err(Error::InvalidInput(format!(
            "pe_check needs 1 <= window < len, got window={window} len={}",
            trajectory.samples.len()
        )));
    }
    let d = trajectory.samples[0].phi.len();
    let mut alpha_min = f64::INFINITY;
    let mut beta_max = f64::NEG_INFINITY;
    for start in 0..=(trajectory.samples.len() - window) {
        let mut gram = nalgebra::DMatrix::<f64>::zeros(d, d);
        for s in &trajectory.samples[start..start + window] {
            for i in 0..d {
                for j in 0..d {
                    gram[(i, j)] += s.phi[i] * s.phi[j];
                }
            }
        }
        let eigs = gram.symmetric_eigenvalues();
        let lo = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        alpha_min = alpha_min.min(lo.max(0.0));
        beta_max = beta_max.max(hi);
    }
    Ok((alpha_min, beta_max))
}

/// Built-in preset systems; `None` for unknown names.
pub fn preset(name: &str) -> Option<SwitchedSystemSpec> {
    match name {
        "exp1" => Some(exp1_spec()),
        "exp2" => Some(exp2_spec()),
        _ => None,
    }
}

/// Scalar piecewise-affine input-output system: y = theta^T [r, 1] with
/// three regions of r in [-4, 4] and two distinct parameter vectors.
pub fn exp1_spec() -> SwitchedSystemSpec {
    let interval = |lo: f64, hi: f64| {
        vec![
            Halfspace { a: vec![1.0, 0.0], b: hi },
            Halfspace { a: vec![-1.0, 0.0], b: -lo },
        ]
    };
    SwitchedSystemSpec {
        m: 1,
        d: 2,
        modes: vec![
            AffineMode { theta: vec![vec![1.0, 2.0]], region: interval(-4.0, -1.0) },
            AffineMode { theta: vec![vec![-1.0, 0.0]], region: interval(-1.0, 2.0) },
            AffineMode { theta: vec![vec![1.0, 2.0]], region: interval(2.0, 4.0) },
        ],
        noise_std: 0.2,
        dt: None,
        input: InputSignal::UniformRandom { lo: -4.0, hi: 4.0 },
        n_a: 0,
        n_b: 0,
    }
}

/// Planar state-space system, dt = 0.01: a driven double integrator when
/// |u| > 1 and a velocity-damping autonomous system when |u| <= 1, driven
/// by u = 2 cos(2 pi t dt). Noise variance 0.1 (std sqrt(0.1)).
pub fn exp2_spec() -> SwitchedSystemSpec {
    let dt = 0.01;
    let driven = vec![vec![1.0, dt, 0.0], vec![0.0, 1.0, dt]];
    let damped = vec![vec![1.0, dt, 0.0], vec![0.0, 1.0 - dt, 0.0]];
    SwitchedSystemSpec {
        m: 2,
        d: 3,
        modes: vec![
            AffineMode {
                theta: driven.clone(),
                region: vec![Halfspace { a: vec![0.0, 0.0, 1.0], b: -1.0 }],
            },
            AffineMode {
                theta: damped,
                region: vec![
                    Halfspace { a: vec![0.0, 0.0, 1.0], b: 1.0 },
                    Halfspace { a: vec![0.0, 0.0, -1.0], b: 1.0 },
                ],
            },
            AffineMode {
                theta: driven,
                region: vec![Halfspace { a: vec![0.0, 0.0, -1.0], b: -1.0 }],
            },
        ],
        noise_std: 0.1f64.sqrt(),
        dt: Some(dt),
        input: InputSignal::Sinusoid { amplitude: 2.0, frequency: 1.0 },
        n_a: 0,
        n_b: 0,
    }
}
