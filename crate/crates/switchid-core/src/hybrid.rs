//! Two-timescale orchestration of the full identification loop.
//!
//! Each observation is routed to (a) one fast SGD update of the local model
//! owned by the winning prototype cell, and (b) one slow annealing update of
//! all codevectors. Between temperature levels the codevector set is split
//! by perturbation pairs and re-merged, and converged candidate parameter
//! vectors that are far from every confirmed mode are promoted to new modes.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::localid::{LocalModel, StepSchedule};
use crate::oda::{self, Codevector, ThetaRef, UpdateOrder};
use crate::rng::SplitMix64;
use crate::{Divergence, Error, Result};

/// Map a candidate parameter vector to the closest confirmed mode; ties
/// break to the lowest index.
pub fn theta_rule(candidate: &LocalModel, modes: &[LocalModel], div: Divergence) -> Result<usize> {
    if modes.is_empty() {
        return Err(Error::InvalidInput("theta_rule: empty mode set"));
    }
    let cv = candidate.to_vec();
    let mut best = 0;
    let mut best_d = div.eval(&cv, &modes[0].to_vec())?;
    for (i, m) in modes.iter().enumerate().skip(1) {
        let d = div.eval(&cv, &m.to_vec())?;
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    Ok(best)
}

/// True iff the candidate is farther than `eps_s` from every confirmed mode,
/// in which case the caller appends it to the mode set.
pub fn mode_insert_check(
    candidate: &LocalModel,
    modes: &[LocalModel],
    eps_s: f64,
    div: Divergence,
) -> Result<bool> {
    if !(eps_s > 0.0) {
        return Err(Error::InvalidInput("mode_insert_check: eps_s must be positive"));
    }
    let cv = candidate.to_vec();
    for m in modes {
        if div.eval(&cv, &m.to_vec())? <= eps_s {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Tunables of the identifier. `None` thresholds are resolved at runtime
/// from the running estimate of the data radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifierConfig {
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// Geometric cooling factor, temperature is multiplied by it per level.
    pub gamma: f64,
    /// Codevector merge threshold; default 0.01 * radius^2.
    pub eps_n: Option<f64>,
    /// Mode insertion threshold in parameter space; default 0.5, switching
    /// to 0.25 * median pairwise mode divergence once two modes exist.
    pub eps_s: Option<f64>,
    /// Perturbation magnitude; default 0.01 * radius.
    pub delta: Option<f64>,
    pub k_max: usize,
    /// Fast (local model) stepsize schedule.
    pub alpha: StepSchedule,
    /// Slow (codevector) stepsize schedule.
    pub beta: StepSchedule,
    /// Per-level convergence tolerance on prototype displacement;
    /// default 1e-4 * radius.
    pub tol_conv: Option<f64>,
    pub max_iters_per_level: usize,
    pub update_order: UpdateOrder,
    /// Apply the slow update only every n-th sample, holding codevectors
    /// constant in between. 1 = every sample.
    pub slow_every: u64,
    /// Restart the fast stepsize counter at this value at the start of every
    /// temperature level (including the first). `None` keeps one global
    /// counter for the whole run. A restart keeps the fast stepsize from
    /// decaying to nothing in late levels, where freshly split cells still
    /// have real parameter distance to cover; an offset greater than zero
    /// starts each level below the stepsizes that amplify the prediction
    /// error on large regressors.
    pub reset_alpha_to: Option<u64>,
    /// Restart the slow stepsize counter at each temperature level. On by
    /// default so codevectors stay mobile when a new level begins; the
    /// per-level convergence test keys off the resulting displacement decay.
    pub reset_beta_per_level: bool,
    pub seed: u64,
    /// Initial local-model parameters, row-major m x d; zeros when absent.
    pub init_theta: Option<Vec<f64>>,
    /// Extra iterations granted to the first (unsplit) temperature level on
    /// top of `max_iters_per_level`, letting the single local model work
    /// through the large-stepsize transient before the first bifurcation so
    /// that split candidates inherit settled parameters.
    #[serde(default)]
    pub warmup_iters: usize,
}

impl Default for IdentifierConfig {
    fn default() -> Self {
        Self {
            lambda_max: 0.99,
            lambda_min: 0.2,
            gamma: 0.8,
            eps_n: None,
            eps_s: None,
            delta: None,
            k_max: 16,
            alpha: StepSchedule::Harmonic { c: 0.01 },
            beta: StepSchedule::HarmonicLog { c: 0.9 },
            tol_conv: None,
            max_iters_per_level: 900,
            update_order: UpdateOrder::Synchronous,
            slow_every: 1,
            reset_alpha_to: None,
            reset_beta_per_level: true,
            seed: 0,
            init_theta: None,
            warmup_iters: 0,
        }
    }
}

impl IdentifierConfig {
    /// Validate ranges and the two-timescale ordering beta/alpha -> 0,
    /// checked on a grid of t.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_max && self.lambda_max < 1.0) {
            return Err(Error::Config("need 0 < lambda_min < lambda_max < 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("need 0 < gamma < 1"));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1"));
        }
        if self.max_iters_per_level == 0 {
            return Err(Error::Config("max_iters_per_level must be at least 1"));
        }
        if self.slow_every == 0 {
            return Err(Error::Config("slow_every must be at least 1"));
        }
        for opt in [self.eps_n, self.eps_s, self.delta, self.tol_conv] {
            if let Some(v) = opt {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Config("thresholds must be finite and nonnegative"));
                }
            }
        }
        if let Some(e) = self.eps_s {
            if !(e > 0.0) {
                return Err(Error::Config("eps_s must be positive"));
            }
        }
        // two-timescale ordering: the slow/fast stepsize ratio must be
        // nonincreasing and vanish along the schedule
        let grid: [u64; 7] = [1, 10, 100, 1_000, 10_000, 100_000, 1_000_000];
        let ratio = |t: u64| self.beta.value(t) / self.alpha.value(t);
        let mut prev = f64::INFINITY;
        for &t in &grid {
            let r = ratio(t);
            if r > prev + 1e-12 {
                return Err(Error::Config("beta/alpha ratio must be nonincreasing"));
            }
            prev = r;
        }
        if ratio(1_000_000) > 0.01 * ratio(1) {
            return Err(Error::Config("beta/alpha must vanish (two-timescale ordering)"));
        }
        Ok(())
    }
}

/// Per-sample log record, including a flattened state snapshot for CSV logs
/// and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Global sample counter (across all levels).
    pub t: u64,
    pub lambda: f64,
    pub k: usize,
    pub s_hat: usize,
    pub winner: usize,
    /// Prediction error norm of the fast update on the winner's model.
    pub err_norm: f64,
    /// Largest prototype displacement of the slow update.
    pub max_shift: f64,
    /// Confirmed mode parameters, row-major, one entry per mode.
    pub thetas: Vec<Vec<f64>>,
    /// Codevector locations.
    pub phi_hats: Vec<Vec<f64>>,
}

/// Outcome of one temperature level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSummary {
    /// Temperature the level ran at.
    pub lambda: f64,
    pub k: usize,
    pub s_hat: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// One Voronoi cell of the estimated model: a prototype location and the
/// confirmed mode it maps to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub phi_hat: Vec<f64>,
    pub mode: usize,
}

/// Output of the identifier: confirmed mode parameters and the
/// prototype-induced partition with its cell-to-mode assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedHybridModel {
    pub modes: Vec<LocalModel>,
    pub cells: Vec<Cell>,
    pub divergence: Divergence,
}

impl EstimatedHybridModel {
    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Winning cell index for a feature vector.
    pub fn cell_of(&self, phi: &[f64]) -> Result<usize> {
        let protos: Vec<Vec<f64>> = self.cells.iter().map(|c| c.phi_hat.clone()).collect();
        self.divergence.nearest(phi, &protos)
    }

    /// Mode selected by the winning cell.
    pub fn mode_of(&self, phi: &[f64]) -> Result<usize> {
        Ok(self.cells[self.cell_of(phi)?].mode)
    }

    /// Hard-switching prediction: the winning cell's mode model.
    pub fn predict_hard(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.modes[self.mode_of(phi)?].predict(phi)
    }

    /// Gibbs-weighted mixture of the per-cell mode predictions (uniform
    /// priors over cells), smoothing the jump at cell boundaries.
    pub fn predict_smooth(&self, phi: &[f64], lambda_eval: f64) -> Result<Vec<f64>> {
        if !(lambda_eval > 0.0 && lambda_eval < 1.0) {
            return Err(Error::InvalidInput("predict_smooth: lambda_eval in (0,1)"));
        }
        let coef = (1.0 - lambda_eval) / lambda_eval;
        let dists: Vec<f64> = self
            .cells
            .iter()
            .map(|c| self.divergence.eval(phi, &c.phi_hat))
            .collect::<Result<_>>()?;
        let shift = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = dists.iter().map(|d| libm::exp(-coef * (d - shift))).collect();
        let total: f64 = weights.iter().sum();
        let m = self.modes[0].output_dim();
        let mut out = vec![0.0; m];
        for (cell, w) in self.cells.iter().zip(weights.iter()) {
            let pred = self.modes[cell.mode].predict(phi)?;
            for (o, p) in out.iter_mut().zip(pred.iter()) {
                *o += (w / total) * p;
            }
        }
        Ok(out)
    }
}

/// Streaming two-timescale identifier state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Identifier {
    config: IdentifierConfig,
    divergence: Divergence,
    lambda: f64,
    /// Fast/slow schedule counters; reset at the start of each level.
    t_fast: u64,
    t_slow: u64,
    /// Samples seen since the start of the current level (drives the
    /// slow-update subsequencing).
    level_samples: u64,
    /// Samples seen over the whole run.
    total_samples: u64,
    codevectors: Vec<Codevector>,
    mode_set: Vec<LocalModel>,
    candidates: Vec<LocalModel>,
    rng: SplitMix64,
    bbox_min: Vec<f64>,
    bbox_max: Vec<f64>,
    dims: Option<(usize, usize)>,
    levels_run: u64,
}

impl Identifier {
    pub fn new(config: IdentifierConfig) -> Result<Self> {
        config.validate()?;
        let lambda = config.lambda_max;
        let rng = SplitMix64::new(config.seed);
        Ok(Self {
            config,
            divergence: Divergence::SquaredEuclidean,
            lambda,
            t_fast: 0,
            t_slow: 0,
            level_samples: 0,
            total_samples: 0,
            codevectors: Vec::new(),
            mode_set: Vec::new(),
            candidates: Vec::new(),
            rng,
            bbox_min: Vec::new(),
            bbox_max: Vec::new(),
            dims: None,
            levels_run: 0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn codevectors(&self) -> &[Codevector] {
        &self.codevectors
    }

    pub fn mode_set(&self) -> &[LocalModel] {
        &self.mode_set
    }

    pub fn num_codevectors(&self) -> usize {
        self.codevectors.len()
    }

    pub fn num_modes(&self) -> usize {
        self.mode_set.len()
    }

    pub fn total_samples(&self) -> u64 {
        self.total_samples
    }

    pub fn config(&self) -> &IdentifierConfig {
        &self.config
    }

    /// Half-diagonal of the observed feature bounding box.
    pub fn data_radius(&self) -> f64 {
        if self.bbox_min.is_empty() {
            return 0.0;
        }
        0.5 * libm::sqrt(
            self.bbox_min
                .iter()
                .zip(self.bbox_max.iter())
                .map(|(lo, hi)| (hi - lo) * (hi - lo))
                .sum(),
        )
    }

    /// Distance of each prototype to the association-weighted batch centroid
    /// of a dataset: the fixed-point residual of the quantizer at temperature
    /// `lambda`. Near zero once a temperature level has converged (pass the
    /// level's own lambda; the identifier has already cooled past it).
    pub fn batch_centroid_residuals(
        &self,
        data: &[(Vec<f64>, Vec<f64>)],
        lambda: f64,
    ) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::InvalidInput("batch_centroid_residuals: empty dataset"));
        }
        let k = self.codevectors.len();
        let mut weight = vec![0.0f64; k];
        let mut weighted: Vec<Vec<f64>> =
            self.codevectors.iter().map(|cv| vec![0.0; cv.phi_hat.len()]).collect();
        let mode_set = &self.mode_set;
        let candidates = &self.candidates;
        for (phi, psi) in data {
            let mut x = psi.clone();
            x.extend_from_slice(phi);
            let probs = oda::gibbs_probs(
                &self.codevectors,
                &x,
                phi,
                |t: &ThetaRef| match t {
                    ThetaRef::Mode(i) => &mode_set[*i],
                    ThetaRef::Candidate(c) => &candidates[*c],
                },
                lambda,
                self.divergence,
            )?;
            for (i, &p) in probs.iter().enumerate() {
                weight[i] += p;
                for (acc, f) in weighted[i].iter_mut().zip(phi.iter()) {
                    *acc += p * f;
                }
            }
        }
        let mut residuals = Vec::with_capacity(k);
        for (i, cv) in self.codevectors.iter().enumerate() {
            if weight[i] <= 0.0 {
                residuals.push(0.0);
                continue;
            }
            let r = cv
                .phi_hat
                .iter()
                .zip(weighted[i].iter())
                .map(|(p, w)| {
                    let c = w / weight[i];
                    (p - c) * (p - c)
                })
                .sum::<f64>();
            residuals.push(libm::sqrt(r));
        }
        Ok(residuals)
    }

    fn effective_delta(&self) -> f64 {
        self.config.delta.unwrap_or(0.01 * self.data_radius().max(1e-6))
    }

    fn effective_eps_n(&self) -> f64 {
        let r = self.data_radius().max(1e-6);
        self.config.eps_n.unwrap_or(0.01 * r * r)
    }

    fn effective_tol_conv(&self) -> f64 {
        self.config.tol_conv.unwrap_or(1e-4 * self.data_radius().max(1e-6))
    }

    fn effective_eps_s(&self) -> Result<f64> {
        if let Some(e) = self.config.eps_s {
            return Ok(e);
        }
        if self.mode_set.len() >= 2 {
            let mut dists = Vec::new();
            for i in 0..self.mode_set.len() {
                for j in (i + 1)..self.mode_set.len() {
                    dists.push(
                        self.divergence
                            .eval(&self.mode_set[i].to_vec(), &self.mode_set[j].to_vec())?,
                    );
                }
            }
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
            let median = dists[dists.len() / 2];
            if median > 0.0 {
                return Ok(0.25 * median);
            }
        }
        Ok(0.5)
    }

    fn model_of(&self, theta: &ThetaRef) -> &LocalModel {
        match theta {
            ThetaRef::Mode(i) => &self.mode_set[*i],
            ThetaRef::Candidate(c) => &self.candidates[*c],
        }
    }

    fn init_first_sample(&mut self, phi: &[f64], psi: &[f64]) -> Result<()> {
        let (m, d) = (psi.len(), phi.len());
        if m == 0 || d == 0 {
            return Err(Error::InvalidInput("empty observation"));
        }
        let theta0 = match &self.config.init_theta {
            Some(rows) => LocalModel::from_rows(m, d, rows.clone())?,
            None => LocalModel::zeros(m, d),
        };
        self.mode_set.push(theta0);
        self.codevectors.push(Codevector::initial(phi, ThetaRef::Mode(0)));
        self.bbox_min = phi.to_vec();
        self.bbox_max = phi.to_vec();
        self.dims = Some((m, d));
        Ok(())
    }

    /// Route one observation through both timescales.
    pub fn process_sample(&mut self, phi: &[f64], psi: &[f64]) -> Result<SampleRecord> {
        if !phi.iter().chain(psi.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation"));
        }
        if self.dims.is_none() {
            self.init_first_sample(phi, psi)?;
        }
        let (m, d) = self.dims.unwrap();
        if phi.len() != d || psi.len() != m {
            return Err(Error::DimensionMismatch {
                expected: d + m,
                got: phi.len() + psi.len(),
            });
        }
        for ((lo, hi), v) in self.bbox_min.iter_mut().zip(self.bbox_max.iter_mut()).zip(phi) {
            *lo = lo.min(*v);
            *hi = hi.max(*v);
        }

        // fast timescale: update the winner cell's parameter vector
        let locations: Vec<Vec<f64>> = self.codevectors.iter().map(|c| c.phi_hat.clone()).collect();
        let winner = self.divergence.nearest(phi, &locations)?;
        let alpha = self.config.alpha.value(self.t_fast);
        let err_norm = match self.codevectors[winner].theta {
            ThetaRef::Mode(i) => self.mode_set[i].sgd_update(phi, psi, alpha)?,
            ThetaRef::Candidate(c) => self.candidates[c].sgd_update(phi, psi, alpha)?,
        };

        // slow timescale: annealing update of all codevectors
        let mut max_shift = 0.0;
        if self.level_samples % self.config.slow_every == 0 {
            let mut x = psi.to_vec();
            x.extend_from_slice(phi);
            let beta = self.config.beta.value(self.t_slow);
            let mode_set = &self.mode_set;
            let candidates = &self.candidates;
            let (_, shift) = oda::oda_update(
                &mut self.codevectors,
                &x,
                phi,
                |t: &ThetaRef| match t {
                    ThetaRef::Mode(i) => &mode_set[*i],
                    ThetaRef::Candidate(c) => &candidates[*c],
                },
                self.lambda,
                beta,
                self.divergence,
                self.config.update_order,
            )?;
            max_shift = shift;
            self.t_slow += 1;
        }

        self.t_fast += 1;
        self.level_samples += 1;
        self.total_samples += 1;
        Ok(SampleRecord {
            t: self.total_samples - 1,
            lambda: self.lambda,
            k: self.codevectors.len(),
            s_hat: self.mode_set.len(),
            winner,
            err_norm,
            max_shift,
            thetas: self.mode_set.iter().map(|m| m.rows().to_vec()).collect(),
            phi_hats: self.codevectors.iter().map(|c| c.phi_hat.clone()).collect(),
        })
    }

    fn resolve_to_mode(&self, theta: &ThetaRef) -> usize {
        match theta {
            ThetaRef::Mode(i) => *i,
            ThetaRef::Candidate(c) => {
                theta_rule(&self.candidates[*c], &self.mode_set, self.divergence).unwrap_or(0)
            }
        }
    }

    /// Run one temperature level: split, iterate to convergence, merge,
    /// promote or re-point candidates, cool down.
    ///
    /// `on_sample` receives every per-sample record (for CSV logging).
    pub fn run_level<I, F>(&mut self, source: &mut I, mut on_sample: F) -> Result<LevelSummary>
    where
        I: Iterator<Item = (Vec<f64>, Vec<f64>)>,
        F: FnMut(&SampleRecord),
    {
        if self.lambda <= self.config.lambda_min {
            return Err(Error::InvalidInput(
                "temperature at minimum: finalize is the only legal next call",
            ));
        }
        let level_lambda = self.lambda;

        // schedule counters optionally restart with the level
        if let Some(t0) = self.config.reset_alpha_to {
            self.t_fast = t0;
        }

        if self.dims.is_none() {
            match source.next() {
                Some((phi, psi)) => {
                    let rec = self.process_sample(&phi, &psi)?;
                    on_sample(&rec);
                }
                None => return Err(Error::InvalidInput("empty observation source")),
            }
        }

        // bifurcation probes: each prototype becomes a perturbation pair,
        // one child of each pair carries a freshly cloned parameter vector.
        // The very first level runs unsplit: annealing starts from a single
        // codevector whose cell covers the whole domain.
        if self.levels_run > 0 {
            let delta = self.effective_delta();
            let fresh =
                oda::perturb_split(&mut self.codevectors, delta, &mut self.rng, self.config.k_max);
            for idx in fresh {
                let parent_model = self.model_of(&self.codevectors[idx].theta).clone();
                self.candidates.push(parent_model);
                self.codevectors[idx].theta = ThetaRef::Candidate(self.candidates.len() - 1);
            }
        }

        if self.config.reset_beta_per_level && self.levels_run > 0 {
            // restart at 1, not 0: a full-step (beta = 1) overwrite with a
            // localized Gibbs weight would wipe out the mass of every cell
            // far from whichever sample happens to arrive first
            self.t_slow = 1;
        }
        self.level_samples = 0;

        let tol = self.effective_tol_conv();
        let budget = if self.levels_run == 0 {
            self.config.max_iters_per_level + self.config.warmup_iters
        } else {
            self.config.max_iters_per_level
        };
        let mut iterations = 0;
        let mut converged = false;
        while iterations < budget {
            let Some((phi, psi)) = source.next() else {
                break;
            };
            let rec = self.process_sample(&phi, &psi)?;
            on_sample(&rec);
            iterations += 1;
            if rec.max_shift > 0.0 && rec.max_shift < tol {
                converged = true;
                break;
            }
        }

        let eps_n = self.effective_eps_n();
        {
            let mode_set = &self.mode_set;
            let candidates = &self.candidates;
            let div = self.divergence;
            oda::merge(&mut self.codevectors, self.lambda, eps_n, div, |t| match t {
                ThetaRef::Mode(i) => *i,
                ThetaRef::Candidate(c) => {
                    theta_rule(&candidates[*c], mode_set, div).unwrap_or(0)
                }
            })?;
        }

        // end-of-level candidate resolution: far-from-everything candidates
        // become new confirmed modes, the rest re-point to the nearest mode
        let eps_s = self.effective_eps_s()?;
        for i in 0..self.codevectors.len() {
            if let ThetaRef::Candidate(c) = self.codevectors[i].theta {
                let model = self.candidates[c].clone();
                if mode_insert_check(&model, &self.mode_set, eps_s, self.divergence)? {
                    self.mode_set.push(model);
                    self.codevectors[i].theta = ThetaRef::Mode(self.mode_set.len() - 1);
                } else {
                    let target = theta_rule(&model, &self.mode_set, self.divergence)?;
                    self.codevectors[i].theta = ThetaRef::Mode(target);
                }
            }
        }
        self.candidates.clear();

        self.lambda *= self.config.gamma;
        self.levels_run += 1;
        Ok(LevelSummary {
            lambda: level_lambda,
            k: self.codevectors.len(),
            s_hat: self.mode_set.len(),
            iterations,
            converged,
        })
    }

    /// Run temperature levels until the floor is reached.
    pub fn run_all_levels<I, F>(&mut self, source: &mut I, mut on_sample: F) -> Result<Vec<LevelSummary>>
    where
        I: Iterator<Item = (Vec<f64>, Vec<f64>)>,
        F: FnMut(&SampleRecord),
    {
        let mut levels = Vec::new();
        while self.lambda > self.config.lambda_min {
            levels.push(self.run_level(source, &mut on_sample)?);
        }
        Ok(levels)
    }

    /// Bind every cell to its mode and emit the estimated model.
    pub fn finalize(&self) -> Result<EstimatedHybridModel> {
        if self.codevectors.is_empty() || self.mode_set.is_empty() {
            return Err(Error::InvalidInput("finalize: nothing identified yet"));
        }
        // Consolidate the mode set for output: two confirmed parameter
        // vectors whose divergence has fallen to eps_s or below describe the
        // same dynamics, so the pairwise-distinctness requirement is
        // re-applied here and the survivor is the lower index. This is how
        // regions with identical local dynamics end up counted as one mode.
        let eps_s = self.effective_eps_s()?;
        let mut modes: Vec<LocalModel> = Vec::new();
        let mut remap = Vec::with_capacity(self.mode_set.len());
        for m in &self.mode_set {
            let mut target = None;
            for (k, kept) in modes.iter().enumerate() {
                if self.divergence.eval(m.rows(), kept.rows())? <= eps_s {
                    target = Some(k);
                    break;
                }
            }
            match target {
                Some(k) => remap.push(k),
                None => {
                    modes.push(m.clone());
                    remap.push(modes.len() - 1);
                }
            }
        }
        let mut cells: Vec<Cell> = self
            .codevectors
            .iter()
            .map(|cv| Cell {
                phi_hat: cv.phi_hat.clone(),
                mode: remap[self.resolve_to_mode(&cv.theta)],
            })
            .collect();
        // a mode that no cell maps to has an empty region: it contributes
        // nothing to the output model and is not counted
        let mut used = vec![false; modes.len()];
        for c in &cells {
            used[c.mode] = true;
        }
        let mut compact = Vec::with_capacity(modes.len());
        let mut kept = Vec::new();
        for (i, m) in modes.into_iter().enumerate() {
            if used[i] {
                compact.push(kept.len());
                kept.push(m);
            } else {
                compact.push(usize::MAX);
            }
        }
        for c in &mut cells {
            c.mode = compact[c.mode];
        }
        Ok(EstimatedHybridModel {
            modes: kept,
            cells,
            divergence: self.divergence,
        })
    }
}
