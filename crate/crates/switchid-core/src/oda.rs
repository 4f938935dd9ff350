//! Slow-timescale mode estimation: online deterministic annealing over
//! augmented codevectors.
//!
//! Each prototype carries two accumulators, a mass estimate `rho` and a
//! mass-weighted location `sigma_acc`, whose ratio is the prototype location.
//! Associations are Gibbs probabilities over the augmented points
//! `x = [psi; phi]` against augmented codevectors `mu_i = [Theta_i phi; phi_hat_i]`,
//! so a prototype competes both on location and on how well its local model
//! predicts the observed output. Bifurcation is detected by perturbation
//! pairs that either re-merge or separate as the temperature drops.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::localid::LocalModel;
use crate::rng::SplitMix64;
use crate::{Divergence, Error, Result};

/// Which local-model parameter set a codevector currently points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaRef {
    /// A confirmed mode in the mode set.
    Mode(usize),
    /// A fresh parameter clone introduced at a split, awaiting the
    /// end-of-level insertion check.
    Candidate(usize),
}

/// One annealing prototype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codevector {
    /// Prototype location, always equal to `sigma_acc / rho`.
    pub phi_hat: Vec<f64>,
    /// Mass accumulator, in (0, 1].
    pub rho: f64,
    /// Mass-weighted location accumulator.
    pub sigma_acc: Vec<f64>,
    /// Link to the parameter vector of the cell's local model.
    pub theta: ThetaRef,
}

impl Codevector {
    /// First codevector: placed on the first observed feature with full mass.
    pub fn initial(phi: &[f64], theta: ThetaRef) -> Self {
        Self {
            phi_hat: phi.to_vec(),
            rho: 1.0,
            sigma_acc: phi.to_vec(),
            theta,
        }
    }

    fn refresh_location(&mut self) {
        debug_assert!(self.rho > 0.0);
        self.phi_hat = self.sigma_acc.iter().map(|s| s / self.rho).collect();
    }
}

/// Update order for [`oda_update`]. Synchronous computes all associations
/// from the pre-update state; sequential recomputes them per codevector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateOrder {
    #[default]
    Synchronous,
    Sequential,
}

/// Augmented codevector `mu_i = [Theta_i * phi; phi_hat_i]`: the local
/// model's prediction at the observed feature, stacked on the prototype.
pub fn augmented_codevector(cv: &Codevector, phi: &[f64], model: &LocalModel) -> Result<Vec<f64>> {
    let mut mu = model.predict(phi)?;
    mu.extend_from_slice(&cv.phi_hat);
    Ok(mu)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidInput("lambda must lie in (0, 1)"));
    }
    Ok(())
}

/// Gibbs association probabilities `p_i ∝ rho_i * exp(-((1-λ)/λ) d(x, mu_i))`.
///
/// Exponents are shifted by the minimum divergence before exponentiating so
/// the result never underflows to an all-zero vector at small temperatures.
pub fn gibbs_probs<'a, F>(
    cvs: &[Codevector],
    x: &[f64],
    phi: &[f64],
    resolve: F,
    lambda: f64,
    div: Divergence,
) -> Result<Vec<f64>>
where
    F: Fn(&ThetaRef) -> &'a LocalModel,
{
    check_lambda(lambda)?;
    if cvs.is_empty() {
        return Err(Error::InvalidInput("gibbs_probs: no codevectors"));
    }
    let coef = (1.0 - lambda) / lambda;
    let mut dists = Vec::with_capacity(cvs.len());
    for cv in cvs {
        if !(cv.rho > 0.0) {
            return Err(Error::InvalidInput("gibbs_probs: nonpositive rho"));
        }
        let mu = augmented_codevector(cv, phi, resolve(&cv.theta))?;
        dists.push(div.eval(x, &mu)?);
    }
    let shift = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut probs: Vec<f64> = cvs
        .iter()
        .zip(dists.iter())
        .map(|(cv, d)| cv.rho * libm::exp(-coef * (d - shift)))
        .collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidInput("gibbs_probs: degenerate weights"));
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(probs)
}

/// One stochastic approximation sweep over all codevectors:
/// `rho_i += beta (p_i - rho_i)`, `sigma_i += beta (phi p_i - sigma_i)`,
/// then `phi_hat_i = sigma_i / rho_i`.
///
/// Returns the association probabilities used and the largest prototype
/// displacement (the convergence signal for a temperature level).
pub fn oda_update<'a, F>(
    cvs: &mut [Codevector],
    x: &[f64],
    phi: &[f64],
    resolve: F,
    lambda: f64,
    beta: f64,
    div: Divergence,
    order: UpdateOrder,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&ThetaRef) -> &'a LocalModel,
{
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidInput("oda_update: beta must be in (0, 1]"));
    }
    // A full step (beta = 1) combined with an association weight that
    // underflowed to exactly zero would drive rho to 0 and the location to
    // 0/0; the floor keeps the cell alive with its location frozen.
    const RHO_FLOOR: f64 = 1e-12;
    let mut max_shift = 0.0f64;
    let mut apply = |cv: &mut Codevector, p: f64| {
        let old = cv.phi_hat.clone();
        cv.rho += beta * (p - cv.rho);
        for (s, f) in cv.sigma_acc.iter_mut().zip(phi.iter()) {
            *s += beta * (f * p - *s);
        }
        if cv.rho < RHO_FLOOR {
            cv.rho = RHO_FLOOR;
            cv.sigma_acc = old.iter().map(|v| v * RHO_FLOOR).collect();
        }
        cv.refresh_location();
        let shift = libm::sqrt(
            cv.phi_hat
                .iter()
                .zip(old.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        );
        max_shift = max_shift.max(shift);
    };
    let probs = match order {
        UpdateOrder::Synchronous => {
            let probs = gibbs_probs(cvs, x, phi, &resolve, lambda, div)?;
            for (cv, &p) in cvs.iter_mut().zip(probs.iter()) {
                apply(cv, p);
            }
            probs
        }
        UpdateOrder::Sequential => {
            let mut last = Vec::new();
            for i in 0..cvs.len() {
                last = gibbs_probs(cvs, x, phi, &resolve, lambda, div)?;
                apply(&mut cvs[i], last[i]);
            }
            last
        }
    };
    Ok((probs, max_shift))
}

/// Replace codevectors by perturbation pairs at `phi_hat ± delta * v` with a
/// fresh random direction `v` per parent. Mass is split evenly so the total
/// `rho` is conserved. Splitting is capped so the count never exceeds
/// `k_max`; when only part of the set fits, the heaviest cells split first.
///
/// Returns the indices of the newly inserted children; the caller assigns
/// them freshly cloned candidate parameter vectors.
pub fn perturb_split(
    cvs: &mut Vec<Codevector>,
    delta: f64,
    rng: &mut SplitMix64,
    k_max: usize,
) -> Vec<usize> {
    let k = cvs.len();
    let budget = k_max.saturating_sub(k).min(k);
    if budget == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..k).collect();
    if budget < k {
        order.sort_by(|&a, &b| {
            cvs[b]
                .rho
                .partial_cmp(&cvs[a].rho)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(budget);
        order.sort_unstable();
    }
    let mut new_indices = Vec::with_capacity(order.len());
    for idx in order {
        let dir = rng.unit_vector(cvs[idx].phi_hat.len());
        let parent = cvs[idx].clone();
        let half_rho = parent.rho / 2.0;
        let child = |sign: f64| -> Codevector {
            let phi_hat: Vec<f64> = parent
                .phi_hat
                .iter()
                .zip(dir.iter())
                .map(|(p, v)| p + sign * delta * v)
                .collect();
            Codevector {
                sigma_acc: phi_hat.iter().map(|p| p * half_rho).collect(),
                phi_hat,
                rho: half_rho,
                theta: parent.theta,
            }
        };
        cvs[idx] = child(1.0);
        new_indices.push(cvs.len());
        cvs.push(child(-1.0));
    }
    new_indices
}

/// Greedy coalescing of codevector pairs that satisfy the merging criterion
/// `((1-λ)/λ) d(phi_hat_i, phi_hat_j) <= eps_n`.
///
/// Pairs are scanned in index order; the lower index survives and absorbs the
/// other's mass (its parameters are discarded). `mode_of` resolves each
/// codevector to a confirmed mode; codevectors resolving to different modes
/// never merge. Repeats until no pair qualifies, so the result is idempotent.
pub fn merge<F>(
    cvs: &mut Vec<Codevector>,
    lambda: f64,
    eps_n: f64,
    div: Divergence,
    mode_of: F,
) -> Result<()>
where
    F: Fn(&ThetaRef) -> usize,
{
    check_lambda(lambda)?;
    let coef = (1.0 - lambda) / lambda;
    'outer: loop {
        for i in 0..cvs.len() {
            for j in (i + 1)..cvs.len() {
                if mode_of(&cvs[i].theta) != mode_of(&cvs[j].theta) {
                    continue;
                }
                let d = div.eval(&cvs[i].phi_hat, &cvs[j].phi_hat)?;
                if coef * d <= eps_n {
                    let absorbed = cvs.remove(j);
                    cvs[i].rho += absorbed.rho;
                    for (s, a) in cvs[i].sigma_acc.iter_mut().zip(absorbed.sigma_acc.iter()) {
                        *s += a;
                    }
                    cvs[i].refresh_location();
                    continue 'outer;
                }
            }
        }
        return Ok(());
    }
}

/// Empirical free energy `F = (1-λ) D - λ H` over a dataset of augmented
/// points, with `D` the expected divergence to the quantizer and `H` the
/// association entropy (the data-entropy term, constant in the codevectors,
/// is omitted). Diagnostic only.
pub fn free_energy<'a, F>(
    points: &[(Vec<f64>, Vec<f64>)],
    cvs: &[Codevector],
    resolve: F,
    lambda: f64,
    div: Divergence,
) -> Result<(f64, f64, f64)>
where
    F: Fn(&ThetaRef) -> &'a LocalModel,
{
    if points.is_empty() {
        return Err(Error::InvalidInput("free_energy: empty dataset"));
    }
    let mut distortion = 0.0;
    let mut entropy = 0.0;
    for (x, phi) in points {
        let probs = gibbs_probs(cvs, x, phi, &resolve, lambda, div)?;
        for (cv, p) in cvs.iter().zip(probs.iter()) {
            let mu = augmented_codevector(cv, phi, resolve(&cv.theta))?;
            distortion += p * div.eval(x, &mu)?;
            if *p > 0.0 {
                entropy -= p * libm::log(*p);
            }
        }
    }
    let n = points.len() as f64;
    let d = distortion / n;
    let h = entropy / n;
    Ok(((1.0 - lambda) * d - lambda * h, d, h))
}
