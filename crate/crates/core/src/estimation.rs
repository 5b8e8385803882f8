//! Pilot planning with overhead accounting and MMSE estimation of the aggregated channel.

use crate::channels::{AggregatedChannel, EffectiveStats};
use crate::error::{Error, Result};
use crate::linalg::{block_diag, c, complex_normal_vec, hermitian_solve, hermitize, psd_clip, CMat, CVec};
use crate::ris::{Assignment, Method};
use crate::seed;

/// Training budget of one coherence block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPlan {
    /// Separation-stage symbols.
    pub tau_p1: usize,
    /// Aggregated-stage symbols, one orthogonal pilot per MS.
    pub tau_p2: usize,
    pub tau_c: usize,
    /// `pilot_sets[k]`: MSs sharing MS `k`'s pilot (always contains `k`).
    pub pilot_sets: Vec<Vec<usize>>,
}

impl PilotPlan {
    /// Builds the plan without checking feasibility.
    ///
    /// `tau_p1 = sum_r U_r (1 + states)` with `states = N_R` (per element) or `N_B`
    /// (grouped); the codebook method trains nothing.
    pub fn unchecked(method: Method, num_ms: usize, assignment: &Assignment, states_per_ris: usize, tau_c: usize) -> Self {
        let tau_p1 = match method {
            Method::Codebook => 0,
            _ => assignment.assisted.iter().map(|&u| u * (1 + states_per_ris)).sum(),
        };
        Self {
            tau_p1,
            tau_p2: num_ms,
            tau_c,
            pilot_sets: (0..num_ms).map(|k| vec![k]).collect(),
        }
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p1 + self.tau_p2
    }

    /// Data symbols `tau_c - tau_p`, saturating at zero.
    pub fn tau_u(&self) -> usize {
        self.tau_c.saturating_sub(self.tau_p())
    }

    /// `1 - tau_p / tau_c`. Non-positive for infeasible plans.
    pub fn prelog(&self) -> f64 {
        1.0 - self.tau_p() as f64 / self.tau_c as f64
    }

    pub fn is_feasible(&self) -> bool {
        self.tau_p() < self.tau_c
    }
}

/// Pilot plan for `method`; errors when training would fill the coherence block.
pub fn pilot_plan(
    method: Method,
    num_ms: usize,
    assignment: &Assignment,
    states_per_ris: usize,
    tau_c: usize,
) -> Result<PilotPlan> {
    if tau_c <= num_ms {
        return Err(Error::Config(format!("tau_c = {tau_c} must exceed K = {num_ms}")));
    }
    let plan = PilotPlan::unchecked(method, num_ms, assignment, states_per_ris, tau_c);
    if !plan.is_feasible() {
        return Err(Error::InfeasiblePlan {
            method: method.id(),
            ris_count: assignment.assisted.len(),
            tau_p: plan.tau_p(),
            tau_c,
        });
    }
    Ok(plan)
}

/// MMSE estimates together with their error statistics.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// `h_hat[k][l]`.
    pub h_hat: Vec<Vec<CVec>>,
    /// Error covariance `C[k][l]`.
    pub c: Vec<Vec<CMat>>,
    /// `Gamma[k][l] = tau_p2 P_p sum_{i in P_k} R_il + sigma^2 I`.
    pub gamma: Vec<Vec<CMat>>,
}

impl ChannelEstimate {
    pub fn num_ms(&self) -> usize {
        self.h_hat.len()
    }

    pub fn stacked(&self, k: usize) -> CVec {
        crate::linalg::stack(&self.h_hat[k])
    }

    pub fn stacked_error(&self, k: usize) -> CMat {
        block_diag(&self.c[k])
    }
}

struct Filters {
    gamma: Vec<Vec<CMat>>,
    /// `Gamma^{-1} R` per (k, l).
    gamma_inv_r: Vec<Vec<CMat>>,
    c: Vec<Vec<CMat>>,
}

fn filters(stats: &EffectiveStats, plan: &PilotPlan, pilot_power: f64, noise_power: f64) -> Result<Filters> {
    let gain = plan.tau_p2 as f64 * pilot_power;
    let k_n = stats.r_eff.len();
    let mut out = Filters {
        gamma: Vec::with_capacity(k_n),
        gamma_inv_r: Vec::with_capacity(k_n),
        c: Vec::with_capacity(k_n),
    };
    for k in 0..k_n {
        let (mut gs, mut gis, mut cs) = (Vec::new(), Vec::new(), Vec::new());
        for (l, r) in stats.r_eff[k].iter().enumerate() {
            let n = r.nrows();
            let mut gamma = CMat::identity(n, n) * c(noise_power, 0.0);
            for &i in &plan.pilot_sets[k] {
                gamma += &stats.r_eff[i][l] * c(gain, 0.0);
            }
            let x = if r.norm() == 0.0 {
                CMat::zeros(n, n)
            } else {
                hermitian_solve(&gamma, r)?
            };
            let err = psd_clip(&hermitize(&(r - r * &x * c(gain, 0.0))));
            gs.push(gamma);
            gis.push(x);
            cs.push(err);
        }
        out.gamma.push(gs);
        out.gamma_inv_r.push(gis);
        out.c.push(cs);
    }
    Ok(out)
}

/// `C_kl = R_kl - tau_p2 P_p R_kl Gamma_kl^{-1} R_kl`.
pub fn error_covariance(
    stats: &EffectiveStats,
    plan: &PilotPlan,
    pilot_power: f64,
    noise_power: f64,
) -> Result<Vec<Vec<CMat>>> {
    Ok(filters(stats, plan, pilot_power, noise_power)?.c)
}

/// Synthesizes the despread pilot observation `y_kl` from the true aggregated channel and
/// fresh noise, then applies the MMSE filter. MSs sharing a pilot see the same noise.
pub fn mmse_estimate(
    truth: &AggregatedChannel,
    stats: &EffectiveStats,
    plan: &PilotPlan,
    pilot_power: f64,
    noise_power: f64,
    noise_seed: u64,
) -> Result<ChannelEstimate> {
    let k_n = truth.num_ms();
    if stats.r_eff.len() != k_n || plan.pilot_sets.len() != k_n {
        return Err(Error::Dimension(format!(
            "estimation: {k_n} channels, {} statistics, {} pilot sets",
            stats.r_eff.len(),
            plan.pilot_sets.len()
        )));
    }
    let f = filters(stats, plan, pilot_power, noise_power)?;
    let amp = (plan.tau_p2 as f64 * pilot_power).sqrt();
    let sigma = noise_power.sqrt();

    let mut h_hat = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let group = *plan.pilot_sets[k].iter().min().unwrap_or(&k);
        let mut row = Vec::with_capacity(truth.num_aps());
        for l in 0..truth.num_aps() {
            let n = truth.h[k][l].len();
            let mut rng = seed::stream(noise_seed, &[group as u64, l as u64]);
            let mut y = complex_normal_vec(&mut rng, n) * c(sigma, 0.0);
            for &i in &plan.pilot_sets[k] {
                y.axpy(c(amp, 0.0), &truth.h[i][l], c(1.0, 0.0));
            }
            // R Gamma^{-1} = (Gamma^{-1} R)^H.
            row.push(f.gamma_inv_r[k][l].adjoint() * y * c(amp, 0.0));
        }
        h_hat.push(row);
    }
    Ok(ChannelEstimate {
        h_hat,
        c: f.c,
        gamma: f.gamma,
    })
}
