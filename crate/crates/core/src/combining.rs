//! AP-MS association, P-MMSE combining, instantaneous SINR and spectral efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ChannelEstimate, PilotPlan};
use crate::linalg::{c, hermitian_solve_vec, CMat, CVec};
use crate::scenario::Deployment;

/// How serving-AP sets are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AssociationRule {
    #[default]
    AllServeAll,
    /// Each MS is served by the `q` APs with the largest large-scale gain.
    TopQ { q: usize },
}

/// `D_kl`, serving sets `L_k` and coupled sets `S_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    /// `serving[k][l]` is true when `D_kl = I`.
    pub serving: Vec<Vec<bool>>,
    /// `coupled[k]` = `{i : L_k ∩ L_i ≠ ∅}`, ascending.
    pub coupled: Vec<Vec<usize>>,
}

impl Association {
    pub fn all_serve_all(num_ms: usize, num_aps: usize) -> Self {
        Self::from_serving(vec![vec![true; num_aps]; num_ms])
    }

    pub fn from_serving(serving: Vec<Vec<bool>>) -> Self {
        let k_n = serving.len();
        let coupled = (0..k_n)
            .map(|k| {
                (0..k_n)
                    .filter(|&i| serving[k].iter().zip(&serving[i]).any(|(&a, &b)| a && b))
                    .collect()
            })
            .collect();
        Self { serving, coupled }
    }

    pub fn num_ms(&self) -> usize {
        self.serving.len()
    }

    /// `L_k`.
    pub fn serving_aps(&self, k: usize) -> Vec<usize> {
        (0..self.serving[k].len()).filter(|&l| self.serving[k][l]).collect()
    }

    /// Diagonal of the stacked `D_k` for `n_l` antennas per AP.
    pub fn mask(&self, k: usize, n_l: usize) -> Vec<bool> {
        self.serving[k]
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, n_l))
            .collect()
    }
}

pub fn build_association(dep: &Deployment, rule: AssociationRule) -> Result<Association> {
    let (l_n, k_n) = (dep.num_aps(), dep.num_ms());
    match rule {
        AssociationRule::AllServeAll => Ok(Association::all_serve_all(k_n, l_n)),
        AssociationRule::TopQ { q } => {
            if q > l_n || q == 0 {
                return Err(Error::Config(format!("top_q: Q = {q} must lie in 1..={l_n}")));
            }
            let serving = (0..k_n)
                .map(|k| {
                    let mut order: Vec<usize> = (0..l_n).collect();
                    order.sort_by(|&a, &b| {
                        dep.beta_ap_ms[(b, k)]
                            .total_cmp(&dep.beta_ap_ms[(a, k)])
                            .then(a.cmp(&b))
                    });
                    let mut row = vec![false; l_n];
                    for &l in &order[..q] {
                        row[l] = true;
                    }
                    row
                })
                .collect();
            Ok(Association::from_serving(serving))
        }
    }
}

/// Stacked combining vectors `v_k`, zero outside the serving APs.
#[derive(Debug, Clone)]
pub struct Combiner {
    pub v: Vec<CVec>,
}

fn masked(v: &CVec, mask: &[bool]) -> CVec {
    CVec::from_fn(v.len(), |i, _| if mask[i] { v[i] } else { c(0.0, 0.0) })
}

fn masked_mat(m: &CMat, mask: &[bool]) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
        if mask[i] && mask[j] {
            m[(i, j)]
        } else {
            c(0.0, 0.0)
        }
    })
}

/// P-MMSE: `v_k = p_k (sum_{i in S_k} p_i D_k (ĥ_i ĥ_i^H + C_i) D_k + sigma^2 I)^{-1} D_k ĥ_k`.
pub fn pmmse_combine(
    est: &ChannelEstimate,
    assoc: &Association,
    powers: &[f64],
    noise_power: f64,
) -> Result<Combiner> {
    let k_n = est.num_ms();
    if assoc.num_ms() != k_n || powers.len() != k_n {
        return Err(Error::Dimension(format!(
            "combining: {k_n} estimates, {} associations, {} powers",
            assoc.num_ms(),
            powers.len()
        )));
    }
    let hats: Vec<CVec> = (0..k_n).map(|k| est.stacked(k)).collect();
    let errs: Vec<CMat> = (0..k_n).map(|k| est.stacked_error(k)).collect();
    let dim = hats.first().map_or(0, CVec::len);
    let n_l = if assoc.serving.first().map_or(0, Vec::len) > 0 {
        dim / assoc.serving[0].len()
    } else {
        0
    };

    let v = (0..k_n)
        .map(|k| {
            let mask = assoc.mask(k, n_l);
            let mut a = CMat::identity(dim, dim) * c(noise_power, 0.0);
            for &i in &assoc.coupled[k] {
                let hi = masked(&hats[i], &mask);
                a.gerc(c(powers[i], 0.0), &hi, &hi, c(1.0, 0.0));
                a += masked_mat(&errs[i], &mask) * c(powers[i], 0.0);
            }
            let rhs = masked(&hats[k], &mask);
            hermitian_solve_vec(&a, &rhs).map(|x| x * c(powers[k], 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Combiner { v })
}

/// SINR of every MS for one block, with estimation error treated as uncorrelated noise:
/// `p_k |v^H ĥ_k|^2 / (sum_{i≠k} p_i |v^H ĥ_i|^2 + v^H (sum_i p_i C_i + sigma^2 I) v)`,
/// all terms restricted to the serving APs of MS `k`.
pub fn instantaneous_sinr(
    comb: &Combiner,
    est: &ChannelEstimate,
    assoc: &Association,
    powers: &[f64],
    noise_power: f64,
) -> Result<Vec<f64>> {
    let k_n = est.num_ms();
    if comb.v.len() != k_n || powers.len() != k_n || assoc.num_ms() != k_n {
        return Err(Error::Dimension("SINR inputs disagree on K".into()));
    }
    let hats: Vec<CVec> = (0..k_n).map(|k| est.stacked(k)).collect();
    let errs: Vec<CMat> = (0..k_n).map(|k| est.stacked_error(k)).collect();
    let mut sum_err = CMat::zeros(hats[0].len(), hats[0].len());
    for (i, e) in errs.iter().enumerate() {
        sum_err += e * c(powers[i], 0.0);
    }
    let n_l = hats[0].len() / assoc.serving[0].len().max(1);

    Ok((0..k_n)
        .map(|k| {
            let v = masked(&comb.v[k], &assoc.mask(k, n_l));
            let desired = powers[k] * v.dotc(&hats[k]).norm_sqr();
            let interference: f64 = (0..k_n)
                .filter(|&i| i != k)
                .map(|i| powers[i] * v.dotc(&hats[i]).norm_sqr())
                .sum();
            let noise = v.dotc(&(&sum_err * &v)).re + noise_power * v.norm_squared();
            let den = interference + noise;
            if den > 0.0 {
                desired / den
            } else {
                0.0
            }
        })
        .collect())
}

/// Spectral efficiency of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct SeResult {
    /// `sinr[block][k]`.
    pub sinr: Vec<Vec<f64>>,
    /// Per-MS SE in bit/s/Hz.
    pub per_ms: Vec<f64>,
    pub sum: f64,
    pub prelog: f64,
}

/// `SE_k = (1 - tau_p / tau_c) * mean_blocks log2(1 + SINR_k)`.
pub fn spectral_efficiency(sinr: Vec<Vec<f64>>, plan: &PilotPlan) -> Result<SeResult> {
    if sinr.is_empty() {
        return Err(Error::EmptySamples);
    }
    let k_n = sinr[0].len();
    let prelog = plan.prelog().max(0.0);
    let per_ms: Vec<f64> = (0..k_n)
        .map(|k| {
            let mean = sinr.iter().map(|s| (1.0 + s[k]).log2()).sum::<f64>() / sinr.len() as f64;
            prelog * mean
        })
        .collect();
    let sum = per_ms.iter().sum();
    Ok(SeResult {
        sinr,
        per_ms,
        sum,
        prelog,
    })
}
