//! Per-coherence-block channel realizations, the aggregated MS-AP channel and its
//! second-order statistics under a fixed RIS configuration.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{block_diag, c, cis, complex_normal, complex_normal_vec, hermitize, psd_clip, CMat, CVec};
use crate::ris::RisPlan;
use crate::scenario::{CorrelationSet, Deployment};
use crate::seed;

const STREAM_W: u64 = 0x57;
const STREAM_F: u64 = 0x46;
const STREAM_G: u64 = 0x47;

/// One realization of every MS-AP, MS-RIS and RIS-AP channel.
#[derive(Debug, Clone)]
pub struct BlockChannels {
    /// `w[k][l]`, length `N_L`.
    pub w: Vec<Vec<CVec>>,
    /// `f[k][r]`, length `N_R`.
    pub f: Vec<Vec<CVec>>,
    /// `g[r][l]`, `N_L x N_R`.
    pub g: Vec<Vec<CMat>>,
    /// LoS phases: `phi` (K x L), `varrho` (K x R), `vartheta` (R x L).
    pub phi: DMatrix<f64>,
    pub varrho: DMatrix<f64>,
    pub vartheta: DMatrix<f64>,
}

impl BlockChannels {
    pub fn num_ms(&self) -> usize {
        self.w.len()
    }
    pub fn num_aps(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }
    pub fn num_ris(&self) -> usize {
        self.g.len()
    }
    pub fn ris_elements(&self) -> usize {
        self.g
            .first()
            .and_then(|row| row.first())
            .map_or(0, |m| m.ncols())
    }
}

fn uniform_phase<R: Rng>(rng: &mut R) -> f64 {
    -PI + 2.0 * PI * rng.random::<f64>()
}

/// Draws one coherence block: each link is its LoS mean rotated by a uniform phase plus a
/// correlated complex Gaussian NLoS part. Link families use separate streams so that
/// adding RIS panels leaves the direct channels untouched.
pub fn draw_block_channels(dep: &Deployment, corr: &CorrelationSet, block_seed: u64) -> BlockChannels {
    let (l_n, k_n, r_n) = (dep.num_aps(), dep.num_ms(), dep.num_ris());
    let n_l = corr.ap_antennas;
    let n_r = corr.ris_elements;

    let mut rng = seed::stream(block_seed, &[STREAM_W]);
    let mut phi = DMatrix::zeros(k_n, l_n);
    let mut w = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let mut row = Vec::with_capacity(l_n);
        for l in 0..l_n {
            phi[(k, l)] = uniform_phase(&mut rng);
            let z = complex_normal_vec(&mut rng, n_l);
            row.push(&corr.w_mean[k][l] * cis(phi[(k, l)]) + &corr.r_w_factor[k][l] * z);
        }
        w.push(row);
    }

    let mut varrho = DMatrix::zeros(k_n, r_n);
    let mut vartheta = DMatrix::zeros(r_n, l_n);
    let mut f = vec![Vec::with_capacity(r_n); k_n];
    let mut g = Vec::with_capacity(r_n);
    for r in 0..r_n {
        let mut rng = seed::stream(block_seed, &[STREAM_F, r as u64]);
        for k in 0..k_n {
            varrho[(k, r)] = uniform_phase(&mut rng);
            let z = complex_normal_vec(&mut rng, n_r);
            let nlos = &*corr.ris_factor * z * c(corr.f_nlos[(k, r)].sqrt(), 0.0);
            f[k].push(&corr.f_mean[k][r] * cis(varrho[(k, r)]) + nlos);
        }

        let mut rng = seed::stream(block_seed, &[STREAM_G, r as u64]);
        let mut row = Vec::with_capacity(l_n);
        for l in 0..l_n {
            vartheta[(r, l)] = uniform_phase(&mut rng);
            let z = CMat::from_fn(n_l, n_r, |_, _| complex_normal(&mut rng));
            // vec(G_nlos) ~ CN(0, beta (R_tx^T kron R_rx)) with R_tx the RIS panel correlation.
            let left = &corr.g_rx_factor[r][l] * z;
            let nlos = (&*corr.ris_factor * left.transpose()).transpose() * c(corr.g_nlos[(r, l)].sqrt(), 0.0);
            row.push(&corr.g_mean[r][l] * cis(vartheta[(r, l)]) + nlos);
        }
        g.push(row);
    }

    BlockChannels {
        w,
        f,
        g,
        phi,
        varrho,
        vartheta,
    }
}

/// Aggregated channel `h_kl = w_kl + sum_r G_rl Theta_r f_kr`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedChannel {
    /// `h[k][l]`, length `N_L`.
    pub h: Vec<Vec<CVec>>,
}

impl AggregatedChannel {
    pub fn num_ms(&self) -> usize {
        self.h.len()
    }

    pub fn num_aps(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    /// `h_k = [h_k1; ...; h_kL]`.
    pub fn stacked(&self, k: usize) -> CVec {
        crate::linalg::stack(&self.h[k])
    }
}

pub fn aggregate_channels(block: &BlockChannels, plan: &RisPlan) -> Result<AggregatedChannel> {
    let r_n = block.num_ris();
    if plan.num_ris() != r_n {
        return Err(Error::Dimension(format!(
            "plan has {} RIS phase vectors, block has {r_n} RIS",
            plan.num_ris()
        )));
    }
    let n_r = block.ris_elements();
    if let Some(bad) = plan.theta.iter().find(|t| t.len() != n_r) {
        return Err(Error::Dimension(format!(
            "phase vector of length {} for N_R = {n_r}",
            bad.len()
        )));
    }
    let phasors: Vec<CVec> = (0..r_n).map(|r| plan.phasors(r)).collect();
    let h = block
        .w
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(l, w)| {
                    let mut h = w.clone();
                    for r in 0..r_n {
                        let reflected = block.f[k][r].component_mul(&phasors[r]);
                        h.gemv(c(1.0, 0.0), &block.g[r][l], &reflected, c(1.0, 0.0));
                    }
                    h
                })
                .collect()
        })
        .collect();
    Ok(AggregatedChannel { h })
}

/// Covariance of the aggregated channel per (k, l) for a fixed RIS configuration.
#[derive(Debug, Clone)]
pub struct EffectiveStats {
    /// `r_eff[k][l]`, `N_L x N_L`.
    pub r_eff: Vec<Vec<CMat>>,
    /// Number of block draws behind the estimate; 0 for the analytic route.
    pub sample_count: usize,
}

impl EffectiveStats {
    /// Block-diagonal `R_k`.
    pub fn stacked(&self, k: usize) -> CMat {
        block_diag(&self.r_eff[k])
    }
}

/// Sample covariance (about zero) of `h_kl` over `n_cov` independent blocks with the RIS
/// configuration held fixed; symmetrized and projected onto the PSD cone.
pub fn effective_covariance(
    dep: &Deployment,
    corr: &CorrelationSet,
    plan: &RisPlan,
    n_cov: usize,
    cov_seed: u64,
) -> Result<EffectiveStats> {
    if n_cov < 100 {
        return Err(Error::Config(format!("n_cov = {n_cov} is below the minimum of 100")));
    }
    let (l_n, k_n) = (dep.num_aps(), dep.num_ms());
    let n_l = corr.ap_antennas;
    let mut acc = vec![vec![CMat::zeros(n_l, n_l); l_n]; k_n];
    for i in 0..n_cov {
        let block = draw_block_channels(dep, corr, seed::derive_seed(cov_seed, &[i as u64]));
        let agg = aggregate_channels(&block, plan)?;
        for k in 0..k_n {
            for l in 0..l_n {
                let h = &agg.h[k][l];
                acc[k][l].gerc(c(1.0, 0.0), h, h, c(1.0, 0.0));
            }
        }
    }
    let scale = c(1.0 / n_cov as f64, 0.0);
    let r_eff = acc
        .into_iter()
        .map(|row| row.into_iter().map(|m| psd_clip(&hermitize(&(m * scale)))).collect())
        .collect();
    Ok(EffectiveStats {
        r_eff,
        sample_count: n_cov,
    })
}

/// Closed-form counterpart of [`effective_covariance`].
///
/// With every LoS component carrying an independent uniform phase, all links are zero-mean
/// and mutually independent, so
/// `R_kl = R_w + w̄ w̄^H + sum_r [ Ḡ Q Ḡ^H + beta_G tr(Q R_tx^T) R_rx ]`
/// with `Q = Theta_r (beta_f R_ris + f̄ f̄^H) Theta_r^H`.
pub fn analytic_covariance(corr: &CorrelationSet, plan: &RisPlan) -> Result<EffectiveStats> {
    let k_n = corr.r_w.len();
    let l_n = corr.r_w.first().map_or(0, Vec::len);
    let r_n = corr.g_mean.len();
    if plan.num_ris() != r_n {
        return Err(Error::Dimension(format!(
            "plan has {} RIS phase vectors, correlation set has {r_n} RIS",
            plan.num_ris()
        )));
    }
    let n_r = corr.ris_elements;
    let ris: &CMat = &corr.ris_corr;
    // z^T R z̄ for the conjugate-free quadratic forms below.
    let form = |z: &CVec| z.dot(&(ris * z.map(|x| x.conj()))).re;
    let mut r_eff: Vec<Vec<CMat>> = (0..k_n)
        .map(|k| (0..l_n).map(|l| corr.w_second_moment(k, l)).collect())
        .collect();

    for r in 0..r_n {
        let u = plan.phasors(r);
        if u.len() != n_r {
            return Err(Error::Dimension(format!("phase vector of length {} for N_R = {n_r}", u.len())));
        }
        // tr(Theta R Theta^H R^T) = sum_mn (Theta R Theta^H)_mn R_mn.
        let theta_r_theta = CMat::from_fn(n_r, n_r, |m, n| u[m] * ris[(m, n)] * u[n].conj());
        let tr_nlos = theta_r_theta.component_mul(ris).sum();
        // f̄^H Theta^H R^T Theta f̄ per MS.
        let quad: Vec<f64> = (0..k_n).map(|k| form(&u.component_mul(&corr.f_mean[k][r]))).collect();
        for l in 0..l_n {
            // Ḡ Theta = a v^T with v = b ∘ u, so its quadratic forms reduce to scalars.
            let (a, b) = &corr.g_mean_factors[r][l];
            let v = b.component_mul(&u);
            let q_nlos = form(&v);
            let aa = a * a.adjoint();
            let rx = &corr.g_rx[r][l];
            let beta_g = corr.g_nlos[(r, l)];
            for k in 0..k_n {
                let beta_f = corr.f_nlos[(k, r)];
                let fbar = &corr.f_mean[k][r];
                let trace_q = beta_f * tr_nlos.re + quad[k];
                let los = q_nlos * beta_f + v.dot(fbar).norm_sqr();
                r_eff[k][l] += &aa * c(los, 0.0) + rx * c(beta_g * trace_q, 0.0);
            }
        }
    }
    let r_eff = r_eff
        .into_iter()
        .map(|row| row.into_iter().map(|m| hermitize(&m)).collect())
        .collect();
    Ok(EffectiveStats { r_eff, sample_count: 0 })
}
