//! Network deployments: geometry, LoS states, large-scale fading and spatial correlation.
//!
//! Geometry lives on a square torus (wrap-around), so every node sees a statistically
//! identical neighbourhood. Large-scale fading follows the 3GPP UMi street-canyon model
//! and the LoS components of every link carry far-field array steering vectors.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, cis, hermitize, psd_clip, psd_factor, CMat, CVec};
use crate::seed;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

// Stream labels used by `generate_deployment`.
const STREAM_AP_MS: u64 = 0x4150;
const STREAM_RIS: u64 = 0x5249;

/// Physical and numerical parameters of one simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of APs (L).
    pub num_aps: usize,
    /// Antennas per AP (N_L).
    pub ap_antennas: usize,
    /// Number of single-antenna MSs (K).
    pub num_ms: usize,
    /// Number of RIS panels (R).
    pub num_ris: usize,
    /// Reflective elements per RIS (N_R), a perfect square.
    pub ris_elements: usize,
    pub area_side: f64,
    pub carrier_freq: f64,
    pub bandwidth: f64,
    /// Coherence block length in symbols.
    pub tau_c: usize,
    /// Pilot power in W.
    pub pilot_power: f64,
    /// Per-MS data power in W.
    pub data_power: f64,
    pub noise_figure_db: f64,
    pub ap_height: f64,
    pub ms_height: f64,
    pub ris_height: f64,
    /// RIS element spacing in wavelengths.
    pub ris_element_spacing: f64,
    /// Angular standard deviation of the AP local-scattering model, degrees.
    pub ap_angular_std_deg: f64,
    pub master_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_aps: 10,
            ap_antennas: 4,
            num_ms: 5,
            num_ris: 5,
            ris_elements: 16,
            area_side: 1000.0,
            carrier_freq: 3.5e9,
            bandwidth: 20e6,
            tau_c: 20_000,
            pilot_power: 0.1,
            data_power: 0.1,
            noise_figure_db: 7.0,
            ap_height: 10.0,
            ms_height: 1.5,
            ris_height: 10.0,
            ris_element_spacing: 0.25,
            ap_angular_std_deg: 15.0,
            master_seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.tau_c == 0 {
            return fail("tau_c must be positive");
        }
        if !(self.area_side > 0.0) {
            return fail("area_side must be positive");
        }
        if !(self.pilot_power > 0.0 && self.data_power > 0.0) {
            return fail("powers must be positive");
        }
        if !(self.carrier_freq > 0.0 && self.bandwidth > 0.0) {
            return fail("carrier_freq and bandwidth must be positive");
        }
        if self.num_aps > 0 && self.ap_antennas == 0 {
            return fail("ap_antennas must be at least 1");
        }
        if self.num_ris > 0 && self.ris_elements == 0 {
            return fail("ris_elements must be at least 1");
        }
        let side = (self.ris_elements as f64).sqrt().round() as usize;
        if side * side != self.ris_elements {
            return fail("ris_elements must be a perfect square (square panel)");
        }
        if !(self.ris_element_spacing > 0.0) {
            return fail("ris_element_spacing must be positive");
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Thermal noise power in W: -174 dBm/Hz + 10 log10(B) + NF.
    pub fn noise_power(&self) -> f64 {
        let dbm = -174.0 + 10.0 * self.bandwidth.log10() + self.noise_figure_db;
        10f64.powf((dbm - 30.0) / 10.0)
    }

    /// Stacked AP antenna dimension `L * N_L`.
    pub fn stacked_dim(&self) -> usize {
        self.num_aps * self.ap_antennas
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Displacement from `a` to the nearest torus image of `b`.
pub fn wrap_offset(a: (f64, f64), b: (f64, f64), area_side: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = b.0 + sx * area_side - a.0;
            let dy = b.1 + sy * area_side - a.1;
            let d2 = dx * dx + dy * dy;
            if d2 < best.0 {
                best = (d2, dx, dy);
            }
        }
    }
    (best.1, best.2)
}

/// Wrap-around 2D distance: minimum over the nine translated images of `b`.
pub fn wrap_distance(a: (f64, f64), b: (f64, f64), area_side: f64) -> f64 {
    let (dx, dy) = wrap_offset(a, b, area_side);
    dx.hypot(dy)
}

/// 3GPP UMi street-canyon LoS probability.
pub fn los_probability(d2d: f64) -> f64 {
    let d = d2d.max(0.0);
    if d <= 18.0 {
        return 1.0;
    }
    let e = (-d / 36.0).exp();
    ((18.0 / d).min(1.0) * (1.0 - e) + e).clamp(0.0, 1.0)
}

/// 3GPP UMi street-canyon pathloss in dB. Distances below 1 m are clamped to 1 m.
pub fn pathloss_db(d3d: f64, fc: f64, los: bool) -> f64 {
    let d = d3d.max(1.0);
    let f_ghz = fc / 1e9;
    let los_db = 32.4 + 21.0 * d.log10() + 20.0 * f_ghz.log10();
    if los {
        los_db
    } else {
        los_db.max(35.3 * d.log10() + 22.4 + 21.3 * f_ghz.log10())
    }
}

/// Distance-decaying Rice factor (linear): `K_dB = 13 - 0.03 d` on LoS links, 0 otherwise.
pub fn rice_factor(d2d: f64, los: bool) -> f64 {
    if los {
        10f64.powf((13.0 - 0.03 * d2d) / 10.0)
    } else {
        0.0
    }
}

/// Array geometry used by the isotropic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayLayout {
    Linear,
    /// Row-major square grid with `ceil(sqrt(n))` elements per row.
    SquareGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationModel {
    /// Gaussian local scattering around `nominal_angle` (radians from broadside) with
    /// angular standard deviation `angular_std` (radians), for a uniform linear array.
    UniformLinearScattering { nominal_angle: f64, angular_std: f64 },
    /// Isotropic 3D scattering: entry `(m, n) = sinc(2 d_mn / lambda)`.
    IsotropicSinc { layout: ArrayLayout },
}

/// Element coordinates in wavelengths.
pub fn element_positions(n: usize, spacing: f64, layout: ArrayLayout) -> Vec<(f64, f64)> {
    match layout {
        ArrayLayout::Linear => (0..n).map(|i| (i as f64 * spacing, 0.0)).collect(),
        ArrayLayout::SquareGrid => {
            let per_row = (n as f64).sqrt().ceil().max(1.0) as usize;
            (0..n)
                .map(|i| ((i % per_row) as f64 * spacing, (i / per_row) as f64 * spacing))
                .collect()
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Normalized (unit-diagonal) spatial correlation matrix, Hermitian and PSD.
pub fn spatial_correlation(n_elems: usize, spacing: f64, model: CorrelationModel) -> CMat {
    let raw = match model {
        CorrelationModel::UniformLinearScattering {
            nominal_angle,
            angular_std,
        } => CMat::from_fn(n_elems, n_elems, |m, n| {
            let dist = (m as f64 - n as f64) * spacing;
            let phase = 2.0 * PI * dist * nominal_angle.sin();
            let spread = 2.0 * PI * dist * nominal_angle.cos() * angular_std;
            cis(phase) * (-0.5 * spread * spread).exp()
        }),
        CorrelationModel::IsotropicSinc { layout } => {
            let pos = element_positions(n_elems, spacing, layout);
            CMat::from_fn(n_elems, n_elems, |m, n| {
                let d = (pos[m].0 - pos[n].0).hypot(pos[m].1 - pos[n].1);
                c(sinc(2.0 * d), 0.0)
            })
        }
    };
    let clipped = psd_clip(&hermitize(&raw));
    // Restore the exact unit diagonal after clipping.
    let mut out = clipped;
    for i in 0..n_elems {
        out[(i, i)] = c(1.0, 0.0);
    }
    out
}

/// ULA steering vector (half-wavelength spacing) for azimuth `az` from broadside and elevation `el`.
pub fn ula_response(n: usize, az: f64, el: f64) -> CVec {
    CVec::from_fn(n, |i, _| cis(PI * i as f64 * az.sin() * el.cos()))
}

/// Planar RIS response for a square grid in the vertical plane.
pub fn upa_response(n: usize, spacing: f64, az: f64, el: f64) -> CVec {
    let pos = element_positions(n, spacing, ArrayLayout::SquareGrid);
    CVec::from_fn(n, |i, _| {
        let (h, v) = pos[i];
        cis(2.0 * PI * (h * az.sin() * el.cos() + v * el.sin()))
    })
}

/// Large-scale description of one drawn network.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub ap_positions: Vec<Position>,
    pub ms_positions: Vec<Position>,
    pub ris_positions: Vec<Position>,
    /// L x K.
    pub los_ap_ms: DMatrix<bool>,
    /// R x K.
    pub los_ris_ms: DMatrix<bool>,
    /// R x L.
    pub los_ris_ap: DMatrix<bool>,
    pub beta_ap_ms: DMatrix<f64>,
    pub beta_ris_ms: DMatrix<f64>,
    pub beta_ris_ap: DMatrix<f64>,
    pub rice_ap_ms: DMatrix<f64>,
    pub rice_ris_ms: DMatrix<f64>,
    pub rice_ris_ap: DMatrix<f64>,
    pub noise_power: f64,
    pub area_side: f64,
    /// Links whose 3D distance was clamped to 1 m before evaluating the pathloss.
    pub clamped_links: usize,
}

impl Deployment {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }
    pub fn num_ms(&self) -> usize {
        self.ms_positions.len()
    }
    pub fn num_ris(&self) -> usize {
        self.ris_positions.len()
    }

    /// Number of APs with LoS towards each MS.
    pub fn los_ap_count(&self) -> Vec<usize> {
        (0..self.num_ms())
            .map(|k| (0..self.num_aps()).filter(|&l| self.los_ap_ms[(l, k)]).count())
            .collect()
    }

    /// Azimuth (from the x axis) and elevation of the direction `from -> to`, plus the 2D distance.
    pub fn link_geometry(&self, from: Position, to: Position) -> (f64, f64, f64) {
        let (dx, dy) = wrap_offset((from.x, from.y), (to.x, to.y), self.area_side);
        let d2d = dx.hypot(dy);
        (dy.atan2(dx), (to.z - from.z).atan2(d2d), d2d)
    }
}

struct LinkStats {
    los: bool,
    beta: f64,
    rice: f64,
    clamped: bool,
}

fn draw_link<R: Rng>(rng: &mut R, a: Position, b: Position, cfg: &SystemConfig) -> LinkStats {
    let d2d = wrap_distance((a.x, a.y), (b.x, b.y), cfg.area_side);
    let d3d = d2d.hypot(a.z - b.z);
    let los = rng.random::<f64>() < los_probability(d2d);
    LinkStats {
        los,
        beta: 10f64.powf(-pathloss_db(d3d, cfg.carrier_freq, los) / 10.0),
        rice: rice_factor(d2d, los),
        clamped: d3d < 1.0,
    }
}

fn uniform_position<R: Rng>(rng: &mut R, side: f64, height: f64) -> Position {
    Position::new(rng.random::<f64>() * side, rng.random::<f64>() * side, height)
}

/// Draws a deployment. AP/MS geometry and each RIS come from separate streams, so the
/// first `R` panels of a larger deployment coincide with a smaller one under the same seed.
pub fn generate_deployment(cfg: &SystemConfig, deployment_seed: u64) -> Deployment {
    let (l_n, k_n, r_n) = (cfg.num_aps, cfg.num_ms, cfg.num_ris);
    let mut rng = seed::stream(deployment_seed, &[STREAM_AP_MS]);
    let ap_positions: Vec<_> = (0..l_n)
        .map(|_| uniform_position(&mut rng, cfg.area_side, cfg.ap_height))
        .collect();
    let ms_positions: Vec<_> = (0..k_n)
        .map(|_| uniform_position(&mut rng, cfg.area_side, cfg.ms_height))
        .collect();

    let mut clamped = 0;
    let mut los_ap_ms = DMatrix::from_element(l_n, k_n, false);
    let mut beta_ap_ms = DMatrix::zeros(l_n, k_n);
    let mut rice_ap_ms = DMatrix::zeros(l_n, k_n);
    for l in 0..l_n {
        for k in 0..k_n {
            let s = draw_link(&mut rng, ap_positions[l], ms_positions[k], cfg);
            los_ap_ms[(l, k)] = s.los;
            beta_ap_ms[(l, k)] = s.beta;
            rice_ap_ms[(l, k)] = s.rice;
            clamped += s.clamped as usize;
        }
    }

    let mut ris_positions = Vec::with_capacity(r_n);
    let mut los_ris_ms = DMatrix::from_element(r_n, k_n, false);
    let mut beta_ris_ms = DMatrix::zeros(r_n, k_n);
    let mut rice_ris_ms = DMatrix::zeros(r_n, k_n);
    let mut los_ris_ap = DMatrix::from_element(r_n, l_n, false);
    let mut beta_ris_ap = DMatrix::zeros(r_n, l_n);
    let mut rice_ris_ap = DMatrix::zeros(r_n, l_n);
    for r in 0..r_n {
        let mut rng = seed::stream(deployment_seed, &[STREAM_RIS, r as u64]);
        let pos = uniform_position(&mut rng, cfg.area_side, cfg.ris_height);
        ris_positions.push(pos);
        for k in 0..k_n {
            let s = draw_link(&mut rng, pos, ms_positions[k], cfg);
            los_ris_ms[(r, k)] = s.los;
            beta_ris_ms[(r, k)] = s.beta;
            rice_ris_ms[(r, k)] = s.rice;
            clamped += s.clamped as usize;
        }
        for l in 0..l_n {
            let s = draw_link(&mut rng, pos, ap_positions[l], cfg);
            los_ris_ap[(r, l)] = s.los;
            beta_ris_ap[(r, l)] = s.beta;
            rice_ris_ap[(r, l)] = s.rice;
            clamped += s.clamped as usize;
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} link distances clamped to 1 m");
    }

    Deployment {
        ap_positions,
        ms_positions,
        ris_positions,
        los_ap_ms,
        los_ris_ms,
        los_ris_ap,
        beta_ap_ms,
        beta_ris_ms,
        beta_ris_ap,
        rice_ap_ms,
        rice_ris_ms,
        rice_ris_ap,
        noise_power: cfg.noise_power(),
        area_side: cfg.area_side,
        clamped_links: clamped,
    }
}

/// Splits a total gain into `(beta_los, beta_nlos)` for a Rice factor.
fn split_power(beta: f64, rice: f64) -> (f64, f64) {
    if rice.is_infinite() {
        return (beta, 0.0);
    }
    (beta * rice / (rice + 1.0), beta / (rice + 1.0))
}

/// Second-order statistics and LoS means of every link.
///
/// AP-side correlation matrices are stored scaled by the link's NLoS gain; the RIS panel
/// correlation is shared by all panels and stored normalized alongside per-link NLoS gains.
#[derive(Debug, Clone)]
pub struct CorrelationSet {
    pub ap_antennas: usize,
    pub ris_elements: usize,
    /// `R_w` per (k, l), NLoS part only: `trace = N_L * beta_nlos`.
    pub r_w: Vec<Vec<CMat>>,
    pub r_w_factor: Vec<Vec<CMat>>,
    /// `w_bar` per (k, l), norm^2 = `N_L * beta_los`.
    pub w_mean: Vec<Vec<CVec>>,
    /// Normalized RIS panel correlation and a factor of it.
    pub ris_corr: Arc<CMat>,
    pub ris_factor: Arc<CMat>,
    /// NLoS gain of `f_kr`, K x R.
    pub f_nlos: DMatrix<f64>,
    /// `f_bar` per (k, r).
    pub f_mean: Vec<Vec<CVec>>,
    /// Normalized AP-side (receive) correlation for `G_rl`, per (r, l), and its factor.
    pub g_rx: Vec<Vec<CMat>>,
    pub g_rx_factor: Vec<Vec<CMat>>,
    /// NLoS gain of `G_rl`, R x L.
    pub g_nlos: DMatrix<f64>,
    /// `G_bar` per (r, l), Frobenius norm^2 = `N_L * N_R * beta_los`.
    pub g_mean: Vec<Vec<CMat>>,
    /// Rank-one factors `(a, b)` with `g_mean[r][l] = a b^T`.
    pub g_mean_factors: Vec<Vec<(CVec, CVec)>>,
}

impl CorrelationSet {
    /// `R_f` for link (k, r): `beta_nlos * R_ris`.
    pub fn r_f(&self, k: usize, r: usize) -> CMat {
        &*self.ris_corr * c(self.f_nlos[(k, r)], 0.0)
    }

    /// Full second moment of `w_kl` under a uniformly random LoS phase.
    pub fn w_second_moment(&self, k: usize, l: usize) -> CMat {
        let m = &self.w_mean[k][l];
        &self.r_w[k][l] + m * m.adjoint()
    }
}

/// Normalized RIS panel correlation and a factor of it, memoized per (N_R, spacing).
fn ris_panel(n_r: usize, spacing: f64) -> (Arc<CMat>, Arc<CMat>) {
    type Panel = (Arc<CMat>, Arc<CMat>);
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Panel>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (n_r, spacing.to_bits());
    if let Some(hit) = cache.lock().expect("panel cache poisoned").get(&key) {
        return hit.clone();
    }
    let corr = if n_r > 0 {
        spatial_correlation(
            n_r,
            spacing,
            CorrelationModel::IsotropicSinc {
                layout: ArrayLayout::SquareGrid,
            },
        )
    } else {
        CMat::zeros(0, 0)
    };
    let factor = psd_factor(&corr);
    cache
        .lock()
        .expect("panel cache poisoned")
        .entry(key)
        .or_insert((Arc::new(corr), Arc::new(factor)))
        .clone()
}

/// Builds all correlation matrices and LoS means for a deployment.
pub fn build_correlation(cfg: &SystemConfig, dep: &Deployment) -> CorrelationSet {
    let (l_n, k_n, r_n) = (dep.num_aps(), dep.num_ms(), dep.num_ris());
    let n_l = cfg.ap_antennas;
    let n_r = cfg.ris_elements;
    let ang_std = cfg.ap_angular_std_deg.to_radians();

    let ap_corr = |az: f64| {
        spatial_correlation(
            n_l,
            0.5,
            CorrelationModel::UniformLinearScattering {
                nominal_angle: az,
                angular_std: ang_std,
            },
        )
    };

    let mut r_w = Vec::with_capacity(k_n);
    let mut r_w_factor = Vec::with_capacity(k_n);
    let mut w_mean = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let mut rows = Vec::with_capacity(l_n);
        let mut facs = Vec::with_capacity(l_n);
        let mut means = Vec::with_capacity(l_n);
        for l in 0..l_n {
            let (az, el, _) = dep.link_geometry(dep.ap_positions[l], dep.ms_positions[k]);
            let (b_los, b_nlos) = split_power(dep.beta_ap_ms[(l, k)], dep.rice_ap_ms[(l, k)]);
            let r = ap_corr(az) * c(b_nlos, 0.0);
            facs.push(psd_factor(&r));
            rows.push(r);
            means.push(ula_response(n_l, az, el) * c(b_los.sqrt(), 0.0));
        }
        r_w.push(rows);
        r_w_factor.push(facs);
        w_mean.push(means);
    }

    let (ris_corr, ris_factor) = ris_panel(n_r, cfg.ris_element_spacing);

    let mut f_nlos = DMatrix::zeros(k_n, r_n);
    let mut f_mean = vec![Vec::with_capacity(r_n); k_n];
    for k in 0..k_n {
        for r in 0..r_n {
            let (az, el, _) = dep.link_geometry(dep.ris_positions[r], dep.ms_positions[k]);
            let (b_los, b_nlos) = split_power(dep.beta_ris_ms[(r, k)], dep.rice_ris_ms[(r, k)]);
            f_nlos[(k, r)] = b_nlos;
            f_mean[k].push(upa_response(n_r, cfg.ris_element_spacing, az, el) * c(b_los.sqrt(), 0.0));
        }
    }

    let mut g_rx = Vec::with_capacity(r_n);
    let mut g_rx_factor = Vec::with_capacity(r_n);
    let mut g_nlos = DMatrix::zeros(r_n, l_n);
    let mut g_mean = Vec::with_capacity(r_n);
    let mut g_mean_factors = Vec::with_capacity(r_n);
    for r in 0..r_n {
        let mut rx = Vec::with_capacity(l_n);
        let mut rxf = Vec::with_capacity(l_n);
        let mut means = Vec::with_capacity(l_n);
        let mut factors = Vec::with_capacity(l_n);
        for l in 0..l_n {
            let (az_ap, el_ap, _) = dep.link_geometry(dep.ap_positions[l], dep.ris_positions[r]);
            let (az_ris, el_ris, _) = dep.link_geometry(dep.ris_positions[r], dep.ap_positions[l]);
            let (b_los, b_nlos) = split_power(dep.beta_ris_ap[(r, l)], dep.rice_ris_ap[(r, l)]);
            g_nlos[(r, l)] = b_nlos;
            let corr = ap_corr(az_ap);
            rxf.push(psd_factor(&corr));
            rx.push(corr);
            let a_ap = ula_response(n_l, az_ap, el_ap) * c(b_los.sqrt(), 0.0);
            let a_ris = upa_response(n_r, cfg.ris_element_spacing, az_ris, el_ris);
            means.push(&a_ap * a_ris.transpose());
            factors.push((a_ap, a_ris));
        }
        g_rx.push(rx);
        g_rx_factor.push(rxf);
        g_mean.push(means);
        g_mean_factors.push(factors);
    }

    CorrelationSet {
        ap_antennas: n_l,
        ris_elements: n_r,
        r_w,
        r_w_factor,
        w_mean,
        ris_corr,
        ris_factor,
        f_nlos,
        f_mean,
        g_rx,
        g_rx_factor,
        g_nlos,
        g_mean,
        g_mean_factors,
    }
}
