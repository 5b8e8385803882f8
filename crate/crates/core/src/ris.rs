//! RIS control: LoS-aware RIS-MS selection, per-element phase optimization, default
//! codebook patterns, subarray grouping and the five configuration methods.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::BlockChannels;
use crate::error::{Error, Result};
use crate::linalg::{c, cis, stack, wrap_phase, CMat, CVec};
use crate::scenario::Deployment;
use crate::seed;

const STREAM_CODEBOOK: u64 = 0xC0DE;
const STREAM_INIT: u64 = 0x1417;
const STREAM_RANDOM_MS: u64 = 0x4D53;

/// The five RIS configuration strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Method {
    /// LoS-aware RIS-MS assignment, one MS per RIS, per-MS optimization.
    LosAware = 1,
    /// Every RIS optimized for the sum over all MSs.
    AllMs = 2,
    /// A uniformly random MS per RIS, per-MS optimization.
    RandomMs = 3,
    /// Pseudo-random codebook only; no separation estimation.
    Codebook = 4,
    /// LoS-aware assignment with subarray (block) grouping.
    Grouped = 5,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::LosAware,
        Method::AllMs,
        Method::RandomMs,
        Method::Codebook,
        Method::Grouped,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Method {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == v)
            .ok_or_else(|| Error::Config(format!("unknown method id {v} (expected 1..=5)")))
    }
}

impl From<Method> for u8 {
    fn from(m: Method) -> u8 {
        m.id()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// RIS-to-MS association and the number of MSs each RIS must train for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub assigned_ms: Vec<Option<usize>>,
    /// `U_r`: MSs assisted by RIS `r` during separation training.
    pub assisted: Vec<usize>,
}

impl Assignment {
    pub fn unassigned(num_ris: usize) -> Self {
        Self {
            assigned_ms: vec![None; num_ris],
            assisted: vec![0; num_ris],
        }
    }

    /// `R_A`: RISs that take part in separation training.
    pub fn active_count(&self) -> usize {
        self.assisted.iter().filter(|&&u| u > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanSource {
    Optimized,
    Codebook,
}

/// Phase configuration of every RIS for one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPlan {
    /// Per-RIS phases in `[-pi, pi)`.
    pub theta: Vec<Vec<f64>>,
    /// Block size when phases are grouped.
    pub grouping: Option<usize>,
    pub source: Vec<PlanSource>,
}

impl RisPlan {
    pub fn empty() -> Self {
        Self {
            theta: Vec::new(),
            grouping: None,
            source: Vec::new(),
        }
    }

    /// All-zero phases (`Theta_r = I`).
    pub fn identity(num_ris: usize, n_r: usize) -> Self {
        Self {
            theta: vec![vec![0.0; n_r]; num_ris],
            grouping: None,
            source: vec![PlanSource::Codebook; num_ris],
        }
    }

    pub fn num_ris(&self) -> usize {
        self.theta.len()
    }

    /// Diagonal of `Theta_r`.
    pub fn phasors(&self, r: usize) -> CVec {
        CVec::from_iterator(self.theta[r].len(), self.theta[r].iter().map(|&t| cis(t)))
    }
}

/// Per-RIS pseudo-random default patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// `patterns[r][m]` is a phase vector of length `N_R`.
    pub patterns: Vec<Vec<Vec<f64>>>,
    pub hopping: bool,
}

impl Codebook {
    /// `size` uniform pseudo-random patterns per RIS. Each RIS has its own stream.
    pub fn pseudo_random(num_ris: usize, n_r: usize, size: usize, hopping: bool, seed_value: u64) -> Self {
        assert!(size >= 1, "codebook must hold at least one pattern");
        let patterns = (0..num_ris)
            .map(|r| {
                let mut rng = seed::stream(seed_value, &[STREAM_CODEBOOK, r as u64]);
                (0..size)
                    .map(|_| (0..n_r).map(|_| uniform_phase(&mut rng)).collect())
                    .collect()
            })
            .collect();
        Self { patterns, hopping }
    }

    pub fn size(&self) -> usize {
        self.patterns.first().map_or(0, |p| p.len())
    }

    /// Index of the pattern used by RIS `r` in block `block_index`.
    pub fn index(&self, r: usize, block_index: usize) -> usize {
        let m = self.patterns[r].len();
        if self.hopping {
            (r + block_index) % m
        } else {
            r % m
        }
    }
}

/// `Phi_r^(m_r)` for coherence block `block_index`.
pub fn default_pattern(codebook: &Codebook, r: usize, block_index: usize) -> Vec<f64> {
    codebook.patterns[r][codebook.index(r, block_index)].clone()
}

fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -PI + 2.0 * PI * rng.random::<f64>()
}

pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| uniform_phase(rng)).collect()
}

/// RIS-MS selection based on LoS connectivity.
///
/// MSs are visited in ascending order of their LoS-AP count (ties by index); each visit
/// claims every still-free RIS that sees the MS in LoS. RISs without LoS to any MS stay
/// unassigned and fall back to the codebook.
pub fn select_ris_ms(los_ap_ms: &nalgebra::DMatrix<bool>, los_ris_ms: &nalgebra::DMatrix<bool>) -> Assignment {
    let num_ris = los_ris_ms.nrows();
    let num_ms = los_ris_ms.ncols().max(los_ap_ms.ncols());
    let los_count = |k: usize| {
        if k < los_ap_ms.ncols() {
            los_ap_ms.column(k).iter().filter(|&&b| b).count()
        } else {
            0
        }
    };
    let mut order: Vec<usize> = (0..num_ms).collect();
    order.sort_by_key(|&k| (los_count(k), k));

    let mut out = Assignment::unassigned(num_ris);
    for &k in &order {
        if k >= los_ris_ms.ncols() {
            continue;
        }
        for r in 0..num_ris {
            if out.assigned_ms[r].is_none() && los_ris_ms[(r, k)] {
                out.assigned_ms[r] = Some(k);
                out.assisted[r] = 1;
            }
        }
    }
    out
}

/// Outcome of the per-element phase optimization.
#[derive(Debug, Clone)]
pub struct PhaseOptimization {
    pub theta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective after initialization followed by one entry per coordinate update.
    pub objective_trace: Vec<f64>,
}

/// `ln(1 + p ‖w + G diag(e^{j theta}) f‖^2)`.
pub fn phase_objective(direct: &CVec, f: &CVec, g: &CMat, p: f64, theta: &[f64]) -> f64 {
    let h = effective_channel(direct, f, g, theta);
    (p * h.norm_squared()).ln_1p()
}

pub fn effective_channel(direct: &CVec, f: &CVec, g: &CMat, theta: &[f64]) -> CVec {
    let mut h = direct.clone();
    for n in 0..f.len() {
        h.axpy(cis(theta[n]) * f[n], &g.column(n), c(1.0, 0.0));
    }
    h
}

/// Applies `A^{-1}` for `A = I + u1 u1^H + u2 u2^H` through the 2x2 Woodbury identity.
fn rank_two_inverse_apply(u1: &CVec, u2: &CVec, x: &CVec) -> CVec {
    let gram = Matrix2::new(
        c(1.0, 0.0) + u1.dotc(u1),
        u1.dotc(u2),
        u2.dotc(u1),
        c(1.0, 0.0) + u2.dotc(u2),
    );
    let proj = Vector2::new(u1.dotc(x), u2.dotc(x));
    let coeff = gram
        .try_inverse()
        .map(|inv| inv * proj)
        .unwrap_or_else(|| Vector2::new(Complex64::default(), Complex64::default()));
    let mut out = x.clone();
    out.axpy(-coeff[0], u1, c(1.0, 0.0));
    out.axpy(-coeff[1], u2, c(1.0, 0.0));
    out
}

/// The coordinate update for element `n`: `-arg(b^H A^{-1} g)` with
/// `b = p c f_n^*`, `A = I + p c c^H + p |f_n|^2 g g^H`, where `c` is the effective channel
/// without element `n`. Returns `None` when the element's phase does not affect the objective.
pub fn element_update(rest: &CVec, g_n: &CVec, f_n: Complex64, p: f64) -> Option<f64> {
    let sp = p.sqrt();
    let u1 = rest * c(sp, 0.0);
    let u2 = g_n * (f_n * sp);
    let a_inv_g = rank_two_inverse_apply(&u1, &u2, g_n);
    let b = rest * (f_n.conj() * p);
    let z = b.dotc(&a_inv_g);
    let scale = p * rest.norm() * g_n.norm() * f_n.norm();
    if z.norm() <= 1e-14 * scale.max(f64::MIN_POSITIVE) || z.norm() == 0.0 {
        return None;
    }
    Some(wrap_phase(-z.arg()))
}

/// Sequential per-element phase optimization for one RIS serving one MS.
///
/// `direct` is the stacked direct channel `w_k` (length `M = L N_L`), `f` the MS-RIS
/// channel and `g` the stacked RIS-AP matrix (`M x N_R`). Stops after `sweeps` passes
/// or when the largest phase change within a pass falls below `tol`.
pub fn optimize_phases(
    direct: &CVec,
    f: &CVec,
    g: &CMat,
    p: f64,
    init: &[f64],
    sweeps: usize,
    tol: f64,
) -> Result<PhaseOptimization> {
    let n_r = f.len();
    if g.ncols() != n_r || g.nrows() != direct.len() || init.len() != n_r {
        return Err(Error::Dimension(format!(
            "phase optimization: w {} x1, G {}x{}, f {}, init {}",
            direct.len(),
            g.nrows(),
            g.ncols(),
            n_r,
            init.len()
        )));
    }
    let mut theta: Vec<f64> = init.iter().map(|&t| wrap_phase(t)).collect();
    let paths: Vec<CVec> = (0..n_r).map(|n| g.column(n) * f[n]).collect();
    let mut h = effective_channel(direct, f, g, &theta);
    let objective = |h: &CVec| (p * h.norm_squared()).ln_1p();
    let mut trace = vec![objective(&h)];

    let mut converged = false;
    let mut done = 0;
    for _ in 0..sweeps {
        done += 1;
        let mut max_change = 0.0_f64;
        for n in 0..n_r {
            let old = cis(theta[n]);
            let rest = &h - &paths[n] * old;
            let g_n = g.column(n).into_owned();
            if let Some(new_theta) = element_update(&rest, &g_n, f[n], p) {
                max_change = max_change.max(wrap_phase(new_theta - theta[n]).abs());
                theta[n] = new_theta;
                h = rest + &paths[n] * cis(new_theta);
            }
            trace.push(objective(&h));
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("phase optimization used its full budget of {sweeps} sweeps");
    }
    Ok(PhaseOptimization {
        theta,
        sweeps: done,
        converged,
        objective_trace: trace,
    })
}

/// Number of separation states for a panel of `n_r` elements trained in blocks of
/// `block_size`: `1 + n_r / block_size`.
pub fn separation_states(n_r: usize, block_size: usize) -> Result<usize> {
    check_block_size(n_r, block_size)?;
    Ok(1 + n_r / block_size)
}

fn check_block_size(n_r: usize, block_size: usize) -> Result<()> {
    if block_size == 0 || !n_r.is_multiple_of(block_size) {
        return Err(Error::Config(format!(
            "block size {block_size} does not divide N_R = {n_r}"
        )));
    }
    Ok(())
}

/// Broadcasts one phase per block (the block's first element) over the whole block.
pub fn group_blocks(theta: &[f64], block_size: usize) -> Result<Vec<f64>> {
    check_block_size(theta.len(), block_size)?;
    Ok(theta
        .chunks(block_size)
        .flat_map(|blk| std::iter::repeat_n(blk[0], block_size))
        .collect())
}

pub fn expand_blocks(block_phases: &[f64], block_size: usize) -> Vec<f64> {
    block_phases
        .iter()
        .flat_map(|&t| std::iter::repeat_n(t, block_size))
        .collect()
}

/// Per-block composite cascaded channels `sum_{n in block} g_n f_n`, as columns.
pub fn composite_channels(f: &CVec, g: &CMat, block_size: usize) -> Result<CMat> {
    check_block_size(f.len(), block_size)?;
    let n_b = f.len() / block_size;
    let mut out = CMat::zeros(g.nrows(), n_b);
    for n in 0..f.len() {
        let mut col = out.column_mut(n / block_size);
        col.axpy(f[n], &g.column(n), c(1.0, 0.0));
    }
    Ok(out)
}

/// Phase optimization with `N_R / block_size` free phases, each shared by one block.
pub fn optimize_grouped(
    direct: &CVec,
    f: &CVec,
    g: &CMat,
    p: f64,
    block_size: usize,
    init_blocks: &[f64],
    sweeps: usize,
    tol: f64,
) -> Result<PhaseOptimization> {
    let composite = composite_channels(f, g, block_size)?;
    let ones = CVec::from_element(composite.ncols(), c(1.0, 0.0));
    let mut out = optimize_phases(direct, &ones, &composite, p, init_blocks, sweeps, tol)?;
    out.theta = expand_blocks(&out.theta, block_size);
    Ok(out)
}

/// `sum_k ln(1 + p ‖w_k + G Theta f_k‖^2)`.
pub fn sum_objective(directs: &[CVec], fs: &[CVec], g: &CMat, p: f64, theta: &[f64]) -> f64 {
    directs
        .iter()
        .zip(fs)
        .map(|(w, f)| phase_objective(w, f, g, p, theta))
        .sum()
}

/// Multi-MS coordinate ascent: each element picks the best of `grid` uniformly spaced
/// phases for the sum objective, keeping its current phase unless a grid point is better.
pub fn optimize_phases_sum(
    directs: &[CVec],
    fs: &[CVec],
    g: &CMat,
    p: f64,
    init: &[f64],
    sweeps: usize,
    tol: f64,
    grid: usize,
) -> Result<PhaseOptimization> {
    let n_r = g.ncols();
    if directs.len() != fs.len() || fs.iter().any(|f| f.len() != n_r) || init.len() != n_r {
        return Err(Error::Dimension("multi-MS phase optimization".into()));
    }
    let mut theta: Vec<f64> = init.iter().map(|&t| wrap_phase(t)).collect();
    let mut hs: Vec<CVec> = directs
        .iter()
        .zip(fs)
        .map(|(w, f)| effective_channel(w, f, g, &theta))
        .collect();
    let total = |hs: &[CVec]| hs.iter().map(|h| (p * h.norm_squared()).ln_1p()).sum::<f64>();
    let mut trace = vec![total(&hs)];
    let grid_phases: Vec<f64> = (0..grid).map(|j| -PI + 2.0 * PI * j as f64 / grid as f64).collect();

    let mut converged = false;
    let mut done = 0;
    for _ in 0..sweeps {
        done += 1;
        let mut max_change = 0.0_f64;
        for n in 0..n_r {
            let old = cis(theta[n]);
            // Per MS: ‖rest‖^2, ‖path‖^2 and rest^H path.
            let parts: Vec<(CVec, CVec, f64, f64, Complex64)> = hs
                .iter()
                .zip(fs)
                .map(|(h, f)| {
                    let path = g.column(n) * f[n];
                    let rest = h - &path * old;
                    let (a, b, s) = (rest.norm_squared(), path.norm_squared(), rest.dotc(&path));
                    (rest, path, a, b, s)
                })
                .collect();
            let eval = |t: f64| {
                let e = cis(t);
                parts
                    .iter()
                    .map(|(_, _, a, b, s)| (p * (a + b + 2.0 * (e * s).re).max(0.0)).ln_1p())
                    .sum::<f64>()
            };
            let mut best = (eval(theta[n]), theta[n]);
            for &t in &grid_phases {
                let v = eval(t);
                if v > best.0 {
                    best = (v, t);
                }
            }
            if best.1 != theta[n] {
                max_change = max_change.max(wrap_phase(best.1 - theta[n]).abs());
                theta[n] = best.1;
                let e = cis(best.1);
                for (h, (rest, path, ..)) in hs.iter_mut().zip(&parts) {
                    *h = rest + path * e;
                }
            }
            trace.push(total(&hs));
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    Ok(PhaseOptimization {
        theta,
        sweeps: done,
        converged,
        objective_trace: trace,
    })
}

/// Knobs of the RIS controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisSettings {
    pub sweeps: usize,
    pub tol: f64,
    pub codebook_size: usize,
    pub hopping: bool,
    /// Elements per block for the grouped method.
    pub block_size: usize,
    /// Phase grid used by the multi-MS method.
    pub grid_points: usize,
}

impl Default for RisSettings {
    fn default() -> Self {
        Self {
            sweeps: 5,
            tol: 1e-4,
            codebook_size: 8,
            hopping: true,
            block_size: 16,
            grid_points: 64,
        }
    }
}

/// Everything `configure` needs besides the channels.
pub struct ConfigureContext<'a> {
    pub settings: &'a RisSettings,
    pub codebook: &'a Codebook,
    pub block_index: usize,
    /// Seed for the random initial phases of this block.
    pub block_seed: u64,
    /// Seed for per-deployment random choices (MS draw of the random method).
    pub deployment_seed: u64,
    /// Normalized SNR `p_k / sigma^2`.
    pub snr: f64,
}

/// Stacked `G_r = [G_r1; ...; G_rL]`.
pub fn stacked_ris_ap(block: &BlockChannels, r: usize) -> CMat {
    let parts = &block.g[r];
    let n_l = parts.first().map_or(0, |m| m.nrows());
    let n_r = parts.first().map_or(0, |m| m.ncols());
    let mut out = CMat::zeros(n_l * parts.len(), n_r);
    for (l, m) in parts.iter().enumerate() {
        out.view_mut((l * n_l, 0), (n_l, n_r)).copy_from(m);
    }
    out
}

/// Stacked direct channel `w_k`.
pub fn stacked_direct(block: &BlockChannels, k: usize) -> CVec {
    stack(&block.w[k])
}

/// RIS-to-MS assignment of `method`; fixed for the whole deployment.
pub fn assignment(method: Method, deployment: &Deployment, deployment_seed: u64) -> Assignment {
    let num_ris = deployment.num_ris();
    let num_ms = deployment.num_ms();
    match method {
        Method::LosAware | Method::Grouped => select_ris_ms(&deployment.los_ap_ms, &deployment.los_ris_ms),
        Method::AllMs => Assignment {
            assigned_ms: vec![None; num_ris],
            assisted: vec![num_ms; num_ris],
        },
        Method::RandomMs => {
            let mut rng = seed::stream(deployment_seed, &[STREAM_RANDOM_MS]);
            let mut a = Assignment::unassigned(num_ris);
            if num_ms > 0 {
                for r in 0..num_ris {
                    a.assigned_ms[r] = Some(rng.random_range(0..num_ms));
                    a.assisted[r] = 1;
                }
            }
            a
        }
        Method::Codebook => Assignment::unassigned(num_ris),
    }
}

/// Configures every RIS for one coherence block under `method`.
pub fn configure(
    method: Method,
    deployment: &Deployment,
    block: &BlockChannels,
    ctx: &ConfigureContext<'_>,
) -> Result<(RisPlan, Assignment)> {
    let num_ris = deployment.num_ris();
    let num_ms = deployment.num_ms();
    let n_r = block.ris_elements();
    let s = ctx.settings;
    let codebook_plan = |r: usize| default_pattern(ctx.codebook, r, ctx.block_index);
    let init = |r: usize, n: usize| random_phases(&mut seed::stream(ctx.block_seed, &[STREAM_INIT, r as u64]), n);

    let single = |r: usize, k: usize, grouped: bool| -> Result<Vec<f64>> {
        let w = stacked_direct(block, k);
        let g = stacked_ris_ap(block, r);
        let f = &block.f[k][r];
        if grouped {
            let n_b = n_r / s.block_size.max(1);
            optimize_grouped(&w, f, &g, ctx.snr, s.block_size, &init(r, n_b), s.sweeps, s.tol).map(|o| o.theta)
        } else {
            optimize_phases(&w, f, &g, ctx.snr, &init(r, n_r), s.sweeps, s.tol).map(|o| o.theta)
        }
    };

    let assignment = assignment(method, deployment, ctx.deployment_seed);

    if method == Method::Grouped {
        check_block_size(n_r, s.block_size)?;
    }

    let mut plan = RisPlan {
        theta: Vec::with_capacity(num_ris),
        grouping: (method == Method::Grouped).then_some(s.block_size),
        source: Vec::with_capacity(num_ris),
    };
    for r in 0..num_ris {
        let (theta, src) = match (method, assignment.assigned_ms[r]) {
            (Method::AllMs, _) if num_ms > 0 => {
                let directs: Vec<CVec> = (0..num_ms).map(|k| stacked_direct(block, k)).collect();
                let fs: Vec<CVec> = (0..num_ms).map(|k| block.f[k][r].clone()).collect();
                let g = stacked_ris_ap(block, r);
                let o = optimize_phases_sum(&directs, &fs, &g, ctx.snr, &init(r, n_r), s.sweeps, s.tol, s.grid_points)?;
                (o.theta, PlanSource::Optimized)
            }
            (Method::Codebook, _) | (_, None) => (codebook_plan(r), PlanSource::Codebook),
            (m, Some(k)) => (single(r, k, m == Method::Grouped)?, PlanSource::Optimized),
        };
        plan.theta.push(theta);
        plan.source.push(src);
    }
    Ok((plan, assignment))
}

/// Separation states charged per assisted MS for a method: `N_B` when grouped, else `N_R`.
pub fn states_per_ris(method: Method, n_r: usize, settings: &RisSettings) -> Result<usize> {
    match method {
        Method::Grouped => Ok(separation_states(n_r, settings.block_size)? - 1),
        _ => Ok(n_r),
    }
}
