//! Monte Carlo campaigns over sweep points, deployments and coherence blocks.

use std::ops::AddAssign;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Band, CampaignSpec, CovarianceMode};
use crate::channels::{aggregate_channels, analytic_covariance, draw_block_channels, effective_covariance};
use crate::combining::{build_association, instantaneous_sinr, pmmse_combine, spectral_efficiency};
use crate::error::{Error, Result};
use crate::estimation::{mmse_estimate, pilot_plan, PilotPlan};
use crate::ris::{self, Codebook, ConfigureContext, Method};
use crate::scenario::{build_correlation, generate_deployment};
use crate::seed::derive_seed;

const SEED_DEPLOYMENT: u64 = 0xD0;
const SEED_BLOCK: u64 = 0xB1;
const SEED_CODEBOOK: u64 = 0xCB;
const SEED_NOISE: u64 = 0x4E;
const SEED_COVARIANCE: u64 = 0xC0;

pub const CSV_HEADER: &str = "freq_hz,method,R,N_R,deployment,ms,se_bps_hz,is_sum,prelog,R_A,status";

/// One output line. `ms` is empty on the per-deployment sum row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub freq_hz: f64,
    pub method: u8,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "N_R")]
    pub n_r: usize,
    pub deployment: usize,
    pub ms: Option<usize>,
    pub se_bps_hz: f64,
    pub is_sum: u8,
    pub prelog: f64,
    #[serde(rename = "R_A")]
    pub r_a: usize,
    pub status: RowStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Infeasible,
}

/// (band, R, method) triple of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub band: Band,
    pub num_ris: usize,
    pub method: Method,
}

/// Sweep points in output order: band, then R, then method.
pub fn sweep_points(spec: &CampaignSpec) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for band in spec.bands() {
        for &num_ris in &spec.sweep.r_values {
            for &method in &spec.sweep.methods {
                out.push(SweepPoint { band, num_ris, method });
            }
        }
    }
    out
}

/// Wall time spent per stage, summed over work units.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub deployment: Duration,
    pub configure: Duration,
    pub covariance: Duration,
    pub estimation: Duration,
    pub combining: Duration,
}

impl AddAssign for StageTimes {
    fn add_assign(&mut self, o: Self) {
        self.deployment += o.deployment;
        self.configure += o.configure;
        self.covariance += o.covariance;
        self.estimation += o.estimation;
        self.combining += o.combining;
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub rows: Vec<ResultRow>,
    pub times: StageTimes,
    pub wall: Duration,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

fn timed<T>(acc: &mut Duration, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *acc += t.elapsed();
    out
}

/// Seed of deployment `d`, shared by every sweep point.
pub fn deployment_seed(master: u64, d: usize) -> u64 {
    derive_seed(master, &[SEED_DEPLOYMENT, d as u64])
}

fn rows_for(point: &SweepPoint, d: usize, plan: &PilotPlan, r_a: usize, se: Option<(&[f64], f64)>) -> Vec<ResultRow> {
    let base = ResultRow {
        freq_hz: point.band.freq_hz,
        method: point.method.id(),
        r: point.num_ris,
        n_r: point.band.n_r,
        deployment: d,
        ms: None,
        se_bps_hz: 0.0,
        is_sum: 0,
        prelog: plan.prelog().max(0.0),
        r_a,
        status: if se.is_some() { RowStatus::Ok } else { RowStatus::Infeasible },
    };
    let k_n = plan.pilot_sets.len();
    let mut rows: Vec<ResultRow> = (0..k_n)
        .map(|k| ResultRow {
            ms: Some(k),
            se_bps_hz: se.map_or(0.0, |(per_ms, _)| per_ms[k]),
            ..base.clone()
        })
        .collect();
    rows.push(ResultRow {
        se_bps_hz: se.map_or(0.0, |(_, sum)| sum),
        is_sum: 1,
        ..base
    });
    rows
}

/// Runs every block of one deployment at one sweep point.
pub fn run_unit(spec: &CampaignSpec, point: &SweepPoint, d: usize) -> Result<(Vec<ResultRow>, StageTimes)> {
    let mut times = StageTimes::default();
    let cfg = spec.point_config(point.band, point.num_ris);
    let dep_seed = deployment_seed(cfg.master_seed, d);
    let (dep, corr) = timed(&mut times.deployment, || {
        let dep = generate_deployment(&cfg, dep_seed);
        let corr = build_correlation(&cfg, &dep);
        (dep, corr)
    });

    let assignment = ris::assignment(point.method, &dep, dep_seed);
    let states = ris::states_per_ris(point.method, cfg.ris_elements, &spec.ris)?;
    let plan = match pilot_plan(point.method, cfg.num_ms, &assignment, states, cfg.tau_c) {
        Ok(p) => p,
        Err(Error::InfeasiblePlan { .. }) => {
            let plan = PilotPlan::unchecked(point.method, cfg.num_ms, &assignment, states, cfg.tau_c);
            log::warn!(
                "method {} at R = {}, deployment {d}: tau_p = {} >= tau_c = {}",
                point.method,
                point.num_ris,
                plan.tau_p(),
                cfg.tau_c
            );
            return Ok((rows_for(point, d, &plan, assignment.active_count(), None), times));
        }
        Err(e) => return Err(e),
    };

    let codebook = Codebook::pseudo_random(
        cfg.num_ris,
        cfg.ris_elements,
        spec.ris.codebook_size,
        spec.ris.hopping,
        derive_seed(dep_seed, &[SEED_CODEBOOK]),
    );
    let assoc = build_association(&dep, spec.association)?;
    let powers = vec![cfg.data_power; cfg.num_ms];
    let noise = dep.noise_power;

    let mut sinr = Vec::with_capacity(spec.sweep.n_blocks);
    for b in 0..spec.sweep.n_blocks {
        let block_seed = derive_seed(dep_seed, &[SEED_BLOCK, b as u64]);
        let block = draw_block_channels(&dep, &corr, block_seed);
        let ctx = ConfigureContext {
            settings: &spec.ris,
            codebook: &codebook,
            block_index: b,
            block_seed,
            deployment_seed: dep_seed,
            snr: cfg.data_power / noise,
        };
        let (ris_plan, _) = timed(&mut times.configure, || ris::configure(point.method, &dep, &block, &ctx))?;
        let truth = aggregate_channels(&block, &ris_plan)?;
        let stats = timed(&mut times.covariance, || match spec.estimation.covariance {
            CovarianceMode::Analytic => analytic_covariance(&corr, &ris_plan),
            CovarianceMode::Sampled => effective_covariance(
                &dep,
                &corr,
                &ris_plan,
                spec.estimation.n_cov,
                derive_seed(block_seed, &[SEED_COVARIANCE]),
            ),
        })?;
        let est = timed(&mut times.estimation, || {
            mmse_estimate(&truth, &stats, &plan, cfg.pilot_power, noise, derive_seed(block_seed, &[SEED_NOISE]))
        })?;
        let s = timed(&mut times.combining, || {
            let comb = pmmse_combine(&est, &assoc, &powers, noise)?;
            instantaneous_sinr(&comb, &est, &assoc, &powers, noise)
        })?;
        sinr.push(s);
    }
    let se = spectral_efficiency(sinr, &plan)?;
    Ok((
        rows_for(point, d, &plan, assignment.active_count(), Some((&se.per_ms, se.sum))),
        times,
    ))
}

/// Runs the whole campaign. Rows come out in sweep order regardless of scheduling.
pub fn run_campaign(spec: &CampaignSpec, opts: RunOptions) -> Result<CampaignOutput> {
    spec.validate()?;
    let start = Instant::now();
    let points = sweep_points(spec);
    let units: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.sweep.n_deployments).map(move |d| (p, d)))
        .collect();
    log::info!("{} sweep points x {} deployments", points.len(), spec.sweep.n_deployments);

    let work = || {
        units
            .par_iter()
            .map(|&(p, d)| run_unit(spec, &points[p], d))
            .collect::<Vec<_>>()
    };
    let results = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut rows = Vec::new();
    let mut times = StageTimes::default();
    for r in results {
        let (unit_rows, t) = r?;
        rows.extend(unit_rows);
        times += t;
    }
    Ok(CampaignOutput {
        rows,
        times,
        wall: start.elapsed(),
    })
}

pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn read_csv_file(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Sum rows matching one sweep point, in deployment order.
pub fn sum_se(rows: &[ResultRow], method: Method, num_ris: usize) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.is_sum == 1 && r.method == method.id() && r.r == num_ris)
        .map(|r| r.se_bps_hz)
        .collect()
}

/// Per-MS SE samples of one sweep point.
pub fn per_ms_se(rows: &[ResultRow], method: Method, num_ris: usize) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.is_sum == 0 && r.method == method.id() && r.r == num_ris)
        .map(|r| r.se_bps_hz)
        .collect()
}
