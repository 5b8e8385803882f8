//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line before asserting.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riscf::channels::{analytic_covariance, AggregatedChannel, EffectiveStats};
use riscf::combining::{instantaneous_sinr, pmmse_combine, Association, Combiner};
use riscf::estimation::{error_covariance, mmse_estimate, pilot_plan, ChannelEstimate, PilotPlan};
use riscf::harness::{mean, percentile, per_ms_se, run_campaign, sum_se, CampaignSpec, Preset, ResultRow, RunOptions};
use riscf::linalg::{c, cis, complex_normal, complex_normal_vec, frobenius_rel, psd_factor, CMat, CVec};
use riscf::ris::{
    self, configure, default_pattern, element_update, optimize_phases, phase_objective, select_ris_ms,
    separation_states, Assignment, Codebook, ConfigureContext, Method, PlanSource, RisPlan, RisSettings,
};
use riscf::scenario::{build_correlation, generate_deployment, SystemConfig};

fn report(name: &str, ok: bool, elapsed: Duration, limit: Duration, detail: &str) {
    let ok_time = elapsed <= limit;
    let verdict = if ok && ok_time { "PASS" } else { "FAIL" };
    println!(
        "{verdict} {name}: {detail} [{:.2} s, limit {} s]",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    assert!(ok, "{name}: {detail}");
    assert!(ok_time, "{name}: runtime {:.2} s over {} s", elapsed.as_secs_f64(), limit.as_secs());
}

fn assisted(active: usize) -> Assignment {
    let mut a = Assignment::unassigned(active);
    for r in 0..active {
        a.assigned_ms[r] = Some(0);
        a.assisted[r] = 1;
    }
    a
}

#[test]
fn overhead_exactness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = rng.random_range(1..=40);
        let r_a = rng.random_range(0..=40);
        let n_r = rng.random_range(1..=1024);
        let tau_c = k + r_a * (1 + n_r) + rng.random_range(1..=1000);
        let plan = pilot_plan(Method::LosAware, k, &assisted(r_a), n_r, tau_c).unwrap();
        if plan.tau_p() != k + r_a * (1 + n_r) || plan.tau_p2 != k {
            mismatches += 1;
        }
    }
    let plan = pilot_plan(Method::LosAware, 10, &assisted(20), 64, 20_000).unwrap();
    let ok = mismatches == 0 && plan.tau_p() == 1310 && (plan.prelog() - 0.9345).abs() < 1e-15;
    report(
        "overhead exactness",
        ok,
        t.elapsed(),
        Duration::from_secs(1),
        &format!("{mismatches} mismatches over 1000 triples; tau_p = {}, prelog = {}", plan.tau_p(), plan.prelog()),
    );
}

#[test]
fn subarray_states() {
    let t = Instant::now();
    let states: Vec<usize> = [4, 16, 64].iter().map(|&b| separation_states(64, b).unwrap()).collect();
    let settings = RisSettings {
        block_size: 16,
        ..RisSettings::default()
    };
    let per_ris = ris::states_per_ris(Method::Grouped, 64, &settings).unwrap();
    let ok = states == vec![17, 5, 2] && per_ris + 1 == 5;
    report(
        "subarray states",
        ok,
        t.elapsed(),
        Duration::from_secs(1),
        &format!("N_R = 64, blocks {{4,16,64}} -> {states:?}"),
    );
}

#[test]
fn mmse_sanity() {
    let t = Instant::now();
    let cfg = SystemConfig::default();
    let dep = generate_deployment(&cfg, 21);
    let corr = build_correlation(&cfg, &dep);
    let plan_ris = RisPlan::identity(cfg.num_ris, cfg.ris_elements);
    let stats = analytic_covariance(&corr, &plan_ris).unwrap();
    // Strongest link of MS 0.
    let l = (0..cfg.num_aps)
        .max_by(|&a, &b| stats.r_eff[0][a].trace().re.total_cmp(&stats.r_eff[0][b].trace().re))
        .unwrap();
    let r = stats.r_eff[0][l].clone();
    let single = EffectiveStats {
        r_eff: vec![vec![r.clone()]],
        sample_count: 0,
    };
    let plan = PilotPlan::unchecked(Method::Codebook, 1, &Assignment::unassigned(0), 0, cfg.tau_c);
    let factor = psd_factor(&r);
    let mut rng = ChaCha8Rng::seed_from_u64(22);

    let h = &factor * complex_normal_vec(&mut rng, cfg.ap_antennas);
    let truth = AggregatedChannel { h: vec![vec![h.clone()]] };
    let est = mmse_estimate(&truth, &single, &plan, cfg.pilot_power, 0.0, 1).unwrap();
    let noiseless_err = (&est.h_hat[0][0] - &h).norm() / h.norm();

    let noise = dep.noise_power;
    let closed = error_covariance(&single, &plan, cfg.pilot_power, noise).unwrap()[0][0].clone();
    let draws = 10_000;
    let mut sample = CMat::zeros(r.nrows(), r.nrows());
    for i in 0..draws {
        let h = &factor * complex_normal_vec(&mut rng, cfg.ap_antennas);
        let truth = AggregatedChannel { h: vec![vec![h.clone()]] };
        let est = mmse_estimate(&truth, &single, &plan, cfg.pilot_power, noise, 1000 + i as u64).unwrap();
        let e = h - &est.h_hat[0][0];
        sample.gerc(c(1.0 / draws as f64, 0.0), &e, &e, c(1.0, 0.0));
    }
    let mc_err = frobenius_rel(&sample, &closed);
    report(
        "MMSE sanity",
        noiseless_err < 1e-9 && mc_err < 0.03,
        t.elapsed(),
        Duration::from_secs(30),
        &format!("noiseless relative error {noiseless_err:.2e}; Monte Carlo error covariance deviation {:.2}%", 100.0 * mc_err),
    );
}

fn random_estimate(rng: &mut ChaCha8Rng, k_n: usize, l_n: usize, n_l: usize) -> ChannelEstimate {
    let h_hat = (0..k_n)
        .map(|_| (0..l_n).map(|_| complex_normal_vec(rng, n_l)).collect())
        .collect();
    let c_mats = (0..k_n)
        .map(|_| {
            (0..l_n)
                .map(|_| {
                    let x = CMat::from_fn(n_l, n_l, |_, _| complex_normal(rng) * 0.5);
                    &x * x.adjoint()
                })
                .collect()
        })
        .collect();
    ChannelEstimate {
        h_hat,
        c: c_mats,
        gamma: Vec::new(),
    }
}

fn mmse_oracle(est: &ChannelEstimate, powers: &[f64], noise: f64) -> Vec<CVec> {
    let k_n = est.num_ms();
    let dim = est.stacked(0).len();
    let mut a = CMat::identity(dim, dim) * c(noise, 0.0);
    for i in 0..k_n {
        let h = est.stacked(i);
        a += (&h * h.adjoint() + est.stacked_error(i)) * c(powers[i], 0.0);
    }
    let inv = a.try_inverse().unwrap();
    (0..k_n).map(|k| &inv * est.stacked(k) * c(powers[k], 0.0)).collect()
}

#[test]
fn pmmse_mmse_equivalence() {
    let t = Instant::now();
    let (l_n, n_l, k_n) = (2, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let full = Association::all_serve_all(k_n, l_n);
    let mut worst_dev = 0.0_f64;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..100 {
        let est = random_estimate(&mut rng, k_n, l_n, n_l);
        let powers: Vec<f64> = (0..k_n).map(|_| rng.random_range(0.05..1.0)).collect();
        let noise = rng.random_range(0.01..1.0);
        let pm = pmmse_combine(&est, &full, &powers, noise).unwrap();
        let oracle = mmse_oracle(&est, &powers, noise);
        for k in 0..k_n {
            worst_dev = worst_dev.max((&pm.v[k] - &oracle[k]).norm() / oracle[k].norm());
        }
        let mmse_sinr = instantaneous_sinr(&Combiner { v: oracle }, &est, &full, &powers, noise).unwrap();

        // Random clusters: each MS served by a nonempty AP subset.
        let serving: Vec<Vec<bool>> = (0..k_n)
            .map(|_| {
                let keep = rng.random_range(0..l_n);
                (0..l_n).map(|l| l == keep || rng.random_bool(0.5)).collect()
            })
            .collect();
        for assoc in [full.clone(), Association::from_serving(serving)] {
            let comb = pmmse_combine(&est, &assoc, &powers, noise).unwrap();
            let sinr = instantaneous_sinr(&comb, &est, &assoc, &powers, noise).unwrap();
            for k in 0..k_n {
                worst_gap = worst_gap.max((sinr[k] - mmse_sinr[k]) / mmse_sinr[k]);
            }
        }
    }
    report(
        "P-MMSE/MMSE equivalence",
        worst_dev < 1e-9 && worst_gap <= 1e-12,
        t.elapsed(),
        Duration::from_secs(10),
        &format!("max combiner deviation {worst_dev:.2e}; max relative SINR excess of P-MMSE over MMSE {worst_gap:.2e}"),
    );
}

fn random_phase_instance(rng: &mut ChaCha8Rng, m: usize, n_r: usize) -> (CVec, CVec, CMat, f64) {
    let w = complex_normal_vec(rng, m) * c(rng.random_range(0.1..2.0), 0.0);
    let f = complex_normal_vec(rng, n_r);
    let g = CMat::from_fn(m, n_r, |_, _| complex_normal(rng) * 0.5);
    (w, f, g, rng.random_range(0.1..10.0))
}

#[test]
fn phase_update_properties() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(40);

    let mut worst_drop = 0.0_f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=6);
        let n_r = rng.random_range(1..=16);
        let (w, f, g, p) = random_phase_instance(&mut rng, m, n_r);
        let init: Vec<f64> = (0..n_r).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let out = optimize_phases(&w, &f, &g, p, &init, 5, 0.0).unwrap();
        for pair in out.objective_trace.windows(2) {
            worst_drop = worst_drop.max(pair[0] - pair[1]);
        }
    }

    let mut worst_scalar = 0.0_f64;
    for _ in 0..100 {
        let n_r = rng.random_range(2..=8);
        let w = complex_normal(&mut rng);
        let g: Vec<_> = (0..n_r).map(|_| complex_normal(&mut rng)).collect();
        let f: Vec<_> = (0..n_r).map(|_| complex_normal(&mut rng)).collect();
        let theta: Vec<f64> = (0..n_r).map(|_| rng.random_range(-3.0..3.0)).collect();
        let n = rng.random_range(0..n_r);
        let rest = w + (0..n_r).filter(|&m| m != n).map(|m| g[m] * cis(theta[m]) * f[m]).sum::<num_complex::Complex64>();
        let expect = rest.arg() - (g[n] * f[n]).arg();
        let got = element_update(&CVec::from_element(1, rest), &CVec::from_element(1, g[n]), f[n], 1.7).unwrap();
        let diff = (cis(got) - cis(expect)).norm();
        worst_scalar = worst_scalar.max(diff);
    }

    let mut worst_grid = 0.0_f64;
    for _ in 0..100 {
        let (w, f, g, p) = random_phase_instance(&mut rng, 4, 4);
        let init: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let out = optimize_phases(&w, &f, &g, p, &init, 500, 1e-13).unwrap();
        let base = phase_objective(&w, &f, &g, p, &out.theta);
        for n in 0..4 {
            for j in 0..256 {
                let mut th = out.theta.clone();
                th[n] = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * j as f64 / 256.0;
                worst_grid = worst_grid.max(phase_objective(&w, &f, &g, p, &th) - base);
            }
        }
    }
    report(
        "phase-update properties",
        worst_drop <= 1e-10 && worst_scalar < 1e-9 && worst_grid <= 1e-6,
        t.elapsed(),
        Duration::from_secs(60),
        &format!(
            "max objective drop {worst_drop:.2e}; scalar closed-form gap {worst_scalar:.2e}; max 256-grid improvement {worst_grid:.2e}"
        ),
    );
}

/// Plain transcription of the LoS-connectivity selection loop.
fn reference_selection(los_ap: &DMatrix<bool>, los_ris: &DMatrix<bool>) -> Vec<Option<usize>> {
    let (l_n, k_n) = los_ap.shape();
    let r_n = los_ris.nrows();
    let mut remaining: Vec<usize> = (0..k_n).collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let count = |k: usize| (0..l_n).filter(|&l| los_ap[(l, k)]).count();
        let pos = (0..remaining.len())
            .min_by_key(|&i| (count(remaining[i]), remaining[i]))
            .unwrap();
        order.push(remaining.remove(pos));
    }
    let mut out = vec![None; r_n];
    for k in order {
        for r in 0..r_n {
            if out[r].is_none() && los_ris[(r, k)] {
                out[r] = Some(k);
            }
        }
    }
    out
}

#[test]
fn selection_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (mut mismatches, mut idle, mut wrongly_assigned) = (0, 0, 0);
    for _ in 0..10_000 {
        let l_n = rng.random_range(1..=8);
        let k_n = rng.random_range(1..=8);
        let r_n = rng.random_range(0..=8);
        let (pa, pr) = (rng.random_range(0.0..1.0), rng.random_range(0.0..0.6));
        let los_ap = DMatrix::from_fn(l_n, k_n, |_, _| rng.random_bool(pa));
        let los_ris = DMatrix::from_fn(r_n, k_n, |_, _| rng.random_bool(pr));
        let got = select_ris_ms(&los_ap, &los_ris);
        if got.assigned_ms != reference_selection(&los_ap, &los_ris) {
            mismatches += 1;
        }
        for r in 0..r_n {
            let capable = (0..k_n).any(|k| los_ris[(r, k)]);
            match got.assigned_ms[r] {
                None if capable => idle += 1,
                Some(k) if !los_ris[(r, k)] => wrongly_assigned += 1,
                None if got.assisted[r] != 0 => wrongly_assigned += 1,
                _ => {}
            }
        }
    }

    // A deployment whose RISs see no MS in LoS.
    let cfg = SystemConfig {
        num_ris: 4,
        ..SystemConfig::default()
    };
    let mut dep = generate_deployment(&cfg, 51);
    dep.los_ris_ms.fill(false);
    let corr = build_correlation(&cfg, &dep);
    let block = riscf::channels::draw_block_channels(&dep, &corr, 52);
    let settings = RisSettings::default();
    let codebook = Codebook::pseudo_random(cfg.num_ris, cfg.ris_elements, 8, true, 53);
    let ctx = ConfigureContext {
        settings: &settings,
        codebook: &codebook,
        block_index: 3,
        block_seed: 54,
        deployment_seed: 51,
        snr: cfg.data_power / dep.noise_power,
    };
    let (plan, assignment) = configure(Method::LosAware, &dep, &block, &ctx).unwrap();
    let defaults_ok = (0..cfg.num_ris)
        .all(|r| plan.source[r] == PlanSource::Codebook && plan.theta[r] == default_pattern(&codebook, r, 3));
    let pilots = pilot_plan(Method::LosAware, cfg.num_ms, &assignment, cfg.ris_elements, cfg.tau_c).unwrap();
    let nlos_ok = assignment.active_count() == 0 && defaults_ok && pilots.tau_p1 == 0;

    report(
        "LoS-aware selection oracle",
        mismatches == 0 && idle == 0 && wrongly_assigned == 0 && nlos_ok,
        t.elapsed(),
        Duration::from_secs(30),
        &format!(
            "{mismatches} mismatches over 10000 LoS matrices; {idle} idle LoS-capable RISs; {wrongly_assigned} invalid assignments; all-NLoS RISs on codebook with tau_p1 = {}",
            pilots.tau_p1
        ),
    );
}

struct DeskRun {
    rows: Vec<ResultRow>,
    elapsed: Duration,
}

fn desk_run() -> &'static DeskRun {
    static RUN: OnceLock<DeskRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let t = Instant::now();
        let spec = CampaignSpec::preset(Preset::Desk);
        let out = run_campaign(&spec, RunOptions::default()).unwrap();
        DeskRun {
            rows: out.rows,
            elapsed: t.elapsed(),
        }
    })
}

fn mean_sum(rows: &[ResultRow], m: Method, r: usize) -> f64 {
    mean(&sum_se(rows, m, r)).unwrap()
}

#[test]
fn trend_suite() {
    let run = desk_run();
    let rows = &run.rows;
    let m1 = |r| mean_sum(rows, Method::LosAware, r);
    let m3 = |r| mean_sum(rows, Method::RandomMs, r);
    let m4 = |r| mean_sum(rows, Method::Codebook, r);
    let m5 = |r| mean_sum(rows, Method::Grouped, r);
    let p5 = |r| percentile(&per_ms_se(rows, Method::LosAware, r), 0.05).unwrap();

    let a = m1(5) > m1(0);
    let b = [5, 10].iter().all(|&r| m1(r) >= m3(r) && m3(r) >= m4(r));
    let c5 = m5(10) >= m1(10);
    let d = p5(5) > p5(0);
    let mark = |ok: bool| if ok { "ok" } else { "violated" };
    let detail = format!(
        "(a) M1 R=0 {:.5} -> R=5 {:.5} {}; (b) R=5 M1/M3/M4 {:.5}/{:.5}/{:.5}, R=10 {:.5}/{:.5}/{:.5} {}; \
         (c) R=10 M5 {:.5} vs M1 {:.5} {}; (d) 5th pct R=0 {:.5} -> R=5 {:.5} {}",
        m1(0),
        m1(5),
        mark(a),
        m1(5),
        m3(5),
        m4(5),
        m1(10),
        m3(10),
        m4(10),
        mark(b),
        m5(10),
        m1(10),
        mark(c5),
        p5(0),
        p5(5),
        mark(d),
    );
    report("trend suite", a && b && c5 && d, run.elapsed, Duration::from_secs(15 * 60), &detail);
}

#[test]
fn method2_overhead_collapse() {
    let run = desk_run();
    let rows = &run.rows;
    let r_max = *CampaignSpec::preset(Preset::Desk).sweep.r_values.iter().max().unwrap();
    let prelog = |m: Method| {
        rows.iter()
            .find(|row| row.method == m.id() && row.r == r_max && row.is_sum == 1)
            .map(|row| row.prelog)
            .unwrap()
    };
    let (p1, p2) = (prelog(Method::LosAware), prelog(Method::AllMs));
    let (s1, s2) = (mean_sum(rows, Method::LosAware, r_max), mean_sum(rows, Method::AllMs, r_max));
    report(
        "Method 2 overhead collapse",
        p2 < p1 && s2 < s1,
        run.elapsed,
        Duration::from_secs(15 * 60),
        &format!("R = {r_max}: prelog M2 {p2} vs M1 {p1}; mean sum-SE M2 {s2:.5} vs M1 {s1:.5}"),
    );
}
