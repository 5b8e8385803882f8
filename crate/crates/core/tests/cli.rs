use std::path::Path;
use std::process::{Command, Output};

use riscf::harness::{read_csv_file, CampaignSpec, RowStatus, CSV_HEADER};
use riscf::ris::{states_per_ris, Method};

const SMALL: &str = r#"
[scenario]
num_aps = 4
ap_antennas = 2
num_ms = 3
ris_elements = 4
master_seed = 5

[sweep]
r_values = [0, 3]
methods = [1, 2, 3, 4, 5]
n_deployments = 3
n_blocks = 2

[ris]
block_size = 2
"#;

fn riscf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riscf")).args(args).output().unwrap()
}

fn run_to(dir: &Path, config: &str, name: &str, extra: &[&str]) -> Vec<u8> {
    let cfg = dir.join(format!("{name}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("{name}.csv"));
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let res = riscf(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    std::fs::read(out).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to(dir.path(), SMALL, "a", &["--threads", "1"]);
    let b = run_to(dir.path(), SMALL, "b", &["--threads", "4"]);
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    // 2 R values x 5 methods x 3 deployments x (3 MSs + sum).
    assert_eq!(text.lines().count() - 1, 2 * 5 * 3 * 4);
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_to(dir.path(), SMALL, "a", &[]);
    let b = run_to(dir.path(), SMALL, "b", &["--seed", "6"]);
    assert_ne!(a, b);
}

#[test]
fn without_ris_all_methods_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let config = SMALL.replace("r_values = [0, 3]", "r_values = [0]");
    run_to(dir.path(), &config, "r0", &[]);
    let rows = read_csv_file(&dir.path().join("r0.csv")).unwrap();
    let reference: Vec<_> = rows.iter().filter(|r| r.method == 1).collect();
    for m in 2..=5 {
        let other: Vec<_> = rows.iter().filter(|r| r.method == m).collect();
        assert_eq!(other.len(), reference.len());
        for (x, y) in reference.iter().zip(&other) {
            assert_eq!((x.deployment, x.ms, x.se_bps_hz, x.prelog), (y.deployment, y.ms, y.se_bps_hz, y.prelog));
        }
    }
}

#[test]
fn recorded_prelog_matches_overhead_formula() {
    let dir = tempfile::tempdir().unwrap();
    run_to(dir.path(), SMALL, "o", &[]);
    let rows = read_csv_file(&dir.path().join("o.csv")).unwrap();
    let spec = CampaignSpec::from_toml(SMALL).unwrap();
    let (k, tau_c) = (spec.scenario.num_ms, spec.scenario.tau_c);
    for row in &rows {
        assert_eq!(row.status, RowStatus::Ok);
        let method = Method::try_from(row.method).unwrap();
        let states = states_per_ris(method, row.n_r, &spec.ris).unwrap();
        let tau_p = match method {
            Method::AllMs => k + row.r * k * (1 + states),
            Method::Codebook => k,
            _ => k + row.r_a * (1 + states),
        };
        assert_eq!(row.prelog, 1.0 - tau_p as f64 / tau_c as f64, "{row:?}");
        if method == Method::Codebook {
            assert_eq!(row.r_a, 0);
        }
    }
}

#[test]
fn sum_rows_have_empty_ms_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(run_to(dir.path(), SMALL, "s", &[])).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 11);
        assert_eq!(fields[5].is_empty(), fields[7] == "1", "{line}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[sweep]\nn_blocks = 0\n").unwrap();
    assert_eq!(riscf(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(riscf(&["run", "--preset", "galactic"]).status.code(), Some(2));

    let good = dir.path().join("good.toml");
    std::fs::write(&good, SMALL).unwrap();
    let unwritable = dir.path().join("missing").join("out.csv");
    let res = riscf(&["run", "--config", good.to_str().unwrap(), "--out", unwritable.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn show_config_round_trips() {
    for preset in ["desk", "paper", "equal-area"] {
        let res = riscf(&["show-config", "--preset", preset]);
        assert!(res.status.success());
        let text = String::from_utf8(res.stdout).unwrap();
        let spec = CampaignSpec::from_toml(&text).unwrap();
        assert_eq!(spec, CampaignSpec::preset(preset.parse().unwrap()));
    }
}

#[test]
fn profile_reports_stage_times() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("p.csv");
    let res = riscf(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--profile"]);
    assert!(res.status.success());
    let err = String::from_utf8(res.stderr).unwrap();
    for stage in ["wall", "configure", "covariance", "estimation", "combining"] {
        assert!(err.contains(stage), "{err}");
    }
}
