use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
pd_grid = lin(0.1, 0.99, 12)
channels_list = 1, 2, 10
iavg_db_grid = lin(-40, 0, 5)
iavg_db_list = -10, 0
gamma_grid = lin(0, 3e-4, 31)
";

fn cogcap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogcap"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn with_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.conf");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

const EXPERIMENTS: [&str; 5] = [
    "sensing-curves",
    "scenario-probs",
    "effcap-vs-pd",
    "effcap-vs-iavg",
    "pint-curves",
];

#[test]
fn experiments_write_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_config(dir.path(), SMALL);
    for exp in EXPERIMENTS {
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        for out in [&a, &b] {
            let run = cogcap(out, &["--quiet", "--config", &config, exp]);
            assert_eq!(
                run.status.code(),
                Some(0),
                "{exp}: {}",
                String::from_utf8_lossy(&run.stderr)
            );
            assert!(run.stdout.is_empty());
        }
        let name = format!("{exp}.csv");
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap()
        );
        assert!(a.join(format!("{name}.meta")).exists());

        let (header, rows) = read_csv(&a.join(&name));
        assert!(!rows.is_empty());
        for (j, col) in header.iter().enumerate() {
            let values = rows.iter().map(|r| r[j]);
            if ["pf", "pd", "ps1", "ps2", "ps3", "ps4", "p_int"].contains(&col.as_str()) {
                assert!(
                    values.clone().all(|v| (0.0..=1.0).contains(&v)),
                    "{exp}.{col}"
                );
            }
            if col == "re_bits_s_hz" {
                assert!(values.clone().all(|v| v >= 0.0), "{exp}.{col}");
            }
        }
    }
}

#[test]
fn headers_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_config(dir.path(), SMALL);
    let expected = [
        "gamma,N,pf,pd",
        "pd,pf,M,ps1,ps2,ps3,ps4",
        "pd,pf,M,iavg_db,re_bits_s_hz,lambda",
        "iavg_db,M,re_bits_s_hz,lambda",
        "pd,pf,M,p_int",
    ];
    for (exp, header) in EXPERIMENTS.iter().zip(expected) {
        assert_eq!(
            cogcap(dir.path(), &["--quiet", "--config", &config, exp])
                .status
                .code(),
            Some(0)
        );
        let text = std::fs::read_to_string(dir.path().join(format!("{exp}.csv"))).unwrap();
        assert_eq!(text.lines().next().unwrap(), header);
    }
}

#[test]
fn sensing_curves_decrease_in_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_config(
        dir.path(),
        "gamma_grid = lin(1e-5, 3e-4, 40)\nsensing_signal_var = 1e-4\n",
    );
    assert_eq!(
        cogcap(dir.path(), &["--config", &config, "sensing-curves"])
            .status
            .code(),
        Some(0)
    );
    let (_, rows) = read_csv(&dir.path().join("sensing-curves.csv"));
    let mut durations: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    durations.dedup();
    assert_eq!(durations, vec![1e-4, 1e-3, 1e-2]);
    for n in durations {
        let series: Vec<&Vec<f64>> = rows.iter().filter(|r| r[1] == n).collect();
        for w in series.windows(2) {
            assert!(w[1][2] <= w[0][2] && w[1][3] <= w[0][3], "N = {n}: {:?}", w);
        }
        let (first, last) = (series[0], series[series.len() - 1]);
        assert!(last[2] < first[2] && last[3] < first[3], "N = {n}");
        // Detection dominates false alarm at every threshold.
        assert!(series.iter().all(|r| r[3] >= r[2]));
    }
}

#[test]
fn single_channel_interference_probability_is_rho() {
    let dir = tempfile::tempdir().unwrap();
    let config = with_config(dir.path(), &format!("{SMALL}rho = 0.3\n"));
    assert_eq!(
        cogcap(dir.path(), &["--config", &config, "pint-curves"])
            .status
            .code(),
        Some(0)
    );
    let (_, rows) = read_csv(&dir.path().join("pint-curves.csv"));
    let single: Vec<f64> = rows.iter().filter(|r| r[2] == 1.0).map(|r| r[3]).collect();
    assert_eq!(single.len(), 12);
    assert!(single.iter().all(|&p| (p - 0.3).abs() < 1e-15));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("theta = 0.1\nwidth = 3\n", "line 2: unknown key `width`"),
        ("iavg = 0\n", "must be positive"),
        ("iavg = -0.5\n", "must be positive"),
        ("pd_grid = 0.9, 0.5\n", "strictly increasing"),
    ] {
        let config = with_config(dir.path(), text);
        let run = cogcap(dir.path(), &["--config", &config, "validate"]);
        assert_eq!(run.status.code(), Some(2), "{text}");
        assert!(
            String::from_utf8_lossy(&run.stderr).contains(needle),
            "{text}"
        );
    }
    let missing = dir.path().join("absent.conf");
    let run = cogcap(
        dir.path(),
        &["--config", missing.to_str().unwrap(), "effcap-vs-iavg"],
    );
    assert_eq!(run.status.code(), Some(2));
    let run = cogcap(dir.path(), &["--frames", "0", "validate"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_code_three() {
    // Perfect detection leaves the idle mode with a zero cutoff and no peak cap.
    let dir = tempfile::tempdir().unwrap();
    let config = with_config(dir.path(), "pd = 1\npf = 0.1\n");
    let run = cogcap(dir.path(), &["--config", &config, "effcap-vs-iavg"]);
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).contains("numerical failure"));
}

#[test]
fn validate_passes_on_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let run = cogcap(dir.path(), &["validate"]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(run.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("overall: pass"));
    let summary = std::fs::read_to_string(dir.path().join("validate.csv")).unwrap();
    assert!(summary.starts_with("check,expected,observed,std_error,tolerance,status\n"));
    assert!(summary.ends_with("overall,,,,,pass\n"));
    assert_eq!(summary.lines().count(), 9);
}

#[test]
fn too_few_frames_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let run = cogcap(dir.path(), &["--frames", "1000", "validate"]);
    assert_eq!(run.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&run.stderr).contains("inconclusive"));
    let summary = std::fs::read_to_string(dir.path().join("validate.csv")).unwrap();
    assert!(summary
        .lines()
        .any(|l| l.starts_with("effective_capacity,") && l.ends_with(",inconclusive")));
    assert!(!summary.contains(",fail"));
}

#[test]
fn mismatch_exits_with_code_four() {
    // A loose limit makes per-frame interference too heavy-tailed for 10^6 frames.
    let dir = tempfile::tempdir().unwrap();
    let config = with_config(dir.path(), "channels = 5\niavg_db = -30\n");
    let run = cogcap(dir.path(), &["--quiet", "--config", &config, "validate"]);
    assert_eq!(run.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&run.stderr).contains("average_interference"));
}

#[test]
fn seed_changes_monte_carlo_output() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let run = cogcap(
            out,
            &["--quiet", "--frames", "20000", "--seed", seed, "validate"],
        );
        assert_eq!(run.status.code(), Some(0));
    }
    assert_ne!(
        std::fs::read(a.join("validate.csv")).unwrap(),
        std::fs::read(b.join("validate.csv")).unwrap()
    );
}

#[test]
fn plot_script_points_at_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = cogcap(dir.path(), &["plot-script", "effcap-vs-iavg"]);
    assert_eq!(run.status.code(), Some(0));
    let script = std::fs::read_to_string(dir.path().join("effcap-vs-iavg.gp")).unwrap();
    assert!(script.contains("'effcap-vs-iavg.csv'"));
    assert!(script.contains("set datafile separator ','"));
}
