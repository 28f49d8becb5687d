use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_herald");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn herald(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("HERALD_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Value of a `key = value` line.
fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
        .to_string()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\n{}\n{}",
        out.status.code(),
        stdout(out),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let dir = tempfile::tempdir().unwrap();
    for sub in [
        "",
        "analytic",
        "simulate",
        "correlate",
        "g2",
        "resonance",
        "preset",
        "config-template",
    ] {
        let mut args: Vec<&str> = if sub.is_empty() { vec![] } else { vec![sub] };
        args.push("--help");
        let out = herald(&args, dir.path());
        ok(&out);
        let name = if sub.is_empty() { "herald" } else { sub };
        let path = golden.join(format!("{name}.txt"));
        if update {
            fs::write(&path, stdout(&out)).unwrap();
        } else {
            let expected = fs::read_to_string(&path).unwrap();
            assert_eq!(stdout(&out), expected, "help of {name} changed");
        }
    }
}

#[test]
fn g2_of_perfect_pairs_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = herald(
        &["g2", fixture("perfect_pairs.tags").to_str().unwrap()],
        dir.path(),
    );
    ok(&out);
    let text = stdout(&out);
    assert_eq!(value(&text, "g2_value"), "0.000000");
    assert_eq!(value(&text, "n1"), "1000");
}

#[test]
fn resonance_fixture_gives_known_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = herald(
        &[
            "resonance",
            fixture("resonance_low.tags").to_str().unwrap(),
            fixture("resonance_high.tags").to_str().unwrap(),
        ],
        dir.path(),
    );
    ok(&out);
    let text = stdout(&out);
    assert_eq!(value(&text, "ratio"), "11.600000");
    let fraction: f64 = value(&text, "fraction").parse().unwrap();
    assert!((fraction - 0.937).abs() < 1e-3, "{fraction}");
}

#[test]
fn two_tag_fixture_has_one_coincidence() {
    let dir = tempfile::tempdir().unwrap();
    let out = herald(
        &["correlate", fixture("two_tags.tags").to_str().unwrap()],
        dir.path(),
    );
    ok(&out);
    assert_eq!(value(&stdout(&out), "coincidences"), "1");
    let csv = fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert!(csv.contains("\n1500,1\n"), "{csv}");
    assert!(dir.path().join("correlate.manifest.toml").exists());
}

fn artifact_hash(manifest: &Path) -> String {
    let text = fs::read_to_string(manifest).unwrap();
    let start = text.find("[[artifacts]]").unwrap();
    value(&text[start..], "sha256")
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, seed: &str| {
        let out = herald(&["simulate", "--seed", seed, "-o", sub], dir.path());
        ok(&out);
        artifact_hash(&dir.path().join(sub).join("simulate.manifest.toml"))
    };
    let a = run("first", "5");
    assert_eq!(a, run("second", "5"));
    assert_ne!(a, run("third", "6"));
}

#[test]
fn split_scenario_declares_three_channels() {
    let dir = tempfile::tempdir().unwrap();
    let out = herald(&["simulate", "--scenario", "c"], dir.path());
    ok(&out);
    let bytes = fs::read(dir.path().join("scenario-c.tags")).unwrap();
    assert_eq!(&bytes[..4], b"TTG1");
    assert_eq!(bytes[6], 3);
    assert_eq!(
        value(&stdout(&out), "tags_per_channel")
            .matches(',')
            .count(),
        2
    );
}

#[test]
fn strong_cell_leaves_only_accidentals() {
    let dir = tempfile::tempdir().unwrap();
    let config = "[simulation]\npair_rate = 2e7\nduration = 20.0\nscenario = \"b\"\n\
                  [simulation.cell]\nod = 6.0\n\
                  [[simulation.detectors]]\ndark_rate = 2e4\n\
                  [[simulation.detectors]]\ndark_rate = 2e4\n";
    fs::write(dir.path().join("run.toml"), config).unwrap();
    ok(&herald(&["simulate", "-c", "run.toml"], dir.path()));
    let out = herald(
        &["correlate", "scenario-b.tags", "--range-ns", "20"],
        dir.path(),
    );
    ok(&out);
    let text = stdout(&out);
    let measured: f64 = value(&text, "coincidences").parse().unwrap();
    let n_ref: f64 = value(&text, "ref_events").parse().unwrap();
    let n_sig: f64 = value(&text, "sig_events").parse().unwrap();
    // 41 bins of 1 ns.
    let accidental = n_ref * n_sig / 20.0 * 41e-9;
    assert!(accidental > 100.0);
    assert!(
        (measured - accidental).abs() < 5.0 * accidental.sqrt(),
        "{measured} vs {accidental}"
    );
}

/// Local maxima of the value column above a tenth of the peak.
fn curve_peaks(csv: &str) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (
                f.next().unwrap().parse().unwrap(),
                f.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    let peak = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let maxima = rows
        .windows(3)
        .filter(|w| w[1].1 > w[0].1 && w[1].1 >= w[2].1 && w[1].1 > 0.1 * peak)
        .map(|w| w[1].0)
        .collect();
    (maxima, rows.iter().map(|r| r.1).collect())
}

#[test]
fn analytic_curves() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ["--range-ns", "10", "--points", "20001"];
    let mut args = vec!["analytic"];
    args.extend(grid);
    let out = herald(&args, dir.path());
    ok(&out);
    let multi = fs::read_to_string(dir.path().join("analytic_multimode.csv")).unwrap();
    let (maxima, coarse) = curve_peaks(&multi);
    assert!(maxima.len() >= 5, "{maxima:?}");
    let spacing = (maxima[maxima.len() - 1] - maxima[0]) / (maxima.len() - 1) as f64;
    assert!((spacing - 2.04e-9).abs() < 0.01e-9, "{spacing}");

    let single = fs::read_to_string(dir.path().join("analytic_single_mode.csv")).unwrap();
    let (_, values) = curve_peaks(&single);
    let top = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(values[..=top].windows(2).all(|w| w[0] < w[1]));
    assert!(values[top..].windows(2).all(|w| w[0] > w[1]));

    // Doubling the truncation changes nothing at the 1e-4 level.
    let m: usize = stdout(&out)
        .split("m_max ")
        .nth(1)
        .and_then(|s| s.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    let doubled = (2 * m).to_string();
    let sub = dir.path().join("doubled");
    let mut args = vec!["analytic", "--m-max", &doubled, "-o", sub.to_str().unwrap()];
    args.extend(grid);
    ok(&herald(&args, dir.path()));
    let (_, fine) = curve_peaks(&fs::read_to_string(sub.join("analytic_multimode.csv")).unwrap());
    let peak = fine.iter().cloned().fold(0.0, f64::max);
    let worst = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).abs() / peak)
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.toml"), "[simulation]\npair_rat = 1.0\n").unwrap();
    let out = herald(&["simulate", "-c", "bad.toml"], p);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pair_rat"));

    fs::write(
        p.join("invalid.toml"),
        "[simulation]\nduration = -1.0\n[analysis]\nbin_ns = 0.0\n",
    )
    .unwrap();
    let out = herald(&["simulate", "-c", "invalid.toml"], p);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("duration") && err.contains("bin_ns"), "{err}");

    let mut bytes = fs::read(fixture("two_tags.tags")).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(p.join("truncated.tags"), bytes).unwrap();
    assert_eq!(
        herald(&["correlate", "truncated.tags"], p).status.code(),
        Some(3)
    );
    assert_eq!(
        herald(&["correlate", "missing.tags"], p).status.code(),
        Some(3)
    );

    let two = fixture("two_tags.tags");
    let out = herald(
        &[
            "g2",
            two.to_str().unwrap(),
            "--trigger",
            "2",
            "--arm-a",
            "0",
            "--arm-b",
            "1",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(
        herald(&["correlate", two.to_str().unwrap(), "--sig", "5"], p)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(herald(&["bogus"], p).status.code(), Some(2));
}

#[test]
fn template_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    for preset in [None, Some("fig4")] {
        let mut args = vec!["config-template"];
        if let Some(p) = preset {
            args.extend(["--preset", p]);
        }
        let out = herald(&args, dir.path());
        ok(&out);
        fs::write(dir.path().join("t.toml"), stdout(&out)).unwrap();
        let out = herald(
            &[
                "analytic",
                "-c",
                "t.toml",
                "--range-ns",
                "5",
                "--points",
                "5000",
                "--m-max",
                "5",
            ],
            dir.path(),
        );
        ok(&out);
    }
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(BIN)
        .args(["correlate", fixture("two_tags.tags").to_str().unwrap()])
        .current_dir(dir.path())
        .env("HERALD_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    ok(&out);
    assert!(target.join("histogram.csv").exists());
    assert!(!dir.path().join("histogram.csv").exists());
}

#[test]
fn fig2_preset_writes_report_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = herald(&["preset", "fig2", "-o", "out"], dir.path());
    ok(&out);
    let text = stdout(&out);
    let chi2: f64 = value(&text, "chi2_per_dof").parse().unwrap();
    assert!(chi2 < 2.0, "{text}");
    let manifest = fs::read_to_string(dir.path().join("out/preset-fig2.manifest.toml")).unwrap();
    for file in ["fig2.tags", "fig2_histogram.csv", "fig2_report.txt"] {
        assert!(
            manifest.contains(&format!("path = \"{file}\"")),
            "{manifest}"
        );
    }
}
