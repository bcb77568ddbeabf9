use std::fs;

use clap::Parser;
use stimkit::args::Cli;
use stimkit::error::CliError;

fn run_both(args: &[&str]) -> Result<(String, String), CliError> {
    let cli = Cli::try_parse_from(std::iter::once("stimkit").chain(args.iter().copied()))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (mut out, mut err) = (Vec::new(), Vec::new());
    stimkit::run(&cli, &mut out, &mut err)?;
    Ok((String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap()))
}

fn run(args: &[&str]) -> Result<String, CliError> {
    run_both(args).map(|(out, _)| out)
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().to_string()))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

#[test]
fn synth_writes_every_sample_and_reports_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let out = run(&["synth", "--category", "tonic100", "--amp-mA", "1.0", "--out", path.to_str().unwrap()]).unwrap();
    let energy: f64 = field(&out, "energy_A2s").parse().unwrap();
    assert!((energy - 1.8e-7).abs() < 1e-15);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t_s,i_mA"));
    assert_eq!(lines.next(), Some("0.000000000,1.000000"));
    assert_eq!(text.lines().count(), 3_000_001);
}

#[test]
fn synth_by_level_counts_pulses() {
    let out = run(&["synth", "--category", "freq20_100", "--level", "5"]).unwrap();
    assert_eq!(field(&out, "pulse_pairs"), "244");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["synth", "--amp-mA", "3.2"]).unwrap_err().exit_code(), 3);
    assert_eq!(run(&["synth", "--level", "26"]).unwrap_err().exit_code(), 3);
    assert_eq!(run(&["synth"]).unwrap_err().exit_code(), 2);
    assert_eq!(run(&["simulate", "--n", "0"]).unwrap_err().exit_code(), 2);
    assert_eq!(run(&["predict", "--level", "5"]).unwrap_err().exit_code(), 2);
    assert_eq!(run(&["predict", "--ref", "tonic100", "--ref", "tonic20", "--level", "5"]).unwrap_err().exit_code(), 2);
    assert_eq!(
        run(&["predict", "--ref", "tonic100", "--level", "1.0mA", "--grouping", "frequency-bands"]).unwrap_err().exit_code(),
        4
    );
    assert_eq!(run(&["summarize", "--cohort", "/nonexistent/cohort.ndjson"]).unwrap_err().exit_code(), 5);
}

#[test]
fn predict_reports_seven_plus_identity() {
    let out = run(&["predict", "--ref", "tonic100", "--level", "1.0mA"]).unwrap();
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "category,reference,predicted_energy_A2s,predicted_level_index,predicted_amplitude_mA");
    assert_eq!(rows.len(), 9);
    let identity = rows.iter().find(|r| r.starts_with("tonic100,")).unwrap();
    assert!(identity.ends_with(",5,1.0"));
    assert!(rows[1..].iter().all(|r| r.split(',').nth(1) == Some("tonic100")));
}

#[test]
fn predict_with_bands_and_matched_level() {
    let out = run(&[
        "predict", "--ref", "tonic100", "--level", "1.0mA", "--ref", "tonic20", "--level", "8", "--grouping",
        "frequency-bands", "--mode", "matched", "--x", "1.0mA",
    ])
    .unwrap();
    let amp20 = out.lines().find(|r| r.starts_with("amp20,")).unwrap();
    assert!(amp20.starts_with("amp20,tonic20,"));
    let amp100 = out.lines().find(|r| r.starts_with("amp100,")).unwrap();
    assert!(amp100.starts_with("amp100,tonic100,"));
}

#[test]
fn simulate_is_deterministic_and_noise_hurts() {
    let dir = tempfile::tempdir().unwrap();
    let run_to = |sub: &str, noise: &str| {
        let d = dir.path().join(sub);
        let out = run(&["simulate", "--n", "13", "--noise", noise, "--seed", "7", "--out-dir", d.to_str().unwrap()]).unwrap();
        (field(&out, "participant_avg_r2").parse::<f64>().unwrap(), d)
    };
    let (clean, a) = run_to("a", "0");
    let (again, b) = run_to("b", "0");
    let (noisy, _) = run_to("c", "0.1");
    assert!(clean >= 99.0);
    assert_eq!(clean, again);
    assert!(noisy < clean);
    for f in ["cohort.ndjson", "r2_by_participant.csv", "r2_by_category.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let participants = fs::read_to_string(a.join("r2_by_participant.csv")).unwrap();
    assert_eq!(participants.lines().count(), 1 + 13 + 1);
    assert!(participants.lines().last().unwrap().starts_with("average,"));
}

#[test]
fn summarize_cohort_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    run(&["simulate", "--n", "4", "--seed", "1", "--out-dir", d]).unwrap();
    let cohort = dir.path().join("cohort.ndjson");
    let stats = dir.path().join("stats.csv");
    let out = run(&["summarize", "--cohort", cohort.to_str().unwrap(), "--stats", stats.to_str().unwrap()]).unwrap();
    assert_eq!(out.lines().next(), Some("rank,stimulation,mean_score"));
    assert_eq!(out.lines().count(), 9);
    assert!(fs::read_to_string(stats).unwrap().lines().count() == 9);
}

#[test]
fn summarize_fixture_table() {
    let (out, report) = run_both(&["summarize", "--fixture"]).unwrap();
    assert_eq!(out.lines().nth(1), Some("1,Freq 40-170 Hz,2.59"));
    assert!(report.contains("best freq40_170 vs worst tonic20: 6.8%"));
    assert!(report.contains("amp100 vs tonic100: +2.6%"));
    assert!(report.contains("amp20 vs tonic20: +5.8%"));
    assert_eq!(out.lines().nth(8), Some("8,Tonic 20 Hz,2.25"));
}

#[test]
fn frame_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for args in [
        vec!["frame", "--category", "tonic20", "--amp-mA", "1.0"],
        vec!["frame", "--op", "set-channels", "--channels", "3:source,4:sink,5:ground"],
        vec!["frame", "--op", "stop"],
    ] {
        text.push_str(&run(&args).unwrap());
    }
    let path = dir.path().join("frames.hex");
    fs::write(&path, &text).unwrap();
    let out = run(&["replay", "--frames", path.to_str().unwrap(), "--sample-rate", "100000"]).unwrap();
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("1,Stimulate,0x00000009,60,"));
    assert!(rows[2].starts_with("2,SetChannels,0x00000e40,"));
    assert!(rows[3].starts_with("3,Stop,0x00000000,"));

    fs::write(&path, format!("{text}deadbeef\n")).unwrap();
    assert_eq!(run(&["replay", "--frames", path.to_str().unwrap()]).unwrap_err().exit_code(), 3);
}

#[test]
fn dac_check_default_and_coarse_tables() {
    let out = run(&["dac-check"]).unwrap();
    assert_eq!(out.lines().count(), 27);

    let dir = tempfile::tempdir().unwrap();
    let coarse = dir.path().join("coarse.csv");
    let rows: String = (0..=12).map(|k| format!("{k},{}\n", f64::from(k) * 0.25)).collect();
    fs::write(&coarse, format!("code,current_mA\n{rows}")).unwrap();
    let err = run(&["dac-check", "--lut", coarse.to_str().unwrap()]).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn profiles_csv_has_every_level_and_means() {
    let out = run(&["profiles"]).unwrap();
    assert_eq!(out.lines().count(), 1 + 8 * 26 + 8);
    assert!(out.lines().any(|l| l.starts_with("both40_170,mean,,")));
}
