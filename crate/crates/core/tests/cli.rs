use std::fs;
use std::process::Command;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clip-transfer"))
}

fn stdout(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn oracle_prints_all_three_estimates() {
    let text = stdout(cli().args(["oracle", "--grid", "2", "--goal", "0,0"]));
    assert!(text.contains("optimal_expected_steps  1.33333333"), "{text}");
    assert!(text.contains("value_iteration_greedy  1.33333333"), "{text}");

    let text = stdout(cli().args(["oracle", "--grid", "8", "--goal", "0,0"]));
    let spec = clip_transfer::env::GridSpec::new(8, clip_transfer::env::Cell::new(0, 0)).unwrap();
    let want = clip_transfer::harness::fmt_float(clip_transfer::env::optimal_expected_steps(&spec));
    assert!(text.contains(&format!("optimal_expected_steps  {want}\n")), "{text}");
    assert!(text.contains("bfs_average             7.11111111"), "{text}");
}

#[test]
fn invalid_arguments_fail_cleanly() {
    for args in [
        &["oracle", "--grid", "8", "--goal", "9,0"][..],
        &["oracle", "--goal", "x"],
        &["transfer", "--strategy", "clip2"],
        &["run-experiment", "--trials", "0"],
    ] {
        let out = cli().args(args).output().unwrap();
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn train_base_then_align_then_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let text = stdout(cli().args(["train-base", "--grid", "8", "--out", out]));
    assert_eq!(text.lines().count(), 4, "{text}");
    assert!(dir.path().join("grid8/policies/top_right_second.policy").exists());

    let text = stdout(cli().args(["align", "--grid", "8", "--out", out]));
    assert!(text.contains("diagonal argmax"), "{text}");
    assert!(dir.path().join("grid8/alignment.model").exists());

    let text = stdout(cli().args(["transfer", "--grid", "8", "--strategy", "clip", "--trials", "2", "--out", out]));
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().skip(1).all(|l| l.starts_with("8,clip,")), "{text}");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "grid_sizes = [8, 10]\ntrials = 5\nstrategies = [\"scratch\", \"clip\"]\n").unwrap();
    let out = dir.path().join("out");
    let text = stdout(cli().args([
        "run-experiment",
        "--config",
        config.to_str().unwrap(),
        "--grid",
        "8",
        "--trials",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(text.contains("== grid 8x8"), "{text}");
    assert!(!text.contains("== grid 10x10"), "{text}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
}
