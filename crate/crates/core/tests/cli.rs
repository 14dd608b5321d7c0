use std::process::Command;

fn coopdet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_coopdet")).args(args).output().unwrap()
}

#[test]
fn generate_then_compare_from_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    let g = coopdet(&["generate", "--frames", "3", "--seed", "4", "--out", data.to_str().unwrap()]);
    assert!(g.status.success(), "{}", String::from_utf8_lossy(&g.stderr));
    assert!(data.join("scenario.toml").is_file());
    assert!(data.join("frame_000002").join("sensor_5.cppc").is_file());

    let c = coopdet(&[
        "compare",
        "--dataset",
        data.to_str().unwrap(),
        "--frames",
        "3",
        "--scheme",
        "early,late",
        "--kappa",
        "0.5,0.7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    let stdout = String::from_utf8(c.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1 + 2 * 2);
    assert!(out.join("compare.tsv").is_file() && out.join("pr_late.tsv").is_file());
    assert!(!out.join("pr_hybrid.tsv").exists());
}

#[test]
fn roi_and_density_accept_explicit_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let r = coopdet(&["roi", "--frames", "2", "--roi", "-10,-10,10,10", "--sensors", "3+4", "--scheme", "early", "--out", out]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8(r.stdout).unwrap().contains("3+4\tearly"));
    let d = coopdet(&["density", "--frames", "2", "--sensors", "0,3", "--out", out]);
    assert!(d.status.success());
    assert!(tmp.path().join("density_cdf.tsv").is_file());
}

#[test]
fn bad_arguments_fail_cleanly() {
    for args in [
        &["compare", "--dataset", "/nonexistent/coopdet"][..],
        &["compare", "--frames", "0"],
        &["compare", "--sensors", "0,9"],
        &["compare", "--scheme", "middle"],
        &["compare", "--detector", "magic"],
        &["roi", "--frames", "1"],
        &["sweep", "--sensors", "all_subsets", "--sensors", "0"],
    ] {
        let o = coopdet(args);
        assert!(!o.status.success(), "{args:?} succeeded");
        assert!(!o.stderr.is_empty());
    }
}
