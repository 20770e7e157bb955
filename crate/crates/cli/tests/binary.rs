use std::fs;
use std::process::Command;

use tempfile::TempDir;

fn run(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_dsk3dom"))
        .args(args)
        .env("DSK3DOM_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn full_run_through_the_binary() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    fs::write(
        p("s.toml"),
        "name = \"single\"\nduration = 0.5\n\n[[ego.waypoints]]\nt = 0.0\nposition = [0.0, 0.0, 0.0]\n\n\
         [[objects]]\nid = \"crate\"\nposition = [2.0, 0.0, 0.0]\nvelocity = [0.0, 0.5, 0.0]\n\n[objects.shape]\ntype = \"box\"\nhalf_extents = [0.4, 0.4, 0.4]\n",
    )
    .unwrap();
    fs::write(
        p("run.toml"),
        "seed = 1\ndesk_scale = 0.005\n\n[grid]\nmin_corner = [-3.2, -3.2, -1.6]\ncell_edge = 0.2\ndims = [32, 32, 16]\n",
    )
    .unwrap();

    run(&["simulate", "--scenario", &p("s.toml"), "--out", &p("s.log")]);
    run(&["map", "--config", &p("run.toml"), "--log", &p("s.log"), "--out", &p("map")]);
    let eval = run(&["eval", "--snapshots", &p("map/snapshots"), "--scenario", &p("s.toml"), "--out", &p("eval")]);
    assert!(String::from_utf8(eval.stdout).unwrap().starts_with("auc_o "));
    let export = run(&[
        "export-voxels", "--snapshot", &p("map/snapshots/snap_000004.txt"),
        "--zeta0", "0.5", "--zeta1", "0.5", "--zeta2", "0.5", "--out", &p("v.ply"),
    ]);
    assert!(String::from_utf8(export.stdout).unwrap().ends_with("voxels\n"));
    assert!(fs::read_to_string(p("v.ply")).unwrap().starts_with("ply\n"));
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_dsk3dom"))
        .args(["simulate", "--scenario", missing.to_str().unwrap(), "--out", "x.log"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}
