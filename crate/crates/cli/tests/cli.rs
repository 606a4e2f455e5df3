use std::path::Path;
use std::process::{Command, Output};

fn bfdf(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bfdf"));
    c.args(args).env_remove("BFDF_OUTPUT_DIR");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().unwrap()
}

const TINY: &str = r#"
problems = ["forretal?kcor=0.9&sdh=1&sdl=1"]
solvers = ["astro-bfdf", "astro-df"]
budget = 150
macroreps = 2
checkpoints = [0.5, 1.0]
"#;

#[test]
fn listings() {
    let out = bfdf(&["list-solvers"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["astro-bfdf", "astro-df", "nelder-mead", "adam-fd"]);
    let out = bfdf(&["list-problems"], &[]);
    let text = String::from_utf8(out.stdout).unwrap();
    for p in ["branin", "colville", "forretal", "rosen", "mm1", "sscont"] {
        assert!(text.lines().any(|l| l.starts_with(p)), "{p} missing");
    }
}

#[test]
fn run_profile_gap_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let results = dir.path().join("out");
    // Output directory from the environment.
    let out = bfdf(&["run", "--config", cfg.to_str().unwrap(), "--jobs", "2"], &[("BFDF_OUTPUT_DIR", &results)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(results.join("results.csv").exists());
    assert!(results.join("manifest.json").exists());

    let r = results.to_str().unwrap();
    let out = bfdf(&["profile", "--results", r, "--alpha", "0.1"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);

    let tsv = dir.path().join("gap.tsv");
    let out = bfdf(
        &["gap", "--results", r, "--problem", "forretal?kcor=0.9&sdh=1&sdl=1", "--out", tsv.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&tsv).unwrap().starts_with("solver\tfraction\tmean_gap"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "problems = [\"nope\"]\nsolvers = [\"astro-df\"]\nbudget = 10\nmacroreps = 1\n").unwrap();
    let out = bfdf(&["run", "--config", bad.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&bad, "problems = [\"rosen\"]\nsoIvers = []\n").unwrap();
    assert_eq!(bfdf(&["run", "--config", bad.to_str().unwrap()], &[]).status.code(), Some(2));

    let missing = dir.path().join("missing");
    let out = bfdf(&["profile", "--results", missing.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(bfdf(&["frobnicate"], &[]).status.code(), Some(2));
}
