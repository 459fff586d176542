use std::path::Path;
use std::process::{Command, Output};

fn excessmort(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_excessmort"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn subcommands_chain_from_synthetic_export_to_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let synth = stdout(&excessmort(
        dir,
        &["synth", "--out", "fixture", "--seed", "3", "--shift-from", "2020-01", "--shift", "600"],
    ));
    assert!(synth.starts_with("108 months"), "{synth}");

    let ingest = stdout(&excessmort(dir, &["ingest", "fixture/synthetic_export.txt", "--out", "data"]));
    assert_eq!(ingest.trim(), "108 months, 2015-01..2023-12");

    std::fs::write(
        dir.join("run.toml"),
        "families = [\"sarima\", \"lstm\"]\ntrials = 2\n\
         [data]\nkind = \"csv\"\npath = \"data/national.csv\"\n\
         [[models]]\nfamily = \"lstm\"\nlookback = 3\nbatch_size = 32\nepochs = 50\nhidden = 64\n\
         [analysis]\nfamily = \"lstm\"\ncounts = [2, 4]\nseeds = [1, 2]\n",
    )
    .unwrap();
    let common = ["--config", "run.toml", "--out", "runs", "--workers", "1"];
    let run = |cmd: &str| stdout(&excessmort(dir, &[&[cmd][..], &common[..]].concat()));

    let pipeline = run("pipeline");
    let run_dir = Path::new(pipeline.lines().next().unwrap()).to_path_buf();
    assert!(pipeline.contains("sarima: cumulative excess"), "{pipeline}");
    assert!(dir.join(&run_dir).join("metrics.csv").exists());

    assert!(run("converge").contains("convergence_lstm.csv"));
    assert!(run("crossseed").contains("crossseed_lstm.csv"));
    assert!(run("horizons").contains("horizons.csv"));
    let horizons = std::fs::read_to_string(dir.join(&run_dir).join("analysis/horizons.csv")).unwrap();
    assert_eq!(horizons.lines().count(), 1 + 2 * 4);

    // A different seed is a different run.
    let reseeded = stdout(&excessmort(dir, &[&["pipeline", "--seed", "7"][..], &common[..]].concat()));
    assert_ne!(reseeded.lines().next(), pipeline.lines().next());
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let o = excessmort(tmp.path(), &["pipeline"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));

    std::fs::write(tmp.path().join("bad.toml"), "trials = 0\n[data]\nkind = \"synthetic\"\n").unwrap();
    let o = excessmort(tmp.path(), &["pipeline", "--config", "bad.toml"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = excessmort(tmp.path(), &["ingest", "missing.txt"]);
    assert!(!o.status.success());
}
