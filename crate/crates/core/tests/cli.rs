use std::path::Path;
use std::process::{Command, Output};

fn binkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binkit"))
        .args(args)
        .env_remove("BINKIT_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = binkit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn end_to_end_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    ok(&[
        "synth",
        "--out",
        s(&corpus),
        "--train",
        "3",
        "--val",
        "1",
        "--test",
        "1",
        "--size",
        "48",
        "--seed",
        "3",
    ]);
    assert!(corpus.join("train.tsv").exists() && corpus.join("test_000_gt.pgm").exists());

    let page = corpus.join("test_000.pgm");
    for method in ["otsu", "niblack", "sauvola", "wolf"] {
        let out = d.join(format!("{method}.pgm"));
        ok(&["binarize", "--method", method, s(&page), s(&out)]);
        assert_eq!(binkit::imagery::load_mask(&out).unwrap().dims(), (48, 48));
    }
    ok(&[
        "binarize",
        "--method",
        "niblack",
        "--k",
        "-0.3",
        "--window",
        "15",
        s(&page),
        s(&d.join("n.pgm")),
    ]);

    let model = d.join("m.sae");
    let history = d.join("h.csv");
    let stdout = ok(&[
        "train",
        "--corpus",
        s(&corpus),
        "--out",
        s(&model),
        "--preset",
        "small",
        "--window",
        "16",
        "--filters",
        "4",
        "--kernel",
        "3",
        "--depth",
        "2",
        "--epochs",
        "2",
        "--patience",
        "2",
        "--augment",
        "1",
        "--history",
        s(&history),
    ]);
    assert!(stdout.contains("best epoch"));
    assert_eq!(std::fs::read_to_string(&history).unwrap().lines().count(), 3);
    let ckpt = binkit::sae::read_checkpoint(&model).unwrap();
    assert_eq!(ckpt.window_side(), 16);
    assert_eq!(ckpt.spec().kind, binkit::sae::Kind::RedNet);

    ok(&[
        "binarize",
        "--model",
        s(&model),
        "--tau",
        "0.4",
        s(&page),
        s(&d.join("sae.pgm")),
    ]);

    let eval = ok(&[
        "eval",
        "--corpus",
        s(&corpus),
        "--model",
        s(&model),
        "--per-image",
        s(&d.join("per.csv")),
    ]);
    assert!(eval.starts_with("micro_fm "), "{eval}");
    assert!(eval.contains("macro_fm"));
    let eval = ok(&["eval", "--corpus", s(&corpus), "--method", "otsu", "--split", "train"]);
    assert!(eval.contains("pages 3"));

    let sweep = ok(&[
        "sweep",
        "--corpus",
        s(&corpus),
        "--model",
        s(&model),
        "--taus",
        "0.2,0.5,0.8",
    ]);
    assert_eq!(sweep.lines().count(), 4);
    assert!(sweep.starts_with("tau,fm,tp,fp,fn"));

    let prefix = d.join("heat");
    ok(&[
        "heatmap",
        "--corpus",
        s(&corpus),
        "--model",
        s(&model),
        "--out",
        s(&prefix),
    ]);
    assert!(d.join("heat_errors.pgm").exists() && d.join("heat.csv").exists());

    let matrix = ok(&[
        "matrix",
        "--model",
        &format!("a={}", s(&model)),
        "--corpus",
        &format!("c={}", s(&corpus)),
    ]);
    assert!(matrix.contains("a,c,"));

    let grid = ok(&[
        "gridsearch",
        "--corpus",
        s(&corpus),
        "--kinds",
        "cae,swwae",
        "--windows",
        "16",
        "--filters",
        "2",
        "--kernels",
        "3",
        "--epochs",
        "1",
        "--patience",
        "1",
        "--augment",
        "0",
    ]);
    assert_eq!(grid.lines().count(), 3);
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_binkit"));
        cmd.args([
            "synth",
            "--out",
            s(&out),
            "--train",
            "1",
            "--val",
            "0",
            "--test",
            "0",
            "--size",
            "32",
        ]);
        match seed {
            Some(v) => cmd.env("BINKIT_SEED", v),
            None => cmd.env_remove("BINKIT_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(out.join("train_000.pgm")).unwrap()
    };
    assert_eq!(run("a", Some("42")), run("b", Some("42")));
    assert_ne!(run("c", Some("42")), run("d", None));
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let out = binkit(&["binarize", "--method", "otsu", "/nonexistent/in.pgm", "/tmp/out.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/in.pgm"));

    let out = binkit(&["binarize", "in.pgm", "out.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--method or --model"));

    let out = binkit(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));

    let out = binkit(&["matrix", "--model", "no-equals-sign", "--corpus", "c=d"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NAME=PATH"));
}

#[test]
fn dispatch_is_callable_in_process() {
    assert_eq!(binkit::cli::dispatch(["binkit", "--version"]), 0);
    assert_eq!(
        binkit::cli::dispatch(["binkit", "eval", "--corpus", "/nonexistent", "--method", "otsu"]),
        1
    );
}
