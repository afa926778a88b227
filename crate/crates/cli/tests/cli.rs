use std::path::Path;
use std::process::{Command, Output};

fn openset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_openset"))
        .args(args)
        .env_remove("OPENSET_WORKERS")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 10] = [
    "--known",
    "8",
    "--known-unknown",
    "5",
    "--unknown-unknown",
    "6",
    "--dimension",
    "12",
    "--seed",
    "9",
];

#[test]
fn pipeline_of_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let feats = d.join("f.csv");
    let part = d.join("partition.json");
    let mut synth = vec!["synth", "--out", p(&feats)];
    synth.extend(SMALL);
    assert!(openset(&synth).status.success());
    let out = openset(&["validate", "--features", p(&feats)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "64 records, dimension 12");
    assert!(openset(&["protocol", "--features", p(&feats), "--out", p(&part)])
        .status
        .success());

    let sub = d.join("sub.json");
    let evm = d.join("evm.json");
    assert!(openset(&["fit-subspace", "--features", p(&feats), "--out", p(&sub)])
        .status
        .success());
    assert!(
        openset(&["fit-evm", "--features", p(&feats), "--fusion", "avg", "--out", p(&evm)])
            .status
            .success()
    );

    let sc = d.join("c.csv");
    let so = d.join("o3.csv");
    let args = [
        "score",
        "--features",
        p(&feats),
        "--method",
        "lda",
        "--fusion",
        "max",
        "--subspace",
        p(&sub),
        "--out",
        p(&sc),
    ];
    assert!(openset(&args).status.success());
    let args = [
        "score",
        "--features",
        p(&feats),
        "--method",
        "evm",
        "--fusion",
        "avg",
        "--evm-model",
        p(&evm),
        "--probe-set",
        "O3",
        "--out",
        p(&so),
    ];
    assert!(openset(&args).status.success());
    let wrong = [
        "score",
        "--features",
        p(&feats),
        "--method",
        "evm",
        "--fusion",
        "max",
        "--evm-model",
        p(&evm),
        "--out",
        p(&so),
    ];
    assert_eq!(openset(&wrong).status.code(), Some(2));

    let cmc = d.join("cmc.csv");
    let out = openset(&[
        "eval-cmc",
        "--scores",
        p(&sc),
        "--partition",
        p(&part),
        "--out",
        p(&cmc),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&cmc).unwrap();
    assert!(text.starts_with("rank,cmc\n1,"));
    assert_eq!(text.lines().count(), 9);
    let roc = d.join("roc.csv");
    assert!(openset(&[
        "eval-roc",
        "--scores",
        p(&sc),
        "--partition",
        p(&part),
        "--out",
        p(&roc)
    ])
    .status
    .success());
    assert!(std::fs::read_to_string(&roc)
        .unwrap()
        .starts_with("fmr,tmr,threshold\n"));
    let dir_csv = d.join("dir.csv");
    let args = [
        "eval-dir",
        "--scores",
        p(&so),
        "--partition",
        p(&part),
        "--probe-set",
        "O3",
        "--far-targets",
        "0.1,1",
        "--out",
        p(&dir_csv),
    ];
    let out = openset(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"far_operating_points\""));
    assert!(std::fs::read_to_string(&dir_csv).unwrap().starts_with("far,dir\n"));
    let args = [
        "eval-dir",
        "--scores",
        p(&sc),
        "--partition",
        p(&part),
        "--probe-set",
        "O3",
        "--out",
        p(&dir_csv),
    ];
    assert_eq!(openset(&args).status.code(), Some(2));
}

#[test]
fn run_writes_the_grid_and_flags_beat_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.conf");
    std::fs::write(&cfg, "methods = cos\nfusions = avg\nprobe_sets = C,O2\nknown = 5\n").unwrap();
    let out_dir = dir.path().join("out");
    let mut args = vec![
        "run",
        "--config",
        p(&cfg),
        "--methods",
        "cos,evm",
        "--write-scores",
        "--out",
        p(&out_dir),
    ];
    args.extend(&SMALL[2..]);
    let out = openset(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curves: Vec<_> = std::fs::read_dir(out_dir.join("curves"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    let mut curves = curves;
    curves.sort();
    assert_eq!(
        curves,
        [
            "cos_avg_C_cmc.csv",
            "cos_avg_C_roc.csv",
            "cos_avg_O2_dir.csv",
            "evm_avg_C_cmc.csv",
            "evm_avg_C_roc.csv",
            "evm_avg_O2_dir.csv"
        ]
    );
    assert!(out_dir.join("scores/evm_avg.csv").exists());
    assert!(out_dir.join("models/evm_avg.json").exists());
    assert!(!out_dir.join("models/subspace.json").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"known_identities\": 5"), "{summary}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(openset(&[]).status.code(), Some(1));
    assert_eq!(
        openset(&["run", "--methods", "svm", "--out", "x"]).status.code(),
        Some(1)
    );
    assert_eq!(openset(&["--help"]).status.code(), Some(0));

    let missing = dir.path().join("missing.csv");
    assert_eq!(openset(&["validate", "--features", p(&missing)]).status.code(), Some(2));
    let dup = dir.path().join("dup.csv");
    std::fs::write(&dup, "identity,image,f0\na,1,1\na,1,1\n").unwrap();
    let out = openset(&["validate", "--features", p(&dup)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":3:"));

    let none_known = dir.path().join("k.csv");
    std::fs::write(&none_known, "identity,image,f0\na,1,1\nb,1,2\n").unwrap();
    assert_eq!(
        openset(&[
            "protocol",
            "--features",
            p(&none_known),
            "--out",
            p(&dir.path().join("p.json"))
        ])
        .status
        .code(),
        Some(2)
    );

    let typo = dir.path().join("typo.conf");
    std::fs::write(&typo, "alpah = 0.5\n").unwrap();
    let out = openset(&["run", "--config", p(&typo), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key `alpah`"));

    let bad_cfg = dir.path().join("bad.conf");
    std::fs::write(&bad_cfg, "alpha = 0\n").unwrap();
    let out = openset(&["run", "--config", p(&bad_cfg), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn degenerate_tail_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.csv");
    // Every training feature sits at the same distance from the gallery.
    let mut text = String::from("identity,image,f0,f1\n");
    for i in 1..=4 {
        text.push_str(&format!("g,{i},1,0\n"));
    }
    text.push_str("ku,1,0,1\nku,2,0,1\n");
    std::fs::write(&f, text).unwrap();
    let out = openset(&["fit-evm", "--features", p(&f), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
