use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn pfan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfan"))
        .args(args)
        .env_remove("PFAN_EXTERNAL_ENCODE")
        .env_remove("PFAN_EXTERNAL_DECODE")
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("pfan-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn exit_codes() {
    let dir = scratch("codes");
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();

    assert_eq!(code(&pfan(&["--help"])), 0);
    assert_eq!(code(&pfan(&[])), 1);
    assert_eq!(code(&pfan(&["transmogrify"])), 1);
    assert_eq!(code(&pfan(&["decode", "--stream", "x"])), 1);

    let ok = pfan(&["synth", "--out", &d("c"), "--count", "2", "--seed", "7"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));

    fs::write(dir.join("junk.pfan"), b"not a stream").unwrap();
    let bad = pfan(&["decode", "--stream", &d("junk.pfan"), "--out", &d("junk.pft")]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("magic"));
    assert_eq!(
        code(&pfan(&["decode", "--stream", &d("absent.pfan"), "--out", &d("a.pft")])),
        2
    );

    let env = pfan(&["sweep", "--corpus", &d("c"), "--out", &d("s"), "--codec", "external"]);
    assert_eq!(code(&env), 3);
    assert!(String::from_utf8_lossy(&env.stderr).contains("PFAN_EXTERNAL_ENCODE"));

    assert_eq!(
        code(&pfan(&[
            "sweep",
            "--corpus",
            &d("c"),
            "--out",
            &d("s"),
            "--base-qp",
            "60"
        ])),
        1
    );
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_with_flag_override() {
    let dir = scratch("config");
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    assert_eq!(code(&pfan(&["synth", "--out", &d("c"), "--count", "2"])), 0);
    fs::write(
        dir.join("run.cfg"),
        format!("corpus = {}\nout = {}\nenhancement_qp = 40, 30, 20\n", d("c"), d("s")),
    )
    .unwrap();
    let o = pfan(&["--config", &d("run.cfg"), "sweep", "--enhancement-qp", "40,10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.join("s/qp_10").is_dir() && !dir.join("s/qp_30").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn score_partition_encode_decode() {
    let dir = scratch("chain");
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let run = |args: &[&str]| {
        let o = pfan(args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8_lossy(&o.stdout).into_owned()
    };
    run(&["synth", "--out", &d("c"), "--count", "2"]);
    run(&["score", "--corpus", &d("c"), "--out", &d("scores.csv")]);
    let p = run(&[
        "partition",
        "--scores",
        &d("scores.csv"),
        "--base-size",
        "4",
        "--out",
        &d("p.json"),
    ]);
    assert!(p.starts_with("base [0, "));
    let tensor = d("c/scene_0000.tensor.pft");
    run(&[
        "encode",
        "--tensor",
        &tensor,
        "--partition",
        &d("p.json"),
        "--enhancement-qp",
        "30",
        "--out",
        &d("x.pfan"),
    ]);
    run(&["decode", "--stream", &d("x.pfan"), "--out", &d("x.pft")]);
    assert!(dir.join("x.pfan.manifest.json").exists());
    assert!(dir.join("x.pft").exists());
    fs::remove_dir_all(&dir).unwrap();
}
