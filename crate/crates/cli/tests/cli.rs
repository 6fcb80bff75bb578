use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn csi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csi-swarm"))
        .args(args)
        .output()
        .unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn sim_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = csi(&[
            "sim",
            "--agents",
            "30",
            "--truth",
            "659",
            "--seed",
            "11",
            "--replications",
            "2",
            "--export-series",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stdout).contains("Conversational swarm"));
    }
    let fa = files(&a);
    assert_eq!(fa, files(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "report.jsonl",
        "series.jsonl",
        "summary.txt",
        "transcript-0-0.jsonl",
        "transcript-1-5.jsonl",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    let report = fs::read_to_string(a.join("report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 2);

    let out = csi(&["report", "--from", a.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("replication 1") && text.contains("Survey mean (WoC)"));
}

#[test]
fn sim_without_series_flag_skips_series() {
    let tmp = tempfile::tempdir().unwrap();
    let out = csi(&[
        "sim",
        "--agents",
        "6",
        "--truth",
        "500",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(!tmp.path().join("series.jsonl").exists());
}

#[test]
fn sim_rejects_bad_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    assert!(
        !csi(&["sim", "--out", dir]).status.success(),
        "truth is required"
    );
    let out = csi(&["sim", "--truth", "659", "--alpha", "2", "--out", dir]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("conform rate"));
    let out = csi(&[
        "sim",
        "--truth",
        "659",
        "--group-min",
        "7",
        "--group-max",
        "3",
        "--out",
        dir,
    ]);
    assert!(!out.status.success());
}

#[test]
fn sim_with_options_file() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = tmp.path().join("opts.jsonl");
    fs::write(
        &opts,
        "{\"id\":0,\"label\":\"few\",\"value\":300}\n{\"id\":1,\"label\":\"many\",\"value\":900}\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("o");
    let out = csi(&[
        "sim",
        "--agents",
        "12",
        "--truth",
        "600",
        "--options",
        opts.to_str().unwrap(),
        "--model",
        "independent",
        "--arms",
        "csi",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = fs::read_to_string(out_dir.join("transcript-0-0.jsonl")).unwrap();
    assert!(t.contains("few") || t.contains("many"));
    fs::write(&opts, "{\"id\":1,\"label\":\"x\",\"value\":1}\n").unwrap();
    assert!(!csi(&[
        "sim",
        "--truth",
        "1",
        "--options",
        opts.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap()
    ])
    .status
    .success());
}

#[test]
fn report_from_survey_file() {
    let tmp = tempfile::tempdir().unwrap();
    let survey = tmp.path().join("survey.jsonl");
    let opts = tmp.path().join("opts.jsonl");
    fs::write(
        &opts,
        "{\"id\":0,\"label\":\"135\",\"value\":135}\n{\"id\":1,\"label\":\"857\",\"value\":857}\n",
    )
    .unwrap();
    fs::write(
        &survey,
        "{\"participant\":1,\"option_id\":0}\n{\"participant\":2,\"option_id\":1}\n",
    )
    .unwrap();
    let out_file = tmp.path().join("r.jsonl");
    let out = csi(&[
        "report",
        "--truth",
        "659",
        "--survey",
        survey.to_str().unwrap(),
        "--options",
        opts.to_str().unwrap(),
        "--estimate",
        "577",
        "--reference",
        "machine=380",
        "--out",
        out_file.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(
        table.contains("361")
            && table.contains("163")
            && table.contains("82")
            && table.contains("279"),
        "{table}"
    );
    let line = fs::read_to_string(&out_file).unwrap();
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["csi_abs_error"], 82.0);

    assert!(!csi(&["report", "--truth", "659"]).status.success());
    assert!(!csi(&[
        "report",
        "--truth",
        "659",
        "--survey",
        "/nonexistent",
        "--estimate",
        "1"
    ])
    .status
    .success());
}
