use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/assets")
}

fn asset(name: &str) -> String {
    assets().join(name).to_string_lossy().into_owned()
}

fn sftc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sftc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sftc(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    sftc(args).status.code().expect("exit code")
}

fn path(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn encode(dir: &tempfile::TempDir, extra: &[&str]) -> String {
    let out = path(dir, "face.sftc");
    let mut args: Vec<String> =
        ["encode", "--input", &asset("face_00.png"), "--feature", &asset("face_00.fvec")]
            .into_iter()
            .chain(["--model", &asset("model.nnwf"), "--output", &out])
            .map(str::to_owned)
            .collect();
    args.extend(extra.iter().map(|s| s.to_string()));
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
    out
}

fn psnr_column(csv: &[u8]) -> f64 {
    let text = String::from_utf8_lossy(csv);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("image_id,mode,total_bits,bpp,psnr_db,mse,mae,embed_l2"));
    lines.next().unwrap().split(',').nth(4).unwrap().parse().unwrap()
}

#[test]
fn lossless_residual_roundtrip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let stream = encode(&dir, &["--enh-codec", "external", "--external-cmd", "gzip -9 -n -c {IN} > {OUT}"]);
    let decoded = path(&dir, "full.png");
    // without the decoder command the layer cannot be decoded
    assert_eq!(
        code(&["decode", "--input", &stream, "--model", &asset("model.nnwf"), "--output", &decoded]),
        5
    );
    ok(&[
        "decode",
        "--input",
        &stream,
        "--mode",
        "full",
        "--model",
        &asset("model.nnwf"),
        "--external-cmd",
        "gzip -d -c {IN} > {OUT}",
        "--output",
        &decoded,
    ]);
    let out = ok(&[
        "metrics",
        "--reference",
        &asset("face_00.png"),
        "--decoded",
        &decoded,
        "--stream",
        &stream,
        "--feature",
        &asset("face_00.fvec"),
    ]);
    let psnr = psnr_column(&out.stdout);
    assert!(psnr >= 48.0, "{psnr}");
}

#[test]
fn decode_modes_and_extract_base() {
    let dir = tempfile::tempdir().unwrap();
    let stream = encode(&dir, &["--quality", "0.05"]);
    let base = path(&dir, "base.sftc");
    ok(&["extract-base", "--input", &stream, "--output", &base]);
    assert!(fs::metadata(&base).unwrap().len() < fs::metadata(&stream).unwrap().len());

    let (fa, fb) = (path(&dir, "a.fvec"), path(&dir, "b.fvec"));
    ok(&["decode", "--input", &stream, "--mode", "base", "--output", &fa]);
    ok(&["decode", "--input", &base, "--mode", "base", "--output", &fb]);
    assert_eq!(fs::read(&fa).unwrap(), fs::read(&fb).unwrap());
    assert_eq!(&fs::read(&fa).unwrap()[..4], b"FVEC");

    let (ca, cb) = (path(&dir, "a.png"), path(&dir, "b.png"));
    ok(&["decode", "--input", &stream, "--mode", "coarse", "--model", &asset("model.nnwf"), "--output", &ca]);
    ok(&["decode", "--input", &base, "--mode", "coarse", "--model", &asset("model.nnwf"), "--output", &cb]);
    assert_eq!(fs::read(&ca).unwrap(), fs::read(&cb).unwrap());

    // full mode on a base-only stream
    let full = path(&dir, "full.png");
    assert_eq!(
        code(&[
            "decode",
            "--input",
            &base,
            "--mode",
            "full",
            "--model",
            &asset("model.nnwf"),
            "--output",
            &full
        ]),
        5
    );
    ok(&["decode", "--input", &stream, "--mode", "full", "--model", &asset("model.nnwf"), "--output", &full]);
}

#[test]
fn extractor_hook_supplies_the_feature() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir, "hook.sftc");
    let hook = format!("cp {} {{OUT}} # {{IN}}", asset("face_01.fvec"));
    ok(&[
        "encode",
        "--input",
        &asset("face_01.png"),
        "--extractor",
        &hook,
        "--enh-codec",
        "none",
        "--output",
        &out,
    ]);
    let fv = path(&dir, "f.fvec");
    ok(&["decode", "--input", &out, "--mode", "base", "--output", &fv]);
    assert_eq!(fs::read(&fv).unwrap().len(), 8 + 128 * 4);
}

#[test]
fn sweep_writes_a_monotone_ladder() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        for ext in ["png", "fvec"] {
            let name = format!("face_{i:02}.{ext}");
            fs::copy(assets().join(&name), dir.path().join(&name)).unwrap();
        }
    }
    let csv = path(&dir, "sweep.csv");
    ok(&[
        "sweep",
        "--images",
        &dir.path().to_string_lossy(),
        "--model",
        &asset("model.nnwf"),
        "--bits",
        "8",
        "--quality",
        "0.1,0.05,0.02",
        "--out-csv",
        &csv,
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 5);
    for chunk in rows.chunks(5) {
        assert_eq!(chunk[0][1], "base");
        assert_eq!(chunk[0][4], "");
        let ladder = &chunk[1..];
        for w in ladder.windows(2) {
            let (b0, b1): (f64, f64) = (w[0][3].parse().unwrap(), w[1][3].parse().unwrap());
            let (p0, p1): (f64, f64) = (w[0][4].parse().unwrap(), w[1][4].parse().unwrap());
            assert!(b1 > b0 && p1 >= p0, "{w:?}");
        }
    }
}

#[test]
fn verification_over_pairs() {
    let out = ok(&["metrics", "--pairs", &asset("pairs.csv"), "--bits", "8"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("pairs,bits,threshold,accuracy"));
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[0], "20");
    assert_eq!(fields[1], "8");
    assert_eq!(fields[3].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(&dir, "missing.png");
    let out = path(&dir, "x.sftc");
    // usage
    assert_eq!(code(&["encode", "--input", &missing]), 2);
    // file not found
    assert_eq!(
        code(&[
            "encode",
            "--input",
            &missing,
            "--feature",
            &asset("face_00.fvec"),
            "--enh-codec",
            "none",
            "--output",
            &out
        ]),
        3
    );
    // parse error: an image is not a stream
    assert_eq!(code(&["extract-base", "--input", &asset("face_00.png"), "--output", &out]), 4);
    assert_eq!(code(&["decode", "--input", &asset("face_00.fvec"), "--mode", "base", "--output", &out]), 4);
    // external codec failure
    assert_eq!(
        code(&[
            "encode",
            "--input",
            &asset("face_00.png"),
            "--feature",
            &asset("face_00.fvec"),
            "--model",
            &asset("model.nnwf"),
            "--enh-codec",
            "external",
            "--external-cmd",
            "false {IN} {OUT}",
            "--output",
            &out,
        ]),
        6
    );
    // invalid input: enhancement without a model, bad bit depth
    assert_eq!(
        code(&[
            "encode",
            "--input",
            &asset("face_00.png"),
            "--feature",
            &asset("face_00.fvec"),
            "--output",
            &out
        ]),
        7
    );
    assert_eq!(
        code(&[
            "encode",
            "--input",
            &asset("face_00.png"),
            "--feature",
            &asset("face_00.fvec"),
            "--bits",
            "1",
            "--enh-codec",
            "none",
            "--output",
            &out
        ]),
        7
    );
}
