use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use omniseg::io;

fn omniseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omniseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, images: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("data_{images}_{seed}"));
    let o = omniseg(&[
        "synth",
        "--out",
        s(&out),
        "--images",
        &images.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records()
        .map(|rec| rec.unwrap()[idx].to_string())
        .collect()
}

#[test]
fn synth_is_deterministic_and_validates_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 3, 11);
    let b = dir.path().join("again");
    assert_eq!(
        code(&omniseg(&[
            "synth",
            "--out",
            s(&b),
            "--images",
            "3",
            "--seed",
            "11"
        ])),
        0
    );
    for rel in ["manifest.json", "images/img_000.png"] {
        assert_eq!(
            fs::read(a.join(rel)).unwrap(),
            fs::read(b.join(rel)).unwrap(),
            "{rel}"
        );
    }
    assert!(a.join("config.frozen.toml").exists());

    let bad = dir.path().join("bad");
    assert_eq!(
        code(&omniseg(&["synth", "--out", s(&bad), "--images", "0"])),
        2
    );
    assert_eq!(
        code(&omniseg(&["synth", "--out", s(&bad), "--images", "many"])),
        2
    );
    assert_eq!(code(&omniseg(&["frobnicate"])), 2);
}

#[test]
fn output_directory_lock_blocks_a_second_writer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("locked");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".omniseg.lock"), "").unwrap();
    assert_eq!(
        code(&omniseg(&["synth", "--out", s(&out), "--images", "2"])),
        3
    );
}

#[test]
fn config_file_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("from_file");
    fs::write(
        &cfg,
        format!("seed = 5\n[synth]\nimages = 2\nout = \"{}\"\n", s(&out)),
    )
    .unwrap();
    assert_eq!(
        code(&omniseg(&["--config", s(&cfg), "synth", "--images", "3"])),
        0
    );
    let frozen = fs::read_to_string(out.join("config.frozen.toml")).unwrap();
    assert!(frozen.contains("images = 3"), "{frozen}");
    assert!(frozen.contains("seed = 5"), "{frozen}");

    fs::write(&cfg, "[synth]\nimagez = 2\n").unwrap();
    assert_eq!(
        code(&omniseg(&["--config", s(&cfg), "synth", "--out", s(&out)])),
        2
    );
}

#[test]
fn evaluate_and_spots_on_references() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 2, 4);
    let masks = data.join("masks");

    let ev = dir.path().join("eval");
    let o = omniseg(&[
        "evaluate",
        "--pred",
        s(&masks),
        "--truth",
        s(&masks),
        "--out",
        s(&ev),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = ev.join("summary.csv");
    assert!(!rows(&summary).is_empty());
    assert!(column(&summary, "dice_pct")
        .iter()
        .all(|d| d.parse::<f64>().unwrap() == 100.0));
    for name in ["hd_um", "msd_um"] {
        assert!(column(&summary, name)
            .iter()
            .all(|d| d.is_empty() || d.parse::<f64>().unwrap() == 0.0));
    }
    assert!(ev.join("per_case.csv").exists() && ev.join("dice.png").exists());

    let sp = dir.path().join("spots");
    let o = omniseg(&[
        "spots",
        "--pred",
        s(&masks),
        "--truth",
        s(&masks),
        "--out",
        s(&sp),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let corr = sp.join("correlation.csv");
    let (r, flag) = (column(&corr, "r"), column(&corr, "flag"));
    assert!(r.iter().any(|v| !v.is_empty()));
    for (r, f) in r.iter().zip(&flag) {
        if r.is_empty() {
            assert!(f.contains("undefined"));
        } else {
            assert!((r.parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
        }
    }

    // empty predictions have no variance, so every tissue is flagged
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    for entry in fs::read_dir(&masks).unwrap() {
        let p = entry.unwrap().path();
        let m = io::read_mask_png(&p).unwrap();
        io::write_mask_png(&empty.join(p.file_name().unwrap()), &m.mapv(|_| false)).unwrap();
    }
    let sp2 = dir.path().join("spots_empty");
    assert_eq!(
        code(&omniseg(&[
            "spots",
            "--pred",
            s(&empty),
            "--truth",
            s(&masks),
            "--out",
            s(&sp2)
        ])),
        0
    );
    assert!(column(&sp2.join("correlation.csv"), "r")
        .iter()
        .all(|v| v.is_empty()));

    assert_eq!(
        code(&omniseg(&[
            "evaluate",
            "--pred",
            s(dir.path()),
            "--truth",
            s(&masks),
            "--out",
            s(&ev.join("x")),
            "--tissues",
            "pt"
        ])),
        3
    );
    assert_eq!(
        code(&omniseg(&[
            "evaluate",
            "--pred",
            s(&masks),
            "--truth",
            s(&masks),
            "--out",
            s(&ev.join("y")),
            "--tissues",
            "kidney"
        ])),
        2
    );
}

#[test]
fn train_then_segment_and_infer() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 4, 2);
    let run = dir.path().join("run");
    let o = omniseg(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--supervised-epochs",
        "1",
        "--total-epochs",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "last.ckpt",
        "curves.csv",
        "curves.png",
        "test_metrics.csv",
        "config.frozen.toml",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let ckpt = run.join("last.ckpt");
    let image = data.join("images/img_000.png");

    let seg = dir.path().join("seg");
    let o = omniseg(&[
        "segment-wsi",
        "--checkpoint",
        s(&ckpt),
        "--image",
        s(&image),
        "--tissues",
        "pt,cap",
        "--out",
        s(&seg),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        seg.join("pt.png").exists()
            && seg.join("cap.png").exists()
            && seg.join("overlay.png").exists()
    );
    assert!(!seg.join("dt.png").exists());

    let mask = dir.path().join("one.png");
    let o = omniseg(&[
        "infer",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&image),
        "--tissue",
        "dt",
        "--scale",
        "10x",
        "--out",
        s(&mask),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let full = io::read_rgb_png(&image).unwrap();
    let got = io::read_mask_png(&mask).unwrap();
    assert_eq!(got.dim(), (full.dim().1, full.dim().2));

    let mut bytes = fs::read(&ckpt).unwrap();
    let n = bytes.len();
    bytes[n - 5] ^= 0xff;
    let broken = dir.path().join("broken.ckpt");
    fs::write(&broken, bytes).unwrap();
    let o = omniseg(&[
        "infer",
        "--checkpoint",
        s(&broken),
        "--input",
        s(&image),
        "--tissue",
        "dt",
        "--scale",
        "10x",
        "--out",
        s(&dir.path().join("no.png")),
    ]);
    assert_eq!(code(&o), 3);
    let o = omniseg(&[
        "infer",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&image),
        "--tissue",
        "dt",
        "--scale",
        "15x",
        "--out",
        s(&dir.path().join("no.png")),
    ]);
    assert_eq!(code(&o), 2);
}
