use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gradfield::image::{save_image_auto, GrayImage};
use gradfield::stereo::{read_disparity, DisparityMap};
use gradfield::synth::{noise_texture, smooth_random};
use tempfile::TempDir;

fn gradfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradfield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn save(dir: &TempDir, name: &str, img: &GrayImage) -> String {
    let p = dir.path().join(name);
    save_image_auto(img, &p).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

/// Pair with true disparity 7 and its ground truth.
fn shifted_pair(dir: &TempDir) -> (String, String, String) {
    let left = noise_texture(128, 64, 9);
    let right = left.shifted(-7, 0);
    let gt = path(dir, "gt.pfm");
    DisparityMap::new(128, 64, vec![7.0; 128 * 64])
        .unwrap()
        .save_auto(&gt)
        .unwrap();
    (save(dir, "l.pgm", &left), save(dir, "r.pgm", &right), gt)
}

#[test]
fn stereo_writes_disparity() {
    let dir = TempDir::new().unwrap();
    let (l, r, _) = shifted_pair(&dir);
    let out = path(&dir, "d.pfm");
    let o = gradfield(&[
        "stereo",
        &l,
        &r,
        "--metric",
        "sgf",
        "--max-disp",
        "64",
        "--window",
        "5",
        "-o",
        &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_disparity(&out).unwrap();
    assert_eq!((d.width(), d.height()), (128, 64));
    assert_eq!(d.get(80, 30), Some(7.0));
}

#[test]
fn stereo_with_ground_truth_prints_stats() {
    let dir = TempDir::new().unwrap();
    let (l, r, gt) = shifted_pair(&dir);
    let o = gradfield(&[
        "stereo",
        &l,
        &r,
        "--metric",
        "sgf",
        "--max-disp",
        "19",
        "--gt",
        &gt,
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("metric,mean,bad1,bad2,bad4,invalid_pct"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "sgf");
    assert!(row[1].parse::<f64>().unwrap() < 0.5, "{text}");
}

#[test]
fn bogus_metric_is_a_config_error() {
    let o = gradfield(&[
        "stereo", "l.pgm", "r.pgm", "--metric", "bogus", "-o", "d.pfm",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for kind in ["photo", "ugf", "sgf", "sgf3", "ncc"] {
        assert!(err.contains(kind), "{err}");
    }
}

#[test]
fn even_window_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let (l, r, _) = shifted_pair(&dir);
    let o = gradfield(&[
        "stereo",
        &l,
        &r,
        "--window",
        "4",
        "-o",
        &path(&dir, "d.pfm"),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_subcommand_has_help_and_rejects_unknown_flags() {
    for sub in [
        "stereo",
        "align",
        "costcurve",
        "perturb",
        "evaldisp",
        "jaccheck",
    ] {
        assert!(gradfield(&[sub, "--help"]).status.success(), "{sub}");
        assert_eq!(
            gradfield(&[sub, "--no-such-flag"]).status.code(),
            Some(2),
            "{sub}"
        );
    }
}

#[test]
fn unreadable_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let o = gradfield(&[
        "stereo",
        "/nonexistent/l.pgm",
        "/nonexistent/r.pgm",
        "-o",
        &path(&dir, "d.pfm"),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let garbage = path(&dir, "bad.pfm");
    fs::write(&garbage, b"Pf nonsense").unwrap();
    let o = gradfield(&["evaldisp", &garbage, &garbage]);
    assert_eq!(o.status.code(), Some(3));
}

fn align_row(o: &Output) -> Vec<String> {
    let text = stdout(o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("model,tx,ty,converged,final_cost,inlier_fraction")
    );
    lines.next().unwrap().split(',').map(String::from).collect()
}

#[test]
fn align_identity_and_translation() {
    let dir = TempDir::new().unwrap();
    let reference = smooth_random(128, 128, 3.0, 1);
    let r = save(&dir, "ref.pfm", &reference);
    let o = gradfield(&["align", &r, &r, "--strict"]);
    assert!(o.status.success());
    let row = align_row(&o);
    assert_eq!(
        (row[1].as_str(), row[2].as_str(), row[3].as_str()),
        ("0", "0", "true")
    );

    let c = save(&dir, "cur.pfm", &reference.translated(3.7, -2.1));
    let trace = path(&dir, "trace.csv");
    let o = gradfield(&["align", &r, &c, "--metric", "photo", "--trace", &trace]);
    assert!(o.status.success());
    let row = align_row(&o);
    let tx: f64 = row[1].parse().unwrap();
    let ty: f64 = row[2].parse().unwrap();
    assert!((tx - 3.7).abs() < 0.1 && (ty + 2.1).abs() < 0.1, "{row:?}");
    let trace = fs::read_to_string(trace).unwrap();
    assert!(trace.starts_with("level,cost_before,cost_after"));
    assert!(trace.lines().count() > 2);
}

#[test]
fn strict_align_on_flat_image_exits_4() {
    let dir = TempDir::new().unwrap();
    let flat = save(&dir, "flat.pgm", &GrayImage::constant(64, 64, 0.5));
    assert_eq!(
        gradfield(&["align", &flat, &flat, "--strict"])
            .status
            .code(),
        Some(4)
    );
    let relaxed = gradfield(&["align", &flat, &flat]);
    assert!(relaxed.status.success());
    assert_eq!(align_row(&relaxed)[3], "false");
}

#[test]
fn jaccheck_passes_with_seed_7() {
    let o = gradfield(&["--seed", "7", "jaccheck", "--samples", "200"]);
    assert!(
        o.status.success(),
        "{}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(stdout(&o).lines().count(), 6);
}

#[test]
fn jaccheck_fails_loudly_at_an_impossible_tolerance() {
    let o = gradfield(&["jaccheck", "--kinds", "ugf", "--tolerance", "1e-12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("worst at"));
}

#[test]
fn costcurve_of_identical_images_is_zero_at_zero() {
    let dir = TempDir::new().unwrap();
    let img = save(&dir, "a.pfm", &noise_texture(64, 32, 2));
    let o = gradfield(&[
        "costcurve",
        &img,
        &img,
        "--x",
        "40",
        "--y",
        "16",
        "--metric",
        "sgf",
        "--max-disp",
        "19",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("d,cost"));
    let rows: Vec<(i32, f64)> = lines
        .map(|l| {
            let (d, c) = l.split_once(',').unwrap();
            (d.parse().unwrap(), c.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0], (0, 0.0));
    assert!(rows[1..].iter().all(|&(_, c)| c > 0.0));
}

#[test]
fn costcurve_toy_reports_four_curves() {
    let o = gradfield(&[
        "costcurve",
        "--toy",
        "--noise",
        "0.02",
        "--min-disp",
        "-10",
        "--max-disp",
        "90",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("d,ugf,mag,sgf,photo\n-10,"));
    assert_eq!(text.lines().count(), 102);
}

#[test]
fn identity_perturbation_is_bit_exact() {
    let dir = TempDir::new().unwrap();
    let input = save(&dir, "in.pfm", &smooth_random(40, 30, 2.0, 3));
    let out = path(&dir, "out.pfm");
    assert!(gradfield(&["perturb", &input, "-o", &out]).status.success());
    assert_eq!(fs::read(&input).unwrap(), fs::read(&out).unwrap());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let (l, r, _) = shifted_pair(&dir);
    let mut bytes = Vec::new();
    for threads in ["1", "3"] {
        let exp = gradfield(&[
            "--threads",
            threads,
            "--seed",
            "5",
            "perturb",
            "--experiment",
            "--width",
            "64",
            "--height",
            "48",
        ]);
        assert!(exp.status.success());
        let d = path(&dir, &format!("d{threads}.pfm"));
        assert!(gradfield(&[
            "--threads",
            threads,
            "stereo",
            &l,
            &r,
            "--max-disp",
            "19",
            "--subpixel",
            "-o",
            &d
        ])
        .status
        .success());
        bytes.push((exp.stdout, fs::read(d).unwrap()));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = TempDir::new().unwrap();
    let conf: PathBuf = dir.path().join("run.toml");
    fs::write(&conf, "kind = \"sgf3\"\nmin_disparity = 2\n").unwrap();
    let c = conf.to_str().unwrap();
    let o = gradfield(&[
        "--config",
        c,
        "--print-config",
        "stereo",
        "l",
        "r",
        "--min-disp",
        "1",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("kind = \"sgf3\""), "{text}");
    assert!(text.contains("min_disparity = 1"), "{text}");

    fs::write(&conf, "kind = \"sgf3\"\nbogus_key = 1\n").unwrap();
    assert_eq!(
        gradfield(&["--config", c, "stereo", "l", "r", "-o", "d.pfm"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        gradfield(&[
            "--config",
            Path::new("/nonexistent.toml").to_str().unwrap(),
            "jaccheck"
        ])
        .status
        .code(),
        Some(3)
    );
}

#[test]
fn evaldisp_round_trip() {
    let dir = TempDir::new().unwrap();
    let gt = DisparityMap::new(4, 1, vec![1.0, 3.0, 5.0, f64::NAN]).unwrap();
    let est = DisparityMap::new(4, 1, vec![1.5, 6.0, f64::NAN, 2.0]).unwrap();
    let (g, e) = (path(&dir, "gt.png"), path(&dir, "est.pfm"));
    gt.save_auto(&g).unwrap();
    est.save_auto(&e).unwrap();
    let o = gradfield(&["evaldisp", &e, &g, "--label", "demo"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "metric,mean,bad1,bad2,bad4,invalid_pct\ndemo,1.750000,50.0000,50.0000,0.0000,33.3333\n"
    );
}
