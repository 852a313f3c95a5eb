mod common;

use std::collections::BTreeSet;

use common::{run_err, run_ok, s, write_dataset};
use tilesift::evaluator::{generate_synthetic, SyntheticSpec};
use tilesift::raster::SourceImage;
use tilesift::tiler::TileRecord;

fn tiles(out: &std::path::Path) -> Vec<TileRecord> {
    std::fs::read_to_string(out.join("tiles.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn ingest_screens_and_resamples() {
    let dir = tempfile::tempdir().unwrap();
    let img = SourceImage::from_fn("a", 300, 200, 30.0, Some(true), |x, y| (x + y) as u8).unwrap();
    let manifest = write_dataset(dir.path(), &[img], 30.0);
    let mut text = std::fs::read_to_string(&manifest).unwrap();
    text.push_str("low,src/a.png,20,0\n");
    std::fs::write(&manifest, text).unwrap();
    let out = dir.path().join("out");
    run_ok(&["ingest", s(&manifest), "--out-dir", s(&out)]);

    let log = std::fs::read_to_string(out.join("normalization.log")).unwrap();
    assert!(log.contains("a: accepted"), "{log}");
    assert!(log.contains("low: rejected: upsampling"), "{log}");
    let store = std::fs::read_to_string(out.join("store.csv")).unwrap();
    assert_eq!(store.lines().count(), 2);
    assert!(store.contains("a,images/a.png,25.0,1,250,167"), "{store}");
}

#[test]
fn ingest_rejects_duplicates_and_warns_on_empty() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    std::fs::write(
        &manifest,
        "image_id,path,px_per_cm,label\nx,a.png,30,1\nx,b.png,30,0\n",
    )
    .unwrap();
    let err = run_err(&[
        "ingest",
        s(&manifest),
        "--out-dir",
        s(&dir.path().join("o")),
    ]);
    assert!(err.contains("duplicate image_id \"x\""), "{err}");

    std::fs::write(&manifest, "image_id,path,px_per_cm,label\n").unwrap();
    let out = dir.path().join("empty");
    let res = run_ok(&["ingest", s(&manifest), "--out-dir", s(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("no images"));
    let store = std::fs::read_to_string(out.join("store.csv")).unwrap();
    assert_eq!(store.lines().count(), 1);
}

#[test]
fn tile_sift_on_constant_image() {
    let dir = tempfile::tempdir().unwrap();
    let img = SourceImage::from_fn("flat", 200, 200, 25.0, None, |_, _| 77).unwrap();
    let manifest = write_dataset(dir.path(), &[img], 25.0);
    let out = dir.path().join("out");
    run_ok(&["ingest", s(&manifest), "--out-dir", s(&out)]);
    let res = run_ok(&[
        "tile-sift",
        "--out-dir",
        s(&out),
        "--tile-sizes",
        "100",
        "--overlap",
        "0.5",
    ]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("constant image"), "{stdout}");
    assert!(stdout.contains("N=9 n=9"), "{stdout}");
    let t = tiles(&out);
    assert_eq!(t.len(), 9);
    assert!(t.iter().all(|t| t.retained && t.entropy == 0.0));
    let first = std::fs::read_to_string(out.join("tiles.jsonl")).unwrap();
    assert!(first.starts_with(
        r#"{"image_id":"flat","scale_id":1,"tile_index":0,"x":0,"y":0,"w":100,"h":100,"entropy":0.0,"retained":true}"#
    ));
}

#[test]
fn relaxed_sift_retains_superset() {
    let dir = tempfile::tempdir().unwrap();
    let images = generate_synthetic(&SyntheticSpec::new(3, 160, 128, 4)).unwrap();
    let manifest = write_dataset(dir.path(), &images, 25.0);
    let out = dir.path().join("out");
    run_ok(&["ingest", s(&manifest), "--out-dir", s(&out)]);
    let retained = |relax: &str| -> BTreeSet<(String, u32, usize)> {
        run_ok(&[
            "tile-sift",
            "--out-dir",
            s(&out),
            "--tile-sizes",
            "32,48",
            "--relax",
            relax,
        ]);
        tiles(&out)
            .into_iter()
            .filter(|t| t.retained)
            .map(|t| (t.image_id, t.scale_id, t.tile_index))
            .collect()
    };
    let strict = retained("1.0");
    let relaxed = retained("0.99");
    assert!(strict.is_subset(&relaxed));
    let all = tiles(&out);
    let mut sorted = all.clone();
    sorted.sort_by_key(TileRecord::key);
    assert_eq!(all, sorted);
}

#[test]
fn predict_with_external_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let images = generate_synthetic(&SyntheticSpec::new(2, 128, 128, 8)).unwrap();
    let manifest = write_dataset(dir.path(), &images, 25.0);
    let out = dir.path().join("out");
    let o = s(&out);
    run_ok(&["ingest", s(&manifest), "--out-dir", o]);
    run_ok(&["tile-sift", "--out-dir", o, "--tile-sizes", "32,64"]);

    let mut probs = String::from("image_id,scale_id,tile_index,prob\n");
    for t in tiles(&out).iter().filter(|t| t.retained) {
        probs.push_str(&format!(
            "{},{},{},1.0\n",
            t.image_id, t.scale_id, t.tile_index
        ));
    }
    let probs_path = dir.path().join("probs.csv");
    std::fs::write(&probs_path, &probs).unwrap();
    run_ok(&[
        "predict",
        "--out-dir",
        o,
        "--tile-sizes",
        "32,64",
        "--probs",
        s(&probs_path),
        "--weights",
        "0.25;0.75",
    ]);
    let agg = std::fs::read_to_string(out.join("aggregation.csv")).unwrap();
    let mut lines = agg.lines();
    assert_eq!(
        lines.next(),
        Some("image_id,scale_id,method,score,decision,tile_count,variance")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(
            (f[2], f[3], f[4], f[6]),
            ("average", "1", "1", "0"),
            "{row}"
        );
    }
    let combined = std::fs::read_to_string(out.join("combined.csv")).unwrap();
    assert!(combined.starts_with(
        "image_id,scale_id,method,score,decision,tile_count,variance,final_score,weights\n"
    ));
    assert!(combined
        .lines()
        .skip(1)
        .all(|l| l.ends_with(",1,0.25;0.75")));

    let dropped: Vec<&str> = probs
        .lines()
        .filter(|l| !l.starts_with("neg-000,2,"))
        .collect();
    let first_missing = probs.lines().find(|l| l.starts_with("neg-000,2,")).unwrap();
    let idx = first_missing.split(',').nth(2).unwrap();
    std::fs::write(&probs_path, dropped.join("\n") + "\n").unwrap();
    let err = run_err(&["predict", "--out-dir", o, "--probs", s(&probs_path)]);
    assert!(
        err.contains(&format!("image_id=neg-000, scale_id=2, tile_index={idx}")),
        "{err}"
    );
}

#[test]
fn evaluate_writes_report_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let images = generate_synthetic(&SyntheticSpec::new(8, 128, 128, 2)).unwrap();
    let manifest = write_dataset(dir.path(), &images, 25.0);
    let out = dir.path().join("out");
    let o = s(&out);
    run_ok(&["ingest", s(&manifest), "--out-dir", o]);
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "tile_sizes = 32\nepochs = 10\nn_folds = 4\nseed = 3\n",
    )
    .unwrap();
    let res = run_ok(&["evaluate", "--config", s(&cfg), "--out-dir", o]);
    let summary = String::from_utf8_lossy(&res.stdout);
    assert!(summary.contains("accuracy range: "), "{summary}");
    assert!(summary.contains("tiles/fold"), "{summary}");

    let eval = out.join("eval");
    let report = std::fs::read_to_string(eval.join("eval_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 5);
    for f in 1..=4 {
        let csv =
            std::fs::read_to_string(eval.join(format!("accuracy_fold{f}_scale1.csv"))).unwrap();
        assert!(csv.starts_with("epoch,accuracy\n"));
        assert_eq!(csv.lines().count(), 11);
        assert!(eval.join(format!("accuracy_fold{f}_scale1.svg")).exists());
        assert!(eval
            .join(format!("checkpoints/fold{f}_scale1.json"))
            .exists());
    }
    for class in ["positive", "negative"] {
        let csv = std::fs::read_to_string(eval.join(format!("entropy_{class}.csv"))).unwrap();
        assert!(csv.starts_with("# image_entropy="));
        let svg = std::fs::read_to_string(eval.join(format!("entropy_{class}.svg"))).unwrap();
        assert!(svg.contains("image entropy = "));
    }

    std::fs::write(&cfg, "tile_sizes = 32\nepochs = 2\nn_folds = 9\n").unwrap();
    let err = run_err(&["evaluate", "--config", s(&cfg), "--out-dir", o]);
    assert!(err.contains("fold"), "{err}");
}

#[test]
fn evaluate_requires_labels() {
    let dir = tempfile::tempdir().unwrap();
    let img = SourceImage::from_fn("u", 64, 64, 25.0, None, |x, _| x as u8).unwrap();
    let manifest = write_dataset(dir.path(), &[img], 25.0);
    let out = dir.path().join("out");
    run_ok(&["ingest", s(&manifest), "--out-dir", s(&out)]);
    let err = run_err(&["evaluate", "--out-dir", s(&out), "--tile-sizes", "32"]);
    assert!(err.contains("u"), "{err}");
}

#[test]
fn plot_detects_schema() {
    let dir = tempfile::tempdir().unwrap();
    let acc = dir.path().join("acc.csv");
    std::fs::write(&acc, "epoch,accuracy\n1,0.5\n2,0.8\n3,0.7\n").unwrap();
    run_ok(&["plot", s(&acc)]);
    let svg = std::fs::read_to_string(dir.path().join("acc.svg")).unwrap();
    assert!(svg.contains("peak 0.8 at epoch 2"));

    let hist = dir.path().join("h.csv");
    std::fs::write(
        &hist,
        "# image_entropy=3.25\nbin_low,bin_high,count\n3,3.05,4\n",
    )
    .unwrap();
    let target = dir.path().join("custom.svg");
    run_ok(&["plot", s(&hist), "-o", s(&target)]);
    assert!(std::fs::read_to_string(&target)
        .unwrap()
        .contains("image entropy = 3.25"));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert!(run_err(&["plot", s(&empty)]).contains("empty CSV"));
    let odd = dir.path().join("odd.csv");
    std::fs::write(&odd, "foo,bar\n1,2\n").unwrap();
    assert!(run_err(&["plot", s(&odd)]).contains("schema"));
}

#[test]
fn config_file_and_flags_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let err = run_err(&["tile-sift", "--config", s(&cfg)]);
    assert!(err.contains("colour"), "{err}");
    let err = run_err(&["tile-sift", "--out-dir", s(&dir.path().join("none"))]);
    assert!(err.contains("ingest"), "{err}");
    let err = run_err(&["tile-sift", "--relax", "1.5"]);
    assert!(err.contains("1.5"), "{err}");
}
