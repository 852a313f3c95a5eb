#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::GrayImage;
use tilesift::raster::SourceImage;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tilesift"))
}

/// Runs the binary with `args`, panicking with its stderr on failure.
pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn tilesift");
    assert!(
        out.status.success(),
        "tilesift {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn run_err(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn tilesift");
    assert!(
        !out.status.success(),
        "tilesift {args:?} unexpectedly succeeded"
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn save_png(img: &SourceImage, path: &Path) {
    GrayImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .unwrap()
    .save(path)
    .unwrap();
}

/// Writes each image as PNG under `dir/src` plus a manifest at `px_per_cm`.
pub fn write_dataset(dir: &Path, images: &[SourceImage], px_per_cm: f64) -> PathBuf {
    let src = dir.join("src");
    std::fs::create_dir_all(&src).unwrap();
    let mut manifest = String::from("image_id,path,px_per_cm,label\n");
    for img in images {
        save_png(img, &src.join(format!("{}.png", img.image_id)));
        let label = match img.label {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        manifest.push_str(&format!(
            "{},src/{}.png,{px_per_cm},{label}\n",
            img.image_id, img.image_id
        ));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).unwrap();
    path
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
