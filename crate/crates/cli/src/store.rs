//! Image manifest, normalized image store and tile manifest files.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tilesift::raster::{load_image, SourceImage};
use tilesift::tiler::TileRecord;

pub const STORE_FILE: &str = "store.csv";
pub const NORMALIZATION_LOG: &str = "normalization.log";
pub const TILE_MANIFEST: &str = "tiles.jsonl";
pub const IMAGE_DIR: &str = "images";

/// One row of the input manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub image_id: String,
    pub path: PathBuf,
    pub px_per_cm: f64,
    pub label: Option<bool>,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    image_id: String,
    path: String,
    px_per_cm: f64,
    label: Option<String>,
}

fn parse_label(raw: Option<&str>, image_id: &str) -> Result<Option<bool>> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some("1") => Ok(Some(true)),
        Some("0") => Ok(Some(false)),
        Some(other) => bail!("image {image_id}: label must be 0, 1 or blank, got {other:?}"),
    }
}

/// Ids become file names in the store, so they must be plain names.
fn check_id(id: &str) -> Result<()> {
    let bad = id.is_empty()
        || id == "."
        || id == ".."
        || id.chars().any(|c| c == '/' || c == '\\' || c.is_control());
    if bad {
        bail!("invalid image_id {id:?}");
    }
    Ok(())
}

/// Reads an `image_id,path,px_per_cm,label` manifest. Relative paths are
/// resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening manifest {}", path.display()))?;
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<RawRow>().enumerate() {
        let raw = rec.with_context(|| format!("manifest {} row {}", path.display(), i + 2))?;
        check_id(&raw.image_id)?;
        if !seen.insert(raw.image_id.clone()) {
            bail!(
                "duplicate image_id {:?} in {}",
                raw.image_id,
                path.display()
            );
        }
        let label = parse_label(raw.label.as_deref(), &raw.image_id)?;
        rows.push(ManifestRow {
            path: base.join(&raw.path),
            image_id: raw.image_id,
            px_per_cm: raw.px_per_cm,
            label,
        });
    }
    Ok(rows)
}

/// One normalized image in the store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreRow {
    pub image_id: String,
    /// Relative to the output directory.
    pub path: String,
    pub px_per_cm: f64,
    pub label: String,
    pub width: usize,
    pub height: usize,
}

impl StoreRow {
    pub fn label(&self) -> Result<Option<bool>> {
        parse_label(Some(&self.label), &self.image_id)
    }
}

pub fn label_field(label: Option<bool>) -> String {
    match label {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => String::new(),
    }
}

pub fn write_store(out_dir: &Path, rows: &[StoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join(STORE_FILE))?;
    if rows.is_empty() {
        w.write_record(["image_id", "path", "px_per_cm", "label", "width", "height"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_store(out_dir: &Path) -> Result<Vec<StoreRow>> {
    let path = out_dir.join(STORE_FILE);
    if !path.exists() {
        bail!(
            "no image store at {}; run `tilesift ingest` first",
            path.display()
        );
    }
    let mut reader = csv::Reader::from_path(&path)?;
    reader
        .deserialize()
        .map(|r| r.with_context(|| format!("reading {}", path.display())))
        .collect()
}

pub fn load_store_image(out_dir: &Path, row: &StoreRow) -> Result<SourceImage> {
    let mut img = load_image(out_dir.join(&row.path), row.px_per_cm, row.label()?)
        .with_context(|| format!("loading stored image {}", row.image_id))?;
    img.image_id = row.image_id.clone();
    Ok(img)
}

/// Writes tile records as JSON lines, sorted by key.
pub fn write_tiles(path: &Path, tiles: &mut [TileRecord]) -> Result<()> {
    tiles.sort_by_key(TileRecord::key);
    let mut w = BufWriter::new(File::create(path)?);
    for t in tiles.iter() {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tiles(path: &Path) -> Result<Vec<TileRecord>> {
    if !path.exists() {
        bail!(
            "no tile manifest at {}; run `tilesift tile-sift` first",
            path.display()
        );
    }
    let reader = BufReader::new(File::open(path)?);
    let mut tiles = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TileRecord = serde_json::from_str(&line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        tiles.push(rec);
    }
    Ok(tiles)
}
