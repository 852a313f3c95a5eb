use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tilesift::aggregator::{Method, WeightVector};
use tilesift::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "tilesift",
    version,
    about = "Entropy-sifted tiling and tile-probability aggregation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override values from the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct GlobalArgs {
    /// Key-value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<String>,
    #[arg(long, global = true)]
    pub relax: Option<f64>,
    #[arg(long, global = true)]
    pub overlap: Option<f64>,
    /// Comma-separated tile sides, one scale each.
    #[arg(long, global = true, value_delimiter = ',')]
    pub tile_sizes: Option<Vec<usize>>,
    /// Match tile aspect ratio to each image.
    #[arg(long, global = true)]
    pub rectangular: bool,
    #[arg(long, global = true)]
    pub method: Option<Method>,
    /// Per-scale weights, e.g. `0.4;0.6`.
    #[arg(long, global = true)]
    pub weights: Option<WeightVector>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Screen and resample the images listed in a manifest CSV.
    Ingest {
        /// `image_id,path,px_per_cm,label` manifest; defaults to `image_manifest`.
        manifest: Option<PathBuf>,
    },
    /// Tile and sift every ingested image.
    TileSift,
    /// Score sifted tiles and aggregate them per image.
    Predict {
        /// Baseline model checkpoint (JSON).
        #[arg(long, conflicts_with = "probs", required_unless_present = "probs")]
        model: Option<PathBuf>,
        /// External `image_id,scale_id,tile_index,prob` CSV.
        #[arg(long)]
        probs: Option<PathBuf>,
    },
    /// Cross-validate the pipeline on labeled ingested images.
    Evaluate {
        /// Use external tile probabilities instead of training the baseline.
        #[arg(long)]
        probs: Option<PathBuf>,
    },
    /// Render an entropy-distribution or accuracy CSV as SVG.
    Plot {
        input: PathBuf,
        /// Defaults to the input path with an `.svg` extension.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

impl GlobalArgs {
    /// Loads the config file (or defaults) and applies flag overrides.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            config.out_dir = dir.clone();
        }
        if let Some(relax) = self.relax {
            config.relax = relax;
        }
        if let Some(overlap) = self.overlap {
            config.overlap = overlap;
        }
        if let Some(sizes) = &self.tile_sizes {
            config.tile_sizes = sizes.clone();
        }
        if self.rectangular {
            config.rectangular = true;
        }
        if let Some(method) = self.method {
            config.method = method;
        }
        if let Some(weights) = &self.weights {
            config.weights = Some(weights.clone());
        }
        config.validate()?;
        Ok(config)
    }
}
