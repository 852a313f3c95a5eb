use anyhow::{Context, Result};
use clap::Parser;
use log::info;

use tilesift_cli::args::{Cli, Command};
use tilesift_cli::commands::{evaluate, ingest, plot, predict, tile_sift};

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Command::Plot { input, output } = &cli.command {
        let target = plot::run(input, output.as_deref())?;
        println!("wrote {}", target.display());
        return Ok(());
    }
    let config = cli.global.resolve()?;
    match &cli.command {
        Command::Ingest { manifest } => {
            let path = manifest
                .clone()
                .or_else(|| config.image_manifest.clone().map(Into::into))
                .context("no manifest given and image_manifest is not configured")?;
            let s = ingest::run(&path, &config)?;
            println!("accepted {} rejected {}", s.accepted, s.rejected);
        }
        Command::TileSift => {
            for line in tile_sift::run(&config)? {
                println!("{line}");
            }
        }
        Command::Predict { model, probs } => {
            let source = match (model, probs) {
                (Some(m), _) => predict::ModelSource::Model(m),
                (None, Some(p)) => predict::ModelSource::Probs(p),
                (None, None) => unreachable!("clap requires --model or --probs"),
            };
            let model = predict::load_model(source)?;
            let n = predict::run(&config, &model)?;
            info!("scored {n} images with {}", model.version_id());
            println!("scored {n} images");
        }
        Command::Evaluate { probs } => {
            let (_, summary) = evaluate::run(&config, probs.as_deref())?;
            print!("{summary}");
        }
        Command::Plot { .. } => unreachable!("handled above"),
    }
    Ok(())
}
