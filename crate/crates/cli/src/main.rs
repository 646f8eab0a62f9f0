use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use cwass::flatten::{flatten_to_disk, load_mesh, mobius_normalize, MeshFormat};
use cwass_cli::{export_correspondence, load_pair, mds_embed, run, DistanceMatrixReport, Method, RunManifest};

#[derive(Parser)]
#[command(name = "cwass", version, about = "Conformal Wasserstein distances between disk-type surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flatten a disk-type mesh to a conformal density.
    Flatten {
        mesh: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Mesh format; guessed from the extension when omitted.
        #[arg(long, value_parser = ["off", "obj"])]
        format: Option<String>,
        /// Keep the raw harmonic map instead of centering the density.
        #[arg(long)]
        no_normalize: bool,
        /// Also write the flattened mesh as OBJ.
        #[arg(long)]
        flat_obj: Option<PathBuf>,
        /// Also write the distortion report as JSON.
        #[arg(long)]
        quality: Option<PathBuf>,
    },
    /// Pairwise distances over the inputs of a manifest.
    Dist {
        #[arg(long)]
        manifest: PathBuf,
        /// Overrides the manifest's method.
        #[arg(long)]
        method: Option<Method>,
        /// Output directory; overrides the manifest's.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Overrides the neighborhood radius R.
        #[arg(long)]
        radius: Option<f64>,
        /// Overrides the support size of `trd`.
        #[arg(long)]
        n_points: Option<usize>,
        /// Overrides the support size of `quotient`.
        #[arg(long)]
        ot_points: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classical MDS of a distance matrix.
    Mds {
        matrix: PathBuf,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
        dim: u8,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Correspondence CSV of a computed pair.
    Corr {
        pair: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn flatten(
    mesh: PathBuf,
    output: PathBuf,
    format: Option<String>,
    no_normalize: bool,
    flat_obj: Option<PathBuf>,
    quality: Option<PathBuf>,
) -> Result<()> {
    let format = match format.as_deref() {
        Some("off") => MeshFormat::Off,
        Some("obj") => MeshFormat::Obj,
        _ => MeshFormat::from_path(&mesh).context("cannot tell the mesh format; pass --format")?,
    };
    let mesh = load_mesh(&mesh, format)?;
    let mut result = flatten_to_disk(&mesh)?;
    if !no_normalize {
        result = mobius_normalize(&result)?;
    }
    result.density.save(&output)?;
    if let Some(path) = flat_obj {
        result.save_obj(path)?;
    }
    if let Some(path) = quality {
        std::fs::write(path, serde_json::to_string_pretty(&result.quality)?)?;
    }
    if result.quality.flipped_faces > 0 {
        eprintln!("warning: {} flipped faces", result.quality.flipped_faces);
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

// Ok(false) when the command finished but some pairs failed.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Flatten { mesh, output, format, no_normalize, flat_obj, quality } => {
            flatten(mesh, output, format, no_normalize, flat_obj, quality)?;
        }
        Command::Dist { manifest, method, output, radius, n_points, ot_points, seed } => {
            let mut m = RunManifest::load(&manifest)?;
            if let Some(method) = method {
                m.method = method;
            }
            if let Some(r) = radius {
                m.cost.radius = r;
            }
            if let Some(n) = n_points {
                m.n_points = n;
            }
            if let Some(n) = ot_points {
                m.quotient.ot_points = n;
            }
            if let Some(s) = seed {
                m.seed = s;
            }
            let Some(dir) = output.or_else(|| m.output.clone()) else {
                bail!("no output directory: pass -o or set \"output\" in the manifest");
            };
            let out = run(&m)?;
            out.write(&dir)?;
            for f in &out.report.failed_inputs {
                eprintln!("input {} ({}) failed: {}", f.index, f.label, f.error);
            }
            for p in out.report.pairs.iter().filter(|p| p.error.is_some()) {
                eprintln!("pair {} {} failed: {}", p.i, p.j, p.error.as_deref().unwrap_or(""));
            }
            return Ok(out.report.is_complete());
        }
        Command::Mds { matrix, dim, output } => {
            let report = DistanceMatrixReport::load(&matrix)?;
            let embedding = mds_embed(&report.dense()?, dim as usize)?;
            if !embedding.truncated.is_empty() {
                eprintln!("truncated negative eigenvalues: {:?}", embedding.truncated);
            }
            std::fs::write(&output, embedding.to_csv(&report.labels))?;
        }
        Command::Corr { pair, output } => {
            std::fs::write(&output, export_correspondence(&load_pair(&pair)?))?;
        }
    }
    Ok(true)
}
