use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use usbf_core::bone::{bone_probability_map, BoneProbabilityMap};
use usbf_core::config::{PhantomSpec, PipelineConfig};
use usbf_core::container::Container;
use usbf_core::enhancement::{beam_enhance, otsu_threshold};
use usbf_core::metrics::{evaluate, make_background, MetricsReport};
use usbf_core::pipeline;
use usbf_core::raster::{read_pgm, write_pgm};

#[derive(Parser)]
#[command(name = "usbf", version, about = "Plane-wave beamforming and bone enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of steering angles.
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Attention weights as `alpha,beta,gamma`.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<[f64; 3]>,
    /// Log-compression dynamic range in dB.
    #[arg(long = "dynamic-range")]
    dynamic_range: Option<f64>,
}

impl Overrides {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(n) = self.angles {
            config.acquisition.angle_count = n;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(w) = self.weights {
            config.enhance.weights = w;
        }
        if let Some(dr) = self.dynamic_range {
            config.beamformer.dynamic_range_db = dr;
        }
        config.validate().context("invalid configuration")?;
        Ok(config)
    }
}

fn parse_weights(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected alpha,beta,gamma, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
    }
    Ok(out)
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an RF sweep over a phantom and store it as a container.
    Simulate {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Beamform an RF container into a 16-bit PGM B-mode image.
    Beamform {
        #[command(flatten)]
        opts: Overrides,
        /// RF container written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the bone probability map of a B-mode PGM.
    Bpm {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blend a B-mode image with its gated bone map.
    Enhance {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        bpm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an image; the foreground is the Otsu-gated bone map, or the
    /// phantom surfaces when `--phantom` is given.
    Metrics {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        bpm: PathBuf,
        /// Reference image for SSI, SSIM and EPI.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        phantom: Option<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage and write images plus a metrics report to a directory.
    Pipeline {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a paired dataset with one record per phantom file.
    ExportDataset {
        #[command(flatten)]
        opts: Overrides,
        #[arg(long, required = true, num_args = 1..)]
        phantom: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a container or PGM file.
    Inspect { file: PathBuf },
}

fn load_phantom(path: &Path) -> Result<PhantomSpec> {
    PhantomSpec::load(path).with_context(|| format!("reading phantom {}", path.display()))
}

fn load_image(path: &Path) -> Result<Array2<f64>> {
    read_pgm(path).with_context(|| format!("reading image {}", path.display()))
}

fn format_report(report: &MetricsReport) -> String {
    let mut out = format!("cr_db = {}\nsnr_db = {}\n", report.cr_db, report.snr_db);
    if let Some(s) = report.similarity {
        out += &format!("ssi = {}\nssim = {}\nepi_percent = {}\n", s.ssi, s.ssim, s.epi_percent);
    }
    out
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { opts, phantom, out } => {
            let config = opts.load()?;
            let sweep = pipeline::acquire(&config, &load_phantom(&phantom)?, config.seed)?;
            pipeline::sweep_to_container(&sweep, &config)?.save(&out)?;
            println!("wrote {} transmissions to {}", sweep.frames().len(), out.display());
        }
        Command::Beamform { opts, input, out } => {
            let config = opts.load()?;
            let container = Container::load(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut sweep = pipeline::sweep_from_container(&container)?;
            if let Some(n) = opts.angles {
                sweep = pipeline::center_subset(&sweep, n)?;
            }
            let (bmode, _) = pipeline::bmode_from_sweep(&sweep, &config)?;
            write_pgm(&out, bmode.values())?;
            println!("beamformed {} transmissions into {}", sweep.frames().len(), out.display());
        }
        Command::Bpm { opts, input, out } => {
            let config = opts.load()?;
            let map = bone_probability_map(&load_image(&input)?, &config.bpm.build()?)?;
            write_pgm(&out, map.values())?;
        }
        Command::Enhance { opts, input, bpm, out } => {
            let config = opts.load()?;
            let map = BoneProbabilityMap::from_values(load_image(&bpm)?)?;
            let beam = beam_enhance(&load_image(&input)?, &map, config.enhance.build()?)?;
            write_pgm(&out, &beam.clamped())?;
        }
        Command::Metrics { opts, input, bpm, reference, phantom, out } => {
            let config = opts.load()?;
            let image = load_image(&input)?;
            let map = BoneProbabilityMap::from_values(load_image(&bpm)?)?;
            let roi = match phantom {
                Some(p) => {
                    let grid = config.grid.build()?;
                    if grid.shape() != image.dim() {
                        bail!("image is {:?} but the configured grid is {:?}", image.dim(), grid.shape());
                    }
                    pipeline::build_roi(&grid, &load_phantom(&p)?, &map, &config)?
                }
                None => make_background(&otsu_threshold(&map).1, config.metrics.dilation_radius)?,
            };
            let reference = reference.as_deref().map(load_image).transpose()?;
            let report = evaluate(&image, reference.as_ref(), &roi, &config.metrics.build()?)?;
            let text = format_report(&report);
            match out {
                Some(path) => fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Pipeline { opts, phantom, out } => {
            let config = opts.load()?;
            let result = pipeline::run_pipeline(&config, &load_phantom(&phantom)?, &out)?;
            print!("{}", pipeline::format_metrics(&result));
        }
        Command::ExportDataset { opts, phantom, out } => {
            let config = opts.load()?;
            let phantoms = phantom.iter().map(|p| load_phantom(p)).collect::<Result<Vec<_>>>()?;
            let dataset = pipeline::export_dataset(&config, &phantoms, &out)?;
            println!("wrote {} records to {}", dataset.records.len(), out.display());
        }
        Command::Inspect { file } => {
            print!("{}", pipeline::inspect(&file).with_context(|| format!("inspecting {}", file.display()))?);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
