//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "zp3", version, about = "Partial-observation Gaussian splatting reconstruction with fused diffusion priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seed a cloud from a dataset and fit it to the observations.
    Init(InitArgs),
    /// Run one fused sampling chain for a viewpoint.
    Sample(SampleArgs),
    /// Refine a checkpoint with generated supervision views.
    Refine(RefineArgs),
    /// Score a checkpoint against ground-truth views.
    Eval(EvalArgs),
    /// Render a turntable orbit.
    Render(RenderArgs),
    /// Generate a toy dataset with ground truth at all angles.
    #[command(hide = true)]
    Synth(SynthArgs),
    /// Inspect the configuration.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    pub dataset: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub checkpoint: PathBuf,
    /// Dataset providing the reference views.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Viewpoint as `azimuth,elevation` in degrees.
    #[arg(long, value_parser = parse_view, allow_hyphen_values = true)]
    pub view: (f64, f64),
    /// PNG to write; a JSON sidecar with the prior weights goes next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// Output directory for batch checkpoints, supervision images and history.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue after the last completed batch in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Keep supervision images from earlier batches.
    #[arg(long)]
    pub retain_supervision: bool,
    /// Ground-truth dataset for a before/after comparison.
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// CSV report; a text table is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Score whole frames instead of the foreground.
    #[arg(long)]
    pub full_frame: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub checkpoint: PathBuf,
    #[arg(long, visible_alias = "orbit", default_value_t = 36)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub elevation: f64,
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Focal length in pixels; defaults to 1.25 times the size.
    #[arg(long)]
    pub focal: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observed azimuth range as `start,end`.
    #[arg(long, value_parser = parse_pair, default_value = "0,90", allow_hyphen_values = true)]
    pub range: (f64, f64),
    #[arg(long, default_value_t = 64)]
    pub size: usize,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ConfigArgs {
    /// Print the default configuration.
    #[arg(long)]
    pub dump_defaults: bool,
    /// Validate a configuration file and print it with defaults filled in.
    #[arg(long)]
    pub check: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated numbers, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (a, b) = (parse(a)?, parse(b)?);
    if !a.is_finite() || !b.is_finite() {
        return Err("values must be finite".into());
    }
    Ok((a, b))
}

fn parse_view(s: &str) -> Result<(f64, f64), String> {
    let (az, el) = parse_pair(s)?;
    if !(0.0..360.0).contains(&az) {
        return Err(format!("azimuth {az} outside [0, 360)"));
    }
    if !(-90.0..=90.0).contains(&el) {
        return Err(format!("elevation {el} outside [-90, 90]"));
    }
    Ok((az, el))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_parsing() {
        assert_eq!(parse_view("30,-15").unwrap(), (30.0, -15.0));
        assert!(parse_view("360,0").is_err());
        assert!(parse_view("10,91").is_err());
        assert!(parse_view("10").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
