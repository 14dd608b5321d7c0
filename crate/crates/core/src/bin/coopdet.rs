//! Command-line experiment runner.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use coopdet::experiment::{
    cmd_compare_schemes, cmd_density_analysis, cmd_generate, cmd_roi_study, cmd_sensor_sweep, load_dataset_scenario,
    set_label, DetectorChoice, ExperimentSpec, FrameSource, SensorSets,
};
use coopdet::detector::FileDetector;
use coopdet::scene::build_scenario;
use coopdet::{DetectorParams, Rect, ScenarioConfig, Scheme, SensorId};

#[derive(Parser)]
#[command(name = "coopdet", version, about = "Cooperative detection experiments on simulated infrastructure sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render frames and write them as a dataset.
    Generate(Common),
    /// AP and communication cost of each fusion scheme.
    Compare(Common),
    /// AP over sensor subsets (all subsets unless --sensors is given).
    Sweep(Common),
    /// AP inside a region of interest for a set and its single sensors.
    Roi(Common),
    /// Point-density CDFs and IOU versus density.
    Density(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file. Defaults to the dataset's scenario, then to --scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shipped scenario name.
    #[arg(long, default_value = "t_junction")]
    scenario: String,
    /// Read frames from a dataset written by `generate` instead of rendering.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Fusion schemes, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    /// A sensor set such as `0,3` (repeatable), or `all_subsets`.
    #[arg(long)]
    sensors: Vec<String>,
    /// IOU thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    kappa: Vec<f64>,
    /// Hybrid fusion radius in meters; `inf` disables the far field.
    #[arg(long)]
    radius: Option<f64>,
    /// Region of interest `min_x,min_y,max_x,max_y`.
    #[arg(long, allow_hyphen_values = true)]
    roi: Option<Rect>,
    /// `oracle`, `perfect`, or `file:PATH` with precomputed detections.
    #[arg(long, default_value = "oracle")]
    detector: String,
}

fn parse_sets(values: &[String]) -> Result<Option<SensorSets>> {
    if values.is_empty() {
        return Ok(None);
    }
    if values.iter().any(|v| v == "all_subsets") {
        if values.len() > 1 {
            bail!("all_subsets cannot be combined with explicit sets");
        }
        return Ok(Some(SensorSets::AllSubsets));
    }
    let mut sets = Vec::new();
    for v in values {
        let set = v
            .split([',', '+'])
            .map(|s| s.trim().parse::<SensorId>().with_context(|| format!("bad sensor id in {v:?}")))
            .collect::<Result<Vec<_>>>()?;
        sets.push(set);
    }
    Ok(Some(SensorSets::Explicit(sets)))
}

fn parse_detector(s: &str) -> Result<DetectorChoice> {
    Ok(match s {
        "oracle" => DetectorChoice::Oracle(DetectorParams::default()),
        "perfect" => DetectorChoice::Oracle(DetectorParams::perfect()),
        _ => match s.strip_prefix("file:") {
            Some(path) => DetectorChoice::External(FileDetector::load(path.as_ref())?),
            None => bail!("unknown detector {s:?} (expected oracle, perfect or file:PATH)"),
        },
    })
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        if let Some(path) = &self.config {
            return ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()));
        }
        if let Some(dir) = &self.dataset {
            return Ok(load_dataset_scenario(dir)?);
        }
        Ok(build_scenario(&self.scenario)?)
    }

    fn spec(&self, default_sets: SensorSets) -> Result<ExperimentSpec> {
        let mut spec = ExperimentSpec::new(self.scenario()?, &self.out);
        spec.frames = self.frames;
        spec.seed = self.seed;
        if !self.scheme.is_empty() {
            spec.schemes = self.scheme.clone();
        }
        spec.sensor_sets = parse_sets(&self.sensors)?.unwrap_or(default_sets);
        if !self.kappa.is_empty() {
            spec.kappas = self.kappa.clone();
        }
        spec.hybrid_radius = self.radius;
        spec.roi = self.roi;
        if let Some(dir) = &self.dataset {
            spec.source = FrameSource::Dataset(dir.clone());
        }
        spec.detector = parse_detector(&self.detector)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn fmt_ap(ap: Option<f64>) -> String {
    ap.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(c) => {
            let spec = c.spec(SensorSets::Full)?;
            let r = cmd_generate(&spec)?;
            println!("wrote {} frames ({} files) to {}", r.frames, r.files, spec.out_dir.display());
        }
        Command::Compare(c) => {
            let spec = c.spec(SensorSets::Full)?;
            let r = cmd_compare_schemes(&spec)?;
            println!("scheme\tkappa\tap\tkbit_per_sensor");
            for row in &r.rows {
                println!("{}\t{}\t{}\t{:.3}", row.scheme, row.kappa, fmt_ap(row.ap), row.kbit_per_sensor);
            }
        }
        Command::Sweep(c) => {
            let spec = c.spec(SensorSets::AllSubsets)?;
            let r = cmd_sensor_sweep(&spec)?;
            let k0 = spec.kappas[0];
            println!("cardinality\tbest_set\tap_early\tap_late\trecall_at_p");
            for (card, set) in &r.best {
                let early = r.row(set, Scheme::Early, k0).context("missing sweep row")?;
                let late = r.row(set, Scheme::Late, k0).context("missing sweep row")?;
                println!(
                    "{card}\t{}\t{}\t{}\t{:.4}",
                    set_label(set),
                    fmt_ap(early.ap),
                    fmt_ap(late.ap),
                    early.recall_at_precision
                );
            }
        }
        Command::Roi(c) => {
            if c.roi.is_none() {
                bail!("roi needs --roi min_x,min_y,max_x,max_y");
            }
            let spec = c.spec(SensorSets::Full)?;
            println!("set\tscheme\tkappa\tap\tobjects");
            for row in cmd_roi_study(&spec)? {
                println!("{}\t{}\t{}\t{}\t{}", set_label(&row.set), row.scheme, row.kappa, fmt_ap(row.ap), row.objects);
            }
        }
        Command::Density(c) => {
            let spec = c.spec(SensorSets::Full)?;
            let r = cmd_density_analysis(&spec)?;
            println!("set\tobjects\tF(0)");
            for (set, cdf) in &r.cdfs {
                println!("{}\t{}\t{:.4}", set_label(set), cdf.count, cdf.eval(0));
            }
            println!("{} IOU bins written to {}", r.bins.len(), spec.out_dir.display());
        }
    }
    Ok(())
}
