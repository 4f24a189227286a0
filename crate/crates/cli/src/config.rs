//! Run configuration: command-line flags layered over an optional TOML file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use dualtail::corpus::{AnchorRule, Estimate, View, YearWindow, REFERENCE_POPULATION};
use dualtail::gpd::FitOptions;
use dualtail::resample::DEFAULT_RUNS;
use dualtail::synth::SynthConfig;

/// Input name that selects the bundled six-row excerpt.
pub const EXCERPT: &str = "@excerpt";

/// Flags shared by every subcommand. Unset flags fall back to the config file,
/// then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Corpus CSV, or `@excerpt` for the bundled sample.
    #[arg(long, global = true)]
    pub input: Option<String>,
    #[arg(long, global = true, value_parser = parse_view)]
    pub view: Option<View>,
    /// Threshold(s); repeat the flag or separate with commas.
    #[arg(long = "threshold", global = true, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Lower bound L of the dual transform (defaults to the threshold).
    #[arg(long, global = true)]
    pub lower_bound: Option<f64>,
    /// Upper bound H, also the reference population for rescaling.
    #[arg(long, global = true)]
    pub upper_bound: Option<f64>,
    /// Year window `Y1:Y2`, inclusive.
    #[arg(long, global = true)]
    pub window: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Resampling runs.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub population_table: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_anchor)]
    pub anchor: Option<AnchorRule>,
    #[arg(long, global = true, value_parser = parse_estimate)]
    pub estimate: Option<Estimate>,
    /// Smallest number of exceedances accepted by a fit.
    #[arg(long, global = true)]
    pub min_exceedances: Option<usize>,
    /// Bootstrap replicates for the goodness-of-fit p-value.
    #[arg(long, global = true)]
    pub gof_boot: Option<usize>,
    /// TOML file with the same keys (snake_case).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Generator settings for `synth`.
#[derive(Debug, Clone, Default, Args)]
pub struct SynthFlags {
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Events per year.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Exact event count instead of a Poisson draw.
    #[arg(long)]
    pub events: Option<usize>,
    /// Relative half-width of the min/max estimates.
    #[arg(long)]
    pub fuzz: Option<f64>,
    /// Keep severities below the upper bound via the inverse dual map.
    #[arg(long)]
    pub bounded: bool,
}

/// Keys accepted in the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<String>,
    pub view: Option<View>,
    pub thresholds: Option<Vec<f64>>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub window: Option<String>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub out: Option<PathBuf>,
    pub population_table: Option<PathBuf>,
    pub anchor: Option<AnchorRule>,
    pub estimate: Option<Estimate>,
    pub min_exceedances: Option<usize>,
    pub gof_boot: Option<usize>,
    pub synth: Option<SynthConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedSource {
    Given,
    Generated,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input: String,
    pub view: View,
    /// Empty means the command's default ladder.
    pub thresholds: Vec<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: f64,
    pub window: Option<YearWindow>,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub runs: usize,
    #[serde(skip)]
    pub out: PathBuf,
    pub population_table: Option<PathBuf>,
    pub anchor: AnchorRule,
    pub estimate: Estimate,
    pub min_exceedances: usize,
    pub gof_boot: usize,
    #[serde(skip)]
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> anyhow::Result<Self> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Self::merge(flags, file)
    }

    pub fn merge(flags: &Flags, file: FileConfig) -> anyhow::Result<Self> {
        let thresholds = if flags.thresholds.is_empty() {
            file.thresholds.unwrap_or_default()
        } else {
            flags.thresholds.clone()
        };
        if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            bail!("thresholds must be positive, got {t}");
        }
        let upper_bound = flags.upper_bound.or(file.upper_bound).unwrap_or(REFERENCE_POPULATION);
        if !(upper_bound > 0.0 && upper_bound.is_finite()) {
            bail!("upper bound must be positive, got {upper_bound}");
        }
        let lower_bound = flags.lower_bound.or(file.lower_bound);
        if let Some(l) = lower_bound {
            if !(l > 0.0 && l < upper_bound) {
                bail!("lower bound {l} must lie in (0, {upper_bound})");
            }
        }
        let window = flags.window.clone().or(file.window).map(|s| parse_window(&s)).transpose()?;
        let (seed, seed_source) = match flags.seed.or(file.seed) {
            Some(s) => (s, SeedSource::Given),
            None => (generated_seed(), SeedSource::Generated),
        };
        let population_table = flags.population_table.clone().or(file.population_table);
        if let Some(p) = &population_table {
            if !p.is_file() {
                bail!("population table {} not found", p.display());
            }
        }
        let input = flags.input.clone().or(file.input).unwrap_or_else(|| EXCERPT.to_string());
        if input != EXCERPT && !Path::new(&input).is_file() {
            bail!("input {input} not found");
        }
        let mut synth = file.synth.unwrap_or_default();
        synth.seed = seed;
        if let Some(w) = window {
            synth.window = w;
        }
        Ok(Self {
            input,
            view: flags.view.or(file.view).unwrap_or_default(),
            thresholds,
            lower_bound,
            upper_bound,
            window,
            seed,
            seed_source,
            runs: flags.runs.or(file.runs).unwrap_or(DEFAULT_RUNS),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            population_table,
            anchor: flags.anchor.or(file.anchor).unwrap_or_default(),
            estimate: flags.estimate.or(file.estimate).unwrap_or_default(),
            min_exceedances: flags
                .min_exceedances
                .or(file.min_exceedances)
                .unwrap_or(FitOptions::default().min_exceedances),
            gof_boot: flags.gof_boot.or(file.gof_boot).unwrap_or(999),
            synth,
        })
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            min_exceedances: self.min_exceedances,
            ..FitOptions::default()
        }
    }

    /// Configured thresholds, or `default` when none were given.
    pub fn thresholds_or(&self, default: &[f64]) -> Vec<f64> {
        if self.thresholds.is_empty() {
            default.to_vec()
        } else {
            self.thresholds.clone()
        }
    }

    /// Input name without directory or extension, used to name output files.
    pub fn dataset_name(&self) -> String {
        if self.input == EXCERPT {
            return "excerpt".into();
        }
        Path::new(&self.input)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    }
}

impl SynthFlags {
    /// Applies the flags on top of the config's generator settings.
    pub fn apply(&self, cfg: &RunConfig) -> SynthConfig {
        let mut s = cfg.synth;
        s.xi = self.xi.unwrap_or(s.xi);
        s.sigma = self.sigma.unwrap_or(s.sigma);
        s.rate = self.rate.unwrap_or(s.rate);
        s.fuzz = self.fuzz.unwrap_or(s.fuzz);
        if self.events.is_some() {
            s.n_events = self.events;
        }
        if let Some(&t) = cfg.thresholds.first() {
            s.threshold = t;
        }
        if self.bounded {
            s.upper = Some(cfg.upper_bound);
        }
        s.population = cfg.upper_bound;
        s
    }
}

fn generated_seed() -> u64 {
    let d = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    d.as_secs() ^ (u64::from(d.subsec_nanos()) << 32)
}

pub fn parse_window(s: &str) -> anyhow::Result<YearWindow> {
    // the end year may itself be negative, so split at the first colon after position 0
    let pos = s[1..].find(':').map(|p| p + 1).with_context(|| format!("window {s:?} is not Y1:Y2"))?;
    let start = s[..pos].trim().parse().with_context(|| format!("window start in {s:?}"))?;
    let end = s[pos + 1..].trim().parse().with_context(|| format!("window end in {s:?}"))?;
    Ok(YearWindow::new(start, end)?)
}

fn parse_view(s: &str) -> Result<View, String> {
    match s {
        "raw" => Ok(View::Raw),
        "rescaled" => Ok(View::Rescaled),
        "dual" => Ok(View::Dual),
        _ => Err(format!("unknown view {s:?} (raw, rescaled, dual)")),
    }
}

fn parse_anchor(s: &str) -> Result<AnchorRule, String> {
    match s {
        "start" => Ok(AnchorRule::Start),
        "mid" => Ok(AnchorRule::Mid),
        "end" => Ok(AnchorRule::End),
        _ => Err(format!("unknown anchor {s:?} (start, mid, end)")),
    }
}

fn parse_estimate(s: &str) -> Result<Estimate, String> {
    match s {
        "min" => Ok(Estimate::Min),
        "mid" => Ok(Estimate::Mid),
        "max" => Ok(Estimate::Max),
        _ => Err(format!("unknown estimate {s:?} (min, mid, max)")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_parse_with_negative_years() {
        assert_eq!(parse_window("1500:2015").unwrap(), YearWindow { start: 1500, end: 2015 });
        assert_eq!(parse_window("-500:-100").unwrap(), YearWindow { start: -500, end: -100 });
        assert_eq!(parse_window("-20:30").unwrap(), YearWindow { start: -20, end: 30 });
        assert!(parse_window("2015:1500").is_err());
        assert!(parse_window("1500").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str(
            "view = \"raw\"\nthresholds = [1000.0]\nseed = 3\nruns = 50\nwindow = \"1600:1700\"",
        )
        .unwrap();
        let flags = Flags {
            runs: Some(7),
            thresholds: vec![25_000.0],
            ..Flags::default()
        };
        let cfg = RunConfig::merge(&flags, file).unwrap();
        assert_eq!(cfg.view, View::Raw);
        assert_eq!(cfg.thresholds, vec![25_000.0]);
        assert_eq!(cfg.runs, 7);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.seed_source, SeedSource::Given);
        assert_eq!(cfg.window, Some(YearWindow { start: 1600, end: 1700 }));
        assert_eq!(cfg.synth.window, YearWindow { start: 1600, end: 1700 });
    }

    #[test]
    fn missing_seed_is_generated_and_recorded() {
        let cfg = RunConfig::merge(&Flags::default(), FileConfig::default()).unwrap();
        assert_eq!(cfg.seed_source, SeedSource::Generated);
        assert_eq!(cfg.input, EXCERPT);
        assert_eq!(cfg.upper_bound, REFERENCE_POPULATION);
    }

    #[test]
    fn rejects_bad_settings() {
        let bad = |flags: Flags| RunConfig::merge(&flags, FileConfig::default()).is_err();
        assert!(bad(Flags { thresholds: vec![-1.0], ..Flags::default() }));
        assert!(bad(Flags { lower_bound: Some(1e10), ..Flags::default() }));
        assert!(bad(Flags { input: Some("/nonexistent.csv".into()), ..Flags::default() }));
        assert!(toml::from_str::<FileConfig>("bogus = 1").is_err());
    }
}
