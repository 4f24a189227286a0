//! One function per subcommand. Each writes its files under the output
//! directory and returns a serializable summary.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::{json, Value};

use dualtail::arrivals::{gap_series, poisson_battery, restricted_refit, ChiSquareTest, GapSeries};
use dualtail::corpus::{
    build_observation_set, load_corpus, parse_corpus, write_corpus, AnchorRule, Corpus, LoadOptions,
    ObservationSet, PopulationTable, Reject, View, ViewSpec, YearWindow, EXCERPT_CSV,
};
use dualtail::diagnostics::{harmonic_number, meplot, ms_plot, qq_exponential, record_counts, zipf_data};
use dualtail::dual::DualBounds;
use dualtail::gpd::{fit_exceedances, goodness_of_fit, pickands_curve, residuals, FiniteMoments, GpdFit};
use dualtail::resample::{bootstrap_xi, estimate_sensitivity, fuzzy_mc_xi, jackknife_xi, ResampleSummary, XiQuantiles};
use dualtail::shadow::{shadow_report, write_shadow_csv, ShadowMomentReport};
use dualtail::synth::{sample_history, SynthConfig};

use crate::config::{RunConfig, EXCERPT};

/// Default fit threshold: raw counts use 25k, rescaled and dual data 145k.
pub fn default_threshold(view: View) -> f64 {
    match view {
        View::Raw => 25_000.0,
        View::Rescaled | View::Dual => 145_000.0,
    }
}

/// Minimum thresholds `L` for the shadow-moment tables.
pub const SHADOW_LADDER: [f64; 7] = [5e4, 1e5, 1.45e5, 2e5, 3e5, 5e5, 1e6];

/// Thresholds of the inter-arrival table.
pub const GAP_LADDER: [f64; 7] = [5e5, 1e6, 2e6, 5e6, 1e7, 2e7, 5e7];

/// Window of the Poisson battery when none is configured.
pub const DEFAULT_WINDOW: YearWindow = YearWindow { start: 1500, end: 2015 };

/// Fraction of exceedances the jackknife may delete.
pub const JACKKNIFE_FRACTION: f64 = 0.1;

/// Machine-readable error, also used for report sections that failed.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

impl ErrorReport {
    pub fn from_anyhow(e: &anyhow::Error) -> Self {
        if let Some(CommandFailed(r)) = e.downcast_ref::<CommandFailed>() {
            return r.clone();
        }
        let kind = e
            .chain()
            .find_map(|c| c.downcast_ref::<dualtail::Error>())
            .map_or("cli", |d| d.kind());
        Self {
            kind: kind.to_string(),
            message: format!("{e:#}"),
        }
    }
}

/// A result that serializes as its value or as `{"error": {...}}`.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Section<T> {
    Ok(T),
    Failed { error: ErrorReport },
}

impl<T> Section<T> {
    pub fn from_result(r: anyhow::Result<T>) -> Self {
        match r {
            Ok(v) => Section::Ok(v),
            Err(e) => Section::Failed {
                error: ErrorReport::from_anyhow(&e),
            },
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Section::Ok(v) => Some(v),
            Section::Failed { .. } => None,
        }
    }
}

/// Writes `bytes` to `out/name` through a temporary file in the same directory.
pub fn write_atomic(out: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<String> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(out).with_context(|| format!("temp file in {}", out.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    let path = out.join(name);
    tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(name.to_string())
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(out, name, text.as_bytes())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV text from a header and rows of displayable cells.
fn csv_text<R, C>(header: &[&str], rows: R) -> String
where
    R: IntoIterator<Item = C>,
    C: IntoIterator<Item = String>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(|c| csv_field(&c)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn pairs_csv(header: [&str; 2], points: &[(f64, f64)]) -> String {
    csv_text(&header, points.iter().map(|(a, b)| [a.to_string(), b.to_string()]))
}

fn threshold_tag(u: f64) -> String {
    format!("u{u}")
}

pub fn load(cfg: &RunConfig) -> anyhow::Result<Corpus> {
    let table = cfg
        .population_table
        .as_deref()
        .map(PopulationTable::load)
        .transpose()?;
    let opts = LoadOptions {
        population_table: table.as_ref(),
        anchor: cfg.anchor,
        ..LoadOptions::default()
    };
    let corpus = if cfg.input == EXCERPT {
        parse_corpus(EXCERPT_CSV, EXCERPT, &opts)?
    } else {
        load_corpus(Path::new(&cfg.input), &opts)?
    };
    if corpus.records.is_empty() {
        bail!("{}: no valid records ({} rejected)", corpus.source, corpus.rejects.len());
    }
    Ok(corpus)
}

pub fn view_spec(cfg: &RunConfig, view: View) -> anyhow::Result<ViewSpec> {
    Ok(ViewSpec {
        view,
        reference_population: cfg.upper_bound,
        bounds: cfg.lower_bound.map(|l| DualBounds::new(l, cfg.upper_bound)).transpose()?,
        estimate: cfg.estimate,
        anchor: cfg.anchor,
        window: cfg.window,
    })
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Serialize)]
pub struct ViewExtremes {
    pub view: View,
    pub n: usize,
    pub min: f64,
    pub max: f64,
    /// Dual view only.
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub source: String,
    pub unit_scale: f64,
    pub rows: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejects: Vec<Reject>,
    pub extremes: Vec<ViewExtremes>,
    pub files: Vec<String>,
}

fn extremes(obs: &ObservationSet) -> ViewExtremes {
    ViewExtremes {
        view: obs.view,
        n: obs.len(),
        min: obs.values.iter().copied().fold(f64::INFINITY, f64::min),
        max: obs.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lower_bound: obs.bounds.map(|b| b.lower()),
    }
}

pub fn ingest(cfg: &RunConfig) -> anyhow::Result<IngestSummary> {
    let corpus = load(cfg)?;
    let all = |view| -> anyhow::Result<ViewSpec> {
        Ok(ViewSpec {
            window: None,
            ..view_spec(cfg, view)?
        })
    };
    let raw = build_observation_set(&corpus.records, &all(View::Raw)?, 0.0)?;
    let rescaled = build_observation_set(&corpus.records, &all(View::Rescaled)?, 0.0)?;
    let l = match cfg.lower_bound {
        Some(l) => l,
        None => extremes(&rescaled).min,
    };
    let dual_spec = ViewSpec {
        bounds: Some(DualBounds::new(l, cfg.upper_bound)?),
        ..all(View::Dual)?
    };
    let dual = build_observation_set(&corpus.records, &dual_spec, l)?;

    let name = format!("{}.rejects.csv", cfg.dataset_name());
    let rejects_csv = csv_text(
        &["line", "reason", "raw"],
        corpus.rejects.iter().map(|r| [r.line.to_string(), r.reason.clone(), r.raw.clone()]),
    );
    let files = vec![write_atomic(&cfg.out, &name, rejects_csv.as_bytes())?];
    let summary = IngestSummary {
        source: corpus.source.clone(),
        unit_scale: corpus.unit_scale,
        rows: corpus.rows,
        accepted: corpus.records.len(),
        rejected: corpus.rejects.len(),
        rejects: corpus.rejects.clone(),
        extremes: vec![extremes(&raw), extremes(&rescaled), extremes(&dual)],
        files,
    };
    write_json(&cfg.out, "ingest.json", &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- diagnose

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseSummary {
    pub view: View,
    pub threshold: f64,
    pub n: usize,
    pub meplot_points: usize,
    /// Slope of the mean-excess plot over its upper half.
    pub meplot_upper_slope: Option<f64>,
    pub qq_correlation: f64,
    /// Final max-to-sum ratio for `p = 1..4`.
    pub ms_final: Vec<f64>,
    pub records: usize,
    pub expected_records: f64,
    pub files: Vec<String>,
}

fn diagnose_threshold(cfg: &RunConfig) -> f64 {
    match (cfg.thresholds.first(), cfg.view) {
        (Some(&u), _) => u,
        (None, View::Dual) => cfg.lower_bound.unwrap_or(default_threshold(View::Dual)),
        (None, _) => 0.0,
    }
}

pub fn diagnose(cfg: &RunConfig) -> anyhow::Result<DiagnoseSummary> {
    let corpus = load(cfg)?;
    let u = diagnose_threshold(cfg);
    let obs = build_observation_set(&corpus.records, &view_spec(cfg, cfg.view)?, u)?;
    let values = &obs.values;
    let stem = format!("{}.{}", cfg.dataset_name(), cfg.view);
    let mut files = Vec::new();

    let me = meplot(values)?;
    files.push(write_atomic(
        &cfg.out,
        &format!("{stem}.meplot.csv"),
        pairs_csv(["threshold", "mean_excess"], &me.points).as_bytes(),
    )?);
    let upper = &me.points[me.points.len() / 2..];
    let meplot_upper_slope = (upper.len() >= 2).then(|| dualtail::diagnostics::ols_slope(upper));

    let qq = qq_exponential(values)?;
    files.push(write_atomic(
        &cfg.out,
        &format!("{stem}.qq.csv"),
        pairs_csv(["exponential_quantile", "sample"], &qq.points).as_bytes(),
    )?);

    let zipf = zipf_data(values)?;
    files.push(write_atomic(
        &cfg.out,
        &format!("{stem}.zipf.csv"),
        pairs_csv(["log_value", "log_survival"], &zipf).as_bytes(),
    )?);

    let ms = ms_plot(values)?;
    let n = values.len();
    let ms_csv = csv_text(
        &["n", "p1", "p2", "p3", "p4"],
        (0..n).map(|i| std::iter::once((i + 1).to_string()).chain(ms.ratios.iter().map(move |r| r[i].to_string()))),
    );
    files.push(write_atomic(&cfg.out, &format!("{stem}.msplot.csv"), ms_csv.as_bytes())?);

    let rec = record_counts(&obs.chronological_values());
    let rec_csv = csv_text(
        &["n", "records", "expected"],
        (0..n).map(|i| [(i + 1).to_string(), rec.counts[i].to_string(), rec.harmonic[i].to_string()]),
    );
    files.push(write_atomic(&cfg.out, &format!("{stem}.records.csv"), rec_csv.as_bytes())?);

    let summary = DiagnoseSummary {
        view: cfg.view,
        threshold: u,
        n,
        meplot_points: me.points.len(),
        meplot_upper_slope,
        qq_correlation: qq.correlation,
        ms_final: ms.ratios.iter().map(|r| r[n - 1]).collect(),
        records: rec.total(),
        expected_records: harmonic_number(n),
        files,
    };
    write_json(&cfg.out, &format!("{stem}.diagnose.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Serialize)]
pub struct PickandsSummary {
    pub summary: f64,
    pub points: usize,
    pub omitted: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub view: View,
    pub threshold: f64,
    pub n_exceed: usize,
    pub xi: f64,
    pub se_xi: Option<f64>,
    pub sigma: f64,
    pub se_sigma: Option<f64>,
    pub loglik: f64,
    pub gof_stat: f64,
    pub gof_p: f64,
    pub gof_boot: usize,
    pub gof_failures: usize,
    /// Highest finite integer moment, or `"all"`.
    pub moments_finite_up_to: Value,
    pub moments: String,
    pub converged: bool,
    pub at_boundary: bool,
    pub residual_qq_correlation: f64,
    pub pickands: Section<PickandsSummary>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub dataset: String,
    pub seed: u64,
    pub fits: Vec<Section<FitReport>>,
}

fn moments_value(m: FiniteMoments) -> Value {
    match m.max_order() {
        Some(p) => json!(p),
        None => json!("all"),
    }
}

fn fit_one(cfg: &RunConfig, corpus: &Corpus, u: f64, index: usize) -> anyhow::Result<FitReport> {
    let obs = build_observation_set(&corpus.records, &view_spec(cfg, cfg.view)?, u)?;
    let opts = cfg.fit_options();
    let fit: GpdFit = fit_exceedances(&obs.values, u, &opts)?;
    let w = obs.exceedances();
    let gof = goodness_of_fit(&w, &fit, cfg.gof_boot, cfg.seed.wrapping_add(index as u64), &opts)?;
    let res = residuals(&w, &fit)?;
    let stem = format!("{}.{}.{}", cfg.dataset_name(), cfg.view, threshold_tag(u));
    let mut files = vec![write_atomic(
        &cfg.out,
        &format!("{stem}.residual_qq.csv"),
        pairs_csv(["exponential_quantile", "residual"], &res.qq.points).as_bytes(),
    )?];
    let pickands = Section::from_result(pickands_curve(&obs.values).map_err(anyhow::Error::from).and_then(|c| {
        let text = csv_text(&["k", "xi"], c.points.iter().map(|p| [p.k.to_string(), p.xi.to_string()]));
        files.push(write_atomic(&cfg.out, &format!("{stem}.pickands.csv"), text.as_bytes())?);
        Ok(PickandsSummary {
            summary: c.summary,
            points: c.points.len(),
            omitted: c.omitted,
        })
    }));
    Ok(FitReport {
        view: cfg.view,
        threshold: u,
        n_exceed: w.len(),
        xi: fit.xi(),
        se_xi: fit.se_xi,
        sigma: fit.sigma(),
        se_sigma: fit.se_sigma,
        loglik: fit.log_likelihood,
        gof_stat: gof.statistic,
        gof_p: gof.p_value,
        gof_boot: gof.n_boot,
        gof_failures: gof.failures,
        moments_finite_up_to: moments_value(fit.finite_moments()),
        moments: fit.finite_moments().describe(),
        converged: fit.convergence.converged,
        at_boundary: fit.convergence.at_boundary,
        residual_qq_correlation: res.qq.correlation,
        pickands,
        files,
    })
}

pub fn fit(cfg: &RunConfig) -> anyhow::Result<FitOutput> {
    let corpus = load(cfg)?;
    let thresholds = cfg.thresholds_or(&[default_threshold(cfg.view)]);
    let fits: Vec<Section<FitReport>> = thresholds
        .iter()
        .enumerate()
        .map(|(i, &u)| Section::from_result(fit_one(cfg, &corpus, u, i)))
        .collect();
    if thresholds.len() == 1 {
        if let Section::Failed { error } = &fits[0] {
            bail!(CommandFailed(error.clone()));
        }
    }
    let out = FitOutput {
        dataset: cfg.dataset_name(),
        seed: cfg.seed,
        fits,
    };
    write_json(&cfg.out, &format!("{}.{}.fit.json", cfg.dataset_name(), cfg.view), &out)?;
    Ok(out)
}

/// Carries an already-classified error through `anyhow`.
#[derive(Debug)]
pub struct CommandFailed(pub ErrorReport);

impl std::fmt::Display for CommandFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0.message)
    }
}

impl std::error::Error for CommandFailed {}

// ---------------------------------------------------------------- shadow

#[derive(Debug, Clone, Serialize)]
pub struct ShadowOutput {
    pub view: View,
    pub upper_bound: f64,
    pub rows: Vec<ShadowMomentReport>,
    pub files: Vec<String>,
}

pub fn shadow(cfg: &RunConfig) -> anyhow::Result<ShadowOutput> {
    if cfg.view == View::Dual {
        bail!(dualtail::Error::InvalidInput(
            "shadow moments are reported for the raw or rescaled view; the dual view is fitted internally".into()
        ));
    }
    let corpus = load(cfg)?;
    let ladder = cfg.thresholds_or(&SHADOW_LADDER);
    let lowest = ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let obs = build_observation_set(&corpus.records, &view_spec(cfg, cfg.view)?, lowest)?;
    let rows = shadow_report(&obs, cfg.upper_bound, &ladder, 2, &cfg.fit_options())?;
    let stem = format!("{}.{}", cfg.dataset_name(), cfg.view);
    let mut files = Vec::new();
    for (moment, label) in [(1, "shadow_mean"), (2, "shadow_sd")] {
        let subset: Vec<ShadowMomentReport> = rows.iter().filter(|r| r.moment == moment).cloned().collect();
        let mut buf = Vec::new();
        write_shadow_csv(&subset, &mut buf)?;
        files.push(write_atomic(&cfg.out, &format!("{stem}.{label}.csv"), &buf)?);
    }
    let out = ShadowOutput {
        view: cfg.view,
        upper_bound: cfg.upper_bound,
        rows,
        files,
    };
    write_json(&cfg.out, &format!("{stem}.shadow.json"), &out)?;
    Ok(out)
}

// ---------------------------------------------------------------- robust

#[derive(Debug, Clone, Serialize)]
pub struct SchemeSummary {
    pub n_runs: usize,
    pub n_requested: usize,
    pub n_failures: usize,
    pub fraction_xi_leq_1: f64,
    pub fraction_xi_gt_1: f64,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: XiQuantiles,
    pub iqr: f64,
    pub base_seed: u64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateFit {
    pub estimate: dualtail::corpus::Estimate,
    pub xi: f64,
    pub sigma: f64,
    pub n_exceed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustOutput {
    pub view: View,
    pub threshold: f64,
    pub runs: usize,
    pub bootstrap: Section<SchemeSummary>,
    pub jackknife: Section<SchemeSummary>,
    pub fuzzy: Section<SchemeSummary>,
    pub estimates: Section<Vec<EstimateFit>>,
}

fn scheme_summary(cfg: &RunConfig, s: ResampleSummary, label: &str) -> anyhow::Result<SchemeSummary> {
    let name = format!("{}.{}.{label}.xi.csv", cfg.dataset_name(), cfg.view);
    let text = csv_text(&["xi"], s.xi_values.iter().map(|x| [x.to_string()]));
    let file = write_atomic(&cfg.out, &name, text.as_bytes())?;
    Ok(SchemeSummary {
        n_runs: s.n_runs,
        n_requested: s.n_requested,
        n_failures: s.failures.len(),
        fraction_xi_leq_1: s.fraction_xi_leq_1,
        fraction_xi_gt_1: 1.0 - s.fraction_xi_leq_1,
        mean: s.mean,
        sd: s.sd,
        iqr: s.quantiles.iqr(),
        quantiles: s.quantiles,
        base_seed: s.base_seed,
        file,
    })
}

pub fn robust(cfg: &RunConfig) -> anyhow::Result<RobustOutput> {
    let corpus = load(cfg)?;
    let u = cfg.thresholds_or(&[default_threshold(cfg.view)])[0];
    let spec = view_spec(cfg, cfg.view)?;
    let opts = cfg.fit_options();
    let obs = build_observation_set(&corpus.records, &spec, u)?;
    let records = &corpus.records;
    let run = |label: &str, r: dualtail::Result<ResampleSummary>| {
        Section::from_result(r.map_err(anyhow::Error::from).and_then(|s| scheme_summary(cfg, s, label)))
    };
    let out = RobustOutput {
        view: cfg.view,
        threshold: u,
        runs: cfg.runs,
        bootstrap: run("bootstrap", bootstrap_xi(&obs, &opts, cfg.runs, cfg.seed)),
        jackknife: run(
            "jackknife",
            jackknife_xi(&obs, &opts, JACKKNIFE_FRACTION, cfg.runs, cfg.seed.wrapping_add(1)),
        ),
        fuzzy: run(
            "fuzzy",
            fuzzy_mc_xi(records, &spec, u, &opts, cfg.runs, cfg.seed.wrapping_add(2)),
        ),
        estimates: Section::from_result(estimate_sensitivity(records, &spec, u, &opts).map_err(Into::into).map(
            |s| {
                s.fits
                    .into_iter()
                    .map(|(estimate, f)| EstimateFit {
                        estimate,
                        xi: f.xi(),
                        sigma: f.sigma(),
                        n_exceed: f.params.n_exceed,
                    })
                    .collect()
            },
        )),
    };
    write_json(&cfg.out, &format!("{}.{}.robust.json", cfg.dataset_name(), cfg.view), &out)?;
    Ok(out)
}

// ---------------------------------------------------------------- arrivals

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub threshold: f64,
    pub anchor: AnchorRule,
    pub events: usize,
    pub mean_gap: Option<f64>,
    pub mad: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatterySummary {
    pub threshold: f64,
    pub window: YearWindow,
    pub n_events: usize,
    pub mean_gap: f64,
    pub mad: f64,
    pub qq_correlation: Option<f64>,
    pub acf_band: f64,
    pub lags_outside_band: Vec<usize>,
    pub chi_square: ChiSquareTest,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefitSummary {
    pub xi: f64,
    pub se_xi: Option<f64>,
    pub sigma: f64,
    pub n_exceed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArrivalsOutput {
    pub view: View,
    pub gaps: Vec<GapRow>,
    pub battery: Section<BatterySummary>,
    /// GPD refit on the events inside the battery window.
    pub window_refit: Section<RefitSummary>,
    pub files: Vec<String>,
}

fn gap_row(records: &[dualtail::corpus::ConflictRecord], spec: &ViewSpec, u: f64) -> anyhow::Result<GapRow> {
    let obs = match build_observation_set(records, spec, u) {
        Ok(o) => o,
        Err(dualtail::Error::EmptySelection { .. }) => {
            return Ok(GapRow {
                threshold: u,
                anchor: spec.anchor,
                events: 0,
                mean_gap: None,
                mad: None,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let g: Option<GapSeries> = match gap_series(&obs, u) {
        Ok(g) => Some(g),
        Err(dualtail::Error::InsufficientData { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(GapRow {
        threshold: u,
        anchor: spec.anchor,
        events: obs.len(),
        mean_gap: g.as_ref().map(|g| g.mean),
        mad: g.as_ref().map(|g| g.mad),
    })
}

pub fn arrivals(cfg: &RunConfig) -> anyhow::Result<ArrivalsOutput> {
    let corpus = load(cfg)?;
    let records = &corpus.records;
    // the gap table covers the whole history; the window applies to the battery
    let spec = ViewSpec {
        window: None,
        ..view_spec(cfg, cfg.view)?
    };
    let ladder = cfg.thresholds_or(&GAP_LADDER);
    let mut gaps = Vec::new();
    for anchor in AnchorRule::ALL {
        let spec = ViewSpec { anchor, ..spec };
        for &u in &ladder {
            gaps.push(gap_row(records, &spec, u)?);
        }
    }
    let stem = format!("{}.{}", cfg.dataset_name(), cfg.view);
    let mut files = vec![write_atomic(
        &cfg.out,
        &format!("{stem}.gaps.csv"),
        csv_text(
            &["threshold", "anchor", "events", "mean_gap", "mad"],
            gaps.iter().map(|g| {
                let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                [g.threshold.to_string(), g.anchor.to_string(), g.events.to_string(), opt(g.mean_gap), opt(g.mad)]
            }),
        )
        .as_bytes(),
    )?];

    let u = match cfg.thresholds.first() {
        Some(&u) => u,
        None => default_threshold(cfg.view),
    };
    let window = cfg.window.unwrap_or(DEFAULT_WINDOW);
    let battery = (|| -> anyhow::Result<BatterySummary> {
        let obs = build_observation_set(records, &spec, u)?;
        let b = poisson_battery(&obs, u, window, None)?;
        let acf_csv = csv_text(
            &["lag", "acf"],
            b.acf.iter().enumerate().map(|(h, r)| [h.to_string(), r.to_string()]),
        );
        files.push(write_atomic(&cfg.out, &format!("{stem}.{}.acf.csv", threshold_tag(u)), acf_csv.as_bytes())?);
        if let Some(qq) = &b.qq {
            files.push(write_atomic(
                &cfg.out,
                &format!("{stem}.{}.gap_qq.csv", threshold_tag(u)),
                pairs_csv(["exponential_quantile", "gap"], &qq.points).as_bytes(),
            )?);
        }
        Ok(BatterySummary {
            threshold: u,
            window,
            n_events: b.n_events,
            mean_gap: b.gaps.mean,
            mad: b.gaps.mad,
            qq_correlation: b.qq_correlation(),
            acf_band: b.acf_band,
            lags_outside_band: b.lags_outside_band,
            chi_square: b.chi_square,
        })
    })();
    let window_refit = restricted_refit(records, &spec, u, window, &cfg.fit_options())
        .map(|f| RefitSummary {
            xi: f.xi(),
            se_xi: f.se_xi,
            sigma: f.sigma(),
            n_exceed: f.params.n_exceed,
        })
        .map_err(Into::into);
    let out = ArrivalsOutput {
        view: cfg.view,
        gaps,
        battery: Section::from_result(battery),
        window_refit: Section::from_result(window_refit),
        files,
    };
    write_json(&cfg.out, &format!("{stem}.arrivals.json"), &out)?;
    Ok(out)
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Serialize)]
pub struct SynthOutput {
    pub config: SynthConfig,
    pub events: usize,
    pub file: String,
}

pub fn synth(cfg: &RunConfig, synth: &SynthConfig) -> anyhow::Result<SynthOutput> {
    let records = sample_history(synth)?;
    let mut buf = Vec::new();
    write_corpus(&records, &mut buf)?;
    let file = write_atomic(&cfg.out, "synthetic.csv", &buf)?;
    Ok(SynthOutput {
        config: *synth,
        events: records.len(),
        file,
    })
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub generated_at: u64,
    pub tool: String,
    pub config: RunConfig,
    pub dataset: String,
    pub ingest: Section<IngestSummary>,
    pub diagnostics: Section<DiagnoseSummary>,
    pub fit: Section<FitOutput>,
    pub shadow: Section<ShadowOutput>,
    pub robust: Section<RobustOutput>,
    pub arrivals: Section<ArrivalsOutput>,
}

pub const REPORT_FILE: &str = "report.json";

/// Runs every analysis and bundles the results. Failed stages are recorded
/// in place; the report itself fails only if it cannot be written.
pub fn report(cfg: &RunConfig) -> anyhow::Result<Report> {
    let generated_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let shadow_cfg = if cfg.view == View::Dual {
        RunConfig {
            view: View::Rescaled,
            ..cfg.clone()
        }
    } else {
        cfg.clone()
    };
    let report = Report {
        generated_at,
        tool: format!("dualtail {}", env!("CARGO_PKG_VERSION")),
        config: cfg.clone(),
        dataset: cfg.dataset_name(),
        ingest: Section::from_result(ingest(cfg)),
        diagnostics: Section::from_result(diagnose(cfg)),
        fit: Section::from_result(fit(cfg)),
        shadow: Section::from_result(shadow(&shadow_cfg)),
        robust: Section::from_result(robust(cfg)),
        arrivals: Section::from_result(arrivals(cfg)),
    };
    write_json(&cfg.out, REPORT_FILE, &report)?;
    Ok(report)
}

/// Report text with the timestamp line removed, for comparing runs.
pub fn strip_timestamp(text: &str) -> String {
    let mut s = String::with_capacity(text.len());
    for line in text.lines().filter(|l| !l.trim_start().starts_with("\"generated_at\"")) {
        let _ = writeln!(s, "{line}");
    }
    s
}
