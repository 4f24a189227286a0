//! Event records: CSV ingestion, validation, population rescaling and the
//! raw / rescaled / dual observation views.
//!
//! CSV layout (header required, population column optional):
//!
//! ```text
//! # unit_scale=10000
//! name,start,end,min,mid,max,population
//! WW2,1939,1945,4823,7300,8500,230735
//! ```
//!
//! `-` or an empty cell marks an absent estimate. `unit_scale` multiplies every
//! casualty and population column; internal units are persons.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dual::{self, DualBounds};
use crate::error::{Error, Result};

/// Records below this many casualties are not part of the data set.
pub const CASUALTY_FLOOR: f64 = 3000.0;

/// World population in 2015, the default rescaling reference.
pub const REFERENCE_POPULATION: f64 = 7.2e9;

/// Bundled excerpt of six historical events (one row is deliberately inconsistent).
pub const EXCERPT_CSV: &str = include_str!("../data/table1_excerpt.csv");

const COLUMNS: [&str; 7] = ["name", "start", "end", "min", "mid", "max", "population"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub name: String,
    pub start_year: i32,
    pub end_year: i32,
    pub casualties_min: Option<f64>,
    pub casualties_mid: f64,
    pub casualties_max: Option<f64>,
    /// Coeval world population.
    pub population: f64,
}

/// Which casualty estimate feeds the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimate {
    Min,
    #[default]
    Mid,
    Max,
}

/// Which year of an event locates it in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorRule {
    #[default]
    Start,
    Mid,
    End,
}

impl AnchorRule {
    pub const ALL: [AnchorRule; 3] = [AnchorRule::Start, AnchorRule::Mid, AnchorRule::End];
}

impl fmt::Display for AnchorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnchorRule::Start => "start",
            AnchorRule::Mid => "mid",
            AnchorRule::End => "end",
        })
    }
}

impl ConflictRecord {
    /// Lower estimate, falling back to the mid estimate when absent.
    pub fn lower(&self) -> f64 {
        self.casualties_min.unwrap_or(self.casualties_mid)
    }

    /// Upper estimate, falling back to the mid estimate when absent.
    pub fn upper(&self) -> f64 {
        self.casualties_max.unwrap_or(self.casualties_mid)
    }

    pub fn estimate(&self, which: Estimate) -> f64 {
        match which {
            Estimate::Min => self.lower(),
            Estimate::Mid => self.casualties_mid,
            Estimate::Max => self.upper(),
        }
    }

    pub fn anchor_year(&self, rule: AnchorRule) -> i32 {
        match rule {
            AnchorRule::Start => self.start_year,
            AnchorRule::End => self.end_year,
            AnchorRule::Mid => self.start_year + (self.end_year - self.start_year) / 2,
        }
    }

    /// Checks the record invariants, returning the first violation.
    pub fn validate(&self, floor: f64) -> std::result::Result<(), String> {
        if self.start_year > self.end_year {
            return Err(format!("start year {} after end year {}", self.start_year, self.end_year));
        }
        let finite = |v: f64| v.is_finite() && v >= 0.0;
        if !finite(self.casualties_mid)
            || !self.casualties_min.is_none_or(finite)
            || !self.casualties_max.is_none_or(finite)
        {
            return Err("casualty estimates must be finite and non-negative".into());
        }
        if self.casualties_mid < floor {
            return Err(format!("mid estimate {} below the {floor} casualty floor", self.casualties_mid));
        }
        if let Some(min) = self.casualties_min {
            if min > self.casualties_mid {
                return Err(format!("min {min} exceeds mid {}", self.casualties_mid));
            }
        }
        if let Some(max) = self.casualties_max {
            if max < self.casualties_mid {
                return Err(format!("max {max} below mid {}", self.casualties_mid));
            }
        }
        if !(self.population.is_finite() && self.population > 0.0) {
            return Err(format!("population {} must be positive", self.population));
        }
        if self.population <= self.upper() {
            return Err(format!(
                "population {} does not exceed casualties {}",
                self.population,
                self.upper()
            ));
        }
        Ok(())
    }
}

/// Resolution at which population estimates are available for a given era.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationTier {
    Century,
    HalfCentury,
    Decade,
    Yearly,
}

impl PopulationTier {
    pub fn for_year(year: i32) -> Self {
        match year {
            ..=1599 => PopulationTier::Century,
            1600..=1899 => PopulationTier::HalfCentury,
            1900..=1949 => PopulationTier::Decade,
            _ => PopulationTier::Yearly,
        }
    }

    pub fn spacing(self) -> i32 {
        match self {
            PopulationTier::Century => 100,
            PopulationTier::HalfCentury => 50,
            PopulationTier::Decade => 10,
            PopulationTier::Yearly => 1,
        }
    }
}

/// Year → world population lookup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationTable {
    entries: Vec<(i32, f64)>,
}

impl PopulationTable {
    pub fn new(entries: Vec<(i32, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("population table is empty"));
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid(format!(
                    "population table years must be strictly increasing ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(year, pop)) = entries.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::invalid(format!("population {pop} for year {year} is not positive")));
        }
        Ok(Self { entries })
    }

    /// Reads a `year,population` CSV (header optional, `# unit_scale=` honoured).
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let scale = unit_scale(text)?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() < 2 {
                return Err(Error::invalid(format!("population row {}: expected year,population", i + 1)));
            }
            let year = row[0].parse::<i32>();
            let pop = row[1].parse::<f64>();
            match (year, pop) {
                (Ok(y), Ok(p)) => entries.push((y, p * scale)),
                _ if i == 0 => continue, // header
                _ => {
                    return Err(Error::invalid(format!(
                        "population row {}: cannot parse {:?}",
                        i + 1,
                        row.iter().collect::<Vec<_>>()
                    )))
                }
            }
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(i32, f64)] {
        &self.entries
    }

    /// Population at the table year closest to `year`; ties go to the earlier
    /// year and years outside the table clamp to its ends.
    pub fn resolve(&self, year: i32) -> f64 {
        let idx = self.entries.partition_point(|&(y, _)| y < year);
        if idx == 0 {
            return self.entries[0].1;
        }
        if idx == self.entries.len() {
            return self.entries[idx - 1].1;
        }
        let (before, after) = (self.entries[idx - 1], self.entries[idx]);
        if after.0 == year {
            return after.1;
        }
        if (year - before.0) <= (after.0 - year) {
            before.1
        } else {
            after.1
        }
    }

    /// Years whose gap to the next entry is wider than the tier declared for that era.
    pub fn resolution_gaps(&self) -> Vec<(i32, i32)> {
        self.entries
            .windows(2)
            .filter(|w| w[1].0 - w[0].0 > PopulationTier::for_year(w[0].0).spacing())
            .map(|w| (w[0].0, w[1].0))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions<'a> {
    /// Used for rows without a population column.
    pub population_table: Option<&'a PopulationTable>,
    /// Overrides the file's `unit_scale` directive.
    pub unit_scale: Option<f64>,
    /// Minimum mid estimate; defaults to [`CASUALTY_FLOOR`].
    pub floor: Option<f64>,
    pub anchor: AnchorRule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Corpus {
    pub source: String,
    pub unit_scale: f64,
    pub rows: usize,
    pub records: Vec<ConflictRecord>,
    pub rejects: Vec<Reject>,
}

fn read_text(path: &Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| Error::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
    Ok(s)
}

fn unit_scale(text: &str) -> Result<f64> {
    let mut scale = 1.0;
    for line in text.lines() {
        let Some(comment) = line.trim_start().strip_prefix('#') else { continue };
        if let Some(v) = comment.trim().strip_prefix("unit_scale=") {
            scale = v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("bad unit_scale directive {v:?}")))?
                as f64;
            if scale == 0.0 {
                return Err(Error::invalid("unit_scale must be positive"));
            }
        }
    }
    Ok(scale)
}

fn parse_optional(cell: &str) -> std::result::Result<Option<f64>, String> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "-" {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("cannot parse number {cell:?}"))
}

/// Loads and validates a corpus file.
pub fn load_corpus(path: &Path, opts: &LoadOptions<'_>) -> Result<Corpus> {
    let text = read_text(path)?;
    parse_corpus(&text, &path.display().to_string(), opts)
}

/// Parses corpus CSV text. Invalid rows land in `rejects`, never silently dropped.
pub fn parse_corpus(text: &str, source: &str, opts: &LoadOptions<'_>) -> Result<Corpus> {
    let scale = match opts.unit_scale {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::invalid(format!("unit scale {s} must be positive"))),
        None => unit_scale(text)?,
    };
    let floor = opts.floor.unwrap_or(CASUALTY_FLOOR);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names.len() < 6 || names.iter().zip(COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::invalid(format!(
            "{source}: expected header `{}` (population optional), got `{}`",
            COLUMNS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut rows = 0;
    for row in rdr.records() {
        let row = row?;
        rows += 1;
        let line = row.position().map_or(0, |p| p.line());
        let raw = row.iter().collect::<Vec<_>>().join(",");
        match record_from_row(&row, scale, floor, opts) {
            Ok(rec) => records.push(rec),
            Err(reason) => rejects.push(Reject { line, reason, raw }),
        }
    }
    if rows == 0 {
        return Err(Error::EmptyFile { path: source.into() });
    }
    Ok(Corpus {
        source: source.to_string(),
        unit_scale: scale,
        rows,
        records,
        rejects,
    })
}

fn record_from_row(
    row: &csv::StringRecord,
    scale: f64,
    floor: f64,
    opts: &LoadOptions<'_>,
) -> std::result::Result<ConflictRecord, String> {
    if row.len() < 6 || row.len() > 7 {
        return Err(format!("expected 6 or 7 fields, found {}", row.len()));
    }
    let name = row[0].to_string();
    if name.is_empty() {
        return Err("empty event name".into());
    }
    let year = |i: usize| {
        row[i]
            .parse::<i32>()
            .map_err(|_| format!("cannot parse year {:?}", &row[i]))
    };
    let start_year = year(1)?;
    let end_year = year(2)?;
    let casualties_min = parse_optional(&row[3])?.map(|v| v * scale);
    let casualties_mid = parse_optional(&row[4])?.ok_or("missing mid estimate")? * scale;
    let casualties_max = parse_optional(&row[5])?.map(|v| v * scale);
    let population = match row.get(6).map(parse_optional).transpose()?.flatten() {
        Some(p) => p * scale,
        None => match opts.population_table {
            Some(table) => {
                let anchor = match opts.anchor {
                    AnchorRule::Start => start_year,
                    AnchorRule::End => end_year,
                    AnchorRule::Mid => start_year + (end_year - start_year) / 2,
                };
                table.resolve(anchor)
            }
            None => return Err("population missing and no population table supplied".into()),
        },
    };
    let rec = ConflictRecord {
        name,
        start_year,
        end_year,
        casualties_min,
        casualties_mid,
        casualties_max,
        population,
    };
    rec.validate(floor)?;
    Ok(rec)
}

/// Writes records in the ingestion schema (persons, no unit scaling).
pub fn write_corpus<W: Write>(records: &[ConflictRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    for r in records {
        w.write_record([
            r.name.clone(),
            r.start_year.to_string(),
            r.end_year.to_string(),
            opt(r.casualties_min),
            r.casualties_mid.to_string(),
            opt(r.casualties_max),
            r.population.to_string(),
        ])?;
    }
    w.flush().map_err(|source| Error::Io {
        context: "writing corpus".into(),
        source,
    })?;
    Ok(())
}

/// A `(value, lower, upper)` severity triplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triplet {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Expresses a record's estimates relative to `reference_population`.
pub fn rescale(record: &ConflictRecord, reference_population: f64) -> Result<Triplet> {
    if !(record.population > 0.0) {
        return Err(Error::domain(format!(
            "{}: population {} must be positive",
            record.name, record.population
        )));
    }
    if !(reference_population > 0.0) {
        return Err(Error::domain(format!(
            "reference population {reference_population} must be positive"
        )));
    }
    let factor = reference_population / record.population;
    Ok(Triplet {
        value: record.casualties_mid * factor,
        lower: record.lower() * factor,
        upper: record.upper() * factor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Raw,
    #[default]
    Rescaled,
    Dual,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Raw => "raw",
            View::Rescaled => "rescaled",
            View::Dual => "dual",
        })
    }
}

/// Inclusive range of anchor years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::invalid(format!("window start {start} after end {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    /// Number of calendar years covered.
    pub fn span(&self) -> i32 {
        self.end - self.start + 1
    }
}

/// How records become observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViewSpec {
    pub view: View,
    pub reference_population: f64,
    /// Dual view only; `None` means `[threshold, reference_population]`.
    pub bounds: Option<DualBounds<f64>>,
    pub estimate: Estimate,
    pub anchor: AnchorRule,
    pub window: Option<YearWindow>,
}

impl Default for ViewSpec {
    fn default() -> Self {
        Self {
            view: View::Rescaled,
            reference_population: REFERENCE_POPULATION,
            bounds: None,
            estimate: Estimate::Mid,
            anchor: AnchorRule::Start,
            window: None,
        }
    }
}

impl ViewSpec {
    pub fn new(view: View) -> Self {
        Self {
            view,
            ..Self::default()
        }
    }

    /// Bounds used for the dual view at the given threshold.
    pub fn dual_bounds(&self, threshold: f64) -> Result<DualBounds<f64>> {
        match self.bounds {
            Some(b) => Ok(b),
            None => DualBounds::new(threshold, self.reference_population),
        }
    }
}

/// Aligned severity values for the records at or above a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationSet {
    pub view: View,
    pub threshold: f64,
    pub anchor: AnchorRule,
    pub bounds: Option<DualBounds<f64>>,
    pub records: Vec<ConflictRecord>,
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub anchor_years: Vec<i32>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `value − u` for every value at or above `u`.
    pub fn excesses(&self, u: f64) -> Vec<f64> {
        self.values.iter().filter(|&&v| v >= u).map(|v| v - u).collect()
    }

    /// Excesses over the set's own threshold.
    pub fn exceedances(&self) -> Vec<f64> {
        self.excesses(self.threshold)
    }

    /// Values in chronological (anchor-year, then input) order.
    pub fn chronological_values(&self) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by_key(|&i| self.anchor_years[i]);
        idx.into_iter().map(|i| self.values[i]).collect()
    }

    pub(crate) fn empty_like(&self) -> Self {
        Self {
            records: Vec::new(),
            values: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            anchor_years: Vec::new(),
            ..self.clone()
        }
    }
}

/// Builds the chosen view keeping records whose value is at least `threshold`.
pub fn build_observation_set(
    records: &[ConflictRecord],
    spec: &ViewSpec,
    threshold: f64,
) -> Result<ObservationSet> {
    build_observation_set_with(records, spec, threshold, |_, r| r.estimate(spec.estimate))
}

/// As [`build_observation_set`], with the raw casualty value of each record
/// supplied by `value_of(index, record)` (bounds still come from the record's
/// min/max).
pub fn build_observation_set_with<F>(
    records: &[ConflictRecord],
    spec: &ViewSpec,
    threshold: f64,
    value_of: F,
) -> Result<ObservationSet>
where
    F: Fn(usize, &ConflictRecord) -> f64,
{
    if !threshold.is_finite() {
        return Err(Error::invalid(format!("threshold {threshold} must be finite")));
    }
    let in_window = |r: &ConflictRecord| spec.window.is_none_or(|w| w.contains(r.anchor_year(spec.anchor)));

    let mut set = ObservationSet {
        view: spec.view,
        threshold,
        anchor: spec.anchor,
        bounds: None,
        records: Vec::new(),
        values: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        anchor_years: Vec::new(),
    };
    let bounds = match spec.view {
        View::Dual => Some(spec.dual_bounds(threshold)?),
        _ => None,
    };
    set.bounds = bounds;

    for (i, rec) in records.iter().enumerate().filter(|(_, r)| in_window(r)) {
        let raw = value_of(i, rec);
        let (value, lower, upper) = match spec.view {
            View::Raw => (raw, rec.lower().min(raw), rec.upper().max(raw)),
            View::Rescaled | View::Dual => {
                let t = rescale(rec, spec.reference_population)?;
                let f = spec.reference_population / rec.population;
                (raw * f, t.lower.min(raw * f), t.upper.max(raw * f))
            }
        };
        let (value, lower, upper) = match bounds {
            None => (value, lower, upper),
            Some(b) => {
                if value < b.lower() {
                    continue;
                }
                let map = |y: f64| {
                    dual::phi(y, &b).map_err(|e| Error::domain(format!("{}: {e}", rec.name)))
                };
                (map(value)?, map(lower.max(b.lower()))?, map(upper)?)
            }
        };
        if value >= threshold {
            set.records.push(rec.clone());
            set.values.push(value);
            set.lower.push(lower);
            set.upper.push(upper);
            set.anchor_years.push(rec.anchor_year(spec.anchor));
        }
    }
    if set.is_empty() {
        return Err(Error::EmptySelection {
            threshold,
            view: spec.view.to_string(),
        });
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn excerpt() -> Corpus {
        parse_corpus(EXCERPT_CSV, "excerpt", &LoadOptions::default()).unwrap()
    }

    fn record(name: &str, year: i32, mid: f64, pop: f64) -> ConflictRecord {
        ConflictRecord {
            name: name.into(),
            start_year: year,
            end_year: year,
            casualties_min: None,
            casualties_mid: mid,
            casualties_max: None,
            population: pop,
        }
    }

    #[test]
    fn excerpt_rejects_only_the_inconsistent_row() {
        let c = excerpt();
        assert_eq!(c.rows, 6);
        assert_eq!(c.records.len(), 5);
        assert_eq!(c.rejects.len(), 1);
        assert!(c.rejects[0].raw.starts_with("Boudicca"));
        assert!(c.rejects[0].reason.contains("min"));
        assert_eq!(c.unit_scale, 10_000.0);
    }

    #[test]
    fn ww2_row_in_persons() {
        let c = excerpt();
        let ww2 = c.records.iter().find(|r| r.name == "WW2").unwrap();
        assert_eq!(ww2.casualties_mid, 7.3e7);
        assert_eq!(ww2.casualties_min, Some(4.823e7));
        assert_eq!(ww2.population, 2_307_350_000.0);
    }

    #[test]
    fn plain_row_without_directive() {
        let text = "name,start,end,min,mid,max,population\nWW2,1939,1945,48230000,73000000,85000000,2307350000\n";
        let c = parse_corpus(text, "t", &LoadOptions::default()).unwrap();
        assert_eq!(c.records[0].casualties_mid, 7.3e7);
    }

    #[test]
    fn missing_bounds_collapse_to_mid() {
        let text = "name,start,end,min,mid,max,population\nX,1900,1901,-,5000,,1000000000\n";
        let c = parse_corpus(text, "t", &LoadOptions::default()).unwrap();
        let r = &c.records[0];
        assert_eq!((r.lower(), r.casualties_mid, r.upper()), (5000.0, 5000.0, 5000.0));
    }

    #[test]
    fn malformed_rows_are_listed_with_line_numbers() {
        let text = "name,start,end,min,mid,max,population\n\
                    A,1900,1901,-,5000,-,1e9\n\
                    B,19x0,1901,-,5000,-,1e9\n\
                    C,1900,1901\n\
                    D,1900,1899,-,5000,-,1e9\n\
                    E,1900,1901,-,100,-,1e9\n";
        let c = parse_corpus(text, "t", &LoadOptions::default()).unwrap();
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.rejects.len(), 4);
        assert_eq!(c.records.len() + c.rejects.len(), c.rows);
        assert_eq!(c.rejects.iter().map(|r| r.line).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = parse_corpus("name,start,end,min,mid,max,population\n", "t", &LoadOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyFile { .. }));
    }

    #[test]
    fn population_from_table_when_column_absent() {
        let table = PopulationTable::new(vec![(700, 2.1e8), (800, 2.4e8)]).unwrap();
        let text = "name,start,end,min,mid,max\nX,788,790,-,50000,-\n";
        let opts = LoadOptions {
            population_table: Some(&table),
            ..Default::default()
        };
        let c = parse_corpus(text, "t", &opts).unwrap();
        assert_eq!(c.records[0].population, 2.4e8);
        let c = parse_corpus(text, "t", &LoadOptions::default()).unwrap();
        assert_eq!(c.rejects.len(), 1);
    }

    #[test]
    fn nearest_year_lookup() {
        let t = PopulationTable::new(vec![(700, 1.0), (800, 2.0), (900, 3.0)]).unwrap();
        assert_eq!(t.resolve(800), 2.0);
        assert_eq!(t.resolve(788), 2.0);
        assert_eq!(t.resolve(750), 1.0); // tie → earlier
        assert_eq!(t.resolve(751), 2.0);
        assert_eq!(t.resolve(1), 1.0);
        assert_eq!(t.resolve(2015), 3.0);
    }

    #[test]
    fn population_table_validation_and_parse() {
        assert!(PopulationTable::new(vec![]).is_err());
        assert!(PopulationTable::new(vec![(10, 1.0), (10, 2.0)]).is_err());
        assert!(PopulationTable::new(vec![(10, -1.0)]).is_err());
        let t = PopulationTable::parse("# unit_scale=1000\nyear,population\n1,100\n100,200\n").unwrap();
        assert_eq!(t.entries(), &[(1, 100_000.0), (100, 200_000.0)]);
        assert_eq!(t.resolution_gaps(), Vec::<(i32, i32)>::new());
        let t = PopulationTable::new(vec![(1900, 1.0), (1950, 2.0), (1951, 3.0)]).unwrap();
        assert_eq!(t.resolution_gaps(), vec![(1900, 1950)]);
        assert_eq!(PopulationTier::for_year(1599), PopulationTier::Century);
        assert_eq!(PopulationTier::for_year(1950), PopulationTier::Yearly);
    }

    #[test]
    fn rescaling_examples() {
        let c = excerpt();
        let ww2 = c.records.iter().find(|r| r.name == "WW2").unwrap();
        let t = rescale(ww2, REFERENCE_POPULATION).unwrap();
        assert!((t.value / 2.2779e8 - 1.0).abs() < 1e-4);
        let ww1 = c.records.iter().find(|r| r.name == "WW1").unwrap();
        let t = rescale(ww1, REFERENCE_POPULATION).unwrap();
        assert!((t.value / 6.2553e7 - 1.0).abs() < 1e-4);
        let same = rescale(ww1, ww1.population).unwrap();
        assert_eq!(same.value, ww1.casualties_mid);
        assert!(rescale(ww1, 0.0).is_err());
    }

    #[test]
    fn views_and_thresholds() {
        let c = excerpt();
        let all = build_observation_set(&c.records, &ViewSpec::new(View::Raw), 0.0).unwrap();
        assert_eq!(all.len(), 5);
        let big = build_observation_set(&c.records, &ViewSpec::new(View::Raw), 1e7).unwrap();
        assert_eq!(big.len(), 4);
        let err = build_observation_set(&c.records, &ViewSpec::new(View::Raw), 1e9).unwrap_err();
        assert!(matches!(err, Error::EmptySelection { .. }));
        let spec = ViewSpec {
            window: Some(YearWindow::new(1500, 2015).unwrap()),
            ..ViewSpec::new(View::Raw)
        };
        assert_eq!(build_observation_set(&c.records, &spec, 0.0).unwrap().len(), 2);
    }

    #[test]
    fn dual_view_is_finite_and_order_preserving() {
        let c = excerpt();
        let resc = build_observation_set(&c.records, &ViewSpec::new(View::Rescaled), 145_000.0).unwrap();
        let dual = build_observation_set(&c.records, &ViewSpec::new(View::Dual), 145_000.0).unwrap();
        assert_eq!(resc.len(), dual.len());
        // Three Kingdoms killed about 19% of the world: large but finite dual value.
        let i = dual.records.iter().position(|r| r.name == "Three Kingdoms").unwrap();
        assert!(dual.values[i].is_finite() && dual.values[i] > resc.values[i]);
        for i in 0..dual.len() {
            for j in 0..dual.len() {
                assert_eq!(resc.values[i] < resc.values[j], dual.values[i] < dual.values[j]);
            }
            assert!(dual.lower[i] <= dual.values[i] && dual.values[i] <= dual.upper[i]);
        }
    }

    #[test]
    fn anchors() {
        let r = ConflictRecord {
            end_year: 1945,
            ..record("WW2", 1939, 1e6, 1e9)
        };
        assert_eq!(r.anchor_year(AnchorRule::Start), 1939);
        assert_eq!(r.anchor_year(AnchorRule::Mid), 1942);
        assert_eq!(r.anchor_year(AnchorRule::End), 1945);
    }

    #[test]
    fn corpus_round_trips_through_csv() {
        let c = excerpt();
        let mut buf = Vec::new();
        write_corpus(&c.records, &mut buf).unwrap();
        let back = parse_corpus(std::str::from_utf8(&buf).unwrap(), "rt", &LoadOptions::default()).unwrap();
        assert_eq!(back.records, c.records);
    }

    proptest! {
        #[test]
        fn rescale_is_scale_equivariant(k in 1e-3f64..1e3, pop in 1e8f64..7e9, mid in 3e3f64..1e7) {
            let r = record("x", 1800, mid, pop);
            let scaled = ConflictRecord { population: pop * k, ..r.clone() };
            let a = rescale(&r, 7.2e9).unwrap().value;
            let b = rescale(&scaled, 7.2e9 * k).unwrap().value;
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn threshold_commutes_with_rescaling(
            mids in proptest::collection::vec(3e3f64..1e7, 1..40),
            u in 3e3f64..1e7,
        ) {
            // every record shares one population so the rescaled threshold is u·factor
            let pop = 1e9;
            let records: Vec<_> = mids.iter().enumerate().map(|(i, &m)| record(&i.to_string(), 1900, m, pop)).collect();
            let factor = REFERENCE_POPULATION / pop;
            let a = build_observation_set(&records, &ViewSpec::new(View::Raw), u).map(|s| s.len()).unwrap_or(0);
            let b = build_observation_set(&records, &ViewSpec::new(View::Rescaled), u * factor).map(|s| s.len()).unwrap_or(0);
            prop_assert_eq!(a, b);
        }
    }
}
