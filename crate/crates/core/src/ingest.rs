//! Price/return panels, CSV I/O and calendar slicing.
//!
//! CSV layout: UTF-8, comma separated, a header row `date,<label>,...`,
//! ISO-8601 dates in the first column and C-locale decimals elsewhere.
//! Empty cells and `NA`/`NaN` are read as missing values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

macro_rules! panel_common {
    ($name:ident) => {
        impl $name {
            pub fn sources(&self) -> &[String] {
                &self.sources
            }

            pub fn dates(&self) -> &[NaiveDate] {
                &self.dates
            }

            /// Row-major n×p values; `NaN` marks a missing cell.
            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn n_obs(&self) -> usize {
                self.dates.len()
            }

            pub fn n_sources(&self) -> usize {
                self.sources.len()
            }

            pub fn row(&self, t: usize) -> &[f64] {
                let p = self.n_sources();
                &self.values[t * p..(t + 1) * p]
            }

            pub fn column(&self, j: usize) -> Vec<f64> {
                (0..self.n_obs()).map(|t| self.row(t)[j]).collect()
            }

            /// Index of the first source with a missing value, if any.
            pub fn first_incomplete_source(&self) -> Option<usize> {
                (0..self.n_sources()).find(|&j| (0..self.n_obs()).any(|t| self.row(t)[j].is_nan()))
            }
        }
    };
}

/// n×p matrix of per-period returns (decimal units) with labels and dates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    sources: Vec<String>,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

/// Same shape as [`ReturnPanel`] but holding strictly positive prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    sources: Vec<String>,
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
}

panel_common!(ReturnPanel);
panel_common!(PricePanel);

fn validate_shape(sources: &[String], dates: &[NaiveDate], values: &[f64]) -> Result<()> {
    if sources.is_empty() || dates.is_empty() {
        return Err(Error::EmptyFile);
    }
    if values.len() != sources.len() * dates.len() {
        return Err(Error::DimensionMismatch {
            expected: sources.len() * dates.len(),
            actual: values.len(),
        });
    }
    for w in dates.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateDate(w[0].to_string()));
        }
        if w[0] > w[1] {
            return Err(Error::InvalidConfig(format!(
                "dates must be increasing ({} after {})",
                w[1], w[0]
            )));
        }
    }
    Ok(())
}

impl ReturnPanel {
    pub fn new(sources: Vec<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        validate_shape(&sources, &dates, &values)?;
        Ok(Self {
            sources,
            dates,
            values,
        })
    }

    /// Sub-panel with the given source columns, in the given order.
    pub fn select_sources(&self, idx: &[usize]) -> Self {
        let values = (0..self.n_obs())
            .flat_map(|t| idx.iter().map(move |&j| self.row(t)[j]))
            .collect();
        Self {
            sources: idx.iter().map(|&j| self.sources[j].clone()).collect(),
            dates: self.dates.clone(),
            values,
        }
    }

    /// Sub-panel with rows `start..end`.
    pub fn select_rows(&self, start: usize, end: usize) -> Self {
        let p = self.n_sources();
        Self {
            sources: self.sources.clone(),
            dates: self.dates[start..end].to_vec(),
            values: self.values[start * p..end * p].to_vec(),
        }
    }

    /// Indices of the sources without missing values.
    pub fn complete_source_indices(&self) -> Vec<usize> {
        (0..self.n_sources())
            .filter(|&j| (0..self.n_obs()).all(|t| !self.row(t)[j].is_nan()))
            .collect()
    }

    /// Drops every source column with a missing value. Returns the cleaned
    /// panel and the dropped labels.
    pub fn complete_cases(&self) -> (Self, Vec<String>) {
        let keep = self.complete_source_indices();
        let dropped = (0..self.n_sources())
            .filter(|j| !keep.contains(j))
            .map(|j| self.sources[j].clone())
            .collect();
        (self.select_sources(&keep), dropped)
    }

    /// Per-source sample means.
    pub fn mean_returns(&self) -> Vec<f64> {
        crate::matstat::column_means(&self.values, self.n_obs(), self.n_sources())
    }
}

impl PricePanel {
    pub fn new(sources: Vec<String>, dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        validate_shape(&sources, &dates, &values)?;
        Ok(Self {
            sources,
            dates,
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelKind {
    Prices,
    Returns,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedPanel {
    Prices(PricePanel),
    Returns(ReturnPanel),
}

impl LoadedPanel {
    /// Returns as-is, or log returns of prices.
    pub fn into_returns(self) -> Result<ReturnPanel> {
        match self {
            LoadedPanel::Returns(r) => Ok(r),
            LoadedPanel::Prices(p) => log_returns(&p),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, kind: PanelKind) -> Result<LoadedPanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, kind)
}

pub fn load_returns(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    load_csv(path, PanelKind::Returns)?.into_returns()
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    let day = s.split(['T', ' ']).next().unwrap_or(s);
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}

fn parse_cell(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value {s:?}")),
        Err(_) => Err(format!("not a number: {s:?}")),
    }
}

/// Parses a panel from CSV text. Rows are sorted by date.
///
/// Parse errors cite the 1-based data row (header excluded) and the
/// 1-based value column (the date column is column 0).
pub fn read_csv<R: Read>(reader: R, kind: PanelKind) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        row: 0,
        column: 0,
        message: e.to_string(),
    })?;
    if headers.len() < 2 {
        return Err(if headers.is_empty() {
            Error::EmptyFile
        } else {
            Error::Parse {
                row: 0,
                column: 0,
                message: "header needs a date column and at least one source".into(),
            }
        });
    }
    let sources: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let p = sources.len();

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() != p + 1 {
            return Err(Error::Parse {
                row,
                column: rec.len().min(p + 1),
                message: format!("expected {} cells, found {}", p + 1, rec.len()),
            });
        }
        let date = parse_date(&rec[0]).ok_or_else(|| Error::Parse {
            row,
            column: 0,
            message: format!("not an ISO-8601 date: {:?}", &rec[0]),
        })?;
        let vals = (1..=p)
            .map(|c| {
                parse_cell(&rec[c]).map_err(|message| Error::Parse {
                    row,
                    column: c,
                    message,
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((date, vals));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0.to_string()));
    }
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let values: Vec<f64> = rows.into_iter().flat_map(|(_, v)| v).collect();
    Ok(match kind {
        PanelKind::Returns => LoadedPanel::Returns(ReturnPanel::new(sources, dates, values)?),
        PanelKind::Prices => LoadedPanel::Prices(PricePanel::new(sources, dates, values)?),
    })
}

/// Writes a return panel as CSV. Values use shortest round-trip formatting,
/// so reading the file back reproduces every value bit-for-bit.
pub fn write_csv<W: Write>(panel: &ReturnPanel, writer: W) -> Result<()> {
    let io_err = |e: csv::Error| Error::Io {
        path: "<csv writer>".into(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.sources().iter().cloned());
    w.write_record(&header).map_err(io_err)?;
    for t in 0..panel.n_obs() {
        let mut rec = vec![panel.dates()[t].to_string()];
        rec.extend(panel.row(t).iter().map(|v| {
            if v.is_nan() {
                String::new()
            } else {
                format!("{v:?}")
            }
        }));
        w.write_record(&rec).map_err(io_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv writer>".into(),
        source,
    })
}

/// value[t][j] = ln(P[t+1][j] / P[t][j]). A missing price makes the
/// adjacent returns missing.
pub fn log_returns(prices: &PricePanel) -> Result<ReturnPanel> {
    let n = prices.n_obs();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, actual: n });
    }
    for t in 0..n {
        for (j, &v) in prices.row(t).iter().enumerate() {
            if v <= 0.0 {
                return Err(Error::NonPositivePrice {
                    source_label: prices.sources()[j].clone(),
                    date: prices.dates()[t].to_string(),
                    value: v,
                });
            }
        }
    }
    let values = (1..n)
        .flat_map(|t| {
            prices
                .row(t)
                .iter()
                .zip(prices.row(t - 1))
                .map(|(now, prev)| (now / prev).ln())
        })
        .collect();
    ReturnPanel::new(prices.sources().to_vec(), prices.dates()[1..].to_vec(), values)
}

/// Inclusive calendar range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub label: Option<String>,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self {
            start,
            end,
            label: None,
        }
    }

    fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}..{}", self.start, self.end))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeriodScheme {
    /// January–June and July–December of each year.
    HalfYears,
    /// Calendar months.
    Months,
    /// Caller-supplied, ordered, non-overlapping ranges.
    ExplicitRanges(Vec<DateRange>),
}

/// One calendar period of a panel after complete-case source filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSlice {
    pub label: String,
    pub panel: ReturnPanel,
    /// Sources removed because they had a missing value in this period.
    pub dropped: Vec<String>,
    /// Row range of the period in the input panel.
    pub rows: std::ops::Range<usize>,
}

fn half_year_key(d: NaiveDate) -> i64 {
    d.year() as i64 * 2 + i64::from(d.month() > 6)
}

fn month_key(d: NaiveDate) -> i64 {
    d.year() as i64 * 12 + d.month0() as i64
}

fn half_year_label(key: i64) -> String {
    let year = key.div_euclid(2);
    if key.rem_euclid(2) == 0 {
        format!("{year} (Jan-Jun)")
    } else {
        format!("{year} (Jul-Dec)")
    }
}

fn month_label(key: i64) -> String {
    format!("{}-{:02}", key.div_euclid(12), key.rem_euclid(12) + 1)
}

/// Splits a panel into consecutive non-overlapping periods.
///
/// For the calendar schemes every period between the first and last date
/// is required to have rows. Sources with a missing value inside a period
/// are dropped from that period only.
pub fn slice_periods(panel: &ReturnPanel, scheme: &PeriodScheme) -> Result<Vec<PeriodSlice>> {
    let ranges: Vec<(String, std::ops::Range<usize>)> = match scheme {
        PeriodScheme::HalfYears => calendar_groups(panel, half_year_key, half_year_label)?,
        PeriodScheme::Months => calendar_groups(panel, month_key, month_label)?,
        PeriodScheme::ExplicitRanges(list) => {
            let mut out = Vec::with_capacity(list.len());
            for (k, r) in list.iter().enumerate() {
                if r.end < r.start {
                    return Err(Error::InvalidConfig(format!("range {} ends before it starts", r.label())));
                }
                if k > 0 && list[k - 1].end >= r.start {
                    return Err(Error::InvalidConfig(format!(
                        "range {} overlaps or precedes {}",
                        r.label(),
                        list[k - 1].label()
                    )));
                }
                let start = panel.dates().partition_point(|d| *d < r.start);
                let end = panel.dates().partition_point(|d| *d <= r.end);
                if start == end {
                    return Err(Error::EmptyPeriod(r.label()));
                }
                out.push((r.label(), start..end));
            }
            out
        }
    };
    Ok(ranges
        .into_iter()
        .map(|(label, rows)| {
            let (clean, dropped) = panel.select_rows(rows.start, rows.end).complete_cases();
            PeriodSlice {
                label,
                panel: clean,
                dropped,
                rows,
            }
        })
        .collect())
}

fn calendar_groups(
    panel: &ReturnPanel,
    key: fn(NaiveDate) -> i64,
    label: fn(i64) -> String,
) -> Result<Vec<(String, std::ops::Range<usize>)>> {
    let mut out: Vec<(i64, std::ops::Range<usize>)> = Vec::new();
    for (t, d) in panel.dates().iter().enumerate() {
        let k = key(*d);
        match out.last_mut() {
            Some((last, r)) if *last == k => r.end = t + 1,
            Some((last, _)) if k != *last + 1 => return Err(Error::EmptyPeriod(label(*last + 1))),
            _ => out.push((k, t..t + 1)),
        }
    }
    Ok(out.into_iter().map(|(k, r)| (label(k), r)).collect())
}
