//! Time indexing and the uniformly sampled series container shared by every
//! other stage, together with the small amount of arithmetic on series that
//! the pipeline needs (min-max scaling, yearly block means, pointwise means).

use std::fmt;
use std::io::{Read, Write};
use std::ops::Sub;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Week number on a global monotone calendar.
///
/// Week 0 starts on Monday 2000-01-03; every later week is the following
/// seven-day block, so weeks line up with ISO weeks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeekIndex(pub i64);

impl WeekIndex {
    pub fn epoch() -> NaiveDate {
        NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid epoch")
    }

    /// Week containing `date`. Dates before the epoch map to negative weeks.
    pub fn from_date(date: NaiveDate) -> Self {
        let days = date.signed_duration_since(Self::epoch()).num_days();
        WeekIndex(days.div_euclid(7))
    }

    /// Monday opening this week.
    pub fn monday(self) -> NaiveDate {
        let epoch = Self::epoch();
        let days = self.0 * 7;
        if days >= 0 {
            epoch + Days::new(days as u64)
        } else {
            epoch - Days::new(days.unsigned_abs())
        }
    }

    pub fn offset(self, weeks: i64) -> Self {
        WeekIndex(self.0 + weeks)
    }
}

impl Sub for WeekIndex {
    type Output = i64;

    fn sub(self, rhs: Self) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for WeekIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Closed week range `[start, end]` with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct TimeInterval {
    start: WeekIndex,
    end: WeekIndex,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    start: WeekIndex,
    end: WeekIndex,
}

impl TryFrom<RawInterval> for TimeInterval {
    type Error = Error;

    fn try_from(raw: RawInterval) -> Result<Self> {
        TimeInterval::new(raw.start, raw.end)
    }
}

impl From<TimeInterval> for RawInterval {
    fn from(iv: TimeInterval) -> Self {
        RawInterval {
            start: iv.start,
            end: iv.end,
        }
    }
}

impl TimeInterval {
    pub fn new(start: WeekIndex, end: WeekIndex) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid(format!("interval start {start} must precede end {end}")));
        }
        Ok(TimeInterval { start, end })
    }

    pub fn start(&self) -> WeekIndex {
        self.start
    }

    pub fn end(&self) -> WeekIndex {
        self.end
    }

    pub fn len_weeks(&self) -> i64 {
        self.end - self.start
    }

    pub fn shifted(&self, weeks: i64) -> Self {
        TimeInterval {
            start: self.start.offset(weeks),
            end: self.end.offset(weeks),
        }
    }

    pub fn contains(&self, week: WeekIndex) -> bool {
        self.start <= week && week <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Weekly,
    Yearly,
}

/// Uniformly sampled, non-empty, finite series.
///
/// `start` is the absolute index of the first value: a week number for weekly
/// series, a block (year) number for yearly ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    start: i64,
    values: Vec<f64>,
    granularity: Granularity,
}

impl Series {
    pub fn new(start: i64, values: Vec<f64>, granularity: Granularity) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("series must contain at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("series value at position {i} is not finite")));
        }
        Ok(Series {
            start,
            values,
            granularity,
        })
    }

    pub fn weekly(start: WeekIndex, values: Vec<f64>) -> Result<Self> {
        Self::new(start.0, values, Granularity::Weekly)
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// Index one past the last value.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same index and granularity, new values. Length must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "replacement has {} values, series has {}",
                values.len(),
                self.values.len()
            )));
        }
        Series::new(self.start, values, self.granularity)
    }

    /// Leading `n` values (the training part of a holdout split).
    pub fn head(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.values.len() {
            return Err(Error::invalid(format!(
                "cannot take {n} of {} values",
                self.values.len()
            )));
        }
        Series::new(self.start, self.values[..n].to_vec(), self.granularity)
    }

    /// Trailing values from position `n` on.
    pub fn tail_from(&self, n: usize) -> Result<Self> {
        if n >= self.values.len() {
            return Err(Error::invalid(format!(
                "no values left after position {n} of {}",
                self.values.len()
            )));
        }
        Series::new(self.start + n as i64, self.values[n..].to_vec(), self.granularity)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["index", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.write_record([(self.start + i as i64).to_string(), format_sig9(*v)])?;
        }
        out.flush().map_err(|e| Error::io("<series csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>, granularity: Granularity) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), granularity)
    }

    /// Reads an `index,value` table; POP files (`week,value,...`) load their
    /// first channel. Indices must be consecutive.
    pub fn read_csv<R: Read>(reader: R, granularity: Granularity) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || !matches!(&headers[0], "index" | "week") || &headers[1] != "value" {
            return Err(Error::invalid(format!(
                "series csv header must be `index,value` or `week,value`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut start = None;
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let index: i64 = parse_field(&rec, 0, row)?;
            let value: f64 = parse_field(&rec, 1, row)?;
            let first = *start.get_or_insert(index);
            if index != first + values.len() as i64 {
                return Err(Error::invalid(format!(
                    "row {}: index {index} breaks the consecutive sequence",
                    row + 1
                )));
            }
            values.push(value);
        }
        Series::new(start.unwrap_or(0), values, granularity)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, row: usize) -> Result<T> {
    let raw = rec
        .get(col)
        .ok_or_else(|| Error::invalid(format!("row {}: missing column {col}", row + 1)))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("row {}: cannot parse `{raw}`", row + 1)))
}

/// Formats `x` with 9 significant digits, dropping trailing zeros.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };

    if !(-7..=15).contains(&exp) {
        let (lead, rest) = digits.split_at(1);
        return if rest.is_empty() {
            format!("{sign}{lead}e{exp}")
        } else {
            format!("{sign}{lead}.{rest}e{exp}")
        };
    }
    if exp >= 0 {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            format!("{sign}{digits}{}", "0".repeat(int_len - digits.len()))
        } else {
            format!("{sign}{}.{}", &digits[..int_len], &digits[int_len..])
        }
    } else {
        format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
    }
}

/// The query seed: one product image, its tags and the week it is observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub image_id: String,
    pub tags: Vec<String>,
    pub observation_week: WeekIndex,
}

impl Probe {
    /// Lowercases and trims tags; rejects empty tag lists and blank tags.
    pub fn new(
        image_id: impl Into<String>,
        tags: impl IntoIterator<Item = impl AsRef<str>>,
        observation_week: WeekIndex,
    ) -> Result<Self> {
        let probe = Probe {
            image_id: image_id.into(),
            tags: tags.into_iter().map(|t| t.as_ref().trim().to_lowercase()).collect(),
            observation_week,
        };
        probe.validate()?;
        Ok(probe)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_id.trim().is_empty() {
            return Err(Error::invalid("probe image id is blank"));
        }
        if self.tags.is_empty() {
            return Err(Error::invalid(format!("probe `{}` has no tags", self.image_id)));
        }
        if let Some(i) = self.tags.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::invalid(format!(
                "probe `{}` has a blank tag at position {i}",
                self.image_id
            )));
        }
        Ok(())
    }
}

/// Rescales into `[0, 1]`. A constant series maps to all zeros.
pub fn min_max_normalize(s: &Series) -> Series {
    let (lo, hi) = s
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let values = if range > 0.0 {
        s.values.iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.0; s.values.len()]
    };
    Series {
        start: s.start,
        values,
        granularity: s.granularity,
    }
}

/// Means of consecutive `weeks_per_year`-long blocks, oldest block first.
pub fn aggregate_yearly(s: &Series, weeks_per_year: usize) -> Result<Series> {
    if s.granularity != Granularity::Weekly {
        return Err(Error::invalid("yearly aggregation needs a weekly series"));
    }
    if weeks_per_year == 0 {
        return Err(Error::invalid("weeks_per_year must be positive"));
    }
    let rem = s.values.len() % weeks_per_year;
    if rem != 0 {
        return Err(Error::invalid(format!(
            "series of {} weeks is not a whole number of {weeks_per_year}-week years (remainder {rem})",
            s.values.len()
        )));
    }
    let values = s
        .values
        .chunks(weeks_per_year)
        .map(|block| block.iter().sum::<f64>() / weeks_per_year as f64)
        .collect();
    Series::new(s.start.div_euclid(weeks_per_year as i64), values, Granularity::Yearly)
}

/// Pointwise arithmetic mean of aligned series.
pub fn average_series(list: &[Series]) -> Result<Series> {
    let first = list
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty list of series"))?;
    for (i, s) in list.iter().enumerate().skip(1) {
        if s.values.len() != first.values.len() {
            return Err(Error::invalid(format!(
                "series {i} has length {}, expected {}",
                s.values.len(),
                first.values.len()
            )));
        }
        if s.start != first.start || s.granularity != first.granularity {
            return Err(Error::invalid(format!("series {i} is not aligned with series 0")));
        }
    }
    let n = list.len() as f64;
    let values = (0..first.values.len())
        .map(|j| list.iter().map(|s| s.values[j]).sum::<f64>() / n)
        .collect();
    Series::new(first.start, values, first.granularity)
}
