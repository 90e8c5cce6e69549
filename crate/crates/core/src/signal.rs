//! Signal forming: the POP value at step `k` is the mean cosine similarity
//! between the probe's features and the features of the images kept for
//! that step.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::HeadModel;
use crate::error::{Error, Result};
use crate::series::{format_sig9, Granularity, Series, WeekIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalVariant {
    /// Cleaned fashionable images through the retrained head (POP proper).
    Positive,
    /// Cleaned unfashionable images instead of fashionable ones.
    Negative,
    /// Two channels: positive first, negative second.
    PositiveAndNegative,
    /// Fashionable images compared in raw embedding space.
    NoLearning,
    /// Untagged query results compared in raw embedding space.
    NoExpansion,
}

impl SignalVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalVariant::Positive => "pop",
            SignalVariant::Negative => "negative",
            SignalVariant::PositiveAndNegative => "pos-neg",
            SignalVariant::NoLearning => "no-learning",
            SignalVariant::NoExpansion => "no-expansion",
        }
    }

    pub fn uses_head(self) -> bool {
        matches!(
            self,
            SignalVariant::Positive | SignalVariant::Negative | SignalVariant::PositiveAndNegative
        )
    }
}

impl fmt::Display for SignalVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pop" | "positive" => Ok(SignalVariant::Positive),
            "negative" => Ok(SignalVariant::Negative),
            "pos-neg" | "positive_and_negative" => Ok(SignalVariant::PositiveAndNegative),
            "no-learning" | "no_learning" => Ok(SignalVariant::NoLearning),
            "no-expansion" | "no_expansion" => Ok(SignalVariant::NoExpansion),
            other => Err(Error::invalid(format!("unknown signal variant `{other}`"))),
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "cosine of vectors with dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::numeric("cosine of a zero-norm feature vector"));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Embeddings of the images kept for one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepImages {
    /// Fashionable images, or every hit for untagged queries.
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopSeries {
    pub series: Series,
    /// Second channel for [`SignalVariant::PositiveAndNegative`].
    pub negative: Option<Series>,
    pub variant: SignalVariant,
    pub probe_id: String,
    /// Images behind each value, oldest week first (before gap filling).
    pub coverage: Vec<usize>,
    pub coverage_negative: Option<Vec<usize>>,
}

/// Builds the `k_past`-long signal ending the week before `observation_week`.
///
/// `steps[k - 1]` holds the images for step `k`. Steps without images are
/// filled by linear interpolation between the nearest covered neighbours
/// (copying the nearest value at the ends).
pub fn form_signal(
    probe_id: &str,
    observation_week: WeekIndex,
    probe_embedding: &[f64],
    steps: &[StepImages],
    model: Option<&HeadModel>,
    variant: SignalVariant,
) -> Result<PopSeries> {
    let k_past = steps.len();
    if k_past == 0 {
        return Err(Error::invalid("signal needs at least one step"));
    }
    let head = if variant.uses_head() {
        Some(model.ok_or_else(|| Error::invalid(format!("variant `{variant}` needs a trained head")))?)
    } else {
        None
    };
    let featurize = |e: &[f64]| -> Result<Vec<f64>> {
        match head {
            Some(m) => m.features(e),
            None => Ok(e.to_vec()),
        }
    };
    let probe_features = featurize(probe_embedding)?;
    if probe_features.iter().all(|v| *v == 0.0) {
        return Err(Error::numeric(format!(
            "probe `{probe_id}` has an all-zero feature vector"
        )));
    }

    let channel = |pick: fn(&StepImages) -> &Vec<Vec<f64>>| -> Result<(Vec<f64>, Vec<usize>)> {
        // Oldest first: position j holds step k = k_past - j.
        let mut raw = Vec::with_capacity(k_past);
        let mut coverage = Vec::with_capacity(k_past);
        for j in 0..k_past {
            let (mut sum, mut used) = (0.0, 0);
            for img in pick(&steps[k_past - 1 - j]) {
                let f = featurize(img)?;
                // A dead feature vector has no direction; the image is left out.
                if f.iter().all(|v| *v == 0.0) {
                    continue;
                }
                sum += cosine(&f, &probe_features)?;
                used += 1;
            }
            coverage.push(used);
            raw.push((used > 0).then(|| sum / used as f64));
        }
        Ok((fill_gaps(&raw)?, coverage))
    };

    let start = observation_week.offset(-(k_past as i64));
    let (main, negative) = match variant {
        SignalVariant::Negative => (channel(|s| &s.negatives)?, None),
        SignalVariant::PositiveAndNegative => (channel(|s| &s.positives)?, Some(channel(|s| &s.negatives)?)),
        _ => (channel(|s| &s.positives)?, None),
    };
    let (values, coverage) = main;
    let (negative, coverage_negative) = match negative {
        Some((v, c)) => (Some(Series::weekly(start, v)?), Some(c)),
        None => (None, None),
    };
    Ok(PopSeries {
        series: Series::weekly(start, values)?,
        negative,
        variant,
        probe_id: probe_id.to_string(),
        coverage,
        coverage_negative,
    })
}

/// Linear interpolation across `None` gaps; ends copy the nearest value.
pub fn fill_gaps(raw: &[Option<f64>]) -> Result<Vec<f64>> {
    let known: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].is_some()).collect();
    let (&first, &last) = match (known.first(), known.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::MissingData("no step has any images".into())),
    };
    let mut out = vec![0.0; raw.len()];
    for i in 0..raw.len() {
        out[i] = match raw[i] {
            Some(v) => v,
            None if i < first => raw[first].unwrap(),
            None if i > last => raw[last].unwrap(),
            None => {
                let lo = known.iter().rev().find(|&&j| j < i).copied().unwrap();
                let hi = known.iter().find(|&&j| j > i).copied().unwrap();
                let (a, b) = (raw[lo].unwrap(), raw[hi].unwrap());
                a + (b - a) * (i - lo) as f64 / (hi - lo) as f64
            }
        };
    }
    Ok(out)
}

impl PopSeries {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<pop csv>", e);
        let join = |c: &[usize]| c.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        writeln!(out, "# variant={}", self.variant).map_err(io)?;
        writeln!(out, "# probe_id={}", self.probe_id).map_err(io)?;
        writeln!(out, "# coverage={}", join(&self.coverage)).map_err(io)?;
        match (&self.negative, &self.coverage_negative) {
            (Some(neg), Some(cov)) => {
                writeln!(out, "# coverage_neg={}", join(cov)).map_err(io)?;
                writeln!(out, "# channels=positive,negative").map_err(io)?;
                writeln!(out, "week,value,value_neg").map_err(io)?;
                for (i, (a, b)) in self.series.values().iter().zip(neg.values()).enumerate() {
                    let week = self.series.start() + i as i64;
                    writeln!(out, "{week},{},{}", format_sig9(*a), format_sig9(*b)).map_err(io)?;
                }
            }
            _ => {
                writeln!(out, "week,value").map_err(io)?;
                for (i, v) in self.series.values().iter().enumerate() {
                    let week = self.series.start() + i as i64;
                    writeln!(out, "{week},{}", format_sig9(*v)).map_err(io)?;
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut variant = None;
        let mut probe_id = String::new();
        let mut coverage = Vec::new();
        let mut coverage_negative = None;
        let mut header_seen = false;
        let mut two_channels = false;
        let (mut start, mut pos, mut neg) = (None, Vec::new(), Vec::new());
        let parse_cov = |s: &str| -> Result<Vec<usize>> {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad coverage `{x}`")))
                })
                .collect()
        };
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<pop csv>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "variant" => variant = Some(v.trim().parse()?),
                        "probe_id" => probe_id = v.trim().to_string(),
                        "coverage" => coverage = parse_cov(v.trim())?,
                        "coverage_neg" => coverage_negative = Some(parse_cov(v.trim())?),
                        _ => {}
                    }
                }
                continue;
            }
            if !header_seen {
                match line {
                    "week,value" => {}
                    "week,value,value_neg" => two_channels = true,
                    other => return Err(Error::invalid(format!("unexpected pop csv header `{other}`"))),
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::invalid(format!("line {}: malformed row `{line}`", n + 1));
            if fields.len() != if two_channels { 3 } else { 2 } {
                return Err(bad());
            }
            let week: i64 = fields[0].parse().map_err(|_| bad())?;
            let first = *start.get_or_insert(week);
            if week != first + pos.len() as i64 {
                return Err(bad());
            }
            pos.push(fields[1].parse::<f64>().map_err(|_| bad())?);
            if two_channels {
                neg.push(fields[2].parse::<f64>().map_err(|_| bad())?);
            }
        }
        let start = start.ok_or_else(|| Error::invalid("pop csv has no rows"))?;
        let series = Series::new(start, pos, Granularity::Weekly)?;
        let negative = if two_channels {
            Some(Series::new(start, neg, Granularity::Weekly)?)
        } else {
            None
        };
        Ok(PopSeries {
            series,
            negative,
            variant: variant.ok_or_else(|| Error::invalid("pop csv lacks a variant header"))?,
            probe_id,
            coverage,
            coverage_negative,
        })
    }
}
