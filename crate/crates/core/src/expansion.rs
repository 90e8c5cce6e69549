//! Time-dependent query expansion: one probe becomes a schedule of
//! polarity-tagged, time-windowed image queries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Probe, TimeInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    /// One-letter suffix used in canonical keys.
    pub fn letter(self) -> char {
        match self {
            Polarity::Positive => 'p',
            Polarity::Negative => 'm',
            Polarity::Neutral => 'n',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    #[default]
    Standard,
    /// Base tags only, no polarity tags.
    NoExpansion,
    /// Standard queries looking one `k_past` earlier.
    MisalignedPast,
}

impl ExpansionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExpansionMode::Standard => "standard",
            ExpansionMode::NoExpansion => "no_expansion",
            ExpansionMode::MisalignedPast => "misaligned_past",
        }
    }
}

impl fmt::Display for ExpansionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpansionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "standard" => Ok(ExpansionMode::Standard),
            "no_expansion" => Ok(ExpansionMode::NoExpansion),
            "misaligned_past" => Ok(ExpansionMode::MisalignedPast),
            other => Err(Error::invalid(format!("unknown expansion mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    pub k_past: usize,
    pub window_w: usize,
    pub positive_tag: String,
    pub negative_tag: String,
    pub mode: ExpansionMode,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            k_past: 52,
            window_w: 4,
            positive_tag: "fashionable".into(),
            negative_tag: "unfashionable".into(),
            mode: ExpansionMode::Standard,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_past == 0 {
            return Err(Error::invalid("k_past must be at least 1"));
        }
        if self.window_w == 0 {
            return Err(Error::invalid("window_w must be at least 1"));
        }
        if self.mode != ExpansionMode::NoExpansion {
            let (pos, neg) = (
                self.positive_tag.trim().to_lowercase(),
                self.negative_tag.trim().to_lowercase(),
            );
            if pos.is_empty() || neg.is_empty() {
                return Err(Error::invalid("polarity tags must be non-blank"));
            }
            if pos == neg {
                return Err(Error::invalid(format!("positive and negative tags are both `{pos}`")));
            }
        }
        Ok(())
    }
}

/// One web query: tokens, polarity, the upload window and the step `k` it serves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    /// Base tags followed, for positive/negative specs, by the polarity tag.
    pub tokens: Vec<String>,
    pub polarity: Polarity,
    pub interval: TimeInterval,
    pub step_k: usize,
}

impl QuerySpec {
    pub fn base_tokens(&self) -> &[String] {
        match self.polarity {
            Polarity::Neutral => &self.tokens,
            _ => &self.tokens[..self.tokens.len().saturating_sub(1)],
        }
    }

    pub fn polarity_tag(&self) -> Option<&str> {
        match self.polarity {
            Polarity::Neutral => None,
            _ => self.tokens.last().map(String::as_str),
        }
    }

    /// Text sent to a search engine.
    pub fn query_text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn canonical_key(&self) -> String {
        canonical_key(self)
    }
}

/// Expands a probe into its query schedule, ordered by `k` ascending with
/// the positive query before the negative one.
pub fn expand(probe: &Probe, cfg: &ExpansionConfig) -> Result<Vec<QuerySpec>> {
    probe.validate()?;
    cfg.validate()?;
    let t = probe.observation_week;
    let w = cfg.window_w as i64;
    let shift = match cfg.mode {
        ExpansionMode::MisalignedPast => -(cfg.k_past as i64),
        _ => 0,
    };
    let base: Vec<String> = probe.tags.iter().map(|s| s.trim().to_lowercase()).collect();

    let per_step = if cfg.mode == ExpansionMode::NoExpansion { 1 } else { 2 };
    let mut specs = Vec::with_capacity(cfg.k_past * per_step);
    for k in 1..=cfg.k_past {
        let end = t.offset(-(k as i64));
        let interval = TimeInterval::new(end.offset(-w), end)?.shifted(shift);
        if cfg.mode == ExpansionMode::NoExpansion {
            specs.push(QuerySpec {
                tokens: base.clone(),
                polarity: Polarity::Neutral,
                interval,
                step_k: k,
            });
            continue;
        }
        for (polarity, tag) in [
            (Polarity::Positive, &cfg.positive_tag),
            (Polarity::Negative, &cfg.negative_tag),
        ] {
            let mut tokens = base.clone();
            tokens.push(tag.trim().to_lowercase());
            specs.push(QuerySpec {
                tokens,
                polarity,
                interval,
                step_k: k,
            });
        }
    }
    Ok(specs)
}

/// Deterministic cache/fixture address for a query.
///
/// Base tokens are lowercased and sorted, the polarity tag (if any) stays
/// last, then `@start-end#<polarity letter>`.
pub fn canonical_key(q: &QuerySpec) -> String {
    let mut base: Vec<String> = q.base_tokens().iter().map(|t| t.to_lowercase()).collect();
    base.sort();
    if let Some(tag) = q.polarity_tag() {
        base.push(tag.to_lowercase());
    }
    format!(
        "{}@{}-{}#{}",
        base.join("+"),
        q.interval.start(),
        q.interval.end(),
        q.polarity.letter()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::WeekIndex;
    use proptest::prelude::*;

    fn probe() -> Probe {
        Probe::new("z", ["yellow", "long sleeve"], WeekIndex(100)).unwrap()
    }

    fn cfg(k_past: usize, mode: ExpansionMode) -> ExpansionConfig {
        ExpansionConfig {
            k_past,
            mode,
            ..Default::default()
        }
    }

    #[test]
    fn first_positive_spec() {
        let specs = expand(&probe(), &cfg(1, ExpansionMode::Standard)).unwrap();
        assert_eq!(specs.len(), 2);
        let pos = &specs[0];
        assert_eq!(pos.tokens, vec!["yellow", "long sleeve", "fashionable"]);
        assert_eq!(pos.polarity, Polarity::Positive);
        assert_eq!(
            (pos.interval.start(), pos.interval.end()),
            (WeekIndex(95), WeekIndex(99))
        );
        assert_eq!(specs[1].polarity, Polarity::Negative);
        assert_eq!(specs[1].tokens.last().unwrap(), "unfashionable");
    }

    #[test]
    fn full_year_gives_two_queries_per_week() {
        let specs = expand(&probe(), &cfg(52, ExpansionMode::Standard)).unwrap();
        assert_eq!(specs.len(), 104);
        let neutral = expand(&probe(), &cfg(52, ExpansionMode::NoExpansion)).unwrap();
        assert_eq!(neutral.len(), 52);
        assert!(neutral
            .iter()
            .all(|s| s.polarity == Polarity::Neutral && s.tokens == vec!["yellow", "long sleeve"]));
    }

    #[test]
    fn misaligned_shifts_back_one_k_past() {
        let specs = expand(&probe(), &cfg(52, ExpansionMode::MisalignedPast)).unwrap();
        let first = &specs[0];
        assert_eq!(first.step_k, 1);
        assert_eq!(
            (first.interval.start(), first.interval.end()),
            (WeekIndex(43), WeekIndex(47))
        );
        let standard = expand(&probe(), &cfg(52, ExpansionMode::Standard)).unwrap();
        for (a, b) in specs.iter().zip(&standard) {
            assert_eq!(a.interval, b.interval.shifted(-52));
            assert_eq!(a.tokens, b.tokens);
        }
    }

    #[test]
    fn empty_tags_rejected() {
        let bad = Probe {
            image_id: "z".into(),
            tags: vec![],
            observation_week: WeekIndex(10),
        };
        assert!(expand(&bad, &ExpansionConfig::default()).is_err());
        let same = ExpansionConfig {
            negative_tag: "fashionable".into(),
            ..Default::default()
        };
        assert!(expand(&probe(), &same).is_err());
    }

    #[test]
    fn canonical_keys() {
        let specs = expand(&probe(), &cfg(1, ExpansionMode::Standard)).unwrap();
        assert_eq!(canonical_key(&specs[0]), "long sleeve+yellow+fashionable@95-99#p");
        assert_eq!(canonical_key(&specs[1]), "long sleeve+yellow+unfashionable@95-99#m");

        let neutral = expand(&probe(), &cfg(1, ExpansionMode::NoExpansion)).unwrap();
        assert_eq!(canonical_key(&neutral[0]), "long sleeve+yellow@95-99#n");

        let mut permuted = specs[0].clone();
        permuted.tokens.swap(0, 1);
        assert_eq!(canonical_key(&permuted), canonical_key(&specs[0]));
    }

    #[test]
    fn intervals_cover_the_past_with_unit_stride() {
        let (k_past, w) = (20usize, 4i64);
        let specs = expand(
            &probe(),
            &ExpansionConfig {
                k_past,
                ..Default::default()
            },
        )
        .unwrap();
        let positives: Vec<_> = specs.iter().filter(|s| s.polarity == Polarity::Positive).collect();
        let t = 100i64;
        let lo = positives.iter().map(|s| s.interval.start().0).min().unwrap();
        let hi = positives.iter().map(|s| s.interval.end().0).max().unwrap();
        assert_eq!((lo, hi), (t - k_past as i64 - w, t - 1));
        for pair in positives.windows(2) {
            let (a, b) = (pair[0].interval, pair[1].interval);
            let overlap = b.end().0.min(a.end().0) - a.start().0.max(b.start().0);
            assert_eq!(overlap, w - 1);
        }
    }

    proptest! {
        #[test]
        fn expand_is_pure(k_past in 1usize..60, w in 1usize..12, t in -300i64..300) {
            let p = Probe::new("q", ["red", "skirt"], WeekIndex(t)).unwrap();
            let c = ExpansionConfig { k_past, window_w: w, ..Default::default() };
            let a = expand(&p, &c).unwrap();
            let b = expand(&p, &c).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), 2 * k_past);
            for (i, s) in a.iter().enumerate() {
                prop_assert_eq!(s.step_k, i / 2 + 1);
                prop_assert_eq!(s.interval.len_weeks(), w as i64);
                prop_assert_eq!(s.interval.end().0, t - s.step_k as i64);
            }
        }
    }
}
