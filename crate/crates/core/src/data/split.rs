use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{SegmentMode, SegmentSet, TimeSeries};

/// How the three split boundaries are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Cut at `floor(r·T)` of the cumulative ratios.
    #[default]
    Chronological,
    /// Explicit exclusive end indices of train, validation and test.
    Borders([usize; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// Train/validation/test fractions; ignored under [`SplitPolicy::Borders`].
    pub ratios: [f64; 3],
    pub policy: SplitPolicy,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.7, 0.1, 0.2],
            policy: SplitPolicy::Chronological,
        }
    }
}

impl SplitSpec {
    pub fn ratios(train: f64, val: f64, test: f64) -> Self {
        Self {
            ratios: [train, val, test],
            policy: SplitPolicy::Chronological,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SplitPolicy::Borders([a, b, c]) = self.policy {
            if !(a <= b && b <= c) {
                return Err(Error::InvalidArgument(format!(
                    "split borders must be ordered, got [{a}, {b}, {c}]"
                )));
            }
            return Ok(());
        }
        if self.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be ≥ 0, got {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }

    /// Exclusive end indices of the three splits for a series of length `t`.
    pub fn boundaries(&self, t: usize) -> Result<[usize; 3]> {
        self.validate()?;
        match self.policy {
            SplitPolicy::Borders(b) => {
                if b[2] > t {
                    return Err(Error::SeriesTooShort {
                        context: "split borders".into(),
                        required: b[2],
                        found: t,
                    });
                }
                Ok(b)
            }
            SplitPolicy::Chronological => {
                let cut = |r: f64| (((r * t as f64) + 1e-9).floor() as usize).min(t);
                let b1 = cut(self.ratios[0]);
                let b2 = cut(self.ratios[0] + self.ratios[1]).max(b1);
                Ok([b1, b2, t])
            }
        }
    }
}

/// One split: rows `start..end` of the source series, of which the first
/// `prefix` rows are borrowed history from the preceding split. Only rows
/// from `start + prefix` on are ever forecast targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitView {
    pub name: &'static str,
    pub start: usize,
    pub end: usize,
    pub prefix: usize,
    series: Option<TimeSeries>,
}

impl SplitView {
    fn new(source: &TimeSeries, name: &'static str, own_start: usize, end: usize, prefix: usize) -> Result<Self> {
        let start = own_start - prefix;
        let series = if end > own_start {
            Some(source.slice(start, end)?)
        } else {
            None
        };
        Ok(Self {
            name,
            start,
            end,
            prefix,
            series,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_none()
    }

    /// The rows of this view, or [`Error::EmptySplit`].
    pub fn series(&self) -> Result<&TimeSeries> {
        self.series.as_ref().ok_or(Error::EmptySplit(self.name))
    }

    /// Source indices that may appear as targets.
    pub fn target_range(&self) -> std::ops::Range<usize> {
        self.start + self.prefix..self.end
    }

    /// Windows of one channel; every target lies inside [`Self::target_range`].
    pub fn segments(&self, channel: usize, lookback: usize, horizon: usize, mode: SegmentMode) -> Result<SegmentSet> {
        let series = self.series()?;
        let values = series.channel(channel)?;
        // With a short prefix the first windows would reach back into
        // borrowed rows for their targets; skip those.
        let skip = lookback.saturating_sub(self.prefix);
        let values = values.get(skip..).unwrap_or(&[]);
        SegmentSet::from_values(values, lookback, horizon, mode).map_err(|e| match e {
            Error::SeriesTooShort { required, found, .. } => Error::SeriesTooShort {
                context: format!("{} split", self.name),
                required,
                found,
            },
            other => other,
        })
    }

    fn map_series(&self, f: impl Fn(&TimeSeries) -> Result<TimeSeries>) -> Result<Self> {
        Ok(Self {
            series: self.series.as_ref().map(f).transpose()?,
            ..self.clone()
        })
    }
}

/// Train, validation and test views of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: SplitView,
    pub val: SplitView,
    pub test: SplitView,
}

impl Splits {
    pub fn views(&self) -> [&SplitView; 3] {
        [&self.train, &self.val, &self.test]
    }

    /// Z-score every view with the training statistics.
    pub fn standardized(&self) -> Result<(Self, Standardizer)> {
        let z = Standardizer::fit(self.train.series()?);
        let apply = |v: &SplitView| v.map_series(|s| z.transform(s));
        Ok((
            Self {
                train: apply(&self.train)?,
                val: apply(&self.val)?,
                test: apply(&self.test)?,
            },
            z,
        ))
    }
}

/// Cut `series` chronologically. Validation and test views are prefixed with
/// up to `lookback` rows of the preceding data so their first window can
/// forecast from the split boundary onward.
pub fn split(series: &TimeSeries, spec: &SplitSpec, lookback: usize) -> Result<Splits> {
    let t = series.len();
    let [b1, b2, b3] = spec.boundaries(t)?;
    if b1 < lookback + 1 {
        return Err(Error::SeriesTooShort {
            context: "train split".into(),
            required: lookback + 1,
            found: b1,
        });
    }
    Ok(Splits {
        train: SplitView::new(series, "train", 0, b1, 0)?,
        val: SplitView::new(series, "val", b1, b2, lookback.min(b1))?,
        test: SplitView::new(series, "test", b2, b3, lookback.min(b2))?,
    })
}

/// Per-channel mean and (population) standard deviation from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Constant channels get a unit scale.
    pub fn fit(train: &TimeSeries) -> Self {
        let n = train.len() as f64;
        let (means, stds) = (0..train.n_channels())
            .map(|c| {
                let col = train.values().column(c);
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                let std = var.sqrt();
                (mean, if std > 0.0 { std } else { 1.0 })
            })
            .unzip();
        Self { means, stds }
    }

    pub fn transform(&self, series: &TimeSeries) -> Result<TimeSeries> {
        if series.n_channels() != self.means.len() {
            return Err(Error::shape(
                "standardizer channels",
                self.means.len(),
                series.n_channels(),
            ));
        }
        series.map_values(|c, v| (v - self.means[c]) / self.stds[c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize) -> TimeSeries {
        TimeSeries::univariate((0..t).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn sizes_without_lookback() {
        let s = split(&ramp(10), &SplitSpec::ratios(0.6, 0.2, 0.2), 0).unwrap();
        let lens: Vec<usize> = s.views().iter().map(|v| v.series().unwrap().len()).collect();
        assert_eq!(lens, [6, 2, 2]);
    }

    #[test]
    fn lookback_prefix() {
        let s = split(&ramp(100), &SplitSpec::ratios(0.7, 0.1, 0.2), 5).unwrap();
        assert_eq!((s.val.start, s.val.prefix, s.val.end), (65, 5, 80));
        assert_eq!(s.val.target_range(), 70..80);
        let seg = s.val.segments(0, 5, 2, SegmentMode::Hankel).unwrap();
        assert_eq!(seg.future()[(0, 0)], 70.0);
        assert_eq!(seg.len(), 9);
    }

    #[test]
    fn train_only() {
        let s = split(&ramp(10), &SplitSpec::ratios(1.0, 0.0, 0.0), 2).unwrap();
        assert_eq!(s.train.series().unwrap().len(), 10);
        assert!(matches!(s.val.series(), Err(Error::EmptySplit("val"))));
        assert!(matches!(
            s.test.segments(0, 2, 1, SegmentMode::Hankel),
            Err(Error::EmptySplit("test"))
        ));
    }

    #[test]
    fn bad_specs() {
        assert!(split(&ramp(10), &SplitSpec::ratios(0.5, 0.2, 0.2), 0).is_err());
        assert!(split(&ramp(10), &SplitSpec::ratios(1.2, -0.2, 0.0), 0).is_err());
        assert!(split(&ramp(10), &SplitSpec::ratios(0.2, 0.4, 0.4), 2).is_err());
        let borders = SplitSpec {
            policy: SplitPolicy::Borders([5, 4, 10]),
            ..Default::default()
        };
        assert!(split(&ramp(10), &borders, 0).is_err());
    }

    #[test]
    fn explicit_borders() {
        let spec = SplitSpec {
            policy: SplitPolicy::Borders([6, 8, 9]),
            ..Default::default()
        };
        let s = split(&ramp(12), &spec, 3).unwrap();
        assert_eq!((s.test.start, s.test.end), (5, 9));
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains(r#""borders":[6,8,9]"#));
    }

    #[test]
    fn standardize_uses_train_stats() {
        let s = split(&ramp(10), &SplitSpec::ratios(0.6, 0.2, 0.2), 0).unwrap();
        let (z, st) = s.standardized().unwrap();
        assert_eq!(st.means, vec![2.5]);
        let train = z.train.series().unwrap().channel(0).unwrap().to_vec();
        assert!(train.iter().sum::<f64>().abs() < 1e-12);
        let test0 = z.test.series().unwrap().channel(0).unwrap()[0];
        assert!((test0 - (8.0 - 2.5) / st.stds[0]).abs() < 1e-12);
    }
}
