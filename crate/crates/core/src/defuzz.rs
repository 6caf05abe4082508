//! Defuzzification: reducing an aggregated output set to a crisp value.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::membership::DiscretizedFuzzySet;

/// Absolute tolerance when collecting grid points that attain the maximum grade.
pub const MAXIMA_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DefuzzMethod {
    #[default]
    Centroid,
    Bisector,
    MeanOfMaxima,
    SmallestOfMaxima,
    LargestOfMaxima,
    /// Weighted mean of singleton consequents; not applicable to a grid.
    WeightedAverage,
}

impl DefuzzMethod {
    pub const ALL: [DefuzzMethod; 6] = [
        DefuzzMethod::Centroid,
        DefuzzMethod::Bisector,
        DefuzzMethod::MeanOfMaxima,
        DefuzzMethod::SmallestOfMaxima,
        DefuzzMethod::LargestOfMaxima,
        DefuzzMethod::WeightedAverage,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            DefuzzMethod::Centroid => "centroid",
            DefuzzMethod::Bisector => "bisector",
            DefuzzMethod::MeanOfMaxima => "mom",
            DefuzzMethod::SmallestOfMaxima => "som",
            DefuzzMethod::LargestOfMaxima => "lom",
            DefuzzMethod::WeightedAverage => "wavg",
        }
    }
}

impl fmt::Display for DefuzzMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error(
    "unknown defuzzification method `{0}` (expected centroid, bisector, mom, som, lom or wavg)"
)]
pub struct UnknownMethod(pub String);

impl FromStr for DefuzzMethod {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.keyword() == s)
            .ok_or_else(|| UnknownMethod(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DefuzzError {
    #[error("output set is empty (every grade is 0)")]
    EmptySet,
    #[error("weighted average needs singleton consequents, not a sampled set")]
    WeightedAverageOnGrid,
    #[error("no rule fired: total activation is 0")]
    ZeroActivation,
}

/// Crisp value of `set` by `method`. The result always lies within the set's universe.
pub fn defuzz(set: &DiscretizedFuzzySet, method: DefuzzMethod) -> Result<f64, DefuzzError> {
    if method == DefuzzMethod::WeightedAverage {
        return Err(DefuzzError::WeightedAverageOnGrid);
    }
    if set.is_empty() {
        return Err(DefuzzError::EmptySet);
    }
    let u = set.universe();
    let value = match method {
        DefuzzMethod::Centroid => centroid(set),
        DefuzzMethod::Bisector => bisector(set),
        DefuzzMethod::MeanOfMaxima => {
            let (sum, count) = maxima(set).fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
            sum / count as f64
        }
        DefuzzMethod::SmallestOfMaxima => maxima(set).next().expect("nonempty set has a maximum"),
        DefuzzMethod::LargestOfMaxima => maxima(set).last().expect("nonempty set has a maximum"),
        DefuzzMethod::WeightedAverage => unreachable!(),
    };
    Ok(value.clamp(u.lo(), u.hi()))
}

fn centroid(set: &DiscretizedFuzzySet) -> f64 {
    let (moment, mass) = set
        .iter()
        .fold((0.0, 0.0), |(m, w), (x, g)| (m + x * g, w + g));
    moment / mass
}

/// Each grid point carries its grade as mass centred on the point, so the
/// cumulative mass at point k is `sum(g[..k]) + g[k] / 2`. The crossing of half
/// the total is located by linear interpolation between bracketing points.
fn bisector(set: &DiscretizedFuzzySet) -> f64 {
    let g = set.grades();
    let u = set.universe();
    let half = g.iter().sum::<f64>() / 2.0;
    // Relative slack so an exact tie at a grid point survives rescaling of the grades.
    let slack = half * 1e-12;
    let mut before = 0.0;
    let mut prev_cum = f64::NAN;
    for (k, &gk) in g.iter().enumerate() {
        let cum = before + gk / 2.0;
        if cum >= half - slack {
            if k == 0 || cum <= half + slack {
                return u.point(k);
            }
            let frac = (half - prev_cum) / (cum - prev_cum);
            let (x0, x1) = (u.point(k - 1), u.point(k));
            return x0 + frac * (x1 - x0);
        }
        prev_cum = cum;
        before += gk;
    }
    u.hi()
}

fn maxima(set: &DiscretizedFuzzySet) -> impl Iterator<Item = f64> + '_ {
    let top = set.height();
    set.iter()
        .filter(move |&(_, g)| g >= top - MAXIMA_TOLERANCE)
        .map(|(x, _)| x)
}

/// Weighted mean of singleton modal values `c0` by activation `alpha`.
pub fn defuzz_weighted(pairs: &[(f64, f64)]) -> Result<f64, DefuzzError> {
    let (num, den) = pairs.iter().fold((0.0, 0.0), |(n, d), &(c0, alpha)| {
        (n + alpha * c0, d + alpha)
    });
    if den <= 0.0 {
        return Err(DefuzzError::ZeroActivation);
    }
    Ok(num / den)
}
