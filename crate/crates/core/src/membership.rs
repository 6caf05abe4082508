//! Membership-function families and their sampling over a universe of discourse.
//!
//! Four parametric shapes are provided (two bells, a sigmoid and an isosceles
//! trapeze) plus a singleton used for crisp rule consequents. Every evaluator
//! returns a grade in `[0, 1]`.

use std::fmt;

use thiserror::Error;

/// Rejected membership-function parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("width a must be nonzero")]
    ZeroWidth,
    #[error("exponent b must be > 0 (got {0})")]
    NonPositiveExponent(f64),
    #[error("ramp width a must be > 0 (got {0})")]
    NonPositiveRamp(f64),
    #[error("plateau half-width b must be >= 0 (got {0})")]
    NegativePlateau(f64),
    #[error("parameter {0} must be finite")]
    NonFinite(&'static str),
    #[error("universe requires lo < hi (got [{lo}, {hi}])")]
    EmptyUniverse { lo: f64, hi: f64 },
    #[error("universe needs at least 2 grid points (got {0})")]
    TooFewPoints(usize),
}

fn finite(name: &'static str, v: f64) -> Result<(), ParamError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ParamError::NonFinite(name))
    }
}

fn check_bell(a: f64, b: f64, c: f64) -> Result<(), ParamError> {
    finite("a", a)?;
    finite("b", b)?;
    finite("c", c)?;
    if a == 0.0 {
        return Err(ParamError::ZeroWidth);
    }
    if b <= 0.0 {
        return Err(ParamError::NonPositiveExponent(b));
    }
    Ok(())
}

fn check_trapeze(a: f64, b: f64, c: f64) -> Result<(), ParamError> {
    finite("a", a)?;
    finite("b", b)?;
    finite("c", c)?;
    if a <= 0.0 {
        return Err(ParamError::NonPositiveRamp(a));
    }
    if b < 0.0 {
        return Err(ParamError::NegativePlateau(b));
    }
    Ok(())
}

#[inline]
fn bell1_unchecked(x: f64, a: f64, b: f64, c: f64) -> f64 {
    let t = (x - c) / a;
    (-(t * t).powf(b)).exp()
}

#[inline]
fn bell2_unchecked(x: f64, a: f64, b: f64, c: f64) -> f64 {
    let t = (x - c) / a;
    1.0 / (1.0 + (t * t).powf(b))
}

#[inline]
fn sigmoid_unchecked(x: f64, a: f64, c: f64) -> f64 {
    // exp overflow gives inf and the quotient saturates to 0; underflow gives 1.
    1.0 / (1.0 + (-a * (x - c)).exp())
}

#[inline]
fn trapeze_unchecked(x: f64, a: f64, b: f64, c: f64) -> f64 {
    // Same as (a + b - |x - c|) / a, written so that b = 0 reduces to 1 - |x - c| / a bit for bit.
    (1.0 + (b - (x - c).abs()) / a).clamp(0.0, 1.0)
}

/// Generalized bell `exp(-(((x - c) / a)^2)^b)`.
pub fn eval_bell1(x: f64, a: f64, b: f64, c: f64) -> Result<f64, ParamError> {
    check_bell(a, b, c)?;
    Ok(bell1_unchecked(x, a, b, c))
}

/// Generalized bell `1 / (1 + (((x - c) / a)^2)^b)`; 0.5 where `|x - c| = |a|`.
pub fn eval_bell2(x: f64, a: f64, b: f64, c: f64) -> Result<f64, ParamError> {
    check_bell(a, b, c)?;
    Ok(bell2_unchecked(x, a, b, c))
}

/// Sigmoid `1 / (1 + exp(-a (x - c)))`. Opens to the right for `a > 0`, to the left for `a < 0`.
///
/// Never fails for finite parameters; a non-finite `a` or `c` is still rejected.
pub fn eval_sigmoid(x: f64, a: f64, c: f64) -> Result<f64, ParamError> {
    finite("a", a)?;
    finite("c", c)?;
    Ok(sigmoid_unchecked(x, a, c))
}

/// Isosceles trapeze with ramp width `a`, plateau half-width `b` and center `c`.
pub fn eval_trapeze(x: f64, a: f64, b: f64, c: f64) -> Result<f64, ParamError> {
    check_trapeze(a, b, c)?;
    Ok(trapeze_unchecked(x, a, b, c))
}

pub const SIGMOID_DEFAULT_A: f64 = 1.0;
pub const SIGMOID_DEFAULT_C: f64 = 0.0;
pub const TRAPEZE_DEFAULT_A: f64 = 1.0;
pub const TRAPEZE_DEFAULT_B: f64 = 0.0;
pub const TRAPEZE_DEFAULT_C: f64 = 0.0;

/// A membership function of one of the supported families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MembershipFunction {
    Bell1 { a: f64, b: f64, c: f64 },
    Bell2 { a: f64, b: f64, c: f64 },
    Sigmoid { a: f64, c: f64 },
    Trapeze { a: f64, b: f64, c: f64 },
    Singleton { x0: f64 },
}

impl MembershipFunction {
    pub fn bell1(a: f64, b: f64, c: f64) -> Result<Self, ParamError> {
        check_bell(a, b, c)?;
        Ok(Self::Bell1 { a, b, c })
    }

    pub fn bell2(a: f64, b: f64, c: f64) -> Result<Self, ParamError> {
        check_bell(a, b, c)?;
        Ok(Self::Bell2 { a, b, c })
    }

    pub fn sigmoid(a: f64, c: f64) -> Result<Self, ParamError> {
        finite("a", a)?;
        finite("c", c)?;
        Ok(Self::Sigmoid { a, c })
    }

    pub fn trapeze(a: f64, b: f64, c: f64) -> Result<Self, ParamError> {
        check_trapeze(a, b, c)?;
        Ok(Self::Trapeze { a, b, c })
    }

    pub fn singleton(x0: f64) -> Result<Self, ParamError> {
        finite("x0", x0)?;
        Ok(Self::Singleton { x0 })
    }

    /// Builds a function from its family keyword and positional parameters,
    /// filling family defaults for omitted trailing parameters.
    pub fn from_params(family: Family, params: &[f64]) -> Result<Self, FamilyArityError> {
        let (min, max) = family.arity();
        if params.len() < min || params.len() > max {
            return Err(FamilyArityError::Arity {
                family,
                got: params.len(),
            });
        }
        let p = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
        let mf = match family {
            Family::Bell1 => Self::bell1(params[0], params[1], params[2]),
            Family::Bell2 => Self::bell2(params[0], params[1], params[2]),
            Family::Sigmoid => Self::sigmoid(p(0, SIGMOID_DEFAULT_A), p(1, SIGMOID_DEFAULT_C)),
            Family::Trapeze => Self::trapeze(
                p(0, TRAPEZE_DEFAULT_A),
                p(1, TRAPEZE_DEFAULT_B),
                p(2, TRAPEZE_DEFAULT_C),
            ),
            Family::Singleton => Self::singleton(params[0]),
        };
        mf.map_err(FamilyArityError::Param)
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Bell1 { .. } => Family::Bell1,
            Self::Bell2 { .. } => Family::Bell2,
            Self::Sigmoid { .. } => Family::Sigmoid,
            Self::Trapeze { .. } => Family::Trapeze,
            Self::Singleton { .. } => Family::Singleton,
        }
    }

    /// Positional parameters in canonical order, all stated explicitly.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Bell1 { a, b, c } | Self::Bell2 { a, b, c } | Self::Trapeze { a, b, c } => {
                vec![a, b, c]
            }
            Self::Sigmoid { a, c } => vec![a, c],
            Self::Singleton { x0 } => vec![x0],
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match *self {
            Self::Bell1 { a, b, c } | Self::Bell2 { a, b, c } => check_bell(a, b, c),
            Self::Sigmoid { a, c } => {
                finite("a", a)?;
                finite("c", c)
            }
            Self::Trapeze { a, b, c } => check_trapeze(a, b, c),
            Self::Singleton { x0 } => finite("x0", x0),
        }
    }

    /// Grade at `x`. Assumes the parameters are valid (see [`Self::validate`]).
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Bell1 { a, b, c } => bell1_unchecked(x, a, b, c),
            Self::Bell2 { a, b, c } => bell2_unchecked(x, a, b, c),
            Self::Sigmoid { a, c } => sigmoid_unchecked(x, a, c),
            Self::Trapeze { a, b, c } => trapeze_unchecked(x, a, b, c),
            Self::Singleton { x0 } => {
                if x == x0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_singleton(&self) -> Option<f64> {
        match *self {
            Self::Singleton { x0 } => Some(x0),
            _ => None,
        }
    }
}

impl fmt::Display for MembershipFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family().keyword())?;
        for (i, p) in self.params().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&crate::fmt_real(*p))?;
        }
        f.write_str(")")
    }
}

/// Family keyword as written in model files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Bell1,
    Bell2,
    Sigmoid,
    Trapeze,
    Singleton,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Bell1,
        Family::Bell2,
        Family::Sigmoid,
        Family::Trapeze,
        Family::Singleton,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Family::Bell1 => "bell1",
            Family::Bell2 => "bell2",
            Family::Sigmoid => "sigmoid",
            Family::Trapeze => "trapeze",
            Family::Singleton => "singleton",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.keyword() == s)
    }

    /// Accepted parameter counts (min, max).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Family::Bell1 | Family::Bell2 => (3, 3),
            Family::Sigmoid => (0, 2),
            Family::Trapeze => (0, 3),
            Family::Singleton => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyArityError {
    #[error("{} takes {} parameters, got {got}", .family.keyword(), arity_text(*.family))]
    Arity { family: Family, got: usize },
    #[error(transparent)]
    Param(#[from] ParamError),
}

fn arity_text(family: Family) -> String {
    match family.arity() {
        (lo, hi) if lo == hi => lo.to_string(),
        (lo, hi) => format!("{lo} to {hi}"),
    }
}

/// Bounded universe of discourse with a uniform grid of `n` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Universe {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Universe {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, ParamError> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if lo >= hi {
            return Err(ParamError::EmptyUniverse { lo, hi });
        }
        if n < 2 {
            return Err(ParamError::TooFewPoints(n));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn with_points(&self, n: usize) -> Result<Self, ParamError> {
        Self::new(self.lo, self.hi, n)
    }

    /// Grid point `k`; the last point is `hi` exactly.
    #[inline]
    pub fn point(&self, k: usize) -> f64 {
        debug_assert!(k < self.n);
        if k + 1 == self.n {
            self.hi
        } else {
            self.lo + k as f64 * self.step()
        }
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.point(k))
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    /// Index of the grid point nearest to `x`, ties toward the lower index.
    /// Values outside the universe map to the nearest endpoint.
    pub fn nearest_index(&self, x: f64) -> usize {
        if x <= self.lo {
            return 0;
        }
        if x >= self.hi {
            return self.n - 1;
        }
        let below = (((x - self.lo) / self.step()).floor() as usize).min(self.n - 2);
        // Floating division may land one cell off; walk to the bracketing pair.
        let mut k = below;
        while k > 0 && self.point(k) > x {
            k -= 1;
        }
        while k + 2 < self.n && self.point(k + 1) <= x {
            k += 1;
        }
        let d_lo = x - self.point(k);
        let d_hi = self.point(k + 1) - x;
        if d_hi < d_lo {
            k + 1
        } else {
            k
        }
    }
}

/// Membership grades on a universe grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedFuzzySet {
    universe: Universe,
    grades: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetError {
    #[error("expected {expected} grades, got {got}")]
    Length { expected: usize, got: usize },
    #[error("grade {grade} at index {index} is outside [0, 1]")]
    Grade { index: usize, grade: f64 },
}

impl DiscretizedFuzzySet {
    pub fn new(universe: Universe, grades: Vec<f64>) -> Result<Self, SetError> {
        if grades.len() != universe.len() {
            return Err(SetError::Length {
                expected: universe.len(),
                got: grades.len(),
            });
        }
        if let Some((index, &grade)) = grades
            .iter()
            .enumerate()
            .find(|(_, g)| !(0.0..=1.0).contains(*g))
        {
            return Err(SetError::Grade { index, grade });
        }
        Ok(Self { universe, grades })
    }

    pub fn zeros(universe: Universe) -> Self {
        Self {
            universe,
            grades: vec![0.0; universe.len()],
        }
    }

    pub(crate) fn from_parts_unchecked(universe: Universe, grades: Vec<f64>) -> Self {
        debug_assert_eq!(grades.len(), universe.len());
        Self { universe, grades }
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn grades(&self) -> &[f64] {
        &self.grades
    }

    pub fn into_grades(self) -> Vec<f64> {
        self.grades
    }

    pub fn height(&self) -> f64 {
        self.grades.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_empty(&self) -> bool {
        self.grades.iter().all(|&g| g == 0.0)
    }

    /// (x, grade) pairs along the grid.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.universe.points().zip(self.grades.iter().copied())
    }
}

/// Samples `mf` at each grid point. A singleton puts its unit grade on the nearest grid point.
pub fn sample(
    mf: &MembershipFunction,
    universe: &Universe,
) -> Result<DiscretizedFuzzySet, ParamError> {
    mf.validate()?;
    let grades = match *mf {
        MembershipFunction::Singleton { x0 } => {
            let mut g = vec![0.0; universe.len()];
            g[universe.nearest_index(x0)] = 1.0;
            g
        }
        _ => universe.points().map(|x| mf.eval(x)).collect(),
    };
    Ok(DiscretizedFuzzySet::from_parts_unchecked(*universe, grades))
}
