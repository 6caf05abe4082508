//! Fuzzy inference toolkit.
//!
//! - [`membership`]: bell, sigmoid, trapeze and singleton membership functions
//! - [`engine`]: linguistic variables, rule bases, Mamdani and Takagi-Sugeno inference
//! - [`defuzz`]: centroid, bisector, maxima family and weighted average
//! - [`fisdsl`]: the `.fis` text format (parser and canonical serializer)
//! - [`cli`]: the `fuzzkit` command-line front end

pub mod cli;
pub mod defuzz;
pub mod engine;
pub mod fisdsl;
pub mod membership;
pub mod parallel;

pub use defuzz::{defuzz, defuzz_weighted, DefuzzError, DefuzzMethod};
pub use engine::{
    compose_relation, fire_rule, fuzzify, infer_mamdani, infer_ts, Affine, AndOp, Consequent,
    EngineError, Implication, InferenceConfig, LinguisticVariable, OutputVariable, Rule, RuleBase,
    SystemKind,
};
pub use fisdsl::{parse, serialize, FisModel, ParseError, ParseErrorKind};
pub use membership::{sample, DiscretizedFuzzySet, MembershipFunction, ParamError, Universe};
pub use parallel::Execution;

/// Shortest decimal text that parses back to `x`. Very large or very small
/// magnitudes use exponent notation.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_owned();
    }
    let m = x.abs();
    if m != 0.0 && m.is_finite() && !(1e-5..1e16).contains(&m) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// `x` rounded to 12 significant digits, trailing zeros trimmed (like C's `%.12g`).
pub fn fmt_sig12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if !x.is_finite() {
        return fmt_real(x);
    }
    if x == 0.0 {
        return "0".to_owned();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
