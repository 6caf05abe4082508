//! Linguistic variables, rule bases and the two inference schemes.
//!
//! A [`RuleBase`] holds input variables, an output, and a homogeneous list of
//! rules. Mamdani rules conclude a term or singleton of the output variable and
//! are evaluated by the compositional rule of inference; with crisp inputs this
//! reduces to clipping (or scaling) each consequent by its firing degree and
//! aggregating with max. [`compose_relation`] builds the explicit implication
//! relation and composes it sup-min, and is kept as an independent check of
//! [`infer_mamdani`]. Takagi-Sugeno rules conclude an affine function of the
//! inputs and combine by normalized weighted average.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::defuzz::{defuzz, defuzz_weighted, DefuzzError, DefuzzMethod};
use crate::membership::{sample, DiscretizedFuzzySet, MembershipFunction, ParamError, Universe};
use crate::parallel::{map_ordered, Execution};

/// Default output grid size for Mamdani inference.
pub const DEFAULT_RESOLUTION: usize = 201;

/// Largest relation (entries per rule) [`compose_relation`] will materialize.
pub const DEFAULT_RELATION_BUDGET: usize = 4_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("variable `{0}` has no terms")]
    NoTerms(String),
    #[error("variable `{var}` defines term `{term}` twice")]
    DuplicateTerm { var: String, term: String },
    #[error("variable `{0}` is defined twice")]
    DuplicateVariable(String),
    #[error("rule has no antecedents")]
    EmptyAntecedent,
    #[error("variable `{0}` appears more than once in a rule antecedent")]
    RepeatedAntecedent(String),
    #[error("coefficient for `{0}` given more than once")]
    RepeatedCoefficient(String),
    #[error("rule base has no rules")]
    NoRules,
    #[error("rule base mixes Mamdani and Takagi-Sugeno consequents")]
    MixedConsequents,
    #[error("unknown input variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{var}` has no term `{term}`")]
    UnknownTerm { var: String, term: String },
    #[error("Mamdani rule bases need an output variable with terms")]
    MamdaniNeedsTerms,
    #[error("Takagi-Sugeno outputs carry no terms")]
    SugenoHasTerms,
    #[error("singleton consequent {c0} lies outside the output range [{lo}, {hi}]")]
    SingletonOutOfRange { c0: f64, lo: f64, hi: f64 },
    #[error("coefficient must be finite")]
    NonFiniteCoefficient,
    #[error("resolution must be at least 2 (got {0})")]
    Resolution(usize),
    #[error("weighted-average defuzzification needs singleton consequents in every rule")]
    WeightedAverageNeedsSingletons,
    #[error("{method} defuzzification does not apply to Takagi-Sugeno systems")]
    DefuzzOnSugeno { method: DefuzzMethod },
    #[error("expected {expected} input values, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("input {var} = {x} lies outside its universe [{lo}, {hi}]")]
    OutOfUniverse {
        var: String,
        x: f64,
        lo: f64,
        hi: f64,
    },
    #[error("no rule fired: every firing degree is 0")]
    ZeroActivation,
    #[error("operation requires a {expected} rule base")]
    WrongKind { expected: SystemKind },
    #[error("relation of {entries} entries exceeds the budget of {budget}")]
    RelationTooLarge { entries: usize, budget: usize },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Defuzz(#[from] DefuzzError),
}

/// Named variable with a universe of discourse and ordered terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinguisticVariable {
    name: String,
    universe: Universe,
    terms: IndexMap<String, MembershipFunction>,
}

impl LinguisticVariable {
    pub fn new<N, T>(name: N, universe: Universe, terms: T) -> Result<Self, EngineError>
    where
        N: Into<String>,
        T: IntoIterator<Item = (String, MembershipFunction)>,
    {
        let name = name.into();
        let mut map = IndexMap::new();
        for (term, mf) in terms {
            mf.validate()?;
            if map.contains_key(&term) {
                return Err(EngineError::DuplicateTerm { var: name, term });
            }
            map.insert(term, mf);
        }
        if map.is_empty() {
            return Err(EngineError::NoTerms(name));
        }
        Ok(Self {
            name,
            universe,
            terms: map,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn terms(&self) -> impl ExactSizeIterator<Item = (&str, &MembershipFunction)> {
        self.terms.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn term(&self, name: &str) -> Option<&MembershipFunction> {
        self.terms.get(name)
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.get_index_of(name)
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    fn check_range(&self, x: f64) -> Result<(), EngineError> {
        if self.universe.contains(x) {
            Ok(())
        } else {
            Err(EngineError::OutOfUniverse {
                var: self.name.clone(),
                x,
                lo: self.universe.lo(),
                hi: self.universe.hi(),
            })
        }
    }

    fn grades_at(&self, x: f64) -> Vec<f64> {
        self.terms.values().map(|mf| mf.eval(x)).collect()
    }
}

/// Grade of every term of `variable` at the crisp value `x`.
pub fn fuzzify(variable: &LinguisticVariable, x: f64) -> Result<Vec<(&str, f64)>, EngineError> {
    variable.check_range(x)?;
    Ok(variable
        .terms()
        .map(|(name, mf)| (name, mf.eval(x)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AndOp {
    #[default]
    Min,
    Product,
}

impl AndOp {
    #[inline]
    pub fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            AndOp::Min => x.min(y),
            AndOp::Product => x * y,
        }
    }

    pub fn fold(self, grades: impl IntoIterator<Item = f64>) -> f64 {
        grades.into_iter().fold(1.0, |acc, g| self.apply(acc, g))
    }

    pub fn keyword(self) -> &'static str {
        match self {
            AndOp::Min => "min",
            AndOp::Product => "product",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        [AndOp::Min, AndOp::Product]
            .into_iter()
            .find(|o| o.keyword() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Implication {
    /// min(alpha, grade)
    #[default]
    Clip,
    /// alpha * grade
    Scale,
}

impl Implication {
    #[inline]
    pub fn apply(self, alpha: f64, grade: f64) -> f64 {
        match self {
            Implication::Clip => alpha.min(grade),
            Implication::Scale => alpha * grade,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Implication::Clip => "clip",
            Implication::Scale => "scale",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        [Implication::Clip, Implication::Scale]
            .into_iter()
            .find(|o| o.keyword() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Aggregation {
    #[default]
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceConfig {
    pub and_op: AndOp,
    pub implication: Implication,
    pub aggregation: Aggregation,
    pub defuzz: DefuzzMethod,
    pub resolution: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            and_op: AndOp::Min,
            implication: Implication::Clip,
            aggregation: Aggregation::Max,
            defuzz: DefuzzMethod::Centroid,
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

/// `constant + sum(coefficient * input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub coefficients: Vec<(String, f64)>,
}

impl Affine {
    pub fn constant(d: f64) -> Self {
        Self {
            constant: d,
            coefficients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Consequent {
    /// Output term of a Mamdani rule.
    Term(String),
    /// Mamdani singleton with modal value `c0`.
    Singleton(f64),
    /// Takagi-Sugeno affine consequent.
    TakagiSugeno(Affine),
}

impl Consequent {
    pub fn is_mamdani(&self) -> bool {
        !matches!(self, Consequent::TakagiSugeno(_))
    }
}

/// Conjunction of `(variable, term)` antecedents with one consequent. Unweighted.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    antecedents: Vec<(String, String)>,
    consequent: Consequent,
}

impl Rule {
    pub fn new<I, V, T>(antecedents: I, consequent: Consequent) -> Result<Self, EngineError>
    where
        I: IntoIterator<Item = (V, T)>,
        V: Into<String>,
        T: Into<String>,
    {
        let antecedents: Vec<(String, String)> = antecedents
            .into_iter()
            .map(|(v, t)| (v.into(), t.into()))
            .collect();
        if antecedents.is_empty() {
            return Err(EngineError::EmptyAntecedent);
        }
        for (i, (v, _)) in antecedents.iter().enumerate() {
            if antecedents[..i].iter().any(|(w, _)| w == v) {
                return Err(EngineError::RepeatedAntecedent(v.clone()));
            }
        }
        Ok(Self {
            antecedents,
            consequent,
        })
    }

    pub fn antecedents(&self) -> &[(String, String)] {
        &self.antecedents
    }

    pub fn consequent(&self) -> &Consequent {
        &self.consequent
    }
}

/// Term grades keyed by variable and term name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputGrades(HashMap<String, HashMap<String, f64>>);

impl InputGrades {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, var: impl Into<String>, term: impl Into<String>, grade: f64) {
        self.0
            .entry(var.into())
            .or_default()
            .insert(term.into(), grade);
    }

    pub fn get(&self, var: &str, term: &str) -> Option<f64> {
        self.0.get(var)?.get(term).copied()
    }
}

/// Firing degree of `rule`: `and_op` folded over its antecedent grades.
pub fn fire_rule(rule: &Rule, grades: &InputGrades, and_op: AndOp) -> Result<f64, EngineError> {
    let mut alpha = 1.0;
    for (var, term) in &rule.antecedents {
        let g = grades
            .get(var, term)
            .ok_or_else(|| EngineError::UnknownTerm {
                var: var.clone(),
                term: term.clone(),
            })?;
        alpha = and_op.apply(alpha, g);
    }
    Ok(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemKind {
    Mamdani,
    Sugeno,
}

impl SystemKind {
    pub fn keyword(self) -> &'static str {
        match self {
            SystemKind::Mamdani => "mamdani",
            SystemKind::Sugeno => "sugeno",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        [SystemKind::Mamdani, SystemKind::Sugeno]
            .into_iter()
            .find(|k| k.keyword() == s)
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Output of a rule base: a linguistic variable for Mamdani systems, a named
/// range for Takagi-Sugeno systems.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputVariable {
    Fuzzy(LinguisticVariable),
    Crisp { name: String, lo: f64, hi: f64 },
}

impl OutputVariable {
    pub fn name(&self) -> &str {
        match self {
            OutputVariable::Fuzzy(v) => v.name(),
            OutputVariable::Crisp { name, .. } => name,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            OutputVariable::Fuzzy(v) => (v.universe().lo(), v.universe().hi()),
            OutputVariable::Crisp { lo, hi, .. } => (*lo, *hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Compiled {
    Mamdani {
        grades: Vec<f64>,
        singleton: Option<f64>,
    },
    Affine {
        constant: f64,
        coefficients: Vec<(usize, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct CompiledRule {
    // (input index, term index), sorted by input index
    antecedents: Vec<(usize, usize)>,
    consequent: Compiled,
}

/// Validated rule collection with its inference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBase {
    inputs: Vec<LinguisticVariable>,
    output: OutputVariable,
    rules: Vec<Rule>,
    config: InferenceConfig,
    kind: SystemKind,
    output_grid: Universe,
    compiled: Vec<CompiledRule>,
}

impl RuleBase {
    pub fn new(
        inputs: Vec<LinguisticVariable>,
        output: OutputVariable,
        rules: Vec<Rule>,
        config: InferenceConfig,
    ) -> Result<Self, EngineError> {
        if config.resolution < 2 {
            return Err(EngineError::Resolution(config.resolution));
        }
        for (i, v) in inputs.iter().enumerate() {
            if inputs[..i].iter().any(|w| w.name() == v.name()) {
                return Err(EngineError::DuplicateVariable(v.name().to_owned()));
            }
        }
        if inputs.iter().any(|v| v.name() == output.name()) {
            return Err(EngineError::DuplicateVariable(output.name().to_owned()));
        }
        let first = rules.first().ok_or(EngineError::NoRules)?;
        let kind = if first.consequent.is_mamdani() {
            SystemKind::Mamdani
        } else {
            SystemKind::Sugeno
        };
        if rules
            .iter()
            .any(|r| r.consequent.is_mamdani() != (kind == SystemKind::Mamdani))
        {
            return Err(EngineError::MixedConsequents);
        }
        let (lo, hi) = output.range();
        let output_grid = Universe::new(lo, hi, config.resolution)?;
        let out_var = match (&output, kind) {
            (OutputVariable::Fuzzy(v), SystemKind::Mamdani) => Some(v),
            (OutputVariable::Crisp { .. }, SystemKind::Mamdani) => {
                return Err(EngineError::MamdaniNeedsTerms)
            }
            (OutputVariable::Fuzzy(_), SystemKind::Sugeno) => {
                return Err(EngineError::SugenoHasTerms)
            }
            (OutputVariable::Crisp { .. }, SystemKind::Sugeno) => None,
        };
        let term_sets = match out_var {
            Some(v) => v
                .terms()
                .map(|(_, mf)| sample(mf, &output_grid).map(DiscretizedFuzzySet::into_grades))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };

        let input_index = |name: &str| {
            inputs
                .iter()
                .position(|v| v.name() == name)
                .ok_or_else(|| EngineError::UnknownVariable(name.to_owned()))
        };

        let mut compiled = Vec::with_capacity(rules.len());
        for rule in &rules {
            let mut antecedents = Vec::with_capacity(rule.antecedents.len());
            for (var, term) in &rule.antecedents {
                let vi = input_index(var)?;
                let ti = inputs[vi]
                    .term_index(term)
                    .ok_or_else(|| EngineError::UnknownTerm {
                        var: var.clone(),
                        term: term.clone(),
                    })?;
                antecedents.push((vi, ti));
            }
            antecedents.sort_unstable();
            let consequent = match &rule.consequent {
                Consequent::Term(term) => {
                    let v = out_var.expect("mamdani has a fuzzy output");
                    let ti = v.term_index(term).ok_or_else(|| EngineError::UnknownTerm {
                        var: v.name().to_owned(),
                        term: term.clone(),
                    })?;
                    let singleton = v.term(term).and_then(MembershipFunction::as_singleton);
                    if let Some(c0) = singleton {
                        check_singleton(c0, lo, hi)?;
                    }
                    Compiled::Mamdani {
                        grades: term_sets[ti].clone(),
                        singleton,
                    }
                }
                Consequent::Singleton(c0) => {
                    let mf = MembershipFunction::singleton(*c0)?;
                    check_singleton(*c0, lo, hi)?;
                    Compiled::Mamdani {
                        grades: sample(&mf, &output_grid)?.into_grades(),
                        singleton: Some(*c0),
                    }
                }
                Consequent::TakagiSugeno(affine) => {
                    if !affine.constant.is_finite() {
                        return Err(EngineError::NonFiniteCoefficient);
                    }
                    let mut coefficients: Vec<(usize, f64)> = Vec::new();
                    for (var, coeff) in &affine.coefficients {
                        if !coeff.is_finite() {
                            return Err(EngineError::NonFiniteCoefficient);
                        }
                        let vi = input_index(var)?;
                        if coefficients.iter().any(|&(w, _)| w == vi) {
                            return Err(EngineError::RepeatedCoefficient(var.clone()));
                        }
                        coefficients.push((vi, *coeff));
                    }
                    coefficients.sort_unstable_by_key(|&(vi, _)| vi);
                    Compiled::Affine {
                        constant: affine.constant,
                        coefficients,
                    }
                }
            };
            compiled.push(CompiledRule {
                antecedents,
                consequent,
            });
        }

        let rb = Self {
            inputs,
            output,
            rules,
            config,
            kind,
            output_grid,
            compiled,
        };
        if kind == SystemKind::Mamdani
            && config.defuzz == DefuzzMethod::WeightedAverage
            && !rb.is_singleton_system()
        {
            return Err(EngineError::WeightedAverageNeedsSingletons);
        }
        Ok(rb)
    }

    pub fn inputs(&self) -> &[LinguisticVariable] {
        &self.inputs
    }

    pub fn output(&self) -> &OutputVariable {
        &self.output
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn config(&self) -> &InferenceConfig {
        &self.config
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    /// Output grid used for Mamdani inference (`config.resolution` points).
    pub fn output_grid(&self) -> &Universe {
        &self.output_grid
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|v| v.name() == name)
    }

    /// True when every rule concludes a singleton (directly or via a singleton term).
    pub fn is_singleton_system(&self) -> bool {
        self.compiled.iter().all(|r| {
            matches!(
                r.consequent,
                Compiled::Mamdani {
                    singleton: Some(_),
                    ..
                }
            )
        })
    }

    /// Same rule base with a different configuration.
    pub fn with_config(&self, config: InferenceConfig) -> Result<Self, EngineError> {
        Self::new(
            self.inputs.clone(),
            self.output.clone(),
            self.rules.clone(),
            config,
        )
    }

    /// Clamps each crisp input into its variable's universe.
    pub fn clamp_inputs(&self, crisp: &[f64]) -> Vec<f64> {
        crisp
            .iter()
            .zip(&self.inputs)
            .map(|(&x, v)| x.clamp(v.universe().lo(), v.universe().hi()))
            .collect()
    }

    fn check_inputs(&self, crisp: &[f64]) -> Result<(), EngineError> {
        if crisp.len() != self.inputs.len() {
            return Err(EngineError::InputCount {
                expected: self.inputs.len(),
                got: crisp.len(),
            });
        }
        for (v, &x) in self.inputs.iter().zip(crisp) {
            v.check_range(x)?;
        }
        Ok(())
    }

    fn expect_kind(&self, expected: SystemKind) -> Result<(), EngineError> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(EngineError::WrongKind { expected })
        }
    }

    /// Grades of every input term, indexed `[input][term]`.
    pub fn term_grades(&self, crisp: &[f64]) -> Result<Vec<Vec<f64>>, EngineError> {
        self.check_inputs(crisp)?;
        Ok(self
            .inputs
            .iter()
            .zip(crisp)
            .map(|(v, &x)| v.grades_at(x))
            .collect())
    }

    /// Grades keyed by name, for use with [`fire_rule`].
    pub fn input_grades(&self, crisp: &[f64]) -> Result<InputGrades, EngineError> {
        self.check_inputs(crisp)?;
        let mut out = InputGrades::new();
        for (v, &x) in self.inputs.iter().zip(crisp) {
            for (term, g) in fuzzify(v, x)? {
                out.insert(v.name(), term, g);
            }
        }
        Ok(out)
    }

    /// Firing degree of each rule, in rule order.
    pub fn firing_degrees(&self, crisp: &[f64]) -> Result<Vec<f64>, EngineError> {
        let grades = self.term_grades(crisp)?;
        let and_op = self.config.and_op;
        Ok(self
            .compiled
            .iter()
            .map(|r| and_op.fold(r.antecedents.iter().map(|&(vi, ti)| grades[vi][ti])))
            .collect())
    }

    /// Per-rule implied output sets before aggregation.
    pub fn rule_outputs(&self, crisp: &[f64]) -> Result<Vec<DiscretizedFuzzySet>, EngineError> {
        self.expect_kind(SystemKind::Mamdani)?;
        let alphas = self.firing_degrees(crisp)?;
        let imp = self.config.implication;
        Ok(self
            .compiled
            .iter()
            .zip(alphas)
            .map(|(r, alpha)| {
                let Compiled::Mamdani { grades, .. } = &r.consequent else {
                    unreachable!("kind checked")
                };
                let implied = grades.iter().map(|&g| imp.apply(alpha, g)).collect();
                DiscretizedFuzzySet::from_parts_unchecked(self.output_grid, implied)
            })
            .collect())
    }

    /// Aggregated Mamdani output set.
    pub fn infer_mamdani(&self, crisp: &[f64]) -> Result<DiscretizedFuzzySet, EngineError> {
        self.expect_kind(SystemKind::Mamdani)?;
        let alphas = self.firing_degrees(crisp)?;
        if alphas.iter().all(|&a| a == 0.0) {
            return Err(EngineError::ZeroActivation);
        }
        let imp = self.config.implication;
        let mut agg = vec![0.0f64; self.output_grid.len()];
        for (r, &alpha) in self.compiled.iter().zip(&alphas) {
            if alpha == 0.0 {
                continue;
            }
            let Compiled::Mamdani { grades, .. } = &r.consequent else {
                unreachable!("kind checked")
            };
            for (slot, &g) in agg.iter_mut().zip(grades) {
                *slot = slot.max(imp.apply(alpha, g));
            }
        }
        Ok(DiscretizedFuzzySet::from_parts_unchecked(
            self.output_grid,
            agg,
        ))
    }

    /// `(c0, alpha)` for every rule of a singleton-consequent Mamdani system.
    pub fn singleton_activations(&self, crisp: &[f64]) -> Result<Vec<(f64, f64)>, EngineError> {
        self.expect_kind(SystemKind::Mamdani)?;
        if !self.is_singleton_system() {
            return Err(EngineError::WeightedAverageNeedsSingletons);
        }
        let alphas = self.firing_degrees(crisp)?;
        Ok(self
            .compiled
            .iter()
            .zip(alphas)
            .map(|(r, alpha)| match r.consequent {
                Compiled::Mamdani {
                    singleton: Some(c0),
                    ..
                } => (c0, alpha),
                _ => unreachable!("singleton system checked"),
            })
            .collect())
    }

    /// Normalized weighted average of the affine consequents.
    pub fn infer_ts(&self, crisp: &[f64]) -> Result<f64, EngineError> {
        self.expect_kind(SystemKind::Sugeno)?;
        let alphas = self.firing_degrees(crisp)?;
        let (num, den) = self
            .compiled
            .iter()
            .zip(alphas)
            .fold((0.0, 0.0), |(n, d), (r, alpha)| {
                let Compiled::Affine {
                    constant,
                    coefficients,
                } = &r.consequent
                else {
                    unreachable!("kind checked")
                };
                let f = coefficients
                    .iter()
                    .fold(*constant, |acc, &(vi, k)| acc + k * crisp[vi]);
                (n + alpha * f, d + alpha)
            });
        if den <= 0.0 {
            return Err(EngineError::ZeroActivation);
        }
        Ok(num / den)
    }

    /// Crisp output using the configured defuzzification method.
    pub fn evaluate(&self, crisp: &[f64]) -> Result<f64, EngineError> {
        self.evaluate_with(crisp, self.config.defuzz)
    }

    /// Crisp output with `method` overriding the configured one (Mamdani only;
    /// Takagi-Sugeno systems ignore the configured method).
    pub fn evaluate_with(&self, crisp: &[f64], method: DefuzzMethod) -> Result<f64, EngineError> {
        match self.kind {
            SystemKind::Sugeno => self.infer_ts(crisp),
            SystemKind::Mamdani if method == DefuzzMethod::WeightedAverage => {
                let pairs = self.singleton_activations(crisp)?;
                defuzz_weighted(&pairs).map_err(|e| match e {
                    DefuzzError::ZeroActivation => EngineError::ZeroActivation,
                    other => other.into(),
                })
            }
            SystemKind::Mamdani => Ok(defuzz(&self.infer_mamdani(crisp)?, method)?),
        }
    }

    /// Evaluates many input points, preserving order.
    pub fn evaluate_batch(
        &self,
        points: &[Vec<f64>],
        exec: Execution,
    ) -> Vec<Result<f64, EngineError>> {
        map_ordered(points, exec, |p| self.evaluate(p))
    }
}

fn check_singleton(c0: f64, lo: f64, hi: f64) -> Result<(), EngineError> {
    if (lo..=hi).contains(&c0) {
        Ok(())
    } else {
        Err(EngineError::SingletonOutOfRange { c0, lo, hi })
    }
}

pub fn infer_mamdani(rb: &RuleBase, crisp: &[f64]) -> Result<DiscretizedFuzzySet, EngineError> {
    rb.infer_mamdani(crisp)
}

pub fn infer_ts(rb: &RuleBase, crisp: &[f64]) -> Result<f64, EngineError> {
    rb.infer_ts(crisp)
}

/// Fuzzy input on an explicit, strictly increasing grid of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridInput {
    pub points: Vec<f64>,
    pub grades: Vec<f64>,
}

impl GridInput {
    /// One-hot set at `x` on the variable's grid, with `x` inserted as an extra
    /// point when it is not already a grid point.
    pub fn singleton(universe: &Universe, x: f64) -> Self {
        let mut points: Vec<f64> = universe.points().collect();
        let at = match points.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i,
            Err(i) => {
                points.insert(i, x);
                i
            }
        };
        let mut grades = vec![0.0; points.len()];
        grades[at] = 1.0;
        Self { points, grades }
    }
}

/// Sup-min composition of singleton-fuzzified crisp inputs with each rule's
/// explicit implication relation, aggregated across rules by max.
pub fn compose_relation(rb: &RuleBase, crisp: &[f64]) -> Result<DiscretizedFuzzySet, EngineError> {
    compose_relation_with_budget(rb, crisp, DEFAULT_RELATION_BUDGET)
}

pub fn compose_relation_with_budget(
    rb: &RuleBase,
    crisp: &[f64],
    budget: usize,
) -> Result<DiscretizedFuzzySet, EngineError> {
    rb.expect_kind(SystemKind::Mamdani)?;
    rb.check_inputs(crisp)?;
    let inputs: Vec<GridInput> = rb
        .inputs
        .iter()
        .zip(crisp)
        .map(|(v, &x)| GridInput::singleton(v.universe(), x))
        .collect();
    compose_fuzzy_inputs(rb, &inputs, budget)
}

/// Sup-min composition for arbitrary fuzzy inputs, one [`GridInput`] per input
/// variable. Each rule relation covers the product of all input grids and the
/// output grid: `R(x1..xm, y) = implication(and(A_k(x_k)), B(y))`.
pub fn compose_fuzzy_inputs(
    rb: &RuleBase,
    inputs: &[GridInput],
    budget: usize,
) -> Result<DiscretizedFuzzySet, EngineError> {
    rb.expect_kind(SystemKind::Mamdani)?;
    if inputs.len() != rb.inputs.len() {
        return Err(EngineError::InputCount {
            expected: rb.inputs.len(),
            got: inputs.len(),
        });
    }
    let ny = rb.output_grid.len();
    let dims: Vec<usize> = inputs.iter().map(|g| g.points.len()).collect();
    let cells: usize = dims.iter().product();
    let entries = cells.saturating_mul(ny);
    if entries > budget {
        return Err(EngineError::RelationTooLarge { entries, budget });
    }

    // Joint input grade per cell of the product grid (cartesian product via min).
    let mut joint = vec![1.0f64; cells];
    for_each_cell(&dims, |cell, idx| {
        joint[cell] = idx
            .iter()
            .zip(inputs)
            .fold(1.0, |acc, (&i, g)| acc.min(g.grades[i]));
    });

    let and_op = rb.config.and_op;
    let imp = rb.config.implication;
    let mut out = vec![0.0f64; ny];
    let mut relation = vec![0.0f64; entries];
    for (rule, compiled) in rb.rules.iter().zip(&rb.compiled) {
        let Compiled::Mamdani { grades: b, .. } = &compiled.consequent else {
            unreachable!("kind checked")
        };
        let mfs: Vec<(usize, &MembershipFunction)> = rule
            .antecedents
            .iter()
            .map(|(var, term)| {
                let vi = rb.input_index(var).expect("resolved at construction");
                (
                    vi,
                    rb.inputs[vi].term(term).expect("resolved at construction"),
                )
            })
            .collect();
        for_each_cell(&dims, |cell, idx| {
            let mut ante: Vec<(usize, f64)> = mfs
                .iter()
                .map(|&(vi, mf)| (vi, mf.eval(inputs[vi].points[idx[vi]])))
                .collect();
            ante.sort_unstable_by_key(|&(vi, _)| vi);
            let degree = and_op.fold(ante.into_iter().map(|(_, g)| g));
            let row = &mut relation[cell * ny..(cell + 1) * ny];
            for (r, &by) in row.iter_mut().zip(b) {
                *r = imp.apply(degree, by);
            }
        });
        for (cell, &a) in joint.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let row = &relation[cell * ny..(cell + 1) * ny];
            for (o, &r) in out.iter_mut().zip(row) {
                *o = o.max(a.min(r));
            }
        }
    }
    Ok(DiscretizedFuzzySet::from_parts_unchecked(
        rb.output_grid,
        out,
    ))
}

fn for_each_cell(dims: &[usize], mut f: impl FnMut(usize, &[usize])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    let mut cell = 0usize;
    loop {
        f(cell, &idx);
        cell += 1;
        let mut k = dims.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(a: f64, c: f64) -> MembershipFunction {
        MembershipFunction::Trapeze { a, b: 0.0, c }
    }

    fn var(
        name: &str,
        lo: f64,
        hi: f64,
        n: usize,
        terms: &[(&str, MembershipFunction)],
    ) -> LinguisticVariable {
        LinguisticVariable::new(
            name,
            Universe::new(lo, hi, n).unwrap(),
            terms.iter().map(|(t, mf)| (t.to_string(), *mf)),
        )
        .unwrap()
    }

    #[test]
    fn fuzzify_examples() {
        let v = var(
            "e",
            0.0,
            10.0,
            11,
            &[("low", tri(5.0, 0.0)), ("high", tri(5.0, 10.0))],
        );
        assert_eq!(fuzzify(&v, 0.0).unwrap(), vec![("low", 1.0), ("high", 0.0)]);
        assert_eq!(fuzzify(&v, 5.0).unwrap(), vec![("low", 0.0), ("high", 0.0)]);
        let s = var(
            "s",
            0.0,
            10.0,
            11,
            &[("term", MembershipFunction::Sigmoid { a: 1.0, c: 5.0 })],
        );
        assert_eq!(fuzzify(&s, 5.0).unwrap(), vec![("term", 0.5)]);
        assert!(matches!(
            fuzzify(&v, 10.5),
            Err(EngineError::OutOfUniverse { .. })
        ));
        assert!(matches!(
            fuzzify(&v, f64::NAN),
            Err(EngineError::OutOfUniverse { .. })
        ));
    }

    #[test]
    fn variable_invariants() {
        let u = Universe::new(0.0, 1.0, 3).unwrap();
        assert_eq!(
            LinguisticVariable::new("x", u, Vec::new()),
            Err(EngineError::NoTerms("x".into()))
        );
        let dup = vec![
            ("a".to_string(), tri(1.0, 0.0)),
            ("a".to_string(), tri(1.0, 1.0)),
        ];
        assert!(matches!(
            LinguisticVariable::new("x", u, dup),
            Err(EngineError::DuplicateTerm { .. })
        ));
    }

    #[test]
    fn fire_rule_examples() {
        let mut g = InputGrades::new();
        g.insert("x1", "A", 0.7);
        g.insert("x2", "B", 0.4);
        let r = Rule::new([("x1", "A"), ("x2", "B")], Consequent::Singleton(0.0)).unwrap();
        assert_eq!(fire_rule(&r, &g, AndOp::Min).unwrap(), 0.4);
        assert!((fire_rule(&r, &g, AndOp::Product).unwrap() - 0.28).abs() < 1e-15);
        let one = Rule::new([("x1", "A")], Consequent::Singleton(0.0)).unwrap();
        assert_eq!(fire_rule(&one, &g, AndOp::Min).unwrap(), 0.7);
        assert_eq!(fire_rule(&one, &g, AndOp::Product).unwrap(), 0.7);
        let missing = Rule::new([("x3", "A")], Consequent::Singleton(0.0)).unwrap();
        assert!(matches!(
            fire_rule(&missing, &g, AndOp::Min),
            Err(EngineError::UnknownTerm { .. })
        ));
    }

    #[test]
    fn rule_invariants() {
        assert_eq!(
            Rule::new(Vec::<(&str, &str)>::new(), Consequent::Singleton(0.0)),
            Err(EngineError::EmptyAntecedent)
        );
        assert_eq!(
            Rule::new([("x", "a"), ("x", "b")], Consequent::Singleton(0.0)),
            Err(EngineError::RepeatedAntecedent("x".into()))
        );
    }

    fn mamdani_two_rules() -> RuleBase {
        let x = var(
            "x",
            0.0,
            10.0,
            11,
            &[("low", tri(10.0, 0.0)), ("high", tri(10.0, 10.0))],
        );
        let y = var(
            "y",
            0.0,
            10.0,
            11,
            &[("small", tri(4.0, 2.0)), ("big", tri(4.0, 8.0))],
        );
        let rules = vec![
            Rule::new([("x", "low")], Consequent::Term("small".into())).unwrap(),
            Rule::new([("x", "high")], Consequent::Term("big".into())).unwrap(),
        ];
        let config = InferenceConfig {
            resolution: 11,
            ..Default::default()
        };
        RuleBase::new(vec![x], OutputVariable::Fuzzy(y), rules, config).unwrap()
    }

    #[test]
    fn clipping_at_one_returns_consequent() {
        let rb = mamdani_two_rules();
        let out = rb.infer_mamdani(&[0.0]).unwrap();
        let small = sample(&tri(4.0, 2.0), rb.output_grid()).unwrap();
        assert_eq!(out.grades(), small.grades());
    }

    #[test]
    fn nested_clips_of_one_term() {
        let x = var(
            "x",
            0.0,
            1.0,
            11,
            &[("p", tri(1.0, 0.0)), ("q", tri(1.0, 1.0))],
        );
        let y = var("y", 0.0, 10.0, 11, &[("t", tri(5.0, 5.0))]);
        let rules = vec![
            Rule::new([("x", "p")], Consequent::Term("t".into())).unwrap(),
            Rule::new([("x", "q")], Consequent::Term("t".into())).unwrap(),
        ];
        let config = InferenceConfig {
            resolution: 11,
            ..Default::default()
        };
        let rb = RuleBase::new(vec![x], OutputVariable::Fuzzy(y), rules, config).unwrap();
        let alphas = rb.firing_degrees(&[0.7]).unwrap();
        assert!((alphas[0] - 0.3).abs() < 1e-12 && (alphas[1] - 0.7).abs() < 1e-12);
        let out = rb.infer_mamdani(&[0.7]).unwrap();
        let t = sample(&tri(5.0, 5.0), rb.output_grid()).unwrap();
        for (o, g) in out.grades().iter().zip(t.grades()) {
            assert_eq!(*o, g.min(alphas[1]));
        }
    }

    #[test]
    fn zero_activation_is_an_error() {
        let x = var("x", 0.0, 10.0, 11, &[("mid", tri(1.0, 5.0))]);
        let y = var("y", 0.0, 1.0, 5, &[("t", tri(1.0, 0.5))]);
        let rules = vec![Rule::new([("x", "mid")], Consequent::Term("t".into())).unwrap()];
        let rb = RuleBase::new(
            vec![x.clone()],
            OutputVariable::Fuzzy(y),
            rules,
            Default::default(),
        )
        .unwrap();
        assert_eq!(rb.infer_mamdani(&[0.0]), Err(EngineError::ZeroActivation));
        assert_eq!(rb.evaluate(&[0.0]), Err(EngineError::ZeroActivation));

        let ts = vec![Rule::new(
            [("x", "mid")],
            Consequent::TakagiSugeno(Affine::constant(1.0)),
        )
        .unwrap()];
        let out = OutputVariable::Crisp {
            name: "u".into(),
            lo: 0.0,
            hi: 1.0,
        };
        let rb = RuleBase::new(vec![x], out, ts, Default::default()).unwrap();
        assert_eq!(rb.infer_ts(&[0.0]), Err(EngineError::ZeroActivation));
    }

    #[test]
    fn ts_examples() {
        let x = var(
            "x1",
            0.0,
            10.0,
            11,
            &[("any", MembershipFunction::Sigmoid { a: 0.0, c: 0.0 })],
        );
        let out = OutputVariable::Crisp {
            name: "u".into(),
            lo: 0.0,
            hi: 10.0,
        };
        let f = Affine {
            constant: 1.0,
            coefficients: vec![("x1".into(), 2.0)],
        };
        let rules = vec![Rule::new([("x1", "any")], Consequent::TakagiSugeno(f)).unwrap()];
        let rb = RuleBase::new(vec![x], out.clone(), rules, Default::default()).unwrap();
        assert_eq!(rb.infer_ts(&[3.0]).unwrap(), 7.0);

        let x = var(
            "x",
            0.0,
            1.0,
            11,
            &[("p", tri(1.0, 0.0)), ("q", tri(1.0, 1.0))],
        );
        let rules = vec![
            Rule::new(
                [("x", "p")],
                Consequent::TakagiSugeno(Affine::constant(0.0)),
            )
            .unwrap(),
            Rule::new(
                [("x", "q")],
                Consequent::TakagiSugeno(Affine::constant(10.0)),
            )
            .unwrap(),
        ];
        let rb = RuleBase::new(vec![x], out, rules, Default::default()).unwrap();
        assert_eq!(rb.firing_degrees(&[0.75]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(rb.infer_ts(&[0.75]).unwrap(), 7.5);
    }

    #[test]
    fn rule_base_rejects_inconsistencies() {
        let x = var("x", 0.0, 1.0, 3, &[("p", tri(1.0, 0.0))]);
        let y = var("y", 0.0, 1.0, 3, &[("t", tri(1.0, 0.0))]);
        let out = OutputVariable::Fuzzy(y);
        let mk = |rules: Vec<Rule>| {
            RuleBase::new(vec![x.clone()], out.clone(), rules, Default::default())
        };
        assert_eq!(mk(vec![]), Err(EngineError::NoRules));
        let mixed = vec![
            Rule::new([("x", "p")], Consequent::Term("t".into())).unwrap(),
            Rule::new(
                [("x", "p")],
                Consequent::TakagiSugeno(Affine::constant(0.0)),
            )
            .unwrap(),
        ];
        assert_eq!(mk(mixed), Err(EngineError::MixedConsequents));
        let unknown = vec![Rule::new([("z", "p")], Consequent::Term("t".into())).unwrap()];
        assert_eq!(mk(unknown), Err(EngineError::UnknownVariable("z".into())));
        let bad_term = vec![Rule::new([("x", "p")], Consequent::Term("nope".into())).unwrap()];
        assert!(matches!(mk(bad_term), Err(EngineError::UnknownTerm { .. })));
        let far = vec![Rule::new([("x", "p")], Consequent::Singleton(4.0)).unwrap()];
        assert!(matches!(
            mk(far),
            Err(EngineError::SingletonOutOfRange { .. })
        ));
        let wavg = InferenceConfig {
            defuzz: DefuzzMethod::WeightedAverage,
            ..Default::default()
        };
        let terms = vec![Rule::new([("x", "p")], Consequent::Term("t".into())).unwrap()];
        assert_eq!(
            RuleBase::new(vec![x.clone()], out.clone(), terms, wavg),
            Err(EngineError::WeightedAverageNeedsSingletons)
        );
    }

    #[test]
    fn compose_matches_clip_for_one_hot_input() {
        let rb = mamdani_two_rules();
        for x in [0.0, 2.5, 3.0, 7.3, 10.0] {
            let a = rb.infer_mamdani(&[x]).unwrap();
            let b = compose_relation(&rb, &[x]).unwrap();
            assert_eq!(a.grades(), b.grades(), "x = {x}");
        }
    }

    #[test]
    fn compose_zero_antecedent_contributes_nothing() {
        let x = var("x", 0.0, 10.0, 11, &[("mid", tri(1.0, 5.0))]);
        let y = var("y", 0.0, 1.0, 5, &[("t", tri(1.0, 0.5))]);
        let rules = vec![Rule::new([("x", "mid")], Consequent::Term("t".into())).unwrap()];
        let rb =
            RuleBase::new(vec![x], OutputVariable::Fuzzy(y), rules, Default::default()).unwrap();
        assert!(compose_relation(&rb, &[0.0]).unwrap().is_empty());
    }

    #[test]
    fn compose_respects_budget() {
        let rb = mamdani_two_rules();
        assert!(matches!(
            compose_relation_with_budget(&rb, &[1.0], 10),
            Err(EngineError::RelationTooLarge { .. })
        ));
    }

    #[test]
    fn compose_with_fuzzy_input_takes_sup() {
        let rb = mamdani_two_rules();
        // Input "about 0" with a half-grade shoulder at x = 1.
        let mut g = vec![0.0; 11];
        g[0] = 1.0;
        g[1] = 0.5;
        let input = GridInput {
            points: rb.inputs()[0].universe().points().collect(),
            grades: g,
        };
        let out = compose_fuzzy_inputs(&rb, &[input], DEFAULT_RELATION_BUDGET).unwrap();
        let crisp0 = rb.infer_mamdani(&[0.0]).unwrap();
        let crisp1 = rb.infer_mamdani(&[1.0]).unwrap();
        for k in 0..11 {
            let expect = crisp0.grades()[k].max(crisp1.grades()[k].min(0.5));
            assert_eq!(out.grades()[k], expect);
        }
    }

    #[test]
    fn singleton_term_consequents_support_wavg() {
        let x = var(
            "x",
            0.0,
            1.0,
            11,
            &[("p", tri(1.0, 0.0)), ("q", tri(1.0, 1.0))],
        );
        let y = var(
            "y",
            0.0,
            10.0,
            11,
            &[
                ("L", MembershipFunction::Singleton { x0: 0.0 }),
                ("H", MembershipFunction::Singleton { x0: 10.0 }),
            ],
        );
        let rules = vec![
            Rule::new([("x", "p")], Consequent::Term("L".into())).unwrap(),
            Rule::new([("x", "q")], Consequent::Term("H".into())).unwrap(),
        ];
        let rb =
            RuleBase::new(vec![x], OutputVariable::Fuzzy(y), rules, Default::default()).unwrap();
        assert!(rb.is_singleton_system());
        assert_eq!(
            rb.evaluate_with(&[0.75], DefuzzMethod::WeightedAverage)
                .unwrap(),
            7.5
        );
    }

    #[test]
    fn batch_matches_pointwise() {
        let rb = mamdani_two_rules();
        let pts: Vec<Vec<f64>> = (0..=20).map(|k| vec![k as f64 * 0.5]).collect();
        let seq = rb.evaluate_batch(&pts, Execution::Sequential);
        let par = rb.evaluate_batch(&pts, Execution::Parallel);
        assert_eq!(seq, par);
        assert_eq!(seq[3], rb.evaluate(&[1.5]));
    }

    #[test]
    fn input_count_checked() {
        let rb = mamdani_two_rules();
        assert_eq!(
            rb.infer_mamdani(&[]),
            Err(EngineError::InputCount {
                expected: 1,
                got: 0
            })
        );
    }
}
