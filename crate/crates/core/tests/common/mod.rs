//! Random system generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use fuzzkit::engine::{
    Affine, AndOp, Consequent, Implication, InferenceConfig, LinguisticVariable, OutputVariable,
    Rule, RuleBase,
};
use fuzzkit::fisdsl::FisModel;
use fuzzkit::membership::{DiscretizedFuzzySet, MembershipFunction, Universe};
use fuzzkit::DefuzzMethod;
use rand::seq::SliceRandom;
use rand::Rng;
pub use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_universe(rng: &mut impl Rng, n: usize) -> Universe {
    let lo = rng.gen_range(-10.0..10.0);
    let width = rng.gen_range(1.0..20.0);
    Universe::new(lo, lo + width, n).unwrap()
}

/// Random non-singleton membership function living on `u`.
pub fn random_shape(rng: &mut impl Rng, u: &Universe) -> MembershipFunction {
    let w = u.hi() - u.lo();
    let c = rng.gen_range(u.lo()..=u.hi());
    match rng.gen_range(0..4) {
        0 => {
            let a = rng.gen_range(0.05 * w..w) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
            MembershipFunction::bell1(a, rng.gen_range(0.3..4.0), c).unwrap()
        }
        1 => {
            let a = rng.gen_range(0.05 * w..w) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
            MembershipFunction::bell2(a, rng.gen_range(0.3..4.0), c).unwrap()
        }
        2 => MembershipFunction::sigmoid(rng.gen_range(-8.0..8.0) / w, c).unwrap(),
        _ => {
            MembershipFunction::trapeze(rng.gen_range(0.05 * w..w), rng.gen_range(0.0..0.4 * w), c)
                .unwrap()
        }
    }
}

pub fn random_variable(
    rng: &mut impl Rng,
    name: &str,
    n: usize,
    max_terms: usize,
) -> LinguisticVariable {
    let u = random_universe(rng, n);
    let count = rng.gen_range(1..=max_terms);
    let terms = (0..count).map(|i| (format!("t{i}"), random_shape(rng, &u)));
    LinguisticVariable::new(name, u, terms.collect::<Vec<_>>()).unwrap()
}

pub fn random_antecedents(
    rng: &mut impl Rng,
    inputs: &[LinguisticVariable],
) -> Vec<(String, String)> {
    let mut idx: Vec<usize> = (0..inputs.len()).collect();
    idx.shuffle(rng);
    let k = rng.gen_range(1..=inputs.len());
    idx[..k]
        .iter()
        .map(|&i| {
            let v = &inputs[i];
            let t = rng.gen_range(0..v.term_count());
            (v.name().to_owned(), v.terms().nth(t).unwrap().0.to_owned())
        })
        .collect()
}

/// Per-input grid cap keeping every rule relation well inside the default budget.
pub fn input_grid_cap(inputs: usize) -> usize {
    match inputs {
        1 => 101,
        2 => 31,
        _ => 11,
    }
}

/// All-Mamdani system: <= 3 inputs, <= 8 rules, grids <= 101 points.
pub fn random_mamdani(rng: &mut impl Rng, and_op: AndOp, implication: Implication) -> RuleBase {
    let m = rng.gen_range(1..=3);
    let cap = input_grid_cap(m);
    let inputs: Vec<LinguisticVariable> = (0..m)
        .map(|i| {
            let n = rng.gen_range(2..=cap);
            random_variable(rng, &format!("x{i}"), n, 4)
        })
        .collect();
    let resolution = rng.gen_range(2..=101);
    let ou = random_universe(rng, resolution);
    let mut out_terms: Vec<(String, MembershipFunction)> = (0..rng.gen_range(1..=4))
        .map(|i| (format!("o{i}"), random_shape(rng, &ou)))
        .collect();
    if rng.gen_bool(0.3) {
        let x0 = rng.gen_range(ou.lo()..=ou.hi());
        out_terms.push(("spike".into(), MembershipFunction::singleton(x0).unwrap()));
    }
    let output = LinguisticVariable::new("y", ou, out_terms.clone()).unwrap();
    let rules = (0..rng.gen_range(1..=8))
        .map(|_| {
            let consequent = if rng.gen_bool(0.8) {
                Consequent::Term(out_terms.choose(rng).unwrap().0.clone())
            } else {
                Consequent::Singleton(rng.gen_range(ou.lo()..=ou.hi()))
            };
            Rule::new(random_antecedents(rng, &inputs), consequent).unwrap()
        })
        .collect();
    let config = InferenceConfig {
        and_op,
        implication,
        resolution,
        ..Default::default()
    };
    RuleBase::new(inputs, OutputVariable::Fuzzy(output), rules, config).unwrap()
}

/// Random crisp input inside every universe; sometimes exactly on a grid point or endpoint.
pub fn random_point(rng: &mut impl Rng, inputs: &[LinguisticVariable]) -> Vec<f64> {
    inputs
        .iter()
        .map(|v| {
            let u = v.universe();
            match rng.gen_range(0..6) {
                0 => u.point(rng.gen_range(0..u.len())),
                1 => u.lo(),
                2 => u.hi(),
                _ => rng.gen_range(u.lo()..=u.hi()),
            }
        })
        .collect()
}

/// A constant-consequent Takagi-Sugeno system and its singleton-Mamdani counterpart.
pub fn random_ts_pair(rng: &mut impl Rng) -> (RuleBase, RuleBase) {
    let m = rng.gen_range(1..=3);
    let inputs: Vec<LinguisticVariable> = (0..m)
        .map(|i| random_variable(rng, &format!("x{i}"), 11, 3))
        .collect();
    let ou = random_universe(rng, 101);
    let and_op = if rng.gen_bool(0.5) {
        AndOp::Min
    } else {
        AndOp::Product
    };
    let n_rules = rng.gen_range(1..=8);
    let mut ts_rules = Vec::new();
    let mut mamdani_rules = Vec::new();
    for _ in 0..n_rules {
        let ante = random_antecedents(rng, &inputs);
        let c0 = rng.gen_range(ou.lo()..=ou.hi());
        ts_rules
            .push(Rule::new(ante.clone(), Consequent::TakagiSugeno(Affine::constant(c0))).unwrap());
        mamdani_rules.push(Rule::new(ante, Consequent::Singleton(c0)).unwrap());
    }
    let ts = RuleBase::new(
        inputs.clone(),
        OutputVariable::Crisp {
            name: "y".into(),
            lo: ou.lo(),
            hi: ou.hi(),
        },
        ts_rules,
        InferenceConfig {
            and_op,
            ..Default::default()
        },
    )
    .unwrap();
    let out = LinguisticVariable::new(
        "y",
        ou,
        vec![(
            "base".to_string(),
            MembershipFunction::singleton(ou.lo()).unwrap(),
        )],
    )
    .unwrap();
    let mamdani = RuleBase::new(
        inputs,
        OutputVariable::Fuzzy(out),
        mamdani_rules,
        InferenceConfig {
            and_op,
            defuzz: DefuzzMethod::WeightedAverage,
            ..Default::default()
        },
    )
    .unwrap();
    (ts, mamdani)
}

/// Any valid model the text format can express, with shortest-repr-hostile reals.
pub fn random_model(rng: &mut impl Rng, seed_name: u64) -> FisModel {
    let resolution = rng.gen_range(2..=64);
    let sugeno = rng.gen_bool(0.5);
    let m = rng.gen_range(1..=3);
    let inputs: Vec<LinguisticVariable> = (0..m)
        .map(|i| random_variable(rng, &format!("in_{i}"), resolution, 4))
        .collect();
    let ou = random_universe(rng, resolution);
    let and_op = *[AndOp::Min, AndOp::Product].choose(rng).unwrap();
    let implication = *[Implication::Clip, Implication::Scale].choose(rng).unwrap();
    let rules_n = rng.gen_range(1..=6);
    let (output, rules, defuzz) = if sugeno {
        let rules = (0..rules_n)
            .map(|_| {
                let mut coefficients = Vec::new();
                for v in &inputs {
                    if rng.gen_bool(0.6) {
                        coefficients.push((v.name().to_owned(), rng.gen_range(-3.0..3.0)));
                    }
                }
                let f = Affine {
                    constant: rng.gen_range(-5.0..5.0),
                    coefficients,
                };
                Rule::new(
                    random_antecedents(rng, &inputs),
                    Consequent::TakagiSugeno(f),
                )
                .unwrap()
            })
            .collect();
        let out = OutputVariable::Crisp {
            name: "out".into(),
            lo: ou.lo(),
            hi: ou.hi(),
        };
        (out, rules, DefuzzMethod::Centroid)
    } else {
        let terms: Vec<(String, MembershipFunction)> = (0..rng.gen_range(1..=4))
            .map(|i| (format!("o{i}"), random_shape(rng, &ou)))
            .collect();
        let out = LinguisticVariable::new("out", ou, terms.clone()).unwrap();
        let rules = (0..rules_n)
            .map(|_| {
                let c = if rng.gen_bool(0.75) {
                    Consequent::Term(terms.choose(rng).unwrap().0.clone())
                } else {
                    Consequent::Singleton(rng.gen_range(ou.lo()..=ou.hi()))
                };
                Rule::new(random_antecedents(rng, &inputs), c).unwrap()
            })
            .collect();
        let method = *[
            DefuzzMethod::Centroid,
            DefuzzMethod::Bisector,
            DefuzzMethod::MeanOfMaxima,
            DefuzzMethod::SmallestOfMaxima,
            DefuzzMethod::LargestOfMaxima,
        ]
        .choose(rng)
        .unwrap();
        (OutputVariable::Fuzzy(out), rules, method)
    };
    let config = InferenceConfig {
        and_op,
        implication,
        defuzz,
        resolution,
        ..Default::default()
    };
    let rb = RuleBase::new(inputs, output, rules, config).unwrap();
    FisModel::new(format!("model_{seed_name}"), rb)
}

/// Random set on a random grid of at most `max_n` points, grades in [0, 1].
/// Grades are drawn from a coarse lattice half the time so plateaus occur.
pub fn random_set(rng: &mut impl Rng, max_n: usize) -> DiscretizedFuzzySet {
    let n = rng.gen_range(2..=max_n);
    let u = random_universe(rng, n);
    let lattice = rng.gen_bool(0.5);
    let mut grades: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else if lattice {
                rng.gen_range(0..=10) as f64 / 10.0
            } else {
                rng.gen_range(0.0..=1.0)
            }
        })
        .collect();
    if grades.iter().all(|&g| g == 0.0) {
        let k = rng.gen_range(0..n);
        grades[k] = 0.5;
    }
    DiscretizedFuzzySet::new(u, grades).unwrap()
}

/// First grid point whose plain prefix sum reaches half the total mass.
pub fn bisector_prefix_oracle(set: &DiscretizedFuzzySet) -> f64 {
    let total: f64 = set.grades().iter().sum();
    let mut run = 0.0;
    for (k, g) in set.grades().iter().enumerate() {
        run += g;
        // Same relative slack as the implementation: exact ties are not lost to rounding.
        if run >= total / 2.0 * (1.0 - 1e-12) {
            return set.universe().point(k);
        }
    }
    set.universe().hi()
}

/// True when the half-mass point is not unique: a prefix sum hits half the
/// mass exactly and the next grade is zero, so a whole plateau bisects.
pub fn bisector_is_ambiguous(set: &DiscretizedFuzzySet) -> bool {
    let g = set.grades();
    let half = g.iter().sum::<f64>() / 2.0;
    let mut run = 0.0;
    for k in 0..g.len().saturating_sub(1) {
        run += g[k];
        if (run - half).abs() <= half * 1e-12 && g[k + 1] == 0.0 {
            return true;
        }
    }
    false
}

/// Grid points attaining the maximum (within 1e-12), by enumeration.
pub fn maxima_oracle(set: &DiscretizedFuzzySet) -> Vec<f64> {
    let mut top = 0.0f64;
    for &g in set.grades() {
        if g > top {
            top = g;
        }
    }
    (0..set.grades().len())
        .filter(|&k| set.grades()[k] >= top - 1e-12)
        .map(|k| set.universe().point(k))
        .collect()
}

/// Reference document: 30 lines, every token required.
pub const REFERENCE_MODEL: &str = "\
system reference kind=mamdani
config and=min implication=clip defuzz=centroid resolution=101
input error range [-10, 10]
  term nb trapeze(5, 0, -10)
  term ns trapeze(5, 0, -5)
  term ze bell1(2.5, 1.5, 0)
  term ps trapeze(5, 0, 5)
  term pb sigmoid(1.2, 7.5)
input rate range [-1, 1]
  term neg trapeze(1, 0, -1)
  term zero bell2(0.4, 2, 0)
  term pos trapeze(1, 0.25, 1)
output u range [0, 100]
  term tiny bell2(10, 2, 0)
  term low trapeze(20, 5, 25)
  term mid bell1(15, 1, 50)
  term high trapeze(20, 5, 75)
  term full sigmoid(0.3, 90)
rule: if error is nb and rate is neg then u is full
rule: if error is nb and rate is zero then u is high
rule: if error is ns then u is high
rule: if error is ze and rate is zero then u is mid
rule: if error is ze and rate is pos then u is low
rule: if error is ze and rate is neg then u is singleton(60)
rule: if error is ps then u is low
rule: if error is pb and rate is pos then u is tiny
rule: if error is pb and rate is zero then u is low
rule: if rate is pos and error is nb then u is mid
rule: if error is pb then u is singleton(0.5)
rule: if error is ns and rate is pos then u is mid";
