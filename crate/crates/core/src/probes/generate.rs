use std::collections::HashSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MinimalPair, PairMeta, ProbeError, ProbeSuite};
use crate::corpus::{GrammarSpec, Number, Slot, Template};

/// Agreement phenomena that can be probed with the synthetic grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phenomenon {
    #[serde(rename = "simple-SV")]
    SimpleSv,
    #[serde(rename = "wh-question")]
    WhQuestion,
    #[serde(rename = "nounpp")]
    NounPp,
    /// Embedded verb of an object relative must agree with the embedded subject.
    #[serde(rename = "short-nested-inner")]
    ShortNestedInner,
    /// Main verb of an object relative must agree across the embedded clause.
    #[serde(rename = "short-nested-outer")]
    ShortNestedOuter,
}

impl Phenomenon {
    pub const ALL: [Phenomenon; 5] = [
        Phenomenon::SimpleSv,
        Phenomenon::WhQuestion,
        Phenomenon::NounPp,
        Phenomenon::ShortNestedInner,
        Phenomenon::ShortNestedOuter,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Phenomenon::SimpleSv => "simple-SV",
            Phenomenon::WhQuestion => "wh-question",
            Phenomenon::NounPp => "nounpp",
            Phenomenon::ShortNestedInner => "short-nested-inner",
            Phenomenon::ShortNestedOuter => "short-nested-outer",
        }
    }

    pub fn from_label(label: &str) -> Option<Phenomenon> {
        Phenomenon::ALL.into_iter().find(|p| p.label() == label)
    }

    pub fn template(self) -> Template {
        match self {
            Phenomenon::SimpleSv => Template::Simple,
            Phenomenon::WhQuestion => Template::WhQuestion,
            Phenomenon::NounPp => Template::NounPp,
            Phenomenon::ShortNestedInner | Phenomenon::ShortNestedOuter => Template::ObjectRelative,
        }
    }

    fn slot(self) -> Slot {
        match self {
            Phenomenon::ShortNestedInner => Slot::Inner,
            _ => Slot::Main,
        }
    }

    fn two_nouns(self) -> bool {
        matches!(self.template(), Template::NounPp | Template::ObjectRelative)
    }
}

impl fmt::Display for Phenomenon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Restricts two-noun phenomena to pairs whose attractor does or does not
/// share the subject's number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Congruency {
    #[default]
    Any,
    Congruent,
    Incongruent,
}

impl Congruency {
    fn admits(self, subj: Number, other: Number) -> bool {
        match self {
            Congruency::Any => true,
            Congruency::Congruent => subj == other,
            Congruency::Incongruent => subj != other,
        }
    }

    /// Suffix appended to the phenomenon label to form the default probe id.
    pub fn suffix(self) -> &'static str {
        match self {
            Congruency::Any => "",
            Congruency::Congruent => "-congruent",
            Congruency::Incongruent => "-incongruent",
        }
    }
}

/// How probe nouns relate to training nouns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Holdout {
    /// Probes use the training lexicon.
    Shared,
    /// The last `fraction` of the nouns is reserved for probes.
    Disjoint { fraction: f64 },
}

/// Splits a grammar into (training, probe) grammars according to `holdout`.
pub fn split_lexicon(grammar: &GrammarSpec, holdout: &Holdout) -> Result<(GrammarSpec, GrammarSpec), ProbeError> {
    match *holdout {
        Holdout::Shared => Ok((grammar.clone(), grammar.clone())),
        Holdout::Disjoint { fraction } => {
            let n = grammar.nouns.len();
            if !(fraction > 0.0 && fraction < 1.0) || n < 2 {
                return Err(ProbeError::Unsupported(
                    "disjoint holdout".into(),
                    format!("needs 0 < fraction < 1 and at least 2 nouns (fraction {fraction}, {n} nouns)"),
                ));
            }
            let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
            let train: Vec<usize> = (0..n - k).collect();
            let probe: Vec<usize> = (n - k..n).collect();
            Ok((grammar.with_nouns(&train), grammar.with_nouns(&probe)))
        }
    }
}

fn word_diff(a: &str, b: &str) -> Option<usize> {
    let wa: Vec<&str> = a.split_whitespace().collect();
    let wb: Vec<&str> = b.split_whitespace().collect();
    (wa.len() == wb.len()).then(|| wa.iter().zip(&wb).filter(|(x, y)| x != y).count())
}

const STALL_LIMIT: usize = 64;

/// Generates up to `n_pairs` distinct minimal pairs. Number conditions cycle
/// deterministically so strata stay balanced; a condition that keeps
/// producing duplicates is skipped. Fewer pairs are returned when the
/// grammar cannot supply more, but never fewer than 2.
pub fn generate_suite(
    grammar: &GrammarSpec,
    phenomenon: Phenomenon,
    n_pairs: usize,
    seed: u64,
) -> Result<ProbeSuite, ProbeError> {
    generate_suite_with(grammar, phenomenon, Congruency::Any, n_pairs, seed)
}

/// [`generate_suite`] restricted to one congruency condition. The probe id
/// defaults to the phenomenon label plus [`Congruency::suffix`].
pub fn generate_suite_with(
    grammar: &GrammarSpec,
    phenomenon: Phenomenon,
    congruency: Congruency,
    n_pairs: usize,
    seed: u64,
) -> Result<ProbeSuite, ProbeError> {
    grammar.validate()?;
    if congruency != Congruency::Any && !phenomenon.two_nouns() {
        return Err(ProbeError::Unsupported(
            phenomenon.label().into(),
            format!("{congruency:?} pairs need a second noun"),
        ));
    }
    let template = phenomenon.template();
    grammar
        .supports(template)
        .map_err(|e| ProbeError::Unsupported(phenomenon.label().into(), e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(phenomenon as u64);

    let conditions: Vec<(Number, Number)> = if phenomenon.two_nouns() {
        vec![
            (Number::Singular, Number::Singular),
            (Number::Singular, Number::Plural),
            (Number::Plural, Number::Singular),
            (Number::Plural, Number::Plural),
        ]
    } else {
        vec![(Number::Singular, Number::Singular), (Number::Plural, Number::Singular)]
    };
    let conditions: Vec<(Number, Number)> =
        conditions.into_iter().filter(|&(s, o)| congruency.admits(s, o)).collect();
    let budget = 200 * n_pairs + 1000;
    let label = phenomenon.label();
    let probe_id = format!("{label}{}", congruency.suffix());
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(n_pairs);
    let (mut skew, mut stall) = (0usize, 0usize);
    for _ in 0..budget {
        if pairs.len() == n_pairs || stall >= STALL_LIMIT * conditions.len() {
            break;
        }
        let (subj, other) = conditions[(pairs.len() + skew) % conditions.len()];
        let draw = grammar.draw(template, subj, other, &mut rng);
        let good = grammar.render(&draw, None);
        let bad = grammar.render(&draw, Some(phenomenon.slot()));
        if good == bad || word_diff(&good, &bad) != Some(1) || !seen.insert((good.clone(), bad.clone())) {
            stall += 1;
            if stall % STALL_LIMIT == 0 {
                skew += 1;
            }
            continue;
        }
        stall = 0;
        let meta = match phenomenon {
            Phenomenon::SimpleSv | Phenomenon::WhQuestion => PairMeta {
                subject_number: Some(subj),
                correct_verb_number: Some(subj),
                ..Default::default()
            },
            Phenomenon::NounPp | Phenomenon::ShortNestedOuter => PairMeta {
                congruent: Some(subj == other),
                subject_number: Some(subj),
                attractor_number: Some(other),
                correct_verb_number: Some(subj),
            },
            Phenomenon::ShortNestedInner => PairMeta {
                congruent: Some(subj == other),
                subject_number: Some(other),
                attractor_number: Some(subj),
                correct_verb_number: Some(other),
            },
        };
        pairs.push(MinimalPair {
            pair_id: format!("{probe_id}-{:05}", pairs.len()),
            probe_id: probe_id.clone(),
            grammatical: good,
            ungrammatical: bad,
            meta,
        });
    }
    let suite = ProbeSuite { probe_id, phenomenon: label.to_string(), pairs };
    suite.validate()?;
    Ok(suite)
}
