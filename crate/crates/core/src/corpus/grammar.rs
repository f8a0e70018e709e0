//! Template grammar for a synthetic English-like agreement language.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Grammatical number of a noun or verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Number {
    #[serde(rename = "S")]
    Singular,
    #[serde(rename = "P")]
    Plural,
}

impl Number {
    pub fn flip(self) -> Number {
        match self {
            Number::Singular => Number::Plural,
            Number::Plural => Number::Singular,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Number::Singular => "S",
            Number::Plural => "P",
        }
    }

    fn pick(self, forms: &(String, String)) -> &str {
        match self {
            Number::Singular => &forms.0,
            Number::Plural => &forms.1,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Sentence templates. Every template has one main verb agreeing with the
/// head subject; the object relative clause adds an inner verb agreeing with
/// the embedded subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Template {
    /// `the N V.`
    Simple,
    /// `WH AUX the N V?` with the auxiliary carrying agreement
    WhQuestion,
    /// `the N P the N' V.`
    NounPp,
    /// `the N that the N' V' V.`
    ObjectRelative,
}

impl Template {
    pub const ALL: [Template; 4] = [Template::Simple, Template::WhQuestion, Template::NounPp, Template::ObjectRelative];

    pub fn name(self) -> &'static str {
        match self {
            Template::Simple => "simple",
            Template::WhQuestion => "wh",
            Template::NounPp => "nounpp",
            Template::ObjectRelative => "objrc",
        }
    }

    pub fn from_name(name: &str) -> Option<Template> {
        Template::ALL.into_iter().find(|t| t.name() == name)
    }
}

/// Auxiliary used by wh-questions, singular then plural.
pub const AUXILIARY: (&str, &str) = ("does", "do");
pub const COMPLEMENTIZER: &str = "that";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub nouns: Vec<(String, String)>,
    pub verbs: Vec<(String, String)>,
    #[serde(default)]
    pub prepositions: Vec<String>,
    #[serde(default)]
    pub wh_words: Vec<String>,
    pub template_weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: u64,
}

/// One concrete choice of lexical items and numbers for a template.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Draw {
    pub template: Template,
    pub subject: usize,
    pub subject_number: Number,
    /// Second noun: PP object or embedded subject.
    pub other: Option<(usize, Number)>,
    pub verb: usize,
    pub inner_verb: Option<usize>,
    pub preposition: Option<usize>,
    pub wh: Option<usize>,
}

/// Agreement slot whose number can be flipped to build an ungrammatical twin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Main,
    Inner,
}

fn pairs(words: &[(&str, &str)]) -> Vec<(String, String)> {
    words.iter().map(|(s, p)| (s.to_string(), p.to_string())).collect()
}

impl Default for GrammarSpec {
    fn default() -> Self {
        let nouns = pairs(&[
            ("dog", "dogs"),
            ("cat", "cats"),
            ("boy", "boys"),
            ("girl", "girls"),
            ("farmer", "farmers"),
            ("teacher", "teachers"),
            ("doctor", "doctors"),
            ("pilot", "pilots"),
            ("author", "authors"),
            ("friend", "friends"),
            ("bird", "birds"),
            ("king", "kings"),
        ]);
        let verbs = pairs(&[
            ("runs", "run"),
            ("sleeps", "sleep"),
            ("sings", "sing"),
            ("laughs", "laugh"),
            ("smiles", "smile"),
            ("waits", "wait"),
            ("likes", "like"),
            ("sees", "see"),
            ("helps", "help"),
            ("knows", "know"),
        ]);
        let template_weights = [("simple", 4.0), ("wh", 2.0), ("nounpp", 2.0), ("objrc", 1.5)]
            .into_iter()
            .map(|(k, w)| (k.to_string(), w))
            .collect();
        GrammarSpec {
            nouns,
            verbs,
            prepositions: ["near", "behind", "with", "beside"].iter().map(|s| s.to_string()).collect(),
            wh_words: ["where", "when", "why", "how"].iter().map(|s| s.to_string()).collect(),
            template_weights,
            seed: 0,
        }
    }
}

impl GrammarSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, CorpusError> {
        let spec: GrammarSpec = toml::from_str(text).map_err(|e| CorpusError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grammar serializes")
    }

    /// Templates with positive weight, in canonical order.
    pub fn active_templates(&self) -> Vec<(Template, f64)> {
        Template::ALL
            .into_iter()
            .filter_map(|t| self.template_weights.get(t.name()).map(|&w| (t, w)))
            .filter(|&(_, w)| w > 0.0)
            .collect()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.nouns.is_empty() {
            return Err(CorpusError::EmptyLexicon("nouns"));
        }
        if self.verbs.is_empty() {
            return Err(CorpusError::EmptyLexicon("verbs"));
        }
        for (s, p) in self.nouns.iter().chain(&self.verbs) {
            if s == p || s.trim().is_empty() || p.trim().is_empty() {
                return Err(CorpusError::BadForms(s.clone(), p.clone()));
            }
        }
        for (name, &w) in &self.template_weights {
            if Template::from_name(name).is_none() {
                return Err(CorpusError::UnknownTemplate(name.clone()));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(CorpusError::BadWeights);
            }
        }
        let active = self.active_templates();
        if active.is_empty() {
            return Err(CorpusError::BadWeights);
        }
        for (t, _) in active {
            self.supports(t)?;
        }
        Ok(())
    }

    /// Checks the lexicon has what `template` needs.
    pub fn supports(&self, template: Template) -> Result<(), CorpusError> {
        match template {
            Template::NounPp if self.prepositions.is_empty() => Err(CorpusError::EmptyLexicon("prepositions")),
            Template::WhQuestion if self.wh_words.is_empty() => Err(CorpusError::EmptyLexicon("wh_words")),
            _ if self.nouns.is_empty() => Err(CorpusError::EmptyLexicon("nouns")),
            _ if self.verbs.is_empty() => Err(CorpusError::EmptyLexicon("verbs")),
            _ => Ok(()),
        }
    }

    /// Same grammar restricted to the given noun indices.
    pub fn with_nouns(&self, keep: &[usize]) -> GrammarSpec {
        let mut g = self.clone();
        g.nouns = keep.iter().map(|&i| self.nouns[i].clone()).collect();
        g
    }

    /// Draws lexical items uniformly; the caller fixes the numbers.
    pub fn draw<R: Rng>(&self, template: Template, subject_number: Number, other_number: Number, rng: &mut R) -> Draw {
        let subject = rng.random_range(0..self.nouns.len());
        let other_noun = |rng: &mut R| {
            if self.nouns.len() == 1 {
                0
            } else {
                // distinct from the subject
                let k = rng.random_range(0..self.nouns.len() - 1);
                if k >= subject {
                    k + 1
                } else {
                    k
                }
            }
        };
        let verb = rng.random_range(0..self.verbs.len());
        let mut d = Draw {
            template,
            subject,
            subject_number,
            other: None,
            verb,
            inner_verb: None,
            preposition: None,
            wh: None,
        };
        match template {
            Template::Simple => {}
            Template::WhQuestion => d.wh = Some(rng.random_range(0..self.wh_words.len())),
            Template::NounPp => {
                d.other = Some((other_noun(rng), other_number));
                d.preposition = Some(rng.random_range(0..self.prepositions.len()));
            }
            Template::ObjectRelative => {
                d.other = Some((other_noun(rng), other_number));
                d.inner_verb = Some(rng.random_range(0..self.verbs.len()));
            }
        }
        d
    }

    /// Renders a draw; `flip` puts the named agreement slot in the wrong number.
    pub fn render(&self, d: &Draw, flip: Option<Slot>) -> String {
        let main = if flip == Some(Slot::Main) { d.subject_number.flip() } else { d.subject_number };
        let subj = d.subject_number.pick(&self.nouns[d.subject]);
        match d.template {
            Template::Simple => format!("the {subj} {} .", main.pick(&self.verbs[d.verb])),
            Template::WhQuestion => {
                let aux = match main {
                    Number::Singular => AUXILIARY.0,
                    Number::Plural => AUXILIARY.1,
                };
                // bare verb after the auxiliary is the plural form
                let wh = &self.wh_words[d.wh.unwrap()];
                format!("{wh} {aux} the {subj} {} ?", self.verbs[d.verb].1)
            }
            Template::NounPp => {
                let (o, on) = d.other.unwrap();
                format!(
                    "the {subj} {} the {} {} .",
                    self.prepositions[d.preposition.unwrap()],
                    on.pick(&self.nouns[o]),
                    main.pick(&self.verbs[d.verb])
                )
            }
            Template::ObjectRelative => {
                let (o, on) = d.other.unwrap();
                let inner = if flip == Some(Slot::Inner) { on.flip() } else { on };
                format!(
                    "the {subj} {COMPLEMENTIZER} the {} {} {} .",
                    on.pick(&self.nouns[o]),
                    inner.pick(&self.verbs[d.inner_verb.unwrap()]),
                    main.pick(&self.verbs[d.verb])
                )
            }
        }
    }
}

/// Infinite deterministic stream of grammatical sentences.
pub struct SentenceStream<'a> {
    grammar: &'a GrammarSpec,
    templates: Vec<Template>,
    weights: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl<'a> SentenceStream<'a> {
    pub fn new(grammar: &'a GrammarSpec) -> Result<Self, CorpusError> {
        grammar.validate()?;
        let active = grammar.active_templates();
        let weights = WeightedIndex::new(active.iter().map(|&(_, w)| w)).map_err(|_| CorpusError::BadWeights)?;
        Ok(SentenceStream {
            grammar,
            templates: active.into_iter().map(|(t, _)| t).collect(),
            weights,
            rng: ChaCha8Rng::seed_from_u64(grammar.seed),
        })
    }
}

impl Iterator for SentenceStream<'_> {
    type Item = String;

    fn next(&mut self) -> Option<String> {
        let template = self.templates[self.weights.sample(&mut self.rng)];
        let number = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { Number::Plural } else { Number::Singular };
        let sn = number(&mut self.rng);
        let on = number(&mut self.rng);
        let d = self.grammar.draw(template, sn, on, &mut self.rng);
        Some(self.grammar.render(&d, None))
    }
}

/// Emits `n_sentences` sentences, one per line.
pub fn generate_corpus(grammar: &GrammarSpec, n_sentences: usize) -> Result<String, CorpusError> {
    if n_sentences == 0 {
        return Err(CorpusError::NoSentences);
    }
    let mut out = String::new();
    for s in SentenceStream::new(grammar)?.take(n_sentences) {
        out.push_str(&s);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tiny() -> GrammarSpec {
        GrammarSpec {
            nouns: pairs(&[("dog", "dogs")]),
            verbs: pairs(&[("runs", "run")]),
            prepositions: vec![],
            wh_words: vec![],
            template_weights: [("simple".to_string(), 1.0)].into_iter().collect(),
            seed: 3,
        }
    }

    #[test]
    fn exhaustive_tiny_grammar() {
        let text = generate_corpus(&tiny(), 200).unwrap();
        let seen: BTreeSet<&str> = text.lines().collect();
        let expected: BTreeSet<&str> = ["the dog runs .", "the dogs run ."].into_iter().collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn deterministic() {
        let g = GrammarSpec::default();
        assert_eq!(generate_corpus(&g, 500).unwrap(), generate_corpus(&g, 500).unwrap());
        let mut other = g.clone();
        other.seed = 1;
        assert_ne!(generate_corpus(&g, 500).unwrap(), generate_corpus(&other, 500).unwrap());
    }

    #[test]
    fn validation_errors() {
        let mut g = tiny();
        g.nouns.clear();
        assert!(matches!(generate_corpus(&g, 5), Err(CorpusError::EmptyLexicon("nouns"))));
        let mut g = tiny();
        g.template_weights.insert("nounpp".into(), 1.0);
        assert!(matches!(generate_corpus(&g, 5), Err(CorpusError::EmptyLexicon("prepositions"))));
        let mut g = tiny();
        g.template_weights.insert("simple".into(), 0.0);
        assert!(matches!(generate_corpus(&g, 5), Err(CorpusError::BadWeights)));
        let mut g = tiny();
        g.template_weights.insert("passive".into(), 1.0);
        assert!(matches!(generate_corpus(&g, 5), Err(CorpusError::UnknownTemplate(_))));
        let mut g = tiny();
        g.verbs[0].1 = "runs".into();
        assert!(matches!(generate_corpus(&g, 5), Err(CorpusError::BadForms(..))));
        assert!(matches!(generate_corpus(&tiny(), 0), Err(CorpusError::NoSentences)));
    }

    #[test]
    fn toml_roundtrip() {
        let g = GrammarSpec::default();
        let back = GrammarSpec::from_toml_str(&g.to_toml_string()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn render_flip_changes_one_word() {
        let g = GrammarSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in Template::ALL {
            let d = g.draw(t, Number::Singular, Number::Plural, &mut rng);
            let good = g.render(&d, None);
            let slots: &[Slot] = if t == Template::ObjectRelative { &[Slot::Main, Slot::Inner] } else { &[Slot::Main] };
            for &slot in slots {
                let bad = g.render(&d, Some(slot));
                let diff = good.split(' ').zip(bad.split(' ')).filter(|(a, b)| a != b).count();
                assert_eq!(diff, 1, "{good} / {bad}");
            }
        }
    }
}
