//! Controlled natural language for opinion conclusions.
//!
//! Every conclusion sentence follows the fixed template
//! `It is <likelihood> <object> <verb> <predicate>`. Likelihoods and verbs
//! are closed sets; objects and predicates live in a versioned
//! [`VocabularyRegistry`] that can only grow.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Graded likelihood phrase opening a conclusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    UnknownWhether,
    DefinitelyNotTheCaseThat,
    PossibleThat,
    MoreLikelyThanNotThat,
    DefinitelyTheCaseThat,
}

impl Likelihood {
    pub const ALL: [Likelihood; 5] = [
        Likelihood::UnknownWhether,
        Likelihood::DefinitelyNotTheCaseThat,
        Likelihood::PossibleThat,
        Likelihood::MoreLikelyThanNotThat,
        Likelihood::DefinitelyTheCaseThat,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            Likelihood::UnknownWhether => "unknown whether",
            Likelihood::DefinitelyNotTheCaseThat => "definitely not the case that",
            Likelihood::PossibleThat => "possible that",
            Likelihood::MoreLikelyThanNotThat => "more likely than not that",
            Likelihood::DefinitelyTheCaseThat => "definitely the case that",
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Likelihood::UnknownWhether => "unknown-whether",
            Likelihood::DefinitelyNotTheCaseThat => "definitely-not-the-case-that",
            Likelihood::PossibleThat => "possible-that",
            Likelihood::MoreLikelyThanNotThat => "more-likely-than-not-that",
            Likelihood::DefinitelyTheCaseThat => "definitely-the-case-that",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negated,
}

/// The six verb forms. Polarity is fixed per form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerbForm {
    Is,
    IsNot,
    WillBe,
    WillNotBe,
    CanBe,
    CannotBe,
}

impl VerbForm {
    pub const ALL: [VerbForm; 6] =
        [VerbForm::Is, VerbForm::IsNot, VerbForm::WillBe, VerbForm::WillNotBe, VerbForm::CanBe, VerbForm::CannotBe];

    pub fn surface(self) -> &'static str {
        match self {
            VerbForm::Is => "is",
            VerbForm::IsNot => "is not",
            VerbForm::WillBe => "will be",
            VerbForm::WillNotBe => "will not be",
            VerbForm::CanBe => "can be",
            VerbForm::CannotBe => "cannot be",
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            VerbForm::Is => "is",
            VerbForm::IsNot => "is-not",
            VerbForm::WillBe => "will-be",
            VerbForm::WillNotBe => "will-not-be",
            VerbForm::CanBe => "can-be",
            VerbForm::CannotBe => "cannot-be",
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            VerbForm::Is | VerbForm::WillBe | VerbForm::CanBe => Polarity::Positive,
            VerbForm::IsNot | VerbForm::WillNotBe | VerbForm::CannotBe => Polarity::Negated,
        }
    }
}

impl VerbForm {
    pub fn from_id(id: &str) -> Option<VerbForm> {
        VerbForm::ALL.into_iter().find(|v| v.id() == id)
    }
}

/// Stable identifier of an object term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

/// Stable identifier of a predicate term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredicateId(pub String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl PredicateId {
    pub fn new(id: impl Into<String>) -> Self {
        PredicateId(id.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for PredicateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectTerm {
    pub id: ObjectId,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateTerm {
    pub id: PredicateId,
    pub surface: String,
}

/// A term submitted for registry extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Object(ObjectTerm),
    Predicate(PredicateTerm),
}

impl Term {
    pub fn object(id: &str, surface: &str) -> Self {
        Term::Object(ObjectTerm { id: ObjectId::new(id), surface: surface.to_string() })
    }
    pub fn predicate(id: &str, surface: &str) -> Self {
        Term::Predicate(PredicateTerm { id: PredicateId::new(id), surface: surface.to_string() })
    }
}

/// One parsed conclusion statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub likelihood: Likelihood,
    pub object: ObjectId,
    pub verb: VerbForm,
    pub predicate: PredicateId,
}

impl Sentence {
    pub fn new(likelihood: Likelihood, object: &str, verb: VerbForm, predicate: &str) -> Self {
        Sentence { likelihood, object: ObjectId::new(object), verb, predicate: PredicateId::new(predicate) }
    }
}

/// Byte offsets into the normalized input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty sentence")]
    Empty,
    #[error("sentence must start with \"It is\" (found {found:?})")]
    NoLeadingItIs { span: Span, found: String },
    #[error("unknown likelihood phrase at {found:?}")]
    UnknownLikelihood { span: Span, found: String },
    #[error("unknown object phrase at {found:?}")]
    UnknownObject { span: Span, found: String },
    #[error("unknown verb phrase at {found:?}")]
    UnknownVerb { span: Span, found: String },
    #[error("unknown predicate phrase at {found:?}")]
    UnknownPredicate { span: Span, found: String },
    #[error("unexpected trailing text {found:?}")]
    TrailingGarbage { span: Span, found: String },
}

impl ParseError {
    /// Stable machine-readable reason id.
    pub fn reason_id(&self) -> &'static str {
        match self {
            ParseError::Empty => "Empty",
            ParseError::NoLeadingItIs { .. } => "NoLeadingItIs",
            ParseError::UnknownLikelihood { .. } => "UnknownLikelihood",
            ParseError::UnknownObject { .. } => "UnknownObject",
            ParseError::UnknownVerb { .. } => "UnknownVerb",
            ParseError::UnknownPredicate { .. } => "UnknownPredicate",
            ParseError::TrailingGarbage { .. } => "TrailingGarbage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("surface {0:?} already registered")]
    SurfaceCollision(String),
    #[error("surface {0:?} collides with a reserved likelihood or verb phrase")]
    ReservedPhrase(String),
    #[error("id {0:?} already bound to a different surface")]
    IdReused(String),
    #[error("surface must be non-empty")]
    EmptySurface,
    #[error("built-in term {0:?} missing from registry document")]
    MissingBuiltIn(String),
}

impl RegistryError {
    pub fn reason_id(&self) -> &'static str {
        match self {
            RegistryError::SurfaceCollision(_) => "SurfaceCollision",
            RegistryError::ReservedPhrase(_) => "ReservedPhrase",
            RegistryError::IdReused(_) => "IdReused",
            RegistryError::EmptySurface => "EmptySurface",
            RegistryError::MissingBuiltIn(_) => "MissingBuiltIn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("object id {0:?} is not in the registry")]
    DanglingObject(String),
    #[error("predicate id {0:?} is not in the registry")]
    DanglingPredicate(String),
}

impl RenderError {
    pub fn reason_id(&self) -> &'static str {
        "DanglingReference"
    }
}

/// Versioned set of object and predicate terms. Built-ins are always present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RegistryDoc")]
pub struct VocabularyRegistry {
    pub version: u64,
    pub objects: Vec<ObjectTerm>,
    pub predicates: Vec<PredicateTerm>,
}

#[derive(Deserialize)]
struct RegistryDoc {
    version: u64,
    objects: Vec<ObjectTerm>,
    predicates: Vec<PredicateTerm>,
}

impl TryFrom<RegistryDoc> for VocabularyRegistry {
    type Error = RegistryError;

    fn try_from(doc: RegistryDoc) -> Result<Self, Self::Error> {
        let builtin = VocabularyRegistry::builtin();
        for o in &builtin.objects {
            if !doc.objects.contains(o) {
                return Err(RegistryError::MissingBuiltIn(o.id.0.clone()));
            }
        }
        for p in &builtin.predicates {
            if !doc.predicates.contains(p) {
                return Err(RegistryError::MissingBuiltIn(p.id.0.clone()));
            }
        }
        // Rebuild through the extension path so every invariant is re-checked.
        let mut reg = builtin;
        for o in doc.objects {
            if !reg.objects.contains(&o) {
                reg = reg.extend(Term::Object(o))?;
            }
        }
        for p in doc.predicates {
            if !reg.predicates.contains(&p) {
                reg = reg.extend(Term::Predicate(p))?;
            }
        }
        reg.version = doc.version.max(reg.version);
        Ok(reg)
    }
}

pub const BUILTIN_OBJECTS: [(&str, &str); 3] = [
    ("transactions", "transactions"),
    ("collateral", "collateral"),
    ("enforcement-of-close-out-netting", "enforcement of close-out netting"),
];

pub const BUILTIN_PREDICATES: [(&str, &str); 3] =
    [("cherry-picked", "cherry-picked"), ("enforceable", "enforceable"), ("stayed", "stayed")];

// Words that open a verb phrase; an object surface containing one would
// swallow the verb slot of existing sentences.
const VERB_LEADING_WORDS: [&str; 4] = ["is", "will", "can", "cannot"];

impl Default for VocabularyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl VocabularyRegistry {
    pub fn builtin() -> Self {
        VocabularyRegistry {
            version: 1,
            objects: BUILTIN_OBJECTS.iter().map(|(id, s)| ObjectTerm { id: ObjectId::new(*id), surface: s.to_string() }).collect(),
            predicates: BUILTIN_PREDICATES
                .iter()
                .map(|(id, s)| PredicateTerm { id: PredicateId::new(*id), surface: s.to_string() })
                .collect(),
        }
    }

    pub fn object(&self, id: &ObjectId) -> Option<&ObjectTerm> {
        self.objects.iter().find(|o| &o.id == id)
    }

    pub fn predicate(&self, id: &PredicateId) -> Option<&PredicateTerm> {
        self.predicates.iter().find(|p| &p.id == id)
    }

    /// Returns a new registry containing `term`, with the version bumped.
    pub fn extend(&self, term: Term) -> Result<VocabularyRegistry, RegistryError> {
        let (id, surface, is_object) = match &term {
            Term::Object(o) => (o.id.0.as_str(), normalize(&o.surface), true),
            Term::Predicate(p) => (p.id.0.as_str(), normalize(&p.surface), false),
        };
        if surface.is_empty() || id.is_empty() {
            return Err(RegistryError::EmptySurface);
        }
        let reserved = Likelihood::ALL
            .iter()
            .map(|l| l.surface())
            .chain(VerbForm::ALL.iter().map(|v| v.surface()))
            .chain(std::iter::once("it is"))
            .any(|p| p == surface);
        let words: Vec<&str> = surface.split(' ').collect();
        let swallows_verb = is_object && words.iter().any(|w| VERB_LEADING_WORDS.contains(w));
        let swallows_negation = !is_object && words[0] == "not";
        if reserved || swallows_verb || swallows_negation {
            return Err(RegistryError::ReservedPhrase(surface));
        }
        if self.objects.iter().any(|o| o.surface == surface) || self.predicates.iter().any(|p| p.surface == surface) {
            return Err(RegistryError::SurfaceCollision(surface));
        }
        if self.objects.iter().any(|o| o.id.0 == id) || self.predicates.iter().any(|p| p.id.0 == id) {
            return Err(RegistryError::IdReused(id.to_string()));
        }
        let mut next = self.clone();
        match term {
            Term::Object(o) => next.objects.push(ObjectTerm { id: o.id, surface }),
            Term::Predicate(p) => next.predicates.push(PredicateTerm { id: p.id, surface }),
        }
        next.version += 1;
        Ok(next)
    }

    /// Renders the canonical text of `s`.
    pub fn render(&self, s: &Sentence) -> Result<String, RenderError> {
        let object = self.object(&s.object).ok_or_else(|| RenderError::DanglingObject(s.object.0.clone()))?;
        let predicate = self.predicate(&s.predicate).ok_or_else(|| RenderError::DanglingPredicate(s.predicate.0.clone()))?;
        Ok(format!("It is {} {} {} {}", s.likelihood.surface(), object.surface, s.verb.surface(), predicate.surface))
    }

    /// Parses one conclusion sentence against this registry.
    pub fn parse(&self, text: &str) -> Result<Sentence, ParseError> {
        let norm = normalize(text);
        if norm.is_empty() {
            return Err(ParseError::Empty);
        }
        let mut cursor = Cursor { text: &norm, pos: 0 };

        if !cursor.eat("it is") {
            return Err(ParseError::NoLeadingItIs { span: cursor.rest_span(), found: cursor.peek_word() });
        }
        let likelihood = cursor
            .longest(Likelihood::ALL.iter().map(|l| (l.surface(), *l)))
            .ok_or_else(|| ParseError::UnknownLikelihood { span: cursor.rest_span(), found: cursor.rest() })?;
        let object = cursor
            .longest(self.objects.iter().map(|o| (o.surface.as_str(), o.id.clone())))
            .ok_or_else(|| ParseError::UnknownObject { span: cursor.rest_span(), found: cursor.rest() })?;
        let verb = cursor
            .longest(VerbForm::ALL.iter().map(|v| (v.surface(), *v)))
            .ok_or_else(|| ParseError::UnknownVerb { span: cursor.rest_span(), found: cursor.rest() })?;
        let predicate = cursor
            .longest(self.predicates.iter().map(|p| (p.surface.as_str(), p.id.clone())))
            .ok_or_else(|| ParseError::UnknownPredicate { span: cursor.rest_span(), found: cursor.rest() })?;
        if !cursor.at_end() {
            return Err(ParseError::TrailingGarbage { span: cursor.rest_span(), found: cursor.rest() });
        }
        Ok(Sentence { likelihood, object, verb, predicate })
    }
}

/// Case-folds, collapses whitespace, trims, and drops the closing period.
pub fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(['.', ' ']).to_string()
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    fn rest(&self) -> String {
        self.text[self.pos.min(self.text.len())..].to_string()
    }

    fn rest_span(&self) -> Span {
        Span { start: self.pos.min(self.text.len()), end: self.text.len() }
    }

    fn peek_word(&self) -> String {
        self.rest().split(' ').take(2).collect::<Vec<_>>().join(" ")
    }

    /// Consumes `phrase` if it occupies whole words at the cursor.
    fn eat(&mut self, phrase: &str) -> bool {
        let rest = &self.text[self.pos.min(self.text.len())..];
        if !rest.starts_with(phrase) {
            return false;
        }
        let tail = &rest[phrase.len()..];
        if tail.is_empty() {
            self.pos += phrase.len();
            true
        } else if tail.starts_with(' ') {
            self.pos += phrase.len() + 1;
            true
        } else {
            false
        }
    }

    fn longest<T>(&mut self, candidates: impl Iterator<Item = (&'a str, T)>) -> Option<T>
    where
        T: 'a,
    {
        let mut cands: Vec<(&str, T)> = candidates.collect();
        cands.sort_by_key(|c| std::cmp::Reverse(c.0.len()));
        for (phrase, value) in cands {
            if self.eat(phrase) {
                return Some(value);
            }
        }
        None
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase")]
        struct Raw {
            kind: String,
            id: String,
            surface: String,
        }
        let raw = Raw::deserialize(d)?;
        match raw.kind.as_str() {
            "object" => Ok(Term::object(&raw.id, &raw.surface)),
            "predicate" => Ok(Term::predicate(&raw.id, &raw.surface)),
            other => Err(serde::de::Error::custom(format!("unknown term kind {other:?}"))),
        }
    }
}

/// Every sentence expressible with the given registry, in a fixed order.
pub fn all_sentences(registry: &VocabularyRegistry) -> Vec<Sentence> {
    let mut out = Vec::new();
    for l in Likelihood::ALL {
        for o in &registry.objects {
            for v in VerbForm::ALL {
                for p in &registry.predicates {
                    out.push(Sentence { likelihood: l, object: o.id.clone(), verb: v, predicate: p.id.clone() });
                }
            }
        }
    }
    out
}
