//! Relation catalog: the semantic relations used to elicit related concepts,
//! each paired with a list-prompt and a context-sentence template.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! builtin_relations {
    ($( $variant:ident => $upper:literal, $list:literal, $context:literal, $display:literal; )*) => {
        /// A semantic relation between a parent concept and a child concept.
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum RelationKind {
            $( $variant, )*
            /// A user-registered relation, identified by its name.
            Custom(String),
        }

        impl RelationKind {
            /// The built-in relations in catalog order.
            pub const BUILTIN: &'static [RelationKind] = &[$( RelationKind::$variant, )*];

            pub fn name(&self) -> &str {
                match self {
                    $( RelationKind::$variant => stringify!($variant), )*
                    RelationKind::Custom(name) => name,
                }
            }

            /// Upper-case tag used in the prompt catalog listing, e.g. `TYPEOF`.
            pub fn tag(&self) -> String {
                match self {
                    $( RelationKind::$variant => $upper.to_string(), )*
                    RelationKind::Custom(name) => name.to_uppercase(),
                }
            }

            fn builtin_from_name(name: &str) -> Option<Self> {
                match name {
                    $( stringify!($variant) | $upper => Some(RelationKind::$variant), )*
                    _ => None,
                }
            }
        }

        fn builtin_templates() -> Vec<RelationTemplate> {
            vec![$(
                RelationTemplate {
                    kind: RelationKind::$variant,
                    list_template: $list.to_string(),
                    context_template: $context.to_string(),
                    display: $display.to_string(),
                },
            )*]
        }
    };
}

builtin_relations! {
    TypeOf => "TYPEOF", "List {N} types of {concept}.", "{concept} is a type of {parent_concept}.", "a type of";
    PartOf => "PARTOF", "List {N} parts or aspects of {concept}.", "{concept} is a part of {parent_concept}.", "a part of";
    HasProperty => "HASPROPERTY", "List {N} descriptions of {concept}.", "{parent_concept} is described as {concept}.", "a description of";
    UsedFor => "USEDFOR", "List {N} things {concept} could be used for.", "{parent_concept} is used for {concept}.", "a use of";
    AtLocation => "ATLOCATION", "List {N} locations {concept} could appear in.", "{parent_concept} locates at {concept}.", "a location of";
    Causes => "CAUSES", "List {N} consequences of {concept}.", "{parent_concept} causes {concept}.", "a consequence of";
    MotivatedBy => "MOTIVATEDBY", "List {N} motivations behind {concept}.", "{parent_concept} is motivated by {concept}.", "a motivation behind";
    ObstructedBy => "OBSTRUCTEDBY", "List {N} things, entities, or people against {concept}.", "{parent_concept} is obstructed by {concept}.", "against";
    MannerOf => "MANNEROF", "List {N} ways to do {concept}.", "{concept} is a way to do {parent_concept}.", "a way to do";
    LocatedNear => "LOCATEDNEAR", "List {N} things that often locates near {concept}.", "{concept} locates near {parent_concept}.", "located near";
    CapableOf => "CAPABLEOF", "List {N} things that {concept} is capable of.", "{parent_concept} is capable of {concept}.", "a capability of";
    HasSubevent => "HASSUBEVENT", "List {N} subevents of {concept}.", "{concept} happens during {parent_concept}.", "happens during";
    HasPrerequisite => "HASPREREQUISITE", "List {N} things that happen before {concept}.", "{concept} happens before {parent_concept}.", "happens before";
    Desires => "DESIRES", "List {N} things that {concept} desires.", "{parent_concept} desires {concept}.", "desired by";
    CreatedBy => "CREATEDBY", "List {N} creators of {concept}.", "{concept} creates {parent_concept}.", "a creator of";
    SymbolOf => "SYMBOLOF", "List {N} symbols of {concept}.", "{concept} is a symbol of {parent_concept}.", "a symbol of";
    CausesDesire => "CAUSESDESIRE", "List {N} desires caused by {concept}.", "{parent_concept} causes desire of {concept}.", "a desire caused by";
    MadeOf => "MADEOF", "List {N} materials of {concept}.", "{parent_concept} is made of {concept}.", "a material of";
    ReceivesAction => "RECEIVESACTION", "List {N} actions that can be done to {concept}.", "{parent_concept} receives action of {concept}.", "an action done to";
    DesiredBy => "DESIREDBY", "List {N} entities or people that desire {concept}.", "{concept} desires {parent_concept}.", "desires";
    Creates => "CREATES", "List {N} things that {concept} creates.", "{parent_concept} creates {concept}.", "created by";
    CausedBy => "CAUSEDBY", "List {N} things that cause {concept}.", "{concept} causes {parent_concept}.", "a cause of";
    DoneBy => "DONEBY", "List {N} entities or people that can do {concept}.", "{concept} does {parent_concept}.", "can do";
    DesireCausedBy => "DESIRECAUSEDBY", "List {N} things that cause desire of {concept}.", "{concept} causes desire of {parent_concept}.", "causes desire of";
    DoneTo => "DONETO", "List {N} entities or people that {concept} can be done to.", "{parent_concept} is done to {concept}.", "a target of";
    RelatedTo => "RELATEDTO", "List {N} concepts related to {concept}.", "{concept} is related to {parent_concept}.", "related to";
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationKind {
    type Err = std::convert::Infallible;

    /// Built-in names (`TypeOf` or `TYPEOF`) map to their variant; anything
    /// else is a custom relation name. Whether it exists is the catalog's call.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(RelationKind::builtin_from_name(s).unwrap_or_else(|| RelationKind::Custom(s.to_string())))
    }
}

impl Serialize for RelationKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for RelationKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        Ok(name.parse().expect("infallible"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CatalogError {
    #[error("relation {0} is not in the catalog")]
    Unknown(String),
    #[error("relation {0} is already registered")]
    Duplicate(String),
    #[error("template for relation {relation} is missing placeholder {placeholder}")]
    MissingPlaceholder { relation: String, placeholder: &'static str },
    #[error("custom relation name {0:?} is invalid")]
    InvalidName(String),
}

/// Prompt phrasings for one relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTemplate {
    pub kind: RelationKind,
    /// Contains `{N}` and `{concept}`.
    pub list_template: String,
    /// Contains `{concept}` and `{parent_concept}`.
    pub context_template: String,
    /// Short phrase shown next to a child concept in the tree.
    pub display: String,
}

impl RelationTemplate {
    pub fn custom(
        name: &str,
        list_template: &str,
        context_template: &str,
        display: &str,
    ) -> Result<Self, CatalogError> {
        let valid_name = !name.is_empty()
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !valid_name {
            return Err(CatalogError::InvalidName(name.to_string()));
        }
        let template = RelationTemplate {
            kind: name.parse().expect("infallible"),
            list_template: list_template.to_string(),
            context_template: context_template.to_string(),
            display: display.to_string(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let checks = [
            (&self.list_template, "{N}"),
            (&self.list_template, "{concept}"),
            (&self.context_template, "{concept}"),
            (&self.context_template, "{parent_concept}"),
        ];
        for (template, placeholder) in checks {
            if !template.contains(placeholder) {
                return Err(CatalogError::MissingPlaceholder {
                    relation: self.kind.name().to_string(),
                    placeholder,
                });
            }
        }
        Ok(())
    }

    /// Renders the list instruction, e.g. "List 10 types of pedestrian.".
    pub fn render_list(&self, n: usize, concept: &str) -> String {
        substitute(&self.list_template, &[("{N}", &n.to_string()), ("{concept}", concept)])
    }

    /// Renders the list instruction with the count elided ("List some types of ...").
    pub fn render_list_unsized(&self, concept: &str) -> String {
        substitute(&self.list_template, &[("{N}", "some"), ("{concept}", concept)])
    }

    pub fn render_context(&self, concept: &str, parent_concept: &str) -> String {
        substitute(
            &self.context_template,
            &[("{concept}", concept), ("{parent_concept}", parent_concept)],
        )
    }
}

/// Single-pass placeholder substitution, so substituted text is never rescanned.
pub(crate) fn substitute(template: &str, bindings: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    'scan: while !rest.is_empty() {
        for (placeholder, value) in bindings {
            if let Some(tail) = rest.strip_prefix(placeholder) {
                out.push_str(value);
                rest = tail;
                continue 'scan;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// Ordered set of relation templates. Catalog order decides which relation
/// wins when two relations yield the same concept during one expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationCatalog {
    templates: Vec<RelationTemplate>,
}

impl Default for RelationCatalog {
    fn default() -> Self {
        Self {
            templates: builtin_templates(),
        }
    }
}

impl RelationCatalog {
    /// Built-in catalog extended with `custom` templates.
    pub fn with_custom(custom: &[RelationTemplate]) -> Result<Self, CatalogError> {
        let mut catalog = Self::default();
        for template in custom {
            catalog.register(template.clone())?;
        }
        Ok(catalog)
    }

    pub fn register(&mut self, template: RelationTemplate) -> Result<(), CatalogError> {
        template.validate()?;
        if self.templates.iter().any(|t| t.kind == template.kind) {
            return Err(CatalogError::Duplicate(template.kind.name().to_string()));
        }
        self.templates.push(template);
        Ok(())
    }

    pub fn get(&self, kind: &RelationKind) -> Result<&RelationTemplate, CatalogError> {
        self.templates
            .iter()
            .find(|t| &t.kind == kind)
            .ok_or_else(|| CatalogError::Unknown(kind.name().to_string()))
    }

    pub fn contains(&self, kind: &RelationKind) -> bool {
        self.templates.iter().any(|t| &t.kind == kind)
    }

    pub fn position(&self, kind: &RelationKind) -> Option<usize> {
        self.templates.iter().position(|t| &t.kind == kind)
    }

    pub fn templates(&self) -> &[RelationTemplate] {
        &self.templates
    }

    pub fn kinds(&self) -> impl Iterator<Item = &RelationKind> {
        self.templates.iter().map(|t| &t.kind)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Resolves `relations` against the catalog and returns them deduplicated
    /// in catalog order.
    pub fn ordered<'a>(
        &self,
        relations: impl IntoIterator<Item = &'a RelationKind>,
    ) -> Result<Vec<RelationKind>, CatalogError> {
        let mut positions = Vec::new();
        for kind in relations {
            let pos = self
                .position(kind)
                .ok_or_else(|| CatalogError::Unknown(kind.name().to_string()))?;
            positions.push(pos);
        }
        positions.sort_unstable();
        positions.dedup();
        Ok(positions
            .into_iter()
            .map(|p| self.templates[p].kind.clone())
            .collect())
    }
}
