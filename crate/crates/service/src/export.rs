//! Export of the selected concepts.

use serde::{Deserialize, Serialize};
use weaver_core::{NodeId, RelationKind};

use crate::error::ServiceError;
use crate::session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ExportFormat {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(ServiceError::Validation(format!(
                "unknown export format {other:?}; expected json or csv"
            ))),
        }
    }
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            Self::Json => "application/json",
            Self::Csv => "text/csv; charset=utf-8",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub id: NodeId,
    pub label: String,
    /// Relation to the previous step; `None` for the seed.
    pub relation: Option<RelationKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedConcept {
    pub id: NodeId,
    pub label: String,
    pub relation: Option<RelationKind>,
    pub depth: usize,
    /// Seed to concept, inclusive.
    pub path: Vec<PathStep>,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub session_id: String,
    pub seed: String,
    pub concepts: Vec<ExportedConcept>,
}

const CSV_HEADER: [&str; 6] = ["id", "label", "relation", "depth", "path", "suggestions"];

impl ExportBundle {
    pub(crate) fn from_session(session: &Session) -> Self {
        let kb = &session.kb;
        let concepts = kb
            .selected()
            .into_iter()
            .map(|id| {
                let node = kb.node(id).expect("selected nodes exist");
                let path = kb
                    .path(id)
                    .expect("selected nodes exist")
                    .into_iter()
                    .map(|p| {
                        let step = kb.node(p).expect("path nodes exist");
                        PathStep {
                            id: p,
                            label: step.label().to_string(),
                            relation: step.relation.clone(),
                        }
                    })
                    .collect();
                ExportedConcept {
                    id,
                    label: node.label().to_string(),
                    relation: node.relation.clone(),
                    depth: node.depth,
                    path,
                    suggestions: session.suggestions.get(&id).cloned().unwrap_or_default(),
                }
            })
            .collect();
        Self {
            session_id: session.id.clone(),
            seed: kb.seed().label().to_string(),
            concepts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundles serialize")
    }

    /// One row per concept. `path` and `suggestions` hold JSON arrays so the
    /// CSV carries exactly the same data as the JSON form.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for c in &self.concepts {
            w.write_record([
                c.id.to_string(),
                c.label.clone(),
                c.relation.as_ref().map(|r| r.name().to_string()).unwrap_or_default(),
                c.depth.to_string(),
                serde_json::to_string(&c.path).expect("paths serialize"),
                serde_json::to_string(&c.suggestions).expect("strings serialize"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// Reads rows written by [`to_csv`](Self::to_csv). Session id and seed
    /// are not part of the CSV and must be supplied.
    pub fn concepts_from_csv(text: &str) -> Result<Vec<ExportedConcept>, String> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| e.to_string())?;
        if header.iter().ne(CSV_HEADER) {
            return Err(format!("unexpected header {header:?}"));
        }
        r.records()
            .map(|row| {
                let row = row.map_err(|e| e.to_string())?;
                let field = |i: usize| row.get(i).ok_or_else(|| format!("row has {} fields", row.len()));
                let relation = match field(2)? {
                    "" => None,
                    name => Some(name.parse().map_err(|e| format!("{e:?}"))?),
                };
                Ok(ExportedConcept {
                    id: field(0)?.parse().map_err(|e| format!("{e}"))?,
                    label: field(1)?.to_string(),
                    relation,
                    depth: field(3)?.parse().map_err(|e| format!("{e}"))?,
                    path: serde_json::from_str(field(4)?).map_err(|e| e.to_string())?,
                    suggestions: serde_json::from_str(field(5)?).map_err(|e| e.to_string())?,
                })
            })
            .collect()
    }

    pub fn render(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Json => self.to_json(),
            ExportFormat::Csv => self.to_csv(),
        }
    }
}
