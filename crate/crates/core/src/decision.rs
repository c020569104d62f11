use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    LabOrder,
    MedOrder,
}

impl DecisionKind {
    pub fn code(self) -> &'static str {
        match self {
            DecisionKind::LabOrder => "lab_order",
            DecisionKind::MedOrder => "med_order",
        }
    }
}

/// A next-24h order decision, written `lab_order:GLU` or `med_order:HEPARIN`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DecisionId {
    pub kind: DecisionKind,
    pub variable_id: String,
}

impl DecisionId {
    pub fn lab(id: impl Into<String>) -> Self {
        DecisionId { kind: DecisionKind::LabOrder, variable_id: id.into() }
    }

    pub fn med(id: impl Into<String>) -> Self {
        DecisionId { kind: DecisionKind::MedOrder, variable_id: id.into() }
    }
}

impl fmt::Display for DecisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.code(), self.variable_id)
    }
}

impl FromStr for DecisionId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, var) = s
            .split_once(':')
            .ok_or_else(|| format!("decision `{s}` must look like lab_order:ID or med_order:ID"))?;
        let kind = match kind {
            "lab_order" => DecisionKind::LabOrder,
            "med_order" => DecisionKind::MedOrder,
            other => return Err(format!("unknown decision kind `{other}`")),
        };
        if var.is_empty() {
            return Err(format!("decision `{s}` has an empty variable id"));
        }
        Ok(DecisionId { kind, variable_id: var.to_string() })
    }
}

impl Serialize for DecisionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DecisionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
