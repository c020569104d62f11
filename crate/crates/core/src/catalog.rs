//! Frozen catalog of per-variable feature slots.
//!
//! The same table is committed as `data/slot_catalog.tsv` so analyses can cite
//! stable slot ids; a test keeps the two in sync.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const CATALOG_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ClinicalCategory {
    Lab,
    Med,
    Demographic,
    Procedure,
    Device,
}

impl ClinicalCategory {
    pub const ALL: [ClinicalCategory; 5] = [
        ClinicalCategory::Lab,
        ClinicalCategory::Med,
        ClinicalCategory::Demographic,
        ClinicalCategory::Procedure,
        ClinicalCategory::Device,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ClinicalCategory::Lab => "LAB",
            ClinicalCategory::Med => "MED",
            ClinicalCategory::Demographic => "DEMOGRAPHIC",
            ClinicalCategory::Procedure => "PROCEDURE",
            ClinicalCategory::Device => "DEVICE",
        }
    }
}

impl fmt::Display for ClinicalCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ClinicalCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown clinical category `{s}`"))
    }
}

/// Which family of slots a variable expands into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotFamily {
    ContinuousLab,
    CategoricalLab,
    Medication,
    Procedure,
    Device,
    Demographic,
}

impl SlotFamily {
    pub fn clinical(self) -> ClinicalCategory {
        match self {
            SlotFamily::ContinuousLab | SlotFamily::CategoricalLab => ClinicalCategory::Lab,
            SlotFamily::Medication => ClinicalCategory::Med,
            SlotFamily::Procedure => ClinicalCategory::Procedure,
            SlotFamily::Device => ClinicalCategory::Device,
            SlotFamily::Demographic => ClinicalCategory::Demographic,
        }
    }

    pub fn slots(self) -> &'static [SlotDef] {
        match self {
            SlotFamily::ContinuousLab => CONTINUOUS_LAB_SLOTS,
            SlotFamily::CategoricalLab => CATEGORICAL_LAB_SLOTS,
            SlotFamily::Medication => MEDICATION_SLOTS,
            SlotFamily::Procedure => PROCEDURE_SLOTS,
            SlotFamily::Device => DEVICE_SLOTS,
            SlotFamily::Demographic => DEMOGRAPHIC_SLOTS,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            SlotFamily::ContinuousLab => "continuous_lab",
            SlotFamily::CategoricalLab => "categorical_lab",
            SlotFamily::Medication => "medication",
            SlotFamily::Procedure => "procedure",
            SlotFamily::Device => "device",
            SlotFamily::Demographic => "demographic",
        }
    }

    pub const ALL: [SlotFamily; 6] = [
        SlotFamily::ContinuousLab,
        SlotFamily::CategoricalLab,
        SlotFamily::Medication,
        SlotFamily::Procedure,
        SlotFamily::Device,
        SlotFamily::Demographic,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotDef {
    pub id: &'static str,
    pub name: &'static str,
    /// Duration slots are in hours.
    pub unit: &'static str,
}

const fn slot(id: &'static str, name: &'static str, unit: &'static str) -> SlotDef {
    SlotDef { id, name, unit }
}

pub const CONTINUOUS_LAB_SLOTS: &[SlotDef] = &[
    slot("F01", "last value", "value"),
    slot("F02", "second last value", "value"),
    slot("F03", "first value", "value"),
    slot("F04", "nadir value", "value"),
    slot("F05", "horizon value", "value"),
    slot("F06", "last difference", "value"),
    slot("F07", "last percentage change", "ratio"),
    slot("F08", "last slope", "value/hour"),
    slot("F09", "drop from baseline", "value"),
    slot("F10", "percentage drop from baseline", "ratio"),
    slot("F11", "baseline slope", "value/hour"),
    slot("F12", "nadir difference", "value"),
    slot("F13", "nadir percentage difference", "ratio"),
    slot("F14", "nadir slope", "value/hour"),
    slot("F15", "horizon difference", "value"),
    slot("F16", "horizon percentage difference", "ratio"),
    slot("F17", "horizon slope", "value/hour"),
    slot("F18", "time since last result", "hours"),
    slot("F19", "time since last order", "hours"),
    slot("F20", "time since first order", "hours"),
    slot("F21", "time since nadir", "hours"),
    slot("F22", "time since horizon", "hours"),
    slot("F23", "order pending", "flag"),
    slot("F24", "value known", "flag"),
    slot("F25", "trend known", "flag"),
    slot("F26", "increasing", "flag"),
    slot("F27", "decreasing", "flag"),
    slot("F28", "24h result count", "count"),
    slot("F29", "24h average", "value"),
    slot("F30", "24h minimum", "value"),
    slot("F31", "24h maximum", "value"),
    slot("F32", "24h range", "value"),
    slot("F33", "24h difference", "value"),
    slot("F34", "24h slope", "value/hour"),
    slot("F35", "total result count", "count"),
    slot("F36", "total mean", "value"),
    slot("F37", "total standard deviation", "value"),
    slot("F38", "total range", "value"),
    slot("F39", "time since first result", "hours"),
    slot("F40", "measurement rate", "results/day"),
];

pub const CATEGORICAL_LAB_SLOTS: &[SlotDef] = &[
    slot("C01", "last value", "code"),
    slot("C02", "second last value", "code"),
    slot("C03", "first value", "code"),
    slot("C04", "time since last order", "hours"),
    slot("C05", "order pending", "flag"),
    slot("C06", "value known", "flag"),
    slot("C07", "trend known", "flag"),
];

pub const MEDICATION_SLOTS: &[SlotDef] = &[
    slot("M01", "currently on", "flag"),
    slot("M02", "time since last on", "hours"),
    slot("M03", "time since first on", "hours"),
    slot("M04", "time since last status change", "hours"),
];

pub const PROCEDURE_SLOTS: &[SlotDef] = &[
    slot("P01", "time since last done", "hours"),
    slot("P02", "time since first done", "hours"),
    slot("P03", "done in last 24h", "flag"),
    slot("P04", "ever done", "flag"),
];

pub const DEVICE_SLOTS: &[SlotDef] = &[slot("D01", "currently used", "flag")];

pub const DEMOGRAPHIC_SLOTS: &[SlotDef] = &[
    slot("AGE", "age", "years"),
    slot("SEX", "sex", "code"),
    slot("RACE", "race", "code"),
];

/// Looks up a slot by id across every family.
pub fn slot_by_id(id: &str) -> Option<(SlotFamily, &'static SlotDef)> {
    SlotFamily::ALL
        .into_iter()
        .find_map(|fam| fam.slots().iter().find(|s| s.id == id).map(|s| (fam, s)))
}

/// Tab-separated rendering of the catalog (family, slot id, name, unit).
pub fn manifest_tsv() -> String {
    let mut out = String::from("family\tslot\tname\tunit\n");
    for fam in SlotFamily::ALL {
        for s in fam.slots() {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", fam.code(), s.id, s.name, s.unit));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes() {
        assert_eq!(CONTINUOUS_LAB_SLOTS.len(), 40);
        assert_eq!(CATEGORICAL_LAB_SLOTS.len(), 7);
        assert_eq!(MEDICATION_SLOTS.len(), 4);
        assert_eq!(PROCEDURE_SLOTS.len(), 4);
        assert_eq!(DEVICE_SLOTS.len(), 1);
        assert_eq!(DEMOGRAPHIC_SLOTS.len(), 3);
    }

    #[test]
    fn slot_ids_are_unique_and_ordered() {
        let ids: Vec<_> = SlotFamily::ALL.iter().flat_map(|f| f.slots()).map(|s| s.id).collect();
        let mut dedup = ids.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), ids.len());
        for fam in SlotFamily::ALL {
            if fam != SlotFamily::Demographic {
                assert!(fam.slots().windows(2).all(|w| w[0].id < w[1].id));
            }
        }
    }

    #[test]
    fn committed_manifest_matches() {
        let committed = include_str!("../data/slot_catalog.tsv");
        assert_eq!(committed, manifest_tsv());
    }

    #[test]
    fn lookup() {
        let (fam, s) = slot_by_id("F19").unwrap();
        assert_eq!(fam, SlotFamily::ContinuousLab);
        assert_eq!(s.name, "time since last order");
        assert!(slot_by_id("F41").is_none());
    }
}
