//! Parameter sets shipped with the binary.

use anyhow::{bail, Result};

use crate::config::{parse_document, ConfigDocument};

const DESIGN: &str = include_str!("../data/acc_design.json");
const SCENARIOS: [&str; 3] = [
    include_str!("../data/scenario1.json"),
    include_str!("../data/scenario2.json"),
    include_str!("../data/scenario3.json"),
];

/// Names accepted by `--builtin`.
pub const NAMES: [&str; 4] = ["acc", "scenario1", "scenario2", "scenario3"];

/// Cruise-control design point used for gain synthesis.
pub fn design() -> Result<ConfigDocument> {
    parse_document(DESIGN, "builtin:acc")
}

/// Cruise-control scenario 1, 2 or 3.
pub fn scenario(id: u32) -> Result<ConfigDocument> {
    match id {
        1..=3 => parse_document(SCENARIOS[id as usize - 1], &format!("builtin:scenario{id}")),
        _ => bail!("unknown scenario {id} (expected 1, 2 or 3)"),
    }
}

pub fn by_name(name: &str) -> Result<ConfigDocument> {
    match name {
        "acc" => design(),
        "scenario1" => scenario(1),
        "scenario2" => scenario(2),
        "scenario3" => scenario(3),
        other => bail!(
            "unknown builtin `{other}` (expected one of {})",
            NAMES.join(", ")
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for name in NAMES {
            let doc = by_name(name).unwrap();
            doc.build_model().unwrap();
        }
    }
}
