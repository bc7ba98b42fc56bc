use crate::error::Result;

use super::Scenario;

/// A shipped scenario file.
#[derive(Clone, Copy, Debug)]
pub struct CorpusEntry {
    pub file: &'static str,
    pub text: &'static str,
}

macro_rules! entries {
    ($($file:literal),* $(,)?) => {
        &[$(CorpusEntry { file: $file, text: include_str!(concat!("../../../../scenarios/", $file)) }),*]
    };
}

const FILES: &[CorpusEntry] = entries![
    "e1.toml",
    "e1_2d.toml",
    "rooftop_pair.toml",
    "partition_triple.toml",
    "maximal.toml",
    "maximal_random.toml",
    "nonbig_segment.toml",
    "mixed_2d.toml",
    "polarization_2d.toml",
    "truncation.toml",
    "scaling.toml",
    "scaling_point.toml",
    "kink.toml",
    "random_phi.toml",
    "tangent_max.toml",
    "monotone.toml",
    "oracle_1d.toml",
    "oracle_2d.toml",
];

impl CorpusEntry {
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::from_toml(self.text)
    }
}

/// The shipped scenario corpus, in a fixed order.
pub fn corpus() -> &'static [CorpusEntry] {
    FILES
}
