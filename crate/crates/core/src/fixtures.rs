//! Reference networks shipped with the crate.

use crate::network::{parse_network, ReactionNetwork};

pub const TOY: &str = include_str!("../fixtures/toy.rxn");
pub const REVERSIBLE: &str = include_str!("../fixtures/reversible.rxn");
pub const REVERSIBLE_MIXED: &str = include_str!("../fixtures/reversible_mixed.rxn");
pub const CYCLIC: &str = include_str!("../fixtures/cyclic.rxn");
pub const CHAIN: &str = include_str!("../fixtures/chain.rxn");

fn load(text: &str) -> ReactionNetwork {
    parse_network(text).expect("bundled fixture parses")
}

/// `A + B -> C`, initial counts 3/4/0.
pub fn toy() -> ReactionNetwork {
    load(TOY)
}

/// `A + B -> C <-> D`, initial counts 3/4/0/0.
pub fn reversible() -> ReactionNetwork {
    load(REVERSIBLE)
}

/// The reversible system started from a three-state mixture.
pub fn reversible_mixed() -> ReactionNetwork {
    load(REVERSIBLE_MIXED)
}

/// `A + B -> C -> D -> A + B`, initial counts 2/1/1/0.
pub fn cyclic() -> ReactionNetwork {
    load(CYCLIC)
}

/// `A -> B -> C`, initial counts 4/0/0.
pub fn chain() -> ReactionNetwork {
    load(CHAIN)
}

pub fn all() -> Vec<ReactionNetwork> {
    vec![toy(), reversible(), reversible_mixed(), cyclic(), chain()]
}
