//! The predator models shipped with the crate.

use crate::ingest;
use crate::model::SBSystem;

pub const PREDATOR_S0: &str = include_str!("../models/predator_s0.sbs");
pub const PREDATOR_S1: &str = include_str!("../models/predator_s1.sbs");

/// Structure allowing hand-over in both directions: weakly but not strongly adaptable.
pub fn predator_s0() -> SBSystem {
    ingest::load(PREDATOR_S0).expect("bundled model parses")
}

/// Structure with a one-way hand-over: strongly adaptable.
pub fn predator_s1() -> SBSystem {
    ingest::load(PREDATOR_S1).expect("bundled model parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_models_load_and_share_behaviour() {
        let (s0, s1) = (predator_s0(), predator_s1());
        assert_eq!(s0.behaviour(), s1.behaviour());
        assert_eq!(s0.observation(), s1.observation());
        assert_eq!(s0.structure().len(), 3);
        assert_eq!(s0.structure().transitions().len(), 4);
        assert_eq!(s1.structure().transitions().len(), 2);
        assert!(s0.check_well_formed().is_ok());
        assert!(s1.check_well_formed().is_ok());
    }
}
