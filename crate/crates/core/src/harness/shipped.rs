//! Cases shipped with the repository, embedded so library consumers and
//! tests can load them without touching the filesystem.

use crate::casefile::{parse_case, CaseSpec};

pub const TINY2: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/tiny2.json"));
pub const SMALL2: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/small2.json"));
pub const TRI3: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/tri3.json"));

/// Two areas, three buses each, one tie-line, no uncertainty.
pub fn tiny2() -> CaseSpec {
    parse_case(TINY2).expect("embedded case is valid")
}

/// Two areas, six buses each, two tie-lines, six uncertain coordinates.
pub fn small2() -> CaseSpec {
    parse_case(SMALL2).expect("embedded case is valid")
}

/// Three areas joined in a tie-line ring, no uncertainty; its boundary-angle
/// space is two-dimensional.
pub fn tri3() -> CaseSpec {
    parse_case(TRI3).expect("embedded case is valid")
}

/// All shipped cases with their names.
pub fn all() -> Vec<(&'static str, CaseSpec)> {
    vec![("tiny2", tiny2()), ("small2", small2()), ("tri3", tri3())]
}
