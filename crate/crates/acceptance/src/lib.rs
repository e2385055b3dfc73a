//! End-to-end acceptance checks for `irsbeam`; see `tests/acceptance.rs`.
