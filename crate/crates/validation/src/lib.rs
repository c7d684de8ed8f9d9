//! Hosts the `acceptance` test target; see `tests/acceptance.rs`.
//!
//! Run it alone with `cargo test -p ifdiv-validation --test acceptance`.
