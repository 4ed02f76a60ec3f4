//! Holds the `acceptance` test target, which checks the `lgg` crate end to
//! end and prints one PASS/FAIL line per criterion. Run it with
//! `cargo test -p lgg-acceptance`.
