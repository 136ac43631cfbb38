//! Acceptance suite for the epigraph workspace. Everything lives in
//! `tests/acceptance.rs`; run it with `cargo test -p epigraph-verify`.
