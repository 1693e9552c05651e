//! Runs the code listings of the guide in `book/src` as doc-tests.
//!
//! mdBook cannot test listings that depend on workspace crates, so every
//! chapter is pulled in as the documentation of an empty module and
//! `cargo test --doc` does the work. A listing that fails points at the
//! module named after its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/scenario.md")]
pub mod scenario {}

#[doc = include_str!("../../../book/src/fisher.md")]
pub mod fisher {}

#[doc = include_str!("../../../book/src/uncertainty.md")]
pub mod uncertainty {}

#[doc = include_str!("../../../book/src/allocators.md")]
pub mod allocators {}

#[doc = include_str!("../../../book/src/conic.md")]
pub mod conic {}

#[doc = include_str!("../../../book/src/montecarlo.md")]
pub mod montecarlo {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

/// Chapter files included above, in book order.
pub const CHAPTERS: [&str; 8] = [
    "introduction.md",
    "scenario.md",
    "fisher.md",
    "uncertainty.md",
    "allocators.md",
    "conic.md",
    "montecarlo.md",
    "cli.md",
];
