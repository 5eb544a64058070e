//! The user guide, embedded chapter by chapter. The same markdown files
//! build the standalone book under `book/`; including them here makes
//! every code block in the guide a doc-test, so the examples cannot
//! drift out of sync with the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/procedures.md")]
pub mod procedures {}

#[doc = include_str!("../../../book/src/dirichlet-process.md")]
pub mod dirichlet_process {}

#[doc = include_str!("../../../book/src/power-analysis.md")]
pub mod power_analysis {}

#[doc = include_str!("../../../book/src/shrinkage-and-sample-size.md")]
pub mod shrinkage_and_sample_size {}

#[doc = include_str!("../../../book/src/file-formats.md")]
pub mod file_formats {}

#[doc = include_str!("../../../book/src/determinism.md")]
pub mod determinism {}
