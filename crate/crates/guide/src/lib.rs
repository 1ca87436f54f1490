//! Chapters of the guide under `book/src`, compiled here so their snippets
//! run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/design.md")]
pub mod design {}

#[doc = include_str!("../../../book/src/assignment.md")]
pub mod assignment {}

#[doc = include_str!("../../../book/src/frontier.md")]
pub mod frontier {}

#[doc = include_str!("../../../book/src/power.md")]
pub mod power {}

#[doc = include_str!("../../../book/src/estimands.md")]
pub mod estimands {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
