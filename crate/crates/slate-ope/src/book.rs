// The mdbook guide's code blocks double as doctests: each chapter is
// attached to an empty module here, so `cargo test --doc` compiles and
// runs every snippet and the book can never drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/slates-and-policies.md")]
pub mod slates_and_policies {}

#[doc = include_str!("../../../book/src/pseudoinverse-estimators.md")]
pub mod pseudoinverse_estimators {}

#[doc = include_str!("../../../book/src/control-variates.md")]
pub mod control_variates {}

#[doc = include_str!("../../../book/src/cross-fitting.md")]
pub mod cross_fitting {}

#[doc = include_str!("../../../book/src/enumeration-oracle.md")]
pub mod enumeration_oracle {}

#[doc = include_str!("../../../book/src/simulation-and-benchmarks.md")]
pub mod simulation_and_benchmarks {}

#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
