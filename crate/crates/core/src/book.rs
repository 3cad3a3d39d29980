#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/estimators.md")]
mod estimators {}
#[doc = include_str!("../../../book/src/risk.md")]
mod risk {}
#[doc = include_str!("../../../book/src/selection.md")]
mod selection {}
#[doc = include_str!("../../../book/src/simulation.md")]
mod simulation {}
#[doc = include_str!("../../../book/src/diagnostics.md")]
mod diagnostics {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
