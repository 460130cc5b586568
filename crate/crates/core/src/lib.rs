//! A small RoBERTa-style chemical language model and the pipeline around it.
//!
//! SMILES strings are parsed into graphs ([`molgraph`]), tokenized
//! ([`tokenize`], or rewritten as SELFIES with [`selfies`]), curated and split
//! by scaffold ([`datapipe`]), and fed to a hand-written transformer encoder
//! ([`model`]) that is pretrained with masked-LM and finetuned for binary
//! classification ([`trainer`]). [`metrics`] and [`baseline`] evaluate the
//! result; [`introspect`] exports attention maps.
//!
//! The guide in `book/` walks through each step. Its code blocks run as
//! doctests of this crate.

pub mod molgraph;
pub mod tokenize;
pub mod selfies;
pub mod datapipe;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod trainer;
pub mod baseline;
pub mod introspect;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/molecules.md")]
    mod molecules {}
    #[doc = include_str!("../../../book/src/tokenizers.md")]
    mod tokenizers {}
    #[doc = include_str!("../../../book/src/selfies.md")]
    mod selfies {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/attention.md")]
    mod attention {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
