//! Best-worst scaling for fine-grained sentiment lexicons.
//!
//! The crate covers the whole path from a term list to an analysis of
//! valence shifters:
//!
//! - [`design`] builds balanced 4-tuple annotation designs,
//! - [`scoring`] turns best/worst responses into scores and measures
//!   annotation quality,
//! - [`lpd`] estimates the least perceptible difference in sentiment,
//! - [`composition`] compares phrases such as `not good` with their
//!   content words,
//! - [`sim`] produces synthetic responses from latent scores,
//! - [`campaign`] is the durable state behind the annotation service.

pub mod campaign;
pub mod composition;
pub mod design;
pub mod error;
pub mod lexicon;
pub mod lpd;
pub mod response;
pub mod rng;
pub mod scoring;
pub mod sim;
pub mod stats;

#[cfg(test)]
mod end_to_end;

pub use design::{generate_design, validate_design, DesignConfig, DesignReport, Tuple4};
pub use error::{Error, Result};
pub use lexicon::{
    decompose, load_lexicon, load_modifier_inventory, load_terms, save_lexicon, ModifierCategory,
    ModifierEntry, ModifierInventory, PhraseDecomposition, ScoredLexicon, Term, TermId,
};
pub use response::{GoldKey, Response};
