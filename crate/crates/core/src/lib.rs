//! Learned claim-to-query rewriting.
//!
//! A claim is edited one token at a time (swap or add a synonym, move a verb
//! to present tense, remove a word) and every edit is scored by how well an
//! opaque search endpoint ranks the claim's judged documents. `trajgen`
//! searches edit sequences offline, `policy` learns to reproduce them from
//! return-conditioned context, and `evalharness` compares the result against
//! the unedited claim and random edits.
pub mod lexedit;
pub mod searchenv;
pub mod ingest;
pub mod trajgen;
pub mod policy;
pub mod evalharness;
pub mod apiservice;
