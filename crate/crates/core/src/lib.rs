//! Executable trust-domain models.
//!
//! Configurations are written in the `.tdm` format ([`dsl`]) and assembled
//! into a [`model::TrustDomainModel`]. [`axioms`] checks a model against the
//! taxonomy's relational axioms and [`flow`] analyses its data flows.
//!
//! [`decisions`] runs requests through policy decision and enforcement points;
//! every enforcement lands in the hash-chained store of [`audit`].

pub mod audit;
pub mod axioms;
pub mod decisions;
pub mod dsl;
pub mod flow;
pub mod model;
