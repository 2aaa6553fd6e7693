//! Exact symbolic engine for large-N trace calculus.
//!
//! The crate models invariant operators of a matrix model valued in a
//! finite-dimensional cyclic graded algebra: products of cyclic trace words
//! in derivatives of matrix fields, with coefficients polynomial in N and
//! hbar. On top of that it provides
//!
//! * diagram composition in the two-color word category (`deligne_diagrams`),
//! * Wick-contraction operator product expansions with trace surgery and
//!   loop counting (`ope_engine`),
//! * the BRST field and differential attached to a cyclic algebra spec,
//!   Hochschild cochains and the classical-limit dictionary (`brst_cyclic`),
//! * an expression parser and CLI front end (`cli`).
//!
//! All arithmetic is exact; there is no floating point anywhere.

pub mod scalars;

pub mod deligne_diagrams;

pub mod operator_algebra;

pub mod ope_engine;

pub mod brst_cyclic;

pub mod cli;
