//! Programming-plan detection for introductory Python submissions.

pub mod ast;
pub mod cache;
pub mod catalog;
pub mod corpus;
pub mod detector;
pub mod eval;
pub mod http;
pub mod knn;
pub mod llm;
pub mod obfuscate;
pub mod rules;
pub mod taxonomy;
