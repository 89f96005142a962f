pub mod engine;
pub mod grammar;
pub mod invariant;
pub mod lang;
pub mod metric;
pub mod protocol;
pub mod tree;
