//! Character sets, regular expressions and finite automata used for content
//! patterns and grammar terminals.

pub mod automaton;
pub mod charset;
pub mod regex;

pub use automaton::{CapExceeded, Dfa};
pub use charset::CharSet;
pub use regex::{Flavor, Regex, RegexError};
