//! Sets of Unicode scalar values as sorted, disjoint, non-adjacent ranges.

use std::fmt;

const MAX_CHAR: u32 = 0x10FFFF;

/// A set of characters, stored as inclusive `u32` ranges.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CharSet {
    ranges: Vec<(u32, u32)>,
}

impl CharSet {
    pub fn empty() -> Self {
        CharSet { ranges: Vec::new() }
    }

    pub fn any() -> Self {
        CharSet {
            ranges: vec![(0, MAX_CHAR)],
        }
    }

    pub fn single(c: char) -> Self {
        CharSet {
            ranges: vec![(c as u32, c as u32)],
        }
    }

    pub fn range(lo: char, hi: char) -> Self {
        let (lo, hi) = (lo as u32, hi as u32);
        if lo > hi {
            return CharSet::empty();
        }
        CharSet {
            ranges: vec![(lo, hi)],
        }
    }

    pub fn from_ranges(iter: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut ranges: Vec<(u32, u32)> = iter.into_iter().filter(|(a, b)| a <= b).collect();
        ranges.sort_unstable();
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match merged.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        CharSet { ranges: merged }
    }

    /// Characters allowed in element text and attribute values: everything but `<` and `>`.
    pub fn text() -> Self {
        CharSet::any()
            .difference(&CharSet::single('<'))
            .difference(&CharSet::single('>'))
    }

    pub fn ranges(&self) -> &[(u32, u32)] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.contains_u32(c as u32)
    }

    pub fn union(&self, other: &CharSet) -> CharSet {
        CharSet::from_ranges(self.ranges.iter().chain(other.ranges.iter()).copied())
    }

    pub fn complement(&self) -> CharSet {
        let mut out = Vec::new();
        let mut next = 0u32;
        for &(lo, hi) in &self.ranges {
            if lo > next {
                out.push((next, lo - 1));
            }
            next = hi.saturating_add(1);
        }
        if next <= MAX_CHAR {
            out.push((next, MAX_CHAR));
        }
        CharSet { ranges: out }
    }

    pub fn intersect(&self, other: &CharSet) -> CharSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ranges.len() && j < other.ranges.len() {
            let (a0, a1) = self.ranges[i];
            let (b0, b1) = other.ranges[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        CharSet { ranges: out }
    }

    pub fn difference(&self, other: &CharSet) -> CharSet {
        self.intersect(&other.complement())
    }

    /// Some member of the set, preferring printable ASCII.
    pub fn sample(&self) -> Option<char> {
        for &(lo, hi) in &self.ranges {
            for c in lo.max(0x20)..=hi.min(0x7e) {
                if let Some(ch) = char::from_u32(c) {
                    return Some(ch);
                }
            }
        }
        self.ranges
            .iter()
            .flat_map(|&(lo, hi)| (lo..=hi.min(lo + 0x1000)).filter_map(char::from_u32))
            .next()
    }
}

fn fmt_char(f: &mut fmt::Formatter<'_>, c: u32) -> fmt::Result {
    match char::from_u32(c) {
        Some(ch) if !ch.is_control() && ch != '\\' && ch != ']' && ch != '-' && ch != '^' => {
            write!(f, "{ch}")
        }
        _ => write!(f, "\\u{{{c:x}}}"),
    }
}

impl fmt::Debug for CharSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for &(lo, hi) in &self.ranges {
            fmt_char(f, lo)?;
            if hi != lo {
                write!(f, "-")?;
                fmt_char(f, hi)?;
            }
        }
        write!(f, "]")
    }
}

/// Splits the union of `sets` into disjoint intervals such that every input set
/// is a union of whole intervals.
pub(crate) fn partition(sets: &[&CharSet]) -> Vec<(u32, u32)> {
    let mut bounds: Vec<u32> = Vec::new();
    for s in sets {
        for &(lo, hi) in s.ranges() {
            bounds.push(lo);
            bounds.push(hi + 1);
        }
    }
    bounds.sort_unstable();
    bounds.dedup();
    let covered = sets.iter().fold(CharSet::empty(), |acc, s| acc.union(s));
    let mut out = Vec::new();
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1] - 1);
        if covered.contains_u32(lo) {
            out.push((lo, hi));
        }
    }
    out
}

impl CharSet {
    pub(crate) fn contains_u32(&self, c: u32) -> bool {
        let idx = self.ranges.partition_point(|&(_, hi)| hi < c);
        self.ranges.get(idx).is_some_and(|&(lo, _)| lo <= c)
    }
}
