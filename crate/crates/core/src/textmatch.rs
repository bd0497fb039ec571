//! Bounded pattern matching: a small regular-expression subset and a
//! `*`-only glob.
//!
//! The regex subset is literals, character classes, `*`, `+`, and the `^`/`$`
//! anchors. No alternation, no grouping, no backreferences, no lookaround.
//! Matching is a set-based NFA simulation, linear in the input per start
//! position. Semantics follow JSON Schema `pattern`: unanchored search unless
//! anchors are written.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PatternError {
    #[error("unclosed character class starting at byte {0}")]
    UnclosedClass(usize),
    #[error("empty character class at byte {0}")]
    EmptyClass(usize),
    #[error("invalid range `{0}-{1}` in character class")]
    BadRange(char, char),
    #[error("quantifier at byte {0} has nothing to repeat")]
    DanglingQuantifier(usize),
    #[error("trailing backslash")]
    TrailingEscape,
    #[error("`{0}` is only valid at the pattern {1}")]
    MisplacedAnchor(char, &'static str),
}

#[derive(Debug, Clone, PartialEq)]
enum Matcher {
    Literal(char),
    /// Inclusive ranges; single characters are degenerate ranges.
    Class(Vec<(char, char)>),
}

impl Matcher {
    fn matches(&self, c: char) -> bool {
        match self {
            Matcher::Literal(l) => *l == c,
            Matcher::Class(ranges) => ranges.iter().any(|(lo, hi)| (*lo..=*hi).contains(&c)),
        }
    }
}

/// After compilation `+` is expanded to "one, then star", so every item is
/// either mandatory (consume exactly one char) or a star loop.
#[derive(Debug, Clone, PartialEq)]
enum Item {
    One(Matcher),
    Star(Matcher),
}

/// A compiled pattern from the bounded regex subset.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    items: Vec<Item>,
    anchored_start: bool,
    anchored_end: bool,
}

impl Pattern {
    pub fn compile(source: &str) -> Result<Pattern, PatternError> {
        let chars: Vec<char> = source.chars().collect();
        let mut i = 0;
        let anchored_start = chars.first() == Some(&'^');
        if anchored_start {
            i = 1;
        }
        let mut items: Vec<Item> = Vec::new();
        let mut anchored_end = false;
        while i < chars.len() {
            let c = chars[i];
            match c {
                '^' => return Err(PatternError::MisplacedAnchor('^', "start")),
                '$' => {
                    if i + 1 != chars.len() {
                        return Err(PatternError::MisplacedAnchor('$', "end"));
                    }
                    anchored_end = true;
                    i += 1;
                }
                '*' | '+' => return Err(PatternError::DanglingQuantifier(i)),
                '[' => {
                    let (matcher, next) = parse_class(&chars, i)?;
                    i = next;
                    i = push_with_quantifier(&mut items, matcher, &chars, i);
                }
                '\\' => {
                    let lit = *chars.get(i + 1).ok_or(PatternError::TrailingEscape)?;
                    i += 2;
                    i = push_with_quantifier(&mut items, Matcher::Literal(lit), &chars, i);
                }
                _ => {
                    i += 1;
                    i = push_with_quantifier(&mut items, Matcher::Literal(c), &chars, i);
                }
            }
        }
        Ok(Pattern {
            items,
            anchored_start,
            anchored_end,
        })
    }

    /// Search semantics: true if any substring (resp. prefix/suffix/whole
    /// string under anchors) matches.
    pub fn is_match(&self, text: &str) -> bool {
        let chars: Vec<char> = text.chars().collect();
        if self.anchored_start {
            self.match_from(&chars, 0)
        } else {
            (0..=chars.len()).any(|p| self.match_from(&chars, p))
        }
    }

    fn match_from(&self, text: &[char], start: usize) -> bool {
        let accept = self.items.len();
        let mut current = self.closure(vec![0]);
        if !self.anchored_end && current.contains(&accept) {
            return true;
        }
        for &c in &text[start..] {
            let mut next: Vec<usize> = Vec::new();
            for &s in &current {
                if s == accept {
                    continue;
                }
                match &self.items[s] {
                    Item::One(m) => {
                        if m.matches(c) && !next.contains(&(s + 1)) {
                            next.push(s + 1);
                        }
                    }
                    Item::Star(m) => {
                        if m.matches(c) && !next.contains(&s) {
                            next.push(s);
                        }
                    }
                }
            }
            current = self.closure(next);
            if current.is_empty() {
                return false;
            }
            if !self.anchored_end && current.contains(&accept) {
                return true;
            }
        }
        current.contains(&accept)
    }

    /// Epsilon closure: star items may be skipped without consuming input.
    fn closure(&self, mut set: Vec<usize>) -> Vec<usize> {
        let mut i = 0;
        while i < set.len() {
            let s = set[i];
            if s < self.items.len() {
                if let Item::Star(_) = self.items[s] {
                    if !set.contains(&(s + 1)) {
                        set.push(s + 1);
                    }
                }
            }
            i += 1;
        }
        set
    }
}

fn push_with_quantifier(items: &mut Vec<Item>, m: Matcher, chars: &[char], i: usize) -> usize {
    match chars.get(i) {
        Some('*') => {
            items.push(Item::Star(m));
            i + 1
        }
        Some('+') => {
            items.push(Item::One(m.clone()));
            items.push(Item::Star(m));
            i + 1
        }
        _ => {
            items.push(Item::One(m));
            i
        }
    }
}

fn parse_class(chars: &[char], open: usize) -> Result<(Matcher, usize), PatternError> {
    let mut ranges: Vec<(char, char)> = Vec::new();
    let mut i = open + 1;
    loop {
        let c = *chars.get(i).ok_or(PatternError::UnclosedClass(open))?;
        if c == ']' {
            if ranges.is_empty() {
                return Err(PatternError::EmptyClass(open));
            }
            return Ok((Matcher::Class(ranges), i + 1));
        }
        let lo = if c == '\\' {
            i += 1;
            *chars.get(i).ok_or(PatternError::TrailingEscape)?
        } else {
            c
        };
        i += 1;
        // A `-` that is followed by something other than `]` forms a range.
        if chars.get(i) == Some(&'-') && chars.get(i + 1).is_some_and(|n| *n != ']') {
            i += 1;
            let mut hi = *chars.get(i).ok_or(PatternError::UnclosedClass(open))?;
            if hi == '\\' {
                i += 1;
                hi = *chars.get(i).ok_or(PatternError::TrailingEscape)?;
            }
            i += 1;
            if lo > hi {
                return Err(PatternError::BadRange(lo, hi));
            }
            ranges.push((lo, hi));
        } else {
            ranges.push((lo, lo));
        }
    }
}

/// Glob with `*` as the only wildcard, matching any run of characters.
/// Used for file-name filters and test selectors.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let segments: Vec<&str> = pattern.split('*').collect();
    if segments.len() == 1 {
        return pattern == text;
    }
    let mut rest = text;
    let first = segments[0];
    if !rest.starts_with(first) {
        return false;
    }
    rest = &rest[first.len()..];
    let last = segments[segments.len() - 1];
    for seg in &segments[1..segments.len() - 1] {
        if seg.is_empty() {
            continue;
        }
        match rest.find(seg) {
            Some(pos) => rest = &rest[pos + seg.len()..],
            None => return false,
        }
    }
    rest.len() >= last.len() && rest.ends_with(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(p: &str, t: &str) -> bool {
        Pattern::compile(p).unwrap().is_match(t)
    }

    #[test]
    fn literal_search_is_unanchored() {
        assert!(m("abc", "xxabcxx"));
        assert!(!m("abc", "ab"));
    }

    #[test]
    fn anchors() {
        assert!(m("^abc$", "abc"));
        assert!(!m("^abc$", "abcx"));
        assert!(!m("^abc$", "xabc"));
        assert!(m("^ab", "abz"));
        assert!(m("bz$", "abz"));
    }

    #[test]
    fn classes_and_quantifiers() {
        assert!(m("^[a-z]+$", "hello"));
        assert!(!m("^[a-z]+$", "Hello"));
        assert!(m("^[a-z][a-z0-9_]*$", "a_9"));
        assert!(m("^a*b$", "b"));
        assert!(!m("^a+b$", "b"));
        assert!(m("^a+b$", "aaab"));
    }

    #[test]
    fn iso_timestamp_shape() {
        let p = "^[0-9][0-9][0-9][0-9]-[0-9][0-9]-[0-9][0-9]T[0-9][0-9]:[0-9][0-9]:[0-9][0-9]Z$";
        assert!(m(p, "2025-03-14T09:30:00Z"));
        assert!(!m(p, "2025-03-14 09:30:00"));
        assert!(!m(p, "2025-3-14T09:30:00Z"));
    }

    #[test]
    fn escaped_metacharacters() {
        assert!(m("^a\\*b$", "a*b"));
        assert!(!m("^a\\*b$", "aab"));
        assert!(m("^[\\]]+$", "]]"));
    }

    #[test]
    fn compile_errors() {
        assert_eq!(
            Pattern::compile("*a").unwrap_err(),
            PatternError::DanglingQuantifier(0)
        );
        assert!(matches!(
            Pattern::compile("[abc").unwrap_err(),
            PatternError::UnclosedClass(0)
        ));
        assert!(matches!(
            Pattern::compile("[]").unwrap_err(),
            PatternError::EmptyClass(0)
        ));
        assert!(matches!(
            Pattern::compile("a$b").unwrap_err(),
            PatternError::MisplacedAnchor('$', _)
        ));
        assert!(matches!(
            Pattern::compile("[z-a]").unwrap_err(),
            PatternError::BadRange('z', 'a')
        ));
    }

    #[test]
    fn linear_time_on_pathological_input() {
        // Classic backtracking blowup case; the NFA simulation stays linear.
        let p = Pattern::compile("^a*a*a*a*a*a*a*a*b$").unwrap();
        let text = "a".repeat(2000);
        assert!(!p.is_match(&text));
    }

    #[test]
    fn globs() {
        assert!(glob_match("*.fn", "pricing.fn"));
        assert!(!glob_match("*.fn", "pricing.tests"));
        assert!(glob_match("*", "anything"));
        assert!(glob_match("t*_scale*", "t1_scale_edge"));
        assert!(glob_match("exact", "exact"));
        assert!(!glob_match("exact", "exact2"));
        assert!(glob_match("a*b*c", "aXXbYYc"));
        assert!(!glob_match("a*b*c", "acb"));
    }
}
