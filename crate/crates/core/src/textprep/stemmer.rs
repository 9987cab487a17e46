//! Table-driven Porter suffix stripper.
//!
//! The rules live in `data/stemmer_rules.tsv` (one rule per line: step,
//! suffix, replacement, condition, follow-up step). Within a step the first
//! rule whose suffix matches decides the outcome; further rules are tried only
//! while they share that same suffix, and the step ends as soon as one of them
//! fires or they are exhausted.

use crate::error::{Error, Result};

pub(crate) const BUNDLED_RULES: &str = include_str!("../../data/stemmer_rules.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AtomKind {
    MeasureGt(usize),
    MeasureEq(usize),
    HasVowel,
    DoubleConsonant,
    Cvc,
    EndsWith(char),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Atom {
    negated: bool,
    kind: AtomKind,
}

/// Conjunction of disjunctions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Condition(Vec<Vec<Atom>>);

#[derive(Debug, Clone, PartialEq, Eq)]
enum Replacement {
    Literal(Vec<char>),
    DropLast,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rule {
    suffix: Vec<char>,
    replacement: Replacement,
    condition: Condition,
    then: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Step {
    name: String,
    rules: Vec<Rule>,
}

/// A Porter-style stemmer loaded from a rule table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stemmer {
    steps: Vec<Step>,
    sequence: Vec<usize>,
}

impl Default for Stemmer {
    fn default() -> Self {
        Stemmer::from_tsv(BUNDLED_RULES).expect("bundled stemmer table is valid")
    }
}

fn table_err(reason: impl Into<String>) -> Error {
    Error::DataTable {
        name: "stemmer_rules.tsv".into(),
        reason: reason.into(),
    }
}

fn parse_atom(s: &str, line: usize) -> Result<Atom> {
    let (negated, body) = match s.strip_prefix('!') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let kind = if let Some(n) = body.strip_prefix("m>") {
        AtomKind::MeasureGt(n.parse().map_err(|_| table_err(format!("line {line}: bad measure {s:?}")))?)
    } else if let Some(n) = body.strip_prefix("m=") {
        AtomKind::MeasureEq(n.parse().map_err(|_| table_err(format!("line {line}: bad measure {s:?}")))?)
    } else {
        match body {
            "*v*" => AtomKind::HasVowel,
            "*d" => AtomKind::DoubleConsonant,
            "*o" => AtomKind::Cvc,
            _ => {
                let mut chars = body.chars();
                match (chars.next(), chars.next(), chars.next()) {
                    (Some('*'), Some(c), None) if c.is_ascii_uppercase() => {
                        AtomKind::EndsWith(c.to_ascii_lowercase())
                    }
                    _ => return Err(table_err(format!("line {line}: unknown condition atom {s:?}"))),
                }
            }
        }
    };
    Ok(Atom { negated, kind })
}

fn parse_condition(s: &str, line: usize) -> Result<Condition> {
    if s == "-" {
        return Ok(Condition::default());
    }
    let clauses = s
        .split('&')
        .map(|clause| clause.split('|').map(|a| parse_atom(a, line)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(Condition(clauses))
}

fn field(s: &str) -> &str {
    if s == "-" {
        ""
    } else {
        s
    }
}

impl Stemmer {
    /// Parses a rule table. Steps run in order of first appearance, except
    /// those only reachable as another rule's follow-up.
    pub fn from_tsv(src: &str) -> Result<Stemmer> {
        let mut steps: Vec<Step> = Vec::new();
        let mut pending_then: Vec<(usize, usize, String)> = Vec::new();
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 5 {
                return Err(table_err(format!("line {line}: expected 5 tab-separated columns")));
            }
            let step_idx = match steps.iter().position(|s| s.name == cols[0]) {
                Some(i) => i,
                None => {
                    steps.push(Step {
                        name: cols[0].to_owned(),
                        rules: Vec::new(),
                    });
                    steps.len() - 1
                }
            };
            let replacement = match cols[2] {
                "~" => Replacement::DropLast,
                r => Replacement::Literal(field(r).chars().collect()),
            };
            let rule = Rule {
                suffix: field(cols[1]).chars().collect(),
                replacement,
                condition: parse_condition(cols[3], line)?,
                then: None,
            };
            if cols[4] != "-" {
                pending_then.push((step_idx, steps[step_idx].rules.len(), cols[4].to_owned()));
            }
            steps[step_idx].rules.push(rule);
        }
        let mut followups = Vec::new();
        for (step, rule, target) in pending_then {
            let t = steps
                .iter()
                .position(|s| s.name == target)
                .ok_or_else(|| table_err(format!("follow-up step {target:?} is never defined")))?;
            steps[step].rules[rule].then = Some(t);
            followups.push(t);
        }
        let sequence = (0..steps.len()).filter(|i| !followups.contains(i)).collect();
        Ok(Stemmer { steps, sequence })
    }

    /// Runs one pass of every step over a lowercase word.
    pub fn stem(&self, word: &str) -> String {
        let mut w: Vec<char> = word.chars().collect();
        for &s in &self.sequence {
            self.apply_step(s, &mut w);
        }
        w.into_iter().collect()
    }

    fn apply_step(&self, step: usize, w: &mut Vec<char>) {
        let rules = &self.steps[step].rules;
        let Some(first) = rules.iter().position(|r| w.ends_with(&r.suffix)) else {
            return;
        };
        let suffix = &rules[first].suffix;
        let stem_len = w.len() - suffix.len();
        for rule in rules[first..].iter().filter(|r| &r.suffix == suffix) {
            if rule.condition.holds(&w[..stem_len]) {
                w.truncate(stem_len);
                match &rule.replacement {
                    Replacement::Literal(r) => w.extend_from_slice(r),
                    Replacement::DropLast => {
                        w.pop();
                    }
                }
                if let Some(next) = rule.then {
                    self.apply_step(next, w);
                }
                return;
            }
        }
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Consonant flags; `y` is a consonant at the start or after a vowel.
fn consonants(w: &[char]) -> Vec<bool> {
    let mut flags: Vec<bool> = Vec::with_capacity(w.len());
    for (i, &c) in w.iter().enumerate() {
        let cons = if is_vowel(c) {
            false
        } else if c == 'y' {
            i == 0 || !flags[i - 1]
        } else {
            true
        };
        flags.push(cons);
    }
    flags
}

/// Number of vowel-run → consonant-run transitions.
pub(crate) fn measure(w: &[char]) -> usize {
    let flags = consonants(w);
    flags.windows(2).filter(|p| !p[0] && p[1]).count()
}

fn ends_cvc(w: &[char], flags: &[bool]) -> bool {
    let n = w.len();
    n >= 3 && flags[n - 3] && !flags[n - 2] && flags[n - 1] && !matches!(w[n - 1], 'w' | 'x' | 'y')
}

impl Condition {
    fn holds(&self, stem: &[char]) -> bool {
        if self.0.is_empty() {
            return true;
        }
        let flags = consonants(stem);
        self.0
            .iter()
            .all(|clause| clause.iter().any(|a| a.holds(stem, &flags)))
    }
}

impl Atom {
    fn holds(&self, stem: &[char], flags: &[bool]) -> bool {
        let n = stem.len();
        let v = match self.kind {
            AtomKind::MeasureGt(k) => measure(stem) > k,
            AtomKind::MeasureEq(k) => measure(stem) == k,
            AtomKind::HasVowel => flags.iter().any(|&c| !c),
            AtomKind::DoubleConsonant => n >= 2 && stem[n - 1] == stem[n - 2] && flags[n - 1],
            AtomKind::Cvc => ends_cvc(stem, flags),
            AtomKind::EndsWith(c) => stem.last() == Some(&c),
        };
        v != self.negated
    }
}
