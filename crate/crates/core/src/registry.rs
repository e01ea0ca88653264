//! The set of G and M codes the syntax check accepts.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::gcode::Command;

#[derive(Debug, Error, PartialEq)]
#[error("registry line {line}: {reason}")]
pub struct RegistryParseError {
    pub line: usize,
    pub reason: String,
}

/// Recognized `(letter, code)` pairs with human-readable descriptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandRegistry {
    entries: BTreeMap<(char, u32), String>,
}

const STANDARD: &[(char, u32, &str)] = &[
    ('G', 0, "rapid positioning"),
    ('G', 1, "linear interpolation"),
    ('G', 2, "circular interpolation, clockwise"),
    ('G', 3, "circular interpolation, counter-clockwise"),
    ('G', 4, "dwell"),
    ('G', 17, "XY plane selection"),
    ('G', 20, "units: inches"),
    ('G', 21, "units: millimeters"),
    ('G', 28, "return to home"),
    ('G', 40, "cutter compensation off"),
    ('G', 41, "cutter compensation left"),
    ('G', 42, "cutter compensation right"),
    ('G', 43, "tool length offset"),
    ('G', 49, "cancel tool length offset"),
    ('G', 54, "work coordinate system 1"),
    ('G', 80, "cancel canned cycle"),
    ('G', 81, "drilling cycle"),
    ('G', 83, "peck drilling cycle"),
    ('G', 90, "absolute positioning"),
    ('G', 91, "incremental positioning"),
    ('G', 92, "set position"),
    ('G', 94, "feed per minute"),
    ('G', 98, "canned cycle return to initial level"),
    ('G', 99, "canned cycle return to R level"),
    ('M', 0, "program stop"),
    ('M', 1, "optional stop"),
    ('M', 2, "program end"),
    ('M', 3, "spindle on, clockwise"),
    ('M', 4, "spindle on, counter-clockwise"),
    ('M', 5, "spindle stop"),
    ('M', 6, "tool change"),
    ('M', 7, "mist coolant on"),
    ('M', 8, "flood coolant on"),
    ('M', 9, "coolant off"),
    ('M', 30, "program end and rewind"),
];

impl Default for CommandRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl CommandRegistry {
    pub fn empty() -> Self {
        CommandRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn standard() -> Self {
        let entries = STANDARD
            .iter()
            .map(|&(l, c, d)| ((l, c), d.to_string()))
            .collect();
        CommandRegistry { entries }
    }

    pub fn insert(&mut self, letter: char, code: u32, description: impl Into<String>) {
        self.entries
            .insert((letter.to_ascii_uppercase(), code), description.into());
    }

    pub fn contains(&self, letter: char, code: u32) -> bool {
        self.entries.contains_key(&(letter, code))
    }

    pub fn describe(&self, letter: char, code: u32) -> Option<&str> {
        self.entries.get(&(letter, code)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the text form: one `G1 description` entry per line, `#` starts
    /// a comment line.
    pub fn parse(text: &str) -> Result<Self, RegistryParseError> {
        let mut reg = CommandRegistry::empty();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, desc) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let err = |reason: &str| RegistryParseError {
                line: i + 1,
                reason: reason.to_string(),
            };
            let mut chars = word.chars();
            let letter = chars
                .next()
                .map(|c| c.to_ascii_uppercase())
                .filter(|c| *c == 'G' || *c == 'M')
                .ok_or_else(|| err("entry must start with G or M"))?;
            let code: u32 = chars
                .as_str()
                .parse()
                .map_err(|_| err("code must be a non-negative integer"))?;
            reg.insert(letter, code, desc.trim());
        }
        Ok(reg)
    }

    /// Whether a G or M word names a registered command, judged by its
    /// literal spelling. Up to two digits of zero padding are accepted
    /// (`G2`, `G02`, `G00`); anything longer than the canonical code or two
    /// digits is not (`G022`, `G001`).
    pub fn is_recognized(&self, word: &Command) -> bool {
        if word.letter != 'G' && word.letter != 'M' {
            return false;
        }
        let digits = word.number_text();
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return false;
        }
        let trimmed = digits.trim_start_matches('0');
        let canonical = if trimmed.is_empty() { "0" } else { trimmed };
        if digits.len() > canonical.len().max(2) {
            return false;
        }
        canonical
            .parse::<u32>()
            .map(|code| self.contains(word.letter, code))
            .unwrap_or(false)
    }
}

impl fmt::Display for CommandRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ((l, c), d) in &self.entries {
            writeln!(f, "{l}{c} {d}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::tokenize_line;

    fn word(text: &str) -> Command {
        tokenize_line(text, 1).words.remove(0)
    }

    #[test]
    fn leading_zero_rules() {
        let reg = CommandRegistry::standard();
        for ok in ["G02", "G2", "g2", "G00", "G0", "M30", "M03", "G17"] {
            assert!(reg.is_recognized(&word(ok)), "{ok}");
        }
        for bad in ["G022", "G001", "G017", "G22", "M99", "G1.5", "X1", "G-1"] {
            assert!(!reg.is_recognized(&word(bad)), "{bad}");
        }
    }

    #[test]
    fn contains_required_minimum() {
        let reg = CommandRegistry::standard();
        for (l, c) in [
            ('G', 0),
            ('G', 1),
            ('G', 2),
            ('G', 3),
            ('G', 17),
            ('G', 20),
            ('G', 21),
            ('G', 28),
            ('G', 40),
            ('G', 41),
            ('G', 42),
            ('G', 43),
            ('G', 54),
            ('G', 80),
            ('G', 81),
            ('G', 83),
            ('G', 90),
            ('G', 91),
            ('G', 92),
            ('M', 0),
            ('M', 2),
            ('M', 3),
            ('M', 4),
            ('M', 5),
            ('M', 6),
            ('M', 8),
            ('M', 9),
            ('M', 30),
        ] {
            assert!(reg.contains(l, c), "{l}{c}");
        }
    }

    #[test]
    fn text_form_round_trips() {
        let reg = CommandRegistry::standard();
        assert_eq!(CommandRegistry::parse(&reg.to_string()).unwrap(), reg);
        let custom = CommandRegistry::parse("# minimal\nG1 feed\nm30\n").unwrap();
        assert_eq!(custom.len(), 2);
        assert!(custom.contains('M', 30));
        assert!(CommandRegistry::parse("X1 nope").is_err());
        assert!(CommandRegistry::parse("G1.5 nope").is_err());
    }
}
