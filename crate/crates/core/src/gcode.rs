//! Lexing, parsing and serialization of G-code programs.
//!
//! Parsing is total: every input yields a [`GCodeProgram`] with one [`Block`]
//! per physical line. Malformed words are kept on the block as [`LexIssue`]s
//! so the validator can report them instead of the parser rejecting input.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Word letters accepted by the lexer.
pub const WORD_LETTERS: &[char] = &[
    'G', 'M', 'X', 'Y', 'Z', 'I', 'J', 'R', 'F', 'S', 'T', 'P', 'N',
];

/// A single letter-number word such as `G01` or `X-3.5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub letter: char,
    pub code: f64,
    /// Literal spelling, uppercased and without interior whitespace.
    pub raw: String,
}

impl Command {
    pub fn new(letter: char, code: f64) -> Self {
        let letter = letter.to_ascii_uppercase();
        Command {
            letter,
            code,
            raw: format!("{}{}", letter, format_number(code)),
        }
    }

    /// The number as written, without the letter.
    pub fn number_text(&self) -> &str {
        &self.raw[self.letter.len_utf8()..]
    }

    /// True when this word is `letter` with integral code `code`, ignoring
    /// leading zeros (so `G00` and `G0` both match `('G', 0)`).
    pub fn is(&self, letter: char, code: u32) -> bool {
        self.letter == letter && self.code == f64::from(code)
    }

    pub fn is_axis(&self) -> bool {
        matches!(self.letter, 'X' | 'Y' | 'Z')
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.letter, format_number(self.code))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "token")]
pub enum LexIssueKind {
    /// A word letter with no number after it, e.g. the `X` in `G01 X`.
    MissingNumber(char),
    /// A number with no letter in front of it.
    StrayNumber(String),
    /// A letter-number pair whose letter is not a recognized word letter.
    UnknownWord(String),
    UnexpectedChar(char),
    UnclosedComment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexIssue {
    /// 1-based character column.
    pub column: usize,
    pub kind: LexIssueKind,
}

impl fmt::Display for LexIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LexIssueKind::MissingNumber(c) => write!(f, "word '{c}' has no number"),
            LexIssueKind::StrayNumber(n) => write!(f, "number '{n}' has no word letter"),
            LexIssueKind::UnknownWord(w) => write!(f, "unknown word '{w}'"),
            LexIssueKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            LexIssueKind::UnclosedComment => write!(f, "unclosed '(' comment"),
        }
    }
}

/// One source line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub line_no: usize,
    pub words: Vec<Command>,
    pub comment: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<LexIssue>,
}

impl Block {
    pub fn empty(line_no: usize) -> Self {
        Block {
            line_no,
            words: Vec::new(),
            comment: None,
            issues: Vec::new(),
        }
    }

    /// No words and no lexical issues: blank or comment-only.
    pub fn is_blank(&self) -> bool {
        self.words.is_empty() && self.issues.is_empty()
    }

    pub fn has(&self, letter: char, code: u32) -> bool {
        self.words.iter().any(|w| w.is(letter, code))
    }

    /// Last value of a parameter word on this block.
    pub fn value(&self, letter: char) -> Option<f64> {
        self.words
            .iter()
            .rev()
            .find(|w| w.letter == letter)
            .map(|w| w.code)
    }

    pub fn has_axis_words(&self) -> bool {
        self.words.iter().any(Command::is_axis)
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for w in &self.words {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{w}")?;
            first = false;
        }
        if let Some(c) = &self.comment {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "; {c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCodeProgram {
    pub blocks: Vec<Block>,
    pub source: String,
}

impl GCodeProgram {
    pub fn parse(text: &str) -> Self {
        parse_program(text)
    }

    pub fn from_blocks(blocks: Vec<Block>) -> Self {
        let mut program = GCodeProgram {
            blocks,
            source: String::new(),
        };
        for (i, b) in program.blocks.iter_mut().enumerate() {
            b.line_no = i + 1;
        }
        program.source = serialize(&program);
        program
    }

    /// Blocks that carry at least one word or issue.
    pub fn non_empty_blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| !b.is_blank())
    }

    pub fn block(&self, line_no: usize) -> Option<&Block> {
        self.blocks.get(line_no.checked_sub(1)?)
    }
}

impl fmt::Display for GCodeProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize(self))
    }
}

/// Shortest decimal rendering: trailing zeros trimmed, `-0` printed as `0`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v}")
}

/// Rounds to `decimals` places before rendering with [`format_number`].
pub fn format_rounded(v: f64, decimals: i32) -> String {
    let scale = 10f64.powi(decimals);
    format_number((v * scale).round() / scale)
}

fn scan_number(chars: &[char], start: usize) -> Option<(String, usize)> {
    let mut j = start;
    let mut text = String::new();
    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
        text.push(chars[j]);
        j += 1;
    }
    let mut digits = 0;
    while j < chars.len() && chars[j].is_ascii_digit() {
        text.push(chars[j]);
        digits += 1;
        j += 1;
    }
    if j < chars.len() && chars[j] == '.' {
        text.push('.');
        j += 1;
        while j < chars.len() && chars[j].is_ascii_digit() {
            text.push(chars[j]);
            digits += 1;
            j += 1;
        }
    }
    (digits > 0).then_some((text, j))
}

/// Lexes one line (no embedded newline) into a [`Block`].
pub fn tokenize_line(text: &str, line_no: usize) -> Block {
    let chars: Vec<char> = text.chars().collect();
    let mut block = Block::empty(line_no);
    let mut comments: Vec<String> = Vec::new();
    let mut i = 0;

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == '%' {
            i += 1;
        } else if c == '(' {
            match chars[i + 1..].iter().position(|&ch| ch == ')') {
                Some(off) => {
                    comments.push(chars[i + 1..i + 1 + off].iter().collect());
                    i += off + 2;
                }
                None => {
                    block.issues.push(LexIssue {
                        column: i + 1,
                        kind: LexIssueKind::UnclosedComment,
                    });
                    comments.push(chars[i + 1..].iter().collect());
                    i = chars.len();
                }
            }
        } else if c == ';' {
            comments.push(chars[i + 1..].iter().collect());
            i = chars.len();
        } else if c.is_ascii_alphabetic() {
            let letter = c.to_ascii_uppercase();
            let mut j = i + 1;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                j += 1;
            }
            match scan_number(&chars, j) {
                Some((num, end)) => {
                    let raw = format!("{letter}{num}");
                    if WORD_LETTERS.contains(&letter) {
                        // scan_number only yields parseable decimals
                        let code: f64 = num.parse().unwrap_or(0.0);
                        block.words.push(Command { letter, code, raw });
                    } else {
                        block.issues.push(LexIssue {
                            column: i + 1,
                            kind: LexIssueKind::UnknownWord(raw),
                        });
                    }
                    i = end;
                }
                None => {
                    block.issues.push(LexIssue {
                        column: i + 1,
                        kind: LexIssueKind::MissingNumber(letter),
                    });
                    i += 1;
                }
            }
        } else if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            match scan_number(&chars, i) {
                Some((num, end)) => {
                    block.issues.push(LexIssue {
                        column: i + 1,
                        kind: LexIssueKind::StrayNumber(num),
                    });
                    i = end;
                }
                None => {
                    block.issues.push(LexIssue {
                        column: i + 1,
                        kind: LexIssueKind::UnexpectedChar(c),
                    });
                    i += 1;
                }
            }
        } else {
            block.issues.push(LexIssue {
                column: i + 1,
                kind: LexIssueKind::UnexpectedChar(c),
            });
            i += 1;
        }
    }

    let comment = comments
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if !comment.is_empty() {
        block.comment = Some(comment);
    }
    block
}

/// One block per physical line; LF and CRLF both accepted.
pub fn parse_program(text: &str) -> GCodeProgram {
    let blocks = text
        .lines()
        .enumerate()
        .map(|(i, line)| tokenize_line(line, i + 1))
        .collect();
    GCodeProgram {
        blocks,
        source: text.to_string(),
    }
}

/// One line per block. Trailing blocks that print as empty lines are
/// dropped, so serializing a parsed serialization is a fixpoint.
pub fn serialize(program: &GCodeProgram) -> String {
    let keep = program
        .blocks
        .iter()
        .rposition(|b| !b.words.is_empty() || b.comment.is_some())
        .map_or(0, |i| i + 1);
    program.blocks[..keep]
        .iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// `parse(serialize(program))`: the canonical form of a program.
pub fn normalize(program: &GCodeProgram) -> GCodeProgram {
    parse_program(&serialize(program))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(b: &Block) -> Vec<String> {
        b.words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tokenizes_basic_line() {
        let b = tokenize_line("G01 X10.5 Y-3 F100", 1);
        assert_eq!(words(&b), ["G1", "X10.5", "Y-3", "F100"]);
        assert!(b.issues.is_empty());
        assert!(b.comment.is_none());
    }

    #[test]
    fn strips_both_comment_styles() {
        let b = tokenize_line("(face mill) G00 Z5 ; retract", 4);
        assert_eq!(words(&b), ["G0", "Z5"]);
        assert_eq!(b.comment.as_deref(), Some("face mill retract"));
        assert_eq!(b.line_no, 4);
    }

    #[test]
    fn keeps_raw_spelling() {
        let b = tokenize_line("G022 X5", 1);
        assert_eq!(b.words[0].raw, "G022");
        assert_eq!(b.words[0].code, 22.0);
        assert_eq!(b.words[0].number_text(), "022");
        assert_eq!(words(&b), ["G22", "X5"]);
        assert!(b.issues.is_empty());
    }

    #[test]
    fn malformed_words_become_issues() {
        let b = tokenize_line("G01 X", 1);
        assert_eq!(b.issues.len(), 1);
        assert_eq!(b.issues[0].kind, LexIssueKind::MissingNumber('X'));

        let b = tokenize_line("Q99", 2);
        assert_eq!(b.issues[0].kind, LexIssueKind::UnknownWord("Q99".into()));

        let b = tokenize_line("W99 12", 3);
        assert_eq!(
            b.issues.iter().map(|i| i.kind.clone()).collect::<Vec<_>>(),
            vec![
                LexIssueKind::UnknownWord("W99".into()),
                LexIssueKind::StrayNumber("12".into())
            ]
        );
    }

    #[test]
    fn lowercase_and_spaced_words() {
        let b = tokenize_line("g1 x 10.50", 1);
        assert_eq!(words(&b), ["G1", "X10.5"]);
    }

    #[test]
    fn parse_counts_lines() {
        assert_eq!(parse_program("").non_empty_blocks().count(), 0);
        assert_eq!(parse_program("").blocks.len(), 0);
        let p = parse_program("G21\nG90\nG00 X0 Y0");
        assert_eq!(
            p.blocks.iter().map(|b| b.words.len()).collect::<Vec<_>>(),
            [1, 1, 3]
        );
        let p = parse_program("G21\r\n\r\nG90\r\n");
        assert_eq!(p.blocks.len(), 3);
        assert!(p.blocks[1].is_blank());
    }

    #[test]
    fn serialize_normalizes() {
        assert_eq!(serialize(&parse_program("g1 x10.50")), "G1 X10.5");
        assert_eq!(serialize(&parse_program("")), "");
        assert_eq!(serialize(&parse_program("G0 X-0.0 (c)")), "G0 X0 ; c");
    }

    #[test]
    fn formats_numbers_shortest() {
        assert_eq!(format_number(100.0), "100");
        assert_eq!(format_number(-3.0), "-3");
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_rounded(43.30127018922193, 4), "43.3013");
        assert_eq!(format_rounded(-1e-9, 4), "0");
    }
}
