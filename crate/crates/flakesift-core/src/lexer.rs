//! Lexical scanning of Java test-method source.
//!
//! This is not a Java parser. It partitions source text into code, comment,
//! and literal regions, and splits the code regions into identifier /
//! punctuation / number tokens with byte spans. Both the mining tokenizer
//! ([`crate::corpus::tokenize`]) and the augmentation transforms build on it,
//! so comments and string literals are classified in exactly one place.

use alloc::string::String;
use alloc::vec::Vec;

/// Classification of a source region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Code,
    LineComment,
    BlockComment,
    StringLit,
    CharLit,
}

/// A half-open byte range of the source with a single classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub start: usize,
    pub end: usize,
    pub kind: RegionKind,
}

/// Kind of a token inside a code region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeTokenKind {
    /// `[A-Za-z_][A-Za-z0-9_]*`
    Ident,
    /// A numeric literal (consumed as one blob, dots included).
    Number,
    /// A single punctuation or operator character.
    Punct(char),
}

/// A token found in a code region, with its byte span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeToken {
    pub start: usize,
    pub end: usize,
    pub kind: CodeTokenKind,
}

impl CodeToken {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

/// The 50 Java reserved words.
pub const JAVA_RESERVED_WORDS: [&str; 50] = [
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long",
    "native", "new", "package", "private", "protected", "public", "return", "short", "static",
    "strictfp", "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try",
    "void", "volatile", "while",
];

/// Literals excluded alongside the reserved words.
pub const JAVA_RESERVED_LITERALS: [&str; 3] = ["true", "false", "null"];

/// True if `word` (already lowercase) is a reserved word or reserved literal.
pub fn is_reserved(word: &str) -> bool {
    JAVA_RESERVED_WORDS.binary_search(&word).is_ok() || JAVA_RESERVED_LITERALS.contains(&word)
}

/// Primitive type keywords that can open a local-variable declaration.
pub fn is_primitive_type(word: &str) -> bool {
    matches!(
        word,
        "boolean" | "byte" | "char" | "short" | "int" | "long" | "float" | "double" | "var"
    )
}

/// Partition `source` into code / comment / literal regions.
///
/// Unterminated comments and literals run to end of input; the scan never
/// fails.
pub fn scan_regions(source: &str) -> Vec<Region> {
    let bytes = source.as_bytes();
    let mut regions = Vec::new();
    let mut i = 0usize;
    let mut code_start = 0usize;

    let push_code = |regions: &mut Vec<Region>, code_start: usize, end: usize| {
        if end > code_start {
            regions.push(Region { start: code_start, end, kind: RegionKind::Code });
        }
    };

    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                push_code(&mut regions, code_start, i);
                let start = i;
                i += 2;
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                regions.push(Region { start, end: i, kind: RegionKind::LineComment });
                code_start = i;
            }
            b'/' if i + 1 < bytes.len() && bytes[i + 1] == b'*' => {
                push_code(&mut regions, code_start, i);
                let start = i;
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && i + 1 < bytes.len() && bytes[i + 1] == b'/') {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
                regions.push(Region { start, end: i, kind: RegionKind::BlockComment });
                code_start = i;
            }
            b'"' => {
                push_code(&mut regions, code_start, i);
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i = (i + 1).min(bytes.len());
                regions.push(Region { start, end: i, kind: RegionKind::StringLit });
                code_start = i;
            }
            b'\'' => {
                push_code(&mut regions, code_start, i);
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b'\'' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    i += 1;
                }
                i = (i + 1).min(bytes.len());
                regions.push(Region { start, end: i, kind: RegionKind::CharLit });
                code_start = i;
            }
            _ => i += 1,
        }
    }
    push_code(&mut regions, code_start, bytes.len());
    regions
}

/// Tokenize the code regions of `source` into identifiers, numbers, and
/// punctuation, preserving byte spans. Comments and literals yield nothing.
pub fn lex_code_tokens(source: &str) -> Vec<CodeToken> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    for region in scan_regions(source) {
        if region.kind != RegionKind::Code {
            continue;
        }
        let mut i = region.start;
        while i < region.end {
            let b = bytes[i];
            if b == b'_' || b.is_ascii_alphabetic() {
                let start = i;
                while i < region.end && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                tokens.push(CodeToken { start, end: i, kind: CodeTokenKind::Ident });
            } else if b.is_ascii_digit() {
                let start = i;
                while i < region.end
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
                {
                    i += 1;
                }
                tokens.push(CodeToken { start, end: i, kind: CodeTokenKind::Number });
            } else if b.is_ascii_whitespace() {
                i += 1;
            } else {
                // Multi-byte UTF-8 passes through one byte at a time as
                // opaque punctuation; spans stay on char boundaries.
                let ch_len = source[i..].chars().next().map(|c| c.len_utf8()).unwrap_or(1);
                tokens.push(CodeToken {
                    start: i,
                    end: i + ch_len,
                    kind: CodeTokenKind::Punct(source[i..].chars().next().unwrap_or('?')),
                });
                i += ch_len;
            }
        }
    }
    tokens
}

/// Lowercase the identifier at `tok` in `source`.
pub fn lower_ident(source: &str, tok: &CodeToken) -> String {
    tok.text(source).to_ascii_lowercase()
}
