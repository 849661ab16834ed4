//! Tokenizer for the modeling language.

use crate::error::FrontendError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    // Punctuation and operators.
    Semi,
    Colon,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Prime,
    Assign, // '='
    EqEq,   // '=='
    Le,
    Lt,
    Ge,
    Gt,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "number `{n}`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Caret => write!(f, "`^`"),
            Tok::Prime => write!(f, "`'`"),
            Tok::Assign => write!(f, "`=`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

/// A token with its source position (1-based line and column).
#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontendError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut line = 1usize;
    let mut col = 1usize;

    macro_rules! push {
        ($tok:expr, $line:expr, $col:expr) => {
            out.push(Token { tok: $tok, line: $line, col: $col })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '/' if i + 1 < chars.len() && chars[i + 1] == '/' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            ';' => {
                push!(Tok::Semi, tline, tcol);
                i += 1;
                col += 1;
            }
            ':' => {
                push!(Tok::Colon, tline, tcol);
                i += 1;
                col += 1;
            }
            '(' => {
                push!(Tok::LParen, tline, tcol);
                i += 1;
                col += 1;
            }
            ')' => {
                push!(Tok::RParen, tline, tcol);
                i += 1;
                col += 1;
            }
            '+' => {
                push!(Tok::Plus, tline, tcol);
                i += 1;
                col += 1;
            }
            '-' => {
                push!(Tok::Minus, tline, tcol);
                i += 1;
                col += 1;
            }
            '*' => {
                push!(Tok::Star, tline, tcol);
                i += 1;
                col += 1;
            }
            '/' => {
                push!(Tok::Slash, tline, tcol);
                i += 1;
                col += 1;
            }
            '^' => {
                push!(Tok::Caret, tline, tcol);
                i += 1;
                col += 1;
            }
            '\'' => {
                push!(Tok::Prime, tline, tcol);
                i += 1;
                col += 1;
            }
            '=' => {
                if i + 1 < chars.len() && chars[i + 1] == '=' {
                    push!(Tok::EqEq, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Assign, tline, tcol);
                    i += 1;
                    col += 1;
                }
            }
            '<' => {
                if i + 1 < chars.len() && chars[i + 1] == '=' {
                    push!(Tok::Le, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Lt, tline, tcol);
                    i += 1;
                    col += 1;
                }
            }
            '>' => {
                if i + 1 < chars.len() && chars[i + 1] == '=' {
                    push!(Tok::Ge, tline, tcol);
                    i += 2;
                    col += 2;
                } else {
                    push!(Tok::Gt, tline, tcol);
                    i += 1;
                    col += 1;
                }
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text.parse::<f64>().map_err(|_| FrontendError::Syntax {
                    line: tline,
                    col: tcol,
                    msg: format!("malformed number `{text}`"),
                })?;
                col += i - start;
                push!(Tok::Number(value), tline, tcol);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += i - start;
                push!(Tok::Ident(text), tline, tcol);
            }
            other => {
                return Err(FrontendError::Syntax {
                    line: tline,
                    col: tcol,
                    msg: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
