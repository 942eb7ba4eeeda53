//! Tokenizer for the expression language.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
pub struct Lexeme {
    pub token: Token,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(source: &str) -> Result<Vec<Lexeme>> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = source.chars().peekable();

    while let Some(&ch) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match ch {
            c if c.is_whitespace() => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut text = String::new();
                let mut seen_dot = false;
                let mut seen_exp = false;
                while let Some(&d) = chars.peek() {
                    let take = d.is_ascii_digit()
                        || (d == '.' && !seen_dot && !seen_exp)
                        || ((d == 'e' || d == 'E') && !seen_exp && !text.is_empty())
                        || ((d == '+' || d == '-')
                            && matches!(text.chars().last(), Some('e') | Some('E')));
                    if !take {
                        break;
                    }
                    seen_dot |= d == '.';
                    seen_exp |= d == 'e' || d == 'E';
                    text.push(d);
                    chars.next();
                    bump(d, &mut line, &mut col);
                }
                let value: f64 = text.parse().map_err(|_| Error::Syntax {
                    line: tline,
                    col: tcol,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push(Lexeme {
                    token: Token::Number(value),
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        text.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                out.push(Lexeme {
                    token: Token::Ident(text),
                    line: tline,
                    col: tcol,
                });
            }
            _ => {
                let token = match ch {
                    '+' => Token::Plus,
                    '-' => Token::Minus,
                    '*' => Token::Star,
                    '/' => Token::Slash,
                    '^' => Token::Caret,
                    '(' => Token::LParen,
                    ')' => Token::RParen,
                    ',' => Token::Comma,
                    other => {
                        return Err(Error::Syntax {
                            line: tline,
                            col: tcol,
                            message: format!("unexpected character `{other}`"),
                        })
                    }
                };
                chars.next();
                bump(ch, &mut line, &mut col);
                out.push(Lexeme {
                    token,
                    line: tline,
                    col: tcol,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_idents() {
        let toks = tokenize("x1 + 2.5e-3*cos(x2)").unwrap();
        assert_eq!(toks.len(), 8);
        assert_eq!(toks[0].token, Token::Ident("x1".into()));
        assert_eq!(toks[2].token, Token::Number(2.5e-3));
    }

    #[test]
    fn tracks_position() {
        let toks = tokenize("x1 +\n  y").unwrap();
        assert_eq!((toks[2].line, toks[2].col), (2, 3));
    }

    #[test]
    fn rejects_stray_character() {
        assert!(matches!(tokenize("x1 $ 2"), Err(Error::Syntax { .. })));
    }
}
