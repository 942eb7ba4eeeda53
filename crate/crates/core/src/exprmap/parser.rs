//! Recursive-descent parser for the expression language.
//!
//! Grammar (loosest to tightest binding):
//!
//! ```text
//! expr   := term (('+' | '-') term)*          left associative
//! term   := unary (('*' | '/') unary)*        left associative
//! unary  := '-' unary | power
//! power  := atom ('^' ['-'] integer)*         exponents are integer literals
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `pi` is a predeclared constant; every other identifier must be in the
//! declared parameter list or be one of the known function names.

use super::lexer::{tokenize, Lexeme, Token};
use super::{Func, Node};
use crate::error::{Error, Result};

pub fn parse_nodes(source: &str, params: &[String]) -> Result<Node> {
    let lexemes = tokenize(source)?;
    let mut parser = Parser {
        lexemes,
        pos: 0,
        params,
    };
    let node = parser.expr()?;
    if let Some(lex) = parser.peek() {
        return Err(Error::Syntax {
            line: lex.line,
            col: lex.col,
            message: format!("unexpected token {:?}", lex.token),
        });
    }
    Ok(node)
}

struct Parser<'a> {
    lexemes: Vec<Lexeme>,
    pos: usize,
    params: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Lexeme> {
        self.lexemes.get(self.pos)
    }

    fn next(&mut self) -> Option<Lexeme> {
        let lex = self.lexemes.get(self.pos).cloned();
        if lex.is_some() {
            self.pos += 1;
        }
        lex
    }

    fn end_position(&self) -> (usize, usize) {
        self.lexemes
            .last()
            .map(|l| (l.line, l.col + 1))
            .unwrap_or((1, 1))
    }

    fn unexpected_end(&self) -> Error {
        let (line, col) = self.end_position();
        Error::Syntax {
            line,
            col,
            message: "unexpected end of input".into(),
        }
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<()> {
        match self.next() {
            Some(lex) if lex.token == token => Ok(()),
            Some(lex) => Err(Error::Syntax {
                line: lex.line,
                col: lex.col,
                message: format!("expected {what}, found {:?}", lex.token),
            }),
            None => Err(self.unexpected_end()),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(lex) = self.peek() {
            let op = match lex.token {
                Token::Plus => true,
                Token::Minus => false,
                _ => break,
            };
            self.next();
            let rhs = self.term()?;
            lhs = if op {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(lex) = self.peek() {
            let op = match lex.token {
                Token::Star => true,
                Token::Slash => false,
                _ => break,
            };
            self.next();
            let rhs = self.unary()?;
            lhs = if op {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if matches!(self.peek().map(|l| &l.token), Some(Token::Minus)) {
            self.next();
            let inner = self.unary()?;
            return Ok(Node::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let mut base = self.atom()?;
        while matches!(self.peek().map(|l| &l.token), Some(Token::Caret)) {
            self.next();
            let negative = if matches!(self.peek().map(|l| &l.token), Some(Token::Minus)) {
                self.next();
                true
            } else {
                false
            };
            let exponent = match self.next() {
                Some(Lexeme {
                    token: Token::Number(v),
                    line,
                    col,
                }) => {
                    if v.fract() != 0.0 || v.abs() > i32::MAX as f64 {
                        return Err(Error::Syntax {
                            line,
                            col,
                            message: format!("exponent must be an integer literal, got `{v}`"),
                        });
                    }
                    v as i32
                }
                Some(lex) => {
                    return Err(Error::Syntax {
                        line: lex.line,
                        col: lex.col,
                        message: "exponent must be an integer literal".into(),
                    })
                }
                None => return Err(self.unexpected_end()),
            };
            let exponent = if negative { -exponent } else { exponent };
            base = Node::Pow(Box::new(base), exponent);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let lex = self.next().ok_or_else(|| self.unexpected_end())?;
        match lex.token {
            Token::Number(v) => Ok(Node::Const(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if matches!(self.peek().map(|l| &l.token), Some(Token::LParen)) {
                    self.next();
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek().map(|l| &l.token), Some(Token::Comma)) {
                        self.next();
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen, "`)`")?;
                    let func = Func::from_name(&name).ok_or(Error::UnknownIdentifier {
                        name: name.clone(),
                        line: lex.line,
                        col: lex.col,
                    })?;
                    if args.len() != 1 {
                        return Err(Error::Arity {
                            name,
                            expected: 1,
                            got: args.len(),
                        });
                    }
                    Ok(Node::Func(func, Box::new(args.pop().unwrap())))
                } else if name == "pi" {
                    Ok(Node::Const(std::f64::consts::PI))
                } else if let Some(idx) = self.params.iter().position(|p| *p == name) {
                    Ok(Node::Var(idx))
                } else {
                    Err(Error::UnknownIdentifier {
                        name,
                        line: lex.line,
                        col: lex.col,
                    })
                }
            }
            other => Err(Error::Syntax {
                line: lex.line,
                col: lex.col,
                message: format!("expected value, found {other:?}"),
            }),
        }
    }
}
