//! Text grammar for algebraic constraints.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' INTEGER)?
//! atom   := NUMBER | IDENT | 'sqrt' '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers are resolved to variable indices by the caller.

use thiserror::Error;

use super::Expr;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character '{ch}' at offset {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("expected {expected} at offset {offset}")]
    Expected { expected: &'static str, offset: usize },
    #[error("exponent must be a non-negative integer at offset {offset}")]
    BadExponent { offset: usize },
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("trailing input at offset {0}")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64, String),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let mut tokens = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (offset, ch) = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            // optional exponent: 1e-3
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lexeme: String = chars[start..i].iter().map(|(_, c)| c).collect();
            let value = lexeme
                .parse::<f64>()
                .map_err(|_| ParseError::UnexpectedChar { ch, offset })?;
            tokens.push((Token::Number(value, lexeme), offset));
        } else if ch.is_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            let ident: String = chars[start..i].iter().map(|(_, c)| c).collect();
            tokens.push((Token::Ident(ident), offset));
        } else {
            let token = match ch {
                '+' | '-' | '*' | '/' | '^' => Token::Op(ch),
                '(' => Token::LParen,
                ')' => Token::RParen,
                _ => return Err(ParseError::UnexpectedChar { ch, offset }),
            };
            tokens.push((token, offset));
            i += 1;
        }
    }
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
    resolve: &'a dyn Fn(&str) -> Option<usize>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { lhs + rhs } else { lhs - rhs };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { lhs * rhs } else { lhs / rhs };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let offset = self.offset();
            match self.next() {
                Some(Token::Number(_, lexeme)) => {
                    let n: u32 = lexeme
                        .parse()
                        .map_err(|_| ParseError::BadExponent { offset })?;
                    return Ok(base.powi(n));
                }
                _ => return Err(ParseError::BadExponent { offset }),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.next() {
            Some(Token::Number(v, _)) => Ok(Expr::constant(v)),
            Some(Token::Ident(name)) if name == "sqrt" => {
                self.expect_lparen()?;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner.sqrt())
            }
            Some(Token::Ident(name)) => match (self.resolve)(&name) {
                Some(index) => Ok(Expr::var(index)),
                None => Err(ParseError::UnknownIdentifier(name)),
            },
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(_) => Err(ParseError::Expected {
                expected: "a number, identifier or '('",
                offset,
            }),
            None => Err(ParseError::UnexpectedEnd),
        }
    }

    fn expect_lparen(&mut self) -> Result<(), ParseError> {
        let offset = self.offset();
        match self.next() {
            Some(Token::LParen) => Ok(()),
            None => Err(ParseError::UnexpectedEnd),
            _ => Err(ParseError::Expected { expected: "'('", offset }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let offset = self.offset();
        match self.next() {
            Some(Token::RParen) => Ok(()),
            None => Err(ParseError::UnexpectedEnd),
            _ => Err(ParseError::Expected { expected: "')'", offset }),
        }
    }
}

/// Parse `text`, mapping each identifier through `resolve` to a variable index.
pub fn parse(text: &str, resolve: &dyn Fn(&str) -> Option<usize>) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
        resolve,
    };
    let e = parser.expr()?;
    if parser.pos < parser.tokens.len() {
        return Err(ParseError::Trailing(parser.offset()));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(name: &str) -> Option<usize> {
        ["d1", "d2", "alpha"].iter().position(|n| *n == name)
    }

    #[test]
    fn parses_algebraic_constraint() {
        let e = parse("d1^2 + d2^2 - 1", &names).unwrap();
        assert!(e.eval(&[0.6, 0.8, 0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn whitespace_and_precedence() {
        let e = parse("  -d1^2*2+ sqrt( d2 )/(1+1) ", &names).unwrap();
        // -(9)*2 + 2/2
        assert_eq!(e.eval(&[3.0, 4.0, 0.0]).unwrap(), -17.0);
        let e = parse("2*alpha - 1.5e1", &names).unwrap();
        assert_eq!(e.eval(&[0.0, 0.0, 10.0]).unwrap(), 5.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            parse("d1 + d9", &names).unwrap_err(),
            ParseError::UnknownIdentifier("d9".into())
        );
        assert!(matches!(parse("d1^2.5", &names), Err(ParseError::BadExponent { .. })));
        assert!(matches!(parse("d1^-2", &names), Err(ParseError::BadExponent { .. })));
        assert_eq!(parse("d1 +", &names).unwrap_err(), ParseError::UnexpectedEnd);
        assert!(matches!(parse("d1 d2", &names), Err(ParseError::Trailing(_))));
        assert!(matches!(parse("d1 # 2", &names), Err(ParseError::UnexpectedChar { ch: '#', .. })));
        assert!(matches!(parse("(d1", &names), Err(ParseError::UnexpectedEnd)));
    }
}
