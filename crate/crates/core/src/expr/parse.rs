use std::collections::BTreeSet;

use super::{BinOp, Expr};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at column {column}: {message}")]
pub struct SyntaxError {
    /// 1-based character column; one past the end for unexpected end of input.
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Quoted(String),
    Op(BinOp),
    Not,
    If,
    Then,
    Else,
    True,
    False,
    LParen,
    RParen,
}

struct Lexer {
    toks: Vec<(Tok, usize)>,
    end: usize,
}

fn lex(text: &str) -> Result<Lexer, SyntaxError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: String| SyntaxError { column: col + 1, message: msg };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let (tok, len) = match (c, two.as_str()) {
            (_, "<=") => (Tok::Op(BinOp::Le), 2),
            (_, ">=") => (Tok::Op(BinOp::Ge), 2),
            (_, "==") => (Tok::Op(BinOp::Eq), 2),
            (_, "&&") => (Tok::Op(BinOp::And), 2),
            (_, "||") => (Tok::Op(BinOp::Or), 2),
            ('<', _) => (Tok::Op(BinOp::Lt), 1),
            ('>', _) => (Tok::Op(BinOp::Gt), 1),
            ('=', _) => (Tok::Op(BinOp::Eq), 1),
            ('≤', _) => (Tok::Op(BinOp::Le), 1),
            ('≥', _) => (Tok::Op(BinOp::Ge), 1),
            ('+', _) => (Tok::Op(BinOp::Add), 1),
            ('-', _) => (Tok::Op(BinOp::Sub), 1),
            ('*', _) => (Tok::Op(BinOp::Mul), 1),
            ('!', _) => (Tok::Not, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('\'', _) => {
                let mut j = i + 1;
                while j < chars.len() && chars[j] != '\'' {
                    j += 1;
                }
                if j >= chars.len() {
                    return Err(err(i, "unterminated symbol literal".into()));
                }
                let name: String = chars[i + 1..j].iter().collect();
                if name.is_empty() {
                    return Err(err(i, "empty symbol literal".into()));
                }
                (Tok::Quoted(name), j + 1 - i)
            }
            (c, _) if c.is_ascii_digit() => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let digits: String = chars[i..j].iter().collect();
                let v = digits
                    .parse::<i64>()
                    .map_err(|_| err(i, format!("integer literal `{digits}` out of range")))?;
                (Tok::Int(v), j - i)
            }
            (c, _) if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let tok = match word.as_str() {
                    "and" => Tok::Op(BinOp::And),
                    "or" => Tok::Op(BinOp::Or),
                    "not" => Tok::Not,
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word),
                };
                (tok, j - i)
            }
            (c, _) => return Err(err(i, format!("unexpected character `{c}`"))),
        };
        toks.push((tok, start + 1));
        i += len;
    }
    Ok(Lexer {
        toks,
        end: chars.len() + 1,
    })
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    vars: Option<&'a BTreeSet<String>>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, c)| *c)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            column: self.column(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.peek() == Some(&Tok::If) {
            self.pos += 1;
            let c = self.expr()?;
            self.expect(Tok::Then, "`then`")?;
            let a = self.expr()?;
            self.expect(Tok::Else, "`else`")?;
            let b = self.expr()?;
            return Ok(Expr::ite(c, a, b));
        }
        self.binary(1)
    }

    fn binary(&mut self, prec: u8) -> Result<Expr, SyntaxError> {
        if prec > 5 {
            return self.unary();
        }
        let mut lhs = self.binary(prec + 1)?;
        loop {
            let op = match self.peek() {
                Some(Tok::Op(op)) if op.precedence() == prec => *op,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
            if op.is_comparison() {
                if let Some(Tok::Op(next)) = self.peek() {
                    if next.is_comparison() {
                        return self.error("comparisons do not chain");
                    }
                }
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Expr::not(self.unary()?))
            }
            Some(Tok::Op(BinOp::Sub)) => {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Int(i)) => {
                        let i = *i;
                        self.pos += 1;
                        Ok(Expr::Int(-i))
                    }
                    _ => self.error("expected integer literal after unary `-`"),
                }
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.error("unexpected end of input"),
        };
        let e = match tok {
            Tok::Int(i) => Expr::Int(i),
            Tok::True => Expr::Bool(true),
            Tok::False => Expr::Bool(false),
            Tok::Quoted(s) => Expr::sym(&s),
            Tok::Ident(name) => match self.vars {
                Some(vars) if !vars.contains(&name) => Expr::sym(&name),
                _ => Expr::Var(name),
            },
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(e);
            }
            Tok::If => return self.expr(),
            other => return self.error(format!("unexpected token {other:?}")),
        };
        self.pos += 1;
        Ok(e)
    }
}

fn run(text: &str, vars: Option<&BTreeSet<String>>) -> Result<Expr, SyntaxError> {
    let lexer = lex(text)?;
    let mut p = Parser {
        toks: lexer.toks,
        pos: 0,
        end: lexer.end,
        vars,
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return p.error("unexpected trailing input");
    }
    Ok(e)
}

/// Parses an expression; every bare identifier is a variable.
pub fn parse(text: &str) -> Result<Expr, SyntaxError> {
    run(text, None)
}

/// Parses an expression where bare identifiers outside `vars` are symbols.
pub fn parse_with_vars(text: &str, vars: &BTreeSet<String>) -> Result<Expr, SyntaxError> {
    run(text, Some(vars))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_tree() {
        let e = parse("t+c <= p").unwrap();
        assert_eq!(
            e,
            Expr::bin(
                BinOp::Le,
                Expr::bin(BinOp::Add, Expr::var("t"), Expr::var("c")),
                Expr::var("p")
            )
        );
    }

    #[test]
    fn round_trip_spacing() {
        assert_eq!(parse("t + c*2").unwrap().to_string(), "t + c*2");
        assert_eq!(parse("t+c*2").unwrap().to_string(), "t + c*2");
    }

    #[test]
    fn dangling_operator_column() {
        let err = parse("t + ").unwrap_err();
        assert_eq!(err.column, 5);
    }

    #[test]
    fn errors_carry_position() {
        assert_eq!(parse("(t + c").unwrap_err().column, 7);
        assert_eq!(parse("t $ c").unwrap_err().column, 3);
        assert_eq!(parse("a < b < c").unwrap_err().column, 7);
        assert_eq!(parse("t c").unwrap_err().column, 3);
    }

    #[test]
    fn aliases() {
        assert_eq!(parse("t ≤ p").unwrap(), parse("t <= p").unwrap());
        assert_eq!(parse("a && b || !c").unwrap(), parse("a and b or not c").unwrap());
        assert_eq!(parse("b == 'tea'").unwrap(), parse("b = 'tea'").unwrap());
    }

    #[test]
    fn bare_symbols_with_var_context() {
        let vars: BTreeSet<String> = ["b".to_string()].into();
        assert_eq!(
            parse_with_vars("b = tea", &vars).unwrap(),
            Expr::bin(BinOp::Eq, Expr::var("b"), Expr::sym("tea"))
        );
    }
}
