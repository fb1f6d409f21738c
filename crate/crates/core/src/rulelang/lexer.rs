use crate::value::Unit;

use super::Location;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NumSuffix {
    Unit(Unit),
    PercentRx,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(f64, Option<NumSuffix>),
    Semi,
    Colon,
    Assign,
    Comma,
    Dot,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Num(..) => "number".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.punct()),
        }
    }

    fn punct(&self) -> &'static str {
        match self {
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Assign => ":=",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            _ => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub loc: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub loc: Location,
    pub msg: String,
}

pub fn tokenize(src: &str, origin: Location) -> Result<Vec<Token>, LexError> {
    Lexer {
        chars: src.chars().collect(),
        pos: 0,
        line: origin.line,
        col: origin.column,
    }
    .run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.chars.get(self.pos + n).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn loc(&self) -> Location {
        Location {
            line: self.line,
            column: self.col,
        }
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars()
            .enumerate()
            .all(|(i, c)| self.peek_at(i) == Some(c))
    }

    fn run(mut self) -> Result<Vec<Token>, LexError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '/' && self.peek_at(1) == Some('/') || c == '#' {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                } else {
                    break;
                }
            }
            let loc = self.loc();
            let Some(c) = self.peek() else {
                out.push(Token { tok: Tok::Eof, loc });
                return Ok(out);
            };
            let err = |msg: String| LexError { loc, msg };
            let tok = if is_ident_start(c) {
                let mut s = String::new();
                while let Some(c) = self.peek().filter(|c| is_ident_char(*c)) {
                    s.push(c);
                    self.bump();
                }
                Tok::Ident(s)
            } else if c.is_ascii_digit() {
                self.number().map_err(err)?
            } else if c == '"' {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(err("unterminated string".into())),
                        Some('"') => break,
                        Some('\\') => match self.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            other => {
                                return Err(err(format!("invalid escape {other:?} in string")))
                            }
                        },
                        Some(c) => s.push(c),
                    }
                }
                Tok::Str(s)
            } else {
                let two = |l: &mut Lexer, t| {
                    l.bump();
                    l.bump();
                    t
                };
                let one = |l: &mut Lexer, t| {
                    l.bump();
                    t
                };
                match c {
                    ':' if self.peek_at(1) == Some('=') => two(&mut self, Tok::Assign),
                    ':' => one(&mut self, Tok::Colon),
                    ';' => one(&mut self, Tok::Semi),
                    ',' => one(&mut self, Tok::Comma),
                    '.' => one(&mut self, Tok::Dot),
                    '[' => one(&mut self, Tok::LBracket),
                    ']' => one(&mut self, Tok::RBracket),
                    '(' => one(&mut self, Tok::LParen),
                    ')' => one(&mut self, Tok::RParen),
                    '=' if self.peek_at(1) == Some('=') => two(&mut self, Tok::Eq),
                    '=' => one(&mut self, Tok::Eq),
                    '!' if self.peek_at(1) == Some('=') => two(&mut self, Tok::Ne),
                    '<' if self.peek_at(1) == Some('>') => two(&mut self, Tok::Ne),
                    '<' if self.peek_at(1) == Some('=') => two(&mut self, Tok::Le),
                    '<' => one(&mut self, Tok::Lt),
                    '>' if self.peek_at(1) == Some('=') => two(&mut self, Tok::Ge),
                    '>' => one(&mut self, Tok::Gt),
                    '≠' => one(&mut self, Tok::Ne),
                    '≤' => one(&mut self, Tok::Le),
                    '≥' => one(&mut self, Tok::Ge),
                    '+' => one(&mut self, Tok::Plus),
                    '-' | '−' => one(&mut self, Tok::Minus),
                    '*' | '×' => one(&mut self, Tok::Star),
                    '/' | '÷' => one(&mut self, Tok::Slash),
                    other => return Err(err(format!("unexpected character {other:?}"))),
                }
            };
            out.push(Token { tok, loc });
        }
    }

    fn number(&mut self) -> Result<Tok, String> {
        let mut s = String::new();
        while let Some(c) = self.peek().filter(|c| c.is_ascii_digit()) {
            s.push(c);
            self.bump();
        }
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            s.push('.');
            self.bump();
            while let Some(c) = self.peek().filter(|c| c.is_ascii_digit()) {
                s.push(c);
                self.bump();
            }
        }
        let value: f64 = s.parse().map_err(|_| format!("invalid number {s:?}"))?;
        let suffix = if self.starts_with("%rx") {
            Some((NumSuffix::PercentRx, 3))
        } else {
            Unit::ALL
                .into_iter()
                .find(|u| self.starts_with(u.symbol()))
                .map(|u| (NumSuffix::Unit(u), u.symbol().chars().count()))
        };
        let suffix = suffix.map(|(sfx, len)| {
            for _ in 0..len {
                self.bump();
            }
            sfx
        });
        if self.peek().is_some_and(is_ident_char) {
            return Err(format!(
                "unknown unit after {s}; expected one of Gy, cc, %, ng/ml"
            ));
        }
        Ok(Tok::Num(value, suffix))
    }
}
