//! Positioned s-expression reader used by the PDDL front-end.

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Symbol { text: String, pos: Pos },
    List { items: Vec<SExpr>, pos: Pos },
}

impl SExpr {
    pub fn pos(&self) -> Pos {
        match self {
            SExpr::Symbol { pos, .. } | SExpr::List { pos, .. } => *pos,
        }
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol { text, .. } => Some(text),
            SExpr::List { .. } => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List { items, .. } => Some(items),
            SExpr::Symbol { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Symbol(String),
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn next_token(&mut self) -> Result<Option<(Token, Pos)>, ParseError> {
        loop {
            match self.chars.peek().copied() {
                None => return Ok(None),
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(';') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('(') => {
                    let pos = self.pos();
                    self.bump();
                    return Ok(Some((Token::Open, pos)));
                }
                Some(')') => {
                    let pos = self.pos();
                    self.bump();
                    return Ok(Some((Token::Close, pos)));
                }
                Some(c) if is_symbol_char(c) => {
                    let pos = self.pos();
                    let mut text = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if !is_symbol_char(c) {
                            break;
                        }
                        text.extend(c.to_lowercase());
                        self.bump();
                    }
                    return Ok(Some((Token::Symbol(text), pos)));
                }
                Some(c) => {
                    return Err(ParseError::new(
                        self.pos(),
                        format!("unexpected character {c:?}"),
                    ))
                }
            }
        }
    }
}

fn is_symbol_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '?' | ':' | '.' | '=')
}

/// Reads exactly one top-level expression; trailing content is an error.
pub fn read_one(text: &str) -> Result<SExpr, ParseError> {
    let mut lexer = Lexer::new(text);
    let first = match lexer.next_token()? {
        None => {
            return Err(ParseError::new(
                lexer.pos(),
                "unexpected end of input, expected '('",
            ))
        }
        Some(t) => t,
    };
    let expr = read_from(&mut lexer, first)?;
    if let Some((_, pos)) = lexer.next_token()? {
        return Err(ParseError::new(pos, "unexpected content after top-level form"));
    }
    Ok(expr)
}

fn read_from(lexer: &mut Lexer<'_>, first: (Token, Pos)) -> Result<SExpr, ParseError> {
    match first {
        (Token::Symbol(text), pos) => Ok(SExpr::Symbol { text, pos }),
        (Token::Close, pos) => Err(ParseError::new(pos, "unbalanced parentheses: unexpected ')'")),
        (Token::Open, pos) => {
            let mut stack: Vec<(Vec<SExpr>, Pos)> = vec![(Vec::new(), pos)];
            loop {
                let Some((tok, tpos)) = lexer.next_token()? else {
                    return Err(ParseError::new(
                        lexer.pos(),
                        "unbalanced parentheses: unexpected end of input, expected ')'",
                    ));
                };
                match tok {
                    Token::Open => stack.push((Vec::new(), tpos)),
                    Token::Symbol(text) => stack
                        .last_mut()
                        .expect("non-empty stack")
                        .0
                        .push(SExpr::Symbol { text, pos: tpos }),
                    Token::Close => {
                        let (items, lpos) = stack.pop().expect("non-empty stack");
                        let list = SExpr::List { items, pos: lpos };
                        match stack.last_mut() {
                            Some((parent, _)) => parent.push(list),
                            None => return Ok(list),
                        }
                    }
                }
            }
        }
    }
}

/// Reads an atom written either as `name(a, b)` or as `(name a b)`.
pub fn read_call_syntax(text: &str) -> Result<(String, Vec<String>), ParseError> {
    let trimmed = text.trim();
    if trimmed.starts_with('(') {
        let expr = read_one(trimmed)?;
        let items = expr
            .as_list()
            .ok_or_else(|| ParseError::new(expr.pos(), "expected a list"))?;
        let mut syms = Vec::with_capacity(items.len());
        for item in items {
            let s = item
                .as_symbol()
                .ok_or_else(|| ParseError::new(item.pos(), "expected a symbol"))?;
            syms.push(s.to_string());
        }
        if syms.is_empty() {
            return Err(ParseError::new(expr.pos(), "empty atom"));
        }
        let name = syms.remove(0);
        return Ok((name, syms));
    }
    let start = Pos { line: 1, column: 1 };
    let (name, rest) = match trimmed.find('(') {
        Some(i) => (&trimmed[..i], Some(&trimmed[i + 1..])),
        None => (trimmed, None),
    };
    let name = name.trim();
    if name.is_empty() || !name.chars().all(is_symbol_char) {
        return Err(ParseError::new(start, format!("malformed atom {trimmed:?}")));
    }
    let mut args = Vec::new();
    if let Some(rest) = rest {
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| ParseError::new(start, format!("unbalanced parentheses in {trimmed:?}")))?;
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            if !part.chars().all(is_symbol_char) {
                return Err(ParseError::new(start, format!("malformed argument {part:?}")));
            }
            args.push(part.to_lowercase());
        }
    }
    Ok((name.to_lowercase(), args))
}
