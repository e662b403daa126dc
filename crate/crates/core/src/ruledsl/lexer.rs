use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Rule,
    If,
    Then,
    Is,
    And,
    Or,
    Not,
    With,
}

impl Keyword {
    pub const ALL: [Keyword; 8] = [
        Keyword::Rule,
        Keyword::If,
        Keyword::Then,
        Keyword::Is,
        Keyword::And,
        Keyword::Or,
        Keyword::Not,
        Keyword::With,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Rule => "RULE",
            Keyword::If => "IF",
            Keyword::Then => "THEN",
            Keyword::Is => "IS",
            Keyword::And => "AND",
            Keyword::Or => "OR",
            Keyword::Not => "NOT",
            Keyword::With => "WITH",
        }
    }

    fn lookup(word: &str) -> Option<Keyword> {
        Keyword::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(word))
    }
}

/// True if `word` is spelled like a rule keyword in any letter case.
pub fn is_keyword(word: &str) -> bool {
    Keyword::lookup(word).is_some()
}

/// True if `s` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Number(f64),
    Str(String),
    Colon,
    Semi,
    Comma,
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Keyword(k) => format!("`{}`", k.as_str()),
            TokenKind::Ident(s) => format!("identifier `{s}`"),
            TokenKind::Number(n) => format!("number `{n}`"),
            TokenKind::Str(s) => format!("string \"{s}\""),
            TokenKind::Colon => "`:`".into(),
            TokenKind::Semi => "`;`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

/// Splits source text into tokens. Keywords are recognised case-insensitively
/// and `#` starts a comment running to the end of the line.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut lexer = Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    loop {
        let tok = lexer.next_token()?;
        let eof = tok.kind == TokenKind::Eof;
        tokens.push(tok);
        if eof {
            return Ok(tokens);
        }
    }
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    column: u32,
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
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
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        self.skip_trivia();
        let span = Span::new(self.line, self.column);
        let Some(c) = self.peek() else {
            return Ok(Token { kind: TokenKind::Eof, span });
        };
        let kind = match c {
            ':' => self.single(TokenKind::Colon),
            ';' => self.single(TokenKind::Semi),
            ',' => self.single(TokenKind::Comma),
            '(' => self.single(TokenKind::LParen),
            ')' => self.single(TokenKind::RParen),
            '+' => self.single(TokenKind::Plus),
            '-' => self.single(TokenKind::Minus),
            '*' => self.single(TokenKind::Star),
            '/' => self.single(TokenKind::Slash),
            '"' => self.string(span)?,
            c if c.is_ascii_digit() => self.number(span)?,
            '.' if self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => self.number(span)?,
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut word = String::new();
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        word.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                match Keyword::lookup(&word) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(word),
                }
            }
            other => {
                return Err(ParseError::new(
                    span,
                    format!("unexpected character `{}`", other.escape_debug()),
                ))
            }
        };
        Ok(Token { kind, span })
    }

    fn single(&mut self, kind: TokenKind) -> TokenKind {
        self.bump();
        kind
    }

    fn string(&mut self, span: Span) -> Result<TokenKind, ParseError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                Some('"') => return Ok(TokenKind::Str(out)),
                Some('\n') | None => {
                    return Err(ParseError::new(span, "unterminated string literal"));
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn number(&mut self, span: Span) -> Result<TokenKind, ParseError> {
        let mut text = String::new();
        self.digits(&mut text);
        if self.peek() == Some('.') {
            text.push('.');
            self.bump();
            self.digits(&mut text);
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            let sign = matches!(self.peek_at(1), Some('+' | '-'));
            let digit_at = if sign { 2 } else { 1 };
            if self.peek_at(digit_at).is_some_and(|d| d.is_ascii_digit()) {
                for _ in 0..digit_at {
                    text.push(self.bump().unwrap_or('e'));
                }
                self.digits(&mut text);
            }
        }
        if self.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return Err(ParseError::new(span, format!("malformed number `{text}`")));
        }
        match text.parse::<f64>() {
            Ok(n) if n.is_finite() => Ok(TokenKind::Number(n)),
            Ok(_) => Err(ParseError::new(span, format!("number `{text}` is out of range"))),
            Err(_) => Err(ParseError::new(span, format!("malformed number `{text}`"))),
        }
    }

    fn digits(&mut self, out: &mut String) {
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                out.push(c);
                self.bump();
            } else {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let k = kinds("rule Rule RULE");
        assert!(k[..3].iter().all(|t| *t == TokenKind::Keyword(Keyword::Rule)));
    }

    #[test]
    fn comments_and_positions() {
        let toks = tokenize("# header\n  x IS y").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Ident("x".into()));
        assert_eq!(toks[0].span, Span::new(2, 3));
        assert_eq!(toks[1].span, Span::new(2, 5));
    }

    #[test]
    fn numbers() {
        assert_eq!(kinds("0.5 12 1e3 .25")[..4], [
            TokenKind::Number(0.5),
            TokenKind::Number(12.0),
            TokenKind::Number(1000.0),
            TokenKind::Number(0.25)
        ]);
        assert!(tokenize("12abc").is_err());
        assert!(tokenize("1e999").is_err());
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("idle_share"));
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
    }

    #[test]
    fn bad_character_is_positioned() {
        let err = tokenize("x\n  @").unwrap_err();
        assert_eq!(err.span, Span::new(2, 3));
    }
}
