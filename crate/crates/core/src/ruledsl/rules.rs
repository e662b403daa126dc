use std::collections::HashMap;
use std::fmt;

use super::lexer::{tokenize, Keyword, Span, Token, TokenKind};
use super::ParseError;

/// `variable IS term`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub variable: String,
    pub term: String,
}

impl Atom {
    pub fn new(variable: impl Into<String>, term: impl Into<String>) -> Self {
        Self {
            variable: variable.into(),
            term: term.into(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} IS {}", self.variable, self.term)
    }
}

/// Antecedent tree. Binary nodes are left-associative as parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleExpr {
    Atom(Atom),
    Not(Box<RuleExpr>),
    And(Box<RuleExpr>, Box<RuleExpr>),
    Or(Box<RuleExpr>, Box<RuleExpr>),
}

impl RuleExpr {
    pub fn atom(variable: &str, term: &str) -> Self {
        RuleExpr::Atom(Atom::new(variable, term))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: RuleExpr) -> Self {
        RuleExpr::Not(Box::new(inner))
    }

    pub fn and(lhs: RuleExpr, rhs: RuleExpr) -> Self {
        RuleExpr::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: RuleExpr, rhs: RuleExpr) -> Self {
        RuleExpr::Or(Box::new(lhs), Box::new(rhs))
    }

    /// Atoms in source order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            RuleExpr::Atom(a) => out.push(a),
            RuleExpr::Not(e) => e.collect_atoms(out),
            RuleExpr::And(l, r) | RuleExpr::Or(l, r) => {
                l.collect_atoms(out);
                r.collect_atoms(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RuleExpr::Atom(_) => 1,
            RuleExpr::Not(e) => 1 + e.depth(),
            RuleExpr::And(l, r) | RuleExpr::Or(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            RuleExpr::Or(..) => 1,
            RuleExpr::And(..) => 2,
            RuleExpr::Not(_) | RuleExpr::Atom(_) => 3,
        }
    }
}

impl fmt::Display for RuleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Left operands need parentheses only when they bind looser than the
        // operator; right operands also when they bind equally, since the
        // grammar folds to the left.
        fn operand(f: &mut fmt::Formatter<'_>, e: &RuleExpr, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            RuleExpr::Atom(a) => write!(f, "{a}"),
            RuleExpr::Not(e) => {
                f.write_str("NOT ")?;
                operand(f, e, e.precedence() < 3)
            }
            RuleExpr::And(l, r) | RuleExpr::Or(l, r) => {
                let p = self.precedence();
                operand(f, l, l.precedence() < p)?;
                f.write_str(if p == 2 { " AND " } else { " OR " })?;
                operand(f, r, r.precedence() <= p)
            }
        }
    }
}

/// One parsed `RULE` statement.
#[derive(Debug, Clone)]
pub struct RuleAst {
    pub name: String,
    pub antecedent: RuleExpr,
    pub consequents: Vec<Atom>,
    pub weight: f64,
    /// Position of the `RULE` keyword; ignored by equality.
    pub span: Span,
}

impl PartialEq for RuleAst {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.antecedent == other.antecedent
            && self.consequents == other.consequents
            && self.weight == other.weight
    }
}

impl RuleAst {
    pub fn new(name: impl Into<String>, antecedent: RuleExpr, consequents: Vec<Atom>) -> Self {
        Self {
            name: name.into(),
            antecedent,
            consequents,
            weight: 1.0,
            span: Span::default(),
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Distinct antecedent variables in first-use order.
    pub fn input_variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for atom in self.antecedent.atoms() {
            if !out.contains(&atom.variable.as_str()) {
                out.push(&atom.variable);
            }
        }
        out
    }

    pub fn output_variables(&self) -> impl Iterator<Item = &str> {
        self.consequents.iter().map(|a| a.variable.as_str())
    }
}

impl fmt::Display for RuleAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RULE {}: IF {} THEN ", self.name, self.antecedent)?;
        for (i, c) in self.consequents.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        if self.weight != 1.0 {
            write!(f, " WITH {}", self.weight)?;
        }
        f.write_str(";")
    }
}

pub fn print_rule(rule: &RuleAst) -> String {
    rule.to_string()
}

/// Canonical text for a rule base, one rule per line.
pub fn print_rules(rules: &[RuleAst]) -> String {
    let mut out = String::new();
    for rule in rules {
        out.push_str(&rule.to_string());
        out.push('\n');
    }
    out
}

/// Parses a complete `.frl` rule base, preserving rule order.
pub fn parse_rules(source: &str) -> Result<Vec<RuleAst>, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let mut rules: Vec<RuleAst> = Vec::new();
    let mut seen: HashMap<String, Span> = HashMap::new();
    while !parser.at(&TokenKind::Eof) {
        let (rule, name_span) = parser.rule()?;
        if let Some(first) = seen.get(&rule.name) {
            return Err(ParseError::new(
                name_span,
                format!(
                    "duplicate rule name `{}` (first defined at line {})",
                    rule.name, first.line
                ),
            ));
        }
        seen.insert(rule.name.clone(), rule.span);
        rules.push(rule);
    }
    Ok(rules)
}

/// Deepest antecedent nesting accepted; keeps recursion bounded on hostile input.
pub(crate) const MAX_NESTING: usize = 200;

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
    }

    fn at_keyword(&self, kw: Keyword) -> bool {
        self.peek().kind == TokenKind::Keyword(kw)
    }

    fn advance(&mut self) -> Token {
        let tok = self.peek().clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        let tok = self.peek();
        ParseError::expected(tok.span, expected, &tok.kind.describe())
    }

    fn keyword(&mut self, kw: Keyword) -> Result<Span, ParseError> {
        if self.at_keyword(kw) {
            Ok(self.advance().span)
        } else {
            Err(self.error(&[&format!("`{}`", kw.as_str())]))
        }
    }

    fn punct(&mut self, kind: TokenKind) -> Result<Span, ParseError> {
        if self.at(&kind) {
            Ok(self.advance().span)
        } else {
            Err(self.error(&[&kind.describe()]))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(name) => {
                let name = name.clone();
                let span = self.advance().span;
                Ok((name, span))
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn rule(&mut self) -> Result<(RuleAst, Span), ParseError> {
        let span = self.keyword(Keyword::Rule)?;
        let (name, name_span) = self.ident()?;
        self.punct(TokenKind::Colon)?;
        self.keyword(Keyword::If)?;
        let antecedent = self.or_expr()?;
        self.keyword(Keyword::Then)?;
        let mut consequents = vec![self.consequent(&[])?];
        while self.at(&TokenKind::Comma) {
            self.advance();
            let atom = self.consequent(&consequents)?;
            consequents.push(atom);
        }
        let mut weight = 1.0;
        let weighted = self.at_keyword(Keyword::With);
        if weighted {
            self.advance();
            let tok = self.peek().clone();
            match tok.kind {
                TokenKind::Number(w) => {
                    self.advance();
                    if !(w > 0.0 && w <= 1.0) {
                        return Err(ParseError::new(
                            tok.span,
                            format!("rule weight {w} is outside (0, 1]"),
                        ));
                    }
                    weight = w;
                }
                _ => return Err(self.error(&["weight"])),
            }
        }
        if !self.at(&TokenKind::Semi) {
            let expected: &[&str] = if weighted {
                &["`;`"]
            } else {
                &["`,`", "`WITH`", "`;`"]
            };
            return Err(self.error(expected));
        }
        self.advance();
        let rule = RuleAst {
            name,
            antecedent,
            consequents,
            weight,
            span,
        };
        Ok((rule, name_span))
    }

    fn consequent(&mut self, previous: &[Atom]) -> Result<Atom, ParseError> {
        let span = self.peek().span;
        let atom = self.atom()?;
        if previous.iter().any(|a| a.variable == atom.variable) {
            return Err(ParseError::new(
                span,
                format!("variable `{}` appears twice in the THEN part", atom.variable),
            ));
        }
        Ok(atom)
    }

    fn or_expr(&mut self) -> Result<RuleExpr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.at_keyword(Keyword::Or) {
            self.advance();
            let rhs = self.and_expr()?;
            lhs = RuleExpr::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<RuleExpr, ParseError> {
        let mut lhs = self.unary()?;
        while self.at_keyword(Keyword::And) {
            self.advance();
            let rhs = self.unary()?;
            lhs = RuleExpr::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<RuleExpr, ParseError> {
        if self.depth >= MAX_NESTING {
            return Err(ParseError::new(
                self.peek().span,
                format!("expression nested deeper than {MAX_NESTING} levels"),
            ));
        }
        self.depth += 1;
        let result = self.unary_inner();
        self.depth -= 1;
        result
    }

    fn unary_inner(&mut self) -> Result<RuleExpr, ParseError> {
        match &self.peek().kind {
            TokenKind::Keyword(Keyword::Not) => {
                self.advance();
                Ok(RuleExpr::not(self.unary()?))
            }
            TokenKind::LParen => {
                self.advance();
                let inner = self.or_expr()?;
                self.punct(TokenKind::RParen)?;
                Ok(inner)
            }
            TokenKind::Ident(_) => Ok(RuleExpr::Atom(self.atom()?)),
            _ => Err(self.error(&["identifier", "`NOT`", "`(`"])),
        }
    }

    fn atom(&mut self) -> Result<Atom, ParseError> {
        let (variable, _) = self.ident()?;
        self.keyword(Keyword::Is)?;
        let (term, _) = self.ident()?;
        Ok(Atom { variable, term })
    }
}
