use std::fmt;

use super::lexer::{tokenize, Span, Token, TokenKind};
use super::rules::MAX_NESTING;
use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn apply(self, l: f64, r: f64) -> f64 {
        match self {
            BinOp::Add => l + r,
            BinOp::Sub => l - r,
            BinOp::Mul => l * r,
            BinOp::Div => l / r,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// The fixed set of time-series aggregates an EnPI may call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregateFn {
    Mean,
    Min,
    Max,
    Last,
    SumDelta,
    Integral,
    DurationBelow,
    DurationAbove,
    WindowLength,
    Custom,
}

impl AggregateFn {
    pub const ALL: [AggregateFn; 10] = [
        AggregateFn::Mean,
        AggregateFn::Min,
        AggregateFn::Max,
        AggregateFn::Last,
        AggregateFn::SumDelta,
        AggregateFn::Integral,
        AggregateFn::DurationBelow,
        AggregateFn::DurationAbove,
        AggregateFn::WindowLength,
        AggregateFn::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregateFn::Mean => "mean",
            AggregateFn::Min => "min",
            AggregateFn::Max => "max",
            AggregateFn::Last => "last",
            AggregateFn::SumDelta => "sum_delta",
            AggregateFn::Integral => "integral",
            AggregateFn::DurationBelow => "duration_below",
            AggregateFn::DurationAbove => "duration_above",
            AggregateFn::WindowLength => "window_length",
            AggregateFn::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    fn signature(self) -> &'static str {
        match self {
            AggregateFn::DurationBelow | AggregateFn::DurationAbove => "(data_point, threshold)",
            AggregateFn::WindowLength => "()",
            AggregateFn::Custom => "(\"analyzer\", data_point...)",
            _ => "(data_point)",
        }
    }
}

impl fmt::Display for AggregateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCall {
    pub func: AggregateFn,
    /// Analyzer name for `custom(...)`.
    pub analyzer: Option<String>,
    pub data_points: Vec<String>,
    /// Threshold for `duration_below` / `duration_above`.
    pub threshold: Option<f64>,
}

impl fmt::Display for AggregateCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.func)?;
        let mut args: Vec<String> = Vec::new();
        if let Some(name) = &self.analyzer {
            args.push(format!("\"{name}\""));
        }
        args.extend(self.data_points.iter().cloned());
        if let Some(t) = self.threshold {
            args.push(t.to_string());
        }
        write!(f, "{})", args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnpiExpr {
    Number(f64),
    Binary {
        op: BinOp,
        lhs: Box<EnpiExpr>,
        rhs: Box<EnpiExpr>,
    },
    Aggregate(AggregateCall),
}

impl EnpiExpr {
    /// Aggregate calls in evaluation (left-to-right) order.
    pub fn aggregates(&self) -> Vec<&AggregateCall> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a AggregateCall>) {
        match self {
            EnpiExpr::Number(_) => {}
            EnpiExpr::Binary { lhs, rhs, .. } => {
                lhs.collect(out);
                rhs.collect(out);
            }
            EnpiExpr::Aggregate(call) => out.push(call),
        }
    }

    /// Value of the expression when it contains no aggregate calls.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            EnpiExpr::Number(n) => Some(*n),
            EnpiExpr::Aggregate(_) => None,
            EnpiExpr::Binary { op, lhs, rhs } => {
                Some(op.apply(lhs.constant_value()?, rhs.constant_value()?))
            }
        }
    }

    /// True if some division has a right operand that folds to zero.
    pub fn divides_by_constant_zero(&self) -> bool {
        match self {
            EnpiExpr::Number(_) | EnpiExpr::Aggregate(_) => false,
            EnpiExpr::Binary { op, lhs, rhs } => {
                (*op == BinOp::Div && rhs.constant_value() == Some(0.0))
                    || lhs.divides_by_constant_zero()
                    || rhs.divides_by_constant_zero()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            EnpiExpr::Binary { op, .. } => op.precedence(),
            _ => 3,
        }
    }
}

impl fmt::Display for EnpiExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnpiExpr::Number(n) => write!(f, "{n}"),
            EnpiExpr::Aggregate(call) => write!(f, "{call}"),
            EnpiExpr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                if lhs.precedence() < p {
                    write!(f, "({lhs})")?;
                } else {
                    write!(f, "{lhs}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if rhs.precedence() <= p {
                    write!(f, "({rhs})")
                } else {
                    write!(f, "{rhs}")
                }
            }
        }
    }
}

/// Parses an EnPI expression: arithmetic over aggregate calls with the usual
/// precedence, left-associative.
pub fn parse_enpi(source: &str) -> Result<EnpiExpr, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
    };
    let expr = p.expr()?;
    if !p.at(&TokenKind::Eof) {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(expr)
}

enum Arg {
    DataPoint(String, Span),
    Str(String, Span),
    Expr(EnpiExpr, Span),
}

impl Arg {
    fn span(&self) -> Span {
        match self {
            Arg::DataPoint(_, s) | Arg::Str(_, s) | Arg::Expr(_, s) => *s,
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_kind_at(&self, offset: usize) -> &TokenKind {
        &self.tokens[(self.pos + offset).min(self.tokens.len() - 1)].kind
    }

    fn at(&self, kind: &TokenKind) -> bool {
        &self.peek().kind == kind
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

    fn expr(&mut self) -> Result<EnpiExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinOp::Add,
                TokenKind::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.term()?;
            lhs = EnpiExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn term(&mut self) -> Result<EnpiExpr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinOp::Mul,
                TokenKind::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.factor()?;
            lhs = EnpiExpr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
    }

    fn factor(&mut self) -> Result<EnpiExpr, ParseError> {
        if self.depth >= MAX_NESTING {
            return Err(ParseError::new(
                self.peek().span,
                format!("expression nested deeper than {MAX_NESTING} levels"),
            ));
        }
        self.depth += 1;
        let result = self.factor_inner();
        self.depth -= 1;
        result
    }

    fn factor_inner(&mut self) -> Result<EnpiExpr, ParseError> {
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Number(n) => {
                self.advance();
                Ok(EnpiExpr::Number(n))
            }
            TokenKind::Minus => {
                self.advance();
                match self.peek().kind {
                    TokenKind::Number(n) => {
                        self.advance();
                        Ok(EnpiExpr::Number(-n))
                    }
                    _ => Err(self.error(&["number"])),
                }
            }
            TokenKind::LParen => {
                self.advance();
                let inner = self.expr()?;
                if !self.at(&TokenKind::RParen) {
                    return Err(self.error(&["`)`"]));
                }
                self.advance();
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                self.advance();
                if !self.at(&TokenKind::LParen) {
                    return Err(ParseError::new(
                        tok.span,
                        format!(
                            "bare identifier `{name}`; data points must be wrapped in an aggregate such as mean({name})"
                        ),
                    ));
                }
                self.call(name, tok.span)
            }
            _ => Err(self.error(&["expression"])),
        }
    }

    fn call(&mut self, name: String, span: Span) -> Result<EnpiExpr, ParseError> {
        let func = AggregateFn::from_name(&name).ok_or_else(|| {
            let known: Vec<&str> = AggregateFn::ALL.iter().map(|f| f.name()).collect();
            ParseError::new(
                span,
                format!("unknown aggregate `{name}` (known: {})", known.join(", ")),
            )
        })?;
        self.advance(); // (
        let mut args = Vec::new();
        if !self.at(&TokenKind::RParen) {
            args.push(self.arg()?);
            while self.at(&TokenKind::Comma) {
                self.advance();
                args.push(self.arg()?);
            }
        }
        if !self.at(&TokenKind::RParen) {
            return Err(self.error(&["`,`", "`)`"]));
        }
        let close = self.advance().span;
        check_signature(func, args, span, close).map(EnpiExpr::Aggregate)
    }

    fn arg(&mut self) -> Result<Arg, ParseError> {
        let tok = self.peek().clone();
        match &tok.kind {
            TokenKind::Ident(name)
                if matches!(self.peek_kind_at(1), TokenKind::Comma | TokenKind::RParen) =>
            {
                self.advance();
                Ok(Arg::DataPoint(name.clone(), tok.span))
            }
            TokenKind::Str(s) => {
                self.advance();
                Ok(Arg::Str(s.clone(), tok.span))
            }
            _ => Ok(Arg::Expr(self.expr()?, tok.span)),
        }
    }
}

fn check_signature(
    func: AggregateFn,
    args: Vec<Arg>,
    span: Span,
    close: Span,
) -> Result<AggregateCall, ParseError> {
    let arity_error = |got: usize| {
        ParseError::new(
            span,
            format!(
                "wrong number of arguments for `{}`: expected {}{}, got {got}",
                func,
                func.name(),
                func.signature()
            ),
        )
    };
    let data_point = |arg: &Arg| match arg {
        Arg::DataPoint(name, _) => Ok(name.clone()),
        other => Err(ParseError::new(
            other.span(),
            format!("argument of `{func}` must be a data point identifier"),
        )),
    };
    let mut call = AggregateCall {
        func,
        analyzer: None,
        data_points: Vec::new(),
        threshold: None,
    };
    match func {
        AggregateFn::WindowLength => {
            if !args.is_empty() {
                return Err(arity_error(args.len()));
            }
        }
        AggregateFn::DurationBelow | AggregateFn::DurationAbove => {
            if args.len() != 2 {
                return Err(arity_error(args.len()));
            }
            call.data_points.push(data_point(&args[0])?);
            match &args[1] {
                Arg::Expr(EnpiExpr::Number(t), _) => call.threshold = Some(*t),
                other => {
                    return Err(ParseError::new(
                        other.span(),
                        format!("threshold of `{func}` must be a numeric literal"),
                    ))
                }
            }
        }
        AggregateFn::Custom => {
            let Some((first, rest)) = args.split_first() else {
                return Err(ParseError::new(
                    close,
                    "`custom` needs an analyzer name string as first argument",
                ));
            };
            match first {
                Arg::Str(name, _) => call.analyzer = Some(name.clone()),
                other => {
                    return Err(ParseError::new(
                        other.span(),
                        "first argument of `custom` must be a quoted analyzer name",
                    ))
                }
            }
            for arg in rest {
                call.data_points.push(data_point(arg)?);
            }
        }
        _ => {
            if args.len() != 1 {
                return Err(arity_error(args.len()));
            }
            call.data_points.push(data_point(&args[0])?);
        }
    }
    Ok(call)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(func: AggregateFn, dp: &str) -> EnpiExpr {
        EnpiExpr::Aggregate(AggregateCall {
            func,
            analyzer: None,
            data_points: vec![dp.to_string()],
            threshold: None,
        })
    }

    #[test]
    fn ratio_of_aggregates() {
        let e = parse_enpi("integral(power) / sum_delta(parts)").unwrap();
        assert_eq!(
            e,
            EnpiExpr::Binary {
                op: BinOp::Div,
                lhs: Box::new(agg(AggregateFn::Integral, "power")),
                rhs: Box::new(agg(AggregateFn::SumDelta, "parts")),
            }
        );
    }

    #[test]
    fn duration_ratio() {
        let e = parse_enpi("duration_below(power, 100) / window_length()").unwrap();
        let calls = e.aggregates();
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[0].func, AggregateFn::DurationBelow);
        assert_eq!(calls[0].threshold, Some(100.0));
        assert_eq!(calls[1].func, AggregateFn::WindowLength);
        assert!(calls[1].data_points.is_empty());
    }

    #[test]
    fn trailing_comma_expects_expression() {
        let err = parse_enpi("mean(power,)").unwrap_err();
        assert!(err.message.contains("expected expression"), "{}", err.message);
        assert_eq!(err.span.column, 12);
    }

    #[test]
    fn unknown_aggregate_and_arity() {
        let err = parse_enpi("median(power)").unwrap_err();
        assert!(err.message.contains("unknown aggregate `median`"));
        let err = parse_enpi("mean(power, parts)").unwrap_err();
        assert!(err.message.contains("wrong number of arguments"));
        let err = parse_enpi("duration_above(power)").unwrap_err();
        assert!(err.message.contains("wrong number of arguments"));
        assert!(parse_enpi("window_length(power)").is_err());
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_enpi("1 - 2 - 3 * 4 / 2").unwrap();
        assert_eq!(e.constant_value(), Some(1.0 - 2.0 - 3.0 * 4.0 / 2.0));
        assert_eq!(e.to_string(), "1 - 2 - 3 * 4 / 2");
        let e = parse_enpi("1 - (2 - 3)").unwrap();
        assert_eq!(e.constant_value(), Some(2.0));
        assert_eq!(e.to_string(), "1 - (2 - 3)");
    }

    #[test]
    fn custom_analyzer_call() {
        let e = parse_enpi("custom(\"linreg_slope\", power) * 3600").unwrap();
        let calls = e.aggregates();
        assert_eq!(calls[0].analyzer.as_deref(), Some("linreg_slope"));
        assert_eq!(calls[0].data_points, vec!["power"]);
        assert_eq!(e.to_string(), "custom(\"linreg_slope\", power) * 3600");
        assert!(parse_enpi("custom(power)").is_err());
    }

    #[test]
    fn negative_threshold_and_display_round_trip() {
        let src = "duration_below(temp, -5) + mean(temp) / (max(temp) - min(temp))";
        let e = parse_enpi(src).unwrap();
        assert_eq!(e.to_string(), src);
        assert_eq!(parse_enpi(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn constant_zero_division_detected() {
        assert!(parse_enpi("mean(p) / 0").unwrap().divides_by_constant_zero());
        assert!(parse_enpi("mean(p) / (2 - 2)").unwrap().divides_by_constant_zero());
        assert!(!parse_enpi("mean(p) / sum_delta(c)").unwrap().divides_by_constant_zero());
    }

    #[test]
    fn bare_identifier_is_rejected() {
        let err = parse_enpi("power / 2").unwrap_err();
        assert!(err.message.contains("bare identifier"));
    }
}
