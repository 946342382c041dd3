//! The relational expression language used by view definitions.
//!
//! ```text
//! expr := NAME | select(expr, pred) | join(expr, expr)
//!       | project(expr, NAME[, NAME...]) | group(expr, NAME[, NAME...])
//! pred := pred AND pred | pred OR pred | NOT pred | (pred) | NAME op literal
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Text(String),
    Number(Decimal),
    Boolean(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Text(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
            Literal::Number(d) => write!(f, "{d}"),
            Literal::Boolean(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Compare {
        column: String,
        op: CmpOp,
        literal: Literal,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn compare(column: &str, op: CmpOp, literal: Literal) -> Self {
        Predicate::Compare {
            column: column.to_string(),
            op,
            literal,
        }
    }

    pub fn and(self, other: Predicate) -> Self {
        Predicate::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Predicate) -> Self {
        Predicate::Or(Box::new(self), Box::new(other))
    }

    pub fn negate(self) -> Self {
        Predicate::Not(Box::new(self))
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Compare { column, op, literal } => write!(f, "{column} {} {literal}", op.symbol()),
            Predicate::And(a, b) => write!(f, "({a} AND {b})"),
            Predicate::Or(a, b) => write!(f, "({a} OR {b})"),
            Predicate::Not(a) => write!(f, "NOT ({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelExpr {
    Base(String),
    Select(Box<RelExpr>, Predicate),
    NaturalJoin(Box<RelExpr>, Box<RelExpr>),
    Project(Box<RelExpr>, Vec<String>),
    GroupCount(Box<RelExpr>, Vec<String>),
}

impl RelExpr {
    pub fn base(name: &str) -> Self {
        RelExpr::Base(name.to_string())
    }

    pub fn select(self, pred: Predicate) -> Self {
        RelExpr::Select(Box::new(self), pred)
    }

    pub fn join(self, other: RelExpr) -> Self {
        RelExpr::NaturalJoin(Box::new(self), Box::new(other))
    }

    pub fn project(self, columns: &[&str]) -> Self {
        RelExpr::Project(Box::new(self), columns.iter().map(|c| c.to_string()).collect())
    }

    pub fn group(self, columns: &[&str]) -> Self {
        RelExpr::GroupCount(Box::new(self), columns.iter().map(|c| c.to_string()).collect())
    }

    /// Names of every base table referenced.
    pub fn base_tables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_bases(&mut out);
        out
    }

    fn collect_bases(&self, out: &mut BTreeSet<String>) {
        match self {
            RelExpr::Base(name) => {
                out.insert(name.clone());
            }
            RelExpr::Select(e, _) | RelExpr::Project(e, _) | RelExpr::GroupCount(e, _) => {
                e.collect_bases(out)
            }
            RelExpr::NaturalJoin(a, b) => {
                a.collect_bases(out);
                b.collect_bases(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            RelExpr::Base(_) => 0,
            RelExpr::Select(e, _) | RelExpr::Project(e, _) | RelExpr::GroupCount(e, _) => 1 + e.depth(),
            RelExpr::NaturalJoin(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

impl fmt::Display for RelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelExpr::Base(name) => f.write_str(name),
            RelExpr::Select(e, p) => write!(f, "select({e}, {p})"),
            RelExpr::NaturalJoin(a, b) => write!(f, "join({a}, {b})"),
            RelExpr::Project(e, cols) => write!(f, "project({e}, {})", cols.join(", ")),
            RelExpr::GroupCount(e, cols) => write!(f, "group({e}, {})", cols.join(", ")),
        }
    }
}

impl FromStr for RelExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_expr(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Name(String),
    Str(String),
    Num(Decimal),
    Op(CmpOp),
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>> {
    let err = |offset: usize, message: String| Error::Expr { offset, message };
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let (pos, c) = bytes[i];
        let peek = bytes.get(i + 1).map(|&(_, c)| c);
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                tokens.push((Token::LParen, pos));
                i += 1;
            }
            ')' => {
                tokens.push((Token::RParen, pos));
                i += 1;
            }
            ',' => {
                tokens.push((Token::Comma, pos));
                i += 1;
            }
            '=' => {
                tokens.push((Token::Op(CmpOp::Eq), pos));
                i += if peek == Some('=') { 2 } else { 1 };
            }
            '!' if peek == Some('=') => {
                tokens.push((Token::Op(CmpOp::Ne), pos));
                i += 2;
            }
            '<' => {
                let (op, width) = match peek {
                    Some('=') => (CmpOp::Le, 2),
                    Some('>') => (CmpOp::Ne, 2),
                    _ => (CmpOp::Lt, 1),
                };
                tokens.push((Token::Op(op), pos));
                i += width;
            }
            '>' => {
                let (op, width) = if peek == Some('=') {
                    (CmpOp::Ge, 2)
                } else {
                    (CmpOp::Gt, 1)
                };
                tokens.push((Token::Op(op), pos));
                i += width;
            }
            '≠' | '≤' | '≥' => {
                let op = match c {
                    '≠' => CmpOp::Ne,
                    '≤' => CmpOp::Le,
                    _ => CmpOp::Ge,
                };
                tokens.push((Token::Op(op), pos));
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        None => return Err(err(pos, "unterminated string literal".into())),
                        Some(&(_, '"')) => {
                            i += 1;
                            break;
                        }
                        Some(&(_, '\\')) => {
                            let (_, escaped) = *bytes
                                .get(i + 1)
                                .ok_or_else(|| err(pos, "unterminated string literal".into()))?;
                            s.push(escaped);
                            i += 2;
                        }
                        Some(&(_, ch)) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                tokens.push((Token::Str(s), pos));
            }
            c if c.is_ascii_digit()
                || (c == '-' && peek.is_some_and(|p| p.is_ascii_digit() || p == '.'))
                || c == '.' =>
            {
                let start = i;
                i += 1;
                while bytes
                    .get(i)
                    .is_some_and(|&(_, ch)| ch.is_ascii_digit() || ch == '.')
                {
                    i += 1;
                }
                let end = bytes.get(i).map(|&(p, _)| p).unwrap_or(text.len());
                let raw = &text[bytes[start].0..end];
                let n = Decimal::from_str(raw).map_err(|_| err(pos, format!("bad number `{raw}`")))?;
                tokens.push((Token::Num(n), pos));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while bytes
                    .get(i)
                    .is_some_and(|&(_, ch)| ch.is_alphanumeric() || ch == '_' || ch == '-')
                {
                    i += 1;
                }
                let end = bytes.get(i).map(|&(p, _)| p).unwrap_or(text.len());
                tokens.push((Token::Name(text[bytes[start].0..end].to_string()), pos));
            }
            other => return Err(err(pos, format!("unexpected character `{other}`"))),
        }
    }
    tokens.push((Token::End, text.len()));
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn next(&mut self) -> Token {
        let token = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        token
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Expr {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<()> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            self.fail(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn name(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Token::Name(n) => {
                self.next();
                Ok(n)
            }
            other => self.fail(format!("expected {what}, found {}", describe(&other))),
        }
    }

    fn expr(&mut self) -> Result<RelExpr> {
        let name = self.name("a table name or function")?;
        if *self.peek() != Token::LParen {
            return Ok(RelExpr::Base(name));
        }
        let func = name.to_ascii_lowercase();
        if !matches!(func.as_str(), "select" | "join" | "project" | "group") {
            return self.fail(format!(
                "unknown function `{name}` (expected select, join, project or group)"
            ));
        }
        self.next();
        let child = self.expr()?;
        self.expect(Token::Comma, "`,`")?;
        let expr = match func.as_str() {
            "select" => RelExpr::Select(Box::new(child), self.pred_or()?),
            "join" => RelExpr::NaturalJoin(Box::new(child), Box::new(self.expr()?)),
            _ => {
                let mut columns = vec![self.name("a column name")?];
                while *self.peek() == Token::Comma {
                    self.next();
                    columns.push(self.name("a column name")?);
                }
                if func == "project" {
                    RelExpr::Project(Box::new(child), columns)
                } else {
                    RelExpr::GroupCount(Box::new(child), columns)
                }
            }
        };
        self.expect(Token::RParen, "`)`")?;
        Ok(expr)
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Token::Name(n) if n.eq_ignore_ascii_case(kw))
    }

    fn pred_or(&mut self) -> Result<Predicate> {
        let mut left = self.pred_and()?;
        while self.keyword("or") {
            self.next();
            left = left.or(self.pred_and()?);
        }
        Ok(left)
    }

    fn pred_and(&mut self) -> Result<Predicate> {
        let mut left = self.pred_unary()?;
        while self.keyword("and") {
            self.next();
            left = left.and(self.pred_unary()?);
        }
        Ok(left)
    }

    fn pred_unary(&mut self) -> Result<Predicate> {
        if self.keyword("not") {
            self.next();
            return Ok(self.pred_unary()?.negate());
        }
        if *self.peek() == Token::LParen {
            self.next();
            let inner = self.pred_or()?;
            self.expect(Token::RParen, "`)`")?;
            return Ok(inner);
        }
        let column = self.name("a column name")?;
        let op = match self.next() {
            Token::Op(op) => op,
            other => {
                self.pos -= 1;
                return self.fail(format!(
                    "expected a comparison operator, found {}",
                    describe(&other)
                ));
            }
        };
        let literal = match self.peek().clone() {
            Token::Str(s) => Literal::Text(s),
            Token::Num(n) => Literal::Number(n),
            Token::Name(n) if n.eq_ignore_ascii_case("true") => Literal::Boolean(true),
            Token::Name(n) if n.eq_ignore_ascii_case("false") => Literal::Boolean(false),
            other => {
                return self.fail(format!(
                    "expected a literal (\"text\", number, true or false), found {}",
                    describe(&other)
                ))
            }
        };
        self.next();
        Ok(Predicate::Compare { column, op, literal })
    }
}

fn describe(token: &Token) -> String {
    match token {
        Token::Name(n) => format!("`{n}`"),
        Token::Str(s) => format!("string \"{s}\""),
        Token::Num(n) => format!("number {n}"),
        Token::Op(op) => format!("`{}`", op.symbol()),
        Token::LParen => "`(`".into(),
        Token::RParen => "`)`".into(),
        Token::Comma => "`,`".into(),
        Token::End => "end of input".into(),
    }
}

pub fn parse_expr(text: &str) -> Result<RelExpr> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
    };
    let expr = parser.expr()?;
    if *parser.peek() != Token::End {
        return parser.fail(format!("unexpected {} after expression", describe(parser.peek())));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clerks_view() {
        let e = parse_expr(r#"select(join(EMPLOYEE, PERSON), Role = "clerk")"#).unwrap();
        let want = RelExpr::base("EMPLOYEE")
            .join(RelExpr::base("PERSON"))
            .select(Predicate::compare(
                "Role",
                CmpOp::Eq,
                Literal::Text("clerk".into()),
            ));
        assert_eq!(e, want);
    }

    #[test]
    fn bare_table() {
        assert_eq!(parse_expr("EMPLOYEE").unwrap(), RelExpr::base("EMPLOYEE"));
        assert_eq!(parse_expr("ROLE-SALARYS").unwrap(), RelExpr::base("ROLE-SALARYS"));
    }

    #[test]
    fn grouped_managers() {
        let e = parse_expr(r#"group(select(join(EMPLOYEE, PERSON), Role = "manager"), Gender)"#).unwrap();
        match &e {
            RelExpr::GroupCount(child, cols) => {
                assert_eq!(cols, &["Gender"]);
                assert!(matches!(**child, RelExpr::Select(..)));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            e.base_tables().into_iter().collect::<Vec<_>>(),
            ["EMPLOYEE", "PERSON"]
        );
        assert_eq!(e.depth(), 3);
    }

    #[test]
    fn predicate_precedence() {
        let e = parse_expr("select(T, a = 1 OR b = 2 AND NOT c > 3)").unwrap();
        let RelExpr::Select(_, p) = e else { panic!() };
        let want = Predicate::compare("a", CmpOp::Eq, Literal::Number(1.into())).or(Predicate::compare(
            "b",
            CmpOp::Eq,
            Literal::Number(2.into()),
        )
        .and(Predicate::compare("c", CmpOp::Gt, Literal::Number(3.into())).negate()));
        assert_eq!(p, want);

        let e = parse_expr("select(T, (a = 1 OR b = 2) and flag = TRUE)").unwrap();
        let RelExpr::Select(_, Predicate::And(left, right)) = e else {
            panic!()
        };
        assert!(matches!(*left, Predicate::Or(..)));
        assert!(matches!(
            *right,
            Predicate::Compare {
                literal: Literal::Boolean(true),
                ..
            }
        ));
    }

    #[test]
    fn operators() {
        for (src, op) in [
            ("=", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<>", CmpOp::Ne),
            ("≠", CmpOp::Ne),
            ("<", CmpOp::Lt),
            ("<=", CmpOp::Le),
            ("≤", CmpOp::Le),
            (">", CmpOp::Gt),
            (">=", CmpOp::Ge),
            ("≥", CmpOp::Ge),
        ] {
            let e = parse_expr(&format!("select(T, x {src} -2.5)")).unwrap();
            let RelExpr::Select(_, Predicate::Compare { op: got, literal, .. }) = e else {
                panic!()
            };
            assert_eq!(got, op, "{src}");
            assert_eq!(literal, Literal::Number(Decimal::new(-25, 1)));
        }
    }

    #[test]
    fn errors_carry_offsets() {
        let err = parse_expr("union(A, B)").unwrap_err();
        assert!(matches!(err, Error::Expr { offset: 5, .. }), "{err}");
        assert!(err.to_string().contains("unknown function"));
        for bad in [
            "",
            "select(A)",
            "select(A, x)",
            "select(A, x = )",
            "join(A B)",
            "project(A)",
            "A B",
            "select(A, x = \"open",
            "select(A, x = y)",
            "A $",
        ] {
            assert!(parse_expr(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn display_round_trips() {
        for src in [
            r#"select(join(EMPLOYEE, PERSON), Role = "clerk")"#,
            r#"project(select(T, NOT (a < 3) AND b != "x\"y"), a, b)"#,
            "group(join(A, join(B, C)), x, y)",
        ] {
            let e = parse_expr(src).unwrap();
            assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        }
    }
}
