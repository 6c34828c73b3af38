//! Recursive-descent parser producing the typed tree.
//!
//! Follows the Python 3 grammar closely enough for introductory programs.
//! `match` statements and parenthesized `with` items are not supported.

use super::lexer::{tokenize, tokenize_embedded, Token, TokenKind};
use super::span::{Pos, Span};
use super::tree::*;
use super::SyntaxError;

type PResult<T> = Result<T, SyntaxError>;

const AUG_OPS: &[&str] = &["+=", "-=", "*=", "@=", "/=", "//=", "%=", "**=", "<<=", ">>=", "|=", "^=", "&="];

pub fn parse_module(source: &str) -> PResult<Module> {
    let tokens = tokenize(source)?;
    let mut parser = Parser::new(tokens);
    let body = parser.file()?;
    let end = Pos::START.advance(source);
    Ok(Module { body, span: Span::new(Pos::START, end) })
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    last_end: Pos,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        let last_end = toks.first().map(|t| t.span.start).unwrap_or_default();
        Parser { toks, i: 0, last_end }
    }

    // ---- token helpers ----

    fn peek(&self) -> &Token {
        &self.toks[self.i.min(self.toks.len() - 1)]
    }

    fn peek_n(&self, n: usize) -> &Token {
        &self.toks[(self.i + n).min(self.toks.len() - 1)]
    }

    fn advance(&mut self) -> Token {
        let tok = self.peek().clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        if !matches!(tok.kind, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent | TokenKind::EndMarker) {
            self.last_end = tok.span.end;
        }
        tok
    }

    fn at_op(&self, op: &str) -> bool {
        self.peek().is_op(op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_keyword(kw)
    }

    fn at_kind(&self, kind: TokenKind) -> bool {
        self.peek().kind == kind
    }

    fn eat_op(&mut self, op: &str) -> Option<Token> {
        self.at_op(op).then(|| self.advance())
    }

    fn eat_kw(&mut self, kw: &str) -> Option<Token> {
        self.at_kw(kw).then(|| self.advance())
    }

    fn error_at(&self, tok: &Token, message: impl Into<String>) -> SyntaxError {
        SyntaxError { message: message.into(), line: tok.span.start.line, col: tok.span.start.col }
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        self.error_at(self.peek(), message)
    }

    fn expect_op(&mut self, op: &str) -> PResult<Token> {
        if self.at_op(op) {
            Ok(self.advance())
        } else {
            Err(self.error(format!("expected '{op}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Token> {
        if self.at_kw(kw) {
            Ok(self.advance())
        } else {
            Err(self.error(format!("expected '{kw}'")))
        }
    }

    fn expect_name(&mut self) -> PResult<Ident> {
        if self.at_kind(TokenKind::Name) {
            let tok = self.advance();
            Ok(Ident { name: tok.text, span: tok.span })
        } else {
            Err(self.error("expected a name"))
        }
    }

    fn span_from(&self, start: Pos) -> Span {
        Span::new(start, self.last_end)
    }

    fn start(&self) -> Pos {
        self.peek().span.start
    }

    // ---- statements ----

    fn file(&mut self) -> PResult<Vec<Stmt>> {
        let mut body = Vec::new();
        loop {
            match self.peek().kind {
                TokenKind::EndMarker => break,
                TokenKind::Newline => {
                    self.advance();
                }
                TokenKind::Indent => return Err(self.error("unexpected indent")),
                TokenKind::Dedent => return Err(self.error("unexpected unindent")),
                _ => body.extend(self.statement()?),
            }
        }
        Ok(body)
    }

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        let tok = self.peek();
        let compound = tok.is_op("@")
            || (tok.kind == TokenKind::Keyword
                && matches!(tok.text.as_str(), "if" | "while" | "for" | "try" | "with" | "def" | "class" | "async"));
        if compound {
            Ok(vec![self.compound_statement()?])
        } else {
            self.simple_statements()
        }
    }

    fn block(&mut self) -> PResult<Block> {
        if self.at_kind(TokenKind::Newline) {
            self.advance();
            if !self.at_kind(TokenKind::Indent) {
                return Err(self.error("expected an indented block"));
            }
            self.advance();
            let mut body = Vec::new();
            while !self.at_kind(TokenKind::Dedent) && !self.at_kind(TokenKind::EndMarker) {
                if self.at_kind(TokenKind::Indent) {
                    return Err(self.error("unexpected indent"));
                }
                body.extend(self.statement()?);
            }
            if self.at_kind(TokenKind::Dedent) {
                self.advance();
            }
            let span = Span::new(body[0].span.start, body.last().unwrap().span.end);
            Ok(Block { body, span })
        } else {
            let body = self.simple_statements()?;
            let span = Span::new(body[0].span.start, body.last().unwrap().span.end);
            Ok(Block { body, span })
        }
    }

    fn colon_block(&mut self) -> PResult<Block> {
        self.expect_op(":")?;
        self.block()
    }

    fn compound_statement(&mut self) -> PResult<Stmt> {
        let start = self.start();
        if self.at_op("@") {
            let mut decorators = Vec::new();
            while self.eat_op("@").is_some() {
                decorators.push(self.namedexpr_test()?);
                if !self.at_kind(TokenKind::Newline) {
                    return Err(self.error("invalid syntax"));
                }
                self.advance();
            }
            self.eat_kw("async");
            return if self.at_kw("def") {
                self.function_def(start, decorators)
            } else if self.at_kw("class") {
                self.class_def(start, decorators)
            } else {
                Err(self.error("invalid syntax"))
            };
        }
        if self.eat_kw("async").is_some() && !(self.at_kw("def") || self.at_kw("for") || self.at_kw("with")) {
            return Err(self.error("invalid syntax"));
        }
        let kw = self.peek().text.clone();
        match kw.as_str() {
            "if" => self.if_stmt(start),
            "while" => {
                self.advance();
                let test = self.namedexpr_test()?;
                let body = self.colon_block()?;
                let orelse = self.else_block()?;
                Ok(Stmt { kind: StmtKind::While { test, body, orelse }, span: self.span_from(start) })
            }
            "for" => {
                self.advance();
                let target = self.target_list()?;
                self.expect_kw("in")?;
                let iter = self.star_expressions()?;
                let body = self.colon_block()?;
                let orelse = self.else_block()?;
                Ok(Stmt { kind: StmtKind::For { target, iter, body, orelse }, span: self.span_from(start) })
            }
            "try" => self.try_stmt(start),
            "with" => {
                self.advance();
                let mut items = Vec::new();
                loop {
                    let item_start = self.start();
                    let context = self.test()?;
                    let target = if self.eat_kw("as").is_some() {
                        let t = self.star_target()?;
                        Some(t)
                    } else {
                        None
                    };
                    items.push(WithItem { context, target, span: self.span_from(item_start) });
                    if self.eat_op(",").is_none() {
                        break;
                    }
                }
                let body = self.colon_block()?;
                Ok(Stmt { kind: StmtKind::With { items, body }, span: self.span_from(start) })
            }
            "def" => self.function_def(start, Vec::new()),
            "class" => self.class_def(start, Vec::new()),
            _ => Err(self.error("invalid syntax")),
        }
    }

    fn else_block(&mut self) -> PResult<Option<Block>> {
        if self.eat_kw("else").is_some() {
            Ok(Some(self.colon_block()?))
        } else {
            Ok(None)
        }
    }

    fn if_stmt(&mut self, start: Pos) -> PResult<Stmt> {
        let mut branches = Vec::new();
        let mut kw = "if";
        while self.at_kw(kw) {
            let branch_start = self.start();
            self.advance();
            let test = self.namedexpr_test()?;
            let body = self.colon_block()?;
            branches.push(Branch { test, body, span: self.span_from(branch_start) });
            kw = "elif";
        }
        let orelse = self.else_block()?;
        Ok(Stmt { kind: StmtKind::If { branches, orelse }, span: self.span_from(start) })
    }

    fn try_stmt(&mut self, start: Pos) -> PResult<Stmt> {
        self.advance();
        let body = self.colon_block()?;
        let mut handlers = Vec::new();
        while self.at_kw("except") {
            let h_start = self.start();
            self.advance();
            let (kind_expr, name) = if self.at_op(":") {
                (None, None)
            } else {
                let e = self.test()?;
                let name = if self.eat_kw("as").is_some() { Some(self.expect_name()?) } else { None };
                (Some(e), name)
            };
            let hbody = self.colon_block()?;
            handlers.push(Handler { kind_expr, name, body: hbody, span: self.span_from(h_start) });
        }
        let orelse = if handlers.is_empty() { None } else { self.else_block()? };
        let finalbody = if self.eat_kw("finally").is_some() { Some(self.colon_block()?) } else { None };
        if handlers.is_empty() && finalbody.is_none() {
            return Err(self.error("expected 'except' or 'finally' block"));
        }
        Ok(Stmt { kind: StmtKind::Try { body, handlers, orelse, finalbody }, span: self.span_from(start) })
    }

    fn function_def(&mut self, start: Pos, decorators: Vec<Expr>) -> PResult<Stmt> {
        self.expect_kw("def")?;
        let name = self.expect_name()?;
        self.expect_op("(")?;
        let params = self.parameters(")", true)?;
        self.expect_op(")")?;
        let returns = if self.eat_op("->").is_some() { Some(self.test()?) } else { None };
        let body = self.colon_block()?;
        Ok(Stmt {
            kind: StmtKind::FunctionDef { decorators, name, params, returns, body },
            span: self.span_from(start),
        })
    }

    fn class_def(&mut self, start: Pos, decorators: Vec<Expr>) -> PResult<Stmt> {
        self.expect_kw("class")?;
        let name = self.expect_name()?;
        let bases = if self.eat_op("(").is_some() {
            let args = self.arguments()?;
            self.expect_op(")")?;
            args
        } else {
            Vec::new()
        };
        let body = self.colon_block()?;
        Ok(Stmt { kind: StmtKind::ClassDef { decorators, name, bases, body }, span: self.span_from(start) })
    }

    fn parameters(&mut self, close: &str, annotations: bool) -> PResult<Vec<Param>> {
        let mut params = Vec::new();
        let mut kw_only = false;
        while !self.at_op(close) {
            let p_start = self.start();
            if self.eat_op("/").is_some() {
            } else if self.eat_op("*").is_some() {
                kw_only = true;
                if self.at_kind(TokenKind::Name) {
                    let name = self.expect_name()?;
                    let annotation = self.param_annotation(annotations)?;
                    params.push(Param {
                        name,
                        kind: ParamKind::VarArgs,
                        annotation,
                        default: None,
                        span: self.span_from(p_start),
                    });
                }
            } else if self.eat_op("**").is_some() {
                let name = self.expect_name()?;
                let annotation = self.param_annotation(annotations)?;
                params.push(Param {
                    name,
                    kind: ParamKind::KwArgs,
                    annotation,
                    default: None,
                    span: self.span_from(p_start),
                });
            } else {
                let name = self.expect_name()?;
                let annotation = self.param_annotation(annotations)?;
                let default = if self.eat_op("=").is_some() { Some(self.test()?) } else { None };
                params.push(Param {
                    name,
                    kind: if kw_only { ParamKind::KwOnly } else { ParamKind::Normal },
                    annotation,
                    default,
                    span: self.span_from(p_start),
                });
            }
            if self.eat_op(",").is_none() {
                break;
            }
        }
        Ok(params)
    }

    fn param_annotation(&mut self, allowed: bool) -> PResult<Option<Expr>> {
        if allowed && self.eat_op(":").is_some() {
            Ok(Some(self.test()?))
        } else {
            Ok(None)
        }
    }

    fn simple_statements(&mut self) -> PResult<Vec<Stmt>> {
        let mut stmts = vec![self.small_statement()?];
        while self.eat_op(";").is_some() {
            if self.at_kind(TokenKind::Newline) {
                break;
            }
            stmts.push(self.small_statement()?);
        }
        if !self.at_kind(TokenKind::Newline) {
            return Err(self.error("invalid syntax"));
        }
        self.advance();
        Ok(stmts)
    }

    fn at_stmt_end(&self) -> bool {
        self.at_kind(TokenKind::Newline) || self.at_op(";")
    }

    fn small_statement(&mut self) -> PResult<Stmt> {
        let start = self.start();
        let tok = self.peek().clone();
        let kind = if tok.kind == TokenKind::Keyword {
            match tok.text.as_str() {
                "pass" => {
                    self.advance();
                    StmtKind::Pass
                }
                "break" => {
                    self.advance();
                    StmtKind::Break
                }
                "continue" => {
                    self.advance();
                    StmtKind::Continue
                }
                "return" => {
                    self.advance();
                    let value = if self.at_stmt_end() { None } else { Some(self.star_expressions()?) };
                    StmtKind::Return(value)
                }
                "raise" => {
                    self.advance();
                    let exc = if self.at_stmt_end() { None } else { Some(self.test()?) };
                    let cause = if exc.is_some() && self.eat_kw("from").is_some() { Some(self.test()?) } else { None };
                    StmtKind::Raise { exc, cause }
                }
                "global" | "nonlocal" => {
                    self.advance();
                    let mut names = vec![self.expect_name()?];
                    while self.eat_op(",").is_some() {
                        names.push(self.expect_name()?);
                    }
                    if tok.text == "global" {
                        StmtKind::Global(names)
                    } else {
                        StmtKind::Nonlocal(names)
                    }
                }
                "del" => {
                    self.advance();
                    let target = self.target_list()?;
                    let targets = match target.kind {
                        ExprKind::Tuple(elts) if !self.toks[self.i - 1].is_op(")") => elts,
                        _ => vec![target],
                    };
                    StmtKind::Delete(targets)
                }
                "assert" => {
                    self.advance();
                    let test = self.test()?;
                    let msg = if self.eat_op(",").is_some() { Some(self.test()?) } else { None };
                    StmtKind::Assert { test, msg }
                }
                "import" => {
                    self.advance();
                    let mut names = Vec::new();
                    loop {
                        let a_start = self.start();
                        let path = self.dotted_name()?;
                        let asname = if self.eat_kw("as").is_some() { Some(self.expect_name()?) } else { None };
                        names.push(Alias { path, asname, span: self.span_from(a_start) });
                        if self.eat_op(",").is_none() {
                            break;
                        }
                    }
                    StmtKind::Import(names)
                }
                "from" => self.import_from()?,
                _ => return self.expression_statement(start),
            }
        } else {
            return self.expression_statement(start);
        };
        Ok(Stmt { kind, span: self.span_from(start) })
    }

    fn dotted_name(&mut self) -> PResult<Vec<Ident>> {
        let mut path = vec![self.expect_name()?];
        while self.eat_op(".").is_some() {
            path.push(self.expect_name()?);
        }
        Ok(path)
    }

    fn import_from(&mut self) -> PResult<StmtKind> {
        self.advance();
        let mut level = 0;
        loop {
            if self.eat_op(".").is_some() {
                level += 1;
            } else if self.eat_op("...").is_some() {
                level += 3;
            } else {
                break;
            }
        }
        let module = if self.at_kw("import") && level > 0 { Vec::new() } else { self.dotted_name()? };
        self.expect_kw("import")?;
        if self.eat_op("*").is_some() {
            return Ok(StmtKind::ImportFrom { module, level, names: Vec::new(), star: true });
        }
        let paren = self.eat_op("(").is_some();
        let mut names = Vec::new();
        loop {
            if paren && self.at_op(")") {
                break;
            }
            let a_start = self.start();
            let name = self.expect_name()?;
            let asname = if self.eat_kw("as").is_some() { Some(self.expect_name()?) } else { None };
            names.push(Alias { path: vec![name], asname, span: self.span_from(a_start) });
            if self.eat_op(",").is_none() {
                break;
            }
        }
        if paren {
            self.expect_op(")")?;
        }
        if names.is_empty() {
            return Err(self.error("expected a name"));
        }
        Ok(StmtKind::ImportFrom { module, level, names, star: false })
    }

    fn expression_statement(&mut self, start: Pos) -> PResult<Stmt> {
        let first = self.star_expressions_or_yield()?;
        if self.at_op(":") && !matches!(first.kind, ExprKind::Tuple(_)) {
            self.advance();
            check_target(&first, false)?;
            let annotation = self.test()?;
            let value = if self.eat_op("=").is_some() { Some(self.star_expressions_or_yield()?) } else { None };
            return Ok(Stmt {
                kind: StmtKind::AnnAssign { target: first, annotation, value },
                span: self.span_from(start),
            });
        }
        if self.peek().kind == TokenKind::Op && AUG_OPS.contains(&self.peek().text.as_str()) {
            let op_tok = self.advance();
            if !matches!(first.kind, ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. }) {
                return Err(SyntaxError {
                    message: "illegal expression for augmented assignment".into(),
                    line: first.span.start.line,
                    col: first.span.start.col,
                });
            }
            let op = BinOp::from_symbol(op_tok.text.trim_end_matches('=')).expect("augmented op table");
            let value = self.star_expressions_or_yield()?;
            return Ok(Stmt { kind: StmtKind::AugAssign { target: first, op, value }, span: self.span_from(start) });
        }
        if self.at_op("=") {
            let mut targets = vec![first];
            let value = loop {
                self.advance();
                let e = self.star_expressions_or_yield()?;
                if self.at_op("=") {
                    targets.push(e);
                } else {
                    break e;
                }
            };
            for t in &targets {
                check_target(t, true)?;
            }
            return Ok(Stmt { kind: StmtKind::Assign { targets, value }, span: self.span_from(start) });
        }
        Ok(Stmt { kind: StmtKind::Expr(first), span: self.span_from(start) })
    }

    // ---- expressions ----

    fn star_expressions_or_yield(&mut self) -> PResult<Expr> {
        if self.at_kw("yield") {
            self.yield_expr()
        } else {
            self.star_expressions()
        }
    }

    fn yield_expr(&mut self) -> PResult<Expr> {
        let start = self.start();
        self.expect_kw("yield")?;
        if self.eat_kw("from").is_some() {
            let e = self.test()?;
            return Ok(Expr { kind: ExprKind::YieldFrom(Box::new(e)), span: self.span_from(start) });
        }
        let value = if self.at_stmt_end() || self.at_op(")") || self.at_op("=") {
            None
        } else {
            Some(Box::new(self.star_expressions()?))
        };
        Ok(Expr { kind: ExprKind::Yield(value), span: self.span_from(start) })
    }

    /// Comma-separated expressions; a tuple when a comma is present.
    fn star_expressions(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.star_expression()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",").is_some() {
            if !self.starts_expression() {
                break;
            }
            elts.push(self.star_expression()?);
        }
        Ok(Expr { kind: ExprKind::Tuple(elts), span: self.span_from(start) })
    }

    fn starts_expression(&self) -> bool {
        let t = self.peek();
        match t.kind {
            TokenKind::Name | TokenKind::Number | TokenKind::String => true,
            TokenKind::Keyword => {
                matches!(t.text.as_str(), "None" | "True" | "False" | "not" | "lambda" | "await" | "yield")
            }
            TokenKind::Op => matches!(t.text.as_str(), "(" | "[" | "{" | "-" | "+" | "~" | "*" | "..."),
            _ => false,
        }
    }

    fn star_expression(&mut self) -> PResult<Expr> {
        let start = self.start();
        if self.eat_op("*").is_some() {
            let e = self.bitor()?;
            return Ok(Expr { kind: ExprKind::Starred(Box::new(e)), span: self.span_from(start) });
        }
        self.namedexpr_test()
    }

    fn namedexpr_test(&mut self) -> PResult<Expr> {
        if self.at_kind(TokenKind::Name) && self.peek_n(1).is_op(":=") {
            let start = self.start();
            let name = self.expect_name()?;
            self.advance();
            let value = self.test()?;
            let target = Expr { span: name.span, kind: ExprKind::Name(name) };
            return Ok(Expr {
                kind: ExprKind::NamedExpr { target: Box::new(target), value: Box::new(value) },
                span: self.span_from(start),
            });
        }
        self.test()
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        let start = self.start();
        let body = self.or_test()?;
        if self.eat_kw("if").is_some() {
            let test = self.or_test()?;
            self.expect_kw("else")?;
            let orelse = self.test()?;
            return Ok(Expr {
                kind: ExprKind::IfExp { test: Box::new(test), body: Box::new(body), orelse: Box::new(orelse) },
                span: self.span_from(start),
            });
        }
        Ok(body)
    }

    fn lambda(&mut self) -> PResult<Expr> {
        let start = self.start();
        self.expect_kw("lambda")?;
        let params = self.parameters(":", false)?;
        self.expect_op(":")?;
        let body = self.test()?;
        Ok(Expr { kind: ExprKind::Lambda { params, body: Box::new(body) }, span: self.span_from(start) })
    }

    fn or_test(&mut self) -> PResult<Expr> {
        self.bool_chain("or", BoolOp::Or, Self::and_test)
    }

    fn and_test(&mut self) -> PResult<Expr> {
        self.bool_chain("and", BoolOp::And, Self::not_test)
    }

    fn bool_chain(&mut self, kw: &str, op: BoolOp, next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let start = self.start();
        let first = next(self)?;
        if !self.at_kw(kw) {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw(kw).is_some() {
            values.push(next(self)?);
        }
        Ok(Expr { kind: ExprKind::BoolOp { op, values }, span: self.span_from(start) })
    }

    fn not_test(&mut self) -> PResult<Expr> {
        let start = self.start();
        if self.eat_kw("not").is_some() {
            let operand = self.not_test()?;
            return Ok(Expr {
                kind: ExprKind::UnaryOp { op: UnaryOp::Not, operand: Box::new(operand) },
                span: self.span_from(start),
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let start = self.start();
        let left = self.bitor()?;
        let mut ops = Vec::new();
        let mut comparators = Vec::new();
        loop {
            let t = self.peek();
            let op = match (t.kind, t.text.as_str()) {
                (TokenKind::Op, "<") => CmpOp::Lt,
                (TokenKind::Op, ">") => CmpOp::Gt,
                (TokenKind::Op, "==") => CmpOp::Eq,
                (TokenKind::Op, ">=") => CmpOp::GtE,
                (TokenKind::Op, "<=") => CmpOp::LtE,
                (TokenKind::Op, "!=") => CmpOp::NotEq,
                (TokenKind::Keyword, "in") => CmpOp::In,
                (TokenKind::Keyword, "not") if self.peek_n(1).is_keyword("in") => {
                    self.advance();
                    CmpOp::NotIn
                }
                (TokenKind::Keyword, "is") => {
                    if self.peek_n(1).is_keyword("not") {
                        self.advance();
                        CmpOp::IsNot
                    } else {
                        CmpOp::Is
                    }
                }
                _ => break,
            };
            self.advance();
            ops.push(op);
            comparators.push(self.bitor()?);
        }
        if ops.is_empty() {
            return Ok(left);
        }
        Ok(Expr { kind: ExprKind::Compare { left: Box::new(left), ops, comparators }, span: self.span_from(start) })
    }

    fn binary_level(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let start = self.start();
        let mut left = next(self)?;
        loop {
            let t = self.peek();
            if t.kind != TokenKind::Op || !ops.contains(&t.text.as_str()) {
                break;
            }
            let op = BinOp::from_symbol(&self.advance().text).expect("binary op table");
            let right = next(self)?;
            left = Expr {
                kind: ExprKind::BinOp { left: Box::new(left), op, right: Box::new(right) },
                span: self.span_from(start),
            };
        }
        Ok(left)
    }

    fn bitor(&mut self) -> PResult<Expr> {
        self.binary_level(&["|"], Self::bitxor)
    }

    fn bitxor(&mut self) -> PResult<Expr> {
        self.binary_level(&["^"], Self::bitand)
    }

    fn bitand(&mut self) -> PResult<Expr> {
        self.binary_level(&["&"], Self::shift)
    }

    fn shift(&mut self) -> PResult<Expr> {
        self.binary_level(&["<<", ">>"], Self::arith)
    }

    fn arith(&mut self) -> PResult<Expr> {
        self.binary_level(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary_level(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let start = self.start();
        let op = match self.peek().text.as_str() {
            "+" if self.at_kind(TokenKind::Op) => Some(UnaryOp::Pos),
            "-" if self.at_kind(TokenKind::Op) => Some(UnaryOp::Neg),
            "~" if self.at_kind(TokenKind::Op) => Some(UnaryOp::Invert),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let operand = self.factor()?;
            return Ok(Expr {
                kind: ExprKind::UnaryOp { op, operand: Box::new(operand) },
                span: self.span_from(start),
            });
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let start = self.start();
        let base = if self.eat_kw("await").is_some() {
            let e = self.primary()?;
            Expr { kind: ExprKind::Await(Box::new(e)), span: self.span_from(start) }
        } else {
            self.primary()?
        };
        if self.eat_op("**").is_some() {
            let exp = self.factor()?;
            return Ok(Expr {
                kind: ExprKind::BinOp { left: Box::new(base), op: BinOp::Pow, right: Box::new(exp) },
                span: self.span_from(start),
            });
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.start();
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(").is_some() {
                let args = self.arguments()?;
                self.expect_op(")")?;
                e = Expr { kind: ExprKind::Call { func: Box::new(e), args }, span: self.span_from(start) };
            } else if self.eat_op("[").is_some() {
                let index = self.subscript()?;
                self.expect_op("]")?;
                e = Expr {
                    kind: ExprKind::Subscript { value: Box::new(e), index: Box::new(index) },
                    span: self.span_from(start),
                };
            } else if self.eat_op(".").is_some() {
                let attr = self.expect_name()?;
                e = Expr { kind: ExprKind::Attribute { value: Box::new(e), attr }, span: self.span_from(start) };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn arguments(&mut self) -> PResult<Vec<Arg>> {
        let mut args = Vec::new();
        while !self.at_op(")") {
            let start = self.start();
            if self.eat_op("*").is_some() {
                args.push(Arg::Starred(self.test()?));
            } else if self.eat_op("**").is_some() {
                args.push(Arg::DoubleStarred(self.test()?));
            } else if self.at_kind(TokenKind::Name) && self.peek_n(1).is_op("=") {
                let name = self.expect_name()?;
                self.advance();
                let value = self.test()?;
                args.push(Arg::Keyword { name, value, span: self.span_from(start) });
            } else {
                let e = self.namedexpr_test()?;
                if self.at_kw("for") || self.at_kw("async") {
                    let generators = self.comprehension_clauses()?;
                    args.push(Arg::Positional(Expr {
                        kind: ExprKind::GeneratorExp { elt: Box::new(e), generators },
                        span: self.span_from(start),
                    }));
                } else {
                    args.push(Arg::Positional(e));
                }
            }
            if self.eat_op(",").is_none() {
                break;
            }
        }
        Ok(args)
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.slice_item()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",").is_some() {
            if self.at_op("]") {
                break;
            }
            elts.push(self.slice_item()?);
        }
        Ok(Expr { kind: ExprKind::Tuple(elts), span: self.span_from(start) })
    }

    fn slice_item(&mut self) -> PResult<Expr> {
        let start = self.start();
        let lower = if self.at_op(":") { None } else { Some(self.star_expression()?) };
        if self.eat_op(":").is_none() {
            return lower.ok_or_else(|| self.error("invalid syntax"));
        }
        let bound_end = |p: &Self| p.at_op("]") || p.at_op(",") || p.at_op(":");
        let upper = if bound_end(self) { None } else { Some(Box::new(self.test()?)) };
        let step = if self.eat_op(":").is_some() && !(self.at_op("]") || self.at_op(",")) {
            Some(Box::new(self.test()?))
        } else {
            None
        };
        Ok(Expr { kind: ExprKind::Slice { lower: lower.map(Box::new), upper, step }, span: self.span_from(start) })
    }

    fn comprehension_clauses(&mut self) -> PResult<Vec<Comprehension>> {
        let mut generators = Vec::new();
        while self.at_kw("for") || (self.at_kw("async") && self.peek_n(1).is_keyword("for")) {
            let start = self.start();
            self.eat_kw("async");
            self.expect_kw("for")?;
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let mut ifs = Vec::new();
            while self.eat_kw("if").is_some() {
                ifs.push(self.or_test()?);
            }
            generators.push(Comprehension { target, iter, ifs, span: self.span_from(start) });
        }
        Ok(generators)
    }

    /// Assignment targets of `for`, comprehensions and `del`.
    fn target_list(&mut self) -> PResult<Expr> {
        let start = self.start();
        let first = self.star_target()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",").is_some() {
            if self.at_kw("in") || self.at_op("=") || self.at_kind(TokenKind::Newline) || self.at_op(":") {
                break;
            }
            elts.push(self.star_target()?);
        }
        Ok(Expr { kind: ExprKind::Tuple(elts), span: self.span_from(start) })
    }

    fn star_target(&mut self) -> PResult<Expr> {
        let start = self.start();
        let e = if self.eat_op("*").is_some() {
            let inner = self.bitor()?;
            Expr { kind: ExprKind::Starred(Box::new(inner)), span: self.span_from(start) }
        } else {
            self.bitor()?
        };
        check_target(&e, true)?;
        Ok(e)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let start = self.start();
        let tok = self.peek().clone();
        match tok.kind {
            TokenKind::Name => {
                self.advance();
                Ok(Expr { span: tok.span, kind: ExprKind::Name(Ident { name: tok.text, span: tok.span }) })
            }
            TokenKind::Number => {
                self.advance();
                let lower = tok.text.to_ascii_lowercase();
                let kind = if lower.ends_with('j') {
                    LiteralKind::Complex
                } else if lower.starts_with("0x") || lower.starts_with("0o") || lower.starts_with("0b") {
                    LiteralKind::Int
                } else if lower.contains('.') || lower.contains('e') {
                    LiteralKind::Float
                } else {
                    LiteralKind::Int
                };
                Ok(Expr { span: tok.span, kind: ExprKind::Literal { kind, text: tok.text } })
            }
            TokenKind::String => self.strings(),
            TokenKind::Keyword => {
                let kind = match tok.text.as_str() {
                    "None" => LiteralKind::None,
                    "True" | "False" => LiteralKind::Bool,
                    _ => return Err(self.error("invalid syntax")),
                };
                self.advance();
                Ok(Expr { span: tok.span, kind: ExprKind::Literal { kind, text: tok.text } })
            }
            TokenKind::Op => match tok.text.as_str() {
                "..." => {
                    self.advance();
                    Ok(Expr { span: tok.span, kind: ExprKind::Literal { kind: LiteralKind::Ellipsis, text: tok.text } })
                }
                "(" => {
                    self.advance();
                    if self.eat_op(")").is_some() {
                        return Ok(Expr { kind: ExprKind::Tuple(Vec::new()), span: self.span_from(start) });
                    }
                    if self.at_kw("yield") {
                        let y = self.yield_expr()?;
                        self.expect_op(")")?;
                        return Ok(y);
                    }
                    let first = self.star_expression()?;
                    if self.at_kw("for") || self.at_kw("async") {
                        let generators = self.comprehension_clauses()?;
                        self.expect_op(")")?;
                        return Ok(Expr {
                            kind: ExprKind::GeneratorExp { elt: Box::new(first), generators },
                            span: self.span_from(start),
                        });
                    }
                    if self.eat_op(")").is_some() {
                        return Ok(first);
                    }
                    let mut elts = vec![first];
                    while self.eat_op(",").is_some() {
                        if self.at_op(")") {
                            break;
                        }
                        elts.push(self.star_expression()?);
                    }
                    self.expect_op(")")?;
                    Ok(Expr { kind: ExprKind::Tuple(elts), span: self.span_from(start) })
                }
                "[" => {
                    self.advance();
                    if self.eat_op("]").is_some() {
                        return Ok(Expr { kind: ExprKind::List(Vec::new()), span: self.span_from(start) });
                    }
                    let first = self.star_expression()?;
                    if self.at_kw("for") || self.at_kw("async") {
                        let generators = self.comprehension_clauses()?;
                        self.expect_op("]")?;
                        return Ok(Expr {
                            kind: ExprKind::ListComp { elt: Box::new(first), generators },
                            span: self.span_from(start),
                        });
                    }
                    let mut elts = vec![first];
                    while self.eat_op(",").is_some() {
                        if self.at_op("]") {
                            break;
                        }
                        elts.push(self.star_expression()?);
                    }
                    self.expect_op("]")?;
                    Ok(Expr { kind: ExprKind::List(elts), span: self.span_from(start) })
                }
                "{" => self.brace_display(start),
                _ => Err(self.error("invalid syntax")),
            },
            _ => Err(self.error("invalid syntax")),
        }
    }

    fn brace_display(&mut self, start: Pos) -> PResult<Expr> {
        self.advance();
        if self.eat_op("}").is_some() {
            return Ok(Expr { kind: ExprKind::Dict(Vec::new()), span: self.span_from(start) });
        }
        let first_item = if self.eat_op("**").is_some() {
            DictItem::Spread(self.bitor()?)
        } else {
            let first = self.star_expression()?;
            if self.eat_op(":").is_some() {
                let value = self.test()?;
                if self.at_kw("for") || self.at_kw("async") {
                    let generators = self.comprehension_clauses()?;
                    self.expect_op("}")?;
                    return Ok(Expr {
                        kind: ExprKind::DictComp { key: Box::new(first), value: Box::new(value), generators },
                        span: self.span_from(start),
                    });
                }
                DictItem::Pair(first, value)
            } else {
                // A set display.
                if self.at_kw("for") || self.at_kw("async") {
                    let generators = self.comprehension_clauses()?;
                    self.expect_op("}")?;
                    return Ok(Expr {
                        kind: ExprKind::SetComp { elt: Box::new(first), generators },
                        span: self.span_from(start),
                    });
                }
                let mut elts = vec![first];
                while self.eat_op(",").is_some() {
                    if self.at_op("}") {
                        break;
                    }
                    elts.push(self.star_expression()?);
                }
                self.expect_op("}")?;
                return Ok(Expr { kind: ExprKind::Set(elts), span: self.span_from(start) });
            }
        };
        let mut items = vec![first_item];
        while self.eat_op(",").is_some() {
            if self.at_op("}") {
                break;
            }
            if self.eat_op("**").is_some() {
                items.push(DictItem::Spread(self.bitor()?));
            } else {
                let k = self.test()?;
                self.expect_op(":")?;
                let v = self.test()?;
                items.push(DictItem::Pair(k, v));
            }
        }
        self.expect_op("}")?;
        Ok(Expr { kind: ExprKind::Dict(items), span: self.span_from(start) })
    }

    /// One or more adjacent string tokens (implicit concatenation).
    fn strings(&mut self) -> PResult<Expr> {
        let start = self.start();
        let mut parts = Vec::new();
        while self.at_kind(TokenKind::String) {
            parts.push(self.advance());
        }
        let span = self.span_from(start);
        let mut fields = Vec::new();
        let mut is_f = false;
        let mut is_bytes = false;
        for tok in &parts {
            let prefix: String = tok.text.chars().take_while(|c| *c != '"' && *c != '\'').collect();
            let prefix = prefix.to_ascii_lowercase();
            is_bytes |= prefix.contains('b');
            if prefix.contains('f') {
                is_f = true;
                fields.extend(fstring_fields(tok, prefix.len())?);
            }
        }
        if is_f {
            return Ok(Expr { kind: ExprKind::FString(fields), span });
        }
        let text = parts.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
        let kind = if is_bytes { LiteralKind::Bytes } else { LiteralKind::Str };
        Ok(Expr { kind: ExprKind::Literal { kind, text }, span })
    }
}

/// Parses the replacement fields of one f-string token.
fn fstring_fields(tok: &Token, prefix_len: usize) -> PResult<Vec<Expr>> {
    let text = tok.text.as_str();
    let after_prefix = &text[prefix_len..];
    let quote_len = if after_prefix.starts_with("\"\"\"") || after_prefix.starts_with("'''") { 3 } else { 1 };
    let body_start = prefix_len + quote_len;
    let body_end = text.len().saturating_sub(quote_len).max(body_start);
    let bytes = text.as_bytes();
    let mut fields = Vec::new();
    let mut i = body_start;
    while i < body_end {
        match bytes[i] {
            b'{' if i + 1 < body_end && bytes[i + 1] == b'{' => i += 2,
            b'}' if i + 1 < body_end && bytes[i + 1] == b'}' => i += 2,
            b'{' => {
                let expr_start = i + 1;
                let (expr_end, field_end) = scan_field(bytes, expr_start, body_end);
                let mut fragment = &text[expr_start..expr_end];
                // Self-documenting `{x=}`.
                let trimmed = fragment.trim_end();
                if trimmed.ends_with('=')
                    && !trimmed.ends_with("==")
                    && !trimmed.ends_with("!=")
                    && !trimmed.ends_with("<=")
                    && !trimmed.ends_with(">=")
                {
                    fragment = &trimmed[..trimmed.len() - 1];
                }
                let pos = tok.span.start.advance(&text[..expr_start]);
                if fragment.trim().is_empty() {
                    return Err(SyntaxError {
                        message: "f-string: empty expression not allowed".into(),
                        line: pos.line,
                        col: pos.col,
                    });
                }
                let toks = tokenize_embedded(fragment, pos)?;
                let mut sub = Parser::new(toks);
                let e = sub.star_expressions()?;
                if !sub.at_kind(TokenKind::EndMarker) {
                    return Err(sub.error("f-string: invalid syntax"));
                }
                fields.push(e);
                i = field_end;
            }
            _ => i += 1,
        }
    }
    Ok(fields)
}

/// Returns (end of expression text, index just past the closing brace).
fn scan_field(bytes: &[u8], start: usize, limit: usize) -> (usize, usize) {
    let mut depth = 0usize;
    let mut i = start;
    let mut expr_end = None;
    let mut quote: Option<u8> = None;
    while i < limit {
        let c = bytes[i];
        if let Some(q) = quote {
            if c == q {
                quote = None;
            }
            i += 1;
            continue;
        }
        match c {
            b'\'' | b'"' => quote = Some(c),
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' => depth = depth.saturating_sub(1),
            b'}' if depth > 0 => depth -= 1,
            b'}' => {
                return (expr_end.unwrap_or(i), i + 1);
            }
            b'!' if depth == 0 && expr_end.is_none() && bytes.get(i + 1) != Some(&b'=') => expr_end = Some(i),
            b':' if depth == 0 && expr_end.is_none() => {
                expr_end = Some(i);
                // Skip the format spec, which may hold nested fields.
                let mut nested = 0usize;
                i += 1;
                while i < limit {
                    match bytes[i] {
                        b'{' => nested += 1,
                        b'}' if nested > 0 => nested -= 1,
                        b'}' => return (start.max(expr_end.unwrap()), i + 1),
                        _ => {}
                    }
                    i += 1;
                }
                break;
            }
            _ => {}
        }
        i += 1;
    }
    (expr_end.unwrap_or(limit), limit)
}

fn check_target(e: &Expr, allow_tuple: bool) -> PResult<()> {
    let ok = match &e.kind {
        ExprKind::Name(_) | ExprKind::Attribute { .. } | ExprKind::Subscript { .. } => true,
        ExprKind::Starred(inner) => return check_target(inner, allow_tuple),
        ExprKind::Tuple(elts) | ExprKind::List(elts) if allow_tuple => {
            return elts.iter().try_for_each(|t| check_target(t, true));
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(SyntaxError {
            message: "cannot assign to expression".into(),
            line: e.span.start.line,
            col: e.span.start.col,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Module {
        parse_module(src).unwrap_or_else(|e| panic!("{src:?}: {e}"))
    }

    fn err_line(src: &str) -> u32 {
        parse_module(src).expect_err(src).line
    }

    #[test]
    fn parses_typical_cs1_programs() {
        let sources = [
            "x = 1",
            "",
            "def f(n):\n    return n % 2 == 0\n",
            "t = 0\nfor x in xs:\n    t += x\n",
            "if a and b or not c:\n    pass\nelif x < y <= z:\n    pass\nelse:\n    print('x')\n",
            "while i < len(xs) and not found:\n    i += 1\nelse:\n    pass\n",
            "evens = [x for x in range(10) if x % 2 == 0]\n",
            "d = {k: v for k, v in pairs}\ns = {1, 2}\ne = {}\n",
            "def g(a, b=2, *args, c, d=4, **kw) -> int:\n    return a\n",
            "print(f'total: {total:.2f} and {items[0]!r} {x=}')\n",
            "import math, os.path as p\nfrom collections import (Counter,\n    defaultdict)\n",
            "try:\n    x = int(s)\nexcept ValueError as e:\n    x = 0\nfinally:\n    done = True\n",
            "with open(p) as fh:\n    data = fh.read()\n",
            "class A(B):\n    def m(self):\n        return self.x\n",
            "a, *b = xs\nxs[1:3] = ys[::2]\nm = lambda a, b=1: a + b\n",
            "if x: y = 1; z = 2\n",
            "best = max(xs, key=lambda w: len(w))\n",
            "total = sum(x for x in xs if x > 0)\n",
            "s = 'a' 'b'\nb = b'xy'\nn = -x ** 2\n",
            "@decorator\ndef f():\n    yield 1\n",
            "while (line := input()) != '':\n    pass\n",
            "x = a if b else c\nassert x, 'msg'\ndel x[0], y\nglobal g\nraise ValueError('bad') from None\n",
        ];
        for src in sources {
            parse(src);
        }
    }

    #[test]
    fn structure_of_simple_programs() {
        let m = parse("x = 1");
        assert_eq!(m.body.len(), 1);
        assert!(matches!(m.body[0].kind, StmtKind::Assign { .. }));

        let m = parse("if a:\n    pass\nelif b:\n    pass\nelif c:\n    pass\n");
        match &m.body[0].kind {
            StmtKind::If { branches, orelse } => {
                assert_eq!(branches.len(), 3);
                assert!(orelse.is_none());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn error_lines_point_at_the_offending_line() {
        assert_eq!(err_line("for x in xs\n    s += x\n"), 1);
        assert_eq!(err_line("x = 1\nprint('a' b)\ny = 2\n"), 2);
        assert_eq!(err_line("x = 1\n  y = 2\n"), 2);
        assert_eq!(err_line("def f(:\n    pass\n"), 1);
        assert_eq!(err_line("x = 1\n1 = x\n"), 2);
        assert_eq!(err_line("if x:\nprint(x)\n"), 2);
        assert_eq!(err_line("x = [1,\n 2\ny = 3\n"), 1);
    }

    #[test]
    fn fstring_fields_have_absolute_spans() {
        let src = "y = 2\nprint(f'v={total} {n + 1}')\n";
        let m = parse(src);
        let StmtKind::Expr(call) = &m.body[1].kind else { panic!() };
        let ExprKind::Call { args, .. } = &call.kind else { panic!() };
        let ExprKind::FString(fields) = &args[0].value().kind else { panic!() };
        assert_eq!(fields.len(), 2);
        assert_eq!(fields[0].span.text(src), "total");
        assert_eq!(fields[0].span.start.line, 2);
        assert_eq!(fields[1].span.text(src), "n + 1");
    }

    #[test]
    fn spans_cover_statements() {
        let src = "for x in xs:\n    t += x\n    print(x)\n";
        let m = parse(src);
        assert_eq!(m.body[0].span.text(src), "for x in xs:\n    t += x\n    print(x)");
        let StmtKind::For { body, .. } = &m.body[0].kind else { panic!() };
        assert_eq!(body.body[0].span.text(src), "t += x");
    }
}
