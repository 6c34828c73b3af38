//! Typed syntax tree for the Python 3 subset seen in introductory courses.

use super::span::Span;

#[derive(Debug, Clone, PartialEq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Normal,
    VarArgs,
    KwArgs,
    KwOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: Ident,
    pub kind: ParamKind,
    pub annotation: Option<Expr>,
    pub default: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub test: Expr,
    pub body: Block,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Handler {
    pub kind_expr: Option<Expr>,
    pub name: Option<Ident>,
    pub body: Block,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithItem {
    pub context: Expr,
    pub target: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alias {
    /// Dotted module or member path, as written.
    pub path: Vec<Ident>,
    pub asname: Option<Ident>,
    pub span: Span,
}

impl Alias {
    /// The name this import binds in the importing scope.
    pub fn bound(&self) -> &Ident {
        self.asname.as_ref().unwrap_or(&self.path[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    FunctionDef {
        decorators: Vec<Expr>,
        name: Ident,
        params: Vec<Param>,
        returns: Option<Expr>,
        body: Block,
    },
    ClassDef {
        decorators: Vec<Expr>,
        name: Ident,
        bases: Vec<Arg>,
        body: Block,
    },
    Return(Option<Expr>),
    Delete(Vec<Expr>),
    Assign {
        targets: Vec<Expr>,
        value: Expr,
    },
    AugAssign {
        target: Expr,
        op: BinOp,
        value: Expr,
    },
    AnnAssign {
        target: Expr,
        annotation: Expr,
        value: Option<Expr>,
    },
    For {
        target: Expr,
        iter: Expr,
        body: Block,
        orelse: Option<Block>,
    },
    While {
        test: Expr,
        body: Block,
        orelse: Option<Block>,
    },
    /// An `if`/`elif`/`else` chain; `elif` arms are flattened into branches.
    If {
        branches: Vec<Branch>,
        orelse: Option<Block>,
    },
    With {
        items: Vec<WithItem>,
        body: Block,
    },
    Raise {
        exc: Option<Expr>,
        cause: Option<Expr>,
    },
    Try {
        body: Block,
        handlers: Vec<Handler>,
        orelse: Option<Block>,
        finalbody: Option<Block>,
    },
    Assert {
        test: Expr,
        msg: Option<Expr>,
    },
    Import(Vec<Alias>),
    ImportFrom {
        module: Vec<Ident>,
        level: usize,
        names: Vec<Alias>,
        star: bool,
    },
    Global(Vec<Ident>),
    Nonlocal(Vec<Ident>),
    Expr(Expr),
    Pass,
    Break,
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mult,
    MatMult,
    Div,
    FloorDiv,
    Mod,
    Pow,
    LShift,
    RShift,
    BitOr,
    BitXor,
    BitAnd,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mult => "*",
            BinOp::MatMult => "@",
            BinOp::Div => "/",
            BinOp::FloorDiv => "//",
            BinOp::Mod => "%",
            BinOp::Pow => "**",
            BinOp::LShift => "<<",
            BinOp::RShift => ">>",
            BinOp::BitOr => "|",
            BinOp::BitXor => "^",
            BinOp::BitAnd => "&",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        Some(match s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mult,
            "@" => BinOp::MatMult,
            "/" => BinOp::Div,
            "//" => BinOp::FloorDiv,
            "%" => BinOp::Mod,
            "**" => BinOp::Pow,
            "<<" => BinOp::LShift,
            ">>" => BinOp::RShift,
            "|" => BinOp::BitOr,
            "^" => BinOp::BitXor,
            "&" => BinOp::BitAnd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Not,
    Neg,
    Pos,
    Invert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    NotEq,
    Lt,
    LtE,
    Gt,
    GtE,
    Is,
    IsNot,
    In,
    NotIn,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::NotEq => "!=",
            CmpOp::Lt => "<",
            CmpOp::LtE => "<=",
            CmpOp::Gt => ">",
            CmpOp::GtE => ">=",
            CmpOp::Is => "is",
            CmpOp::IsNot => "is not",
            CmpOp::In => "in",
            CmpOp::NotIn => "not in",
        }
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::LtE | CmpOp::Gt | CmpOp::GtE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LiteralKind {
    Int,
    Float,
    Complex,
    Str,
    Bytes,
    Bool,
    None,
    Ellipsis,
}

impl LiteralKind {
    pub fn tag(self) -> &'static str {
        match self {
            LiteralKind::Int => "int",
            LiteralKind::Float => "float",
            LiteralKind::Complex => "complex",
            LiteralKind::Str => "str",
            LiteralKind::Bytes => "bytes",
            LiteralKind::Bool => "bool",
            LiteralKind::None => "none",
            LiteralKind::Ellipsis => "ellipsis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Positional(Expr),
    Starred(Expr),
    Keyword { name: Ident, value: Expr, span: Span },
    DoubleStarred(Expr),
}

impl Arg {
    pub fn value(&self) -> &Expr {
        match self {
            Arg::Positional(e) | Arg::Starred(e) | Arg::DoubleStarred(e) => e,
            Arg::Keyword { value, .. } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comprehension {
    pub target: Expr,
    pub iter: Expr,
    pub ifs: Vec<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DictItem {
    Pair(Expr, Expr),
    Spread(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    BoolOp {
        op: BoolOp,
        values: Vec<Expr>,
    },
    NamedExpr {
        target: Box<Expr>,
        value: Box<Expr>,
    },
    BinOp {
        left: Box<Expr>,
        op: BinOp,
        right: Box<Expr>,
    },
    UnaryOp {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Lambda {
        params: Vec<Param>,
        body: Box<Expr>,
    },
    IfExp {
        test: Box<Expr>,
        body: Box<Expr>,
        orelse: Box<Expr>,
    },
    Dict(Vec<DictItem>),
    Set(Vec<Expr>),
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    ListComp {
        elt: Box<Expr>,
        generators: Vec<Comprehension>,
    },
    SetComp {
        elt: Box<Expr>,
        generators: Vec<Comprehension>,
    },
    GeneratorExp {
        elt: Box<Expr>,
        generators: Vec<Comprehension>,
    },
    DictComp {
        key: Box<Expr>,
        value: Box<Expr>,
        generators: Vec<Comprehension>,
    },
    Await(Box<Expr>),
    Yield(Option<Box<Expr>>),
    YieldFrom(Box<Expr>),
    Compare {
        left: Box<Expr>,
        ops: Vec<CmpOp>,
        comparators: Vec<Expr>,
    },
    Call {
        func: Box<Expr>,
        args: Vec<Arg>,
    },
    /// An f-string; only the interpolated expressions are kept.
    FString(Vec<Expr>),
    Literal {
        kind: LiteralKind,
        text: String,
    },
    Attribute {
        value: Box<Expr>,
        attr: Ident,
    },
    Subscript {
        value: Box<Expr>,
        index: Box<Expr>,
    },
    Slice {
        lower: Option<Box<Expr>>,
        upper: Option<Box<Expr>>,
        step: Option<Box<Expr>>,
    },
    Starred(Box<Expr>),
    Name(Ident),
}

impl Expr {
    pub fn as_name(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Name(id) => Some(&id.name),
            _ => None,
        }
    }

    pub fn is_int_literal(&self, value: &str) -> bool {
        matches!(&self.kind, ExprKind::Literal { kind: LiteralKind::Int, text } if text == value)
    }

    /// Direct sub-expressions in source order. Comprehension scopes and
    /// lambda bodies are included.
    pub fn children(&self) -> Vec<&Expr> {
        use ExprKind::*;
        let mut out: Vec<&Expr> = Vec::new();
        match &self.kind {
            BoolOp { values, .. } => out.extend(values),
            NamedExpr { target, value } => {
                out.push(target);
                out.push(value);
            }
            BinOp { left, right, .. } => {
                out.push(left);
                out.push(right);
            }
            UnaryOp { operand, .. } => out.push(operand),
            Lambda { params, body } => {
                out.extend(params.iter().filter_map(|p| p.default.as_ref()));
                out.push(body);
            }
            IfExp { test, body, orelse } => {
                out.push(body);
                out.push(test);
                out.push(orelse);
            }
            Dict(items) => {
                for item in items {
                    match item {
                        DictItem::Pair(k, v) => {
                            out.push(k);
                            out.push(v);
                        }
                        DictItem::Spread(v) => out.push(v),
                    }
                }
            }
            Set(elts) | List(elts) | Tuple(elts) | FString(elts) => out.extend(elts),
            ListComp { elt, generators } | SetComp { elt, generators } | GeneratorExp { elt, generators } => {
                out.push(elt);
                push_generators(&mut out, generators);
            }
            DictComp { key, value, generators } => {
                out.push(key);
                out.push(value);
                push_generators(&mut out, generators);
            }
            Await(e) | YieldFrom(e) | Starred(e) => out.push(e),
            Yield(e) => out.extend(e.as_deref()),
            Compare { left, comparators, .. } => {
                out.push(left);
                out.extend(comparators);
            }
            Call { func, args } => {
                out.push(func);
                out.extend(args.iter().map(Arg::value));
            }
            Attribute { value, .. } => out.push(value),
            Subscript { value, index } => {
                out.push(value);
                out.push(index);
            }
            Slice { lower, upper, step } => {
                out.extend(lower.as_deref());
                out.extend(upper.as_deref());
                out.extend(step.as_deref());
            }
            Literal { .. } | Name(_) => {}
        }
        out
    }

    /// Visits this expression and all nested expressions, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for child in self.children() {
            child.walk(f);
        }
    }

    /// True if any `Name` inside the expression satisfies `pred`.
    pub fn any_name(&self, pred: &dyn Fn(&str) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let ExprKind::Name(id) = &e.kind {
                found |= pred(&id.name);
            }
        });
        found
    }

    /// Names referenced anywhere in the expression.
    pub fn names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let ExprKind::Name(id) = &e.kind {
                out.push(id.name.as_str());
            }
        });
        out
    }
}

fn push_generators<'a>(out: &mut Vec<&'a Expr>, generators: &'a [Comprehension]) {
    for g in generators {
        out.push(&g.target);
        out.push(&g.iter);
        out.extend(&g.ifs);
    }
}

impl Stmt {
    /// Nested statement blocks in source order (bodies, branches, handlers).
    pub fn blocks(&self) -> Vec<&Block> {
        use StmtKind::*;
        match &self.kind {
            FunctionDef { body, .. } | ClassDef { body, .. } | With { body, .. } => vec![body],
            For { body, orelse, .. } | While { body, orelse, .. } => {
                let mut v = vec![body];
                v.extend(orelse);
                v
            }
            If { branches, orelse } => {
                let mut v: Vec<&Block> = branches.iter().map(|b| &b.body).collect();
                v.extend(orelse);
                v
            }
            Try { body, handlers, orelse, finalbody } => {
                let mut v = vec![body];
                v.extend(handlers.iter().map(|h| &h.body));
                v.extend(orelse);
                v.extend(finalbody);
                v
            }
            _ => Vec::new(),
        }
    }

    /// Expressions that belong directly to this statement (not to nested
    /// blocks), in source order.
    pub fn exprs(&self) -> Vec<&Expr> {
        use StmtKind::*;
        let mut out: Vec<&self::Expr> = Vec::new();
        match &self.kind {
            FunctionDef { decorators, params, returns, .. } => {
                out.extend(decorators);
                for p in params {
                    out.extend(&p.annotation);
                    out.extend(&p.default);
                }
                out.extend(returns);
            }
            ClassDef { decorators, bases, .. } => {
                out.extend(decorators);
                out.extend(bases.iter().map(Arg::value));
            }
            Return(e) => out.extend(e),
            Delete(targets) => out.extend(targets),
            Assign { targets, value } => {
                out.extend(targets);
                out.push(value);
            }
            AugAssign { target, value, .. } => {
                out.push(target);
                out.push(value);
            }
            AnnAssign { target, annotation, value } => {
                out.push(target);
                out.push(annotation);
                out.extend(value);
            }
            For { target, iter, .. } => {
                out.push(target);
                out.push(iter);
            }
            While { test, .. } => out.push(test),
            If { branches, .. } => out.extend(branches.iter().map(|b| &b.test)),
            With { items, .. } => {
                for item in items {
                    out.push(&item.context);
                    out.extend(&item.target);
                }
            }
            Raise { exc, cause } => {
                out.extend(exc);
                out.extend(cause);
            }
            Try { handlers, .. } => out.extend(handlers.iter().filter_map(|h| h.kind_expr.as_ref())),
            Assert { test, msg } => {
                out.push(test);
                out.extend(msg);
            }
            StmtKind::Expr(e) => out.push(e),
            Import(_) | ImportFrom { .. } | Global(_) | Nonlocal(_) | Pass | Break | Continue => {}
        }
        out
    }

    /// Visits this statement and every nested statement, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for block in self.blocks() {
            for stmt in &block.body {
                stmt.walk(f);
            }
        }
    }
}
