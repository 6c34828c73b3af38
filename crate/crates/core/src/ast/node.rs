//! Uniform node view over the typed tree.
//!
//! Every construct becomes a [`Node`] with a kebab-case kind, an optional
//! tag (operator symbol, literal kind), an optional identifier payload and
//! ordered children. Fingerprints and n-gram profiles are computed on this
//! view.

use serde::Serialize;

use super::span::Span;
use super::tree::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Node {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ident: Option<String>,
    pub span: Span,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Node>,
    /// Set on the expression statement holding a docstring.
    #[serde(skip)]
    pub docstring: bool,
}

impl Node {
    fn new(kind: &'static str, span: Span) -> Node {
        Node { kind, tag: None, ident: None, span, children: Vec::new(), docstring: false }
    }

    fn tag(mut self, tag: impl Into<String>) -> Node {
        self.tag = Some(tag.into());
        self
    }

    fn ident(mut self, ident: impl Into<String>) -> Node {
        self.ident = Some(ident.into());
        self
    }

    fn with(mut self, children: Vec<Node>) -> Node {
        self.children = children;
        self
    }

    /// Pre-order traversal with depth.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Node, usize)) {
        fn go<'a>(n: &'a Node, depth: usize, f: &mut dyn FnMut(&'a Node, usize)) {
            f(n, depth);
            for c in &n.children {
                go(c, depth + 1, f);
            }
        }
        go(self, 0, f);
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _| n += 1);
        n
    }
}

pub fn build(module: &Module) -> Node {
    Node::new("module", module.span).with(stmts(&module.body))
}

fn stmts(body: &[Stmt]) -> Vec<Node> {
    let mut out: Vec<Node> = body.iter().map(stmt).collect();
    if let (Some(first), Some(node)) = (body.first(), out.first_mut()) {
        if is_docstring(first) {
            node.docstring = true;
        }
    }
    out
}

fn is_docstring(s: &Stmt) -> bool {
    matches!(&s.kind, StmtKind::Expr(Expr { kind: ExprKind::Literal { kind: LiteralKind::Str, .. }, .. }))
}

fn block(b: &Block) -> Vec<Node> {
    stmts(&b.body)
}

fn else_node(b: &Option<Block>) -> Option<Node> {
    b.as_ref().map(|b| Node::new("else", b.span).with(stmts(&b.body)))
}

fn wrap(kind: &'static str, e: &Expr) -> Node {
    Node::new(kind, e.span).with(vec![expr(e)])
}

fn params(ps: &[Param]) -> Vec<Node> {
    ps.iter()
        .map(|p| {
            let mut children = Vec::new();
            if let Some(a) = &p.annotation {
                children.push(wrap("annotation", a));
            }
            if let Some(d) = &p.default {
                children.push(wrap("default", d));
            }
            let tag = match p.kind {
                ParamKind::Normal => "positional",
                ParamKind::VarArgs => "varargs",
                ParamKind::KwArgs => "kwargs",
                ParamKind::KwOnly => "kwonly",
            };
            Node::new("param", p.span).tag(tag).ident(&p.name.name).with(children)
        })
        .collect()
}

fn stmt(s: &Stmt) -> Node {
    use StmtKind::*;
    let n = |kind| Node::new(kind, s.span);
    match &s.kind {
        FunctionDef { decorators, name, params: ps, returns, body } => {
            let mut ch: Vec<Node> = decorators.iter().map(|d| wrap("decorator", d)).collect();
            ch.extend(params(ps));
            ch.extend(returns.iter().map(|r| wrap("annotation", r)));
            ch.extend(block(body));
            n("function-def").ident(&name.name).with(ch)
        }
        ClassDef { decorators, name, bases, body } => {
            let mut ch: Vec<Node> = decorators.iter().map(|d| wrap("decorator", d)).collect();
            ch.extend(bases.iter().map(arg));
            ch.extend(block(body));
            n("class-def").ident(&name.name).with(ch)
        }
        Return(e) => n("return").with(e.iter().map(expr).collect()),
        Delete(ts) => n("delete").with(ts.iter().map(expr).collect()),
        Assign { targets, value } => {
            let mut ch: Vec<Node> = targets.iter().map(expr).collect();
            ch.push(expr(value));
            n("assignment").with(ch)
        }
        AugAssign { target, op, value } => {
            n("augmented-assignment").tag(op.symbol()).with(vec![expr(target), expr(value)])
        }
        AnnAssign { target, annotation, value } => {
            let mut ch = vec![expr(target), wrap("annotation", annotation)];
            ch.extend(value.iter().map(expr));
            n("annotated-assignment").with(ch)
        }
        For { target, iter, body, orelse } => {
            let mut ch = vec![expr(target), expr(iter)];
            ch.extend(block(body));
            ch.extend(else_node(orelse));
            n("for").with(ch)
        }
        While { test, body, orelse } => {
            let mut ch = vec![expr(test)];
            ch.extend(block(body));
            ch.extend(else_node(orelse));
            n("while").with(ch)
        }
        If { branches, orelse } => {
            let mut ch: Vec<Node> = branches
                .iter()
                .map(|b| {
                    let mut bc = vec![expr(&b.test)];
                    bc.extend(block(&b.body));
                    Node::new("branch", b.span).with(bc)
                })
                .collect();
            ch.extend(else_node(orelse));
            n("if-branch-chain").with(ch)
        }
        With { items, body } => {
            let mut ch: Vec<Node> = items
                .iter()
                .map(|i| {
                    let mut ic = vec![expr(&i.context)];
                    ic.extend(i.target.iter().map(expr));
                    Node::new("with-item", i.span).with(ic)
                })
                .collect();
            ch.extend(block(body));
            n("with").with(ch)
        }
        Raise { exc, cause } => n("raise").with(exc.iter().chain(cause).map(expr).collect()),
        Try { body, handlers, orelse, finalbody } => {
            let mut ch = block(body);
            for h in handlers {
                let mut hc: Vec<Node> = h.kind_expr.iter().map(expr).collect();
                hc.extend(block(&h.body));
                let mut hn = Node::new("except-handler", h.span).with(hc);
                if let Some(name) = &h.name {
                    hn = hn.ident(&name.name);
                }
                ch.push(hn);
            }
            ch.extend(else_node(orelse));
            if let Some(f) = finalbody {
                ch.push(Node::new("finally", f.span).with(block(f)));
            }
            n("try").with(ch)
        }
        Assert { test, msg } => n("assert").with(std::iter::once(test).chain(msg).map(expr).collect()),
        Import(aliases) => n("import").with(aliases.iter().map(alias).collect()),
        ImportFrom { module, level, names, star } => {
            let path = module.iter().map(|i| i.name.as_str()).collect::<Vec<_>>().join(".");
            let ch = if *star { Vec::new() } else { names.iter().map(alias).collect() };
            let tag = if *star { format!("level{level} star") } else { format!("level{level}") };
            n("import-from").tag(tag).ident(path).with(ch)
        }
        Global(names) => n("global").ident(join_names(names)),
        Nonlocal(names) => n("nonlocal").ident(join_names(names)),
        Expr(e) => n("expr-stmt").with(vec![expr(e)]),
        Pass => n("pass"),
        Break => n("break"),
        Continue => n("continue"),
    }
}

fn join_names(names: &[Ident]) -> String {
    names.iter().map(|i| i.name.as_str()).collect::<Vec<_>>().join(",")
}

fn alias(a: &Alias) -> Node {
    let path = a.path.iter().map(|i| i.name.as_str()).collect::<Vec<_>>().join(".");
    let mut node = Node::new("alias", a.span).ident(path);
    if a.asname.is_some() {
        node = node.tag("as");
    }
    node
}

fn arg(a: &Arg) -> Node {
    match a {
        Arg::Positional(e) => expr(e),
        Arg::Starred(e) => wrap("starred", e),
        Arg::DoubleStarred(e) => wrap("double-starred", e),
        Arg::Keyword { name, value, span } => Node::new("keyword", *span).ident(&name.name).with(vec![expr(value)]),
    }
}

fn comprehensions(gens: &[Comprehension]) -> Vec<Node> {
    gens.iter()
        .map(|g| {
            let mut ch = vec![expr(&g.target), expr(&g.iter)];
            ch.extend(g.ifs.iter().map(expr));
            Node::new("comprehension", g.span).with(ch)
        })
        .collect()
}

fn expr(e: &Expr) -> Node {
    use ExprKind::*;
    let n = |kind| Node::new(kind, e.span);
    match &e.kind {
        BoolOp { op, values } => {
            let tag = match op {
                super::tree::BoolOp::And => "and",
                super::tree::BoolOp::Or => "or",
            };
            n("bool-op").tag(tag).with(values.iter().map(expr).collect())
        }
        NamedExpr { target, value } => n("named-expr").with(vec![expr(target), expr(value)]),
        BinOp { left, op, right } => n("binary-op").tag(op.symbol()).with(vec![expr(left), expr(right)]),
        UnaryOp { op, operand } => {
            let tag = match op {
                super::tree::UnaryOp::Not => "not",
                super::tree::UnaryOp::Neg => "-",
                super::tree::UnaryOp::Pos => "+",
                super::tree::UnaryOp::Invert => "~",
            };
            n("unary-op").tag(tag).with(vec![expr(operand)])
        }
        Lambda { params: ps, body } => {
            let mut ch = params(ps);
            ch.push(expr(body));
            n("lambda").with(ch)
        }
        IfExp { test, body, orelse } => n("if-exp").with(vec![expr(test), expr(body), expr(orelse)]),
        Dict(items) => n("dict").with(
            items
                .iter()
                .map(|item| match item {
                    DictItem::Pair(k, v) => Node::new("dict-entry", k.span.to(v.span)).with(vec![expr(k), expr(v)]),
                    DictItem::Spread(v) => wrap("double-starred", v),
                })
                .collect(),
        ),
        Set(elts) => n("set").with(elts.iter().map(expr).collect()),
        List(elts) => n("list").with(elts.iter().map(expr).collect()),
        Tuple(elts) => n("tuple").with(elts.iter().map(expr).collect()),
        ListComp { elt, generators } => comp(n("list-comp"), vec![expr(elt)], generators),
        SetComp { elt, generators } => comp(n("set-comp"), vec![expr(elt)], generators),
        GeneratorExp { elt, generators } => comp(n("generator-exp"), vec![expr(elt)], generators),
        DictComp { key, value, generators } => comp(n("dict-comp"), vec![expr(key), expr(value)], generators),
        Await(v) => n("await").with(vec![expr(v)]),
        Yield(v) => n("yield").with(v.iter().map(|v| expr(v)).collect()),
        YieldFrom(v) => n("yield-from").with(vec![expr(v)]),
        Compare { left, ops, comparators } => {
            let tag = ops.iter().map(|o| o.symbol()).collect::<Vec<_>>().join(" ");
            let mut ch = vec![expr(left)];
            ch.extend(comparators.iter().map(expr));
            n("compare").tag(tag).with(ch)
        }
        Call { func, args } => {
            let mut ch = vec![expr(func)];
            ch.extend(args.iter().map(arg));
            n("call").with(ch)
        }
        FString(fields) => n("f-string").with(fields.iter().map(expr).collect()),
        Literal { kind, text } => n("literal").tag(kind.tag()).ident(text.clone()),
        Attribute { value, attr } => n("attribute").ident(&attr.name).with(vec![expr(value)]),
        Subscript { value, index } => n("subscript").with(vec![expr(value), expr(index)]),
        Slice { lower, upper, step } => {
            let present = |o: &Option<Box<Expr>>, c: char| if o.is_some() { c } else { '_' };
            let tag: String = [present(lower, 'l'), present(upper, 'u'), present(step, 's')].iter().collect();
            let ch = [lower, upper, step].into_iter().flatten().map(|b| expr(b)).collect();
            n("slice").tag(tag).with(ch)
        }
        Starred(v) => n("starred").with(vec![expr(v)]),
        Name(id) => n("name").ident(&id.name),
    }
}

fn comp(node: Node, mut head: Vec<Node>, gens: &[Comprehension]) -> Node {
    head.extend(comprehensions(gens));
    node.with(head)
}
