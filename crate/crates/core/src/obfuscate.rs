//! Identifier obfuscation for the naming ablation.
//!
//! User-defined bindings are renamed to `var<N>` (variables and classes),
//! `fn<N>` (functions) and `arg<N>` (parameters). Each category is numbered
//! by first occurrence in source order; a seed optionally shuffles the
//! numbers. Builtins (even when rebound), imported names, dunder names,
//! names bound in class bodies and attribute names are preserved. Keyword
//! arguments follow their parameter when the callee is a user function.
//!
//! Names that are never bound anywhere (inputs supplied by a test harness,
//! say) are treated as module-level variables.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::tree::*;
use crate::ast::{parse, ParseStatus, Span};
use crate::corpus::Submission;

pub const BUILTINS: &[&str] = &[
    "abs",
    "aiter",
    "all",
    "anext",
    "any",
    "ascii",
    "bin",
    "bool",
    "breakpoint",
    "bytearray",
    "bytes",
    "callable",
    "chr",
    "classmethod",
    "compile",
    "complex",
    "copyright",
    "credits",
    "delattr",
    "dict",
    "dir",
    "divmod",
    "enumerate",
    "eval",
    "exec",
    "exit",
    "filter",
    "float",
    "format",
    "frozenset",
    "getattr",
    "globals",
    "hasattr",
    "hash",
    "help",
    "hex",
    "id",
    "input",
    "int",
    "isinstance",
    "issubclass",
    "iter",
    "len",
    "license",
    "list",
    "locals",
    "map",
    "max",
    "memoryview",
    "min",
    "next",
    "object",
    "oct",
    "open",
    "ord",
    "pow",
    "print",
    "property",
    "quit",
    "range",
    "repr",
    "reversed",
    "round",
    "set",
    "setattr",
    "slice",
    "sorted",
    "staticmethod",
    "str",
    "sum",
    "super",
    "tuple",
    "type",
    "vars",
    "zip",
    "__import__",
    "NotImplemented",
    "Ellipsis",
    "BaseException",
    "Exception",
    "ArithmeticError",
    "AssertionError",
    "AttributeError",
    "EOFError",
    "FloatingPointError",
    "GeneratorExit",
    "ImportError",
    "ModuleNotFoundError",
    "IndexError",
    "KeyError",
    "KeyboardInterrupt",
    "LookupError",
    "MemoryError",
    "NameError",
    "NotImplementedError",
    "OSError",
    "OverflowError",
    "RecursionError",
    "ReferenceError",
    "RuntimeError",
    "StopIteration",
    "StopAsyncIteration",
    "SyntaxError",
    "IndentationError",
    "TabError",
    "SystemError",
    "SystemExit",
    "TypeError",
    "UnboundLocalError",
    "UnicodeError",
    "UnicodeDecodeError",
    "UnicodeEncodeError",
    "ValueError",
    "ZeroDivisionError",
    "FileNotFoundError",
    "PermissionError",
    "IOError",
    "EnvironmentError",
    "ConnectionError",
    "TimeoutError",
    "Warning",
    "UserWarning",
    "DeprecationWarning",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rename {
    /// Where the binding lives, e.g. `module` or `function total`.
    pub scope: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenameMap {
    pub seed: Option<u64>,
    /// In order of first occurrence.
    pub renames: Vec<Rename>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObfuscateError {
    #[error("source does not parse: {0}")]
    UnparseableInput(String),
    #[error("submission `{0}` does not pass any test and cannot be obfuscated")]
    CategoryViolation(String),
}

/// Renames user-defined identifiers in `source`.
pub fn obfuscate(source: &str, seed: Option<u64>) -> Result<(String, RenameMap), ObfuscateError> {
    let outcome = parse(source);
    let tree = match (outcome.status, outcome.tree) {
        (ParseStatus::Failed, _) | (_, None) => {
            let msg = outcome.error.map(|e| e.to_string()).unwrap_or_default();
            return Err(ObfuscateError::UnparseableInput(msg));
        }
        (_, Some(tree)) => tree,
    };

    let mut collector = Collector::default();
    collector.module(&tree.module);
    let Collector { scopes, occurrences, .. } = collector;
    let resolver = Resolver { scopes: &scopes };

    // Resolve every occurrence to a binding, or to nothing when preserved.
    let mut resolved: Vec<(Span, &str, Option<BindingKey>)> = Vec::new();
    let mut preserved: HashSet<&str> = HashSet::new();
    for occ in &occurrences {
        let key = resolver.resolve_occurrence(occ);
        if key.is_none() {
            preserved.insert(&occ.name);
        }
        resolved.push((occ.span, &occ.name, key));
    }
    resolved.sort_by_key(|(span, _, _)| span.start.offset);

    let mut order: Vec<BindingKey> = Vec::new();
    let mut seen: HashSet<&BindingKey> = HashSet::new();
    for (_, _, key) in &resolved {
        if let Some(k) = key {
            if seen.insert(k) {
                order.push(k.clone());
            }
        }
    }

    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut replacement: HashMap<&BindingKey, String> = HashMap::new();
    for category in [Category::Var, Category::Fn, Category::Arg] {
        let members: Vec<&BindingKey> = order.iter().filter(|k| resolver.category(k) == category).collect();
        let mut numbers: Vec<usize> = (1..)
            .filter(|n| !preserved.contains(format!("{}{n}", category.prefix()).as_str()))
            .take(members.len())
            .collect();
        if let Some(rng) = rng.as_mut() {
            numbers.shuffle(rng);
        }
        for (k, n) in members.into_iter().zip(numbers) {
            replacement.insert(k, format!("{}{n}", category.prefix()));
        }
    }

    let renames = order
        .iter()
        .map(|k| Rename { scope: scopes[k.0].label.clone(), from: k.1.clone(), to: replacement[k].clone() })
        .collect();

    let mut out = String::with_capacity(source.len());
    let mut cursor = 0;
    for (span, name, key) in &resolved {
        let Some(k) = key else { continue };
        debug_assert_eq!(&source[span.start.offset..span.end.offset], *name);
        out.push_str(&source[cursor..span.start.offset]);
        out.push_str(&replacement[k]);
        cursor = span.end.offset;
    }
    out.push_str(&source[cursor..]);
    Ok((out, RenameMap { seed, renames }))
}

#[derive(Debug, Clone)]
pub struct ObfuscatedCorpus {
    /// Transformed submissions with their rename maps, in input order.
    pub items: Vec<(Submission, RenameMap)>,
    /// Submissions left out, with the reason.
    pub rejected: Vec<(String, ObfuscateError)>,
}

/// Obfuscates the submissions that pass at least one test.
///
/// With `strict`, any other submission is an error; otherwise it is
/// skipped and reported. Per-item seeds are drawn from one generator
/// seeded with `seed`.
pub fn obfuscate_corpus(
    submissions: &[Submission],
    seed: Option<u64>,
    strict: bool,
) -> Result<ObfuscatedCorpus, ObfuscateError> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut out = ObfuscatedCorpus { items: Vec::new(), rejected: Vec::new() };
    for sub in submissions {
        let item_seed = rng.as_mut().map(|r| r.gen::<u64>());
        if !sub.outcome.passes_some_test() {
            let err = ObfuscateError::CategoryViolation(sub.id.clone());
            if strict {
                return Err(err);
            }
            out.rejected.push((sub.id.clone(), err));
            continue;
        }
        match obfuscate(&sub.source, item_seed) {
            Ok((source, map)) => out.items.push((Submission { source, ..sub.clone() }, map)),
            Err(e) if strict => return Err(e),
            Err(e) => out.rejected.push((sub.id.clone(), e)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScopeKind {
    Module,
    Function,
    Lambda,
    Comprehension,
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BindKind {
    Function,
    Class,
    Param,
    Var,
    Import,
}

#[derive(Debug)]
struct Scope {
    kind: ScopeKind,
    parent: Option<usize>,
    label: String,
    /// First binding kind per name.
    bindings: HashMap<String, BindKind>,
    globals: HashSet<String>,
    nonlocals: HashSet<String>,
    /// Scope of each function defined here, by name (first definition).
    function_scopes: HashMap<String, usize>,
}

type BindingKey = (usize, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Var,
    Fn,
    Arg,
}

impl Category {
    fn prefix(self) -> &'static str {
        match self {
            Category::Var => "var",
            Category::Fn => "fn",
            Category::Arg => "arg",
        }
    }
}

#[derive(Debug)]
enum Role {
    Name,
    /// Keyword argument name at a call whose callee is a plain name.
    Keyword {
        callee: String,
    },
    Global,
    Nonlocal,
}

#[derive(Debug)]
struct Occurrence {
    name: String,
    span: Span,
    scope: usize,
    role: Role,
}

#[derive(Default)]
struct Collector {
    scopes: Vec<Scope>,
    current: usize,
    occurrences: Vec<Occurrence>,
}

impl Collector {
    fn push_scope(&mut self, kind: ScopeKind, label: String) -> usize {
        let parent = if self.scopes.is_empty() { None } else { Some(self.current) };
        self.scopes.push(Scope {
            kind,
            parent,
            label,
            bindings: HashMap::new(),
            globals: HashSet::new(),
            nonlocals: HashSet::new(),
            function_scopes: HashMap::new(),
        });
        let id = self.scopes.len() - 1;
        self.current = id;
        id
    }

    fn bind_in(&mut self, scope: usize, name: &str, kind: BindKind) {
        self.scopes[scope].bindings.entry(name.to_string()).or_insert(kind);
    }

    fn bind(&mut self, name: &str, kind: BindKind) {
        self.bind_in(self.current, name, kind);
    }

    fn occur(&mut self, ident: &Ident, role: Role) {
        self.occurrences.push(Occurrence { name: ident.name.clone(), span: ident.span, scope: self.current, role });
    }

    fn module(&mut self, m: &Module) {
        self.push_scope(ScopeKind::Module, "module".into());
        self.block(&m.body);
    }

    fn block(&mut self, body: &[Stmt]) {
        for s in body {
            self.stmt(s);
        }
    }

    fn target(&mut self, e: &Expr) {
        self.bind_targets(e);
        self.expr(e);
    }

    fn bind_targets(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Name(id) => self.bind(&id.name, BindKind::Var),
            ExprKind::Tuple(elts) | ExprKind::List(elts) => {
                for t in elts {
                    self.bind_targets(t);
                }
            }
            ExprKind::Starred(inner) => self.bind_targets(inner),
            _ => {}
        }
    }

    fn params(&mut self, params: &[Param]) {
        for p in params {
            self.bind(&p.name.name, BindKind::Param);
            self.occur(&p.name, Role::Name);
        }
    }

    /// Annotations and defaults evaluate in the enclosing scope.
    fn param_exprs(&mut self, params: &[Param]) {
        for p in params {
            if let Some(a) = &p.annotation {
                self.expr(a);
            }
            if let Some(d) = &p.default {
                self.expr(d);
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::FunctionDef { decorators, name, params, returns, body } => {
                for d in decorators {
                    self.expr(d);
                }
                self.bind(&name.name, BindKind::Function);
                self.occur(name, Role::Name);
                self.param_exprs(params);
                if let Some(r) = returns {
                    self.expr(r);
                }
                let outer = self.current;
                let id = self.push_scope(ScopeKind::Function, format!("function {}", name.name));
                self.scopes[outer].function_scopes.entry(name.name.clone()).or_insert(id);
                self.params(params);
                self.block(&body.body);
                self.current = outer;
            }
            StmtKind::ClassDef { decorators, name, bases, body } => {
                for d in decorators {
                    self.expr(d);
                }
                self.bind(&name.name, BindKind::Class);
                self.occur(name, Role::Name);
                for b in bases {
                    self.arg(b, None);
                }
                let outer = self.current;
                self.push_scope(ScopeKind::Class, format!("class {}", name.name));
                self.block(&body.body);
                self.current = outer;
            }
            StmtKind::Assign { targets, value } => {
                for t in targets {
                    self.target(t);
                }
                self.expr(value);
            }
            StmtKind::AugAssign { target, value, .. } => {
                self.target(target);
                self.expr(value);
            }
            StmtKind::AnnAssign { target, annotation, value } => {
                self.target(target);
                self.expr(annotation);
                if let Some(v) = value {
                    self.expr(v);
                }
            }
            StmtKind::For { target, iter, body, orelse } => {
                self.target(target);
                self.expr(iter);
                self.block(&body.body);
                if let Some(b) = orelse {
                    self.block(&b.body);
                }
            }
            StmtKind::With { items, body } => {
                for item in items {
                    self.expr(&item.context);
                    if let Some(t) = &item.target {
                        self.target(t);
                    }
                }
                self.block(&body.body);
            }
            StmtKind::Try { body, handlers, orelse, finalbody } => {
                self.block(&body.body);
                for h in handlers {
                    if let Some(e) = &h.kind_expr {
                        self.expr(e);
                    }
                    if let Some(n) = &h.name {
                        self.bind(&n.name, BindKind::Var);
                        self.occur(n, Role::Name);
                    }
                    self.block(&h.body.body);
                }
                for b in orelse.iter().chain(finalbody) {
                    self.block(&b.body);
                }
            }
            StmtKind::Delete(targets) => {
                for t in targets {
                    self.target(t);
                }
            }
            StmtKind::Import(aliases) | StmtKind::ImportFrom { names: aliases, .. } => {
                for a in aliases {
                    self.bind(&a.bound().name, BindKind::Import);
                }
            }
            StmtKind::Global(names) => {
                for n in names {
                    self.scopes[self.current].globals.insert(n.name.clone());
                    self.occur(n, Role::Global);
                }
            }
            StmtKind::Nonlocal(names) => {
                for n in names {
                    self.scopes[self.current].nonlocals.insert(n.name.clone());
                    self.occur(n, Role::Nonlocal);
                }
            }
            _ => {
                for e in s.exprs() {
                    self.expr(e);
                }
                for b in s.blocks() {
                    self.block(&b.body);
                }
            }
        }
    }

    fn arg(&mut self, a: &Arg, callee: Option<&str>) {
        if let Arg::Keyword { name, .. } = a {
            if let Some(callee) = callee {
                self.occur(name, Role::Keyword { callee: callee.to_string() });
            }
        }
        self.expr(a.value());
    }

    fn comprehension(&mut self, generators: &[Comprehension], inner: &[&Expr]) {
        // The first iterable evaluates in the enclosing scope.
        if let Some(first) = generators.first() {
            self.expr(&first.iter);
        }
        let outer = self.current;
        self.push_scope(ScopeKind::Comprehension, "comprehension".into());
        // Source order: the element comes before the generators.
        for e in inner {
            self.expr(e);
        }
        for (i, g) in generators.iter().enumerate() {
            self.target(&g.target);
            if i > 0 {
                self.expr(&g.iter);
            }
            for c in &g.ifs {
                self.expr(c);
            }
        }
        self.current = outer;
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Name(id) => self.occur(id, Role::Name),
            ExprKind::NamedExpr { target, value } => {
                // Walrus targets bind in the nearest non-comprehension scope.
                let mut scope = self.current;
                while self.scopes[scope].kind == ScopeKind::Comprehension {
                    scope = self.scopes[scope].parent.expect("comprehension has a parent");
                }
                if let Some(n) = target.as_name() {
                    self.bind_in(scope, n, BindKind::Var);
                }
                let saved = self.current;
                self.current = scope;
                self.expr(target);
                self.current = saved;
                self.expr(value);
            }
            ExprKind::Lambda { params, body } => {
                self.param_exprs(params);
                let outer = self.current;
                self.push_scope(ScopeKind::Lambda, "lambda".into());
                self.params(params);
                self.expr(body);
                self.current = outer;
            }
            ExprKind::ListComp { elt, generators }
            | ExprKind::SetComp { elt, generators }
            | ExprKind::GeneratorExp { elt, generators } => self.comprehension(generators, &[elt]),
            ExprKind::DictComp { key, value, generators } => self.comprehension(generators, &[key, value]),
            ExprKind::Call { func, args } => {
                self.expr(func);
                let callee = func.as_name();
                for a in args {
                    self.arg(a, callee);
                }
            }
            _ => {
                for c in e.children() {
                    self.expr(c);
                }
            }
        }
    }
}

struct Resolver<'a> {
    scopes: &'a [Scope],
}

impl Resolver<'_> {
    fn kind(&self, key: &BindingKey) -> Option<BindKind> {
        self.scopes[key.0].bindings.get(&key.1).copied()
    }

    fn category(&self, key: &BindingKey) -> Category {
        match self.kind(key) {
            Some(BindKind::Function) => Category::Fn,
            Some(BindKind::Param) => Category::Arg,
            _ => Category::Var,
        }
    }

    /// The binding a name refers to from `scope`; free names land in the
    /// module scope.
    fn lookup(&self, name: &str, scope: usize) -> BindingKey {
        let s = &self.scopes[scope];
        if s.globals.contains(name) {
            return (0, name.to_string());
        }
        if s.nonlocals.contains(name) {
            let mut cur = s.parent;
            while let Some(id) = cur {
                let p = &self.scopes[id];
                if p.kind != ScopeKind::Class && p.bindings.contains_key(name) {
                    return (id, name.to_string());
                }
                cur = p.parent;
            }
            return (0, name.to_string());
        }
        if s.bindings.contains_key(name) {
            return (scope, name.to_string());
        }
        let mut cur = s.parent;
        while let Some(id) = cur {
            let p = &self.scopes[id];
            if p.kind != ScopeKind::Class && p.bindings.contains_key(name) {
                return (id, name.to_string());
            }
            cur = p.parent;
        }
        (0, name.to_string())
    }

    fn renamable(&self, key: &BindingKey) -> bool {
        let name = key.1.as_str();
        if is_builtin(name) || (name.starts_with("__") && name.ends_with("__")) {
            return false;
        }
        if self.scopes[key.0].kind == ScopeKind::Class {
            return false;
        }
        !matches!(self.kind(key), Some(BindKind::Import))
    }

    fn resolve_occurrence(&self, occ: &Occurrence) -> Option<BindingKey> {
        let key = match &occ.role {
            Role::Name | Role::Global | Role::Nonlocal => self.lookup(&occ.name, occ.scope),
            Role::Keyword { callee } => {
                let fkey = self.lookup(callee, occ.scope);
                if self.kind(&fkey) != Some(BindKind::Function) || !self.renamable(&fkey) {
                    return None;
                }
                let fscope = *self.scopes[fkey.0].function_scopes.get(callee)?;
                if self.scopes[fscope].bindings.get(&occ.name) != Some(&BindKind::Param) {
                    return None;
                }
                (fscope, occ.name.clone())
            }
        };
        self.renamable(&key).then_some(key)
    }
}
