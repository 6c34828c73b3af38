//! The AST-rules detector.
//!
//! A single walk over the tree records matcher atoms, either against the
//! loop they occur in or against the whole program. Each plan's rule is a
//! disjunction of atom conjunctions; a conjunction scoped to a loop must be
//! satisfied by one and the same loop.
//!
//! Loops are `for` and `while` statements and comprehensions. Function and
//! class bodies nested in a loop start a fresh context.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::tree::*;
use crate::ast::{ParseOutcome, Span};
use crate::taxonomy::{PlanId, PlanLabelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Atom {
    /// A `for` loop, comprehension or `while` loop whose iterable or
    /// condition references a name or call.
    LoopOverCollection,
    /// An `if` inside a loop body, or a comprehension filter.
    CondInLoop,
    /// `t += e` or `t = t + e` where `t` is not a loop variable.
    AccumulatorAdd,
    /// An accumulator update adding the literal `1`.
    ConstIncrement,
    /// An accumulator update whose addend references a loop variable.
    ItemIncrement,
    /// An ordering comparison between a loop-derived value and an external
    /// variable that guards reassignment of that variable, or a
    /// `t = max(t, item)` style update.
    BestUpdate,
    /// `append`/`add`/`insert`/`extend`, list concatenation or subscript
    /// assignment under a loop guard; filtered list/set/dict comprehensions.
    CollectOnGuard,
    /// A guarded statement referencing a loop variable.
    GuardedEffect,
    /// `... % 2` inside a comparison or condition.
    ModTwoCompare,
    /// `and`/`or` inside a condition.
    BoolChain,
    /// An if-chain with at least three arms.
    ThreeWayBranch,
    /// `return` or `break` under a guard inside a loop.
    EarlyExit,
    /// A call to the `sum` builtin.
    SumBuiltin,
    /// A call to `max`/`min` over a single collection argument.
    MinMaxBuiltin,
    /// `len(<filtered comprehension>)` or `sum(1 for ...)`.
    LenFilterIdiom,
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// All atoms must match within one loop.
    SameLoop,
    /// Atoms may match anywhere in the program.
    Program,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conjunction {
    pub scope: Scope,
    pub atoms: &'static [Atom],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSpec {
    pub plan: PlanId,
    /// Satisfied when any conjunction is.
    pub predicate: Vec<Conjunction>,
    pub description: &'static str,
}

use Atom::*;

fn same_loop(atoms: &'static [Atom]) -> Conjunction {
    Conjunction { scope: Scope::SameLoop, atoms }
}

fn program(atoms: &'static [Atom]) -> Conjunction {
    Conjunction { scope: Scope::Program, atoms }
}

/// The nine rules, in catalog order.
pub fn rule_specs() -> Vec<RuleSpec> {
    vec![
        RuleSpec {
            plan: PlanId::ProcessAllItems,
            predicate: vec![same_loop(&[LoopOverCollection])],
            description: "a loop over a collection",
        },
        RuleSpec {
            plan: PlanId::FilterACollection,
            predicate: vec![
                same_loop(&[LoopOverCollection, CondInLoop, CollectOnGuard]),
                same_loop(&[LoopOverCollection, CondInLoop, GuardedEffect]),
            ],
            description: "a loop whose guard selects items to collect or act on, without exiting",
        },
        RuleSpec {
            plan: PlanId::FindBestInCollection,
            predicate: vec![same_loop(&[BestUpdate]), program(&[MinMaxBuiltin])],
            description: "a guarded best-so-far update in a loop, or max/min over a collection",
        },
        RuleSpec {
            plan: PlanId::Sum,
            predicate: vec![same_loop(&[LoopOverCollection, ItemIncrement]), program(&[SumBuiltin])],
            description: "an accumulator adding each item, or the sum builtin",
        },
        RuleSpec {
            plan: PlanId::EvennessCheck,
            predicate: vec![program(&[ModTwoCompare])],
            description: "a modulo-2 test",
        },
        RuleSpec {
            plan: PlanId::Counting,
            predicate: vec![same_loop(&[LoopOverCollection, ConstIncrement]), program(&[LenFilterIdiom])],
            description: "an accumulator adding one per item, or the length of a filtered collection",
        },
        RuleSpec {
            plan: PlanId::BooleanOperatorChaining,
            predicate: vec![program(&[BoolChain])],
            description: "a condition combining expressions with and/or",
        },
        RuleSpec {
            plan: PlanId::MultiWayBranching,
            predicate: vec![program(&[ThreeWayBranch])],
            description: "an if-chain with three or more arms",
        },
        RuleSpec {
            plan: PlanId::LinearSearching,
            predicate: vec![same_loop(&[LoopOverCollection, CondInLoop, EarlyExit])],
            description: "a loop that exits early once a guard matches",
        },
    ]
}

/// Switches for builtin-call recognition. A specific switch only takes
/// effect while `builtin_calls` is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub builtin_calls: bool,
    pub sum_builtin: bool,
    pub minmax_builtin: bool,
    pub len_filter_idiom: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig { builtin_calls: true, sum_builtin: true, minmax_builtin: true, len_filter_idiom: true }
    }
}

impl RuleConfig {
    fn sum(&self) -> bool {
        self.builtin_calls && self.sum_builtin
    }

    fn minmax(&self) -> bool {
        self.builtin_calls && self.minmax_builtin
    }

    fn len_filter(&self) -> bool {
        self.builtin_calls && self.len_filter_idiom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomMatch {
    pub atom: Atom,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub plan: PlanId,
    pub matches: Vec<AtomMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleOutput {
    pub labels: PlanLabelSet,
    /// One entry per detected plan, in catalog order.
    pub evidence: Vec<Evidence>,
}

/// Atom matches found by one walk of a program.
#[derive(Debug, Clone, Default)]
pub struct Facts {
    pub loops: Vec<BTreeMap<Atom, Vec<Span>>>,
    pub program: BTreeMap<Atom, Vec<Span>>,
}

impl Facts {
    pub fn collect(module: &Module, config: &RuleConfig) -> Facts {
        let mut a = Analyzer { config, facts: Facts::default(), frames: Vec::new(), guards: Vec::new() };
        a.block(&module.body);
        a.facts
    }

    fn has(&self, atom: Atom) -> bool {
        self.program.get(&atom).is_some_and(|v| !v.is_empty())
            || self.loops.iter().any(|l| l.get(&atom).is_some_and(|v| !v.is_empty()))
    }

    fn all_spans(&self, atom: Atom) -> Vec<Span> {
        let mut out: Vec<Span> = self.program.get(&atom).cloned().unwrap_or_default();
        for l in &self.loops {
            out.extend(l.get(&atom).into_iter().flatten());
        }
        out
    }
}

pub fn detect_rules(outcome: &ParseOutcome) -> RuleOutput {
    detect_rules_with(outcome, &RuleConfig::default())
}

pub fn detect_rules_with(outcome: &ParseOutcome, config: &RuleConfig) -> RuleOutput {
    let Some(tree) = &outcome.tree else {
        return RuleOutput { labels: PlanLabelSet::unknown(), evidence: Vec::new() };
    };
    let facts = Facts::collect(&tree.module, config);
    let evidence: Vec<Evidence> = rule_specs().iter().filter_map(|spec| evaluate(spec, &facts)).collect();
    RuleOutput { labels: PlanLabelSet::from_detected(evidence.iter().map(|e| e.plan)), evidence }
}

fn evaluate(spec: &RuleSpec, facts: &Facts) -> Option<Evidence> {
    let mut matches: Vec<AtomMatch> = Vec::new();
    let mut push = |atom: Atom, spans: &[Span]| {
        for &span in spans {
            let m = AtomMatch { atom, span };
            if !matches.contains(&m) {
                matches.push(m);
            }
        }
    };
    let mut satisfied = false;
    for conj in &spec.predicate {
        match conj.scope {
            Scope::SameLoop => {
                for l in &facts.loops {
                    if conj.atoms.iter().all(|a| l.get(a).is_some_and(|v| !v.is_empty())) {
                        satisfied = true;
                        for a in conj.atoms {
                            push(*a, &l[a]);
                        }
                    }
                }
            }
            Scope::Program => {
                if conj.atoms.iter().all(|a| facts.has(*a)) {
                    satisfied = true;
                    for a in conj.atoms {
                        push(*a, &facts.all_spans(*a));
                    }
                }
            }
        }
    }
    satisfied.then_some(Evidence { plan: spec.plan, matches })
}

/// One line per detected plan in catalog order, citing matched spans.
pub fn explain(evidence: &[Evidence]) -> String {
    if evidence.is_empty() {
        return "no known plan detected".to_string();
    }
    let mut sorted: Vec<&Evidence> = evidence.iter().collect();
    sorted.sort_by_key(|e| e.plan);
    sorted
        .iter()
        .map(|e| {
            let cited: Vec<String> = e.matches.iter().map(|m| format!("{} at {}", m.atom, m.span)).collect();
            format!("{}: {}", e.plan, cited.join("; "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

struct Frame {
    id: usize,
    vars: HashSet<String>,
    guard_base: usize,
}

struct Guard {
    exits: bool,
    best: bool,
}

struct Analyzer<'c> {
    config: &'c RuleConfig,
    facts: Facts,
    frames: Vec<Frame>,
    guards: Vec<Guard>,
}

const COLLECT_METHODS: &[&str] = &["append", "add", "insert", "extend", "appendleft"];

impl Analyzer<'_> {
    fn record_loop(&mut self, id: usize, atom: Atom, span: Span) {
        self.facts.loops[id].entry(atom).or_default().push(span);
    }

    fn record(&mut self, atom: Atom, span: Span) {
        self.facts.program.entry(atom).or_default().push(span);
    }

    fn new_loop(&mut self) -> usize {
        self.facts.loops.push(BTreeMap::new());
        self.facts.loops.len() - 1
    }

    fn guarded(&self, f: &Frame) -> bool {
        self.guards.len() > f.guard_base
    }

    fn block(&mut self, body: &[Stmt]) {
        for s in body {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::FunctionDef { .. }
            | StmtKind::ClassDef { .. }
            | StmtKind::If { .. }
            | StmtKind::While { .. }
            | StmtKind::Assert { .. } => {}
            _ => {
                for e in s.exprs() {
                    self.expr(e, false, false);
                }
            }
        }
        match &s.kind {
            StmtKind::FunctionDef { body, .. } | StmtKind::ClassDef { body, .. } => {
                for e in s.exprs() {
                    self.expr(e, false, false);
                }
                let frames = std::mem::take(&mut self.frames);
                let guards = std::mem::take(&mut self.guards);
                self.block(&body.body);
                self.frames = frames;
                self.guards = guards;
            }
            StmtKind::For { target, iter, body, orelse } => {
                let id = self.new_loop();
                if iter.any_name(&|_| true) {
                    self.record_loop(id, LoopOverCollection, Span::new(s.span.start, iter.span.end));
                }
                let vars = target.names().into_iter().map(String::from).collect();
                self.frames.push(Frame { id, vars, guard_base: self.guards.len() });
                self.block(&body.body);
                self.frames.pop();
                if let Some(orelse) = orelse {
                    self.block(&orelse.body);
                }
            }
            StmtKind::While { test, body, orelse } => {
                self.expr(test, true, false);
                let id = self.new_loop();
                if test.any_name(&|_| true) {
                    self.record_loop(id, LoopOverCollection, Span::new(s.span.start, test.span.end));
                }
                let assigned = assigned_names(&body.body, true);
                let vars = test.names().into_iter().filter(|n| assigned.contains(*n)).map(String::from).collect();
                self.frames.push(Frame { id, vars, guard_base: self.guards.len() });
                self.block(&body.body);
                self.frames.pop();
                if let Some(orelse) = orelse {
                    self.block(&orelse.body);
                }
            }
            StmtKind::If { branches, orelse } => {
                for b in branches {
                    self.expr(&b.test, true, false);
                }
                let header = Span::new(s.span.start, branches[0].test.span.end);
                let ids: Vec<usize> = self.frames.iter().map(|f| f.id).collect();
                for id in ids {
                    self.record_loop(id, CondInLoop, header);
                }
                if if_arms(s) >= 3 {
                    self.record(ThreeWayBranch, header);
                }
                for b in branches {
                    let exits = block_exits(&b.body.body);
                    let best = self.best_update_guard(&b.test, &b.body.body, Span::new(b.span.start, b.test.span.end));
                    self.guards.push(Guard { exits, best });
                    self.block(&b.body.body);
                    self.guards.pop();
                }
                if let Some(orelse) = orelse {
                    self.guards.push(Guard { exits: block_exits(&orelse.body), best: false });
                    self.block(&orelse.body);
                    self.guards.pop();
                }
            }
            StmtKind::Assert { test, msg } => {
                self.expr(test, true, false);
                if let Some(m) = msg {
                    self.expr(m, false, false);
                }
            }
            StmtKind::Return(_) | StmtKind::Break => {
                let hits: Vec<usize> = self.frames.iter().filter(|f| self.guarded(f)).map(|f| f.id).collect();
                for id in hits {
                    self.record_loop(id, EarlyExit, s.span);
                }
            }
            StmtKind::Assign { .. } | StmtKind::AugAssign { .. } | StmtKind::Expr(_) | StmtKind::AnnAssign { .. } => {
                self.simple_effects(s);
            }
            _ => {
                for b in s.blocks() {
                    self.block(&b.body);
                }
            }
        }
    }

    fn simple_effects(&mut self, s: &Stmt) {
        let accumulation = accumulation(s);
        let collect = is_collect(s);
        let minmax_update = if self.config.minmax() { minmax_update(s) } else { None };
        let mut hits: Vec<(usize, Atom)> = Vec::new();
        for f in &self.frames {
            let is_var = |n: &str| f.vars.contains(n);
            if let Some((target, addend)) = accumulation {
                if !f.vars.contains(target) {
                    hits.push((f.id, AccumulatorAdd));
                    if addend.is_int_literal("1") {
                        hits.push((f.id, ConstIncrement));
                    } else if addend.any_name(&is_var) && !matches!(addend.kind, ExprKind::List(_) | ExprKind::Tuple(_))
                    {
                        hits.push((f.id, ItemIncrement));
                    }
                }
            }
            if let Some(args) = minmax_update {
                if args.iter().any(|a| a.value().any_name(&is_var)) {
                    hits.push((f.id, BestUpdate));
                }
            }
            let clean_guard = self.guarded(f) && self.guards.last().is_some_and(|g| !g.exits && !g.best);
            if clean_guard {
                if collect {
                    hits.push((f.id, CollectOnGuard));
                }
                if read_exprs(s).iter().any(|e| e.any_name(&is_var)) {
                    hits.push((f.id, GuardedEffect));
                }
            }
        }
        for (id, atom) in hits {
            self.record_loop(id, atom, s.span);
        }
    }

    /// Records `BestUpdate` for each enclosing loop where `test` compares a
    /// loop-derived value against external names that `body` reassigns.
    fn best_update_guard(&mut self, test: &Expr, body: &[Stmt], header: Span) -> bool {
        let assigned = assigned_names(body, false);
        let mut compares: Vec<(&Expr, &Expr)> = Vec::new();
        test.walk(&mut |e| {
            if let ExprKind::Compare { left, ops, comparators } = &e.kind {
                let mut prev: &Expr = left;
                for (op, next) in ops.iter().zip(comparators) {
                    if op.is_ordering() {
                        compares.push((prev, next));
                    }
                    prev = next;
                }
            }
        });
        let mut hits = Vec::new();
        for f in &self.frames {
            let is_var = |n: &str| f.vars.contains(n);
            let matched = compares.iter().any(|&(a, b)| {
                [(a, b), (b, a)].iter().any(|&(inner, outer)| {
                    inner.any_name(&is_var)
                        && !outer.any_name(&is_var)
                        && outer.names().iter().any(|n| assigned.contains(*n))
                })
            });
            if matched {
                hits.push(f.id);
            }
        }
        let found = !hits.is_empty();
        for id in hits {
            self.record_loop(id, BestUpdate, header);
        }
        found
    }

    /// Scans an expression. `cond` marks a condition context (through
    /// `and`/`or`/`not`); `compare` marks operands of a comparison.
    fn expr(&mut self, e: &Expr, cond: bool, compare: bool) {
        match &e.kind {
            ExprKind::BoolOp { values, .. } => {
                if cond {
                    self.record(BoolChain, e.span);
                }
                for v in values {
                    self.expr(v, cond, compare);
                }
            }
            ExprKind::UnaryOp { op: UnaryOp::Not, operand } => self.expr(operand, cond, compare),
            ExprKind::BinOp { left, op, right } => {
                if *op == BinOp::Mod && right.is_int_literal("2") && (cond || compare) {
                    self.record(ModTwoCompare, e.span);
                }
                self.expr(left, false, compare);
                self.expr(right, false, compare);
            }
            ExprKind::Compare { left, comparators, .. } => {
                self.expr(left, false, true);
                for c in comparators {
                    self.expr(c, false, true);
                }
            }
            ExprKind::IfExp { test, body, orelse } => {
                self.expr(test, true, false);
                self.expr(body, false, compare);
                self.expr(orelse, false, compare);
            }
            ExprKind::ListComp { elt, generators }
            | ExprKind::SetComp { elt, generators }
            | ExprKind::GeneratorExp { elt, generators } => {
                let collects = !matches!(e.kind, ExprKind::GeneratorExp { .. });
                self.comprehension(e.span, generators, collects);
                self.expr(elt, false, compare);
            }
            ExprKind::DictComp { key, value, generators } => {
                self.comprehension(e.span, generators, true);
                self.expr(key, false, compare);
                self.expr(value, false, compare);
            }
            ExprKind::Call { func, args } => {
                self.builtin_call(e, func, args);
                for c in e.children() {
                    self.expr(c, false, compare);
                }
            }
            _ => {
                for c in e.children() {
                    self.expr(c, false, compare);
                }
            }
        }
    }

    fn comprehension(&mut self, span: Span, generators: &[Comprehension], collects: bool) {
        let id = self.new_loop();
        if generators.iter().any(|g| g.iter.any_name(&|_| true)) {
            self.record_loop(id, LoopOverCollection, span);
        }
        let filtered = generators.iter().any(|g| !g.ifs.is_empty());
        if filtered {
            self.record_loop(id, CondInLoop, span);
            if collects {
                self.record_loop(id, CollectOnGuard, span);
            }
        }
        for g in generators {
            self.expr(&g.target, false, false);
            self.expr(&g.iter, false, false);
            for cond in &g.ifs {
                self.expr(cond, true, false);
            }
        }
    }

    fn builtin_call(&mut self, call: &Expr, func: &Expr, args: &[Arg]) {
        let Some(name) = func.as_name() else { return };
        let positional: Vec<&Expr> = args
            .iter()
            .filter_map(|a| match a {
                Arg::Positional(e) => Some(e),
                _ => None,
            })
            .collect();
        let only_positional = positional.len() == 1 && !args.iter().any(|a| matches!(a, Arg::Starred(_)));
        match name {
            "sum" if !positional.is_empty() => {
                if counts_ones(positional[0]) {
                    if self.config.len_filter() {
                        self.record(LenFilterIdiom, call.span);
                    }
                } else if self.config.sum() {
                    self.record(SumBuiltin, call.span);
                }
            }
            "len" if only_positional && self.config.len_filter() && is_filtered_comprehension(positional[0]) => {
                self.record(LenFilterIdiom, call.span);
            }
            "max" | "min" if only_positional && self.config.minmax() => {
                self.record(MinMaxBuiltin, call.span);
            }
            _ => {}
        }
    }
}

/// `(target, addend)` of `t += e` or `t = t + e` / `t = e + t`.
fn accumulation(s: &Stmt) -> Option<(&str, &Expr)> {
    match &s.kind {
        StmtKind::AugAssign { target, op: BinOp::Add, value } => Some((target.as_name()?, value)),
        StmtKind::Assign { targets, value } if targets.len() == 1 => {
            let t = targets[0].as_name()?;
            match &value.kind {
                ExprKind::BinOp { left, op: BinOp::Add, right } => {
                    if left.as_name() == Some(t) {
                        Some((t, right))
                    } else if right.as_name() == Some(t) {
                        Some((t, left))
                    } else {
                        None
                    }
                }
                _ => None,
            }
        }
        _ => None,
    }
}

fn is_display(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::List(_) | ExprKind::Tuple(_) | ExprKind::Set(_))
}

fn is_collect(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Expr(Expr { kind: ExprKind::Call { func, .. }, .. }) => {
            matches!(&func.kind, ExprKind::Attribute { attr, .. } if COLLECT_METHODS.contains(&attr.name.as_str()))
        }
        StmtKind::AugAssign { op: BinOp::Add, value, .. } => is_display(value),
        StmtKind::Assign { targets, value } => {
            if targets.iter().any(|t| matches!(t.kind, ExprKind::Subscript { .. })) {
                return true;
            }
            matches!(accumulation(s), Some((_, addend)) if is_display(addend))
                || matches!(&value.kind, ExprKind::BinOp { op: BinOp::Add, left, right } if is_display(left) || is_display(right))
        }
        _ => false,
    }
}

/// Expressions a simple statement reads. Name and tuple assignment
/// targets are writes and are left out.
fn read_exprs(s: &Stmt) -> Vec<&Expr> {
    match &s.kind {
        StmtKind::Assign { targets, value } => {
            let mut out: Vec<&Expr> = targets
                .iter()
                .filter(|t| matches!(t.kind, ExprKind::Subscript { .. } | ExprKind::Attribute { .. }))
                .collect();
            out.push(value);
            out
        }
        StmtKind::AnnAssign { value, .. } => value.iter().collect(),
        StmtKind::AugAssign { value, .. } => vec![value],
        _ => s.exprs(),
    }
}

/// Arguments of `t = max(...)` / `t = min(...)` when `t` is among them.
fn minmax_update(s: &Stmt) -> Option<&[Arg]> {
    let StmtKind::Assign { targets, value } = &s.kind else { return None };
    let [target] = targets.as_slice() else { return None };
    let t = target.as_name()?;
    let ExprKind::Call { func, args } = &value.kind else { return None };
    if !matches!(func.as_name(), Some("max" | "min")) || args.len() < 2 {
        return None;
    }
    args.iter().any(|a| a.value().as_name() == Some(t)).then_some(args.as_slice())
}

fn comprehension_parts(e: &Expr) -> Option<(&Expr, &[Comprehension])> {
    match &e.kind {
        ExprKind::ListComp { elt, generators }
        | ExprKind::SetComp { elt, generators }
        | ExprKind::GeneratorExp { elt, generators } => Some((elt, generators)),
        _ => None,
    }
}

fn counts_ones(e: &Expr) -> bool {
    comprehension_parts(e).is_some_and(|(elt, _)| elt.is_int_literal("1"))
}

fn is_filtered_comprehension(e: &Expr) -> bool {
    comprehension_parts(e).is_some_and(|(_, gens)| gens.iter().any(|g| !g.ifs.is_empty()))
}

/// Number of arms of an if-chain; an `else` holding only another `if`
/// continues the chain.
fn if_arms(s: &Stmt) -> usize {
    let StmtKind::If { branches, orelse } = &s.kind else { return 0 };
    let rest = match orelse {
        None => 0,
        Some(b) if b.body.len() == 1 && matches!(b.body[0].kind, StmtKind::If { .. }) => if_arms(&b.body[0]),
        Some(_) => 1,
    };
    branches.len() + rest
}

/// True if the block contains `return` or `break` outside nested functions.
fn block_exits(body: &[Stmt]) -> bool {
    body.iter().any(|s| {
        let mut found = false;
        walk_local(s, &mut |s| found |= matches!(s.kind, StmtKind::Return(_) | StmtKind::Break));
        found
    })
}

/// Like [`Stmt::walk`], but does not enter function or class bodies.
fn walk_local<'a>(s: &'a Stmt, f: &mut dyn FnMut(&'a Stmt)) {
    f(s);
    if matches!(s.kind, StmtKind::FunctionDef { .. } | StmtKind::ClassDef { .. }) {
        return;
    }
    for b in s.blocks() {
        for inner in &b.body {
            walk_local(inner, f);
        }
    }
}

/// Names bound by plain (and optionally augmented) assignments in `body`.
fn assigned_names(body: &[Stmt], include_aug: bool) -> HashSet<String> {
    let mut out = HashSet::new();
    for s in body {
        walk_local(s, &mut |s| match &s.kind {
            StmtKind::Assign { targets, .. } => {
                for t in targets {
                    out.extend(t.names().into_iter().map(String::from));
                }
            }
            StmtKind::AnnAssign { target, .. } => out.extend(target.as_name().map(String::from)),
            StmtKind::AugAssign { target, .. } if include_aug => out.extend(target.as_name().map(String::from)),
            _ => {}
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse;

    fn labels(src: &str) -> String {
        detect_rules(&parse(src)).labels.render()
    }

    #[test]
    fn documented_examples() {
        assert_eq!(labels("t=0\nfor x in xs:\n    t += x"), "processAllItems, sum");
        assert_eq!(labels("def f(n):\n    return n % 2 == 0"), "evennessCheck");
        assert_eq!(labels("print('hi')"), "UNKNOWN");
    }

    #[test]
    fn each_plan_fires_on_its_shortest_form() {
        assert_eq!(
            labels("out = []\nfor x in xs:\n    if x > 3:\n        out.append(x)\n"),
            "processAllItems, filterACollection"
        );
        assert_eq!(
            labels("best = xs[0]\nfor x in xs:\n    if x > best:\n        best = x\n"),
            "processAllItems, findBestInCollection"
        );
        assert_eq!(labels("n = 0\nfor x in xs:\n    n += 1\n"), "processAllItems, counting");
        assert_eq!(labels("if a > 0 and b > 0:\n    print(a)\n"), "booleanOperatorChaining");
        assert_eq!(
            labels("if t < 0:\n    s = 'cold'\nelif t < 20:\n    s = 'mild'\nelse:\n    s = 'hot'\n"),
            "multiWayBranching"
        );
        assert_eq!(
            labels("def find(xs, t):\n    for i in range(len(xs)):\n        if xs[i] == t:\n            return i\n    return -1\n"),
            "processAllItems, linearSearching"
        );
    }

    #[test]
    fn builtins_and_idioms() {
        assert_eq!(labels("print(sum(xs))"), "sum");
        assert_eq!(labels("m = max(xs)"), "findBestInCollection");
        assert_eq!(labels("m = max(a, b)"), "UNKNOWN");
        assert_eq!(labels("n = len([x for x in xs if x > 0])"), "processAllItems, filterACollection, counting");
        assert_eq!(labels("n = sum(1 for x in xs if x > 0)"), "processAllItems, counting");
        assert_eq!(
            labels("best = 0\nfor x in xs:\n    best = max(best, x)\n"),
            "processAllItems, findBestInCollection"
        );
    }

    #[test]
    fn config_switches_disable_builtin_recognition() {
        let off = RuleConfig { builtin_calls: false, ..RuleConfig::default() };
        let out = detect_rules_with(&parse("print(sum(xs))"), &off);
        assert!(out.labels.is_unknown());
        let no_sum = RuleConfig { sum_builtin: false, ..RuleConfig::default() };
        let out = detect_rules_with(&parse("m = max(xs)\ns = sum(xs)"), &no_sum);
        assert_eq!(out.labels.render(), "findBestInCollection");
    }

    #[test]
    fn elif_written_as_nested_else_if_counts() {
        assert_eq!(
            labels("if a:\n    x = 1\nelse:\n    if b:\n        x = 2\n    else:\n        x = 3\n"),
            "multiWayBranching"
        );
        assert_eq!(labels("if a:\n    x = 1\nelse:\n    x = 2\n"), "UNKNOWN");
    }

    #[test]
    fn while_loops_use_assigned_condition_names() {
        let src = "i = 0\ntotal = 0\nwhile i < len(xs):\n    total += xs[i]\n    i += 1\n";
        assert_eq!(labels(src), "processAllItems, sum");
        assert_eq!(labels("while True:\n    s = input()\n"), "UNKNOWN");
    }

    #[test]
    fn failed_parse_is_unknown_with_no_evidence() {
        let out = detect_rules(&parse("for for for\n"));
        assert!(out.labels.is_unknown());
        assert!(out.evidence.is_empty());
    }

    #[test]
    fn explain_lists_plans_in_catalog_order() {
        assert_eq!(explain(&[]), "no known plan detected");
        let out = detect_rules(&parse("t = 0\nfor x in xs:\n    t += x\n"));
        let text = explain(&out.evidence);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("processAllItems: LoopOverCollection at 2:1-2:12"));
        assert_eq!(lines[1], "sum: LoopOverCollection at 2:1-2:12; ItemIncrement at 3:5-3:11");
        let mut reversed = out.evidence.clone();
        reversed.reverse();
        assert_eq!(explain(&reversed), text);
    }

    #[test]
    fn specs_cover_each_named_plan_once() {
        let specs = rule_specs();
        assert_eq!(specs.len(), 9);
        let plans: Vec<PlanId> = specs.iter().map(|s| s.plan).collect();
        assert_eq!(plans, PlanId::PLANS.to_vec());
    }
}
