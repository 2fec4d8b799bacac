//! Detects ground programs that are non-disjunctive and stratified, and
//! evaluates them directly so no solver needs to be started.
//!
//! Edges point from a rule head to the atoms of its body. Strongly connected
//! components are computed with an iterative Tarjan pass, which emits them
//! dependencies-first; that order is the evaluation order of the strata.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::ground::{AtomId, GroundProgram, RuleKind, RuleStatement};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<AtomId>,
    /// `(head, body_atom)` pairs from positive body literals.
    pub pos_edges: BTreeSet<(AtomId, AtomId)>,
    /// `(head, body_atom)` pairs from negative body literals.
    pub neg_edges: BTreeSet<(AtomId, AtomId)>,
}

pub fn build_dependency_graph(p: &GroundProgram) -> DependencyGraph {
    let mut g = DependencyGraph::default();
    for r in &p.rules {
        g.nodes.extend(r.heads.iter().chain(&r.pos_body).chain(&r.neg_body));
        if r.kind == RuleKind::Minimize {
            continue;
        }
        for &h in &r.heads {
            g.pos_edges.extend(r.pos_body.iter().map(|&b| (h, b)));
            g.neg_edges.extend(r.neg_body.iter().map(|&b| (h, b)));
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProgramClass {
    SolverFree,
    NeedsSolver,
}

/// Why a program needs a solver; `None` from [`analyze`] means solver-free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolverReason {
    Choice,
    Disjunction,
    Minimize,
    AggregateOnCycle(AtomId),
    NegativeCycle(AtomId, AtomId),
}

/// Adjacency in compressed-row form over atom indices `0..=max_atom`.
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Csr {
    fn build(n: usize, p: &GroundProgram) -> Csr {
        let mut degree = vec![0usize; n + 1];
        let rules = p.rules.iter().filter(|r| r.kind != RuleKind::Minimize);
        for r in rules.clone() {
            for h in &r.heads {
                degree[h.index()] += r.body_len();
            }
        }
        let mut offsets = vec![0usize; n + 2];
        for i in 0..=n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n + 1]];
        for r in rules {
            for h in &r.heads {
                for b in r.pos_body.iter().chain(&r.neg_body) {
                    targets[fill[h.index()]] = b.get();
                    fill[h.index()] += 1;
                }
            }
        }
        Csr { offsets, targets }
    }

    fn successors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Strongly connected components of the dependency graph.
///
/// `component[atom]` numbers components in emission order, so a component's
/// body atoms always live in components with a smaller or equal number.
pub(crate) struct Components {
    pub component: Vec<u32>,
    pub count: usize,
    /// Size of each component.
    pub sizes: Vec<u32>,
}

const UNVISITED: u32 = u32::MAX;

fn tarjan(n: usize, g: &Csr) -> Components {
    let mut index = vec![UNVISITED; n + 1];
    let mut low = vec![0u32; n + 1];
    let mut on_stack = vec![false; n + 1];
    let mut component = vec![UNVISITED; n + 1];
    let mut sizes = Vec::new();
    let mut stack: Vec<u32> = Vec::new();
    // (vertex, next successor position)
    let mut call: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;

    for root in 0..=n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root as u32, 0));
        while let Some(frame) = call.last_mut() {
            let v = frame.0 as usize;
            if frame.1 == 0 && index[v] == UNVISITED {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v as u32);
                on_stack[v] = true;
            }
            let succ = g.successors(v);
            if frame.1 < succ.len() {
                let w = succ[frame.1] as usize;
                frame.1 += 1;
                if index[w] == UNVISITED {
                    call.push((w as u32, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                let parent = parent as usize;
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let id = sizes.len() as u32;
                let mut size = 0;
                loop {
                    let w = stack.pop().expect("tarjan stack underflow") as usize;
                    on_stack[w] = false;
                    component[w] = id;
                    size += 1;
                    if w == v {
                        break;
                    }
                }
                sizes.push(size);
            }
        }
    }
    Components {
        component,
        count: sizes.len(),
        sizes,
    }
}

pub(crate) fn components(p: &GroundProgram) -> Components {
    let n = p.max_atom() as usize;
    tarjan(n, &Csr::build(n, p))
}

/// Returns the first reason the program cannot be evaluated without a
/// solver, or `None` when it is non-disjunctive and stratified.
pub fn analyze(p: &GroundProgram) -> Option<SolverReason> {
    for r in &p.rules {
        match r.kind {
            RuleKind::Choice => return Some(SolverReason::Choice),
            RuleKind::Disjunctive => return Some(SolverReason::Disjunction),
            RuleKind::Minimize => return Some(SolverReason::Minimize),
            _ => {}
        }
    }
    let scc = components(p);
    let cyclic = |head: AtomId, r: &RuleStatement| {
        scc.sizes[scc.component[head.index()] as usize] > 1
            || r.pos_body.contains(&head)
            || r.neg_body.contains(&head)
    };
    for r in &p.rules {
        let head = r.heads[0];
        if matches!(r.kind, RuleKind::Cardinality | RuleKind::Weight) && cyclic(head, r) {
            return Some(SolverReason::AggregateOnCycle(head));
        }
        let hc = scc.component[head.index()];
        if let Some(&b) = r.neg_body.iter().find(|b| scc.component[b.index()] == hc) {
            return Some(SolverReason::NegativeCycle(head, b));
        }
    }
    None
}

pub fn classify_program(p: &GroundProgram) -> ProgramClass {
    match analyze(p) {
        None => ProgramClass::SolverFree,
        Some(_) => ProgramClass::NeedsSolver,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StratError {
    #[error("program is not solver-free: {0:?}")]
    NeedsSolver(SolverReason),
    #[error("no answer set: atom {0} is derived but must be false")]
    DerivedFalse(AtomId),
    #[error("no answer set: atom {0} must be true but is not derivable")]
    UnderivedTrue(AtomId),
}

impl StratError {
    pub fn is_inconsistent(&self) -> bool {
        !matches!(self, StratError::NeedsSolver(_))
    }
}

fn aggregate_holds(r: &RuleStatement, truth: &[bool]) -> bool {
    let mut sum = 0u64;
    for (i, a) in r.neg_body.iter().enumerate() {
        if !truth[a.index()] {
            sum += r.neg_weight(i);
        }
    }
    for (i, a) in r.pos_body.iter().enumerate() {
        if truth[a.index()] {
            sum += r.pos_weight(i);
        }
    }
    sum >= r.bound
}

/// Computes the unique answer set of a solver-free program, stratum by
/// stratum, in time linear in the program size.
pub fn evaluate_stratified(p: &GroundProgram) -> Result<BTreeSet<AtomId>, StratError> {
    if let Some(reason) = analyze(p) {
        return Err(StratError::NeedsSolver(reason));
    }
    let n = p.max_atom() as usize;
    let scc = components(p);

    // Rules grouped by the component of their head.
    let mut by_comp: Vec<Vec<u32>> = vec![Vec::new(); scc.count];
    // For basic rules: positive body occurrences, atom -> rules.
    let mut occurs: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
    for (i, r) in p.rules.iter().enumerate() {
        by_comp[scc.component[r.heads[0].index()] as usize].push(i as u32);
        if r.kind == RuleKind::Basic {
            for b in &r.pos_body {
                occurs[b.index()].push(i as u32);
            }
        }
    }

    let mut truth = vec![false; n + 1];
    let mut pending = vec![0u32; p.rules.len()];
    let mut queue: Vec<AtomId> = Vec::new();

    for (comp, rules) in by_comp.iter().enumerate() {
        for &ri in rules {
            let r = &p.rules[ri as usize];
            let head = r.heads[0];
            match r.kind {
                RuleKind::Basic => {
                    // Negative literals refer to earlier strata and are final.
                    if r.neg_body.iter().any(|a| truth[a.index()]) {
                        pending[ri as usize] = u32::MAX;
                        continue;
                    }
                    let mut waiting = 0;
                    let mut blocked = false;
                    for a in &r.pos_body {
                        if scc.component[a.index()] as usize == comp {
                            waiting += 1;
                        } else if !truth[a.index()] {
                            blocked = true;
                        }
                    }
                    if blocked {
                        pending[ri as usize] = u32::MAX;
                    } else {
                        pending[ri as usize] = waiting;
                        if waiting == 0 {
                            queue.push(head);
                        }
                    }
                }
                _ => {
                    if aggregate_holds(r, &truth) {
                        queue.push(head);
                    }
                }
            }
        }
        while let Some(atom) = queue.pop() {
            if truth[atom.index()] {
                continue;
            }
            truth[atom.index()] = true;
            for &ri in &occurs[atom.index()] {
                let r = &p.rules[ri as usize];
                if scc.component[r.heads[0].index()] as usize != comp {
                    continue;
                }
                let slot = &mut pending[ri as usize];
                if *slot != u32::MAX && *slot > 0 {
                    *slot -= 1;
                    if *slot == 0 {
                        queue.push(r.heads[0]);
                    }
                }
            }
        }
    }

    if let Some(&a) = p.compute_false.iter().find(|a| a.index() <= n && truth[a.index()]) {
        return Err(StratError::DerivedFalse(a));
    }
    if let Some(&a) = p.compute_true.iter().find(|a| a.index() > n || !truth[a.index()]) {
        return Err(StratError::UnderivedTrue(a));
    }
    Ok((1..=n)
        .filter(|&i| truth[i])
        .filter_map(|i| AtomId::new(i as u32))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::parse_ground_str;

    fn atom(i: u32) -> AtomId {
        AtomId::new(i).unwrap()
    }

    fn set(ids: &[u32]) -> BTreeSet<AtomId> {
        ids.iter().map(|&i| atom(i)).collect()
    }

    fn basic(h: u32, pos: &[u32], neg: &[u32]) -> RuleStatement {
        RuleStatement::basic(
            atom(h),
            pos.iter().map(|&i| atom(i)).collect(),
            neg.iter().map(|&i| atom(i)).collect(),
        )
    }

    #[test]
    fn facts_have_no_edges() {
        let p = GroundProgram::new(vec![basic(2, &[], &[]), basic(3, &[], &[])]);
        let g = build_dependency_graph(&p);
        assert!(g.pos_edges.is_empty() && g.neg_edges.is_empty());
        assert_eq!(g.nodes, set(&[2, 3]));
        assert_eq!(classify_program(&p), ProgramClass::SolverFree);
        assert_eq!(evaluate_stratified(&p).unwrap(), set(&[2, 3]));
    }

    #[test]
    fn even_negative_cycle() {
        // a :- not b. b :- not a.
        let p = GroundProgram::new(vec![basic(1, &[], &[2]), basic(2, &[], &[1])]);
        let g = build_dependency_graph(&p);
        assert_eq!(g.neg_edges, [(atom(1), atom(2)), (atom(2), atom(1))].into());
        assert!(g.pos_edges.is_empty());
        assert_eq!(classify_program(&p), ProgramClass::NeedsSolver);
        assert!(matches!(analyze(&p), Some(SolverReason::NegativeCycle(..))));
    }

    #[test]
    fn fixture_edges() {
        let p = parse_ground_str(concat!(
            "1 2 0 0\n",
            "3 1 3 1 0 2\n",
            "1 4 1 1 3\n",
            "1 1 1 0 4\n",
            "6 0 1 0 4 1\n",
            "0\n0\nB+\n0\nB-\n1\n0\n1\n"
        ))
        .unwrap();
        let g = build_dependency_graph(&p);
        assert_eq!(g.pos_edges, [(atom(3), atom(2)), (atom(1), atom(4))].into());
        assert_eq!(g.neg_edges, [(atom(4), atom(3))].into());
        assert_eq!(g.nodes, set(&[1, 2, 3, 4]));
        assert_eq!(analyze(&p), Some(SolverReason::Choice));
    }

    #[test]
    fn acyclic_negation_is_solver_free() {
        // a. b :- a. c :- not a.
        let p = GroundProgram::new(vec![basic(1, &[], &[]), basic(2, &[1], &[]), basic(3, &[], &[1])]);
        assert_eq!(classify_program(&p), ProgramClass::SolverFree);
        assert_eq!(evaluate_stratified(&p).unwrap(), set(&[1, 2]));
    }

    #[test]
    fn two_strata() {
        // a. c :- not b.
        let p = GroundProgram::new(vec![basic(1, &[], &[]), basic(3, &[], &[2])]);
        assert_eq!(evaluate_stratified(&p).unwrap(), set(&[1, 3]));
    }

    #[test]
    fn violated_constraint() {
        // a. x :- a.  with x forced false
        let mut p = GroundProgram::new(vec![basic(1, &[], &[]), basic(2, &[1], &[])]);
        p.compute_false.insert(atom(2));
        assert_eq!(evaluate_stratified(&p), Err(StratError::DerivedFalse(atom(2))));
    }

    #[test]
    fn unsupported_true_atom() {
        let mut p = GroundProgram::new(vec![basic(1, &[], &[])]);
        p.compute_true.insert(atom(5));
        assert_eq!(evaluate_stratified(&p), Err(StratError::UnderivedTrue(atom(5))));
    }

    #[test]
    fn positive_recursion_stays_unfounded() {
        // a :- b. b :- a. c :- not a.
        let p = GroundProgram::new(vec![basic(1, &[2], &[]), basic(2, &[1], &[]), basic(3, &[], &[1])]);
        assert_eq!(classify_program(&p), ProgramClass::SolverFree);
        assert_eq!(evaluate_stratified(&p).unwrap(), set(&[3]));
    }

    #[test]
    fn positive_loop_with_support() {
        // a :- b. b :- a. b :- d. d.
        let p = GroundProgram::new(vec![
            basic(1, &[2], &[]),
            basic(2, &[1], &[]),
            basic(2, &[4], &[]),
            basic(4, &[], &[]),
        ]);
        assert_eq!(evaluate_stratified(&p).unwrap(), set(&[1, 2, 4]));
    }

    #[test]
    fn self_negation_needs_solver() {
        let p = GroundProgram::new(vec![basic(1, &[], &[1])]);
        assert_eq!(classify_program(&p), ProgramClass::NeedsSolver);
    }

    #[test]
    fn aggregates_off_cycles() {
        // a. b. c :- 2 { a, b, not d }.  e :- 3 [a=1, b=1, not d=2].
        let p = GroundProgram::new(vec![
            basic(1, &[], &[]),
            basic(2, &[], &[]),
            RuleStatement::cardinality(atom(3), 2, vec![atom(1), atom(2)], vec![atom(4)]),
            RuleStatement::weight(atom(5), 5, vec![atom(1), atom(2)], vec![atom(4)], vec![2, 1, 1]),
        ]);
        assert_eq!(classify_program(&p), ProgramClass::SolverFree);
        // c holds; e sums to 2 + 1 + 1 = 4 < 5
        assert_eq!(evaluate_stratified(&p).unwrap(), set(&[1, 2, 3]));
    }

    #[test]
    fn aggregate_on_cycle_needs_solver() {
        // a :- 1 { b }. b :- a.
        let p = GroundProgram::new(vec![
            RuleStatement::cardinality(atom(1), 1, vec![atom(2)], vec![]),
            basic(2, &[1], &[]),
        ]);
        assert_eq!(analyze(&p), Some(SolverReason::AggregateOnCycle(atom(1))));
    }

    #[test]
    fn minimize_needs_solver() {
        let p = GroundProgram::new(vec![
            basic(1, &[], &[]),
            RuleStatement::minimize(vec![atom(1)], vec![], vec![1]),
        ]);
        assert_eq!(classify_program(&p), ProgramClass::NeedsSolver);
        // Minimize contributes no edges
        assert!(build_dependency_graph(&p).pos_edges.is_empty());
    }

    #[test]
    fn empty_program() {
        let p = GroundProgram::default();
        assert_eq!(classify_program(&p), ProgramClass::SolverFree);
        assert_eq!(evaluate_stratified(&p).unwrap(), BTreeSet::new());
    }

    #[test]
    fn long_chain_does_not_recurse() {
        let n = 200_000u32;
        let mut rules = vec![basic(1, &[], &[])];
        rules.extend((2..=n).map(|i| basic(i, &[i - 1], &[])));
        let p = GroundProgram::new(rules);
        assert_eq!(evaluate_stratified(&p).unwrap().len(), n as usize);
    }
}
