//! Program generators and independent oracles shared by the integration
//! tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use aspfolio::classify::{Classifier, LinearSvm, Standardizer, TrainedModel};
use aspfolio::dataset::{RunStatus, RuntimeRecord};
use aspfolio::features::RawCounts;
use aspfolio::harness::{score_policy, Policy, RuntimeMatrix};
use aspfolio::ground::{AtomId, GroundProgram, RuleKind, RuleStatement};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn atom(i: u32) -> AtomId {
    AtomId::new(i).unwrap()
}

fn distinct<R: Rng>(rng: &mut R, atoms: u32, max: usize) -> Vec<AtomId> {
    let mut all: Vec<u32> = (1..=atoms).collect();
    all.shuffle(rng);
    let k = rng.gen_range(0..=max.min(all.len()));
    all[..k].iter().map(|&i| atom(i)).collect()
}

/// Any valid program over `atoms` atoms with up to `max_rules` statements of
/// every kind, plus symbols and disjoint compute sections.
pub fn random_program<R: Rng>(rng: &mut R, atoms: u32, max_rules: usize) -> GroundProgram {
    let n = rng.gen_range(1..=max_rules);
    let mut rules = Vec::with_capacity(n);
    for _ in 0..n {
        let pos = distinct(rng, atoms, 4);
        let neg = distinct(rng, atoms, 3);
        let head = atom(rng.gen_range(1..=atoms));
        let lits = pos.len() + neg.len();
        let weights: Vec<u64> = (0..lits).map(|_| rng.gen_range(0..5)).collect();
        let r = match rng.gen_range(0..7) {
            0 | 1 => RuleStatement::basic(head, pos, neg),
            2 => RuleStatement::fact(head),
            3 => RuleStatement::cardinality(head, rng.gen_range(0..=lits as u64), pos, neg),
            4 => {
                let heads = distinct(rng, atoms, 3);
                let heads = if heads.is_empty() { vec![head] } else { heads };
                if rng.gen_bool(0.5) {
                    RuleStatement::choice(heads, pos, neg)
                } else {
                    RuleStatement::disjunctive(heads, pos, neg)
                }
            }
            5 => RuleStatement::weight(head, rng.gen_range(0..10), pos, neg, weights),
            _ => RuleStatement::minimize(pos, neg, weights),
        };
        rules.push(r);
    }
    let mut p = GroundProgram::new(rules);
    for i in 1..=atoms {
        if rng.gen_bool(0.6) {
            p.symbols.insert(atom(i), format!("p({i})"));
        }
        match rng.gen_range(0..8) {
            0 => {
                p.compute_true.insert(atom(i));
            }
            1 => {
                p.compute_false.insert(atom(i));
            }
            _ => {}
        }
    }
    p.models_requested = rng.gen_range(0..3);
    p.validate().expect("generator builds valid programs");
    p
}

/// Basic, cardinality and weight rules layered so that negation only looks
/// at strictly lower layers. Most results are solver-free; callers filter.
pub fn layered_program<R: Rng>(rng: &mut R, atoms: u32, max_rules: usize) -> GroundProgram {
    let layer: Vec<u32> = (0..=atoms).map(|_| rng.gen_range(0..3)).collect();
    let below = |h: u32, strict: bool| -> Vec<u32> {
        (1..=atoms)
            .filter(|&a| if strict { layer[a as usize] < layer[h as usize] } else { layer[a as usize] <= layer[h as usize] })
            .collect()
    };
    let pick = |rng: &mut R, from: &[u32], max: usize| -> Vec<AtomId> {
        let mut v = from.to_vec();
        v.shuffle(rng);
        v.truncate(rng.gen_range(0..=max.min(v.len())));
        v.into_iter().map(atom).collect()
    };
    let n = rng.gen_range(1..=max_rules);
    let mut rules = Vec::new();
    for _ in 0..n {
        let h = rng.gen_range(1..=atoms);
        let neg = pick(rng, &below(h, true), 2);
        let r = match rng.gen_range(0..6) {
            0 => RuleStatement::fact(atom(h)),
            1 => {
                let pos = pick(rng, &below(h, true), 3);
                let lits = (pos.len() + neg.len()) as u64;
                RuleStatement::cardinality(atom(h), rng.gen_range(0..=lits), pos, neg)
            }
            2 => {
                let pos = pick(rng, &below(h, true), 3);
                let w: Vec<u64> = (0..pos.len() + neg.len()).map(|_| rng.gen_range(0..4)).collect();
                RuleStatement::weight(atom(h), rng.gen_range(0..6), pos, neg, w)
            }
            _ => RuleStatement::basic(atom(h), pick(rng, &below(h, false), 3), neg),
        };
        rules.push(r);
    }
    let mut p = GroundProgram::new(rules);
    for i in 1..=atoms {
        p.symbols.insert(atom(i), format!("q{i}"));
        match rng.gen_range(0..12) {
            0 => {
                p.compute_true.insert(atom(i));
            }
            1 => {
                p.compute_false.insert(atom(i));
            }
            _ => {}
        }
    }
    p
}

/// Basic rules only, arbitrary negation.
pub fn basic_program<R: Rng>(rng: &mut R, atoms: u32, max_rules: usize) -> GroundProgram {
    let n = rng.gen_range(1..=max_rules);
    let rules = (0..n)
        .map(|_| {
            let h = atom(rng.gen_range(1..=atoms));
            RuleStatement::basic(h, distinct(rng, atoms, 2), distinct(rng, atoms, 2))
        })
        .collect();
    GroundProgram::new(rules)
}

/// Counts recomputed from the serialized text, token by token.
pub fn recount_from_text(text: &str) -> RawCounts {
    let lines: Vec<&str> = text.lines().collect();
    let end = lines.iter().position(|l| l.trim() == "0").unwrap();
    let after_bplus = lines.iter().position(|l| l.trim() == "B+").unwrap();
    let after_bminus = lines.iter().position(|l| l.trim() == "B-").unwrap();
    let num = |s: &str| s.trim().parse::<u64>().unwrap();
    let section = |from: usize| -> BTreeSet<u64> {
        lines[from + 1..].iter().take_while(|l| l.trim() != "0").map(|l| num(l)).collect()
    };
    let bplus = section(after_bplus);
    let bminus = section(after_bminus);

    let mut c = [0u64; 11];
    let (f, r, pa, na, ba, cc, w, sr, cr, wr, dr) = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10);
    c[f] = bplus.len() as u64;
    for line in &lines[..end] {
        let t: Vec<u64> = line.split_whitespace().map(num).collect();
        c[r] += 1;
        // (literal count, negative count) per statement shape.
        let (lits, negs) = match t[0] {
            1 | 2 => (t[2], t[3]),
            3 | 8 => {
                let k = t[1] as usize;
                (t[2 + k], t[3 + k])
            }
            5 => (t[3], t[4]),
            6 => (t[2], t[3]),
            other => panic!("unexpected code {other}"),
        };
        c[na] += negs;
        c[pa] += lits - negs;
        match t[0] {
            1 if bminus.contains(&t[1]) => c[cc] += 1,
            1 => {
                c[sr] += 1;
                if lits == 0 {
                    c[f] += 1;
                }
            }
            2 => c[sr] += 1,
            3 => c[cr] += 1,
            5 => c[wr] += 1,
            6 => c[w] += 1,
            8 => c[dr] += 1,
            _ => unreachable!(),
        }
    }
    c[ba] = c[pa] + c[na];
    RawCounts::from_array(c)
}

fn reduct_fires(r: &RuleStatement, model: &BTreeSet<u32>, current: &BTreeSet<u32>) -> bool {
    match r.kind {
        RuleKind::Basic => {
            r.neg_body.iter().all(|a| !model.contains(&a.get()))
                && r.pos_body.iter().all(|a| current.contains(&a.get()))
        }
        RuleKind::Cardinality | RuleKind::Weight => {
            // Negative literals are evaluated against the candidate; the
            // positive part must reach what is left of the bound.
            let neg: u64 = r
                .neg_body
                .iter()
                .enumerate()
                .filter(|(_, a)| !model.contains(&a.get()))
                .map(|(i, _)| r.neg_weight(i))
                .sum();
            let pos: u64 = r
                .pos_body
                .iter()
                .enumerate()
                .filter(|(_, a)| current.contains(&a.get()))
                .map(|(i, _)| r.pos_weight(i))
                .sum();
            pos + neg >= r.bound
        }
        _ => panic!("oracle handles basic, cardinality and weight rules only"),
    }
}

fn least_model_of_reduct(p: &GroundProgram, model: &BTreeSet<u32>) -> BTreeSet<u32> {
    let mut current = BTreeSet::new();
    loop {
        let mut changed = false;
        for r in &p.rules {
            let h = r.heads[0].get();
            if !current.contains(&h) && reduct_fires(r, model, &current) {
                current.insert(h);
                changed = true;
            }
        }
        if !changed {
            return current;
        }
    }
}

/// Every stable model, by trying all subsets of `1..=max_atom`.
pub fn stable_models(p: &GroundProgram) -> Vec<BTreeSet<AtomId>> {
    let n = p.max_atom();
    assert!(n <= 16, "too many atoms for enumeration");
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let m: BTreeSet<u32> = (1..=n).filter(|a| mask & (1 << (a - 1)) != 0).collect();
        if p.compute_true.iter().any(|a| !m.contains(&a.get())) || p.compute_false.iter().any(|a| m.contains(&a.get())) {
            continue;
        }
        if least_model_of_reduct(p, &m) == m {
            out.push(m.into_iter().map(atom).collect());
        }
    }
    out
}

/// Atom-level reachability closure; true when some rule's negative body atom
/// and its head lie on a common cycle.
pub fn has_negative_edge_in_cycle(p: &GroundProgram) -> bool {
    let n = p.max_atom() as usize + 1;
    let mut reach = vec![vec![false; n]; n];
    let mut neg_edges = Vec::new();
    for r in &p.rules {
        for h in &r.heads {
            for b in &r.pos_body {
                reach[h.index()][b.index()] = true;
            }
            for b in &r.neg_body {
                reach[h.index()][b.index()] = true;
                neg_edges.push((h.index(), b.index()));
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    neg_edges.into_iter().any(|(h, b)| h == b || reach[b][h])
}

/// Confusion matrix by direct counting.
pub fn confusion_oracle(labels: &[String], pairs: &[(String, String)]) -> Vec<Vec<usize>> {
    let idx: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut m = vec![vec![0; labels.len()]; labels.len()];
    for (a, p) in pairs {
        m[idx[a.as_str()]][idx[p.as_str()]] += 1;
    }
    m
}

/// An SVM model with a fixed hyperplane over raw features.
pub fn fixed_svm(labels: [&str; 2], w: Vec<f64>, b: f64) -> TrainedModel {
    let dims = w.len();
    TrainedModel {
        labels: labels.iter().map(|s| s.to_string()).collect(),
        standardizer: Standardizer::identity(dims),
        classifier: Classifier::Svm(LinearSvm { w, b, c: 1.0 }),
    }
}

/// Text of a program with `rules` basic rules over a chain of atoms, plus a
/// pair of mutually negating rules so that it needs a solver.
pub fn synthetic_program_text(rules: usize) -> String {
    let mut s = String::with_capacity(rules * 16);
    s.push_str("1 1 1 1 2\n1 2 1 1 1\n");
    for i in 0..rules.saturating_sub(2) {
        let h = i + 3;
        match i % 4 {
            0 => s.push_str(&format!("1 {h} 0 0\n")),
            1 => s.push_str(&format!("1 {h} 1 0 {}\n", h - 1)),
            2 => s.push_str(&format!("1 {h} 2 1 1 {}\n", h - 1)),
            _ => s.push_str(&format!("3 1 {h} 1 0 {}\n", h - 2)),
        }
    }
    s.push_str("0\n1 a\n2 b\n0\nB+\n0\nB-\n0\n1\n");
    s
}

/// Complete runtime matrix with 2 to 5 solvers, a few domains and a mix of
/// solved and failed rows. Times are drawn from a small grid so ties occur.
pub fn random_matrix<R: Rng>(rng: &mut R, instances: usize) -> (Vec<RuntimeRecord>, BTreeMap<String, String>) {
    let solvers = rng.gen_range(2..=5);
    let mut records = Vec::new();
    let mut domains = BTreeMap::new();
    for i in 0..instances {
        let id = format!("inst{i:03}");
        domains.insert(id.clone(), format!("d{}", rng.gen_range(0..3)));
        for s in 0..solvers {
            let status = match rng.gen_range(0..10) {
                0..=5 => RunStatus::Solved,
                6 | 7 => RunStatus::Timeout,
                8 => RunStatus::Memout,
                _ => RunStatus::Error,
            };
            let t = rng.gen_range(1..40) as f64 * 0.25;
            records.push(RuntimeRecord::new(&id, &format!("s{s}"), status, t));
        }
    }
    (records, domains)
}

/// Instances every solver solves.
pub fn virtual_worst(m: &RuntimeMatrix) -> usize {
    m.instances
        .iter()
        .filter(|i| m.solvers.iter().all(|s| m.solved_time(i, s).is_some()))
        .count()
}

/// Picks, per domain, the solver solving most instances of that domain.
pub fn per_domain_single_best(m: &RuntimeMatrix) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for d in m.domains.values().collect::<BTreeSet<_>>() {
        let best = m
            .solvers
            .iter()
            .max_by_key(|s| {
                let n = m
                    .instances
                    .iter()
                    .filter(|i| m.domain_of(i) == d.as_str() && m.solved_time(i, s).is_some())
                    .count();
                (n, std::cmp::Reverse((*s).clone()))
            })
            .unwrap();
        out.insert(d.clone(), best.clone());
    }
    out
}

/// Checks the ordering between the virtual best, selectors and single
/// solvers on one random matrix. Returns a description of the first
/// violation.
pub fn check_dominance(seed: u64) -> Result<(), String> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=40);
    let (records, domains) = random_matrix(&mut rng, n);
    let m = RuntimeMatrix::new(records, domains).map_err(|e| e.to_string())?;
    let solvers: Vec<String> = m.solvers.iter().cloned().collect();

    let vbs = score_policy(&m, &Policy::VirtualBest, None).map_err(|e| e.to_string())?;
    let singles: Vec<usize> = solvers
        .iter()
        .map(|s| score_policy(&m, &Policy::SingleBest(s.clone()), None).map(|p| p.solved))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let worst_single = *singles.iter().min().unwrap();
    let floor = virtual_worst(&m);

    // Arbitrary choices: bounded by the virtual best and virtual worst.
    let picks: BTreeMap<String, String> = m
        .instances
        .iter()
        .map(|i| (i.clone(), solvers.choose(&mut rng).unwrap().clone()))
        .collect();
    let random = |i: &str| picks[i].clone();
    let sel = score_policy(&m, &Policy::Selector("random".into()), Some(&random)).map_err(|e| e.to_string())?;
    if sel.solved > vbs.solved || sel.solved < floor {
        return Err(format!("random selector solved {} outside [{floor}, {}]", sel.solved, vbs.solved));
    }

    // Selector built from the matrix: at least every single solver.
    let table = per_domain_single_best(&m);
    let by_domain = |i: &str| table[m.domain_of(i)].clone();
    let dom = score_policy(&m, &Policy::Selector("per-domain".into()), Some(&by_domain)).map_err(|e| e.to_string())?;
    if dom.solved > vbs.solved || dom.solved < *singles.iter().max().unwrap() || dom.solved < worst_single {
        return Err(format!("per-domain selector solved {} (singles {singles:?}, vbs {})", dom.solved, vbs.solved));
    }

    // Oracle selector: identical to the virtual best.
    let oracle = |i: &str| m.best_solver(i).map_or_else(|| solvers[0].clone(), |b| b.0.to_string());
    let orc = score_policy(&m, &Policy::Selector("oracle".into()), Some(&oracle)).map_err(|e| e.to_string())?;
    if orc.solved != vbs.solved || orc.times != vbs.times || orc.per_domain != vbs.per_domain {
        return Err("oracle selector differs from virtual best".into());
    }
    Ok(())
}
