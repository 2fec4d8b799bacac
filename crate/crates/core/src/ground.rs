//! Reading and writing the numeric ground-program format emitted by
//! lparse-compatible grounders (the "smodels" format).
//!
//! A document has five parts, each terminated by a line holding `0`:
//!
//! ```text
//! <rule lines>            type codes 1, 2, 3, 5, 6, 8
//! 0
//! <id> <name>             symbol table
//! 0
//! B+
//! <id>                    atoms that must be true
//! 0
//! B-
//! <id>                    atoms that must be false
//! 0
//! <models>
//! ```
//!
//! The full grammar of every rule line is in `docs/format.md`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{self, BufRead, BufReader, Read, Write};

use thiserror::Error;

/// Identifier of a ground atom. Always at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomId(u32);

impl AtomId {
    pub fn new(id: u32) -> Option<AtomId> {
        (id >= 1).then_some(AtomId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AtomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Statement kinds, keyed by their numeric type code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Basic,
    Cardinality,
    Choice,
    Weight,
    Minimize,
    Disjunctive,
}

impl RuleKind {
    pub fn code(self) -> u32 {
        match self {
            RuleKind::Basic => 1,
            RuleKind::Cardinality => 2,
            RuleKind::Choice => 3,
            RuleKind::Weight => 5,
            RuleKind::Minimize => 6,
            RuleKind::Disjunctive => 8,
        }
    }

    pub fn from_code(code: u64) -> Option<RuleKind> {
        Some(match code {
            1 => RuleKind::Basic,
            2 => RuleKind::Cardinality,
            3 => RuleKind::Choice,
            5 => RuleKind::Weight,
            6 => RuleKind::Minimize,
            8 => RuleKind::Disjunctive,
            _ => return None,
        })
    }

    fn has_bound(self) -> bool {
        matches!(self, RuleKind::Cardinality | RuleKind::Weight)
    }

    fn has_weights(self) -> bool {
        matches!(self, RuleKind::Weight | RuleKind::Minimize)
    }
}

/// One statement of a ground program.
///
/// `weights` lists the negative-literal weights first, then the positive
/// ones, mirroring the order on the wire.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleStatement {
    pub kind: RuleKind,
    pub heads: Vec<AtomId>,
    pub bound: u64,
    pub neg_body: Vec<AtomId>,
    pub pos_body: Vec<AtomId>,
    pub weights: Vec<u64>,
}

impl RuleStatement {
    pub fn basic(head: AtomId, pos_body: Vec<AtomId>, neg_body: Vec<AtomId>) -> Self {
        RuleStatement {
            kind: RuleKind::Basic,
            heads: vec![head],
            bound: 0,
            neg_body,
            pos_body,
            weights: Vec::new(),
        }
    }

    pub fn fact(head: AtomId) -> Self {
        Self::basic(head, Vec::new(), Vec::new())
    }

    pub fn cardinality(
        head: AtomId,
        bound: u64,
        pos_body: Vec<AtomId>,
        neg_body: Vec<AtomId>,
    ) -> Self {
        RuleStatement {
            kind: RuleKind::Cardinality,
            heads: vec![head],
            bound,
            neg_body,
            pos_body,
            weights: Vec::new(),
        }
    }

    pub fn choice(heads: Vec<AtomId>, pos_body: Vec<AtomId>, neg_body: Vec<AtomId>) -> Self {
        RuleStatement {
            kind: RuleKind::Choice,
            heads,
            bound: 0,
            neg_body,
            pos_body,
            weights: Vec::new(),
        }
    }

    pub fn weight(
        head: AtomId,
        bound: u64,
        pos_body: Vec<AtomId>,
        neg_body: Vec<AtomId>,
        weights: Vec<u64>,
    ) -> Self {
        RuleStatement {
            kind: RuleKind::Weight,
            heads: vec![head],
            bound,
            neg_body,
            pos_body,
            weights,
        }
    }

    pub fn minimize(pos_body: Vec<AtomId>, neg_body: Vec<AtomId>, weights: Vec<u64>) -> Self {
        RuleStatement {
            kind: RuleKind::Minimize,
            heads: Vec::new(),
            bound: 0,
            neg_body,
            pos_body,
            weights,
        }
    }

    pub fn disjunctive(heads: Vec<AtomId>, pos_body: Vec<AtomId>, neg_body: Vec<AtomId>) -> Self {
        RuleStatement {
            kind: RuleKind::Disjunctive,
            heads,
            bound: 0,
            neg_body,
            pos_body,
            weights: Vec::new(),
        }
    }

    pub fn body_len(&self) -> usize {
        self.neg_body.len() + self.pos_body.len()
    }

    /// Weight of the negative literal at `i`; 1 for statements without weights.
    pub fn neg_weight(&self, i: usize) -> u64 {
        if self.kind.has_weights() {
            self.weights[i]
        } else {
            1
        }
    }

    /// Weight of the positive literal at `i`; 1 for statements without weights.
    pub fn pos_weight(&self, i: usize) -> u64 {
        if self.kind.has_weights() {
            self.weights[self.neg_body.len() + i]
        } else {
            1
        }
    }

    /// Checks the shape invariants of a single statement.
    pub fn check(&self) -> Result<(), String> {
        let heads_ok = match self.kind {
            RuleKind::Basic | RuleKind::Cardinality | RuleKind::Weight => self.heads.len() == 1,
            RuleKind::Choice | RuleKind::Disjunctive => !self.heads.is_empty(),
            RuleKind::Minimize => self.heads.is_empty(),
        };
        if !heads_ok {
            return Err(format!(
                "{:?} statement with {} head atoms",
                self.kind,
                self.heads.len()
            ));
        }
        let expected_weights = if self.kind.has_weights() {
            self.body_len()
        } else {
            0
        };
        if self.weights.len() != expected_weights {
            return Err(format!(
                "expected {} weights, found {}",
                expected_weights,
                self.weights.len()
            ));
        }
        if !self.kind.has_bound() && self.bound != 0 {
            return Err(format!("{:?} statement carries a bound", self.kind));
        }
        if let Some(a) = first_duplicate(&self.neg_body) {
            return Err(format!("atom {a} repeated in negative body"));
        }
        if let Some(a) = first_duplicate(&self.pos_body) {
            return Err(format!("atom {a} repeated in positive body"));
        }
        Ok(())
    }
}

fn first_duplicate(atoms: &[AtomId]) -> Option<AtomId> {
    if atoms.len() < 2 {
        return None;
    }
    let mut seen = HashSet::with_capacity(atoms.len());
    atoms.iter().copied().find(|a| !seen.insert(*a))
}

/// A parsed ground program. Immutable once built by the parser.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundProgram {
    pub rules: Vec<RuleStatement>,
    pub symbols: BTreeMap<AtomId, String>,
    pub compute_true: BTreeSet<AtomId>,
    pub compute_false: BTreeSet<AtomId>,
    pub models_requested: u64,
}

impl Default for GroundProgram {
    fn default() -> Self {
        GroundProgram {
            rules: Vec::new(),
            symbols: BTreeMap::new(),
            compute_true: BTreeSet::new(),
            compute_false: BTreeSet::new(),
            models_requested: 1,
        }
    }
}

impl GroundProgram {
    pub fn new(rules: Vec<RuleStatement>) -> Self {
        GroundProgram {
            rules,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, r) in self.rules.iter().enumerate() {
            r.check().map_err(|e| format!("rule {}: {e}", i + 1))?;
        }
        if let Some(a) = self.compute_true.intersection(&self.compute_false).next() {
            return Err(format!("atom {a} is in both B+ and B-"));
        }
        Ok(())
    }

    /// Largest atom id mentioned anywhere in the program, 0 if none.
    pub fn max_atom(&self) -> u32 {
        let in_rules = self
            .rules
            .iter()
            .flat_map(|r| r.heads.iter().chain(&r.neg_body).chain(&r.pos_body))
            .map(|a| a.get())
            .max();
        [
            in_rules,
            self.symbols.keys().next_back().map(|a| a.get()),
            self.compute_true.iter().next_back().map(|a| a.get()),
            self.compute_false.iter().next_back().map(|a| a.get()),
        ]
        .into_iter()
        .flatten()
        .max()
        .unwrap_or(0)
    }

    pub fn name_of(&self, atom: AtomId) -> Option<&str> {
        self.symbols.get(&atom).map(String::as_str)
    }

    pub fn write_to<W: Write>(&self, out: W) -> io::Result<()> {
        write_ground_program(self, out)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        write_ground_program(self, &mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("format output is ASCII apart from symbol names")
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unsupported statement type {code}")]
    Unsupported { line: usize, code: u64 },
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("read error: {0}")]
    Io(#[from] io::Error),
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        message: message.into(),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Rules,
    Symbols,
    TrueHeader,
    TrueAtoms,
    FalseHeader,
    FalseAtoms,
    Models,
    Done,
}

struct Tokens<'a> {
    iter: std::str::SplitAsciiWhitespace<'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn number(&mut self, what: &str) -> Result<u64, ParseError> {
        let tok = self
            .iter
            .next()
            .ok_or_else(|| malformed(self.line, format!("missing {what}")))?;
        tok.parse::<u64>().map_err(|_| {
            malformed(
                self.line,
                format!("expected nonnegative integer for {what}, found `{tok}`"),
            )
        })
    }

    fn atom(&mut self, what: &str) -> Result<AtomId, ParseError> {
        let n = self.number(what)?;
        u32::try_from(n)
            .ok()
            .and_then(AtomId::new)
            .ok_or_else(|| malformed(self.line, format!("invalid atom id {n} for {what}")))
    }

    fn atoms(&mut self, count: u64, what: &str) -> Result<Vec<AtomId>, ParseError> {
        (0..count).map(|_| self.atom(what)).collect()
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        match self.iter.next() {
            None => Ok(()),
            Some(tok) => Err(malformed(self.line, format!("unexpected trailing token `{tok}`"))),
        }
    }
}

fn literal_counts(t: &mut Tokens<'_>) -> Result<(u64, u64), ParseError> {
    let lits = t.number("literal count")?;
    let neg = t.number("negative literal count")?;
    if neg > lits {
        return Err(malformed(
            t.line,
            format!("negative literal count {neg} exceeds literal count {lits}"),
        ));
    }
    Ok((lits, neg))
}

fn parse_rule(code: u64, t: &mut Tokens<'_>) -> Result<RuleStatement, ParseError> {
    let kind = RuleKind::from_code(code).ok_or(ParseError::Unsupported { line: t.line, code })?;
    let mut rule = RuleStatement {
        kind,
        heads: Vec::new(),
        bound: 0,
        neg_body: Vec::new(),
        pos_body: Vec::new(),
        weights: Vec::new(),
    };
    let (lits, neg) = match kind {
        RuleKind::Basic => {
            rule.heads.push(t.atom("head")?);
            literal_counts(t)?
        }
        RuleKind::Cardinality => {
            rule.heads.push(t.atom("head")?);
            let counts = literal_counts(t)?;
            rule.bound = t.number("bound")?;
            counts
        }
        RuleKind::Choice | RuleKind::Disjunctive => {
            let n = t.number("head count")?;
            if n == 0 {
                return Err(malformed(t.line, "statement needs at least one head"));
            }
            rule.heads = t.atoms(n, "head")?;
            literal_counts(t)?
        }
        RuleKind::Weight => {
            rule.heads.push(t.atom("head")?);
            rule.bound = t.number("bound")?;
            literal_counts(t)?
        }
        RuleKind::Minimize => {
            let zero = t.number("minimize marker")?;
            if zero != 0 {
                return Err(malformed(t.line, "minimize statement must start with `6 0`"));
            }
            literal_counts(t)?
        }
    };
    rule.neg_body = t.atoms(neg, "negative literal")?;
    rule.pos_body = t.atoms(lits - neg, "positive literal")?;
    if kind.has_weights() {
        rule.weights = (0..lits)
            .map(|_| t.number("weight"))
            .collect::<Result<_, _>>()?;
    }
    t.finish()?;
    rule.check().map_err(|m| malformed(t.line, m))?;
    Ok(rule)
}

/// Parses a complete document in a single pass over `input`.
pub fn parse_ground_program<R: Read>(input: R) -> Result<GroundProgram, ParseError> {
    let mut reader = BufReader::new(input);
    let mut program = GroundProgram::default();
    let mut section = Section::Rules;
    let mut buf = String::new();
    let mut line_no = 0;

    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let text = buf.trim_end_matches(['\n', '\r']);
        let mut t = Tokens {
            iter: text.split_ascii_whitespace(),
            line: line_no,
        };
        let Some(first) = t.iter.clone().next() else {
            // Blank lines are tolerated anywhere.
            continue;
        };
        match section {
            Section::Rules => {
                let code = t.number("statement type")?;
                if code == 0 {
                    t.finish()?;
                    section = Section::Symbols;
                } else {
                    program.rules.push(parse_rule(code, &mut t)?);
                }
            }
            Section::Symbols => {
                let id = t.number("symbol id")?;
                if id == 0 {
                    t.finish()?;
                    section = Section::TrueHeader;
                    continue;
                }
                let atom = u32::try_from(id)
                    .ok()
                    .and_then(AtomId::new)
                    .ok_or_else(|| malformed(line_no, format!("invalid atom id {id}")))?;
                let name = text.trim_start()[first.len()..].trim();
                if name.is_empty() {
                    return Err(malformed(line_no, "symbol line without a name"));
                }
                if program.symbols.insert(atom, name.to_string()).is_some() {
                    return Err(malformed(line_no, format!("atom {atom} named twice")));
                }
            }
            Section::TrueHeader | Section::FalseHeader => {
                let want = if section == Section::TrueHeader { "B+" } else { "B-" };
                if first != want {
                    return Err(malformed(line_no, format!("expected `{want}`, found `{first}`")));
                }
                t.iter.next();
                t.finish()?;
                section = if section == Section::TrueHeader {
                    Section::TrueAtoms
                } else {
                    Section::FalseAtoms
                };
            }
            Section::TrueAtoms | Section::FalseAtoms => {
                let id = t.number("compute atom")?;
                t.finish()?;
                if id == 0 {
                    section = if section == Section::TrueAtoms {
                        Section::FalseHeader
                    } else {
                        Section::Models
                    };
                    continue;
                }
                let atom = u32::try_from(id)
                    .ok()
                    .and_then(AtomId::new)
                    .ok_or_else(|| malformed(line_no, format!("invalid atom id {id}")))?;
                let (set, other) = if section == Section::TrueAtoms {
                    (&mut program.compute_true, &program.compute_false)
                } else {
                    (&mut program.compute_false, &program.compute_true)
                };
                if other.contains(&atom) {
                    return Err(malformed(line_no, format!("atom {atom} is in both B+ and B-")));
                }
                set.insert(atom);
            }
            Section::Models => {
                program.models_requested = t.number("models count")?;
                t.finish()?;
                section = Section::Done;
            }
            Section::Done => {
                return Err(malformed(line_no, "content after the models count"));
            }
        }
    }

    if section != Section::Done {
        return Err(ParseError::UnexpectedEof);
    }
    Ok(program)
}

pub fn parse_ground_str(text: &str) -> Result<GroundProgram, ParseError> {
    parse_ground_program(text.as_bytes())
}

fn write_atoms<W: Write>(out: &mut W, atoms: &[AtomId]) -> io::Result<()> {
    for a in atoms {
        write!(out, " {a}")?;
    }
    Ok(())
}

fn write_rule<W: Write>(out: &mut W, r: &RuleStatement) -> io::Result<()> {
    let lits = r.body_len();
    let neg = r.neg_body.len();
    write!(out, "{}", r.kind.code())?;
    match r.kind {
        RuleKind::Basic => write!(out, " {} {lits} {neg}", r.heads[0])?,
        RuleKind::Cardinality => write!(out, " {} {lits} {neg} {}", r.heads[0], r.bound)?,
        RuleKind::Choice | RuleKind::Disjunctive => {
            write!(out, " {}", r.heads.len())?;
            write_atoms(out, &r.heads)?;
            write!(out, " {lits} {neg}")?;
        }
        RuleKind::Weight => write!(out, " {} {} {lits} {neg}", r.heads[0], r.bound)?,
        RuleKind::Minimize => write!(out, " 0 {lits} {neg}")?,
    }
    write_atoms(out, &r.neg_body)?;
    write_atoms(out, &r.pos_body)?;
    for w in &r.weights {
        write!(out, " {w}")?;
    }
    writeln!(out)
}

/// Writes `p` in canonical form: single spaces, LF line endings, symbol and
/// compute sections in ascending atom order.
pub fn write_ground_program<W: Write>(p: &GroundProgram, out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    for r in &p.rules {
        write_rule(&mut out, r)?;
    }
    writeln!(out, "0")?;
    for (id, name) in &p.symbols {
        writeln!(out, "{id} {name}")?;
    }
    writeln!(out, "0")?;
    writeln!(out, "B+")?;
    for a in &p.compute_true {
        writeln!(out, "{a}")?;
    }
    writeln!(out, "0")?;
    writeln!(out, "B-")?;
    for a in &p.compute_false {
        writeln!(out, "{a}")?;
    }
    writeln!(out, "0")?;
    writeln!(out, "{}", p.models_requested)?;
    out.flush()
}
