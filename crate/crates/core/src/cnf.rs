//! DIMACS CNF ingestion and the partial-assignment tree of a formula.

use std::fmt;

use crate::addr::{NodeAddr, MAX_DEPTH};
use crate::error::{Error, Result};
use crate::tree::SuccinctTree;

/// A signed literal: `+v` is variable `v`, `-v` its negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal(i32);

impl Literal {
    pub fn new(value: i32) -> Option<Self> {
        (value != 0).then_some(Literal(value))
    }

    pub fn var(self) -> u32 {
        self.0.unsigned_abs()
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn value(self) -> i32 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cnf {
    num_vars: u32,
    clauses: Vec<Vec<Literal>>,
}

impl Cnf {
    pub fn new(num_vars: u32, clauses: Vec<Vec<Literal>>) -> Result<Self> {
        if num_vars == 0 {
            return Err(Error::InvalidParameter("a CNF needs at least one variable".into()));
        }
        for (i, clause) in clauses.iter().enumerate() {
            if clause.is_empty() {
                return Err(Error::InvalidParameter(format!("clause {} is empty", i + 1)));
            }
            if let Some(lit) = clause.iter().find(|l| l.var() > num_vars) {
                return Err(Error::InvalidParameter(format!(
                    "clause {} references variable {} of {num_vars}",
                    i + 1,
                    lit.var()
                )));
            }
        }
        Ok(Self { num_vars, clauses })
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<Literal>] {
        &self.clauses
    }
}

impl fmt::Display for Cnf {
    /// DIMACS text.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p cnf {} {}", self.num_vars, self.clauses.len())?;
        for clause in &self.clauses {
            for lit in clause {
                write!(f, "{} ", lit.value())?;
            }
            writeln!(f, "0")?;
        }
        Ok(())
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses DIMACS CNF text.
///
/// Comment lines start with `c`; the header is `p cnf <vars> <clauses>`;
/// clauses are whitespace-separated integers terminated by `0` and may span
/// lines. A line starting with `%` ends the input (SATLIB convention).
pub fn parse_dimacs(text: &str) -> Result<Cnf> {
    let mut header: Option<(u32, usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(parse_err(line_no, "duplicate header"));
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                ["p", "cnf", vars, count] => vars.parse::<u32>().ok().zip(count.parse::<usize>().ok()),
                _ => None,
            };
            let (vars, count) = parsed
                .ok_or_else(|| parse_err(line_no, format!("malformed header {line:?}")))?;
            if vars == 0 {
                return Err(parse_err(line_no, "header declares zero variables"));
            }
            header = Some((vars, count, line_no));
            continue;
        }
        let (vars, _, _) =
            header.ok_or_else(|| parse_err(line_no, "clause data before the header"))?;
        for token in line.split_whitespace() {
            let value: i64 = token
                .parse()
                .map_err(|_| parse_err(line_no, format!("invalid literal {token:?}")))?;
            if value == 0 {
                if current.is_empty() {
                    return Err(parse_err(line_no, "empty clause"));
                }
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            if value.unsigned_abs() > vars as u64 {
                return Err(parse_err(
                    line_no,
                    format!("literal {value} is out of range for {vars} variables"),
                ));
            }
            current.push(Literal(value as i32));
        }
    }

    let (vars, count, header_line) = header.ok_or_else(|| parse_err(last_line, "missing header"))?;
    if !current.is_empty() {
        return Err(parse_err(last_line, "last clause is not terminated by 0"));
    }
    if clauses.len() != count {
        return Err(parse_err(
            header_line,
            format!("header declares {count} clauses but {} were found", clauses.len()),
        ));
    }
    Cnf::new(vars, clauses)
}

/// The backtracking tree of a formula under a fixed variable order.
///
/// Depth `j` assigns `order[j]`; bit 1 means true. A node is a member iff its
/// partial assignment falsifies no clause.
#[derive(Debug, Clone)]
pub struct CnfTree {
    cnf: Cnf,
    order: Vec<u32>,
    /// Per clause: (depth after which it is fully assigned, literals as (position, wanted bit)).
    checks: Vec<(u32, Vec<(u32, bool)>)>,
    label: String,
}

/// Builds the tree for `cnf`; `order` defaults to `1..=num_vars`.
pub fn cnf_tree(cnf: Cnf, order: Option<Vec<u32>>) -> Result<CnfTree> {
    let n = cnf.num_vars();
    if n > MAX_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "{n} variables exceed the supported depth {MAX_DEPTH}"
        )));
    }
    let order = order.unwrap_or_else(|| (1..=n).collect());
    let mut position = vec![u32::MAX; n as usize + 1];
    if order.len() != n as usize {
        return Err(Error::InvalidParameter(format!(
            "order has {} entries for {n} variables",
            order.len()
        )));
    }
    for (pos, &var) in order.iter().enumerate() {
        if var == 0 || var > n || position[var as usize] != u32::MAX {
            return Err(Error::InvalidParameter(format!(
                "order is not a permutation of 1..={n}"
            )));
        }
        position[var as usize] = pos as u32;
    }
    let mut checks: Vec<(u32, Vec<(u32, bool)>)> = cnf
        .clauses()
        .iter()
        .map(|clause| {
            let lits: Vec<(u32, bool)> = clause
                .iter()
                .map(|l| (position[l.var() as usize], l.is_positive()))
                .collect();
            let last = lits.iter().map(|&(p, _)| p).max().expect("clauses are nonempty");
            (last + 1, lits)
        })
        .collect();
    checks.sort_by_key(|(depth, _)| *depth);
    let label = format!("cnf:{}v:{}c", n, cnf.clauses().len());
    Ok(CnfTree {
        cnf,
        order,
        checks,
        label,
    })
}

impl CnfTree {
    pub fn cnf(&self) -> &Cnf {
        &self.cnf
    }

    pub fn order(&self) -> &[u32] {
        &self.order
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn falsifies_any(&self, addr: NodeAddr, from_depth: u32) -> bool {
        let depth = addr.depth();
        let start = self.checks.partition_point(|(d, _)| *d < from_depth);
        self.checks[start..]
            .iter()
            .take_while(|(d, _)| *d <= depth)
            .any(|(_, lits)| lits.iter().all(|&(pos, wanted)| addr.bit(pos) != wanted))
    }
}

impl SuccinctTree for CnfTree {
    fn level_budget(&self) -> u32 {
        self.cnf.num_vars()
    }
    fn member(&self, addr: NodeAddr) -> bool {
        !self.falsifies_any(addr, 0)
    }
    fn has_child(&self, addr: NodeAddr, bit: u8) -> bool {
        // Clauses completed above the child were already checked for `addr`.
        let child_depth = addr.depth() + 1;
        child_depth <= self.level_budget() && !self.falsifies_any(addr.child(bit), child_depth)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{exact_count, validate_prefix_closed};

    fn a(s: &str) -> NodeAddr {
        s.parse().unwrap()
    }

    fn lits(v: &[i32]) -> Vec<Literal> {
        v.iter().map(|&x| Literal::new(x).unwrap()).collect()
    }

    #[test]
    fn parse_examples() {
        let cnf = parse_dimacs("p cnf 2 1\n1 2 0").unwrap();
        assert_eq!(cnf.num_vars(), 2);
        assert_eq!(cnf.clauses(), &[lits(&[1, 2])]);
        let cnf = parse_dimacs("c comment\np cnf 1 1\n-1 0").unwrap();
        assert_eq!(cnf.clauses(), &[lits(&[-1])]);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let cases = [
            ("p cnf 1 1\n0", 2, "empty clause"),
            ("p cnf x 1\n1 0", 1, "malformed header"),
            ("p dnf 1 1\n1 0", 1, "malformed header"),
            ("c hi\np cnf 2 1\n1 3 0", 3, "out of range"),
            ("p cnf 2 2\n1 2 0", 1, "declares 2 clauses"),
            ("1 2 0\np cnf 2 1", 1, "before the header"),
            ("p cnf 2 1\n1 2", 2, "not terminated"),
            ("c only comments", 1, "missing header"),
            ("p cnf 2 1\n1 a 0", 2, "invalid literal"),
        ];
        for (text, line, needle) in cases {
            match parse_dimacs(text) {
                Err(Error::Parse { line: l, msg }) => {
                    assert_eq!(l, line, "{text:?}: {msg}");
                    assert!(msg.contains(needle), "{text:?}: {msg}");
                }
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn parse_multiline_clauses_and_satlib_trailer() {
        let cnf = parse_dimacs("p cnf 3 2\n1 -2\n 3 0 -1\n0\n%\n0\n").unwrap();
        assert_eq!(cnf.clauses(), &[lits(&[1, -2, 3]), lits(&[-1])]);
        let round = parse_dimacs(&cnf.to_string()).unwrap();
        assert_eq!(round, cnf);
    }

    #[test]
    fn or_clause_tree() {
        let t = cnf_tree(parse_dimacs("p cnf 2 1\n1 2 0").unwrap(), None).unwrap();
        assert!(!t.contains(a("00")).unwrap());
        assert!(t.contains(a("01")).unwrap());
        assert_eq!(exact_count(&t, 100).unwrap(), 6);
    }

    #[test]
    fn unit_clause_tree() {
        let t = cnf_tree(parse_dimacs("p cnf 1 1\n1 0").unwrap(), None).unwrap();
        assert!(!t.contains(a("0")).unwrap());
        assert!(t.contains(a("1")).unwrap());
    }

    #[test]
    fn no_clauses_gives_full_tree() {
        let t = cnf_tree(Cnf::new(3, vec![]).unwrap(), None).unwrap();
        assert_eq!(exact_count(&t, 100).unwrap(), 15);
    }

    #[test]
    fn order_changes_shape_not_validity() {
        let cnf = parse_dimacs("p cnf 3 2\n1 0\n-2 3 0").unwrap();
        let identity = cnf_tree(cnf.clone(), None).unwrap();
        let reversed = cnf_tree(cnf.clone(), Some(vec![3, 2, 1])).unwrap();
        // x1 decided first: only the right subtree survives.
        assert!(!identity.contains(a("0")).unwrap());
        assert!(reversed.contains(a("0")).unwrap());
        assert!(!reversed.contains(a("010")).unwrap());
        assert_eq!(validate_prefix_closed(&reversed, 1 << 10), None);
        assert!(cnf_tree(cnf.clone(), Some(vec![1, 1, 2])).is_err());
        assert!(cnf_tree(cnf, Some(vec![1, 2])).is_err());
    }
}
