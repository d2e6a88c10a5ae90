//! PCTL formulas: concrete syntax, AST, canonical printer.
//!
//! The concrete syntax follows PRISM conventions: `P>=0.9 [ (!Tc) U<=32 Tg ]`,
//! `X`, `!`, `&`, with `|` allowed between atoms only (a disjunction of atoms
//! acts as one derived proposition labeling the union of the label sets).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PctlError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("probability threshold {0} outside [0,1]")]
    BadThreshold(f64),
    #[error("negation may only be applied to atomic propositions")]
    NegationOfNonAtom,
    #[error("'|' may only join atomic propositions")]
    DisjunctionOfNonAtoms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn holds(&self, value: f64, threshold: f64) -> bool {
        match self {
            CmpOp::Lt => value < threshold,
            CmpOp::Le => value <= threshold,
            CmpOp::Ge => value >= threshold,
            CmpOp::Gt => value > threshold,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        })
    }
}

/// State formulas. An atom reference is a nonempty disjunction of
/// proposition names; the single-name case is the plain atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateFormula {
    True,
    Atom(Vec<String>),
    Not(Vec<String>),
    And(Box<StateFormula>, Box<StateFormula>),
    Prob {
        op: CmpOp,
        lambda: f64,
        path: Box<PathFormula>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathFormula {
    Next(StateFormula),
    Until(StateFormula, StateFormula),
    BoundedUntil(StateFormula, StateFormula, u32),
}

/// Result of parsing: either a state formula or a bare path formula.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    State(StateFormula),
    Path(PathFormula),
}

/// All atom names mentioned in a formula.
pub fn atoms_of(formula: &Formula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    match formula {
        Formula::State(sf) => collect_state(sf, &mut out),
        Formula::Path(pf) => collect_path(pf, &mut out),
    }
    out
}

fn collect_state(sf: &StateFormula, out: &mut BTreeSet<String>) {
    match sf {
        StateFormula::True => {}
        StateFormula::Atom(names) | StateFormula::Not(names) => {
            out.extend(names.iter().cloned())
        }
        StateFormula::And(a, b) => {
            collect_state(a, out);
            collect_state(b, out);
        }
        StateFormula::Prob { path, .. } => collect_path(path, out),
    }
}

fn collect_path(pf: &PathFormula, out: &mut BTreeSet<String>) {
    match pf {
        PathFormula::Next(sf) => collect_state(sf, out),
        PathFormula::Until(a, b) | PathFormula::BoundedUntil(a, b, _) => {
            collect_state(a, out);
            collect_state(b, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Printer
// ---------------------------------------------------------------------------

fn print_atoms(names: &[String]) -> String {
    if names.len() == 1 {
        names[0].clone()
    } else {
        format!("({})", names.join(" | "))
    }
}

impl fmt::Display for StateFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateFormula::True => f.write_str("true"),
            StateFormula::Atom(names) => f.write_str(&print_atoms(names)),
            StateFormula::Not(names) => write!(f, "!{}", print_atoms(names)),
            StateFormula::And(a, b) => {
                write!(f, "{a} & ")?;
                if matches!(**b, StateFormula::And(..)) {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            StateFormula::Prob { op, lambda, path } => {
                write!(f, "P{op}{lambda} [ {path} ]")
            }
        }
    }
}

impl PathFormula {
    fn fmt_operand(sf: &StateFormula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Until operands that are not a single token get parentheses so the
        // printed form reparses unambiguously.
        match sf {
            StateFormula::True | StateFormula::Atom(_) | StateFormula::Prob { .. } => {
                write!(f, "{sf}")
            }
            _ => write!(f, "({sf})"),
        }
    }
}

impl fmt::Display for PathFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathFormula::Next(sf) => {
                f.write_str("X ")?;
                PathFormula::fmt_operand(sf, f)
            }
            PathFormula::Until(a, b) => {
                PathFormula::fmt_operand(a, f)?;
                f.write_str(" U ")?;
                PathFormula::fmt_operand(b, f)
            }
            PathFormula::BoundedUntil(a, b, k) => {
                PathFormula::fmt_operand(a, f)?;
                write!(f, " U<={k} ")?;
                PathFormula::fmt_operand(b, f)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::State(sf) => write!(f, "{sf}"),
            Formula::Path(pf) => write!(f, "{pf}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    True,
    Not,
    And,
    Or,
    LParen,
    RParen,
    LBracket,
    RBracket,
    P,
    X,
    U,
    Cmp(CmpOp),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    toks: Vec<(usize, Tok)>,
}

impl<'a> Lexer<'a> {
    fn lex(src: &'a str) -> Result<Vec<(usize, Tok)>, PctlError> {
        let mut lx = Lexer {
            src,
            pos: 0,
            toks: Vec::new(),
        };
        lx.run()?;
        Ok(lx.toks)
    }

    fn run(&mut self) -> Result<(), PctlError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            let start = self.pos;
            let c = bytes[self.pos] as char;
            match c {
                ' ' | '\t' | '\n' | '\r' => {
                    self.pos += 1;
                }
                '(' => self.push(start, Tok::LParen),
                ')' => self.push(start, Tok::RParen),
                '[' => self.push(start, Tok::LBracket),
                ']' => self.push(start, Tok::RBracket),
                '!' => self.push(start, Tok::Not),
                '&' => self.push(start, Tok::And),
                '|' => self.push(start, Tok::Or),
                '<' | '>' => {
                    let le = self.pos + 1 < bytes.len() && bytes[self.pos + 1] == b'=';
                    let op = match (c, le) {
                        ('<', true) => CmpOp::Le,
                        ('<', false) => CmpOp::Lt,
                        ('>', true) => CmpOp::Ge,
                        ('>', false) => CmpOp::Gt,
                        _ => unreachable!(),
                    };
                    self.pos += if le { 2 } else { 1 };
                    self.toks.push((start, Tok::Cmp(op)));
                }
                '0'..='9' | '.' => {
                    let mut end = self.pos;
                    while end < bytes.len()
                        && (bytes[end].is_ascii_digit() || bytes[end] == b'.')
                    {
                        end += 1;
                    }
                    let text = &self.src[self.pos..end];
                    let value = text.parse::<f64>().map_err(|_| PctlError::Syntax {
                        pos: start,
                        msg: format!("bad number '{text}'"),
                    })?;
                    self.pos = end;
                    self.toks.push((start, Tok::Number(value)));
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut end = self.pos;
                    while end < bytes.len()
                        && ((bytes[end] as char).is_ascii_alphanumeric() || bytes[end] == b'_')
                    {
                        end += 1;
                    }
                    let word = &self.src[self.pos..end];
                    self.pos = end;
                    let tok = match word {
                        "true" => Tok::True,
                        "P" => Tok::P,
                        "X" => Tok::X,
                        "U" => Tok::U,
                        _ => Tok::Ident(word.to_string()),
                    };
                    self.toks.push((start, tok));
                }
                _ => {
                    return Err(PctlError::Syntax {
                        pos: start,
                        msg: format!("unexpected character '{c}'"),
                    })
                }
            }
        }
        Ok(())
    }

    fn push(&mut self, start: usize, tok: Tok) {
        self.pos += 1;
        self.toks.push((start, tok));
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(_, t)| t.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<(), PctlError> {
        let pos = self.pos();
        match self.next() {
            Some(t) if t == tok => Ok(()),
            other => Err(PctlError::Syntax {
                pos,
                msg: format!("expected {tok:?}, found {other:?}"),
            }),
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, PctlError> {
        Err(PctlError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn state(&mut self) -> Result<StateFormula, PctlError> {
        let mut lhs = self.primary()?;
        while self.peek() == Some(&Tok::And) {
            self.next();
            let rhs = self.primary()?;
            lhs = StateFormula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<StateFormula, PctlError> {
        match self.peek() {
            Some(Tok::True) => {
                self.next();
                Ok(StateFormula::True)
            }
            Some(Tok::Ident(_)) => {
                let Some(Tok::Ident(name)) = self.next() else {
                    unreachable!()
                };
                Ok(StateFormula::Atom(vec![name]))
            }
            Some(Tok::Not) => {
                self.next();
                let operand = match self.peek() {
                    Some(Tok::Ident(_)) => {
                        let Some(Tok::Ident(name)) = self.next() else {
                            unreachable!()
                        };
                        vec![name]
                    }
                    Some(Tok::LParen) => {
                        self.next();
                        let names = self.atom_disjunction()?;
                        self.expect(Tok::RParen)?;
                        names
                    }
                    _ => return Err(PctlError::NegationOfNonAtom),
                };
                Ok(StateFormula::Not(operand))
            }
            Some(Tok::P) => self.prob(),
            Some(Tok::LParen) => {
                self.next();
                let inner = self.state()?;
                if self.peek() == Some(&Tok::Or) {
                    // Disjunction sugar: every part must be an atom.
                    let StateFormula::Atom(mut names) = inner else {
                        return Err(PctlError::DisjunctionOfNonAtoms);
                    };
                    while self.peek() == Some(&Tok::Or) {
                        self.next();
                        match self.next() {
                            Some(Tok::Ident(name)) => names.push(name),
                            _ => return Err(PctlError::DisjunctionOfNonAtoms),
                        }
                    }
                    self.expect(Tok::RParen)?;
                    return Ok(StateFormula::Atom(names));
                }
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            _ => self.err("expected a state formula"),
        }
    }

    fn atom_disjunction(&mut self) -> Result<Vec<String>, PctlError> {
        let mut names = Vec::new();
        loop {
            match self.next() {
                Some(Tok::Ident(name)) => names.push(name),
                _ => return Err(PctlError::DisjunctionOfNonAtoms),
            }
            if self.peek() == Some(&Tok::Or) {
                self.next();
            } else {
                return Ok(names);
            }
        }
    }

    fn prob(&mut self) -> Result<StateFormula, PctlError> {
        self.expect(Tok::P)?;
        let op = match self.next() {
            Some(Tok::Cmp(op)) => op,
            _ => return self.err("expected a comparison operator after P"),
        };
        let lambda = match self.next() {
            Some(Tok::Number(v)) => v,
            _ => return self.err("expected a probability threshold"),
        };
        if !(0.0..=1.0).contains(&lambda) {
            return Err(PctlError::BadThreshold(lambda));
        }
        self.expect(Tok::LBracket)?;
        let path = self.path()?;
        self.expect(Tok::RBracket)?;
        Ok(StateFormula::Prob {
            op,
            lambda,
            path: Box::new(path),
        })
    }

    fn path(&mut self) -> Result<PathFormula, PctlError> {
        if self.peek() == Some(&Tok::X) {
            self.next();
            let sf = self.state()?;
            return Ok(PathFormula::Next(sf));
        }
        let lhs = self.state()?;
        self.until_tail(lhs)
    }

    fn until_tail(&mut self, lhs: StateFormula) -> Result<PathFormula, PctlError> {
        match self.next() {
            Some(Tok::U) => {}
            other => {
                return Err(PctlError::Syntax {
                    pos: self.pos(),
                    msg: format!("expected 'U' in path formula, found {other:?}"),
                })
            }
        }
        let bound = if matches!(self.peek(), Some(Tok::Cmp(CmpOp::Le))) {
            self.next();
            match self.next() {
                Some(Tok::Number(v)) if v >= 0.0 && v.fract() == 0.0 => Some(v as u32),
                _ => return self.err("expected an integer bound after U<="),
            }
        } else {
            None
        };
        let rhs = self.state()?;
        Ok(match bound {
            Some(k) => PathFormula::BoundedUntil(lhs, rhs, k),
            None => PathFormula::Until(lhs, rhs),
        })
    }
}

/// Parses a state formula, or a bare path formula (for synthesis targets).
pub fn parse_formula(text: &str) -> Result<Formula, PctlError> {
    let toks = Lexer::lex(text)?;
    let mut parser = Parser {
        toks,
        idx: 0,
        end: text.len(),
    };
    // A path formula either starts with X or continues with U after a state
    // formula; try the state reading first.
    if parser.peek() == Some(&Tok::X) {
        let path = parser.path()?;
        if parser.peek().is_some() {
            return parser.err("trailing input after path formula");
        }
        return Ok(Formula::Path(path));
    }
    let sf = parser.state()?;
    match parser.peek() {
        None => Ok(Formula::State(sf)),
        Some(Tok::U) => {
            let path = parser.until_tail(sf)?;
            if parser.peek().is_some() {
                return parser.err("trailing input after path formula");
            }
            Ok(Formula::Path(path))
        }
        Some(t) => {
            let t = t.clone();
            parser.err(format!("trailing token {t:?}"))
        }
    }
}

/// Parses a state formula, rejecting bare path formulas.
pub fn parse_state_formula(text: &str) -> Result<StateFormula, PctlError> {
    match parse_formula(text)? {
        Formula::State(sf) => Ok(sf),
        Formula::Path(_) => Err(PctlError::Syntax {
            pos: 0,
            msg: "expected a state formula, found a path formula".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_benchmark_bounded_until() {
        let f = parse_formula("P>=0.9 [ (!Tc) U<=32 Tg ]").unwrap();
        let expect = Formula::State(StateFormula::Prob {
            op: CmpOp::Ge,
            lambda: 0.9,
            path: Box::new(PathFormula::BoundedUntil(
                StateFormula::Not(vec!["Tc".into()]),
                StateFormula::Atom(vec!["Tg".into()]),
                32,
            )),
        });
        assert_eq!(f, expect);
    }

    #[test]
    fn parses_rich_nested_formula() {
        let f = parse_formula(
            "P>=0.6 [ X P<=0.5 [ (!Tc) U<=31 (Tl | Tc) ] ] & P>=0.9 [ (!Tc) U<=32 Tg ]",
        )
        .unwrap();
        let Formula::State(StateFormula::And(lhs, rhs)) = &f else {
            panic!("expected a conjunction, got {f:?}")
        };
        let StateFormula::Prob { op, lambda, path } = &**lhs else {
            panic!()
        };
        assert_eq!((*op, *lambda), (CmpOp::Ge, 0.6));
        let PathFormula::Next(inner) = &**path else { panic!() };
        let StateFormula::Prob { op, lambda, path } = inner else {
            panic!()
        };
        assert_eq!((*op, *lambda), (CmpOp::Le, 0.5));
        let PathFormula::BoundedUntil(safe, reach, k) = &**path else {
            panic!()
        };
        assert_eq!(safe, &StateFormula::Not(vec!["Tc".into()]));
        assert_eq!(reach, &StateFormula::Atom(vec!["Tl".into(), "Tc".into()]));
        assert_eq!(*k, 31);
        let StateFormula::Prob { lambda, .. } = &**rhs else {
            panic!()
        };
        assert_eq!(*lambda, 0.9);
    }

    #[test]
    fn parses_true() {
        assert_eq!(
            parse_formula("true").unwrap(),
            Formula::State(StateFormula::True)
        );
    }

    #[test]
    fn atoms_of_examples() {
        let rich = parse_formula(
            "P>=0.6 [ X P<=0.5 [ (!Tc) U<=31 (Tl | Tc) ] ] & P>=0.9 [ (!Tc) U<=32 Tg ]",
        )
        .unwrap();
        let atoms = atoms_of(&rich);
        assert_eq!(
            atoms,
            ["Tc", "Tg", "Tl"].iter().map(|s| s.to_string()).collect()
        );
        assert!(atoms_of(&parse_formula("true").unwrap()).is_empty());
        let next = parse_formula("P>0 [ X a ]").unwrap();
        assert_eq!(atoms_of(&next).len(), 1);
    }

    #[test]
    fn threshold_out_of_range_rejected() {
        assert_eq!(
            parse_formula("P>=1.5 [ X a ]").unwrap_err(),
            PctlError::BadThreshold(1.5)
        );
    }

    #[test]
    fn negation_of_non_atom_rejected() {
        assert!(matches!(
            parse_formula("!P>=0.5 [ X a ]"),
            Err(PctlError::NegationOfNonAtom)
        ));
    }

    #[test]
    fn disjunction_of_non_atoms_rejected() {
        assert!(matches!(
            parse_formula("(a & b | c)"),
            Err(PctlError::DisjunctionOfNonAtoms)
        ));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_formula("P>=0.9 [ a U<= b ]").unwrap_err();
        assert!(matches!(err, PctlError::Syntax { .. }));
    }

    #[test]
    fn bare_path_formula_parses() {
        let f = parse_formula("(!Tc) U<=32 Tg").unwrap();
        assert!(matches!(f, Formula::Path(PathFormula::BoundedUntil(..))));
        let f = parse_formula("X goal").unwrap();
        assert!(matches!(f, Formula::Path(PathFormula::Next(_))));
    }

    // Random well-formed formulas for the canonicalization property.
    fn arb_atoms() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "goal"]), 1..3)
            .prop_map(|v| {
                let mut names: Vec<String> = v.into_iter().map(String::from).collect();
                names.dedup();
                names
            })
    }

    fn arb_state() -> impl Strategy<Value = StateFormula> {
        let leaf = prop_oneof![
            Just(StateFormula::True),
            arb_atoms().prop_map(StateFormula::Atom),
            arb_atoms().prop_map(StateFormula::Not),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| StateFormula::And(
                    Box::new(a),
                    Box::new(b)
                )),
                (
                    prop::sample::select(vec![CmpOp::Lt, CmpOp::Le, CmpOp::Ge, CmpOp::Gt]),
                    (0u32..=100).prop_map(|v| v as f64 / 100.0),
                    inner.clone(),
                    inner,
                    prop_oneof![Just(0u32), Just(1), 2u32..40],
                    0u32..3,
                )
                    .prop_map(|(op, lambda, a, b, k, kind)| StateFormula::Prob {
                        op,
                        lambda,
                        path: Box::new(match kind {
                            0 => PathFormula::Next(a),
                            1 => PathFormula::Until(a, b),
                            _ => PathFormula::BoundedUntil(a, b, k),
                        }),
                    }),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn print_parse_roundtrip(f in arb_state()) {
            let printed = f.to_string();
            let reparsed = parse_formula(&printed).unwrap();
            prop_assert_eq!(&reparsed, &Formula::State(f));
            // Canonicalization is idempotent.
            let reprinted = reparsed.to_string();
            prop_assert_eq!(printed, reprinted);
        }
    }
}
