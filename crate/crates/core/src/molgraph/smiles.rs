//! Parser for the organic-subset SMILES dialect used by the molecule files.
//!
//! Supported: organic-subset atoms (upper and aromatic lower case), bracket
//! atoms with hydrogen count and charge, branches, ring closures (`1`-`9`
//! and `%nn`) and the bond symbols `-`, `=`, `#`, `:`. Stereo markers,
//! isotopes, atom classes and `.` fragments are rejected.
//!
//! All hydrogens become nodes. Heavy atoms keep their order of appearance;
//! hydrogens are appended afterwards, grouped by their heavy atom.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, GraphError, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty SMILES")]
    Empty,
    #[error("non-ASCII input")]
    NonAscii,
    #[error("unbalanced parenthesis")]
    UnbalancedParenthesis,
    #[error("unmatched ring-closure digit {0}")]
    UnmatchedRingClosure(u32),
    #[error("unsupported element `{0}`")]
    UnsupportedElement(String),
    #[error("unsupported token `{0}`")]
    UnsupportedToken(String),
    #[error("valence overflow on {element} (bond order sum {used}, allowed {allowed})")]
    ValenceOverflow {
        element: Element,
        used: u32,
        allowed: i32,
    },
    #[error("unexpected character `{0}`")]
    UnexpectedCharacter(char),
    #[error("bond symbol without a following atom")]
    DanglingBond,
    #[error("ring closure bond symbols disagree")]
    RingBondMismatch,
    #[error("ring closure joins an atom to itself or duplicates a bond")]
    InvalidRingClosure,
    #[error("unterminated bracket atom")]
    UnterminatedBracket,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Parse failure with the 0-based character offset it refers to.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

fn err<T>(kind: ParseErrorKind, position: usize) -> Result<T, ParseError> {
    Err(ParseError { kind, position })
}

struct ParsedAtom {
    element: Element,
    charge: i32,
    aromatic: bool,
    /// Explicit hydrogen count for bracket atoms; `None` means implicit.
    bracket_h: Option<u32>,
    position: usize,
}

struct OpenRing {
    atom: usize,
    bond: Option<BondOrder>,
    position: usize,
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    atoms: Vec<ParsedAtom>,
    bonds: Vec<(usize, usize, BondOrder)>,
}

fn bond_symbol(c: u8) -> Option<BondOrder> {
    match c {
        b'-' => Some(BondOrder::Single),
        b'=' => Some(BondOrder::Double),
        b'#' => Some(BondOrder::Triple),
        b':' => Some(BondOrder::Aromatic),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn has_bond(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|&(u, v, _)| (u == a && v == b) || (u == b && v == a))
    }

    fn parse_organic(&mut self) -> Result<ParsedAtom, ParseError> {
        let start = self.pos;
        let c = self.s[self.pos];
        self.pos += 1;
        let (element, aromatic) = match c {
            b'C' if self.peek() == Some(b'l') => {
                self.pos += 1;
                (Element::Cl, false)
            }
            b'B' if self.peek() == Some(b'r') => {
                self.pos += 1;
                (Element::Br, false)
            }
            b'B' => (Element::B, false),
            b'C' => (Element::C, false),
            b'N' => (Element::N, false),
            b'O' => (Element::O, false),
            b'P' => (Element::P, false),
            b'S' => (Element::S, false),
            b'F' => (Element::F, false),
            b'I' => (Element::I, false),
            b'b' => (Element::B, true),
            b'c' => (Element::C, true),
            b'n' => (Element::N, true),
            b'o' => (Element::O, true),
            b'p' => (Element::P, true),
            b's' => (Element::S, true),
            _ => {
                let mut end = self.pos;
                while end < self.s.len() && self.s[end].is_ascii_lowercase() && end - start < 2 {
                    end += 1;
                }
                let sym = String::from_utf8_lossy(&self.s[start..end]).into_owned();
                return err(ParseErrorKind::UnsupportedElement(sym), start);
            }
        };
        Ok(ParsedAtom {
            element,
            charge: 0,
            aromatic,
            bracket_h: None,
            position: start,
        })
    }

    fn parse_bracket(&mut self) -> Result<ParsedAtom, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let Some(c) = self.peek() else {
            return err(ParseErrorKind::UnterminatedBracket, open);
        };
        if c.is_ascii_digit() {
            return err(ParseErrorKind::UnsupportedToken("isotope".into()), self.pos);
        }
        let sym_start = self.pos;
        let (element, aromatic) = if c.is_ascii_lowercase() {
            self.pos += 1;
            let sym = (c as char).to_string();
            match c {
                b'b' | b'c' | b'n' | b'o' | b'p' | b's'
                    if !self.peek().is_some_and(|x| x.is_ascii_lowercase()) =>
                {
                    (Element::from_symbol(&sym.to_uppercase()).unwrap(), true)
                }
                _ => {
                    let mut sym = sym;
                    while let Some(x) = self.peek().filter(u8::is_ascii_lowercase) {
                        sym.push(x as char);
                        self.pos += 1;
                    }
                    return err(ParseErrorKind::UnsupportedElement(sym), sym_start);
                }
            }
        } else if c.is_ascii_uppercase() {
            self.pos += 1;
            let mut sym = (c as char).to_string();
            if let Some(x) = self.peek().filter(u8::is_ascii_lowercase) {
                sym.push(x as char);
                self.pos += 1;
            }
            match Element::from_symbol(&sym) {
                Some(e) => (e, false),
                None => return err(ParseErrorKind::UnsupportedElement(sym), sym_start),
            }
        } else if c == b'*' {
            return err(ParseErrorKind::UnsupportedElement("*".into()), self.pos);
        } else {
            return err(ParseErrorKind::UnexpectedCharacter(c as char), self.pos);
        };

        if self.peek() == Some(b'@') {
            return err(ParseErrorKind::UnsupportedToken("@".into()), self.pos);
        }
        let mut hcount = 0;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hcount = 1;
            if let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                hcount = (d - b'0') as u32;
                self.pos += 1;
            }
        }
        let mut charge = 0i32;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            charge = unit;
            if let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                charge = unit * (d - b'0') as i32;
                self.pos += 1;
            } else {
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }
        match self.peek() {
            Some(b']') => self.pos += 1,
            Some(b':') => return err(ParseErrorKind::UnsupportedToken("atom class".into()), self.pos),
            Some(x) => return err(ParseErrorKind::UnexpectedCharacter(x as char), self.pos),
            None => return err(ParseErrorKind::UnterminatedBracket, open),
        }
        Ok(ParsedAtom {
            element,
            charge,
            aromatic,
            bracket_h: Some(hcount),
            position: open,
        })
    }

    fn run(&mut self) -> Result<(), ParseError> {
        let mut prev: Option<usize> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();
        let mut pending: Option<(BondOrder, usize)> = None;
        let mut open_rings: BTreeMap<u32, OpenRing> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let here = self.pos;
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return err(ParseErrorKind::UnexpectedCharacter('('), here);
                    };
                    if pending.is_some() {
                        return err(ParseErrorKind::DanglingBond, here);
                    }
                    branches.push((p, here));
                    self.pos += 1;
                }
                b')' => {
                    let Some((p, _)) = branches.pop() else {
                        return err(ParseErrorKind::UnbalancedParenthesis, here);
                    };
                    if pending.is_some() {
                        return err(ParseErrorKind::DanglingBond, here);
                    }
                    prev = Some(p);
                    self.pos += 1;
                }
                b'/' | b'\\' | b'@' | b'.' => {
                    return err(ParseErrorKind::UnsupportedToken((c as char).to_string()), here);
                }
                b'0'..=b'9' | b'%' => {
                    let digit = if c == b'%' {
                        let d = self.s.get(here + 1..here + 3).filter(|d| {
                            d.iter().all(u8::is_ascii_digit)
                        });
                        let Some(d) = d else {
                            return err(ParseErrorKind::UnexpectedCharacter('%'), here);
                        };
                        self.pos += 3;
                        ((d[0] - b'0') * 10 + (d[1] - b'0')) as u32
                    } else {
                        self.pos += 1;
                        (c - b'0') as u32
                    };
                    let Some(atom) = prev else {
                        return err(ParseErrorKind::UnexpectedCharacter(c as char), here);
                    };
                    let bond = pending.take().map(|(b, _)| b);
                    match open_rings.remove(&digit) {
                        None => {
                            open_rings.insert(
                                digit,
                                OpenRing {
                                    atom,
                                    bond,
                                    position: here,
                                },
                            );
                        }
                        Some(ring) => {
                            if ring.atom == atom || self.has_bond(ring.atom, atom) {
                                return err(ParseErrorKind::InvalidRingClosure, here);
                            }
                            let order = match (ring.bond, bond) {
                                (Some(a), Some(b)) if a != b => {
                                    return err(ParseErrorKind::RingBondMismatch, here)
                                }
                                (Some(a), _) | (None, Some(a)) => a,
                                (None, None) => self.default_order(ring.atom, atom),
                            };
                            self.bonds.push((ring.atom, atom, order));
                        }
                    }
                }
                _ if bond_symbol(c).is_some() => {
                    if pending.is_some() || prev.is_none() {
                        return err(ParseErrorKind::DanglingBond, here);
                    }
                    pending = Some((bond_symbol(c).unwrap(), here));
                    self.pos += 1;
                }
                b'[' | b'A'..=b'Z' | b'a'..=b'z' | b'*' => {
                    let atom = if c == b'[' {
                        self.parse_bracket()?
                    } else if c == b'*' {
                        return err(ParseErrorKind::UnsupportedElement("*".into()), here);
                    } else {
                        self.parse_organic()?
                    };
                    self.atoms.push(atom);
                    let idx = self.atoms.len() - 1;
                    if let Some(p) = prev {
                        let order = match pending.take() {
                            Some((b, _)) => b,
                            None => self.default_order(p, idx),
                        };
                        self.bonds.push((p, idx, order));
                    }
                    prev = Some(idx);
                }
                _ => {
                    return err(ParseErrorKind::UnexpectedCharacter(c as char), here);
                }
            }
        }

        if let Some((_, pos)) = pending {
            return err(ParseErrorKind::DanglingBond, pos);
        }
        if let Some(&(_, pos)) = branches.first() {
            return err(ParseErrorKind::UnbalancedParenthesis, pos);
        }
        if let Some((&digit, ring)) = open_rings.iter().next() {
            return err(ParseErrorKind::UnmatchedRingClosure(digit), ring.position);
        }
        Ok(())
    }
}

/// Hydrogens implied by the organic-subset valence rules, or an overflow.
fn implicit_hydrogens(atom: &ParsedAtom, used: u32) -> Result<u32, ParseError> {
    let overflow = |allowed| ParseError {
        kind: ParseErrorKind::ValenceOverflow {
            element: atom.element,
            used,
            allowed,
        },
        position: atom.position,
    };
    if let Some(h) = atom.bracket_h {
        let allowed = atom.element.max_valence(atom.charge);
        if (used + h) as i32 > allowed {
            return Err(overflow(allowed));
        }
        return Ok(h);
    }
    let allowed = atom.element.max_valence(0);
    let Some(&v) = atom.element.valences().iter().find(|&&v| v >= used) else {
        return Err(overflow(allowed));
    };
    // An aromatic atom gives one valence unit to the ring's pi system.
    let pi = u32::from(atom.aromatic);
    Ok((v - used).saturating_sub(pi))
}

/// Parses one SMILES string into a graph with every hydrogen explicit.
pub fn parse_smiles(text: &str) -> Result<MolecularGraph, ParseError> {
    if text.is_empty() {
        return err(ParseErrorKind::Empty, 0);
    }
    if let Some(pos) = text.chars().position(|c| !c.is_ascii()) {
        return err(ParseErrorKind::NonAscii, pos);
    }
    let mut p = Parser {
        s: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
    };
    p.run()?;
    if p.atoms.is_empty() {
        return err(ParseErrorKind::Empty, 0);
    }

    let mut used = vec![0u32; p.atoms.len()];
    for &(u, v, order) in &p.bonds {
        used[u] += order.valence();
        used[v] += order.valence();
    }
    let mut hydrogens = Vec::with_capacity(p.atoms.len());
    for (a, &u) in p.atoms.iter().zip(&used) {
        hydrogens.push(implicit_hydrogens(a, u)?);
    }

    let mut atoms: Vec<Atom> = p
        .atoms
        .iter()
        .map(|a| Atom {
            element: a.element,
            formal_charge: a.charge,
            aromatic: a.aromatic,
            index: 0,
        })
        .collect();
    let mut bonds: Vec<Bond> = p
        .bonds
        .iter()
        .map(|&(u, v, order)| Bond {
            endpoints: (u, v),
            order,
            in_ring: false,
            conjugated: false,
        })
        .collect();
    for (heavy, &h) in hydrogens.iter().enumerate() {
        for _ in 0..h {
            atoms.push(Atom {
                element: Element::H,
                formal_charge: 0,
                aromatic: false,
                index: 0,
            });
            bonds.push(Bond {
                endpoints: (heavy, atoms.len() - 1),
                order: BondOrder::Single,
                in_ring: false,
                conjugated: false,
            });
        }
    }
    MolecularGraph::new(atoms, bonds).map_err(|e| ParseError {
        kind: e.into(),
        position: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(s: &str) -> ParseErrorKind {
        parse_smiles(s).unwrap_err().kind
    }

    #[test]
    fn methane() {
        let g = parse_smiles("C").unwrap();
        assert_eq!((g.num_atoms(), g.num_bonds()), (5, 4));
    }

    #[test]
    fn vanillin_counts() {
        let g = parse_smiles("O=Cc1ccc(O)c(OC)c1").unwrap();
        assert_eq!((g.num_atoms(), g.num_bonds(), g.ring_count()), (19, 19, 1));
        let counts = g.element_counts();
        assert_eq!((counts["C"], counts["O"], counts["H"]), (8, 3, 8));
    }

    #[test]
    fn benzene_all_ring_bonds_aromatic() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!((g.num_atoms(), g.num_bonds()), (12, 12));
        for b in g.bonds() {
            assert_eq!(b.in_ring, b.order == BondOrder::Aromatic);
        }
        assert_eq!(g.bonds().iter().filter(|b| b.in_ring).count(), 6);
    }

    #[test]
    fn hydrogens_follow_heavy_atoms() {
        let g = parse_smiles("CO").unwrap();
        let elems: Vec<_> = g.atoms().iter().map(|a| a.element).collect();
        use Element::*;
        assert_eq!(elems, vec![C, O, H, H, H, H]);
        assert_eq!(g.bond_between(1, 5).unwrap().order, BondOrder::Single);
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_smiles("C[NH3+]").unwrap();
        assert_eq!(g.atom(1).formal_charge, 1);
        assert_eq!(g.hydrogen_count(1), 3);
        let nitro = parse_smiles("[O-][N+](=O)c1ccccc1").unwrap();
        assert_eq!(nitro.num_atoms(), 6 + 3 + 5);
        let pyrrole = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(pyrrole.num_atoms(), 10);
        assert_eq!(parse_smiles("[Cl-]").unwrap().num_atoms(), 1);
    }

    #[test]
    fn aromatic_heteroatoms_and_exocyclic_double_bonds() {
        assert_eq!(parse_smiles("c1ccncc1").unwrap().num_atoms(), 11);
        assert_eq!(parse_smiles("o1cccc1").unwrap().num_atoms(), 9);
        let caffeine = parse_smiles("Cn1cnc2c1c(=O)n(C)c(=O)n2C").unwrap();
        assert_eq!(caffeine.formula(), "C8H10N4O2");
        assert_eq!(caffeine.ring_count(), 2);
    }

    #[test]
    fn sulfur_and_phosphorus_valences() {
        // S picks the smallest valence covering its bonds: 2, then 4, then 6.
        assert_eq!(parse_smiles("CS").unwrap().formula(), "CH4S");
        assert_eq!(parse_smiles("CS(=O)C").unwrap().formula(), "C2H6OS");
        assert_eq!(parse_smiles("CS(=O)(=O)O").unwrap().formula(), "CH4O3S");
        assert_eq!(parse_smiles("P").unwrap().formula(), "H3P");
        assert_eq!(parse_smiles("OP(=O)(O)O").unwrap().formula(), "H3O4P");
    }

    #[test]
    fn ring_closures() {
        let g = parse_smiles("C1CCCCC1").unwrap();
        assert_eq!((g.num_atoms(), g.ring_count()), (18, 1));
        let g = parse_smiles("C%10CCCC%10").unwrap();
        assert_eq!(g.ring_count(), 1);
        assert_eq!(parse_smiles("C1CC=1").unwrap().bond_between(0, 2).unwrap().order, BondOrder::Double);
    }

    #[test]
    fn errors_name_position() {
        let e = parse_smiles("C(").unwrap_err();
        assert_eq!((e.kind, e.position), (ParseErrorKind::UnbalancedParenthesis, 1));
        let e = parse_smiles("CC)").unwrap_err();
        assert_eq!((e.kind, e.position), (ParseErrorKind::UnbalancedParenthesis, 2));
        let e = parse_smiles("CC1CC").unwrap_err();
        assert_eq!((e.kind, e.position), (ParseErrorKind::UnmatchedRingClosure(1), 2));
        let e = parse_smiles("C[Na]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnsupportedElement("Na".into()));
        assert_eq!(e.position, 2);
        let e = parse_smiles("CC(C)(C)(C)C").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::ValenceOverflow { element: Element::C, used: 5, .. }));
        assert_eq!(e.position, 1);
        assert!(matches!(kind("O=O=O"), ParseErrorKind::ValenceOverflow { .. }));
    }

    #[test]
    fn distinct_error_kinds() {
        assert_eq!(kind(""), ParseErrorKind::Empty);
        assert_eq!(kind("C/C=C/C"), ParseErrorKind::UnsupportedToken("/".into()));
        assert_eq!(kind("CC.O"), ParseErrorKind::UnsupportedToken(".".into()));
        assert_eq!(kind("[13CH4]"), ParseErrorKind::UnsupportedToken("isotope".into()));
        assert_eq!(kind("C[C@H](O)N"), ParseErrorKind::UnsupportedToken("@".into()));
        assert_eq!(kind("Xe"), ParseErrorKind::UnsupportedElement("Xe".into()));
        assert_eq!(kind("CC="), ParseErrorKind::DanglingBond);
        assert_eq!(kind("C1CC1C1"), ParseErrorKind::UnmatchedRingClosure(1));
        assert_eq!(kind("CCé"), ParseErrorKind::NonAscii);
        assert_eq!(kind("C11"), ParseErrorKind::InvalidRingClosure);
    }

    #[test]
    fn deterministic() {
        let a = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        let b = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        assert_eq!(a, b);
    }
}
