//! Molecular graphs with explicit hydrogens, a SMILES-subset parser and
//! node/edge featurization.

mod smiles;

pub use smiles::{parse_smiles, ParseError, ParseErrorKind};

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::grouping::rings::smallest_cycle_basis;
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
}

impl Element {
    /// Column order of the element one-hot block.
    pub const ALL: [Element; 11] = [
        Element::H,
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::H => "H",
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.symbol() == s)
    }

    pub fn one_hot_index(self) -> usize {
        Element::ALL.iter().position(|&e| e == self).unwrap()
    }

    /// Standard valences of the neutral element, ascending.
    pub fn valences(self) -> &'static [u32] {
        match self {
            Element::H => &[1],
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
        }
    }

    /// Largest bond-order sum (including hydrogens) allowed at `charge`.
    pub fn max_valence(self, charge: i32) -> i32 {
        let base = *self.valences().last().unwrap() as i32;
        match self {
            Element::C => base - charge.abs(),
            Element::B => base - charge,
            Element::H => base - charge.abs(),
            _ => base + charge,
        }
    }

    pub fn is_hetero(self) -> bool {
        !matches!(self, Element::C | Element::H)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i32,
    pub aromatic: bool,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub const ALL: [BondOrder; 4] = [
        BondOrder::Single,
        BondOrder::Double,
        BondOrder::Triple,
        BondOrder::Aromatic,
    ];

    /// Valence consumed at each endpoint; an aromatic bond counts as 1.
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn is_multiple_or_aromatic(self) -> bool {
        !matches!(self, BondOrder::Single)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bond {
    pub endpoints: (usize, usize),
    pub order: BondOrder,
    pub in_ring: bool,
    pub conjugated: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.endpoints.0 == atom {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

/// Per-bond features: order one-hot, conjugation and ring membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeFeatures {
    pub order: [bool; 4],
    pub conjugated: bool,
    pub same_ring: bool,
}

impl EdgeFeatures {
    pub fn to_vec(self) -> Vec<f64> {
        let mut v: Vec<f64> = self.order.iter().map(|&b| b as u8 as f64).collect();
        v.push(self.conjugated as u8 as f64);
        v.push(self.same_ring as u8 as f64);
        v
    }
}

/// Width of the node feature matrix.
pub const NODE_FEATURE_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("bond {bond} joins atom {atom} to itself")]
    SelfLoop { bond: usize, atom: usize },
    #[error("bond {bond} references atom {atom}, but the graph has {n} atoms")]
    BadEndpoint { bond: usize, atom: usize, n: usize },
    #[error("atoms {0} and {1} are joined by more than one bond")]
    DuplicateBond(usize, usize),
    #[error("graph is not connected (atom {0} unreachable from atom 0)")]
    Disconnected(usize),
    #[error("graph has no atoms")]
    Empty,
}

/// An immutable molecule: atoms, bonds, perceived rings and derived matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// `(neighbor, bond index)` per atom, sorted by neighbor.
    neighbors: Vec<Vec<(usize, usize)>>,
    rings: Vec<Vec<usize>>,
    adjacency: Matrix,
    node_features: Matrix,
}

impl MolecularGraph {
    /// Validates the topology, perceives rings and derives flags and features.
    ///
    /// Aromatic bonds that end up outside every ring are demoted to single.
    /// `in_ring` and `conjugated` flags on the input bonds are recomputed.
    pub fn new(atoms: Vec<Atom>, mut bonds: Vec<Bond>) -> Result<Self, GraphError> {
        let n = atoms.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut neighbors = vec![Vec::new(); n];
        for (k, b) in bonds.iter().enumerate() {
            let (u, v) = b.endpoints;
            for a in [u, v] {
                if a >= n {
                    return Err(GraphError::BadEndpoint { bond: k, atom: a, n });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop { bond: k, atom: u });
            }
            if neighbors[u].iter().any(|&(w, _)| w == v) {
                return Err(GraphError::DuplicateBond(u.min(v), u.max(v)));
            }
            neighbors[u].push((v, k));
            neighbors[v].push((u, k));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let mut atoms = atoms;
        for (i, a) in atoms.iter_mut().enumerate() {
            a.index = i;
        }

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(GraphError::Disconnected(i));
        }

        let edges: Vec<(usize, usize)> = bonds.iter().map(|b| b.endpoints).collect();
        let rings = smallest_cycle_basis(n, &edges);
        let mut ring_bond = vec![false; bonds.len()];
        for ring in &rings {
            for w in 0..ring.len() {
                let (u, v) = (ring[w], ring[(w + 1) % ring.len()]);
                let k = neighbors[u].iter().find(|&&(x, _)| x == v).unwrap().1;
                ring_bond[k] = true;
            }
        }
        for (b, &r) in bonds.iter_mut().zip(&ring_bond) {
            b.in_ring = r;
            if !r && b.order == BondOrder::Aromatic {
                b.order = BondOrder::Single;
            }
        }

        let unsaturated: Vec<bool> = (0..n)
            .map(|i| {
                neighbors[i]
                    .iter()
                    .any(|&(_, k)| bonds[k].order.is_multiple_or_aromatic())
            })
            .collect();
        let conj_single: Vec<bool> = bonds
            .iter()
            .map(|b| {
                b.order == BondOrder::Single && unsaturated[b.endpoints.0] && unsaturated[b.endpoints.1]
            })
            .collect();
        for k in 0..bonds.len() {
            let b = &bonds[k];
            let conj = match b.order {
                BondOrder::Aromatic => true,
                BondOrder::Single => conj_single[k],
                BondOrder::Double | BondOrder::Triple => [b.endpoints.0, b.endpoints.1]
                    .iter()
                    .any(|&a| neighbors[a].iter().any(|&(_, j)| conj_single[j])),
            };
            bonds[k].conjugated = conj;
        }

        let mut adjacency = Matrix::zeros(n, n);
        for b in &bonds {
            let (u, v) = b.endpoints;
            adjacency[(u, v)] = 1.0;
            adjacency[(v, u)] = 1.0;
        }

        let mut g = MolecularGraph {
            atoms,
            bonds,
            neighbors,
            rings,
            adjacency,
            node_features: Matrix::zeros(0, 0),
        };
        g.node_features = compute_node_features(&g);
        Ok(g)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    /// Number of atoms (N).
    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Number of bonds (U).
    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// Independent ring count `U - N + 1`.
    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    /// Smallest cycle basis, each ring an ordered atom cycle.
    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    /// Symmetric 0/1 adjacency with zero diagonal.
    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    /// N x 16 node feature matrix.
    pub fn node_features(&self) -> &Matrix {
        &self.node_features
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i].iter().map(|&(v, _)| v)
    }

    /// `(neighbor, bond)` pairs of atom `i`.
    pub fn incident(&self, i: usize) -> impl Iterator<Item = (usize, &Bond)> + '_ {
        self.neighbors[i].iter().map(|&(v, k)| (v, &self.bonds[k]))
    }

    pub fn bond_between(&self, u: usize, v: usize) -> Option<&Bond> {
        self.neighbors[u]
            .iter()
            .find(|&&(w, _)| w == v)
            .map(|&(_, k)| &self.bonds[k])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn heavy_degree(&self, i: usize) -> usize {
        self.neighbors(i)
            .filter(|&v| self.atoms[v].element != Element::H)
            .count()
    }

    pub fn hydrogen_count(&self, i: usize) -> usize {
        self.neighbors(i)
            .filter(|&v| self.atoms[v].element == Element::H)
            .count()
    }

    pub fn is_ring_atom(&self, i: usize) -> bool {
        self.rings.iter().any(|r| r.contains(&i))
    }

    /// Element counts in Hill order (C, H, then alphabetical).
    pub fn element_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.atoms {
            *counts.entry(a.element.symbol().to_string()).or_insert(0) += 1;
        }
        counts
    }

    /// Hill-order formula of the given atoms, e.g. `C6H3` or `CH3O`.
    pub fn formula_of(&self, atoms: impl IntoIterator<Item = usize>) -> String {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for i in atoms {
            *counts.entry(self.atoms[i].element.symbol()).or_insert(0) += 1;
        }
        hill_formula(&counts)
    }

    pub fn formula(&self) -> String {
        self.formula_of(0..self.num_atoms())
    }

    /// The same molecule with atoms renumbered: new atom `k` is old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<MolecularGraph, GraphError> {
        assert_eq!(perm.len(), self.num_atoms(), "permutation length");
        let mut inverse = vec![usize::MAX; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        assert!(inverse.iter().all(|&i| i != usize::MAX), "not a permutation");
        let atoms = perm.iter().map(|&old| self.atoms[old].clone()).collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                endpoints: (inverse[b.endpoints.0], inverse[b.endpoints.1]),
                ..b.clone()
            })
            .collect();
        MolecularGraph::new(atoms, bonds)
    }
}

fn hill_formula(counts: &BTreeMap<&str, usize>) -> String {
    let mut out = String::new();
    let mut push = |sym: &str, n: usize| {
        out.push_str(sym);
        if n > 1 {
            out.push_str(&n.to_string());
        }
    };
    let has_carbon = counts.contains_key("C");
    if has_carbon {
        push("C", counts["C"]);
        if let Some(&h) = counts.get("H") {
            push("H", h);
        }
    }
    for (&sym, &n) in counts {
        if has_carbon && (sym == "C" || sym == "H") {
            continue;
        }
        push(sym, n);
    }
    out
}

fn compute_node_features(g: &MolecularGraph) -> Matrix {
    let n = g.num_atoms();
    let mut f = Matrix::zeros(n, NODE_FEATURE_DIM);
    for (i, atom) in g.atoms.iter().enumerate() {
        f[(i, atom.element.one_hot_index())] = 1.0;
        f[(i, 11)] = atom.aromatic as u8 as f64;
        f[(i, 12)] = atom.formal_charge as f64;
        f[(i, 13)] = g.heavy_degree(i) as f64;
        f[(i, 14)] = g.hydrogen_count(i) as f64;
        f[(i, 15)] = g.is_ring_atom(i) as u8 as f64;
    }
    f
}

/// Node feature matrix: element one-hot (11), aromatic, formal charge,
/// heavy-atom degree, attached hydrogens, in-ring flag.
pub fn featurize_nodes(g: &MolecularGraph) -> Matrix {
    g.node_features.clone()
}

/// Edge features in bond order.
pub fn featurize_edges(g: &MolecularGraph) -> Vec<EdgeFeatures> {
    g.bonds
        .iter()
        .map(|b| {
            let mut order = [false; 4];
            order[BondOrder::ALL.iter().position(|&o| o == b.order).unwrap()] = true;
            EdgeFeatures {
                order,
                conjugated: b.conjugated,
                same_ring: b.in_ring,
            }
        })
        .collect()
}

/// One record of a molecule input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoleculeRecord {
    /// 1-based line number in the source text.
    pub line: usize,
    pub smiles: String,
    pub name: String,
}

/// Splits molecule-file text into records (`SMILES [name]` per line).
/// Blank lines and `#` comments are skipped; unnamed records get `mol<line>`.
pub fn read_records(text: &str) -> Vec<MoleculeRecord> {
    text.lines()
        .enumerate()
        .filter_map(|(k, line)| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            let mut parts = line.splitn(2, char::is_whitespace);
            let smiles = parts.next()?.to_string();
            let name = parts
                .next()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map_or_else(|| format!("mol{}", k + 1), str::to_string);
            Some(MoleculeRecord {
                line: k + 1,
                smiles,
                name,
            })
        })
        .collect()
}
