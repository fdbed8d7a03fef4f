//! Functional-group and aromatic-ring detection, graph partitioning into
//! groups, and the membership matrices that drive pooling.

pub mod rings;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{BondOrder, Element, MolecularGraph};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    #[serde(rename = "FG")]
    FunctionalGroup,
    AromaticRing,
    Component,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::FunctionalGroup => "FG",
            GroupKind::AromaticRing => "AromaticRing",
            GroupKind::Component => "Component",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub kind: GroupKind,
    /// Sorted atom ids.
    pub atoms: Vec<usize>,
}

impl Group {
    pub fn new(kind: GroupKind, atoms: impl IntoIterator<Item = usize>) -> Self {
        let atoms: BTreeSet<usize> = atoms.into_iter().collect();
        Group {
            kind,
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.atoms.binary_search(&atom).is_ok()
    }
}

/// Ordered groups of one molecule: FGs, then aromatic rings, then components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSet {
    groups: Vec<Group>,
}

impl GroupSet {
    pub fn new(groups: Vec<Group>) -> Self {
        GroupSet { groups }
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Total number of groups, M = I + J + K.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn kinds(&self) -> Vec<GroupKind> {
        self.groups.iter().map(|g| g.kind).collect()
    }

    fn count(&self, kind: GroupKind) -> usize {
        self.groups.iter().filter(|g| g.kind == kind).count()
    }

    /// (I, J, K): functional groups, aromatic rings, residual components.
    pub fn counts(&self) -> (usize, usize, usize) {
        (
            self.count(GroupKind::FunctionalGroup),
            self.count(GroupKind::AromaticRing),
            self.count(GroupKind::Component),
        )
    }

    /// Number of groups containing each atom.
    pub fn multiplicities(&self, n: usize) -> Vec<usize> {
        let mut m = vec![0; n];
        for g in &self.groups {
            for &a in &g.atoms {
                if a < n {
                    m[a] += 1;
                }
            }
        }
        m
    }

    /// Groups renumbered after an atom permutation (new atom `k` = old `perm[k]`),
    /// keeping group order.
    pub fn permuted(&self, perm: &[usize]) -> GroupSet {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        GroupSet {
            groups: self
                .groups
                .iter()
                .map(|g| Group::new(g.kind, g.atoms.iter().map(|&a| inverse[a])))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupingError {
    #[error("atom {0} is not covered by any group")]
    Uncovered(usize),
    #[error("group {group} references atom {atom} outside a {n}-atom graph")]
    AtomOutOfRange { group: usize, atom: usize, n: usize },
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("a membership matrix needs at least one group")]
    NoGroups,
}

/// Row-stochastic assignment of tier-t nodes to tier-(t+1) groups.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    pub matrix: Matrix,
    pub tier: usize,
}

impl MembershipMatrix {
    /// Checks row sums, `1/m` entries and non-empty columns.
    pub fn is_valid(&self, tol: f64) -> bool {
        let m = &self.matrix;
        let rows_ok = (0..m.rows()).all(|i| {
            let row = m.row(i);
            let members = row.iter().filter(|&&x| x != 0.0).count();
            members > 0
                && (row.iter().sum::<f64>() - 1.0).abs() <= tol
                && row
                    .iter()
                    .all(|&x| x == 0.0 || (x - 1.0 / members as f64).abs() <= tol)
        });
        rows_ok && m.col_sums().iter().all(|&c| c > 0.0)
    }
}

/// Smallest cycle basis of the molecule.
pub fn find_rings(g: &MolecularGraph) -> Vec<Vec<usize>> {
    g.rings().to_vec()
}

fn with_hydrogens(g: &MolecularGraph, atoms: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut out = atoms.clone();
    for &a in atoms {
        out.extend(g.neighbors(a).filter(|&v| g.atom(v).element == Element::H));
    }
    out
}

fn sorted_by_first(mut sets: Vec<BTreeSet<usize>>) -> Vec<Vec<usize>> {
    sets.sort_by_key(|s| s.first().copied());
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Basis rings whose every bond is aromatic, each with its hydrogens.
pub fn detect_aromatic_rings(g: &MolecularGraph) -> Vec<Vec<usize>> {
    let sets = g
        .rings()
        .iter()
        .filter(|ring| {
            (0..ring.len()).all(|k| {
                g.bond_between(ring[k], ring[(k + 1) % ring.len()])
                    .is_some_and(|b| b.order == BondOrder::Aromatic)
            })
        })
        .map(|ring| with_hydrogens(g, &ring.iter().copied().collect()))
        .collect();
    sorted_by_first(sets)
}

fn mark_functional_atoms(g: &MolecularGraph) -> Vec<bool> {
    let n = g.num_atoms();
    let mut marked = vec![false; n];
    for (i, atom) in g.atoms().iter().enumerate() {
        let e = atom.element;
        // non-aromatic heteroatoms
        if e.is_hetero() && !atom.aromatic {
            marked[i] = true;
        }
        if e != Element::C {
            continue;
        }
        // carbons in non-aromatic double or triple bonds
        if g
            .incident(i)
            .any(|(_, b)| matches!(b.order, BondOrder::Double | BondOrder::Triple))
        {
            marked[i] = true;
        }
        // acetal-like sp3 carbons: two or more single bonds to O, N or S
        let all_single = g.incident(i).all(|(_, b)| b.order == BondOrder::Single);
        let hetero_single = g
            .incident(i)
            .filter(|(v, b)| {
                b.order == BondOrder::Single
                    && matches!(g.atom(*v).element, Element::O | Element::N | Element::S)
            })
            .count();
        if !atom.aromatic && all_single && hetero_single >= 2 {
            marked[i] = true;
        }
    }
    // three-membered heterocycles
    for ring in g.rings() {
        if ring.len() == 3 && ring.iter().any(|&a| g.atom(a).element.is_hetero()) {
            for &a in ring {
                marked[a] = true;
            }
        }
    }
    marked
}

/// Functional groups from heteroatom and multiple-bond marking.
///
/// Marked atoms that are bonded to each other form one group. Each group
/// then takes the hydrogens on its atoms and any non-aromatic carbon whose
/// heavy neighbours all lie inside it (with that carbon's hydrogens).
pub fn identify_functional_groups(g: &MolecularGraph) -> Vec<Vec<usize>> {
    let marked = mark_functional_atoms(g);
    let n = g.num_atoms();
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for s in 0..n {
        if !marked[s] || seen[s] {
            continue;
        }
        let mut core = BTreeSet::new();
        let mut q = VecDeque::from([s]);
        seen[s] = true;
        while let Some(u) = q.pop_front() {
            core.insert(u);
            for v in g.neighbors(u) {
                if marked[v] && !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
        let terminal: Vec<usize> = (0..n)
            .filter(|&c| {
                let atom = g.atom(c);
                if atom.element != Element::C || atom.aromatic || marked[c] {
                    return false;
                }
                let mut heavy = g
                    .neighbors(c)
                    .filter(|&v| g.atom(v).element != Element::H)
                    .peekable();
                heavy.peek().is_some() && heavy.all(|v| core.contains(&v))
            })
            .collect();
        core.extend(terminal);
        groups.push(with_hydrogens(g, &core));
    }
    sorted_by_first(groups)
}

/// Splits a molecule into functional groups, aromatic rings and the
/// connected components left after removing both.
pub fn partition(g: &MolecularGraph) -> GroupSet {
    let fgs = identify_functional_groups(g);
    let rings = detect_aromatic_rings(g);
    let n = g.num_atoms();
    let mut covered = vec![false; n];
    for &a in fgs.iter().chain(&rings).flatten() {
        covered[a] = true;
    }
    let mut components = Vec::new();
    for s in 0..n {
        if covered[s] {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut q = VecDeque::from([s]);
        covered[s] = true;
        while let Some(u) = q.pop_front() {
            comp.insert(u);
            for v in g.neighbors(u) {
                if !covered[v] {
                    covered[v] = true;
                    q.push_back(v);
                }
            }
        }
        components.push(comp);
    }

    let mut groups: Vec<Group> = fgs
        .into_iter()
        .map(|a| Group::new(GroupKind::FunctionalGroup, a))
        .collect();
    groups.extend(rings.into_iter().map(|a| Group::new(GroupKind::AromaticRing, a)));
    groups.extend(
        sorted_by_first(components)
            .into_iter()
            .map(|a| Group::new(GroupKind::Component, a)),
    );
    GroupSet { groups }
}

/// Tier-1 membership: entry `(i, j) = 1/m_i` when atom i is in group j,
/// where `m_i` counts the groups containing atom i.
pub fn build_membership(gs: &GroupSet, n: usize) -> Result<MembershipMatrix, GroupingError> {
    if gs.is_empty() {
        return Err(GroupingError::NoGroups);
    }
    for (k, grp) in gs.groups().iter().enumerate() {
        if grp.atoms.is_empty() {
            return Err(GroupingError::EmptyGroup(k));
        }
        if let Some(&atom) = grp.atoms.iter().find(|&&a| a >= n) {
            return Err(GroupingError::AtomOutOfRange { group: k, atom, n });
        }
    }
    let mult = gs.multiplicities(n);
    if let Some(atom) = mult.iter().position(|&m| m == 0) {
        return Err(GroupingError::Uncovered(atom));
    }
    let mut m = Matrix::zeros(n, gs.len());
    for (j, grp) in gs.groups().iter().enumerate() {
        for &i in &grp.atoms {
            m[(i, j)] = 1.0 / mult[i] as f64;
        }
    }
    Ok(MembershipMatrix { matrix: m, tier: 1 })
}

/// Tier-2 membership: every group belongs to the single graph node.
pub fn graph_membership(groups: usize) -> Result<MembershipMatrix, GroupingError> {
    if groups == 0 {
        return Err(GroupingError::NoGroups);
    }
    Ok(MembershipMatrix {
        matrix: Matrix::ones(groups, 1),
        tier: 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConsistencyRule {
    /// Double, triple or aromatic bond split across groups.
    MultipleBond,
    Conjugated,
    SameRing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BondViolation {
    pub bond: (usize, usize),
    pub rule: ConsistencyRule,
}

/// Bonds whose endpoints share no group although bond order, conjugation or
/// a common ring says they should. One entry per (bond, rule); advisory.
pub fn check_bond_consistency(g: &MolecularGraph, gs: &GroupSet) -> Vec<BondViolation> {
    let mut out = Vec::new();
    for b in g.bonds() {
        let (u, v) = b.endpoints;
        if gs.groups().iter().any(|grp| grp.contains(u) && grp.contains(v)) {
            continue;
        }
        let bond = (u.min(v), u.max(v));
        if b.order.is_multiple_or_aromatic() {
            out.push(BondViolation {
                bond,
                rule: ConsistencyRule::MultipleBond,
            });
        }
        if b.conjugated {
            out.push(BondViolation {
                bond,
                rule: ConsistencyRule::Conjugated,
            });
        }
        if g.rings().iter().any(|r| r.contains(&u) && r.contains(&v)) {
            out.push(BondViolation {
                bond,
                rule: ConsistencyRule::SameRing,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    const VANILLIN: &str = "O=Cc1ccc(O)c(OC)c1";

    fn elements(g: &MolecularGraph, atoms: &[usize]) -> String {
        g.formula_of(atoms.iter().copied())
    }

    #[test]
    fn rings_of_simple_molecules() {
        assert!(find_rings(&parse_smiles("CCO").unwrap()).is_empty());
        let benzene = find_rings(&parse_smiles("c1ccccc1").unwrap());
        assert_eq!(benzene.len(), 1);
        assert_eq!(benzene[0].len(), 6);
        let naph = find_rings(&parse_smiles("c1ccc2ccccc2c1").unwrap());
        assert_eq!(naph.len(), 2);
        assert!(naph.iter().all(|r| r.len() == 6));
    }

    #[test]
    fn aromatic_ring_groups() {
        let benzene = parse_smiles("c1ccccc1").unwrap();
        let rings = detect_aromatic_rings(&benzene);
        assert_eq!(rings.len(), 1);
        assert_eq!(rings[0].len(), 12);
        assert!(detect_aromatic_rings(&parse_smiles("C1CCCCC1").unwrap()).is_empty());
        let v = parse_smiles(VANILLIN).unwrap();
        let rings = detect_aromatic_rings(&v);
        assert_eq!(rings.len(), 1);
        assert_eq!(elements(&v, &rings[0]), "C6H3");
    }

    #[test]
    fn vanillin_functional_groups() {
        let g = parse_smiles(VANILLIN).unwrap();
        let fgs = identify_functional_groups(&g);
        let formulas: Vec<String> = fgs.iter().map(|f| elements(&g, f)).collect();
        // carbonyl, hydroxyl, methoxy in order of their first atom
        assert_eq!(formulas, vec!["CHO", "HO", "CH3O"]);
    }

    #[test]
    fn ethane_and_ethanol_groups() {
        assert!(identify_functional_groups(&parse_smiles("CC").unwrap()).is_empty());
        let g = parse_smiles("CCO").unwrap();
        let fgs = identify_functional_groups(&g);
        assert_eq!(fgs.len(), 1);
        assert_eq!(elements(&g, &fgs[0]), "HO");
    }

    #[test]
    fn acetal_and_epoxide_marking() {
        // the central carbon of dimethoxymethane is marked, joining both oxygens
        let g = parse_smiles("COCOC").unwrap();
        let fgs = identify_functional_groups(&g);
        assert_eq!(fgs.len(), 1);
        assert_eq!(fgs[0].len(), g.num_atoms());
        let ep = parse_smiles("CC1CO1").unwrap();
        let fgs = identify_functional_groups(&ep);
        assert_eq!(fgs.len(), 1);
        assert!(fgs[0].contains(&1) && fgs[0].contains(&2) && fgs[0].contains(&3));
    }

    #[test]
    fn vanillin_partition() {
        let g = parse_smiles(VANILLIN).unwrap();
        let gs = partition(&g);
        assert_eq!(gs.counts(), (3, 1, 0));
        let sizes: Vec<usize> = gs.groups().iter().map(|x| x.atoms.len()).collect();
        assert_eq!(sizes, vec![3, 2, 5, 9]);
        assert_eq!(sizes.iter().sum::<usize>(), 19);
        assert!(gs.multiplicities(19).iter().all(|&m| m == 1));
    }

    #[test]
    fn methane_falls_back_to_single_component() {
        let g = parse_smiles("C").unwrap();
        let gs = partition(&g);
        assert_eq!(gs.kinds(), vec![GroupKind::Component]);
        assert_eq!(gs.groups()[0].atoms.len(), 5);
    }

    #[test]
    fn biphenyl_is_two_rings() {
        let gs = partition(&parse_smiles("c1ccccc1-c1ccccc1").unwrap());
        assert_eq!(gs.counts(), (0, 2, 0));
    }

    #[test]
    fn membership_matrices() {
        let g = parse_smiles(VANILLIN).unwrap();
        let m = build_membership(&partition(&g), g.num_atoms()).unwrap();
        assert_eq!(m.matrix.shape(), (19, 4));
        assert!(m.matrix.as_slice().iter().all(|&x| x == 0.0 || x == 1.0));
        assert!(m.is_valid(1e-12));

        let methane = parse_smiles("C").unwrap();
        let m = build_membership(&partition(&methane), 5).unwrap();
        assert_eq!(m.matrix, Matrix::ones(5, 1));

        let m2 = graph_membership(4).unwrap();
        assert_eq!(m2.matrix, Matrix::ones(4, 1));
        assert_eq!(m2.tier, 2);
        assert_eq!(graph_membership(1).unwrap().matrix, Matrix::ones(1, 1));
        assert!(graph_membership(0).is_err());
    }

    #[test]
    fn overlapping_membership_is_fractional() {
        // 2-pyridone: the carbonyl carbon is both FG-marked and an aromatic ring atom.
        let g = parse_smiles("O=c1cccc[nH]1").unwrap();
        let gs = partition(&g);
        assert_eq!(gs.counts(), (1, 1, 0));
        let m = build_membership(&gs, g.num_atoms()).unwrap();
        assert_eq!(m.matrix.row(1), &[0.5, 0.5]);
        assert!(m.is_valid(1e-12));
    }

    #[test]
    fn uncovered_atom_is_an_error() {
        let gs = GroupSet::new(vec![Group::new(GroupKind::Component, [0, 1])]);
        assert_eq!(build_membership(&gs, 3).unwrap_err(), GroupingError::Uncovered(2));
    }

    #[test]
    fn vanillin_has_no_multiple_bond_or_ring_violations() {
        let g = parse_smiles(VANILLIN).unwrap();
        let v = check_bond_consistency(&g, &partition(&g));
        assert!(v.iter().all(|x| x.rule == ConsistencyRule::Conjugated), "{v:?}");
        // the ring-CHO single bond joins two unsaturated atoms
        assert_eq!(v, vec![BondViolation { bond: (1, 2), rule: ConsistencyRule::Conjugated }]);
    }

    #[test]
    fn split_double_bond_is_flagged() {
        let g = parse_smiles("C=C").unwrap();
        let split = GroupSet::new(vec![
            Group::new(GroupKind::Component, [0, 2, 3]),
            Group::new(GroupKind::Component, [1, 4, 5]),
        ]);
        let v = check_bond_consistency(&g, &split);
        assert_eq!(v, vec![BondViolation { bond: (0, 1), rule: ConsistencyRule::MultipleBond }]);
    }

    #[test]
    fn single_bonds_are_unconstrained() {
        let g = parse_smiles("CC").unwrap();
        let split = GroupSet::new(vec![
            Group::new(GroupKind::Component, [0, 2, 3, 4]),
            Group::new(GroupKind::Component, [1, 5, 6, 7]),
        ]);
        assert!(check_bond_consistency(&g, &split).is_empty());
    }

    #[test]
    fn aliphatic_heterocycle_splits_its_ring() {
        // Only aromatic rings are kept whole; a ring oxygen is cut out as an FG.
        let g = parse_smiles("C1CCOC1").unwrap();
        let v = check_bond_consistency(&g, &partition(&g));
        assert_eq!(
            v.iter().filter(|x| x.rule == ConsistencyRule::SameRing).count(),
            2
        );
    }
}
