//! Constraint languages, instances, and assignments.
//!
//! A binary constraint language fixes a finite domain `0..d` and a set of
//! relations, each stored as its d x d characteristic 0/1 matrix. Instances
//! reference relations by index and are immutable after construction, so
//! they can be shared freely across threads.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum CspError {
    #[error("relation {id} over domain size {domain_size} has no satisfying pair")]
    EmptyRelation { id: usize, domain_size: usize },
    #[error("relation {id} is flagged symmetric but its matrix is not")]
    AsymmetricMatrix { id: usize },
    #[error("relation {id} domain size {got} does not match language domain size {expected}")]
    DomainMismatch { id: usize, got: usize, expected: usize },
    #[error("constraint {index} references variable {var} but the instance has {num_vars} variables")]
    VariableOutOfRange { index: usize, var: usize, num_vars: usize },
    #[error("constraint {index} is a self-loop on variable {var}")]
    SelfLoop { index: usize, var: usize },
    #[error("constraint {index} references unknown relation {rel}")]
    UnknownRelation { index: usize, rel: usize },
    #[error("assignment has length {got}, instance has {expected} variables")]
    AssignmentLength { got: usize, expected: usize },
    #[error("assignment value {value} at variable {var} is outside domain 0..{domain_size}")]
    ValueOutOfDomain { var: usize, value: usize, domain_size: usize },
}

/// A binary relation over `0..domain_size`, stored by characteristic matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    id: usize,
    domain_size: usize,
    /// Row-major d x d matrix; entry (i, j) is 1 iff the pair (i, j) is in the relation.
    matrix: Vec<u8>,
    symmetric: bool,
}

impl Relation {
    pub fn from_pairs(
        id: usize,
        domain_size: usize,
        pairs: &[(usize, usize)],
        symmetric: bool,
    ) -> Result<Self, CspError> {
        let mut matrix = vec![0u8; domain_size * domain_size];
        for &(a, b) in pairs {
            assert!(a < domain_size && b < domain_size, "pair outside domain");
            matrix[a * domain_size + b] = 1;
        }
        Relation::from_matrix(id, domain_size, matrix, symmetric)
    }

    pub fn from_matrix(
        id: usize,
        domain_size: usize,
        matrix: Vec<u8>,
        symmetric: bool,
    ) -> Result<Self, CspError> {
        assert_eq!(matrix.len(), domain_size * domain_size, "matrix size mismatch");
        if !matrix.iter().any(|&v| v != 0) {
            return Err(CspError::EmptyRelation { id, domain_size });
        }
        if symmetric {
            for i in 0..domain_size {
                for j in 0..i {
                    if matrix[i * domain_size + j] != matrix[j * domain_size + i] {
                        return Err(CspError::AsymmetricMatrix { id });
                    }
                }
            }
        }
        Ok(Relation {
            id,
            domain_size,
            matrix,
            symmetric,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    #[inline]
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.matrix[a * self.domain_size + b] != 0
    }

    /// Characteristic matrix entry as 0/1.
    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> u8 {
        self.matrix[a * self.domain_size + b]
    }

    pub fn matrix(&self) -> &[u8] {
        &self.matrix
    }

    /// The satisfying pairs, derived from the matrix in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let d = self.domain_size;
        (0..d * d)
            .filter(|i| self.matrix[*i] != 0)
            .map(|i| (i / d, i % d))
            .collect()
    }

    /// Probability that a pair drawn from (px, py) independently satisfies
    /// the relation: px^T A py with A the characteristic matrix.
    pub fn satisfaction_probability<S: Scalar>(&self, px: &[S], py: &[S]) -> S {
        debug_assert_eq!(px.len(), self.domain_size);
        debug_assert_eq!(py.len(), self.domain_size);
        let d = self.domain_size;
        let mut total = S::zero();
        for a in 0..d {
            if px[a] == S::zero() {
                continue;
            }
            let mut inner = S::zero();
            for b in 0..d {
                if self.matrix[a * d + b] != 0 {
                    inner += py[b];
                }
            }
            total += px[a] * inner;
        }
        total
    }
}

/// An ordered set of relations over one shared domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintLanguage {
    domain_size: usize,
    relations: Vec<Relation>,
}

impl ConstraintLanguage {
    pub fn new(domain_size: usize, relations: Vec<Relation>) -> Result<Self, CspError> {
        assert!(domain_size > 0, "domain size must be positive");
        for (i, rel) in relations.iter().enumerate() {
            if rel.domain_size != domain_size {
                return Err(CspError::DomainMismatch {
                    id: rel.id,
                    got: rel.domain_size,
                    expected: domain_size,
                });
            }
            assert_eq!(rel.id, i, "relation ids must be dense and in order");
        }
        Ok(ConstraintLanguage {
            domain_size,
            relations,
        })
    }

    /// Max-2-SAT: three clause relations over {0, 1}, indexed by how many
    /// literals are negated. R01 is the only asymmetric one.
    pub fn max_2sat() -> Arc<Self> {
        let relations = vec![
            Relation::from_pairs(REL_2SAT_BOTH_NEGATED, 2, &[(0, 0), (0, 1), (1, 0)], true).unwrap(),
            Relation::from_pairs(REL_2SAT_FIRST_NEGATED, 2, &[(0, 0), (0, 1), (1, 1)], false).unwrap(),
            Relation::from_pairs(REL_2SAT_NONE_NEGATED, 2, &[(0, 1), (1, 0), (1, 1)], true).unwrap(),
        ];
        Arc::new(ConstraintLanguage::new(2, relations).unwrap())
    }

    /// Max-Cut: a single inequality relation over {0, 1}.
    pub fn max_cut() -> Arc<Self> {
        Arc::new(
            ConstraintLanguage::new(
                2,
                vec![Relation::from_pairs(0, 2, &[(0, 1), (1, 0)], true).unwrap()],
            )
            .unwrap(),
        )
    }

    /// Graph coloring with `colors` colors: one inequality relation.
    pub fn coloring(colors: usize) -> Arc<Self> {
        assert!(colors >= 2, "coloring needs at least two colors");
        let pairs: Vec<(usize, usize)> = (0..colors)
            .flat_map(|i| (0..colors).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Arc::new(
            ConstraintLanguage::new(
                colors,
                vec![Relation::from_pairs(0, colors, &pairs, true).unwrap()],
            )
            .unwrap(),
        )
    }

    pub fn three_col() -> Arc<Self> {
        Self::coloring(3)
    }

    /// Max-IS: value 1 marks set membership; the relation forbids both
    /// endpoints of an edge being in the set.
    pub fn max_is() -> Arc<Self> {
        Arc::new(
            ConstraintLanguage::new(
                2,
                vec![Relation::from_pairs(0, 2, &[(0, 0), (0, 1), (1, 0)], true).unwrap()],
            )
            .unwrap(),
        )
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, id: usize) -> Option<&Relation> {
        self.relations.get(id)
    }
}

/// Relation index for 2-CNF clauses with both literals negated.
pub const REL_2SAT_BOTH_NEGATED: usize = 0;
/// Relation index for clauses with exactly the first literal negated.
pub const REL_2SAT_FIRST_NEGATED: usize = 1;
/// Relation index for clauses with no negated literals.
pub const REL_2SAT_NONE_NEGATED: usize = 2;

/// The problems with built-in constraint languages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Problem {
    Max2Sat,
    MaxCut,
    ThreeCol,
    MaxIs,
}

impl Problem {
    pub fn language(self) -> Arc<ConstraintLanguage> {
        match self {
            Problem::Max2Sat => ConstraintLanguage::max_2sat(),
            Problem::MaxCut => ConstraintLanguage::max_cut(),
            Problem::ThreeCol => ConstraintLanguage::three_col(),
            Problem::MaxIs => ConstraintLanguage::max_is(),
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Problem::Max2Sat => "max2sat",
            Problem::MaxCut => "maxcut",
            Problem::ThreeCol => "3col",
            Problem::MaxIs => "maxis",
        };
        f.write_str(name)
    }
}

impl FromStr for Problem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max2sat" => Ok(Problem::Max2Sat),
            "maxcut" => Ok(Problem::MaxCut),
            "3col" => Ok(Problem::ThreeCol),
            "maxis" => Ok(Problem::MaxIs),
            other => Err(format!("unknown problem '{other}'")),
        }
    }
}

/// One binary constraint: variables (u, v) related by `rel`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub u: usize,
    pub v: usize,
    pub rel: usize,
}

impl Constraint {
    pub fn new(u: usize, v: usize, rel: usize) -> Self {
        Constraint { u, v, rel }
    }
}

/// An immutable problem instance over a shared constraint language.
///
/// Duplicate constraints are allowed (benchmark files repeat edges) and each
/// counts separately; self-loops are rejected at construction.
#[derive(Clone, Debug)]
pub struct Instance {
    language: Arc<ConstraintLanguage>,
    num_vars: usize,
    constraints: Vec<Constraint>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.num_vars == other.num_vars
            && self.constraints == other.constraints
            && *self.language == *other.language
    }
}

impl Instance {
    pub fn new(
        language: Arc<ConstraintLanguage>,
        num_vars: usize,
        constraints: Vec<Constraint>,
    ) -> Result<Self, CspError> {
        for (index, c) in constraints.iter().enumerate() {
            if c.u >= num_vars {
                return Err(CspError::VariableOutOfRange { index, var: c.u, num_vars });
            }
            if c.v >= num_vars {
                return Err(CspError::VariableOutOfRange { index, var: c.v, num_vars });
            }
            if c.u == c.v {
                return Err(CspError::SelfLoop { index, var: c.u });
            }
            if c.rel >= language.relations().len() {
                return Err(CspError::UnknownRelation { index, rel: c.rel });
            }
        }
        Ok(Instance {
            language,
            num_vars,
            constraints,
        })
    }

    /// Graph instance: every edge becomes a constraint with relation 0.
    pub fn from_edges(
        language: Arc<ConstraintLanguage>,
        num_vars: usize,
        edges: &[(usize, usize)],
    ) -> Result<Self, CspError> {
        let constraints = edges.iter().map(|&(u, v)| Constraint::new(u, v, 0)).collect();
        Instance::new(language, num_vars, constraints)
    }

    pub fn language(&self) -> &Arc<ConstraintLanguage> {
        &self.language
    }

    pub fn domain_size(&self) -> usize {
        self.language.domain_size()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Number of constraints satisfied by a hard assignment.
    pub fn count_satisfied(&self, assignment: &HardAssignment) -> Result<usize, CspError> {
        if assignment.len() != self.num_vars {
            return Err(CspError::AssignmentLength {
                got: assignment.len(),
                expected: self.num_vars,
            });
        }
        let rels = self.language.relations();
        Ok(self
            .constraints
            .iter()
            .filter(|c| rels[c.rel].contains(assignment.value(c.u), assignment.value(c.v)))
            .count())
    }

    /// `copies` disjoint copies of this instance in one; copy i's variable v
    /// becomes v + i * num_vars.
    pub fn disjoint_union(&self, copies: usize) -> Instance {
        assert!(copies >= 1, "need at least one copy");
        let mut constraints = Vec::with_capacity(self.constraints.len() * copies);
        for i in 0..copies {
            let offset = i * self.num_vars;
            constraints.extend(
                self.constraints
                    .iter()
                    .map(|c| Constraint::new(c.u + offset, c.v + offset, c.rel)),
            );
        }
        Instance {
            language: Arc::clone(&self.language),
            num_vars: self.num_vars * copies,
            constraints,
        }
    }

    /// Disjoint union of distinct instances sharing one language. Returns the
    /// union plus each member's variable offset.
    pub fn union_many(instances: &[&Instance]) -> (Instance, Vec<usize>) {
        assert!(!instances.is_empty(), "union of zero instances");
        let language = Arc::clone(instances[0].language());
        let mut offsets = Vec::with_capacity(instances.len());
        let mut constraints = Vec::new();
        let mut num_vars = 0;
        for inst in instances {
            assert!(
                Arc::ptr_eq(&language, inst.language()) || *language == *inst.language().as_ref(),
                "instances must share a language"
            );
            offsets.push(num_vars);
            constraints.extend(
                inst.constraints
                    .iter()
                    .map(|c| Constraint::new(c.u + num_vars, c.v + num_vars, c.rel)),
            );
            num_vars += inst.num_vars;
        }
        (
            Instance {
                language,
                num_vars,
                constraints,
            },
            offsets,
        )
    }

    /// Undirected adjacency lists (neighbors may repeat if edges do).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_vars];
        for c in &self.constraints {
            adj[c.u].push(c.v);
            adj[c.v].push(c.u);
        }
        adj
    }
}

/// One domain value per variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardAssignment {
    values: Vec<usize>,
}

impl HardAssignment {
    pub fn new(values: Vec<usize>) -> Self {
        HardAssignment { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn value(&self, var: usize) -> usize {
        self.values[var]
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn validate(&self, inst: &Instance) -> Result<(), CspError> {
        if self.values.len() != inst.num_vars() {
            return Err(CspError::AssignmentLength {
                got: self.values.len(),
                expected: inst.num_vars(),
            });
        }
        let d = inst.domain_size();
        for (var, &value) in self.values.iter().enumerate() {
            if value >= d {
                return Err(CspError::ValueOutOfDomain {
                    var,
                    value,
                    domain_size: d,
                });
            }
        }
        Ok(())
    }
}

/// Per-variable probability rows over the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment<S> {
    num_vars: usize,
    domain_size: usize,
    /// Row-major n x d.
    probs: Vec<S>,
}

impl<S: Scalar> SoftAssignment<S> {
    pub fn new(num_vars: usize, domain_size: usize, probs: Vec<S>) -> Self {
        assert_eq!(probs.len(), num_vars * domain_size);
        SoftAssignment {
            num_vars,
            domain_size,
            probs,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    #[inline]
    pub fn row(&self, var: usize) -> &[S] {
        &self.probs[var * self.domain_size..(var + 1) * self.domain_size]
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    /// Rows must be stochastic: entries in [0,1], each row summing to 1.
    pub fn validate(&self, tol: S) -> bool {
        for var in 0..self.num_vars {
            let row = self.row(var);
            let mut sum = S::zero();
            for &p in row {
                if p < S::zero() || p > S::one() + tol {
                    return false;
                }
                sum += p;
            }
            if (sum - S::one()).abs() > tol {
                return false;
            }
        }
        true
    }

    /// Row-argmax; ties break toward the lower value.
    pub fn argmax(&self) -> HardAssignment {
        let mut values = Vec::with_capacity(self.num_vars);
        for var in 0..self.num_vars {
            let row = self.row(var);
            let mut best = 0;
            for (i, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = i;
                }
            }
            values.push(best);
        }
        HardAssignment::new(values)
    }

    /// The rows owned by variables `offset..offset + count`.
    pub fn slice_vars(&self, offset: usize, count: usize) -> SoftAssignment<S> {
        let d = self.domain_size;
        SoftAssignment {
            num_vars: count,
            domain_size: d,
            probs: self.probs[offset * d..(offset + count) * d].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(language: Arc<ConstraintLanguage>) -> Instance {
        Instance::from_edges(language, 3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn builtin_max_2sat_relations() {
        let lang = ConstraintLanguage::max_2sat();
        assert_eq!(lang.domain_size(), 2);
        assert_eq!(lang.relations().len(), 3);
        let r00 = &lang.relations()[REL_2SAT_BOTH_NEGATED];
        let r01 = &lang.relations()[REL_2SAT_FIRST_NEGATED];
        let r11 = &lang.relations()[REL_2SAT_NONE_NEGATED];
        assert_eq!(r00.matrix(), &[1, 1, 1, 0]);
        // rows [1,1],[0,1]
        assert_eq!(r01.matrix(), &[1, 1, 0, 1]);
        assert_eq!(r11.matrix(), &[0, 1, 1, 1]);
        assert!(r00.symmetric() && r11.symmetric());
        assert!(!r01.symmetric());
    }

    #[test]
    fn builtin_max_cut_relation() {
        let lang = ConstraintLanguage::max_cut();
        let rel = &lang.relations()[0];
        assert!(rel.symmetric());
        assert_eq!(rel.matrix(), &[0, 1, 1, 0]);
    }

    #[test]
    fn builtin_three_col_is_all_ones_minus_identity() {
        let lang = ConstraintLanguage::three_col();
        assert_eq!(lang.domain_size(), 3);
        let rel = &lang.relations()[0];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(rel.contains(i, j), i != j);
            }
        }
        assert!(rel.symmetric());
    }

    #[test]
    fn builtin_max_is_relation() {
        let lang = ConstraintLanguage::max_is();
        let rel = &lang.relations()[0];
        assert_eq!(rel.matrix(), &[1, 1, 1, 0]);
        assert!(rel.symmetric());
    }

    #[test]
    fn empty_relation_rejected() {
        assert!(matches!(
            Relation::from_pairs(0, 2, &[], true),
            Err(CspError::EmptyRelation { .. })
        ));
    }

    #[test]
    fn asymmetric_matrix_with_symmetric_flag_rejected() {
        assert!(matches!(
            Relation::from_pairs(0, 2, &[(0, 1)], true),
            Err(CspError::AsymmetricMatrix { .. })
        ));
    }

    #[test]
    fn count_satisfied_triangle_cut() {
        let inst = triangle(ConstraintLanguage::max_cut());
        let a = HardAssignment::new(vec![0, 1, 0]);
        assert_eq!(inst.count_satisfied(&a).unwrap(), 2);
    }

    #[test]
    fn count_satisfied_empty_constraints() {
        let inst = Instance::new(ConstraintLanguage::max_cut(), 4, vec![]).unwrap();
        let a = HardAssignment::new(vec![0, 1, 0, 1]);
        assert_eq!(inst.count_satisfied(&a).unwrap(), 0);
    }

    #[test]
    fn count_satisfied_length_mismatch() {
        let inst = triangle(ConstraintLanguage::max_cut());
        let a = HardAssignment::new(vec![0, 1]);
        assert!(matches!(
            inst.count_satisfied(&a),
            Err(CspError::AssignmentLength { .. })
        ));
    }

    #[test]
    fn count_satisfied_matches_bruteforce_optimum() {
        // Random 10-var Max-2-SAT instance; assert against exhaustive search.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let lang = ConstraintLanguage::max_2sat();
        let mut constraints = Vec::new();
        for _ in 0..25 {
            let u = rng.gen_range(0..10);
            let mut v = rng.gen_range(0..10);
            while v == u {
                v = rng.gen_range(0..10);
            }
            constraints.push(Constraint::new(u, v, rng.gen_range(0..3)));
        }
        let inst = Instance::new(lang, 10, constraints).unwrap();

        let mut best = 0;
        let mut best_assignment = None;
        for bits in 0..(1u32 << 10) {
            let values: Vec<usize> = (0..10).map(|i| ((bits >> i) & 1) as usize).collect();
            let a = HardAssignment::new(values);
            let sat = inst.count_satisfied(&a).unwrap();
            if sat > best {
                best = sat;
                best_assignment = Some(a);
            }
        }
        let witness = best_assignment.unwrap();
        assert_eq!(inst.count_satisfied(&witness).unwrap(), best);
        assert!(best <= inst.num_constraints());
        // Density of random 2-CNF makes a perfect assignment unlikely but not
        // impossible; only the oracle equality above is asserted.
    }

    #[test]
    fn satisfaction_probability_uniform_cut() {
        let lang = ConstraintLanguage::max_cut();
        let rel = &lang.relations()[0];
        let p = rel.satisfaction_probability::<f64>(&[0.5, 0.5], &[0.5, 0.5]);
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn satisfaction_probability_one_hot_cut() {
        let lang = ConstraintLanguage::max_cut();
        let rel = &lang.relations()[0];
        assert_eq!(rel.satisfaction_probability::<f64>(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(rel.satisfaction_probability::<f64>(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn satisfaction_probability_uniform_three_col() {
        // Independent oracle: sum the characteristic matrix entries / 9.
        let lang = ConstraintLanguage::three_col();
        let rel = &lang.relations()[0];
        let expected: f64 = rel.matrix().iter().map(|&v| v as f64).sum::<f64>() / 9.0;
        assert!((expected - 2.0 / 3.0).abs() < 1e-15);
        let third = 1.0 / 3.0;
        let p = rel.satisfaction_probability::<f64>(&[third; 3], &[third; 3]);
        assert!((p - expected).abs() < 1e-12);
    }

    #[test]
    fn one_hot_probability_equals_hard_satisfaction_all_languages() {
        for problem in [Problem::Max2Sat, Problem::MaxCut, Problem::ThreeCol, Problem::MaxIs] {
            let lang = problem.language();
            let d = lang.domain_size();
            for rel in lang.relations() {
                for a in 0..d {
                    for b in 0..d {
                        let mut pa = vec![0.0f64; d];
                        let mut pb = vec![0.0f64; d];
                        pa[a] = 1.0;
                        pb[b] = 1.0;
                        let p = rel.satisfaction_probability(&pa, &pb);
                        let hard = if rel.contains(a, b) { 1.0 } else { 0.0 };
                        assert_eq!(p, hard, "{problem} rel {} pair ({a},{b})", rel.id());
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_relation_probability_commutes() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for problem in [Problem::MaxCut, Problem::ThreeCol, Problem::MaxIs] {
            let lang = problem.language();
            let d = lang.domain_size();
            for rel in lang.relations().iter().filter(|r| r.symmetric()) {
                for _ in 0..20 {
                    let px = random_stochastic_row(&mut rng, d);
                    let py = random_stochastic_row(&mut rng, d);
                    let ab = rel.satisfaction_probability::<f64>(&px, &py);
                    let ba = rel.satisfaction_probability::<f64>(&py, &px);
                    assert!((ab - ba).abs() < 1e-12);
                }
            }
        }
    }

    fn random_stochastic_row(rng: &mut impl rand::Rng, d: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }

    #[test]
    fn disjoint_union_counts() {
        let inst = triangle(ConstraintLanguage::max_cut());
        let doubled = inst.disjoint_union(2);
        assert_eq!(doubled.num_vars(), 6);
        assert_eq!(doubled.num_constraints(), 6);
        assert_eq!(doubled.constraints()[3], Constraint::new(3, 4, 0));
    }

    #[test]
    fn disjoint_union_single_copy_is_identity() {
        let inst = triangle(ConstraintLanguage::three_col());
        assert_eq!(inst.disjoint_union(1), inst);
    }

    #[test]
    fn disjoint_union_components() {
        // Union-find over the 64-copy union: expect 64 triangle components.
        let inst = triangle(ConstraintLanguage::max_cut());
        let unioned = inst.disjoint_union(64);
        let mut parent: Vec<usize> = (0..unioned.num_vars()).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for c in unioned.constraints() {
            let (ru, rv) = (find(&mut parent, c.u), find(&mut parent, c.v));
            if ru != rv {
                parent[ru] = rv;
            }
        }
        let mut sizes = std::collections::HashMap::new();
        for v in 0..unioned.num_vars() {
            *sizes.entry(find(&mut parent, v)).or_insert(0usize) += 1;
        }
        assert_eq!(sizes.len(), 64);
        assert!(sizes.values().all(|&s| s == 3));
    }

    #[test]
    fn disjoint_union_block_replicated_assignment() {
        let inst = triangle(ConstraintLanguage::max_cut());
        let a = HardAssignment::new(vec![0, 1, 0]);
        let base = inst.count_satisfied(&a).unwrap();
        for k in [1usize, 3, 8] {
            let unioned = inst.disjoint_union(k);
            let replicated =
                HardAssignment::new(a.values().iter().cycle().take(3 * k).copied().collect());
            assert_eq!(unioned.count_satisfied(&replicated).unwrap(), k * base);
        }
    }

    #[test]
    fn self_loop_rejected() {
        let lang = ConstraintLanguage::max_cut();
        assert!(matches!(
            Instance::from_edges(lang, 3, &[(1, 1)]),
            Err(CspError::SelfLoop { .. })
        ));
    }

    #[test]
    fn duplicate_constraints_each_count() {
        let lang = ConstraintLanguage::max_cut();
        let inst = Instance::from_edges(lang, 2, &[(0, 1), (0, 1)]).unwrap();
        let a = HardAssignment::new(vec![0, 1]);
        assert_eq!(inst.count_satisfied(&a).unwrap(), 2);
    }

    #[test]
    fn soft_assignment_argmax_and_slices() {
        let soft = SoftAssignment::new(2, 3, vec![0.2, 0.5, 0.3, 0.7, 0.2, 0.1]);
        assert!(soft.validate(1e-9));
        assert_eq!(soft.argmax().values(), &[1, 0]);
        let tail = soft.slice_vars(1, 1);
        assert_eq!(tail.row(0), &[0.7, 0.2, 0.1]);
    }
}
