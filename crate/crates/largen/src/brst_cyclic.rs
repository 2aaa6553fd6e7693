//! Cyclic algebra specs and the BRST sector they generate.
//!
//! A finite-dimensional graded associative algebra with an invariant trace
//! pairing of degree 2 feeds the matrix model: one matrix field per basis
//! element, placed in ghost degree (algebra degree - 1), with two-point
//! function the inverse of the trace pairing. The cubic current J built from
//! the structure constants has J_(0) = Q, the BRST differential. This module
//! owns the spec data model (JSON/TOML), the construction of the pairing
//! table and of J, nilpotence sweeps, truncated cohomology over Z[N], the
//! cyclic cochain dictionary with the Hochschild differential, and the
//! small-algebra verification table for the two-parameter main example.

use crate::ope_engine::{factorial, mode_product, singular_ope, OPEResult};
use crate::operator_algebra::{
    enumerate_basis, enumerate_trace_words, multitrace_from_letters, render_multitrace,
    render_operator, AlgebraError, FieldSymbol, Letter, MultiTrace, OperatorSum, PairingTable,
};
use crate::scalars::{GradedCoefficient, PolyN};
use num::{BigRational, One, Zero};
use serde::Deserialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum BrstError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid algebra spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("coefficient outside Q[N]: {0}")]
    Scalar(String),
    #[error("cochain arity {0} exceeds the declared bound {1}")]
    ArityOverflow(usize, usize),
    #[error("Q is not square zero for this spec: {0}")]
    NotNilpotent(String),
    #[error("this operation is only defined for the two-parameter main example")]
    RequiresMainExample,
}

impl BrstError {
    /// Errors that are refusals of an out-of-scope request rather than bad
    /// input data. The CLI maps these to their own exit code.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            BrstError::ArityOverflow(..)
                | BrstError::NotNilpotent(..)
                | BrstError::RequiresMainExample
        )
    }
}

/// One basis element of the underlying algebra. `field` names the matrix
/// field attached to it in the surface syntax.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BasisElement {
    pub name: String,
    pub degree: i32,
    pub field: String,
}

/// A finite-dimensional graded algebra with unit, invariant trace, and an
/// optional cubic higher product kept for forward compatibility. Products
/// are stored densely: `m2[i][j]` is the coefficient vector of e_i e_j.
#[derive(Clone, PartialEq, Debug)]
pub struct CyclicAlgebraSpec {
    name: String,
    basis: Vec<BasisElement>,
    unit: usize,
    m2: Vec<Vec<Vec<BigRational>>>,
    m3: Vec<(usize, usize, usize, Vec<BigRational>)>,
    trace: Vec<BigRational>,
}

#[derive(Deserialize)]
struct RawSpec {
    #[serde(default)]
    name: Option<String>,
    basis: Vec<RawBasis>,
    unit: RawIndex,
    #[serde(default)]
    m2: Vec<(usize, usize, Vec<RawRational>)>,
    #[serde(default)]
    m3: Vec<(usize, usize, usize, Vec<RawRational>)>,
    trace: Vec<RawRational>,
}

#[derive(Deserialize)]
struct RawBasis {
    name: String,
    degree: i32,
    #[serde(default)]
    field: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawIndex {
    Index(usize),
    Name(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawRational {
    Int(i64),
    Str(String),
}

impl RawRational {
    fn to_rational(&self) -> Result<BigRational, BrstError> {
        match self {
            RawRational::Int(k) => Ok(BigRational::from_integer((*k).into())),
            RawRational::Str(s) => BigRational::from_str(s.trim())
                .map_err(|e| BrstError::Invalid(format!("bad rational {:?}: {}", s, e))),
        }
    }
}

const RESERVED_NAMES: &[&str] = &["N", "hbar", "lambda", "d", "Tr"];

impl CyclicAlgebraSpec {
    fn from_raw(raw: RawSpec) -> Result<Self, BrstError> {
        let dim = raw.basis.len();
        if dim == 0 {
            return Err(BrstError::Invalid("empty basis".into()));
        }
        // the structure tables are stored dense, dim^3 entries
        if dim > 64 {
            return Err(BrstError::Invalid(format!(
                "basis dimension {} exceeds the supported bound 64",
                dim
            )));
        }
        let basis: Vec<BasisElement> = raw
            .basis
            .into_iter()
            .enumerate()
            .map(|(i, b)| BasisElement {
                field: b.field.unwrap_or_else(|| format!("phi{}", i)),
                name: b.name,
                degree: b.degree,
            })
            .collect();
        let unit = match raw.unit {
            RawIndex::Index(i) => i,
            RawIndex::Name(n) => basis
                .iter()
                .position(|b| b.name == n)
                .ok_or_else(|| BrstError::Invalid(format!("unknown unit {:?}", n)))?,
        };
        if unit >= dim {
            return Err(BrstError::Invalid(format!("unit index {} out of range", unit)));
        }
        let zero_row = vec![BigRational::zero(); dim];
        let mut m2 = vec![vec![zero_row; dim]; dim];
        for (i, j, coeffs) in raw.m2 {
            if i >= dim || j >= dim || coeffs.len() != dim {
                return Err(BrstError::Invalid(format!("bad m2 entry at ({}, {})", i, j)));
            }
            for (k, c) in coeffs.iter().enumerate() {
                m2[i][j][k] = c.to_rational()?;
            }
        }
        let mut m3 = Vec::new();
        for (i, j, k, coeffs) in raw.m3 {
            if i >= dim || j >= dim || k >= dim || coeffs.len() != dim {
                return Err(BrstError::Invalid("bad m3 entry".into()));
            }
            let mut v = Vec::with_capacity(dim);
            for c in &coeffs {
                v.push(c.to_rational()?);
            }
            m3.push((i, j, k, v));
        }
        if raw.trace.len() != dim {
            return Err(BrstError::Invalid("trace vector has wrong length".into()));
        }
        let mut trace = Vec::with_capacity(dim);
        for c in &raw.trace {
            trace.push(c.to_rational()?);
        }
        let spec = CyclicAlgebraSpec {
            name: raw.name.unwrap_or_default(),
            basis,
            unit,
            m2,
            m3,
            trace,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_str(src: &str) -> Result<Self, BrstError> {
        Self::from_raw(serde_json::from_str(src)?)
    }

    pub fn from_toml_str(src: &str) -> Result<Self, BrstError> {
        Self::from_raw(toml::from_str(src)?)
    }

    /// Load a spec file, picking the format from the extension and falling
    /// back to trying both.
    pub fn from_path(path: &Path) -> Result<Self, BrstError> {
        let src = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&src),
            Some("toml") => Self::from_toml_str(&src),
            _ => Self::from_json_str(&src).or_else(|_| Self::from_toml_str(&src)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BasisElement] {
        &self.basis
    }

    pub fn unit_index(&self) -> usize {
        self.unit
    }

    pub fn degree(&self, i: usize) -> i32 {
        self.basis[i].degree
    }

    fn degree_parity(&self, i: usize) -> u8 {
        self.basis[i].degree.rem_euclid(2) as u8
    }

    pub fn product(&self, i: usize, j: usize) -> &[BigRational] {
        &self.m2[i][j]
    }

    /// Product of two coefficient vectors.
    pub fn mul_vec(&self, a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
        let dim = self.dim();
        let mut out = vec![BigRational::zero(); dim];
        for i in 0..dim {
            if a[i].is_zero() {
                continue;
            }
            for j in 0..dim {
                if b[j].is_zero() {
                    continue;
                }
                let c = &a[i] * &b[j];
                for k in 0..dim {
                    if !self.m2[i][j][k].is_zero() {
                        out[k] += &c * &self.m2[i][j][k];
                    }
                }
            }
        }
        out
    }

    pub fn trace_vec(&self, a: &[BigRational]) -> BigRational {
        a.iter().zip(&self.trace).map(|(x, t)| x * t).sum()
    }

    /// The trace pairing P[i][j] = tr(e_i e_j).
    pub fn pairing_matrix(&self) -> Vec<Vec<BigRational>> {
        let dim = self.dim();
        let mut p = vec![vec![BigRational::zero(); dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                p[i][j] = self.trace_vec(&self.m2[i][j]);
            }
        }
        p
    }

    /// Structural checks: unit laws, grading of the product, associativity
    /// (when no higher products are declared), cyclic invariance of the
    /// trace, and the degree-2 support of the pairing. Nondegeneracy is
    /// checked when the pairing is inverted.
    pub fn validate(&self) -> Result<(), BrstError> {
        let dim = self.dim();
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.basis {
            let ok = !b.field.is_empty()
                && b.field.chars().next().unwrap().is_ascii_alphabetic()
                && b.field.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && !RESERVED_NAMES.contains(&b.field.as_str());
            if !ok {
                return Err(BrstError::Invalid(format!("bad field name {:?}", b.field)));
            }
            if !seen.insert(&b.field) {
                return Err(BrstError::Invalid(format!("duplicate field name {:?}", b.field)));
            }
        }
        if self.degree(self.unit) != 0 {
            return Err(BrstError::Invalid("unit must sit in degree 0".into()));
        }
        let e = |i: usize| -> Vec<BigRational> {
            let mut v = vec![BigRational::zero(); dim];
            v[i] = BigRational::one();
            v
        };
        for i in 0..dim {
            if self.m2[self.unit][i] != e(i) || self.m2[i][self.unit] != e(i) {
                return Err(BrstError::Invalid(format!(
                    "unit law fails on {}",
                    self.basis[i].name
                )));
            }
            for j in 0..dim {
                for k in 0..dim {
                    if !self.m2[i][j][k].is_zero()
                        && self.degree(k) != self.degree(i) + self.degree(j)
                    {
                        return Err(BrstError::Invalid(format!(
                            "product {} {} is not degree homogeneous",
                            self.basis[i].name, self.basis[j].name
                        )));
                    }
                }
            }
        }
        if self.m3.is_empty() {
            for i in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        let lhs = self.mul_vec(&self.m2[i][j], &e(k));
                        let rhs = self.mul_vec(&e(i), &self.m2[j][k]);
                        if lhs != rhs {
                            return Err(BrstError::Invalid(format!(
                                "product is not associative on ({}, {}, {})",
                                self.basis[i].name, self.basis[j].name, self.basis[k].name
                            )));
                        }
                    }
                }
            }
        }
        // tr((ab)c) = (-1)^{|a|(|b|+|c|)} tr((bc)a)
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let lhs = self.trace_vec(&self.mul_vec(&self.m2[i][j], &e(k)));
                    let mut rhs = self.trace_vec(&self.mul_vec(&self.m2[j][k], &e(i)));
                    if self.degree_parity(i) == 1
                        && (self.degree_parity(j) + self.degree_parity(k)) % 2 == 1
                    {
                        rhs = -rhs;
                    }
                    if lhs != rhs {
                        return Err(BrstError::Invalid(format!(
                            "trace is not cyclic on ({}, {}, {})",
                            self.basis[i].name, self.basis[j].name, self.basis[k].name
                        )));
                    }
                }
            }
        }
        let p = self.pairing_matrix();
        for i in 0..dim {
            for j in 0..dim {
                if !p[i][j].is_zero() && self.degree(i) + self.degree(j) != 2 {
                    return Err(BrstError::Invalid(format!(
                        "pairing couples {} and {} outside total degree 2",
                        self.basis[i].name, self.basis[j].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Invert the transposed trace pairing into the two-point table. Fields
    /// inherit the basis order; ghost degree is algebra degree minus one.
    pub fn pairing_table(&self) -> Result<PairingTable, BrstError> {
        let p = self.pairing_matrix();
        let inv = match invert(&p) {
            Ok(inv) => inv,
            Err(kernel) => {
                let names = self
                    .basis
                    .iter()
                    .zip(&kernel)
                    .filter(|(_, c)| !c.is_zero())
                    .map(|(b, _)| b.name.clone())
                    .collect();
                return Err(AlgebraError::DegeneratePairing(names).into());
            }
        };
        // omega = (P^T)^{-1} = (P^{-1})^T
        let dim = self.dim();
        let mut omega = vec![vec![BigRational::zero(); dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                omega[i][j] = inv[j][i].clone();
            }
        }
        let fields = self
            .basis
            .iter()
            .map(|b| FieldSymbol {
                name: b.field.clone(),
                ghost: b.degree - 1,
            })
            .collect();
        Ok(PairingTable::new(fields, omega)?)
    }

    /// Same algebra data, ignoring the display name.
    pub fn same_algebra(&self, other: &Self) -> bool {
        self.basis
            .iter()
            .map(|b| b.degree)
            .eq(other.basis.iter().map(|b| b.degree))
            && self.unit == other.unit
            && self.m2 == other.m2
            && self.m3 == other.m3
            && self.trace == other.trace
    }
}

/// Gauss-Jordan inverse; on a singular matrix returns a kernel vector.
fn invert(m: &[Vec<BigRational>]) -> Result<Vec<Vec<BigRational>>, Vec<BigRational>> {
    let n = m.len();
    let mut a = m.to_vec();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    let mut pivot_col_of_row = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        inv.swap(row, p);
        let d = a[row][col].clone();
        for c in 0..n {
            a[row][c] = &a[row][c] / &d;
            inv[row][c] = &inv[row][c] / &d;
        }
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..n {
                    let t = &f * &a[row][c];
                    a[r][c] -= t;
                    let t = &f * &inv[row][c];
                    inv[r][c] -= t;
                }
            }
        }
        pivot_col_of_row.push(col);
        row += 1;
    }
    if row == n {
        Ok(inv)
    } else {
        let free = (0..n).find(|c| !pivot_col_of_row.contains(c)).unwrap();
        let mut v = vec![BigRational::zero(); n];
        v[free] = BigRational::one();
        for (r, &pc) in pivot_col_of_row.iter().enumerate() {
            v[pc] = -a[r][free].clone();
        }
        Err(v)
    }
}

/// The two-parameter main example: unit, two odd square-zero generators
/// with anticommuting product, their top product, and the trace picking out
/// the top. Fields c, Z1, Z2, b in ghost degrees -1, 0, 0, 1.
pub fn builtin_eps2() -> CyclicAlgebraSpec {
    let r = |k: i64| BigRational::from_integer(k.into());
    let row = |a: i64, b: i64, c: i64, d: i64| vec![r(a), r(b), r(c), r(d)];
    let zero = row(0, 0, 0, 0);
    let mut m2 = vec![vec![zero; 4]; 4];
    for i in 0..4 {
        let mut e = vec![r(0); 4];
        e[i] = r(1);
        m2[0][i] = e.clone();
        m2[i][0] = e;
    }
    m2[1][2] = row(0, 0, 0, 1);
    m2[2][1] = row(0, 0, 0, -1);
    let b = |name: &str, degree: i32, field: &str| BasisElement {
        name: name.into(),
        degree,
        field: field.into(),
    };
    CyclicAlgebraSpec {
        name: "eps2".into(),
        basis: vec![
            b("1", 0, "c"),
            b("eps1", 1, "Z1"),
            b("eps2", 1, "Z2"),
            b("eps12", 2, "b"),
        ],
        unit: 0,
        m2,
        m3: Vec::new(),
        trace: row(0, 0, 0, 1),
    }
}

/// Dual numbers with the generator in degree 2: the smallest spec whose
/// current fails to square to zero.
pub fn builtin_dual_numbers() -> CyclicAlgebraSpec {
    let r = |k: i64| BigRational::from_integer(k.into());
    let b = |name: &str, degree: i32, field: &str| BasisElement {
        name: name.into(),
        degree,
        field: field.into(),
    };
    CyclicAlgebraSpec {
        name: "dual-numbers-deg2".into(),
        basis: vec![b("1", 0, "c"), b("x", 2, "b")],
        unit: 0,
        m2: vec![
            vec![vec![r(1), r(0)], vec![r(0), r(1)]],
            vec![vec![r(0), r(1)], vec![r(0), r(0)]],
        ],
        m3: Vec::new(),
        trace: vec![r(0), r(1)],
    }
}

pub fn builtin(name: &str) -> Option<CyclicAlgebraSpec> {
    match name {
        "eps2" => Some(builtin_eps2()),
        "dual-numbers-deg2" | "dual" => Some(builtin_dual_numbers()),
        _ => None,
    }
}

/// Sign twisting the cyclic tensor (a_0, ..., a_n) into the trace word,
/// exponent sum_k (n-k)|a_k| in algebra degrees. This is the convention
/// forced by the two-point table being the inverse transposed pairing: the
/// current built with it squares to zero for associative cyclic specs of the
/// main-example kind.
fn twist_sign(spec: &CyclicAlgebraSpec, indices: &[usize]) -> i32 {
    let n = indices.len() - 1;
    let mut e = 0u32;
    for (k, &i) in indices.iter().enumerate() {
        e += (n - k) as u32 * spec.degree_parity(i) as u32;
    }
    if e % 2 == 0 {
        1
    } else {
        -1
    }
}

/// The BRST current: twice the normalized cyclic tensor of the structure
/// constants, one trace word per tuple with a nonzero pairing against the
/// product of the tail. Only the arities present in the spec contribute.
pub fn build_brst_field(spec: &CyclicAlgebraSpec, table: &PairingTable) -> OperatorSum {
    let parity = table.parities();
    let p = spec.pairing_matrix();
    let dim = spec.dim();
    let mut out = OperatorSum::zero();
    let add = |indices: &[usize], value: BigRational, out: &mut OperatorSum| {
        if value.is_zero() {
            return;
        }
        let norm = factorial(indices.len() as u32).recip() * BigRational::from_integer(2.into());
        let scale = value * norm
            * BigRational::from_integer(twist_sign(spec, indices).into());
        let letters: Vec<Letter> = indices.iter().map(|&i| Letter::new(i, 0)).collect();
        if let Some((sign, mt)) = multitrace_from_letters(&[letters], &parity) {
            out.add_term(
                mt,
                GradedCoefficient::from_rational(if sign < 0 { -scale } else { scale }),
            );
        }
    };
    for i0 in 0..dim {
        for i1 in 0..dim {
            for i2 in 0..dim {
                let prod = spec.product(i1, i2);
                let mut coeff = BigRational::zero();
                for m in 0..dim {
                    if !prod[m].is_zero() {
                        coeff += &prod[m] * &p[i0][m];
                    }
                }
                add(&[i0, i1, i2], coeff, &mut out);
            }
        }
    }
    for (i1, i2, i3, vals) in &spec.m3 {
        for i0 in 0..dim {
            let mut coeff = BigRational::zero();
            for m in 0..dim {
                if !vals[m].is_zero() {
                    coeff += &vals[m] * &p[i0][m];
                }
            }
            add(&[i0, *i1, *i2, *i3], coeff, &mut out);
        }
    }
    out
}

/// A validated spec together with its pairing table and current.
#[derive(Clone, Debug)]
pub struct BrstContext {
    pub spec: CyclicAlgebraSpec,
    pub table: PairingTable,
    pub j: OperatorSum,
}

impl BrstContext {
    pub fn new(spec: CyclicAlgebraSpec) -> Result<Self, BrstError> {
        spec.validate()?;
        let table = spec.pairing_table()?;
        let j = build_brst_field(&spec, &table);
        Ok(BrstContext { spec, table, j })
    }

    pub fn names(&self) -> Vec<&str> {
        self.table.names()
    }
}

/// Q x = J_(0) x.
pub fn brst_differential(ctx: &BrstContext, x: &OperatorSum) -> OperatorSum {
    mode_product(&ctx.j, 0, x, &ctx.table)
}

fn q_monomial(ctx: &BrstContext, m: &MultiTrace) -> OperatorSum {
    brst_differential(
        ctx,
        &OperatorSum::from_monomial(m.clone(), GradedCoefficient::one()),
    )
}

fn render_ope(r: &OPEResult, names: &[&str]) -> String {
    let mut out = String::new();
    for (p, op) in r.poles() {
        if op.is_zero() {
            continue;
        }
        if !out.is_empty() {
            out.push_str("; ");
        }
        let _ = write!(out, "pole {}: {}", p, render_operator(op, names));
    }
    out
}

#[derive(Debug)]
pub struct QSquaredReport {
    /// The full singular OPE of the current with itself.
    pub jj: OPEResult,
    /// Monomials swept by the direct Q(Q x) check.
    pub basis_checked: usize,
    /// First failure, rendered, if any.
    pub witness: Option<String>,
}

impl QSquaredReport {
    pub fn ok(&self) -> bool {
        self.jj.is_zero() && self.witness.is_none()
    }
}

/// Check J J = 0 as an OPE, then Q^2 = 0 directly on every basis monomial of
/// the truncation. The sweep works sector by sector in (ghost, weight) so
/// only two layers of images are alive at a time.
pub fn q_squared_check(ctx: &BrstContext, max_letters: usize, max_deriv: usize) -> QSquaredReport {
    let names = ctx.names();
    let jj = singular_ope(&ctx.j, &ctx.j, &ctx.table);
    if !jj.is_zero() {
        let witness = Some(format!("J(z) J(w) = {}", render_ope(&jj, &names)));
        return QSquaredReport {
            jj,
            basis_checked: 0,
            witness,
        };
    }
    let parities = ctx.table.parities();
    let basis = enumerate_basis(ctx.table.n_fields(), &parities, max_letters, max_deriv);
    // Stream one column at a time; a size-capped memo shares the second
    // layer between nearby columns without letting the images of a whole
    // sector pile up in memory.
    let mut memo: HashMap<MultiTrace, OperatorSum> = HashMap::new();
    // The memo is bounded by stored terms, not entries: second-layer images
    // of long words are much bigger than those of short ones.
    let mut memo_terms = 0usize;
    const MEMO_TERM_CAP: usize = 1_000_000;
    let mut checked = 0usize;
    for m in &basis {
        let q = q_monomial(ctx, m);
        // Evict between columns only, never mid-column: pass two below
        // indexes into the memo for every image of this column.
        if memo_terms >= MEMO_TERM_CAP {
            memo.clear();
            memo_terms = 0;
        }
        for (y, _) in q.terms() {
            if !memo.contains_key(y) {
                let image = q_monomial(ctx, y);
                memo_terms += image.n_terms();
                memo.insert(y.clone(), image);
            }
        }
        // Accumulate by reference into the memoized images; nothing is
        // cloned unless the column actually fails.
        let mut acc: BTreeMap<&MultiTrace, GradedCoefficient> = BTreeMap::new();
        for (y, cy) in q.terms() {
            for (z, cz) in memo[y].terms() {
                let w = cy.mul(cz);
                match acc.get_mut(z) {
                    Some(slot) => slot.add_assign(&w),
                    None => {
                        acc.insert(z, w);
                    }
                }
            }
        }
        checked += 1;
        if acc.values().any(|c| !c.is_zero()) {
            let mut bad = OperatorSum::zero();
            for (z, c) in acc {
                bad.add_term(z.clone(), c);
            }
            let witness = Some(format!(
                "Q^2 {} = {}",
                render_multitrace(m, &names),
                render_operator(&bad, &names)
            ));
            return QSquaredReport {
                jj,
                basis_checked: checked,
                witness,
            };
        }
    }
    QSquaredReport {
        jj,
        basis_checked: checked,
        witness: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohomologyRow {
    pub ghost: i32,
    pub dim_chains: usize,
    pub dim_cohomology: usize,
}

/// Cohomology of Q as a table over ghost degree, computed on the stable
/// core of the requested box: the largest set of basis monomials within
/// (max_letters, max_deriv) whose Q images stay inside the set. Q genuinely
/// squares to zero there, so the ranks are those of an honest subcomplex of
/// the full theory; monomials whose differentials escape the box are shed
/// first, then everything that leaks into them, until nothing moves. Ranks
/// are fraction-free over Q[N] so the answer is the generic-N one; passing
/// a value computes the specialized table instead.
pub fn cohomology_dimensions(
    ctx: &BrstContext,
    max_letters: usize,
    max_deriv: usize,
    at_n: Option<&BigRational>,
) -> Result<Vec<CohomologyRow>, BrstError> {
    let names = ctx.names();
    let jj = singular_ope(&ctx.j, &ctx.j, &ctx.table);
    if !jj.is_zero() {
        return Err(BrstError::NotNilpotent(format!(
            "J(z) J(w) = {}",
            render_ope(&jj, &names)
        )));
    }
    let parities = ctx.table.parities();
    let ghosts: Vec<i32> = (0..ctx.table.n_fields()).map(|i| ctx.table.ghost(i)).collect();
    let mut seed = vec![MultiTrace::unit()];
    seed.extend(enumerate_basis(
        ctx.table.n_fields(),
        &parities,
        max_letters,
        max_deriv,
    ));
    let images: Vec<OperatorSum> = seed.iter().map(|m| q_monomial(ctx, m)).collect();
    let mut alive: Vec<bool> = vec![true; seed.len()];
    let index: HashMap<&MultiTrace, usize> = seed.iter().zip(0..).collect();
    loop {
        let mut changed = false;
        for i in 0..seed.len() {
            if !alive[i] {
                continue;
            }
            let escapes = images[i]
                .terms()
                .any(|(y, _)| index.get(y).map_or(true, |&j| !alive[j]));
            if escapes {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // block ranks per (ghost, weight) sector of the surviving complex
    let mut sectors: BTreeMap<(i32, i32), Vec<usize>> = BTreeMap::new();
    for (i, m) in seed.iter().enumerate() {
        if alive[i] {
            sectors
                .entry((m.ghost(&ghosts), m.weight2(&ghosts)))
                .or_default()
                .push(i);
        }
    }
    let one = BigRational::one();
    let mut rank_by_ghost: BTreeMap<i32, usize> = BTreeMap::new();
    let mut dim_by_ghost: BTreeMap<i32, usize> = BTreeMap::new();
    for (&(g, _), cols) in &sectors {
        *dim_by_ghost.entry(g).or_default() += cols.len();
        let mut t_index: HashMap<&MultiTrace, usize> = HashMap::new();
        let mut rows: Vec<Vec<(usize, PolyN)>> = Vec::with_capacity(cols.len());
        for &i in cols {
            let q = &images[i];
            let mut row = Vec::with_capacity(q.n_terms());
            for (y, c) in q.terms() {
                let c = c.specialize_hbar(&one);
                let poly = match at_n {
                    Some(n) => PolyN::constant(
                        c.specialize_n(n)
                            .as_constant()
                            .expect("specialized coefficient must be constant"),
                    ),
                    None => c
                        .to_poly_n()
                        .map_err(|e| BrstError::Scalar(e.to_string()))?,
                };
                if !poly.is_zero() {
                    let next = t_index.len();
                    let id = *t_index.entry(&seed[index[y]]).or_insert(next);
                    row.push((id, poly));
                }
            }
            rows.push(row);
        }
        let width = t_index.len();
        let dense: Vec<Vec<PolyN>> = rows
            .into_iter()
            .map(|row| {
                let mut r = vec![PolyN::zero(); width];
                for (j, p) in row {
                    r[j] = p;
                }
                r
            })
            .collect();
        *rank_by_ghost.entry(g).or_default() += rank_poly(dense);
    }
    let mut out = Vec::new();
    for (&g, &dim) in &dim_by_ghost {
        let from_here = rank_by_ghost.get(&g).copied().unwrap_or(0);
        let from_above = rank_by_ghost.get(&(g + 1)).copied().unwrap_or(0);
        out.push(CohomologyRow {
            ghost: g,
            dim_chains: dim,
            dim_cohomology: dim - from_here - from_above,
        });
    }
    Ok(out)
}

/// Rank of a rational-polynomial matrix by fraction-free elimination.
fn rank_poly(mut m: Vec<Vec<PolyN>>) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut prev = PolyN::constant(BigRational::one());
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        for r in rank + 1..rows {
            for c in col + 1..cols {
                let t = m[r][c].mul(&m[rank][col]).sub(&m[r][col].mul(&m[rank][c]));
                m[r][c] = t.div_exact(&prev);
            }
            m[r][col] = PolyN::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// A cyclic cochain on the polynomial extension A[t], stored as explicit
/// values on tuples of (basis index, t power). The arity bound exists so
/// that the Hochschild differential can refuse instead of overflowing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CyclicCochain {
    arity: usize,
    max_arity: usize,
    entries: BTreeMap<Vec<(usize, usize)>, BigRational>,
}

impl CyclicCochain {
    pub fn new(arity: usize, max_arity: usize) -> Self {
        assert!(arity >= 1 && arity <= max_arity);
        CyclicCochain {
            arity,
            max_arity,
            entries: BTreeMap::new(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn max_arity(&self) -> usize {
        self.max_arity
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<(usize, usize)>, &BigRational)> {
        self.entries.iter()
    }

    pub fn value(&self, tuple: &[(usize, usize)]) -> BigRational {
        self.entries.get(tuple).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn add_entry(&mut self, tuple: Vec<(usize, usize)>, value: BigRational) {
        assert_eq!(tuple.len(), self.arity);
        if value.is_zero() {
            return;
        }
        match self.entries.entry(tuple) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += value;
                if e.get().is_zero() {
                    e.remove();
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(value);
            }
        }
    }

    /// Insert a value together with all its cyclic rotations, signed by the
    /// lambda convention: rotating the last slot to the front costs the
    /// algebra-degree Koszul sign times (-1)^(arity - 1).
    pub fn add_cyclic(&mut self, tuple: Vec<(usize, usize)>, value: BigRational, spec: &CyclicAlgebraSpec) {
        let s = tuple.len();
        let mut current = tuple;
        let mut sign = BigRational::one();
        for _ in 0..s {
            self.add_entry(current.clone(), &sign * &value);
            let last = current.pop().unwrap();
            let p_last = spec.degree_parity(last.0) as u32;
            let p_rest: u32 = current
                .iter()
                .map(|&(i, _)| spec.degree_parity(i) as u32)
                .sum();
            if (p_last * p_rest + (s as u32 - 1)) % 2 == 1 {
                sign = -sign;
            }
            current.insert(0, last);
        }
    }

    pub fn max_t(&self) -> usize {
        self.entries
            .keys()
            .flat_map(|k| k.iter().map(|&(_, t)| t))
            .max()
            .unwrap_or(0)
    }
}

/// The Hochschild differential on A[t] cochains: interior contractions with
/// alternating signs plus the signed wrap-around term. Raises arity by one;
/// refuses past the declared bound.
pub fn hochschild_b(f: &CyclicCochain, spec: &CyclicAlgebraSpec) -> Result<CyclicCochain, BrstError> {
    let s = f.arity();
    let out_arity = s + 1;
    if out_arity > f.max_arity() {
        return Err(BrstError::ArityOverflow(out_arity, f.max_arity()));
    }
    let dim = spec.dim();
    let tmax = f.max_t();
    let mut out = CyclicCochain::new(out_arity, f.max_arity());
    // f applied to a tuple whose `slot` entry is the product of two letters
    let eval_with_product = |tuple: &[(usize, usize)], slot: usize, a: (usize, usize), b: (usize, usize)| {
        let mut acc = BigRational::zero();
        let prod = spec.product(a.0, b.0);
        for (m, c) in prod.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mut probe: Vec<(usize, usize)> = tuple.to_vec();
            probe[slot] = (m, a.1 + b.1);
            let v = f.value(&probe);
            if !v.is_zero() {
                acc += c * v;
            }
        }
        acc
    };
    let mut tuple: Vec<(usize, usize)> = vec![(0, 0); out_arity];
    let mut odometer = vec![0usize; out_arity];
    let per_slot = dim * (tmax + 1);
    loop {
        for (k, &o) in odometer.iter().enumerate() {
            tuple[k] = (o % dim, o / dim);
        }
        let mut val = BigRational::zero();
        // contract neighbours i, i+1 into one slot of an arity-s tuple
        let mut inner: Vec<(usize, usize)> = Vec::with_capacity(s);
        for i in 0..s {
            inner.clear();
            inner.extend_from_slice(&tuple[..i]);
            inner.push((0, 0));
            inner.extend_from_slice(&tuple[i + 2..]);
            let term = eval_with_product(&inner, i, tuple[i], tuple[i + 1]);
            if !term.is_zero() {
                if i % 2 == 0 {
                    val += term;
                } else {
                    val -= term;
                }
            }
        }
        // wrap-around: the last letter multiplies the first from the left
        {
            inner.clear();
            inner.push((0, 0));
            inner.extend_from_slice(&tuple[1..s]);
            let mut term = eval_with_product(&inner, 0, tuple[s], tuple[0]);
            if !term.is_zero() {
                let p_last = spec.degree_parity(tuple[s].0) as u32;
                let p_rest: u32 = tuple[..s]
                    .iter()
                    .map(|&(i, _)| spec.degree_parity(i) as u32)
                    .sum();
                let mut neg = s % 2 == 1;
                if p_last * p_rest % 2 == 1 {
                    neg = !neg;
                }
                if neg {
                    term = -term;
                }
                val += term;
            }
        }
        if !val.is_zero() {
            out.add_entry(tuple.clone(), val);
        }
        // advance
        let mut k = 0;
        loop {
            if k == out_arity {
                return Ok(out);
            }
            odometer[k] += 1;
            if odometer[k] < per_slot {
                break;
            }
            odometer[k] = 0;
            k += 1;
        }
    }
}

/// The dictionary: a cochain becomes the sum of its trace words, one letter
/// per slot, t powers as derivatives with 1/t! absorbed, the whole orbit
/// twisted and divided by the arity so each necklace counts once.
pub fn cochain_to_operator(
    f: &CyclicCochain,
    ctx: &BrstContext,
) -> OperatorSum {
    let parity = ctx.table.parities();
    let arity = f.arity() as u32;
    let mut out = OperatorSum::zero();
    let mut fields: Vec<usize> = Vec::new();
    for (tuple, val) in f.entries() {
        let letters: Vec<Letter> = tuple.iter().map(|&(i, t)| Letter::new(i, t)).collect();
        fields.clear();
        fields.extend(tuple.iter().map(|&(i, _)| i));
        let mut scale = val / BigRational::from_integer(arity.into());
        if twist_sign(&ctx.spec, &fields) < 0 {
            scale = -scale;
        }
        for &(_, t) in tuple {
            scale /= factorial(t as u32);
        }
        if let Some((sign, mt)) = multitrace_from_letters(&[letters], &parity) {
            out.add_term(
                mt,
                GradedCoefficient::from_rational(if sign < 0 { -scale } else { scale }),
            );
        }
    }
    out
}

/// Does the order-hbar part of Q reproduce the Hochschild differential
/// through the dictionary?
pub fn classical_limit_compare(ctx: &BrstContext, f: &CyclicCochain) -> Result<bool, BrstError> {
    let phi = cochain_to_operator(f, ctx);
    let lhs = brst_differential(ctx, &phi).map_coefficients(|c| c.coefficient_of_hbar(1));
    let bf = hochschild_b(f, &ctx.spec)?;
    let rhs = cochain_to_operator(&bf, ctx);
    Ok(lhs == rhs)
}

/// One cochain per canonical trace word within the bounds: the cyclic
/// symmetrization of the indicator of that word. Arity headroom of two so a
/// double differential stays representable.
pub fn enumerate_cochain_basis(
    ctx: &BrstContext,
    max_arity: usize,
    max_t: usize,
) -> Vec<CyclicCochain> {
    let parities = ctx.table.parities();
    let words = enumerate_trace_words(ctx.table.n_fields(), &parities, max_arity, max_t);
    let mut out = Vec::new();
    for w in words {
        let tuple: Vec<(usize, usize)> = w
            .letters()
            .iter()
            .map(|l| (l.field as usize, l.deriv as usize))
            .collect();
        let mut f = CyclicCochain::new(tuple.len(), tuple.len() + 2);
        f.add_cyclic(tuple, BigRational::one(), &ctx.spec);
        if !f.is_zero() {
            out.push(f);
        }
    }
    out
}

/// The named generators of the small algebra carried by the main example:
/// the stress tensor, the weight-one triple, and the four weight-3/2
/// currents.
pub struct N4Generators {
    pub t: OperatorSum,
    pub j_plus: OperatorSum,
    pub j_zero: OperatorSum,
    pub j_minus: OperatorSum,
    pub g_plus: [OperatorSum; 2],
    pub g_minus: [OperatorSum; 2],
}

impl N4Generators {
    pub fn named(&self) -> Vec<(&'static str, &OperatorSum)> {
        vec![
            ("T", &self.t),
            ("J+", &self.j_plus),
            ("J0", &self.j_zero),
            ("J-", &self.j_minus),
            ("G+1", &self.g_plus[0]),
            ("G+2", &self.g_plus[1]),
            ("G-1", &self.g_minus[0]),
            ("G-2", &self.g_minus[1]),
        ]
    }
}

pub fn n4_generators(ctx: &BrstContext) -> Result<N4Generators, BrstError> {
    if !ctx.spec.same_algebra(&builtin_eps2()) {
        return Err(BrstError::RequiresMainExample);
    }
    let parity = ctx.table.parities();
    let tr = |letters: &[(usize, usize)], num: i64, den: i64| -> OperatorSum {
        let ls: Vec<Letter> = letters.iter().map(|&(f, d)| Letter::new(f, d)).collect();
        let (sign, mt) = multitrace_from_letters(&[ls], &parity).expect("generator word vanishes");
        OperatorSum::from_monomial(
            mt,
            GradedCoefficient::from_rational(
                BigRational::new((sign as i64 * num).into(), den.into()),
            ),
        )
    };
    // fields: c = 0, Z1 = 1, Z2 = 2, b = 3
    let t = tr(&[(1, 0), (2, 1)], 1, 2)
        .add(&tr(&[(2, 0), (1, 1)], -1, 2))
        .add(&tr(&[(3, 0), (0, 1)], -1, 1));
    Ok(N4Generators {
        t,
        j_plus: tr(&[(1, 0), (1, 0)], 1, 2),
        j_zero: tr(&[(1, 0), (2, 0)], -1, 2),
        j_minus: tr(&[(2, 0), (2, 0)], -1, 2),
        g_plus: [tr(&[(3, 0), (1, 0)], 1, 1), tr(&[(3, 0), (2, 0)], 1, 1)],
        g_minus: [tr(&[(0, 1), (1, 0)], 1, 1), tr(&[(0, 1), (2, 0)], 1, 1)],
    })
}

#[derive(Debug)]
pub struct N4Row {
    pub label: String,
    pub ok: bool,
    pub detail: Option<String>,
}

#[derive(Debug)]
pub struct N4Report {
    pub rows: Vec<N4Row>,
}

impl N4Report {
    pub fn ok(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }
}

/// Every ordered pair of named generators against the closed-form table of
/// their singular products, compared exactly at hbar = 1.
pub fn verify_n4(ctx: &BrstContext) -> Result<N4Report, BrstError> {
    let gens = n4_generators(ctx)?;
    let names = ctx.names();
    let parity = ctx.table.parities();
    let one = BigRational::one();
    let d = |x: &OperatorSum| x.derivative(&parity);
    let sc = |x: &OperatorSum, num: i64, den: i64| x.scale_rational(&BigRational::new(num.into(), den.into()));
    let n2 = |num: i64, den: i64| {
        OperatorSum::from_monomial(
            MultiTrace::unit(),
            GradedCoefficient::monomial([0, 0, 2, 0], BigRational::new(num.into(), den.into())),
        )
    };
    let named = gens.named();
    let mut expected: BTreeMap<(usize, usize), Vec<(u32, OperatorSum)>> = BTreeMap::new();
    let idx = |label: &str| named.iter().position(|(n, _)| *n == label).unwrap();
    let t = &gens.t;
    let js = [("J+", &gens.j_plus), ("J0", &gens.j_zero), ("J-", &gens.j_minus)];
    let gs = [
        ("G+1", &gens.g_plus[0]),
        ("G+2", &gens.g_plus[1]),
        ("G-1", &gens.g_minus[0]),
        ("G-2", &gens.g_minus[1]),
    ];
    {
        let mut put = |a: &str, b: &str, poles: Vec<(u32, OperatorSum)>| {
            expected.insert((idx(a), idx(b)), poles);
        };
        // stress tensor rows: weights 1 for J, 3/2 for G, central term -3N^2/2
        put("T", "T", vec![(4, n2(-3, 2)), (2, sc(t, 2, 1)), (1, d(t))]);
        for (name, x) in js {
            put("T", name, vec![(2, x.clone()), (1, d(x))]);
            put(name, "T", vec![(2, x.clone())]);
        }
        for (name, x) in gs {
            put("T", name, vec![(2, sc(x, 3, 2)), (1, d(x))]);
            put(name, "T", vec![(2, sc(x, 3, 2)), (1, sc(&d(x), 1, 2))]);
        }
        // the weight-one algebra
        put("J0", "J+", vec![(1, gens.j_plus.clone())]);
        put("J+", "J0", vec![(1, gens.j_plus.neg())]);
        put("J0", "J-", vec![(1, gens.j_minus.neg())]);
        put("J-", "J0", vec![(1, gens.j_minus.clone())]);
        put("J+", "J-", vec![(2, n2(-1, 2)), (1, sc(&gens.j_zero, 2, 1))]);
        put("J-", "J+", vec![(2, n2(-1, 2)), (1, sc(&gens.j_zero, -2, 1))]);
        put("J0", "J0", vec![(2, n2(-1, 4))]);
        put("J+", "J+", vec![]);
        put("J-", "J-", vec![]);
        // weight-one action on the supercurrents: J0 reads off the Z charge,
        // J+- exchange the two columns
        for s in ["+", "-"] {
            let g1 = format!("G{}1", s);
            let g2 = format!("G{}2", s);
            let op1 = gs.iter().find(|(n, _)| *n == g1).unwrap().1.clone();
            let op2 = gs.iter().find(|(n, _)| *n == g2).unwrap().1.clone();
            put("J0", &g1, vec![(1, sc(&op1, 1, 2))]);
            put("J0", &g2, vec![(1, sc(&op2, -1, 2))]);
            put("J+", &g2, vec![(1, op1.clone())]);
            put("J+", &g1, vec![]);
            put("J-", &g1, vec![(1, op2.clone())]);
            put("J-", &g2, vec![]);
        }
        // like-signed supercurrents are mutually regular
        for a in ["G+1", "G+2"] {
            for b in ["G+1", "G+2"] {
                put(a, b, vec![]);
            }
        }
        for a in ["G-1", "G-2"] {
            for b in ["G-1", "G-2"] {
                put(a, b, vec![]);
            }
        }
        // mixed supercurrents: J-hat_{ij} with J-hat_11 = J+, J-hat_12 = -J0,
        // J-hat_22 = -J-; the off-diagonal pairs see the stress tensor and
        // the signed central pole
        let jhat = |i: usize, jj: usize| -> OperatorSum {
            match (i, jj) {
                (0, 0) => gens.j_plus.clone(),
                (1, 1) => gens.j_minus.neg(),
                _ => gens.j_zero.neg(),
            }
        };
        for i in 0..2 {
            for jj in 0..2 {
                let gp = format!("G+{}", i + 1);
                let gm = format!("G-{}", jj + 1);
                let h = jhat(i, jj);
                let eps: i64 = if i == jj {
                    0
                } else if (i, jj) == (0, 1) {
                    1
                } else {
                    -1
                };
                let mut fwd = vec![(2, sc(&h, 2, 1)), (1, sc(t, -eps, 1).add(&d(&h)))];
                let mut bwd = vec![(2, sc(&h, -2, 1)), (1, sc(t, -eps, 1).sub(&d(&h)))];
                if eps != 0 {
                    fwd.push((3, n2(eps, 1)));
                    bwd.push((3, n2(eps, 1)));
                }
                put(&gp, &gm, fwd);
                put(&gm, &gp, bwd);
            }
        }
    }
    // supercurrent against current: single pole, sign flipped by skew
    // symmetry since the current side has no second-order pole
    for (jn, _) in js {
        for (gn, _) in gs {
            let back = expected
                .get(&(idx(jn), idx(gn)))
                .cloned()
                .unwrap_or_default();
            let flipped = back.into_iter().map(|(p, op)| (p, op.neg())).collect();
            expected.insert((idx(gn), idx(jn)), flipped);
        }
    }
    // run the comparison
    let mut rows = Vec::new();
    for (ai, (an, aop)) in named.iter().enumerate() {
        for (bi, (bn, bop)) in named.iter().enumerate() {
            let want = expected.remove(&(ai, bi)).unwrap_or_default();
            let want: BTreeMap<u32, OperatorSum> = want
                .into_iter()
                .filter(|(_, op)| !op.is_zero())
                .collect();
            let got = singular_ope(aop, bop, &ctx.table);
            let top = got.max_pole().max(want.keys().next_back().copied().unwrap_or(0));
            let mut detail = None;
            for p in 1..=top {
                let g = got.pole(p).specialize_hbar(&one);
                let w = want.get(&p).cloned().unwrap_or_else(OperatorSum::zero);
                if g != w {
                    detail = Some(format!(
                        "pole {}: got {}, want {}",
                        p,
                        render_operator(&g, &names),
                        render_operator(&w, &names)
                    ));
                    break;
                }
            }
            rows.push(N4Row {
                label: format!("{}(z) {}(w)", an, bn),
                ok: detail.is_none(),
                detail,
            });
        }
    }
    Ok(N4Report { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_algebra::OperatorSum;
    use crate::scalars::rat;

    fn eps2_ctx() -> BrstContext {
        BrstContext::new(builtin_eps2()).unwrap()
    }

    fn dual_ctx() -> BrstContext {
        BrstContext::new(builtin_dual_numbers()).unwrap()
    }

    fn tr(ctx: &BrstContext, letters: &[(usize, usize)], num: i64, den: i64) -> OperatorSum {
        let parity = ctx.table.parities();
        let ls: Vec<Letter> = letters.iter().map(|&(f, d)| Letter::new(f, d)).collect();
        let (sign, mt) = multitrace_from_letters(&[ls], &parity).unwrap();
        OperatorSum::from_monomial(
            mt,
            GradedCoefficient::from_rational(BigRational::new((sign as i64 * num).into(), den.into())),
        )
    }

    #[test]
    fn eps2_pairing_table() {
        let ctx = eps2_ctx();
        let t = &ctx.table;
        assert_eq!(t.names(), vec!["c", "Z1", "Z2", "b"]);
        assert_eq!((0..4).map(|i| t.ghost(i)).collect::<Vec<_>>(), vec![-1, 0, 0, 1]);
        assert_eq!(*t.omega(0, 3), rat(1, 1));
        assert_eq!(*t.omega(3, 0), rat(1, 1));
        assert_eq!(*t.omega(1, 2), rat(1, 1));
        assert_eq!(*t.omega(2, 1), rat(-1, 1));
        assert_eq!(*t.omega(0, 0), rat(0, 1));
        assert_eq!(*t.omega(1, 1), rat(0, 1));
    }

    #[test]
    fn eps2_current_golden() {
        let ctx = eps2_ctx();
        let want = tr(&ctx, &[(0, 0), (0, 0), (3, 0)], 1, 1)
            .add(&tr(&ctx, &[(0, 0), (1, 0), (2, 0)], -1, 1))
            .add(&tr(&ctx, &[(0, 0), (2, 0), (1, 0)], 1, 1));
        assert_eq!(ctx.j, want);
    }

    #[test]
    fn dual_current_golden() {
        let ctx = dual_ctx();
        let want = tr(&ctx, &[(0, 0), (0, 0), (1, 0)], 1, 1);
        assert_eq!(ctx.j, want);
    }

    #[test]
    fn eps2_current_squares_to_zero() {
        let ctx = eps2_ctx();
        assert!(singular_ope(&ctx.j, &ctx.j, &ctx.table).is_zero());
    }

    #[test]
    fn dual_current_obstruction() {
        let ctx = dual_ctx();
        let jj = singular_ope(&ctx.j, &ctx.j, &ctx.table);
        assert!(!jj.is_zero());
        let report = q_squared_check(&ctx, 3, 1);
        assert!(!report.ok());
        assert!(report.witness.is_some());
    }

    #[test]
    fn q_kills_single_letters() {
        let ctx = eps2_ctx();
        for f in 0..4 {
            let x = tr(&ctx, &[(f, 0)], 1, 1);
            assert!(
                brst_differential(&ctx, &x).is_zero(),
                "Q Tr({}) != 0",
                ctx.names()[f]
            );
        }
    }

    #[test]
    fn q_squared_small_box() {
        let ctx = eps2_ctx();
        let report = q_squared_check(&ctx, 4, 1);
        assert!(report.ok(), "witness: {:?}", report.witness);
        assert!(report.basis_checked > 0);
    }

    #[test]
    fn q_is_an_odd_derivation_for_modes() {
        let ctx = eps2_ctx();
        let parity = ctx.table.parities();
        let samples = [
            tr(&ctx, &[(3, 0), (1, 0)], 1, 1),
            tr(&ctx, &[(0, 1), (2, 0)], 1, 1),
            tr(&ctx, &[(1, 0), (2, 0)], 1, 1),
            tr(&ctx, &[(0, 0), (3, 0)], 1, 1),
        ];
        for a in &samples {
            for b in &samples {
                for n in [-1i64, 0, 1] {
                    let lhs = brst_differential(&ctx, &mode_product(a, n, b, &ctx.table));
                    let qa = brst_differential(&ctx, a);
                    let qb = brst_differential(&ctx, b);
                    let pa = a.terms().next().unwrap().0.parity(&parity);
                    let mut rhs = mode_product(&qa, n, b, &ctx.table);
                    let second = mode_product(a, n, &qb, &ctx.table);
                    rhs = if pa == 1 {
                        rhs.sub(&second)
                    } else {
                        rhs.add(&second)
                    };
                    assert_eq!(lhs, rhs, "derivation fails at mode {}", n);
                }
            }
        }
    }

    #[test]
    fn oversized_basis_is_rejected_before_allocation() {
        let entries: Vec<String> = (0..65)
            .map(|i| format!("{{\"name\": \"e{}\", \"degree\": 0}}", i))
            .collect();
        let src = format!(
            "{{\"basis\": [{}], \"unit\": 0, \"m2\": [], \"trace\": []}}",
            entries.join(", ")
        );
        let err = CyclicAlgebraSpec::from_json_str(&src).unwrap_err();
        assert!(err.to_string().contains("exceeds"), "got: {}", err);
    }

    #[test]
    fn spec_files_match_builtins() {
        let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../..");
        let eps2 = CyclicAlgebraSpec::from_path(Path::new(&format!("{}/models/eps2.json", root)))
            .unwrap();
        assert!(eps2.same_algebra(&builtin_eps2()));
        assert_eq!(eps2.basis()[0].field, "c");
        let dual = CyclicAlgebraSpec::from_path(Path::new(&format!(
            "{}/models/dual-numbers-deg2.toml",
            root
        )))
        .unwrap();
        assert!(dual.same_algebra(&builtin_dual_numbers()));
    }

    #[test]
    fn degenerate_pairing_is_rejected_with_witness() {
        let mut spec = builtin_dual_numbers();
        spec.trace = vec![BigRational::zero(), BigRational::zero()];
        let err = spec.pairing_table().unwrap_err();
        match err {
            BrstError::Algebra(AlgebraError::DegeneratePairing(names)) => {
                assert!(!names.is_empty());
            }
            other => panic!("unexpected error {:?}", other),
        }
    }

    #[test]
    fn non_associative_product_is_rejected() {
        let mut spec = builtin_eps2();
        spec.m2[1][2][3] = rat(2, 1);
        assert!(matches!(
            spec.validate(),
            Err(BrstError::Invalid(msg)) if msg.contains("associative") || msg.contains("cyclic")
        ));
    }

    #[test]
    fn cochain_differential_squares_to_zero() {
        let ctx = eps2_ctx();
        for f in enumerate_cochain_basis(&ctx, 2, 1) {
            let bf = hochschild_b(&f, &ctx.spec).unwrap();
            let bbf = hochschild_b(&bf, &ctx.spec).unwrap();
            assert!(bbf.is_zero(), "b b != 0 on {:?}", f);
        }
    }

    #[test]
    fn classical_limit_small_sweep() {
        let ctx = eps2_ctx();
        let basis = enumerate_cochain_basis(&ctx, 2, 1);
        assert!(!basis.is_empty());
        for f in &basis {
            assert!(
                classical_limit_compare(&ctx, f).unwrap(),
                "dictionary fails on {:?}",
                f
            );
        }
    }

    #[test]
    fn arity_overflow_is_refused() {
        let ctx = eps2_ctx();
        let mut f = CyclicCochain::new(2, 2);
        f.add_cyclic(vec![(1, 0), (2, 0)], rat(1, 1), &ctx.spec);
        let err = hochschild_b(&f, &ctx.spec).unwrap_err();
        assert!(err.is_refusal());
        assert!(matches!(err, BrstError::ArityOverflow(3, 2)));
    }

    #[test]
    fn n4_requires_the_main_example() {
        let ctx = dual_ctx();
        assert!(matches!(
            n4_generators(&ctx),
            Err(BrstError::RequiresMainExample)
        ));
    }

    #[test]
    fn n4_core_rows() {
        let ctx = eps2_ctx();
        let report = verify_n4(&ctx).unwrap();
        assert_eq!(report.rows.len(), 64);
        for row in report.rows.iter().filter(|r| {
            r.label.starts_with("J") || r.label == "T(z) T(w)" || r.label.starts_with("G+1(z) G-")
        }) {
            assert!(row.ok, "{}: {:?}", row.label, row.detail);
        }
    }

    #[test]
    fn cohomology_restricts_to_the_stable_core() {
        // Q grows letter counts, so the (2, 0) box is not a subcomplex on
        // its own. Its stable core keeps only monomials Q cannot push out:
        // there Q vanishes outright and every chain is a cohomology class.
        let ctx = eps2_ctx();
        let rows = cohomology_dimensions(&ctx, 2, 0, None).unwrap();
        let expect = [(-1, 3, 3), (0, 10, 10), (1, 5, 5)];
        assert_eq!(rows.len(), expect.len());
        for (r, (g, chains, coh)) in rows.iter().zip(expect) {
            assert_eq!((r.ghost, r.dim_chains, r.dim_cohomology), (g, chains, coh));
        }
    }

    #[test]
    fn cohomology_refuses_non_nilpotent_specs() {
        let ctx = dual_ctx();
        let err = cohomology_dimensions(&ctx, 3, 1, None).unwrap_err();
        assert!(matches!(err, BrstError::NotNilpotent(_)));
    }
}
