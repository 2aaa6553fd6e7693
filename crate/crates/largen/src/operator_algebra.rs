//! Canonical forms for invariant operators: cyclic trace words in derivatives
//! of matrix fields, graded-symmetric products of traces, and linear
//! combinations with [`GradedCoefficient`] coefficients.
//!
//! Every ordering question is settled once here: letters compare by
//! (field index, derivative order), a trace word is stored as its
//! lexicographically least rotation, and a multi-trace is stored sorted.
//! The Koszul signs produced by moving a word into canonical position use
//! ghost parities (ghost = algebra degree - 1), matching the sign rule of
//! the shifted symmetric algebra.

use crate::scalars::GradedCoefficient;
use num::{BigRational, One, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("pairing table violates graded antisymmetry at ({0}, {1})")]
    NotGradedAntisymmetric(String, String),
    #[error("pairing table is degenerate; kernel witness over fields: {0:?}")]
    DegeneratePairing(Vec<String>),
    #[error("empty trace word")]
    EmptyTrace,
}

/// A matrix field: one copy of the [1,1] object per basis element of the
/// underlying algebra, in ghost degree = algebra degree - 1.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FieldSymbol {
    pub name: String,
    pub ghost: i32,
}

impl FieldSymbol {
    pub fn parity(&self) -> u8 {
        self.ghost.rem_euclid(2) as u8
    }
}

/// The two-point function table: omega[i][j] multiplies the contraction of
/// field i (first insertion) against field j (second insertion).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PairingTable {
    fields: Vec<FieldSymbol>,
    omega: Vec<Vec<BigRational>>,
}

impl PairingTable {
    pub fn new(fields: Vec<FieldSymbol>, omega: Vec<Vec<BigRational>>) -> Result<Self, AlgebraError> {
        let n = fields.len();
        assert!(omega.len() == n && omega.iter().all(|r| r.len() == n));
        for i in 0..n {
            for j in 0..n {
                // graded antisymmetry of the shifted symplectic form
                let pij = fields[i].parity() * fields[j].parity();
                let expect = if pij == 1 {
                    omega[j][i].clone()
                } else {
                    -omega[j][i].clone()
                };
                if omega[i][j] != expect {
                    return Err(AlgebraError::NotGradedAntisymmetric(
                        fields[i].name.clone(),
                        fields[j].name.clone(),
                    ));
                }
            }
        }
        if let Some(kernel) = kernel_witness(&omega) {
            let names = kernel
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, _)| fields[i].name.clone())
                .collect();
            return Err(AlgebraError::DegeneratePairing(names));
        }
        Ok(PairingTable { fields, omega })
    }

    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[FieldSymbol] {
        &self.fields
    }

    pub fn names(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn omega(&self, i: usize, j: usize) -> &BigRational {
        &self.omega[i][j]
    }

    pub fn ghost(&self, i: usize) -> i32 {
        self.fields[i].ghost
    }

    pub fn parity(&self, i: usize) -> u8 {
        self.fields[i].parity()
    }

    pub fn parities(&self) -> Vec<u8> {
        self.fields.iter().map(|f| f.parity()).collect()
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Doubled conformal weight of the field: ghost + 1.
    pub fn weight2(&self, i: usize) -> i32 {
        self.fields[i].ghost + 1
    }
}

/// Nontrivial kernel vector of a square rational matrix, if any.
fn kernel_witness(m: &[Vec<BigRational>]) -> Option<Vec<BigRational>> {
    let n = m.len();
    // Row-reduce a copy of the transpose augmented implicitly; we want v with
    // m * v = 0, i.e. kernel of the matrix as a linear map.
    let mut a: Vec<Vec<BigRational>> = m.to_vec();
    let mut pivot_col_of_row = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        let inv = a[row][col].clone();
        for c in 0..n {
            a[row][c] = &a[row][c] / &inv;
        }
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..n {
                    let t = &f * &a[row][c];
                    a[r][c] -= t;
                }
            }
        }
        pivot_col_of_row.push(col);
        row += 1;
        if row == n {
            return None;
        }
    }
    // free column exists; build a kernel vector from the first one
    let free = (0..n).find(|c| !pivot_col_of_row.contains(c))?;
    let mut v = vec![BigRational::zero(); n];
    v[free] = BigRational::one();
    for (r, &pc) in pivot_col_of_row.iter().enumerate() {
        v[pc] = -a[r][free].clone();
    }
    Some(v)
}

/// One letter inside a trace: the deriv-th derivative of a field. No 1/k! is
/// absorbed; that normalization lives in coefficients.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Letter {
    pub field: u16,
    pub deriv: u16,
}

impl Letter {
    pub fn new(field: usize, deriv: usize) -> Self {
        Letter {
            field: field as u16,
            deriv: deriv as u16,
        }
    }
}

/// A single trace, stored as the lexicographically least rotation.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TraceWord {
    letters: Vec<Letter>,
}

impl TraceWord {
    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn parity(&self, parity: &[u8]) -> u8 {
        self.letters
            .iter()
            .map(|l| parity[l.field as usize])
            .fold(0, |a, p| a ^ p)
    }
}

/// Koszul sign for rotating `letters` left by one (first letter moved to the
/// end, crossing everything else).
fn single_rotation_sign(letters: &[Letter], parity: &[u8]) -> i32 {
    let p0 = parity[letters[0].field as usize];
    if p0 == 0 {
        return 1;
    }
    let rest: u8 = letters[1..]
        .iter()
        .map(|l| parity[l.field as usize])
        .fold(0, |a, p| a ^ p);
    if rest == 1 {
        -1
    } else {
        1
    }
}

/// Canonicalize a cyclic word: lexicographically least rotation plus the
/// Koszul sign of rotating to it. Returns None when some rotation maps the
/// word to minus itself (the word is zero, e.g. Tr(bb)).
pub fn canonicalize_trace(letters: &[Letter], parity: &[u8]) -> Option<(i32, TraceWord)> {
    assert!(!letters.is_empty(), "{}", AlgebraError::EmptyTrace);
    let n = letters.len();
    let mut best: Option<(Vec<Letter>, i32)> = None;
    let mut zero = false;
    let mut current = letters.to_vec();
    let mut sign = 1;
    for _ in 0..n {
        match &best {
            Some((b, s)) => {
                if current < *b {
                    best = Some((current.clone(), sign));
                } else if current == *b && sign != *s {
                    zero = true;
                }
            }
            None => best = Some((current.clone(), sign)),
        }
        sign *= single_rotation_sign(&current, parity);
        current.rotate_left(1);
    }
    if zero {
        return None;
    }
    let (letters, sign) = best.unwrap();
    Some((sign, TraceWord { letters }))
}

/// A product of traces, stored sorted; the graded-symmetric monomial.
/// The empty product is the unit operator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct MultiTrace {
    traces: Vec<TraceWord>,
}

impl MultiTrace {
    pub fn unit() -> Self {
        MultiTrace::default()
    }

    pub fn traces(&self) -> &[TraceWord] {
        &self.traces
    }

    pub fn n_traces(&self) -> usize {
        self.traces.len()
    }

    pub fn n_letters(&self) -> usize {
        self.traces.iter().map(|t| t.len()).sum()
    }

    pub fn max_deriv(&self) -> usize {
        self.traces
            .iter()
            .flat_map(|t| t.letters())
            .map(|l| l.deriv as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn ghost(&self, ghosts: &[i32]) -> i32 {
        self.traces
            .iter()
            .flat_map(|t| t.letters())
            .map(|l| ghosts[l.field as usize])
            .sum()
    }

    /// Doubled conformal weight: sum of (ghost+1) + 2*deriv over letters.
    pub fn weight2(&self, ghosts: &[i32]) -> i32 {
        self.traces
            .iter()
            .flat_map(|t| t.letters())
            .map(|l| ghosts[l.field as usize] + 1 + 2 * l.deriv as i32)
            .sum()
    }

    pub fn parity(&self, parity: &[u8]) -> u8 {
        self.traces.iter().fold(0, |a, t| a ^ t.parity(parity))
    }
}

/// Sort canonical trace words into a canonical MultiTrace, accumulating the
/// Koszul sign of the reordering (odd traces anticommute). None when two
/// identical odd traces collide.
pub fn normalize_multitrace(
    words: &[(i32, TraceWord)],
    parity: &[u8],
) -> Option<(i32, MultiTrace)> {
    let mut sign: i32 = words.iter().map(|(s, _)| s).product();
    let mut tagged: Vec<(&TraceWord, u8)> = words
        .iter()
        .map(|(_, w)| (w, w.parity(parity)))
        .collect();
    // insertion sort, tracking odd-odd transpositions
    for i in 1..tagged.len() {
        let mut j = i;
        while j > 0 && tagged[j - 1].0 > tagged[j].0 {
            if tagged[j - 1].1 == 1 && tagged[j].1 == 1 {
                sign = -sign;
            }
            tagged.swap(j - 1, j);
            j -= 1;
        }
    }
    for pair in tagged.windows(2) {
        if pair[0].1 == 1 && pair[0].0 == pair[1].0 {
            return None;
        }
    }
    let traces = tagged.into_iter().map(|(w, _)| w.clone()).collect();
    Some((sign, MultiTrace { traces }))
}

/// Canonicalize a whole monomial from raw letter lists.
pub fn multitrace_from_letters(
    trace_letters: &[Vec<Letter>],
    parity: &[u8],
) -> Option<(i32, MultiTrace)> {
    let mut words = Vec::with_capacity(trace_letters.len());
    for letters in trace_letters {
        words.push(canonicalize_trace(letters, parity)?);
    }
    normalize_multitrace(&words, parity)
}

/// Linear combination of canonical monomials.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct OperatorSum {
    terms: BTreeMap<MultiTrace, GradedCoefficient>,
}

impl OperatorSum {
    pub fn zero() -> Self {
        OperatorSum::default()
    }

    /// The unit operator (image of the vacuum).
    pub fn unit() -> Self {
        let mut s = OperatorSum::default();
        s.add_term(MultiTrace::unit(), GradedCoefficient::one());
        s
    }

    pub fn from_monomial(m: MultiTrace, c: GradedCoefficient) -> Self {
        let mut s = OperatorSum::default();
        s.add_term(m, c);
        s
    }

    pub fn add_term(&mut self, m: MultiTrace, c: GradedCoefficient) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().add(&c);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiTrace, &GradedCoefficient)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &MultiTrace) -> GradedCoefficient {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| (m.clone(), c.neg()))
            .collect();
        OperatorSum { terms }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &GradedCoefficient) -> Self {
        let mut out = OperatorSum::default();
        for (m, x) in &self.terms {
            out.add_term(m.clone(), x.mul(c));
        }
        out
    }

    pub fn scale_rational(&self, r: &BigRational) -> Self {
        self.scale(&GradedCoefficient::from_rational(r.clone()))
    }

    pub fn map_coefficients(&self, f: impl Fn(&GradedCoefficient) -> GradedCoefficient) -> Self {
        let mut out = OperatorSum::default();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    /// The normally ordered product: graded-symmetric concatenation of trace
    /// multisets, term by term.
    pub fn normal_mul(&self, other: &Self, parity: &[u8]) -> Self {
        let mut out = OperatorSum::default();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let words: Vec<(i32, TraceWord)> = ma
                    .traces()
                    .iter()
                    .chain(mb.traces().iter())
                    .map(|w| (1, w.clone()))
                    .collect();
                if let Some((sign, m)) = normalize_multitrace(&words, parity) {
                    let mut c = ca.mul(cb);
                    if sign < 0 {
                        c = c.neg();
                    }
                    out.add_term(m, c);
                }
            }
        }
        out
    }

    /// Leibniz derivative: raise the derivative order of each letter in turn.
    pub fn derivative(&self, parity: &[u8]) -> Self {
        let mut out = OperatorSum::default();
        for (m, c) in &self.terms {
            for ti in 0..m.traces().len() {
                for li in 0..m.traces()[ti].len() {
                    let mut words: Vec<(i32, TraceWord)> = Vec::with_capacity(m.traces().len());
                    let mut ok = true;
                    for (tj, w) in m.traces().iter().enumerate() {
                        if tj != ti {
                            words.push((1, w.clone()));
                            continue;
                        }
                        let mut letters = w.letters().to_vec();
                        letters[li].deriv += 1;
                        match canonicalize_trace(&letters, parity) {
                            Some(sw) => words.push(sw),
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if !ok {
                        continue;
                    }
                    if let Some((sign, mt)) = normalize_multitrace(&words, parity) {
                        let mut cc = c.clone();
                        if sign < 0 {
                            cc = cc.neg();
                        }
                        out.add_term(mt, cc);
                    }
                }
            }
        }
        out
    }

    pub fn specialize_n(&self, n: &BigRational) -> Self {
        self.map_coefficients(|c| c.specialize_n(n))
    }

    pub fn specialize_hbar(&self, h: &BigRational) -> Self {
        self.map_coefficients(|c| c.specialize_hbar(h))
    }
}

/// All canonical nonzero monomials with at most `max_letters` letters, each
/// derivative order at most `max_deriv`, in a deterministic order. The unit
/// monomial is not included.
pub fn enumerate_basis(
    n_fields: usize,
    parity: &[u8],
    max_letters: usize,
    max_deriv: usize,
) -> Vec<MultiTrace> {
    let words = enumerate_trace_words(n_fields, parity, max_letters, max_deriv);
    let mut out = Vec::new();
    let mut stack: Vec<TraceWord> = Vec::new();
    fn rec(
        words: &[TraceWord],
        parity: &[u8],
        start: usize,
        budget: usize,
        stack: &mut Vec<TraceWord>,
        out: &mut Vec<MultiTrace>,
    ) {
        for i in start..words.len() {
            let w = &words[i];
            if w.len() > budget {
                continue;
            }
            // identical odd traces square to zero
            if w.parity(parity) == 1 && stack.last() == Some(w) {
                continue;
            }
            stack.push(w.clone());
            out.push(MultiTrace {
                traces: stack.clone(),
            });
            rec(words, parity, i, budget - w.len(), stack, out);
            stack.pop();
        }
    }
    rec(&words, parity, 0, max_letters, &mut stack, &mut out);
    out
}

/// All canonical nonzero monomials with ghost number and doubled weight
/// both exact. Every letter carries weight2 - ghost = 1 + 2*deriv >= 1, so
/// the sector holds at most weight2 - ghost letters and the enumeration
/// terminates without a letter cap from the caller. The unit monomial is
/// not included.
pub fn enumerate_sector(
    n_fields: usize,
    parity: &[u8],
    ghosts: &[i32],
    ghost: i32,
    weight2: i32,
) -> Vec<MultiTrace> {
    if weight2 < 0 || weight2 < ghost {
        return Vec::new();
    }
    let max_letters = (weight2 - ghost) as usize;
    if max_letters == 0 {
        return Vec::new();
    }
    let mut alphabet = Vec::new();
    for f in 0..n_fields {
        let mut d = 0i32;
        while ghosts[f] + 1 + 2 * d <= weight2 {
            alphabet.push(Letter::new(f, d as usize));
            d += 1;
        }
    }
    // single trace words within both budgets, tagged with their sector data
    let mut words: Vec<(TraceWord, i32, i32)> = Vec::new();
    let mut current: Vec<Letter> = Vec::new();
    fn word_rec(
        alphabet: &[Letter],
        parity: &[u8],
        ghosts: &[i32],
        len: usize,
        budget: i32,
        current: &mut Vec<Letter>,
        out: &mut Vec<(TraceWord, i32, i32)>,
    ) {
        if current.len() == len {
            if let Some((sign, w)) = canonicalize_trace(current, parity) {
                if sign == 1 && w.letters() == current.as_slice() {
                    let g = current.iter().map(|l| ghosts[l.field as usize]).sum();
                    out.push((w, budget, g));
                }
            }
            return;
        }
        for &l in alphabet {
            if !current.is_empty() && l < current[0] {
                continue;
            }
            let wt = ghosts[l.field as usize] + 1 + 2 * l.deriv as i32;
            if wt > budget {
                continue;
            }
            current.push(l);
            word_rec(alphabet, parity, ghosts, len, budget - wt, current, out);
            current.pop();
        }
    }
    for len in 1..=max_letters {
        let mut scratch = Vec::new();
        word_rec(
            &alphabet,
            parity,
            ghosts,
            len,
            weight2,
            &mut current,
            &mut scratch,
        );
        for (w, rest, g) in scratch {
            words.push((w, weight2 - rest, g));
        }
    }
    words.sort();
    let mut out = Vec::new();
    let mut stack: Vec<TraceWord> = Vec::new();
    fn rec(
        words: &[(TraceWord, i32, i32)],
        parity: &[u8],
        start: usize,
        letters_left: usize,
        weight_left: i32,
        ghost_acc: i32,
        target_ghost: i32,
        stack: &mut Vec<TraceWord>,
        out: &mut Vec<MultiTrace>,
    ) {
        for i in start..words.len() {
            let (w, wt, gh) = &words[i];
            if w.len() > letters_left || *wt > weight_left {
                continue;
            }
            // identical odd traces square to zero
            if w.parity(parity) == 1 && stack.last() == Some(w) {
                continue;
            }
            stack.push(w.clone());
            let weight_rem = weight_left - wt;
            let ghost_now = ghost_acc + gh;
            if weight_rem == 0 && ghost_now == target_ghost {
                out.push(MultiTrace {
                    traces: stack.clone(),
                });
            }
            rec(
                words,
                parity,
                i,
                letters_left - w.len(),
                weight_rem,
                ghost_now,
                target_ghost,
                stack,
                out,
            );
            stack.pop();
        }
    }
    rec(
        &words,
        parity,
        0,
        max_letters,
        weight2,
        0,
        ghost,
        &mut stack,
        &mut out,
    );
    out
}

/// All canonical nonzero single trace words within the bounds, sorted.
pub fn enumerate_trace_words(
    n_fields: usize,
    parity: &[u8],
    max_letters: usize,
    max_deriv: usize,
) -> Vec<TraceWord> {
    let mut alphabet = Vec::new();
    for f in 0..n_fields {
        for d in 0..=max_deriv {
            alphabet.push(Letter::new(f, d));
        }
    }
    let mut out = Vec::new();
    let mut current: Vec<Letter> = Vec::new();
    fn rec(
        alphabet: &[Letter],
        parity: &[u8],
        len: usize,
        current: &mut Vec<Letter>,
        out: &mut Vec<TraceWord>,
    ) {
        if current.len() == len {
            if let Some((sign, w)) = canonicalize_trace(current, parity) {
                if sign == 1 && w.letters() == current.as_slice() {
                    out.push(w);
                }
            }
            return;
        }
        for &l in alphabet {
            // the canonical rotation starts at a minimal letter
            if !current.is_empty() && l < current[0] {
                continue;
            }
            current.push(l);
            rec(alphabet, parity, len, current, out);
            current.pop();
        }
    }
    for len in 1..=max_letters {
        rec(&alphabet, parity, len, &mut current, &mut out);
    }
    out.sort();
    out
}

/// Render a letter as surface syntax, e.g. "c" or "d^2 Z1".
pub fn render_letter(l: &Letter, names: &[&str]) -> String {
    let name = names[l.field as usize];
    if l.deriv == 0 {
        name.to_string()
    } else {
        format!("d^{} {}", l.deriv, name)
    }
}

pub fn render_trace(w: &TraceWord, names: &[&str]) -> String {
    let parts: Vec<String> = w.letters().iter().map(|l| render_letter(l, names)).collect();
    format!("Tr({})", parts.join(", "))
}

pub fn render_multitrace(m: &MultiTrace, names: &[&str]) -> String {
    if m.traces().is_empty() {
        return "1".to_string();
    }
    let parts: Vec<String> = m.traces().iter().map(|w| render_trace(w, names)).collect();
    parts.join("*")
}

pub fn render_operator(x: &OperatorSum, names: &[&str]) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, (m, c)) in x.terms().enumerate() {
        let (sign, body) = render_term(m, c, names);
        if i == 0 {
            if sign < 0 {
                out.push('-');
            }
        } else if sign < 0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(&body);
    }
    out
}

/// Render one monomial; returns (sign, body) with the sign pulled out when
/// the coefficient is a single term.
fn render_term(m: &MultiTrace, c: &GradedCoefficient, names: &[&str]) -> (i32, String) {
    let mt = render_multitrace(m, names);
    if m.traces().is_empty() {
        // pure scalar term
        let s = c.to_string();
        return match s.strip_prefix('-') {
            Some(rest) if !rest.contains(" + ") && !rest.contains(" - ") => (-1, rest.to_string()),
            _ => (1, s),
        };
    }
    let terms: Vec<_> = c.terms().collect();
    if terms.len() == 1 {
        let one = GradedCoefficient::one();
        let minus_one = one.neg();
        if *c == one {
            return (1, mt);
        }
        if *c == minus_one {
            return (-1, mt);
        }
        let s = c.to_string();
        return match s.strip_prefix('-') {
            Some(rest) => (-1, format!("{}*{}", rest, mt)),
            None => (1, format!("{}*{}", s, mt)),
        };
    }
    (1, format!("({})*{}", c, mt))
}

pub fn operator_to_json(x: &OperatorSum, names: &[&str]) -> serde_json::Value {
    let terms: Vec<serde_json::Value> = x
        .terms()
        .map(|(m, c)| {
            let traces: Vec<serde_json::Value> = m
                .traces()
                .iter()
                .map(|w| {
                    let letters: Vec<serde_json::Value> = w
                        .letters()
                        .iter()
                        .map(|l| {
                            serde_json::json!({
                                "field": names[l.field as usize],
                                "deriv": l.deriv,
                            })
                        })
                        .collect();
                    serde_json::Value::Array(letters)
                })
                .collect();
            serde_json::json!({ "traces": traces, "coeff": c.to_json() })
        })
        .collect();
    serde_json::json!({ "terms": terms })
}

fn latex_name(name: &str) -> String {
    let trimmed = name.trim_end_matches(|c: char| c.is_ascii_digit());
    if trimmed.len() == name.len() || trimmed.is_empty() {
        name.to_string()
    } else {
        format!("{}_{{{}}}", trimmed, &name[trimmed.len()..])
    }
}

pub fn operator_to_latex(x: &OperatorSum, names: &[&str]) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    let render_mt = |m: &MultiTrace| -> String {
        if m.traces().is_empty() {
            return "\\mathbf{1}".to_string();
        }
        m.traces()
            .iter()
            .map(|w| {
                let letters: Vec<String> = w
                    .letters()
                    .iter()
                    .map(|l| {
                        let nm = latex_name(names[l.field as usize]);
                        match l.deriv {
                            0 => nm,
                            1 => format!("\\partial {}", nm),
                            k => format!("\\partial^{} {}", k, nm),
                        }
                    })
                    .collect();
                format!("\\operatorname{{Tr}}({})", letters.join("\\, "))
            })
            .collect::<Vec<_>>()
            .join("\\, ")
    };
    let mut parts = Vec::new();
    for (m, c) in x.terms() {
        if m.traces().is_empty() {
            parts.push(c.to_latex());
        } else if *c == GradedCoefficient::one() {
            parts.push(render_mt(m));
        } else {
            parts.push(format!("\\left({}\\right) {}", c.to_latex(), render_mt(m)));
        }
    }
    parts.join(" + ")
}

impl fmt::Display for FieldSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (ghost {})", self.name, self.ghost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // eps2-like field content: indices c=0, Z1=1, Z2=2, b=3
    const P: [u8; 4] = [1, 0, 0, 1];
    const C: usize = 0;
    const Z1: usize = 1;
    const Z2: usize = 2;
    const B: usize = 3;

    fn lt(f: usize, d: usize) -> Letter {
        Letter::new(f, d)
    }

    #[test]
    fn odd_square_traces_vanish() {
        assert!(canonicalize_trace(&[lt(B, 0), lt(B, 0)], &P).is_none());
        assert!(canonicalize_trace(&[lt(C, 0), lt(C, 0)], &P).is_none());
        assert!(canonicalize_trace(&[lt(C, 1), lt(C, 1)], &P).is_none());
        // Tr(ccc) survives: odd rotations cross an even number of letters
        assert!(canonicalize_trace(&[lt(C, 0), lt(C, 0), lt(C, 0)], &P).is_some());
    }

    #[test]
    fn even_rotation_free() {
        let (s, w) = canonicalize_trace(&[lt(Z2, 0), lt(Z1, 0)], &P).unwrap();
        assert_eq!(s, 1);
        assert_eq!(w.letters(), &[lt(Z1, 0), lt(Z2, 0)]);
    }

    #[test]
    fn odd_rotation_sign() {
        // Tr(dc c) = -Tr(c dc)
        let (s, w) = canonicalize_trace(&[lt(C, 1), lt(C, 0)], &P).unwrap();
        assert_eq!(s, -1);
        assert_eq!(w.letters(), &[lt(C, 0), lt(C, 1)]);
    }

    #[test]
    fn canonicalize_idempotent() {
        let (_, w) = canonicalize_trace(&[lt(B, 0), lt(C, 0), lt(C, 0)], &P).unwrap();
        let (s2, w2) = canonicalize_trace(w.letters(), &P).unwrap();
        assert_eq!(s2, 1);
        assert_eq!(w, w2);
    }

    #[test]
    fn rotation_sign_matches_permutation_parity() {
        // stepwise rotation signs against a direct inversion count among odd letters
        let words: Vec<Vec<Letter>> = vec![
            vec![lt(B, 0), lt(C, 0), lt(C, 0)],
            vec![lt(C, 1), lt(C, 0), lt(Z1, 0)],
            vec![lt(B, 1), lt(Z1, 0), lt(C, 0), lt(Z2, 1)],
        ];
        for w in words {
            let n = w.len();
            let mut stepwise = 1;
            let mut cur = w.clone();
            for r in 0..n {
                // oracle: permutation sending original position i to (i - r) mod n;
                // Koszul sign = parity of inversions among odd letters
                let mut inv = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        let pi = (i + n - r) % n;
                        let pj = (j + n - r) % n;
                        if pi > pj && P[w[i].field as usize] == 1 && P[w[j].field as usize] == 1 {
                            inv += 1;
                        }
                    }
                }
                let oracle = if inv % 2 == 0 { 1 } else { -1 };
                assert_eq!(stepwise, oracle, "word {:?} rotation {}", w, r);
                stepwise *= single_rotation_sign(&cur, &P);
                cur.rotate_left(1);
            }
        }
    }

    #[test]
    fn multitrace_normalization() {
        let tr_c = canonicalize_trace(&[lt(C, 0)], &P).unwrap().1;
        let tr_dc = canonicalize_trace(&[lt(C, 1)], &P).unwrap().1;
        let tr_z12 = canonicalize_trace(&[lt(Z1, 0), lt(Z2, 0)], &P).unwrap().1;
        let tr_z1 = canonicalize_trace(&[lt(Z1, 0)], &P).unwrap().1;

        // odd trace squared
        assert!(normalize_multitrace(&[(1, tr_c.clone()), (1, tr_c.clone())], &P).is_none());

        // even traces commute
        let a = normalize_multitrace(&[(1, tr_z12.clone()), (1, tr_z1.clone())], &P).unwrap();
        let b = normalize_multitrace(&[(1, tr_z1.clone()), (1, tr_z12.clone())], &P).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, 1);

        // odd traces anticommute
        let ab = normalize_multitrace(&[(1, tr_dc.clone()), (1, tr_c.clone())], &P).unwrap();
        let ba = normalize_multitrace(&[(1, tr_c), (1, tr_dc)], &P).unwrap();
        assert_eq!(ab.1, ba.1);
        assert_eq!(ab.0 * ba.0, -1);
    }

    #[test]
    fn derivative_leibniz() {
        let names = ["c", "Z1", "Z2", "b"];
        let (_, z1) = multitrace_from_letters(&[vec![lt(Z1, 0)]], &P).unwrap();
        let x = OperatorSum::from_monomial(z1, GradedCoefficient::one());
        let dx = x.derivative(&P);
        assert_eq!(render_operator(&dx, &names), "Tr(d^1 Z1)");

        assert!(OperatorSum::unit().derivative(&P).is_zero());

        let (_, z12) = multitrace_from_letters(&[vec![lt(Z1, 0), lt(Z2, 0)]], &P).unwrap();
        let x = OperatorSum::from_monomial(z12, GradedCoefficient::one());
        let dx = x.derivative(&P);
        assert_eq!(dx.n_terms(), 2);
        assert_eq!(
            render_operator(&dx, &names),
            "Tr(Z1, d^1 Z2) + Tr(d^1 Z1, Z2)"
        );
    }

    #[test]
    fn basis_enumeration() {
        // single even field
        let basis = enumerate_basis(1, &[0], 1, 0);
        assert_eq!(basis.len(), 1);

        // single odd field: Tr(c) only; Tr(cc) and Tr(c)Tr(c) vanish
        let basis = enumerate_basis(1, &[1], 2, 0);
        assert_eq!(basis.len(), 1);
        assert_eq!(basis[0].n_letters(), 1);

        // two even fields, two letters: 5 single traces + 3 double products
        let basis = enumerate_basis(2, &[0, 0], 2, 0);
        assert_eq!(basis.len(), 8);
    }

    #[test]
    fn sector_enumeration_matches_box_filtering() {
        use std::collections::BTreeSet;
        let ghosts = [-1, 0, 0, 1];
        // a box wide enough to contain each tested sector outright: a sector
        // of ghost g and weight w has at most w - g letters and w/2 derivs
        let all = enumerate_basis(4, &P, 6, 2);
        for (g, w) in [(-1, 0), (-2, 0), (0, 2), (-1, 2), (1, 2), (0, 4), (2, 4), (-4, 2)] {
            let sector = enumerate_sector(4, &P, &ghosts, g, w);
            assert!(sector
                .iter()
                .all(|m| m.n_letters() <= 6 && m.max_deriv() <= 2));
            let from_sector: BTreeSet<MultiTrace> = sector.into_iter().collect();
            let from_box: BTreeSet<MultiTrace> = all
                .iter()
                .filter(|m| m.ghost(&ghosts) == g && m.weight2(&ghosts) == w)
                .cloned()
                .collect();
            assert_eq!(from_sector, from_box, "sector ({g}, {w})");
        }
    }

    #[test]
    fn ghost_additive_and_derivative_preserves_it() {
        let ghosts = [-1, 0, 0, 1];
        let (_, m) = multitrace_from_letters(&[vec![lt(B, 0), lt(C, 0), lt(C, 0)]], &P).unwrap();
        assert_eq!(m.ghost(&ghosts), -1);
        let x = OperatorSum::from_monomial(m, GradedCoefficient::one());
        for (mt, _) in x.derivative(&P).terms() {
            assert_eq!(mt.ghost(&ghosts), -1);
        }
    }

    #[test]
    fn pairing_table_validation() {
        let fields = vec![
            FieldSymbol { name: "c".into(), ghost: -1 },
            FieldSymbol { name: "b".into(), ghost: 1 },
        ];
        let one = BigRational::one();
        let zero = BigRational::zero();
        // odd-odd entries must be symmetric
        let good = PairingTable::new(
            fields.clone(),
            vec![vec![zero.clone(), one.clone()], vec![one.clone(), zero.clone()]],
        );
        assert!(good.is_ok());
        let bad = PairingTable::new(
            fields.clone(),
            vec![vec![zero.clone(), one.clone()], vec![-one.clone(), zero.clone()]],
        );
        assert!(matches!(bad, Err(AlgebraError::NotGradedAntisymmetric(_, _))));
        let degenerate = PairingTable::new(
            fields,
            vec![vec![zero.clone(), zero.clone()], vec![zero.clone(), zero.clone()]],
        );
        assert!(matches!(degenerate, Err(AlgebraError::DegeneratePairing(_))));
    }
}
