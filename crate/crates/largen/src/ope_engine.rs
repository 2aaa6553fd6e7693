//! Wick-contraction OPE engine.
//!
//! The singular product of two normally ordered multi-trace operators is a
//! sum over nonempty cross-operator contraction sets. Each set contributes
//! hbar^{#pairs} N^{#loops} times the product of two-point values, times a
//! Koszul sign, times the surgered bilocal operator; surviving first-point
//! letters are then Taylor-expanded at the second point.
//!
//! Index surgery: contracting letters X, Y deletes both and reconnects their
//! trace neighbors through the delta-index rule <X_{ij} Y_{kl}> ~ d_{il} d_{jk}.
//! Cycles emptied of letters become loops, each worth one factor of N.
//!
//! Sign bookkeeping (asserted order-independent by tests, not assumed):
//! linearize A's traces then B's, each trace read from its canonical start;
//! bring each contracted pair adjacent (partner moves left past the letters
//! strictly between), remove it, and finally reorder the survivors into the
//! surgered cycle order, counting odd-letter inversions.

use crate::operator_algebra::{
    multitrace_from_letters, Letter, MultiTrace, OperatorSum, PairingTable,
};
use crate::scalars::{GradedCoefficient, ScalarError};
use num::bigint::BigInt;
use num::{BigRational, One, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

/// Environment variable overriding the diagram-oracle size guard (total
/// letter count; default 8).
pub const ORACLE_SIZE_ENV: &str = "LARGEN_DIAGRAM_ORACLE_MAX_LETTERS";

const ORACLE_SIZE_DEFAULT: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid contraction set: {0}")]
    InvalidContractionSet(String),
    #[error("operator pair has {letters} letters; diagram oracle refuses above {limit} (set {ORACLE_SIZE_ENV} to raise)")]
    OracleSizeExceeded { letters: usize, limit: usize },
    #[error("borcherds summation exceeded cutoff {0} while terms remain")]
    Inconclusive(usize),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// Singular part of an OPE: pole order -> coefficient operator at the second
/// insertion point.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct OPEResult {
    poles: BTreeMap<u32, OperatorSum>,
}

impl OPEResult {
    pub fn is_zero(&self) -> bool {
        self.poles.is_empty()
    }

    pub fn pole(&self, p: u32) -> OperatorSum {
        self.poles.get(&p).cloned().unwrap_or_default()
    }

    pub fn poles(&self) -> impl Iterator<Item = (&u32, &OperatorSum)> {
        self.poles.iter()
    }

    pub fn max_pole(&self) -> u32 {
        self.poles.keys().next_back().copied().unwrap_or(0)
    }

    fn add_term(&mut self, pole: u32, m: MultiTrace, c: GradedCoefficient) {
        if c.is_zero() {
            return;
        }
        let entry = self.poles.entry(pole).or_default();
        entry.add_term(m, c);
        if entry.is_zero() {
            self.poles.remove(&pole);
        }
    }

    pub fn map_operators(&self, f: impl Fn(&OperatorSum) -> OperatorSum) -> OPEResult {
        let mut out = OPEResult::default();
        for (p, op) in &self.poles {
            let mapped = f(op);
            if !mapped.is_zero() {
                out.poles.insert(*p, mapped);
            }
        }
        out
    }
}

/// Two-point value of one contracted pair: x at the first point, y at the
/// second. None when the fields do not pair.
pub fn contract_pair(x: Letter, y: Letter, table: &PairingTable) -> Option<(BigRational, u32)> {
    let w = table.omega(x.field as usize, y.field as usize);
    if w.is_zero() {
        return None;
    }
    let (dx, dy) = (x.deriv as u32, y.deriv as u32);
    let mut value = w * factorial(dx + dy);
    if dx % 2 == 1 {
        value = -value;
    }
    Some((value, dx + dy + 1))
}

pub fn factorial(k: u32) -> BigRational {
    let mut acc = BigInt::from(1);
    for i in 2..=k as u64 {
        acc *= i;
    }
    BigRational::from_integer(acc)
}

/// Generalized binomial coefficient C(m, n) for integer m, natural n.
pub fn binomial(m: i64, n: u32) -> BigRational {
    let mut num = BigInt::from(1);
    for i in 0..n as i64 {
        num *= m - i;
    }
    BigRational::new(num, factorial(n).to_integer())
}

/// Linearized view of a monomial pair: A's letters then B's, each trace read
/// from its canonical rotation start.
struct Lin {
    letters: Vec<Letter>,
    parity: Vec<u8>,
    trace_of: Vec<usize>,
    next_slot: Vec<usize>,
    n_a: usize,
    n_a_traces: usize,
    n_traces: usize,
}

fn linearize(ma: &MultiTrace, mb: &MultiTrace, table: &PairingTable) -> Lin {
    let fp = table.parities();
    let mut letters = Vec::new();
    let mut parity = Vec::new();
    let mut trace_of = Vec::new();
    let mut next_slot = Vec::new();
    let mut trace_idx = 0;
    for m in [ma, mb] {
        for w in m.traces() {
            let start = letters.len();
            let n = w.len();
            for (i, &l) in w.letters().iter().enumerate() {
                letters.push(l);
                parity.push(fp[l.field as usize]);
                trace_of.push(trace_idx);
                next_slot.push(start + (i + 1) % n);
            }
            trace_idx += 1;
        }
    }
    Lin {
        letters,
        parity,
        trace_of,
        next_slot,
        n_a: ma.n_letters(),
        n_a_traces: ma.n_traces(),
        n_traces: trace_idx,
    }
}

/// All nonempty contraction sets between the letters of `ma` and `mb`,
/// each as (a_slot, b_slot) pairs sorted by a_slot. Slots index the letters
/// of each operand in linearized order.
pub fn enumerate_contraction_sets(
    ma: &MultiTrace,
    mb: &MultiTrace,
    table: &PairingTable,
) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for_each_contraction_set(ma, mb, table, |set| out.push(set.to_vec()));
    out
}

fn for_each_contraction_set(
    ma: &MultiTrace,
    mb: &MultiTrace,
    table: &PairingTable,
    mut f: impl FnMut(&[(usize, usize)]),
) {
    let a_letters: Vec<Letter> = ma.traces().iter().flat_map(|t| t.letters()).copied().collect();
    let b_letters: Vec<Letter> = mb.traces().iter().flat_map(|t| t.letters()).copied().collect();
    let mut used_b = vec![false; b_letters.len()];
    let mut set: Vec<(usize, usize)> = Vec::new();
    fn rec(
        a_letters: &[Letter],
        b_letters: &[Letter],
        table: &PairingTable,
        i: usize,
        used_b: &mut Vec<bool>,
        set: &mut Vec<(usize, usize)>,
        f: &mut impl FnMut(&[(usize, usize)]),
    ) {
        if i == a_letters.len() {
            if !set.is_empty() {
                f(set);
            }
            return;
        }
        rec(a_letters, b_letters, table, i + 1, used_b, set, f);
        for j in 0..b_letters.len() {
            if used_b[j] {
                continue;
            }
            if table
                .omega(a_letters[i].field as usize, b_letters[j].field as usize)
                .is_zero()
            {
                continue;
            }
            used_b[j] = true;
            set.push((i, j));
            rec(a_letters, b_letters, table, i + 1, used_b, set, f);
            set.pop();
            used_b[j] = false;
        }
    }
    rec(
        &a_letters,
        &b_letters,
        table,
        0,
        &mut used_b,
        &mut set,
        &mut f,
    );
}

/// Structural outcome of surgering one contraction set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlueResult {
    pub loops: u32,
    pub sign: i32,
    /// Surgered cycles: letters tagged true when they sit at the first point.
    /// Spectator traces appear unchanged (all letters tagged by their side).
    pub bilocal: Vec<Vec<(Letter, bool)>>,
    /// Output cycles made of letters from contracted traces (loop faces not
    /// included); used by the genus count.
    pub touched_cycles: usize,
    pub touched_a_traces: usize,
    pub touched_b_traces: usize,
    /// Whether the contraction pairs connect all touched traces.
    pub connected: bool,
}

fn validate_set(lin: &Lin, set: &[(usize, usize)], table: &PairingTable) -> Result<(), EngineError> {
    let n_b = lin.letters.len() - lin.n_a;
    let mut seen_a = vec![false; lin.n_a];
    let mut seen_b = vec![false; n_b];
    if set.is_empty() {
        return Err(EngineError::InvalidContractionSet("empty set".into()));
    }
    for &(x, y) in set {
        if x >= lin.n_a || y >= n_b {
            return Err(EngineError::InvalidContractionSet(format!(
                "slot pair ({x}, {y}) out of range"
            )));
        }
        if seen_a[x] || seen_b[y] {
            return Err(EngineError::InvalidContractionSet(format!(
                "slot reused in pair ({x}, {y})"
            )));
        }
        seen_a[x] = true;
        seen_b[y] = true;
        if table
            .omega(
                lin.letters[x].field as usize,
                lin.letters[lin.n_a + y].field as usize,
            )
            .is_zero()
        {
            return Err(EngineError::InvalidContractionSet(format!(
                "pair ({x}, {y}) has vanishing two-point function"
            )));
        }
    }
    Ok(())
}

/// Perform index surgery for one contraction set, returning loops, the
/// Koszul sign, and the bilocal cycles. Pair values are not included; they
/// come from [`contract_pair`].
pub fn glue(
    ma: &MultiTrace,
    mb: &MultiTrace,
    set: &[(usize, usize)],
    table: &PairingTable,
) -> Result<GlueResult, EngineError> {
    let lin = linearize(ma, mb, table);
    let mut sorted = set.to_vec();
    sorted.sort();
    validate_set(&lin, &sorted, table)?;
    Ok(surgery(&lin, &sorted))
}

fn surgery(lin: &Lin, set: &[(usize, usize)]) -> GlueResult {
    let n = lin.letters.len();
    // pair-adjacency sign: process pairs leftmost-first, partner crosses the
    // still-alive letters strictly between
    let mut alive = vec![true; n];
    let mut sign = 1i32;
    let mut partner: Vec<Option<usize>> = vec![None; n];
    for &(x, yb) in set {
        let y = lin.n_a + yb;
        debug_assert_eq!(lin.parity[x], lin.parity[y], "pairing crosses parities");
        if lin.parity[y] == 1 {
            let odd_between = (x + 1..y)
                .filter(|&s| alive[s] && lin.parity[s] == 1)
                .count();
            if odd_between % 2 == 1 {
                sign = -sign;
            }
        }
        alive[x] = false;
        alive[y] = false;
        partner[x] = Some(y);
        partner[y] = Some(x);
    }

    // surviving successor structure
    let successor = |s: usize| -> usize {
        let mut t = lin.next_slot[s];
        while let Some(p) = partner[t] {
            t = lin.next_slot[p];
        }
        t
    };
    let mut cycles_slots: Vec<Vec<usize>> = Vec::new();
    let mut visited = vec![false; n];
    for s in 0..n {
        if !alive[s] || visited[s] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut cur = s;
        loop {
            visited[cur] = true;
            cycle.push(cur);
            cur = successor(cur);
            if cur == s {
                break;
            }
        }
        cycles_slots.push(cycle);
    }

    // assembly sign: survivors in linear order -> concatenated cycle order
    let flat: Vec<usize> = cycles_slots.iter().flatten().copied().collect();
    let mut pos = vec![0usize; n];
    for (p, &s) in flat.iter().enumerate() {
        pos[s] = p;
    }
    let mut inversions = 0usize;
    for i in 0..flat.len() {
        for j in 0..flat.len() {
            let (si, sj) = (flat[i], flat[j]);
            if si < sj && pos[si] > pos[sj] && lin.parity[si] == 1 && lin.parity[sj] == 1 {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 1 {
        sign = -sign;
    }

    // loops: union-find over index ports; in(s) = 2s, out(s) = 2s+1
    let mut uf = crate::deligne_diagrams::UnionFind::new(2 * n);
    for s in 0..n {
        uf.union(2 * s + 1, 2 * lin.next_slot[s]);
    }
    for &(x, yb) in set {
        let y = lin.n_a + yb;
        uf.union(2 * x, 2 * y + 1);
        uf.union(2 * x + 1, 2 * y);
    }
    let mut boundary = vec![false; 2 * n];
    for s in 0..n {
        if alive[s] {
            boundary[uf.find(2 * s)] = true;
            boundary[uf.find(2 * s + 1)] = true;
        }
    }
    let mut loop_roots: Vec<usize> = Vec::new();
    for s in 0..n {
        if alive[s] {
            continue;
        }
        for port in [2 * s, 2 * s + 1] {
            let r = uf.find(port);
            if !boundary[r] && !loop_roots.contains(&r) {
                loop_roots.push(r);
            }
        }
    }

    // touched traces and connectivity of the contraction graph
    let mut touched: Vec<usize> = Vec::new();
    let mut trace_uf = crate::deligne_diagrams::UnionFind::new(lin.n_traces);
    for &(x, yb) in set {
        let (ta, tb) = (lin.trace_of[x], lin.trace_of[lin.n_a + yb]);
        trace_uf.union(ta, tb);
        for t in [ta, tb] {
            if !touched.contains(&t) {
                touched.push(t);
            }
        }
    }
    let root0 = trace_uf.find(touched[0]);
    let connected = touched.iter().all(|&t| trace_uf.find(t) == root0);
    let touched_a_traces = touched.iter().filter(|&&t| t < lin.n_a_traces).count();
    let touched_b_traces = touched.len() - touched_a_traces;
    let touched_cycles = cycles_slots
        .iter()
        .filter(|c| touched.contains(&lin.trace_of[c[0]]))
        .count();

    let bilocal = cycles_slots
        .iter()
        .map(|c| {
            c.iter()
                .map(|&s| (lin.letters[s], s < lin.n_a))
                .collect::<Vec<_>>()
        })
        .collect();
    GlueResult {
        loops: loop_roots.len() as u32,
        sign,
        bilocal,
        touched_cycles,
        touched_a_traces,
        touched_b_traces,
        connected,
    }
}

/// Genus-0 planarity of one contraction set: the pairs connect exactly one
/// trace of each operand and the ribbon graph has Euler characteristic 2.
pub fn contraction_set_planar_genus(
    ma: &MultiTrace,
    mb: &MultiTrace,
    set: &[(usize, usize)],
    table: &PairingTable,
) -> bool {
    let g = glue(ma, mb, set, table).expect("valid contraction set");
    let faces = g.loops as usize + g.touched_cycles;
    g.connected && g.touched_a_traces == 1 && g.touched_b_traces == 1 && faces == set.len()
}

/// Iterative planarity: some ordering contracts a first pair joining the two
/// traces and every later pair inside the current cycle (noncrossing chords;
/// a pair straddling two cycles produced by an earlier split is crossing).
pub fn contraction_set_planar_iterative(
    ma: &MultiTrace,
    mb: &MultiTrace,
    set: &[(usize, usize)],
    table: &PairingTable,
) -> bool {
    let lin = linearize(ma, mb, table);
    // initial cycles of global slots
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    {
        let mut seen = vec![false; lin.letters.len()];
        for s in 0..lin.letters.len() {
            if seen[s] {
                continue;
            }
            let mut c = vec![s];
            seen[s] = true;
            let mut cur = lin.next_slot[s];
            while cur != s {
                seen[cur] = true;
                c.push(cur);
                cur = lin.next_slot[cur];
            }
            cycles.push(c);
        }
    }
    let pairs: Vec<(usize, usize)> = set.iter().map(|&(x, y)| (x, lin.n_a + y)).collect();
    fn splice(cycles: &[Vec<usize>], x: usize, y: usize) -> Option<Vec<Vec<usize>>> {
        let ci = cycles.iter().position(|c| c.contains(&x))?;
        let cj = cycles.iter().position(|c| c.contains(&y))?;
        let px = cycles[ci].iter().position(|&s| s == x).unwrap();
        let py = cycles[cj].iter().position(|&s| s == y).unwrap();
        let mut out: Vec<Vec<usize>> = Vec::new();
        if ci != cj {
            // merge: next(x).. prev(x) then next(y).. prev(y)
            let a = &cycles[ci];
            let b = &cycles[cj];
            let mut merged = Vec::with_capacity(a.len() + b.len() - 2);
            for k in 1..a.len() {
                merged.push(a[(px + k) % a.len()]);
            }
            for k in 1..b.len() {
                merged.push(b[(py + k) % b.len()]);
            }
            for (k, c) in cycles.iter().enumerate() {
                if k != ci && k != cj {
                    out.push(c.clone());
                }
            }
            out.push(merged);
        } else {
            // split into the two arcs between x and y
            let c = &cycles[ci];
            let n = c.len();
            let mut arc1 = Vec::new();
            let mut k = (px + 1) % n;
            while k != py {
                arc1.push(c[k]);
                k = (k + 1) % n;
            }
            let mut arc2 = Vec::new();
            let mut k = (py + 1) % n;
            while k != px {
                arc2.push(c[k]);
                k = (k + 1) % n;
            }
            for (k, cc) in cycles.iter().enumerate() {
                if k != ci {
                    out.push(cc.clone());
                }
            }
            if !arc1.is_empty() {
                out.push(arc1);
            }
            if !arc2.is_empty() {
                out.push(arc2);
            }
        }
        Some(out)
    }
    fn search(cycles: &[Vec<usize>], remaining: &[(usize, usize)], first_done: bool) -> bool {
        if remaining.is_empty() {
            return true;
        }
        for (i, &(x, y)) in remaining.iter().enumerate() {
            let ci = cycles.iter().position(|c| c.contains(&x)).unwrap();
            let cj = cycles.iter().position(|c| c.contains(&y)).unwrap();
            let ok = if !first_done {
                ci != cj
            } else {
                ci == cj
            };
            if !ok {
                continue;
            }
            let next = splice(cycles, x, y).unwrap();
            let rest: Vec<(usize, usize)> = remaining
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, &p)| p)
                .collect();
            if search(&next, &rest, true) {
                return true;
            }
        }
        false
    }
    search(&cycles, &pairs, false)
}

/// Enumerate compositions of `total` into `parts` nonnegative summands.
fn for_each_composition(total: u32, parts: usize, mut f: impl FnMut(&[u32])) {
    if parts == 0 {
        if total == 0 {
            f(&[]);
        }
        return;
    }
    let mut current = vec![0u32; parts];
    fn rec(total: u32, idx: usize, current: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
        if idx == current.len() - 1 {
            current[idx] = total;
            f(current);
            return;
        }
        for v in 0..=total {
            current[idx] = v;
            rec(total - v, idx + 1, current, f);
        }
    }
    rec(total, 0, &mut current, &mut f);
}

/// Expand one bilocal at Taylor order `m` (total extra derivatives spread
/// over first-point letters) and hand each canonical term to the sink.
fn expand_at_order(
    bilocal: &[Vec<(Letter, bool)>],
    parity: &[u8],
    m: u32,
    mut sink: impl FnMut(MultiTrace, BigRational),
) {
    let z_positions: Vec<(usize, usize)> = bilocal
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            c.iter()
                .enumerate()
                .filter(|(_, (_, at_z))| *at_z)
                .map(move |(li, _)| (ci, li))
        })
        .collect();
    for_each_composition(m, z_positions.len(), |assignment| {
        let mut traces: Vec<Vec<Letter>> = bilocal
            .iter()
            .map(|c| c.iter().map(|(l, _)| *l).collect())
            .collect();
        let mut factor = BigRational::one();
        for (k, &(ci, li)) in z_positions.iter().enumerate() {
            traces[ci][li].deriv += assignment[k] as u16;
            factor /= factorial(assignment[k]);
        }
        if let Some((sign, mt)) = multitrace_from_letters(&traces, parity) {
            if sign < 0 {
                factor = -factor;
            }
            sink(mt, factor);
        }
    });
}

struct SetContribution {
    base: GradedCoefficient,
    pole: u32,
    bilocal: Vec<Vec<(Letter, bool)>>,
}

/// Evaluate one contraction set: combined scalar prefactor (sign, pair
/// values, hbar and N powers), total pole, and the bilocal.
fn evaluate_set(lin: &Lin, set: &[(usize, usize)], table: &PairingTable) -> SetContribution {
    let g = surgery(lin, set);
    let mut value = BigRational::from_integer(BigInt::from(g.sign));
    let mut pole = 0;
    for &(x, yb) in set {
        let (v, p) = contract_pair(lin.letters[x], lin.letters[lin.n_a + yb], table)
            .expect("enumerator produced a non-contractible pair");
        value *= v;
        pole += p;
    }
    let base = GradedCoefficient::monomial([0, set.len() as i32, g.loops as i32, 0], value);
    SetContribution {
        base,
        pole,
        bilocal: g.bilocal,
    }
}

/// Full singular OPE restricted to contraction sets accepted by `keep`.
pub fn singular_ope_where(
    a: &OperatorSum,
    b: &OperatorSum,
    table: &PairingTable,
    keep: impl Fn(&MultiTrace, &MultiTrace, &[(usize, usize)]) -> bool,
) -> OPEResult {
    let parity = table.parities();
    let mut out = OPEResult::default();
    for (ma, ca) in a.terms() {
        for (mb, cb) in b.terms() {
            let cab = ca.mul(cb);
            let lin = linearize(ma, mb, table);
            for_each_contraction_set(ma, mb, table, |set| {
                if !keep(ma, mb, set) {
                    return;
                }
                let contrib = evaluate_set(&lin, set, table);
                let scaled = contrib.base.mul(&cab);
                for m in 0..contrib.pole {
                    let pole = contrib.pole - m;
                    expand_at_order(&contrib.bilocal, &parity, m, |mt, factor| {
                        out.add_term(pole, mt, scaled.scale(&factor));
                    });
                }
            });
        }
    }
    out
}

pub fn singular_ope(a: &OperatorSum, b: &OperatorSum, table: &PairingTable) -> OPEResult {
    singular_ope_where(a, b, table, |_, _, _| true)
}

/// Singular OPE keeping only planar contraction sets (genus-0 predicate).
pub fn planar_singular_ope(a: &OperatorSum, b: &OperatorSum, table: &PairingTable) -> OPEResult {
    singular_ope_where(a, b, table, |ma, mb, set| {
        contraction_set_planar_genus(ma, mb, set, table)
    })
}

/// Coefficient of (z-w)^k in the full (singular plus regular) product of
/// a(z) b(w). For k >= 0 this includes the normally ordered term
/// :(d^k a / k!) b:.
pub fn ope_power_coefficient(
    a: &OperatorSum,
    b: &OperatorSum,
    k: i64,
    table: &PairingTable,
) -> OperatorSum {
    let parity = table.parities();
    let mut out = OperatorSum::zero();
    if k >= 0 {
        let mut da = a.clone();
        for _ in 0..k {
            da = da.derivative(&parity);
        }
        let da = da.scale_rational(&factorial(k as u32).recip());
        out = out.add(&da.normal_mul(b, &parity));
    }
    for (ma, ca) in a.terms() {
        for (mb, cb) in b.terms() {
            let cab = ca.mul(cb);
            let lin = linearize(ma, mb, table);
            for_each_contraction_set(ma, mb, table, |set| {
                let contrib = evaluate_set(&lin, set, table);
                let m = contrib.pole as i64 + k;
                if m < 0 {
                    return;
                }
                let scaled = contrib.base.mul(&cab);
                expand_at_order(&contrib.bilocal, &parity, m as u32, |mt, factor| {
                    out.add_term(mt, scaled.scale(&factor));
                });
            });
        }
    }
    out
}

/// The n-th mode product a_(n) b.
pub fn mode_product(a: &OperatorSum, n: i64, b: &OperatorSum, table: &PairingTable) -> OperatorSum {
    ope_power_coefficient(a, b, -n - 1, table)
}

fn operator_parity(x: &OperatorSum, parity: &[u8]) -> Option<u8> {
    let mut it = x.terms().map(|(m, _)| m.parity(parity));
    let first = it.next()?;
    if it.all(|p| p == first) {
        Some(first)
    } else {
        None
    }
}

/// Verify a_(n) b = (-1)^{p_a p_b + 1} sum_j (-1)^{n+j} d^j/j! (b_(n+j) a).
pub fn skew_symmetry_check(
    a: &OperatorSum,
    b: &OperatorSum,
    n: i64,
    table: &PairingTable,
) -> bool {
    let parity = table.parities();
    if a.is_zero() || b.is_zero() {
        return true;
    }
    let pa = operator_parity(a, &parity).expect("a not parity-homogeneous");
    let pb = operator_parity(b, &parity).expect("b not parity-homogeneous");
    let lhs = mode_product(a, n, b, table);
    let max_pole = singular_ope(b, a, table).max_pole() as i64;
    let mut rhs = OperatorSum::zero();
    let j_max = (max_pole - n - 1).max(-n - 1).max(0);
    for j in 0..=j_max {
        let mut term = mode_product(b, n + j, a, table);
        if term.is_zero() {
            continue;
        }
        for _ in 0..j {
            term = term.derivative(&parity);
        }
        let mut c = factorial(j as u32).recip();
        if (n + j) % 2 != 0 {
            c = -c;
        }
        rhs = rhs.add(&term.scale_rational(&c));
    }
    if pa * pb == 0 {
        rhs = rhs.neg();
    }
    lhs == rhs
}

/// Evaluate both sides of the Borcherds identity for modes (m, k, l) and
/// compare exactly. The cutoff bounds the summation indices; exceeding it
/// while terms could remain yields the inconclusive error.
pub fn borcherds_check(
    a: &OperatorSum,
    b: &OperatorSum,
    c: &OperatorSum,
    m: i64,
    k: i64,
    l: i64,
    cutoff: usize,
    table: &PairingTable,
) -> Result<bool, EngineError> {
    let parity = table.parities();
    let pa = operator_parity(a, &parity).unwrap_or(0);
    let pb = operator_parity(b, &parity).unwrap_or(0);

    let p_ab = singular_ope(a, b, table).max_pole() as i64;
    let p_bc = singular_ope(b, c, table).max_pole() as i64;
    let p_ac = singular_ope(a, c, table).max_pole() as i64;

    // LHS: sum_{n>=0} C(m,n) (a_(n+l) b)_(m+k-n) c
    let mut n_max = (p_ab - l - 1).max(-l - 1).max(0);
    if m >= 0 {
        // C(m, n) vanishes past n = m
        n_max = n_max.min(m);
    }
    if n_max as usize > cutoff {
        return Err(EngineError::Inconclusive(cutoff));
    }
    let mut lhs = OperatorSum::zero();
    for n in 0..=n_max {
        let coeff = binomial(m, n as u32);
        if coeff.is_zero() {
            continue;
        }
        let inner = mode_product(a, n + l, b, table);
        if inner.is_zero() {
            continue;
        }
        let outer = mode_product(&inner, m + k - n, c, table);
        lhs = lhs.add(&outer.scale_rational(&coeff));
    }

    // RHS: sum_{j>=0} C(l,j) (-1)^j [ a_(m+l-j) (b_(k+j) c)
    //                                 - (-1)^l (-1)^{p_a p_b} b_(k+l-j) (a_(m+j) c) ]
    let j_bound_1 = (p_bc - k - 1).max(-k - 1).max(0);
    let j_bound_2 = (p_ac - m - 1).max(-m - 1).max(0);
    let j_max = if l >= 0 {
        l
    } else {
        j_bound_1.max(j_bound_2)
    };
    if j_max as usize > cutoff {
        return Err(EngineError::Inconclusive(cutoff));
    }
    let mut rhs = OperatorSum::zero();
    for j in 0..=j_max {
        let mut coeff = binomial(l, j as u32);
        if coeff.is_zero() {
            continue;
        }
        if j % 2 != 0 {
            coeff = -coeff;
        }
        let bc = mode_product(b, k + j, c, table);
        if !bc.is_zero() {
            let t1 = mode_product(a, m + l - j, &bc, table);
            rhs = rhs.add(&t1.scale_rational(&coeff));
        }
        let ac = mode_product(a, m + j, c, table);
        if !ac.is_zero() {
            let t2 = mode_product(b, k + l - j, &ac, table);
            let mut c2 = coeff.clone();
            if l % 2 != 0 {
                c2 = -c2;
            }
            if pa * pb == 1 {
                c2 = -c2;
            }
            rhs = rhs.sub(&t2.scale_rational(&c2));
        }
    }
    Ok(lhs == rhs)
}

/// Grading report for the Rees-normalized OPE of two monomial operators.
#[derive(Debug, Default, Clone)]
pub struct GradingReport {
    pub checked_terms: usize,
    pub violations: Vec<String>,
}

impl GradingReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For every monomial pair and singular coefficient hbar^b N^c with trace
/// counts t_A, t_B in and t_out per output monomial, set a = t_A + t_B -
/// t_out and check c >= 0, b - c >= 0, and a + b - c positive and even.
pub fn grading_check(a: &OperatorSum, b: &OperatorSum, table: &PairingTable) -> GradingReport {
    let mut report = GradingReport::default();
    for (ma, _) in a.terms() {
        for (mb, _) in b.terms() {
            let one = OperatorSum::from_monomial(ma.clone(), GradedCoefficient::one());
            let two = OperatorSum::from_monomial(mb.clone(), GradedCoefficient::one());
            let ope = singular_ope(&one, &two, table);
            let t_in = (ma.n_traces() + mb.n_traces()) as i32;
            for (pole, op) in ope.poles() {
                for (mt, coeff) in op.terms() {
                    let a_exp = t_in - mt.n_traces() as i32;
                    for (exps, _) in coeff.terms() {
                        report.checked_terms += 1;
                        let (bh, cn) = (exps[1], exps[2]);
                        let total = a_exp + bh - cn;
                        if cn < 0 || bh - cn < 0 || total <= 0 || total % 2 != 0 {
                            report.violations.push(format!(
                                "pole {}: (a,b,c) = ({}, {}, {}) violates the grading",
                                pole, a_exp, bh, cn
                            ));
                        }
                    }
                }
            }
        }
    }
    report
}

/// Rees-normalized, reparametrized singular OPE of a monomial pair: every
/// coefficient becomes a polynomial in d^{1/2} and lambda, with d^{a/2}
/// attached for a = t_A + t_B - t_out.
pub fn rees_reparametrized_ope(
    ma: &MultiTrace,
    mb: &MultiTrace,
    table: &PairingTable,
) -> Result<OPEResult, ScalarError> {
    let one = OperatorSum::from_monomial(ma.clone(), GradedCoefficient::one());
    let two = OperatorSum::from_monomial(mb.clone(), GradedCoefficient::one());
    let ope = singular_ope(&one, &two, table);
    let t_in = (ma.n_traces() + mb.n_traces()) as i32;
    let mut out = OPEResult::default();
    for (pole, op) in ope.poles() {
        for (mt, coeff) in op.terms() {
            let a_exp = t_in - mt.n_traces() as i32;
            let c = coeff.reparametrize()?.shift_sqrt_d(a_exp);
            out.add_term(*pole, mt.clone(), c);
        }
    }
    Ok(out)
}

/// Same restriction of the planar OPE (monomial pair, Rees normalization).
pub fn rees_planar_ope(
    ma: &MultiTrace,
    mb: &MultiTrace,
    table: &PairingTable,
) -> Result<OPEResult, ScalarError> {
    let one = OperatorSum::from_monomial(ma.clone(), GradedCoefficient::one());
    let two = OperatorSum::from_monomial(mb.clone(), GradedCoefficient::one());
    let ope = planar_singular_ope(&one, &two, table);
    let t_in = (ma.n_traces() + mb.n_traces()) as i32;
    let mut out = OPEResult::default();
    for (pole, op) in ope.poles() {
        for (mt, coeff) in op.terms() {
            let a_exp = t_in - mt.n_traces() as i32;
            let c = coeff.reparametrize()?.shift_sqrt_d(a_exp);
            out.add_term(*pole, mt.clone(), c);
        }
    }
    Ok(out)
}

/// Diagram-oracle OPE: identical contract to [`singular_ope`], computed by a
/// structurally independent path (loop counting by diagram composition,
/// cycle structure from composite diagram edges, sign by a one-shot
/// odd-letter inversion count). Only intended for tests; refuses large
/// inputs.
pub fn singular_ope_via_diagrams(
    a: &OperatorSum,
    b: &OperatorSum,
    table: &PairingTable,
) -> Result<OPEResult, EngineError> {
    use crate::deligne_diagrams::{Diagram, Vertex, Word};
    let limit = std::env::var(ORACLE_SIZE_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(ORACLE_SIZE_DEFAULT);
    let parity = table.parities();
    let mut out = OPEResult::default();
    for (ma, ca) in a.terms() {
        for (mb, cb) in b.terms() {
            let letters_total = ma.n_letters() + mb.n_letters();
            if letters_total > limit {
                return Err(EngineError::OracleSizeExceeded {
                    letters: letters_total,
                    limit,
                });
            }
            let cab = ca.mul(cb);
            let lin = linearize(ma, mb, table);
            let n = lin.letters.len();

            // trace diagrams, tensored left to right over all traces of A then B
            let mut trace_diagram: Option<Diagram> = None;
            for w in ma.traces().iter().chain(mb.traces().iter()) {
                let t = Diagram::trace(w.len());
                trace_diagram = Some(match trace_diagram {
                    None => t,
                    Some(d) => d.tensor(&t),
                });
            }
            let trace_diagram = trace_diagram.expect("nonempty monomials");

            for_each_contraction_set(ma, mb, table, |set| {
                // pairing caps plus identity strands on survivors
                let mut contracted = vec![false; n];
                for &(x, yb) in set {
                    contracted[x] = true;
                    contracted[lin.n_a + yb] = true;
                }
                let survivors: Vec<usize> = (0..n).filter(|&s| !contracted[s]).collect();
                let mut edges: Vec<(Vertex, Vertex)> = Vec::new();
                for &(x, yb) in set {
                    let y = lin.n_a + yb;
                    edges.push((Vertex::Bottom(2 * x), Vertex::Bottom(2 * y + 1)));
                    edges.push((Vertex::Bottom(2 * x + 1), Vertex::Bottom(2 * y)));
                }
                for (s_pos, &s) in survivors.iter().enumerate() {
                    edges.push((Vertex::Bottom(2 * s), Vertex::Top(2 * s_pos)));
                    edges.push((Vertex::Bottom(2 * s + 1), Vertex::Top(2 * s_pos + 1)));
                }
                let surgery_diagram = Diagram::new(
                    Word::pair_word(n),
                    Word::pair_word(survivors.len()),
                    edges,
                )
                .expect("surgery diagram is valid");
                let (loops, composite) = surgery_diagram
                    .compose(&trace_diagram)
                    .expect("words agree by construction");

                // read the surviving cyclic structure off the composite:
                // the white of survivor u joins the black of its successor
                let mut succ = vec![usize::MAX; survivors.len()];
                for &(u, v) in composite.edges() {
                    let (Vertex::Top(i), Vertex::Top(j)) = (u, v) else {
                        unreachable!("composite of closed diagrams has only top edges");
                    };
                    let (white, black) = if i % 2 == 1 { (i, j) } else { (j, i) };
                    succ[white / 2] = black / 2;
                }
                let mut cycles: Vec<Vec<usize>> = Vec::new();
                let mut seen = vec![false; survivors.len()];
                for s_pos in 0..survivors.len() {
                    if seen[s_pos] {
                        continue;
                    }
                    let mut cyc = Vec::new();
                    let mut cur = s_pos;
                    loop {
                        seen[cur] = true;
                        cyc.push(survivors[cur]);
                        cur = succ[cur];
                        if cur == s_pos {
                            break;
                        }
                    }
                    cycles.push(cyc);
                }

                // one-shot sign: permutation from the linear order to
                // [pairs in a-slot order, then survivors in cycle order],
                // counting inversions among odd letters
                let mut target: Vec<usize> = Vec::with_capacity(n);
                for &(x, yb) in set {
                    target.push(x);
                    target.push(lin.n_a + yb);
                }
                for c in &cycles {
                    target.extend(c.iter().copied());
                }
                let mut pos = vec![0usize; n];
                for (p, &s) in target.iter().enumerate() {
                    pos[s] = p;
                }
                let mut sign = 1i32;
                for i in 0..n {
                    for j in i + 1..n {
                        if pos[i] > pos[j] && lin.parity[i] == 1 && lin.parity[j] == 1 {
                            sign = -sign;
                        }
                    }
                }

                let mut value = BigRational::from_integer(BigInt::from(sign));
                let mut pole = 0;
                for &(x, yb) in set {
                    let (v, p) = contract_pair(lin.letters[x], lin.letters[lin.n_a + yb], table)
                        .expect("enumerator produced a non-contractible pair");
                    value *= v;
                    pole += p;
                }
                let base = GradedCoefficient::monomial(
                    [0, set.len() as i32, loops as i32, 0],
                    value,
                )
                .mul(&cab);
                let bilocal: Vec<Vec<(Letter, bool)>> = cycles
                    .iter()
                    .map(|c| {
                        c.iter()
                            .map(|&s| (lin.letters[s], s < lin.n_a))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                for m in 0..pole {
                    let p = pole - m;
                    expand_at_order(&bilocal, &parity, m, |mt, factor| {
                        out.add_term(p, mt, base.scale(&factor));
                    });
                }
            });
        }
    }
    Ok(out)
}

/// Re-sum an OPE result against the bilocal form of a double contraction:
/// contributions of pole p re-expanded as derivatives acting at the first
/// point. Used by tests to reproduce bilocal identities; returns the map
/// pole -> bilocal operator with first-point letters left unexpanded.
pub fn bilocal_terms(
    a: &OperatorSum,
    b: &OperatorSum,
    table: &PairingTable,
) -> Vec<(u32, GradedCoefficient, Vec<Vec<(Letter, bool)>>)> {
    let mut out = Vec::new();
    for (ma, ca) in a.terms() {
        for (mb, cb) in b.terms() {
            let cab = ca.mul(cb);
            let lin = linearize(ma, mb, table);
            for_each_contraction_set(ma, mb, table, |set| {
                let contrib = evaluate_set(&lin, set, table);
                out.push((
                    contrib.pole,
                    contrib.base.mul(&cab),
                    contrib.bilocal.clone(),
                ));
            });
        }
    }
    out
}
