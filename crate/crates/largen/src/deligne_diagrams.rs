//! The combinatorial kernel of the two-color word category.
//!
//! Objects are words in {black, white}; morphisms w -> w' are perfect
//! matchings on the vertices of the two words, where an edge joins opposite
//! colors iff both endpoints lie in the same row. Composition stacks two
//! diagrams, traces through the middle row, and converts every closed loop
//! into a factor of N. This module is both a first-class API and the
//! independent oracle for the OPE engine's trace surgery.

use crate::scalars::GradedCoefficient;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiagramError {
    #[error("invalid word character {0:?} (expected 'b' or 'w')")]
    BadWord(char),
    #[error("middle words do not match")]
    ShapeMismatch,
    #[error("edges do not form a perfect matching")]
    NotPerfectMatching,
    #[error("edge {0} violates the color rule")]
    ColorRule(String),
    #[error("bad edge syntax: {0}")]
    BadEdgeSyntax(String),
    #[error("edge endpoint {0} out of range")]
    IndexOutOfRange(String),
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Color {
    Black,
    White,
}

impl Color {
    pub fn flip(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }
}

/// A word of the two symbols; `[r,s]` abbreviates r blacks followed by s whites.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Word(pub Vec<Color>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn parse(s: &str) -> Result<Self, DiagramError> {
        let mut letters = Vec::new();
        for ch in s.chars() {
            match ch {
                'b' => letters.push(Color::Black),
                'w' => letters.push(Color::White),
                c if c.is_whitespace() => {}
                c => return Err(DiagramError::BadWord(c)),
            }
        }
        Ok(Word(letters))
    }

    /// The object [r,s].
    pub fn rs(r: usize, s: usize) -> Self {
        let mut letters = vec![Color::Black; r];
        letters.extend(vec![Color::White; s]);
        Word(letters)
    }

    /// (black white)^n, the word carrying an n-letter trace.
    pub fn pair_word(n: usize) -> Self {
        let mut letters = Vec::with_capacity(2 * n);
        for _ in 0..n {
            letters.push(Color::Black);
            letters.push(Color::White);
        }
        Word(letters)
    }

    /// Reverse the word and flip every color.
    pub fn dual(&self) -> Self {
        Word(self.0.iter().rev().map(|c| c.flip()).collect())
    }

    pub fn concat(&self, other: &Word) -> Self {
        let mut letters = self.0.clone();
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.0 {
            f.write_str(match c {
                Color::Black => "b",
                Color::White => "w",
            })?;
        }
        Ok(())
    }
}

/// Vertex of a diagram; ordering is top row left-to-right, then bottom row.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Vertex {
    Top(usize),
    Bottom(usize),
}

impl Vertex {
    fn render(&self) -> String {
        match self {
            Vertex::Top(i) => format!("t{}", i + 1),
            Vertex::Bottom(i) => format!("b{}", i + 1),
        }
    }
}

/// A (w,w') diagram: bottom word w (source), top word w' (target), and a
/// perfect matching. Edges are stored sorted with each pair normalized, so
/// equal diagrams compare equal.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Diagram {
    bottom: Word,
    top: Word,
    edges: Vec<(Vertex, Vertex)>,
}

impl Diagram {
    pub fn new(
        bottom: Word,
        top: Word,
        edges: Vec<(Vertex, Vertex)>,
    ) -> Result<Self, DiagramError> {
        let nt = top.len();
        let nb = bottom.len();
        let color = |v: Vertex| -> Result<Color, DiagramError> {
            match v {
                Vertex::Top(i) if i < nt => Ok(top.0[i]),
                Vertex::Bottom(i) if i < nb => Ok(bottom.0[i]),
                _ => Err(DiagramError::IndexOutOfRange(v.render())),
            }
        };
        let mut seen = vec![false; nt + nb];
        let slot = |v: Vertex| match v {
            Vertex::Top(i) => i,
            Vertex::Bottom(i) => nt + i,
        };
        let mut canonical = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            let cu = color(u)?;
            let cv = color(v)?;
            let same_row = matches!(
                (u, v),
                (Vertex::Top(_), Vertex::Top(_)) | (Vertex::Bottom(_), Vertex::Bottom(_))
            );
            if same_row != (cu != cv) {
                return Err(DiagramError::ColorRule(format!(
                    "{}-{}",
                    u.render(),
                    v.render()
                )));
            }
            for x in [u, v] {
                let s = slot(x);
                if seen[s] {
                    return Err(DiagramError::NotPerfectMatching);
                }
                seen[s] = true;
            }
            canonical.push((u.min(v), u.max(v)));
        }
        if !seen.iter().all(|&s| s) {
            return Err(DiagramError::NotPerfectMatching);
        }
        canonical.sort();
        Ok(Diagram {
            bottom,
            top,
            edges: canonical,
        })
    }

    pub fn bottom(&self) -> &Word {
        &self.bottom
    }

    pub fn top(&self) -> &Word {
        &self.top
    }

    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    pub fn identity(w: &Word) -> Self {
        let edges = (0..w.len())
            .map(|i| (Vertex::Top(i), Vertex::Bottom(i)))
            .collect();
        Diagram::new(w.clone(), w.clone(), edges).expect("identity diagram is valid")
    }

    /// The symmetry w1 (x) w2 -> w2 (x) w1.
    pub fn braiding(w1: &Word, w2: &Word) -> Self {
        let (n1, n2) = (w1.len(), w2.len());
        let mut edges = Vec::with_capacity(n1 + n2);
        for i in 0..n1 {
            edges.push((Vertex::Bottom(i), Vertex::Top(n2 + i)));
        }
        for j in 0..n2 {
            edges.push((Vertex::Bottom(n1 + j), Vertex::Top(j)));
        }
        Diagram::new(w1.concat(w2), w2.concat(w1), edges).expect("braiding diagram is valid")
    }

    /// Evaluation dual(w) (x) w -> 1, nested caps in the bottom row.
    pub fn ev(w: &Word) -> Self {
        let n = w.len();
        let edges = (0..n)
            .map(|k| (Vertex::Bottom(k), Vertex::Bottom(2 * n - 1 - k)))
            .collect();
        Diagram::new(w.dual().concat(w), Word::empty(), edges).expect("ev diagram is valid")
    }

    /// Coevaluation 1 -> w (x) dual(w), nested cups in the top row.
    pub fn coev(w: &Word) -> Self {
        let n = w.len();
        let edges = (0..n)
            .map(|k| (Vertex::Top(k), Vertex::Top(2 * n - 1 - k)))
            .collect();
        Diagram::new(Word::empty(), w.concat(&w.dual()), edges).expect("coev diagram is valid")
    }

    /// The closed-chain matching carrying an n-letter trace: 1 -> (bw)^n,
    /// with the white of each letter joined to the black of its successor.
    pub fn trace(n: usize) -> Self {
        assert!(n >= 1, "trace(n) needs n >= 1");
        let mut edges = Vec::with_capacity(n);
        for k in 0..n - 1 {
            edges.push((Vertex::Top(2 * k + 1), Vertex::Top(2 * k + 2)));
        }
        edges.push((Vertex::Top(2 * n - 1), Vertex::Top(0)));
        Diagram::new(Word::empty(), Word::pair_word(n), edges).expect("trace diagram is valid")
    }

    /// Place `self` to the left of `other`.
    pub fn tensor(&self, other: &Diagram) -> Diagram {
        let (st, sb) = (self.top.len(), self.bottom.len());
        let shift = |v: Vertex| match v {
            Vertex::Top(i) => Vertex::Top(i + st),
            Vertex::Bottom(i) => Vertex::Bottom(i + sb),
        };
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(u, v)| (shift(u), shift(v))));
        Diagram::new(
            self.bottom.concat(&other.bottom),
            self.top.concat(&other.top),
            edges,
        )
        .expect("tensor diagram is valid")
    }

    /// Stack `self` (w' -> w'') on top of `bottom` (w -> w'), trace the middle
    /// row, and return the loop count together with the composite diagram.
    pub fn compose(&self, bottom: &Diagram) -> Result<(usize, Diagram), DiagramError> {
        if self.bottom != bottom.top {
            return Err(DiagramError::ShapeMismatch);
        }
        let mid = self.bottom.len();
        let top_partner = partner_map(self);
        let bot_partner = partner_map(bottom);

        // Walk boundary-to-boundary paths. Inside the walk, `in_top` says
        // which of the two stacked diagrams the cursor currently lives in;
        // crossing the middle row flips it. A walk ends on Top(i) of `self`
        // (composite top) or Bottom(i) of `bottom` (composite bottom), and
        // those Vertex values are already the composite coordinates.
        let mut mid_seen = vec![false; mid];
        let mut walk = |start_in_top: bool, start: Vertex| -> (bool, Vertex) {
            let mut in_top = start_in_top;
            let mut cur = start;
            loop {
                let p = if in_top {
                    top_partner[&cur]
                } else {
                    bot_partner[&cur]
                };
                match (in_top, p) {
                    (true, Vertex::Bottom(i)) => {
                        mid_seen[i] = true;
                        in_top = false;
                        cur = Vertex::Top(i);
                    }
                    (false, Vertex::Top(i)) => {
                        mid_seen[i] = true;
                        in_top = true;
                        cur = Vertex::Bottom(i);
                    }
                    (_, v) => return (in_top, v),
                }
            }
        };
        let mut edges = Vec::new();
        let mut top_done = vec![false; self.top.len()];
        let mut bot_done = vec![false; bottom.bottom.len()];
        let mut starts: Vec<(bool, Vertex)> = (0..self.top.len())
            .map(|i| (true, Vertex::Top(i)))
            .collect();
        starts.extend((0..bottom.bottom.len()).map(|i| (false, Vertex::Bottom(i))));
        for (in_top, start) in starts {
            let done = match (in_top, start) {
                (true, Vertex::Top(i)) => top_done[i],
                (false, Vertex::Bottom(i)) => bot_done[i],
                _ => unreachable!(),
            };
            if done {
                continue;
            }
            let (end_in_top, end) = walk(in_top, start);
            match (end_in_top, end) {
                (true, Vertex::Top(i)) => top_done[i] = true,
                (false, Vertex::Bottom(i)) => bot_done[i] = true,
                _ => unreachable!("walk ended on a non-boundary vertex"),
            }
            edges.push((start, end));
        }

        // Unvisited middle vertices lie on closed loops.
        let mut loops = 0;
        for i in 0..mid {
            if mid_seen[i] {
                continue;
            }
            loops += 1;
            // trace the cycle: alternate top edges and bottom edges
            let mut cur = i;
            loop {
                mid_seen[cur] = true;
                let up = match top_partner[&Vertex::Bottom(cur)] {
                    Vertex::Bottom(j) => j,
                    Vertex::Top(_) => unreachable!("loop component touched the boundary"),
                };
                mid_seen[up] = true;
                let down = match bot_partner[&Vertex::Top(up)] {
                    Vertex::Top(j) => j,
                    Vertex::Bottom(_) => unreachable!("loop component touched the boundary"),
                };
                if down == i {
                    break;
                }
                cur = down;
            }
        }

        let d = Diagram::new(bottom.bottom.clone(), self.top.clone(), edges)?;
        Ok((loops, d))
    }

    /// Parse "t1-b3, t2-t4, ..." against the given words.
    pub fn parse(bottom: &Word, top: &Word, s: &str) -> Result<Self, DiagramError> {
        let mut edges = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (a, b) = part
                .split_once('-')
                .ok_or_else(|| DiagramError::BadEdgeSyntax(part.to_string()))?;
            edges.push((parse_vertex(a.trim())?, parse_vertex(b.trim())?));
        }
        Diagram::new(bottom.clone(), top.clone(), edges)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|(u, v)| serde_json::json!([vertex_json(u), vertex_json(v)]))
            .collect();
        serde_json::json!({
            "bottom": self.bottom.to_string(),
            "top": self.top.to_string(),
            "edges": edges,
        })
    }
}

fn vertex_json(v: &Vertex) -> serde_json::Value {
    match v {
        Vertex::Top(i) => serde_json::json!(["t", i + 1]),
        Vertex::Bottom(i) => serde_json::json!(["b", i + 1]),
    }
}

fn parse_vertex(s: &str) -> Result<Vertex, DiagramError> {
    let (row, idx) = s.split_at(1.min(s.len()));
    let i: usize = idx
        .parse()
        .map_err(|_| DiagramError::BadEdgeSyntax(s.to_string()))?;
    if i == 0 {
        return Err(DiagramError::BadEdgeSyntax(s.to_string()));
    }
    match row {
        "t" => Ok(Vertex::Top(i - 1)),
        "b" => Ok(Vertex::Bottom(i - 1)),
        _ => Err(DiagramError::BadEdgeSyntax(s.to_string())),
    }
}

fn partner_map(d: &Diagram) -> BTreeMap<Vertex, Vertex> {
    let mut m = BTreeMap::new();
    for &(u, v) in &d.edges {
        m.insert(u, v);
        m.insert(v, u);
    }
    m
}

/// Independent loop counter for a composition, via union-find over the glued
/// vertex set. Used as an oracle against the cycle-walk count in `compose`.
pub fn compose_loops_unionfind(top: &Diagram, bottom: &Diagram) -> Result<usize, DiagramError> {
    if top.bottom != bottom.top {
        return Err(DiagramError::ShapeMismatch);
    }
    // Vertex numbering: top.top | top.bottom (= bottom.top) | bottom.bottom.
    let a = top.top.len();
    let m = top.bottom.len();
    let b = bottom.bottom.len();
    let mut uf = UnionFind::new(a + m + b);
    let enc_top = |v: Vertex| match v {
        Vertex::Top(i) => i,
        Vertex::Bottom(i) => a + i,
    };
    let enc_bot = |v: Vertex| match v {
        Vertex::Top(i) => a + i,
        Vertex::Bottom(i) => a + m + i,
    };
    for &(u, v) in &top.edges {
        uf.union(enc_top(u), enc_top(v));
    }
    for &(u, v) in &bottom.edges {
        uf.union(enc_bot(u), enc_bot(v));
    }
    let mut boundary_root = vec![false; a + m + b];
    for i in (0..a).chain(a + m..a + m + b) {
        boundary_root[uf.find(i)] = true;
    }
    let mut loop_roots = Vec::new();
    for i in a..a + m {
        let r = uf.find(i);
        if !boundary_root[r] && !loop_roots.contains(&r) {
            loop_roots.push(r);
        }
    }
    Ok(loop_roots.len())
}

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, x: usize, y: usize) {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx != ry {
            self.parent[rx] = ry;
        }
    }
}

/// Number of valid (w,w')-diagrams: perfect matchings respecting the color rule.
pub fn count_diagrams(w: &Word, w_prime: &Word) -> u64 {
    // vertices: bottom then top
    let nb = w.len();
    let total = nb + w_prime.len();
    if total % 2 != 0 {
        return 0;
    }
    let color = |i: usize| {
        if i < nb {
            w.0[i]
        } else {
            w_prime.0[i - nb]
        }
    };
    let same_row = |i: usize, j: usize| (i < nb) == (j < nb);
    let mut used = vec![false; total];
    fn rec(
        used: &mut Vec<bool>,
        color: &dyn Fn(usize) -> Color,
        same_row: &dyn Fn(usize, usize) -> bool,
    ) -> u64 {
        let total = used.len();
        let Some(i) = (0..total).find(|&i| !used[i]) else {
            return 1;
        };
        used[i] = true;
        let mut count = 0;
        for j in i + 1..total {
            if used[j] {
                continue;
            }
            let ok = if same_row(i, j) {
                color(i) != color(j)
            } else {
                color(i) == color(j)
            };
            if ok {
                used[j] = true;
                count += rec(used, color, same_row);
                used[j] = false;
            }
        }
        used[i] = false;
        count
    }
    rec(&mut used, &color, &same_row)
}

/// N-linear combination of diagrams sharing source and target words.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct DiagramSum {
    terms: BTreeMap<Diagram, GradedCoefficient>,
}

impl DiagramSum {
    pub fn from_diagram(d: Diagram) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(d, GradedCoefficient::one());
        DiagramSum { terms }
    }

    pub fn add_term(&mut self, d: Diagram, c: GradedCoefficient) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(d) {
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

    pub fn terms(&self) -> impl Iterator<Item = (&Diagram, &GradedCoefficient)> {
        self.terms.iter()
    }

    pub fn compose(&self, bottom: &DiagramSum) -> Result<DiagramSum, DiagramError> {
        let mut out = DiagramSum::default();
        for (dt, ct) in &self.terms {
            for (db, cb) in &bottom.terms {
                let (loops, d) = dt.compose(db)?;
                let coeff = ct.mul(cb).mul(&GradedCoefficient::n_pow(loops as i32));
                out.add_term(d, coeff);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Diagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.edges.is_empty() {
            return f.write_str("(empty)");
        }
        let parts: Vec<String> = self
            .edges
            .iter()
            .map(|(u, v)| format!("{}-{}", u.render(), v.render()))
            .collect();
        f.write_str(&parts.join(", "))
    }
}

impl fmt::Display for DiagramSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(d, c)| format!("({}) * [{}]", c, d))
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap_cup_11() -> Diagram {
        // X: bw -> bw with a bottom cap and a top cup
        Diagram::new(
            Word::parse("bw").unwrap(),
            Word::parse("bw").unwrap(),
            vec![
                (Vertex::Bottom(0), Vertex::Bottom(1)),
                (Vertex::Top(0), Vertex::Top(1)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn x_squared_is_n_x() {
        let x = cap_cup_11();
        let (loops, d) = x.compose(&x).unwrap();
        assert_eq!(loops, 1);
        assert_eq!(d, x);
        assert_eq!(compose_loops_unionfind(&x, &x).unwrap(), 1);
    }

    #[test]
    fn identity_neutral() {
        let x = cap_cup_11();
        let id = Diagram::identity(&Word::parse("bw").unwrap());
        let (l1, d1) = id.compose(&x).unwrap();
        let (l2, d2) = x.compose(&id).unwrap();
        assert_eq!((l1, &d1), (0, &x));
        assert_eq!((l2, &d2), (0, &x));
    }

    #[test]
    fn closing_both_strands_gives_n_squared() {
        let w = Word::parse("bw").unwrap();
        // coev(dual(w)): 1 -> dual(w) (x) w matches the source of ev(w)
        let (loops, d) = Diagram::ev(&w).compose(&Diagram::coev(&w.dual())).unwrap();
        assert_eq!(loops, 2);
        assert!(d.top().is_empty() && d.bottom().is_empty());
        let sum = DiagramSum::from_diagram(Diagram::ev(&w))
            .compose(&DiagramSum::from_diagram(Diagram::coev(&w.dual())))
            .unwrap();
        let (d0, c0) = sum.terms().next().unwrap();
        assert!(d0.edges().is_empty());
        assert_eq!(*c0, GradedCoefficient::n_pow(2));
    }

    #[test]
    fn snake_identity() {
        for w in ["b", "bw", "bwwb"] {
            let w = Word::parse(w).unwrap();
            let lhs = Diagram::identity(&w).tensor(&Diagram::ev(&w));
            let rhs = Diagram::coev(&w).tensor(&Diagram::identity(&w));
            let (loops, d) = lhs.compose(&rhs).unwrap();
            assert_eq!(loops, 0);
            assert_eq!(d, Diagram::identity(&w));
        }
    }

    #[test]
    fn braiding_squares_to_identity() {
        let b = Word::parse("b").unwrap();
        let swap = Diagram::braiding(&b, &b);
        let (loops, d) = swap.compose(&swap).unwrap();
        assert_eq!(loops, 0);
        assert_eq!(d, Diagram::identity(&Word::parse("bb").unwrap()));
    }

    #[test]
    fn tensor_words() {
        let id_b = Diagram::identity(&Word::parse("b").unwrap());
        let id_w = Diagram::identity(&Word::parse("w").unwrap());
        assert_eq!(
            id_b.tensor(&id_w),
            Diagram::identity(&Word::parse("bw").unwrap())
        );
        let braid = Diagram::braiding(&Word::parse("b").unwrap(), &Word::parse("w").unwrap());
        let t = braid.tensor(&id_b);
        assert_eq!(t.top().to_string(), "wbb");
    }

    #[test]
    fn trace_diagrams() {
        let t1 = Diagram::trace(1);
        assert_eq!(t1.edges(), &[(Vertex::Top(0), Vertex::Top(1))]);
        let t3 = Diagram::trace(3);
        assert_eq!(t3.top().to_string(), "bwbwbw");
        assert_eq!(t3.edges().len(), 3);
    }

    #[test]
    fn diagram_counts() {
        assert_eq!(
            count_diagrams(&Word::parse("bwbw").unwrap(), &Word::parse("bw").unwrap()),
            6
        );
        assert_eq!(
            count_diagrams(&Word::parse("b").unwrap(), &Word::parse("w").unwrap()),
            0
        );
        for r in 0..=4u32 {
            let factorial: u64 = (1..=r as u64).product();
            let w = Word::rs(r as usize, 0);
            assert_eq!(count_diagrams(&w, &w), factorial);
        }
        // dim End([r,s]) = (r+s)! for r+s <= 5
        for r in 0..=5usize {
            for s in 0..=5 - r {
                let w = Word::rs(r, s);
                let factorial: u64 = (1..=(r + s) as u64).product();
                assert_eq!(count_diagrams(&w, &w), factorial, "End([{},{}])", r, s);
            }
        }
    }

    #[test]
    fn parse_and_render_roundtrip() {
        let w = Word::parse("bw").unwrap();
        let x = cap_cup_11();
        let parsed = Diagram::parse(&w, &w, "t1-t2, b1-b2").unwrap();
        assert_eq!(parsed, x);
        let reparsed = Diagram::parse(&w, &w, &x.to_string()).unwrap();
        assert_eq!(reparsed, x);
    }

    #[test]
    fn invalid_diagrams_rejected() {
        let w = Word::parse("bw").unwrap();
        assert_eq!(
            Diagram::parse(&w, &w, "t1-b2, t2-b1"),
            Err(DiagramError::ColorRule("t1-b2".into()))
        );
        assert_eq!(
            Diagram::parse(&w, &w, "t1-t2"),
            Err(DiagramError::NotPerfectMatching)
        );
        assert!(matches!(
            Diagram::parse(&w, &w, "t1-t9, b1-b2"),
            Err(DiagramError::IndexOutOfRange(_))
        ));
    }
}
