//! Exact coefficient arithmetic.
//!
//! Every scalar in the engine is a [`GradedCoefficient`]: a sparse polynomial
//! over the rationals in the formal variables `d^{1/2}`, `hbar`, `N`, `lambda`.
//! Powers of `d` are stored as integer exponents of `d^{1/2}`, so the Rees
//! reparametrization `N = lambda/d^{1/2}`, `hbar = d^{1/2}` stays inside the
//! ring and the grading statements become parity conditions on that exponent.
//!
//! Rational functions are quarantined in [`RatioN`], used only where ranks
//! over the fraction field are needed; OPE output coefficients are always
//! honest polynomials.

use num::bigint::BigInt;
use num::{BigRational, One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Exponent tuple `(a, b, c, e)` for the monomial `d^{a/2} hbar^b N^c lambda^e`.
pub type Exps = [i32; 4];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScalarError {
    #[error("coefficient already contains d or lambda; refusing a second reparametrization")]
    AlreadyReparametrized,
    #[error("coefficient is not a polynomial in N alone")]
    NotPolyInN,
}

/// Sparse exact polynomial in `d^{1/2}`, `hbar`, `N`, `lambda`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct GradedCoefficient {
    terms: BTreeMap<Exps, BigRational>,
}

pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl GradedCoefficient {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn from_int(k: i64) -> Self {
        Self::from_rational(BigRational::from_integer(BigInt::from(k)))
    }

    pub fn from_rational(r: BigRational) -> Self {
        Self::monomial([0, 0, 0, 0], r)
    }

    pub fn monomial(exps: Exps, coeff: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(exps, coeff);
        }
        GradedCoefficient { terms }
    }

    /// The variable N.
    pub fn n() -> Self {
        Self::monomial([0, 0, 1, 0], BigRational::one())
    }

    /// The variable hbar.
    pub fn hbar() -> Self {
        Self::monomial([0, 1, 0, 0], BigRational::one())
    }

    pub fn lambda() -> Self {
        Self::monomial([0, 0, 0, 1], BigRational::one())
    }

    /// `d^{k/2}`.
    pub fn sqrt_d_pow(k: i32) -> Self {
        Self::monomial([k, 0, 0, 0], BigRational::one())
    }

    pub fn n_pow(k: i32) -> Self {
        Self::monomial([0, 0, k, 0], BigRational::one())
    }

    pub fn hbar_pow(k: i32) -> Self {
        Self::monomial([0, k, 0, 0], BigRational::one())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exps, &BigRational)> {
        self.terms.iter()
    }

    fn insert_term(&mut self, exps: Exps, coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get() + &coeff;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (exps, coeff) in &other.terms {
            self.insert_term(*exps, coeff.clone());
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn neg(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| (*e, -c.clone()))
            .collect();
        GradedCoefficient { terms }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = GradedCoefficient::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2], ea[3] + eb[3]];
                out.insert_term(exps, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        if r.is_zero() {
            return Self::zero();
        }
        let terms = self.terms.iter().map(|(e, c)| (*e, c * r)).collect();
        GradedCoefficient { terms }
    }

    /// Multiply every term by `d^{k/2}` (Rees normalization per trace).
    pub fn shift_sqrt_d(&self, k: i32) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| ([e[0] + k, e[1], e[2], e[3]], c.clone()))
            .collect();
        GradedCoefficient { terms }
    }

    /// Substitute `N = lambda * d^{-1/2}`, `hbar = d^{1/2}`.
    ///
    /// A term `hbar^b N^c` becomes `d^{(b-c)/2} lambda^c`. Inputs that already
    /// mention d or lambda are rejected so the substitution cannot be applied
    /// twice.
    pub fn reparametrize(&self) -> Result<Self, ScalarError> {
        let mut out = GradedCoefficient::default();
        for (e, c) in &self.terms {
            if e[0] != 0 || e[3] != 0 {
                return Err(ScalarError::AlreadyReparametrized);
            }
            out.insert_term([e[1] - e[2], 0, 0, e[2]], c.clone());
        }
        Ok(out)
    }

    pub fn specialize_n(&self, n: &BigRational) -> Self {
        let mut out = GradedCoefficient::default();
        for (e, c) in &self.terms {
            out.insert_term([e[0], e[1], 0, e[3]], c * pow_rational(n, e[2]));
        }
        out
    }

    pub fn specialize_hbar(&self, h: &BigRational) -> Self {
        let mut out = GradedCoefficient::default();
        for (e, c) in &self.terms {
            out.insert_term([e[0], 0, e[2], e[3]], c * pow_rational(h, e[1]));
        }
        out
    }

    /// Keep only terms with the given `d^{1/2}` exponent, dropping that factor.
    pub fn coefficient_of_sqrt_d(&self, a: i32) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[0] == a)
            .map(|(e, c)| ([0, e[1], e[2], e[3]], c.clone()))
            .collect();
        GradedCoefficient { terms }
    }

    /// Keep only terms with the given hbar exponent, dropping that factor.
    pub fn coefficient_of_hbar(&self, b: i32) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(e, _)| e[1] == b)
            .map(|(e, c)| ([e[0], 0, e[2], e[3]], c.clone()))
            .collect();
        GradedCoefficient { terms }
    }

    /// Some(r) iff the coefficient is the constant r (including zero).
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                if *e == [0, 0, 0, 0] {
                    Some(c.clone())
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// View as a dense polynomial in N alone.
    pub fn to_poly_n(&self) -> Result<PolyN, ScalarError> {
        let mut p = PolyN::zero();
        for (e, c) in &self.terms {
            if e[0] != 0 || e[1] != 0 || e[3] != 0 || e[2] < 0 {
                return Err(ScalarError::NotPolyInN);
            }
            p.add_term(e[2] as usize, c.clone());
        }
        Ok(p)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let list: Vec<serde_json::Value> = self
            .terms
            .iter()
            .map(|(e, c)| {
                serde_json::json!({
                    "a": e[0], "b": e[1], "c": e[2], "e": e[3],
                    "num": c.numer().to_string(),
                    "den": c.denom().to_string(),
                })
            })
            .collect();
        serde_json::Value::Array(list)
    }

    pub fn to_latex(&self) -> String {
        self.render(true)
    }

    fn render(&self, latex: bool) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (e, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else if neg {
                out.push_str(" - ");
            } else {
                out.push_str(" + ");
            }
            out.push_str(&render_term(e, &c.abs(), latex));
        }
        out
    }
}

fn pow_rational(r: &BigRational, k: i32) -> BigRational {
    if k >= 0 {
        num::pow::pow(r.clone(), k as usize)
    } else {
        num::pow::pow(r.clone(), (-k) as usize).recip()
    }
}

fn render_term(e: &Exps, mag: &BigRational, latex: bool) -> String {
    let mut factors: Vec<String> = Vec::new();
    if e[0] != 0 {
        factors.push(render_power_half("d", e[0], latex));
    }
    if e[1] != 0 {
        factors.push(render_power(if latex { "\\hbar" } else { "hbar" }, e[1], latex));
    }
    if e[2] != 0 {
        factors.push(render_power("N", e[2], latex));
    }
    if e[3] != 0 {
        factors.push(render_power(if latex { "\\lambda" } else { "lambda" }, e[3], latex));
    }
    if factors.is_empty() {
        return mag.to_string();
    }
    let vars = factors.join(if latex { " " } else { "*" });
    if mag.is_one() {
        vars
    } else if latex {
        format!("{} {}", rational_latex(mag), vars)
    } else {
        format!("{}*{}", mag, vars)
    }
}

fn rational_latex(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("\\tfrac{{{}}}{{{}}}", r.numer(), r.denom())
    }
}

fn render_power(var: &str, k: i32, latex: bool) -> String {
    if k == 1 {
        var.to_string()
    } else if latex {
        format!("{}^{{{}}}", var, k)
    } else {
        format!("{}^{}", var, k)
    }
}

/// `d` carries half-integer exponents: `k` counts powers of `d^{1/2}`.
fn render_power_half(var: &str, k: i32, latex: bool) -> String {
    if k % 2 == 0 {
        render_power(var, k / 2, latex)
    } else if latex {
        format!("{}^{{{}/2}}", var, k)
    } else {
        format!("{}^({}/2)", var, k)
    }
}

impl fmt::Display for GradedCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(false))
    }
}

impl fmt::Debug for GradedCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GradedCoefficient({})", self)
    }
}

/// Dense exact polynomial in N, used by the fraction-free rank computation.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct PolyN {
    /// coeffs[k] multiplies N^k; no trailing zeros.
    coeffs: Vec<BigRational>,
}

impl PolyN {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(r: BigRational) -> Self {
        let mut p = Self::zero();
        p.add_term(0, r);
        p
    }

    pub fn add_term(&mut self, deg: usize, c: BigRational) {
        if c.is_zero() {
            return;
        }
        if self.coeffs.len() <= deg {
            self.coeffs.resize(deg + 1, BigRational::zero());
        }
        self.coeffs[deg] += c;
        self.trim();
    }

    fn trim(&mut self) {
        while matches!(self.coeffs.last(), Some(c) if c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, c) in other.coeffs.iter().enumerate() {
            out.add_term(k, c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        PolyN {
            coeffs: self.coeffs.iter().map(|c| -c.clone()).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        let mut p = PolyN { coeffs };
        p.trim();
        p
    }

    /// Exact division; panics if the division leaves a remainder.
    /// Only called where exactness is guaranteed (Bareiss elimination).
    pub fn div_exact(&self, other: &Self) -> Self {
        assert!(!other.is_zero(), "division by zero polynomial");
        if self.is_zero() {
            return Self::zero();
        }
        let mut rem = self.coeffs.clone();
        let dl = other.coeffs.len();
        assert!(rem.len() >= dl, "inexact polynomial division");
        let lead = &other.coeffs[dl - 1];
        let mut q = vec![BigRational::zero(); rem.len() - dl + 1];
        for k in (0..q.len()).rev() {
            let c = &rem[k + dl - 1] / lead;
            if !c.is_zero() {
                for (j, b) in other.coeffs.iter().enumerate() {
                    let t = &c * b;
                    rem[k + j] -= t;
                }
            }
            q[k] = c;
        }
        assert!(
            rem.iter().all(|c| c.is_zero()),
            "inexact polynomial division"
        );
        let mut p = PolyN { coeffs: q };
        p.trim();
        p
    }

    pub fn eval(&self, n: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * n + c;
        }
        acc
    }
}

/// Rational function in N: a thin wrapper, no gcd reduction beyond zero checks.
/// Used only for rank bookkeeping over the fraction field.
#[derive(Clone, Debug)]
pub struct RatioN {
    pub num: PolyN,
    pub den: PolyN,
}

impl RatioN {
    pub fn from_poly(p: PolyN) -> Self {
        RatioN {
            num: p,
            den: PolyN::constant(BigRational::one()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn add(&self, other: &Self) -> Self {
        RatioN {
            num: self.num.mul(&other.den).add(&other.num.mul(&self.den)),
            den: self.den.mul(&other.den),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        RatioN {
            num: self.num.mul(&other.num),
            den: self.den.mul(&other.den),
        }
    }

    pub fn recip(&self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero");
        RatioN {
            num: self.den.clone(),
            den: self.num.clone(),
        }
    }

    /// Equality via cross multiplication.
    pub fn eq_ratio(&self, other: &Self) -> bool {
        self.num.mul(&other.den) == other.num.mul(&self.den)
    }
}
