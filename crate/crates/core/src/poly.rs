//! Sparse multivariate polynomials with exponent-tuple keys, a graded
//! reverse-lexicographic monomial order and a prime field used for exact
//! probe computations.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

/// Coefficient types usable in [`Polynomial`].
pub trait Coefficient:
    Copy + PartialEq + fmt::Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

impl Coefficient for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_i64(v: i64) -> Self {
        Complex64::new(v as f64, 0.0)
    }
}

/// Element of the prime field of order [`Fp::MODULUS`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fp(u32);

impl Fp {
    /// Largest prime below 2^32.
    pub const MODULUS: u32 = 4_294_967_291;

    pub fn new(v: u64) -> Self {
        Fp((v % Self::MODULUS as u64) as u32)
    }

    pub fn value(self) -> u32 {
        self.0
    }

    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Fp(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(self) -> Option<Self> {
        if self.0 == 0 {
            None
        } else {
            Some(self.pow(Self::MODULUS as u64 - 2))
        }
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        let s = self.0 as u64 + rhs.0 as u64;
        let m = Fp::MODULUS as u64;
        Fp(if s >= m { (s - m) as u32 } else { s as u32 })
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        if self.0 >= rhs.0 {
            Fp(self.0 - rhs.0)
        } else {
            Fp((self.0 as u64 + Fp::MODULUS as u64 - rhs.0 as u64) as u32)
        }
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        Fp(((self.0 as u64 * rhs.0 as u64) % Fp::MODULUS as u64) as u32)
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        Fp(0) - self
    }
}

impl Coefficient for Fp {
    fn zero() -> Self {
        Fp(0)
    }
    fn one() -> Self {
        Fp(1)
    }
    fn from_i64(v: i64) -> Self {
        let m = Fp::MODULUS as i64;
        Fp(v.rem_euclid(m) as u32)
    }
}

/// Exponent tuple over `N` variables.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial<const N: usize>(pub [u8; N]);

impl<const N: usize> Monomial<N> {
    pub fn one() -> Self {
        Monomial([0; N])
    }

    pub fn var(i: usize) -> Self {
        let mut e = [0; N];
        e[i] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut e = self.0;
        for (a, b) in e.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
        Monomial(e)
    }

    pub fn eval<T: Coefficient>(&self, x: &[T; N]) -> T {
        let mut acc = T::one();
        for (xi, &e) in x.iter().zip(self.0.iter()) {
            for _ in 0..e {
                acc = acc * *xi;
            }
        }
        acc
    }

    /// All monomials of total degree at most `max_degree`, in increasing
    /// degree and then lexicographic exponent order.
    pub fn up_to_degree(max_degree: u32) -> Vec<Self> {
        let mut out = Vec::new();
        let mut current = [0u8; N];
        fn rec<const N: usize>(i: usize, left: u32, cur: &mut [u8; N], out: &mut Vec<Monomial<N>>) {
            if i == N {
                out.push(Monomial(*cur));
                return;
            }
            for e in 0..=left {
                cur[i] = e as u8;
                rec(i + 1, left - e, cur, out);
            }
            cur[i] = 0;
        }
        rec(0, max_degree, &mut current, &mut out);
        out.sort_by(|a, b| a.degree().cmp(&b.degree()).then_with(|| b.0.cmp(&a.0)));
        out
    }
}

impl<const N: usize> fmt::Debug for Monomial<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Graded reverse-lexicographic order with a configurable variable priority.
///
/// `priority[0]` is the largest variable. Monomials compare first by total
/// degree; ties go to the monomial with the smaller exponent in the
/// smallest variable where they differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grevlex<const N: usize> {
    pub priority: [usize; N],
}

impl<const N: usize> Grevlex<N> {
    pub fn natural() -> Self {
        let mut priority = [0; N];
        for (i, p) in priority.iter_mut().enumerate() {
            *p = i;
        }
        Grevlex { priority }
    }

    pub fn cmp(&self, a: &Monomial<N>, b: &Monomial<N>) -> Ordering {
        match a.degree().cmp(&b.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        for &v in self.priority.iter().rev() {
            match a.0[v].cmp(&b.0[v]) {
                Ordering::Equal => continue,
                o => return o.reverse(),
            }
        }
        Ordering::Equal
    }

    /// Sorts largest first.
    pub fn sort_descending(&self, monomials: &mut [Monomial<N>]) {
        monomials.sort_by(|a, b| self.cmp(b, a));
    }
}

/// Sparse polynomial keyed by exponent tuple.
#[derive(Clone, PartialEq)]
pub struct Polynomial<T: Coefficient, const N: usize> {
    terms: BTreeMap<Monomial<N>, T>,
}

impl<T: Coefficient, const N: usize> Default for Polynomial<T, N> {
    fn default() -> Self {
        Polynomial { terms: BTreeMap::new() }
    }
}

impl<T: Coefficient, const N: usize> fmt::Debug for Polynomial<T, N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.terms.iter()).finish()
    }
}

impl<T: Coefficient, const N: usize> Polynomial<T, N> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: T) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(i: usize) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::var(i), T::one());
        p
    }

    /// Adds `c * m`, dropping the term if it cancels.
    pub fn add_term(&mut self, m: Monomial<N>, c: T) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m).or_insert_with(T::zero);
        *entry = *entry + c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn coeff(&self, m: &Monomial<N>) -> T {
        self.terms.get(m).copied().unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial<N>, &T)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            out.add_term(*m, *c * s);
        }
        out
    }

    pub fn mul_monomial(&self, m: &Monomial<N>) -> Self {
        Polynomial { terms: self.terms.iter().map(|(k, c)| (k.mul(m), *c)).collect() }
    }

    pub fn eval(&self, x: &[T; N]) -> T {
        self.terms.iter().fold(T::zero(), |acc, (m, c)| acc + *c * m.eval(x))
    }
}

impl<const N: usize> Polynomial<f64, N> {
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn eval_complex(&self, x: &[Complex64; N]) -> Complex64 {
        self.terms
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, (m, c)| acc + m.eval(x) * *c)
    }
}

impl<T: Coefficient, const N: usize> Add for &Polynomial<T, N> {
    type Output = Polynomial<T, N>;
    fn add(self, rhs: Self) -> Polynomial<T, N> {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, *c);
        }
        out
    }
}

impl<T: Coefficient, const N: usize> Sub for &Polynomial<T, N> {
    type Output = Polynomial<T, N>;
    fn sub(self, rhs: Self) -> Polynomial<T, N> {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(*m, -*c);
        }
        out
    }
}

impl<T: Coefficient, const N: usize> Mul for &Polynomial<T, N> {
    type Output = Polynomial<T, N>;
    fn mul(self, rhs: Self) -> Polynomial<T, N> {
        let mut out = Polynomial::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), *ca * *cb);
            }
        }
        out
    }
}
