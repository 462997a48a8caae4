//! Multivariate polynomials with exact complex-rational coefficients, and a
//! small expression parser for Hamiltonian text input.
//!
//! Grammar: real/rational literals, declared variable names, `+ - * / ^`
//! (integer exponents, constant divisors), parentheses, the imaginary unit
//! `i`, and the forms `re(..)`, `im(..)`, `abs2(..)`, `conj(..)`. Declared
//! complex aliases expand as z = x + i*y in the underlying real variables.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    SyntaxError { pos: usize, msg: String },
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("non-integer exponent at byte {0}")]
    NonIntegerExponent(usize),
}

/// Complex number with exact rational parts.
#[derive(Clone, PartialEq, Eq)]
pub struct CNum {
    pub re: BigRational,
    pub im: BigRational,
}

impl CNum {
    pub fn zero() -> Self {
        CNum { re: BigRational::zero(), im: BigRational::zero() }
    }

    pub fn one() -> Self {
        CNum { re: BigRational::one(), im: BigRational::zero() }
    }

    pub fn i() -> Self {
        CNum { re: BigRational::zero(), im: BigRational::one() }
    }

    pub fn from_int(n: i64) -> Self {
        CNum { re: BigRational::from_integer(BigInt::from(n)), im: BigRational::zero() }
    }

    pub fn from_ratio(n: i64, d: i64) -> Self {
        CNum {
            re: BigRational::new(BigInt::from(n), BigInt::from(d)),
            im: BigRational::zero(),
        }
    }

    pub fn from_f64(x: f64) -> Self {
        CNum {
            re: BigRational::from_float(x).expect("finite float"),
            im: BigRational::zero(),
        }
    }

    pub fn conj(&self) -> Self {
        CNum { re: self.re.clone(), im: -self.im.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (rat_f64(&self.re), rat_f64(&self.im))
    }

    fn mul(&self, o: &CNum) -> CNum {
        CNum {
            re: &self.re * &o.re - &self.im * &o.im,
            im: &self.re * &o.im + &self.im * &o.re,
        }
    }

    fn add(&self, o: &CNum) -> CNum {
        CNum { re: &self.re + &o.re, im: &self.im + &o.im }
    }

    fn neg(&self) -> CNum {
        CNum { re: -self.re.clone(), im: -self.im.clone() }
    }

    fn inv(&self) -> Option<CNum> {
        let n = &self.re * &self.re + &self.im * &self.im;
        if n.is_zero() {
            return None;
        }
        Some(CNum { re: &self.re / &n, im: -&self.im / &n })
    }
}

pub fn rat_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Fallback for coefficients wider than f64 bookkeeping.
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

impl fmt::Debug for CNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else if self.re.is_zero() {
            write!(f, "{}i", self.im)
        } else {
            write!(f, "({}+{}i)", self.re, self.im)
        }
    }
}

/// Polynomial in canonical form: sorted exponent map, no zero coefficients.
#[derive(Clone, PartialEq)]
pub struct PolynomialExpr {
    pub vars: Vec<String>,
    pub terms: BTreeMap<Vec<u16>, CNum>,
}

impl PolynomialExpr {
    pub fn zero(vars: &[String]) -> Self {
        PolynomialExpr { vars: vars.to_vec(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &[String], c: CNum) -> Self {
        let mut p = Self::zero(vars);
        if !c.is_zero() {
            p.terms.insert(vec![0; vars.len()], c);
        }
        p
    }

    pub fn var(vars: &[String], idx: usize) -> Self {
        let mut p = Self::zero(vars);
        let mut e = vec![0u16; vars.len()];
        e[idx] = 1;
        p.terms.insert(e, CNum::one());
        p
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_real(&self) -> bool {
        self.terms.values().all(|c| c.is_real())
    }

    pub fn total_degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    fn insert_term(&mut self, exp: Vec<u16>, c: CNum) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exp) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().add(&c);
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, o: &PolynomialExpr) -> PolynomialExpr {
        debug_assert_eq!(self.vars, o.vars);
        let mut out = self.clone();
        out.add_assign(o);
        out
    }

    pub fn add_assign(&mut self, o: &PolynomialExpr) {
        for (e, c) in &o.terms {
            self.insert_term(e.clone(), c.clone());
        }
    }

    pub fn sub(&self, o: &PolynomialExpr) -> PolynomialExpr {
        self.add(&o.neg())
    }

    pub fn neg(&self) -> PolynomialExpr {
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), c.neg());
        }
        out
    }

    pub fn mul(&self, o: &PolynomialExpr) -> PolynomialExpr {
        debug_assert_eq!(self.vars, o.vars);
        let mut out = Self::zero(&self.vars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u16> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.insert_term(e, c1.mul(c2));
            }
        }
        out
    }

    pub fn scale(&self, c: &CNum) -> PolynomialExpr {
        let mut out = Self::zero(&self.vars);
        for (e, k) in &self.terms {
            let v = k.mul(c);
            if !v.is_zero() {
                out.terms.insert(e.clone(), v);
            }
        }
        out
    }

    pub fn powi(&self, mut n: u32) -> PolynomialExpr {
        let mut base = self.clone();
        let mut acc = Self::constant(&self.vars, CNum::one());
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    pub fn conj(&self) -> PolynomialExpr {
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            out.terms.insert(e.clone(), c.conj());
        }
        out
    }

    /// Formal partial derivative in variable `idx`.
    pub fn derivative(&self, idx: usize) -> PolynomialExpr {
        let mut out = Self::zero(&self.vars);
        for (e, c) in &self.terms {
            if e[idx] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[idx] -= 1;
            let k = CNum::from_int(e[idx] as i64);
            out.insert_term(e2, c.mul(&k));
        }
        out
    }

    /// Substitute each variable by the given polynomial (exact composition).
    /// The replacement polynomials must share a common variable list.
    pub fn substitute(&self, images: &[PolynomialExpr]) -> PolynomialExpr {
        assert_eq!(images.len(), self.nvars());
        let target_vars = if images.is_empty() { self.vars.clone() } else { images[0].vars.clone() };
        let mut out = PolynomialExpr::zero(&target_vars);
        // Memoize powers of each image.
        let max_exp: Vec<u16> = (0..self.nvars())
            .map(|i| self.terms.keys().map(|e| e[i]).max().unwrap_or(0))
            .collect();
        let mut pows: Vec<Vec<PolynomialExpr>> = Vec::with_capacity(self.nvars());
        for (i, img) in images.iter().enumerate() {
            let mut v = vec![PolynomialExpr::constant(&target_vars, CNum::one())];
            for k in 1..=max_exp[i] as usize {
                let next = v[k - 1].mul(img);
                v.push(next);
            }
            pows.push(v);
        }
        for (e, c) in &self.terms {
            let mut t = PolynomialExpr::constant(&target_vars, c.clone());
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    t = t.mul(&pows[i][k as usize]);
                }
            }
            out.add_assign(&t);
        }
        out
    }

    /// Exact evaluation at a rational point (used in tests and oracles).
    pub fn eval_exact(&self, point: &[BigRational]) -> CNum {
        let mut acc = CNum::zero();
        for (e, c) in &self.terms {
            let mut m = BigRational::one();
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    m *= &point[i];
                }
            }
            acc = acc.add(&CNum { re: &c.re * &m, im: &c.im * &m });
        }
        acc
    }

    /// Real-coefficient view of the quadratic part as a symmetric matrix Q
    /// with H_2(x) = x'Qx/2.
    pub fn quadratic_part_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.nvars();
        let mut q = nalgebra::DMatrix::zeros(n, n);
        for (e, c) in &self.terms {
            let deg: u16 = e.iter().sum();
            if deg != 2 {
                continue;
            }
            let (re, _) = c.to_f64_pair();
            let idx: Vec<usize> = (0..n).filter(|&i| e[i] > 0).collect();
            if idx.len() == 1 {
                q[(idx[0], idx[0])] += 2.0 * re;
            } else {
                q[(idx[0], idx[1])] += re;
                q[(idx[1], idx[0])] += re;
            }
        }
        q
    }

    /// Compile to f64 coefficients for fast repeated evaluation.
    pub fn compile(&self) -> CompiledPoly {
        let mut exps = Vec::with_capacity(self.terms.len());
        let mut coefs = Vec::with_capacity(self.terms.len());
        for (e, c) in &self.terms {
            exps.push(e.clone());
            let (re, im) = c.to_f64_pair();
            coefs.push(num_complex::Complex64::new(re, im));
        }
        CompiledPoly::from_parts(self.nvars(), exps, coefs)
    }
}

impl fmt::Display for PolynomialExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            let mut parts: Vec<String> = Vec::new();
            let coef_str = if c.is_real() {
                let r = &c.re;
                if r.is_one() && e.iter().any(|&k| k > 0) {
                    None
                } else if (-r.clone()).is_one() && e.iter().any(|&k| k > 0) {
                    Some("-1".to_string())
                } else {
                    Some(format!("{}", r))
                }
            } else if c.re.is_zero() && c.im.is_one() {
                Some("i".to_string())
            } else if c.re.is_zero() {
                Some(format!("{}*i", c.im))
            } else {
                Some(format!("({}+{}*i)", c.re, c.im))
            };
            if let Some(s) = coef_str {
                parts.push(s);
            }
            for (i, &k) in e.iter().enumerate() {
                if k == 1 {
                    parts.push(self.vars[i].clone());
                } else if k > 1 {
                    parts.push(format!("{}^{}", self.vars[i], k));
                }
            }
            let term = parts.join("*");
            let term = if term.is_empty() { "1".into() } else { term };
            if first {
                let term = if let Some(rest) = term.strip_prefix("-1*") {
                    format!("-{rest}")
                } else {
                    term
                };
                write!(f, "{}", term)?;
                first = false;
            } else if let Some(rest) = term.strip_prefix('-') {
                let rest = rest.strip_prefix("1*").unwrap_or(rest);
                write!(f, " - {}", rest)?;
            } else {
                write!(f, " + {}", term)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for PolynomialExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// f64-compiled polynomial for the numeric paths.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    pub nvars: usize,
    pub exps: Vec<Vec<u16>>,
    pub coefs: Vec<num_complex::Complex64>,
    max_exp: Vec<u16>,
}

impl CompiledPoly {
    pub fn from_parts(nvars: usize, exps: Vec<Vec<u16>>, coefs: Vec<num_complex::Complex64>) -> Self {
        let mut max_exp = vec![0u16; nvars];
        for e in &exps {
            for (i, &k) in e.iter().enumerate() {
                max_exp[i] = max_exp[i].max(k);
            }
        }
        CompiledPoly { nvars, exps, coefs, max_exp }
    }

    fn work(&self) -> usize {
        self.exps.len() * self.max_exp.iter().map(|&k| k as usize).sum::<usize>().max(1)
    }

    pub fn eval(&self, x: &[num_complex::Complex64]) -> num_complex::Complex64 {
        // Power tables pay off on large high-degree polynomials.
        if self.work() > 256 {
            let pows: Vec<Vec<num_complex::Complex64>> = (0..self.nvars)
                .map(|i| {
                    let mut t = Vec::with_capacity(self.max_exp[i] as usize + 1);
                    t.push(num_complex::Complex64::new(1.0, 0.0));
                    for k in 1..=self.max_exp[i] as usize {
                        let prev = t[k - 1];
                        t.push(prev * x[i]);
                    }
                    t
                })
                .collect();
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for (e, c) in self.exps.iter().zip(&self.coefs) {
                let mut m = *c;
                for (i, &k) in e.iter().enumerate() {
                    if k > 0 {
                        m *= pows[i][k as usize];
                    }
                }
                acc += m;
            }
            return acc;
        }
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for (e, c) in self.exps.iter().zip(&self.coefs) {
            let mut m = *c;
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    m *= x[i];
                }
            }
            acc += m;
        }
        acc
    }

    pub fn eval_real(&self, x: &[f64]) -> f64 {
        if self.work() > 256 {
            let pows: Vec<Vec<f64>> = (0..self.nvars)
                .map(|i| {
                    let mut t = Vec::with_capacity(self.max_exp[i] as usize + 1);
                    t.push(1.0);
                    for k in 1..=self.max_exp[i] as usize {
                        let prev = t[k - 1];
                        t.push(prev * x[i]);
                    }
                    t
                })
                .collect();
            let mut acc = 0.0;
            for (e, c) in self.exps.iter().zip(&self.coefs) {
                let mut m = c.re;
                for (i, &k) in e.iter().enumerate() {
                    if k > 0 {
                        m *= pows[i][k as usize];
                    }
                }
                acc += m;
            }
            return acc;
        }
        let mut acc = 0.0;
        for (e, c) in self.exps.iter().zip(&self.coefs) {
            let mut m = c.re;
            for (i, &k) in e.iter().enumerate() {
                for _ in 0..k {
                    m *= x[i];
                }
            }
            acc += m;
        }
        acc
    }
}

/// Declared complex alias: `alias ≡ xvar + i*yvar`.
#[derive(Clone, Debug)]
pub struct ComplexAlias {
    pub alias: String,
    pub xvar: String,
    pub yvar: String,
}

/// Parse Hamiltonian text over the declared real variables, expanding
/// complex aliases and `re/im/abs2/conj` into a real-variable polynomial.
pub fn parse_hamiltonian(
    text: &str,
    variables: &[String],
    aliases: &[ComplexAlias],
) -> Result<PolynomialExpr, ParseError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0, vars: variables, aliases };
    let p = parser.parse_expr()?;
    parser.expect_end()?;
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push((Tok::Plus, i));
                i += 1;
            }
            '-' | '\u{2212}' => {
                toks.push((Tok::Minus, i));
                i += c.len_utf8();
            }
            '*' => {
                toks.push((Tok::Star, i));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, i));
                i += 1;
            }
            '^' => {
                toks.push((Tok::Caret, i));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut frac_digits = 0i64;
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    let fs = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    frac_digits = (i - fs) as i64;
                }
                let mantissa_end = i;
                let mut exp10 = 0i64;
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let save = i;
                    let mut j = i + 1;
                    let mut sign = 1i64;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        if bytes[j] == b'-' {
                            sign = -1;
                        }
                        j += 1;
                    }
                    let es = j;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j > es {
                        exp10 = sign
                            * text[es..j].parse::<i64>().map_err(|_| ParseError::SyntaxError {
                                pos: es,
                                msg: "bad exponent".into(),
                            })?;
                        i = j;
                    } else {
                        i = save;
                    }
                }
                let digits: String = text[start..mantissa_end]
                    .chars()
                    .filter(|c| c.is_ascii_digit())
                    .collect();
                if digits.is_empty() {
                    return Err(ParseError::SyntaxError { pos: start, msg: "bad number".into() });
                }
                let mantissa: BigInt = digits.parse().map_err(|_| ParseError::SyntaxError {
                    pos: start,
                    msg: "bad number".into(),
                })?;
                let mut val = BigRational::from_integer(mantissa);
                let net = exp10 - frac_digits;
                let ten = BigRational::from_integer(BigInt::from(10));
                if net >= 0 {
                    for _ in 0..net {
                        val *= &ten;
                    }
                } else {
                    for _ in 0..-net {
                        val /= &ten;
                    }
                }
                toks.push((Tok::Num(val), start));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && {
                    let ch = bytes[i] as char;
                    ch.is_alphanumeric() || ch == '_'
                } {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(ParseError::SyntaxError {
                    pos: i,
                    msg: format!("unexpected character '{c}'"),
                })
            }
        }
    }
    toks.push((Tok::End, bytes.len()));
    Ok(toks)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [String],
    aliases: &'a [ComplexAlias],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn peek_pos(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].0.clone();
        self.pos += 1;
        t
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if *self.peek() != Tok::End {
            return Err(ParseError::SyntaxError {
                pos: self.peek_pos(),
                msg: "trailing input".into(),
            });
        }
        Ok(())
    }

    fn parse_expr(&mut self) -> Result<PolynomialExpr, ParseError> {
        let mut acc = self.parse_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc.add(&self.parse_term()?);
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc.sub(&self.parse_term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_term(&mut self) -> Result<PolynomialExpr, ParseError> {
        let mut acc = self.parse_unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    acc = acc.mul(&self.parse_unary()?);
                }
                Tok::Slash => {
                    let pos = self.peek_pos();
                    self.bump();
                    let rhs = self.parse_unary()?;
                    let c = rhs
                        .terms
                        .iter()
                        .find(|(e, _)| e.iter().all(|&k| k == 0))
                        .map(|(_, c)| c.clone());
                    if rhs.terms.len() != 1 || c.is_none() {
                        return Err(ParseError::SyntaxError {
                            pos,
                            msg: "division only by a nonzero constant".into(),
                        });
                    }
                    let inv = c.unwrap().inv().ok_or(ParseError::SyntaxError {
                        pos,
                        msg: "division by zero".into(),
                    })?;
                    acc = acc.scale(&inv);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<PolynomialExpr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(self.parse_unary()?.neg())
            }
            Tok::Plus => {
                self.bump();
                self.parse_unary()
            }
            _ => self.parse_power(),
        }
    }

    fn parse_power(&mut self) -> Result<PolynomialExpr, ParseError> {
        let base = self.parse_atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let pos = self.peek_pos();
            match self.bump() {
                Tok::Num(r) => {
                    if !r.is_integer() || r.is_negative() {
                        return Err(ParseError::NonIntegerExponent(pos));
                    }
                    let n = r.to_integer().to_u32().ok_or(ParseError::NonIntegerExponent(pos))?;
                    Ok(base.powi(n))
                }
                _ => Err(ParseError::NonIntegerExponent(pos)),
            }
        } else {
            Ok(base)
        }
    }

    fn parse_atom(&mut self) -> Result<PolynomialExpr, ParseError> {
        let pos = self.peek_pos();
        match self.bump() {
            Tok::Num(r) => Ok(PolynomialExpr::constant(
                self.vars,
                CNum { re: r, im: BigRational::zero() },
            )),
            Tok::LParen => {
                let inner = self.parse_expr()?;
                match self.bump() {
                    Tok::RParen => Ok(inner),
                    _ => Err(ParseError::SyntaxError { pos, msg: "unclosed parenthesis".into() }),
                }
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen
                    && matches!(name.as_str(), "re" | "im" | "abs2" | "conj")
                {
                    self.bump();
                    let arg = self.parse_expr()?;
                    match self.bump() {
                        Tok::RParen => {}
                        _ => {
                            return Err(ParseError::SyntaxError {
                                pos,
                                msg: "unclosed function call".into(),
                            })
                        }
                    }
                    let half = CNum::from_ratio(1, 2);
                    let half_i = CNum { re: BigRational::zero(), im: -half.re.clone() };
                    Ok(match name.as_str() {
                        "re" => arg.add(&arg.conj()).scale(&half),
                        "im" => arg.sub(&arg.conj()).scale(&half_i),
                        "abs2" => arg.mul(&arg.conj()),
                        _ => arg.conj(),
                    })
                } else if name == "i" {
                    Ok(PolynomialExpr::constant(self.vars, CNum::i()))
                } else if let Some(idx) = self.vars.iter().position(|v| *v == name) {
                    Ok(PolynomialExpr::var(self.vars, idx))
                } else if let Some(al) = self.aliases.iter().find(|a| a.alias == name) {
                    let ix = self
                        .vars
                        .iter()
                        .position(|v| *v == al.xvar)
                        .ok_or_else(|| ParseError::UnknownVariable(al.xvar.clone()))?;
                    let iy = self
                        .vars
                        .iter()
                        .position(|v| *v == al.yvar)
                        .ok_or_else(|| ParseError::UnknownVariable(al.yvar.clone()))?;
                    let x = PolynomialExpr::var(self.vars, ix);
                    let y = PolynomialExpr::var(self.vars, iy).scale(&CNum::i());
                    Ok(x.add(&y))
                } else {
                    Err(ParseError::UnknownVariable(name))
                }
            }
            Tok::End => Err(ParseError::SyntaxError { pos, msg: "unexpected end of input".into() }),
            t => Err(ParseError::SyntaxError { pos, msg: format!("unexpected token {t:?}") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn z_alias() -> Vec<ComplexAlias> {
        vec![ComplexAlias { alias: "z".into(), xvar: "x".into(), yvar: "y".into() }]
    }

    #[test]
    fn parse_zero() {
        let p = parse_hamiltonian("0", &vars(&["x", "y"]), &[]).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn parse_parabolic_family_hamiltonian() {
        // re(z^5) + abs2(z)^2 + l*abs2(z) expands to a real polynomial.
        let v = vars(&["x", "y", "l"]);
        let p = parse_hamiltonian("re(z^5) + abs2(z)^2 + l*abs2(z)", &v, &z_alias()).unwrap();
        assert!(p.is_real());
        // Spot values: at (x,y,l)=(1,0,0): 1 + 1 = 2; at (0,1,0): im-part powers.
        let at = |x: i64, y: i64, l: i64| {
            let pt = vec![
                BigRational::from_integer(x.into()),
                BigRational::from_integer(y.into()),
                BigRational::from_integer(l.into()),
            ];
            p.eval_exact(&pt)
        };
        assert_eq!(at(1, 0, 0), CNum::from_int(2));
        // re((iy)^5) = re(i y^5) = 0, plus y^4: at (0,1,0) -> 1.
        assert_eq!(at(0, 1, 0), CNum::from_int(1));
        // l * (x^2+y^2) term: at (1,1,2): re((1+i)^5) + 4 + 2*2.
        // (1+i)^2 = 2i, (1+i)^4 = -4, (1+i)^5 = -4-4i -> re = -4. total: -4+4+4 = 4.
        assert_eq!(at(1, 1, 2), CNum::from_int(4));
    }

    #[test]
    fn parse_conj_against_brute_force_expansion() {
        // re(z1^2 * conj(z2)^3) versus hand expansion of (x1+iy1)^2 (x2-iy2)^3.
        let v = vars(&["x1", "y1", "x2", "y2"]);
        let aliases = vec![
            ComplexAlias { alias: "z1".into(), xvar: "x1".into(), yvar: "y1".into() },
            ComplexAlias { alias: "z2".into(), xvar: "x2".into(), yvar: "y2".into() },
        ];
        let p = parse_hamiltonian("re(z1^2 * conj(z2)^3)", &v, &aliases).unwrap();
        let x1 = PolynomialExpr::var(&v, 0);
        let y1 = PolynomialExpr::var(&v, 1);
        let x2 = PolynomialExpr::var(&v, 2);
        let y2 = PolynomialExpr::var(&v, 3);
        let z1 = x1.add(&y1.scale(&CNum::i()));
        let z2c = x2.sub(&y2.scale(&CNum::i()));
        let prod = z1.powi(2).mul(&z2c.powi(3));
        let expect = prod.add(&prod.conj()).scale(&CNum::from_ratio(1, 2));
        assert_eq!(p, expect);
        assert!(p.is_real());
    }

    #[test]
    fn parse_errors() {
        let v = vars(&["x"]);
        assert!(matches!(
            parse_hamiltonian("x + w", &v, &[]),
            Err(ParseError::UnknownVariable(_))
        ));
        assert!(matches!(
            parse_hamiltonian("x^y", &v, &[]),
            Err(ParseError::NonIntegerExponent(_))
        ));
        assert!(matches!(
            parse_hamiltonian("x^(2)", &v, &[]),
            Err(ParseError::NonIntegerExponent(_))
        ));
        assert!(matches!(
            parse_hamiltonian("(x + ", &v, &[]),
            Err(ParseError::SyntaxError { .. })
        ));
        assert!(matches!(
            parse_hamiltonian("x / y", &vars(&["x", "y"]), &[]),
            Err(ParseError::SyntaxError { .. })
        ));
    }

    #[test]
    fn print_parse_round_trip() {
        let v = vars(&["x", "y", "l"]);
        let p = parse_hamiltonian("re(z^5) + abs2(z)^2 + l*abs2(z) - 1/2*x*y", &v, &z_alias())
            .unwrap();
        let printed = format!("{p}");
        let q = parse_hamiltonian(&printed, &v, &z_alias()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let v = vars(&["x", "y"]);
        let p = parse_hamiltonian("x^3*y - 2*y^2 + x", &v, &[]).unwrap();
        let dx = p.derivative(0).compile();
        let pc = p.compile();
        let h = 1e-6;
        for &(x, y) in &[(0.3, -0.7), (1.1, 0.4)] {
            let num = (pc.eval_real(&[x + h, y]) - pc.eval_real(&[x - h, y])) / (2.0 * h);
            assert!((dx.eval_real(&[x, y]) - num).abs() < 1e-8);
        }
    }

    #[test]
    fn substitution_exact() {
        let v = vars(&["x", "y"]);
        let p = parse_hamiltonian("x^2 + y", &v, &[]).unwrap();
        // x -> x + y^2, y -> y  gives (x+y^2)^2 + y.
        let img = vec![
            parse_hamiltonian("x + y^2", &v, &[]).unwrap(),
            parse_hamiltonian("y", &v, &[]).unwrap(),
        ];
        let s = p.substitute(&img);
        let expect = parse_hamiltonian("x^2 + 2*x*y^2 + y^4 + y", &v, &[]).unwrap();
        assert_eq!(s, expect);
    }

    #[test]
    fn decimal_and_scientific_literals_are_exact() {
        let v = vars(&["x"]);
        let p = parse_hamiltonian("0.25*x + 1e-2", &v, &[]).unwrap();
        let c: Vec<_> = p.terms.values().collect();
        assert_eq!(c[0], &CNum::from_ratio(1, 100));
        assert_eq!(c[1], &CNum::from_ratio(1, 4));
    }
}
