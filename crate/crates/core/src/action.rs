//! Closed-form spectral-action evaluators, the observable `F` and the
//! `d = 1` auxiliary split.
//!
//! Every evaluator returns a normalised quantity (for instance
//! `(1/4) Tr D⁴`) together with a documented multiplier that converts it to
//! the raw trace `Tr D^m`. All cross-checks in this crate compare raw traces.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clifford::{build_gamma, LetterType, Signature};
use crate::dirac::{
    assemble_dense, dim_cap, hermiticity_defect, CMatrix, DiracData, HERMITICITY_TOL,
};
use crate::error::{Error, Result};
use crate::ncpoly::{evaluate_functionals, generate_trace_functionals};
use crate::oracle::trace_power;

/// Multiplier from [`tr_d2`] to `Tr D²`: `dim V`.
pub fn tr_d2_multiplier(sig: &Signature) -> f64 {
    sig.dim_v() as f64
}

/// Multiplier from [`tr_d4_dim2`] (`(1/4) Tr D⁴`) to `Tr D⁴`.
pub const TR_D4_DIM2_MULTIPLIER: f64 = 4.0;

/// Multiplier from [`tr_d6_dim2`] (`(1/2) Tr D⁶`) to `Tr D⁶`.
pub const TR_D6_DIM2_MULTIPLIER: f64 = 2.0;

/// Multiplier from [`tr_d4_dim4`] (`(1/4) Tr D⁴`) to `Tr D⁴`.
pub const TR_D4_DIM4_MULTIPLIER: f64 = 4.0;

/// Multiplier from [`tr_d4_dim1`] (`(1/2) Tr D⁴`) to `Tr D⁴`.
pub const TR_D4_DIM1_MULTIPLIER: f64 = 2.0;

/// A polynomial `f(x) = Σ_m f_m x^m` without constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<u32, f64>", into = "BTreeMap<u32, f64>")]
pub struct ActionSpec {
    coefficients: BTreeMap<u32, f64>,
}

impl ActionSpec {
    /// Builds a spec from `(power, coefficient)` pairs; zero coefficients are
    /// dropped and repeated powers are summed.
    pub fn new(terms: impl IntoIterator<Item = (u32, f64)>) -> Result<Self> {
        let mut coefficients = BTreeMap::new();
        for (m, c) in terms {
            if m == 0 {
                return Err(Error::Parse(
                    "the action has no constant term (power 0)".into(),
                ));
            }
            if !c.is_finite() {
                return Err(Error::Parse(format!("coefficient of x^{m} is not finite")));
            }
            *coefficients.entry(m).or_insert(0.0) += c;
        }
        coefficients.retain(|_, c| *c != 0.0);
        Ok(Self { coefficients })
    }

    /// Coefficients by power.
    pub fn coefficients(&self) -> &BTreeMap<u32, f64> {
        &self.coefficients
    }

    /// Coefficient of `x^m` (zero when absent).
    pub fn coefficient(&self, m: u32) -> f64 {
        self.coefficients.get(&m).copied().unwrap_or(0.0)
    }

    /// Highest power with a nonzero coefficient.
    pub fn degree(&self) -> Option<u32> {
        self.coefficients.keys().next_back().copied()
    }

    /// Powers with odd exponent; they vanish identically for even `d`.
    pub fn odd_powers(&self) -> Vec<u32> {
        self.coefficients
            .keys()
            .copied()
            .filter(|m| m % 2 == 1)
            .collect()
    }

    /// Whether `f(x) → ∞` as `|x| → ∞`: even degree with positive leading
    /// coefficient. Required for a normalisable Boltzmann weight.
    pub fn is_confining(&self) -> bool {
        match self.degree() {
            Some(m) => m % 2 == 0 && self.coefficient(m) > 0.0,
            None => false,
        }
    }
}

impl TryFrom<BTreeMap<u32, f64>> for ActionSpec {
    type Error = Error;

    fn try_from(map: BTreeMap<u32, f64>) -> Result<Self> {
        ActionSpec::new(map)
    }
}

impl From<ActionSpec> for BTreeMap<u32, f64> {
    fn from(spec: ActionSpec) -> Self {
        spec.coefficients
    }
}

impl FromStr for ActionSpec {
    type Err = Error;

    /// Parses `m:coeff` pairs separated by commas, e.g. `2:1,4:0.5`.
    fn from_str(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (m, c) = part.split_once(':').ok_or_else(|| {
                Error::Parse(format!("expected `power:coefficient`, got `{part}`"))
            })?;
            let m: u32 = m
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad power `{m}` in `{part}`")))?;
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad coefficient `{c}` in `{part}`")))?;
            terms.push((m, c));
        }
        if terms.is_empty() {
            return Err(Error::Parse("empty action polynomial".into()));
        }
        ActionSpec::new(terms)
    }
}

impl fmt::Display for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .coefficients
            .iter()
            .map(|(m, c)| format!("{m}:{c}"))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Which evaluator produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    /// Hand-coded closed form.
    ClosedForm,
    /// Symbolic functional from the chord-diagram generator.
    Generated,
    /// Dense assembled operator.
    Oracle,
    /// Vanishes identically (odd power in even dimension).
    Vanishing,
}

impl fmt::Display for EvalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalPath::ClosedForm => "closed_form",
            EvalPath::Generated => "generated",
            EvalPath::Oracle => "oracle",
            EvalPath::Vanishing => "vanishing",
        })
    }
}

impl FromStr for EvalPath {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text.trim() {
            "closed_form" => Ok(EvalPath::ClosedForm),
            "generated" => Ok(EvalPath::Generated),
            "oracle" => Ok(EvalPath::Oracle),
            other => Err(Error::Parse(format!(
                "unknown evaluation path `{other}` (closed_form, generated, oracle)"
            ))),
        }
    }
}

/// Trace of a product of matrices.
fn tr(ms: &[&CMatrix]) -> Complex64 {
    match ms {
        [] => Complex64::new(0.0, 0.0),
        [a] => a.trace(),
        [init @ .., last] => {
            let mut acc = (*init[0]).clone();
            for m in &init[1..] {
                acc *= *m;
            }
            let n = acc.nrows();
            let mut t = Complex64::new(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    t += acc[(i, j)] * last[(j, i)];
                }
            }
            t
        }
    }
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn sign_pow(q: usize) -> f64 {
    if q % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn require_dim(data: &DiracData, d: usize, what: &str) -> Result<()> {
    if data.signature().d() != d {
        return Err(Error::Shape(format!(
            "{what} needs d = {d}, got signature {}",
            data.signature()
        )));
    }
    Ok(())
}

/// `(1/dim V) Tr D²` from explicit terms `(⟨I I⟩, e_I, K_I)`; this covers
/// odd dimensions where the caller supplies the signs.
pub fn tr_d2_from_terms(n: usize, terms: &[(i8, i8, &CMatrix)]) -> f64 {
    let mut total = c(0.0);
    for &(bracket_sign, e, k) in terms {
        let t = k.trace();
        total += c(2.0 * bracket_sign as f64) * (c(n as f64) * tr(&[k, k]) + c(e as f64) * t * t);
    }
    total.re
}

/// `(1/dim V) Tr D² = 2 Σ_I e_I [N Tr K_I² + e_I (Tr K_I)²]`.
pub fn tr_d2(data: &DiracData) -> f64 {
    let terms: Vec<(i8, i8, &CMatrix)> = data.iter().map(|(s, k)| (s.e, s.e, k)).collect();
    tr_d2_from_terms(data.n(), &terms)
}

fn tr_d4_dim2_complex(data: &DiracData) -> Complex64 {
    let sig = data.signature();
    let n = c(data.n() as f64);
    let k = [data.k(1), data.k(2)];
    let e = [sig.e(1) as f64, sig.e(2) as f64];
    let e12 = c(e[0] * e[1]);
    let single = tr(&[k[0], k[0], k[0], k[0]])
        + tr(&[k[1], k[1], k[1], k[1]])
        + c(4.0) * e12 * tr(&[k[0], k[0], k[1], k[1]])
        - c(2.0) * e12 * tr(&[k[0], k[1], k[0], k[1]]);
    let t12 = tr(&[k[0], k[1]]);
    let mut curly = t12 * t12;
    for mu in 0..2 {
        let inner = c(e[0]) * tr(&[k[mu], k[0], k[0]]) + c(e[1]) * tr(&[k[mu], k[1], k[1]]);
        curly += k[mu].trace() * inner;
    }
    let sq = [tr(&[k[0], k[0]]), tr(&[k[1], k[1]])];
    n * single
        + c(4.0) * curly
        + c(3.0) * (sq[0] * sq[0] + sq[1] * sq[1])
        + c(2.0) * e12 * sq[0] * sq[1]
}

/// `(1/4) Tr D⁴` for `d = 2` in any signature.
pub fn tr_d4_dim2(data: &DiracData) -> Result<f64> {
    require_dim(data, 2, "the two-dimensional quartic")?;
    Ok(tr_d4_dim2_complex(data).re)
}

fn tr_d6_dim2_complex(data: &DiracData) -> Complex64 {
    let sig = data.signature();
    let n = c(data.n() as f64);
    let k1 = data.k(1);
    let k2 = data.k(2);
    let e1 = c(sig.e(1) as f64);
    let e2 = c(sig.e(2) as f64);
    let e12 = e1 * e2;

    let half = |a: &CMatrix, b: &CMatrix, ea: Complex64, eb: Complex64| -> Complex64 {
        ea * tr(&[a, a, a, a, a, a]) + c(6.0) * eb * tr(&[a, a, a, a, b, b])
            - c(6.0) * eb * tr(&[a, a, a, b, a, b])
            + c(3.0) * eb * tr(&[a, a, b, a, a, b])
    };
    let single = c(2.0) * (half(k1, k2, e1, e2) + half(k2, k1, e2, e1));

    let linear = |a: &CMatrix, b: &CMatrix| -> Complex64 {
        c(6.0)
            * a.trace()
            * (c(2.0) * tr(&[a, a, a, a, a])
                + c(2.0) * tr(&[a, b, b, b, b])
                + c(6.0) * e12 * tr(&[a, a, a, b, b])
                - c(2.0) * e12 * tr(&[a, a, b, a, b]))
    };
    let quadratic = |a: &CMatrix, b: &CMatrix, ea: Complex64, eb: Complex64| -> Complex64 {
        c(6.0)
            * tr(&[a, a])
            * (eb * (c(8.0) * tr(&[a, a, b, b]) - c(2.0) * tr(&[b, a, b, a]))
                + ea * (c(5.0) * tr(&[a, a, a, a]) + tr(&[b, b, b, b])))
    };
    let t111 = tr(&[k1, k1, k1]);
    let t222 = tr(&[k2, k2, k2]);
    let t112 = tr(&[k1, k1, k2]);
    let t122 = tr(&[k1, k2, k2]);
    let bi = linear(k1, k2)
        + linear(k2, k1)
        + c(48.0) * tr(&[k1, k2]) * (e1 * tr(&[k1, k1, k1, k2]) + e2 * tr(&[k2, k2, k2, k1]))
        + quadratic(k1, k2, e1, e2)
        + quadratic(k2, k1, e2, e1)
        + c(4.0)
            * (c(5.0) * t111 * t111
                + c(6.0) * e12 * t122 * t111
                + c(9.0) * t112 * t112
                + c(5.0) * t222 * t222
                + c(6.0) * e12 * t112 * t222
                + c(9.0) * t122 * t122);
    n * single + bi
}

/// `(1/2) Tr D⁶ = N 𝒮₆ + 𝓑₆` for `d = 2` in any signature.
pub fn tr_d6_dim2(data: &DiracData) -> Result<f64> {
    require_dim(data, 2, "the two-dimensional sextic")?;
    Ok(tr_d6_dim2_complex(data).re)
}

/// Permutations of three elements with their parity sign.
const PERMS3: [([usize; 3], f64); 6] = [
    ([0, 1, 2], 1.0),
    ([1, 2, 0], 1.0),
    ([2, 0, 1], 1.0),
    ([0, 2, 1], -1.0),
    ([2, 1, 0], -1.0),
    ([1, 0, 2], -1.0),
];

/// The ordered complement of a 0-based index in `{0,1,2,3}`.
fn complement3(mu: usize) -> [usize; 3] {
    let mut out = [0; 3];
    let mut k = 0;
    for a in 0..4 {
        if a != mu {
            out[k] = a;
            k += 1;
        }
    }
    out
}

/// The eight `d = 4` matrices and signs with 0-based indices.
struct Quartet<'a> {
    n: Complex64,
    k: [&'a CMatrix; 4],
    x: [&'a CMatrix; 4],
    e: [f64; 4],
    q: usize,
}

impl<'a> Quartet<'a> {
    fn new(data: &'a DiracData) -> Self {
        let sig = data.signature();
        Self {
            n: c(data.n() as f64),
            k: [data.k(1), data.k(2), data.k(3), data.k(4)],
            x: [data.x(1), data.x(2), data.x(3), data.x(4)],
            e: [1, 2, 3, 4].map(|mu| sig.e(mu) as f64),
            q: sig.q,
        }
    }
}

fn tr_d4_dim4_general_complex(data: &DiracData) -> Complex64 {
    let Quartet { n, k, x, e, q } = Quartet::new(data);
    // E = e₁e₂e₃e₄ = (−1)^q, and σ_{μν} = E (−1)^{μ+ν}.
    let big_e = sign_pow(q);
    let alt = |a: usize, b: usize| if (a + b) % 2 == 0 { 1.0 } else { -1.0 };

    // Single-trace part.
    let mut single = c(0.0);
    for mu in 0..4 {
        single += c(2.0) * (tr(&[k[mu], k[mu], k[mu], k[mu]]) + tr(&[x[mu], x[mu], x[mu], x[mu]]));
        single += c(4.0 * big_e)
            * (tr(&[k[mu], x[mu], k[mu], x[mu]]) - c(2.0) * tr(&[k[mu], k[mu], x[mu], x[mu]]));
    }
    for mu in 0..4 {
        for nu in 0..4 {
            if mu == nu {
                continue;
            }
            let ee = e[mu] * e[nu];
            let sigma = big_e * alt(mu, nu);
            if mu < nu {
                single += c(ee)
                    * (c(8.0) * tr(&[k[mu], k[mu], k[nu], k[nu]])
                        + c(8.0) * tr(&[x[mu], x[mu], x[nu], x[nu]])
                        - c(4.0) * tr(&[k[mu], k[nu], k[mu], k[nu]])
                        - c(4.0) * tr(&[x[mu], x[nu], x[mu], x[nu]]));
                single += c(8.0 * sigma)
                    * (tr(&[k[mu], x[nu], k[nu], x[mu]]) + tr(&[k[mu], x[mu], k[nu], x[nu]]));
            }
            single -= c(4.0 * big_e * ee)
                * (tr(&[k[mu], x[nu], k[mu], x[nu]]) + c(2.0) * tr(&[k[mu], k[mu], x[nu], x[nu]]));
            single += c(8.0 * sigma)
                * (tr(&[k[mu], k[nu], x[mu], x[nu]]) - tr(&[k[mu], k[nu], x[nu], x[mu]]));
        }
    }
    for mu in 0..4 {
        let theta = complement3(mu);
        for (perm, parity) in PERMS3 {
            let [a, b, cc] = perm.map(|i| theta[i]);
            single -= c(8.0 * big_e * parity * e[mu])
                * (tr(&[x[mu], k[a], k[b], k[cc]]) + tr(&[k[mu], x[a], x[b], x[cc]]));
        }
    }

    // Bi-trace part.
    let tk: Vec<Complex64> = k.iter().map(|m| m.trace()).collect();
    let tx: Vec<Complex64> = x.iter().map(|m| m.trace()).collect();
    let mut bi = c(0.0);
    for mu in 0..4 {
        for nu in 0..4 {
            let ee = e[mu] * e[nu];
            bi += c(8.0 * e[nu]) * tk[mu] * tr(&[k[mu], k[nu], k[nu]]);
            bi -= c(8.0 * big_e * e[nu]) * tx[mu] * tr(&[x[mu], x[nu], x[nu]]);
            let kk = tr(&[k[mu], k[nu]]);
            let xx = tr(&[x[mu], x[nu]]);
            bi += c(2.0 * ee) * tr(&[k[mu], k[mu]]) * tr(&[k[nu], k[nu]]) + c(4.0) * kk * kk;
            bi += c(2.0 * ee) * tr(&[x[mu], x[mu]]) * tr(&[x[nu], x[nu]]) + c(4.0) * xx * xx;
        }
    }
    for mu in 0..4 {
        let kx = tr(&[k[mu], x[mu]]);
        bi += c(8.0) * kx * kx - c(8.0 * big_e * e[mu]) * tk[mu] * tr(&[k[mu], x[mu], x[mu]])
            + c(8.0 * e[mu]) * tx[mu] * tr(&[k[mu], k[mu], x[mu]])
            - c(4.0 * big_e) * tr(&[k[mu], k[mu]]) * tr(&[x[mu], x[mu]]);
    }
    for mu in 0..4 {
        for nu in 0..4 {
            if mu == nu {
                continue;
            }
            let ee = e[mu] * e[nu];
            let sigma = big_e * alt(mu, nu);
            let kx = tr(&[k[mu], x[nu]]);
            bi += c(24.0) * kx * kx - c(24.0 * big_e * e[nu]) * tk[mu] * tr(&[k[mu], x[nu], x[nu]])
                + c(24.0 * e[mu]) * tx[nu] * tr(&[k[mu], k[mu], x[nu]])
                - c(12.0 * big_e * ee) * tr(&[k[mu], k[mu]]) * tr(&[x[nu], x[nu]]);
            bi += c(8.0 * sigma * e[mu])
                * tk[mu]
                * (tr(&[k[nu], x[nu], x[mu]]) + tr(&[k[nu], x[mu], x[nu]]));
            bi -= c(8.0 * alt(mu, nu) * e[mu])
                * tx[mu]
                * (tr(&[k[mu], k[nu], x[nu]]) + tr(&[k[nu], k[mu], x[nu]]));
            if mu < nu {
                bi += c(16.0 * sigma * ee) * tr(&[k[mu], k[nu]]) * tr(&[x[mu], x[nu]])
                    - c(16.0 * alt(mu, nu) * ee) * tr(&[k[mu], x[nu]]) * tr(&[k[nu], x[mu]])
                    - c(16.0 * alt(mu, nu)) * tr(&[k[mu], x[mu]]) * tr(&[k[nu], x[nu]]);
            }
        }
    }
    for m in 0..4 {
        let theta = complement3(m);
        for (perm, parity) in PERMS3 {
            let [a, b, cc] = perm.map(|i| theta[i]);
            bi += c(8.0 * parity)
                * (tx[m] * tr(&[k[a], k[b], k[cc]])
                    - c(big_e) * tk[m] * tr(&[x[a], x[b], x[cc]])
                    - c(e[b] * e[cc]) * tk[a] * tr(&[x[m], k[b], k[cc]])
                    + c(e[a] * e[m]) * tx[a] * tr(&[k[m], x[b], x[cc]]));
        }
    }
    n * single + bi
}

/// Cached pairwise products of the eight `d = 4` matrices, ordered as
/// `K₁…K₄, X₁…X₄`, so that any quartic trace costs one contraction.
struct ProductTable {
    mats: Vec<CMatrix>,
    pairs: Vec<CMatrix>,
    traces: Vec<Complex64>,
}

impl ProductTable {
    fn new(data: &DiracData) -> Self {
        let mats: Vec<CMatrix> = (1..=4)
            .map(|mu| data.k(mu).clone())
            .chain((1..=4).map(|mu| data.x(mu).clone()))
            .collect();
        let pairs = (0..64).map(|ij| &mats[ij / 8] * &mats[ij % 8]).collect();
        let traces = mats.iter().map(|m| m.trace()).collect();
        Self {
            mats,
            pairs,
            traces,
        }
    }

    fn pair(&self, i: usize, j: usize) -> &CMatrix {
        &self.pairs[8 * i + j]
    }

    /// `Tr(AB)` for matrices of equal shape, without forming the product.
    fn contract(a: &CMatrix, b: &CMatrix) -> Complex64 {
        a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum()
    }

    fn t1(&self, i: usize) -> Complex64 {
        self.traces[i]
    }

    fn t2(&self, i: usize, j: usize) -> Complex64 {
        Self::contract(&self.mats[i], &self.mats[j])
    }

    fn t3(&self, i: usize, j: usize, k: usize) -> Complex64 {
        Self::contract(self.pair(i, j), &self.mats[k])
    }

    fn t4(&self, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        Self::contract(self.pair(i, j), self.pair(k, l))
    }

    /// `Σ_{σ∈S₃} sgn σ · Tr(P a_{σ1} a_{σ2} a_{σ3})`.
    fn antisym4(&self, p: usize, a: [usize; 3]) -> Complex64 {
        PERMS3
            .iter()
            .map(|(s, parity)| c(*parity) * self.t4(p, a[s[0]], a[s[1]], a[s[2]]))
            .sum()
    }

    /// `Σ_{σ∈S₃} sgn σ · Tr(a_{σ1} a_{σ2} a_{σ3})`.
    fn antisym3(&self, a: [usize; 3]) -> Complex64 {
        PERMS3
            .iter()
            .map(|(s, parity)| c(*parity) * self.t3(a[s[0]], a[s[1]], a[s[2]]))
            .sum()
    }
}

/// `(−1)^{a+b}` for 0-based indices.
fn alt_sign(a: usize, b: usize) -> f64 {
    if (a + b) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Riemannian `(0,4)`: `L_μ = K_μ` anti-Hermitian, `H̃_μ = X_μ` Hermitian,
/// every `e_μ = −1` and `q = 4`, so `e₁e₂e₃e₄ = +1`.
fn tr_d4_riemann_complex(data: &DiracData) -> Complex64 {
    let n = c(data.n() as f64);
    let t = ProductTable::new(data);
    let l = |mu: usize| mu;
    let h = |mu: usize| 4 + mu;
    let mut s = c(0.0);
    let mut b = c(0.0);
    for mu in 0..4 {
        let (lm, hm) = (l(mu), h(mu));
        s += c(2.0) * (t.t4(lm, lm, lm, lm) + t.t4(hm, hm, hm, hm))
            + c(4.0) * (t.t4(lm, hm, lm, hm) - c(2.0) * t.t4(lm, lm, hm, hm));
        let theta = complement3(mu);
        s += c(8.0) * (t.antisym4(hm, theta.map(l)) + t.antisym4(lm, theta.map(h)));

        let lh = t.t2(lm, hm);
        b += c(8.0) * lh * lh + c(8.0) * t.t1(lm) * t.t3(lm, hm, hm)
            - c(8.0) * t.t1(hm) * t.t3(lm, lm, hm)
            - c(4.0) * t.t2(lm, lm) * t.t2(hm, hm);
        b += c(8.0) * (t.t1(hm) * t.antisym3(theta.map(l)) - t.t1(lm) * t.antisym3(theta.map(h)));
        for (perm, parity) in PERMS3 {
            let [a, bb, cc] = perm.map(|i| theta[i]);
            b += c(8.0 * parity)
                * (t.t1(h(a)) * t.t3(lm, h(bb), h(cc)) - t.t1(l(a)) * t.t3(hm, l(bb), l(cc)));
        }
        for nu in 0..4 {
            let (ln, hn) = (l(nu), h(nu));
            let (ll, hh) = (t.t2(lm, ln), t.t2(hm, hn));
            b += c(2.0) * (t.t2(lm, lm) * t.t2(ln, ln) + t.t2(hm, hm) * t.t2(hn, hn))
                + c(4.0) * (ll * ll + hh * hh)
                - c(8.0) * t.t1(lm) * t.t3(lm, ln, ln)
                + c(8.0) * t.t1(hm) * t.t3(hm, hn, hn);
            if nu == mu {
                continue;
            }
            let sigma = alt_sign(mu, nu);
            if mu < nu {
                s += c(8.0) * (t.t4(lm, lm, ln, ln) + t.t4(hm, hm, hn, hn))
                    - c(4.0) * (t.t4(lm, ln, lm, ln) + t.t4(hm, hn, hm, hn))
                    + c(8.0 * sigma) * (t.t4(lm, hn, ln, hm) + t.t4(lm, hm, ln, hn));
                b += c(16.0 * sigma)
                    * (t.t2(lm, ln) * t.t2(hm, hn)
                        - t.t2(lm, hn) * t.t2(ln, hm)
                        - t.t2(lm, hm) * t.t2(ln, hn));
            }
            s -= c(4.0) * (t.t4(lm, hn, lm, hn) + c(2.0) * t.t4(lm, lm, hn, hn));
            s += c(8.0 * sigma) * (t.t4(lm, ln, hm, hn) - t.t4(lm, ln, hn, hm));
            let lhn = t.t2(lm, hn);
            b += c(24.0) * lhn * lhn + c(24.0) * t.t1(lm) * t.t3(lm, hn, hn)
                - c(24.0) * t.t1(hn) * t.t3(lm, lm, hn)
                - c(12.0) * t.t2(lm, lm) * t.t2(hn, hn);
            b -= c(8.0 * sigma) * t.t1(lm) * (t.t3(ln, hn, hm) + t.t3(ln, hm, hn));
            b += c(8.0 * sigma) * t.t1(hm) * (t.t3(lm, ln, hn) + t.t3(ln, lm, hn));
        }
    }
    n * s + b
}

/// Lorentzian `(1,3)`: `H = K₁` Hermitian, `L_a = K_{a+1}` anti-Hermitian,
/// `Q = X₁` anti-Hermitian and `R_a = X_{a+1}` Hermitian, with
/// `e = (+,−,−,−)` and `e₁e₂e₃e₄ = −1`.
fn tr_d4_lorentz_complex(data: &DiracData) -> Complex64 {
    let n = c(data.n() as f64);
    let t = ProductTable::new(data);
    // Table slots: H = 0, L_a = a, Q = 4, R_a = 4 + a for a = 1, 2, 3.
    const H: usize = 0;
    const Q: usize = 4;
    let l = |a: usize| a;
    let r = |a: usize| 4 + a;
    let space = [1usize, 2, 3];
    let mut s = c(0.0);
    let mut b = c(0.0);

    // Terms carrying a single index.
    for (kk, xx) in [(H, Q), (l(1), r(1)), (l(2), r(2)), (l(3), r(3))] {
        s += c(2.0) * (t.t4(kk, kk, kk, kk) + t.t4(xx, xx, xx, xx))
            - c(4.0) * (t.t4(kk, xx, kk, xx) - c(2.0) * t.t4(kk, kk, xx, xx));
        let kx = t.t2(kk, xx);
        b += c(8.0) * kx * kx + c(4.0) * t.t2(kk, kk) * t.t2(xx, xx);
    }
    b += c(8.0) * (t.t1(H) * t.t3(H, Q, Q) + t.t1(Q) * t.t3(H, H, Q));
    for a in space {
        b -= c(8.0) * (t.t1(l(a)) * t.t3(l(a), r(a), r(a)) + t.t1(r(a)) * t.t3(l(a), l(a), r(a)));
    }

    // Pure K and pure X sectors: e_μ e_ν is − for a time-space pair.
    for (mu, nu) in (0..4).flat_map(|m| (0..4).map(move |v| (m, v))) {
        let e_nu = if nu == 0 { 1.0 } else { -1.0 };
        let ee = if (mu == 0) == (nu == 0) { 1.0 } else { -1.0 };
        let (km, kn, xm, xn) = (mu, nu, 4 + mu, 4 + nu);
        b += c(8.0 * e_nu) * (t.t1(km) * t.t3(km, kn, kn) + t.t1(xm) * t.t3(xm, xn, xn));
        let (kk, xx) = (t.t2(km, kn), t.t2(xm, xn));
        b += c(2.0 * ee) * (t.t2(km, km) * t.t2(kn, kn) + t.t2(xm, xm) * t.t2(xn, xn))
            + c(4.0) * (kk * kk + xx * xx);
        if mu < nu {
            s += c(ee)
                * (c(8.0) * (t.t4(km, km, kn, kn) + t.t4(xm, xm, xn, xn))
                    - c(4.0) * (t.t4(km, kn, km, kn) + t.t4(xm, xn, xm, xn)));
        }
    }

    // Mixed pairs of distinct indices.
    for (mu, nu) in (0..4).flat_map(|m| (0..4).map(move |v| (m, v))) {
        if mu == nu {
            continue;
        }
        let e_mu = if mu == 0 { 1.0 } else { -1.0 };
        let e_nu = if nu == 0 { 1.0 } else { -1.0 };
        let ee = e_mu * e_nu;
        let alt = alt_sign(mu, nu);
        let sigma = -alt;
        let (km, kn, xm, xn) = (mu, nu, 4 + mu, 4 + nu);
        s += c(4.0 * ee) * (t.t4(km, xn, km, xn) + c(2.0) * t.t4(km, km, xn, xn));
        s += c(8.0 * sigma) * (t.t4(km, kn, xm, xn) - t.t4(km, kn, xn, xm));
        let kx = t.t2(km, xn);
        b += c(24.0) * kx * kx
            + c(24.0 * e_nu) * t.t1(km) * t.t3(km, xn, xn)
            + c(24.0 * e_mu) * t.t1(xn) * t.t3(km, km, xn)
            + c(12.0 * ee) * t.t2(km, km) * t.t2(xn, xn);
        b += c(8.0 * sigma * e_mu) * t.t1(km) * (t.t3(kn, xn, xm) + t.t3(kn, xm, xn));
        b -= c(8.0 * alt * e_mu) * t.t1(xm) * (t.t3(km, kn, xn) + t.t3(kn, km, xn));
        if mu < nu {
            s += c(8.0 * sigma) * (t.t4(km, xn, kn, xm) + t.t4(km, xm, kn, xn));
            b += c(16.0 * sigma * ee) * t.t2(km, kn) * t.t2(xm, xn)
                - c(16.0 * alt * ee) * t.t2(km, xn) * t.t2(kn, xm)
                - c(16.0 * alt) * t.t2(km, xm) * t.t2(kn, xn);
        }
    }

    // Totally antisymmetric sector. For m = 0 the complement is spatial; for
    // a spatial m it contains the time index once.
    s += c(8.0) * (t.antisym4(Q, space.map(l)) + t.antisym4(H, space.map(r)));
    b += c(8.0) * (t.t1(Q) * t.antisym3(space.map(l)) + t.t1(H) * t.antisym3(space.map(r)));
    for m in 1..4 {
        let theta = complement3(m);
        s -= c(8.0) * (t.antisym4(4 + m, theta) + t.antisym4(m, theta.map(|i| 4 + i)));
        b +=
            c(8.0) * (t.t1(4 + m) * t.antisym3(theta) + t.t1(m) * t.antisym3(theta.map(|i| 4 + i)));
    }
    for m in 0..4 {
        let e_m = if m == 0 { 1.0 } else { -1.0 };
        let theta = complement3(m);
        for (perm, parity) in PERMS3 {
            let [a, bb, cc] = perm.map(|i| theta[i]);
            let e_a = if a == 0 { 1.0 } else { -1.0 };
            let e_bc = if bb == 0 || cc == 0 { -1.0 } else { 1.0 };
            b -= c(8.0 * parity * e_bc) * t.t1(a) * t.t3(4 + m, bb, cc);
            b += c(8.0 * parity * e_a * e_m) * t.t1(4 + a) * t.t3(m, 4 + bb, 4 + cc);
        }
    }
    n * s + b
}

/// Which implementation of the `d = 4` quartic to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuarticPath {
    /// General-signature formula.
    General,
    /// Riemannian `(0,4)` specialisation.
    Riemann,
    /// Lorentzian `(1,3)` specialisation.
    Lorentz,
}

fn tr_d4_dim4_complex(data: &DiracData, path: QuarticPath) -> Result<Complex64> {
    require_dim(data, 4, "the four-dimensional quartic")?;
    let sig = data.signature();
    match path {
        QuarticPath::General => Ok(tr_d4_dim4_general_complex(data)),
        QuarticPath::Riemann if (sig.p, sig.q) == (0, 4) => Ok(tr_d4_riemann_complex(data)),
        QuarticPath::Lorentz if (sig.p, sig.q) == (1, 3) => Ok(tr_d4_lorentz_complex(data)),
        _ => Err(Error::Shape(format!(
            "{path:?} path does not apply to signature {sig}"
        ))),
    }
}

/// `(1/4) Tr D⁴` for `d = 4`, dispatching to the Riemannian or Lorentzian
/// specialisation when the signature matches.
pub fn tr_d4_dim4(data: &DiracData) -> Result<f64> {
    let sig = data.signature();
    let path = match (sig.p, sig.q) {
        (0, 4) => QuarticPath::Riemann,
        (1, 3) => QuarticPath::Lorentz,
        _ => QuarticPath::General,
    };
    tr_d4_dim4_with(data, path)
}

/// `(1/4) Tr D⁴` for `d = 4` with an explicit implementation choice.
pub fn tr_d4_dim4_with(data: &DiracData, path: QuarticPath) -> Result<f64> {
    Ok(tr_d4_dim4_complex(data, path)?.re)
}

/// `Tr D^m` for `d = 1` by the binomial expansion
/// `Tr k^m = Σ_j C(m,j) e^j Tr K^{m−j} Tr K^j`, times `γ^m`.
fn trace_power_d1_complex(data: &DiracData, m: u32) -> Complex64 {
    let (slot, k) = data.iter().next().expect("d = 1 has one slot");
    let e = slot.e as f64;
    let n = data.n();
    let mut powers = vec![CMatrix::identity(n, n)];
    for j in 1..=m as usize {
        let next = &powers[j - 1] * k;
        powers.push(next);
    }
    let traces: Vec<Complex64> = powers.iter().map(|p| p.trace()).collect();
    let mut binom = 1.0;
    let mut total = c(0.0);
    for j in 0..=m as usize {
        total += c(binom * e.powi(j as i32)) * traces[m as usize - j] * traces[j];
        binom = binom * (m as usize - j) as f64 / (j + 1) as f64;
    }
    // γ = 1 for (1,0) and γ = i for (0,1).
    let gamma_pow = if slot.letter_type == LetterType::H {
        c(1.0)
    } else {
        Complex64::i().powu(m)
    };
    gamma_pow * total
}

/// `(1/2) Tr D⁴ = N Tr K⁴ + 4e Tr K Tr K³ + 3 (Tr K²)²` for `d = 1`.
pub fn tr_d4_dim1(data: &DiracData) -> Result<f64> {
    require_dim(data, 1, "the one-dimensional quartic")?;
    let (slot, k) = data.iter().next().expect("d = 1 has one slot");
    let e = c(slot.e as f64);
    let n = c(data.n() as f64);
    let t2 = tr(&[k, k]);
    let v = n * tr(&[k, k, k, k]) + c(4.0) * e * k.trace() * tr(&[k, k, k]) + c(3.0) * t2 * t2;
    Ok(v.re)
}

/// `Tr D^m` for `d = 1` and any `m ≥ 1`.
pub fn trace_power_d1(data: &DiracData, m: u32) -> Result<f64> {
    require_dim(data, 1, "the one-dimensional power trace")?;
    Ok(trace_power_d1_complex(data, m).re)
}

/// Raw `Tr D^m` from a closed form, when one covers `(d, m)`:
/// `m = 2` any supported signature, `d = 2` up to `m = 6`, `d = 4` up to
/// `m = 4`, `d = 1` any power. Odd powers vanish for even `d`.
pub fn closed_form_trace(data: &DiracData, m: u32) -> Option<f64> {
    closed_form_trace_complex(data, m).map(|z| z.re)
}

/// Complex version of [`closed_form_trace`] (the imaginary part is a
/// rounding residue for valid inputs).
pub fn closed_form_trace_complex(data: &DiracData, m: u32) -> Option<Complex64> {
    let sig = data.signature();
    let d = sig.d();
    if d == 1 {
        return Some(trace_power_d1_complex(data, m));
    }
    if m % 2 == 1 {
        return Some(c(0.0));
    }
    let dim_v = sig.dim_v() as f64;
    match (d, m) {
        (_, 2) => Some(c(tr_d2(data) * dim_v)),
        (2, 4) => Some(tr_d4_dim2_complex(data) * TR_D4_DIM2_MULTIPLIER),
        (2, 6) => Some(tr_d6_dim2_complex(data) * TR_D6_DIM2_MULTIPLIER),
        (4, 4) => {
            let v = tr_d4_dim4_complex(data, QuarticPath::General).ok()?;
            Some(v * TR_D4_DIM4_MULTIPLIER)
        }
        _ => None,
    }
}

/// Raw `Tr D^{2t}` from the generated functional, when the chord cap allows.
pub fn generated_trace(data: &DiracData, m: u32) -> Result<f64> {
    let sig = data.signature();
    if m % 2 == 1 {
        if sig.d() == 1 {
            return Err(Error::PowerNotCovered {
                power: m,
                reason: "the generator expands even powers only".into(),
            });
        }
        return Ok(0.0);
    }
    let f = generate_trace_functionals(sig, m / 2)?;
    Ok(evaluate_functionals(&f, data)?.re * sig.dim_v() as f64)
}

/// Raw `Tr D^m` from the dense assembled operator.
pub fn oracle_trace(data: &DiracData, m: u32) -> Result<f64> {
    let rep = build_gamma(data.signature())?;
    let d = assemble_dense(data, &rep)?;
    Ok(trace_power(&d, m).re)
}

/// One evaluated power of an action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    /// Power `m`.
    pub power: u32,
    /// Coefficient `f_m`.
    pub coefficient: f64,
    /// Raw `Tr D^m`.
    pub trace: f64,
    /// Evaluator that produced the trace.
    pub path: EvalPath,
}

/// Result of [`spectral_action`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionValue {
    /// `Σ_m f_m Tr D^m`.
    pub total: f64,
    /// Per-power breakdown.
    pub terms: Vec<PowerTerm>,
}

/// Raw `Tr D^m` along a fixed evaluation path.
pub fn trace_via(data: &DiracData, m: u32, path: EvalPath) -> Result<f64> {
    match path {
        EvalPath::ClosedForm => closed_form_trace(data, m).ok_or_else(|| Error::PowerNotCovered {
            power: m,
            reason: format!("no closed form for d = {}", data.signature().d()),
        }),
        EvalPath::Generated => generated_trace(data, m),
        EvalPath::Oracle => oracle_trace(data, m),
        EvalPath::Vanishing => Ok(0.0),
    }
}

/// Raw `Tr D^m`, preferring the closed form, then the generated functional,
/// then the dense oracle.
pub fn trace_auto(data: &DiracData, m: u32) -> Result<(f64, EvalPath)> {
    let sig = data.signature();
    if sig.d() % 2 == 0 && m % 2 == 1 {
        return Ok((0.0, EvalPath::Vanishing));
    }
    if let Some(v) = closed_form_trace(data, m) {
        return Ok((v, EvalPath::ClosedForm));
    }
    match generated_trace(data, m) {
        Ok(v) => return Ok((v, EvalPath::Generated)),
        Err(Error::ChordCapExceeded { .. }) | Err(Error::PowerNotCovered { .. }) => {}
        Err(other) => return Err(other),
    }
    let dim = sig.dim_v() * data.n() * data.n();
    if dim <= dim_cap() {
        return Ok((oracle_trace(data, m)?, EvalPath::Oracle));
    }
    Err(Error::PowerNotCovered {
        power: m,
        reason: format!(
            "beyond the chord cap and the dense dimension cap ({dim} > {})",
            dim_cap()
        ),
    })
}

/// `S(D) = Tr f(D) = Σ_m f_m Tr D^m`, recording the path used per power.
pub fn spectral_action(spec: &ActionSpec, data: &DiracData) -> Result<ActionValue> {
    let mut total = 0.0;
    let mut terms = Vec::with_capacity(spec.coefficients().len());
    for (&m, &coefficient) in spec.coefficients() {
        let (trace, path) = trace_auto(data, m)?;
        total += coefficient * trace;
        terms.push(PowerTerm {
            power: m,
            coefficient,
            trace,
            path,
        });
    }
    Ok(ActionValue { total, terms })
}

/// `S(D)` with every power evaluated along one path.
pub fn spectral_action_via(spec: &ActionSpec, data: &DiracData, path: EvalPath) -> Result<f64> {
    let even_d = data.signature().d() % 2 == 0;
    let mut total = 0.0;
    for (&m, &coefficient) in spec.coefficients() {
        if even_d && m % 2 == 1 {
            continue;
        }
        total += coefficient * trace_via(data, m, path)?;
    }
    Ok(total)
}

/// The `d = 1`, type `(1,0)` split
/// `½ Tr(D² + λD⁴) = N[Tr H² + λ Tr H⁴] + {3λ(Tr H²)² + 4λ Tr H Tr H³ + (Tr H)²}`.
/// Returns `(gaussian_part, bitrace_part)`.
pub fn aux_d1_decompose(h: &CMatrix, lambda: f64) -> Result<(f64, f64)> {
    if h.nrows() != h.ncols() {
        return Err(Error::Shape(format!(
            "H must be square, got {:?}",
            h.shape()
        )));
    }
    let defect = hermiticity_defect(h, LetterType::H);
    if defect > HERMITICITY_TOL * h.norm().max(1.0) {
        return Err(Error::Hermiticity {
            label: "H".into(),
            defect,
        });
    }
    let n = h.nrows() as f64;
    let t1 = h.trace().re;
    let t2 = tr(&[h, h]).re;
    let t3 = tr(&[h, h, h]).re;
    let t4 = tr(&[h, h, h, h]).re;
    let gaussian = n * (t2 + lambda * t4);
    let bitrace = 3.0 * lambda * t2 * t2 + 4.0 * lambda * t1 * t3 + t1 * t1;
    Ok((gaussian, bitrace))
}

/// `F = Σ_μ (Tr H_μ)² / (N Σ_μ Tr H_μ²)` over the Hermitian letters.
pub fn observable_f(data: &DiracData) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (slot, k) in data.iter() {
        if slot.letter_type == LetterType::H {
            let t = k.trace().re;
            num += t * t;
            den += tr(&[k, k]).re;
        }
    }
    den *= data.n() as f64;
    if den == 0.0 {
        return Err(Error::ZeroDenominator("the observable F".into()));
    }
    Ok(num / den)
}
