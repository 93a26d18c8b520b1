//! Signatures, gamma matrices and multi-indices.
//!
//! Spacetime indices are 1-based throughout: the index set is `{1, …, d}`,
//! the first `p` directions are time-like (`e_μ = +1`) and the last `q` are
//! space-like (`e_μ = −1`). Gamma matrices are built with exact entries in
//! `{0, ±1, ±i}` and stored over `Complex<i64>`, so that traces of products
//! are integers and can be compared without tolerance.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact complex integer matrix used for gamma matrices and their products.
pub type ExactMatrix = DMatrix<Complex<i64>>;

/// Metric signature `(p, q)` of a fuzzy geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    /// Number of time-like directions (`e_μ = +1`).
    pub p: usize,
    /// Number of space-like directions (`e_μ = −1`).
    pub q: usize,
}

/// The eight entries of the KO-dimension sign table, indexed by `s`.
const EPS: [i8; 8] = [1, 1, -1, -1, -1, -1, 1, 1];
const EPS_PRIME: [i8; 8] = [1, -1, 1, 1, 1, -1, 1, 1];
const EPS_DOUBLE_PRIME: [i8; 8] = [1, 1, -1, 1, 1, 1, -1, 1];

impl Signature {
    /// Builds a signature, rejecting the empty geometry `p + q = 0`.
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p + q == 0 {
            return Err(Error::InvalidSignature {
                p,
                q,
                reason: "p + q must be at least 1".into(),
            });
        }
        Ok(Self { p, q })
    }

    /// Parses `"p,q"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::Parse(format!(
                "signature must look like `p,q`, got `{text}`"
            )));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("signature entry `{s}` is not a count")))
        };
        Self::new(parse(parts[0])?, parse(parts[1])?)
    }

    /// Dimension `d = p + q`.
    pub fn d(&self) -> usize {
        self.p + self.q
    }

    /// KO-dimension `s = (q − p) mod 8`.
    pub fn s(&self) -> usize {
        (self.q as i64 - self.p as i64).rem_euclid(8) as usize
    }

    /// Diagonal metric signs `e_1, …, e_d` (index 0 holds `e_1`).
    pub fn metric(&self) -> Vec<i8> {
        (1..=self.d()).map(|mu| self.e(mu)).collect()
    }

    /// Metric sign `e_μ` for a 1-based index (`+1` time-like, `−1` space-like).
    pub fn e(&self, mu: usize) -> i8 {
        debug_assert!(mu >= 1 && mu <= self.d());
        if mu <= self.p {
            1
        } else {
            -1
        }
    }

    /// Whether the 1-based index is space-like.
    pub fn is_spatial(&self, mu: usize) -> bool {
        mu > self.p
    }

    /// Sign triple `(ε, ε′, ε″)` determined by the KO-dimension.
    pub fn epsilon_triple(&self) -> (i8, i8, i8) {
        let s = self.s();
        (EPS[s], EPS_PRIME[s], EPS_DOUBLE_PRIME[s])
    }

    /// Spinor dimension `2^⌊d/2⌋`.
    pub fn dim_v(&self) -> usize {
        1 << (self.d() / 2)
    }

    /// `(−1)^q`, the product of all metric signs.
    pub fn metric_product(&self) -> i8 {
        if self.q % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.p, self.q)
    }
}

/// Exact gamma-matrix representation on the spinor space `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaRep {
    /// Signature the representation was built for.
    pub signature: Signature,
    /// `dim V = 2^⌊d/2⌋`.
    pub dim_v: usize,
    /// `γ^1, …, γ^d` (index 0 holds `γ^1`).
    pub gammas: Vec<ExactMatrix>,
    /// Chirality `(−i)^{s(s−1)/2} γ^1⋯γ^d`.
    pub chirality: ExactMatrix,
}

fn c(re: i64, im: i64) -> Complex<i64> {
    Complex::new(re, im)
}

fn pauli(k: usize) -> ExactMatrix {
    match k {
        0 => ExactMatrix::from_row_slice(2, 2, &[c(1, 0), c(0, 0), c(0, 0), c(1, 0)]),
        1 => ExactMatrix::from_row_slice(2, 2, &[c(0, 0), c(1, 0), c(1, 0), c(0, 0)]),
        2 => ExactMatrix::from_row_slice(2, 2, &[c(0, 0), c(0, -1), c(0, 1), c(0, 0)]),
        3 => ExactMatrix::from_row_slice(2, 2, &[c(1, 0), c(0, 0), c(0, 0), c(-1, 0)]),
        _ => unreachable!("Pauli index out of range"),
    }
}

/// Kronecker product for exact matrices.
pub fn kron_exact(a: &ExactMatrix, b: &ExactMatrix) -> ExactMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    ExactMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Conjugate transpose of an exact matrix.
pub fn adjoint_exact(m: &ExactMatrix) -> ExactMatrix {
    m.map(|z| z.conj()).transpose()
}

/// Converts an exact matrix into a floating-point one.
pub fn to_complex64(m: &ExactMatrix) -> DMatrix<Complex64> {
    m.map(|z| Complex64::new(z.re as f64, z.im as f64))
}

fn exact_identity(n: usize) -> ExactMatrix {
    ExactMatrix::from_fn(n, n, |i, j| if i == j { c(1, 0) } else { c(0, 0) })
}

/// Hermitian, mutually anticommuting matrices squaring to one, built from
/// tensor products of Pauli matrices.
fn euclidean_generators(d: usize) -> Vec<ExactMatrix> {
    let m = d / 2;
    let factor = |slots: &[usize]| -> ExactMatrix {
        let mut out = exact_identity(1);
        for &k in slots {
            out = kron_exact(&out, &pauli(k));
        }
        out
    };
    let mut gens = Vec::with_capacity(d);
    for k in 0..m {
        for sigma in [1usize, 2] {
            let mut slots = vec![0usize; m];
            for slot in slots.iter_mut().take(k) {
                *slot = 3;
            }
            slots[k] = sigma;
            gens.push(factor(&slots));
        }
    }
    if d % 2 == 1 {
        gens.push(factor(&vec![3usize; m]));
    }
    gens
}

/// Builds the gamma matrices for `sig`.
///
/// The Hermitian generators come from the tensor-product construction; the
/// last `q` of them are multiplied by `i` to become anti-Hermitian with
/// square `−1`. The output is deterministic.
pub fn build_gamma(sig: Signature) -> Result<GammaRep> {
    let d = sig.d();
    if d == 0 {
        return Err(Error::InvalidSignature {
            p: sig.p,
            q: sig.q,
            reason: "p + q must be at least 1".into(),
        });
    }
    let gammas: Vec<ExactMatrix> = euclidean_generators(d)
        .into_iter()
        .enumerate()
        .map(|(k, g)| if k < sig.p { g } else { g.map(|z| z * c(0, 1)) })
        .collect();
    let dim_v = sig.dim_v();
    let mut product = exact_identity(dim_v);
    for g in &gammas {
        product = &product * g;
    }
    let s = sig.s();
    let phase = match (s * s.saturating_sub(1) / 2) % 4 {
        0 => c(1, 0),
        1 => c(0, -1),
        2 => c(-1, 0),
        _ => c(0, 1),
    };
    let chirality = product.map(|z| z * phase);
    Ok(GammaRep {
        signature: sig,
        dim_v,
        gammas,
        chirality,
    })
}

/// Strictly increasing tuple of 1-based spacetime indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    indices: Vec<usize>,
}

impl MultiIndex {
    /// Validates and wraps a strictly increasing, nonempty index tuple in `1..=d`.
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidIndex {
            indices: indices.clone(),
            d,
            reason: reason.into(),
        };
        if indices.is_empty() {
            return Err(bad("multi-index must be nonempty"));
        }
        if indices.iter().any(|&i| i == 0 || i > d) {
            return Err(bad("index out of range 1..=d"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("indices must be strictly increasing"));
        }
        Ok(Self { indices })
    }

    /// Parses `"1,2,3"` (also accepts surrounding parentheses).
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        let trimmed = text.trim().trim_start_matches('(').trim_end_matches(')');
        let indices = trimmed
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad multi-index `{text}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, d)
    }

    /// The underlying 1-based indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Cardinality `|I|`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// Always false: multi-indices are nonempty by construction.
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of space-like entries `u(I)`.
    pub fn u(&self, sig: &Signature) -> usize {
        self.indices.iter().filter(|&&i| sig.is_spatial(i)).count()
    }

    /// Number of time-like entries `t(I)`.
    pub fn t(&self, sig: &Signature) -> usize {
        self.len() - self.u(sig)
    }

    /// `r(I)` with `|I| = 2r − 1` (meaningful for odd cardinality).
    pub fn r(&self) -> usize {
        self.len().div_ceil(2)
    }

    /// Complement `Δ_d \ I` (used for the `X_μ = K_{μ̂}` aliases in `d = 4`).
    pub fn complement(&self, d: usize) -> Option<MultiIndex> {
        let rest: Vec<usize> = (1..=d).filter(|i| !self.indices.contains(i)).collect();
        if rest.is_empty() {
            None
        } else {
            Some(MultiIndex { indices: rest })
        }
    }

    fn check_range(&self, sig: &Signature) -> Result<()> {
        if self.indices.iter().any(|&i| i > sig.d()) {
            return Err(Error::InvalidIndex {
                indices: self.indices.clone(),
                d: sig.d(),
                reason: "index out of range 1..=d".into(),
            });
        }
        Ok(())
    }
}

impl Ord for MultiIndex {
    /// Letter order: first by cardinality, then lexicographically.
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.indices.cmp(&other.indices))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Whether a coefficient matrix is Hermitian or anti-Hermitian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LetterType {
    /// Hermitian matrix entering through an anticommutator.
    H,
    /// Anti-Hermitian matrix entering through a commutator.
    L,
}

impl LetterType {
    /// `+1` for `H`, `−1` for `L`: the sign picked up under `*`.
    pub fn star_sign(self) -> i8 {
        match self {
            LetterType::H => 1,
            LetterType::L => -1,
        }
    }

    /// Inverse of [`LetterType::star_sign`].
    pub fn from_sign(sign: i8) -> Self {
        if sign > 0 {
            LetterType::H
        } else {
            LetterType::L
        }
    }
}

impl fmt::Display for LetterType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LetterType::H => write!(f, "H"),
            LetterType::L => write!(f, "L"),
        }
    }
}

/// Sign `e_I = (−1)^{u + ⌊(u+t)/2⌋}` with `(Γ^I)* = e_I Γ^I`.
pub fn hermiticity_sign(index: &MultiIndex, sig: &Signature) -> Result<i8> {
    index.check_range(sig)?;
    let u = index.u(sig);
    let exponent = u + index.len() / 2;
    Ok(if exponent % 2 == 0 { 1 } else { -1 })
}

/// Letter type of an odd-cardinality multi-index in even dimension.
///
/// With `|I| = 2r − 1`, the letter is `H` when `u` and `r` have opposite
/// parity classes `(even, odd)` or `(odd, even)`, and `L` otherwise.
pub fn letter_type(index: &MultiIndex, sig: &Signature) -> Result<LetterType> {
    index.check_range(sig)?;
    if sig.d() % 2 == 1 {
        return Err(Error::OddDimension {
            d: sig.d(),
            reason: "letter types are tabulated for even d only".into(),
        });
    }
    if index.len() % 2 == 0 {
        return Err(Error::InvalidIndex {
            indices: index.indices().to_vec(),
            d: sig.d(),
            reason: "even-d Dirac parametrisation uses odd cardinality only".into(),
        });
    }
    let u_even = index.u(sig) % 2 == 0;
    let r_odd = index.r() % 2 == 1;
    Ok(if u_even == r_odd {
        LetterType::H
    } else {
        LetterType::L
    })
}

/// All nonempty strictly increasing tuples over `1..=d`, in letter order.
pub fn all_multi_indices(d: usize) -> Vec<MultiIndex> {
    let mut out: Vec<MultiIndex> = (1u32..(1u32 << d))
        .map(|mask| MultiIndex {
            indices: (0..d)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| b + 1)
                .collect(),
        })
        .collect();
    out.sort();
    out
}

/// Odd-cardinality multi-indices (`2^{d−1}` of them), in letter order.
pub fn odd_multi_indices(d: usize) -> Vec<MultiIndex> {
    all_multi_indices(d)
        .into_iter()
        .filter(|i| i.len() % 2 == 1)
        .collect()
}

/// Ordered product `Γ^I = γ^{i_1}⋯γ^{i_k}`.
pub fn gamma_product(rep: &GammaRep, index: &MultiIndex) -> Result<ExactMatrix> {
    index.check_range(&rep.signature)?;
    let mut out = exact_identity(rep.dim_v);
    for &i in index.indices() {
        out = &out * &rep.gammas[i - 1];
    }
    Ok(out)
}

/// Literal trace `Tr_V(γ^{μ_1}⋯γ^{μ_n})` of a product of gamma matrices.
pub fn direct_gamma_trace(rep: &GammaRep, indices: &[usize]) -> Result<Complex<i64>> {
    let d = rep.signature.d();
    if let Some(&bad) = indices.iter().find(|&&i| i == 0 || i > d) {
        return Err(Error::InvalidIndex {
            indices: indices.to_vec(),
            d,
            reason: format!("index {bad} out of range 1..=d"),
        });
    }
    let mut out = exact_identity(rep.dim_v);
    for &i in indices {
        out = &out * &rep.gammas[i - 1];
    }
    Ok(out.trace())
}
