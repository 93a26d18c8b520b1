//! Parametrisation of Dirac operators and dense assembly.
//!
//! For even `d` a Dirac operator is `D = Σ_I Γ^I ⊗ k_I` over the
//! odd-cardinality multi-indices, with `k_I = K_I ⊗ 1 + e_I 1 ⊗ K_Iᵀ`, i.e.
//! `k_I(R) = K_I R + e_I R K_I` on `R ∈ M_N(ℂ)`. Each `K_I` is Hermitian or
//! anti-Hermitian according to its letter type. The space `M_N(ℂ)` is
//! identified with `ℂ^N ⊗ ℂ^N` through row-major vectorisation, so that
//! `A R Bᵀ` corresponds to `(A ⊗ B) vec(R)`.
//!
//! Dimension one is supported with the single multi-index `(1)`, giving
//! `D = {H, ·}` for `(1,0)` and `D = i[L, ·]` for `(0,1)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clifford::{
    gamma_product, hermiticity_sign, odd_multi_indices, to_complex64, GammaRep, LetterType,
    MultiIndex, Signature,
};
use crate::error::{Error, Result};

/// Dense complex matrix used for coefficients and assembled operators.
pub type CMatrix = DMatrix<Complex64>;

/// Default cap on `dim V · N²` for dense assembly.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Environment variable overriding [`DEFAULT_DIM_CAP`].
pub const DIM_CAP_ENV: &str = "FUZZY_DIM_CAP";

/// Relative tolerance used when validating (anti-)hermiticity.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// One parameter slot of the Dirac operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    /// Multi-index `I`.
    pub index: MultiIndex,
    /// Whether `K_I` is Hermitian or anti-Hermitian.
    pub letter_type: LetterType,
    /// Sign `e_I` selecting anticommutator (`+1`) or commutator (`−1`).
    pub e: i8,
}

/// Parameter slots for a signature, in letter order.
///
/// Even `d` gives the `2^{d−1}` odd-cardinality multi-indices; `d = 1`
/// gives the single index `(1)`. Other odd dimensions are rejected.
pub fn index_set(sig: &Signature) -> Result<Vec<IndexEntry>> {
    let d = sig.d();
    if d == 0 {
        return Err(Error::InvalidSignature {
            p: sig.p,
            q: sig.q,
            reason: "p + q must be at least 1".into(),
        });
    }
    if d % 2 == 1 && d != 1 {
        return Err(Error::OddDimension {
            d,
            reason: "only d = 1 is parametrised among odd dimensions".into(),
        });
    }
    odd_multi_indices(d)
        .into_iter()
        .map(|index| {
            let e = hermiticity_sign(&index, sig)?;
            Ok(IndexEntry {
                index,
                letter_type: LetterType::from_sign(e),
                e,
            })
        })
        .collect()
}

/// Reads the dimension cap from the environment, falling back to the default.
pub fn dim_cap() -> usize {
    std::env::var(DIM_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(DEFAULT_DIM_CAP)
}

/// Projects a matrix onto the Hermitian (`H`) or anti-Hermitian (`L`) part,
/// optionally removing the trace.
pub fn project(m: &CMatrix, letter: LetterType, traceless: bool) -> CMatrix {
    let adj = m.adjoint();
    let mut out = match letter {
        LetterType::H => (m + adj) * Complex64::new(0.5, 0.0),
        LetterType::L => (m - adj) * Complex64::new(0.5, 0.0),
    };
    if traceless {
        let n = out.nrows();
        let shift = out.trace() / n as f64;
        for i in 0..n {
            out[(i, i)] -= shift;
        }
    }
    out
}

/// Hermiticity defect `‖M* − s·M‖_F` for star sign `s`.
pub fn hermiticity_defect(m: &CMatrix, letter: LetterType) -> f64 {
    let sign = letter.star_sign() as f64;
    (m.adjoint() - m * Complex64::new(sign, 0.0)).norm()
}

/// A point of the parameter space: one coefficient matrix per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiracDataRepr", into = "DiracDataRepr")]
pub struct DiracData {
    signature: Signature,
    n: usize,
    slots: Vec<IndexEntry>,
    matrices: Vec<CMatrix>,
    traceless_l: bool,
}

impl DiracData {
    /// All-zero data.
    pub fn zeros(sig: Signature, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Shape("matrix size N must be at least 1".into()));
        }
        let slots = index_set(&sig)?;
        let matrices = slots.iter().map(|_| CMatrix::zeros(n, n)).collect();
        Ok(Self {
            signature: sig,
            n,
            slots,
            matrices,
            traceless_l: false,
        })
    }

    /// Builds data from explicit matrices keyed by multi-index.
    ///
    /// Every slot must be present, every matrix must be `N × N` and satisfy
    /// its hermiticity constraint, and L-matrices must be traceless when
    /// `traceless_l` is set.
    pub fn from_entries(
        sig: Signature,
        n: usize,
        entries: BTreeMap<MultiIndex, CMatrix>,
        traceless_l: bool,
    ) -> Result<Self> {
        let mut data = Self::zeros(sig, n)?;
        data.traceless_l = traceless_l;
        let mut entries = entries;
        for k in 0..data.slots.len() {
            let index = data.slots[k].index.clone();
            let m = entries.remove(&index).ok_or_else(|| {
                Error::MissingCoefficient(format!("no matrix for multi-index ({index})"))
            })?;
            data.set(&index, m)?;
        }
        if let Some(extra) = entries.keys().next() {
            return Err(Error::MissingCoefficient(format!(
                "multi-index ({extra}) is not a parameter of signature {sig}"
            )));
        }
        Ok(data)
    }

    /// Signature of the geometry.
    pub fn signature(&self) -> Signature {
        self.signature
    }

    /// Matrix size `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Whether L-matrices are constrained to be traceless.
    pub fn traceless_l(&self) -> bool {
        self.traceless_l
    }

    /// Parameter slots in letter order.
    pub fn slots(&self) -> &[IndexEntry] {
        &self.slots
    }

    /// Matrices in slot order.
    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    /// Mutable access for internal updates that preserve the invariants.
    pub(crate) fn matrices_mut(&mut self) -> &mut [CMatrix] {
        &mut self.matrices
    }

    /// Iterates `(slot, matrix)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&IndexEntry, &CMatrix)> {
        self.slots.iter().zip(self.matrices.iter())
    }

    /// Position of a multi-index among the slots.
    pub fn position(&self, index: &MultiIndex) -> Option<usize> {
        self.slots.iter().position(|s| &s.index == index)
    }

    /// Coefficient matrix `K_I`.
    pub fn get(&self, index: &MultiIndex) -> Option<&CMatrix> {
        self.position(index).map(|k| &self.matrices[k])
    }

    /// `K_μ` for a single 1-based index.
    pub fn k(&self, mu: usize) -> &CMatrix {
        let index = MultiIndex::new(vec![mu], self.signature.d()).expect("index in range");
        self.get(&index).expect("single indices are always slots")
    }

    /// `X_μ = K_{μ̂}` for `d = 4`, the matrix of the complementary triple.
    pub fn x(&self, mu: usize) -> &CMatrix {
        let d = self.signature.d();
        let index = MultiIndex::new(vec![mu], d)
            .expect("index in range")
            .complement(d)
            .expect("complement is nonempty");
        self.get(&index)
            .expect("complementary triples are slots in d = 4")
    }

    /// Replaces the matrix of one slot after validating it.
    pub fn set(&mut self, index: &MultiIndex, m: CMatrix) -> Result<()> {
        let k = self.position(index).ok_or_else(|| {
            Error::MissingCoefficient(format!(
                "multi-index ({index}) is not a parameter of signature {}",
                self.signature
            ))
        })?;
        if m.shape() != (self.n, self.n) {
            return Err(Error::Shape(format!(
                "matrix for ({index}) is {:?}, expected {n}x{n}",
                m.shape(),
                n = self.n
            )));
        }
        let letter = self.slots[k].letter_type;
        let defect = hermiticity_defect(&m, letter);
        if defect > HERMITICITY_TOL * m.norm().max(1.0) {
            return Err(Error::Hermiticity {
                label: format!("({index}) of type {letter}"),
                defect,
            });
        }
        if self.traceless_l && letter == LetterType::L {
            let tr = m.trace().norm();
            if tr > HERMITICITY_TOL * m.norm().max(1.0) * self.n as f64 {
                return Err(Error::Hermiticity {
                    label: format!("({index}) must be traceless"),
                    defect: tr,
                });
            }
        }
        self.matrices[k] = m;
        Ok(())
    }

    /// Multiplies every coefficient matrix by a real factor.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for m in out.matrices.iter_mut() {
            *m *= Complex64::new(factor, 0.0);
        }
        out
    }

    /// Replaces every L-matrix by its traceless shift `L − (Tr L / N)·1`.
    pub fn with_traceless_l(&self) -> Self {
        let mut out = self.clone();
        for (slot, m) in out.slots.iter().zip(out.matrices.iter_mut()) {
            if slot.letter_type == LetterType::L {
                *m = project(m, LetterType::L, true);
            }
        }
        out.traceless_l = true;
        out
    }

    /// Serialises to the documented JSON format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("DiracData serialisation cannot fail")
    }

    /// Parses the documented JSON format, validating all invariants.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("DiracData JSON: {e}")))
    }
}

/// Draws random data with Gaussian entries of standard deviation `scale`
/// (default `1/√N`), projected to each slot's hermiticity class.
pub fn random_dirac_data(
    sig: Signature,
    n: usize,
    seed: u64,
    scale: Option<f64>,
    traceless_l: bool,
) -> Result<DiracData> {
    let mut data = DiracData::zeros(sig, n)?;
    data.traceless_l = traceless_l;
    let scale = scale.unwrap_or(1.0 / (n as f64).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for k in 0..data.slots.len() {
        let raw = CMatrix::from_fn(n, n, |_, _| {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            Complex64::new(scale * re, scale * im)
        });
        let letter = data.slots[k].letter_type;
        data.matrices[k] = project(&raw, letter, traceless_l && letter == LetterType::L);
    }
    Ok(data)
}

/// Kronecker product of dense complex matrices.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMatrix::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// `k_I = K ⊗ 1 + e · 1 ⊗ Kᵀ` on row-major vectorised `M_N(ℂ)`.
pub fn bimodule_operator(k: &CMatrix, e: i8) -> CMatrix {
    let n = k.nrows();
    let id = CMatrix::identity(n, n);
    kron(k, &id) + kron(&id, &k.transpose()) * Complex64::new(e as f64, 0.0)
}

/// Assembles the dense Dirac operator `Σ_I Γ^I ⊗ k_I` on `V ⊗ ℂ^N ⊗ ℂ^N`.
pub fn assemble_dense(data: &DiracData, rep: &GammaRep) -> Result<CMatrix> {
    assemble_dense_with_cap(data, rep, dim_cap())
}

/// Same as [`assemble_dense`] with an explicit dimension cap.
pub fn assemble_dense_with_cap(data: &DiracData, rep: &GammaRep, cap: usize) -> Result<CMatrix> {
    if rep.signature != data.signature {
        return Err(Error::Shape(format!(
            "gamma representation is for {} but data is for {}",
            rep.signature, data.signature
        )));
    }
    let n = data.n;
    let dim = rep.dim_v * n * n;
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    let mut out = CMatrix::zeros(dim, dim);
    for (slot, k) in data.iter() {
        let gamma = to_complex64(&gamma_product(rep, &slot.index)?);
        let op = bimodule_operator(k, slot.e);
        out += kron(&gamma, &op);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SignatureRepr {
    p: usize,
    q: usize,
}

#[derive(Serialize, Deserialize)]
struct DiracDataRepr {
    signature: SignatureRepr,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "traceless_L", default)]
    traceless_l: bool,
    entries: BTreeMap<String, Vec<[f64; 2]>>,
}

impl From<DiracData> for DiracDataRepr {
    fn from(data: DiracData) -> Self {
        let entries = data
            .iter()
            .map(|(slot, m)| {
                let n = m.nrows();
                let mut values = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let z = m[(i, j)];
                        values.push([z.re, z.im]);
                    }
                }
                (slot.index.to_string(), values)
            })
            .collect();
        DiracDataRepr {
            signature: SignatureRepr {
                p: data.signature.p,
                q: data.signature.q,
            },
            n: data.n,
            traceless_l: data.traceless_l,
            entries,
        }
    }
}

impl TryFrom<DiracDataRepr> for DiracData {
    type Error = Error;

    fn try_from(repr: DiracDataRepr) -> Result<Self> {
        let sig = Signature::new(repr.signature.p, repr.signature.q)?;
        let n = repr.n;
        let mut entries = BTreeMap::new();
        for (key, values) in repr.entries {
            let index = MultiIndex::parse(&key, sig.d())?;
            if values.len() != n * n {
                return Err(Error::Shape(format!(
                    "entry ({key}) has {} values, expected {}",
                    values.len(),
                    n * n
                )));
            }
            let m = CMatrix::from_fn(n, n, |i, j| {
                let [re, im] = values[i * n + j];
                Complex64::new(re, im)
            });
            entries.insert(index, m);
        }
        DiracData::from_entries(sig, n, entries, repr.traceless_l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::build_gamma;

    fn sig(p: usize, q: usize) -> Signature {
        Signature::new(p, q).unwrap()
    }

    #[test]
    fn index_sets() {
        let d2 = index_set(&sig(1, 1)).unwrap();
        assert_eq!(d2.len(), 2);
        assert_eq!(d2[0].index.indices(), &[1]);
        assert_eq!(d2[1].index.indices(), &[2]);
        assert_eq!(index_set(&sig(2, 2)).unwrap().len(), 8);
        let riem = index_set(&sig(0, 4)).unwrap();
        for entry in &riem {
            let expected = if entry.index.len() == 1 {
                LetterType::L
            } else {
                LetterType::H
            };
            assert_eq!(entry.letter_type, expected);
        }
        assert!(index_set(&sig(2, 1)).is_err());
        assert_eq!(index_set(&sig(1, 0)).unwrap()[0].letter_type, LetterType::H);
        assert_eq!(index_set(&sig(0, 1)).unwrap()[0].letter_type, LetterType::L);
    }

    #[test]
    fn random_data_is_deterministic_and_valid() {
        let a = random_dirac_data(sig(1, 3), 3, 7, None, false).unwrap();
        let b = random_dirac_data(sig(1, 3), 3, 7, None, false).unwrap();
        assert_eq!(a, b);
        for (slot, m) in a.iter() {
            assert_eq!(hermiticity_defect(m, slot.letter_type), 0.0);
        }
        let z = random_dirac_data(sig(2, 0), 4, 1, Some(0.0), false).unwrap();
        assert!(z.matrices().iter().all(|m| m.norm() == 0.0));
        let t = random_dirac_data(sig(0, 4), 3, 2, None, true).unwrap();
        for (slot, m) in t.iter() {
            if slot.letter_type == LetterType::L {
                assert!(m.trace().norm() < 1e-14);
            }
        }
    }

    #[test]
    fn set_rejects_wrong_hermiticity() {
        let mut data = DiracData::zeros(sig(2, 0), 2).unwrap();
        let idx = MultiIndex::new(vec![1], 2).unwrap();
        let bad = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(-1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        assert!(matches!(
            data.set(&idx, bad),
            Err(Error::Hermiticity { .. })
        ));
        assert!(data.set(&idx, CMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn one_zero_spectrum_is_pairwise_sums() {
        let data = random_dirac_data(sig(1, 0), 3, 5, None, false).unwrap();
        let rep = build_gamma(sig(1, 0)).unwrap();
        let d = assemble_dense(&data, &rep).unwrap();
        let h = data.matrices()[0].clone();
        let lam = h.symmetric_eigen().eigenvalues;
        let mut expected: Vec<f64> = Vec::new();
        for &a in lam.iter() {
            for &b in lam.iter() {
                expected.push(a + b);
            }
        }
        expected.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = d.symmetric_eigen().eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        for (x, y) in got.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn commutators_vanish_on_scalars() {
        let data = random_dirac_data(sig(0, 2), 1, 3, None, false).unwrap();
        let rep = build_gamma(sig(0, 2)).unwrap();
        let d = assemble_dense(&data, &rep).unwrap();
        assert!(d.norm() < 1e-15);
    }

    #[test]
    fn assembled_operator_is_self_adjoint() {
        for (p, q) in [
            (2, 0),
            (1, 1),
            (0, 2),
            (4, 0),
            (3, 1),
            (2, 2),
            (1, 3),
            (0, 4),
        ] {
            for n in 1..=3 {
                let data = random_dirac_data(sig(p, q), n, 11 * n as u64, None, false).unwrap();
                let rep = build_gamma(sig(p, q)).unwrap();
                let d = assemble_dense(&data, &rep).unwrap();
                assert!((&d - d.adjoint()).norm() <= 1e-12 * d.norm().max(1.0));
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let data = random_dirac_data(sig(1, 3), 2, 9, None, false).unwrap();
        let text = data.to_json();
        let back = DiracData::from_json(&text).unwrap();
        assert_eq!(data, back);
        assert!(text.contains("\"N\""));
        assert!(text.contains("\"1,2,3\""));
    }

    #[test]
    fn json_rejects_missing_entries() {
        let text = r#"{"signature":{"p":1,"q":1},"N":1,"entries":{"1":[[0.5,0.0]]}}"#;
        assert!(DiracData::from_json(text).is_err());
    }
}
