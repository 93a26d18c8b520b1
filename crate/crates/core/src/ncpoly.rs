//! Noncommutative trace polynomials and the symbolic expansion of `Tr D^{2t}`.
//!
//! Letters are the coefficient matrices `K_I`; a word is a product of
//! letters under a trace. Words are stored as sequences of letter ids, where
//! the id is the position of the multi-index in letter order (cardinality
//! first, then lexicographic), so lexicographic comparison of id sequences
//! is the normal-form order.
//!
//! The generator expands
//! `Tr D^{2t} / dim V = Σ_{I_1…I_{2t}} ⟨I_1⋯I_{2t}⟩ Tr_{M_N}(k_{I_1}⋯k_{I_{2t}})`
//! where the bracket sums chord diagrams and
//! `Tr_{M_N}(k_{I_1}⋯k_{I_r}) = Σ_Υ sgn(Υ) Tr(K_{Υᶜ}) Tr((Kᵀ)_Υ)`. The
//! transposed factor is stored as the reversed plain word, using
//! `Tr Mᵀ = Tr M`. The empty and full subsets give `N` times a single trace;
//! all other subsets give products of two traces.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chords::{bracket, chi_tensor, ChordDiagram, DEFAULT_CHORD_CAP};
use crate::clifford::{LetterType, MultiIndex, Signature};
use crate::dirac::{hermiticity_defect, index_set, CMatrix, DiracData, HERMITICITY_TOL};
use crate::error::{Error, Result};

/// A letter `K_I` with its hermiticity and bimodule signs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Letter {
    /// Multi-index labelling the letter.
    pub index: MultiIndex,
    /// `+1` for Hermitian letters, `−1` for anti-Hermitian ones.
    pub star_sign: i8,
    /// `e_I`: `+1` for the anticommutator, `−1` for the commutator.
    pub e_sign: i8,
}

impl Letter {
    /// Display label such as `K1` or `K234`.
    pub fn label(&self) -> String {
        let digits: String = self.index.indices().iter().map(|i| i.to_string()).collect();
        format!("K{digits}")
    }

    /// Letter type implied by the star sign.
    pub fn letter_type(&self) -> LetterType {
        LetterType::from_sign(self.star_sign)
    }
}

/// Letters of a signature, in letter order.
pub fn alphabet(sig: &Signature) -> Result<Vec<Letter>> {
    Ok(index_set(sig)?
        .into_iter()
        .map(|entry| Letter {
            index: entry.index,
            star_sign: entry.letter_type.star_sign(),
            e_sign: entry.e,
        })
        .collect())
}

/// Sequence of letter ids.
pub type Word = Vec<u8>;

/// A monomial `coefficient · Tr(letters)`; the empty word is `Tr 1 = N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TraceWord {
    /// Integer coefficient.
    pub coefficient: i64,
    /// Letter ids.
    pub letters: Word,
}

impl TraceWord {
    /// Builds a monomial.
    pub fn new(coefficient: i64, letters: Word) -> Self {
        Self {
            coefficient,
            letters,
        }
    }
}

/// Lexicographically minimal rotation of a word.
pub fn normal_word(w: &[u8]) -> Word {
    let n = w.len();
    if n < 2 {
        return w.to_vec();
    }
    let mut best = 0;
    for start in 1..n {
        let better = (0..n)
            .map(|k| (w[(start + k) % n], w[(best + k) % n]))
            .find(|(a, b)| a != b)
            .is_some_and(|(a, b)| a < b);
        if better {
            best = start;
        }
    }
    (0..n).map(|k| w[(best + k) % n]).collect()
}

/// Rotates a monomial to its cyclic normal form; the coefficient is unchanged.
pub fn cyclic_normal_form(w: &TraceWord) -> TraceWord {
    TraceWord::new(w.coefficient, normal_word(&w.letters))
}

/// Formal adjoint of a monomial: reverse the letters and multiply the
/// coefficient by the product of the letters' star signs.
pub fn adjoint_word(w: &TraceWord, letters: &[Letter]) -> TraceWord {
    let sign: i64 = w
        .letters
        .iter()
        .map(|&id| letters[id as usize].star_sign as i64)
        .product();
    let mut rev = w.letters.clone();
    rev.reverse();
    TraceWord::new(w.coefficient * sign, rev)
}

/// Result of the cyclic adjointness test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclicClass {
    /// The adjoint reproduces the polynomial up to cyclic rotation.
    CyclicSelfAdjoint,
    /// The adjoint reproduces minus the polynomial up to cyclic rotation.
    CyclicAntiSelfAdjoint,
    /// Neither of the above.
    Neither,
}

fn collect_normalized(words: impl IntoIterator<Item = TraceWord>) -> BTreeMap<Word, i64> {
    let mut map = BTreeMap::new();
    for w in words {
        *map.entry(normal_word(&w.letters)).or_insert(0) += w.coefficient;
    }
    map.retain(|_, c| *c != 0);
    map
}

/// Classifies a sum of monomials as cyclic self-adjoint, anti-self-adjoint
/// or neither. The zero polynomial counts as self-adjoint.
pub fn classify_cyclic(poly: &[TraceWord], letters: &[Letter]) -> CyclicClass {
    let own = collect_normalized(poly.iter().cloned());
    let image = collect_normalized(
        own.iter()
            .map(|(w, &c)| adjoint_word(&TraceWord::new(c, w.clone()), letters)),
    );
    if image == own {
        return CyclicClass::CyclicSelfAdjoint;
    }
    let negated: BTreeMap<Word, i64> = own.iter().map(|(w, &c)| (w.clone(), -c)).collect();
    if image == negated {
        CyclicClass::CyclicAntiSelfAdjoint
    } else {
        CyclicClass::Neither
    }
}

/// Product of two traces `coefficient · Tr(left) · Tr(right)`, with
/// `left ≤ right` in normal-form order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BiTerm {
    /// Integer coefficient.
    pub coefficient: i64,
    /// First factor (normal form).
    pub left: Word,
    /// Second factor (normal form).
    pub right: Word,
}

/// Symbolic `Tr D^{m} / dim V = N · single + bi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFunctional {
    /// Signature the functional was generated for.
    pub signature: Signature,
    /// The power `m` of `D`.
    pub power: u32,
    /// Letters in id order.
    pub letters: Vec<Letter>,
    /// Single-trace part: normal-form word to coefficient.
    pub single: BTreeMap<Word, i64>,
    /// Bi-trace part: ordered pair of normal-form words to coefficient.
    pub bi: BTreeMap<(Word, Word), i64>,
}

impl TraceFunctional {
    fn empty(signature: Signature, power: u32, letters: Vec<Letter>) -> Self {
        Self {
            signature,
            power,
            letters,
            single: BTreeMap::new(),
            bi: BTreeMap::new(),
        }
    }

    /// Single-trace monomials in stable order.
    pub fn single_words(&self) -> Vec<TraceWord> {
        self.single
            .iter()
            .map(|(w, &c)| TraceWord::new(c, w.clone()))
            .collect()
    }

    /// Bi-trace terms in stable order.
    pub fn bi_terms(&self) -> Vec<BiTerm> {
        self.bi
            .iter()
            .map(|((l, r), &c)| BiTerm {
                coefficient: c,
                left: l.clone(),
                right: r.clone(),
            })
            .collect()
    }

    /// Adds `coefficient · Tr(w)` to the single part.
    pub fn add_single(&mut self, w: &[u8], coefficient: i64) {
        if coefficient == 0 {
            return;
        }
        let key = normal_word(w);
        let entry = self.single.entry(key.clone()).or_insert(0);
        *entry += coefficient;
        if *entry == 0 {
            self.single.remove(&key);
        }
    }

    /// Adds `coefficient · Tr(a) · Tr(b)` to the bi part.
    pub fn add_bi(&mut self, a: &[u8], b: &[u8], coefficient: i64) {
        if coefficient == 0 {
            return;
        }
        let (x, y) = (normal_word(a), normal_word(b));
        let key = if x <= y { (x, y) } else { (y, x) };
        let entry = self.bi.entry(key.clone()).or_insert(0);
        *entry += coefficient;
        if *entry == 0 {
            self.bi.remove(&key);
        }
    }

    fn merge(&mut self, other: &TraceFunctional) {
        for (w, &c) in &other.single {
            self.add_single(w, c);
        }
        for ((a, b), &c) in &other.bi {
            self.add_bi(a, b, c);
        }
    }

    /// Renders a word as `K1^2 K2`.
    pub fn render_word(&self, w: &[u8]) -> String {
        if w.is_empty() {
            return "1".into();
        }
        let mut parts = Vec::new();
        let mut k = 0;
        while k < w.len() {
            let mut run = 1;
            while k + run < w.len() && w[k + run] == w[k] {
                run += 1;
            }
            let label = self.letters[w[k] as usize].label();
            parts.push(if run == 1 {
                label
            } else {
                format!("{label}^{run}")
            });
            k += run;
        }
        parts.join(" ")
    }

    /// Plain-text rendering `N*Tr[2 K1^2 + …] + 2 Tr[K1]*Tr[K1] + …`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if !self.single.is_empty() {
            let terms: Vec<String> = self
                .single
                .iter()
                .map(|(w, &c)| format_term(c, &self.render_word(w)))
                .collect();
            let mut inner = terms.join(" + ");
            inner = inner.replace("+ -", "- ");
            out.push_str(&format!("N*Tr[{inner}]"));
        }
        for ((a, b), &c) in &self.bi {
            let body = format!("Tr[{}]*Tr[{}]", self.render_word(a), self.render_word(b));
            let term = format_term(c, &body);
            if out.is_empty() {
                out.push_str(&term);
            } else if let Some(rest) = term.strip_prefix('-') {
                let _ = write!(out, " - {rest}");
            } else {
                let _ = write!(out, " + {term}");
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }

    /// Machine-readable form.
    pub fn to_serializable(&self) -> FunctionalJson {
        let word = |w: &Word| -> Vec<String> {
            w.iter()
                .map(|&id| self.letters[id as usize].label())
                .collect()
        };
        FunctionalJson {
            signature: [self.signature.p, self.signature.q],
            power: self.power,
            letters: self
                .letters
                .iter()
                .map(|l| LetterJson {
                    label: l.label(),
                    index: l.index.indices().to_vec(),
                    letter_type: l.letter_type(),
                    e: l.e_sign,
                })
                .collect(),
            single: self
                .single
                .iter()
                .map(|(w, &c)| SingleJson {
                    coefficient: c,
                    word: word(w),
                })
                .collect(),
            bi: self
                .bi
                .iter()
                .map(|((a, b), &c)| BiJson {
                    coefficient: c,
                    left: word(a),
                    right: word(b),
                })
                .collect(),
        }
    }

    /// Rebuilds a functional from its machine-readable form.
    pub fn from_serializable(json: &FunctionalJson) -> Result<Self> {
        let sig = Signature::new(json.signature[0], json.signature[1])?;
        let letters = alphabet(&sig)?;
        let lookup: HashMap<String, u8> = letters
            .iter()
            .enumerate()
            .map(|(k, l)| (l.label(), k as u8))
            .collect();
        let word = |labels: &[String]| -> Result<Word> {
            labels
                .iter()
                .map(|s| {
                    lookup
                        .get(s)
                        .copied()
                        .ok_or_else(|| Error::Parse(format!("unknown letter `{s}`")))
                })
                .collect()
        };
        let mut f = TraceFunctional::empty(sig, json.power, letters);
        for s in &json.single {
            f.add_single(&word(&s.word)?, s.coefficient);
        }
        for b in &json.bi {
            f.add_bi(&word(&b.left)?, &word(&b.right)?, b.coefficient);
        }
        Ok(f)
    }
}

fn format_term(c: i64, body: &str) -> String {
    match c {
        1 => body.to_string(),
        -1 => format!("-{body}"),
        _ => format!("{c} {body}"),
    }
}

/// JSON description of a letter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterJson {
    /// Label such as `K123`.
    pub label: String,
    /// Multi-index entries.
    pub index: Vec<usize>,
    /// Hermitian or anti-Hermitian.
    #[serde(rename = "type")]
    pub letter_type: LetterType,
    /// Sign `e_I`.
    pub e: i8,
}

/// JSON single-trace monomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleJson {
    /// Integer coefficient.
    pub coefficient: i64,
    /// Letter labels.
    pub word: Vec<String>,
}

/// JSON bi-trace term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiJson {
    /// Integer coefficient.
    pub coefficient: i64,
    /// First trace.
    pub left: Vec<String>,
    /// Second trace.
    pub right: Vec<String>,
}

/// Machine-readable trace functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalJson {
    /// `[p, q]`.
    pub signature: [usize; 2],
    /// Power of `D`.
    pub power: u32,
    /// Letters in id order.
    pub letters: Vec<LetterJson>,
    /// Single-trace monomials (multiplied by `N`).
    pub single: Vec<SingleJson>,
    /// Bi-trace terms.
    pub bi: Vec<BiJson>,
}

/// One of the `2^r` terms of `Tr_{M_N}(k_{I_1}⋯k_{I_r})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetTerm {
    /// Bit mask of the subset `Υ`.
    pub mask: u32,
    /// `∏_{i∈Υ} e_{I_i}`.
    pub sign: i64,
    /// Letters outside `Υ`, in order.
    pub forward: Word,
    /// Letters inside `Υ`, in reversed order.
    pub reversed: Word,
}

/// Expands `Tr_{M_N}(k_{I_1}⋯k_{I_r})` into its `2^r` subset terms.
pub fn subset_terms(tuple: &[u8], letters: &[Letter]) -> Vec<SubsetTerm> {
    let r = tuple.len();
    (0..(1u32 << r))
        .map(|mask| {
            let mut sign = 1i64;
            let mut forward = Vec::with_capacity(r);
            let mut reversed = Vec::with_capacity(r);
            for (i, &id) in tuple.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    sign *= letters[id as usize].e_sign as i64;
                    reversed.push(id);
                } else {
                    forward.push(id);
                }
            }
            reversed.reverse();
            SubsetTerm {
                mask,
                sign,
                forward,
                reversed,
            }
        })
        .collect()
}

fn check_generation(sig: &Signature, t: u32) -> Result<Vec<Letter>> {
    let d = sig.d();
    if d % 2 == 1 && d != 1 {
        return Err(Error::OddDimension {
            d,
            reason: "trace functionals are generated for even d (and d = 1)".into(),
        });
    }
    if t == 0 {
        return Err(Error::Parse("the power 2t must be positive".into()));
    }
    let widest = if d == 1 { 1 } else { d - 1 };
    let points = 2 * t as usize * widest;
    if points > DEFAULT_CHORD_CAP {
        return Err(Error::ChordCapExceeded {
            points,
            cap: DEFAULT_CHORD_CAP,
        });
    }
    alphabet(sig)
}

fn accumulate_tuple(f: &mut TraceFunctional, tuple: &[u8], weight: i64, letters: &[Letter]) {
    let full = (1u32 << tuple.len()) - 1;
    for term in subset_terms(tuple, letters) {
        let c = weight * term.sign;
        if term.mask == 0 {
            f.add_single(&term.forward, c);
        } else if term.mask == full {
            f.add_single(&term.reversed, c);
        } else {
            f.add_bi(&term.forward, &term.reversed, c);
        }
    }
}

fn generate_with<W>(sig: Signature, t: u32, weight: W) -> Result<TraceFunctional>
where
    W: Fn(&[usize]) -> Result<i64> + Sync,
{
    let letters = check_generation(&sig, t)?;
    let m = 2 * t as usize;
    let alphabet_size = letters.len();
    let total = alphabet_size.pow(m as u32);
    let empty = TraceFunctional::empty(sig, m as u32, letters.clone());
    let decode = |mut code: usize| -> Word {
        let mut tuple = vec![0u8; m];
        for slot in tuple.iter_mut().rev() {
            *slot = (code % alphabet_size) as u8;
            code /= alphabet_size;
        }
        tuple
    };
    let result = (0..total)
        .into_par_iter()
        .try_fold(
            || empty.clone(),
            |mut acc, code| -> Result<TraceFunctional> {
                let tuple = decode(code);
                let mu: Vec<usize> = tuple
                    .iter()
                    .flat_map(|&id| letters[id as usize].index.indices().iter().copied())
                    .collect();
                let w = weight(&mu)?;
                if w != 0 {
                    accumulate_tuple(&mut acc, &tuple, w, &letters);
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || empty.clone(),
            |mut a, b| {
                a.merge(&b);
                Ok(a)
            },
        )?;
    Ok(result)
}

type CacheMap = HashMap<(usize, usize, u32), Arc<TraceFunctional>>;

fn cache() -> &'static Mutex<CacheMap> {
    static CACHE: OnceLock<Mutex<CacheMap>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Generates `Tr D^{2t} / dim V = N · single + bi` symbolically.
///
/// Every index tuple, chord diagram and subset is visited; like terms are
/// merged after cyclic normalisation. Results are cached per `(p, q, t)`.
pub fn generate_trace_functionals(sig: Signature, t: u32) -> Result<Arc<TraceFunctional>> {
    let key = (sig.p, sig.q, t);
    if let Some(f) = cache().lock().expect("cache lock").get(&key) {
        return Ok(Arc::clone(f));
    }
    let metric = sig.metric();
    let f = Arc::new(generate_with(sig, t, |mu| bracket(mu, &metric))?);
    let mut guard = cache().lock().expect("cache lock");
    Ok(Arc::clone(guard.entry(key).or_insert(f)))
}

/// The contribution of a single chord diagram: index tuples whose total
/// number of points matches the diagram are weighted by its χ-tensor.
pub fn generate_for_diagram(sig: Signature, t: u32, chi: &ChordDiagram) -> Result<TraceFunctional> {
    let metric = sig.metric();
    generate_with(sig, t, |mu| {
        Ok(if mu.len() == chi.points() {
            chi_tensor(chi, mu, &metric)
        } else {
            0
        })
    })
}

/// Word-trace evaluator with cached prefix products.
struct WordEvaluator<'a> {
    matrices: &'a [CMatrix],
    n: usize,
    prefixes: HashMap<Word, CMatrix>,
    traces: HashMap<Word, Complex64>,
}

impl<'a> WordEvaluator<'a> {
    fn new(matrices: &'a [CMatrix], n: usize) -> Self {
        Self {
            matrices,
            n,
            prefixes: HashMap::new(),
            traces: HashMap::new(),
        }
    }

    fn prefix(&mut self, w: &[u8]) -> CMatrix {
        if w.len() == 1 {
            return self.matrices[w[0] as usize].clone();
        }
        if let Some(m) = self.prefixes.get(w) {
            return m.clone();
        }
        let head = self.prefix(&w[..w.len() - 1]);
        let m = head * &self.matrices[w[w.len() - 1] as usize];
        self.prefixes.insert(w.to_vec(), m.clone());
        m
    }

    fn trace(&mut self, w: &[u8]) -> Complex64 {
        if w.is_empty() {
            return Complex64::new(self.n as f64, 0.0);
        }
        if let Some(&v) = self.traces.get(w) {
            return v;
        }
        let value = if w.len() == 1 {
            self.matrices[w[0] as usize].trace()
        } else {
            let head = self.prefix(&w[..w.len() - 1]);
            let last = &self.matrices[w[w.len() - 1] as usize];
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..self.n {
                for j in 0..self.n {
                    acc += head[(i, j)] * last[(j, i)];
                }
            }
            acc
        };
        self.traces.insert(w.to_vec(), value);
        value
    }
}

/// Evaluates `N · single + bi` on explicit matrices (one per letter id),
/// checking each matrix against its letter's hermiticity type.
pub fn evaluate_with(f: &TraceFunctional, matrices: &[CMatrix], n: usize) -> Result<Complex64> {
    if matrices.len() != f.letters.len() {
        return Err(Error::MissingCoefficient(format!(
            "{} matrices supplied for {} letters",
            matrices.len(),
            f.letters.len()
        )));
    }
    for (letter, m) in f.letters.iter().zip(matrices) {
        if m.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "matrix for {} is {:?}, expected {n}x{n}",
                letter.label(),
                m.shape()
            )));
        }
        let defect = hermiticity_defect(m, letter.letter_type());
        if defect > HERMITICITY_TOL * m.norm().max(1.0) {
            return Err(Error::Hermiticity {
                label: letter.label(),
                defect,
            });
        }
    }
    let mut eval = WordEvaluator::new(matrices, n);
    let mut single = Complex64::new(0.0, 0.0);
    for (w, &c) in &f.single {
        single += eval.trace(w) * c as f64;
    }
    let mut bi = Complex64::new(0.0, 0.0);
    for ((a, b), &c) in &f.bi {
        bi += eval.trace(a) * eval.trace(b) * c as f64;
    }
    Ok(single * n as f64 + bi)
}

/// Evaluates a functional on Dirac data of the same signature.
pub fn evaluate_functionals(f: &TraceFunctional, data: &DiracData) -> Result<Complex64> {
    if data.signature() != f.signature {
        return Err(Error::Shape(format!(
            "functional is for {} but data is for {}",
            f.signature,
            data.signature()
        )));
    }
    evaluate_with(f, data.matrices(), data.n())
}

/// A term of the bi-trace part rewritten over cyclic (anti-)self-adjoint
/// polynomials: `coefficient · Tr Φ · Tr Ψ` with the coefficient equal to
/// `numerator / 4`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiPair {
    /// Four times the coefficient (the change of basis introduces halves).
    pub numerator: i64,
    /// First polynomial.
    pub phi: Vec<TraceWord>,
    /// Second polynomial.
    pub psi: Vec<TraceWord>,
    /// Classification of `Φ`.
    pub phi_class: CyclicClass,
    /// Classification of `Ψ`.
    pub psi_class: CyclicClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct BasisElement {
    representative: Word,
    anti: bool,
}

impl BasisElement {
    fn polynomial(&self, letters: &[Letter]) -> Vec<TraceWord> {
        let r = &self.representative;
        let adj = adjoint_word(&TraceWord::new(1, r.clone()), letters);
        let partner = normal_word(&adj.letters);
        if &partner == r {
            return vec![TraceWord::new(1, r.clone())];
        }
        let sign = if self.anti { -1 } else { 1 };
        vec![
            TraceWord::new(1, r.clone()),
            TraceWord::new(sign * adj.coefficient, partner),
        ]
    }
}

/// Expresses a normal-form word over the self-adjoint/anti-self-adjoint
/// basis of its reversal orbit; coefficients are doubled to stay integral.
fn expand_in_basis(w: &Word, letters: &[Letter]) -> Vec<(BasisElement, i64)> {
    let adj = adjoint_word(&TraceWord::new(1, w.clone()), letters);
    let partner = normal_word(&adj.letters);
    let sigma = adj.coefficient;
    if &partner == w {
        return vec![(
            BasisElement {
                representative: w.clone(),
                anti: sigma < 0,
            },
            2,
        )];
    }
    let rep = w.min(&partner).clone();
    let s = BasisElement {
        representative: rep.clone(),
        anti: false,
    };
    let a = BasisElement {
        representative: rep,
        anti: true,
    };
    if w <= &partner {
        // w = (s + a) / 2
        vec![(s, 1), (a, 1)]
    } else {
        // w = σ (s − a) / 2
        vec![(s, sigma), (a, -sigma)]
    }
}

/// Rewrites the bi-trace part as `Σ c · Tr Φ · Tr Ψ` with every `Φ`, `Ψ`
/// cyclic self-adjoint or cyclic anti-self-adjoint.
pub fn bi_pairs(f: &TraceFunctional) -> Vec<BiPair> {
    let mut acc: BTreeMap<(BasisElement, BasisElement), i64> = BTreeMap::new();
    for ((a, b), &c) in &f.bi {
        for (ea, ca) in expand_in_basis(a, &f.letters) {
            for (eb, cb) in expand_in_basis(b, &f.letters) {
                let key = if ea <= eb {
                    (ea.clone(), eb)
                } else {
                    (eb, ea.clone())
                };
                *acc.entry(key).or_insert(0) += c * ca * cb;
            }
        }
    }
    acc.into_iter()
        .filter(|(_, c)| *c != 0)
        .map(|((x, y), numerator)| {
            let phi = x.polynomial(&f.letters);
            let psi = y.polynomial(&f.letters);
            let phi_class = classify_cyclic(&phi, &f.letters);
            let psi_class = classify_cyclic(&psi, &f.letters);
            BiPair {
                numerator,
                phi,
                psi,
                phi_class,
                psi_class,
            }
        })
        .collect()
}

/// Summary of the adjointness structure of a generated functional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjointnessReport {
    /// Classification of the single-trace polynomial.
    pub single_class: CyclicClass,
    /// Number of bi-trace pairs after rewriting.
    pub pairs: usize,
    /// Pairs whose factors are not jointly self-adjoint or jointly
    /// anti-self-adjoint.
    pub mixed_pairs: usize,
}

impl AdjointnessReport {
    /// Whether the single part is self-adjoint and every pair is matched.
    pub fn holds(&self) -> bool {
        self.single_class == CyclicClass::CyclicSelfAdjoint && self.mixed_pairs == 0
    }
}

/// Checks that the single part is cyclic self-adjoint and every bi-trace
/// pair is jointly cyclic (anti-)self-adjoint.
pub fn adjointness_report(f: &TraceFunctional) -> AdjointnessReport {
    let single_class = classify_cyclic(&f.single_words(), &f.letters);
    let pairs = bi_pairs(f);
    let mixed_pairs = pairs
        .iter()
        .filter(|p| p.phi_class != p.psi_class || p.phi_class == CyclicClass::Neither)
        .count();
    AdjointnessReport {
        single_class,
        pairs: pairs.len(),
        mixed_pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::random_dirac_data;

    fn sig(p: usize, q: usize) -> Signature {
        Signature::new(p, q).unwrap()
    }

    /// Letters named h, l1, l2, l3 for the adjointness examples.
    fn example_letters() -> Vec<Letter> {
        let mk = |i: usize, star: i8| Letter {
            index: MultiIndex::new(vec![i], 4).unwrap(),
            star_sign: star,
            e_sign: star,
        };
        vec![mk(1, 1), mk(2, -1), mk(3, -1), mk(4, -1)]
    }

    const H: u8 = 0;
    const L1: u8 = 1;
    const L2: u8 = 2;
    const L3: u8 = 3;

    fn tw(c: i64, w: &[u8]) -> TraceWord {
        TraceWord::new(c, w.to_vec())
    }

    #[test]
    fn adjoint_examples() {
        let letters = example_letters();
        let w = tw(1, &[H, L2, L3]);
        assert_eq!(adjoint_word(&w, &letters), tw(1, &[L3, L2, H]));
        let w = tw(1, &[L1, H, L2, L3]);
        assert_eq!(adjoint_word(&w, &letters), tw(-1, &[L3, L2, H, L1]));
        assert_eq!(adjoint_word(&adjoint_word(&w, &letters), &letters), w);
    }

    #[test]
    fn normal_form_examples() {
        assert_eq!(normal_word(&[2, 1]), vec![1, 2]);
        assert_eq!(normal_word(&[1, 2]), vec![1, 2]);
        let w = [3u8, 1, 2, 1, 1];
        let nf = normal_word(&w);
        assert_eq!(nf, vec![1, 1, 3, 1, 2]);
        for k in 0..w.len() {
            let rot: Vec<u8> = (0..w.len()).map(|i| w[(i + k) % w.len()]).collect();
            assert_eq!(normal_word(&rot), nf);
        }
        assert_eq!(cyclic_normal_form(&tw(5, &[2, 1])), tw(5, &[1, 2]));
    }

    #[test]
    fn classification_examples() {
        let letters = example_letters();
        // l1 (h[l2,l3] + l2[l3,h] + l3[h,l2])
        let p = vec![
            tw(1, &[L1, H, L2, L3]),
            tw(-1, &[L1, H, L3, L2]),
            tw(1, &[L1, L2, L3, H]),
            tw(-1, &[L1, L2, H, L3]),
            tw(1, &[L1, L3, H, L2]),
            tw(-1, &[L1, L3, L2, H]),
        ];
        assert_eq!(
            classify_cyclic(&p, &letters),
            CyclicClass::CyclicSelfAdjoint
        );
        let psi = vec![tw(1, &[L2, L3, H]), tw(-1, &[L3, L2, H])];
        assert_eq!(
            classify_cyclic(&psi, &letters),
            CyclicClass::CyclicAntiSelfAdjoint
        );
        assert_eq!(
            classify_cyclic(&[tw(1, &[H])], &letters),
            CyclicClass::CyclicSelfAdjoint
        );
        let neither = vec![tw(1, &[H, L2, L3])];
        assert_eq!(classify_cyclic(&neither, &letters), CyclicClass::Neither);
    }

    #[test]
    fn quadratic_functional_for_two_zero() {
        let f = generate_trace_functionals(sig(2, 0), 1).unwrap();
        let mut single = BTreeMap::new();
        single.insert(vec![0u8, 0], 2);
        single.insert(vec![1u8, 1], 2);
        assert_eq!(f.single, single);
        let mut bi = BTreeMap::new();
        bi.insert((vec![0u8], vec![0u8]), 2);
        bi.insert((vec![1u8], vec![1u8]), 2);
        assert_eq!(f.bi, bi);
        let text = f.render_text();
        assert_eq!(
            text,
            "N*Tr[2 K1^2 + 2 K2^2] + 2 Tr[K1]*Tr[K1] + 2 Tr[K2]*Tr[K2]"
        );
    }

    #[test]
    fn subset_expansion_has_power_set_size() {
        let letters = alphabet(&sig(1, 1)).unwrap();
        for r in 1..=6 {
            let tuple: Vec<u8> = (0..r).map(|k| (k % 2) as u8).collect();
            assert_eq!(subset_terms(&tuple, &letters).len(), 1 << r);
        }
    }

    #[test]
    fn scalar_evaluation_matches_hand_computation() {
        let f = generate_trace_functionals(sig(2, 0), 1).unwrap();
        let one = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        let v = evaluate_with(&f, &[one.clone(), one], 1).unwrap();
        // D = 2(γ¹ + γ²), D² = 8·1 on a 2-dimensional space: Tr D² / dim V = 8.
        assert!((v - Complex64::new(8.0, 0.0)).norm() < 1e-14);
        let zero = CMatrix::zeros(2, 2);
        assert_eq!(
            evaluate_with(&f, &[zero.clone(), zero], 2).unwrap().norm(),
            0.0
        );
    }

    #[test]
    fn evaluation_rejects_wrong_hermiticity() {
        let f = generate_trace_functionals(sig(0, 2), 1).unwrap();
        let h = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert!(matches!(
            evaluate_with(&f, &[h.clone(), h], 1),
            Err(Error::Hermiticity { .. })
        ));
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(matches!(
            generate_trace_functionals(sig(2, 1), 1),
            Err(Error::OddDimension { .. })
        ));
        assert!(matches!(
            generate_trace_functionals(sig(2, 2), 3),
            Err(Error::ChordCapExceeded { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let f = generate_trace_functionals(sig(1, 1), 2).unwrap();
        let json = serde_json::to_string(&f.to_serializable()).unwrap();
        let back: FunctionalJson = serde_json::from_str(&json).unwrap();
        assert_eq!(TraceFunctional::from_serializable(&back).unwrap(), *f);
    }

    #[test]
    fn generated_values_are_real() {
        for (p, q) in [(2, 0), (1, 1), (0, 2)] {
            let f = generate_trace_functionals(sig(p, q), 2).unwrap();
            let data = random_dirac_data(sig(p, q), 3, 4, None, false).unwrap();
            let v = evaluate_functionals(&f, &data).unwrap();
            assert!(v.im.abs() < 1e-12 * v.re.abs().max(1.0));
        }
    }

    #[test]
    fn adjointness_of_small_functionals() {
        for (p, q) in [(2, 0), (1, 1), (0, 2)] {
            for t in 1..=3 {
                let f = generate_trace_functionals(sig(p, q), t).unwrap();
                assert!(adjointness_report(&f).holds(), "({p},{q}) t={t}");
            }
        }
    }
}
