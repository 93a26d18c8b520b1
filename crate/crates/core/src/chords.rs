//! Chord diagrams and normalised gamma traces.
//!
//! A chord diagram on `2n` cyclically ordered points is a fixed-point free
//! involution of the points. For a tuple of spacetime indices `μ_1 … μ_2n`
//! and a diagonal metric `g`, the diagram contributes
//! `(−1)^{cr(χ)} ∏_{i∼j} g^{μ_i μ_j}`; the sum over all diagrams is the
//! normalised trace `Tr_V(γ^{μ_1}⋯γ^{μ_2n}) / dim V`.
//!
//! Points are stored 0-based internally (point `k` of the text is entry
//! `k − 1`); index tuples carry 1-based spacetime indices.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Largest number of points enumerated by default (enough for `d = 4`
/// quartic and `d = 2` up to the twelfth power).
pub const DEFAULT_CHORD_CAP: usize = 12;

/// A perfect pairing of `2n` points.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChordDiagram {
    partner: Vec<usize>,
    crossings: usize,
}

impl ChordDiagram {
    /// Builds a diagram from its partner array, validating the involution.
    pub fn from_partners(partner: Vec<usize>) -> Result<Self> {
        let n = partner.len();
        let valid = n % 2 == 0
            && partner
                .iter()
                .enumerate()
                .all(|(i, &j)| j < n && j != i && partner[j] == i);
        if !valid {
            return Err(Error::Parse(format!(
                "partner array {partner:?} is not a fixed-point free involution"
            )));
        }
        let crossings = count_crossings(&partner);
        Ok(Self { partner, crossings })
    }

    /// Builds a diagram from a list of chords given as 0-based point pairs.
    pub fn from_chords(points: usize, chords: &[(usize, usize)]) -> Result<Self> {
        let mut partner = vec![usize::MAX; points];
        for &(a, b) in chords {
            if a >= points || b >= points {
                return Err(Error::Parse(format!("chord ({a},{b}) out of range")));
            }
            partner[a] = b;
            partner[b] = a;
        }
        Self::from_partners(partner)
    }

    /// The antipodal ("pizza-cut") diagram on `2w` points.
    pub fn pizza_cut(w: usize) -> Self {
        let partner = (0..2 * w).map(|i| (i + w) % (2 * w)).collect();
        Self::from_partners(partner).expect("antipodal pairing is an involution")
    }

    /// Number of points `2n`.
    pub fn points(&self) -> usize {
        self.partner.len()
    }

    /// Partner array (the canonical encoding).
    pub fn partners(&self) -> &[usize] {
        &self.partner
    }

    /// Chords as ordered pairs `(a, b)` with `a < b`, sorted by `a`.
    pub fn chords(&self) -> Vec<(usize, usize)> {
        self.partner
            .iter()
            .enumerate()
            .filter(|(i, &j)| *i < j)
            .map(|(i, &j)| (i, j))
            .collect()
    }

    /// Number of crossing chord pairs.
    pub fn crossings(&self) -> usize {
        self.crossings
    }

    /// `(−1)^{cr(χ)}`.
    pub fn sign(&self) -> i64 {
        if self.crossings % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// The diagram rotated by `shift` positions (point `i` becomes `i + shift`).
    pub fn rotated(&self, shift: usize) -> Self {
        let n = self.points();
        let mut partner = vec![0; n];
        for (i, &j) in self.partner.iter().enumerate() {
            partner[(i + shift) % n] = (j + shift) % n;
        }
        Self::from_partners(partner).expect("rotation preserves involutions")
    }
}

fn count_crossings(partner: &[usize]) -> usize {
    let chords: Vec<(usize, usize)> = partner
        .iter()
        .enumerate()
        .filter(|(i, &j)| *i < j)
        .map(|(i, &j)| (i, j))
        .collect();
    let mut count = 0;
    for (k, &(a, b)) in chords.iter().enumerate() {
        for &(c, d) in &chords[k + 1..] {
            if (a < c && c < b && b < d) || (c < a && a < d && d < b) {
                count += 1;
            }
        }
    }
    count
}

/// Counts crossings of a diagram (pairs `a < c < b < d`).
pub fn crossings(chi: &ChordDiagram) -> usize {
    chi.crossings
}

/// `(2n − 1)!!`, the number of chord diagrams on `2n` points.
pub fn double_factorial_odd(points: usize) -> usize {
    (1..points).step_by(2).product::<usize>().max(1)
}

fn enumerate_into(free: &mut Vec<usize>, partner: &mut [usize], out: &mut Vec<ChordDiagram>) {
    if free.is_empty() {
        out.push(ChordDiagram::from_partners(partner.to_vec()).expect("complete pairing"));
        return;
    }
    let first = free.remove(0);
    for k in 0..free.len() {
        let other = free.remove(k);
        partner[first] = other;
        partner[other] = first;
        enumerate_into(free, partner, out);
        free.insert(k, other);
    }
    free.insert(0, first);
}

/// Enumerates every chord diagram on `points` points, rejecting sizes above `cap`.
///
/// The order is canonical: the first point is paired with each later point
/// in increasing order, and the remaining points are paired recursively.
pub fn enumerate_with_cap(points: usize, cap: usize) -> Result<Vec<ChordDiagram>> {
    if points > cap {
        return Err(Error::ChordCapExceeded { points, cap });
    }
    if points == 0 || points % 2 == 1 {
        return Err(Error::Parse(format!(
            "chord diagrams need an even positive number of points, got {points}"
        )));
    }
    let mut out = Vec::with_capacity(double_factorial_odd(points));
    let mut free: Vec<usize> = (0..points).collect();
    let mut partner = vec![0; points];
    enumerate_into(&mut free, &mut partner, &mut out);
    Ok(out)
}

static CACHE: [OnceLock<Arc<Vec<ChordDiagram>>>; DEFAULT_CHORD_CAP / 2] =
    [const { OnceLock::new() }; DEFAULT_CHORD_CAP / 2];

/// Cached enumeration for sizes up to [`DEFAULT_CHORD_CAP`].
pub fn enumerate(points: usize) -> Result<Arc<Vec<ChordDiagram>>> {
    if points > DEFAULT_CHORD_CAP {
        return Err(Error::ChordCapExceeded {
            points,
            cap: DEFAULT_CHORD_CAP,
        });
    }
    if points == 0 || points % 2 == 1 {
        return enumerate_with_cap(points, DEFAULT_CHORD_CAP).map(Arc::new);
    }
    let slot = &CACHE[points / 2 - 1];
    if let Some(v) = slot.get() {
        return Ok(Arc::clone(v));
    }
    let list = Arc::new(enumerate_with_cap(points, DEFAULT_CHORD_CAP)?);
    Ok(Arc::clone(slot.get_or_init(|| list)))
}

/// `χ^{μ_1…μ_2n} = (−1)^{cr(χ)} ∏_{i∼j} g^{μ_i μ_j}` for a diagonal metric.
///
/// `mu` holds 1-based spacetime indices and `metric[k]` is `e_{k+1}`.
pub fn chi_tensor(chi: &ChordDiagram, mu: &[usize], metric: &[i8]) -> i64 {
    debug_assert_eq!(chi.points(), mu.len());
    let mut value = chi.sign();
    for (i, &j) in chi.partner.iter().enumerate() {
        if i < j {
            if mu[i] != mu[j] {
                return 0;
            }
            value *= metric[mu[i] - 1] as i64;
        }
    }
    value
}

/// Normalised trace `⟨μ_1…μ_2n⟩ = Σ_χ χ^{μ_1…μ_2n}` over all diagrams.
///
/// Odd-length tuples give 0. Tuples in which some index value occurs an odd
/// number of times are returned as 0 without enumeration, since every
/// diagram then has a chord joining unequal indices.
pub fn bracket(mu: &[usize], metric: &[i8]) -> Result<i64> {
    if mu.is_empty() {
        return Ok(1);
    }
    if mu.len() % 2 == 1 {
        return Ok(0);
    }
    if let Some(&bad) = mu.iter().find(|&&m| m == 0 || m > metric.len()) {
        return Err(Error::InvalidIndex {
            indices: mu.to_vec(),
            d: metric.len(),
            reason: format!("index {bad} out of range"),
        });
    }
    let mut parity = 0u64;
    for &m in mu {
        parity ^= 1 << m;
    }
    if parity != 0 {
        return Ok(0);
    }
    let diagrams = enumerate(mu.len())?;
    Ok(diagrams.iter().map(|chi| chi_tensor(chi, mu, metric)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_double_factorial() {
        let expected = [1usize, 3, 15, 105, 945, 10395];
        for (k, &n) in expected.iter().enumerate() {
            let points = 2 * (k + 1);
            let list = enumerate(points).unwrap();
            assert_eq!(list.len(), n);
            assert_eq!(double_factorial_odd(points), n);
            let mut uniq: Vec<_> = list.iter().map(|c| c.partners().to_vec()).collect();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), n);
        }
        assert!(matches!(
            enumerate(14),
            Err(Error::ChordCapExceeded { points: 14, .. })
        ));
        assert!(enumerate(3).is_err());
    }

    #[test]
    fn enumeration_order_is_canonical() {
        let list = enumerate(4).unwrap();
        assert_eq!(list[0].partners(), &[1, 0, 3, 2]);
        assert_eq!(list[1].partners(), &[2, 3, 0, 1]);
        assert_eq!(list[2].partners(), &[3, 2, 1, 0]);
    }

    #[test]
    fn crossing_counts() {
        let nested = ChordDiagram::from_chords(6, &[(0, 5), (1, 4), (2, 3)]).unwrap();
        assert_eq!(crossings(&nested), 0);
        assert_eq!(crossings(&ChordDiagram::pizza_cut(4)), 6);
        for w in 1..=6 {
            assert_eq!(ChordDiagram::pizza_cut(w).crossings(), w * (w - 1) / 2);
        }
        let xi = ChordDiagram::from_chords(4, &[(0, 2), (1, 3)]).unwrap();
        assert_eq!(xi.crossings(), 1);
        assert_eq!(chi_tensor(&xi, &[1, 2, 1, 2], &[1, 1]), -1);
    }

    #[test]
    fn rejects_invalid_partner_arrays() {
        assert!(ChordDiagram::from_partners(vec![0, 1]).is_err());
        assert!(ChordDiagram::from_partners(vec![1, 2, 0]).is_err());
    }

    #[test]
    fn four_point_identity() {
        let metric = [1i8, -1, -1, 1];
        for a in 1..=4 {
            for b in 1..=4 {
                for c in 1..=4 {
                    for d in 1..=4 {
                        let g = |x: usize, y: usize| if x == y { metric[x - 1] as i64 } else { 0 };
                        let classical = g(a, b) * g(c, d) - g(a, c) * g(b, d) + g(a, d) * g(b, c);
                        assert_eq!(bracket(&[a, b, c, d], &metric).unwrap(), classical);
                    }
                }
            }
        }
    }

    #[test]
    fn repeated_multi_index_bracket() {
        // ⟨I I⟩ = (−1)^{u + w(w−1)/2} for I of length w.
        let metric = [1i8, 1, -1, -1];
        let cases: [&[usize]; 4] = [&[1], &[3], &[1, 3, 4], &[1, 2, 3, 4]];
        for idx in cases {
            let w = idx.len();
            let u = idx.iter().filter(|&&i| metric[i - 1] < 0).count();
            let mut mu = idx.to_vec();
            mu.extend_from_slice(idx);
            let expected = if (u + w * (w - 1) / 2) % 2 == 0 {
                1
            } else {
                -1
            };
            assert_eq!(bracket(&mu, &metric).unwrap(), expected, "{idx:?}");
        }
    }

    #[test]
    fn unmatched_index_vanishes() {
        let metric = [1i8, 1, 1];
        assert_eq!(bracket(&[1, 1, 2, 3], &metric).unwrap(), 0);
        for chi in enumerate(4).unwrap().iter() {
            assert_eq!(chi_tensor(chi, &[1, 1, 2, 3], &metric), 0);
        }
        assert_eq!(bracket(&[1, 2, 1], &metric).unwrap(), 0);
        assert!(bracket(&[1, 4], &metric).is_err());
    }
}
