//! Brute-force ground truth: traces of powers of the dense Dirac operator
//! and batch verification of the closed-form and generated evaluators.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::closed_form_trace;
use crate::clifford::{build_gamma, Signature};
use crate::dirac::{assemble_dense, random_dirac_data, CMatrix};
use crate::error::{Error, Result};
use crate::ncpoly::{evaluate_functionals, generate_trace_functionals};

/// Default relative tolerance of [`verify`].
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Absolute floor used when the reference value is near zero.
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// `Tr D^m` by repeated squaring.
pub fn trace_power(d: &CMatrix, m: u32) -> Complex64 {
    assert!(d.is_square(), "trace_power needs a square matrix");
    let n = d.nrows();
    if m == 0 {
        return Complex64::new(n as f64, 0.0);
    }
    // Split m = a + b with D^a, D^b computed by squaring; then Tr(D^a D^b)
    // needs only a Frobenius-type contraction.
    let half = m / 2;
    let rest = m - half;
    let a = matrix_power(d, half);
    let b = if rest == half { a.clone() } else { &a * d };
    let mut t = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            t += a[(i, j)] * b[(j, i)];
        }
    }
    t
}

fn matrix_power(d: &CMatrix, m: u32) -> CMatrix {
    let n = d.nrows();
    let mut result = CMatrix::identity(n, n);
    let mut base = d.clone();
    let mut e = m;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// `Tr D^m = Σ λ^m` from the eigenvalues of a self-adjoint `D`.
pub fn trace_power_eigen(d: &CMatrix, m: u32) -> f64 {
    let eig = d.clone().symmetric_eigen();
    eig.eigenvalues.iter().map(|l| l.powi(m as i32)).sum()
}

/// Relative error with an absolute floor for near-zero references.
pub fn relative_error(value: f64, reference: f64) -> f64 {
    let diff = (value - reference).abs();
    if reference.abs() < ABSOLUTE_FLOOR {
        diff / ABSOLUTE_FLOOR.max(reference.abs())
    } else {
        diff / reference.abs()
    }
}

fn within(value: f64, reference: f64, tol: f64) -> bool {
    let diff = (value - reference).abs();
    diff <= tol * reference.abs() || diff <= ABSOLUTE_FLOOR
}

/// One power of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRecord {
    /// Half the power: `m = 2t`.
    pub t: u32,
    /// Raw `Tr D^{2t}` by matrix multiplication.
    pub oracle: f64,
    /// Raw trace from the eigenvalues.
    pub oracle_eigen: f64,
    /// Raw trace from a closed form, if one exists.
    pub closed_form: Option<f64>,
    /// Raw trace from the generated functional, if within the chord cap.
    pub generated: Option<f64>,
    /// Relative error of the eigenvalue path.
    pub eigen_error: f64,
    /// Relative error of the closed form.
    pub closed_form_error: Option<f64>,
    /// Relative error of the generated functional.
    pub generated_error: Option<f64>,
    /// Whether every available path agrees within tolerance.
    pub pass: bool,
}

/// Result for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    /// Seed of the random data.
    pub seed: u64,
    /// Per-power records for `t = 1..=t_max`.
    pub powers: Vec<PowerRecord>,
    /// Error message if the seed could not be evaluated.
    pub error: Option<String>,
}

/// Verification of all evaluation paths against the dense oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Signature verified.
    pub signature: Signature,
    /// Matrix size.
    #[serde(rename = "N")]
    pub n: usize,
    /// Highest `t` checked.
    pub t_max: u32,
    /// Relative tolerance.
    pub tolerance: f64,
    /// Per-seed records, sorted by seed.
    pub seeds: Vec<SeedRecord>,
    /// Largest relative error over every comparison.
    pub max_relative_error: f64,
    /// Whether every comparison passed.
    pub pass: bool,
    /// Wall-clock time in seconds.
    pub wall_time_s: f64,
}

impl VerificationReport {
    /// Plain-text table, one line per seed and power.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "signature {}  N={}  t_max={}  tol={:e}\n{:>6} {:>3} {:>22} {:>10} {:>10} {:>10} {}\n",
            self.signature,
            self.n,
            self.t_max,
            self.tolerance,
            "seed",
            "t",
            "oracle",
            "eigen",
            "closed",
            "generated",
            "status"
        );
        let fmt_err = |e: Option<f64>| e.map_or("-".to_string(), |v| format!("{v:.2e}"));
        for s in &self.seeds {
            if let Some(err) = &s.error {
                out.push_str(&format!("{:>6} error: {err}\n", s.seed));
                continue;
            }
            for p in &s.powers {
                out.push_str(&format!(
                    "{:>6} {:>3} {:>22.12e} {:>10} {:>10} {:>10} {}\n",
                    s.seed,
                    p.t,
                    p.oracle,
                    fmt_err(Some(p.eigen_error)),
                    fmt_err(p.closed_form_error),
                    fmt_err(p.generated_error),
                    if p.pass { "ok" } else { "FAIL" }
                ));
            }
        }
        out.push_str(&format!(
            "max relative error {:.3e}  {}  ({:.2}s)\n",
            self.max_relative_error,
            if self.pass { "PASS" } else { "FAIL" },
            self.wall_time_s
        ));
        out
    }
}

fn verify_seed(
    sig: Signature,
    n: usize,
    t_max: u32,
    seed: u64,
    tol: f64,
) -> Result<Vec<PowerRecord>> {
    let data = random_dirac_data(sig, n, seed, None, false)?;
    let rep = build_gamma(sig)?;
    let d = assemble_dense(&data, &rep)?;
    let mut records = Vec::with_capacity(t_max as usize);
    for t in 1..=t_max {
        let m = 2 * t;
        let oracle = trace_power(&d, m).re;
        let oracle_eigen = trace_power_eigen(&d, m);
        let closed_form = closed_form_trace(&data, m);
        let generated = match generate_trace_functionals(sig, t) {
            Ok(f) => Some(evaluate_functionals(&f, &data)?.re * sig.dim_v() as f64),
            Err(crate::Error::ChordCapExceeded { .. }) => None,
            Err(e) => return Err(e),
        };
        let eigen_error = relative_error(oracle_eigen, oracle);
        let closed_form_error = closed_form.map(|v| relative_error(v, oracle));
        let generated_error = generated.map(|v| relative_error(v, oracle));
        let pass = within(oracle_eigen, oracle, tol.max(1e-11))
            && closed_form.map_or(true, |v| within(v, oracle, tol))
            && generated.map_or(true, |v| within(v, oracle, tol));
        records.push(PowerRecord {
            t,
            oracle,
            oracle_eigen,
            closed_form,
            generated,
            eigen_error,
            closed_form_error,
            generated_error,
            pass,
        });
    }
    Ok(records)
}

/// Compares every available evaluation path with the dense oracle for
/// `t = 1..=t_max` on random data for each seed. Failures are reported,
/// never raised; errors on individual seeds are recorded in the report.
pub fn verify(sig: Signature, n: usize, t_max: u32, seeds: &[u64], tol: f64) -> VerificationReport {
    let start = Instant::now();
    // Generate functionals once, outside the parallel section.
    for t in 1..=t_max {
        let _ = generate_trace_functionals(sig, t);
    }
    let mut records: Vec<SeedRecord> = seeds
        .par_iter()
        .map(|&seed| match verify_seed(sig, n, t_max, seed, tol) {
            Ok(powers) => SeedRecord {
                seed,
                powers,
                error: None,
            },
            Err(e) => SeedRecord {
                seed,
                powers: Vec::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    records.sort_by_key(|r| r.seed);
    let mut max_err: f64 = 0.0;
    let mut pass = true;
    for r in &records {
        pass &= r.error.is_none();
        for p in &r.powers {
            pass &= p.pass;
            for e in [Some(p.eigen_error), p.closed_form_error, p.generated_error]
                .into_iter()
                .flatten()
            {
                max_err = max_err.max(e);
            }
        }
    }
    VerificationReport {
        signature: sig,
        n,
        t_max,
        tolerance: tol,
        seeds: records,
        max_relative_error: max_err,
        pass,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

/// Dense Hermitian matrix from real eigenvalues (diagonal).
pub fn diagonal(values: &[f64]) -> CMatrix {
    DMatrix::from_fn(values.len(), values.len(), |i, j| {
        if i == j {
            Complex64::new(values[i], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Independent draws from the `d = 1`, type `(1,0)` Gaussian ensemble
/// with density `∝ e^{−N Tr H² − (Tr H)²}` on Hermitian `N × N` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDraws {
    /// `Tr H²` per draw.
    pub tr_h2: Vec<f64>,
    /// `F = (Tr H)² / (N Tr H²)` per draw.
    pub f: Vec<f64>,
}

/// Direct sampler of `e^{−N Tr H² − (Tr H)²}`, the action `½ Tr D²` of the
/// `(1,0)` geometry.
///
/// Off-diagonal real and imaginary parts are independent with variance
/// `1/(4N)`. On the diagonal the exponent is `−N|h|² − (Σh)²`, so the
/// component along `(1,…,1)/√N` has variance `1/(4N)` and the orthogonal
/// components have variance `1/(2N)`.
pub fn gaussian_d1_draws(n: usize, draws: usize, seed: u64) -> Result<GaussianDraws> {
    if n == 0 {
        return Err(Error::Shape("matrix size N must be at least 1".into()));
    }
    let nf = n as f64;
    let off = Normal::new(0.0, (1.0 / (4.0 * nf)).sqrt()).expect("positive variance");
    let diag = Normal::new(0.0, (1.0 / (2.0 * nf)).sqrt()).expect("positive variance");
    let along = Normal::new(0.0, (1.0 / (4.0 * nf)).sqrt()).expect("positive variance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tr_h2 = Vec::with_capacity(draws);
    let mut f = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut h: Vec<f64> = (0..n).map(|_| diag.sample(&mut rng)).collect();
        let proj = h.iter().sum::<f64>() / nf.sqrt();
        let s = along.sample(&mut rng);
        for x in h.iter_mut() {
            *x += (s - proj) / nf.sqrt();
        }
        let mut off_sq = 0.0;
        for _ in 0..n * (n - 1) / 2 {
            let re = off.sample(&mut rng);
            let im = off.sample(&mut rng);
            off_sq += re * re + im * im;
        }
        let t2 = h.iter().map(|x| x * x).sum::<f64>() + 2.0 * off_sq;
        let t1 = h.iter().sum::<f64>();
        tr_h2.push(t2);
        f.push(t1 * t1 / (nf * t2));
    }
    Ok(GaussianDraws { tr_h2, f })
}
