//! Metropolis sampling of `Z = ∫ e^{−S(D)} dD` over the coefficient
//! matrices of a fuzzy Dirac operator, with batch-means error estimates.
//!
//! The measure `dD` is the flat Lebesgue measure on the real coordinates of
//! every `K_I` inside its hermiticity class. Its normalisation never enters
//! because the acceptance test only sees `ΔS`.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{
    observable_f, spectral_action_via, tr_d2, tr_d2_multiplier, ActionSpec, EvalPath,
};
use crate::clifford::{LetterType, Signature};
use crate::dirac::{project, CMatrix, DiracData};
use crate::error::{Error, Result};

/// Name of the recorded action observable.
pub const OBS_ACTION: &str = "S";
/// Name of the recorded observable `F`.
pub const OBS_F: &str = "F";
/// Name of the recorded raw `Tr D²`.
pub const OBS_TR_D2: &str = "TrD2";

fn default_thinning() -> usize {
    1
}

fn default_eval_path() -> EvalPath {
    EvalPath::ClosedForm
}

/// Parameters of one Markov chain. Serialised as the chain JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    /// Signature of the fuzzy geometry.
    pub signature: Signature,
    /// Matrix size `N`.
    #[serde(rename = "N")]
    pub n: usize,
    /// Polynomial `f` of the action `Tr f(D)`.
    pub action: ActionSpec,
    /// Standard deviation of the Gaussian proposal per real coordinate.
    pub step_size: f64,
    /// Total number of Metropolis steps, burn-in included.
    pub n_steps: usize,
    /// Steps discarded before recording.
    #[serde(default)]
    pub burn_in: usize,
    /// Record every `thinning`-th step after burn-in.
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Seed of the chain's private generator.
    pub seed: u64,
    /// Keep anti-Hermitian letters traceless.
    #[serde(default)]
    pub traceless_l: bool,
    /// Evaluator used for `S` at every step.
    #[serde(default = "default_eval_path")]
    pub eval_path: EvalPath,
}

impl ChainConfig {
    /// Checks every invariant without running the chain.
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(Error::Parse(format!(
                "step_size must be finite and non-negative, got {}",
                self.step_size
            )));
        }
        if self.n == 0 {
            return Err(Error::Parse("N must be at least 1".into()));
        }
        if self.thinning == 0 {
            return Err(Error::Parse("thinning must be at least 1".into()));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::Parse(format!(
                "burn_in ({}) must be smaller than n_steps ({})",
                self.burn_in, self.n_steps
            )));
        }
        if !self.action.is_confining() {
            return Err(Error::Parse(format!(
                "action `{}` is not confining: the leading power must be even with a positive coefficient",
                self.action
            )));
        }
        if self.eval_path == EvalPath::Vanishing {
            return Err(Error::Parse(
                "`vanishing` is not an evaluation path for sampling".into(),
            ));
        }
        Ok(())
    }

    /// Number of recorded samples, `⌊(n_steps − burn_in) / thinning⌋`.
    pub fn sample_count(&self) -> usize {
        (self.n_steps - self.burn_in) / self.thinning
    }

    /// Parses the chain JSON format and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ChainConfig = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("chain config JSON: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Serialises to the chain JSON format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain config serialisation cannot fail")
    }
}

/// Symmetric Gaussian proposal: every coefficient matrix moves by
/// `step_size` times a standard complex Gaussian matrix projected onto its
/// hermiticity class (and onto trace zero for `L` letters when the data
/// asks for it). The projection is linear, so the step density depends only
/// on the difference of the two states and the proposal is symmetric.
pub fn propose<R: Rng + ?Sized>(data: &DiracData, step_size: f64, rng: &mut R) -> DiracData {
    let mut out = data.clone();
    let n = data.n();
    let traceless = data.traceless_l();
    let letters: Vec<LetterType> = data.iter().map(|(slot, _)| slot.letter_type).collect();
    for (m, letter) in out.matrices_mut().iter_mut().zip(letters) {
        let noise = CMatrix::from_fn(n, n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(step_size * re, step_size * im)
        });
        *m += project(&noise, letter, traceless && letter == LetterType::L);
    }
    out
}

/// A Markov chain advanced one Metropolis step at a time.
#[derive(Debug, Clone)]
pub struct Chain {
    config: ChainConfig,
    rng: ChaCha8Rng,
    state: DiracData,
    action: f64,
    step: usize,
    accepted: usize,
}

impl Chain {
    /// Starts at `D = 0` after validating the configuration.
    pub fn new(config: ChainConfig) -> Result<Self> {
        let mut state = DiracData::zeros(config.signature, config.n)?;
        if config.traceless_l {
            state = state.with_traceless_l();
        }
        Self::from_state(config, state)
    }

    /// Starts from explicit data, which must match the configuration.
    pub fn from_state(config: ChainConfig, state: DiracData) -> Result<Self> {
        config.validate()?;
        if state.signature() != config.signature || state.n() != config.n {
            return Err(Error::Shape(format!(
                "initial data has signature {} and N = {}, the chain expects {} and N = {}",
                state.signature(),
                state.n(),
                config.signature,
                config.n
            )));
        }
        let action = spectral_action_via(&config.action, &state, config.eval_path)?;
        if !action.is_finite() {
            return Err(Error::NonFiniteAction {
                step: 0,
                value: action,
            });
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            rng,
            state,
            action,
            step: 0,
            accepted: 0,
        })
    }

    /// Current state.
    pub fn state(&self) -> &DiracData {
        &self.state
    }

    /// Action of the current state as tracked across accepted moves.
    pub fn action(&self) -> f64 {
        self.action
    }

    /// Steps taken so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    /// Accepted moves over steps taken (1 before the first step).
    pub fn acceptance(&self) -> f64 {
        if self.step == 0 {
            1.0
        } else {
            self.accepted as f64 / self.step as f64
        }
    }

    /// One Metropolis step. Returns whether the proposal was accepted.
    pub fn step(&mut self) -> Result<bool> {
        let candidate = propose(&self.state, self.config.step_size, &mut self.rng);
        let new_action =
            spectral_action_via(&self.config.action, &candidate, self.config.eval_path)?;
        self.step += 1;
        if !new_action.is_finite() {
            return Err(Error::NonFiniteAction {
                step: self.step,
                value: new_action,
            });
        }
        let delta = new_action - self.action;
        let u: f64 = self.rng.random();
        let accept = delta <= 0.0 || u < (-delta).exp();
        if accept {
            self.state = candidate;
            self.action = new_action;
            self.accepted += 1;
        }
        Ok(accept)
    }

    /// Observables of the current state, in recording order.
    fn observe(&self) -> Vec<(String, f64)> {
        let sig = self.state.signature();
        let mut out = vec![
            (OBS_ACTION.to_string(), self.action),
            (
                OBS_F.to_string(),
                observable_f(&self.state).unwrap_or(f64::NAN),
            ),
            (
                OBS_TR_D2.to_string(),
                tr_d2(&self.state) * tr_d2_multiplier(&sig),
            ),
        ];
        for (slot, k) in self.state.iter() {
            let digits: String = slot.index.indices().iter().map(|i| i.to_string()).collect();
            let t = k.trace();
            match slot.letter_type {
                LetterType::H => out.push((format!("Tr[K{digits}]"), t.re)),
                LetterType::L => out.push((format!("ImTr[K{digits}]"), t.im)),
            }
            let square: Complex64 = k.iter().zip(k.transpose().iter()).map(|(a, b)| a * b).sum();
            out.push((format!("Tr[K{digits}^2]"), square.re));
        }
        out
    }
}

/// Recorded output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    /// Seed the chain was run with.
    pub seed: u64,
    /// Step number of every recorded sample (1-based).
    pub steps: Vec<usize>,
    /// Running acceptance rate at every recorded sample.
    pub acceptance_so_far: Vec<f64>,
    /// Recorded series by observable name: `S`, `F`, `TrD2`, the trace of
    /// every coefficient matrix (`Tr[K..]` real part for Hermitian letters,
    /// `ImTr[K..]` imaginary part for anti-Hermitian ones) and the trace of
    /// its square (`Tr[K..^2]`).
    pub observables: BTreeMap<String, Vec<f64>>,
    /// Accepted moves over all steps, burn-in included.
    pub acceptance_rate: f64,
    /// Batch-means `(mean, standard error)` of every observable that is
    /// defined at all recorded states.
    pub summary: BTreeMap<String, (f64, f64)>,
    /// Last state of the chain.
    pub final_state: DiracData,
}

impl ChainStats {
    /// Number of recorded samples.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    /// Whether nothing was recorded.
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Recorded series of one observable.
    pub fn series(&self, name: &str) -> Result<&[f64]> {
        self.observables
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownObservable(name.to_string()))
    }
}

/// Runs one chain to completion.
pub fn run(config: &ChainConfig) -> Result<ChainStats> {
    let mut chain = Chain::new(config.clone())?;
    let capacity = config.sample_count();
    let mut steps = Vec::with_capacity(capacity);
    let mut acceptance_so_far = Vec::with_capacity(capacity);
    let mut observables: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for step in 1..=config.n_steps {
        chain.step()?;
        if step > config.burn_in && (step - config.burn_in) % config.thinning == 0 {
            steps.push(step);
            acceptance_so_far.push(chain.acceptance());
            for (name, value) in chain.observe() {
                observables
                    .entry(name)
                    .or_insert_with(|| Vec::with_capacity(capacity))
                    .push(value);
            }
        }
    }
    let summary = observables
        .iter()
        .filter_map(|(name, xs)| batch_means(xs).ok().map(|v| (name.clone(), v)))
        .collect();
    Ok(ChainStats {
        seed: config.seed,
        steps,
        acceptance_so_far,
        observables,
        acceptance_rate: chain.acceptance(),
        summary,
        final_state: chain.state,
    })
}

/// Runs independent chains in parallel, one per seed, returned in
/// ascending seed order.
pub fn run_many(config: &ChainConfig, seeds: &[u64]) -> Result<Vec<ChainStats>> {
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            run(&c)
        })
        .collect()
}

/// Batch-means estimate `(mean, standard error)` with `⌈√n⌉` batches.
///
/// The mean is the plain sample mean. The `n mod b` samples left after
/// cutting `b` equal batches only enter the mean, not the error.
pub fn batch_means(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Parse(format!(
            "batch means need at least two samples, got {n}"
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::ZeroDenominator(
            "an observable that is undefined at some recorded state".into(),
        ));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let batches = (n as f64).sqrt().ceil() as usize;
    let size = n / batches;
    let means: Vec<f64> = samples
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((mean, (var / batches as f64).sqrt()))
}

/// Batch-means estimate of one recorded observable.
pub fn estimate(stats: &ChainStats, name: &str) -> Result<(f64, f64)> {
    batch_means(stats.series(name)?)
}

/// Writes the chain CSV: a `# seed=…` line followed by the columns
/// `step,S,F,TrD2,acceptance_so_far`.
pub fn write_csv<W: Write>(stats: &ChainStats, mut out: W) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let sig = stats.final_state.signature();
    writeln!(
        out,
        "# seed={} signature={},{} N={} acceptance={}",
        stats.seed,
        sig.p,
        sig.q,
        stats.final_state.n(),
        stats.acceptance_rate
    )
    .map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["step", OBS_ACTION, OBS_F, OBS_TR_D2, "acceptance_so_far"])
        .map_err(csv_err)?;
    let s = stats.series(OBS_ACTION)?;
    let f = stats.series(OBS_F)?;
    let d2 = stats.series(OBS_TR_D2)?;
    for i in 0..stats.len() {
        w.write_record([
            stats.steps[i].to_string(),
            s[i].to_string(),
            f[i].to_string(),
            d2[i].to_string(),
            stats.acceptance_so_far[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Reads the seed back from the first line of a chain CSV.
pub fn read_csv_seed(text: &str) -> Option<u64> {
    let first = text.lines().next()?;
    first
        .strip_prefix("# seed=")?
        .split_whitespace()
        .next()?
        .parse()
        .ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::spectral_action;
    use crate::dirac::{hermiticity_defect, random_dirac_data};
    use crate::oracle::gaussian_d1_draws;

    fn config(p: usize, q: usize, n: usize, action: &str, step: f64, steps: usize) -> ChainConfig {
        ChainConfig {
            signature: Signature::new(p, q).unwrap(),
            n,
            action: action.parse().unwrap(),
            step_size: step,
            n_steps: steps,
            burn_in: steps / 10,
            thinning: 1,
            seed: 17,
            traceless_l: false,
            eval_path: EvalPath::ClosedForm,
        }
    }

    #[test]
    fn zero_step_keeps_data() {
        let data = random_dirac_data(Signature::new(1, 1).unwrap(), 3, 2, None, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(propose(&data, 0.0, &mut rng), data);
    }

    #[test]
    fn proposals_respect_hermiticity_and_tracelessness() {
        let sig = Signature::new(1, 3).unwrap();
        let data = random_dirac_data(sig, 3, 2, None, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let next = propose(&data, 0.3, &mut rng);
        for (slot, k) in next.iter() {
            assert!(hermiticity_defect(k, slot.letter_type) < 1e-14);
            if slot.letter_type == LetterType::L {
                assert!(k.trace().norm() < 1e-14);
            }
        }
    }

    #[test]
    fn proposals_are_deterministic() {
        let data = DiracData::zeros(Signature::new(2, 0).unwrap(), 2).unwrap();
        let a = propose(&data, 0.5, &mut ChaCha8Rng::seed_from_u64(4));
        let b = propose(&data, 0.5, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_step_chain_is_constant() {
        let stats = run(&config(1, 0, 3, "2:0.5", 0.0, 50)).unwrap();
        assert_eq!(stats.acceptance_rate, 1.0);
        let s = stats.series(OBS_ACTION).unwrap();
        assert!(s.iter().all(|&x| x == s[0]));
        assert_eq!(estimate(&stats, OBS_ACTION).unwrap(), (s[0], 0.0));
    }

    #[test]
    fn sample_count_matches_thinning() {
        let mut c = config(1, 0, 2, "2:0.5", 0.1, 103);
        c.burn_in = 10;
        c.thinning = 4;
        let stats = run(&c).unwrap();
        assert_eq!(stats.len(), c.sample_count());
        assert_eq!(stats.len(), 23);
        assert!(stats.steps.iter().all(|s| (s - 10) % 4 == 0));
    }

    #[test]
    fn chains_are_reproducible() {
        let c = config(1, 1, 2, "2:1,4:1", 0.1, 200);
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
        let many = run_many(&c, &[5, 3]).unwrap();
        assert_eq!(many[0].seed, 3);
        let mut single = c.clone();
        single.seed = 5;
        assert_eq!(many[1], run(&single).unwrap());
    }

    #[test]
    fn tracked_action_matches_recomputation() {
        let c = config(2, 2, 2, "2:1,4:0.5", 0.15, 0);
        let c = ChainConfig {
            n_steps: 300,
            burn_in: 0,
            ..c
        };
        let mut chain = Chain::new(c.clone()).unwrap();
        for _ in 0..300 {
            chain.step().unwrap();
            let fresh = spectral_action(&c.action, chain.state()).unwrap().total;
            let tracked = chain.action();
            assert!((fresh - tracked).abs() <= 1e-8 * fresh.abs().max(1e-12));
        }
        for (slot, k) in chain.state().iter() {
            assert!(hermiticity_defect(k, slot.letter_type) < 1e-12);
        }
    }

    #[test]
    fn acceptance_band_for_quartic_lorentzian_plane() {
        let n = 4;
        let c = config(1, 1, n, "2:1,4:1", 0.1 / (n as f64).sqrt(), 4000);
        let stats = run(&c).unwrap();
        assert!(stats.acceptance_rate > 0.05 && stats.acceptance_rate < 0.95);
    }

    #[test]
    fn batch_means_of_normal_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let (mean, se) = batch_means(&xs).unwrap();
        assert!(mean.abs() < 4.0 / 100.0);
        assert!((se - 0.01).abs() < 0.003, "se = {se}");
        assert!(batch_means(&[1.0]).is_err());
        assert!(batch_means(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn unknown_observable_is_reported() {
        let stats = run(&config(1, 0, 2, "2:0.5", 0.1, 20)).unwrap();
        assert_eq!(
            estimate(&stats, "nope"),
            Err(Error::UnknownObservable("nope".into()))
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let ok = config(1, 0, 2, "2:0.5", 0.1, 20);
        assert!(ok.validate().is_ok());
        assert!(ChainConfig {
            step_size: -1.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(ChainConfig {
            burn_in: 20,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(ChainConfig {
            thinning: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        let bad_action = ChainConfig {
            action: "2:1,4:-1".parse().unwrap(),
            ..ok.clone()
        };
        assert!(bad_action.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = config(1, 3, 2, "2:1,4:0.25", 0.05, 100);
        assert_eq!(ChainConfig::from_json(&c.to_json()).unwrap(), c);
        let minimal = r#"{"signature":{"p":1,"q":0},"N":3,"action":{"2":0.5},
            "step_size":0.1,"n_steps":10,"seed":1}"#;
        let parsed = ChainConfig::from_json(minimal).unwrap();
        assert_eq!(parsed.thinning, 1);
        assert_eq!(parsed.eval_path, EvalPath::ClosedForm);
    }

    #[test]
    fn csv_has_seed_line_and_header() {
        let stats = run(&config(1, 0, 2, "2:0.5", 0.1, 30)).unwrap();
        let mut buf = Vec::new();
        write_csv(&stats, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(read_csv_seed(&text), Some(17));
        assert_eq!(text.lines().nth(1), Some("step,S,F,TrD2,acceptance_so_far"));
        assert_eq!(text.lines().count(), 2 + stats.len());
    }

    #[test]
    fn gaussian_chain_agrees_with_direct_sampler_small() {
        let n = 3;
        let mut c = config(1, 0, n, "2:0.5", 0.12, 40_000);
        c.burn_in = 2_000;
        let stats = run(&c).unwrap();
        let direct = gaussian_d1_draws(n, 20_000, 99).unwrap();
        for (name, reference) in [(OBS_F, &direct.f), ("Tr[K1^2]", &direct.tr_h2)] {
            let chain = estimate(&stats, name).unwrap();
            let (m, se) = batch_means(reference).unwrap();
            let combined = (chain.1.powi(2) + se.powi(2)).sqrt();
            assert!(
                (chain.0 - m).abs() < 3.0 * combined,
                "{name}: {chain:?} vs {m} ± {se}"
            );
        }
    }
}
