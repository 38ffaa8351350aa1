//! Statistics and the classical key pipeline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::PostprocessError;
use crate::protocol::TrialRecord;
use crate::qstate::{S_PRIME_TERMS, S_TERMS};
use crate::source::Outcome;

/// Coincidence counts for one setting combination. Stored as `f64` so that
/// expected (infinite-statistics) counts can be fed through the same path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counts {
    pub r_12: f64,
    pub r_12p: f64,
    pub r_1p2: f64,
    pub r_1p2p: f64,
}

impl Counts {
    pub fn total(&self) -> f64 {
        self.r_12 + self.r_12p + self.r_1p2 + self.r_1p2p
    }

    pub fn add(&mut self, alice: Outcome, bob: Outcome) {
        match (alice, bob) {
            (Outcome::Plus, Outcome::Plus) => self.r_12 += 1.0,
            (Outcome::Plus, Outcome::Minus) => self.r_12p += 1.0,
            (Outcome::Minus, Outcome::Plus) => self.r_1p2 += 1.0,
            (Outcome::Minus, Outcome::Minus) => self.r_1p2p += 1.0,
        }
    }

    /// Correlation and its Poisson delta-method standard error,
    /// `var E = 4AB/(A+B)³` with A the like-detector and B the unlike-detector counts.
    pub fn correlation(&self) -> Option<(f64, f64)> {
        let a = self.r_12 + self.r_1p2p;
        let b = self.r_12p + self.r_1p2;
        let n = a + b;
        if !(n > 0.0) {
            return None;
        }
        Some(((a - b) / n, (4.0 * a * b / (n * n * n)).sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinationEstimate {
    pub alice: u8,
    pub bob: u8,
    pub counts: Counts,
    pub e: f64,
    pub e_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellEstimate {
    pub s: f64,
    pub s_sigma: f64,
    pub s_prime: f64,
    pub s_prime_sigma: f64,
    /// Terms of S in the order (α₁,β₁), (α₁,β₃), (α₃,β₁), (α₃,β₃).
    pub s_terms: [CombinationEstimate; 4],
    /// Terms of S′ in the order (α₂,β₂), (α₂,β₄), (α₄,β₂), (α₄,β₄).
    pub s_prime_terms: [CombinationEstimate; 4],
}

fn combine(
    terms: &[(u8, u8, f64); 4],
    counts: &[Counts; 4],
) -> Result<(f64, f64, [CombinationEstimate; 4]), PostprocessError> {
    let mut value = 0.0;
    let mut var = 0.0;
    let mut out = [CombinationEstimate {
        alice: 0,
        bob: 0,
        counts: Counts::default(),
        e: 0.0,
        e_sigma: 0.0,
    }; 4];
    for (k, &(alice, bob, sign)) in terms.iter().enumerate() {
        let (e, sigma) = counts[k]
            .correlation()
            .ok_or(PostprocessError::MissingCombination { alice, bob })?;
        value += sign * e;
        var += sigma * sigma;
        out[k] = CombinationEstimate {
            alice,
            bob,
            counts: counts[k],
            e,
            e_sigma: sigma,
        };
    }
    Ok((value, var.sqrt(), out))
}

/// S and S′ from per-combination counts, ordered as in [`S_TERMS`] and [`S_PRIME_TERMS`].
pub fn estimate_bell_from_counts(
    s_counts: &[Counts; 4],
    s_prime_counts: &[Counts; 4],
) -> Result<BellEstimate, PostprocessError> {
    let (s, s_sigma, s_terms) = combine(&S_TERMS, s_counts)?;
    let (s_prime, s_prime_sigma, s_prime_terms) = combine(&S_PRIME_TERMS, s_prime_counts)?;
    Ok(BellEstimate {
        s,
        s_sigma,
        s_prime,
        s_prime_sigma,
        s_terms,
        s_prime_terms,
    })
}

fn term_slot(terms: &[(u8, u8, f64); 4], a: u8, b: u8) -> Option<usize> {
    terms.iter().position(|&(ta, tb, _)| ta == a && tb == b)
}

#[derive(Debug, Clone, Copy, Default)]
struct BellTally {
    s: [Counts; 4],
    s_prime: [Counts; 4],
}

impl BellTally {
    /// Returns true when the trial fed one of the eight combinations.
    fn add(&mut self, t: &TrialRecord) -> bool {
        if let Some(k) = term_slot(&S_TERMS, t.alice_index, t.bob_index) {
            self.s[k].add(t.alice_outcome, t.bob_outcome);
            true
        } else if let Some(k) = term_slot(&S_PRIME_TERMS, t.alice_index, t.bob_index) {
            self.s_prime[k].add(t.alice_outcome, t.bob_outcome);
            true
        } else {
            false
        }
    }
}

/// Finite-sample S and S′ with Poisson error propagation.
pub fn estimate_bell(
    bell_s_trials: &[TrialRecord],
    bell_s_prime_trials: &[TrialRecord],
) -> Result<BellEstimate, PostprocessError> {
    let mut tally = BellTally::default();
    for t in bell_s_trials.iter().chain(bell_s_prime_trials) {
        tally.add(t);
    }
    estimate_bell_from_counts(&tally.s, &tally.s_prime)
}

fn check_pair(a: &[bool], b: &[bool]) -> Result<(), PostprocessError> {
    if a.len() != b.len() {
        return Err(PostprocessError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(PostprocessError::EmptyKey);
    }
    Ok(())
}

/// Hamming distance divided by key length.
pub fn ber(alice: &[bool], bob: &[bool]) -> Result<f64, PostprocessError> {
    check_pair(alice, bob)?;
    let errors = alice.iter().zip(bob).filter(|(x, y)| x != y).count();
    Ok(errors as f64 / alice.len() as f64)
}

/// Binomial standard error of a measured BER.
pub fn ber_sigma(ber: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (ber * (1.0 - ber) / n as f64).sqrt()
}

/// Upper estimate `ber + k·σ`.
pub fn conservative_ber(ber: f64, n: usize, k_sigma: f64) -> f64 {
    (ber + k_sigma * ber_sigma(ber, n)).min(1.0)
}

/// Fraction of the key an intercept-resend eavesdropper may know:
/// double-pair leakage plus `(4/√2)·BER`, capped at 1.
pub fn eve_bound(ber_conservative: f64, double_pair_frac: f64) -> f64 {
    (double_pair_frac + 4.0 / std::f64::consts::SQRT_2 * ber_conservative).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileParams {
    /// Block size for each scheduled round. Verification passes reuse the last.
    pub schedule: Vec<usize>,
    /// Consecutive matching random-subset parities required to stop.
    pub verify_checks: usize,
    pub max_rounds: usize,
}

impl ReconcileParams {
    /// Initial block `⌈0.73/ber⌉`, doubled for each of four rounds.
    pub fn for_error_rate(ber_estimate: f64) -> Result<Self, PostprocessError> {
        if !(ber_estimate > 0.0 && ber_estimate < 0.5) {
            return Err(PostprocessError::BadErrorEstimate(ber_estimate));
        }
        let k = ((0.73 / ber_estimate).ceil() as usize).max(2);
        Ok(ReconcileParams {
            schedule: vec![k, 2 * k, 4 * k, 8 * k],
            verify_checks: 20,
            max_rounds: 64,
        })
    }

    /// Schedule for keys that are expected to already agree.
    pub fn verification_only(block: usize) -> Self {
        ReconcileParams {
            schedule: vec![block],
            verify_checks: 20,
            max_rounds: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundStats {
    pub block_size: usize,
    pub parities: usize,
    pub errors_found: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconciled {
    /// Alice's key after error removal.
    pub key: Vec<bool>,
    /// Bob's key after error removal; equal to `key` on success.
    pub bob_key: Vec<bool>,
    /// Parities revealed over the public channel.
    pub bits_disclosed: usize,
    /// Bits dropped to pay for those parities; equal to `bits_disclosed`
    /// unless a group was too small to pay in full.
    pub bits_discarded: usize,
    /// Located errors, dropped from both keys.
    pub errors_removed: usize,
    pub rounds: Vec<RoundStats>,
}

fn parity(key: &[bool], positions: &[usize]) -> bool {
    positions.iter().fold(false, |p, &i| p ^ key[i])
}

/// Binary search for one error inside `positions`, whose parities are known
/// to differ. Each halving discloses one parity; returns the error position.
pub fn bisect(alice: &[bool], bob: &[bool], positions: &[usize], disclosed: &mut usize) -> usize {
    let mut span = positions;
    while span.len() > 1 {
        let (left, right) = span.split_at(span.len() / 2);
        *disclosed += 1;
        span = if parity(alice, left) != parity(bob, left) {
            left
        } else {
            right
        };
    }
    span[0]
}

struct Keys {
    alice: Vec<bool>,
    bob: Vec<bool>,
    disclosed: usize,
    discarded: usize,
    removed: usize,
}

impl Keys {
    /// Compares one parity over `group`. On a mismatch, bisection locates one
    /// error and that position is discarded from both keys. Then as many
    /// further bits as parities were disclosed are dropped from the end of
    /// the group.
    fn check_group(&mut self, group: &[usize], drop: &mut Vec<usize>) -> bool {
        let mut disclosed = 1;
        let mismatch = parity(&self.alice, group) != parity(&self.bob, group);
        let mut found = None;
        if mismatch {
            let pos = bisect(&self.alice, &self.bob, group, &mut disclosed);
            drop.push(pos);
            found = Some(pos);
            self.removed += 1;
        }
        self.disclosed += disclosed;
        let rest: Vec<usize> = group.iter().copied().filter(|&i| Some(i) != found).collect();
        let keep = rest.len().saturating_sub(disclosed);
        self.discarded += rest.len() - keep;
        drop.extend_from_slice(&rest[keep..]);
        mismatch
    }

    fn remove(&mut self, drop: Vec<usize>) {
        let mut gone = vec![false; self.alice.len()];
        for i in drop {
            gone[i] = true;
        }
        for key in [&mut self.alice, &mut self.bob] {
            let mut k = 0;
            key.retain(|_| {
                k += 1;
                !gone[k - 1]
            });
        }
    }

    fn block_pass<R: Rng + ?Sized>(&mut self, block: usize, rng: &mut R) -> RoundStats {
        let before = (self.disclosed, self.removed);
        let mut perm: Vec<usize> = (0..self.alice.len()).collect();
        perm.shuffle(rng);
        let mut drop = Vec::new();
        for group in perm.chunks(block.max(1)) {
            self.check_group(group, &mut drop);
        }
        self.remove(drop);
        RoundStats {
            block_size: block,
            parities: self.disclosed - before.0,
            errors_found: self.removed - before.1,
        }
    }

    /// Random-subset parities until `needed` consecutive matches, then one
    /// whole-key parity. Returns the number of corrections made.
    fn final_checks<R: Rng + ?Sized>(&mut self, needed: usize, rng: &mut R) -> RoundStats {
        let before = (self.disclosed, self.removed);
        let mut streak = 0;
        while streak < needed && !self.alice.is_empty() {
            let subset: Vec<usize> = (0..self.alice.len()).filter(|_| rng.random::<bool>()).collect();
            if subset.is_empty() {
                continue;
            }
            let mut drop = Vec::new();
            let mismatch = self.check_group(&subset, &mut drop);
            self.remove(drop);
            streak = if mismatch { 0 } else { streak + 1 };
        }
        if !self.alice.is_empty() {
            let all: Vec<usize> = (0..self.alice.len()).collect();
            let mut drop = Vec::new();
            self.check_group(&all, &mut drop);
            self.remove(drop);
        }
        RoundStats {
            block_size: 0,
            parities: self.disclosed - before.0,
            errors_found: self.removed - before.1,
        }
    }
}

/// Interactive block-parity error detection.
///
/// Each round shuffles the key with a shared permutation, compares block
/// parities, and bisects every mismatched block to locate one error, which is
/// discarded. One further bit is discarded per disclosed parity. After the
/// scheduled rounds, verification passes at the last block size repeat until
/// one finds nothing, followed by random-subset checks and a whole-key
/// parity; any error found there restarts verification.
pub fn reconcile<R: Rng + ?Sized>(
    alice: &[bool],
    bob: &[bool],
    params: &ReconcileParams,
    rng: &mut R,
) -> Result<Reconciled, PostprocessError> {
    check_pair(alice, bob)?;
    if params.schedule.is_empty() || params.schedule.contains(&0) {
        return Err(PostprocessError::BadSchedule(format!("{:?}", params.schedule)));
    }
    let mut keys = Keys {
        alice: alice.to_vec(),
        bob: bob.to_vec(),
        disclosed: 0,
        discarded: 0,
        removed: 0,
    };
    let mut rounds = Vec::new();
    for &block in &params.schedule {
        rounds.push(keys.block_pass(block, rng));
    }
    let last = *params.schedule.last().expect("nonempty schedule");
    loop {
        if rounds.len() >= params.max_rounds {
            return Err(PostprocessError::NotConverged(params.max_rounds));
        }
        let pass = keys.block_pass(last, rng);
        rounds.push(pass);
        if pass.errors_found > 0 {
            continue;
        }
        let checks = keys.final_checks(params.verify_checks, rng);
        rounds.push(checks);
        if checks.errors_found == 0 {
            break;
        }
    }
    let residual = keys.alice.iter().zip(&keys.bob).filter(|(a, b)| a != b).count();
    if residual > 0 {
        return Err(PostprocessError::ResidualErrors(residual));
    }
    Ok(Reconciled {
        key: keys.alice,
        bob_key: keys.bob,
        bits_disclosed: keys.disclosed,
        bits_discarded: keys.discarded,
        errors_removed: keys.removed,
        rounds,
    })
}

/// Seed of the Toeplitz hashing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashSeed {
    /// Unit diagonal: output is the leading `n_final` bits of the key.
    Identity,
    Seeded(u64),
}

fn pack(bits: impl Iterator<Item = bool>, len: usize) -> Vec<u64> {
    let mut words = vec![0u64; len.div_ceil(64) + 1];
    for (i, b) in bits.enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// 64 bits of `words` starting at bit `offset`.
fn window64(words: &[u64], offset: usize) -> u64 {
    let (q, r) = (offset / 64, offset % 64);
    let lo = words[q] >> r;
    if r == 0 {
        lo
    } else {
        lo | (words.get(q + 1).copied().unwrap_or(0) << (64 - r))
    }
}

/// Generator diagonals `t[0..n+m-1]` with `M[i][j] = t[i - j + n - 1]`.
pub fn toeplitz_diagonals(n: usize, n_final: usize, seed: HashSeed) -> Vec<bool> {
    let len = (n + n_final).saturating_sub(1);
    match seed {
        HashSeed::Identity => (0..len).map(|k| k + 1 == n).collect(),
        HashSeed::Seeded(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..len).map(|_| rng.random::<bool>()).collect()
        }
    }
}

/// Privacy amplification by a seeded binary Toeplitz matrix:
/// `final = M·key` over GF(2), `M` being `n_final × key.len()`.
pub fn amplify(key: &[bool], n_final: usize, seed: HashSeed) -> Result<Vec<bool>, PostprocessError> {
    let n = key.len();
    if n_final > n {
        return Err(PostprocessError::TooManyOutputBits {
            requested: n_final,
            available: n,
        });
    }
    if n_final == 0 {
        return Ok(Vec::new());
    }
    let t = toeplitz_diagonals(n, n_final, seed);
    let t_words = pack(t.iter().copied(), t.len());
    // Row i over reversed columns is t[i .. i + n].
    let rev_key = pack(key.iter().rev().copied(), n);
    let full = n / 64;
    let tail = n % 64;
    let out = (0..n_final)
        .map(|i| {
            let mut acc = 0u64;
            for m in 0..full {
                acc ^= window64(&t_words, i + 64 * m) & rev_key[m];
            }
            if tail > 0 {
                let mask = (1u64 << tail) - 1;
                acc ^= window64(&t_words, i + 64 * full) & rev_key[full] & mask;
            }
            acc.count_ones() % 2 == 1
        })
        .collect();
    Ok(out)
}

/// Upper bound on Eve's remaining information after compressing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualInfo {
    /// Safety margin `n_ec − n_final − eve_bits`.
    pub margin: i64,
    /// `2^{-margin}/ln 2` bits, or `None` if the compression was insufficient.
    pub bound_bits: Option<f64>,
}

pub fn residual_info(n_ec: usize, n_final: usize, eve_bits: usize) -> ResidualInfo {
    let margin = n_ec as i64 - n_final as i64 - eve_bits as i64;
    let bound_bits = (margin >= 0).then(|| (-(margin as f64)).exp2() / std::f64::consts::LN_2);
    ResidualInfo { margin, bound_bits }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detection {
    /// Elapsed collection time at the first crossing, with the number of
    /// Bell-test trials seen by then.
    Detected { seconds: f64, bell_trials: usize },
    /// The statistic never crossed; margin at the end of the stream.
    NotDetected { final_margin: f64 },
}

impl Detection {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            Detection::Detected { seconds, .. } => Some(*seconds),
            Detection::NotDetected { .. } => None,
        }
    }
}

/// How long Alice and Bob must collect before the Bell violation certifies
/// the channel.
///
/// The stream's pooled estimate `(|S| + |S′|)/2` and its standard error are
/// taken from all Bell trials. With `σ(N) = σ_full·√(N_full/N)`, the answer is
/// the smallest N for which the estimate exceeds `threshold` by `k_sigma·σ(N)`,
/// reported as the arrival time `(i+1)/usable_rate` of the N-th Bell trial in
/// `trials`. Streams whose estimate does not exceed the threshold, or that are
/// too short to reach N, are not detected.
pub fn detection_time(
    trials: &[TrialRecord],
    usable_rate: f64,
    threshold: f64,
    k_sigma: f64,
) -> Result<Detection, PostprocessError> {
    let mut full = BellTally::default();
    let mut arrivals = Vec::new();
    for (i, t) in trials.iter().enumerate() {
        if full.add(t) {
            arrivals.push(i);
        }
    }
    let est = estimate_bell_from_counts(&full.s, &full.s_prime)?;
    let sigma_full = (est.s_sigma.powi(2) + est.s_prime_sigma.powi(2)).sqrt() / 2.0;
    let pooled = (est.s.abs() + est.s_prime.abs()) / 2.0;
    let not_detected = Detection::NotDetected {
        final_margin: pooled - k_sigma * sigma_full - threshold,
    };
    let excess = pooled - threshold;
    if excess <= 0.0 {
        return Ok(not_detected);
    }
    let n_full = arrivals.len() as f64;
    let needed = ((k_sigma * sigma_full / excess).powi(2) * n_full).ceil().max(1.0) as usize;
    match arrivals.get(needed - 1) {
        Some(&i) => Ok(Detection::Detected {
            seconds: (i + 1) as f64 / usable_rate,
            bell_trials: needed,
        }),
        None => Ok(not_detected),
    }
}

/// End-to-end accounting of one key-generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionReport {
    pub seed: u64,
    pub duration_s: f64,
    pub windows: u64,
    pub usable_trials: usize,
    pub n_raw: usize,
    pub ber: f64,
    pub ber_sigma: f64,
    pub ber_conservative: f64,
    pub double_pair_frac: f64,
    pub eve_bound: f64,
    pub eve_bits: usize,
    pub eve_info_observed: f64,
    pub n_ec: usize,
    pub bits_disclosed: usize,
    pub reconcile_rounds: usize,
    pub n_final: usize,
    pub residual: ResidualInfo,
    pub bell: BellEstimate,
    pub detection: Detection,
}

impl SessionReport {
    pub fn raw_rate(&self) -> f64 {
        self.n_raw as f64 / self.duration_s
    }

    pub fn net_rate(&self) -> f64 {
        self.n_final as f64 / self.duration_s
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let (detected, det_margin) = match self.detection {
            Detection::Detected { seconds, .. } => (Some(seconds), None),
            Detection::NotDetected { final_margin } => (None, Some(final_margin)),
        };
        vec![
            ("seed", self.seed.to_string()),
            ("duration_s", self.duration_s.to_string()),
            ("windows", self.windows.to_string()),
            ("usable_trials", self.usable_trials.to_string()),
            ("n_raw", self.n_raw.to_string()),
            ("raw_rate", self.raw_rate().to_string()),
            ("ber", self.ber.to_string()),
            ("ber_sigma", self.ber_sigma.to_string()),
            ("ber_conservative", self.ber_conservative.to_string()),
            ("double_pair_frac", self.double_pair_frac.to_string()),
            ("eve_bound", self.eve_bound.to_string()),
            ("eve_bits", self.eve_bits.to_string()),
            ("eve_info_observed", self.eve_info_observed.to_string()),
            ("n_ec", self.n_ec.to_string()),
            ("bits_disclosed", self.bits_disclosed.to_string()),
            ("reconcile_rounds", self.reconcile_rounds.to_string()),
            ("n_final", self.n_final.to_string()),
            ("net_rate", self.net_rate().to_string()),
            ("residual_margin", self.residual.margin.to_string()),
            ("residual_bound", opt(self.residual.bound_bits)),
            ("S", self.bell.s.to_string()),
            ("S_sigma", self.bell.s_sigma.to_string()),
            ("S_prime", self.bell.s_prime.to_string()),
            ("S_prime_sigma", self.bell.s_prime_sigma.to_string()),
            ("detection_time_s", opt(detected)),
            ("detection_margin", opt(det_margin)),
        ]
    }

    /// Flat `key=value` block, one field per line, full precision.
    pub fn to_kv(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// CSV header; column order matches [`SessionReport::to_csv_row`].
    pub fn csv_header() -> String {
        let dummy = SessionReport::placeholder();
        dummy
            .fields()
            .into_iter()
            .map(|(k, _)| k)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(_, v)| v)
            .collect::<Vec<_>>()
            .join(",")
    }

    fn placeholder() -> Self {
        let c = CombinationEstimate {
            alice: 0,
            bob: 0,
            counts: Counts::default(),
            e: 0.0,
            e_sigma: 0.0,
        };
        SessionReport {
            seed: 0,
            duration_s: 1.0,
            windows: 0,
            usable_trials: 0,
            n_raw: 0,
            ber: 0.0,
            ber_sigma: 0.0,
            ber_conservative: 0.0,
            double_pair_frac: 0.0,
            eve_bound: 0.0,
            eve_bits: 0,
            eve_info_observed: 0.0,
            n_ec: 0,
            bits_disclosed: 0,
            reconcile_rounds: 0,
            n_final: 0,
            residual: residual_info(0, 0, 0),
            bell: BellEstimate {
                s: 0.0,
                s_sigma: 0.0,
                s_prime: 0.0,
                s_prime_sigma: 0.0,
                s_terms: [c; 4],
                s_prime_terms: [c; 4],
            },
            detection: Detection::NotDetected { final_margin: 0.0 },
        }
    }
}
