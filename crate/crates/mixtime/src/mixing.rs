//! The distributed mixing-time estimator: parallel token walks with count
//! forwarding, threshold-gated averaging, deviation convergecast, and the
//! doubling-plus-binary-search driver over probe lengths.

use crate::congest::{
    broadcast_values, build_bfs_tree, upcast_numerators, BfsTree, ChunkSpec, CongestError,
    CongestLedger, Message, PayloadKind, Phase, RoundBudget, RoundEngine,
};
use crate::graph::Graph;
use crate::numeric::{ceil_ln, ceil_log, ceil_log2, LogBase};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Token budget from the protocol's own formula, `80 n^8 log n`, with the
/// log ceiling taken as an exact integer so the preset is reproducible.
pub fn paper_token_count(n: usize) -> BigUint {
    paper_token_count_with_base(n, LogBase::Natural)
}

/// Same preset with a configurable logarithm base.
pub fn paper_token_count_with_base(n: usize, base: LogBase) -> BigUint {
    BigUint::from(80u32) * BigUint::from(n).pow(8) * BigUint::from(ceil_log(n, base).max(1))
}

/// Default token budget: the preset, or `10^6 * 2m * n^3` when that is
/// larger, which keeps the averaging bias far below the deviation
/// threshold at desk scale.
pub fn default_token_count(n: usize, m: usize) -> BigUint {
    let desk = BigUint::from(1_000_000u64) * BigUint::from(2 * m) * BigUint::from(n).pow(3);
    paper_token_count(n).max(desk)
}

/// Per-payload bit allowance `9 * ceil(log2 n) + 7`; wide enough for any
/// count up to the token preset.
pub fn walk_payload_budget(n: usize) -> u64 {
    9 * ceil_log2(n) + 7
}

/// Worst-case accumulated rounding error of threshold-gated averaging over
/// `length` rounds: `2m * length / tokens` in L1.
pub fn bias_delta(length: u64, m: usize, tokens: &BigUint) -> BigRational {
    BigRational::new(
        BigInt::from(2 * m) * BigInt::from(length),
        BigInt::from(tokens.clone()),
    )
}

/// When a node holding `T` tokens switches from per-token sampling to
/// forwarding averages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AveragingThreshold {
    /// Average once `T >= d(v) * ceil(ln n)`.
    LnFactor,
    /// Average once `T >= d(v) * factor`.
    Factor(BigUint),
    /// Never average; every token samples its own edge.
    Disabled,
}

impl AveragingThreshold {
    fn factor(&self, n: usize) -> Option<BigUint> {
        match self {
            AveragingThreshold::LnFactor => Some(BigUint::from(ceil_ln(n).max(1))),
            AveragingThreshold::Factor(f) => Some(f.clone()),
            AveragingThreshold::Disabled => None,
        }
    }
}

/// Parameters of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    /// Number of walk tokens launched per probe.
    pub tokens: BigUint,
    /// Accuracy threshold on the L1 deviation.
    pub epsilon: BigRational,
    /// Master seed; each probe derives its own stream from it.
    pub seed: u64,
    /// Lazy walk: stay put with probability 1/2.
    pub lazy: bool,
    pub averaging_threshold: AveragingThreshold,
    /// Safety cap on probed lengths.
    pub max_length: u64,
}

impl WalkConfig {
    /// Defaults for `g`: the default token budget, `epsilon = 1/n^2`, the
    /// ln-factor threshold, and the cap `n^3 * ceil(log2 n)`.
    pub fn for_graph(g: &Graph) -> Self {
        let n = g.node_count();
        WalkConfig {
            tokens: default_token_count(n, g.edge_count()),
            epsilon: BigRational::new(BigInt::one(), BigInt::from((n * n) as u64)),
            seed: 0,
            lazy: false,
            averaging_threshold: AveragingThreshold::LnFactor,
            max_length: ((n * n * n) as u64) * ceil_log2(n).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.tokens.is_zero() {
            return Err("token count must be at least 1".into());
        }
        let two = BigRational::new(BigInt::from(2), BigInt::one());
        if !(self.epsilon > BigRational::zero() && self.epsilon <= two) {
            return Err("epsilon must lie in (0, 2]".into());
        }
        if self.max_length < 1 {
            return Err("max_length must be at least 1".into());
        }
        Ok(())
    }
}

/// Where the walk tokens sit after a probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenState {
    counts: Vec<BigUint>,
}

impl TokenState {
    pub fn from_counts(counts: Vec<BigUint>) -> Self {
        TokenState { counts }
    }

    pub fn counts(&self) -> &[BigUint] {
        &self.counts
    }

    pub fn total(&self) -> BigUint {
        self.counts.iter().sum()
    }

    pub fn into_counts(self) -> Vec<BigUint> {
        self.counts
    }
}

/// Exact per-node deviation of the token distribution from stationarity,
/// kept as integer numerators over the common denominator `2mK`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationReport {
    /// `|2m * count(w) - d(w) * K|` per node.
    pub numerators: Vec<BigUint>,
    /// `2m * K`.
    pub denominator: BigUint,
    /// Sum of the numerators.
    pub sum: BigUint,
    /// `sum / denominator`, reduced.
    pub deviation: BigRational,
    /// Whether `deviation <= epsilon`, compared exactly.
    pub passes: bool,
}

/// Splits `held` tokens over `degree` neighbor slots. At or above the
/// threshold every slot gets `floor(held / degree)` and the remainder goes
/// one-each to a uniform subset drawn without replacement; below it, every
/// token picks a uniform slot on its own.
pub fn forward_tokens<R: Rng>(
    held: &BigUint,
    degree: usize,
    threshold: Option<&BigUint>,
    rng: &mut R,
) -> Vec<BigUint> {
    let mut out = vec![BigUint::zero(); degree];
    if held.is_zero() {
        return out;
    }
    let averaging = threshold.is_some_and(|t| held >= t);
    if averaging {
        let degree_big = BigUint::from(degree);
        let base = held / &degree_big;
        let rem = usize::try_from(&(held % &degree_big)).expect("remainder below degree");
        for slot in out.iter_mut() {
            *slot = base.clone();
        }
        let mut slots: Vec<usize> = (0..degree).collect();
        for i in 0..rem {
            let j = rng.random_range(i..degree);
            slots.swap(i, j);
            out[slots[i]] += 1u32;
        }
    } else {
        let held = u64::try_from(held).expect("sub-threshold token count fits u64");
        for _ in 0..held {
            out[rng.random_range(0..degree)] += 1u32;
        }
    }
    out
}

/// Lazy variant: above the threshold the node keeps `ceil(held / 2)` and
/// splits the floor half by the averaging rule; below it every token flips
/// a fair coin and movers pick a uniform slot.
pub fn forward_tokens_lazy<R: Rng>(
    held: &BigUint,
    degree: usize,
    threshold: Option<&BigUint>,
    rng: &mut R,
) -> (BigUint, Vec<BigUint>) {
    if held.is_zero() {
        return (BigUint::zero(), vec![BigUint::zero(); degree]);
    }
    let averaging = threshold.is_some_and(|t| held >= t);
    if averaging {
        let moving = held / BigUint::from(2u32);
        let stay = held - &moving;
        // the moving half keeps the averaging rule regardless of its size
        let out = forward_tokens(&moving, degree, Some(&BigUint::zero()), rng);
        (stay, out)
    } else {
        let held = u64::try_from(held).expect("sub-threshold token count fits u64");
        let mut stay = BigUint::zero();
        let mut out = vec![BigUint::zero(); degree];
        for _ in 0..held {
            if rng.random::<bool>() {
                stay += 1u32;
            } else {
                out[rng.random_range(0..degree)] += 1u32;
            }
        }
        (stay, out)
    }
}

/// Runs `length` communication rounds of the token walk from `source` and
/// returns the final counts. Sends at most one count message per directed
/// edge per round; token conservation is checked exactly after every round.
pub fn run_walk_phase(
    engine: &mut RoundEngine,
    source: usize,
    length: u64,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TokenState, CongestError> {
    run_walk_phase_observed(engine, source, length, cfg, rng, |_, _| {})
}

/// Same as [`run_walk_phase`], invoking `observer(round, counts)` after
/// every delivered round.
pub fn run_walk_phase_observed(
    engine: &mut RoundEngine,
    source: usize,
    length: u64,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
    mut observer: impl FnMut(u64, &[BigUint]),
) -> Result<TokenState, CongestError> {
    let g = engine.graph();
    let n = g.node_count();
    let factor = cfg.averaging_threshold.factor(n);
    let mut counts = vec![BigUint::zero(); n];
    counts[source] = cfg.tokens.clone();
    for round in 1..=length {
        let mut outboxes: Vec<Vec<Message>> = vec![Vec::new(); n];
        let mut next = vec![BigUint::zero(); n];
        for v in 0..n {
            if counts[v].is_zero() {
                continue;
            }
            let degree = g.degree(v);
            let threshold = factor.as_ref().map(|f| f * BigUint::from(degree));
            let (stay, per_slot) = if cfg.lazy {
                forward_tokens_lazy(&counts[v], degree, threshold.as_ref(), rng)
            } else {
                (
                    BigUint::zero(),
                    forward_tokens(&counts[v], degree, threshold.as_ref(), rng),
                )
            };
            debug_assert_eq!(
                &stay + per_slot.iter().sum::<BigUint>(),
                counts[v],
                "forwarding must conserve tokens at node {v}"
            );
            next[v] += stay;
            for (slot, &w) in g.neighbors(v).iter().enumerate() {
                if !per_slot[slot].is_zero() {
                    outboxes[v].push(Message::new(
                        v,
                        w,
                        PayloadKind::WalkCount,
                        per_slot[slot].clone(),
                    ));
                }
            }
        }
        let inboxes = engine.run_round(Phase::Walk, outboxes)?;
        for (w, inbox) in inboxes.into_iter().enumerate() {
            for msg in inbox {
                next[w] += msg.value;
            }
        }
        counts = next;
        let total: BigUint = counts.iter().sum();
        assert_eq!(total, cfg.tokens, "token conservation broken in round {round}");
        observer(round, &counts);
    }
    Ok(TokenState { counts })
}

/// Exact deviation of the final counts from the scaled stationary
/// distribution, with the verdict against `epsilon`.
pub fn deviation_sum(
    state: &TokenState,
    g: &Graph,
    tokens: &BigUint,
    epsilon: &BigRational,
) -> DeviationReport {
    let two_m = BigUint::from(2 * g.edge_count());
    let denominator = &two_m * tokens;
    let numerators: Vec<BigUint> = state
        .counts
        .iter()
        .zip(g.degrees())
        .map(|(count, &d)| {
            let a = &two_m * count;
            let b = BigUint::from(d) * tokens;
            if a >= b {
                a - b
            } else {
                b - a
            }
        })
        .collect();
    let sum: BigUint = numerators.iter().sum();
    let deviation = BigRational::new(BigInt::from(sum.clone()), BigInt::from(denominator.clone()));
    // sum / denominator <= epsilon, cross-multiplied in integers
    let passes = BigInt::from(sum.clone()) * epsilon.denom()
        <= epsilon.numer() * BigInt::from(denominator.clone());
    DeviationReport {
        numerators,
        denominator,
        sum,
        deviation,
        passes,
    }
}

/// One probed length with its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub index: u64,
    pub length: u64,
    pub deviation: BigRational,
    pub passed: bool,
    /// Rounds this probe consumed (walk plus deviation convergecast).
    pub rounds: u64,
    /// Final per-node token counts, kept for offline verification.
    pub final_counts: Vec<BigUint>,
}

/// Result of a full estimation run.
#[derive(Debug, Clone)]
pub struct MixingEstimate {
    /// Smallest probed length whose deviation passed; the probe at
    /// `estimate - 1` failed whenever `estimate > 1`.
    pub estimate: u64,
    /// Doubling bracket the binary search ran over.
    pub bracket: (u64, u64),
    pub probes: Vec<ProbeRecord>,
    /// Every simulated round: tree construction, broadcasts, walks,
    /// convergecasts.
    pub total_rounds: u64,
    /// Rounds spent before the first probe (BFS tree plus broadcasts).
    pub setup_rounds: u64,
    pub tree: BfsTree,
    pub ledger: CongestLedger,
}

#[derive(Debug, Error)]
pub enum MixingError {
    #[error(transparent)]
    Congest(#[from] CongestError),
    #[error("no probed length up to the cap {cap} brought the walk within epsilon")]
    MaxLengthExceeded {
        cap: u64,
        probes: Vec<ProbeRecord>,
        total_rounds: u64,
        ledger: Box<CongestLedger>,
    },
}

struct Estimator<'g, 'c> {
    engine: RoundEngine<'g>,
    tree: BfsTree,
    cfg: &'c WalkConfig,
    source: usize,
    chunk: ChunkSpec,
    probes: Vec<ProbeRecord>,
}

impl Estimator<'_, '_> {
    /// Runs one probe from scratch on a fresh deterministic substream.
    fn probe(&mut self, length: u64) -> Result<bool, CongestError> {
        let index = self.probes.len() as u64;
        let start = self.engine.rounds();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index);
        let state = run_walk_phase(&mut self.engine, self.source, length, self.cfg, &mut rng)?;
        let report = deviation_sum(
            &state,
            self.engine.graph(),
            &self.cfg.tokens,
            &self.cfg.epsilon,
        );
        let (root_sum, _) = upcast_numerators(
            &mut self.engine,
            &self.tree,
            &report.numerators,
            Some(&self.chunk),
            Phase::Upcast,
        )?;
        assert_eq!(
            root_sum, report.sum,
            "the convergecast total must match the local deviation sum"
        );
        self.probes.push(ProbeRecord {
            index,
            length,
            deviation: report.deviation,
            passed: report.passes,
            rounds: self.engine.rounds() - start,
            final_counts: state.into_counts(),
        });
        Ok(report.passes)
    }
}

/// Estimates the mixing time of `g` from `source`: doubles the probe
/// length until the deviation passes, then binary-searches the bracketing
/// interval. Expects a graph that already passed walk validation.
pub fn estimate_mixing_time(
    g: &Graph,
    source: usize,
    cfg: &WalkConfig,
) -> Result<MixingEstimate, MixingError> {
    cfg.validate().expect("invalid walk configuration");
    let n = g.node_count();
    let m = g.edge_count();
    assert!(source < n, "source node out of range");

    let payload_budget = cfg.tokens.bits().max(walk_payload_budget(n));
    let budget = RoundBudget {
        max_messages_per_edge: 1,
        max_payload_bits: Some(payload_budget),
    };
    let mut estimator = {
        let mut engine = RoundEngine::new(g, budget);
        let (tree, _) = build_bfs_tree(&mut engine, source)?;
        broadcast_values(
            &mut engine,
            &tree,
            &[cfg.tokens.clone(), BigUint::from(n), BigUint::from(m)],
        )?;
        let chunk = ChunkSpec {
            payload_bits: walk_payload_budget(n),
            // subtree sums never exceed 2 * 2mK
            value_bound: BigUint::from(4 * m) * &cfg.tokens,
        };
        Estimator {
            engine,
            tree,
            cfg,
            source,
            chunk,
            probes: Vec::new(),
        }
    };
    let setup_rounds = estimator.engine.rounds();

    let mut passed_at: Option<u32> = None;
    for h in 0.. {
        let length = 1u64 << h;
        if length > cfg.max_length {
            return Err(MixingError::MaxLengthExceeded {
                cap: cfg.max_length,
                total_rounds: estimator.engine.rounds(),
                probes: estimator.probes,
                ledger: Box::new(estimator.engine.into_ledger()),
            });
        }
        if estimator.probe(length)? {
            passed_at = Some(h);
            break;
        }
    }
    let h = passed_at.expect("loop exits only via break or error");

    let (estimate, bracket) = if h == 0 {
        // the very first probe passed; lengths below 1 are never probed
        (1, (1, 1))
    } else {
        let bracket = (1u64 << (h - 1), 1u64 << h);
        let (mut lo, mut hi) = bracket; // lo failed, hi passed
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if estimator.probe(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (hi, bracket)
    };

    Ok(MixingEstimate {
        estimate,
        bracket,
        probes: estimator.probes,
        total_rounds: estimator.engine.rounds(),
        setup_rounds,
        tree: estimator.tree,
        ledger: estimator.engine.into_ledger(),
    })
}

/// Probe log export: `probe_index,length,deviation_num,deviation_den,verdict,rounds`.
pub fn probes_to_csv(probes: &[ProbeRecord]) -> String {
    let mut out = String::from("probe_index,length,deviation_num,deviation_den,verdict,rounds\n");
    for p in probes {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.index,
            p.length,
            p.deviation.numer(),
            p.deviation.denom(),
            if p.passed { "pass" } else { "fail" },
            p.rounds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, generate, GraphFamily};
    use crate::oracle;
    use proptest::prelude::*;

    fn triangle() -> Graph {
        build_graph(&[(0, 1), (1, 2), (0, 2)], 3).unwrap()
    }

    fn ratio(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn cfg_with(g: &Graph, tokens: u64, epsilon: BigRational) -> WalkConfig {
        WalkConfig {
            tokens: BigUint::from(tokens),
            epsilon,
            ..WalkConfig::for_graph(g)
        }
    }

    fn walk_counts(
        g: &Graph,
        cfg: &WalkConfig,
        source: usize,
        length: u64,
        stream: u64,
    ) -> Vec<BigUint> {
        let mut engine = RoundEngine::new(g, RoundBudget::default());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        run_walk_phase(&mut engine, source, length, cfg, &mut rng)
            .unwrap()
            .into_counts()
    }

    #[test]
    fn forward_even_split_above_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward_tokens(
            &BigUint::from(1000u32),
            4,
            Some(&BigUint::from(1000u32)),
            &mut rng,
        );
        assert_eq!(out, vec![BigUint::from(250u32); 4]);
    }

    #[test]
    fn forward_remainder_goes_to_one_extra_slot() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out =
                forward_tokens(&BigUint::from(10u32), 3, Some(&BigUint::from(9u32)), &mut rng);
            let total: BigUint = out.iter().sum();
            assert_eq!(total, BigUint::from(10u32));
            let extras = out.iter().filter(|c| **c == BigUint::from(4u32)).count();
            let bases = out.iter().filter(|c| **c == BigUint::from(3u32)).count();
            assert_eq!((extras, bases), (1, 2));
        }
    }

    #[test]
    fn forward_below_threshold_samples_per_token() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out =
                forward_tokens(&BigUint::from(2u32), 5, Some(&BigUint::from(100u32)), &mut rng);
            let total: BigUint = out.iter().sum();
            assert_eq!(total, BigUint::from(2u32));
            assert!(out.iter().all(|c| *c <= BigUint::from(2u32)));
        }
    }

    #[test]
    fn walk_on_triangle_matches_exact_flow() {
        // K = 300 stays above the averaging threshold everywhere, so the
        // first two rounds are fully deterministic
        let g = triangle();
        let cfg = cfg_with(&g, 300, ratio(1, 9));
        assert_eq!(
            walk_counts(&g, &cfg, 0, 1, 0),
            vec![BigUint::zero(), BigUint::from(150u32), BigUint::from(150u32)]
        );
        assert_eq!(
            walk_counts(&g, &cfg, 0, 2, 0),
            vec![BigUint::from(150u32), BigUint::from(75u32), BigUint::from(75u32)]
        );
    }

    #[test]
    fn walk_with_single_token_lands_on_a_neighbor() {
        let g = generate(&GraphFamily::Petersen, 0).unwrap();
        let cfg = cfg_with(&g, 1, ratio(1, 100));
        let counts = walk_counts(&g, &cfg, 0, 1, 0);
        let total: BigUint = counts.iter().sum();
        assert_eq!(total, BigUint::one());
        let landed = counts.iter().position(|c| c.is_one()).unwrap();
        assert!(g.has_edge(0, landed));
    }

    #[test]
    fn exact_flow_regime_is_seed_independent_and_matches_oracle() {
        let g = generate(&GraphFamily::Complete(4), 0).unwrap();
        let tokens = BigUint::from(3u32).pow(12);
        for length in 1..=4u64 {
            let p = oracle::exact_distribution(&g, 0, length, false);
            let expected: Vec<BigUint> = p
                .entries()
                .iter()
                .map(|e| {
                    let scaled =
                        e * BigRational::new(BigInt::from(tokens.clone()), BigInt::one());
                    assert!(scaled.is_integer(), "flow must stay integral");
                    scaled.to_integer().to_biguint().unwrap()
                })
                .collect();
            for seed in [0u64, 1, 99] {
                let cfg = WalkConfig {
                    tokens: tokens.clone(),
                    seed,
                    ..cfg_with(&g, 1, ratio(1, 16))
                };
                assert_eq!(walk_counts(&g, &cfg, 0, length, 0), expected);
            }
        }
    }

    #[test]
    fn deviation_zero_when_counts_scale_stationary() {
        let g = generate(&GraphFamily::Complete(4), 0).unwrap();
        let state = TokenState {
            counts: vec![BigUint::from(100u32); 4],
        };
        let report = deviation_sum(&state, &g, &BigUint::from(400u32), &ratio(1, 16));
        assert!(report.sum.is_zero());
        assert!(report.passes);
        assert!(report.deviation.is_zero());
    }

    #[test]
    fn deviation_matches_oracle_distance_on_triangle() {
        let g = triangle();
        let tokens = BigUint::from(300u32);
        let state = TokenState {
            counts: vec![BigUint::zero(), BigUint::from(150u32), BigUint::from(150u32)],
        };
        let report = deviation_sum(&state, &g, &tokens, &ratio(1, 9));
        assert_eq!(report.deviation, ratio(2, 3));
        assert!(!report.passes);

        let state = TokenState {
            counts: vec![BigUint::from(150u32), BigUint::from(75u32), BigUint::from(75u32)],
        };
        let report = deviation_sum(&state, &g, &tokens, &ratio(1, 9));
        assert_eq!(report.deviation, ratio(1, 3));
    }

    #[test]
    fn estimate_triangle_is_four_for_any_seed() {
        let g = triangle();
        for seed in [0u64, 7, 123] {
            let cfg = WalkConfig {
                seed,
                ..cfg_with(&g, 300, ratio(1, 9))
            };
            let est = estimate_mixing_time(&g, 0, &cfg).unwrap();
            assert_eq!(est.estimate, 4, "seed {seed}");
            assert_eq!(est.bracket, (2, 4));
            let at = |len: u64| est.probes.iter().find(|p| p.length == len).unwrap();
            assert_eq!(at(1).deviation, ratio(2, 3));
            assert_eq!(at(2).deviation, ratio(1, 3));
            assert!(at(4).passed);
            assert!(!at(3).passed);
        }
    }

    #[test]
    fn estimate_returns_one_when_first_probe_passes() {
        let g = generate(&GraphFamily::Complete(8), 0).unwrap();
        let cfg = cfg_with(&g, 1000, ratio(2, 1));
        let est = estimate_mixing_time(&g, 0, &cfg).unwrap();
        assert_eq!(est.estimate, 1);
        assert_eq!(est.bracket, (1, 1));
        assert_eq!(est.probes.len(), 1);
    }

    #[test]
    fn estimate_cycle5_matches_oracle_at_default_tokens() {
        let g = generate(&GraphFamily::Cycle(5), 0).unwrap();
        let cfg = WalkConfig {
            epsilon: ratio(1, 25),
            ..WalkConfig::for_graph(&g)
        };
        let est = estimate_mixing_time(&g, 0, &cfg).unwrap();
        let exact = oracle::exact_mixing_time(&g, 0, &ratio(1, 25), false, 10_000).unwrap();
        assert_eq!(est.estimate, exact);
    }

    #[test]
    fn estimate_satisfies_probe_log_invariant() {
        let g = generate(&GraphFamily::Petersen, 0).unwrap();
        let cfg = cfg_with(&g, 100_000, ratio(1, 100));
        let est = estimate_mixing_time(&g, 0, &cfg).unwrap();
        let at_estimate = est
            .probes
            .iter()
            .find(|p| p.length == est.estimate)
            .expect("estimate must have been probed");
        assert!(at_estimate.passed);
        if est.estimate > 1 {
            let below = est
                .probes
                .iter()
                .find(|p| p.length == est.estimate - 1)
                .expect("length below the estimate must have been probed");
            assert!(!below.passed);
        }
    }

    #[test]
    fn estimate_errors_past_the_cap() {
        let g = generate(&GraphFamily::Lollipop { clique: 4, path: 4 }, 0).unwrap();
        let cfg = WalkConfig {
            max_length: 2,
            ..cfg_with(&g, 1_000_000, ratio(1, 1_000_000))
        };
        match estimate_mixing_time(&g, 0, &cfg) {
            Err(MixingError::MaxLengthExceeded { cap, probes, .. }) => {
                assert_eq!(cap, 2);
                assert_eq!(probes.len(), 2, "lengths 1 and 2 probed before giving up");
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn probe_substreams_reproduce_final_counts() {
        let g = generate(&GraphFamily::Petersen, 0).unwrap();
        let cfg = cfg_with(&g, 12_345, ratio(1, 100));
        let est = estimate_mixing_time(&g, 0, &cfg).unwrap();
        for probe in &est.probes {
            let counts = walk_counts(&g, &cfg, 0, probe.length, probe.index);
            assert_eq!(counts, probe.final_counts, "probe {}", probe.index);
        }
    }

    #[test]
    fn walk_phase_congestion_stays_single_message() {
        let g = generate(&GraphFamily::Lollipop { clique: 4, path: 4 }, 0).unwrap();
        let cfg = cfg_with(&g, 999_983, ratio(1, 64));
        let est = estimate_mixing_time(&g, 0, &cfg).unwrap();
        assert_eq!(est.ledger.max_messages_per_edge_round(Some(Phase::Walk)), 1);
    }

    #[test]
    fn averaging_bias_stays_below_linear_bound() {
        let g = generate(&GraphFamily::Petersen, 0).unwrap();
        let cfg = WalkConfig::for_graph(&g);
        let length = 5;
        let counts = walk_counts(&g, &cfg, 0, length, 0);
        let p = oracle::exact_distribution(&g, 0, length, false);
        let tokens_int = BigInt::from(cfg.tokens.clone());
        let bias: BigRational = counts
            .iter()
            .zip(p.entries())
            .map(|(c, e)| {
                let d = BigRational::new(BigInt::from(c.clone()), tokens_int.clone()) - e;
                if d < BigRational::zero() {
                    -d
                } else {
                    d
                }
            })
            .sum();
        assert!(bias <= bias_delta(length, g.edge_count(), &cfg.tokens));
    }

    #[test]
    fn paper_tokens_fit_the_payload_budget() {
        for n in 2..=200usize {
            let bits = paper_token_count(n).bits();
            assert!(
                bits <= walk_payload_budget(n),
                "n = {n}: {bits} bits over budget {}",
                walk_payload_budget(n)
            );
        }
    }

    #[test]
    fn lazy_walk_keeps_half_in_averaging_regime() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (stay, out) = forward_tokens_lazy(
            &BigUint::from(101u32),
            4,
            Some(&BigUint::from(8u32)),
            &mut rng,
        );
        assert_eq!(stay, BigUint::from(51u32));
        let moved: BigUint = out.iter().sum();
        assert_eq!(moved, BigUint::from(50u32));
    }

    proptest! {
        #[test]
        fn forwarding_conserves_tokens(
            held in 0u64..100_000,
            degree in 1usize..12,
            threshold in prop::option::of(0u64..2_000),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let held = BigUint::from(held);
            let threshold = threshold.map(BigUint::from);
            let out = forward_tokens(&held, degree, threshold.as_ref(), &mut rng);
            prop_assert_eq!(out.iter().sum::<BigUint>(), held);
        }

        #[test]
        fn lazy_forwarding_conserves_tokens(
            held in 0u64..100_000,
            degree in 1usize..12,
            threshold in prop::option::of(0u64..2_000),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let held = BigUint::from(held);
            let threshold = threshold.map(BigUint::from);
            let (stay, out) = forward_tokens_lazy(&held, degree, threshold.as_ref(), &mut rng);
            prop_assert_eq!(stay + out.iter().sum::<BigUint>(), held);
        }
    }
}
