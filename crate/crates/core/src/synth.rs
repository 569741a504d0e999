//! Synthetic periodic temporal graphs with a known ground truth, plus the
//! period-recovery check used to validate attention delays against it.
//!
//! Generator mechanics: nodes are split into contiguous, near-equal blocks;
//! each block is assigned one planted period round-robin from the period
//! list. Every intra-block pair draws a uniform phase and emits
//! `floor(base_rate)` events per cycle (plus one more with probability
//! `frac(base_rate)`) at `phase + m * period`, optionally jittered by
//! Gaussian noise and clamped to the time span. Cross-block noise is a
//! global budget of `round(0.05 * intra_count)` events on uniformly random
//! cross-block pairs at uniform times. Every pair and the noise pass use
//! their own seeded rng stream, so output is deterministic and
//! order-independent.
//!
//! Period recovery converts an attention delay (index units) to time with
//! the sequence's median inter-event gap and accepts it when the product
//! lands within a tolerance of any planted period's multiple.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::acom::{select_delays, DelaySelection};
use crate::error::{Error, Result};
use crate::graph::{Event, InteractionSequence, TemporalGraph};
use crate::tensor::Tensor;

/// Cross-block noise budget as a fraction of the generated intra-block
/// event count.
pub const NOISE_FRACTION: f64 = 0.05;

/// Default relative tolerance for matching a delay against a period.
pub const DEFAULT_PERIOD_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub nodes: usize,
    pub blocks: usize,
    pub periods: Vec<f64>,
    /// Total time span; all timestamps land in `[0, duration]`.
    pub duration: f64,
    /// Expected interactions per intra-block pair per period cycle.
    pub base_rate: f64,
    /// Standard deviation of Gaussian timestamp noise.
    pub phase_jitter: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::Config(reason));
        if self.nodes == 0 {
            return fail("synthetic graph needs at least one node".into());
        }
        if self.blocks == 0 || self.blocks > self.nodes {
            return fail(format!(
                "block count must be in 1..={}, got {}",
                self.nodes, self.blocks
            ));
        }
        if self.periods.is_empty() {
            return fail("at least one period is required".into());
        }
        if !(self.duration > 0.0) {
            return fail(format!("duration must be positive, got {}", self.duration));
        }
        for p in &self.periods {
            if !(*p > 0.0) || *p >= self.duration {
                return fail(format!(
                    "every period must satisfy 0 < period < duration, got {p} against {}",
                    self.duration
                ));
            }
        }
        if self.base_rate < 0.0 || !self.base_rate.is_finite() {
            return fail(format!("base_rate must be non-negative, got {}", self.base_rate));
        }
        if self.phase_jitter < 0.0 || !self.phase_jitter.is_finite() {
            return fail(format!(
                "phase_jitter must be non-negative, got {}",
                self.phase_jitter
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Block id per node.
    pub blocks: Vec<usize>,
    /// Planted periods; block `b` uses `periods[b % periods.len()]`.
    pub periods: Vec<f64>,
    pub seed: u64,
}

impl GroundTruth {
    pub fn period_of(&self, node: usize) -> f64 {
        self.periods[self.blocks[node] % self.periods.len()]
    }
}

pub fn generate(spec: &SynthSpec) -> Result<(TemporalGraph, GroundTruth)> {
    spec.validate()?;
    let n = spec.nodes;
    let block_of: Vec<usize> = (0..n).map(|i| i * spec.blocks / n).collect();
    let whole = spec.base_rate.floor();
    let frac = spec.base_rate - whole;
    let whole = whole as usize;

    let mut events: Vec<Event> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if block_of[a] != block_of[b] {
                continue;
            }
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream((a * n + b) as u64);
            let period = spec.periods[block_of[a] % spec.periods.len()];
            let phase = rng.random_range(0.0..period);
            let mut m = 0usize;
            loop {
                let base = phase + m as f64 * period;
                if base > spec.duration {
                    break;
                }
                let count = whole + usize::from(frac > 0.0 && rng.random_bool(frac));
                for _ in 0..count {
                    let mut t = base;
                    if spec.phase_jitter > 0.0 {
                        let noise: f64 = rng.sample(StandardNormal);
                        t = (t + spec.phase_jitter * noise).clamp(0.0, spec.duration);
                    }
                    let (src, dst) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                    events.push(Event {
                        src,
                        dst,
                        timestamp: t,
                        features: vec![],
                    });
                }
                m += 1;
            }
        }
    }

    if spec.blocks > 1 {
        let noise_count = (NOISE_FRACTION * events.len() as f64).round() as usize;
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        rng.set_stream(u64::MAX);
        for _ in 0..noise_count {
            let (src, dst) = loop {
                let src = rng.random_range(0..n);
                let dst = rng.random_range(0..n);
                if block_of[src] != block_of[dst] {
                    break (src, dst);
                }
            };
            events.push(Event {
                src,
                dst,
                timestamp: rng.random_range(0.0..spec.duration),
                features: vec![],
            });
        }
    }

    let graph = TemporalGraph::from_events(events, n)?;
    let truth = GroundTruth {
        blocks: block_of,
        periods: spec.periods.clone(),
        seed: spec.seed,
    };
    Ok((graph, truth))
}

/// A random pattern of length `period` tiled over `len` steps, with optional
/// additive Gaussian noise. The workhorse for delay-recovery trials.
pub fn periodic_signal(
    period: usize,
    len: usize,
    channels: usize,
    noise_std: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Tensor> {
    if period == 0 || len == 0 || channels == 0 {
        return Err(Error::InvalidArgument {
            op: "periodic_signal",
            reason: "period, len and channels must be positive".into(),
        });
    }
    let pattern: Vec<f64> = (0..period * channels)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut data = Vec::with_capacity(len * channels);
    for i in 0..len {
        for ch in 0..channels {
            let mut v = pattern[(i % period) * channels + ch];
            if noise_std > 0.0 {
                v += noise_std * rng.sample::<f64, _>(StandardNormal);
            }
            data.push(v);
        }
    }
    Tensor::new(len, channels, data)
}

/// Highest-scoring delay other than zero (lag zero is always maximal for a
/// self-correlation, so it carries no period information).
pub fn top_nonzero_delay(scores: &[f64]) -> Option<usize> {
    select_delays(scores, scores.len())
        .into_iter()
        .find(|d| *d != 0)
}

/// One sequence's evidence for the recovery check: its dominant attention
/// delay and the time value of one index step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayObservation {
    pub top_delay: usize,
    pub median_gap: f64,
}

/// Nonzero delay with the largest aggregation weight across every head and
/// layer of a profile.
pub fn dominant_nonzero_delay(selections: &[DelaySelection]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for sel in selections {
        for (d, w) in sel.delays.iter().zip(&sel.weights) {
            if *d == 0 {
                continue;
            }
            if best.map_or(true, |(bw, _)| *w > bw) {
                best = Some((*w, *d));
            }
        }
    }
    best.map(|(_, d)| d)
}

/// Pairs the dominant selected delay with the median gap between the
/// sequence's real historical events (padding and the anchor self-loop
/// excluded). Needs at least three real events and one nonzero delay.
///
/// The profile comes from scoring a sequence against itself, where the
/// circular correlation is exactly symmetric (`score[d] == score[L - d]`);
/// which twin wins the weight comparison is floating-point chance, so the
/// dominant delay is folded onto the smaller of the pair.
pub fn observation_from_profile(
    seq: &InteractionSequence,
    selections: &[DelaySelection],
) -> Option<DelayObservation> {
    let anchor = seq.self_loop_row();
    let times: Vec<f64> = (0..seq.len)
        .filter(|i| !seq.pad[*i] && *i != anchor)
        .map(|i| seq.timestamps[i])
        .collect();
    if times.len() < 3 {
        return None;
    }
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let median_gap = if gaps.len() % 2 == 1 {
        gaps[mid]
    } else {
        0.5 * (gaps[mid - 1] + gaps[mid])
    };
    let top_delay = dominant_nonzero_delay(selections)?;
    let top_delay = top_delay.min(seq.len - top_delay);
    Some(DelayObservation { top_delay, median_gap })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub evaluated: usize,
    pub aligned: usize,
    pub fraction: f64,
}

/// Fraction of observations whose delay, converted to time units, lands
/// within `tolerance * p` of a positive multiple of some planted period `p`.
pub fn planted_period_check(
    observations: &[DelayObservation],
    periods: &[f64],
    tolerance: f64,
) -> RecoveryReport {
    let aligned = observations
        .iter()
        .filter(|o| {
            let target = o.top_delay as f64 * o.median_gap;
            periods.iter().any(|p| {
                let m = (target / p).round();
                m >= 1.0 && (target - m * p).abs() <= tolerance * p
            })
        })
        .count();
    let evaluated = observations.len();
    RecoveryReport {
        evaluated,
        aligned,
        fraction: if evaluated == 0 {
            0.0
        } else {
            aligned as f64 / evaluated as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn lattice_spec() -> SynthSpec {
        SynthSpec {
            nodes: 2,
            blocks: 1,
            periods: vec![5.0],
            duration: 50.0,
            base_rate: 1.0,
            phase_jitter: 0.0,
            seed: 21,
        }
    }

    #[test]
    fn noiseless_lattice_is_exact() {
        let (graph, truth) = generate(&lattice_spec()).unwrap();
        assert_eq!(graph.len(), 10);
        assert_eq!(truth.blocks, vec![0, 0]);
        let times: Vec<f64> = graph.events().iter().map(|e| e.timestamp).collect();
        for w in times.windows(2) {
            assert!((w[1] - w[0] - 5.0).abs() < 1e-12, "gap {}", w[1] - w[0]);
        }
        assert!(times[0] >= 0.0 && times[0] < 5.0);
        assert!(*times.last().unwrap() <= 50.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            nodes: 24,
            blocks: 6,
            periods: vec![7.0, 30.0],
            duration: 90.0,
            base_rate: 1.3,
            phase_jitter: 0.4,
            seed: 5,
        };
        let (g1, t1) = generate(&spec).unwrap();
        let (g2, t2) = generate(&spec).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(g1.len(), g2.len());
        for (a, b) in g1.events().iter().zip(g2.events()) {
            assert_eq!((a.src, a.dst), (b.src, b.dst));
            assert_eq!(a.timestamp.to_bits(), b.timestamp.to_bits());
        }
        let (g3, _) = generate(&SynthSpec { seed: 6, ..spec }).unwrap();
        let differs = g1.len() != g3.len()
            || g1
                .events()
                .iter()
                .zip(g3.events())
                .any(|(a, b)| a.timestamp != b.timestamp);
        assert!(differs);
    }

    #[test]
    fn timestamps_stay_in_range_and_blocks_are_balanced() {
        let spec = SynthSpec {
            nodes: 25,
            blocks: 4,
            periods: vec![3.0],
            duration: 40.0,
            base_rate: 1.0,
            phase_jitter: 5.0,
            seed: 9,
        };
        let (graph, truth) = generate(&spec).unwrap();
        for e in graph.events() {
            assert!(e.timestamp >= 0.0 && e.timestamp <= 40.0);
        }
        let mut sizes = vec![0usize; 4];
        for b in &truth.blocks {
            sizes[*b] += 1;
        }
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(max - min <= 1, "sizes {sizes:?}");
    }

    #[test]
    fn event_count_concentrates_around_expectation() {
        let spec = SynthSpec {
            nodes: 20,
            blocks: 4,
            periods: vec![4.0],
            duration: 100.0,
            base_rate: 1.0,
            phase_jitter: 0.0,
            seed: 13,
        };
        let (graph, _) = generate(&spec).unwrap();
        // 4 blocks of 5 nodes: 40 intra pairs, about 25 cycles each, plus
        // the 5% cross-block noise budget.
        let expected: f64 = 40.0 * 25.0 * 1.05;
        let sigma = expected.sqrt();
        let got = graph.len() as f64;
        assert!(
            (got - expected).abs() < 3.0 * sigma + 40.0,
            "count {got} vs expected {expected}"
        );
    }

    #[test]
    fn per_pair_gaps_cluster_at_the_planted_periods() {
        let spec = SynthSpec {
            nodes: 30,
            blocks: 6,
            periods: vec![7.0, 30.0],
            duration: 90.0,
            base_rate: 1.0,
            phase_jitter: 0.2,
            seed: 17,
        };
        let (graph, truth) = generate(&spec).unwrap();
        let mut per_pair: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        for e in graph.events() {
            let key = (e.src.min(e.dst), e.src.max(e.dst));
            if truth.blocks[e.src] == truth.blocks[e.dst] {
                per_pair.entry(key).or_default().push(e.timestamp);
            }
        }
        let mut checked = 0;
        for ((a, _b), times) in per_pair {
            if times.len() < 3 {
                continue;
            }
            let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            gaps.sort_by(f64::total_cmp);
            let median = gaps[gaps.len() / 2];
            let planted = truth.period_of(a);
            assert!(
                (median - planted).abs() <= 0.1 * planted,
                "pair in block {} has median gap {median}, planted {planted}",
                truth.blocks[a]
            );
            checked += 1;
        }
        // Both periods must actually be exercised.
        assert!(checked > 30, "only {checked} pairs had enough events");
    }

    #[test]
    fn cross_block_noise_budget_is_applied() {
        let spec = SynthSpec {
            nodes: 20,
            blocks: 2,
            periods: vec![5.0],
            duration: 100.0,
            base_rate: 1.0,
            phase_jitter: 0.0,
            seed: 19,
        };
        let (graph, truth) = generate(&spec).unwrap();
        let cross = graph
            .events()
            .iter()
            .filter(|e| truth.blocks[e.src] != truth.blocks[e.dst])
            .count();
        let intra = graph.len() - cross;
        assert_eq!(cross, (NOISE_FRACTION * intra as f64).round() as usize);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let ok = lattice_spec();
        assert!(generate(&SynthSpec { nodes: 0, ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { blocks: 3, ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { periods: vec![], ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { periods: vec![60.0], ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { base_rate: -1.0, ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { phase_jitter: -0.1, ..ok }).is_err());
    }

    #[test]
    fn exact_lattice_signal_recovers_its_period() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let x = periodic_signal(4, 16, 1, 0.0, &mut rng).unwrap();
            let scores = x.correlation_scores(&x).unwrap();
            let top = top_nonzero_delay(scores.data()).unwrap();
            assert_eq!(top % 4, 0, "top delay {top}");
        }
    }

    #[test]
    fn alignment_tolerance_arithmetic() {
        let obs = |d: usize, gap: f64| DelayObservation { top_delay: d, median_gap: gap };
        let periods = [4.0];
        // Exact multiple, near-multiple inside 20%, outside 20%, and the
        // excluded zero-product case.
        let report = planted_period_check(
            &[obs(4, 1.0), obs(8, 1.0), obs(4, 1.175), obs(5, 1.0), obs(3, 0.0)],
            &periods,
            DEFAULT_PERIOD_TOLERANCE,
        );
        assert_eq!(report.evaluated, 5);
        assert_eq!(report.aligned, 3);
        assert!((report.fraction - 0.6).abs() < 1e-12);
        // Second period can rescue an observation.
        let report = planted_period_check(&[obs(6, 1.0)], &[4.0, 6.0], 0.2);
        assert_eq!(report.aligned, 1);
    }

    #[test]
    fn dominant_delay_ignores_lag_zero() {
        let sel = |delays: Vec<usize>, weights: Vec<f64>| DelaySelection {
            head: 0,
            delays,
            weights,
        };
        let profile = [
            sel(vec![0, 4, 2], vec![0.9, 0.06, 0.04]),
            sel(vec![0, 6], vec![0.5, 0.5]),
        ];
        assert_eq!(dominant_nonzero_delay(&profile), Some(6));
        assert_eq!(dominant_nonzero_delay(&[sel(vec![0], vec![1.0])]), None);
    }

    #[test]
    fn observation_folds_symmetric_twin_delays() {
        let len = 8;
        let seq = InteractionSequence {
            node: 0,
            time: 10.0,
            len,
            neighbors: vec![1; len],
            timestamps: vec![1.0, 2.5, 4.0, 5.0, 6.5, 8.0, 9.0, 10.0],
            features: Vec::new(),
            pad: vec![false; len],
        };
        let profile = [DelaySelection {
            head: 0,
            delays: vec![6, 2],
            weights: vec![0.7, 0.3],
        }];
        let obs = observation_from_profile(&seq, &profile).unwrap();
        // Delay 6 out of 8 is the mirror of delay 2; the smaller twin wins.
        assert_eq!(obs.top_delay, 2);
        assert!((obs.median_gap - 1.5).abs() < 1e-12);
    }

    /// For white noise the self-correlation is symmetric in the lag, so the
    /// top nonzero delay effectively ranges over 1..=L/2; with planted
    /// period 4 and unit gaps, 4 of those 16 delays align. Over 1,000
    /// trials the aligned fraction must sit inside the 3-sigma binomial
    /// band around 0.25 (about +/- 0.041).
    #[test]
    fn pure_noise_recovery_matches_the_null_rate() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let mut observations = Vec::new();
        for _ in 0..1000 {
            let data: Vec<f64> = (0..32).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x = Tensor::new(32, 1, data).unwrap();
            let scores = x.correlation_scores(&x).unwrap();
            let top = top_nonzero_delay(scores.data()).unwrap();
            observations.push(DelayObservation { top_delay: top, median_gap: 1.0 });
        }
        let report = planted_period_check(&observations, &[4.0], DEFAULT_PERIOD_TOLERANCE);
        assert!(
            report.fraction > 0.25 - 0.05 && report.fraction < 0.25 + 0.05,
            "null fraction {}",
            report.fraction
        );
    }
}
