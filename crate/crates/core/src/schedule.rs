//! Alternating connected/disconnected switching signals and the average
//! dwell time condition on the connected intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::TopologySet;

/// One interval of a switching signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub topology: usize,
    pub duration: f64,
}

/// Finite prefix of a switching signal. Even 0-based positions hold
/// connected topologies, odd positions disconnected ones.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SwitchingSignal {
    intervals: Vec<Interval>,
}

fn check_duration(i: usize, d: f64) -> Result<()> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "duration",
            reason: format!("interval {} has duration {d}", i + 1),
        });
    }
    Ok(())
}

impl SwitchingSignal {
    /// Validates indices, durations and the alternation invariant.
    pub fn new(intervals: Vec<Interval>, ts: &TopologySet) -> Result<Self> {
        for (i, iv) in intervals.iter().enumerate() {
            if iv.topology >= ts.len() {
                return Err(Error::InvalidParameter {
                    name: "topology",
                    reason: format!("interval {} references topology {}", i + 1, iv.topology),
                });
            }
            check_duration(i, iv.duration)?;
            let want_connected = i % 2 == 0;
            if ts.is_connected(iv.topology) != want_connected {
                return Err(Error::InvalidParameter {
                    name: "signal",
                    reason: format!(
                        "interval {} (`{}`) should be {}",
                        i + 1,
                        ts.topology(iv.topology).label(),
                        if want_connected { "connected" } else { "disconnected" }
                    ),
                });
            }
        }
        Ok(SwitchingSignal { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.intervals.iter().map(|i| i.duration).sum()
    }

    pub fn connected_durations(&self) -> Vec<f64> {
        self.intervals.iter().step_by(2).map(|i| i.duration).collect()
    }

    pub fn disconnected_durations(&self) -> Vec<f64> {
        self.intervals.iter().skip(1).step_by(2).map(|i| i.duration).collect()
    }

    /// Start times of every interval.
    pub fn start_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.intervals
            .iter()
            .map(|iv| {
                let s = t;
                t += iv.duration;
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdtParams {
    pub tau: f64,
    pub n0: usize,
    #[serde(rename = "T0")]
    pub t0: f64,
}

impl AdtParams {
    pub fn new(tau: f64, n0: usize, t0: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be finite and non-negative, got {tau}"),
            });
        }
        if n0 < 1 {
            return Err(Error::InvalidParameter {
                name: "n0",
                reason: "must be at least 1".into(),
            });
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "T0",
                reason: format!("must be positive and finite, got {t0}"),
            });
        }
        Ok(AdtParams { tau, n0, t0 })
    }
}

/// Inserts zero-length separators so that classes alternate, starting
/// with a connected interval. Separators are the first topology of the
/// needed class.
pub fn normalize_alternation(raw: &[(usize, f64)], ts: &TopologySet) -> Result<SwitchingSignal> {
    let mut out: Vec<Interval> = Vec::with_capacity(raw.len() + 1);
    for (i, &(topology, duration)) in raw.iter().enumerate() {
        if topology >= ts.len() {
            return Err(Error::InvalidParameter {
                name: "topology",
                reason: format!("interval {} references topology {topology}", i + 1),
            });
        }
        check_duration(i, duration)?;
        let connected = ts.is_connected(topology);
        let expect_connected = out.len().is_multiple_of(2);
        if connected != expect_connected {
            let sep = if expect_connected {
                *ts.connected_indices().first().ok_or(Error::MissingClass("connected"))?
            } else {
                *ts.disconnected_indices()
                    .first()
                    .ok_or(Error::MissingClass("disconnected"))?
            };
            out.push(Interval {
                topology: sep,
                duration: 0.0,
            });
        }
        out.push(Interval { topology, duration });
    }
    SwitchingSignal::new(out, ts)
}

/// Every disconnected duration is at most `t0` (inclusive).
pub fn check_disconnected_bound(sig: &SwitchingSignal, t0: f64) -> bool {
    sig.disconnected_durations().iter().all(|&d| d <= t0)
}

fn adt_slack(durations: &[f64], tau: f64) -> f64 {
    let total: f64 = durations.iter().sum();
    1e-12 * (1.0 + total + tau * durations.len() as f64)
}

/// Average dwell time over every window of consecutive connected
/// intervals: `Σ ΔT ≥ τ (n − n0)` where the window holds `n + 1` intervals.
///
/// Runs in O(m) with a running maximum of `P[i] − τ i` over prefix sums.
pub fn check_adt(sig: &SwitchingSignal, tau: f64, n0: usize) -> bool {
    check_adt_durations(&sig.connected_durations(), tau, n0)
}

pub fn check_adt_durations(durations: &[f64], tau: f64, n0: usize) -> bool {
    let slack = adt_slack(durations, tau);
    let mut prefix = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (j, &d) in durations.iter().enumerate() {
        // Window start i = j contributes P[j] − τ j.
        best = best.max(prefix - tau * j as f64);
        prefix += d;
        // Need P[j+1] − τ j ≥ max_i (P[i] − τ i) − τ n0.
        if prefix - tau * j as f64 + tau * n0 as f64 + slack < best {
            return false;
        }
    }
    true
}

/// Quadratic reference enumeration of every window.
pub fn check_adt_exhaustive(durations: &[f64], tau: f64, n0: usize) -> bool {
    let slack = adt_slack(durations, tau);
    for i0 in 0..durations.len() {
        let mut sum = 0.0;
        for (n, &d) in durations[i0..].iter().enumerate() {
            sum += d;
            if sum + slack < tau * (n as f64 - n0 as f64) {
                return false;
            }
        }
    }
    true
}

/// Largest `τ` the signal satisfies: min over windows with `n > n0` of
/// `Σ ΔT / (n − n0)`; `+∞` when no window is long enough.
pub fn tightest_adt(sig: &SwitchingSignal, n0: usize) -> f64 {
    tightest_adt_durations(&sig.connected_durations(), n0)
}

pub fn tightest_adt_durations(durations: &[f64], n0: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i0 in 0..durations.len() {
        let mut sum = 0.0;
        for (n, &d) in durations[i0..].iter().enumerate() {
            sum += d;
            if n > n0 {
                best = best.min(sum / (n - n0) as f64);
            }
        }
    }
    best
}

const MAX_GENERATED_INTERVALS: usize = 2_000_000;

/// Random prefix-admissible signal covering at least `horizon`.
///
/// Connected durations are uniform in `[τ, 2τ]`, disconnected ones in
/// `[0, T0]`; topologies are uniform within each class. Up to `n0 − 1`
/// extra pairs with a zero-length connected interval are inserted at
/// random positions.
pub fn generate_signal(ts: &TopologySet, params: &AdtParams, horizon: f64, seed: u64) -> Result<SwitchingSignal> {
    let params = AdtParams::new(params.tau, params.n0, params.t0)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!("must be finite and non-negative, got {horizon}"),
        });
    }
    let conn = ts.connected_indices();
    let disc = ts.disconnected_indices();
    if conn.is_empty() {
        return Err(Error::MissingClass("connected"));
    }
    if disc.is_empty() {
        return Err(Error::MissingClass("disconnected"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(Interval, Interval)> = Vec::new();
    let mut total = 0.0;
    while total < horizon {
        if 2 * pairs.len() >= MAX_GENERATED_INTERVALS {
            return Err(Error::InfeasibleSignal(format!(
                "more than {MAX_GENERATED_INTERVALS} intervals needed to cover horizon {horizon}"
            )));
        }
        let c = Interval {
            topology: conn[rng.random_range(0..conn.len())],
            duration: params.tau + params.tau * rng.random::<f64>(),
        };
        let d = Interval {
            topology: disc[rng.random_range(0..disc.len())],
            duration: params.t0 * rng.random::<f64>(),
        };
        total += c.duration + d.duration;
        pairs.push((c, d));
    }
    let extra = rng.random_range(0..params.n0);
    for _ in 0..extra {
        let at = rng.random_range(0..=pairs.len());
        let c = Interval {
            topology: conn[rng.random_range(0..conn.len())],
            duration: 0.0,
        };
        let d = Interval {
            topology: disc[rng.random_range(0..disc.len())],
            duration: params.t0 * rng.random::<f64>(),
        };
        pairs.insert(at, (c, d));
    }
    let intervals: Vec<Interval> = pairs.into_iter().flat_map(|(c, d)| [c, d]).collect();
    let sig = SwitchingSignal::new(intervals, ts)?;
    if !check_adt(&sig, params.tau, params.n0) || !check_disconnected_bound(&sig, params.t0) {
        return Err(Error::InfeasibleSignal("generated signal failed validation".into()));
    }
    Ok(sig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use proptest::prelude::*;

    fn set() -> TopologySet {
        let c1 = Topology::from_edges("c1", 3, &[(1, 0, 1.0), (2, 1, 1.0)]).unwrap();
        let c2 = Topology::from_edges("c2", 3, &[(1, 0, 1.0), (2, 0, 1.0)]).unwrap();
        let nc1 = Topology::empty("nc1", 3);
        let nc2 = Topology::from_edges("nc2", 3, &[(1, 0, 1.0)]).unwrap();
        TopologySet::new(vec![c1, c2, nc1, nc2], None).unwrap()
    }

    fn pairs(sig: &SwitchingSignal) -> Vec<(usize, f64)> {
        sig.intervals().iter().map(|i| (i.topology, i.duration)).collect()
    }

    #[test]
    fn normalize_examples() {
        let ts = set();
        let s = normalize_alternation(&[(0, 1.0), (2, 1.0)], &ts).unwrap();
        assert_eq!(pairs(&s), vec![(0, 1.0), (2, 1.0)]);
        let s = normalize_alternation(&[(0, 1.0), (1, 1.0)], &ts).unwrap();
        assert_eq!(pairs(&s), vec![(0, 1.0), (2, 0.0), (1, 1.0)]);
        let s = normalize_alternation(&[(2, 2.0)], &ts).unwrap();
        assert_eq!(pairs(&s), vec![(0, 0.0), (2, 2.0)]);
        let s = normalize_alternation(&[(2, 1.0), (3, 1.0)], &ts).unwrap();
        assert_eq!(pairs(&s), vec![(0, 0.0), (2, 1.0), (0, 0.0), (3, 1.0)]);
    }

    #[test]
    fn normalize_without_separator_class() {
        let only = TopologySet::new(vec![Topology::empty("e", 2)], None).unwrap();
        assert!(matches!(
            normalize_alternation(&[(0, 1.0)], &only),
            Err(Error::MissingClass("connected"))
        ));
        assert!(normalize_alternation(&[(9, 1.0)], &set()).is_err());
        assert!(normalize_alternation(&[(0, -1.0)], &set()).is_err());
    }

    #[test]
    fn disconnected_bound_examples() {
        let ts = set();
        let s = normalize_alternation(&[(0, 1.0), (2, 0.0), (1, 1.0), (3, 0.0)], &ts).unwrap();
        assert!(check_disconnected_bound(&s, 0.1));
        let s = normalize_alternation(&[(0, 1.0), (2, 0.5), (1, 1.0), (3, 1.0)], &ts).unwrap();
        assert!(check_disconnected_bound(&s, 1.0));
        let s = normalize_alternation(&[(0, 1.0), (2, 0.5), (1, 1.0), (3, 1.2)], &ts).unwrap();
        assert!(!check_disconnected_bound(&s, 1.0));
    }

    #[test]
    fn adt_examples() {
        assert!(check_adt_durations(&[2.0, 2.0, 2.0], 1.5, 1));
        assert!(!check_adt_durations(&[0.0, 0.0, 0.0], 1.0, 1));
        assert!(check_adt_durations(&[0.0, 0.0, 0.0, 0.0], 0.0, 1));
        assert!(check_adt_exhaustive(&[2.0, 2.0, 2.0], 1.5, 1));
        assert!(!check_adt_exhaustive(&[0.0, 0.0, 0.0], 1.0, 1));
    }

    #[test]
    fn tightest_examples() {
        assert_eq!(tightest_adt_durations(&[2.0, 2.0, 2.0], 1), 6.0);
        assert_eq!(tightest_adt_durations(&[1.0, 1.0, 1.0, 1.0], 1), 2.0);
        assert_eq!(tightest_adt_durations(&[3.0], 1), f64::INFINITY);
    }

    #[test]
    fn generator_examples() {
        let ts = set();
        let p = AdtParams::new(1.0, 1, 0.5).unwrap();
        let a = generate_signal(&ts, &p, 10.0, 7).unwrap();
        assert!(a.total_duration() >= 10.0);
        assert!(check_adt(&a, 1.0, 1) && check_disconnected_bound(&a, 0.5));
        assert_eq!(a, generate_signal(&ts, &p, 10.0, 7).unwrap());
        let p3 = AdtParams::new(1.0, 3, 0.5).unwrap();
        let with_zero = (0..50u64).any(|seed| {
            let s = generate_signal(&ts, &p3, 10.0, seed).unwrap();
            assert!(check_adt(&s, 1.0, 3) && check_disconnected_bound(&s, 0.5));
            s.connected_durations().contains(&0.0)
        });
        assert!(with_zero);
    }

    #[test]
    fn generator_validity_over_seeds() {
        let ts = set();
        for seed in 0..1000u64 {
            let tau = 0.1 + (seed % 7) as f64 * 0.3;
            let n0 = 1 + (seed % 4) as usize;
            let p = AdtParams::new(tau, n0, 0.25 + (seed % 3) as f64).unwrap();
            let s = generate_signal(&ts, &p, 15.0, seed).unwrap();
            assert!(check_adt(&s, p.tau, p.n0), "seed {seed}");
            assert!(check_disconnected_bound(&s, p.t0), "seed {seed}");
            assert!(s.total_duration() >= 15.0);
        }
    }

    #[test]
    fn params_validation() {
        assert!(AdtParams::new(-1.0, 1, 1.0).is_err());
        assert!(AdtParams::new(1.0, 0, 1.0).is_err());
        assert!(AdtParams::new(1.0, 1, 0.0).is_err());
    }

    fn durations() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..5.0f64], 1..25)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn incremental_matches_exhaustive(d in durations(), tau in 0.0..4.0f64, n0 in 1usize..4) {
            prop_assert_eq!(check_adt_durations(&d, tau, n0), check_adt_exhaustive(&d, tau, n0));
        }

        #[test]
        fn adt_is_monotone_in_tau(d in durations(), a in 0.0..4.0f64, b in 0.0..4.0f64, n0 in 1usize..4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if check_adt_durations(&d, hi, n0) {
                prop_assert!(check_adt_durations(&d, lo, n0));
            }
            if !check_adt_durations(&d, lo, n0) {
                prop_assert!(!check_adt_durations(&d, hi, n0));
            }
        }

        #[test]
        fn tightest_is_the_boundary(d in durations(), n0 in 1usize..4) {
            let t = tightest_adt_durations(&d, n0);
            if t.is_finite() {
                prop_assert!(check_adt_durations(&d, t, n0));
                prop_assert!(!check_adt_durations(&d, t + 1e-6 * (1.0 + t), n0));
            } else {
                prop_assert!(check_adt_durations(&d, 1e6, n0));
            }
        }

        #[test]
        fn normalize_is_idempotent(raw in prop::collection::vec((0usize..4, 0.0..3.0f64), 0..20)) {
            let ts = set();
            let once = normalize_alternation(&raw, &ts).unwrap();
            let twice = normalize_alternation(&pairs(&once), &ts).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
