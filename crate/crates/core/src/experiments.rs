//! Monte Carlo BER curves, theoretical error probabilities and harvested
//! power statistics.
//!
//! Work is split into fixed chunks of blocks. Every chunk draws its symbols
//! and noise from its own ChaCha stream selected by `(point, chunk)`, and
//! chunk results are merged by index, so results depend only on the seed and
//! never on the worker count.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::detection::{
    compute_steady_states, detect_block, mlsd_index, nearest_reference, q_function,
    threshold_decision, OutputRanges, SequenceOutputTable, TableCache, TableRequest,
    DEFAULT_TABLE_BUDGET,
};
use crate::error::{Error, Result};
use crate::modem::{average_symbol_power, db_to_linear, noise_sigma, Constellation, LinkConfig};
use crate::rectifier::CircuitParams;

/// Blocks simulated per random stream.
const CHUNK_BLOCKS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    /// Nearest steady-state level.
    MlSteady,
    /// Midpoint thresholds between adjacent worst-case output ranges.
    MlBounded,
    /// Exhaustive sequence detection over windows of K symbols.
    Mlsd,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::MlSteady => "ml_steady",
            Detector::MlBounded => "ml_bounded",
            Detector::Mlsd => "mlsd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ml_steady" => Some(Detector::MlSteady),
            "ml_bounded" => Some(Detector::MlBounded),
            "mlsd" => Some(Detector::Mlsd),
            _ => None,
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One BER curve to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct BerScenario {
    pub params: CircuitParams,
    pub constellation: Constellation,
    pub detector: Detector,
    pub symbol_period: f64,
    /// Finite memory L.
    pub block_length: usize,
    /// MLSD window K (ignored by the symbol-by-symbol detectors).
    pub window: usize,
    pub eb_n0_db: Vec<f64>,
    pub target_bits: u64,
    pub seed: u64,
    /// Relative tolerance of the steady-state levels.
    pub steady_tolerance: f64,
    pub table_budget: usize,
}

impl BerScenario {
    pub fn new(
        params: CircuitParams,
        constellation: Constellation,
        detector: Detector,
        symbol_period: f64,
    ) -> Self {
        Self {
            params,
            constellation,
            detector,
            symbol_period,
            block_length: 6,
            window: 6,
            eb_n0_db: default_eb_n0_grid(),
            target_bits: 1_000_000,
            seed: 1,
            steady_tolerance: 1e-3,
            table_budget: DEFAULT_TABLE_BUDGET,
        }
    }

    fn link(&self) -> LinkConfig {
        LinkConfig::new(self.symbol_period, self.block_length, self.window)
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.constellation.check_conducting(&self.params)?;
        if self.constellation.order() < 2 {
            return Err(Error::InvalidConfig(
                "BER needs at least two symbols".into(),
            ));
        }
        let mut link = self.link();
        if self.detector != Detector::Mlsd {
            link.sequence_window = 1;
        }
        link.validate()?;
        if self.detector == Detector::Mlsd && !self.block_length.is_multiple_of(self.window) {
            return Err(Error::InvalidConfig(format!(
                "sequence window K = {} must divide block length L = {}",
                self.window, self.block_length
            )));
        }
        if self.target_bits == 0 {
            return Err(Error::InvalidConfig("target_bits must be positive".into()));
        }
        Ok(())
    }
}

/// 0 dB to 14 dB in 1 dB steps.
pub fn default_eb_n0_grid() -> Vec<f64> {
    (0..=14).map(f64::from).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerResult {
    pub eb_n0_db: f64,
    pub detector: Detector,
    pub modulation: String,
    pub symbol_period: f64,
    pub window: usize,
    pub block_length: usize,
    pub bit_errors: u64,
    pub bits_simulated: u64,
    pub ber: f64,
    pub ci95_halfwidth: f64,
    /// Theoretical value at this point, where one is defined.
    pub theory: Option<f64>,
    pub theory_kind: Option<CurveKind>,
}

impl BerResult {
    /// Binomial standard error of `ber`.
    pub fn std_error(&self) -> f64 {
        binomial_std_error(self.ber, self.bits_simulated)
    }
}

pub fn binomial_std_error(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// What a theoretical curve represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// Exact binary error probability on steady-state levels.
    Exact,
    /// Upper bound from the closest worst-case outputs.
    UpperBound,
    /// Nearest-neighbour Gray approximation for M > 2.
    GrayApproximation,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Exact => "exact",
            CurveKind::UpperBound => "upper_bound",
            CurveKind::GrayApproximation => "gray_approx",
        }
    }
}

/// Which kind of levels the references of a theoretical curve are.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    SteadyState,
    RangeBoundary,
}

/// Theoretical bit error probability on an Eb/N0 grid.
///
/// Binary: `Q((x1 - x0) / 2σ)`. With worst-case range boundaries as
/// references this is an upper bound. For M > 2 each symbol contributes
/// `Q(d/2σ)` per neighbour, averaged and divided by the bits per symbol.
pub fn theoretical_curve(
    references: &[f64],
    eb_n0_db: &[f64],
    avg_power: f64,
    bits_per_symbol: usize,
    reference_kind: ReferenceKind,
) -> (Vec<f64>, CurveKind) {
    let m = references.len();
    let kind = match (m, reference_kind) {
        (2, ReferenceKind::SteadyState) => CurveKind::Exact,
        (2, ReferenceKind::RangeBoundary) => CurveKind::UpperBound,
        _ => CurveKind::GrayApproximation,
    };
    let values = eb_n0_db
        .iter()
        .map(|&db| {
            let sigma = noise_sigma(avg_power, db_to_linear(db), bits_per_symbol);
            if m == 2 {
                return q_function((references[1] - references[0]) / (2.0 * sigma));
            }
            let pairs: f64 = references
                .windows(2)
                .map(|w| q_function((w[1] - w[0]) / (2.0 * sigma)))
                .sum();
            (2.0 * pairs / m as f64 / bits_per_symbol as f64).min(1.0)
        })
        .collect();
    (values, kind)
}

/// Theory references and what they represent.
type TheoryReferences = Option<(Vec<f64>, ReferenceKind)>;

/// Noiseless data prepared once per scenario and reused at every Eb/N0.
struct Receiver {
    full: Arc<SequenceOutputTable>,
    decide: Decide,
}

enum Decide {
    Nearest(Vec<f64>),
    Thresholds(Vec<f64>),
    Sequence,
}

impl Receiver {
    fn prepare(s: &BerScenario, cache: &TableCache) -> Result<(Self, TheoryReferences)> {
        let req = TableRequest::new(s.symbol_period, s.block_length).with_budget(s.table_budget);
        let full = cache.get(&s.params, &s.constellation, &req)?;
        let (decide, theory) = match s.detector {
            Detector::MlSteady => {
                let levels =
                    compute_steady_states(&s.params, &s.constellation, s.steady_tolerance)?.levels;
                (
                    Decide::Nearest(levels.clone()),
                    Some((levels, ReferenceKind::SteadyState)),
                )
            }
            Detector::MlBounded => {
                let ranges = OutputRanges::from_table(&full);
                let thresholds = ranges.thresholds()?;
                let reps = ranges
                    .binary_representatives()
                    .map(|r| (r.to_vec(), ReferenceKind::RangeBoundary));
                (Decide::Thresholds(thresholds), reps)
            }
            Detector::Mlsd => (Decide::Sequence, None),
        };
        Ok((Self { full, decide }, theory))
    }
}

fn chunk_rng(seed: u64, point: usize, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | chunk as u64);
    rng
}

/// Simulates `s` at every grid point. Tables come from `cache` and are
/// shared across points.
pub fn ber_curve(s: &BerScenario, cache: &TableCache) -> Result<Vec<BerResult>> {
    s.validate()?;
    if s.eb_n0_db.is_empty() {
        return Ok(Vec::new());
    }
    let (receiver, theory_refs) = Receiver::prepare(s, cache)?;
    let c = &s.constellation;
    let m = c.order();
    let l = s.block_length;
    let bits_per_block = (l * c.bits_per_symbol()) as u64;
    let blocks = s.target_bits.div_ceil(bits_per_block) as usize;
    let chunks = blocks.div_ceil(CHUNK_BLOCKS);
    let p_av = average_symbol_power(c);
    let link = s.link();

    let theory = theory_refs
        .map(|(refs, kind)| theoretical_curve(&refs, &s.eb_n0_db, p_av, c.bits_per_symbol(), kind));

    s.eb_n0_db
        .iter()
        .enumerate()
        .map(|(point, &db)| {
            let sigma = noise_sigma(p_av, db_to_linear(db), c.bits_per_symbol());
            let counts = (0..chunks)
                .into_par_iter()
                .map(|chunk| {
                    let mut rng = chunk_rng(s.seed, point, chunk);
                    let first = chunk * CHUNK_BLOCKS;
                    let last = (first + CHUNK_BLOCKS).min(blocks);
                    let mut symbols = vec![0usize; l];
                    let mut y = vec![0.0; l];
                    let mut errors = 0u64;
                    let mut counted = 0u64;
                    for block in first..last {
                        let block_bit0 = block as u64 * bits_per_block;
                        // bits past the target are zero padding and not counted
                        let live_bits =
                            s.target_bits.saturating_sub(block_bit0).min(bits_per_block);
                        for (i, sym) in symbols.iter_mut().enumerate() {
                            let drawn = rng.random_range(0..m);
                            let sym_bit0 = (i * c.bits_per_symbol()) as u64;
                            *sym = if sym_bit0 < live_bits {
                                let keep = (live_bits - sym_bit0).min(c.bits_per_symbol() as u64);
                                pad_symbol(c, drawn, keep as usize)
                            } else {
                                0
                            };
                        }
                        let x = receiver.full.entry(receiver.full.index_of(&symbols));
                        for (yi, &xi) in y.iter_mut().zip(x) {
                            let n: f64 = StandardNormal.sample(&mut rng);
                            *yi = xi + sigma * n;
                        }
                        let decided: Vec<usize> = match &receiver.decide {
                            Decide::Nearest(refs) => {
                                y.iter().map(|&v| nearest_reference(v, refs)).collect()
                            }
                            Decide::Thresholds(th) => {
                                y.iter().map(|&v| threshold_decision(v, th)).collect()
                            }
                            Decide::Sequence if s.window == l => {
                                receiver.full.symbols_of(mlsd_index(&y, &receiver.full))
                            }
                            Decide::Sequence => {
                                detect_block(&y, &link, &s.params, c, cache)?.symbols
                            }
                        };
                        errors += bit_errors(c, &symbols, &decided, live_bits as usize);
                        counted += live_bits;
                    }
                    Ok((errors, counted))
                })
                .collect::<Result<Vec<(u64, u64)>>>()?;
            let (bit_errors, bits_simulated) = counts
                .iter()
                .fold((0, 0), |(e, n), &(de, dn)| (e + de, n + dn));
            let ber = bit_errors as f64 / bits_simulated as f64;
            Ok(BerResult {
                eb_n0_db: db,
                detector: s.detector,
                modulation: c.name(),
                symbol_period: s.symbol_period,
                window: if s.detector == Detector::Mlsd {
                    s.window
                } else {
                    1
                },
                block_length: l,
                bit_errors,
                bits_simulated,
                ber,
                ci95_halfwidth: 1.96 * binomial_std_error(ber, bits_simulated),
                theory: theory.as_ref().map(|(v, _)| v[point]),
                theory_kind: theory.as_ref().map(|(_, k)| *k),
            })
        })
        .collect()
}

/// Symbol whose label keeps the leading `keep` bits of `drawn`'s label and
/// zeroes the rest.
fn pad_symbol(c: &Constellation, drawn: usize, keep: usize) -> usize {
    let k = c.bits_per_symbol();
    if keep >= k {
        return drawn;
    }
    let label = c.label(drawn) & !((1usize << (k - keep)) - 1);
    c.index_of_label(label)
}

/// Label bit differences over the first `live_bits` bits of a block.
fn bit_errors(c: &Constellation, sent: &[usize], decided: &[usize], live_bits: usize) -> u64 {
    let k = c.bits_per_symbol();
    let mut errors = 0u64;
    for (i, (&a, &b)) in sent.iter().zip(decided).enumerate() {
        let start = i * k;
        if start >= live_bits {
            break;
        }
        let mut diff = c.label(a) ^ c.label(b);
        let keep = (live_bits - start).min(k);
        if keep < k {
            diff >>= k - keep;
        }
        errors += u64::from(diff.count_ones());
    }
    errors
}

/// `V_C² / R_l`.
pub fn instantaneous_load_power(vc: f64, rl: f64) -> f64 {
    vc * vc / rl
}

/// Mean instantaneous load power over the end-of-symbol samples of a block.
pub fn average_sequence_power(block_samples: &[f64], rl: f64) -> f64 {
    if block_samples.is_empty() {
        return 0.0;
    }
    block_samples
        .iter()
        .map(|&v| instantaneous_load_power(v, rl))
        .sum::<f64>()
        / block_samples.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EhResult {
    pub symbol_period: f64,
    pub block_length: usize,
    pub avg_sequence_power: f64,
    /// Standard error of `avg_sequence_power` over the averaged blocks.
    pub std_error: f64,
    pub sequences_averaged: usize,
}

/// Average block power for random equiprobable blocks at each symbol
/// period. The same block sequence is drawn for every period.
pub fn eh_sweep(
    params: &CircuitParams,
    c: &Constellation,
    symbol_periods: &[f64],
    block_length: usize,
    num_blocks: usize,
    seed: u64,
    cache: &TableCache,
) -> Result<Vec<EhResult>> {
    if num_blocks == 0 {
        return Err(Error::InvalidConfig("num_blocks must be at least 1".into()));
    }
    let m = c.order();
    let chunks = num_blocks.div_ceil(CHUNK_BLOCKS);
    symbol_periods
        .iter()
        .map(|&ts| {
            let table = cache.get(params, c, &TableRequest::new(ts, block_length))?;
            let per_block = (0..table.len())
                .map(|i| average_sequence_power(table.entry(i), params.load_resistance))
                .collect::<Vec<_>>();
            let sums = (0..chunks)
                .into_par_iter()
                .map(|chunk| {
                    let mut rng = chunk_rng(seed, 0, chunk);
                    let first = chunk * CHUNK_BLOCKS;
                    let last = (first + CHUNK_BLOCKS).min(num_blocks);
                    let (mut s1, mut s2) = (0.0, 0.0);
                    for _ in first..last {
                        let index =
                            (0..block_length).fold(0, |acc, _| acc * m + rng.random_range(0..m));
                        let p = per_block[index];
                        s1 += p;
                        s2 += p * p;
                    }
                    (s1, s2)
                })
                .collect::<Vec<_>>();
            let (s1, s2) = sums
                .iter()
                .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
            let n = num_blocks as f64;
            let mean = s1 / n;
            let var = if num_blocks > 1 {
                ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            Ok(EhResult {
                symbol_period: ts,
                block_length,
                avg_sequence_power: mean,
                std_error: (var / n).sqrt(),
                sequences_averaged: num_blocks,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn load_power_examples() {
        assert_eq!(instantaneous_load_power(0.0, 1e3), 0.0);
        assert_relative_eq!(
            instantaneous_load_power(0.5, 1e3),
            0.25e-3,
            max_relative = 1e-15
        );
        assert_eq!(
            instantaneous_load_power(-0.3, 1e3),
            instantaneous_load_power(0.3, 1e3)
        );
        assert_relative_eq!(
            average_sequence_power(&[0.4; 6], 1e3),
            0.16e-3,
            max_relative = 1e-14
        );
    }

    #[test]
    fn theory_curve_examples() {
        // gap 2σ at 0 dB gives Q(1)
        let p_av = 5.0 / 16.0;
        let sigma = noise_sigma(p_av, 1.0, 1);
        let (v, kind) = theoretical_curve(
            &[0.0, 2.0 * sigma],
            &[0.0],
            p_av,
            1,
            ReferenceKind::SteadyState,
        );
        assert_eq!(kind, CurveKind::Exact);
        assert_relative_eq!(v[0], 0.158_655_253_931_457, max_relative = 1e-12);

        let grid: Vec<f64> = (0..40).map(f64::from).collect();
        let (exact, _) =
            theoretical_curve(&[0.17, 0.54], &grid, p_av, 1, ReferenceKind::SteadyState);
        let (bound, kind) =
            theoretical_curve(&[0.29, 0.52], &grid, p_av, 1, ReferenceKind::RangeBoundary);
        assert_eq!(kind, CurveKind::UpperBound);
        assert!(exact.iter().zip(&bound).all(|(e, b)| b >= e));
        assert!(exact.windows(2).all(|w| w[1] <= w[0]));
        assert!(*exact.last().unwrap() < 1e-12);
    }

    #[test]
    fn padding_and_bit_error_counting() {
        let q = Constellation::new(vec![0.5, 0.7, 0.9, 1.1]).unwrap();
        // labels: 0->00, 1->01, 2->11, 3->10
        assert_eq!(pad_symbol(&q, 2, 1), 3);
        assert_eq!(pad_symbol(&q, 1, 1), 0);
        assert_eq!(pad_symbol(&q, 2, 2), 2);
        assert_eq!(bit_errors(&q, &[0, 2], &[2, 2], 4), 2);
        assert_eq!(bit_errors(&q, &[0, 0], &[0, 1], 3), 0);
        assert_eq!(bit_errors(&q, &[0, 0], &[0, 2], 3), 1);
    }

    #[test]
    fn detector_names_roundtrip() {
        for d in [Detector::MlSteady, Detector::MlBounded, Detector::Mlsd] {
            assert_eq!(Detector::parse(d.name()), Some(d));
        }
        assert_eq!(Detector::parse("viterbi"), None);
    }
}
