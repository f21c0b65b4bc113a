//! Symbol decisions on sampled rectifier outputs.
//!
//! Three receivers are provided: nearest-reference ML on steady-state levels,
//! threshold ML on the worst-case output ranges for short symbol periods, and
//! exhaustive maximum-likelihood sequence detection over cached candidate
//! tables.

mod table;

pub use table::{
    build_sequence_table, build_sequence_table_with, candidate_count, SequenceOutputTable,
    TableCache, TableRequest, DEFAULT_TABLE_BUDGET,
};

use libm::erfc;

use crate::error::{Error, Result};
use crate::modem::{symbols_to_bits, Constellation, LinkConfig};
use crate::rectifier::{steady_state_output, CircuitParams};

/// Steady-state output level of every constellation amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateSet {
    pub levels: Vec<f64>,
}

pub fn compute_steady_states(
    params: &CircuitParams,
    c: &Constellation,
    tol: f64,
) -> Result<SteadyStateSet> {
    let levels = c
        .amplitudes()
        .iter()
        .map(|&a| steady_state_output(params, a, tol).map(|s| s.level))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteadyStateSet { levels })
}

/// Extreme end-of-symbol outputs of each symbol over all admissible
/// histories inside a block.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputRanges {
    /// `(r_min, r_max)` per symbol index.
    pub ranges: Vec<(f64, f64)>,
    /// First pair of adjacent symbols whose ranges intersect.
    pub overlap: Option<(usize, usize)>,
}

impl OutputRanges {
    /// Builds the ranges from a table of all sequences sent from an empty
    /// capacitor.
    pub fn from_table(table: &SequenceOutputTable) -> Self {
        let m = table.order();
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); m];
        for index in 0..table.len() {
            let symbols = table.symbols_of(index);
            for (&s, &x) in symbols.iter().zip(table.entry(index)) {
                let r = &mut ranges[s];
                r.0 = r.0.min(x);
                r.1 = r.1.max(x);
            }
        }
        let overlap = (0..m.saturating_sub(1))
            .find(|&k| ranges[k].1 >= ranges[k + 1].0)
            .map(|k| (k, k + 1));
        Self { ranges, overlap }
    }

    pub fn is_disjoint(&self) -> bool {
        self.overlap.is_none()
    }

    /// Midpoints `(r_k^max + r_{k+1}^min) / 2` between adjacent symbols.
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        if let Some((lower, upper)) = self.overlap {
            return Err(Error::Overlap { lower, upper });
        }
        Ok(self
            .ranges
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].0))
            .collect())
    }

    /// Closest pair of outputs `(r_0^max, r_1^min)` for a binary alphabet.
    pub fn binary_representatives(&self) -> Option<[f64; 2]> {
        match self.ranges.as_slice() {
            [r0, r1] => Some([r0.1, r1.0]),
            _ => None,
        }
    }

    /// Narrowest gap between adjacent ranges (negative when they overlap).
    pub fn min_gap(&self) -> f64 {
        self.ranges
            .windows(2)
            .map(|w| w[1].0 - w[0].1)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Enumerates all `M^L` blocks from an empty capacitor and records each
/// symbol's extreme outputs.
pub fn compute_output_ranges(
    params: &CircuitParams,
    c: &Constellation,
    symbol_period: f64,
    block_length: usize,
) -> Result<OutputRanges> {
    let table = build_sequence_table(params, c, symbol_period, block_length, 0.0)?;
    Ok(OutputRanges::from_table(&table))
}

/// Decided symbol indices of a detector run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DetectionResult {
    pub symbols: Vec<usize>,
}

impl DetectionResult {
    pub fn bits(&self, c: &Constellation) -> Vec<u8> {
        symbols_to_bits(&self.symbols, c)
    }
}

/// Nearest reference for a single sample; ties go to the lower index.
#[inline]
pub fn nearest_reference(y: f64, references: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = (y - references[0]).abs();
    for (j, &x) in references.iter().enumerate().skip(1) {
        let d = (y - x).abs();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Symbol-by-symbol ML: `argmin_j |y_i - x_j|` per sample.
pub fn ml_detect(y: &[f64], references: &[f64]) -> DetectionResult {
    DetectionResult {
        symbols: y
            .iter()
            .map(|&v| nearest_reference(v, references))
            .collect(),
    }
}

/// Number of thresholds strictly below `y`; `thresholds` must be ascending.
#[inline]
pub fn threshold_decision(y: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().take_while(|&&t| y > t).count()
}

/// Decision regions bounded by `thresholds` (bounded-range ML).
pub fn threshold_detect(y: &[f64], thresholds: &[f64]) -> DetectionResult {
    DetectionResult {
        symbols: y
            .iter()
            .map(|&v| threshold_decision(v, thresholds))
            .collect(),
    }
}

/// Standard normal tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Q((a1 - a0) / 2σ)`, the binary error probability with midpoint threshold.
pub fn theoretical_pe_bask(a0: f64, a1: f64, sigma: f64) -> f64 {
    q_function((a1 - a0) / (2.0 * sigma))
}

/// Index of the candidate nearest to `y` in squared Euclidean distance;
/// ties go to the lexicographically smallest sequence.
pub fn mlsd_index(y: &[f64], table: &SequenceOutputTable) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, x) in table.entries().enumerate() {
        let mut d = 0.0;
        for (a, b) in x.iter().zip(y) {
            let e = a - b;
            d += e * e;
            if d >= best_d {
                break;
            }
        }
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Exhaustive sequence detection over a candidate table.
pub fn mlsd_detect(y: &[f64], table: &SequenceOutputTable) -> Result<DetectionResult> {
    if y.len() != table.window() {
        return Err(Error::LengthMismatch {
            len: y.len(),
            multiple: table.window(),
        });
    }
    Ok(DetectionResult {
        symbols: table.symbols_of(mlsd_index(y, table)),
    })
}

/// MLSD over one block of `L` samples split into `L / K` windows.
///
/// The first window starts from an empty capacitor. Each later window uses
/// a table started from the noiseless voltage that the previous window's
/// decision implies.
pub fn detect_block(
    y: &[f64],
    cfg: &LinkConfig,
    params: &CircuitParams,
    c: &Constellation,
    cache: &TableCache,
) -> Result<DetectionResult> {
    let (l, k) = (cfg.block_length, cfg.sequence_window);
    if k == 0 || l % k != 0 {
        return Err(Error::InvalidConfig(format!(
            "sequence window K = {k} must divide block length L = {l}"
        )));
    }
    if y.len() != l {
        return Err(Error::LengthMismatch {
            len: y.len(),
            multiple: l,
        });
    }
    let mut symbols = Vec::with_capacity(l);
    let mut voltage = 0.0;
    for (w, window) in y.chunks_exact(k).enumerate() {
        let start = (w * k) as f64 * cfg.symbol_period;
        let req = TableRequest::new(cfg.symbol_period, k).starting_from(voltage, start);
        let table = cache.get(params, c, &req)?;
        let index = mlsd_index(window, &table);
        voltage = table.entry(index)[k - 1];
        symbols.extend(table.symbols_of(index));
    }
    Ok(DetectionResult { symbols })
}
