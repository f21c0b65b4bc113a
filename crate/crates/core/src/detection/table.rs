//! Noiseless end-of-symbol outputs for every candidate symbol sequence.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modem::{link_transient_options, Constellation};
use crate::rectifier::{CircuitParams, Propagator, SwitchLocalization, TransientOptions};

pub const DEFAULT_TABLE_BUDGET: usize = 65_536;

/// Initial voltages are rounded to whole microvolts before building or looking
/// up a table, so cached tables never depend on which request arrived first.
const MICROVOLTS_PER_VOLT: f64 = 1e6;

/// All `M^K` noiseless output vectors for one starting condition.
///
/// Sequences are indexed in base `M` with the first symbol most significant,
/// so index order is lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutputTable {
    order: usize,
    window: usize,
    symbol_period: f64,
    initial_voltage: f64,
    start_time: f64,
    outputs: Vec<f64>,
}

impl SequenceOutputTable {
    /// Wraps precomputed outputs, `window` values per candidate in
    /// lexicographic order.
    pub fn from_outputs(
        order: usize,
        window: usize,
        symbol_period: f64,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        if order == 0 || window == 0 {
            return Err(Error::InvalidConfig(
                "order and window must be at least 1".into(),
            ));
        }
        let expected = candidate_count(order, window).saturating_mul(window as u128);
        if outputs.len() as u128 != expected {
            return Err(Error::LengthMismatch {
                len: outputs.len(),
                multiple: window,
            });
        }
        if outputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("table outputs must be finite".into()));
        }
        Ok(Self {
            order,
            window,
            symbol_period,
            initial_voltage: 0.0,
            start_time: 0.0,
            outputs,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn symbol_period(&self) -> f64 {
        self.symbol_period
    }

    pub fn initial_voltage(&self) -> f64 {
        self.initial_voltage
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Number of candidate sequences.
    pub fn len(&self) -> usize {
        self.outputs.len() / self.window
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn entry(&self, index: usize) -> &[f64] {
        &self.outputs[index * self.window..(index + 1) * self.window]
    }

    pub fn entries(&self) -> impl Iterator<Item = &[f64]> {
        self.outputs.chunks_exact(self.window)
    }

    pub fn index_of(&self, symbols: &[usize]) -> usize {
        debug_assert_eq!(symbols.len(), self.window);
        symbols.iter().fold(0, |acc, &s| acc * self.order + s)
    }

    pub fn symbols_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.window];
        for slot in out.iter_mut().rev() {
            *slot = index % self.order;
            index /= self.order;
        }
        out
    }
}

/// Inputs of a table build beyond circuit and constellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRequest {
    pub symbol_period: f64,
    pub window: usize,
    pub initial_voltage: f64,
    pub start_time: f64,
    pub budget: usize,
    pub options: TransientOptions,
}

impl TableRequest {
    pub fn new(symbol_period: f64, window: usize) -> Self {
        Self {
            symbol_period,
            window,
            initial_voltage: 0.0,
            start_time: 0.0,
            budget: DEFAULT_TABLE_BUDGET,
            options: link_transient_options(),
        }
    }

    pub fn starting_from(mut self, initial_voltage: f64, start_time: f64) -> Self {
        self.initial_voltage = initial_voltage;
        self.start_time = start_time;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }
}

pub fn candidate_count(order: usize, window: usize) -> u128 {
    (order as u128)
        .checked_pow(window as u32)
        .unwrap_or(u128::MAX)
}

/// Builds the table from an empty capacitor at t = 0.
pub fn build_sequence_table(
    params: &CircuitParams,
    c: &Constellation,
    symbol_period: f64,
    window: usize,
    initial_voltage: f64,
) -> Result<SequenceOutputTable> {
    let req = TableRequest::new(symbol_period, window).starting_from(initial_voltage, 0.0);
    build_sequence_table_with(params, c, &req)
}

/// One transient simulation per candidate, with shared prefixes simulated
/// once: sequences are walked in lexicographic order and the propagator
/// state after each prefix is forked rather than recomputed.
pub fn build_sequence_table_with(
    params: &CircuitParams,
    c: &Constellation,
    req: &TableRequest,
) -> Result<SequenceOutputTable> {
    let m = c.order();
    let k = req.window;
    if k == 0 {
        return Err(Error::InvalidConfig(
            "sequence window must be at least 1".into(),
        ));
    }
    let candidates = candidate_count(m, k);
    if candidates > req.budget as u128 {
        return Err(Error::BudgetExceeded {
            candidates,
            budget: req.budget,
        });
    }
    if !(req.symbol_period.is_finite() && req.symbol_period > 0.0) {
        return Err(Error::InvalidParameter {
            name: "symbol_period",
            value: req.symbol_period,
            reason: "must be positive and finite",
        });
    }
    c.check_conducting(params)?;
    let opts = req.options.with_initial_voltage(req.initial_voltage);
    let root = Propagator::new(params, &opts, req.start_time)?;
    let amplitudes = c.amplitudes();
    let end_of = |j: usize| req.start_time + (j + 1) as f64 * req.symbol_period;

    let branch_len = m.pow(k as u32 - 1);
    let branch = |first: usize| {
        let mut prop = root.clone();
        let v0 = prop.advance(amplitudes[first], end_of(0));
        let mut out = Vec::with_capacity(branch_len * k);
        // stack[d] holds the state after d + 1 symbols of the current path
        let mut stack = vec![prop];
        let mut values = vec![v0; k];
        let mut digits = vec![0usize; k - 1];
        for idx in 0..branch_len {
            let mut rest = idx;
            let mut next = vec![0usize; k - 1];
            for slot in next.iter_mut().rev() {
                *slot = rest % m;
                rest /= m;
            }
            let shared = if idx == 0 {
                0
            } else {
                digits.iter().zip(&next).take_while(|(a, b)| a == b).count()
            };
            digits = next;
            stack.truncate(shared + 1);
            for d in shared..k - 1 {
                let mut p = stack[d].clone();
                values[d + 1] = p.advance(amplitudes[digits[d]], end_of(d + 1));
                stack.push(p);
            }
            out.extend_from_slice(&values);
        }
        out
    };
    // inside a pool worker the build stays serial so the worker never picks
    // up unrelated tasks while it owns a cache slot
    let branches: Vec<Vec<f64>> = if rayon::current_thread_index().is_some() {
        (0..m).map(branch).collect()
    } else {
        (0..m).into_par_iter().map(branch).collect()
    };

    Ok(SequenceOutputTable {
        order: m,
        window: k,
        symbol_period: req.symbol_period,
        initial_voltage: req.initial_voltage,
        start_time: req.start_time,
        outputs: branches.concat(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TableKey {
    params: [u64; 7],
    amplitudes: Vec<u64>,
    symbol_period: u64,
    window: usize,
    initial_microvolts: i64,
    start_time: u64,
    samples_per_period: usize,
    refined: bool,
}

type Built = Result<Arc<SequenceOutputTable>>;

#[derive(Debug, Default)]
enum SlotState {
    #[default]
    Empty,
    Building,
    Ready(Built),
}

#[derive(Debug, Default)]
struct Slot {
    state: Mutex<SlotState>,
    ready: Condvar,
}

impl Slot {
    fn lock(&self) -> MutexGuard<'_, SlotState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn get_or_build(&self, build: impl FnOnce() -> Built) -> Built {
        let mut state = self.lock();
        loop {
            match &*state {
                SlotState::Ready(r) => return r.clone(),
                SlotState::Empty => {
                    *state = SlotState::Building;
                    drop(state);
                    let reset = ResetOnUnwind(self);
                    let built = build();
                    std::mem::forget(reset);
                    *self.lock() = SlotState::Ready(built.clone());
                    self.ready.notify_all();
                    return built;
                }
                SlotState::Building if rayon::current_thread_index().is_some() => {
                    // pool workers keep running tasks, which may be the build itself
                    drop(state);
                    if rayon::yield_now() != Some(rayon::Yield::Executed) {
                        std::thread::yield_now();
                    }
                    state = self.lock();
                }
                SlotState::Building => {
                    state = self.ready.wait(state).unwrap_or_else(|e| e.into_inner());
                }
            }
        }
    }
}

struct ResetOnUnwind<'a>(&'a Slot);

impl Drop for ResetOnUnwind<'_> {
    fn drop(&mut self) {
        *self.0.lock() = SlotState::Empty;
        self.0.ready.notify_all();
    }
}

/// Memoizes candidate tables across detection calls and Monte Carlo workers.
///
/// Concurrent requests for the same key wait for a single build and then
/// share its result.
#[derive(Debug, Default)]
pub struct TableCache {
    slots: Mutex<HashMap<TableKey, Arc<Slot>>>,
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("table cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Table for `req` with its initial voltage rounded to 1 µV.
    pub fn get(
        &self,
        params: &CircuitParams,
        c: &Constellation,
        req: &TableRequest,
    ) -> Result<Arc<SequenceOutputTable>> {
        let micro = (req.initial_voltage * MICROVOLTS_PER_VOLT).round();
        let quantized = micro / MICROVOLTS_PER_VOLT;
        let key = TableKey {
            params: [
                params.capacitance.to_bits(),
                params.source_resistance.to_bits(),
                params.on_resistance.to_bits(),
                params.off_resistance.to_bits(),
                params.load_resistance.to_bits(),
                params.diode_threshold.to_bits(),
                params.carrier_frequency.to_bits(),
            ],
            amplitudes: c.amplitudes().iter().map(|a| a.to_bits()).collect(),
            symbol_period: req.symbol_period.to_bits(),
            window: req.window,
            initial_microvolts: micro as i64,
            start_time: req.start_time.to_bits(),
            samples_per_period: req.options.samples_per_period,
            refined: req.options.localization == SwitchLocalization::Bisection,
        };
        let slot = {
            let mut slots = self.slots.lock().expect("table cache poisoned");
            slots.entry(key).or_default().clone()
        };
        let quantized_req = TableRequest {
            initial_voltage: quantized,
            ..*req
        };
        slot.get_or_build(|| build_sequence_table_with(params, c, &quantized_req).map(Arc::new))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{sample_symbol_ends, transmit_block, LinkConfig};

    fn bask() -> Constellation {
        Constellation::new(vec![0.5, 1.0]).unwrap()
    }

    #[test]
    fn indexing_is_lexicographic() {
        let p = CircuitParams::default();
        let c = Constellation::new(vec![0.5, 0.7, 0.9, 1.1]).unwrap();
        let t = build_sequence_table(&p, &c, 2e-8, 3, 0.0).unwrap();
        assert_eq!(t.len(), 64);
        assert_eq!(t.index_of(&[0, 0, 0]), 0);
        assert_eq!(t.index_of(&[0, 0, 1]), 1);
        assert_eq!(t.index_of(&[1, 0, 0]), 16);
        for i in [0, 5, 37, 63] {
            assert_eq!(t.index_of(&t.symbols_of(i)), i);
        }
    }

    #[test]
    fn entries_match_direct_simulation() {
        let p = CircuitParams::default();
        let c = Constellation::new(vec![0.5, 0.7, 1.0, 1.3]).unwrap();
        let ts = 3e-8;
        let t = build_sequence_table(&p, &c, ts, 3, 0.0).unwrap();
        let cfg = LinkConfig::new(ts, 3, 3);
        for i in 0..t.len() {
            let amps: Vec<f64> = t.symbols_of(i).iter().map(|&s| c.amplitude(s)).collect();
            assert_eq!(
                t.entry(i),
                transmit_block(&amps, &cfg, &p).unwrap().as_slice()
            );
        }
    }

    #[test]
    fn single_symbol_window_is_the_base_case() {
        let p = CircuitParams::default();
        let ts = 5e-8;
        let t = build_sequence_table(&p, &bask(), ts, 1, 0.0).unwrap();
        for (i, &a) in bask().amplitudes().iter().enumerate() {
            assert_eq!(
                t.entry(i),
                sample_symbol_ends(&p, &[a], ts, 0.0, 0.0)
                    .unwrap()
                    .as_slice()
            );
        }
    }

    #[test]
    fn budget_is_enforced() {
        let p = CircuitParams::default();
        let req = TableRequest::new(1e-8, 7).with_budget(64);
        assert!(matches!(
            build_sequence_table_with(&p, &bask(), &req),
            Err(Error::BudgetExceeded {
                candidates: 128,
                budget: 64
            })
        ));
    }

    #[test]
    fn rebuild_is_bit_identical_and_cache_reuses() {
        let p = CircuitParams::default();
        let a = build_sequence_table(&p, &bask(), 4e-8, 4, 0.1).unwrap();
        let b = build_sequence_table(&p, &bask(), 4e-8, 4, 0.1).unwrap();
        assert_eq!(a, b);

        let cache = TableCache::new();
        let req = TableRequest::new(4e-8, 4).starting_from(0.100_000_2, 0.0);
        let first = cache.get(&p, &bask(), &req).unwrap();
        let again = cache
            .get(&p, &bask(), &req.starting_from(0.099_999_9, 0.0))
            .unwrap();
        assert!(Arc::ptr_eq(&first, &again));
        assert_eq!(cache.len(), 1);
        assert_eq!(first.initial_voltage(), 0.1);
    }
}
