//! Biased M-ASK over the rectifier: constellations, noise calibration,
//! end-of-symbol sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rectifier::{CircuitParams, Propagator, TransientOptions};

/// Ordered amplitude set of a biased M-ASK scheme with Gray bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    amplitudes: Vec<f64>,
    bits_per_symbol: usize,
}

impl Constellation {
    /// Amplitudes must be positive and strictly increasing; the count must be
    /// a power of two (a single amplitude is accepted).
    pub fn new(amplitudes: Vec<f64>) -> Result<Self> {
        let m = amplitudes.len();
        if m == 0 || !m.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "constellation order {m} is not a power of two"
            )));
        }
        if amplitudes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidConfig(
                "constellation amplitudes must be positive and finite".into(),
            ));
        }
        if amplitudes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "constellation amplitudes must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            bits_per_symbol: m.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn order(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, index: usize) -> f64 {
        self.amplitudes[index]
    }

    pub fn min_amplitude(&self) -> f64 {
        self.amplitudes[0]
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// `BASK`, `QASK`, `8-ASK`, ...
    pub fn name(&self) -> String {
        match self.order() {
            2 => "BASK".to_string(),
            4 => "QASK".to_string(),
            m => format!("{m}-ASK"),
        }
    }

    /// Gray label of amplitude index `index`.
    pub fn label(&self, index: usize) -> usize {
        index ^ (index >> 1)
    }

    pub fn index_of_label(&self, label: usize) -> usize {
        let mut index = label;
        let mut shift = label >> 1;
        while shift != 0 {
            index ^= shift;
            shift >>= 1;
        }
        index
    }

    /// Appends the label bits of `index`, most significant first.
    pub fn push_bits(&self, index: usize, out: &mut Vec<u8>) {
        let label = self.label(index);
        for b in (0..self.bits_per_symbol).rev() {
            out.push(((label >> b) & 1) as u8);
        }
    }

    /// Every amplitude must exceed the diode threshold.
    pub fn check_conducting(&self, params: &CircuitParams) -> Result<()> {
        match self.amplitudes.first() {
            Some(&a) if a > params.diode_threshold => Ok(()),
            Some(&a) => Err(Error::NotConducting {
                amplitude: a,
                threshold: params.diode_threshold,
            }),
            None => unreachable!("constellation is never empty"),
        }
    }
}

/// `(1 / 2M) Σ A_m²`: each symbol carries `A_m² / 2`.
pub fn average_symbol_power(c: &Constellation) -> f64 {
    let m = c.order() as f64;
    c.amplitudes().iter().map(|a| a * a).sum::<f64>() / (2.0 * m)
}

/// Equally spaced amplitudes `A_min + m d`, with `d > 0` chosen so the
/// average symbol power equals `target_avg_power`.
pub fn build_constellation(
    order: usize,
    min_amplitude: f64,
    target_avg_power: f64,
) -> Result<Constellation> {
    if order < 2 || !order.is_power_of_two() {
        return Err(Error::InvalidConfig(format!(
            "constellation order {order} must be a power of two ≥ 2"
        )));
    }
    if !(min_amplitude.is_finite() && min_amplitude > 0.0) {
        return Err(Error::InvalidParameter {
            name: "min_amplitude",
            value: min_amplitude,
            reason: "must be positive and finite",
        });
    }
    let infeasible = Error::Infeasible {
        order,
        min_amplitude,
        target: target_avg_power,
    };
    // S2 d² + 2 A S1 d + M A² - 2 M P = 0
    let m = order as f64;
    let s1 = m * (m - 1.0) / 2.0;
    let s2 = (m - 1.0) * m * (2.0 * m - 1.0) / 6.0;
    let b = 2.0 * min_amplitude * s1;
    let c = 2.0 * m * target_avg_power - m * min_amplitude * min_amplitude;
    if !(c.is_finite() && c > 0.0) {
        return Err(infeasible);
    }
    // positive root written without cancellation
    let d = 2.0 * c / (b + (b * b + 4.0 * s2 * c).sqrt());
    if d.is_nan() || d <= 0.0 {
        return Err(infeasible);
    }
    let amplitudes = (0..order).map(|k| min_amplitude + k as f64 * d).collect();
    Constellation::new(amplitudes)
}

/// Noise standard deviation for a given Eb/N0 (linear):
/// `sqrt(P_av / (2 · bits_per_symbol · Eb/N0))`.
pub fn noise_sigma(avg_power: f64, eb_n0: f64, bits_per_symbol: usize) -> f64 {
    (avg_power / (2.0 * bits_per_symbol as f64 * eb_n0)).sqrt()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Maps consecutive bit groups to amplitude indices through the Gray labels.
pub fn bits_to_symbols(bits: &[u8], c: &Constellation) -> Result<Vec<usize>> {
    let k = c.bits_per_symbol();
    if k == 0 {
        return if bits.is_empty() {
            Ok(Vec::new())
        } else {
            Err(Error::LengthMismatch {
                len: bits.len(),
                multiple: 0,
            })
        };
    }
    if !bits.len().is_multiple_of(k) {
        return Err(Error::LengthMismatch {
            len: bits.len(),
            multiple: k,
        });
    }
    Ok(bits
        .chunks_exact(k)
        .map(|group| {
            let label = group
                .iter()
                .fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1));
            c.index_of_label(label)
        })
        .collect())
}

pub fn symbols_to_bits(symbols: &[usize], c: &Constellation) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * c.bits_per_symbol());
    for &s in symbols {
        c.push_bits(s, &mut out);
    }
    out
}

/// Bits to drive amplitudes.
pub fn modulate(bits: &[u8], c: &Constellation) -> Result<Vec<f64>> {
    Ok(bits_to_symbols(bits, c)?
        .into_iter()
        .map(|i| c.amplitude(i))
        .collect())
}

/// Symbol timing and detection settings of the link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub symbol_period: f64,
    /// Symbols between capacitor resets (finite memory L).
    pub block_length: usize,
    /// MLSD window K; must divide `block_length`.
    pub sequence_window: usize,
    /// Linear Eb/N0.
    pub eb_n0: f64,
    pub rng_seed: u64,
}

impl LinkConfig {
    pub fn new(symbol_period: f64, block_length: usize, sequence_window: usize) -> Self {
        Self {
            symbol_period,
            block_length,
            sequence_window,
            eb_n0: 1.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_period.is_finite() && self.symbol_period > 0.0) {
            return Err(Error::InvalidParameter {
                name: "symbol_period",
                value: self.symbol_period,
                reason: "must be positive and finite",
            });
        }
        if self.sequence_window == 0 || self.sequence_window > self.block_length {
            return Err(Error::InvalidConfig(format!(
                "sequence window K = {} must satisfy 1 ≤ K ≤ L = {}",
                self.sequence_window, self.block_length
            )));
        }
        if self.eb_n0.is_nan() || self.eb_n0 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "eb_n0",
                value: self.eb_n0,
                reason: "must be positive",
            });
        }
        Ok(())
    }
}

/// Transient settings used for every link-level simulation: the default
/// sample grid with bisected switch instants.
pub fn link_transient_options() -> TransientOptions {
    TransientOptions::refined()
}

/// Capacitor voltage at the end of each symbol when `amplitudes` are sent
/// back to back from `initial_voltage` starting at `start_time`.
pub fn sample_symbol_ends(
    params: &CircuitParams,
    amplitudes: &[f64],
    symbol_period: f64,
    initial_voltage: f64,
    start_time: f64,
) -> Result<Vec<f64>> {
    let opts = link_transient_options().with_initial_voltage(initial_voltage);
    let mut prop = Propagator::new(params, &opts, start_time)?;
    Ok(amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| prop.advance(a, start_time + (i + 1) as f64 * symbol_period))
        .collect())
}

/// Noiseless samples `x_i` of one block sent from an empty capacitor.
///
/// Equivalent to running the transient analysis over a per-symbol drive and
/// reading `V_C((i + 1) Ts)` from the active segment.
pub fn transmit_block(
    amplitudes: &[f64],
    cfg: &LinkConfig,
    params: &CircuitParams,
) -> Result<Vec<f64>> {
    if amplitudes.len() > cfg.block_length {
        return Err(Error::BlockTooLong {
            len: amplitudes.len(),
            block_length: cfg.block_length,
        });
    }
    if !(cfg.symbol_period.is_finite() && cfg.symbol_period > 0.0) {
        return Err(Error::InvalidParameter {
            name: "symbol_period",
            value: cfg.symbol_period,
            reason: "must be positive and finite",
        });
    }
    if let Some(&a) = amplitudes
        .iter()
        .find(|&&a| a.is_nan() || a <= params.diode_threshold)
    {
        return Err(Error::NotConducting {
            amplitude: a,
            threshold: params.diode_threshold,
        });
    }
    sample_symbol_ends(params, amplitudes, cfg.symbol_period, 0.0, 0.0)
}

/// `y_i = x_i + n_i` with i.i.d. N(0, σ²) noise from a seeded stream.
pub fn add_noise(x: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    x.iter().map(|&xi| xi + normal.sample(&mut rng)).collect()
}

/// Noiseless and noisy end-of-symbol samples of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSymbols {
    pub noiseless: Vec<f64>,
    pub noisy: Vec<f64>,
    pub sigma: f64,
}

impl SampledSymbols {
    pub fn new(noiseless: Vec<f64>, sigma: f64, seed: u64) -> Self {
        let noisy = add_noise(&noiseless, sigma, seed);
        Self {
            noiseless,
            noisy,
            sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bask() -> Constellation {
        Constellation::new(vec![0.5, 1.0]).unwrap()
    }

    #[test]
    fn average_power_examples() {
        assert_eq!(average_symbol_power(&bask()), 5.0 / 16.0);
        let single = Constellation::new(vec![1.0]).unwrap();
        assert_eq!(average_symbol_power(&single), 0.5);
    }

    #[test]
    fn spacing_matches_closed_form() {
        let q = build_constellation(4, 0.5, 5.0 / 16.0).unwrap();
        let d = (30f64.sqrt() - 3.0) / 14.0;
        assert!((q.amplitudes()[1] - q.amplitudes()[0] - d).abs() < 1e-12);
        assert!((average_symbol_power(&q) - 5.0 / 16.0).abs() < 1e-12);

        let b = build_constellation(2, 0.5, 5.0 / 16.0).unwrap();
        assert_eq!(b.amplitudes(), &[0.5, 1.0]);
    }

    #[test]
    fn zero_spacing_is_infeasible() {
        assert!(matches!(
            build_constellation(2, 1.0, 0.5),
            Err(Error::Infeasible { .. })
        ));
        assert!(build_constellation(2, 1.0, 0.4).is_err());
        assert!(build_constellation(3, 0.5, 1.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        let p = 5.0 / 16.0;
        assert_relative_eq!(
            noise_sigma(p, 1.0, 1),
            (5.0f64 / 32.0).sqrt(),
            max_relative = 1e-15
        );
        assert_relative_eq!(noise_sigma(p, 1.0, 1), 0.395_28, epsilon = 1e-5);
        assert_relative_eq!(noise_sigma(p, 1.0, 2), 0.279_51, epsilon = 1e-5);
        assert!(noise_sigma(p, 1e300, 1) < 1e-150);
    }

    #[test]
    fn modulation_examples() {
        assert_eq!(modulate(&[0, 1, 1], &bask()).unwrap(), vec![0.5, 1.0, 1.0]);
        let q = build_constellation(4, 0.5, 5.0 / 16.0).unwrap();
        assert_eq!(modulate(&[0, 0], &q).unwrap(), vec![0.5]);
        assert!(modulate(&[], &q).unwrap().is_empty());
        assert!(matches!(
            modulate(&[0, 1, 1], &q),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn gray_labels_roundtrip_and_differ_by_one_bit() {
        let c = Constellation::new((1..=16).map(f64::from).collect()).unwrap();
        for k in 0..16 {
            assert_eq!(c.index_of_label(c.label(k)), k);
        }
        for k in 0..15 {
            assert_eq!((c.label(k) ^ c.label(k + 1)).count_ones(), 1);
        }
        let syms: Vec<usize> = (0..16).collect();
        assert_eq!(
            bits_to_symbols(&symbols_to_bits(&syms, &c), &c).unwrap(),
            syms
        );
    }

    #[test]
    fn noise_is_seeded() {
        let x = vec![0.1, 0.2, 0.3];
        assert_eq!(add_noise(&x, 0.0, 7), x);
        assert_eq!(add_noise(&x, 0.3, 7), add_noise(&x, 0.3, 7));
        assert_ne!(add_noise(&x, 0.3, 7), add_noise(&x, 0.3, 8));
    }

    #[test]
    fn noise_sample_std_at_one_million_draws() {
        let x = vec![0.0; 1_000_000];
        let y = add_noise(&x, 0.1, 2024);
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        assert!((0.0995..=0.1005).contains(&sd), "sample std {sd}");
    }

    #[test]
    fn transmit_block_preconditions() {
        let p = CircuitParams::default();
        let cfg = LinkConfig::new(1e-7, 2, 1);
        assert!(matches!(
            transmit_block(&[1.0, 1.0, 1.0], &cfg, &p),
            Err(Error::BlockTooLong { .. })
        ));
        assert!(matches!(
            transmit_block(&[0.2], &cfg, &p),
            Err(Error::NotConducting { .. })
        ));
        assert!(transmit_block(&[], &cfg, &p).unwrap().is_empty());
    }
}
