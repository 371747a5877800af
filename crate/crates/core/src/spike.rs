//! Binary spike rasters, Poisson rate encoding and raster file formats.
//!
//! # Raster binary layout
//!
//! All integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic  b"SPKR"
//! 4       2     format version (1)
//! 6       2     reserved, zero
//! 8       4     neurons (rows)
//! 12      4     steps (columns)
//! 16      n*t   one byte per cell, 0 or 1, row-major (neuron, step)
//! ```
//!
//! The CSV form has one line per neuron with `steps` comma-separated 0/1
//! values and no header.

use std::io::{BufRead, Read, Write};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RASTER_MAGIC: &[u8; 4] = b"SPKR";
const RASTER_VERSION: u16 = 1;

/// A binary spike raster, `neurons × steps`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    data: Array2<u8>,
}

impl SpikeTrain {
    pub fn zeros(neurons: usize, steps: usize) -> Self {
        Self {
            data: Array2::zeros((neurons, steps)),
        }
    }

    pub fn from_array(data: Array2<u8>) -> Result<Self> {
        if data.iter().any(|&x| x > 1) {
            return Err(Error::invalid("spike raster entries must be 0 or 1"));
        }
        Ok(Self { data })
    }

    /// Builds a raster from emitted voltages: any nonzero entry is a spike.
    pub fn from_voltages(voltages: ArrayView2<f64>) -> Self {
        Self {
            data: voltages.mapv(|x| (x != 0.0) as u8),
        }
    }

    pub fn neurons(&self) -> usize {
        self.data.nrows()
    }

    pub fn steps(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, u8> {
        self.data.view()
    }

    pub fn column(&self, step: usize) -> ArrayView1<'_, u8> {
        self.data.column(step)
    }

    pub fn get(&self, neuron: usize, step: usize) -> bool {
        self.data[[neuron, step]] != 0
    }

    pub fn spike_count(&self) -> usize {
        self.data.iter().map(|&x| x as usize).sum()
    }

    pub fn into_array(self) -> Array2<u8> {
        self.data
    }

    /// Concatenates rasters along the time axis.
    pub fn concat(trains: &[SpikeTrain]) -> Result<Self> {
        let views: Vec<_> = trains.iter().map(|t| t.data.view()).collect();
        let data = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::invalid(format!("cannot concatenate rasters: {e}")))?;
        Ok(Self { data })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(RASTER_MAGIC)?;
        w.write_all(&RASTER_VERSION.to_le_bytes())?;
        w.write_all(&0u16.to_le_bytes())?;
        w.write_all(&(self.neurons() as u32).to_le_bytes())?;
        w.write_all(&(self.steps() as u32).to_le_bytes())?;
        let bytes: Vec<u8> = self.data.iter().copied().collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        if &header[0..4] != RASTER_MAGIC {
            return Err(Error::format("spike raster", "bad magic"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != RASTER_VERSION {
            return Err(Error::format("spike raster", format!("unsupported version {version}")));
        }
        let neurons = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let steps = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut body = vec![0u8; neurons * steps];
        r.read_exact(&mut body)?;
        let data = Array2::from_shape_vec((neurons, steps), body)
            .map_err(|e| Error::format("spike raster", e.to_string()))?;
        Self::from_array(data).map_err(|e| Error::format("spike raster", e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.data.rows() {
            let line: Vec<&str> = row.iter().map(|&x| if x != 0 { "1" } else { "0" }).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut cells = Vec::new();
        let mut steps = None;
        let mut neurons = 0;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<u8> = line
                .split(',')
                .map(|c| match c.trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::format(
                        "spike raster csv",
                        format!("line {}: expected 0 or 1, got {other:?}", lineno + 1),
                    )),
                })
                .collect::<Result<_>>()?;
            match steps {
                None => steps = Some(row.len()),
                Some(s) if s != row.len() => {
                    return Err(Error::format(
                        "spike raster csv",
                        format!("line {}: {} columns, expected {s}", lineno + 1, row.len()),
                    ))
                }
                _ => {}
            }
            cells.extend(row);
            neurons += 1;
        }
        let data = Array2::from_shape_vec((neurons, steps.unwrap_or(0)), cells)
            .map_err(|e| Error::format("spike raster csv", e.to_string()))?;
        Ok(Self { data })
    }
}

/// Maps a normalized feature value to a per-step firing probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateScale {
    #[default]
    Identity,
    /// `p = gain * x`, clamped to [0, 1].
    Linear { gain: f64 },
}

impl RateScale {
    pub fn probability(&self, x: f64) -> f64 {
        let p = match *self {
            RateScale::Identity => x,
            RateScale::Linear { gain } => gain * x,
        };
        p.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Encoding window length in timesteps.
    pub window: usize,
    pub rate_scale: RateScale,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            window: 50,
            rate_scale: RateScale::Identity,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("encoder.window must be at least 1"));
        }
        if let RateScale::Linear { gain } = self.rate_scale {
            if !gain.is_finite() || gain < 0.0 {
                return Err(Error::invalid("encoder.rate_scale.gain must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Bernoulli-per-step Poisson encoding: neuron `d` fires at each step with
/// probability `rate_scale(features[d])`, independently.
pub fn encode_with_rng<R: Rng + ?Sized>(
    features: &[f64],
    cfg: &EncoderConfig,
    rng: &mut R,
) -> Result<SpikeTrain> {
    cfg.validate()?;
    if let Some(bad) = features.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::invalid(format!("feature value {bad} outside [0, 1]")));
    }
    let probs: Vec<f64> = features.iter().map(|&x| cfg.rate_scale.probability(x)).collect();
    let mut data = Array2::zeros((features.len(), cfg.window));
    for (mut row, &p) in data.rows_mut().into_iter().zip(&probs) {
        for cell in row.iter_mut() {
            *cell = (rng.gen::<f64>() < p) as u8;
        }
    }
    Ok(SpikeTrain { data })
}

/// Encodes with a fresh generator seeded from `cfg.seed`.
pub fn encode(features: &[f64], cfg: &EncoderConfig) -> Result<SpikeTrain> {
    encode_with_rng(features, cfg, &mut cfg.rng())
}

/// Mean spike count per neuron over the time axis.
pub fn rate_summary(train: &SpikeTrain) -> Result<Vec<f64>> {
    if train.steps() == 0 {
        return Err(Error::invalid("rate summary of an empty raster"));
    }
    let steps = train.steps() as f64;
    Ok(train
        .data
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&x| x as f64).sum::<f64>() / steps)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_features_give_empty_raster() {
        let t = encode(&[0.0; 16], &EncoderConfig::default()).unwrap();
        assert_eq!(t.spike_count(), 0);
        assert_eq!((t.neurons(), t.steps()), (16, 50));
    }

    #[test]
    fn same_seed_same_raster() {
        let cfg = EncoderConfig {
            seed: 42,
            ..Default::default()
        };
        let f: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
        assert_eq!(encode(&f, &cfg).unwrap(), encode(&f, &cfg).unwrap());
    }

    #[test]
    fn out_of_range_feature_rejected() {
        assert!(encode(&[0.5, 1.5], &EncoderConfig::default()).is_err());
        assert!(encode(&[-0.1], &EncoderConfig::default()).is_err());
        assert!(encode(&[f64::NAN], &EncoderConfig::default()).is_err());
    }

    #[test]
    fn linear_rate_scale_clamps() {
        let s = RateScale::Linear { gain: 4.0 };
        assert_eq!(s.probability(0.5), 1.0);
        assert_eq!(s.probability(0.1), 0.4);
    }

    #[test]
    fn rate_summary_cases() {
        let ones = SpikeTrain::from_array(Array2::ones((3, 7))).unwrap();
        assert_eq!(rate_summary(&ones).unwrap(), vec![1.0; 3]);

        let mut single = Array2::zeros((1, 50));
        single[[0, 17]] = 1;
        let single = SpikeTrain::from_array(single).unwrap();
        assert_eq!(rate_summary(&single).unwrap(), vec![0.02]);

        assert!(rate_summary(&SpikeTrain::zeros(2, 0)).is_err());
    }

    #[test]
    fn rate_summary_matches_recount() {
        let cfg = EncoderConfig {
            seed: 9,
            ..Default::default()
        };
        let f: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37) % 1.0).collect();
        let t = encode(&f, &cfg).unwrap();
        let summary = rate_summary(&t).unwrap();
        for n in 0..t.neurons() {
            let mut count = 0usize;
            for s in 0..t.steps() {
                if t.get(n, s) {
                    count += 1;
                }
            }
            assert_eq!(summary[n], count as f64 / t.steps() as f64);
        }
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let text = "0,1,0\n1,1\n";
        assert!(SpikeTrain::read_csv(text.as_bytes()).is_err());
        assert!(SpikeTrain::read_csv("0,2\n".as_bytes()).is_err());
    }

    #[test]
    fn binary_rejects_bad_magic() {
        let mut bytes = Vec::new();
        SpikeTrain::zeros(2, 2).write_binary(&mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(SpikeTrain::read_binary(bytes.as_slice()).is_err());
    }

    fn raster_strategy() -> impl Strategy<Value = SpikeTrain> {
        (1usize..12, 1usize..40).prop_flat_map(|(n, t)| {
            proptest::collection::vec(0u8..2, n * t).prop_map(move |cells| {
                SpikeTrain::from_array(Array2::from_shape_vec((n, t), cells).unwrap()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn raster_formats_round_trip(train in raster_strategy()) {
            let mut bin = Vec::new();
            train.write_binary(&mut bin).unwrap();
            prop_assert_eq!(bin.len(), 16 + train.neurons() * train.steps());
            prop_assert_eq!(&SpikeTrain::read_binary(bin.as_slice()).unwrap(), &train);

            let mut csv = Vec::new();
            train.write_csv(&mut csv).unwrap();
            prop_assert_eq!(&SpikeTrain::read_csv(csv.as_slice()).unwrap(), &train);
        }

        #[test]
        fn encode_alphabet_and_shape(
            f in proptest::collection::vec(0.0f64..=1.0, 1..30),
            window in 1usize..80,
            seed in any::<u64>(),
        ) {
            let cfg = EncoderConfig { window, seed, ..Default::default() };
            let t = encode(&f, &cfg).unwrap();
            prop_assert_eq!((t.neurons(), t.steps()), (f.len(), window));
            prop_assert!(t.view().iter().all(|&x| x <= 1));
        }
    }
}
