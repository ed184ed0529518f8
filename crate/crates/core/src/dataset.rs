//! Event datasets: rate encoding of intensities and the binary record
//! stream used to store encoded samples.
//!
//! Layout (little-endian): magic `SPKE`, u16 version, u16 channels,
//! u16 timesteps, u32 sample count; then per sample u16 label, u16 step
//! count and, per step, u16 address count followed by u8 addresses.

use rand::Rng;

use crate::error::{Error, Result};
use crate::neuron::MAX_NEURONS;
use crate::system::EventSample;

pub const DATASET_MAGIC: &[u8; 4] = b"SPKE";
pub const DATASET_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub channels: usize,
    pub timesteps: usize,
    pub samples: Vec<EventSample>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.channels > MAX_NEURONS {
            return Err(Error::Capacity(self.channels));
        }
        for s in &self.samples {
            s.validate(self.channels, self.timesteps)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let u16_of = |v: usize, what: &str| {
            u16::try_from(v).map_err(|_| Error::OutOfRange(format!("{what} {v} does not fit 16 bits")))
        };
        let mut out = Vec::new();
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&u16_of(self.channels, "channel count")?.to_le_bytes());
        out.extend_from_slice(&u16_of(self.timesteps, "timestep count")?.to_le_bytes());
        let n = u32::try_from(self.samples.len()).map_err(|_| Error::OutOfRange("too many samples".into()))?;
        out.extend_from_slice(&n.to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.label.to_le_bytes());
            out.extend_from_slice(&u16_of(s.steps.len(), "step count")?.to_le_bytes());
            for step in &s.steps {
                out.extend_from_slice(&u16_of(step.len(), "spike count")?.to_le_bytes());
                out.extend_from_slice(step);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != DATASET_MAGIC {
            return Err(Error::Parse("not an event dataset (bad magic)".into()));
        }
        let version = r.u16()?;
        if version != DATASET_VERSION {
            return Err(Error::Parse(format!("unsupported dataset version {version}")));
        }
        let channels = r.u16()? as usize;
        let timesteps = r.u16()? as usize;
        let count = r.u32()? as usize;
        let mut samples = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let label = r.u16()?;
            let nsteps = r.u16()? as usize;
            let mut steps = Vec::with_capacity(nsteps);
            for _ in 0..nsteps {
                let k = r.u16()? as usize;
                steps.push(r.take(k)?.to_vec());
            }
            samples.push(EventSample { steps, label });
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let d = Self { channels, timesteps, samples };
        d.validate().map_err(|e| Error::Parse(format!("invalid dataset: {e}")))?;
        Ok(d)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Parse(format!("dataset truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn check_intensities(intensities: &[f64]) -> Result<()> {
    if intensities.len() > MAX_NEURONS {
        return Err(Error::Capacity(intensities.len()));
    }
    match intensities.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
        Some((index, &value)) => Err(Error::OutOfRange(format!("intensity {value} at channel {index} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Evenly spread rate code: channel `c` spikes at step `t` iff
/// `floor((t+1) p) > floor(t p)`.
pub fn rate_encode(intensities: &[f64], timesteps: usize) -> Result<Vec<Vec<u8>>> {
    check_intensities(intensities)?;
    Ok((0..timesteps)
        .map(|t| {
            intensities
                .iter()
                .enumerate()
                .filter(|(_, &p)| ((t + 1) as f64 * p).floor() > (t as f64 * p).floor())
                .map(|(c, _)| c as u8)
                .collect()
        })
        .collect())
}

/// Independent Bernoulli draw per channel and step.
pub fn bernoulli_encode<R: Rng>(intensities: &[f64], timesteps: usize, rng: &mut R) -> Result<Vec<Vec<u8>>> {
    check_intensities(intensities)?;
    Ok((0..timesteps)
        .map(|_| {
            intensities
                .iter()
                .enumerate()
                .filter(|(_, &p)| rng.gen::<f64>() < p)
                .map(|(c, _)| c as u8)
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn count(steps: &[Vec<u8>]) -> usize {
        steps.iter().map(Vec::len).sum()
    }

    #[test]
    fn rate_code_examples() {
        assert_eq!(count(&rate_encode(&[1.0], 10).unwrap()), 10);
        assert_eq!(count(&rate_encode(&[0.0], 10).unwrap()), 0);
        let half = rate_encode(&[0.5], 10).unwrap();
        let at: Vec<usize> = (0..10).filter(|&t| !half[t].is_empty()).collect();
        // floor((t+1)/2) > floor(t/2) exactly for odd t
        assert_eq!(at, vec![1, 3, 5, 7, 9]);
    }

    #[test]
    fn rate_code_rejects_bad_input() {
        assert!(rate_encode(&[1.5], 4).is_err());
        assert!(matches!(rate_encode(&vec![0.1; 257], 4), Err(Error::Capacity(257))));
    }

    #[test]
    fn bernoulli_is_seeded() {
        let p = [0.3, 0.9, 0.0, 1.0];
        let a = bernoulli_encode(&p, 50, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = bernoulli_encode(&p, 50, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| !s.contains(&2) && s.contains(&3)));
    }

    #[test]
    fn dataset_round_trip() {
        let d = Dataset {
            channels: 5,
            timesteps: 3,
            samples: vec![
                EventSample { steps: vec![vec![0, 4], vec![], vec![2]], label: 1 },
                EventSample { steps: vec![], label: 0 },
            ],
        };
        let bytes = d.to_bytes().unwrap();
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bad), Err(Error::Parse(_))));
    }
}
