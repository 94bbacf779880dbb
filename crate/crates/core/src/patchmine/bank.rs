use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::RankedDetector;
use crate::error::{Error, Result};
use crate::imagecore::CELL_DESCRIPTOR_LEN;

const MAGIC: &[u8; 8] = b"SHLFBANK";
const VERSION: u32 = 1;

/// Linear patch detector: `score = weights . descriptor + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchDetector {
    pub weights: Vec<f32>,
    pub bias: f32,
    pub class_id: usize,
    /// Window size in cells, (w, h).
    pub window: (usize, usize),
    pub fire_threshold: f32,
}

impl PatchDetector {
    pub fn score(&self, descriptor: &[f32]) -> f32 {
        crate::linalg::dot(&self.weights, descriptor) + self.bias
    }
}

/// Ranked detectors per class, best first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectorBank {
    slots: Vec<Vec<PatchDetector>>,
}

/// The first `limit` detectors of a ranked list.
pub fn select_top(ranked: Vec<RankedDetector>, limit: usize) -> Vec<PatchDetector> {
    if ranked.is_empty() {
        log::warn!("no detectors survived mining for this class");
    }
    ranked.into_iter().take(limit).map(|r| r.detector).collect()
}

impl DetectorBank {
    pub fn new(slots: Vec<Vec<PatchDetector>>) -> Result<Self> {
        let mut window = None;
        for (c, slot) in slots.iter().enumerate() {
            for d in slot {
                if d.class_id != c {
                    return Err(Error::param(
                        "class_id",
                        format!("detector for class {} stored in slot {c}", d.class_id),
                    ));
                }
                if d.weights.len() != d.window.0 * d.window.1 * CELL_DESCRIPTOR_LEN {
                    return Err(Error::param("weights", "length does not match the window"));
                }
                if !d.bias.is_finite() || d.weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::param("weights", "detector has non-finite values"));
                }
                match window {
                    None => window = Some(d.window),
                    Some(w) if w != d.window => {
                        return Err(Error::param("window", "detectors must share one window size"))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { slots })
    }

    pub fn num_classes(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, class: usize) -> &[PatchDetector] {
        &self.slots[class]
    }

    pub fn slots(&self) -> &[Vec<PatchDetector>] {
        &self.slots
    }

    /// All detectors, class by class.
    pub fn detectors(&self) -> impl Iterator<Item = &PatchDetector> {
        self.slots.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shared window size, if any detector exists.
    pub fn window(&self) -> Option<(usize, usize)> {
        self.detectors().next().map(|d| d.window)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.len() * 4 * (6 + 36 * 36));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_u32(&mut out, self.slots.len());
        for slot in &self.slots {
            put_u32(&mut out, slot.len());
        }
        for d in self.detectors() {
            put_u32(&mut out, d.class_id);
            put_u32(&mut out, d.window.0);
            put_u32(&mut out, d.window.1);
            out.extend_from_slice(&d.bias.to_le_bytes());
            out.extend_from_slice(&d.fire_threshold.to_le_bytes());
            for w in &d.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a detector bank".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION as usize {
            return Err(Error::Format(format!("unsupported bank version {version}")));
        }
        let classes = get_u32(&mut r)?;
        let counts: Vec<usize> = (0..classes).map(|_| get_u32(&mut r)).collect::<Result<_>>()?;
        let mut slots = Vec::with_capacity(classes);
        for count in counts {
            let mut slot = Vec::with_capacity(count.min(1 << 16));
            for _ in 0..count {
                let class_id = get_u32(&mut r)?;
                let window = (get_u32(&mut r)?, get_u32(&mut r)?);
                let bias = get_f32(&mut r)?;
                let fire_threshold = get_f32(&mut r)?;
                let dim = window
                    .0
                    .checked_mul(window.1)
                    .and_then(|v| v.checked_mul(CELL_DESCRIPTOR_LEN))
                    .filter(|&v| v * 4 <= r.len())
                    .ok_or_else(|| Error::Format("truncated detector".into()))?;
                let weights = (0..dim).map(|_| get_f32(&mut r)).collect::<Result<_>>()?;
                slot.push(PatchDetector {
                    weights,
                    bias,
                    class_id,
                    window,
                    fire_threshold,
                });
            }
            slots.push(slot);
        }
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after detector bank".into()));
        }
        Self::new(slots).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.to_bytes()))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized bank, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("count fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("unexpected end of data".into()))
}

pub(crate) fn get_u32(r: &mut &[u8]) -> Result<usize> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

pub(crate) fn get_f32(r: &mut &[u8]) -> Result<f32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(f32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn detector(class_id: usize, rng: &mut ChaCha8Rng) -> PatchDetector {
        PatchDetector {
            weights: (0..2 * 2 * CELL_DESCRIPTOR_LEN).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: rng.random_range(-2.0..2.0),
            class_id,
            window: (2, 2),
            fire_threshold: -1.5,
        }
    }

    fn ranked(n: usize) -> Vec<RankedDetector> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (0..n)
            .map(|i| RankedDetector {
                detector: detector(0, &mut rng),
                score: -(i as f64),
            })
            .collect()
    }

    #[test]
    fn select_top_limits() {
        assert_eq!(select_top(ranked(500), 210).len(), 210);
        assert_eq!(select_top(ranked(50), 210).len(), 50);
        assert!(select_top(Vec::new(), 210).is_empty());
        let r = ranked(5);
        let first = r[0].detector.clone();
        assert_eq!(select_top(r, 2)[0], first);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let slots = vec![
            (0..3).map(|_| detector(0, &mut rng)).collect(),
            Vec::new(),
            (0..2).map(|_| detector(2, &mut rng)).collect(),
        ];
        let bank = DetectorBank::new(slots).unwrap();
        let bytes = bank.to_bytes();
        let back = DetectorBank::from_bytes(&bytes).unwrap();
        assert_eq!(back, bank);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.content_hash(), bank.content_hash());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        bank.save(&path).unwrap();
        assert_eq!(DetectorBank::load(&path).unwrap(), bank);
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bank = DetectorBank::new(vec![vec![detector(0, &mut rng)]]).unwrap();
        let bytes = bank.to_bytes();
        assert!(DetectorBank::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(DetectorBank::from_bytes(b"nonsense").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(DetectorBank::from_bytes(&extra).is_err());
    }

    #[test]
    fn slot_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(DetectorBank::new(vec![vec![detector(1, &mut rng)]]).is_err());
    }
}
